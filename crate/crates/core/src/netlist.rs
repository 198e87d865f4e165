//! Line-oriented circuit description format.
//!
//! ```text
//! # comment                        * also a comment
//! R<name> <n+> <n-> <ohms>
//! L<name> <n+> <n-> <henries> [ic=<amps>]
//! C<name> <n+> <n-> <farads>  [ic=<volts>]
//! V<name> <n+> <n-> DC <volts>
//! V<name> <n+> <n-> SIN mag=<v> freq=<hz> phase=<rad>
//! S<name> <n+> <n-> [driver=<id>] [polarity=direct|complement] [initial=open|closed]
//! D<name> <n+> <n-> [vf=<volts>] [initial=on|off]
//! .title <free text>
//! .driver <id> SQUARE freq=<hz> duty=<d>
//! .driver <id> PWMSINESAW carrier=<hz> mag=<m> mfreq=<hz> mphase=<rad>
//! .event <switch-name> open|close at=<seconds>
//! .tran h=<seconds> tstop=<seconds> [tstart=<seconds>]
//! .end
//! ```
//!
//! Keywords and parameter names are case-insensitive. Node `0` is ground.
//! Parsing only checks structure; [`validate`] checks value ranges,
//! references and connectivity and produces a [`ValidatedCircuit`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::circuit::{Status, ValidatedCircuit};

pub const GROUND: &str = "0";

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitDescription {
    pub title: String,
    /// Every node referenced by an element, ground included.
    pub nodes: BTreeSet<String>,
    pub elements: Vec<ElementDecl>,
    pub drivers: Vec<DriverDecl>,
    pub events: Vec<TimedEventDecl>,
    pub tran: TranDirective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementDecl {
    pub name: String,
    pub kind: ElementKind,
    pub node_pos: String,
    pub node_neg: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor {
        ohms: f64,
    },
    Inductor {
        henries: f64,
        ic: f64,
    },
    Capacitor {
        farads: f64,
        ic: f64,
    },
    DcSource {
        volts: f64,
    },
    /// `magnitude * sin(2*pi*frequency*t + phase)`
    SinSource {
        magnitude: f64,
        frequency: f64,
        phase: f64,
    },
    Switch {
        driver: Option<String>,
        polarity: Polarity,
        initial: Status,
    },
    Diode {
        forward_drop: f64,
        initial: Status,
    },
}

/// How a driven switch follows its gate: `Direct` conducts while the gate is
/// high, `Complement` while it is low.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    #[default]
    Direct,
    Complement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverDecl {
    pub id: String,
    pub kind: DriverKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriverKind {
    /// High on `[k/f, (k + duty)/f)`.
    Square { frequency: f64, duty: f64 },
    /// High while `magnitude * sin(2*pi*mod_frequency*t + mod_phase)` exceeds a
    /// sawtooth rising from -1 to 1 at `carrier` Hz.
    PwmSineSaw {
        carrier: f64,
        magnitude: f64,
        mod_frequency: f64,
        mod_phase: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventAction {
    Open,
    Close,
}

impl EventAction {
    pub fn status(self) -> Status {
        match self {
            EventAction::Open => Status::Blocking,
            EventAction::Close => Status::Conducting,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedEventDecl {
    pub switch: String,
    pub action: EventAction,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranDirective {
    pub h: f64,
    pub tstop: f64,
    pub tstart: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate name '{name}'")]
    Duplicate { line: usize, name: String },
    #[error("line {line}: unknown directive '{directive}'")]
    UnknownDirective { line: usize, directive: String },
    #[error("line {line}: malformed number '{token}'")]
    MalformedNumber { line: usize, token: String },
    #[error("line {line}: missing {what}")]
    Missing { line: usize, what: &'static str },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::Syntax { line, .. }
            | ParseError::Duplicate { line, .. }
            | ParseError::UnknownDirective { line, .. }
            | ParseError::MalformedNumber { line, .. }
            | ParseError::Missing { line, .. } => *line,
        }
    }
}

/// One violated invariant, naming the element, driver or event at fault.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid circuit: {}", join_issues(.0))]
pub struct ValidationError(pub Vec<ValidationIssue>);

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetlistError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// Parse and validate in one go.
pub fn load(text: &str) -> Result<ValidatedCircuit, NetlistError> {
    let desc = parse_netlist(text)?;
    Ok(validate(&desc)?)
}

pub fn parse_netlist(text: &str) -> Result<CircuitDescription, ParseError> {
    let mut title = String::new();
    let mut elements: Vec<ElementDecl> = Vec::new();
    let mut drivers: Vec<DriverDecl> = Vec::new();
    let mut events = Vec::new();
    let mut tran = None;
    let mut element_names = HashSet::new();
    let mut driver_ids = HashSet::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let head = tokens[0];

        if let Some(directive) = head.strip_prefix('.') {
            match directive.to_ascii_lowercase().as_str() {
                "end" => break,
                "title" => title = trimmed[head.len()..].trim().to_string(),
                "tran" => {
                    if tran.is_some() {
                        return Err(ParseError::Duplicate {
                            line,
                            name: ".tran".into(),
                        });
                    }
                    tran = Some(parse_tran(line, &tokens[1..])?);
                }
                "driver" => {
                    let decl = parse_driver(line, &tokens[1..])?;
                    if !driver_ids.insert(decl.id.to_ascii_lowercase()) {
                        return Err(ParseError::Duplicate {
                            line,
                            name: decl.id,
                        });
                    }
                    drivers.push(decl);
                }
                "event" => events.push(parse_event(line, &tokens[1..])?),
                _ => {
                    return Err(ParseError::UnknownDirective {
                        line,
                        directive: head.to_string(),
                    })
                }
            }
            continue;
        }

        let decl = parse_element(line, &tokens)?;
        if !element_names.insert(decl.name.to_ascii_lowercase()) {
            return Err(ParseError::Duplicate {
                line,
                name: decl.name,
            });
        }
        elements.push(decl);
    }

    let tran = tran.ok_or(ParseError::Missing {
        line: last_line,
        what: ".tran directive",
    })?;
    let nodes = elements
        .iter()
        .flat_map(|e| [e.node_pos.clone(), e.node_neg.clone()])
        .collect();

    Ok(CircuitDescription {
        title,
        nodes,
        elements,
        drivers,
        events,
        tran,
    })
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_number(line: usize, token: &str) -> Result<f64, ParseError> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError::MalformedNumber {
            line,
            token: token.to_string(),
        }),
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// `key=value` parameters with case-insensitive keys; each key at most once.
struct Params<'a> {
    line: usize,
    values: HashMap<String, &'a str>,
}

impl<'a> Params<'a> {
    fn parse(line: usize, tokens: &[&'a str], allowed: &[&str]) -> Result<Self, ParseError> {
        let mut values = HashMap::new();
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| syntax(line, format!("expected key=value, found '{tok}'")))?;
            let key = key.to_ascii_lowercase();
            if !allowed.contains(&key.as_str()) {
                return Err(syntax(line, format!("unknown parameter '{key}'")));
            }
            if value.is_empty() {
                return Err(syntax(line, format!("empty value for '{key}'")));
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(syntax(line, format!("parameter '{key}' given twice")));
            }
        }
        Ok(Self { line, values })
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ParseError> {
        self.values
            .get(key)
            .map(|v| parse_number(self.line, v))
            .transpose()
    }

    fn required(&self, key: &'static str) -> Result<f64, ParseError> {
        self.number(key)?.ok_or(ParseError::Missing {
            line: self.line,
            what: key,
        })
    }

    fn word(&self, key: &str) -> Option<&'a str> {
        self.values.get(key).copied()
    }
}

fn parse_element(line: usize, tokens: &[&str]) -> Result<ElementDecl, ParseError> {
    let name = tokens[0];
    if !is_identifier(name) {
        return Err(syntax(line, format!("invalid element name '{name}'")));
    }
    if tokens.len() < 3 {
        return Err(syntax(line, format!("element '{name}' needs two nodes")));
    }
    let (node_pos, node_neg) = (tokens[1], tokens[2]);
    for node in [node_pos, node_neg] {
        if !is_identifier(node) {
            return Err(syntax(line, format!("invalid node id '{node}'")));
        }
    }
    let rest = &tokens[3..];
    let first = name.chars().next().map(|c| c.to_ascii_uppercase());

    let kind = match first {
        Some('R') => match rest {
            [value] => ElementKind::Resistor {
                ohms: parse_number(line, value)?,
            },
            _ => return Err(syntax(line, "resistor takes exactly one value")),
        },
        Some(c @ ('L' | 'C')) => {
            let (value, params) = rest
                .split_first()
                .ok_or_else(|| syntax(line, "missing element value"))?;
            let value = parse_number(line, value)?;
            let ic = Params::parse(line, params, &["ic"])?
                .number("ic")?
                .unwrap_or(0.0);
            if c == 'L' {
                ElementKind::Inductor { henries: value, ic }
            } else {
                ElementKind::Capacitor { farads: value, ic }
            }
        }
        Some('V') => {
            let (form, params) = rest
                .split_first()
                .ok_or_else(|| syntax(line, "voltage source needs DC or SIN"))?;
            match form.to_ascii_uppercase().as_str() {
                "DC" => match params {
                    [value] => ElementKind::DcSource {
                        volts: parse_number(line, value)?,
                    },
                    _ => return Err(syntax(line, "DC source takes exactly one value")),
                },
                "SIN" => {
                    let p = Params::parse(line, params, &["mag", "freq", "phase"])?;
                    ElementKind::SinSource {
                        magnitude: p.required("mag")?,
                        frequency: p.required("freq")?,
                        phase: p.number("phase")?.unwrap_or(0.0),
                    }
                }
                other => return Err(syntax(line, format!("unknown source form '{other}'"))),
            }
        }
        Some('S') => {
            let p = Params::parse(line, rest, &["driver", "polarity", "initial"])?;
            let driver = match p.word("driver") {
                Some(id) if is_identifier(id) => Some(id.to_string()),
                Some(id) => return Err(syntax(line, format!("invalid driver id '{id}'"))),
                None => None,
            };
            let polarity = match p.word("polarity").map(str::to_ascii_lowercase).as_deref() {
                None | Some("direct") => Polarity::Direct,
                Some("complement") => Polarity::Complement,
                Some(other) => return Err(syntax(line, format!("unknown polarity '{other}'"))),
            };
            let initial = match p.word("initial").map(str::to_ascii_lowercase).as_deref() {
                None | Some("open") => Status::Blocking,
                Some("closed") => Status::Conducting,
                Some(other) => {
                    return Err(syntax(
                        line,
                        format!("switch initial must be open|closed, found '{other}'"),
                    ))
                }
            };
            ElementKind::Switch {
                driver,
                polarity,
                initial,
            }
        }
        Some('D') => {
            let p = Params::parse(line, rest, &["vf", "initial"])?;
            let initial = match p.word("initial").map(str::to_ascii_lowercase).as_deref() {
                None | Some("off") => Status::Blocking,
                Some("on") => Status::Conducting,
                Some(other) => {
                    return Err(syntax(
                        line,
                        format!("diode initial must be on|off, found '{other}'"),
                    ))
                }
            };
            ElementKind::Diode {
                forward_drop: p.number("vf")?.unwrap_or(0.0),
                initial,
            }
        }
        _ => return Err(syntax(line, format!("unknown element type '{name}'"))),
    };

    Ok(ElementDecl {
        name: name.to_string(),
        kind,
        node_pos: node_pos.to_string(),
        node_neg: node_neg.to_string(),
    })
}

fn parse_driver(line: usize, args: &[&str]) -> Result<DriverDecl, ParseError> {
    let [id, form, params @ ..] = args else {
        return Err(syntax(line, ".driver needs an id and a waveform"));
    };
    if !is_identifier(id) {
        return Err(syntax(line, format!("invalid driver id '{id}'")));
    }
    let kind = match form.to_ascii_uppercase().as_str() {
        "SQUARE" => {
            let p = Params::parse(line, params, &["freq", "duty"])?;
            DriverKind::Square {
                frequency: p.required("freq")?,
                duty: p.required("duty")?,
            }
        }
        "PWMSINESAW" => {
            let p = Params::parse(line, params, &["carrier", "mag", "mfreq", "mphase"])?;
            DriverKind::PwmSineSaw {
                carrier: p.required("carrier")?,
                magnitude: p.required("mag")?,
                mod_frequency: p.required("mfreq")?,
                mod_phase: p.number("mphase")?.unwrap_or(0.0),
            }
        }
        other => return Err(syntax(line, format!("unknown driver waveform '{other}'"))),
    };
    Ok(DriverDecl {
        id: id.to_string(),
        kind,
    })
}

fn parse_event(line: usize, args: &[&str]) -> Result<TimedEventDecl, ParseError> {
    let [switch, action, params @ ..] = args else {
        return Err(syntax(line, ".event needs a switch name and open|close"));
    };
    if !is_identifier(switch) {
        return Err(syntax(line, format!("invalid switch name '{switch}'")));
    }
    let action = match action.to_ascii_lowercase().as_str() {
        "open" => EventAction::Open,
        "close" => EventAction::Close,
        other => {
            return Err(syntax(
                line,
                format!("event action must be open|close, found '{other}'"),
            ))
        }
    };
    let time = Params::parse(line, params, &["at"])?.required("at")?;
    Ok(TimedEventDecl {
        switch: switch.to_string(),
        action,
        time,
    })
}

fn parse_tran(line: usize, args: &[&str]) -> Result<TranDirective, ParseError> {
    let p = Params::parse(line, args, &["h", "tstop", "tstart"])?;
    Ok(TranDirective {
        h: p.required("h")?,
        tstop: p.required("tstop")?,
        tstart: p.number("tstart")?.unwrap_or(0.0),
    })
}

/// Check every invariant of `desc` and freeze the runtime circuit model.
pub fn validate(desc: &CircuitDescription) -> Result<ValidatedCircuit, ValidationError> {
    let mut issues = Vec::new();
    let mut issue = |subject: &str, message: String| {
        issues.push(ValidationIssue {
            subject: subject.to_string(),
            message,
        })
    };

    if !desc.nodes.contains(GROUND) {
        issue(
            "circuit",
            "floating circuit: ground node 0 is not referenced".into(),
        );
    }

    let mut names = HashSet::new();
    for e in &desc.elements {
        if !names.insert(e.name.to_ascii_lowercase()) {
            issue(&e.name, "duplicate element name".into());
        }
        if e.node_pos == e.node_neg {
            issue(&e.name, format!("both terminals on node {}", e.node_pos));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match &e.kind {
            ElementKind::Resistor { ohms } if !positive(*ohms) => {
                issue(&e.name, format!("non-positive resistance {ohms}"))
            }
            ElementKind::Inductor { henries, .. } if !positive(*henries) => {
                issue(&e.name, format!("non-positive inductance {henries}"))
            }
            ElementKind::Capacitor { farads, .. } if !positive(*farads) => {
                issue(&e.name, format!("non-positive capacitance {farads}"))
            }
            ElementKind::SinSource { frequency, .. } if !positive(*frequency) => {
                issue(&e.name, format!("non-positive frequency {frequency}"))
            }
            ElementKind::Diode { forward_drop, .. }
                if !(forward_drop.is_finite() && *forward_drop >= 0.0) =>
            {
                issue(&e.name, format!("negative forward drop {forward_drop}"))
            }
            _ => {}
        }
    }

    let mut ids = HashSet::new();
    for d in &desc.drivers {
        if !ids.insert(d.id.to_ascii_lowercase()) {
            issue(&d.id, "duplicate driver id".into());
        }
        match d.kind {
            DriverKind::Square { frequency, duty } => {
                if frequency.is_nan() || frequency <= 0.0 {
                    issue(&d.id, format!("non-positive frequency {frequency}"));
                }
                if !(duty > 0.0 && duty < 1.0) {
                    issue(&d.id, format!("duty {duty} outside (0, 1)"));
                }
            }
            DriverKind::PwmSineSaw {
                carrier,
                mod_frequency,
                ..
            } => {
                if mod_frequency.is_nan() || mod_frequency < 0.0 {
                    issue(
                        &d.id,
                        format!("negative modulating frequency {mod_frequency}"),
                    );
                }
                if carrier.is_nan() || carrier <= mod_frequency {
                    issue(
                        &d.id,
                        format!("carrier {carrier} Hz must exceed modulating frequency {mod_frequency} Hz"),
                    );
                }
            }
        }
    }

    let find_element = |name: &str| {
        desc.elements
            .iter()
            .find(|e| e.name.eq_ignore_ascii_case(name))
    };
    for e in &desc.elements {
        if let ElementKind::Switch {
            driver: Some(id), ..
        } = &e.kind
        {
            if !desc.drivers.iter().any(|d| d.id.eq_ignore_ascii_case(id)) {
                issue(&e.name, format!("references missing driver '{id}'"));
            }
        }
    }

    let tran = desc.tran;
    if !(tran.h > 0.0 && tran.h.is_finite()) {
        issue(".tran", format!("non-positive step size {}", tran.h));
    }
    if tran.tstop.is_nan() || tran.tstop <= tran.tstart {
        issue(
            ".tran",
            format!("tstop {} not after tstart {}", tran.tstop, tran.tstart),
        );
    }

    for ev in &desc.events {
        let subject = format!(".event {}", ev.switch);
        match find_element(&ev.switch).map(|e| &e.kind) {
            Some(ElementKind::Switch { driver: None, .. }) => {}
            Some(ElementKind::Switch {
                driver: Some(_), ..
            }) => issue(
                &subject,
                "switch is gate-driven and cannot take timed events".into(),
            ),
            Some(_) => issue(&subject, "target is not a switch".into()),
            None => issue(&subject, "references missing switch".into()),
        }
        if !(ev.time >= tran.tstart && ev.time <= tran.tstop) {
            issue(
                &subject,
                format!("time {} outside [{}, {}]", ev.time, tran.tstart, tran.tstop),
            );
        }
    }

    if desc.nodes.contains(GROUND) {
        let floating = nodes_disconnected_from_ground(desc);
        if !floating.is_empty() {
            issue(
                "circuit",
                format!(
                    "floating circuit: nodes {} have no path to ground",
                    floating.join(", ")
                ),
            );
        }
    }

    if !issues.is_empty() {
        return Err(ValidationError(issues));
    }
    Ok(ValidatedCircuit::build(desc))
}

fn nodes_disconnected_from_ground(desc: &CircuitDescription) -> Vec<String> {
    let index: HashMap<&str, usize> = desc
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut parent: Vec<usize> = (0..index.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for e in &desc.elements {
        let a = root(&mut parent, index[e.node_pos.as_str()]);
        let b = root(&mut parent, index[e.node_neg.as_str()]);
        parent[a] = b;
    }
    let ground = root(&mut parent, index[GROUND]);
    desc.nodes
        .iter()
        .filter(|n| {
            let r = root(&mut parent, index[n.as_str()]);
            r != ground
        })
        .cloned()
        .collect()
}

impl fmt::Display for CircuitDescription {
    /// Serializes back into the netlist format; parsing the output yields an
    /// identical description.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.title.is_empty() {
            writeln!(f, ".title {}", self.title)?;
        }
        for e in &self.elements {
            write!(f, "{} {} {} ", e.name, e.node_pos, e.node_neg)?;
            match &e.kind {
                ElementKind::Resistor { ohms } => writeln!(f, "{ohms}")?,
                ElementKind::Inductor { henries, ic } => writeln!(f, "{henries} ic={ic}")?,
                ElementKind::Capacitor { farads, ic } => writeln!(f, "{farads} ic={ic}")?,
                ElementKind::DcSource { volts } => writeln!(f, "DC {volts}")?,
                ElementKind::SinSource {
                    magnitude,
                    frequency,
                    phase,
                } => writeln!(f, "SIN mag={magnitude} freq={frequency} phase={phase}")?,
                ElementKind::Switch {
                    driver,
                    polarity,
                    initial,
                } => {
                    if let Some(d) = driver {
                        write!(f, "driver={d} ")?;
                    }
                    let polarity = match polarity {
                        Polarity::Direct => "direct",
                        Polarity::Complement => "complement",
                    };
                    let initial = match initial {
                        Status::Conducting => "closed",
                        Status::Blocking => "open",
                    };
                    writeln!(f, "polarity={polarity} initial={initial}")?
                }
                ElementKind::Diode {
                    forward_drop,
                    initial,
                } => {
                    let initial = match initial {
                        Status::Conducting => "on",
                        Status::Blocking => "off",
                    };
                    writeln!(f, "vf={forward_drop} initial={initial}")?
                }
            }
        }
        for d in &self.drivers {
            match d.kind {
                DriverKind::Square { frequency, duty } => {
                    writeln!(f, ".driver {} SQUARE freq={frequency} duty={duty}", d.id)?
                }
                DriverKind::PwmSineSaw {
                    carrier,
                    magnitude,
                    mod_frequency,
                    mod_phase,
                } => writeln!(
                    f,
                    ".driver {} PWMSINESAW carrier={carrier} mag={magnitude} mfreq={mod_frequency} mphase={mod_phase}",
                    d.id
                )?,
            }
        }
        for ev in &self.events {
            let action = match ev.action {
                EventAction::Open => "open",
                EventAction::Close => "close",
            };
            writeln!(f, ".event {} {action} at={}", ev.switch, ev.time)?;
        }
        let t = &self.tran;
        writeln!(f, ".tran h={} tstop={} tstart={}", t.h, t.tstop, t.tstart)?;
        writeln!(f, ".end")
    }
}
