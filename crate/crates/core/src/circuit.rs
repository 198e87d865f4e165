//! Runtime circuit model: frozen element table, snapshots, companion models.
//!
//! Every element current is measured from `pos` to `neg` through the element.
//! A Norton companion obeys `i = g * u + i_hist` with `u = v(pos) - v(neg)`.

use std::fmt;

use crate::mna::{LuFactors, UnknownLayout};
use crate::netlist::{
    CircuitDescription, DriverDecl, ElementKind, Polarity, TranDirective, GROUND,
};
use crate::switching::driver::Driver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Conducting,
    Blocking,
}

impl Status {
    pub fn flipped(self) -> Status {
        match self {
            Status::Conducting => Status::Blocking,
            Status::Blocking => Status::Conducting,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Device {
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
    SinSource {
        magnitude: f64,
        frequency: f64,
        phase: f64,
    },
    Switch {
        /// Index into [`ValidatedCircuit::drivers`].
        driver: Option<usize>,
        polarity: Polarity,
        initial: Status,
    },
    Diode {
        forward_drop: f64,
        initial: Status,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub device: Device,
    /// Unknown index of the terminal node; `None` for ground.
    pub pos: Option<usize>,
    pub neg: Option<usize>,
    /// Unknown index of the branch current for sources, switches and diodes.
    pub branch: Option<usize>,
    /// Slot in [`StateSnapshot::dynamic`] for inductors and capacitors.
    pub dyn_slot: Option<usize>,
    /// Slot in [`SwitchStatusVector`] for switches and diodes.
    pub switch_slot: Option<usize>,
}

impl Element {
    pub fn is_diode(&self) -> bool {
        matches!(self.device, Device::Diode { .. })
    }

    /// Voltage source value at `t`; the constraint right-hand side of a
    /// conducting switch or diode.
    pub fn source_value(&self, t: f64) -> f64 {
        match self.device {
            Device::DcSource { volts } => volts,
            Device::SinSource {
                magnitude,
                frequency,
                phase,
            } => magnitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin(),
            Device::Diode { forward_drop, .. } => forward_drop,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent {
    pub slot: usize,
    pub status: Status,
    pub time: f64,
}

/// A circuit that passed validation, with its unknown layout frozen.
#[derive(Debug, Clone)]
pub struct ValidatedCircuit {
    pub title: String,
    /// Non-ground node names; node `k` owns unknown `k`.
    pub nodes: Vec<String>,
    pub elements: Vec<Element>,
    pub drivers: Vec<Driver>,
    /// Sorted by time, stable for equal times.
    pub events: Vec<TimedEvent>,
    pub tran: TranDirective,
    pub layout: UnknownLayout,
    /// Element index for each switch slot.
    pub switch_elements: Vec<usize>,
    /// Element index for each dynamic slot.
    pub dynamic_elements: Vec<usize>,
}

impl ValidatedCircuit {
    /// Freeze a description. Callers go through [`crate::netlist::validate`].
    pub(crate) fn build(desc: &CircuitDescription) -> Self {
        let nodes: Vec<String> = desc
            .nodes
            .iter()
            .filter(|n| *n != GROUND)
            .cloned()
            .collect();
        let node_index = |name: &str| nodes.iter().position(|n| n == name);
        let find_driver = |id: &str| {
            desc.drivers
                .iter()
                .position(|d: &DriverDecl| d.id.eq_ignore_ascii_case(id))
        };

        let mut elements = Vec::with_capacity(desc.elements.len());
        let mut branch_names = Vec::new();
        let mut switch_elements = Vec::new();
        let mut dynamic_elements = Vec::new();
        for (idx, decl) in desc.elements.iter().enumerate() {
            let device = match &decl.kind {
                ElementKind::Resistor { ohms } => Device::Resistor { ohms: *ohms },
                ElementKind::Inductor { henries, ic } => Device::Inductor {
                    henries: *henries,
                    ic: *ic,
                },
                ElementKind::Capacitor { farads, ic } => Device::Capacitor {
                    farads: *farads,
                    ic: *ic,
                },
                ElementKind::DcSource { volts } => Device::DcSource { volts: *volts },
                ElementKind::SinSource {
                    magnitude,
                    frequency,
                    phase,
                } => Device::SinSource {
                    magnitude: *magnitude,
                    frequency: *frequency,
                    phase: *phase,
                },
                ElementKind::Switch {
                    driver,
                    polarity,
                    initial,
                } => Device::Switch {
                    driver: driver.as_deref().and_then(find_driver),
                    polarity: *polarity,
                    initial: *initial,
                },
                ElementKind::Diode {
                    forward_drop,
                    initial,
                } => Device::Diode {
                    forward_drop: *forward_drop,
                    initial: *initial,
                },
            };
            let has_branch = matches!(
                device,
                Device::DcSource { .. }
                    | Device::SinSource { .. }
                    | Device::Switch { .. }
                    | Device::Diode { .. }
            );
            let branch = has_branch.then(|| {
                branch_names.push(decl.name.clone());
                nodes.len() + branch_names.len() - 1
            });
            let switch_slot =
                matches!(device, Device::Switch { .. } | Device::Diode { .. }).then(|| {
                    switch_elements.push(idx);
                    switch_elements.len() - 1
                });
            let dyn_slot = matches!(device, Device::Inductor { .. } | Device::Capacitor { .. })
                .then(|| {
                    dynamic_elements.push(idx);
                    dynamic_elements.len() - 1
                });
            elements.push(Element {
                name: decl.name.clone(),
                device,
                pos: node_index(&decl.node_pos),
                neg: node_index(&decl.node_neg),
                branch,
                dyn_slot,
                switch_slot,
            });
        }

        let mut events: Vec<TimedEvent> = desc
            .events
            .iter()
            .map(|ev| {
                let idx = desc
                    .elements
                    .iter()
                    .position(|e| e.name.eq_ignore_ascii_case(&ev.switch))
                    .expect("validated event target");
                TimedEvent {
                    slot: elements[idx].switch_slot.expect("validated switch"),
                    status: ev.action.status(),
                    time: ev.time,
                }
            })
            .collect();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));

        let layout = UnknownLayout::new(&nodes, &branch_names);
        ValidatedCircuit {
            title: desc.title.clone(),
            nodes,
            elements,
            drivers: desc
                .drivers
                .iter()
                .map(|d| Driver::new(&d.id, d.kind))
                .collect(),
            events,
            tran: desc.tran,
            layout,
            switch_elements,
            dynamic_elements,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements
            .iter()
            .find(|e| e.name.eq_ignore_ascii_case(name))
    }

    pub fn node(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn switch_element(&self, slot: usize) -> &Element {
        &self.elements[self.switch_elements[slot]]
    }

    pub fn switch_count(&self) -> usize {
        self.switch_elements.len()
    }

    /// Statuses at `tstart`: driven switches follow their gate, everything
    /// else takes its declared initial status.
    pub fn initial_statuses(&self) -> SwitchStatusVector {
        let t0 = self.tran.tstart;
        SwitchStatusVector(
            self.switch_elements
                .iter()
                .map(|&e| match self.elements[e].device {
                    Device::Switch {
                        driver: Some(d),
                        polarity,
                        ..
                    } => gate_status(self.drivers[d].level(t0), polarity),
                    Device::Switch { initial, .. } | Device::Diode { initial, .. } => initial,
                    _ => unreachable!("switch slot on a non-switch"),
                })
                .collect(),
        )
    }

    /// Default recorded signals: every node voltage, then every element current.
    pub fn default_signals(&self) -> Vec<Probe> {
        (0..self.nodes.len())
            .map(Probe::NodeVoltage)
            .chain((0..self.elements.len()).map(Probe::Current))
            .collect()
    }

    /// Resolve names such as `v(load)`, `i(L1)`, `u(D1)`.
    pub fn probe(&self, name: &str) -> Option<Probe> {
        let name = name.trim();
        let (kind, arg) = name.split_once('(')?;
        let arg = arg.strip_suffix(')')?.trim();
        match kind.trim().to_ascii_lowercase().as_str() {
            "v" => self.node(arg).map(Probe::NodeVoltage),
            "i" => self
                .elements
                .iter()
                .position(|e| e.name.eq_ignore_ascii_case(arg))
                .map(Probe::Current),
            "u" => self
                .elements
                .iter()
                .position(|e| e.name.eq_ignore_ascii_case(arg))
                .map(Probe::Voltage),
            _ => None,
        }
    }

    pub fn probe_name(&self, probe: Probe) -> String {
        match probe {
            Probe::NodeVoltage(n) => format!("v({})", self.nodes[n]),
            Probe::Current(e) => format!("i({})", self.elements[e].name),
            Probe::Voltage(e) => format!("u({})", self.elements[e].name),
        }
    }

    pub fn probe_value(&self, probe: Probe, snap: &StateSnapshot) -> f64 {
        match probe {
            Probe::NodeVoltage(n) => snap.x[n],
            Probe::Current(e) => element_current(&self.elements[e], snap),
            Probe::Voltage(e) => branch_voltage(&self.elements[e], &snap.x),
        }
    }
}

pub fn gate_status(level: bool, polarity: Polarity) -> Status {
    let conducting = match polarity {
        Polarity::Direct => level,
        Polarity::Complement => !level,
    };
    if conducting {
        Status::Conducting
    } else {
        Status::Blocking
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    NodeVoltage(usize),
    Current(usize),
    Voltage(usize),
}

/// Status of every switch and diode, indexed by switch slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SwitchStatusVector(pub Vec<Status>);

impl SwitchStatusVector {
    pub fn get(&self, slot: usize) -> Status {
        self.0[slot]
    }

    pub fn set(&mut self, slot: usize, status: Status) {
        self.0[slot] = status;
    }

    pub fn describe(&self, circuit: &ValidatedCircuit) -> String {
        self.0
            .iter()
            .enumerate()
            .map(|(slot, s)| {
                let e = circuit.switch_element(slot);
                format!("{}={}", e.name, status_word(e, *s))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// `closed`/`open` for switches, `on`/`off` for diodes.
pub fn status_word(element: &Element, status: Status) -> &'static str {
    match (element.is_diode(), status) {
        (true, Status::Conducting) => "on",
        (true, Status::Blocking) => "off",
        (false, Status::Conducting) => "closed",
        (false, Status::Blocking) => "open",
    }
}

/// Voltage and current of one inductor or capacitor. For an inductor `i` is
/// the state and `v` the memo used by trapezoidal history; for a capacitor
/// the roles swap.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DynState {
    pub v: f64,
    pub i: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotLabel {
    Regular,
    PreSwitch,
    PostSwitch,
    Intermediate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub t: f64,
    /// Node voltages followed by branch currents, in layout order.
    pub x: Vec<f64>,
    pub dynamic: Vec<DynState>,
    pub label: SnapshotLabel,
}

impl StateSnapshot {
    pub fn relabeled(mut self, label: SnapshotLabel) -> Self {
        self.label = label;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegrationMethod {
    Trapezoidal(f64),
    /// Step may be negative.
    BackwardEuler(f64),
}

impl IntegrationMethod {
    /// The backward-Euler step whose companion conductances coincide with
    /// this method's.
    pub fn equivalent_be_step(self) -> f64 {
        match self {
            IntegrationMethod::Trapezoidal(h) => h / 2.0,
            IntegrationMethod::BackwardEuler(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompanionStamp {
    pub g: f64,
    pub i_hist: f64,
}

/// Companion conductance; identical for `Trapezoidal(h)` and
/// `BackwardEuler(h / 2)` by construction.
pub fn companion_conductance(element: &Element, method: IntegrationMethod) -> Option<f64> {
    let s = method.equivalent_be_step();
    match element.device {
        Device::Resistor { ohms } => Some(1.0 / ohms),
        Device::Inductor { henries, .. } => Some(s / henries),
        Device::Capacitor { farads, .. } => Some(farads / s),
        _ => None,
    }
}

/// Norton companion of a resistor, inductor or capacitor; `None` for
/// elements stamped as constraint rows.
pub fn companion_stamp(
    element: &Element,
    method: IntegrationMethod,
    prev: &StateSnapshot,
) -> Option<CompanionStamp> {
    let g = companion_conductance(element, method)?;
    let state = |e: &Element| prev.dynamic[e.dyn_slot.expect("dynamic element")];
    match element.device {
        Device::Resistor { .. } => Some(CompanionStamp { g, i_hist: 0.0 }),
        Device::Inductor { .. } => {
            let st = state(element);
            let i_hist = match method {
                IntegrationMethod::Trapezoidal(_) => st.i + g * st.v,
                IntegrationMethod::BackwardEuler(_) => st.i,
            };
            Some(CompanionStamp { g, i_hist })
        }
        Device::Capacitor { .. } => {
            let st = state(element);
            let i_hist = match method {
                IntegrationMethod::Trapezoidal(_) => -st.i - g * st.v,
                IntegrationMethod::BackwardEuler(_) => -g * st.v,
            };
            Some(CompanionStamp { g, i_hist })
        }
        _ => None,
    }
}

pub fn branch_voltage(element: &Element, x: &[f64]) -> f64 {
    let v = |n: Option<usize>| n.map_or(0.0, |k| x[k]);
    v(element.pos) - v(element.neg)
}

pub fn element_current(element: &Element, snap: &StateSnapshot) -> f64 {
    match element.device {
        Device::Resistor { ohms } => branch_voltage(element, &snap.x) / ohms,
        Device::Inductor { .. } | Device::Capacitor { .. } => {
            snap.dynamic[element.dyn_slot.expect("dynamic element")].i
        }
        _ => snap.x[element.branch.expect("branch element")],
    }
}

/// Diode current when conducting, `u_D - V_f` when blocking.
pub fn controlling_quantity(diode: &Element, snap: &StateSnapshot, status: Status) -> f64 {
    let Device::Diode { forward_drop, .. } = diode.device else {
        panic!("controlling_quantity called on non-diode {}", diode.name);
    };
    match status {
        Status::Conducting => snap.x[diode.branch.expect("diode branch")],
        Status::Blocking => branch_voltage(diode, &snap.x) - forward_drop,
    }
}

/// Inductor or capacitor state after a solve with `method` from `prev`.
pub fn element_post_solve(
    element: &Element,
    x: &[f64],
    method: IntegrationMethod,
    prev: &StateSnapshot,
) -> DynState {
    let stamp = companion_stamp(element, method, prev).expect("dynamic element");
    let u = branch_voltage(element, x);
    DynState {
        v: u,
        i: stamp.g * u + stamp.i_hist,
    }
}

/// Largest normalized KCL mismatch over the non-ground nodes:
/// `|sum of currents| / max(1, sum of |currents|)`.
pub fn kcl_residual(circuit: &ValidatedCircuit, snap: &StateSnapshot) -> f64 {
    let n = circuit.nodes.len();
    let mut sum = vec![0.0; n];
    let mut mag = vec![0.0; n];
    for e in &circuit.elements {
        let i = element_current(e, snap);
        if let Some(p) = e.pos {
            sum[p] += i;
            mag[p] += i.abs();
        }
        if let Some(q) = e.neg {
            sum[q] -= i;
            mag[q] += i.abs();
        }
    }
    sum.iter()
        .zip(&mag)
        .map(|(s, m)| s.abs() / m.max(1.0))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("singular initialization system at {unknown}; elements involved: {}", .elements.join(", "))]
pub struct InitializationError {
    pub unknown: String,
    pub elements: Vec<String>,
}

/// Consistent operating point at `tstart`.
///
/// Inductors become current sources of value `ic` and capacitors voltage
/// sources of value `ic`. Nodes left without any path to a defined potential
/// (an inductor behind an open switch, say) are held with a small shunt
/// conductance in a second attempt.
pub fn initial_snapshot(
    circuit: &ValidatedCircuit,
    statuses: &SwitchStatusVector,
) -> Result<StateSnapshot, InitializationError> {
    let n = circuit.dim();
    let caps: Vec<usize> = circuit
        .elements
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e.device, Device::Capacitor { .. }))
        .map(|(i, _)| i)
        .collect();
    let dim = n + caps.len();
    let t0 = circuit.tran.tstart;

    let mut a = crate::mna::DenseMatrix::zeros(dim);
    let mut rhs = vec![0.0; dim];
    crate::mna::stamp_constraints(circuit, statuses, &mut a, &mut rhs, t0);
    for e in &circuit.elements {
        match e.device {
            Device::Resistor { ohms } => crate::mna::stamp_conductance(&mut a, e, 1.0 / ohms),
            Device::Inductor { ic, .. } => crate::mna::stamp_injection(&mut rhs, e, ic),
            _ => {}
        }
    }
    for (k, &ci) in caps.iter().enumerate() {
        let e = &circuit.elements[ci];
        let row = n + k;
        let Device::Capacitor { ic, .. } = e.device else {
            unreachable!()
        };
        if let Some(p) = e.pos {
            a.add(p, row, 1.0);
            a.add(row, p, 1.0);
        }
        if let Some(q) = e.neg {
            a.add(q, row, -1.0);
            a.add(row, q, -1.0);
        }
        rhs[row] = ic;
    }

    let lu = match LuFactors::factorize(&a) {
        Ok(lu) => lu,
        Err(_) => {
            let mut shunted = a.clone();
            let gmin = 1e-6 * a.max_abs().max(1.0);
            for k in 0..circuit.nodes.len() {
                shunted.add(k, k, gmin);
            }
            LuFactors::factorize(&shunted).map_err(|err| {
                let unknown = if err.column < n {
                    circuit.layout.name(err.column).to_string()
                } else {
                    format!("i({})", circuit.elements[caps[err.column - n]].name)
                };
                InitializationError {
                    unknown,
                    elements: constraint_elements(circuit, statuses),
                }
            })?
        }
    };
    let sol = lu.solve(&rhs);

    let mut snap = StateSnapshot {
        t: t0,
        x: sol[..n].to_vec(),
        dynamic: vec![DynState::default(); circuit.dynamic_elements.len()],
        label: SnapshotLabel::Regular,
    };
    for &ei in &circuit.dynamic_elements {
        let e = &circuit.elements[ei];
        let slot = e.dyn_slot.expect("dynamic element");
        snap.dynamic[slot] = match e.device {
            Device::Inductor { ic, .. } => DynState {
                v: branch_voltage(e, &snap.x),
                i: ic,
            },
            Device::Capacitor { ic, .. } => {
                let k = caps.iter().position(|&c| c == ei).expect("capacitor");
                DynState {
                    v: ic,
                    i: sol[n + k],
                }
            }
            _ => unreachable!(),
        };
    }
    Ok(snap)
}

fn constraint_elements(circuit: &ValidatedCircuit, statuses: &SwitchStatusVector) -> Vec<String> {
    circuit
        .elements
        .iter()
        .filter(|e| match e.device {
            Device::DcSource { .. } | Device::SinSource { .. } | Device::Capacitor { .. } => true,
            Device::Switch { .. } | Device::Diode { .. } => {
                statuses.get(e.switch_slot.expect("switch slot")) == Status::Conducting
            }
            _ => false,
        })
        .map(|e| e.name.clone())
        .collect()
}

impl fmt::Display for StateSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={:e} ({:?}) x={:?}", self.t, self.label, self.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::load;

    fn freewheel() -> ValidatedCircuit {
        load("L1 1 0 0.005 ic=1\nS1 1 0 initial=closed\nD1 0 1\n.tran h=1e-4 tstop=2e-3\n").unwrap()
    }

    fn snapshot_with(circuit: &ValidatedCircuit, u: f64, i: f64) -> StateSnapshot {
        let mut x = vec![0.0; circuit.dim()];
        x[0] = u;
        StateSnapshot {
            t: 0.0,
            x,
            dynamic: vec![DynState { v: u, i }],
            label: SnapshotLabel::Regular,
        }
    }

    #[test]
    fn freewheel_initial_point() {
        let c = freewheel();
        let snap = initial_snapshot(&c, &c.initial_statuses()).unwrap();
        assert_eq!(snap.x[0], 0.0);
        assert_eq!(snap.dynamic[0], DynState { v: 0.0, i: 1.0 });
        let s1 = c.element("S1").unwrap();
        assert_eq!(element_current(s1, &snap), -1.0);
    }

    #[test]
    fn source_and_resistor_initial_point() {
        let c = load("V1 1 0 DC 1.0\nR1 1 0 0.1\n.tran h=1e-4 tstop=1\n").unwrap();
        let snap = initial_snapshot(&c, &c.initial_statuses()).unwrap();
        assert_eq!(snap.x[0], 1.0);
        assert!((element_current(c.element("R1").unwrap(), &snap) - 10.0).abs() < 1e-12);
        assert!((snap.x[1] + 10.0).abs() < 1e-12);
    }

    #[test]
    fn buck_boost_initial_point_is_zero() {
        let c = load(
            "Vin in 0 DC 1.0\nS1 in x driver=gate\nL1 x 0 0.005\nD1 load x\nC1 load 0 0.2\nRload load 0 0.1\n.driver gate SQUARE freq=5 duty=0.6\n.tran h=100e-6 tstop=2\n",
        )
        .unwrap();
        let statuses = c.initial_statuses();
        assert_eq!(statuses.get(0), Status::Conducting);
        let snap = initial_snapshot(&c, &statuses).unwrap();
        for e in &c.elements {
            let i = element_current(e, &snap);
            assert!(i.abs() < 1e-12, "{} carries {i}", e.name);
        }
        assert_eq!(snap.x[c.node("in").unwrap()], 1.0);
    }

    #[test]
    fn source_loop_is_reported() {
        let c = load("V1 1 0 DC 1\nV2 1 0 DC 2\n.tran h=1 tstop=2\n").unwrap();
        let err = initial_snapshot(&c, &c.initial_statuses()).unwrap_err();
        assert!(err.elements.contains(&"V1".to_string()));
        assert!(err.elements.contains(&"V2".to_string()));
    }

    #[test]
    fn inductor_companions() {
        let c = freewheel();
        let l1 = c.element("L1").unwrap();
        let prev = snapshot_with(&c, 0.0, 1.0);
        let trap = companion_stamp(l1, IntegrationMethod::Trapezoidal(1e-4), &prev).unwrap();
        assert_eq!((trap.g, trap.i_hist), (0.01, 1.0));
        let be = companion_stamp(l1, IntegrationMethod::BackwardEuler(5e-5), &prev).unwrap();
        assert_eq!((be.g, be.i_hist), (0.01, 1.0));
        let back = companion_stamp(l1, IntegrationMethod::BackwardEuler(-5e-5), &prev).unwrap();
        assert_eq!((back.g, back.i_hist), (-0.01, 1.0));
    }

    #[test]
    fn trap_and_half_be_conductances_are_identical() {
        let c = load("L1 1 0 0.0037\nC1 1 0 0.013\nR1 1 0 7.1\n.tran h=1 tstop=2\n").unwrap();
        let prev = StateSnapshot {
            t: 0.0,
            x: vec![0.3],
            dynamic: vec![DynState { v: 0.3, i: 0.2 }; 2],
            label: SnapshotLabel::Regular,
        };
        for h in [1e-4, 3.3e-5, 7e-6, 0.1] {
            for e in &c.elements {
                let a = companion_stamp(e, IntegrationMethod::Trapezoidal(h), &prev).unwrap();
                let b =
                    companion_stamp(e, IntegrationMethod::BackwardEuler(h / 2.0), &prev).unwrap();
                assert_eq!(a.g.to_bits(), b.g.to_bits(), "{} at h={h}", e.name);
            }
        }
    }

    #[test]
    fn post_solve_updates() {
        let c = freewheel();
        let l1 = c.element("L1").unwrap();
        let prev = snapshot_with(&c, 0.0, 1.0);
        let st = element_post_solve(
            l1,
            &[0.0, 0.0, 0.0],
            IntegrationMethod::Trapezoidal(1e-4),
            &prev,
        );
        assert_eq!(st.i, 1.0);
        let st = element_post_solve(
            l1,
            &[-100.0, 0.0, 0.0],
            IntegrationMethod::BackwardEuler(5e-5),
            &prev,
        );
        assert_eq!(st.i, 0.0);

        let cap = load("C1 1 0 0.2\n.tran h=1 tstop=2\n").unwrap();
        let prev = StateSnapshot {
            t: 0.0,
            x: vec![0.7],
            dynamic: vec![DynState { v: 0.7, i: 0.0 }],
            label: SnapshotLabel::Regular,
        };
        let st = element_post_solve(
            &cap.elements[0],
            &[0.7],
            IntegrationMethod::Trapezoidal(1e-3),
            &prev,
        );
        assert_eq!(st.i, 0.0);
    }

    #[test]
    fn diode_controlling_quantity() {
        let c = load("D1 a 0 vf=0.7\nR1 a 0 1\n.tran h=1 tstop=2\n").unwrap();
        let d = c.element("D1").unwrap();
        let snap = |va: f64, id: f64| StateSnapshot {
            t: 0.0,
            x: vec![va, id],
            dynamic: vec![],
            label: SnapshotLabel::Regular,
        };
        assert_eq!(
            controlling_quantity(d, &snap(0.7, 0.4), Status::Conducting),
            0.4
        );
        assert!((controlling_quantity(d, &snap(0.2, 0.0), Status::Blocking) + 0.5).abs() < 1e-15);
        assert_eq!(
            controlling_quantity(d, &snap(0.7, 0.0), Status::Blocking),
            0.0
        );
    }

    #[test]
    fn probes_resolve_by_name() {
        let c = freewheel();
        assert_eq!(c.probe("v(1)"), Some(Probe::NodeVoltage(0)));
        assert_eq!(c.probe("i(l1)"), Some(Probe::Current(0)));
        assert_eq!(c.probe("u(D1)"), Some(Probe::Voltage(2)));
        assert_eq!(c.probe("v(7)"), None);
        assert_eq!(c.probe_name(Probe::Current(1)), "i(S1)");
    }
}
