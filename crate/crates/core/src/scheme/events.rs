use std::fmt;
use std::io::Write;

use crate::circuit::{status_word, Status, ValidatedCircuit};
use crate::switching::Cause;

#[derive(Debug, Clone, PartialEq)]
pub struct EventEntry {
    /// When the status change took effect in the simulation.
    pub time: f64,
    /// `None` for pseudo-events that change no status.
    pub element: Option<String>,
    pub old: &'static str,
    pub new: &'static str,
    pub cause: Cause,
    /// The instant the action really occurred, when it differs from `time`.
    pub actual: Option<f64>,
}

impl EventEntry {
    pub fn status_change(
        circuit: &ValidatedCircuit,
        slot: usize,
        old: Status,
        new: Status,
        time: f64,
        cause: Cause,
    ) -> Self {
        let e = circuit.switch_element(slot);
        Self {
            time,
            element: Some(e.name.clone()),
            old: status_word(e, old),
            new: status_word(e, new),
            cause,
            actual: None,
        }
    }

    pub fn lag(&self) -> f64 {
        self.actual.map_or(0.0, |a| self.time - a)
    }
}

impl fmt::Display for EventEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.element {
            Some(name) => write!(
                f,
                "{:.16e} {} {}->{} cause={}",
                self.time, name, self.old, self.new, self.cause
            )?,
            None => write!(f, "{:.16e} * *->* cause={}", self.time, self.cause)?,
        }
        if let Some(actual) = self.actual {
            write!(f, " actual={actual:.16e}")?;
        }
        Ok(())
    }
}

/// Every switching action of a run in the order it was applied.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub entries: Vec<EventEntry>,
}

impl EventLog {
    pub fn push(&mut self, entry: EventEntry) {
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn for_element<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a EventEntry> + 'a {
        self.entries.iter().filter(move |e| {
            e.element
                .as_deref()
                .is_some_and(|n| n.eq_ignore_ascii_case(name))
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }
}

impl fmt::Display for EventLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}
