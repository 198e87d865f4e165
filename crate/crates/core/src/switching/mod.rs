//! Switching actions: when they happen and what they do.

pub mod crossing;
pub mod driver;
pub mod scan;

use std::cmp::Ordering;
use std::fmt;

use crate::circuit::{gate_status, Device, Status, TimedEvent, ValidatedCircuit};
use crate::netlist::Polarity;
use driver::{Driver, Toggle};

pub use crossing::zero_cross_time;
pub use scan::{scan_step, ScanOptions};

/// Actions closer than this are simultaneous.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cause {
    External,
    ZeroCross,
    /// Found by the k-th evaluation of the resolution loop; `0` is the
    /// evaluation on the pre-switching snapshot.
    Resolution(usize),
    MeshTruncation,
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cause::External => f.write_str("external"),
            Cause::ZeroCross => f.write_str("zero-cross"),
            Cause::Resolution(k) => write!(f, "resolution[{k}]"),
            Cause::MeshTruncation => f.write_str("mesh-truncation"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchAction {
    pub slot: usize,
    pub status: Status,
    pub time: f64,
    pub cause: Cause,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSwitchingTime {
    pub t_sw: f64,
    /// Sorted by time, then element name.
    pub actions: Vec<SwitchAction>,
    /// `t_sw` is a regular mesh point reached by resynchronization.
    pub mesh_point: bool,
}

pub(crate) fn sort_actions(circuit: &ValidatedCircuit, actions: &mut [SwitchAction]) {
    actions.sort_by(|a, b| {
        a.time.total_cmp(&b.time).then_with(|| {
            let na = &circuit.switch_element(a.slot).name;
            let nb = &circuit.switch_element(b.slot).name;
            na.cmp(nb)
        })
    });
}

#[derive(Debug, Clone)]
struct ToggleCache {
    driver: Driver,
    toggles: Vec<Toggle>,
    frontier: f64,
    exhausted: bool,
    switches: Vec<(usize, Polarity)>,
}

impl ToggleCache {
    fn extend_to(&mut self, t: f64) {
        while !self.exhausted && self.frontier <= t {
            match self.driver.next_toggle(self.frontier) {
                Some(tg) => {
                    self.frontier = tg.time;
                    self.toggles.push(tg);
                }
                None => self.exhausted = true,
            }
        }
    }
}

/// Known-in-advance switching actions: gate toggles and timed events.
#[derive(Debug, Clone)]
pub struct Schedule {
    caches: Vec<ToggleCache>,
    events: Vec<TimedEvent>,
}

impl Schedule {
    pub fn new(circuit: &ValidatedCircuit) -> Self {
        let mut caches: Vec<ToggleCache> = circuit
            .drivers
            .iter()
            .map(|d| ToggleCache {
                driver: d.clone(),
                toggles: Vec::new(),
                frontier: circuit.tran.tstart,
                exhausted: false,
                switches: Vec::new(),
            })
            .collect();
        for (slot, &ei) in circuit.switch_elements.iter().enumerate() {
            if let Device::Switch {
                driver: Some(d),
                polarity,
                ..
            } = circuit.elements[ei].device
            {
                caches[d].switches.push((slot, polarity));
            }
        }
        Self {
            caches,
            events: circuit.events.clone(),
        }
    }

    /// Timed events at `tstart` itself, which no step interval contains.
    pub fn events_at_start(&self, tstart: f64) -> Vec<SwitchAction> {
        self.events
            .iter()
            .filter(|ev| ev.time <= tstart + TIE_TOL)
            .map(|ev| SwitchAction {
                slot: ev.slot,
                status: ev.status,
                time: tstart,
                cause: Cause::External,
            })
            .collect()
    }

    /// Every scheduled action with time in `(lo, hi]`, widened by the tie
    /// tolerance on both ends, in time order.
    pub fn actions_in(
        &mut self,
        circuit: &ValidatedCircuit,
        lo: f64,
        hi: f64,
    ) -> Vec<SwitchAction> {
        let (lo, hi) = (lo + TIE_TOL, hi + TIE_TOL);
        let mut out = Vec::new();
        for cache in &mut self.caches {
            if cache.switches.is_empty() {
                continue;
            }
            cache.extend_to(hi);
            let first = cache.toggles.partition_point(|tg| tg.time <= lo);
            for tg in cache.toggles[first..].iter().take_while(|tg| tg.time <= hi) {
                out.extend(cache.switches.iter().map(|&(slot, polarity)| SwitchAction {
                    slot,
                    status: gate_status(tg.level, polarity),
                    time: tg.time,
                    cause: Cause::External,
                }));
            }
        }
        let first = self.events.partition_point(|ev| ev.time <= lo);
        out.extend(
            self.events[first..]
                .iter()
                .take_while(|ev| ev.time <= hi)
                .map(|ev| SwitchAction {
                    slot: ev.slot,
                    status: ev.status,
                    time: ev.time,
                    cause: Cause::External,
                }),
        );
        sort_actions(circuit, &mut out);
        out
    }

    /// Gate toggle times of every driver that drives at least one switch,
    /// up to `t_end`. Used to count expected external instants.
    pub fn toggle_times(&mut self, t_end: f64) -> Vec<f64> {
        let mut times = Vec::new();
        for cache in &mut self.caches {
            if cache.switches.is_empty() {
                continue;
            }
            cache.extend_to(t_end);
            times.extend(cache.toggles.iter().map(|t| t.time).filter(|&t| t <= t_end));
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        times
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::load;

    #[test]
    fn square_gate_actions_by_window() {
        let c = load(
            "V1 a 0 DC 1\nS1 a b driver=g\nS2 a b driver=g polarity=complement\nR1 b 0 1\n.driver g SQUARE freq=5 duty=0.6\n.tran h=1e-2 tstop=1\n",
        )
        .unwrap();
        let mut s = Schedule::new(&c);
        assert!(s.actions_in(&c, 0.0, 0.11).is_empty());
        let acts = s.actions_in(&c, 0.11, 0.12);
        assert_eq!(acts.len(), 2);
        assert_eq!((acts[0].slot, acts[0].status), (0, Status::Blocking));
        assert_eq!((acts[1].slot, acts[1].status), (1, Status::Conducting));
        assert!(s.actions_in(&c, 0.12, 0.13).is_empty());
        assert_eq!(s.actions_in(&c, 0.0, 1.0).len(), 2 * 10);
    }

    #[test]
    fn timed_events_half_open() {
        let c = load("S1 a 0\nR1 a 0 1\n.event S1 close at=0.5\n.event S1 open at=0.0\n.tran h=1e-2 tstop=1\n").unwrap();
        let mut s = Schedule::new(&c);
        assert_eq!(s.events_at_start(0.0).len(), 1);
        assert!(s.actions_in(&c, 0.5, 0.6).is_empty());
        let acts = s.actions_in(&c, 0.4, 0.5);
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].status, Status::Conducting);
    }

    #[test]
    fn cause_words() {
        assert_eq!(Cause::Resolution(2).to_string(), "resolution[2]");
        assert_eq!(Cause::ZeroCross.to_string(), "zero-cross");
    }
}
