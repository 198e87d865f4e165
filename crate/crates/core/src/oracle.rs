//! Fine-step backward-Euler reference solver.
//!
//! Steps of `h_base / N` with no switching-instant location at all: gate
//! levels are sampled at sub-step midpoints, timed events apply at the
//! first sub-step whose midpoint reaches them, and diode statuses are fixed
//! by re-solving each sub-step until they agree with the solution. Output
//! is recorded every `N` sub-steps.

use thiserror::Error;

use crate::circuit::{
    controlling_quantity, gate_status, initial_snapshot, Device, InitializationError,
    IntegrationMethod, Probe, Status, ValidatedCircuit,
};
use crate::mna::{SingularSystem, Solver, SolverStats};
use crate::wave::Waveform;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("refinement must be at least 100, got {0}")]
    Refinement(usize),
    #[error("initialization failed: {0}")]
    Init(InitializationError),
    #[error("at t={time:.16e}: {error}")]
    Singular { time: f64, error: SingularSystem },
    #[error("at t={time:.16e}: diode statuses did not settle; still toggling: {}", .diodes.join(", "))]
    NonConvergence { time: f64, diodes: Vec<String> },
}

impl From<InitializationError> for OracleError {
    fn from(e: InitializationError) -> Self {
        OracleError::Init(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub h_base: f64,
    pub refinement: usize,
    pub tstop: f64,
    pub signals: Vec<Probe>,
}

impl OracleConfig {
    pub fn for_circuit(circuit: &ValidatedCircuit, refinement: usize) -> Self {
        Self {
            h_base: circuit.tran.h,
            refinement,
            tstop: circuit.tran.tstop,
            signals: circuit.default_signals(),
        }
    }
}

const STATUS_TOL: f64 = 1e-9;

pub fn oracle_run(circuit: &ValidatedCircuit, cfg: &OracleConfig) -> Result<Waveform, OracleError> {
    oracle_run_with_stats(circuit, cfg).map(|(wave, _)| wave)
}

/// Like [`oracle_run`], also returning the statistics of every solve,
/// including rejected trial solves.
pub fn oracle_run_with_stats(
    circuit: &ValidatedCircuit,
    cfg: &OracleConfig,
) -> Result<(Waveform, SolverStats), OracleError> {
    if cfg.refinement < 100 {
        return Err(OracleError::Refinement(cfg.refinement));
    }
    let t0 = circuit.tran.tstart;
    let s = cfg.h_base / cfg.refinement as f64;
    let total = ((cfg.tstop - t0) / s).round().max(1.0) as u64;
    let max_iters = 3 + 2 * circuit.switch_count();

    let driven: Vec<(usize, usize, crate::netlist::Polarity)> = circuit
        .switch_elements
        .iter()
        .enumerate()
        .filter_map(|(slot, &ei)| match circuit.elements[ei].device {
            Device::Switch {
                driver: Some(d),
                polarity,
                ..
            } => Some((slot, d, polarity)),
            _ => None,
        })
        .collect();
    let diodes: Vec<usize> = circuit
        .switch_elements
        .iter()
        .enumerate()
        .filter(|(_, &ei)| circuit.elements[ei].is_diode())
        .map(|(slot, _)| slot)
        .collect();

    let mut statuses = circuit.initial_statuses();
    let mut next_event = 0;
    while next_event < circuit.events.len() && circuit.events[next_event].time <= t0 {
        let ev = &circuit.events[next_event];
        statuses.set(ev.slot, ev.status);
        next_event += 1;
    }

    let mut solver = Solver::new();
    let mut snap = initial_snapshot(circuit, &statuses)?;
    snap.t = t0;
    let mut wave = Waveform::new(cfg.signals.iter().map(|&p| circuit.probe_name(p)).collect());
    let record = |wave: &mut Waveform, snap: &crate::circuit::StateSnapshot| {
        let row = cfg
            .signals
            .iter()
            .map(|&p| circuit.probe_value(p, snap))
            .collect();
        wave.push(snap.t, row);
    };
    record(&mut wave, &snap);

    let method = IntegrationMethod::BackwardEuler(s);
    for j in 1..=total {
        let t = if j == total {
            cfg.tstop
        } else {
            t0 + j as f64 * s
        };
        let mid = t - 0.5 * s;
        for &(slot, d, polarity) in &driven {
            statuses.set(slot, gate_status(circuit.drivers[d].level(mid), polarity));
        }
        while next_event < circuit.events.len() && circuit.events[next_event].time <= mid {
            let ev = &circuit.events[next_event];
            statuses.set(ev.slot, ev.status);
            next_event += 1;
        }

        let mut tries = 0;
        let mut marginal: Vec<usize> = Vec::new();
        let next = loop {
            let trial = match solver.step_solve(circuit, &statuses, method, &snap, t) {
                Ok(trial) => trial,
                // A diode sitting on its threshold can close a loop with one
                // that was just flipped; flip the threshold diodes as well.
                Err(_) if !marginal.is_empty() => {
                    for slot in marginal.drain(..) {
                        statuses.set(slot, statuses.get(slot).flipped());
                    }
                    solver
                        .step_solve(circuit, &statuses, method, &snap, t)
                        .map_err(|error| OracleError::Singular { time: t, error })?
                }
                Err(error) => return Err(OracleError::Singular { time: t, error }),
            };
            let mut wrong = Vec::new();
            marginal.clear();
            for &slot in &diodes {
                let st = statuses.get(slot);
                let q = controlling_quantity(circuit.switch_element(slot), &trial, st);
                let margin = match st {
                    Status::Conducting => q,
                    Status::Blocking => -q,
                };
                if margin < -STATUS_TOL {
                    wrong.push(slot);
                } else if margin <= STATUS_TOL {
                    marginal.push(slot);
                }
            }
            if wrong.is_empty() {
                break trial;
            }
            tries += 1;
            if tries > max_iters {
                return Err(OracleError::NonConvergence {
                    time: t,
                    diodes: wrong
                        .iter()
                        .map(|&k| circuit.switch_element(k).name.clone())
                        .collect(),
                });
            }
            for slot in wrong {
                statuses.set(slot, statuses.get(slot).flipped());
            }
        };
        snap = next;
        if j % cfg.refinement as u64 == 0 || j == total {
            record(&mut wave, &snap);
        }
    }
    Ok((wave, solver.stats))
}

/// Circuits with known exact solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticFixture {
    /// Inductor with a freewheeling diode: after `t_sw`, `i_L = il0` and
    /// `u = 0` for all time.
    Freewheel { l: f64, il0: f64, t_sw: f64 },
    /// Inductor current interrupted at `t_sw`: afterwards `i_L = 0` and
    /// `u = 0`, with an impulse of area `-l * il0` at `t_sw` itself.
    Interrupt { l: f64, il0: f64, t_sw: f64 },
    /// Series R-L switched onto a DC source at `t = 0`.
    RlEnergization { v: f64, r: f64, l: f64 },
}

pub fn analytic_fixtures() -> Vec<(&'static str, AnalyticFixture)> {
    vec![
        (
            "freewheel",
            AnalyticFixture::Freewheel {
                l: 0.005,
                il0: 1.0,
                t_sw: 0.00025,
            },
        ),
        (
            "interrupt",
            AnalyticFixture::Interrupt {
                l: 0.005,
                il0: 1.0,
                t_sw: 0.00025,
            },
        ),
        (
            "rl-energization",
            AnalyticFixture::RlEnergization {
                v: 1.0,
                r: 0.1,
                l: 0.005,
            },
        ),
    ]
}

impl AnalyticFixture {
    pub fn netlist(&self, h: f64, tstop: f64) -> String {
        match *self {
            AnalyticFixture::Freewheel { l, il0, t_sw } => format!(
                "L1 1 0 {l} ic={il0}\nS1 1 0 initial=closed\nD1 0 1\n.event S1 open at={t_sw}\n.tran h={h} tstop={tstop}\n"
            ),
            AnalyticFixture::Interrupt { l, il0, t_sw } => format!(
                "L1 1 0 {l} ic={il0}\nS1 1 0 initial=closed\n.event S1 open at={t_sw}\n.tran h={h} tstop={tstop}\n"
            ),
            AnalyticFixture::RlEnergization { v, r, l } => {
                format!("V1 1 0 DC {v}\nR1 1 2 {r}\nL1 2 0 {l}\n.tran h={h} tstop={tstop}\n")
            }
        }
    }

    /// Exact inductor current at `t`.
    pub fn inductor_current(&self, t: f64) -> f64 {
        match *self {
            AnalyticFixture::Freewheel { il0, .. } => il0,
            AnalyticFixture::Interrupt { il0, t_sw, .. } => {
                if t < t_sw {
                    il0
                } else {
                    0.0
                }
            }
            AnalyticFixture::RlEnergization { v, r, l } => v / r * (1.0 - (-t * r / l).exp()),
        }
    }

    /// Exact inductor voltage at `t`; `-inf` at an impulse.
    pub fn inductor_voltage(&self, t: f64) -> f64 {
        match *self {
            AnalyticFixture::Freewheel { .. } => 0.0,
            AnalyticFixture::Interrupt { t_sw, .. } => {
                if t == t_sw {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
            AnalyticFixture::RlEnergization { v, r, l } => v * (-t * r / l).exp(),
        }
    }
}
