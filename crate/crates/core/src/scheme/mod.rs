//! Time-stepping engines.
//!
//! [`run`] dispatches on [`SchemeKind`]. The proposed engine steps with the
//! trapezoidal rule, backs up to every switching instant it finds, settles
//! statuses with half-step backward-Euler solves and restarts from a
//! reinitialized state. The naive engine stays on the mesh and applies
//! what it detects one step late.

pub mod events;
mod naive;
pub mod reinit;
pub mod resolve;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::circuit::{
    initial_snapshot, InitializationError, IntegrationMethod, Probe, SnapshotLabel, StateSnapshot,
    SwitchStatusVector, ValidatedCircuit,
};
use crate::interpolation::interpolate_snapshot;
use crate::mna::{SingularSystem, Solver, SolverStats};
use crate::switching::{scan_step, Cause, ScanOptions, Schedule, SwitchAction, TIE_TOL};
use crate::wave::Waveform;

pub use events::{EventEntry, EventLog};
pub use naive::run_naive;
pub use reinit::{reinitialize, ReinitMethod};
pub use resolve::{resolve_simultaneous, Resolution, ResolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchemeKind {
    #[default]
    Proposed,
    Naive,
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(SchemeKind::Proposed),
            "naive" => Ok(SchemeKind::Naive),
            other => Err(format!("unknown scheme '{other}'")),
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Proposed => "proposed",
            SchemeKind::Naive => "naive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub h: f64,
    pub tstart: f64,
    pub tstop: f64,
    pub scheme: SchemeKind,
    pub reinit: ReinitMethod,
    pub mesh_resync: bool,
    pub max_resolution_iters: usize,
    pub status_tol: f64,
    pub signals: Vec<Probe>,
}

impl SchemeConfig {
    /// Defaults taken from the circuit's transient directive.
    pub fn for_circuit(circuit: &ValidatedCircuit) -> Self {
        Self {
            h: circuit.tran.h,
            tstart: circuit.tran.tstart,
            tstop: circuit.tran.tstop,
            scheme: SchemeKind::Proposed,
            reinit: ReinitMethod::Fbbe,
            mesh_resync: false,
            max_resolution_iters: 3 + 2 * circuit.switch_count(),
            status_tol: 1e-9,
            signals: circuit.default_signals(),
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_scheme(mut self, scheme: SchemeKind) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_reinit(mut self, reinit: ReinitMethod) -> Self {
        self.reinit = reinit;
        self
    }

    pub fn with_mesh_resync(mut self, on: bool) -> Self {
        self.mesh_resync = on;
        self
    }

    fn resolve_options(&self) -> ResolveOptions {
        ResolveOptions {
            h: self.h,
            status_tol: self.status_tol,
            max_iters: self.max_resolution_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("initialization failed: {0}")]
    Init(InitializationError),
    #[error("at t={time:.16e}: {error}")]
    Singular { time: f64, error: SingularSystem },
    #[error("at t={time:.16e}: statuses did not settle after {iterations} solves; still toggling: {}", .switches.join(", "))]
    NonConvergence {
        time: f64,
        iterations: usize,
        switches: Vec<String>,
    },
}

impl From<InitializationError> for EngineError {
    fn from(e: InitializationError) -> Self {
        EngineError::Init(e)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub steps: usize,
    pub switching_instants: usize,
    pub resolution_solves: usize,
    pub solver: SolverStats,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub waveform: Waveform,
    pub events: EventLog,
    pub stats: RunStats,
    /// Final status of every switch and diode.
    pub statuses: SwitchStatusVector,
}

pub(crate) struct Recorder<'a> {
    circuit: &'a ValidatedCircuit,
    probes: &'a [Probe],
    pub wave: Waveform,
}

impl<'a> Recorder<'a> {
    pub fn new(circuit: &'a ValidatedCircuit, probes: &'a [Probe]) -> Self {
        let names = probes.iter().map(|&p| circuit.probe_name(p)).collect();
        Self {
            circuit,
            probes,
            wave: Waveform::new(names),
        }
    }

    pub fn record(&mut self, snap: &StateSnapshot) {
        let values = self
            .probes
            .iter()
            .map(|&p| self.circuit.probe_value(p, snap))
            .collect();
        self.wave.push(snap.t, values);
    }
}

pub fn run(circuit: &ValidatedCircuit, config: &SchemeConfig) -> Result<RunOutput, EngineError> {
    if !(config.h > 0.0 && config.h.is_finite()) {
        return Err(EngineError::Config(format!(
            "step size must be positive, got {}",
            config.h
        )));
    }
    if config.tstop.is_nan() || config.tstop <= config.tstart {
        return Err(EngineError::Config(format!(
            "tstop {} must exceed tstart {}",
            config.tstop, config.tstart
        )));
    }
    if config.max_resolution_iters == 0 {
        return Err(EngineError::Config(
            "max_resolution_iters must be at least 1".into(),
        ));
    }
    match config.scheme {
        SchemeKind::Proposed => run_proposed(circuit, config),
        SchemeKind::Naive => run_naive(circuit, config),
    }
}

/// Index `k` of the mesh point `tstart + k*h` within the tie tolerance of
/// `t`, if any.
pub(crate) fn mesh_index(t: f64, t0: f64, h: f64) -> Option<u64> {
    let k = ((t - t0) / h).round();
    (k >= 0.0 && (t0 + k * h - t).abs() <= TIE_TOL).then_some(k as u64)
}

/// Step end after `t`, clipped to `tstop`. The flag is set when the step
/// had to be shortened to land on `tstop`.
pub(crate) fn next_target(t: f64, mesh_k: Option<u64>, cfg: &SchemeConfig) -> (f64, bool) {
    let target = match mesh_k {
        Some(k) => cfg.tstart + (k + 1) as f64 * cfg.h,
        None => t + cfg.h,
    };
    if target >= cfg.tstop - TIE_TOL {
        (cfg.tstop, target > cfg.tstop + TIE_TOL)
    } else {
        (target, false)
    }
}

struct Engine<'a> {
    circuit: &'a ValidatedCircuit,
    cfg: &'a SchemeConfig,
    solver: Solver,
    schedule: Schedule,
    statuses: SwitchStatusVector,
    log: EventLog,
    stats: RunStats,
}

impl Engine<'_> {
    /// Resolve and reinitialize at `minus.t`. `None` when nothing changed.
    fn switch_at(
        &mut self,
        minus: &StateSnapshot,
        forced: &[SwitchAction],
    ) -> Result<Option<StateSnapshot>, EngineError> {
        let t_sw = minus.t;
        let Some(res) = resolve_simultaneous(
            self.circuit,
            &mut self.solver,
            minus,
            &self.statuses,
            forced,
            self.cfg.resolve_options(),
        )?
        else {
            return Ok(None);
        };
        for (action, old) in &res.changes {
            self.log.push(EventEntry::status_change(
                self.circuit,
                action.slot,
                *old,
                action.status,
                t_sw,
                action.cause,
            ));
        }
        let plus = reinitialize(
            self.circuit,
            &mut self.solver,
            &res.statuses,
            minus,
            &res.half,
            self.cfg.reinit,
            self.cfg.h,
        )
        .map_err(|error| EngineError::Singular { time: t_sw, error })?;
        self.statuses = res.statuses;
        self.stats.switching_instants += 1;
        self.stats.resolution_solves += res.solves;
        Ok(Some(plus))
    }
}

pub fn run_proposed(
    circuit: &ValidatedCircuit,
    cfg: &SchemeConfig,
) -> Result<RunOutput, EngineError> {
    let (t0, h) = (cfg.tstart, cfg.h);
    let mut engine = Engine {
        circuit,
        cfg,
        solver: Solver::new(),
        schedule: Schedule::new(circuit),
        statuses: circuit.initial_statuses(),
        log: EventLog::default(),
        stats: RunStats::default(),
    };
    let mut rec = Recorder::new(circuit, &cfg.signals);

    let mut start = initial_snapshot(circuit, &engine.statuses)?;
    start.t = t0;
    let forced = engine.schedule.events_at_start(t0);
    let mut cur = match engine.switch_at(&start, &forced)? {
        Some(plus) => {
            rec.record(&start.relabeled(SnapshotLabel::PreSwitch));
            rec.record(&plus);
            plus
        }
        None => {
            rec.record(&start);
            start
        }
    };
    let mut mesh_k = Some(0);
    let mut stalled = 0;

    while cur.t < cfg.tstop - TIE_TOL {
        let (target, truncated) = next_target(cur.t, mesh_k, cfg);
        let new = engine
            .solver
            .step_solve(
                circuit,
                &engine.statuses,
                IntegrationMethod::Trapezoidal(target - cur.t),
                &cur,
                target,
            )
            .map_err(|error| EngineError::Singular {
                time: target,
                error,
            })?;
        engine.stats.steps += 1;

        let mesh_point = if cfg.mesh_resync && mesh_k.is_none() {
            let k = ((cur.t - t0) / h).floor() + 1.0;
            let m = t0 + k * h;
            (m > cur.t + TIE_TOL && m < target - TIE_TOL).then_some(m)
        } else {
            None
        };
        let scan = scan_step(
            circuit,
            &cur,
            &new,
            &engine.statuses,
            &mut engine.schedule,
            ScanOptions {
                status_tol: cfg.status_tol,
                mesh_point,
            },
        );

        let Some(sw) = scan else {
            if truncated {
                engine.log.push(EventEntry {
                    time: target,
                    element: None,
                    old: "*",
                    new: "*",
                    cause: Cause::MeshTruncation,
                    actual: None,
                });
            }
            rec.record(&new);
            cur = new;
            mesh_k = mesh_index(cur.t, t0, h);
            stalled = 0;
            continue;
        };

        let minus = interpolate_snapshot(&cur, &new, sw.t_sw);
        if minus.t <= cur.t {
            stalled += 1;
            if stalled > cfg.max_resolution_iters {
                return Err(EngineError::NonConvergence {
                    time: minus.t,
                    iterations: stalled,
                    switches: sw
                        .actions
                        .iter()
                        .map(|a| circuit.switch_element(a.slot).name.clone())
                        .collect(),
                });
            }
        } else {
            stalled = 0;
        }
        match engine.switch_at(&minus, &sw.actions)? {
            Some(plus) => {
                rec.record(&minus);
                rec.record(&plus);
                cur = plus;
            }
            None => {
                let regular = minus.relabeled(SnapshotLabel::Regular);
                rec.record(&regular);
                cur = regular;
            }
        }
        mesh_k = mesh_index(cur.t, t0, h);
    }

    engine.stats.solver = engine.solver.stats;
    Ok(RunOutput {
        waveform: rec.wave,
        events: engine.log,
        stats: engine.stats,
        statuses: engine.statuses,
    })
}
