use crate::circuit::{controlling_quantity, initial_snapshot, IntegrationMethod};
use crate::mna::Solver;
use crate::switching::scan::diode_margin;
use crate::switching::{zero_cross_time, Cause, Schedule, SwitchAction, TIE_TOL};

use super::{
    next_target, EngineError, EventEntry, EventLog, Recorder, RunOutput, RunStats, SchemeConfig,
};
use crate::circuit::ValidatedCircuit;

/// Fixed-mesh trapezoidal run that applies every action detected in a step
/// when assembling the following step. No interpolation, no resolution
/// loop, no reinitialization.
pub fn run_naive(circuit: &ValidatedCircuit, cfg: &SchemeConfig) -> Result<RunOutput, EngineError> {
    let mut solver = Solver::new();
    let mut schedule = Schedule::new(circuit);
    let mut statuses = circuit.initial_statuses();
    let mut log = EventLog::default();
    let mut stats = RunStats::default();
    let mut rec = Recorder::new(circuit, &cfg.signals);

    for a in schedule.events_at_start(cfg.tstart) {
        let old = statuses.get(a.slot);
        if old != a.status {
            statuses.set(a.slot, a.status);
            log.push(EventEntry::status_change(
                circuit, a.slot, old, a.status, cfg.tstart, a.cause,
            ));
        }
    }
    let mut cur = initial_snapshot(circuit, &statuses)?;
    cur.t = cfg.tstart;
    rec.record(&cur);

    let mut pending: Vec<SwitchAction> = Vec::new();
    let mut k = 0u64;
    while cur.t < cfg.tstop - TIE_TOL {
        let (target, truncated) = next_target(cur.t, Some(k), cfg);
        k += 1;
        if truncated {
            log.push(EventEntry {
                time: target,
                element: None,
                old: "*",
                new: "*",
                cause: Cause::MeshTruncation,
                actual: None,
            });
        }
        for a in pending.drain(..) {
            let old = statuses.get(a.slot);
            if old != a.status {
                statuses.set(a.slot, a.status);
                let mut entry =
                    EventEntry::status_change(circuit, a.slot, old, a.status, target, a.cause);
                entry.actual = (a.time != target).then_some(a.time);
                log.push(entry);
            }
            stats.switching_instants += 1;
        }

        let new = solver
            .step_solve(
                circuit,
                &statuses,
                IntegrationMethod::Trapezoidal(target - cur.t),
                &cur,
                target,
            )
            .map_err(|error| EngineError::Singular {
                time: target,
                error,
            })?;
        stats.steps += 1;

        pending = schedule.actions_in(circuit, cur.t, target);
        for a in &mut pending {
            a.time = a.time.min(target);
        }
        for (slot, &ei) in circuit.switch_elements.iter().enumerate() {
            let e = &circuit.elements[ei];
            if !e.is_diode() {
                continue;
            }
            let s = statuses.get(slot);
            let m_new = diode_margin(controlling_quantity(e, &new, s), s);
            if m_new >= -cfg.status_tol {
                continue;
            }
            let m_prev = diode_margin(controlling_quantity(e, &cur, s), s);
            let time = if m_prev > 0.0 {
                zero_cross_time(m_prev, m_new, target, target - cur.t)
            } else {
                target
            };
            pending.push(SwitchAction {
                slot,
                status: s.flipped(),
                time,
                cause: Cause::ZeroCross,
            });
        }

        rec.record(&new);
        cur = new;
    }

    stats.solver = solver.stats;
    Ok(RunOutput {
        waveform: rec.wave,
        events: log,
        stats,
        statuses,
    })
}
