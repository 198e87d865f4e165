use crate::circuit::{
    controlling_quantity, IntegrationMethod, StateSnapshot, Status, SwitchStatusVector,
    ValidatedCircuit,
};
use crate::mna::Solver;
use crate::switching::scan::diode_margin;
use crate::switching::{Cause, SwitchAction};

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolveOptions {
    pub h: f64,
    pub status_tol: f64,
    /// Most half-step solves allowed before giving up.
    pub max_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub statuses: SwitchStatusVector,
    /// Solution at `t_sw + h/2` with the final statuses.
    pub half: StateSnapshot,
    pub solves: usize,
    /// Applied status changes in order, timed at `t_sw`.
    pub changes: Vec<(SwitchAction, Status)>,
}

/// Diodes whose controlling quantity in `snap` contradicts their status by
/// more than `tol`, skipping `exclude`d slots.
fn inconsistent_diodes(
    circuit: &ValidatedCircuit,
    snap: &StateSnapshot,
    statuses: &SwitchStatusVector,
    tol: f64,
    exclude: &[usize],
) -> Vec<usize> {
    circuit
        .switch_elements
        .iter()
        .enumerate()
        .filter(|(slot, &ei)| {
            let e = &circuit.elements[ei];
            if !e.is_diode() || exclude.contains(slot) {
                return false;
            }
            let s = statuses.get(*slot);
            diode_margin(controlling_quantity(e, snap, s), s) < -tol
        })
        .map(|(slot, _)| slot)
        .collect()
}

/// Settle all statuses at `minus.t` after applying `forced`.
///
/// Returns `None` when neither the forced actions nor the diodes evaluated
/// on `minus` change anything; no solve is done then.
pub fn resolve_simultaneous(
    circuit: &ValidatedCircuit,
    solver: &mut Solver,
    minus: &StateSnapshot,
    statuses: &SwitchStatusVector,
    forced: &[SwitchAction],
    opts: ResolveOptions,
) -> Result<Option<Resolution>, EngineError> {
    let t_sw = minus.t;
    let mut st = statuses.clone();
    let mut changes = Vec::new();
    let flip = |st: &mut SwitchStatusVector, slot: usize, cause: Cause, changes: &mut Vec<_>| {
        let old = st.get(slot);
        st.set(slot, old.flipped());
        changes.push((
            SwitchAction {
                slot,
                status: old.flipped(),
                time: t_sw,
                cause,
            },
            old,
        ));
    };

    for a in forced {
        if st.get(a.slot) != a.status {
            flip(&mut st, a.slot, a.cause, &mut changes);
        }
    }
    let forced_slots: Vec<usize> = forced.iter().map(|a| a.slot).collect();
    for slot in inconsistent_diodes(circuit, minus, &st, opts.status_tol, &forced_slots) {
        flip(&mut st, slot, Cause::Resolution(0), &mut changes);
    }
    if changes.is_empty() {
        return Ok(None);
    }

    let method = IntegrationMethod::BackwardEuler(opts.h / 2.0);
    let mut solves = 0;
    loop {
        let half = solver
            .step_solve(circuit, &st, method, minus, t_sw + opts.h / 2.0)
            .map_err(|error| EngineError::Singular { time: t_sw, error })?;
        solves += 1;
        let pending = inconsistent_diodes(circuit, &half, &st, opts.status_tol, &[]);
        if pending.is_empty() {
            return Ok(Some(Resolution {
                statuses: st,
                half,
                solves,
                changes,
            }));
        }
        if solves >= opts.max_iters {
            return Err(EngineError::NonConvergence {
                time: t_sw,
                iterations: solves,
                switches: pending
                    .iter()
                    .map(|&s| circuit.switch_element(s).name.clone())
                    .collect(),
            });
        }
        for slot in pending {
            flip(&mut st, slot, Cause::Resolution(solves), &mut changes);
        }
    }
}
