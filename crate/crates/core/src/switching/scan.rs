use crate::circuit::{
    controlling_quantity, StateSnapshot, Status, SwitchStatusVector, ValidatedCircuit,
};

use super::{
    sort_actions, zero_cross_time, Cause, Schedule, SwitchAction, SystemSwitchingTime, TIE_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Hysteresis band on diode controlling quantities.
    pub status_tol: f64,
    /// A regular mesh point strictly inside the step, treated as a
    /// pseudo-action.
    pub mesh_point: Option<f64>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            status_tol: 1e-9,
            mesh_point: None,
        }
    }
}

/// How far a diode's controlling quantity is on the consistent side of its
/// status: positive when consistent.
pub(crate) fn diode_margin(q: f64, status: Status) -> f64 {
    match status {
        Status::Conducting => q,
        Status::Blocking => -q,
    }
}

/// Actions activated in the step from `prev` to `new`, grouped at the
/// earliest switching time.
///
/// External actions that would not change a switch's status are dropped.
/// A diode triggers once its controlling quantity is inconsistent by more
/// than the tolerance; its time comes from the linear zero crossing when the
/// quantity started strictly on the consistent side, and is `new.t`
/// otherwise.
pub fn scan_step(
    circuit: &ValidatedCircuit,
    prev: &StateSnapshot,
    new: &StateSnapshot,
    statuses: &SwitchStatusVector,
    schedule: &mut Schedule,
    options: ScanOptions,
) -> Option<SystemSwitchingTime> {
    let (lo, t) = (prev.t, new.t);
    let h = t - lo;
    let mut actions = Vec::new();

    let mut would_be = statuses.clone();
    for mut a in schedule.actions_in(circuit, lo, t) {
        if would_be.get(a.slot) != a.status {
            would_be.set(a.slot, a.status);
            a.time = a.time.min(t);
            actions.push(a);
        }
    }

    for (slot, &ei) in circuit.switch_elements.iter().enumerate() {
        let e = &circuit.elements[ei];
        if !e.is_diode() {
            continue;
        }
        let status = statuses.get(slot);
        let m_new = diode_margin(controlling_quantity(e, new, status), status);
        if m_new >= -options.status_tol {
            continue;
        }
        let m_prev = diode_margin(controlling_quantity(e, prev, status), status);
        let time = if m_prev > 0.0 {
            zero_cross_time(m_prev, m_new, t, h).clamp(lo, t)
        } else {
            t
        };
        actions.push(SwitchAction {
            slot,
            status: status.flipped(),
            time,
            cause: Cause::ZeroCross,
        });
    }

    let earliest = actions.iter().map(|a| a.time).fold(f64::INFINITY, f64::min);
    if let Some(m) = options.mesh_point {
        if m < earliest - TIE_TOL {
            return Some(SystemSwitchingTime {
                t_sw: m,
                actions: Vec::new(),
                mesh_point: true,
            });
        }
    }
    if actions.is_empty() {
        return None;
    }
    let mut group: Vec<SwitchAction> = actions
        .into_iter()
        .filter(|a| a.time <= earliest + TIE_TOL)
        .collect();
    sort_actions(circuit, &mut group);
    let mut seen = Vec::new();
    group.retain(|a| {
        let fresh = !seen.contains(&a.slot);
        seen.push(a.slot);
        fresh
    });
    Some(SystemSwitchingTime {
        t_sw: earliest,
        actions: group,
        mesh_point: options
            .mesh_point
            .is_some_and(|m| (m - earliest).abs() <= TIE_TOL),
    })
}
