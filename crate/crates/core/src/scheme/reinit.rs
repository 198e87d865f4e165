use std::fmt;
use std::str::FromStr;

use crate::circuit::{
    Device, DynState, IntegrationMethod, SnapshotLabel, StateSnapshot, SwitchStatusVector,
    ValidatedCircuit,
};
use crate::mna::{SingularSystem, Solver};

/// How post-switching values at `t_sw` are rebuilt from the half-step
/// solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReinitMethod {
    /// Backward-Euler step of `-h/2` from the half-step solution.
    #[default]
    Fbbe,
    /// Half-step algebraic values with continuous inductor currents and
    /// capacitor voltages.
    HalfBe,
    /// Extrapolate the states to `t_sw - h/2`, then a backward-Euler half
    /// step forward to `t_sw`.
    Zou,
    /// A second half step to `t_sw + h`, then linear extrapolation back.
    TwoHalfExtrap,
}

impl ReinitMethod {
    pub const ALL: [ReinitMethod; 4] = [
        ReinitMethod::Fbbe,
        ReinitMethod::HalfBe,
        ReinitMethod::Zou,
        ReinitMethod::TwoHalfExtrap,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ReinitMethod::Fbbe => "fbbe",
            ReinitMethod::HalfBe => "half-be",
            ReinitMethod::Zou => "zou",
            ReinitMethod::TwoHalfExtrap => "two-half-extrap",
        }
    }
}

impl fmt::Display for ReinitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ReinitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| format!("unknown reinitialization method '{s}'"))
    }
}

fn affine(a: &StateSnapshot, b: &StateSnapshot, ka: f64, kb: f64) -> StateSnapshot {
    StateSnapshot {
        t: a.t,
        x: a.x.iter().zip(&b.x).map(|(p, q)| ka * p + kb * q).collect(),
        dynamic: a
            .dynamic
            .iter()
            .zip(&b.dynamic)
            .map(|(p, q)| DynState {
                v: ka * p.v + kb * q.v,
                i: ka * p.i + kb * q.i,
            })
            .collect(),
        label: a.label,
    }
}

/// Post-switching snapshot at `minus.t`.
pub fn reinitialize(
    circuit: &ValidatedCircuit,
    solver: &mut Solver,
    statuses: &SwitchStatusVector,
    minus: &StateSnapshot,
    half: &StateSnapshot,
    method: ReinitMethod,
    h: f64,
) -> Result<StateSnapshot, SingularSystem> {
    let t_sw = minus.t;
    let mut plus = match method {
        ReinitMethod::Fbbe => solver.step_solve(
            circuit,
            statuses,
            IntegrationMethod::BackwardEuler(-h / 2.0),
            half,
            t_sw,
        )?,
        ReinitMethod::HalfBe => {
            let mut s = half.clone();
            for &ei in &circuit.dynamic_elements {
                let e = &circuit.elements[ei];
                let k = e.dyn_slot.expect("dynamic element");
                match e.device {
                    Device::Inductor { .. } => s.dynamic[k].i = minus.dynamic[k].i,
                    _ => s.dynamic[k].v = minus.dynamic[k].v,
                }
            }
            s
        }
        ReinitMethod::Zou => {
            let ext = affine(minus, half, 2.0, -1.0);
            let mut s = half.clone();
            for &ei in &circuit.dynamic_elements {
                let e = &circuit.elements[ei];
                let k = e.dyn_slot.expect("dynamic element");
                let (m, x) = (minus.dynamic[k], ext.dynamic[k]);
                s.dynamic[k] = match e.device {
                    Device::Inductor { henries, .. } => DynState {
                        v: henries / (h / 2.0) * (m.i - x.i),
                        i: m.i,
                    },
                    Device::Capacitor { farads, .. } => DynState {
                        v: m.v,
                        i: farads / (h / 2.0) * (m.v - x.v),
                    },
                    _ => unreachable!(),
                };
            }
            s
        }
        ReinitMethod::TwoHalfExtrap => {
            let full = solver.step_solve(
                circuit,
                statuses,
                IntegrationMethod::BackwardEuler(h / 2.0),
                half,
                t_sw + h,
            )?;
            affine(half, &full, 2.0, -1.0)
        }
    };
    plus.t = t_sw;
    plus.label = SnapshotLabel::PostSwitch;
    Ok(plus)
}
