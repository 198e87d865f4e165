//! Straight-line return to a switching instant inside a solved step.

use crate::circuit::{DynState, SnapshotLabel, StateSnapshot};

/// Componentwise linear interpolation between two snapshots, labelled as
/// the pre-switching state at `t_sw`.
///
/// The endpoints are reproduced exactly and every value stays between its
/// two endpoint values.
///
/// # Panics
/// If `t_sw` lies outside `[prev.t, new.t]`.
pub fn interpolate_snapshot(prev: &StateSnapshot, new: &StateSnapshot, t_sw: f64) -> StateSnapshot {
    assert!(
        prev.t <= t_sw && t_sw <= new.t,
        "switching time {t_sw} outside step [{}, {}]",
        prev.t,
        new.t
    );
    let h = new.t - prev.t;
    let w = if h > 0.0 { (t_sw - prev.t) / h } else { 1.0 };
    let lerp = |a: f64, b: f64| {
        if w == 0.0 {
            a
        } else if w == 1.0 {
            b
        } else {
            let v = a + (b - a) * w;
            v.clamp(a.min(b), a.max(b))
        }
    };
    StateSnapshot {
        t: t_sw,
        x: prev
            .x
            .iter()
            .zip(&new.x)
            .map(|(&a, &b)| lerp(a, b))
            .collect(),
        dynamic: prev
            .dynamic
            .iter()
            .zip(&new.dynamic)
            .map(|(a, b)| DynState {
                v: lerp(a.v, b.v),
                i: lerp(a.i, b.i),
            })
            .collect(),
        label: SnapshotLabel::PreSwitch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(t: f64, x: f64) -> StateSnapshot {
        StateSnapshot {
            t,
            x: vec![x, -x],
            dynamic: vec![DynState { v: x, i: 2.0 * x }],
            label: SnapshotLabel::Regular,
        }
    }

    #[test]
    fn endpoints_and_midpoint() {
        let a = snap(0.9, 0.0);
        let b = snap(1.0, 10.0);
        assert_eq!(interpolate_snapshot(&a, &b, 0.9).x, a.x);
        assert_eq!(interpolate_snapshot(&a, &b, 1.0).dynamic, b.dynamic);
        let m = interpolate_snapshot(&a, &b, 1.0 - 0.07);
        assert!((m.x[0] - 3.0).abs() < 1e-12);
        assert_eq!(m.label, SnapshotLabel::PreSwitch);
    }

    #[test]
    #[should_panic(expected = "outside step")]
    fn outside_bracket_panics() {
        interpolate_snapshot(&snap(0.0, 0.0), &snap(1.0, 1.0), 1.5);
    }
}
