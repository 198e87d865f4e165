use emtstep::wave::{compare, UniformGrid, WaveError};
use emtstep::Waveform;
use proptest::prelude::*;

fn two_signals() -> Waveform {
    let mut w = Waveform::new(vec!["v(a)".into(), "i(L1)".into()]);
    w.push(0.0, vec![0.0, 1.0]);
    w.push(1e-4, vec![0.5, -1.0 / 3.0]);
    w.push(2e-4, vec![1.0, 1e-300]);
    w
}

#[test]
fn three_samples_make_four_lines() {
    let mut buf = Vec::new();
    two_signals().write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "time,v(a),i(L1)");
    assert_eq!(
        lines[1],
        "0.0000000000000000e0,0.0000000000000000e0,1.0000000000000000e0"
    );
}

#[test]
fn file_round_trip_keeps_switching_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    let mut w = two_signals();
    w.push(2e-4, vec![-7.0, 0.0]);
    w.save(&path).unwrap();
    let back = Waveform::load(&path).unwrap();
    assert_eq!(back, w);
    assert_eq!(back.rows[3], vec![-7.0, 0.0]);
}

#[test]
fn malformed_files_rejected() {
    assert!(matches!(
        Waveform::read_csv("t,x\n0,1\n".as_bytes()),
        Err(WaveError::Header(_))
    ));
    assert!(matches!(
        Waveform::read_csv("time,x\n0,1\n1,2,3\n".as_bytes()),
        Err(WaveError::Ragged { .. } | WaveError::Csv(_))
    ));
    assert!(matches!(
        Waveform::read_csv("time,x\n0,one\n".as_bytes()),
        Err(WaveError::Number { .. })
    ));
}

#[test]
fn identical_waveforms_compare_to_zero() {
    let w = two_signals();
    let r = compare(&w, &w, None).unwrap();
    for s in &r.signals {
        assert_eq!((s.rmse, s.max_abs, s.rel_rms), (0.0, 0.0, Some(0.0)));
    }
}

#[test]
fn constant_offsets() {
    let mut one = Waveform::new(vec!["x".into(), "y".into()]);
    let mut zero = Waveform::new(vec!["x".into(), "y".into()]);
    for k in 0..=20 {
        one.push(k as f64 * 0.05, vec![1.0, 2.0]);
        zero.push(k as f64 * 0.05, vec![0.0, 1.0]);
    }
    let r = compare(&one, &zero, None).unwrap();
    let x = r.signal("x").unwrap();
    assert!((x.rmse - 1.0).abs() < 1e-15 && (x.max_abs - 1.0).abs() < 1e-15);
    assert_eq!(x.rel_rms, None);
    assert!(r.to_string().contains("undefined"));
    assert!((r.signal("y").unwrap().rel_rms.unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn disjoint_ranges_rejected() {
    let mut a = Waveform::new(vec!["x".into()]);
    let mut b = Waveform::new(vec!["x".into()]);
    for k in 0..3 {
        a.push(k as f64, vec![0.0]);
        b.push(10.0 + k as f64, vec![0.0]);
    }
    assert!(matches!(
        compare(&a, &b, None),
        Err(WaveError::Disjoint { .. })
    ));
}

#[test]
fn resampling_is_linear_and_uses_post_switch_row_after_the_instant() {
    let mut w = Waveform::new(vec!["x".into()]);
    w.push(0.0, vec![0.0]);
    w.push(1.0, vec![2.0]);
    w.push(1.0, vec![10.0]);
    w.push(2.0, vec![12.0]);
    let r = w.resample(&UniformGrid::spanning(0.0, 2.0, 0.5));
    assert_eq!(r.column("x").unwrap(), vec![0.0, 1.0, 2.0, 11.0, 12.0]);
}

fn waveform() -> impl Strategy<Value = Waveform> {
    (
        1usize..4,
        prop::collection::vec((0.0..1e-3f64, any::<bool>()), 1..20),
    )
        .prop_flat_map(|(width, steps)| {
            let n = steps.len();
            prop::collection::vec(
                prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, width),
                n,
            )
            .prop_map(move |rows| {
                let mut w = Waveform::new((0..width).map(|k| format!("v(n{k})")).collect());
                let mut t = 0.0;
                for ((dt, repeat), row) in steps.iter().zip(rows) {
                    if !repeat {
                        t += dt;
                    }
                    w.push(t, row);
                }
                w
            })
        })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(w in waveform()) {
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let back = Waveform::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.names, w.names);
        prop_assert_eq!(back.times, w.times);
        for (a, b) in back.rows.iter().zip(&w.rows) {
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(x.to_bits() == y.to_bits() || (*x == 0.0 && *y == 0.0), true);
            }
        }
    }

    #[test]
    fn self_comparison_is_exactly_zero(w in waveform()) {
        prop_assume!(w.times.last() > w.times.first());
        let r = compare(&w, &w, None).unwrap();
        for s in &r.signals {
            prop_assert_eq!(s.rmse, 0.0);
            prop_assert_eq!(s.max_abs, 0.0);
        }
    }
}
