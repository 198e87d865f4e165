use emtstep::methodlab::{interrupt_reinit, FixtureParams, LabMethod};
use emtstep::netlist::load;
use emtstep::scheme::{run, EngineError, ReinitMethod, SchemeConfig, SchemeKind};
use emtstep::switching::Cause;
use emtstep::ValidatedCircuit;

fn circuit(text: &str) -> ValidatedCircuit {
    load(text).unwrap()
}

fn freewheel() -> ValidatedCircuit {
    circuit(include_str!("../fixtures/freewheel.ckt"))
}

fn signals(c: &ValidatedCircuit, names: &[&str]) -> Vec<emtstep::circuit::Probe> {
    names.iter().map(|n| c.probe(n).unwrap()).collect()
}

#[test]
fn freewheel_diode_takes_over_at_the_switching_instant() {
    let c = freewheel();
    let mut cfg = SchemeConfig::for_circuit(&c);
    cfg.signals = signals(&c, &["i(L1)", "u(L1)", "i(D1)"]);
    let out = run(&c, &cfg).unwrap();
    let changes: Vec<_> = out
        .events
        .entries
        .iter()
        .filter(|e| e.element.is_some())
        .collect();
    assert_eq!(changes.len(), 2, "{}", out.events);
    assert_eq!(changes[0].cause, Cause::External);
    assert_eq!(changes[1].cause, Cause::Resolution(1));
    assert_eq!(changes[1].time, 2.5e-4);
    assert_eq!(
        out.events.entries.last().unwrap().cause,
        Cause::MeshTruncation
    );

    let w = &out.waveform;
    for (k, &t) in w.times.iter().enumerate() {
        assert!((w.rows[k][0] - 1.0).abs() < 1e-9);
        if t > 2.5e-4 {
            assert!(w.rows[k][1].abs() < 1e-9);
            assert!((w.rows[k][2] - 1.0).abs() < 1e-9);
        }
    }
    let at_switch: Vec<usize> = (0..w.len()).filter(|&k| w.times[k] == 2.5e-4).collect();
    assert_eq!(at_switch.len(), 2);
}

#[test]
fn engine_matches_lab_for_every_reinitialization() {
    let p = FixtureParams::default();
    let pairs = [
        (ReinitMethod::Fbbe, LabMethod::Fbbe),
        (ReinitMethod::HalfBe, LabMethod::HalfBe),
        (ReinitMethod::Zou, LabMethod::Zou),
        (ReinitMethod::TwoHalfExtrap, LabMethod::TwoHalfExtrap),
    ];
    let c = circuit(include_str!("../fixtures/interrupt.ckt"));
    for (engine_method, lab_method) in pairs {
        let mut cfg = SchemeConfig::for_circuit(&c).with_reinit(engine_method);
        cfg.signals = signals(&c, &["u(L1)", "i(L1)"]);
        let out = run(&c, &cfg).unwrap();
        let lab = interrupt_reinit(p, lab_method);
        let w = &out.waveform;
        let plus = w.times.iter().rposition(|&t| t == 2.5e-4).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * b.abs().max(1.0);
        assert!(
            close(w.rows[plus][0], lab.u_plus),
            "{engine_method}: u+ {} vs {}",
            w.rows[plus][0],
            lab.u_plus
        );
        assert!(
            close(w.rows[plus][1], lab.il_plus),
            "{engine_method}: iL+ {}",
            w.rows[plus][1]
        );
        for k in 0..4 {
            let row = &w.rows[plus + 1 + k];
            assert!((w.times[plus + 1 + k] - (2.5e-4 + (k + 1) as f64 * p.h)).abs() < 1e-15);
            assert!(
                close(row[0], lab.u_samples[k]),
                "{engine_method} step {k}: {} vs {}",
                row[0],
                lab.u_samples[k]
            );
        }
    }
}

#[test]
fn resolution_cap_reports_non_convergence() {
    let c = freewheel();
    let mut cfg = SchemeConfig::for_circuit(&c);
    cfg.max_resolution_iters = 1;
    match run(&c, &cfg) {
        Err(EngineError::NonConvergence { time, switches, .. }) => {
            assert_eq!(time, 2.5e-4);
            assert_eq!(switches, vec!["D1".to_string()]);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn naive_scheme_lags_by_at_most_two_steps() {
    for text in [
        include_str!("../fixtures/freewheel.ckt"),
        include_str!("../fixtures/buckboost_dcm.ckt"),
    ] {
        let c = circuit(text);
        let h = c.tran.h;
        let naive = run(
            &c,
            &SchemeConfig::for_circuit(&c).with_scheme(SchemeKind::Naive),
        )
        .unwrap();
        assert!(!naive.events.is_empty());
        for e in &naive.events.entries {
            let lag = e.lag();
            assert!(lag > 0.0 && lag <= 2.0 * h + 1e-15, "{e}");
        }
        let proposed = run(&c, &SchemeConfig::for_circuit(&c)).unwrap();
        assert!(proposed
            .events
            .entries
            .iter()
            .all(|e| e.lag().abs() < 1e-12));
    }
}

#[test]
fn switch_free_circuit_is_scheme_independent() {
    let c = circuit("V1 1 0 SIN mag=1 freq=50\nR1 1 2 0.1\nL1 2 3 0.005\nC1 3 0 1e-3\n.tran h=1e-4 tstop=0.05\n");
    let a = run(&c, &SchemeConfig::for_circuit(&c)).unwrap();
    let b = run(
        &c,
        &SchemeConfig::for_circuit(&c).with_scheme(SchemeKind::Naive),
    )
    .unwrap();
    assert_eq!(a.waveform, b.waveform);
    assert!(a.events.is_empty() && b.events.is_empty());
}

#[test]
fn buckboost_gate_edges_logged_exactly() {
    let c = circuit(include_str!("../fixtures/buckboost.ckt"));
    let out = run(&c, &SchemeConfig::for_circuit(&c)).unwrap();
    let s1: Vec<f64> = out.events.for_element("S1").map(|e| e.time).collect();
    assert_eq!(s1.len(), 20);
    for (k, t) in s1.iter().enumerate() {
        let want = (k / 2) as f64 * 0.2 + if k % 2 == 0 { 0.12 } else { 0.2 };
        assert!((t - want).abs() < 1e-12, "edge {k} at {t}, expected {want}");
    }
    assert!(out.stats.solver.max_kcl_residual <= 1e-9);
}

#[test]
fn mesh_resync_records_every_mesh_point() {
    let c = circuit(include_str!("../fixtures/buckboost.ckt"));
    let mut cfg = SchemeConfig::for_circuit(&c)
        .with_mesh_resync(true)
        .with_h(1e-3);
    cfg.tstop = 0.5;
    let out = run(&c, &cfg).unwrap();
    for k in 0..=500 {
        let t = k as f64 * 1e-3;
        assert!(
            out.waveform.times.iter().any(|&s| (s - t).abs() < 1e-12),
            "mesh point {t} missing"
        );
    }
}

#[test]
fn runs_are_deterministic() {
    let c = circuit(include_str!("../fixtures/rectifier.ckt"));
    let a = run(&c, &SchemeConfig::for_circuit(&c)).unwrap();
    let b = run(&c, &SchemeConfig::for_circuit(&c)).unwrap();
    assert_eq!(a.waveform, b.waveform);
    assert_eq!(a.events.to_string(), b.events.to_string());
}

#[test]
fn rectifier_starts_consistent() {
    let c = circuit(include_str!("../fixtures/rectifier.ckt"));
    let out = run(&c, &SchemeConfig::for_circuit(&c)).unwrap();
    let first: Vec<String> = out
        .events
        .entries
        .iter()
        .take(2)
        .map(ToString::to_string)
        .collect();
    assert!(
        first[0].starts_with("0.0000000000000000e0 D1 off->on"),
        "{first:?}"
    );
    assert!(
        first[1].starts_with("0.0000000000000000e0 D4 off->on"),
        "{first:?}"
    );
}

#[test]
fn voltage_source_loop_is_reported() {
    let c = circuit("V1 1 0 DC 1\nV2 1 0 DC 2\nR1 1 0 1\n.tran h=1e-3 tstop=1e-2\n");
    let err = run(&c, &SchemeConfig::for_circuit(&c)).unwrap_err();
    assert!(
        matches!(err, EngineError::Init(_) | EngineError::Singular { .. }),
        "{err}"
    );
}

#[test]
fn bad_configuration_rejected() {
    let c = freewheel();
    let mut cfg = SchemeConfig::for_circuit(&c);
    cfg.tstop = cfg.tstart;
    assert!(matches!(run(&c, &cfg), Err(EngineError::Config(_))));
    let cfg = SchemeConfig::for_circuit(&c).with_h(f64::NAN);
    assert!(matches!(run(&c, &cfg), Err(EngineError::Config(_))));
}
