use autotune_core::controller::{parse_structure, ControllerStructure};
use autotune_core::C64;
use proptest::prelude::*;

fn pid_notch() -> ControllerStructure {
    parse_structure(
        r#"{
        "channels": 2, "np": 1,
        "filters": [
            {"kind": "pi", "params": {"kp": [{"value": 2.5e6, "bounds": [1e3, 1e8]}, {"value": 1.7e6, "bounds": [1e3, 1e8]}]}},
            {"kind": "lead", "params": {"omega1": {"value": 25.0}, "omega2": {"value": 145.0}}},
            {"kind": "lead", "params": {"omega1": {"value": 31.0}, "omega2": {"value": 180.0}}},
            {"kind": "lead", "params": {"omega1": {"value": 40.0}, "omega2": {"value": 120.0}}},
            {"kind": "notch", "params": {
                "beta1": {"value": 0.05}, "beta2": {"value": 0.5},
                "omega1": [{"value": 600.0, "scheduling": true, "slope": 60.0, "slope_bounds": [-200, 200]},
                           {"value": 900.0, "scheduling": true, "slope": -45.0, "slope_bounds": [-200, 200]}],
                "omega2": [{"value": 620.0, "scheduling": true, "slope": 50.0, "slope_bounds": [-200, 200]},
                           {"value": 880.0}]
            }}
        ]}"#,
    )
    .unwrap()
}

fn lead(s: C64, w1: f64, w2: f64) -> C64 {
    (s + w1) / (s + w2)
}

fn notch(s: C64, b1: f64, b2: f64, w1: f64, w2: f64) -> C64 {
    (s * s + 2.0 * b1 * w1 * s + w1 * w1) / (s * s + 2.0 * b2 * w2 * s + w2 * w2)
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn cascade_equals_product_of_filters() {
    let st = pid_notch();
    let theta = st.initial().theta;
    let points: Vec<C64> = [0.3, 7.0, 60.0, 598.0, 640.0, 905.0, 1.2e4].iter().map(|&w| C64::new(0.0, w)).collect();
    for p in [-1.0, 0.0, 0.6] {
        let k = st.freeze(&theta, &[p], &points).unwrap();
        assert!(k.diagonal);
        for (i, &s) in points.iter().enumerate() {
            let leads = lead(s, 25.0, 145.0) * lead(s, 31.0, 180.0) * lead(s, 40.0, 120.0);
            let ch0 = 2.5e6 / s * leads * notch(s, 0.05, 0.5, 600.0 + 60.0 * p, 620.0 + 50.0 * p);
            let ch1 = 1.7e6 / s * leads * notch(s, 0.05, 0.5, 900.0 - 45.0 * p, 880.0);
            assert!(rel(k.entry(i, 0, 0), ch0) < 1e-12, "p = {p}, s = {s}");
            assert!(rel(k.entry(i, 1, 1), ch1) < 1e-12, "p = {p}, s = {s}");
            assert_eq!(k.entry(i, 0, 1), C64::new(0.0, 0.0));
        }
    }
}

#[test]
fn parallel_pi_and_unit_gain() {
    let st = parse_structure(
        r#"{"channels": 1, "interconnect": "parallel",
            "filters": [{"kind": "pi", "params": {"kp": {"value": 40.0}}},
                        {"kind": "gain", "params": {"k": {"value": 1.0}}}]}"#,
    )
    .unwrap();
    let points: Vec<C64> = [0.1, 1.0, 40.0, 900.0].iter().map(|&w| C64::new(0.0, w)).collect();
    let k = st.freeze(&st.initial().theta, &[], &points).unwrap();
    for (i, &s) in points.iter().enumerate() {
        let want = 40.0 / s + 1.0;
        assert!(rel(k.entry(i, 0, 0), want) < 1e-14);
    }
}

#[test]
fn frozen_evaluation_matches_closed_linear_fractional_form() {
    let st = pid_notch();
    let theta = st.initial().theta;
    let lfr = st.lfr().unwrap();
    let points: Vec<C64> = [0.5, 33.0, 611.0, 4000.0].iter().map(|&w| C64::new(0.0, w)).collect();
    for p in [-0.8, 0.25, 1.0] {
        let k = st.freeze(&theta, &[p], &points).unwrap();
        let closed = lfr.close(&st.phi(&theta, &[p]).unwrap()).unwrap();
        assert_eq!(closed.states(), 2 * (1 + 3 + 2));
        for (i, &s) in points.iter().enumerate() {
            let full = closed.response(s).unwrap();
            let frozen = k.matrix(i);
            assert!((&full - &frozen).norm() <= 1e-10 * full.norm(), "p = {p}, s = {s}");
        }
    }
}

#[test]
fn full_block_controller_matches_closed_form() {
    let st = parse_structure(
        r#"{"channels": 2,
            "filters": [{"kind": "mixing", "params": {"m": [{"value": 1.0}, {"value": 0.3}, {"value": -0.2}, {"value": 0.8}]}},
                        {"kind": "lead", "params": {"omega1": {"value": 10.0}, "omega2": {"value": 50.0}}},
                        {"kind": "pi", "params": {"kp": {"value": 20.0}}}]}"#,
    )
    .unwrap();
    assert!(!st.is_diagonal());
    let theta = st.initial().theta;
    let points: Vec<C64> = [0.2, 9.0, 77.0].iter().map(|&w| C64::new(0.0, w)).collect();
    let k = st.freeze(&theta, &[], &points).unwrap();
    assert!(!k.diagonal);
    let closed = st.lfr().unwrap().close(&st.phi(&theta, &[]).unwrap()).unwrap();
    let m = [[1.0, 0.3], [-0.2, 0.8]];
    for (i, &s) in points.iter().enumerate() {
        let full = closed.response(s).unwrap();
        let g = 20.0 / s * lead(s, 10.0, 50.0);
        for r in 0..2 {
            for c in 0..2 {
                // diagonal filters act after the mixing matrix: K = diag(g)·M
                let want = g * m[r][c];
                assert!((k.entry(i, r, c) - want).norm() <= 1e-12 * g.norm());
                assert!((full[(r, c)] - want).norm() <= 1e-10 * g.norm());
            }
        }
    }
}

#[test]
fn tuned_parameters_round_trip_through_structure_file() {
    let st = pid_notch();
    let mut theta = st.initial().theta;
    theta.iter_mut().enumerate().for_each(|(i, v)| *v *= 1.0 + 0.01 * i as f64);
    let file = st.to_file(&theta).unwrap();
    let text = serde_json::to_string(&file).unwrap();
    let back = parse_structure(&text).unwrap();
    assert_eq!(back.initial().theta, theta);
    assert_eq!(back.descriptors().len(), st.descriptors().len());
}

proptest! {
    #[test]
    fn lead_closure_matches_transfer(w1 in 0.1f64..1e4, w2 in 0.1f64..1e4, w in 1e-2f64..1e5) {
        let st = parse_structure(&format!(
            r#"{{"channels": 1, "filters": [{{"kind": "lead", "params": {{"omega1": {{"value": {w1}, "bounds": [0.01, 1e5]}}, "omega2": {{"value": {w2}, "bounds": [0.01, 1e5]}}}}}}]}}"#
        )).unwrap();
        let s = C64::new(0.0, w);
        let k = st.freeze(&st.initial().theta, &[], &[s]).unwrap();
        prop_assert!(rel(k.entry(0, 0, 0), lead(s, w1, w2)) < 1e-12);
    }

    #[test]
    fn notch_closure_matches_transfer(b1 in 0.0f64..1.0, b2 in 0.01f64..1.0, w1 in 10.0f64..5e3, w2 in 10.0f64..5e3, w in 1.0f64..1e4) {
        let st = parse_structure(&format!(
            r#"{{"channels": 1, "filters": [{{"kind": "notch", "params": {{
                "beta1": {{"value": {b1}, "bounds": [0.0, 1.0]}}, "beta2": {{"value": {b2}, "bounds": [0.001, 1.0]}},
                "omega1": {{"value": {w1}, "bounds": [1.0, 1e4]}}, "omega2": {{"value": {w2}, "bounds": [1.0, 1e4]}}}}}}]}}"#
        )).unwrap();
        let s = C64::new(0.0, w);
        let k = st.freeze(&st.initial().theta, &[], &[s]).unwrap();
        let want = notch(s, b1, b2, w1, w2);
        prop_assert!((k.entry(0, 0, 0) - want).norm() <= 1e-10 * (1.0 + want.norm()));
    }
}
