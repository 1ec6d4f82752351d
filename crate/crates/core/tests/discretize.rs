use std::f64::consts::PI;

use autotune_core::controller::{load_structure, parse_structure, ControllerStructure, GeneralizedController};
use autotune_core::discretize::{discretize, discretize_prewarped, DtLpvController};
use autotune_core::frf::{FrequencyGrid, OperatingPoint};
use autotune_core::linalg::StateSpace;
use autotune_core::par::Execution;
use autotune_core::plant::{modal_transform, rb_decoupling, sample_frf_set, ModalPlant, SynthOptions};
use autotune_core::stability::{assess_stability, IntegratorDeclaration, StabilityConfig, Verdict};
use autotune_core::{CMat, RMat, C64};
use rustfft::FftPlanner;

/// Matrix-form bilinear transform with `α = ½`, as in the usual
/// continuous-to-discrete conversion routines.
fn bilinear(ss: &StateSpace, ts: f64) -> StateSpace {
    let n = ss.states();
    let eye = RMat::identity(n, n);
    let ima = (&eye - &ss.a * (0.5 * ts)).try_inverse().unwrap();
    let ad = &ima * (&eye + &ss.a * (0.5 * ts));
    let bd = &ima * &ss.b * ts;
    let cd = &ss.c * &ima;
    let dd = &ss.d + &ss.c * &bd * 0.5;
    StateSpace { a: ad, b: bd, c: cd, d: dd }
}

fn at_z(ss: &StateSpace, w: f64, ts: f64) -> CMat {
    ss.response(C64::from_polar(1.0, w * ts)).unwrap()
}

fn pid_notch() -> ControllerStructure {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/configs/demo_lpv_structure.json");
    load_structure(path).unwrap()
}

fn closed(st: &ControllerStructure, theta: &[f64], p: f64) -> StateSpace {
    st.lfr().unwrap().close(&st.phi(theta, &[p]).unwrap()).unwrap()
}

#[test]
fn r_operator_matches_matrix_bilinear_transform() {
    let st = pid_notch();
    let mut theta = st.initial().theta;
    // nonzero scheduling slopes
    for (d, v) in st.descriptors().iter().zip(theta.iter_mut()) {
        if d.coefficient.is_some() {
            *v = 40.0;
        }
    }
    let ts = 1e-4;
    let grid = FrequencyGrid::log_spaced(1.0, PI / ts * 0.99, 100).unwrap();
    for p in [-1.0, 0.5] {
        let ct = closed(&st, &theta, p);
        let dt = discretize(&ct, ts).unwrap();
        assert_eq!(dt.ct.a, ct.a);
        let frf = dt.dt_frf(&grid).unwrap();
        let oracle = bilinear(&ct, ts);
        for (k, &w) in grid.values().iter().enumerate() {
            let want = at_z(&oracle, w, ts);
            assert!((&frf.data[k] - &want).norm() <= 1e-10 * want.norm(), "ω = {w}");
        }
    }
}

#[test]
fn impulse_response_transform_matches_frequency_response() {
    // strictly stable controller: two leads and a notch
    let st = parse_structure(
        r#"{"channels": 1, "filters": [
            {"kind": "lead", "params": {"omega1": {"value": 50.0}, "omega2": {"value": 400.0}}},
            {"kind": "lead", "params": {"omega1": {"value": 80.0}, "omega2": {"value": 300.0}}},
            {"kind": "notch", "params": {"beta1": {"value": 0.02}, "beta2": {"value": 0.6}, "omega1": {"value": 700.0}, "omega2": {"value": 700.0}}}
        ]}"#,
    )
    .unwrap();
    let ct = st.lfr().unwrap().close(&st.phi(&st.initial().theta, &[]).unwrap()).unwrap();
    let ts = 1e-3;
    let dt = discretize(&ct, ts).unwrap();
    let n = 4096;
    let mut state = dt.zero_state();
    let mut h: Vec<rustfft::num_complex::Complex<f64>> = (0..n)
        .map(|k| {
            let u = if k == 0 { 1.0 } else { 0.0 };
            rustfft::num_complex::Complex::new(dt.step(&[u], &mut state)[0], 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut h);
    let bins: Vec<usize> = (1..n / 2).step_by(37).collect();
    let omegas: Vec<f64> = bins.iter().map(|&m| 2.0 * PI * m as f64 / (n as f64 * ts)).collect();
    let frf = dt.dt_frf(&FrequencyGrid::new(omegas).unwrap()).unwrap();
    for (i, &m) in bins.iter().enumerate() {
        let want = frf.data[i][(0, 0)];
        let got = C64::new(h[m].re, h[m].im);
        assert!((got - want).norm() <= 1e-8 * want.norm(), "bin {m}: {got} vs {want}");
    }
}

#[test]
fn halving_sample_time_quarters_the_error() {
    let st = pid_notch();
    let theta = st.initial().theta;
    let ct = closed(&st, &theta, 0.0);
    let w = 150.0;
    let exact = ct.response(C64::new(0.0, w)).unwrap();
    let err = |ts: f64| {
        let dt = discretize(&ct, ts).unwrap();
        let r = dt.dt_frf(&FrequencyGrid::new(vec![w, 2.0 * w]).unwrap()).unwrap();
        (&r.data[0] - &exact).norm() / exact.norm()
    };
    let (e1, e2, e3) = (err(4e-4), err(2e-4), err(1e-4));
    for ratio in [e1 / e2, e2 / e3] {
        assert!((3.8..4.2).contains(&ratio), "error ratio {ratio} ({e1}, {e2}, {e3})");
    }
}

fn notch_minimum(ct: &StateSpace, ts: f64, prewarp: Option<f64>, grid: &FrequencyGrid) -> f64 {
    let dt = discretize_prewarped(ct, ts, prewarp).unwrap();
    let frf = dt.dt_frf(grid).unwrap();
    let k = (0..grid.len()).min_by(|&a, &b| frf.data[a][(0, 0)].norm().total_cmp(&frf.data[b][(0, 0)].norm())).unwrap();
    grid.values()[k]
}

#[test]
fn discrete_notch_minimum_follows_frequency_warping() {
    let ts = 1e-3;
    let w1: f64 = 1500.0;
    let notch = |w: f64| {
        let st = parse_structure(&format!(
            r#"{{"channels": 1, "filters": [{{"kind": "notch", "params": {{"beta1": {{"value": 0.001}}, "beta2": {{"value": 0.5}},
                "omega1": {{"value": {w}, "bounds": [10, 1e5]}}, "omega2": {{"value": {w}, "bounds": [10, 1e5]}}}}}}]}}"#
        ))
        .unwrap();
        st.lfr().unwrap().close(&st.phi(&st.initial().theta, &[]).unwrap()).unwrap()
    };
    let grid = FrequencyGrid::log_spaced(500.0, 3000.0, 4000).unwrap();
    let step = |w: f64| {
        let k = grid.values().iter().position(|&g| g >= w).unwrap();
        grid.values()[k] - grid.values()[k - 1]
    };

    // plain Tustin moves the notch down to (2/Ts)·atan(ω1 Ts/2)
    let warped = 2.0 / ts * (w1 * ts / 2.0).atan();
    let got = notch_minimum(&notch(w1), ts, None, &grid);
    assert!((got - warped).abs() <= step(warped), "{got} vs {warped}");

    // a notch designed at (2/Ts)·tan(ω1 Ts/2) lands on ω1
    let prewarped = 2.0 / ts * (w1 * ts / 2.0).tan();
    let got = notch_minimum(&notch(prewarped), ts, None, &grid);
    assert!((got - w1).abs() <= step(w1), "{got} vs {w1}");

    // so does the unchanged notch when the step is prewarped at ω1
    let got = notch_minimum(&notch(w1), ts, Some(w1), &grid);
    assert!((got - w1).abs() <= step(w1), "{got} vs {w1}");
}

/// DT closed loop `u = −K y` of two bilinear realizations with feedthrough.
fn dt_closed_loop_radius(plant: &StateSpace, ctrl: &StateSpace) -> f64 {
    let (np, nk) = (plant.states(), ctrl.states());
    let ny = plant.outputs();
    let m = (RMat::identity(ny, ny) + &ctrl.d * &plant.d).try_inverse().unwrap();
    // u = −M (Ck xk + Dk Cp xp)
    let u_xp = -(&m * &ctrl.d * &plant.c);
    let u_xk = -(&m * &ctrl.c);
    let mut a = RMat::zeros(np + nk, np + nk);
    a.view_mut((0, 0), (np, np)).copy_from(&(&plant.a + &plant.b * &u_xp));
    a.view_mut((0, np), (np, nk)).copy_from(&(&plant.b * &u_xk));
    let y_xp = &plant.c + &plant.d * &u_xp;
    let y_xk = &plant.d * &u_xk;
    a.view_mut((np, 0), (nk, np)).copy_from(&(&ctrl.b * &y_xp));
    a.view_mut((np, np), (nk, nk)).copy_from(&(&ctrl.a + &ctrl.b * &y_xk));
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn discrete_time_verdict_matches_spectral_radius() {
    let ts = 2e-4;
    let plant = ModalPlant::demo();
    let grid = FrequencyGrid::log_spaced(2.0 * PI * 0.5, 2.0 * PI * 500.0, 400).unwrap();
    let p = OperatingPoint(vec![0.0]);
    let frfs =
        sample_frf_set(&plant, &grid, std::slice::from_ref(&p), SynthOptions { sample_time: Some(ts), ..Default::default() })
            .unwrap();
    let ss = modal_transform(&plant.with_stiffness_at(p.values())).unwrap();
    let pair = rb_decoupling(&ss, &p).unwrap();
    let ct_plant = StateSpace::new(
        ss.assembled_a(),
        ss.b(p.values()) * &pair.input,
        &pair.output * ss.c(p.values()),
        RMat::zeros(2, 2),
    )
    .unwrap();
    let dt_plant = bilinear(&ct_plant, ts);

    let st = pid_notch();
    let base = st.initial().theta;
    let kp: Vec<usize> = st.descriptors().iter().enumerate().filter(|(_, d)| d.filter == 0 && d.coefficient.is_none()).map(|(i, _)| i).collect();
    let mut decided = 0;
    let mut seen = [false; 2];
    for gain in [1.0, 0.3, 3.0, 0.01, 100.0] {
        let mut theta = base.clone();
        kp.iter().for_each(|&i| theta[i] *= gain);
        let params = GeneralizedController { theta: theta.clone() };
        let verdict = assess_stability(
            &frfs,
            &st,
            &params,
            &IntegratorDeclaration::default(),
            &StabilityConfig::default(),
            Execution::Sequential,
        )
        .unwrap()
        .remove(0);
        let dt_ctrl = DtLpvController::new(st.clone(), params, ts, None).unwrap().at(&[0.0]).unwrap().lambda_form();
        let radius = dt_closed_loop_radius(&dt_plant, &dt_ctrl);
        if verdict.verdict != Verdict::Undetermined {
            decided += 1;
            seen[verdict.stable as usize] = true;
            assert_eq!(verdict.stable, radius < 1.0, "gain ×{gain}: {:?}, spectral radius {radius}", verdict);
        }
    }
    assert!(decided >= 4);
    assert_eq!(seen, [true, true], "both outcomes should be exercised");
}
