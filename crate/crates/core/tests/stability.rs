use autotune_core::controller::{load_structure, parse_structure, GeneralizedController};
use autotune_core::frf::{FrequencyGrid, OperatingPoint};
use autotune_core::linalg::StateSpace;
use autotune_core::par::Execution;
use autotune_core::plant::{modal_transform, rb_decoupling, sample_frf_set, ModalPlant, SynthOptions};
use autotune_core::stability::{assess_stability, factorized_images, IntegratorDeclaration, StabilityConfig, Verdict};
use autotune_core::{CMat, RMat, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn factor_product_equals_return_difference_determinant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let st = parse_structure(
        r#"{"channels": 3, "filters": [
            {"kind": "mixing", "params": {"m": [{"value": 1.0}, {"value": 0.2}, {"value": -0.1},
                                                 {"value": 0.3}, {"value": 0.9}, {"value": 0.05},
                                                 {"value": 0.0}, {"value": -0.4}, {"value": 1.1}]}},
            {"kind": "lead", "params": {"omega1": {"value": 3.0}, "omega2": {"value": 40.0}}}
        ]}"#,
    )
    .unwrap();
    let grid = FrequencyGrid::log_spaced(0.1, 1000.0, 60).unwrap();
    let points: Vec<C64> = grid.values().iter().map(|&w| C64::new(0.0, w)).collect();
    let k = st.freeze(&st.initial().theta, &[], &points).unwrap();
    let plant: Vec<CMat> =
        (0..grid.len()).map(|_| CMat::from_fn(3, 3, |_, _| C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))).collect();
    let images = factorized_images(&plant, &k, &grid).unwrap();
    for (i, p) in plant.iter().enumerate() {
        let full = (CMat::identity(3, 3) + p * k.matrix(i)).determinant();
        let product = images.mimo[i] * images.siso.iter().map(|s| s[i]).product::<C64>();
        assert!((full - product).norm() <= 1e-10 * full.norm().max(1.0), "{full} vs {product}");
    }
}

/// Continuous closed loop `u = −K y` (strictly proper plant).
fn ct_closed_loop_poles(plant: &StateSpace, ctrl: &StateSpace) -> Vec<C64> {
    let (np, nk) = (plant.states(), ctrl.states());
    let mut a = RMat::zeros(np + nk, np + nk);
    a.view_mut((0, 0), (np, np)).copy_from(&(&plant.a - &plant.b * &ctrl.d * &plant.c));
    a.view_mut((0, np), (np, nk)).copy_from(&(-(&plant.b * &ctrl.c)));
    a.view_mut((np, 0), (nk, np)).copy_from(&(&ctrl.b * &plant.c));
    a.view_mut((np, np), (nk, nk)).copy_from(&ctrl.a);
    a.complex_eigenvalues().iter().copied().collect()
}

#[test]
fn verdicts_match_closed_loop_eigenvalues_on_demo_plant() {
    let plant = ModalPlant::demo();
    let grid = FrequencyGrid::log_spaced(2.0 * std::f64::consts::PI * 0.5, 2.0 * std::f64::consts::PI * 500.0, 400).unwrap();
    let points = [OperatingPoint(vec![-1.0]), OperatingPoint(vec![1.0])];
    let frfs = sample_frf_set(&plant, &grid, &points, SynthOptions::default()).unwrap();
    let st = load_structure(concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/configs/demo_lti_structure.json")).unwrap();
    let base = st.initial().theta;
    let mut seen = [false; 2];
    for gain in [1.0, 0.5, 2.0, 0.02, 50.0] {
        let mut theta = base.clone();
        for (d, v) in st.descriptors().iter().zip(theta.iter_mut()) {
            if d.filter == 0 {
                *v *= gain;
            }
        }
        let params = GeneralizedController { theta: theta.clone() };
        let verdicts =
            assess_stability(&frfs, &st, &params, &IntegratorDeclaration::default(), &StabilityConfig::default(), Execution::Sequential)
                .unwrap();
        for (p, v) in points.iter().zip(&verdicts) {
            let ss = modal_transform(&plant.with_stiffness_at(p.values())).unwrap();
            let pair = rb_decoupling(&ss, p).unwrap();
            let ct = StateSpace::new(ss.assembled_a(), ss.b(p.values()) * &pair.input, &pair.output * ss.c(p.values()), RMat::zeros(2, 2))
                .unwrap();
            let k = st.lfr().unwrap().close(&st.phi(&theta, &st.point_for(p.values())).unwrap()).unwrap();
            let alpha = ct_closed_loop_poles(&ct, &k).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            if v.verdict != Verdict::Undetermined {
                assert_eq!(v.stable, alpha < 0.0, "gain ×{gain} at p = {:?}: {v:?}, spectral abscissa {alpha}", p.values());
                seen[v.stable as usize] = true;
            }
        }
    }
    assert_eq!(seen, [true, true]);
}
