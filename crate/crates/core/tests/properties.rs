use elmstream_core::metrics::{rmse, ConfusionCounts};
use elmstream_core::plant::{AprbsConfig, InputDistribution};
use elmstream_core::{
    batch_train, batch_train_weighted, build_regressors, generate_aprbs, imbalance_metrics, msap_predict,
    simulate_plant, solve_ridge, teacher_stream, ActivationKind, Dataset, ElmModel, HiddenLayer, Label, NarxConfig,
    Normalizer, OselmState, PlantConfig, SgelmConfig, SgelmState, StabilityMonitor, StepMatrix, WeightSpec,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn relative(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

const ACTIVATIONS: [ActivationKind; 4] = [
    ActivationKind::Sigmoid,
    ActivationKind::Sine,
    ActivationKind::RadialBasis,
    ActivationKind::Linear,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn batch_is_bit_deterministic(seed in any::<u64>(), n in 5usize..40, nh in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = Dataset::new(random_matrix(&mut rng, n, 3), random_matrix(&mut rng, n, 2), None).unwrap();
        let a = batch_train(&ds, &HiddenLayer::new(3, nh, ActivationKind::Sigmoid, seed).unwrap(), 0.01).unwrap();
        let b = batch_train(&ds, &HiddenLayer::new(3, nh, ActivationKind::Sigmoid, seed).unwrap(), 0.01).unwrap();
        let bits = |m: &ElmModel| m.output_weights().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn batch_solution_is_a_strict_minimum(seed in any::<u64>(), n in 2usize..=50, nh in 1usize..=10, ridge in 1e-3f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = Dataset::new(random_matrix(&mut rng, n, 2), random_matrix(&mut rng, n, 2), None).unwrap();
        let layer = HiddenLayer::new(2, nh, ActivationKind::Sigmoid, seed).unwrap();
        let w = batch_train(&ds, &layer, ridge).unwrap().output_weights().clone();
        let h = layer.feature_matrix(ds.inputs()).unwrap();
        let objective = |w: &DMatrix<f64>| (&h * w - ds.targets()).norm_squared() + ridge * w.norm_squared();
        let best = objective(&w);
        for _ in 0..100 {
            let d = random_matrix(&mut rng, nh, 2);
            let d = d.clone() / d.norm();
            prop_assert!(objective(&(&w + d * 1e-3)) > best);
        }
    }

    #[test]
    fn equal_weights_reduce_to_unweighted(seed in any::<u64>(), n in 30usize..60, nh in 1usize..5, g in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, n, 2);
        let y = random_matrix(&mut rng, n, 1);
        let layer = HiddenLayer::new(2, nh, ActivationKind::Sigmoid, seed).unwrap();
        // Every sample in the majority class: unit weights.
        let ds = Dataset::new(x.clone(), y.clone(), Some(vec![Label::Positive; n])).unwrap();
        let spec = WeightSpec::new(5.0, 2.0, Label::Negative).unwrap();
        let plain = batch_train(&ds, &layer, 0.1).unwrap();
        let weighted = batch_train_weighted(&ds, &layer, 0.1, &spec).unwrap();
        prop_assert!(relative(weighted.output_weights(), plain.output_weights()) <= 1e-10);
        // At λ = 0 any common weight cancels; sine features keep HᵀH well conditioned.
        let h = HiddenLayer::new(2, nh, ActivationKind::Sine, seed).unwrap().feature_matrix(&x).unwrap();
        let a = solve_ridge(&h, &y, 0.0, Some(&vec![g; n])).unwrap();
        let b = solve_ridge(&h, &y, 0.0, None).unwrap();
        prop_assert!(relative(&a, &b) <= 1e-10);
    }

    #[test]
    fn rls_matches_batch(seed in any::<u64>(), n in 60usize..=300, nh in 1usize..=50, ridge in 1e-3f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, n, 3);
        let y = random_matrix(&mut rng, n, 2);
        let ds = Dataset::new(x.clone(), y.clone(), None).unwrap();
        let layer = HiddenLayer::new(3, nh, ActivationKind::Sigmoid, seed).unwrap();
        let oracle = batch_train(&ds, &layer, ridge).unwrap();
        let n0 = 1 + (seed as usize) % 50;
        let mut os = OselmState::init(&ds.slice(0, n0).unwrap(), &layer, ridge).unwrap();
        for i in n0..n {
            os.update(&x.row(i).transpose(), &y.row(i).transpose()).unwrap();
        }
        let err = relative(os.model().output_weights(), oracle.output_weights());
        prop_assert!(err <= 1e-8, "relative error {:e}", err);
    }

    #[test]
    fn lyapunov_never_increases_for_convergent_steps(seed in any::<u64>(), nh in 1usize..6, frac in 0.05f64..0.99) {
        let layer = HiddenLayer::new(2, nh, ActivationKind::Sigmoid, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_star = random_matrix(&mut rng, nh, 2);
        let stream = teacher_stream(&layer, &w_star, InputDistribution::Uniform { lo: -2.0, hi: 2.0 }, 500, seed).unwrap();
        // Sigmoid features have ‖φ‖² < n_h, so γ < 1/n_h is convergent and keeps φᵀΓφ < 2.
        let gamma = frac / nh as f64;
        let mut sg = SgelmState::new(ElmModel::zeros(layer, 2).unwrap(), SgelmConfig::scalar(gamma)).unwrap();
        let mut mon = StabilityMonitor::new(StepMatrix::Scalar(gamma), Some(w_star));
        mon.start(sg.model().output_weights()).unwrap();
        for s in &stream {
            let e = sg.update(&s.x, &s.y).unwrap();
            mon.record(sg.model().output_weights(), &e).unwrap();
        }
        prop_assert_eq!(mon.lyapunov_increases(1e-12), 0);
    }

    #[test]
    fn regressors_never_see_the_future(seed in any::<u64>(), k in 3usize..30, nu in 1usize..4, ny in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = 40;
        let u = random_matrix(&mut rng, t, 2);
        let y = random_matrix(&mut rng, t, 1);
        let cfg = NarxConfig::new(nu, ny, 2, 1).unwrap();
        prop_assume!(k >= cfg.max_lag());
        let before = build_regressors(&u, &y, &cfg).unwrap();
        let mut u2 = u.clone();
        let mut y2 = y.clone();
        // Reverse every row at index ≥ k.
        for i in k..t {
            u2.set_row(i, &u.row(t - 1 - (i - k)));
            y2.set_row(i, &y.row(t - 1 - (i - k)));
        }
        let after = build_regressors(&u2, &y2, &cfg).unwrap();
        let find = |s: &elmstream_core::SampleStream| s.iter().find(|x| x.index == k).unwrap().x.clone();
        prop_assert_eq!(find(&before), find(&after));
    }

    #[test]
    fn gm_never_exceeds_ta(tp in 0u64..200, fn_ in 0u64..200, tn in 0u64..200, fp in 0u64..200) {
        prop_assume!(tp + fn_ > 0 && tn + fp > 0);
        let m = imbalance_metrics(&ConfusionCounts { tp, tn, fp, fn_ }).unwrap();
        prop_assert!(m.gm <= m.ta + 1e-15);
        if (m.tpr - m.tnr).abs() > 1e-9 {
            prop_assert!(m.gm < m.ta);
        } else {
            prop_assert!((m.gm - m.ta).abs() < 1e-9);
        }
    }

    #[test]
    fn streaming_counts_match_one_shot(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200), split in 0usize..200) {
        let lab = |b: bool| if b { Label::Positive } else { Label::Negative };
        let pairs: Vec<(Label, Label)> = pairs.into_iter().map(|(a, b)| (lab(a), lab(b))).collect();
        let one_shot = ConfusionCounts::from_pairs(pairs.iter().copied());
        let cut = split.min(pairs.len());
        let mut streamed = ConfusionCounts::default();
        for &(t, p) in &pairs[..cut] {
            streamed.record(t, p);
        }
        streamed.merge(&ConfusionCounts::from_pairs(pairs[cut..].iter().copied()));
        prop_assert_eq!(one_shot, streamed);
    }

    #[test]
    fn rmse_ignores_row_order(seed in any::<u64>(), n in 1usize..50, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(&mut rng, n, d);
        let b = random_matrix(&mut rng, n, d);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let pa = DMatrix::from_fn(n, d, |i, j| a[(order[i], j)]);
        let pb = DMatrix::from_fn(n, d, |i, j| b[(order[i], j)]);
        let (r1, r2) = (rmse(&a, &b).unwrap(), rmse(&pa, &pb).unwrap());
        prop_assert!((r1 - r2).abs() <= 1e-12 * r1.max(1.0));
    }

    #[test]
    fn normalizer_round_trip(seed in any::<u64>(), n in 2usize..50, d in 1usize..6, scale in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_matrix(&mut rng, n, d) * scale;
        let norm = match Normalizer::fit(&data) {
            Ok(n) => n,
            Err(_) => return Ok(()),
        };
        let z = norm.apply(&data).unwrap();
        prop_assert!(z.iter().all(|v| (-1.0..=1.0).contains(v)));
        let back = norm.invert(&z).unwrap();
        for (a, b) in back.iter().zip(data.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
        }
    }
}

#[test]
fn hidden_map_stays_in_activation_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for act in ACTIVATIONS {
        let layer = HiddenLayer::new(4, 16, act, 9).unwrap();
        let (lo, hi) = act.range();
        for _ in 0..100_000 / ACTIVATIONS.len() {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-50.0..50.0));
            let phi = layer.map(&x).unwrap();
            assert!(phi.iter().all(|v| *v >= lo && *v <= hi), "{act}: {phi}");
        }
    }
}

#[test]
fn weights_stay_within_lyapunov_bound() {
    let nh = 6;
    let layer = HiddenLayer::new(3, nh, ActivationKind::Sigmoid, 61).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let w_star = random_matrix(&mut rng, nh, 2);
    let w0 = random_matrix(&mut rng, nh, 2) * 3.0;
    let stream = teacher_stream(&layer, &w_star, InputDistribution::Uniform { lo: -1.0, hi: 1.0 }, 100_000, 63).unwrap();
    let gamma = 0.9 / nh as f64;
    let step = StepMatrix::Scalar(gamma);
    let mut sg = SgelmState::new(ElmModel::new(layer, w0.clone()).unwrap(), SgelmConfig::scalar(gamma)).unwrap();
    let mut mon = StabilityMonitor::new(step, Some(w_star));
    mon.start(&w0).unwrap();
    for s in &stream {
        let e = sg.update(&s.x, &s.y).unwrap();
        mon.record(sg.model().output_weights(), &e).unwrap();
    }
    // V ≥ ‖W̃‖²/λmax, so V non-increasing keeps ‖W − W₀‖ ≤ 2·sqrt(λmax·V₀).
    let bound = w0.norm() + 2.0 * (gamma * mon.lyapunov()[0]).sqrt();
    assert!(mon.all_finite());
    assert!(mon.max_weight_norm() <= bound, "{} > {bound}", mon.max_weight_norm());
}

#[test]
fn converged_model_predicts_held_out_teacher() {
    let nh = 8;
    let layer = HiddenLayer::new(3, nh, ActivationKind::Sine, 71).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let w_star = random_matrix(&mut rng, nh, 2);
    let dist = InputDistribution::Gaussian { mean: 0.0, std: 1.0 };
    let train = teacher_stream(&layer, &w_star, dist, 10_000, 73).unwrap();
    let held_out = teacher_stream(&layer, &w_star, dist, 1_000, 74).unwrap();
    let mut sg = SgelmState::new(ElmModel::zeros(layer, 2).unwrap(), SgelmConfig::scalar(1.0 / nh as f64)).unwrap();
    for s in &train {
        sg.update(&s.x, &s.y).unwrap();
    }
    let worst = held_out
        .iter()
        .map(|s| (&s.y - sg.model().predict(&s.x).unwrap()).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst:e}");
}

#[test]
fn msap_reproduces_an_exact_linear_plant() {
    // y(k) = A y(k−1) + B u(k−1), a NARX(1,1) model with identity features.
    let a = DMatrix::from_row_slice(2, 2, &[0.5, -0.2, 0.1, 0.3]);
    let b = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -0.5, 0.2, 0.7, 0.0]);
    let cfg = NarxConfig::new(1, 1, 3, 2).unwrap();
    let mut w = DMatrix::zeros(5, 2);
    w.view_mut((0, 0), (3, 2)).copy_from(&b.transpose());
    w.view_mut((3, 0), (2, 2)).copy_from(&a.transpose());
    let model = ElmModel::new(HiddenLayer::identity(5).unwrap(), w).unwrap();

    let horizon = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let u = random_matrix(&mut rng, horizon, 3);
    let mut y = DVector::from_vec(vec![0.3, -0.4]);
    let seed = DMatrix::from_row_slice(1, 2, y.as_slice());
    let mut truth = DMatrix::zeros(horizon, 2);
    for s in 0..horizon {
        y = &a * &y + &b * u.row(s).transpose();
        truth.set_row(s, &y.transpose());
    }
    let pred = msap_predict(&model, &u, &seed, horizon, &cfg).unwrap();
    assert!((pred - truth).amax() <= 1e-12);
}

#[test]
fn plant_is_deterministic() {
    let u = generate_aprbs(&AprbsConfig::unit(2_000, 3)).unwrap();
    let cfg = PlantConfig {
        noise_seed: 4,
        ..PlantConfig::default()
    };
    assert_eq!(simulate_plant(&cfg, &u).unwrap(), simulate_plant(&cfg, &u).unwrap());
    assert_eq!(u, generate_aprbs(&AprbsConfig::unit(2_000, 3)).unwrap());
}

#[test]
fn noiseless_plant_stays_bounded() {
    // With u₁ ≥ 0.2 the dropout fixed point is −(0.9·tanh(1.4) + 1.2)/0.4 ≈ −4.99.
    let mut a = AprbsConfig::unit(100_000, 8);
    a.lo[0] = 0.2;
    let u = generate_aprbs(&a).unwrap();
    let cfg = PlantConfig {
        sigma_noise: 0.0,
        ..PlantConfig::default()
    };
    let out = simulate_plant(&cfg, &u).unwrap();
    assert!(out.y.amax() < 5.0);
}

#[test]
fn minority_fraction_is_controllable() {
    for seed in 0..5 {
        let mut a = AprbsConfig::unit(10_000, seed);
        a.lo[0] = 0.2;
        let u = generate_aprbs(&a).unwrap();
        let cfg = PlantConfig {
            noise_seed: seed + 100,
            ..PlantConfig::default()
        };
        let f = simulate_plant(&cfg, &u).unwrap().minority_fraction();
        assert!((0.05..=0.25).contains(&f), "seed {seed}: {f}");
    }
}
