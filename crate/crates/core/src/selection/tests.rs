use super::*;
use crate::data_ingest::CloudSubtype;
use crate::features::{feature_row, NormalizedRegressor, RowMeta, REGRESSOR_LEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Random normalized regressors with targets from `truth` plus noise.
fn matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    truth: &[(FeatureIndex, f64)],
    sigma: f64,
    tweak: impl Fn(&mut [f64; REGRESSOR_LEN]),
) -> FeatureMatrix {
    let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
    let mut values = Vec::new();
    let mut meta = Vec::new();
    for r in 0..rows {
        let mut phi = [0.0; REGRESSOR_LEN];
        phi.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        tweak(&mut phi);
        let u5 = rng.random_range(6.0..18.0);
        let row = feature_row(&NormalizedRegressor(phi), u5, CloudSubtype::None);
        let clean: f64 = truth.iter().map(|(f, a)| a * row[f.position()]).sum();
        let target = clean + if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
        values.extend_from_slice(&row);
        meta.push(RowMeta {
            sample_index: r,
            k: r as i64,
            weather: WeatherType::Fair,
            target,
            profile_next: 10.0,
        });
    }
    FeatureMatrix::from_rows(values, meta).unwrap()
}

fn fitter(train: &FeatureMatrix) -> Fitter<'_> {
    Fitter {
        train,
        l1_bound: Some(1.0),
        solver: SolverConfig::default(),
    }
}

#[test]
fn first_forward_step_finds_the_planted_feature() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let planted = FeatureIndex::polynomial(2, 3);
    let train = matrix(&mut rng, 200, &[(planted, 0.4)], 0.0, |_| {});
    let val = matrix(&mut rng, 100, &[(planted, 0.4)], 0.0, |_| {});
    let score = |c: &Coefficients| Ok(one_step_mse(&val, c));
    let mut state = SelectionState::default();
    let mut inc = Incumbent::empty(one_step_mse(&val, &Coefficients::empty()));
    let config = SelectionConfig::default();
    let out = forward_step(
        &mut state,
        &mut inc,
        &FeatureSet::new().complement(),
        &fitter(&train),
        &score,
        &config,
    )
    .unwrap();

    // Brute-force each candidate's single-feature least-squares score.
    let mut best = (f64::INFINITY, FeatureIndex::CONSTANT);
    for f in FeatureIndex::catalog() {
        let (mut xy, mut xx) = (0.0, 0.0);
        for r in 0..train.n_rows() {
            let x = train.get(r, f);
            xy += x * train.rows[r].target;
            xx += x * x;
        }
        let a = (xy / xx).clamp(-1.0, 1.0);
        let mse = (0..val.n_rows())
            .map(|r| (a * val.get(r, f) - val.rows[r].target).powi(2))
            .sum::<f64>()
            / val.n_rows() as f64;
        if mse < best.0 {
            best = (mse, f);
        }
    }
    assert_eq!(best.1, planted);
    match out {
        StepOutcome::Adopted { feature, score } => {
            assert_eq!(feature, planted);
            assert!(score < 1e-20);
        }
        StepOutcome::NoImprovement => panic!("nothing adopted"),
    }
    assert_eq!(inc.features.as_slice(), &[planted]);
    assert_eq!(state.qp_solves, crate::features::CATALOG_SIZE);
}

#[test]
fn worsening_candidates_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = FeatureIndex::polynomial(1, 1);
    let train = matrix(&mut rng, 100, &[(f, 0.5)], 0.0, |_| {});
    let val = matrix(&mut rng, 100, &[(f, -0.5)], 0.0, |_| {});
    let score = |c: &Coefficients| Ok(one_step_mse(&val, c));
    let mut state = SelectionState::default();
    let mut inc = Incumbent::empty(one_step_mse(&val, &Coefficients::empty()));
    let out = forward_step(
        &mut state,
        &mut inc,
        &[f],
        &fitter(&train),
        &score,
        &SelectionConfig::default(),
    )
    .unwrap();
    assert_eq!(out, StepOutcome::NoImprovement);
    assert!(inc.features.is_empty());
}

#[test]
fn ties_go_to_the_lower_catalog_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let copy = |phi: &mut [f64; REGRESSOR_LEN]| phi[2] = phi[1];
    let a = FeatureIndex::polynomial(1, 1);
    let b = FeatureIndex::polynomial(1, 2);
    let train = matrix(&mut rng, 100, &[(a, 0.3)], 0.0, copy);
    let val = matrix(&mut rng, 50, &[(a, 0.3)], 0.0, copy);
    let score = |c: &Coefficients| Ok(one_step_mse(&val, c));
    let mut state = SelectionState::default();
    let mut inc = Incumbent::empty(one_step_mse(&val, &Coefficients::empty()));
    let out = forward_step(
        &mut state,
        &mut inc,
        &[b, a],
        &fitter(&train),
        &score,
        &SelectionConfig::default(),
    )
    .unwrap();
    assert!(a < b);
    assert!(matches!(out, StepOutcome::Adopted { feature, .. } if feature == a));
}

#[test]
fn near_duplicate_feature_is_eliminated() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = FeatureIndex::polynomial(1, 1);
    let g = FeatureIndex::polynomial(1, 2);
    // On training data g shadows f closely; on validation it is unrelated.
    let train = matrix(&mut rng, 300, &[(f, 0.5)], 0.02, |phi| {
        phi[2] = (phi[1] + 0.05 * phi[2]).clamp(-1.0, 1.0)
    });
    let val = matrix(&mut rng, 200, &[(f, 0.5)], 0.0, |_| {});
    let score = |c: &Coefficients| Ok(one_step_mse(&val, c));
    let fit = fitter(&train);
    let set = FeatureSet::from_features([f, g]);
    let coefficients = fit.fit(&set).unwrap().unwrap();
    let mut inc = Incumbent {
        score: one_step_mse(&val, &coefficients),
        features: set,
        coefficients,
    };
    let mut state = SelectionState::default();
    let out = backward_step(&mut state, &mut inc, &fit, &score, &SelectionConfig::default()).unwrap();
    assert!(
        matches!(out, StepOutcome::Adopted { feature, .. } if feature == g),
        "{out:?}"
    );
    assert_eq!(inc.features.as_slice(), &[f]);
}

#[test]
fn singleton_whose_removal_hurts_is_kept() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = FeatureIndex::polynomial(3, 4);
    let train = matrix(&mut rng, 100, &[(f, 0.5)], 0.0, |_| {});
    let val = matrix(&mut rng, 100, &[(f, 0.5)], 0.0, |_| {});
    let fit = fitter(&train);
    let set = FeatureSet::from_features([f]);
    let coefficients = fit.fit(&set).unwrap().unwrap();
    let score = |c: &Coefficients| Ok(one_step_mse(&val, c));
    let mut inc = Incumbent {
        score: one_step_mse(&val, &coefficients),
        features: set,
        coefficients,
    };
    let out = backward_step(
        &mut SelectionState::default(),
        &mut inc,
        &fit,
        &score,
        &SelectionConfig::default(),
    )
    .unwrap();
    assert_eq!(out, StepOutcome::NoImprovement);
}

fn run_algorithm1(train: &FeatureMatrix, val: &FeatureMatrix) -> (WeatherSelection, Coefficients, SelectionState) {
    let mut state = SelectionState::default();
    let (sel, coeffs) = algorithm1(
        train,
        val,
        WeatherType::Fair,
        Some(1.0),
        &SolverConfig::default(),
        &SelectionConfig::default(),
        &mut state,
    )
    .unwrap();
    (sel, coeffs, state)
}

#[test]
fn sparse_planted_model_is_recovered_to_the_noise_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let truth = [
        (FeatureIndex::polynomial(1, 0), 0.3),
        (FeatureIndex::polynomial(2, 3), -0.2),
        (FeatureIndex::polynomial(4, 1), 0.15),
    ];
    let sigma = 0.01;
    let train = matrix(&mut rng, 600, &truth, sigma, |_| {});
    let val = matrix(&mut rng, 300, &truth, sigma, |_| {});
    let (sel, _, state) = run_algorithm1(&train, &val);
    let mse = *sel.one_step_scores.last().unwrap();
    assert!(mse <= 2.0 * sigma * sigma, "mse {mse}, set {}", sel.features);
    for (f, _) in truth {
        assert!(sel.features.contains(f), "{f} missing from {}", sel.features);
    }
    assert!(sel.one_step_scores.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(state.history.len(), sel.one_step_scores.len() - 1);
}

#[test]
fn zero_targets_select_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let train = matrix(&mut rng, 50, &[], 0.0, |_| {});
    let val = matrix(&mut rng, 50, &[], 0.0, |_| {});
    let (sel, coeffs, _) = run_algorithm1(&train, &val);
    assert!(sel.features.is_empty());
    assert!(coeffs.values.is_empty());
    assert_eq!(sel.one_step_scores, vec![0.0]);
}

#[test]
fn pure_noise_stays_near_the_noise_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let train = matrix(&mut rng, 400, &[], 0.05, |_| {});
    let val = matrix(&mut rng, 400, &[], 0.05, |_| {});
    let (sel, _, _) = run_algorithm1(&train, &val);
    let variance = val.targets().iter().map(|t| t * t).sum::<f64>() / val.n_rows() as f64;
    let last = *sel.one_step_scores.last().unwrap();
    assert!(last <= variance && last >= 0.8 * variance, "{last} vs {variance}");
}

#[test]
fn missing_weather_type_falls_back() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let train = matrix(&mut rng, 50, &[], 0.0, |_| {});
    let val = matrix(&mut rng, 50, &[], 0.0, |_| {});
    let mut state = SelectionState::default();
    let (sel, coeffs) = algorithm1(
        &train,
        &val,
        WeatherType::Haze,
        Some(1.0),
        &SolverConfig::default(),
        &SelectionConfig::default(),
        &mut state,
    )
    .unwrap();
    assert!(sel.fallback);
    assert_eq!(sel.fallback_reason.as_deref(), Some("no training rows"));
    assert!(coeffs.values.is_empty());
}

#[test]
fn algorithm1_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let truth = [(FeatureIndex::polynomial(1, 0), 0.5), (FeatureIndex::CONSTANT, 0.05)];
    let train = matrix(&mut rng, 300, &truth, 0.02, |_| {});
    let val = matrix(&mut rng, 200, &truth, 0.02, |_| {});
    let (a, ca, sa) = run_algorithm1(&train, &val);
    let (b, cb, sb) = run_algorithm1(&train, &val);
    assert_eq!(a, b);
    assert_eq!(ca, cb);
    assert_eq!(sa, sb);
}

#[test]
fn feature_set_ordering() {
    let a = FeatureIndex::polynomial(3, 2);
    let b = FeatureIndex::CONSTANT;
    let set = FeatureSet::from_features([a, b, a]);
    assert_eq!(set.as_slice(), &[b, a]);
    assert_eq!(set.complement().len(), crate::features::CATALOG_SIZE - 2);
    assert_eq!(set.without(b).as_slice(), &[a]);
}
