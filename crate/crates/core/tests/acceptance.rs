//! Acceptance checks. Each criterion prints one PASS or FAIL line; the
//! process exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pvcheb::cls_solver::{solve, QpProblem, SolverConfig};
use pvcheb::data_ingest::{clock_index, hours_of_day, AlignedSample, CloudSubtype, SplitKind, Splits, WeatherType};
use pvcheb::detrend::{compute_mean_profile, compute_scale, detrend, retrend, MeanDailyProfile, PowerScale};
use pvcheb::features::{chebyshev, FeatureIndex, NormalizationVector, CATALOG_SIZE, REGRESSOR_LEN};
use pvcheb::forecast::{
    combined_mse, predict_multi_step, EvalOptions, ForecastModel, PreparedSplit, WeatherModel, WeatherModels,
};
use pvcheb::pipeline::{evaluate_split, ingest, train_select, IngestOptions, TrainOptions, Trained};
use pvcheb::synthetic::{generate, generate_series, SyntheticSpec};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn chebyshev_correctness() -> Outcome {
    let closed: [(usize, fn(f64) -> f64); 10] = [
        (0, |_| 1.0),
        (1, |x| x),
        (2, |x| 2.0 * x * x - 1.0),
        (3, |x| 4.0 * x.powi(3) - 3.0 * x),
        (4, |x| 8.0 * x.powi(4) - 8.0 * x * x + 1.0),
        (5, |x| 16.0 * x.powi(5) - 20.0 * x.powi(3) + 5.0 * x),
        (6, |x| 32.0 * x.powi(6) - 48.0 * x.powi(4) + 18.0 * x * x - 1.0),
        (8, |x| {
            128.0 * x.powi(8) - 256.0 * x.powi(6) + 160.0 * x.powi(4) - 32.0 * x * x + 1.0
        }),
        (9, |x| {
            256.0 * x.powi(9) - 576.0 * x.powi(7) + 432.0 * x.powi(5) - 120.0 * x.powi(3) + 9.0 * x
        }),
        (10, |x| {
            512.0 * x.powi(10) - 1280.0 * x.powi(8) + 1120.0 * x.powi(6) - 400.0 * x.powi(4) + 50.0 * x * x - 1.0
        }),
    ];
    let grid: Vec<f64> = (0..1000).map(|i| -1.0 + 2.0 * i as f64 / 999.0).collect();
    let mut closed_err = 0.0f64;
    let mut trig_err = 0.0f64;
    for &x in &grid {
        for (n, f) in closed {
            closed_err = closed_err.max((chebyshev(n, x).unwrap() - f(x)).abs());
        }
        for n in 0..=10 {
            trig_err = trig_err.max((chebyshev(n, x).unwrap() - (n as f64 * x.acos()).cos()).abs());
        }
    }
    check(closed_err <= 1e-12, || format!("closed-form error {closed_err:e}"))?;
    check(trig_err <= 1e-9, || format!("trigonometric error {trig_err:e}"))?;
    Ok(format!("closed-form {closed_err:.1e}, trigonometric {trig_err:.1e}"))
}

/// Exhaustive search over a lattice covering the L1 ball, refined around the
/// best feasible lattice point. Only feasible points are scored, so the
/// result never undercuts the true minimum.
fn grid_oracle(p: &QpProblem, bound: f64) -> f64 {
    let n = p.n_features();
    let feasible = |a: &[f64]| {
        a.iter().map(|v| v.abs()).sum::<f64>() <= bound
            && p.apply(a).iter().zip(p.offsets()).all(|(ax, g)| ax + g >= 0.0)
    };
    let mut best = (p.objective(&vec![0.0; n]), vec![0.0; n]);
    let mut center = vec![0.0; n];
    let mut half = bound;
    let steps = 40usize;
    for _ in 0..8 {
        let h = 2.0 * half / steps as f64;
        let total = (steps + 1).pow(n as u32);
        for idx in 0..total {
            let mut rest = idx;
            let a: Vec<f64> = (0..n)
                .map(|j| {
                    let i = rest % (steps + 1);
                    rest /= steps + 1;
                    center[j] - half + h * i as f64
                })
                .collect();
            if feasible(&a) {
                let obj = p.objective(&a);
                if obj < best.0 {
                    best = (obj, a);
                }
            }
        }
        center = best.1.clone();
        half = 2.0 * h;
    }
    best.0
}

fn qp_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let config = SolverConfig::default();
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_violation = 0.0f64;
    let mut binding = 0;
    for case in 0..200 {
        let n = 1 + case % 3;
        let rows = rng.random_range(n..=10);
        let bound = rng.random_range(0.2..1.5);
        let features = (0..n).map(|j| FeatureIndex::polynomial(1, j)).collect();
        let a: Vec<f64> = (0..rows * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..rows)
            .map(|_| {
                if rng.random_bool(0.6) {
                    rng.random_range(0.0..0.3)
                } else {
                    rng.random_range(1.0..5.0)
                }
            })
            .collect();
        let p = QpProblem::new(features, a, b, g, Some(bound)).map_err(|e| e.to_string())?;
        let sol = solve(&p, &config).map_err(|e| format!("case {case}: {e}"))?;
        let oracle = grid_oracle(&p, bound);
        worst_gap = worst_gap.max(sol.objective - oracle);
        let slack_violation = p
            .apply(&sol.values)
            .iter()
            .zip(p.offsets())
            .fold(0.0f64, |m, (ax, g)| m.max(-(ax + g)));
        let l1_violation = (sol.l1_norm() - bound).max(0.0);
        worst_violation = worst_violation.max(slack_violation).max(l1_violation);
        if sol.kkt.active_rows > 0 || sol.kkt.l1_active {
            binding += 1;
        }
        check(sol.objective <= oracle + 1e-5, || {
            format!("case {case}: {} > oracle {oracle}", sol.objective)
        })?;
        check(worst_violation <= 1e-8, || {
            format!("case {case}: violation {worst_violation:e}")
        })?;
    }
    Ok(format!(
        "200 instances ({binding} with binding constraints), worst objective minus oracle {worst_gap:.1e}, worst violation {worst_violation:.1e}"
    ))
}

fn day_samples(
    start: NaiveDateTime,
    len: usize,
    mut fill: impl FnMut(usize, &mut AlignedSample),
) -> Vec<AlignedSample> {
    (0..len)
        .map(|i| {
            let ts = start + chrono::Duration::minutes(15 * i as i64);
            let mut s = AlignedSample {
                k: clock_index(&ts),
                timestamp: ts,
                power_kw: 0.0,
                temperature: 60.0,
                dew_point: 45.0,
                humidity: 50.0,
                wind_speed: 5.0,
                u5: hours_of_day(&ts),
                weather_type: WeatherType::Fair,
                cloud_subtype: CloudSubtype::None,
                alignment_gap_min: 0,
            };
            fill(i, &mut s);
            s
        })
        .collect()
}

fn start_at(hour: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2014, 3, 1)
        .unwrap()
        .and_hms_opt(hour, 0, 0)
        .unwrap()
}

fn recursive_boundedness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let horizon = 16;
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let mut models = WeatherModels::empty();
        for w in WeatherType::ALL {
            let count = rng.random_range(1..=8);
            let mut positions: Vec<usize> = Vec::new();
            while positions.len() < count {
                let p = rng.random_range(0..CATALOG_SIZE);
                if !positions.contains(&p) {
                    positions.push(p);
                }
            }
            positions.sort();
            let raw: Vec<f64> = (0..count).map(|_| rng.random_range(-1.0..1.0)).collect();
            let total: f64 = raw.iter().map(|v| v.abs()).sum();
            let target = if case % 4 == 0 { 1.0 } else { rng.random_range(0.0..1.0) };
            *models.get_mut(w) = WeatherModel {
                weather_type: w,
                features: positions
                    .iter()
                    .map(|&p| FeatureIndex::from_position(p).unwrap())
                    .collect(),
                coefficients: raw.iter().map(|v| v * target / total).collect(),
                fallback: false,
            };
        }
        let mut norm = [1.0; REGRESSOR_LEN];
        for v in norm.iter_mut().skip(1) {
            *v = rng.random_range(1.0..100.0);
        }
        let profile = MeanDailyProfile {
            values: (0..96).map(|_| rng.random_range(0.0..1.0)).collect(),
            support: vec![1; 96],
        };
        let scale = PowerScale { y_max: 5.0 };
        let model = ForecastModel::new("prop", scale, profile, NormalizationVector(norm), true, models);
        model.validate().map_err(|e| e.to_string())?;
        let samples = day_samples(start_at(6), horizon + 1, |_, s| {
            let w = WeatherType::ALL[rng.random_range(0..3)];
            s.weather_type = w;
            s.cloud_subtype = match (w, rng.random_range(0..3)) {
                (WeatherType::Cloudy, 0) => CloudSubtype::CloudyProper,
                (WeatherType::Cloudy, 1) => CloudSubtype::MostlyCloudy,
                (WeatherType::Cloudy, _) => CloudSubtype::PartlyCloudy,
                _ => CloudSubtype::None,
            };
            s.power_kw = rng.random_range(0.0..8.0);
            s.temperature = rng.random_range(-150.0..150.0);
            s.dew_point = rng.random_range(-150.0..150.0);
            s.humidity = rng.random_range(0.0..150.0);
            s.wind_speed = rng.random_range(0.0..150.0);
        });
        let data = PreparedSplit::for_model(samples, &model);
        let trace = predict_multi_step(&model, &data, 0, horizon);
        check(trace.steps.len() == horizon, || format!("case {case}: trace truncated"))?;
        for s in &trace.steps {
            worst = worst.max(s.yprime.abs());
        }
        check(worst <= 1.0 + 1e-12, || format!("case {case}: |y'| reached {worst}"))?;
    }
    Ok(format!("1000 models, horizon 16, max |y'| {worst:.6}"))
}

fn run_synthetic(spec: &SyntheticSpec) -> Result<(Splits, Trained), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (solar, weather) = generate(spec, dir.path()).map_err(|e| e.to_string())?;
    let (splits, _) = ingest(&solar, &weather, &IngestOptions::new(spec.split_spec())).map_err(|e| e.to_string())?;
    let options = TrainOptions {
        dataset_id: spec.dataset_id.clone(),
        ..TrainOptions::default()
    };
    let trained = train_select(&splits, &options).map_err(|e| e.to_string())?;
    Ok((splits, trained))
}

fn validation_mse(splits: &Splits, trained: &Trained) -> Result<f64, String> {
    let eval = evaluate_split(
        &trained.model,
        &splits.validation,
        SplitKind::Validation,
        4,
        true,
        EvalOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    Ok(eval.metrics.model.combined_mse_scaled)
}

fn planted_recovery() -> Outcome {
    let noisy = SyntheticSpec::recovery(0.01, 11);
    let (splits, trained) = run_synthetic(&noisy)?;
    let mse = validation_mse(&splits, &trained)?;
    check(mse <= 2e-4, || format!("sigma 0.01: validation MSE {mse:e} > 2e-4"))?;
    let clean = SyntheticSpec::recovery(0.0, 11);
    let (splits0, trained0) = run_synthetic(&clean)?;
    let mse0 = validation_mse(&splits0, &trained0)?;
    check(mse0 <= 1e-10, || format!("sigma 0: validation MSE {mse0:e} > 1e-10"))?;
    Ok(format!("validation MSE {mse:.3e} at sigma 0.01, {mse0:.3e} at sigma 0"))
}

fn metric_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y_max = 4.0;
    let profile_values: Vec<f64> = (0..96).map(|_| rng.random_range(0.1..0.9)).collect();
    let samples = day_samples(start_at(10), 14, |_, s| {
        s.power_kw = rng.random_range(0.0..y_max);
        s.temperature = rng.random_range(50.0..90.0);
    });
    let (a0, a1, a2) = (0.02, 0.6, -0.1);
    let mut models = WeatherModels::empty();
    *models.get_mut(WeatherType::Fair) = WeatherModel {
        weather_type: WeatherType::Fair,
        features: vec![
            FeatureIndex::CONSTANT,
            FeatureIndex::polynomial(1, 0),
            FeatureIndex::polynomial(2, 1),
        ],
        coefficients: vec![a0, a1, a2],
        fallback: false,
    };
    let mut norm = [1.0; REGRESSOR_LEN];
    norm[1] = 100.0;
    norm[2] = 100.0;
    norm[3] = 100.0;
    norm[4] = 100.0;
    norm[5] = 24.0;
    let profile = MeanDailyProfile {
        values: profile_values.clone(),
        support: vec![1; 96],
    };
    let model = ForecastModel::new(
        "toy",
        PowerScale { y_max },
        profile,
        NormalizationVector(norm),
        true,
        models,
    );
    let data = PreparedSplit::for_model(samples.clone(), &model);
    let got = combined_mse(&model, &data, 4).map_err(|e| e.to_string())?;

    let slot = |i: usize| 40 + i;
    let y = |i: usize| samples[i].power_kw / y_max;
    let origins = samples.len() - 4;
    let mut sum = 0.0;
    for k in 0..origins {
        let mut yp = (y(k) - profile_values[slot(k)]).clamp(-1.0, 1.0);
        for h in 1..=4 {
            let t = samples[k + h - 1].temperature / 100.0;
            yp = a0 + a1 * yp.clamp(-1.0, 1.0) + a2 * (2.0 * t * t - 1.0);
            let yhat = yp + profile_values[slot(k + h)];
            sum += (yhat - y(k + h)).powi(2);
        }
    }
    let oracle = sum / (4.0 * origins as f64);
    check(origins == 10, || format!("{origins} origins"))?;
    check((got - oracle).abs() <= 1e-12, || {
        format!("combined {got} vs literal {oracle}")
    })?;

    // Perfect predictions: one training day, zero model, profile from that day.
    let day = day_samples(start_at(8), 20, |i, s| s.power_kw = 1.0 + (i as f64 * 0.3).sin());
    let scale = compute_scale(&day).map_err(|e| e.to_string())?;
    let profile = compute_mean_profile(&day, &scale).map_err(|e| e.to_string())?;
    let zero = ForecastModel::new(
        "perfect",
        scale,
        profile,
        NormalizationVector([1.0; REGRESSOR_LEN]),
        true,
        WeatherModels::empty(),
    );
    let perfect = combined_mse(&zero, &PreparedSplit::for_model(day, &zero), 4).map_err(|e| e.to_string())?;
    check(perfect == 0.0, || format!("perfect predictions scored {perfect:e}"))?;
    Ok(format!(
        "10 origins, |difference| {:.1e}, perfect = 0",
        (got - oracle).abs()
    ))
}

fn monotonicity() -> Outcome {
    let (_, trained) = run_synthetic(&SyntheticSpec::recovery(0.01, 11))?;
    let report = &trained.report;
    check(report.is_monotone(), || {
        "validation scores increase somewhere".to_string()
    })?;
    let joint = report.joint.as_ref().ok_or("joint refinement did not run")?;
    check(joint.converged && joint.passes <= 50, || {
        format!("joint: {} passes, converged {}", joint.passes, joint.converged)
    })?;
    let adopted: usize = report.weather.iter().map(|w| w.one_step_scores.len() - 1).sum();
    Ok(format!(
        "{adopted} per-weather steps and {} joint steps non-increasing, {} passes",
        joint.scores.len() - 1,
        joint.passes
    ))
}

fn detrend_round_trip() -> Outcome {
    let spec = SyntheticSpec::recovery(0.01, 21);
    let data = generate_series(&spec).map_err(|e| e.to_string())?;
    let train_days = spec.train_days * 96;
    let train = &data.samples[..train_days];
    let scale = compute_scale(train).map_err(|e| e.to_string())?;
    let profile = compute_mean_profile(train, &scale).map_err(|e| e.to_string())?;
    let dev = detrend(&data.samples, &scale, &profile);
    let mut round = 0.0f64;
    let mut checked = 0;
    for (s, &d) in data.samples.iter().zip(&dev.raw) {
        if d.abs() <= 1.0 {
            round = round.max((retrend(d, s.slot(), &scale, &profile) - s.power_kw).abs());
            checked += 1;
        }
    }
    check(round <= 1e-12, || format!("round-trip error {round:e}"))?;
    let mut sums = [0.0; 96];
    let mut counts = [0usize; 96];
    for (s, &d) in train.iter().zip(&dev.raw) {
        sums[s.slot()] += d;
        counts[s.slot()] += 1;
    }
    let worst_mean = (0..96).map(|i| (sums[i] / counts[i] as f64).abs()).fold(0.0, f64::max);
    check(worst_mean <= 1e-12, || format!("training slot mean {worst_mean:e}"))?;
    Ok(format!(
        "{checked} samples, round-trip {round:.1e}, slot means {worst_mean:.1e}"
    ))
}

fn baseline_dominance() -> Outcome {
    let spec = SyntheticSpec::fair_only(0.02, 31);
    let (splits, trained) = run_synthetic(&spec)?;
    let eval = evaluate_split(
        &trained.model,
        &splits.test,
        SplitKind::Test,
        4,
        true,
        EvalOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let model = eval.metrics.model.combined_mse_scaled;
    let pss = eval.metrics.persistence.combined_mse_scaled;
    let gain = 1.0 - model / pss;
    check(gain >= 0.3, || {
        format!("model {model:e} vs persistence {pss:e}: {:.1}% better", 100.0 * gain)
    })?;
    Ok(format!(
        "test MSE {model:.3e} vs persistence {pss:.3e} ({:.1}% lower)",
        100.0 * gain
    ))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "chebyshev-correctness",
            limit: Duration::from_secs(1),
            run: chebyshev_correctness,
        },
        Criterion {
            name: "qp-oracle-equivalence",
            limit: Duration::from_secs(30),
            run: qp_oracle_equivalence,
        },
        Criterion {
            name: "recursive-boundedness",
            limit: Duration::from_secs(10),
            run: recursive_boundedness,
        },
        Criterion {
            name: "planted-model-recovery",
            limit: Duration::from_secs(120),
            run: planted_recovery,
        },
        Criterion {
            name: "metric-fidelity",
            limit: Duration::MAX,
            run: metric_fidelity,
        },
        Criterion {
            name: "selection-monotonicity",
            limit: Duration::MAX,
            run: monotonicity,
        },
        Criterion {
            name: "detrend-round-trip",
            limit: Duration::MAX,
            run: detrend_round_trip,
        },
        Criterion {
            name: "baseline-dominance",
            limit: Duration::from_secs(60),
            run: baseline_dominance,
        },
    ];
    let mut failed = 0;
    for c in criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > c.limit => Err(format!("{msg}; took {elapsed:.2?}, limit {:?}", c.limit)),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS {} ({msg}; {elapsed:.2?})", c.name),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} ({msg})", c.name);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
