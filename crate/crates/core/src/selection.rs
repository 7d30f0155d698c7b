//! Wrapper feature selection. Each weather type gets a greedy forward /
//! backward search scored on its own one-step validation error; the three
//! models are then refined together against the combined multi-step error.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cls_solver::{solve, Coefficients, QpProblem, SolveError, SolverConfig};
use crate::data_ingest::WeatherType;
use crate::error::{Error, Result};
use crate::features::{FeatureIndex, FeatureMatrix, CATALOG_SIZE};
use crate::forecast::{combined_mse, ForecastModel, PreparedSplit, WeatherModel};

pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_PASSES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// A step is adopted only if it lowers the score by more than this fraction.
    pub rel_tol: f64,
    /// Cap on joint refinement passes.
    pub max_passes: usize,
    /// Largest feature set per weather type.
    pub max_features: usize,
    /// Run the joint multi-step refinement after the per-type searches.
    pub algorithm2: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            max_passes: DEFAULT_MAX_PASSES,
            max_features: CATALOG_SIZE,
            algorithm2: true,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol >= 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidArgument("rel_tol must be in [0, 1)".into()));
        }
        if self.max_passes == 0 || self.max_features == 0 {
            return Err(Error::InvalidArgument(
                "max_passes and max_features must be positive".into(),
            ));
        }
        Ok(())
    }

    fn improves(&self, candidate: f64, current: f64) -> bool {
        candidate < current - self.rel_tol * current.abs()
    }
}

/// Chosen features, kept in catalog order without duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSet(Vec<FeatureIndex>);

impl FeatureSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_features(features: impl IntoIterator<Item = FeatureIndex>) -> Self {
        let mut v: Vec<FeatureIndex> = features.into_iter().collect();
        v.sort();
        v.dedup();
        Self(v)
    }

    pub fn contains(&self, f: FeatureIndex) -> bool {
        self.0.binary_search(&f).is_ok()
    }

    pub fn with(&self, f: FeatureIndex) -> Self {
        Self::from_features(self.0.iter().copied().chain([f]))
    }

    pub fn without(&self, f: FeatureIndex) -> Self {
        Self(self.0.iter().copied().filter(|&g| g != f).collect())
    }

    pub fn as_slice(&self) -> &[FeatureIndex] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Catalog entries not yet selected.
    pub fn complement(&self) -> Vec<FeatureIndex> {
        FeatureIndex::catalog().filter(|&f| !self.contains(f)).collect()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PerWeather,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Add,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub phase: Phase,
    pub weather_type: WeatherType,
    pub action: Action,
    pub feature: FeatureIndex,
    /// Score after the change.
    pub score: f64,
    /// Joint refinement pass, counted from one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<usize>,
}

/// Current set, its coefficients and its score.
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub features: FeatureSet,
    pub coefficients: Coefficients,
    pub score: f64,
}

impl Incumbent {
    pub fn empty(score: f64) -> Self {
        Self {
            features: FeatureSet::new(),
            coefficients: Coefficients::empty(),
            score,
        }
    }
}

/// Fits a feature set on one weather type's training rows.
pub struct Fitter<'a> {
    pub train: &'a FeatureMatrix,
    pub l1_bound: Option<f64>,
    pub solver: SolverConfig,
}

impl Fitter<'_> {
    /// `Ok(None)` when the solver gave up on this set.
    pub fn fit(&self, set: &FeatureSet) -> Result<Option<Coefficients>> {
        if set.is_empty() {
            return Ok(Some(Coefficients::empty()));
        }
        let problem = QpProblem::from_matrix(self.train, set.as_slice(), self.l1_bound)
            .map_err(|e| Error::solver("selection", e))?;
        match solve(&problem, &self.solver) {
            Ok(c) => Ok(Some(c)),
            Err(SolveError::IterationLimit { best }) => {
                log::warn!("solver gave up on {set}: {}", SolveError::IterationLimit { best });
                Ok(None)
            }
            Err(e) => Err(Error::solver("selection", e)),
        }
    }
}

/// Running selection bookkeeping shared by both algorithms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelectionState {
    pub history: Vec<HistoryEntry>,
    pub qp_solves: usize,
    pub solver_failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Adopted { feature: FeatureIndex, score: f64 },
    NoImprovement,
}

impl StepOutcome {
    pub fn adopted(&self) -> bool {
        matches!(self, StepOutcome::Adopted { .. })
    }
}

/// Scores a fitted candidate; lower is better.
pub type ScoreFn<'a> = dyn Fn(&Coefficients) -> Result<f64> + Sync + 'a;

struct Evaluated {
    feature: FeatureIndex,
    set: FeatureSet,
    coefficients: Coefficients,
    score: f64,
}

fn evaluate_all(
    trials: Vec<(FeatureIndex, FeatureSet)>,
    fitter: &Fitter<'_>,
    score_fn: &ScoreFn<'_>,
) -> Result<(Vec<Evaluated>, usize, usize)> {
    let run = |(feature, set): (FeatureIndex, FeatureSet)| -> Result<Option<Evaluated>> {
        let Some(coefficients) = fitter.fit(&set)? else {
            return Ok(None);
        };
        let score = score_fn(&coefficients)?;
        Ok(Some(Evaluated {
            feature,
            set,
            coefficients,
            score,
        }))
    };
    let solves = trials.iter().filter(|(_, s)| !s.is_empty()).count();
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Option<Evaluated>>> = {
        use rayon::prelude::*;
        trials.into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Option<Evaluated>>> = trials.into_iter().map(run).collect();

    let mut out = Vec::new();
    let mut failures = 0;
    for r in results {
        match r? {
            Some(e) => out.push(e),
            None => failures += 1,
        }
    }
    Ok((out, solves, failures))
}

fn adopt(incumbent: &mut Incumbent, evaluated: Vec<Evaluated>, config: &SelectionConfig) -> StepOutcome {
    // Trials arrive in catalog order, so the first minimum is the tie-break winner.
    let mut best: Option<Evaluated> = None;
    for e in evaluated {
        if !e.score.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| e.score < b.score) {
            best = Some(e);
        }
    }
    match best {
        Some(b) if config.improves(b.score, incumbent.score) => {
            let outcome = StepOutcome::Adopted {
                feature: b.feature,
                score: b.score,
            };
            incumbent.features = b.set;
            incumbent.coefficients = b.coefficients;
            incumbent.score = b.score;
            outcome
        }
        _ => StepOutcome::NoImprovement,
    }
}

/// Tries adding each candidate; adopts the best strict improvement.
pub fn forward_step(
    state: &mut SelectionState,
    incumbent: &mut Incumbent,
    candidates: &[FeatureIndex],
    fitter: &Fitter<'_>,
    score_fn: &ScoreFn<'_>,
    config: &SelectionConfig,
) -> Result<StepOutcome> {
    if incumbent.features.len() >= config.max_features {
        return Ok(StepOutcome::NoImprovement);
    }
    let mut sorted: Vec<FeatureIndex> = candidates
        .iter()
        .copied()
        .filter(|&f| !incumbent.features.contains(f))
        .collect();
    sorted.sort();
    sorted.dedup();
    let trials = sorted.into_iter().map(|f| (f, incumbent.features.with(f))).collect();
    let (evaluated, solves, failures) = evaluate_all(trials, fitter, score_fn)?;
    state.qp_solves += solves;
    state.solver_failures += failures;
    Ok(adopt(incumbent, evaluated, config))
}

/// Tries removing each selected feature; adopts the best strict improvement.
pub fn backward_step(
    state: &mut SelectionState,
    incumbent: &mut Incumbent,
    fitter: &Fitter<'_>,
    score_fn: &ScoreFn<'_>,
    config: &SelectionConfig,
) -> Result<StepOutcome> {
    let trials = incumbent
        .features
        .as_slice()
        .iter()
        .map(|&f| (f, incumbent.features.without(f)))
        .collect();
    let (evaluated, solves, failures) = evaluate_all(trials, fitter, score_fn)?;
    state.qp_solves += solves;
    state.solver_failures += failures;
    Ok(adopt(incumbent, evaluated, config))
}

/// Mean squared one-step error of `coeffs` on the rows of `matrix`.
pub fn one_step_mse(matrix: &FeatureMatrix, coeffs: &Coefficients) -> f64 {
    if matrix.is_empty() {
        return 0.0;
    }
    let positions: Vec<usize> = coeffs.features.iter().map(|f| f.position()).collect();
    let mut total = 0.0;
    for (r, meta) in matrix.rows.iter().enumerate() {
        let row = matrix.row(r);
        let pred: f64 = positions.iter().zip(&coeffs.values).map(|(&p, a)| a * row[p]).sum();
        total += (pred - meta.target).powi(2);
    }
    total / matrix.n_rows() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSelection {
    pub weather_type: WeatherType,
    pub features: FeatureSet,
    pub coefficients: Vec<f64>,
    pub fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
    pub train_rows: usize,
    pub validation_rows: usize,
    /// One-step validation error: the starting score, then one entry per
    /// adopted step.
    pub one_step_scores: Vec<f64>,
}

/// Per-weather search from the empty set, alternating forward and
/// backward steps until neither improves.
pub fn algorithm1(
    train: &FeatureMatrix,
    validation: &FeatureMatrix,
    weather: WeatherType,
    l1_bound: Option<f64>,
    solver: &SolverConfig,
    config: &SelectionConfig,
    state: &mut SelectionState,
) -> Result<(WeatherSelection, Coefficients)> {
    config.validate()?;
    let train_w = train.subset(weather);
    let val_w = validation.subset(weather);
    let mut selection = WeatherSelection {
        weather_type: weather,
        features: FeatureSet::new(),
        coefficients: Vec::new(),
        fallback: false,
        fallback_reason: None,
        train_rows: train_w.n_rows(),
        validation_rows: val_w.n_rows(),
        one_step_scores: Vec::new(),
    };
    let reason = if train_w.is_empty() {
        Some("no training rows")
    } else if val_w.is_empty() {
        Some("no validation rows")
    } else {
        None
    };
    if let Some(reason) = reason {
        log::warn!("{weather}: {reason}; using the mean profile");
        selection.fallback = true;
        selection.fallback_reason = Some(reason.to_string());
        return Ok((selection, Coefficients::empty()));
    }

    let fitter = Fitter {
        train: &train_w,
        l1_bound,
        solver: *solver,
    };
    let score_fn = |c: &Coefficients| Ok(one_step_mse(&val_w, c));
    let mut incumbent = Incumbent::empty(one_step_mse(&val_w, &Coefficients::empty()));
    selection.one_step_scores.push(incumbent.score);

    let record = |state: &mut SelectionState, outcome: StepOutcome, action: Action, scores: &mut Vec<f64>| {
        if let StepOutcome::Adopted { feature, score } = outcome {
            scores.push(score);
            state.history.push(HistoryEntry {
                phase: Phase::PerWeather,
                weather_type: weather,
                action,
                feature,
                score,
                pass: None,
            });
        }
    };
    // Strict improvement guarantees termination; the cap is a backstop.
    for _ in 0..4 * CATALOG_SIZE {
        let candidates = incumbent.features.complement();
        let fwd = forward_step(state, &mut incumbent, &candidates, &fitter, &score_fn, config)?;
        record(state, fwd, Action::Add, &mut selection.one_step_scores);
        let bwd = if incumbent.features.is_empty() {
            StepOutcome::NoImprovement
        } else {
            backward_step(state, &mut incumbent, &fitter, &score_fn, config)?
        };
        record(state, bwd, Action::Remove, &mut selection.one_step_scores);
        if !fwd.adopted() && !bwd.adopted() {
            break;
        }
    }
    selection.features = incumbent.features.clone();
    selection.coefficients = incumbent.coefficients.values.clone();
    Ok((selection, incumbent.coefficients))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointReport {
    /// Combined validation error: the starting value, then one entry per
    /// adopted change.
    pub scores: Vec<f64>,
    pub passes: usize,
    pub converged: bool,
}

/// Joint refinement: per pass, one forward and one backward step for each
/// weather type in turn, scored by the combined multi-step validation error
/// with the other two models held fixed.
pub fn algorithm2(
    model: &mut ForecastModel,
    train: &FeatureMatrix,
    validation: &PreparedSplit,
    horizon: usize,
    solver: &SolverConfig,
    config: &SelectionConfig,
    state: &mut SelectionState,
) -> Result<JointReport> {
    config.validate()?;
    let l1_bound = model.l1_mode.then_some(1.0);
    let subsets: Vec<FeatureMatrix> = WeatherType::ALL.iter().map(|&w| train.subset(w)).collect();
    let mut incumbents: Vec<Incumbent> = Vec::new();
    let start = combined_mse(model, validation, horizon)?;
    for w in WeatherType::ALL {
        let m = model.model(w);
        incumbents.push(Incumbent {
            features: FeatureSet::from_features(m.features.iter().copied()),
            coefficients: coefficients_of(m),
            score: start,
        });
    }
    let mut report = JointReport {
        scores: vec![start],
        passes: 0,
        converged: false,
    };
    let mut current = start;

    for pass in 1..=config.max_passes {
        report.passes = pass;
        let mut changed = false;
        for w in WeatherType::ALL {
            if model.model(w).fallback || subsets[w.index()].is_empty() {
                continue;
            }
            let fitter = Fitter {
                train: &subsets[w.index()],
                l1_bound,
                solver: *solver,
            };
            let base = model.clone();
            let score_fn = move |c: &Coefficients| {
                let mut trial = base.clone();
                *trial.models.get_mut(w) = WeatherModel::from_coefficients(w, c);
                combined_mse(&trial, validation, horizon)
            };
            let incumbent = &mut incumbents[w.index()];
            incumbent.score = current;
            let candidates = incumbent.features.complement();
            let mut outcomes = Vec::new();
            let fwd = forward_step(state, incumbent, &candidates, &fitter, &score_fn, config)?;
            outcomes.push((fwd, Action::Add));
            if fwd.adopted() {
                *model.models.get_mut(w) = WeatherModel::from_coefficients(w, &incumbent.coefficients);
            }
            if !incumbent.features.is_empty() {
                let base = model.clone();
                let score_fn = move |c: &Coefficients| {
                    let mut trial = base.clone();
                    *trial.models.get_mut(w) = WeatherModel::from_coefficients(w, c);
                    combined_mse(&trial, validation, horizon)
                };
                let bwd = backward_step(state, incumbent, &fitter, &score_fn, config)?;
                outcomes.push((bwd, Action::Remove));
                if bwd.adopted() {
                    *model.models.get_mut(w) = WeatherModel::from_coefficients(w, &incumbent.coefficients);
                }
            }
            for (outcome, action) in outcomes {
                if let StepOutcome::Adopted { feature, score } = outcome {
                    changed = true;
                    current = score;
                    report.scores.push(score);
                    state.history.push(HistoryEntry {
                        phase: Phase::Joint,
                        weather_type: w,
                        action,
                        feature,
                        score,
                        pass: Some(pass),
                    });
                }
            }
        }
        if !changed {
            report.converged = true;
            break;
        }
    }
    if !report.converged {
        log::warn!("joint refinement stopped at the {}-pass cap", config.max_passes);
    }
    Ok(report)
}

fn coefficients_of(m: &WeatherModel) -> Coefficients {
    Coefficients {
        features: m.features.clone(),
        values: m.coefficients.clone(),
        ..Coefficients::empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub per_weather_s: f64,
    pub joint_s: f64,
}

/// Everything a training run decided, for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub dataset_id: String,
    pub horizon: usize,
    pub weather: Vec<WeatherSelection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointReport>,
    pub history: Vec<HistoryEntry>,
    pub qp_solves: usize,
    pub solver_failures: usize,
    pub warnings: Vec<String>,
    /// Wall-clock seconds; not reproducible across runs.
    pub timings: Timings,
}

impl SelectionReport {
    /// True when every per-weather score list and the joint score list are
    /// non-increasing.
    pub fn is_monotone(&self) -> bool {
        let ok = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
        self.weather.iter().all(|w| ok(&w.one_step_scores)) && self.joint.as_ref().is_none_or(|j| ok(&j.scores))
    }
}

#[cfg(test)]
mod tests;
