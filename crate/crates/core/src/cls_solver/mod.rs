//! Constrained least squares over a chosen feature subset:
//!
//! ```text
//!     minimize    || A a - b ||^2
//!     subject to  A a + g >= 0          (one row per training sample)
//!                 sum |a_j| <= bound    (optional)
//! ```
//!
//! `A` holds the selected feature columns, `b` the next-step deviations and
//! `g` the next-step mean profile. The zero vector is always feasible when
//! `g >= 0` and `bound >= 0`, so the solver starts there.
//!
//! The default backend is a primal active-set method. The L1 bound is
//! handled by splitting `a = p - q` with `p, q >= 0`; at most one of each
//! pair is ever released from its bound, which keeps the reduced Hessian
//! positive definite. Columns that are numerically dependent on earlier
//! columns are pinned to zero before solving. If the active-set iteration
//! fails, an ADMM splitting solve followed by a feasibility rescale is used.

mod active_set;
mod admm;
mod kkt;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureIndex, FeatureMatrix};

pub use kkt::{nnls, verify_kkt, KktReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    ActiveSet,
    ProjectedSplitting,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::ActiveSet => "active-set",
            Backend::ProjectedSplitting => "projected-splitting",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub feasibility_tol: f64,
    pub stationarity_tol: f64,
    pub max_iterations: usize,
    pub backend: Backend,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            stationarity_tol: 1e-8,
            max_iterations: 10_000,
            backend: Backend::ActiveSet,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.feasibility_tol > 0.0 && self.stationarity_tol > 0.0) {
            return Err(SolveError::InvalidProblem("solver tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(SolveError::InvalidProblem("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// One instance of the constrained least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    features: Vec<FeatureIndex>,
    /// Row-major `rows x features.len()`.
    a: Vec<f64>,
    b: Vec<f64>,
    g: Vec<f64>,
    l1_bound: Option<f64>,
}

impl QpProblem {
    pub fn new(
        features: Vec<FeatureIndex>,
        a: Vec<f64>,
        b: Vec<f64>,
        g: Vec<f64>,
        l1_bound: Option<f64>,
    ) -> Result<Self, SolveError> {
        let rows = b.len();
        if features.is_empty() {
            return Err(SolveError::InvalidProblem("no features selected".into()));
        }
        if rows == 0 {
            return Err(SolveError::InvalidProblem("no rows".into()));
        }
        if a.len() != rows * features.len() || g.len() != rows {
            return Err(SolveError::InvalidProblem("A, b and g are not aligned".into()));
        }
        if a.iter().chain(&b).chain(&g).any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite);
        }
        if let Some(bound) = l1_bound {
            if !(bound.is_finite() && bound >= 0.0) {
                return Err(SolveError::InvalidProblem(
                    "L1 bound must be finite and non-negative".into(),
                ));
            }
        }
        if g.iter().any(|&v| v < 0.0) {
            return Err(SolveError::InvalidProblem(
                "profile offsets must be non-negative so that zero is feasible".into(),
            ));
        }
        let mut sorted = features.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != features.len() {
            return Err(SolveError::InvalidProblem("duplicate feature".into()));
        }
        Ok(Self {
            features,
            a,
            b,
            g,
            l1_bound,
        })
    }

    /// Selected columns of a feature matrix, targets and next-step profile.
    pub fn from_matrix(
        matrix: &FeatureMatrix,
        features: &[FeatureIndex],
        l1_bound: Option<f64>,
    ) -> Result<Self, SolveError> {
        Self::new(
            features.to_vec(),
            matrix.columns(features),
            matrix.targets(),
            matrix.rows.iter().map(|m| m.profile_next).collect(),
            l1_bound,
        )
    }

    pub fn features(&self) -> &[FeatureIndex] {
        &self.features
    }

    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn l1_bound(&self) -> Option<f64> {
        self.l1_bound
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let n = self.n_features();
        &self.a[r * n..(r + 1) * n]
    }

    pub fn targets(&self) -> &[f64] {
        &self.b
    }

    pub fn offsets(&self) -> &[f64] {
        &self.g
    }

    /// `A a` for a coefficient vector in feature order.
    pub fn apply(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.n_rows())
            .map(|r| self.row(r).iter().zip(coeffs).map(|(x, c)| x * c).sum())
            .collect()
    }

    /// Sum of squared residuals.
    pub fn objective(&self, coeffs: &[f64]) -> f64 {
        self.apply(coeffs)
            .iter()
            .zip(&self.b)
            .map(|(p, t)| (p - t).powi(2))
            .sum()
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows(), self.n_features(), &self.a)
    }
}

/// Solved coefficients for one feature subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub features: Vec<FeatureIndex>,
    pub values: Vec<f64>,
    /// Achieved sum of squared residuals.
    pub objective: f64,
    pub kkt: KktReport,
    pub iterations: usize,
    pub backend: Backend,
}

impl Coefficients {
    /// The all-zero model over no features.
    pub fn empty() -> Self {
        Self {
            features: Vec::new(),
            values: Vec::new(),
            objective: 0.0,
            kkt: KktReport::default(),
            iterations: 0,
            backend: Backend::ActiveSet,
        }
    }

    pub fn get(&self, feature: FeatureIndex) -> Option<f64> {
        self.features.iter().position(|&f| f == feature).map(|i| self.values[i])
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureIndex, f64)> + '_ {
        self.features.iter().copied().zip(self.values.iter().copied())
    }
}

#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("non-finite value in problem data")]
    NonFinite,
    #[error("iteration limit reached (best iterate: objective {:.6e}, violation {:.3e}, stationarity {:.3e})",
        best.objective, best.kkt.max_violation, best.kkt.stationarity)]
    IterationLimit { best: Box<Coefficients> },
}

/// Relative pivot below which a column counts as dependent on earlier ones.
const DEPENDENCE_TOL: f64 = 1e-12;

/// Greedy in-order Cholesky of `Q = A^T A`; returns the columns to keep.
fn independent_columns(q: &DMatrix<f64>) -> Vec<usize> {
    let n = q.nrows();
    let mut keep: Vec<usize> = Vec::new();
    // rows of L for kept columns, in kept order
    let mut l: Vec<Vec<f64>> = Vec::new();
    for j in 0..n {
        let qjj = q[(j, j)];
        if qjj <= 0.0 {
            continue;
        }
        let mut lj = Vec::with_capacity(keep.len());
        for (t, &kt) in keep.iter().enumerate() {
            let dot: f64 = (0..t).map(|s| l[t][s] * lj[s]).sum();
            lj.push((q[(j, kt)] - dot) / l[t][t]);
        }
        let d = qjj - lj.iter().map(|v| v * v).sum::<f64>();
        if d > DEPENDENCE_TOL * qjj {
            lj.push(d.sqrt());
            l.push(lj);
            keep.push(j);
        }
    }
    keep
}

pub fn solve(problem: &QpProblem, config: &SolverConfig) -> Result<Coefficients, SolveError> {
    solve_traced(problem, config).map(|(c, _)| c)
}

/// Like [`solve`], also returning the objective after every active-set
/// iteration (empty when the splitting backend produced the answer).
pub fn solve_traced(problem: &QpProblem, config: &SolverConfig) -> Result<(Coefficients, Vec<f64>), SolveError> {
    config.validate()?;
    let a = problem.matrix();
    let q = a.transpose() * &a;
    let keep = independent_columns(&q);

    let n = problem.n_features();
    let mut values = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut backend = config.backend;

    if !keep.is_empty() {
        let sub = a.select_columns(keep.iter());
        let reduced = active_set::Reduced::new(&sub, problem.targets(), problem.offsets(), problem.l1_bound());
        let solved = match config.backend {
            Backend::ActiveSet => match active_set::solve(&reduced, config) {
                Ok(out) => {
                    iterations = out.iterations;
                    trace = out.trace;
                    Some(out.coeffs)
                }
                Err(reason) => {
                    log::debug!("active set failed ({reason}); falling back to splitting");
                    None
                }
            },
            Backend::ProjectedSplitting => None,
        };
        let sub_values = match solved {
            Some(v) => v,
            None => {
                backend = Backend::ProjectedSplitting;
                let out = admm::solve(&reduced, config);
                iterations += out.iterations;
                out.coeffs
            }
        };
        for (&col, v) in keep.iter().zip(sub_values) {
            values[col] = v;
        }
    }

    let objective = problem.objective(&values);
    let kkt = verify_kkt(problem, &values, config);
    let coeffs = Coefficients {
        features: problem.features().to_vec(),
        values,
        objective,
        kkt,
        iterations,
        backend,
    };
    if kkt.max_violation > config.feasibility_tol || !kkt.stationarity.is_finite() {
        return Err(SolveError::IterationLimit { best: Box::new(coeffs) });
    }
    if backend == Backend::ProjectedSplitting && kkt.stationarity > config.stationarity_tol.sqrt() {
        return Err(SolveError::IterationLimit { best: Box::new(coeffs) });
    }
    Ok((coeffs, trace))
}
