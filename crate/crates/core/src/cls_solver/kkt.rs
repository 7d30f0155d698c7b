use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{QpProblem, SolverConfig};

/// Optimality certificate recomputed from the coefficients alone.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Largest violation of any constraint.
    pub max_violation: f64,
    /// Infinity norm of the best non-negative multiplier fit of the
    /// gradient, divided by `max(1, ||2 A^T b||_inf)`.
    pub stationarity: f64,
    /// Largest `multiplier * slack` product, on the same scale.
    pub complementarity: f64,
    /// Rows whose slack is within the activity tolerance.
    pub active_rows: usize,
    pub l1_active: bool,
    /// Largest multiplier on a row or on the L1 bound.
    pub max_multiplier: f64,
}

/// Lawson-Hanson non-negative least squares: `argmin ||A x - b||, x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return x;
    }
    let mut passive = vec![false; n];
    let tol = 1e-13 * a.tr_mul(b).amax().max(1.0);
    for _ in 0..3 * n + 10 {
        let w = a.tr_mul(&(b - a * &x));
        let Some(enter) = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)))
        else {
            break;
        };
        passive[enter] = true;
        for _ in 0..3 * n + 10 {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            if idx.is_empty() {
                break;
            }
            let sub = a.select_columns(idx.iter());
            let Ok(s) = sub.svd(true, true).solve(b, 1e-14) else {
                return x;
            };
            if s.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = s[k];
                }
                break;
            }
            let mut alpha: f64 = 1.0;
            for (k, &j) in idx.iter().enumerate() {
                if s[k] <= 0.0 {
                    let denom = x[j] - s[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (s[k] - x[j]);
            }
            for &j in &idx {
                if x[j] <= 1e-15 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    x
}

/// Recomputes feasibility, stationarity and complementarity for `coeffs`
/// (in the problem's feature order).
pub fn verify_kkt(problem: &QpProblem, coeffs: &[f64], config: &SolverConfig) -> KktReport {
    let n = problem.n_features();
    let rows = problem.n_rows();
    let ax = problem.apply(coeffs);
    let mut grad = vec![0.0; n];
    let mut atb = vec![0.0; n];
    let mut slack = vec![0.0; rows];
    for r in 0..rows {
        let row = problem.row(r);
        let resid = ax[r] - problem.targets()[r];
        for j in 0..n {
            grad[j] += 2.0 * row[j] * resid;
            atb[j] += 2.0 * row[j] * problem.targets()[r];
        }
        slack[r] = ax[r] + problem.offsets()[r];
    }
    let scale = atb.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let act_tol = (10.0 * config.feasibility_tol).max(1e-9);

    let mut max_violation = slack.iter().fold(0.0f64, |m, s| m.max(-s));
    let l1_norm: f64 = coeffs.iter().map(|v| v.abs()).sum();
    let l1_slack = problem.l1_bound().map(|bound| bound - l1_norm);
    if let Some(s) = l1_slack {
        max_violation = max_violation.max(-s);
    }
    let active: Vec<usize> = (0..rows).filter(|&r| slack[r] <= act_tol).collect();
    let l1_active = l1_slack.is_some_and(|s| s <= act_tol);

    // Columns are constraint gradients; the target is the objective gradient.
    let split = problem.l1_bound().is_some();
    let dim = if split { 2 * n } else { n };
    let mut columns: Vec<DVector<f64>> = Vec::new();
    for &r in &active {
        let row = problem.row(r);
        columns.push(DVector::from_fn(dim, |i, _| if i < n { row[i] } else { -row[i - n] }));
    }
    if l1_active {
        columns.push(DVector::from_element(dim, -1.0));
    }
    let n_general = columns.len();
    if split {
        for (j, &v) in coeffs.iter().enumerate() {
            // p_j = max(v, 0) sits on its bound unless v > 0, likewise q_j.
            if v <= 1e-12 {
                columns.push(DVector::from_fn(dim, |i, _| if i == j { 1.0 } else { 0.0 }));
            }
            if v >= -1e-12 {
                columns.push(DVector::from_fn(dim, |i, _| if i == j + n { 1.0 } else { 0.0 }));
            }
        }
    }
    let target = DVector::from_fn(dim, |i, _| if i < n { grad[i] } else { -grad[i - n] });

    let (residual, multipliers) = if columns.is_empty() {
        (target.amax(), DVector::zeros(0))
    } else {
        let jac = DMatrix::from_columns(&columns);
        let lambda = nnls(&jac, &target);
        ((&target - &jac * &lambda).amax(), lambda)
    };

    let mut complementarity = 0.0f64;
    let mut max_multiplier = 0.0f64;
    for (k, &r) in active.iter().enumerate() {
        complementarity = complementarity.max(multipliers[k] * slack[r].max(0.0));
        max_multiplier = max_multiplier.max(multipliers[k]);
    }
    if l1_active {
        let l = multipliers[active.len()];
        complementarity = complementarity.max(l * l1_slack.unwrap_or(0.0).max(0.0));
        max_multiplier = max_multiplier.max(l);
    }
    debug_assert!(n_general <= multipliers.len() || columns.is_empty());

    KktReport {
        max_violation,
        stationarity: residual / scale,
        complementarity: complementarity / scale,
        active_rows: active.len(),
        l1_active,
        max_multiplier,
    }
}
