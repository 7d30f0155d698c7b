//! ADMM splitting fallback. The iterate is rescaled towards zero at the end
//! so that it is exactly feasible.

use nalgebra::DVector;

use super::active_set::Reduced;
use super::SolverConfig;

pub(super) struct Output {
    pub coeffs: Vec<f64>,
    pub iterations: usize,
}

/// Euclidean projection onto `{ x : ||x||_1 <= radius }`.
pub(super) fn project_l1_ball(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    if v.lp_norm(1) <= radius {
        return v.clone();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cumsum += m;
        let t = (cumsum - radius) / (i + 1) as f64;
        if m > t {
            theta = t;
        }
    }
    v.map(|x| x.signum() * (x.abs() - theta).max(0.0))
}

pub(super) fn solve(p: &Reduced, config: &SolverConfig) -> Output {
    let n = p.n();
    let at = p.a.transpose();
    let rho = (p.hessian.trace() / (2.0 * n as f64)).max(1e-6);
    let sigma = 1e-6 * rho;
    let mut system = &p.hessian + &p.hessian * (rho / 2.0);
    for j in 0..n {
        system[(j, j)] += sigma + if p.l1.is_some() { rho } else { 0.0 };
    }
    let Some(chol) = system.cholesky() else {
        return Output {
            coeffs: vec![0.0; n],
            iterations: 0,
        };
    };

    let lower = -&p.g;
    let mut x = DVector::zeros(n);
    let mut z_rows = DVector::zeros(p.a.nrows());
    let mut u_rows = DVector::zeros(p.a.nrows());
    let mut z_ball = DVector::zeros(n);
    let mut u_ball = DVector::zeros(n);
    let tol = 1e-11;
    let mut iterations = 0;

    for it in 0..config.max_iterations {
        iterations = it + 1;
        let mut rhs = &x * sigma - &p.linear + &at * (&z_rows - &u_rows) * rho;
        if p.l1.is_some() {
            rhs += (&z_ball - &u_ball) * rho;
        }
        x = chol.solve(&rhs);

        let ax = &p.a * &x;
        let v_rows = &ax + &u_rows;
        let z_rows_new = v_rows.zip_map(&lower, f64::max);
        u_rows = &v_rows - &z_rows_new;
        let mut primal = (&ax - &z_rows_new).amax();
        let mut dual_vec = &at * (&z_rows_new - &z_rows);
        z_rows = z_rows_new;

        if let Some(radius) = p.l1 {
            let v_ball = &x + &u_ball;
            let z_ball_new = project_l1_ball(&v_ball, radius);
            u_ball = &v_ball - &z_ball_new;
            primal = primal.max((&x - &z_ball_new).amax());
            dual_vec += &z_ball_new - &z_ball;
            z_ball = z_ball_new;
        }
        if primal <= tol && rho * dual_vec.amax() <= tol * p.grad_scale {
            break;
        }
    }

    let ax = &p.a * &x;
    let mut t: f64 = 1.0;
    for r in 0..ax.len() {
        if ax[r] + p.g[r] < 0.0 {
            t = t.min(p.g[r] / -ax[r]);
        }
    }
    if let Some(radius) = p.l1 {
        let norm = x.lp_norm(1);
        if norm > radius {
            t = t.min(radius / norm);
        }
    }
    Output {
        coeffs: (x * t.max(0.0)).iter().copied().collect(),
        iterations,
    }
}
