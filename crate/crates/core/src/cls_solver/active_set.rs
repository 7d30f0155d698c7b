//! Primal active-set method in coefficient space, or in split `(p, q)`
//! space when the L1 bound is on.

use nalgebra::{DMatrix, DVector};

use super::SolverConfig;

/// Problem data restricted to linearly independent columns.
pub(super) struct Reduced {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DVector<f64>,
    pub l1: Option<f64>,
    /// `2 A^T A`
    pub hessian: DMatrix<f64>,
    /// `-2 A^T b`
    pub linear: DVector<f64>,
    pub grad_scale: f64,
}

impl Reduced {
    pub fn new(a: &DMatrix<f64>, b: &[f64], g: &[f64], l1: Option<f64>) -> Self {
        let b = DVector::from_column_slice(b);
        let hessian = a.tr_mul(a) * 2.0;
        let linear = a.tr_mul(&b) * -2.0;
        let grad_scale = linear.amax().max(1.0);
        Self {
            a: a.clone(),
            b,
            g: DVector::from_column_slice(g),
            l1,
            hessian,
            linear,
            grad_scale,
        }
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn objective(&self, coeffs: &DVector<f64>) -> f64 {
        (&self.a * coeffs - &self.b).norm_squared()
    }
}

pub(super) struct Output {
    pub coeffs: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
enum Working {
    Row(usize),
    L1,
}

#[derive(Clone, Copy)]
enum Release {
    Working(usize),
    Bound(usize),
}

#[derive(Clone, Copy)]
enum Blocker {
    Bound(usize),
    Row(usize),
    L1,
}

struct Space {
    n: usize,
    split: bool,
}

impl Space {
    fn nvar(&self) -> usize {
        if self.split {
            2 * self.n
        } else {
            self.n
        }
    }

    fn col(&self, i: usize) -> usize {
        i % self.n
    }

    fn sign(&self, i: usize) -> f64 {
        if i < self.n {
            1.0
        } else {
            -1.0
        }
    }

    fn partner(&self, i: usize) -> usize {
        (i + self.n) % (2 * self.n)
    }

    fn to_coeffs(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.split {
            DVector::from_fn(self.n, |j, _| x[j] - x[j + self.n])
        } else {
            x.clone()
        }
    }
}

pub(super) fn solve(p: &Reduced, config: &SolverConfig) -> Result<Output, String> {
    let space = Space {
        n: p.n(),
        split: p.l1.is_some(),
    };
    let nvar = space.nvar();
    let rows = p.a.nrows();
    let mult_tol = config.stationarity_tol * p.grad_scale;

    let mut x = DVector::zeros(nvar);
    // In split mode every variable starts pinned at its zero bound.
    let mut fixed = vec![space.split; nvar];
    let mut working: Vec<Working> = Vec::new();
    let mut row_working = vec![false; rows];
    let mut at_subspace_min = false;
    let mut trace = vec![p.objective(&space.to_coeffs(&x))];

    let coef = |w: Working, i: usize| match w {
        Working::Row(r) => p.a[(r, space.col(i))] * space.sign(i),
        Working::L1 => -1.0,
    };

    for iteration in 0..config.max_iterations {
        let coeffs = space.to_coeffs(&x);
        let grad_a = &p.hessian * &coeffs + &p.linear;
        let grad: Vec<f64> = (0..nvar).map(|i| grad_a[space.col(i)] * space.sign(i)).collect();

        let free: Vec<usize> = (0..nvar).filter(|&i| !fixed[i]).collect();
        let nf = free.len();
        let nw = working.len();
        let dim = nf + nw;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for (ii, &fi) in free.iter().enumerate() {
            for (jj, &fj) in free.iter().enumerate() {
                kkt[(ii, jj)] = p.hessian[(space.col(fi), space.col(fj))] * space.sign(fi) * space.sign(fj);
            }
            rhs[ii] = -grad[fi];
            for (wi, &w) in working.iter().enumerate() {
                let c = coef(w, fi);
                kkt[(nf + wi, ii)] = c;
                kkt[(ii, nf + wi)] = c;
            }
        }
        let sol = if dim == 0 {
            DVector::zeros(0)
        } else {
            kkt.lu().solve(&rhs).ok_or("singular KKT system")?
        };
        if sol.iter().any(|v| !v.is_finite()) {
            return Err("non-finite KKT solution".into());
        }
        let step: Vec<f64> = sol.rows(0, nf).iter().copied().collect();
        let lambda: Vec<f64> = sol.rows(nf, nw).iter().map(|v| -v).collect();
        let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        if at_subspace_min || step_norm <= 1e-13 * x.amax().max(1.0) {
            let mut release: Option<(f64, Release)> = None;
            let mut consider = |value: f64, what: Release| {
                if value < -mult_tol && release.is_none_or(|(best, _)| value < best) {
                    release = Some((value, what));
                }
            };
            for (wi, &l) in lambda.iter().enumerate() {
                consider(l, Release::Working(wi));
            }
            for j in (0..nvar).filter(|&j| fixed[j]) {
                if space.split && !fixed[space.partner(j)] {
                    continue;
                }
                let nu = grad[j] - working.iter().zip(&lambda).map(|(&w, l)| l * coef(w, j)).sum::<f64>();
                consider(nu, Release::Bound(j));
            }
            match release {
                None => {
                    return Ok(Output {
                        coeffs: space.to_coeffs(&x).iter().copied().collect(),
                        iterations: iteration,
                        trace,
                    })
                }
                Some((_, Release::Working(wi))) => {
                    if let Working::Row(r) = working.remove(wi) {
                        row_working[r] = false;
                    }
                }
                Some((_, Release::Bound(j))) => fixed[j] = false,
            }
            at_subspace_min = false;
            continue;
        }

        let mut d = DVector::zeros(nvar);
        for (ii, &fi) in free.iter().enumerate() {
            d[fi] = step[ii];
        }
        let da = space.to_coeffs(&d);
        let a_step = &p.a * &da;
        let slack = &p.a * &coeffs + &p.g;
        let dir_tol = 1e-13 * da.lp_norm(1);

        let mut alpha = 1.0;
        let mut blocker = None;
        if space.split {
            for &fi in &free {
                if d[fi] < 0.0 {
                    let ratio = x[fi] / -d[fi];
                    if ratio < alpha {
                        alpha = ratio;
                        blocker = Some(Blocker::Bound(fi));
                    }
                }
            }
        }
        for r in 0..rows {
            if !row_working[r] && a_step[r] < -dir_tol {
                let ratio = slack[r].max(0.0) / -a_step[r];
                if ratio < alpha {
                    alpha = ratio;
                    blocker = Some(Blocker::Row(r));
                }
            }
        }
        if let Some(bound) = p.l1 {
            let total = d.sum();
            if !working.contains(&Working::L1) && total > dir_tol {
                let ratio = (bound - x.sum()).max(0.0) / total;
                if ratio < alpha {
                    alpha = ratio;
                    blocker = Some(Blocker::L1);
                }
            }
        }

        x.axpy(alpha, &d, 1.0);
        match blocker {
            None => at_subspace_min = true,
            Some(Blocker::Bound(j)) => {
                x[j] = 0.0;
                fixed[j] = true;
            }
            Some(Blocker::Row(r)) => {
                working.push(Working::Row(r));
                row_working[r] = true;
            }
            Some(Blocker::L1) => working.push(Working::L1),
        }
        if space.split {
            for v in x.iter_mut() {
                *v = v.max(0.0);
            }
        }
        trace.push(p.objective(&space.to_coeffs(&x)));
    }
    Err("iteration limit".into())
}
