//! Bounded nonlinear least squares by a trust-region reflective method.
//!
//! Minimises `0.5 * ||r(x)||^2` subject to `lb <= x <= ub`. Each iteration
//! rescales the variables with the Coleman–Li vector (distance to the bound
//! the gradient points at), solves the trust-region subproblem exactly on
//! the small normal-equation matrix, then picks the best of three feasible
//! candidates: the step truncated at the boundary, its reflection off the
//! boundary, and the scaled Cauchy step. Steps are accepted only when they
//! reduce the cost, so the accepted cost sequence is monotone.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// A residual vector with an analytic Jacobian.
pub trait LeastSquares {
    fn num_residuals(&self) -> usize;
    fn num_params(&self) -> usize;
    /// Writes residuals into `out`; non-finite entries mark an invalid point.
    fn residuals(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `num_residuals x num_params` Jacobian.
    fn jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrfOptions {
    pub max_iter: usize,
    /// Relative step-norm tolerance.
    pub xtol: f64,
    /// Relative cost-decrease tolerance.
    pub ftol: f64,
    /// Scaled gradient tolerance (infinity norm).
    pub gtol: f64,
}

impl Default for TrfOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            xtol: 1e-10,
            ftol: 1e-12,
            gtol: 1e-15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub cost: f64,
    pub step_norm: f64,
    pub radius: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    CostDecrease,
    StepSize,
    MaxIterations,
    InvalidStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrfResult {
    pub x: Vec<f64>,
    /// `0.5 * ||r||^2` at `x`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub log: Vec<IterRecord>,
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn all_finite(r: &[f64]) -> bool {
    r.iter().all(|v| v.is_finite())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn in_bounds(x: &[f64], lb: &[f64], ub: &[f64]) -> bool {
    x.iter().zip(lb).zip(ub).all(|((x, l), u)| x >= l && x <= u)
}

/// Smallest step fraction along `s` reaching a bound, and which components
/// hit it (+1 upper, -1 lower).
fn step_size_to_bound(x: &[f64], s: &[f64], lb: &[f64], ub: &[f64]) -> (f64, Vec<i8>) {
    let steps: Vec<f64> = (0..x.len())
        .map(|i| {
            if s[i] > 0.0 {
                (ub[i] - x[i]) / s[i]
            } else if s[i] < 0.0 {
                (lb[i] - x[i]) / s[i]
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let min = steps.iter().copied().fold(f64::INFINITY, f64::min);
    let hits = steps
        .iter()
        .zip(s)
        .map(|(st, si)| {
            if min.is_finite() && (st - min).abs() <= 1e-12 * min.abs().max(1e-300) {
                si.signum() as i8
            } else {
                0
            }
        })
        .collect();
    (min, hits)
}

/// Parameters `t` where `||x + t s|| = delta`, as `(negative, positive)`.
fn intersect_trust_region(x: &[f64], s: &[f64], delta: f64) -> (f64, f64) {
    let a: f64 = s.iter().map(|v| v * v).sum();
    if a == 0.0 {
        return (0.0, 0.0);
    }
    let b: f64 = x.iter().zip(s).map(|(a, b)| a * b).sum();
    let c: f64 = x.iter().map(|v| v * v).sum::<f64>() - delta * delta;
    let d = (b * b - a * c).max(0.0).sqrt();
    let q = -(b + d.copysign(b));
    let (t1, t2) = if q == 0.0 {
        (d / a, -d / a)
    } else {
        (q / a, c / q)
    };
    (t1.min(t2), t1.max(t2))
}

fn make_strictly_feasible(x: &mut [f64], lb: &[f64], ub: &[f64]) {
    for i in 0..x.len() {
        if x[i] <= lb[i] {
            x[i] = lb[i] + 1e-10 * lb[i].abs().max(1.0);
        } else if x[i] >= ub[i] {
            x[i] = ub[i] - 1e-10 * ub[i].abs().max(1.0);
        }
        if x[i] < lb[i] || x[i] > ub[i] {
            x[i] = 0.5 * (lb[i] + ub[i]);
        }
    }
}

/// Clamps to the box after a step that is feasible up to rounding.
fn clip_to_bounds(x: &mut [f64], lb: &[f64], ub: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lb[i], ub[i]);
    }
}

/// Quadratic model in the scaled space: `0.5 s'Bs + g's`.
struct Model<'a> {
    b: &'a DMatrix<f64>,
    g: &'a DVector<f64>,
}

impl Model<'_> {
    fn value(&self, s: &DVector<f64>) -> f64 {
        0.5 * s.dot(&(self.b * s)) + self.g.dot(s)
    }

    /// Coefficients of `q(t) = a t^2 + b t + c` for `s0 + t s`.
    fn along(&self, s: &DVector<f64>, s0: Option<&DVector<f64>>) -> (f64, f64, f64) {
        let bs = self.b * s;
        let a = 0.5 * s.dot(&bs);
        match s0 {
            Some(s0) => (a, self.g.dot(s) + s0.dot(&bs), self.value(s0)),
            None => (a, self.g.dot(s), 0.0),
        }
    }
}

fn minimize_quadratic_1d(a: f64, b: f64, lo: f64, hi: f64, c: f64) -> (f64, f64) {
    let q = |t: f64| a * t * t + b * t + c;
    let mut best = (lo, q(lo));
    let mut consider = |t: f64| {
        let v = q(t);
        if v < best.1 {
            best = (t, v);
        }
    };
    consider(hi);
    if a != 0.0 {
        let t = -0.5 * b / a;
        if t > lo && t < hi {
            consider(t);
        }
    }
    best
}

/// Exact trust-region subproblem `min 0.5 p'Bp + g'p, ||p|| <= delta` using
/// the eigen-decomposition of the (positive semidefinite) `B`.
fn solve_subproblem(
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    g: &DVector<f64>,
    delta: f64,
) -> DVector<f64> {
    let gt = eig.eigenvectors.transpose() * g;
    let lam = &eig.eigenvalues;
    let n = lam.len();
    let lam_max = lam.iter().copied().fold(0.0f64, f64::max);
    let floor = lam_max * 1e-15;
    let step_for = |alpha: f64| -> DVector<f64> {
        DVector::from_iterator(
            n,
            (0..n).map(|i| -gt[i] / (lam[i].max(0.0) + alpha).max(floor.max(1e-300))),
        )
    };
    let full_rank = lam.iter().all(|&l| l > floor);
    if full_rank {
        let p = step_for(0.0);
        if p.norm() <= delta {
            return &eig.eigenvectors * p;
        }
    }
    // ||p(alpha)|| is decreasing in alpha; bracket and bisect in log space
    let mut lo = 0.0f64;
    let mut hi = (g.norm() / delta).max(1e-300);
    while step_for(hi).norm() > delta {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = if lo == 0.0 {
            hi * 1e-12
        } else {
            (lo * hi).sqrt()
        };
        let mid = if mid <= lo || mid >= hi {
            0.5 * (lo + hi)
        } else {
            mid
        };
        if step_for(mid).norm() > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-12 * hi {
            break;
        }
    }
    let p = step_for(hi);
    &eig.eigenvectors * p
}

/// Runs the solver from `x0`. `x0` is moved strictly inside the box first.
pub fn solve<P: LeastSquares>(
    problem: &P,
    x0: &[f64],
    lb: &[f64],
    ub: &[f64],
    opts: &TrfOptions,
) -> TrfResult {
    let n = problem.num_params();
    let m = problem.num_residuals();
    let mut x = x0.to_vec();
    make_strictly_feasible(&mut x, lb, ub);

    let mut f = vec![0.0; m];
    problem.residuals(&x, &mut f);
    if !all_finite(&f) {
        return TrfResult {
            x,
            cost: f64::INFINITY,
            iterations: 0,
            converged: false,
            termination: Termination::InvalidStart,
            log: Vec::new(),
        };
    }
    let mut cost = cost_of(&f);
    let mut jac = DMatrix::zeros(m, n);
    problem.jacobian(&x, &mut jac);
    let fv = DVector::from_column_slice(&f);
    let mut g = jac.transpose() * &fv;

    // Jacobian column-norm scaling, only ever growing.
    let mut scale_inv: Vec<f64> = (0..n)
        .map(|j| {
            let c = jac.column(j).norm();
            if c > 0.0 {
                c
            } else {
                1.0
            }
        })
        .collect();
    let mut delta = norm(
        &x.iter()
            .zip(&scale_inv)
            .map(|(a, b)| a * b)
            .collect::<Vec<_>>(),
    );
    if delta == 0.0 {
        delta = 1.0;
    }

    let mut log = Vec::new();
    let mut iterations = 0;
    let mut f_new = vec![0.0; m];
    let termination = loop {
        // Coleman–Li scaling
        let mut v = vec![1.0; n];
        let mut dv = vec![0.0; n];
        for i in 0..n {
            if g[i] < 0.0 && ub[i].is_finite() {
                v[i] = ub[i] - x[i];
                dv[i] = -1.0;
            } else if g[i] > 0.0 && lb[i].is_finite() {
                v[i] = x[i] - lb[i];
                dv[i] = 1.0;
            }
        }
        let g_norm = (0..n).map(|i| (g[i] * v[i]).abs()).fold(0.0, f64::max);
        if g_norm < opts.gtol {
            break Termination::Gradient;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }

        let scale: Vec<f64> = scale_inv.iter().map(|s| 1.0 / s).collect();
        let d = DVector::from_iterator(n, (0..n).map(|i| v[i].sqrt() * scale[i]));
        let diag_h: Vec<f64> = (0..n).map(|i| g[i] * dv[i] * scale[i]).collect();
        let g_h = d.component_mul(&g);
        let jtj = jac.transpose() * &jac;
        let mut b_h = DMatrix::from_fn(n, n, |i, j| jtj[(i, j)] * d[i] * d[j]);
        for i in 0..n {
            b_h[(i, i)] += diag_h[i];
        }
        let eig = SymmetricEigen::new(b_h.clone());
        let model = Model { b: &b_h, g: &g_h };
        let theta = (1.0 - g_norm).max(0.995);

        let mut accepted = false;
        let mut step_norm = 0.0;
        let mut actual = 0.0;
        let mut ratio = 0.0;
        let mut inner = 0;
        while inner < 50 {
            inner += 1;
            let p_h = solve_subproblem(&eig, &g_h, delta);
            let (step_h, predicted) = select_step(&x, &model, &p_h, &d, delta, lb, ub, theta);
            let step: Vec<f64> = (0..n).map(|i| d[i] * step_h[i]).collect();
            let mut x_new: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            clip_to_bounds(&mut x_new, lb, ub);
            problem.residuals(&x_new, &mut f_new);
            let step_h_norm = step_h.norm();
            if !all_finite(&f_new) {
                delta = 0.25 * step_h_norm;
                if delta == 0.0 {
                    break;
                }
                continue;
            }
            let cost_new = cost_of(&f_new);
            actual = cost - cost_new;
            ratio = if predicted > 0.0 {
                actual / predicted
            } else if predicted == 0.0 && actual == 0.0 {
                1.0
            } else {
                0.0
            };
            if ratio < 0.25 {
                delta = 0.25 * step_h_norm;
            } else if ratio > 0.75 && step_h_norm > 0.95 * delta {
                delta *= 2.0;
            }
            step_norm = norm(&step);
            if actual > 0.0 {
                x = x_new;
                std::mem::swap(&mut f, &mut f_new);
                cost = cost_new;
                accepted = true;
                break;
            }
            let x_norm = norm(&x);
            if step_norm < opts.xtol * (opts.xtol + x_norm) || delta == 0.0 {
                break;
            }
        }
        iterations += 1;
        log.push(IterRecord {
            iteration: iterations,
            cost,
            step_norm: if accepted { step_norm } else { 0.0 },
            radius: delta,
            ratio,
        });

        if accepted {
            problem.jacobian(&x, &mut jac);
            let fv = DVector::from_column_slice(&f);
            g = jac.transpose() * &fv;
            for (j, s) in scale_inv.iter_mut().enumerate() {
                *s = s.max(jac.column(j).norm());
            }
        }

        let x_norm = norm(&x);
        if accepted && actual < opts.ftol * (cost + actual) && ratio > 0.25 {
            break Termination::CostDecrease;
        }
        if step_norm < opts.xtol * (opts.xtol + x_norm)
            || !accepted && delta < opts.xtol * (opts.xtol + x_norm)
        {
            break Termination::StepSize;
        }
    };

    TrfResult {
        x,
        cost,
        iterations,
        converged: termination != Termination::MaxIterations
            && termination != Termination::InvalidStart,
        termination,
        log,
    }
}

/// Chooses between the boundary-truncated step, its reflection and the
/// scaled anti-gradient; returns the scaled step and its predicted reduction.
#[allow(clippy::too_many_arguments)]
fn select_step(
    x: &[f64],
    model: &Model<'_>,
    p_h: &DVector<f64>,
    d: &DVector<f64>,
    delta: f64,
    lb: &[f64],
    ub: &[f64],
    theta: f64,
) -> (DVector<f64>, f64) {
    let n = x.len();
    let p: Vec<f64> = (0..n).map(|i| d[i] * p_h[i]).collect();
    let x_p: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
    if in_bounds(&x_p, lb, ub) {
        return (p_h.clone(), -model.value(p_h));
    }

    let (p_stride, hits) = step_size_to_bound(x, &p, lb, ub);

    // reflection off the bound that was hit first
    let mut r_h = p_h.clone();
    for i in 0..n {
        if hits[i] != 0 {
            r_h[i] = -r_h[i];
        }
    }
    let r: Vec<f64> = (0..n).map(|i| d[i] * r_h[i]).collect();
    let p_on_bound_h = p_h * p_stride;
    let x_on_bound: Vec<f64> = (0..n).map(|i| x[i] + p[i] * p_stride).collect();

    let (_, to_tr) = intersect_trust_region(p_on_bound_h.as_slice(), r_h.as_slice(), delta);
    let (to_bound, _) = step_size_to_bound(&x_on_bound, &r, lb, ub);
    let r_stride = to_bound.min(to_tr);
    let (r_lo, r_hi) = if r_stride > 0.0 {
        let lo = (1.0 - theta) * p_stride / r_stride;
        let hi = if r_stride == to_bound {
            theta * to_bound
        } else {
            to_tr
        };
        (lo, hi)
    } else {
        (0.0, -1.0)
    };
    let (refl_h, refl_value) = if r_lo <= r_hi {
        let (a, b, c) = model.along(&r_h, Some(&p_on_bound_h));
        let (t, value) = minimize_quadratic_1d(a, b, r_lo, r_hi, c);
        (&p_on_bound_h + &r_h * t, value)
    } else {
        (p_on_bound_h.clone(), f64::INFINITY)
    };

    // truncated step, pulled back slightly from the bound
    let trunc_h = &p_on_bound_h * theta;
    let trunc_value = model.value(&trunc_h);

    // scaled Cauchy step
    let ag_h = -model.g;
    let ag: Vec<f64> = (0..n).map(|i| d[i] * ag_h[i]).collect();
    let ag_norm = ag_h.norm();
    let (cauchy_h, cauchy_value) = if ag_norm > 0.0 {
        let to_tr = delta / ag_norm;
        let (to_bound, _) = step_size_to_bound(x, &ag, lb, ub);
        let limit = if to_bound < to_tr {
            theta * to_bound
        } else {
            to_tr
        };
        let (a, b, _) = model.along(&ag_h, None);
        let (t, value) = minimize_quadratic_1d(a, b, 0.0, limit, 0.0);
        (&ag_h * t, value)
    } else {
        (DVector::zeros(n), 0.0)
    };

    if trunc_value < refl_value && trunc_value < cauchy_value {
        (trunc_h, -trunc_value)
    } else if refl_value < cauchy_value {
        (refl_h, -refl_value)
    } else {
        (cauchy_h, -cauchy_value)
    }
}
