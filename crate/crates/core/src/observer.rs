//! Force and length estimation from raw inductance.
//!
//! A constant-velocity Kalman filter tracks force and force rate. Its
//! measurement is not the inductance itself but a force obtained by
//! minimising a composite cost over the feasible force interval: a fit term
//! on the inductance map, a continuity term pulling toward the predicted
//! force, and a bounded basin term that keeps the search near the prior
//! where the map is flat. The continuity terms are what pick the right
//! branch when the map folds over at its peak.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    eval_coeffs, invert_dynamic_length, DynamicParams, InductanceParams, ModelCoeffs,
    OperatingEnvelope,
};
use crate::signal::{design, FilterSpec, FilterState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverState {
    pub f: f64,
    pub fdot: f64,
    pub cov: Matrix2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_fit: f64,
    pub w_dyn: f64,
    pub w_reg: f64,
    pub gamma: f64,
}

impl CostWeights {
    /// Fit term only.
    pub fn memoryless() -> Self {
        Self {
            w_fit: 1.0,
            w_dyn: 0.0,
            w_reg: 0.0,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverConfig {
    pub dt: f64,
    pub q: [[f64; 2]; 2],
    pub r: f64,
    pub init_cov: [[f64; 2]; 2],
    pub envelope: OperatingEnvelope,
    pub weights: CostWeights,
    pub grid_points: usize,
    pub refine_tol: f64,
    /// Below this `|dL/dF|` the measurement variance is inflated.
    pub gradient_floor: f64,
}

/// Force-state random walk, N/s.
const SIGMA_F: f64 = 0.05;
/// Force-rate random walk, N/s^2.
const SIGMA_FDOT: f64 = 0.5;
const R_INFLATION: f64 = 10.0;

/// Median `|dL/dF|` over a grid covering the envelope.
pub fn median_gradient(params: &InductanceParams, env: &OperatingEnvelope) -> Result<f64> {
    let (nf, np) = (64, 15);
    let mut grads = Vec::with_capacity(nf * np);
    for j in 0..np {
        let p = env.p_min + (env.p_max - env.p_min) * j as f64 / (np - 1) as f64;
        let c = eval_coeffs(params, p)?;
        for i in 1..=nf {
            let f = env.f_min + env.force_span() * i as f64 / nf as f64;
            let g = c.d_df(f).abs();
            if g.is_finite() {
                grads.push(g);
            }
        }
    }
    if grads.is_empty() {
        return Err(Error::InvalidParameter(
            "inductance gradient undefined over the envelope".into(),
        ));
    }
    grads.sort_by(f64::total_cmp);
    Ok(grads[grads.len() / 2])
}

impl ObserverConfig {
    /// Noise-scaled defaults for a sensor with inductance noise `noise_l` µH.
    pub fn for_sensor(
        params: &InductanceParams,
        envelope: OperatingEnvelope,
        dt: f64,
        noise_l: f64,
    ) -> Result<Self> {
        envelope.validate()?;
        if !(dt > 0.0) || !(noise_l > 0.0) {
            return Err(Error::InvalidParameter(
                "dt and noise level must be positive".into(),
            ));
        }
        let span = envelope.force_span();
        let grad = median_gradient(params, &envelope)?;
        let w_dyn = (3.0 * noise_l / (0.05 * span)).powi(2);
        let cfg = Self {
            dt,
            q: [
                [(SIGMA_F * dt).powi(2), 0.0],
                [0.0, SIGMA_FDOT * SIGMA_FDOT * dt],
            ],
            r: (noise_l / grad).powi(2),
            init_cov: [[0.01, 0.0], [0.0, 0.01]],
            envelope,
            weights: CostWeights {
                w_fit: 1.0,
                w_dyn,
                w_reg: 0.1 * w_dyn,
                gamma: 25.0 / (span * span),
            },
            grid_points: 128,
            refine_tol: 1e-5,
            gradient_floor: 1e-4 * grad,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.envelope.validate()?;
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("observer dt must be positive");
        }
        if !is_psd(&self.q) || !is_psd(&self.init_cov) {
            return bad("Q and the initial covariance must be symmetric positive semidefinite");
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad("R must be positive");
        }
        let w = &self.weights;
        if !(w.w_fit >= 0.0 && w.w_dyn >= 0.0 && w.w_reg >= 0.0 && w.gamma > 0.0) {
            return bad("cost weights must be non-negative and gamma positive");
        }
        if self.grid_points < 16 {
            return bad("grid_points must be at least 16");
        }
        if !(self.refine_tol > 0.0) || !(self.gradient_floor >= 0.0) {
            return bad("refine_tol must be positive");
        }
        Ok(())
    }

    fn q_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.q[0][0], self.q[0][1], self.q[1][0], self.q[1][1])
    }
}

fn is_psd(m: &[[f64; 2]; 2]) -> bool {
    let [[a, b], [c, d]] = *m;
    [a, b, c, d].iter().all(|v| v.is_finite())
        && b == c
        && a >= 0.0
        && d >= 0.0
        && a * d - b * c >= -1e-15 * (a * d).abs()
}

pub fn predict(state: &ObserverState, cfg: &ObserverConfig) -> ObserverState {
    let a = Matrix2::new(1.0, cfg.dt, 0.0, 1.0);
    let mean = a * Vector2::new(state.f, state.fdot);
    let cov = a * state.cov * a.transpose() + cfg.q_matrix();
    ObserverState {
        f: mean[0],
        fdot: mean[1],
        cov: symmetrize(cov),
    }
}

fn symmetrize(m: Matrix2<f64>) -> Matrix2<f64> {
    0.5 * (m + m.transpose())
}

fn cost(c: &ModelCoeffs, w: &CostWeights, l_meas: f64, prior: f64, f: f64) -> f64 {
    let r = c.inductance(f) - l_meas;
    let d2 = (f - prior) * (f - prior);
    w.w_fit * r * r + w.w_dyn * d2 + w.w_reg * (1.0 - 1.0 / (1.0 + w.gamma * d2))
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimum of `g` on `[a, b]` to width `tol`.
pub(crate) fn golden_section(
    mut a: f64,
    mut b: f64,
    tol: f64,
    g: impl Fn(f64) -> f64,
) -> (f64, f64) {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut g1, mut g2) = (g(x1), g(x2));
    while b - a > tol {
        if g1 <= g2 {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - INV_PHI * (b - a);
            g1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + INV_PHI * (b - a);
            g2 = g(x2);
        }
    }
    let x = 0.5 * (a + b);
    (x, g(x))
}

/// Force minimising the composite cost over the envelope's force interval.
pub fn solve_pseudo_measurement(
    l_meas: f64,
    p: f64,
    prior_f: f64,
    params: &InductanceParams,
    cfg: &ObserverConfig,
) -> Result<f64> {
    let env = &cfg.envelope;
    if !env.contains_pressure(p) {
        return Err(Error::Envelope {
            pressure: p,
            reason: format!("outside [{}, {}] MPa", env.p_min, env.p_max),
        });
    }
    if !prior_f.is_finite() || !l_meas.is_finite() {
        return Err(Error::InvalidParameter(
            "measurement and prior must be finite".into(),
        ));
    }
    let c = eval_coeffs(params, p)?;
    let g = |f: f64| cost(&c, &cfg.weights, l_meas, prior_f, f);
    let n = cfg.grid_points;
    let h = env.force_span() / (n - 1) as f64;
    let node = |i: usize| {
        if i + 1 == n {
            env.f_max
        } else {
            env.f_min + h * i as f64
        }
    };

    let (mut best_i, mut best) = (0, f64::INFINITY);
    for i in 0..n {
        let v = g(node(i));
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let lo = node(best_i.saturating_sub(1));
    let hi = node((best_i + 1).min(n - 1));
    let (f_ref, v_ref) = golden_section(lo, hi, cfg.refine_tol, g);
    Ok(if v_ref < best { f_ref } else { node(best_i) })
}

/// Scalar update with `H = [1, 0]`, Joseph form.
pub fn update(prior: &ObserverState, f_star: f64, r: f64) -> ObserverState {
    let cov = prior.cov;
    let s = cov[(0, 0)] + r;
    let k = Vector2::new(cov[(0, 0)] / s, cov[(1, 0)] / s);
    let innov = f_star - prior.f;
    let ikh = Matrix2::new(1.0 - k[0], 0.0, -k[1], 1.0);
    let cov = ikh * cov * ikh.transpose() + k * k.transpose() * r;
    ObserverState {
        f: prior.f + k[0] * innov,
        fdot: prior.fdot + k[1] * innov,
        cov: symmetrize(cov),
    }
}

pub fn reset(f0: f64, cfg: &ObserverConfig) -> Result<ObserverState> {
    if !cfg.envelope.contains_force(f0) {
        return Err(Error::Domain(f0));
    }
    let [[a, b], [c, d]] = cfg.init_cov;
    Ok(ObserverState {
        f: f0,
        fdot: 0.0,
        cov: Matrix2::new(a, b, c, d),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub f_hat: f64,
    pub x_hat: f64,
    /// Pseudo-measurement fed to the update.
    pub f_star: f64,
    pub l_filtered: f64,
}

/// Filter, predict, invert, update and map force back to length.
pub fn estimate_step(
    state: &ObserverState,
    l_raw: f64,
    p: f64,
    params: &InductanceParams,
    dynamic: &DynamicParams,
    cfg: &ObserverConfig,
    filt: &mut FilterState,
) -> Result<(ObserverState, Estimate)> {
    let l = filt.step(l_raw);
    let prior = predict(state, cfg);
    let f_star = solve_pseudo_measurement(l, p, prior.f, params, cfg)?;
    let c = eval_coeffs(params, p)?;
    let r = if f_star > 0.0 && c.d_df(f_star).abs() < cfg.gradient_floor {
        cfg.r * R_INFLATION
    } else {
        cfg.r
    };
    let post = update(&prior, f_star, r);
    let x_hat = invert_dynamic_length(dynamic, post.f, p)?;
    Ok((
        post,
        Estimate {
            f_hat: post.f,
            x_hat,
            f_star,
            l_filtered: l,
        },
    ))
}

/// Single-actuator estimator owning its filter and state.
#[derive(Debug, Clone)]
pub struct Observer {
    cfg: ObserverConfig,
    params: InductanceParams,
    dynamic: DynamicParams,
    filter: FilterState,
    state: Option<ObserverState>,
    initial_force: Option<f64>,
}

impl Observer {
    /// With no `initial_force`, the first sample is inverted without a
    /// prior and the filter is primed with it.
    pub fn new(
        cfg: ObserverConfig,
        params: InductanceParams,
        dynamic: DynamicParams,
        filter: &FilterSpec,
        initial_force: Option<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        dynamic.validate()?;
        if let Some(f0) = initial_force {
            reset(f0, &cfg)?;
        }
        Ok(Self {
            cfg,
            params,
            dynamic,
            filter: design(filter)?,
            state: None,
            initial_force,
        })
    }

    pub fn config(&self) -> &ObserverConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&ObserverState> {
        self.state.as_ref()
    }

    pub fn step(&mut self, l_raw: f64, p: f64) -> Result<Estimate> {
        let state = match self.state {
            Some(s) => s,
            None => {
                self.filter.prime(l_raw);
                let f0 = match self.initial_force {
                    Some(f) => f,
                    None => memoryless_inverse(l_raw, p, &self.params, &self.cfg)?,
                };
                reset(f0, &self.cfg)?
            }
        };
        let (next, est) = estimate_step(
            &state,
            l_raw,
            p,
            &self.params,
            &self.dynamic,
            &self.cfg,
            &mut self.filter,
        )?;
        self.state = Some(next);
        Ok(est)
    }
}

/// Best-fitting preimage of `l_meas`, ignoring any history.
pub fn memoryless_inverse(
    l_meas: f64,
    p: f64,
    params: &InductanceParams,
    cfg: &ObserverConfig,
) -> Result<f64> {
    let cfg = ObserverConfig {
        weights: CostWeights::memoryless(),
        ..*cfg
    };
    solve_pseudo_measurement(l_meas, p, 0.0, params, &cfg)
}
