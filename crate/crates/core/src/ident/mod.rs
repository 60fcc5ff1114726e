//! Parameter identification and goodness-of-fit metrics.

mod dataset;
pub mod trf;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, Sample};
pub use trf::{IterRecord, Termination, TrfOptions};

use crate::error::{Error, Result};
use crate::model::{pow_nonneg, DynamicParams, InductanceParams};

/// Outcome of a fit, with the accepted-iteration log when iterative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport<P> {
    pub params: P,
    /// Residual RMSE in target units.
    pub rmse: f64,
    pub r2: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub log: Vec<IterRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goodness {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    /// RMSE as a percentage of the observed range.
    pub nrmse: f64,
}

pub fn goodness(predicted: &[f64], observed: &[f64]) -> Result<Goodness> {
    if predicted.len() != observed.len() {
        return Err(Error::InsufficientData(format!(
            "series lengths differ ({} vs {})",
            predicted.len(),
            observed.len()
        )));
    }
    let n = observed.len();
    if n < 2 {
        return Err(Error::InsufficientData("need at least two points".into()));
    }
    let nf = n as f64;
    let (mut sse, mut sae) = (0.0, 0.0);
    for (p, o) in predicted.iter().zip(observed) {
        let e = p - o;
        sse += e * e;
        sae += e.abs();
    }
    let mean = observed.iter().sum::<f64>() / nf;
    let sst: f64 = observed.iter().map(|o| (o - mean) * (o - mean)).sum();
    let (lo, hi) = observed
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &o| {
            (lo.min(o), hi.max(o))
        });
    if sst == 0.0 || hi == lo {
        return Err(Error::ConstantObserved("r2 and nrmse"));
    }
    let rmse = (sse / nf).sqrt();
    Ok(Goodness {
        rmse,
        mae: sae / nf,
        r2: 1.0 - sse / sst,
        nrmse: 100.0 * rmse / (hi - lo),
    })
}

/// Ordinary least squares for `F = k x + c P + b`, with `x0 = -b / k`.
pub fn fit_dynamic(data: &Dataset) -> Result<FitReport<DynamicParams>> {
    data.require_column("F")?;
    data.require_column("x")?;
    let n = data.len();
    if n < 3 {
        return Err(Error::InsufficientData(
            "dynamic fit needs at least 3 samples".into(),
        ));
    }
    let xs: Vec<f64> = data
        .samples
        .iter()
        .map(|s| s.x.unwrap_or_default())
        .collect();
    let ps: Vec<f64> = data.samples.iter().map(|s| s.p).collect();
    let fs: Vec<f64> = data
        .samples
        .iter()
        .map(|s| s.f.unwrap_or_default())
        .collect();

    // centre and scale the columns so the rank test is meaningful
    let centre = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s = (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64).sqrt();
        (m, s)
    };
    let (mx, sx) = centre(&xs);
    let (mp, sp) = centre(&ps);
    let tol = 1e-12;
    if sx <= tol * mx.abs().max(1.0) || sp <= tol * mp.abs().max(1.0) {
        return Err(Error::RankDeficient(
            "length and pressure must each take at least two distinct values".into(),
        ));
    }
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => (xs[i] - mx) / sx,
        1 => (ps[i] - mp) / sp,
        _ => 1.0,
    });
    let b = DVector::from_column_slice(&fs);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax {
        return Err(Error::RankDeficient(format!(
            "singular values {smin:e} / {smax:e}: length and pressure are collinear"
        )));
    }
    let coef = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let k = coef[0] / sx;
    let c = coef[1] / sp;
    let intercept = coef[2] - k * mx - c * mp;
    if k.abs() < crate::model::STIFFNESS_EPS {
        return Err(Error::DegenerateStiffness(k));
    }
    let params = DynamicParams {
        k,
        x0: -intercept / k,
        c,
    };
    let predicted: Vec<f64> = xs
        .iter()
        .zip(&ps)
        .map(|(&x, &p)| crate::model::eval_dynamic_force(&params, x, p))
        .collect();
    let g = goodness(&predicted, &fs)?;
    Ok(FitReport {
        params,
        rmse: g.rmse,
        r2: g.r2,
        iterations: 1,
        converged: true,
        best_start: None,
        log: Vec::new(),
    })
}

/// Per-coefficient box for the inductance fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bounds {
    pub lower: [f64; 10],
    pub upper: [f64; 10],
}

impl Default for Bounds {
    /// `|p_i| <= 1e3`, with the exponent intercepts held at or above 0.05.
    fn default() -> Self {
        let mut lower = [-1e3; 10];
        lower[3] = 0.05;
        lower[7] = 0.05;
        Self {
            lower,
            upper: [1e3; 10],
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        for i in 0..10 {
            if !(self.lower[i] < self.upper[i]) {
                return Err(Error::InvalidBounds(format!(
                    "lower[{i}] = {} is not below upper[{i}] = {}",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &[f64; 10]) -> bool {
        (0..10).all(|i| p[i] >= self.lower[i] && p[i] <= self.upper[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Number of starting points, the first being `init` itself.
    pub starts: usize,
    /// Relative half-width of the uniform perturbation for extra starts.
    pub perturbation: f64,
    pub seed: u64,
    pub solver: TrfOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            perturbation: 0.2,
            seed: 0,
            solver: TrfOptions::default(),
        }
    }
}

/// Residuals `L(F_i, P_i; p) - L_i` over the dataset.
struct InductanceProblem {
    force: Vec<f64>,
    pressure: Vec<f64>,
    inductance: Vec<f64>,
}

impl InductanceProblem {
    fn predict(&self, p: &[f64], i: usize) -> f64 {
        let (f, pr) = (self.force[i], self.pressure[i]);
        let l = |k: usize| p[2 * k] * pr + p[2 * k + 1];
        let (l1, l2, l3, l4, l5) = (l(0), l(1), l(2), l(3), l(4));
        let fl2 = pow_nonneg(f, l2);
        if fl2 == 0.0 {
            return l5;
        }
        l1 * fl2 * (l3 * pow_nonneg(f, l4)).exp() + l5
    }
}

impl trf::LeastSquares for InductanceProblem {
    fn num_residuals(&self) -> usize {
        self.force.len()
    }

    fn num_params(&self) -> usize {
        10
    }

    fn residuals(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.predict(x, i) - self.inductance[i];
        }
    }

    fn jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>) {
        for i in 0..self.force.len() {
            let (f, pr) = (self.force[i], self.pressure[i]);
            let l = |k: usize| x[2 * k] * pr + x[2 * k + 1];
            let (l1, l2, l3, l4) = (l(0), l(1), l(2), l(3));
            // partials with respect to each lambda
            let mut dl = [0.0, 0.0, 0.0, 0.0, 1.0];
            if f > 0.0 {
                let ln_f = f.ln();
                let fl4 = pow_nonneg(f, l4);
                let base = pow_nonneg(f, l2) * (l3 * fl4).exp();
                dl[0] = base;
                dl[1] = l1 * base * ln_f;
                dl[2] = l1 * base * fl4;
                dl[3] = l1 * base * l3 * fl4 * ln_f;
            }
            for (k, d) in dl.iter().enumerate() {
                jac[(i, 2 * k)] = d * pr;
                jac[(i, 2 * k + 1)] = *d;
            }
        }
    }
}

/// Bounded trust-region fit of the inductance map, multi-started from
/// seeded perturbations of `init`. The best final cost wins; ties go to the
/// lowest start index.
pub fn fit_inductance(
    data: &Dataset,
    init: &InductanceParams,
    bounds: &Bounds,
    opts: &FitOptions,
) -> Result<FitReport<InductanceParams>> {
    data.require_column("F")?;
    bounds.validate()?;
    if !bounds.contains(&init.p) {
        return Err(Error::InvalidBounds(
            "initial parameters violate the bounds".into(),
        ));
    }
    if data.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "inductance fit needs at least 20 samples, got {}",
            data.len()
        )));
    }
    let mut levels: Vec<f64> = data.samples.iter().map(|s| s.p).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if levels.len() < 2 {
        return Err(Error::InsufficientData(
            "inductance fit needs at least two pressure levels".into(),
        ));
    }

    let problem = InductanceProblem {
        force: data
            .samples
            .iter()
            .map(|s| s.f.unwrap_or_default().max(0.0))
            .collect(),
        pressure: data.samples.iter().map(|s| s.p).collect(),
        inductance: data.samples.iter().map(|s| s.l).collect(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<[f64; 10]> = (0..opts.starts.max(1))
        .map(|i| {
            let mut p = init.p;
            if i > 0 {
                for (j, v) in p.iter_mut().enumerate() {
                    let u: f64 = rng.random_range(-1.0..=1.0);
                    *v = (*v * (1.0 + opts.perturbation * u))
                        .clamp(bounds.lower[j], bounds.upper[j]);
                }
            }
            p
        })
        .collect();

    let results: Vec<trf::TrfResult> = starts
        .par_iter()
        .map(|x0| trf::solve(&problem, x0, &bounds.lower, &bounds.upper, &opts.solver))
        .collect();

    let (best_idx, best) = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.cost.is_finite())
        .min_by(|(ia, a), (ib, b)| a.cost.total_cmp(&b.cost).then(ia.cmp(ib)))
        .ok_or_else(|| Error::InsufficientData("no start produced a finite cost".into()))?;

    let mut p = [0.0; 10];
    p.copy_from_slice(&best.x);
    let predicted: Vec<f64> = (0..problem.force.len())
        .map(|i| problem.predict(&p, i))
        .collect();
    let g = goodness(&predicted, &problem.inductance)?;
    Ok(FitReport {
        params: InductanceParams { p },
        rmse: g.rmse,
        r2: g.r2,
        iterations: best.iterations,
        converged: best.converged,
        best_start: Some(best_idx),
        log: best.log.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::eval_dynamic_force;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn goodness_examples() {
        let obs = [0.0, 1.0, 2.0, 3.0];
        let g = goodness(&obs, &obs).unwrap();
        assert_eq!((g.rmse, g.mae, g.r2), (0.0, 0.0, 1.0));

        let g = goodness(&[0.0, 1.0, 2.0, 4.0], &obs).unwrap();
        assert!((g.rmse - 0.5).abs() < 1e-15);
        assert!((g.mae - 0.25).abs() < 1e-15);
        assert!((g.nrmse - 100.0 / 6.0).abs() < 1e-12);

        let g = goodness(&[1.5; 4], &obs).unwrap();
        assert!(g.r2.abs() < 1e-15);
    }

    #[test]
    fn goodness_rejects_constant_and_short() {
        assert!(matches!(
            goodness(&[1.0, 2.0], &[1.0, 1.0]),
            Err(Error::ConstantObserved(_))
        ));
        assert!(goodness(&[1.0], &[1.0]).is_err());
        assert!(goodness(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    fn dynamic_data(noise: f64, n: usize, seed: u64) -> Dataset {
        let truth = DynamicParams::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let samples = (0..n)
            .map(|i| {
                let x = 0.1 + 0.07 * ((i * 7919) % n) as f64 / n as f64;
                let p = 0.05 * (i % 14) as f64;
                let mut f = eval_dynamic_force(&truth, x, p);
                if noise > 0.0 {
                    f += normal.sample(&mut rng);
                }
                Sample::new(i as f64 * 0.01, p, 4.8)
                    .with_force(f)
                    .with_length(x)
            })
            .collect();
        Dataset::new(samples).unwrap()
    }

    #[test]
    fn dynamic_fit_recovers_noise_free_parameters() {
        let truth = DynamicParams::reference();
        let fit = fit_dynamic(&dynamic_data(0.0, 50, 1)).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.params.k, truth.k) < 1e-9);
        assert!(rel(fit.params.x0, truth.x0) < 1e-9);
        assert!(rel(fit.params.c, truth.c) < 1e-9);
    }

    #[test]
    fn dynamic_fit_with_noise() {
        let fit = fit_dynamic(&dynamic_data(0.05, 200, 42)).unwrap();
        assert!(
            ((fit.params.k - 38.6) / 38.6).abs() < 0.05,
            "k = {}",
            fit.params.k
        );
    }

    #[test]
    fn dynamic_fit_rank_deficient() {
        let samples = (0..10)
            .map(|i| {
                Sample::new(i as f64, 0.2, 4.8)
                    .with_force(1.0)
                    .with_length(0.12)
            })
            .collect();
        let ds = Dataset::new(samples).unwrap();
        assert!(matches!(fit_dynamic(&ds), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let problem = InductanceProblem {
            force: vec![0.0, 0.3, 1.1, 2.5, 3.7],
            pressure: vec![0.0, 0.1, 0.3, 0.5, 0.65],
            inductance: vec![0.0; 5],
        };
        let x = [0.05, 0.3, 0.1, 1.0, 0.02, -0.1, -0.15, 2.0, 0.4, 4.7];
        let mut jac = DMatrix::zeros(5, 10);
        trf::LeastSquares::jacobian(&problem, &x, &mut jac);
        for j in 0..10 {
            let h = 1e-6 * x[j].abs().max(1.0);
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            for i in 0..5 {
                let fd = (problem.predict(&xp, i) - problem.predict(&xm, i)) / (2.0 * h);
                assert!(
                    (fd - jac[(i, j)]).abs() < 1e-7 * fd.abs().max(1.0),
                    "({i},{j}) fd {fd} vs {}",
                    jac[(i, j)]
                );
            }
        }
    }

    #[test]
    fn inductance_fit_rejects_init_outside_bounds() {
        let samples: Vec<Sample> = (0..30)
            .map(|i| Sample::new(i as f64, 0.1 * (i % 2) as f64, 4.8).with_force(0.1 * i as f64))
            .collect();
        let ds = Dataset::new(samples).unwrap();
        let init = InductanceParams { p: [0.0; 10] };
        let err =
            fit_inductance(&ds, &init, &Bounds::default(), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidBounds(_)));
    }

    #[test]
    fn inductance_fit_requires_force_column() {
        let samples: Vec<Sample> = (0..30).map(|i| Sample::new(i as f64, 0.1, 4.8)).collect();
        let ds = Dataset::new(samples).unwrap();
        let err = fit_inductance(
            &ds,
            &InductanceParams::from_constant_coeffs([0.3, 1.0, -0.1, 2.0, 4.7]),
            &Bounds::default(),
            &FitOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "F"));
    }
}
