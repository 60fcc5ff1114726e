//! End-to-end acceptance checks. Each test prints one PASS/FAIL line with
//! the measured value next to its threshold, then asserts.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ptca_sense::control::{compare, run_perturbation, Bench, Mode, Quantity};
use ptca_sense::ident::{
    fit_dynamic, fit_inductance, goodness, Bounds, Dataset, FitOptions, Sample,
};
use ptca_sense::model::{
    d_inductance_df, eval_coeffs, eval_dynamic_force, eval_inductance, DynamicParams,
    InductanceParams, OperatingEnvelope,
};
use ptca_sense::observer::{
    memoryless_inverse, solve_pseudo_measurement, Observer, ObserverConfig,
};
use ptca_sense::plant::{reference_inductance_params, run_scenario, PlantConfig, Scenario};
use ptca_sense::signal::{design, FilterSpec};

const GRADIENT_REL_TOL: f64 = 1e-6;
const DYNAMIC_REL_TOL: f64 = 1e-9;
const INDUCTANCE_EXACT_RMSE: f64 = 1e-8;
const CALIBRATION_MIN_R2: f64 = 0.95;
const CALIBRATION_RMSE_SIGMAS: f64 = 3.0;
const CUTOFF_DB: f64 = -3.01;
const CUTOFF_DB_TOL: f64 = 0.1;
const DECADE_ATTENUATION_DB: f64 = 55.0;
const ORACLE_GRID: usize = 100_000;
const ORACLE_INSTANCES: usize = 100;
const BRANCH_TRACK_FRAC: f64 = 0.05;
const BRANCH_FLIP_FRAC: f64 = 0.25;
const FORCE_NRMSE_MAX: f64 = 5.0;
const LENGTH_NRMSE_MAX: f64 = 12.0;
const FORCE_IMPROVEMENT_MIN: f64 = 40.0;
const LENGTH_IMPROVEMENT_MIN: f64 = 50.0;
const SELF_TO_SENSOR_MIN: f64 = 0.8;
const PERTURB_MAX_ERR: f64 = 0.09;
const PERTURB_RMSE: f64 = 0.05;
const PERTURB_DRIFT: f64 = 0.02;
const PSD_STEPS: usize = 10_000;

fn verdict(n: u32, pass: bool, detail: String, started: Instant) {
    println!(
        "criterion {n:>2}: {} {detail} [{:.2} s]",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_01_gradient_matches_central_differences() {
    let started = Instant::now();
    let params = reference_inductance_params();
    let env = OperatingEnvelope::default();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let f = 0.01 + (env.f_max - 0.01) * i as f64 / 19.0;
        for j in 0..20 {
            let p = env.p_min + (env.p_max - env.p_min) * j as f64 / 19.0;
            let analytic = d_inductance_df(&params, f, p).unwrap();
            let h = 1e-5 * f.max(1e-2);
            let fd = (eval_inductance(&params, f + h, p).unwrap()
                - eval_inductance(&params, f - h, p).unwrap())
                / (2.0 * h);
            // the gradient vanishes at the peak; scale by the local slope magnitude
            let scale = analytic.abs().max(1e-3);
            worst = worst.max((analytic - fd).abs() / scale);
        }
    }
    let pass = worst <= GRADIENT_REL_TOL;
    verdict(
        1,
        pass,
        format!("worst rel err {worst:.2e} <= {GRADIENT_REL_TOL:e}"),
        started,
    );
    assert!(pass);
}

fn noise_free_inductance_data(params: &InductanceParams) -> Dataset {
    let mut samples = Vec::new();
    let mut t = 0.0;
    for j in 0..8 {
        let p = 0.1 * j as f64;
        for i in 0..60 {
            let f = 0.05 + 4.9 * i as f64 / 59.0;
            t += 0.01;
            let l = eval_inductance(params, f, p).unwrap();
            samples.push(Sample::new(t, p, l).with_force(f));
        }
    }
    Dataset::new(samples).unwrap()
}

#[test]
fn criterion_02_noise_free_identification_is_exact() {
    let started = Instant::now();
    let truth = DynamicParams::reference();
    let samples = (0..60)
        .map(|i| {
            let x = 0.1 + 0.06 * ((i * 37) % 60) as f64 / 60.0;
            let p = 0.05 * (i % 13) as f64;
            Sample::new(i as f64 * 0.01, p, 4.8)
                .with_force(eval_dynamic_force(&truth, x, p))
                .with_length(x)
        })
        .collect();
    let d = fit_dynamic(&Dataset::new(samples).unwrap()).unwrap().params;
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let dyn_err = rel(d.k, truth.k)
        .max(rel(d.x0, truth.x0))
        .max(rel(d.c, truth.c));

    let reference = reference_inductance_params();
    let data = noise_free_inductance_data(&reference);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_rmse: f64 = 0.0;
    for trial in 0..3 {
        let mut init = reference.p;
        for v in &mut init {
            *v *= 1.0 + rng.random_range(-0.2..=0.2);
        }
        let opts = FitOptions {
            starts: 6,
            perturbation: 0.2,
            seed: trial,
            ..FitOptions::default()
        };
        let fit = fit_inductance(
            &data,
            &InductanceParams::new(init).unwrap(),
            &Bounds::default(),
            &opts,
        )
        .unwrap();
        worst_rmse = worst_rmse.max(fit.rmse);
    }
    let pass = dyn_err <= DYNAMIC_REL_TOL && worst_rmse <= INDUCTANCE_EXACT_RMSE;
    verdict(
        2,
        pass,
        format!(
            "dynamic rel err {dyn_err:.1e} <= {DYNAMIC_REL_TOL:e}, inductance rmse {worst_rmse:.1e} <= {INDUCTANCE_EXACT_RMSE:e} uH"
        ),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_03_calibration_grid_fit_quality() {
    let started = Instant::now();
    let plant = PlantConfig::default();
    let data = run_scenario(&Scenario::calibration_grid(), &plant).unwrap();
    let mut init = plant.inductance.p;
    for v in &mut init {
        *v *= 1.1;
    }
    let fit = fit_inductance(
        &data,
        &InductanceParams::new(init).unwrap(),
        &Bounds::default(),
        &FitOptions::default(),
    )
    .unwrap();
    let limit = CALIBRATION_RMSE_SIGMAS * plant.noise_l;
    let pass = fit.r2 >= CALIBRATION_MIN_R2 && fit.rmse <= limit;
    verdict(
        3,
        pass,
        format!(
            "R2 {:.4} >= {CALIBRATION_MIN_R2}, rmse {:.4} <= {limit:.3} uH",
            fit.r2, fit.rmse
        ),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_04_filter_spectrum_and_streaming() {
    let started = Instant::now();
    let spec = FilterSpec {
        order: 3,
        cutoff_hz: 10.0,
        sample_rate_hz: 1000.0,
    };
    let mut filt = design(&spec).unwrap();
    let at_fc = filt.magnitude_db(10.0);
    let at_decade = filt.magnitude_db(100.0);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let input: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let batch = filt.filter(&input);
    filt.reset();
    let streamed: Vec<f64> = input.iter().map(|&x| filt.step(x)).collect();
    let exact = batch
        .iter()
        .zip(&streamed)
        .all(|(a, b)| a.to_bits() == b.to_bits());

    let pass =
        (at_fc - CUTOFF_DB).abs() <= CUTOFF_DB_TOL && -at_decade >= DECADE_ATTENUATION_DB && exact;
    verdict(
        4,
        pass,
        format!(
            "|H(fc)| {at_fc:.3} dB, attenuation at 10 fc {:.1} dB >= {DECADE_ATTENUATION_DB}, streaming bit-exact {exact}",
            -at_decade
        ),
        started,
    );
    assert!(pass);
}

/// Composite cost written out independently of the library.
fn oracle_cost(
    params: &InductanceParams,
    cfg: &ObserverConfig,
    l: f64,
    p: f64,
    prior: f64,
    f: f64,
) -> f64 {
    let w = &cfg.weights;
    let r = eval_inductance(params, f, p).unwrap() - l;
    let d2 = (f - prior).powi(2);
    w.w_fit * r * r + w.w_dyn * d2 + w.w_reg * (1.0 - 1.0 / (1.0 + w.gamma * d2))
}

#[test]
fn criterion_05_inner_optimizer_matches_brute_force() {
    let started = Instant::now();
    let params = reference_inductance_params();
    let base =
        ObserverConfig::for_sensor(&params, OperatingEnvelope::default(), 0.01, 0.01).unwrap();
    let env = base.envelope;
    let h = env.force_span() / (ORACLE_GRID - 1) as f64;
    let tol = base.refine_tol.max(h);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..ORACLE_INSTANCES {
        let p = rng.random_range(env.p_min..=env.p_max);
        let f_true = rng.random_range(env.f_min..=env.f_max);
        let prior = (f_true + rng.random_range(-0.3..=0.3)).clamp(env.f_min, env.f_max);
        let l = eval_inductance(&params, f_true, p).unwrap() + rng.random_range(-0.02..=0.02);
        let mut cfg = base;
        cfg.weights.w_dyn *= rng.random_range(0.1..10.0);
        cfg.weights.w_reg *= rng.random_range(0.1..10.0);

        let solved = solve_pseudo_measurement(l, p, prior, &params, &cfg).unwrap();
        let (mut best_f, mut best) = (env.f_min, f64::INFINITY);
        for i in 0..ORACLE_GRID {
            let f = env.f_min + h * i as f64;
            let v = oracle_cost(&params, &cfg, l, p, prior, f);
            if v < best {
                best = v;
                best_f = f;
            }
        }
        worst = worst.max((solved - best_f).abs());
    }
    let pass = worst <= tol;
    verdict(
        5,
        pass,
        format!("worst |f* - f_grid| {worst:.2e} <= {tol:.1e} over {ORACLE_INSTANCES} instances"),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_06_branch_disambiguation() {
    let started = Instant::now();
    let params = reference_inductance_params();
    let dt = 0.01;
    let cfg = ObserverConfig::for_sensor(&params, OperatingEnvelope::default(), dt, 0.005).unwrap();
    let p = 0.3;
    let peak = eval_coeffs(&params, p).unwrap().peak_force().unwrap();
    let (f_lo, f_hi) = (0.5, 2.0 * peak - 0.5);
    let range = f_hi - f_lo;
    let noise = Normal::new(0.0, 0.005).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let mut obs = Observer::new(
        cfg,
        params,
        DynamicParams::reference(),
        &FilterSpec::default(),
        Some(f_lo),
    )
    .unwrap();
    // 5 s per leg, about 0.77 N/s through the peak
    let n = 500;
    let (mut worst_obs, mut worst_memoryless): (f64, f64) = (0.0, 0.0);
    for i in 0..=2 * n {
        let s = if i <= n { i } else { 2 * n - i } as f64 / n as f64;
        let f = f_lo + range * s;
        let l = eval_inductance(&params, f, p).unwrap() + noise.sample(&mut rng);
        let est = obs.step(l, p).unwrap();
        // skip the filter's start-up transient
        if i >= 20 {
            worst_obs = worst_obs.max((est.f_hat - f).abs());
        }
        let naive = memoryless_inverse(est.l_filtered, p, &params, &cfg).unwrap();
        worst_memoryless = worst_memoryless.max((naive - f).abs());
    }
    let (obs_frac, flip_frac) = (worst_obs / range, worst_memoryless / range);
    let pass = obs_frac < BRANCH_TRACK_FRAC && flip_frac >= BRANCH_FLIP_FRAC;
    verdict(
        6,
        pass,
        format!(
            "observer max err {:.2}% < {}%, memoryless max err {:.1}% >= {}% of range",
            100.0 * obs_frac,
            100.0 * BRANCH_TRACK_FRAC,
            100.0 * flip_frac,
            100.0 * BRANCH_FLIP_FRAC
        ),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_07_cyclic_estimation() {
    let started = Instant::now();
    let plant = PlantConfig::default();
    let bench = Bench::identify(plant.clone()).unwrap();
    let data = run_scenario(&Scenario::cyclic_estimation(), &plant).unwrap();
    let mut obs = Observer::new(
        bench.observer,
        bench.inductance,
        bench.dynamic,
        &bench.filter,
        None,
    )
    .unwrap();
    let (mut fh, mut xh, mut ft, mut xt) = (vec![], vec![], vec![], vec![]);
    for s in &data.samples {
        let e = obs.step(s.l, s.p).unwrap();
        fh.push(e.f_hat);
        xh.push(e.x_hat);
        ft.push(s.f_true.unwrap());
        xt.push(s.x.unwrap());
    }
    let f = goodness(&fh, &ft).unwrap().nrmse;
    let x = goodness(&xh, &xt).unwrap().nrmse;
    let pass = f <= FORCE_NRMSE_MAX && x <= LENGTH_NRMSE_MAX && f < x;
    verdict(
        7,
        pass,
        format!("force NRMSE {f:.2}% <= {FORCE_NRMSE_MAX}%, length NRMSE {x:.2}% <= {LENGTH_NRMSE_MAX}%, force < length"),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_08_closed_loop_improvement() {
    let started = Instant::now();
    let bench = Bench::identify(PlantConfig::default()).unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for s in Scenario::tracking_suite() {
        let g = compare(&s, &bench).unwrap();
        let sensor = g.improvement(Mode::SensorFb).unwrap();
        let selfs = g.improvement(Mode::SelfSensing).unwrap();
        let min = match g.quantity {
            Quantity::Force => FORCE_IMPROVEMENT_MIN,
            Quantity::Length => LENGTH_IMPROVEMENT_MIN,
        };
        let ok = selfs >= min && selfs >= SELF_TO_SENSOR_MIN * sensor;
        pass &= ok;
        lines.push(format!(
            "{}: self {selfs:.1}% (>= {min}%), sensor {sensor:.1}%, ratio {:.2}",
            g.scenario,
            selfs / sensor
        ));
    }
    verdict(
        8,
        pass,
        format!("ratio floor {SELF_TO_SENSOR_MIN}"),
        started,
    );
    for l in &lines {
        println!("    {l}");
    }
    assert!(pass);
}

#[test]
fn criterion_09_perturbation_robustness() {
    let started = Instant::now();
    let bench = Bench::identify(PlantConfig::default()).unwrap();
    let r = run_perturbation(&Scenario::load_perturbation(), &bench).unwrap();
    let pass = r.max_abs_error <= PERTURB_MAX_ERR
        && r.rmse <= PERTURB_RMSE
        && r.drift.abs() <= PERTURB_DRIFT;
    verdict(
        9,
        pass,
        format!(
            "max {:.4} <= {PERTURB_MAX_ERR} N, rmse {:.4} <= {PERTURB_RMSE} N, drift {:.4} <= {PERTURB_DRIFT} N",
            r.max_abs_error, r.rmse, r.drift
        ),
        started,
    );
    assert!(pass);
}

fn run_cli(out: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_ptca-sense"))
        .args(args)
        .args(["--seed", "17", "--jobs", "2", "--out"])
        .arg(out)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&status.stderr)
    );
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                files.push((name, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_10_determinism_and_covariance() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let commands: [&[&str]; 6] = [
        &["fit"],
        &["estimate"],
        &["simulate"],
        &["track"],
        &["perturb"],
        &["report"],
    ];
    let mut identical = true;
    let mut files = 0;
    for (i, cmd) in commands.iter().enumerate() {
        let a = tmp.path().join(format!("{i}a"));
        let b = tmp.path().join(format!("{i}b"));
        run_cli(&a, cmd);
        run_cli(&b, cmd);
        let (ta, tb) = (tree(&a), tree(&b));
        files += ta.len();
        identical &= !ta.is_empty() && ta == tb;
    }

    let params = reference_inductance_params();
    let cfg =
        ObserverConfig::for_sensor(&params, OperatingEnvelope::default(), 0.01, 0.01).unwrap();
    let mut obs = Observer::new(
        cfg,
        params,
        DynamicParams::reference(),
        &FilterSpec::default(),
        None,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut psd = true;
    for i in 0..PSD_STEPS {
        let t = i as f64 * 0.01;
        let p = 0.35 + 0.3 * (0.07 * t).sin();
        let f = 2.2 + 1.5 * (0.5 * t).sin() + 0.4 * (1.7 * t).sin();
        let l = eval_inductance(&params, f, p).unwrap() + noise.sample(&mut rng);
        obs.step(l, p).unwrap();
        let c = obs.state().unwrap().cov;
        let sym = c[(0, 1)] == c[(1, 0)];
        let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
        psd &= sym && c[(0, 0)] >= 0.0 && c[(1, 1)] >= 0.0 && det >= -1e-18;
    }
    let pass = identical && psd;
    verdict(
        10,
        pass,
        format!("{files} output files byte-identical across reruns: {identical}; covariance symmetric PSD over {PSD_STEPS} steps: {psd}"),
        started,
    );
    assert!(pass);
}
