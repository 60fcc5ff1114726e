use nalgebra::Matrix2;
use proptest::prelude::*;

use ptca_sense::control::{feedforward_pressure, pid_step, ControllerState, PidGains, Target};
use ptca_sense::ident::{goodness, Dataset, Sample};
use ptca_sense::model::{eval_inductance, DynamicParams, OperatingEnvelope};
use ptca_sense::observer::{
    predict, solve_pseudo_measurement, update, ObserverConfig, ObserverState,
};
use ptca_sense::plant::{
    reference_inductance_params, Drive, Plant, PlantCommand, PlantConfig, PlayElement,
};
use ptca_sense::signal::{design, FilterSpec};

fn observer_cfg() -> ObserverConfig {
    ObserverConfig::for_sensor(
        &reference_inductance_params(),
        OperatingEnvelope::default(),
        0.01,
        0.01,
    )
    .unwrap()
}

fn is_psd(c: &Matrix2<f64>) -> bool {
    let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
    (c[(0, 1)] - c[(1, 0)]).abs() <= 1e-12 * c.abs().max()
        && c[(0, 0)] >= 0.0
        && c[(1, 1)] >= 0.0
        && det >= -1e-12 * (c[(0, 0)] * c[(1, 1)]).abs()
}

fn psd_matrix() -> impl Strategy<Value = Matrix2<f64>> {
    (1e-6..10.0f64, 1e-6..10.0f64, -0.99..0.99f64).prop_map(|(a, d, rho)| {
        let b = rho * (a * d).sqrt();
        Matrix2::new(a, b, b, d)
    })
}

proptest! {
    #[test]
    fn predict_and_update_preserve_psd(
        cov in psd_matrix(),
        f in 0.0..5.0f64,
        fdot in -2.0..2.0f64,
        f_star in 0.0..5.0f64,
        r in 1e-6..1.0f64,
    ) {
        let cfg = observer_cfg();
        let s = ObserverState { f, fdot, cov };
        let prior = predict(&s, &cfg);
        prop_assert!(is_psd(&prior.cov));
        let post = update(&prior, f_star, r);
        prop_assert!(is_psd(&post.cov));
        prop_assert!(post.cov[(0, 0)] <= prior.cov[(0, 0)] + 1e-15);
    }

    #[test]
    fn pseudo_measurement_stays_in_envelope(
        l in 3.0..7.0f64,
        p in 0.0..0.7f64,
        prior in -10.0..10.0f64,
    ) {
        let cfg = observer_cfg();
        let f = solve_pseudo_measurement(l, p, prior, &reference_inductance_params(), &cfg).unwrap();
        prop_assert!(cfg.envelope.contains_force(f));
    }

    #[test]
    fn pseudo_measurement_inverts_rising_branch(f0 in 0.2..1.8f64, p in 0.0..0.7f64) {
        let mut cfg = observer_cfg();
        cfg.weights.w_dyn = 0.0;
        cfg.weights.w_reg = 0.0;
        cfg.envelope.f_max = 2.2;
        let params = reference_inductance_params();
        let l = eval_inductance(&params, f0, p).unwrap();
        let f = solve_pseudo_measurement(l, p, 0.0, &params, &cfg).unwrap();
        prop_assert!((f - f0).abs() <= cfg.refine_tol);
    }

    #[test]
    fn plant_force_stays_within_hysteresis_band(
        lengths in prop::collection::vec(0.08..0.18f64, 1..200),
        p in 0.0..0.6f64,
    ) {
        let cfg = PlantConfig {
            valve_tau: 0.0,
            noise_l: 0.0,
            noise_f: 0.0,
            noise_x: 0.0,
            ..PlantConfig::default()
        };
        let bound = cfg.hysteresis_bound();
        let d = cfg.dynamic;
        let mut plant = Plant::new(cfg).unwrap();
        for x in lengths {
            let out = plant.step(PlantCommand { p_cmd: p, drive: Drive::Length(x) }, 0.01).unwrap();
            let linear = d.k * (x - d.x0) + d.c * p;
            prop_assert!(out.truth.f >= 0.0);
            prop_assert!(out.truth.f <= linear.max(0.0) + bound + 1e-12);
            prop_assert!(out.truth.f >= linear - bound - 1e-12);
        }
    }

    #[test]
    fn pid_integral_term_is_clamped(
        errors in prop::collection::vec(-50.0..50.0f64, 1..100),
        ki in 0.01..50.0f64,
        p_max in 0.1..0.7f64,
    ) {
        let gains = PidGains { kp: 0.0, ki, kd: 0.0, rate_hz: 20.0 };
        let mut st = ControllerState::new(p_max);
        for e in errors {
            let u = pid_step(&mut st, e, &gains);
            prop_assert!(u.abs() <= p_max * (1.0 + 1e-12));
        }
    }

    #[test]
    fn feedforward_is_within_pressure_limits(
        f_ref in -5.0..10.0f64,
        x in 0.05..0.2f64,
        p_max in 0.1..0.7f64,
    ) {
        let ff = feedforward_pressure(&DynamicParams::reference(), Target::Force { f_ref, x }, p_max).unwrap();
        prop_assert!((0.0..=p_max).contains(&ff.pressure));
    }

    #[test]
    fn streaming_filter_equals_batch(input in prop::collection::vec(-10.0..10.0f64, 1..300)) {
        let mut f = design(&FilterSpec::default()).unwrap();
        let batch = f.filter(&input);
        f.reset();
        for (x, y) in input.iter().zip(&batch) {
            prop_assert_eq!(f.step(*x).to_bits(), y.to_bits());
        }
    }

    #[test]
    fn goodness_is_bounded(
        pairs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..100),
    ) {
        let (pred, obs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(g) = goodness(&pred, &obs) {
            prop_assert!(g.rmse >= 0.0 && g.mae >= 0.0 && g.mae <= g.rmse + 1e-12);
            prop_assert!(g.r2 <= 1.0);
        }
    }

    #[test]
    fn dataset_csv_round_trips(rows in prop::collection::vec((0.0..0.7f64, 4.0..6.0f64, 0.0..5.0f64), 1..50)) {
        let samples: Vec<Sample> = rows
            .iter()
            .enumerate()
            .map(|(i, &(p, l, f))| Sample::new(i as f64 * 0.01, p, l).with_force(f))
            .collect();
        let ds = Dataset::new(samples).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice()).unwrap();
        prop_assert_eq!(back.samples, ds.samples);
    }
}

/// Area enclosed by one play element swept between `-a` and `a` about the
/// slack length is `4 w r (a - r)`; the linear part encloses nothing.
#[test]
fn single_play_loop_area_matches_closed_form() {
    let (w, r, a) = (10.0, 0.002, 0.01);
    let cfg = PlantConfig {
        hysteresis: vec![PlayElement {
            width: r,
            weight: w,
        }],
        ..PlantConfig::default().ideal()
    };
    let centre = 0.13;
    let mut plant = Plant::new(cfg).unwrap();
    let n = 4000;
    let mut path = Vec::new();
    for cycle in 0..2 {
        for i in 0..n {
            let phase = i as f64 / n as f64;
            let u = a * (2.0 * std::f64::consts::PI * phase).sin();
            let x = centre + u;
            let out = plant
                .step(
                    PlantCommand {
                        p_cmd: 0.3,
                        drive: Drive::Length(x),
                    },
                    0.01,
                )
                .unwrap();
            if cycle == 1 {
                path.push((x, out.truth.f));
            }
        }
    }
    path.push(path[0]);
    let area: f64 = path
        .windows(2)
        .map(|s| (s[1].0 - s[0].0) * 0.5 * (s[1].1 + s[0].1))
        .sum();
    let expected = 4.0 * w * r * (a - r);
    assert!(
        (area.abs() - expected).abs() < 1e-3 * expected,
        "area {area} vs {expected}"
    );
}
