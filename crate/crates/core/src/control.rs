//! Feedforward plus PID regulation and the three-way comparison harness.
//!
//! Every mode of a comparison drives an identical plant with identical
//! noise; the observer runs in all of them so the sensed channels and their
//! timing are shared, and only the signal fed back differs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::{fit_dynamic, goodness, Goodness};
use crate::model::{DynamicParams, InductanceParams, OperatingEnvelope, STIFFNESS_EPS};
use crate::observer::{Observer, ObserverConfig};
use crate::plant::{
    hanging_load, run_scenario, Drive, LoadSchedule, PerturbationSpec, Plant, PlantCommand,
    PlantConfig, Scenario, ScenarioKind, StepOutput,
};
use crate::signal::FilterSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub rate_hz: f64,
}

impl PidGains {
    /// Gains reported for the hardware rig, in its own (unstated) units.
    pub fn hardware() -> Self {
        Self {
            kp: 0.027,
            ki: 0.001,
            kd: 0.003,
            rate_hz: 20.0,
        }
    }

    /// Force loop, MPa per N.
    pub fn force_default() -> Self {
        Self {
            kp: 0.3,
            ki: 1.0,
            kd: 0.0,
            rate_hz: 20.0,
        }
    }

    /// Length loop, MPa per m of excess length.
    pub fn displacement_default() -> Self {
        Self {
            kp: 6.0,
            ki: 20.0,
            kd: 0.0,
            rate_hz: 20.0,
        }
    }

    pub fn zero(rate_hz: f64) -> Self {
        Self {
            kp: 0.0,
            ki: 0.0,
            kd: 0.0,
            rate_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kp >= 0.0 && self.ki >= 0.0 && self.kd >= 0.0) {
            return Err(Error::Config("PID gains must be non-negative".into()));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::Config("controller rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub integral: f64,
    pub prev_error: f64,
    /// Bounds on the integral contribution `ki * integral`, MPa.
    pub clamp: (f64, f64),
}

impl ControllerState {
    pub fn new(p_max: f64) -> Self {
        Self {
            integral: 0.0,
            prev_error: 0.0,
            clamp: (-p_max, p_max),
        }
    }
}

/// Positional PID: rectangular integral, backward-difference derivative on
/// the error, integral contribution clamped.
pub fn pid_step(state: &mut ControllerState, error: f64, gains: &PidGains) -> f64 {
    let dt = 1.0 / gains.rate_hz;
    state.integral += error * dt;
    if gains.ki > 0.0 {
        let (lo, hi) = state.clamp;
        state.integral = state.integral.clamp(lo / gains.ki, hi / gains.ki);
    }
    let derivative = (error - state.prev_error) / dt;
    state.prev_error = error;
    gains.kp * error + gains.ki * state.integral + gains.kd * derivative
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Desired force with the actuator held at length `x`.
    Force { f_ref: f64, x: f64 },
    /// Desired length under hanging load `load`.
    Length { x_ref: f64, load: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedforward {
    pub pressure: f64,
    pub saturated: bool,
}

/// Pressure that the linear force model says achieves `target`.
pub fn feedforward_pressure(
    dynamic: &DynamicParams,
    target: Target,
    p_max: f64,
) -> Result<Feedforward> {
    if dynamic.c.abs() < STIFFNESS_EPS {
        return Err(Error::DegeneratePressureCoefficient(dynamic.c));
    }
    let raw = match target {
        Target::Force { f_ref, x } => (f_ref - dynamic.k * (x - dynamic.x0)) / dynamic.c,
        Target::Length { x_ref, load } => (load - dynamic.k * (x_ref - dynamic.x0)) / dynamic.c,
    };
    let pressure = raw.clamp(0.0, p_max);
    Ok(Feedforward {
        pressure,
        saturated: pressure != raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OpenLoop,
    SensorFb,
    SelfSensing,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::OpenLoop, Mode::SensorFb, Mode::SelfSensing];

    pub fn label(self) -> &'static str {
        match self {
            Mode::OpenLoop => "Open-Loop",
            Mode::SensorFb => "Sensor FB",
            Mode::SelfSensing => "Self-Sensing",
        }
    }

    /// Identifier used in file names and structured output.
    pub fn key(self) -> &'static str {
        match self {
            Mode::OpenLoop => "open_loop",
            Mode::SensorFb => "sensor_fb",
            Mode::SelfSensing => "self_sensing",
        }
    }
}

/// Everything a closed-loop run needs besides the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bench {
    pub plant: PlantConfig,
    /// Force model the controller and observer believe in.
    pub dynamic: DynamicParams,
    pub inductance: InductanceParams,
    pub observer: ObserverConfig,
    pub filter: FilterSpec,
    pub force_gains: PidGains,
    pub displacement_gains: PidGains,
    pub p_max: f64,
}

impl Bench {
    /// Identifies the force model on an isobaric sweep of `plant` and uses
    /// the plant's own inductance map for the observer.
    pub fn identify(plant: PlantConfig) -> Result<Self> {
        let sweep = run_scenario(&Scenario::isobaric_sweep(), &plant)?;
        let dynamic = fit_dynamic(&sweep)?.params;
        let observer = ObserverConfig::for_sensor(
            &plant.inductance,
            OperatingEnvelope::default(),
            plant.sensor_dt(),
            plant.noise_l.max(1e-4),
        )?;
        let filter = FilterSpec {
            sample_rate_hz: plant.sensor_rate_hz,
            ..FilterSpec::default()
        };
        let rate = plant.control_rate_hz;
        Ok(Self {
            inductance: plant.inductance,
            plant,
            dynamic,
            observer,
            filter,
            force_gains: PidGains {
                rate_hz: rate,
                ..PidGains::force_default()
            },
            displacement_gains: PidGains {
                rate_hz: rate,
                ..PidGains::displacement_default()
            },
            p_max: 0.65,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.dynamic.validate()?;
        self.observer.validate()?;
        self.filter.validate()?;
        self.force_gains.validate()?;
        self.displacement_gains.validate()?;
        if !(self.p_max > 0.0 && self.p_max <= self.plant.p_supply) {
            return Err(Error::Config(
                "p_max must lie in (0, supply pressure]".into(),
            ));
        }
        for g in [&self.force_gains, &self.displacement_gains] {
            if (g.rate_hz - self.plant.control_rate_hz).abs() > 1e-9 {
                return Err(Error::Config(
                    "gain rate must equal the plant's control rate".into(),
                ));
            }
        }
        Ok(())
    }

    fn observer(&self) -> Result<Observer> {
        Observer::new(
            self.observer,
            self.inductance,
            self.dynamic,
            &self.filter,
            None,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Force,
    Length,
}

/// Time series of one run, at the sensor rate, over the scored window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingResult {
    pub scenario: String,
    pub mode: Mode,
    pub quantity: Quantity,
    pub t: Vec<f64>,
    pub reference: Vec<f64>,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub measured: Vec<f64>,
    pub p_cmd: Vec<f64>,
    pub metrics: Goodness,
    pub mae: f64,
}

impl TrackingResult {
    pub fn rmse(&self) -> f64 {
        self.metrics.rmse
    }

    pub fn columns(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("t", &self.t),
            ("reference", &self.reference),
            ("truth", &self.truth),
            ("estimate", &self.estimate),
            ("measured", &self.measured),
            ("p_cmd", &self.p_cmd),
        ]
    }
}

/// What the loop regulates and how the rig holds the actuator.
struct Loop<'a> {
    quantity: Quantity,
    gains: PidGains,
    /// Scored window start.
    t_track: f64,
    t_end: f64,
    reference: Box<dyn Fn(f64) -> Option<f64> + 'a>,
    drive: Box<dyn Fn(f64) -> Drive + 'a>,
    feedforward: Box<dyn Fn(f64) -> Result<f64> + 'a>,
}

struct Trace {
    t: Vec<f64>,
    reference: Vec<f64>,
    outputs: Vec<StepOutput>,
    f_hat: Vec<f64>,
    x_hat: Vec<f64>,
    measured: Vec<f64>,
    p_cmd: Vec<f64>,
}

fn run_loop(bench: &Bench, mode: Mode, lp: &Loop) -> Result<Trace> {
    let mut plant = Plant::new(bench.plant.clone())?;
    let mut observer = bench.observer()?;
    let decim = bench.plant.decimation()?;
    let dt = bench.plant.sensor_dt();
    let gains = match mode {
        Mode::OpenLoop => PidGains::zero(lp.gains.rate_hz),
        _ => lp.gains,
    };
    let mut ctrl = ControllerState::new(bench.p_max);
    let n = (lp.t_end / dt).round() as usize;
    let mut trace = Trace {
        t: Vec::new(),
        reference: Vec::new(),
        outputs: Vec::new(),
        f_hat: Vec::new(),
        x_hat: Vec::new(),
        measured: Vec::new(),
        p_cmd: Vec::new(),
    };
    let mut p_cmd = 0.0;
    let mut last_meas = f64::NAN;
    for i in 0..n {
        let t = i as f64 * dt;
        if i % decim == 0 {
            if let Some(r) = (lp.reference)(t) {
                let ff = (lp.feedforward)(r)?;
                let dp = if last_meas.is_nan() {
                    0.0
                } else {
                    let error = match lp.quantity {
                        Quantity::Force => r - last_meas,
                        // more pressure shortens the actuator
                        Quantity::Length => last_meas - r,
                    };
                    pid_step(&mut ctrl, error, &gains)
                };
                p_cmd = (ff + dp).clamp(0.0, bench.p_max);
            }
        }
        let out = plant.step(
            PlantCommand {
                p_cmd,
                drive: (lp.drive)(t + dt),
            },
            dt,
        )?;
        let est = observer.step(out.sensed.l, out.truth.p)?;
        last_meas = match (mode, lp.quantity) {
            (Mode::SelfSensing, Quantity::Force) => est.f_hat,
            (Mode::SelfSensing, Quantity::Length) => est.x_hat,
            (_, Quantity::Force) => out.sensed.f_loadcell,
            (_, Quantity::Length) => out.sensed.x_laser,
        };
        if out.t >= lp.t_track - 1e-9 {
            trace.t.push(out.t);
            trace
                .reference
                .push((lp.reference)(out.t).unwrap_or(f64::NAN));
            trace.outputs.push(out);
            trace.f_hat.push(est.f_hat);
            trace.x_hat.push(est.x_hat);
            trace.measured.push(last_meas);
            trace.p_cmd.push(p_cmd);
        }
    }
    Ok(trace)
}

fn tracking_loop<'a>(scenario: &'a Scenario, bench: &'a Bench) -> Result<Loop<'a>> {
    let dynamic = bench.dynamic;
    let p_max = bench.p_max;
    Ok(match &scenario.kind {
        ScenarioKind::ForceTracking(s) => {
            let t_ref0 = s.prestretch_s + s.settle_s;
            let t_track = t_ref0;
            let x0 = bench.plant.dynamic.x0;
            Loop {
                quantity: Quantity::Force,
                gains: bench.force_gains,
                t_track,
                t_end: t_track + s.periods / s.reference.freq_hz,
                reference: Box::new(move |t| {
                    (t >= s.prestretch_s).then(|| s.reference.at((t - t_ref0).max(0.0)))
                }),
                drive: Box::new(move |t| {
                    let a = if s.prestretch_s > 0.0 {
                        (t / s.prestretch_s).min(1.0)
                    } else {
                        1.0
                    };
                    Drive::Length(x0 + (s.x_hold - x0) * a)
                }),
                feedforward: Box::new(move |f_ref| {
                    feedforward_pressure(
                        &dynamic,
                        Target::Force {
                            f_ref,
                            x: s.x_nominal,
                        },
                        p_max,
                    )
                    .map(|f| f.pressure)
                }),
            }
        }
        ScenarioKind::DisplacementTracking(s) => Loop {
            quantity: Quantity::Length,
            gains: bench.displacement_gains,
            t_track: s.settle_s,
            t_end: s.settle_s + s.periods / s.reference.freq_hz,
            reference: Box::new(move |t| Some(s.reference.at((t - s.settle_s).max(0.0)))),
            drive: Box::new(move |t| Drive::Load(hanging_load(s.load, s.hang_s, t))),
            feedforward: Box::new(move |x_ref| {
                feedforward_pressure(
                    &dynamic,
                    Target::Length {
                        x_ref,
                        load: s.load_nominal,
                    },
                    p_max,
                )
                .map(|f| f.pressure)
            }),
        },
        kind => {
            return Err(Error::Config(format!(
                "{} is not a tracking scenario",
                kind.label()
            )))
        }
    })
}

/// Runs one tracking scenario in one mode; metrics compare truth against
/// the reference over the tracking window.
pub fn run_tracking(scenario: &Scenario, mode: Mode, bench: &Bench) -> Result<TrackingResult> {
    let run = || -> Result<TrackingResult> {
        scenario.validate()?;
        bench.validate()?;
        let lp = tracking_loop(scenario, bench)?;
        let trace = run_loop(bench, mode, &lp)?;
        let (truth, estimate): (Vec<f64>, Vec<f64>) = match lp.quantity {
            Quantity::Force => (
                trace.outputs.iter().map(|o| o.truth.f).collect(),
                trace.f_hat,
            ),
            Quantity::Length => (
                trace.outputs.iter().map(|o| o.truth.x).collect(),
                trace.x_hat,
            ),
        };
        let metrics = goodness(&truth, &trace.reference)?;
        Ok(TrackingResult {
            scenario: scenario.name.clone(),
            mode,
            quantity: lp.quantity,
            mae: metrics.mae,
            t: trace.t,
            reference: trace.reference,
            truth,
            estimate,
            measured: trace.measured,
            p_cmd: trace.p_cmd,
            metrics,
        })
    };
    run().map_err(|e| e.in_scenario(&scenario.name))
}

/// `100 (1 - rmse / rmse_open_loop)`.
pub fn improvement(rmse: f64, open_loop_rmse: f64) -> f64 {
    100.0 * (1.0 - rmse / open_loop_rmse)
}

/// One block of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub quantity: Quantity,
    pub runs: Vec<TrackingResult>,
}

impl Comparison {
    pub fn get(&self, mode: Mode) -> Option<&TrackingResult> {
        self.runs.iter().find(|r| r.mode == mode)
    }

    /// Improvement of `mode` over the open-loop run of the same group.
    pub fn improvement(&self, mode: Mode) -> Option<f64> {
        let base = self.get(Mode::OpenLoop)?.rmse();
        Some(improvement(self.get(mode)?.rmse(), base))
    }
}

pub fn compare(scenario: &Scenario, bench: &Bench) -> Result<Comparison> {
    let runs = Mode::ALL
        .iter()
        .map(|&m| run_tracking(scenario, m, bench))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        scenario: scenario.name.clone(),
        quantity: runs[0].quantity,
        runs,
    })
}

/// Regroups independently computed runs by scenario, keeping first-seen
/// order of scenarios and of modes within each.
pub fn compare_runs(results: Vec<TrackingResult>) -> Vec<Comparison> {
    let mut groups: Vec<Comparison> = Vec::new();
    for r in results {
        match groups.iter_mut().find(|g| g.scenario == r.scenario) {
            Some(g) => g.runs.push(r),
            None => groups.push(Comparison {
                scenario: r.scenario.clone(),
                quantity: r.quantity,
                runs: vec![r],
            }),
        }
    }
    groups
}

/// Plain-text table in the layout of the tracking comparison: RMSE and MAE
/// in N for force, mm for length.
pub fn format_table(groups: &[Comparison]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<30} {:<13} {:>10} {:>10} {:>9}\n",
        "Trajectory", "Method", "RMSE", "MAE", "Imp. (%)"
    ));
    for g in groups {
        let scale = match g.quantity {
            Quantity::Force => 1.0,
            Quantity::Length => 1e3,
        };
        let unit = match g.quantity {
            Quantity::Force => "N",
            Quantity::Length => "mm",
        };
        for (i, run) in g.runs.iter().enumerate() {
            let name = if i == 0 {
                format!("{} [{unit}]", g.scenario)
            } else {
                String::new()
            };
            let imp = match (run.mode, g.improvement(run.mode)) {
                (Mode::OpenLoop, _) | (_, None) => "-".to_string(),
                (_, Some(v)) => format!("{v:.1}"),
            };
            out.push_str(&format!(
                "{:<30} {:<13} {:>10.4} {:>10.4} {:>9}\n",
                name,
                run.mode.label(),
                run.metrics.rmse * scale,
                run.mae * scale,
                imp
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationResult {
    pub schedule: LoadSchedule,
    pub t: Vec<f64>,
    pub load: Vec<f64>,
    pub f_true: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub x_true: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub p_cmd: Vec<f64>,
    pub max_abs_error: f64,
    pub rmse: f64,
    /// Mean force error over the last fifth of the run.
    pub drift: f64,
    pub length_rmse: f64,
}

impl PerturbationResult {
    pub fn columns(&self) -> [(&'static str, &[f64]); 7] {
        [
            ("t", &self.t),
            ("load", &self.load),
            ("F_true", &self.f_true),
            ("F_hat", &self.f_hat),
            ("x_true", &self.x_true),
            ("x_hat", &self.x_hat),
            ("p_cmd", &self.p_cmd),
        ]
    }
}

/// Length hold on self-sensed feedback while weights come and go.
pub fn run_perturbation(scenario: &Scenario, bench: &Bench) -> Result<PerturbationResult> {
    let ScenarioKind::LoadPerturbation(spec) = &scenario.kind else {
        return Err(Error::Config(format!(
            "{} is not a load perturbation scenario",
            scenario.kind.label()
        ))
        .in_scenario(&scenario.name));
    };
    perturbation(spec, bench).map_err(|e| e.in_scenario(&scenario.name))
}

fn perturbation(spec: &PerturbationSpec, bench: &Bench) -> Result<PerturbationResult> {
    bench.validate()?;
    let schedule = LoadSchedule::random(spec, spec.settle_s);
    let dynamic = bench.dynamic;
    let p_max = bench.p_max;
    let lp = Loop {
        quantity: Quantity::Length,
        gains: bench.displacement_gains,
        t_track: spec.settle_s,
        t_end: spec.settle_s + spec.duration_s,
        reference: Box::new(|_| Some(spec.x_hold)),
        drive: Box::new(|t| {
            Drive::Load(
                schedule.load(t) - spec.base_load + hanging_load(spec.base_load, spec.hang_s, t),
            )
        }),
        feedforward: Box::new(move |x_ref| {
            feedforward_pressure(
                &dynamic,
                Target::Length {
                    x_ref,
                    load: spec.base_load,
                },
                p_max,
            )
            .map(|f| f.pressure)
        }),
    };
    let trace = run_loop(bench, Mode::SelfSensing, &lp)?;
    drop(lp);
    let f_true: Vec<f64> = trace.outputs.iter().map(|o| o.truth.f).collect();
    let x_true: Vec<f64> = trace.outputs.iter().map(|o| o.truth.x).collect();
    let errors: Vec<f64> = trace
        .f_hat
        .iter()
        .zip(&f_true)
        .map(|(a, b)| a - b)
        .collect();
    if errors.len() < 5 {
        return Err(Error::InsufficientData("perturbation run too short".into()));
    }
    let n = errors.len() as f64;
    let tail = &errors[errors.len() * 4 / 5..];
    let x_err: Vec<f64> = x_true.iter().map(|x| x - spec.x_hold).collect();
    Ok(PerturbationResult {
        load: trace.t.iter().map(|&t| schedule.load(t)).collect(),
        max_abs_error: errors.iter().fold(0.0, |m, e| m.max(e.abs())),
        rmse: (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        drift: tail.iter().sum::<f64>() / tail.len() as f64,
        length_rmse: (x_err.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        schedule,
        t: trace.t,
        f_true,
        f_hat: trace.f_hat,
        x_true,
        x_hat: trace.x_hat,
        p_cmd: trace.p_cmd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::Waveform;

    #[test]
    fn feedforward_examples() {
        let d = DynamicParams::reference();
        let ff = feedforward_pressure(&d, Target::Force { f_ref: 0.0, x: 0.1 }, 0.65).unwrap();
        assert_eq!(ff.pressure, 0.0);
        assert!(!ff.saturated);
        let ff = feedforward_pressure(
            &d,
            Target::Force {
                f_ref: 0.8155,
                x: 0.1,
            },
            0.65,
        )
        .unwrap();
        assert!((ff.pressure - 0.5).abs() < 1e-12);
        let ff = feedforward_pressure(
            &d,
            Target::Force {
                f_ref: -1.0,
                x: 0.1,
            },
            0.65,
        )
        .unwrap();
        assert_eq!(ff.pressure, 0.0);
        assert!(ff.saturated);
        let flat = DynamicParams { c: 0.0, ..d };
        assert!(matches!(
            feedforward_pressure(
                &flat,
                Target::Length {
                    x_ref: 0.1,
                    load: 1.0
                },
                0.65
            ),
            Err(Error::DegeneratePressureCoefficient(_))
        ));
    }

    #[test]
    fn pid_arithmetic() {
        let g = PidGains::hardware();
        let mut s = ControllerState::new(0.65);
        assert_eq!(pid_step(&mut s, 0.0, &g), 0.0);
        let mut s = ControllerState::new(0.65);
        let e = 0.4;
        let dt = 0.05;
        let expected = 0.027 * e + 0.001 * e * dt + 0.003 * e / dt;
        assert!((pid_step(&mut s, e, &g) - expected).abs() < 1e-15);

        let p = PidGains {
            kp: 0.3,
            ki: 0.0,
            kd: 0.0,
            rate_hz: 20.0,
        };
        let mut s = ControllerState::new(0.65);
        for _ in 0..5 {
            assert!((pid_step(&mut s, e, &p) - 0.3 * e).abs() < 1e-15);
        }
    }

    #[test]
    fn integral_is_clamped() {
        let g = PidGains::force_default();
        let mut s = ControllerState::new(0.65);
        for _ in 0..10_000 {
            pid_step(&mut s, 5.0, &g);
            assert!(g.ki * s.integral <= 0.65 + 1e-12);
        }
    }

    #[test]
    fn zero_gains_reduce_to_open_loop() {
        let mut bench = Bench::identify(PlantConfig::default()).unwrap();
        bench.force_gains = PidGains::zero(20.0);
        let mut s = Scenario::force_tracking(Waveform::Sine, 0.2);
        if let ScenarioKind::ForceTracking(spec) = &mut s.kind {
            spec.periods = 1.0;
        }
        let open = run_tracking(&s, Mode::OpenLoop, &bench).unwrap();
        for mode in [Mode::SensorFb, Mode::SelfSensing] {
            let r = run_tracking(&s, mode, &bench).unwrap();
            assert_eq!(r.truth, open.truth);
            assert_eq!(r.p_cmd, open.p_cmd);
        }
    }

    #[test]
    fn improvement_definition() {
        assert!((improvement(0.0713, 0.1235) - 42.267).abs() < 1e-3);
    }
}
