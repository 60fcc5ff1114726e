//! Synthetic actuator used in place of a hardware rig.
//!
//! Force follows the linear pressure/length model plus a rate-independent
//! hysteresis term built from play operators; each element behaves like a
//! spring of stiffness `weight` in series with a slider that slips at
//! `weight * width`. Inductance depends only on force and pressure, so the
//! length–inductance relation inherits the force–length hysteresis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::{Dataset, Sample};
use crate::model::{eval_coeffs, DynamicParams, InductanceParams};

mod scenario;

pub use scenario::{
    hanging_load, DisplacementTrackingSpec, ForceTrackingSpec, IsometricSpec, LoadEvent,
    LoadSchedule, PerturbationSpec, Reference, Scenario, ScenarioKind, SweepSpec, Waveform,
};

/// Frozen inductance coefficients for the simulated actuator.
///
/// At every pressure in [0, 0.7] MPa the curve rises from about 4.7–5.0 µH
/// at zero force to a single peak (2.2 N at 0 MPa, 2.7 N at 0.65 MPa) and
/// then falls; higher pressure lifts the whole curve.
pub fn reference_inductance_params() -> InductanceParams {
    InductanceParams {
        p: [0.0, 0.30, 0.10, 1.0, 0.02, -0.10, -0.15, 2.0, 0.40, 4.70],
    }
}

/// One play (backlash) element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayElement {
    /// Half-width of the backlash band, m.
    pub width: f64,
    /// Stiffness of the element, N/m.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    pub dynamic: DynamicParams,
    pub inductance: InductanceParams,
    pub hysteresis: Vec<PlayElement>,
    /// First-order valve time constant, s.
    pub valve_tau: f64,
    /// Inductance sensor noise, µH.
    pub noise_l: f64,
    /// Load-cell noise, N.
    pub noise_f: f64,
    /// Length sensor noise, m.
    pub noise_x: f64,
    pub seed: u64,
    pub sensor_rate_hz: f64,
    pub control_rate_hz: f64,
    /// Length limits of the rig, m.
    pub x_min: f64,
    pub x_max: f64,
    /// Supply pressure limit, MPa.
    pub p_supply: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            dynamic: DynamicParams::reference(),
            inductance: reference_inductance_params(),
            hysteresis: vec![
                PlayElement {
                    width: 0.5e-3,
                    weight: 15.0,
                },
                PlayElement {
                    width: 1.0e-3,
                    weight: 12.0,
                },
                PlayElement {
                    width: 2.0e-3,
                    weight: 8.0,
                },
                PlayElement {
                    width: 4.0e-3,
                    weight: 4.0,
                },
            ],
            valve_tau: 0.1,
            noise_l: 0.01,
            noise_f: 0.02,
            noise_x: 5e-5,
            seed: 7,
            sensor_rate_hz: 100.0,
            control_rate_hz: 20.0,
            x_min: 0.05,
            x_max: 0.20,
            p_supply: 0.7,
        }
    }
}

impl PlantConfig {
    /// Noise-free, hysteresis-free, lag-free variant.
    pub fn ideal(&self) -> Self {
        Self {
            hysteresis: Vec::new(),
            valve_tau: 0.0,
            noise_l: 0.0,
            noise_f: 0.0,
            noise_x: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dynamic.validate()?;
        if self.hysteresis.iter().any(|e| {
            !(e.width >= 0.0 && e.weight >= 0.0 && e.width.is_finite() && e.weight.is_finite())
        }) {
            return Err(Error::Config(
                "play widths and weights must be non-negative".into(),
            ));
        }
        if !(self.valve_tau >= 0.0) {
            return Err(Error::Config("valve_tau must be non-negative".into()));
        }
        if !(self.noise_l >= 0.0 && self.noise_f >= 0.0 && self.noise_x >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if !(self.x_min < self.x_max) || !(self.p_supply > 0.0) {
            return Err(Error::Config("invalid rig limits".into()));
        }
        self.decimation()?;
        Ok(())
    }

    /// Sensor samples per control tick.
    pub fn decimation(&self) -> Result<usize> {
        let ratio = self.sensor_rate_hz / self.control_rate_hz;
        let n = ratio.round();
        if !(self.sensor_rate_hz > 0.0 && self.control_rate_hz > 0.0)
            || n < 1.0
            || (ratio - n).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "sensor rate {} Hz must be an integer multiple of control rate {} Hz",
                self.sensor_rate_hz, self.control_rate_hz
            )));
        }
        Ok(n as usize)
    }

    pub fn sensor_dt(&self) -> f64 {
        1.0 / self.sensor_rate_hz
    }

    /// Length at which the linear model gives zero force.
    pub fn zero_force_length(&self, p: f64) -> f64 {
        let d = &self.dynamic;
        (d.x0 - d.c * p / d.k).clamp(self.x_min, self.x_max)
    }

    /// Largest force offset the hysteresis term can produce, N.
    pub fn hysteresis_bound(&self) -> f64 {
        self.hysteresis.iter().map(|e| e.weight * e.width).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub x: f64,
    pub p: f64,
    /// Play operator outputs, in the same coordinates as `x - x0`.
    pub play: Vec<f64>,
    pub t: f64,
}

/// How the rig constrains the actuator during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drive {
    /// Length imposed by the positioning stage.
    Length(f64),
    /// Constant hanging load; length settles where force balances it.
    Load(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantCommand {
    pub p_cmd: f64,
    pub drive: Drive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub f: f64,
    pub x: f64,
    pub p: f64,
    pub l_clean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensed {
    pub l: f64,
    pub f_loadcell: f64,
    pub x_laser: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub t: f64,
    pub truth: Truth,
    pub sensed: Sensed,
}

pub struct Plant {
    cfg: PlantConfig,
    state: PlantState,
    rng: ChaCha8Rng,
}

/// Force at length `x` given previous play outputs; returns the updated
/// outputs through `play_out`.
fn force_at(cfg: &PlantConfig, play_prev: &[f64], x: f64, p: f64, play_out: &mut [f64]) -> f64 {
    let d = &cfg.dynamic;
    let u = x - d.x0;
    let mut hyst = 0.0;
    for ((elem, prev), out) in cfg
        .hysteresis
        .iter()
        .zip(play_prev)
        .zip(play_out.iter_mut())
    {
        let y = prev.clamp(u - elem.width, u + elem.width);
        *out = y;
        hyst += elem.weight * (u - y);
    }
    (d.k * u + d.c * p + hyst).max(0.0)
}

impl Plant {
    /// Starts at the unloaded length with zero pressure.
    pub fn new(cfg: PlantConfig) -> Result<Self> {
        cfg.validate()?;
        let state = PlantState {
            x: cfg.dynamic.x0,
            p: 0.0,
            play: vec![0.0; cfg.hysteresis.len()],
            t: 0.0,
        };
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self { cfg, state, rng })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.cfg
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    /// Advances by `dt` seconds.
    pub fn step(&mut self, cmd: PlantCommand, dt: f64) -> Result<StepOutput> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let cfg = &self.cfg;
        let p_cmd = cmd.p_cmd.clamp(0.0, cfg.p_supply);
        let p = if cfg.valve_tau > 0.0 {
            self.state.p + (p_cmd - self.state.p) * (1.0 - (-dt / cfg.valve_tau).exp())
        } else {
            p_cmd
        };
        let p = p.max(0.0);

        let mut play = vec![0.0; self.state.play.len()];
        let (x, f) = match cmd.drive {
            Drive::Length(x) => {
                let f = force_at(cfg, &self.state.play, x, p, &mut play);
                (x, f)
            }
            Drive::Load(load) => {
                let (x, f) = self.solve_isotonic(load, p, &mut play)?;
                (x, f)
            }
        };

        let l_clean = eval_coeffs(&cfg.inductance, p)?.inductance(f);
        let mut noise = |sigma: f64| {
            // always draw, so every configuration consumes the same stream
            let z: f64 = Normal::new(0.0, 1.0)
                .map(|n| n.sample(&mut self.rng))
                .unwrap_or(0.0);
            sigma * z
        };
        let sensed = Sensed {
            l: l_clean + noise(cfg.noise_l),
            f_loadcell: f + noise(cfg.noise_f),
            x_laser: x + noise(cfg.noise_x),
        };

        self.state.x = x;
        self.state.p = p;
        self.state.play = play;
        self.state.t += dt;
        Ok(StepOutput {
            t: self.state.t,
            truth: Truth { f, x, p, l_clean },
            sensed,
        })
    }

    /// Bisection for the length balancing `load`; force is monotone in length.
    fn solve_isotonic(&self, load: f64, p: f64, play: &mut [f64]) -> Result<(f64, f64)> {
        let cfg = &self.cfg;
        let prev = &self.state.play;
        let (mut lo, mut hi) = (cfg.x_min, cfg.x_max);
        let f_lo = force_at(cfg, prev, lo, p, play);
        let f_hi = force_at(cfg, prev, hi, p, play);
        if f_lo > load || f_hi < load {
            return Err(Error::Infeasible {
                load,
                x_min: lo,
                x_max: hi,
            });
        }
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if force_at(cfg, prev, mid, p, play) < load {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        let f = force_at(cfg, prev, x, p, play);
        Ok((x, f))
    }
}

impl StepOutput {
    pub fn to_sample(&self) -> Sample {
        Sample {
            t: self.t,
            p: self.truth.p,
            l: self.sensed.l,
            f: Some(self.sensed.f_loadcell),
            x: Some(self.truth.x),
            f_true: Some(self.truth.f),
            l_clean: Some(self.truth.l_clean),
        }
    }
}

/// Runs an open-loop scenario and records it at the sensor rate.
pub fn run_scenario(s: &Scenario, cfg: &PlantConfig) -> Result<Dataset> {
    s.validate()?;
    let run = || -> Result<Dataset> {
        let mut plant = Plant::new(cfg.clone())?;
        let dt = cfg.sensor_dt();
        let schedule = s.open_loop_schedule(cfg)?;
        let mut samples = Vec::with_capacity(schedule.len());
        for cmd in schedule {
            samples.push(plant.step(cmd, dt)?.to_sample());
        }
        Ok(Dataset::new(samples)?
            .with_meta("scenario", s.name.clone())
            .with_meta("kind", s.kind.label())
            .with_meta("seed", cfg.seed.to_string()))
    };
    run().map_err(|e| e.in_scenario(&s.name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{eval_dynamic_force, eval_inductance};

    fn hold(x: f64, p: f64) -> PlantCommand {
        PlantCommand {
            p_cmd: p,
            drive: Drive::Length(x),
        }
    }

    #[test]
    fn reference_params_shape() {
        let params = reference_inductance_params();
        for i in 0..=70 {
            let p = i as f64 * 0.01;
            let c = eval_coeffs(&params, p).unwrap();
            assert!(c.lambda2 > 0.0 && c.lambda4 > 0.0);
            assert!(c.lambda3 < 0.0);
            let l0 = eval_inductance(&params, 0.0, p).unwrap();
            assert!((4.6..=5.4).contains(&l0), "L(0, {p}) = {l0}");
        }
    }

    #[test]
    fn slack_state() {
        let cfg = PlantConfig::default().ideal();
        let mut plant = Plant::new(cfg.clone()).unwrap();
        let out = plant.step(hold(cfg.dynamic.x0, 0.0), 0.01).unwrap();
        assert_eq!(out.truth.f, 0.0);
        assert_eq!(
            out.truth.l_clean,
            eval_coeffs(&cfg.inductance, 0.0).unwrap().lambda5
        );
    }

    #[test]
    fn ideal_plant_matches_linear_model() {
        let cfg = PlantConfig::default().ideal();
        let mut plant = Plant::new(cfg.clone()).unwrap();
        for i in 0..200 {
            let x = 0.1 + 0.06 * (i as f64 * 0.05).sin().abs();
            let p = 0.3 + 0.3 * (i as f64 * 0.07).cos();
            let out = plant.step(hold(x, p), 0.01).unwrap();
            let expected = eval_dynamic_force(&cfg.dynamic, x, p).max(0.0);
            assert_eq!(out.truth.f, expected);
            assert_eq!(out.sensed.l, out.truth.l_clean);
        }
    }

    #[test]
    fn play_states_stay_within_widths() {
        let cfg = PlantConfig::default();
        let mut plant = Plant::new(cfg.clone()).unwrap();
        for i in 0..500 {
            let x = 0.1 + 0.05 * (1.0 - (i as f64 * 0.03).cos());
            plant.step(hold(x, 0.2), 0.01).unwrap();
            let u = plant.state().x - cfg.dynamic.x0;
            for (y, e) in plant.state().play.iter().zip(&cfg.hysteresis) {
                assert!((y - u).abs() <= e.width + 1e-15);
            }
        }
    }

    #[test]
    fn isotonic_balance() {
        let cfg = PlantConfig::default();
        let mut plant = Plant::new(cfg).unwrap();
        for i in 0..300 {
            let load = 1.0 + 0.3 * (i as f64 * 0.05).sin();
            let p = 0.2 + 0.1 * (i as f64 * 0.02).cos();
            let out = plant
                .step(
                    PlantCommand {
                        p_cmd: p,
                        drive: Drive::Load(load),
                    },
                    0.01,
                )
                .unwrap();
            assert!((out.truth.f - load).abs() <= 1e-6);
        }
    }

    #[test]
    fn isotonic_infeasible_load() {
        let mut plant = Plant::new(PlantConfig::default()).unwrap();
        let err = plant
            .step(
                PlantCommand {
                    p_cmd: 0.0,
                    drive: Drive::Load(100.0),
                },
                0.01,
            )
            .unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }

    #[test]
    fn valve_lag_relaxes_pressure() {
        let cfg = PlantConfig::default();
        let mut plant = Plant::new(cfg).unwrap();
        let out = plant.step(hold(0.12, 0.5), 0.1).unwrap();
        let expected = 0.5 * (1.0 - (-1.0f64).exp());
        assert!((out.truth.p - expected).abs() < 1e-12);
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let run = || {
            let mut plant = Plant::new(PlantConfig::default()).unwrap();
            (0..50)
                .map(|_| plant.step(hold(0.12, 0.3), 0.01).unwrap().sensed.l)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
