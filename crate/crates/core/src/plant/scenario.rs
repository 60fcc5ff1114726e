//! Experiment protocols replayed against the simulated rig.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Drive, PlantCommand, PlantConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Sine,
    Triangle,
    Steps,
}

impl Waveform {
    /// Unit-amplitude periodic shape at `phase` cycles, zero at phase 0.
    pub fn value(self, phase: f64) -> f64 {
        let s = (2.0 * PI * phase).sin();
        match self {
            Waveform::Sine => s,
            Waveform::Triangle => 2.0 / PI * s.asin(),
            Waveform::Steps => {
                if phase.rem_euclid(1.0) < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Shape rising from 0 to 1 at half phase and back to 0.
    fn excursion(self, phase: f64) -> f64 {
        0.5 * (1.0 + self.value(phase - 0.25))
    }

    pub fn label(self) -> &'static str {
        match self {
            Waveform::Sine => "sine",
            Waveform::Triangle => "triangle",
            Waveform::Steps => "steps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub waveform: Waveform,
    pub offset: f64,
    pub amplitude: f64,
    pub freq_hz: f64,
}

impl Reference {
    pub fn at(&self, t: f64) -> f64 {
        self.offset + self.amplitude * self.waveform.value(self.freq_hz * t)
    }

    fn validate(&self) -> Result<()> {
        if !(self.freq_hz > 0.0 && self.amplitude >= 0.0 && self.offset.is_finite()) {
            return Err(Error::Config(
                "reference needs freq_hz > 0 and amplitude >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Cyclic stretching at a sequence of constant pressures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub pressures: Vec<f64>,
    /// Peak length as a multiple of the unloaded length.
    pub stretch: f64,
    pub cycles: usize,
    pub cycle_s: f64,
    /// Time spent moving to the next pressure level.
    pub transition_s: f64,
    pub waveform: Waveform,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            pressures: (0..=13).map(|i| i as f64 * 0.05).collect(),
            stretch: 1.7,
            cycles: 3,
            cycle_s: 8.0,
            transition_s: 2.0,
            waveform: Waveform::Triangle,
        }
    }
}

/// Pressure staircases at a set of fixed lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsometricSpec {
    /// Hold lengths as multiples of the unloaded length.
    pub lengths: Vec<f64>,
    pub p_max: f64,
    pub p_step: f64,
    pub cycles: usize,
    /// Dwell per pressure step.
    pub dwell_s: f64,
}

impl Default for IsometricSpec {
    fn default() -> Self {
        Self {
            lengths: (0..=14).map(|i| 1.0 + i as f64 * 0.05).collect(),
            p_max: 0.66,
            p_step: 0.02,
            cycles: 5,
            dwell_s: 0.25,
        }
    }
}

/// Force regulation with both ends clamped.
///
/// The controller believes the actuator is held at `x_nominal`; the rig
/// actually holds it at `x_hold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceTrackingSpec {
    pub reference: Reference,
    pub x_hold: f64,
    pub x_nominal: f64,
    pub periods: f64,
    pub prestretch_s: f64,
    pub settle_s: f64,
}

impl ForceTrackingSpec {
    pub fn new(waveform: Waveform, freq_hz: f64) -> Self {
        Self {
            reference: Reference {
                waveform,
                offset: 1.3,
                amplitude: 0.3,
                freq_hz,
            },
            x_hold: 0.1215,
            x_nominal: 0.12,
            periods: 3.0,
            prestretch_s: 2.0,
            settle_s: 4.0,
        }
    }
}

/// Length regulation under a hanging load.
///
/// The controller's feedforward assumes `load_nominal`; the actual hanging
/// load is `load`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementTrackingSpec {
    pub reference: Reference,
    pub load: f64,
    pub load_nominal: f64,
    pub periods: f64,
    pub settle_s: f64,
    /// Time over which the load is hung on from slack.
    pub hang_s: f64,
}

impl DisplacementTrackingSpec {
    pub fn new(waveform: Waveform, freq_hz: f64) -> Self {
        Self {
            reference: Reference {
                waveform,
                offset: 0.109,
                amplitude: 0.005,
                freq_hz,
            },
            load: 1.03,
            load_nominal: 0.88,
            periods: 3.0,
            settle_s: 4.0,
            hang_s: 1.0,
        }
    }
}

/// Length hold while weights are hung on and taken off at random times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    pub x_hold: f64,
    pub base_load: f64,
    /// Available weights, N.
    pub weights: Vec<f64>,
    /// Range of waiting times between toggles, s.
    pub interval_s: (f64, f64),
    /// Time over which a weight is transferred onto the actuator.
    pub ramp_s: f64,
    /// Time over which the base load is hung on from slack.
    pub hang_s: f64,
    pub duration_s: f64,
    pub settle_s: f64,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            x_hold: 0.11,
            base_load: 0.6,
            weights: vec![0.15, 0.25],
            interval_s: (4.0, 8.0),
            ramp_s: 0.5,
            hang_s: 1.0,
            duration_s: 60.0,
            settle_s: 4.0,
            seed: 11,
        }
    }
}

/// Load ramped on from a small fraction over `hang_s`, so the actuator
/// starts from an unambiguous near-slack state.
pub fn hanging_load(load: f64, hang_s: f64, t: f64) -> f64 {
    let a = if hang_s > 0.0 {
        (t / hang_s).min(1.0)
    } else {
        1.0
    };
    load * (0.05 + 0.95 * a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadEvent {
    pub t: f64,
    pub weight: f64,
    /// `true` when the weight is hung on.
    pub on: bool,
}

/// Piecewise-linear load history built from toggle events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSchedule {
    pub base: f64,
    pub ramp_s: f64,
    pub events: Vec<LoadEvent>,
}

impl LoadSchedule {
    /// Seeded random toggles of the listed weights after `start`.
    pub fn random(spec: &PerturbationSpec, start: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut hung = vec![false; spec.weights.len()];
        let mut events = Vec::new();
        let (lo, hi) = spec.interval_s;
        let end = start + spec.duration_s;
        let mut t = start + rng.random_range(lo..=hi);
        while t + spec.ramp_s < end && !spec.weights.is_empty() {
            let i = rng.random_range(0..spec.weights.len());
            hung[i] = !hung[i];
            events.push(LoadEvent {
                t,
                weight: spec.weights[i],
                on: hung[i],
            });
            t += rng.random_range(lo..=hi);
        }
        Self {
            base: spec.base_load,
            ramp_s: spec.ramp_s,
            events,
        }
    }

    pub fn load(&self, t: f64) -> f64 {
        self.events.iter().fold(self.base, |acc, e| {
            let frac = if t <= e.t {
                0.0
            } else if self.ramp_s <= 0.0 {
                1.0
            } else {
                ((t - e.t) / self.ramp_s).min(1.0)
            };
            acc + if e.on { 1.0 } else { -1.0 } * e.weight * frac
        })
    }

    pub fn max_load(&self) -> f64 {
        let mut level = self.base;
        let mut max = level;
        for e in &self.events {
            level += if e.on { e.weight } else { -e.weight };
            max = max.max(level);
        }
        max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    IsobaricSweep(SweepSpec),
    IsometricSweep(IsometricSpec),
    CalibrationGrid(SweepSpec),
    CyclicEstimation(SweepSpec),
    ForceTracking(ForceTrackingSpec),
    DisplacementTracking(DisplacementTrackingSpec),
    LoadPerturbation(PerturbationSpec),
}

impl ScenarioKind {
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioKind::IsobaricSweep(_) => "isobaric_sweep",
            ScenarioKind::IsometricSweep(_) => "isometric_sweep",
            ScenarioKind::CalibrationGrid(_) => "calibration_grid",
            ScenarioKind::CyclicEstimation(_) => "cyclic_estimation",
            ScenarioKind::ForceTracking(_) => "force_tracking",
            ScenarioKind::DisplacementTracking(_) => "displacement_tracking",
            ScenarioKind::LoadPerturbation(_) => "load_perturbation",
        }
    }

    pub fn is_closed_loop(&self) -> bool {
        matches!(
            self,
            ScenarioKind::ForceTracking(_)
                | ScenarioKind::DisplacementTracking(_)
                | ScenarioKind::LoadPerturbation(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(flatten)]
    pub kind: ScenarioKind,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl Scenario {
    pub fn new(name: impl Into<String>, kind: ScenarioKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    /// One stretch cycle per pressure, used to identify the force model.
    pub fn isobaric_sweep() -> Self {
        Self::new(
            "isobaric_sweep",
            ScenarioKind::IsobaricSweep(SweepSpec {
                cycles: 1,
                ..SweepSpec::default()
            }),
        )
    }

    pub fn calibration_grid() -> Self {
        Self::new(
            "calibration_grid",
            ScenarioKind::CalibrationGrid(SweepSpec::default()),
        )
    }

    pub fn isometric_sweep() -> Self {
        Self::new(
            "isometric_sweep",
            ScenarioKind::IsometricSweep(IsometricSpec::default()),
        )
    }

    /// Slow stretching with the pressure stepped after each cycle.
    pub fn cyclic_estimation() -> Self {
        Self::new(
            "cyclic_estimation",
            ScenarioKind::CyclicEstimation(SweepSpec {
                cycles: 1,
                cycle_s: 10.0,
                ..SweepSpec::default()
            }),
        )
    }

    pub fn force_tracking(waveform: Waveform, freq_hz: f64) -> Self {
        Self::new(
            format!("force_{}_{freq_hz}hz", waveform.label()),
            ScenarioKind::ForceTracking(ForceTrackingSpec::new(waveform, freq_hz)),
        )
    }

    pub fn displacement_tracking(waveform: Waveform, freq_hz: f64) -> Self {
        Self::new(
            format!("displacement_{}_{freq_hz}hz", waveform.label()),
            ScenarioKind::DisplacementTracking(DisplacementTrackingSpec::new(waveform, freq_hz)),
        )
    }

    pub fn load_perturbation() -> Self {
        Self::new(
            "load_perturbation",
            ScenarioKind::LoadPerturbation(PerturbationSpec::default()),
        )
    }

    /// The six trajectories of the tracking comparison table.
    pub fn tracking_suite() -> Vec<Self> {
        vec![
            Self::force_tracking(Waveform::Sine, 0.2),
            Self::force_tracking(Waveform::Triangle, 0.2),
            Self::force_tracking(Waveform::Sine, 0.05),
            Self::force_tracking(Waveform::Triangle, 0.05),
            Self::displacement_tracking(Waveform::Sine, 0.05),
            Self::displacement_tracking(Waveform::Sine, 0.2),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("scenario name must not be empty".into()));
        }
        let check = || -> Result<()> {
            match &self.kind {
                ScenarioKind::IsobaricSweep(s)
                | ScenarioKind::CalibrationGrid(s)
                | ScenarioKind::CyclicEstimation(s) => {
                    if s.pressures.is_empty() || s.cycles == 0 {
                        return Err(Error::Config(
                            "sweep needs pressures and at least one cycle".into(),
                        ));
                    }
                    if s.pressures.iter().any(|p| !(*p >= 0.0)) {
                        return Err(Error::Config("sweep pressures must be non-negative".into()));
                    }
                    positive("stretch", s.stretch)?;
                    positive("cycle_s", s.cycle_s)?;
                    if !(s.transition_s >= 0.0) {
                        return Err(Error::Config("transition_s must be non-negative".into()));
                    }
                }
                ScenarioKind::IsometricSweep(s) => {
                    if s.lengths.is_empty() || s.cycles == 0 {
                        return Err(Error::Config(
                            "isometric sweep needs lengths and cycles".into(),
                        ));
                    }
                    for &l in &s.lengths {
                        positive("length", l)?;
                    }
                    positive("p_max", s.p_max)?;
                    positive("p_step", s.p_step)?;
                    positive("dwell_s", s.dwell_s)?;
                }
                ScenarioKind::ForceTracking(s) => {
                    s.reference.validate()?;
                    positive("periods", s.periods)?;
                    positive("x_hold", s.x_hold)?;
                    positive("x_nominal", s.x_nominal)?;
                    if !(s.prestretch_s >= 0.0 && s.settle_s >= 0.0) {
                        return Err(Error::Config("phase durations must be non-negative".into()));
                    }
                }
                ScenarioKind::DisplacementTracking(s) => {
                    s.reference.validate()?;
                    positive("periods", s.periods)?;
                    positive("load", s.load)?;
                    positive("load_nominal", s.load_nominal)?;
                    if !(s.settle_s >= 0.0 && s.hang_s >= 0.0) {
                        return Err(Error::Config("phase durations must be non-negative".into()));
                    }
                }
                ScenarioKind::LoadPerturbation(s) => {
                    positive("duration_s", s.duration_s)?;
                    positive("x_hold", s.x_hold)?;
                    positive("base_load", s.base_load)?;
                    let (lo, hi) = s.interval_s;
                    if !(lo > 0.0 && lo <= hi) {
                        return Err(Error::Config(
                            "interval_s must satisfy 0 < min <= max".into(),
                        ));
                    }
                    if s.weights.iter().any(|w| !(*w > 0.0))
                        || !(s.ramp_s >= 0.0 && s.settle_s >= 0.0 && s.hang_s >= 0.0)
                    {
                        return Err(Error::Config(
                            "weights must be positive and times non-negative".into(),
                        ));
                    }
                }
            }
            Ok(())
        };
        check().map_err(|e| e.in_scenario(&self.name))
    }

    /// Sensor-rate command sequence for the open-loop kinds.
    pub fn open_loop_schedule(&self, cfg: &PlantConfig) -> Result<Vec<PlantCommand>> {
        let dt = cfg.sensor_dt();
        let x0 = cfg.dynamic.x0;
        let mut out = Vec::new();
        match &self.kind {
            ScenarioKind::IsobaricSweep(s)
            | ScenarioKind::CalibrationGrid(s)
            | ScenarioKind::CyclicEstimation(s) => {
                let x_top = (s.stretch * x0).clamp(cfg.x_min, cfg.x_max);
                let mut x_prev = cfg.zero_force_length(0.0);
                for &p in &s.pressures {
                    let x_start = cfg.zero_force_length(p);
                    let n_tr = (s.transition_s / dt).round() as usize;
                    for i in 0..n_tr {
                        let a = (i + 1) as f64 / n_tr as f64;
                        out.push(length_cmd(p, x_prev + (x_start - x_prev) * a));
                    }
                    let n_cyc = (s.cycle_s * s.cycles as f64 / dt).round() as usize;
                    for i in 0..n_cyc {
                        let phase = (i + 1) as f64 * dt / s.cycle_s;
                        let x = x_start + (x_top - x_start) * s.waveform.excursion(phase);
                        out.push(length_cmd(p, x));
                    }
                    x_prev = x_start;
                }
            }
            ScenarioKind::IsometricSweep(s) => {
                let levels = (s.p_max / s.p_step).round() as usize;
                let per_step = (s.dwell_s / dt).round().max(1.0) as usize;
                for &ratio in &s.lengths {
                    let x = (ratio * x0).clamp(cfg.x_min, cfg.x_max);
                    for _ in 0..s.cycles {
                        let up = 0..=levels;
                        let down = (0..levels).rev();
                        for j in up.chain(down) {
                            let p = (j as f64 * s.p_step).min(s.p_max);
                            out.extend(std::iter::repeat_n(length_cmd(p, x), per_step));
                        }
                    }
                }
            }
            kind => {
                return Err(Error::Config(format!(
                    "{} needs a controller; run it through the control module",
                    kind.label()
                )))
            }
        }
        Ok(out)
    }
}

fn length_cmd(p: f64, x: f64) -> PlantCommand {
    PlantCommand {
        p_cmd: p,
        drive: Drive::Length(x),
    }
}
