//! Butterworth low-pass design and causal streaming application.
//!
//! Filters are designed by bilinear transform with frequency pre-warping and
//! realised as cascaded second-order sections (plus one first-order section
//! for odd orders), each in transposed direct form II.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl Default for FilterSpec {
    /// Third order, 10 Hz cutoff, sampled at 100 Hz.
    fn default() -> Self {
        Self {
            order: 3,
            cutoff_hz: 10.0,
            sample_rate_hz: 100.0,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidFilter("order must be at least 1".into()));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidFilter(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < 0.5 * self.sample_rate_hz) {
            return Err(Error::InvalidFilter(format!(
                "cutoff {} Hz must lie in (0, {}) Hz",
                self.cutoff_hz,
                0.5 * self.sample_rate_hz
            )));
        }
        Ok(())
    }
}

/// One biquad `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    b: [f64; 3],
    a: [f64; 2],
    s: [f64; 2],
}

impl Section {
    #[inline]
    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s[0];
        self.s[0] = self.b[1] * x - self.a[0] * y + self.s[1];
        self.s[1] = self.b[2] * x - self.a[1] * y;
        y
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2)
            / (1.0 + self.a[0] * z_inv + self.a[1] * z2)
    }

    fn root_magnitudes(&self) -> Vec<f64> {
        let (a1, a2) = (self.a[0], self.a[1]);
        if a2 == 0.0 {
            return vec![a1.abs()];
        }
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            vec![a2.sqrt(); 2]
        } else {
            let r = disc.sqrt();
            vec![(0.5 * (-a1 + r)).abs(), (0.5 * (-a1 - r)).abs()]
        }
    }
}

/// Designed filter together with its delay line.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    spec: FilterSpec,
    sections: Vec<Section>,
}

pub fn design(spec: &FilterSpec) -> Result<FilterState> {
    spec.validate()?;
    let n = spec.order;
    let k = (PI * spec.cutoff_hz / spec.sample_rate_hz).tan();
    let k2 = k * k;
    let mut sections = Vec::with_capacity(n.div_ceil(2));
    for i in 0..n / 2 {
        // analog pole pair at angle theta from the imaginary axis
        let theta = (2 * i + 1) as f64 * PI / (2 * n) as f64;
        let inv_q = 2.0 * theta.sin();
        let norm = 1.0 / (1.0 + k * inv_q + k2);
        let b0 = k2 * norm;
        sections.push(Section {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - k * inv_q + k2) * norm],
            s: [0.0; 2],
        });
    }
    if n % 2 == 1 {
        let norm = 1.0 / (1.0 + k);
        sections.push(Section {
            b: [k * norm, k * norm, 0.0],
            a: [(k - 1.0) * norm, 0.0],
            s: [0.0; 2],
        });
    }
    Ok(FilterState {
        spec: *spec,
        sections,
    })
}

impl FilterState {
    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    /// One causal output sample.
    #[inline]
    pub fn step(&mut self, sample: f64) -> f64 {
        self.sections.iter_mut().fold(sample, |x, s| s.step(x))
    }

    pub fn filter(&mut self, samples: &[f64]) -> Vec<f64> {
        samples.iter().map(|&x| self.step(x)).collect()
    }

    /// Clears the delay line.
    pub fn reset(&mut self) {
        for s in &mut self.sections {
            s.s = [0.0; 2];
        }
    }

    /// Loads the delay line with the steady state of a constant input, so
    /// the first outputs do not ring up from zero.
    pub fn prime(&mut self, value: f64) {
        let mut x = value;
        for s in &mut self.sections {
            let y = x * (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
            s.s[1] = s.b[2] * x - s.a[1] * y;
            s.s[0] = s.b[1] * x - s.a[0] * y + s.s[1];
            x = y;
        }
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.spec.sample_rate_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }

    /// Magnitudes of every feedback root; all below one for a stable design.
    pub fn feedback_root_magnitudes(&self) -> Vec<f64> {
        self.sections
            .iter()
            .flat_map(Section::root_magnitudes)
            .collect()
    }
}

/// Keeps every `factor`-th sample starting with the first.
pub fn decimate(series: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor < 1 {
        return Err(Error::InvalidParameter(
            "decimation factor must be >= 1".into(),
        ));
    }
    Ok(series.iter().step_by(factor).copied().collect())
}
