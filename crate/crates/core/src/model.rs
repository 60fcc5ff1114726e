//! Closed-form actuator models.
//!
//! Two maps are evaluated here:
//!
//! * the linearised force model `F = k (x - x0) + c P`, and
//! * the pressure-dependent inductance map
//!   `L(F, P) = l1 F^l2 exp(l3 F^l4) + l5`, where each `li` is affine in
//!   pressure, `li(P) = p[2i-2] P + p[2i-1]`.
//!
//! Units are fixed throughout: pressure in MPa, force in N, length in m and
//! inductance in µH.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest stiffness magnitude accepted when inverting the force model.
pub const STIFFNESS_EPS: f64 = 1e-12;

/// Parameters of the linearised force model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicParams {
    /// Stiffness, N/m.
    pub k: f64,
    /// Unloaded length, m.
    pub x0: f64,
    /// Pressure coefficient, N/MPa.
    pub c: f64,
}

impl DynamicParams {
    pub fn new(k: f64, x0: f64, c: f64) -> Result<Self> {
        let params = Self { k, x0, c };
        params.validate()?;
        Ok(params)
    }

    /// Values identified for a 100 mm actuator.
    pub fn reference() -> Self {
        Self {
            k: 38.6,
            x0: 0.100,
            c: 1.6310,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.k) || !ok(self.x0) || !ok(self.c) {
            return Err(Error::InvalidParameter(format!(
                "dynamic params must be finite and positive, got k={}, x0={}, c={}",
                self.k, self.x0, self.c
            )));
        }
        Ok(())
    }
}

/// Ten coefficients of the inductance map, ordered `(slope, intercept)` per
/// pressure-dependent coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InductanceParams {
    pub p: [f64; 10],
}

impl InductanceParams {
    pub fn new(p: [f64; 10]) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "inductance coefficients must be finite".into(),
            ));
        }
        Ok(Self { p })
    }

    /// Pressure-independent parameters with the given coefficients.
    pub fn from_constant_coeffs(lambda: [f64; 5]) -> Self {
        let mut p = [0.0; 10];
        for (i, l) in lambda.iter().enumerate() {
            p[2 * i + 1] = *l;
        }
        Self { p }
    }
}

/// Feasible operating region of the actuator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingEnvelope {
    pub p_min: f64,
    pub p_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub l_min: f64,
    pub l_max: f64,
}

impl Default for OperatingEnvelope {
    fn default() -> Self {
        Self {
            p_min: 0.0,
            p_max: 0.7,
            f_min: 0.0,
            f_max: 5.0,
            x_min: 0.05,
            x_max: 0.20,
            l_min: 4.0,
            l_max: 6.0,
        }
    }
}

impl OperatingEnvelope {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("P", self.p_min, self.p_max),
            ("F", self.f_min, self.f_max),
            ("x", self.x_min, self.x_max),
            ("L", self.l_min, self.l_max),
        ];
        for (name, lo, hi) in pairs {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "envelope {name} bounds must satisfy min < max, got [{lo}, {hi}]"
                )));
            }
        }
        if self.f_min < 0.0 || self.p_min < 0.0 {
            return Err(Error::InvalidParameter(
                "envelope force and pressure minima must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn force_span(&self) -> f64 {
        self.f_max - self.f_min
    }

    pub fn contains_pressure(&self, p: f64) -> bool {
        p >= self.p_min && p <= self.p_max
    }

    pub fn contains_force(&self, f: f64) -> bool {
        f >= self.f_min && f <= self.f_max
    }
}

/// The five coefficients of the inductance map evaluated at one pressure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelCoeffs {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
}

/// `f^e` with the continuous extension `0^e = 0` for `e > 0`.
#[inline]
pub(crate) fn pow_nonneg(f: f64, e: f64) -> f64 {
    if f > 0.0 {
        (e * f.ln()).exp()
    } else if e > 0.0 {
        0.0
    } else if e == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

impl ModelCoeffs {
    /// Inductance at force `f >= 0`; the caller guarantees the domain.
    #[inline]
    pub fn inductance(&self, f: f64) -> f64 {
        let fl2 = pow_nonneg(f, self.lambda2);
        if fl2 == 0.0 {
            return self.lambda5;
        }
        let fl4 = pow_nonneg(f, self.lambda4);
        self.lambda1 * fl2 * (self.lambda3 * fl4).exp() + self.lambda5
    }

    /// Analytic `dL/dF` at `f > 0`.
    #[inline]
    pub fn d_df(&self, f: f64) -> f64 {
        let fl4 = pow_nonneg(f, self.lambda4);
        self.lambda1
            * pow_nonneg(f, self.lambda2 - 1.0)
            * (self.lambda3 * fl4).exp()
            * (self.lambda2 + self.lambda3 * self.lambda4 * fl4)
    }

    /// Location of the interior inductance peak, if the curve has one.
    pub fn peak_force(&self) -> Option<f64> {
        if self.lambda3 < 0.0 && self.lambda1 > 0.0 {
            let fl4 = -self.lambda2 / (self.lambda3 * self.lambda4);
            Some(pow_nonneg(fl4, 1.0 / self.lambda4))
        } else {
            None
        }
    }
}

/// `F = k (x - x0) + c P`.
pub fn eval_dynamic_force(params: &DynamicParams, x: f64, p: f64) -> f64 {
    params.k * (x - params.x0) + params.c * p
}

/// Length that produces force `f` at pressure `p` under the linear model.
pub fn invert_dynamic_length(params: &DynamicParams, f: f64, p: f64) -> Result<f64> {
    if params.k.abs() < STIFFNESS_EPS {
        return Err(Error::DegenerateStiffness(params.k));
    }
    Ok(params.x0 + (f - params.c * p) / params.k)
}

/// Evaluates the pressure-dependent coefficients.
pub fn eval_coeffs(params: &InductanceParams, p: f64) -> Result<ModelCoeffs> {
    if !p.is_finite() {
        return Err(Error::Envelope {
            pressure: p,
            reason: "pressure is not finite".into(),
        });
    }
    let l = |i: usize| params.p[2 * i] * p + params.p[2 * i + 1];
    let coeffs = ModelCoeffs {
        lambda1: l(0),
        lambda2: l(1),
        lambda3: l(2),
        lambda4: l(3),
        lambda5: l(4),
    };
    if !(coeffs.lambda2 > 0.0) || !(coeffs.lambda4 > 0.0) {
        return Err(Error::Envelope {
            pressure: p,
            reason: format!(
                "exponents must be positive (lambda2 = {}, lambda4 = {})",
                coeffs.lambda2, coeffs.lambda4
            ),
        });
    }
    Ok(coeffs)
}

pub fn eval_inductance(params: &InductanceParams, f: f64, p: f64) -> Result<f64> {
    if !(f >= 0.0) {
        return Err(Error::Domain(f));
    }
    Ok(eval_coeffs(params, p)?.inductance(f))
}

pub fn d_inductance_df(params: &InductanceParams, f: f64, p: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::Domain(f));
    }
    Ok(eval_coeffs(params, p)?.d_df(f))
}
