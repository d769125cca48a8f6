//! Distance- and azimuth-dependent LoS/NLoS path loss.
//!
//! A link of length `r` at azimuth `θ` crosses a Poisson number of rectangle
//! blockages whose mean depends on how the link is oriented relative to the
//! rectangles. The link is LoS when that number is zero; LoS and NLoS links
//! attenuate with different exponents.

mod bessel;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_finite, QuadratureResult, QuadratureSpec};

pub use bessel::{bessel_i0, bessel_i0_scaled};

/// Scalar model parameters. All internal math is in linear units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Base-station intensity, per m².
    pub lambda_b: f64,
    /// Blockage-center intensity, per m². `+inf` means every link is NLoS.
    pub lambda_c: f64,
    /// Blockage length along its orientation axis, m.
    pub l: f64,
    /// Blockage width, m.
    pub w: f64,
    /// Blockage orientation, rad.
    pub phi: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    /// Transmit power. Cancels out of every SIR expression.
    pub p_t: f64,
    /// Linear SIR threshold.
    pub sir_threshold: f64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            lambda_b: 1.0 / (800.0 * 800.0 * PI),
            lambda_c: 0.002,
            l: 15.0,
            w: 10.0,
            phi: 0.0,
            alpha_los: 2.0,
            alpha_nlos: 5.0,
            p_t: 1.0,
            sir_threshold: db_to_linear(-5.0),
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Parameter(format!("{what} = {v}")));
        if !(self.lambda_b.is_finite() && self.lambda_b >= 0.0) {
            return bad("lambda_b must be finite and >= 0, got", self.lambda_b);
        }
        if self.lambda_c.is_nan() || self.lambda_c < 0.0 {
            return bad("lambda_c must be >= 0, got", self.lambda_c);
        }
        if !(self.l.is_finite() && self.l > 0.0) {
            return bad("blockage length must be > 0, got", self.l);
        }
        if !(self.w.is_finite() && self.w > 0.0) {
            return bad("blockage width must be > 0, got", self.w);
        }
        if !self.phi.is_finite() {
            return bad("orientation must be finite, got", self.phi);
        }
        if !(self.alpha_los.is_finite() && self.alpha_los >= 2.0) {
            return bad("alpha_los must be >= 2, got", self.alpha_los);
        }
        if !(self.alpha_nlos.is_finite() && self.alpha_nlos > self.alpha_los) {
            return Err(Error::Parameter(format!(
                "alpha_nlos must exceed alpha_los ({} <= {})",
                self.alpha_nlos, self.alpha_los
            )));
        }
        if !(self.p_t.is_finite() && self.p_t > 0.0) {
            return bad("p_t must be > 0, got", self.p_t);
        }
        if !(self.sir_threshold.is_finite() && self.sir_threshold > 0.0) {
            return bad("sir_threshold must be > 0, got", self.sir_threshold);
        }
        Ok(())
    }

    /// Half the rectangle diagonal: the farthest a rectangle reaches from its center.
    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.l.hypot(self.w)
    }

    pub fn exponent(&self, kind: LinkKind) -> f64 {
        match kind {
            LinkKind::Los => self.alpha_los,
            LinkKind::Nlos => self.alpha_nlos,
        }
    }

    /// `exp(-λ_C·w·l)`, the LoS probability of a zero-length link.
    pub fn los_at_origin(&self) -> f64 {
        if self.lambda_c.is_infinite() {
            0.0
        } else {
            (-self.lambda_c * self.w * self.l).exp()
        }
    }

    /// True when every link has the same state with probability one
    /// (no blockages, or blockages so dense that LoS underflows to zero).
    pub fn link_state_is_deterministic(&self) -> Option<LinkKind> {
        if self.lambda_c == 0.0 {
            Some(LinkKind::Los)
        } else if self.los_at_origin() == 0.0 {
            Some(LinkKind::Nlos)
        } else {
            None
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    Los,
    Nlos,
}

/// One realized link: its state, the exponent that state implies, and `r^-α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub kind: LinkKind,
    pub exponent: f64,
    pub path_loss: f64,
}

/// Mean number of blockages crossing a link of length `r` at azimuth `theta`:
/// `λ_C (r l |sin(φ-θ)| + r w |cos(φ-θ)| + w l)`.
pub fn expected_blockage_count(r: f64, theta: f64, params: &NetworkParams) -> f64 {
    if params.lambda_c == 0.0 {
        return 0.0;
    }
    if params.lambda_c.is_infinite() {
        return f64::INFINITY;
    }
    let d = params.phi - theta;
    params.lambda_c
        * (r * params.l * d.sin().abs() + r * params.w * d.cos().abs() + params.w * params.l)
}

pub fn los_probability(r: f64, theta: f64, params: &NetworkParams) -> f64 {
    (-expected_blockage_count(r, theta, params)).exp()
}

pub fn nlos_probability(r: f64, theta: f64, params: &NetworkParams) -> f64 {
    1.0 - los_probability(r, theta, params)
}

pub fn realized_path_loss(r: f64, kind: LinkKind, params: &NetworkParams) -> Result<LinkState> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Domain(format!(
            "path loss r^-alpha is singular or undefined at r = {r}"
        )));
    }
    let exponent = params.exponent(kind);
    Ok(LinkState {
        kind,
        exponent,
        path_loss: r.powf(-exponent),
    })
}

/// Quadrature settings for [`q_integral`]: 4× the quadrant error stays below 1e-10.
pub const Q_SPEC: QuadratureSpec = QuadratureSpec {
    abs_tol: 2e-11,
    rel_tol: 1e-13,
    max_evals: 100_000,
};

/// `∫_0^{2π} P_LoS(r, θ) dθ` with its quadrature diagnostics.
///
/// `|sin|` and `|cos|` have period π/2, so one quadrant is integrated and
/// multiplied by four; the result does not depend on the orientation φ.
pub fn q_integral_result(r: f64, params: &NetworkParams) -> QuadratureResult {
    let exact = |value: f64| QuadratureResult {
        value,
        error_estimate: 0.0,
        evals: 0,
        converged: true,
    };
    let origin = params.los_at_origin();
    if params.lambda_c == 0.0 {
        return exact(2.0 * PI);
    }
    if origin == 0.0 {
        return exact(0.0);
    }
    if r == 0.0 {
        return exact(2.0 * PI * origin);
    }
    let c = params.lambda_c * r;
    let (l, w) = (params.l, params.w);
    let quadrant = integrate_finite(
        |t| (-c * (l * t.sin() + w * t.cos())).exp(),
        0.0,
        PI / 2.0,
        &Q_SPEC,
    );
    QuadratureResult {
        value: 4.0 * origin * quadrant.value,
        error_estimate: 4.0 * origin * quadrant.error_estimate,
        ..quadrant
    }
}

/// `Q(r) = ∫_0^{2π} P_LoS(r, θ) dθ`; `Q(r)/2π` is the azimuth-averaged LoS probability.
pub fn q_integral(r: f64, params: &NetworkParams) -> f64 {
    q_integral_result(r, params).value
}

/// `2π e^{-λ_C w l} I₀(λ_C r √(l²+w²))`, which dominates [`q_integral`]:
/// it replaces `|sin|`, `|cos|` by the signed functions.
pub fn q_bessel_bound(r: f64, params: &NetworkParams) -> f64 {
    if params.lambda_c == 0.0 {
        return 2.0 * PI;
    }
    let origin = params.los_at_origin();
    if origin == 0.0 {
        return 0.0;
    }
    2.0 * PI * origin * bessel_i0(params.lambda_c * r * params.l.hypot(params.w))
}
