//! Achievable rate `E[log₂(1 + SIR)]`, per serving order and averaged over association.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::{AssociationDistribution, Evaluator, QuadratureFlags, Tracker};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Decay, Domain, QuadratureResult};

/// Largest association mass the truncated rate sum may leave unaccounted.
pub const TAIL_MASS_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub k: usize,
    /// Bits/s/Hz.
    pub rate: f64,
    pub quadrature: QuadratureFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRate {
    /// `Σ_k p_ass^k · E[log₂(1 + SIR_k)]`, bits/s/Hz.
    pub rate: f64,
    pub association: AssociationDistribution,
    /// Conditional rates for `k = 1..=k_max`; `None` where `p_ass^k = 0`
    /// and the term was skipped.
    pub conditional: Vec<Option<RateResult>>,
    /// True when the association mass beyond `k_max` reaches [`TAIL_MASS_LIMIT`].
    pub tail_warning: bool,
    pub converged: bool,
}

impl Evaluator {
    fn check_rate(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::Parameter("serving order k must be >= 1".into()));
        }
        if self.params.lambda_b <= 0.0 {
            return Err(Error::Domain(
                "the rate is undefined without base stations (no interferers means unbounded SIR)"
                    .into(),
            ));
        }
        self.check_interference_finite()
    }

    /// Decay scale in `ln(1 + t)` of the SIR tail: the complementary
    /// distribution falls roughly like `t^{-2/α_N}`.
    fn log_tail_scale(&self) -> f64 {
        0.5 * self.params.alpha_nlos
    }

    /// `∫_0^∞ g(u) du` for `u = ln(1 + t)`.
    ///
    /// Near `u = 0` the outage `1 - g` grows like a fractional power of `u`
    /// (heavy-tailed interference-to-signal ratio), which adaptive rules
    /// resolve only by bisecting towards zero; `u = x^5` on `[0, 1]` makes
    /// it smooth. Then a finite stretch where the distribution still bends,
    /// then the geometric tail.
    fn integrate_log_threshold<F: Fn(f64) -> f64>(&self, g: F) -> QuadratureResult {
        const POWER: f64 = 5.0;
        let scale = self.log_tail_scale();
        let cut = 16.0 * scale;
        let spec = self.settings.rate.scaled(1.0 / 3.0);
        let parts = [
            integrate(
                |x: f64| POWER * x.powf(POWER - 1.0) * g(x.powf(POWER)),
                Domain::finite(0.0, 1.0),
                &spec,
            ),
            integrate(&g, Domain::finite(1.0, cut), &spec),
            integrate(
                &g,
                Domain::semi_infinite(cut, Decay::ExpLinear { scale }),
                &spec,
            ),
        ];
        QuadratureResult {
            value: parts.iter().map(|p| p.value).sum(),
            error_estimate: parts.iter().map(|p| p.error_estimate).sum(),
            evals: parts.iter().map(|p| p.evals).sum(),
            converged: parts.iter().all(|p| p.converged),
        }
    }

    /// `E[log₂(1 + SIR_k)] = (1/ln 2) ∫_0^∞ P(SIR_k > e^u - 1) du`.
    pub fn conditional_rate(&self, k: usize) -> Result<RateResult> {
        self.check_rate(k)?;
        let tracker = Tracker::default();
        let integrand = |u: f64| {
            let t = u.exp_m1();
            if t <= 0.0 {
                return 1.0;
            }
            match self.coverage(k, t) {
                Ok(c) => {
                    tracker.absorb(&c.quadrature);
                    c.raw
                }
                Err(_) => f64::NAN,
            }
        };
        let res = self.integrate_log_threshold(integrand);
        Ok(self.rate_result(k, res, &tracker))
    }

    /// The same expectation through the density, `∫ log₂(1 + t) f(t) dt`,
    /// integrated in `v = ln t` on both sides of `t = 1`.
    pub fn conditional_rate_from_density(&self, k: usize) -> Result<RateResult> {
        self.check_rate(k)?;
        let tracker = Tracker::default();
        let weighted = |t: f64| match self.sir_pdf(k, t) {
            Ok(d) => {
                tracker.absorb(&d.quadrature);
                (1.0 + t).log2() * d.density * t
            }
            Err(_) => f64::NAN,
        };
        let spec = &self.settings.rate;
        let below = integrate(
            |x: f64| weighted((-x).exp()),
            Domain::semi_infinite(0.0, Decay::ExpLinear { scale: 1.0 }),
            spec,
        );
        let above = integrate(
            |v: f64| weighted(v.exp()),
            Domain::semi_infinite(
                0.0,
                Decay::ExpLinear {
                    scale: self.log_tail_scale(),
                },
            ),
            spec,
        );
        let res = QuadratureResult {
            value: below.value + above.value,
            error_estimate: below.error_estimate + above.error_estimate,
            evals: below.evals + above.evals,
            converged: below.converged && above.converged,
        };
        let mut out = self.rate_result(k, res, &tracker);
        // The primary path already folds in 1/ln 2; this one used log₂ directly.
        out.rate *= LN_2;
        Ok(out)
    }

    fn rate_result(&self, k: usize, res: QuadratureResult, tracker: &Tracker) -> RateResult {
        let flags = QuadratureFlags::from_parts(&res, tracker);
        if !flags.converged {
            log::warn!("rate k={k}: quadrature flagged ({flags:?})");
        }
        RateResult {
            k,
            rate: res.value / LN_2,
            quadrature: flags,
        }
    }

    /// `Σ_{k ≤ k_max} p_ass^k · E[log₂(1 + SIR_k)]` with the association
    /// distribution from [`Evaluator::association`].
    pub fn average_rate(&self, k_max: usize, mc_samples: usize, seed: u64) -> Result<AverageRate> {
        self.check_rate(1)?;
        let association = self.association(k_max, mc_samples, seed)?;
        let mut rate = 0.0;
        let mut converged = true;
        let mut conditional = Vec::with_capacity(k_max);
        for (i, &p) in association.probs.iter().enumerate() {
            if p == 0.0 {
                conditional.push(None);
                continue;
            }
            let r = self.conditional_rate(i + 1)?;
            converged &= r.quadrature.converged;
            rate += p * r.rate;
            conditional.push(Some(r));
        }
        let tail_warning = association.tail_mass >= TAIL_MASS_LIMIT;
        if tail_warning {
            log::warn!(
                "association mass beyond k = {k_max} is {:.4}; the rate sum is truncated",
                association.tail_mass
            );
        }
        Ok(AverageRate {
            rate,
            association,
            conditional,
            tail_warning,
            converged,
        })
    }
}
