//! Coverage probability and SIR density conditioned on the serving order `k`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{clamp_probability, Evaluator, QuadratureFlags, Tracker};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Decay, Domain, QuadratureResult};

/// Density of the distance to the `k`-th nearest point of a PPP:
/// `2 (πλ)^k r^{2k-1} e^{-πλ r²} / (k-1)!`, evaluated in log space.
pub fn nearest_k_pdf(r: f64, k: usize, lambda_b: f64) -> f64 {
    if k == 0 || lambda_b <= 0.0 || r <= 0.0 || !r.is_finite() {
        return 0.0;
    }
    let kf = k as f64;
    let pl = PI * lambda_b;
    let ln_fact: f64 = (1..k).map(|i| (i as f64).ln()).sum();
    (2f64.ln() + kf * pl.ln() + (2.0 * kf - 1.0) * r.ln() - pl * r * r - ln_fact).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub k: usize,
    /// Linear SIR threshold.
    pub threshold: f64,
    /// Clamped into `[0, 1]`.
    pub probability: f64,
    /// The value as integrated, before clamping.
    pub raw: f64,
    pub quadrature: QuadratureFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityResult {
    pub k: usize,
    pub t: f64,
    pub density: f64,
    pub quadrature: QuadratureFlags,
}

impl Evaluator {
    fn check_query(&self, k: usize, t: f64) -> Result<()> {
        if k == 0 {
            return Err(Error::Parameter("serving order k must be >= 1".into()));
        }
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Domain(format!(
                "SIR threshold must be finite and > 0, got {t}"
            )));
        }
        if self.params.lambda_b <= 0.0 {
            return Err(Error::Domain(
                "lambda_b = 0 leaves no serving base station and no interference".into(),
            ));
        }
        self.check_interference_finite()
    }

    /// `∫_0^∞ g(r) dr` for integrands carrying the `k`-th distance density.
    ///
    /// Below the typical spacing `r₀ = 1/√(πλ_B)` the integral runs in
    /// `x = ln(r₀/r)`: at large thresholds the coverage mass sits at
    /// sub-meter distances, which a map scaled to `r₀` would step over.
    fn integrate_distance<F: Fn(f64) -> f64>(&self, k: usize, g: F) -> QuadratureResult {
        let r0 = 1.0 / (PI * self.params.lambda_b).sqrt();
        let spec = self.settings.outer.scaled(0.5);
        let near = integrate(
            |x: f64| {
                let r = r0 * (-x).exp();
                if r == 0.0 {
                    0.0
                } else {
                    g(r) * r
                }
            },
            Domain::semi_infinite(
                0.0,
                Decay::ExpLinear {
                    scale: 1.0 / k as f64,
                },
            ),
            &spec,
        );
        let far = integrate(
            g,
            Domain::semi_infinite(r0, Decay::ExpQuadratic { scale: r0 }),
            &spec,
        );
        QuadratureResult {
            value: near.value + far.value,
            error_estimate: near.error_estimate + far.error_estimate,
            evals: near.evals + far.evals,
            converged: near.converged && far.converged,
        }
    }

    /// Probability that the SIR at the `k`-th nearest base station exceeds `t`:
    /// `∫ (1/2π)[L(t r^{α_N})(2π - Q) + L(t r^{α_L}) Q] f_k(r) dr`.
    pub fn coverage(&self, k: usize, t: f64) -> Result<CoverageResult> {
        self.check_query(k, t)?;
        let p = &self.params;
        let tracker = Tracker::default();
        let integrand = |r: f64| {
            let f = nearest_k_pdf(r, k, p.lambda_b);
            if f == 0.0 {
                return 0.0;
            }
            let q = self.q(r);
            let mut inner = 0.0;
            if q < 2.0 * PI {
                let l = self.laplace_unchecked(t * r.powf(p.alpha_nlos), r);
                tracker.absorb(&l.quadrature);
                inner += l.value * (2.0 * PI - q);
            }
            if q > 0.0 {
                let l = self.laplace_unchecked(t * r.powf(p.alpha_los), r);
                tracker.absorb(&l.quadrature);
                inner += l.value * q;
            }
            inner / (2.0 * PI) * f
        };
        let res = self.integrate_distance(k, integrand);
        let flags = QuadratureFlags::from_parts(&res, &tracker);
        if !flags.converged {
            log::warn!("coverage k={k} t={t:e}: quadrature flagged ({flags:?})");
        }
        Ok(CoverageResult {
            k,
            threshold: t,
            probability: clamp_probability(res.value, "coverage"),
            raw: res.value,
            quadrature: flags,
        })
    }

    /// `P(SIR_k > t)`.
    pub fn sir_ccdf(&self, k: usize, t: f64) -> Result<f64> {
        Ok(self.coverage(k, t)?.probability)
    }

    /// Density of `SIR_k` from the analytic derivative of the transform:
    /// `∫ (1/2π)[r^{α_N} E'(s_N) L(s_N)(2π - Q) + r^{α_L} E'(s_L) L(s_L) Q] f_k dr`.
    pub fn sir_pdf(&self, k: usize, t: f64) -> Result<DensityResult> {
        self.check_query(k, t)?;
        let p = &self.params;
        let tracker = Tracker::default();
        let branch = |r: f64, alpha: f64| {
            let scale = r.powf(alpha);
            let s = t * scale;
            let l = self.laplace_unchecked(s, r);
            tracker.absorb(&l.quadrature);
            if l.value == 0.0 {
                return 0.0;
            }
            let d = self.exponent_derivative_raw(s, r);
            tracker.note(&d);
            scale * d.value * l.value
        };
        let integrand = |r: f64| {
            let f = nearest_k_pdf(r, k, p.lambda_b);
            if f == 0.0 {
                return 0.0;
            }
            let q = self.q(r);
            let mut inner = 0.0;
            if q < 2.0 * PI {
                inner += branch(r, p.alpha_nlos) * (2.0 * PI - q);
            }
            if q > 0.0 {
                inner += branch(r, p.alpha_los) * q;
            }
            inner / (2.0 * PI) * f
        };
        let res = self.integrate_distance(k, integrand);
        Ok(DensityResult {
            k,
            t,
            density: res.value.max(0.0),
            quadrature: QuadratureFlags::from_parts(&res, &tracker),
        })
    }

    /// Central difference `-(p(t+h) - p(t-h)) / 2h` with `h = rel_step·t`,
    /// for cross-checking [`Evaluator::sir_pdf`].
    pub fn sir_pdf_finite_difference(&self, k: usize, t: f64, rel_step: f64) -> Result<f64> {
        if !(rel_step > 0.0 && rel_step < 1.0) {
            return Err(Error::Parameter(format!(
                "relative step must lie in (0, 1), got {rel_step}"
            )));
        }
        let h = rel_step * t;
        let up = self.coverage(k, t + h)?.raw;
        let down = self.coverage(k, t - h)?.raw;
        Ok((down - up) / (2.0 * h))
    }

    /// `∫_0^∞ f(t) dt` of [`Evaluator::sir_pdf`], integrated in `ln t`.
    /// Should be one.
    pub fn sir_pdf_mass(&self, k: usize) -> Result<(f64, QuadratureFlags)> {
        self.check_query(k, 1.0)?;
        let tracker = Tracker::default();
        let weighted = |t: f64| match self.sir_pdf(k, t) {
            Ok(d) => {
                tracker.absorb(&d.quadrature);
                d.density * t
            }
            Err(_) => f64::NAN,
        };
        let spec = self.settings.rate.scaled(0.5);
        // f·t is a slow power of t on both sides (roughly t^{0.6} below one
        // at the defaults, t^{-2/α_N} above), so both get the wide scale.
        let scale = 0.5 * self.params.alpha_nlos;
        let below = integrate(
            |x: f64| weighted((-x).exp()),
            Domain::semi_infinite(0.0, Decay::ExpLinear { scale }),
            &spec,
        );
        let above = integrate(
            |v: f64| weighted(v.exp()),
            Domain::semi_infinite(0.0, Decay::ExpLinear { scale }),
            &spec,
        );
        let res = QuadratureResult {
            value: below.value + above.value,
            error_estimate: below.error_estimate + above.error_estimate,
            evals: below.evals + above.evals,
            converged: below.converged && above.converged,
        };
        Ok((res.value, QuadratureFlags::from_parts(&res, &tracker)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{AnalysisSettings, LaplaceMode};
    use crate::pathloss::NetworkParams;
    use crate::quadrature::{integrate_finite, QuadratureSpec};

    fn lb() -> f64 {
        1.0 / (800.0 * 800.0 * PI)
    }

    #[test]
    fn nearest_pdf_hand_value() {
        // 2·(1/640000)·800·e^{-1}
        let want = 2.0 / 640_000.0 * 800.0 * (-1f64).exp();
        assert!((nearest_k_pdf(800.0, 1, lb()) - want).abs() < 1e-15);
        assert!((want - 9.196_986e-4).abs() < 1e-9);
        assert_eq!(nearest_k_pdf(0.0, 1, lb()), 0.0);
        assert!(nearest_k_pdf(5000.0, 200, lb()).is_finite());
    }

    #[test]
    fn nearest_pdf_normalized_and_mean() {
        // Plain finite integral far past the mass, independent of the
        // semi-infinite transforms used in production.
        let spec = QuadratureSpec::new(1e-13, 1e-12, 1_000_000).unwrap();
        for k in [1, 2, 5] {
            let total = integrate_finite(|r| nearest_k_pdf(r, k, lb()), 0.0, 20_000.0, &spec);
            assert!((total.value - 1.0).abs() < 1e-9, "k={k}: {}", total.value);
        }
        let mean = integrate_finite(|r| r * nearest_k_pdf(r, 1, lb()), 0.0, 20_000.0, &spec);
        let want = 1.0 / (2.0 * lb().sqrt());
        assert!((mean.value - want).abs() < 1e-6);
        // 400√π
        assert!((want - 708.98).abs() < 0.01);
    }

    #[test]
    fn small_threshold_gives_full_coverage() {
        let ev = Evaluator::new(NetworkParams::default(), LaplaceMode::ExactAngular).unwrap();
        let c = ev.coverage(1, 1e-6).unwrap();
        assert!(c.probability >= 0.999, "{c:?}");
        assert!(c.quadrature.converged);
        assert!(ev.coverage(1, 1e16).unwrap().probability < 1e-3);
    }

    #[test]
    fn all_nlos_matches_closed_form() {
        let p = NetworkParams {
            lambda_c: 1e3,
            alpha_los: 2.0,
            alpha_nlos: 4.0,
            ..NetworkParams::default()
        };
        let ev = Evaluator::new(p, LaplaceMode::ExactAngular).unwrap();
        for t in [0.1f64, 1.0, 10.0] {
            let rho = t.sqrt() * (PI / 2.0 - (1.0 / t.sqrt()).atan());
            let want = 1.0 / (1.0 + rho);
            let got = ev.coverage(1, t).unwrap();
            assert!(
                (got.probability - want).abs() < 1e-6,
                "t={t}: {} vs {want}",
                got.probability
            );
        }
    }

    #[test]
    fn monotone_in_threshold_and_order() {
        let ev = Evaluator::new(NetworkParams::default(), LaplaceMode::ExactAngular).unwrap();
        let ts = [0.1, 0.316, 1.0, 3.16, 10.0];
        for k in 1..=3 {
            let ps: Vec<f64> = ts.iter().map(|&t| ev.sir_ccdf(k, t).unwrap()).collect();
            assert!(ps.windows(2).all(|w| w[1] <= w[0]), "k={k}: {ps:?}");
        }
        for &t in &ts {
            let ps: Vec<f64> = (1..=4).map(|k| ev.sir_ccdf(k, t).unwrap()).collect();
            assert!(ps.windows(2).all(|w| w[1] <= w[0] + 1e-9), "t={t}: {ps:?}");
        }
    }

    #[test]
    fn transmit_power_cancels() {
        let p = NetworkParams::default();
        let loud = NetworkParams {
            p_t: p.p_t * 1e3,
            ..p
        };
        let a = Evaluator::new(p, LaplaceMode::ExactAngular)
            .unwrap()
            .coverage(2, 0.5)
            .unwrap();
        let b = Evaluator::new(loud, LaplaceMode::ExactAngular)
            .unwrap()
            .coverage(2, 0.5)
            .unwrap();
        assert_eq!(a.probability, b.probability);
    }

    #[test]
    fn density_matches_finite_difference() {
        let ev = Evaluator::with_settings(
            NetworkParams::default(),
            LaplaceMode::ExactAngular,
            AnalysisSettings::precise(),
        )
        .unwrap();
        for t in [0.3, 2.0] {
            let analytic = ev.sir_pdf(1, t).unwrap();
            let fd = ev.sir_pdf_finite_difference(1, t, 1e-3).unwrap();
            assert!(
                (analytic.density - fd).abs() < 1e-5,
                "t={t}: {} vs {fd}",
                analytic.density
            );
        }
    }

    #[test]
    fn rejects_bad_queries() {
        let ev = Evaluator::new(NetworkParams::default(), LaplaceMode::ExactAngular).unwrap();
        assert!(ev.coverage(0, 1.0).is_err());
        assert!(ev.coverage(1, 0.0).is_err());
        assert!(ev.coverage(1, f64::NAN).is_err());
        let empty = Evaluator::new(
            NetworkParams {
                lambda_b: 0.0,
                ..NetworkParams::default()
            },
            LaplaceMode::ExactAngular,
        )
        .unwrap();
        assert!(matches!(empty.coverage(1, 1.0), Err(Error::Domain(_))));
    }
}
