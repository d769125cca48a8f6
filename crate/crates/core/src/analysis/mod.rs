//! Analytic performance metrics evaluated by numerical integration.
//!
//! An [`Evaluator`] binds one parameter set and Laplace mode, tabulates the
//! angular LoS integral once, and then answers coverage, density, rate and
//! association queries. The free functions at the bottom build a throwaway
//! evaluator for one-off calls.

mod association;
mod coverage;
mod qtable;
mod rate;

use std::cell::Cell;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathloss::{bessel_i0_scaled, NetworkParams};
use crate::quadrature::{integrate, Decay, Domain, QuadratureResult, QuadratureSpec};

pub use association::{
    AssociationDistribution, DEFAULT_ASSOCIATION_SAMPLES, DEFAULT_ASSOCIATION_SEED,
};
pub use coverage::{nearest_k_pdf, CoverageResult, DensityResult};
pub use rate::{AverageRate, RateResult, TAIL_MASS_LIMIT};

use qtable::QTable;

/// Which form of the interference Laplace transform to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplaceMode {
    /// The exact double integral with `|sin|`, `|cos|` in the LoS probability.
    ExactAngular,
    /// The angular integral replaced by `2π e^{-λ_C wl} I₀(λ_C r √(l²+w²))`.
    ///
    /// This term exceeds the true angular integral, and because the LoS part
    /// of the integrand carries more interference than the NLoS part, the
    /// substitution enlarges the exponent: the result is a lower bound on the
    /// transform, not an upper one. `I₀` also grows like `e^{λ_C r √(l²+w²)}`,
    /// so the distance integral diverges whenever `λ_C > 0` and `s > 0`;
    /// the evaluation then reports a non-finite exponent and a zero transform.
    BesselBound,
}

impl fmt::Display for LaplaceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LaplaceMode::ExactAngular => "exact",
            LaplaceMode::BesselBound => "bound",
        })
    }
}

impl FromStr for LaplaceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact_angular" => Ok(LaplaceMode::ExactAngular),
            "bound" | "bessel_bound" => Ok(LaplaceMode::BesselBound),
            other => Err(Error::Config(format!(
                "unknown Laplace mode `{other}` (expected exact|bound)"
            ))),
        }
    }
}

/// Tolerances for the nested integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    /// Outer integrals over the serving distance (coverage, density, association).
    pub outer: QuadratureSpec,
    /// Interference exponent integrals.
    pub inner: QuadratureSpec,
    /// Integrals over the SIR threshold (rate).
    pub rate: QuadratureSpec,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            outer: QuadratureSpec {
                abs_tol: 1e-7,
                rel_tol: 1e-6,
                max_evals: 100_000,
            },
            inner: QuadratureSpec::default(),
            rate: QuadratureSpec {
                abs_tol: 1e-6,
                rel_tol: 1e-5,
                max_evals: 20_000,
            },
        }
    }
}

impl AnalysisSettings {
    /// Much tighter tolerances, for finite-difference checks.
    pub fn precise() -> Self {
        Self {
            outer: QuadratureSpec {
                abs_tol: 1e-12,
                rel_tol: 1e-11,
                max_evals: 400_000,
            },
            inner: QuadratureSpec {
                abs_tol: 1e-13,
                rel_tol: 1e-12,
                max_evals: 1_000_000,
            },
            rate: QuadratureSpec {
                abs_tol: 1e-9,
                rel_tol: 1e-8,
                max_evals: 50_000,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.outer.validate()?;
        self.inner.validate()?;
        self.rate.validate()
    }
}

/// Convergence summary of a (possibly nested) numerical evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureFlags {
    /// Outer integral and every inner integral met their tolerance.
    pub converged: bool,
    /// Error estimate of the outermost integral.
    pub error_estimate: f64,
    /// Integrand evaluations across all levels.
    pub evals: usize,
    /// Inner integrals that missed their tolerance or returned non-finite values.
    pub inner_failures: usize,
}

impl QuadratureFlags {
    pub fn exact() -> Self {
        Self {
            converged: true,
            error_estimate: 0.0,
            evals: 0,
            inner_failures: 0,
        }
    }

    fn from_parts(outer: &QuadratureResult, tracker: &Tracker) -> Self {
        let inner_failures = tracker.failures.get();
        Self {
            converged: outer.converged && inner_failures == 0 && outer.value.is_finite(),
            error_estimate: outer.error_estimate,
            evals: outer.evals + tracker.evals.get(),
            inner_failures,
        }
    }
}

/// Accumulates inner-integral diagnostics while an outer integral runs.
#[derive(Default)]
struct Tracker {
    evals: Cell<usize>,
    failures: Cell<usize>,
}

impl Tracker {
    fn note(&self, r: &QuadratureResult) {
        self.evals.set(self.evals.get() + r.evals);
        if !r.converged {
            self.failures.set(self.failures.get() + 1);
        }
    }

    fn absorb(&self, flags: &QuadratureFlags) {
        self.evals.set(self.evals.get() + flags.evals);
        if !flags.converged {
            self.failures.set(self.failures.get() + 1);
        }
    }
}

/// The interference Laplace transform at one `(s, r_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceResult {
    /// `E[e^{-s I_k}]`.
    pub value: f64,
    /// `-ln` of the value, as integrated; `inf` when the integral diverges.
    pub exponent: f64,
    pub quadrature: QuadratureFlags,
}

/// Sum of integrals over adjacent pieces, splitting the tolerance evenly.
fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    pieces: &[Domain],
    spec: &QuadratureSpec,
) -> QuadratureResult {
    let share = spec.scaled(1.0 / pieces.len() as f64);
    let mut total = QuadratureResult {
        value: 0.0,
        error_estimate: 0.0,
        evals: 0,
        converged: true,
    };
    for piece in pieces {
        let r = integrate(&f, *piece, &share);
        total.value += r.value;
        total.error_estimate += r.error_estimate;
        total.evals += r.evals;
        total.converged &= r.converged;
    }
    total
}

/// Clamp a probability computed by quadrature into `[0, 1]`, logging the raw value.
fn clamp_probability(raw: f64, what: &str) -> f64 {
    if (0.0..=1.0).contains(&raw) {
        raw
    } else {
        log::debug!("{what}: raw value {raw:e} clamped to [0, 1]");
        raw.clamp(0.0, 1.0)
    }
}

/// One parameter set, ready for repeated analytic queries.
#[derive(Debug, Clone)]
pub struct Evaluator {
    params: NetworkParams,
    mode: LaplaceMode,
    settings: AnalysisSettings,
    table: QTable,
}

impl Evaluator {
    pub fn new(params: NetworkParams, mode: LaplaceMode) -> Result<Self> {
        Self::with_settings(params, mode, AnalysisSettings::default())
    }

    pub fn with_settings(
        params: NetworkParams,
        mode: LaplaceMode,
        settings: AnalysisSettings,
    ) -> Result<Self> {
        params.validate()?;
        settings.validate()?;
        Ok(Self {
            table: QTable::new(&params),
            params,
            mode,
            settings,
        })
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn mode(&self) -> LaplaceMode {
        self.mode
    }

    pub fn settings(&self) -> &AnalysisSettings {
        &self.settings
    }

    /// `Q(r) = ∫_0^{2π} P_LoS(r, θ) dθ`, from the precomputed table.
    pub fn q(&self, r: f64) -> f64 {
        self.table.q(r)
    }

    /// The angular term used inside the interference integral for this mode.
    fn interference_q(&self, r: f64) -> f64 {
        match self.mode {
            LaplaceMode::ExactAngular => self.table.q(r),
            LaplaceMode::BesselBound => {
                let p = &self.params;
                if p.lambda_c == 0.0 {
                    return 2.0 * PI;
                }
                if p.los_at_origin() == 0.0 {
                    return 0.0;
                }
                let x = p.lambda_c * r * p.l.hypot(p.w);
                // e^{-λ_C wl} I₀(x) = e^{x - λ_C wl} · (e^{-x} I₀(x)); overflows to inf.
                2.0 * PI * (x - p.lambda_c * p.w * p.l).exp() * bessel_i0_scaled(x)
            }
        }
    }

    /// Rejects the one admissible parameter combination whose interference
    /// integral diverges: no blockages with a LoS exponent of 2 gives
    /// `∫ r^{1-2} dr` over the infinite plane.
    pub fn check_interference_finite(&self) -> Result<()> {
        if self.params.lambda_c == 0.0 && self.params.alpha_los <= 2.0 {
            return Err(Error::Divergent(
                "with no blockages every interferer is LoS, and with alpha_los = 2 the aggregate \
                 interference of an infinite Poisson field diverges logarithmically; use \
                 alpha_los > 2 or lambda_c > 0"
                    .into(),
            ));
        }
        Ok(())
    }

    fn check_distance(r_k: f64) -> Result<()> {
        if !(r_k.is_finite() && r_k > 0.0) {
            return Err(Error::Domain(format!(
                "serving distance must be finite and > 0, got {r_k}"
            )));
        }
        Ok(())
    }

    fn check_s(s: f64) -> Result<()> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Domain(format!(
                "Laplace argument must be finite and >= 0, got {s}"
            )));
        }
        Ok(())
    }

    /// Pieces of `[r_k, ∞)`: where the LoS term can matter the integrand
    /// decays on the blockage length scale, beyond it only algebraically.
    fn interference_pieces(&self, r_k: f64) -> Vec<Domain> {
        match self.table.decay_length() {
            Some(d) => {
                let cut = r_k + 36.0 * d;
                vec![
                    Domain::finite(r_k, cut),
                    Domain::semi_infinite(cut, Decay::Power { scale: cut }),
                ]
            }
            None => vec![Domain::semi_infinite(r_k, Decay::Power { scale: r_k })],
        }
    }

    fn integrate_interference<F: Fn(f64) -> f64>(&self, f: F, r_k: f64) -> QuadratureResult {
        let mut res = integrate_pieces(f, &self.interference_pieces(r_k), &self.settings.inner);
        res.value *= self.params.lambda_b;
        res.error_estimate *= self.params.lambda_b;
        res
    }

    /// `λ_B ∫_{r_k}^∞ [2π b/(1+b) + Q(r)(a-b)/((1+a)(1+b))] r dr` with
    /// `a = s r^{-α_L}`, `b = s r^{-α_N}`.
    fn exponent_raw(&self, s: f64, r_k: f64) -> QuadratureResult {
        let p = &self.params;
        if s == 0.0 || p.lambda_b == 0.0 {
            return QuadratureResult {
                value: 0.0,
                error_estimate: 0.0,
                evals: 0,
                converged: true,
            };
        }
        let (al, an) = (p.alpha_los, p.alpha_nlos);
        let integrand = |r: f64| {
            let a = s * r.powf(-al);
            let b = s * r.powf(-an);
            let nlos = 2.0 * PI * b / (1.0 + b);
            let q = self.interference_q(r);
            let extra = if q == 0.0 {
                0.0
            } else {
                q * (a - b) / ((1.0 + a) * (1.0 + b))
            };
            (nlos + extra) * r
        };
        self.integrate_interference(integrand, r_k)
    }

    /// `d/ds` of the exponent:
    /// `λ_B ∫ [(2π - Q) B/(1+b)² + Q A/(1+a)²] r dr`, `A = r^{-α_L}`, `B = r^{-α_N}`.
    fn exponent_derivative_raw(&self, s: f64, r_k: f64) -> QuadratureResult {
        let p = &self.params;
        if p.lambda_b == 0.0 {
            return QuadratureResult {
                value: 0.0,
                error_estimate: 0.0,
                evals: 0,
                converged: true,
            };
        }
        let (al, an) = (p.alpha_los, p.alpha_nlos);
        let integrand = |r: f64| {
            let big_a = r.powf(-al);
            let big_b = r.powf(-an);
            let a = s * big_a;
            let b = s * big_b;
            let q = self.interference_q(r);
            let nlos = (2.0 * PI - q) * big_b / ((1.0 + b) * (1.0 + b));
            let los = if q == 0.0 {
                0.0
            } else {
                q * big_a / ((1.0 + a) * (1.0 + a))
            };
            (nlos + los) * r
        };
        self.integrate_interference(integrand, r_k)
    }

    /// `E[exp(-s I_k)]` for interferers beyond `r_k`.
    pub fn laplace(&self, s: f64, r_k: f64) -> Result<LaplaceResult> {
        Self::check_s(s)?;
        Self::check_distance(r_k)?;
        self.check_interference_finite()?;
        Ok(self.laplace_unchecked(s, r_k))
    }

    fn laplace_unchecked(&self, s: f64, r_k: f64) -> LaplaceResult {
        let raw = self.exponent_raw(s, r_k);
        let finite = raw.value.is_finite() && raw.error_estimate.is_finite();
        let exponent = if finite {
            raw.value.max(0.0)
        } else {
            f64::INFINITY
        };
        LaplaceResult {
            value: (-exponent).exp(),
            exponent,
            quadrature: QuadratureFlags {
                converged: raw.converged && finite,
                error_estimate: raw.error_estimate,
                evals: raw.evals,
                inner_failures: 0,
            },
        }
    }

    /// `d/ds` of the interference exponent, so `dL/ds = -L · exponent_derivative`.
    pub fn laplace_exponent_derivative(&self, s: f64, r_k: f64) -> Result<QuadratureResult> {
        Self::check_s(s)?;
        Self::check_distance(r_k)?;
        self.check_interference_finite()?;
        Ok(self.exponent_derivative_raw(s, r_k))
    }
}

/// Interference Laplace transform at one point; builds a one-off [`Evaluator`].
pub fn laplace_interference(
    s: f64,
    r_k: f64,
    params: &NetworkParams,
    mode: LaplaceMode,
) -> Result<LaplaceResult> {
    Evaluator::new(*params, mode)?.laplace(s, r_k)
}

pub fn coverage_probability(
    k: usize,
    threshold: f64,
    params: &NetworkParams,
    mode: LaplaceMode,
) -> Result<CoverageResult> {
    Evaluator::new(*params, mode)?.coverage(k, threshold)
}

/// The SIR complementary distribution, i.e. coverage at threshold `t`.
pub fn sir_ccdf(k: usize, t: f64, params: &NetworkParams, mode: LaplaceMode) -> Result<f64> {
    Ok(coverage_probability(k, t, params, mode)?.probability)
}

pub fn sir_pdf(
    k: usize,
    t: f64,
    params: &NetworkParams,
    mode: LaplaceMode,
) -> Result<DensityResult> {
    Evaluator::new(*params, mode)?.sir_pdf(k, t)
}

pub fn conditional_rate(k: usize, params: &NetworkParams, mode: LaplaceMode) -> Result<RateResult> {
    Evaluator::new(*params, mode)?.conditional_rate(k)
}

/// `p_ass^k` alone, with its Monte Carlo standard error for `k ≥ 2`.
pub fn association_probability(
    k: usize,
    params: &NetworkParams,
    mc_samples: usize,
) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Parameter("association index k must be >= 1".into()));
    }
    let ev = Evaluator::new(*params, LaplaceMode::ExactAngular)?;
    let dist = ev.association(k, mc_samples, DEFAULT_ASSOCIATION_SEED)?;
    Ok((dist.probs[k - 1], dist.std_errors[k - 1]))
}

pub fn average_rate(
    params: &NetworkParams,
    k_max: usize,
    mode: LaplaceMode,
) -> Result<AverageRate> {
    Evaluator::new(*params, mode)?.average_rate(
        k_max,
        DEFAULT_ASSOCIATION_SAMPLES,
        DEFAULT_ASSOCIATION_SEED,
    )
}
