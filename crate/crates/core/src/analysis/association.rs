//! Association probabilities under the nearest-first local-maximum rule.
//!
//! The rule walks base stations in distance order and stops at the first `k`
//! whose fading-free received power `P_k = r_k^{-α_k}` is at least that of
//! the next one. So `p_ass^k = P(P_1 < … < P_k ≥ P_{k+1})`. Given distances
//! and azimuths the link states are independent, and the probability of any
//! ordering pattern follows from a two-state forward recursion over the
//! LoS/NLoS labels.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{Evaluator, QuadratureFlags};
use crate::error::{Error, Result};
use crate::pathloss::los_probability;
use crate::quadrature::{integrate_2d, Decay, Domain, QuadratureResult};
use crate::rng::{derive_seed, seeded};

pub const DEFAULT_ASSOCIATION_SAMPLES: usize = 200_000;
pub const DEFAULT_ASSOCIATION_SEED: u64 = 0x5eed_a550;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationDistribution {
    /// `p_ass^k` for `k = 1..=k_max`. The first entry is from quadrature,
    /// the rest from Monte Carlo integration.
    pub probs: Vec<f64>,
    /// Standard errors; zero for the quadrature entry.
    pub std_errors: Vec<f64>,
    /// `P(P_1 < … < P_{k_max+1})`, the mass of every `k > k_max`, estimated
    /// independently of `probs`.
    pub tail_mass: f64,
    pub tail_std_error: f64,
    /// The Monte Carlo estimate of `p_ass^1`, kept as a consistency check
    /// on the quadrature value.
    pub first_mc: f64,
    pub first_mc_std_error: f64,
    pub samples: usize,
    /// Flags of the `k = 1` quadrature.
    pub quadrature: QuadratureFlags,
}

impl AssociationDistribution {
    fn deterministic(k_max: usize) -> Self {
        let mut probs = vec![0.0; k_max];
        probs[0] = 1.0;
        Self {
            probs,
            std_errors: vec![0.0; k_max],
            tail_mass: 0.0,
            tail_std_error: 0.0,
            first_mc: 1.0,
            first_mc_std_error: 0.0,
            samples: 0,
            quadrature: QuadratureFlags::exact(),
        }
    }

    /// `Σ probs + tail_mass`; one up to quadrature and sampling error.
    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_mass
    }
}

/// Log received power without fading, `-α ln r`; index 0 is LoS, 1 NLoS.
fn log_power(r: f64, alpha: f64) -> f64 {
    -alpha * r.ln()
}

/// For one ordered draw of `(r_i, P_LoS,i)`, fill `stop[k-1]` with the
/// probability that the rule stops at `k` for `k = 1..=stop.len()`, and return
/// the probability that it passes all of them (`P_1 < … < P_{K+1}`).
///
/// `links` must hold `stop.len() + 1` entries of `(r, p_los)`.
fn stop_probabilities(links: &[(f64, f64)], alphas: [f64; 2], stop: &mut [f64]) -> f64 {
    let weight = |p_los: f64, i: usize| if i == 0 { p_los } else { 1.0 - p_los };
    // alive[s]: probability that the first i powers strictly increase and link i has state s.
    let mut alive = [weight(links[0].1, 0), weight(links[0].1, 1)];
    for (k, slot) in stop.iter_mut().enumerate() {
        let (r, _) = links[k];
        let (r_next, p_next) = links[k + 1];
        let mut next = [0.0; 2];
        let mut stopped = 0.0;
        for (s, &mass) in alive.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let here = log_power(r, alphas[s]);
            for s2 in 0..2 {
                let w = weight(p_next, s2);
                if w == 0.0 {
                    continue;
                }
                let there = log_power(r_next, alphas[s2]);
                if here >= there {
                    stopped += mass * w;
                } else {
                    next[s2] += mass * w;
                }
            }
        }
        *slot = stopped;
        alive = next;
    }
    alive[0] + alive[1]
}

/// Running mean and variance (Welford).
#[derive(Default, Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            (self.m2 / (self.n - 1.0) / self.n).sqrt()
        }
    }
}

impl Evaluator {
    /// `p_ass^1` by quadrature over the joint density of the two nearest
    /// distances, `(2πλ_B)² r₁ r₂ e^{-πλ_B r₂²}` on `r₁ < r₂`, with the
    /// azimuth-averaged LoS probability `q = Q/2π`.
    ///
    /// The nearest station loses to the second only if
    /// * it is NLoS, the second LoS, and `r₂^{α_L} < r₁^{α_N}`, i.e.
    ///   `r₂^{α_L/α_N} < r₁ < r₂` (needs `r₂ > 1`); or
    /// * it is LoS, the second NLoS, and `r₂^{α_N} < r₁^{α_L}`, i.e.
    ///   `r₂^{α_N/α_L} < r₁ < r₂` (needs `r₂ < 1`).
    pub fn association_first(&self) -> (f64, QuadratureFlags) {
        let p = &self.params;
        if p.link_state_is_deterministic().is_some() {
            return (1.0, QuadratureFlags::exact());
        }
        let pl = PI * p.lambda_b;
        let c = (2.0 * pl).powi(2);
        let q = |r: f64| self.q(r) / (2.0 * PI);
        let ratio = p.alpha_los / p.alpha_nlos;
        let spec = &self.settings.outer;
        let far = integrate_2d(
            |r2, r1| c * r1 * r2 * (-pl * r2 * r2).exp() * (1.0 - q(r1)) * q(r2),
            Domain::semi_infinite(
                1.0,
                Decay::ExpQuadratic {
                    scale: 1.0 / pl.sqrt(),
                },
            ),
            |r2| Domain::finite(r2.powf(ratio), r2),
            spec,
        );
        let near = integrate_2d(
            |r2, r1| c * r1 * r2 * (-pl * r2 * r2).exp() * q(r1) * (1.0 - q(r2)),
            Domain::finite(0.0, 1.0),
            |r2| Domain::finite(r2.powf(1.0 / ratio), r2),
            spec,
        );
        let combined = QuadratureResult {
            value: 1.0 - far.value - near.value,
            error_estimate: far.error_estimate + near.error_estimate,
            evals: far.evals + near.evals,
            converged: far.converged && near.converged,
        };
        let flags = QuadratureFlags {
            converged: combined.converged,
            error_estimate: combined.error_estimate,
            evals: combined.evals,
            inner_failures: 0,
        };
        (
            super::clamp_probability(combined.value, "association k=1"),
            flags,
        )
    }

    /// `p_ass^k` for `k = 1..=k_max` and the mass beyond.
    ///
    /// Ordered distances are drawn exactly from the PPP order statistics
    /// (`π λ_B r_i²` are the arrival times of a unit-rate Poisson process)
    /// with independent uniform azimuths; each draw contributes the exact
    /// conditional stop probabilities from the state recursion.
    pub fn association(
        &self,
        k_max: usize,
        samples: usize,
        seed: u64,
    ) -> Result<AssociationDistribution> {
        if k_max == 0 {
            return Err(Error::Parameter("k_max must be >= 1".into()));
        }
        let p = &self.params;
        if p.link_state_is_deterministic().is_some() {
            return Ok(AssociationDistribution::deterministic(k_max));
        }
        if p.lambda_b <= 0.0 {
            return Err(Error::Domain("association needs lambda_b > 0".into()));
        }
        if samples < 2 {
            return Err(Error::Parameter(
                "association needs at least 2 Monte Carlo samples".into(),
            ));
        }
        let (first, quadrature) = self.association_first();
        let pl = PI * p.lambda_b;
        let alphas = [p.alpha_los, p.alpha_nlos];
        let mut rng = seeded(derive_seed(seed, &[k_max as u64]));
        let mut stats = vec![Moments::default(); k_max];
        let mut tail = Moments::default();
        let mut links = vec![(0.0, 0.0); k_max + 1];
        let mut stop = vec![0.0; k_max];
        for _ in 0..samples {
            let mut arrival = 0.0;
            for link in links.iter_mut() {
                let e: f64 = rng.sample(Exp1);
                arrival += e;
                let r = (arrival / pl).sqrt();
                let theta = rng.random::<f64>() * 2.0 * PI;
                *link = (r, los_probability(r, theta, p));
            }
            let beyond = stop_probabilities(&links, alphas, &mut stop);
            for (m, &x) in stats.iter_mut().zip(&stop) {
                m.push(x);
            }
            tail.push(beyond);
        }
        let mut probs: Vec<f64> = stats.iter().map(|m| m.mean).collect();
        let mut std_errors: Vec<f64> = stats.iter().map(Moments::std_error).collect();
        let (first_mc, first_mc_std_error) = (probs[0], std_errors[0]);
        probs[0] = first;
        std_errors[0] = 0.0;
        Ok(AssociationDistribution {
            probs,
            std_errors,
            tail_mass: tail.mean,
            tail_std_error: tail.std_error(),
            first_mc,
            first_mc_std_error,
            samples,
            quadrature,
        })
    }
}
