//! Monte Carlo oracle.
//!
//! Each trial samples base stations around a user at the origin, assigns
//! every link a LoS/NLoS state (from a sampled blockage field, or from an
//! independent coin with the single-link LoS probability), draws Rayleigh
//! fading, picks a serving station and records the resulting SIR.
//!
//! Trials run in fixed-size chunks whose partial tallies are merged in chunk
//! order, so every summary is bit-identical for any number of workers.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    count_blocking, poisson_count, sample_blockages_near_link, sample_bs_ppp, BlockageMarks,
    LazyBlockageField, Orientation, Point, PointPolar,
};
use crate::pathloss::{
    expected_blockage_count, los_probability, LinkKind, LinkState, NetworkParams,
};
use crate::rng::{derive_seed, trial_stream, StreamRng};

/// Trials per work unit. Fixed, because the merge order follows chunks.
const CHUNK: usize = 256;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockageMode {
    /// Links are tested against one sampled rectangle field.
    Geometric,
    /// Each link is LoS independently with its single-link probability.
    Probabilistic,
}

impl fmt::Display for BlockageMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockageMode::Geometric => "geometric",
            BlockageMode::Probabilistic => "probabilistic",
        })
    }
}

impl FromStr for BlockageMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(BlockageMode::Geometric),
            "probabilistic" => Ok(BlockageMode::Probabilistic),
            _ => Err(Error::Config(format!(
                "unknown blockage mode {s:?} (geometric|probabilistic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Association {
    /// Nearest-first scan stopping at the first local maximum of `r^-α`.
    Table1,
    /// Global maximum of `r^-α`.
    ArgmaxNoFading,
    /// Global maximum of `h r^-α`.
    ArgmaxWithFading,
}

impl fmt::Display for Association {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Association::Table1 => "table1",
            Association::ArgmaxNoFading => "argmax",
            Association::ArgmaxWithFading => "argmax-fading",
        })
    }
}

impl FromStr for Association {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Association::Table1),
            "argmax" | "argmax_no_fading" => Ok(Association::ArgmaxNoFading),
            "argmax-fading" | "argmax_with_fading" => Ok(Association::ArgmaxWithFading),
            _ => Err(Error::Config(format!(
                "unknown association {s:?} (table1|argmax|argmax-fading)"
            ))),
        }
    }
}

/// Serving orders tracked by default.
pub const DEFAULT_K_TRACK: usize = 8;

/// Disc radius that keeps truncation bias far below Monte Carlo noise for
/// serving orders up to `k`.
///
/// At least eight mean nearest-neighbour radii, so the serving station is
/// essentially never missing. NLoS interference from beyond `R` is, relative
/// to the signal of the `k`-th nearest station at its typical distance `r_k`,
/// `2k (r_k/R)^{α_N-2} / (α_N-2)`; the disc keeps that below 1e-3. When
/// blockages are sparse the LoS interference (`α_L = 2` decays only through
/// blockage) reaches further still, so the disc also covers six LoS decay
/// lengths, capped at about 16384 expected stations per trial.
pub fn default_region_radius(params: &NetworkParams, k: usize) -> f64 {
    let k = k.max(1) as f64;
    let density = PI * params.lambda_b;
    let base = 8.0 / density.sqrt();
    let excess = params.alpha_nlos - 2.0;
    let nlos_reach = if excess > 0.0 {
        (k / density).sqrt() * (2000.0 * k / excess).powf(1.0 / excess)
    } else {
        0.0
    };
    let los_reach = if params.lambda_c > 0.0 {
        6.0 / (params.lambda_c * params.l.min(params.w))
    } else {
        f64::INFINITY
    };
    let cap = (16384.0 / density).sqrt();
    base.max(nlos_reach.min(cap)).max(los_reach.min(cap))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub params: NetworkParams,
    pub trials: usize,
    pub master_seed: u64,
    pub blockage_mode: BlockageMode,
    pub association: Association,
    pub region_radius: f64,
    /// Serving orders tracked individually; larger orders share one bucket.
    pub k_track: usize,
    /// Blockage orientation in geometric mode. Defaults to the model's fixed `φ`.
    pub orientation: Orientation,
    /// Radial bin edges for the per-link LoS statistics.
    pub los_bin_edges: Vec<f64>,
}

impl TrialConfig {
    pub fn new(params: NetworkParams, trials: usize, master_seed: u64) -> Self {
        Self {
            params,
            trials,
            master_seed,
            blockage_mode: BlockageMode::Probabilistic,
            association: Association::Table1,
            region_radius: default_region_radius(&params, DEFAULT_K_TRACK),
            k_track: DEFAULT_K_TRACK,
            orientation: Orientation::Fixed(params.phi),
            los_bin_edges: (0..=10).map(|i| 100.0 * i as f64).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be >= 1".into()));
        }
        if self.k_track == 0 {
            return Err(Error::Parameter("k_track must be >= 1".into()));
        }
        if !(self.params.lambda_b > 0.0) {
            return Err(Error::Parameter("simulation needs lambda_b > 0".into()));
        }
        if !(self.region_radius.is_finite() && self.region_radius > 0.0) {
            return Err(Error::Parameter(format!(
                "region radius must be finite and > 0, got {}",
                self.region_radius
            )));
        }
        if self.blockage_mode == BlockageMode::Geometric && !self.params.lambda_c.is_finite() {
            return Err(Error::Parameter(
                "geometric mode cannot sample an infinite blockage intensity".into(),
            ));
        }
        if self.los_bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Parameter(
                "LoS bin edges must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    fn marks(&self) -> BlockageMarks {
        BlockageMarks {
            length: self.params.l,
            width: self.params.w,
            orientation: self.orientation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirSample {
    pub sir_linear: f64,
    /// 1-based distance order of the serving station.
    pub serving_k: usize,
    pub serving_state: LinkState,
}

/// One realized link, in distance order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub r: f64,
    pub theta: f64,
    pub state: LinkState,
    /// Unit-mean exponential power fading.
    pub fading: f64,
}

/// Everything one trial produces, before any aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub links: Vec<Link>,
    /// Draws discarded for having fewer than two stations.
    pub resamples: u32,
    /// 1-based serving orders under each rule.
    pub table1_k: usize,
    pub argmax_k: usize,
    pub argmax_fading_k: usize,
    /// The stopping rule never fired and fell back to the global maximum.
    pub table1_fallback: bool,
}

impl TrialRecord {
    pub fn serving_k(&self, association: Association) -> usize {
        match association {
            Association::Table1 => self.table1_k,
            Association::ArgmaxNoFading => self.argmax_k,
            Association::ArgmaxWithFading => self.argmax_fading_k,
        }
    }

    /// SIR when the `k`-th nearest station (1-based) serves and every other
    /// station interferes.
    pub fn sir_of(&self, k: usize) -> f64 {
        let i = k - 1;
        let signal = self.links[i].state.path_loss * self.links[i].fading;
        let interference: f64 = self
            .links
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, l)| l.state.path_loss * l.fading)
            .sum();
        signal / interference
    }

    /// SIRs of the `count` nearest stations as servers when only farther
    /// stations interfere.
    pub fn outer_sirs_of_nearest(&self, count: usize) -> Vec<f64> {
        let count = count.min(self.links.len());
        let power: Vec<f64> = self
            .links
            .iter()
            .map(|l| l.state.path_loss * l.fading)
            .collect();
        let mut beyond: f64 = power[count..].iter().sum();
        let mut out = vec![0.0; count];
        for i in (0..count).rev() {
            out[i] = power[i] / beyond;
            beyond += power[i];
        }
        out
    }

    /// [`Self::sir_of`] for `k = 1..=count`, sharing the far-field sum.
    pub fn sirs_of_nearest(&self, count: usize) -> Vec<f64> {
        let count = count.min(self.links.len());
        let power: Vec<f64> = self
            .links
            .iter()
            .map(|l| l.state.path_loss * l.fading)
            .collect();
        let far: f64 = power[count..].iter().sum();
        (0..count)
            .map(|i| {
                let near: f64 = power[..count]
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, p)| p)
                    .sum();
                power[i] / (near + far)
            })
            .collect()
    }

    pub fn sample(&self, association: Association) -> SirSample {
        let k = self.serving_k(association);
        SirSample {
            sir_linear: self.sir_of(k),
            serving_k: k,
            serving_state: self.links[k - 1].state,
        }
    }
}

/// First `k` (1-based) with `gain_k ≥ gain_{k+1}`, if any.
fn first_local_max(gains: &[f64]) -> Option<usize> {
    gains.windows(2).position(|w| w[0] >= w[1]).map(|i| i + 1)
}

/// 1-based index of the largest value; ties go to the nearer station.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0 + 1
}

/// Serving order under the nearest-first stopping rule, for links `(r, α)`
/// sorted by `r`. Falls back to the global maximum of `r^-α` when the rule
/// never fires inside the sampled region.
pub fn associate_table1(links: &[(f64, f64)]) -> usize {
    let gains: Vec<f64> = links.iter().map(|&(r, a)| r.powf(-a)).collect();
    first_local_max(&gains).unwrap_or_else(|| {
        log::debug!("stopping rule did not fire within the region; using the global maximum");
        argmax(gains.iter().copied())
    })
}

/// Serving order maximizing `r^-α`, or `h r^-α` when fading is supplied.
pub fn associate_argmax(links: &[(f64, f64)], fading: Option<&[f64]>) -> usize {
    match fading {
        Some(h) => argmax(links.iter().zip(h).map(|(&(r, a), &h)| h * r.powf(-a))),
        None => argmax(links.iter().map(|&(r, a)| r.powf(-a))),
    }
}

fn link_state(r: f64, los: bool, params: &NetworkParams) -> LinkState {
    let kind = if los { LinkKind::Los } else { LinkKind::Nlos };
    let exponent = params.exponent(kind);
    LinkState {
        kind,
        exponent,
        path_loss: r.powf(-exponent),
    }
}

fn draw_states(
    stations: &[PointPolar],
    cfg: &TrialConfig,
    rng: &mut StreamRng,
) -> Result<Vec<bool>> {
    let p = &cfg.params;
    match cfg.blockage_mode {
        BlockageMode::Probabilistic => Ok(stations
            .iter()
            .map(|s| rng.random::<f64>() < los_probability(s.r, s.theta, p))
            .collect()),
        BlockageMode::Geometric => {
            let mut field = LazyBlockageField::new(p.lambda_c, cfg.marks(), rng.random())?;
            Ok(stations
                .iter()
                .map(|s| !field.is_blocked(Point::ORIGIN, s.to_cartesian()))
                .collect())
        }
    }
}

/// Sample one full trial.
pub fn sample_trial(cfg: &TrialConfig, trial_index: u64) -> Result<TrialRecord> {
    let mut rng = trial_stream(cfg.master_seed, trial_index);
    let mut resamples = 0u32;
    let stations = loop {
        let s = sample_bs_ppp(cfg.params.lambda_b, cfg.region_radius, &mut rng)?;
        if s.len() >= 2 {
            break s;
        }
        resamples += 1;
        log::debug!("trial {trial_index}: {} station(s), resampling", s.len());
    };
    let los = draw_states(&stations, cfg, &mut rng)?;
    let links: Vec<Link> = stations
        .iter()
        .zip(&los)
        .map(|(s, &los)| Link {
            r: s.r,
            theta: s.theta,
            state: link_state(s.r, los, &cfg.params),
            fading: Exp1.sample(&mut rng),
        })
        .collect();
    let gains: Vec<f64> = links.iter().map(|l| l.state.path_loss).collect();
    let argmax_k = argmax(gains.iter().copied());
    let (table1_k, table1_fallback) = match first_local_max(&gains) {
        Some(k) => (k, false),
        None => (argmax_k, true),
    };
    let argmax_fading_k = argmax(links.iter().map(|l| l.state.path_loss * l.fading));
    Ok(TrialRecord {
        links,
        resamples,
        table1_k,
        argmax_k,
        argmax_fading_k,
        table1_fallback,
    })
}

/// SIR sample of one trial under the configured association.
pub fn run_trial(cfg: &TrialConfig, trial_index: u64) -> Result<SirSample> {
    if trial_index >= cfg.trials as u64 {
        return Err(Error::Parameter(format!(
            "trial index {trial_index} out of range for {} trials",
            cfg.trials
        )));
    }
    Ok(sample_trial(cfg, trial_index)?.sample(cfg.association))
}

/// A Monte Carlo estimate with its standard error and 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub half_width: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn proportion(hits: u64, n: u64) -> Self {
        if n == 0 {
            return Self {
                value: f64::NAN,
                std_error: f64::NAN,
                half_width: f64::NAN,
                samples: 0,
            };
        }
        let p = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        Self {
            value: p,
            std_error: se,
            half_width: Z95 * se,
            samples: n,
        }
    }

    pub fn mean(sum: f64, sum_sq: f64, n: u64) -> Self {
        if n == 0 {
            return Self::proportion(0, 0);
        }
        let nf = n as f64;
        let m = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * m * m) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        let se = (var / nf).sqrt();
        Self {
            value: m,
            std_error: se,
            half_width: Z95 * se,
            samples: n,
        }
    }

    /// `|value - target| ≤ n_se · std_error`.
    pub fn agrees_with(&self, target: f64, n_se: f64) -> bool {
        (self.value - target).abs() <= n_se * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub threshold: f64,
    pub overall: Estimate,
    /// Entry `k-1`: coverage among trials served by the `k`-th nearest station.
    pub by_serving_k: Vec<Estimate>,
    /// Entry `k-1`: coverage if the `k`-th nearest station served, whatever
    /// the association rule chose.
    pub kth_nearest: Vec<Estimate>,
    /// As `kth_nearest`, but only stations farther than the server interfere.
    /// This is the event the analytic coverage expression describes.
    pub kth_nearest_outer: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosBin {
    pub r_lo: f64,
    pub r_hi: f64,
    pub links: u64,
    pub los: u64,
    /// Sum over the binned links of their single-link LoS probabilities.
    pub expected: f64,
    /// Sum of `p(1-p)`: the binomial variance of `los` under independence.
    pub variance: f64,
}

impl LosBin {
    pub fn frequency(&self) -> f64 {
        self.los as f64 / self.links as f64
    }

    /// Deviation from the model in standard errors.
    pub fn z_score(&self) -> f64 {
        if self.variance == 0.0 {
            return if self.los as f64 == self.expected {
                0.0
            } else {
                f64::INFINITY
            };
        }
        (self.los as f64 - self.expected) / self.variance.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub trials: u64,
    pub coverage: Vec<CoverageEstimate>,
    /// `log₂(1 + SIR)` under the configured association.
    pub mean_rate: Estimate,
    /// Entry `k-1` for `k ≤ k_track`; the last entry collects larger orders.
    pub association_hist: Vec<f64>,
    pub association_se: Vec<f64>,
    pub los_frequency_by_bin: Vec<LosBin>,
    /// Fraction of trials where the stopping rule and the global maximum disagree.
    pub disagreement_rate: f64,
    /// Fraction of trials where the stopping rule fell back to the global maximum.
    pub fallback_rate: f64,
    pub resamples: u64,
    pub fading_mean: f64,
}

impl SimulationSummary {
    pub fn coverage_at(&self, threshold: f64) -> Option<&CoverageEstimate> {
        self.coverage.iter().find(|c| c.threshold == threshold)
    }
}

#[derive(Debug, Clone)]
struct Tally {
    trials: u64,
    resamples: u64,
    covered: Vec<u64>,
    covered_by_k: Vec<u64>,
    kth_covered: Vec<u64>,
    outer_covered: Vec<u64>,
    kth_present: Vec<u64>,
    served: Vec<u64>,
    rate_sum: f64,
    rate_sq: f64,
    disagreements: u64,
    fallbacks: u64,
    bins: Vec<LosBin>,
    fading_sum: f64,
    fading_n: u64,
}

impl Tally {
    fn new(n_thr: usize, k_track: usize, edges: &[f64]) -> Self {
        Self {
            trials: 0,
            resamples: 0,
            covered: vec![0; n_thr],
            covered_by_k: vec![0; n_thr * k_track],
            kth_covered: vec![0; n_thr * k_track],
            outer_covered: vec![0; n_thr * k_track],
            kth_present: vec![0; k_track],
            served: vec![0; k_track + 1],
            rate_sum: 0.0,
            rate_sq: 0.0,
            disagreements: 0,
            fallbacks: 0,
            bins: edges
                .windows(2)
                .map(|w| LosBin {
                    r_lo: w[0],
                    r_hi: w[1],
                    links: 0,
                    los: 0,
                    expected: 0.0,
                    variance: 0.0,
                })
                .collect(),
            fading_sum: 0.0,
            fading_n: 0,
        }
    }

    fn add(&mut self, rec: &TrialRecord, cfg: &TrialConfig, thresholds: &[f64]) {
        let kt = cfg.k_track;
        self.trials += 1;
        self.resamples += rec.resamples as u64;
        let s = rec.sample(cfg.association);
        let bucket = s.serving_k.min(kt + 1) - 1;
        self.served[bucket] += 1;
        let rate = s.sir_linear.ln_1p() / std::f64::consts::LN_2;
        self.rate_sum += rate;
        self.rate_sq += rate * rate;
        self.disagreements += (rec.table1_k != rec.argmax_k) as u64;
        self.fallbacks += rec.table1_fallback as u64;

        let kth = rec.sirs_of_nearest(kt);
        let outer = rec.outer_sirs_of_nearest(kt);
        let present = kth.len();
        for k in 0..present {
            self.kth_present[k] += 1;
        }
        for (ti, &t) in thresholds.iter().enumerate() {
            if s.sir_linear > t {
                self.covered[ti] += 1;
                if bucket < kt {
                    self.covered_by_k[ti * kt + bucket] += 1;
                }
            }
            for k in 0..present {
                self.kth_covered[ti * kt + k] += (kth[k] > t) as u64;
                self.outer_covered[ti * kt + k] += (outer[k] > t) as u64;
            }
        }

        for l in &rec.links {
            self.fading_sum += l.fading;
            self.fading_n += 1;
            let Some(bin) = self.bins.iter_mut().find(|b| l.r >= b.r_lo && l.r < b.r_hi) else {
                continue;
            };
            let p = los_probability(l.r, l.theta, &cfg.params);
            bin.links += 1;
            bin.los += (l.state.kind == LinkKind::Los) as u64;
            bin.expected += p;
            bin.variance += p * (1.0 - p);
        }
    }

    fn merge(&mut self, o: &Tally) {
        self.trials += o.trials;
        self.resamples += o.resamples;
        let add = |a: &mut Vec<u64>, b: &Vec<u64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.covered, &o.covered);
        add(&mut self.covered_by_k, &o.covered_by_k);
        add(&mut self.kth_covered, &o.kth_covered);
        add(&mut self.outer_covered, &o.outer_covered);
        add(&mut self.kth_present, &o.kth_present);
        add(&mut self.served, &o.served);
        self.rate_sum += o.rate_sum;
        self.rate_sq += o.rate_sq;
        self.disagreements += o.disagreements;
        self.fallbacks += o.fallbacks;
        for (a, b) in self.bins.iter_mut().zip(&o.bins) {
            a.links += b.links;
            a.los += b.los;
            a.expected += b.expected;
            a.variance += b.variance;
        }
        self.fading_sum += o.fading_sum;
        self.fading_n += o.fading_n;
    }

    fn finish(self, cfg: &TrialConfig, thresholds: &[f64]) -> SimulationSummary {
        let kt = cfg.k_track;
        let n = self.trials;
        let coverage = thresholds
            .iter()
            .enumerate()
            .map(|(ti, &t)| CoverageEstimate {
                threshold: t,
                overall: Estimate::proportion(self.covered[ti], n),
                by_serving_k: (0..kt)
                    .map(|k| Estimate::proportion(self.covered_by_k[ti * kt + k], self.served[k]))
                    .collect(),
                kth_nearest: (0..kt)
                    .map(|k| {
                        Estimate::proportion(self.kth_covered[ti * kt + k], self.kth_present[k])
                    })
                    .collect(),
                kth_nearest_outer: (0..kt)
                    .map(|k| {
                        Estimate::proportion(self.outer_covered[ti * kt + k], self.kth_present[k])
                    })
                    .collect(),
            })
            .collect();
        let assoc: Vec<Estimate> = self
            .served
            .iter()
            .map(|&c| Estimate::proportion(c, n))
            .collect();
        SimulationSummary {
            trials: n,
            coverage,
            mean_rate: Estimate::mean(self.rate_sum, self.rate_sq, n),
            association_hist: assoc.iter().map(|e| e.value).collect(),
            association_se: assoc.iter().map(|e| e.std_error).collect(),
            los_frequency_by_bin: self.bins,
            disagreement_rate: self.disagreements as f64 / n as f64,
            fallback_rate: self.fallbacks as f64 / n as f64,
            resamples: self.resamples,
            fading_mean: self.fading_sum / self.fading_n as f64,
        }
    }
}

/// Run `f` over `0..trials` in fixed chunks on the current rayon pool and
/// return the per-chunk results in chunk order.
pub fn map_chunks<T, F>(trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> T + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = (c * CHUNK) as u64;
            let hi = ((c + 1) * CHUNK).min(trials) as u64;
            f(lo..hi)
        })
        .collect()
}

/// Run every trial once and aggregate coverage at each threshold, rate,
/// association, LoS and diagnostic statistics.
pub fn simulate(cfg: &TrialConfig, thresholds: &[f64]) -> Result<SimulationSummary> {
    cfg.validate()?;
    if thresholds.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::Parameter("thresholds must be >= 0".into()));
    }
    let parts = map_chunks(cfg.trials, |range| -> Result<Tally> {
        let mut t = Tally::new(thresholds.len(), cfg.k_track, &cfg.los_bin_edges);
        for i in range {
            t.add(&sample_trial(cfg, i)?, cfg, thresholds);
        }
        Ok(t)
    });
    let mut total = Tally::new(thresholds.len(), cfg.k_track, &cfg.los_bin_edges);
    for p in parts {
        total.merge(&p?);
    }
    if total.resamples > 0 {
        log::info!(
            "{} realization(s) with fewer than two stations were redrawn over {} trials",
            total.resamples,
            total.trials
        );
    }
    Ok(total.finish(cfg, thresholds))
}

pub fn estimate_coverage(cfg: &TrialConfig, threshold: f64) -> Result<CoverageEstimate> {
    Ok(simulate(cfg, &[threshold])?.coverage.remove(0))
}

pub fn estimate_rate(cfg: &TrialConfig) -> Result<Estimate> {
    Ok(simulate(cfg, &[])?.mean_rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationEstimate {
    pub frequencies: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub disagreement_rate: f64,
}

pub fn estimate_association(cfg: &TrialConfig) -> Result<AssociationEstimate> {
    let s = simulate(cfg, &[])?;
    Ok(AssociationEstimate {
        frequencies: s.association_hist,
        std_errors: s.association_se,
        disagreement_rate: s.disagreement_rate,
    })
}

/// `E[exp(-s I)]` where `I` sums faded path loss over stations beyond `r_k`,
/// each LoS independently with its single-link probability.
pub fn estimate_laplace(
    params: &NetworkParams,
    r_k: f64,
    s: f64,
    trials: usize,
    seed: u64,
    region_radius: f64,
) -> Result<Estimate> {
    params.validate()?;
    if !(r_k >= 0.0 && region_radius > r_k && s >= 0.0 && trials > 0) {
        return Err(Error::Parameter(format!(
            "need 0 <= r_k < region radius, s >= 0 and trials >= 1 (r_k={r_k}, R={region_radius}, s={s}, trials={trials})"
        )));
    }
    let area = PI * (region_radius * region_radius - r_k * r_k);
    let parts = map_chunks(trials, |range| {
        let (mut sum, mut sq) = (0.0, 0.0);
        let n = range.end - range.start;
        for i in range {
            let mut rng = trial_stream(seed, i);
            let count = poisson_count(params.lambda_b * area, &mut rng);
            let mut interference = 0.0;
            for _ in 0..count {
                let r = (r_k * r_k
                    + rng.random::<f64>() * (region_radius * region_radius - r_k * r_k))
                    .sqrt();
                let theta = rng.random::<f64>() * 2.0 * PI;
                let los = rng.random::<f64>() < los_probability(r, theta, params);
                let h: f64 = Exp1.sample(&mut rng);
                interference += h * link_state(r, los, params).path_loss;
            }
            let v = (-s * interference).exp();
            sum += v;
            sq += v * v;
        }
        (sum, sq, n)
    });
    let (mut sum, mut sq, mut n) = (0.0, 0.0, 0u64);
    for (a, b, c) in parts {
        sum += a;
        sq += b;
        n += c;
    }
    Ok(Estimate::mean(sum, sq, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkLosEstimate {
    pub r: f64,
    pub theta: f64,
    pub los: Estimate,
    pub blockage_count: Estimate,
    /// Model LoS probability and mean blockage count for this link.
    pub los_model: f64,
    pub count_model: f64,
}

/// LoS frequency and crossing-count mean of one link over independent
/// blockage-field draws.
pub fn estimate_link_los(
    params: &NetworkParams,
    orientation: Orientation,
    r: f64,
    theta: f64,
    draws: usize,
    seed: u64,
) -> Result<LinkLosEstimate> {
    params.validate()?;
    if !params.lambda_c.is_finite() {
        return Err(Error::Parameter(
            "cannot sample an infinite blockage intensity".into(),
        ));
    }
    if !(r > 0.0 && r.is_finite() && draws > 0) {
        return Err(Error::Parameter(format!(
            "need r > 0 and draws >= 1 (r={r}, draws={draws})"
        )));
    }
    let marks = BlockageMarks {
        length: params.l,
        width: params.w,
        orientation,
    };
    let link_seed = derive_seed(seed, &[r.to_bits(), theta.to_bits()]);
    let parts = map_chunks(draws, |range| -> Result<(u64, f64, f64, u64)> {
        let (mut los, mut sum, mut sq, mut n) = (0u64, 0.0, 0.0, 0u64);
        for i in range {
            let mut rng = trial_stream(link_seed, i);
            let rects = sample_blockages_near_link(params.lambda_c, r, theta, marks, &mut rng)?;
            let c = count_blocking(Point::ORIGIN, Point::new(r, 0.0), &rects)? as f64;
            los += (c == 0.0) as u64;
            sum += c;
            sq += c * c;
            n += 1;
        }
        Ok((los, sum, sq, n))
    });
    let (mut los, mut sum, mut sq, mut n) = (0u64, 0.0, 0.0, 0u64);
    for p in parts {
        let (a, b, c, d) = p?;
        los += a;
        sum += b;
        sq += c;
        n += d;
    }
    Ok(LinkLosEstimate {
        r,
        theta,
        los: Estimate::proportion(los, n),
        blockage_count: Estimate::mean(sum, sq, n),
        los_model: los_probability(r, theta, params),
        count_model: expected_blockage_count(r, theta, params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopping_rule_examples() {
        assert_eq!(
            associate_table1(&[(10.0, 3.0), (20.0, 3.0), (30.0, 3.0)]),
            1
        );
        assert_eq!(associate_table1(&[(100.0, 5.0), (110.0, 2.0)]), 2);
        assert_eq!(
            associate_table1(&[(100.0, 2.0), (110.0, 5.0), (120.0, 5.0)]),
            1
        );
    }

    #[test]
    fn global_maximum_examples() {
        assert_eq!(
            associate_argmax(&[(10.0, 3.0), (20.0, 3.0), (30.0, 3.0)], None),
            1
        );
        assert_eq!(associate_argmax(&[(100.0, 5.0), (110.0, 2.0)], None), 2);
        assert_eq!(
            associate_argmax(&[(100.0, 2.0), (110.0, 5.0), (120.0, 5.0)], None),
            1
        );
        // Fading can overturn the distance order.
        assert_eq!(
            associate_argmax(&[(10.0, 3.0), (11.0, 3.0)], Some(&[0.1, 1.0])),
            2
        );
    }

    #[test]
    fn rule_can_stop_before_the_global_maximum() {
        // NLoS, then a weaker NLoS, then a strong LoS further out.
        let links = [(100.0, 5.0), (101.0, 5.0), (120.0, 2.0)];
        assert_eq!(associate_table1(&links), 1);
        assert_eq!(associate_argmax(&links, None), 3);
    }

    #[test]
    fn estimates() {
        let e = Estimate::proportion(25, 100);
        assert_eq!(e.value, 0.25);
        assert!((e.std_error - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        let m = Estimate::mean(10.0, 10.0, 10);
        assert_eq!((m.value, m.std_error), (1.0, 0.0));
    }

    #[test]
    fn default_radius_at_defaults() {
        let p = NetworkParams::default();
        // 800 m is the nearest-neighbour scale 1/√(πλ_B).
        let nlos = |k: f64| 800.0 * k.sqrt() * (2000.0 * k / 3.0).powf(1.0 / 3.0);
        assert!((default_region_radius(&p, 1) - nlos(1.0)).abs() < 1e-6);
        assert!((default_region_radius(&p, 8) - nlos(8.0)).abs() < 1e-6);
        let open = NetworkParams { lambda_c: 0.0, ..p };
        assert!((default_region_radius(&open, 1) - 800.0 * 128.0).abs() < 1e-6);
    }

    #[test]
    fn parsing() {
        assert_eq!(
            "geometric".parse::<BlockageMode>().unwrap(),
            BlockageMode::Geometric
        );
        assert_eq!(
            "argmax".parse::<Association>().unwrap(),
            Association::ArgmaxNoFading
        );
        assert!("nearest".parse::<Association>().is_err());
        for a in [
            Association::Table1,
            Association::ArgmaxNoFading,
            Association::ArgmaxWithFading,
        ] {
            assert_eq!(a.to_string().parse::<Association>().unwrap(), a);
        }
    }

    #[test]
    fn trial_index_is_checked() {
        let cfg = TrialConfig::new(NetworkParams::default(), 3, 1);
        assert!(run_trial(&cfg, 2).is_ok());
        assert!(run_trial(&cfg, 3).is_err());
    }
}
