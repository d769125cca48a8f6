//! Figure sweeps, single-point evaluators and the cross-validation report.
//!
//! Every experiment returns a [`Table`] whose rows come out in grid order.
//! Grid cells run on the rayon pool but are collected by index, and each
//! Monte Carlo run draws from streams keyed by the master seed and the cell,
//! so the CSV bytes depend only on the config.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::analysis::{Evaluator, LaplaceMode, QuadratureFlags, DEFAULT_ASSOCIATION_SAMPLES};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geometry::Orientation;
use crate::pathloss::{
    bessel_i0, db_to_linear, linear_to_db, q_bessel_bound, q_integral_result, NetworkParams,
};
use crate::rng::{derive_seed, seeded};
use crate::simulate::{
    default_region_radius, estimate_laplace, estimate_link_los, simulate, BlockageMode, Estimate,
    TrialConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Serving orders carried by the rate and association sums.
pub const K_MAX: usize = 5;
/// Trials per Monte Carlo check in [`run_validate`] unless the config sets `trials`.
pub const VALIDATE_TRIALS: usize = 100_000;

/// Seed labels, one per experiment, so runs never share streams.
mod label {
    pub const FIG2: u64 = 2;
    pub const FIG3: u64 = 3;
    pub const FIG5: u64 = 5;
    pub const POINT: u64 = 10;
    pub const VALIDATE: u64 = 20;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Num(f64),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            // Debug is the shortest round-trip form and switches to
            // exponent notation for very small or large magnitudes.
            Value::Num(x) => write!(f, "{x:?}"),
            Value::Text(s) => f.write_str(&s.replace([',', '\n'], ";")),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<usize> for Value {
    fn from(i: usize) -> Self {
        Value::Int(i as i64)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric cell; NaN for text cells.
    pub fn num(&self, row: usize, column: &str) -> f64 {
        let c = self
            .column(column)
            .unwrap_or_else(|| panic!("no column {column}"));
        match &self.rows[row][c] {
            Value::Num(x) => *x,
            Value::Int(i) => *i as f64,
            Value::Text(_) => f64::NAN,
        }
    }

    pub fn text(&self, row: usize, column: &str) -> String {
        let c = self
            .column(column)
            .unwrap_or_else(|| panic!("no column {column}"));
        self.rows[row][c].to_string()
    }

    pub fn to_csv(&self, meta: &Metadata) -> String {
        let mut out = meta.header();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Value::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// The `#` block heading every CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub command: String,
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn for_config(command: &str, cfg: &ExperimentConfig) -> Self {
        let params = serde_json::to_string(&cfg.params).expect("params serialize");
        Self {
            command: command.to_string(),
            entries: vec![
                ("version".into(), VERSION.into()),
                ("command".into(), command.into()),
                ("seed".into(), cfg.seed.to_string()),
                ("trials".into(), cfg.trials.to_string()),
                ("mode".into(), cfg.mode.to_string()),
                ("blockage".into(), cfg.blockage_mode.to_string()),
                ("assoc".into(), cfg.association.to_string()),
                ("config_sha256".into(), cfg.digest()),
                ("params".into(), params),
            ],
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    fn header(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("# {k}: {v}\n"))
            .collect()
    }
}

/// `n` points from `lo` to `hi` (inclusive), evenly spaced in log.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

fn status(flags: &QuadratureFlags) -> String {
    if flags.converged {
        "ok".into()
    } else {
        format!(
            "flagged: {} inner failures; error estimate {:e}",
            flags.inner_failures, flags.error_estimate
        )
    }
}

fn rejected(e: &Error) -> String {
    format!("rejected: {e}")
}

fn trial_config(cfg: &ExperimentConfig, params: NetworkParams, labels: &[u64]) -> TrialConfig {
    let mut tc = TrialConfig::new(params, cfg.trials, derive_seed(cfg.seed, labels));
    tc.blockage_mode = cfg.blockage_mode;
    tc.association = cfg.association;
    tc
}

fn serving_orders(cfg: &ExperimentConfig) -> Vec<usize> {
    cfg.axis("k", &[1.0, 2.0, 3.0, 4.0, 5.0])
        .iter()
        .map(|&k| k as usize)
        .collect()
}

/// Threshold axis as `(dB, linear)` pairs, keeping dB values exactly as given.
fn threshold_axis(cfg: &ExperimentConfig, default_db: &[f64]) -> Vec<(f64, f64)> {
    if let Some(db) = cfg.file.sweep.get("sir_threshold_db") {
        db.iter().map(|&d| (d, db_to_linear(d))).collect()
    } else if let Some(lin) = cfg.file.sweep.get("sir_threshold") {
        lin.iter().map(|&t| (linear_to_db(t), t)).collect()
    } else {
        default_db.iter().map(|&d| (d, db_to_linear(d))).collect()
    }
}

/// Coverage vs serving order and threshold.
///
/// `p_mc` is the simulated event the analytic expression describes: the
/// `k`-th nearest station serves and only farther stations interfere.
pub fn run_fig2(cfg: &ExperimentConfig) -> Result<Table> {
    let ks = serving_orders(cfg);
    let default_db: Vec<f64> = (0..9).map(|i| -10.0 + 2.5 * i as f64).collect();
    let thresholds = threshold_axis(cfg, &default_db);
    let ev = Evaluator::new(cfg.params, cfg.mode)?;
    let cells: Vec<(usize, usize)> = ks
        .iter()
        .flat_map(|&k| (0..thresholds.len()).map(move |ti| (k, ti)))
        .collect();
    let analytic: Vec<_> = cells
        .par_iter()
        .map(|&(k, ti)| ev.coverage(k, thresholds[ti].1))
        .collect();

    let mut tc = trial_config(cfg, cfg.params, &[label::FIG2]);
    tc.k_track = ks.iter().copied().max().unwrap_or(1);
    let lin: Vec<f64> = thresholds.iter().map(|t| t.1).collect();
    let mc = simulate(&tc, &lin)?;

    let mut table = Table::new(&["k", "T_dB", "p_analytic", "p_mc", "mc_halfwidth", "status"]);
    for (&(k, ti), a) in cells.iter().zip(analytic) {
        let e = mc.coverage[ti].kth_nearest_outer[k - 1];
        let (p, st) = match a {
            Ok(c) => (c.probability, status(&c.quadrature)),
            Err(err) => (f64::NAN, rejected(&err)),
        };
        table.push(vec![
            k.into(),
            thresholds[ti].0.into(),
            p.into(),
            e.value.into(),
            e.half_width.into(),
            st.into(),
        ]);
    }
    Ok(table)
}

/// Coverage vs serving order for combinations of station and blockage intensity.
pub fn run_fig3(cfg: &ExperimentConfig) -> Result<Table> {
    let ks = serving_orders(cfg);
    let lbs = cfg.axis(
        "lambda_b",
        &[1.0 / (800.0 * 800.0 * PI), 1.0 / (200.0 * 200.0 * PI)],
    );
    let lcs = cfg.axis("lambda_c", &[0.0002, 0.002]);
    let t = cfg.params.sir_threshold;
    let combos: Vec<NetworkParams> = lbs
        .iter()
        .flat_map(|&lb| lcs.iter().map(move |&lc| (lb, lc)))
        .map(|(lb, lc)| NetworkParams {
            lambda_b: lb,
            lambda_c: lc,
            ..cfg.params
        })
        .collect();
    let rows: Vec<Result<Vec<Vec<Value>>>> = combos
        .par_iter()
        .enumerate()
        .map(|(ci, &p)| {
            let mut tc = trial_config(cfg, p, &[label::FIG3, ci as u64]);
            tc.k_track = ks.iter().copied().max().unwrap_or(1);
            let mc = simulate(&tc, &[t])?;
            let ev = Evaluator::new(p, cfg.mode);
            Ok(ks
                .iter()
                .map(|&k| {
                    let e = mc.coverage[0].kth_nearest_outer[k - 1];
                    let (v, st) = match ev
                        .as_ref()
                        .map_err(Clone::clone)
                        .and_then(|ev| ev.coverage(k, t))
                    {
                        Ok(c) => (c.probability, status(&c.quadrature)),
                        Err(err) => (f64::NAN, rejected(&err)),
                    };
                    vec![
                        p.lambda_b.into(),
                        p.lambda_c.into(),
                        k.into(),
                        v.into(),
                        e.value.into(),
                        e.half_width.into(),
                        st.into(),
                    ]
                })
                .collect())
        })
        .collect();
    let mut table = Table::new(&[
        "lambda_b",
        "lambda_c",
        "k",
        "p_analytic",
        "p_mc",
        "mc_halfwidth",
        "status",
    ]);
    for r in rows {
        for row in r? {
            table.push(row);
        }
    }
    Ok(table)
}

/// Azimuth-averaged LoS probability `Q(r)/2π` against distance.
pub fn run_fig4(cfg: &ExperimentConfig) -> Result<Table> {
    let rs = cfg.axis("r", &(0..=100).map(|i| 10.0 * i as f64).collect::<Vec<_>>());
    let lcs = cfg.axis("lambda_c", &[0.0005, 0.001, 0.002]);
    let mut table = Table::new(&["lambda_c", "r", "p_los", "status"]);
    for &lc in &lcs {
        let p = NetworkParams {
            lambda_c: lc,
            ..cfg.params
        };
        for &r in &rs {
            let q = q_integral_result(r, &p);
            let st = if q.converged {
                "ok".to_string()
            } else {
                format!("flagged: error estimate {:e}", q.error_estimate)
            };
            table.push(vec![
                lc.into(),
                r.into(),
                (q.value / (2.0 * PI)).into(),
                st.into(),
            ]);
        }
    }
    Ok(table)
}

/// Average achievable rate over a log grid of station and blockage intensities.
pub fn run_fig5(cfg: &ExperimentConfig) -> Result<Table> {
    let lbs = cfg.axis(
        "lambda_b",
        &log_space(1.0 / (800.0 * 800.0 * PI), 0.0012, 8),
    );
    let lcs = cfg.axis("lambda_c", &log_space(0.0001, 0.002, 8));
    let cells: Vec<(usize, NetworkParams)> = lbs
        .iter()
        .flat_map(|&lb| lcs.iter().map(move |&lc| (lb, lc)))
        .map(|(lb, lc)| NetworkParams {
            lambda_b: lb,
            lambda_c: lc,
            ..cfg.params
        })
        .enumerate()
        .collect();
    let rows: Vec<Result<Vec<Value>>> = cells
        .par_iter()
        .map(|&(i, p)| {
            let seed = derive_seed(cfg.seed, &[label::FIG5, i as u64]);
            let analytic = Evaluator::new(p, cfg.mode)
                .and_then(|ev| ev.average_rate(K_MAX, DEFAULT_ASSOCIATION_SAMPLES, seed));
            let (rate, tail, st, run_mc) = match &analytic {
                Ok(a) => {
                    let st = if !a.converged {
                        "flagged: rate quadrature".to_string()
                    } else if a.tail_warning {
                        format!(
                            "tail-warning: association mass {:e} beyond k={K_MAX}",
                            a.association.tail_mass
                        )
                    } else {
                        "ok".to_string()
                    };
                    (a.rate, a.association.tail_mass, st, true)
                }
                // A divergent model has no finite-region counterpart worth reporting.
                Err(e @ Error::Divergent(_)) => (f64::NAN, f64::NAN, rejected(e), false),
                Err(e) => (f64::NAN, f64::NAN, rejected(e), true),
            };
            let mc = if run_mc {
                simulate(&trial_config(cfg, p, &[label::FIG5, i as u64]), &[])?.mean_rate
            } else {
                Estimate::proportion(0, 0)
            };
            Ok(vec![
                p.lambda_b.into(),
                p.lambda_c.into(),
                rate.into(),
                mc.value.into(),
                mc.half_width.into(),
                tail.into(),
                st.into(),
            ])
        })
        .collect();
    let mut table = Table::new(&[
        "lambda_b",
        "lambda_c",
        "rate_analytic",
        "rate_mc",
        "mc_halfwidth",
        "assoc_tail",
        "status",
    ]);
    for r in rows {
        table.push(r?);
    }
    Ok(table)
}

/// Coverage at one serving order and threshold.
pub fn run_coverage(cfg: &ExperimentConfig, k: usize, threshold: f64) -> Result<Table> {
    let ev = Evaluator::new(cfg.params, cfg.mode)?;
    let a = ev.coverage(k, threshold)?;
    let mut tc = trial_config(cfg, cfg.params, &[label::POINT, 1]);
    tc.k_track = k;
    let mc = simulate(&tc, &[threshold])?;
    let c = &mc.coverage[0];
    let mut table = Table::new(&[
        "k",
        "T_dB",
        "p_analytic",
        "p_mc",
        "mc_halfwidth",
        "p_mc_served",
        "served_halfwidth",
        "status",
    ]);
    let (formula, served) = (c.kth_nearest_outer[k - 1], c.by_serving_k[k - 1]);
    table.push(vec![
        k.into(),
        linear_to_db(threshold).into(),
        a.probability.into(),
        formula.value.into(),
        formula.half_width.into(),
        served.value.into(),
        served.half_width.into(),
        status(&a.quadrature).into(),
    ]);
    Ok(table)
}

/// Association-averaged rate at one parameter point.
pub fn run_rate(cfg: &ExperimentConfig) -> Result<Table> {
    let ev = Evaluator::new(cfg.params, cfg.mode)?;
    let a = ev.average_rate(
        K_MAX,
        DEFAULT_ASSOCIATION_SAMPLES,
        derive_seed(cfg.seed, &[label::POINT, 2]),
    )?;
    let mc = simulate(&trial_config(cfg, cfg.params, &[label::POINT, 2]), &[])?;
    let mut table = Table::new(&["k", "p_ass", "rate_k", "status"]);
    for (i, (p, r)) in a.association.probs.iter().zip(&a.conditional).enumerate() {
        let (rate, st) = match r {
            Some(r) => (r.rate, status(&r.quadrature)),
            None => (f64::NAN, "skipped: zero association mass".to_string()),
        };
        table.push(vec![
            Value::from(i + 1),
            (*p).into(),
            rate.into(),
            st.into(),
        ]);
    }
    let total_status = if a.tail_warning { "tail-warning" } else { "ok" };
    table.push(vec![
        "average".into(),
        a.association.total().into(),
        a.rate.into(),
        total_status.into(),
    ]);
    table.push(vec![
        "mc".into(),
        1.0.into(),
        mc.mean_rate.value.into(),
        format!("halfwidth {:?}", mc.mean_rate.half_width).into(),
    ]);
    Ok(table)
}

/// Association distribution, analytic and simulated.
pub fn run_assoc(cfg: &ExperimentConfig) -> Result<Table> {
    let ev = Evaluator::new(cfg.params, cfg.mode)?;
    let a = ev.association(
        K_MAX,
        DEFAULT_ASSOCIATION_SAMPLES,
        derive_seed(cfg.seed, &[label::POINT, 3]),
    )?;
    let mut tc = trial_config(cfg, cfg.params, &[label::POINT, 3]);
    tc.k_track = K_MAX;
    let mc = simulate(&tc, &[])?;
    let mut table = Table::new(&["k", "p_analytic", "analytic_se", "p_mc", "mc_se"]);
    for k in 0..K_MAX {
        table.push(vec![
            Value::from(k + 1),
            a.probs[k].into(),
            a.std_errors[k].into(),
            mc.association_hist[k].into(),
            mc.association_se[k].into(),
        ]);
    }
    table.push(vec![
        "tail".into(),
        a.tail_mass.into(),
        a.tail_std_error.into(),
        mc.association_hist[K_MAX].into(),
        mc.association_se[K_MAX].into(),
    ]);
    table.push(vec![
        "disagreement".into(),
        f64::NAN.into(),
        f64::NAN.into(),
        mc.disagreement_rate.into(),
        f64::NAN.into(),
    ]);
    Ok(table)
}

/// LoS probability of one link, analytic and from sampled blockage fields.
pub fn run_los(cfg: &ExperimentConfig, r: f64, theta: f64) -> Result<Table> {
    let e = estimate_link_los(
        &cfg.params,
        Orientation::Fixed(cfg.params.phi),
        r,
        theta,
        cfg.trials,
        derive_seed(cfg.seed, &[label::POINT, 4]),
    )?;
    let mut table = Table::new(&[
        "r",
        "theta",
        "p_los",
        "p_los_mc",
        "mc_halfwidth",
        "mean_blockages",
        "mean_blockages_mc",
        "count_halfwidth",
        "p_los_azimuth_avg",
    ]);
    table.push(vec![
        r.into(),
        theta.into(),
        e.los_model.into(),
        e.los.value.into(),
        e.los.half_width.into(),
        e.count_model.into(),
        e.blockage_count.value.into(),
        e.blockage_count.half_width.into(),
        (q_integral_result(r, &cfg.params).value / (2.0 * PI)).into(),
    ]);
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    /// Reported for context; does not gate the suite.
    Info,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Info => "INFO",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub outcome: Outcome,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn gate(&mut self, name: &str, measured: f64, tolerance: f64, detail: String) {
        let outcome = if measured <= tolerance {
            Outcome::Pass
        } else {
            Outcome::Fail
        };
        self.push(name, outcome, measured, tolerance, detail);
    }

    fn info(&mut self, name: &str, measured: f64, detail: String) {
        self.push(name, Outcome::Info, measured, f64::NAN, detail);
    }

    fn push(
        &mut self,
        name: &str,
        outcome: Outcome,
        measured: f64,
        tolerance: f64,
        detail: String,
    ) {
        log::info!("{outcome} {name}: {measured:e} (tolerance {tolerance:e}) {detail}");
        self.checks.push(Check {
            name: name.into(),
            outcome,
            measured,
            tolerance,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.outcome != Outcome::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["check", "result", "measured", "tolerance", "detail"]);
        for c in &self.checks {
            t.push(vec![
                c.name.as_str().into(),
                c.outcome.to_string().into(),
                c.measured.into(),
                c.tolerance.into(),
                c.detail.as_str().into(),
            ]);
        }
        t
    }
}

/// `(x - target) / se`, treating a zero standard error as exact agreement
/// only when the values coincide.
fn z_score(x: f64, target: f64, se: f64) -> f64 {
    let d = (x - target).abs();
    if d == 0.0 {
        0.0
    } else if se > 0.0 {
        d / se
    } else {
        f64::INFINITY
    }
}

/// Power series of `I₀`, summed until the terms stop mattering.
fn i0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > 1e-18 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Analytic-vs-simulation cross-validation at the configured parameters.
///
/// Monte Carlo checks use `trials` from the config file, or
/// [`VALIDATE_TRIALS`]. The configured Laplace mode is ignored: the
/// suite validates the exact expressions and reports the bound alongside.
pub fn run_validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let n = cfg.file.trials.unwrap_or(VALIDATE_TRIALS);
    let seed = |labels: &[u64]| derive_seed(cfg.seed, &[&[label::VALIDATE], labels].concat());
    let p = cfg.params;
    let t = p.sir_threshold;
    let ev = Evaluator::new(p, LaplaceMode::ExactAngular)?;
    let mut report = ValidationReport::default();

    // Single-link blockage law against sampled rectangle fields.
    let mut rng = seeded(seed(&[1]));
    let links: Vec<(f64, f64)> = (0..20)
        .map(|_| {
            (
                10.0 + 990.0 * rng.random::<f64>(),
                2.0 * PI * rng.random::<f64>(),
            )
        })
        .collect();
    let estimates: Vec<_> = links
        .par_iter()
        .map(|&(r, th)| estimate_link_los(&p, Orientation::Fixed(p.phi), r, th, n, seed(&[1, 1])))
        .collect::<Result<_>>()?;
    let (mut z_los, mut z_count) = (0.0f64, 0.0f64);
    for e in &estimates {
        let nf = e.los.samples as f64;
        z_los = z_los.max(z_score(
            e.los.value,
            e.los_model,
            (e.los_model * (1.0 - e.los_model) / nf).sqrt(),
        ));
        z_count = z_count.max(z_score(
            e.blockage_count.value,
            e.count_model,
            (e.count_model / nf).sqrt(),
        ));
    }
    report.gate(
        "los-frequency",
        z_los,
        3.0,
        format!("max |z| over 20 links; {n} field draws each"),
    );
    report.gate(
        "blockage-count-mean",
        z_count,
        3.0,
        format!("max |z| over 20 links; {n} field draws each"),
    );

    // Angular integral against its Bessel bound and the I₀ series.
    let worst_excess = [1.0, 10.0, 100.0, 1000.0]
        .iter()
        .map(|&r| q_integral_result(r, &p).value - q_bessel_bound(r, &p))
        .fold(f64::NEG_INFINITY, f64::max);
    report.gate(
        "q-below-bessel-bound",
        worst_excess.max(0.0),
        0.0,
        format!("max Q - bound = {worst_excess:e}"),
    );
    let at_zero = (q_integral_result(0.0, &p).value - q_bessel_bound(0.0, &p)).abs()
        / q_bessel_bound(0.0, &p);
    report.gate(
        "q-equals-bound-at-origin",
        at_zero,
        1e-12,
        "relative gap at r = 0".into(),
    );
    let i0_err = [0.0, 1.0, 2.0]
        .iter()
        .map(|&x| (bessel_i0(x) - i0_series(x)).abs())
        .fold(0.0, f64::max);
    report.gate("bessel-i0-series", i0_err, 1e-9, "x in {0, 1, 2}".into());

    // Interference Laplace transform against simulated shot noise.
    let radius = default_region_radius(&p, 1);
    let bound = Evaluator::new(p, LaplaceMode::BesselBound)?;
    let mut z_laplace = 0.0f64;
    let mut worst_order = f64::INFINITY;
    let mut detail = Vec::new();
    for (i, &(rk, alpha)) in [
        (200.0, p.alpha_los),
        (200.0, p.alpha_nlos),
        (400.0, p.alpha_los),
        (400.0, p.alpha_nlos),
    ]
    .iter()
    .enumerate()
    {
        let s = t * f64::powf(rk, alpha);
        let exact = ev.laplace(s, rk)?;
        let mc = estimate_laplace(&p, rk, s, n, seed(&[2, i as u64]), radius)?;
        // e^{-sI} lies in [0, 1], so its variance is at most μ(1-μ): a floor
        // for the sample error when the deviation from one is a rare event.
        let floor = (exact.value * (1.0 - exact.value) / mc.samples as f64).sqrt();
        z_laplace = z_laplace.max(z_score(mc.value, exact.value, mc.std_error.max(floor)));
        let b = bound.laplace(s, rk)?;
        worst_order = worst_order.min(b.value - exact.value);
        detail.push(format!(
            "r_k={rk} s={s:e}: exact {:e} mc {:e} bound {:e}",
            exact.value, mc.value, b.value
        ));
    }
    report.gate("laplace-vs-mc", z_laplace, 3.0, detail.join("; "));
    report.info(
        "laplace-bound-minus-exact",
        worst_order,
        "minimum over the same grid; the bound-mode exponent diverges for alpha_los = 2 (see README)".into(),
    );

    // Closed form when every link is NLoS with α_N = 4: 1/(1 + √T (π/2 - atan(1/√T))).
    let nlos = NetworkParams {
        lambda_c: 1e3,
        alpha_nlos: 4.0,
        ..p
    };
    let closed = 1.0 / (1.0 + (PI / 2.0 - 1.0f64.atan()));
    let got = Evaluator::new(nlos, LaplaceMode::ExactAngular)?
        .coverage(1, 1.0)?
        .probability;
    report.gate(
        "all-nlos-closed-form",
        (got - closed).abs(),
        0.01,
        format!("analytic {got} vs 1/(1+pi/4) = {closed}"),
    );

    // End-to-end simulation at the configured point.
    let mut tc = TrialConfig::new(p, n, seed(&[3]));
    tc.k_track = K_MAX;
    let sim = simulate(&tc, &[t])?;
    let assoc = ev.association(K_MAX, DEFAULT_ASSOCIATION_SAMPLES, seed(&[4]))?;
    let mut mixture = 0.0;
    for (i, &pk) in assoc.probs.iter().enumerate() {
        if pk > 0.0 {
            mixture += pk * ev.coverage(i + 1, t)?.probability;
        }
    }
    let overall = sim.coverage[0].overall;
    report.gate(
        "coverage-mixture-vs-mc",
        (mixture - overall.value).abs(),
        0.02,
        format!(
            "analytic {mixture} vs simulated {} +- {}",
            overall.value, overall.half_width
        ),
    );
    let mut z_cov = 0.0f64;
    let mut detail = Vec::new();
    for k in 1..=3 {
        let a = ev.coverage(k, t)?.probability;
        let e = sim.coverage[0].kth_nearest_outer[k - 1];
        z_cov = z_cov.max(z_score(
            e.value,
            a,
            (a * (1.0 - a) / e.samples as f64).sqrt(),
        ));
        detail.push(format!("k={k}: {a} vs {}", e.value));
    }
    report.gate("coverage-kth-nearest-vs-mc", z_cov, 3.0, detail.join("; "));
    let served = sim.coverage[0].by_serving_k[0];
    report.info(
        "coverage-served-minus-formula",
        served.value - ev.coverage(1, t)?.probability,
        "simulated coverage given the rule picked the nearest station, minus the unconditioned expression".into(),
    );

    // Density.
    let mut fd_err = 0.0f64;
    for tt in [0.1, 10f64.powf(-0.5), 1.0, 10.0] {
        let d = ev.sir_pdf(1, tt)?.density;
        let fd = ev.sir_pdf_finite_difference(1, tt, 1e-3)?;
        fd_err = fd_err.max((d - fd).abs());
    }
    report.gate(
        "density-vs-finite-difference",
        fd_err,
        1e-4,
        "k=1; t in {0.1, 10^-0.5, 1, 10}".into(),
    );
    let (mass, _) = ev.sir_pdf_mass(1)?;
    report.gate(
        "density-mass",
        (mass - 1.0).abs(),
        1e-3,
        format!("integral of the density = {mass}"),
    );

    // Rate.
    let r_ccdf = ev.conditional_rate(1)?.rate;
    let r_pdf = ev.conditional_rate_from_density(1)?.rate;
    report.gate(
        "rate-dual-path",
        ((r_ccdf - r_pdf) / r_ccdf).abs(),
        0.01,
        format!("k=1: complementary-distribution path {r_ccdf} vs density path {r_pdf}"),
    );
    let avg = ev.average_rate(K_MAX, DEFAULT_ASSOCIATION_SAMPLES, seed(&[4]))?;
    report.gate(
        "rate-vs-mc",
        ((avg.rate - sim.mean_rate.value) / avg.rate).abs(),
        0.03,
        format!(
            "analytic {} vs simulated {} +- {}",
            avg.rate, sim.mean_rate.value, sim.mean_rate.half_width
        ),
    );

    // Association, at the configured point and where the second station matters.
    let busy = NetworkParams {
        lambda_b: 1e-4,
        lambda_c: 5e-4,
        ..p
    };
    let busy_sim = simulate(
        &TrialConfig {
            k_track: K_MAX,
            ..TrialConfig::new(busy, n, seed(&[5]))
        },
        &[],
    )?;
    let busy_assoc = Evaluator::new(busy, LaplaceMode::ExactAngular)?.association(
        K_MAX,
        DEFAULT_ASSOCIATION_SAMPLES,
        seed(&[6]),
    )?;
    for (name, a, s, q) in [
        ("association-vs-mc", &assoc, &sim, &p),
        ("association-vs-mc-dense", &busy_assoc, &busy_sim, &busy),
    ] {
        let mut z = 0.0f64;
        for k in 0..3 {
            let p0 = a.probs[k];
            let se = (p0 * (1.0 - p0) / s.trials as f64 + a.std_errors[k].powi(2)).sqrt();
            z = z.max(z_score(s.association_hist[k], p0, se));
        }
        report.gate(
            name,
            z,
            3.0,
            format!(
                "k=1..3 analytic {:?} vs simulated {:?}; lambda_b={:e} lambda_c={:e}",
                &a.probs[..3],
                &s.association_hist[..3],
                q.lambda_b,
                q.lambda_c,
            ),
        );
    }
    report.gate(
        "association-total",
        (assoc.total() - 1.0).abs(),
        0.005,
        format!("sum over k <= {K_MAX} plus tail = {}", assoc.total()),
    );
    report.gate(
        "association-total-dense",
        (busy_assoc.total() - 1.0).abs(),
        0.005,
        format!("sum over k <= {K_MAX} plus tail = {}", busy_assoc.total()),
    );
    let clear = NetworkParams {
        lambda_c: 0.0,
        alpha_los: 3.0,
        ..p
    };
    let wall = NetworkParams {
        lambda_c: f64::INFINITY,
        ..p
    };
    let limit_gap = [clear, wall]
        .iter()
        .map(|q| {
            Evaluator::new(*q, LaplaceMode::ExactAngular)
                .and_then(|e| e.association(K_MAX, 1000, 0))
                .map(|a| (a.probs[0] - 1.0).abs())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    report.gate(
        "association-limits",
        limit_gap,
        0.0,
        "p_ass^1 at lambda_c = 0 (alpha_los = 3) and lambda_c = inf".into(),
    );
    let clear_sim = simulate(&TrialConfig::new(clear, n.min(2000), seed(&[7])), &[])?;
    report.gate(
        "association-no-blockage-mc",
        1.0 - clear_sim.association_hist[0],
        0.0,
        "simulated frequency of k = 1 without blockages".into(),
    );
    report.info(
        "association-rule-disagreement",
        busy_sim.disagreement_rate,
        "stopping rule vs global maximum, dense point".into(),
    );

    // LoS marginals of the geometric simulator, per radial bin.
    let dense = NetworkParams {
        lambda_b: 1.0 / (200.0 * 200.0 * PI),
        ..p
    };
    let mut geo = TrialConfig::new(dense, (n / 10).max(100), seed(&[8]));
    geo.blockage_mode = BlockageMode::Geometric;
    geo.los_bin_edges = vec![0.0, 40.0, 80.0, 120.0, 160.0, 200.0];
    let g = simulate(&geo, &[])?;
    let z_bins = g
        .los_frequency_by_bin
        .iter()
        .map(|b| b.z_score().abs())
        .fold(0.0, f64::max);
    report.gate(
        "geometric-los-marginals",
        z_bins,
        3.0,
        format!(
            "max |z| over {} radial bins; {} trials",
            g.los_frequency_by_bin.len(),
            geo.trials
        ),
    );
    report.info(
        "resampled-realizations",
        (sim.resamples + busy_sim.resamples) as f64,
        "draws with fewer than two stations".into(),
    );
    Ok(report)
}
