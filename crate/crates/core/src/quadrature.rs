//! Adaptive Gauss–Kronrod integration with explicit error control.
//!
//! All routines share one engine: a globally adaptive 21-point Kronrod rule
//! with the embedded 10-point Gauss rule used for the local error estimate.
//! Semi-infinite ranges are mapped onto `[0, 1)` by a substitution chosen from
//! the decay of the integrand, and 2D integrals are iterated 1D integrals.
//!
//! Running out of budget is not an error: the best estimate is returned with
//! `converged == false` so that parameter sweeps can flag the cell and move on.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_040_970,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const EVALS_PER_RULE: usize = 21;

/// Tolerances and evaluation budget for one integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-8,
            max_evals: 1_000_000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_evals: usize) -> Result<Self> {
        let spec = Self {
            abs_tol,
            rel_tol,
            max_evals,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok_tol = |t: f64| t.is_finite() && t >= 0.0;
        if !ok_tol(self.abs_tol) || !ok_tol(self.rel_tol) {
            return Err(Error::Parameter(format!(
                "tolerances must be finite and non-negative (abs {}, rel {})",
                self.abs_tol, self.rel_tol
            )));
        }
        if self.abs_tol == 0.0 && self.rel_tol == 0.0 {
            return Err(Error::Parameter(
                "at least one of abs_tol and rel_tol must be positive".into(),
            ));
        }
        if self.max_evals < 100 {
            return Err(Error::Parameter(format!(
                "max_evals must be at least 100, got {}",
                self.max_evals
            )));
        }
        Ok(())
    }

    /// The same budget with both tolerances scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            max_evals: self.max_evals,
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evals: usize,
    pub converged: bool,
}

impl QuadratureResult {
    fn exact_zero() -> Self {
        Self {
            value: 0.0,
            error_estimate: 0.0,
            evals: 0,
            converged: true,
        }
    }
}

/// How the integrand decays at infinity; selects the substitution used to
/// map `[a, ∞)` onto `[0, 1)`. `scale` is the length over which the decay
/// happens and only affects efficiency, never the value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// Like `exp(-(x/scale)^2)`: substitute `x² = a² + scale²·v`, then `v = -ln(1 - t)`.
    ExpQuadratic { scale: f64 },
    /// Like `exp(-x/scale)`: `x = a - scale·ln(1 - t)`.
    ExpLinear { scale: f64 },
    /// Algebraic decay: `x = a + scale·t/(1 - t)`.
    Power { scale: f64 },
}

/// A 1D integration range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Finite { a: f64, b: f64 },
    SemiInfinite { a: f64, decay: Decay },
}

impl Domain {
    pub fn finite(a: f64, b: f64) -> Self {
        Domain::Finite { a, b }
    }

    pub fn semi_infinite(a: f64, decay: Decay) -> Self {
        Domain::SemiInfinite { a, decay }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        // Ties are broken by position so the subdivision order is fully
        // determined by the integrand.
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = 0.0;
    let mut res_k = WGK[10] * fc;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..5 {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_g += WG[j] * (f1 + f2);
        res_k += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        res_k += WGK[jtwm1] * (f1 + f2);
        res_abs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

/// Globally adaptive integration of `f` over `[a, b]`.
///
/// The interval with the largest local error is bisected until the summed
/// error meets `spec` or the evaluation budget runs out. A non-finite
/// integrand value makes the result non-finite and unconverged.
pub fn integrate_finite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> QuadratureResult {
    if a == b {
        return QuadratureResult::exact_zero();
    }
    if b < a {
        let r = integrate_finite(f, b, a, spec);
        return QuadratureResult {
            value: -r.value,
            ..r
        };
    }

    let (value, error) = kronrod21(&f, a, b);
    let mut evals = EVALS_PER_RULE;
    if !value.is_finite() || !error.is_finite() {
        return QuadratureResult {
            value,
            error_estimate: f64::INFINITY,
            evals,
            converged: false,
        };
    }

    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;

    loop {
        if total_err <= spec.target(total) {
            break;
        }
        if evals + 2 * EVALS_PER_RULE > spec.max_evals {
            break;
        }
        let worst = heap.pop().expect("segment heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in f64.
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod21(&f, worst.a, mid);
        let (v2, e2) = kronrod21(&f, mid, worst.b);
        evals += 2 * EVALS_PER_RULE;
        if !(v1.is_finite() && v2.is_finite() && e1.is_finite() && e2.is_finite()) {
            return QuadratureResult {
                value: total - worst.value + v1 + v2,
                error_estimate: f64::INFINITY,
                evals,
                converged: false,
            };
        }
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }

    // Re-sum from the segments to shed the drift of the running totals.
    let mut segments: Vec<Segment> = heap.into_vec();
    segments.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value: f64 = segments.iter().map(|s| s.value).sum();
    let error_estimate: f64 = segments.iter().map(|s| s.error).sum();
    QuadratureResult {
        value,
        error_estimate,
        evals,
        converged: error_estimate <= spec.target(value),
    }
}

/// Integrate `f` over `[a, ∞)` after mapping the range onto `[0, 1)`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    decay: Decay,
    spec: &QuadratureSpec,
) -> QuadratureResult {
    match decay {
        Decay::Power { scale } => integrate_finite(
            |t| {
                let u = 1.0 - t;
                let x = a + scale * t / u;
                f(x) * scale / (u * u)
            },
            0.0,
            1.0,
            spec,
        ),
        Decay::ExpLinear { scale } => integrate_finite(
            |t| {
                let u = 1.0 - t;
                let x = a - scale * u.ln();
                f(x) * scale / u
            },
            0.0,
            1.0,
            spec,
        ),
        Decay::ExpQuadratic { scale } => {
            let a2 = a * a;
            let s2 = scale * scale;
            integrate_finite(
                |t| {
                    let u = 1.0 - t;
                    let v = -u.ln();
                    let x = (a2 + s2 * v).sqrt();
                    if x == 0.0 {
                        return 0.0;
                    }
                    f(x) * s2 / (2.0 * x * u)
                },
                0.0,
                1.0,
                spec,
            )
        }
    }
}

/// Integrate over a [`Domain`].
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    domain: Domain,
    spec: &QuadratureSpec,
) -> QuadratureResult {
    match domain {
        Domain::Finite { a, b } => integrate_finite(f, a, b, spec),
        Domain::SemiInfinite { a, decay } => integrate_semi_infinite(f, a, decay, spec),
    }
}

/// Iterated integral `∫_outer ∫_inner(x) f(x, y) dy dx`.
///
/// The inner integrals run at one tenth of the outer tolerances. The result
/// is converged only if the outer integral and every inner integral are.
pub fn integrate_2d<F, B>(f: F, outer: Domain, inner: B, spec: &QuadratureSpec) -> QuadratureResult
where
    F: Fn(f64, f64) -> f64,
    B: Fn(f64) -> Domain,
{
    let inner_spec = spec.scaled(0.1);
    let inner_ok = Cell::new(true);
    let inner_evals = Cell::new(0usize);
    let outer_result = integrate(
        |x| {
            let r = integrate(|y| f(x, y), inner(x), &inner_spec);
            inner_evals.set(inner_evals.get() + r.evals);
            if !r.converged {
                inner_ok.set(false);
            }
            r.value
        },
        outer,
        spec,
    );
    QuadratureResult {
        value: outer_result.value,
        error_estimate: outer_result.error_estimate,
        evals: outer_result.evals + inner_evals.get(),
        converged: outer_result.converged && inner_ok.get(),
    }
}
