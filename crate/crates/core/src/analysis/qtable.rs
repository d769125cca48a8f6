//! Tabulated angular LoS integral.
//!
//! Every analytic quantity integrates `Q(r)` over distance, often inside a
//! second distance integral, so evaluating it by quadrature at each node is
//! the dominant cost. With `m = min(l, w)` and `z = λ_C·m·r`,
//!
//! `Q(r) = 2π e^{-λ_C w l} · e^{-z} · g(z)`,  `g(z) = (2/π) ∫_0^{π/2} e^{-z h(θ)} dθ`,
//!
//! where `h(θ) = (l sinθ + w cosθ)/m − 1 ≥ 0`. `g` is entire, equals 1 at
//! zero and decays algebraically, so piecewise Chebyshev interpolation on
//! doubling panels reproduces it to ~1e-13 relative with a few hundred
//! quadratures per parameter set.

use std::f64::consts::PI;

use crate::pathloss::NetworkParams;
use crate::quadrature::{integrate_finite, QuadratureSpec};

const DEGREE: usize = 24;
const NODES: usize = DEGREE + 1;
/// Past this `z` the factor `e^{-z}` is below the smallest subnormal.
const Z_MAX: f64 = 750.0;

const NODE_SPEC: QuadratureSpec = QuadratureSpec {
    abs_tol: 0.0,
    rel_tol: 2e-14,
    max_evals: 200_000,
};

#[derive(Debug, Clone)]
enum Shape {
    Constant(f64),
    Panels {
        /// Panel `j ≥ 1` covers `[first·2^{j-1}, first·2^j]`; panel 0 is `[0, first]`.
        first: f64,
        coeffs: Vec<[f64; NODES]>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct QTable {
    scale: f64,
    prefactor: f64,
    shape: Shape,
}

fn g_direct(z: f64, l: f64, w: f64) -> f64 {
    let m = l.min(w);
    let h = |t: f64| (l * t.sin() + w * t.cos()) / m - 1.0;
    let r = integrate_finite(|t| (-z * h(t).max(0.0)).exp(), 0.0, PI / 2.0, &NODE_SPEC);
    2.0 / PI * r.value
}

fn chebyshev_fit<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> [f64; NODES] {
    let n = NODES as f64;
    let values: Vec<f64> = (0..NODES)
        .map(|j| {
            let x = (PI * (j as f64 + 0.5) / n).cos();
            f(0.5 * (a + b) + 0.5 * (b - a) * x)
        })
        .collect();
    let mut coeffs = [0.0; NODES];
    for (k, c) in coeffs.iter_mut().enumerate() {
        let s: f64 = values
            .iter()
            .enumerate()
            .map(|(j, v)| v * (PI * k as f64 * (j as f64 + 0.5) / n).cos())
            .sum();
        *c = 2.0 / n * s;
    }
    coeffs[0] *= 0.5;
    coeffs
}

fn clenshaw(coeffs: &[f64; NODES], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + coeffs[0]
}

impl QTable {
    pub(crate) fn new(params: &NetworkParams) -> Self {
        let two_pi = 2.0 * PI;
        if params.lambda_c == 0.0 {
            return Self {
                scale: 0.0,
                prefactor: two_pi,
                shape: Shape::Constant(1.0),
            };
        }
        let origin = params.los_at_origin();
        if origin == 0.0 {
            return Self {
                scale: 0.0,
                prefactor: 0.0,
                shape: Shape::Constant(0.0),
            };
        }
        let (l, w) = (params.l, params.w);
        let m = l.min(w);
        // h rises from 0 with slope ≈ max(l,w)/m, which sets the smallest
        // feature of g in z.
        let first = 0.125 * m / l.hypot(w);
        let mut coeffs = vec![chebyshev_fit(|z| g_direct(z, l, w), 0.0, first)];
        let mut a = first;
        while a < Z_MAX {
            coeffs.push(chebyshev_fit(|z| g_direct(z, l, w), a, 2.0 * a));
            a *= 2.0;
        }
        Self {
            scale: params.lambda_c * m,
            prefactor: two_pi * origin,
            shape: Shape::Panels { first, coeffs },
        }
    }

    /// Length over which `Q` falls by at least a factor `e`, when it varies.
    pub(crate) fn decay_length(&self) -> Option<f64> {
        match self.shape {
            Shape::Constant(_) => None,
            Shape::Panels { .. } => Some(1.0 / self.scale),
        }
    }

    pub(crate) fn g(&self, z: f64) -> f64 {
        match &self.shape {
            Shape::Constant(c) => *c,
            Shape::Panels { first, coeffs } => {
                let (a, b, panel) = if z <= *first {
                    (0.0, *first, 0)
                } else {
                    let j = ((z / first).log2().floor() as usize + 1).min(coeffs.len() - 1);
                    let a = first * 2f64.powi(j as i32 - 1);
                    (a, 2.0 * a, j)
                };
                let x = ((2.0 * z - a - b) / (b - a)).clamp(-1.0, 1.0);
                clenshaw(&coeffs[panel], x)
            }
        }
    }

    /// `Q(r)`.
    pub(crate) fn q(&self, r: f64) -> f64 {
        match self.shape {
            Shape::Constant(c) => self.prefactor * c,
            Shape::Panels { .. } => {
                let z = self.scale * r;
                if z >= Z_MAX {
                    0.0
                } else {
                    self.prefactor * (-z).exp() * self.g(z)
                }
            }
        }
    }
}
