//! Modified Bessel function of the first kind, order zero.

/// Below this argument the ascending power series is used; above it the
/// Hankel asymptotic expansion, whose smallest term there is ~e^{-2x} ≈ 1e-13.
pub const SERIES_LIMIT: f64 = 15.0;

fn series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * k);
        sum += term;
        if term <= sum * 1e-17 {
            return sum;
        }
    }
}

/// `Σ_k ((2k-1)!!)² / (k! (8x)^k)`, summed until the terms stop shrinking.
fn asymptotic_sum(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        let next = term * (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k * x);
        if next >= term || next <= sum * 1e-17 {
            return sum;
        }
        term = next;
        sum += next;
    }
}

/// `I₀(x)`, relative accuracy ~1e-13 everywhere. Overflows to `inf` past
/// x ≈ 713; use [`bessel_i0_scaled`] for large arguments.
pub fn bessel_i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SERIES_LIMIT {
        series(ax)
    } else {
        let e = ax.exp();
        if e.is_infinite() {
            return f64::INFINITY;
        }
        e / (2.0 * std::f64::consts::PI * ax).sqrt() * asymptotic_sum(ax)
    }
}

/// `e^{-|x|} I₀(x)`, finite for every finite `x`.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SERIES_LIMIT {
        series(ax) * (-ax).exp()
    } else {
        asymptotic_sum(ax) / (2.0 * std::f64::consts::PI * ax).sqrt()
    }
}
