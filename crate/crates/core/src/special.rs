//! Normal distribution helpers and the gamma-family functions that statrs
//! does not provide (trigamma, shape derivative and inverse of the
//! regularized incomplete gamma function).

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;
pub use statrs::function::gamma::digamma;

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Regularized lower incomplete gamma function `P(a, x)`; NaN outside the
/// domain instead of panicking.
pub fn gamma_lr(a: f64, x: f64) -> f64 {
    if !(a > 0.0 && a.is_finite()) || x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    statrs::function::gamma::gamma_lr(a, x)
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `Φ(b) - Φ(a)` for `a <= b`, evaluated on whichever tail keeps precision.
pub fn norm_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= 0.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        1.0 - norm_cdf(a) - norm_sf(b)
    }
}

/// Inverse standard normal CDF (Acklam's rational approximation followed by
/// one Halley correction).
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley step against the tail that is not rounded away.
    let e = if x < 0.0 { norm_cdf(x) - p } else { (1.0 - p) - norm_sf(x) };
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Trigamma function ψ′(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // asymptotic expansion in Bernoulli numbers
    let series = inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0
                + inv2
                    * (-1.0 / 30.0
                        + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0 + inv2 * (-691.0 / 2730.0 + inv2 * (7.0 / 6.0)))))));
    acc + series
}

/// ∂P(a, x)/∂a for the regularized lower incomplete gamma function.
///
/// Uses the power series `P(a,x) = Σ x^{a+n} e^{-x} / Γ(a+n+1)`, whose
/// termwise shape derivative carries a factor `ln x − ψ(a+n+1)`.
pub fn gamma_lr_da(a: f64, x: f64) -> f64 {
    if !(a > 0.0 && a.is_finite()) || x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 || !x.is_finite() {
        return 0.0;
    }
    let ln_x = x.ln();
    let mut term = (a * ln_x - x - ln_gamma(a + 1.0)).exp();
    let mut psi = digamma(a + 1.0);
    let mut sum = term * (ln_x - psi);
    let mut total = term;
    let max_terms = 200_000usize;
    for n in 1..max_terms {
        let an = a + n as f64;
        term *= x / an;
        psi += 1.0 / an;
        let contrib = term * (ln_x - psi);
        sum += contrib;
        total += term;
        if n as f64 > x - a && term < 1e-17 * total && contrib.abs() <= 1e-17 * sum.abs().max(1e-300) {
            return sum;
        }
        if term == 0.0 {
            return sum;
        }
    }
    // Far tail where the series is slow: fall back to a central difference.
    let h = 1e-5 * a.max(1.0);
    (gamma_lr(a + h, x) - gamma_lr(a - h, x)) / (2.0 * h)
}

/// Gamma(shape, 1) density.
pub fn gamma_pdf(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ((a - 1.0) * x.ln() - x - ln_gamma(a)).exp()
}

/// Inverse of the regularized lower incomplete gamma function in `x`:
/// returns `x` with `P(a, x) = u`.
pub fn gamma_lr_inv(a: f64, u: f64) -> f64 {
    if !(a > 0.0 && a.is_finite()) || u.is_nan() {
        return f64::NAN;
    }
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    // Wilson–Hilferty start, small-shape start when it goes negative.
    let z = norm_ppf(u);
    let c = 1.0 / (9.0 * a);
    let mut x = a * (1.0 - c + z * c.sqrt()).powi(3);
    if !(x > 0.0) || a < 1.0 {
        let small = ((u.ln() + ln_gamma(a + 1.0)) / a).exp();
        if !(x > 0.0) || small < x {
            x = small;
        }
    }
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    for _ in 0..200 {
        let f = gamma_lr(a, x) - u;
        if f > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let d = gamma_pdf(a, x);
        let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(lo) + 1.0 };
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            return next;
        }
        x = next;
        if hi.is_finite() && hi - lo <= 4.0 * f64::EPSILON * hi {
            return x;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigamma_known_values() {
        assert!((trigamma(1.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((trigamma(2.0) - (PI * PI / 6.0 - 1.0)).abs() < 1e-14);
        assert!((trigamma(0.5) - PI * PI / 2.0).abs() < 1e-13);
    }

    #[test]
    fn ppf_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.1, 0.5, 0.9, 0.975, 1.0 - 1e-9] {
            let x = norm_ppf(p);
            let back = if x < 0.0 { norm_cdf(x) } else { 1.0 - norm_sf(x) };
            assert!((back - p).abs() <= 1e-14 * p.max(1e-3), "p={p} back={back}");
        }
        assert!((norm_ppf(0.9) - 1.281_551_565_545).abs() < 1e-11);
    }

    #[test]
    fn interval_is_accurate_in_tails() {
        let v = norm_interval(8.0, 9.0);
        assert!(v > 0.0 && (v - (norm_sf(8.0) - norm_sf(9.0))).abs() < 1e-25);
        assert_eq!(norm_interval(f64::NEG_INFINITY, f64::INFINITY), 1.0);
    }

    #[test]
    fn gamma_inverse_round_trip() {
        for &a in &[0.3, 1.0, 2.5, 20.0, 300.0] {
            for &u in &[1e-6, 0.05, 0.5, 0.95, 1.0 - 1e-6] {
                let x = gamma_lr_inv(a, u);
                assert!((gamma_lr(a, x) - u).abs() < 1e-12, "a={a} u={u} x={x}");
            }
        }
    }

    #[test]
    fn invalid_arguments_give_nan() {
        assert!(gamma_lr(f64::INFINITY, 1.0).is_nan());
        assert!(gamma_lr(-1.0, 1.0).is_nan());
        assert_eq!(gamma_lr(2.0, -1.0), 0.0);
        assert!(gamma_lr_inv(f64::NAN, 0.5).is_nan());
    }

    #[test]
    fn shape_derivative_matches_difference() {
        for &(a, x) in &[(0.7, 0.4), (3.0, 2.0), (20.0, 25.0), (150.0, 140.0)] {
            let h = 1e-5 * a;
            let fd = (gamma_lr(a + h, x) - gamma_lr(a - h, x)) / (2.0 * h);
            let an = gamma_lr_da(a, x);
            assert!((an - fd).abs() < 1e-7 * (fd.abs() + 1e-3), "a={a} x={x} {an} vs {fd}");
        }
    }
}
