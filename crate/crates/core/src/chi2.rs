//! χ² distribution CDF and quantile.
//!
//! The regularized lower incomplete gamma function uses the power series for
//! `x < a + 1` and a Lentz continued fraction for the upper tail. The
//! quantile is bracketed and bisected to full double precision.

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let log_prefix = a * libm::log(x) - x - libm::lgamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut denom = a;
        for _ in 0..MAX_ITER {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        (sum * libm::exp(log_prefix)).clamp(0.0, 1.0)
    } else {
        1.0 - upper_fraction(a, x, log_prefix)
    }
}

/// `Q(a, x) = 1 - P(a, x)` via the continued fraction.
fn upper_fraction(a: f64, x: f64, log_prefix: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (libm::exp(log_prefix) * h).clamp(0.0, 1.0)
}

/// CDF of the χ² distribution with `dof` degrees of freedom.
pub fn cdf(x: f64, dof: f64) -> f64 {
    regularized_gamma_p(dof / 2.0, x / 2.0)
}

/// Value below which a χ²(`dof`) variable falls with probability `p`.
pub fn quantile(p: f64, dof: f64) -> f64 {
    debug_assert!(dof > 0.0 && (0.0..1.0).contains(&p));
    if p <= 0.0 {
        return 0.0;
    }
    let mut hi = dof.max(1.0);
    while cdf(hi, dof) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
