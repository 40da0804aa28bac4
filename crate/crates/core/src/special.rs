//! Scalar special functions backing the chi-square and Student-t machinery.
//!
//! Everything here is self-contained: log-gamma via a Lanczos approximation,
//! the regularized incomplete gamma function (series below `a + 1`, Lentz
//! continued fraction above), and the regularized incomplete beta function
//! (continued fraction with the usual symmetry switch). The Student-t
//! quantile is obtained by inverting the CDF.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const MAX_ITER: usize = 100_000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Natural logarithm of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(invalid(format!("ln_gamma requires a finite x > 0, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x keeps the Lanczos sum in its accurate range.
        return ln_gamma_unchecked(x + 1.0) - x.ln();
    }
    let z = x - 1.0;
    let mut sum = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        sum += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized lower incomplete gamma function P(a, x).
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    Ok(if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    })
}

/// Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    Ok(if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    })
}

fn check_gamma_args(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(invalid(format!("incomplete gamma requires a > 0, got {a}")));
    }
    if !(x >= 0.0) || x.is_nan() {
        return Err(invalid(format!("incomplete gamma requires x >= 0, got {x}")));
    }
    Ok(())
}

fn gamma_series(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma_unchecked(a)).exp()
}

fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
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
    (-x + a * x.ln() - ln_gamma_unchecked(a)).exp() * h
}

/// Chi-square cumulative distribution function.
pub fn chisq_cdf(q: f64, df: u64) -> Result<f64> {
    if df == 0 {
        return Err(invalid("chi-square degrees of freedom must be >= 1"));
    }
    if !(q >= 0.0) {
        return Err(invalid(format!("chi-square statistic must be >= 0, got {q}")));
    }
    gamma_p(df as f64 / 2.0, q / 2.0)
}

/// Chi-square survival function P(X > q) for `df` degrees of freedom.
pub fn chisq_sf(q: f64, df: u64) -> Result<f64> {
    if df == 0 {
        return Err(invalid("chi-square degrees of freedom must be >= 1"));
    }
    if !(q >= 0.0) {
        return Err(invalid(format!("chi-square statistic must be >= 0, got {q}")));
    }
    gamma_q(df as f64 / 2.0, q / 2.0)
}

/// Regularized incomplete beta function I_x(a, b).
pub fn beta_inc(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(invalid(format!("incomplete beta requires a, b > 0, got ({a}, {b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(format!("incomplete beta requires x in [0, 1], got {x}")));
    }
    Ok(beta_inc_unchecked(a, b, x))
}

fn beta_inc_unchecked(a: f64, b: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma_unchecked(a + b) - ln_gamma_unchecked(a) - ln_gamma_unchecked(b)
        + a * x.ln()
        + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cont_frac(a, b, x) / a
    } else {
        1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b
    }
}

fn beta_cont_frac(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
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
    h
}

fn check_df(df: f64) -> Result<()> {
    if !(df > 0.0) || df.is_nan() {
        return Err(invalid(format!("degrees of freedom must be > 0, got {df}")));
    }
    Ok(())
}

/// Student-t cumulative distribution function.
pub fn t_cdf(t: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if t.is_nan() {
        return Err(invalid("t_cdf of NaN"));
    }
    Ok(t_cdf_unchecked(t, df))
}

fn t_cdf_unchecked(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    // Tail mass 1/2 I_{df/(df+t²)}(df/2, 1/2); the t²/(df+t²) form avoids
    // losing precision near zero.
    let t2 = t * t;
    let tail = if t2 < df {
        0.5 * (1.0 - beta_inc_unchecked(0.5, df / 2.0, t2 / (df + t2)))
    } else {
        0.5 * beta_inc_unchecked(df / 2.0, 0.5, df / (df + t2))
    };
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

fn t_pdf(t: f64, df: f64) -> f64 {
    let ln_norm = ln_gamma_unchecked((df + 1.0) / 2.0)
        - ln_gamma_unchecked(df / 2.0)
        - 0.5 * (df * PI).ln();
    (ln_norm - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()).exp()
}

/// Quantile of the Student-t distribution.
///
/// Lower-tail probabilities are mapped through `-t_quantile(1 - p)`, so the
/// result is exactly antisymmetric about `p = 0.5`.
pub fn t_quantile(prob: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(prob > 0.0 && prob < 1.0) {
        return Err(invalid(format!("t_quantile requires 0 < p < 1, got {prob}")));
    }
    if prob == 0.5 {
        return Ok(0.0);
    }
    if prob < 0.5 {
        return Ok(-upper_t_quantile(1.0 - prob, df));
    }
    Ok(upper_t_quantile(prob, df))
}

fn upper_t_quantile(prob: f64, df: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while t_cdf_unchecked(hi, df) < prob {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    // Coarse bracket first, then Newton steps kept inside it.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf_unchecked(mid, df) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-6 * hi.max(1.0) {
            break;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..50 {
        let f = t_cdf_unchecked(t, df) - prob;
        let density = t_pdf(t, df);
        if density <= 0.0 {
            break;
        }
        let next = (t - f / density).clamp(lo, hi);
        let step = (next - t).abs();
        t = next;
        if step <= 1e-14 * t.abs().max(1.0) {
            break;
        }
    }
    t
}
