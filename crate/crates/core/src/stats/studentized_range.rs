//! Distribution of the studentized range `Q = (max - min) / s` of `k`
//! standard normal means, with `s² ~ χ²_ν / ν` independent of them.
//!
//! ```text
//! P(Q <= q) = ∫_0^∞ f_ν(s) W(q s) ds
//! W(w)      = k ∫ φ(z) [Φ(z) - Φ(z - w)]^(k-1) dz
//! ```
//! where `f_ν` is the density of `sqrt(χ²_ν / ν)`. Both integrals are
//! evaluated with adaptive Gauss–Kronrod quadrature.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::quadrature::integrate_pieces;
use crate::error::{Error, Result};

const INNER_TOL: f64 = 1e-12;
const OUTER_TOL: f64 = 1e-11;
const Z_LIMIT: f64 = 9.0;
const QUANTILE_TOL: f64 = 1e-10;

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// CDF of the range of `k` standard normals.
fn range_cdf(w: f64, k: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let integrand = |z: f64| {
        let d = normal_cdf(z) - normal_cdf(z - w);
        if d <= 0.0 {
            0.0
        } else {
            normal_pdf(z) * d.powf(k - 1.0)
        }
    };
    let upper = Z_LIMIT + w.min(Z_LIMIT);
    let v = k * integrate_pieces(integrand, &[-Z_LIMIT, 0.0, 0.5 * w, upper], INNER_TOL);
    v.clamp(0.0, 1.0)
}

fn check(k: usize, df: f64) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("studentized range needs k >= 2, got {k}")));
    }
    if !(df >= 1.0 && df.is_finite()) {
        return Err(Error::InvalidArgument(format!("degrees of freedom must be >= 1, got {df}")));
    }
    Ok(())
}

/// `P(Q <= q)` for `k` groups and `df` error degrees of freedom.
pub fn cdf(q: f64, k: usize, df: f64) -> Result<f64> {
    check(k, df)?;
    if q.is_nan() {
        return Err(Error::InvalidArgument("q is NaN".into()));
    }
    if q <= 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(1.0);
    }
    let kf = k as f64;
    let half = 0.5 * df;
    let log_norm = half * df.ln() - ln_gamma(half) - (half - 1.0) * std::f64::consts::LN_2;
    let density = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            (log_norm + (df - 1.0) * s.ln() - half * s * s).exp()
        }
    };
    let spread = 12.0 / df.sqrt();
    let lo = (1.0 - spread).max(0.0);
    let hi = 1.0 + spread.max(1.0) * 1.5;
    let mut points = vec![lo];
    points.extend([0.5, 1.0, 1.5].into_iter().filter(|&p| p > lo && p < hi));
    points.push(hi);
    let v = integrate_pieces(|s| density(s) * range_cdf(q * s, kf), &points, OUTER_TOL);
    Ok(v.clamp(0.0, 1.0))
}

/// `P(Q > q)`.
pub fn sf(q: f64, k: usize, df: f64) -> Result<f64> {
    Ok((1.0 - cdf(q, k, df)?).clamp(0.0, 1.0))
}

/// The `p` quantile, found by a bracketed secant (Illinois) search on [`cdf`].
pub fn quantile(p: f64, k: usize, df: f64) -> Result<f64> {
    check(k, df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level must be in (0, 1), got {p}")));
    }
    let (mut a, mut fa) = (0.0, -p);
    let mut b = 4.0;
    let mut fb = cdf(b, k, df)? - p;
    while fb < 0.0 {
        (a, fa) = (b, fb);
        b *= 2.0;
        if b > 1e6 {
            return Err(Error::Undefined("studentized range quantile did not bracket".into()));
        }
        fb = cdf(b, k, df)? - p;
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        if (b - a).abs() <= QUANTILE_TOL * b.max(1.0) {
            break;
        }
        let fc = cdf(c, k, df)? - p;
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            (b, fb) = (c, fc);
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            (a, fa) = (c, fc);
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
        if fc.abs() < 1e-15 {
            return Ok(c);
        }
    }
    Ok((a * fb - b * fa) / (fb - fa))
}
