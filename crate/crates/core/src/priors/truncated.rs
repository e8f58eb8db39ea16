//! Draws from normal and gamma laws restricted to an interval.
//!
//! Both samplers refuse intervals carrying less than `1e-300` of the parent
//! mass, where any draw would be numerically meaningless.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

const MIN_LOG_MASS: f64 = -690.775_527_898_213_7; // ln(1e-300)
const TAIL_START: f64 = 5.0;
const MAX_RETRIES: usize = 1000;

/// Upper tail `P(Z > z)` of the standard normal.
fn survival(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `ln P(Z > z)`, switching to the asymptotic series deep in the tail.
fn log_survival(z: f64) -> f64 {
    if z < 30.0 {
        survival(z).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - (z * (2.0 * std::f64::consts::PI).sqrt()).ln() + (1.0 - 1.0 / z2).ln()
    }
}

/// `ln P(a < Z < b)` for `0 <= a < b`.
fn log_tail_mass(a: f64, b: f64) -> f64 {
    let la = log_survival(a);
    if b == f64::INFINITY {
        return la;
    }
    let lb = log_survival(b);
    la + (-(lb - la).exp()).ln_1p()
}

fn log_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        log_tail_mass(a, b)
    } else if b <= 0.0 {
        log_tail_mass(-b, -a)
    } else {
        (1.0 - survival(b) - survival(-a)).ln()
    }
}

/// Standard normal restricted to `(a, b)` with `0 <= a < b`.
fn upper_tail<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if a < TAIL_START {
        let qa = survival(a);
        let qb = survival(b);
        let std = Normal::standard();
        for _ in 0..MAX_RETRIES {
            let u: f64 = rng.random();
            let q = qa - u * (qa - qb);
            let z = -std.inverse_cdf(q);
            if z > a && z < b {
                return z;
            }
        }
        return 0.5 * (a + b.min(a + 1.0));
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    if lambda * (b - a) < 1.0 {
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            if z > a && rng.random::<f64>().ln() < -0.5 * (z * z - a * a) {
                return z;
            }
        }
    }
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / lambda;
        if z >= b || z <= a {
            continue;
        }
        if rng.random::<f64>().ln() < -0.5 * (z - lambda) * (z - lambda) {
            return z;
        }
    }
}

/// Standard normal restricted to `(a, b)` with `a < 0 < b`.
fn central<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64, log_mass: f64) -> f64 {
    if log_mass > 0.3f64.ln() {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z > a && z < b {
                return z;
            }
        }
    }
    loop {
        let z = a + (b - a) * rng.random::<f64>();
        if z > a && z < b && rng.random::<f64>().ln() < -0.5 * z * z {
            return z;
        }
    }
}

/// One draw from `N(mean, sd^2)` restricted to the open interval `(low, high)`.
/// Either bound may be infinite.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    sd: f64,
    low: f64,
    high: f64,
) -> Result<f64> {
    if !(sd > 0.0) || !mean.is_finite() || low.is_nan() || high.is_nan() || !(low < high) {
        return Err(Error::DegenerateTruncation { low, high });
    }
    let a = (low - mean) / sd;
    let b = (high - mean) / sd;
    let lm = log_mass(a, b);
    if !(lm >= MIN_LOG_MASS) {
        return Err(Error::DegenerateTruncation { low, high });
    }
    Ok(draw_normal(rng, mean, sd, low, high, a, b, lm))
}

/// As [`sample_truncated_normal`] but without the mass floor. The draw stays
/// accurate far in the tail, where a sharply peaked full conditional can
/// legitimately sit.
pub(crate) fn sample_truncated_normal_tail<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    sd: f64,
    low: f64,
    high: f64,
) -> Result<f64> {
    if !(sd > 0.0) || !mean.is_finite() || low.is_nan() || high.is_nan() || !(low < high) {
        return Err(Error::DegenerateTruncation { low, high });
    }
    let a = (low - mean) / sd;
    let b = (high - mean) / sd;
    let lm = log_mass(a, b);
    Ok(draw_normal(rng, mean, sd, low, high, a, b, lm))
}

#[allow(clippy::too_many_arguments)]
fn draw_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    sd: f64,
    low: f64,
    high: f64,
    a: f64,
    b: f64,
    lm: f64,
) -> f64 {
    let z = if a >= 0.0 {
        upper_tail(rng, a, b)
    } else if b <= 0.0 {
        -upper_tail(rng, -b, -a)
    } else {
        central(rng, a, b, lm)
    };
    (mean + sd * z).clamp(low, high)
}

/// One draw from Gamma(shape, rate) restricted to `(low, inf)`.
pub fn sample_truncated_gamma<R: Rng + ?Sized>(
    rng: &mut R,
    shape: f64,
    rate: f64,
    low: f64,
) -> Result<f64> {
    let invalid = || Error::DegenerateTruncation {
        low,
        high: f64::INFINITY,
    };
    if !(shape > 0.0 && rate > 0.0) || low.is_nan() || low == f64::INFINITY {
        return Err(invalid());
    }
    let parent = Gamma::new(shape, 1.0 / rate).map_err(|_| invalid())?;
    if low <= 0.0 {
        return Ok(parent.sample(rng));
    }
    let mass = gamma_ur(shape, rate * low);
    if !(mass >= 1e-300) {
        return Err(invalid());
    }
    Ok(draw_gamma_tail(rng, &parent, shape, rate, low, mass))
}

/// As [`sample_truncated_gamma`] but without the mass floor.
pub(crate) fn sample_truncated_gamma_tail<R: Rng + ?Sized>(
    rng: &mut R,
    shape: f64,
    rate: f64,
    low: f64,
) -> Result<f64> {
    let invalid = || Error::DegenerateTruncation {
        low,
        high: f64::INFINITY,
    };
    if !(shape > 0.0 && rate > 0.0) || low.is_nan() || low == f64::INFINITY {
        return Err(invalid());
    }
    let parent = Gamma::new(shape, 1.0 / rate).map_err(|_| invalid())?;
    if low <= 0.0 {
        return Ok(parent.sample(rng));
    }
    let mass = gamma_ur(shape, rate * low);
    Ok(draw_gamma_tail(rng, &parent, shape, rate, low, mass))
}

fn draw_gamma_tail<R: Rng + ?Sized>(
    rng: &mut R,
    parent: &Gamma<f64>,
    shape: f64,
    rate: f64,
    low: f64,
    mass: f64,
) -> f64 {
    let decay = if shape > 1.0 {
        rate - (shape - 1.0) / low
    } else {
        rate
    };
    if mass >= 0.25 || decay <= 0.0 {
        loop {
            let x = parent.sample(rng);
            if x > low {
                return x;
            }
        }
    }
    // Shifted exponential proposal; its log ratio to the target peaks at `low`.
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = low + e / decay;
        if x <= low {
            continue;
        }
        let log_accept = if shape > 1.0 {
            (shape - 1.0) * ((x / low).ln() - (x - low) / low)
        } else {
            (shape - 1.0) * (x / low).ln()
        };
        if rng.random::<f64>().ln() < log_accept {
            return x;
        }
    }
}
