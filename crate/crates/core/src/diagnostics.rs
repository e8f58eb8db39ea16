//! Convergence diagnostics for scalar traces.
//!
//! Both diagnostics estimate the spectral density at frequency zero by batch
//! means with `floor(sqrt(n))` batches: `S = b * var(batch means)` for batch
//! size `b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest trace either diagnostic accepts.
pub const MIN_TRACE_LEN: usize = 50;
const MIN_WINDOW: usize = 10;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn check_length(label: &str, x: &[f64]) -> Result<()> {
    if x.len() < MIN_TRACE_LEN {
        return Err(Error::TraceTooShort {
            label: label.to_string(),
            len: x.len(),
            min: MIN_TRACE_LEN,
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            matrix: "trace",
            row: i,
            col: 0,
        });
    }
    Ok(())
}

/// Batch-means estimate of the spectral density at zero. Points that do not
/// fill a whole batch are dropped from the start.
pub fn spectral_density_zero(x: &[f64]) -> f64 {
    let n = x.len();
    let batches = ((n as f64).sqrt().floor() as usize).max(2);
    let size = n / batches;
    if size == 0 {
        return 0.0;
    }
    let skip = n - batches * size;
    let means: Vec<f64> = x[skip..].chunks(size).map(mean).collect();
    let grand = mean(&means);
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    size as f64 * var
}

/// Geweke z-score comparing the mean of the first `frac_first` of the trace
/// with the mean of the last `frac_last`.
pub fn geweke(x: &[f64], frac_first: f64, frac_last: f64) -> Result<f64> {
    check_length("geweke", x)?;
    if !(frac_first > 0.0 && frac_last > 0.0 && frac_first + frac_last <= 1.0) {
        return Err(Error::Invalid(format!(
            "Geweke windows {frac_first} and {frac_last} must be positive and not overlap"
        )));
    }
    let n = x.len();
    let n_a = (frac_first * n as f64).floor() as usize;
    let n_b = (frac_last * n as f64).floor() as usize;
    if n_a < MIN_WINDOW || n_b < MIN_WINDOW {
        return Err(Error::Invalid(format!(
            "Geweke windows of {n_a} and {n_b} points; need at least {MIN_WINDOW}"
        )));
    }
    let (a, b) = (&x[..n_a], &x[n - n_b..]);
    let (s_a, s_b) = (spectral_density_zero(a), spectral_density_zero(b));
    if s_a == 0.0 && s_b == 0.0 {
        return Err(Error::DegenerateTrace(
            "zero variance in both Geweke windows".into(),
        ));
    }
    Ok((mean(a) - mean(b)) / (s_a / n_a as f64 + s_b / n_b as f64).sqrt())
}

/// Geweke z-score with the usual 10% / 50% windows.
pub fn geweke_default(x: &[f64]) -> Result<f64> {
    geweke(x, 0.1, 0.5)
}

/// Modified Bessel function of the second kind, `K_nu(u)` for `u > 0`, from
/// `int_0^inf exp(-u cosh t) cosh(nu t) dt` by the trapezoid rule, which is
/// spectrally accurate for this doubly-exponentially decaying integrand.
fn bessel_k(nu: f64, u: f64) -> f64 {
    let h: f64 = 0.01;
    let mut total = 0.5 * (-u).exp();
    let mut t: f64 = h;
    loop {
        let term = (-u * t.cosh() + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
        total += term;
        if u * t.cosh() - nu * t > 745.0 || (term < 1e-18 * total && t > 1.0) {
            break;
        }
        t += h;
    }
    total * h
}

/// Asymptotic distribution function of the Cramér-von Mises statistic.
///
/// The series is summed until its terms drop below `1e-5` in the exponent
/// scale; truncating after a fixed number of terms badly underestimates the
/// upper tail for large statistics.
pub fn pcramer(q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q > 10.0 {
        return 1.0;
    }
    let cutoff = -(1e-5f64.ln());
    let pi_32 = std::f64::consts::PI.powf(1.5);
    let mut total = 0.0;
    for k in 0.. {
        let kf = f64::from(k);
        let u = (4.0 * kf + 1.0).powi(2) / (16.0 * q);
        if u > cutoff {
            break;
        }
        let log_ratio = statrs::function::gamma::ln_gamma(kf + 0.5)
            - statrs::function::gamma::ln_gamma(kf + 1.0);
        let z = log_ratio.exp() * (4.0 * kf + 1.0).sqrt() / (pi_32 * q.sqrt());
        total += z * (-u).exp() * bessel_k(0.25, u);
    }
    total.min(1.0)
}

/// Result of the Heidelberger-Welch stationarity test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeidelWelch {
    pub passed: bool,
    /// Fraction of the trace discarded before the test passed (or the last
    /// fraction tried).
    pub discarded_fraction: f64,
    /// Cramér-von Mises statistic on the kept portion.
    pub statistic: f64,
    /// `1 - pcramer(statistic)`.
    pub p_value: f64,
    /// Mean and 95% half-width on the kept portion; informational only.
    pub mean: f64,
    pub halfwidth: f64,
    pub halfwidth_passed: bool,
}

/// Discards 10% chunks from the start (up to half the trace) until the
/// Brownian-bridge statistic is no longer significant at level `alpha`.
pub fn heidelberger_welch(x: &[f64], alpha: f64) -> Result<HeidelWelch> {
    check_length("heidelberger_welch", x)?;
    let n_total = x.len();
    let s0 = spectral_density_zero(&x[n_total / 2..]);
    if !(s0 > 0.0) {
        return Err(Error::DegenerateTrace(
            "zero spectral density in the second half".into(),
        ));
    }
    let mut result = None;
    for step in 0..=5 {
        let start = step * n_total / 10;
        let y = &x[start..];
        let n = y.len() as f64;
        let ybar = mean(y);
        let mut cum = 0.0;
        let mut sum_sq = 0.0;
        for (k, v) in y.iter().enumerate() {
            cum += v;
            let bridge = cum - ybar * (k + 1) as f64;
            sum_sq += bridge * bridge;
        }
        let statistic = sum_sq / (n * s0) / n;
        let cdf = pcramer(statistic);
        let halfwidth = 1.959_963_984_540_054 * (s0 / n).sqrt();
        let current = HeidelWelch {
            passed: cdf < 1.0 - alpha,
            discarded_fraction: start as f64 / n_total as f64,
            statistic,
            p_value: 1.0 - cdf,
            mean: ybar,
            halfwidth,
            halfwidth_passed: halfwidth < 0.1 * ybar.abs(),
        };
        let done = current.passed;
        result = Some(current);
        if done {
            break;
        }
    }
    Ok(result.expect("at least one window"))
}

/// Both diagnostics for one labelled trace; failures are kept per label.
#[derive(Debug)]
pub struct TraceDiagnostics {
    pub label: String,
    pub geweke: Result<f64>,
    pub heidelberger_welch: Result<HeidelWelch>,
}

pub fn diagnose(label: &str, x: &[f64]) -> TraceDiagnostics {
    TraceDiagnostics {
        label: label.to_string(),
        geweke: geweke_default(x),
        heidelberger_welch: heidelberger_welch(x, 0.05),
    }
}
