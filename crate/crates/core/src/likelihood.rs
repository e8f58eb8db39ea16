//! Closed-form likelihood terms.
//!
//! The per-gene regression likelihood integrates out the intercept, the
//! slab coefficients and the error variance, leaving a function of the
//! selected state columns only. With `s = n + c_mu` the centring operator is
//! `H = I - 11'/s`; it is never formed, inner products use
//! `a'Hb = a.b - (sum a)(sum b)/s`.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{LatentStateMatrix, RegressionHyper, NUM_STATES};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gene-independent pieces of the collapsed log likelihood for a fixed `n`.
#[derive(Clone, Debug)]
pub struct LikelihoodConstants {
    n: usize,
    shrink: f64,
    c_beta: f64,
    d: f64,
    half_ln_c_beta: f64,
    exponent: f64,
    base: f64,
}

impl LikelihoodConstants {
    pub fn new(n: usize, hyper: &RegressionHyper) -> Self {
        let nf = n as f64;
        let d = hyper.d();
        let delta = hyper.delta;
        let base = -0.5 * nf * LN_2PI
            + 0.5 * (hyper.c_mu / (hyper.c_mu + nf)).ln()
            + ln_gamma(0.5 * (nf + delta))
            + 0.5 * delta * (0.5 * d).ln()
            - ln_gamma(0.5 * delta);
        LikelihoodConstants {
            n,
            shrink: nf + hyper.c_mu,
            c_beta: hyper.c_beta,
            d,
            half_ln_c_beta: 0.5 * hyper.c_beta.ln(),
            exponent: 0.5 * (nf + delta),
            base,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Intermediate quantities of the collapsed likelihood for one gene.
#[derive(Clone, Debug)]
pub struct GeneLikelihoodWork {
    /// Number of selected regressors.
    pub k: usize,
    /// `c_beta I + X_R' H X_R`, lower Cholesky factor (empty when `k = 0`).
    pub u_chol: DMatrix<f64>,
    pub log_det_u: f64,
    /// `Y'HY`.
    pub yhy: f64,
    /// Residual quadratic form `Y'HY - Y'H X_R U^{-1} X_R' H Y`.
    pub q: f64,
}

impl GeneLikelihoodWork {
    /// Builds the work terms from the selected state columns.
    pub fn build(y: &[f64], design: &[&[u8]], consts: &LikelihoodConstants) -> Result<Self> {
        let n = y.len();
        let s = consts.shrink;
        let sum_y: f64 = y.iter().sum();
        let yhy = y.iter().map(|v| v * v).sum::<f64>() - sum_y * sum_y / s;
        let k = design.len();
        if k == 0 {
            return Ok(GeneLikelihoodWork {
                k,
                u_chol: DMatrix::zeros(0, 0),
                log_det_u: 0.0,
                yhy,
                q: yhy.max(0.0),
            });
        }
        for col in design {
            if col.len() != n {
                return Err(Error::Dimension(format!(
                    "state column has {} entries, response has {n}",
                    col.len()
                )));
            }
        }
        let sums: Vec<f64> = design
            .iter()
            .map(|c| c.iter().map(|&v| f64::from(v)).sum())
            .collect();
        let mut u = DMatrix::<f64>::zeros(k, k);
        let mut w = DVector::<f64>::zeros(k);
        for a in 0..k {
            let ca = design[a];
            let mut xy = 0.0;
            for i in 0..n {
                xy += f64::from(ca[i]) * y[i];
            }
            w[a] = xy - sums[a] * sum_y / s;
            for b in 0..=a {
                let cb = design[b];
                let mut dot = 0u32;
                for i in 0..n {
                    dot += u32::from(ca[i]) * u32::from(cb[i]);
                }
                let v = f64::from(dot) - sums[a] * sums[b] / s;
                u[(a, b)] = v;
                u[(b, a)] = v;
            }
            u[(a, a)] += consts.c_beta;
        }
        let chol = u
            .cholesky()
            .ok_or_else(|| Error::Numerical("Cholesky factorization of U failed".into()))?;
        let l = chol.l();
        let log_det_u = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let z = l
            .solve_lower_triangular(&w)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let mut q = yhy - z.dot(&z);
        if q < 0.0 {
            if q >= -1e-8 * yhy.abs().max(f64::MIN_POSITIVE) {
                q = 0.0;
            } else {
                return Err(Error::Numerical(format!("negative residual form q = {q}")));
            }
        }
        if !(q.is_finite() && log_det_u.is_finite()) {
            return Err(Error::Numerical("non-finite likelihood terms".into()));
        }
        Ok(GeneLikelihoodWork {
            k,
            u_chol: l,
            log_det_u,
            yhy,
            q,
        })
    }

    pub fn log_value(&self, consts: &LikelihoodConstants) -> f64 {
        consts.base + self.k as f64 * consts.half_ln_c_beta
            - 0.5 * self.log_det_u
            - consts.exponent * (0.5 * (consts.d + self.q)).ln()
    }
}

/// Collapsed log likelihood from explicit design columns; errors carry `gene`.
pub fn log_marginal_likelihood_design(
    y: &[f64],
    design: &[&[u8]],
    consts: &LikelihoodConstants,
    gene: usize,
) -> Result<f64> {
    GeneLikelihoodWork::build(y, design, consts)
        .map(|w| w.log_value(consts))
        .map_err(|e| Error::GeneNumerical {
            gene,
            reason: e.to_string(),
        })
}

/// `log f(Y_g | xi, r_g)` with intercept, slab coefficients and error variance
/// integrated out.
pub fn log_marginal_likelihood(
    y: &[f64],
    xi: &LatentStateMatrix,
    r_g: &[u8],
    hyper: &RegressionHyper,
) -> Result<f64> {
    if xi.n_samples() != y.len() || xi.n_probes() != r_g.len() {
        return Err(Error::Dimension(format!(
            "response length {}, states {}x{}, selection length {}",
            y.len(),
            xi.n_samples(),
            xi.n_probes(),
            r_g.len()
        )));
    }
    let consts = LikelihoodConstants::new(y.len(), hyper);
    let design: Vec<&[u8]> = r_g
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == 1)
        .map(|(m, _)| xi.column(m))
        .collect();
    GeneLikelihoodWork::build(y, &design, &consts).map(|w| w.log_value(&consts))
}

#[inline]
pub fn log_normal_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// `sum_{i,m} log N(X_im; eta_{xi_im}, sigma_{xi_im}^2)`.
pub fn log_emission(
    x: &DMatrix<f64>,
    xi: &LatentStateMatrix,
    means: &[f64; NUM_STATES],
    sds: &[f64; NUM_STATES],
) -> Result<f64> {
    if x.nrows() != xi.n_samples() || x.ncols() != xi.n_probes() {
        return Err(Error::Dimension(format!(
            "X is {}x{} but states are {}x{}",
            x.nrows(),
            x.ncols(),
            xi.n_samples(),
            xi.n_probes()
        )));
    }
    let mut total = 0.0;
    for m in 0..x.ncols() {
        for i in 0..x.nrows() {
            let j = usize::from(xi.get(i, m) - 1);
            total += log_normal_density(x[(i, m)], means[j], sds[j]);
        }
    }
    Ok(total)
}

/// Log probability of one sample's state path under the Markov chain started
/// from its stationary law. Zero-probability transitions give `-inf`.
pub fn log_state_prior(
    xi_row: &[u8],
    transition: &[[f64; NUM_STATES]; NUM_STATES],
    stationary: &[f64; NUM_STATES],
) -> f64 {
    let Some(&first) = xi_row.first() else {
        return 0.0;
    };
    let mut total = stationary[usize::from(first - 1)].ln();
    for w in xi_row.windows(2) {
        total += transition[usize::from(w[0] - 1)][usize::from(w[1] - 1)].ln();
    }
    total
}

/// Normalized left eigenvector of `transition` for eigenvalue 1.
pub fn stationary_distribution(
    transition: &[[f64; NUM_STATES]; NUM_STATES],
) -> Result<[f64; NUM_STATES]> {
    // Solve (A' - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut system = Matrix4::<f64>::zeros();
    for r in 0..NUM_STATES {
        for c in 0..NUM_STATES {
            system[(r, c)] = transition[c][r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..NUM_STATES {
        system[(NUM_STATES - 1, c)] = 1.0;
    }
    let rhs = Vector4::new(0.0, 0.0, 0.0, 1.0);
    let mut pi = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("stationary distribution: singular system".into()))?;
    // One power step cleans up the LU residual.
    let mut next = Vector4::<f64>::zeros();
    for c in 0..NUM_STATES {
        next[c] = (0..NUM_STATES).map(|r| pi[r] * transition[r][c]).sum();
    }
    let total: f64 = next.iter().sum();
    pi = next / total;
    if pi.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::Numerical(format!(
            "stationary distribution has non-positive entries: {:?}",
            pi.as_slice()
        )));
    }
    Ok([pi[0], pi[1], pi[2], pi[3]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper() -> RegressionHyper {
        RegressionHyper {
            c_beta: 10.0,
            c_mu: 1e-6,
            delta: 3.0,
            d: Some(0.05),
            ..RegressionHyper::default()
        }
    }

    /// q via an explicit inverse, independent of the Cholesky route.
    fn q_by_inverse(y: &[f64], design: &[&[u8]], h: &RegressionHyper) -> f64 {
        let n = y.len();
        let k = design.len();
        let hmat =
            DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / (n as f64 + h.c_mu));
        let yv = DVector::from_column_slice(y);
        let mut xr = DMatrix::<f64>::zeros(n, k);
        for (a, col) in design.iter().enumerate() {
            for i in 0..n {
                xr[(i, a)] = f64::from(col[i]);
            }
        }
        let u = DMatrix::<f64>::identity(k, k) * h.c_beta + xr.transpose() * &hmat * &xr;
        let uinv = u.try_inverse().unwrap();
        let a = (yv.transpose() * &hmat * &yv)[(0, 0)];
        let b = (yv.transpose() * &hmat * &xr * uinv * xr.transpose() * &hmat * &yv)[(0, 0)];
        a - b
    }

    #[test]
    fn zero_response_closed_form() {
        let xi = LatentStateMatrix::from_rows(&[vec![1, 2], vec![2, 3], vec![3, 4]]).unwrap();
        let got = log_marginal_likelihood(&[0.0; 3], &xi, &[0, 0], &hyper()).unwrap();
        let expected = -1.5 * (2.0 * std::f64::consts::PI).ln()
            + 0.5 * (1e-6f64 / (1e-6 + 3.0)).ln()
            + ln_gamma(3.0)
            + 1.5 * 0.025f64.ln()
            - ln_gamma(1.5)
            - 3.0 * 0.025f64.ln();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn column_order_does_not_matter() {
        let xi = LatentStateMatrix::from_rows(&[
            vec![1, 2, 4],
            vec![2, 2, 3],
            vec![3, 1, 2],
            vec![2, 4, 2],
            vec![4, 3, 1],
        ])
        .unwrap();
        let y = [0.3, -1.2, 0.8, 0.1, -0.4];
        let consts = LikelihoodConstants::new(5, &hyper());
        let a =
            log_marginal_likelihood_design(&y, &[xi.column(0), xi.column(2)], &consts, 0).unwrap();
        let b =
            log_marginal_likelihood_design(&y, &[xi.column(2), xi.column(0)], &consts, 0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn empty_selection_ignores_states() {
        let y = [0.3, -1.2, 0.8];
        let xi1 = LatentStateMatrix::from_rows(&[vec![1, 2], vec![2, 3], vec![3, 4]]).unwrap();
        let xi2 = LatentStateMatrix::filled(3, 2, 2).unwrap();
        let a = log_marginal_likelihood(&y, &xi1, &[0, 0], &hyper()).unwrap();
        let b = log_marginal_likelihood(&y, &xi2, &[0, 0], &hyper()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_column_leaves_q_unchanged() {
        let xi = LatentStateMatrix::from_rows(&[vec![1, 1], vec![2, 2], vec![3, 3], vec![2, 2]])
            .unwrap();
        let y = [0.5, -0.1, 0.9, -1.3];
        let consts = LikelihoodConstants::new(4, &hyper());
        let one = GeneLikelihoodWork::build(&y, &[xi.column(0)], &consts).unwrap();
        let two = GeneLikelihoodWork::build(&y, &[xi.column(0), xi.column(1)], &consts).unwrap();
        assert_eq!(two.k, 2);
        // A collinear copy only shrinks the effective slab precision, so q moves
        // by O(c_beta / (x'Hx)); with c_beta tiny it must vanish.
        let tiny = RegressionHyper {
            c_beta: 1e-9,
            ..hyper()
        };
        let consts = LikelihoodConstants::new(4, &tiny);
        let one_t = GeneLikelihoodWork::build(&y, &[xi.column(0)], &consts).unwrap();
        let two_t = GeneLikelihoodWork::build(&y, &[xi.column(0), xi.column(1)], &consts).unwrap();
        assert!((one_t.q - two_t.q).abs() < 1e-8, "{} {}", one_t.q, two_t.q);
        assert!(one.q <= one.yhy);
    }

    #[test]
    fn cholesky_q_matches_inverse_q() {
        let xi = LatentStateMatrix::from_rows(&[
            vec![1, 2, 4],
            vec![2, 2, 3],
            vec![3, 1, 2],
            vec![2, 4, 2],
            vec![4, 3, 1],
            vec![2, 2, 2],
        ])
        .unwrap();
        let y = [0.3, -1.2, 0.8, 0.1, -0.4, 2.0];
        let h = hyper();
        let consts = LikelihoodConstants::new(6, &h);
        let design = [xi.column(0), xi.column(1), xi.column(2)];
        let work = GeneLikelihoodWork::build(&y, &design, &consts).unwrap();
        let reference = q_by_inverse(&y, &design, &h);
        assert!((work.q - reference).abs() <= 1e-8 * reference.abs());
    }

    #[test]
    fn emission_single_cell() {
        let x = DMatrix::from_element(1, 1, 0.0);
        let xi = LatentStateMatrix::filled(1, 1, 2).unwrap();
        let v = log_emission(&x, &xi, &[-0.65, 0.0, 0.65, 1.5], &[0.1; 4]).unwrap();
        let expected = (1.0 / (0.1 * (2.0 * std::f64::consts::PI).sqrt())).ln();
        assert!(
            (v - expected).abs() < 1e-12 && (v - 1.3836).abs() < 1e-4,
            "{v}"
        );
    }

    #[test]
    fn emission_at_mean_and_additivity() {
        let means = [-0.65, 0.0, 0.65, 1.5];
        let sds = [0.2, 0.1, 0.1, 0.3];
        let x = DMatrix::from_element(3, 4, -0.65);
        let xi = LatentStateMatrix::filled(3, 4, 1).unwrap();
        let v = log_emission(&x, &xi, &means, &sds).unwrap();
        let per = -(0.2 * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((v - 12.0 * per).abs() < 1e-10);

        let xa = DMatrix::from_row_slice(2, 2, &[0.1, 0.7, -0.5, 1.4]);
        let xia = LatentStateMatrix::from_rows(&[vec![2, 3], vec![1, 4]]).unwrap();
        let top = log_emission(
            &xa.rows(0, 1).into_owned(),
            &LatentStateMatrix::from_rows(&[vec![2, 3]]).unwrap(),
            &means,
            &sds,
        )
        .unwrap();
        let bottom = log_emission(
            &xa.rows(1, 1).into_owned(),
            &LatentStateMatrix::from_rows(&[vec![1, 4]]).unwrap(),
            &means,
            &sds,
        )
        .unwrap();
        let whole = log_emission(&xa, &xia, &means, &sds).unwrap();
        assert!((whole - top - bottom).abs() < 1e-12);
    }

    #[test]
    fn state_prior_examples() {
        let uniform = [[0.25; 4]; 4];
        let pi = stationary_distribution(&uniform).unwrap();
        assert!(pi.iter().all(|p| (p - 0.25).abs() < 1e-15));
        assert!((log_state_prior(&[3], &uniform, &pi) - 0.25f64.ln()).abs() < 1e-15);
        let row = [1, 4, 2, 2, 3];
        assert!((log_state_prior(&row, &uniform, &pi) - 5.0 * 0.25f64.ln()).abs() < 1e-12);

        let a = simulation_matrix();
        let pi = stationary_distribution(&a).unwrap();
        let v = log_state_prior(&[2, 2, 2], &a, &pi);
        assert!((v - (pi[1].ln() + 2.0 * 0.002f64.ln())).abs() < 1e-12);
    }

    fn simulation_matrix() -> [[f64; 4]; 4] {
        crate::simulate::simulation_transition()
    }

    #[test]
    fn stationary_is_left_fixed_point() {
        let a = simulation_matrix();
        let pi = stationary_distribution(&a).unwrap();
        let total: f64 = pi.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for c in 0..4 {
            let v: f64 = (0..4).map(|r| pi[r] * a[r][c]).sum();
            assert!((v - pi[c]).abs() < 1e-10);
        }
    }

    #[test]
    fn doubly_stochastic_has_uniform_law() {
        let a = [
            [0.1, 0.2, 0.3, 0.4],
            [0.4, 0.1, 0.2, 0.3],
            [0.3, 0.4, 0.1, 0.2],
            [0.2, 0.3, 0.4, 0.1],
        ];
        let pi = stationary_distribution(&a).unwrap();
        assert!(pi.iter().all(|p| (p - 0.25).abs() < 1e-12));
    }
}
