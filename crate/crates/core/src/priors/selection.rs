//! Distance- and persistence-weighted selection prior.
//!
//! Site `m` of gene `g` is Bernoulli (with the base rate integrated against a
//! Beta(e, f)) with probability `gamma_m`, and otherwise copies its left or
//! right neighbour with probabilities `omega_left_m` and `omega_right_m`. The
//! mixture weights come from how often adjacent probes keep the same state
//! across samples, discounted by the physical distance between them.
//!
//! The joint prior over a row is taken as the product of these one-site
//! conditionals.

use crate::error::{Error, Result};
use crate::model::{AssociationMatrix, LatentStateMatrix, RegressionHyper};

/// `(e^{1 - gap/D} - 1) / (e - 1)`: 1 for coincident probes, 0 at distance `D`.
pub fn distance_factor(gap: f64, fragment_length: f64) -> Result<f64> {
    if !(gap >= 0.0 && gap <= fragment_length) {
        return Err(Error::Invalid(format!(
            "probe gap {gap} must lie in [0, {fragment_length}]"
        )));
    }
    let e = std::f64::consts::E;
    Ok(((1.0 - gap / fragment_length).exp() - 1.0) / (e - 1.0))
}

/// Persistence `s[k]` between probes `k` and `k + 1`: the distance factor of
/// the gap times the fraction of samples whose state does not change there.
pub fn persistence_weights(
    xi: &LatentStateMatrix,
    positions: &[f64],
    fragment_length: f64,
) -> Result<Vec<f64>> {
    let m_total = xi.n_probes();
    if positions.len() != m_total {
        return Err(Error::Dimension(format!(
            "{} positions for {m_total} probes",
            positions.len()
        )));
    }
    let n = xi.n_samples() as f64;
    (1..m_total)
        .map(|m| {
            let factor = distance_factor(positions[m] - positions[m - 1], fragment_length)?;
            let same = xi
                .column(m)
                .iter()
                .zip(xi.column(m - 1))
                .filter(|(a, b)| a == b)
                .count();
            Ok(factor * same as f64 / n)
        })
        .collect()
}

/// Mixture weights of one site's conditional prior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteWeights {
    pub gamma: f64,
    pub omega_left: f64,
    pub omega_right: f64,
}

impl SiteWeights {
    pub const INDEPENDENT: SiteWeights = SiteWeights {
        gamma: 1.0,
        omega_left: 0.0,
        omega_right: 0.0,
    };

    /// Weights for an interior site with persistences to its left and right
    /// neighbours. Boundary sites are always [`SiteWeights::INDEPENDENT`].
    #[inline]
    pub fn interior(s_left: f64, s_right: f64, alpha: f64) -> Self {
        if alpha == f64::INFINITY {
            return SiteWeights::INDEPENDENT;
        }
        let denom = alpha + s_left + s_right;
        SiteWeights {
            gamma: alpha / denom,
            omega_left: s_left / denom,
            omega_right: s_right / denom,
        }
    }

    /// Weights at site `m` of `m_total` given the persistence vector.
    #[inline]
    pub fn at(s: &[f64], m: usize, m_total: usize, alpha: f64) -> Self {
        if m == 0 || m + 1 >= m_total {
            SiteWeights::INDEPENDENT
        } else {
            SiteWeights::interior(s[m - 1], s[m], alpha)
        }
    }
}

/// Per-site weights for a whole row of sites.
#[derive(Clone, Debug, PartialEq)]
pub struct PersistenceWeights {
    /// `s[k]` links sites `k` and `k + 1`.
    pub s: Vec<f64>,
    pub gamma: Vec<f64>,
    pub omega_left: Vec<f64>,
    pub omega_right: Vec<f64>,
}

impl PersistenceWeights {
    pub fn site(&self, m: usize) -> SiteWeights {
        SiteWeights {
            gamma: self.gamma[m],
            omega_left: self.omega_left[m],
            omega_right: self.omega_right[m],
        }
    }
}

/// Expands persistences into per-site mixture weights. The first and last
/// sites get no neighbour weight and `gamma = 1`.
pub fn mixture_weights(s: &[f64], alpha: f64) -> PersistenceWeights {
    let m_total = s.len() + 1;
    let mut gamma = Vec::with_capacity(m_total);
    let mut omega_left = Vec::with_capacity(m_total);
    let mut omega_right = Vec::with_capacity(m_total);
    for m in 0..m_total {
        let w = SiteWeights::at(s, m, m_total, alpha);
        gamma.push(w.gamma);
        omega_left.push(w.omega_left);
        omega_right.push(w.omega_right);
    }
    PersistenceWeights {
        s: s.to_vec(),
        gamma,
        omega_left,
        omega_right,
    }
}

/// Log conditional prior of one indicator given its neighbours, with the base
/// inclusion rate integrated against Beta(e, f). Missing neighbours (sites at
/// either end) contribute nothing.
#[inline]
pub fn log_prior_r_conditional(
    r: bool,
    left: Option<bool>,
    right: Option<bool>,
    w: SiteWeights,
    e: f64,
    f: f64,
) -> f64 {
    let base = if r { e / (e + f) } else { f / (e + f) };
    let mut p = w.gamma * base;
    if left == Some(r) {
        p += w.omega_left;
    }
    if right == Some(r) {
        p += w.omega_right;
    }
    p.ln()
}

/// Sum of the one-site log conditionals over every gene and probe.
pub fn log_prior_r(
    r: &AssociationMatrix,
    xi: &LatentStateMatrix,
    positions: &[f64],
    fragment_length: f64,
    hyper: &RegressionHyper,
) -> Result<f64> {
    if r.n_probes() != xi.n_probes() {
        return Err(Error::Dimension(format!(
            "associations cover {} probes, states cover {}",
            r.n_probes(),
            xi.n_probes()
        )));
    }
    let s = persistence_weights(xi, positions, fragment_length)?;
    let weights = mixture_weights(&s, hyper.alpha);
    let m_total = r.n_probes();
    let mut total = 0.0;
    for g in 0..r.n_genes() {
        let row = r.row(g);
        for m in 0..m_total {
            let left = (m > 0).then(|| row[m - 1] == 1);
            let right = (m + 1 < m_total).then(|| row[m + 1] == 1);
            total += log_prior_r_conditional(
                row[m] == 1,
                left,
                right,
                weights.site(m),
                hyper.e,
                hyper.f,
            );
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_extremes() {
        assert_eq!(distance_factor(10.0, 10.0).unwrap(), 0.0);
        assert!((distance_factor(0.0, 10.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(distance_factor(11.0, 10.0).is_err());
    }

    #[test]
    fn persistence_examples() {
        let xi = LatentStateMatrix::from_rows(&[vec![2, 2], vec![1, 3], vec![3, 3], vec![4, 1]])
            .unwrap();
        // maximal distance
        assert_eq!(
            persistence_weights(&xi, &[0.0, 5.0], 5.0).unwrap(),
            vec![0.0]
        );
        // coincident probes, half the samples persistent
        let s = persistence_weights(&xi, &[1.0, 1.0], 5.0).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);
        let all = LatentStateMatrix::filled(4, 2, 3).unwrap();
        let s = persistence_weights(&all, &[1.0, 1.0], 5.0).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert!(persistence_weights(&all, &[0.0, 6.0], 5.0).is_err());
    }

    #[test]
    fn mixture_examples() {
        let w = mixture_weights(&[0.65, 0.65], 1.3);
        assert!((w.gamma[1] - 0.5).abs() < 1e-15);
        assert!((w.omega_left[1] - 0.25).abs() < 1e-15);
        assert!((w.omega_right[1] - 0.25).abs() < 1e-15);
        assert_eq!(w.site(0), SiteWeights::INDEPENDENT);
        assert_eq!(w.site(2), SiteWeights::INDEPENDENT);

        let w = mixture_weights(&[0.0, 0.0, 0.0], 2.0);
        assert!(w.gamma.iter().all(|&g| g == 1.0));
        let w = mixture_weights(&[0.3, 0.9, 0.4], f64::INFINITY);
        assert!(w.gamma.iter().all(|&g| g == 1.0));
        assert!(w.omega_left.iter().chain(&w.omega_right).all(|&o| o == 0.0));
    }

    #[test]
    fn conditional_examples() {
        let v = log_prior_r_conditional(true, None, None, SiteWeights::INDEPENDENT, 0.001, 0.999);
        assert!((v - 0.001f64.ln()).abs() < 1e-12);
        let w = SiteWeights {
            gamma: 0.5,
            omega_left: 0.25,
            omega_right: 0.25,
        };
        let v = log_prior_r_conditional(true, Some(true), Some(true), w, 1.0, 1.0);
        assert!((v - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn independent_all_zero_prior() {
        let r = AssociationMatrix::zeros(3, 5);
        let xi = LatentStateMatrix::filled(4, 5, 2).unwrap();
        let hyper = RegressionHyper {
            alpha: f64::INFINITY,
            e: 0.001,
            f: 0.999,
            ..RegressionHyper::default()
        };
        let pos = [0.0, 1.0, 2.0, 3.0, 4.0];
        let v = log_prior_r(&r, &xi, &pos, 10.0, &hyper).unwrap();
        assert!((v - 15.0 * 0.999f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rows_add_up() {
        let xi = LatentStateMatrix::from_rows(&[vec![2, 3, 3, 1], vec![2, 3, 3, 3]]).unwrap();
        let r = AssociationMatrix::from_rows(&[vec![0, 1, 1, 0], vec![1, 0, 0, 1]]).unwrap();
        let hyper = RegressionHyper {
            alpha: 0.7,
            e: 0.2,
            f: 0.8,
            ..RegressionHyper::default()
        };
        let pos = [0.0, 1.0, 2.5, 3.0];
        let whole = log_prior_r(&r, &xi, &pos, 5.0, &hyper).unwrap();
        let a = AssociationMatrix::from_rows(&[vec![0, 1, 1, 0]]).unwrap();
        let b = AssociationMatrix::from_rows(&[vec![1, 0, 0, 1]]).unwrap();
        let parts = log_prior_r(&a, &xi, &pos, 5.0, &hyper).unwrap()
            + log_prior_r(&b, &xi, &pos, 5.0, &hyper).unwrap();
        assert!((whole - parts).abs() < 1e-12);
    }

    #[test]
    fn state_change_is_local() {
        let rows = vec![
            vec![2, 3, 3, 1, 2, 2, 4],
            vec![2, 3, 3, 3, 2, 1, 4],
            vec![1, 1, 3, 3, 2, 2, 2],
        ];
        let xi = LatentStateMatrix::from_rows(&rows).unwrap();
        let r =
            AssociationMatrix::from_rows(&[vec![0, 1, 1, 0, 1, 1, 0], vec![1, 1, 0, 1, 0, 0, 1]])
                .unwrap();
        let pos: Vec<f64> = (0..7).map(|m| m as f64 * 3.0).collect();
        let hyper = RegressionHyper {
            alpha: 0.5,
            e: 0.3,
            f: 0.7,
            ..RegressionHyper::default()
        };
        let site_terms = |xi: &LatentStateMatrix| -> Vec<f64> {
            let s = persistence_weights(xi, &pos, 30.0).unwrap();
            let w = mixture_weights(&s, hyper.alpha);
            (0..7)
                .map(|m| {
                    (0..2)
                        .map(|g| {
                            let row = r.row(g);
                            log_prior_r_conditional(
                                row[m] == 1,
                                (m > 0).then(|| row[m - 1] == 1),
                                (m < 6).then(|| row[m + 1] == 1),
                                w.site(m),
                                hyper.e,
                                hyper.f,
                            )
                        })
                        .sum()
                })
                .collect()
        };
        let before = site_terms(&xi);
        let mut changed = xi.clone();
        changed.set(0, 3, 3);
        let after = site_terms(&changed);
        for m in 0..7 {
            if !(2..=4).contains(&m) {
                assert_eq!(before[m], after[m], "site {m} moved");
            }
        }
        let total_before = log_prior_r(&r, &xi, &pos, 30.0, &hyper).unwrap();
        let total_after = log_prior_r(&r, &changed, &pos, 30.0, &hyper).unwrap();
        let local: f64 = (2..=4).map(|m| after[m] - before[m]).sum();
        assert!((total_after - total_before - local).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(s1 in 0.0f64..=1.0, s2 in 0.0f64..=1.0, alpha in 1e-3f64..1e3) {
            let w = SiteWeights::interior(s1, s2, alpha);
            prop_assert!((w.gamma + w.omega_left + w.omega_right - 1.0).abs() < 1e-12);
        }

        #[test]
        fn conditional_is_proper(
            s1 in 0.0f64..=1.0, s2 in 0.0f64..=1.0, alpha in 1e-3f64..1e3,
            e in 1e-3f64..10.0, f in 1e-3f64..10.0,
            left in proptest::option::of(any::<bool>()),
            right in proptest::option::of(any::<bool>()),
        ) {
            let w = SiteWeights::interior(s1, s2, alpha);
            // Neighbour weight is only usable when that neighbour exists.
            let w = SiteWeights {
                gamma: w.gamma
                    + if left.is_none() { w.omega_left } else { 0.0 }
                    + if right.is_none() { w.omega_right } else { 0.0 },
                omega_left: if left.is_none() { 0.0 } else { w.omega_left },
                omega_right: if right.is_none() { 0.0 } else { w.omega_right },
            };
            let p1 = log_prior_r_conditional(true, left, right, w, e, f).exp();
            let p0 = log_prior_r_conditional(false, left, right, w, e, f).exp();
            prop_assert!((p0 + p1 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn gamma_increases_with_alpha(s1 in 1e-3f64..=1.0, s2 in 0.0f64..=1.0, a in 1e-2f64..100.0, bump in 1e-3f64..10.0) {
            let lo = SiteWeights::interior(s1, s2, a);
            let hi = SiteWeights::interior(s1, s2, a + bump);
            prop_assert!(hi.gamma > lo.gamma);
        }
    }
}
