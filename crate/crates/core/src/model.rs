//! Domain types, hyperparameter containers and input validation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of copy-number states: 1 loss, 2 neutral, 3 single gain, 4 multiple gains.
pub const NUM_STATES: usize = 4;

/// The copy-neutral state label.
pub const NEUTRAL: u8 = 2;

/// Prior mean of the gene error variance is `d / (delta - 2)`; with `delta = 3`
/// this puts it at 5% of the unit variance of a standardized response.
pub const DEFAULT_ERROR_SCALE: f64 = 0.05;

fn check_finite(matrix: &'static str, m: &DMatrix<f64>) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite {
                    matrix,
                    row: r,
                    col: c,
                });
            }
        }
    }
    Ok(())
}

/// Expression responses `Y` (n x G), log-ratio surrogates `X` (n x M), probe
/// coordinates and the total fragment length `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedData {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    positions: Vec<f64>,
    fragment_length: f64,
}

impl ObservedData {
    pub fn new(
        y: DMatrix<f64>,
        x: DMatrix<f64>,
        positions: Vec<f64>,
        fragment_length: f64,
    ) -> Result<Self> {
        let n = y.nrows();
        if n < 2 {
            return Err(Error::Dimension(format!(
                "need at least 2 samples, got {n}"
            )));
        }
        if x.nrows() != n {
            return Err(Error::Dimension(format!(
                "Y has {n} samples but X has {}",
                x.nrows()
            )));
        }
        if y.ncols() < 1 {
            return Err(Error::Dimension("need at least 1 response column".into()));
        }
        let m = x.ncols();
        if m < 2 {
            return Err(Error::Dimension(format!("need at least 2 probes, got {m}")));
        }
        if positions.len() != m {
            return Err(Error::Dimension(format!(
                "X has {m} probes but {} positions were given",
                positions.len()
            )));
        }
        check_finite("Y", &y)?;
        check_finite("X", &x)?;
        for (i, p) in positions.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite {
                    matrix: "positions",
                    row: i,
                    col: 0,
                });
            }
        }
        if let Some(i) = positions.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Invalid(format!(
                "positions must be nondecreasing: position {} < position {}",
                i + 1,
                i
            )));
        }
        if !(fragment_length.is_finite() && fragment_length > 0.0) {
            return Err(Error::Invalid(format!(
                "fragment length must be positive, got {fragment_length}"
            )));
        }
        let span = positions[m - 1] - positions[0];
        if span > fragment_length {
            return Err(Error::Invalid(format!(
                "probe span {span} exceeds fragment length {fragment_length}"
            )));
        }
        Ok(ObservedData {
            y,
            x,
            positions,
            fragment_length,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_probes(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Response column for gene `g`.
    pub fn y_column(&self, g: usize) -> &[f64] {
        let n = self.n_samples();
        &self.y.as_slice()[g * n..(g + 1) * n]
    }

    /// Log-ratio column for probe `m`.
    pub fn x_column(&self, m: usize) -> &[f64] {
        let n = self.n_samples();
        &self.x.as_slice()[m * n..(m + 1) * n]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn fragment_length(&self) -> f64 {
        self.fragment_length
    }

    /// Centers each response column and scales it to unit sample variance.
    /// Constant columns are centered only.
    pub fn standardized(mut self) -> Self {
        let n = self.n_samples();
        for mut col in self.y.column_iter_mut() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            for v in col.iter_mut() {
                *v -= mean;
                if sd > 0.0 {
                    *v /= sd;
                }
            }
        }
        self
    }
}

/// Latent copy-number states, n x M, values in 1..=4.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentStateMatrix {
    n: usize,
    m: usize,
    // column-major: cell (i, m) at m * n + i
    states: Vec<u8>,
}

impl LatentStateMatrix {
    pub fn filled(n: usize, m: usize, state: u8) -> Result<Self> {
        check_state(state, 0, 0)?;
        Ok(LatentStateMatrix {
            n,
            m,
            states: vec![state; n * m],
        })
    }

    /// Builds from row-major rows.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut states = vec![0u8; n * m];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension(format!(
                    "state row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            for (j, &s) in row.iter().enumerate() {
                check_state(s, i, j)?;
                states[j * n + i] = s;
            }
        }
        Ok(LatentStateMatrix { n, m, states })
    }

    pub fn from_fn(n: usize, m: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut states = vec![0u8; n * m];
        for j in 0..m {
            for i in 0..n {
                let s = f(i, j);
                check_state(s, i, j)?;
                states[j * n + i] = s;
            }
        }
        Ok(LatentStateMatrix { n, m, states })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_probes(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, m: usize) -> u8 {
        self.states[m * self.n + i]
    }

    /// Panics if `state` is outside 1..=4.
    #[inline]
    pub fn set(&mut self, i: usize, m: usize, state: u8) {
        assert!(
            (1..=4).contains(&state),
            "copy-number state {state} out of range"
        );
        self.states[m * self.n + i] = state;
    }

    #[inline]
    pub fn column(&self, m: usize) -> &[u8] {
        &self.states[m * self.n..(m + 1) * self.n]
    }

    pub fn row(&self, i: usize) -> Vec<u8> {
        (0..self.m).map(|m| self.get(i, m)).collect()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.states
    }
}

fn check_state(s: u8, i: usize, m: usize) -> Result<()> {
    if (1..=4).contains(&s) {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "copy-number state {s} at ({i}, {m}) is outside 1..=4"
        )))
    }
}

/// Binary gene-by-probe inclusion indicators, G x M.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssociationMatrix {
    g: usize,
    m: usize,
    // row-major: cell (g, m) at g * m_total + m
    bits: Vec<u8>,
}

impl AssociationMatrix {
    pub fn zeros(g: usize, m: usize) -> Self {
        AssociationMatrix {
            g,
            m,
            bits: vec![0; g * m],
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let g = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut bits = Vec::with_capacity(g * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension(format!(
                    "association row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            for (j, &b) in row.iter().enumerate() {
                if b > 1 {
                    return Err(Error::Invalid(format!(
                        "association entry {b} at ({i}, {j}) is not binary"
                    )));
                }
                bits.push(b);
            }
        }
        Ok(AssociationMatrix { g, m, bits })
    }

    pub fn n_genes(&self) -> usize {
        self.g
    }

    pub fn n_probes(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, g: usize, m: usize) -> bool {
        self.bits[g * self.m + m] == 1
    }

    #[inline]
    pub fn set(&mut self, g: usize, m: usize, on: bool) {
        self.bits[g * self.m + m] = u8::from(on);
    }

    #[inline]
    pub fn row(&self, g: usize) -> &[u8] {
        &self.bits[g * self.m..(g + 1) * self.m]
    }

    /// Indices of the included probes for gene `g`, ascending.
    pub fn included(&self, g: usize) -> Vec<usize> {
        self.row(g)
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(m, _)| m)
            .collect()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }
}

/// Emission and transition parameters of the copy-number HMM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    /// Row `h` is the distribution of the next state given current state `h + 1`.
    pub transition: [[f64; NUM_STATES]; NUM_STATES],
    pub means: [f64; NUM_STATES],
    pub sds: [f64; NUM_STATES],
    pub stationary: [f64; NUM_STATES],
}

impl HmmParams {
    pub fn new(
        transition: [[f64; NUM_STATES]; NUM_STATES],
        means: [f64; NUM_STATES],
        sds: [f64; NUM_STATES],
    ) -> Result<Self> {
        check_transition(&transition)?;
        for (j, s) in sds.iter().enumerate() {
            if !(s.is_finite() && *s > 0.0) {
                return Err(Error::Invalid(format!(
                    "emission sd for state {} must be positive, got {s}",
                    j + 1
                )));
            }
        }
        for (j, v) in means.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    matrix: "emission means",
                    row: j,
                    col: 0,
                });
            }
        }
        let stationary = crate::likelihood::stationary_distribution(&transition)?;
        Ok(HmmParams {
            transition,
            means,
            sds,
            stationary,
        })
    }
}

pub(crate) fn check_transition(a: &[[f64; NUM_STATES]; NUM_STATES]) -> Result<()> {
    for (h, row) in a.iter().enumerate() {
        if let Some(j) = row.iter().position(|&p| !(p.is_finite() && p > 0.0)) {
            return Err(Error::Invalid(format!(
                "transition entry ({}, {}) = {} must be strictly positive",
                h + 1,
                j + 1,
                row[j]
            )));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "transition row {} sums to {total}, not 1",
                h + 1
            )));
        }
    }
    Ok(())
}

/// Priors for the HMM: truncated normals on the emission means, truncated
/// gammas on the emission precisions, Dirichlet rows for the transitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmHyper {
    /// Prior location of each emission mean.
    pub mean_loc: [f64; NUM_STATES],
    /// Prior sd of each emission mean.
    pub mean_scale: [f64; NUM_STATES],
    /// Gamma shape for each emission precision.
    pub precision_shape: [f64; NUM_STATES],
    /// Gamma rate for each emission precision.
    pub precision_rate: [f64; NUM_STATES],
    pub mean_low: [f64; NUM_STATES],
    pub mean_high: [f64; NUM_STATES],
    /// Upper bound on each emission sd; stored on the sd scale.
    pub sd_upper: [f64; NUM_STATES],
    /// Dirichlet concentration shared by every transition row.
    pub dirichlet: [f64; NUM_STATES],
    /// Require the state-4 mean to exceed `mean_3 + sd_3` (the platform
    /// setting that keeps single gains from being called as multiple gains).
    pub gain_floor_from_state3: bool,
}

impl Default for HmmHyper {
    fn default() -> Self {
        HmmHyper {
            mean_loc: [-1.0, 0.0, 0.58, 1.0],
            mean_scale: [1.0, 1.0, 1.0, 2.0],
            precision_shape: [1.0; NUM_STATES],
            precision_rate: [1.0; NUM_STATES],
            mean_low: [f64::NEG_INFINITY, -0.1, 0.1, f64::NEG_INFINITY],
            mean_high: [-0.1, 0.1, 0.73, f64::INFINITY],
            sd_upper: [0.41, 0.41, 0.41, 1.0],
            dirichlet: [1.0; NUM_STATES],
            gain_floor_from_state3: true,
        }
    }
}

impl HmmHyper {
    /// Lower bound on each emission precision implied by `sd_upper`.
    pub fn precision_floor(&self, j: usize) -> f64 {
        self.sd_upper[j].powi(-2)
    }

    pub fn check(&self) -> Result<()> {
        for j in 0..NUM_STATES {
            let label = j + 1;
            if !self.mean_loc[j].is_finite() {
                return Err(Error::Invalid(format!(
                    "hmm mean_loc[{label}] must be finite"
                )));
            }
            for (name, v) in [
                ("mean_scale", self.mean_scale[j]),
                ("precision_shape", self.precision_shape[j]),
                ("precision_rate", self.precision_rate[j]),
                ("sd_upper", self.sd_upper[j]),
                ("dirichlet", self.dirichlet[j]),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Invalid(format!(
                        "hmm {name}[{label}] must be positive and finite, got {v}"
                    )));
                }
            }
            if self.mean_low[j].is_nan() || self.mean_high[j].is_nan() {
                return Err(Error::Invalid(format!(
                    "hmm mean bounds for state {label} are NaN"
                )));
            }
            if self.mean_low[j] >= self.mean_high[j] {
                return Err(Error::Invalid(format!(
                    "hmm mean bounds for state {label}: low {} must be < high {}",
                    self.mean_low[j], self.mean_high[j]
                )));
            }
        }
        let finite_lows: Vec<f64> = self
            .mean_low
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        if finite_lows.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(
                "finite lower bounds on emission means must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Checks emission parameters against the truncation bounds.
    pub fn check_params(&self, hmm: &HmmParams) -> Result<()> {
        for j in 0..NUM_STATES {
            let (low, high) = self.mean_bounds(j, hmm);
            if !(hmm.means[j] > low && hmm.means[j] < high) {
                return Err(Error::Invalid(format!(
                    "emission mean {} for state {} outside ({low}, {high})",
                    hmm.means[j],
                    j + 1
                )));
            }
            if hmm.sds[j] > self.sd_upper[j] {
                return Err(Error::Invalid(format!(
                    "emission sd {} for state {} exceeds {}",
                    hmm.sds[j],
                    j + 1,
                    self.sd_upper[j]
                )));
            }
        }
        Ok(())
    }

    /// Effective bounds on mean `j` given the other current parameters.
    pub fn mean_bounds(&self, j: usize, hmm: &HmmParams) -> (f64, f64) {
        let (mut low, mut high) = (self.mean_low[j], self.mean_high[j]);
        if self.gain_floor_from_state3 {
            if j == 2 {
                high = high.min(hmm.means[3] - hmm.sds[2]);
            } else if j == 3 {
                low = low.max(hmm.means[2] + hmm.sds[2]);
            }
        }
        (low, high)
    }
}

/// Hyperparameters of the regression and selection priors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionHyper {
    /// Slab precision factor.
    pub c_beta: f64,
    /// Intercept precision factor.
    pub c_mu: f64,
    /// Shape-side parameter of the gamma prior on the error precision.
    pub delta: f64,
    /// Scale-side parameter of the gamma prior on the error precision;
    /// `None` means [`DEFAULT_ERROR_SCALE`].
    pub d: Option<f64>,
    /// Beta hyperprior on the base inclusion probability.
    pub e: f64,
    pub f: f64,
    /// Dependence strength; `f64::INFINITY` gives the independent prior.
    pub alpha: f64,
}

impl Default for RegressionHyper {
    fn default() -> Self {
        RegressionHyper {
            c_beta: 10.0,
            c_mu: 1e-6,
            delta: 3.0,
            d: None,
            e: 0.001,
            f: 0.999,
            alpha: 30.0,
        }
    }
}

impl RegressionHyper {
    pub fn d(&self) -> f64 {
        self.d.unwrap_or(DEFAULT_ERROR_SCALE)
    }

    pub fn is_independent(&self) -> bool {
        self.alpha == f64::INFINITY
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [
            ("c_beta", self.c_beta),
            ("c_mu", self.c_mu),
            ("delta", self.delta),
            ("d", self.d()),
            ("e", self.e),
            ("f", self.f),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Invalid(format!(
                    "regression {name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Invalid(format!(
                "regression alpha must be positive or inf, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Which updates run in each sweep. Everything is on for a normal fit; the
/// switches exist to run partial kernels against exact oracles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveSet {
    pub associations: bool,
    pub states: bool,
    pub emission_means: bool,
    pub emission_sds: bool,
    pub transitions: bool,
}

impl Default for MoveSet {
    fn default() -> Self {
        MoveSet {
            associations: true,
            states: true,
            emission_means: true,
            emission_sds: true,
            transitions: true,
        }
    }
}

impl MoveSet {
    /// Latent states and associations only; HMM parameters stay fixed.
    pub fn frozen_hmm() -> Self {
        MoveSet {
            emission_means: false,
            emission_sds: false,
            transitions: false,
            ..MoveSet::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    /// Geometric parameter for the number of genes touched per sweep.
    pub p_r: f64,
    /// Geometric parameter for the number of samples touched per sweep.
    pub p_xi: f64,
    /// Probes neutral in more than `n * p_mc` samples are not proposed for inclusion.
    pub p_mc: f64,
    /// Probability of an add/delete move (otherwise swap).
    pub rho: f64,
    pub seed: u64,
    pub moves: MoveSet,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 500_000,
            burn_in: 350_000,
            thin: 1,
            p_r: 0.4,
            p_xi: 0.6,
            p_mc: 0.9,
            rho: 0.5,
            seed: 1,
            moves: MoveSet::default(),
        }
    }
}

impl SamplerConfig {
    pub fn check(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Invalid("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Invalid("burn_in must be < iterations".into()));
        }
        if self.thin == 0 {
            return Err(Error::Invalid("thin must be positive".into()));
        }
        for (name, v) in [("p_r", self.p_r), ("p_xi", self.p_xi)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Invalid(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        if !(self.p_mc > 0.0 && self.p_mc <= 1.0) {
            return Err(Error::Invalid(format!(
                "p_mc must be in (0, 1], got {}",
                self.p_mc
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Invalid(format!(
                "rho must be in [0, 1], got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// Number of samples the chain will retain.
    pub fn retained(&self) -> u64 {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }

    pub fn is_retained(&self, iteration: u64) -> bool {
        iteration >= self.burn_in && (iteration - self.burn_in) % self.thin == 0
    }
}

/// Checked inputs for a chain, with `d` resolved.
#[derive(Clone, Debug)]
pub struct ValidatedContext {
    pub data: ObservedData,
    pub hyper: RegressionHyper,
    pub hmm_hyper: HmmHyper,
    pub cfg: SamplerConfig,
}

pub fn validate(
    data: ObservedData,
    hyper: RegressionHyper,
    hmm_hyper: HmmHyper,
    cfg: SamplerConfig,
) -> Result<ValidatedContext> {
    hyper.check()?;
    hmm_hyper.check()?;
    cfg.check()?;
    let hyper = RegressionHyper {
        d: Some(hyper.d()),
        ..hyper
    };
    Ok(ValidatedContext {
        data,
        hyper,
        hmm_hyper,
        cfg,
    })
}
