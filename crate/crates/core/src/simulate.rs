//! Synthetic benchmark generator and scoring against its ground truth.
//!
//! A dataset is built in four steps from a single seeded stream: latent
//! states, CGH log-ratios, the true association pattern with its effect
//! sizes, and finally the responses.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssociationMatrix, LatentStateMatrix, ObservedData, NEUTRAL, NUM_STATES};
use crate::sampler::draw_state;

/// Transition matrix used to generate states, with each printed row
/// rescaled to sum to one (two of the printed rows do not).
pub fn simulation_transition() -> [[f64; NUM_STATES]; NUM_STATES] {
    let raw = [
        [0.75, 0.18, 0.05, 0.02],
        [0.4955, 0.002, 0.4955, 0.007],
        [0.02, 0.18, 0.70, 0.01],
        [0.0001, 0.3028, 0.10, 0.597],
    ];
    raw.map(|row| {
        let total: f64 = row.iter().sum();
        row.map(|p| p / total)
    })
}

/// Residual noise of the responses: one sd shared by all genes or one per gene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSd {
    Shared(f64),
    PerGene(Vec<f64>),
}

impl NoiseSd {
    pub fn for_gene(&self, g: usize) -> f64 {
        match self {
            NoiseSd::Shared(s) => *s,
            NoiseSd::PerGene(v) => v[g],
        }
    }
}

/// Everything needed to generate one synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub samples: usize,
    pub genes: usize,
    pub probes: usize,
    /// Number of probes whose states vary across samples.
    pub varied: usize,
    /// Number of true associations.
    pub associations: usize,
    pub noise_sd: NoiseSd,
    pub beta_mean: f64,
    pub beta_sd: f64,
    /// How many effects come from the weak law instead of `beta_mean`.
    pub low_signal_count: usize,
    pub low_signal_mean: f64,
    pub low_signal_sd: f64,
    /// Place all associations on one gene as two runs of adjacent probes.
    pub clustered: bool,
    pub intercept_sd: f64,
    pub emission_means: [f64; NUM_STATES],
    pub emission_sds: [f64; NUM_STATES],
    pub transition: [[f64; NUM_STATES]; NUM_STATES],
    /// Mean length of the stretches of adjacent varied probes.
    pub stretch_mean: f64,
    /// Fraction of samples perturbed in each sparsely varied probe.
    pub sparse_fraction: f64,
    /// Distance between consecutive probes; the fragment spans all probes.
    pub probe_spacing: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec::scenario1()
    }
}

impl ScenarioSpec {
    /// Strong, scattered effects.
    pub fn scenario1() -> Self {
        ScenarioSpec {
            samples: 100,
            genes: 100,
            probes: 1000,
            varied: 250,
            associations: 20,
            noise_sd: NoiseSd::Shared(0.1),
            beta_mean: 2.0,
            beta_sd: 0.3,
            low_signal_count: 6,
            low_signal_mean: 0.5,
            low_signal_sd: 0.3,
            clustered: false,
            intercept_sd: 0.1,
            emission_means: [-0.65, 0.0, 0.65, 1.5],
            emission_sds: [0.1, 0.1, 0.1, 0.2],
            transition: simulation_transition(),
            stretch_mean: 5.0,
            sparse_fraction: 0.1,
            probe_spacing: 1000.0,
            seed: 1,
        }
    }

    /// Weak effects clustered on one gene.
    pub fn scenario2() -> Self {
        ScenarioSpec {
            beta_mean: 0.5,
            low_signal_count: 0,
            clustered: true,
            ..ScenarioSpec::scenario1()
        }
    }

    /// Scenario 1 shrunk to a size that runs in minutes.
    pub fn scaled_scenario1() -> Self {
        ScenarioSpec {
            samples: 50,
            genes: 20,
            probes: 120,
            varied: 30,
            associations: 8,
            low_signal_count: 2,
            ..ScenarioSpec::scenario1()
        }
    }

    /// Scenario 2 at the same reduced size.
    pub fn scaled_scenario2() -> Self {
        ScenarioSpec {
            beta_mean: 0.5,
            low_signal_count: 0,
            clustered: true,
            noise_sd: NoiseSd::Shared(0.5),
            ..ScenarioSpec::scaled_scenario1()
        }
    }

    pub fn fragment_length(&self) -> f64 {
        self.probes as f64 * self.probe_spacing
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.probes)
            .map(|m| m as f64 * self.probe_spacing)
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Invalid(msg));
        if self.samples < 2 || self.genes < 1 || self.probes < 2 {
            return fail(format!(
                "need samples >= 2, genes >= 1, probes >= 2; got {}, {}, {}",
                self.samples, self.genes, self.probes
            ));
        }
        if self.varied >= self.probes {
            return fail(format!(
                "varied probes ({}) must be fewer than probes ({})",
                self.varied, self.probes
            ));
        }
        if self.associations > self.genes * self.varied {
            return fail(format!(
                "{} associations do not fit in {} genes x {} varied probes",
                self.associations, self.genes, self.varied
            ));
        }
        if self.low_signal_count > self.associations {
            return fail(format!(
                "low_signal_count ({}) exceeds associations ({})",
                self.low_signal_count, self.associations
            ));
        }
        match &self.noise_sd {
            NoiseSd::Shared(s) if !(*s >= 0.0 && s.is_finite()) => {
                return fail(format!("noise_sd must be nonnegative, got {s}"));
            }
            NoiseSd::PerGene(v) => {
                if v.len() != self.genes {
                    return fail(format!(
                        "noise_sd has {} entries for {} genes",
                        v.len(),
                        self.genes
                    ));
                }
                if let Some(s) = v.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
                    return fail(format!("noise_sd must be nonnegative, got {s}"));
                }
            }
            _ => {}
        }
        for (name, v) in [
            ("beta_sd", self.beta_sd),
            ("low_signal_sd", self.low_signal_sd),
            ("intercept_sd", self.intercept_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if self
            .emission_sds
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return fail("emission_sds must be nonnegative".into());
        }
        if !(self.stretch_mean >= 1.0) {
            return fail(format!(
                "stretch_mean must be at least 1, got {}",
                self.stretch_mean
            ));
        }
        if !(0.0..=1.0).contains(&self.sparse_fraction) {
            return fail(format!(
                "sparse_fraction must lie in [0, 1], got {}",
                self.sparse_fraction
            ));
        }
        if !(self.probe_spacing > 0.0 && self.probe_spacing.is_finite()) {
            return fail(format!(
                "probe_spacing must be positive, got {}",
                self.probe_spacing
            ));
        }
        crate::model::check_transition(&self.transition)
    }
}

/// Generating values of one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub xi: LatentStateMatrix,
    pub r: AssociationMatrix,
    /// G x M effect sizes, zero wherever `r` is zero.
    pub beta: DMatrix<f64>,
    pub mu: Vec<f64>,
    /// Sorted indices of the varied probes.
    pub varied: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SimulatedDataset {
    pub data: ObservedData,
    pub truth: GroundTruth,
}

/// Generates a full dataset from `spec.seed`. Responses are left unstandardized.
pub fn simulate(spec: &ScenarioSpec) -> Result<SimulatedDataset> {
    spec.check()?;
    let mut rng = crate::seeded_rng(spec.seed);
    let (xi, varied) = simulate_xi(spec, &mut rng)?;
    let x = simulate_x(&xi, &spec.emission_means, &spec.emission_sds, &mut rng);
    let (r, beta) = simulate_r_beta(spec, &varied, &mut rng)?;
    let (y, mu) = simulate_y(&xi, &beta, spec, &mut rng);
    let data = ObservedData::new(y, x, spec.positions(), spec.fragment_length())?;
    Ok(SimulatedDataset {
        data,
        truth: GroundTruth {
            xi,
            r,
            beta,
            mu,
            varied,
        },
    })
}

/// Picks the varied probes: stretches of adjacent probes first, topped up
/// with uniformly chosen singletons.
fn choose_varied<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Vec<usize> {
    let (m_total, target) = (spec.probes, spec.varied);
    let mut chosen = vec![false; m_total];
    let mut count = 0;
    let stretch = Geometric::new(1.0 / spec.stretch_mean).expect("checked stretch_mean");
    for _ in 0..target.div_ceil(5) {
        let start = rng.random_range(0..m_total);
        let len = (stretch.sample(rng) + 1).min(target as u64) as usize;
        for m in start..(start + len).min(m_total) {
            if count == target {
                break;
            }
            if !chosen[m] {
                chosen[m] = true;
                count += 1;
            }
        }
    }
    let rest: Vec<usize> = (0..m_total).filter(|&m| !chosen[m]).collect();
    for k in index::sample(rng, rest.len(), target - count) {
        chosen[rest[k]] = true;
    }
    (0..m_total).filter(|&m| chosen[m]).collect()
}

/// Latent states: neutral everywhere except on the varied probes, where
/// every sample follows the Markov chain, and on half of the remaining probes,
/// where a small fraction of samples take one step away from neutral.
pub fn simulate_xi<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<(LatentStateMatrix, Vec<usize>)> {
    let (n, m_total) = (spec.samples, spec.probes);
    let mut xi = LatentStateMatrix::filled(n, m_total, NEUTRAL)?;
    if spec.varied == 0 {
        return Ok((xi, Vec::new()));
    }
    let a = &spec.transition;
    let pi = crate::likelihood::stationary_distribution(a)?;
    let varied = choose_varied(spec, rng);
    for i in 0..n {
        let mut prev = draw_state(rng, &pi);
        xi.set(i, varied[0], prev);
        for &m in &varied[1..] {
            prev = draw_state(rng, &a[prev as usize - 1]);
            xi.set(i, m, prev);
        }
    }
    let mut is_varied = vec![false; m_total];
    for &m in &varied {
        is_varied[m] = true;
    }
    let others: Vec<usize> = (0..m_total).filter(|&m| !is_varied[m]).collect();
    let extra = (m_total - spec.varied) / 2;
    let rows = (spec.sparse_fraction * n as f64).ceil() as usize;
    let mut extra_cols: Vec<usize> = index::sample(rng, others.len(), extra)
        .into_iter()
        .map(|k| others[k])
        .collect();
    extra_cols.sort_unstable();
    for m in extra_cols {
        for i in index::sample(rng, n, rows.min(n)) {
            xi.set(i, m, draw_state(rng, &a[NEUTRAL as usize - 1]));
        }
    }
    Ok((xi, varied))
}

/// Log-ratios drawn independently from the emission law of each cell's state.
pub fn simulate_x<R: Rng + ?Sized>(
    xi: &LatentStateMatrix,
    means: &[f64; NUM_STATES],
    sds: &[f64; NUM_STATES],
    rng: &mut R,
) -> DMatrix<f64> {
    let (n, m_total) = (xi.n_samples(), xi.n_probes());
    let mut x = DMatrix::zeros(n, m_total);
    for m in 0..m_total {
        for (i, &s) in xi.column(m).iter().enumerate() {
            let j = s as usize - 1;
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            x[(i, m)] = means[j] + sds[j] * z;
        }
    }
    x
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Start positions of runs of `len` consecutive varied probes.
fn run_starts(is_varied: &[bool], len: usize) -> Vec<usize> {
    if len == 0 || len > is_varied.len() {
        return Vec::new();
    }
    (0..=is_varied.len() - len)
        .filter(|&s| is_varied[s..s + len].iter().all(|&v| v))
        .collect()
}

/// Two disjoint, non-touching runs of varied probes of the given lengths.
fn clustered_columns<R: Rng + ?Sized>(
    is_varied: &[bool],
    first: usize,
    second: usize,
    rng: &mut R,
) -> Option<Vec<usize>> {
    let mut starts = run_starts(is_varied, first);
    if second == 0 {
        let s = *starts.get(rng.random_range(0..starts.len().max(1)))?;
        return Some((s..s + first).collect());
    }
    // Shuffle so that the first workable placement is a uniform pick.
    for k in (1..starts.len()).rev() {
        starts.swap(k, rng.random_range(0..=k));
    }
    for s1 in starts {
        let options: Vec<usize> = run_starts(is_varied, second)
            .into_iter()
            .filter(|&s2| s2 + second < s1 || s2 > s1 + first)
            .collect();
        if !options.is_empty() {
            let s2 = options[rng.random_range(0..options.len())];
            let mut cols: Vec<usize> = (s1..s1 + first).chain(s2..s2 + second).collect();
            cols.sort_unstable();
            return Some(cols);
        }
    }
    None
}

/// True associations and their effects. Only varied probes are used.
pub fn simulate_r_beta<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    varied: &[usize],
    rng: &mut R,
) -> Result<(AssociationMatrix, DMatrix<f64>)> {
    let (g_total, m_total, l) = (spec.genes, spec.probes, spec.associations);
    let mut r = AssociationMatrix::zeros(g_total, m_total);
    let mut beta = DMatrix::zeros(g_total, m_total);
    if l == 0 {
        return Ok((r, beta));
    }
    if l > g_total * varied.len() {
        return Err(Error::Invalid(format!(
            "{l} associations do not fit in {} varied probes",
            varied.len()
        )));
    }
    let cells: Vec<(usize, usize)> = if spec.clustered {
        let mut is_varied = vec![false; m_total];
        for &m in varied {
            is_varied[m] = true;
        }
        let g = rng.random_range(0..g_total);
        let cols = clustered_columns(&is_varied, l.div_ceil(2), l / 2, rng).ok_or_else(|| {
            Error::Invalid(format!(
                "no room for two separate runs of {} and {} adjacent varied probes",
                l.div_ceil(2),
                l / 2
            ))
        })?;
        cols.into_iter().map(|m| (g, m)).collect()
    } else {
        let width = varied.len();
        index::sample(rng, g_total * width, l)
            .into_iter()
            .map(|k| (k / width, varied[k % width]))
            .collect()
    };
    let strong =
        Normal::new(spec.beta_mean, spec.beta_sd).map_err(|e| Error::Invalid(e.to_string()))?;
    let weak = Normal::new(spec.low_signal_mean, spec.low_signal_sd)
        .map_err(|e| Error::Invalid(e.to_string()))?;
    for (k, &(g, m)) in cells.iter().enumerate() {
        let magnitude = if k < spec.low_signal_count {
            weak.sample(rng)
        } else {
            strong.sample(rng)
        };
        r.set(g, m, true);
        beta[(g, m)] = random_sign(rng) * magnitude;
    }
    Ok((r, beta))
}

/// Responses `Y_ig = mu_g + sum_m xi_im beta_gm + eps_ig`; returns `(Y, mu)`.
pub fn simulate_y<R: Rng + ?Sized>(
    xi: &LatentStateMatrix,
    beta: &DMatrix<f64>,
    spec: &ScenarioSpec,
    rng: &mut R,
) -> (DMatrix<f64>, Vec<f64>) {
    let (n, g_total) = (xi.n_samples(), beta.nrows());
    let mu: Vec<f64> = (0..g_total)
        .map(|_| spec.intercept_sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let mut y = DMatrix::zeros(n, g_total);
    for g in 0..g_total {
        let sd = spec.noise_sd.for_gene(g);
        let effects: Vec<(usize, f64)> = (0..beta.ncols())
            .filter(|&m| beta[(g, m)] != 0.0)
            .map(|m| (m, beta[(g, m)]))
            .collect();
        for i in 0..n {
            let signal: f64 = effects
                .iter()
                .map(|&(m, b)| f64::from(xi.get(i, m)) * b)
                .sum();
            let eps: f64 = rng.sample(rand_distr::StandardNormal);
            y[(i, g)] = mu[g] + signal + sd * eps;
        }
    }
    (y, mu)
}

/// Scores of a selection (and optionally a state calling) against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    /// NaN when there are no true associations.
    pub sensitivity: f64,
    /// NaN when every entry is a true association.
    pub specificity: f64,
    pub detections: usize,
    pub xi_misclassified: Option<usize>,
    pub xi_misclassified_percent: Option<f64>,
}

pub fn evaluate(
    selected: &AssociationMatrix,
    truth: &AssociationMatrix,
    xi_calls: Option<(&LatentStateMatrix, &LatentStateMatrix)>,
) -> Result<Metrics> {
    if selected.n_genes() != truth.n_genes() || selected.n_probes() != truth.n_probes() {
        return Err(Error::Dimension(format!(
            "selection is {}x{} but truth is {}x{}",
            selected.n_genes(),
            selected.n_probes(),
            truth.n_genes(),
            truth.n_probes()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&s, &t) in selected.as_slice().iter().zip(truth.as_slice()) {
        match (s == 1, t == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| {
        if b == 0 {
            f64::NAN
        } else {
            a as f64 / b as f64
        }
    };
    let (xi_misclassified, xi_misclassified_percent) = match xi_calls {
        Some((called, actual)) => {
            if called.n_samples() != actual.n_samples() || called.n_probes() != actual.n_probes() {
                return Err(Error::Dimension(
                    "state call and truth differ in shape".into(),
                ));
            }
            let wrong = called
                .as_slice()
                .iter()
                .zip(actual.as_slice())
                .filter(|(a, b)| a != b)
                .count();
            let cells = called.as_slice().len();
            (Some(wrong), Some(100.0 * wrong as f64 / cells as f64))
        }
        None => (None, None),
    };
    Ok(Metrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        detections: tp + fp,
        xi_misclassified,
        xi_misclassified_percent,
    })
}
