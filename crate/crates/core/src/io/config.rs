//! Run configuration as dotted keys.
//!
//! A configuration file is TOML; `[sampler]\niterations = 10` and
//! `sampler.iterations = 10` are the same key. Unknown keys are rejected.
//! Command-line overrides use the same names (`--set sampler.seed=7`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use toml::Value;

use super::read_to_string;
use crate::error::{Error, Result};
use crate::inference::DEFAULT_FDR;
use crate::model::{HmmHyper, RegressionHyper, SamplerConfig, NUM_STATES};

/// Where a resolved value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Flag => "flag",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub y: PathBuf,
    pub x: PathBuf,
    pub positions: PathBuf,
    /// Length of the region the probes cover; the probe span when unset.
    pub fragment_length: Option<f64>,
    pub standardize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            y: PathBuf::from("Y.tsv"),
            x: PathBuf::from("X.tsv"),
            positions: PathBuf::from("pos.tsv"),
            fragment_length: None,
            standardize: false,
        }
    }
}

/// Everything a `fit` needs besides the data itself.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub sampler: SamplerConfig,
    pub regression: RegressionHyper,
    pub hmm: HmmHyper,
    pub fdr: f64,
    sources: BTreeMap<&'static str, Source>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            sampler: SamplerConfig::default(),
            regression: RegressionHyper::default(),
            hmm: HmmHyper::default(),
            fdr: DEFAULT_FDR,
            sources: BTreeMap::new(),
        }
    }
}

/// Every recognised key, in output order.
pub const KEYS: &[&str] = &[
    "data.y",
    "data.x",
    "data.positions",
    "data.fragment_length",
    "data.standardize",
    "sampler.iterations",
    "sampler.burn_in",
    "sampler.thin",
    "sampler.p_r",
    "sampler.p_xi",
    "sampler.p_mc",
    "sampler.rho",
    "sampler.seed",
    "sampler.moves.associations",
    "sampler.moves.states",
    "sampler.moves.emission_means",
    "sampler.moves.emission_sds",
    "sampler.moves.transitions",
    "regression.c_beta",
    "regression.c_mu",
    "regression.delta",
    "regression.d",
    "regression.e",
    "regression.f",
    "regression.alpha",
    "hmm.mean_loc",
    "hmm.mean_scale",
    "hmm.precision_shape",
    "hmm.precision_rate",
    "hmm.mean_low",
    "hmm.mean_high",
    "hmm.sd_upper",
    "hmm.dirichlet",
    "hmm.gain_floor_from_state3",
    "inference.fdr",
];

/// Keys that describe where inputs live rather than what is computed.
const LOCATION_KEYS: &[&str] = &["data.y", "data.x", "data.positions"];

fn bad(key: &str, want: &str, v: &Value) -> Error {
    Error::Config(format!("{key}: expected {want}, got {v}"))
}

fn real(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, "a number", v)),
    }
}

fn count(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(bad(key, "a non-negative integer", v)),
    }
}

fn flag(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| bad(key, "true or false", v))
}

fn path(key: &str, v: &Value) -> Result<PathBuf> {
    v.as_str()
        .map(PathBuf::from)
        .ok_or_else(|| bad(key, "a path string", v))
}

fn per_state(key: &str, v: &Value) -> Result<[f64; NUM_STATES]> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == NUM_STATES)
        .ok_or_else(|| bad(key, "an array of 4 numbers", v))?;
    let mut out = [0.0; NUM_STATES];
    for (o, x) in out.iter_mut().zip(arr) {
        *o = real(key, x)?;
    }
    Ok(out)
}

fn render_real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

fn render_states(v: &[f64; NUM_STATES]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| render_real(x)).collect();
    format!("[{}]", parts.join(", "))
}

fn render_path(p: &Path) -> String {
    Value::String(p.display().to_string()).to_string()
}

/// Parses the right-hand side of `key=value`. Bare words that are not TOML
/// literals are taken as strings so that paths need no quoting.
pub fn parse_override(assignment: &str) -> Result<(String, Value)> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key, value))
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            _ => out.push((key, v.clone())),
        }
    }
}

impl RunConfig {
    /// Reads a configuration file. Relative data paths are resolved against
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut cfg = RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            cfg.data.resolve_against(dir);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let mut entries = Vec::new();
        flatten("", &table, &mut entries);
        let mut cfg = RunConfig::default();
        for (key, value) in entries {
            cfg.set(&key, &value, Source::File)?;
        }
        Ok(cfg)
    }

    /// Applies `key=value` overrides from the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, assignments: &[S]) -> Result<()> {
        for a in assignments {
            let (key, value) = parse_override(a.as_ref())?;
            self.set(&key, &value, Source::Flag)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &Value, source: Source) -> Result<()> {
        let name = *KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
        let s = &mut self.sampler;
        let r = &mut self.regression;
        let h = &mut self.hmm;
        match name {
            "data.y" => self.data.y = path(key, v)?,
            "data.x" => self.data.x = path(key, v)?,
            "data.positions" => self.data.positions = path(key, v)?,
            "data.fragment_length" => self.data.fragment_length = Some(real(key, v)?),
            "data.standardize" => self.data.standardize = flag(key, v)?,
            "sampler.iterations" => s.iterations = count(key, v)?,
            "sampler.burn_in" => s.burn_in = count(key, v)?,
            "sampler.thin" => s.thin = count(key, v)?,
            "sampler.p_r" => s.p_r = real(key, v)?,
            "sampler.p_xi" => s.p_xi = real(key, v)?,
            "sampler.p_mc" => s.p_mc = real(key, v)?,
            "sampler.rho" => s.rho = real(key, v)?,
            "sampler.seed" => s.seed = count(key, v)?,
            "sampler.moves.associations" => s.moves.associations = flag(key, v)?,
            "sampler.moves.states" => s.moves.states = flag(key, v)?,
            "sampler.moves.emission_means" => s.moves.emission_means = flag(key, v)?,
            "sampler.moves.emission_sds" => s.moves.emission_sds = flag(key, v)?,
            "sampler.moves.transitions" => s.moves.transitions = flag(key, v)?,
            "regression.c_beta" => r.c_beta = real(key, v)?,
            "regression.c_mu" => r.c_mu = real(key, v)?,
            "regression.delta" => r.delta = real(key, v)?,
            "regression.d" => r.d = Some(real(key, v)?),
            "regression.e" => r.e = real(key, v)?,
            "regression.f" => r.f = real(key, v)?,
            "regression.alpha" => r.alpha = real(key, v)?,
            "hmm.mean_loc" => h.mean_loc = per_state(key, v)?,
            "hmm.mean_scale" => h.mean_scale = per_state(key, v)?,
            "hmm.precision_shape" => h.precision_shape = per_state(key, v)?,
            "hmm.precision_rate" => h.precision_rate = per_state(key, v)?,
            "hmm.mean_low" => h.mean_low = per_state(key, v)?,
            "hmm.mean_high" => h.mean_high = per_state(key, v)?,
            "hmm.sd_upper" => h.sd_upper = per_state(key, v)?,
            "hmm.dirichlet" => h.dirichlet = per_state(key, v)?,
            "hmm.gain_floor_from_state3" => h.gain_floor_from_state3 = flag(key, v)?,
            "inference.fdr" => self.fdr = real(key, v)?,
            _ => unreachable!("key list and match disagree on {name}"),
        }
        self.sources.insert(name, source);
        Ok(())
    }

    /// TOML text of one resolved value.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.sampler;
        let r = &self.regression;
        let h = &self.hmm;
        Some(match key {
            "data.y" => render_path(&self.data.y),
            "data.x" => render_path(&self.data.x),
            "data.positions" => render_path(&self.data.positions),
            "data.fragment_length" => self.data.fragment_length.map(render_real)?,
            "data.standardize" => self.data.standardize.to_string(),
            "sampler.iterations" => s.iterations.to_string(),
            "sampler.burn_in" => s.burn_in.to_string(),
            "sampler.thin" => s.thin.to_string(),
            "sampler.p_r" => render_real(s.p_r),
            "sampler.p_xi" => render_real(s.p_xi),
            "sampler.p_mc" => render_real(s.p_mc),
            "sampler.rho" => render_real(s.rho),
            "sampler.seed" => s.seed.to_string(),
            "sampler.moves.associations" => s.moves.associations.to_string(),
            "sampler.moves.states" => s.moves.states.to_string(),
            "sampler.moves.emission_means" => s.moves.emission_means.to_string(),
            "sampler.moves.emission_sds" => s.moves.emission_sds.to_string(),
            "sampler.moves.transitions" => s.moves.transitions.to_string(),
            "regression.c_beta" => render_real(r.c_beta),
            "regression.c_mu" => render_real(r.c_mu),
            "regression.delta" => render_real(r.delta),
            "regression.d" => render_real(r.d()),
            "regression.e" => render_real(r.e),
            "regression.f" => render_real(r.f),
            "regression.alpha" => render_real(r.alpha),
            "hmm.mean_loc" => render_states(&h.mean_loc),
            "hmm.mean_scale" => render_states(&h.mean_scale),
            "hmm.precision_shape" => render_states(&h.precision_shape),
            "hmm.precision_rate" => render_states(&h.precision_rate),
            "hmm.mean_low" => render_states(&h.mean_low),
            "hmm.mean_high" => render_states(&h.mean_high),
            "hmm.sd_upper" => render_states(&h.sd_upper),
            "hmm.dirichlet" => render_states(&h.dirichlet),
            "hmm.gain_floor_from_state3" => h.gain_floor_from_state3.to_string(),
            "inference.fdr" => render_real(self.fdr),
            _ => return None,
        })
    }

    pub fn source(&self, key: &str) -> Source {
        self.sources.get(key).copied().unwrap_or(Source::Default)
    }

    /// Resolved `(key, value, source)` for every key with a value.
    pub fn resolved(&self) -> Vec<(&'static str, String, Source)> {
        KEYS.iter()
            .filter_map(|&k| self.get(k).map(|v| (k, v, self.source(k))))
            .collect()
    }

    /// The configuration as a flat TOML file that reads back to the same values.
    pub fn to_toml(&self) -> String {
        self.resolved()
            .into_iter()
            .map(|(k, v, _)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Hash of everything that affects the computation. Input locations are
    /// left out; the data are hashed separately.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v, _) in self.resolved() {
            if !LOCATION_KEYS.contains(&k) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn check(&self) -> Result<()> {
        if !(self.fdr > 0.0 && self.fdr <= 1.0) {
            return Err(Error::Config(format!(
                "inference.fdr must be in (0, 1], got {}",
                self.fdr
            )));
        }
        if let Some(d) = self.data.fragment_length {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!(
                    "data.fragment_length must be positive, got {d}"
                )));
            }
        }
        self.sampler.check()?;
        self.regression.check()?;
        self.hmm.check()
    }
}

impl DataConfig {
    fn resolve_against(&mut self, dir: &Path) {
        for p in [&mut self.y, &mut self.x, &mut self.positions] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}
