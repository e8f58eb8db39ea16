//! `cnvassoc simulate`: write a synthetic dataset and its ground truth.

use std::path::{Path, PathBuf};

use clap::Args;
use cnvassoc_core::io::config::RunConfig;
use cnvassoc_core::io::manifest::{hash_files, Manifest};
use cnvassoc_core::io::tsv::{
    labels, write_associations, write_positions, write_real_matrix, write_states,
};
use cnvassoc_core::io::{read_to_string, write_atomic};
use cnvassoc_core::simulate::{simulate, SimulatedDataset};
use cnvassoc_core::{Error, ScenarioSpec};
use log::info;

use crate::{create_dir, CliResult, OutArgs};

pub const Y_FILE: &str = "Y.tsv";
pub const X_FILE: &str = "X.tsv";
pub const POSITIONS_FILE: &str = "pos.tsv";
pub const XI_TRUE_FILE: &str = "xi_true.tsv";
pub const R_TRUE_FILE: &str = "R_true.tsv";
pub const BETA_TRUE_FILE: &str = "beta_true.tsv";
pub const SPEC_FILE: &str = "spec.toml";
pub const FIT_TEMPLATE_FILE: &str = "fit.toml";

/// Named starting points for a scenario spec.
pub const PRESETS: &[&str] = &[
    "scenario1",
    "scenario2",
    "scaled_scenario1",
    "scaled_scenario2",
];

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (TOML). It may name a `preset` and override any of its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Start from a named preset instead of the file's.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    pub preset: Option<String>,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn preset(name: &str) -> Option<ScenarioSpec> {
    Some(match name {
        "scenario1" => ScenarioSpec::scenario1(),
        "scenario2" => ScenarioSpec::scenario2(),
        "scaled_scenario1" => ScenarioSpec::scaled_scenario1(),
        "scaled_scenario2" => ScenarioSpec::scaled_scenario2(),
        _ => return None,
    })
}

/// Resolves a scenario from TOML text: the named preset (default
/// `scenario1`) with every field in the text laid over it.
pub fn parse_spec(text: &str, preset_override: Option<&str>) -> Result<ScenarioSpec, Error> {
    let mut table: toml::Table =
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {}", e.message())))?;
    let named = match table.remove("preset") {
        Some(toml::Value::String(s)) => Some(s),
        Some(other) => {
            return Err(Error::Config(format!(
                "scenario preset must be a name, got {other}"
            )))
        }
        None => None,
    };
    let name = preset_override
        .map(str::to_string)
        .or(named)
        .unwrap_or_else(|| "scenario1".into());
    let base = preset(&name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset {name:?}; expected one of {}",
            PRESETS.join(", ")
        ))
    })?;
    let mut merged = toml::Table::try_from(&base).expect("scenario serializes");
    merged.extend(table);
    let spec: ScenarioSpec = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("scenario: {}", e.message())))?;
    spec.check()
        .map_err(|e| Error::Config(format!("scenario: {e}")))?;
    Ok(spec)
}

/// Writes the data, truth, resolved spec, a fit template and the manifest.
pub fn write_dataset(dir: &Path, spec: &ScenarioSpec, sim: &SimulatedDataset) -> CliResult<()> {
    create_dir(dir)?;
    let data = &sim.data;
    let truth = &sim.truth;
    let samples = labels("s", data.n_samples());
    let genes = labels("g", data.n_genes());
    let probes = labels("p", data.n_probes());
    write_real_matrix(&dir.join(Y_FILE), "sample", &samples, &genes, data.y())?;
    write_real_matrix(&dir.join(X_FILE), "sample", &samples, &probes, data.x())?;
    write_positions(&dir.join(POSITIONS_FILE), data.positions())?;
    write_states(&dir.join(XI_TRUE_FILE), &truth.xi)?;
    write_associations(&dir.join(R_TRUE_FILE), &truth.r)?;
    write_real_matrix(
        &dir.join(BETA_TRUE_FILE),
        "gene",
        &genes,
        &probes,
        &truth.beta,
    )?;

    let spec_text = toml::to_string(spec).expect("scenario serializes");
    write_atomic(&dir.join(SPEC_FILE), spec_text.as_bytes())?;

    let mut template = RunConfig::default();
    template.apply_overrides(&[format!("data.fragment_length={:?}", data.fragment_length())])?;
    write_atomic(&dir.join(FIT_TEMPLATE_FILE), template.to_toml().as_bytes())?;

    let data_hash = hash_files(&[
        &dir.join(Y_FILE),
        &dir.join(X_FILE),
        &dir.join(POSITIONS_FILE),
    ])?;
    let mut manifest = Manifest::new("simulate", spec.seed, data_hash);
    manifest.details = serde_json::json!({
        "samples": spec.samples,
        "genes": spec.genes,
        "probes": spec.probes,
        "associations": truth.r.count_ones(),
        "fragment_length": data.fragment_length(),
    });
    manifest.write(dir)?;
    Ok(())
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let text = match &args.spec {
        Some(path) => read_to_string(path)?,
        None => String::new(),
    };
    let mut spec = parse_spec(&text, args.preset.as_deref())?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let dir = args.out.resolve("simulate");
    info!(
        "simulating n={} G={} M={} with seed {} into {}",
        spec.samples,
        spec.genes,
        spec.probes,
        spec.seed,
        dir.display()
    );
    let sim = simulate(&spec)?;
    write_dataset(&dir, &spec, &sim)
}
