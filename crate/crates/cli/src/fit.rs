//! `cnvassoc fit`: run the sampler and write the posterior summaries.

use std::path::{Path, PathBuf};

use clap::Args;
use cnvassoc_core::io::checkpoint::{self, Checkpoint};
use cnvassoc_core::io::config::RunConfig;
use cnvassoc_core::io::manifest::{hash_files, Manifest};
use cnvassoc_core::io::tsv::{read_data, write_states};
use cnvassoc_core::io::write_atomic;
use cnvassoc_core::model::validate;
use cnvassoc_core::{Chain, Error, PosteriorSummary, ValidatedContext};
use log::{info, warn};

use crate::output::*;
use crate::{create_dir, CliError, CliResult, OutArgs};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Run configuration (TOML with dotted keys). Defaults apply without one.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set sampler.iterations=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Same as `--set sampler.seed=N`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Same as `--set regression.alpha=A`; `inf` selects the independent prior.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Same as `--set sampler.iterations=N`.
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Same as `--set sampler.burn_in=N`.
    #[arg(long)]
    pub burn_in: Option<u64>,
    /// Same as `--set sampler.thin=N`.
    #[arg(long)]
    pub thin: Option<u64>,
    /// Same as `--set inference.fdr=F`.
    #[arg(long)]
    pub fdr: Option<f64>,
    /// Write a checkpoint every N sweeps.
    #[arg(long, value_name = "N")]
    pub checkpoint_every: Option<u64>,
    /// Stop after N completed sweeps, leaving a checkpoint to resume from.
    #[arg(long, value_name = "N")]
    pub stop_after: Option<u64>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

impl FitArgs {
    /// All overrides in the order they apply; dedicated flags come last.
    fn overrides(&self) -> Vec<String> {
        let mut all = self.set.clone();
        let flags = [
            ("sampler.seed", self.seed.map(|v| v.to_string())),
            ("regression.alpha", self.alpha.clone()),
            ("sampler.iterations", self.iterations.map(|v| v.to_string())),
            ("sampler.burn_in", self.burn_in.map(|v| v.to_string())),
            ("sampler.thin", self.thin.map(|v| v.to_string())),
            ("inference.fdr", self.fdr.map(|v| format!("{v:?}"))),
        ];
        all.extend(
            flags
                .into_iter()
                .filter_map(|(k, v)| v.map(|v| format!("{k}={v}"))),
        );
        all
    }
}

/// Resolves the configuration: defaults, then the file, then flags.
pub fn resolve_config(args: &FitArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&args.overrides())?;
    cfg.check().map_err(|e| match e {
        Error::Config(_) => CliError::Core(e),
        other => CliError::Core(Error::Config(other.to_string())),
    })?;
    for (key, value, source) in cfg.resolved() {
        info!("{key} = {value} ({source})");
    }
    Ok(cfg)
}

/// Reads the data named by `cfg` and returns the model inputs and the data hash.
pub fn load_inputs(cfg: &RunConfig) -> CliResult<(ValidatedContext, String)> {
    let d = &cfg.data;
    let data_hash = hash_files(&[&d.y, &d.x, &d.positions])?;
    let mut data = read_data(&d.y, &d.x, &d.positions, d.fragment_length)?;
    if d.standardize {
        data = data.standardized();
    }
    info!(
        "data: n={} G={} M={} fragment length {}",
        data.n_samples(),
        data.n_genes(),
        data.n_probes(),
        data.fragment_length()
    );
    let ctx = validate(
        data,
        cfg.regression.clone(),
        cfg.hmm.clone(),
        cfg.sampler.clone(),
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    Ok((ctx, data_hash))
}

fn resume(
    dir: &Path,
    ctx: ValidatedContext,
    config_hash: &str,
    data_hash: &str,
) -> CliResult<Chain> {
    let path = dir.join(CHECKPOINT_FILE);
    let ck = Checkpoint::read(&path)?;
    if ck.meta.config_hash != config_hash {
        return Err(CliError::Usage(format!(
            "{} was written with a different configuration (hash {}, now {config_hash})",
            path.display(),
            ck.meta.config_hash
        )));
    }
    if ck.meta.data_hash != data_hash {
        return Err(CliError::Usage(format!(
            "{} was written for different data (hash {}, now {data_hash})",
            path.display(),
            ck.meta.data_hash
        )));
    }
    info!(
        "resuming from {} at sweep {}",
        path.display(),
        ck.meta.iteration
    );
    Ok(ck.restore(ctx)?)
}

fn write_manifest(
    dir: &Path,
    cfg: &RunConfig,
    config_hash: &str,
    data_hash: &str,
    chain: &Chain,
) -> CliResult<()> {
    let mut manifest = Manifest::new("fit", cfg.sampler.seed, data_hash.to_string());
    manifest.config_hash = Some(config_hash.to_string());
    manifest.details = serde_json::json!({
        "iterations": cfg.sampler.iterations,
        "burn_in": cfg.sampler.burn_in,
        "thin": cfg.sampler.thin,
        "completed_iterations": chain.iteration(),
        "finished": chain.is_finished(),
        "fdr": cfg.fdr,
    });
    manifest.write(dir)?;
    Ok(())
}

/// Writes every result table for a finished chain.
pub fn write_results(dir: &Path, chain: &Chain, fdr: f64) -> CliResult<PosteriorSummary> {
    let trace = chain.trace();
    let summary = PosteriorSummary::new(&trace, fdr)?;
    write_gene_probe(&dir.join(PPI_FILE), &summary.ppi)?;
    write_gene_probe(&dir.join(QVALUES_FILE), &summary.q_values)?;
    write_selected(
        &dir.join(SELECTED_FILE),
        &summary.selection,
        &summary.ppi,
        &summary.q_values,
    )?;
    write_states(&dir.join(XI_MODAL_FILE), &summary.xi_modal)?;
    write_hmm(&dir.join(HMM_FILE), &summary.hmm)?;
    write_trace(&dir.join(TRACE_FILE), &trace)?;
    write_acceptance(&dir.join(ACCEPTANCE_FILE), &trace.acceptance)?;
    Ok(summary)
}

pub fn run(args: &FitArgs) -> CliResult<()> {
    let cfg = resolve_config(args)?;
    let config_hash = cfg.hash();
    let (ctx, data_hash) = load_inputs(&cfg)?;
    let dir = args.out.resolve("fit");
    create_dir(&dir)?;
    write_atomic(&dir.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;

    let mut chain = if args.resume {
        resume(&dir, ctx, &config_hash, &data_hash)?
    } else {
        Chain::new(ctx)?
    };
    let total = cfg.sampler.iterations;
    let stop = args.stop_after.unwrap_or(total).min(total);
    let step = args.checkpoint_every.filter(|&k| k > 0).unwrap_or(u64::MAX);
    let checkpoint_path = dir.join(CHECKPOINT_FILE);
    info!("sampling sweeps {}..{stop} of {total}", chain.iteration());
    while chain.iteration() < stop {
        let next = chain.iteration().saturating_add(step).min(stop);
        chain.run_until(next)?;
        checkpoint::save(&checkpoint_path, &chain, &config_hash, &data_hash)?;
    }
    checkpoint::save(&checkpoint_path, &chain, &config_hash, &data_hash)?;
    write_manifest(&dir, &cfg, &config_hash, &data_hash, &chain)?;

    if !chain.is_finished() {
        info!(
            "stopped after {} of {total} sweeps; continue with --resume",
            chain.iteration()
        );
        return Ok(());
    }
    let summary = write_results(&dir, &chain, cfg.fdr)?;
    for (label, proposed, accepted) in chain.acceptance().rows() {
        if proposed > 0 {
            info!("{label}: accepted {accepted} of {proposed}");
        }
    }
    if summary.selection.selected.count_ones() == 0 {
        warn!("no associations selected at FDR {}", cfg.fdr);
    }
    info!(
        "selected {} associations (PPI threshold {}, estimated FDR {:.4}); results in {}",
        summary.selection.selected.count_ones(),
        summary.selection.threshold,
        summary.selection.realized_fdr,
        dir.display()
    );
    Ok(())
}
