//! `fit`: extraction artifacts → posterior traces, ELBO history, summary.

use super::load_extract_artifacts;
use crate::config::FileConfig;
use crate::error::CliError;
use crate::manifest::{write_text, Manifest};
use clap::Args;
use isogloss::changes::ChangeCollection;
use isogloss::model::{
    align_component_labels, fit_with_languages, rhat, traces_to_jsonl, ChainResult, ModelConfig,
    PosteriorTrace,
};
use isogloss::priors::{build_covariance, CovarianceSpec, DirichletSpec, FeatureTable, Prior};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Directory produced by `extract`.
    #[arg(long = "extract")]
    pub extract_dir: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Prior over sound-change distributions: dirichlet | logistic-normal.
    #[arg(long)]
    pub prior: Option<String>,
    /// Dirichlet concentration (default 0.01).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Cross-distribution dispersion multiplier (default 4).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Diagonal constant added to the covariance (default 100).
    #[arg(long)]
    pub diag_sigma: Option<f64>,
    /// Feature file for the covariance construction (defaults to shipped).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Number of dialect components.
    #[arg(long)]
    pub k: Option<usize>,
    /// Independent optimization chains.
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Total optimizer steps (overrides --epochs).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Passes over the data when --steps is not given (default 50).
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trace_samples: Option<usize>,
    /// Cache file for the built covariance (logistic-normal prior only),
    /// keyed by a hash of the collection and feature file.
    #[arg(long)]
    pub cov_cache: Option<PathBuf>,
}

/// Resolved fit settings, written alongside the traces so downstream
/// commands (shuffle-test in particular) can refit identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSettings {
    pub prior_kind: String,
    pub alpha: f64,
    pub eta: f64,
    pub diag_sigma: f64,
    pub features: Option<String>,
    pub cov_cache: Option<String>,
    pub k: usize,
    pub chains: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub trace_samples: usize,
}

impl FitSettings {
    pub fn build_prior(&self, collection: &ChangeCollection) -> Result<Prior, CliError> {
        match self.prior_kind.as_str() {
            "dirichlet" => Ok(Prior::Dirichlet(DirichletSpec { alpha: self.alpha })),
            "logistic-normal" | "logistic_normal" => {
                let features = match &self.features {
                    Some(path) => {
                        FeatureTable::from_path(Path::new(path)).map_err(CliError::data)?
                    }
                    None => FeatureTable::shipped(),
                };
                let key =
                    CovarianceSpec::cache_key(collection, &features, self.eta, self.diag_sigma);
                if let Some(cache) = &self.cov_cache {
                    if let Some(spec) = CovarianceSpec::read_cache(Path::new(cache), key)
                        .map_err(CliError::data)?
                    {
                        return Ok(Prior::LogisticNormal(spec));
                    }
                }
                let spec = build_covariance(collection, &features, self.eta, self.diag_sigma)
                    .map_err(CliError::data)?;
                if let Some(cache) = &self.cov_cache {
                    spec.write_cache(Path::new(cache), key).map_err(CliError::data)?;
                }
                Ok(Prior::LogisticNormal(spec))
            }
            other => Err(CliError::Usage(format!(
                "unknown prior {other:?} (expected dirichlet or logistic-normal)"
            ))),
        }
    }

    pub fn model_config(&self, prior: Prior) -> ModelConfig {
        ModelConfig {
            k: self.k,
            prior,
            n_chains: self.chains,
            minibatch: self.minibatch,
            learning_rate: self.learning_rate,
            moment_weight_range: (0.7, 0.8),
            steps: self.steps,
            mc_samples: self.mc_samples,
            seed: self.seed,
            trace_samples: self.trace_samples,
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

#[derive(Serialize)]
struct ChainSummary {
    chain_id: usize,
    failed: bool,
    steps_run: usize,
    incidents: u32,
    beta_mean: f64,
}

#[derive(Serialize)]
struct Summary {
    settings: FitSettings,
    n_words: usize,
    n_languages: usize,
    chains: Vec<ChainSummary>,
    beta_mean: f64,
    beta_sd: f64,
    beta_q05: f64,
    beta_q50: f64,
    beta_q95: f64,
    theta_mean: Vec<Vec<f64>>,
    /// Per language × component, [q025, q975].
    theta_interval: Vec<Vec<[f64; 2]>>,
    phi_mean: Vec<Vec<f64>>,
    /// Per component × slot, [q025, q975].
    phi_interval: Vec<Vec<[f64; 2]>>,
    rhat_beta: Option<f64>,
    rhat_theta_below_1_1: Option<usize>,
    rhat_theta_total: Option<usize>,
    rhat_phi_below_1_1: Option<usize>,
    rhat_phi_total: Option<usize>,
}

pub fn elbo_csv(results: &[ChainResult]) -> String {
    let mut out = String::from("step,chain,elbo\n");
    for r in results {
        for (step, elbo) in r.trace.elbo_history.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", step, r.chain_id, elbo));
        }
    }
    out
}

/// Per-change posterior summary: one row per (sound-environment pair,
/// reflex) slot with each component's posterior mean and 95% interval.
fn sound_changes_csv(collection: &ChangeCollection, pooled: &PooledSummary) -> String {
    let k = pooled.phi_mean.len();
    let mut out = String::from("source,left,right,reflex");
    for comp in 0..k {
        out.push_str(&format!(",k{comp}_mean,k{comp}_q025,k{comp}_q975"));
    }
    out.push('\n');
    for (p, pair) in collection.pairs.iter().enumerate() {
        for (r, reflex) in pair.reflexes.iter().enumerate() {
            let slot = collection.slot(p, r);
            out.push_str(&format!(
                "{},{},{},{}",
                pair.source, pair.left, pair.right, reflex
            ));
            for comp in 0..k {
                let [lo, hi] = pooled.phi_interval[comp][slot];
                out.push_str(&format!(
                    ",{:.6},{:.6},{:.6}",
                    pooled.phi_mean[comp][slot], lo, hi
                ));
            }
            out.push('\n');
        }
    }
    out
}

struct PooledSummary {
    theta_mean: Vec<Vec<f64>>,
    theta_interval: Vec<Vec<[f64; 2]>>,
    phi_mean: Vec<Vec<f64>>,
    phi_interval: Vec<Vec<[f64; 2]>>,
}

fn pooled_summary(traces: &[PosteriorTrace]) -> PooledSummary {
    let samples: Vec<_> = traces.iter().flat_map(|t| t.samples.iter()).collect();
    let first = samples[0];
    let (l, k, s) = (first.theta.len(), first.theta[0].len(), first.phi[0].len());
    let stats = |values: &mut Vec<f64>| -> (f64, [f64; 2]) {
        values.sort_by(f64::total_cmp);
        (
            isogloss::stats::mean(values),
            [quantile(values, 0.025), quantile(values, 0.975)],
        )
    };
    let mut theta_mean = vec![vec![0.0; k]; l];
    let mut theta_interval = vec![vec![[0.0; 2]; k]; l];
    for lang in 0..l {
        for comp in 0..k {
            let mut values: Vec<f64> = samples.iter().map(|x| x.theta[lang][comp]).collect();
            let (mean, interval) = stats(&mut values);
            theta_mean[lang][comp] = mean;
            theta_interval[lang][comp] = interval;
        }
    }
    let mut phi_mean = vec![vec![0.0; s]; k];
    let mut phi_interval = vec![vec![[0.0; 2]; s]; k];
    for comp in 0..k {
        for slot in 0..s {
            let mut values: Vec<f64> = samples.iter().map(|x| x.phi[comp][slot]).collect();
            let (mean, interval) = stats(&mut values);
            phi_mean[comp][slot] = mean;
            phi_interval[comp][slot] = interval;
        }
    }
    PooledSummary {
        theta_mean,
        theta_interval,
        phi_mean,
        phi_interval,
    }
}

pub fn run(args: FitArgs, file: &FileConfig) -> Result<(), CliError> {
    let artifacts = load_extract_artifacts(&args.extract_dir)?;
    let n_words = artifacts.observations.len();

    let minibatch_default = 500usize.min(n_words.max(1));
    let epochs = file.resolve(args.epochs, "epochs", 50usize)?;
    let minibatch = file.resolve(args.minibatch, "minibatch", minibatch_default)?;
    let steps = match file.resolve_opt(args.steps, "steps")? {
        Some(steps) => steps,
        None => ModelConfig::epochs_to_steps(n_words, minibatch, epochs),
    };
    let settings = FitSettings {
        prior_kind: file.resolve(args.prior, "prior", "dirichlet".to_string())?,
        alpha: file.resolve(args.alpha, "alpha", 0.01)?,
        eta: file.resolve(args.eta, "eta", 4.0)?,
        diag_sigma: file.resolve(args.diag_sigma, "diag_sigma", 100.0)?,
        features: args.features.as_ref().map(|p| p.display().to_string()),
        cov_cache: args.cov_cache.as_ref().map(|p| p.display().to_string()),
        k: file.resolve(args.k, "k", 2usize)?,
        chains: file.resolve(args.chains, "chains", 4usize)?,
        minibatch,
        learning_rate: file.resolve(args.learning_rate, "learning_rate", 0.01)?,
        steps,
        mc_samples: file.resolve(args.mc_samples, "mc_samples", 4usize)?,
        seed: file.resolve(args.seed, "seed", 0u64)?,
        trace_samples: file.resolve(args.trace_samples, "trace_samples", 500usize)?,
    };

    let prior = settings.build_prior(&artifacts.collection)?;
    let config = settings.model_config(prior);
    let results = fit_with_languages(
        &artifacts.observations,
        artifacts.languages.len(),
        &artifacts.collection,
        &config,
    )
    .map_err(CliError::inference)?;

    let raw_traces: Vec<PosteriorTrace> = results.iter().map(|r| r.trace.clone()).collect();
    let traces = align_component_labels(&raw_traces);

    let usable = traces.iter().filter(|t| !t.samples.is_empty()).count();
    let report = if usable >= 2 { Some(rhat(&traces)) } else { None };

    let mut beta: Vec<f64> = traces.iter().flat_map(|t| t.beta_samples()).collect();
    beta.sort_by(f64::total_cmp);
    let beta_mean = isogloss::stats::mean(&beta);
    let beta_sd = isogloss::stats::sample_variance(&beta).sqrt();
    let pooled = pooled_summary(&traces);
    let changes_csv = sound_changes_csv(&artifacts.collection, &pooled);

    let summary = Summary {
        n_words,
        n_languages: artifacts.languages.len(),
        chains: results
            .iter()
            .map(|r| ChainSummary {
                chain_id: r.chain_id,
                failed: r.failed,
                steps_run: r.trace.elbo_history.len(),
                incidents: r.vstate.incidents,
                beta_mean: isogloss::stats::mean(&r.trace.beta_samples()),
            })
            .collect(),
        beta_mean,
        beta_sd,
        beta_q05: quantile(&beta, 0.05),
        beta_q50: quantile(&beta, 0.50),
        beta_q95: quantile(&beta, 0.95),
        theta_mean: pooled.theta_mean,
        theta_interval: pooled.theta_interval,
        phi_mean: pooled.phi_mean,
        phi_interval: pooled.phi_interval,
        rhat_beta: report.as_ref().map(|r| r.rhat_beta),
        rhat_theta_below_1_1: report.as_ref().map(|r| r.theta_below_threshold),
        rhat_theta_total: report.as_ref().map(|r| r.theta_total),
        rhat_phi_below_1_1: report.as_ref().map(|r| r.phi_below_threshold),
        rhat_phi_total: report.as_ref().map(|r| r.phi_total),
        settings: settings.clone(),
    };

    let out = &args.out;
    write_text(&out.join("traces.jsonl"), &traces_to_jsonl(&traces))?;
    write_text(&out.join("elbo.csv"), &elbo_csv(&results))?;
    write_text(&out.join("sound_changes.csv"), &changes_csv)?;
    write_text(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    write_text(
        &out.join("fit_config.json"),
        &serde_json::to_string_pretty(&settings).expect("settings serialize"),
    )?;

    let mut manifest = Manifest::new(
        "fit",
        Some(settings.seed),
        serde_json::to_value(&settings).expect("settings to json"),
    );
    manifest.record_input(&args.extract_dir.join("collection.json"))?;
    manifest.record_input(&args.extract_dir.join("observations.jsonl"))?;
    manifest.write(out)?;

    eprintln!(
        "fit: {} prior, {} chains ({} failed), pooled beta mean {:.4}",
        summary.settings.prior_kind,
        results.len(),
        results.iter().filter(|r| r.failed).count(),
        beta_mean
    );
    Ok(())
}
