//! `shuffle-test`: refit on label-shuffled data and compare posterior β
//! against the real fit with one-tailed Z-tests.

use super::{load_extract_artifacts, load_traces};
use crate::config::FileConfig;
use crate::error::CliError;
use crate::manifest::{read_text, write_text, Manifest};
use clap::Args;
use isogloss::diagnostics::{
    beta_z_test, shuffle_languages, summarize_samples, ShuffleOutcome, ShuffleReport,
    DEFAULT_N_SHUFFLES,
};
use isogloss::model::fit_with_languages;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct ShuffleArgs {
    /// Directory produced by `fit` on the real data.
    #[arg(long = "fit")]
    pub fit_dir: PathBuf,
    /// Directory produced by `extract`.
    #[arg(long = "extract")]
    pub extract_dir: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of shuffled refits.
    #[arg(long)]
    pub shuffles: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: ShuffleArgs, file: &FileConfig) -> Result<(), CliError> {
    let n_shuffles = file.resolve(args.shuffles, "shuffles", DEFAULT_N_SHUFFLES)?;
    let seed = file.resolve(args.seed, "shuffle_seed", 11u64)?;

    let artifacts = load_extract_artifacts(&args.extract_dir)?;
    let real_traces = load_traces(&args.fit_dir)?;
    let settings: super::fit::FitSettings =
        serde_json::from_str(&read_text(&args.fit_dir.join("fit_config.json"))?)
            .map_err(CliError::data)?;
    let beta_real: Vec<f64> = real_traces.iter().flat_map(|t| t.beta_samples()).collect();

    let mut shuffles = Vec::with_capacity(n_shuffles);
    for s in 0..n_shuffles {
        let shuffle_seed = seed.wrapping_add(s as u64);
        let mut rng = ChaCha12Rng::seed_from_u64(shuffle_seed);
        let shuffled = shuffle_languages(&artifacts.observations, &mut rng);

        let prior = settings.build_prior(&artifacts.collection)?;
        let mut config = settings.model_config(prior);
        // distinct optimizer seeds per shuffle, derived from the base seed
        config.seed = settings.seed.wrapping_add(1000 + s as u64);
        let results = fit_with_languages(
            &shuffled,
            artifacts.languages.len(),
            &artifacts.collection,
            &config,
        )
        .map_err(CliError::inference)?;
        let beta_shuffled: Vec<f64> = results
            .iter()
            .flat_map(|r| r.trace.beta_samples())
            .collect();
        let (z, p) = beta_z_test(&beta_real, &beta_shuffled).map_err(CliError::data)?;
        eprintln!(
            "shuffle-test: shuffle {s}: mean beta {:.4} vs real {:.4}, z = {z:.3}, p = {p:.3e}",
            isogloss::stats::mean(&beta_shuffled),
            isogloss::stats::mean(&beta_real)
        );
        shuffles.push(ShuffleOutcome {
            shuffle_seed,
            beta_shuffled: summarize_samples(&beta_shuffled),
            z,
            p,
        });
    }

    let report = ShuffleReport {
        n_shuffles,
        beta_real: summarize_samples(&beta_real),
        shuffles,
    };
    write_text(
        &args.out.join("shuffle_report.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;

    let mut manifest = Manifest::new(
        "shuffle-test",
        Some(seed),
        serde_json::json!({ "shuffles": n_shuffles }),
    );
    manifest.record_input(&args.fit_dir.join("traces.jsonl"))?;
    manifest.record_input(&args.extract_dir.join("observations.jsonl"))?;
    manifest.write(&args.out)?;
    Ok(())
}
