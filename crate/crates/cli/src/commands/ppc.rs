//! `ppc`: posterior predictive checks against the fitted traces — the two
//! entropy metrics plus the four-regime simulation accuracy comparison.

use super::{load_extract_artifacts, load_traces};
use crate::config::FileConfig;
use crate::error::CliError;
use crate::manifest::{read_text, write_text, Manifest};
use clap::Args;
use isogloss::diagnostics::{
    assignment_entropy_ppc, simulate_and_score, AccuracyReport, EntropyReport, PPCConfig,
    PpcSource, Regime, DEFAULT_PPC_ITERATIONS,
};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct PpcArgs {
    /// Directory produced by `fit`.
    #[arg(long = "fit")]
    pub fit_dir: PathBuf,
    /// Directory produced by `extract`.
    #[arg(long = "extract")]
    pub extract_dir: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Simulation iterations T.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// One of the four regime names, or "all".
    #[arg(long)]
    pub regime: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Existing shuffle_report.json to embed in the PPC report.
    #[arg(long)]
    pub shuffle_report: Option<PathBuf>,
}

#[derive(Serialize)]
struct PpcReport {
    iterations: usize,
    seed: u64,
    entropy: EntropyReport,
    accuracy: Vec<AccuracyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shuffle: Option<isogloss::diagnostics::ShuffleReport>,
}

pub fn run(args: PpcArgs, file: &FileConfig) -> Result<(), CliError> {
    let iterations = file.resolve(args.iterations, "ppc_iterations", DEFAULT_PPC_ITERATIONS)?;
    let seed = file.resolve(args.seed, "ppc_seed", 7u64)?;
    let regime_arg = file.resolve(args.regime, "regime", "all".to_string())?;
    let regimes: Vec<Regime> = if regime_arg == "all" {
        Regime::ALL.to_vec()
    } else {
        vec![regime_arg
            .parse::<Regime>()
            .map_err(|e| CliError::Usage(e.to_string()))?]
    };

    let artifacts = load_extract_artifacts(&args.extract_dir)?;
    let traces = load_traces(&args.fit_dir)?;
    let settings: super::fit::FitSettings =
        serde_json::from_str(&read_text(&args.fit_dir.join("fit_config.json"))?)
            .map_err(CliError::data)?;
    let labels: Vec<String> = artifacts
        .languages
        .iter()
        .map(|l| l.glottocode.clone())
        .collect();

    let entropy = assignment_entropy_ppc(
        &artifacts.observations,
        &artifacts.collection,
        &traces,
        iterations,
        seed,
    )
    .map_err(CliError::data)?;

    let mut accuracy = Vec::new();
    for (i, regime) in regimes.iter().enumerate() {
        let config = PPCConfig {
            iterations,
            regime: *regime,
            seed: seed.wrapping_add(i as u64 + 1),
        };
        let report = match regime {
            Regime::PosteriorNoAssignment | Regime::PosteriorWithAssignment => simulate_and_score(
                &artifacts.observations,
                &artifacts.collection,
                &labels,
                PpcSource::Posterior(&traces),
                &config,
            ),
            Regime::FullPrior | Regime::SparsePrior => {
                let prior = settings.build_prior(&artifacts.collection)?;
                simulate_and_score(
                    &artifacts.observations,
                    &artifacts.collection,
                    &labels,
                    PpcSource::Prior {
                        prior: &prior,
                        n_components: settings.k,
                    },
                    &config,
                )
            }
        }
        .map_err(CliError::data)?;
        accuracy.push(report);
    }

    let shuffle = match &args.shuffle_report {
        Some(path) => Some(
            serde_json::from_str(&read_text(path)?).map_err(CliError::data)?,
        ),
        None => None,
    };
    let out = &args.out;
    let report = PpcReport {
        iterations,
        seed,
        entropy,
        accuracy,
        shuffle,
    };
    write_text(
        &out.join("ppc_report.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;

    let mut lang_csv = String::from("language,regime,n_events,accuracy\n");
    let mut dist_csv = String::from("pair,regime,n_events,accuracy\n");
    for acc in &report.accuracy {
        for row in &acc.per_language {
            lang_csv.push_str(&format!(
                "{},{},{},{:.6}\n",
                row.language,
                acc.regime.name(),
                row.n_events,
                row.accuracy
            ));
        }
        for row in &acc.per_distribution {
            dist_csv.push_str(&format!(
                "\"{}\",{},{},{:.6}\n",
                row.pair,
                acc.regime.name(),
                row.n_events,
                row.accuracy
            ));
        }
    }
    write_text(&out.join("accuracy_per_language.csv"), &lang_csv)?;
    write_text(&out.join("accuracy_per_distribution.csv"), &dist_csv)?;

    let mut manifest = Manifest::new(
        "ppc",
        Some(seed),
        serde_json::json!({
            "iterations": iterations,
            "regimes": regimes.iter().map(|r| r.name()).collect::<Vec<_>>(),
        }),
    );
    manifest.record_input(&args.fit_dir.join("traces.jsonl"))?;
    manifest.record_input(&args.extract_dir.join("observations.jsonl"))?;
    manifest.write(out)?;

    for acc in &report.accuracy {
        eprintln!(
            "ppc: {} mean accuracy {:.4}",
            acc.regime.name(),
            acc.overall_mean
        );
    }
    eprintln!(
        "ppc: entropy of averages {:.4}, average of entropies {:.4}",
        report.entropy.mean_entropy_of_averages, report.entropy.mean_average_of_entropies
    );
    Ok(())
}
