//! `export-map`: per-language component means with coordinates, as CSV
//! ready for plotting elsewhere. Languages without coordinates are
//! skipped (they remain in inference).

use super::{load_extract_artifacts, load_traces};
use crate::config::FileConfig;
use crate::error::CliError;
use crate::manifest::{write_text, Manifest};
use clap::Args;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Directory produced by `fit`.
    #[arg(long = "fit")]
    pub fit_dir: PathBuf,
    /// Directory produced by `extract`.
    #[arg(long = "extract")]
    pub extract_dir: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn run(args: MapArgs, _file: &FileConfig) -> Result<(), CliError> {
    let artifacts = load_extract_artifacts(&args.extract_dir)?;
    let traces = load_traces(&args.fit_dir)?;
    let samples: Vec<_> = traces.iter().flat_map(|t| t.samples.iter()).collect();
    let k = samples[0].theta[0].len();

    let mut csv = String::from("glottocode,latitude,longitude");
    for comp in 0..k {
        csv.push_str(&format!(
            ",theta{comp}_mean,theta{comp}_q025,theta{comp}_q975"
        ));
    }
    csv.push('\n');

    let mut rows = 0;
    for (lang_idx, lang) in artifacts.languages.iter().enumerate() {
        let Some(coords) = &lang.coords else { continue };
        let mut means = Vec::with_capacity(k);
        let mut row = format!("{},{},{}", lang.glottocode, coords.latitude, coords.longitude);
        for comp in 0..k {
            let mut values: Vec<f64> = samples
                .iter()
                .map(|s| s.theta[lang_idx][comp])
                .collect();
            values.sort_by(f64::total_cmp);
            let mean = isogloss::stats::mean(&values);
            means.push(mean);
            row.push_str(&format!(
                ",{:.6},{:.6},{:.6}",
                mean,
                quantile(&values, 0.025),
                quantile(&values, 0.975)
            ));
        }
        let total: f64 = means.iter().sum();
        debug_assert!((total - 1.0).abs() < 1e-9, "theta means must sum to 1");
        csv.push_str(&row);
        csv.push('\n');
        rows += 1;
    }

    write_text(&args.out.join("map.csv"), &csv)?;
    let mut manifest = Manifest::new("export-map", None, serde_json::json!({ "rows": rows }));
    manifest.record_input(&args.fit_dir.join("traces.jsonl"))?;
    manifest.record_input(&args.extract_dir.join("languages.json"))?;
    manifest.write(&args.out)?;
    eprintln!("export-map: {rows} languages with coordinates");
    Ok(())
}
