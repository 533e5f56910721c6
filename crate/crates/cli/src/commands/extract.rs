//! `extract`: corpus TSV → change collection + per-word observations.

use crate::config::FileConfig;
use crate::error::CliError;
use crate::manifest::{write_text, Manifest};
use clap::Args;
use isogloss::align::{
    em_fit_scores, needleman_wunsch, to_sound_classes, ClassMap, DEFAULT_EM_ITERATIONS,
};
use isogloss::changes::{
    default_whitelist, extract_rules, filter_and_index, observations_to_jsonl, WordRules,
    DEFAULT_MIN_COUNT,
};
use isogloss::corpus::{load_corpus_with, SuffixTable, TokenMap};
use serde::Serialize;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Corpus data TSV (etymon_id, glottocode, oia_form, nia_form, gloss, is_verb).
    #[arg(long)]
    pub data: PathBuf,
    /// Language metadata TSV (glottocode, name, latitude, longitude).
    #[arg(long)]
    pub meta: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Orthography-to-token map TSV (defaults to the shipped map).
    #[arg(long)]
    pub token_map: Option<PathBuf>,
    /// Segment-to-class map TSV (defaults to the shipped map).
    #[arg(long)]
    pub class_map: Option<PathBuf>,
    /// Verb suffix table TSV (defaults to the shipped table).
    #[arg(long)]
    pub suffixes: Option<PathBuf>,
    /// Comma-separated source-segment whitelist (defaults to the 16
    /// built-in sounds).
    #[arg(long)]
    pub whitelist: Option<String>,
    /// Keep rule types occurring strictly more than this many times.
    #[arg(long)]
    pub min_count: Option<u64>,
    /// EM iteration cap for similarity learning.
    #[arg(long)]
    pub em_iterations: Option<usize>,
}

#[derive(Serialize)]
struct ExtractStats {
    n_rows_rejected: usize,
    n_words: usize,
    n_languages: usize,
    per_language_words: BTreeMap<String, usize>,
    rules_extracted: usize,
    pairs_kept: usize,
    flat_size: usize,
    words_with_events: usize,
    words_dropped: usize,
}

pub fn run(args: ExtractArgs, file: &FileConfig) -> Result<(), CliError> {
    let min_count = file.resolve(args.min_count, "min_count", DEFAULT_MIN_COUNT)?;
    let em_iterations =
        file.resolve(args.em_iterations, "em_iterations", DEFAULT_EM_ITERATIONS)?;
    let whitelist_arg = file.resolve_opt(args.whitelist, "whitelist")?;
    let whitelist: BTreeSet<String> = match &whitelist_arg {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => default_whitelist(),
    };

    let token_map = match &args.token_map {
        Some(path) => TokenMap::from_path(path).map_err(CliError::data)?,
        None => TokenMap::shipped(),
    };
    let suffixes = match &args.suffixes {
        Some(path) => SuffixTable::from_path(path, &token_map).map_err(CliError::data)?,
        None => SuffixTable::shipped(&token_map),
    };
    let class_map = match &args.class_map {
        Some(path) => ClassMap::from_path(path).map_err(CliError::data)?,
        None => ClassMap::shipped(),
    };

    let outcome =
        load_corpus_with(&args.data, &args.meta, &token_map, &suffixes).map_err(CliError::data)?;
    let table = &outcome.table;
    if table.n_words() == 0 {
        // still write the rejection report so the failure is inspectable
        write_text(&args.out.join("errors.jsonl"), &outcome.report_jsonl())?;
        return Err(CliError::data_msg(format!(
            "corpus is empty after validation ({} rows rejected)",
            outcome.rejected.len()
        )));
    }

    let score_table =
        em_fit_scores(table, &class_map, em_iterations).map_err(CliError::data)?;

    let mut words = Vec::with_capacity(table.n_words());
    let mut rules_extracted = 0usize;
    for (word_id, pair) in table.pairs.iter().enumerate() {
        let src = to_sound_classes(&pair.oia_form, &class_map).map_err(CliError::data)?;
        let tgt = to_sound_classes(&pair.nia_form, &class_map).map_err(CliError::data)?;
        let alignment = needleman_wunsch(&src, &tgt, &score_table);
        let rules = extract_rules(pair, &alignment);
        rules_extracted += rules.len();
        words.push(WordRules {
            word_id,
            language: table
                .language_index(&pair.language)
                .expect("validated corpus resolves languages"),
            rules,
        });
    }

    let (collection, observations) =
        filter_and_index(&words, &whitelist, min_count).map_err(CliError::data)?;

    let stats = ExtractStats {
        n_rows_rejected: outcome.rejected.len(),
        n_words: table.n_words(),
        n_languages: table.n_languages(),
        per_language_words: table
            .languages
            .iter()
            .map(|l| (l.glottocode.clone(), l.word_count))
            .collect(),
        rules_extracted,
        pairs_kept: collection.n_pairs(),
        flat_size: collection.flat_size,
        words_with_events: observations.len(),
        words_dropped: table.n_words() - observations.len(),
    };

    let out = &args.out;
    write_text(
        &out.join("collection.json"),
        &serde_json::to_string_pretty(&collection).expect("collection serializes"),
    )?;
    write_text(&out.join("observations.jsonl"), &observations_to_jsonl(&observations))?;
    write_text(
        &out.join("languages.json"),
        &serde_json::to_string_pretty(&table.languages).expect("languages serialize"),
    )?;
    write_text(&out.join("errors.jsonl"), &outcome.report_jsonl())?;
    write_text(&out.join("score_table.tsv"), &score_table.to_tsv())?;
    write_text(
        &out.join("stats.json"),
        &serde_json::to_string_pretty(&stats).expect("stats serialize"),
    )?;

    let mut manifest = Manifest::new(
        "extract",
        None,
        serde_json::json!({
            "min_count": min_count,
            "em_iterations": em_iterations,
            "whitelist": whitelist.iter().cloned().collect::<Vec<_>>(),
            "token_map": args.token_map.as_ref().map(|p| p.display().to_string()),
            "class_map": args.class_map.as_ref().map(|p| p.display().to_string()),
            "suffixes": args.suffixes.as_ref().map(|p| p.display().to_string()),
        }),
    );
    manifest.record_input(&args.data)?;
    manifest.record_input(&args.meta)?;
    manifest.write(out)?;

    eprintln!(
        "extract: {} words, {} languages, {} pairs kept ({} slots), {} rows rejected",
        stats.words_with_events,
        stats.n_languages,
        stats.pairs_kept,
        stats.flat_size,
        stats.n_rows_rejected
    );
    Ok(())
}
