pub mod extract;
pub mod fit;
pub mod map;
pub mod ppc;
pub mod shuffle;

use crate::error::CliError;
use crate::manifest::read_text;
use isogloss::changes::{observations_from_jsonl, ChangeCollection, WordObservation};
use isogloss::corpus::LanguageEntry;
use isogloss::model::{traces_from_jsonl, PosteriorTrace};
use std::path::Path;

/// Artifacts written by `extract`, as consumed by the later stages.
pub struct ExtractArtifacts {
    pub collection: ChangeCollection,
    pub observations: Vec<WordObservation>,
    pub languages: Vec<LanguageEntry>,
}

pub fn load_extract_artifacts(dir: &Path) -> Result<ExtractArtifacts, CliError> {
    let collection: ChangeCollection =
        serde_json::from_str(&read_text(&dir.join("collection.json"))?)
            .map_err(CliError::data)?;
    let observations = observations_from_jsonl(&read_text(&dir.join("observations.jsonl"))?)
        .map_err(CliError::data)?;
    let languages: Vec<LanguageEntry> =
        serde_json::from_str(&read_text(&dir.join("languages.json"))?).map_err(CliError::data)?;
    Ok(ExtractArtifacts {
        collection,
        observations,
        languages,
    })
}

pub fn load_traces(fit_dir: &Path) -> Result<Vec<PosteriorTrace>, CliError> {
    let traces =
        traces_from_jsonl(&read_text(&fit_dir.join("traces.jsonl"))?).map_err(CliError::data)?;
    if traces.is_empty() {
        return Err(CliError::data_msg("trace file contains no samples"));
    }
    Ok(traces)
}
