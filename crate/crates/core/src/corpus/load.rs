//! TSV ingestion with a per-row error report.
//!
//! Data TSV columns (header row required): etymon_id, glottocode, oia_form,
//! nia_form, gloss, is_verb (0/1). Metadata TSV columns: glottocode, name,
//! latitude, longitude (coordinates may be left empty). Rejected rows are
//! returned as structured report entries, one JSON object per row when
//! serialized.

use super::normalize::{normalize_form, strip_verb_ending, SuffixTable, TokenMap};
use super::{
    merge_by_glottocode, CorpusError, CorpusTable, EtymonPair, GeoPoint, LanguoidTable, RawRecord,
    SegmentSequence,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Reason code attached to a rejected row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowReason {
    UnknownGlottocode,
    UnmappableCharacter,
    EmptyForm,
    EmptyAfterStrip,
    BadField,
}

/// One rejected data row, serializable as a JSON line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: usize,
    pub etymon_id: String,
    pub reason: RowReason,
    pub detail: String,
}

/// Result of loading: the validated table plus the rejection report.
#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub table: CorpusTable,
    pub rejected: Vec<RejectedRow>,
}

impl LoadOutcome {
    /// Render the rejection report as JSON lines.
    pub fn report_jsonl(&self) -> String {
        self.rejected
            .iter()
            .map(|r| serde_json::to_string(r).expect("report row serializes"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn header_index(header: &str, required: &[&str], path: &str) -> Result<Vec<usize>, CorpusError> {
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    required
        .iter()
        .map(|name| {
            cols.iter().position(|c| c == name).ok_or_else(|| CorpusError::Format {
                path: path.to_string(),
                message: format!("missing required column {name}"),
            })
        })
        .collect()
}

/// Parse the metadata TSV into a languoid table. Duplicate glottocodes
/// with conflicting coordinates are a fatal metadata error.
pub fn parse_meta_tsv(text: &str, path: &str) -> Result<LanguoidTable, CorpusError> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(CorpusError::Format {
            path: path.to_string(),
            message: "empty metadata file".into(),
        });
    };
    let idx = header_index(header, &["glottocode", "name", "latitude", "longitude"], path)?;
    let mut meta = LanguoidTable::default();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let get = |i: usize| cols.get(idx[i]).copied().unwrap_or("").trim();
        let glottocode = get(0).to_string();
        if glottocode.is_empty() {
            return Err(CorpusError::Format {
                path: path.to_string(),
                message: format!("line {}: empty glottocode", lineno + 1),
            });
        }
        let name = get(1).to_string();
        let (lat_raw, lon_raw) = (get(2), get(3));
        let coords = if lat_raw.is_empty() && lon_raw.is_empty() {
            None
        } else {
            let latitude: f64 = lat_raw.parse().map_err(|_| CorpusError::Format {
                path: path.to_string(),
                message: format!("line {}: bad latitude {lat_raw:?}", lineno + 1),
            })?;
            let longitude: f64 = lon_raw.parse().map_err(|_| CorpusError::Format {
                path: path.to_string(),
                message: format!("line {}: bad longitude {lon_raw:?}", lineno + 1),
            })?;
            let point = GeoPoint {
                latitude,
                longitude,
            };
            if !point.in_range() {
                return Err(CorpusError::Format {
                    path: path.to_string(),
                    message: format!("line {}: coordinates out of range", lineno + 1),
                });
            }
            Some(point)
        };
        meta.insert(glottocode, name, coords)?;
    }
    Ok(meta)
}

/// Parse the data TSV into raw records, rejecting bad rows into the report.
pub fn parse_data_tsv(
    text: &str,
    path: &str,
    meta: &LanguoidTable,
    map: &TokenMap,
    suffixes: &SuffixTable,
) -> Result<(Vec<RawRecord>, Vec<RejectedRow>), CorpusError> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(CorpusError::Format {
            path: path.to_string(),
            message: "empty data file".into(),
        });
    };
    let idx = header_index(
        header,
        &["etymon_id", "glottocode", "oia_form", "nia_form", "gloss", "is_verb"],
        path,
    )?;

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = lineno + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        let get = |i: usize| cols.get(idx[i]).copied().unwrap_or("").trim();
        let etymon_id = get(0).to_string();
        let mut reject = |reason, detail: String| {
            rejected.push(RejectedRow {
                line: line_no,
                etymon_id: etymon_id.clone(),
                reason,
                detail,
            });
        };

        let glottocode = get(1).to_string();
        if meta.get(&glottocode).is_none() {
            reject(
                RowReason::UnknownGlottocode,
                format!("glottocode {glottocode:?} not in metadata"),
            );
            continue;
        }
        let is_verb = match get(5) {
            "0" => false,
            "1" => true,
            other => {
                reject(RowReason::BadField, format!("is_verb must be 0 or 1, got {other:?}"));
                continue;
            }
        };
        let normalize = |raw: &str| -> Result<SegmentSequence, (RowReason, String)> {
            if raw.is_empty() {
                return Err((RowReason::EmptyForm, "empty form".into()));
            }
            normalize_form(raw, map).map_err(|e| (RowReason::UnmappableCharacter, e.to_string()))
        };
        let oia_form = match normalize(get(2)) {
            Ok(seq) => seq,
            Err((reason, detail)) => {
                reject(reason, detail);
                continue;
            }
        };
        let nia_form = match normalize(get(3)) {
            Ok(seq) => seq,
            Err((reason, detail)) => {
                reject(reason, detail);
                continue;
            }
        };
        let gloss = match get(4) {
            "" => None,
            g => Some(g.to_string()),
        };
        let pair = EtymonPair {
            etymon_id: etymon_id.clone(),
            oia_form,
            nia_form,
            language: glottocode.clone(),
            gloss,
            is_verb,
        };
        let pair = match strip_verb_ending(&pair, suffixes) {
            Ok(p) => p,
            Err(e) => {
                reject(RowReason::EmptyAfterStrip, e.to_string());
                continue;
            }
        };
        records.push(RawRecord {
            dialect_name: glottocode.clone(),
            glottocode,
            pair,
        });
    }
    Ok((records, rejected))
}

/// Load and validate a corpus from a data TSV and a metadata TSV, using
/// the shipped token map and suffix table.
pub fn load_corpus(data_path: &Path, meta_path: &Path) -> Result<LoadOutcome, CorpusError> {
    let map = TokenMap::shipped();
    let suffixes = SuffixTable::shipped(&map);
    load_corpus_with(data_path, meta_path, &map, &suffixes)
}

/// As [`load_corpus`], with caller-supplied normalization tables.
pub fn load_corpus_with(
    data_path: &Path,
    meta_path: &Path,
    map: &TokenMap,
    suffixes: &SuffixTable,
) -> Result<LoadOutcome, CorpusError> {
    let meta_text = read(meta_path)?;
    let meta = parse_meta_tsv(&meta_text, &meta_path.display().to_string())?;
    let data_text = read(data_path)?;
    let (records, rejected) =
        parse_data_tsv(&data_text, &data_path.display().to_string(), &meta, map, suffixes)?;

    // Only glottocodes that actually occur become languages; a metadata
    // file may cover more languoids than a given extract uses.
    let mut used = LanguoidTable::default();
    for rec in &records {
        if let Some((name, coords)) = meta.get(&rec.glottocode) {
            used.insert(rec.glottocode.clone(), name.to_string(), coords)?;
        }
    }
    let mut table = merge_by_glottocode(records, &used)?;
    table
        .provenance
        .insert("data_path".into(), data_path.display().to_string());
    table
        .provenance
        .insert("meta_path".into(), meta_path.display().to_string());
    Ok(LoadOutcome { table, rejected })
}
