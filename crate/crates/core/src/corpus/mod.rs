//! Corpus ingestion: etymon/reflex pairs, transcription normalization,
//! dialect-to-language merging.
//!
//! The on-disk format is a flat TSV, one reflex per row (see
//! [`load_corpus`]), plus a metadata TSV mapping glottocodes to display
//! names and coordinates. Rows that fail validation are collected into an
//! error report rather than silently dropped.

mod load;
mod normalize;

pub use load::{
    load_corpus, load_corpus_with, parse_data_tsv, parse_meta_tsv, LoadOutcome, RejectedRow,
    RowReason,
};
pub use normalize::{normalize_form, strip_verb_ending, NormalizeError, SuffixTable, TokenMap};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Word-boundary token used when environments are read. Never a segment.
pub const BOUNDARY: &str = "#";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },
    #[error("metadata error: {0}")]
    Metadata(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Geographic point in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoPoint {
    pub fn in_range(&self) -> bool {
        (-90.0..=90.0).contains(&self.latitude) && (-180.0..=180.0).contains(&self.longitude)
    }
}

/// One language after dialect merging. `coords` is `None` for languoids
/// whose metadata row left the coordinate fields empty; such languages stay
/// in inference and are skipped only by map export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageEntry {
    pub glottocode: String,
    pub name: String,
    pub coords: Option<GeoPoint>,
    pub word_count: usize,
}

/// An ordered sequence of segment tokens. Tokens may span several
/// characters (a long vowel, the unit affricate). The word-boundary token
/// `#` is implicit at both ends and never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentSequence {
    pub segments: Vec<String>,
}

impl SegmentSequence {
    pub fn new(segments: Vec<String>) -> Self {
        debug_assert!(segments.iter().all(|s| s != BOUNDARY));
        Self { segments }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Concatenate tokens back into a surface string.
    pub fn render(&self) -> String {
        self.segments.concat()
    }
}

/// One Old-Indo-Aryan headword paired with one modern reflex in one
/// language: the raw observational unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtymonPair {
    pub etymon_id: String,
    pub oia_form: SegmentSequence,
    pub nia_form: SegmentSequence,
    /// Glottocode of the language the reflex belongs to.
    pub language: String,
    pub gloss: Option<String>,
    pub is_verb: bool,
}

/// The validated corpus: every pair's language resolves to a
/// [`LanguageEntry`], and word counts are consistent with the pair list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusTable {
    pub languages: Vec<LanguageEntry>,
    pub pairs: Vec<EtymonPair>,
    /// Free-form ingestion metadata (source paths, dialect names pooled
    /// per glottocode, ...).
    pub provenance: BTreeMap<String, String>,
}

impl CorpusTable {
    /// Index of a glottocode in `languages`, if present.
    pub fn language_index(&self, glottocode: &str) -> Option<usize> {
        self.languages.iter().position(|l| l.glottocode == glottocode)
    }

    pub fn n_words(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_languages(&self) -> usize {
        self.languages.len()
    }

    /// Check the structural invariants: unique glottocodes, resolvable
    /// pair languages, word counts summing to the pair count.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for lang in &self.languages {
            if !seen.insert(lang.glottocode.as_str()) {
                return Err(CorpusError::Metadata(format!(
                    "duplicate glottocode {}",
                    lang.glottocode
                )));
            }
            if let Some(c) = &lang.coords {
                if !c.in_range() {
                    return Err(CorpusError::Metadata(format!(
                        "coordinates out of range for {}",
                        lang.glottocode
                    )));
                }
            }
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for pair in &self.pairs {
            if self.language_index(&pair.language).is_none() {
                return Err(CorpusError::Metadata(format!(
                    "pair {} references unknown language {}",
                    pair.etymon_id, pair.language
                )));
            }
            if pair.oia_form.is_empty() || pair.nia_form.is_empty() {
                return Err(CorpusError::Metadata(format!(
                    "pair {} has an empty form",
                    pair.etymon_id
                )));
            }
            *counts.entry(pair.language.as_str()).or_default() += 1;
        }
        for lang in &self.languages {
            let have = counts.get(lang.glottocode.as_str()).copied().unwrap_or(0);
            if have != lang.word_count {
                return Err(CorpusError::Metadata(format!(
                    "word_count mismatch for {}: recorded {}, found {}",
                    lang.glottocode, lang.word_count, have
                )));
            }
        }
        Ok(())
    }
}

/// Languoid metadata parsed from the meta TSV: glottocode → (name, coords).
#[derive(Debug, Clone, Default)]
pub struct LanguoidTable {
    entries: BTreeMap<String, (String, Option<GeoPoint>)>,
}

impl LanguoidTable {
    /// Insert one metadata row. A glottocode listed twice with different
    /// coordinates is a fatal metadata error; identical duplicates are
    /// tolerated.
    pub fn insert(
        &mut self,
        glottocode: String,
        name: String,
        coords: Option<GeoPoint>,
    ) -> Result<(), CorpusError> {
        if let Some((_, existing)) = self.entries.get(&glottocode) {
            if *existing != coords {
                return Err(CorpusError::Metadata(format!(
                    "conflicting coordinates for glottocode {glottocode}"
                )));
            }
            return Ok(());
        }
        self.entries.insert(glottocode, (name, coords));
        Ok(())
    }

    pub fn get(&self, glottocode: &str) -> Option<(&str, Option<GeoPoint>)> {
        self.entries
            .get(glottocode)
            .map(|(name, coords)| (name.as_str(), *coords))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One dialect-level record prior to merging.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub dialect_name: String,
    pub glottocode: String,
    pub pair: EtymonPair,
}

/// Pool dialect records sharing a glottocode into single languages.
/// Dialect names are preserved in the provenance map. Languages are ordered
/// by glottocode, so the result is independent of record order up to the
/// pair list's sequence.
pub fn merge_by_glottocode(
    records: Vec<RawRecord>,
    meta: &LanguoidTable,
) -> Result<CorpusTable, CorpusError> {
    let mut by_code: BTreeMap<String, (Vec<String>, usize)> = BTreeMap::new();
    let mut pairs = Vec::with_capacity(records.len());
    for rec in records {
        let slot = by_code.entry(rec.glottocode.clone()).or_default();
        if !slot.0.contains(&rec.dialect_name) {
            slot.0.push(rec.dialect_name.clone());
        }
        slot.1 += 1;
        pairs.push(rec.pair);
    }

    let mut languages = Vec::with_capacity(by_code.len());
    let mut provenance = BTreeMap::new();
    for (code, (mut dialects, count)) in by_code {
        let (name, coords) = match meta.get(&code) {
            Some((name, coords)) => (name.to_string(), coords),
            None => {
                return Err(CorpusError::Metadata(format!(
                    "glottocode {code} missing from metadata"
                )))
            }
        };
        dialects.sort();
        provenance.insert(format!("dialects.{code}"), dialects.join("; "));
        languages.push(LanguageEntry {
            glottocode: code,
            name,
            coords,
            word_count: count,
        });
    }

    let table = CorpusTable {
        languages,
        pairs,
        provenance,
    };
    table.validate()?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: &[&str]) -> SegmentSequence {
        SegmentSequence::new(tokens.iter().map(|t| t.to_string()).collect())
    }

    fn pair(id: &str, code: &str) -> EtymonPair {
        EtymonPair {
            etymon_id: id.to_string(),
            oia_form: seq(&["a", "n"]),
            nia_form: seq(&["a", "n"]),
            language: code.to_string(),
            gloss: None,
            is_verb: false,
        }
    }

    fn meta_with(codes: &[&str]) -> LanguoidTable {
        let mut meta = LanguoidTable::default();
        for code in codes {
            meta.insert(
                code.to_string(),
                format!("name-{code}"),
                Some(GeoPoint {
                    latitude: 10.0,
                    longitude: 70.0,
                }),
            )
            .unwrap();
        }
        meta
    }

    #[test]
    fn merge_pools_dialects_under_one_glottocode() {
        let meta = meta_with(&["bhad1241"]);
        let mut records = Vec::new();
        for i in 0..10 {
            records.push(RawRecord {
                dialect_name: "Bhadrawahi".into(),
                glottocode: "bhad1241".into(),
                pair: pair(&format!("a{i}"), "bhad1241"),
            });
        }
        for i in 0..5 {
            records.push(RawRecord {
                dialect_name: "Bhalesi".into(),
                glottocode: "bhad1241".into(),
                pair: pair(&format!("b{i}"), "bhad1241"),
            });
        }
        let table = merge_by_glottocode(records, &meta).unwrap();
        assert_eq!(table.n_languages(), 1);
        assert_eq!(table.languages[0].word_count, 15);
        assert_eq!(
            table.provenance.get("dialects.bhad1241").unwrap(),
            "Bhadrawahi; Bhalesi"
        );
    }

    #[test]
    fn merge_of_nothing_is_empty_table() {
        let table = merge_by_glottocode(Vec::new(), &LanguoidTable::default()).unwrap();
        assert_eq!(table.n_words(), 0);
        assert_eq!(table.n_languages(), 0);
    }

    #[test]
    fn merge_is_order_independent() {
        let meta = meta_with(&["aaaa1111", "bbbb2222"]);
        let mk = |ids: &[(&str, &str)]| -> Vec<RawRecord> {
            ids.iter()
                .map(|(id, code)| RawRecord {
                    dialect_name: code.to_string(),
                    glottocode: code.to_string(),
                    pair: pair(id, code),
                })
                .collect()
        };
        let fwd = merge_by_glottocode(
            mk(&[("x", "aaaa1111"), ("y", "bbbb2222"), ("z", "aaaa1111")]),
            &meta,
        )
        .unwrap();
        let rev = merge_by_glottocode(
            mk(&[("z", "aaaa1111"), ("y", "bbbb2222"), ("x", "aaaa1111")]),
            &meta,
        )
        .unwrap();
        assert_eq!(fwd.languages, rev.languages);
        let mut a: Vec<_> = fwd.pairs.iter().map(|p| &p.etymon_id).collect();
        let mut b: Vec<_> = rev.pairs.iter().map(|p| &p.etymon_id).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn conflicting_coordinates_are_fatal() {
        let mut meta = LanguoidTable::default();
        meta.insert(
            "hind1269".into(),
            "Hindi".into(),
            Some(GeoPoint {
                latitude: 25.0,
                longitude: 77.0,
            }),
        )
        .unwrap();
        let err = meta.insert(
            "hind1269".into(),
            "Hindi".into(),
            Some(GeoPoint {
                latitude: 26.0,
                longitude: 77.0,
            }),
        );
        assert!(matches!(err, Err(CorpusError::Metadata(_))));
    }

    #[test]
    fn word_counts_sum_to_pair_count() {
        let meta = meta_with(&["aaaa1111", "bbbb2222"]);
        let records = vec![
            RawRecord {
                dialect_name: "a".into(),
                glottocode: "aaaa1111".into(),
                pair: pair("1", "aaaa1111"),
            },
            RawRecord {
                dialect_name: "b".into(),
                glottocode: "bbbb2222".into(),
                pair: pair("2", "bbbb2222"),
            },
            RawRecord {
                dialect_name: "b".into(),
                glottocode: "bbbb2222".into(),
                pair: pair("3", "bbbb2222"),
            },
        ];
        let table = merge_by_glottocode(records, &meta).unwrap();
        let total: usize = table.languages.iter().map(|l| l.word_count).sum();
        assert_eq!(total, table.n_words());
    }
}
