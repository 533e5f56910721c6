//! Segment alignment: sound classes, learned similarity scores, and
//! optimal global alignments.
//!
//! Alignment runs over coarse sound classes; rule extraction downstream
//! reads the original segments back through each sequence's `back_map`.

mod em;
mod nw;

pub use em::{em_fit_scores, DEFAULT_EM_ITERATIONS, EM_SMOOTHING, EM_TOLERANCE};
pub use nw::{needleman_wunsch, needleman_wunsch_tiebreak, TieBreak};

use crate::corpus::SegmentSequence;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("segment {0:?} has no sound-class entry")]
    UnmappedSegment(String),
    #[error("cannot align an empty sequence")]
    EmptySequence,
    #[error("bad class map line {line}: {message}")]
    BadClassMap { line: usize, message: String },
    #[error("bad score table line {line}: {message}")]
    BadScoreTable { line: usize, message: String },
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Segment token → sound class token.
#[derive(Debug, Clone)]
pub struct ClassMap {
    entries: HashMap<String, String>,
}

impl ClassMap {
    pub fn parse(text: &str) -> Result<Self, AlignError> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 {
                return Err(AlignError::BadClassMap {
                    line: idx + 1,
                    message: format!("expected 2 columns, got {}", cols.len()),
                });
            }
            entries.insert(cols[0].to_string(), cols[1].trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn from_path(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// The class map shipped with the crate.
    pub fn shipped() -> Self {
        Self::parse(include_str!("../../data/class_map.tsv")).expect("shipped class map parses")
    }

    /// Class of a segment token. Nasalized vowels (trailing combining
    /// tilde) fall back to their base vowel's class.
    pub fn lookup(&self, segment: &str) -> Option<&str> {
        if let Some(class) = self.entries.get(segment) {
            return Some(class);
        }
        segment
            .strip_suffix('\u{0303}')
            .and_then(|base| self.entries.get(base))
            .map(String::as_str)
    }
}

/// A segment sequence projected onto sound classes, one class per segment.
/// `back_map[c]` is the segment position behind class position `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoundClassSeq {
    pub classes: Vec<String>,
    pub back_map: Vec<usize>,
}

/// Project a segment sequence onto sound classes.
pub fn to_sound_classes(
    seq: &SegmentSequence,
    map: &ClassMap,
) -> Result<SoundClassSeq, AlignError> {
    if seq.is_empty() {
        return Err(AlignError::EmptySequence);
    }
    let mut classes = Vec::with_capacity(seq.len());
    for segment in &seq.segments {
        match map.lookup(segment) {
            Some(class) => classes.push(class.to_string()),
            None => return Err(AlignError::UnmappedSegment(segment.clone())),
        }
    }
    let back_map = (0..seq.len()).collect();
    Ok(SoundClassSeq { classes, back_map })
}

/// Symmetric class-pair similarity scores plus a single gap score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    classes: Vec<String>,
    index: HashMap<String, usize>,
    /// Row-major `n x n`, exactly symmetric.
    scores: Vec<f64>,
    pub gap_score: f64,
}

impl ScoreTable {
    pub fn new(mut classes: Vec<String>, fill: f64, gap_score: f64) -> Self {
        classes.sort();
        classes.dedup();
        let n = classes.len();
        let index = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Self {
            classes,
            index,
            scores: vec![fill; n * n],
            gap_score,
        }
    }

    /// Uniform initialization: match bonus +1, mismatch penalty -1, gap -1.
    pub fn uniform_init(classes: Vec<String>) -> Self {
        let mut table = Self::new(classes, -1.0, -1.0);
        for i in 0..table.classes.len() {
            table.set_by_ids(i, i, 1.0);
        }
        table
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_id(&self, class: &str) -> Option<usize> {
        self.index.get(class).copied()
    }

    pub fn score_ids(&self, a: usize, b: usize) -> f64 {
        self.scores[a * self.classes.len() + b]
    }

    /// Symmetric assignment.
    pub fn set_by_ids(&mut self, a: usize, b: usize, value: f64) {
        let n = self.classes.len();
        self.scores[a * n + b] = value;
        self.scores[b * n + a] = value;
    }

    pub fn score(&self, a: &str, b: &str) -> f64 {
        let ia = self.class_id(a).unwrap_or_else(|| panic!("class {a:?} not in score table"));
        let ib = self.class_id(b).unwrap_or_else(|| panic!("class {b:?} not in score table"));
        self.score_ids(ia, ib)
    }

    /// TSV serialization: one `classA<TAB>classB<TAB>score` row per
    /// unordered pair, then a `-<TAB>-<TAB>gap_score` line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.classes.len() {
            for j in i..self.classes.len() {
                out.push_str(&format!(
                    "{}\t{}\t{:.17e}\n",
                    self.classes[i],
                    self.classes[j],
                    self.score_ids(i, j)
                ));
            }
        }
        out.push_str(&format!("-\t-\t{:.17e}\n", self.gap_score));
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self, AlignError> {
        let mut rows: Vec<(String, String, f64)> = Vec::new();
        let mut gap_score = None;
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(AlignError::BadScoreTable {
                    line: idx + 1,
                    message: format!("expected 3 columns, got {}", cols.len()),
                });
            }
            let value: f64 = cols[2].parse().map_err(|_| AlignError::BadScoreTable {
                line: idx + 1,
                message: format!("bad score {:?}", cols[2]),
            })?;
            if !value.is_finite() {
                return Err(AlignError::BadScoreTable {
                    line: idx + 1,
                    message: "non-finite score".into(),
                });
            }
            if cols[0] == "-" && cols[1] == "-" {
                gap_score = Some(value);
            } else {
                rows.push((cols[0].to_string(), cols[1].to_string(), value));
            }
        }
        let Some(gap_score) = gap_score else {
            return Err(AlignError::BadScoreTable {
                line: 0,
                message: "missing gap_score line".into(),
            });
        };
        let mut classes: Vec<String> = rows
            .iter()
            .flat_map(|(a, b, _)| [a.clone(), b.clone()])
            .collect();
        classes.sort();
        classes.dedup();
        let mut table = Self::new(classes, 0.0, gap_score);
        for (a, b, value) in rows {
            let ia = table.class_id(&a).expect("class interned");
            let ib = table.class_id(&b).expect("class interned");
            table.set_by_ids(ia, ib, value);
        }
        Ok(table)
    }
}

/// One alignment column slot: a position in the underlying sequence, or a
/// gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Pos(usize),
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignColumn {
    pub src: Slot,
    pub tgt: Slot,
}

/// A global alignment: ordered columns, no (Gap, Gap) column, score equal
/// to the sum of column scores under the table that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub columns: Vec<AlignColumn>,
    pub score: f64,
}

impl Alignment {
    /// Check the structural invariants against the sequences it aligns.
    pub fn is_valid_for(&self, src_len: usize, tgt_len: usize) -> bool {
        let mut next_src = 0;
        let mut next_tgt = 0;
        for col in &self.columns {
            match (col.src, col.tgt) {
                (Slot::Gap, Slot::Gap) => return false,
                (src, tgt) => {
                    if let Slot::Pos(i) = src {
                        if i != next_src {
                            return false;
                        }
                        next_src += 1;
                    }
                    if let Slot::Pos(j) = tgt {
                        if j != next_tgt {
                            return false;
                        }
                        next_tgt += 1;
                    }
                }
            }
        }
        next_src == src_len && next_tgt == tgt_len
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{normalize_form, TokenMap};

    #[test]
    fn single_vowel_maps_to_vowel_class() {
        let seq = SegmentSequence::new(vec!["a".into()]);
        let out = to_sound_classes(&seq, &ClassMap::shipped()).unwrap();
        assert_eq!(out.classes, ["A"]);
        assert_eq!(out.back_map, [0]);
    }

    #[test]
    fn ks_cluster_classes_match_shipped_map() {
        let map = TokenMap::shipped();
        let seq = normalize_form("kṣara", &map).unwrap();
        let out = to_sound_classes(&seq, &ClassMap::shipped()).unwrap();
        assert_eq!(out.classes, ["K", "A", "R", "A"]);
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let seq = SegmentSequence { segments: vec![] };
        assert_eq!(
            to_sound_classes(&seq, &ClassMap::shipped()),
            Err(AlignError::EmptySequence)
        );
    }

    #[test]
    fn unmapped_segment_is_named() {
        let seq = SegmentSequence::new(vec!["q".into()]);
        assert_eq!(
            to_sound_classes(&seq, &ClassMap::shipped()),
            Err(AlignError::UnmappedSegment("q".into()))
        );
    }

    #[test]
    fn nasalized_vowel_falls_back_to_base_class() {
        let seq = SegmentSequence::new(vec!["aː\u{0303}".into()]);
        let out = to_sound_classes(&seq, &ClassMap::shipped()).unwrap();
        assert_eq!(out.classes, ["A"]);
    }

    #[test]
    fn score_table_round_trips_through_tsv() {
        let mut table = ScoreTable::uniform_init(vec!["A".into(), "K".into(), "N".into()]);
        table.set_by_ids(0, 1, 0.25);
        table.gap_score = -1.75;
        let parsed = ScoreTable::parse_tsv(&table.to_tsv()).unwrap();
        assert_eq!(parsed, table);
    }
}
