//! Transcription normalization: source orthography → IPA segment tokens.
//!
//! The mapping lives in a TSV shipped with the repo (`data/token_map.tsv`)
//! so it can be revised without touching code; pass an edited file to the
//! CLI to override it. Matching is greedy longest-first over characters.
//! `modifier` rows (length marks, nasalization) do not emit a token of
//! their own; their mark is appended to the preceding vowel token, which
//! keeps normalization idempotent on its own rendered output.

use super::{EtymonPair, SegmentSequence};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("unmappable character {character:?} at byte offset {offset} in {form:?}")]
    Unmappable {
        form: String,
        character: char,
        offset: usize,
    },
    #[error("modifier {mark:?} at byte offset {offset} in {form:?} has no preceding vowel")]
    DanglingModifier {
        form: String,
        mark: String,
        offset: usize,
    },
    #[error("form {form:?} normalized to an empty sequence")]
    EmptyForm { form: String },
    #[error("bad token map line {line}: {message}")]
    BadMap { line: usize, message: String },
    #[error("bad suffix table line {line}: {message}")]
    BadSuffixTable { line: usize, message: String },
    #[error("stripping verb endings would empty the {side} form of {etymon_id}")]
    StrippedToNothing { etymon_id: String, side: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenKind {
    Vowel,
    Consonant,
    Modifier,
}

#[derive(Debug, Clone)]
struct MapEntry {
    token: String,
    kind: TokenKind,
}

/// Orthography-to-token map with greedy longest-match tokenization.
#[derive(Debug, Clone)]
pub struct TokenMap {
    entries: HashMap<String, MapEntry>,
    max_source_chars: usize,
}

impl TokenMap {
    /// Parse the TSV format: `source<TAB>token<TAB>kind`, `#` comments and
    /// blank lines ignored. Identity entries for every emitted token are
    /// added automatically so that rendered output re-tokenizes to itself.
    pub fn parse(text: &str) -> Result<Self, NormalizeError> {
        let mut entries: HashMap<String, MapEntry> = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(NormalizeError::BadMap {
                    line: line_no,
                    message: format!("expected 3 tab-separated columns, got {}", cols.len()),
                });
            }
            let kind = match cols[2].trim() {
                "vowel" => TokenKind::Vowel,
                "consonant" => TokenKind::Consonant,
                "modifier" => TokenKind::Modifier,
                other => {
                    return Err(NormalizeError::BadMap {
                        line: line_no,
                        message: format!("unknown kind {other:?}"),
                    })
                }
            };
            let source = cols[0].to_string();
            if source.is_empty() {
                return Err(NormalizeError::BadMap {
                    line: line_no,
                    message: "empty source".into(),
                });
            }
            entries.insert(
                source,
                MapEntry {
                    token: cols[1].to_string(),
                    kind,
                },
            );
        }
        // Identity rows for emitted tokens, so render() output maps back.
        let produced: Vec<(String, TokenKind)> = entries
            .values()
            .filter(|e| e.kind != TokenKind::Modifier)
            .map(|e| (e.token.clone(), e.kind))
            .collect();
        for (token, kind) in produced {
            entries.entry(token.clone()).or_insert(MapEntry { token, kind });
        }
        let max_source_chars = entries.keys().map(|s| s.chars().count()).max().unwrap_or(0);
        Ok(Self {
            entries,
            max_source_chars,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// The map shipped with the crate. Pass your own file to override.
    pub fn shipped() -> Self {
        Self::parse(include_str!("../../data/token_map.tsv"))
            .expect("shipped token map must parse")
    }

    /// Tokenize a raw form into segment tokens.
    pub fn tokenize(&self, raw: &str) -> Result<SegmentSequence, NormalizeError> {
        let chars: Vec<(usize, char)> = raw.char_indices().collect();
        let mut out: Vec<(String, TokenKind)> = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let mut matched: Option<(usize, &MapEntry)> = None;
            let upper = (self.max_source_chars).min(chars.len() - i);
            for len in (1..=upper).rev() {
                let start = chars[i].0;
                let end = if i + len < chars.len() {
                    chars[i + len].0
                } else {
                    raw.len()
                };
                if let Some(entry) = self.entries.get(&raw[start..end]) {
                    matched = Some((len, entry));
                    break;
                }
            }
            let Some((len, entry)) = matched else {
                return Err(NormalizeError::Unmappable {
                    form: raw.to_string(),
                    character: chars[i].1,
                    offset: chars[i].0,
                });
            };
            match entry.kind {
                TokenKind::Modifier => match out.last_mut() {
                    Some((token, TokenKind::Vowel)) => token.push_str(&entry.token),
                    _ => {
                        return Err(NormalizeError::DanglingModifier {
                            form: raw.to_string(),
                            mark: entry.token.clone(),
                            offset: chars[i].0,
                        })
                    }
                },
                kind => out.push((entry.token.clone(), kind)),
            }
            i += len;
        }
        if out.is_empty() {
            return Err(NormalizeError::EmptyForm {
                form: raw.to_string(),
            });
        }
        Ok(SegmentSequence::new(
            out.into_iter().map(|(t, _)| t).collect(),
        ))
    }
}

/// Normalize a transliterated dictionary form into IPA segment tokens
/// under the given map.
pub fn normalize_form(raw: &str, map: &TokenMap) -> Result<SegmentSequence, NormalizeError> {
    map.tokenize(raw)
}

/// Verb-ending suffixes per side, already tokenized. Stripping is
/// longest-match on segment tokens.
#[derive(Debug, Clone, Default)]
pub struct SuffixTable {
    oia: Vec<Vec<String>>,
    nia: Vec<Vec<String>>,
}

impl SuffixTable {
    /// Parse the TSV format: `side<TAB>suffix` where side is `oia` or
    /// `nia` and the suffix is written in source orthography, optionally
    /// with a leading `-`.
    pub fn parse(text: &str, map: &TokenMap) -> Result<Self, NormalizeError> {
        let mut table = SuffixTable::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 {
                return Err(NormalizeError::BadSuffixTable {
                    line: line_no,
                    message: format!("expected 2 tab-separated columns, got {}", cols.len()),
                });
            }
            let raw = cols[1].trim_start_matches('-');
            let tokens = map.tokenize(raw)?.segments;
            match cols[0].trim() {
                "oia" => table.oia.push(tokens),
                "nia" => table.nia.push(tokens),
                other => {
                    return Err(NormalizeError::BadSuffixTable {
                        line: line_no,
                        message: format!("unknown side {other:?}"),
                    })
                }
            }
        }
        // Longest suffixes tried first.
        table.oia.sort_by_key(|s| std::cmp::Reverse(s.len()));
        table.nia.sort_by_key(|s| std::cmp::Reverse(s.len()));
        Ok(table)
    }

    pub fn from_path(path: &Path, map: &TokenMap) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, map)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// The suffix table shipped with the crate.
    pub fn shipped(map: &TokenMap) -> Self {
        Self::parse(include_str!("../../data/verb_suffixes.tsv"), map)
            .expect("shipped suffix table must parse")
    }

    fn strip(&self, seq: &SegmentSequence, side_oia: bool) -> Option<Vec<String>> {
        let suffixes = if side_oia { &self.oia } else { &self.nia };
        for suffix in suffixes {
            if seq.segments.len() > suffix.len()
                && seq.segments.ends_with(suffix.as_slice())
            {
                return Some(seq.segments[..seq.segments.len() - suffix.len()].to_vec());
            }
            // A form consisting of nothing but the suffix would be emptied.
            if seq.segments.as_slice() == suffix.as_slice() {
                return Some(Vec::new());
            }
        }
        None
    }
}

/// Remove the OIA 3sg-present ending and the NIA infinitive ending from a
/// verb pair. Non-verbs are returned unchanged. A form consisting of
/// nothing but its suffix is an error (the row is to be excluded with a
/// report entry by the caller).
pub fn strip_verb_ending(
    pair: &EtymonPair,
    table: &SuffixTable,
) -> Result<EtymonPair, NormalizeError> {
    if !pair.is_verb {
        return Ok(pair.clone());
    }
    let mut out = pair.clone();
    if let Some(stripped) = table.strip(&pair.oia_form, true) {
        if stripped.is_empty() {
            return Err(NormalizeError::StrippedToNothing {
                etymon_id: pair.etymon_id.clone(),
                side: "oia".into(),
            });
        }
        out.oia_form = SegmentSequence::new(stripped);
    }
    if let Some(stripped) = table.strip(&pair.nia_form, false) {
        if stripped.is_empty() {
            return Err(NormalizeError::StrippedToNothing {
                etymon_id: pair.etymon_id.clone(),
                side: "nia".into(),
            });
        }
        out.nia_form = SegmentSequence::new(stripped);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> TokenMap {
        TokenMap::shipped()
    }

    fn toks(seq: &SegmentSequence) -> Vec<&str> {
        seq.segments.iter().map(|s| s.as_str()).collect()
    }

    #[test]
    fn one_char_per_segment() {
        let seq = normalize_form("antra", &map()).unwrap();
        assert_eq!(toks(&seq), ["a", "n", "t", "r", "a"]);
    }

    #[test]
    fn cluster_ks_is_one_segment() {
        let seq = normalize_form("kṣara", &map()).unwrap();
        assert_eq!(toks(&seq), ["kʂ", "a", "r", "a"]);
    }

    #[test]
    fn length_marks_attach_to_vowel() {
        // ā is a distinct token from a; retroflex ḍ maps to ɖ
        let seq = normalize_form("ānḍa", &map()).unwrap();
        assert_eq!(toks(&seq), ["aː", "n", "ɖ", "a"]);
    }

    #[test]
    fn nasalization_attaches_to_vowel() {
        let seq = normalize_form("kāṃsa", &map()).unwrap();
        assert_eq!(toks(&seq), ["k", "aː\u{303}", "s", "a"]);
    }

    #[test]
    fn dangling_modifier_is_reported() {
        let err = normalize_form("ṃa", &map()).unwrap_err();
        assert!(matches!(err, NormalizeError::DanglingModifier { offset: 0, .. }));
    }

    #[test]
    fn unmappable_names_character_and_offset() {
        let err = normalize_form("an!ra", &map()).unwrap_err();
        match err {
            NormalizeError::Unmappable {
                character, offset, ..
            } => {
                assert_eq!(character, '!');
                assert_eq!(offset, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn idempotent_on_rendered_output() {
        let m = map();
        for raw in ["antra", "kṣara", "ānḍa", "kāṃsa", "plavati", "gharman"] {
            let once = normalize_form(raw, &m).unwrap();
            let twice = normalize_form(&once.render(), &m).unwrap();
            assert_eq!(once, twice, "not idempotent for {raw}");
        }
    }

    fn verb_pair(oia: &str, nia: &str) -> EtymonPair {
        let m = map();
        EtymonPair {
            etymon_id: "v1".into(),
            oia_form: normalize_form(oia, &m).unwrap(),
            nia_form: normalize_form(nia, &m).unwrap(),
            language: "test0000".into(),
            gloss: None,
            is_verb: true,
        }
    }

    #[test]
    fn non_verbs_pass_through_unchanged() {
        let mut pair = verb_pair("plavati", "pāunu");
        pair.is_verb = false;
        let table = SuffixTable::shipped(&map());
        let out = strip_verb_ending(&pair, &table).unwrap();
        assert_eq!(out, pair);
    }

    #[test]
    fn oia_present_ending_is_stripped() {
        let table = SuffixTable::shipped(&map());
        let out = strip_verb_ending(&verb_pair("plavati", "pāunu"), &table).unwrap();
        assert_eq!(toks(&out.oia_form), ["p", "l", "a", "ʋ"]);
        // Nepali infinitive -nu removed as well
        assert_eq!(toks(&out.nia_form), ["p", "aː", "u"]);
    }

    #[test]
    fn form_equal_to_suffix_is_rejected() {
        let table = SuffixTable::shipped(&map());
        let err = strip_verb_ending(&verb_pair("ati", "pāunu"), &table).unwrap_err();
        assert!(matches!(err, NormalizeError::StrippedToNothing { .. }));
    }
}
