//! Rewrite-rule extraction and the ragged change collection.
//!
//! Alignments become conditioned rules A > B / C _ D read off the OIA side;
//! rules are filtered to a whitelisted, frequent feature set and re-encoded
//! as per-word observations over a ragged collection of reflex inventories.

use crate::align::{Alignment, Slot};
use crate::corpus::{EtymonPair, BOUNDARY};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// The deletion reflex: a legal multinomial outcome, never a source.
pub const NULL_REFLEX: &str = "∅";

/// Count threshold: a rule type survives only if its corpus count is
/// strictly greater than this.
pub const DEFAULT_MIN_COUNT: u64 = 5;

#[derive(Debug, Error)]
pub enum ChangesError {
    #[error(
        "no sound changes survive filtering: {raw} rules extracted, {whitelisted} whitelisted, \
         {frequent} above the count cutoff, {pairs} pairs with at least two reflexes"
    )]
    EmptyAfterFilter {
        raw: usize,
        whitelisted: usize,
        frequent: usize,
        pairs: usize,
    },
    #[error("alignment does not fit the pair: {0}")]
    BadAlignment(String),
}

/// A conditioned segmental change A > B / C _ D.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RewriteRule {
    /// OIA segment undergoing the change; never the boundary token.
    pub source: String,
    /// NIA reflex, or [`NULL_REFLEX`] for deletion.
    pub reflex: String,
    /// Left conditioning token: an OIA segment or `#` at the word edge.
    pub left: String,
    /// Right conditioning token, likewise.
    pub right: String,
}

/// A sound-environment pair with its finite reflex inventory and corpus
/// counts. After filtering, at least two reflexes, all counts positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundEnvPair {
    pub source: String,
    pub left: String,
    pub right: String,
    pub reflexes: Vec<String>,
    pub counts: Vec<u64>,
}

impl SoundEnvPair {
    pub fn rule_for(&self, reflex_idx: usize) -> RewriteRule {
        RewriteRule {
            source: self.source.clone(),
            reflex: self.reflexes[reflex_idx].clone(),
            left: self.left.clone(),
            right: self.right.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CollectionDoc {
    pairs: Vec<SoundEnvPair>,
}

/// The ragged index of sound-environment pairs. `offsets[p]` is the start
/// of pair `p` in the flat slot layout of length `flat_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CollectionDoc", from = "CollectionDoc")]
pub struct ChangeCollection {
    pub pairs: Vec<SoundEnvPair>,
    pub offsets: Vec<usize>,
    pub flat_size: usize,
}

impl From<ChangeCollection> for CollectionDoc {
    fn from(c: ChangeCollection) -> Self {
        CollectionDoc { pairs: c.pairs }
    }
}

impl From<CollectionDoc> for ChangeCollection {
    fn from(doc: CollectionDoc) -> Self {
        ChangeCollection::new(doc.pairs)
    }
}

impl ChangeCollection {
    pub fn new(pairs: Vec<SoundEnvPair>) -> Self {
        let mut offsets = Vec::with_capacity(pairs.len());
        let mut flat_size = 0;
        for pair in &pairs {
            debug_assert_eq!(pair.reflexes.len(), pair.counts.len());
            offsets.push(flat_size);
            flat_size += pair.reflexes.len();
        }
        Self {
            pairs,
            offsets,
            flat_size,
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Flat slot index of (pair, reflex).
    pub fn slot(&self, pair_idx: usize, reflex_idx: usize) -> usize {
        debug_assert!(reflex_idx < self.pairs[pair_idx].reflexes.len());
        self.offsets[pair_idx] + reflex_idx
    }

    /// Flat slot range of one pair's block.
    pub fn block(&self, pair_idx: usize) -> std::ops::Range<usize> {
        let start = self.offsets[pair_idx];
        start..start + self.pairs[pair_idx].reflexes.len()
    }

    /// Pair index owning a flat slot.
    pub fn pair_of_slot(&self, slot: usize) -> usize {
        debug_assert!(slot < self.flat_size);
        match self.offsets.binary_search(&slot) {
            Ok(p) => p,
            Err(p) => p - 1,
        }
    }

    /// The full rewrite rule behind a flat slot.
    pub fn rule_for_slot(&self, slot: usize) -> RewriteRule {
        let p = self.pair_of_slot(slot);
        self.pairs[p].rule_for(slot - self.offsets[p])
    }

    /// Per-slot pair index, the partition vector used by the priors.
    pub fn partition(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.flat_size);
        for (p, pair) in self.pairs.iter().enumerate() {
            out.extend(std::iter::repeat_n(p, pair.reflexes.len()));
        }
        out
    }

    /// Total event count over all pairs.
    pub fn total_count(&self) -> u64 {
        self.pairs.iter().map(|p| p.counts.iter().sum::<u64>()).sum()
    }
}

/// A word encoded as its language index plus its (pair, reflex) events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordObservation {
    pub word_id: usize,
    pub language: usize,
    /// (pair index, reflex index within the pair), length J ≥ 1.
    pub events: Vec<(u32, u32)>,
}

/// Extract one rule per alignment column whose source slot is non-gap.
/// Environments are the neighboring OIA segments (or `#` at the edges);
/// target-side insertion columns contribute nothing.
pub fn extract_rules(pair: &EtymonPair, alignment: &Alignment) -> Vec<RewriteRule> {
    let oia = &pair.oia_form.segments;
    let nia = &pair.nia_form.segments;
    let mut rules = Vec::new();
    for col in &alignment.columns {
        let Slot::Pos(i) = col.src else { continue };
        let reflex = match col.tgt {
            Slot::Pos(j) => nia[j].clone(),
            Slot::Gap => NULL_REFLEX.to_string(),
        };
        let left = if i == 0 {
            BOUNDARY.to_string()
        } else {
            oia[i - 1].clone()
        };
        let right = if i + 1 == oia.len() {
            BOUNDARY.to_string()
        } else {
            oia[i + 1].clone()
        };
        rules.push(RewriteRule {
            source: oia[i].clone(),
            reflex,
            left,
            right,
        });
    }
    rules
}

/// The rules extracted from one word, tagged with its corpus index and
/// language index.
#[derive(Debug, Clone)]
pub struct WordRules {
    pub word_id: usize,
    pub language: usize,
    pub rules: Vec<RewriteRule>,
}

/// The sixteen OIA segments whose changes the model considers by default.
pub fn default_whitelist() -> BTreeSet<String> {
    ["ɕ", "ŋ", "ɳ", "ʂ", "r̩", "h", "i", "iː", "j", "kʂ", "l", "n", "r", "s", "u", "uː"]
        .into_iter()
        .map(str::to_string)
        .collect()
}

/// Filter rules to the whitelisted sources, keep rule types occurring
/// strictly more than `min_count` times, drop sound-environment pairs left
/// with a single reflex, and re-encode the survivors per word.
///
/// Words with zero surviving events are dropped from the observations.
pub fn filter_and_index(
    words: &[WordRules],
    whitelist: &BTreeSet<String>,
    min_count: u64,
) -> Result<(ChangeCollection, Vec<WordObservation>), ChangesError> {
    type EnvKey = (String, String, String);

    let mut raw = 0usize;
    let mut whitelisted = 0usize;
    let mut counts: BTreeMap<(EnvKey, String), u64> = BTreeMap::new();
    for word in words {
        for rule in &word.rules {
            raw += 1;
            if !whitelist.contains(&rule.source) {
                continue;
            }
            whitelisted += 1;
            let key = (
                (rule.source.clone(), rule.left.clone(), rule.right.clone()),
                rule.reflex.clone(),
            );
            *counts.entry(key).or_default() += 1;
        }
    }

    let mut by_env: BTreeMap<EnvKey, Vec<(String, u64)>> = BTreeMap::new();
    let mut frequent = 0usize;
    for ((env, reflex), count) in counts {
        if count > min_count {
            frequent += 1;
            by_env.entry(env).or_default().push((reflex, count));
        }
    }

    let mut pairs = Vec::new();
    for ((source, left, right), mut reflexes) in by_env {
        if reflexes.len() < 2 {
            continue;
        }
        reflexes.sort();
        pairs.push(SoundEnvPair {
            source,
            left,
            right,
            reflexes: reflexes.iter().map(|(r, _)| r.clone()).collect(),
            counts: reflexes.iter().map(|(_, c)| *c).collect(),
        });
    }
    let collection = ChangeCollection::new(pairs);
    if collection.n_pairs() == 0 {
        return Err(ChangesError::EmptyAfterFilter {
            raw,
            whitelisted,
            frequent,
            pairs: 0,
        });
    }

    let mut slot_index: BTreeMap<(EnvKey, &str), (u32, u32)> = BTreeMap::new();
    for (p, pair) in collection.pairs.iter().enumerate() {
        for (r, reflex) in pair.reflexes.iter().enumerate() {
            slot_index.insert(
                (
                    (pair.source.clone(), pair.left.clone(), pair.right.clone()),
                    reflex.as_str(),
                ),
                (p as u32, r as u32),
            );
        }
    }

    // The collection's counts must describe exactly the events that are
    // emitted, so recount from the encoded words.
    let mut recount = vec![0u64; collection.flat_size];
    let mut observations = Vec::new();
    for word in words {
        let mut events = Vec::new();
        for rule in &word.rules {
            let key = (
                (rule.source.clone(), rule.left.clone(), rule.right.clone()),
                rule.reflex.as_str(),
            );
            if let Some(&(p, r)) = slot_index.get(&key) {
                recount[collection.slot(p as usize, r as usize)] += 1;
                events.push((p, r));
            }
        }
        if !events.is_empty() {
            observations.push(WordObservation {
                word_id: word.word_id,
                language: word.language,
                events,
            });
        }
    }
    let mut collection = collection;
    for p in 0..collection.pairs.len() {
        let block = collection.block(p);
        collection.pairs[p].counts = recount[block].to_vec();
    }

    if observations.is_empty() {
        return Err(ChangesError::EmptyAfterFilter {
            raw,
            whitelisted,
            frequent,
            pairs: collection.n_pairs(),
        });
    }
    Ok((collection, observations))
}

/// Serialize observations as JSON lines, one word per line.
pub fn observations_to_jsonl(observations: &[WordObservation]) -> String {
    observations
        .iter()
        .map(|o| serde_json::to_string(o).expect("observation serializes"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parse observations from JSON lines.
pub fn observations_from_jsonl(text: &str) -> Result<Vec<WordObservation>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
