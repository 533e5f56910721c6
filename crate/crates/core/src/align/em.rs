//! PMI-EM similarity learning.
//!
//! Alternates (E) aligning every word pair under the current scores with
//! (M) re-estimating scores as smoothed pointwise mutual information of
//! the aligned class co-occurrences. The gap score is re-estimated as the
//! log relative frequency of gap columns. Deterministic for a fixed corpus,
//! iteration cap, and smoothing constant.

use super::{needleman_wunsch, to_sound_classes, AlignError, ClassMap, ScoreTable, Slot};
use crate::corpus::CorpusTable;

/// Additive smoothing applied to all co-occurrence counts.
pub const EM_SMOOTHING: f64 = 0.5;
/// Relative change in total alignment score below which EM stops.
pub const EM_TOLERANCE: f64 = 1e-6;
/// Default iteration cap.
pub const DEFAULT_EM_ITERATIONS: usize = 20;

/// Fit a score table by EM over the corpus. `iterations = 0` returns the
/// uniform initialization table.
pub fn em_fit_scores(
    corpus: &CorpusTable,
    class_map: &ClassMap,
    iterations: usize,
) -> Result<ScoreTable, AlignError> {
    if corpus.pairs.is_empty() {
        return Err(AlignError::EmptyCorpus);
    }
    let mut sequences = Vec::with_capacity(corpus.pairs.len());
    for pair in &corpus.pairs {
        let src = to_sound_classes(&pair.oia_form, class_map)?;
        let tgt = to_sound_classes(&pair.nia_form, class_map)?;
        sequences.push((src, tgt));
    }
    let classes: Vec<String> = sequences
        .iter()
        .flat_map(|(s, t)| s.classes.iter().chain(t.classes.iter()).cloned())
        .collect();
    let mut table = ScoreTable::uniform_init(classes);
    if iterations == 0 {
        return Ok(table);
    }

    let mut prev_total = f64::NEG_INFINITY;
    for _ in 0..iterations {
        let (counts, total) = e_step(&sequences, &table);
        table = m_step(&table, &counts);
        if prev_total.is_finite() {
            let denom = prev_total.abs().max(1.0);
            if (total - prev_total).abs() / denom < EM_TOLERANCE {
                break;
            }
        }
        prev_total = total;
    }
    Ok(table)
}

struct CoCounts {
    /// Ordered joint counts over match columns; both orientations counted
    /// so the table stays exactly symmetric.
    joint: Vec<f64>,
    /// Occurrences of each class on the non-gap side of any column.
    occ: Vec<f64>,
    n_match_cols: f64,
    n_gap_cols: f64,
}

fn e_step(
    sequences: &[(super::SoundClassSeq, super::SoundClassSeq)],
    table: &ScoreTable,
) -> (CoCounts, f64) {
    let n = table.classes().len();
    let mut counts = CoCounts {
        joint: vec![0.0; n * n],
        occ: vec![0.0; n],
        n_match_cols: 0.0,
        n_gap_cols: 0.0,
    };
    let mut total = 0.0;
    for (src, tgt) in sequences {
        let alignment = needleman_wunsch(src, tgt, table);
        total += alignment.score;
        for col in &alignment.columns {
            match (col.src, col.tgt) {
                (Slot::Pos(i), Slot::Pos(j)) => {
                    let a = table.class_id(&src.classes[i]).expect("interned");
                    let b = table.class_id(&tgt.classes[j]).expect("interned");
                    counts.joint[a * n + b] += 1.0;
                    counts.joint[b * n + a] += 1.0;
                    counts.occ[a] += 1.0;
                    counts.occ[b] += 1.0;
                    counts.n_match_cols += 1.0;
                }
                (Slot::Pos(i), Slot::Gap) => {
                    let a = table.class_id(&src.classes[i]).expect("interned");
                    counts.occ[a] += 1.0;
                    counts.n_gap_cols += 1.0;
                }
                (Slot::Gap, Slot::Pos(j)) => {
                    let b = table.class_id(&tgt.classes[j]).expect("interned");
                    counts.occ[b] += 1.0;
                    counts.n_gap_cols += 1.0;
                }
                (Slot::Gap, Slot::Gap) => unreachable!("no gap-gap columns"),
            }
        }
    }
    (counts, total)
}

fn m_step(table: &ScoreTable, counts: &CoCounts) -> ScoreTable {
    let n = table.classes().len();
    let s = EM_SMOOTHING;
    let a_f = n as f64;
    let total_ordered = 2.0 * counts.n_match_cols;
    let total_occ = 2.0 * counts.n_match_cols + counts.n_gap_cols;
    let total_cols = counts.n_match_cols + counts.n_gap_cols;

    let marginal = |a: usize| (counts.occ[a] + s) / (total_occ + s * a_f);
    let mut out = ScoreTable::new(table.classes().to_vec(), 0.0, 0.0);
    for a in 0..n {
        for b in a..n {
            let joint = (counts.joint[a * n + b] + s) / (total_ordered + s * a_f * a_f);
            let pmi = (joint / (marginal(a) * marginal(b))).ln();
            out.set_by_ids(a, b, pmi);
        }
    }
    out.gap_score = ((counts.n_gap_cols + s) / (total_cols + s)).ln();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EtymonPair, SegmentSequence};
    use approx::assert_abs_diff_eq;

    fn corpus_of(pairs: &[(&[&str], &[&str])]) -> CorpusTable {
        let seq = |tokens: &[&str]| {
            SegmentSequence::new(tokens.iter().map(|t| t.to_string()).collect())
        };
        let pairs: Vec<EtymonPair> = pairs
            .iter()
            .enumerate()
            .map(|(i, (oia, nia))| EtymonPair {
                etymon_id: format!("e{i}"),
                oia_form: seq(oia),
                nia_form: seq(nia),
                language: "test0000".into(),
                gloss: None,
                is_verb: false,
            })
            .collect();
        CorpusTable {
            languages: vec![crate::corpus::LanguageEntry {
                glottocode: "test0000".into(),
                name: "Test".into(),
                coords: None,
                word_count: pairs.len(),
            }],
            pairs,
            provenance: Default::default(),
        }
    }

    #[test]
    fn zero_iterations_returns_uniform_init() {
        let corpus = corpus_of(&[(&["a"], &["a"])]);
        let table = em_fit_scores(&corpus, &ClassMap::shipped(), 0).unwrap();
        assert_eq!(table.score("A", "A"), 1.0);
        assert_eq!(table.gap_score, -1.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let corpus = CorpusTable::default();
        assert!(matches!(
            em_fit_scores(&corpus, &ClassMap::shipped(), 1),
            Err(AlignError::EmptyCorpus)
        ));
    }

    #[test]
    fn identical_pairs_make_diagonal_dominate() {
        let corpus = corpus_of(&[
            (&["a", "n", "t", "r", "a"], &["a", "n", "t", "r", "a"]),
            (&["k", "a", "r", "a"], &["k", "a", "r", "a"]),
            (&["n", "i", "t", "i"], &["n", "i", "t", "i"]),
        ]);
        let table = em_fit_scores(&corpus, &ClassMap::shipped(), 1).unwrap();
        let classes: Vec<String> = table.classes().to_vec();
        for a in &classes {
            for b in &classes {
                if a != b {
                    assert!(
                        table.score(a, a) > table.score(a, b),
                        "diagonal should dominate: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn two_class_toy_pmi_matches_hand_computation() {
        // Words "a"/"a" and "i"/"i": one match column each after the E
        // step. Hand computation with smoothing 0.5 over classes {A, I}:
        //   joint(A,A) ordered = 2, total ordered = 4
        //   p(A,A) = 2.5/6, q(A) = 2.5/5 = 0.5
        //   PMI(A,A) = ln((2.5/6)/0.25) = ln(5/3)
        //   PMI(A,I) = ln((0.5/6)/0.25) = ln(1/3)
        let corpus = corpus_of(&[(&["a"], &["a"]), (&["i"], &["i"])]);
        let table = em_fit_scores(&corpus, &ClassMap::shipped(), 1).unwrap();
        assert_abs_diff_eq!(table.score("A", "A"), (5.0f64 / 3.0).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(table.score("A", "I"), (1.0f64 / 3.0).ln(), epsilon = 1e-12);
        assert!(table.score("A", "I") < 0.0);
        assert!(table.score("A", "A") > 0.0);
        // no gap columns anywhere: gap score is the floor value
        assert_abs_diff_eq!(table.gap_score, (0.5f64 / 2.5).ln(), epsilon = 1e-12);
    }

    #[test]
    fn em_is_deterministic() {
        let corpus = corpus_of(&[
            (&["a", "n", "t", "r", "a"], &["a", "n", "r", "o"]),
            (&["k", "a", "r", "a"], &["k", "a", "r"]),
        ]);
        let a = em_fit_scores(&corpus, &ClassMap::shipped(), 5).unwrap();
        let b = em_fit_scores(&corpus, &ClassMap::shipped(), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn realignment_under_fixed_scores_does_not_lower_total() {
        // The E step is a maximum-score dynamic program, so realigning
        // under the same table reproduces the same (maximal) total.
        let corpus = corpus_of(&[
            (&["a", "n", "t", "r", "a"], &["a", "n", "r", "o"]),
            (&["u", "t", "a"], &["u", "a"]),
        ]);
        let class_map = ClassMap::shipped();
        let table = em_fit_scores(&corpus, &class_map, 3).unwrap();
        let mut totals = Vec::new();
        for _ in 0..2 {
            let mut total = 0.0;
            for pair in &corpus.pairs {
                let s = to_sound_classes(&pair.oia_form, &class_map).unwrap();
                let t = to_sound_classes(&pair.nia_form, &class_map).unwrap();
                total += needleman_wunsch(&s, &t, &table).score;
            }
            totals.push(total);
        }
        assert_eq!(totals[0], totals[1]);
    }
}
