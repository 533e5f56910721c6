//! Needleman-Wunsch global alignment over sound classes.

use super::{AlignColumn, Alignment, ScoreTable, Slot, SoundClassSeq};

/// Traceback preference among equal-score moves, applied at each step of
/// the backward walk from the end of the matrix.
///
/// `Standard` prefers a match/mismatch column, then a gap in the target,
/// then a gap in the source; `Mirrored` swaps the two gap preferences (used
/// to establish the mirror-symmetry property of the aligner).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    Standard,
    Mirrored,
}

/// Maximum-score global alignment with the standard deterministic
/// tie-break. Both sequences must be non-empty and every class must be
/// present in the score table.
pub fn needleman_wunsch(src: &SoundClassSeq, tgt: &SoundClassSeq, table: &ScoreTable) -> Alignment {
    needleman_wunsch_tiebreak(src, tgt, table, TieBreak::Standard)
}

/// As [`needleman_wunsch`], with an explicit tie-break order.
pub fn needleman_wunsch_tiebreak(
    src: &SoundClassSeq,
    tgt: &SoundClassSeq,
    table: &ScoreTable,
    tiebreak: TieBreak,
) -> Alignment {
    assert!(
        !src.classes.is_empty() && !tgt.classes.is_empty(),
        "needleman_wunsch requires non-empty sequences"
    );
    let sid: Vec<usize> = src
        .classes
        .iter()
        .map(|c| table.class_id(c).unwrap_or_else(|| panic!("class {c:?} not in score table")))
        .collect();
    let tid: Vec<usize> = tgt
        .classes
        .iter()
        .map(|c| table.class_id(c).unwrap_or_else(|| panic!("class {c:?} not in score table")))
        .collect();
    let (m, n) = (sid.len(), tid.len());
    let g = table.gap_score;

    let width = n + 1;
    let mut dp = vec![0.0f64; (m + 1) * width];
    // accumulate the boundary additively so the traceback's equality
    // checks reproduce the exact same floating-point values
    for i in 1..=m {
        dp[i * width] = dp[(i - 1) * width] + g;
    }
    for j in 1..=n {
        dp[j] = dp[j - 1] + g;
    }
    for i in 1..=m {
        for j in 1..=n {
            let diag = dp[(i - 1) * width + (j - 1)] + table.score_ids(sid[i - 1], tid[j - 1]);
            let up = dp[(i - 1) * width + j] + g;
            let left = dp[i * width + (j - 1)] + g;
            dp[i * width + j] = diag.max(up).max(left);
        }
    }

    // Greedy traceback honoring the tie-break order.
    let mut columns = Vec::with_capacity(m + n);
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        let diag_ok = i > 0
            && j > 0
            && dp[(i - 1) * width + (j - 1)] + table.score_ids(sid[i - 1], tid[j - 1]) == here;
        let up_ok = i > 0 && dp[(i - 1) * width + j] + g == here;
        let left_ok = j > 0 && dp[i * width + (j - 1)] + g == here;
        let take_diag = diag_ok;
        let take_up = match tiebreak {
            TieBreak::Standard => up_ok,
            TieBreak::Mirrored => up_ok && !left_ok,
        };
        if take_diag {
            columns.push(AlignColumn {
                src: Slot::Pos(i - 1),
                tgt: Slot::Pos(j - 1),
            });
            i -= 1;
            j -= 1;
        } else if take_up {
            columns.push(AlignColumn {
                src: Slot::Pos(i - 1),
                tgt: Slot::Gap,
            });
            i -= 1;
        } else {
            debug_assert!(left_ok || up_ok);
            if left_ok {
                columns.push(AlignColumn {
                    src: Slot::Gap,
                    tgt: Slot::Pos(j - 1),
                });
                j -= 1;
            } else {
                columns.push(AlignColumn {
                    src: Slot::Pos(i - 1),
                    tgt: Slot::Gap,
                });
                i -= 1;
            }
        }
    }
    columns.reverse();
    Alignment {
        columns,
        score: dp[m * width + n],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::to_sound_classes;
    use crate::align::ClassMap;
    use crate::corpus::{normalize_form, TokenMap};

    fn seq(classes: &[&str]) -> SoundClassSeq {
        SoundClassSeq {
            classes: classes.iter().map(|c| c.to_string()).collect(),
            back_map: (0..classes.len()).collect(),
        }
    }

    #[test]
    fn identical_sequences_align_without_gaps() {
        let table = ScoreTable::uniform_init(vec!["A".into(), "N".into(), "T".into()]);
        let s = seq(&["A", "N", "T", "A"]);
        let out = needleman_wunsch(&s, &s, &table);
        assert_eq!(out.score, 4.0);
        assert!(out.is_valid_for(4, 4));
        assert!(out
            .columns
            .iter()
            .all(|c| matches!((c.src, c.tgt), (Slot::Pos(_), Slot::Pos(_)))));
    }

    #[test]
    fn entrails_example_aligns_with_medial_gap() {
        // aːntra vs aːnro: the t drops against a target gap, a aligns to o.
        let token_map = TokenMap::shipped();
        let class_map = ClassMap::shipped();
        let src = to_sound_classes(&normalize_form("āntra", &token_map).unwrap(), &class_map)
            .unwrap();
        let tgt = to_sound_classes(&normalize_form("ānro", &token_map).unwrap(), &class_map)
            .unwrap();
        let table = ScoreTable::uniform_init(
            src.classes.iter().chain(tgt.classes.iter()).cloned().collect(),
        );
        let out = needleman_wunsch(&src, &tgt, &table);
        let expect = vec![
            AlignColumn { src: Slot::Pos(0), tgt: Slot::Pos(0) },
            AlignColumn { src: Slot::Pos(1), tgt: Slot::Pos(1) },
            AlignColumn { src: Slot::Pos(2), tgt: Slot::Gap },
            AlignColumn { src: Slot::Pos(3), tgt: Slot::Pos(2) },
            AlignColumn { src: Slot::Pos(4), tgt: Slot::Pos(3) },
        ];
        assert_eq!(out.columns, expect);
    }

    #[test]
    fn tiebreak_prefers_target_gap_over_source_gap() {
        // With all scores equal, every path ties. The traceback walks
        // backward preferring diagonal moves, so the match lands on the
        // last source position and the gap on the first.
        let mut table = ScoreTable::uniform_init(vec!["A".into(), "B".into()]);
        table.set_by_ids(0, 0, 0.0);
        table.set_by_ids(1, 1, 0.0);
        table.set_by_ids(0, 1, 0.0);
        table.gap_score = 0.0;
        let out = needleman_wunsch(&seq(&["A", "A"]), &seq(&["B"]), &table);
        assert!(out.is_valid_for(2, 1));
        assert_eq!(
            out.columns,
            vec![
                AlignColumn { src: Slot::Pos(0), tgt: Slot::Gap },
                AlignColumn { src: Slot::Pos(1), tgt: Slot::Pos(0) },
            ]
        );
        // determinism: repeated runs agree exactly
        let again = needleman_wunsch(&seq(&["A", "A"]), &seq(&["B"]), &table);
        assert_eq!(out, again);
    }

    #[test]
    fn mirror_symmetry_under_mirrored_tiebreak() {
        let table = {
            let mut t = ScoreTable::uniform_init(vec!["A".into(), "B".into(), "C".into()]);
            t.set_by_ids(0, 1, 0.5);
            t.gap_score = -0.75;
            t
        };
        let s = seq(&["A", "B", "C", "A"]);
        let t = seq(&["B", "C", "C"]);
        let fwd = needleman_wunsch_tiebreak(&s, &t, &table, TieBreak::Standard);
        let rev = needleman_wunsch_tiebreak(&t, &s, &table, TieBreak::Mirrored);
        assert_eq!(fwd.score, rev.score);
        let mirrored: Vec<AlignColumn> = rev
            .columns
            .iter()
            .map(|c| AlignColumn { src: c.tgt, tgt: c.src })
            .collect();
        assert_eq!(fwd.columns, mirrored);
    }
}
