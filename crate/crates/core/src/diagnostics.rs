//! Model criticism: reconstructed component assignments, entropy-based
//! posterior predictive checks, simulation accuracy under four regimes,
//! and the language-shuffle randomization test on β.

use crate::changes::{ChangeCollection, WordObservation};
use crate::model::{word_loglik_given_component, LatentState, PosteriorTrace};
use crate::priors::{sample_collection, sample_dirichlet, Prior};
use crate::stats::{entropy, logsumexp, mean, normal_sf, sample_variance};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

/// Number of data shuffles in the randomization test.
pub const DEFAULT_N_SHUFFLES: usize = 4;
/// Default PPC iteration count.
pub const DEFAULT_PPC_ITERATIONS: usize = 100;
/// The "uniform over all positive reals" baseline is improper; β is drawn
/// uniformly from this range instead, and the bounds are recorded in the
/// report.
pub const FULL_PRIOR_BETA_RANGE: (f64, f64) = (1e-3, 50.0);

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("no usable posterior samples")]
    NoUsableTrace,
    #[error("sample sets must be non-empty")]
    EmptySamples,
    #[error("zero pooled variance in z-test")]
    ZeroVariance,
    #[error("unknown regime {0:?}")]
    UnknownRegime(String),
}

/// Posterior over a word's component assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPosterior {
    pub word_id: usize,
    pub probs: Vec<f64>,
    /// All components had zero likelihood; a uniform fallback was used.
    pub degenerate: bool,
}

/// Reconstruct P(ẑ = k | θ̂, φ̂) ∝ exp of the per-component word log
/// likelihood, for one joint parameter draw.
pub fn reconstruct_assignment(
    word: &WordObservation,
    state: &LatentState,
    collection: &ChangeCollection,
) -> AssignmentPosterior {
    let k = state.theta[word.language].len();
    let logliks: Vec<f64> = (0..k)
        .map(|comp| word_loglik_given_component(word, comp, state, collection))
        .collect();
    let total = logsumexp(&logliks);
    if !total.is_finite() {
        return AssignmentPosterior {
            word_id: word.word_id,
            probs: vec![1.0 / k as f64; k],
            degenerate: true,
        };
    }
    AssignmentPosterior {
        word_id: word.word_id,
        probs: logliks.iter().map(|x| (x - total).exp()).collect(),
        degenerate: false,
    }
}

/// Entropy of the row-wise mean simplex: high when assignments are either
/// uncertain or certain-but-inconsistent across draws.
pub fn entropy_of_averages(per_iteration_probs: &[Vec<f64>]) -> f64 {
    assert!(!per_iteration_probs.is_empty());
    let k = per_iteration_probs[0].len();
    let mut avg = vec![0.0; k];
    for row in per_iteration_probs {
        for (a, v) in avg.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = per_iteration_probs.len() as f64;
    for a in &mut avg {
        *a /= n;
    }
    entropy(&avg)
}

/// Mean of row-wise entropies: high only when individual assignments are
/// uncertain.
pub fn average_of_entropies(per_iteration_probs: &[Vec<f64>]) -> f64 {
    assert!(!per_iteration_probs.is_empty());
    per_iteration_probs.iter().map(|row| entropy(row)).sum::<f64>()
        / per_iteration_probs.len() as f64
}

/// Simulation regime for the accuracy posterior predictive check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FullPrior,
    SparsePrior,
    PosteriorNoAssignment,
    PosteriorWithAssignment,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::FullPrior,
        Regime::SparsePrior,
        Regime::PosteriorNoAssignment,
        Regime::PosteriorWithAssignment,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Regime::FullPrior => "full_prior",
            Regime::SparsePrior => "sparse_prior",
            Regime::PosteriorNoAssignment => "posterior_no_assignment",
            Regime::PosteriorWithAssignment => "posterior_with_assignment",
        }
    }
}

impl FromStr for Regime {
    type Err = DiagnosticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full_prior" => Ok(Regime::FullPrior),
            "sparse_prior" => Ok(Regime::SparsePrior),
            "posterior_no_assignment" => Ok(Regime::PosteriorNoAssignment),
            "posterior_with_assignment" => Ok(Regime::PosteriorWithAssignment),
            other => Err(DiagnosticsError::UnknownRegime(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PPCConfig {
    /// Simulation iterations T.
    pub iterations: usize,
    pub regime: Regime,
    pub seed: u64,
}

/// Parameter source for the simulation: fitted posterior traces, or the
/// prior itself (with the component count to simulate under).
pub enum PpcSource<'a> {
    Posterior(&'a [PosteriorTrace]),
    Prior { prior: &'a Prior, n_components: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LanguageAccuracy {
    pub language: String,
    pub n_events: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionAccuracy {
    /// "source / left _ right" label of the sound-environment pair.
    pub pair: String,
    pub n_events: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub regime: Regime,
    pub iterations: usize,
    /// (word_id, mean per-word accuracy).
    pub per_word: Vec<(usize, f64)>,
    pub per_language: Vec<LanguageAccuracy>,
    pub per_distribution: Vec<DistributionAccuracy>,
    /// Event-count-weighted mean; equals the weighted mean of the
    /// per-language rows.
    pub overall_mean: f64,
    /// Recorded bounds of the bounded-uniform β baseline (full prior only).
    pub beta_bounds: Option<(f64, f64)>,
}

fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Simulate each word's reflexes under the regime, per iteration, and
/// score the fraction of events whose simulated reflex matches the
/// observation. Aggregates are event-count weighted.
pub fn simulate_and_score(
    words: &[WordObservation],
    collection: &ChangeCollection,
    language_labels: &[String],
    source: PpcSource<'_>,
    config: &PPCConfig,
) -> Result<AccuracyReport, DiagnosticsError> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let n_languages = words.iter().map(|w| w.language + 1).max().unwrap_or(0);
    assert!(
        language_labels.len() >= n_languages,
        "need a label per language"
    );
    let partition = collection.partition();

    let pool: Vec<&LatentState> = match &source {
        PpcSource::Posterior(traces) => {
            let pool: Vec<&LatentState> =
                traces.iter().flat_map(|t| t.samples.iter()).collect();
            if pool.is_empty() {
                return Err(DiagnosticsError::NoUsableTrace);
            }
            pool
        }
        PpcSource::Prior { .. } => Vec::new(),
    };
    if matches!(
        config.regime,
        Regime::PosteriorNoAssignment | Regime::PosteriorWithAssignment
    ) && pool.is_empty()
    {
        return Err(DiagnosticsError::NoUsableTrace);
    }

    // per-event correct counts, flattened in word order
    let event_offsets: Vec<usize> = {
        let mut offsets = Vec::with_capacity(words.len());
        let mut acc = 0;
        for w in words {
            offsets.push(acc);
            acc += w.events.len();
        }
        offsets
    };
    let total_events: usize = words.iter().map(|w| w.events.len()).sum();
    let mut correct = vec![0u64; total_events];

    let mut beta_bounds = None;
    for _ in 0..config.iterations {
        // parameter draw for this iteration
        let drawn: LatentState;
        let state: &LatentState = match &source {
            PpcSource::Posterior(_) => pool[rng.random_range(0..pool.len())],
            PpcSource::Prior { prior, n_components } => {
                let beta = match config.regime {
                    Regime::FullPrior => {
                        beta_bounds = Some(FULL_PRIOR_BETA_RANGE);
                        rng.random_range(FULL_PRIOR_BETA_RANGE.0..=FULL_PRIOR_BETA_RANGE.1)
                    }
                    Regime::SparsePrior => 0.1,
                    _ => return Err(DiagnosticsError::NoUsableTrace),
                };
                let k = *n_components;
                let theta: Vec<Vec<f64>> = (0..n_languages)
                    .map(|_| sample_dirichlet(beta, k, &mut rng))
                    .collect();
                let phi: Vec<Vec<f64>> = (0..k)
                    .map(|_| sample_collection(prior, &partition, &mut rng).values)
                    .collect();
                drawn = LatentState { beta, theta, phi };
                &drawn
            }
        };

        for (wi, word) in words.iter().enumerate() {
            let z = match config.regime {
                Regime::PosteriorWithAssignment => {
                    let assignment = reconstruct_assignment(word, state, collection);
                    sample_categorical(&assignment.probs, &mut rng)
                }
                _ => sample_categorical(&state.theta[word.language], &mut rng),
            };
            for (ei, &(p, r)) in word.events.iter().enumerate() {
                let block = collection.block(p as usize);
                let probs = &state.phi[z][block];
                let simulated = sample_categorical(probs, &mut rng);
                if simulated == r as usize {
                    correct[event_offsets[wi] + ei] += 1;
                }
            }
        }
    }

    let t = config.iterations as f64;
    let per_event: Vec<f64> = correct.iter().map(|&c| c as f64 / t).collect();

    let per_word: Vec<(usize, f64)> = words
        .iter()
        .enumerate()
        .map(|(wi, w)| {
            let range = event_offsets[wi]..event_offsets[wi] + w.events.len();
            (w.word_id, mean(&per_event[range]))
        })
        .collect();

    let mut lang_sum = vec![0.0; n_languages];
    let mut lang_events = vec![0usize; n_languages];
    let mut pair_sum = vec![0.0; collection.n_pairs()];
    let mut pair_events = vec![0usize; collection.n_pairs()];
    for (wi, word) in words.iter().enumerate() {
        for (ei, &(p, _)) in word.events.iter().enumerate() {
            let acc = per_event[event_offsets[wi] + ei];
            lang_sum[word.language] += acc;
            lang_events[word.language] += 1;
            pair_sum[p as usize] += acc;
            pair_events[p as usize] += 1;
        }
    }
    // languages and pairs without any scored event carry no row
    let per_language: Vec<LanguageAccuracy> = (0..n_languages)
        .filter(|&l| lang_events[l] > 0)
        .map(|l| LanguageAccuracy {
            language: language_labels[l].clone(),
            n_events: lang_events[l],
            accuracy: lang_sum[l] / lang_events[l] as f64,
        })
        .collect();
    let per_distribution: Vec<DistributionAccuracy> = (0..collection.n_pairs())
        .filter(|&p| pair_events[p] > 0)
        .map(|p| {
            let pair = &collection.pairs[p];
            DistributionAccuracy {
                pair: format!("{} / {} _ {}", pair.source, pair.left, pair.right),
                n_events: pair_events[p],
                accuracy: pair_sum[p] / pair_events[p] as f64,
            }
        })
        .collect();
    let overall_mean = if total_events == 0 {
        0.0
    } else {
        per_event.iter().sum::<f64>() / total_events as f64
    };

    Ok(AccuracyReport {
        regime: config.regime,
        iterations: config.iterations,
        per_word,
        per_language,
        per_distribution,
        overall_mean,
        beta_bounds,
    })
}

/// Histogram over [0, ln K] with fixed-width bins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

fn histogram(values: &[f64], max: f64, n_bins: usize) -> EntropyHistogram {
    let width = max / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let bin = ((v / width) as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    EntropyHistogram {
        edges: (0..=n_bins).map(|i| i as f64 * width).collect(),
        counts,
    }
}

/// Per-word uncertainty of the reconstructed assignments, via both
/// aggregate entropy metrics over T joint draws from the trace pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyReport {
    pub iterations: usize,
    pub per_word_entropy_of_averages: Vec<f64>,
    pub per_word_average_of_entropies: Vec<f64>,
    pub mean_entropy_of_averages: f64,
    pub mean_average_of_entropies: f64,
    pub histogram_entropy_of_averages: EntropyHistogram,
    pub histogram_average_of_entropies: EntropyHistogram,
}

pub fn assignment_entropy_ppc(
    words: &[WordObservation],
    collection: &ChangeCollection,
    traces: &[PosteriorTrace],
    iterations: usize,
    seed: u64,
) -> Result<EntropyReport, DiagnosticsError> {
    let pool: Vec<&LatentState> = traces.iter().flat_map(|t| t.samples.iter()).collect();
    if pool.is_empty() {
        return Err(DiagnosticsError::NoUsableTrace);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let k = pool[0].theta[0].len();
    let mut prob_sums: Vec<Vec<f64>> = vec![vec![0.0; k]; words.len()];
    let mut entropy_sums = vec![0.0; words.len()];
    for _ in 0..iterations {
        // all parameter values drawn simultaneously from the same index
        let state = pool[rng.random_range(0..pool.len())];
        for (wi, word) in words.iter().enumerate() {
            let assignment = reconstruct_assignment(word, state, collection);
            for (acc, p) in prob_sums[wi].iter_mut().zip(&assignment.probs) {
                *acc += p;
            }
            entropy_sums[wi] += entropy(&assignment.probs);
        }
    }
    let t = iterations as f64;
    let eoa: Vec<f64> = prob_sums
        .iter()
        .map(|sums| {
            let avg: Vec<f64> = sums.iter().map(|s| s / t).collect();
            entropy(&avg)
        })
        .collect();
    let aoe: Vec<f64> = entropy_sums.iter().map(|s| s / t).collect();
    let max_entropy = (k as f64).ln();
    Ok(EntropyReport {
        iterations,
        mean_entropy_of_averages: mean(&eoa),
        mean_average_of_entropies: mean(&aoe),
        histogram_entropy_of_averages: histogram(&eoa, max_entropy, 20),
        histogram_average_of_entropies: histogram(&aoe, max_entropy, 20),
        per_word_entropy_of_averages: eoa,
        per_word_average_of_entropies: aoe,
    })
}

/// Permute language labels uniformly over words, preserving per-language
/// word counts and leaving events untouched.
pub fn shuffle_languages<R: Rng>(
    words: &[WordObservation],
    rng: &mut R,
) -> Vec<WordObservation> {
    let mut labels: Vec<usize> = words.iter().map(|w| w.language).collect();
    // Fisher-Yates over the label multiset
    for i in (1..labels.len()).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    words
        .iter()
        .zip(labels)
        .map(|(w, language)| WordObservation {
            word_id: w.word_id,
            language,
            events: w.events.clone(),
        })
        .collect()
}

/// One-tailed Welch z-test of mean(shuffled) > mean(real).
/// Returns (z, p) where p is the upper-tail normal probability.
pub fn beta_z_test(
    beta_real: &[f64],
    beta_shuffled: &[f64],
) -> Result<(f64, f64), DiagnosticsError> {
    if beta_real.is_empty() || beta_shuffled.is_empty() {
        return Err(DiagnosticsError::EmptySamples);
    }
    let se2 = sample_variance(beta_real) / beta_real.len() as f64
        + sample_variance(beta_shuffled) / beta_shuffled.len() as f64;
    if se2 == 0.0 {
        return Err(DiagnosticsError::ZeroVariance);
    }
    let z = (mean(beta_shuffled) - mean(beta_real)) / se2.sqrt();
    Ok((z, normal_sf(z)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

pub fn summarize_samples(xs: &[f64]) -> SampleSummary {
    SampleSummary {
        n: xs.len(),
        mean: mean(xs),
        sd: sample_variance(xs).sqrt(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShuffleOutcome {
    pub shuffle_seed: u64,
    pub beta_shuffled: SampleSummary,
    pub z: f64,
    pub p: f64,
}

/// Randomization-test report: posterior β from the real data against β
/// refit on shuffled data, one Z-test per shuffle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShuffleReport {
    pub n_shuffles: usize,
    pub beta_real: SampleSummary,
    pub shuffles: Vec<ShuffleOutcome>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::changes::SoundEnvPair;
    use approx::assert_abs_diff_eq;

    fn collection2() -> ChangeCollection {
        ChangeCollection::new(vec![
            SoundEnvPair {
                source: "s".into(),
                left: "a".into(),
                right: "a".into(),
                reflexes: vec!["h".into(), "s".into()],
                counts: vec![6, 6],
            },
            SoundEnvPair {
                source: "n".into(),
                left: "a".into(),
                right: "#".into(),
                reflexes: vec!["n".into(), "ɳ".into()],
                counts: vec![6, 6],
            },
        ])
    }

    fn word(id: usize, lang: usize, events: &[(u32, u32)]) -> WordObservation {
        WordObservation {
            word_id: id,
            language: lang,
            events: events.to_vec(),
        }
    }

    #[test]
    fn identical_phi_reduces_to_theta() {
        let collection = collection2();
        let state = LatentState {
            beta: 0.1,
            theta: vec![vec![0.7, 0.3]],
            phi: vec![vec![0.6, 0.4, 0.5, 0.5], vec![0.6, 0.4, 0.5, 0.5]],
        };
        let w = word(0, 0, &[(0, 0), (1, 1)]);
        let out = reconstruct_assignment(&w, &state, &collection);
        assert_abs_diff_eq!(out.probs[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(out.probs[1], 0.3, epsilon = 1e-12);
        assert!(!out.degenerate);
    }

    #[test]
    fn zero_likelihood_component_is_excluded() {
        let collection = collection2();
        let state = LatentState {
            beta: 0.1,
            theta: vec![vec![0.5, 0.5]],
            phi: vec![vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]],
        };
        let w = word(0, 0, &[(0, 0)]);
        let out = reconstruct_assignment(&w, &state, &collection);
        assert_eq!(out.probs, vec![1.0, 0.0]);
    }

    #[test]
    fn all_zero_likelihood_falls_back_to_uniform() {
        let collection = collection2();
        let state = LatentState {
            beta: 0.1,
            theta: vec![vec![0.5, 0.5]],
            phi: vec![vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]],
        };
        let w = word(0, 0, &[(0, 0)]);
        let out = reconstruct_assignment(&w, &state, &collection);
        assert!(out.degenerate);
        assert_eq!(out.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn reconstruction_matches_brute_force_normalization() {
        use crate::model::word_loglik_given_component;
        let collection = collection2();
        let state = LatentState {
            beta: 0.1,
            theta: vec![vec![0.6, 0.4]],
            phi: vec![vec![0.9, 0.1, 0.3, 0.7], vec![0.2, 0.8, 0.6, 0.4]],
        };
        let w = word(0, 0, &[(0, 1), (1, 0), (1, 0)]);
        let out = reconstruct_assignment(&w, &state, &collection);
        let raw: Vec<f64> = (0..2)
            .map(|k| word_loglik_given_component(&w, k, &state, &collection).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        for (p, r) in out.probs.iter().zip(&raw) {
            assert_abs_diff_eq!(*p, r / total, epsilon = 1e-12);
        }
    }

    #[test]
    fn entropy_metric_examples() {
        let ln2 = 2f64.ln();
        let all_certain = vec![vec![1.0, 0.0]; 10];
        assert_eq!(entropy_of_averages(&all_certain), 0.0);
        assert_eq!(average_of_entropies(&all_certain), 0.0);

        let mut split = vec![vec![1.0, 0.0]; 5];
        split.extend(vec![vec![0.0, 1.0]; 5]);
        assert_abs_diff_eq!(entropy_of_averages(&split), ln2, epsilon = 1e-12);
        assert_abs_diff_eq!(average_of_entropies(&split), 0.0, epsilon = 1e-12);

        let uniform = vec![vec![0.5, 0.5]; 10];
        assert_abs_diff_eq!(entropy_of_averages(&uniform), ln2, epsilon = 1e-12);
        assert_abs_diff_eq!(average_of_entropies(&uniform), ln2, epsilon = 1e-12);
    }

    fn degenerate_trace() -> PosteriorTrace {
        // both components put certainty on reflex 0 of each pair
        PosteriorTrace {
            chain_id: 0,
            samples: vec![
                LatentState {
                    beta: 0.1,
                    theta: vec![vec![0.5, 0.5], vec![0.8, 0.2]],
                    phi: vec![vec![1.0, 0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0, 0.0]],
                };
                3
            ],
            elbo_history: Vec::new(),
        }
    }

    #[test]
    fn deterministic_collection_scores_perfectly_under_posterior() {
        let collection = collection2();
        let words = vec![word(0, 0, &[(0, 0), (1, 0)]), word(1, 1, &[(1, 0)])];
        let traces = [degenerate_trace()];
        let labels = vec!["l0".to_string(), "l1".to_string()];
        for regime in [Regime::PosteriorNoAssignment, Regime::PosteriorWithAssignment] {
            let report = simulate_and_score(
                &words,
                &collection,
                &labels,
                PpcSource::Posterior(&traces),
                &PPCConfig {
                    iterations: 20,
                    regime,
                    seed: 1,
                },
            )
            .unwrap();
            assert_eq!(report.overall_mean, 1.0);
            for (_, acc) in &report.per_word {
                assert_eq!(*acc, 1.0);
            }
        }
    }

    #[test]
    fn equiprobable_reflexes_score_about_half() {
        let collection = collection2();
        let words: Vec<WordObservation> = (0..40)
            .map(|i| word(i, i % 2, &[(0, 0), (1, 1)]))
            .collect();
        let trace = PosteriorTrace {
            chain_id: 0,
            samples: vec![LatentState {
                beta: 0.1,
                theta: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                phi: vec![vec![0.5, 0.5, 0.5, 0.5]; 2],
            }],
            elbo_history: Vec::new(),
        };
        let labels = vec!["l0".to_string(), "l1".to_string()];
        let report = simulate_and_score(
            &words,
            &collection,
            &labels,
            PpcSource::Posterior(&[trace]),
            &PPCConfig {
                iterations: 200,
                regime: Regime::PosteriorWithAssignment,
                seed: 3,
            },
        )
        .unwrap();
        assert!(
            (report.overall_mean - 0.5).abs() < 0.05,
            "got {}",
            report.overall_mean
        );
    }

    #[test]
    fn accuracy_aggregation_is_event_weighted() {
        let collection = collection2();
        let words = vec![
            word(0, 0, &[(0, 0)]),
            word(1, 1, &[(0, 0), (1, 0), (1, 0)]),
        ];
        let traces = [degenerate_trace()];
        let labels = vec!["l0".to_string(), "l1".to_string()];
        let report = simulate_and_score(
            &words,
            &collection,
            &labels,
            PpcSource::Posterior(&traces),
            &PPCConfig {
                iterations: 10,
                regime: Regime::PosteriorNoAssignment,
                seed: 9,
            },
        )
        .unwrap();
        let weighted: f64 = report
            .per_language
            .iter()
            .map(|l| l.accuracy * l.n_events as f64)
            .sum::<f64>()
            / report.per_language.iter().map(|l| l.n_events as f64).sum::<f64>();
        assert_abs_diff_eq!(report.overall_mean, weighted, epsilon = 1e-12);
    }

    #[test]
    fn shuffle_preserves_label_multiset_and_events() {
        use rand::SeedableRng;
        let words = vec![
            word(0, 0, &[(0, 0)]),
            word(1, 0, &[(1, 1)]),
            word(2, 1, &[(0, 1)]),
            word(3, 2, &[(1, 0), (0, 0)]),
        ];
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let shuffled = shuffle_languages(&words, &mut rng);
        let mut before: Vec<usize> = words.iter().map(|w| w.language).collect();
        let mut after: Vec<usize> = shuffled.iter().map(|w| w.language).collect();
        before.sort();
        after.sort();
        assert_eq!(before, after);
        for (a, b) in words.iter().zip(&shuffled) {
            assert_eq!(a.events, b.events);
            assert_eq!(a.word_id, b.word_id);
        }
        let j_before: usize = words.iter().map(|w| w.events.len()).sum();
        let j_after: usize = shuffled.iter().map(|w| w.events.len()).sum();
        assert_eq!(j_before, j_after);
    }

    #[test]
    fn single_language_shuffle_is_identity() {
        use rand::SeedableRng;
        let words = vec![word(0, 0, &[(0, 0)]), word(1, 0, &[(1, 1)])];
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let shuffled = shuffle_languages(&words, &mut rng);
        assert_eq!(words, shuffled);
    }

    #[test]
    fn z_test_of_identical_sets_is_centered() {
        let xs = vec![0.4, 0.5, 0.6, 0.55];
        let (z, p) = beta_z_test(&xs, &xs).unwrap();
        assert_eq!(z, 0.0);
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn z_test_matches_hand_computation() {
        // {1,2,3} vs {4,5,6}: means 2 and 5, both variances 1,
        // se = sqrt(2/3), z = 3 / sqrt(2/3)
        let (z, p) = beta_z_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_abs_diff_eq!(z, 3.0 / (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert!(p > 1.1e-4 && p < 1.3e-4, "p = {p}");
    }

    #[test]
    fn z_test_detects_separation() {
        let real: Vec<f64> = (0..100).map(|i| 0.1 + 1e-4 * i as f64).collect();
        let shuffled: Vec<f64> = (0..100).map(|i| 2.0 + 1e-4 * i as f64).collect();
        let (z, p) = beta_z_test(&real, &shuffled).unwrap();
        assert!(z > 10.0);
        assert!(p < 1e-6);
    }

    #[test]
    fn z_test_rejects_zero_variance() {
        let err = beta_z_test(&[1.0, 1.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, DiagnosticsError::ZeroVariance));
    }

    #[test]
    fn regime_names_round_trip() {
        for regime in Regime::ALL {
            assert_eq!(regime.name().parse::<Regime>().unwrap(), regime);
        }
        assert!("bogus".parse::<Regime>().is_err());
    }

    #[test]
    fn randomization_defaults() {
        assert_eq!(DEFAULT_N_SHUFFLES, 4);
        assert_eq!(DEFAULT_PPC_ITERATIONS, 100);
    }
}
