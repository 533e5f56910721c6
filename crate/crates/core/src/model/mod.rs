//! The generative dialect-mixture model and its stochastic variational
//! inference: marginalized word likelihoods, reparameterized ELBO steps
//! with Adam, multi-chain fitting, label alignment, and convergence
//! diagnostics.

mod labels;
mod rhat;
mod transform;
mod vi;

pub use labels::align_component_labels;
pub use rhat::{rhat, rhat_scalar, ConvergenceReport};
pub use transform::VariationalState;
pub use vi::{
    elbo_gradients, elbo_step, fit, fit_with_languages, sample_posterior, ChainResult,
    ElboGradients, DIVERGENCE_PATIENCE, EARLY_STOP_REL, EARLY_STOP_WINDOW, LOG_BETA_PRIOR_SD,
};

use crate::changes::{ChangeCollection, WordObservation};
use crate::priors::Prior;
use crate::stats::logsumexp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("covariance dimension {cov} does not match collection flat size {collection}")]
    CovarianceMismatch { cov: usize, collection: usize },
    #[error("all {0} chains failed")]
    AllChainsFailed(usize),
}

/// Inference configuration. Optimizer constants follow the settings the
/// fitting procedure was tuned with: minibatches of 500 words, learning
/// rate 0.01, and a per-chain Adam moment weight drawn uniformly from
/// [0.7, 0.8] to guard against component collapsing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of dialect components (defaults to 2).
    pub k: usize,
    pub prior: Prior,
    pub n_chains: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub moment_weight_range: (f64, f64),
    /// Total optimizer steps per chain. Zero means the trace is drawn from
    /// the initialization distribution.
    pub steps: usize,
    /// Monte-Carlo samples per ELBO step.
    pub mc_samples: usize,
    pub seed: u64,
    /// Posterior samples drawn from the fitted variational distributions.
    pub trace_samples: usize,
}

impl ModelConfig {
    pub fn new(prior: Prior, steps: usize) -> Self {
        Self {
            k: 2,
            prior,
            n_chains: 4,
            minibatch: 500,
            learning_rate: 0.01,
            moment_weight_range: (0.7, 0.8),
            steps,
            mc_samples: 4,
            seed: 0,
            trace_samples: 500,
        }
    }

    /// Steps needed for `epochs` passes over `n_words` at the configured
    /// minibatch size.
    pub fn epochs_to_steps(n_words: usize, minibatch: usize, epochs: usize) -> usize {
        let per_epoch = n_words.div_ceil(minibatch.max(1)).max(1);
        per_epoch * epochs
    }

    pub fn validate(&self, n_words: usize, collection: &ChangeCollection) -> Result<(), ModelError> {
        if self.k < 2 {
            return Err(ModelError::InvalidConfig("K must be at least 2".into()));
        }
        if n_words == 0 {
            return Err(ModelError::InvalidConfig("no observations".into()));
        }
        if self.minibatch == 0 || self.minibatch > n_words {
            return Err(ModelError::InvalidConfig(format!(
                "minibatch {} must be in 1..={n_words}",
                self.minibatch
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(ModelError::InvalidConfig("learning rate must be positive".into()));
        }
        if self.mc_samples == 0 || self.n_chains == 0 || self.trace_samples == 0 {
            return Err(ModelError::InvalidConfig(
                "mc_samples, n_chains and trace_samples must be positive".into(),
            ));
        }
        let (lo, hi) = self.moment_weight_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(ModelError::InvalidConfig(
                "moment weight range must lie inside (0, 1)".into(),
            ));
        }
        match &self.prior {
            Prior::Dirichlet(spec) => {
                if spec.alpha <= 0.0 {
                    return Err(ModelError::InvalidConfig("alpha must be positive".into()));
                }
            }
            Prior::LogisticNormal(spec) => {
                if spec.dim != collection.flat_size {
                    return Err(ModelError::CovarianceMismatch {
                        cov: spec.dim,
                        collection: collection.flat_size,
                    });
                }
            }
        }
        Ok(())
    }
}

/// One constrained draw of all model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    /// Global concentration of the language-component distributions.
    pub beta: f64,
    /// Per-language component weights, `L` rows of length `K` summing to 1.
    pub theta: Vec<Vec<f64>>,
    /// Per-component sound-change distributions over the flat slot layout,
    /// `K` rows of length `S`, each summing to 1 within every block.
    pub phi: Vec<Vec<f64>>,
}

/// Per-chain posterior samples and the optimizer's objective history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorTrace {
    pub chain_id: usize,
    pub samples: Vec<LatentState>,
    pub elbo_history: Vec<f64>,
}

impl PosteriorTrace {
    pub fn beta_samples(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.beta).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct TraceLine {
    chain_id: usize,
    beta: f64,
    theta: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
}

/// Trace file format: JSON lines, one latent-state sample per line with
/// its chain id. The ELBO history travels separately (CSV).
pub fn traces_to_jsonl(traces: &[PosteriorTrace]) -> String {
    let mut out = String::new();
    for trace in traces {
        for sample in &trace.samples {
            let line = TraceLine {
                chain_id: trace.chain_id,
                beta: sample.beta,
                theta: sample.theta.clone(),
                phi: sample.phi.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("trace line serializes"));
            out.push('\n');
        }
    }
    out
}

/// Parse a trace file back into per-chain traces (empty ELBO histories).
pub fn traces_from_jsonl(text: &str) -> Result<Vec<PosteriorTrace>, serde_json::Error> {
    let mut traces: Vec<PosteriorTrace> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parsed: TraceLine = serde_json::from_str(line)?;
        let state = LatentState {
            beta: parsed.beta,
            theta: parsed.theta,
            phi: parsed.phi,
        };
        match traces.iter_mut().find(|t| t.chain_id == parsed.chain_id) {
            Some(trace) => trace.samples.push(state),
            None => traces.push(PosteriorTrace {
                chain_id: parsed.chain_id,
                samples: vec![state],
                elbo_history: Vec::new(),
            }),
        }
    }
    Ok(traces)
}

/// Log likelihood of one word under a fixed component assignment:
/// log θ^(ℓ)_k plus the log probability of each observed reflex under
/// component k. Zero probabilities yield -inf, which callers fold through
/// log-sum-exp.
pub fn word_loglik_given_component(
    word: &WordObservation,
    k: usize,
    state: &LatentState,
    collection: &ChangeCollection,
) -> f64 {
    let mut total = state.theta[word.language][k].ln();
    for &(pair, reflex) in &word.events {
        let slot = collection.slot(pair as usize, reflex as usize);
        total += state.phi[k][slot].ln();
    }
    total
}

/// Log likelihood of one word with the component marginalized out.
pub fn marginal_word_loglik(
    word: &WordObservation,
    state: &LatentState,
    collection: &ChangeCollection,
) -> f64 {
    let per_k: Vec<f64> = (0..state.theta[word.language].len())
        .map(|k| word_loglik_given_component(word, k, state, collection))
        .collect();
    logsumexp(&per_k)
}
