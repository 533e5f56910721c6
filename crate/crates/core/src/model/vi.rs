//! Reparameterized ELBO estimation, Adam updates, and multi-chain fitting.
//!
//! The variational family is fully factorized Gaussian over the
//! unconstrained coordinates. Each step draws standard-normal noise,
//! reparameterizes (mean + exp(log-sd)·noise), evaluates the log joint —
//! priors with the simplex-transform Jacobians folded in, plus the
//! minibatch likelihood scaled by N/|B| — and ascends with Adam. The
//! Gaussian entropy enters the ELBO in closed form, so its gradient with
//! respect to every log-sd is exactly one.

use super::transform::{constrain, to_latent_state, ParamLayout, VariationalState};
use super::{LatentState, ModelConfig, ModelError, PosteriorTrace};
use crate::changes::{ChangeCollection, WordObservation};
use crate::priors::Prior;
use crate::stats::{digamma, ln_gamma, logsumexp};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Standard deviation of the Normal prior on log β.
pub const LOG_BETA_PRIOR_SD: f64 = 2.0;
/// Moving-average window for the early-stopping rule.
pub const EARLY_STOP_WINDOW: usize = 500;
/// Relative ELBO improvement below which a chain stops early.
pub const EARLY_STOP_REL: f64 = 1e-4;
/// Consecutive non-finite ELBO steps after which a chain is marked failed.
pub const DIVERGENCE_PATIENCE: usize = 100;

const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const LOG_SD_FLOOR: f64 = -8.0;
const LOG_SD_CEIL: f64 = 4.0;

/// Log joint density (priors in unconstrained space plus the scaled
/// minibatch likelihood) and its gradient at one unconstrained point.
fn log_joint_grad(
    layout: &ParamLayout,
    prior: &Prior,
    u: &[f64],
    words: &[WordObservation],
    batch: &[usize],
    scale: f64,
) -> (f64, Vec<f64>) {
    let c = constrain(layout, u);
    let (k, l, s) = (layout.k, layout.l, layout.s);
    let kf = k as f64;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut lp = 0.0;
    let mut g = vec![0.0; layout.dim];

    // log β ~ Normal(0, LOG_BETA_PRIOR_SD²), evaluated in log space.
    let u_b = u[layout.beta_idx()];
    let var_b = LOG_BETA_PRIOR_SD * LOG_BETA_PRIOR_SD;
    lp += -0.5 * u_b * u_b / var_b - LOG_BETA_PRIOR_SD.ln() - 0.5 * ln_2pi;
    g[layout.beta_idx()] += -u_b / var_b;

    // θ^ℓ ~ Dirichlet(β·1_K); the ALR Jacobian folds (β-1)Σlogθ + Σlogθ
    // into β·Σlogθ.
    let beta = c.beta;
    let lgamma_term = ln_gamma(kf * beta) - kf * ln_gamma(beta);
    let digamma_term = kf * digamma(kf * beta) - kf * digamma(beta);
    for lang in 0..l {
        let row = &c.log_theta[lang * k..(lang + 1) * k];
        let sum_log: f64 = row.iter().sum();
        lp += lgamma_term + beta * sum_log;
        g[layout.beta_idx()] += beta * (digamma_term + sum_log);
        for j in 0..k - 1 {
            g[layout.theta_idx(lang, j)] += beta * (1.0 - kf * c.theta[lang * k + j]);
        }
    }

    // φ^k prior.
    match prior {
        Prior::Dirichlet(spec) => {
            let alpha = spec.alpha;
            for comp in 0..k {
                for (b, block) in layout.blocks.iter().enumerate() {
                    let m = block.len() as f64;
                    let sum_log: f64 = c.log_phi[comp * s + block.start..comp * s + block.end]
                        .iter()
                        .sum();
                    lp += ln_gamma(m * alpha) - m * ln_gamma(alpha) + alpha * sum_log;
                    for t in 0..block.len() - 1 {
                        let slot = block.start + t;
                        g[layout.phi_idx_dirichlet(comp, b, t)] +=
                            alpha * (1.0 - m * c.phi[comp * s + slot]);
                    }
                }
            }
        }
        Prior::LogisticNormal(spec) => {
            let factor = spec.factor();
            let latent = c.latent_phi.as_ref().expect("latent branch");
            for comp in 0..k {
                let v = &latent[comp * s..(comp + 1) * s];
                let solved = factor.solve(v);
                let quad: f64 = v.iter().zip(&solved).map(|(a, b)| a * b).sum();
                lp += -0.5 * (quad + s as f64 * ln_2pi + factor.log_det);
                for slot in 0..s {
                    g[layout.phi_idx_latent(comp, slot)] -= solved[slot];
                }
            }
        }
    }

    // Marginalized word likelihoods over the minibatch.
    let mut a = vec![0.0; k];
    let mut w = vec![0.0; k];
    let mut grouped: Vec<(usize, Vec<usize>)> = Vec::new();
    for &wi in batch {
        let word = &words[wi];
        let lang = word.language;
        for comp in 0..k {
            let mut acc = c.log_theta[lang * k + comp];
            let base = comp * s;
            for &(p, r) in &word.events {
                acc += c.log_phi[base + layout.blocks[p as usize].start + r as usize];
            }
            a[comp] = acc;
        }
        let ll = logsumexp(&a);
        lp += scale * ll;
        for comp in 0..k {
            w[comp] = (a[comp] - ll).exp();
        }
        for j in 0..k - 1 {
            g[layout.theta_idx(lang, j)] += scale * (w[j] - c.theta[lang * k + j]);
        }

        grouped.clear();
        for &(p, r) in &word.events {
            let p = p as usize;
            match grouped.iter_mut().find(|(b, _)| *b == p) {
                Some((_, rs)) => rs.push(r as usize),
                None => grouped.push((p, vec![r as usize])),
            }
        }
        for (b, reflexes) in &grouped {
            let block = &layout.blocks[*b];
            let cb = reflexes.len() as f64;
            let m = block.len();
            let free = if layout.dirichlet_phi { m - 1 } else { m };
            for comp in 0..k {
                let wk = w[comp];
                if wk == 0.0 {
                    continue;
                }
                for t in 0..free {
                    let slot = block.start + t;
                    let ct = reflexes.iter().filter(|&&r| r == t).count() as f64;
                    let coord = if layout.dirichlet_phi {
                        layout.phi_idx_dirichlet(comp, *b, t)
                    } else {
                        layout.phi_idx_latent(comp, slot)
                    };
                    g[coord] += scale * wk * (ct - c.phi[comp * s + slot] * cb);
                }
            }
        }
    }

    (lp, g)
}

/// One reparameterized ELBO estimate with gradients, under caller-supplied
/// standard-normal noise (one vector per Monte-Carlo sample). Exposed so
/// the gradient can be checked against finite differences of the same
/// noise-fixed objective.
#[derive(Debug, Clone)]
pub struct ElboGradients {
    pub elbo: f64,
    pub d_means: Vec<f64>,
    pub d_log_sds: Vec<f64>,
}

pub fn elbo_gradients(
    vstate: &VariationalState,
    config: &ModelConfig,
    noise: &[Vec<f64>],
    words: &[WordObservation],
    batch: &[usize],
    n_words_total: usize,
) -> ElboGradients {
    let layout = &vstate.layout;
    let dim = layout.dim;
    let scale = n_words_total as f64 / batch.len() as f64;
    let n_samples = noise.len();
    assert!(n_samples > 0, "at least one noise vector required");

    let sds: Vec<f64> = vstate.log_sds.iter().map(|x| x.exp()).collect();
    let mut lp_sum = 0.0;
    let mut d_means = vec![0.0; dim];
    let mut d_log_sds = vec![0.0; dim];
    let mut u = vec![0.0; dim];
    for eps in noise {
        debug_assert_eq!(eps.len(), dim);
        for d in 0..dim {
            u[d] = vstate.means[d] + sds[d] * eps[d];
        }
        let (lp, grad) = log_joint_grad(layout, &config.prior, &u, words, batch, scale);
        lp_sum += lp;
        for d in 0..dim {
            d_means[d] += grad[d];
            d_log_sds[d] += grad[d] * sds[d] * eps[d];
        }
    }
    let inv = 1.0 / n_samples as f64;
    for d in 0..dim {
        d_means[d] *= inv;
        // entropy contributes exactly 1 per log-sd coordinate
        d_log_sds[d] = d_log_sds[d] * inv + 1.0;
    }
    ElboGradients {
        elbo: lp_sum * inv + vstate.entropy(),
        d_means,
        d_log_sds,
    }
}

fn adam_update(vstate: &mut VariationalState, eg: &ElboGradients, learning_rate: f64) {
    vstate.step += 1;
    let t = vstate.step as i32;
    let b1 = vstate.moment_weight;
    let corr1 = 1.0 - b1.powi(t);
    let corr2 = 1.0 - ADAM_B2.powi(t);
    let dim = vstate.means.len();
    for d in 0..2 * dim {
        let grad = if d < dim {
            eg.d_means[d]
        } else {
            eg.d_log_sds[d - dim]
        };
        let m = &mut vstate.adam_m[d];
        *m = b1 * *m + (1.0 - b1) * grad;
        let v = &mut vstate.adam_v[d];
        *v = ADAM_B2 * *v + (1.0 - ADAM_B2) * grad * grad;
        let step = learning_rate * (*m / corr1) / ((*v / corr2).sqrt() + ADAM_EPS);
        if d < dim {
            vstate.means[d] += step;
        } else {
            vstate.log_sds[d - dim] += step;
        }
    }
}

/// One stochastic optimization step over the given minibatch. Returns the
/// ELBO estimate. A non-finite gradient rejects the step, clamps the
/// log-sds back into range, and logs an incident on the state.
pub fn elbo_step<R: Rng>(
    vstate: &mut VariationalState,
    config: &ModelConfig,
    words: &[WordObservation],
    batch: &[usize],
    n_words_total: usize,
    rng: &mut R,
) -> f64 {
    let dim = vstate.dim();
    let noise: Vec<Vec<f64>> = (0..config.mc_samples)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let eg = elbo_gradients(vstate, config, &noise, words, batch, n_words_total);
    let finite = eg.elbo.is_finite()
        && eg.d_means.iter().all(|x| x.is_finite())
        && eg.d_log_sds.iter().all(|x| x.is_finite());
    if finite {
        adam_update(vstate, &eg, config.learning_rate);
    } else {
        vstate.incidents += 1;
        for x in vstate.log_sds.iter_mut() {
            *x = x.clamp(LOG_SD_FLOOR, LOG_SD_CEIL);
        }
    }
    eg.elbo
}

/// Draw constrained posterior samples from the fitted variational
/// distributions.
pub fn sample_posterior<R: Rng>(
    vstate: &VariationalState,
    n_samples: usize,
    rng: &mut R,
) -> Vec<LatentState> {
    let dim = vstate.dim();
    let sds: Vec<f64> = vstate.log_sds.iter().map(|x| x.exp()).collect();
    let mut out = Vec::with_capacity(n_samples);
    let mut u = vec![0.0; dim];
    for _ in 0..n_samples {
        for d in 0..dim {
            let eps: f64 = rng.sample(StandardNormal);
            u[d] = vstate.means[d] + sds[d] * eps;
        }
        let c = constrain(&vstate.layout, &u);
        out.push(to_latent_state(&vstate.layout, &c));
    }
    out
}

/// Result of one optimization chain.
#[derive(Debug, Clone)]
pub struct ChainResult {
    pub chain_id: usize,
    pub vstate: VariationalState,
    pub trace: PosteriorTrace,
    pub failed: bool,
}

fn chain_seed(seed: u64, chain_id: usize) -> u64 {
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(chain_id as u64 + 1))
}

fn run_chain(
    chain_id: usize,
    words: &[WordObservation],
    n_languages: usize,
    collection: &ChangeCollection,
    config: &ModelConfig,
) -> ChainResult {
    let mut rng = ChaCha12Rng::seed_from_u64(chain_seed(config.seed, chain_id));
    let mut vstate = VariationalState::init(config, n_languages, collection);
    let (lo, hi) = config.moment_weight_range;
    vstate.moment_weight = rng.random_range(lo..=hi);

    let n = words.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n; // forces a shuffle before the first batch
    let mut elbo_history = Vec::with_capacity(config.steps);
    let mut consecutive_bad = 0usize;
    let mut failed = false;

    for step in 0..config.steps {
        if cursor + config.minibatch > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch = &order[cursor..cursor + config.minibatch];
        cursor += config.minibatch;
        let elbo = elbo_step(&mut vstate, config, words, batch, n, &mut rng);
        elbo_history.push(elbo);

        if elbo.is_finite() {
            consecutive_bad = 0;
        } else {
            consecutive_bad += 1;
            if consecutive_bad >= DIVERGENCE_PATIENCE {
                failed = true;
                break;
            }
        }
        let done = step + 1;
        if done % EARLY_STOP_WINDOW == 0 && done >= 2 * EARLY_STOP_WINDOW {
            let cur: f64 =
                elbo_history[done - EARLY_STOP_WINDOW..done].iter().sum::<f64>()
                    / EARLY_STOP_WINDOW as f64;
            let prev: f64 = elbo_history
                [done - 2 * EARLY_STOP_WINDOW..done - EARLY_STOP_WINDOW]
                .iter()
                .sum::<f64>()
                / EARLY_STOP_WINDOW as f64;
            if cur.is_finite() && prev.is_finite() {
                let improvement = (cur - prev) / prev.abs().max(1.0);
                if improvement < EARLY_STOP_REL {
                    break;
                }
            }
        }
    }

    let samples = if failed {
        Vec::new()
    } else {
        sample_posterior(&vstate, config.trace_samples, &mut rng)
    };
    ChainResult {
        chain_id,
        vstate,
        trace: PosteriorTrace {
            chain_id,
            samples,
            elbo_history,
        },
        failed,
    }
}

/// Run `n_chains` independent optimizations from distinct seeded
/// initializations (in parallel; each chain is internally sequential and
/// reproducible from the config seed). Failed chains are marked and the
/// rest proceed; every chain failing is an error. The language count is
/// taken from the highest language index present; pass it explicitly via
/// [`fit_with_languages`] when trailing languages may have lost all their
/// words.
pub fn fit(
    words: &[WordObservation],
    collection: &ChangeCollection,
    config: &ModelConfig,
) -> Result<Vec<ChainResult>, ModelError> {
    let n_languages = words.iter().map(|w| w.language + 1).max().unwrap_or(0);
    fit_with_languages(words, n_languages, collection, config)
}

/// As [`fit`], with an explicit language count (θ gets one row per
/// language even if some languages carry no observations).
pub fn fit_with_languages(
    words: &[WordObservation],
    n_languages: usize,
    collection: &ChangeCollection,
    config: &ModelConfig,
) -> Result<Vec<ChainResult>, ModelError> {
    config.validate(words.len(), collection)?;
    for word in words {
        if word.events.is_empty() {
            return Err(ModelError::InvalidConfig(format!(
                "word {} has no events",
                word.word_id
            )));
        }
        if word.language >= n_languages {
            return Err(ModelError::InvalidConfig(format!(
                "word {} references language {} of {n_languages}",
                word.word_id, word.language
            )));
        }
        for &(p, r) in &word.events {
            let p = p as usize;
            if p >= collection.n_pairs() || r as usize >= collection.pairs[p].reflexes.len() {
                return Err(ModelError::InvalidConfig(format!(
                    "word {} references invalid slot ({p}, {r})",
                    word.word_id
                )));
            }
        }
    }

    let results: Vec<ChainResult> = (0..config.n_chains)
        .into_par_iter()
        .map(|chain_id| run_chain(chain_id, words, n_languages, collection, config))
        .collect();
    if results.iter().all(|r| r.failed) {
        return Err(ModelError::AllChainsFailed(config.n_chains));
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::{collection_of, word};
    use crate::model::ModelConfig;
    use crate::priors::{DirichletSpec, Prior};
    use approx::assert_abs_diff_eq;

    fn toy_words() -> Vec<WordObservation> {
        vec![
            word(0, 0, &[(0, 0), (1, 0)]),
            word(1, 0, &[(0, 0)]),
            word(2, 1, &[(0, 1), (1, 1)]),
            word(3, 1, &[(1, 1), (2, 1), (0, 1)]),
        ]
    }

    fn toy_config(steps: usize) -> ModelConfig {
        let mut config = ModelConfig::new(Prior::Dirichlet(DirichletSpec::default()), steps);
        config.minibatch = 4;
        config.mc_samples = 2;
        config.trace_samples = 25;
        config.n_chains = 2;
        config.seed = 5;
        config
    }

    #[test]
    fn entropy_gradient_is_exactly_one() {
        let collection = collection_of(3);
        let config = toy_config(1);
        let vstate = VariationalState::init(&config, 2, &collection);
        let words = toy_words();
        let batch: Vec<usize> = (0..words.len()).collect();
        let noise: Vec<Vec<f64>> = vec![vec![0.0; vstate.dim()]; 3];
        let eg = elbo_gradients(&vstate, &config, &noise, &words, &batch, words.len());
        // with zero noise the joint gradient w.r.t. log-sd vanishes and
        // only the entropy term remains
        for d in &eg.d_log_sds {
            assert_abs_diff_eq!(*d, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn likelihood_scaling_uses_n_over_batch_size() {
        let collection = collection_of(3);
        let config = toy_config(1);
        let vstate = VariationalState::init(&config, 2, &collection);
        let words = toy_words();
        let n = words.len(); // 4
        let noise = vec![vec![0.0; vstate.dim()]];
        let prior_part = {
            let u = vec![0.0; vstate.dim()];
            let (lp, _) = log_joint_grad(&vstate.layout, &config.prior, &u, &words, &[], 0.0);
            lp + vstate.entropy()
        };
        // per-word marginal log likelihoods at the same (zero-noise) point
        let state = vstate.mean_state();
        let ll: Vec<f64> = words
            .iter()
            .map(|w| crate::model::marginal_word_loglik(w, &state, &collection))
            .collect();

        let one = elbo_gradients(&vstate, &config, &noise, &words, &[0], n);
        assert_abs_diff_eq!(one.elbo - prior_part, 4.0 * ll[0], epsilon = 1e-9);
        // doubling the batch size halves the N/|B| multiplier
        let two = elbo_gradients(&vstate, &config, &noise, &words, &[0, 1], n);
        assert_abs_diff_eq!(two.elbo - prior_part, 2.0 * (ll[0] + ll[1]), epsilon = 1e-9);
    }

    #[test]
    fn finite_difference_matches_analytic_gradient_dirichlet() {
        let collection = collection_of(3);
        let config = toy_config(1);
        let mut vstate = VariationalState::init(&config, 2, &collection);
        // move off the symmetric origin
        for (i, m) in vstate.means.iter_mut().enumerate() {
            *m = (i as f64 * 0.713).sin() * 0.4;
        }
        for (i, x) in vstate.log_sds.iter_mut().enumerate() {
            *x = -1.0 + (i as f64 * 0.311).cos() * 0.2;
        }
        let words = toy_words();
        let batch: Vec<usize> = (0..words.len()).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let dim = vstate.dim();
        let noise: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();

        let eg = elbo_gradients(&vstate, &config, &noise, &words, &batch, words.len());
        let h = 1e-5;
        for d in 0..dim {
            // means
            let mut plus = vstate.clone();
            plus.means[d] += h;
            let mut minus = vstate.clone();
            minus.means[d] -= h;
            let fd = (elbo_gradients(&plus, &config, &noise, &words, &batch, 4).elbo
                - elbo_gradients(&minus, &config, &noise, &words, &batch, 4).elbo)
                / (2.0 * h);
            let denom = eg.d_means[d].abs().max(fd.abs()).max(1e-4);
            assert!(
                ((eg.d_means[d] - fd) / denom).abs() < 1e-4,
                "mean coord {d}: analytic {} vs fd {fd}",
                eg.d_means[d]
            );
            // log-sds
            let mut plus = vstate.clone();
            plus.log_sds[d] += h;
            let mut minus = vstate.clone();
            minus.log_sds[d] -= h;
            let fd = (elbo_gradients(&plus, &config, &noise, &words, &batch, 4).elbo
                - elbo_gradients(&minus, &config, &noise, &words, &batch, 4).elbo)
                / (2.0 * h);
            let denom = eg.d_log_sds[d].abs().max(fd.abs()).max(1e-4);
            assert!(
                ((eg.d_log_sds[d] - fd) / denom).abs() < 1e-4,
                "log-sd coord {d}: analytic {} vs fd {fd}",
                eg.d_log_sds[d]
            );
        }
    }

    #[test]
    fn finite_difference_matches_analytic_gradient_logistic_normal() {
        let collection = collection_of(2);
        let dim_s = collection.flat_size;
        let mut sigma = vec![0.0; dim_s * dim_s];
        for i in 0..dim_s {
            for j in 0..dim_s {
                sigma[i * dim_s + j] = if i == j { 3.0 } else { 0.4 };
            }
        }
        let spec = crate::priors::CovarianceSpec::from_matrix(
            dim_s,
            sigma,
            4.0,
            3.0,
            collection.partition(),
        )
        .unwrap();
        let mut config = toy_config(1);
        config.prior = Prior::LogisticNormal(spec);
        let mut vstate = VariationalState::init(&config, 2, &collection);
        for (i, m) in vstate.means.iter_mut().enumerate() {
            *m = (i as f64 * 0.57).cos() * 0.3;
        }
        let words = toy_words()
            .into_iter()
            .map(|mut w| {
                w.events.retain(|&(p, _)| (p as usize) < 2);
                w
            })
            .filter(|w| !w.events.is_empty())
            .collect::<Vec<_>>();
        let batch: Vec<usize> = (0..words.len()).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let dim = vstate.dim();
        let noise: Vec<Vec<f64>> = (0..32)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let eg = elbo_gradients(&vstate, &config, &noise, &words, &batch, words.len());
        let h = 1e-5;
        for d in 0..dim {
            let mut plus = vstate.clone();
            plus.means[d] += h;
            let mut minus = vstate.clone();
            minus.means[d] -= h;
            let fd = (elbo_gradients(&plus, &config, &noise, &words, &batch, words.len()).elbo
                - elbo_gradients(&minus, &config, &noise, &words, &batch, words.len()).elbo)
                / (2.0 * h);
            let denom = eg.d_means[d].abs().max(fd.abs()).max(1e-4);
            assert!(
                ((eg.d_means[d] - fd) / denom).abs() < 1e-4,
                "mean coord {d}: analytic {} vs fd {fd}",
                eg.d_means[d]
            );
        }
    }

    #[test]
    fn non_finite_gradient_rejects_step_and_clamps_log_sds() {
        let collection = collection_of(3);
        let config = toy_config(1);
        let mut vstate = VariationalState::init(&config, 2, &collection);
        // absurd variational spread: reparameterized draws overflow the
        // log joint, so the step must be rejected
        for x in vstate.log_sds.iter_mut() {
            *x = 50.0;
        }
        let words = toy_words();
        let batch: Vec<usize> = (0..words.len()).collect();
        let before_means = vstate.means.clone();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let elbo = elbo_step(&mut vstate, &config, &words, &batch, words.len(), &mut rng);
        assert!(!elbo.is_finite());
        assert_eq!(vstate.incidents, 1);
        assert_eq!(vstate.step, 0, "rejected steps do not advance the optimizer");
        assert_eq!(vstate.means, before_means);
        assert!(vstate.log_sds.iter().all(|&x| (-8.0..=4.0).contains(&x)));
    }

    #[test]
    fn zero_steps_samples_from_initialization() {
        let collection = collection_of(3);
        let config = toy_config(0);
        let words = toy_words();
        let results = fit(&words, &collection, &config).unwrap();
        assert_eq!(results.len(), 2);
        for r in &results {
            assert!(!r.failed);
            assert!(r.trace.elbo_history.is_empty());
            assert_eq!(r.trace.samples.len(), 25);
            for s in &r.trace.samples {
                assert!(s.beta > 0.0);
                for row in &s.theta {
                    assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn fit_is_reproducible_for_fixed_seed() {
        let collection = collection_of(3);
        let config = toy_config(40);
        let words = toy_words();
        let a = fit(&words, &collection, &config).unwrap();
        let b = fit(&words, &collection, &config).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.trace.elbo_history, y.trace.elbo_history);
            assert_eq!(x.vstate.means, y.vstate.means);
        }
        // distinct chains use distinct moment weights and trajectories
        assert_ne!(a[0].trace.elbo_history, a[1].trace.elbo_history);
    }

    #[test]
    fn elbo_improves_on_toy_data() {
        let collection = collection_of(3);
        let mut config = toy_config(400);
        config.n_chains = 1;
        config.mc_samples = 4;
        let words = toy_words();
        let results = fit(&words, &collection, &config).unwrap();
        let history = &results[0].trace.elbo_history;
        let tenth = history.len() / 10;
        let first: f64 = history[..tenth].iter().sum::<f64>() / tenth as f64;
        let last: f64 = history[history.len() - tenth..].iter().sum::<f64>() / tenth as f64;
        assert!(
            last > first,
            "ELBO should improve: first {first}, last {last}"
        );
    }
}
