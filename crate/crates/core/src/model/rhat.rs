//! Potential scale reduction factor over posterior traces.

use super::PosteriorTrace;
use crate::stats::{mean, sample_variance};
use serde::{Deserialize, Serialize};

/// Convergence threshold used for the summary counts.
pub const RHAT_THRESHOLD: f64 = 1.1;

/// R̂ values per parameter, in the layout of the latent state, plus the
/// counts-below-1.1 summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rhat_beta: f64,
    pub beta_degenerate: bool,
    /// Row-major L×K.
    pub rhat_theta: Vec<f64>,
    /// Row-major K×S.
    pub rhat_phi: Vec<f64>,
    pub theta_below_threshold: usize,
    pub theta_total: usize,
    pub phi_below_threshold: usize,
    pub phi_total: usize,
}

/// Between/within-variance R̂ for one scalar parameter. Returns the value
/// and a degeneracy flag: zero within-chain variance reports 1.0, flagged.
pub fn rhat_scalar(chains: &[Vec<f64>]) -> (f64, bool) {
    assert!(chains.len() >= 2, "rhat needs at least two chains");
    let n = chains.iter().map(Vec::len).min().expect("non-empty");
    assert!(n >= 2, "rhat needs at least two samples per chain");
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let within = mean(
        &chains
            .iter()
            .map(|c| sample_variance(&c[..n]))
            .collect::<Vec<_>>(),
    );
    if within == 0.0 {
        return (1.0, true);
    }
    let between_over_n = sample_variance(&means);
    let value = ((nf - 1.0) / nf + between_over_n / within).sqrt();
    (value, false)
}

/// R̂ for every scalar parameter across the given traces, with counts of
/// parameters under the 1.1 threshold. Failed (empty) traces are skipped.
pub fn rhat(traces: &[PosteriorTrace]) -> ConvergenceReport {
    let usable: Vec<&PosteriorTrace> = traces.iter().filter(|t| !t.samples.is_empty()).collect();
    assert!(usable.len() >= 2, "rhat needs at least two usable traces");
    let first = &usable[0].samples[0];
    let (l, k) = (first.theta.len(), first.theta[0].len());
    let s = first.phi[0].len();

    let collect = |extract: &dyn Fn(&super::LatentState) -> f64| -> Vec<Vec<f64>> {
        usable
            .iter()
            .map(|t| t.samples.iter().map(extract).collect())
            .collect()
    };

    let (rhat_beta, beta_degenerate) = rhat_scalar(&collect(&|x| x.beta));

    let mut rhat_theta = Vec::with_capacity(l * k);
    for lang in 0..l {
        for comp in 0..k {
            let (v, _) = rhat_scalar(&collect(&move |x| x.theta[lang][comp]));
            rhat_theta.push(v);
        }
    }
    let mut rhat_phi = Vec::with_capacity(k * s);
    for comp in 0..k {
        for slot in 0..s {
            let (v, _) = rhat_scalar(&collect(&move |x| x.phi[comp][slot]));
            rhat_phi.push(v);
        }
    }

    let theta_below = rhat_theta.iter().filter(|&&v| v < RHAT_THRESHOLD).count();
    let phi_below = rhat_phi.iter().filter(|&&v| v < RHAT_THRESHOLD).count();
    ConvergenceReport {
        rhat_beta,
        beta_degenerate,
        theta_below_threshold: theta_below,
        theta_total: rhat_theta.len(),
        phi_below_threshold: phi_below,
        phi_total: rhat_phi.len(),
        rhat_theta,
        rhat_phi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn identical_chains_are_flagged_degenerate() {
        let chain = vec![1.0, 1.0, 1.0, 1.0];
        let (v, degenerate) = rhat_scalar(&[chain.clone(), chain]);
        assert_eq!(v, 1.0);
        assert!(degenerate);
    }

    #[test]
    fn same_distribution_chains_converge() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut mk = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
        };
        let chains = vec![mk(500), mk(500), mk(500), mk(500)];
        let (v, degenerate) = rhat_scalar(&chains);
        assert!(!degenerate);
        assert!(v < 1.1, "rhat {v}");
    }

    #[test]
    fn disjoint_means_blow_past_threshold() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let a: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 0.1).collect();
        let b: Vec<f64> = (0..200).map(|_| 10.0 + rng.random::<f64>() * 0.1).collect();
        let (v, _) = rhat_scalar(&[a, b]);
        assert!(v > 1.1, "rhat {v}");
    }
}
