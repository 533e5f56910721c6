//! Unconstrained parameterization of the latent state.
//!
//! Coordinates: one for log β, then L×(K-1) additive log-ratio coordinates
//! for θ (last component as reference), then the φ coordinates per
//! component — additive log-ratio per block under the Dirichlet prior
//! (reference slot is the last of each block), or the full S-length latent
//! vector under the logistic-normal prior.

use super::{LatentState, ModelConfig};
use crate::changes::ChangeCollection;
use crate::priors::Prior;
use crate::stats::logsumexp;
use std::ops::Range;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ParamLayout {
    pub k: usize,
    pub l: usize,
    pub s: usize,
    pub blocks: Vec<Range<usize>>,
    pub partition: Vec<usize>,
    pub dirichlet_phi: bool,
    pub theta_offset: usize,
    pub phi_offset: usize,
    /// Free φ coordinates per component.
    pub phi_per_component: usize,
    /// Per block, offset of its free coordinates within one component
    /// (Dirichlet branch only).
    pub block_free_offsets: Vec<usize>,
    pub dim: usize,
}

impl ParamLayout {
    pub fn new(k: usize, n_languages: usize, collection: &ChangeCollection, prior: &Prior) -> Self {
        let s = collection.flat_size;
        let blocks: Vec<Range<usize>> = (0..collection.n_pairs()).map(|p| collection.block(p)).collect();
        let dirichlet_phi = matches!(prior, Prior::Dirichlet(_));
        let mut block_free_offsets = Vec::with_capacity(blocks.len());
        let mut free = 0;
        for block in &blocks {
            block_free_offsets.push(free);
            free += block.len() - 1;
        }
        let phi_per_component = if dirichlet_phi { free } else { s };
        let theta_offset = 1;
        let phi_offset = theta_offset + n_languages * (k - 1);
        let dim = phi_offset + k * phi_per_component;
        Self {
            k,
            l: n_languages,
            s,
            blocks,
            partition: collection.partition(),
            dirichlet_phi,
            theta_offset,
            phi_offset,
            phi_per_component,
            block_free_offsets,
            dim,
        }
    }

    pub fn beta_idx(&self) -> usize {
        0
    }

    /// Free θ coordinate `j` (0..K-1) of language `lang`.
    pub fn theta_idx(&self, lang: usize, j: usize) -> usize {
        debug_assert!(j < self.k - 1);
        self.theta_offset + lang * (self.k - 1) + j
    }

    /// Free φ coordinate `t` of `block` under component `comp`
    /// (Dirichlet branch; each block has |block|-1 free coordinates).
    pub fn phi_idx_dirichlet(&self, comp: usize, block: usize, t: usize) -> usize {
        debug_assert!(self.dirichlet_phi);
        debug_assert!(t + 1 < self.blocks[block].len());
        self.phi_offset + comp * self.phi_per_component + self.block_free_offsets[block] + t
    }

    /// Latent φ coordinate of `slot` under component `comp`
    /// (logistic-normal branch).
    pub fn phi_idx_latent(&self, comp: usize, slot: usize) -> usize {
        debug_assert!(!self.dirichlet_phi);
        self.phi_offset + comp * self.phi_per_component + slot
    }
}

/// Constrained view of one unconstrained point.
#[derive(Debug, Clone)]
pub(crate) struct Constrained {
    pub beta: f64,
    /// L×K row-major.
    pub theta: Vec<f64>,
    pub log_theta: Vec<f64>,
    /// K×S row-major.
    pub phi: Vec<f64>,
    pub log_phi: Vec<f64>,
    /// K×S latent vector copies (logistic-normal branch only).
    pub latent_phi: Option<Vec<f64>>,
}

/// Map unconstrained coordinates to the constrained space.
pub(crate) fn constrain(layout: &ParamLayout, u: &[f64]) -> Constrained {
    debug_assert_eq!(u.len(), layout.dim);
    let (k, l, s) = (layout.k, layout.l, layout.s);
    let beta = u[layout.beta_idx()].exp();

    let mut theta = vec![0.0; l * k];
    let mut log_theta = vec![0.0; l * k];
    let mut scratch = vec![0.0; k];
    for lang in 0..l {
        for j in 0..k - 1 {
            scratch[j] = u[layout.theta_idx(lang, j)];
        }
        scratch[k - 1] = 0.0;
        let lse = logsumexp(&scratch);
        for j in 0..k {
            log_theta[lang * k + j] = scratch[j] - lse;
            theta[lang * k + j] = (scratch[j] - lse).exp();
        }
    }

    let mut phi = vec![0.0; k * s];
    let mut log_phi = vec![0.0; k * s];
    let mut latent_phi = if layout.dirichlet_phi {
        None
    } else {
        Some(vec![0.0; k * s])
    };
    for comp in 0..k {
        if layout.dirichlet_phi {
            for (b, block) in layout.blocks.iter().enumerate() {
                let m = block.len();
                let mut v = vec![0.0; m];
                for t in 0..m - 1 {
                    v[t] = u[layout.phi_idx_dirichlet(comp, b, t)];
                }
                v[m - 1] = 0.0;
                let lse = logsumexp(&v);
                for (t, slot) in block.clone().enumerate() {
                    log_phi[comp * s + slot] = v[t] - lse;
                    phi[comp * s + slot] = (v[t] - lse).exp();
                }
            }
        } else {
            let latent = latent_phi.as_mut().expect("latent branch");
            for slot in 0..s {
                latent[comp * s + slot] = u[layout.phi_idx_latent(comp, slot)];
            }
            for block in &layout.blocks {
                let v = &latent[comp * s + block.start..comp * s + block.end];
                let lse = logsumexp(v);
                for (t, slot) in block.clone().enumerate() {
                    log_phi[comp * s + slot] = v[t] - lse;
                    phi[comp * s + slot] = (v[t] - lse).exp();
                }
            }
        }
    }

    Constrained {
        beta,
        theta,
        log_theta,
        phi,
        log_phi,
        latent_phi,
    }
}

pub(crate) fn to_latent_state(layout: &ParamLayout, c: &Constrained) -> LatentState {
    let (k, l, s) = (layout.k, layout.l, layout.s);
    LatentState {
        beta: c.beta,
        theta: (0..l)
            .map(|lang| c.theta[lang * k..(lang + 1) * k].to_vec())
            .collect(),
        phi: (0..k)
            .map(|comp| c.phi[comp * s..(comp + 1) * s].to_vec())
            .collect(),
    }
}

/// Per-coordinate Gaussian variational state plus optimizer moments.
#[derive(Debug, Clone)]
pub struct VariationalState {
    pub means: Vec<f64>,
    pub log_sds: Vec<f64>,
    /// Adam first/second moments over (means ++ log_sds).
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step: u64,
    /// Chain-specific Adam moment weight β₁.
    pub moment_weight: f64,
    /// Rejected-step incidents (non-finite gradients).
    pub incidents: u32,
    pub(crate) layout: ParamLayout,
}

impl VariationalState {
    /// Means at zero, log standard deviations at -1, no optimizer history.
    pub fn init(config: &ModelConfig, n_languages: usize, collection: &ChangeCollection) -> Self {
        let layout = ParamLayout::new(config.k, n_languages, collection, &config.prior);
        let dim = layout.dim;
        Self {
            means: vec![0.0; dim],
            log_sds: vec![-1.0; dim],
            adam_m: vec![0.0; 2 * dim],
            adam_v: vec![0.0; 2 * dim],
            step: 0,
            moment_weight: (config.moment_weight_range.0 + config.moment_weight_range.1) / 2.0,
            incidents: 0,
            layout,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    /// Gaussian entropy of the factorized variational distribution.
    pub fn entropy(&self) -> f64 {
        let half_log_2pi_e = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        self.log_sds.iter().sum::<f64>() + self.log_sds.len() as f64 * half_log_2pi_e
    }

    /// The constrained state at the variational means (a point summary).
    pub fn mean_state(&self) -> LatentState {
        let c = constrain(&self.layout, &self.means);
        to_latent_state(&self.layout, &c)
    }
}
