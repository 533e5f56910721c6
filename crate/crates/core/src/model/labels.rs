//! Component-label alignment across chains.
//!
//! Mixture components are only identified up to permutation, so chains
//! after the first are relabeled with the permutation minimizing the
//! relative entropy between mean θ matrices, with the first chain as the
//! reference.

use super::PosteriorTrace;

const KL_FLOOR: f64 = 1e-12;

fn mean_theta(trace: &PosteriorTrace) -> Vec<Vec<f64>> {
    let first = &trace.samples[0];
    let (l, k) = (first.theta.len(), first.theta[0].len());
    let mut mean = vec![vec![0.0; k]; l];
    for sample in &trace.samples {
        for lang in 0..l {
            for comp in 0..k {
                mean[lang][comp] += sample.theta[lang][comp];
            }
        }
    }
    let n = trace.samples.len() as f64;
    for row in &mut mean {
        for v in row {
            *v /= n;
        }
    }
    mean
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    fn heap(current: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if n <= 1 {
            out.push(current.clone());
            return;
        }
        for i in 0..n {
            heap(current, n - 1, out);
            if n.is_multiple_of(2) {
                current.swap(i, n - 1);
            } else {
                current.swap(0, n - 1);
            }
        }
    }
    heap(&mut current, k, &mut out);
    out
}

/// KL(reference || candidate ∘ perm) over the mean θ matrices.
fn kl_under_perm(reference: &[Vec<f64>], candidate: &[Vec<f64>], perm: &[usize]) -> f64 {
    let mut total = 0.0;
    for (ref_row, cand_row) in reference.iter().zip(candidate) {
        for (comp, &p) in ref_row.iter().enumerate() {
            let p = p.max(KL_FLOOR);
            let q = cand_row[perm[comp]].max(KL_FLOOR);
            total += p * (p / q).ln();
        }
    }
    total
}

fn apply_perm(trace: &mut PosteriorTrace, perm: &[usize]) {
    for sample in &mut trace.samples {
        for row in &mut sample.theta {
            let old = row.clone();
            for (comp, v) in row.iter_mut().enumerate() {
                *v = old[perm[comp]];
            }
        }
        let old_phi = sample.phi.clone();
        for (comp, row) in sample.phi.iter_mut().enumerate() {
            *row = old_phi[perm[comp]].clone();
        }
    }
}

/// Relabel every trace after the first to the reference chain's labels.
/// Traces without samples (failed chains) are passed through unchanged.
pub fn align_component_labels(traces: &[PosteriorTrace]) -> Vec<PosteriorTrace> {
    let mut out: Vec<PosteriorTrace> = traces.to_vec();
    let Some(reference) = out.iter().find(|t| !t.samples.is_empty()) else {
        return out;
    };
    let ref_mean = mean_theta(reference);
    let k = ref_mean[0].len();
    let perms = permutations(k);
    let ref_id = reference.chain_id;
    for trace in &mut out {
        if trace.chain_id == ref_id || trace.samples.is_empty() {
            continue;
        }
        let cand_mean = mean_theta(trace);
        let best = perms
            .iter()
            .min_by(|a, b| {
                kl_under_perm(&ref_mean, &cand_mean, a)
                    .total_cmp(&kl_under_perm(&ref_mean, &cand_mean, b))
            })
            .expect("at least one permutation");
        if best.iter().enumerate().any(|(i, &p)| i != p) {
            apply_perm(trace, best);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatentState;

    fn trace_from(chain_id: usize, thetas: Vec<Vec<Vec<f64>>>) -> PosteriorTrace {
        let samples = thetas
            .into_iter()
            .map(|theta| LatentState {
                beta: 0.2,
                theta,
                phi: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            })
            .collect();
        PosteriorTrace {
            chain_id,
            samples,
            elbo_history: Vec::new(),
        }
    }

    #[test]
    fn identical_traces_keep_identity_permutation() {
        let t0 = trace_from(0, vec![vec![vec![0.9, 0.1], vec![0.2, 0.8]]]);
        let t1 = trace_from(1, vec![vec![vec![0.9, 0.1], vec![0.2, 0.8]]]);
        let aligned = align_component_labels(&[t0.clone(), t1.clone()]);
        assert_eq!(aligned[1].samples[0].theta, t1.samples[0].theta);
        assert_eq!(aligned[1].samples[0].phi, t1.samples[0].phi);
    }

    #[test]
    fn swapped_trace_is_swapped_back() {
        let t0 = trace_from(0, vec![vec![vec![0.9, 0.1], vec![0.2, 0.8]]]);
        let swapped = trace_from(1, vec![vec![vec![0.1, 0.9], vec![0.8, 0.2]]]);
        let aligned = align_component_labels(&[t0.clone(), swapped]);
        assert_eq!(aligned[1].samples[0].theta, t0.samples[0].theta);
        // phi rows swap together with theta columns
        assert_eq!(aligned[1].samples[0].phi[0], vec![0.2, 0.8]);
    }

    #[test]
    fn alignment_is_idempotent() {
        let t0 = trace_from(0, vec![vec![vec![0.9, 0.1], vec![0.2, 0.8]]]);
        let t1 = trace_from(1, vec![vec![vec![0.15, 0.85], vec![0.75, 0.25]]]);
        let once = align_component_labels(&[t0, t1]);
        let twice = align_component_labels(&once);
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!(a.samples[0].theta, b.samples[0].theta);
            assert_eq!(a.samples[0].phi, b.samples[0].phi);
        }
    }

    #[test]
    fn relabeling_preserves_per_sample_value_multisets() {
        // permutation-only action: the multiset of theta rows is unchanged
        let t0 = trace_from(0, vec![vec![vec![0.9, 0.1], vec![0.2, 0.8]]]);
        let t1 = trace_from(1, vec![vec![vec![0.3, 0.7], vec![0.6, 0.4]]]);
        let before: Vec<Vec<f64>> = t1.samples[0]
            .theta
            .iter()
            .map(|row| {
                let mut r = row.clone();
                r.sort_by(f64::total_cmp);
                r
            })
            .collect();
        let aligned = align_component_labels(&[t0, t1]);
        let after: Vec<Vec<f64>> = aligned[1].samples[0]
            .theta
            .iter()
            .map(|row| {
                let mut r = row.clone();
                r.sort_by(f64::total_cmp);
                r
            })
            .collect();
        assert_eq!(before, after);
    }
}
