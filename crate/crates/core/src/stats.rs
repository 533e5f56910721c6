//! Small numeric helpers shared across modules.

/// log(sum(exp(xs))) with max subtraction. Returns -inf for an empty slice
/// or a slice of -inf entries.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// In-place softmax with max subtraction.
pub fn softmax_in_place(xs: &mut [f64]) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in xs.iter_mut() {
        *x /= z;
    }
}

/// Natural-log gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Digamma function ψ(x) for x > 0: upward recurrence into the asymptotic
/// regime, then the standard series in 1/x². Non-positive (or NaN) inputs
/// return NaN, so overflowed optimizer excursions surface as non-finite
/// gradients and get rejected rather than panicking.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln()
        - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)))
}

/// Standard normal upper-tail probability P(Z > z).
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Sample mean; 0 for empty input.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n-1 denominator); 0 for fewer than two points.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// FNV-1a 64-bit content hash.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Shannon entropy (natural log) of a probability vector. Zero entries
/// contribute zero.
pub fn entropy(probs: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in probs {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logsumexp_matches_direct_sum() {
        let xs = [0.3f64, -1.2, 2.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_abs_diff_eq!(logsumexp(&xs), direct, epsilon = 1e-12);
    }

    #[test]
    fn logsumexp_handles_extremes() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        // no overflow at large magnitudes
        let v = logsumexp(&[1000.0, 1000.0]);
        assert_abs_diff_eq!(v, 1000.0 + 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn digamma_known_values() {
        // ψ(1) = -γ, ψ(0.5) = -γ - 2 ln 2
        let gamma = 0.577_215_664_901_532_9;
        assert_abs_diff_eq!(digamma(1.0), -gamma, epsilon = 1e-10);
        assert_abs_diff_eq!(
            digamma(0.5),
            -gamma - 2.0 * std::f64::consts::LN_2,
            epsilon = 1e-10
        );
        // recurrence ψ(x+1) = ψ(x) + 1/x
        assert_abs_diff_eq!(digamma(3.7), digamma(2.7) + 1.0 / 2.7, epsilon = 1e-10);
        // out-of-domain inputs surface as NaN, not panics
        assert!(digamma(0.0).is_nan());
        assert!(digamma(-1.0).is_nan());
        assert!(digamma(f64::NAN).is_nan());
    }

    #[test]
    fn normal_sf_symmetry_and_tail() {
        assert_abs_diff_eq!(normal_sf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_sf(1.96), 0.024_997_895_148_220_43, epsilon = 1e-9);
        assert!(normal_sf(6.0) < 1e-8);
        assert_abs_diff_eq!(normal_sf(-1.0) + normal_sf(1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_uniform_is_ln_k() {
        assert_abs_diff_eq!(entropy(&[0.5, 0.5]), 2f64.ln(), epsilon = 1e-12);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }
}
