//! Prior families over the ragged collection of reflex distributions:
//! symmetric Dirichlet and partitioned logistic normal, including the
//! feature-based covariance construction.

use crate::changes::{ChangeCollection, RewriteRule};
use crate::stats::{ln_gamma, logsumexp};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

/// Number of phonological features compared per position.
pub const N_FEATURES: usize = 5;

/// Probabilities are clamped here before logs in simplex-space densities.
pub const SIMPLEX_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PriorsError {
    #[error("segment {0:?} has no feature entry")]
    MissingFeature(String),
    #[error("bad feature file line {line}: {message}")]
    BadFeatureFile { line: usize, message: String },
    #[error("covariance repair failed: smallest eigenvalue {smallest_eigenvalue:.3e} after ridge {ridge:.3e}")]
    NotPositiveDefinite {
        smallest_eigenvalue: f64,
        ridge: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Symmetric Dirichlet concentration over each reflex block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletSpec {
    pub alpha: f64,
}

impl Default for DirichletSpec {
    fn default() -> Self {
        Self { alpha: 0.01 }
    }
}

/// Feature assignments per segment, read from a TSV with columns
/// segment, consonance, place, manner, voicing, nasality. Values are
/// opaque labels compared for equality. Nasalized vowels fall back to
/// their base row with nasality forced to `nas`.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    entries: HashMap<String, [String; N_FEATURES]>,
    /// Content hash of the source text, used to key covariance caches.
    fingerprint: u64,
}

impl FeatureTable {
    pub fn parse(text: &str) -> Result<Self, PriorsError> {
        let fingerprint = crate::stats::fnv64(text.as_bytes());
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            // comment lines start with '#' unless the row is for the
            // boundary token itself ("#<TAB>...")
            if line.starts_with('#') && !line.starts_with("#\t") {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != N_FEATURES + 1 {
                return Err(PriorsError::BadFeatureFile {
                    line: idx + 1,
                    message: format!("expected {} columns, got {}", N_FEATURES + 1, cols.len()),
                });
            }
            let mut features: [String; N_FEATURES] = Default::default();
            for (slot, value) in features.iter_mut().zip(cols[1..].iter()) {
                *slot = value.trim().to_string();
            }
            entries.insert(cols[0].to_string(), features);
        }
        Ok(Self {
            entries,
            fingerprint,
        })
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn from_path(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// The feature table shipped with the crate.
    pub fn shipped() -> Self {
        Self::parse(include_str!("../data/features.tsv")).expect("shipped feature table parses")
    }

    pub fn lookup(&self, segment: &str) -> Result<[&str; N_FEATURES], PriorsError> {
        if let Some(row) = self.entries.get(segment) {
            return Ok([&row[0], &row[1], &row[2], &row[3], &row[4]]);
        }
        if let Some(base) = segment.strip_suffix('\u{0303}') {
            if let Some(row) = self.entries.get(base) {
                return Ok([&row[0], &row[1], &row[2], "nas", &row[4]]);
            }
        }
        Err(PriorsError::MissingFeature(segment.to_string()))
    }
}

fn positions_mismatch(
    x1: [&str; N_FEATURES],
    x2: [&str; N_FEATURES],
    y1: [&str; N_FEATURES],
    y2: [&str; N_FEATURES],
) -> u32 {
    let mut total = 0;
    for d in 0..N_FEATURES {
        if x1[d] != x2[d] || y1[d] != y2[d] {
            total += 1;
        }
    }
    total
}

/// Count feature mismatches between two rules: for each feature, one unit
/// if the (source, reflex) pair disagrees, plus one if the (left, right)
/// environment pair disagrees. Range 0..=10.
pub fn feature_mismatch(
    rule_a: &RewriteRule,
    rule_b: &RewriteRule,
    features: &FeatureTable,
) -> Result<u32, PriorsError> {
    let src_a = features.lookup(&rule_a.source)?;
    let src_b = features.lookup(&rule_b.source)?;
    let ref_a = features.lookup(&rule_a.reflex)?;
    let ref_b = features.lookup(&rule_b.reflex)?;
    let left_a = features.lookup(&rule_a.left)?;
    let left_b = features.lookup(&rule_b.left)?;
    let right_a = features.lookup(&rule_a.right)?;
    let right_b = features.lookup(&rule_b.right)?;
    Ok(positions_mismatch(src_a, src_b, ref_a, ref_b)
        + positions_mismatch(left_a, left_b, right_a, right_b))
}

/// δ(a, b) = exp(−mismatch count), in (0, 1], 1 exactly for identical rules.
pub fn dissimilarity(
    rule_a: &RewriteRule,
    rule_b: &RewriteRule,
    features: &FeatureTable,
) -> Result<f64, PriorsError> {
    Ok((-(feature_mismatch(rule_a, rule_b, features)? as f64)).exp())
}

/// Precomputed lower-triangular factor of Σ with its log determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct CovFactor {
    dim: usize,
    /// Row-major lower triangle of L with Σ = L Lᵀ.
    lower: Vec<f64>,
    pub log_det: f64,
}

impl CovFactor {
    /// L z for a standard-normal z: one correlated draw.
    pub fn correlate(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.lower[i * n + j] * z[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Σ⁻¹ v via two triangular solves.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        // forward: L y = v
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = v[i];
            for j in 0..i {
                acc -= self.lower[i * n + j] * y[j];
            }
            y[i] = acc / self.lower[i * n + i];
        }
        // backward: Lᵀ x = y
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in (i + 1)..n {
                acc -= self.lower[j * n + i] * x[j];
            }
            x[i] = acc / self.lower[i * n + i];
        }
        x
    }

    /// Multivariate normal log density of a latent vector under (0, Σ).
    pub fn log_density(&self, latent: &[f64]) -> f64 {
        assert_eq!(latent.len(), self.dim);
        let solved = self.solve(latent);
        let quad: f64 = latent.iter().zip(&solved).map(|(a, b)| a * b).sum();
        -0.5 * (quad + self.dim as f64 * (2.0 * std::f64::consts::PI).ln() + self.log_det)
    }
}

/// Covariance of the partitioned logistic-normal prior. `sigma` is the
/// repaired S×S matrix (row-major); `ridge` records the diagonal amount
/// the positive-definiteness repair added (0 when the raw construction
/// already factorizes).
#[derive(Debug, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub dim: usize,
    pub sigma: Vec<f64>,
    pub eta: f64,
    pub diag_sigma: f64,
    pub ridge: f64,
    pub partition: Vec<usize>,
    #[serde(skip)]
    factor: OnceLock<CovFactor>,
}

impl Clone for CovarianceSpec {
    fn clone(&self) -> Self {
        let factor = OnceLock::new();
        if let Some(f) = self.factor.get() {
            let _ = factor.set(f.clone());
        }
        Self {
            dim: self.dim,
            sigma: self.sigma.clone(),
            eta: self.eta,
            diag_sigma: self.diag_sigma,
            ridge: self.ridge,
            partition: self.partition.clone(),
            factor,
        }
    }
}

impl PartialEq for CovarianceSpec {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.sigma == other.sigma
            && self.eta == other.eta
            && self.diag_sigma == other.diag_sigma
            && self.ridge == other.ridge
            && self.partition == other.partition
    }
}

fn cholesky_lower(dim: usize, sigma: &[f64]) -> Option<CovFactor> {
    let mut lower = vec![0.0; dim * dim];
    let mut log_det = 0.0;
    for i in 0..dim {
        for j in 0..=i {
            let mut acc = sigma[i * dim + j];
            for k in 0..j {
                acc -= lower[i * dim + k] * lower[j * dim + k];
            }
            if i == j {
                if acc <= 0.0 || !acc.is_finite() {
                    return None;
                }
                let root = acc.sqrt();
                lower[i * dim + i] = root;
                log_det += 2.0 * root.ln();
            } else {
                lower[i * dim + j] = acc / lower[j * dim + j];
            }
        }
    }
    Some(CovFactor {
        dim,
        lower,
        log_det,
    })
}

impl CovarianceSpec {
    /// Wrap a hand-built symmetric matrix, applying the same
    /// positive-definiteness repair as [`build_covariance`].
    pub fn from_matrix(
        dim: usize,
        mut sigma: Vec<f64>,
        eta: f64,
        diag_sigma: f64,
        partition: Vec<usize>,
    ) -> Result<Self, PriorsError> {
        assert_eq!(sigma.len(), dim * dim);
        assert_eq!(partition.len(), dim);
        let ridge = repair_in_place(dim, &mut sigma)?;
        Ok(Self {
            dim,
            sigma,
            eta,
            diag_sigma,
            ridge,
            partition,
            factor: OnceLock::new(),
        })
    }

    /// The precomputed triangular factor; computed on first use.
    pub fn factor(&self) -> &CovFactor {
        self.factor.get_or_init(|| {
            cholesky_lower(self.dim, &self.sigma)
                .expect("repaired covariance must be positive definite")
        })
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.dim + j]
    }

    /// Cache key over the collection layout, the feature file, and the
    /// construction constants.
    pub fn cache_key(collection: &ChangeCollection, features: &FeatureTable, eta: f64, diag_sigma: f64) -> u64 {
        let doc = serde_json::to_string(collection).expect("collection serializes");
        let mut bytes = doc.into_bytes();
        bytes.extend_from_slice(&features.fingerprint().to_le_bytes());
        bytes.extend_from_slice(&eta.to_le_bytes());
        bytes.extend_from_slice(&diag_sigma.to_le_bytes());
        crate::stats::fnv64(&bytes)
    }

    /// Serialize to the little-endian binary cache format.
    pub fn write_cache(&self, path: &Path, key: u64) -> std::io::Result<()> {
        let mut bytes = Vec::with_capacity(48 + 8 * (self.sigma.len() + self.partition.len()));
        bytes.extend_from_slice(COV_CACHE_MAGIC);
        bytes.extend_from_slice(&key.to_le_bytes());
        bytes.extend_from_slice(&(self.dim as u64).to_le_bytes());
        bytes.extend_from_slice(&self.eta.to_le_bytes());
        bytes.extend_from_slice(&self.diag_sigma.to_le_bytes());
        bytes.extend_from_slice(&self.ridge.to_le_bytes());
        for &p in &self.partition {
            bytes.extend_from_slice(&(p as u32).to_le_bytes());
        }
        for &v in &self.sigma {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes)
    }

    /// Read a cache file back; `Ok(None)` when the file is for different
    /// inputs (key mismatch) and should be rebuilt.
    pub fn read_cache(path: &Path, expected_key: u64) -> std::io::Result<Option<Self>> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
        if bytes.len() < 48 || &bytes[..8] != COV_CACHE_MAGIC {
            return Err(bad("not a covariance cache file"));
        }
        let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if u64_at(8) != expected_key {
            return Ok(None);
        }
        let dim = u64_at(16) as usize;
        let expected_len = 48 + 4 * dim + 8 * dim * dim;
        if bytes.len() != expected_len {
            return Err(bad("truncated covariance cache file"));
        }
        let partition: Vec<usize> = (0..dim)
            .map(|i| {
                u32::from_le_bytes(bytes[48 + 4 * i..52 + 4 * i].try_into().unwrap()) as usize
            })
            .collect();
        let base = 48 + 4 * dim;
        let sigma: Vec<f64> = (0..dim * dim).map(|i| f64_at(base + 8 * i)).collect();
        Ok(Some(Self {
            dim,
            sigma,
            eta: f64_at(24),
            diag_sigma: f64_at(32),
            ridge: f64_at(40),
            partition,
            factor: OnceLock::new(),
        }))
    }
}

const COV_CACHE_MAGIC: &[u8; 8] = b"ISGCOV1\0";

/// Smallest eigenvalue the repaired matrix must clear.
pub const MIN_EIGENVALUE: f64 = 1e-8;

/// Ridge repair: double c from 1e-8 until the factorization succeeds with
/// an eigenvalue margin of twice [`MIN_EIGENVALUE`] (checked by
/// factorizing the floor-shifted matrix; the factor of two keeps the
/// guarantee clear of eigensolver roundoff). Returns the total ridge added
/// to the diagonal.
fn repair_in_place(dim: usize, sigma: &mut [f64]) -> Result<f64, PriorsError> {
    let pd_with_margin = |m: &[f64]| {
        let mut shifted = m.to_vec();
        for i in 0..dim {
            shifted[i * dim + i] -= 2.0 * MIN_EIGENVALUE;
        }
        cholesky_lower(dim, &shifted).is_some()
    };
    if pd_with_margin(sigma) {
        return Ok(0.0);
    }
    let mut ridge = 1e-8;
    while ridge <= 1e6 {
        let mut trial = sigma.to_vec();
        for i in 0..dim {
            trial[i * dim + i] += ridge;
        }
        if pd_with_margin(&trial) {
            sigma.copy_from_slice(&trial);
            return Ok(ridge);
        }
        ridge *= 2.0;
    }
    let smallest = smallest_eigenvalue(dim, sigma);
    Err(PriorsError::NotPositiveDefinite {
        smallest_eigenvalue: smallest,
        ridge,
    })
}

/// Smallest eigenvalue of a symmetric matrix (diagnostic only).
pub fn smallest_eigenvalue(dim: usize, sigma: &[f64]) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(dim, dim, sigma);
    m.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Build Σ from the collection: δ within a pair, η·δ across pairs, plus a
/// diagonal constant, then positive-definiteness repair.
pub fn build_covariance(
    collection: &ChangeCollection,
    features: &FeatureTable,
    eta: f64,
    diag_sigma: f64,
) -> Result<CovarianceSpec, PriorsError> {
    let dim = collection.flat_size;
    let partition = collection.partition();

    // Interned per-slot feature vectors: source, reflex, left, right.
    let mut interner: HashMap<String, u32> = HashMap::new();
    let mut intern = |value: &str| -> u32 {
        let next = interner.len() as u32;
        *interner.entry(value.to_string()).or_insert(next)
    };
    let mut slot_feats: Vec<[u32; 4 * N_FEATURES]> = Vec::with_capacity(dim);
    for slot in 0..dim {
        let rule = collection.rule_for_slot(slot);
        let mut row = [0u32; 4 * N_FEATURES];
        for (part, token) in [&rule.source, &rule.reflex, &rule.left, &rule.right]
            .into_iter()
            .enumerate()
        {
            let looked = features.lookup(token)?;
            for d in 0..N_FEATURES {
                row[part * N_FEATURES + d] = intern(looked[d]);
            }
        }
        slot_feats.push(row);
    }

    let mismatch = |a: &[u32; 4 * N_FEATURES], b: &[u32; 4 * N_FEATURES]| -> u32 {
        let mut total = 0;
        for d in 0..N_FEATURES {
            // source/reflex position pair
            if a[d] != b[d] || a[N_FEATURES + d] != b[N_FEATURES + d] {
                total += 1;
            }
            // left/right environment pair
            if a[2 * N_FEATURES + d] != b[2 * N_FEATURES + d]
                || a[3 * N_FEATURES + d] != b[3 * N_FEATURES + d]
            {
                total += 1;
            }
        }
        total
    };

    let mut sigma = vec![0.0; dim * dim];
    for i in 0..dim {
        sigma[i * dim + i] = 1.0 + diag_sigma;
        for j in (i + 1)..dim {
            let delta = (-(mismatch(&slot_feats[i], &slot_feats[j]) as f64)).exp();
            let value = if partition[i] == partition[j] {
                delta
            } else {
                eta * delta
            };
            sigma[i * dim + j] = value;
            sigma[j * dim + i] = value;
        }
    }
    let ridge = repair_in_place(dim, &mut sigma)?;
    Ok(CovarianceSpec {
        dim,
        sigma,
        eta,
        diag_sigma,
        ridge,
        partition,
        factor: OnceLock::new(),
    })
}

/// A flat vector of probabilities that sums to one within each partition
/// block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionSimplex {
    pub values: Vec<f64>,
    pub partition: Vec<usize>,
}

impl CollectionSimplex {
    /// Verify block sums and ranges within the stated tolerance.
    pub fn is_valid(&self, tolerance: f64) -> bool {
        if self.values.len() != self.partition.len() {
            return false;
        }
        for range in block_ranges(&self.partition) {
            let total: f64 = self.values[range.clone()].iter().sum();
            if (total - 1.0).abs() > tolerance {
                return false;
            }
            if self.values[range].iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return false;
            }
        }
        true
    }
}

/// Contiguous block ranges of a per-slot partition vector.
pub fn block_ranges(partition: &[usize]) -> Vec<Range<usize>> {
    let mut ranges = Vec::new();
    let mut start = 0;
    for i in 1..=partition.len() {
        if i == partition.len() || partition[i] != partition[i - 1] {
            ranges.push(start..i);
            start = i;
        }
    }
    ranges
}

/// Blockwise softmax with max subtraction.
pub fn softmax_partitioned(latent: &[f64], partition: &[usize]) -> CollectionSimplex {
    assert_eq!(latent.len(), partition.len());
    let mut values = vec![0.0; latent.len()];
    for range in block_ranges(partition) {
        let block = &latent[range.clone()];
        let log_z = logsumexp(block);
        for (out, &v) in values[range.clone()].iter_mut().zip(block.iter()) {
            *out = (v - log_z).exp();
        }
    }
    CollectionSimplex {
        values,
        partition: partition.to_vec(),
    }
}

/// Either prior family over the collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Prior {
    Dirichlet(DirichletSpec),
    LogisticNormal(CovarianceSpec),
}

impl Prior {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Prior::Dirichlet(_) => "dirichlet",
            Prior::LogisticNormal(_) => "logistic_normal",
        }
    }
}

/// Log of a Gamma(alpha, 1) draw, stable for small alpha via the boost
/// Gamma(alpha) = Gamma(alpha + 1) · U^(1/alpha).
fn log_gamma_draw<R: Rng>(alpha: f64, rng: &mut R) -> f64 {
    if alpha < 0.1 {
        let boosted = Gamma::new(alpha + 1.0, 1.0)
            .expect("valid gamma shape")
            .sample(rng);
        let u: f64 = rng.random();
        boosted.ln() + u.ln() / alpha
    } else {
        let draw: f64 = Gamma::new(alpha, 1.0).expect("valid gamma shape").sample(rng);
        draw.ln()
    }
}

/// One symmetric Dirichlet draw of dimension `k`, via normalized Gamma
/// draws in log space.
pub fn sample_dirichlet<R: Rng>(alpha: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let log_draws: Vec<f64> = (0..k).map(|_| log_gamma_draw(alpha, rng)).collect();
    let log_z = logsumexp(&log_draws);
    log_draws.iter().map(|x| (x - log_z).exp()).collect()
}

/// Draw one collection of block simplices from the prior.
pub fn sample_collection<R: Rng>(
    prior: &Prior,
    partition: &[usize],
    rng: &mut R,
) -> CollectionSimplex {
    match prior {
        Prior::Dirichlet(spec) => {
            // normalized Gamma draws per block, in log space
            let log_draws: Vec<f64> = (0..partition.len())
                .map(|_| log_gamma_draw(spec.alpha, rng))
                .collect();
            softmax_partitioned(&log_draws, partition)
        }
        Prior::LogisticNormal(spec) => {
            assert_eq!(spec.partition, partition, "partition mismatch");
            let z: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
            let latent = spec.factor().correlate(&z);
            softmax_partitioned(&latent, partition)
        }
    }
}

/// Blockwise Dirichlet log density of a collection simplex. Values are
/// clamped at [`SIMPLEX_FLOOR`] before logs.
pub fn dirichlet_collection_log_density(simplex: &CollectionSimplex, alpha: f64) -> f64 {
    let mut total = 0.0;
    for range in block_ranges(&simplex.partition) {
        let m = range.len() as f64;
        total += ln_gamma(m * alpha) - m * ln_gamma(alpha);
        for &v in &simplex.values[range] {
            total += (alpha - 1.0) * v.max(SIMPLEX_FLOOR).ln();
        }
    }
    total
}

/// Prior log density: Dirichlet branch takes the simplex values,
/// logistic-normal branch takes the pre-softmax latent vector.
pub enum PriorPoint<'a> {
    Simplex(&'a CollectionSimplex),
    Latent(&'a [f64]),
}

pub fn prior_log_density(prior: &Prior, point: PriorPoint<'_>) -> f64 {
    match (prior, point) {
        (Prior::Dirichlet(spec), PriorPoint::Simplex(simplex)) => {
            dirichlet_collection_log_density(simplex, spec.alpha)
        }
        (Prior::LogisticNormal(spec), PriorPoint::Latent(latent)) => {
            spec.factor().log_density(latent)
        }
        (Prior::Dirichlet(_), PriorPoint::Latent(_)) => {
            panic!("Dirichlet prior density is evaluated on the simplex")
        }
        (Prior::LogisticNormal(_), PriorPoint::Simplex(_)) => {
            panic!("logistic-normal prior density is evaluated on the latent vector")
        }
    }
}
