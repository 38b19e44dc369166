//! Differential-privacy primitives: Gaussian marginal measurement,
//! exponential-mechanism selection, simplex projection, and sequential
//! composition accounting.

use crate::core::{Error, MarginalTable, Result, RngHandle};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// An (ε, δ) privacy target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Parameter(format!("delta must lie in [0,1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }
}

/// One accounted privacy expenditure.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub label: String,
    pub epsilon: f64,
    pub delta: f64,
}

impl LedgerEntry {
    pub fn new(label: impl Into<String>, epsilon: f64, delta: f64) -> Self {
        debug_assert!(epsilon >= 0.0 && delta >= 0.0);
        Self { label: label.into(), epsilon, delta }
    }
}

/// Sequential composition: privacy losses add. Returns `(Σε, Σδ)`.
pub fn compose(ledger: &[LedgerEntry]) -> (f64, f64) {
    ledger.iter().fold((0.0, 0.0), |(e, d), entry| (e + entry.epsilon, d + entry.delta))
}

/// Gaussian-mechanism noise scale `Δ·√(2·ln(1.25/δ))/ε`.
pub fn gaussian_sigma(l2_sensitivity: f64, eps: f64, delta: f64) -> Result<f64> {
    if !(l2_sensitivity > 0.0) {
        return Err(Error::Parameter("sensitivity must be positive".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Parameter("epsilon must be positive".into()));
    }
    if delta <= 0.0 || delta >= 1.0 {
        return Err(Error::Unsupported(
            "the Gaussian mechanism requires 0 < delta < 1; route pure-epsilon steps through the exponential mechanism".into(),
        ));
    }
    Ok(l2_sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / eps)
}

/// ℓ₂ sensitivity of a probability-normalized marginal under replace-one: √2/n.
pub fn marginal_sensitivity(n: usize) -> f64 {
    std::f64::consts::SQRT_2 / n as f64
}

/// Default total δ for a dataset of n records: 1/n².
pub fn default_delta(n: usize) -> f64 {
    let n = n as f64;
    1.0 / (n * n)
}

/// Exact Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Add i.i.d. N(0, σ²) noise to every cell, then project back to the simplex.
pub fn gaussian_measure(
    marginal: &MarginalTable,
    sigma: f64,
    rng: &mut RngHandle,
) -> MarginalTable {
    if sigma == 0.0 {
        return marginal.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and nonnegative");
    let noisy: Vec<f64> = marginal.probs.iter().map(|&p| p + normal.sample(rng)).collect();
    let probs = project_simplex(&noisy);
    MarginalTable::new(marginal.clique.clone(), probs)
        .expect("projection output is on the simplex")
}

/// Compute the empirical marginal of `clique` and measure it under
/// `(eps, delta)` with noise calibrated to the replace-one sensitivity.
pub fn measure_empirical_marginal(
    dataset: &crate::core::DiscreteDataset,
    clique: &crate::core::Clique,
    eps: f64,
    delta: f64,
    rng: &mut RngHandle,
) -> Result<MarginalTable> {
    let marginal = crate::core::compute_marginal(dataset, clique)?;
    let sigma = gaussian_sigma(marginal_sensitivity(dataset.n()), eps, delta)?;
    Ok(gaussian_measure(&marginal, sigma, rng))
}

/// High-probability ℓ₁ error bound of a projected Gaussian measurement on a
/// domain of size `k`: `k·σ·√(2·ln(k/β))` holds with probability ≥ 1−β.
pub fn gaussian_l1_bound(k: usize, sigma: f64, beta: f64) -> f64 {
    k as f64 * sigma * (2.0 * (k as f64 / beta).ln()).sqrt()
}

/// Exponential mechanism: sample index i with probability
/// ∝ exp(ε·u_i/(2·Δ_u)), computed with max subtraction for stability.
pub fn exponential_select(
    utilities: &[f64],
    eps: f64,
    sensitivity: f64,
    rng: &mut RngHandle,
) -> Result<usize> {
    if utilities.is_empty() {
        return Err(Error::Parameter("utilities must be nonempty".into()));
    }
    if eps < 0.0 {
        return Err(Error::Parameter("epsilon must be nonnegative".into()));
    }
    if !(sensitivity > 0.0) {
        return Err(Error::Parameter("utility sensitivity must be positive".into()));
    }
    let scale = eps / (2.0 * sensitivity);
    let max = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = utilities.iter().map(|&u| (scale * (u - max)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut draw = rng.random_range(0.0..1.0) * total;
    for (i, &w) in weights.iter().enumerate() {
        draw -= w;
        if draw <= 0.0 {
            return Ok(i);
        }
    }
    Ok(weights.len() - 1)
}
