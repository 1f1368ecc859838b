//! Entropy of a sum of independent contributions over `Z_q`.
//!
//! Adding an independent contribution never lowers entropy, and one uniform
//! contributor makes the sum uniform. Both are checked here by exact
//! convolution of integer weights.

use serde::Serialize;

use super::SimError;

/// A distribution on `Z_q` given by nonnegative integer weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Distribution {
    weights: Vec<u128>,
}

const PROBABILITY_SCALE: f64 = (1u64 << 40) as f64;

impl Distribution {
    pub fn from_weights(weights: Vec<u64>) -> Result<Self, SimError> {
        if weights.is_empty() || weights.iter().all(|&w| w == 0) {
            return Err(SimError::Config("distribution has no mass".into()));
        }
        Ok(Distribution {
            weights: weights.into_iter().map(u128::from).collect(),
        })
    }

    /// From probabilities summing to 1 within `1e-9`. Values are rounded to
    /// multiples of `2^-40`.
    pub fn from_probabilities(probs: &[f64]) -> Result<Self, SimError> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(SimError::Config("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SimError::Config(format!("probabilities sum to {total}, not 1")));
        }
        Self::from_weights(probs.iter().map(|p| (p * PROBABILITY_SCALE).round() as u64).collect())
    }

    pub fn uniform(q: usize) -> Self {
        Distribution {
            weights: vec![1; q],
        }
    }

    pub fn point_mass(q: usize, at: usize) -> Self {
        let mut weights = vec![0; q];
        weights[at % q] = 1;
        Distribution { weights }
    }

    pub fn q(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[u128] {
        &self.weights
    }

    fn total(&self) -> u128 {
        self.weights.iter().sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.weights.iter().map(|&w| w as f64 / total).collect()
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.probabilities()
            .into_iter()
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.log2())
            .sum()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.iter().all(|&w| w == self.weights[0])
    }

    /// Total variation distance from uniform, computed exactly then rounded once.
    pub fn distance_from_uniform(&self) -> f64 {
        let q = self.q() as u128;
        let total = self.total();
        let num: u128 = self.weights.iter().map(|&w| (w * q).abs_diff(total)).sum();
        num as f64 / (2 * q * total) as f64
    }

    /// Distribution of `X + Y mod q` for independent `X`, `Y`.
    pub fn convolve(&self, other: &Distribution) -> Result<Distribution, SimError> {
        let q = self.q();
        if other.q() != q {
            return Err(SimError::Config("distributions over different moduli".into()));
        }
        let mut weights = vec![0u128; q];
        for (i, &a) in self.weights.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.weights.iter().enumerate() {
                let w = a
                    .checked_mul(b)
                    .and_then(|p| weights[(i + j) % q].checked_add(p))
                    .ok_or_else(|| SimError::Config("weights too large to convolve exactly".into()))?;
                weights[(i + j) % q] = w;
            }
        }
        Ok(Distribution { weights })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyReport {
    pub q: usize,
    pub contributor_entropies: Vec<f64>,
    pub max_contributor_entropy: f64,
    pub sum_entropy: f64,
    /// `H(sum) >= max H(contributor)`, within `1e-9`.
    pub bound_holds: bool,
    pub any_uniform_contributor: bool,
    pub sum_is_uniform: bool,
    pub total_variation_from_uniform: f64,
}

pub const ENTROPY_TOLERANCE: f64 = 1e-9;

pub fn entropy_demo(q: usize, contributors: &[Distribution]) -> Result<EntropyReport, SimError> {
    if !(2..=64).contains(&q) {
        return Err(SimError::Config(format!("q = {q} outside 2..=64")));
    }
    if contributors.is_empty() {
        return Err(SimError::Config("no contributors".into()));
    }
    if let Some(d) = contributors.iter().find(|d| d.q() != q) {
        return Err(SimError::Config(format!(
            "contributor over Z_{} in a demo over Z_{q}",
            d.q()
        )));
    }
    let mut sum = contributors[0].clone();
    for d in &contributors[1..] {
        sum = sum.convolve(d)?;
    }
    let contributor_entropies: Vec<f64> = contributors.iter().map(Distribution::entropy).collect();
    let max = contributor_entropies.iter().cloned().fold(0.0, f64::max);
    let sum_entropy = sum.entropy();
    Ok(EntropyReport {
        q,
        max_contributor_entropy: max,
        bound_holds: sum_entropy >= max - ENTROPY_TOLERANCE,
        any_uniform_contributor: contributors.iter().any(Distribution::is_uniform),
        sum_is_uniform: sum.is_uniform(),
        total_variation_from_uniform: sum.distance_from_uniform(),
        contributor_entropies,
        sum_entropy,
    })
}
