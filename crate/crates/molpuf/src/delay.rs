//! Additive linear delay abstraction of the multiplexer race.
//!
//! Each stage i contributes a top-minus-bottom delay difference
//! Δ_i ~ N(0, 2σ²) (the difference of two i.i.d. per-gate delays).
//! Because a challenge bit swaps the two paths at its stage, the sign
//! with which Δ_i enters the final arrival difference depends only on
//! how many later stages swap: the suffix parity C'_i = ⊕_{j>i} C_j,
//! with C'_N = 0. The response is
//!
//! ```text
//! r_N = Σ_i (−1)^{C'_i} · (Δ_i + noise_i),      R = 1  ⇔  r_N ≥ 0.
//! ```
//!
//! This module is a statistical twin of the reaction-network pipeline:
//! orders of magnitude faster, suitable for large device populations,
//! and used to cross-check Hamming-distance trends. No claim is made
//! that r_N equals any particular crossing-time difference — only that
//! the induced signature statistics behave the same way.

use crate::metrics::{
    feasible, gaussian_fit, p_inter, p_intra, pairwise_hd_fractions, reference_hd_fractions,
    reliability, uniqueness, variation_stats, GaussianFit, IntraDivisor, MetricsError,
    VariationStats,
};
use crate::puf::Challenge;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DelayError {
    #[error("challenge has {got} bits but the model has {expected} stages")]
    ChallengeLength { expected: usize, got: usize },
    #[error("noise vector has {got} entries but the model has {expected} stages")]
    NoiseLength { expected: usize, got: usize },
    #[error("population parameters: {0}")]
    BadParameters(&'static str),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One device under the delay abstraction: its per-stage delay
/// differences.
#[derive(Debug, Clone)]
pub struct DelayPuf {
    delta: Vec<f64>,
    sigma: f64,
}

impl DelayPuf {
    /// Samples a device: Δ_i ~ N(0, 2σ²) i.i.d. per stage.
    pub fn sample<R: Rng>(n_stages: usize, sigma: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, sigma * std::f64::consts::SQRT_2)
            .expect("finite, non-negative sigma");
        DelayPuf {
            delta: (0..n_stages).map(|_| dist.sample(rng)).collect(),
            sigma,
        }
    }

    /// Builds a device with explicit delay differences.
    pub fn from_deltas(delta: Vec<f64>) -> Self {
        DelayPuf { delta, sigma: f64::NAN }
    }

    pub fn n_stages(&self) -> usize {
        self.delta.len()
    }

    pub fn deltas(&self) -> &[f64] {
        &self.delta
    }

    /// The per-gate delay spread this device was sampled with (NaN for
    /// explicitly constructed devices).
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The response bit for one challenge, optionally with additive
    /// per-stage delay noise.
    pub fn response(
        &self,
        challenge: &Challenge,
        noise: Option<&[f64]>,
    ) -> Result<bool, DelayError> {
        let n = self.delta.len();
        if challenge.len() != n {
            return Err(DelayError::ChallengeLength { expected: n, got: challenge.len() });
        }
        if let Some(noise) = noise {
            if noise.len() != n {
                return Err(DelayError::NoiseLength { expected: n, got: noise.len() });
            }
        }
        let transformed = transform_challenge(challenge);
        let mut r = 0.0;
        for i in 0..n {
            let term = self.delta[i] + noise.map_or(0.0, |v| v[i]);
            r += if transformed.cprime[i] { -term } else { term };
        }
        Ok(r >= 0.0)
    }
}

/// Suffix parities of a challenge; entry N−1 is always false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformedChallenge {
    pub cprime: Vec<bool>,
}

/// Computes C'_i = ⊕_{j>i} C_j right-to-left in O(N).
pub fn transform_challenge(challenge: &Challenge) -> TransformedChallenge {
    let n = challenge.len();
    let mut cprime = vec![false; n];
    let mut parity = false;
    for i in (0..n).rev() {
        cprime[i] = parity;
        parity ^= challenge.bit(i);
    }
    TransformedChallenge { cprime }
}

/// Population statistics estimated by [`monte_carlo_metrics`].
#[derive(Debug, Clone)]
pub struct MonteCarloMetrics {
    /// Mean intra-chip variation, averaged over devices.
    pub p_intra: f64,
    /// Mean pairwise inter-chip variation under the first condition.
    pub p_inter: f64,
    pub reliability: f64,
    pub uniqueness: f64,
    /// Pooled per-device reference-condition distances.
    pub intra: VariationStats,
    /// Pairwise inter-chip distances.
    pub inter: VariationStats,
    pub inter_fit: GaussianFit,
    pub feasible: bool,
}

/// Simulates a population: K devices × m noise conditions × L random
/// challenges, reducing to the standard metrics. Draw order (stable
/// across runs given a seeded generator): first the L challenges, then
/// per device its deltas followed by its m condition noise vectors.
/// Every condition, the reference included, is a fresh noise draw.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_metrics<R: Rng>(
    n_stages: usize,
    sigma: f64,
    sigma_noise: f64,
    k_devices: usize,
    m_conditions: usize,
    l_challenges: usize,
    rng: &mut R,
) -> Result<MonteCarloMetrics, DelayError> {
    if n_stages == 0 {
        return Err(DelayError::BadParameters("need at least one stage"));
    }
    if k_devices < 2 || m_conditions < 2 || l_challenges < 1 {
        return Err(DelayError::BadParameters(
            "need K ≥ 2 devices, m ≥ 2 conditions, L ≥ 1 challenges",
        ));
    }

    let challenges: Vec<Challenge> = (0..l_challenges)
        .map(|_| Challenge::new((0..n_stages).map(|_| rng.gen::<bool>()).collect()))
        .collect();
    let noise_dist = Normal::new(0.0, sigma_noise).expect("finite, non-negative sigma");

    let mut reference_signatures: Vec<Vec<bool>> = Vec::with_capacity(k_devices);
    let mut intra_fractions: Vec<f64> = Vec::new();
    let mut p_intra_sum = 0.0;

    for _ in 0..k_devices {
        let device = DelayPuf::sample(n_stages, sigma, rng);
        let mut signatures: Vec<Vec<bool>> = Vec::with_capacity(m_conditions);
        for _ in 0..m_conditions {
            let noise: Vec<f64> = (0..n_stages).map(|_| noise_dist.sample(rng)).collect();
            let bits = challenges
                .iter()
                .map(|c| device.response(c, Some(&noise)))
                .collect::<Result<Vec<bool>, _>>()?;
            signatures.push(bits);
        }
        p_intra_sum += p_intra(&signatures, IntraDivisor::Comparisons)?;
        intra_fractions.extend(reference_hd_fractions(&signatures)?);
        reference_signatures.push(signatures.swap_remove(0));
    }

    let p_intra_mean = p_intra_sum / k_devices as f64;
    let p_inter_value = p_inter(&reference_signatures)?;
    let inter_fractions = pairwise_hd_fractions(&reference_signatures)?;
    let intra = variation_stats(&intra_fractions)?;
    let inter = variation_stats(&inter_fractions)?;

    Ok(MonteCarloMetrics {
        p_intra: p_intra_mean,
        p_inter: p_inter_value,
        reliability: reliability(p_intra_mean)?,
        uniqueness: uniqueness(p_inter_value)?,
        intra,
        inter,
        inter_fit: gaussian_fit(&inter_fractions)?,
        feasible: feasible(&intra, &inter),
    })
}
