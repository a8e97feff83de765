//! Signature quality metrics: Hamming-distance statistics, reliability,
//! uniqueness, variation tables, and Gaussian fits.
//!
//! Conventions: a *signature* is a bit vector; all signatures entering
//! one statistic must share a length L. Distances are reported as
//! fractions of L in [0, 1]; the variation summaries convert to percent
//! for reporting. The device-quality vocabulary:
//!
//! - intra-chip variation: how much one device's signature moves across
//!   environment conditions (first condition is the reference),
//! - inter-chip variation: how far apart different devices' signatures
//!   are under one condition,
//! - reliability = 1 − P_intra, uniqueness = 1 − |2·P_inter − 1|,
//! - a design is feasible when the smallest observed inter-chip
//!   variation exceeds the largest intra-chip variation.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("bit vectors differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {need} signatures, got {got}")]
    TooFewSignatures { got: usize, need: usize },
    #[error("signatures must be non-empty")]
    EmptySignature,
    #[error("input sample set is empty")]
    EmptyInput,
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
}

/// How the intra-chip mean is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntraDivisor {
    /// Divide the m−1 reference comparisons by m−1 (the true mean;
    /// default).
    Comparisons,
    /// Divide by m. Kept for compatibility with texts that write the
    /// 1/m normalization over m−1 terms.
    Literal,
}

/// Min/max/mean of a variation sample set, in percent of L.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationStats {
    pub max_percent: f64,
    pub min_percent: f64,
    pub mean_percent: f64,
}

/// Sample mean and corrected (n−1) standard deviation; a single sample
/// fits with std 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub mean: f64,
    pub std: f64,
}

/// Number of positions where the two bit vectors differ.
pub fn hamming_distance(a: &[bool], b: &[bool]) -> Result<usize, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

fn check_signature_set<S: AsRef<[bool]>>(
    signatures: &[S],
    need: usize,
) -> Result<usize, MetricsError> {
    if signatures.len() < need {
        return Err(MetricsError::TooFewSignatures { got: signatures.len(), need });
    }
    let l = signatures[0].as_ref().len();
    if l == 0 {
        return Err(MetricsError::EmptySignature);
    }
    for s in signatures {
        if s.as_ref().len() != l {
            return Err(MetricsError::LengthMismatch { a: l, b: s.as_ref().len() });
        }
    }
    Ok(l)
}

/// Per-condition distances of one device: HD(R_1, R_i)/L for i = 2..m,
/// in input order. The first signature is the reference condition.
pub fn reference_hd_fractions<S: AsRef<[bool]>>(
    signatures: &[S],
) -> Result<Vec<f64>, MetricsError> {
    let l = check_signature_set(signatures, 2)?;
    let reference = signatures[0].as_ref();
    signatures[1..]
        .iter()
        .map(|s| Ok(hamming_distance(reference, s.as_ref())? as f64 / l as f64))
        .collect()
}

/// All pairwise distances HD(R_i, R_j)/L for i < j, in (i, j) index
/// order.
pub fn pairwise_hd_fractions<S: AsRef<[bool]>>(
    signatures: &[S],
) -> Result<Vec<f64>, MetricsError> {
    let l = check_signature_set(signatures, 2)?;
    let mut out = Vec::with_capacity(signatures.len() * (signatures.len() - 1) / 2);
    for i in 0..signatures.len() - 1 {
        for j in i + 1..signatures.len() {
            let hd = hamming_distance(signatures[i].as_ref(), signatures[j].as_ref())?;
            out.push(hd as f64 / l as f64);
        }
    }
    Ok(out)
}

/// Mean intra-chip variation of one device: signatures of the same
/// device under m environment conditions, the first being the
/// reference.
pub fn p_intra<S: AsRef<[bool]>>(
    signatures: &[S],
    divisor: IntraDivisor,
) -> Result<f64, MetricsError> {
    let fractions = reference_hd_fractions(signatures)?;
    let sum: f64 = fractions.iter().sum();
    let denom = match divisor {
        IntraDivisor::Comparisons => fractions.len() as f64,
        IntraDivisor::Literal => signatures.len() as f64,
    };
    Ok(sum / denom)
}

/// All-pairs variant of the intra-chip mean (conditions compared to each
/// other, not only to the reference).
pub fn p_intra_all_pairs<S: AsRef<[bool]>>(signatures: &[S]) -> Result<f64, MetricsError> {
    let fractions = pairwise_hd_fractions(signatures)?;
    Ok(fractions.iter().sum::<f64>() / fractions.len() as f64)
}

/// Reliability = 1 − P_intra.
pub fn reliability(p_intra: f64) -> Result<f64, MetricsError> {
    check_fraction("p_intra", p_intra)?;
    Ok(1.0 - p_intra)
}

/// Mean inter-chip variation: signatures of K distinct devices under one
/// condition, averaged over all K(K−1)/2 pairs.
pub fn p_inter<S: AsRef<[bool]>>(signatures: &[S]) -> Result<f64, MetricsError> {
    let fractions = pairwise_hd_fractions(signatures)?;
    Ok(fractions.iter().sum::<f64>() / fractions.len() as f64)
}

/// Uniqueness = 1 − |2·P_inter − 1|; equals 1 exactly at P_inter = ½.
pub fn uniqueness(p_inter: f64) -> Result<f64, MetricsError> {
    check_fraction("p_inter", p_inter)?;
    Ok(1.0 - (2.0 * p_inter - 1.0).abs())
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), MetricsError> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(MetricsError::OutOfRange { name, value });
    }
    Ok(())
}

/// Exact min/max/mean of variation fractions, reported in percent.
pub fn variation_stats(fractions: &[f64]) -> Result<VariationStats, MetricsError> {
    if fractions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &f in fractions {
        check_fraction("variation fraction", f)?;
        min = min.min(f);
        max = max.max(f);
        sum += f;
    }
    Ok(VariationStats {
        max_percent: max * 100.0,
        min_percent: min * 100.0,
        mean_percent: sum / fractions.len() as f64 * 100.0,
    })
}

/// Sample mean and corrected standard deviation of arbitrary samples
/// (unit-agnostic; callers pass fractions or percents consistently).
pub fn gaussian_fit(samples: &[f64]) -> Result<GaussianFit, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = if samples.len() == 1 {
        0.0
    } else {
        let ss: f64 = samples.iter().map(|s| (s - mean) * (s - mean)).sum();
        (ss / (n - 1.0)).sqrt()
    };
    Ok(GaussianFit { mean, std })
}

/// The viability criterion: every observed inter-chip distance exceeds
/// every observed intra-chip distance.
pub fn feasible(intra: &VariationStats, inter: &VariationStats) -> bool {
    inter.min_percent > intra.max_percent
}
