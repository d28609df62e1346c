//! The perturbation mechanism itself and the two ways back.
//!
//! `perturb` applies the transition matrix record by record: the released
//! level is a draw from column s of P, where s is the true level. Every
//! record has its own counter-derived random stream, so the output depends
//! only on (data, P, seed), never on iteration order.
//!
//! `recover_frequencies` multiplies observed level frequencies by P⁻¹; the
//! result always sums to 1 but can leave [0, 1] in small samples, in which
//! case it is returned raw and flagged (project with `project_to_simplex` if
//! a proper distribution is required). The Bayes posterior reversion lives in
//! `diagnostics` because it needs the true marginal as an input — it is a
//! descriptive tool, not an estimation device.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, uniform01};
use crate::transition::{ReversionKind, ReversionMatrix, TransitionMatrix};

/// Tolerance used when flagging recovered frequencies as outside [0, 1] and
/// when validating that a frequency vector sums to one.
pub const FREQUENCY_TOLERANCE: f64 = 1e-9;

/// A vector of level frequencies summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector {
    values: Vec<f64>,
}

impl FrequencyVector {
    /// A proper distribution: entries in [0, 1], summing to one.
    pub fn proper(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidConfig {
                context: format!("frequency vector needs at least 2 levels, got {}", values.len()),
            });
        }
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig {
                    context: format!("frequency {index} = {v} is not in [0, 1]"),
                });
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > FREQUENCY_TOLERANCE {
            return Err(Error::InvalidConfig {
                context: format!("frequencies sum to {sum}, expected 1"),
            });
        }
        Ok(Self { values })
    }

    /// Empirical frequencies of integer-coded levels.
    pub fn from_levels(levels: &[usize], k: usize) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidConfig {
                context: "cannot take frequencies of an empty level vector".into(),
            });
        }
        let mut counts = vec![0usize; k];
        for (record, &level) in levels.iter().enumerate() {
            if level >= k {
                return Err(Error::LevelOutOfRange {
                    record,
                    level,
                    levels: k,
                });
            }
            counts[level] += 1;
        }
        let n = levels.len() as f64;
        Self::proper(counts.into_iter().map(|c| c as f64 / n).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Raw inverse-recovered frequencies. `raw` sums to one; entries may lie
/// outside [0, 1] (sampling noise through a signed inverse), in which case
/// `outside_simplex` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredFrequencies {
    pub raw: Vec<f64>,
    pub outside_simplex: bool,
}

/// Perturb a vector of levels through P with one independent stream per
/// record: record i draws from stream i of the seeded generator.
pub fn perturb_levels(levels: &[usize], p: &TransitionMatrix, seed: u64) -> Result<Vec<usize>> {
    let k = p.levels();
    let mut out = Vec::with_capacity(levels.len());
    for (record, &level) in levels.iter().enumerate() {
        if level >= k {
            return Err(Error::LevelOutOfRange {
                record,
                level,
                levels: k,
            });
        }
        let mut rng = stream_rng(seed, record as u64);
        let u = uniform01(&mut rng);
        out.push(sample_level(p.column(level), u));
    }
    Ok(out)
}

/// Walk the cumulative distribution of one transition-matrix column.
fn sample_level(column: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, &prob) in column.iter().enumerate() {
        cum += prob;
        if u < cum {
            return i;
        }
    }
    // Guard against cum landing at 1 - eps with u just above it.
    column.len() - 1
}

/// Perturb a dataset's original levels, returning a copy with the released
/// levels filled in (the original column is kept; dropping it before release
/// is the caller's decision).
pub fn perturb(data: &Dataset, p: &TransitionMatrix, seed: u64) -> Result<Dataset> {
    if data.levels() != p.levels() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "dataset has {} levels, transition matrix has {}",
                data.levels(),
                p.levels()
            ),
        });
    }
    let original = data.require_original()?;
    let released = perturb_levels(original, p, seed)?;
    let mut out = data.clone();
    out.set_perturbed_levels(released)?;
    Ok(out)
}

/// Undo the mechanism on marginal frequencies: multiply the observed
/// frequencies by P⁻¹. Exact in expectation for any sample size.
pub fn recover_frequencies(
    q: &ReversionMatrix,
    observed: &FrequencyVector,
) -> Result<RecoveredFrequencies> {
    if q.kind() != ReversionKind::InverseQ2 {
        return Err(Error::InvalidConfig {
            context: "frequency recovery needs the inverse reversion, not the posterior".into(),
        });
    }
    if q.levels() != observed.len() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "reversion matrix has {} levels, frequencies have {}",
                q.levels(),
                observed.len()
            ),
        });
    }
    let raw = q.mul_vec(observed.values());
    let outside_simplex = raw
        .iter()
        .any(|&v| v < -FREQUENCY_TOLERANCE || v > 1.0 + FREQUENCY_TOLERANCE);
    Ok(RecoveredFrequencies { raw, outside_simplex })
}

/// Euclidean projection of a vector summing to one onto the probability
/// simplex (the standard sort-and-threshold construction).
pub fn project_to_simplex(raw: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = raw.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite frequencies"));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cum += u;
        let candidate = (cum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    raw.iter().map(|&v| (v - tau).max(0.0)).collect()
}

pub mod diagnostics {
    //! Model-dependent descriptive tools. Estimators never use these.

    use super::*;
    use crate::matrix::SquareMat;

    /// The Bayes posterior reversion: entry (j, i) is Pr(true = j | released
    /// = i) computed from the mechanism and the *true* level marginal
    /// `pi_true`, entries p_ij π_j normalized within each observed-level
    /// column. Needs the truth as input, which is exactly why estimation
    /// uses the inverse reversion instead.
    pub fn reversion_probabilistic(
        p: &TransitionMatrix,
        pi_true: &FrequencyVector,
    ) -> Result<ReversionMatrix> {
        let k = p.levels();
        if pi_true.len() != k {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "transition matrix has {k} levels, marginal has {}",
                    pi_true.len()
                ),
            });
        }
        let pi = pi_true.values();
        for (index, &v) in pi.iter().enumerate() {
            if v <= 0.0 {
                return Err(Error::ZeroMarginal { index, value: v });
            }
        }
        let mut mat = SquareMat::zeros(k);
        for i in 0..k {
            // Implied marginal of observing level i.
            let mut denom = 0.0;
            for j in 0..k {
                denom += p.entry(i, j) * pi[j];
            }
            if denom <= 0.0 {
                return Err(Error::ZeroMarginal { index: i, value: denom });
            }
            for j in 0..k {
                mat.set(j, i, p.entry(i, j) * pi[j] / denom);
            }
        }
        Ok(ReversionMatrix::posterior_q1(mat))
    }
}
