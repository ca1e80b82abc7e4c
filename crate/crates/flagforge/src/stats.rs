//! Repetition statistics for measured characteristics: min/mean/max plus an
//! expected value taken from the sample histogram, detection of multiple
//! system states (e.g. DVFS frequency switches show up as extra histogram
//! modes), and a trust gate that marks comparisons as untrustable when the
//! min-based and expected-based improvements disagree by more than a
//! threshold (default 5%).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tuning knobs for [`summarize`] and [`compare`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StatsConfig {
    /// Relative spread / disagreement above which results are untrustable.
    pub trust_threshold: f64,
    /// A histogram mode counts as a separate state when its bin count is at
    /// least this fraction of the tallest bin.
    pub state_prominence: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { trust_threshold: 0.05, state_prominence: 0.25 }
    }
}

impl StatsConfig {
    pub fn with_threshold(trust_threshold: f64) -> Self {
        StatsConfig { trust_threshold, ..Default::default() }
    }
}

/// Summary of one measured characteristic over n repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicStats {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Center of the most populated histogram bin; min when n < 3 where a
    /// mode is meaningless.
    pub expected: f64,
    /// (bin center, count) pairs; counts sum to n.
    pub histogram: Vec<(f64, u64)>,
    /// Number of prominent histogram modes; more than one usually means the
    /// platform switched state mid-measurement.
    pub state_count: usize,
    /// Relative spread (max-min)/min above the trust threshold.
    pub noisy: bool,
}

impl CharacteristicStats {
    /// Constant-value stats for characteristics measured once (sizes etc.).
    pub fn constant(value: f64) -> Self {
        CharacteristicStats {
            n: 1,
            min: value,
            max: value,
            mean: value,
            expected: value,
            histogram: vec![(value, 1)],
            state_count: 1,
            noisy: false,
        }
    }
}

/// Summarize positive samples: histogram with max(1, ceil(sqrt(n))) bins,
/// expected = center of the most populated bin (ties go to the lower bin),
/// state_count = prominent modes, noisy = relative spread over threshold.
pub fn summarize(samples: &[f64], cfg: &StatsConfig) -> Result<CharacteristicStats> {
    if samples.is_empty() {
        return Err(Error::contract("summarize requires at least one sample"));
    }
    if samples.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::contract("samples must be positive finite reals"));
    }
    // Sort a copy so every derived quantity is independent of sample order
    // (floating-point summation is not).
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let min = sorted[0];
    let max = sorted[n - 1];
    let mean = sorted.iter().sum::<f64>() / n as f64;

    let bins = ((n as f64).sqrt().ceil() as usize).max(1);
    let histogram = build_histogram(&sorted, min, max, bins);

    let expected = if n < 3 {
        min
    } else {
        let best = histogram
            .iter()
            .enumerate()
            .max_by(|(ia, (_, ca)), (ib, (_, cb))| ca.cmp(cb).then(ib.cmp(ia)))
            .map(|(_, (center, _))| *center)
            .unwrap_or(min);
        best.clamp(min, max)
    };

    let state_count = count_states(&histogram, cfg.state_prominence);
    let noisy = (max - min) / min > cfg.trust_threshold;

    Ok(CharacteristicStats { n, min, max, mean, expected, histogram, state_count, noisy })
}

fn build_histogram(samples: &[f64], min: f64, max: f64, bins: usize) -> Vec<(f64, u64)> {
    if max <= min {
        return vec![(min, samples.len() as u64)];
    }
    let span = max - min;
    let mut counts = vec![0u64; bins];
    for &s in samples {
        let pos = (s - min) / span * bins as f64;
        let idx = (pos as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (min + span * (i as f64 + 0.5) / bins as f64, c))
        .collect()
}

/// Count plateau-collapsed local maxima whose count reaches the prominence
/// fraction of the global maximum.
fn count_states(histogram: &[(f64, u64)], prominence: f64) -> usize {
    let global_max = histogram.iter().map(|(_, c)| *c).max().unwrap_or(0);
    if global_max == 0 {
        return 0;
    }
    let floor = (global_max as f64 * prominence).ceil() as u64;
    let mut states = 0usize;
    let mut i = 0;
    while i < histogram.len() {
        let count = histogram[i].1;
        let mut j = i;
        while j + 1 < histogram.len() && histogram[j + 1].1 == count {
            j += 1;
        }
        let left = if i == 0 { 0 } else { histogram[i - 1].1 };
        let right = if j + 1 == histogram.len() { 0 } else { histogram[j + 1].1 };
        if count > 0 && count >= floor && count > left && count > right {
            states += 1;
        }
        i = j + 1;
    }
    states.max(1)
}

/// Two improvement routes between a base and a candidate measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    /// base.min / candidate.min
    pub improvement_min: f64,
    /// base.expected / candidate.expected
    pub improvement_expected: f64,
    /// Relative disagreement between the two improvements.
    pub max_difference: f64,
    pub trustable: bool,
}

/// Compare two summaries of the same characteristic. The comparison is
/// untrustable when the two improvement routes disagree by more than the
/// threshold, either side is noisy, or either side shows several states.
pub fn compare(
    base: &CharacteristicStats,
    candidate: &CharacteristicStats,
    threshold: f64,
) -> Result<Comparison> {
    if candidate.min <= 0.0 || candidate.expected <= 0.0 {
        return Err(Error::contract("candidate characteristic must be positive"));
    }
    let improvement_min = base.min / candidate.min;
    let improvement_expected = base.expected / candidate.expected;
    let diff = (improvement_min - improvement_expected).abs();
    let max_difference = (diff / improvement_min).max(diff / improvement_expected);
    let trustable = max_difference <= threshold
        && !base.noisy
        && !candidate.noisy
        && base.state_count == 1
        && candidate.state_count == 1;
    Ok(Comparison { improvement_min, improvement_expected, max_difference, trustable })
}

/// Ratio of baseline expected value to variant expected value (>1 means the
/// variant is faster/smaller). Expected degrades to min below 3 samples, so
/// the ratio is always defined.
pub fn speedup_over_baseline(
    baseline: &CharacteristicStats,
    variant: &CharacteristicStats,
) -> Result<f64> {
    if variant.expected <= 0.0 {
        return Err(Error::contract("variant characteristic must be positive"));
    }
    Ok(baseline.expected / variant.expected)
}
