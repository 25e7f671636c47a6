//! Reproducible reductions and sectioned standard errors.

use serde::{Deserialize, Serialize};

/// Number of contiguous blocks used for sectioned standard errors.
pub const SECTIONS: usize = 20;

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// Pairwise (cascade) summation in a fixed order. The result depends only on
/// the input order, never on how the input was produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Unbiased sample variance (divisor `len - 1`); zero for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    pairwise_sum(&sq) / (values.len() - 1) as f64
}

/// Contiguous index ranges splitting `len` items into at most `SECTIONS` blocks.
pub fn section_ranges(len: usize) -> Vec<std::ops::Range<usize>> {
    let blocks = len.clamp(1, SECTIONS);
    (0..blocks)
        .map(|b| (b * len / blocks)..((b + 1) * len / blocks))
        .filter(|r| !r.is_empty())
        .collect()
}

/// Standard error of the mean of `block_values`, treating blocks as i.i.d.
pub fn block_std_err(block_values: &[f64]) -> f64 {
    if block_values.len() < 2 {
        return 0.0;
    }
    (sample_variance(block_values) / block_values.len() as f64).sqrt()
}

/// Mean of per-path values with a sectioning standard error.
pub fn sectioned_mean(values: &[f64]) -> MeanEstimate {
    let blocks: Vec<f64> = section_ranges(values.len())
        .into_iter()
        .map(|r| mean(&values[r]))
        .collect();
    MeanEstimate {
        value: mean(values),
        std_err: block_std_err(&blocks),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }

    #[test]
    fn sections_cover_everything_once() {
        for len in [1, 7, 20, 21, 999] {
            let r = section_ranges(len);
            assert!(r.len() <= SECTIONS);
            assert_eq!(r.first().unwrap().start, 0);
            assert_eq!(r.last().unwrap().end, len);
            for w in r.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
        }
    }

    #[test]
    fn constant_values_have_zero_error() {
        let est = sectioned_mean(&[2.5; 100]);
        assert_eq!(est.value, 2.5);
        assert_eq!(est.std_err, 0.0);
    }
}
