//! Order-independent aggregation of Monte Carlo samples.

use serde::{Deserialize, Serialize};

/// Pairwise (cascade) summation; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and standard error of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

/// Shifted two-pass estimator: constant samples give exactly that constant
/// with zero standard error.
pub fn summarize(xs: &[f64]) -> SampleSummary {
    let count = xs.len();
    if count == 0 {
        return SampleSummary { mean: f64::NAN, std_error: f64::NAN, count };
    }
    let shift = xs[0];
    let centered: Vec<f64> = xs.iter().map(|x| x - shift).collect();
    let mean_dev = pairwise_sum(&centered) / count as f64;
    let mean = shift + mean_dev;
    if count == 1 {
        return SampleSummary { mean, std_error: 0.0, count };
    }
    let sq: Vec<f64> = centered.iter().map(|d| (d - mean_dev) * (d - mean_dev)).collect();
    let var = pairwise_sum(&sq) / (count - 1) as f64;
    SampleSummary { mean, std_error: (var / count as f64).sqrt(), count }
}
