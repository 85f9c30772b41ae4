//! Replication statistics with normal-approximation confidence intervals.

use std::cmp::Ordering;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::simulator::RunResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub label: String,
    pub mean: f64,
    pub std_dev: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub replications: usize,
}

impl PolicySummary {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

/// Two-sided standard normal quantile for `confidence` (2.5758... at 0.99).
pub fn z_value(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence {confidence} must lie in (0, 1)"
        )));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + confidence / 2.0))
}

/// Mean and confidence interval of a sample of per-replication values.
pub fn summarize_values(label: &str, values: &[f64], confidence: f64) -> Result<PolicySummary> {
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    let z = z_value(confidence)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_dev = var.sqrt();
    let half = z * std_dev / n.sqrt();
    Ok(PolicySummary {
        label: label.to_string(),
        mean,
        std_dev,
        ci_low: mean - half,
        ci_high: mean + half,
        confidence,
        replications: values.len(),
    })
}

/// Summary of the average cost per slot across runs.
pub fn summarize(label: &str, results: &[RunResult], confidence: f64) -> Result<PolicySummary> {
    let values: Vec<f64> = results.iter().map(|r| r.avg_cost_per_slot).collect();
    summarize_values(label, &values, confidence)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparison {
    /// `Less` when the first summary has the lower mean.
    pub ordering: Ordering,
    /// Confidence intervals do not overlap.
    pub significant: bool,
}

pub fn compare(a: &PolicySummary, b: &PolicySummary) -> Comparison {
    let ordering = a.mean.partial_cmp(&b.mean).unwrap_or(Ordering::Equal);
    let significant = a.ci_high < b.ci_low || b.ci_high < a.ci_low;
    Comparison {
        ordering,
        significant,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_at_99() {
        assert!((z_value(0.99).unwrap() - 2.576).abs() < 1e-3);
        assert!(z_value(1.0).is_err());
        assert!(z_value(0.0).is_err());
    }

    #[test]
    fn identical_values_zero_width() {
        let s = summarize_values("x", &[1.5; 6], 0.99).unwrap();
        assert_eq!(s.mean, 1.5);
        assert_eq!(s.ci_low, 1.5);
        assert_eq!(s.ci_high, 1.5);
    }

    #[test]
    fn two_point_sample() {
        let s = summarize_values("x", &[1.0, 3.0], 0.99).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.half_width() - 2.576).abs() < 1e-3);
    }

    #[test]
    fn width_scales_with_root_n() {
        // Equal sample variance: width ratio is sqrt(4/100).
        let small: Vec<f64> = [0.0, 1.0, 0.0, 1.0].to_vec();
        let big: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let a = summarize_values("a", &small, 0.99).unwrap();
        let b = summarize_values("b", &big, 0.99).unwrap();
        let ratio = (b.half_width() / b.std_dev) / (a.half_width() / a.std_dev);
        assert!((ratio - 0.2).abs() < 1e-12);
    }

    #[test]
    fn too_few_results() {
        assert!(matches!(
            summarize_values("x", &[1.0], 0.99),
            Err(Error::InsufficientData { .. })
        ));
        assert!(summarize("x", &[], 0.99).is_err());
    }

    #[test]
    fn monotone_in_confidence() {
        let v = [1.0, 2.0, 4.0, 3.5];
        let lo = summarize_values("x", &v, 0.9).unwrap();
        let hi = summarize_values("x", &v, 0.99).unwrap();
        assert!(hi.half_width() > lo.half_width());
        assert!((hi.mean - hi.ci_low - (hi.ci_high - hi.mean)).abs() < 1e-12);
    }

    #[test]
    fn comparisons() {
        let mk = |m: f64, h: f64| PolicySummary {
            label: String::new(),
            mean: m,
            std_dev: 0.0,
            ci_low: m - h,
            ci_high: m + h,
            confidence: 0.99,
            replications: 10,
        };
        let c = compare(&mk(1.0, 0.1), &mk(2.0, 0.1));
        assert_eq!(c.ordering, Ordering::Less);
        assert!(c.significant);
        let c = compare(&mk(1.0, 1.0), &mk(1.2, 0.1));
        assert!(!c.significant);
        let c = compare(&mk(1.0, 0.1), &mk(1.0, 0.1));
        assert_eq!(c.ordering, Ordering::Equal);
        assert!(!c.significant);
    }
}
