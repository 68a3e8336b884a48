//! Paired significance testing and effect sizes for within-model
//! comparisons: paired two-sided t-test, Cohen's d with equal-weight pooled
//! standard deviation, and the Bonferroni significance gate.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// Significance level before correction.
pub const DEFAULT_ALPHA: f64 = 0.001;
/// Number of model comparisons the correction divides by.
pub const DEFAULT_COMPARISONS: usize = 7;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least two samples with nonzero variance")]
    DegenerateVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_stat: f64,
    /// Two-sided p-value from the t distribution with n-1 degrees of
    /// freedom.
    pub p_value: f64,
    pub mean_diff: f64,
    pub n: usize,
}

/// Summary of one metric's causal-vs-direct comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub mean_diff: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub cohens_d: f64,
    pub significant_after_bonferroni: bool,
    pub m_comparisons: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (ddof = 1).
fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Paired two-sided t-test on per-sample differences: t = mean / SE(mean).
pub fn paired_t_test(diffs: &[f64]) -> Result<TTestResult, StatsError> {
    if diffs.len() < 2 {
        return Err(StatsError::DegenerateVariance);
    }
    let n = diffs.len() as f64;
    let m = mean(diffs);
    let var = sample_variance(diffs);
    if var <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let t = m / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("n >= 2");
    let p = 2.0 * dist.sf(t.abs());
    Ok(TTestResult {
        t_stat: t,
        p_value: p.min(1.0),
        mean_diff: m,
        n: diffs.len(),
    })
}

/// Cohen's d with the equal-weight two-group pooled standard deviation
/// sqrt((s_a^2 + s_b^2) / 2). Errors when both variances are zero.
pub fn cohens_d(group_a: &[f64], group_b: &[f64]) -> Result<f64, StatsError> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(StatsError::DegenerateVariance);
    }
    let va = sample_variance(group_a);
    let vb = sample_variance(group_b);
    if va == 0.0 && vb == 0.0 {
        let diff = mean(group_a) - mean(group_b);
        if diff == 0.0 {
            return Ok(0.0);
        }
        return Err(StatsError::DegenerateVariance);
    }
    let pooled = ((va + vb) / 2.0).sqrt();
    Ok((mean(group_a) - mean(group_b)) / pooled)
}

/// Bonferroni gate: significant iff p < alpha / m (strict inequality).
pub fn bonferroni_gate(p: f64, m: usize, alpha: f64) -> bool {
    assert!(m >= 1, "comparison count must be at least 1");
    p < alpha / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn near_constant_positive_shift_is_extreme() {
        let mut diffs = vec![1.0; 12];
        diffs[3] = 1.0001;
        let result = paired_t_test(&diffs).unwrap();
        assert!(result.t_stat > 1e4);
        assert!(result.p_value < 1e-12);
    }

    #[test]
    fn symmetric_diffs_are_insignificant() {
        let diffs = [-2.0, -1.0, 1.0, 2.0];
        let result = paired_t_test(&diffs).unwrap();
        assert_abs_diff_eq!(result.t_stat, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(result.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn textbook_recomputation_matches() {
        // diffs [0.5, 1.0, 1.5, 2.0]: mean 1.25, s^2 = 0.41666...,
        // SE = sqrt(s^2/4), t = 1.25/SE = 3.872983...
        let result = paired_t_test(&[0.5, 1.0, 1.5, 2.0]).unwrap();
        let expected_t = 1.25 / (0.416_666_666_666_666_7f64 / 4.0).sqrt();
        assert_abs_diff_eq!(result.t_stat, expected_t, epsilon = 1e-12);
        assert_abs_diff_eq!(result.t_stat, 3.872_983_346_207_417, epsilon = 1e-9);
        // Two-sided p for t = 3.87298, df = 3.
        assert_abs_diff_eq!(result.p_value, 0.030_466_291_662_170_29, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_variance_is_rejected() {
        assert!(matches!(
            paired_t_test(&[1.0, 1.0, 1.0]),
            Err(StatsError::DegenerateVariance)
        ));
        assert!(matches!(
            paired_t_test(&[1.0]),
            Err(StatsError::DegenerateVariance)
        ));
    }

    #[test]
    fn cohens_d_worked_example() {
        // a=[2,3,4], b=[1,1,1]: pooled sd = sqrt((1+0)/2), d = 2/sqrt(0.5).
        let d = cohens_d(&[2.0, 3.0, 4.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(d, 2.828_427_124_746_19, epsilon = 1e-9);
    }

    #[test]
    fn identical_groups_have_zero_effect() {
        let d = cohens_d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
        // Both constant and equal: defined as zero.
        assert_eq!(cohens_d(&[2.0, 2.0], &[2.0, 2.0]).unwrap(), 0.0);
        // Both constant but different: undefined.
        assert!(matches!(
            cohens_d(&[2.0, 2.0], &[1.0, 1.0]),
            Err(StatsError::DegenerateVariance)
        ));
    }

    #[test]
    fn bonferroni_boundary_is_strict() {
        assert!(bonferroni_gate(1e-5, 7, 0.001));
        assert!(!bonferroni_gate(5e-4, 7, 0.001));
        let boundary = 0.001 / 7.0;
        assert!(!bonferroni_gate(boundary, 7, 0.001));
        // m = 1 reduces to p < alpha.
        assert!(bonferroni_gate(0.0009, 1, 0.001));
        assert!(!bonferroni_gate(0.001, 1, 0.001));
    }
}
