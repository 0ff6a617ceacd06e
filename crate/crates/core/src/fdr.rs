//! False discovery rate control over a family of p-values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdrMode {
    /// Benjamini-Hochberg: keep every rank up to the largest passing one.
    #[default]
    StepUp,
    /// Keep exactly the ranks that individually satisfy `p < alpha * rank / n`.
    Literal,
}

impl std::str::FromStr for FdrMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().replace('-', "_").as_str() {
            "step_up" | "stepup" => Ok(FdrMode::StepUp),
            "literal" => Ok(FdrMode::Literal),
            other => Err(format!("unknown FDR mode '{other}' (expected step_up or literal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrConfig {
    pub alpha: f64,
    pub mode: FdrMode,
}

impl Default for FdrConfig {
    fn default() -> Self {
        FdrConfig {
            alpha: 0.05,
            mode: FdrMode::StepUp,
        }
    }
}

impl FdrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Ascending order of p-values; equal p-values keep their input order.
pub fn rank_order(pvalues: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pvalues.len()).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    order
}

/// Marks which p-values survive the correction. `n_tests` is the family size
/// and must be at least `pvalues.len()`; untested family members count as
/// p-values of 1.
pub fn fdr_select(pvalues: &[f64], alpha: f64, n_tests: usize, mode: FdrMode) -> Vec<bool> {
    assert!(
        n_tests >= pvalues.len(),
        "family size {n_tests} smaller than the number of p-values {}",
        pvalues.len()
    );
    let order = rank_order(pvalues);
    let threshold = |rank: usize| alpha * rank as f64 / n_tests as f64;
    let mut keep = vec![false; pvalues.len()];
    match mode {
        FdrMode::StepUp => {
            let cutoff = order
                .iter()
                .enumerate()
                .rev()
                .find(|(r, &idx)| pvalues[idx] < threshold(r + 1))
                .map_or(0, |(r, _)| r + 1);
            for &idx in &order[..cutoff] {
                keep[idx] = true;
            }
        }
        FdrMode::Literal => {
            for (r, &idx) in order.iter().enumerate() {
                keep[idx] = pvalues[idx] < threshold(r + 1);
            }
        }
    }
    keep
}

/// Applies [`fdr_select`] to keyed p-values; the survivors come back sorted
/// by `(p, key)`. Ties in p are ranked by key order.
pub fn fdr_validate<K: Ord>(
    mut pvals: Vec<(K, f64)>,
    alpha: f64,
    n_tests: usize,
    mode: FdrMode,
) -> Vec<(K, f64)> {
    pvals.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let p: Vec<f64> = pvals.iter().map(|x| x.1).collect();
    let keep = fdr_select(&p, alpha, n_tests, mode);
    pvals
        .into_iter()
        .zip(keep)
        .filter_map(|(x, k)| k.then_some(x))
        .collect()
}
