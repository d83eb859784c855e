use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Bandwidth;

/// How node splits score the MMD between children.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Random Fourier features, redrawn at every node.
    Features,
    /// Exact Gaussian-kernel double sums. Quadratic in node size; meant for checks.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BandwidthPolicy {
    Median,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    /// Total number of trees `N`, spread over the groups.
    pub num_trees: usize,
    /// Number of half-sample groups `B`.
    pub num_groups: usize,
    /// Each tree subsamples `ceil(|S_b|^beta)` rows of its group's half-sample.
    pub subsample_exponent: f64,
    /// Candidate covariates per split; `None` means `ceil(sqrt(p))`.
    pub mtry: Option<usize>,
    /// `kappa`: nodes with fewer than `2 kappa` build rows become leaves.
    pub min_node_size: usize,
    /// Every child keeps at least this fraction of its parent's build rows.
    pub alpha: f64,
    /// Random Fourier features per node (`R`).
    pub num_features: usize,
    pub bandwidth: BandwidthPolicy,
    pub split_mode: SplitMode,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            num_trees: 10_000,
            num_groups: 50,
            subsample_exponent: 0.9,
            mtry: None,
            min_node_size: 5,
            alpha: 0.05,
            num_features: 10,
            bandwidth: BandwidthPolicy::Median,
            split_mode: SplitMode::Features,
            seed: 1,
        }
    }
}

impl ForestConfig {
    /// `L = round(N / B)`.
    pub fn trees_per_group(&self) -> usize {
        (self.num_trees as f64 / self.num_groups.max(1) as f64).round() as usize
    }

    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
            .clamp(1, p.max(1))
    }

    /// Rows drawn for one tree from a half-sample of `len` rows.
    pub fn subsample_size(&self, len: usize) -> usize {
        ((len as f64).powf(self.subsample_exponent).ceil() as usize).min(len)
    }

    /// Smallest admissible child (in build rows) for a parent of `parent` build rows.
    pub fn min_child(&self, parent: usize) -> usize {
        ((self.alpha * parent as f64).ceil() as usize).max(self.min_node_size)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_groups == 0 {
            return fail("num_groups must be positive".into());
        }
        if self.num_trees == 0 || self.trees_per_group() == 0 {
            return fail(format!(
                "round(num_trees / num_groups) must be at least 1 (num_trees={}, num_groups={})",
                self.num_trees, self.num_groups
            ));
        }
        if !(self.subsample_exponent > 0.0 && self.subsample_exponent < 1.0) {
            return fail(format!(
                "subsample_exponent must lie in (0, 1), got {}",
                self.subsample_exponent
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.2) {
            return fail(format!("alpha must lie in (0, 0.2], got {}", self.alpha));
        }
        if self.min_node_size == 0 {
            return fail("min_node_size must be positive".into());
        }
        if self.num_features == 0 {
            return fail("num_features must be positive".into());
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > p {
                return fail(format!("mtry must lie in [1, {p}], got {m}"));
            }
        }
        if let BandwidthPolicy::Fixed(s) = self.bandwidth {
            Bandwidth::new(s)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trees_per_group_rounds() {
        let mut c = ForestConfig {
            num_trees: 100,
            num_groups: 100,
            ..Default::default()
        };
        assert_eq!(c.trees_per_group(), 1);
        c.num_trees = 1000;
        assert_eq!(c.trees_per_group(), 10);
        c.num_trees = 149;
        assert_eq!(c.trees_per_group(), 1);
        c.num_trees = 49;
        assert!(c.validate(3).is_err());
    }

    #[test]
    fn subsample_size_of_half_sample() {
        let c = ForestConfig::default();
        assert_eq!(c.subsample_size(500), 269);
        assert_eq!(c.subsample_size(1), 1);
    }

    #[test]
    fn defaults_and_validation() {
        let c = ForestConfig::default();
        assert!(c.validate(5).is_ok());
        assert_eq!(c.mtry_for(5), 3);
        assert_eq!(c.mtry_for(1), 1);
        assert_eq!(c.min_child(100), 5);
        assert_eq!(c.min_child(1000), 50);
        let bad = ForestConfig {
            alpha: 0.3,
            ..Default::default()
        };
        assert!(bad.validate(5).is_err());
        let bad = ForestConfig {
            subsample_exponent: 1.0,
            ..Default::default()
        };
        assert!(bad.validate(5).is_err());
        let bad = ForestConfig {
            mtry: Some(6),
            ..Default::default()
        };
        assert!(bad.validate(5).is_err());
        let bad = ForestConfig {
            bandwidth: BandwidthPolicy::Fixed(0.0),
            ..Default::default()
        };
        assert!(bad.validate(5).is_err());
    }
}
