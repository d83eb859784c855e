//! Grouped ("little bags") distributional forests.
//!
//! The forest is `B` groups of `L = round(N / B)` honest trees. Group `b`
//! keeps only rows of its half-sample `S_b`, drawn by an independent fair
//! coin per row; each of its trees subsamples `ceil(|S_b|^beta)` of those
//! rows without replacement. Prediction weights are returned per group as
//! well as averaged, which gives both the forest estimate and `B`
//! half-sample replicates of it from a single fit.

mod config;
pub mod io;
mod split;
mod tree;

pub use config::{BandwidthPolicy, ForestConfig, SplitMode};
pub use split::{best_split, NodeResponses, SplitDecision, MIN_GAIN, TIE_TOLERANCE};
pub use tree::{build_tree, Node, Tree};

use ndarray::ArrayView2;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{median_bandwidth, Bandwidth};
use crate::rng::{self, Domain};

/// Attempts at redrawing a half-sample that came out too small.
pub const MAX_HALF_SAMPLE_ATTEMPTS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Group {
    /// Sorted row indices of `S_b`.
    pub half_sample: Vec<u32>,
    pub trees: Vec<Tree>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupedForest {
    pub groups: Vec<Group>,
    pub bandwidth: Bandwidth,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub config: ForestConfig,
}

/// Overall prediction weights plus one weight vector per group.
///
/// A group whose trees all abstain at the query point is `None` and left
/// out of the average.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBundle {
    pub weights: Vec<f64>,
    pub group_weights: Vec<Option<Vec<f64>>>,
}

impl WeightBundle {
    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn num_groups(&self) -> usize {
        self.group_weights.len()
    }

    pub fn active_groups(&self) -> impl Iterator<Item = &[f64]> {
        self.group_weights.iter().flatten().map(Vec::as_slice)
    }

    pub fn num_active(&self) -> usize {
        self.group_weights.iter().filter(|g| g.is_some()).count()
    }
}

fn draw_half_sample(n: usize, config: &ForestConfig, group: usize) -> Result<Vec<u32>> {
    let need = 2 * config.min_node_size;
    let mut rng = rng::stream(config.seed, Domain::HalfSample, group as u64, 0);
    for attempt in 0..MAX_HALF_SAMPLE_ATTEMPTS {
        let half: Vec<u32> = (0..n as u32).filter(|_| rng.random_bool(0.5)).collect();
        if half.len() >= need && config.subsample_size(half.len()) >= need {
            return Ok(half);
        }
        log::warn!(
            "group {group}: half-sample of {} rows too small (attempt {}), redrawing",
            half.len(),
            attempt + 1
        );
    }
    Err(Error::DegenerateData(format!(
        "group {group}: no half-sample with a tree subsample of at least {need} rows after \
         {MAX_HALF_SAMPLE_ATTEMPTS} attempts"
    )))
}

impl GroupedForest {
    /// Fits a grouped forest on covariates `x` (`n x p`) and responses `y` (`n x d`).
    ///
    /// Output depends only on the inputs and `config.seed`, not on the size of
    /// the rayon pool it runs in.
    pub fn fit(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, config: &ForestConfig) -> Result<Self> {
        let (n, p, d) = (x.nrows(), x.ncols(), y.ncols());
        check_dim(n, y.nrows())?;
        if p == 0 || d == 0 {
            return Err(Error::InvalidArgument(
                "need at least one covariate and one response column".into(),
            ));
        }
        config.validate(p)?;
        if n < 4 * config.min_node_size {
            return Err(Error::Config(format!(
                "{n} rows is fewer than 4 * min_node_size = {}",
                4 * config.min_node_size
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite training value".into()));
        }
        let bandwidth = match config.bandwidth {
            BandwidthPolicy::Fixed(s) => Bandwidth::new(s)?,
            BandwidthPolicy::Median => median_bandwidth(y, None, config.seed)?,
        };
        let per_group = config.trees_per_group();
        let halves = (0..config.num_groups)
            .map(|b| draw_half_sample(n, config, b))
            .collect::<Result<Vec<_>>>()?;

        let trees = (0..config.num_groups * per_group)
            .into_par_iter()
            .map(|k| {
                let (b, t) = (k / per_group, k % per_group);
                let mut rng = rng::stream(config.seed, Domain::Tree, b as u64, t as u64);
                let half = &halves[b];
                let size = config.subsample_size(half.len());
                let subsample: Vec<u32> = index::sample(&mut rng, half.len(), size)
                    .into_iter()
                    .map(|i| half[i])
                    .collect();
                build_tree(&subsample, x, y, config, bandwidth, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut trees = trees.into_iter();
        let groups = halves
            .into_iter()
            .map(|half_sample| Group {
                half_sample,
                trees: trees.by_ref().take(per_group).collect(),
            })
            .collect();
        Ok(GroupedForest {
            groups,
            bandwidth,
            n,
            p,
            d,
            config: config.clone(),
        })
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn trees(&self) -> impl Iterator<Item = &Tree> {
        self.groups.iter().flat_map(|g| g.trees.iter())
    }

    /// Prediction weights at `x`.
    ///
    /// Each tree spreads mass `1 / |leaf|` over the populate rows of the leaf
    /// containing `x`; trees whose leaf received no populate rows abstain and
    /// the group renormalizes over the remaining trees.
    pub fn weights(&self, x: &[f64]) -> Result<WeightBundle> {
        check_dim(self.p, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("query point must be finite".into()));
        }
        let group_weights: Vec<Option<Vec<f64>>> = self
            .groups
            .iter()
            .enumerate()
            .map(|(b, group)| {
                let mut w = vec![0.0; self.n];
                let mut contributing = 0usize;
                for tree in &group.trees {
                    let leaf = tree.leaf_rows_for(x);
                    if leaf.is_empty() {
                        continue;
                    }
                    contributing += 1;
                    let mass = 1.0 / leaf.len() as f64;
                    for &r in leaf {
                        w[r as usize] += mass;
                    }
                }
                if contributing == 0 {
                    log::warn!("group {b}: every tree abstains at the query point; group excluded");
                    return None;
                }
                let scale = 1.0 / contributing as f64;
                w.iter_mut().for_each(|v| *v *= scale);
                Some(w)
            })
            .collect();

        let active = group_weights.iter().flatten().count();
        if active == 0 {
            return Err(Error::DegenerateData(
                "no group has a populated leaf at the query point".into(),
            ));
        }
        let mut weights = vec![0.0; self.n];
        for w in group_weights.iter().flatten() {
            for (acc, v) in weights.iter_mut().zip(w) {
                *acc += v;
            }
        }
        let scale = 1.0 / active as f64;
        weights.iter_mut().for_each(|v| *v *= scale);
        Ok(WeightBundle {
            weights,
            group_weights,
        })
    }
}

/// Convenience wrapper: fit on a dataset's covariates and responses.
pub fn build_forest(dataset: &crate::data::Dataset, config: &ForestConfig) -> Result<GroupedForest> {
    GroupedForest::fit(dataset.x.view(), dataset.y.view(), config)
}
