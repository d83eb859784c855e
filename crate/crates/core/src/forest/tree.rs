//! Honest trees.
//!
//! A tree's subsample is shuffled and halved. The build half alone chooses
//! the splits; the populate half is then routed through the fitted splits and
//! its rows become the leaf memberships used for prediction.

use ndarray::ArrayView2;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ForestConfig, SplitMode};
use super::split::{best_split, NodeResponses, SplitDecision};
use crate::error::{Error, Result};
use crate::kernel::{Bandwidth, FeatureMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        build_count: u32,
    },
    Leaf {
        /// Range into [`Tree::leaf_rows`].
        start: u32,
        len: u32,
        build_count: u32,
    },
}

impl Node {
    pub fn build_count(&self) -> usize {
        match *self {
            Node::Split { build_count, .. } | Node::Leaf { build_count, .. } => build_count as usize,
        }
    }
}

/// A fitted tree in arena form; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
    /// Populate-half rows grouped by leaf.
    pub(crate) leaf_rows: Vec<u32>,
    /// Rows whose responses chose the splits.
    pub(crate) build_rows: Vec<u32>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn build_rows(&self) -> &[u32] {
        &self.build_rows
    }

    /// All populate-half rows, in leaf order.
    pub fn populate_rows(&self) -> &[u32] {
        &self.leaf_rows
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                Node::Leaf { .. } => return at,
            }
        }
    }

    /// Populate rows of the leaf containing `x`; may be empty.
    pub fn leaf_rows_for(&self, x: &[f64]) -> &[u32] {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { start, len, .. } => &self.leaf_rows[start as usize..(start + len) as usize],
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    /// Assembles a tree from parts; used by deserialization and hand-built tests.
    pub fn from_parts(nodes: Vec<Node>, leaf_rows: Vec<u32>, build_rows: Vec<u32>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Format("tree without nodes".into()));
        }
        for node in &nodes {
            match *node {
                Node::Split { left, right, .. } => {
                    if left as usize >= nodes.len() || right as usize >= nodes.len() {
                        return Err(Error::Format("split child out of range".into()));
                    }
                }
                Node::Leaf { start, len, .. } => {
                    if (start as usize + len as usize) > leaf_rows.len() {
                        return Err(Error::Format("leaf range out of bounds".into()));
                    }
                }
            }
        }
        Ok(Tree {
            nodes,
            leaf_rows,
            build_rows,
        })
    }
}

/// Grows one honest tree on `subsample` (row indices into `x` and `y`).
pub fn build_tree<R: Rng + ?Sized>(
    subsample: &[u32],
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    config: &ForestConfig,
    bandwidth: Bandwidth,
    rng: &mut R,
) -> Result<Tree> {
    let kappa = config.min_node_size;
    if subsample.len() < 2 * kappa {
        return Err(Error::Config(format!(
            "tree subsample of {} rows is smaller than 2 * min_node_size = {}",
            subsample.len(),
            2 * kappa
        )));
    }
    let mut rows = subsample.to_vec();
    rows.shuffle(rng);
    let half = rows.len().div_ceil(2);
    let populate = rows.split_off(half);
    let build_rows = rows.clone();

    let mut grower = Grower {
        x,
        y,
        config,
        bandwidth,
        mtry: config.mtry_for(x.ncols()),
        nodes: Vec::new(),
        embedded: Vec::new(),
    };
    grower.grow(&mut rows, rng)?;

    let mut tree = Tree {
        nodes: grower.nodes,
        leaf_rows: Vec::new(),
        build_rows,
    };
    populate_leaves(&mut tree, &populate, x);
    Ok(tree)
}

fn populate_leaves(tree: &mut Tree, populate: &[u32], x: ArrayView2<'_, f64>) {
    let mut by_leaf: Vec<Vec<u32>> = vec![Vec::new(); tree.nodes.len()];
    let mut buf = vec![0.0; x.ncols()];
    for &r in populate {
        for (b, v) in buf.iter_mut().zip(x.row(r as usize)) {
            *b = *v;
        }
        by_leaf[tree.leaf_index(&buf)].push(r);
    }
    let mut leaf_rows = Vec::with_capacity(populate.len());
    for (node, members) in tree.nodes.iter_mut().zip(by_leaf) {
        if let Node::Leaf { start, len, .. } = node {
            *start = leaf_rows.len() as u32;
            *len = members.len() as u32;
            leaf_rows.extend(members);
        }
    }
    tree.leaf_rows = leaf_rows;
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView2<'a, f64>,
    config: &'a ForestConfig,
    bandwidth: Bandwidth,
    mtry: usize,
    nodes: Vec<Node>,
    embedded: Vec<f64>,
}

impl Grower<'_> {
    fn push_leaf(&mut self, build_count: usize) -> u32 {
        self.nodes.push(Node::Leaf {
            start: 0,
            len: 0,
            build_count: build_count as u32,
        });
        (self.nodes.len() - 1) as u32
    }

    fn find_split<R: Rng + ?Sized>(&mut self, rows: &[u32], rng: &mut R) -> Result<Option<SplitDecision>> {
        let p = self.x.ncols();
        let mut candidates = index::sample(rng, p, self.mtry).into_vec();
        candidates.sort_unstable();
        let min_child = self.config.min_child(rows.len());
        let decision = match self.config.split_mode {
            SplitMode::Exact => {
                let responses = NodeResponses::Exact {
                    y: self.y,
                    bandwidth: self.bandwidth,
                };
                best_split(self.x, rows, &responses, &candidates, min_child)
            }
            SplitMode::Features => {
                let r = self.config.num_features;
                let map = FeatureMap::sample(r, self.y.ncols(), self.bandwidth, rng)?;
                self.embedded.clear();
                self.embedded.resize(rows.len() * r, 0.0);
                let mut yrow = vec![0.0; self.y.ncols()];
                for (out, &row) in self.embedded.chunks_exact_mut(r).zip(rows) {
                    for (b, v) in yrow.iter_mut().zip(self.y.row(row as usize)) {
                        *b = *v;
                    }
                    map.embed_into(&yrow, out);
                }
                let responses = NodeResponses::Features {
                    embedded: &self.embedded,
                    num_features: r,
                };
                best_split(self.x, rows, &responses, &candidates, min_child)
            }
        };
        Ok(decision)
    }

    fn grow<R: Rng + ?Sized>(&mut self, rows: &mut [u32], rng: &mut R) -> Result<u32> {
        let m = rows.len();
        if m < 2 * self.config.min_node_size {
            return Ok(self.push_leaf(m));
        }
        let Some(decision) = self.find_split(rows, rng)? else {
            return Ok(self.push_leaf(m));
        };
        let x = self.x;
        let (f, t) = (decision.feature, decision.threshold);
        let mut boundary = 0;
        for i in 0..m {
            if x[[rows[i] as usize, f]] <= t {
                rows.swap(i, boundary);
                boundary += 1;
            }
        }
        debug_assert_eq!(boundary, decision.left_count);
        let id = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: f as u32,
            threshold: t,
            left: 0,
            right: 0,
            build_count: m as u32,
        });
        let (left_rows, right_rows) = rows.split_at_mut(boundary);
        let left = self.grow(left_rows, rng)?;
        let right = self.grow(right_rows, rng)?;
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        Ok(id as u32)
    }
}
