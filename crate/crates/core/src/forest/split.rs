//! MMD split search.
//!
//! A candidate split of a node `I` into `I_L`, `I_R` is scored by
//!
//! ```text
//! (|I_L| |I_R| / |I|^2) * || mean_{I_L} k(Y_i, .) - mean_{I_R} k(Y_i, .) ||_H^2
//! ```
//!
//! which for `d = 1` and the linear kernel is the CART variance reduction.
//! Features mode evaluates the norm on random Fourier embeddings with running
//! sums, so one pass over the sorted node covers every threshold. Exact mode
//! keeps running Gram block sums instead.

use ndarray::ArrayView2;

use crate::kernel::{kernel_unchecked, Bandwidth};

/// Scores at or below this are treated as "no improvement".
pub const MIN_GAIN: f64 = 1e-12;

/// Relative margin a later candidate needs to displace the incumbent.
/// Candidates are visited by increasing feature index, then threshold, so
/// near-ties go to the lowest feature and lowest threshold.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitDecision {
    pub feature: usize,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub score: f64,
    pub left_count: usize,
}

/// Response representation of the rows of one node, aligned with `rows`.
pub enum NodeResponses<'a> {
    /// Row-major `rows.len() x num_features` embedding matrix.
    Features { embedded: &'a [f64], num_features: usize },
    /// Exact kernel evaluated on the raw responses.
    Exact { y: ArrayView2<'a, f64>, bandwidth: Bandwidth },
}

#[inline]
pub(crate) fn improves(score: f64, best: Option<f64>) -> bool {
    match best {
        None => score > MIN_GAIN,
        Some(b) => score > b + TIE_TOLERANCE * b.abs(),
    }
}

/// Threshold strictly separating `lo < hi`: their midpoint, unless rounding
/// pushes it onto `hi`.
#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + 0.5 * (hi - lo);
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Best admissible split over `candidates` (sorted ascending) for the node
/// holding `rows` of `x`. Both children must keep at least `min_child` rows.
pub fn best_split(
    x: ArrayView2<'_, f64>,
    rows: &[u32],
    responses: &NodeResponses<'_>,
    candidates: &[usize],
    min_child: usize,
) -> Option<SplitDecision> {
    let m = rows.len();
    let min_child = min_child.max(1);
    if m < 2 * min_child {
        return None;
    }
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(m);
    let mut best: Option<SplitDecision> = None;
    let mut scan = match responses {
        NodeResponses::Features {
            embedded,
            num_features,
        } => Scanner::features(embedded, *num_features, m),
        NodeResponses::Exact { y, bandwidth } => Scanner::exact(*y, rows, *bandwidth),
    };
    for &feature in candidates {
        order.clear();
        order.extend(
            rows.iter()
                .enumerate()
                .map(|(local, &r)| (x[[r as usize, feature]], local)),
        );
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if order[0].0 == order[m - 1].0 {
            continue;
        }
        scan.reset();
        for k in 0..(m - min_child) {
            scan.move_left(order[k].1);
            let left = k + 1;
            if left < min_child || order[k].0 == order[k + 1].0 {
                continue;
            }
            let score = scan.score(left, m - left);
            if improves(score, best.map(|b| b.score)) {
                best = Some(SplitDecision {
                    feature,
                    threshold: midpoint(order[k].0, order[k + 1].0),
                    score,
                    left_count: left,
                });
            }
        }
    }
    best
}

enum Scanner<'a> {
    Features {
        embedded: &'a [f64],
        r: usize,
        total: Vec<f64>,
        left: Vec<f64>,
    },
    Exact {
        gram: Vec<f64>,
        m: usize,
        row_sums: Vec<f64>,
        total: f64,
        in_left: Vec<bool>,
        s_ll: f64,
        s_rr: f64,
        s_lr: f64,
    },
}

impl<'a> Scanner<'a> {
    fn features(embedded: &'a [f64], r: usize, m: usize) -> Self {
        let mut total = vec![0.0; r];
        for row in embedded[..m * r].chunks_exact(r) {
            for (t, v) in total.iter_mut().zip(row) {
                *t += v;
            }
        }
        Scanner::Features {
            embedded,
            r,
            total,
            left: vec![0.0; r],
        }
    }

    fn exact(y: ArrayView2<'_, f64>, rows: &[u32], bw: Bandwidth) -> Self {
        let m = rows.len();
        let ys: Vec<Vec<f64>> = rows.iter().map(|&r| y.row(r as usize).to_vec()).collect();
        let mut gram = vec![0.0; m * m];
        for i in 0..m {
            gram[i * m + i] = 1.0;
            for j in (i + 1)..m {
                let v = kernel_unchecked(&ys[i], &ys[j], bw);
                gram[i * m + j] = v;
                gram[j * m + i] = v;
            }
        }
        let row_sums: Vec<f64> = gram.chunks_exact(m).map(|r| r.iter().sum()).collect();
        let total = row_sums.iter().sum();
        Scanner::Exact {
            gram,
            m,
            row_sums,
            total,
            in_left: vec![false; m],
            s_ll: 0.0,
            s_rr: total,
            s_lr: 0.0,
        }
    }

    fn reset(&mut self) {
        match self {
            Scanner::Features { left, .. } => left.iter_mut().for_each(|v| *v = 0.0),
            Scanner::Exact {
                in_left,
                s_ll,
                s_rr,
                s_lr,
                total,
                ..
            } => {
                in_left.iter_mut().for_each(|v| *v = false);
                *s_ll = 0.0;
                *s_rr = *total;
                *s_lr = 0.0;
            }
        }
    }

    #[inline]
    fn move_left(&mut self, local: usize) {
        match self {
            Scanner::Features {
                embedded, r, left, ..
            } => {
                let row = &embedded[local * *r..(local + 1) * *r];
                for (l, v) in left.iter_mut().zip(row) {
                    *l += v;
                }
            }
            Scanner::Exact {
                gram,
                m,
                row_sums,
                in_left,
                s_ll,
                s_rr,
                s_lr,
                ..
            } => {
                let g = &gram[local * *m..(local + 1) * *m];
                let to_left: f64 = g.iter().zip(in_left.iter()).filter(|(_, &l)| l).map(|(v, _)| v).sum();
                let diag = g[local];
                let to_right = row_sums[local] - diag - to_left;
                *s_ll += 2.0 * to_left + diag;
                *s_rr -= 2.0 * to_right + diag;
                *s_lr += to_right - to_left;
                in_left[local] = true;
            }
        }
    }

    #[inline]
    fn score(&self, n_left: usize, n_right: usize) -> f64 {
        let (nl, nr) = (n_left as f64, n_right as f64);
        let n = nl + nr;
        let weight = nl * nr / (n * n);
        match self {
            Scanner::Features { total, left, .. } => {
                let (inv_l, inv_r) = (1.0 / nl, 1.0 / nr);
                let dist: f64 = left
                    .iter()
                    .zip(total)
                    .map(|(l, t)| {
                        let diff = l * inv_l - (t - l) * inv_r;
                        diff * diff
                    })
                    .sum();
                weight * dist
            }
            Scanner::Exact {
                s_ll, s_rr, s_lr, ..
            } => {
                let dist = s_ll / (nl * nl) + s_rr / (nr * nr) - 2.0 * s_lr / (nl * nr);
                weight * dist.max(0.0)
            }
        }
    }
}
