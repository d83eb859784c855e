//! Conditional two-sample test between treatment arms at a query point.
//!
//! Each arm gets its own grouped forest; both share one bandwidth taken from
//! the pooled responses, so the two weighted embeddings live in the same
//! RKHS. The statistic is the squared MMD between the weighted arm
//! distributions and its null is simulated by pairing group `b` of one arm
//! with group `b` of the other.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::forest::{BandwidthPolicy, ForestConfig, GroupedForest, WeightBundle};
use crate::kernel::{kernel_unchecked, median_bandwidth, Bandwidth, GramMatrices};
use crate::rng::{derive_seed, Domain};
use crate::stats::empirical_quantile;

/// Pre-clamp quadratic forms below this are reported as numerical trouble.
const NEGATIVE_SLACK: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct TwoGroupFit {
    pub forest0: GroupedForest,
    pub forest1: GroupedForest,
    pub bandwidth: Bandwidth,
    pub y0: Array2<f64>,
    pub y1: Array2<f64>,
}

impl TwoGroupFit {
    pub fn n0(&self) -> usize {
        self.y0.nrows()
    }

    pub fn n1(&self) -> usize {
        self.y1.nrows()
    }
}

/// Fits one forest per treatment arm of `dataset`.
///
/// The bandwidth is `config.bandwidth` if fixed, otherwise the median
/// heuristic over the pooled responses of both arms.
pub fn fit_two_groups(dataset: &Dataset, config: &ForestConfig) -> Result<TwoGroupFit> {
    let treat = dataset
        .treatment
        .as_ref()
        .ok_or_else(|| Error::Schema("two-sample test needs a treatment column".into()))?;
    let arm_rows = |arm: f64| -> Vec<usize> { (0..treat.len()).filter(|&i| treat[i] == arm).collect() };
    let (rows0, rows1) = (arm_rows(0.0), arm_rows(1.0));
    for (arm, rows) in [(0, &rows0), (1, &rows1)] {
        if rows.is_empty() {
            return Err(Error::DegenerateData(format!("treatment arm {arm} is empty")));
        }
    }
    let bandwidth = match config.bandwidth {
        BandwidthPolicy::Fixed(s) => Bandwidth::new(s)?,
        BandwidthPolicy::Median => median_bandwidth(dataset.y.view(), None, config.seed)?,
    };
    let fit_arm = |arm: u64, rows: &[usize]| -> Result<(GroupedForest, Array2<f64>)> {
        let cfg = ForestConfig {
            bandwidth: BandwidthPolicy::Fixed(bandwidth.sigma()),
            seed: derive_seed(config.seed, &[Domain::Arm as u64, arm]),
            ..config.clone()
        };
        let x = dataset.x.select(Axis(0), rows);
        let y = dataset.y.select(Axis(0), rows);
        let forest = GroupedForest::fit(x.view(), y.view(), &cfg)
            .map_err(|e| match e {
                Error::Config(msg) => Error::DegenerateData(format!("treatment arm {arm}: {msg}")),
                other => other,
            })?;
        Ok((forest, y))
    };
    let (arm0, arm1) = rayon::join(|| fit_arm(0, &rows0), || fit_arm(1, &rows1));
    let (forest0, y0) = arm0?;
    let (forest1, y1) = arm1?;
    Ok(TwoGroupFit {
        forest0,
        forest1,
        bandwidth,
        y0,
        y1,
    })
}

/// `a^T K b`, skipping zero entries of `a`.
fn bilinear(a: &[f64], k: &Array2<f64>, b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let row = k.row(i);
        let inner: f64 = row.iter().zip(b).map(|(kij, bj)| kij * bj).sum();
        total += ai * inner;
    }
    total
}

fn mmd_raw(w0: &[f64], w1: &[f64], gm: &GramMatrices) -> f64 {
    bilinear(w0, &gm.k0, w0) + bilinear(w1, &gm.k1, w1) - 2.0 * bilinear(w0, &gm.k01, w1)
}

fn clamp_form(v: f64, what: &str) -> f64 {
    if v < -NEGATIVE_SLACK {
        log::warn!("{what} quadratic form is {v:e} before clamping");
    }
    v.max(0.0)
}

/// `w0^T K0 w0 + w1^T K1 w1 - 2 w0^T K01 w1`, clamped at zero.
pub fn mmd_statistic(w0: &[f64], w1: &[f64], gm: &GramMatrices) -> Result<f64> {
    check_dim(gm.n0(), w0.len())?;
    check_dim(gm.n1(), w1.len())?;
    Ok(clamp_form(mmd_raw(w0, w1, gm), "statistic"))
}

/// The same quadratic form evaluated on `w_b - w` for each pair of groups
/// `(b, b)`. Pairs where either arm's group abstained are skipped.
pub fn null_draws(bundle0: &WeightBundle, bundle1: &WeightBundle, gm: &GramMatrices) -> Result<Vec<f64>> {
    if bundle0.num_groups() != bundle1.num_groups() {
        return Err(Error::Config(format!(
            "arms have different group counts ({} vs {})",
            bundle0.num_groups(),
            bundle1.num_groups()
        )));
    }
    check_dim(gm.n0(), bundle0.n())?;
    check_dim(gm.n1(), bundle1.n())?;
    let diff = |g: &[f64], w: &[f64]| -> Vec<f64> { g.iter().zip(w).map(|(a, b)| a - b).collect() };
    let draws: Vec<f64> = bundle0
        .group_weights
        .iter()
        .zip(&bundle1.group_weights)
        .filter_map(|(g0, g1)| match (g0, g1) {
            (Some(g0), Some(g1)) => {
                let d0 = diff(g0, &bundle0.weights);
                let d1 = diff(g1, &bundle1.weights);
                Some(clamp_form(mmd_raw(&d0, &d1, gm), "null draw"))
            }
            _ => None,
        })
        .collect();
    let skipped = bundle0.num_groups() - draws.len();
    if skipped > 0 {
        log::debug!("{skipped} null draws skipped for abstaining groups");
    }
    Ok(draws)
}

/// `sum_i w1_i k(Y1_i, y) - sum_i w0_i k(Y0_i, y)`.
pub fn witness(
    w0: &[f64],
    w1: &[f64],
    y0: ArrayView2<'_, f64>,
    y1: ArrayView2<'_, f64>,
    bw: Bandwidth,
    y: &[f64],
) -> Result<f64> {
    check_dim(y0.nrows(), w0.len())?;
    check_dim(y1.nrows(), w1.len())?;
    check_dim(y0.ncols(), y.len())?;
    check_dim(y1.ncols(), y.len())?;
    Ok(embedding_at(w1, y1, bw, y) - embedding_at(w0, y0, bw, y))
}

fn embedding_at(w: &[f64], ys: ArrayView2<'_, f64>, bw: Bandwidth, y: &[f64]) -> f64 {
    let mut row = vec![0.0; y.len()];
    w.iter()
        .zip(ys.rows())
        .filter(|(wi, _)| **wi != 0.0)
        .map(|(wi, r)| {
            row.iter_mut().zip(r.iter()).for_each(|(o, v)| *o = *v);
            wi * kernel_unchecked(&row, y, bw)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoditeTestResult {
    pub statistic: f64,
    pub null_draws: Vec<f64>,
    /// Type-1 empirical `1 - alpha` quantile of the null draws.
    pub threshold_c: f64,
    /// `(1 + #{draws >= statistic}) / (B + 1)`.
    pub p_value: f64,
    pub alpha: f64,
    pub n0: usize,
    pub n1: usize,
}

impl CoditeTestResult {
    pub fn reject(&self) -> bool {
        self.statistic > self.threshold_c
    }

    fn from_parts(statistic: f64, null_draws: Vec<f64>, alpha: f64, n0: usize, n1: usize) -> Result<Self> {
        let threshold_c = empirical_quantile(&null_draws, 1.0 - alpha)?;
        let exceed = null_draws.iter().filter(|&&d| d >= statistic).count();
        let p_value = (1 + exceed) as f64 / (null_draws.len() + 1) as f64;
        Ok(CoditeTestResult {
            statistic,
            null_draws,
            threshold_c,
            p_value,
            alpha,
            n0,
            n1,
        })
    }
}

/// Simultaneous band `witness(y) -/+ sqrt(threshold_c)` for the conditional witness function.
///
/// Holds the arm weights restricted to their support.
#[derive(Clone, Debug)]
pub struct WitnessBand {
    pub half_width: f64,
    w0: Vec<f64>,
    w1: Vec<f64>,
    y0: Array2<f64>,
    y1: Array2<f64>,
    bandwidth: Bandwidth,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPoint {
    pub witness: f64,
    pub lower: f64,
    pub upper: f64,
}

impl WitnessBand {
    pub fn new(
        result: &CoditeTestResult,
        w0: &[f64],
        w1: &[f64],
        y0: ArrayView2<'_, f64>,
        y1: ArrayView2<'_, f64>,
        bandwidth: Bandwidth,
    ) -> Result<Self> {
        check_dim(y0.nrows(), w0.len())?;
        check_dim(y1.nrows(), w1.len())?;
        check_dim(y0.ncols(), y1.ncols())?;
        let (w0, y0) = restrict(w0, y0);
        let (w1, y1) = restrict(w1, y1);
        Ok(WitnessBand {
            half_width: result.threshold_c.max(0.0).sqrt(),
            w0,
            w1,
            y0,
            y1,
            bandwidth,
        })
    }

    pub fn dim(&self) -> usize {
        self.y0.ncols()
    }

    pub fn witness(&self, y: &[f64]) -> Result<f64> {
        witness(&self.w0, &self.w1, self.y0.view(), self.y1.view(), self.bandwidth, y)
    }

    pub fn at(&self, y: &[f64]) -> Result<BandPoint> {
        let w = self.witness(y)?;
        Ok(BandPoint {
            witness: w,
            lower: w - self.half_width,
            upper: w + self.half_width,
        })
    }

    /// `points` equally spaced values over the pooled response range
    /// widened by one bandwidth on each side. Only for scalar responses.
    pub fn default_grid(&self, points: usize) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(Error::InvalidArgument(
                "a default grid exists only for scalar responses; supply probe points".into(),
            ));
        }
        let all = self.y0.iter().chain(self.y1.iter());
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min) - self.bandwidth.sigma();
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max) + self.bandwidth.sigma();
        let points = points.max(2);
        Ok((0..points)
            .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
            .collect())
    }

    /// Writes `y..., witness, lower, upper` rows for each probe point.
    pub fn write_csv<W: Write>(&self, out: W, probes: &[Vec<f64>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = if self.dim() == 1 {
            vec!["y".into()]
        } else {
            (1..=self.dim()).map(|j| format!("y{j}")).collect()
        };
        header.extend(["witness", "lower", "upper"].map(String::from));
        w.write_record(&header)?;
        for y in probes {
            let p = self.at(y)?;
            let mut rec: Vec<String> = y.iter().map(|v| v.to_string()).collect();
            rec.extend([p.witness, p.lower, p.upper].map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<witness csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, probes: &[Vec<f64>]) -> Result<()> {
        let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        self.write_csv(std::io::BufWriter::new(file), probes)
    }
}

fn support(w: &[f64]) -> Vec<usize> {
    (0..w.len()).filter(|&i| w[i] != 0.0).collect()
}

fn restrict(w: &[f64], y: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
    let s = support(w);
    (s.iter().map(|&i| w[i]).collect(), y.select(Axis(0), &s))
}

fn restrict_bundle(b: &WeightBundle, s: &[usize]) -> WeightBundle {
    let pick = |w: &[f64]| s.iter().map(|&i| w[i]).collect::<Vec<_>>();
    WeightBundle {
        weights: pick(&b.weights),
        group_weights: b.group_weights.iter().map(|g| g.as_deref().map(pick)).collect(),
    }
}

/// Runs the test at `x` and builds the matching witness band.
///
/// Kernel matrices are formed only over rows with positive overall weight;
/// every group weight vector is supported inside that set.
pub fn codite_analysis(fit: &TwoGroupFit, x: &[f64], alpha: f64) -> Result<(CoditeTestResult, WitnessBand)> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 0.5], got {alpha}")));
    }
    let (b0, b1) = rayon::join(|| fit.forest0.weights(x), || fit.forest1.weights(x));
    let (b0, b1) = (b0?, b1?);
    let (s0, s1) = (support(&b0.weights), support(&b1.weights));
    let (b0, b1) = (restrict_bundle(&b0, &s0), restrict_bundle(&b1, &s1));
    let y0 = fit.y0.select(Axis(0), &s0);
    let y1 = fit.y1.select(Axis(0), &s1);
    let gm = GramMatrices::new(y0.view(), y1.view(), fit.bandwidth)?;
    let statistic = mmd_statistic(&b0.weights, &b1.weights, &gm)?;
    let draws = null_draws(&b0, &b1, &gm)?;
    let result = CoditeTestResult::from_parts(statistic, draws, alpha, fit.n0(), fit.n1())?;
    let band = WitnessBand::new(&result, &b0.weights, &b1.weights, y0.view(), y1.view(), fit.bandwidth)?;
    Ok((result, band))
}

pub fn codite_test(fit: &TwoGroupFit, x: &[f64], alpha: f64) -> Result<CoditeTestResult> {
    codite_analysis(fit, x, alpha).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gaussian_kernel;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bw(s: f64) -> Bandwidth {
        Bandwidth::new(s).unwrap()
    }

    #[allow(clippy::needless_range_loop)]
    fn double_sum(w0: &[f64], w1: &[f64], y0: &Array2<f64>, y1: &Array2<f64>, b: Bandwidth) -> f64 {
        let k = |a: ndarray::ArrayView1<f64>, c: ndarray::ArrayView1<f64>| {
            gaussian_kernel(a.as_slice().unwrap(), c.as_slice().unwrap(), b).unwrap()
        };
        let mut s = 0.0;
        for i in 0..w0.len() {
            for j in 0..w0.len() {
                s += w0[i] * w0[j] * k(y0.row(i), y0.row(j));
            }
            for j in 0..w1.len() {
                s -= 2.0 * w0[i] * w1[j] * k(y0.row(i), y1.row(j));
            }
        }
        for i in 0..w1.len() {
            for j in 0..w1.len() {
                s += w1[i] * w1[j] * k(y1.row(i), y1.row(j));
            }
        }
        s
    }

    #[test]
    fn statistic_examples() {
        let y = array![[0.0], [1.0], [2.0]];
        let w = [0.2, 0.3, 0.5];
        let gm = GramMatrices::new(y.view(), y.view(), bw(1.0)).unwrap();
        assert!(mmd_statistic(&w, &w, &gm).unwrap() < 1e-15);

        let (a, b) = (array![[0.3]], array![[1.4]]);
        let gm = GramMatrices::new(a.view(), b.view(), bw(0.8)).unwrap();
        let k = gaussian_kernel(&[0.3], &[1.4], bw(0.8)).unwrap();
        assert!((mmd_statistic(&[1.0], &[1.0], &gm).unwrap() - (2.0 - 2.0 * k)).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y0 = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>() * 2.0);
        let y1 = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>() * 2.0);
        let w0 = [0.1, 0.2, 0.3, 0.4];
        let w1 = [0.25, 0.25, 0.4, 0.1];
        let gm = GramMatrices::new(y0.view(), y1.view(), bw(0.7)).unwrap();
        let got = mmd_statistic(&w0, &w1, &gm).unwrap();
        assert!((got - double_sum(&w0, &w1, &y0, &y1, bw(0.7))).abs() < 1e-12);
        assert!(mmd_statistic(&w0[..3], &w1, &gm).is_err());
    }

    #[test]
    fn null_draw_hand_case() {
        let y0 = array![[0.0], [1.0]];
        let y1 = array![[0.5], [2.0]];
        let gm = GramMatrices::new(y0.view(), y1.view(), bw(1.0)).unwrap();
        let b0 = WeightBundle {
            weights: vec![0.5, 0.5],
            group_weights: vec![Some(vec![1.0, 0.0]), Some(vec![0.5, 0.5])],
        };
        let b1 = WeightBundle {
            weights: vec![0.5, 0.5],
            group_weights: vec![Some(vec![0.0, 1.0]), None],
        };
        let draws = null_draws(&b0, &b1, &gm).unwrap();
        assert_eq!(draws.len(), 1);
        // d0 = (0.5, -0.5), d1 = (-0.5, 0.5)
        let k = |a: f64, b: f64| (-(a - b) * (a - b) / 2.0).exp();
        let q0 = 0.25 * (2.0 - 2.0 * k(0.0, 1.0));
        let q1 = 0.25 * (2.0 - 2.0 * k(0.5, 2.0));
        let cross = 0.5 * -0.5 * k(0.0, 0.5) + 0.5 * 0.5 * k(0.0, 2.0) + -0.5 * -0.5 * k(1.0, 0.5)
            + -0.5 * 0.5 * k(1.0, 2.0);
        assert!((draws[0] - (q0 + q1 - 2.0 * cross)).abs() < 1e-15);

        let flat = WeightBundle {
            weights: vec![0.5, 0.5],
            group_weights: vec![Some(vec![0.5, 0.5]); 2],
        };
        assert_eq!(null_draws(&flat, &flat, &gm).unwrap(), vec![0.0, 0.0]);
        let short = WeightBundle {
            weights: vec![0.5, 0.5],
            group_weights: vec![Some(vec![0.5, 0.5])],
        };
        assert!(matches!(null_draws(&flat, &short, &gm), Err(Error::Config(_))));
    }

    #[test]
    fn witness_examples() {
        let y0 = array![[0.0], [1.0], [3.0]];
        let w = [0.2, 0.5, 0.3];
        for t in [-1.0, 0.5, 2.0] {
            assert_eq!(witness(&w, &w, y0.view(), y0.view(), bw(1.0), &[t]).unwrap(), 0.0);
        }
        let (a, b) = (array![[0.0]], array![[2.0]]);
        let got = witness(&[1.0], &[1.0], a.view(), b.view(), bw(1.5), &[0.7]).unwrap();
        let expected = gaussian_kernel(&[2.0], &[0.7], bw(1.5)).unwrap() - gaussian_kernel(&[0.0], &[0.7], bw(1.5)).unwrap();
        assert!((got - expected).abs() < 1e-15);
        let y1 = array![[0.4], [2.2], [-0.3]];
        let w1 = [0.6, 0.1, 0.3];
        let direct: f64 = (0..3)
            .map(|i| {
                w1[i] * gaussian_kernel(&[y1[[i, 0]]], &[1.1], bw(1.0)).unwrap()
                    - w[i] * gaussian_kernel(&[y0[[i, 0]]], &[1.1], bw(1.0)).unwrap()
            })
            .sum();
        let got = witness(&w, &w1, y0.view(), y1.view(), bw(1.0), &[1.1]).unwrap();
        assert!((got - direct).abs() < 1e-15);
        let swapped = witness(&w1, &w, y1.view(), y0.view(), bw(1.0), &[1.1]).unwrap();
        assert_eq!(swapped, -got);
    }

    #[test]
    fn result_p_value_and_threshold() {
        let r = CoditeTestResult::from_parts(0.0, vec![0.0; 9], 0.05, 3, 3).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject());
        let draws: Vec<f64> = (1..=99).map(f64::from).collect();
        let r = CoditeTestResult::from_parts(95.5, draws, 0.05, 3, 3).unwrap();
        assert_eq!(r.threshold_c, 95.0);
        assert!(r.reject());
        assert!((r.p_value - 5.0 / 100.0).abs() < 1e-15);
        let r = CoditeTestResult::from_parts(200.0, (1..=99).map(f64::from).collect(), 0.05, 3, 3).unwrap();
        assert!((r.p_value - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_threshold_gives_zero_width_band() {
        let r = CoditeTestResult::from_parts(0.0, vec![0.0; 5], 0.05, 1, 1).unwrap();
        let y = array![[1.0]];
        let band = WitnessBand::new(&r, &[1.0], &[1.0], y.view(), y.view(), bw(1.0)).unwrap();
        assert_eq!(band.half_width, 0.0);
        let p = band.at(&[0.3]).unwrap();
        assert_eq!((p.lower, p.witness, p.upper), (0.0, 0.0, 0.0));
        let mut buf = Vec::new();
        band.write_csv(&mut buf, &[vec![0.0], vec![1.0]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("y,witness,lower,upper\n"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(band.default_grid(201).unwrap().len(), 201);
    }

    fn arm_dataset(n: usize, shift: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
        let w: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let y = Array2::from_shape_fn((n, 1), |(i, _)| rng.random::<f64>() + shift * w[i]);
        Dataset::new(
            x,
            y,
            Some(w),
            vec!["x1".into(), "x2".into()],
            vec!["y".into()],
            Some("w".into()),
        )
        .unwrap()
    }

    fn small() -> ForestConfig {
        ForestConfig {
            num_trees: 200,
            num_groups: 20,
            ..Default::default()
        }
    }

    #[test]
    fn two_group_fit_partitions_and_is_deterministic() {
        let ds = arm_dataset(300, 0.0, 1);
        let fit = fit_two_groups(&ds, &small()).unwrap();
        assert_eq!(fit.n0() + fit.n1(), 300);
        assert_eq!(fit.n1(), 150);
        assert_eq!(fit.forest0.config.bandwidth, fit.forest1.config.bandwidth);
        let again = fit_two_groups(&ds, &small()).unwrap();
        assert_eq!(fit.forest0, again.forest0);
        assert_eq!(fit.forest1, again.forest1);

        let mut one_arm = ds.clone();
        one_arm.treatment = Some(vec![1.0; 300]);
        assert!(matches!(fit_two_groups(&one_arm, &small()), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn shifted_arms_reject_and_band_agrees() {
        let ds = arm_dataset(600, 2.0, 2);
        let fit = fit_two_groups(&ds, &small()).unwrap();
        let (r, band) = codite_analysis(&fit, &[0.5, 0.5], 0.05).unwrap();
        assert!(r.reject(), "{r:?}");
        assert!(r.p_value >= 1.0 / (r.null_draws.len() + 1) as f64);
        let grid = band.default_grid(201).unwrap();
        assert!(grid.iter().any(|&t| {
            let p = band.at(&[t]).unwrap();
            p.lower > 0.0 || p.upper < 0.0
        }));

        let ds = arm_dataset(600, 0.0, 3);
        let fit = fit_two_groups(&ds, &small()).unwrap();
        let (r, band) = codite_analysis(&fit, &[0.5, 0.5], 0.05).unwrap();
        if !r.reject() {
            for t in band.default_grid(201).unwrap() {
                let p = band.at(&[t]).unwrap();
                assert!(p.lower <= 0.0 && 0.0 <= p.upper);
            }
        }
        assert!(codite_test(&fit, &[0.5, 0.5], 0.6).is_err());
    }
}
