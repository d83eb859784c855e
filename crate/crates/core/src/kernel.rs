//! Gaussian kernel, median-heuristic bandwidth, random Fourier features and
//! Gram matrices.
//!
//! The kernel is `k(a, b) = exp(-|a - b|^2 / (2 sigma^2))`. Its random Fourier
//! embedding is `phi(y)_r = sqrt(2/R) cos(omega_r . y + b_r)` with
//! `omega_r ~ N(0, sigma^-2 I)` and `b_r ~ U[0, 2 pi)`, so that
//! `E[phi(a) . phi(b)] = k(a, b)`.

use std::f64::consts::TAU;

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Domain};

/// Row cap for the median heuristic.
pub const DEFAULT_MEDIAN_CAP: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(Bandwidth(sigma))
        } else {
            Err(Error::InvalidArgument(format!(
                "bandwidth must be positive and finite, got {sigma}"
            )))
        }
    }

    pub fn sigma(self) -> f64 {
        self.0
    }

    /// `1 / (2 sigma^2)`, the factor multiplying the squared distance.
    #[inline]
    pub(crate) fn gamma(self) -> f64 {
        0.5 / (self.0 * self.0)
    }
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn kernel_unchecked(a: &[f64], b: &[f64], bw: Bandwidth) -> f64 {
    (-squared_distance(a, b) * bw.gamma()).exp()
}

pub fn gaussian_kernel(a: &[f64], b: &[f64], bw: Bandwidth) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(kernel_unchecked(a, b, bw))
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median of pairwise Euclidean distances between the rows of `y`.
///
/// When `y` has more than `cap` rows (default [`DEFAULT_MEDIAN_CAP`]), a
/// subset of `cap` rows drawn from `seed` is used. If more than half of the
/// pairs coincide, the median of the nonzero distances is returned instead so
/// the result stays positive.
pub fn median_bandwidth(y: ArrayView2<'_, f64>, cap: Option<usize>, seed: u64) -> Result<Bandwidth> {
    let n = y.nrows();
    if n < 2 {
        return Err(Error::DegenerateData(
            "median bandwidth needs at least two rows".into(),
        ));
    }
    let cap = cap.unwrap_or(DEFAULT_MEDIAN_CAP).max(2);
    let rows: Vec<usize> = if n > cap {
        let mut rng = rng::stream(seed, Domain::Bandwidth, 0, 0);
        let mut picked = index::sample(&mut rng, n, cap).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..n).collect()
    };
    let owned: Vec<Vec<f64>> = rows.iter().map(|&i| y.row(i).to_vec()).collect();
    let mut dists = Vec::with_capacity(owned.len() * (owned.len() - 1) / 2);
    for i in 0..owned.len() {
        for j in (i + 1)..owned.len() {
            dists.push(squared_distance(&owned[i], &owned[j]).sqrt());
        }
    }
    let sigma = median_in_place(&mut dists);
    if sigma > 0.0 {
        return Bandwidth::new(sigma);
    }
    let mut nonzero: Vec<f64> = dists.into_iter().filter(|&d| d > 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::DegenerateData(
            "all response rows are identical; median bandwidth undefined".into(),
        ));
    }
    log::warn!("median pairwise distance is zero; using the median of nonzero distances");
    Bandwidth::new(median_in_place(&mut nonzero))
}

/// Random Fourier feature map approximating the Gaussian kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    /// Row-major `R x d` frequency matrix.
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    dim: usize,
    scale: f64,
    bandwidth: Bandwidth,
    seed: u64,
}

impl FeatureMap {
    /// Draws `num_features` frequencies and phases from `seed`.
    pub fn new(num_features: usize, dim: usize, bandwidth: Bandwidth, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, Domain::FeatureMap, 0, 0);
        let mut map = Self::sample(num_features, dim, bandwidth, &mut rng)?;
        map.seed = seed;
        Ok(map)
    }

    /// Draws a map from an existing stream (used per tree node).
    pub fn sample<R: Rng + ?Sized>(
        num_features: usize,
        dim: usize,
        bandwidth: Bandwidth,
        rng: &mut R,
    ) -> Result<Self> {
        if num_features == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "feature map needs at least one feature and one dimension".into(),
            ));
        }
        let inv_sigma = 1.0 / bandwidth.sigma();
        let mut frequencies = Vec::with_capacity(num_features * dim);
        let mut phases = Vec::with_capacity(num_features);
        for _ in 0..num_features {
            for _ in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                frequencies.push(z * inv_sigma);
            }
            phases.push(rng.random::<f64>() * TAU);
        }
        Ok(FeatureMap {
            frequencies,
            phases,
            dim,
            scale: (2.0 / num_features as f64).sqrt(),
            bandwidth,
            seed: 0,
        })
    }

    /// Builds a map from explicit frequencies (`R x d`, row-major) and phases.
    pub fn from_parts(
        frequencies: Vec<f64>,
        phases: Vec<f64>,
        dim: usize,
        bandwidth: Bandwidth,
    ) -> Result<Self> {
        let r = phases.len();
        if r == 0 || dim == 0 {
            return Err(Error::InvalidArgument("empty feature map".into()));
        }
        check_dim(r * dim, frequencies.len())?;
        Ok(FeatureMap {
            frequencies,
            phases,
            dim,
            scale: (2.0 / r as f64).sqrt(),
            bandwidth,
            seed: 0,
        })
    }

    pub fn num_features(&self) -> usize {
        self.phases.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.bandwidth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn embed(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, y.len())?;
        let mut out = vec![0.0; self.num_features()];
        self.embed_into(y, &mut out);
        Ok(out)
    }

    /// Writes `phi(y)` into `out`; lengths must already agree.
    #[inline]
    pub(crate) fn embed_into(&self, y: &[f64], out: &mut [f64]) {
        for ((o, omega), phase) in out
            .iter_mut()
            .zip(self.frequencies.chunks_exact(self.dim))
            .zip(&self.phases)
        {
            let arg: f64 = omega.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() + phase;
            *o = self.scale * cos(arg);
        }
    }
}

/// Cosine with absolute error around `1e-16` for `|x| < 1e5` (falls back to
/// `f64::cos` beyond): Cody-Waite reduction by `pi/2` and the fdlibm kernel
/// polynomials on `[-pi/4, pi/4]`. Both kernels are evaluated and the
/// quadrant is selected without branching.
#[inline]
#[allow(clippy::excessive_precision)]
pub(crate) fn cos(x: f64) -> f64 {
    const PIO2_HI: f64 = 1.570_796_326_734_125_614_17;
    const PIO2_LO: f64 = 6.077_100_506_506_192_249_32e-11;
    const C: [f64; 6] = [
        4.166_666_666_666_660_190_37e-2,
        -1.388_888_888_887_410_957_49e-3,
        2.480_158_728_947_672_941_78e-5,
        -2.755_731_435_139_066_330_35e-7,
        2.087_572_321_298_174_827_90e-9,
        -1.135_964_755_778_819_482_65e-11,
    ];
    const S: [f64; 6] = [
        -1.666_666_666_666_663_243_48e-1,
        8.333_333_333_322_489_461_24e-3,
        -1.984_126_982_985_794_931_34e-4,
        2.755_731_370_707_006_767_89e-6,
        -2.505_076_025_340_686_341_95e-8,
        1.589_690_995_211_550_102_21e-10,
    ];
    if x.is_nan() || x.abs() >= 1e5 {
        return x.cos();
    }
    // adding and removing 1.5 * 2^52 rounds to nearest without a libm call
    const ROUNDER: f64 = 6_755_399_441_055_744.0;
    let k = (x * std::f64::consts::FRAC_2_PI + ROUNDER) - ROUNDER;
    let r = (x - k * PIO2_HI) - k * PIO2_LO;
    let z = r * r;
    let c = 1.0 - 0.5 * z + z * z * (C[0] + z * (C[1] + z * (C[2] + z * (C[3] + z * (C[4] + z * C[5])))));
    let s = r + r * z * (S[0] + z * (S[1] + z * (S[2] + z * (S[3] + z * (S[4] + z * S[5])))));
    let q = k as i64;
    let v = if q & 1 == 0 { c } else { s };
    if (q + 1) & 2 == 0 {
        v
    } else {
        -v
    }
}

/// Gram matrix `K[i, j] = k(a_i, b_j)`.
pub fn gram(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, bw: Bandwidth) -> Result<Array2<f64>> {
    check_dim(a.ncols(), b.ncols())?;
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        let ra = ra.to_vec();
        for (j, rb) in b.rows().into_iter().enumerate() {
            out[[i, j]] = kernel_unchecked(&ra, &rb.to_vec(), bw);
        }
    }
    Ok(out)
}

/// Symmetric Gram matrix of `a` with itself; each pair is evaluated once.
pub fn gram_symmetric(a: ArrayView2<'_, f64>, bw: Bandwidth) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = a.rows().into_iter().map(|r| r.to_vec()).collect();
    let m = rows.len();
    let mut out = Array2::zeros((m, m));
    for i in 0..m {
        out[[i, i]] = 1.0;
        for j in (i + 1)..m {
            let v = kernel_unchecked(&rows[i], &rows[j], bw);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// The three kernel matrices of a two-sample comparison.
#[derive(Clone, Debug)]
pub struct GramMatrices {
    pub k0: Array2<f64>,
    pub k1: Array2<f64>,
    pub k01: Array2<f64>,
}

impl GramMatrices {
    pub fn new(y0: ArrayView2<'_, f64>, y1: ArrayView2<'_, f64>, bw: Bandwidth) -> Result<Self> {
        check_dim(y0.ncols(), y1.ncols())?;
        Ok(GramMatrices {
            k0: gram_symmetric(y0, bw),
            k1: gram_symmetric(y1, bw),
            k01: gram(y0, y1, bw)?,
        })
    }

    pub fn n0(&self) -> usize {
        self.k0.nrows()
    }

    pub fn n1(&self) -> usize {
        self.k1.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bw(s: f64) -> Bandwidth {
        Bandwidth::new(s).unwrap()
    }

    #[test]
    fn cos_matches_std() {
        let mut worst = 0.0f64;
        for i in -200_000..=200_000 {
            let x = i as f64 * 1.37e-4 + (i % 7) as f64 * 3.1;
            worst = worst.max((cos(x) - x.cos()).abs());
        }
        for x in [0.0, 1e-300, std::f64::consts::FRAC_PI_2, 99_999.9, 2e5, -3e7] {
            worst = worst.max((cos(x) - x.cos()).abs());
        }
        assert!(worst < 1e-15, "{worst:e}");
        assert!(cos(f64::NAN).is_nan());
    }

    #[test]
    fn bandwidth_rejects_nonpositive() {
        assert!(Bandwidth::new(0.0).is_err());
        assert!(Bandwidth::new(-1.0).is_err());
        assert!(Bandwidth::new(f64::NAN).is_err());
        assert!(Bandwidth::new(f64::INFINITY).is_err());
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(gaussian_kernel(&[1.5, -2.0], &[1.5, -2.0], bw(0.3)).unwrap(), 1.0);
        let s = 1.7;
        let half = gaussian_kernel(&[0.0], &[s * (2.0 * 2f64.ln()).sqrt()], bw(s)).unwrap();
        assert_relative_eq!(half, 0.5, epsilon = 1e-14);
        let k = gaussian_kernel(&[0.0, 0.0], &[3.0, 4.0], bw(5.0)).unwrap();
        assert_relative_eq!(k, 0.606_530_659_712_633_4, epsilon = 1e-15);
    }

    #[test]
    fn kernel_dimension_mismatch() {
        assert!(matches!(
            gaussian_kernel(&[0.0], &[0.0, 1.0], bw(1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn median_bandwidth_examples() {
        let y = array![[0.0], [1.0]];
        assert_eq!(median_bandwidth(y.view(), None, 0).unwrap().sigma(), 1.0);
        let y = array![[0.0], [1.0], [3.0]];
        assert_eq!(median_bandwidth(y.view(), None, 0).unwrap().sigma(), 2.0);
    }

    #[test]
    fn median_bandwidth_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vals: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
        let y = Array2::from_shape_vec((100, 1), vals.clone()).unwrap();
        // brute force: sort all 4950 distances, average the two central ones
        let mut d = Vec::new();
        for i in 0..100 {
            for j in (i + 1)..100 {
                d.push((vals[i] - vals[j]).abs());
            }
        }
        assert_eq!(d.len(), 4950);
        d.sort_by(f64::total_cmp);
        let expected = 0.5 * (d[2474] + d[2475]);
        let got = median_bandwidth(y.view(), None, 0).unwrap().sigma();
        assert_eq!(got, expected);
    }

    #[test]
    fn median_bandwidth_degenerate() {
        let y = array![[2.0, 1.0], [2.0, 1.0], [2.0, 1.0]];
        assert!(matches!(
            median_bandwidth(y.view(), None, 0),
            Err(Error::DegenerateData(_))
        ));
        assert!(median_bandwidth(array![[1.0]].view(), None, 0).is_err());
        // mostly tied rows still yield a positive bandwidth
        let y = array![[0.0], [0.0], [0.0], [0.0], [5.0]];
        assert_eq!(median_bandwidth(y.view(), None, 0).unwrap().sigma(), 5.0);
    }

    #[test]
    fn median_bandwidth_cap_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = Array2::from_shape_fn((300, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let a = median_bandwidth(y.view(), Some(50), 9).unwrap();
        let b = median_bandwidth(y.view(), Some(50), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.sigma() > 0.0);
    }

    #[test]
    fn embed_constant_feature() {
        let fm = FeatureMap::from_parts(vec![0.0], vec![0.0], 1, bw(1.0)).unwrap();
        for y in [-3.0, 0.0, 12.5] {
            assert_relative_eq!(fm.embed(&[y]).unwrap()[0], 2f64.sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn embed_is_deterministic_and_bounded() {
        let a = FeatureMap::new(64, 3, bw(0.8), 5).unwrap();
        let b = FeatureMap::new(64, 3, bw(0.8), 5).unwrap();
        assert_eq!(a, b);
        let y = [0.3, -1.0, 2.0];
        let ea = a.embed(&y).unwrap();
        assert_eq!(ea, b.embed(&y).unwrap());
        assert!(ea.iter().all(|v| v.abs() <= a.scale()));
        assert!(a.embed(&[1.0]).is_err());
    }

    #[test]
    fn gram_examples() {
        let y = array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]];
        let z = array![[1.0, 1.0], [-2.0, 0.0]];
        let k = gram(y.view(), z.view(), bw(1.3)).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let e = gaussian_kernel(&y.row(i).to_vec(), &z.row(j).to_vec(), bw(1.3)).unwrap();
                assert_eq!(k[[i, j]], e);
            }
        }
        let single = gram(array![[4.0]].view(), array![[4.0]].view(), bw(1.0)).unwrap();
        assert_eq!(single, array![[1.0]]);
        let ks = gram_symmetric(y.view(), bw(1.3));
        for i in 0..3 {
            assert_eq!(ks[[i, i]], 1.0);
            for j in 0..3 {
                assert_eq!(ks[[i, j]], ks[[j, i]]);
                assert!(ks[[i, j]] > 0.0 && ks[[i, j]] <= 1.0);
            }
        }
        assert!(gram(y.view(), array![[1.0]].view(), bw(1.0)).is_err());
    }

    #[test]
    fn feature_average_is_unbiased() {
        // mean of phi(a).phi(b) over F maps approaches k(a, b) at rate 1/sqrt(F R)
        let (f, r) = (40usize, 256usize);
        let a = [0.2, -0.4];
        let b = [1.0, 0.3];
        let band = bw(0.9);
        let exact = gaussian_kernel(&a, &b, band).unwrap();
        let mean: f64 = (0..f)
            .map(|s| {
                let fm = FeatureMap::new(r, 2, band, s as u64).unwrap();
                let (ea, eb) = (fm.embed(&a).unwrap(), fm.embed(&b).unwrap());
                ea.iter().zip(&eb).map(|(x, y)| x * y).sum::<f64>()
            })
            .sum::<f64>()
            / f as f64;
        assert!((mean - exact).abs() <= 3.0 / ((f * r) as f64).sqrt());
    }

    proptest! {
        #[test]
        fn kernel_increases_with_bandwidth(
            a in -2.0f64..2.0, b in -2.0f64..2.0, s in 0.5f64..10.0, ds in 0.01f64..5.0
        ) {
            prop_assume!((a - b).abs() > 1e-3);
            let k1 = gaussian_kernel(&[a], &[b], bw(s)).unwrap();
            let k2 = gaussian_kernel(&[a], &[b], bw(s + ds)).unwrap();
            prop_assert!(k2 > k1);
            prop_assert!(k1 > 0.0 && k1 <= 1.0);
        }
    }
}
