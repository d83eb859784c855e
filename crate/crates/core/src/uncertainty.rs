//! Half-sample inference for plug-in estimates.
//!
//! Group-wise estimates `theta_b` computed from each group's weights act as
//! draws from the sampling distribution of `theta_hat`. All spread measures
//! are centered at `theta_hat` itself, not at the mean of the replicates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::ArrayView2;

use crate::error::{check_dim, Error, Result};
use crate::forest::WeightBundle;
use crate::stats::{chi_square_quantile, empirical_quantile, normal_quantile};

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapSample {
    theta_hat: Vec<f64>,
    theta_b: Vec<Vec<f64>>,
    dropped: usize,
}

impl BootstrapSample {
    /// Keeps the finite replicates; `None` and non-finite ones are counted as dropped.
    pub fn new<I>(theta_hat: Vec<f64>, replicates: I) -> Result<Self>
    where
        I: IntoIterator<Item = Option<Vec<f64>>>,
    {
        if theta_hat.is_empty() || theta_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateTarget("point estimate is empty or non-finite".into()));
        }
        let mut theta_b = Vec::new();
        let mut dropped = 0;
        for rep in replicates {
            match rep {
                Some(v) if v.iter().all(|x| x.is_finite()) => {
                    check_dim(theta_hat.len(), v.len())?;
                    theta_b.push(v);
                }
                _ => dropped += 1,
            }
        }
        if dropped > 0 {
            log::debug!("dropped {dropped} non-finite replicates");
        }
        Ok(BootstrapSample {
            theta_hat,
            theta_b,
            dropped,
        })
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    pub fn replicates(&self) -> &[Vec<f64>] {
        &self.theta_b
    }

    pub fn q(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn effective_b(&self) -> usize {
        self.theta_b.len()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    fn require(&self, needed: usize) -> Result<()> {
        if self.effective_b() < needed {
            Err(Error::InsufficientReplicates {
                needed,
                available: self.effective_b(),
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub effective_b: usize,
}

/// `(1/B) sum_b (theta_b - theta_hat)(theta_b - theta_hat)^T`.
pub fn bootstrap_covariance(bs: &BootstrapSample) -> Result<CovarianceEstimate> {
    bs.require(2)?;
    let q = bs.q();
    let mut m = DMatrix::zeros(q, q);
    for rep in &bs.theta_b {
        let dev: Vec<f64> = rep.iter().zip(&bs.theta_hat).map(|(a, b)| a - b).collect();
        for i in 0..q {
            for j in i..q {
                m[(i, j)] += dev[i] * dev[j];
            }
        }
    }
    let scale = 1.0 / bs.effective_b() as f64;
    for i in 0..q {
        for j in i..q {
            let v = m[(i, j)] * scale;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(CovarianceEstimate {
        matrix: m,
        effective_b: bs.effective_b(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    /// Closed-interval membership.
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Componentwise `theta_hat_j -/+ z_{1 - alpha/2} sqrt(Cov_jj)`.
pub fn gaussian_ci(bs: &BootstrapSample, alpha: f64) -> Result<Vec<Interval>> {
    check_level(alpha)?;
    let cov = bootstrap_covariance(bs)?;
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    Ok(bs
        .theta_hat
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let half = z * cov.matrix[(j, j)].max(0.0).sqrt();
            Interval {
                lower: t - half,
                upper: t + half,
            }
        })
        .collect())
}

/// Pivot interval `[theta_hat - q_{1-alpha/2}, theta_hat - q_{alpha/2}]` from
/// type-1 empirical quantiles of the deviations `theta_b - theta_hat`.
pub fn quantile_ci(bs: &BootstrapSample, alpha: f64) -> Result<Vec<Interval>> {
    check_level(alpha)?;
    bs.require((2.0 / alpha).ceil() as usize)?;
    (0..bs.q())
        .map(|j| {
            let t = bs.theta_hat[j];
            let devs: Vec<f64> = bs.theta_b.iter().map(|r| r[j] - t).collect();
            let lo_q = empirical_quantile(&devs, alpha / 2.0)?;
            let hi_q = empirical_quantile(&devs, 1.0 - alpha / 2.0)?;
            Ok(Interval {
                lower: t - hi_q,
                upper: t - lo_q,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EllipsoidCalibration {
    /// Threshold from the chi-square(q) distribution.
    ChiSquare,
    /// Threshold from the replicates' own Mahalanobis norms.
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipsoidTest {
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    /// Numerical rank of the covariance; below `q` means a pseudo-inverse was used.
    pub rank: usize,
}

struct PseudoInverse {
    inv: DMatrix<f64>,
    rank: usize,
}

fn pseudo_inverse(m: &DMatrix<f64>) -> PseudoInverse {
    let q = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = max * q as f64 * 1e-12;
    let mut inv = DMatrix::zeros(q, q);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol && lambda > 0.0 {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / lambda;
        }
    }
    PseudoInverse { inv, rank }
}

fn mahalanobis(inv: &DMatrix<f64>, d: &[f64]) -> f64 {
    let v = DVector::from_column_slice(d);
    (v.transpose() * inv * &v)[(0, 0)].max(0.0)
}

/// Tests `theta = tau` with `||Cov^{-1/2} (theta_hat - tau)||^2`.
///
/// A rank-deficient covariance falls back to its pseudo-inverse unless
/// `strict` is set, in which case it is an error.
pub fn ellipsoid_test(
    bs: &BootstrapSample,
    tau: &[f64],
    alpha: f64,
    calibration: EllipsoidCalibration,
    strict: bool,
) -> Result<EllipsoidTest> {
    check_level(alpha)?;
    check_dim(bs.q(), tau.len())?;
    let cov = bootstrap_covariance(bs)?;
    let PseudoInverse { inv, rank } = pseudo_inverse(&cov.matrix);
    if strict && rank < bs.q() {
        return Err(Error::SingularCovariance { rank, dim: bs.q() });
    }
    let diff: Vec<f64> = bs.theta_hat.iter().zip(tau).map(|(a, b)| a - b).collect();
    let statistic = mahalanobis(&inv, &diff);
    let threshold = match calibration {
        EllipsoidCalibration::ChiSquare => chi_square_quantile(1.0 - alpha, bs.q() as f64)?,
        EllipsoidCalibration::Empirical => {
            let norms: Vec<f64> = bs
                .theta_b
                .iter()
                .map(|r| {
                    let d: Vec<f64> = r.iter().zip(&bs.theta_hat).map(|(a, b)| a - b).collect();
                    mahalanobis(&inv, &d)
                })
                .collect();
            empirical_quantile(&norms, 1.0 - alpha)?
        }
    };
    Ok(EllipsoidTest {
        statistic,
        threshold,
        reject: statistic > threshold,
        rank,
    })
}

/// Half-sample estimate of the squared RKHS scale of the forest embedding:
/// `(1/B) sum_b (w_b - w)^T K (w_b - w)` over active groups, where `k` is the
/// Gram matrix of the training responses.
pub fn hilbert_variance(wb: &WeightBundle, k: ArrayView2<'_, f64>) -> Result<f64> {
    check_dim(wb.n(), k.nrows())?;
    check_dim(wb.n(), k.ncols())?;
    let support: Vec<usize> = (0..wb.n()).filter(|&i| wb.weights[i] != 0.0).collect();
    let active = wb.num_active();
    if active == 0 {
        return Err(Error::InsufficientReplicates {
            needed: 1,
            available: 0,
        });
    }
    let mut total = 0.0;
    let mut dev = vec![0.0; support.len()];
    for w_b in wb.active_groups() {
        for (d, &i) in dev.iter_mut().zip(&support) {
            *d = w_b[i] - wb.weights[i];
        }
        let mut q = 0.0;
        for (a, &i) in support.iter().enumerate() {
            let row = k.row(i);
            let inner: f64 = support.iter().zip(&dev).map(|(&j, dj)| row[j] * dj).sum();
            q += dev[a] * inner;
        }
        total += q.max(0.0);
    }
    Ok(total / active as f64)
}
