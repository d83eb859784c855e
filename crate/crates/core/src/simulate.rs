//! Synthetic data-generating processes with known conditional targets.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::TargetSpec;
use crate::rng::{self, Domain};
use crate::stats::{normal_cdf, normal_quantile};

const P: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DgpKind {
    /// Confounded treatment with no effect: `Y = 2(X3 - 0.5) + N(0, 1)`.
    CateNull,
    /// Adds the heterogeneous effect `(W - 0.2) eta(X1) eta(X2)`.
    CateHetero,
    /// `X ~ U(-1, 1)^5`, `Y ~ N(0.8 * 1{X1 > 0}, 1)`.
    QuantileShift,
    /// `X ~ U(-1, 1)^5`, `(Y1, Y2)` standard bivariate normal with correlation `X1`.
    GaussCopula,
}

impl DgpKind {
    pub const ALL: [DgpKind; 4] = [
        DgpKind::CateNull,
        DgpKind::CateHetero,
        DgpKind::QuantileShift,
        DgpKind::GaussCopula,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DgpKind::CateNull => "cate_null",
            DgpKind::CateHetero => "cate_hetero",
            DgpKind::QuantileShift => "quantile_shift",
            DgpKind::GaussCopula => "gauss_copula",
        }
    }

    pub fn has_treatment(self) -> bool {
        matches!(self, DgpKind::CateNull | DgpKind::CateHetero)
    }

    fn response_names(self) -> Vec<String> {
        match self {
            DgpKind::GaussCopula => vec!["y1".into(), "y2".into()],
            _ => vec!["y".into()],
        }
    }

    /// Value of `target` under the true conditional distribution at `x`.
    ///
    /// Column names follow [`simulate`]: `y` (or `y1`, `y2`) and `w`.
    pub fn truth(self, target: &TargetSpec, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != P {
            return Err(Error::DimensionMismatch {
                expected: P,
                found: x.len(),
            });
        }
        let unsupported = || {
            Err(Error::InvalidArgument(format!(
                "no closed-form truth for `{target}` under {}",
                self.name()
            )))
        };
        // conditional mean of each scalar response that is N(mean, 1) given X = x
        let marginal = |col: &str| -> Option<f64> {
            match (self, col) {
                (DgpKind::CateNull, "y") => Some(2.0 * (x[2] - 0.5)),
                (DgpKind::QuantileShift, "y") => Some(if x[0] > 0.0 { 0.8 } else { 0.0 }),
                (DgpKind::GaussCopula, "y1" | "y2") => Some(0.0),
                _ => None,
            }
        };
        match target {
            TargetSpec::Cate { outcome, treatment } if outcome == "y" && treatment == "w" => match self {
                DgpKind::CateNull => Ok(vec![0.0]),
                DgpKind::CateHetero => Ok(vec![eta(x[0]) * eta(x[1])]),
                _ => unsupported(),
            },
            TargetSpec::Correlation(a, b) if self == DgpKind::GaussCopula => match (a.as_str(), b.as_str()) {
                ("y1", "y2") | ("y2", "y1") => Ok(vec![x[0]]),
                (a, b) if a == b && (a == "y1" || a == "y2") => Ok(vec![1.0]),
                _ => unsupported(),
            },
            TargetSpec::Mean(cols) => cols
                .iter()
                .map(|c| marginal(c).ok_or(()))
                .collect::<std::result::Result<Vec<_>, _>>()
                .or_else(|_| unsupported()),
            TargetSpec::Quantile(c, taus) => match marginal(c) {
                Some(m) => taus.iter().map(|&t| Ok(m + normal_quantile(t)?)).collect(),
                None => unsupported(),
            },
            TargetSpec::Cdf(c, t) => match marginal(c) {
                Some(m) => Ok(vec![normal_cdf(t - m)]),
                None => unsupported(),
            },
            _ => unsupported(),
        }
    }
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DgpKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown dgp `{s}` (expected cate_null, cate_hetero, quantile_shift or gauss_copula)"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    pub seed: u64,
}

/// `1 + 1 / (1 + exp(-20 (x - 1/3)))`.
pub fn eta(x: f64) -> f64 {
    1.0 + 1.0 / (1.0 + (-20.0 * (x - 1.0 / 3.0)).exp())
}

/// Beta(2, 4) density `20 x (1 - x)^3` on `[0, 1]`.
pub fn beta24_pdf(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        20.0 * x * (1.0 - x).powi(3)
    } else {
        0.0
    }
}

/// Treatment probability `0.25 (1 + beta24(x3))`, clamped to `[0, 1]`.
pub fn propensity(x3: f64) -> f64 {
    (0.25 * (1.0 + beta24_pdf(x3))).clamp(0.0, 1.0)
}

/// Draws a dataset. Bitwise reproducible for a given spec.
pub fn simulate(spec: &DgpSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let kind = spec.kind;
    let mut rng = rng::stream(spec.seed, Domain::Simulate, spec.n as u64, 0);
    let d = kind.response_names().len();
    let mut x = Array2::zeros((spec.n, P));
    let mut y = Array2::zeros((spec.n, d));
    let mut w = Vec::with_capacity(if kind.has_treatment() { spec.n } else { 0 });
    for i in 0..spec.n {
        let (lo, hi) = if kind.has_treatment() { (0.0, 1.0) } else { (-1.0, 1.0) };
        for j in 0..P {
            x[[i, j]] = rng.random_range(lo..hi);
        }
        let e: f64 = rng.sample(StandardNormal);
        match kind {
            DgpKind::CateNull | DgpKind::CateHetero => {
                let t = if rng.random_bool(propensity(x[[i, 2]])) { 1.0 } else { 0.0 };
                let mut v = 2.0 * (x[[i, 2]] - 0.5) + e;
                if kind == DgpKind::CateHetero {
                    v += (t - 0.2) * eta(x[[i, 0]]) * eta(x[[i, 1]]);
                }
                y[[i, 0]] = v;
                w.push(t);
            }
            DgpKind::QuantileShift => {
                y[[i, 0]] = if x[[i, 0]] > 0.0 { 0.8 } else { 0.0 } + e;
            }
            DgpKind::GaussCopula => {
                let rho = x[[i, 0]];
                let e2: f64 = rng.sample(StandardNormal);
                y[[i, 0]] = e;
                y[[i, 1]] = rho * e + (1.0 - rho * rho).sqrt() * e2;
            }
        }
    }
    let x_names = (1..=P).map(|j| format!("x{j}")).collect();
    let (treatment, treatment_name) = if kind.has_treatment() {
        (Some(w), Some("w".to_string()))
    } else {
        (None, None)
    };
    Dataset::new(x, y, treatment, x_names, kind.response_names(), treatment_name)
}
