//! Plug-in functionals of the weighted empirical distribution
//! `sum_i w_i delta_{Y_i}`.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{check_dim, Error, Result};
use crate::forest::WeightBundle;
use crate::uncertainty::BootstrapSample;

/// Slack on the cumulative-weight comparison in [`weighted_quantile`], so that
/// e.g. ten weights of 0.1 reach 0.7 at the seventh value despite roundoff.
pub const QUANTILE_SLACK: f64 = 1e-12;

fn check_weights(w: &[f64], n: usize) -> Result<()> {
    check_dim(w.len(), n)?;
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
    }
    Ok(())
}

fn dot(w: &[f64], y: ArrayView1<'_, f64>) -> f64 {
    w.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

/// `sum_i w_i Y_i` restricted to the columns in `coords`.
pub fn weighted_mean(w: &[f64], y: ArrayView2<'_, f64>, coords: &[usize]) -> Result<Vec<f64>> {
    check_weights(w, y.nrows())?;
    coords
        .iter()
        .map(|&c| {
            if c >= y.ncols() {
                return Err(Error::InvalidArgument(format!("column {c} out of range")));
            }
            Ok(dot(w, y.column(c)))
        })
        .collect()
}

/// `sum_i w_i 1{y_i <= t}`, summed in row order.
pub fn weighted_cdf(w: &[f64], y: ArrayView1<'_, f64>, t: f64) -> Result<f64> {
    check_weights(w, y.len())?;
    Ok(cdf_unchecked(w, y, t))
}

fn cdf_unchecked(w: &[f64], y: ArrayView1<'_, f64>, t: f64) -> f64 {
    w.iter().zip(y.iter()).filter(|(_, &v)| v <= t).map(|(a, _)| a).sum()
}

/// Smallest observed `y` with `weighted_cdf(y) >= tau` (up to [`QUANTILE_SLACK`]).
///
/// Candidates are restricted to rows with positive weight. The search runs
/// over the sorted distinct candidates and compares against the same
/// row-order sum that [`weighted_cdf`] computes, so the two agree exactly.
pub fn weighted_quantile(w: &[f64], y: ArrayView1<'_, f64>, tau: f64) -> Result<f64> {
    check_weights(w, y.len())?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
    }
    let mut values: Vec<f64> = w.iter().zip(y.iter()).filter(|(a, _)| **a > 0.0).map(|(_, &v)| v).collect();
    if values.is_empty() {
        return Err(Error::DegenerateTarget("all weights are zero".into()));
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    let reached = |v: f64| cdf_unchecked(w, y, v) >= tau - QUANTILE_SLACK;
    // the largest candidate always qualifies: its cdf is the full weight sum
    let idx = values.partition_point(|&v| !reached(v)).min(values.len() - 1);
    Ok(values[idx])
}

struct Moments {
    mean_a: f64,
    mean_b: f64,
}

fn moments(w: &[f64], a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<Moments> {
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateTarget("all weights are zero".into()));
    }
    Ok(Moments {
        mean_a: dot(w, a) / total,
        mean_b: dot(w, b) / total,
    })
}

/// Weighted Pearson correlation, clamped to `[-1, 1]`.
pub fn weighted_correlation(w: &[f64], a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    check_weights(w, a.len())?;
    check_dim(a.len(), b.len())?;
    let m = moments(w, a, b)?;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    let (mut qa, mut qb) = (0.0, 0.0);
    for ((wi, ai), bi) in w.iter().zip(a.iter()).zip(b.iter()) {
        let (da, db) = (ai - m.mean_a, bi - m.mean_b);
        saa += wi * da * da;
        sbb += wi * db * db;
        sab += wi * da * db;
        qa += wi * ai * ai;
        qb += wi * bi * bi;
    }
    // variance indistinguishable from roundoff relative to the raw second moment
    let tiny = |s: f64, q: f64| s <= 1e-13 * q || s <= f64::MIN_POSITIVE;
    if tiny(saa, qa) || tiny(sbb, qb) {
        return Err(Error::DegenerateTarget("zero weighted variance".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Difference of the weighted arm means of `y` between `treat == 1` and `treat == 0`.
pub fn cate(w: &[f64], y: ArrayView1<'_, f64>, treat: ArrayView1<'_, f64>) -> Result<f64> {
    check_weights(w, y.len())?;
    check_dim(y.len(), treat.len())?;
    let (mut w1, mut s1, mut w0, mut s0) = (0.0, 0.0, 0.0, 0.0);
    for ((wi, yi), ti) in w.iter().zip(y.iter()).zip(treat.iter()) {
        if *ti == 1.0 {
            w1 += wi;
            s1 += wi * yi;
        } else if *ti == 0.0 {
            w0 += wi;
            s0 += wi * yi;
        } else {
            return Err(Error::InvalidArgument(format!("treatment value {ti} is not 0 or 1")));
        }
    }
    if w1 <= 0.0 || w0 <= 0.0 {
        return Err(Error::DegenerateTarget("all weight falls in one treatment arm".into()));
    }
    Ok(s1 / w1 - s0 / w0)
}

/// A functional with its columns referenced by name, as written on the command line.
///
/// Text forms:
///
/// ```text
/// mean:<col>[,<col>...]
/// quantile:<col>@<tau>[,<tau>...]
/// cor:<colA>,<colB>
/// cate:<col>|<treatment col>
/// cdf:<col>@<t>
/// ```
#[derive(Clone, Debug, PartialEq)]
pub enum TargetSpec {
    Mean(Vec<String>),
    Quantile(String, Vec<f64>),
    Correlation(String, String),
    Cate { outcome: String, treatment: String },
    Cdf(String, f64),
}

fn parse_col(s: &str, text: &str) -> Result<String> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::InvalidArgument(format!("empty column name in target `{text}`")));
    }
    Ok(s.to_string())
}

fn parse_num(s: &str, text: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidArgument(format!("bad number `{s}` in target `{text}`")))
}

impl FromStr for TargetSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (kind, rest) = text
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("target `{text}` has no `kind:` prefix")))?;
        let spec = match kind.trim() {
            "mean" => TargetSpec::Mean(rest.split(',').map(|c| parse_col(c, text)).collect::<Result<_>>()?),
            "quantile" => {
                let (col, taus) = rest
                    .split_once('@')
                    .ok_or_else(|| Error::InvalidArgument(format!("target `{text}`: expected <col>@<tau>")))?;
                let taus = taus.split(',').map(|t| parse_num(t, text)).collect::<Result<Vec<_>>>()?;
                if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
                    return Err(Error::InvalidArgument(format!("quantile level {t} outside (0, 1)")));
                }
                TargetSpec::Quantile(parse_col(col, text)?, taus)
            }
            "cor" => match rest.split(',').collect::<Vec<_>>().as_slice() {
                [a, b] => TargetSpec::Correlation(parse_col(a, text)?, parse_col(b, text)?),
                _ => return Err(Error::InvalidArgument(format!("target `{text}`: expected cor:<a>,<b>"))),
            },
            "cate" => {
                let (y, w) = rest
                    .split_once('|')
                    .ok_or_else(|| Error::InvalidArgument(format!("target `{text}`: expected cate:<col>|<w>")))?;
                TargetSpec::Cate {
                    outcome: parse_col(y, text)?,
                    treatment: parse_col(w, text)?,
                }
            }
            "cdf" => {
                let (col, t) = rest
                    .split_once('@')
                    .ok_or_else(|| Error::InvalidArgument(format!("target `{text}`: expected cdf:<col>@<t>")))?;
                TargetSpec::Cdf(parse_col(col, text)?, parse_num(t, text)?)
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown target kind `{other}` (expected mean, quantile, cor, cate or cdf)"
                )))
            }
        };
        Ok(spec)
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        match self {
            TargetSpec::Mean(cols) => write!(f, "mean:{}", cols.join(",")),
            TargetSpec::Quantile(c, taus) => write!(f, "quantile:{c}@{}", join(taus)),
            TargetSpec::Correlation(a, b) => write!(f, "cor:{a},{b}"),
            TargetSpec::Cate { outcome, treatment } => write!(f, "cate:{outcome}|{treatment}"),
            TargetSpec::Cdf(c, t) => write!(f, "cdf:{c}@{t}"),
        }
    }
}

impl TargetSpec {
    /// Binds column names to indices of a response matrix with the given header.
    pub fn resolve(&self, names: &[String]) -> Result<Functional> {
        let find = |c: &String| {
            names.iter().position(|n| n == c).ok_or_else(|| {
                Error::InvalidArgument(format!("unknown column `{c}` (available: {})", names.join(", ")))
            })
        };
        Ok(match self {
            TargetSpec::Mean(cols) => Functional::Mean(cols.iter().map(find).collect::<Result<_>>()?),
            TargetSpec::Quantile(c, taus) => Functional::Quantile(find(c)?, taus.clone()),
            TargetSpec::Correlation(a, b) => Functional::Correlation(find(a)?, find(b)?),
            TargetSpec::Cate { outcome, treatment } => Functional::Cate {
                outcome: find(outcome)?,
                treatment: find(treatment)?,
            },
            TargetSpec::Cdf(c, t) => Functional::Cdf(find(c)?, *t),
        })
    }

    /// One label per output coordinate.
    pub fn labels(&self) -> Vec<String> {
        match self {
            TargetSpec::Mean(cols) => cols.iter().map(|c| format!("mean:{c}")).collect(),
            TargetSpec::Quantile(c, taus) => taus.iter().map(|t| format!("quantile:{c}@{t}")).collect(),
            other => vec![other.to_string()],
        }
    }
}

/// A functional bound to response column indices.
#[derive(Clone, Debug, PartialEq)]
pub enum Functional {
    Mean(Vec<usize>),
    Quantile(usize, Vec<f64>),
    Correlation(usize, usize),
    Cate { outcome: usize, treatment: usize },
    Cdf(usize, f64),
}

impl Functional {
    /// Number of output coordinates.
    pub fn dim(&self) -> usize {
        match self {
            Functional::Mean(c) => c.len(),
            Functional::Quantile(_, t) => t.len(),
            _ => 1,
        }
    }

    fn column<'a>(y: ArrayView2<'a, f64>, c: usize) -> Result<ArrayView1<'a, f64>> {
        if c >= y.ncols() {
            return Err(Error::InvalidArgument(format!("column {c} out of range")));
        }
        Ok(y.index_axis_move(ndarray::Axis(1), c))
    }

    pub fn evaluate(&self, w: &[f64], y: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        match self {
            Functional::Mean(cols) => weighted_mean(w, y, cols),
            Functional::Quantile(c, taus) => {
                let col = Self::column(y, *c)?;
                taus.iter().map(|&t| weighted_quantile(w, col, t)).collect()
            }
            Functional::Correlation(a, b) => {
                Ok(vec![weighted_correlation(w, Self::column(y, *a)?, Self::column(y, *b)?)?])
            }
            Functional::Cate { outcome, treatment } => {
                Ok(vec![cate(w, Self::column(y, *outcome)?, Self::column(y, *treatment)?)?])
            }
            Functional::Cdf(c, t) => Ok(vec![weighted_cdf(w, Self::column(y, *c)?, *t)?]),
        }
    }

    /// Point estimate from the overall weights plus one replicate per active
    /// group. Groups on which the functional is degenerate become dropped
    /// replicates; a degenerate point estimate is an error.
    pub fn bootstrap(&self, bundle: &WeightBundle, y: ArrayView2<'_, f64>) -> Result<BootstrapSample> {
        let theta_hat = self.evaluate(&bundle.weights, y)?;
        let reps: Vec<Option<Vec<f64>>> = bundle
            .group_weights
            .iter()
            .map(|g| match g {
                Some(w) => match self.evaluate(w, y) {
                    Ok(v) => Ok(Some(v)),
                    Err(Error::DegenerateTarget(_)) => Ok(None),
                    Err(e) => Err(e),
                },
                None => Ok(None),
            })
            .collect::<Result<_>>()?;
        BootstrapSample::new(theta_hat, reps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};
    use proptest::prelude::*;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn mean_examples() {
        let y = array![[0.0], [2.0]];
        assert_eq!(weighted_mean(&uniform(2), y.view(), &[0]).unwrap(), vec![1.0]);
        let y = array![[3.0, 1.0], [5.0, 2.0], [7.0, 4.0]];
        assert_eq!(weighted_mean(&[1.0, 0.0, 0.0], y.view(), &[0, 1]).unwrap(), vec![3.0, 1.0]);
        assert!(weighted_mean(&[1.0, 0.0], y.view(), &[0]).is_err());
        assert!(weighted_mean(&[1.0, 0.0, 0.0], y.view(), &[2]).is_err());
    }

    #[test]
    fn quantile_examples() {
        let y: Array1<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(weighted_quantile(&uniform(10), y.view(), 0.5).unwrap(), 5.0);
        let y = array![1.0, 2.0, 3.0];
        assert_eq!(weighted_quantile(&[0.2, 0.5, 0.3], y.view(), 0.7).unwrap(), 2.0);
        assert_eq!(weighted_quantile(&[0.2, 0.5, 0.3], y.view(), 0.71).unwrap(), 3.0);
        for tau in [0.01, 0.5, 0.99] {
            assert_eq!(weighted_quantile(&[0.0, 1.0, 0.0], y.view(), tau).unwrap(), 2.0);
        }
        assert!(weighted_quantile(&[0.0; 3], y.view(), 0.5).is_err());
        assert!(weighted_quantile(&uniform(3), y.view(), 1.0).is_err());
    }

    #[test]
    fn quantile_matches_type1_with_uniform_weights() {
        let y: Array1<f64> = (1..=10).map(f64::from).collect();
        for k in 1..10 {
            let tau = k as f64 / 10.0;
            assert_eq!(weighted_quantile(&uniform(10), y.view(), tau).unwrap(), k as f64, "tau {tau}");
        }
    }

    #[test]
    fn cdf_examples() {
        let y = array![1.0, 2.0, 3.0];
        let w = uniform(3);
        assert_eq!(weighted_cdf(&w, y.view(), 0.5).unwrap(), 0.0);
        assert_eq!(weighted_cdf(&w, y.view(), 3.0).unwrap(), 1.0);
        assert!((weighted_cdf(&w, y.view(), 2.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn correlation_examples() {
        let a = array![0.3, -1.2, 2.0, 0.7, 1.1];
        let w = [0.1, 0.3, 0.2, 0.25, 0.15];
        assert_eq!(weighted_correlation(&w, a.view(), a.view()).unwrap(), 1.0);
        let neg = a.mapv(|v| -v);
        assert_eq!(weighted_correlation(&w, a.view(), neg.view()).unwrap(), -1.0);
        let flat = array![2.0, 2.0, 2.0, 2.0, 2.0];
        assert!(matches!(
            weighted_correlation(&w, a.view(), flat.view()),
            Err(Error::DegenerateTarget(_))
        ));
    }

    #[test]
    fn cate_examples() {
        let t = array![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(cate(&uniform(6), t.view(), t.view()).unwrap(), 1.0);
        // treated mean (3 + 5 + 4) / 3 = 4, control mean (1 + 2 + 6) / 3 = 3
        let y = array![3.0, 1.0, 5.0, 2.0, 4.0, 6.0];
        assert!((cate(&uniform(6), y.view(), t.view()).unwrap() - 1.0).abs() < 1e-15);
        let w = [0.5, 0.0, 0.5, 0.0, 0.0, 0.0];
        assert!(matches!(cate(&w, y.view(), t.view()), Err(Error::DegenerateTarget(_))));
        let bad = array![1.0, 0.0, 2.0, 0.0, 1.0, 0.0];
        assert!(cate(&uniform(6), y.view(), bad.view()).is_err());
    }

    #[test]
    fn target_grammar() {
        let cases = [
            ("mean:y1", TargetSpec::Mean(vec!["y1".into()])),
            ("mean:y1,y2", TargetSpec::Mean(vec!["y1".into(), "y2".into()])),
            ("quantile:y@0.1,0.5,0.9", TargetSpec::Quantile("y".into(), vec![0.1, 0.5, 0.9])),
            ("cor:y1,y2", TargetSpec::Correlation("y1".into(), "y2".into())),
            (
                "cate:y|w",
                TargetSpec::Cate {
                    outcome: "y".into(),
                    treatment: "w".into(),
                },
            ),
            ("cdf:y@0.25", TargetSpec::Cdf("y".into(), 0.25)),
        ];
        for (text, spec) in cases {
            let parsed: TargetSpec = text.parse().unwrap();
            assert_eq!(parsed, spec);
            assert_eq!(parsed.to_string().parse::<TargetSpec>().unwrap(), spec);
        }
        for bad in ["mean", "median:y", "quantile:y", "quantile:y@1.5", "cor:a", "cate:y", "cdf:y@x", "mean:"] {
            assert!(bad.parse::<TargetSpec>().is_err(), "{bad}");
        }
        let names = vec!["y".to_string(), "w".to_string()];
        let f = "cate:y|w".parse::<TargetSpec>().unwrap().resolve(&names).unwrap();
        assert_eq!(f, Functional::Cate { outcome: 0, treatment: 1 });
        assert!("mean:z".parse::<TargetSpec>().unwrap().resolve(&names).is_err());
        assert_eq!(
            "quantile:y@0.1,0.9".parse::<TargetSpec>().unwrap().labels(),
            vec!["quantile:y@0.1", "quantile:y@0.9"]
        );
    }

    #[test]
    fn bootstrap_drops_degenerate_groups() {
        let y = array![[1.0, 1.0], [2.0, 0.0], [3.0, 1.0], [4.0, 0.0]];
        let bundle = WeightBundle {
            weights: vec![0.25; 4],
            group_weights: vec![
                Some(vec![0.5, 0.5, 0.0, 0.0]),
                Some(vec![0.5, 0.0, 0.5, 0.0]),
                None,
                Some(vec![0.0, 0.0, 0.5, 0.5]),
            ],
        };
        let f = Functional::Cate { outcome: 0, treatment: 1 };
        let bs = f.bootstrap(&bundle, y.view()).unwrap();
        assert_eq!(bs.effective_b(), 2);
        assert_eq!(bs.dropped(), 2);
        assert_eq!(bs.theta_hat(), &[-1.0]);
    }

    fn simplex(raw: Vec<f64>) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    proptest! {
        #[test]
        fn quantile_monotone_and_galois(raw in prop::collection::vec(0.01f64..1.0, 1..20),
                                        ys in prop::collection::vec(-3i32..3, 20),
                                        t1 in 0.001f64..0.999, t2 in 0.001f64..0.999) {
            let w = simplex(raw);
            let y: Array1<f64> = ys[..w.len()].iter().map(|&v| f64::from(v) / 2.0).collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let qlo = weighted_quantile(&w, y.view(), lo).unwrap();
            let qhi = weighted_quantile(&w, y.view(), hi).unwrap();
            prop_assert!(qlo <= qhi);
            prop_assert!(weighted_cdf(&w, y.view(), qlo).unwrap() >= lo - QUANTILE_SLACK);
        }

        #[test]
        fn correlation_affine_invariant(raw in prop::collection::vec(0.01f64..1.0, 6),
                                        a in prop::collection::vec(-5.0f64..5.0, 6),
                                        b in prop::collection::vec(-5.0f64..5.0, 6),
                                        scale in 0.1f64..10.0, shift in -10.0f64..10.0) {
            let w = simplex(raw);
            let a = Array1::from(a);
            let b = Array1::from(b);
            if let Ok(r) = weighted_correlation(&w, a.view(), b.view()) {
                prop_assert!((-1.0..=1.0).contains(&r));
                let moved = a.mapv(|v| scale * v + shift);
                let r2 = weighted_correlation(&w, moved.view(), b.view()).unwrap();
                prop_assert!((r - r2).abs() < 1e-10);
            }
        }

        #[test]
        fn cate_shift_properties(raw in prop::collection::vec(0.01f64..1.0, 8),
                                 y in prop::collection::vec(-5.0f64..5.0, 8), c in -3.0f64..3.0) {
            let w = simplex(raw);
            let t = array![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
            let y = Array1::from(y);
            let base = cate(&w, y.view(), t.view()).unwrap();
            let both = y.mapv(|v| v + c);
            prop_assert!((cate(&w, both.view(), t.view()).unwrap() - base).abs() < 1e-10);
            let treated = &y + &t.mapv(|v| v * c);
            prop_assert!((cate(&w, treated.view(), t.view()).unwrap() - base - c).abs() < 1e-10);
        }

        #[test]
        fn uniform_weights_match_sample_mean(y in prop::collection::vec(-5.0f64..5.0, 1..30)) {
            let n = y.len();
            let yy = Array2::from_shape_vec((n, 1), y.clone()).unwrap();
            let m = weighted_mean(&uniform(n), yy.view(), &[0]).unwrap()[0];
            let direct = y.iter().sum::<f64>() / n as f64;
            prop_assert!((m - direct).abs() < 1e-12);
        }
    }
}
