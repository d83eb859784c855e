//! Monte-Carlo coverage experiments against the simulated DGPs.
//!
//! Each replicate draws a fresh dataset, fits a forest and builds intervals
//! at every probe point. Replicate `r` at sample size `n` takes all of its
//! randomness from `(experiment seed, n, r)`, so a report does not depend on
//! the number of worker threads.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::codite::{codite_analysis, fit_two_groups};
use crate::config::{parse_entries, parse_value, set_forest_key, unknown_key, FOREST_KEYS};
use crate::error::{Error, ErrorKind, Result};
use crate::forest::{ForestConfig, GroupedForest};
use crate::inference::TargetSpec;
use crate::rng::{derive_seed, Domain};
use crate::simulate::{simulate, DgpKind, DgpSpec};
use crate::uncertainty::{ellipsoid_test, gaussian_ci, quantile_ci, EllipsoidCalibration, Interval};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntervalMethod {
    Gaussian,
    Quantile,
}

impl IntervalMethod {
    pub fn name(self) -> &'static str {
        match self {
            IntervalMethod::Gaussian => "gaussian",
            IntervalMethod::Quantile => "quantile",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentTarget {
    Functional(TargetSpec),
    /// Two-sample test between treatment arms plus its witness band.
    Codite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub dgp: DgpKind,
    pub sizes: Vec<usize>,
    pub probes: Vec<Vec<f64>>,
    pub target: ExperimentTarget,
    pub reps: usize,
    pub forest: ForestConfig,
    /// Interval level is `1 - alpha`; also the test level for two-sample runs.
    pub alpha: f64,
    pub method: IntervalMethod,
    /// Also report joint ellipsoid coverage of all coordinates.
    pub joint: bool,
    /// Use each replicate's own point estimate as the truth.
    pub self_truth: bool,
    pub seed: u64,
    /// Witness-band grid size for two-sample runs.
    pub grid_points: usize,
}

pub const EXPERIMENT_KEYS: &[&str] = &[
    "dgp",
    "n",
    "probes",
    "target",
    "reps",
    "alpha",
    "interval",
    "joint",
    "self_truth",
    "seed",
    "grid_points",
];

impl Experiment {
    pub fn new(dgp: DgpKind, target: ExperimentTarget) -> Self {
        Experiment {
            dgp,
            sizes: vec![1000],
            probes: Vec::new(),
            target,
            reps: 100,
            forest: ForestConfig::default(),
            alpha: 0.05,
            method: IntervalMethod::Gaussian,
            joint: false,
            self_truth: false,
            seed: 1,
            grid_points: 201,
        }
    }

    /// Parses an experiment file. Forest keys may be mixed in; `seed` seeds
    /// the experiment, not an individual forest.
    pub fn from_str_config(text: &str) -> Result<Self> {
        Self::from_str_with_forest(text, ForestConfig::default())
    }

    /// Like [`Experiment::from_str_config`], with forest keys applied on top of `base`.
    pub fn from_str_with_forest(text: &str, base: ForestConfig) -> Result<Self> {
        let entries = parse_entries(text)?;
        let get = |k: &str| entries.iter().find(|e| e.key == k).map(|e| e.value.as_str());
        let need = |k: &str| get(k).ok_or_else(|| Error::Config(format!("experiment is missing `{k}`")));
        let target = match need("target")? {
            "codite" => ExperimentTarget::Codite,
            t => ExperimentTarget::Functional(t.parse()?),
        };
        let mut exp = Experiment::new(need("dgp")?.parse()?, target);
        exp.forest = base;
        let mut probes_set = false;
        for e in &entries {
            let (k, v) = (e.key.as_str(), e.value.as_str());
            match k {
                "dgp" | "target" => {}
                "n" => exp.sizes = v.split(',').map(|s| parse_value(k, s.trim())).collect::<Result<_>>()?,
                "probes" => {
                    exp.probes = v
                        .split(';')
                        .map(|p| p.split(',').map(|s| parse_value(k, s.trim())).collect::<Result<Vec<f64>>>())
                        .collect::<Result<_>>()?;
                    probes_set = true;
                }
                "reps" => exp.reps = parse_value(k, v)?,
                "alpha" => exp.alpha = parse_value(k, v)?,
                "interval" => {
                    exp.method = match v {
                        "gaussian" => IntervalMethod::Gaussian,
                        "quantile" => IntervalMethod::Quantile,
                        _ => return Err(Error::Config(format!("bad interval `{v}` (expected gaussian or quantile)"))),
                    }
                }
                "joint" => exp.joint = parse_value(k, v)?,
                "self_truth" => exp.self_truth = parse_value(k, v)?,
                "seed" => exp.seed = parse_value(k, v)?,
                "grid_points" => exp.grid_points = parse_value(k, v)?,
                _ => {
                    if !set_forest_key(&mut exp.forest, k, v)? {
                        let valid: Vec<&str> = EXPERIMENT_KEYS.iter().chain(FOREST_KEYS).copied().collect();
                        return Err(unknown_key(k, &valid));
                    }
                }
            }
        }
        if !probes_set {
            return Err(Error::Config("experiment is missing `probes`".into()));
        }
        exp.validate()?;
        Ok(exp)
    }

    pub fn load(path: impl AsRef<Path>, base: ForestConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_str_with_forest(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 10 {
            return Err(Error::Config(format!("reps must be at least 10, got {}", self.reps)));
        }
        if self.sizes.is_empty() || self.probes.is_empty() {
            return Err(Error::Config("need at least one sample size and one probe".into()));
        }
        if let Some(bad) = self.probes.iter().find(|p| p.len() != 5) {
            return Err(Error::Config(format!("probe {bad:?} does not have 5 coordinates")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        match &self.target {
            ExperimentTarget::Codite if !self.dgp.has_treatment() => Err(Error::Config(format!(
                "two-sample runs need a dgp with a treatment column, not {}",
                self.dgp
            ))),
            ExperimentTarget::Functional(t) if !self.self_truth => {
                self.dgp.truth(t, &self.probes[0]).map(|_| ()).map_err(|e| Error::Config(e.to_string()))
            }
            _ => Ok(()),
        }
    }

    fn rep_seed(&self, n: usize, rep: usize, part: u64) -> u64 {
        derive_seed(self.seed, &[Domain::Replicate as u64, n as u64, rep as u64, part])
    }

    fn dataset(&self, n: usize, rep: usize) -> Result<crate::data::Dataset> {
        simulate(&DgpSpec {
            kind: self.dgp,
            n,
            seed: self.rep_seed(n, rep, 0),
        })
    }

    fn forest_config(&self, n: usize, rep: usize) -> ForestConfig {
        ForestConfig {
            seed: self.rep_seed(n, rep, 1),
            ..self.forest.clone()
        }
    }
}

/// One probe of one replicate of a functional target.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutcome {
    pub theta_hat: Vec<f64>,
    pub truth: Vec<f64>,
    pub intervals: Vec<Interval>,
    /// Whether the joint ellipsoid at level `1 - alpha` contains the truth.
    pub joint_hit: Option<bool>,
}

impl ProbeOutcome {
    /// Closed-interval hit indicator per coordinate.
    pub fn hits(&self) -> Vec<bool> {
        self.intervals.iter().zip(&self.truth).map(|(ci, &t)| ci.contains(t)).collect()
    }
}

/// One probe of one replicate of a two-sample run.
#[derive(Clone, Debug, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub reject: bool,
    /// The band contains zero at every grid point.
    pub zero_in_band: bool,
}

fn dropped_on_numeric<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.kind() == ErrorKind::Numeric => {
            log::debug!("replicate dropped: {e}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Runs replicate `rep` of a functional experiment at sample size `n`.
/// Entries are `None` where the replicate is degenerate at that probe.
pub fn functional_rep(exp: &Experiment, target: &TargetSpec, n: usize, rep: usize) -> Result<Vec<Option<ProbeOutcome>>> {
    let data = exp.dataset(n, rep)?;
    let (y, names) = data.joint_responses();
    let functional = target.resolve(&names)?;
    let forest = match dropped_on_numeric(GroupedForest::fit(data.x.view(), y.view(), &exp.forest_config(n, rep)))? {
        Some(f) => f,
        None => return Ok(vec![None; exp.probes.len()]),
    };
    exp.probes
        .iter()
        .map(|x| {
            dropped_on_numeric((|| {
                let bundle = forest.weights(x)?;
                let bs = functional.bootstrap(&bundle, y.view())?;
                let truth = if exp.self_truth {
                    bs.theta_hat().to_vec()
                } else {
                    exp.dgp.truth(target, x)?
                };
                let intervals = match exp.method {
                    IntervalMethod::Gaussian => gaussian_ci(&bs, exp.alpha)?,
                    IntervalMethod::Quantile => quantile_ci(&bs, exp.alpha)?,
                };
                let joint_hit = if exp.joint {
                    let t = ellipsoid_test(&bs, &truth, exp.alpha, EllipsoidCalibration::ChiSquare, false)?;
                    Some(!t.reject)
                } else {
                    None
                };
                Ok(ProbeOutcome {
                    theta_hat: bs.theta_hat().to_vec(),
                    truth,
                    intervals,
                    joint_hit,
                })
            })())
        })
        .collect()
}

/// Runs replicate `rep` of a two-sample experiment at sample size `n`.
pub fn codite_rep(exp: &Experiment, n: usize, rep: usize) -> Result<Vec<Option<TestOutcome>>> {
    let data = exp.dataset(n, rep)?;
    let fit = match dropped_on_numeric(fit_two_groups(&data, &exp.forest_config(n, rep)))? {
        Some(f) => f,
        None => return Ok(vec![None; exp.probes.len()]),
    };
    exp.probes
        .iter()
        .map(|x| {
            dropped_on_numeric((|| {
                let (result, band) = codite_analysis(&fit, x, exp.alpha)?;
                let grid = band.default_grid(exp.grid_points)?;
                let mut zero_in_band = true;
                for t in grid {
                    let p = band.at(&[t])?;
                    if !(p.lower <= 0.0 && 0.0 <= p.upper) {
                        zero_in_band = false;
                        break;
                    }
                }
                Ok(TestOutcome {
                    statistic: result.statistic,
                    threshold: result.threshold_c,
                    p_value: result.p_value,
                    reject: result.reject(),
                    zero_in_band,
                })
            })())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageRow {
    pub n: usize,
    pub probe: Vec<f64>,
    pub target: String,
    /// `gaussian`, `quantile`, `ellipsoid`, `reject_rate` or `zero_in_band`.
    pub method: String,
    /// Hit (or rejection) rate over the kept replicates.
    pub rate: f64,
    /// `rate -/+ 1.96 sqrt(rate (1 - rate) / reps)`.
    pub band_lower: f64,
    pub band_upper: f64,
    pub median_length: f64,
    pub median_bias: f64,
    pub median_abs_bias: f64,
    pub reps: usize,
    pub dropped: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
}

pub const REPORT_COLUMNS: [&str; 13] = [
    "n",
    "probe",
    "target",
    "method",
    "rate",
    "band_lower",
    "band_upper",
    "median_length",
    "median_bias",
    "median_abs_bias",
    "reps",
    "dropped",
    "wall_seconds",
];

impl CoverageReport {
    pub fn find(&self, n: usize, probe: usize, target: &str, method: &str) -> Option<&CoverageRow> {
        let mut probes: Vec<&Vec<f64>> = Vec::new();
        for r in self.rows.iter().filter(|r| r.n == n) {
            if !probes.contains(&&r.probe) {
                probes.push(&r.probe);
            }
        }
        let p = probes.get(probe)?;
        self.rows
            .iter()
            .find(|r| r.n == n && &&r.probe == p && r.target == target && r.method == method)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_COLUMNS)?;
        for r in &self.rows {
            let probe = r.probe.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
            w.write_record([
                r.n.to_string(),
                probe,
                r.target.clone(),
                r.method.clone(),
                r.rate.to_string(),
                r.band_lower.to_string(),
                r.band_upper.to_string(),
                r.median_length.to_string(),
                r.median_bias.to_string(),
                r.median_abs_bias.to_string(),
                r.reps.to_string(),
                r.dropped.to_string(),
                format!("{:.3}", r.wall_seconds),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<coverage csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Normal-approximation 95% band for a binomial proportion, clipped to `[0, 1]`.
pub fn binomial_band(rate: f64, reps: usize) -> (f64, f64) {
    if reps == 0 {
        return (f64::NAN, f64::NAN);
    }
    let half = 1.96 * (rate * (1.0 - rate) / reps as f64).sqrt();
    ((rate - half).max(0.0), (rate + half).min(1.0))
}

struct RowBuilder<'a> {
    n: usize,
    probe: &'a [f64],
    dropped: usize,
    wall: f64,
}

impl RowBuilder<'_> {
    fn row(&self, target: String, method: &str, hits: &[bool], lengths: &[f64], biases: &[f64]) -> CoverageRow {
        let reps = hits.len();
        let rate = if reps == 0 {
            f64::NAN
        } else {
            hits.iter().filter(|h| **h).count() as f64 / reps as f64
        };
        let (band_lower, band_upper) = binomial_band(rate, reps);
        let abs: Vec<f64> = biases.iter().map(|b| b.abs()).collect();
        CoverageRow {
            n: self.n,
            probe: self.probe.to_vec(),
            target,
            method: method.into(),
            rate,
            band_lower,
            band_upper,
            median_length: median(lengths),
            median_bias: median(biases),
            median_abs_bias: median(&abs),
            reps,
            dropped: self.dropped,
            wall_seconds: self.wall,
        }
    }
}

/// Runs the whole experiment, one block of rows per sample size.
pub fn run_coverage(exp: &Experiment) -> Result<CoverageReport> {
    exp.validate()?;
    let mut report = CoverageReport::default();
    for &n in &exp.sizes {
        let start = Instant::now();
        match &exp.target {
            ExperimentTarget::Functional(target) => {
                let reps: Vec<Vec<Option<ProbeOutcome>>> = (0..exp.reps)
                    .into_par_iter()
                    .map(|r| functional_rep(exp, target, n, r))
                    .collect::<Result<_>>()?;
                let wall = start.elapsed().as_secs_f64();
                let labels = target.labels();
                for (pi, probe) in exp.probes.iter().enumerate() {
                    let kept: Vec<&ProbeOutcome> = reps.iter().filter_map(|r| r[pi].as_ref()).collect();
                    let b = RowBuilder {
                        n,
                        probe,
                        dropped: exp.reps - kept.len(),
                        wall,
                    };
                    if b.dropped > 0 {
                        log::info!("n={n} probe {pi}: {} of {} replicates dropped", b.dropped, exp.reps);
                    }
                    for (j, label) in labels.iter().enumerate() {
                        let hits: Vec<bool> = kept.iter().map(|o| o.hits()[j]).collect();
                        let lengths: Vec<f64> = kept.iter().map(|o| o.intervals[j].length()).collect();
                        let biases: Vec<f64> = kept.iter().map(|o| o.theta_hat[j] - o.truth[j]).collect();
                        report.rows.push(b.row(label.clone(), exp.method.name(), &hits, &lengths, &biases));
                    }
                    if exp.joint {
                        let hits: Vec<bool> = kept.iter().filter_map(|o| o.joint_hit).collect();
                        report.rows.push(b.row(target.to_string(), "ellipsoid", &hits, &[], &[]));
                    }
                }
            }
            ExperimentTarget::Codite => {
                let reps: Vec<Vec<Option<TestOutcome>>> = (0..exp.reps)
                    .into_par_iter()
                    .map(|r| codite_rep(exp, n, r))
                    .collect::<Result<_>>()?;
                let wall = start.elapsed().as_secs_f64();
                for (pi, probe) in exp.probes.iter().enumerate() {
                    let kept: Vec<&TestOutcome> = reps.iter().filter_map(|r| r[pi].as_ref()).collect();
                    let b = RowBuilder {
                        n,
                        probe,
                        dropped: exp.reps - kept.len(),
                        wall,
                    };
                    let rejects: Vec<bool> = kept.iter().map(|o| o.reject).collect();
                    let covered: Vec<bool> = kept.iter().map(|o| o.zero_in_band).collect();
                    report.rows.push(b.row("codite".into(), "reject_rate", &rejects, &[], &[]));
                    report.rows.push(b.row("codite".into(), "zero_in_band", &covered, &[], &[]));
                }
            }
        }
        log::info!("n={n}: {} replicates in {:.1}s", exp.reps, start.elapsed().as_secs_f64());
    }
    Ok(report)
}
