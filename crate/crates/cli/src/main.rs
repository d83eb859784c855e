use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail};
use clap::{Args, Parser, Subcommand, ValueEnum};
use drf_core::config::{read_entries, set_forest_key, unknown_key, FOREST_KEYS};
use drf_core::coverage::{run_coverage, Experiment};
use drf_core::uncertainty::{bootstrap_covariance, ellipsoid_test, gaussian_ci, quantile_ci};
use drf_core::{
    codite_analysis, fit_two_groups, load_dataset, simulate, BandwidthPolicy, DatasetSchema, DgpKind,
    DgpSpec, EllipsoidCalibration, ErrorKind, ForestConfig, ForestModel, GroupedForest, SplitMode,
    TargetSpec,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "drf", version, about = "Distributional random forests with uncertainty quantification")]
struct Cli {
    /// Master seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` file with forest settings and `alpha`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a forest and write it to a model file.
    Fit(FitArgs),
    /// Print the forest weights at a test point as CSV.
    Weights(WeightsArgs),
    /// Point estimate and confidence intervals for a target, as JSON lines.
    Infer(InferArgs),
    /// Two-sample test between treatment arms at a test point, plus a witness band.
    Codite(CoditeArgs),
    /// Draw a dataset from one of the simulation designs.
    Simulate(SimulateArgs),
    /// Run a coverage experiment and write its report.
    Coverage(CoverageArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Role of each column in order, e.g. `x,x,y,w` (roles: x, y, w, ignore).
    #[arg(long, conflicts_with_all = ["covariates", "responses", "treatment"])]
    roles: Option<String>,
    /// Covariate columns by header name.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// Response columns by header name.
    #[arg(long, value_delimiter = ',')]
    responses: Vec<String>,
    /// Treatment column by header name.
    #[arg(long)]
    treatment: Option<String>,
}

#[derive(Args, Default)]
struct ForestArgs {
    #[arg(long)]
    num_trees: Option<usize>,
    #[arg(long)]
    num_groups: Option<usize>,
    #[arg(long)]
    subsample_exponent: Option<f64>,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long)]
    min_node_size: Option<usize>,
    /// Minimum share of a node on either side of a split.
    #[arg(long)]
    split_alpha: Option<f64>,
    #[arg(long)]
    num_features: Option<usize>,
    /// Fixed kernel bandwidth instead of the median heuristic.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, value_enum)]
    split_mode: Option<SplitModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitModeArg {
    Features,
    Exact,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    /// Output model file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x: Vec<f64>,
    /// Also print one column per bootstrap group.
    #[arg(long)]
    groups: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntervalArg {
    Gaussian,
    Quantile,
}

#[derive(Clone, Copy, ValueEnum)]
enum CalibrationArg {
    ChiSquare,
    Empirical,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test point, comma separated. Repeat for several points.
    #[arg(long, num_args = 1, allow_hyphen_values = true, required = true)]
    x: Vec<String>,
    /// Target such as `mean:y1`, `quantile:y@0.1,0.9`, `cor:y1,y2`, `cate:y|w` or `cdf:y@0`.
    #[arg(long)]
    target: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "gaussian")]
    interval: IntervalArg,
    /// Joint null value for the ellipsoid test, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    null: Vec<f64>,
    #[arg(long, value_enum, default_value = "chi-square")]
    calibration: CalibrationArg,
    /// Fail instead of using a pseudo-inverse when the covariance is singular.
    #[arg(long)]
    strict: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoditeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    /// Test point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x: Vec<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of grid points for a one-dimensional response.
    #[arg(long, default_value_t = 201)]
    grid_points: usize,
    /// Response values to evaluate the band at, one comma separated row per line.
    #[arg(long)]
    probes: Option<PathBuf>,
    /// Witness band CSV.
    #[arg(long)]
    band: PathBuf,
    /// Test result; standard output by default.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    dgp: DgpKind,
    #[arg(long, short)]
    n: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoverageArgs {
    /// Experiment file.
    experiment: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Settings from `--config`, before command line overrides.
struct Settings {
    forest: ForestConfig,
    alpha: f64,
    threads: Option<usize>,
}

fn load_settings(path: Option<&Path>) -> drf_core::Result<Settings> {
    let mut s = Settings {
        forest: ForestConfig::default(),
        alpha: 0.05,
        threads: None,
    };
    let Some(path) = path else { return Ok(s) };
    for e in read_entries(path)? {
        match e.key.as_str() {
            "alpha" => s.alpha = parse_key(&e.key, &e.value)?,
            "threads" => s.threads = Some(parse_key(&e.key, &e.value)?),
            k => {
                if !set_forest_key(&mut s.forest, k, &e.value)? {
                    let valid: Vec<&str> = FOREST_KEYS.iter().copied().chain(["alpha", "threads"]).collect();
                    return Err(unknown_key(k, &valid));
                }
            }
        }
    }
    Ok(s)
}

fn parse_key<T: std::str::FromStr>(key: &str, value: &str) -> drf_core::Result<T> {
    value
        .parse()
        .map_err(|_| drf_core::Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl ForestArgs {
    fn apply(&self, cfg: &mut ForestConfig) {
        if let Some(v) = self.num_trees {
            cfg.num_trees = v;
        }
        if let Some(v) = self.num_groups {
            cfg.num_groups = v;
        }
        if let Some(v) = self.subsample_exponent {
            cfg.subsample_exponent = v;
        }
        if let Some(v) = self.mtry {
            cfg.mtry = Some(v);
        }
        if let Some(v) = self.min_node_size {
            cfg.min_node_size = v;
        }
        if let Some(v) = self.split_alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.num_features {
            cfg.num_features = v;
        }
        if let Some(v) = self.bandwidth {
            cfg.bandwidth = BandwidthPolicy::Fixed(v);
        }
        if let Some(m) = self.split_mode {
            cfg.split_mode = match m {
                SplitModeArg::Features => SplitMode::Features,
                SplitModeArg::Exact => SplitMode::Exact,
            };
        }
    }
}

impl DataArgs {
    fn schema(&self) -> anyhow::Result<DatasetSchema> {
        if let Some(roles) = &self.roles {
            return Ok(DatasetSchema::parse_positional(roles)?);
        }
        if self.covariates.is_empty() || self.responses.is_empty() {
            return Err(drf_core::Error::InvalidArgument(
                "give either --roles or both --covariates and --responses".into(),
            )
            .into());
        }
        Ok(DatasetSchema::Named {
            covariates: self.covariates.clone(),
            responses: self.responses.clone(),
            treatment: self.treatment.clone(),
        })
    }
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| drf_core::Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn parse_point(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| drf_core::Error::InvalidArgument(format!("bad coordinate `{v}` in `{s}`")).into())
        })
        .collect()
}

fn read_probes(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| drf_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| drf_core::Error::Format(format!("{}: line {}: expected numbers", path.display(), i + 1)))?;
        out.push(row);
    }
    Ok(out)
}

fn cmd_fit(args: FitArgs, mut cfg: ForestConfig) -> anyhow::Result<()> {
    args.forest.apply(&mut cfg);
    let ds = load_dataset(&args.data.data, &args.data.schema()?)?;
    let (y, names) = ds.joint_responses();
    let forest = GroupedForest::fit(ds.x.view(), y.view(), &cfg)?;
    log::info!(
        "fitted {} trees in {} groups on n = {}, sigma = {}",
        forest.trees().count(),
        forest.num_groups(),
        forest.n,
        forest.bandwidth.sigma()
    );
    ForestModel::new(forest, y, ds.x_names.clone(), names)?.save(&args.out)?;
    Ok(())
}

fn cmd_weights(args: WeightsArgs) -> anyhow::Result<()> {
    let model = ForestModel::load(&args.model)?;
    let wb = model.forest.weights(&args.x)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    let mut header = vec!["row".to_string(), "weight".to_string()];
    if args.groups {
        header.extend((0..wb.num_groups()).map(|b| format!("group{}", b + 1)));
    }
    w.write_record(&header)?;
    for i in 0..wb.n() {
        let mut rec = vec![(i + 1).to_string(), wb.weights[i].to_string()];
        if args.groups {
            rec.extend(wb.group_weights.iter().map(|g| match g {
                Some(g) => g[i].to_string(),
                None => String::new(),
            }));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_infer(args: InferArgs, alpha: f64) -> anyhow::Result<()> {
    let model = ForestModel::load(&args.model)?;
    let spec: TargetSpec = args.target.parse()?;
    let functional = spec.resolve(&model.response_names)?;
    let labels = spec.labels();
    if !args.null.is_empty() && args.null.len() != functional.dim() {
        return Err(drf_core::Error::DimensionMismatch {
            expected: functional.dim(),
            found: args.null.len(),
        }
        .into());
    }
    let calibration = match args.calibration {
        CalibrationArg::ChiSquare => EllipsoidCalibration::ChiSquare,
        CalibrationArg::Empirical => EllipsoidCalibration::Empirical,
    };
    let mut out = output(args.out.as_deref())?;
    for x in &args.x {
        let x = parse_point(x)?;
        let wb = model.forest.weights(&x)?;
        let bs = functional.bootstrap(&wb, model.responses.view())?;
        let ci = match args.interval {
            IntervalArg::Gaussian => gaussian_ci(&bs, alpha)?,
            IntervalArg::Quantile => quantile_ci(&bs, alpha)?,
        };
        let cov = bootstrap_covariance(&bs)?;
        let cov_rows: Vec<Vec<f64>> = cov.matrix.row_iter().map(|r| r.iter().copied().collect()).collect();
        let mut rec = json!({
            "x": x,
            "target": spec.to_string(),
            "labels": labels,
            "estimate": bs.theta_hat(),
            "lower": ci.iter().map(|c| c.lower).collect::<Vec<_>>(),
            "upper": ci.iter().map(|c| c.upper).collect::<Vec<_>>(),
            "alpha": alpha,
            "interval": match args.interval { IntervalArg::Gaussian => "gaussian", IntervalArg::Quantile => "quantile" },
            "covariance": cov_rows,
            "effective_b": bs.effective_b(),
            "dropped": bs.dropped(),
        });
        if !args.null.is_empty() {
            let t = ellipsoid_test(&bs, &args.null, alpha, calibration, args.strict)?;
            rec["ellipsoid"] = json!({
                "null": args.null,
                "statistic": t.statistic,
                "threshold": t.threshold,
                "reject": t.reject,
                "rank": t.rank,
            });
        }
        writeln!(out, "{rec}")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_codite(args: CoditeArgs, mut cfg: ForestConfig, alpha: f64) -> anyhow::Result<()> {
    args.forest.apply(&mut cfg);
    let ds = load_dataset(&args.data.data, &args.data.schema()?)?;
    let fit = fit_two_groups(&ds, &cfg)?;
    let (res, band) = codite_analysis(&fit, &args.x, alpha)?;
    let probes = match &args.probes {
        Some(p) => read_probes(p)?,
        None if band.dim() == 1 => band.default_grid(args.grid_points)?.into_iter().map(|v| vec![v]).collect(),
        None => bail!(drf_core::Error::InvalidArgument(format!(
            "responses have {} dimensions; pass --probes",
            band.dim()
        ))),
    };
    band.save_csv(&args.band, &probes)?;
    let mut out = output(args.out.as_deref())?;
    let rec = json!({
        "x": args.x,
        "statistic": res.statistic,
        "threshold": res.threshold_c,
        "p_value": res.p_value,
        "reject": res.reject(),
        "alpha": res.alpha,
        "n0": res.n0,
        "n1": res.n1,
        "half_width": band.half_width,
    });
    writeln!(out, "{rec}")?;
    out.flush()?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, seed: u64) -> anyhow::Result<()> {
    let ds = simulate(&DgpSpec {
        kind: args.dgp,
        n: args.n,
        seed,
    })?;
    ds.write_csv(output(args.out.as_deref())?)?;
    Ok(())
}

fn cmd_coverage(args: CoverageArgs, cfg: ForestConfig, seed: Option<u64>) -> anyhow::Result<()> {
    let mut exp = Experiment::load(&args.experiment, cfg)?;
    if let Some(r) = args.reps {
        exp.reps = r;
    }
    if let Some(s) = seed {
        exp.seed = s;
    }
    let report = run_coverage(&exp)?;
    report.write_csv(output(args.out.as_deref())?)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let settings = load_settings(cli.config.as_deref())?;
    let mut cfg = settings.forest;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads.or(settings.threads) {
        if t == 0 {
            bail!(drf_core::Error::InvalidArgument("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    match cli.command {
        Command::Fit(a) => cmd_fit(a, cfg),
        Command::Weights(a) => cmd_weights(a),
        Command::Infer(a) => {
            let alpha = a.alpha.unwrap_or(settings.alpha);
            cmd_infer(a, alpha)
        }
        Command::Codite(a) => {
            let alpha = a.alpha.unwrap_or(settings.alpha);
            cmd_codite(a, cfg, alpha)
        }
        Command::Simulate(a) => cmd_simulate(a, cfg.seed),
        Command::Coverage(a) => cmd_coverage(a, cfg, cli.seed),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<drf_core::Error>() {
            return match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numeric => 3,
            };
        }
        if cause.is::<csv::Error>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
