use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ekl::alignment::EklObjectiveConfig;
use ekl::features::{median_distance, FeatureMethod, ScalarKernel};
use ekl::harness::bench::{timing_benchmark, BenchSize, StructureClass};
use ekl::harness::cv::{cross_validate, fit_learned, learn_kernel, CvPlan, Method, ModelSpec};
use ekl::harness::data::{gen_bilinear, load_csv, read_matrix, save_csv, write_atomic, write_matrix, Dataset, Layout};
use ekl::harness::metrics::{ni, nmse};
use ekl::harness::results::save_rows;
use ekl::model_file::{load_model, save_model};
use ekl::separability::{ppt_check, DEFAULT_PPT_TOL};
use ekl::solver::{fit_krr_baseline, generalization_bound, predict, rademacher_bound, reduce_dimensions, FitResult};
use ekl::tensor::BlockMatrix;
use ekl::EklError;
use nalgebra::DMatrix;

#[derive(Parser)]
#[command(name = "ekl", version, about = "Entangled kernel learning for vector-valued regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn an entangled kernel and fit it; writes a model file.
    Train(TrainArgs),
    /// Predict outputs for the inputs in a CSV file.
    Predict(PredictArgs),
    /// Score a model on labelled data.
    Eval(EvalArgs),
    /// Generate synthetic bi-linear data.
    Synth(SynthArgs),
    /// PPT test on a model's operator or on a Gram matrix.
    Ppt(PptArgs),
    /// Rademacher complexity and generalization bound.
    Bounds(BoundsArgs),
    /// Fit/predict timings per kernel structure class.
    BenchTime(BenchArgs),
    /// Reduced coordinates Z for the inputs in a CSV file.
    Reduce(ReduceArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Comma-separated numeric file, one sample per row.
    #[arg(long)]
    data: PathBuf,
    /// Skip the first row.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of outputs; they are the last columns of the file.
    #[arg(long)]
    outputs: usize,
    /// linear, gaussian or gaussian:<sigma>; no sigma means the median distance.
    #[arg(long, default_value = "linear")]
    kernel: String,
    /// exact, nystrom:<m> or rff:<m>.
    #[arg(long, default_value = "exact")]
    approx: String,
    #[arg(long, default_value_t = 1.0)]
    rank_frac: f64,
    /// A value in [0, 1] or `cv`.
    #[arg(long, default_value = "0.5", allow_hyphen_values = true)]
    gamma: String,
    /// A positive value or `cv`.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    lambda: String,
    /// ovk or ptr.
    #[arg(long, default_value = "ovk")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Training CSV for a KRR baseline with the model's kernel and λ; adds nI.
    #[arg(long)]
    krr_baseline: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PptArgs {
    /// Test the operator QQᵀ of a saved model.
    #[arg(long, conflicts_with = "gram")]
    model: Option<PathBuf>,
    /// Square CSV matrix without header.
    #[arg(long, requires = "block")]
    gram: Option<PathBuf>,
    #[arg(long)]
    block: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_PPT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    beta: f64,
    /// Bound on k(x, x); required unless --data is given.
    #[arg(long, required_unless_present = "data")]
    kappa: Option<f64>,
    /// Estimate κ as the largest k(x, x) over the inputs of this CSV (all columns).
    #[arg(long, conflicts_with = "kappa")]
    data: Option<PathBuf>,
    #[arg(long)]
    header: bool,
    /// Kernel used with --data.
    #[arg(long, default_value = "linear")]
    kernel: String,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    n: f64,
    /// Loss bound; with it the generalization bound is printed on a second line.
    #[arg(long = "M")]
    m_bound: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0.0)]
    emp_risk: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// `n,p,m_frac,r_frac` entries separated by `;`.
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Comma-separated class names; all classes by default.
    #[arg(long)]
    classes: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_kernel(spec: &str, x: &DMatrix<f64>) -> anyhow::Result<ScalarKernel> {
    match spec.split_once(':') {
        None if spec == "linear" => Ok(ScalarKernel::Linear),
        None if spec == "gaussian" => Ok(ScalarKernel::Gaussian {
            bandwidth: median_distance(x),
        }),
        Some(("gaussian", s)) => {
            let bandwidth = s.parse().map_err(|_| usage(format!("bad gaussian bandwidth `{s}`")))?;
            Ok(ScalarKernel::Gaussian { bandwidth })
        }
        _ => Err(usage(format!("unknown kernel `{spec}`"))),
    }
}

fn parse_approx(spec: &str) -> anyhow::Result<FeatureMethod> {
    let size = |s: &str| -> anyhow::Result<usize> { s.parse().map_err(|_| usage(format!("bad feature count `{s}`"))) };
    match spec.split_once(':') {
        None if spec == "exact" => Ok(FeatureMethod::Exact),
        Some(("nystrom", m)) => Ok(FeatureMethod::Nystrom { m: size(m)? }),
        Some(("rff", m)) => Ok(FeatureMethod::Rff { m: size(m)? }),
        _ => Err(usage(format!("unknown approximation `{spec}`"))),
    }
}

/// `None` means cross-validate.
fn parse_grid_value(name: &str, v: &str) -> anyhow::Result<Option<f64>> {
    if v == "cv" {
        return Ok(None);
    }
    v.parse().map(Some).map_err(|_| usage(format!("{name} must be a number or `cv`, got `{v}`")))
}

fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let ds = load_csv(&a.data.data, a.outputs, &Layout::Tail, a.data.header)?;
    let kernel = parse_kernel(&a.kernel, &ds.x)?;
    let features = parse_approx(&a.approx)?;
    let method = match a.mode.as_str() {
        "ovk" => Method::Ekl,
        "ptr" => Method::PtrEkl,
        other => return Err(usage(format!("mode must be ovk or ptr, got `{other}`"))),
    };
    let spec = ModelSpec {
        kernel,
        features,
        optimizer: EklObjectiveConfig::default().with_seed(a.seed).with_max_iters(a.max_iters),
    };
    let gamma = parse_grid_value("gamma", &a.gamma)?;
    let lambda = parse_grid_value("lambda", &a.lambda)?;
    let (gamma, lambda) = if gamma.is_none() || lambda.is_none() {
        let defaults = CvPlan::default();
        let plan = CvPlan {
            lambda_grid: lambda.map_or(defaults.lambda_grid, |l| vec![l]),
            gamma_grid: gamma.map_or(defaults.gamma_grid, |g| vec![g]),
            folds: a.folds,
            seed: a.seed,
            rank_fraction: a.rank_frac,
        };
        let best = cross_validate(&ds, &plan, &spec, &[method])?.remove(0);
        eprintln!(
            "cv: gamma={} lambda={}",
            best.gamma.expect("entangled methods carry gamma"),
            best.lambda
        );
        (best.gamma.expect("entangled methods carry gamma"), best.lambda)
    } else {
        (gamma.unwrap_or_default(), lambda.unwrap_or_default())
    };
    let lk = learn_kernel(&ds, &spec, gamma, a.rank_frac)?;
    let fit = fit_learned(&lk, &ds.y, method, lambda)?;
    save_model(&a.out, &fit)?;
    let em = fit.model().expect("entangled fit");
    println!(
        "p={} m={} r={} gamma={} lambda={} mode={}",
        em.outputs(),
        em.feature_dim(),
        em.rank(),
        gamma,
        lambda,
        fit.mode.as_str()
    );
    Ok(())
}

fn input_dim(fit: &FitResult) -> usize {
    fit.model().expect("saved models are entangled").feature_map().input_dim()
}

/// Inputs from a file holding either only inputs or inputs followed by outputs.
fn read_inputs(fit: &FitResult, data: &DataArgs) -> anyhow::Result<DMatrix<f64>> {
    let raw = read_matrix(&data.data, data.header)?;
    let d = input_dim(fit);
    if raw.ncols() == d || raw.ncols() == d + fit.outputs() {
        Ok(raw.columns(0, d).into_owned())
    } else {
        Err(EklError::Dimension(format!(
            "model expects {d} input columns (optionally followed by {} outputs), file has {}",
            fit.outputs(),
            raw.ncols()
        ))
        .into())
    }
}

fn output_header(p: usize) -> Vec<String> {
    (0..p).map(|s| format!("y{s}")).collect()
}

fn predict_cmd(a: &PredictArgs) -> anyhow::Result<()> {
    let fit = load_model(&a.model)?;
    let x = read_inputs(&fit, &a.data)?;
    let pred = predict(&fit, &x)?.transpose();
    let header = output_header(fit.outputs());
    write_atomic(&a.out, |f| write_matrix(f, &pred, Some(&header)))?;
    Ok(())
}

fn labelled(fit: &FitResult, data: &DataArgs) -> anyhow::Result<Dataset> {
    let ds = load_csv(&data.data, fit.outputs(), &Layout::Tail, data.header)?;
    if ds.input_dim() != input_dim(fit) {
        return Err(EklError::Dimension(format!(
            "model expects {} inputs and {} outputs, file has {} columns",
            input_dim(fit),
            fit.outputs(),
            ds.input_dim() + fit.outputs()
        ))
        .into());
    }
    Ok(ds)
}

fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let fit = load_model(&a.model)?;
    let ds = labelled(&fit, &a.data)?;
    let err = nmse(&predict(&fit, &ds.x)?, &ds.y)?;
    println!("nmse={err}");
    if let Some(path) = &a.krr_baseline {
        let train = labelled(&fit, &DataArgs {
            data: path.clone(),
            header: a.data.header,
        })?;
        let kernel = *fit.model().expect("entangled fit").feature_map().kernel();
        let krr = fit_krr_baseline(&kernel, &train.x, &train.y, fit.lambda)?;
        let err_krr = nmse(&predict(&krr, &ds.x)?, &ds.y)?;
        println!("krr_nmse={err_krr}");
        println!("ni={}", ni(err, err_krr)?);
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let ds = gen_bilinear(a.n, a.p, a.d, a.noise, a.seed)?;
    save_csv(&a.out, &ds, true)?;
    Ok(())
}

fn ppt(a: &PptArgs) -> anyhow::Result<()> {
    let bm = match (&a.model, &a.gram) {
        (Some(path), None) => {
            let fit = load_model(path)?;
            let em = fit.model().expect("entangled fit");
            if a.block.is_some_and(|b| b != em.outputs()) {
                return Err(usage(format!("model blocks have size {}", em.outputs())));
            }
            BlockMatrix::new(em.materialize_d(), em.outputs())?
        }
        (None, Some(path)) => BlockMatrix::new(read_matrix(path, false)?, a.block.expect("clap requires block"))?,
        _ => return Err(usage("give exactly one of --model or --gram")),
    };
    let v = ppt_check(&bm, a.tol)?;
    println!("{} min_eig={}", v.label(), v.min_eig());
    Ok(())
}

fn bounds(a: &BoundsArgs) -> anyhow::Result<()> {
    let kappa = match (a.kappa, &a.data) {
        (Some(k), _) => k,
        (None, Some(path)) => {
            let x = read_matrix(path, a.header)?;
            let kernel = parse_kernel(&a.kernel, &x)?;
            let k = kernel.diagonal_bound(&x);
            if kernel == ScalarKernel::Linear {
                eprintln!("kappa={k} (data-dependent)");
            }
            k
        }
        (None, None) => return Err(usage("give --kappa or --data")),
    };
    println!("{}", rademacher_bound(a.beta, kappa, a.p, a.n)?);
    if let Some(m) = a.m_bound {
        println!("{}", generalization_bound(a.emp_risk, a.beta, kappa, a.p, a.n, m, a.delta)?);
    }
    Ok(())
}

fn bench(a: &BenchArgs) -> anyhow::Result<()> {
    let sizes = BenchSize::parse_grid(&a.grid)?;
    let classes = match &a.classes {
        None => StructureClass::ALL.to_vec(),
        Some(list) => list
            .split(',')
            .map(|s| StructureClass::parse(s.trim()))
            .collect::<ekl::Result<Vec<_>>>()?,
    };
    let timings = timing_benchmark(&sizes, &classes, a.repeats, a.seed)?;
    let rows: Vec<_> = timings.iter().map(|t| t.to_row(a.seed)).collect();
    save_rows(&a.out, &rows)?;
    for t in &timings {
        println!(
            "{} n={} p={} fit={:.6}s predict={:.6}s",
            t.class.name(),
            t.size.n,
            t.size.p,
            t.fit_seconds,
            t.predict_seconds
        );
    }
    Ok(())
}

fn reduce(a: &ReduceArgs) -> anyhow::Result<()> {
    let fit = load_model(&a.model)?;
    let x = read_inputs(&fit, &a.data)?;
    let em = fit.model().expect("entangled fit");
    let z = reduce_dimensions(em, &em.feature_map().apply(&x)?)?;
    let header: Vec<String> = (0..z.ncols()).map(|j| format!("z{j}")).collect();
    write_atomic(&a.out, |f| write_matrix(f, &z, Some(&header)))?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Ppt(a) => ppt(a),
        Command::Bounds(a) => bounds(a),
        Command::BenchTime(a) => bench(a),
        Command::Reduce(a) => reduce(a),
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<EklError>() {
        e.kind()
    } else if err.is::<UsageError>() {
        "usage"
    } else {
        "other"
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error: usage: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", error_kind(&e), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
