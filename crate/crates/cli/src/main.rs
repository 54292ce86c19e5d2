//! `sharpot` command-line interface.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Axis};

use sharpot::barycenter::{
    barycenter_descent, delta_pair_regularized_closed_form, regularized_barycenter_ibp, BarycenterProblem,
    DescentConfig, SmoothMetric, SolverTrace,
};
use sharpot::exact::exact_wasserstein;
use sharpot::grad::{regularized_gradient_from_solution, sharp_gradient_from_solution};
use sharpot::io::{self, format_sig};
use sharpot::learning::{cross_validate, fit, predict, TrainingSet};
use sharpot::rate::{rate_study_csv, run_rate_study, seeded_instance};
use sharpot::simplex::grid_cost_1d;
use sharpot::svg::{emit_svg_bars, emit_svg_panels, Panel};
use sharpot::{sinkhorn_solve, CostMatrix, DomainMode, Histogram, InteriorHistogram, OtError, SinkhornConfig};

#[derive(Parser, Debug)]
#[command(
    name = "sharpot",
    version,
    about = "Sharp and regularized Sinkhorn distances, barycenters and structured prediction"
)]
struct Cli {
    /// Seed for every random draw (dataset generation, fold assignment).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all subcommands currently run sequentially.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sharp or regularized Sinkhorn distance between two histograms.
    Distance(DistanceArgs),
    /// Gradient of a Sinkhorn distance in its first argument.
    Gradient(GradientArgs),
    /// Exact transport cost and an optimal plan.
    Exact(ExactArgs),
    /// Fixed-support barycenter of several histograms.
    Barycenter(BarycenterArgs),
    /// Fit a kernel ridge weight model and save it.
    Fit(FitArgs),
    /// Predict histograms from a saved model.
    Predict(PredictArgs),
    /// Gaps between the Sinkhorn distances and the exact distance over a range of lambda.
    RateStudy(RateArgs),
    /// Two-delta barycenter example: sharp vs regularized, with a figure.
    DemoExample1(DemoArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LogDomain {
    Auto,
    On,
    Off,
}

impl From<LogDomain> for DomainMode {
    fn from(v: LogDomain) -> Self {
        match v {
            LogDomain::Auto => DomainMode::Auto,
            LogDomain::On => DomainMode::Log,
            LogDomain::Off => DomainMode::Linear,
        }
    }
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long)]
    lambda: f64,
    /// L1 marginal tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = LogDomain::Auto)]
    log_domain: LogDomain,
}

impl SolverArgs {
    fn config(&self) -> Result<SinkhornConfig, OtError> {
        let cfg = SinkhornConfig::new(self.lambda)?
            .with_tol(self.tol)
            .with_max_iter(self.max_iter)
            .with_domain(self.log_domain.into());
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    cost: PathBuf,
}

impl DataArgs {
    fn load(&self) -> Result<(Histogram, Histogram, CostMatrix), OtError> {
        Ok((io::read_histogram(&self.a)?, io::read_histogram(&self.b)?, io::read_cost(&self.cost)?))
    }
}

#[derive(Args, Debug)]
#[group(multiple = false)]
struct Which {
    /// `<T, M>` at the entropic optimum (default).
    #[arg(long)]
    sharp: bool,
    /// `<T, M> - h(T) / lambda`.
    #[arg(long)]
    regularized: bool,
}

#[derive(Args, Debug)]
struct DistanceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    which: Which,
}

#[derive(Args, Debug)]
struct GradientArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    which: Which,
    /// Also print a central finite-difference estimate and the largest discrepancy.
    #[arg(long)]
    check_fd: bool,
    /// Step of the finite differences.
    #[arg(long, default_value_t = 1e-5)]
    fd_step: f64,
}

#[derive(Args, Debug)]
struct ExactArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Method {
    Sharp,
    Regularized,
    Both,
}

#[derive(Args, Debug)]
struct BarycenterArgs {
    /// One histogram per line.
    #[arg(long)]
    measures: PathBuf,
    /// Cost shared by all measures.
    #[arg(long, conflicts_with = "costs", required_unless_present = "costs")]
    cost: Option<PathBuf>,
    /// Directory with one cost file per measure, taken in file-name order.
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = Method::Both)]
    method: Method,
    /// One line of weights; uniform by default.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Output histograms (sharp first when both are computed); stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Objective and step trace of the sharp descent.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    Sharp,
    Regularized,
}

impl From<MetricArg> for SmoothMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Sharp => SmoothMetric::Sharp,
            MetricArg::Regularized => SmoothMetric::Regularized,
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Input rows, one example per line.
    #[arg(long)]
    inputs: PathBuf,
    /// Output histograms, one per line.
    #[arg(long)]
    outputs: PathBuf,
    #[arg(long, required_unless_present = "sigma_grid")]
    sigma: Option<f64>,
    #[arg(long, required_unless_present = "gamma_grid")]
    gamma: Option<f64>,
    /// Comma-separated bandwidths for cross-validation (needs --cost, --lambda, --seed).
    #[arg(long, value_delimiter = ',')]
    sigma_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    cost: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value_t = MetricArg::Sharp)]
    metric: MetricArg,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Query rows, one per line.
    #[arg(long)]
    inputs: PathBuf,
    #[arg(long)]
    cost: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = MetricArg::Sharp)]
    metric: MetricArg,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RateArgs {
    /// Instance files; without them a seeded 5x5 instance is generated.
    #[arg(long, requires_all = ["b", "cost"])]
    a: Option<PathBuf>,
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long)]
    cost: Option<PathBuf>,
    /// Comma-separated values of lambda.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19,20,21,22,23,24,25,26,27,28,29,30"
    )]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = 1e-14)]
    tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DemoArgs {
    /// Where to write the three-panel figure.
    #[arg(long, default_value = "example1.svg")]
    svg: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,5")]
    lambdas: Vec<f64>,
}

struct Ctx {
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn seed(&self, why: &str) -> Result<u64, OtError> {
        self.seed.ok_or_else(|| OtError::InvalidParameter(format!("--seed is required for {why}")))
    }
}

fn exit_code(e: &OtError) -> u8 {
    match e {
        OtError::InvalidInput(_) | OtError::InvalidParameter(_) | OtError::OutOfScale { .. } => 1,
        OtError::Io(_) => 3,
        OtError::NonConvergence { .. }
        | OtError::BarycenterNonConvergence { .. }
        | OtError::Stall { .. }
        | OtError::NumericalOverflow(_)
        | OtError::Degenerate(_)
        | OtError::Numerical(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    let ctx = Ctx { seed: cli.seed, quiet: cli.quiet };
    let result = match &cli.command {
        Command::Distance(args) => distance(args),
        Command::Gradient(args) => gradient(args),
        Command::Exact(args) => exact(args),
        Command::Barycenter(args) => barycenter(args, &ctx),
        Command::Fit(args) => fit_cmd(args, &ctx),
        Command::Predict(args) => predict_cmd(args, &ctx),
        Command::RateStudy(args) => rate_study(args, &ctx),
        Command::DemoExample1(args) => demo(args, &ctx),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Writes to `path` or returns the text for stdout.
fn emit(path: Option<&Path>, text: String) -> Result<String, OtError> {
    match path {
        Some(p) => {
            fs::write(p, text).map_err(|e| OtError::Io(format!("{}: {e}", p.display())))?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn distance(args: &DistanceArgs) -> Result<String, OtError> {
    let (a, b, cost) = args.data.load()?;
    let cfg = args.solver.config()?;
    let sol = sinkhorn_solve(&a, &b, &cost, &cfg)?;
    let value = if args.which.regularized { sol.regularized_value(&cost, cfg.lambda) } else { sol.sharp_value(&cost) };
    Ok(format!("{}\n", format_sig(value)))
}

fn gradient(args: &GradientArgs) -> Result<String, OtError> {
    let (a, b, cost) = args.data.load()?;
    let cfg = args.solver.config()?;
    InteriorHistogram::from_positive(a.clone())?;
    let value_at = |p: &Histogram| -> Result<(f64, Array1<f64>), OtError> {
        let sol = sinkhorn_solve(p, &b, &cost, &cfg)?;
        Ok(if args.which.regularized {
            (sol.regularized_value(&cost, cfg.lambda), regularized_gradient_from_solution(&sol)?.into_inner())
        } else {
            (sol.sharp_value(&cost), sharp_gradient_from_solution(&sol, &cost)?.into_inner())
        })
    };
    let (_, g) = value_at(&a)?;
    let mut out = io::csv_string([g.iter()]);
    if args.check_fd {
        let n = a.len();
        let h = args.fd_step;
        let mut fd = Array1::zeros(n);
        for i in 0..n {
            // direction e_i - 1/n keeps the perturbation on the simplex
            let mut v = Array1::from_elem(n, -1.0 / n as f64);
            v[i] += 1.0;
            let plus = Histogram::normalized(a.weights() + &(h * &v))?;
            let minus = Histogram::normalized(a.weights() - &(h * &v))?;
            if !plus.is_strictly_positive() || !minus.is_strictly_positive() {
                return Err(OtError::InvalidParameter("finite-difference step leaves the simplex".into()));
            }
            fd[i] = (value_at(&plus)?.0 - value_at(&minus)?.0) / (2.0 * h);
        }
        let worst = (&g - &fd).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        out.push_str(&io::csv_string([fd.iter()]));
        let _ = writeln!(out, "{}", format_sig(worst));
    }
    Ok(out)
}

fn exact(args: &ExactArgs) -> Result<String, OtError> {
    let (a, b, cost) = args.data.load()?;
    let sol = exact_wasserstein(&a, &b, &cost)?;
    let mut out = format!("{}\n", format_sig(sol.value));
    for ((i, j), &t) in sol.plan.entries().indexed_iter() {
        if t > 0.0 {
            let _ = writeln!(out, "{i},{j},{}", format_sig(t));
        }
    }
    Ok(out)
}

fn load_costs(args: &BarycenterArgs, count: usize) -> Result<Vec<CostMatrix>, OtError> {
    if let Some(p) = &args.cost {
        return Ok(vec![io::read_cost(p)?; count]);
    }
    let dir = args.costs.as_ref().expect("clap enforces one of --cost/--costs");
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| OtError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.len() != count {
        return Err(OtError::InvalidInput(format!("{count} measures but {} cost files", files.len())));
    }
    files.iter().map(|p| io::read_cost(p)).collect()
}

fn barycenter(args: &BarycenterArgs, ctx: &Ctx) -> Result<String, OtError> {
    let measures = io::read_histograms(&args.measures)?;
    let costs = load_costs(args, measures.len())?;
    let weights = match &args.weights {
        Some(p) => io::read_vector(p)?,
        None => vec![1.0 / measures.len() as f64; measures.len()],
    };
    let prob = BarycenterProblem::new(measures.clone(), costs, weights)?;
    let n = prob.support_size();

    // the regularized barycenter also seeds the sharp descent
    let ibp = regularized_barycenter_ibp(&prob, args.lambda, args.tol, 100_000)?;
    let mut results: Vec<(String, Histogram)> = Vec::new();
    if args.method != Method::Regularized {
        let cfg = DescentConfig::new(args.lambda)?.with_max_iter(args.max_iter);
        let (x, trace) = barycenter_descent(&prob, &ibp, SmoothMetric::Sharp, &cfg)?;
        if trace.stalled && !trace.converged {
            ctx.note(format!(
                "warning: line search stalled after {} iterations; returning the best iterate",
                trace.iterations
            ));
        }
        if let Some(p) = &args.trace {
            write_trace(p, &trace)?;
        }
        results.push(("sharp".into(), x.into_histogram()));
    }
    if args.method != Method::Sharp {
        results.push(("regularized".into(), ibp));
    }

    if let Some(p) = &args.svg {
        let mut series: Vec<Array1<f64>> = measures.iter().map(|m| m.weights().clone()).collect();
        let mut labels: Vec<String> = (0..measures.len()).map(|i| format!("measure {}", i + 1)).collect();
        if measures.iter().any(|m| m.len() != n) {
            return Err(OtError::InvalidInput("--svg needs measures on the barycenter support".into()));
        }
        for (name, h) in &results {
            series.push(h.weights().clone());
            labels.push(format!("{name} barycenter"));
        }
        emit_svg_bars(&series, &labels, p)?;
    }
    let hists: Vec<&Array1<f64>> = results.iter().map(|(_, h)| h.weights()).collect();
    emit(args.out.as_deref(), io::csv_string(hists))
}

fn write_trace(path: &Path, trace: &SolverTrace) -> Result<(), OtError> {
    let mut s = String::from("iteration,objective,step\n");
    for (k, f) in trace.objectives.iter().enumerate() {
        let step = if k == 0 { String::new() } else { format_sig(trace.step_sizes[k - 1]) };
        let _ = writeln!(s, "{k},{},{step}", format_sig(*f));
    }
    fs::write(path, s).map_err(|e| OtError::Io(format!("{}: {e}", path.display())))
}

fn fit_cmd(args: &FitArgs, ctx: &Ctx) -> Result<String, OtError> {
    let inputs = io::read_matrix(&args.inputs)?;
    let outputs = io::read_histograms(&args.outputs)?;
    let train = TrainingSet::from_histograms(inputs, &outputs)?;
    let (sigma, gamma) = if args.sigma_grid.is_some() || args.gamma_grid.is_some() {
        let sigmas = args.sigma_grid.clone().or(args.sigma.map(|s| vec![s])).unwrap_or_default();
        let gammas = args.gamma_grid.clone().or(args.gamma.map(|g| vec![g])).unwrap_or_default();
        let seed = ctx.seed("cross-validation folds")?;
        let (Some(cost), Some(lambda)) = (&args.cost, args.lambda) else {
            return Err(OtError::InvalidParameter("cross-validation needs --cost and --lambda".into()));
        };
        let cost = io::read_cost(cost)?;
        let cfg = DescentConfig::new(lambda)?;
        let cv = cross_validate(&train, &sigmas, &gammas, args.folds, args.metric.into(), &cost, &cfg, seed)?;
        ctx.note(format!("selected sigma = {}, gamma = {}", format_sig(cv.sigma), format_sig(cv.gamma)));
        (cv.sigma, cv.gamma)
    } else {
        (args.sigma.expect("clap requires --sigma"), args.gamma.expect("clap requires --gamma"))
    };
    let model = fit(&train, sigma, gamma)?;
    io::save_model(&args.model, &model, train.outputs())?;
    Ok(String::new())
}

fn predict_cmd(args: &PredictArgs, ctx: &Ctx) -> Result<String, OtError> {
    let file = io::load_model(&args.model)?;
    let queries = io::read_matrix(&args.inputs)?;
    let cost = io::read_cost(&args.cost)?;
    let cfg = DescentConfig::new(args.lambda)?.with_max_iter(args.max_iter);
    let mut rows = Vec::new();
    for (k, x) in queries.axis_iter(Axis(0)).enumerate() {
        let p = predict(&file.model, x, &file.outputs, args.metric.into(), &cost, &cfg)?;
        if p.stalled {
            ctx.note(format!("warning: prediction {k} stalled; returning the best iterate"));
        }
        rows.push(p.histogram.weights().clone());
    }
    emit(args.out.as_deref(), io::csv_string(rows.iter()))
}

fn rate_study(args: &RateArgs, ctx: &Ctx) -> Result<String, OtError> {
    let (a, b, cost) = match (&args.a, &args.b, &args.cost) {
        (Some(a), Some(b), Some(c)) => (io::read_histogram(a)?, io::read_histogram(b)?, io::read_cost(c)?),
        _ => seeded_instance(5, ctx.seed("generating the rate-study instance")?)?,
    };
    let template = SinkhornConfig::new(1.0)?.with_tol(args.tol).with_max_iter(args.max_iter);
    let rows = run_rate_study(&a, &b, &cost, &args.lambdas, &template)?;
    for r in rows.iter().filter(|r| r.failed()) {
        ctx.note(format!("lambda = {}: {}", format_sig(r.lambda), r.error.as_deref().unwrap_or("")));
    }
    emit(args.out.as_deref(), rate_study_csv(&rows))
}

fn demo(args: &DemoArgs, ctx: &Ctx) -> Result<String, OtError> {
    let grid = grid_cost_1d(21, 21)?;
    let col = |j: usize| CostMatrix::new(grid.entries().column(j).to_owned().insert_axis(Axis(1)));
    let (cz, cy) = (col(0)?, col(20)?);
    let one = Histogram::new(Array1::ones(1))?;
    let prob = BarycenterProblem::uniform(vec![one.clone(), one], vec![cz.clone(), cy.clone()])?;

    let mut out = String::from("lambda,sharp_mass_at_10,regularized_mass_at_10,ibp_vs_closed_form_l1\n");
    let mut panels = Vec::new();
    for &lambda in &args.lambdas {
        let cfg = DescentConfig::new(lambda)?;
        let (sharp, trace) = barycenter_descent(&prob, &Histogram::uniform(21)?, SmoothMetric::Sharp, &cfg)?;
        if trace.stalled && !trace.converged {
            ctx.note(format!("warning: sharp descent stalled at lambda = {lambda}"));
        }
        let closed = delta_pair_regularized_closed_form(cz.column(0).view(), cy.column(0).view(), lambda)?;
        let ibp = regularized_barycenter_ibp(&prob, lambda, 1e-12, 100_000)?;
        let _ = writeln!(
            out,
            "{},{},{},{}",
            format_sig(lambda),
            format_sig(sharp.weights()[10]),
            format_sig(ibp.weights()[10]),
            format_sig(ibp.l1_distance(&closed))
        );
        panels.push(
            Panel::new(format!("lambda = {}", format_sig(lambda)))
                .with_series("sharp", sharp.weights().clone())
                .with_series("regularized", ibp.weights().clone()),
        );
    }
    emit_svg_panels(&panels, &args.svg)?;
    ctx.note(format!("figure written to {}", args.svg.display()));
    Ok(out)
}
