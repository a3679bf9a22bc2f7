use std::path::Path;

use anyhow::{bail, Context, Result};
use mcdecomp_core::io::{self, Table};
use mcdecomp_core::synthetic::empirical_snr;
use mcdecomp_core::theory::oracle_study;
use mcdecomp_core::{
    bcd_cv, bcd_l1l2, bcd_objective, check_proposition, cv_select, fit_group_lasso,
    fit_single_channel, fit_single_channel_fixed, frame_matrix, generate_replication, lambda0,
    objective, run_benchmark, somp, somp_cv, BenchmarkOptions, CvSelection, Decomposition,
    FitResult, FrameSpec, GroupedDesign, MultichannelData, Proposition, SsaProblem, TheoryReport,
};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{self, ensure_finite, NumericFailure, OutDir};
use crate::{
    BenchmarkArgs, Command, Common, FitArgs, FrameArgs, ScenarioArgs, SegmentArgs, SimulateArgs,
    SolverArgs, SompArgs, TheoryArgs, TheoryCommand,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(a) => fit(a),
        Command::SingleFit(a) => single_fit(a),
        Command::Somp(a) => somp_cmd(a),
        Command::Bcd(a) => bcd(a),
        Command::Cv(a) => cv(a),
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Segment(a) => segment(a),
        Command::Frame(a) => frame(a),
        Command::Theory { check } => theory(check),
    }
}

/// 3 for numeric failures, 2 for everything else (bad input or parameters).
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<NumericFailure>().is_some() {
            return 3;
        }
        if let Some(mcdecomp_core::Error::LayoutMismatch(_)) = cause.downcast_ref() {
            return 3;
        }
    }
    2
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut c = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        c.seed = seed;
    }
    if let Some(low) = common.low {
        c.low = low;
    }
    if let Some(high) = common.high {
        c.high = high;
    }
    Ok(c)
}

fn apply_solver(c: &mut RunConfig, s: &SolverArgs) {
    let f = &mut c.fit;
    if let Some(v) = s.lambda {
        f.lambda = v;
    }
    if let Some(v) = s.folds {
        f.cv_folds = v;
    }
    if let Some(v) = s.grid_size {
        f.lambda_grid_size = v;
    }
    if let Some(v) = s.lambda_min_ratio {
        f.lambda_min_ratio = v;
    }
    if let Some(v) = s.tolerance {
        f.tolerance = v;
    }
    if let Some(v) = s.max_iterations {
        f.max_iterations = v;
    }
    if let Some(v) = s.fold_scheme {
        f.fold_scheme = v;
    }
    if let Some(v) = s.patience {
        f.cv_patience = v;
    }
}

fn apply_scenario(c: &mut RunConfig, s: &ScenarioArgs) {
    let sc = &mut c.scenario;
    if let Some(v) = s.scenario {
        sc.scenario = v;
    }
    if let Some(v) = s.snr {
        sc.snr = v;
    }
    if let Some(v) = s.channels {
        sc.channels = v;
    }
    if let Some(v) = s.n {
        sc.n = v;
    }
    if s.zero_third_channel {
        sc.zero_third_channel = true;
    }
    if let Some(v) = s.signal_mode {
        sc.signal_mode = v;
    }
}

fn design(c: &RunConfig, n: usize, channels: usize) -> Result<GroupedDesign> {
    let low = frame_matrix(&c.low.spec(n).context("low-resonance frame")?)?;
    let high = frame_matrix(&c.high.spec(n).context("high-resonance frame")?)?;
    Ok(GroupedDesign::new(&low, &high, channels)?)
}

fn read_table(path: &Path) -> Result<Table> {
    io::read_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn load(path: &Path) -> Result<MultichannelData> {
    Ok(MultichannelData::new(read_table(path)?.data)?)
}

fn column(v: &nalgebra::DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn nonzero_rows(m: &DMatrix<f64>) -> Vec<usize> {
    m.row_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().any(|v| *v != 0.0))
        .map(|(i, _)| i)
        .collect()
}

/// Writes the reconstructions and coefficients of a decomposition.
fn write_decomposition(out: &mut OutDir, dec: &Decomposition) -> Result<()> {
    out.matrix("low.csv", &dec.low, "ch")?;
    out.matrix("high.csv", &dec.high, "ch")?;
    out.matrix("fitted.csv", &dec.fitted(), "ch")?;
    out.matrix("alpha.csv", &dec.alpha, "ch")?;
    out.matrix("beta.csv", &dec.beta, "ch")?;
    Ok(())
}

#[derive(Serialize)]
struct Dimensions {
    n: usize,
    channels: usize,
    d1: usize,
    d2: usize,
}

impl Dimensions {
    fn of(d: &GroupedDesign) -> Self {
        Self {
            n: d.n(),
            channels: d.channels(),
            d1: d.d1(),
            d2: d.d2(),
        }
    }
}

#[derive(Serialize)]
struct CvCurve {
    lambdas: Vec<f64>,
    cv_error: Vec<f64>,
    index: usize,
}

impl CvCurve {
    fn of(sel: &CvSelection) -> Self {
        Self {
            lambdas: sel.lambdas.clone(),
            cv_error: sel.cv_error.clone(),
            index: sel.index,
        }
    }

    fn write(&self, out: &mut OutDir, name: &str) -> Result<()> {
        let m = DMatrix::from_fn(self.lambdas.len(), 2, |i, j| {
            if j == 0 {
                self.lambdas[i]
            } else {
                self.cv_error[i]
            }
        });
        ensure_finite(name, m.iter())?;
        io::write_csv(&out.path(name), &m, Some(&["lambda".into(), "cv_error".into()]))?;
        out.files.push(name.into());
        Ok(())
    }
}

fn convergence_warning(converged: bool, what: &str) -> Option<String> {
    if converged {
        None
    } else {
        let w = format!("{what} did not converge within the iteration limit");
        eprintln!("warning: {w}");
        Some(w)
    }
}

#[derive(Serialize)]
struct FitReport<'a> {
    command: &'static str,
    version: &'static str,
    input: String,
    #[serde(flatten)]
    dims: Dimensions,
    /// `cross-validation` or `fixed`.
    selection: &'static str,
    lambda: f64,
    converged: bool,
    iterations: usize,
    objective: f64,
    active_alpha: Vec<usize>,
    active_beta: Vec<usize>,
    cv: Option<CvCurve>,
    warning: Option<String>,
    files: Vec<String>,
    config: &'a RunConfig,
}

fn prepare(common: &Common, solver: &SolverArgs, input: &Path) -> Result<(RunConfig, MultichannelData, GroupedDesign)> {
    let mut c = base_config(common)?;
    apply_solver(&mut c, solver);
    let c = c.finish()?;
    let data = load(input)?;
    let d = design(&c, data.n(), data.channels())?;
    Ok((c, data, d))
}

fn fit(a: FitArgs) -> Result<()> {
    let (c, data, d) = prepare(&a.common, &a.solver, &a.input)?;
    let (result, curve): (FitResult, Option<CvCurve>) = if c.fit.lambda > 0.0 {
        (fit_group_lasso(&data, &d, &c.fit)?, None)
    } else {
        let sel = cv_select(&data, &d, &c.fit)?;
        let curve = CvCurve::of(&sel);
        (sel.fit, Some(curve))
    };
    ensure_finite("coefficients", result.theta.flatten().iter())?;
    let mut out = OutDir::create(&a.output)?;
    out.matrix("c_hat.csv", &column(&result.c_hat), "c")?;
    out.matrix("u_hat.csv", &result.u_hat, "u")?;
    let dec = Decomposition::from_theta(&d, &result.theta)?;
    out.matrix("fitted.csv", &dec.fitted(), "ch")?;
    out.matrix("alpha.csv", &column(&result.theta.alpha), "alpha")?;
    out.matrix("beta.csv", &result.theta.beta, "ch")?;
    if let Some(curve) = &curve {
        curve.write(&mut out, "cv.csv")?;
    }
    let report = FitReport {
        command: "fit",
        version: VERSION,
        input: a.input.display().to_string(),
        dims: Dimensions::of(&d),
        selection: if curve.is_some() { "cross-validation" } else { "fixed" },
        lambda: result.lambda,
        converged: result.converged,
        iterations: result.iterations,
        objective: objective(&data, &d, &result.theta, result.lambda)?,
        active_alpha: result.theta.active_alpha(),
        active_beta: result.theta.active_beta(),
        cv: curve,
        warning: convergence_warning(result.converged, "the group-lasso fit"),
        files: out.files.clone(),
        config: &c,
    };
    out.json("fit.json", &report)
}

#[derive(Serialize)]
struct ChannelFit {
    channel: usize,
    lambda: f64,
    converged: bool,
    iterations: usize,
    active_alpha: Vec<usize>,
    active_beta: Vec<usize>,
}

#[derive(Serialize)]
struct SingleReport<'a> {
    command: &'static str,
    version: &'static str,
    input: String,
    #[serde(flatten)]
    dims: Dimensions,
    selection: &'static str,
    channels_fit: Vec<ChannelFit>,
    warning: Option<String>,
    files: Vec<String>,
    config: &'a RunConfig,
}

fn single_fit(a: FitArgs) -> Result<()> {
    let (c, data, d) = prepare(&a.common, &a.solver, &a.input)?;
    let fixed = c.fit.lambda > 0.0;
    let fits = if fixed {
        fit_single_channel_fixed(&data, &d, &c.fit)?
    } else {
        fit_single_channel(&data, &d, &c.fit)?
    };
    let k = fits.len();
    let alpha = DMatrix::from_fn(d.d1(), k, |i, ch| fits[ch].theta.alpha[i]);
    let beta = DMatrix::from_fn(d.d2(), k, |i, ch| fits[ch].theta.beta[(i, 0)]);
    let dec = Decomposition::from_coefficients(&d, alpha, beta)?;
    let mut out = OutDir::create(&a.output)?;
    write_decomposition(&mut out, &dec)?;
    let converged = fits.iter().all(|f| f.converged);
    let report = SingleReport {
        command: "single-fit",
        version: VERSION,
        input: a.input.display().to_string(),
        dims: Dimensions::of(&d),
        selection: if fixed { "fixed" } else { "cross-validation" },
        channels_fit: fits
            .iter()
            .enumerate()
            .map(|(ch, f)| ChannelFit {
                channel: ch + 1,
                lambda: f.lambda,
                converged: f.converged,
                iterations: f.iterations,
                active_alpha: f.theta.active_alpha(),
                active_beta: f.theta.active_beta(),
            })
            .collect(),
        warning: convergence_warning(converged, "a single-channel fit"),
        files: out.files.clone(),
        config: &c,
    };
    out.json("single_fit.json", &report)
}

fn split(d: &GroupedDesign, coefficients: &DMatrix<f64>) -> Result<Decomposition> {
    let (d1, d2) = (d.d1(), d.d2());
    Ok(Decomposition::from_coefficients(
        d,
        coefficients.rows(0, d1).into_owned(),
        coefficients.rows(d1, d2).into_owned(),
    )?)
}

/// Atom indices of `[Psi Phi]` split into Psi and Phi indices.
fn split_atoms(d: &GroupedDesign, atoms: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let d1 = d.d1();
    let low = atoms.iter().copied().filter(|&i| i < d1).collect();
    let high = atoms.iter().copied().filter(|&i| i >= d1).map(|i| i - d1).collect();
    (low, high)
}

#[derive(Serialize)]
struct SompReport<'a> {
    command: &'static str,
    version: &'static str,
    input: String,
    #[serde(flatten)]
    dims: Dimensions,
    selection: &'static str,
    budget: usize,
    /// Atoms in selection order, as indices into `[Psi Phi]`.
    selected: Vec<usize>,
    selected_low: Vec<usize>,
    selected_high: Vec<usize>,
    cv_error: Option<Vec<f64>>,
    warning: Option<String>,
    files: Vec<String>,
    config: &'a RunConfig,
}

fn somp_cmd(a: SompArgs) -> Result<()> {
    let mut c = base_config(&a.common)?;
    if let Some(v) = a.max_budget {
        c.somp_max_budget = v;
    }
    if let Some(v) = a.folds {
        c.fit.cv_folds = v;
    }
    if let Some(v) = a.fold_scheme {
        c.fit.fold_scheme = v;
    }
    let c = c.finish()?;
    let data = load(&a.input)?;
    let d = design(&c, data.n(), data.channels())?;
    let problem = SsaProblem::new(data.y().clone(), d.concatenated())?;
    let (result, cv_error) = match a.budget {
        Some(t) => (somp(&problem, t)?, None),
        None => {
            let cv = somp_cv(&problem, c.somp_max_budget, &c.fit)?;
            (cv.result, Some(cv.cv_error))
        }
    };
    let dec = split(&d, &result.coefficients)?;
    let mut out = OutDir::create(&a.output)?;
    write_decomposition(&mut out, &dec)?;
    let (selected_low, selected_high) = split_atoms(&d, &result.selected);
    let warning = result.rank_deficient.then(|| {
        let w = "a selected atom was numerically dependent on earlier ones".to_string();
        eprintln!("warning: {w}");
        w
    });
    let report = SompReport {
        command: "somp",
        version: VERSION,
        input: a.input.display().to_string(),
        dims: Dimensions::of(&d),
        selection: if cv_error.is_some() { "cross-validation" } else { "fixed" },
        budget: result.selected.len(),
        selected: result.selected.clone(),
        selected_low,
        selected_high,
        cv_error,
        warning,
        files: out.files.clone(),
        config: &c,
    };
    out.json("somp.json", &report)
}

#[derive(Serialize)]
struct BcdReport<'a> {
    command: &'static str,
    version: &'static str,
    input: String,
    #[serde(flatten)]
    dims: Dimensions,
    selection: &'static str,
    /// Penalty on the `(1/2) ||S - Omega C||^2` scale.
    lambda: f64,
    converged: bool,
    iterations: usize,
    objective: f64,
    active_low: Vec<usize>,
    active_high: Vec<usize>,
    cv: Option<CvCurve>,
    warning: Option<String>,
    files: Vec<String>,
    config: &'a RunConfig,
}

fn bcd(a: FitArgs) -> Result<()> {
    let (c, data, d) = prepare(&a.common, &a.solver, &a.input)?;
    let problem = SsaProblem::new(data.y().clone(), d.concatenated())?;
    let (result, curve) = if c.fit.lambda > 0.0 {
        (bcd_l1l2(&problem, c.fit.lambda, &c.fit)?, None)
    } else {
        let cv = bcd_cv(&problem, &c.fit)?;
        let curve = CvCurve {
            lambdas: cv.lambdas,
            cv_error: cv.cv_error,
            index: cv.index,
        };
        (cv.result, Some(curve))
    };
    let dec = split(&d, &result.coefficients)?;
    let mut out = OutDir::create(&a.output)?;
    write_decomposition(&mut out, &dec)?;
    if let Some(curve) = &curve {
        curve.write(&mut out, "cv.csv")?;
    }
    let (active_low, active_high) = split_atoms(&d, &nonzero_rows(&result.coefficients));
    let report = BcdReport {
        command: "bcd",
        version: VERSION,
        input: a.input.display().to_string(),
        dims: Dimensions::of(&d),
        selection: if curve.is_some() { "cross-validation" } else { "fixed" },
        lambda: result.lambda,
        converged: result.converged,
        iterations: result.iterations,
        objective: bcd_objective(&problem, &result.coefficients, result.lambda),
        active_low,
        active_high,
        cv: curve,
        warning: convergence_warning(result.converged, "the block coordinate descent"),
        files: out.files.clone(),
        config: &c,
    };
    out.json("bcd.json", &report)
}

#[derive(Serialize)]
struct CvReport<'a> {
    command: &'static str,
    version: &'static str,
    input: String,
    #[serde(flatten)]
    dims: Dimensions,
    lambda_star: f64,
    #[serde(flatten)]
    curve: CvCurve,
    files: Vec<String>,
    config: &'a RunConfig,
}

fn cv(a: FitArgs) -> Result<()> {
    let (c, data, d) = prepare(&a.common, &a.solver, &a.input)?;
    let sel = cv_select(&data, &d, &c.fit)?;
    let curve = CvCurve::of(&sel);
    let mut out = OutDir::create(&a.output)?;
    curve.write(&mut out, "cv.csv")?;
    let report = CvReport {
        command: "cv",
        version: VERSION,
        input: a.input.display().to_string(),
        dims: Dimensions::of(&d),
        lambda_star: sel.lambda_star,
        curve,
        files: out.files.clone(),
        config: &c,
    };
    out.json("cv.json", &report)
}

#[derive(Serialize)]
struct Truth<'a> {
    command: &'static str,
    version: &'static str,
    replication: usize,
    sigma: f64,
    empirical_snr: f64,
    beta_scale: f64,
    support_alpha: &'a [usize],
    support_beta: &'a [usize],
    zero_channels: Vec<usize>,
    files: Vec<String>,
    config: &'a RunConfig,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut c = base_config(&a.common)?;
    apply_scenario(&mut c, &a.scenario);
    let c = c.finish()?;
    c.scenario.validate()?;
    let d = design(&c, c.scenario.n, c.scenario.channels)?;
    let ds = generate_replication(&c.scenario, &d, a.replication)?;
    let mut out = OutDir::create(&a.output)?;
    out.matrix("y.csv", ds.data.y(), "y")?;
    out.matrix("c_true.csv", &column(&ds.c_true), "c")?;
    out.matrix("u_true.csv", &ds.u_true, "u")?;
    out.matrix("alpha_true.csv", &column(&ds.theta0.alpha), "alpha")?;
    out.matrix("beta_true.csv", &ds.theta0.beta, "ch")?;
    let signal = ds.signal();
    let truth = Truth {
        command: "simulate",
        version: VERSION,
        replication: a.replication,
        sigma: ds.sigma,
        empirical_snr: if ds.sigma > 0.0 { empirical_snr(&signal, ds.sigma) } else { f64::INFINITY },
        beta_scale: ds.beta_scale,
        support_alpha: &ds.support_alpha,
        support_beta: &ds.support_beta,
        zero_channels: ds.zero_channels.iter().map(|k| k + 1).collect(),
        files: out.files.clone(),
        config: &c,
    };
    out.json("truth.json", &truth)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a RunConfig,
    nonconverged_fits: usize,
    files: Vec<String>,
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut c = base_config(&a.common)?;
    apply_scenario(&mut c, &a.scenario);
    apply_solver(&mut c, &a.solver);
    if let Some(v) = a.replications {
        c.scenario.replications = v;
    }
    if let Some(m) = &a.methods {
        c.methods = m.clone();
    }
    if let Some(v) = a.somp_max_budget {
        c.somp_max_budget = v;
    }
    let c = c.finish()?;
    c.scenario.validate()?;
    let options = BenchmarkOptions {
        methods: c.methods.clone(),
        fit: c.fit.clone(),
        somp_max_budget: c.somp_max_budget,
    };
    let d = design(&c, c.scenario.n, c.scenario.channels)?;
    let report = run_benchmark(&c.scenario, &options, &d)?;
    ensure_finite("benchmark summary", report.summary.iter().map(|r| &r.mean))?;
    let written = io::write_benchmark(&a.output, &report)?;
    let nonconverged = report
        .summary
        .iter()
        .filter(|r| r.indicator == "rmse" && r.channel == 1)
        .map(|r| r.nonconverged)
        .sum();
    let manifest = Manifest {
        command: "benchmark",
        version: VERSION,
        seed: c.seed,
        config: &c,
        nonconverged_fits: nonconverged,
        files: written
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
    };
    output::write_json(&a.output.join("manifest.json"), &manifest)
}

#[derive(Serialize)]
struct Window {
    index: usize,
    offset: usize,
    file: String,
}

#[derive(Serialize)]
struct SegmentIndex {
    command: &'static str,
    version: &'static str,
    input: String,
    n: usize,
    channels: usize,
    length: usize,
    stride: usize,
    windows: Vec<Window>,
}

/// Number of windows of length `length` starting every `stride` samples.
pub fn window_count(n: usize, length: usize, stride: usize) -> usize {
    (n - length) / stride + 1
}

fn segment(a: SegmentArgs) -> Result<()> {
    let table = read_table(&a.input)?;
    let (n, k) = table.data.shape();
    let stride = a.stride.unwrap_or(a.length);
    if a.length == 0 || stride == 0 {
        bail!("window length and stride must be positive");
    }
    if a.length > n {
        bail!("window length {} exceeds the {n} input rows", a.length);
    }
    let count = window_count(n, a.length, stride);
    let width = (count - 1).to_string().len().max(3);
    std::fs::create_dir_all(&a.output)
        .with_context(|| format!("cannot create {}", a.output.display()))?;
    let mut windows = Vec::with_capacity(count);
    for index in 0..count {
        let offset = index * stride;
        let file = format!("window_{index:0width$}.csv");
        let rows = table.data.rows(offset, a.length).into_owned();
        io::write_csv(&a.output.join(&file), &rows, table.header.as_deref())?;
        windows.push(Window { index, offset, file });
    }
    let index = SegmentIndex {
        command: "segment",
        version: VERSION,
        input: a.input.display().to_string(),
        n,
        channels: k,
        length: a.length,
        stride,
        windows,
    };
    output::write_json(&a.output.join("index.json"), &index)
}

#[derive(Serialize)]
struct FrameSidecar<'a> {
    command: &'static str,
    version: &'static str,
    spec: &'a FrameSpec,
    redundancy: f64,
    rows: usize,
    columns: usize,
    /// Norms of the raw frame atoms before scaling to unit norm.
    normalization: &'a [f64],
}

fn frame(a: FrameArgs) -> Result<()> {
    let crate::FrameAction::Dump = a.action;
    let spec = FrameSpec::new(a.p, a.q, a.s, a.levels, a.n)?;
    let dict = frame_matrix(&spec)?;
    ensure_finite("frame matrix", dict.matrix().iter())?;
    let Some(path) = &a.output else {
        let stdout = std::io::stdout();
        return Ok(io::write_matrix(stdout.lock(), dict.matrix(), None)?);
    };
    io::write_csv(path, dict.matrix(), None)
        .with_context(|| format!("cannot write {}", path.display()))?;
    let sidecar = FrameSidecar {
        command: "frame",
        version: VERSION,
        spec: &spec,
        redundancy: spec.redundancy(),
        rows: dict.nrows(),
        columns: dict.ncols(),
        normalization: dict.normalization(),
    };
    output::write_json(&path.with_extension("json"), &sidecar)
}

fn theory_config(args: &TheoryArgs) -> Result<RunConfig> {
    let mut c = base_config(&args.common)?;
    if let Some(x) = args.x {
        c.theory.x = x;
    }
    if let Some(s) = args.sigma {
        c.theory.sigma = s;
    }
    c.finish()
}

#[derive(Serialize)]
struct Lambda0Report {
    check: &'static str,
    version: &'static str,
    x: f64,
    sigma: f64,
    n: usize,
    channels: usize,
    d1: usize,
    d2: usize,
    lambda0_alpha: f64,
    lambda0_beta: f64,
    lambda0: f64,
}

#[derive(Serialize)]
struct PropositionReport<'a> {
    version: &'static str,
    seed: u64,
    n: usize,
    channels: usize,
    #[serde(flatten)]
    report: &'a TheoryReport,
    monte_carlo_slack: f64,
    meets_nominal: bool,
}

#[derive(Serialize)]
struct OracleReport<'a> {
    version: &'static str,
    seed: u64,
    #[serde(flatten)]
    study: &'a mcdecomp_core::OracleStudy,
    config: &'a RunConfig,
}

fn theory(check: TheoryCommand) -> Result<()> {
    match check {
        TheoryCommand::Lambda0 { args, n, channels, d1, d2 } => {
            let c = theory_config(&args)?;
            let n = n.unwrap_or(c.scenario.n);
            let k = channels.unwrap_or(c.scenario.channels);
            let d1 = match d1 {
                Some(v) => v,
                None => c.low.spec(n)?.total_count(),
            };
            let d2 = match d2 {
                Some(v) => v,
                None => c.high.spec(n)?.total_count(),
            };
            let (x, sigma) = (c.theory.x, c.theory.sigma);
            let l = lambda0(x, sigma, n, k, d1, d2)?;
            let report = Lambda0Report {
                check: "lambda0",
                version: VERSION,
                x,
                sigma,
                n,
                channels: k,
                d1,
                d2,
                lambda0_alpha: l.alpha,
                lambda0_beta: l.beta,
                lambda0: l.lambda0,
            };
            output::emit_json(args.output.as_deref(), &report)
        }
        TheoryCommand::Proposition { args, which, trials, n, channels } => {
            let mut c = theory_config(&args)?;
            if let Some(t) = trials {
                c.theory.trials = t;
            }
            let n = n.unwrap_or(c.scenario.n);
            let k = channels.unwrap_or(c.scenario.channels);
            let d = design(&c, n, k)?;
            let which = Proposition::from_index(which)?;
            let r = check_proposition(which, &d, c.theory.sigma, c.theory.x, c.theory.trials, c.seed)?;
            let report = PropositionReport {
                version: VERSION,
                seed: c.seed,
                n,
                channels: k,
                report: &r,
                monte_carlo_slack: r.monte_carlo_slack(),
                meets_nominal: r.meets_nominal(),
            };
            output::emit_json(args.output.as_deref(), &report)
        }
        TheoryCommand::Oracle { args, scenario, replications, phi_samples } => {
            let mut c = base_config(&args.common)?;
            apply_scenario(&mut c, &scenario);
            if let Some(x) = args.x {
                c.theory.x = x;
            }
            if let Some(r) = replications {
                c.scenario.replications = r;
            }
            if let Some(s) = phi_samples {
                c.theory.phi_samples = s;
            }
            let c = c.finish()?;
            if args.sigma.is_some() {
                bail!("the oracle check takes its noise level from the scenario SNR");
            }
            let d = design(&c, c.scenario.n, c.scenario.channels)?;
            let study = oracle_study(&c.scenario, &d, &c.fit, c.theory.x, c.theory.phi_samples)?;
            let report = OracleReport {
                version: VERSION,
                seed: c.seed,
                study: &study,
                config: &c,
            };
            output::emit_json(args.output.as_deref(), &report)
        }
    }
}
