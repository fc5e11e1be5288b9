use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scpkb::classify::{cross_validate, predict_all, train};
use scpkb::harness::bench::{pkb_over_sc, time_algorithms};
use scpkb::harness::{init_threads, run_experiment, ExperimentSpec, FamilySelection, Preset};
use scpkb::io::{default_headers, load_directional_csv, read_numeric_csv, write_numeric_csv, write_records_csv, LoadOptions, Loaded};
use scpkb::mixtures::{adjusted_rand_index, select_k, Criterion, EmOptions};
use scpkb::mle::{fit, Algorithm, FitOptions};
use scpkb::inference::lrt_with_bootstrap;
use scpkb::regression::{fit_metric, fit_regression, predict, DesignMatrix};
use scpkb::sampling::sample;
use scpkb::{DirectionalSample, Error, Family, RngStream, SphericalParams, UnitVector};

/// Spherical Cauchy and Poisson kernel-based distributions on the sphere.
#[derive(Parser, Debug)]
#[command(name = "scpkb", version)]
struct Cli {
    /// Worker threads; defaults to SCPKB_THREADS, then to the core count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a sample from one law.
    Simulate(SimulateArgs),
    /// Maximum-likelihood fit of one law.
    Fit(FitArgs),
    /// Likelihood-ratio test of a common location.
    Lrt(LrtArgs),
    /// Spherical regression on a design matrix.
    Regress(RegressArgs),
    /// Discriminant analysis with optional cross-validation.
    Classify(ClassifyArgs),
    /// Mixture clustering with BIC/ICL selection of K.
    Cluster(ClusterArgs),
    /// Run a simulation preset.
    Experiment(ExperimentArgs),
    /// Time the fitting algorithms on simulated data.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Normalize rows instead of requiring unit rows.
    #[arg(long)]
    project: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    n: usize,
    /// Sphere dimension; the ambient dimension is d + 1.
    #[arg(long, required_unless_present = "direction")]
    d: Option<usize>,
    /// Comma-separated location direction; normalized. Defaults to e1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    direction: Option<Vec<f64>>,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "nr")]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[command(flatten)]
    input_opts: InputArgs,
}

#[derive(Args, Debug)]
struct LrtArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    sample1: PathBuf,
    #[arg(long)]
    sample2: PathBuf,
    /// Parametric bootstrap replicates; 0 skips the bootstrap.
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    input_opts: InputArgs,
}

#[derive(Args, Debug)]
struct RegressArgs {
    #[arg(long)]
    family: Family,
    /// Directional responses, one per row.
    #[arg(long)]
    response: PathBuf,
    /// Covariates, one row per response; no design means intercept only.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Use the design columns as given, without a leading intercept.
    #[arg(long)]
    no_intercept: bool,
    /// Fitted directions CSV.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    input_opts: InputArgs,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    family: Family,
    /// Labelled training CSV.
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Unlabelled rows to classify.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Predicted labels CSV for --test.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    cv_folds: usize,
    /// Cross-validation repeats; 0 skips cross-validation.
    #[arg(long, default_value_t = 0)]
    cv_repeats: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    input_opts: InputArgs,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 10)]
    kmax: usize,
    #[arg(long, default_value = "bic")]
    criterion: Criterion,
    #[arg(long, default_value_t = 10)]
    n_starts: usize,
    /// Ground-truth column; adds the ARI of every K to the table.
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// MAP assignments CSV (1-based clusters) for the chosen K.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    input_opts: InputArgs,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Preset name; may also come from the config file.
    #[arg(long)]
    preset: Option<Preset>,
    /// key = value file with grid and protocol settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// sc, pkb or both.
    #[arg(long)]
    family: Option<FamilySelection>,
    /// Report CSV.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Data-generating family.
    #[arg(long)]
    family: Family,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0.8)]
    rho: f64,
    /// Timed repetitions; the median is reported.
    #[arg(long, default_value_t = 7)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

type CliResult = Result<String, Failure>;

fn load(path: &Path, project: bool, label_column: Option<&str>) -> Result<Loaded, Error> {
    load_directional_csv(
        path,
        &LoadOptions {
            project,
            label_column: label_column.map(str::to_string),
        },
    )
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn fmt_dir(p: &SphericalParams) -> String {
    p.direction().map_or_else(|| "undefined (uniform)".to_string(), |m| fmt_vec(m.as_slice()))
}

fn write_out(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<(), Error>) -> Result<(), Error> {
    match path {
        Some(p) => f(&mut File::create(p)?),
        None => f(&mut io::stdout().lock()),
    }
}

fn simulate(a: SimulateArgs) -> CliResult {
    let m = match (&a.direction, a.d) {
        (Some(dir), d) => {
            if d.is_some_and(|d| d + 1 != dir.len()) {
                return Err(Failure::Usage(format!("--direction has {} coordinates but --d needs {}", dir.len(), d.unwrap_or(0) + 1)));
            }
            UnitVector::project(dir.clone())?
        }
        (None, Some(d)) => {
            if d == 0 {
                return Err(Failure::Usage("--d must be at least 1".into()));
            }
            UnitVector::basis(d + 1, 0)
        }
        (None, None) => return Err(Failure::Usage("give --d or --direction".into())),
    };
    let params = SphericalParams::from_direction(a.family, &m, a.rho)?;
    let y = sample(&params, a.n, &mut RngStream::new(a.seed, 0))?;
    write_out(a.output.as_deref(), |w| write_numeric_csv(w, &default_headers("y", y.dim()), y.rows()))?;
    Ok(match a.output {
        Some(p) => format!("wrote {} rows to {}\n", y.n(), p.display()),
        None => String::new(),
    })
}

fn fit_cmd(a: FitArgs) -> CliResult {
    let y = load(&a.input, a.input_opts.project, None)?.into_sample();
    let r = fit(
        &y,
        a.family,
        a.algorithm,
        FitOptions {
            tol: a.tol,
            max_iter: a.max_iter,
        },
    )?;
    let mut out = String::new();
    let _ = writeln!(out, "family      {}", a.family);
    let _ = writeln!(out, "algorithm   {}", r.algorithm);
    let _ = writeln!(out, "n           {}", y.n());
    let _ = writeln!(out, "m_hat       {}", fmt_dir(&r.params));
    let _ = writeln!(out, "rho_hat     {:.6}", r.params.rho());
    let _ = writeln!(out, "mu_hat      {}", fmt_vec(r.params.mu()));
    let _ = writeln!(out, "loglik      {:.6}", r.loglik);
    let _ = writeln!(out, "iterations  {}", r.iterations);
    let _ = writeln!(out, "converged   {}", r.converged);
    if r.fallback_steps > 0 {
        let _ = writeln!(out, "fallback    {} damped steps", r.fallback_steps);
    }
    Ok(out)
}

fn lrt(a: LrtArgs) -> CliResult {
    let s1 = load(&a.sample1, a.input_opts.project, None)?.into_sample();
    let s2 = load(&a.sample2, a.input_opts.project, None)?.into_sample();
    let t = lrt_with_bootstrap(&s1, &s2, a.family, a.bootstrap, &RngStream::new(a.seed, 0))?;
    let mut out = String::new();
    let _ = writeln!(out, "family        {}", t.family);
    let _ = writeln!(out, "n1, n2        {}, {}", s1.n(), s2.n());
    let _ = writeln!(out, "lambda        {:.6}", t.lambda);
    let _ = writeln!(out, "df            {}", t.df);
    let _ = writeln!(out, "p_asymptotic  {:.6}", t.p_asymptotic);
    match &t.p_bootstrap {
        Some(b) => {
            let _ = writeln!(out, "p_bootstrap   {:.6}  ({} replicates, {} dropped)", b.p_value, b.replicates, b.dropped);
            if b.warning {
                let _ = writeln!(out, "warning       more than 5% of bootstrap replicates failed");
            }
        }
        None => {
            let _ = writeln!(out, "p_bootstrap   not computed (use --bootstrap B)");
        }
    }
    let _ = writeln!(out, "h0 m          {}", fmt_vec(t.h0_fit.m.as_slice()));
    let _ = writeln!(out, "h0 rho1, rho2 {:.6}, {:.6}", t.h0_fit.rho1, t.h0_fit.rho2);
    for (i, f) in [&t.h1_fit.0, &t.h1_fit.1].into_iter().enumerate() {
        let _ = writeln!(
            out,
            "h1 sample {}    m {}  rho {:.6}",
            i + 1,
            fmt_dir(&f.params),
            f.params.rho()
        );
    }
    Ok(out)
}

fn regress(a: RegressArgs) -> CliResult {
    let y = load(&a.response, a.input_opts.project, None)?.into_sample();
    let (x, names) = match &a.design {
        Some(p) => {
            let t = read_numeric_csv(p, None)?;
            if a.no_intercept {
                (DesignMatrix::from_rows(t.rows)?, t.headers)
            } else {
                let mut names = vec!["(intercept)".to_string()];
                names.extend(t.headers);
                (DesignMatrix::with_intercept(t.rows)?, names)
            }
        }
        None if a.no_intercept => return Err(Failure::Usage("--no-intercept needs --design".into())),
        None => (DesignMatrix::intercept_only(y.n())?, vec!["(intercept)".to_string()]),
    };
    let model = fit_regression(&y, &x, a.family, FitOptions::default())?;
    let fitted = predict(&model, &x)?;
    let metric = fit_metric(&y, &fitted)?;
    let mut out = String::new();
    let _ = writeln!(out, "family     {}", a.family);
    let _ = writeln!(out, "n, p, d+1  {}, {}, {}", model.n, model.p, model.dim);
    let _ = writeln!(out, "optimizer  {:?}", model.optimizer);
    let _ = writeln!(out, "converged  {} ({} iterations)", model.converged, model.iterations);
    let _ = writeln!(out, "loglik     {:.6}", model.loglik);
    let _ = writeln!(out, "fit        {metric:.6}");
    let _ = writeln!(out, "coefficients (rows: covariates, columns: response coordinates), standard errors in brackets");
    let w = names.iter().map(String::len).max().unwrap_or(0);
    for (j, name) in names.iter().enumerate() {
        let cells: Vec<String> = (0..model.dim)
            .map(|k| format!("{:>10.5} [{:.5}]", model.coef(j, k), model.se[k * model.p + j]))
            .collect();
        let _ = writeln!(out, "  {name:<w$}  {}", cells.join("  "));
    }
    if let Some(p) = &a.output {
        let rows: Vec<Vec<f64>> = fitted.rows.iter().map(|u| u.as_slice().to_vec()).collect();
        write_numeric_csv(File::create(p)?, &default_headers("yhat", model.dim), &rows)?;
        let _ = writeln!(out, "wrote fitted directions to {}", p.display());
    }
    Ok(out)
}

fn classify(a: ClassifyArgs) -> CliResult {
    let Loaded::Labeled(data) = load(&a.train, a.input_opts.project, Some(&a.label_column))? else {
        unreachable!("a label column was requested");
    };
    let clf = train(&data, a.family)?;
    let mut out = String::new();
    let _ = writeln!(out, "family  {}", a.family);
    let _ = writeln!(out, "groups  {}", data.groups);
    for (g, p) in clf.group_params.iter().enumerate() {
        let _ = writeln!(
            out,
            "  {:<10} n {:<6} m {}  rho {:.6}",
            data.label_names[g],
            data.group_sizes()[g],
            fmt_dir(p),
            p.rho()
        );
    }
    if a.cv_repeats > 0 {
        let cv = cross_validate(&data, a.family, a.cv_folds, a.cv_repeats, &RngStream::new(a.seed, 0))?;
        let _ = writeln!(
            out,
            "cv      {}-fold x {}: mean accuracy {:.6}, median {:.6}, skipped folds {}",
            a.cv_folds, a.cv_repeats, cv.mean, cv.median, cv.skipped_folds
        );
    }
    if let Some(test) = &a.test {
        let y = load(test, a.input_opts.project, None)?.into_sample();
        let pred = predict_all(&clf, &y)?;
        let records: Vec<Vec<String>> = pred
            .iter()
            .enumerate()
            .map(|(i, &g)| vec![(i + 1).to_string(), data.label_names[g].clone()])
            .collect();
        write_out(a.output.as_deref(), |w| write_records_csv(w, &["row", "predicted"], &records))?;
        let _ = writeln!(out, "predicted {} rows", y.n());
    }
    Ok(out)
}

fn cluster(a: ClusterArgs) -> CliResult {
    if a.kmax == 0 {
        return Err(Failure::Usage("--kmax must be at least 1".into()));
    }
    let loaded = load(&a.input, a.input_opts.project, a.label_column.as_deref())?;
    let truth = match &loaded {
        Loaded::Labeled(l) => Some(l.labels.clone()),
        Loaded::Sample(_) => None,
    };
    let y: DirectionalSample = loaded.into_sample();
    let opts = EmOptions {
        n_starts: a.n_starts,
        ..EmOptions::default()
    };
    let sel = select_k(&y, a.family, a.kmax, opts, &RngStream::new(a.seed, 0))?;
    let mut out = String::new();
    let _ = writeln!(out, "family  {}   n {}   criterion {:?}", a.family, y.n(), a.criterion);
    let _ = write!(out, "{:>3}  {:>14}  {:>14}  {:>14}  {:>6}", "K", "loglik", "BIC", "ICL", "iters");
    if truth.is_some() {
        let _ = write!(out, "  {:>8}", "ARI");
    }
    out.push('\n');
    for f in &sel.fits {
        match &f.model {
            Some(m) => {
                let _ = write!(out, "{:>3}  {:>14.4}  {:>14.4}  {:>14.4}  {:>6}", f.k, m.loglik, m.bic, m.icl, m.em_iterations);
                if let Some(t) = &truth {
                    let _ = write!(out, "  {:>8.4}", adjusted_rand_index(&m.map_assignments(), t)?);
                }
                out.push('\n');
            }
            None => {
                let _ = writeln!(out, "{:>3}  failed: {}", f.k, f.error.as_deref().unwrap_or("unknown"));
            }
        }
    }
    let _ = writeln!(
        out,
        "chosen  BIC {}  ICL {}",
        sel.best_bic.map_or("-".into(), |k| k.to_string()),
        sel.best_icl.map_or("-".into(), |k| k.to_string())
    );
    let k = sel
        .chosen(a.criterion)
        .ok_or_else(|| Error::MixtureFit("no K could be fitted".into()))?;
    let model = sel.model(k).expect("chosen K has a model");
    for (j, (w, c)) in model.weights.iter().zip(&model.components).enumerate() {
        let _ = writeln!(out, "  component {}  weight {:.4}  m {}  rho {:.6}", j + 1, w, fmt_dir(c), c.rho());
    }
    if let Some(p) = &a.output {
        let records: Vec<Vec<String>> = model
            .map_assignments()
            .iter()
            .enumerate()
            .map(|(i, &c)| vec![(i + 1).to_string(), (c + 1).to_string()])
            .collect();
        write_records_csv(File::create(p)?, &["row", "cluster"], &records)?;
        let _ = writeln!(out, "wrote MAP assignments for K={k} to {}", p.display());
    }
    Ok(out)
}

fn experiment(a: ExperimentArgs) -> CliResult {
    let mut spec = match (&a.config, a.preset) {
        (Some(path), preset) => ExperimentSpec::from_config_file(path, preset)?,
        (None, Some(p)) => ExperimentSpec::new(p),
        (None, None) => return Err(Failure::Usage("give --preset or --config".into())),
    };
    if let Some(p) = a.preset {
        if p != spec.preset {
            return Err(Failure::Usage(format!("--preset {p} conflicts with the config preset {}", spec.preset)));
        }
    }
    if let Some(r) = a.replicates {
        spec.replicates = r;
    }
    if let Some(s) = a.seed {
        spec.base_seed = s;
    }
    if let Some(f) = a.family {
        spec.family = f;
    }
    let table = run_experiment(&spec)?;
    if let Some(p) = &a.output {
        table.write_csv(File::create(p)?)?;
    }
    Ok(table.to_text())
}

fn bench(a: BenchArgs) -> CliResult {
    if a.d == 0 || a.n < 2 {
        return Err(Failure::Usage("--d must be >= 1 and --n >= 2".into()));
    }
    let params = SphericalParams::from_direction(a.family, &UnitVector::basis(a.d + 1, 0), a.rho)?;
    let y = sample(&params, a.n, &mut RngStream::new(a.seed, 0))?;
    let mut out = String::new();
    let _ = writeln!(out, "data {}  n {}  d {}  rho {}  median of {} runs", a.family, a.n, a.d, a.rho, a.reps);
    for family in Family::ALL {
        let t = time_algorithms(&y, family, a.reps)?;
        let _ = writeln!(
            out,
            "  {} model: NR {:.3} ms  hybrid {:.3} ms  hybrid/NR {:.3}",
            family,
            t.nr.as_secs_f64() * 1e3,
            t.hybrid.as_secs_f64() * 1e3,
            t.hybrid_over_nr()
        );
    }
    let _ = writeln!(out, "  PKB/SC NR time {:.3}", pkb_over_sc(&y, Algorithm::Nr, a.reps)?);
    Ok(out)
}

fn dispatch(cli: Cli) -> CliResult {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Lrt(a) => lrt(a),
        Command::Regress(a) => regress(a),
        Command::Classify(a) => classify(a),
        Command::Cluster(a) => cluster(a),
        Command::Experiment(a) => experiment(a),
        Command::Bench(a) => bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
