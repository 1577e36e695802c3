//! Batch pipeline over the reduction library: generate synthetic chain
//! models, sample transfer functions, reduce by any of the three methods, and
//! compare reduced models against the full one.
//!
//! Exit codes: 0 success, 2 usage/validation, 3 numeric failure in
//! sampling/evaluation, 4 reduction failure.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sobt_core::evaluation::{h2_error, hinf_error_grid, simulate_time, InputSignal};
use sobt_core::databt::databt_reduce;
use sobt_core::model::{load_model, load_reduced, save_model, save_reduced};
use sobt_core::sampling::{export_samples, import_samples};
use sobt_core::sylvester::krydatabt_reduce;
use sobt_core::{
    bt_reduce, lyapunov_velocity_gramians, make_offset_pair, sample_model, synth_uniform_chain,
    Error, ReducedModel, SecondOrderSystem,
};

#[derive(Parser)]
#[command(name = "sobt", about = "Structure-preserving balanced truncation of second-order systems", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic mass-spring-damper chain model
    GenModel(GenModelArgs),
    /// Sample the transfer function of a model on offset-disjoint P/Q rules
    Sample(SampleArgs),
    /// Reduce a model (bt) or a sample set (data-bt, krydata-bt)
    Reduce(ReduceArgs),
    /// Compare reduced models against the full model and export plot data
    Compare(CompareArgs),
}

#[derive(clap::Args)]
struct GenModelArgs {
    /// Optional `key = value` config file; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Chain length
    #[arg(long)]
    n: Option<usize>,
    /// Rayleigh coefficient on the mass matrix
    #[arg(long)]
    alpha: Option<f64>,
    /// Rayleigh coefficient on the stiffness matrix
    #[arg(long)]
    beta: Option<f64>,
    /// Relative jitter on masses and springs
    #[arg(long)]
    jitter: Option<f64>,
    /// Jitter seed
    #[arg(long)]
    seed: Option<u64>,
    /// Input node index
    #[arg(long)]
    input_node: Option<usize>,
    /// Output node index (defaults to the last node)
    #[arg(long)]
    output_node: Option<usize>,
    /// Output model file
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(clap::Args)]
struct SampleArgs {
    /// Model file to sample
    model: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Lower end of the frequency band
    #[arg(long)]
    lo: Option<f64>,
    /// Upper end of the frequency band
    #[arg(long)]
    hi: Option<f64>,
    /// Positive nodes per side
    #[arg(long)]
    nu: Option<usize>,
    /// Output sample file
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Bt,
    DataBt,
    KrydataBt,
}

#[derive(clap::Args)]
struct ReduceArgs {
    /// Model file (bt) or sample file (data-bt, krydata-bt)
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reduction method
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Reduced order; data-driven methods pick the singular-value
    /// tail cutoff when omitted
    #[arg(short)]
    r: Option<usize>,
    /// Extended Krylov iterations (krydata-bt only)
    #[arg(short)]
    m: Option<usize>,
    /// Output reduced-model file
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(clap::Args)]
struct CompareArgs {
    /// Full model file
    model: PathBuf,
    /// Reduced model files
    reduced: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Lower end of the sweep band
    #[arg(long)]
    lo: Option<f64>,
    /// Upper end of the sweep band
    #[arg(long)]
    hi: Option<f64>,
    /// Sweep grid size
    #[arg(long)]
    count: Option<usize>,
    /// Input decay rate in u(t) = exp(-a t) sin(b t)
    #[arg(long)]
    a: Option<f64>,
    /// Input frequency in u(t) = exp(-a t) sin(b t)
    #[arg(long)]
    b: Option<f64>,
    /// Simulation horizon
    #[arg(long)]
    t_end: Option<f64>,
    /// Simulation steps
    #[arg(long)]
    steps: Option<usize>,
    /// Directory for the exported plot data
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// `key = value` lines with `#` comments; unknown keys are rejected so typos
/// do not silently fall back to defaults.
struct Config(HashMap<String, String>);

impl Config {
    fn load(path: Option<&Path>, known: &[&str]) -> Result<Config, CliError> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (i, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    CliError::usage(format!("config line {}: expected `key = value`", i + 1))
                })?;
                let key = key.trim().to_string();
                if !known.contains(&key.as_str()) {
                    return Err(CliError::usage(format!(
                        "config line {}: unknown key `{key}`",
                        i + 1
                    )));
                }
                map.insert(key, value.trim().to_string());
            }
        }
        Ok(Config(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                CliError::usage(format!("config key `{key}`: bad value `{raw}`"))
            }),
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        let code = match &e {
            Error::RankDeficient { .. } | Error::Breakdown { .. } => 4,
            Error::SingularPencil { .. }
            | Error::UnstableSystem { .. }
            | Error::IndefiniteGramian { .. }
            | Error::SpectraOverlap { .. }
            | Error::DegenerateDenominator { .. }
            | Error::SingularBlock { .. } => 3,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenModel(args) => cmd_gen_model(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Reduce(args) => cmd_reduce(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn nonnegative(value: f64, flag: &str) -> Result<f64, CliError> {
    if value < 0.0 || !value.is_finite() {
        return Err(CliError::usage(format!(
            "invalid {flag}: must be a nonnegative finite number, got {value}"
        )));
    }
    Ok(value)
}

fn cmd_gen_model(args: GenModelArgs) -> Result<(), CliError> {
    let cfg = Config::load(
        args.config.as_deref(),
        &["n", "alpha", "beta", "jitter", "seed", "input_node", "output_node"],
    )?;
    let n = args.n.or(cfg.get("n")?).unwrap_or(50);
    let alpha = nonnegative(args.alpha.or(cfg.get("alpha")?).unwrap_or(0.05), "--alpha")?;
    let beta = nonnegative(args.beta.or(cfg.get("beta")?).unwrap_or(0.05), "--beta")?;
    let jitter = nonnegative(args.jitter.or(cfg.get("jitter")?).unwrap_or(0.1), "--jitter")?;
    let seed = args.seed.or(cfg.get("seed")?).unwrap_or(0);
    let input_node = args.input_node.or(cfg.get("input_node")?).unwrap_or(0);
    let output_node = args
        .output_node
        .or(cfg.get("output_node")?)
        .unwrap_or(n.saturating_sub(1));
    let sys = synth_uniform_chain(n, alpha, beta, jitter, seed, input_node, output_node)?;
    save_model(&sys, &args.output)?;
    println!(
        "model: n={} alpha={alpha} beta={beta} stable={}",
        sys.n,
        sys.is_stable()
    );
    Ok(())
}

fn load_model_checked(path: &Path) -> Result<SecondOrderSystem, CliError> {
    if !path.exists() {
        return Err(CliError::usage(format!(
            "model file {} does not exist",
            path.display()
        )));
    }
    Ok(load_model(path)?)
}

fn cmd_sample(args: SampleArgs) -> Result<(), CliError> {
    let cfg = Config::load(args.config.as_deref(), &["lo", "hi", "nu"])?;
    let lo = args.lo.or(cfg.get("lo")?).unwrap_or(1e-2);
    let hi = args.hi.or(cfg.get("hi")?).unwrap_or(1e4);
    let nu = args.nu.or(cfg.get("nu")?).unwrap_or(500);
    let sys = load_model_checked(&args.model)?;
    let (p_rule, q_rule) = make_offset_pair(lo, hi, nu)?;
    let samples = sample_model(&sys, &p_rule, &q_rule)?;
    export_samples(&samples, &args.output)?;
    println!("samples: nu_p={nu} nu_q={nu} band=[{lo:e}, {hi:e}]");
    Ok(())
}

/// First header token of a library text file, used to give targeted
/// diagnostics when a command receives the wrong file kind.
fn file_kind(path: &Path) -> Result<String, CliError> {
    if !path.exists() {
        return Err(CliError::usage(format!(
            "input file {} does not exist",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    Ok(text
        .lines()
        .next()
        .unwrap_or("")
        .split_whitespace()
        .next()
        .unwrap_or("")
        .to_string())
}

fn cmd_reduce(args: ReduceArgs) -> Result<(), CliError> {
    let cfg = Config::load(args.config.as_deref(), &["method", "r", "m"])?;
    let method = match args.method {
        Some(m) => m,
        None => match cfg.get::<String>("method")?.as_deref() {
            Some("bt") => Method::Bt,
            Some("data-bt") => Method::DataBt,
            Some("krydata-bt") => Method::KrydataBt,
            Some(other) => {
                return Err(CliError::usage(format!("config key `method`: unknown method `{other}`")))
            }
            None => return Err(CliError::usage("missing --method (bt, data-bt, krydata-bt)")),
        },
    };
    let r = match args.r {
        Some(r) => Some(r),
        None => cfg.get("r")?,
    };
    let m = args.m.or(cfg.get("m")?).unwrap_or(30);
    let kind = file_kind(&args.input)?;
    let reduced = match method {
        Method::Bt => {
            if kind != "so-model" {
                return Err(CliError::usage(
                    "the intrusive method needs a model file, not a sample file",
                ));
            }
            let r = r.ok_or_else(|| CliError::usage("--method bt requires -r"))?;
            let sys = load_model(&args.input)?;
            let factors = lyapunov_velocity_gramians(&sys)?;
            bt_reduce(&sys, &factors, r)?
        }
        Method::DataBt | Method::KrydataBt => {
            if kind != "so-samples" {
                return Err(CliError::usage(
                    "data-driven methods need a sample file, not a model file",
                ));
            }
            let samples = import_samples(&args.input)?;
            match method {
                Method::DataBt => databt_reduce(&samples, r)?,
                _ => krydatabt_reduce(&samples, r, m)?,
            }
        }
    };
    save_reduced(&reduced, &args.output)?;
    print_reduction_summary(&reduced);
    Ok(())
}

fn print_reduction_summary(reduced: &ReducedModel) {
    let p = &reduced.provenance;
    let mut line = format!("reduced: method={} r={}", p.method.tag(), p.rank);
    let tail: Vec<String> = p
        .singular_values
        .iter()
        .skip(p.rank.saturating_sub(1))
        .take(4)
        .map(|v| format!("{v:.3e}"))
        .collect();
    write!(line, " sv_tail=[{}]", tail.join(", ")).unwrap();
    if let Some(res) = p.residual {
        write!(line, " residual={res:.3e}").unwrap();
    }
    println!("{line}");
    for w in &reduced.warnings {
        println!("warning: {w}");
    }
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let cfg = Config::load(
        args.config.as_deref(),
        &["lo", "hi", "count", "a", "b", "t_end", "steps", "out_dir"],
    )?;
    let lo = args.lo.or(cfg.get("lo")?).unwrap_or(1e-2);
    let hi = args.hi.or(cfg.get("hi")?).unwrap_or(1e4);
    let count = args.count.or(cfg.get("count")?).unwrap_or(200);
    let a = args.a.or(cfg.get("a")?).unwrap_or(1.0);
    let b = args.b.or(cfg.get("b")?).unwrap_or(1.0);
    let t_end = args.t_end.or(cfg.get("t_end")?).unwrap_or(20.0);
    let steps = args.steps.or(cfg.get("steps")?).unwrap_or(2000);
    let out_dir = args
        .out_dir
        .or(cfg.get::<PathBuf>("out_dir")?)
        .unwrap_or_else(|| PathBuf::from("."));
    if args.reduced.is_empty() {
        return Err(CliError::usage("compare needs at least one reduced model"));
    }
    let sys = load_model_checked(&args.model)?;
    let input = InputSignal { a, b };
    let full_response = simulate_time(&sys, input, t_end, steps)?;

    println!("{:<20} {:>12} {:>12}", "method", "hinf_rel", "h2_rel");
    for path in &args.reduced {
        let reduced = load_reduced(path)?;
        let report = hinf_error_grid(&sys, &reduced.system, lo, hi, count)?;
        let h2 = h2_error(&sys, &reduced.system)?;
        let tag = reduced.provenance.method.tag();
        println!("{tag:<20} {:>12.3e} {:>12.3e}", report.hinf_rel, h2.rel);
        if h2.flagged {
            println!("warning: {tag}: H2 estimators disagree by more than 10 percent");
        }

        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "reduced".into());
        report.export(&out_dir.join(format!("{stem}_bode.dat")))?;
        let response = simulate_time(&reduced.system, input, t_end, steps)?;
        let abs_err: Vec<f64> = full_response
            .outputs
            .iter()
            .zip(response.outputs.iter())
            .map(|(y, yr)| (y - yr).abs())
            .collect();
        sobt_core::evaluation::export_plot_data(
            &out_dir.join(format!("{stem}_time.dat")),
            &["time", "y_full", "y_reduced", "abs_err"],
            &[
                &full_response.times,
                &full_response.outputs,
                &response.outputs,
                &abs_err,
            ],
        )?;
    }
    println!("input: u(t) = exp(-{a} t) sin({b} t), horizon {t_end}, {steps} steps");
    Ok(())
}
