//! `disckern` command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use disckern::bandwidth::log_grid;
use disckern::{
    assumption_probe, default_grid, ise_empirical, monte_carlo, naive_estimate,
    normality_experiment, normalized_estimate, select_bandwidth_with, BandwidthRule, CountSample,
    CvResult, CvVariant, KernelFamily, KernelSpec, McConfig, NumericPolicy, Pmf, Scenario,
};
use serde::Serialize;

mod ingest;

use ingest::{ingest_counts, IngestError};

#[derive(Parser)]
#[command(name = "disckern", version)]
#[command(about = "Normalized discrete-kernel estimation of count-data pmfs")]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the pmf of a sample.
    Estimate(EstimateArgs),
    /// Select the bandwidth by leave-one-out cross-validation.
    Bandwidth(BandwidthArgs),
    /// Monte Carlo estimates of C_n and the ISE for a scenario.
    Simulate(SimulateArgs),
    /// Replicate sqrt(n) (f^_n(x) - f(x)) for a scenario.
    Normality(NormalityArgs),
    /// Small-bandwidth moments of a kernel over a range of targets.
    KernelProbe(ProbeArgs),
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value = "cmp", value_parser = parse_family)]
    kernel: KernelFamily,
    /// Certified tail mass for kernel and support truncation.
    #[arg(long, default_value_t = NumericPolicy::default().eps_tail)]
    eps_tail: f64,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec, CliError> {
        let policy = NumericPolicy {
            eps_tail: self.eps_tail,
            ..NumericPolicy::default()
        };
        KernelSpec::with_policy(self.kernel, policy).map_err(CliError::from)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Write here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    grid_min: Option<f64>,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = Variant::Literal)]
    cv_variant: Variant,
}

impl GridArgs {
    fn grid(&self, family: KernelFamily) -> Result<Vec<f64>, CliError> {
        if self.grid_min.is_none() && self.grid_max.is_none() && self.grid_size.is_none() {
            return Ok(default_grid(family));
        }
        let default = default_grid(family);
        let lo = self.grid_min.unwrap_or(default[0]);
        let hi = self.grid_max.unwrap_or(default[default.len() - 1]);
        let size = self.grid_size.unwrap_or(default.len());
        if !(lo > 0.0 && hi >= lo && size > 0) {
            return Err(CliError::Usage(format!(
                "grid needs 0 < grid-min <= grid-max and grid-size > 0 (got {lo}, {hi}, {size})"
            )));
        }
        Ok(log_grid(lo, hi, size))
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Fixed bandwidth.
    #[arg(long, conflicts_with = "cv", required_unless_present = "cv")]
    h: Option<f64>,
    /// Pick the bandwidth by cross-validation.
    #[arg(long)]
    cv: bool,
    #[command(flatten)]
    grid: GridArgs,
    /// Also report the naive estimate f0 and ISE0.
    #[arg(long)]
    naive: bool,
    /// Write `x,naive,normalized` rows to this CSV file.
    #[arg(long)]
    plot_data: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct BandwidthArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, default_value = "A", value_parser = parse_scenario)]
    scenario: Scenario,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    nsim: usize,
    #[arg(long, env = "DISCKERN_SEED", default_value_t = disckern::DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, value_enum)]
    h_rule: Option<HRule>,
    /// Bandwidth for the fixed rule.
    #[arg(long)]
    h: Option<f64>,
}

impl ScenarioArgs {
    fn rule(&self, default: HRule, grid: Vec<f64>) -> Result<BandwidthRule, CliError> {
        match (self.h_rule, self.h) {
            (None, Some(h)) | (Some(HRule::Fixed), Some(h)) => Ok(BandwidthRule::Fixed { h }),
            (Some(HRule::Fixed), None) => Err(CliError::Usage("--h-rule fixed needs --h".into())),
            (Some(_), Some(_)) => Err(CliError::Usage("--h only applies to --h-rule fixed".into())),
            (rule, None) => Ok(match rule.unwrap_or(default) {
                HRule::Sqrtnlogn => BandwidthRule::SqrtNLogN,
                HRule::Cv => BandwidthRule::Cv { grid },
                HRule::Fixed => unreachable!(),
            }),
        }
    }

    fn config(&self, rule: BandwidthRule) -> Result<McConfig, CliError> {
        Ok(McConfig {
            scenario: self.scenario.clone(),
            kernel: self.kernel.spec()?,
            n: self.n,
            n_sim: self.nsim,
            bandwidth_rule: rule,
            master_seed: self.seed,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct NormalityArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Target point.
    #[arg(long, default_value_t = 6)]
    x: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    /// Targets are 0..=x-max.
    #[arg(long, default_value_t = 20)]
    x_max: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01])]
    h_values: Vec<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HRule {
    Fixed,
    Sqrtnlogn,
    Cv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Literal,
    Normalized,
}

impl From<Variant> for CvVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Literal => CvVariant::Literal,
            Variant::Normalized => CvVariant::Normalized,
        }
    }
}

fn parse_family(s: &str) -> Result<KernelFamily, String> {
    s.parse().map_err(|e: disckern::Error| e.to_string())
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: disckern::Error| e.to_string())
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Core(#[from] disckern::Error),
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

impl CliError {
    fn kind_and_code(&self) -> (&'static str, u8) {
        use disckern::Error as E;
        match self {
            CliError::Usage(_) => ("usage", 2),
            CliError::Ingest(_) => ("ingest", 3),
            CliError::Write { .. } => ("io", 6),
            CliError::Core(e) => {
                let root = match e {
                    E::Replication { source, .. } => source.as_ref(),
                    other => other,
                };
                match root {
                    E::SampleTooSmall(_) => ("cv-sample-too-small", 5),
                    E::InvalidBandwidth { .. }
                    | E::InvalidParameter(_)
                    | E::NoAdmissibleBandwidth
                    | E::ZeroTargetMass(_)
                    | E::EmptySample => ("invalid-input", 2),
                    _ => ("numeric", 4),
                }
            }
        }
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    kind: &'a str,
    exit_code: u8,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

fn report_error(
    kind: &str,
    code: u8,
    message: String,
    line: Option<usize>,
    seed: Option<u64>,
) -> ExitCode {
    let record = ErrorRecord {
        kind,
        exit_code: code,
        message,
        line,
        seed,
    };
    eprintln!("{}", serde_json::json!({ "error": record }));
    ExitCode::from(code)
}

/// Six significant digits for the human-readable summaries.
fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        let decimals = (5 - magnitude).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    }
}

fn emit(
    output: &OutputArgs,
    json: impl FnOnce() -> String,
    csv: impl FnOnce() -> String,
) -> Result<(), CliError> {
    let mut text = match output.format {
        Format::Json => json(),
        Format::Csv => csv(),
    };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    write_text(output.output.as_ref(), &text)
}

fn write_text(path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Write {
            path: p.display().to_string(),
            message: e.to_string(),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    kernel: KernelFamily,
    n: usize,
    bandwidth: f64,
    normalizer: f64,
    support_tail_bound: f64,
    raw: &'a Pmf,
    normalized: &'a Pmf,
    #[serde(skip_serializing_if = "Option::is_none")]
    naive: Option<&'a Pmf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ise_naive: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv: Option<&'a CvResult>,
}

fn load(path: &Path) -> Result<CountSample, CliError> {
    Ok(ingest_counts(path)?)
}

fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let sample = load(&args.input)?;
    let spec = args.kernel.spec()?;
    let cv = if args.cv {
        let grid = args.grid.grid(spec.family)?;
        Some(select_bandwidth_with(
            &sample,
            &spec,
            &grid,
            args.grid.cv_variant.into(),
        )?)
    } else {
        None
    };
    let h = cv
        .as_ref()
        .map(|r| r.h_cv)
        .or(args.h)
        .expect("clap requires --h or --cv");
    let est = normalized_estimate(&sample, &spec, h)?;
    let naive = (args.naive || args.plot_data.is_some()).then(|| naive_estimate(&sample));
    let ise_naive = args
        .naive
        .then(|| ise_empirical(&est.normalized, naive.as_ref().expect("computed above")));

    if let Some(path) = &args.plot_data {
        let f0 = naive.as_ref().expect("computed above");
        let mut csv = String::from("x,naive,normalized\n");
        for (x, p) in est.normalized.iter() {
            let _ = writeln!(csv, "{x},{:?},{p:?}", f0.get(x));
        }
        write_text(Some(path), &csv)?;
    }

    let shown_naive = if args.naive { naive.as_ref() } else { None };
    emit(
        &args.output,
        || {
            let out = EstimateOutput {
                kernel: spec.family,
                n: sample.n(),
                bandwidth: h,
                normalizer: est.normalizer,
                support_tail_bound: est.support_tail_bound,
                raw: &est.raw,
                normalized: &est.normalized,
                naive: shown_naive,
                ise_naive,
                cv: cv.as_ref(),
            };
            serde_json::to_string_pretty(&out).expect("estimate serializes")
        },
        || {
            let mut csv = String::from("x,raw,normalized");
            csv.push_str(if shown_naive.is_some() {
                ",naive\n"
            } else {
                "\n"
            });
            for ((x, r), (_, p)) in est.raw.iter().zip(est.normalized.iter()) {
                let _ = write!(csv, "{x},{r:?},{p:?}");
                if let Some(f0) = shown_naive {
                    let _ = write!(csv, ",{:?}", f0.get(x));
                }
                csv.push('\n');
            }
            csv
        },
    )?;
    let mut summary = format!(
        "{} kernel, n = {}, h = {}, C_n = {}, support 0..={}",
        spec.family,
        sample.n(),
        sig6(h),
        sig6(est.normalizer),
        est.eval_support.last().copied().unwrap_or(0)
    );
    if let Some(ise) = ise_naive {
        let _ = write!(summary, ", ISE0 = {}", sig6(ise));
    }
    eprintln!("{summary}");
    Ok(())
}

fn bandwidth(args: &BandwidthArgs) -> Result<(), CliError> {
    let sample = load(&args.input)?;
    let spec = args.kernel.spec()?;
    let grid = args.grid.grid(spec.family)?;
    let r = select_bandwidth_with(&sample, &spec, &grid, args.grid.cv_variant.into())?;
    emit(&args.output, || r.to_json(), || r.to_csv())?;
    eprintln!(
        "{} kernel, n = {}, h_cv = {}, CV = {}",
        spec.family,
        sample.n(),
        sig6(r.h_cv),
        sig6(r.score_at_h)
    );
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let s = &args.scenario;
    let family = s.kernel.kernel;
    let grid_given = args.grid.grid_min.is_some()
        || args.grid.grid_max.is_some()
        || args.grid.grid_size.is_some();
    let grid = if grid_given {
        args.grid.grid(family)?
    } else {
        Vec::new()
    };
    let config = s.config(s.rule(HRule::Cv, grid)?)?;
    let r = monte_carlo(&config)?;
    emit(&args.output, || r.to_json(), || r.to_csv())?;
    eprintln!(
        "scenario {}, {} kernel, n = {}, N_sim = {}: C_n {} ({}), ISE {} ({})",
        r.scenario,
        r.kernel,
        r.n,
        r.n_sim,
        sig6(r.c_hat_mean),
        sig6(r.c_hat_sd),
        sig6(r.ise_mean),
        sig6(r.ise_sd)
    );
    Ok(())
}

fn normality(args: &NormalityArgs) -> Result<(), CliError> {
    let s = &args.scenario;
    if s.h_rule == Some(HRule::Cv) {
        return Err(CliError::Usage(
            "normality takes --h-rule fixed or sqrtnlogn".into(),
        ));
    }
    let config = s.config(s.rule(HRule::Sqrtnlogn, Vec::new())?)?;
    let r = normality_experiment(&config, args.x)?;
    emit(&args.output, || r.to_json(true), || r.deviations_csv())?;
    eprintln!(
        "scenario {}, {} kernel, n = {}, x = {}: mean {}, sd {} (limit {}), KS {}",
        r.scenario,
        r.kernel,
        r.n,
        r.target_x,
        sig6(r.sample_mean),
        sig6(r.sample_sd),
        sig6(r.theoretical_sd),
        sig6(r.ks_statistic)
    );
    Ok(())
}

fn kernel_probe(args: &ProbeArgs) -> Result<(), CliError> {
    let spec = args.kernel.spec()?;
    let r = assumption_probe(&spec, 0..=args.x_max, &args.h_values)?;
    emit(
        &args.output,
        || serde_json::to_string_pretty(&r).expect("probe serializes"),
        || {
            let mut csv = String::from("h,sup_mean_dev,sup_var\n");
            for ((h, m), v) in r.h_values.iter().zip(&r.sup_mean_dev).zip(&r.sup_var) {
                let _ = writeln!(csv, "{h:?},{m:?},{v:?}");
            }
            csv
        },
    )?;
    eprintln!(
        "{} kernel, targets 0..={}: delta = {}",
        r.family,
        args.x_max,
        sig6(r.delta_estimate)
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Bandwidth(a) => bandwidth(a),
        Command::Simulate(a) => simulate(a),
        Command::Normality(a) => normality(a),
        Command::KernelProbe(a) => kernel_probe(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            return report_error("usage", 2, message.trim().to_string(), None, None);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = e.kind_and_code();
            let line = match &e {
                CliError::Ingest(i) => i.line(),
                _ => None,
            };
            let seed = match &e {
                CliError::Core(disckern::Error::Replication { seed, .. }) => Some(*seed),
                _ => None,
            };
            report_error(kind, code, e.to_string(), line, seed)
        }
    }
}
