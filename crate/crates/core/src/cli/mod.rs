//! The `rydoa` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or self-test failure, 2 malformed input,
//! 3 invalid settings, 4 an estimator failed on every trial.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::experiments::{self, Algorithm, SweepResult};
use crate::model::OutlierSpec;
use crate::selftest;

pub use config::{ConfigFile, ExperimentKind, PenaltySet, RunConfig, Scale, Setting};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error at {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("estimator failure: {0}")]
    Runtime(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    SelfTest(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) => 2,
            Self::Invalid(_) => 3,
            Self::Runtime(_) => 4,
            Self::Io { .. } | Self::SelfTest(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rydoa",
    version,
    about = "Robust DoA estimation from magnitude-only Rydberg receiver measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pseudo-spectra of one realization per outlier fraction.
    Spectrum(RunArgs),
    /// RMSE against outlier fraction.
    SweepCorruption(RunArgs),
    /// RMSE against SNR, one series per outlier fraction.
    SweepSnr(RunArgs),
    /// Runs whatever experiment the config (e.g. a `run.meta`) names.
    Run(RunArgs),
    /// Quick invariant checks.
    Selftest,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// spectrum, sweep-corruption or sweep-snr; defaults to the subcommand.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// desk or paper
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Outlier fractions in percent, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    /// SNR points in dB, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    snr_list: Option<String>,
    /// l1, l2 or both
    #[arg(long)]
    penalty: Option<String>,
    /// Monte-Carlo trials per point.
    #[arg(long)]
    mc: Option<String>,
    /// Also write a gnuplot script.
    #[arg(long)]
    gnuplot: bool,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn flags(&self) -> Result<Vec<Setting>, CliError> {
        let mut flags = Vec::new();
        for raw in &self.set {
            let (k, v) = raw.split_once('=').ok_or_else(|| {
                CliError::Parse(format!("--set: expected KEY=VALUE, found `{raw}`"))
            })?;
            flags.push(Setting::flag("--set", k.trim(), v.trim()));
        }
        let named = [
            ("--seed", "seed", &self.seed),
            ("--scale", "scale", &self.scale),
            ("--eta", "eta_pct", &self.eta),
            ("--delta", "delta", &self.delta),
            ("--snr-list", "snr_db", &self.snr_list),
            ("--penalty", "penalty", &self.penalty),
            ("--mc", "mc", &self.mc),
        ];
        for (flag, key, value) in named {
            if let Some(v) = value {
                flags.push(Setting::flag(flag, key, v.trim()));
            }
        }
        if self.gnuplot {
            flags.push(Setting::flag("--gnuplot", "gnuplot", "true"));
        }
        Ok(flags)
    }
}

/// Reads the config file (if any) and applies the flags.
fn load(kind: Option<ExperimentKind>, args: &RunArgs) -> Result<RunConfig, CliError> {
    let requested = match &args.experiment {
        None => None,
        Some(name) => Some(ExperimentKind::parse(name).ok_or_else(|| {
            CliError::Parse(format!("--experiment: unknown experiment `{name}`"))
        })?),
    };
    let kind = match (kind, requested) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Invalid(format!(
                "--experiment {} conflicts with the `{}` subcommand",
                b.name(),
                a.name()
            )));
        }
        (a, b) => a.or(b),
    };
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
                path: path.clone(),
                source: e,
            })?;
            config::parse_file(&text)?
        }
        None => ConfigFile::default(),
    };
    config::resolve(kind, &file, &args.flags()?, args.out.clone())
}

/// `RYDOA_THREADS`: worker cap, 0 or unset for one per core.
pub fn thread_count() -> Result<usize, CliError> {
    match std::env::var("RYDOA_THREADS") {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::Invalid(format!(
                "RYDOA_THREADS = `{v}` is not a non-negative integer"
            ))
        }),
    }
}

/// What a run wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: RunConfig,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Runs a resolved configuration on a pool of `threads` workers (0 = one per core).
pub fn execute(config: &RunConfig, threads: usize) -> Result<RunReport, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let outputs = pool.install(|| compute(config))?;
    let mut writer = output::ArtifactWriter::new(&config.out)?;
    let mut csvs = Vec::new();
    for (name, contents) in &outputs.files {
        csvs.push(writer.write(name, contents)?);
    }
    if config.gnuplot {
        writer.write("plot.gp", &output::gnuplot(config, &csvs))?;
    }
    writer.write("run.meta", &output::meta(config))?;
    let files = writer.finish();
    if let Some(msg) = outputs.all_failed {
        return Err(CliError::Runtime(msg));
    }
    Ok(RunReport {
        config: config.clone(),
        files,
        summary: outputs.summary,
    })
}

struct Outputs {
    files: Vec<(String, String)>,
    summary: String,
    all_failed: Option<String>,
}

fn all_failed(results: &[SweepResult<f64>]) -> Option<String> {
    let algorithms: Vec<Algorithm> = results.first()?.rmse.iter().map(|a| a.algorithm).collect();
    algorithms.into_iter().find_map(|alg| {
        let every = results.iter().all(|r| {
            r.rmse
                .iter()
                .any(|a| a.algorithm == alg && a.failed_trials == r.num_trials)
        });
        every.then(|| format!("{} failed on every trial", alg.name()))
    })
}

fn sweep_summary(results: &[SweepResult<f64>], out: &mut String) {
    use std::fmt::Write as _;
    for r in results {
        let cells: Vec<String> = r
            .rmse
            .iter()
            .map(|a| format!("{} {:.4}", a.algorithm.name(), a.rmse_deg))
            .collect();
        let _ = writeln!(
            out,
            "{} {:>6}  {}",
            r.variable.name(),
            r.value,
            cells.join("  ")
        );
    }
}

fn compute(config: &RunConfig) -> Result<Outputs, CliError> {
    use std::fmt::Write as _;
    let base = config.experiment()?;
    let runtime = |e: crate::Error| CliError::Runtime(e.to_string());
    let mut files = Vec::new();
    let mut summary = String::new();
    let mut failures = None;
    match config.experiment {
        ExperimentKind::Spectrum => {
            for (&pct, eta) in config.eta_pct.iter().zip(config.fractions()) {
                let exp = experiments::Experiment {
                    outliers: OutlierSpec::new(eta, config.delta),
                    ..base.clone()
                };
                let snap = experiments::spectrum_snapshot(&exp, 0).map_err(runtime)?;
                for c in &snap.curves {
                    let _ = writeln!(
                        summary,
                        "eta {pct}%  {}  peaks {:?}",
                        c.algorithm.name(),
                        c.doa_estimates_deg
                    );
                }
                files.push((
                    format!("spectrum_{}.csv", output::eta_tag(pct)),
                    output::spectrum_csv(&snap),
                ));
            }
        }
        ExperimentKind::SweepCorruption => {
            let results =
                experiments::sweep_corruption(&base, &config.fractions(), config.delta, config.mc)
                    .map_err(runtime)?;
            sweep_summary(&results, &mut summary);
            failures = all_failed(&results);
            files.push((
                "sweep_corruption.csv".to_string(),
                output::sweep_csv(&results),
            ));
        }
        ExperimentKind::SweepSnr => {
            let mut failed_everywhere = true;
            let mut message = None;
            for (&pct, eta) in config.eta_pct.iter().zip(config.fractions()) {
                let results = experiments::sweep_snr(
                    &base,
                    &config.snr_db,
                    OutlierSpec::new(eta, config.delta),
                    config.mc,
                    config.snr_convention,
                )
                .map_err(runtime)?;
                let _ = writeln!(summary, "eta {pct}%");
                sweep_summary(&results, &mut summary);
                match all_failed(&results) {
                    Some(m) => message = Some(m),
                    None => failed_everywhere = false,
                }
                files.push((
                    format!("sweep_snr_{}.csv", output::eta_tag(pct)),
                    output::sweep_csv(&results),
                ));
            }
            if failed_everywhere {
                failures = message;
            }
        }
    }
    Ok(Outputs {
        files,
        summary,
        all_failed: failures,
    })
}

fn run_selftest(out: &mut dyn Write) -> Result<(), CliError> {
    let checks = selftest::run_all();
    let mut failed = 0;
    for c in &checks {
        let _ = writeln!(
            out,
            "{} {}  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(CliError::SelfTest(format!(
            "{failed} of {} self-test checks failed",
            checks.len()
        )));
    }
    Ok(())
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let (kind, args) = match command {
        Command::Selftest => return run_selftest(out),
        Command::Spectrum(a) => (Some(ExperimentKind::Spectrum), a),
        Command::SweepCorruption(a) => (Some(ExperimentKind::SweepCorruption), a),
        Command::SweepSnr(a) => (Some(ExperimentKind::SweepSnr), a),
        Command::Run(a) => (None, a),
    };
    let config = load(kind, &args)?;
    let threads = thread_count()?;
    let report = execute(&config, threads)?;
    let _ = write!(out, "{}", report.summary);
    for f in &report.files {
        let _ = writeln!(out, "wrote {}", display(f));
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Parses `args` (program name first), runs the command, and returns the exit code.
pub fn run_from<I, A>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "rydoa: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run_from(
        std::env::args_os(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    )
}
