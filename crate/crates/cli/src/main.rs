use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use manifold_she::Error;
use mshe_cli::campaign::{run_kernel_eval, run_simulate, run_smallball, worker_count, Outputs};
use mshe_cli::config::{ConfigError, ConfigSource, RunConfig};
use mshe_cli::verify::{run_suite, CaseOverride, Suite};

#[derive(Parser)]
#[command(name = "mshe", version, about = "Stochastic heat equation with colored noise on model manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate an ensemble of paths and write probe snapshots.
    Simulate(Common),
    /// Estimate small-ball probabilities and fit their decay exponent.
    Smallball(Common),
    /// Run a property suite: kernels, noise, variance, regularity or correlation.
    Verify {
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate the heat kernel and the noise covariance kernel.
    KernelEval(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Stepper,
    Exact,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Worker threads (default: $MSHE_WORKERS, else all logical cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override a configuration key; repeatable, last wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

enum Failure {
    Config(String),
    Run(Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Regime(_) => 2,
        Error::Fit(_) => 4,
        _ => 3,
    }
}

impl Common {
    fn source(&self) -> Result<ConfigSource, Failure> {
        let mut src = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
                ConfigSource::parse_text(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
            }
            None => ConfigSource::default(),
        };
        if let Some(seed) = self.seed {
            src.add_override(&format!("seed={seed}"))?;
        }
        if let Some(out) = &self.out {
            src.add_override(&format!("out={}", out.display()))?;
        }
        if let Some(mode) = self.mode {
            src.add_override(match mode {
                ModeArg::Stepper => "mode=stepper",
                ModeArg::Exact => "mode=exact",
            })?;
        }
        for o in &self.overrides {
            src.add_override(o)?;
        }
        Ok(src)
    }
}

fn simulate(common: &Common) -> Result<u8, Failure> {
    let cfg = common.source()?.build()?;
    let workers = worker_count(common.workers)?;
    let mut outputs = Outputs::default();
    if let Err(e) = run_simulate(&cfg, workers, &mut outputs) {
        outputs.discard();
        return Err(e.into());
    }
    Ok(0)
}

fn smallball(common: &Common) -> Result<u8, Failure> {
    let cfg = common.source()?.build()?;
    let workers = worker_count(common.workers)?;
    let mut outputs = Outputs::default();
    let result = match run_smallball(&cfg, workers, &mut outputs) {
        Ok(r) => r,
        Err(e) => {
            outputs.discard();
            return Err(e.into());
        }
    };
    for e in &result.estimates {
        println!(
            "eps {:<8} paths {:<8} survivors {:<8} p_hat {:.6} [{:.6}, {:.6}]{}",
            e.eps,
            e.paths,
            e.survivors,
            e.p_hat,
            e.ci_lo,
            e.ci_hi,
            if e.excluded { "  (excluded from fit)" } else { "" }
        );
    }
    match &result.bracket {
        Some(b) => println!(
            "theoretical exponent bracket: upper-bound exponent {}, lower-bound exponent {}{}",
            b.upper_exp.map_or("none".to_string(), |u| format!("{u:.6}")),
            b.lower_exp,
            if b.log_correction { " (with [ln ln(1/eps)]^2 correction)" } else { "" }
        ),
        None => println!("theoretical exponent bracket: not available for this alpha"),
    }
    match (&result.fit, &result.fit_error) {
        (Some(f), _) => {
            println!("fitted exponent theta = {:.6} +/- {:.6}", f.theta, f.stderr);
            Ok(0)
        }
        (None, Some(msg)) => {
            eprintln!("error: exponent fit failed: {msg}");
            Ok(4)
        }
        (None, None) => Ok(4),
    }
}

fn verify(suite: &str, common: &Common) -> Result<u8, Failure> {
    let suite: Suite = suite.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
    let src = common.source()?;
    let explicit = src.explicit();
    let cfg = src.build()?;
    let case = ["manifold", "alpha", "rho"]
        .iter()
        .any(|k| explicit.contains_key(*k))
        .then_some(CaseOverride { manifold: cfg.manifold, alpha: cfg.alpha, rho: cfg.rho });
    let report = run_suite(suite, case)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Run(e.into()))?;
    println!("{json}");
    if explicit.contains_key("out") {
        std::fs::create_dir_all(&cfg.out).map_err(|e| Failure::Run(e.into()))?;
        std::fs::write(cfg.out.join(format!("verify_{}.json", suite.name())), format!("{json}\n"))
            .map_err(|e| Failure::Run(e.into()))?;
    }
    if report.passed {
        Ok(0)
    } else {
        eprintln!("failed checks: {}", report.failures().join(", "));
        Ok(1)
    }
}

fn kernel_eval(common: &Common) -> Result<u8, Failure> {
    let cfg: RunConfig = common.source()?.build()?;
    let mut outputs = Outputs::default();
    if let Err(e) = run_kernel_eval(&cfg, &mut outputs) {
        outputs.discard();
        return Err(e.into());
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Smallball(c) => smallball(c),
        Command::Verify { suite, common } => verify(suite, common),
        Command::KernelEval(c) => kernel_eval(c),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
