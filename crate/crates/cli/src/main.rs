use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gammkit_cli::{
    cmd_acf, cmd_fit, cmd_rho_sweep, cmd_simulate, parse_candidates, report_error, CliError,
    CliResult, RunConfig, EXIT_USER,
};

#[derive(Parser)]
#[command(name = "gammkit", version, about = "Additive mixed models with AR(1) errors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write its summary, residuals, curves and ACF.
    Fit(Common),
    /// Autocorrelation of a residual column or of a fitted model.
    Acf(Common),
    /// Refit over candidate AR(1) coefficients.
    RhoSweep(Common),
    /// Generate a synthetic dataset from a scenario file.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags given here override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    formula: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    /// Logical column marking the first row of each series.
    #[arg(long)]
    ar_start: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Points per curve axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    max_lag: Option<usize>,
    /// Comma-separated ρ values for rho-sweep.
    #[arg(long)]
    candidates: Option<String>,
    /// Residual column for acf instead of fitting a model.
    #[arg(long)]
    column: Option<String>,
    /// List the K most autocorrelated series.
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    max_slots: Option<usize>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn into_config(self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {
                $(if self.$field.is_some() { cfg.$field = self.$field; })*
            };
        }
        set!(rho, out, grid, max_lag, top, max_slots);
        set_opt!(data, schema, formula, ar_start, column, scenario, seed);
        if let Some(c) = &self.candidates {
            cfg.candidates = parse_candidates(c)?;
        }
        Ok(cfg)
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("GAMMKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("GAMMKIT_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Fit(args) => {
            let report = cmd_fit(&args.into_config()?)?;
            print!("{}", report.summary.to_text());
        }
        Command::Acf(args) => {
            let report = cmd_acf(&args.into_config()?)?;
            print!("{}", report.listing);
        }
        Command::RhoSweep(args) => {
            let report = cmd_rho_sweep(&args.into_config()?)?;
            for c in &report.candidates {
                println!(
                    "rho {:.3}: lag-1 {:.4}, {} significant, {} negative lag-1, REML {:.4}",
                    c.rho, c.pooled_lag1, c.n_significant, c.n_negative_lag1, c.reml_score
                );
            }
            for f in &report.failures {
                println!("failed at rho {}: {}", f.0, f.1);
            }
            if let Some(r) = report.recommended {
                println!("recommended rho {r}");
            }
        }
        Command::Simulate(args) => {
            for p in cmd_simulate(&args.into_config()?)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(report_error(&e, std::io::stderr()) as u8),
    }
}
