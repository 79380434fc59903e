//! Commands behind the `gammkit` binary: fit, acf, rho-sweep and simulate.
//!
//! Every command reads a [`RunConfig`], writes its artifacts below
//! `RunConfig::out` and reports failures as [`CliError`], whose
//! [`CliError::exit_code`] is 2 for user or data errors and 3 for numerical
//! failures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use gammkit::basis::{BlockBasis, TermBlock};
use gammkit::dataio::{build_series_index, load_csv, load_schema, Dataset, Schema, SeriesIndex};
use gammkit::diagnostics::{acf_by_series, model_acf, rho_sweep, suggest_rho, SeriesAcf};
use gammkit::engine::{fit_with, FitOptions, FittedGamm, DEFAULT_MAX_SLOTS};
use gammkit::formula::{parse_formula, validate_against, ModelSpec, SmoothKind};
use gammkit::inference::{
    evaluate_difference, evaluate_factor_curve, evaluate_smooth, evaluate_surface,
    random_effect_coefs, summarize, SummaryTable, Z95,
};
use gammkit::simlab::{generate, load_scenario};
use gammkit::GammError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] GammError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USER,
            CliError::Model(e) if e.is_user_error() => EXIT_USER,
            CliError::Model(_) => EXIT_NUMERICAL,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Which optional artifacts `fit` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Emit {
    pub summary: bool,
    pub curves: bool,
    pub surfaces: bool,
    pub acf: bool,
    pub recoefs: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Emit {
            summary: true,
            curves: true,
            surfaces: true,
            acf: true,
            recoefs: true,
        }
    }
}

/// Options shared by all commands; loadable from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub formula: Option<String>,
    pub rho: f64,
    pub ar_start: Option<String>,
    pub out: PathBuf,
    pub emit: Emit,
    /// Points per curve axis.
    pub grid: usize,
    pub max_lag: usize,
    pub schema: Option<PathBuf>,
    pub seed: Option<u64>,
    pub candidates: Vec<f64>,
    /// Residual column analysed by `acf` instead of fitting a model.
    pub column: Option<String>,
    /// Number of most autocorrelated series listed by `acf`.
    pub top: usize,
    pub max_slots: usize,
    pub scenario: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            formula: None,
            rho: 0.0,
            ar_start: None,
            out: PathBuf::from("."),
            emit: Emit::default(),
            grid: 100,
            max_lag: 10,
            schema: None,
            seed: None,
            candidates: Vec::new(),
            column: None,
            top: 0,
            max_slots: DEFAULT_MAX_SLOTS,
            scenario: None,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    fn check(&self) -> CliResult<()> {
        if self.grid < 2 {
            return Err(CliError::Usage(format!(
                "grid resolution must be at least 2, got {}",
                self.grid
            )));
        }
        if self.max_lag < 1 {
            return Err(CliError::Usage("max lag must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(CliError::Usage(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_slots: self.max_slots,
            ..FitOptions::default()
        }
    }
}

/// Parses a comma-separated list of ρ values.
pub fn parse_candidates(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("`{}` is not a number", s.trim())))
        })
        .collect()
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Model(GammError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> gammkit::Result<()>) -> CliResult<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_file(path, &buf)
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// File-name stem for a term label.
pub fn slug(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    while s.contains("__") {
        s = s.replace("__", "_");
    }
    s.trim_matches('_').to_string()
}

fn load_data(cfg: &RunConfig) -> CliResult<Dataset> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("--data is required".into()))?;
    let schema: Schema = match &cfg.schema {
        Some(p) => load_schema(p)?,
        None => Schema::new(),
    };
    Ok(load_csv(path, &schema)?)
}

fn model_spec(cfg: &RunConfig) -> CliResult<ModelSpec> {
    let text = cfg
        .formula
        .as_ref()
        .ok_or_else(|| CliError::Usage("--formula is required".into()))?;
    Ok(parse_formula(text)?.with_ar(cfg.rho, cfg.ar_start.clone())?)
}

fn fit_model(cfg: &RunConfig, data: &Dataset) -> CliResult<FittedGamm> {
    let spec = model_spec(cfg)?;
    let bound = validate_against(&spec, data)?;
    Ok(fit_with(&bound, data, &cfg.fit_options())?)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Largest usable lag for the model's shortest-but-usable series.
fn usable_lag(index: &SeriesIndex, max_lag: usize) -> usize {
    let longest = index.series_lengths().iter().copied().max().unwrap_or(1);
    max_lag.min(longest.saturating_sub(1)).max(1)
}

pub struct FitReport {
    pub summary: SummaryTable,
    pub files: Vec<PathBuf>,
}

fn write_factor_curves(
    model: &FittedGamm,
    block: &TermBlock,
    levels: &[String],
    grid: &[f64],
    path: &Path,
) -> CliResult<()> {
    let mut out = String::from("level,grid,fit,se,lower95,upper95\n");
    for level in levels {
        let c = evaluate_factor_curve(model, &block.label, level, grid, false)?;
        for i in 0..grid.len() {
            let (f, s) = (c.fit[i], c.se[i]);
            out.push_str(&format!(
                "{level},{:.6},{f:.6},{s:.6},{:.6},{:.6}\n",
                grid[i],
                f - Z95 * s,
                f + Z95 * s
            ));
        }
    }
    write_file(path, out.as_bytes())
}

fn write_term_artifacts(
    cfg: &RunConfig,
    model: &FittedGamm,
    files: &mut Vec<PathBuf>,
) -> CliResult<()> {
    for block in &model.design.blocks {
        let ranges = block.covariate_ranges();
        let name = slug(&block.label);
        match (&block.basis, block.kind) {
            (BlockBasis::Tprs(_), _) if cfg.emit.curves => {
                let grid = linspace(ranges[0].0, ranges[0].1, cfg.grid);
                let smooth = &model.bound.smooths[block.term_index];
                let curve = match (&block.by_level, &smooth.by) {
                    (Some(level), Some(by)) if by.ordered => evaluate_difference(
                        model,
                        &smooth.term.label,
                        &level.level,
                        &grid,
                        false,
                    )?,
                    _ => evaluate_smooth(model, &block.label, &grid)?,
                };
                let path = cfg.out.join("curves").join(format!("{name}.csv"));
                write_with(&path, |w| curve.write_csv(w))?;
                files.push(path);
            }
            (BlockBasis::Tensor(m), _) if cfg.emit.surfaces && m.len() == 2 => {
                let gx = linspace(ranges[0].0, ranges[0].1, cfg.grid);
                let gz = linspace(ranges[1].0, ranges[1].1, cfg.grid);
                let surface = evaluate_surface(model, &block.label, &gx, &gz, false)?;
                let path = cfg.out.join("surfaces").join(format!("{name}.csv"));
                write_with(&path, |w| surface.write_csv(w))?;
                files.push(path);
            }
            (BlockBasis::FactorSmooth { levels, .. }, _) if cfg.emit.curves => {
                let grid = linspace(ranges[0].0, ranges[0].1, cfg.grid);
                let path = cfg.out.join("curves").join(format!("{name}.csv"));
                write_factor_curves(model, block, levels, &grid, &path)?;
                files.push(path);
            }
            (_, SmoothKind::RandomEffect) if cfg.emit.recoefs => {
                let table = random_effect_coefs(model, &block.label)?;
                let path = cfg.out.join("recoefs").join(format!("{name}.csv"));
                write_with(&path, |w| table.write_csv(w))?;
                files.push(path);
            }
            _ => {}
        }
    }
    Ok(())
}

fn write_residuals(model: &FittedGamm, path: &Path) -> CliResult<()> {
    let mut out = String::from("row,series,response,fitted,raw,whitened\n");
    let series = model.series.series_id();
    for i in 0..model.n() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            series[i] + 1,
            model.response[i],
            model.fitted[i],
            model.residuals_raw[i],
            model.residuals_whitened[i]
        ));
    }
    write_file(path, out.as_bytes())
}

/// Fits the model and writes `summary.txt`, `summary.json`, `residuals.csv`,
/// `acf.csv` and per-term curves, surfaces and coefficient tables.
pub fn cmd_fit(cfg: &RunConfig) -> CliResult<FitReport> {
    cfg.check()?;
    let spec = model_spec(cfg)?;
    let data = load_data(cfg)?;
    let bound = validate_against(&spec, &data)?;
    let model = fit_with(&bound, &data, &cfg.fit_options())?;
    let summary = summarize(&model);
    let mut files = Vec::new();
    if cfg.emit.summary {
        let txt = cfg.out.join("summary.txt");
        write_file(&txt, summary.to_text().as_bytes())?;
        let js = cfg.out.join("summary.json");
        write_file(&js, summary.to_json().as_bytes())?;
        files.extend([txt, js]);
    }
    let res = cfg.out.join("residuals.csv");
    write_residuals(&model, &res)?;
    files.push(res);
    if cfg.emit.acf {
        let acf = model_acf(&model, usable_lag(&model.series, cfg.max_lag))?;
        let path = cfg.out.join("acf.csv");
        write_with(&path, |w| acf.write_csv(w))?;
        files.push(path);
    }
    write_term_artifacts(cfg, &model, &mut files)?;
    Ok(FitReport { summary, files })
}

pub struct AcfReport {
    pub acf: SeriesAcf,
    /// Pooled lag-1 guess for ρ from raw residuals (or the column itself).
    pub suggested_rho: f64,
    pub listing: String,
}

/// ACFs of a residual column (`--column`) or of a fitted model's whitened
/// residuals, written to `acf.csv` and `acf.json`.
pub fn cmd_acf(cfg: &RunConfig) -> CliResult<AcfReport> {
    cfg.check()?;
    let data = load_data(cfg)?;
    let (acf, suggestion) = match &cfg.column {
        Some(col) => {
            let x = data.numeric(col)?;
            let index = match &cfg.ar_start {
                Some(c) => build_series_index(&data, c)?,
                None => SeriesIndex::single(data.n_rows()),
            };
            (
                acf_by_series(x, &index, cfg.max_lag)?,
                suggest_rho(x, &index)?,
            )
        }
        None => {
            let model = fit_model(cfg, &data)?;
            (
                model_acf(&model, cfg.max_lag)?,
                suggest_rho(&model.residuals_raw, &model.series)?,
            )
        }
    };
    let csv_path = cfg.out.join("acf.csv");
    write_with(&csv_path, |w| acf.write_csv(w))?;
    write_file(&cfg.out.join("acf.json"), &json(&acf))?;
    let mut listing = String::new();
    for r in acf.most_autocorrelated(cfg.top) {
        listing.push_str(&format!(
            "series {}: lag-1 acf {:.4}, {} significant lag(s)\n",
            r.series,
            r.acf[1],
            r.n_significant()
        ));
    }
    listing.push_str(&format!(
        "pooled lag-1 acf {:.4}; suggested rho {:.4}\n",
        acf.pooled.acf[1], suggestion.rho
    ));
    Ok(AcfReport {
        acf,
        suggested_rho: suggestion.rho,
        listing,
    })
}

/// Refits at each candidate ρ and writes `rho_sweep.json`.
pub fn cmd_rho_sweep(cfg: &RunConfig) -> CliResult<gammkit::diagnostics::RhoReport> {
    cfg.check()?;
    if cfg.candidates.is_empty() {
        return Err(CliError::Usage("--candidates is required".into()));
    }
    let spec = model_spec(cfg)?;
    let data = load_data(cfg)?;
    let report = rho_sweep(&spec, &data, &cfg.candidates, cfg.max_lag, &cfg.fit_options())?;
    write_file(&cfg.out.join("rho_sweep.json"), &json(&report))?;
    Ok(report)
}

/// Generates a scenario and writes `data.csv`, `schema.json` and `truth.json`.
pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let path = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Usage("--scenario is required".into()))?;
    let mut scenario = load_scenario(path)?;
    if let Some(seed) = cfg.seed {
        scenario.seed = seed;
    }
    let generated = generate(&scenario)?;
    let data_path = cfg.out.join("data.csv");
    write_with(&data_path, |w| generated.data.write_csv(w))?;
    let schema_path = cfg.out.join("schema.json");
    write_file(&schema_path, &json(&generated.data.schema()))?;
    let truth_path = cfg.out.join("truth.json");
    write_file(&truth_path, &json(&generated.truth))?;
    Ok(vec![data_path, schema_path, truth_path])
}

/// Writes a one-line diagnostic for a failed command and returns its exit
/// code.
pub fn report_error<W: Write>(err: &CliError, mut stderr: W) -> i32 {
    let _ = writeln!(stderr, "error: {err}");
    err.exit_code()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("s(Time,by=Group):B"), "s_Time_by_Group_B");
        assert_eq!(slug("fs(Trial,Subject)"), "fs_Trial_Subject");
    }

    #[test]
    fn candidates_parse() {
        assert_eq!(parse_candidates("0, 0.3,0.6").unwrap(), vec![0.0, 0.3, 0.6]);
        assert!(parse_candidates("0,x").is_err());
    }

    #[test]
    fn config_checks() {
        let cfg = RunConfig {
            rho: 1.2,
            ..RunConfig::default()
        };
        let e = cfg.check().unwrap_err();
        assert_eq!(e.exit_code(), EXIT_USER);
        assert!(e.to_string().contains("[0, 1)"));
    }
}
