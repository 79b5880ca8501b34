//! Configuration-driven experiment runner.
//!
//! A TOML file selects a copula and the tasks to run. Each task writes CSV
//! artifacts with 15 significant digits (paths use 17) and, optionally, a
//! JSON report. Wall-clock data lives only in the JSON report so that CSV
//! output is bitwise reproducible.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{validate, CopulaSpec, Family, RawCopula};
use crate::error::Error;
use crate::format::fmt_sig;
use crate::grid::{discretize, TransitionMatrix, MAX_RESOLUTION};
use crate::mixing::{
    beta_coeff, doeblin_report, mixture_rho_bound, phi_coeff, profile_of, rho_coeff,
    DoeblinReport, MixingProfile, BETA_PHI_TOL, MAX_PROFILE_LAGS, RHO_TOL,
};
use crate::simulate::{
    empirical_transition, ks_critical_1pct, ks_statistic, sample_chain, ChainPath, MarginalSpec,
};

pub const DEFAULT_RESOLUTION: usize = 64;
pub const DEFAULT_N_MAX: usize = 10;
pub const DEFAULT_EMPIRICAL_RESOLUTION: usize = 8;
pub const MAX_PATH_LENGTH: usize = 100_000_000;
pub const MAX_SWEEP_CELLS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Coeffs,
    Profile,
    Doeblin,
    Simulate,
    Sweep,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Coeffs => "coeffs",
            Task::Profile => "profile",
            Task::Doeblin => "doeblin",
            Task::Simulate => "simulate",
            Task::Sweep => "sweep",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config: {field}: {message}")]
    Config { field: String, message: String },
    #[error("task {task} failed: {source}")]
    Task {
        task: Task,
        #[source]
        source: Error,
    },
    #[error("cannot write {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// 2 for configuration and output-location problems, 3 for task failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config { .. } | ExperimentError::Io { .. } => 2,
            ExperimentError::Task { .. } => 3,
        }
    }
}

fn config_error(field: impl Into<String>, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn yes() -> bool {
    true
}

fn default_m() -> usize {
    DEFAULT_RESOLUTION
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

fn default_empirical_m() -> usize {
    DEFAULT_EMPIRICAL_RESOLUTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_m")]
    pub m: usize,
    /// Second resolution; lag-1 coefficients are reported at both.
    pub m2: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            m: DEFAULT_RESOLUTION,
            m2: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Toggle {
    #[serde(default)]
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub marginal: MarginalSpec,
    /// Resolution of the empirical-transition cross-check.
    #[serde(default = "default_empirical_m")]
    pub empirical_m: usize,
}

/// Parameter grid. With `weight` empty, Clayton cells for every `theta`
/// and Gumbel cells for every `gumbel_beta`; otherwise the cartesian
/// product `theta × gumbel_beta × weight` of mixtures
/// `w·Clayton(θ) + (1-w)·Gumbel(β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub gumbel_beta: Vec<f64>,
    #[serde(default)]
    pub weight: Vec<f64>,
    /// Defaults to `grid.m`.
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub copula: RawCopula,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub coeffs: Toggle,
    pub profile: Option<ProfileConfig>,
    #[serde(default)]
    pub doeblin: Toggle,
    pub simulate: Option<SimulateConfig>,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn check_resolution(field: &str, m: usize) -> Result<(), ExperimentError> {
    if (2..=MAX_RESOLUTION).contains(&m) {
        Ok(())
    } else {
        Err(config_error(field, format!("{m} must lie in 2..={MAX_RESOLUTION}")))
    }
}

fn copula_error(e: Error) -> ExperimentError {
    match e.prefix_field("copula") {
        Error::OutOfRangeParameter {
            field,
            value,
            allowed,
        } => config_error(field, format!("{value} outside allowed range {allowed}")),
        Error::BadWeights { field, reason } => config_error(field, reason),
        other => config_error("copula", other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| config_error("toml", e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| config_error("path", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Tasks that will run, in execution order.
    pub fn enabled_tasks(&self) -> Vec<Task> {
        let mut tasks = Vec::new();
        if self.coeffs.enabled {
            tasks.push(Task::Coeffs);
        }
        if self.profile.as_ref().is_some_and(|p| p.enabled) {
            tasks.push(Task::Profile);
        }
        if self.doeblin.enabled {
            tasks.push(Task::Doeblin);
        }
        if self.simulate.as_ref().is_some_and(|s| s.enabled) {
            tasks.push(Task::Simulate);
        }
        if self.sweep.as_ref().is_some_and(|s| s.enabled) {
            tasks.push(Task::Sweep);
        }
        tasks
    }

    /// Enables `task` alone. Profile falls back to its defaults; simulate
    /// and sweep need their sections.
    pub fn restrict_to(&mut self, task: Task) -> Result<(), ExperimentError> {
        self.coeffs.enabled = task == Task::Coeffs;
        self.doeblin.enabled = task == Task::Doeblin;
        match (&mut self.profile, task) {
            (Some(p), _) => p.enabled = task == Task::Profile,
            (None, Task::Profile) => {
                self.profile = Some(ProfileConfig {
                    enabled: true,
                    n_max: DEFAULT_N_MAX,
                })
            }
            (None, _) => {}
        }
        match (&mut self.simulate, task) {
            (Some(s), _) => s.enabled = task == Task::Simulate,
            (None, Task::Simulate) => return Err(config_error("simulate", "section required")),
            (None, _) => {}
        }
        match (&mut self.sweep, task) {
            (Some(s), _) => s.enabled = task == Task::Sweep,
            (None, Task::Sweep) => return Err(config_error("sweep", "section required")),
            (None, _) => {}
        }
        Ok(())
    }

    /// Checks every field and returns the validated copula.
    pub fn validate(&self) -> Result<CopulaSpec, ExperimentError> {
        let spec = validate(&self.copula).map_err(copula_error)?;
        check_resolution("grid.m", self.grid.m)?;
        if let Some(m2) = self.grid.m2 {
            check_resolution("grid.m2", m2)?;
            if m2 == self.grid.m {
                return Err(config_error("grid.m2", "must differ from grid.m"));
            }
        }
        if let Some(p) = &self.profile {
            if !(1..=MAX_PROFILE_LAGS).contains(&p.n_max) {
                return Err(config_error(
                    "profile.n_max",
                    format!("{} must lie in 1..={MAX_PROFILE_LAGS}", p.n_max),
                ));
            }
        }
        if let Some(s) = &self.simulate {
            if !(1..=MAX_PATH_LENGTH).contains(&s.n) {
                return Err(config_error("simulate.n", format!("{} must lie in 1..={MAX_PATH_LENGTH}", s.n)));
            }
            check_resolution("simulate.empirical_m", s.empirical_m)?;
            s.marginal.validate().map_err(|e| config_error("simulate.marginal", e.to_string()))?;
        }
        if let Some(s) = &self.sweep {
            validate_sweep(s)?;
            if let Some(m) = s.m {
                check_resolution("sweep.m", m)?;
            }
        }
        if self.output.formats.is_empty() {
            return Err(config_error("output.formats", "at least one of csv, json"));
        }
        if self.enabled_tasks().is_empty() {
            return Err(config_error("tasks", "no task enabled"));
        }
        Ok(spec)
    }
}

fn validate_sweep(s: &SweepConfig) -> Result<(), ExperimentError> {
    for (k, &t) in s.theta.iter().enumerate() {
        CopulaSpec::clayton(t).map_err(|e| config_error(format!("sweep.theta[{k}]"), e.to_string()))?;
    }
    for (k, &b) in s.gumbel_beta.iter().enumerate() {
        CopulaSpec::gumbel(b).map_err(|e| config_error(format!("sweep.gumbel_beta[{k}]"), e.to_string()))?;
    }
    for (k, &w) in s.weight.iter().enumerate() {
        if !(0.0..=1.0).contains(&w) {
            return Err(config_error(format!("sweep.weight[{k}]"), format!("{w} outside [0, 1]")));
        }
    }
    if !s.weight.is_empty() && (s.theta.is_empty() || s.gumbel_beta.is_empty()) {
        return Err(config_error("sweep.weight", "mixture grids need theta and gumbel_beta values"));
    }
    let cells = sweep_cells(s).len();
    if cells == 0 {
        return Err(config_error("sweep", "empty parameter grid"));
    }
    if cells > MAX_SWEEP_CELLS {
        return Err(config_error("sweep", format!("{cells} cells exceed the limit of {MAX_SWEEP_CELLS}")));
    }
    Ok(())
}

/// A coefficient or inequality outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::NotApplicable => "not_applicable",
        })
    }
}

/// Outcome of one inequality. `value`/`bound` are taken at the lag where
/// `value - bound` is largest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub check: &'static str,
    pub status: Status,
    pub lag: Option<usize>,
    pub value: Option<f64>,
    pub bound: Option<f64>,
}

pub const CHECK_BETA_PHI: &str = "beta_le_phi";
pub const CHECK_RHO_POWER: &str = "rho_n_le_rho1_pow_n";
pub const CHECK_RHO_PHI: &str = "rho_le_two_sqrt_phi";
pub const CHECK_MIXTURE: &str = "mixture_rho_bound";
pub const CHECK_DOEBLIN: &str = "doeblin_bound";

impl Verdict {
    fn not_applicable(check: &'static str) -> Self {
        Self {
            check,
            status: Status::NotApplicable,
            lag: None,
            value: None,
            bound: None,
        }
    }

    /// Worst case over `(lag, value, bound)` triples; passes when every
    /// value is within `tol` of its bound.
    fn worst(check: &'static str, tol: f64, cases: impl IntoIterator<Item = (usize, f64, f64)>) -> Self {
        let mut worst: Option<(usize, f64, f64)> = None;
        for (lag, value, bound) in cases {
            if worst.is_none_or(|(_, v, b)| value - bound > v - b) {
                worst = Some((lag, value, bound));
            }
        }
        match worst {
            None => Self::not_applicable(check),
            Some((lag, value, bound)) => Self {
                check,
                status: if value <= bound + tol { Status::Pass } else { Status::Fail },
                lag: Some(lag),
                value: Some(value),
                bound: Some(bound),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoeffsRow {
    pub m: usize,
    pub beta: f64,
    pub rho: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoeffsOutput {
    pub rows: Vec<CoeffsRow>,
    /// `|ρ(m) - ρ(m2)|` when a second resolution is configured.
    pub rho_gap: Option<f64>,
    pub beta_gap: Option<f64>,
    pub phi_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub n: usize,
    pub seed: u64,
    pub spec_id: String,
    pub marginal_id: String,
    pub generator_id: String,
    pub mean: f64,
    /// Against the marginal CDF; absent for marginals with atoms.
    pub ks_statistic: Option<f64>,
    pub ks_critical_1pct: f64,
    pub empirical_m: Option<usize>,
    /// Max over rows of the total-variation distance between the empirical
    /// transition and the discretized kernel; uniform marginals only.
    pub empirical_max_row_tv: Option<f64>,
    pub empirical_empty_rows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub family: &'static str,
    pub theta: Option<f64>,
    pub gumbel_beta: Option<f64>,
    pub weight: Option<f64>,
    pub spec_id: String,
    pub m: usize,
    pub beta1: f64,
    pub rho1: f64,
    pub phi1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskTiming {
    pub task: Task,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub spec_id: String,
    pub tasks: Vec<Task>,
    pub coeffs: Option<CoeffsOutput>,
    pub profile: Option<MixingProfile>,
    pub doeblin: Option<DoeblinReport>,
    pub simulation: Option<SimulationSummary>,
    pub sweep: Option<Vec<SweepRow>>,
    pub verdicts: Vec<Verdict>,
    pub timings: Vec<TaskTiming>,
    pub artifacts: Vec<PathBuf>,
    pub timestamp_unix_ms: u128,
}

impl RunReport {
    /// True when no verdict failed.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.status != Status::Fail)
    }

    /// 0 when every verdict passes or is not applicable, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn verdict(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }
}

/// Max over rows of `½ Σ_j |P_ij - Q_ij|`.
pub fn max_row_tv(p: &TransitionMatrix, q: &TransitionMatrix) -> f64 {
    (p.entries() - q.entries())
        .row_iter()
        .map(|r| 0.5 * r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn task_error(task: Task) -> impl Fn(Error) -> ExperimentError {
    move |source| ExperimentError::Task { task, source }
}

struct Artifacts {
    dir: PathBuf,
    csv: bool,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> crate::error::Result<()>,
    ) -> Result<(), ExperimentError> {
        let path = self.dir.join(name);
        let io = |source| ExperimentError::Io {
            path: path.clone(),
            source,
        };
        let mut out = BufWriter::new(File::create(&path).map_err(io)?);
        match body(&mut out) {
            Ok(()) => {}
            Err(Error::Io(e)) => return Err(io(e)),
            Err(e) => return Err(io(std::io::Error::other(e.to_string()))),
        }
        out.flush().map_err(io)?;
        self.written.push(path);
        Ok(())
    }

    fn csv(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> crate::error::Result<()>,
    ) -> Result<(), ExperimentError> {
        if self.csv {
            self.write(name, body)
        } else {
            Ok(())
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| fmt_sig(v, 15)).unwrap_or_default()
}

/// Runs every enabled task of `config` and writes its artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    let spec = config.validate()?;
    let dir = config.output.directory.clone();
    fs::create_dir_all(&dir).map_err(|e| config_error("output.directory", format!("{}: {e}", dir.display())))?;
    let mut artifacts = Artifacts {
        dir,
        csv: config.output.formats.contains(&Format::Csv),
        written: Vec::new(),
    };
    let tasks = config.enabled_tasks();
    let m = config.grid.m;
    let mut kernel: Option<TransitionMatrix> = None;
    let mut timings = Vec::new();
    let mut report = RunReport {
        config: config.clone(),
        spec_id: spec.id().to_string(),
        tasks: tasks.clone(),
        coeffs: None,
        profile: None,
        doeblin: None,
        simulation: None,
        sweep: None,
        verdicts: Vec::new(),
        timings: Vec::new(),
        artifacts: Vec::new(),
        timestamp_unix_ms: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
    };

    for &task in &tasks {
        let start = Instant::now();
        let fail = task_error(task);
        match task {
            Task::Coeffs => {
                let p = match &kernel {
                    Some(p) => p.clone(),
                    None => discretize(&spec, m).map_err(&fail)?,
                };
                let mut rows = vec![coeff_row(&p).map_err(&fail)?];
                if let Some(m2) = config.grid.m2 {
                    rows.push(coeff_row(&discretize(&spec, m2).map_err(&fail)?).map_err(&fail)?);
                }
                kernel = Some(p);
                let gap = |f: fn(&CoeffsRow) -> f64| (rows.len() == 2).then(|| (f(&rows[0]) - f(&rows[1])).abs());
                let out = CoeffsOutput {
                    rho_gap: gap(|r| r.rho),
                    beta_gap: gap(|r| r.beta),
                    phi_gap: gap(|r| r.phi),
                    rows,
                };
                artifacts.csv("coeffs.csv", |w| {
                    writeln!(w, "m,beta,rho,phi")?;
                    for r in &out.rows {
                        writeln!(w, "{},{},{},{}", r.m, fmt_sig(r.beta, 15), fmt_sig(r.rho, 15), fmt_sig(r.phi, 15))?;
                    }
                    Ok(())
                })?;
                report.coeffs = Some(out);
            }
            Task::Profile => {
                let n_max = config.profile.as_ref().map_or(DEFAULT_N_MAX, |p| p.n_max);
                let p = match &kernel {
                    Some(p) => p.clone(),
                    None => discretize(&spec, m).map_err(&fail)?,
                };
                let profile = profile_of(&p, n_max).map_err(&fail)?;
                kernel = Some(p);
                artifacts.csv("profile.csv", |w| profile.write_csv(w))?;
                report.profile = Some(profile);
            }
            Task::Doeblin => {
                let r = doeblin_report(&spec, m).map_err(&fail)?;
                artifacts.csv("doeblin.csv", |w| {
                    writeln!(w, "spec_id,m,floor_grid,density_floor,epsilon,phi_bound,grid_phi1,applicable")?;
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{}",
                        csv_field(&r.spec_id),
                        r.m,
                        r.floor_grid,
                        fmt_sig(r.density_floor, 15),
                        fmt_sig(r.epsilon, 15),
                        fmt_sig(r.phi_bound, 15),
                        fmt_sig(r.grid_phi1, 15),
                        r.applicable
                    )?;
                    Ok(())
                })?;
                report.doeblin = Some(r);
            }
            Task::Simulate => {
                let s = config.simulate.as_ref().expect("enabled implies present");
                let path = sample_chain(&spec, &s.marginal, s.n, s.seed).map_err(&fail)?;
                let summary = summarize(&spec, s, &path).map_err(&fail)?;
                artifacts.csv("path.csv", |w| path.write_csv(w))?;
                artifacts.csv("simulation.csv", |w| {
                    writeln!(w, "n,seed,mean,ks_statistic,ks_critical_1pct,empirical_m,empirical_max_row_tv")?;
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        summary.n,
                        summary.seed,
                        fmt_sig(summary.mean, 15),
                        opt(summary.ks_statistic),
                        fmt_sig(summary.ks_critical_1pct, 15),
                        summary.empirical_m.map(|m| m.to_string()).unwrap_or_default(),
                        opt(summary.empirical_max_row_tv)
                    )?;
                    Ok(())
                })?;
                report.simulation = Some(summary);
            }
            Task::Sweep => {
                let s = config.sweep.as_ref().expect("enabled implies present");
                let rows = run_sweep(s, s.m.unwrap_or(m)).map_err(&fail)?;
                artifacts.csv("sweep.csv", |w| {
                    writeln!(w, "family,theta,gumbel_beta,weight,m,beta1,rho1,phi1")?;
                    for r in &rows {
                        writeln!(
                            w,
                            "{},{},{},{},{},{},{},{}",
                            r.family,
                            opt(r.theta),
                            opt(r.gumbel_beta),
                            opt(r.weight),
                            r.m,
                            fmt_sig(r.beta1, 15),
                            fmt_sig(r.rho1, 15),
                            fmt_sig(r.phi1, 15)
                        )?;
                    }
                    Ok(())
                })?;
                report.sweep = Some(rows);
            }
        }
        timings.push(TaskTiming {
            task,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    report.verdicts = verdicts(&spec, m, &report).map_err(task_error(Task::Coeffs))?;
    artifacts.csv("verdicts.csv", |w| {
        writeln!(w, "check,status,lag,value,bound")?;
        for v in &report.verdicts {
            writeln!(
                w,
                "{},{},{},{},{}",
                v.check,
                v.status,
                v.lag.map(|l| l.to_string()).unwrap_or_default(),
                opt(v.value),
                opt(v.bound)
            )?;
        }
        Ok(())
    })?;
    report.timings = timings;
    if config.output.formats.contains(&Format::Json) {
        let json_path = artifacts.dir.join("report.json");
        let mut listed = artifacts.written.clone();
        listed.push(json_path);
        report.artifacts = listed;
        let snapshot = report.clone();
        artifacts.write("report.json", |w| {
            serde_json::to_writer_pretty(&mut *w, &snapshot).map_err(|e| Error::Io(e.into()))?;
            writeln!(w)?;
            Ok(())
        })?;
    } else {
        report.artifacts = artifacts.written.clone();
    }
    Ok(report)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn coeff_row(p: &TransitionMatrix) -> crate::error::Result<CoeffsRow> {
    Ok(CoeffsRow {
        m: p.m(),
        beta: beta_coeff(p),
        rho: rho_coeff(p)?,
        phi: phi_coeff(p),
    })
}

fn summarize(spec: &CopulaSpec, s: &SimulateConfig, path: &ChainPath) -> crate::error::Result<SimulationSummary> {
    let values = &path.values;
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let continuous = !matches!(s.marginal, MarginalSpec::PointMassMixture { .. });
    let ks = continuous.then(|| ks_statistic(values, |x| s.marginal.cdf(x)));
    let uniform = s.marginal == MarginalSpec::Uniform01;
    let em = s.empirical_m;
    let (empirical_m, tv, empty) = if uniform && n >= em * em {
        let e = empirical_transition(path, em)?;
        let exact = discretize(spec, em)?;
        (Some(em), Some(max_row_tv(&e.matrix, &exact)), Some(e.empty_rows.len()))
    } else {
        (None, None, None)
    };
    Ok(SimulationSummary {
        n,
        seed: s.seed,
        spec_id: spec.id().to_string(),
        marginal_id: s.marginal.id(),
        generator_id: path.generator_id.clone(),
        mean,
        ks_statistic: ks,
        ks_critical_1pct: ks_critical_1pct(n),
        empirical_m,
        empirical_max_row_tv: tv,
        empirical_empty_rows: empty,
    })
}

type Cell = (&'static str, Option<f64>, Option<f64>, Option<f64>);

fn sweep_cells(s: &SweepConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    if s.weight.is_empty() {
        cells.extend(s.theta.iter().map(|&t| ("clayton", Some(t), None, None)));
        cells.extend(s.gumbel_beta.iter().map(|&b| ("gumbel", None, Some(b), None)));
    } else {
        for &t in &s.theta {
            for &b in &s.gumbel_beta {
                for &w in &s.weight {
                    cells.push(("mixture", Some(t), Some(b), Some(w)));
                }
            }
        }
    }
    cells
}

fn cell_spec(cell: &Cell) -> crate::error::Result<CopulaSpec> {
    match *cell {
        ("clayton", Some(t), _, _) => CopulaSpec::clayton(t),
        ("gumbel", _, Some(b), _) => CopulaSpec::gumbel(b),
        (_, Some(t), Some(b), Some(w)) => {
            CopulaSpec::mixture(&[(w, CopulaSpec::clayton(t)?), (1.0 - w, CopulaSpec::gumbel(b)?)])
        }
        _ => unreachable!("cells are built by sweep_cells"),
    }
}

fn order(a: Option<f64>, b: Option<f64>) -> std::cmp::Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (a, b) => a.is_some().cmp(&b.is_some()),
    }
}

/// Lag-1 coefficients for every cell, sorted by parameter tuple.
pub fn run_sweep(s: &SweepConfig, m: usize) -> crate::error::Result<Vec<SweepRow>> {
    let mut rows = sweep_cells(s)
        .par_iter()
        .map(|cell| {
            let spec = cell_spec(cell)?;
            let row = coeff_row(&discretize(&spec, m)?)?;
            Ok(SweepRow {
                family: cell.0,
                theta: cell.1,
                gumbel_beta: cell.2,
                weight: cell.3,
                spec_id: spec.id().to_string(),
                m,
                beta1: row.beta,
                rho1: row.rho,
                phi1: row.phi,
            })
        })
        .collect::<crate::error::Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.family
            .cmp(b.family)
            .then(order(a.theta, b.theta))
            .then(order(a.gumbel_beta, b.gumbel_beta))
            .then(order(a.weight, b.weight))
    });
    Ok(rows)
}

fn verdicts(spec: &CopulaSpec, m: usize, report: &RunReport) -> crate::error::Result<Vec<Verdict>> {
    let mut out = Vec::new();
    if let Some(p) = &report.profile {
        let lagged = |f: &dyn Fn(usize) -> (f64, f64)| -> Vec<(usize, f64, f64)> {
            (0..p.lags.len()).map(|k| {
                let (v, b) = f(k);
                (p.lags[k], v, b)
            }).collect()
        };
        let envelope = p.rho1_pow();
        out.push(Verdict::worst(CHECK_BETA_PHI, BETA_PHI_TOL, lagged(&|k| (p.beta[k], p.phi[k]))));
        out.push(Verdict::worst(CHECK_RHO_POWER, RHO_TOL, lagged(&|k| (p.rho[k], envelope[k]))));
        out.push(Verdict::worst(CHECK_RHO_PHI, RHO_TOL, lagged(&|k| (p.rho[k], 2.0 * p.phi[k].sqrt()))));
    } else if let Some(c) = &report.coeffs {
        let r = &c.rows[0];
        out.push(Verdict::worst(CHECK_BETA_PHI, BETA_PHI_TOL, [(1, r.beta, r.phi)]));
        out.push(Verdict::not_applicable(CHECK_RHO_POWER));
        out.push(Verdict::worst(CHECK_RHO_PHI, RHO_TOL, [(1, r.rho, 2.0 * r.phi.sqrt())]));
    } else {
        out.push(Verdict::not_applicable(CHECK_BETA_PHI));
        out.push(Verdict::not_applicable(CHECK_RHO_POWER));
        out.push(Verdict::not_applicable(CHECK_RHO_PHI));
    }
    let kernel_tasks = report.coeffs.is_some() || report.profile.is_some();
    match (spec.family(), kernel_tasks) {
        (Family::Mixture { .. }, true) => {
            let (mixed, bound) = mixture_rho_bound(spec, m)?.expect("mixture spec");
            out.push(Verdict::worst(CHECK_MIXTURE, RHO_TOL, [(1, mixed, bound)]));
        }
        _ => out.push(Verdict::not_applicable(CHECK_MIXTURE)),
    }
    match &report.doeblin {
        Some(d) if d.applicable => out.push(Verdict::worst(CHECK_DOEBLIN, RHO_TOL, [(1, d.grid_phi1, d.phi_bound)])),
        _ => out.push(Verdict::not_applicable(CHECK_DOEBLIN)),
    }
    Ok(out)
}
