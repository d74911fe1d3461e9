//! Command-line front end: `run`, `sweep`, `compare` and `steady`.
//!
//! Runs are described by a TOML file (see [`RunConfig`]) with optional
//! `--set key=value` overrides using dotted keys. Every output CSV carries the
//! full configuration as `#` metadata, so `varlind run out.csv` reproduces it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{
    evolve_exact, trajectory_run, ExactOptions, MidpointConfig, TrajectoryConfig, EXACT_MAX_SITES, TRAJECTORY_MAX_SITES,
};
use crate::model::{Boundary, Lattice, ModelParams};
use crate::nonmarkov::{nonmarkov_stationary, nonmarkov_trace, TOMOGRAPHY_TAU};
use crate::qops::DensityMatrix;
use crate::series::TimeSeries;
use crate::variational::{evolve_variational, steady_state, Integrator, Manifold, VarState, VariationalConfig};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "VARLIND_OUTPUT_DIR";

const CONFIG_MARKER: &str = "config:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Trajectory,
    VariationalProduct,
    VariationalCorrelated,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Trajectory => "trajectory",
            Method::VariationalProduct => "variational-product",
            Method::VariationalCorrelated => "variational-correlated",
        }
    }

    fn manifold(self) -> Option<Manifold> {
        match self {
            Method::VariationalProduct => Some(Manifold::Product),
            Method::VariationalCorrelated => Some(Manifold::Correlated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub width: usize,
    pub height: usize,
    pub boundary: Boundary,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { width: 3, height: 3, boundary: Boundary::Periodic }
    }
}

impl LatticeConfig {
    pub fn build(&self) -> Result<Lattice> {
        Lattice::new(self.width, self.height, self.boundary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySettings {
    pub n_traj: usize,
    pub dt: f64,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        Self { n_traj: 1000, dt: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonMarkovSettings {
    pub enabled: bool,
    /// Spacing of the sample grid.
    pub sample_dt: f64,
    /// Step of the tomographic propagation.
    pub tau: f64,
}

impl Default for NonMarkovSettings {
    fn default() -> Self {
        Self { enabled: false, sample_dt: 0.1, tau: TOMOGRAPHY_TAU }
    }
}

/// A single run. Rates are in units of `γ`, times in units of `1/γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub method: Method,
    pub tau: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Write every `record_every`-th step.
    pub record_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub model: ModelParams,
    pub lattice: LatticeConfig,
    pub trajectory: TrajectorySettings,
    pub nonmarkov: NonMarkovSettings,
    pub optimizer: VariationalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::VariationalCorrelated,
            tau: 0.01,
            t_final: 10.0,
            seed: 1,
            record_every: 10,
            output: None,
            model: ModelParams::default(),
            lattice: LatticeConfig::default(),
            trajectory: TrajectorySettings::default(),
            nonmarkov: NonMarkovSettings::default(),
            optimizer: VariationalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be >= 0, got {}", self.t_final)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        self.model.validate()?;
        let lattice = self.lattice.build()?;
        let n = lattice.n_sites();
        match self.method {
            Method::Exact if n > EXACT_MAX_SITES => {
                return Err(Error::Config(format!("exact method limited to {EXACT_MAX_SITES} sites, lattice has {n}")));
            }
            Method::Trajectory if n > TRAJECTORY_MAX_SITES => {
                return Err(Error::Config(format!(
                    "trajectory method limited to {TRAJECTORY_MAX_SITES} sites, lattice has {n}"
                )));
            }
            _ => {}
        }
        self.trajectory_config().validate()?;
        self.variational_config().validate()?;
        if self.nonmarkov.enabled {
            if self.method != Method::VariationalCorrelated {
                return Err(Error::Config("nonmarkov analysis needs method = variational-correlated".into()));
            }
            if !(self.nonmarkov.sample_dt > 0.0) || !(self.nonmarkov.tau > 0.0) {
                return Err(Error::Config("nonmarkov sample_dt and tau must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn variational_config(&self) -> VariationalConfig {
        VariationalConfig { tau: self.tau, seed: self.seed, ..self.optimizer.clone() }
    }

    pub fn trajectory_config(&self) -> TrajectoryConfig {
        TrajectoryConfig {
            n_traj: self.trajectory.n_traj,
            seed: self.seed,
            dt: self.trajectory.dt,
            t_final: self.t_final,
            record_every: self.record_every,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Applies dotted `key=value` overrides to a TOML table. Values are parsed as
/// TOML and fall back to plain strings.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) =
            item.split_once('=').ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
        let value = parse_value(raw.trim());
        let path: Vec<&str> = key.trim().split('.').collect();
        let (last, parents) = path.split_last().expect("split yields at least one part");
        let mut node = &mut *table;
        for part in parents {
            let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry.as_table_mut().ok_or_else(|| Error::Config(format!("'{part}' in '{key}' is not a section")))?;
        }
        node.insert(last.to_string(), value);
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Loads a configuration from a TOML file or from the metadata of an output CSV.
pub fn load_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let toml_text = if is_csv(path, &text) { embedded_config(&text)? } else { text };
    let mut table: toml::Table = toml_text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    apply_overrides(&mut table, overrides)?;
    if let Some(seed) = seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn is_csv(path: &Path, text: &str) -> bool {
    path.extension().is_some_and(|e| e == "csv") || text.lines().any(|l| l.trim() == format!("# {CONFIG_MARKER}"))
}

/// The TOML block echoed after the `# config:` marker of an output file.
pub fn embedded_config(csv_text: &str) -> Result<String> {
    let mut lines = csv_text.lines().take_while(|l| l.starts_with('#'));
    if !lines.any(|l| l.trim() == format!("# {CONFIG_MARKER}")) {
        return Err(Error::Config("file carries no embedded configuration".into()));
    }
    let body: Vec<&str> = lines.map(|l| l.strip_prefix("# ").unwrap_or(&l[1..])).collect();
    Ok(body.join("\n"))
}

fn with_metadata(mut series: TimeSeries, cfg: &RunConfig, extra: &[String]) -> Result<TimeSeries> {
    series.push_meta(format!("varlind {}", env!("CARGO_PKG_VERSION")));
    series.push_meta(format!("method = {}", cfg.method.name()));
    series.push_meta(format!("seed = {}", cfg.seed));
    for line in extra {
        series.push_meta(line.clone());
    }
    series.push_meta(CONFIG_MARKER);
    for line in cfg.to_toml()?.lines() {
        series.push_meta(line.to_string());
    }
    Ok(series)
}

fn thin(series: &TimeSeries, every: usize) -> Result<TimeSeries> {
    let mut out = TimeSeries::new(&series.columns()[1..]);
    let n = series.len();
    for (k, row) in series.rows().iter().enumerate() {
        if k % every == 0 || k + 1 == n {
            out.push(row[0], &row[1..])?;
        }
    }
    Ok(out)
}

/// Executes a run and returns its output series (with metadata).
pub fn execute(cfg: &RunConfig) -> Result<TimeSeries> {
    cfg.validate()?;
    let lattice = cfg.lattice.build()?;
    let series = match cfg.method {
        Method::Exact => {
            let rho0 = DensityMatrix::all_ground(lattice.n_sites());
            let opts = ExactOptions { record_pair: None, record_every: cfg.record_every };
            evolve_exact(&rho0, &cfg.model, &lattice, cfg.t_final, &MidpointConfig::with_tau(cfg.tau), &opts)?.series
        }
        Method::Trajectory => trajectory_run(&cfg.model, &lattice, &cfg.trajectory_config())?.series,
        Method::VariationalProduct | Method::VariationalCorrelated => {
            let manifold = cfg.method.manifold().expect("variational method");
            let integrator = Integrator::for_lattice(&cfg.model, &lattice, manifold, cfg.variational_config())?;
            let run = evolve_variational(&integrator, &VarState::ground(manifold), cfg.t_final)?;
            if cfg.nonmarkov.enabled {
                let nm = &cfg.nonmarkov;
                let last = cfg.t_final - 2.0 * nm.tau;
                let n_samples = (last / nm.sample_dt + 1e-9).floor() as usize + 1;
                let times: Vec<f64> = (0..n_samples).map(|k| k as f64 * nm.sample_dt).collect();
                let trace = nonmarkov_trace(&run, &cfg.model, &lattice, &times, nm.tau)?;
                let mut series = TimeSeries::new(&["n_r", "defect", "f", "I", "I_VN"]);
                for row in trace.rows() {
                    let t = row[0];
                    let n_r = run.state_at(t).rydberg_density();
                    let defect = run.series.interpolate("defect", t).unwrap_or(f64::NAN);
                    series.push(t, &[n_r, defect, row[1], row[2], row[3]])?;
                }
                series
            } else {
                thin(&run.series, cfg.record_every)?
            }
        }
    };
    with_metadata(series, cfg, &[])
}

/// Steady state of a variational method: one row at the detection time with
/// `n_r`, defect, `f`, `I`, `I_VN` and the parameters.
pub fn execute_steady(cfg: &RunConfig) -> Result<TimeSeries> {
    cfg.validate()?;
    let manifold = cfg
        .method
        .manifold()
        .ok_or_else(|| Error::Config("steady needs a variational method".into()))?;
    let lattice = cfg.lattice.build()?;
    let integrator = Integrator::for_lattice(&cfg.model, &lattice, manifold, cfg.variational_config())?;
    let ss = steady_state(&integrator, &VarState::ground(manifold))?;
    let nm = nonmarkov_stationary(&VarState::Correlated(ss.state.as_correlated()), &cfg.model, &lattice, cfg.nonmarkov.tau)?;
    let mut columns = vec!["n_r".to_string(), "defect".into(), "f".into(), "I".into(), "I_VN".into(), "converged".into()];
    columns.extend(VarState::free_names(manifold));
    let mut series = TimeSeries::new(&columns);
    let mut row = vec![ss.state.rydberg_density(), ss.defect, nm.f, nm.qlmi, nm.vn_mi, f64::from(u8::from(ss.converged))];
    row.extend(ss.state.free());
    series.push(ss.time, &row)?;
    let extra = [format!("steady converged = {}, rate = {:e}", ss.converged, ss.rate)];
    with_metadata(series, cfg, &extra)
}

/// Steady-state summary entry of a sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub n_r: f64,
    pub f: f64,
    pub qlmi: f64,
}

fn steady_summary(cfg: &RunConfig, value: f64, series: &TimeSeries) -> Result<SweepPoint> {
    if cfg.method.manifold().is_some() {
        let ss = execute_steady(cfg)?;
        let get = |name: &str| ss.last(name).unwrap_or(f64::NAN);
        Ok(SweepPoint { value, n_r: get("n_r"), f: get("f"), qlmi: get("I") })
    } else {
        Ok(SweepPoint { value, n_r: series.last("n_r").unwrap_or(f64::NAN), f: f64::NAN, qlmi: f64::NAN })
    }
}

pub fn write_series(path: &Path, series: &TimeSeries) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    series.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<TimeSeries> {
    TimeSeries::read_csv(BufReader::new(File::open(path)?))
}

fn output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn resolve_output(cfg: &RunConfig, explicit: Option<&Path>, stem: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match &cfg.output {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => output_dir().join(p),
        None => output_dir().join(format!("{stem}.csv")),
    }
}

/// Deviation between two series on the time grid of the first, with the
/// second linearly interpolated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub max: f64,
    pub rms: f64,
    pub points: usize,
}

pub fn compare_series(a: &TimeSeries, b: &TimeSeries, column: &str) -> Result<Comparison> {
    let ka = a.column_index(column).ok_or_else(|| Error::Config(format!("first file has no column '{column}'")))?;
    b.column_index(column).ok_or_else(|| Error::Config(format!("second file has no column '{column}'")))?;
    let (tb0, tb1) = match (b.rows().first(), b.rows().last()) {
        (Some(f), Some(l)) => (f[0], l[0]),
        _ => return Err(Error::Config("second file is empty".into())),
    };
    let span = 1e-9 * tb1.abs().max(1.0);
    let diffs: Vec<f64> = a
        .rows()
        .iter()
        .filter(|r| r[0] >= tb0 - span && r[0] <= tb1 + span)
        .map(|r| (r[ka] - b.interpolate(column, r[0]).expect("column exists")).abs())
        .collect();
    if diffs.is_empty() {
        return Err(Error::Config("files share no time range".into()));
    }
    let max = diffs.iter().copied().fold(0.0, f64::max);
    let rms = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
    Ok(Comparison { max, rms, points: diffs.len() })
}

#[derive(Parser, Debug)]
#[command(name = "varlind", version, about = "Variational and exact solvers for dissipative Rydberg lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct ConfigArgs {
    /// TOML configuration, or an output CSV to re-run from its metadata.
    pub config: PathBuf,
    /// Override a configuration entry, e.g. `--set model.v=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (defaults to the config's `output` or `$VARLIND_OUTPUT_DIR/<method>.csv`).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one configuration and write its time series.
    Run(ConfigArgs),
    /// Run a configuration for several values of one parameter.
    Sweep {
        #[command(flatten)]
        args: ConfigArgs,
        /// Dotted configuration key, e.g. `model.v`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Run the points concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Compare one column of two output files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "n_r")]
        column: String,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Evolve a variational method to its steady state.
    Steady(ConfigArgs),
}

fn sweep_stem(path: &Path, axis: &str, value: f64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sweep".into());
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}_{axis}={value}.{ext}"))
}

pub fn write_summary(path: &Path, axis: &str, points: &[SweepPoint], meta: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for line in meta {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{axis},n_r,f,I")?;
    for p in points {
        writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e}", p.value, p.n_r, p.f, p.qlmi)?;
    }
    w.flush()?;
    Ok(())
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run(args) => {
            let cfg = load_config(&args.config, &args.overrides, args.seed)?;
            let series = execute(&cfg)?;
            let path = resolve_output(&cfg, args.output.as_deref(), cfg.method.name());
            write_series(&path, &series)?;
            println!("wrote {} ({} rows)", path.display(), series.len());
            Ok(0)
        }
        Command::Steady(args) => {
            let cfg = load_config(&args.config, &args.overrides, args.seed)?;
            let series = execute_steady(&cfg)?;
            let path = resolve_output(&cfg, args.output.as_deref(), &format!("{}_steady", cfg.method.name()));
            write_series(&path, &series)?;
            let row = &series.rows()[0];
            println!("t = {:.3}  n_r = {:.6}  f = {:.6e}  I = {:.6e}", row[0], row[1], row[3], row[4]);
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Sweep { args, axis, values, parallel } => {
            let base = load_config(&args.config, &args.overrides, args.seed)?;
            let summary_path = resolve_output(&base, args.output.as_deref(), &format!("{}_sweep", base.method.name()));
            let configs = values
                .iter()
                .map(|v| {
                    let mut o = args.overrides.clone();
                    o.push(format!("{axis}={v}"));
                    load_config(&args.config, &o, args.seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let point = |(cfg, value): (&RunConfig, f64)| -> Result<SweepPoint> {
                let series = execute(cfg)?;
                write_series(&sweep_stem(&summary_path, &axis, value), &series)?;
                steady_summary(cfg, value, &series)
            };
            let points: Vec<SweepPoint> = if parallel {
                configs.par_iter().zip(values.par_iter().copied()).map(point).collect::<Result<_>>()?
            } else {
                configs.iter().zip(values.iter().copied()).map(point).collect::<Result<_>>()?
            };
            let mut meta = vec![format!("varlind {}", env!("CARGO_PKG_VERSION")), format!("sweep axis = {axis}")];
            meta.push(CONFIG_MARKER.into());
            meta.extend(base.to_toml()?.lines().map(str::to_string));
            write_summary(&summary_path, &axis, &points, &meta)?;
            println!("wrote {} and {} run files", summary_path.display(), points.len());
            Ok(0)
        }
        Command::Compare { a, b, column, tolerance } => {
            let cmp = compare_series(&read_series(&a)?, &read_series(&b)?, &column)?;
            let pass = cmp.max <= tolerance;
            println!(
                "{column}: max = {:.3e}, rms = {:.3e} over {} points, tolerance {:.1e}: {}",
                cmp.max,
                cmp.rms,
                cmp.points,
                tolerance,
                if pass { "PASS" } else { "FAIL" }
            );
            Ok(if pass { 0 } else { 1 })
        }
    }
}

/// Entry point; returns the process exit code (0 ok, 1 comparison failed, 2 error).
pub fn main() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
