//! The `eprb` command: simulate runs, analyze time-tag files, sweep
//! parameters and tabulate the reference predictions.
//!
//! Every flag can also come from a flat `key=value` file given with
//! `--config`; keys are the flag names without dashes and flags given on the
//! command line win.

use std::f64::consts::PI;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use eprb_core::estimators::{gamma_by_setting, s_theta, theta_grid, unconditioned_means, CorrelationReport};
use eprb_core::oracle::{
    gamma_first_order, model_e_first_order, model_finite_window, qt_s_theta, qt_singlet, Model, OracleError,
};
use eprb_core::sweep::{correlation_curve, curve_report, CurveLayout};
use eprb_core::ttio::{format_number, read_log_file, write_log, write_report, write_sweep};
use eprb_core::{
    Angle, Case, ConfigError, EventLog, PairingError, PairingSpec, ReportFormat, SimConfig, Simulation, SweepAxis,
    SweepSpec, TtioError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: TtioError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: file holds no events", path.display())]
    EmptyInput { path: PathBuf },
    #[error("pairing failed: {0}")]
    Pairing(#[from] PairingError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] OracleError),
}

impl CliError {
    /// 1 usage or configuration, 2 I/O or parse, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Parse { .. } | CliError::Io { .. } | CliError::EmptyInput { .. } => 2,
            CliError::Pairing(e) => match e {
                PairingError::InvalidParameter { .. } => 1,
                _ => 2,
            },
            CliError::Numerical(_) => 3,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "eprb",
    version,
    about = "Event-by-event EPRB simulation and coincidence analysis"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a run and write its correlation report.
    Simulate(SimulateArgs),
    /// Pair two time-tag files and write their correlation report.
    Analyze(AnalyzeArgs),
    /// Simulate over a grid of W, d or θ.
    Sweep(SweepArgs),
    /// Tabulate the reference predictions over θ.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Procedure {
    Index,
    Binned,
    Relative,
    Shifted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Window,
    D,
    Theta,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Flat key=value file with defaults for any flag.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// 1 (random polarization pairs) or 2 (pre-polarized pairs).
    #[arg(long, default_value = "1")]
    pub case: String,
    /// Number of emitted pairs (per θ point for curves and sweeps).
    #[arg(long, default_value_t = 1_000_000)]
    pub events: u64,
    /// Time-delay exponent.
    #[arg(long, allow_hyphen_values = true, default_value_t = 4.0)]
    pub d: f64,
    /// Maximum delay T0.
    #[arg(long = "max-delay", default_value_t = 1.0)]
    pub max_delay: f64,
    /// Time-tag resolution.
    #[arg(long, default_value_t = 0.00025)]
    pub tau: f64,
    /// Coincidence window; defaults to tau.
    #[arg(long)]
    pub window: Option<f64>,
    /// Index window |k1 - k2| < k ("inf" disables it); defaults to ceil(W/tau).
    #[arg(long)]
    pub k: Option<String>,
    /// Comma-separated radians (pi/8 style allowed) or "chsh" for the
    /// standard settings {0, π/4} and {π/8, 3π/8}.
    #[arg(long, allow_hyphen_values = true, default_value = "chsh")]
    pub angles1: String,
    #[arg(long, allow_hyphen_values = true, default_value = "chsh")]
    pub angles2: String,
    #[arg(long, allow_hyphen_values = true)]
    pub eta1: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta2: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Time between emissions.
    #[arg(long = "emit-spacing", default_value_t = 4.0)]
    pub emit_spacing: f64,
}

#[derive(Debug, Args)]
pub struct PairingArgs {
    #[arg(long, value_enum)]
    pub procedure: Option<Procedure>,
    /// Bin width for the binned procedure; defaults to 2W.
    #[arg(long = "bin-size")]
    pub bin_size: Option<f64>,
    /// Clock offset for the relative procedure.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub delta: f64,
    /// Histogram bin width for the shifted procedure; defaults to the tick
    /// resolution.
    #[arg(long = "shift-resolution")]
    pub shift_resolution: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub pairing: PairingArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Simulate one setting pair per θ on an N-point grid over [0, π)
    /// instead of the listed settings.
    #[arg(long, value_name = "N")]
    pub curve: Option<usize>,
    /// Also write the station 1 time-tag log here.
    #[arg(long, value_name = "FILE")]
    pub log1: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub log2: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_name = "FILE")]
    pub input1: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub input2: PathBuf,
    #[command(flatten)]
    pub pairing: PairingArgs,
    /// Coincidence window in the files' time unit.
    #[arg(long)]
    pub window: Option<f64>,
    /// Index window for pair-aligned files.
    #[arg(long)]
    pub k: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, value_enum)]
    pub sweep: Axis,
    /// Comma-separated axis values.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    /// θ points per curve for the window and d axes (a multiple of 8).
    #[arg(long = "curve-points", default_value_t = 16)]
    pub curve_points: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 4.0)]
    pub d: f64,
    /// Adds the finite-window columns.
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long = "max-delay", default_value_t = 1.0)]
    pub max_delay: f64,
    /// Comma-separated θ values; defaults to the --points grid.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = 16)]
    pub points: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Parses `"0.5"`, `"pi"`, `"pi/8"`, `"3pi/8"`, `"3*pi/8"` or `"-pi/4"`.
pub fn parse_angle(s: &str) -> Result<f64, CliError> {
    let t = s.trim();
    let bad = || usage(format!("cannot read angle {s:?}"));
    let Some(at) = t.find("pi") else {
        return t.parse::<f64>().map_err(|_| bad());
    };
    let head = t[..at].trim().trim_end_matches('*').trim();
    let coef = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let tail = t[at + 2..].trim();
    let den = match tail.strip_prefix('/') {
        None if tail.is_empty() => 1.0,
        None => return Err(bad()),
        Some(d) => d.trim().parse::<f64>().map_err(|_| bad())?,
    };
    let v = coef * PI / den;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(parse_angle).collect()
}

fn parse_angles(s: &str, station: u8) -> Result<Vec<Angle>, CliError> {
    if matches!(s.trim(), "chsh" | "paper") {
        let v = if station == 1 {
            vec![0.0, PI / 4.0]
        } else {
            vec![PI / 8.0, 3.0 * PI / 8.0]
        };
        return Ok(v.into_iter().map(Angle::new).collect());
    }
    Ok(parse_list(s)?.into_iter().map(Angle::new).collect())
}

fn parse_case(s: &str) -> Result<Case, CliError> {
    match s.trim() {
        "1" | "I" | "i" => Ok(Case::CaseI),
        "2" | "II" | "ii" => Ok(Case::CaseII),
        other => Err(usage(format!("case must be 1 or 2, got {other:?}"))),
    }
}

fn parse_k(s: Option<&str>) -> Result<Option<u64>, CliError> {
    match s.map(str::trim) {
        None => Ok(None),
        Some("inf") => Ok(Some(u64::MAX)),
        Some(v) => match v.parse::<u64>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(usage(format!("k must be a positive integer or inf, got {v:?}"))),
        },
    }
}

impl SimArgs {
    pub fn to_config(&self) -> Result<SimConfig, CliError> {
        let eta = |s: &Option<String>| s.as_deref().map(parse_angle).transpose().map(|o| o.map(Angle::new));
        Ok(SimConfig {
            case: parse_case(&self.case)?,
            num_pairs: self.events,
            angles1: parse_angles(&self.angles1, 1)?,
            angles2: parse_angles(&self.angles2, 2)?,
            eta1: eta(&self.eta1)?,
            eta2: eta(&self.eta2)?,
            delay_exponent: self.d,
            max_delay: self.max_delay,
            tag_resolution: self.tau,
            window: self.window.unwrap_or(self.tau),
            emission_spacing: self.emit_spacing,
            seed: self.seed,
        })
    }
}

impl PairingArgs {
    fn spec(&self, window: Option<f64>, k: Option<u64>, resolution: f64) -> Result<PairingSpec, CliError> {
        let need_window = || window.ok_or_else(|| usage("this procedure needs --window"));
        Ok(match self.procedure.unwrap_or(Procedure::Index) {
            Procedure::Index => PairingSpec::IndexWindow {
                k: match (k, window) {
                    (Some(k), _) => k,
                    (None, Some(w)) => eprb_core::pairing::window_in_ticks(w, resolution).ceil() as u64,
                    (None, None) => return Err(usage("the index procedure needs --k or --window")),
                },
            },
            Procedure::Binned => PairingSpec::BinnedClock {
                bin_size: match self.bin_size {
                    Some(b) => b,
                    None => 2.0 * need_window()?,
                },
            },
            Procedure::Relative => PairingSpec::RelativeWindow {
                window: need_window()?,
                delta: self.delta,
            },
            Procedure::Shifted => PairingSpec::ShiftedWindow {
                window: need_window()?,
                resolution: self.shift_resolution.unwrap_or(resolution),
            },
        })
    }
}

/// Inserts the `--config` file's entries right after the subcommand, so
/// that flags given later on the command line override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let strs: Vec<Option<&str>> = args.iter().map(|a| a.to_str()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        match a {
            Some("--config") => path = strs.get(i + 1).copied().flatten(),
            Some(s) if s.starts_with("--config=") => path = Some(&s["--config=".len()..]),
            _ => {}
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{path}:{}: expected key=value", n + 1)))?;
        let k = k.trim();
        if k == "config" {
            return Err(usage(format!("{path}:{}: config files cannot include others", n + 1)));
        }
        extra.push(OsString::from(format!("--{k}={}", v.trim())));
    }
    // args[0] is the program, args[1] the subcommand
    if args.len() < 2 {
        return Ok(args);
    }
    let mut out = args[..2].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

fn emit(output: &OutputArgs, bytes: &[u8]) -> Result<(), CliError> {
    match &output.out {
        Some(p) => std::fs::write(p, bytes).map_err(|source| CliError::Io {
            path: p.clone(),
            source,
        }),
        None => std::io::stdout().write_all(bytes).map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(usage("--threads must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| usage(format!("cannot start {n} threads: {e}"))),
    }
}

fn simulate(a: &SimulateArgs) -> Result<Vec<u8>, CliError> {
    let cfg = a.sim.to_config()?;
    let k = parse_k(a.sim.k.as_deref())?;
    let format = a.output.format.into();
    if let Some(n) = a.curve {
        if n == 0 {
            return Err(usage("--curve needs at least one point"));
        }
        if a.log1.is_some() || a.log2.is_some() || a.pairing.procedure.is_some_and(|p| p != Procedure::Index) {
            return Err(usage("--curve uses the index window and writes no logs"));
        }
        let layout = CurveLayout::for_case(cfg.case);
        let points = correlation_curve(&cfg, &theta_grid(n), layout, k, "curve/")?;
        return Ok(write_report(&curve_report(&points, layout, &cfg), format));
    }

    let sim = Simulation::new(cfg)?;
    let cfg = sim.config();
    let procedure = a.pairing.procedure.unwrap_or(Procedure::Index);
    if procedure == Procedure::Index && a.log1.is_none() && a.log2.is_none() {
        return Ok(write_report(&sim.report(k), format));
    }

    let (l1, l2) = sim.generate_logs();
    for (path, log) in [(&a.log1, &l1), (&a.log2, &l2)] {
        if let Some(p) = path {
            write_file(p, &write_log(log, log.tick_resolution))?;
        }
    }
    let report = if procedure == Procedure::Index {
        sim.report(k)
    } else {
        let spec = a.pairing.spec(Some(cfg.window), k, cfg.tag_resolution)?;
        let mut r = pair_report(&spec, &l1, &l2)?;
        r = r.with_gamma(&gamma_by_setting(&l1, &l2, cfg.window)?);
        r.summary.window = Some(cfg.window);
        r.summary.d = Some(cfg.delay_exponent);
        r.summary.tau = Some(cfg.tag_resolution);
        r.summary.seed = Some(cfg.seed);
        r
    };
    Ok(write_report(&report, format))
}

fn pair_report(spec: &PairingSpec, l1: &EventLog, l2: &EventLog) -> Result<CorrelationReport, CliError> {
    let out = spec.apply(l1, l2)?;
    let mut r = CorrelationReport::from_tally(&out.tally, &l1.settings, &l2.settings, spec.name())
        .with_means(unconditioned_means(l1), unconditioned_means(l2));
    r.summary.delta = out.delta;
    Ok(r)
}

fn read(path: &Path) -> Result<EventLog, CliError> {
    read_log_file(path).map_err(|source| match source {
        TtioError::Io(e) => CliError::Io {
            path: path.to_owned(),
            source: e,
        },
        source => CliError::Parse {
            path: path.to_owned(),
            source,
        },
    })
}

fn analyze(a: &AnalyzeArgs) -> Result<Vec<u8>, CliError> {
    let l1 = read(&a.input1)?;
    let l2 = read(&a.input2)?;
    for (path, log) in [(&a.input1, &l1), (&a.input2, &l2)] {
        if log.is_empty() {
            return Err(CliError::EmptyInput { path: path.clone() });
        }
    }
    let spec = a.pairing.spec(a.window, parse_k(a.k.as_deref())?, l1.tick_resolution)?;
    let mut r = pair_report(&spec, &l1, &l2)?;
    r.summary.window = a.window;
    r.summary.tau = Some(l1.tick_resolution);
    Ok(write_report(&r, a.output.format.into()))
}

fn sweep(a: &SweepArgs) -> Result<Vec<u8>, CliError> {
    let base = a.sim.to_config()?;
    let grid = parse_list(&a.grid)?;
    if grid.is_empty() {
        return Err(usage("--grid is empty"));
    }
    if a.sweep != Axis::Theta && (a.curve_points == 0 || a.curve_points % 8 != 0) {
        return Err(usage("--curve-points must be a positive multiple of 8"));
    }
    let spec = SweepSpec {
        base,
        axis: match a.sweep {
            Axis::Window => SweepAxis::Window,
            Axis::D => SweepAxis::Exponent,
            Axis::Theta => SweepAxis::Theta,
        },
        grid,
        curve_points: a.curve_points,
        k: parse_k(a.sim.k.as_deref())?,
    };
    let rows = eprb_core::sweep::run_sweep(&spec)?;
    Ok(write_sweep(&rows, a.output.format.into()))
}

#[derive(Debug, Serialize)]
struct OracleRow {
    theta: f64,
    e_singlet: f64,
    s_singlet: f64,
    e_model: f64,
    s_model: Option<f64>,
    e_finite: Option<f64>,
    gamma_finite: Option<f64>,
    gamma_first_order: Option<f64>,
    first_order_valid: Option<bool>,
}

fn oracle(a: &OracleArgs) -> Result<Vec<u8>, CliError> {
    if !(a.max_delay.is_finite() && a.max_delay > 0.0) {
        return Err(usage("--max-delay must be positive"));
    }
    let thetas: Vec<Angle> = match &a.grid {
        Some(g) => parse_list(g)?.into_iter().map(Angle::new).collect(),
        None if a.points > 0 => theta_grid(a.points),
        None => return Err(usage("--points must be positive")),
    };
    let model = Model::FirstOrder { d: a.d };
    // times scale with T0
    let w = a.window.map(|w| w / a.max_delay);
    let mut rows = Vec::with_capacity(thetas.len());
    for t in thetas {
        let finite = w.map(|w| model_finite_window(t, a.d, w)).transpose()?;
        let g1 = w.map(|w| gamma_first_order(w, 1.0));
        rows.push(OracleRow {
            theta: t.radians(),
            e_singlet: qt_singlet(Angle::ZERO, t).e,
            s_singlet: qt_s_theta(t),
            e_model: model_e_first_order(t, a.d)?,
            s_model: s_theta(&model, t),
            e_finite: finite.map(|f| f.0),
            gamma_finite: finite.map(|f| f.1),
            gamma_first_order: g1.map(|g| g.value),
            first_order_valid: g1.map(|g| g.valid),
        });
    }
    Ok(match a.output.format {
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(&rows).expect("rows serialize");
            v.push(b'\n');
            v
        }
        Format::Csv => {
            let cell = |x: Option<f64>| x.map(format_number).unwrap_or_default();
            let mut s = String::from(
                "theta,e_singlet,s_singlet,e_model,s_model,e_finite,gamma_finite,gamma_first_order,first_order_valid\n",
            );
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    format_number(r.theta),
                    format_number(r.e_singlet),
                    format_number(r.s_singlet),
                    format_number(r.e_model),
                    cell(r.s_model),
                    cell(r.e_finite),
                    cell(r.gamma_finite),
                    cell(r.gamma_first_order),
                    r.first_order_valid.map(|b| b.to_string()).unwrap_or_default()
                );
            }
            s.into_bytes()
        }
    })
}

/// Runs one command. Help and version requests print and return `Ok`.
pub fn run(args: Vec<OsString>) -> Result<(), CliError> {
    let args = expand_config(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(usage(e.to_string().trim_end().to_owned())),
    };
    let (output, bytes) = match &cli.command {
        Command::Simulate(a) => (&a.output, with_threads(a.output.threads, || simulate(a))??),
        Command::Analyze(a) => (&a.output, with_threads(a.output.threads, || analyze(a))??),
        Command::Sweep(a) => (&a.output, with_threads(a.output.threads, || sweep(a))??),
        Command::Oracle(a) => (&a.output, with_threads(a.output.threads, || oracle(a))??),
    };
    emit(output, &bytes)
}
