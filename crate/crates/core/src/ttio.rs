//! Time-tag files (`TTAG/1`) and report serialization.
//!
//! A time-tag file is UTF-8 text with LF line endings:
//!
//! ```text
//! #TTAG/1
//! #station=1
//! #tick_resolution=0.00025
//! #setting.1=0
//! #setting.2=0.7853981633974483
//! #meta.seed=1
//! 0,0,2,1
//! 1,16000,1,-1
//! ```
//!
//! Records are `event_index,tick,setting_index,outcome` with ticks
//! nondecreasing. Settings are numbered from 1 and given in radians.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::angle::Angle;
use crate::estimators::CorrelationReport;
use crate::event::{DetectionEvent, EventLog, Outcome, Station};
use crate::sweep::SweepRow;

pub const MAGIC: &str = "#TTAG/1";

#[derive(Debug, Error)]
pub enum TtioError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: unknown setting index {index}")]
    UnknownSetting { line: usize, index: u64 },
    #[error("line {line}: tick {tick} is earlier than the previous tick {previous}")]
    DecreasingTick { line: usize, tick: i64, previous: i64 },
    #[error("line {line}: outcome must be +1 or -1, got {value:?}")]
    InvalidOutcome { line: usize, value: String },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("input is not valid UTF-8")]
    Encoding,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl TtioError {
    /// Line number for parse errors.
    pub fn line(&self) -> Option<usize> {
        match self {
            TtioError::MalformedHeader { line, .. }
            | TtioError::UnknownSetting { line, .. }
            | TtioError::DecreasingTick { line, .. }
            | TtioError::InvalidOutcome { line, .. }
            | TtioError::MalformedRecord { line, .. } => Some(*line),
            _ => None,
        }
    }
}

fn single_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// Serializes `log` with ticks of `tick_resolution`. Ticks are the log's
/// own clock ticks when the resolutions agree, and are rescaled (rounded)
/// otherwise.
pub fn write_log(log: &EventLog, tick_resolution: f64) -> Vec<u8> {
    assert!(
        tick_resolution.is_finite() && tick_resolution > 0.0,
        "tick resolution must be positive"
    );
    let same = (tick_resolution - log.tick_resolution).abs() <= 1e-12 * tick_resolution;
    let scale = log.tick_resolution / tick_resolution;
    let mut out = String::with_capacity(64 + 24 * log.len());
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "#station={}", log.station.number());
    let _ = writeln!(out, "#tick_resolution={tick_resolution}");
    for (i, a) in log.settings.iter().enumerate() {
        let _ = writeln!(out, "#setting.{}={}", i + 1, format_number(a.radians()));
    }
    for (k, v) in &log.metadata {
        let _ = writeln!(out, "#meta.{}={}", single_line(k).replace('=', "_"), single_line(v));
    }
    for e in &log.events {
        let tick = if same {
            e.clock_tick
        } else {
            (e.clock_tick as f64 * scale).round() as i64
        };
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.pair_index,
            tick,
            e.setting_index,
            e.outcome.value()
        );
    }
    out.into_bytes()
}

fn header_err(line: usize, reason: impl Into<String>) -> TtioError {
    TtioError::MalformedHeader {
        line,
        reason: reason.into(),
    }
}

fn record_err(line: usize, reason: impl Into<String>) -> TtioError {
    TtioError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

/// Parses a time-tag file. Events get `absolute_time = tick·resolution`,
/// `tag = clock_tick` and an undefined (NaN) delay.
pub fn read_log(bytes: &[u8]) -> Result<EventLog, TtioError> {
    let text = std::str::from_utf8(bytes).map_err(|_| TtioError::Encoding)?;
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));

    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        _ => return Err(header_err(1, format!("first line must be {MAGIC}"))),
    }

    let mut station = None;
    let mut resolution = None;
    let mut settings: Vec<(usize, u64, Angle)> = Vec::new();
    let mut metadata = std::collections::BTreeMap::new();
    let mut events = Vec::new();
    let mut last_tick: Option<i64> = None;
    let mut setting_list: Option<Vec<Angle>> = None;

    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            if setting_list.is_some() {
                return Err(header_err(n, "header line after the first record"));
            }
            let (key, value) = h.split_once('=').ok_or_else(|| header_err(n, "expected key=value"))?;
            match key {
                "station" => {
                    let s = value
                        .parse::<u8>()
                        .ok()
                        .and_then(Station::from_number)
                        .ok_or_else(|| header_err(n, format!("station must be 1 or 2, got {value:?}")))?;
                    station = Some(s);
                }
                "tick_resolution" => {
                    let r: f64 = value
                        .parse()
                        .map_err(|_| header_err(n, format!("bad tick resolution {value:?}")))?;
                    if !(r.is_finite() && r > 0.0) {
                        return Err(header_err(n, "tick resolution must be positive"));
                    }
                    resolution = Some(r);
                }
                _ => {
                    if let Some(idx) = key.strip_prefix("setting.") {
                        let i: u64 = idx
                            .parse()
                            .map_err(|_| header_err(n, format!("bad setting index {idx:?}")))?;
                        let a: f64 = value
                            .parse()
                            .map_err(|_| header_err(n, format!("bad setting angle {value:?}")))?;
                        if !a.is_finite() {
                            return Err(header_err(n, "setting angle must be finite"));
                        }
                        settings.push((n, i, Angle::new(a)));
                    } else if let Some(k) = key.strip_prefix("meta.") {
                        metadata.insert(k.to_owned(), value.to_owned());
                    } else {
                        return Err(header_err(n, format!("unknown header key {key:?}")));
                    }
                }
            }
            continue;
        }

        let list = match &setting_list {
            Some(l) => l,
            None => {
                setting_list = Some(collect_settings(&mut settings)?);
                if station.is_none() {
                    return Err(header_err(n, "missing station"));
                }
                if resolution.is_none() {
                    return Err(header_err(n, "missing tick_resolution"));
                }
                setting_list.as_ref().expect("just set")
            }
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(record_err(n, format!("expected 4 fields, found {}", fields.len())));
        }
        let index: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| record_err(n, format!("bad event index {:?}", fields[0])))?;
        let tick: i64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| record_err(n, format!("bad tick {:?}", fields[1])))?;
        let setting: u64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| record_err(n, format!("bad setting index {:?}", fields[2])))?;
        let outcome = match fields[3].trim() {
            "1" | "+1" => Outcome::Plus,
            "-1" => Outcome::Minus,
            other => {
                return Err(TtioError::InvalidOutcome {
                    line: n,
                    value: other.to_owned(),
                })
            }
        };
        let angle = usize::try_from(setting)
            .ok()
            .and_then(|s| s.checked_sub(1))
            .and_then(|s| list.get(s))
            .copied()
            .ok_or(TtioError::UnknownSetting {
                line: n,
                index: setting,
            })?;
        if let Some(prev) = last_tick {
            if tick < prev {
                return Err(TtioError::DecreasingTick {
                    line: n,
                    tick,
                    previous: prev,
                });
            }
        }
        last_tick = Some(tick);
        let station = station.expect("checked above");
        let res = resolution.expect("checked above");
        events.push(DetectionEvent {
            pair_index: index,
            station,
            outcome,
            setting_index: setting as u32,
            setting: angle,
            delay: f64::NAN,
            tag: tick,
            clock_tick: tick,
            absolute_time: tick as f64 * res,
        });
    }

    let settings = match setting_list {
        Some(l) => l,
        None => collect_settings(&mut settings)?,
    };
    let last = text.split('\n').count();
    let station = station.ok_or_else(|| header_err(last, "missing station"))?;
    let resolution = resolution.ok_or_else(|| header_err(last, "missing tick_resolution"))?;
    Ok(EventLog {
        station,
        tick_resolution: resolution,
        settings,
        metadata,
        events,
    })
}

/// Settings must be numbered 1..=M without gaps or repeats.
fn collect_settings(raw: &mut [(usize, u64, Angle)]) -> Result<Vec<Angle>, TtioError> {
    raw.sort_by_key(|s| s.1);
    let mut out = Vec::with_capacity(raw.len());
    for (expected, &(line, i, a)) in (1u64..).zip(raw.iter()) {
        if i != expected {
            return Err(header_err(
                line,
                format!("setting indices must run 1..M; found {i} where {expected} was expected"),
            ));
        }
        out.push(a);
    }
    Ok(out)
}

pub fn read_log_file(path: impl AsRef<Path>) -> Result<EventLog, TtioError> {
    read_log(&std::fs::read(path)?)
}

pub fn write_log_file(path: impl AsRef<Path>, log: &EventLog) -> Result<(), TtioError> {
    std::fs::write(path, write_log(log, log.tick_resolution))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Shortest round-trip decimal, switching to exponent notation for very
/// small or very large magnitudes.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

pub const REPORT_COLUMNS: &str = "alpha,beta,c_pp,c_pm,c_mp,c_mm,e1,e2,e,gamma";

/// CSV (one row per setting pair, empty cells for undefined values) or
/// pretty-printed JSON including the summary block.
pub fn write_report(report: &CorrelationReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(report).expect("report serializes");
            v.push(b'\n');
            v
        }
        ReportFormat::Csv => {
            let mut out = String::from(REPORT_COLUMNS);
            out.push('\n');
            for e in &report.entries {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    format_number(e.alpha.radians()),
                    format_number(e.beta.radians()),
                    e.c_pp,
                    e.c_pm,
                    e.c_mp,
                    e.c_mm,
                    cell(e.e1),
                    cell(e.e2),
                    cell(e.e),
                    cell(e.gamma)
                );
            }
            out.into_bytes()
        }
    }
}

pub fn read_report_json(bytes: &[u8]) -> Result<CorrelationReport, TtioError> {
    Ok(serde_json::from_slice(bytes)?)
}

pub const SWEEP_COLUMNS: &str =
    "axis,value,s_max,s_max_theory,e,e_theory,gamma,gamma_0,gamma_pi8,gamma_pi4,gamma_3pi8,gamma_pi2,gamma_theory";

pub fn write_sweep(rows: &[SweepRow], format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(rows).expect("rows serialize");
            v.push(b'\n');
            v
        }
        ReportFormat::Csv => {
            let mut out = String::from(SWEEP_COLUMNS);
            out.push('\n');
            for r in rows {
                let g = |i: usize| cell(r.gamma_samples.get(i).copied().flatten());
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.axis.name(),
                    format_number(r.value),
                    cell(r.s_max),
                    cell(r.s_max_theory),
                    cell(r.e),
                    cell(r.e_theory),
                    cell(r.gamma),
                    g(0),
                    g(1),
                    g(2),
                    g(3),
                    g(4),
                    cell(r.gamma_theory)
                );
            }
            out.into_bytes()
        }
    }
}
