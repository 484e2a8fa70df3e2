//! Correlation curves and parameter sweeps.
//!
//! A curve simulates one setting pair per θ point with `N` pairs each. Every
//! point draws from streams labeled by its grid coordinate, so points can run
//! in any order.

use std::f64::consts::FRAC_PI_4;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::config::{Case, ConfigError, SimConfig};
use crate::estimators::{
    max_abs_over, theta_grid, theta_scan, Correlation, CorrelationEntry, CorrelationReport, RelativeCurve,
    ReportSummary,
};
use crate::oracle::{gamma_first_order, model_e_first_order, qt_product, Model};
use crate::simulate::Simulation;

/// How a θ point maps to analyzer settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveLayout {
    /// `α = 0`, `β = θ`.
    Relative,
    /// `α = θ`, `β = θ + π/4`.
    QuarterOffset,
}

impl CurveLayout {
    pub fn settings(self, theta: Angle) -> (Angle, Angle) {
        match self {
            CurveLayout::Relative => (Angle::ZERO, theta),
            CurveLayout::QuarterOffset => (theta, theta + Angle::new(FRAC_PI_4)),
        }
    }

    /// The layout used for each source type.
    pub fn for_case(case: Case) -> Self {
        match case {
            Case::CaseI => CurveLayout::Relative,
            Case::CaseII => CurveLayout::QuarterOffset,
        }
    }
}

/// Measured quantities at one θ point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub theta: Angle,
    pub alpha: Angle,
    pub beta: Angle,
    pub counts: [u64; 4],
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub e: Option<f64>,
    pub gamma: Option<f64>,
    /// Mean outcome over all events, ignoring coincidences.
    pub mean1: Option<f64>,
    pub mean2: Option<f64>,
    pub pairs: u64,
}

/// Simulates `base` at each θ in `thetas` (settings from `layout`, `M = 1`).
/// `k` overrides the index window.
pub fn correlation_curve(
    base: &SimConfig,
    thetas: &[Angle],
    layout: CurveLayout,
    k: Option<u64>,
    label: &str,
) -> Result<Vec<CurvePoint>, ConfigError> {
    base.clone().validate()?;
    thetas
        .par_iter()
        .enumerate()
        .map(|(i, &theta)| {
            let (alpha, beta) = layout.settings(theta);
            let cfg = SimConfig {
                angles1: vec![alpha],
                angles2: vec![beta],
                ..base.clone()
            };
            let sim = Simulation::new(cfg)?.with_stream_prefix(format!("{label}theta-{i}/"));
            let st = sim.pair_statistics(k);
            let counts = st.tally.counts(1, 1);
            let corr = Correlation::from_counts(counts);
            Ok(CurvePoint {
                theta,
                alpha,
                beta,
                counts,
                e1: corr.map(|c| c.e1),
                e2: corr.map(|c| c.e2),
                e: corr.map(|c| c.e),
                gamma: st.gamma(),
                mean1: st.means1()[0],
                mean2: st.means2()[0],
                pairs: st.num_pairs(),
            })
        })
        .collect()
}

/// `E` of a [`CurveLayout::Relative`] curve sampled on `theta_grid(n)`,
/// as a function of `β − α`.
pub fn relative_curve(points: &[CurvePoint]) -> RelativeCurve {
    RelativeCurve::new(points.iter().map(|p| p.e).collect())
}

/// `max_θ |S(θ)|` of a curve sampled on `theta_grid(points.len())`.
///
/// For the quarter-offset layout `S(θ) = 2E(θ, θ + π/4)`.
pub fn curve_s_max(points: &[CurvePoint], layout: CurveLayout) -> Option<f64> {
    let grid: Vec<Angle> = points.iter().map(|p| p.theta).collect();
    match layout {
        CurveLayout::Relative => theta_scan(&relative_curve(points), &grid).s_max,
        CurveLayout::QuarterOffset => {
            max_abs_over(&grid, |t| {
                points.iter().find(|p| p.theta == t).and_then(|p| p.e).map(|e| 2.0 * e)
            })
            .s_max
        }
    }
}

/// A report with one entry per curve point; point `j` is setting `j + 1` at
/// both stations.
pub fn curve_report(points: &[CurvePoint], layout: CurveLayout, cfg: &SimConfig) -> CorrelationReport {
    let entries: Vec<CorrelationEntry> = points
        .iter()
        .enumerate()
        .map(|(j, p)| CorrelationEntry {
            setting1: j as u32 + 1,
            setting2: j as u32 + 1,
            alpha: p.alpha,
            beta: p.beta,
            c_pp: p.counts[0],
            c_pm: p.counts[1],
            c_mp: p.counts[2],
            c_mm: p.counts[3],
            e1: p.e1,
            e2: p.e2,
            e: p.e,
            gamma: p.gamma,
        })
        .collect();
    let pairs: u64 = points.iter().map(|p| p.pairs).sum();
    let coincidences: u64 = entries.iter().map(|e| e.coincidences()).sum();
    CorrelationReport {
        means1: points.iter().map(|p| p.mean1).collect(),
        means2: points.iter().map(|p| p.mean2).collect(),
        summary: ReportSummary {
            procedure: "index".into(),
            s_max: curve_s_max(points, layout),
            window: Some(cfg.window),
            d: Some(cfg.delay_exponent),
            tau: Some(cfg.tag_resolution),
            seed: Some(cfg.seed),
            coincidence_frequency: (pairs > 0).then(|| coincidences as f64 / pairs as f64),
            delta: None,
            total_events_1: pairs,
            total_events_2: pairs,
            undefined_entries: entries.iter().filter(|e| e.e.is_none()).count(),
        },
        entries,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Coincidence window, with `τ = W` (`k = 1`).
    Window,
    /// Delay exponent `d`.
    Exponent,
    /// Relative angle `θ = β − α`.
    Theta,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Window => "window",
            SweepAxis::Exponent => "d",
            SweepAxis::Theta => "theta",
        }
    }
}

/// θ values at which every sweep row reports `Γ`.
pub fn gamma_sample_angles() -> [Angle; 5] {
    [0.0, 1.0, 2.0, 3.0, 4.0].map(|j| Angle::new(j * FRAC_PI_4 / 2.0))
}

/// One row of a sweep, simulated values next to the model's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub s_max: Option<f64>,
    /// First-order-in-W `S_max` for the row's `d` (Case I).
    pub s_max_theory: Option<f64>,
    pub e: Option<f64>,
    pub e_theory: Option<f64>,
    pub gamma: Option<f64>,
    /// `Γ` at θ = 0, π/8, π/4, 3π/8, π/2.
    pub gamma_samples: Vec<Option<f64>>,
    /// `16W/(3πT0)`.
    pub gamma_theory: Option<f64>,
}

/// Options shared by the points of a sweep.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    /// θ points per curve for the window and exponent axes; a multiple of 8
    /// so that the `Γ` sample angles lie on the grid.
    pub curve_points: usize,
    pub k: Option<u64>,
}

fn theory_smax(case: Case, d: f64, points: usize) -> Option<f64> {
    match case {
        Case::CaseI => theta_scan(&Model::FirstOrder { d }, &theta_grid(points)).s_max,
        Case::CaseII => None,
    }
}

fn curve_row(spec: &SweepSpec, cfg: &SimConfig, axis_value: f64, label: &str) -> Result<SweepRow, ConfigError> {
    let n = spec.curve_points;
    let grid = theta_grid(n);
    let layout = CurveLayout::for_case(cfg.case);
    let points = correlation_curve(cfg, &grid, layout, spec.k, label)?;
    let s_max = curve_s_max(&points, layout);
    let gamma_samples = gamma_sample_angles()
        .iter()
        .map(|t| {
            let j = ((t.radians() / (std::f64::consts::PI / n as f64)).round() as usize) % n;
            points[j].gamma
        })
        .collect();
    let total: u64 = points.iter().map(|p| p.pairs).sum();
    let hits: f64 = points.iter().filter_map(|p| p.gamma.map(|g| g * p.pairs as f64)).sum();
    Ok(SweepRow {
        axis: spec.axis,
        value: axis_value,
        s_max,
        s_max_theory: theory_smax(cfg.case, cfg.delay_exponent, n),
        e: None,
        e_theory: None,
        gamma: (total > 0).then(|| hits / total as f64),
        gamma_samples,
        gamma_theory: Some(gamma_first_order(cfg.window, cfg.max_delay).value),
    })
}

/// Runs every grid point of `spec`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, ConfigError> {
    spec.base.clone().validate()?;
    spec.grid
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let label = format!("{}-{i}/", spec.axis.name());
            match spec.axis {
                SweepAxis::Window => {
                    let cfg = SimConfig {
                        window: v,
                        tag_resolution: v,
                        ..spec.base.clone()
                    };
                    curve_row(spec, &cfg, v, &label)
                }
                SweepAxis::Exponent => {
                    let cfg = SimConfig {
                        delay_exponent: v,
                        ..spec.base.clone()
                    };
                    curve_row(spec, &cfg, v, &label)
                }
                SweepAxis::Theta => {
                    let theta = Angle::new(v);
                    let layout = CurveLayout::for_case(spec.base.case);
                    let p = correlation_curve(&spec.base, &[theta], layout, spec.k, &label)?.remove(0);
                    let e_theory = match spec.base.case {
                        Case::CaseI => model_e_first_order(p.alpha - p.beta, spec.base.delay_exponent).ok(),
                        Case::CaseII => spec
                            .base
                            .eta1
                            .zip(spec.base.eta2)
                            .map(|(a, b)| qt_product(p.alpha, p.beta, a, b).e),
                    };
                    Ok(SweepRow {
                        axis: spec.axis,
                        value: v,
                        s_max: None,
                        s_max_theory: None,
                        e: p.e,
                        e_theory,
                        gamma: p.gamma,
                        gamma_samples: Vec::new(),
                        gamma_theory: Some(gamma_first_order(spec.base.window, spec.base.max_delay).value),
                    })
                }
            }
        })
        .collect()
}
