//! Averages, correlations, CHSH functions and coincidence frequencies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::event::{DetectionEvent, EventLog, Outcome};
use crate::pairing::{window_in_ticks, CoincidenceTally, PairingError};

/// Single-particle averages and the two-particle correlation of one
/// setting pair, conditioned on coincidence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub e1: f64,
    pub e2: f64,
    pub e: f64,
}

impl Correlation {
    /// From `[C₊₊, C₊₋, C₋₊, C₋₋]`; `None` when there are no coincidences.
    pub fn from_counts(c: [u64; 4]) -> Option<Correlation> {
        let [pp, pm, mp, mm] = c.map(|x| x as f64);
        let total = pp + pm + mp + mm;
        if total == 0.0 {
            return None;
        }
        Some(Correlation {
            e1: (pp + pm - mp - mm) / total,
            e2: (pp - pm + mp - mm) / total,
            e: (pp + mm - pm - mp) / total,
        })
    }
}

/// One row of a report: a setting pair with its counts and estimates.
/// Undefined values are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub setting1: u32,
    pub setting2: u32,
    pub alpha: Angle,
    pub beta: Angle,
    pub c_pp: u64,
    pub c_pm: u64,
    pub c_mp: u64,
    pub c_mm: u64,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub e: Option<f64>,
    pub gamma: Option<f64>,
}

impl CorrelationEntry {
    pub fn counts(&self) -> [u64; 4] {
        [self.c_pp, self.c_pm, self.c_mp, self.c_mm]
    }

    pub fn coincidences(&self) -> u64 {
        self.counts().iter().sum()
    }
}

/// Entries for every setting pair of `tally`, in row-major order.
///
/// # Panics
/// If the angle lists do not match the tally's shape.
pub fn correlations(tally: &CoincidenceTally, angles1: &[Angle], angles2: &[Angle]) -> Vec<CorrelationEntry> {
    assert_eq!(
        (tally.m1, tally.m2),
        (angles1.len(), angles2.len()),
        "angle lists must match tally shape"
    );
    tally
        .entries()
        .map(|(s1, s2, c)| {
            let corr = Correlation::from_counts(c);
            CorrelationEntry {
                setting1: s1,
                setting2: s2,
                alpha: angles1[s1 as usize - 1],
                beta: angles2[s2 as usize - 1],
                c_pp: c[0],
                c_pm: c[1],
                c_mp: c[2],
                c_mm: c[3],
                e1: corr.map(|c| c.e1),
                e2: corr.map(|c| c.e2),
                e: corr.map(|c| c.e),
                gamma: None,
            }
        })
        .collect()
}

/// `S = E(α,β) − E(α,β′) + E(α′,β) + E(α′,β′)`.
pub fn chsh_s(e_ab: f64, e_ab2: f64, e_a2b: f64, e_a2b2: f64) -> f64 {
    e_ab - e_ab2 + e_a2b + e_a2b2
}

/// Anything that yields `E(α, β)`, possibly undefined.
pub trait CorrelationSource {
    fn correlation(&self, alpha: Angle, beta: Angle) -> Option<f64>;
}

/// Wraps a closed-form `E(α, β)`.
pub struct Analytic<F>(pub F);

impl<F: Fn(Angle, Angle) -> f64> CorrelationSource for Analytic<F> {
    fn correlation(&self, alpha: Angle, beta: Angle) -> Option<f64> {
        Some((self.0)(alpha, beta))
    }
}

/// `S(θ) = E(0,θ) − E(0,3θ) + E(2θ,θ) + E(2θ,3θ)`.
pub fn s_theta<C: CorrelationSource + ?Sized>(source: &C, theta: Angle) -> Option<f64> {
    let t = theta.radians();
    let a = |x: f64| Angle::new(x);
    Some(chsh_s(
        source.correlation(a(0.0), a(t))?,
        source.correlation(a(0.0), a(3.0 * t))?,
        source.correlation(a(2.0 * t), a(t))?,
        source.correlation(a(2.0 * t), a(3.0 * t))?,
    ))
}

/// Measured `E(α, β)` at discrete setting pairs, looked up modulo π.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrelationTable {
    rows: Vec<(Angle, Angle, Option<f64>)>,
}

const ANGLE_MATCH: f64 = 1e-9;

impl CorrelationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: &[CorrelationEntry]) -> Self {
        CorrelationTable {
            rows: entries.iter().map(|e| (e.alpha, e.beta, e.e)).collect(),
        }
    }

    pub fn insert(&mut self, alpha: Angle, beta: Angle, e: Option<f64>) {
        self.rows.push((alpha, beta, e));
    }
}

impl CorrelationSource for CorrelationTable {
    fn correlation(&self, alpha: Angle, beta: Angle) -> Option<f64> {
        self.rows
            .iter()
            .find(|(a, b, _)| a.axial_distance(alpha) < ANGLE_MATCH && b.axial_distance(beta) < ANGLE_MATCH)
            .and_then(|r| r.2)
    }
}

/// `E` as a function of `β − α` alone, sampled at `jπ/n` for `j < n`.
/// Valid for rotationally invariant sources (Case I).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeCurve {
    values: Vec<Option<f64>>,
}

impl RelativeCurve {
    pub fn new(values: Vec<Option<f64>>) -> Self {
        assert!(!values.is_empty(), "curve needs at least one point");
        RelativeCurve { values }
    }

    pub fn tabulate(n: usize, f: impl Fn(Angle) -> Option<f64>) -> Self {
        Self::new(theta_grid(n).into_iter().map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        PI / self.values.len() as f64
    }

    pub fn grid(&self) -> Vec<Angle> {
        theta_grid(self.values.len())
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    /// Value at `θ` when `θ` lies on the grid (mod π).
    pub fn at(&self, theta: Angle) -> Option<f64> {
        let x = theta.radians().rem_euclid(PI) / self.step();
        let j = x.round();
        if (x - j).abs() > 1e-6 {
            return None;
        }
        self.values[j as usize % self.values.len()]
    }
}

impl CorrelationSource for RelativeCurve {
    fn correlation(&self, alpha: Angle, beta: Angle) -> Option<f64> {
        self.at(beta - alpha)
    }
}

/// `n` equally spaced angles `jπ/n` on `[0, π)`.
pub fn theta_grid(n: usize) -> Vec<Angle> {
    (0..n).map(|j| Angle::new(j as f64 * PI / n as f64)).collect()
}

/// Number of θ points used when no grid is given.
pub const DEFAULT_THETA_POINTS: usize = 360;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanMode {
    /// Maximize `|S(θ)|` over a θ grid.
    Theta,
    /// Maximize `|S|` over all `(α, α′, β, β′)` from the grids.
    FourAngle,
}

/// Result of an `S_max` scan. `skipped` counts points left out because a
/// correlation they need is undefined.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub s_max: Option<f64>,
    /// The maximizing θ, or `[α, α′, β, β′]`.
    pub argmax: Vec<Angle>,
    pub evaluated: usize,
    pub skipped: usize,
}

impl ScanResult {
    fn empty() -> Self {
        ScanResult {
            s_max: None,
            argmax: Vec::new(),
            evaluated: 0,
            skipped: 0,
        }
    }

    fn offer(&mut self, s: Option<f64>, at: impl FnOnce() -> Vec<Angle>) {
        match s {
            None => self.skipped += 1,
            Some(s) => {
                self.evaluated += 1;
                if self.s_max.map_or(true, |m| s.abs() > m) {
                    self.s_max = Some(s.abs());
                    self.argmax = at();
                }
            }
        }
    }
}

/// Largest `|f(θ)|` over `grid`.
pub fn max_abs_over(grid: &[Angle], f: impl Fn(Angle) -> Option<f64>) -> ScanResult {
    let mut r = ScanResult::empty();
    for &t in grid {
        r.offer(f(t), || vec![t]);
    }
    r
}

/// `max_θ |S(θ)|` over `grid`.
pub fn theta_scan<C: CorrelationSource + ?Sized>(source: &C, grid: &[Angle]) -> ScanResult {
    max_abs_over(grid, |t| s_theta(source, t))
}

/// `max |S(α, α′, β, β′)|` with `α ≠ α′` from `grid1` and `β ≠ β′` from
/// `grid2`. Cost is quadratic in each grid.
pub fn four_angle_scan<C: CorrelationSource + ?Sized>(source: &C, grid1: &[Angle], grid2: &[Angle]) -> ScanResult {
    let e1: Vec<Vec<Option<f64>>> = grid1
        .iter()
        .map(|&a| grid2.iter().map(|&b| source.correlation(a, b)).collect())
        .collect();
    let mut r = ScanResult::empty();
    for i in 0..grid1.len() {
        for i2 in (0..grid1.len()).filter(|&x| x != i) {
            for j in 0..grid2.len() {
                for j2 in (0..grid2.len()).filter(|&x| x != j) {
                    let s = (|| Some(chsh_s(e1[i][j]?, e1[i][j2]?, e1[i2][j]?, e1[i2][j2]?)))();
                    r.offer(s, || vec![grid1[i], grid1[i2], grid2[j], grid2[j2]]);
                }
            }
        }
    }
    r
}

/// Dispatches on `mode`. The θ scan uses `grid1` and ignores `grid2`.
pub fn smax_scan<C: CorrelationSource + ?Sized>(
    source: &C,
    mode: ScanMode,
    grid1: &[Angle],
    grid2: &[Angle],
) -> ScanResult {
    match mode {
        ScanMode::Theta => theta_scan(source, grid1),
        ScanMode::FourAngle => four_angle_scan(source, grid1, grid2),
    }
}

fn within_window(a: &DetectionEvent, b: &DetectionEvent, w: f64) -> bool {
    (a.tag.abs_diff(b.tag) as f64) < w
}

fn check_pair_aligned(log1: &EventLog, log2: &EventLog) -> Result<f64, PairingError> {
    if log1.len() != log2.len()
        || log1
            .events
            .iter()
            .zip(&log2.events)
            .any(|(a, b)| a.pair_index != b.pair_index)
    {
        return Err(PairingError::NotPairAligned {
            detail: "coincidence frequency needs one event per pair at each station".into(),
        });
    }
    if log1.is_empty() {
        return Err(PairingError::EmptyLog(1));
    }
    let res = log1.tick_resolution;
    if !(res.is_finite() && res > 0.0) {
        return Err(PairingError::InvalidParameter {
            what: "tick_resolution",
            value: res,
        });
    }
    Ok(res)
}

/// Fraction of pairs whose time tags differ by less than `W`:
/// `Γ = (1/N) Σₙ [|k_{n,1} − k_{n,2}|·τ < W]`.
pub fn gamma(log1: &EventLog, log2: &EventLog, window: f64) -> Result<f64, PairingError> {
    let res = check_pair_aligned(log1, log2)?;
    let w = window_in_ticks(window, res);
    let hits = log1
        .events
        .iter()
        .zip(&log2.events)
        .filter(|(a, b)| within_window(a, b, w))
        .count();
    Ok(hits as f64 / log1.len() as f64)
}

/// `Γ` restricted to pairs measured at each setting pair, row-major.
pub fn gamma_by_setting(log1: &EventLog, log2: &EventLog, window: f64) -> Result<Vec<Option<f64>>, PairingError> {
    let res = check_pair_aligned(log1, log2)?;
    let w = window_in_ticks(window, res);
    let m2 = log2.settings.len();
    let mut hits = vec![0u64; log1.settings.len() * m2];
    let mut total = hits.clone();
    for (a, b) in log1.events.iter().zip(&log2.events) {
        let i = (a.setting_index as usize - 1) * m2 + b.setting_index as usize - 1;
        total[i] += 1;
        if within_window(a, b, w) {
            hits[i] += 1;
        }
    }
    Ok(hits
        .iter()
        .zip(&total)
        .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
        .collect())
}

/// Mean outcome per setting over every event, ignoring coincidences.
pub fn unconditioned_means(log: &EventLog) -> Vec<Option<f64>> {
    let mut acc = vec![(0i64, 0u64); log.settings.len()];
    for e in &log.events {
        let slot = &mut acc[e.setting_index as usize - 1];
        slot.0 += e.outcome.value() as i64;
        slot.1 += 1;
    }
    acc.iter().map(|&(s, n)| (n > 0).then(|| s as f64 / n as f64)).collect()
}

/// Running statistics over pair-aligned events, for runs too large to keep
/// their logs: the index-window tally, per-setting-pair window hits and
/// pair totals (for `Γ`), and per-setting outcome sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStatistics {
    pub tally: CoincidenceTally,
    window_ticks: f64,
    k: u64,
    hits: Vec<u64>,
    pairs: Vec<u64>,
    sums1: Vec<(i64, u64)>,
    sums2: Vec<(i64, u64)>,
}

impl PairStatistics {
    /// `k` is the index window, `window_ticks` the `Γ` window in tag units.
    pub fn new(m1: usize, m2: usize, k: u64, window_ticks: f64) -> Self {
        PairStatistics {
            tally: CoincidenceTally::new(m1, m2),
            window_ticks,
            k,
            hits: vec![0; m1 * m2],
            pairs: vec![0; m1 * m2],
            sums1: vec![(0, 0); m1],
            sums2: vec![(0, 0); m2],
        }
    }

    pub fn observe(&mut self, a: &DetectionEvent, b: &DetectionEvent) {
        let (s1, s2) = (a.setting_index as usize - 1, b.setting_index as usize - 1);
        let i = s1 * self.tally.m2 + s2;
        self.pairs[i] += 1;
        if within_window(a, b, self.window_ticks) {
            self.hits[i] += 1;
        }
        if a.tag.abs_diff(b.tag) < self.k {
            self.tally
                .record(a.setting_index, b.setting_index, a.outcome, b.outcome);
        }
        self.tally.total_events_1 += 1;
        self.tally.total_events_2 += 1;
        let add = |s: &mut (i64, u64), o: Outcome| {
            s.0 += o.value() as i64;
            s.1 += 1;
        };
        add(&mut self.sums1[s1], a.outcome);
        add(&mut self.sums2[s2], b.outcome);
    }

    pub fn merge(&mut self, other: &PairStatistics) -> Result<(), PairingError> {
        self.tally.merge(&other.tally)?;
        let add = |a: &mut [u64], b: &[u64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.hits, &other.hits);
        add(&mut self.pairs, &other.pairs);
        for (a, b) in self
            .sums1
            .iter_mut()
            .zip(&other.sums1)
            .chain(self.sums2.iter_mut().zip(&other.sums2))
        {
            a.0 += b.0;
            a.1 += b.1;
        }
        Ok(())
    }

    pub fn num_pairs(&self) -> u64 {
        self.pairs.iter().sum()
    }

    /// Pairs emitted at each setting pair, row-major.
    pub fn pairs_by_setting(&self) -> &[u64] {
        &self.pairs
    }

    pub fn gamma(&self) -> Option<f64> {
        let n = self.num_pairs();
        (n > 0).then(|| self.hits.iter().sum::<u64>() as f64 / n as f64)
    }

    pub fn gamma_by_setting(&self) -> Vec<Option<f64>> {
        self.hits
            .iter()
            .zip(&self.pairs)
            .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
            .collect()
    }

    pub fn means1(&self) -> Vec<Option<f64>> {
        mean_of(&self.sums1)
    }

    pub fn means2(&self) -> Vec<Option<f64>> {
        mean_of(&self.sums2)
    }

    pub fn accumulate_logs(&mut self, log1: &EventLog, log2: &EventLog) -> Result<(), PairingError> {
        check_pair_aligned(log1, log2)?;
        for (a, b) in log1.events.iter().zip(&log2.events) {
            self.observe(a, b);
        }
        Ok(())
    }
}

fn mean_of(sums: &[(i64, u64)]) -> Vec<Option<f64>> {
    sums.iter()
        .map(|&(s, n)| (n > 0).then(|| s as f64 / n as f64))
        .collect()
}

/// Run-level numbers reported next to the per-setting entries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub procedure: String,
    pub s_max: Option<f64>,
    pub window: Option<f64>,
    pub d: Option<f64>,
    pub tau: Option<f64>,
    pub seed: Option<u64>,
    /// `2ΣC / (N₁ + N₂)`.
    pub coincidence_frequency: Option<f64>,
    pub delta: Option<f64>,
    pub total_events_1: u64,
    pub total_events_2: u64,
    /// Setting pairs without coincidences, left out of `s_max`.
    pub undefined_entries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub entries: Vec<CorrelationEntry>,
    pub means1: Vec<Option<f64>>,
    pub means2: Vec<Option<f64>>,
    pub summary: ReportSummary,
}

impl CorrelationReport {
    /// Entries from `tally`, with `s_max` over the available settings, the
    /// coincidence frequency and undefined-entry count filled in.
    pub fn from_tally(tally: &CoincidenceTally, angles1: &[Angle], angles2: &[Angle], procedure: &str) -> Self {
        let entries = correlations(tally, angles1, angles2);
        let total = tally.total_events_1 + tally.total_events_2;
        let summary = ReportSummary {
            procedure: procedure.to_owned(),
            s_max: settings_s_max(&entries),
            coincidence_frequency: (total > 0).then(|| 2.0 * tally.num_coincidences() as f64 / total as f64),
            total_events_1: tally.total_events_1,
            total_events_2: tally.total_events_2,
            undefined_entries: entries.iter().filter(|e| e.e.is_none()).count(),
            ..ReportSummary::default()
        };
        CorrelationReport {
            entries,
            means1: Vec::new(),
            means2: Vec::new(),
            summary,
        }
    }

    /// Sets per-entry `Γ` from a row-major list.
    pub fn with_gamma(mut self, gammas: &[Option<f64>]) -> Self {
        for (e, g) in self.entries.iter_mut().zip(gammas) {
            e.gamma = *g;
        }
        self
    }

    pub fn with_means(mut self, means1: Vec<Option<f64>>, means2: Vec<Option<f64>>) -> Self {
        self.means1 = means1;
        self.means2 = means2;
        self
    }

    pub fn from_statistics(stats: &PairStatistics, angles1: &[Angle], angles2: &[Angle]) -> Self {
        CorrelationReport::from_tally(&stats.tally, angles1, angles2, "index")
            .with_gamma(&stats.gamma_by_setting())
            .with_means(stats.means1(), stats.means2())
    }
}

/// `max |S|` over every choice of two distinct settings per station, or
/// `None` with fewer than two settings at a station or no defined `S`.
pub fn settings_s_max(entries: &[CorrelationEntry]) -> Option<f64> {
    let mut a1: Vec<Angle> = Vec::new();
    let mut a2: Vec<Angle> = Vec::new();
    for e in entries {
        if !a1.contains(&e.alpha) {
            a1.push(e.alpha);
        }
        if !a2.contains(&e.beta) {
            a2.push(e.beta);
        }
    }
    four_angle_scan(&CorrelationTable::from_entries(entries), &a1, &a2).s_max
}
