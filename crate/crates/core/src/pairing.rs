//! Coincidence identification.
//!
//! [`count_index_window`] applies the simulation criterion `|k₁ − k₂| < k`
//! pair by pair. The stream procedures ([`count_binned`],
//! [`count_relative_window`], [`count_shifted`]) only look at the station
//! clocks, as one would with laboratory data. They compare integer clock
//! ticks, so a window `W` means `|ΔK| < W/res` with `res` the tick
//! resolution shared by both logs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{DetectionEvent, EventLog, Outcome};

/// Event pairs within this many histogram bins of each other feed the
/// Δ-shift histogram.
pub const SHIFT_HISTOGRAM_HALF_WIDTH: i64 = 100;

#[derive(Debug, Error, PartialEq)]
pub enum PairingError {
    #[error("logs are not pair-aligned ({detail})")]
    NotPairAligned { detail: String },
    #[error("logs use different tick resolutions ({0} vs {1})")]
    ResolutionMismatch(f64, f64),
    #[error("station {0} log is empty")]
    EmptyLog(u8),
    #[error("{what} must be positive and finite, got {value}")]
    InvalidParameter { what: &'static str, value: f64 },
    #[error("cannot merge tallies of shape {0:?} and {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
}

/// Coincidence counts `C_xy` per setting pair.
///
/// Counts for setting pair `(m, m′)` are stored as `[C₊₊, C₊₋, C₋₊, C₋₋]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceTally {
    pub m1: usize,
    pub m2: usize,
    counts: Vec<[u64; 4]>,
    pub total_events_1: u64,
    pub total_events_2: u64,
}

fn slot(x: Outcome, y: Outcome) -> usize {
    match (x, y) {
        (Outcome::Plus, Outcome::Plus) => 0,
        (Outcome::Plus, Outcome::Minus) => 1,
        (Outcome::Minus, Outcome::Plus) => 2,
        (Outcome::Minus, Outcome::Minus) => 3,
    }
}

impl CoincidenceTally {
    pub fn new(m1: usize, m2: usize) -> Self {
        CoincidenceTally {
            m1,
            m2,
            counts: vec![[0; 4]; m1 * m2],
            total_events_1: 0,
            total_events_2: 0,
        }
    }

    /// Adds one coincidence between settings `s1`, `s2` (1-based).
    ///
    /// # Panics
    /// If a setting index is outside the tally's shape.
    pub fn record(&mut self, s1: u32, s2: u32, x: Outcome, y: Outcome) {
        let i = self.index(s1, s2);
        self.counts[i][slot(x, y)] += 1;
    }

    fn index(&self, s1: u32, s2: u32) -> usize {
        let (a, b) = (s1 as usize, s2 as usize);
        assert!(
            (1..=self.m1).contains(&a) && (1..=self.m2).contains(&b),
            "setting pair ({s1}, {s2}) outside tally of shape {}x{}",
            self.m1,
            self.m2
        );
        (a - 1) * self.m2 + (b - 1)
    }

    /// `[C₊₊, C₊₋, C₋₊, C₋₋]` for settings `s1`, `s2` (1-based).
    pub fn counts(&self, s1: u32, s2: u32) -> [u64; 4] {
        self.counts[self.index(s1, s2)]
    }

    pub fn set_counts(&mut self, s1: u32, s2: u32, c: [u64; 4]) {
        let i = self.index(s1, s2);
        self.counts[i] = c;
    }

    /// Iterates `(s1, s2, counts)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u32, [u64; 4])> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(move |(i, c)| ((i / self.m2) as u32 + 1, (i % self.m2) as u32 + 1, *c))
    }

    pub fn num_coincidences(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Adds `other` into `self`. Associative and commutative.
    pub fn merge(&mut self, other: &CoincidenceTally) -> Result<(), PairingError> {
        if (self.m1, self.m2) != (other.m1, other.m2) {
            return Err(PairingError::ShapeMismatch((self.m1, self.m2), (other.m1, other.m2)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.total_events_1 += other.total_events_1;
        self.total_events_2 += other.total_events_2;
        Ok(())
    }

    fn from_matches(log1: &EventLog, log2: &EventLog, matches: &[(usize, usize)]) -> Self {
        let mut t = CoincidenceTally::new(log1.settings.len(), log2.settings.len());
        t.total_events_1 = log1.len() as u64;
        t.total_events_2 = log2.len() as u64;
        for &(i, j) in matches {
            let (a, b) = (&log1.events[i], &log2.events[j]);
            t.record(a.setting_index, b.setting_index, a.outcome, b.outcome);
        }
        t
    }
}

/// Which procedure to apply, with exactly the parameters it needs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PairingSpec {
    /// Pair-by-pair `|k₁ − k₂| < k`; `u64::MAX` disables the window.
    IndexWindow {
        k: u64,
    },
    /// Equal bins of width `bin_size` anchored at clock tick 0.
    BinnedClock {
        bin_size: f64,
    },
    RelativeWindow {
        window: f64,
        delta: f64,
    },
    ShiftedWindow {
        window: f64,
        resolution: f64,
    },
}

/// A tally and, for the shifted procedure, the Δ it settled on.
#[derive(Clone, Debug, PartialEq)]
pub struct PairingOutcome {
    pub tally: CoincidenceTally,
    pub delta: Option<f64>,
}

impl PairingSpec {
    pub fn apply(&self, log1: &EventLog, log2: &EventLog) -> Result<PairingOutcome, PairingError> {
        let (tally, delta) = match *self {
            PairingSpec::IndexWindow { k } => (count_index_window(log1, log2, k)?, None),
            PairingSpec::BinnedClock { bin_size } => (count_binned(log1, log2, bin_size)?, None),
            PairingSpec::RelativeWindow { window, delta } => (count_relative_window(log1, log2, window, delta)?, None),
            PairingSpec::ShiftedWindow { window, resolution } => {
                let (d, t) = count_shifted(log1, log2, window, resolution)?;
                (t, Some(d))
            }
        };
        Ok(PairingOutcome { tally, delta })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PairingSpec::IndexWindow { .. } => "index",
            PairingSpec::BinnedClock { .. } => "binned",
            PairingSpec::RelativeWindow { .. } => "relative",
            PairingSpec::ShiftedWindow { .. } => "shifted",
        }
    }
}

/// `window / resolution`, snapped to the nearest integer when it is one up
/// to floating-point noise (so 0.0025/0.00025 counts as exactly 10).
pub fn window_in_ticks(window: f64, resolution: f64) -> f64 {
    let x = window / resolution;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x
    }
}

fn positive(what: &'static str, value: f64) -> Result<(), PairingError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(PairingError::InvalidParameter { what, value })
    }
}

fn common_resolution(log1: &EventLog, log2: &EventLog) -> Result<f64, PairingError> {
    let (r1, r2) = (log1.tick_resolution, log2.tick_resolution);
    positive("tick_resolution", r1)?;
    if (r1 - r2).abs() > 1e-12 * r1.max(r2) {
        return Err(PairingError::ResolutionMismatch(r1, r2));
    }
    Ok(r1)
}

/// Event indices sorted by clock tick (stable), without copying when the log
/// is already ordered.
fn time_order(log: &EventLog) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..log.len()).collect();
    if !log.is_time_ordered() {
        idx.sort_by_key(|&i| log.events[i].clock_tick);
    }
    idx
}

fn check_aligned(log1: &EventLog, log2: &EventLog) -> Result<(), PairingError> {
    if log1.len() != log2.len() {
        return Err(PairingError::NotPairAligned {
            detail: format!("{} vs {} events", log1.len(), log2.len()),
        });
    }
    if let Some((a, b)) = log1
        .events
        .iter()
        .zip(&log2.events)
        .find(|(a, b)| a.pair_index != b.pair_index)
    {
        return Err(PairingError::NotPairAligned {
            detail: format!("pair index {} against {}", a.pair_index, b.pair_index),
        });
    }
    Ok(())
}

/// Pair-aligned matches with `|k₁ − k₂| < k`, as event-index pairs.
pub fn match_index_window(log1: &EventLog, log2: &EventLog, k: u64) -> Result<Vec<(usize, usize)>, PairingError> {
    check_aligned(log1, log2)?;
    Ok(log1
        .events
        .iter()
        .zip(&log2.events)
        .enumerate()
        .filter(|(_, (a, b))| a.tag.abs_diff(b.tag) < k)
        .map(|(i, _)| (i, i))
        .collect())
}

pub fn count_index_window(log1: &EventLog, log2: &EventLog, k: u64) -> Result<CoincidenceTally, PairingError> {
    let m = match_index_window(log1, log2, k)?;
    Ok(CoincidenceTally::from_matches(log1, log2, &m))
}

/// Bins `[jB, (j+1)B)` on the clock axis; inside a bin the i-th station-1
/// event (in time order) is matched with the i-th station-2 event.
pub fn match_binned(log1: &EventLog, log2: &EventLog, bin_size: f64) -> Result<Vec<(usize, usize)>, PairingError> {
    positive("bin_size", bin_size)?;
    let res = common_resolution(log1, log2)?;
    let width = window_in_ticks(bin_size, res);
    let bin = |k: i64| -> i64 {
        if width.fract() == 0.0 {
            k.div_euclid(width as i64)
        } else {
            (k as f64 / width).floor() as i64
        }
    };
    let (o1, o2) = (time_order(log1), time_order(log2));
    let b1: Vec<i64> = o1.iter().map(|&i| bin(log1.events[i].clock_tick)).collect();
    let b2: Vec<i64> = o2.iter().map(|&j| bin(log2.events[j].clock_tick)).collect();

    let mut matches = Vec::new();
    let (mut p, mut q) = (0, 0);
    while p < b1.len() && q < b2.len() {
        match b1[p].cmp(&b2[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                let b = b1[p];
                let p_end = p + b1[p..].iter().take_while(|&&x| x == b).count();
                let q_end = q + b2[q..].iter().take_while(|&&x| x == b).count();
                matches.extend(o1[p..p_end].iter().copied().zip(o2[q..q_end].iter().copied()));
                p = p_end;
                q = q_end;
            }
        }
    }
    Ok(matches)
}

pub fn count_binned(log1: &EventLog, log2: &EventLog, bin_size: f64) -> Result<CoincidenceTally, PairingError> {
    let m = match_binned(log1, log2, bin_size)?;
    Ok(CoincidenceTally::from_matches(log1, log2, &m))
}

/// Greedy earliest-first matching: each station-1 event, in time order,
/// takes the earliest unused station-2 event with `|s₁ − (s₂ − Δ)| < W`.
pub fn match_relative_window(
    log1: &EventLog,
    log2: &EventLog,
    window: f64,
    delta: f64,
) -> Result<Vec<(usize, usize)>, PairingError> {
    positive("window", window)?;
    if !delta.is_finite() {
        return Err(PairingError::InvalidParameter {
            what: "delta",
            value: delta,
        });
    }
    let res = common_resolution(log1, log2)?;
    let w = window_in_ticks(window, res);
    let shift = (delta / res).round() as i64;
    let (o1, o2) = (time_order(log1), time_order(log2));
    let k2: Vec<i64> = o2.iter().map(|&j| log2.events[j].clock_tick - shift).collect();

    let mut used = vec![false; k2.len()];
    let mut lo = 0;
    let mut matches = Vec::new();
    for &i in &o1 {
        let k1 = log1.events[i].clock_tick;
        // anything this early is out of reach for every later station-1 event
        while lo < k2.len() && (used[lo] || ((k2[lo] - k1) as f64) <= -w) {
            lo += 1;
        }
        let mut j = lo;
        while j < k2.len() && ((k2[j] - k1) as f64) < w {
            if !used[j] {
                used[j] = true;
                matches.push((i, o2[j]));
                break;
            }
            j += 1;
        }
    }
    Ok(matches)
}

pub fn count_relative_window(
    log1: &EventLog,
    log2: &EventLog,
    window: f64,
    delta: f64,
) -> Result<CoincidenceTally, PairingError> {
    let m = match_relative_window(log1, log2, window, delta)?;
    Ok(CoincidenceTally::from_matches(log1, log2, &m))
}

/// Histograms `s₂ − s₁` over event pairs no more than
/// [`SHIFT_HISTOGRAM_HALF_WIDTH`] bins apart, with bins of width
/// `resolution` centred on its multiples, and returns the centre of the
/// fullest bin. Ties go to the smallest `|Δ|`, then to positive `Δ`.
///
/// With `s₂ = s₁ + 4` the result is `+4`, which is the `Δ` that
/// [`count_relative_window`] needs to undo the offset.
pub fn find_delta_shift(log1: &EventLog, log2: &EventLog, resolution: f64) -> Result<f64, PairingError> {
    positive("resolution", resolution)?;
    if log1.is_empty() {
        return Err(PairingError::EmptyLog(1));
    }
    if log2.is_empty() {
        return Err(PairingError::EmptyLog(2));
    }
    let res = common_resolution(log1, log2)?;
    let half = SHIFT_HISTOGRAM_HALF_WIDTH;
    let reach = window_in_ticks(half as f64 * resolution, res);
    let per_bin = window_in_ticks(resolution, res);
    let mut hist = vec![0u64; (2 * half + 1) as usize];

    let (o1, o2) = (time_order(log1), time_order(log2));
    let k2: Vec<i64> = o2.iter().map(|&j| log2.events[j].clock_tick).collect();
    let mut lo = 0;
    for &i in &o1 {
        let k1 = log1.events[i].clock_tick;
        while lo < k2.len() && ((k2[lo] - k1) as f64) < -reach {
            lo += 1;
        }
        for &k in &k2[lo..] {
            let diff = (k - k1) as f64;
            if diff > reach {
                break;
            }
            let b = (diff / per_bin).round() as i64;
            if b.abs() <= half {
                hist[(b + half) as usize] += 1;
            }
        }
    }

    let best = (-half..=half)
        .max_by(|&a, &b| {
            hist[(a + half) as usize]
                .cmp(&hist[(b + half) as usize])
                .then(b.abs().cmp(&a.abs()))
                .then(a.cmp(&b))
        })
        .expect("histogram is nonempty");
    Ok(best as f64 * resolution)
}

/// [`find_delta_shift`] followed by [`count_relative_window`] at that Δ.
pub fn count_shifted(
    log1: &EventLog,
    log2: &EventLog,
    window: f64,
    resolution: f64,
) -> Result<(f64, CoincidenceTally), PairingError> {
    let delta = find_delta_shift(log1, log2, resolution)?;
    let tally = count_relative_window(log1, log2, window, delta)?;
    Ok((delta, tally))
}

/// Pairs of events matched by a procedure, for callers that need more than
/// the tally.
pub fn matched_events<'a>(
    log1: &'a EventLog,
    log2: &'a EventLog,
    matches: &'a [(usize, usize)],
) -> impl Iterator<Item = (&'a DetectionEvent, &'a DetectionEvent)> + 'a {
    matches.iter().map(move |&(i, j)| (&log1.events[i], &log2.events[j]))
}
