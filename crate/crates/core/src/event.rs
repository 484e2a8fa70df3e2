//! Detection events and per-station event logs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::angle::Angle;

/// Which observation station recorded an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Station {
    One,
    Two,
}

impl Station {
    pub fn number(self) -> u8 {
        match self {
            Station::One => 1,
            Station::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Station> {
        match n {
            1 => Some(Station::One),
            2 => Some(Station::Two),
            _ => None,
        }
    }
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Which of the two detectors behind a polarizer fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    #[inline]
    pub fn value(self) -> i32 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_value(v: i64) -> Option<Outcome> {
        match v {
            1 => Some(Outcome::Plus),
            -1 => Some(Outcome::Minus),
            _ => None,
        }
    }
}

/// One detector firing.
///
/// `tag` is the time tag `⌈t/τ⌉` of the delay relative to emission and
/// `clock_tick` is the reading of the station clock, in units of the log's
/// tick resolution. For simulated events `clock_tick = emission_tick + tag`,
/// so tag differences and clock differences agree within a pair. Events read
/// back from a time-tag file only know their clock reading: their `delay` is
/// NaN and `tag` equals `clock_tick`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub pair_index: u64,
    pub station: Station,
    pub outcome: Outcome,
    /// 1-based index into the station's setting list.
    pub setting_index: u32,
    pub setting: Angle,
    pub delay: f64,
    pub tag: i64,
    pub clock_tick: i64,
    pub absolute_time: f64,
}

/// The ordered stream of events recorded at one station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub station: Station,
    /// Time per clock tick.
    pub tick_resolution: f64,
    /// Setting dictionary: index `m` (1-based) maps to `settings[m - 1]`.
    pub settings: Vec<Angle>,
    pub metadata: BTreeMap<String, String>,
    pub events: Vec<DetectionEvent>,
}

impl EventLog {
    pub fn new(station: Station, tick_resolution: f64, settings: Vec<Angle>) -> Self {
        EventLog {
            station,
            tick_resolution,
            settings,
            metadata: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn setting(&self, index: u32) -> Option<Angle> {
        index
            .checked_sub(1)
            .and_then(|i| self.settings.get(i as usize))
            .copied()
    }

    /// True when clock ticks never decrease.
    pub fn is_time_ordered(&self) -> bool {
        self.events.windows(2).all(|w| w[0].clock_tick <= w[1].clock_tick)
    }

    /// Appends the events of `other`, which must come later in time.
    pub fn extend_from(&mut self, other: EventLog) {
        self.events.extend(other.events);
    }
}
