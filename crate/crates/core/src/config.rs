//! Experiment configuration and its validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::Angle;

/// Source type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// Pairs with opposite, uniformly random polarization.
    CaseI,
    /// Pre-polarizers at η₁, η₂ deliver fixed polarizations.
    CaseII,
}

/// Full description of a simulated run. Times are in units of the maximum
/// delay `max_delay` (T0), which defaults to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub case: Case,
    pub num_pairs: u64,
    pub angles1: Vec<Angle>,
    pub angles2: Vec<Angle>,
    pub eta1: Option<Angle>,
    pub eta2: Option<Angle>,
    pub delay_exponent: f64,
    pub max_delay: f64,
    pub tag_resolution: f64,
    pub window: f64,
    pub emission_spacing: f64,
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("number of pairs must be positive")]
    NoPairs,
    #[error("station {station} has no analyzer settings")]
    NoSettings { station: u8 },
    #[error("stations have different numbers of settings ({m1} vs {m2})")]
    SettingCountMismatch { m1: usize, m2: usize },
    #[error("angle {value} for {what} is not finite")]
    NonFiniteAngle { what: &'static str, value: f64 },
    #[error("{what} must be positive and finite, got {value}")]
    NotPositive { what: &'static str, value: f64 },
    #[error("delay exponent must be finite and nonnegative, got {0}")]
    NegativeExponent(f64),
    #[error("window smaller than tag resolution (W = {window}, tau = {tau})")]
    WindowBelowResolution { window: f64, tau: f64 },
    #[error("emission spacing {spacing} must exceed 2*T0 + W = {bound} so that pairs cannot overlap")]
    SpacingTooSmall { spacing: f64, bound: f64 },
    #[error("case II requires both pre-polarizer angles eta1 and eta2")]
    MissingEta,
}

impl Default for SimConfig {
    /// Case I, d = 4, τ = W = 0.00025, two settings per station at the
    /// usual CHSH angles.
    fn default() -> Self {
        use std::f64::consts::PI;
        SimConfig {
            case: Case::CaseI,
            num_pairs: 1_000_000,
            angles1: vec![Angle::new(0.0), Angle::new(PI / 4.0)],
            angles2: vec![Angle::new(PI / 8.0), Angle::new(3.0 * PI / 8.0)],
            eta1: None,
            eta2: None,
            delay_exponent: 4.0,
            max_delay: 1.0,
            tag_resolution: 0.00025,
            window: 0.00025,
            emission_spacing: 4.0,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn num_settings(&self) -> usize {
        self.angles1.len()
    }

    /// Returns the config unchanged if every invariant holds.
    pub fn validate(self) -> Result<SimConfig, ConfigError> {
        if self.num_pairs == 0 {
            return Err(ConfigError::NoPairs);
        }
        if self.angles1.is_empty() {
            return Err(ConfigError::NoSettings { station: 1 });
        }
        if self.angles2.is_empty() {
            return Err(ConfigError::NoSettings { station: 2 });
        }
        if self.angles1.len() != self.angles2.len() {
            return Err(ConfigError::SettingCountMismatch {
                m1: self.angles1.len(),
                m2: self.angles2.len(),
            });
        }
        for (what, list) in [("angles1", &self.angles1), ("angles2", &self.angles2)] {
            if let Some(a) = list.iter().find(|a| !a.is_finite()) {
                return Err(ConfigError::NonFiniteAngle {
                    what,
                    value: a.radians(),
                });
            }
        }
        positive("max_delay", self.max_delay)?;
        positive("tag_resolution", self.tag_resolution)?;
        positive("window", self.window)?;
        positive("emission_spacing", self.emission_spacing)?;
        if !(self.delay_exponent.is_finite() && self.delay_exponent >= 0.0) {
            return Err(ConfigError::NegativeExponent(self.delay_exponent));
        }
        if self.window < self.tag_resolution {
            return Err(ConfigError::WindowBelowResolution {
                window: self.window,
                tau: self.tag_resolution,
            });
        }
        let bound = 2.0 * self.max_delay + self.window;
        if self.emission_spacing <= bound {
            return Err(ConfigError::SpacingTooSmall {
                spacing: self.emission_spacing,
                bound,
            });
        }
        if self.case == Case::CaseII {
            match (self.eta1, self.eta2) {
                (Some(a), Some(b)) => {
                    for (what, e) in [("eta1", a), ("eta2", b)] {
                        if !e.is_finite() {
                            return Err(ConfigError::NonFiniteAngle {
                                what,
                                value: e.radians(),
                            });
                        }
                    }
                }
                _ => return Err(ConfigError::MissingEta),
            }
        }
        Ok(self)
    }

    /// Index-window width `k = ⌈W/τ⌉`.
    pub fn index_window(&self) -> u64 {
        crate::pairing::window_in_ticks(self.window, self.tag_resolution).ceil() as u64
    }
}

fn positive(what: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::NotPositive { what, value })
    }
}
