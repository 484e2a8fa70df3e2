//! The source of particle pairs.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::event::Outcome;
use crate::rng::UniformSource;
use crate::station::polarize;

/// A pair leaving the source: the polarization carried to each station and
/// the emission instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmittedPair {
    pub index: u64,
    pub xi1: Angle,
    pub xi2: Angle,
    pub emission_time: f64,
}

/// A Case II pair together with the number of source pairs drawn to get it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delivered {
    pub pair: EmittedPair,
    pub attempts: u32,
}

/// Case I: `ξ₁ = 2πu`, `ξ₂ = ξ₁ + π/2`, emitted at `n·spacing`.
pub fn emit_pair_case1<U: UniformSource>(n: u64, rng: &mut U, spacing: f64) -> EmittedPair {
    let xi1 = Angle::new(TAU * rng.uniform());
    EmittedPair {
        index: n,
        xi1,
        xi2: xi1 + Angle::new(FRAC_PI_2),
        emission_time: n as f64 * spacing,
    }
}

/// Case II: Case I pairs pass through pre-polarizers at `eta1`, `eta2`.
/// A pair survives only if both particles leave through the +1 channel;
/// otherwise the whole pair is dropped and the source fires again. Each
/// attempt consumes three draws (ξ, then one per pre-polarizer).
pub fn emit_pair_case2<U: UniformSource>(n: u64, eta1: Angle, eta2: Angle, rng: &mut U, spacing: f64) -> Delivered {
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        let candidate = emit_pair_case1(n, rng, spacing);
        let (x1, out1) = polarize(candidate.xi1, eta1, rng);
        let (x2, out2) = polarize(candidate.xi2, eta2, rng);
        if x1 == Outcome::Plus && x2 == Outcome::Plus {
            return Delivered {
                pair: EmittedPair {
                    xi1: out1,
                    xi2: out2,
                    ..candidate
                },
                attempts,
            };
        }
    }
}
