//! Observation station: setting choice, polarizer, time delay and time-tag
//! discretization.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::angle::{delay_factor, malus_probability, Angle};
use crate::emission::EmittedPair;
use crate::event::{DetectionEvent, Outcome, Station};
use crate::rng::UniformSource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    pub station: Station,
    pub angles: Vec<Angle>,
    pub delay_exponent: f64,
    pub max_delay: f64,
    pub tag_resolution: f64,
}

/// The three streams a station draws from.
pub struct StationStreams<U> {
    pub setting: U,
    pub polarizer: U,
    pub delay: U,
}

/// Picks setting `m = 1 + ⌊uM⌋`; returns the 1-based index and its angle.
///
/// # Panics
/// If `angles` is empty.
pub fn select_setting<U: UniformSource>(rng: &mut U, angles: &[Angle]) -> (u32, Angle) {
    assert!(!angles.is_empty(), "station needs at least one setting");
    let m = angles.len();
    // u < 1 keeps the index in range; min() guards against rounding at u ≈ 1
    let i = ((rng.uniform() * m as f64) as usize).min(m - 1);
    (i as u32 + 1, angles[i])
}

/// Two-channel polarizer: +1 if `r ≤ cos²(ξ−θ)`, else −1. The particle
/// leaves with polarization θ (+1 channel) or θ+π/2 (−1 channel).
#[inline]
pub fn polarize<U: UniformSource>(xi: Angle, theta: Angle, rng: &mut U) -> (Outcome, Angle) {
    let r = rng.uniform();
    if r <= malus_probability(xi, theta) {
        (Outcome::Plus, theta)
    } else {
        (Outcome::Minus, theta + Angle::new(FRAC_PI_2))
    }
}

/// Delay `t = u·T0·|sin 2(ξ−θ)|^d`. One draw is consumed even when the
/// interval is empty, so later draws do not depend on the angles.
#[inline]
pub fn time_delay<U: UniformSource>(xi: Angle, theta: Angle, exponent: f64, max_delay: f64, rng: &mut U) -> f64 {
    let u = rng.uniform();
    u * max_delay * delay_factor(xi, theta).powf(exponent)
}

/// Time tag `k = ⌈t/τ⌉`.
#[inline]
pub fn discretize(t: f64, tau: f64) -> i64 {
    (t / tau).ceil() as i64
}

/// Runs one particle through the station. `emission_tick` is the station
/// clock reading at the pair's emission instant.
pub fn process_particle<U: UniformSource>(
    pair: &EmittedPair,
    cfg: &StationConfig,
    streams: &mut StationStreams<U>,
    emission_tick: i64,
) -> DetectionEvent {
    let xi = match cfg.station {
        Station::One => pair.xi1,
        Station::Two => pair.xi2,
    };
    let (setting_index, theta) = select_setting(&mut streams.setting, &cfg.angles);
    let (outcome, _) = polarize(xi, theta, &mut streams.polarizer);
    let delay = time_delay(xi, theta, cfg.delay_exponent, cfg.max_delay, &mut streams.delay);
    let tag = discretize(delay, cfg.tag_resolution);
    DetectionEvent {
        pair_index: pair.index,
        station: cfg.station,
        outcome,
        setting_index,
        setting: theta,
        delay,
        tag,
        clock_tick: emission_tick + tag,
        absolute_time: pair.emission_time + delay,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emission::emit_pair_case1;
    use crate::rng::{derive_stream, RngStream, ScriptedUniforms};
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn single_setting_always_selected() {
        let mut rng = derive_stream(1, "s");
        let angles = [Angle::new(0.3)];
        for _ in 0..100 {
            assert_eq!(select_setting(&mut rng, &angles), (1, angles[0]));
        }
    }

    #[test]
    fn floor_mapping() {
        let angles = [Angle::new(0.0), Angle::new(1.0)];
        let mut u = ScriptedUniforms::new(vec![0.6, 0.4, 0.999_999_999]);
        assert_eq!(select_setting(&mut u, &angles).0, 2);
        assert_eq!(select_setting(&mut u, &angles).0, 1);
        assert_eq!(select_setting(&mut u, &angles).0, 2);
    }

    #[test]
    fn two_settings_are_equally_likely() {
        const N: usize = 1_000_000;
        let angles = [Angle::new(0.0), Angle::new(1.0)];
        let mut rng = derive_stream(3, "station1.setting");
        let ones = (0..N).filter(|_| select_setting(&mut rng, &angles).0 == 1).count() as f64;
        let sd = (N as f64 * 0.25).sqrt();
        assert!((ones - N as f64 / 2.0).abs() < 3.0 * sd);
    }

    #[test]
    fn polarizer_boundaries() {
        let theta = Angle::new(0.7);
        let mut u = ScriptedUniforms::new(vec![1e-12, 0.5, 1.0 - 1e-12]);
        for _ in 0..3 {
            assert_eq!(polarize(theta, theta, &mut u), (Outcome::Plus, theta));
        }
        let perp = theta + Angle::new(PI / 2.0);
        let mut u = ScriptedUniforms::new(vec![1e-12, 0.5, 1.0 - 1e-12]);
        for _ in 0..3 {
            let (x, out) = polarize(perp, theta, &mut u);
            assert_eq!(x, Outcome::Minus);
            assert!((out.radians() - perp.radians()).abs() < 1e-15);
        }
    }

    #[test]
    fn polarizer_follows_malus_law() {
        const N: usize = 1_000_000;
        let theta = Angle::new(0.2);
        let xi = theta + Angle::new(PI / 6.0);
        let mut rng = derive_stream(8, "station1.polarizer");
        let sum: i64 = (0..N).map(|_| polarize(xi, theta, &mut rng).0.value() as i64).sum();
        let mean = sum as f64 / N as f64;
        // cos 2(π/6) = 1/2; per-draw variance 1 − mean²
        let sd = ((1.0 - 0.25) / N as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sd, "mean {mean}");
    }

    #[test]
    fn aligned_particle_has_zero_delay() {
        let theta = Angle::new(1.1);
        let mut u = ScriptedUniforms::new(vec![0.9]);
        assert_eq!(time_delay(theta, theta, 4.0, 1.0, &mut u), 0.0);
        assert_eq!(u.consumed(), 1);
    }

    #[test]
    fn delay_at_forty_five_degrees_is_uniform_on_full_range() {
        const N: usize = 1_000_000;
        let theta = Angle::new(0.0);
        let xi = Angle::new(PI / 4.0);
        let mut rng = derive_stream(9, "station1.delay");
        let mean = (0..N).map(|_| time_delay(xi, theta, 4.0, 1.0, &mut rng)).sum::<f64>() / N as f64;
        let sd = (1.0 / 12.0 / N as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sd);
    }

    #[test]
    fn zero_exponent_ignores_angles() {
        let mut a = derive_stream(4, "d");
        let mut b = derive_stream(4, "d");
        for i in 0..1000 {
            let xi = Angle::new(i as f64 * 0.01);
            let t1 = time_delay(xi, Angle::new(0.0), 0.0, 1.0, &mut a);
            let t2 = time_delay(Angle::new(0.0), Angle::new(0.0), 0.0, 1.0, &mut b);
            assert_eq!(t1, t2);
        }
    }

    #[test]
    fn ceiling_tags() {
        let tau = 0.00025;
        assert_eq!(discretize(0.0, tau), 0);
        assert_eq!(discretize(tau, tau), 1);
        assert_eq!(discretize(1.5 * tau, tau), 2);
        assert_eq!(discretize(0.00025, 0.00025), 1);
        assert_eq!(discretize(1e-12, tau), 1);
    }

    fn streams(seed: u64, st: &str) -> StationStreams<RngStream> {
        StationStreams {
            setting: derive_stream(seed, &format!("{st}.setting")),
            polarizer: derive_stream(seed, &format!("{st}.polarizer")),
            delay: derive_stream(seed, &format!("{st}.delay")),
        }
    }

    #[test]
    fn aligned_case_two_particle() {
        let eta = Angle::new(PI / 6.0);
        let pair = EmittedPair {
            index: 0,
            xi1: eta,
            xi2: eta + Angle::new(PI / 2.0),
            emission_time: 0.0,
        };
        let cfg = StationConfig {
            station: Station::One,
            angles: vec![eta],
            delay_exponent: 4.0,
            max_delay: 1.0,
            tag_resolution: 0.00025,
        };
        let mut s = streams(1, "station1");
        for _ in 0..1000 {
            let ev = process_particle(&pair, &cfg, &mut s, 0);
            assert_eq!(ev.outcome, Outcome::Plus);
            assert_eq!(ev.delay, 0.0);
            assert_eq!(ev.tag, 0);
        }
    }

    #[test]
    fn processing_is_deterministic() {
        let pair = EmittedPair {
            index: 7,
            xi1: Angle::new(0.3),
            xi2: Angle::new(0.3 + PI / 2.0),
            emission_time: 28.0,
        };
        let cfg = StationConfig {
            station: Station::Two,
            angles: vec![Angle::new(0.0), Angle::new(1.0)],
            delay_exponent: 4.0,
            max_delay: 1.0,
            tag_resolution: 0.001,
        };
        let a = process_particle(&pair, &cfg, &mut streams(5, "station2"), 28_000);
        let b = process_particle(&pair, &cfg, &mut streams(5, "station2"), 28_000);
        assert_eq!(a, b);
        assert_eq!(a.clock_tick, 28_000 + a.tag);
        assert_eq!(a.absolute_time, 28.0 + a.delay);
    }

    #[test]
    fn random_source_gives_zero_mean_outcome() {
        const N: u64 = 1_000_000;
        let cfg = StationConfig {
            station: Station::One,
            angles: vec![Angle::new(0.0), Angle::new(PI / 4.0)],
            delay_exponent: 4.0,
            max_delay: 1.0,
            tag_resolution: 0.00025,
        };
        let mut source = derive_stream(77, "source");
        let mut s = streams(77, "station1");
        let sum: i64 = (0..N)
            .map(|n| {
                let p = emit_pair_case1(n, &mut source, 4.0);
                process_particle(&p, &cfg, &mut s, 0).outcome.value() as i64
            })
            .sum();
        let mean = sum as f64 / N as f64;
        assert!(mean.abs() < 3.0 / (N as f64).sqrt(), "mean {mean}");
    }

    proptest! {
        #[test]
        fn delay_never_exceeds_window(xi in 0.0..TAU, th in 0.0..TAU, d in 0.0f64..10.0, seed in any::<u64>()) {
            let mut rng = derive_stream(seed, "p");
            let (xi, th) = (Angle::new(xi), Angle::new(th));
            let t = time_delay(xi, th, d, 1.0, &mut rng);
            prop_assert!(t >= 0.0);
            prop_assert!(t <= delay_factor(xi, th).powf(d));
            let k = discretize(t, 0.003);
            prop_assert!((k as f64 - 1.0) < t / 0.003 && t / 0.003 <= k as f64);
        }

        #[test]
        fn shifting_relative_angle_by_pi_changes_nothing(xi in 0.0..TAU, th in 0.0..TAU, seed in any::<u64>()) {
            let (xi, th) = (Angle::new(xi), Angle::new(th));
            let th_pi = th + Angle::new(PI);
            let mut a = derive_stream(seed, "q");
            let mut b = derive_stream(seed, "q");
            let (x1, _) = polarize(xi, th, &mut a);
            let (x2, _) = polarize(xi, th_pi, &mut b);
            prop_assert_eq!(x1, x2);
            let t1 = time_delay(xi, th, 4.0, 1.0, &mut a);
            let t2 = time_delay(xi, th_pi, 4.0, 1.0, &mut b);
            prop_assert!((t1 - t2).abs() < 1e-12);
        }
    }
}
