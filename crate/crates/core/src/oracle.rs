//! Closed-form predictions: quantum theory for the singlet and product
//! states, and the probabilistic description of the simulation model.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::Angle;
use crate::estimators::CorrelationSource;
use crate::quadrature::{integrate, QuadratureError, Tolerance};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("delay exponent must be finite and nonnegative, got {0}")]
    InvalidExponent(f64),
    #[error("coincidence probability must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("quadrature failed at theta = {theta}: {source}")]
    Quadrature {
        theta: f64,
        #[source]
        source: QuadratureError,
    },
    #[error("time scales must be finite and nonnegative")]
    InvalidTimes,
}

/// Single-particle probabilities at station 1 and the three averages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QtPrediction {
    pub p_plus: f64,
    pub p_minus: f64,
    pub e1: f64,
    pub e2: f64,
    pub e: f64,
}

fn cos2(x: f64) -> f64 {
    (2.0 * x).cos()
}

/// Singlet state: `P± = 1/2`, `E1 = E2 = 0`, `E = −cos 2(α−β)`.
pub fn qt_singlet(alpha: Angle, beta: Angle) -> QtPrediction {
    QtPrediction {
        p_plus: 0.5,
        p_minus: 0.5,
        e1: 0.0,
        e2: 0.0,
        e: -cos2(alpha.radians() - beta.radians()),
    }
}

/// Product state with polarizations `η₁`, `η₂`.
pub fn qt_product(alpha: Angle, beta: Angle, eta1: Angle, eta2: Angle) -> QtPrediction {
    let d1 = alpha.radians() - eta1.radians();
    let e1 = cos2(d1);
    let e2 = cos2(beta.radians() - eta2.radians());
    let p_plus = d1.cos().powi(2);
    QtPrediction {
        p_plus,
        p_minus: 1.0 - p_plus,
        e1,
        e2,
        e: e1 * e2,
    }
}

/// `S(θ) = 3cos 2θ − cos 6θ`, the magnitude of the CHSH function of the
/// singlet at angle spacing θ.
pub fn qt_s_theta(theta: Angle) -> f64 {
    let t = theta.radians();
    3.0 * cos2(t) - (6.0 * t).cos()
}

/// Probability that two delays drawn uniformly from `[0, T1]` and `[0, T2]`
/// differ by less than `W`.
///
/// Evaluated as one minus the two corner triangles cut off by the window,
/// which equals the four-absolute-value closed form but stays accurate when
/// one interval is much shorter than the other. A zero `T` means a delay
/// fixed at 0 and gives the continuous limit.
pub fn weight_w(t1: f64, t2: f64, window: f64) -> f64 {
    if window <= 0.0 {
        return 0.0;
    }
    let (a, b) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
    if window >= b {
        return 1.0;
    }
    if a == 0.0 {
        return window / b;
    }
    // t_b ≥ t_a + W, then t_a ≥ t_b + W
    let upper = if a <= b - window {
        a * (b - window) - 0.5 * a * a
    } else {
        0.5 * (b - window) * (b - window)
    };
    let lower = if a > window {
        0.5 * (a - window) * (a - window)
    } else {
        0.0
    };
    (1.0 - (upper + lower) / (a * b)).clamp(0.0, 1.0)
}

fn check_exponent(d: f64) -> Result<(), OracleError> {
    if d.is_finite() && d >= 0.0 {
        Ok(())
    } else {
        Err(OracleError::InvalidExponent(d))
    }
}

/// Case I correlation of the simulation model to first order in `W`, with
/// `θ = α − β`.
///
/// Even `d` up to 8 use closed forms. Other `d` go through
/// [`model_e_quadrature`].
pub fn model_e_first_order(theta: Angle, d: f64) -> Result<f64, OracleError> {
    check_exponent(d)?;
    let t = theta.radians();
    let c = cos2(t);
    let closed = match d {
        _ if d == 0.0 => Some(-0.5 * c),
        _ if d == 2.0 => {
            let s = (2.0 * t).sin();
            let log_term = if s.abs() < 1e-300 {
                0.0
            } else {
                0.5 * s * s * t.tan().abs().ln()
            };
            Some(FRAC_PI_4 * s.abs() * c - c + log_term)
        }
        _ if d == 4.0 => Some(-c),
        _ if d == 6.0 => Some(-0.5 * c * (1.0 + 24.0 / (19.0 + 5.0 * (4.0 * t).cos()))),
        _ if d == 8.0 => Some(-(53.0 * c + 7.0 * (6.0 * t).cos()) / (39.0 + 21.0 * (4.0 * t).cos())),
        _ => None,
    };
    match closed {
        Some(e) => Ok(e),
        None => model_e_quadrature(theta, d),
    }
}

/// Numerical evaluation of
/// `E = −∫cos2(ξ−α)cos2(ξ−β)·m(ξ)^−d dξ / ∫m(ξ)^−d dξ` with
/// `m = max(|sin 2(ξ−α)|, |sin 2(ξ−β)|)`, for any `d ≥ 0`.
///
/// When `θ` is a multiple of π/2 both sines vanish together. For `d ≥ 1`
/// the weight then concentrates there and `E = −cos 2θ`; for `d < 1` the
/// integrals converge and are computed by excluding `ε`-neighbourhoods and
/// extrapolating `ε → 0`.
pub fn model_e_quadrature(theta: Angle, d: f64) -> Result<f64, OracleError> {
    check_exponent(d)?;
    let t = theta.radians();
    let c = cos2(t);
    let off_axis = {
        let r = t.rem_euclid(FRAC_PI_2);
        r.min(FRAC_PI_2 - r)
    };
    let num_f = move |x: f64| {
        let (a, b) = ((2.0 * (x - t)).sin(), (2.0 * x).sin());
        (2.0 * (x - t)).cos() * (2.0 * x).cos() * a.abs().max(b.abs()).powf(-d)
    };
    let den_f = move |x: f64| {
        let (a, b) = ((2.0 * (x - t)).sin(), (2.0 * x).sin());
        a.abs().max(b.abs()).powf(-d)
    };
    let wrap = |source| OracleError::Quadrature { theta: t, source };

    if off_axis < 1e-12 {
        if d >= 1.0 || d == 0.0 {
            return Ok(-c);
        }
        return singular_ratio(&num_f, &den_f, d).map_err(wrap);
    }

    let mut points: Vec<f64> = (0..4)
        .map(|j| t / 2.0 + j as f64 * FRAC_PI_4)
        .chain([0.0, FRAC_PI_2, t, t + FRAC_PI_2])
        .map(|x| x.rem_euclid(PI))
        .collect();
    points.sort_by(f64::total_cmp);
    let tol = Tolerance::default();
    let num = integrate(num_f, 0.0, PI, &points, tol).map_err(wrap)?;
    let den = integrate(den_f, 0.0, PI, &points, tol).map_err(wrap)?;
    Ok(-num.value / den.value)
}

/// θ on the axes with `0 < d < 1`: the singular points are ξ = 0 and π/2.
/// The excluded pieces behave like `a₁ε^(1−d) + a₃ε^(3−d) + …`, which
/// Richardson extrapolation removes term by term.
fn singular_ratio(num_f: &impl Fn(f64) -> f64, den_f: &impl Fn(f64) -> f64, d: f64) -> Result<f64, QuadratureError> {
    const LEVELS: usize = 6;
    let exponents = [1.0 - d, 3.0 - d, 5.0 - d, 7.0 - d, 9.0 - d];
    let tol = Tolerance {
        abs: 1e-15,
        rel: 1e-13,
        max_intervals: 4000,
    };
    let excluded = |f: &dyn Fn(f64) -> f64, eps: f64| -> Result<f64, QuadratureError> {
        let a = integrate(f, eps, FRAC_PI_2 - eps, &[], tol)?;
        let b = integrate(f, FRAC_PI_2 + eps, PI - eps, &[], tol)?;
        Ok(a.value + b.value)
    };
    let extrapolate = |f: &dyn Fn(f64) -> f64| -> Result<f64, QuadratureError> {
        let mut table: Vec<Vec<f64>> = Vec::with_capacity(LEVELS);
        for k in 0..LEVELS {
            let eps = 0.05 / 2f64.powi(k as i32);
            let mut row = vec![excluded(f, eps)?];
            for (j, p) in exponents.iter().take(k).enumerate() {
                let r = 2f64.powf(*p);
                let v = (r * row[j] - table[k - 1][j]) / (r - 1.0);
                row.push(v);
            }
            table.push(row);
        }
        Ok(*table[LEVELS - 1].last().expect("nonempty row"))
    };
    Ok(-extrapolate(num_f)? / extrapolate(den_f)?)
}

/// Case I model at finite `W` with continuous delays (times in units of
/// `T0`): returns `(E, Γ)` where `Γ` is the probability that a pair
/// coincides.
pub fn model_finite_window(theta: Angle, d: f64, window: f64) -> Result<(f64, f64), OracleError> {
    check_exponent(d)?;
    if !(window.is_finite() && window >= 0.0) {
        return Err(OracleError::InvalidTimes);
    }
    let t = theta.radians();
    let w = move |x: f64| {
        let t1 = (2.0 * (x - t)).sin().abs().powf(d);
        let t2 = (2.0 * x).sin().abs().powf(d);
        weight_w(t1, t2, window)
    };
    let num_f = move |x: f64| (2.0 * (x - t)).cos() * (2.0 * x).cos() * w(x);
    let mut points: Vec<f64> = (0..4)
        .map(|j| t / 2.0 + j as f64 * FRAC_PI_4)
        .chain([0.0, FRAC_PI_2, t, t + FRAC_PI_2])
        .map(|x| x.rem_euclid(PI))
        .collect();
    points.sort_by(f64::total_cmp);
    let tol = Tolerance {
        abs: 1e-13,
        rel: 1e-9,
        max_intervals: 50_000,
    };
    let wrap = |source| OracleError::Quadrature { theta: t, source };
    let num = integrate(num_f, 0.0, PI, &points, tol).map_err(wrap)?;
    let den = integrate(w, 0.0, PI, &points, tol).map_err(wrap)?;
    Ok((-num.value / den.value, den.value / PI))
}

/// A value with a flag saying whether its approximation holds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Approximate {
    pub value: f64,
    pub valid: bool,
}

/// Ratio `W/T0` up to which the first-order coincidence law is flagged valid.
pub const FIRST_ORDER_LIMIT: f64 = 0.01;

/// Minimum coincidence probability over settings at `d = 4`, to first order
/// in `W`: `γ = 16W/(3πT0)`.
pub fn gamma_first_order(window: f64, t0: f64) -> Approximate {
    Approximate {
        value: 16.0 * window / (3.0 * PI * t0),
        valid: window / t0 <= FIRST_ORDER_LIMIT,
    }
}

/// Upper bound `6/γ − 4` on `|S|` for local models whose coincidence
/// probability is at least `γ`.
pub fn larsson_bound(gamma: f64) -> Result<f64, OracleError> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(OracleError::NonPositiveGamma(gamma));
    }
    Ok(6.0 / gamma - 4.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validity {
    Exact,
    FirstOrderInW,
    LimitWInfinite,
}

/// A reference model evaluated at `(α, β)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Singlet,
    Product {
        eta1: Angle,
        eta2: Angle,
    },
    /// Case I simulation model to first order in `W`.
    FirstOrder {
        d: f64,
    },
    /// Case I simulation model with the time tags ignored.
    NoWindow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPrediction {
    pub e1: f64,
    pub e2: f64,
    pub e: f64,
    pub validity: Validity,
}

impl Model {
    pub fn validity(&self) -> Validity {
        match self {
            Model::Singlet | Model::Product { .. } => Validity::Exact,
            Model::FirstOrder { .. } => Validity::FirstOrderInW,
            Model::NoWindow => Validity::LimitWInfinite,
        }
    }

    pub fn predict(&self, alpha: Angle, beta: Angle) -> Result<ModelPrediction, OracleError> {
        let (e1, e2, e) = match *self {
            Model::Singlet => {
                let q = qt_singlet(alpha, beta);
                (q.e1, q.e2, q.e)
            }
            Model::Product { eta1, eta2 } => {
                let q = qt_product(alpha, beta, eta1, eta2);
                (q.e1, q.e2, q.e)
            }
            Model::FirstOrder { d } => (0.0, 0.0, model_e_first_order(alpha - beta, d)?),
            Model::NoWindow => (0.0, 0.0, -0.5 * cos2(alpha.radians() - beta.radians())),
        };
        Ok(ModelPrediction {
            e1,
            e2,
            e,
            validity: self.validity(),
        })
    }
}

impl CorrelationSource for Model {
    fn correlation(&self, alpha: Angle, beta: Angle) -> Option<f64> {
        self.predict(alpha, beta).ok().map(|p| p.e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{theta_grid, theta_scan};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    fn a(x: f64) -> Angle {
        Angle::new(x)
    }

    #[test]
    fn singlet_values() {
        assert!((qt_singlet(a(0.0), a(PI / 8.0)).e + FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((qt_singlet(a(0.7), a(0.7)).e + 1.0).abs() < 1e-15);
        assert!(qt_singlet(a(PI / 4.0), a(0.0)).e.abs() < 1e-15);
    }

    #[test]
    fn product_values() {
        let q = qt_product(a(0.3), a(1.1), a(0.3), a(1.1));
        assert!((q.e - 1.0).abs() < 1e-15);
        let q = qt_product(a(PI / 3.0), a(0.0), a(0.0), a(0.0));
        assert!((q.p_plus - 0.25).abs() < 1e-15);
        let (eta1, eta2) = (a(PI / 6.0), a(PI / 6.0 + PI / 2.0));
        for th in theta_grid(32) {
            let t = th.radians();
            let q = qt_product(a(t), a(t + PI / 4.0), eta1, eta2);
            // product of the two Malus averages; opposite in sign to +½ sin 4(π/6 − θ)
            assert!((q.e + 0.5 * (4.0 * (PI / 6.0 - t)).sin()).abs() < 1e-12);
            assert!((q.p_plus - (t - PI / 6.0).cos().powi(2)).abs() < 1e-12);
            let p2 = 0.5 * (1.0 + q.e2);
            assert!((p2 - (t - PI / 6.0 - PI / 4.0).cos().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn s_theta_values() {
        assert!((qt_s_theta(a(PI / 8.0)) - 2.0 * SQRT_2).abs() < 1e-12);
        assert!((qt_s_theta(a(0.0)) - 2.0).abs() < 1e-15);
        // period π; half a period later the sign flips
        assert!((qt_s_theta(a(PI / 8.0 + PI / 2.0)).abs() - 2.0 * SQRT_2).abs() < 1e-12);
        assert!((qt_s_theta(a(PI / 8.0 + PI)) - 2.0 * SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn weight_examples() {
        assert!((weight_w(1.0, 1.0, 0.5) - 0.75).abs() < 1e-15);
        assert_eq!(weight_w(0.3, 0.5, 0.8), 1.0);
        assert_eq!(weight_w(0.3, 0.5, 2.0), 1.0);
        assert_eq!(weight_w(0.0, 0.5, 0.1), 0.2);
        assert_eq!(weight_w(0.0, 0.0, 0.1), 1.0);
        assert_eq!(weight_w(0.4, 0.5, 0.0), 0.0);
    }

    /// The four-absolute-value form, literally.
    fn weight_literal(t1: f64, t2: f64, w: f64) -> f64 {
        let sq = |x: f64| x * x.abs();
        (t1 * t1 + t2 * t2 + 2.0 * (t1 + t2) * w + sq(w - t1) + sq(w - t2) - sq(w - t1 + t2) - sq(w + t1 - t2))
            / (4.0 * t1 * t2)
    }

    #[test]
    fn weight_matches_literal_closed_form() {
        for &(t1, t2, w) in &[
            (1.0, 1.0, 0.5),
            (0.3, 0.9, 0.1),
            (0.9, 0.3, 0.5),
            (0.5, 0.6, 0.05),
            (0.2, 0.2, 0.3),
        ] {
            assert!((weight_w(t1, t2, w) - weight_literal(t1, t2, w)).abs() < 1e-14);
        }
    }

    #[test]
    fn first_order_closed_forms() {
        for th in theta_grid(24) {
            let c = cos2(th.radians());
            assert!((model_e_first_order(th, 4.0).unwrap() + c).abs() < 1e-15);
            assert!((model_e_first_order(th, 0.0).unwrap() + 0.5 * c).abs() < 1e-15);
        }
        assert!((model_e_first_order(a(0.0), 6.0).unwrap() + 1.0).abs() < 1e-15);
        for d in [2.0, 4.0, 6.0, 8.0] {
            assert!((model_e_first_order(a(0.0), d).unwrap() + 1.0).abs() < 1e-15, "d = {d}");
        }
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for d in [0.0, 2.0, 4.0, 6.0, 8.0] {
            for t in [0.1, 0.5, PI / 6.0, 1.2, 2.0, 2.9, -0.5] {
                let closed = model_e_first_order(a(t), d).unwrap();
                let quad = model_e_quadrature(a(t), d).unwrap();
                assert!((closed - quad).abs() < 1e-8, "d={d} t={t}: {closed} vs {quad}");
            }
        }
    }

    #[test]
    fn odd_exponent_by_quadrature() {
        let e = model_e_first_order(a(PI / 6.0), 3.0).unwrap();
        // between the d = 2 and d = 4 curves
        let lo = model_e_first_order(a(PI / 6.0), 2.0).unwrap();
        let hi = model_e_first_order(a(PI / 6.0), 4.0).unwrap();
        assert!(e < lo && e > hi, "{hi} < {e} < {lo}");
    }

    #[test]
    fn axis_limits() {
        for d in [1.0, 3.0, 5.5] {
            assert_eq!(model_e_quadrature(a(0.0), d).unwrap(), -1.0);
            assert_eq!(model_e_quadrature(a(PI / 2.0), d).unwrap(), 1.0);
        }
        // d < 1 on the axis: approached as θ → 0 (the gap shrinks like θ^(1−d))
        for d in [0.3, 0.7] {
            let on = model_e_quadrature(a(0.0), d).unwrap();
            let gaps: Vec<f64> = [1e-2, 1e-4, 1e-6]
                .iter()
                .map(|&t| (model_e_quadrature(a(t), d).unwrap() - on).abs())
                .collect();
            assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "d={d}: {gaps:?}");
        }
    }

    #[test]
    fn d_half_on_axis_matches_beta_function_oracle() {
        // θ = 0: E = −∫cos²u |sin u|^(−d) / ∫|sin u|^(−d) = −1/(2−d)
        // (ratio of Beta functions B(1/2−d/2, 3/2)/B(1/2−d/2, 1/2))
        for d in [0.25, 0.5, 0.75] {
            let e = model_e_quadrature(a(0.0), d).unwrap();
            let oracle = -1.0 / (2.0 - d);
            assert!((e - oracle).abs() < 1e-7, "d={d}: {e} vs {oracle}");
        }
    }

    #[test]
    fn theory_smax_ordering() {
        let g = theta_grid(720);
        let s = |d| theta_scan(&Model::FirstOrder { d }, &g).s_max.unwrap();
        assert!((s(0.0) - SQRT_2).abs() < 1e-4);
        assert!((s(4.0) - 2.0 * SQRT_2).abs() < 1e-4);
        let s6 = s(6.0);
        let s8 = s(8.0);
        assert!(s6 > 2.0 * SQRT_2 && s8 > s6, "{s6} {s8}");
        let s2 = s(2.0);
        assert!(s2 > 2.0 && s2 < 2.0 * SQRT_2);
    }

    #[test]
    fn gamma_law() {
        assert!((gamma_first_order(0.003, 1.0).value - 0.005093).abs() < 1e-6);
        assert_eq!(gamma_first_order(0.0, 1.0).value, 0.0);
        assert!((gamma_first_order(0.01, 1.0).value - 0.01698).abs() < 1e-5);
        assert!(gamma_first_order(0.003, 1.0).valid);
        assert!(!gamma_first_order(0.2, 1.0).valid);
    }

    #[test]
    fn larsson_values() {
        assert_eq!(larsson_bound(1.0).unwrap(), 2.0);
        let g = 3.0 - 3.0 / SQRT_2;
        assert!((larsson_bound(g).unwrap() - 2.0 * SQRT_2).abs() < 1e-12);
        assert!((larsson_bound(0.01).unwrap() - 596.0).abs() < 1e-9);
        assert!(larsson_bound(0.0).is_err());
        assert!(larsson_bound(-0.1).is_err());
    }

    #[test]
    fn finite_window_limits() {
        // W beyond 2T0: every pair coincides, giving the no-window model
        let (e, g) = model_finite_window(a(0.4), 4.0, 2.5).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        assert!((e + 0.5 * cos2(0.4)).abs() < 1e-10);
        // small W approaches first order
        let (e, _) = model_finite_window(a(0.4), 4.0, 1e-4).unwrap();
        assert!((e + cos2(0.4)).abs() < 1e-2);
    }

    proptest! {
        #[test]
        fn weight_properties(t1 in 0.0f64..2.0, t2 in 0.0f64..2.0, w in 0.0f64..3.0, dw in 0.0f64..1.0) {
            let v = weight_w(t1, t2, w);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - weight_w(t2, t1, w)).abs() < 1e-12);
            prop_assert!(weight_w(t1, t2, w + dw) >= v - 1e-12);
            if w >= t1 + t2 { prop_assert_eq!(v, 1.0); }
        }

        #[test]
        fn closed_forms_are_even_and_pi_periodic(t in -3.0f64..3.0, di in 0usize..5) {
            let d = [0.0, 2.0, 4.0, 6.0, 8.0][di];
            let e = model_e_first_order(a(t), d).unwrap();
            prop_assert!(e.abs() <= 1.0 + 1e-12);
            prop_assert!((e - model_e_first_order(a(-t), d).unwrap()).abs() < 1e-9);
            prop_assert!((e - model_e_first_order(a(t + PI), d).unwrap()).abs() < 1e-9);
        }
    }
}
