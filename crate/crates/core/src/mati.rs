//! Closed-form bound on the dwell time after each transmission, the scalar
//! comparison ODE it comes from, the state-dependent choice of the contraction
//! level `λ`, and the practical-stability radius.

use thiserror::Error;

use crate::numerics::{integrate_fixed, locate_event, FnField, NumericsError};
use crate::protocols::{SandwichBounds, SigmaFunction};
use crate::scalar::{lit, Scalar};

/// Relative tolerance under which `γ` and `L` count as equal.
pub const EQUAL_GAIN_TOL: f64 = 1e-12;
/// Default lower clamp for generated `λ`.
pub const DEFAULT_LAMBDA_FLOOR: f64 = 1e-3;
/// Default upper clamp for generated `λ`; keeps the dwell time positive.
pub const DEFAULT_LAMBDA_CEILING: f64 = 1.0 - 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatiError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("inverse hyperbolic tangent argument {0} is not below 1")]
    Domain(f64),
    #[error("phi never reached lambda within {horizon} s")]
    NoCrossing { horizon: f64 },
    #[error("bound is vacuous: gamma^2 = {gamma_sq} does not exceed eta = {eta}")]
    Vacuous { gamma_sq: f64, eta: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn f64_of<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// The triple `(γ, L, λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatiParams<T> {
    pub gamma: T,
    pub l: T,
    pub lambda: T,
}

impl<T: Scalar> MatiParams<T> {
    pub fn new(gamma: T, l: T, lambda: T) -> Result<Self, MatiError> {
        if !(gamma > T::zero() && gamma.is_finite()) {
            return Err(MatiError::InvalidParams(format!("gamma = {gamma} must be positive")));
        }
        if !(l > T::zero() && l.is_finite()) {
            return Err(MatiError::InvalidParams(format!("L = {l} must be positive")));
        }
        if !(lambda > T::zero() && lambda < T::one()) {
            return Err(MatiError::InvalidParams(format!("lambda = {lambda} must lie in (0, 1)")));
        }
        Ok(Self { gamma, l, lambda })
    }
}

/// Dwell-time bound `𝒯(γ, L, λ)`.
///
/// With `r = sqrt(|(γ/L)² − 1|)` and
/// `a = r(1−λ) / (2λ/(λ+1)·(γ/L − 1) + 1 + λ)` this is `atan(a)/(Lr)` for
/// `γ > L`, `(1−λ)/(L(1+λ))` for `γ = L` and `atanh(a)/(Lr)` for `γ < L`.
pub fn mati_bound<T: Scalar>(p: &MatiParams<T>) -> Result<T, MatiError> {
    let MatiParams { gamma, l, lambda } = *p;
    let one = T::one();
    if (gamma - l).abs() <= lit::<T>(EQUAL_GAIN_TOL) * gamma.max(l) {
        return Ok((one - lambda) / (one + lambda) / l);
    }
    let ratio = gamma / l;
    let r = (ratio * ratio - one).abs().sqrt();
    let denom = lit::<T>(2.0) * lambda / (lambda + one) * (ratio - one) + one + lambda;
    let arg = r * (one - lambda) / denom;
    if gamma > l {
        Ok(arg.atan() / (l * r))
    } else {
        if arg >= one {
            return Err(MatiError::Domain(f64_of(arg)));
        }
        Ok(arg.atanh() / (l * r))
    }
}

/// First time `φ` falls to `λ` under `φ̇ = −2Lφ − γ(φ² + 1)`, `φ(0) = 1/λ`.
///
/// Integrated with RK4 on a grid of `𝒯/2000`; searched up to `10·𝒯`.
pub fn phi_crossing_time<T: Scalar>(p: &MatiParams<T>) -> Result<T, MatiError> {
    let bound = mati_bound(p)?;
    let horizon = lit::<T>(10.0) * bound;
    let step = bound / lit(2000.0);
    let field = phi_field(p.gamma, p.l);
    let lambda = p.lambda;
    let hit = locate_event(&field, |x: &[T]| lambda - x[0], T::zero(), &[T::one() / lambda], horizon, step)?;
    hit.map(|(t, _)| t).ok_or(MatiError::NoCrossing { horizon: f64_of(horizon) })
}

/// Right-hand side of the comparison ODE for `φ`.
pub fn phi_field<T: Scalar>(gamma: T, l: T) -> FnField<impl Fn(T, &[T], &mut [T])> {
    FnField::new(1, move |_t: T, x: &[T], dx: &mut [T]| {
        dx[0] = -lit::<T>(2.0) * l * x[0] - gamma * (x[0] * x[0] + T::one());
    })
}

/// `φ(τ)` from `φ(0) = 1/λ`.
pub fn phi_at<T: Scalar>(gamma: T, l: T, lambda: T, tau: T, step: T) -> Result<T, MatiError> {
    let field = phi_field(gamma, l);
    Ok(integrate_fixed(&field, T::zero(), &[T::one() / lambda], tau, step)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    StateDependent,
    Fixed,
}

/// How `λⱼ` is chosen at each transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaPolicy<T> {
    pub mode: LambdaMode,
    pub floor: T,
    pub ceiling: T,
    pub fixed_value: Option<T>,
}

impl<T: Scalar> Default for LambdaPolicy<T> {
    fn default() -> Self {
        Self::state_dependent()
    }
}

impl<T: Scalar> LambdaPolicy<T> {
    pub fn state_dependent() -> Self {
        Self {
            mode: LambdaMode::StateDependent,
            floor: lit(DEFAULT_LAMBDA_FLOOR),
            ceiling: lit(DEFAULT_LAMBDA_CEILING),
            fixed_value: None,
        }
    }

    pub fn fixed(value: T) -> Result<Self, MatiError> {
        let p = Self { mode: LambdaMode::Fixed, fixed_value: Some(value), ..Self::state_dependent() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MatiError> {
        let unit = |v: T| v > T::zero() && v < T::one();
        if !(unit(self.floor) && unit(self.ceiling) && self.floor <= self.ceiling) {
            return Err(MatiError::InvalidParams(format!(
                "lambda clamp [{}, {}] must be an ordered subinterval of (0, 1)",
                self.floor, self.ceiling
            )));
        }
        match (self.mode, self.fixed_value) {
            (LambdaMode::Fixed, Some(v)) if unit(v) => Ok(()),
            (LambdaMode::Fixed, _) => Err(MatiError::InvalidParams("fixed lambda must lie in (0, 1)".into())),
            (LambdaMode::StateDependent, _) => Ok(()),
        }
    }
}

/// `λ = clamp(σ(W)/W, floor, ceiling)`, or the fixed value.
///
/// `W = 0` yields the ceiling, the limit of `σ(s)/s` as `s → 0⁺`.
pub fn generate_lambda<T: Scalar>(w: T, sigma: &SigmaFunction, policy: &LambdaPolicy<T>) -> T {
    match policy.mode {
        LambdaMode::Fixed => policy.fixed_value.expect("validated fixed policy"),
        LambdaMode::StateDependent => {
            if !(w > T::zero()) {
                return policy.ceiling;
            }
            (sigma.eval(w) / w).max(policy.floor).min(policy.ceiling)
        }
    }
}

/// Practical-stability radius
/// `2·λ_max(γ² − η)ᾱ_e(d)² / (λ_min·η·(1 − e^{−ηε}))`.
#[allow(clippy::too_many_arguments)]
pub fn delta_bound<T: Scalar>(
    gamma: T,
    eta: T,
    lambda_max: T,
    lambda_min: T,
    alpha_bar_e: &SandwichBounds,
    d: T,
    eps_min_interjump: T,
) -> Result<T, MatiError> {
    if !(gamma * gamma > eta) {
        return Err(MatiError::Vacuous { gamma_sq: f64_of(gamma * gamma), eta: f64_of(eta) });
    }
    if !(eta > T::zero()) || !(eps_min_interjump > T::zero()) {
        return Err(MatiError::InvalidParams("eta and epsilon must be positive".into()));
    }
    if !(lambda_min > T::zero() && lambda_min <= lambda_max && lambda_max < T::one()) {
        return Err(MatiError::InvalidParams(format!(
            "need 0 < lambda_min = {lambda_min} <= lambda_max = {lambda_max} < 1"
        )));
    }
    let a = alpha_bar_e.upper(d);
    let num = lit::<T>(2.0) * lambda_max * (gamma * gamma - eta) * a * a;
    let den = lambda_min * eta * (T::one() - (-eta * eps_min_interjump).exp());
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::{sandwich_bounds, ProtocolKind};

    fn p(g: f64, l: f64, lam: f64) -> MatiParams<f64> {
        MatiParams::new(g, l, lam).unwrap()
    }

    #[test]
    fn equal_gain_branch() {
        let t = mati_bound(&p(1.0, 1.0, 0.5)).unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-12);
        let above = mati_bound(&p(1.0 + 1e-7, 1.0, 0.5)).unwrap();
        let below = mati_bound(&p(1.0 - 1e-7, 1.0, 0.5)).unwrap();
        assert!((above - t).abs() < 1e-6 && (below - t).abs() < 1e-6);
    }

    #[test]
    fn arctan_branch_value() {
        // r = sqrt(3), a = (sqrt(3)/2) / (2/3 + 3/2)
        let t = mati_bound(&p(2.0, 1.0, 0.5)).unwrap();
        assert!((t - 0.2195381365438452).abs() < 1e-12);
    }

    #[test]
    fn vanishes_as_lambda_approaches_one() {
        let mut prev = f64::INFINITY;
        for lam in [0.9, 0.99, 0.999, 0.999999] {
            let t = mati_bound(&p(2.0, 1.0, lam)).unwrap();
            assert!(t > 0.0 && t < prev);
            prev = t;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn params_are_validated() {
        assert!(MatiParams::new(0.0, 1.0, 0.5).is_err());
        assert!(MatiParams::new(1.0, -1.0, 0.5).is_err());
        assert!(MatiParams::new(1.0, 1.0, 1.0).is_err());
        assert!(MatiParams::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn phi_crossing_matches_closed_form() {
        let q = p(2.0, 1.0, 0.5);
        let (a, b) = (mati_bound(&q).unwrap(), phi_crossing_time(&q).unwrap());
        assert!((a - b).abs() / a < 1e-6);
        let e = phi_crossing_time(&p(1.0, 1.0, 0.5)).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-6);
        let fast = phi_crossing_time(&p(1.0, 1.0, 0.9)).unwrap();
        assert!(fast < e);
    }

    #[test]
    fn lambda_generation() {
        let sigma = SigmaFunction { kind: ProtocolKind::ModifiedTod, nodes: 2 };
        let pol = LambdaPolicy::<f64>::state_dependent();
        assert!((generate_lambda(2.0, &sigma, &pol) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!((generate_lambda(1.0, &sigma, &pol) - 0.80402).abs() < 1e-5);
        assert_eq!(generate_lambda(0.0, &sigma, &pol), pol.ceiling);
        assert_eq!(generate_lambda(1e-12, &sigma, &pol), pol.ceiling);
        let rr = SigmaFunction { kind: ProtocolKind::ModifiedRr, nodes: 2 };
        assert_eq!(generate_lambda(1e-9, &rr, &pol), pol.ceiling);
        let fixed = LambdaPolicy::fixed(0.9).unwrap();
        assert_eq!(generate_lambda(2.0, &sigma, &fixed), 0.9);
        assert!(LambdaPolicy::fixed(1.5).is_err());
    }

    #[test]
    fn delta_examples() {
        let id = sandwich_bounds(ProtocolKind::ModifiedTod, 2);
        assert_eq!(delta_bound(2.0, 1.0, 0.5, 0.5, &id, 0.0, 1.0).unwrap(), 0.0);
        let v: f64 = delta_bound(2.0, 1.0, 0.5, 0.5, &id, 1.0, 1.0).unwrap();
        assert!((v - 9.4915).abs() < 1e-3);
        let near = delta_bound(2.0, 4.0 - 1e-12, 0.5, 0.5, &id, 1.0, 1.0).unwrap();
        assert!(near < 1e-9);
        assert!(matches!(delta_bound(1.0, 1.0, 0.5, 0.5, &id, 1.0, 1.0), Err(MatiError::Vacuous { .. })));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn closed_form_matches_the_comparison_ode(gamma in 0.1f64..50.0, l in 0.1f64..50.0, lambda in 0.02f64..0.98) {
            let p = MatiParams::new(gamma, l, lambda).unwrap();
            let closed = mati_bound(&p).unwrap();
            let ode = phi_crossing_time(&p).unwrap();
            prop_assert!((closed - ode).abs() <= 1e-5 * ode);
        }

        #[test]
        fn bound_shrinks_as_lambda_grows(gamma in 0.1f64..50.0, l in 0.1f64..50.0, a in 0.02f64..0.97, gap in 0.001f64..0.5) {
            let b = (a + gap).min(0.99);
            let ta = mati_bound(&MatiParams::new(gamma, l, a).unwrap()).unwrap();
            let tb = mati_bound(&MatiParams::new(gamma, l, b).unwrap()).unwrap();
            prop_assert!(tb > 0.0 && tb < ta);
        }

        #[test]
        fn continuous_across_gamma_equals_l(l in 0.1f64..50.0, lambda in 0.02f64..0.98) {
            let at = |g: f64| mati_bound(&MatiParams::new(g, l, lambda).unwrap()).unwrap();
            let centre = at(l);
            prop_assert!((at(l * (1.0 + 1e-6)) - centre).abs() <= 1e-4 * centre);
            prop_assert!((at(l * (1.0 - 1e-6)) - centre).abs() <= 1e-4 * centre);
        }
    }
}
