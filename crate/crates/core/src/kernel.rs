//! Periodic hazard kernels.
//!
//! The hazard `λ(t, u)` (rate at time `t` given the last event at `u`) is the
//! primitive. The cumulative hazard `Λ(t, u) = ∫_u^t λ(θ, u) dθ`, the survival
//! kernel `H = exp(-Λ)` and the density `K = λ H` are derived from it.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{RenewalError, Result};
use crate::quadrature;

/// Pure function of `(t, u)` with `t >= u`.
pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub const DEFAULT_QUADRATURE_STEP: f64 = 1e-3;

/// A periodic hazard environment.
///
/// Immutable after construction; cloning shares the evaluators.
#[derive(Clone)]
pub struct KernelHandle {
    name: String,
    period: f64,
    lambda_min: f64,
    lambda_max: f64,
    hazard: KernelFn,
    cumulative: Option<KernelFn>,
    quadrature_step: f64,
}

impl fmt::Debug for KernelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelHandle")
            .field("name", &self.name)
            .field("period", &self.period)
            .field("lambda_min", &self.lambda_min)
            .field("lambda_max", &self.lambda_max)
            .field("closed_form", &self.cumulative.is_some())
            .field("quadrature_step", &self.quadrature_step)
            .finish()
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(RenewalError::Construction(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl KernelHandle {
    /// A kernel from a user-supplied hazard. `Λ` is then computed by quadrature.
    pub fn new<F>(
        name: impl Into<String>,
        period: f64,
        lambda_min: f64,
        lambda_max: f64,
        hazard: F,
    ) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        check_positive("period", period)?;
        check_positive("lambda_min", lambda_min)?;
        check_positive("lambda_max", lambda_max)?;
        if lambda_max < lambda_min {
            return Err(RenewalError::Construction(format!(
                "lambda_max ({lambda_max}) < lambda_min ({lambda_min})"
            )));
        }
        Ok(Self {
            name: name.into(),
            period,
            lambda_min,
            lambda_max,
            hazard: Arc::new(hazard),
            cumulative: None,
            quadrature_step: DEFAULT_QUADRATURE_STEP,
        })
    }

    /// Attach a closed-form cumulative hazard `Λ(t, u)`.
    pub fn with_cumulative_hazard<F>(mut self, cumulative: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.cumulative = Some(Arc::new(cumulative));
        self
    }

    /// Drop the closed form so that `Λ` goes through quadrature.
    pub fn without_cumulative_hazard(mut self) -> Self {
        self.cumulative = None;
        self
    }

    pub fn with_quadrature_step(mut self, step: f64) -> Result<Self> {
        check_positive("quadrature_step", step)?;
        self.quadrature_step = step;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }
    pub fn quadrature_step(&self) -> f64 {
        self.quadrature_step
    }
    pub fn has_closed_form(&self) -> bool {
        self.cumulative.is_some()
    }

    fn check_order(t: f64, u: f64) -> Result<()> {
        if t < u || t.is_nan() || u.is_nan() {
            Err(RenewalError::Domain(format!("need t >= u, got t = {t}, u = {u}")))
        } else {
            Ok(())
        }
    }

    pub fn hazard(&self, t: f64, u: f64) -> Result<f64> {
        Self::check_order(t, u)?;
        Ok(self.lambda(t, u))
    }

    /// `Λ(t, u)`; closed form when available, composite Simpson otherwise.
    pub fn cumulative_hazard(&self, t: f64, u: f64) -> Result<f64> {
        Self::check_order(t, u)?;
        Ok(self.cum(t, u))
    }

    /// `H(t, u) = P(next event after t | event at u)`.
    pub fn survival(&self, t: f64, u: f64) -> Result<f64> {
        Self::check_order(t, u)?;
        Ok(self.surv(t, u))
    }

    /// `K(t, u) = λ(t, u) H(t, u)`, the density of the next arrival.
    pub fn density(&self, t: f64, u: f64) -> Result<f64> {
        Self::check_order(t, u)?;
        Ok(self.dens(t, u))
    }

    // Unchecked evaluators for the solvers' inner loops (caller guarantees t >= u).

    #[inline]
    pub(crate) fn lambda(&self, t: f64, u: f64) -> f64 {
        (self.hazard)(t, u)
    }

    #[inline]
    pub(crate) fn cum(&self, t: f64, u: f64) -> f64 {
        if t <= u {
            return 0.0;
        }
        match &self.cumulative {
            Some(c) => c(t, u),
            None => quadrature::simpson(|th| self.lambda(th, u), u, t, self.quadrature_step),
        }
    }

    #[inline]
    pub(crate) fn surv(&self, t: f64, u: f64) -> f64 {
        (-self.cum(t, u)).exp()
    }

    #[inline]
    pub(crate) fn dens(&self, t: f64, u: f64) -> f64 {
        if t < u {
            return 0.0;
        }
        self.lambda(t, u) * self.surv(t, u)
    }
}

/// `λ(t, u) = λ₀`.
pub fn make_constant(lambda0: f64, period: f64) -> Result<KernelHandle> {
    check_positive("lambda0", lambda0)?;
    Ok(
        KernelHandle::new("constant", period, lambda0, lambda0, move |_, _| lambda0)?
            .with_cumulative_hazard(move |t, u| lambda0 * (t - u)),
    )
}

/// `λ(t, u) = a + b sin(2πt/T)` with `0 < b < a`: an inhomogeneous Poisson process.
pub fn make_time_modulated(a: f64, b: f64, period: f64) -> Result<KernelHandle> {
    check_positive("a", a)?;
    check_positive("b", b)?;
    if b >= a {
        return Err(RenewalError::Construction(format!(
            "time_modulated requires 0 < b < a, got a = {a}, b = {b}"
        )));
    }
    let w = 2.0 * PI / period;
    Ok(
        KernelHandle::new("time_modulated", period, a - b, a + b, move |t, _| {
            a + b * (w * t).sin()
        })?
        .with_cumulative_hazard(move |t, u| a * (t - u) + b / w * ((w * u).cos() - (w * t).cos())),
    )
}

/// `λ(t, u) = a + b·½(1 + sin(2πt/T))·(1 − e^{−d(t−u)})`, bounds `[a, a + b]`.
///
/// The hazard depends on both the time of day and the age `t − u`.
pub fn make_age_time(a: f64, b: f64, period: f64, d: f64) -> Result<KernelHandle> {
    check_positive("a", a)?;
    check_positive("b", b)?;
    check_positive("d", d)?;
    let w = 2.0 * PI / period;
    let hb = 0.5 * b;
    Ok(
        KernelHandle::new("age_time", period, a, a + b, move |t, u| {
            a + hb * (1.0 + (w * t).sin()) * (1.0 - (-d * (t - u)).exp())
        })?
        .with_cumulative_hazard(move |t, u| {
            let x = t - u;
            let decay = (-d * x).exp();
            // ∫ (1 − e^{−d(θ−u)}) dθ
            let age_part = x - (1.0 - decay) / d;
            // ∫ sin(wθ) dθ
            let sin_part = ((w * u).cos() - (w * t).cos()) / w;
            // ∫ sin(wθ) e^{−d(θ−u)} dθ
            let den = d * d + w * w;
            let damped = (decay * (-d * (w * t).sin() - w * (w * t).cos())
                + d * (w * u).sin()
                + w * (w * u).cos())
                / den;
            a * x + hb * (age_part + sin_part - damped)
        }),
    )
}

/// `λ(t, u) = a + b(1 − e^{−d(t−u)})`: a classical (i.i.d.) renewal process
/// viewed with an arbitrary period. Bounds `[a, a + b]`.
pub fn make_age_only(a: f64, b: f64, d: f64, period: f64) -> Result<KernelHandle> {
    check_positive("a", a)?;
    check_positive("b", b)?;
    check_positive("d", d)?;
    Ok(
        KernelHandle::new("age_only", period, a, a + b, move |t, u| {
            a + b * (1.0 - (-d * (t - u)).exp())
        })?
        .with_cumulative_hazard(move |t, u| {
            let x = t - u;
            a * x + b * (x - (1.0 - (-d * x).exp()) / d)
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    LowerBound,
    UpperBound,
    Periodicity,
    SurvivalBracket,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub t: f64,
    pub u: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct KernelReport {
    pub samples: usize,
    pub violations: Vec<Violation>,
}

impl KernelReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Spot-check the bound, periodicity and survival-bracket invariants on
/// random pairs `t >= u` drawn from `[0, 3T]²`.
pub fn verify_kernel(k: &KernelHandle, n_samples: usize, tol: f64) -> KernelReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b65_726e_656c);
    let span = 3.0 * k.period;
    let mut report = KernelReport {
        samples: n_samples,
        violations: Vec::new(),
    };
    for _ in 0..n_samples.max(1) {
        let x: f64 = rng.gen::<f64>() * span;
        let y: f64 = rng.gen::<f64>() * span;
        let (t, u) = if x >= y { (x, y) } else { (y, x) };
        let mut push = |kind, value| {
            report.violations.push(Violation { kind, t, u, value });
        };
        let l = k.lambda(t, u);
        if !(l >= k.lambda_min - tol) {
            push(ViolationKind::LowerBound, l);
        }
        if !(l <= k.lambda_max + tol) {
            push(ViolationKind::UpperBound, l);
        }
        let shifted = k.lambda(t + k.period, u + k.period);
        if !((shifted - l).abs() <= tol) {
            push(ViolationKind::Periodicity, shifted - l);
        }
        let h = k.surv(t, u);
        let lo = (-k.lambda_max * (t - u)).exp();
        let hi = (-k.lambda_min * (t - u)).exp();
        if !(h >= lo - tol && h <= hi + tol) {
            push(ViolationKind::SurvivalBracket, h);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn constant_kernel_values() {
        let k = make_constant(1.0, 1.0).unwrap();
        assert_eq!(k.hazard(7.3, 2.1).unwrap(), 1.0);
        assert!(close(k.cumulative_hazard(2.0, 0.0).unwrap(), 2.0, 1e-15));
        assert!(close(k.survival(2.0, 0.0).unwrap(), (-2.0f64).exp(), 1e-15));
        assert!(close(k.survival(2.0, 0.0).unwrap(), 0.135335, 1e-6));
        assert!(close(k.density(2.0, 0.0).unwrap(), (-2.0f64).exp(), 1e-15));
    }

    #[test]
    fn time_modulated_full_period() {
        let k = make_time_modulated(1.0, 0.5, 1.0).unwrap();
        assert_eq!(k.lambda_min(), 0.5);
        assert_eq!(k.lambda_max(), 1.5);
        assert!(close(k.cumulative_hazard(1.0, 0.0).unwrap(), 1.0, 1e-14));
        assert!(close(k.survival(1.0, 0.0).unwrap(), (-1.0f64).exp(), 1e-14));
    }

    #[test]
    fn degenerate_interval_limits() {
        for k in builtins() {
            for &u in &[0.0, 0.37, 5.2] {
                assert_eq!(k.cumulative_hazard(u, u).unwrap(), 0.0);
                assert_eq!(k.survival(u, u).unwrap(), 1.0);
                assert_eq!(k.density(u, u).unwrap(), k.hazard(u, u).unwrap());
            }
        }
    }

    #[test]
    fn age_time_zero_age() {
        let k = make_age_time(0.5, 1.0, 1.0, 1.0).unwrap();
        for &t in &[0.0, 0.25, 0.8, 13.1] {
            assert!(close(k.hazard(t, t).unwrap(), 0.5, 1e-15));
        }
    }

    #[test]
    fn reversed_arguments_are_domain_errors() {
        let k = make_constant(1.0, 1.0).unwrap();
        assert!(matches!(k.cumulative_hazard(0.0, 1.0), Err(RenewalError::Domain(_))));
        assert!(matches!(k.survival(0.0, 1.0), Err(RenewalError::Domain(_))));
        assert!(matches!(k.density(0.0, 1.0), Err(RenewalError::Domain(_))));
    }

    #[test]
    fn constructor_constraints() {
        assert!(make_time_modulated(1.0, 1.0, 1.0).is_err());
        assert!(make_time_modulated(1.0, 0.0, 1.0).is_err());
        assert!(make_constant(-1.0, 1.0).is_err());
        assert!(make_age_time(0.5, 1.0, 0.0, 1.0).is_err());
        assert!(KernelHandle::new("bad", 1.0, 2.0, 1.0, |_, _| 1.0).is_err());
    }

    fn builtins() -> Vec<KernelHandle> {
        vec![
            make_constant(1.0, 1.0).unwrap(),
            make_time_modulated(1.0, 0.5, 1.0).unwrap(),
            make_age_time(0.5, 1.0, 1.0, 1.0).unwrap(),
            make_age_time(0.8, 0.7, 2.0, 3.0).unwrap(),
            make_age_only(0.5, 1.5, 1.0, 1.0).unwrap(),
        ]
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for k in builtins() {
            let q = k.clone().without_cumulative_hazard();
            for &(t, u) in &[(1.0, 0.0), (2.7, 0.3), (5.05, 4.0), (12.0, 1.5)] {
                let a = k.cumulative_hazard(t, u).unwrap();
                let b = q.cumulative_hazard(t, u).unwrap();
                assert!(close(a, b, 1e-8), "{}: {a} vs {b}", k.name());
            }
        }
    }

    #[test]
    fn builtins_pass_verification() {
        for k in builtins() {
            let report = verify_kernel(&k, 2000, 1e-12);
            assert!(report.is_ok(), "{}: {:?}", k.name(), &report.violations[..1]);
        }
    }

    #[test]
    fn lying_bound_is_reported() {
        let k = KernelHandle::new("liar", 1.0, 1.0, 2.0, |t: f64, _| {
            if (t % 1.0) < 0.5 {
                0.5
            } else {
                1.5
            }
        })
        .unwrap();
        let report = verify_kernel(&k, 200, 1e-12);
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::LowerBound));
    }

    #[test]
    fn density_integrates_to_one() {
        for k in builtins() {
            let u = 0.3;
            let upper = u + 40.0 / k.lambda_min();
            let mass = quadrature::simpson(|t| k.dens(t, u), u, upper, 1e-3);
            let gap = (-k.lambda_min() * (upper - u)).exp();
            assert!(close(mass, 1.0, gap + 1e-9), "{}: {mass}", k.name());
        }
    }
}
