//! The renewal equation for the event rate and the exact time-`t` laws of
//! the recurrence times.
//!
//! With initial law `ν` for the age at the start time `s`, the event rate
//! `r^ν(t, s)` solves the Volterra equation of the second kind
//!
//! `r^ν(t, s) = K^ν(t, s) + ∫_s^t r^ν(u, s) K(t, u) du`,
//!
//! where `K^ν` is the density of the first arrival. It is solved by product
//! trapezoid stepping with the diagonal term taken implicitly.

use crate::distribution::{Atom, DensityPiece, HalfLineDistribution};
use crate::error::{RenewalError, Result};
use crate::kernel::KernelHandle;
use crate::quadrature;

/// Law of the age at the start time (the last event happened at `s − x`).
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLaw(HalfLineDistribution);

impl InitialLaw {
    /// An event exactly at the start time.
    pub fn delta0() -> Self {
        Self(HalfLineDistribution::dirac(0.0).expect("valid atom"))
    }

    pub fn dirac(x: f64) -> Result<Self> {
        Ok(Self(HalfLineDistribution::dirac(x)?))
    }

    /// Any law whose stored mass plus recorded tail is one (within 1e-6).
    pub fn from_distribution(d: HalfLineDistribution) -> Result<Self> {
        let gap = (d.mass() - 1.0).abs();
        if gap > d.tail_bound() + 1e-6 {
            return Err(RenewalError::Construction(format!(
                "initial law has mass {} (tail bound {:e})",
                d.mass(),
                d.tail_bound()
            )));
        }
        Ok(Self(d))
    }

    pub fn distribution(&self) -> &HalfLineDistribution {
        &self.0
    }

    pub fn is_delta0(&self) -> bool {
        self.0.pieces().is_empty() && self.0.atoms().len() == 1 && self.0.atoms()[0].location == 0.0
    }
}

/// `exp(−∫_s^t λ(θ, s − x) dθ)`: survival to `t` given age `x` at `s`.
fn survival_from_age(k: &KernelHandle, t: f64, s: f64, x: f64) -> f64 {
    let u = s - x;
    (-(k.cum(t, u) - k.cum(s, u))).exp()
}

fn density_from_age(k: &KernelHandle, t: f64, s: f64, x: f64) -> f64 {
    k.lambda(t, s - x) * survival_from_age(k, t, s, x)
}

fn check_order(t: f64, s: f64) -> Result<()> {
    if t >= s {
        Ok(())
    } else {
        Err(RenewalError::Domain(format!("need t >= s, got t = {t}, s = {s}")))
    }
}

/// `H^ν(t, s)`: probability of no event in `(s, t]`.
pub fn mixed_survival(k: &KernelHandle, nu: &InitialLaw, t: f64, s: f64) -> Result<f64> {
    check_order(t, s)?;
    Ok(nu.0.integrate(|x| survival_from_age(k, t, s, x)))
}

/// `K^ν(t, s) = −∂_t H^ν(t, s)`: density of the first arrival.
pub fn mixed_density(k: &KernelHandle, nu: &InitialLaw, t: f64, s: f64) -> Result<f64> {
    check_order(t, s)?;
    Ok(mixed_density_unchecked(k, nu, t, s))
}

fn mixed_density_unchecked(k: &KernelHandle, nu: &InitialLaw, t: f64, s: f64) -> f64 {
    if nu.is_delta0() {
        k.dens(t, s)
    } else {
        nu.0.integrate(|x| density_from_age(k, t, s, x))
    }
}

/// `r^ν(s + jh, s)` for `j = 0..=J`.
#[derive(Debug, Clone)]
pub struct RenewalSolution {
    pub kernel: KernelHandle,
    pub initial: InitialLaw,
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

/// Solves the renewal equation on `[s, t_end]` with step at most `h`.
///
/// The grid step is `(t_end − s)/J` with `J = ⌈(t_end − s)/h⌉`, so `t_end` is
/// a node. Fails if `h > T/50` or if the solution leaves `(0, λ_max]`.
pub fn solve_renewal(
    k: &KernelHandle,
    nu: &InitialLaw,
    s: f64,
    t_end: f64,
    h: f64,
) -> Result<RenewalSolution> {
    if !(h > 0.0 && h <= k.period() / 50.0 * (1.0 + 1e-12)) {
        return Err(RenewalError::Configuration(format!(
            "renewal step {h} must lie in (0, T/50 = {}]",
            k.period() / 50.0
        )));
    }
    if !(t_end > s) {
        return Err(RenewalError::Domain(format!("t_end {t_end} must exceed s {s}")));
    }
    let n = ((t_end - s) / h - 1e-9).ceil().max(1.0) as usize;
    let h = (t_end - s) / n as f64;
    let times: Vec<f64> = (0..=n).map(|j| s + j as f64 * h).collect();
    let mut r = vec![0.0; n + 1];
    r[0] = mixed_density_unchecked(k, nu, s, s);
    for j in 1..=n {
        let tj = times[j];
        let mut acc = 0.5 * k.dens(tj, times[0]) * r[0];
        for i in 1..j {
            acc += k.dens(tj, times[i]) * r[i];
        }
        let forcing = mixed_density_unchecked(k, nu, tj, s);
        r[j] = (forcing + h * acc) / (1.0 - 0.5 * h * k.lambda(tj, tj));
    }
    check_range(k, &r, s, h)?;
    Ok(RenewalSolution {
        kernel: k.clone(),
        initial: nu.clone(),
        start: s,
        step: h,
        values: r,
    })
}

/// Richardson extrapolation `(4 r_{h/2} − r_h)/3` of [`solve_renewal`] on the
/// grid of step `h`. The trapezoid error expands in even powers of `h`, so the
/// result is fourth-order accurate for smooth kernels.
pub fn solve_renewal_extrapolated(
    k: &KernelHandle,
    nu: &InitialLaw,
    s: f64,
    t_end: f64,
    h: f64,
) -> Result<RenewalSolution> {
    let coarse = solve_renewal(k, nu, s, t_end, h)?;
    let fine = solve_renewal(k, nu, s, t_end, 0.5 * coarse.step)?;
    let values = coarse
        .values
        .iter()
        .enumerate()
        .map(|(j, r)| (4.0 * fine.values[2 * j] - r) / 3.0)
        .collect();
    Ok(RenewalSolution { values, ..coarse })
}

fn check_range(k: &KernelHandle, r: &[f64], s: f64, h: f64) -> Result<()> {
    // the trapezoid rule may overshoot by O((hλ_max)²)
    let cap = k.lambda_max() * (1.0 + 1e-6 + (h * k.lambda_max()).powi(2));
    if let Some((j, v)) = r.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v <= cap)) {
        return Err(RenewalError::Inconsistency(format!(
            "event rate {v} at t = {} outside (0, λ_max = {}]",
            s + j as f64 * h,
            k.lambda_max()
        )));
    }
    Ok(())
}

/// `u ↦ r(t, u)` on `u_j = s + jh`, `j = 0..=J`, from the adjoint form
/// `r(t, u) = K(t, u) + ∫_u^t r(t, v) K(v, u) dv` (initial law `δ₀`).
pub fn solve_renewal_adjoint(k: &KernelHandle, s: f64, t: f64, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h <= k.period() / 50.0 * (1.0 + 1e-12)) {
        return Err(RenewalError::Configuration(format!(
            "renewal step {h} must lie in (0, T/50 = {}]",
            k.period() / 50.0
        )));
    }
    if !(t > s) {
        return Err(RenewalError::Domain(format!("t {t} must exceed s {s}")));
    }
    let n = ((t - s) / h - 1e-9).ceil().max(1.0) as usize;
    let h = (t - s) / n as f64;
    let u: Vec<f64> = (0..=n).map(|j| s + j as f64 * h).collect();
    let mut g = vec![0.0; n + 1];
    g[n] = k.lambda(t, t);
    for j in (0..n).rev() {
        let uj = u[j];
        let mut acc = 0.5 * g[n] * k.dens(u[n], uj);
        for i in j + 1..n {
            acc += g[i] * k.dens(u[i], uj);
        }
        g[j] = (k.dens(t, uj) + h * acc) / (1.0 - 0.5 * h * k.lambda(uj, uj));
    }
    check_range(k, &g, s, h)?;
    Ok(g)
}

impl RenewalSolution {
    pub fn t_end(&self) -> f64 {
        self.start + self.step * (self.values.len() - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|j| self.start + j as f64 * self.step)
            .collect()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-9 * self.step;
        if t < self.start - slack || t > self.t_end() + slack {
            return Err(RenewalError::Domain(format!(
                "t = {t} outside the solved range [{}, {}]",
                self.start,
                self.t_end()
            )));
        }
        Ok(())
    }

    /// `r^ν(t, s)` by linear interpolation between nodes.
    pub fn rate_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.rate_unchecked(t))
    }

    fn rate_unchecked(&self, t: f64) -> f64 {
        let x = ((t - self.start) / self.step).max(0.0);
        let j = (x.floor() as usize).min(self.values.len() - 2);
        let frac = (x - j as f64).clamp(0.0, 1.0);
        if frac < 1e-9 {
            return self.values[j];
        }
        if frac > 1.0 - 1e-9 {
            return self.values[j + 1];
        }
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }

    /// Uniform sub-grid of `[s, t]` with spacing close to `step × stride`.
    fn grid_to(&self, t: f64, stride: usize) -> (f64, Vec<f64>) {
        let len = t - self.start;
        let n = ((len / (self.step * stride as f64)).round() as usize).max(1);
        let dh = len / n as f64;
        let vals = (0..=n)
            .map(|i| self.rate_unchecked(self.start + i as f64 * dh))
            .collect();
        (dh, vals)
    }

    /// Sup-norm residual of the solution plugged back into the equation,
    /// with the integral evaluated by Simpson on the solution nodes.
    pub fn self_residual(&self) -> f64 {
        let k = &self.kernel;
        let times = self.times();
        let h = self.step;
        (2..times.len())
            .map(|j| {
                let tj = times[j];
                let vals: Vec<f64> = (0..=j).map(|i| self.values[i] * k.dens(tj, times[i])).collect();
                let rhs = mixed_density_unchecked(k, &self.initial, tj, self.start)
                    + quadrature::integrate_uniform(&vals, h);
                (rhs - self.values[j]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Law of the backward recurrence time `Y^{ν,s}_t`.
    ///
    /// On `θ ∈ [0, t − s]` the density is `r(t − θ) H(t, t − θ)`; the initial
    /// law is transported to `θ = x + (t − s)` with weight `H^{δ_x}(t, s)`.
    pub fn law_backward(&self, t: f64) -> Result<HalfLineDistribution> {
        self.check_time(t)?;
        let k = &self.kernel;
        let s = self.start;
        let len = t - s;
        if !(len > 0.0) {
            return Err(RenewalError::Domain(format!("need t > s, got t = {t}, s = {s}")));
        }
        let (dh, r) = self.grid_to(t, 1);
        let n = r.len() - 1;
        let values: Vec<f64> = (0..=n)
            .map(|j| {
                let u = t - j as f64 * dh;
                r[n - j] * k.surv(t, u)
            })
            .collect();
        let mut pieces = vec![DensityPiece::new(0.0, dh, values)?];
        let nu = self.initial.distribution();
        for p in nu.pieces() {
            let vals = (0..p.values.len())
                .map(|i| p.values[i] * survival_from_age(k, t, s, p.node(i)))
                .collect();
            pieces.push(DensityPiece::new(p.start + len, p.step, vals)?);
        }
        let atoms = nu
            .atoms()
            .iter()
            .map(|a| Atom::new(a.location + len, a.mass * survival_from_age(k, t, s, a.location)))
            .collect();
        Ok(HalfLineDistribution::new(pieces, atoms)?.with_tail_bound(nu.tail_bound()))
    }

    /// Law of the forward recurrence time `X^{ν,s}_t` on `[0, u_max]`:
    /// `K^ν(t + x, s) + ∫_s^t r^ν(u, s) K(t + x, u) du`.
    pub fn law_forward(&self, t: f64, u_max: f64, h_u: f64) -> Result<HalfLineDistribution> {
        self.check_time(t)?;
        if !(u_max > 0.0 && h_u > 0.0) {
            return Err(RenewalError::Domain(format!("bad forward grid u_max = {u_max}, h_u = {h_u}")));
        }
        let k = &self.kernel;
        let s = self.start;
        // r is only second-order accurate, so a coarser Simpson grid loses nothing
        let stride = ((k.period() / 200.0) / self.step).floor().max(1.0) as usize;
        let (dh, r) = if t > s { self.grid_to(t, stride) } else { (0.0, vec![self.values[0]]) };
        let w = quadrature::uniform_weights(r.len(), dh);
        let nx = (u_max / h_u).round().max(1.0) as usize;
        let hx = u_max / nx as f64;
        let values: Vec<f64> = (0..=nx)
            .map(|ix| {
                let x = ix as f64 * hx;
                let tx = t + x;
                let mut v = mixed_density_unchecked(k, &self.initial, tx, s);
                if r.len() > 1 {
                    for (i, ri) in r.iter().enumerate() {
                        v += w[i] * ri * k.dens(tx, s + i as f64 * dh);
                    }
                }
                v.max(0.0)
            })
            .collect();
        let tail = (-k.lambda_min() * u_max).exp();
        Ok(HalfLineDistribution::from_grid(hx, values)?.with_tail_bound(tail))
    }

    /// `E[N_{t2} − N_{t1}] = ∫_{t1}^{t2} r^ν(u, s) du` (piecewise-linear `r`).
    pub fn expected_count(&self, t1: f64, t2: f64) -> Result<f64> {
        self.check_time(t1)?;
        self.check_time(t2)?;
        if t2 < t1 {
            return Err(RenewalError::Domain(format!("t2 = {t2} < t1 = {t1}")));
        }
        let mut knots = vec![t1];
        let first = ((t1 - self.start) / self.step).floor() as usize + 1;
        let mut j = first;
        while j < self.values.len() {
            let tj = self.start + j as f64 * self.step;
            if tj >= t2 {
                break;
            }
            if tj > t1 {
                knots.push(tj);
            }
            j += 1;
        }
        knots.push(t2);
        Ok(knots
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.rate_unchecked(w[0]) + self.rate_unchecked(w[1])))
            .sum())
    }
}

pub fn law_backward(sol: &RenewalSolution, t: f64) -> Result<HalfLineDistribution> {
    sol.law_backward(t)
}

pub fn law_forward(sol: &RenewalSolution, t: f64, u_max: f64, h_u: f64) -> Result<HalfLineDistribution> {
    sol.law_forward(t, u_max, h_u)
}

pub fn expected_count(sol: &RenewalSolution, t1: f64, t2: f64) -> Result<f64> {
    sol.expected_count(t1, t2)
}

/// `r(φ + t_i, φ + t_j)` for `0 ≤ t_j ≤ t_i ≤ T` on `t_i = iT/n`.
#[derive(Debug, Clone)]
pub struct ResolventTable {
    pub phase: f64,
    pub n: usize,
    pub step: f64,
    rows: Vec<Vec<f64>>,
}

impl ResolventTable {
    /// One forward solve (initial law `δ₀`) from every start node.
    pub fn build(k: &KernelHandle, phase: f64, n: usize) -> Result<Self> {
        if n < 50 {
            return Err(RenewalError::Configuration(format!(
                "resolvent table needs at least 50 steps per period, got {n}"
            )));
        }
        let step = k.period() / n as f64;
        let times: Vec<f64> = (0..=n).map(|i| phase + i as f64 * step).collect();
        let mut rows: Vec<Vec<f64>> = (0..=n).map(|i| vec![0.0; i + 1]).collect();
        for j in 0..=n {
            // r(t_i, t_j) for i >= j
            let mut col = vec![0.0; n + 1 - j];
            col[0] = k.lambda(times[j], times[j]);
            for a in 1..col.len() {
                let ti = times[j + a];
                let mut acc = 0.5 * k.dens(ti, times[j]) * col[0];
                for b in 1..a {
                    acc += k.dens(ti, times[j + b]) * col[b];
                }
                col[a] = (k.dens(ti, times[j]) + step * acc) / (1.0 - 0.5 * step * k.lambda(ti, ti));
            }
            for (a, v) in col.into_iter().enumerate() {
                rows[j + a][j] = v;
            }
        }
        Ok(Self { phase, n, step, rows })
    }

    /// Richardson combination `(4 r_{h/2} − r_h)/3` of two trapezoid tables,
    /// fourth order in `h = T/n`.
    pub fn build_extrapolated(k: &KernelHandle, phase: f64, n: usize) -> Result<Self> {
        let fine = Self::build(k, phase, 2 * n)?;
        let mut out = Self::build(k, phase, n)?;
        for (i, row) in out.rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (4.0 * fine.get(2 * i, 2 * j) - *v) / 3.0;
            }
        }
        Ok(out)
    }

    /// `r(φ + t_i, φ + t_j)`, `j ≤ i`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.step
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{make_age_time, make_constant, make_time_modulated};
    use std::f64::consts::PI;

    fn tm(t: f64) -> f64 {
        1.0 + 0.5 * (2.0 * PI * t).sin()
    }

    #[test]
    fn extrapolated_solution_is_fourth_order() {
        let k = make_constant(1.0, 1.0).unwrap();
        let sol = solve_renewal_extrapolated(&k, &InitialLaw::delta0(), 0.0, 10.0, 0.01).unwrap();
        assert!(sol.values.iter().all(|v| (v - 1.0).abs() < 2e-9));
        // inhomogeneous Poisson: r = λ
        let k = make_time_modulated(1.0, 0.5, 1.0).unwrap();
        let err = |h: f64| {
            let sol = solve_renewal_extrapolated(&k, &InitialLaw::delta0(), 0.0, 3.0, h).unwrap();
            sol.times()
                .iter()
                .zip(&sol.values)
                .map(|(t, v)| (v - tm(*t)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!(e2 < 1e-7 && e1 / e2 > 12.0, "{e1:e} {e2:e}");
    }

    #[test]
    fn delta0_reduces_to_kernel() {
        let k = make_age_time(0.5, 1.0, 1.0, 1.0).unwrap();
        let nu = InitialLaw::delta0();
        for &(t, s) in &[(0.3, 0.0), (2.7, 1.1), (5.0, 5.0)] {
            assert_eq!(mixed_survival(&k, &nu, t, s).unwrap(), k.survival(t, s).unwrap());
            assert_eq!(mixed_density(&k, &nu, t, s).unwrap(), k.density(t, s).unwrap());
        }
        assert!(mixed_survival(&k, &nu, 0.0, 1.0).is_err());
    }

    #[test]
    fn constant_kernel_ignores_age() {
        let k = make_constant(1.0, 1.0).unwrap();
        let nu = InitialLaw::from_distribution(
            HalfLineDistribution::exponential(2.0, 1e-3, 20.0).unwrap(),
        )
        .unwrap();
        let v = mixed_survival(&k, &nu, 2.5, 0.5).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-9, "{v}");
    }

    #[test]
    fn single_atom_matches_quadrature() {
        let k = make_time_modulated(1.0, 0.5, 1.0).unwrap();
        let nu = InitialLaw::dirac(0.7).unwrap();
        let (t, s) = (2.3, 0.4);
        let u = s - 0.7;
        let cum = quadrature::simpson(|th| k.hazard(th, u).unwrap(), s, t, 1e-4);
        assert!((mixed_survival(&k, &nu, t, s).unwrap() - (-cum).exp()).abs() < 1e-10);
        let dens = k.hazard(t, u).unwrap() * (-cum).exp();
        assert!((mixed_density(&k, &nu, t, s).unwrap() - dens).abs() < 1e-10);
    }

    #[test]
    fn constant_kernel_rate_is_one() {
        let k = make_constant(1.0, 1.0).unwrap();
        let sol = solve_renewal(&k, &InitialLaw::delta0(), 0.0, 10.0, 1e-3).unwrap();
        let err = sol.values.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        assert!((sol.expected_count(0.0, 10.0).unwrap() - 10.0).abs() < 1e-5);
    }

    #[test]
    fn time_modulated_rate_is_the_hazard() {
        let k = make_time_modulated(1.0, 0.5, 1.0).unwrap();
        let sol = solve_renewal(&k, &InitialLaw::delta0(), 0.0, 5.0, 1e-3).unwrap();
        let err = sol
            .times()
            .iter()
            .zip(&sol.values)
            .map(|(t, r)| (r - tm(*t)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn step_limit_is_enforced() {
        let k = make_constant(1.0, 1.0).unwrap();
        assert!(matches!(
            solve_renewal(&k, &InitialLaw::delta0(), 0.0, 1.0, 0.05),
            Err(RenewalError::Configuration(_))
        ));
    }

    #[test]
    fn constant_backward_law() {
        let k = make_constant(1.0, 1.0).unwrap();
        // the scheme is second order: h = 1e-3 leaves a mass error near 2e-7
        let sol = solve_renewal(&k, &InitialLaw::delta0(), 0.0, 3.0, 2e-4).unwrap();
        let law = sol.law_backward(3.0).unwrap();
        let atom = law.atoms()[0];
        assert!((atom.location - 3.0).abs() < 1e-12);
        assert!((atom.mass - (-3.0f64).exp()).abs() < 1e-15);
        for &th in &[0.0, 0.5, 1.7, 2.999] {
            assert!((law.density_at(th) - (-th).exp()).abs() < 1e-6);
        }
        assert!((law.mass() - 1.0).abs() < 1e-8, "{}", law.mass() - 1.0);
    }

    #[test]
    fn backward_and_forward_laws_have_unit_mass() {
        for k in [
            make_time_modulated(1.0, 0.5, 1.0).unwrap(),
            make_age_time(0.5, 1.0, 1.0, 1.0).unwrap(),
        ] {
            let sol = solve_renewal(&k, &InitialLaw::delta0(), 0.2, 3.2, 1e-3).unwrap();
            let b = sol.law_backward(3.2).unwrap();
            assert!((b.mass() - 1.0).abs() < 1e-6, "{}: {}", k.name(), b.mass());
            let f = sol.law_forward(3.2, 40.0, 0.01).unwrap();
            assert!((f.mass() - 1.0).abs() < f.tail_bound() + 1e-6, "{}", f.mass());
        }
    }

    #[test]
    fn constant_forward_law_is_exponential() {
        let k = make_constant(1.0, 1.0).unwrap();
        let sol = solve_renewal(&k, &InitialLaw::delta0(), 0.0, 2.0, 1e-3).unwrap();
        let f = sol.law_forward(2.0, 10.0, 0.01).unwrap();
        for &x in &[0.0, 0.3, 4.0, 9.99] {
            assert!((f.density_at(x) - (-x).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn adjoint_form_agrees() {
        let k = make_age_time(0.5, 1.0, 1.0, 1.0).unwrap();
        let h = 2e-3;
        let sol = solve_renewal(&k, &InitialLaw::delta0(), 0.0, 2.0, h).unwrap();
        for &t in &[0.5, 1.0, 2.0] {
            let g = solve_renewal_adjoint(&k, 0.0, t, h).unwrap();
            let fwd = sol.rate_at(t).unwrap();
            assert!((g[0] - fwd).abs() <= 5.0 * h * h, "t={t}: {} vs {fwd}", g[0]);
        }
    }

    #[test]
    fn self_residual_is_second_order() {
        let k = make_age_time(0.5, 1.0, 1.0, 1.0).unwrap();
        let h = 2e-3;
        let sol = solve_renewal(&k, &InitialLaw::delta0(), 0.0, 2.0, h).unwrap();
        assert!(sol.self_residual() <= 5.0 * h * h, "{}", sol.self_residual());
    }

    #[test]
    fn rate_lower_bound_in_first_period() {
        let k = make_age_time(0.5, 1.0, 1.0, 1.0).unwrap();
        let sol = solve_renewal(&k, &InitialLaw::delta0(), 0.0, 1.0, 1e-3).unwrap();
        let floor = 0.5 * (-1.5f64).exp();
        assert!(sol.values.iter().all(|&r| r >= floor && r <= 1.5));
    }

    #[test]
    fn resolvent_table_matches_direct_solves() {
        let k = make_age_time(0.5, 1.0, 1.0, 1.0).unwrap();
        let tab = ResolventTable::build(&k, 0.3, 100).unwrap();
        let sol = solve_renewal(&k, &InitialLaw::delta0(), 0.3 + 0.2, 1.3, 0.01).unwrap();
        for i in 20..=100 {
            let direct = sol.values[i - 20];
            assert!((tab.get(i, 20) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn extrapolated_table_is_fourth_order() {
        // constant kernel: r ≡ λ₀ exactly
        let k = make_constant(1.0, 1.0).unwrap();
        let plain = ResolventTable::build(&k, 0.0, 100).unwrap();
        let rich = ResolventTable::build_extrapolated(&k, 0.0, 100).unwrap();
        let err = |t: &ResolventTable| {
            (0..=100)
                .flat_map(|i| (0..=i).map(move |j| (i, j)))
                .map(|(i, j)| (t.get(i, j) - 1.0).abs())
                .fold(0.0, f64::max)
        };
        assert!(err(&rich) < 1e-9, "{}", err(&rich));
        assert!(err(&rich) < 1e-2 * err(&plain));
    }
}
