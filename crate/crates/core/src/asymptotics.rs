//! Periodic limit laws of the recurrence times, the one-period transition
//! operator of the forward recurrence time, and the ergodicity constants.
//!
//! For a phase `φ`, the backward recurrence time at times `φ + nT` converges
//! to `ν^φ_∞(u) = ρ(φ − u) H(φ, φ − u)` and the forward one to
//! `μ^φ_∞(u) = ∫_{−∞}^φ K(φ + u, v) ρ(v) dv`. The joint laws on `ℝ₊ × 𝕋` are
//! `ν̃_∞(u, φ) = ρ(φ) H(u + φ, φ)/T` and
//! `μ̃_∞(u, φ) = (1/T) ∫_{−∞}^{φ−u} K(φ, v) ρ(v) dv`.

use crate::distribution::HalfLineDistribution;
use crate::error::{RenewalError, Result};
use crate::kernel::KernelHandle;
use crate::phasechain::PhaseField;
use crate::quadrature;
use crate::volterra::ResolventTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    Backward,
    Forward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitLaw {
    pub kind: LawKind,
    pub phase: f64,
    pub law: HalfLineDistribution,
}

impl LimitLaw {
    pub fn mass(&self) -> f64 {
        self.law.mass()
    }

    pub fn density_at(&self, u: f64) -> f64 {
        self.law.density_at(u)
    }

    /// Density values on the grid nodes.
    pub fn values(&self) -> &[f64] {
        &self.law.pieces()[0].values
    }

    pub fn step(&self) -> f64 {
        self.law.pieces()[0].step
    }
}

/// `max(10/λ_min, 5T)`.
pub fn default_u_max(k: &KernelHandle) -> f64 {
    (10.0 / k.lambda_min()).max(5.0 * k.period())
}

fn grid_count(u_max: f64, h_u: f64) -> Result<usize> {
    if !(u_max > 0.0 && h_u > 0.0 && h_u <= u_max) {
        return Err(RenewalError::Domain(format!("bad grid u_max = {u_max}, h_u = {h_u}")));
    }
    Ok((u_max / h_u).round() as usize)
}

/// `ν^φ_∞(u) = ρ(φ − u) H(φ, φ − u)` on `u = i h_u ∈ [0, u_max]`.
pub fn nu_infty(rho: &PhaseField, k: &KernelHandle, phi: f64, u_max: f64, h_u: f64) -> Result<LimitLaw> {
    let n = grid_count(u_max, h_u)?;
    let values: Vec<f64> = (0..=n)
        .map(|i| {
            let u = i as f64 * h_u;
            rho.eval(phi - u) * k.surv(phi, phi - u)
        })
        .collect();
    let tail = k.lambda_max() * (-k.lambda_min() * n as f64 * h_u).exp() / k.lambda_min();
    Ok(LimitLaw {
        kind: LawKind::Backward,
        phase: phi,
        law: HalfLineDistribution::from_grid(h_u, values)?.with_tail_bound(tail),
    })
}

/// `μ^φ_∞(u) = ∫_{−∞}^φ K(φ + u, v) ρ(v) dv` on `u = i h_u ∈ [0, u_max]`.
///
/// `T/h_u` must be an integer. With `u = r h_u + nT` and period blocks
/// `B_p(r) = ∫_{φ−(p+1)T}^{φ−pT} K(φ + r h_u, v) ρ(v) dv`, periodicity gives
/// `μ^φ_∞(u) = Σ_{p≥n} B_p(r)`, so only one period of `u` needs quadrature.
pub fn mu_infty(
    rho: &PhaseField,
    k: &KernelHandle,
    phi: f64,
    u_max: f64,
    h_u: f64,
    tail_tol: f64,
) -> Result<LimitLaw> {
    let n_u = grid_count(u_max, h_u)?;
    let period = k.period();
    let per = (period / h_u).round() as usize;
    if per < 2 || ((per as f64) * h_u - period).abs() > 1e-9 * period {
        return Err(RenewalError::Configuration(format!(
            "forward limit grid needs T/h_u to be an integer, got T = {period}, h_u = {h_u}"
        )));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(RenewalError::Configuration(format!("tail_tol {tail_tol} not in (0, 1)")));
    }
    let n_periods_u = n_u / per + 1;
    let p_tail = (-tail_tol.ln() / (k.lambda_min() * period)).ceil() as usize + 1;
    let p_total = p_tail + n_periods_u;
    // ρ(φ − l h_u) for l = 0..=per (one period back)
    let rho_back: Vec<f64> = (0..=per).map(|l| rho.eval(phi - l as f64 * h_u)).collect();
    let w = quadrature::uniform_weights(per + 1, h_u);
    // blocks[r][p]
    let blocks: Vec<Vec<f64>> = (0..per)
        .map(|r| {
            let t = phi + r as f64 * h_u;
            (0..p_total)
                .map(|p| {
                    let top = phi - p as f64 * period;
                    (0..=per)
                        .map(|l| w[l] * k.dens(t, top - l as f64 * h_u) * rho_back[l])
                        .sum()
                })
                .collect()
        })
        .collect();
    // suffix sums over p
    let suffix: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| {
            let mut s = vec![0.0; b.len() + 1];
            for p in (0..b.len()).rev() {
                s[p] = s[p + 1] + b[p];
            }
            s
        })
        .collect();
    let values: Vec<f64> = (0..=n_u)
        .map(|i| {
            let (n, r) = (i / per, i % per);
            suffix[r][n.min(p_total)]
        })
        .collect();
    let tail = k.lambda_max() * (-k.lambda_min() * n_u as f64 * h_u).exp() / k.lambda_min();
    Ok(LimitLaw {
        kind: LawKind::Forward,
        phase: phi,
        law: HalfLineDistribution::from_grid(h_u, values)?.with_tail_bound(tail),
    })
}

/// A joint law on `[0, u_max] × 𝕋` tabulated with equal steps `T/m` in both
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLimitLaw {
    pub kind: LawKind,
    pub period: f64,
    pub m: usize,
    pub n_u: usize,
    values: Vec<f64>,
}

impl JointLimitLaw {
    pub fn step(&self) -> f64 {
        self.period / self.m as f64
    }

    pub fn u_max(&self) -> f64 {
        self.n_u as f64 * self.step()
    }

    /// Density at `(u_i, φ_j)` (phase index wraps).
    pub fn value(&self, i: usize, j: isize) -> f64 {
        self.values[i * self.m + j.rem_euclid(self.m as isize) as usize]
    }

    /// Simpson in `u`, rectangle rule in `φ`.
    pub fn mass(&self) -> f64 {
        let w = quadrature::uniform_weights(self.n_u + 1, self.step());
        let h = self.step();
        (0..=self.n_u)
            .map(|i| w[i] * h * (0..self.m).map(|j| self.value(i, j as isize)).sum::<f64>())
            .sum()
    }

    /// `T ν̃(u_i, φ_j − u_i)` for the backward law, `T μ̃(u_i, φ_j + u_i)` for
    /// the forward law: the one-phase limit law at `φ_j`.
    pub fn slice(&self, j: usize) -> Vec<f64> {
        (0..=self.n_u)
            .map(|i| {
                let jj = match self.kind {
                    LawKind::Backward => j as isize - i as isize,
                    LawKind::Forward => j as isize + i as isize,
                };
                self.period * self.value(i, jj)
            })
            .collect()
    }

    /// Masses of the cells `[a du, (a+1) du) × [b T/n_phi, (b+1) T/n_phi)`,
    /// row-major in `a`, plus the mass not covered (beyond `n_bins · du`).
    /// Bin edges must fall on grid nodes.
    pub fn cell_masses(&self, du: f64, n_bins: usize, n_phi: usize) -> Result<(Vec<f64>, f64)> {
        let h = self.step();
        let su = (du / h).round() as usize;
        let sp = self.m / n_phi.max(1);
        if su == 0
            || ((su as f64) * h - du).abs() > 1e-9 * du
            || sp * n_phi != self.m
            || su * n_bins > self.n_u
        {
            return Err(RenewalError::Configuration(format!(
                "cells ({du} × T/{n_phi}) do not align with the joint grid (step {h}, m {})",
                self.m
            )));
        }
        let wu = quadrature::uniform_weights(su + 1, h);
        let mut cells = vec![0.0; n_bins * n_phi];
        for a in 0..n_bins {
            for b in 0..n_phi {
                let mut acc = 0.0;
                for (l, wl) in wu.iter().enumerate() {
                    let i = a * su + l;
                    // trapezoid in φ over the bin
                    let mut row = 0.0;
                    for q in 0..=sp {
                        let wq = if q == 0 || q == sp { 0.5 } else { 1.0 };
                        row += wq * self.value(i, (b * sp + q) as isize);
                    }
                    acc += wl * h * row;
                }
                cells[a * n_phi + b] = acc;
            }
        }
        let covered: f64 = cells.iter().sum();
        Ok((cells, (1.0 - covered).max(0.0)))
    }
}

/// `(ν̃_∞, μ̃_∞)` on the grid of `ρ` (`u` and `φ` steps both `T/m`).
pub fn joint_limits(
    rho: &PhaseField,
    k: &KernelHandle,
    u_max: f64,
    tail_tol: f64,
) -> Result<(JointLimitLaw, JointLimitLaw)> {
    let grid = rho.grid();
    let m = grid.m;
    let h = grid.step();
    let period = grid.period;
    let n_u = grid_count(u_max, h)?;
    let extra = (-tail_tol.ln() / (k.lambda_min() * h)).ceil() as usize;
    let n_w = n_u + extra;
    let mut nu = vec![0.0; (n_u + 1) * m];
    let mut mu = vec![0.0; (n_u + 1) * m];
    for j in 0..m {
        let phi = grid.node(j);
        let rj = rho.at(j as isize);
        for i in 0..=n_u {
            nu[i * m + j] = rj * k.surv(i as f64 * h + phi, phi) / period;
        }
        let f: Vec<f64> = (0..=n_w)
            .map(|l| k.dens(phi, phi - l as f64 * h) * rho.at(j as isize - l as isize))
            .collect();
        let tails = quadrature::reverse_cumulative(&f, h);
        for i in 0..=n_u {
            mu[i * m + j] = tails[i] / period;
        }
    }
    Ok((
        JointLimitLaw {
            kind: LawKind::Backward,
            period,
            m,
            n_u,
            values: nu,
        },
        JointLimitLaw {
            kind: LawKind::Forward,
            period,
            m,
            n_u,
            values: mu,
        },
    ))
}

/// The transition operator `𝒫` of the chain `X^φ_n` (forward recurrence time
/// at the times `φ + nT`), built on a resolvent table with step `T/n`.
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    kernel: KernelHandle,
    phase: f64,
    table: ResolventTable,
    /// Step of the quadrature in the jump variable.
    jump_step: f64,
}

/// Values of `𝒫g` on `t_i = iT/n`, `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionImage {
    pub step: f64,
    pub values: Vec<f64>,
    /// `g^K(t_i) = ∫_0^U g(u) K(u + T + φ, φ + t_i) du`.
    pub g_k: Vec<f64>,
}

impl ForwardOperator {
    pub fn new(k: &KernelHandle, phase: f64, n: usize) -> Result<Self> {
        Ok(Self {
            kernel: k.clone(),
            phase,
            table: ResolventTable::build_extrapolated(k, phase, n)?,
            jump_step: k.period() / 200.0,
        })
    }

    pub fn n(&self) -> usize {
        self.table.n
    }

    pub fn step(&self) -> f64 {
        self.table.step
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn table(&self) -> &ResolventTable {
        &self.table
    }

    fn g_k<G: Fn(f64) -> f64>(&self, g: &G, cutoff: f64, t: f64) -> f64 {
        let k = &self.kernel;
        let period = k.period();
        let n = (cutoff / self.jump_step).ceil().max(2.0) as usize;
        let hu = cutoff / n as f64;
        let w = quadrature::uniform_weights(n + 1, hu);
        let src = self.phase + t;
        (0..=n)
            .map(|i| {
                let u = i as f64 * hu;
                w[i] * g(u) * k.dens(u + period + self.phase, src)
            })
            .sum()
    }

    /// `𝒫g(t_i) = g^K(t_i) + ∫_{t_i}^T r(φ + u, φ + t_i) g^K(u) du` with the
    /// jump integrals cut at `cutoff`.
    pub fn apply<G: Fn(f64) -> f64>(&self, g: G, cutoff: f64) -> TransitionImage {
        let n = self.n();
        let h = self.step();
        let g_k: Vec<f64> = (0..=n).map(|i| self.g_k(&g, cutoff, i as f64 * h)).collect();
        let values = (0..=n)
            .map(|i| {
                if i == n {
                    return g_k[n];
                }
                let vals: Vec<f64> = (i..=n).map(|l| self.table.get(l, i) * g_k[l]).collect();
                g_k[i] + quadrature::integrate_uniform(&vals, h)
            })
            .collect();
        TransitionImage { step: h, values, g_k }
    }

    /// Sup-norm residual of `𝒫g(t) = g^K(t) + ∫_t^T K(φ + u, φ + t) 𝒫g(u) du`.
    pub fn integral_equation_residual(&self, image: &TransitionImage) -> f64 {
        let n = self.n();
        let h = self.step();
        let k = &self.kernel;
        (0..n)
            .map(|i| {
                let src = self.phase + i as f64 * h;
                let vals: Vec<f64> = (i..=n)
                    .map(|l| k.dens(self.phase + l as f64 * h, src) * image.values[l])
                    .collect();
                let rhs = image.g_k[i] + quadrature::integrate_uniform(&vals, h);
                (rhs - image.values[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Density of `X^φ_{n+1}` at `u` when `X^φ_n` has density `nu`:
    /// `ν(u + T) + ∫_0^T K(u + φ + T, φ + s) (ν + r^φ * ν)(s) ds`.
    pub fn adjoint_density(&self, nu: &HalfLineDistribution, us: &[f64]) -> Vec<f64> {
        let n = self.n();
        let h = self.step();
        let k = &self.kernel;
        let period = k.period();
        let nu_s: Vec<f64> = (0..=n).map(|j| nu.density_at(j as f64 * h)).collect();
        // (r^φ * ν)(θ_i) = ∫_0^{θ_i} r(φ + θ_i, φ + s) ν(s) ds
        let conv: Vec<f64> = (0..=n)
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                let vals: Vec<f64> = (0..=i).map(|j| self.table.get(i, j) * nu_s[j]).collect();
                quadrature::integrate_uniform(&vals, h)
            })
            .collect();
        let w = quadrature::uniform_weights(n + 1, h);
        us.iter()
            .map(|&u| {
                let target = u + self.phase + period;
                let jump: f64 = (0..=n)
                    .map(|j| w[j] * k.dens(target, self.phase + j as f64 * h) * (nu_s[j] + conv[j]))
                    .sum();
                nu.density_at(u + period) + jump
            })
            .collect()
    }
}

/// `𝒫g` at arbitrary `t ≥ 0`: `g(t − T)` beyond one period, linear
/// interpolation of the node values inside it.
pub fn forward_transition<G: Fn(f64) -> f64>(op: &ForwardOperator, g: G, cutoff: f64, ts: &[f64]) -> Vec<f64> {
    let period = op.kernel.period();
    let image = op.apply(&g, cutoff);
    ts.iter()
        .map(|&t| {
            if t > period {
                g(t - period)
            } else {
                let x = (t / image.step).max(0.0);
                let i = (x.floor() as usize).min(image.values.len() - 2);
                let f = x - i as f64;
                image.values[i] * (1.0 - f) + image.values[i + 1] * f
            }
        })
        .collect()
}

/// Sup over the density nodes `u ≤ u_max(ν) − T` of `|𝒫_*ν(u) − ν(u)|`.
pub fn invariance_residual_forward(nu: &HalfLineDistribution, op: &ForwardOperator) -> Result<f64> {
    let period = op.kernel.period();
    let us: Vec<f64> = nu
        .breakpoints()
        .into_iter()
        .filter(|&u| u <= nu.u_max() - period + 1e-12)
        .collect();
    if us.is_empty() {
        return Err(RenewalError::Domain(format!(
            "law support {} shorter than one period",
            nu.u_max()
        )));
    }
    let image = op.adjoint_density(nu, &us);
    Ok(us
        .iter()
        .zip(&image)
        .map(|(u, v)| (v - nu.density_at(*u)).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    /// `μ(u + T) = μ(u) − ∫_0^T K(u + φ + T, φ + s) ρ^φ(s) ds`
    pub shift: f64,
    /// `μ(u) = ρ^φ(u) − ∫_0^u K(φ + u, φ + s) ρ^φ(s) ds`
    pub renewal: f64,
    /// `∫_0^t K(φ + t, φ + s) ρ^φ(s) ds = ∫_0^t r(φ + t, φ + s) μ(s) ds`
    pub resolvent: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.shift.max(self.renewal).max(self.resolvent)
    }
}

/// The three identities tying `μ^φ_∞`, `ρ^φ = ρ(φ + ·)` and `r^φ` together,
/// with `μ^φ_∞` computed from `rho` on the step of `op`.
pub fn identity_checks(
    rho: &PhaseField,
    k: &KernelHandle,
    op: &ForwardOperator,
    u_max: f64,
    tail_tol: f64,
) -> Result<IdentityResiduals> {
    let phi = op.phase();
    let n = op.n();
    let h = op.step();
    let period = k.period();
    let mu = mu_infty(rho, k, phi, u_max, h, tail_tol)?;
    let mu_v = mu.values();
    let n_u = mu_v.len() - 1;
    let rho_fwd: Vec<f64> = (0..=n_u).map(|i| rho.eval(phi + i as f64 * h)).collect();

    // item 1, u = i h with u + T within the grid
    let w_per = quadrature::uniform_weights(n + 1, h);
    let shift = (0..=n_u.saturating_sub(n))
        .map(|i| {
            let target = i as f64 * h + phi + period;
            let jump: f64 = (0..=n)
                .map(|j| w_per[j] * k.dens(target, phi + j as f64 * h) * rho_fwd[j])
                .sum();
            (mu_v[i + n] - (mu_v[i] - jump)).abs()
        })
        .fold(0.0, f64::max);

    // item 2
    let renewal = (0..=n_u)
        .map(|i| {
            let conv = if i == 0 {
                0.0
            } else {
                let vals: Vec<f64> = (0..=i)
                    .map(|j| k.dens(phi + i as f64 * h, phi + j as f64 * h) * rho_fwd[j])
                    .collect();
                quadrature::integrate_uniform(&vals, h)
            };
            (mu_v[i] - (rho_fwd[i] - conv)).abs()
        })
        .fold(0.0, f64::max);

    // item 3, t in one period
    let resolvent = (1..=n)
        .map(|i| {
            let t = phi + i as f64 * h;
            let lhs_vals: Vec<f64> = (0..=i)
                .map(|j| k.dens(t, phi + j as f64 * h) * rho_fwd[j])
                .collect();
            let rhs_vals: Vec<f64> = (0..=i).map(|j| op.table().get(i, j) * mu_v[j]).collect();
            (quadrature::integrate_uniform(&lhs_vals, h) - quadrature::integrate_uniform(&rhs_vals, h))
                .abs()
        })
        .fold(0.0, f64::max);

    Ok(IdentityResiduals {
        shift,
        renewal,
        resolvent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarrisConstants {
    /// `T λ_min e^{−T λ_max}`
    pub beta: f64,
    /// `−ln(β)/T`
    pub c: f64,
    /// `2 e^{cT} = 2/β`
    pub big_c: f64,
    /// `e^{−λ_min T/2}`
    pub gamma: f64,
    /// `2(λ_max/λ_min + (λ_max/λ_min)²)`
    pub kappa: f64,
    /// `(λ_min/λ_max) e^{−λ_max T}`
    pub alpha: f64,
    /// Minorization constant of the embedded chain, `T λ_min e^{−λ_max T}`.
    pub doeblin_beta: f64,
    /// `γ ≤ ½` and `T > 2 ln(8κ)/λ_min`.
    pub period_conditions_hold: bool,
    /// Smallest `p ≥ 1` for which the period `pT` satisfies both conditions.
    pub min_period_multiple: usize,
}

impl HarrisConstants {
    /// `C e^{−c·elapsed}`.
    pub fn bound(&self, elapsed: f64) -> f64 {
        self.big_c * (-self.c * elapsed).exp()
    }
}

pub fn harris_constants(lambda_min: f64, lambda_max: f64, period: f64) -> Result<HarrisConstants> {
    if !(lambda_min > 0.0 && lambda_max >= lambda_min && period > 0.0)
        || !lambda_max.is_finite()
        || !period.is_finite()
    {
        return Err(RenewalError::Domain(format!(
            "need 0 < λ_min ≤ λ_max and T > 0, got {lambda_min}, {lambda_max}, {period}"
        )));
    }
    let beta = period * lambda_min * (-period * lambda_max).exp();
    let c = -beta.ln() / period;
    let ratio = lambda_max / lambda_min;
    let kappa = 2.0 * (ratio + ratio * ratio);
    let holds = |tp: f64| (-lambda_min * tp / 2.0).exp() <= 0.5 && tp > 2.0 * (8.0 * kappa).ln() / lambda_min;
    let mut p = 1usize;
    while !holds(p as f64 * period) {
        p += 1;
    }
    Ok(HarrisConstants {
        beta,
        c,
        big_c: 2.0 / beta,
        gamma: (-lambda_min * period / 2.0).exp(),
        kappa,
        alpha: (lambda_min / lambda_max) * (-lambda_max * period).exp(),
        doeblin_beta: beta,
        period_conditions_hold: p == 1,
        min_period_multiple: p,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    /// `max_t (𝒫f(t) − γ f(t) − κ)` over the checked nodes.
    pub max_excess: f64,
    pub holds: bool,
}

/// Checks `𝒫f ≤ γ f + κ` for `f(u) = e^{λ_min u/2}` at the operator nodes in
/// `[0, T]` and on a grid of `t ∈ (T, t_max]`.
pub fn lyapunov_check(op: &ForwardOperator, constants: &HarrisConstants, t_max: f64) -> LyapunovReport {
    let lmin = op.kernel.lambda_min();
    let period = op.kernel.period();
    let f = move |u: f64| (0.5 * lmin * u).exp();
    let cutoff = 80.0 / lmin;
    let image = op.apply(f, cutoff);
    let mut excess = image
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v - constants.gamma * f(i as f64 * image.step) - constants.kappa)
        .fold(f64::NEG_INFINITY, f64::max);
    let n_beyond = ((t_max - period) / image.step).ceil().max(0.0) as usize;
    for i in 1..=n_beyond {
        let t = period + i as f64 * image.step;
        excess = excess.max(f(t - period) - constants.gamma * f(t) - constants.kappa);
    }
    LyapunovReport {
        max_excess: excess,
        holds: excess <= 0.0,
    }
}

/// `∫ ψ dν^φ_∞` with `ψ(y) = λ(φ, φ − y)`; equals `ρ(φ)`.
pub fn hazard_pairing(nu: &LimitLaw, k: &KernelHandle) -> f64 {
    let phi = nu.phase;
    nu.law.integrate(|y| k.lambda(phi, phi - y))
}
