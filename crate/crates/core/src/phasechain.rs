//! The Markov chain of arrival phases `Φ_k = T_k mod T`.
//!
//! Its transition density is the folded kernel `K^T(t, s) = Σ_{i≥0} K(t + iT, s)`
//! on the circle `𝕋 = ℝ/Tℤ`. The stationary density `π` of the chain, scaled by
//! `1/β` with `β` the mean number of periods between arrivals, is the periodic
//! rate `ρ` solving `ρ(t) = ∫_{−∞}^t K(t, u) ρ(u) du` with
//! `∫_{−∞}^t H(t, u) ρ(u) du = 1`.
//!
//! Integrals over the circle are written in lag form: for a node `t` and lag
//! `d ∈ [0, T]`, `G_t(d) = Σ_p K(t + pT, t − d)` is smooth in `d` even though
//! `K^T(t, ·)` jumps at `s = t`, so composite Simpson in `d` is fourth order.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{RenewalError, Result};
use crate::kernel::KernelHandle;
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleGrid {
    pub period: f64,
    pub m: usize,
}

impl CircleGrid {
    pub fn new(period: f64, m: usize) -> Result<Self> {
        if m < 4 || !(period > 0.0) {
            return Err(RenewalError::Construction(format!(
                "circle grid needs m >= 4 and a positive period, got m = {m}, T = {period}"
            )));
        }
        Ok(Self { period, m })
    }

    pub fn step(&self) -> f64 {
        self.period / self.m as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        (i % self.m) as f64 * self.step()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.node(i)).collect()
    }

    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.m as isize) as usize
    }
}

/// A periodic function sampled on a [`CircleGrid`], evaluated between nodes
/// by trigonometric interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    grid: CircleGrid,
    values: Vec<f64>,
    cos_coef: Vec<f64>,
    sin_coef: Vec<f64>,
}

impl PhaseField {
    pub fn new(grid: CircleGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.m {
            return Err(RenewalError::Construction(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.m
            )));
        }
        let m = grid.m;
        let kmax = m / 2;
        let mut cos_coef = vec![0.0; kmax + 1];
        let mut sin_coef = vec![0.0; kmax + 1];
        for k in 0..=kmax {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, y) in values.iter().enumerate() {
                let th = 2.0 * PI * ((k * j) % m) as f64 / m as f64;
                a += y * th.cos();
                b += y * th.sin();
            }
            cos_coef[k] = 2.0 * a / m as f64;
            sin_coef[k] = 2.0 * b / m as f64;
        }
        Ok(Self {
            grid,
            values,
            cos_coef,
            sin_coef,
        })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: CircleGrid, f: F) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> CircleGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at node `i` (indices wrap).
    pub fn at(&self, i: isize) -> f64 {
        self.values[self.grid.wrap(i)]
    }

    /// Trigonometric interpolant at any real `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let m = self.grid.m;
        let theta = 2.0 * PI * (t / self.grid.period).rem_euclid(1.0);
        let (s1, c1) = theta.sin_cos();
        let kmax = m / 2;
        let mut out = 0.5 * self.cos_coef[0];
        let (mut ck, mut sk) = (1.0, 0.0);
        for k in 1..=kmax {
            (ck, sk) = (ck * c1 - sk * s1, sk * c1 + ck * s1);
            if k % 64 == 0 {
                // keep the rotation on the unit circle
                (sk, ck) = (k as f64 * theta).sin_cos();
            }
            if m.is_multiple_of(2) && k == kmax {
                out += 0.5 * self.cos_coef[k] * ck;
            } else {
                out += self.cos_coef[k] * ck + self.sin_coef[k] * sk;
            }
        }
        out
    }

    /// `∫_𝕋` by the rectangle rule (exact for the interpolant).
    pub fn integral(&self) -> f64 {
        self.grid.step() * self.values.iter().sum::<f64>()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.cos_coef.iter_mut().for_each(|v| *v *= c);
        out.sin_coef.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_distance<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(t, v)| (v - f(*t)).abs())
            .fold(0.0, f64::max)
    }
}

/// The folded kernel (and the folded survival kernel) tabulated in lag form.
#[derive(Debug, Clone)]
pub struct FoldedKernel {
    pub grid: CircleGrid,
    pub tail_tol: f64,
    /// Number of summed periods.
    pub periods: usize,
    k_lag: Vec<f64>,
    h_lag: Vec<f64>,
    weights: Vec<f64>,
}

pub fn fold_periods(k: &KernelHandle, tail_tol: f64) -> usize {
    ((-tail_tol.ln()) / (k.lambda_min() * k.period())).ceil().max(1.0) as usize
}

/// Tabulates `G_{t_i}(jh) = Σ_{p<P} K(t_i + pT, t_i − jh)` for `j = 0..=m`, and
/// the same sum with `H` in place of `K`.
pub fn fold_kernel(k: &KernelHandle, grid: CircleGrid, tail_tol: f64) -> Result<FoldedKernel> {
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(RenewalError::Configuration(format!(
            "tail_tol must lie in (0, 1), got {tail_tol}"
        )));
    }
    if (grid.period - k.period()).abs() > 1e-12 * k.period() {
        return Err(RenewalError::Configuration(format!(
            "grid period {} differs from kernel period {}",
            grid.period,
            k.period()
        )));
    }
    let periods = fold_periods(k, tail_tol);
    let m = grid.m;
    let h = grid.step();
    let period = grid.period;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let t = grid.node(i);
            let mut krow = vec![0.0; m + 1];
            let mut hrow = vec![0.0; m + 1];
            for j in 0..=m {
                let u = t - j as f64 * h;
                let (mut ks, mut hs) = (0.0, 0.0);
                for p in 0..periods {
                    let tt = t + p as f64 * period;
                    let lam = k.lambda(tt, u);
                    let surv = k.surv(tt, u);
                    ks += lam * surv;
                    hs += surv;
                }
                krow[j] = ks;
                hrow[j] = hs;
            }
            (krow, hrow)
        })
        .collect();
    let mut k_lag = Vec::with_capacity(m * (m + 1));
    let mut h_lag = Vec::with_capacity(m * (m + 1));
    for (kr, hr) in rows {
        k_lag.extend(kr);
        h_lag.extend(hr);
    }
    Ok(FoldedKernel {
        grid,
        tail_tol,
        periods,
        k_lag,
        h_lag,
        weights: quadrature::uniform_weights(m + 1, h),
    })
}

impl FoldedKernel {
    fn row<'a>(&self, table: &'a [f64], i: usize) -> &'a [f64] {
        let w = self.grid.m + 1;
        &table[i * w..(i + 1) * w]
    }

    /// `K^T(t_i, t_j)`; on the diagonal this is the value including `K(t, t)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let d = self.grid.wrap(i as isize - j as isize);
        self.row(&self.k_lag, i)[d]
    }

    /// `G_{t_i}(jh)` for `j = 0..=m`.
    pub fn lag_row(&self, i: usize) -> &[f64] {
        self.row(&self.k_lag, i)
    }

    pub fn survival_lag_row(&self, i: usize) -> &[f64] {
        self.row(&self.h_lag, i)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn apply_table(&self, table: &[f64], f: &[f64]) -> Vec<f64> {
        let m = self.grid.m;
        (0..m)
            .map(|i| {
                let row = self.row(table, i);
                (0..=m)
                    .map(|j| self.weights[j] * row[j] * f[self.grid.wrap(i as isize - j as isize)])
                    .sum()
            })
            .collect()
    }

    /// `(K^𝕋 f)(t_i) = ∫_𝕋 K^T(t_i, s) f(s) ds`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.apply_table(&self.k_lag, f)
    }

    /// `∫_{−∞}^{t_i} H(t_i, u) f(u) du` for periodic `f`.
    pub fn apply_survival(&self, f: &[f64]) -> Vec<f64> {
        self.apply_table(&self.h_lag, f)
    }

    /// `∫_𝕋 K^T(t, s_j) dt` at every source node.
    pub fn column_masses(&self) -> Vec<f64> {
        let m = self.grid.m;
        (0..m)
            .map(|j| {
                (0..=m)
                    .map(|l| self.weights[l] * self.row(&self.k_lag, (j + l) % m)[l])
                    .sum()
            })
            .collect()
    }

    pub fn min_entry(&self) -> f64 {
        self.k_lag.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReport {
    pub iterations: usize,
    /// L¹ distance between the last iterate and its image.
    pub residual: f64,
}

/// Stationary density `π` of the phase chain by normalized power iteration.
pub fn stationary_phase(fk: &FoldedKernel, tol: f64, max_iter: usize) -> Result<PhaseField> {
    stationary_phase_with_report(fk, tol, max_iter).map(|(pi, _)| pi)
}

pub fn stationary_phase_with_report(
    fk: &FoldedKernel,
    tol: f64,
    max_iter: usize,
) -> Result<(PhaseField, PowerReport)> {
    let grid = fk.grid;
    let h = grid.step();
    let mut pi = vec![1.0 / grid.period; grid.m];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut next = fk.apply(&pi);
        let mass = h * next.iter().sum::<f64>();
        next.iter_mut().for_each(|v| *v /= mass);
        residual = h * next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum::<f64>();
        pi = next;
        if residual <= tol {
            return Ok((
                PhaseField::new(grid, pi)?,
                PowerReport {
                    iterations: it,
                    residual,
                },
            ));
        }
    }
    Err(RenewalError::Convergence {
        iterations: max_iter,
        residual,
    })
}

#[derive(Debug, Clone)]
pub struct RhoEstimate {
    pub rho: PhaseField,
    /// Mean over nodes of `c(t_i) = 1 / ∫_{−∞}^{t_i} H(t_i, u) π(u) du`.
    pub normalization: f64,
    /// `max_i c(t_i) − min_i c(t_i)`; zero for the exact `π`.
    pub spread: f64,
}

/// `ρ = c π` with `c` fixed by `∫_{−∞}^t H(t, u) ρ(u) du = 1`.
///
/// Fails when the normalizations at different nodes disagree by more than
/// `100 × tol`.
pub fn rho_from_phase(pi: &PhaseField, fk: &FoldedKernel, tol: f64) -> Result<RhoEstimate> {
    let denom = fk.apply_survival(pi.values());
    let cs: Vec<f64> = denom.iter().map(|d| 1.0 / d).collect();
    let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    if !(spread <= 100.0 * tol) {
        return Err(RenewalError::Inconsistency(format!(
            "normalization varies across phases by {spread:e} (allowed {:e})",
            100.0 * tol
        )));
    }
    let normalization = cs.iter().sum::<f64>() / cs.len() as f64;
    Ok(RhoEstimate {
        rho: pi.scaled(normalization),
        normalization,
        spread,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanDelta {
    pub beta: f64,
    /// Upper bound on the dropped terms `i > n_periods_cap`.
    pub tail_bound: f64,
}

/// `β = E(Δ)` under `π`: `∫_𝕋 π(φ) Σ_{i≥1} H(iT, φ) dφ`.
pub fn mean_delta(pi: &PhaseField, k: &KernelHandle, n_periods_cap: usize) -> MeanDelta {
    let grid = pi.grid();
    let m = grid.m;
    let period = grid.period;
    let w = quadrature::uniform_weights(m + 1, grid.step());
    let beta = (0..=m)
        .map(|j| {
            let phi = j as f64 * grid.step();
            let s: f64 = (1..=n_periods_cap)
                .map(|i| k.surv(i as f64 * period, phi))
                .sum();
            w[j] * pi.at(j as isize) * s
        })
        .sum();
    let q = (-k.lambda_min() * period).exp();
    let tail_bound = q.powi(n_periods_cap as i32) / (1.0 - q);
    MeanDelta { beta, tail_bound }
}

/// Sup-norm residuals of `ρ = ∫ K ρ` and `∫ H ρ = 1` at the grid nodes.
pub fn residual_rho(rho: &PhaseField, fk: &FoldedKernel) -> (f64, f64) {
    let img = fk.apply(rho.values());
    let norm = fk.apply_survival(rho.values());
    let res_a = img
        .iter()
        .zip(rho.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let res_b = norm.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    (res_a, res_b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSettings {
    pub m: usize,
    pub tail_tol: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Allowed spread of the normalization is `100 × spread_tol`.
    pub spread_tol: f64,
}

impl Default for PhaseSettings {
    fn default() -> Self {
        Self {
            m: 256,
            tail_tol: 1e-12,
            tol: 1e-12,
            max_iter: 100_000,
            spread_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseSolution {
    pub folded: FoldedKernel,
    pub pi: PhaseField,
    pub rho: PhaseField,
    pub power: PowerReport,
    pub normalization: f64,
    pub spread: f64,
    pub beta: MeanDelta,
}

/// Folded kernel, `π`, `ρ` and `β` in one go.
pub fn solve_phase(k: &KernelHandle, settings: &PhaseSettings) -> Result<PhaseSolution> {
    let grid = CircleGrid::new(k.period(), settings.m)?;
    let folded = fold_kernel(k, grid, settings.tail_tol)?;
    let (pi, power) = stationary_phase_with_report(&folded, settings.tol, settings.max_iter)?;
    let est = rho_from_phase(&pi, &folded, settings.spread_tol)?;
    let beta = mean_delta(&pi, k, folded.periods + 1);
    Ok(PhaseSolution {
        folded,
        pi,
        rho: est.rho,
        power,
        normalization: est.normalization,
        spread: est.spread,
        beta,
    })
}
