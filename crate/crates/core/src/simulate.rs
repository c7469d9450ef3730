//! Exact simulation of arrival times, recurrence times and the two
//! piecewise-deterministic Markov processes (PDMPs) of the phase picture.
//!
//! Arrivals are drawn by thinning: candidate increments are `Exp(λ_max)` and a
//! candidate `c` is kept with probability `λ(c, u)/λ_max`. This is exact and
//! needs no quadrature.

use rayon::prelude::*;

use crate::distribution::HalfLineDistribution;
use crate::error::{RenewalError, Result};
use crate::kernel::KernelHandle;
use crate::metrics::empirical_distribution;
use crate::rng::RngStream;

/// Maximum number of thinning proposals for a single arrival.
pub const PROPOSAL_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampler {
    #[default]
    Thinning,
    /// Bisection on `Λ(t, u) = E`; needs a closed-form cumulative hazard.
    Inversion,
}

/// Next arrival after an event at `u`.
pub fn sample_next_arrival(k: &KernelHandle, u: f64, rng: &mut RngStream) -> Result<f64> {
    sample_arrival_after(k, u, u, rng)
}

/// Next arrival after time `from`, given that the last event happened at
/// `u ≤ from` and none occurred in `(u, from]`.
pub fn sample_arrival_after(k: &KernelHandle, u: f64, from: f64, rng: &mut RngStream) -> Result<f64> {
    let lmax = k.lambda_max();
    let mut t = from;
    for _ in 0..PROPOSAL_CAP {
        t += rng.exponential(lmax);
        if rng.uniform() * lmax <= k.lambda(t, u) && t > from {
            return Ok(t);
        }
    }
    Err(RenewalError::ProposalCap {
        cap: PROPOSAL_CAP,
        start: u,
    })
}

pub fn sample_next_arrival_with(
    k: &KernelHandle,
    u: f64,
    rng: &mut RngStream,
    sampler: Sampler,
) -> Result<f64> {
    match sampler {
        Sampler::Thinning => sample_next_arrival(k, u, rng),
        Sampler::Inversion => {
            if !k.has_closed_form() {
                return Err(RenewalError::Configuration(format!(
                    "inversion sampling needs a closed-form cumulative hazard ({} has none)",
                    k.name()
                )));
            }
            let e = rng.exponential(1.0);
            let (mut lo, mut hi) = (e / k.lambda_max(), e / k.lambda_min());
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if k.cum(u + mid, u) < e {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(u + 0.5 * (lo + hi))
        }
    }
}

/// One realized sequence of arrivals from a start time.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPath {
    pub start: f64,
    /// Time of the last event at or before `start` (equal to `start` unless the
    /// path was started with a positive initial age).
    pub origin: f64,
    pub arrivals: Vec<f64>,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recurrence {
    pub count: usize,
    /// Time to the next arrival.
    pub forward: f64,
    /// Time since the last event (since `origin` before the first arrival).
    pub backward: f64,
}

impl EventPath {
    /// Counting, forward and backward recurrence at time `t`.
    pub fn recurrence_at(&self, t: f64) -> Result<Recurrence> {
        if !(t >= self.start && t <= self.horizon) {
            return Err(RenewalError::Domain(format!(
                "t = {t} outside [{}, {}]",
                self.start, self.horizon
            )));
        }
        let n = self.arrivals.partition_point(|&a| a <= t);
        let last = if n == 0 { self.origin } else { self.arrivals[n - 1] };
        Ok(Recurrence {
            count: n,
            forward: self.arrivals[n] - t,
            backward: t - last,
        })
    }

    /// `(p_k, Φ_k, Δ_k)` with `T_k = p_k T + Φ_k` and `Δ_k = p_k − p_{k−1}`
    /// (`p_0` taken from the start time).
    pub fn phase_decomposition(&self, period: f64) -> Vec<(i64, f64, i64)> {
        let mut prev = (self.start / period).floor() as i64;
        self.arrivals
            .iter()
            .map(|&t| {
                let p = (t / period).floor() as i64;
                let out = (p, t - p as f64 * period, p - prev);
                prev = p;
                out
            })
            .collect()
    }
}

pub fn recurrence_at(path: &EventPath, t: f64) -> Result<Recurrence> {
    path.recurrence_at(t)
}

/// Arrivals from `T_0 = s` until the first one beyond `horizon` (kept).
pub fn simulate_path(k: &KernelHandle, s: f64, horizon: f64, rng: &mut RngStream) -> Result<EventPath> {
    simulate_path_with_age(k, s, 0.0, horizon, rng)
}

/// Like [`simulate_path`], drawing every gap with `sampler`.
pub fn simulate_path_with(
    k: &KernelHandle,
    s: f64,
    horizon: f64,
    rng: &mut RngStream,
    sampler: Sampler,
) -> Result<EventPath> {
    if sampler == Sampler::Thinning {
        return simulate_path(k, s, horizon, rng);
    }
    if !(horizon > s) {
        return Err(RenewalError::Domain(format!("horizon {horizon} must exceed start {s}")));
    }
    let mut arrivals = vec![sample_next_arrival_with(k, s, rng, sampler)?];
    while *arrivals.last().unwrap() <= horizon {
        let u = *arrivals.last().unwrap();
        arrivals.push(sample_next_arrival_with(k, u, rng, sampler)?);
    }
    Ok(EventPath {
        start: s,
        origin: s,
        arrivals,
        horizon,
    })
}

/// Like [`simulate_path`], but the last event before `s` happened at `s − age`.
pub fn simulate_path_with_age(
    k: &KernelHandle,
    s: f64,
    age: f64,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<EventPath> {
    if !(horizon > s) {
        return Err(RenewalError::Domain(format!("horizon {horizon} must exceed start {s}")));
    }
    if !(age >= 0.0) {
        return Err(RenewalError::Domain(format!("negative initial age {age}")));
    }
    let origin = s - age;
    let mut arrivals = vec![sample_arrival_after(k, origin, s, rng)?];
    while *arrivals.last().unwrap() <= horizon {
        let u = *arrivals.last().unwrap();
        arrivals.push(sample_next_arrival(k, u, rng)?);
    }
    Ok(EventPath {
        start: s,
        origin,
        arrivals,
        horizon,
    })
}

/// Runs `f` on replicas `0..n`, replica `i` on stream `(base_seed, i)`.
/// Results come back in replica order whatever the thread count.
pub fn par_replicas<R, F>(base_seed: u64, n: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize, &mut RngStream) -> Result<R> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| f(i, &mut RngStream::new(base_seed, i as u64)))
        .collect()
}

/// Recurrence times at `t` for `n` independent paths started at `s`.
pub fn recurrence_samples(
    k: &KernelHandle,
    s: f64,
    t: f64,
    base_seed: u64,
    n: usize,
) -> Result<Vec<Recurrence>> {
    par_replicas(base_seed, n, |_, rng| {
        simulate_path(k, s, t.max(s + f64::MIN_POSITIVE), rng)?.recurrence_at(t)
    })
}

/// Phases `Φ_k = T_k mod T` of the embedded chain, `n` steps from `φ_0`.
pub fn simulate_phase_chain(k: &KernelHandle, phi0: f64, n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let period = k.period();
    let mut phi = phi0.rem_euclid(period);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let next = sample_next_arrival(k, phi, rng)?;
        phi = next.rem_euclid(period);
        out.push(phi);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdmpKind {
    /// `(X̃, Φ̃)`: time to the next event and its phase.
    Forward,
    /// `(Ỹ, Ψ̃)`: time since the last event and its phase.
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdmpSample {
    pub time: f64,
    pub x: f64,
    pub phase: f64,
}

/// Initial state, every post-jump state and the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct PdmpTrajectory {
    pub kind: PdmpKind,
    pub period: f64,
    pub samples: Vec<PdmpSample>,
    pub jump_times: Vec<f64>,
}

impl PdmpTrajectory {
    pub fn start(&self) -> f64 {
        self.samples[0].time
    }

    pub fn end(&self) -> f64 {
        self.samples.last().unwrap().time
    }

    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> Result<(f64, f64)> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(RenewalError::Domain(format!(
                "t = {t} outside [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        let i = self.samples.partition_point(|s| s.time <= t).max(1) - 1;
        let s = self.samples[i];
        let dt = t - s.time;
        Ok(match self.kind {
            PdmpKind::Forward => (s.x - dt, s.phase),
            PdmpKind::Backward => (s.x + dt, s.phase),
        })
    }

    /// Post-jump `(first coordinate, phase)` pairs.
    pub fn jumps(&self) -> impl Iterator<Item = &PdmpSample> {
        let n = self.jump_times.len();
        self.samples[1..1 + n].iter()
    }
}

/// Forward PDMP from `(x₀, φ₀)` at time `t0`: `X̃` decreases at slope 1; when
/// it hits 0 at phase `φ` a jump `Δ ~ K(φ + u, φ) du` is drawn and the state
/// becomes `(Δ, φ + Δ mod T)`.
pub fn simulate_forward_pdmp(
    k: &KernelHandle,
    init: (f64, f64),
    t0: f64,
    t_end: f64,
    rng: &mut RngStream,
) -> Result<PdmpTrajectory> {
    let (x0, phi0) = init;
    if !(x0 >= 0.0) {
        return Err(RenewalError::Domain(format!("negative initial state {x0}")));
    }
    let period = k.period();
    let mut t = t0;
    let mut x = x0;
    let mut phi = phi0.rem_euclid(period);
    let mut samples = vec![PdmpSample { time: t, x, phase: phi }];
    let mut jump_times = Vec::new();
    while t + x <= t_end {
        t += x;
        let delta = sample_next_arrival(k, phi, rng)? - phi;
        x = delta;
        phi = (phi + delta).rem_euclid(period);
        jump_times.push(t);
        samples.push(PdmpSample { time: t, x, phase: phi });
    }
    samples.push(PdmpSample {
        time: t_end,
        x: x - (t_end - t),
        phase: phi,
    });
    Ok(PdmpTrajectory {
        kind: PdmpKind::Forward,
        period,
        samples,
        jump_times,
    })
}

/// Backward PDMP from `(y₀, ψ₀)` at time `t0`: `Ỹ` grows at slope 1 and jumps
/// to 0 at rate `λ(Ψ̃ + Ỹ, Ψ̃)`; the new phase is the jump time mod `T`.
pub fn simulate_backward_pdmp(
    k: &KernelHandle,
    init: (f64, f64),
    t0: f64,
    t_end: f64,
    rng: &mut RngStream,
) -> Result<PdmpTrajectory> {
    let (y0, psi0) = init;
    if !(y0 >= 0.0) {
        return Err(RenewalError::Domain(format!("negative initial state {y0}")));
    }
    let period = k.period();
    let lmax = k.lambda_max();
    let mut y = y0;
    let mut psi = psi0.rem_euclid(period);
    let mut t_last = t0;
    let mut samples = vec![PdmpSample { time: t0, x: y, phase: psi }];
    let mut jump_times = Vec::new();
    let mut t = t0;
    let mut proposals = 0usize;
    loop {
        t += rng.exponential(lmax);
        if t > t_end {
            break;
        }
        let age = y + (t - t_last);
        if rng.uniform() * lmax <= k.lambda(psi + age, psi) {
            // the phase of the clock reading psi + age, i.e. the jump time mod T
            psi = (psi + age).rem_euclid(period);
            y = 0.0;
            t_last = t;
            proposals = 0;
            jump_times.push(t);
            samples.push(PdmpSample { time: t, x: 0.0, phase: psi });
        } else {
            proposals += 1;
            if proposals >= PROPOSAL_CAP {
                return Err(RenewalError::ProposalCap {
                    cap: PROPOSAL_CAP,
                    start: t_last,
                });
            }
        }
    }
    samples.push(PdmpSample {
        time: t_end,
        x: y + (t_end - t_last),
        phase: psi,
    });
    Ok(PdmpTrajectory {
        kind: PdmpKind::Backward,
        period,
        samples,
        jump_times,
    })
}

/// The forward PDMP driven by the same stream as [`simulate_path`] from `s`:
/// the first arrival `T₁` is drawn from `s`, then the PDMP runs from
/// `(T₁ − s, T₁ mod T)`. Its first coordinate equals `X^s_t` up to roundoff.
pub fn coupled_forward_pdmp(
    k: &KernelHandle,
    s: f64,
    t_end: f64,
    rng: &mut RngStream,
) -> Result<PdmpTrajectory> {
    let first = sample_next_arrival(k, s, rng)?;
    simulate_forward_pdmp(k, (first - s, first.rem_euclid(k.period())), s, t_end, rng)
}

/// Time-averaged occupation of a PDMP trajectory on `[0, u_max] × 𝕋`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationHistogram {
    pub u_max: f64,
    pub n_u: usize,
    pub n_phi: usize,
    pub period: f64,
    /// Fractions of observation time, `cells[i * n_phi + j]` for u-bin `i`,
    /// phase-bin `j`.
    pub cells: Vec<f64>,
    /// Fraction of time spent with first coordinate above `u_max`.
    pub discarded: f64,
    pub window: f64,
}

impl OccupationHistogram {
    pub fn du(&self) -> f64 {
        self.u_max / self.n_u as f64
    }

    pub fn dphi(&self) -> f64 {
        self.period / self.n_phi as f64
    }

    pub fn cell(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.n_phi + j]
    }

    pub fn recorded_mass(&self) -> f64 {
        self.cells.iter().sum()
    }

    /// Marginal in the first coordinate; discarded mass becomes an overflow atom.
    pub fn u_marginal(&self) -> Result<HalfLineDistribution> {
        let masses: Vec<f64> = (0..self.n_u)
            .map(|i| (0..self.n_phi).map(|j| self.cell(i, j)).sum())
            .collect();
        crate::distribution::histogram(&masses, self.du(), self.discarded)
    }

    /// Phase-bin masses of the recorded cells (time above `u_max` excluded).
    pub fn phase_marginal(&self) -> Vec<f64> {
        (0..self.n_phi)
            .map(|j| (0..self.n_u).map(|i| self.cell(i, j)).sum())
            .collect()
    }
}

pub fn occupation_histogram(
    traj: &PdmpTrajectory,
    u_max: f64,
    n_u: usize,
    n_phi: usize,
    burn_in: f64,
) -> Result<OccupationHistogram> {
    let lo_t = traj.start() + burn_in;
    let hi_t = traj.end();
    let window = hi_t - lo_t;
    if !(window > 0.0) || n_u == 0 || n_phi == 0 || !(u_max > 0.0) {
        return Err(RenewalError::Domain(format!(
            "empty observation window or grid (window {window}, n_u {n_u}, n_phi {n_phi})"
        )));
    }
    let du = u_max / n_u as f64;
    let dphi = traj.period / n_phi as f64;
    let mut cells = vec![0.0; n_u * n_phi];
    let mut discarded = 0.0;
    let sign = match traj.kind {
        PdmpKind::Forward => -1.0,
        PdmpKind::Backward => 1.0,
    };
    for w in traj.samples.windows(2) {
        let (a, b) = (w[0].time.max(lo_t), w[1].time.min(hi_t));
        if b <= a {
            continue;
        }
        let ua = w[0].x + sign * (a - w[0].time);
        let ub = w[0].x + sign * (b - w[0].time);
        let (lo, hi) = if ua <= ub { (ua, ub) } else { (ub, ua) };
        let j = ((w[0].phase / dphi) as usize).min(n_phi - 1);
        if hi > u_max {
            discarded += hi - lo.max(u_max);
        }
        let top = hi.min(u_max);
        let mut x = lo.max(0.0);
        while x < top {
            let i = ((x / du) as usize).min(n_u - 1);
            let edge = ((i + 1) as f64 * du).min(top);
            let next = if edge > x { edge } else { top };
            cells[i * n_phi + j] += next - x;
            x = next;
        }
    }
    for c in &mut cells {
        *c /= window;
    }
    Ok(OccupationHistogram {
        u_max,
        n_u,
        n_phi,
        period: traj.period,
        cells,
        discarded: discarded / window,
        window,
    })
}

/// Empirical law of a sample of recurrence times, helper for cross-checks.
pub fn recurrence_histogram(values: &[f64], bin_width: f64, u_max: f64) -> Result<HalfLineDistribution> {
    empirical_distribution(values, bin_width, u_max)
}
