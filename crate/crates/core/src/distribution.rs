//! Probability laws on the half line `[0, ∞)`.
//!
//! A law is a density plus a finite list of atoms. The density is stored as
//! one or more pieces, each sampled on its own uniform grid and read between
//! nodes by linear interpolation; the density may jump where two pieces
//! meet (the backward recurrence law jumps at `t − s`). Atoms are never
//! smeared into the density.

use crate::error::{RenewalError, Result};
use crate::quadrature;

const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityPiece {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl DensityPiece {
    pub fn new(start: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(RenewalError::Construction(
                "a density piece needs at least two nodes".into(),
            ));
        }
        if !(step > 0.0) || !start.is_finite() || start < -GRID_EPS {
            return Err(RenewalError::Construction(format!(
                "bad density grid: start {start}, step {step}"
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < -1e-9) {
            return Err(RenewalError::Construction(format!(
                "density values must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self {
            start: start.max(0.0),
            step,
            values,
        })
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    /// Linear interpolation; `x` is clamped to the piece.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let pos = ((x - self.start) / self.step).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    pub fn mass(&self) -> f64 {
        quadrature::integrate_uniform(&self.values, self.step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
    /// Set on the pseudo-atom that collects histogram overflow beyond `u_max`.
    pub overflow: bool,
}

impl Atom {
    pub fn new(location: f64, mass: f64) -> Self {
        Self {
            location,
            mass,
            overflow: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfLineDistribution {
    pieces: Vec<DensityPiece>,
    atoms: Vec<Atom>,
    /// Upper bound on the mass lying beyond the stored support.
    tail_bound: f64,
}

impl HalfLineDistribution {
    pub fn new(mut pieces: Vec<DensityPiece>, mut atoms: Vec<Atom>) -> Result<Self> {
        pieces.sort_by(|a, b| a.start.total_cmp(&b.start));
        for w in pieces.windows(2) {
            if w[0].end() > w[1].start + GRID_EPS * w[0].step.max(1.0) {
                return Err(RenewalError::Construction(format!(
                    "density pieces overlap: [{}, {}] and [{}, ..]",
                    w[0].start,
                    w[0].end(),
                    w[1].start
                )));
            }
        }
        if let Some(a) = atoms
            .iter()
            .find(|a| !(a.location >= 0.0) || !a.location.is_finite() || a.mass < 0.0)
        {
            return Err(RenewalError::Construction(format!("invalid atom {a:?}")));
        }
        atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        Ok(Self {
            pieces,
            atoms,
            tail_bound: 0.0,
        })
    }

    /// Single density piece on `[0, step·(n−1)]`.
    pub fn from_grid(step: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![DensityPiece::new(0.0, step, values)?], Vec::new())
    }

    pub fn dirac(location: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![Atom::new(location, 1.0)])
    }

    /// `Exp(rate)` sampled on `[0, u_max]`, tail mass recorded.
    pub fn exponential(rate: f64, step: f64, u_max: f64) -> Result<Self> {
        let n = (u_max / step).round() as usize;
        let values = (0..=n)
            .map(|i| rate * (-rate * i as f64 * step).exp())
            .collect();
        Ok(Self::from_grid(step, values)?.with_tail_bound((-rate * n as f64 * step).exp()))
    }

    pub fn with_tail_bound(mut self, tail: f64) -> Self {
        self.tail_bound = tail.max(0.0);
        self
    }

    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Right end of the stored support (density or atoms).
    pub fn u_max(&self) -> f64 {
        let d = self.pieces.iter().map(|p| p.end()).fold(0.0, f64::max);
        let a = self.atoms.iter().map(|a| a.location).fold(0.0, f64::max);
        d.max(a)
    }

    /// Grid step of the first piece (the finest description for single-piece laws).
    pub fn step(&self) -> Option<f64> {
        self.pieces.first().map(|p| p.step)
    }

    fn piece_at(&self, x: f64, right: bool) -> Option<&DensityPiece> {
        let idx = if right {
            self.pieces.partition_point(|p| p.start <= x)
        } else {
            self.pieces.partition_point(|p| p.start < x)
        };
        let candidates = [idx.checked_sub(1), Some(idx)];
        candidates
            .into_iter()
            .flatten()
            .filter_map(|i| self.pieces.get(i))
            .find(|p| {
                let eps = GRID_EPS * p.step;
                if right {
                    x >= p.start - eps && x < p.end() - eps
                } else {
                    x > p.start + eps && x <= p.end() + eps
                }
            })
    }

    /// Density at `x`, right-continuous where pieces meet.
    pub fn density_at(&self, x: f64) -> f64 {
        self.density_side(x, true)
            .or_else(|| self.density_side(x, false))
            .unwrap_or(0.0)
    }

    /// One-sided density limit: `right = true` gives `p(x+)`.
    pub fn density_limit(&self, x: f64, right: bool) -> f64 {
        self.density_side(x, right).unwrap_or(0.0)
    }

    fn density_side(&self, x: f64, right: bool) -> Option<f64> {
        self.piece_at(x, right).map(|p| p.eval(x))
    }

    pub fn density_mass(&self) -> f64 {
        self.pieces.iter().map(DensityPiece::mass).sum()
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// Total stored mass (density by composite Simpson, plus atoms).
    pub fn mass(&self) -> f64 {
        self.density_mass() + self.atom_mass()
    }

    /// `∫ g dP` over the stored support.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let dens: f64 = self
            .pieces
            .iter()
            .map(|p| {
                let w = quadrature::uniform_weights(p.values.len(), p.step);
                p.values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| w[i] * v * g(p.node(i)))
                    .sum::<f64>()
            })
            .sum();
        dens + self.atoms.iter().map(|a| a.mass * g(a.location)).sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    /// All density grid nodes, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .pieces
            .iter()
            .flat_map(|p| (0..p.values.len()).map(move |i| p.node(i)))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        out
    }

    /// Scale density and atoms so that the stored mass is one.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(RenewalError::Construction("law has zero mass".into()));
        }
        let mut out = self.clone();
        for p in &mut out.pieces {
            p.values.iter_mut().for_each(|v| *v /= m);
        }
        for a in &mut out.atoms {
            a.mass /= m;
        }
        Ok(out)
    }

    /// Histogram projection on bins of width `bin_width` over `[0, u_max)`.
    ///
    /// Atoms are moved into the bin that contains them; mass beyond `u_max`
    /// (including the recorded tail) goes into an overflow pseudo-atom at
    /// `u_max`. Used to compare exact laws with empirical histograms.
    pub fn binned(&self, bin_width: f64, u_max: f64) -> Result<Self> {
        let n_bins = (u_max / bin_width).round() as usize;
        if n_bins == 0 {
            return Err(RenewalError::Domain("u_max smaller than one bin".into()));
        }
        let mut masses = vec![0.0; n_bins];
        let mut overflow = self.tail_bound;
        for p in &self.pieces {
            for i in 0..p.values.len() - 1 {
                // the piecewise-linear density integrates exactly
                let (a, b) = (p.node(i), p.node(i + 1));
                let (fa, fb) = (p.values[i], p.values[i + 1]);
                distribute_linear(a, b, fa, fb, bin_width, &mut masses, &mut overflow);
            }
        }
        for a in &self.atoms {
            let idx = (a.location / bin_width).floor() as usize;
            if a.location < u_max - 1e-12 && idx < n_bins {
                masses[idx] += a.mass;
            } else {
                overflow += a.mass;
            }
        }
        histogram(&masses, bin_width, overflow)
    }
}

fn distribute_linear(
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    bin: f64,
    masses: &mut [f64],
    overflow: &mut f64,
) {
    let slope = (fb - fa) / (b - a);
    let mut lo = a;
    while lo < b - 1e-15 {
        let idx = (lo / bin + 1e-12).floor() as usize;
        let edge = ((idx + 1) as f64 * bin).min(b);
        let hi = if edge <= lo { b } else { edge };
        let f_lo = fa + slope * (lo - a);
        let f_hi = fa + slope * (hi - a);
        let m = 0.5 * (f_lo + f_hi) * (hi - lo);
        match masses.get_mut(idx) {
            Some(slot) => *slot += m,
            None => *overflow += m,
        }
        lo = hi;
    }
}

/// Piecewise-constant law from bin masses, one piece per bin.
pub(crate) fn histogram(masses: &[f64], bin: f64, overflow: f64) -> Result<HalfLineDistribution> {
    let pieces = masses
        .iter()
        .enumerate()
        .map(|(i, m)| DensityPiece::new(i as f64 * bin, bin, vec![m / bin, m / bin]))
        .collect::<Result<Vec<_>>>()?;
    let u_max = masses.len() as f64 * bin;
    let atoms = if overflow > 0.0 {
        vec![Atom {
            location: u_max,
            mass: overflow,
            overflow: true,
        }]
    } else {
        Vec::new()
    };
    HalfLineDistribution::new(pieces, atoms)
}
