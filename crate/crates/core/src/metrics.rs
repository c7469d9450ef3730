//! Distances between half-line laws and exponential decay fits.
//!
//! Total variation is the unhalved L¹ distance `∫|p − q|` (maximum 2).
//! Densities are compared exactly as piecewise-linear functions on the union
//! of both grids; atoms are compared location by location and never cancel
//! against density.

use crate::distribution::{histogram, HalfLineDistribution};
use crate::error::{RenewalError, Result};

/// Distances below this are treated as quadrature noise in decay fits.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvReport {
    pub distance: f64,
    /// Mass of either law beyond its stored support (not included above).
    pub truncation: f64,
}

pub fn tv_report(p: &HalfLineDistribution, q: &HalfLineDistribution) -> TvReport {
    TvReport {
        distance: weighted_l1(p, q, 0.0),
        truncation: p.tail_bound() + q.tail_bound(),
    }
}

/// `∫|p − q|` plus the atom discrepancies.
pub fn tv_distance(p: &HalfLineDistribution, q: &HalfLineDistribution) -> f64 {
    weighted_l1(p, q, 0.0)
}

/// `∫ e^{λ_min u/2} |p − q|(du)`.
///
/// Fails when the weighted mass that may hide beyond the stored supports is
/// more than ten times the computed distance.
pub fn weighted_tv(p: &HalfLineDistribution, q: &HalfLineDistribution, lambda_min: f64) -> Result<f64> {
    let a = 0.5 * lambda_min;
    let d = weighted_l1(p, q, a);
    // an exponential tail of rate ≥ λ_min carries weighted mass ≤ 2 f(u_max) × tail
    let tail = 2.0 * (a * p.u_max()).exp() * p.tail_bound()
        + 2.0 * (a * q.u_max()).exp() * q.tail_bound();
    if tail > 10.0 * d && tail > NOISE_FLOOR {
        return Err(RenewalError::Unreliable(format!(
            "weighted tail estimate {tail:e} dominates the distance {d:e}; increase u_max"
        )));
    }
    Ok(d)
}

/// Largest pointwise density gap (both one-sided limits at every node).
pub fn sup_distance(p: &HalfLineDistribution, q: &HalfLineDistribution) -> f64 {
    merged_nodes(p, q)
        .into_iter()
        .flat_map(|x| {
            [true, false].map(|right| {
                (p.density_limit(x, right) - q.density_limit(x, right)).abs()
            })
        })
        .fold(0.0, f64::max)
}

fn merged_nodes(p: &HalfLineDistribution, q: &HalfLineDistribution) -> Vec<f64> {
    let mut xs = p.breakpoints();
    xs.extend(q.breakpoints());
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    xs
}

fn weighted_l1(p: &HalfLineDistribution, q: &HalfLineDistribution, a: f64) -> f64 {
    let xs = merged_nodes(p, q);
    let mut total = 0.0;
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 - x0 <= 0.0 {
            continue;
        }
        let e0 = p.density_limit(x0, true) - q.density_limit(x0, true);
        let e1 = p.density_limit(x1, false) - q.density_limit(x1, false);
        total += abs_linear_weighted(x0, x1, e0, e1, a);
    }
    // atoms, matched by location
    let mut atoms: Vec<(f64, f64)> = p
        .atoms()
        .iter()
        .map(|at| (at.location, at.mass))
        .chain(q.atoms().iter().map(|at| (at.location, -at.mass)))
        .collect();
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut i = 0;
    while i < atoms.len() {
        let loc = atoms[i].0;
        let mut diff = 0.0;
        while i < atoms.len() && (atoms[i].0 - loc).abs() <= 1e-12 * loc.abs().max(1.0) {
            diff += atoms[i].1;
            i += 1;
        }
        total += (a * loc).exp() * diff.abs();
    }
    total
}

/// `∫_{x0}^{x1} e^{a x} |ℓ(x)| dx` for the linear `ℓ` with end values `e0`, `e1`.
fn abs_linear_weighted(x0: f64, x1: f64, e0: f64, e1: f64, a: f64) -> f64 {
    if e0 * e1 < 0.0 {
        let root = x0 + (x1 - x0) * e0 / (e0 - e1);
        return abs_linear_weighted(x0, root, e0, 0.0, a) + abs_linear_weighted(root, x1, 0.0, e1, a);
    }
    linear_weighted(x0, x1, e0, e1, a).abs()
}

fn linear_weighted(x0: f64, x1: f64, e0: f64, e1: f64, a: f64) -> f64 {
    let h = x1 - x0;
    if a == 0.0 {
        return 0.5 * h * (e0 + e1);
    }
    let z = a * h;
    // E1 = ∫_0^1 e^{zs} ds, E2 = ∫_0^1 s e^{zs} ds
    let (e_one, e_two) = if z.abs() < 1e-2 {
        let z2 = z * z;
        (
            1.0 + z / 2.0 + z2 / 6.0 + z2 * z / 24.0 + z2 * z2 / 120.0,
            0.5 + z / 3.0 + z2 / 8.0 + z2 * z / 30.0 + z2 * z2 / 144.0,
        )
    } else {
        let em1 = z.exp_m1();
        (em1 / z, (z * z.exp() - em1) / (z * z))
    };
    (a * x0).exp() * h * (e0 * e_one + (e1 - e0) * e_two)
}

/// Histogram of samples on bins of width `bin_width` over `[0, u_max)`;
/// samples at or beyond `u_max` form an overflow pseudo-atom at `u_max`.
pub fn empirical_distribution(samples: &[f64], bin_width: f64, u_max: f64) -> Result<HalfLineDistribution> {
    if samples.is_empty() {
        return Err(RenewalError::Domain("no samples".into()));
    }
    let n_bins = (u_max / bin_width).round() as usize;
    if n_bins == 0 || !(bin_width > 0.0) {
        return Err(RenewalError::Domain(format!(
            "bad binning: width {bin_width}, u_max {u_max}"
        )));
    }
    let weight = 1.0 / samples.len() as f64;
    let mut masses = vec![0.0; n_bins];
    let mut overflow = 0.0;
    for &x in samples {
        let idx = (x.max(0.0) / bin_width).floor() as usize;
        match masses.get_mut(idx) {
            Some(m) => *m += weight,
            None => overflow += weight,
        }
    }
    histogram(&masses, bin_width, overflow)
}

/// `Σ|p_i − q_i| + |p_out − q_out|` between two cell histograms that share
/// a binning, each with the mass it left outside the cells.
pub fn cell_tv(p: &[f64], p_out: f64, q: &[f64], q_out: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(RenewalError::Domain(format!(
            "cell counts differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() + (p_out - q_out).abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(t_j, ln d_j)`, skipping `d_j < 1e-12`.
pub fn decay_fit(times: &[f64], distances: &[f64]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(distances)
        .filter(|(_, d)| **d >= NOISE_FLOOR)
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(RenewalError::Domain(format!(
            "decay fit needs at least 3 points above {NOISE_FLOOR:e}, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(RenewalError::Domain("decay fit needs distinct times".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(DecayFit {
        times: pts.iter().map(|p| p.0).collect(),
        distances: pts.iter().map(|p| p.1.exp()).collect(),
        slope,
        intercept,
        r_squared,
    })
}

/// `d_j ≤ C e^{−c(t_j − s)}` for every sample.
pub fn bound_check(times: &[f64], distances: &[f64], big_c: f64, c: f64, s: f64) -> bool {
    times
        .iter()
        .zip(distances)
        .all(|(t, d)| *d <= big_c * (-c * (t - s)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;

    fn exp_law(rate: f64) -> HalfLineDistribution {
        HalfLineDistribution::exponential(rate, 5e-4, 40.0).unwrap()
    }

    #[test]
    fn tv_of_identical_laws_is_zero() {
        assert_eq!(tv_distance(&exp_law(1.0), &exp_law(1.0)), 0.0);
        let long = HalfLineDistribution::exponential(1.0, 1e-2, 80.0).unwrap();
        assert_eq!(weighted_tv(&long, &long, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn tv_exp1_exp2() {
        // crossing at ln 2: ∫|e^{-x} − 2e^{-2x}| = 2(1/2 − 1/4) = 1/2
        let d = tv_distance(&exp_law(1.0), &exp_law(2.0));
        assert!((d - 0.5).abs() < 1e-6, "{d}");
    }

    #[test]
    fn atom_against_density_is_two() {
        let p = HalfLineDistribution::dirac(1.0).unwrap();
        let d = tv_distance(&p, &exp_law(1.0));
        assert!((d - 2.0).abs() < 1e-6, "{d}");
    }

    #[test]
    fn weighted_tv_matches_brute_force() {
        // independent oracle: fine-grid trapezoid on the closed-form densities
        let a = 0.5;
        let h = 1e-5;
        let n = (40.0 / h) as usize;
        let vals: Vec<f64> = (0..=n)
            .map(|i| {
                let x = i as f64 * h;
                (a * x).exp() * ((-x).exp() - 2.0 * (-2.0 * x).exp()).abs()
            })
            .collect();
        let oracle = quadrature::trapezoid(&vals, h);
        let d = weighted_tv(&exp_law(1.0), &exp_law(2.0), 1.0).unwrap();
        assert!((d - oracle).abs() < 1e-6, "{d} vs {oracle}");
        assert!(d >= tv_distance(&exp_law(1.0), &exp_law(2.0)));
    }

    #[test]
    fn weighted_tv_flags_dominant_tail() {
        let p = HalfLineDistribution::exponential(1.0, 0.01, 2.0).unwrap();
        let q = HalfLineDistribution::exponential(1.0 + 1e-6, 0.01, 2.0).unwrap();
        assert!(matches!(weighted_tv(&p, &q, 1.0), Err(RenewalError::Unreliable(_))));
    }

    #[test]
    fn single_sample_histogram() {
        let d = empirical_distribution(&[0.5], 1.0, 2.0).unwrap();
        assert_eq!(d.density_at(0.3), 1.0);
        assert_eq!(d.density_at(1.5), 0.0);
        assert_eq!(d.mass(), 1.0);
    }

    #[test]
    fn overflow_is_a_flagged_atom() {
        let d = empirical_distribution(&[0.5, 3.0, 7.0, 1.2], 0.5, 2.0).unwrap();
        let a = d.atoms()[0];
        assert!(a.overflow);
        assert_eq!(a.location, 2.0);
        assert_eq!(a.mass, 0.5);
        assert!((d.mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (1..=5).map(f64::from).collect();
        let d: Vec<f64> = t.iter().map(|t| 2.0 * (-3.0 * t).exp()).collect();
        let fit = decay_fit(&t, &d).unwrap();
        assert!((fit.slope + 3.0).abs() < 1e-10);
        assert!((fit.intercept - 2f64.ln()).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_needs_three_points_above_floor() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let d = [1e-3, 1e-5, 1e-13, 0.0];
        assert!(decay_fit(&t, &d).is_err());
    }

    #[test]
    fn cell_tv_counts_outside_mass() {
        let d = cell_tv(&[0.5, 0.3], 0.2, &[0.4, 0.3], 0.3).unwrap();
        assert!((d - 0.2).abs() < 1e-15);
        assert!(cell_tv(&[0.5], 0.0, &[0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn bound_check_cases() {
        let t = [1.0, 2.0];
        assert!(bound_check(&t, &[0.1, 0.01], 1.0, 1.0, 0.0));
        assert!(!bound_check(&t, &[0.1, 0.2], 1.0, 1.0, 0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn grid_law() -> impl Strategy<Value = HalfLineDistribution> {
            (prop::collection::vec(0.0f64..3.0, 5..40), 0.05f64..0.5).prop_map(|(vals, h)| {
                HalfLineDistribution::from_grid(h, vals).unwrap()
            })
        }

        proptest! {
            #[test]
            fn tv_is_a_metric(p in grid_law(), q in grid_law(), r in grid_law()) {
                let pq = tv_distance(&p, &q);
                prop_assert!((pq - tv_distance(&q, &p)).abs() <= 1e-12 * (1.0 + pq));
                prop_assert!(pq <= tv_distance(&p, &r) + tv_distance(&r, &q) + 1e-9);
                prop_assert_eq!(tv_distance(&p, &p), 0.0);
            }

            #[test]
            fn weighting_bounds(p in grid_law(), q in grid_law(), lmin in 0.1f64..2.0) {
                let d = tv_distance(&p, &q);
                let w = weighted_l1(&p, &q, 0.5 * lmin);
                let u = p.u_max().max(q.u_max());
                prop_assert!(w >= d * (1.0 - 1e-12) - 1e-12);
                prop_assert!(w <= (0.5 * lmin * u).exp() * d * (1.0 + 1e-12) + 1e-12);
            }

            #[test]
            fn fit_recovers_rate(c in 0.1f64..5.0, amp in 0.1f64..10.0, n in 3usize..12) {
                let t: Vec<f64> = (0..n).map(|i| 0.5 + i as f64 * 0.7).collect();
                let d: Vec<f64> = t.iter().map(|t| amp * (-c * t).exp()).collect();
                prop_assume!(d.iter().filter(|v| **v > NOISE_FLOOR).count() >= 3);
                let fit = decay_fit(&t, &d).unwrap();
                prop_assert!((fit.slope + c).abs() < 1e-8);
            }
        }
    }
}
