use std::fmt::Write as _;

use renewal_core::asymptotics::{
    harris_constants, hazard_pairing, identity_checks, invariance_residual_forward, joint_limits, lyapunov_check,
    mu_infty, nu_infty, ForwardOperator, HarrisConstants,
};
use renewal_core::kernel::verify_kernel;
use renewal_core::metrics::{bound_check, cell_tv, decay_fit, empirical_distribution, tv_distance, weighted_tv};
use renewal_core::phasechain::{residual_rho, solve_phase, PhaseField, PhaseSolution};
use renewal_core::simulate::{
    occupation_histogram, par_replicas, simulate_backward_pdmp, simulate_forward_pdmp, simulate_path_with, PdmpKind,
};
use renewal_core::volterra::{solve_renewal, solve_renewal_extrapolated, InitialLaw, RenewalSolution};
use renewal_core::{HalfLineDistribution, KernelHandle, RngStream};

use crate::config::RunConfig;
use crate::output::{plot, write_text, Csv, Series};
use crate::CliError;

const CHECK_RHO_RESIDUAL: f64 = 1e-8;
const CHECK_SPREAD: f64 = 1e-6;
const CHECK_MASS: f64 = 1e-6;
const CHECK_IDENTITY: f64 = 1e-4;
const CHECK_INVARIANCE: f64 = 1e-4;
const CHECK_Z: f64 = 4.0;
const CHECK_TV: f64 = 0.05;
const CHECK_BIN: f64 = 0.5;
/// Distances below this are at the resolution of the law quadrature and are
/// left out of the decay fits.
const FIT_FLOOR: f64 = 1e-7;

/// Shortest round-trip representation, in exponent form for tiny or huge values.
pub fn f(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Support wide enough that the `e^{λ_min u/2}`-weighted tail of the forward
/// law is below `e^{-30}`, on the `h_u` grid.
fn weighted_u_max(cfg: &RunConfig, k: &KernelHandle) -> f64 {
    let lmin = k.lambda_min();
    let needed = 2.0 * (30.0 + (2.0 * k.lambda_max() / lmin).ln()) / lmin;
    let h = cfg.h_u();
    cfg.u_max(k).max((needed / h).ceil() * h)
}

fn kernel_and_phase(cfg: &RunConfig) -> Result<(KernelHandle, PhaseSolution), CliError> {
    let k = cfg.kernel.build()?;
    let ph = solve_phase(&k, &cfg.phase)?;
    Ok((k, ph))
}

fn solve(cfg: &RunConfig, k: &KernelHandle, init: &InitialLaw, s: f64, t_end: f64) -> Result<RenewalSolution, CliError> {
    let sol = if cfg.volterra.extrapolate {
        solve_renewal_extrapolated(k, init, s, t_end, cfg.volterra.h)?
    } else {
        solve_renewal(k, init, s, t_end, cfg.volterra.h)?
    };
    Ok(sol)
}

fn harris_lines(out: &mut String, hc: &HarrisConstants) {
    let _ = writeln!(out, "harris_beta={}", f(hc.beta));
    let _ = writeln!(out, "harris_c={}", f(hc.c));
    let _ = writeln!(out, "harris_C={}", f(hc.big_c));
    let _ = writeln!(out, "lyapunov_gamma={}", f(hc.gamma));
    let _ = writeln!(out, "lyapunov_kappa={}", f(hc.kappa));
    let _ = writeln!(out, "minorization_alpha={}", f(hc.alpha));
    let _ = writeln!(out, "period_conditions_hold={}", hc.period_conditions_hold);
    let _ = writeln!(out, "min_period_multiple={}", hc.min_period_multiple);
}

pub fn rho(cfg: &RunConfig) -> Result<(), CliError> {
    let (k, ph) = kernel_and_phase(cfg)?;
    let dir = &cfg.output_dir;
    let grid = ph.rho.grid();
    let mut csv = Csv::create(dir, "phase.csv", "t_i,pi,rho")?;
    for i in 0..grid.m {
        csv.row(&[f(grid.node(i)), f(ph.pi.values()[i]), f(ph.rho.values()[i])])?;
    }
    csv.finish()?;

    let (res_a, res_b) = residual_rho(&ph.rho, &ph.folded);
    let hc = harris_constants(k.lambda_min(), k.lambda_max(), k.period())?;
    let mut s = String::new();
    let _ = writeln!(s, "kernel={}", k.name());
    let _ = writeln!(s, "period={}", f(k.period()));
    let _ = writeln!(s, "lambda_min={}", f(k.lambda_min()));
    let _ = writeln!(s, "lambda_max={}", f(k.lambda_max()));
    let _ = writeln!(s, "grid_m={}", grid.m);
    let _ = writeln!(s, "rho_mean={}", f(ph.rho.integral() / k.period()));
    let _ = writeln!(s, "rho_min={}", f(ph.rho.min()));
    let _ = writeln!(s, "rho_max={}", f(ph.rho.max()));
    let _ = writeln!(s, "power_iterations={}", ph.power.iterations);
    let _ = writeln!(s, "power_residual={}", f(ph.power.residual));
    let _ = writeln!(s, "normalization={}", f(ph.normalization));
    let _ = writeln!(s, "normalization_spread={}", f(ph.spread));
    let _ = writeln!(s, "mean_periods_between_arrivals={}", f(ph.beta.beta));
    let _ = writeln!(s, "mean_periods_tail_bound={}", f(ph.beta.tail_bound));
    let _ = writeln!(s, "residual_fixed_point={}", f(res_a));
    let _ = writeln!(s, "residual_normalization={}", f(res_b));
    harris_lines(&mut s, &hc);
    write_text(dir, "constants.txt", &s)?;

    let nodes = grid.nodes();
    let series = [
        Series {
            label: "rho",
            points: nodes.iter().copied().zip(ph.rho.values().iter().copied()).collect(),
        },
        Series {
            label: "pi",
            points: nodes.iter().copied().zip(ph.pi.values().iter().copied()).collect(),
        },
    ];
    plot(dir, "rho.svg", "Periodic rate and phase density", "phase", &series, false);
    Ok(())
}

pub fn limits(cfg: &RunConfig) -> Result<(), CliError> {
    let (k, ph) = kernel_and_phase(cfg)?;
    let dir = &cfg.output_dir;
    let (u_max, h_u) = (cfg.u_max(&k), cfg.h_u());
    let mut csv = Csv::create(dir, "limits.csv", "phi,u,nu,mu")?;
    let mut summary = String::new();
    for (idx, &phi) in cfg.phis.iter().enumerate() {
        let nu = nu_infty(&ph.rho, &k, phi, u_max, h_u)?;
        let mu = mu_infty(&ph.rho, &k, phi, u_max, h_u, cfg.phase.tail_tol)?;
        let n = nu.values().len().min(mu.values().len());
        for i in 0..n {
            csv.row(&[f(phi), f(i as f64 * h_u), f(nu.values()[i]), f(mu.values()[i])])?;
        }
        let _ = writeln!(
            summary,
            "phi={} nu_mass={} mu_mass={} tail_bound={} hazard_pairing={} rho={}",
            f(phi),
            f(nu.mass()),
            f(mu.mass()),
            f(nu.law.tail_bound()),
            f(hazard_pairing(&nu, &k)),
            f(ph.rho.eval(phi))
        );
        let grid = |v: &[f64]| -> Vec<(f64, f64)> { v.iter().enumerate().map(|(i, y)| (i as f64 * h_u, *y)).collect() };
        let series = [
            Series {
                label: "backward (nu)",
                points: grid(nu.values()),
            },
            Series {
                label: "forward (mu)",
                points: grid(mu.values()),
            },
        ];
        plot(dir, &format!("limits_{idx}.svg"), &format!("Limit laws at phase {phi}"), "u", &series, false);
    }
    csv.finish()?;
    write_text(dir, "limits.txt", &summary)
}

pub fn converge(cfg: &RunConfig) -> Result<(), CliError> {
    let (k, ph) = kernel_and_phase(cfg)?;
    let dir = &cfg.output_dir;
    let period = k.period();
    let s = cfg.converge_start;
    let n = cfg.converge_periods;
    let (u_max, h_u) = (cfg.u_max(&k), cfg.h_u());
    let wu_max = weighted_u_max(cfg, &k);
    let hc = harris_constants(k.lambda_min(), k.lambda_max(), period)?;
    let sol = solve(cfg, &k, &InitialLaw::delta0(), s, s + n as f64 * period)?;
    let ts: Vec<f64> = (1..=n).map(|j| s + j as f64 * period).collect();
    let per_period = ph.rho.integral();

    let mut back = Csv::create(dir, "converge.csv", "t,distance,bound_value,within_bound")?;
    let mut fwd = Csv::create(dir, "converge_forward.csv", "t,weighted_distance")?;
    let (mut db, mut df, mut rate_gap, mut count_gap) = (Vec::new(), Vec::new(), 0.0f64, 0.0f64);
    let (mut rate_ok, mut count_ok) = (true, true);
    let lmax = k.lambda_max();
    for &t in &ts {
        let limit = nu_infty(&ph.rho, &k, t, u_max, h_u)?;
        let d = tv_distance(&sol.law_backward(t)?, &limit.law);
        let bound = hc.bound(t - s);
        back.row(&[f(t), f(d), f(bound), (d <= bound).to_string()])?;
        db.push(d);
        let mu = mu_infty(&ph.rho, &k, t, wu_max, h_u, cfg.phase.tail_tol)?;
        let w = weighted_tv(&sol.law_forward(t, wu_max, h_u)?, &mu.law, k.lambda_min())?;
        fwd.row(&[f(t), f(w)])?;
        df.push(w);
        rate_gap = (sol.rate_at(t)? - ph.rho.eval(t)).abs();
        count_gap = (sol.expected_count(t - period, t)? - per_period).abs();
        rate_ok &= rate_gap <= lmax * bound;
        // the window (t − T, t] starts one period earlier
        count_ok &= count_gap <= lmax * hc.bound(t - period - s) / hc.c;
    }
    back.finish()?;
    fwd.finish()?;

    let mut out = String::new();
    let _ = writeln!(out, "start={s}");
    let _ = writeln!(out, "periods={n}");
    for (name, ds) in [("backward", &db), ("forward_weighted", &df)] {
        let above: Vec<(f64, f64)> = ts
            .iter()
            .copied()
            .zip(ds.iter().copied())
            .filter(|(_, d)| *d > FIT_FLOOR)
            .collect();
        let _ = writeln!(out, "{name}_fit_points={}", above.len());
        if above.len() >= 3 {
            let (t, d): (Vec<f64>, Vec<f64>) = above.into_iter().unzip();
            let fit = decay_fit(&t, &d)?;
            let _ = writeln!(out, "{name}_fit_slope={}", f(fit.slope));
            let _ = writeln!(out, "{name}_fit_intercept={}", f(fit.intercept));
            let _ = writeln!(out, "{name}_fit_r_squared={}", f(fit.r_squared));
        } else {
            let _ = writeln!(out, "{name}_fit=unavailable (fewer than 3 distances above {})", f(FIT_FLOOR));
        }
    }
    let _ = writeln!(out, "backward_within_bound={}", bound_check(&ts, &db, hc.big_c, hc.c, s));
    let _ = writeln!(out, "final_rate_gap={}", f(rate_gap));
    let _ = writeln!(out, "final_period_count_gap={}", f(count_gap));
    let _ = writeln!(out, "rate_within_bound={rate_ok}");
    let _ = writeln!(out, "period_count_within_bound={count_ok}");
    harris_lines(&mut out, &hc);
    write_text(dir, "summary.txt", &out)?;

    let series = [
        Series {
            label: "backward TV",
            points: ts.iter().copied().zip(db.iter().copied()).collect(),
        },
        Series {
            label: "forward weighted TV",
            points: ts.iter().copied().zip(df.iter().copied()).collect(),
        },
        Series {
            label: "bound",
            points: ts.iter().map(|&t| (t, hc.bound(t - s))).collect(),
        },
    ];
    plot(dir, "converge.svg", "Distance to the limit laws", "t", &series, true);
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let k = cfg.kernel.build()?;
    let dir = &cfg.output_dir;
    let sim = &cfg.sim;
    let paths = par_replicas(sim.seed, sim.replicas, |_, rng| {
        simulate_path_with(&k, sim.start, sim.horizon, rng, sim.sampler)
    })?;
    let times = if sim.times.is_empty() { vec![sim.horizon] } else { sim.times.clone() };

    let mut pc = Csv::create(dir, "paths.csv", "replica,k,T_k")?;
    let mut rc = Csv::create(dir, "recurrence.csv", "replica,t,N,X,Y")?;
    for (r, path) in paths.iter().enumerate() {
        for (j, t) in path.arrivals.iter().enumerate() {
            pc.row(&[r.to_string(), (j + 1).to_string(), f(*t)])?;
        }
        for &t in &times {
            let rec = path.recurrence_at(t)?;
            rc.row(&[r.to_string(), f(t), rec.count.to_string(), f(rec.forward), f(rec.backward)])?;
        }
    }
    pc.finish()?;
    rc.finish()
}

pub fn pdmp(cfg: &RunConfig) -> Result<(), CliError> {
    let (k, ph) = kernel_and_phase(cfg)?;
    let dir = &cfg.output_dir;
    let p = &cfg.pdmp;
    let mut rng = RngStream::new(cfg.sim.seed, 0);
    let traj = match p.kind {
        PdmpKind::Forward => simulate_forward_pdmp(&k, (p.x0, p.phi0), 0.0, p.t_end, &mut rng)?,
        PdmpKind::Backward => simulate_backward_pdmp(&k, (p.x0, p.phi0), 0.0, p.t_end, &mut rng)?,
    };
    let mut csv = Csv::create(dir, "pdmp_path.csv", "time,x,phase")?;
    for smp in &traj.samples {
        csv.row(&[f(smp.time), f(smp.x), f(smp.phase)])?;
    }
    csv.finish()?;

    let u_max = cfg.u_max(&k);
    let n_u = (u_max / p.bin).floor() as usize;
    if n_u == 0 {
        return Err(CliError::Config(format!("pdmp.bin {} exceeds u_max {u_max}", p.bin)));
    }
    let occ = occupation_histogram(&traj, n_u as f64 * p.bin, n_u, p.n_phi, p.burn_in)?;
    let (nu_j, mu_j) = joint_limits(&ph.rho, &k, u_max, cfg.phase.tail_tol)?;
    let joint = match p.kind {
        PdmpKind::Forward => mu_j,
        PdmpKind::Backward => nu_j,
    };
    let (cells, out) = joint.cell_masses(p.bin, n_u, p.n_phi)?;
    let mut csv = Csv::create(dir, "occupation.csv", "u_lo,phase_lo,occupation,limit")?;
    for i in 0..n_u {
        for j in 0..p.n_phi {
            csv.row(&[
                f(i as f64 * p.bin),
                f(j as f64 * occ.dphi()),
                f(occ.cell(i, j)),
                f(cells[i * p.n_phi + j]),
            ])?;
        }
    }
    csv.finish()?;
    let d = cell_tv(&occ.cells, occ.discarded, &cells, out)?;
    let mut s = String::new();
    let _ = writeln!(s, "kind={:?}", p.kind);
    let _ = writeln!(s, "jumps={}", traj.jump_times.len());
    let _ = writeln!(s, "window={}", f(occ.window));
    let _ = writeln!(s, "occupation_beyond_u_max={}", f(occ.discarded));
    let _ = writeln!(s, "limit_beyond_u_max={}", f(out));
    let _ = writeln!(s, "cell_tv={}", f(d));
    write_text(dir, "pdmp_summary.txt", &s)
}

fn write_law(dir: &std::path::Path, name: &str, law: &HalfLineDistribution) -> Result<(), CliError> {
    let mut csv = Csv::create(dir, name, "x,density,atom")?;
    let mut rows: Vec<(f64, f64, u8)> = Vec::new();
    for piece in law.pieces() {
        for (i, v) in piece.values.iter().enumerate() {
            rows.push((piece.node(i), *v, 0));
        }
    }
    for a in law.atoms() {
        rows.push((a.location, a.mass, 1));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    for (x, v, atom) in rows {
        csv.row(&[f(x), f(v), atom.to_string()])?;
    }
    csv.finish()
}

pub fn volterra(cfg: &RunConfig) -> Result<(), CliError> {
    let k = cfg.kernel.build()?;
    let dir = &cfg.output_dir;
    let v = &cfg.volterra;
    let init = if v.age == 0.0 { InitialLaw::delta0() } else { InitialLaw::dirac(v.age)? };
    let sol = solve(cfg, &k, &init, v.start, v.t_end)?;
    let mut csv = Csv::create(dir, "rate.csv", "t,r")?;
    for (t, r) in sol.times().iter().zip(&sol.values) {
        csv.row(&[f(*t), f(*r)])?;
    }
    csv.finish()?;
    let (u_max, h_u) = (cfg.u_max(&k), cfg.h_u());
    let mut summary = String::new();
    for (idx, &t) in v.times.iter().enumerate() {
        let back = sol.law_backward(t)?;
        let fwd = sol.law_forward(t, u_max, h_u)?;
        write_law(dir, &format!("law_backward_{idx}.csv"), &back)?;
        write_law(dir, &format!("law_forward_{idx}.csv"), &fwd)?;
        let _ = writeln!(
            summary,
            "index={idx} t={} backward_mass={} backward_atom={} forward_mass={} expected_count={}",
            f(t),
            f(back.mass()),
            f(back.atom_mass()),
            f(fwd.mass()),
            f(sol.expected_count(v.start, t)?)
        );
    }
    write_text(dir, "volterra.txt", &summary)?;
    let series = [Series {
        label: "r(t)",
        points: sol.times().into_iter().zip(sol.values.iter().copied()).collect(),
    }];
    plot(dir, "rate.svg", "Renewal rate", "t", &series, false);
    Ok(())
}

struct Report {
    lines: Vec<String>,
    failed: usize,
}

impl Report {
    fn record(&mut self, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        self.lines.push(format!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" }));
    }
}

/// Perturbation used by `check --corrupt-rho`.
fn corrupted(rho: &PhaseField) -> Result<PhaseField, CliError> {
    let period = rho.grid().period;
    let rho = rho.clone();
    Ok(PhaseField::from_fn(rho.grid(), |t| {
        rho.eval(t) * (1.0 + 0.01 * (2.0 * std::f64::consts::PI * t / period).cos())
    })?)
}

pub fn check(cfg: &RunConfig, corrupt_rho: bool) -> Result<(), CliError> {
    let (k, ph) = kernel_and_phase(cfg)?;
    let period = k.period();
    let rho = if corrupt_rho { corrupted(&ph.rho)? } else { ph.rho.clone() };
    let mut rep = Report {
        lines: Vec::new(),
        failed: 0,
    };

    let kr = verify_kernel(&k, 1000, 1e-8);
    rep.record("kernel", kr.is_ok(), format!("{} samples, {} violations", kr.samples, kr.violations.len()));

    let (a, b) = residual_rho(&rho, &ph.folded);
    rep.record(
        "rho",
        a <= CHECK_RHO_RESIDUAL && b <= CHECK_RHO_RESIDUAL && ph.spread <= CHECK_SPREAD,
        format!("fixed-point residual {a:e}, normalization residual {b:e}, spread {:e}", ph.spread),
    );

    let (u_max, h_u) = (cfg.u_max(&k), cfg.h_u());
    let hc = harris_constants(k.lambda_min(), k.lambda_max(), period)?;
    let (mut mass, mut ident, mut inv, mut pairing) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut lyap = true;
    for &phi in &cfg.phis {
        let nu = nu_infty(&rho, &k, phi, u_max, h_u)?;
        let mu = mu_infty(&rho, &k, phi, u_max, h_u, cfg.phase.tail_tol)?;
        // mass beyond u_max is covered by the tail bounds
        let excess = |m: f64, tail: f64| ((m - 1.0).abs() - tail).max(0.0);
        mass = mass
            .max(excess(nu.mass(), nu.law.tail_bound()))
            .max(excess(mu.mass(), mu.law.tail_bound()));
        let tail_pairing = k.lambda_max() * nu.law.tail_bound();
        pairing = pairing.max(excess(hazard_pairing(&nu, &k) - rho.eval(phi) + 1.0, tail_pairing));
        let op = ForwardOperator::new(&k, phi, cfg.operator_nodes)?;
        ident = ident.max(identity_checks(&rho, &k, &op, u_max, cfg.phase.tail_tol)?.max());
        inv = inv.max(invariance_residual_forward(&mu.law, &op)?);
        lyap &= lyapunov_check(&op, &hc, u_max).holds;
    }
    rep.record("limit masses", mass <= CHECK_MASS, format!("max |mass - 1| beyond the tail bound {mass:e}"));
    rep.record("identities", ident <= CHECK_IDENTITY, format!("max residual {ident:e}"));
    rep.record("invariance", inv <= CHECK_INVARIANCE, format!("max residual {inv:e}"));
    rep.record("hazard pairing", pairing <= CHECK_IDENTITY, format!("max |<nu, lambda> - rho| beyond the tail bound {pairing:e}"));
    rep.record("lyapunov", lyap, format!("drift condition holds: {lyap}"));

    // exact time-t quantities against simulation, three periods in
    let t = 3.0 * period;
    let sol = solve(cfg, &k, &InitialLaw::delta0(), 0.0, t)?;
    let paths = par_replicas(cfg.sim.seed, cfg.check_replicas, |_, rng| {
        simulate_path_with(&k, 0.0, t, rng, cfg.sim.sampler)?.recurrence_at(t)
    })?;
    let hz: Vec<f64> = paths
        .iter()
        .map(|r| k.hazard(t, t - r.backward))
        .collect::<Result<_, _>>()?;
    let n = hz.len() as f64;
    let mean = hz.iter().sum::<f64>() / n;
    let var = hz.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let rate = sol.rate_at(t)?;
    // a constant hazard has zero sample variance; floor the standard error at solver precision
    let z = (mean - rate).abs() / (var / n).sqrt().max(1e-9);
    rep.record("rate vs simulation", z <= CHECK_Z, format!("|z| = {z:.3} at t = {t}"));
    let cut = (u_max / CHECK_BIN).floor().max(1.0) * CHECK_BIN;
    let xs: Vec<f64> = paths.iter().map(|r| r.forward).collect();
    let exact = sol.law_forward(t, u_max, h_u)?.binned(CHECK_BIN, cut)?;
    let d = tv_distance(&empirical_distribution(&xs, CHECK_BIN, cut)?, &exact);
    rep.record("forward law vs simulation", d <= CHECK_TV, format!("binned TV {d:.4}"));

    let mut text = rep.lines.join("\n");
    text.push('\n');
    write_text(&cfg.output_dir, "check.txt", &text)?;
    print!("{text}");
    if rep.failed > 0 {
        return Err(CliError::CheckFailed(format!("{} of {} checks failed", rep.failed, rep.lines.len())));
    }
    Ok(())
}
