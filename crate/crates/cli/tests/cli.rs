use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, cmd: &str, sets: &[&str], extra: &[&str]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_renewal"));
    c.arg(cmd).arg("--out").arg(dir);
    for s in sets {
        c.arg("--set").arg(s);
    }
    c.args(extra);
    c.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_csv(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn key_value(path: &Path, key: &str) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
        .unwrap_or_else(|| panic!("{key} missing from {}", path.display()))
}

const FAMILIES: [&str; 4] = ["constant", "time_modulated", "age_time", "age_only"];

#[test]
fn constant_kernel_has_unit_rate() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), "rho", &["kernel.family=constant", "kernel.lambda0=1"], &[]));
    let (h, rows) = read_csv(&dir.path().join("phase.csv"));
    assert_eq!(h, "t_i,pi,rho");
    assert_eq!(rows.len(), 256);
    for r in &rows {
        assert!((r[2] - 1.0).abs() < 1e-8, "{r:?}");
        assert!((r[1] - 1.0).abs() < 1e-8, "{r:?}");
    }
    assert!(dir.path().join("rho.svg").exists());
    let c: f64 = key_value(&dir.path().join("constants.txt"), "harris_c").parse().unwrap();
    // beta = T λ e^{-Tλ} = e^{-1}, so c = -ln(beta)/T = 1
    assert!((c - 1.0).abs() < 1e-12, "{c}");
}

#[test]
fn poisson_rate_follows_the_hazard() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), "rho", &["kernel.family=time_modulated", "kernel.a=1", "kernel.b=0.5"], &[]));
    let (_, rows) = read_csv(&dir.path().join("phase.csv"));
    for r in &rows {
        let exact = 1.0 + 0.5 * (2.0 * PI * r[0]).sin();
        assert!((r[2] - exact).abs() < 1e-4, "{r:?} vs {exact}");
    }
}

#[test]
fn unknown_key_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "rho", &["kernel.lamda0=1"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kernel.lamda0"));

    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[kernel]\nfamily = constant\n[sim]\nsede = 3\n").unwrap();
    let out = run(dir.path(), "simulate", &[], &["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim.sede"));

    let out = run(dir.path(), "rho", &["kernel.T=abc"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kernel.T"));

    let out = run(dir.path(), "rho", &["kernel.family=time_modulated", "kernel.a=1", "kernel.b=2"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "rho", &["phase.max_iter=1", "phase.tol=1e-15"], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_values_are_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(&cfg, "[kernel]\nfamily = constant\nlambda0 = 2\nT = 0.5\n[phase]\nm = 64\n").unwrap();
    ok(&run(dir.path(), "rho", &[], &["--config", cfg.to_str().unwrap()]));
    let (_, rows) = read_csv(&dir.path().join("phase.csv"));
    assert_eq!(rows.len(), 64);
    assert!(rows.iter().all(|r| (r[2] - 2.0).abs() < 1e-8));
    assert!((rows[1][0] - 0.5 / 64.0).abs() < 1e-15);
}

#[test]
fn constant_limits_are_exponential_and_periodic() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), "limits", &["kernel.family=constant", "limits.phi=0.3,1.3"], &[]));
    let (h, rows) = read_csv(&dir.path().join("limits.csv"));
    assert_eq!(h, "phi,u,nu,mu");
    let first: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] == 0.3).collect();
    let second: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] == 1.3).collect();
    assert_eq!(first.len(), second.len());
    for (a, b) in first.iter().zip(&second) {
        let e = (-a[1]).exp();
        assert!((a[2] - e).abs() < 1e-6 && (a[3] - e).abs() < 1e-6, "{a:?}");
        assert_eq!(a[1], b[1]);
        assert!((a[2] - b[2]).abs() < 1e-8 && (a[3] - b[3]).abs() < 1e-8);
    }
    assert!(dir.path().join("limits_0.svg").exists() && dir.path().join("limits_1.svg").exists());
}

#[test]
fn check_passes_on_every_builtin() {
    for fam in FAMILIES {
        let dir = tempfile::tempdir().unwrap();
        let family = format!("kernel.family={fam}");
        let mut sets = vec![family.as_str()];
        if fam == "time_modulated" {
            sets.extend(["kernel.a=1", "kernel.b=0.5"]);
        }
        let out = run(dir.path(), "check", &sets, &[]);
        ok(&out);
        let report = fs::read_to_string(dir.path().join("check.txt")).unwrap();
        assert!(!report.contains("FAIL"), "{fam}:\n{report}");
    }
}

#[test]
fn corrupted_rho_fails_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "check", &[], &["--corrupt-rho"]);
    assert_eq!(out.status.code(), Some(1));
    let report = fs::read_to_string(dir.path().join("check.txt")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("FAIL rho")), "{report}");
}

#[test]
fn simulation_is_reproducible_for_a_seed() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    let sets = ["sim.replicas=200", "sim.horizon=5", "sim.times=1,2.5,5"];
    ok(&run(a.path(), "simulate", &sets, &[]));
    let mut threaded = Command::new(env!("CARGO_BIN_EXE_renewal"));
    threaded.env("RENEWAL_THREADS", "3").arg("simulate").arg("--out").arg(b.path());
    for s in sets {
        threaded.arg("--set").arg(s);
    }
    ok(&threaded.output().unwrap());
    ok(&run(c.path(), "simulate", &[sets[0], sets[1], sets[2], "sim.seed=2"], &[]));
    for name in ["paths.csv", "recurrence.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name}");
        assert_ne!(x, fs::read(c.path().join(name)).unwrap(), "{name}");
    }
    assert_eq!(header(&a.path().join("paths.csv")), "replica,k,T_k");
    let (h, rows) = read_csv(&a.path().join("recurrence.csv"));
    assert_eq!(h, "replica,t,N,X,Y");
    assert_eq!(rows.len(), 600);
    assert!(rows.iter().all(|r| r[3] > 0.0 && r[4] >= 0.0 && r[4] <= r[1]));
}

#[test]
fn inversion_sampler_runs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), "simulate", &["sim.sampler=inversion", "sim.replicas=50"], &[]));
    let (_, rows) = read_csv(&dir.path().join("paths.csv"));
    assert!(rows.windows(2).all(|w| w[0][0] != w[1][0] || w[1][2] > w[0][2]));
}

#[test]
fn constant_volterra_rate_and_laws() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(
        dir.path(),
        "volterra",
        &["kernel.family=constant", "volterra.t_end=3", "volterra.times=2"],
        &[],
    ));
    let (h, rows) = read_csv(&dir.path().join("rate.csv"));
    assert_eq!(h, "t,r");
    assert!(rows.iter().all(|r| (r[1] - 1.0).abs() < 1e-8), "{:?}", rows.last());
    let (h, rows) = read_csv(&dir.path().join("law_backward_0.csv"));
    assert_eq!(h, "x,density,atom");
    // Y_2 has density e^{-y} on [0, 2) and an atom e^{-2} at 2
    let atoms: Vec<&Vec<f64>> = rows.iter().filter(|r| r[2] == 1.0).collect();
    assert_eq!(atoms.len(), 1);
    assert!((atoms[0][0] - 2.0).abs() < 1e-12 && (atoms[0][1] - (-2.0f64).exp()).abs() < 1e-8);
    for r in rows.iter().filter(|r| r[2] == 0.0) {
        assert!((r[1] - (-r[0]).exp()).abs() < 1e-8, "{r:?}");
    }
    assert_eq!(header(&dir.path().join("law_forward_0.csv")), "x,density,atom");
    let mass: f64 = key_value(&dir.path().join("volterra.txt"), "index=0 t=2 backward_mass")
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((mass - 1.0).abs() < 1e-6);
}

#[test]
fn converge_outputs_and_bound_columns() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), "converge", &["converge.periods=4", "volterra.h_u=0.025"], &[]));
    let (h, rows) = read_csv(&dir.path().join("converge.csv"));
    assert_eq!(h, "t,distance,bound_value,within_bound");
    assert_eq!(rows.len(), 4);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
    let text = fs::read_to_string(dir.path().join("converge.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true") || l.ends_with(",false")));
    let (h, rows) = read_csv(&dir.path().join("converge_forward.csv"));
    assert_eq!(h, "t,weighted_distance");
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
    let r2: f64 = key_value(&dir.path().join("summary.txt"), "backward_fit_r_squared").parse().unwrap();
    assert!(r2 > 0.9);
    let gap: f64 = key_value(&dir.path().join("summary.txt"), "final_rate_gap").parse().unwrap();
    assert!(gap < 0.05);
    assert_eq!(key_value(&dir.path().join("summary.txt"), "period_count_within_bound"), "true");
    let r2: f64 = key_value(&dir.path().join("summary.txt"), "forward_weighted_fit_r_squared")
        .parse()
        .unwrap();
    let slope: f64 = key_value(&dir.path().join("summary.txt"), "forward_weighted_fit_slope").parse().unwrap();
    assert!(r2 > 0.99 && slope < 0.0, "{r2} {slope}");
}

#[test]
fn constant_kernel_meets_the_backward_bound() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), "converge", &["kernel.family=constant", "converge.periods=5", "volterra.h_u=0.025"], &[]));
    let summary = dir.path().join("summary.txt");
    assert_eq!(key_value(&summary, "backward_within_bound"), "true");
    assert_eq!(key_value(&summary, "rate_within_bound"), "true");
    assert_eq!(key_value(&summary, "period_count_within_bound"), "true");
    // Y_t is Exp(1) cut at t with the atom e^{-t} at t: distance 2e^{-t}, up to
    // the linear-interpolation error h_u²/8 of the limit density
    let (_, rows) = read_csv(&dir.path().join("converge.csv"));
    for r in &rows {
        assert!((r[1] - 2.0 * (-r[0]).exp()).abs() < 0.025f64.powi(2) / 8.0, "{r:?}");
    }
}

#[test]
fn limit_masses_are_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), "limits", &["limits.phi=0,0.25,0.8", "volterra.u_max=30"], &[]));
    let text = fs::read_to_string(dir.path().join("limits.txt")).unwrap();
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        for key in ["nu_mass=", "mu_mass="] {
            let v: f64 = line.split_whitespace().find_map(|w| w.strip_prefix(key)).unwrap().parse().unwrap();
            assert!((v - 1.0).abs() < 1e-6, "{line}");
        }
    }
}

#[test]
fn pdmp_occupation_is_close_to_the_joint_limit() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), "pdmp", &["pdmp.t_end=20000", "pdmp.n_phi=4"], &[]));
    assert_eq!(header(&dir.path().join("pdmp_path.csv")), "time,x,phase");
    let (h, rows) = read_csv(&dir.path().join("occupation.csv"));
    assert_eq!(h, "u_lo,phase_lo,occupation,limit");
    let total: f64 = rows.iter().map(|r| r[3]).sum();
    assert!(total > 0.999 && total <= 1.0 + 1e-9);
    let tv: f64 = key_value(&dir.path().join("pdmp_summary.txt"), "cell_tv").parse().unwrap();
    assert!(tv < 0.06, "{tv}");

    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), "pdmp", &["pdmp.kind=backward", "pdmp.t_end=2000"], &[]));
    // phase cells must align with the joint grid of 256 phases
    let out = run(dir.path(), "pdmp", &["pdmp.t_end=2000", "pdmp.n_phi=3"], &[]);
    assert_eq!(out.status.code(), Some(2));
}
