//! INI run configuration. Every key has a default; unknown sections or keys
//! are rejected so that typos never pass silently.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use renewal_core::kernel::{make_age_only, make_age_time, make_constant, make_time_modulated};
use renewal_core::phasechain::PhaseSettings;
use renewal_core::simulate::{PdmpKind, Sampler};
use renewal_core::KernelHandle;

use crate::CliError;

const KNOWN: &[(&str, &[&str])] = &[
    ("kernel", &["family", "T", "a", "b", "d", "lambda0"]),
    ("phase", &["m", "tail_tol", "tol", "max_iter", "spread_tol"]),
    ("volterra", &["h", "t_end", "u_max", "h_u", "s", "age", "times", "extrapolate"]),
    ("limits", &["phi", "operator_nodes"]),
    ("converge", &["s", "periods"]),
    ("sim", &["seed", "replicas", "horizon", "start", "sampler", "times"]),
    ("pdmp", &["kind", "x0", "phi0", "t_end", "burn_in", "bin", "n_phi"]),
    ("check", &["replicas"]),
    ("output", &["dir"]),
];

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Constant { lambda0: f64 },
    TimeModulated { a: f64, b: f64 },
    AgeTime { a: f64, b: f64, d: f64 },
    AgeOnly { a: f64, b: f64, d: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub family: Family,
    pub period: f64,
}

impl KernelConfig {
    pub fn build(&self) -> Result<KernelHandle, CliError> {
        let t = self.period;
        let k = match self.family {
            Family::Constant { lambda0 } => make_constant(lambda0, t),
            Family::TimeModulated { a, b } => make_time_modulated(a, b, t),
            Family::AgeTime { a, b, d } => make_age_time(a, b, t, d),
            Family::AgeOnly { a, b, d } => make_age_only(a, b, d, t),
        };
        k.map_err(|e| CliError::Config(format!("kernel: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolterraConfig {
    pub h: f64,
    pub t_end: f64,
    /// `None` means `max(10/λ_min, 5T)`.
    pub u_max: Option<f64>,
    /// `None` means `T/100`.
    pub h_u: Option<f64>,
    pub start: f64,
    /// Initial age at `start`; 0 means an event at `start`.
    pub age: f64,
    /// Times at which the `volterra` command writes the two laws.
    pub times: Vec<f64>,
    /// Richardson-extrapolate the rate (two solves at `h` and `h/2`).
    pub extrapolate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub replicas: usize,
    pub horizon: f64,
    pub start: f64,
    pub sampler: Sampler,
    /// Recurrence dump times; empty means the horizon only.
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdmpConfig {
    pub kind: PdmpKind,
    pub x0: f64,
    pub phi0: f64,
    pub t_end: f64,
    pub burn_in: f64,
    pub bin: f64,
    pub n_phi: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kernel: KernelConfig,
    pub phase: PhaseSettings,
    pub volterra: VolterraConfig,
    pub phis: Vec<f64>,
    pub operator_nodes: usize,
    pub converge_start: f64,
    pub converge_periods: usize,
    pub sim: SimConfig,
    pub pdmp: PdmpConfig,
    pub check_replicas: usize,
    pub output_dir: PathBuf,
}

/// Raw `section.key -> value` pairs after merging file and overrides.
#[derive(Debug, Default)]
struct Raw(BTreeMap<(String, String), String>);

impl Raw {
    fn insert(&mut self, section: &str, key: &str, value: &str) -> Result<(), CliError> {
        let Some((_, keys)) = KNOWN.iter().find(|(s, _)| *s == section) else {
            return Err(CliError::Config(format!("unknown section [{section}] (key {section}.{key})")));
        };
        if !keys.contains(&key) {
            return Err(CliError::Config(format!("unknown key {section}.{key}")));
        }
        self.0.insert((section.to_string(), key.to_string()), value.trim().to_string());
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.0.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    fn num<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, CliError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("{section}.{key}: cannot parse {v:?}"))),
        }
    }

    fn opt_num(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        match self.get(section, key) {
            None | Some("") | Some("auto") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("{section}.{key}: cannot parse {v:?}"))),
        }
    }

    fn list(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.get(section, key) {
            None => Ok(default.to_vec()),
            Some("") => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|_| CliError::Config(format!("{section}.{key}: cannot parse {x:?}")))
                })
                .collect(),
        }
    }
}

fn split_key(full: &str) -> Result<(&str, &str), CliError> {
    full.split_once('.')
        .ok_or_else(|| CliError::Config(format!("override key {full:?} must look like section.key")))
}

impl RunConfig {
    /// Reads `path` (if any), then applies `section.key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut raw = Raw::default();
        if let Some(p) = path {
            let ini = Ini::load_from_file(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            for (section, props) in ini.iter() {
                let Some(section) = section else {
                    if let Some((key, _)) = props.iter().next() {
                        return Err(CliError::Config(format!("key {key} outside of any section")));
                    }
                    continue;
                };
                for (key, value) in props.iter() {
                    raw.insert(section, key, value)?;
                }
            }
        }
        for o in overrides {
            let (full, value) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {o:?} must look like section.key=value")))?;
            let (section, key) = split_key(full.trim())?;
            raw.insert(section, key, value)?;
        }
        Self::from_raw(&raw)
    }

    fn from_raw(raw: &Raw) -> Result<Self, CliError> {
        let period = raw.num("kernel", "T", 1.0)?;
        let a = raw.num("kernel", "a", 0.5)?;
        let b = raw.num("kernel", "b", 1.0)?;
        let d = raw.num("kernel", "d", 1.0)?;
        let family = match raw.get("kernel", "family").unwrap_or("age_time") {
            "constant" => Family::Constant {
                lambda0: raw.num("kernel", "lambda0", 1.0)?,
            },
            "time_modulated" => Family::TimeModulated { a, b },
            "age_time" => Family::AgeTime { a, b, d },
            "age_only" => Family::AgeOnly { a, b, d },
            other => {
                return Err(CliError::Config(format!(
                    "kernel.family: unknown family {other:?} (constant, time_modulated, age_time, age_only)"
                )))
            }
        };
        let defaults = PhaseSettings::default();
        let phase = PhaseSettings {
            m: raw.num("phase", "m", defaults.m)?,
            tail_tol: raw.num("phase", "tail_tol", defaults.tail_tol)?,
            tol: raw.num("phase", "tol", defaults.tol)?,
            max_iter: raw.num("phase", "max_iter", defaults.max_iter)?,
            spread_tol: raw.num("phase", "spread_tol", defaults.spread_tol)?,
        };
        let sampler = match raw.get("sim", "sampler").unwrap_or("thinning") {
            "thinning" => Sampler::Thinning,
            "inversion" => Sampler::Inversion,
            other => return Err(CliError::Config(format!("sim.sampler: unknown sampler {other:?}"))),
        };
        let kind = match raw.get("pdmp", "kind").unwrap_or("forward") {
            "forward" => PdmpKind::Forward,
            "backward" => PdmpKind::Backward,
            other => return Err(CliError::Config(format!("pdmp.kind: unknown kind {other:?}"))),
        };
        let cfg = RunConfig {
            kernel: KernelConfig { family, period },
            phase,
            volterra: VolterraConfig {
                h: raw.num("volterra", "h", 2e-3)?,
                t_end: raw.num("volterra", "t_end", 10.0)?,
                u_max: raw.opt_num("volterra", "u_max")?,
                h_u: raw.opt_num("volterra", "h_u")?,
                start: raw.num("volterra", "s", 0.0)?,
                age: raw.num("volterra", "age", 0.0)?,
                times: raw.list("volterra", "times", &[])?,
                extrapolate: raw.num("volterra", "extrapolate", true)?,
            },
            phis: raw.list("limits", "phi", &[0.0])?,
            operator_nodes: raw.num("limits", "operator_nodes", 100)?,
            converge_start: raw.num("converge", "s", 0.0)?,
            converge_periods: raw.num("converge", "periods", 10)?,
            sim: SimConfig {
                seed: raw.num("sim", "seed", 1)?,
                replicas: raw.num("sim", "replicas", 1000)?,
                horizon: raw.num("sim", "horizon", 10.0)?,
                start: raw.num("sim", "start", 0.0)?,
                sampler,
                times: raw.list("sim", "times", &[])?,
            },
            pdmp: PdmpConfig {
                kind,
                x0: raw.num("pdmp", "x0", 0.0)?,
                phi0: raw.num("pdmp", "phi0", 0.0)?,
                t_end: raw.num("pdmp", "t_end", 1e4)?,
                burn_in: raw.num("pdmp", "burn_in", 10.0)?,
                bin: raw.num("pdmp", "bin", 0.25)?,
                n_phi: raw.num("pdmp", "n_phi", 8)?,
            },
            check_replicas: raw.num("check", "replicas", 20_000)?,
            output_dir: PathBuf::from(raw.get("output", "dir").unwrap_or("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.kernel.period > 0.0 && self.kernel.period.is_finite()) {
            return bad(format!("kernel.T must be positive, got {}", self.kernel.period));
        }
        if self.phase.m < 4 {
            return bad(format!("phase.m must be at least 4, got {}", self.phase.m));
        }
        if !(self.phase.tail_tol > 0.0 && self.phase.tail_tol < 1.0) {
            return bad(format!("phase.tail_tol must lie in (0, 1), got {}", self.phase.tail_tol));
        }
        if !(self.volterra.h > 0.0 && self.volterra.t_end > 0.0) {
            return bad("volterra.h and volterra.t_end must be positive".into());
        }
        if !(self.volterra.t_end > self.volterra.start) || !(self.volterra.age >= 0.0) {
            return bad("volterra.t_end must exceed volterra.s and volterra.age must be non-negative".into());
        }
        if self.volterra.times.iter().any(|&t| t < self.volterra.start || t > self.volterra.t_end) {
            return bad("volterra.times must lie in [volterra.s, volterra.t_end]".into());
        }
        if let Some(h_u) = self.volterra.h_u {
            let per = self.kernel.period / h_u;
            if !(h_u > 0.0) || (per - per.round()).abs() > 1e-9 * per {
                return bad(format!("volterra.h_u = {h_u} must divide kernel.T = {}", self.kernel.period));
            }
        }
        if self.sim.replicas == 0 || self.check_replicas == 0 {
            return bad("sim.replicas and check.replicas must be positive".into());
        }
        if !(self.sim.horizon > self.sim.start) {
            return bad(format!("sim.horizon {} must exceed sim.start {}", self.sim.horizon, self.sim.start));
        }
        if self.sim.times.iter().any(|&t| t < self.sim.start || t > self.sim.horizon) {
            return bad("sim.times must lie in [sim.start, sim.horizon]".into());
        }
        if self.converge_periods < 3 {
            return bad("converge.periods must be at least 3 for a decay fit".into());
        }
        if !(self.pdmp.t_end > self.pdmp.burn_in && self.pdmp.bin > 0.0 && self.pdmp.n_phi > 0) {
            return bad("pdmp.t_end must exceed pdmp.burn_in, with positive bin and n_phi".into());
        }
        Ok(())
    }

    pub fn h_u(&self) -> f64 {
        self.volterra.h_u.unwrap_or(self.kernel.period / 100.0)
    }

    /// Limit-law support, rounded up to a whole number of `h_u` steps.
    pub fn u_max(&self, k: &KernelHandle) -> f64 {
        let raw = self
            .volterra
            .u_max
            .unwrap_or_else(|| renewal_core::asymptotics::default_u_max(k));
        let h = self.h_u();
        (raw / h).ceil() * h
    }
}
