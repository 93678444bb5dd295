//! Run configuration: plain `key = value` lines with `#` comments.
//!
//! ```text
//! model   = cahn_hilliard
//! scheme  = leqrk_pc
//! tableau = gauss4
//! nx      = 64
//! dt      = 0.01
//! t_end   = 1
//! forcing = mms
//! ```
//!
//! Defaults: `scheme = leqrk_pc`, `tableau = gauss4`, `pc_iters = 5`,
//! `ny = nx`, `lx = ly = 2 pi`, `lambda = 0.01`, `epsilon = 1`, `gamma = 1`,
//! `initial = mms`, `forcing = none`, `krylov_rel_tol = 1e-12`,
//! `krylov_max_iters = 500`. `model`, `nx`, `dt` and `t_end` are required.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::integrators::{Forcing, SolverConfig};
use crate::models::{ModelKind, ModelParams};
use crate::tableau::{by_name, ButcherTableau};

/// Keys in the order `print-config` writes them.
pub const KEYS: &[&str] = &[
    "model",
    "scheme",
    "tableau",
    "pc_iters",
    "nx",
    "ny",
    "lx",
    "ly",
    "dt",
    "t_end",
    "lambda",
    "epsilon",
    "epsilon_sq",
    "gamma",
    "initial",
    "forcing",
    "krylov_rel_tol",
    "krylov_max_iters",
    "series_path",
    "snapshot_times",
    "snapshot_dir",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Leqrk,
    LeqrkPc,
    Cs2,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Leqrk => "leqrk",
            SchemeKind::LeqrkPc => "leqrk_pc",
            SchemeKind::Cs2 => "cs2",
        }
    }
}

/// Interface parameter, kept in the form it was given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Epsilon(f64),
    Squared(f64),
}

impl Epsilon {
    pub fn squared(self) -> f64 {
        match self {
            Epsilon::Epsilon(e) => e * e,
            Epsilon::Squared(e2) => e2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    /// `sin x sin y`
    Mms,
    /// `0.05 (cos 3x cos 4y + (cos 4x cos 3y)^2 + cos(x - 5y) cos(2x - y))`
    CosineCombo,
    /// `0.1 (sin 3x sin 2y + sin 5x sin 5y)`
    SineCombo,
    /// `amplitude * U(-1, 1)` per node.
    Random {
        amplitude: f64,
        seed: u64,
    },
    File(PathBuf),
}

impl fmt::Display for Initial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Initial::Mms => f.write_str("mms"),
            Initial::CosineCombo => f.write_str("cosine_combo"),
            Initial::SineCombo => f.write_str("sine_combo"),
            Initial::Random { amplitude, seed } => write!(f, "random({amplitude:?}, {seed})"),
            Initial::File(p) => write!(f, "file({})", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub scheme: SchemeKind,
    pub tableau: String,
    pub pc_iters: usize,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dt: f64,
    pub t_end: f64,
    pub lambda: f64,
    pub epsilon: Epsilon,
    pub gamma: f64,
    pub initial: Initial,
    pub forcing: Forcing,
    pub krylov_rel_tol: f64,
    pub krylov_max_iters: usize,
    pub series_path: Option<PathBuf>,
    pub snapshot_times: Vec<f64>,
    pub snapshot_dir: Option<PathBuf>,
}

impl RunConfig {
    /// A config with every default filled in.
    pub fn new(model: ModelKind, nx: usize, dt: f64, t_end: f64) -> Self {
        Self {
            model,
            scheme: SchemeKind::LeqrkPc,
            tableau: "gauss4".into(),
            pc_iters: 5,
            nx,
            ny: nx,
            lx: 2.0 * PI,
            ly: 2.0 * PI,
            dt,
            t_end,
            lambda: 0.01,
            epsilon: Epsilon::Epsilon(1.0),
            gamma: 1.0,
            initial: Initial::Mms,
            forcing: Forcing::None,
            krylov_rel_tol: 1e-12,
            krylov_max_iters: 500,
            series_path: None,
            snapshot_times: Vec::new(),
            snapshot_dir: None,
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            lambda: self.lambda,
            epsilon_sq: self.epsilon.squared(),
            gamma: self.gamma,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            krylov_rel_tol: self.krylov_rel_tol,
            krylov_max_iters: self.krylov_max_iters,
            pc_iters: self.pc_iters,
            ..SolverConfig::default()
        }
    }

    pub fn butcher_tableau(&self) -> Result<ButcherTableau> {
        by_name(&self.tableau).ok_or_else(|| {
            Error::config(0, "tableau", format!("unknown tableau `{}`", self.tableau))
        })
    }

    /// Number of uniform steps to `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Copy with a different step size (sweeps reuse one base config).
    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..self.clone() }
    }

    /// Checks the cross-field rules; `line_of` maps a key to its source line.
    fn validate_with(&self, line_of: &dyn Fn(&str) -> usize) -> Result<()> {
        let err = |key: &str, reason: String| Err(Error::config(line_of(key), key, reason));
        let positive = |key: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                err(key, format!("must be a positive number, got {v}"))
            }
        };
        positive("dt", self.dt)?;
        positive("t_end", self.t_end)?;
        positive("lx", self.lx)?;
        positive("ly", self.ly)?;
        positive("lambda", self.lambda)?;
        match self.epsilon {
            Epsilon::Epsilon(e) => positive("epsilon", e)?,
            Epsilon::Squared(e) => positive("epsilon_sq", e)?,
        }
        positive("krylov_rel_tol", self.krylov_rel_tol)?;
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return err("gamma", format!("must be >= 0, got {}", self.gamma));
        }
        for (key, n) in [("nx", self.nx), ("ny", self.ny)] {
            if n < 2 || n % 2 != 0 {
                return err(key, format!("must be a positive even integer, got {n}"));
            }
        }
        if self.krylov_max_iters == 0 {
            return err("krylov_max_iters", "must be positive".into());
        }
        if by_name(&self.tableau).is_none() {
            return err(
                "tableau",
                format!(
                    "unknown tableau `{}` (expected gauss4 or dirk4)",
                    self.tableau
                ),
            );
        }
        if !is_multiple(self.t_end, self.dt) {
            return err(
                "t_end",
                format!("must be a multiple of dt = {}, got {}", self.dt, self.t_end),
            );
        }
        for &t in &self.snapshot_times {
            if !(t > 0.0 && t <= self.t_end * (1.0 + 1e-12)) {
                return err("snapshot_times", format!("{t} is outside (0, t_end]"));
            }
            if !is_multiple(t, self.dt) {
                return err(
                    "snapshot_times",
                    format!("{t} is not a multiple of dt = {}", self.dt),
                );
            }
        }
        if !self.snapshot_times.is_empty() && self.snapshot_dir.is_none() {
            return err("snapshot_times", "needs snapshot_dir".into());
        }
        let two_pi = |l: f64| (l - 2.0 * PI).abs() <= 1e-12 * 2.0 * PI;
        if self.forcing == Forcing::Mms && !(two_pi(self.lx) && two_pi(self.ly)) {
            return err(
                "forcing",
                "the manufactured solution needs lx = ly = 2 pi".into(),
            );
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(&|_| 0)
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model", self.model.name().into());
        kv("scheme", self.scheme.name().into());
        kv("tableau", self.tableau.clone());
        kv("pc_iters", self.pc_iters.to_string());
        kv("nx", self.nx.to_string());
        kv("ny", self.ny.to_string());
        kv("lx", format!("{:?}", self.lx));
        kv("ly", format!("{:?}", self.ly));
        kv("dt", format!("{:?}", self.dt));
        kv("t_end", format!("{:?}", self.t_end));
        kv("lambda", format!("{:?}", self.lambda));
        match self.epsilon {
            Epsilon::Epsilon(e) => kv("epsilon", format!("{e:?}")),
            Epsilon::Squared(e) => kv("epsilon_sq", format!("{e:?}")),
        }
        kv("gamma", format!("{:?}", self.gamma));
        kv("initial", self.initial.to_string());
        kv(
            "forcing",
            match self.forcing {
                Forcing::None => "none",
                Forcing::Mms => "mms",
            }
            .into(),
        );
        kv("krylov_rel_tol", format!("{:?}", self.krylov_rel_tol));
        kv("krylov_max_iters", self.krylov_max_iters.to_string());
        if let Some(p) = &self.series_path {
            kv("series_path", p.display().to_string());
        }
        if !self.snapshot_times.is_empty() {
            let t: Vec<String> = self
                .snapshot_times
                .iter()
                .map(|t| format!("{t:?}"))
                .collect();
            kv("snapshot_times", t.join(", "));
        }
        if let Some(p) = &self.snapshot_dir {
            kv("snapshot_dir", p.display().to_string());
        }
        s
    }
}

fn is_multiple(t: f64, dt: f64) -> bool {
    let n = (t / dt).round();
    n >= 1.0 && (n * dt - t).abs() <= 1e-9 * t.abs().max(dt)
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::config(line, key, format!("expected a number, got `{v}`")))
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>().map_err(|_| {
        Error::config(
            line,
            key,
            format!("expected a non-negative integer, got `{v}`"),
        )
    })
}

/// `name(arg, ...)` -> `(name, [args])`; a bare word has no arguments.
fn call_syntax(v: &str) -> Option<(&str, Vec<&str>)> {
    match v.find('(') {
        None => Some((v, Vec::new())),
        Some(open) => {
            let inner = v[open + 1..].strip_suffix(')')?;
            Some((v[..open].trim(), inner.split(',').map(str::trim).collect()))
        }
    }
}

fn parse_initial(line: usize, v: &str) -> Result<Initial> {
    let bad = |reason: String| Error::config(line, "initial", reason);
    let (name, args) = call_syntax(v).ok_or_else(|| bad(format!("malformed value `{v}`")))?;
    match (name, args.as_slice()) {
        ("mms", []) => Ok(Initial::Mms),
        ("cosine_combo", []) => Ok(Initial::CosineCombo),
        ("sine_combo", []) => Ok(Initial::SineCombo),
        ("random", [a, seed]) => {
            let amplitude = a
                .parse::<f64>()
                .ok()
                .filter(|a| a.is_finite())
                .ok_or_else(|| bad(format!("bad amplitude `{a}`")))?;
            let seed = seed.parse::<u64>().map_err(|_| bad(format!("bad seed `{seed}`")))?;
            Ok(Initial::Random { amplitude, seed })
        }
        ("file", [p]) if !p.is_empty() => Ok(Initial::File(PathBuf::from(p))),
        _ => Err(bad(format!(
            "expected mms, cosine_combo, sine_combo, random(amplitude, seed) or file(path), got `{v}`"
        ))),
    }
}

/// Parses and validates a config. Unknown or repeated keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut seen: Vec<(String, usize, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| Error::config(line, content, "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::config(line, k, "unknown key"));
        }
        if let Some((_, first, _)) = seen.iter().find(|(key, _, _)| key == k) {
            return Err(Error::config(
                line,
                k,
                format!("already set on line {first}"),
            ));
        }
        seen.push((k.to_string(), line, v.to_string()));
    }
    let get = |k: &str| {
        seen.iter()
            .find(|(key, _, _)| key == k)
            .map(|(_, l, v)| (*l, v.as_str()))
    };
    let line_of = |k: &str| get(k).map_or(0, |(l, _)| l);
    let require = |k: &str| get(k).ok_or_else(|| Error::MissingKey(k.to_string()));

    let (l, v) = require("model")?;
    let model = match v {
        "cahn_hilliard" => ModelKind::CahnHilliard,
        "mbe" => ModelKind::Mbe,
        _ => {
            return Err(Error::config(
                l,
                "model",
                format!("expected cahn_hilliard or mbe, got `{v}`"),
            ))
        }
    };
    let (l, v) = require("nx")?;
    let nx = parse_usize(l, "nx", v)?;
    let (l, v) = require("dt")?;
    let dt = parse_f64(l, "dt", v)?;
    let (l, v) = require("t_end")?;
    let t_end = parse_f64(l, "t_end", v)?;
    let mut cfg = RunConfig::new(model, nx, dt, t_end);

    if let Some((l, v)) = get("scheme") {
        cfg.scheme = match v {
            "leqrk" => SchemeKind::Leqrk,
            "leqrk_pc" => SchemeKind::LeqrkPc,
            "cs2" => SchemeKind::Cs2,
            _ => {
                return Err(Error::config(
                    l,
                    "scheme",
                    format!("expected leqrk, leqrk_pc or cs2, got `{v}`"),
                ))
            }
        };
    }
    if let Some((_, v)) = get("tableau") {
        cfg.tableau = v.to_string();
    }
    if let Some((l, v)) = get("pc_iters") {
        cfg.pc_iters = parse_usize(l, "pc_iters", v)?;
    }
    if let Some((l, v)) = get("ny") {
        cfg.ny = parse_usize(l, "ny", v)?;
    }
    if let Some((l, v)) = get("lx") {
        cfg.lx = parse_f64(l, "lx", v)?;
        cfg.ly = cfg.lx;
    }
    if let Some((l, v)) = get("ly") {
        cfg.ly = parse_f64(l, "ly", v)?;
    }
    if let Some((l, v)) = get("lambda") {
        cfg.lambda = parse_f64(l, "lambda", v)?;
    }
    match (get("epsilon"), get("epsilon_sq")) {
        (Some(_), Some((l, _))) => {
            return Err(Error::config(
                l,
                "epsilon_sq",
                "give either epsilon or epsilon_sq, not both",
            ))
        }
        (Some((l, v)), None) => cfg.epsilon = Epsilon::Epsilon(parse_f64(l, "epsilon", v)?),
        (None, Some((l, v))) => cfg.epsilon = Epsilon::Squared(parse_f64(l, "epsilon_sq", v)?),
        (None, None) => {}
    }
    if let Some((l, v)) = get("gamma") {
        cfg.gamma = parse_f64(l, "gamma", v)?;
    }
    if let Some((l, v)) = get("initial") {
        cfg.initial = parse_initial(l, v)?;
    }
    if let Some((l, v)) = get("forcing") {
        cfg.forcing = match v {
            "none" => Forcing::None,
            "mms" => Forcing::Mms,
            _ => {
                return Err(Error::config(
                    l,
                    "forcing",
                    format!("expected none or mms, got `{v}`"),
                ))
            }
        };
    }
    if let Some((l, v)) = get("krylov_rel_tol") {
        cfg.krylov_rel_tol = parse_f64(l, "krylov_rel_tol", v)?;
    }
    if let Some((l, v)) = get("krylov_max_iters") {
        cfg.krylov_max_iters = parse_usize(l, "krylov_max_iters", v)?;
    }
    if let Some((_, v)) = get("series_path") {
        cfg.series_path = (!v.is_empty()).then(|| PathBuf::from(v));
    }
    if let Some((l, v)) = get("snapshot_times") {
        cfg.snapshot_times = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_f64(l, "snapshot_times", s))
            .collect::<Result<_>>()?;
    }
    if let Some((_, v)) = get("snapshot_dir") {
        cfg.snapshot_dir = (!v.is_empty()).then(|| PathBuf::from(v));
    }
    cfg.validate_with(&line_of)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "model = cahn_hilliard\nnx = 32\ndt = 0.01\nt_end = 1\n";

    #[test]
    fn minimal_config_fills_defaults_and_round_trips() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.gamma, 1.0);
        assert_eq!(cfg.pc_iters, 5);
        assert_eq!(cfg.krylov_rel_tol, 1e-12);
        let text = cfg.to_text();
        assert_eq!(parse_config(&text).unwrap(), cfg);
        assert_eq!(parse_config(&text).unwrap().to_text(), text);
    }

    #[test]
    fn negative_dt_names_the_key() {
        let err = parse_config("model = mbe\nnx = 16\ndt = -0.1\nt_end = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("line 3") && msg.contains("`dt`") && msg.contains("positive"),
            "{msg}"
        );
    }

    #[test]
    fn unknown_and_missing_keys() {
        let err = parse_config(&format!("{MINIMAL}lamda = 2\n")).unwrap_err();
        assert!(err.to_string().contains("line 5") && err.to_string().contains("unknown key"));
        assert!(
            matches!(parse_config("nx = 8\ndt = 1\nt_end = 1"), Err(Error::MissingKey(k)) if k == "model")
        );
    }

    #[test]
    fn benchmark_config_echoes_values() {
        let text = "model = cahn_hilliard  # section 4.1 benchmark\nlambda = 1\nepsilon = 0.01\ngamma = 1\n\
                    lx = 1\nnx = 128\ndt = 1e-4\nt_end = 0.1\ninitial = cosine_combo\nscheme = cs2\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(
            (cfg.lambda, cfg.epsilon, cfg.gamma),
            (1.0, Epsilon::Epsilon(0.01), 1.0)
        );
        assert_eq!((cfg.lx, cfg.ly, cfg.nx, cfg.ny), (1.0, 1.0, 128, 128));
        assert_eq!(cfg.steps(), 1000);
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn initial_forms() {
        let cfg = parse_config(&format!("{MINIMAL}initial = random(0.001, 42)\n")).unwrap();
        assert_eq!(
            cfg.initial,
            Initial::Random {
                amplitude: 0.001,
                seed: 42
            }
        );
        assert_eq!(cfg.initial.to_string(), "random(0.001, 42)");
        assert!(parse_config(&format!("{MINIMAL}initial = random(0.001)\n")).is_err());
    }

    #[test]
    fn rejects_off_grid_times() {
        assert!(parse_config("model = mbe\nnx = 16\ndt = 0.3\nt_end = 1\n").is_err());
        let snap = format!("{MINIMAL}snapshot_times = 0.5, 0.505\nsnapshot_dir = out\n");
        assert!(parse_config(&snap).is_err());
    }
}
