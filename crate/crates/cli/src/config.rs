//! Flat `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use manifold_she::analysis::SamplingMode;
use manifold_she::geometry::{Manifold, ManifoldKind};
use serde::{Deserialize, Serialize};

/// Where a setting came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override(s) => write!(f, "override `{s}`"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: Option<Origin>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.origin {
            Some(o) => write!(f, "{o}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoSetting {
    Auto,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaShape {
    /// σ ≡ c1.
    Constant,
    /// Logistic ramp from c1 to c2 with steepest slope d.
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaConfig {
    pub kind: SigmaShape,
    pub c1: f64,
    pub c2: f64,
    pub d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifold: ManifoldKind,
    pub alpha: f64,
    pub rho: RhoSetting,
    pub sigma: SigmaConfig,
    pub n_max: usize,
    pub dt: f64,
    pub t_end: f64,
    pub eps: Vec<f64>,
    pub n_paths: u64,
    pub seed: u64,
    pub mode: SamplingMode,
    pub out: PathBuf,
    /// Solver quadrature resolution; defaults to 2·bandwidth + 1.
    pub grid: Option<usize>,
    /// Snapshot times; defaults to T alone.
    pub record_times: Vec<f64>,
    pub probes: usize,
    pub u0_mode: Option<usize>,
    pub u0_amplitude: f64,
    pub c0_constant: f64,
    /// Enforce the small-ball theorem range α > max(0, d/2 − 1).
    pub theorem: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifold: ManifoldKind::Circle,
            alpha: 0.25,
            rho: RhoSetting::Auto,
            sigma: SigmaConfig { kind: SigmaShape::Constant, c1: 0.2, c2: 0.2, d: 1.0 },
            n_max: 65,
            dt: 1e-3,
            t_end: 1.0,
            eps: vec![0.8, 0.6, 0.45, 0.34],
            n_paths: 1000,
            seed: 0,
            mode: SamplingMode::GaussianExact,
            out: PathBuf::from("."),
            grid: None,
            record_times: Vec::new(),
            probes: 8,
            u0_mode: None,
            u0_amplitude: 0.0,
            c0_constant: 1.0,
            theorem: false,
        }
    }
}

pub const KEYS: &[&str] = &[
    "manifold",
    "alpha",
    "rho",
    "sigma",
    "sigma_c1",
    "sigma_c2",
    "sigma_d",
    "n_max",
    "dt",
    "T",
    "eps",
    "n_paths",
    "seed",
    "mode",
    "out",
    "grid",
    "record_times",
    "probes",
    "u0_mode",
    "u0_amplitude",
    "c0_constant",
    "theorem",
];

/// Settings in the order they were given; later entries win.
#[derive(Clone, Debug, Default)]
pub struct ConfigSource {
    entries: Vec<(String, String, Origin)>,
}

fn fail<T>(origin: Option<&Origin>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { origin: origin.cloned(), message: message.into() })
}

impl ConfigSource {
    /// Parses a config file body: one `key = value` per line, `#` comments.
    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut src = ConfigSource::default();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::Line(i + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return fail(Some(&origin), format!("expected `key = value`, got `{line}`"));
            };
            src.push(k.trim(), v.trim(), origin)?;
        }
        Ok(src)
    }

    /// A `key=value` override from the command line.
    pub fn add_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let origin = Origin::Override(spec.to_string());
        let Some((k, v)) = spec.split_once('=') else {
            return fail(Some(&origin), "expected key=value");
        };
        self.push(k.trim(), v.trim(), origin)
    }

    fn push(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return fail(Some(&origin), format!("unknown key `{key}`"));
        }
        self.entries.push((key.to_string(), value.to_string(), origin));
        Ok(())
    }

    /// Keys given explicitly, with the origin of the winning value.
    pub fn explicit(&self) -> BTreeMap<String, Origin> {
        self.entries.iter().map(|(k, _, o)| (k.clone(), o.clone())).collect()
    }

    pub fn build(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        for (key, value, origin) in &self.entries {
            apply(&mut cfg, key, value, origin)?;
        }
        validate(&cfg, &self.explicit())?;
        Ok(cfg)
    }
}

fn num<T: std::str::FromStr>(v: &str, origin: &Origin, key: &str) -> Result<T, ConfigError> {
    v.parse().or_else(|_| fail(Some(origin), format!("{key}: cannot parse `{v}`")))
}

fn list(v: &str, origin: &Origin, key: &str) -> Result<Vec<f64>, ConfigError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| num(s.trim(), origin, key)).collect()
}

fn apply(cfg: &mut RunConfig, key: &str, v: &str, o: &Origin) -> Result<(), ConfigError> {
    match key {
        "manifold" => {
            cfg.manifold = v.parse().or_else(|_| fail(Some(o), format!("manifold: unknown kind `{v}`")))?
        }
        "alpha" => cfg.alpha = num(v, o, key)?,
        "rho" => {
            cfg.rho = if v == "auto" { RhoSetting::Auto } else { RhoSetting::Value(num(v, o, key)?) }
        }
        "sigma" => {
            cfg.sigma.kind = match v {
                "constant" => SigmaShape::Constant,
                "sigmoid" => SigmaShape::Sigmoid,
                _ => return fail(Some(o), format!("sigma: expected constant or sigmoid, got `{v}`")),
            }
        }
        "sigma_c1" => cfg.sigma.c1 = num(v, o, key)?,
        "sigma_c2" => cfg.sigma.c2 = num(v, o, key)?,
        "sigma_d" => cfg.sigma.d = num(v, o, key)?,
        "n_max" => cfg.n_max = num(v, o, key)?,
        "dt" => cfg.dt = num(v, o, key)?,
        "T" => cfg.t_end = num(v, o, key)?,
        "eps" => cfg.eps = list(v, o, key)?,
        "n_paths" => cfg.n_paths = num(v, o, key)?,
        "seed" => cfg.seed = num(v, o, key)?,
        "mode" => {
            cfg.mode = match v {
                "stepper" => SamplingMode::TimeStepper,
                "exact" => SamplingMode::GaussianExact,
                _ => return fail(Some(o), format!("mode: expected stepper or exact, got `{v}`")),
            }
        }
        "out" => cfg.out = PathBuf::from(v),
        "grid" => cfg.grid = if v == "auto" { None } else { Some(num(v, o, key)?) },
        "record_times" => cfg.record_times = list(v, o, key)?,
        "probes" => cfg.probes = num(v, o, key)?,
        "u0_mode" => cfg.u0_mode = if v == "none" { None } else { Some(num(v, o, key)?) },
        "u0_amplitude" => cfg.u0_amplitude = num(v, o, key)?,
        "c0_constant" => cfg.c0_constant = num(v, o, key)?,
        "theorem" => cfg.theorem = num(v, o, key)?,
        _ => return fail(Some(o), format!("unknown key `{key}`")),
    }
    Ok(())
}

fn validate(cfg: &RunConfig, origins: &BTreeMap<String, Origin>) -> Result<(), ConfigError> {
    let at = |k: &str| origins.get(k);
    let finite_pos = |x: f64| x.is_finite() && x > 0.0;
    let d = Manifold::new(cfg.manifold).dimension() as f64;
    if !(cfg.alpha.is_finite() && cfg.alpha >= 0.0) {
        return fail(at("alpha"), format!("alpha = {} must be finite and nonnegative", cfg.alpha));
    }
    if cfg.alpha <= (d - 2.0) / 2.0 {
        return fail(at("alpha"), format!("alpha = {} violates the Dalang condition alpha > (d-2)/2", cfg.alpha));
    }
    if cfg.theorem && cfg.alpha <= (d / 2.0 - 1.0).max(0.0) {
        return fail(at("alpha"), format!("alpha = {} outside the theorem range alpha > max(0, d/2-1)", cfg.alpha));
    }
    match cfg.rho {
        RhoSetting::Auto if cfg.alpha == 0.0 => return fail(at("rho"), "rho = auto needs alpha > 0"),
        RhoSetting::Value(r) if !(r.is_finite() && r >= 0.0) => {
            return fail(at("rho"), format!("rho = {r} must be finite and nonnegative"))
        }
        _ => {}
    }
    let s = cfg.sigma;
    match s.kind {
        SigmaShape::Constant if !(s.c1.is_finite() && s.c1 >= 0.0) => {
            return fail(at("sigma_c1"), format!("constant sigma needs sigma_c1 >= 0, got {}", s.c1))
        }
        SigmaShape::Sigmoid if !(finite_pos(s.c1) && s.c2.is_finite() && s.c2 >= s.c1 && s.d.is_finite() && s.d >= 0.0) => {
            return fail(
                at("sigma_c2").or(at("sigma_c1")),
                format!("sigmoid sigma needs 0 < C1 <= C2 and D >= 0, got {}, {}, {}", s.c1, s.c2, s.d),
            )
        }
        _ => {}
    }
    if cfg.n_max == 0 {
        return fail(at("n_max"), "n_max must be at least 1");
    }
    if !finite_pos(cfg.dt) {
        return fail(at("dt"), format!("dt = {} must be positive", cfg.dt));
    }
    if !finite_pos(cfg.t_end) {
        return fail(at("T"), format!("T = {} must be positive", cfg.t_end));
    }
    if let Some(e) = cfg.eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return fail(at("eps"), format!("epsilon {e} must lie in (0, 1)"));
    }
    if cfg.n_paths == 0 {
        return fail(at("n_paths"), "n_paths must be at least 1");
    }
    if let Some(t) = cfg.record_times.iter().find(|t| !(**t >= 0.0 && **t <= cfg.t_end)) {
        return fail(at("record_times"), format!("record time {t} outside [0, T]"));
    }
    if cfg.probes == 0 {
        return fail(at("probes"), "probes must be at least 1");
    }
    if !cfg.u0_amplitude.is_finite() {
        return fail(at("u0_amplitude"), "u0_amplitude must be finite");
    }
    if !finite_pos(cfg.c0_constant) {
        return fail(at("c0_constant"), format!("c0_constant = {} must be positive", cfg.c0_constant));
    }
    Ok(())
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        ConfigSource::parse_text(text)?.build()
    }

    /// Every setting as `key = value` lines that parse back to `self`.
    pub fn to_text(&self) -> String {
        let rho = match self.rho {
            RhoSetting::Auto => "auto".to_string(),
            RhoSetting::Value(r) => r.to_string(),
        };
        let sigma = match self.sigma.kind {
            SigmaShape::Constant => "constant",
            SigmaShape::Sigmoid => "sigmoid",
        };
        let mode = match self.mode {
            SamplingMode::TimeStepper => "stepper",
            SamplingMode::GaussianExact => "exact",
        };
        let lines = [
            ("manifold", self.manifold.to_string()),
            ("alpha", self.alpha.to_string()),
            ("rho", rho),
            ("sigma", sigma.into()),
            ("sigma_c1", self.sigma.c1.to_string()),
            ("sigma_c2", self.sigma.c2.to_string()),
            ("sigma_d", self.sigma.d.to_string()),
            ("n_max", self.n_max.to_string()),
            ("dt", self.dt.to_string()),
            ("T", self.t_end.to_string()),
            ("eps", join(&self.eps)),
            ("n_paths", self.n_paths.to_string()),
            ("seed", self.seed.to_string()),
            ("mode", mode.into()),
            ("out", self.out.display().to_string()),
            ("grid", self.grid.map_or("auto".into(), |g| g.to_string())),
            ("record_times", join(&self.record_times)),
            ("probes", self.probes.to_string()),
            ("u0_mode", self.u0_mode.map_or("none".into(), |m| m.to_string())),
            ("u0_amplitude", self.u0_amplitude.to_string()),
            ("c0_constant", self.c0_constant.to_string()),
            ("theorem", self.theorem.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Recovers the configuration embedded in a run manifest.
    pub fn from_manifest(json: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(json)
            .or_else(|e| fail(None, format!("manifest is not valid JSON: {e}")))?;
        let cfg = value.get("config").cloned().ok_or(ConfigError {
            origin: None,
            message: "manifest has no `config` entry".into(),
        })?;
        serde_json::from_value(cfg).or_else(|e| fail(None, format!("manifest config is malformed: {e}")))
    }
}
