//! Flat-namespaced key-value configuration with sections, comments and
//! dotted override keys. Every key is checked against the schema, so typos
//! fail loudly with the offending key named.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use plapmix::flows::{FlowKind, VelocityField};
use plapmix::lab::ExperimentConfig;
use plapmix::mixing::RateFunction;
use plapmix::record::InitSpec;
use plapmix::solver::DtPolicy;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    FloatList,
    Int,
    Uint,
    Word,
}

/// Known keys and their types. `flow.kind`-dependent keys are all declared;
/// consistency is checked when the experiment is assembled.
const SCHEMA: &[(&str, Kind)] = &[
    ("grid.d", Kind::Uint),
    ("grid.n", Kind::Uint),
    ("flow.kind", Kind::Word),
    ("flow.amplitude", Kind::Float),
    ("flow.period", Kind::Float),
    ("flow.velocity_x", Kind::Float),
    ("flow.velocity_y", Kind::Float),
    ("solver.p", Kind::Float),
    ("solver.sigma", Kind::Float),
    ("solver.dt", Kind::Float),
    ("solver.eps_g", Kind::Float),
    ("solver.dt_max", Kind::Float),
    ("nu.list", Kind::FloatList),
    ("s.list", Kind::FloatList),
    ("run.t_max", Kind::Float),
    ("run.horizon", Kind::Float),
    ("run.beta", Kind::Float),
    ("run.workers", Kind::Uint),
    ("init.kind", Kind::Word),
    ("init.k1", Kind::Int),
    ("init.k2", Kind::Int),
    ("init.cos_amp", Kind::Float),
    ("init.sin_amp", Kind::Float),
    ("init.band", Kind::Int),
    ("init.seed", Kind::Uint),
    ("mixing.alpha", Kind::Float),
    ("mixing.horizon", Kind::Float),
    ("mixing.samples", Kind::Uint),
    ("rate.law", Kind::Word),
    ("rate.c", Kind::Float),
    ("rate.q", Kind::Float),
    ("rate.c1", Kind::Float),
    ("rate.c2", Kind::Float),
    ("bounds.nu_list", Kind::FloatList),
];

fn schema_kind(key: &str) -> Option<Kind> {
    SCHEMA.iter().find(|(k, _)| *k == key).map(|(_, k)| *k)
}

fn check_value(key: &str, value: &str) -> Result<(), ConfigError> {
    let kind = schema_kind(key)
        .ok_or_else(|| ConfigError(format!("unknown key `{key}` (not in the schema)")))?;
    let bad = |what: &str| ConfigError(format!("malformed value for `{key}`: `{value}` is not {what}"));
    match kind {
        Kind::Float => value.parse::<f64>().map(|_| ()).map_err(|_| bad("a number")),
        Kind::Int => value.parse::<i64>().map(|_| ()).map_err(|_| bad("an integer")),
        Kind::Uint => value.parse::<u64>().map(|_| ()).map_err(|_| bad("a nonnegative integer")),
        Kind::Word => {
            if value.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') && !value.is_empty() {
                Ok(())
            } else {
                Err(bad("a bare word"))
            }
        }
        Kind::FloatList => {
            if value.is_empty() {
                return Err(bad("a comma-separated list of numbers"));
            }
            for part in value.split(',') {
                part.trim()
                    .parse::<f64>()
                    .map_err(|_| bad("a comma-separated list of numbers"))?;
            }
            Ok(())
        }
    }
}

/// The parsed configuration: dotted keys mapped to raw value strings.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    map: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut map = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = key.trim();
            let full = if section.is_empty() || key.contains('.') {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            let value = normalize_value(value);
            check_value(&full, &value)?;
            map.insert(full, value);
        }
        Ok(Config { map })
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("missing file `{}`: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// Canonical serialization: sections sorted, keys sorted within them.
    /// `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut current = String::new();
        for (key, value) in &self.map {
            let (section, name) = key.split_once('.').unwrap_or(("", key.as_str()));
            if section != current {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{section}]\n"));
                current = section.to_string();
            }
            out.push_str(&format!("{name} = {value}\n"));
        }
        out
    }

    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, value) = spec.split_once('=').ok_or_else(|| {
            ConfigError(format!("override `{spec}` must have the form KEY=VALUE"))
        })?;
        let key = key.trim();
        let value = normalize_value(value);
        check_value(key, &value)?;
        self.map.insert(key.to_string(), value);
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key)
            .ok_or_else(|| ConfigError(format!("missing required key `{key}`")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> f64 {
        self.raw(key).map_or(default, |v| v.parse().unwrap())
    }

    pub fn usize_or(&self, key: &str, default: usize) -> usize {
        self.raw(key).map_or(default, |v| v.parse().unwrap())
    }

    pub fn f64_list(&self, key: &str) -> Option<Vec<f64>> {
        self.raw(key)
            .map(|v| v.split(',').map(|p| p.trim().parse().unwrap()).collect())
    }

    fn flow(&self) -> Result<VelocityField, ConfigError> {
        let d = self.usize_or("grid.d", 2);
        let kind = self.raw("flow.kind").unwrap_or("zero");
        let amplitude = self.f64_or("flow.amplitude", 1.0);
        let flow_kind = match kind {
            "zero" => FlowKind::Zero,
            "translation" => FlowKind::Translation {
                velocity: [self.f64_or("flow.velocity_x", 1.0), self.f64_or("flow.velocity_y", 0.0)],
            },
            "steady_shear" => FlowKind::SteadyShear { amplitude },
            "alternating_shear" => FlowKind::AlternatingShear {
                amplitude,
                period: self.f64_or("flow.period", 1.0),
            },
            "cellular" => FlowKind::Cellular { amplitude },
            other => {
                return Err(ConfigError(format!(
                    "malformed value for `flow.kind`: `{other}` is not one of zero, translation, steady_shear, alternating_shear, cellular"
                )))
            }
        };
        VelocityField::new(d, flow_kind).map_err(|e| ConfigError(format!("flow.kind: {e}")))
    }

    fn init(&self) -> Result<InitSpec, ConfigError> {
        match self.raw("init.kind").unwrap_or("single_mode") {
            "single_mode" => Ok(InitSpec::SingleMode {
                k: [
                    self.raw("init.k1").map_or(1, |v| v.parse().unwrap()),
                    self.raw("init.k2").map_or(0, |v| v.parse().unwrap()),
                ],
                cos_amp: self.f64_or("init.cos_amp", 0.0),
                sin_amp: self.f64_or("init.sin_amp", 1.0),
            }),
            "random_band" => Ok(InitSpec::RandomBand {
                band: self.raw("init.band").map_or(8, |v| v.parse().unwrap()),
                seed: self.raw("init.seed").map_or(42, |v| v.parse().unwrap()),
            }),
            other => Err(ConfigError(format!(
                "malformed value for `init.kind`: `{other}` is not one of single_mode, random_band"
            ))),
        }
    }

    pub fn rate(&self) -> Result<Option<RateFunction>, ConfigError> {
        match self.raw("rate.law") {
            None => Ok(None),
            Some("power") => RateFunction::power(self.f64_or("rate.c", 1.0), self.f64_or("rate.q", 1.0))
                .map(Some)
                .map_err(|e| ConfigError(format!("rate: {e}"))),
            Some("exponential") => {
                RateFunction::exponential(self.f64_or("rate.c1", 1.0), self.f64_or("rate.c2", 1.0))
                    .map(Some)
                    .map_err(|e| ConfigError(format!("rate: {e}")))
            }
            Some(other) => Err(ConfigError(format!(
                "malformed value for `rate.law`: `{other}` is not one of power, exponential"
            ))),
        }
    }

    /// Assembles the experiment description, applying CLI-level overrides for
    /// workers and the random seed.
    pub fn experiment(&self, workers: Option<usize>, seed: Option<u64>) -> Result<ExperimentConfig, ConfigError> {
        let dt_policy = match self.raw("solver.dt") {
            Some(v) => DtPolicy::Fixed { dt: v.parse().unwrap() },
            None => DtPolicy::AdaptiveCfl { sigma: self.f64_or("solver.sigma", 0.5) },
        };
        let mut init = self.init()?;
        if let (Some(seed), InitSpec::RandomBand { band, .. }) = (seed, &init) {
            init = InitSpec::RandomBand { band: *band, seed };
        }
        let config = ExperimentConfig {
            grid_d: self.usize_or("grid.d", 2),
            grid_n: self.usize_or("grid.n", 256),
            flow: self.flow()?,
            p: self.f64_or("solver.p", 3.0),
            nu_list: self
                .f64_list("nu.list")
                .ok_or_else(|| ConfigError("missing required key `nu.list`".into()))?,
            s_list: self.f64_list("s.list").unwrap_or_else(|| vec![0.0]),
            t_max: self.f64_or("run.t_max", 1e6),
            beta: self.f64_or("run.beta", 1.0),
            init,
            dt_policy,
            eps_g: self.f64_or("solver.eps_g", 0.0),
            dt_max: self.f64_or("solver.dt_max", 1e-2),
            workers: workers.unwrap_or_else(|| self.usize_or("run.workers", 2)),
            rate: self.rate()?,
            alpha: self.f64_or("mixing.alpha", 1.0),
        };
        config
            .validate()
            .map_err(|e| ConfigError(format!("invalid experiment: {e}")))?;
        Ok(config)
    }

    pub fn bounds_nu_list(&self) -> Option<Vec<f64>> {
        self.f64_list("bounds.nu_list")
    }

    #[allow(dead_code)]
    pub fn require_key(&self, key: &str) -> Result<&str, ConfigError> {
        self.require(key)
    }
}

fn normalize_value(value: &str) -> String {
    value.trim().split(',').map(str::trim).collect::<Vec<_>>().join(",")
}
