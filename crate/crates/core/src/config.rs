//! Flat `key = value` run configuration, one entry per line, `#` comments.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::engine::{Algorithm, InitialDistribution};
use crate::error::{Error, Result};
use crate::hierarchy::default_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Practical,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(Mode::Exact),
            "practical" => Ok(Mode::Practical),
            _ => Err(format!("expected exact or practical, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub n: usize,
    pub seed: u64,
    /// `r = radius_c * sqrt(ln n / n)`.
    pub radius_c: f64,
    /// Leaf threshold; `(ln n)^8` when unset.
    pub tau: Option<f64>,
    pub a: f64,
    pub gamma: f64,
    pub c1: f64,
    pub c_leaf: f64,
    pub mode: Mode,
    /// Target `|x(t)| / |x(0)|`; also the top-level schedule accuracy.
    pub eps: f64,
    pub delta: f64,
    pub max_ticks: u64,
    pub init: InitialDistribution,
    pub output: Option<PathBuf>,
    /// Ticks between records; `n` when unset.
    pub stride: Option<u64>,
    pub stop_on_root: bool,
    /// Routing failures plus flood gaps tolerated before the run is
    /// reported as faulty.
    pub max_faults: Option<u64>,
    pub event_log: Option<PathBuf>,
}

pub const KEYS: [&str; 19] = [
    "algorithm",
    "n",
    "seed",
    "radius_c",
    "tau",
    "a",
    "gamma",
    "c1",
    "c_leaf",
    "mode",
    "eps",
    "delta",
    "max_ticks",
    "init",
    "output",
    "stride",
    "stop_on_root",
    "max_faults",
    "event_log",
];

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, n: usize, seed: u64) -> Self {
        ExperimentConfig {
            algorithm,
            n,
            seed,
            radius_c: 2.0,
            tau: None,
            a: 1.0,
            gamma: 8.0,
            c1: 4.0,
            c_leaf: 1.0,
            mode: Mode::Practical,
            eps: 0.01,
            delta: 0.01,
            max_ticks: 10_000_000,
            init: InitialDistribution::Spike,
            output: None,
            stride: None,
            stop_on_root: true,
            max_faults: None,
            event_log: None,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or_else(|| default_threshold(self.n))
    }

    pub fn stride(&self) -> u64 {
        self.stride.unwrap_or(self.n as u64)
    }

    /// Parses a config file body, then applies `overrides` (reported as
    /// line 0 in diagnostics).
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut entries = Entries::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(config_err(line, format!("expected key = value, got {content:?}")));
            };
            entries.insert(line, key.trim(), value.trim(), false)?;
        }
        for (key, value) in overrides {
            entries.insert(0, key.trim(), value.trim(), true)?;
        }
        entries.build()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let checks: [(bool, &str); 11] = [
            (self.n >= 2, "n must be at least 2"),
            (self.radius_c > 0.0 && self.radius_c.is_finite(), "radius_c must be positive"),
            (self.tau.is_none_or(|t| t >= 1.0), "tau must be at least 1"),
            (self.a > 0.0, "a must be positive"),
            (self.gamma >= 1.0, "gamma must be at least 1"),
            (self.c1 > 0.0, "c1 must be positive"),
            (self.c_leaf > 0.0, "c_leaf must be positive"),
            (self.eps > 0.0 && self.eps < 1.0, "eps must lie in (0, 1)"),
            (self.delta > 0.0 && self.delta < 1.0, "delta must lie in (0, 1)"),
            (self.stride.is_none_or(|s| s >= 1), "stride must be at least 1"),
            (
                !matches!(self.init, InitialDistribution::Explicit(_)),
                "explicit initial values cannot come from a config",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(msg.to_string()),
            None => Ok(()),
        }
    }
}

fn config_err(line: usize, message: String) -> Error {
    Error::Config { line, message }
}

#[derive(Default)]
struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn insert(&mut self, line: usize, key: &str, value: &str, overriding: bool) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(config_err(line, format!("unknown key {key:?}")));
        }
        if value.is_empty() {
            return Err(config_err(line, format!("{key}: missing value")));
        }
        if let Some((first, _)) = self.map.get(key) {
            if !overriding {
                return Err(config_err(line, format!("{key}: duplicate (first set on line {first})")));
            }
        }
        self.map.insert(key.to_string(), (line, value.to_string()));
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| config_err(*line, format!("{key}: {e} ({raw:?})"))),
        }
    }

    fn build(self) -> Result<ExperimentConfig> {
        let n = self.get::<usize>("n")?.ok_or_else(|| config_err(0, "n is required".into()))?;
        let seed = self
            .get::<u64>("seed")?
            .ok_or_else(|| config_err(0, "seed is required (pass --seed)".into()))?;
        let algorithm = match self.map.get("algorithm") {
            None => Algorithm::Hier,
            Some((line, raw)) => raw.parse().map_err(|e: Error| config_err(*line, e.to_string()))?,
        };
        let mut c = ExperimentConfig::new(algorithm, n, seed);
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.get(stringify!($field))? {
                    c.$field = v;
                }
            };
            ($field:ident, opt) => {
                if let Some(v) = self.get(stringify!($field))? {
                    c.$field = Some(v);
                }
            };
        }
        set!(radius_c);
        set!(tau, opt);
        set!(a);
        set!(gamma);
        set!(c1);
        set!(c_leaf);
        set!(mode);
        set!(eps);
        set!(delta);
        set!(max_ticks);
        set!(output, opt);
        set!(stride, opt);
        set!(stop_on_root);
        set!(max_faults, opt);
        set!(event_log, opt);
        if let Some((line, raw)) = self.map.get("init") {
            c.init = InitialDistribution::from_name(raw)
                .map_err(|e| config_err(*line, e.to_string()))?;
        }
        c.validate().map_err(|msg| {
            let key = msg.split_whitespace().next().unwrap_or("");
            let line = self.map.get(key).map_or(0, |(l, _)| *l);
            config_err(line, msg)
        })?;
        Ok(c)
    }
}
