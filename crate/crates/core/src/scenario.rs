//! Plain-text `key = value` configuration files and asset loading.
//!
//! Lines are `key = value`; `#` starts a comment. A file with
//! `kind = sweep` describes a parameter sweep, in which `n`, `p`, `s`,
//! `mode`, `policy` and `seed` take comma-separated lists (`seed` also takes
//! a half-open range such as `0..10`). Anything else describes a single run.
//! Only `n` is required.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::SimConfig;
use crate::geometry::{parse_map, Coord, FloorPlan, MapError, MAX_EXIT_ID};
use crate::mall::{default_plan, generate_synthetic_mall};
use crate::population::PaMessage;
use crate::signage::{parse_sign_layout, preset_layout, Mode, Policy, SignError};

pub const EXPERIMENT_GRID: &str = include_str!("../assets/experiment_grid.cfg");
pub const BASELINE_GRID: &str = include_str!("../assets/baseline_grid.cfg");

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigErrorKind {
    Syntax,
    Unknown,
    Duplicate,
    Missing,
    Range(String),
    Value(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub key: String,
    /// 1-based line, 0 when the key is absent.
    pub line: usize,
    pub kind: ConfigErrorKind,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.line > 0 {
            format!("line {}: ", self.line)
        } else {
            String::new()
        };
        match &self.kind {
            ConfigErrorKind::Syntax => write!(f, "{at}expected `key = value`, got {:?}", self.key),
            ConfigErrorKind::Unknown => write!(f, "{at}unknown key `{}`", self.key),
            ConfigErrorKind::Duplicate => write!(f, "{at}key `{}` given twice", self.key),
            ConfigErrorKind::Missing => write!(f, "missing required key `{}`", self.key),
            ConfigErrorKind::Range(m) => write!(f, "{at}`{}` out of range: {m}", self.key),
            ConfigErrorKind::Value(m) => write!(f, "{at}bad value for `{}`: {m}", self.key),
        }
    }
}

/// A single run: configuration plus where its map and sign layout come from.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: SimConfig,
    pub map: String,
    pub signs: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// Values shared by every run; list-valued keys override per run.
    pub base: SimConfig,
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    pub s: Vec<usize>,
    pub modes: Vec<Mode>,
    pub policies: Vec<Policy>,
    pub seeds: Vec<u64>,
    pub map: String,
    pub signs: String,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConfigFile {
    Run(Scenario),
    Sweep(SweepSpec),
}

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

fn tokenize(text: &str) -> Result<BTreeMap<String, Entry<'_>>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError {
                key: line.to_string(),
                line: i + 1,
                kind: ConfigErrorKind::Syntax,
            });
        };
        let key = k.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(ConfigError {
                key: line.to_string(),
                line: i + 1,
                kind: ConfigErrorKind::Syntax,
            });
        }
        if out.contains_key(&key) {
            return Err(ConfigError {
                key,
                line: i + 1,
                kind: ConfigErrorKind::Duplicate,
            });
        }
        out.insert(
            key,
            Entry {
                line: i + 1,
                value: v.trim(),
            },
        );
    }
    Ok(out)
}

fn value_err(key: &str, line: usize, msg: impl ToString) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        line,
        kind: ConfigErrorKind::Value(msg.to_string()),
    }
}

fn range_err(key: &str, line: usize, msg: impl ToString) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        line,
        kind: ConfigErrorKind::Range(msg.to_string()),
    }
}

fn num<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| value_err(key, line, format!("{v:?}: {e}")))
}

fn float(key: &str, line: usize, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = num(key, line, v)?;
    if x.is_nan() {
        return Err(value_err(key, line, "NaN is not allowed"));
    }
    Ok(x)
}

fn probability(key: &str, line: usize, v: &str) -> Result<f64, ConfigError> {
    let x = float(key, line, v)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(range_err(key, line, format!("{x} is not in [0, 1]")));
    }
    Ok(x)
}

fn exit_id(key: &str, line: usize, v: &str) -> Result<u8, ConfigError> {
    let x: u8 = num(key, line, v)?;
    if !(1..=MAX_EXIT_ID).contains(&x) {
        return Err(range_err(key, line, format!("{x} is not an exit id 1-{MAX_EXIT_ID}")));
    }
    Ok(x)
}

fn boolean(key: &str, line: usize, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(value_err(key, line, format!("{v:?} is not a boolean"))),
    }
}

fn list<T>(key: &str, line: usize, v: &str, f: impl Fn(&str, usize, &str) -> Result<T, ConfigError>) -> Result<Vec<T>, ConfigError> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(key, line, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(value_err(key, line, "empty list"));
    }
    Ok(items)
}

fn seeds(key: &str, line: usize, v: &str) -> Result<Vec<u64>, ConfigError> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (num(key, line, a.trim())?, num(key, line, b.trim())?);
        if a >= b {
            return Err(value_err(key, line, format!("empty seed range {v:?}")));
        }
        return Ok((a..b).collect());
    }
    list(key, line, v, num::<u64>)
}

/// Applies one scalar key to `cfg`; `Ok(false)` when the key is not a
/// simulation key.
fn apply_scalar(cfg: &mut SimConfig, key: &str, line: usize, v: &str) -> Result<bool, ConfigError> {
    let c = &mut cfg.controller;
    match key {
        "n" => cfg.n = num(key, line, v)?,
        "p" => cfg.p = probability(key, line, v)?,
        "s" => cfg.s = num(key, line, v)?,
        "mode" => c.mode = v.parse().map_err(|e| value_err(key, line, e))?,
        "policy" => c.policy = v.parse().map_err(|e| value_err(key, line, e))?,
        "theta" => {
            c.theta = float(key, line, v)?;
            if c.theta <= 0.0 {
                return Err(range_err(key, line, "must be > 0"));
            }
        }
        "delta" => {
            c.delta = float(key, line, v)?;
            if c.delta <= 0.0 {
                return Err(range_err(key, line, "must be > 0"));
            }
        }
        "window" => {
            c.window = num(key, line, v)?;
            if c.window < 2 {
                return Err(range_err(key, line, "must be >= 2"));
            }
        }
        "sensing_radius" => {
            c.sensing_radius = float(key, line, v)?;
            if !(c.sensing_radius > 0.0 && c.sensing_radius.is_finite()) {
                return Err(range_err(key, line, "must be a positive number"));
            }
        }
        "visibility_radius" => {
            cfg.visibility_radius = float(key, line, v)?;
            if !(cfg.visibility_radius >= 0.0 && cfg.visibility_radius.is_finite()) {
                return Err(range_err(key, line, "must be a non-negative number"));
            }
        }
        "pa_step" => cfg.pa_step = num(key, line, v)?,
        "pa_blocked" => cfg.pa.blocked_exit = exit_id(key, line, v)?,
        "pa_designated" => cfg.pa.designated_exit = exit_id(key, line, v)?,
        "seed" => cfg.seed = num(key, line, v)?,
        "max_steps" => {
            cfg.max_steps = num(key, line, v)?;
            if cfg.max_steps < 1 {
                return Err(range_err(key, line, "must be >= 1"));
            }
        }
        "cell_capacity" => {
            cfg.cell_capacity = num(key, line, v)?;
            if cfg.cell_capacity < 1 {
                return Err(range_err(key, line, "must be >= 1"));
            }
        }
        "evacuate_any_exit" => cfg.evacuate_any_exit = boolean(key, line, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn check_pa(cfg: &SimConfig, entries: &BTreeMap<String, Entry<'_>>) -> Result<(), ConfigError> {
    if let Err(e) = PaMessage::new(cfg.pa.blocked_exit, cfg.pa.designated_exit) {
        let line = entries
            .get("pa_designated")
            .or(entries.get("pa_blocked"))
            .map_or(0, |e| e.line);
        return Err(range_err("pa_designated", line, e));
    }
    Ok(())
}

fn required<'a>(entries: &'a BTreeMap<String, Entry<'a>>, key: &str) -> Result<&'a Entry<'a>, ConfigError> {
    entries.get(key).ok_or_else(|| ConfigError {
        key: key.to_string(),
        line: 0,
        kind: ConfigErrorKind::Missing,
    })
}

pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    let entries = tokenize(text)?;
    match entries.get("kind") {
        None => parse_run(&entries).map(ConfigFile::Run),
        Some(e) => match e.value {
            "run" => parse_run(&entries).map(ConfigFile::Run),
            "sweep" => parse_sweep(&entries).map(ConfigFile::Sweep),
            other => Err(value_err("kind", e.line, format!("{other:?} (expected run or sweep)"))),
        },
    }
}

/// Parses a file that must describe a single run.
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    match parse_config(text)? {
        ConfigFile::Run(s) => Ok(s),
        ConfigFile::Sweep(_) => Err(value_err("kind", 0, "expected a run configuration, got a sweep")),
    }
}

/// Parses a file that must describe a sweep.
pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec, ConfigError> {
    match parse_config(text)? {
        ConfigFile::Sweep(s) => Ok(s),
        ConfigFile::Run(_) => Err(value_err("kind", 0, "expected `kind = sweep`")),
    }
}

fn parse_run(entries: &BTreeMap<String, Entry<'_>>) -> Result<Scenario, ConfigError> {
    required(entries, "n")?;
    let mut config = SimConfig::default();
    let mut map = "default".to_string();
    let mut signs = "default".to_string();
    for (key, e) in entries {
        match key.as_str() {
            "kind" => {}
            "map" => map = e.value.to_string(),
            "signs" => signs = e.value.to_string(),
            _ => {
                if !apply_scalar(&mut config, key, e.line, e.value)? {
                    return Err(ConfigError {
                        key: key.clone(),
                        line: e.line,
                        kind: ConfigErrorKind::Unknown,
                    });
                }
            }
        }
    }
    check_pa(&config, entries)?;
    Ok(Scenario { config, map, signs })
}

fn parse_sweep(entries: &BTreeMap<String, Entry<'_>>) -> Result<SweepSpec, ConfigError> {
    let n_entry = required(entries, "n")?;
    let mut base = SimConfig::default();
    let mut spec = SweepSpec {
        base: base.clone(),
        n: list("n", n_entry.line, n_entry.value, num::<usize>)?,
        p: vec![base.p],
        s: vec![base.s],
        modes: vec![base.controller.mode],
        policies: vec![base.controller.policy],
        seeds: vec![base.seed],
        map: "default".into(),
        signs: "default".into(),
        out: None,
    };
    for (key, e) in entries {
        let (line, v) = (e.line, e.value);
        match key.as_str() {
            "kind" | "n" => {}
            "p" => spec.p = list(key, line, v, probability)?,
            "s" => spec.s = list(key, line, v, num::<usize>)?,
            "mode" => spec.modes = list(key, line, v, |k, l, x| x.parse().map_err(|m| value_err(k, l, m)))?,
            "policy" => spec.policies = list(key, line, v, |k, l, x| x.parse().map_err(|m| value_err(k, l, m)))?,
            "seed" => spec.seeds = seeds(key, line, v)?,
            "map" => spec.map = v.to_string(),
            "signs" => spec.signs = v.to_string(),
            "out" => spec.out = Some(PathBuf::from(v)),
            _ => {
                if !apply_scalar(&mut base, key, line, v)? {
                    return Err(ConfigError {
                        key: key.clone(),
                        line,
                        kind: ConfigErrorKind::Unknown,
                    });
                }
            }
        }
    }
    check_pa(&base, entries)?;
    spec.base = base;
    Ok(spec)
}

fn write_scalars(out: &mut String, c: &SimConfig, skip: &[&str]) {
    let ctl = &c.controller;
    let rows: [(&str, String); 17] = [
        ("n", c.n.to_string()),
        ("p", c.p.to_string()),
        ("s", c.s.to_string()),
        ("mode", ctl.mode.to_string()),
        ("policy", ctl.policy.to_string()),
        ("theta", ctl.theta.to_string()),
        ("delta", ctl.delta.to_string()),
        ("window", ctl.window.to_string()),
        ("sensing_radius", ctl.sensing_radius.to_string()),
        ("visibility_radius", c.visibility_radius.to_string()),
        ("pa_step", c.pa_step.to_string()),
        ("pa_blocked", c.pa.blocked_exit.to_string()),
        ("pa_designated", c.pa.designated_exit.to_string()),
        ("seed", c.seed.to_string()),
        ("max_steps", c.max_steps.to_string()),
        ("cell_capacity", c.cell_capacity.to_string()),
        ("evacuate_any_exit", c.evacuate_any_exit.to_string()),
    ];
    for (k, v) in rows.iter().filter(|(k, _)| !skip.contains(k)) {
        let _ = writeln!(out, "{k} = {v}");
    }
}

/// Every simulation key with its value, one per line. Parses back to the
/// same configuration.
pub fn render_config(c: &SimConfig) -> String {
    let mut out = String::new();
    write_scalars(&mut out, c, &[]);
    out
}

pub fn render_scenario(s: &Scenario) -> String {
    let mut out = String::from("kind = run\n");
    write_scalars(&mut out, &s.config, &[]);
    let _ = writeln!(out, "map = {}\nsigns = {}", s.map, s.signs);
    out
}

pub fn render_sweep(spec: &SweepSpec) -> String {
    fn join<T: ToString>(xs: &[T]) -> String {
        xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
    }
    let mut out = String::from("kind = sweep\n");
    let _ = writeln!(out, "n = {}", join(&spec.n));
    let _ = writeln!(out, "p = {}", join(&spec.p));
    let _ = writeln!(out, "s = {}", join(&spec.s));
    let _ = writeln!(out, "mode = {}", join(&spec.modes));
    let _ = writeln!(out, "policy = {}", join(&spec.policies));
    let _ = writeln!(out, "seed = {}", join(&spec.seeds));
    write_scalars(&mut out, &spec.base, &["n", "p", "s", "mode", "policy", "seed"]);
    let _ = writeln!(out, "map = {}\nsigns = {}", spec.map, spec.signs);
    if let Some(o) = &spec.out {
        let _ = writeln!(out, "out = {}", o.display());
    }
    out
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Map {
        path: String,
        #[source]
        source: MapError,
    },
    #[error("{path}: {source}")]
    Signs {
        path: String,
        #[source]
        source: SignError,
    },
    #[error("bad map source {0:?}")]
    BadSource(String),
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `default` for the shipped plan, `synthetic:<seed>` for a generated one,
/// otherwise a map-file path.
pub fn load_map(source: &str) -> Result<FloorPlan, LoadError> {
    if source == "default" {
        return Ok(default_plan());
    }
    if let Some(seed) = source.strip_prefix("synthetic:") {
        let seed = seed.parse().map_err(|_| LoadError::BadSource(source.to_string()))?;
        return Ok(generate_synthetic_mall(seed));
    }
    parse_map(&read(Path::new(source))?).map_err(|e| LoadError::Map {
        path: source.to_string(),
        source: e,
    })
}

/// A preset name (`default`) or a layout-file path.
pub fn load_layout(source: &str) -> Result<Vec<Coord>, LoadError> {
    let wrap = |e| LoadError::Signs {
        path: source.to_string(),
        source: e,
    };
    if source == "default" {
        return preset_layout(source).map_err(wrap);
    }
    parse_sign_layout(&read(Path::new(source))?).map_err(wrap)
}
