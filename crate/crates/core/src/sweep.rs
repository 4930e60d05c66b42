//! Parameter sweeps: expansion, parallel execution and the aggregate table.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{run, MetricsSeries, SimConfig, SimError, World};
use crate::geometry::Coord;
use crate::scenario::{load_layout, load_map, render_sweep, LoadError, SweepSpec};
use crate::signage::{Mode, Policy};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("configuration {config_id}: {source}")]
    Run {
        config_id: String,
        #[source]
        source: SimError,
    },
    #[error("sweep has no seeds")]
    NoSeeds,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

impl SweepError {
    pub fn is_io(&self) -> bool {
        matches!(self, SweepError::Io { .. } | SweepError::Load(LoadError::Io { .. }))
    }
}

/// Directory name for one configuration, e.g. `n4000_p0.3_s8_default_p1`.
pub fn config_id(c: &SimConfig) -> String {
    format!("n{}_p{}_s{}_{}_{}", c.n, c.p, c.s, c.controller.mode, c.controller.policy)
}

/// Every (n, p, s, mode, policy) combination in sorted order, seed unset.
pub fn expand(spec: &SweepSpec) -> Vec<SimConfig> {
    let mut n = spec.n.clone();
    n.sort_unstable();
    n.dedup();
    let mut p = spec.p.clone();
    p.sort_by(f64::total_cmp);
    p.dedup();
    let mut s = spec.s.clone();
    s.sort_unstable();
    s.dedup();
    let mut modes = spec.modes.clone();
    modes.sort();
    modes.dedup();
    let mut policies = spec.policies.clone();
    policies.sort();
    policies.dedup();

    let mut out = Vec::new();
    for &n in &n {
        for &p in &p {
            for &s in &s {
                for &mode in &modes {
                    for &policy in &policies {
                        let mut c = spec.base.clone();
                        c.n = n;
                        c.p = p;
                        c.s = s;
                        c.controller.mode = mode;
                        c.controller.policy = policy;
                        out.push(c);
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub p: f64,
    pub s: usize,
    pub mode: Mode,
    pub policy: Policy,
    pub seed: u64,
    pub final_rate: f64,
    pub t50: Option<usize>,
    pub t90: Option<usize>,
    pub steps: usize,
    pub capped: bool,
    pub theta: f64,
    pub delta: f64,
    pub window: usize,
}

impl SweepRow {
    pub fn from_metrics(m: &MetricsSeries) -> Self {
        let c = &m.config;
        Self {
            n: c.n,
            p: c.p,
            s: c.s,
            mode: c.controller.mode,
            policy: c.controller.policy,
            seed: c.seed,
            final_rate: m.final_rate(),
            t50: m.time_to(0.5),
            t90: m.time_to(0.9),
            steps: m.final_step(),
            capped: m.capped,
            theta: c.controller.theta,
            delta: c.controller.delta,
            window: c.controller.window,
        }
    }

    fn sort_key(&self) -> (usize, u64, usize, Mode, Policy, u64) {
        (self.n, self.p.to_bits(), self.s, self.mode, self.policy, self.seed)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let t = |x: Option<usize>| x.map_or_else(|| "capped".to_string(), |v| v.to_string());
        let mut out =
            String::from("n,p,s,mode,policy,seed,final_rate,t50,t90,steps,capped,theta,delta,window\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.2},{},{},{},{},{:.6},{},{},{},{},{},{},{}",
                r.n,
                r.p,
                r.s,
                r.mode,
                r.policy,
                r.seed,
                r.final_rate,
                t(r.t50),
                t(r.t90),
                r.steps,
                r.capped,
                r.theta,
                r.delta,
                r.window
            );
        }
        out
    }
}

fn write(path: &Path, contents: &str) -> Result<(), SweepError> {
    fs::write(path, contents).map_err(|source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs every (configuration, seed) pair on up to `jobs` threads (all
/// cores when `None`) and writes `<out>/<config-id>/seed<k>.csv`, its
/// `seed<k>.signs.csv` companion, `<out>/aggregate.csv` and
/// `<out>/config-echo.txt`. Every configuration is validated before any
/// run starts.
pub fn run_sweep(spec: &SweepSpec, out: &Path, jobs: Option<usize>) -> Result<SweepResult, SweepError> {
    if spec.seeds.is_empty() {
        return Err(SweepError::NoSeeds);
    }
    let world = World::new(load_map(&spec.map)?);
    let layout = load_layout(&spec.signs)?;
    let configs = expand(spec);
    for c in &configs {
        validate_against(c, &world, &layout)?;
    }

    let mkdir = |p: &Path| {
        fs::create_dir_all(p).map_err(|source| SweepError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    mkdir(out)?;
    for c in &configs {
        mkdir(&out.join(config_id(c)))?;
    }

    let tasks: Vec<SimConfig> = configs
        .iter()
        .flat_map(|c| {
            spec.seeds.iter().map(move |&seed| SimConfig {
                seed,
                ..c.clone()
            })
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let mut rows = pool.install(|| {
        tasks
            .par_iter()
            .map(|c| {
                let id = config_id(c);
                let m = run(c, &world, &layout).map_err(|source| SweepError::Run {
                    config_id: id.clone(),
                    source,
                })?;
                let dir = out.join(&id);
                write(&dir.join(format!("seed{}.csv", c.seed)), &m.to_csv())?;
                write(&dir.join(format!("seed{}.signs.csv", c.seed)), &m.sign_log_csv())?;
                Ok(SweepRow::from_metrics(&m))
            })
            .collect::<Result<Vec<_>, SweepError>>()
    })?;
    rows.sort_by_key(SweepRow::sort_key);

    let result = SweepResult { rows };
    write(&out.join("aggregate.csv"), &result.to_csv())?;
    write(&out.join("config-echo.txt"), &render_sweep(spec))?;
    Ok(result)
}

fn validate_against(c: &SimConfig, world: &World, layout: &[Coord]) -> Result<(), SweepError> {
    let wrap = |source| SweepError::Run {
        config_id: config_id(c),
        source,
    };
    c.validate().map_err(wrap)?;
    crate::population::validate_pa(&world.plan, &world.fields, &c.pa).map_err(|e| wrap(e.into()))?;
    crate::signage::place_signs(&world.plan, c.s, layout, c.visibility_radius).map_err(|e| wrap(e.into()))?;
    Ok(())
}
