use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evacsim_core::engine::{run, World};
use evacsim_core::geometry::{unreachable_exits, DistanceFields};
use evacsim_core::mall::generate_synthetic_mall;
use evacsim_core::population::validate_pa;
use evacsim_core::scenario::{
    load_layout, load_map, parse_config, parse_scenario, parse_sweep_spec, render_scenario, ConfigFile, LoadError,
    Scenario, BASELINE_GRID, EXPERIMENT_GRID,
};
use evacsim_core::signage::{place_signs, Mode, Policy};
use evacsim_core::sweep::{run_sweep, SweepError};
use evacsim_core::SimConfig;

#[derive(Parser)]
#[command(name = "evacsim", version, about = "Crowd evacuation with adaptive signage guidance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single simulation.
    Run(RunArgs),
    /// Run a parameter sweep described by a config file.
    Sweep {
        /// Sweep file (`kind = sweep`).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; overrides `out` in the file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (1 for serial execution).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the full experiment grid plus the no-sign baseline.
    Reproduce {
        #[arg(long)]
        out: PathBuf,
        /// Use seeds 0..K instead of the grid's ten.
        #[arg(long)]
        seeds: Option<u64>,
        /// Restrict to these populations (comma separated).
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print or write the synthetic mall plan for a seed.
    MapGen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a map, sign layout and/or config without running anything.
    Validate {
        #[arg(long)]
        map: Option<String>,
        #[arg(long)]
        signs: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config file; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `default`, `synthetic:<seed>` or a map file.
    #[arg(long)]
    map: Option<String>,
    /// `default` or a sign layout file.
    #[arg(long)]
    signs: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    policy: Option<Policy>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    capacity: Option<u32>,
    #[arg(long)]
    pa_step: Option<usize>,
    /// Metrics CSV; `.signs.csv` and `.config.txt` companions are written
    /// next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn companion(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut scenario = match &args.config {
        Some(path) => parse_scenario(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => Scenario {
            config: SimConfig::default(),
            map: "default".into(),
            signs: "default".into(),
        },
    };
    let c = &mut scenario.config;
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = args.$flag { c.$($field).+ = v; })*
        };
    }
    set!(
        n => n, p => p, s => s, mode => controller.mode, policy => controller.policy,
        theta => controller.theta, delta => controller.delta, window => controller.window,
        seed => seed, max_steps => max_steps, capacity => cell_capacity, pa_step => pa_step,
    );
    if let Some(m) = args.map {
        scenario.map = m;
    }
    if let Some(s) = args.signs {
        scenario.signs = s;
    }

    let world = World::new(load_map(&scenario.map)?);
    let layout = load_layout(&scenario.signs)?;
    let metrics = run(&scenario.config, &world, &layout).map_err(|e| CliError::Config(e.to_string()))?;

    if let Some(out) = &args.out {
        write(out, &metrics.to_csv())?;
        write(&companion(out, ".signs.csv"), &metrics.sign_log_csv())?;
        write(&companion(out, ".config.txt"), &render_scenario(&scenario))?;
    }
    let t = |x: Option<usize>| x.map_or_else(|| "capped".to_string(), |v| v.to_string());
    println!(
        "steps={} final_rate={:.6} t50={} t90={} capped={}",
        metrics.final_step(),
        metrics.final_rate(),
        t(metrics.time_to(0.5)),
        t(metrics.time_to(0.9)),
        metrics.capped
    );
    Ok(())
}

fn cmd_sweep(spec_path: &Path, out: Option<PathBuf>, jobs: Option<usize>) -> Result<(), CliError> {
    let spec = parse_sweep_spec(&read(spec_path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", spec_path.display())))?;
    let out = out
        .or_else(|| spec.out.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out` in the spec".into()))?;
    let result = run_sweep(&spec, &out, jobs)?;
    println!("{} runs written to {}", result.rows.len(), out.display());
    Ok(())
}

fn cmd_reproduce(out: &Path, seeds: Option<u64>, n: Vec<usize>, jobs: Option<usize>) -> Result<(), CliError> {
    let internal = |e: evacsim_core::scenario::ConfigError| CliError::Config(format!("built-in grid: {e}"));
    let mut grid = parse_sweep_spec(EXPERIMENT_GRID).map_err(internal)?;
    let mut baseline = parse_sweep_spec(BASELINE_GRID).map_err(internal)?;
    for spec in [&mut grid, &mut baseline] {
        if let Some(k) = seeds {
            if k == 0 {
                return Err(CliError::Config("--seeds must be at least 1".into()));
            }
            spec.seeds = (0..k).collect();
        }
        if !n.is_empty() {
            spec.n = n.clone();
        }
    }
    let a = run_sweep(&grid, out, jobs)?;
    let b = run_sweep(&baseline, &out.join("baseline"), jobs)?;
    println!(
        "{} grid runs and {} baseline runs written to {}",
        a.rows.len(),
        b.rows.len(),
        out.display()
    );
    Ok(())
}

fn cmd_validate(map: Option<String>, signs: Option<String>, config: Option<PathBuf>) -> Result<(), CliError> {
    let mut scenario = None;
    let mut map = map;
    let mut signs = signs;
    if let Some(path) = &config {
        match parse_config(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))? {
            ConfigFile::Run(s) => {
                map.get_or_insert_with(|| s.map.clone());
                signs.get_or_insert_with(|| s.signs.clone());
                scenario = Some(s);
            }
            ConfigFile::Sweep(s) => {
                map.get_or_insert_with(|| s.map.clone());
                signs.get_or_insert_with(|| s.signs.clone());
            }
        }
    }
    let map = map.unwrap_or_else(|| "default".into());
    let plan = load_map(&map)?;
    let fields = DistanceFields::new(&plan);
    let bad = unreachable_exits(&plan, &fields);
    if !bad.is_empty() {
        let walkable = plan.walkable_cells();
        let details: Vec<String> = bad
            .iter()
            .map(|&id| {
                let from = walkable
                    .iter()
                    .find(|&&c| fields.distance(id, c).is_none())
                    .expect("listed as unreachable");
                format!("exit {id} unreachable from {from}")
            })
            .collect();
        return Err(CliError::Config(format!("{map}: {}", details.join("; "))));
    }
    let layout = load_layout(signs.as_deref().unwrap_or("default"))?;
    if let Some(s) = scenario {
        validate_pa(&plan, &fields, &s.config.pa).map_err(|e| CliError::Config(e.to_string()))?;
        place_signs(&plan, s.config.s, &layout, s.config.visibility_radius)
            .map_err(|e| CliError::Config(e.to_string()))?;
    } else {
        place_signs(&plan, layout.len(), &layout, 10.0).map_err(|e| CliError::Config(e.to_string()))?;
    }
    println!(
        "ok: {} walkable cells, {} exits, {} sign positions",
        plan.walkable_count(),
        plan.exit_count(),
        layout.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep { spec, out, jobs } => cmd_sweep(&spec, out, jobs),
        Command::Reproduce { out, seeds, n, jobs } => cmd_reproduce(&out, seeds, n, jobs),
        Command::MapGen { seed, out } => {
            let text = generate_synthetic_mall(seed).render();
            match out {
                Some(path) => write(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Validate { map, signs, config } => cmd_validate(map, signs, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Config(m) | CliError::Io(m)) = &e;
            eprintln!("error: {m}");
            ExitCode::from(e.code())
        }
    }
}
