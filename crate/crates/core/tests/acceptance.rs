//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. `cargo test -p evacsim-core --test acceptance -- A4` runs a subset.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use evacsim_core::geometry::{Coord, DistanceFields, FloorPlan};
use evacsim_core::scenario::{load_layout, parse_sweep_spec};
use evacsim_core::signage::{Mode, Policy};
use evacsim_core::{default_plan, run, run_sweep, MetricsSeries, SimConfig, Simulation, World};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEEDS: u64 = 10;
const P_GRID: [f64; 4] = [0.3, 0.5, 0.7, 1.0];

struct Ctx {
    world: World,
    layout: Vec<Coord>,
    cache: BTreeMap<String, Vec<MetricsSeries>>,
}

impl Ctx {
    fn new() -> Self {
        Self {
            world: World::new(default_plan()),
            layout: load_layout("default").expect("shipped layout"),
            cache: BTreeMap::new(),
        }
    }

    /// Seeds 0..10 of a configuration, memoised across criteria.
    fn runs(&mut self, c: &SimConfig) -> &[MetricsSeries] {
        let key = format!("{c:?}");
        if !self.cache.contains_key(&key) {
            let ms: Vec<MetricsSeries> = (0..SEEDS)
                .into_par_iter()
                .map(|seed| run(&SimConfig { seed, ..c.clone() }, &self.world, &self.layout).expect("run"))
                .collect();
            self.cache.insert(key.clone(), ms);
        }
        &self.cache[&key]
    }
}

fn config(n: usize, p: f64, s: usize, mode: Mode, policy: Policy) -> SimConfig {
    let mut c = SimConfig { n, p, s, ..Default::default() };
    c.controller.mode = mode;
    c.controller.policy = policy;
    c
}

fn mean_rate(ms: &[MetricsSeries], t: usize) -> f64 {
    ms.iter().map(|m| m.evacuation_rate(t)).sum::<f64>() / ms.len() as f64
}

/// Last step of the seed-averaged curve.
fn curve_len(ms: &[MetricsSeries]) -> usize {
    ms.iter().map(MetricsSeries::final_step).max().unwrap_or(0)
}

/// Mean time to 90%; `None` if any seed never got there.
fn mean_t90(ms: &[MetricsSeries]) -> Option<f64> {
    let ts: Option<Vec<usize>> = ms.iter().map(|m| m.time_to(0.9)).collect();
    ts.map(|ts| ts.iter().sum::<usize>() as f64 / ts.len() as f64)
}

fn fmt_t(t: Option<f64>) -> String {
    t.map_or_else(|| "capped".into(), |v| format!("{v:.1}"))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn a1(ctx: &mut Ctx) -> Outcome {
    let start = Instant::now();
    let base = ctx.runs(&config(4000, 0.3, 0, Mode::Default, Policy::P1)).to_vec();
    let s4 = ctx.runs(&config(4000, 0.3, 4, Mode::Default, Policy::P1)).to_vec();
    let s8 = ctx.runs(&config(4000, 0.3, 8, Mode::Default, Policy::P1)).to_vec();
    let took = start.elapsed();
    let Some(t) = (0..=curve_len(&base)).find(|&t| mean_rate(&base, t) >= 0.5) else {
        return Outcome {
            pass: false,
            detail: "baseline never reaches 50%".into(),
        };
    };
    let (r0, r4, r8) = (mean_rate(&base, t), mean_rate(&s4, t), mean_rate(&s8, t));
    let pass = r8 >= r4 && r4 >= r0 && r8 - r0 >= 0.05 && took < Duration::from_secs(60);
    Outcome {
        pass,
        detail: format!(
            "at step {t}: s=0 {r0:.4}, s=4 {r4:.4}, s=8 {r8:.4} (gap {:.1} pp); 30 runs in {:.1} s",
            (r8 - r0) * 100.0,
            took.as_secs_f64()
        ),
    }
}

fn t90_by_p(ctx: &mut Ctx, mode: Mode, policy: Policy) -> Vec<Option<f64>> {
    P_GRID
        .iter()
        .map(|&p| mean_t90(ctx.runs(&config(4000, p, 8, mode, policy))))
        .collect()
}

fn non_increasing(ts: &[Option<f64>]) -> bool {
    ts.iter().all(Option::is_some) && ts.windows(2).all(|w| w[1] <= w[0])
}

fn a2(ctx: &mut Ctx) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, mode, policy) in [
        ("default", Mode::Default, Policy::P1),
        ("congestion/p1", Mode::Congestion, Policy::P1),
        ("congestion/p2", Mode::Congestion, Policy::P2),
    ] {
        let ts = t90_by_p(ctx, mode, policy);
        pass &= non_increasing(&ts);
        let shown: Vec<String> = ts.into_iter().map(fmt_t).collect();
        parts.push(format!("{name} [{}]", shown.join(", ")));
    }
    Outcome {
        pass,
        detail: format!("mean t90 over p = 0.3, 0.5, 0.7, 1.0: {}", parts.join("; ")),
    }
}

fn a3(ctx: &mut Ctx) -> Outcome {
    let d = t90_by_p(ctx, Mode::Default, Policy::P1);
    let c = t90_by_p(ctx, Mode::Congestion, Policy::P1);
    let mut pass = true;
    let mut parts = Vec::new();
    for ((p, d), c) in P_GRID.iter().zip(&d).zip(&c) {
        pass &= matches!((d, c), (Some(d), Some(c)) if c <= d);
        parts.push(format!("p={p}: {} vs {}", fmt_t(*c), fmt_t(*d)));
    }
    Outcome {
        pass,
        detail: format!("p1 vs default mean t90, {}", parts.join("; ")),
    }
}

fn a4(ctx: &mut Ctx) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [4000, 10000] {
        let p1 = ctx.runs(&config(n, 0.7, 8, Mode::Congestion, Policy::P1)).to_vec();
        let p2 = ctx.runs(&config(n, 0.7, 8, Mode::Congestion, Policy::P2)).to_vec();
        let len = curve_len(&p1).min(curve_len(&p2));
        let from = (3 * len).div_ceil(4);
        let avg = |ms: &[MetricsSeries]| (from..=len).map(|t| mean_rate(ms, t)).sum::<f64>() / (len - from + 1) as f64;
        let (a1, a2) = (avg(&p1), avg(&p2));
        pass &= a2 >= a1;
        parts.push(format!("n={n} steps {from}..={len}: p2 {a2:.4} vs p1 {a1:.4}"));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).expect("read_dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("under root").display().to_string();
                out.insert(rel, fs::read(&path).expect("read"));
            }
        }
    }
    out
}

fn a5(ctx: &mut Ctx) -> Outcome {
    let mut mismatches = Vec::new();
    for (mode, policy) in [
        (Mode::Default, Policy::P1),
        (Mode::Congestion, Policy::P1),
        (Mode::Congestion, Policy::P2),
    ] {
        let c = SimConfig {
            seed: 3,
            ..config(2000, 0.5, 8, mode, policy)
        };
        let a = run(&c, &ctx.world, &ctx.layout).expect("run");
        let b = run(&c, &ctx.world, &ctx.layout).expect("run");
        if a.to_csv() != b.to_csv() || a.sign_log_csv() != b.sign_log_csv() {
            mismatches.push(format!("{mode}/{policy}"));
        }
    }
    let spec = parse_sweep_spec(
        "kind = sweep\nn = 300\np = 0.5\ns = 4, 8\nmode = default, congestion\npolicy = p2\nseed = 0..3\nmap = default\nsigns = default\n",
    )
    .expect("spec");
    let dir = tempfile::tempdir().expect("tempdir");
    let (one, two) = (dir.path().join("serial"), dir.path().join("parallel"));
    run_sweep(&spec, &one, Some(1)).expect("sweep");
    run_sweep(&spec, &two, Some(2)).expect("sweep");
    let (t1, t2) = (read_tree(&one), read_tree(&two));
    if t1 != t2 {
        mismatches.push("sweep output".into());
    }
    Outcome {
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            format!("3 configs run twice and a {}-file sweep at 1 and 2 threads are byte-identical", t1.len())
        } else {
            format!("differences in {}", mismatches.join(", "))
        },
    }
}

/// Checks every step of one run; returns violation messages.
fn check_invariants(world: &World, layout: &[Coord], c: &SimConfig) -> Vec<String> {
    let plan = &world.plan;
    let mut bad = Vec::new();
    let mut sim = Simulation::new(c.clone(), world.clone(), layout).expect("valid config");
    let mut prev_occ = sim.occupancy().to_vec();
    let mut prev_out = 0usize;
    let cap = c.cell_capacity;
    while !sim.is_finished() {
        sim.step().expect("step");
        let t = sim.step_index();
        let inside = sim.agents().iter().filter(|a| !a.is_evacuated()).count();
        let out = sim.agents().len() - inside;
        if inside + out != c.n || inside != sim.remaining() || sim.metrics().records.last().map(|r| r.evacuated) != Some(out) {
            bad.push(format!("step {t}: conservation"));
        }
        if out < prev_out {
            bad.push(format!("step {t}: evacuated count fell"));
        }
        let mut occ = vec![0u32; plan.width() * plan.height()];
        for a in sim.agents().iter().filter(|a| !a.is_evacuated()) {
            occ[plan.index(a.pos)] += 1;
        }
        if occ != sim.occupancy() {
            bad.push(format!("step {t}: occupancy grid out of sync"));
        }
        for (i, (&now, &before)) in occ.iter().zip(&prev_occ).enumerate() {
            if now > cap.max(before) {
                bad.push(format!("step {t}: cell {} holds {now}", plan.coord(i)));
            }
        }
        for s in sim.signs() {
            if s.displayed_exit.is_some_and(|e| sim.blocked().contains(&e)) {
                bad.push(format!("step {t}: sign {} shows a blocked exit", s.id));
            }
        }
        prev_occ = occ;
        prev_out = out;
    }
    let rates = sim.metrics().rates();
    if rates.windows(2).any(|w| w[1] < w[0]) {
        bad.push("rate series decreases".into());
    }
    bad
}

fn a6(_ctx: &mut Ctx) -> Outcome {
    let mut violations = Vec::new();
    for k in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA6_0000 + k);
        let (w, h) = (rng.random_range(8..=18), rng.random_range(8..=18));
        let extra = rng.random_range(0..=3);
        let plan = common::connected_plan(&mut rng, w, h, extra);
        let mut cells = plan.walkable_cells();
        cells.shuffle(&mut rng);
        let s = rng.random_range(0..=4usize.min(cells.len()));
        let layout: Vec<Coord> = cells[..s].to_vec();
        let mut c = SimConfig {
            n: rng.random_range(1..=80),
            p: [0.0, 0.3, 0.5, 0.7, 1.0][rng.random_range(0..5)],
            s,
            seed: rng.random(),
            max_steps: 400,
            cell_capacity: rng.random_range(1..=4),
            pa_step: rng.random_range(0..=3),
            visibility_radius: rng.random_range(2.0..8.0),
            ..Default::default()
        };
        c.controller.sensing_radius = rng.random_range(2.0..8.0);
        c.controller.theta = rng.random_range(0.05..1.5);
        c.controller.delta = rng.random_range(0.005..0.1);
        c.controller.window = rng.random_range(2..=6);
        c.controller.mode = if rng.random_bool(0.5) { Mode::Default } else { Mode::Congestion };
        c.controller.policy = if rng.random_bool(0.5) { Policy::P1 } else { Policy::P2 };
        let world = World::new(plan);
        for v in check_invariants(&world, &layout, &c) {
            violations.push(format!("config {k}: {v}"));
        }

        // Infinite thresholds must reproduce the default display exactly.
        let mut d = c.clone();
        d.controller.mode = Mode::Default;
        let reference = run(&d, &world, &layout).expect("run");
        for policy in [Policy::P1, Policy::P2] {
            let mut e = d.clone();
            e.controller.mode = Mode::Congestion;
            e.controller.policy = policy;
            e.controller.theta = f64::INFINITY;
            e.controller.delta = f64::INFINITY;
            let m = run(&e, &world, &layout).expect("run");
            if m.to_csv() != reference.to_csv() || m.sign_log_csv() != reference.sign_log_csv() {
                violations.push(format!("config {k}: {policy} with infinite threshold differs from default"));
            }
        }
    }
    Outcome {
        pass: violations.is_empty(),
        detail: if violations.is_empty() {
            "50 random configs, every step checked: 0 violations".into()
        } else {
            format!("{} violations, first: {}", violations.len(), violations[0])
        },
    }
}

fn a7(ctx: &mut Ctx) -> Outcome {
    let mut mismatches = Vec::new();
    let plan: &FloorPlan = &ctx.world.plan;
    let oracle = common::relaxation_distances(plan, 7);
    for seed in 0..100u64 {
        let c = SimConfig {
            n: 1,
            s: 0,
            seed,
            ..Default::default()
        };
        let sim = Simulation::new(c, ctx.world.clone(), &[]).expect("sim");
        let start = sim.agents()[0].pos;
        let d = oracle[plan.index(start)].expect("connected") as usize;
        let took = sim.run_to_end().expect("run").time_to(1.0);
        // Standing on the exit still takes the step that registers it.
        if took != Some(d.max(1)) {
            mismatches.push(format!("agent at {start}: {took:?} steps, distance {d}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xA7);
    let mut cells_checked = 0usize;
    for _ in 0..20 {
        let mut ids: Vec<u8> = (1..=14).collect();
        ids.shuffle(&mut rng);
        let k = rng.random_range(1..=4);
        let plan = common::random_plan(&mut rng, 12, 12, 0.3, &ids[..k]);
        let fields = DistanceFields::new(&plan);
        for &id in &ids[..k] {
            let want = common::relaxation_distances(&plan, id);
            for (i, w) in want.iter().enumerate() {
                cells_checked += 1;
                if fields.distance(id, plan.coord(i)) != *w {
                    mismatches.push(format!("exit {id} at {}", plan.coord(i)));
                }
            }
        }
    }
    Outcome {
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            format!("100 single-agent runs and {cells_checked} field cells on 20 random 12x12 plans: 0 mismatches")
        } else {
            format!("{} mismatches, first: {}", mismatches.len(), mismatches[0])
        },
    }
}

fn a8(ctx: &mut Ctx) -> Outcome {
    let c = SimConfig {
        max_steps: 2000,
        ..config(10_000, 0.7, 8, Mode::Congestion, Policy::P2)
    };
    let start = Instant::now();
    let mut sim = Simulation::new(c, ctx.world.clone(), &ctx.layout).expect("sim");
    while !sim.is_finished() {
        sim.step().expect("step");
    }
    let took = start.elapsed();
    Outcome {
        pass: took < Duration::from_secs(30),
        detail: format!(
            "{} steps, {} of 10000 out, {:.2} s",
            sim.step_index(),
            10_000 - sim.remaining(),
            took.as_secs_f64()
        ),
    }
}

type Criterion = (&'static str, &'static str, fn(&mut Ctx) -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("A1", "more signs evacuate faster", a1),
        ("A2", "higher compliance evacuates faster", a2),
        ("A3", "policy 1 no slower than default", a3),
        ("A4", "policy 2 ahead of policy 1 late in the run", a4),
        ("A5", "deterministic output", a5),
        ("A6", "invariants on random configs", a6),
        ("A7", "agreement with brute-force distances", a7),
        ("A8", "10000 agents within 30 s", a8),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut ctx = Ctx::new();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|x| id.contains(x.as_str())) {
            continue;
        }
        ran += 1;
        let o = f(&mut ctx);
        if !o.pass {
            failed += 1;
        }
        println!("{id} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{}/{ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
