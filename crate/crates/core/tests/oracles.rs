mod common;

use std::collections::BTreeSet;

use evacsim_core::engine::{run, SimConfig, Simulation, World};
use evacsim_core::geometry::{Coord, DistanceFields, ExitId};
use evacsim_core::population::PaMessage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn nearest_exit_matches_min_over_oracle_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    for _ in 0..20 {
        let mut ids: Vec<ExitId> = (1..=14).collect();
        ids.shuffle(&mut rng);
        let exits = &ids[..3];
        let plan = common::random_plan(&mut rng, 12, 12, 0.25, exits);
        let fields = DistanceFields::new(&plan);
        let oracle: Vec<(ExitId, Vec<Option<u32>>)> =
            exits.iter().map(|&e| (e, common::relaxation_distances(&plan, e))).collect();
        let cells = plan.walkable_cells();
        for _ in 0..20 {
            let c = cells[rng.random_range(0..cells.len())];
            let blocked: BTreeSet<ExitId> = if rng.random_bool(0.3) { BTreeSet::from([exits[0]]) } else { BTreeSet::new() };
            let want = oracle
                .iter()
                .filter(|(e, _)| !blocked.contains(e))
                .filter_map(|(e, d)| d[plan.index(c)].map(|d| (d, *e)))
                .min();
            let got = fields.nearest_exit(c, &blocked).ok();
            assert_eq!(got, want.map(|(_, e)| e), "cell {c} blocked {blocked:?}");
        }
    }
}

#[test]
fn single_agent_paths_on_random_plans_follow_bfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(158);
    let plan = common::connected_plan(&mut rng, 12, 12, 2);
    let world = World::new(plan);
    let oracle = common::relaxation_distances(&world.plan, 7);
    for seed in 0..100 {
        let c = SimConfig {
            n: 1,
            s: 0,
            seed,
            ..Default::default()
        };
        let sim = Simulation::new(c, world.clone(), &[]).unwrap();
        let start = sim.agents()[0].pos;
        let d = oracle[world.plan.index(start)].unwrap() as usize;
        let m = sim.run_to_end().unwrap();
        assert_eq!(m.time_to(1.0), Some(d.max(1)), "start {start}");
    }
}

#[test]
fn rate_jumps_at_distance_plus_announcement_step() {
    // Corridor with the agent five cells from exit 7.
    let world = World::new(evacsim_core::parse_map("1......7").unwrap());
    for pa_step in [0, 1, 4] {
        let mut found = false;
        for seed in 0..200 {
            let c = SimConfig {
                n: 1,
                s: 0,
                seed,
                pa_step,
                pa: PaMessage::new(1, 7).unwrap(),
                ..Default::default()
            };
            let sim = Simulation::new(c.clone(), world.clone(), &[]).unwrap();
            if sim.agents()[0].pos != Coord::new(2, 0) {
                continue;
            }
            found = true;
            let m = run(&c, &world, &[]).unwrap();
            let rates = m.rates();
            let t = 5 + pa_step;
            assert!(rates[..t].iter().all(|&r| r == 0.0), "{rates:?}");
            assert_eq!(rates[t], 1.0);
            break;
        }
        assert!(found);
    }
}
