#![allow(dead_code)]

use evacsim_core::geometry::{parse_map, Coord, ExitId, FloorPlan};
use evacsim_core::population::Agent;
use rand::Rng;

pub fn exit_symbol(id: ExitId) -> char {
    match id {
        1..=9 => (b'0' + id) as char,
        10..=14 => (b'A' + id - 10) as char,
        _ => panic!("exit id {id} out of range"),
    }
}

/// Distances by repeated relaxation until nothing changes: every walkable
/// cell takes 1 + the minimum over its walkable 4-neighbors.
pub fn relaxation_distances(plan: &FloorPlan, exit: ExitId) -> Vec<Option<u32>> {
    let (w, h) = (plan.width(), plan.height());
    let mut d: Vec<Option<u32>> = vec![None; w * h];
    let src = plan.exit_cell(exit).expect("exit exists");
    d[src.y * w + src.x] = Some(0);
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if !plan.is_walkable(Coord::new(x, y)) {
                    continue;
                }
                let mut best = d[y * w + x];
                let around = [
                    (x as i64, y as i64 - 1),
                    (x as i64 + 1, y as i64),
                    (x as i64, y as i64 + 1),
                    (x as i64 - 1, y as i64),
                ];
                for (nx, ny) in around {
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if !plan.is_walkable(Coord::new(nx, ny)) {
                        continue;
                    }
                    if let Some(v) = d[ny * w + nx] {
                        if best.is_none_or(|b| v + 1 < b) {
                            best = Some(v + 1);
                        }
                    }
                }
                if best != d[y * w + x] {
                    d[y * w + x] = best;
                    changed = true;
                }
            }
        }
        if !changed {
            return d;
        }
    }
}

/// A w×h plan with a wall border, random interior walls and the given
/// exits cut into the border next to a floor cell. Not necessarily connected.
pub fn random_plan<R: Rng>(rng: &mut R, w: usize, h: usize, wall_p: f64, exits: &[ExitId]) -> FloorPlan {
    assert!(w >= 3 && h >= 3);
    let mut g = vec![vec!['#'; w]; h];
    for row in g.iter_mut().take(h - 1).skip(1) {
        for cell in row.iter_mut().take(w - 1).skip(1) {
            if !rng.random_bool(wall_p) {
                *cell = '.';
            }
        }
    }
    g[1][1] = '.';
    let border: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| {
            let edge = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            let corner = (x == 0 || x == w - 1) && (y == 0 || y == h - 1);
            edge && !corner
        })
        .collect();
    for &id in exits {
        loop {
            let (x, y) = border[rng.random_range(0..border.len())];
            if g[y][x] != '#' {
                continue;
            }
            let (ix, iy) = match (x, y) {
                (0, _) => (1, y),
                (_, 0) => (x, 1),
                (_, yy) if yy == h - 1 => (x, h - 2),
                _ => (w - 2, y),
            };
            g[iy][ix] = '.';
            g[y][x] = exit_symbol(id);
            break;
        }
    }
    let text: String = g.iter().map(|r| r.iter().collect::<String>() + "\n").collect();
    parse_map(&text).expect("generated map parses")
}

/// Persons per walkable m² within `radius` of `center`, by looping over every
/// cell of the plan and every agent.
pub fn density_double_loop(plan: &FloorPlan, agents: &[Agent], center: Coord, radius: f64) -> f64 {
    let r2 = radius * radius;
    let inside = |c: Coord| {
        let dx = c.x as f64 - center.x as f64;
        let dy = c.y as f64 - center.y as f64;
        dx * dx + dy * dy <= r2
    };
    let mut area = 0usize;
    for y in 0..plan.height() {
        for x in 0..plan.width() {
            let c = Coord::new(x, y);
            if plan.is_walkable(c) && inside(c) {
                area += 1;
            }
        }
    }
    let mut people = 0usize;
    for a in agents {
        if a.evacuated_at.is_none() && inside(a.pos) {
            people += 1;
        }
    }
    if area == 0 {
        0.0
    } else {
        people as f64 / area as f64
    }
}

/// A random plan holding exits 1 and 7 plus `extra` other exits in which
/// every walkable cell reaches every exit; unreachable floor is walled off
/// and the draw is repeated if an exit ends up cut off.
pub fn connected_plan<R: Rng>(rng: &mut R, w: usize, h: usize, extra: usize) -> FloorPlan {
    loop {
        let mut ids: Vec<ExitId> = vec![1, 7];
        while ids.len() < 2 + extra {
            let id = rng.random_range(2..=14u8);
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        let plan = random_plan(rng, w, h, 0.2, &ids);
        let d = relaxation_distances(&plan, 7);
        let mut text: Vec<Vec<char>> = plan.render().lines().map(|l| l.chars().collect()).collect();
        for (i, dist) in d.iter().enumerate() {
            let (x, y) = (i % w, i / w);
            if dist.is_none() && text[y][x] == '.' {
                text[y][x] = '#';
            }
        }
        let text: String = text.iter().map(|r| r.iter().collect::<String>() + "\n").collect();
        let plan = parse_map(&text).expect("walled plan parses");
        let ok = ids.iter().all(|&id| {
            relaxation_distances(&plan, id)
                .iter()
                .enumerate()
                .all(|(i, v)| v.is_some() || !plan.is_walkable(plan.coord(i)))
        });
        if ok {
            return plan;
        }
    }
}
