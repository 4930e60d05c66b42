//! Synthetic underground-mall floor plan and the frozen default assets.
//!
//! Layout: a 5 m wide east-west concourse crossed by six 3 m wide
//! north-south corridors, with seeded shop halls opening onto the concourse
//! between corridors. Exits sit on the outer wall, numbered clockwise from
//! the north-west: 1-6 at the north ends of the corridors, 7 at the east end
//! of the concourse, 8-13 at the south ends of the corridors (east to west)
//! and 14 at the west end of the concourse.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{parse_map, CellKind, Coord, ExitId, FloorPlan};

pub const MALL_WIDTH: usize = 122;
pub const MALL_HEIGHT: usize = 51;
pub const MALL_WALKABLE_CELLS: usize = 4000;
pub const MALL_EXITS: usize = 14;

const CONCOURSE_ROWS: std::ops::RangeInclusive<usize> = 23..=27;
const CONCOURSE_CENTER: usize = 25;
/// West column of each north-south corridor.
const CORRIDOR_X: [usize; 6] = [10, 30, 50, 70, 90, 110];
const CORRIDOR_WIDTH: usize = 3;

/// The frozen default plan (seed 0), as shipped.
pub const DEFAULT_MAP: &str = include_str!("../assets/default_mall.map");
/// The frozen 8-sign layout for the default plan, one `x y` pair per line.
pub const DEFAULT_SIGNS: &str = include_str!("../assets/default_signs.txt");

pub fn default_plan() -> FloorPlan {
    parse_map(DEFAULT_MAP).expect("shipped default map parses")
}

/// Deterministic corridor-and-hall mall with exactly 4000 walkable cells
/// and 14 boundary exits, all mutually reachable.
pub fn generate_synthetic_mall(seed: u64) -> FloorPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (MALL_WIDTH, MALL_HEIGHT);
    let mut cells = vec![CellKind::Wall; w * h];
    let carve = |cells: &mut Vec<CellKind>, x: usize, y: usize| {
        cells[y * w + x] = CellKind::Walkable;
    };

    for y in CONCOURSE_ROWS {
        for x in 1..w - 1 {
            carve(&mut cells, x, y);
        }
    }
    for &cx in &CORRIDOR_X {
        for y in 1..h - 1 {
            for x in cx..cx + CORRIDOR_WIDTH {
                carve(&mut cells, x, y);
            }
        }
    }

    // Halls between neighboring corridors, one north and one south of the
    // concourse, each anchored to the concourse edge.
    struct Hall {
        x0: usize,
        width: usize,
        height: usize,
        north: bool,
    }
    let mut halls = Vec::new();
    for pair in CORRIDOR_X.windows(2) {
        let gap_start = pair[0] + CORRIDOR_WIDTH;
        let gap = pair[1] - gap_start;
        for north in [true, false] {
            let width = rng.random_range(11..=15usize);
            let height = rng.random_range(14..=20usize);
            let x0 = gap_start + (gap - width) / 2;
            halls.push(Hall {
                x0,
                width,
                height,
                north,
            });
        }
    }
    let hall_rows = |hall: &Hall| -> Vec<usize> {
        if hall.north {
            (CONCOURSE_ROWS.start() - hall.height..*CONCOURSE_ROWS.start()).collect()
        } else {
            (CONCOURSE_ROWS.end() + 1..=CONCOURSE_ROWS.end() + hall.height).collect()
        }
    };
    for hall in &halls {
        for y in hall_rows(hall) {
            for x in hall.x0..hall.x0 + hall.width {
                carve(&mut cells, x, y);
            }
        }
    }

    // Exit cells are cut into the outer wall last and count as floor.
    let budget = MALL_WALKABLE_CELLS - MALL_EXITS;
    let count = |cells: &[CellKind]| cells.iter().filter(|k| k.is_walkable()).count();
    // Trim whole hall rows from the far edge until under budget.
    while count(&cells) > budget {
        let i = (0..halls.len())
            .max_by_key(|&i| (halls[i].height, std::cmp::Reverse(i)))
            .expect("halls exist");
        let hall = &mut halls[i];
        let y = if hall.north {
            CONCOURSE_ROWS.start() - hall.height
        } else {
            CONCOURSE_ROWS.end() + hall.height
        };
        for x in hall.x0..hall.x0 + hall.width {
            cells[y * w + x] = CellKind::Wall;
        }
        hall.height -= 1;
    }
    // Then grow single cells off existing floor to hit the budget exactly.
    // Growth stays off the outer wall so exits remain boundary cells.
    while count(&cells) < budget {
        let frontier: Vec<usize> = (0..w * h)
            .filter(|&i| {
                let (x, y) = (i % w, i / w);
                cells[i] == CellKind::Wall
                    && (2..w - 2).contains(&x)
                    && (2..h - 2).contains(&y)
                    && [i - 1, i + 1, i - w, i + w]
                        .iter()
                        .any(|&j| cells[j].is_walkable())
            })
            .collect();
        let &pick = frontier.choose(&mut rng).expect("frontier is never empty");
        cells[pick] = CellKind::Walkable;
    }

    for (id, cell) in exit_cells() {
        cells[cell.y * w + cell.x] = CellKind::Exit(id);
    }
    debug_assert_eq!(count(&cells), MALL_WALKABLE_CELLS);

    FloorPlan::from_cells(w, h, cells).expect("generator places unique exits")
}

fn exit_cells() -> Vec<(ExitId, Coord)> {
    let mut exits = Vec::with_capacity(MALL_EXITS);
    let mid = |cx: usize| cx + CORRIDOR_WIDTH / 2;
    for (i, &cx) in CORRIDOR_X.iter().enumerate() {
        exits.push((i as ExitId + 1, Coord::new(mid(cx), 0)));
    }
    exits.push((7, Coord::new(MALL_WIDTH - 1, CONCOURSE_CENTER)));
    for (i, &cx) in CORRIDOR_X.iter().rev().enumerate() {
        exits.push((i as ExitId + 8, Coord::new(mid(cx), MALL_HEIGHT - 1)));
    }
    exits.push((14, Coord::new(0, CONCOURSE_CENTER)));
    exits
}
