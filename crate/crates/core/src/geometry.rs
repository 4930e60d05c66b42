//! Floor plans, the map-file grammar, and BFS distance fields.
//!
//! A plan is a grid of 1 m x 1 m cells. Movement is 4-connected and every
//! distance used for routing is a breadth-first hop count.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

/// Highest exit id the map grammar can express ('1'..'9' then 'A'..'E').
pub const MAX_EXIT_ID: ExitId = 14;

pub type ExitId = u8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord {
    pub x: usize,
    pub y: usize,
}

impl Coord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Euclidean center-to-center distance in meters.
    pub fn distance(self, other: Coord) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        (dx * dx + dy * dy).sqrt()
    }

    /// Squared distance in whole cells, for exact radius comparisons.
    pub fn distance_sq(self, other: Coord) -> u64 {
        let dx = self.x.abs_diff(other.x) as u64;
        let dy = self.y.abs_diff(other.y) as u64;
        dx * dx + dy * dy
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Walkable,
    Wall,
    Exit(ExitId),
}

impl CellKind {
    pub fn is_walkable(self) -> bool {
        !matches!(self, CellKind::Wall)
    }

    fn symbol(self) -> char {
        match self {
            CellKind::Wall => '#',
            CellKind::Walkable => '.',
            CellKind::Exit(id) => exit_symbol(id),
        }
    }
}

fn exit_symbol(id: ExitId) -> char {
    match id {
        1..=9 => (b'0' + id) as char,
        10..=MAX_EXIT_ID => (b'A' + id - 10) as char,
        _ => '?',
    }
}

fn exit_from_symbol(c: char) -> Option<ExitId> {
    match c {
        '1'..='9' => Some(c as u8 - b'0'),
        'A'..='E' => Some(c as u8 - b'A' + 10),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("line {line}, column {column}: unknown map symbol {symbol:?}")]
    UnknownSymbol {
        symbol: char,
        line: usize,
        column: usize,
    },
    #[error("line {line}: row has {found} cells, expected {expected}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: exit {id} already defined at line {first_line}, column {first_column}")]
    DuplicateExit {
        id: ExitId,
        line: usize,
        column: usize,
        first_line: usize,
        first_column: usize,
    },
    #[error("map defines no exits")]
    NoExits,
    #[error("map is empty")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("exit {0} does not exist on this plan")]
    UnknownExit(ExitId),
    #[error("no reachable, non-blocked exit from {0}")]
    NoReachableExit(Coord),
    #[error("cell {0} is not walkable")]
    NotWalkable(Coord),
}

/// Immutable 1 m² cell grid with numbered exits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FloorPlan {
    width: usize,
    height: usize,
    cells: Vec<CellKind>,
    exits: BTreeMap<ExitId, Coord>,
}

impl FloorPlan {
    /// Cell edge length in meters.
    pub const CELL_SIZE: f64 = 1.0;

    /// Builds a plan from a row-major cell vector. Exit ids must be unique.
    pub fn from_cells(width: usize, height: usize, cells: Vec<CellKind>) -> Result<Self, MapError> {
        assert_eq!(cells.len(), width * height, "cell vector does not match dimensions");
        let mut exits: BTreeMap<ExitId, Coord> = BTreeMap::new();
        for (i, kind) in cells.iter().enumerate() {
            if let CellKind::Exit(id) = *kind {
                let here = Coord::new(i % width, i / width);
                if let Some(first) = exits.insert(id, here) {
                    return Err(MapError::DuplicateExit {
                        id,
                        line: here.y + 1,
                        column: here.x + 1,
                        first_line: first.y + 1,
                        first_column: first.x + 1,
                    });
                }
            }
        }
        if exits.is_empty() {
            return Err(MapError::NoExits);
        }
        Ok(Self {
            width,
            height,
            cells,
            exits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn index(&self, c: Coord) -> usize {
        c.y * self.width + c.x
    }

    pub fn coord(&self, index: usize) -> Coord {
        Coord::new(index % self.width, index / self.width)
    }

    pub fn cell(&self, c: Coord) -> CellKind {
        if self.contains(c) {
            self.cells[self.index(c)]
        } else {
            CellKind::Wall
        }
    }

    pub fn is_walkable(&self, c: Coord) -> bool {
        self.cell(c).is_walkable()
    }

    /// Exit ids in ascending order with their cells.
    pub fn exits(&self) -> impl Iterator<Item = (ExitId, Coord)> + '_ {
        self.exits.iter().map(|(&id, &c)| (id, c))
    }

    pub fn exit_ids(&self) -> Vec<ExitId> {
        self.exits.keys().copied().collect()
    }

    pub fn exit_cell(&self, id: ExitId) -> Option<Coord> {
        self.exits.get(&id).copied()
    }

    pub fn exit_count(&self) -> usize {
        self.exits.len()
    }

    /// All walkable cells (exit cells included) in row-major order.
    pub fn walkable_cells(&self) -> Vec<Coord> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, k)| k.is_walkable())
            .map(|(i, _)| self.coord(i))
            .collect()
    }

    pub fn walkable_count(&self) -> usize {
        self.cells.iter().filter(|k| k.is_walkable()).count()
    }

    /// Walkable 4-neighbors in N, E, S, W order.
    pub fn neighbors(&self, c: Coord) -> impl Iterator<Item = Coord> + '_ {
        neighbor_coords(c, self.width, self.height)
            .into_iter()
            .flatten()
            .filter(|&n| self.is_walkable(n))
    }

    /// Writes the plan back out in the map-file grammar.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(self.cells[y * self.width + x].symbol());
            }
            out.push('\n');
        }
        out
    }
}

/// Neighbor slots in N, E, S, W order; `None` where the grid ends.
pub(crate) fn neighbor_coords(c: Coord, width: usize, height: usize) -> [Option<Coord>; 4] {
    [
        c.y.checked_sub(1).map(|y| Coord::new(c.x, y)),
        (c.x + 1 < width).then(|| Coord::new(c.x + 1, c.y)),
        (c.y + 1 < height).then(|| Coord::new(c.x, c.y + 1)),
        c.x.checked_sub(1).map(|x| Coord::new(x, c.y)),
    ]
}

/// Parses the map-file grammar: `#` wall, `.` walkable, `1`-`9` and `A`-`E`
/// for exits 1-14. Rows must all have the same length.
pub fn parse_map(text: &str) -> Result<FloorPlan, MapError> {
    let mut rows: Vec<&str> = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    while rows.last().is_some_and(|r| r.is_empty()) {
        rows.pop();
    }
    let Some(first) = rows.first() else {
        return Err(MapError::Empty);
    };
    let width = first.chars().count();
    if width == 0 {
        return Err(MapError::Empty);
    }

    let mut cells = Vec::with_capacity(width * rows.len());
    let mut seen: BTreeMap<ExitId, (usize, usize)> = BTreeMap::new();
    for (row, line) in rows.iter().enumerate() {
        let found = line.chars().count();
        if found != width {
            return Err(MapError::RaggedRow {
                line: row + 1,
                expected: width,
                found,
            });
        }
        for (col, symbol) in line.chars().enumerate() {
            let kind = match symbol {
                '#' => CellKind::Wall,
                '.' => CellKind::Walkable,
                other => match exit_from_symbol(other) {
                    Some(id) => CellKind::Exit(id),
                    None => {
                        return Err(MapError::UnknownSymbol {
                            symbol: other,
                            line: row + 1,
                            column: col + 1,
                        })
                    }
                },
            };
            if let CellKind::Exit(id) = kind {
                if let Some(&(first_line, first_column)) = seen.get(&id) {
                    return Err(MapError::DuplicateExit {
                        id,
                        line: row + 1,
                        column: col + 1,
                        first_line,
                        first_column,
                    });
                }
                seen.insert(id, (row + 1, col + 1));
            }
            cells.push(kind);
        }
    }
    FloorPlan::from_cells(width, rows.len(), cells)
}

/// BFS hop counts from every cell to one exit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceField {
    exit_id: ExitId,
    width: usize,
    dist: Vec<u32>,
}

impl DistanceField {
    const UNREACHABLE: u32 = u32::MAX;

    pub fn exit_id(&self) -> ExitId {
        self.exit_id
    }

    /// Hop count to the exit, `None` when unreachable (or a wall).
    pub fn get(&self, c: Coord) -> Option<u32> {
        if c.x >= self.width {
            return None;
        }
        match self.dist.get(c.y * self.width + c.x) {
            Some(&d) if d != Self::UNREACHABLE => Some(d),
            _ => None,
        }
    }
}

pub fn distance_field(plan: &FloorPlan, exit_id: ExitId) -> Result<DistanceField, GeometryError> {
    let source = plan
        .exit_cell(exit_id)
        .ok_or(GeometryError::UnknownExit(exit_id))?;
    let mut dist = vec![DistanceField::UNREACHABLE; plan.width * plan.height];
    let mut queue = VecDeque::new();
    dist[plan.index(source)] = 0;
    queue.push_back(source);
    while let Some(cell) = queue.pop_front() {
        let next = dist[plan.index(cell)] + 1;
        for n in plan.neighbors(cell) {
            let slot = &mut dist[plan.index(n)];
            if *slot == DistanceField::UNREACHABLE {
                *slot = next;
                queue.push_back(n);
            }
        }
    }
    Ok(DistanceField {
        exit_id,
        width: plan.width,
        dist,
    })
}

/// One distance field per exit, computed once per plan.
#[derive(Clone, Debug)]
pub struct DistanceFields {
    fields: BTreeMap<ExitId, DistanceField>,
}

impl DistanceFields {
    pub fn new(plan: &FloorPlan) -> Self {
        let fields = plan
            .exits()
            .map(|(id, _)| (id, distance_field(plan, id).expect("exit listed by the plan")))
            .collect();
        Self { fields }
    }

    pub fn get(&self, exit_id: ExitId) -> Option<&DistanceField> {
        self.fields.get(&exit_id)
    }

    pub fn distance(&self, exit_id: ExitId, c: Coord) -> Option<u32> {
        self.fields.get(&exit_id).and_then(|f| f.get(c))
    }

    /// Reachable, non-blocked exits from `c`, sorted by (distance, id).
    pub fn ranked_exits(&self, c: Coord, blocked: &BTreeSet<ExitId>) -> Vec<(ExitId, u32)> {
        let mut ranked: Vec<(ExitId, u32)> = self
            .fields
            .iter()
            .filter(|(id, _)| !blocked.contains(id))
            .filter_map(|(&id, f)| f.get(c).map(|d| (id, d)))
            .collect();
        ranked.sort_by_key(|&(id, d)| (d, id));
        ranked
    }

    /// Closest reachable non-blocked exit; ties go to the smaller id.
    pub fn nearest_exit(&self, c: Coord, blocked: &BTreeSet<ExitId>) -> Result<ExitId, GeometryError> {
        self.ranked_exits(c, blocked)
            .first()
            .map(|&(id, _)| id)
            .ok_or(GeometryError::NoReachableExit(c))
    }
}

/// Convenience wrapper computing fields on the fly. Prefer
/// [`DistanceFields::nearest_exit`] for repeated queries.
pub fn nearest_exit(plan: &FloorPlan, cell: Coord, blocked: &BTreeSet<ExitId>) -> Result<ExitId, GeometryError> {
    if !plan.is_walkable(cell) {
        return Err(GeometryError::NotWalkable(cell));
    }
    DistanceFields::new(plan).nearest_exit(cell, blocked)
}

/// Exits some walkable cell cannot reach.
pub fn unreachable_exits(plan: &FloorPlan, fields: &DistanceFields) -> Vec<ExitId> {
    let walkable = plan.walkable_cells();
    plan.exits()
        .filter(|&(id, _)| walkable.iter().any(|&c| fields.distance(id, c).is_none()))
        .map(|(id, _)| id)
        .collect()
}
