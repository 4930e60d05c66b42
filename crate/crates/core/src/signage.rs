//! Digital signs: placement, density sensing, and the display controller.
//!
//! Signs are inactive (showing promotional content) until the announcement.
//! From then on they show an exit number. In default mode that number is the
//! sign's nearest open exit for the rest of the run. In congestion mode the
//! controller re-evaluates every step and may redirect the sign elsewhere.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{Coord, DistanceFields, ExitId, FloorPlan, GeometryError};
use crate::population::{within_radius, Agent};

pub const DEFAULT_RADIUS: f64 = 10.0;
pub const DEFAULT_THETA: f64 = 1.5;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SignError {
    #[error("sign layout has {available} positions, {requested} requested")]
    LayoutTooShort { available: usize, requested: usize },
    #[error("sign position {0} is off the plan or not walkable")]
    BadPosition(Coord),
    #[error("sign position {0} is used twice")]
    DuplicatePosition(Coord),
    #[error("sign layout line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown sign layout preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sign {
    pub id: usize,
    pub pos: Coord,
    pub visibility_radius: f64,
    /// `None` while the sign shows promotional content.
    pub displayed_exit: Option<ExitId>,
    /// Nearest open exit, fixed when the sign activates.
    pub nearest_exit: Option<ExitId>,
    pub density_history: VecDeque<f64>,
}

impl Sign {
    pub fn new(id: usize, pos: Coord, visibility_radius: f64) -> Self {
        Self {
            id,
            pos,
            visibility_radius,
            displayed_exit: None,
            nearest_exit: None,
            density_history: VecDeque::new(),
        }
    }

    fn record(&mut self, value: f64, window: usize) {
        if self.density_history.len() == window {
            self.density_history.pop_front();
        }
        self.density_history.push_back(value);
    }

    /// Density change per step across the full window, once it is full.
    pub fn density_slope(&self, window: usize) -> Option<f64> {
        if window < 2 || self.density_history.len() < window {
            return None;
        }
        let oldest = self.density_history[self.density_history.len() - window];
        let newest = *self.density_history.back()?;
        Some((newest - oldest) / (window - 1) as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Default,
    Congestion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Policy {
    /// React to absolute density.
    P1,
    /// React to density growth.
    P2,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Default => "default",
            Mode::Congestion => "congestion",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "default" => Ok(Mode::Default),
            "congestion" => Ok(Mode::Congestion),
            other => Err(format!("unknown mode {other:?} (expected default or congestion)")),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::P1 => "p1",
            Policy::P2 => "p2",
        })
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p1" | "1" | "policy1" => Ok(Policy::P1),
            "p2" | "2" | "policy2" => Ok(Policy::P2),
            other => Err(format!("unknown policy {other:?} (expected p1 or p2)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerConfig {
    pub mode: Mode,
    pub policy: Policy,
    /// Persons/m² above which a sign counts as congested (P1).
    pub theta: f64,
    /// Persons/m² per step of growth above which a sign counts as congested (P2).
    pub delta: f64,
    /// Readings spanned by the P2 slope.
    pub window: usize,
    pub sensing_radius: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Default,
            policy: Policy::P1,
            theta: DEFAULT_THETA,
            delta: DEFAULT_DELTA,
            window: DEFAULT_WINDOW,
            sensing_radius: DEFAULT_RADIUS,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.theta > 0.0) {
            return Err(format!("theta must be > 0, got {}", self.theta));
        }
        if !(self.delta > 0.0) {
            return Err(format!("delta must be > 0, got {}", self.delta));
        }
        if self.window < 2 {
            return Err(format!("window must be >= 2, got {}", self.window));
        }
        if !(self.sensing_radius > 0.0) || !self.sensing_radius.is_finite() {
            return Err(format!("sensing_radius must be a positive number, got {}", self.sensing_radius));
        }
        Ok(())
    }

    /// Whether a sign's current reading or trend marks it as congested.
    pub fn is_congested(&self, sign: &Sign, reading: f64) -> bool {
        match self.policy {
            Policy::P1 => reading > self.theta,
            Policy::P2 => sign.density_slope(self.window).is_some_and(|g| g > self.delta),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityReading {
    pub sign_id: usize,
    pub step: usize,
    /// Persons per walkable m² inside the sensing disk.
    pub value: f64,
}

/// Parses a layout file: one `x y` (or `x,y`) pair per line, `#` comments.
pub fn parse_sign_layout(text: &str) -> Result<Vec<Coord>, SignError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect();
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|e| SignError::Parse {
                line: i + 1,
                message: format!("bad coordinate {s:?}: {e}"),
            })
        };
        match parts.as_slice() {
            [x, y] => out.push(Coord::new(parse(x)?, parse(y)?)),
            _ => {
                return Err(SignError::Parse {
                    line: i + 1,
                    message: format!("expected two coordinates, got {line:?}"),
                })
            }
        }
    }
    Ok(out)
}

/// Resolves a preset name to its layout.
pub fn preset_layout(name: &str) -> Result<Vec<Coord>, SignError> {
    match name {
        "default" => parse_sign_layout(crate::mall::DEFAULT_SIGNS),
        other => Err(SignError::UnknownPreset(other.to_string())),
    }
}

/// The first `s` layout positions become signs with ids 1..=s, inactive.
pub fn place_signs(plan: &FloorPlan, s: usize, layout: &[Coord], visibility_radius: f64) -> Result<Vec<Sign>, SignError> {
    if s > layout.len() {
        return Err(SignError::LayoutTooShort {
            available: layout.len(),
            requested: s,
        });
    }
    let mut seen = BTreeSet::new();
    layout[..s]
        .iter()
        .enumerate()
        .map(|(i, &pos)| {
            if !plan.is_walkable(pos) {
                return Err(SignError::BadPosition(pos));
            }
            if !seen.insert(pos) {
                return Err(SignError::DuplicatePosition(pos));
            }
            Ok(Sign::new(i + 1, pos, visibility_radius))
        })
        .collect()
}

/// Counts agents still inside within `radius` of the sign and divides by
/// the walkable cells within the same radius.
pub fn measure_density(plan: &FloorPlan, agents: &[Agent], sign: &Sign, radius: f64, step: usize) -> DensityReading {
    let people = agents
        .iter()
        .filter(|a| !a.is_evacuated() && within_radius(sign.pos, a.pos, radius))
        .count();
    let area = disk_cells(plan, sign.pos, radius).len();
    DensityReading {
        sign_id: sign.id,
        step,
        value: if area == 0 { 0.0 } else { people as f64 / area as f64 },
    }
}

/// Walkable cell indices within `radius` of `center`.
pub fn disk_cells(plan: &FloorPlan, center: Coord, radius: f64) -> Vec<usize> {
    let r = radius.max(0.0).floor() as usize;
    let mut out = Vec::new();
    for y in center.y.saturating_sub(r)..=(center.y + r).min(plan.height().saturating_sub(1)) {
        for x in center.x.saturating_sub(r)..=(center.x + r).min(plan.width().saturating_sub(1)) {
            let c = Coord::new(x, y);
            if plan.is_walkable(c) && within_radius(center, c, radius) {
                out.push(plan.index(c));
            }
        }
    }
    out
}

/// Density over a precomputed disk using an occupancy grid; same value as
/// [`measure_density`] for the same agent positions.
#[derive(Clone, Debug)]
pub struct DensitySensor {
    cells: Vec<usize>,
}

impl DensitySensor {
    pub fn new(plan: &FloorPlan, sign: &Sign, radius: f64) -> Self {
        Self {
            cells: disk_cells(plan, sign.pos, radius),
        }
    }

    pub fn read(&self, occupancy: &[u32]) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        let people: u64 = self.cells.iter().map(|&i| occupancy[i] as u64).sum();
        people as f64 / self.cells.len() as f64
    }
}

/// Switches every sign to its nearest open exit.
pub fn activate_default(signs: &mut [Sign], fields: &DistanceFields, blocked: &BTreeSet<ExitId>) -> Result<(), GeometryError> {
    for sign in signs.iter_mut() {
        let nearest = fields.nearest_exit(sign.pos, blocked)?;
        sign.nearest_exit = Some(nearest);
        sign.displayed_exit = Some(nearest);
    }
    Ok(())
}

/// Exits that congested signs would send people to.
pub fn congested_exits(signs: &[Sign], congested: &[bool]) -> BTreeSet<ExitId> {
    signs
        .iter()
        .zip(congested)
        .filter(|(_, &c)| c)
        .filter_map(|(s, _)| s.nearest_exit)
        .collect()
}

/// Nearest open exit from the sign after dropping every exit in
/// `congested`; plain nearest exit if that leaves nothing.
pub fn select_redirect_exit(
    fields: &DistanceFields,
    sign: &Sign,
    congested: &BTreeSet<ExitId>,
    blocked: &BTreeSet<ExitId>,
) -> Result<ExitId, GeometryError> {
    let ranked = fields.ranked_exits(sign.pos, blocked);
    let first = ranked.first().ok_or(GeometryError::NoReachableExit(sign.pos))?.0;
    Ok(ranked
        .iter()
        .map(|&(id, _)| id)
        .find(|id| !congested.contains(id))
        .unwrap_or(first))
}

fn nearest_of(sign: &Sign, fields: &DistanceFields, blocked: &BTreeSet<ExitId>) -> Result<ExitId, GeometryError> {
    match sign.nearest_exit {
        Some(e) if !blocked.contains(&e) => Ok(e),
        _ => fields.nearest_exit(sign.pos, blocked),
    }
}

/// Policy 1: above `theta` a sign still showing its nearest exit is
/// redirected; at or below `theta` it shows its nearest exit.
pub fn controller_tick_p1(
    sign: &mut Sign,
    reading: &DensityReading,
    cfg: &ControllerConfig,
    fields: &DistanceFields,
    congested: &BTreeSet<ExitId>,
    blocked: &BTreeSet<ExitId>,
) -> Result<(), GeometryError> {
    let nearest = nearest_of(sign, fields, blocked)?;
    if reading.value > cfg.theta {
        if sign.displayed_exit == Some(nearest) {
            sign.displayed_exit = Some(select_redirect_exit(fields, sign, congested, blocked)?);
        }
    } else {
        sign.displayed_exit = Some(nearest);
    }
    Ok(())
}

/// Policy 2: with a full window, growth above `delta` per step redirects,
/// growth at or below zero restores the nearest exit, anything between
/// leaves the display alone.
pub fn controller_tick_p2(
    sign: &mut Sign,
    cfg: &ControllerConfig,
    fields: &DistanceFields,
    congested: &BTreeSet<ExitId>,
    blocked: &BTreeSet<ExitId>,
) -> Result<(), GeometryError> {
    let Some(slope) = sign.density_slope(cfg.window) else {
        return Ok(());
    };
    if slope > cfg.delta {
        sign.displayed_exit = Some(select_redirect_exit(fields, sign, congested, blocked)?);
    } else if slope <= 0.0 {
        sign.displayed_exit = Some(nearest_of(sign, fields, blocked)?);
    }
    Ok(())
}

/// Display change of one sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignChange {
    pub step: usize,
    pub sign_id: usize,
    pub old_exit: Option<ExitId>,
    pub new_exit: Option<ExitId>,
    pub density: f64,
}

/// Runs one controller pass over all signs. Readings are appended to each
/// sign's history first, congestion is judged on that snapshot, then every
/// sign ticks in id order. Returns the display changes.
pub fn controller_step(
    signs: &mut [Sign],
    readings: &[DensityReading],
    cfg: &ControllerConfig,
    fields: &DistanceFields,
    blocked: &BTreeSet<ExitId>,
) -> Result<Vec<SignChange>, GeometryError> {
    debug_assert_eq!(signs.len(), readings.len());
    for (sign, r) in signs.iter_mut().zip(readings) {
        sign.record(r.value, cfg.window);
    }
    let flags: Vec<bool> = signs
        .iter()
        .zip(readings)
        .map(|(s, r)| cfg.is_congested(s, r.value))
        .collect();
    let congested = congested_exits(signs, &flags);
    let mut changes = Vec::new();
    for (sign, r) in signs.iter_mut().zip(readings) {
        let before = sign.displayed_exit;
        match cfg.policy {
            Policy::P1 => controller_tick_p1(sign, r, cfg, fields, &congested, blocked)?,
            Policy::P2 => controller_tick_p2(sign, cfg, fields, &congested, blocked)?,
        }
        if sign.displayed_exit != before {
            changes.push(SignChange {
                step: r.step,
                sign_id: sign.id,
                old_exit: before,
                new_exit: sign.displayed_exit,
                density: r.value,
            });
        }
    }
    Ok(changes)
}
