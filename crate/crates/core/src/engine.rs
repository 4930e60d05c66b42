//! The stepped simulation loop and its metrics.
//!
//! Each step runs, in order: announcement (on `pa_step`), decisions against
//! the current sign displays, movement in a seeded random order with a
//! per-cell capacity, the congestion controller, and metrics. One ChaCha
//! stream per run is consumed by spawning first and then by one shuffle per
//! step, so a run is a pure function of its configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{CellKind, Coord, DistanceFields, ExitId, FloorPlan, GeometryError};
use crate::population::{
    decide_target, perceive_signs, plan_move, receive_pa, spawn_agents_with, validate_pa, Agent, PaMessage,
    PopulationError,
};
use crate::signage::{
    activate_default, controller_step, place_signs, ControllerConfig, DensityReading, DensitySensor, Mode, Policy,
    Sign, SignChange, SignError, DEFAULT_RADIUS,
};

pub const DEFAULT_MAX_STEPS: usize = 2000;
pub const DEFAULT_CELL_CAPACITY: u32 = 4;
pub const DEFAULT_P: f64 = 0.7;
pub const DEFAULT_S: usize = 8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Sign(#[from] SignError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: f64,
    pub s: usize,
    pub controller: ControllerConfig,
    pub visibility_radius: f64,
    pub pa_step: usize,
    pub pa: PaMessage,
    pub seed: u64,
    pub max_steps: usize,
    pub cell_capacity: u32,
    /// Let agents leave through any exit they step on, not only their target.
    pub evacuate_any_exit: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 4000,
            p: DEFAULT_P,
            s: DEFAULT_S,
            controller: ControllerConfig::default(),
            visibility_radius: DEFAULT_RADIUS,
            pa_step: 0,
            pa: PaMessage::standard(),
            seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
            cell_capacity: DEFAULT_CELL_CAPACITY,
            evacuate_any_exit: false,
        }
    }
}

impl SimConfig {
    pub fn mode(&self) -> Mode {
        self.controller.mode
    }

    pub fn policy(&self) -> Policy {
        self.controller.policy
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p must be in [0, 1], got {}", self.p));
        }
        if self.cell_capacity < 1 {
            return bad("cell_capacity must be >= 1".into());
        }
        if self.max_steps < 1 {
            return bad("max_steps must be >= 1".into());
        }
        if !(self.visibility_radius >= 0.0) || !self.visibility_radius.is_finite() {
            return bad(format!("visibility_radius must be a non-negative number, got {}", self.visibility_radius));
        }
        if self.pa.blocked_exit == self.pa.designated_exit {
            return bad(format!("pa_blocked and pa_designated are both {}", self.pa.blocked_exit));
        }
        self.controller.validate().map_err(SimError::Config)
    }
}

/// Evacuated count after `step` completed steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub step: usize,
    pub evacuated: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSeries {
    pub n: usize,
    pub records: Vec<StepRecord>,
    pub sign_changes: Vec<SignChange>,
    pub config: SimConfig,
    /// The run stopped at `max_steps` with agents still inside.
    pub capped: bool,
}

impl MetricsSeries {
    fn rate_of(&self, evacuated: usize) -> f64 {
        if self.n == 0 {
            1.0
        } else {
            evacuated as f64 / self.n as f64
        }
    }

    /// Fraction evacuated after `t` steps. Past the final record the final
    /// value is returned.
    pub fn evacuation_rate(&self, t: usize) -> f64 {
        let rec = self
            .records
            .get(t)
            .or(self.records.last())
            .expect("series always holds the step-0 record");
        self.rate_of(rec.evacuated)
    }

    pub fn rates(&self) -> Vec<f64> {
        self.records.iter().map(|r| self.rate_of(r.evacuated)).collect()
    }

    pub fn final_step(&self) -> usize {
        self.records.last().map_or(0, |r| r.step)
    }

    pub fn final_rate(&self) -> f64 {
        self.evacuation_rate(self.final_step())
    }

    /// First step at which the rate reaches `fraction`.
    pub fn time_to(&self, fraction: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| self.rate_of(r.evacuated) >= fraction)
            .map(|r| r.step)
    }

    /// `step,evacuated,rate` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,evacuated,rate\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{:.6}", r.step, r.evacuated, self.rate_of(r.evacuated));
        }
        out
    }

    /// `step,sign_id,old_exit,new_exit,density`; inactive displays print
    /// as `inactive`.
    pub fn sign_log_csv(&self) -> String {
        let show = |e: Option<ExitId>| e.map_or_else(|| "inactive".to_string(), |e| e.to_string());
        let mut out = String::from("step,sign_id,old_exit,new_exit,density\n");
        for c in &self.sign_changes {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.4}",
                c.step,
                c.sign_id,
                show(c.old_exit),
                show(c.new_exit),
                c.density
            );
        }
        out
    }
}

/// A plan with its distance fields, shareable across concurrent runs.
#[derive(Clone, Debug)]
pub struct World {
    pub plan: Arc<FloorPlan>,
    pub fields: Arc<DistanceFields>,
}

impl World {
    pub fn new(plan: FloorPlan) -> Self {
        let fields = DistanceFields::new(&plan);
        Self {
            plan: Arc::new(plan),
            fields: Arc::new(fields),
        }
    }
}

/// Mutable state of one run.
#[derive(Clone, Debug)]
pub struct Simulation {
    world: World,
    config: SimConfig,
    agents: Vec<Agent>,
    signs: Vec<Sign>,
    sensors: Vec<DensitySensor>,
    step: usize,
    rng: ChaCha8Rng,
    blocked: BTreeSet<ExitId>,
    /// Agents per cell, evacuated agents excluded.
    occupancy: Vec<u32>,
    order: Vec<usize>,
    // Movement scratch: proposals and per-cell loop-detection state.
    desired: Vec<Coord>,
    head: Vec<u32>,
    link: Vec<u32>,
    mark: Vec<u8>,
    remaining: usize,
    metrics: MetricsSeries,
}

impl Simulation {
    /// Validates the configuration against the plan and spawns the population.
    pub fn new(config: SimConfig, world: World, layout: &[Coord]) -> Result<Self, SimError> {
        config.validate()?;
        validate_pa(&world.plan, &world.fields, &config.pa)?;
        let signs = place_signs(&world.plan, config.s, layout, config.visibility_radius)?;
        for sign in &signs {
            world.fields.nearest_exit(sign.pos, &BTreeSet::from([config.pa.blocked_exit]))?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let agents = spawn_agents_with(&world.plan, config.n, config.p, &mut rng)?;
        let mut occupancy = vec![0u32; world.plan.width() * world.plan.height()];
        for a in &agents {
            occupancy[world.plan.index(a.pos)] += 1;
        }
        let sensors = signs
            .iter()
            .map(|s| DensitySensor::new(&world.plan, s, config.controller.sensing_radius))
            .collect();
        let n = config.n;
        let metrics = MetricsSeries {
            n,
            records: vec![StepRecord { step: 0, evacuated: 0 }],
            sign_changes: Vec::new(),
            config: config.clone(),
            capped: false,
        };
        Ok(Self {
            world,
            config,
            order: (0..n).collect(),
            desired: agents.iter().map(|a| a.pos).collect(),
            head: vec![u32::MAX; occupancy.len()],
            link: vec![u32::MAX; n],
            mark: vec![0; occupancy.len()],
            agents,
            signs,
            sensors,
            step: 0,
            rng,
            blocked: BTreeSet::new(),
            occupancy,
            remaining: n,
            metrics,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    pub fn blocked(&self) -> &BTreeSet<ExitId> {
        &self.blocked
    }

    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn metrics(&self) -> &MetricsSeries {
        &self.metrics
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn is_finished(&self) -> bool {
        self.remaining == 0 || self.step >= self.config.max_steps
    }

    /// Current density reading for every sign.
    pub fn readings(&self) -> Vec<DensityReading> {
        self.signs
            .iter()
            .zip(&self.sensors)
            .map(|(s, sensor)| DensityReading {
                sign_id: s.id,
                step: self.step,
                value: sensor.read(&self.occupancy),
            })
            .collect()
    }

    /// Advances one step. Configuration errors were caught in [`Simulation::new`].
    pub fn step(&mut self) -> Result<(), SimError> {
        let plan = Arc::clone(&self.world.plan);
        let fields = Arc::clone(&self.world.fields);
        let t = self.step;
        let announced = t >= self.config.pa_step;

        if t == self.config.pa_step {
            receive_pa(&mut self.agents, &self.config.pa, &fields, &mut self.blocked)?;
            let readings = self.readings();
            let before: Vec<Option<ExitId>> = self.signs.iter().map(|s| s.displayed_exit).collect();
            activate_default(&mut self.signs, &fields, &self.blocked)?;
            for ((sign, old), r) in self.signs.iter().zip(before).zip(&readings) {
                self.metrics.sign_changes.push(SignChange {
                    step: t,
                    sign_id: sign.id,
                    old_exit: old,
                    new_exit: sign.displayed_exit,
                    density: r.value,
                });
            }
        }

        if announced && !self.signs.is_empty() {
            for agent in self.agents.iter_mut().filter(|a| !a.is_evacuated()) {
                let visible = perceive_signs(agent, &self.signs);
                if let Some(exit) = decide_target(agent, &visible) {
                    agent.target = Some(exit);
                }
            }
        }

        self.order.shuffle(&mut self.rng);
        self.move_agents(&plan, &fields, t)?;

        if announced && self.config.controller.mode == Mode::Congestion && !self.signs.is_empty() {
            let readings = self.readings();
            let changes = controller_step(&mut self.signs, &readings, &self.config.controller, &fields, &self.blocked)?;
            self.metrics.sign_changes.extend(changes);
        }

        self.step += 1;
        self.metrics.records.push(StepRecord {
            step: self.step,
            evacuated: self.config.n - self.remaining,
        });
        Ok(())
    }

    /// Movement phase. Every agent proposes a cell from the positions at the
    /// start of the phase; proposals are then applied in the shuffled order
    /// and a move into a full cell waits. Afterwards, waiting agents whose
    /// destinations form a closed loop of full cells advance together, which
    /// keeps every cell's count unchanged (two agents facing each other swap).
    fn move_agents(&mut self, plan: &FloorPlan, fields: &DistanceFields, t: usize) -> Result<(), SimError> {
        let capacity = self.config.cell_capacity;
        let any_exit = self.config.evacuate_any_exit;

        for (i, agent) in self.agents.iter().enumerate() {
            if agent.is_evacuated() || agent.target.is_none() {
                continue;
            }
            self.desired[i] = if leaves_via(plan, agent, agent.pos, any_exit, &self.blocked) {
                agent.pos
            } else {
                plan_move(agent, plan, fields, &self.blocked)?
            };
        }

        // Arrivals into exit cells this step; leavers take no floor space.
        let mut arrivals: Vec<(usize, u32)> = Vec::new();
        let mut waiting: Vec<usize> = Vec::new();
        for k in 0..self.order.len() {
            let i = self.order[k];
            let agent = &self.agents[i];
            if agent.is_evacuated() || agent.target.is_none() {
                continue;
            }
            let from = agent.pos;
            let dest = self.desired[i];
            let (fi, di) = (plan.index(from), plan.index(dest));
            if leaves_via(plan, agent, dest, any_exit, &self.blocked) {
                let slot = match arrivals.iter_mut().find(|(c, _)| *c == di) {
                    Some(slot) => slot,
                    None => {
                        arrivals.push((di, 0));
                        arrivals.last_mut().expect("just pushed")
                    }
                };
                let inside = if dest == from { 0 } else { self.occupancy[di] };
                if slot.1 + inside < capacity {
                    slot.1 += 1;
                    self.occupancy[fi] -= 1;
                    let agent = &mut self.agents[i];
                    agent.pos = dest;
                    agent.evacuated_at = Some(t);
                    self.remaining -= 1;
                }
            } else if dest != from {
                if self.occupancy[di] < capacity {
                    self.occupancy[fi] -= 1;
                    self.occupancy[di] += 1;
                    self.agents[i].pos = dest;
                } else {
                    waiting.push(i);
                }
            }
        }
        if !waiting.is_empty() {
            self.rotate_loops(plan, &waiting);
        }
        Ok(())
    }

    /// Searches the graph whose nodes are cells holding waiting agents and
    /// whose edges are those agents' destinations. Every closed loop found
    /// advances one agent per cell; the search continues until none is left.
    fn rotate_loops(&mut self, plan: &FloorPlan, waiting: &[usize]) {
        const NONE: u32 = u32::MAX;
        const WHITE: u8 = 0;
        const GRAY: u8 = 1;
        const BLACK: u8 = 2;
        // Per-cell lists of waiting agents in processing order.
        let mut cells: Vec<usize> = Vec::new();
        for &i in waiting.iter().rev() {
            let c = plan.index(self.agents[i].pos);
            if self.head[c] == NONE {
                cells.push(c);
            }
            self.link[i] = self.head[c];
            self.head[c] = i as u32;
        }
        cells.reverse();

        let mut stack: Vec<usize> = Vec::new();
        for &root in &cells {
            if self.mark[root] != WHITE {
                continue;
            }
            self.mark[root] = GRAY;
            stack.push(root);
            while let Some(&c) = stack.last() {
                let i = self.head[c];
                if i == NONE {
                    self.mark[c] = BLACK;
                    stack.pop();
                    continue;
                }
                let d = plan.index(self.desired[i as usize]);
                match self.mark[d] {
                    WHITE if self.head[d] != NONE => {
                        self.mark[d] = GRAY;
                        stack.push(d);
                    }
                    GRAY => {
                        let from = stack.iter().rposition(|&x| x == d).expect("gray cells are stacked");
                        for &cell in &stack[from..] {
                            let j = self.head[cell] as usize;
                            self.head[cell] = self.link[j];
                            self.agents[j].pos = self.desired[j];
                        }
                        for &cell in &stack[from + 1..] {
                            self.mark[cell] = WHITE;
                        }
                        stack.truncate(from + 1);
                    }
                    // Dead end: nothing waiting there, or already exhausted.
                    _ => self.head[c] = self.link[i as usize],
                }
            }
        }
        for &c in &cells {
            self.head[c] = NONE;
            self.mark[c] = WHITE;
        }
    }

    /// Steps until everyone is out or `max_steps` is reached.
    pub fn run_to_end(mut self) -> Result<MetricsSeries, SimError> {
        while !self.is_finished() {
            self.step()?;
        }
        self.metrics.capped = self.remaining > 0;
        Ok(self.metrics)
    }
}

/// Whether `agent` standing on `cell` leaves the plan there.
fn leaves_via(plan: &FloorPlan, agent: &Agent, cell: Coord, any_exit: bool, blocked: &BTreeSet<ExitId>) -> bool {
    match plan.cell(cell) {
        CellKind::Exit(id) => Some(id) == agent.target || (any_exit && !blocked.contains(&id)),
        _ => false,
    }
}

/// Runs one configuration to completion. An empty population yields the
/// single record (0, 0) with rate 1.0.
pub fn run(config: &SimConfig, world: &World, layout: &[Coord]) -> Result<MetricsSeries, SimError> {
    Simulation::new(config.clone(), world.clone(), layout)?.run_to_end()
}
