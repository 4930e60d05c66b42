//! Agents: spawning, the public announcement, sign perception, target
//! choice and the per-agent movement proposal.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{Coord, DistanceFields, ExitId, FloorPlan};
use crate::signage::Sign;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PopulationError {
    #[error("cannot spawn {0} agents on a plan without walkable cells")]
    NoWalkableCells(usize),
    #[error("compliance probability {0} is outside [0, 1]")]
    BadProbability(String),
    #[error("announcement names exit {0} as both blocked and designated")]
    SameExit(ExitId),
    #[error("announcement references exit {0}, which is not on the plan")]
    UnknownExit(ExitId),
    #[error("designated exit {exit} is unreachable from {from}")]
    Unreachable { exit: ExitId, from: Coord },
    #[error("agent {0} has no target")]
    NoTarget(usize),
    #[error("agent {0} targets blocked exit {1}")]
    BlockedTarget(usize, ExitId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Agent {
    pub id: usize,
    pub pos: Coord,
    /// Follows sign guidance. Fixed at spawn.
    pub compliant: bool,
    pub target: Option<ExitId>,
    /// Index of the step during which the agent left the plan.
    pub evacuated_at: Option<usize>,
}

impl Agent {
    pub fn is_evacuated(&self) -> bool {
        self.evacuated_at.is_some()
    }
}

/// The broadcast heard by everyone: one exit is out of use, go to another.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PaMessage {
    pub blocked_exit: ExitId,
    pub designated_exit: ExitId,
}

impl PaMessage {
    pub fn new(blocked_exit: ExitId, designated_exit: ExitId) -> Result<Self, PopulationError> {
        if blocked_exit == designated_exit {
            return Err(PopulationError::SameExit(blocked_exit));
        }
        Ok(Self {
            blocked_exit,
            designated_exit,
        })
    }

    /// Fire near exit 1, evacuate via exit 7.
    pub fn standard() -> Self {
        Self {
            blocked_exit: 1,
            designated_exit: 7,
        }
    }
}

/// Spawns with a fresh generator seeded from `seed`.
pub fn spawn_agents(plan: &FloorPlan, n: usize, p: f64, seed: u64) -> Result<Vec<Agent>, PopulationError> {
    spawn_agents_with(plan, n, p, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Places `n` agents uniformly (with replacement) over walkable cells and
/// draws each agent's compliance flag from Bernoulli(`p`). Per agent the
/// generator is consumed cell first, then flag.
pub fn spawn_agents_with<R: Rng + ?Sized>(
    plan: &FloorPlan,
    n: usize,
    p: f64,
    rng: &mut R,
) -> Result<Vec<Agent>, PopulationError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PopulationError::BadProbability(p.to_string()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let cells = plan.walkable_cells();
    if cells.is_empty() {
        return Err(PopulationError::NoWalkableCells(n));
    }
    Ok((0..n)
        .map(|id| {
            let pos = cells[rng.random_range(0..cells.len())];
            // One uniform draw per flag for every p, so positions line up across p.
            let compliant = rng.random::<f64>() < p;
            Agent {
                id,
                pos,
                compliant,
                target: None,
                evacuated_at: None,
            }
        })
        .collect())
}

/// Checks the announcement against the plan: both exits exist, they
/// differ, and the designated exit is reachable from every walkable cell.
pub fn validate_pa(plan: &FloorPlan, fields: &DistanceFields, pa: &PaMessage) -> Result<(), PopulationError> {
    PaMessage::new(pa.blocked_exit, pa.designated_exit)?;
    for id in [pa.blocked_exit, pa.designated_exit] {
        if plan.exit_cell(id).is_none() {
            return Err(PopulationError::UnknownExit(id));
        }
    }
    if let Some(from) = plan
        .walkable_cells()
        .into_iter()
        .find(|&c| fields.distance(pa.designated_exit, c).is_none())
    {
        return Err(PopulationError::Unreachable {
            exit: pa.designated_exit,
            from,
        });
    }
    Ok(())
}

/// Every agent still inside retargets to the designated exit; the blocked
/// exit is added to `blocked`.
pub fn receive_pa(
    agents: &mut [Agent],
    pa: &PaMessage,
    fields: &DistanceFields,
    blocked: &mut BTreeSet<ExitId>,
) -> Result<(), PopulationError> {
    PaMessage::new(pa.blocked_exit, pa.designated_exit)?;
    if fields.get(pa.designated_exit).is_none() {
        return Err(PopulationError::UnknownExit(pa.designated_exit));
    }
    if let Some(a) = agents
        .iter()
        .find(|a| !a.is_evacuated() && fields.distance(pa.designated_exit, a.pos).is_none())
    {
        return Err(PopulationError::Unreachable {
            exit: pa.designated_exit,
            from: a.pos,
        });
    }
    blocked.insert(pa.blocked_exit);
    for agent in agents.iter_mut().filter(|a| !a.is_evacuated()) {
        agent.target = Some(pa.designated_exit);
    }
    Ok(())
}

/// True when `pos` lies within `radius` meters of `from` (boundary inclusive).
pub fn within_radius(from: Coord, pos: Coord, radius: f64) -> bool {
    (from.distance_sq(pos) as f64) <= radius * radius
}

/// Signs whose center lies within their visibility radius of the agent.
/// Walls do not occlude.
pub fn perceive_signs<'a>(agent: &Agent, signs: &'a [Sign]) -> Vec<&'a Sign> {
    signs
        .iter()
        .filter(|s| within_radius(agent.pos, s.pos, s.visibility_radius))
        .collect()
}

/// New target for a compliant agent that sees at least one active sign:
/// the exit shown by the nearest such sign, ties to the smaller sign id.
/// Returns `None` when the target stays as it is.
pub fn decide_target(agent: &Agent, visible: &[&Sign]) -> Option<ExitId> {
    if !agent.compliant || agent.is_evacuated() {
        return None;
    }
    visible
        .iter()
        .filter_map(|s| s.displayed_exit.map(|e| (agent.pos.distance_sq(s.pos), s.id, e)))
        .min_by_key(|&(d, id, _)| (d, id))
        .map(|(_, _, e)| e)
}

/// The walkable neighbor that lowers the target distance, checked in
/// N, E, S, W order; the current cell when nothing improves.
pub fn plan_move(agent: &Agent, plan: &FloorPlan, fields: &DistanceFields, blocked: &BTreeSet<ExitId>) -> Result<Coord, PopulationError> {
    let target = agent.target.ok_or(PopulationError::NoTarget(agent.id))?;
    if blocked.contains(&target) {
        return Err(PopulationError::BlockedTarget(agent.id, target));
    }
    let field = fields.get(target).ok_or(PopulationError::UnknownExit(target))?;
    let here = field.get(agent.pos).ok_or(PopulationError::Unreachable {
        exit: target,
        from: agent.pos,
    })?;
    Ok(plan
        .neighbors(agent.pos)
        .find(|&n| field.get(n).is_some_and(|d| d < here))
        .unwrap_or(agent.pos))
}
