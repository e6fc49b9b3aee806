use serde::{Deserialize, Serialize};

use super::world::{norm, sub, Vec2};
use crate::error::{Error, Result};

/// Slack on energy comparisons, absorbing rounding in straight-line returns.
const ENERGY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigma {
    Docked,
    Undocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub asv_pos: Vec2,
    pub auv_pos: Vec2,
    pub sigma: Sigma,
    pub dive_elapsed: usize,
    pub energy_remaining: f64,
    pub samples_collected: usize,
}

impl AgentState {
    pub fn docked_at(pos: Vec2, energy: f64) -> Self {
        Self {
            asv_pos: pos,
            auv_pos: pos,
            sigma: Sigma::Docked,
            dive_elapsed: 0,
            energy_remaining: energy,
            samples_collected: 0,
        }
    }

    pub fn is_diving(&self, budget: &MissionBudget) -> bool {
        self.sigma == Sigma::Undocked && self.dive_elapsed < budget.tau_dive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionBudget {
    pub e_max: f64,
    pub n_max: usize,
    pub c_move_unit: f64,
    pub c_dive_step: f64,
    pub tau_dive: usize,
    pub delta_meet: f64,
    pub base_pos: Vec2,
    pub horizon_steps: usize,
    /// ASV step length `h` for the eight neighbourhood moves.
    pub move_step: f64,
    /// Launch point; the base when absent.
    #[serde(default)]
    pub start_pos: Option<Vec2>,
}

impl Default for MissionBudget {
    fn default() -> Self {
        Self {
            e_max: 3.0,
            n_max: 10,
            c_move_unit: 1.0,
            c_dive_step: 0.02,
            tau_dive: 5,
            delta_meet: 0.1,
            base_pos: [0.05, 0.5],
            horizon_steps: 60,
            move_step: 0.05,
            start_pos: None,
        }
    }
}

impl MissionBudget {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("e_max", self.e_max),
            ("c_move_unit", self.c_move_unit),
            ("c_dive_step", self.c_dive_step),
            ("delta_meet", self.delta_meet),
            ("move_step", self.move_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} = {v} must be > 0")));
            }
        }
        if self.tau_dive == 0 || self.horizon_steps == 0 {
            return Err(Error::Parameter("tau_dive and horizon_steps must be >= 1".into()));
        }
        if self.delta_meet >= std::f64::consts::SQRT_2 {
            return Err(Error::Parameter("delta_meet must be below the lake diameter".into()));
        }
        for p in std::iter::once(&self.base_pos).chain(self.start_pos.as_ref()) {
            if !in_lake(*p) {
                return Err(Error::Parameter(format!("position {p:?} is outside the lake")));
            }
        }
        let start = self.start();
        if self.c_move_unit * norm(sub(start, self.base_pos)) > self.e_max + ENERGY_EPS {
            return Err(Error::Parameter("e_max cannot cover the return from the start point".into()));
        }
        Ok(())
    }

    pub fn start(&self) -> Vec2 {
        self.start_pos.unwrap_or(self.base_pos)
    }

    pub fn return_cost(&self, pos: Vec2) -> f64 {
        self.c_move_unit * norm(sub(pos, self.base_pos))
    }

    /// Energy that must stay in hand: the straight return plus any dive
    /// steps still owed.
    pub fn reserve(&self, agent: &AgentState) -> f64 {
        let owed = if agent.sigma == Sigma::Undocked {
            self.tau_dive.saturating_sub(agent.dive_elapsed) as f64 * self.c_dive_step
        } else {
            0.0
        };
        self.return_cost(agent.asv_pos) + owed
    }
}

pub(crate) fn in_lake(p: Vec2) -> bool {
    (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])
}

/// Declaration order is the tie-break order of the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Stay,
    /// Direction index `d`, heading `d · 45°` counter-clockwise from east.
    Move(u8),
    Collect,
    Undock,
    Redock,
    ReturnToBase,
}

impl Action {
    pub fn all_moves() -> impl Iterator<Item = Action> {
        (0..8).map(Action::Move)
    }

    pub fn label(&self) -> String {
        match self {
            Action::Move(d) => format!("move_{d}"),
            Action::Stay => "stay".into(),
            Action::Collect => "collect".into(),
            Action::Undock => "undock".into(),
            Action::Redock => "redock".into(),
            Action::ReturnToBase => "return_to_base".into(),
        }
    }
}

fn move_offset(d: u8, h: f64) -> Vec2 {
    const DIRS: [(f64, f64); 8] = [
        (1.0, 0.0),
        (1.0, 1.0),
        (0.0, 1.0),
        (-1.0, 1.0),
        (-1.0, 0.0),
        (-1.0, -1.0),
        (0.0, -1.0),
        (1.0, -1.0),
    ];
    let (dx, dy) = DIRS[d as usize % 8];
    [dx * h, dy * h]
}

/// Outcome of one action: the next state and its energy split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: AgentState,
    pub move_cost: f64,
    pub dive_cost: f64,
}

impl Transition {
    pub fn cost(&self) -> f64 {
        self.move_cost + self.dive_cost
    }
}

/// Apply an action without feasibility checks.
pub fn transition(agent: &AgentState, action: Action, budget: &MissionBudget) -> Transition {
    let mut next = *agent;
    let mut move_cost = 0.0;
    let mut dive_cost = 0.0;
    match action {
        Action::Stay | Action::Collect | Action::Redock | Action::Undock => {}
        Action::Move(d) => {
            let o = move_offset(d, budget.move_step);
            next.asv_pos = [agent.asv_pos[0] + o[0], agent.asv_pos[1] + o[1]];
        }
        Action::ReturnToBase => {
            let to = sub(budget.base_pos, agent.asv_pos);
            let d = norm(to);
            next.asv_pos = if d <= budget.move_step {
                budget.base_pos
            } else {
                let s = budget.move_step / d;
                [agent.asv_pos[0] + s * to[0], agent.asv_pos[1] + s * to[1]]
            };
        }
    }
    if next.asv_pos != agent.asv_pos {
        move_cost = budget.c_move_unit * norm(sub(next.asv_pos, agent.asv_pos));
    }
    match action {
        Action::Collect => next.samples_collected += 1,
        Action::Undock => {
            next.sigma = Sigma::Undocked;
            next.auv_pos = agent.asv_pos;
            next.dive_elapsed = 0;
        }
        Action::Redock => {
            next.sigma = Sigma::Docked;
            next.auv_pos = next.asv_pos;
            next.dive_elapsed = 0;
        }
        _ => {}
    }
    if next.sigma == Sigma::Docked {
        next.auv_pos = next.asv_pos;
    } else if next.dive_elapsed < budget.tau_dive {
        dive_cost = budget.c_dive_step;
        next.dive_elapsed += 1;
    }
    next.energy_remaining = agent.energy_remaining - move_cost - dive_cost;
    Transition {
        next,
        move_cost,
        dive_cost,
    }
}

fn structurally_allowed(agent: &AgentState, action: Action, budget: &MissionBudget) -> bool {
    match action {
        Action::Stay | Action::Move(_) => true,
        Action::Collect => agent.samples_collected < budget.n_max,
        Action::Undock => agent.sigma == Sigma::Docked,
        Action::Redock => {
            agent.sigma == Sigma::Undocked
                && agent.dive_elapsed >= budget.tau_dive
                && norm(sub(agent.asv_pos, agent.auv_pos)) <= budget.delta_meet
        }
        Action::ReturnToBase => agent.sigma == Sigma::Docked && agent.asv_pos != budget.base_pos,
    }
}

/// Whether `action` keeps every mission constraint satisfied.
pub fn admissible(agent: &AgentState, action: Action, budget: &MissionBudget) -> bool {
    if !structurally_allowed(agent, action, budget) {
        return false;
    }
    let tr = transition(agent, action, budget);
    let next = &tr.next;
    if !in_lake(next.asv_pos) {
        return false;
    }
    if next.sigma == Sigma::Undocked && norm(sub(next.asv_pos, next.auv_pos)) > budget.delta_meet {
        return false;
    }
    next.energy_remaining + ENERGY_EPS >= budget.reserve(next)
}

/// Admissible actions in tie-break order. Never empty for a state that
/// satisfies the reserve: heading home (docked) or loitering and redocking
/// (undocked) always remain available.
pub fn feasible_actions(agent: &AgentState, budget: &MissionBudget) -> Vec<Action> {
    let mut out: Vec<Action> = std::iter::once(Action::Stay)
        .chain(Action::all_moves())
        .chain([Action::Collect, Action::Undock, Action::Redock, Action::ReturnToBase])
        .filter(|a| admissible(agent, *a, budget))
        .collect();
    if out.is_empty() {
        log::warn!("no admissible action at {:?}; falling back to the return rule", agent.asv_pos);
        out.push(if agent.sigma == Sigma::Docked {
            Action::ReturnToBase
        } else {
            Action::Stay
        });
    }
    out
}
