use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::agent::{feasible_actions, transition, Action, AgentState, MissionBudget, Sigma};
use super::belief::{Belief, Channel, Observation, Site};
use super::planner::{kernel_switch_decide, observation_site, plan_step, NoiseModel, PlannerWeights, SwitchSpec};
use super::world::{norm, step_environment, sub, BloomWorld, WorldParams};
use crate::error::{Error, Result};
use crate::kernelspace::KernelSpec;

const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Adaptive,
    FixedA,
    FixedB,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Adaptive => "adaptive",
            Policy::FixedA => "fixed_a",
            Policy::FixedB => "fixed_b",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Policy::Adaptive),
            "fixed_a" => Ok(Policy::FixedA),
            "fixed_b" => Ok(Policy::FixedB),
            _ => Err(Error::Parameter(format!("unknown policy {s:?}"))),
        }
    }
}

fn default_kernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec::squared_exponential(0.3, 0.25),
        KernelSpec::squared_exponential(0.1, 0.25),
    ]
}

fn default_epoch() -> usize {
    10
}

fn default_forecast() -> usize {
    5
}

/// Everything an episode needs apart from the policy and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloomConfig {
    #[serde(default)]
    pub world: WorldParams,
    #[serde(default)]
    pub budget: MissionBudget,
    #[serde(default)]
    pub weights: PlannerWeights,
    #[serde(default)]
    pub switch: SwitchSpec,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Kernel family; index 0 is `k_A`, index 1 is `k_B`.
    #[serde(default = "default_kernels")]
    pub kernels: Vec<KernelSpec>,
    #[serde(default = "default_epoch")]
    pub k_epoch: usize,
    #[serde(default = "default_forecast")]
    pub forecast_horizon: usize,
}

impl Default for BloomConfig {
    fn default() -> Self {
        Self {
            world: WorldParams::default(),
            budget: MissionBudget::default(),
            weights: PlannerWeights::default(),
            switch: SwitchSpec::default(),
            noise: NoiseModel::default(),
            kernels: default_kernels(),
            k_epoch: default_epoch(),
            forecast_horizon: default_forecast(),
        }
    }
}

impl BloomConfig {
    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        if self.kernels.len() < 2 {
            return Err(Error::Parameter("kernel family needs at least k_A and k_B".into()));
        }
        for k in &self.kernels {
            k.validate()?;
        }
        if self.k_epoch == 0 {
            return Err(Error::Parameter("k_epoch must be >= 1".into()));
        }
        for v in [self.noise.surface, self.noise.subsurface, self.noise.collected] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter("noise variances must be > 0".into()));
            }
        }
        if self.world.grid_n == 0 {
            return Err(Error::Parameter("grid_n must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_velocity(&self, v: [f64; 2]) -> Self {
        let mut c = self.clone();
        c.world.flow.velocity = v;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t: usize,
    pub action: String,
    pub asv_pos: [f64; 2],
    pub auv_pos: [f64; 2],
    pub sigma: Sigma,
    pub energy: f64,
    pub step_cost: f64,
    pub info_gain: f64,
    pub cumulative_info: f64,
    pub kernel_id: usize,
    pub samples_collected: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub switch_probability: Option<f64>,
    pub returning: bool,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub policy: Policy,
    pub steps: Vec<StepLog>,
    pub forecast_rmse_surface: f64,
    pub forecast_rmse_subsurface: f64,
    pub total_info: f64,
    pub energy_used: f64,
    pub samples_returned: usize,
    pub constraints_violated: usize,
    pub e_max: f64,
    pub n_max: usize,
    pub advection_speed: f64,
    /// `Σ step costs + remaining − E_max`.
    pub ledger_residual: f64,
    pub kernel_switches: usize,
    pub jitter_events: usize,
    /// Sampling steps before the horizon or the return rule ended the survey.
    pub survey_steps: usize,
}

fn audit(agent: &AgentState, budget: &MissionBudget) -> usize {
    let mut bad = 0;
    if agent.energy_remaining < -AUDIT_TOL {
        bad += 1;
    }
    if agent.energy_remaining + AUDIT_TOL < budget.reserve(agent) {
        bad += 1;
    }
    if agent.samples_collected > budget.n_max {
        bad += 1;
    }
    match agent.sigma {
        Sigma::Docked if agent.asv_pos != agent.auv_pos => bad += 1,
        Sigma::Undocked if norm(sub(agent.asv_pos, agent.auv_pos)) > budget.delta_meet + AUDIT_TOL => bad += 1,
        _ => {}
    }
    if !super::agent::in_lake(agent.asv_pos) {
        bad += 1;
    }
    bad
}

fn read(world: &BloomWorld, site: &Site) -> f64 {
    match site.channel {
        Channel::Surface => world.surface(site.pos),
        Channel::Subsurface => world.subsurface(site.pos),
    }
}

/// Simulate one mission.
///
/// Each step the planner picks an action, its reading is taken against the
/// true field, and the world advances. The adaptive policy redraws its kernel
/// every `k_epoch` steps from the transition odds, scoring the sites the
/// planner could read next. The survey stops at the horizon, or earlier once
/// the energy margin over the reserve drops below one move; the vehicle then
/// finishes any dive, redocks and heads home. The forecast compares the
/// advected posterior mean `forecast_horizon` steps after the survey with the
/// true fields on the grid.
pub fn run_episode(cfg: &BloomConfig, policy: Policy, seed: u64) -> Result<EpisodeResult> {
    cfg.validate()?;
    let budget = &cfg.budget;
    let mut world = BloomWorld::generate(&cfg.world, budget.horizon_steps + cfg.forecast_horizon, seed)?;
    let start_kernel = if policy == Policy::FixedB { 1 } else { 0 };
    let mut belief = Belief::new(cfg.kernels.clone(), start_kernel, cfg.world.flow, cfg.world.subsurface_offset)?;
    let mut agent = AgentState::docked_at(budget.start(), budget.e_max);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let min_move = budget.c_move_unit * budget.move_step;

    let mut steps = Vec::new();
    let mut spent = 0.0;
    let mut total_info = 0.0;
    let mut violations = audit(&agent, budget);
    let mut switches = 0;
    let mut survey_steps = 0;

    for t in 0..budget.horizon_steps {
        if budget.e_max - spent - budget.reserve(&agent) < min_move && agent.sigma == Sigma::Docked {
            break;
        }
        let mut switch_probability = None;
        if policy == Policy::Adaptive && t % cfg.k_epoch == 0 {
            let cands: Vec<(Site, f64)> = feasible_actions(&agent, budget)
                .into_iter()
                .map(|a| observation_site(&transition(&agent, a, budget).next, a, t, &cfg.noise))
                .collect();
            let seed_t = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(t as u64);
            let d = kernel_switch_decide(&mut belief, &cands, &cfg.switch, seed_t)?;
            switch_probability = Some(d.switch_probability);
            if d.switched {
                switches += 1;
                belief.set_kernel(d.kernel_id)?;
            }
        }
        let choice = plan_step(&mut belief, &agent, budget, &cfg.weights, &cfg.noise, t)?;
        let tr = transition(&agent, choice.action, budget);
        let mut readings = vec![observation_site(&tr.next, choice.action, t, &cfg.noise)];
        // the AUV keeps profiling while a dive it did not just start is running
        if agent.is_diving(budget) {
            readings.push((
                Site {
                    pos: tr.next.auv_pos,
                    channel: Channel::Subsurface,
                    t,
                },
                cfg.noise.subsurface,
            ));
        }
        let mut gained = 0.0;
        for (site, var) in readings {
            let (_, v) = belief.posterior(&[site])?;
            gained += 0.5 * (v[0] / var).ln_1p();
            let value = read(&world, &site) + var.sqrt() * std_normal.sample(&mut noise_rng);
            belief.observe(Observation {
                site,
                value,
                noise_var: var,
            })?;
        }
        total_info += gained;
        spent += tr.cost();
        agent = tr.next;
        agent.energy_remaining = budget.e_max - spent;
        let bad = audit(&agent, budget);
        violations += bad;
        world = step_environment(&world);
        survey_steps += 1;
        steps.push(StepLog {
            t,
            action: choice.action.label(),
            asv_pos: agent.asv_pos,
            auv_pos: agent.auv_pos,
            sigma: agent.sigma,
            energy: agent.energy_remaining,
            step_cost: tr.cost(),
            info_gain: gained,
            cumulative_info: total_info,
            kernel_id: belief.kernel_id(),
            samples_collected: agent.samples_collected,
            switch_probability,
            returning: false,
            violations: bad,
        });
    }

    // forecast from the end of the survey
    let t_end = world.t;
    let mut future = world.clone();
    for _ in 0..cfg.forecast_horizon {
        future = step_environment(&future);
    }
    let t_f = t_end + cfg.forecast_horizon;
    let rmse = |channel: Channel, truth: Vec<f64>, belief: &mut Belief| -> Result<f64> {
        let sites: Vec<Site> = world
            .grid
            .points()
            .iter()
            .map(|p| Site {
                pos: [p[0], p[1]],
                channel,
                t: t_f,
            })
            .collect();
        let (mean, _) = belief.posterior(&sites)?;
        let w = world.grid.weights();
        let wsum: f64 = w.iter().sum();
        let sq: f64 = mean
            .iter()
            .zip(&truth)
            .zip(w)
            .map(|((m, y), w)| w * (m - y) * (m - y))
            .sum();
        Ok((sq / wsum).sqrt())
    };
    let forecast_rmse_surface = rmse(Channel::Surface, future.surface_on_grid(), &mut belief)?;
    let forecast_rmse_subsurface = rmse(Channel::Subsurface, future.subsurface_on_grid(), &mut belief)?;

    // return leg
    let mut t = t_end;
    let cap = budget.tau_dive + 4 + (2.0 / budget.move_step).ceil() as usize;
    for _ in 0..cap {
        if agent.sigma == Sigma::Docked && agent.asv_pos == budget.base_pos {
            break;
        }
        let action = match agent.sigma {
            Sigma::Undocked if agent.dive_elapsed < budget.tau_dive => Action::Stay,
            Sigma::Undocked => Action::Redock,
            Sigma::Docked => Action::ReturnToBase,
        };
        let tr = transition(&agent, action, budget);
        spent += tr.cost();
        agent = tr.next;
        agent.energy_remaining = budget.e_max - spent;
        let bad = audit(&agent, budget);
        violations += bad;
        steps.push(StepLog {
            t,
            action: action.label(),
            asv_pos: agent.asv_pos,
            auv_pos: agent.auv_pos,
            sigma: agent.sigma,
            energy: agent.energy_remaining,
            step_cost: tr.cost(),
            info_gain: 0.0,
            cumulative_info: total_info,
            kernel_id: belief.kernel_id(),
            samples_collected: agent.samples_collected,
            switch_probability: None,
            returning: true,
            violations: bad,
        });
        t += 1;
    }
    let home = agent.sigma == Sigma::Docked && agent.asv_pos == budget.base_pos;
    if !home {
        violations += 1;
    }
    let ledger: f64 = steps.iter().map(|s| s.step_cost).sum();
    let ledger_residual = ledger + agent.energy_remaining - budget.e_max;
    if ledger_residual.abs() > AUDIT_TOL {
        violations += 1;
    }

    Ok(EpisodeResult {
        seed,
        policy,
        steps,
        forecast_rmse_surface,
        forecast_rmse_subsurface,
        total_info,
        energy_used: spent,
        samples_returned: if home { agent.samples_collected } else { 0 },
        constraints_violated: violations,
        e_max: budget.e_max,
        n_max: budget.n_max,
        advection_speed: cfg.world.flow.speed(),
        ledger_residual,
        kernel_switches: switches,
        jitter_events: belief.jitter_events(),
        survey_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BloomConfig {
        let mut c = BloomConfig::default();
        c.world.grid_n = 12;
        c.budget.horizon_steps = 20;
        c
    }

    #[test]
    fn deterministic_given_seed() {
        let c = small();
        let a = run_episode(&c, Policy::Adaptive, 4).unwrap();
        let b = run_episode(&c, Policy::Adaptive, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn zero_budget_goes_home() {
        let mut c = small();
        let start = [0.6, 0.5];
        c.budget.start_pos = Some(start);
        c.budget.e_max = c.budget.return_cost(start);
        let r = run_episode(&c, Policy::FixedA, 1).unwrap();
        assert_eq!(r.survey_steps, 0);
        assert_eq!(r.samples_returned, 0);
        assert_eq!(r.constraints_violated, 0);
        assert!(r.steps.iter().all(|s| s.action == "return_to_base"));
        assert_eq!(r.steps.last().unwrap().asv_pos, c.budget.base_pos);
    }

    #[test]
    fn ledger_and_invariants_hold() {
        let c = small();
        for policy in [Policy::Adaptive, Policy::FixedA, Policy::FixedB] {
            let r = run_episode(&c, policy, 9).unwrap();
            assert_eq!(r.constraints_violated, 0, "{policy:?}");
            assert!(r.ledger_residual.abs() <= 1e-9);
            assert!(r.energy_used <= r.e_max + 1e-9);
            assert!(r.samples_returned <= r.n_max);
            for s in &r.steps {
                if s.sigma == Sigma::Docked {
                    assert_eq!(s.asv_pos, s.auv_pos);
                }
            }
        }
    }

    #[test]
    fn fixed_policies_never_switch() {
        let c = small();
        let a = run_episode(&c, Policy::FixedA, 2).unwrap();
        assert!(a.steps.iter().all(|s| s.kernel_id == 0));
        let b = run_episode(&c, Policy::FixedB, 2).unwrap();
        assert!(b.steps.iter().all(|s| s.kernel_id == 1));
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [Policy::Adaptive, Policy::FixedA, Policy::FixedB] {
            assert_eq!(Policy::parse(p.as_str()).unwrap(), p);
        }
        assert!(Policy::parse("greedy").is_err());
    }
}
