use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{feasible_actions, transition, Action, AgentState, MissionBudget};
use super::belief::{design_info, Belief, Channel, Site};
use crate::error::{Error, Result};

/// Relative slack under which two plan scores count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub surface: f64,
    pub subsurface: f64,
    /// Noise of a collected (lab-analysed) surface sample.
    pub collected: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            surface: 0.05,
            subsurface: 0.01,
            collected: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerWeights {
    pub lambda_e: f64,
    #[serde(default)]
    pub lambda_n: f64,
    /// Lookahead depth `H`, 1 to 3.
    #[serde(default = "one")]
    pub horizon: usize,
}

fn one() -> usize {
    1
}

impl Default for PlannerWeights {
    fn default() -> Self {
        Self {
            lambda_e: 1.0,
            lambda_n: 0.0,
            horizon: 1,
        }
    }
}

/// Reading produced by taking `action`, given the state it leads to.
pub fn observation_site(next: &AgentState, action: Action, t: usize, noise: &NoiseModel) -> (Site, f64) {
    let (channel, var) = match action {
        Action::Undock => (Channel::Subsurface, noise.subsurface),
        Action::Collect => (Channel::Surface, noise.collected),
        _ => (Channel::Surface, noise.surface),
    };
    (
        Site {
            pos: next.asv_pos,
            channel,
            t,
        },
        var,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanChoice {
    pub action: Action,
    pub score: f64,
    pub delta_i: f64,
}

struct Candidate {
    first: Action,
    first_energy: f64,
    score: f64,
    delta_i: f64,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    let scale = a.score.abs().max(b.score.abs()).max(1.0);
    if (a.score - b.score).abs() > TIE_TOL * scale {
        return a.score > b.score;
    }
    match a.first_energy.partial_cmp(&b.first_energy) {
        Some(Ordering::Less) => true,
        Some(Ordering::Greater) => false,
        _ => a.first < b.first,
    }
}

/// Greedy (or depth-`H` exhaustive) choice maximising
/// `ΔI − λ_E·c_move − λ_N·1[collect]`.
///
/// `ΔI` of a plan is the joint information of its readings, which for one
/// step is `½ ln(1 + σ_f²/σ²)` at the action's site. Ties go to the plan
/// whose first action spends least energy, then to the earlier action in
/// declaration order.
pub fn plan_step(
    belief: &mut Belief,
    agent: &AgentState,
    budget: &MissionBudget,
    weights: &PlannerWeights,
    noise: &NoiseModel,
    t: usize,
) -> Result<PlanChoice> {
    if !(1..=3).contains(&weights.horizon) {
        return Err(Error::Parameter(format!("lookahead {} outside 1..=3", weights.horizon)));
    }
    let mut best: Option<Candidate> = None;
    let mut path = Vec::with_capacity(weights.horizon);
    search(belief, agent, budget, weights, noise, t, &mut path, &mut best)?;
    let b = best.expect("feasible set is never empty");
    Ok(PlanChoice {
        action: b.first,
        score: b.score,
        delta_i: b.delta_i,
    })
}

struct Step {
    action: Action,
    energy: f64,
    move_cost: f64,
    site: Site,
    noise: f64,
}

#[allow(clippy::too_many_arguments)]
fn search(
    belief: &mut Belief,
    agent: &AgentState,
    budget: &MissionBudget,
    weights: &PlannerWeights,
    noise: &NoiseModel,
    t: usize,
    path: &mut Vec<Step>,
    best: &mut Option<Candidate>,
) -> Result<()> {
    for action in feasible_actions(agent, budget) {
        let tr = transition(agent, action, budget);
        let (site, var) = observation_site(&tr.next, action, t + path.len(), noise);
        path.push(Step {
            action,
            energy: tr.cost(),
            move_cost: tr.move_cost,
            site,
            noise: var,
        });
        if path.len() == weights.horizon {
            let sites: Vec<Site> = path.iter().map(|s| s.site).collect();
            let vars: Vec<f64> = path.iter().map(|s| s.noise).collect();
            let delta_i = if sites.len() == 1 {
                let (_, v) = belief.posterior(&sites)?;
                0.5 * (v[0] / vars[0]).ln_1p()
            } else {
                design_info(&belief.posterior_cov(&sites, None)?, &vars)?
            };
            let cost: f64 = path.iter().map(|s| s.move_cost).sum();
            let collects = path.iter().filter(|s| s.action == Action::Collect).count() as f64;
            let cand = Candidate {
                first: path[0].action,
                first_energy: path[0].energy,
                score: delta_i - weights.lambda_e * cost - weights.lambda_n * collects,
                delta_i,
            };
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                *best = Some(cand);
            }
        } else {
            search(belief, &tr.next, budget, weights, noise, t, path, best)?;
        }
        path.pop();
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwitchSpec {
    pub lambda_c: f64,
    pub lambda_g: f64,
    /// Reference probability of leaving the current kernel in one epoch,
    /// split evenly over the alternatives.
    pub q_switch: f64,
}

impl Default for SwitchSpec {
    fn default() -> Self {
        Self {
            lambda_c: 1.0,
            lambda_g: 1.0,
            q_switch: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchDecision {
    pub kernel_id: usize,
    pub switched: bool,
    /// Probability of leaving the current kernel.
    pub switch_probability: f64,
    /// `ΔI` of each alternative against the current kernel, current = 0.
    pub delta_i: Vec<f64>,
}

/// Draw the next kernel from the one-step transition odds
/// `(q_sw/q_stay)·exp(−λ_C + λ_G·ΔI)` against staying.
pub fn kernel_switch_decide(
    belief: &mut Belief,
    candidates: &[(Site, f64)],
    spec: &SwitchSpec,
    seed: u64,
) -> Result<SwitchDecision> {
    if !(spec.q_switch > 0.0 && spec.q_switch < 1.0) {
        return Err(Error::Parameter("q_switch must lie in (0, 1)".into()));
    }
    if !(spec.lambda_c.is_finite() && spec.lambda_g.is_finite()) {
        return Err(Error::Parameter("switch multipliers must be finite".into()));
    }
    let m = belief.kernels().len();
    let current = belief.kernel_id();
    let sites: Vec<Site> = candidates.iter().map(|c| c.0).collect();
    let vars: Vec<f64> = candidates.iter().map(|c| c.1).collect();
    let mut info = Vec::with_capacity(m);
    for k in 0..m {
        info.push(design_info(&belief.posterior_cov(&sites, Some(k))?, &vars)?);
    }
    let delta_i: Vec<f64> = info.iter().map(|i| i - info[current]).collect();
    if m == 1 {
        return Ok(SwitchDecision {
            kernel_id: current,
            switched: false,
            switch_probability: 0.0,
            delta_i,
        });
    }
    let ratio = (spec.q_switch / (m - 1) as f64) / (1.0 - spec.q_switch);
    let odds: Vec<f64> = (0..m)
        .map(|k| {
            if k == current {
                1.0
            } else {
                ratio * (-spec.lambda_c + spec.lambda_g * delta_i[k]).exp()
            }
        })
        .collect();
    let total: f64 = odds.iter().sum();
    let switch_probability = if total.is_finite() {
        1.0 - 1.0 / total
    } else {
        1.0
    };
    let u: f64 = ChaCha8Rng::seed_from_u64(seed).random();
    let mut kernel_id = current;
    if total.is_finite() {
        let mut acc = 0.0;
        for (k, o) in odds.iter().enumerate() {
            acc += o / total;
            if u < acc {
                kernel_id = k;
                break;
            }
        }
    } else {
        kernel_id = (0..m)
            .filter(|k| *k != current)
            .max_by(|a, b| delta_i[*a].total_cmp(&delta_i[*b]))
            .unwrap_or(current);
    }
    Ok(SwitchDecision {
        kernel_id,
        switched: kernel_id != current,
        switch_probability,
        delta_i,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloomsim::belief::Observation;
    use crate::bloomsim::world::Flow;
    use crate::kernelspace::KernelSpec;
    use approx::assert_abs_diff_eq;

    fn belief() -> Belief {
        Belief::new(
            vec![
                KernelSpec::squared_exponential(0.3, 0.25),
                KernelSpec::squared_exponential(0.1, 0.25),
            ],
            0,
            Flow::still(),
            [0.15, 0.1],
        )
        .unwrap()
    }

    fn surface(x: f64, y: f64) -> (Site, f64) {
        (
            Site {
                pos: [x, y],
                channel: Channel::Surface,
                t: 0,
            },
            0.05,
        )
    }

    #[test]
    fn uniform_variance_ties_go_to_stay() {
        let mut b = belief();
        let budget = MissionBudget {
            n_max: 0,
            ..MissionBudget::default()
        };
        let agent = AgentState::docked_at([0.5, 0.5], 3.0);
        let w = PlannerWeights {
            lambda_e: 0.0,
            ..PlannerWeights::default()
        };
        // no data: every surface reading has the prior variance; undock reads
        // the lower-noise subsurface channel, so remove it from contention
        let noise = NoiseModel {
            subsurface: 0.05,
            ..NoiseModel::default()
        };
        let c = plan_step(&mut b, &agent, &budget, &w, &noise, 0).unwrap();
        assert_eq!(c.action, Action::Stay);
    }

    #[test]
    fn moves_toward_uncertainty() {
        let mut b = belief();
        b.set_kernel(1).unwrap();
        // pin down everything near the agent except the cell to the east
        for (x, y) in [(0.5, 0.5), (0.45, 0.5), (0.5, 0.55), (0.5, 0.45), (0.45, 0.55), (0.45, 0.45)] {
            for _ in 0..3 {
                b.observe(Observation {
                    site: surface(x, y).0,
                    value: 0.0,
                    noise_var: 0.01,
                })
                .unwrap();
            }
        }
        let budget = MissionBudget {
            n_max: 0,
            ..MissionBudget::default()
        };
        let agent = AgentState::docked_at([0.5, 0.5], 3.0);
        let w = PlannerWeights {
            lambda_e: 0.0,
            ..PlannerWeights::default()
        };
        let noise = NoiseModel {
            subsurface: 1e6,
            ..NoiseModel::default()
        };
        let c = plan_step(&mut b, &agent, &budget, &w, &noise, 0).unwrap();
        assert!(matches!(c.action, Action::Move(0) | Action::Move(1) | Action::Move(7)));
    }

    #[test]
    fn lookahead_runs() {
        let mut b = belief();
        let agent = AgentState::docked_at([0.5, 0.5], 3.0);
        let w = PlannerWeights {
            horizon: 2,
            ..PlannerWeights::default()
        };
        let c = plan_step(&mut b, &agent, &MissionBudget::default(), &w, &NoiseModel::default(), 0).unwrap();
        assert!(c.delta_i > 0.0);
        let bad = PlannerWeights {
            horizon: 4,
            ..PlannerWeights::default()
        };
        assert!(plan_step(&mut b, &agent, &MissionBudget::default(), &bad, &NoiseModel::default(), 0).is_err());
    }

    #[test]
    fn equality_boundary_gives_half() {
        let mut b = belief();
        let cands: Vec<_> = [(0.3, 0.3), (0.4, 0.3), (0.3, 0.4)].iter().map(|p| surface(p.0, p.1)).collect();
        let probe = kernel_switch_decide(&mut b, &cands, &SwitchSpec::default(), 0).unwrap();
        let di = probe.delta_i[1];
        assert!(di > 0.0);
        let spec = SwitchSpec {
            lambda_c: 2.0 * di,
            lambda_g: 2.0,
            q_switch: 0.5,
        };
        let d = kernel_switch_decide(&mut b, &cands, &spec, 0).unwrap();
        assert_abs_diff_eq!(d.switch_probability, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn huge_switch_cost_never_switches() {
        let mut b = belief();
        let cands = vec![surface(0.3, 0.3), surface(0.35, 0.3)];
        let spec = SwitchSpec {
            lambda_c: 1e3,
            ..SwitchSpec::default()
        };
        for seed in 0..2000 {
            assert!(!kernel_switch_decide(&mut b, &cands, &spec, seed).unwrap().switched);
        }
    }
}
