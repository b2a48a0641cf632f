//! Monte Carlo driver: builds every run's contexts, environment and
//! controllers from the experiment config and scores them.

use crate::agents::{
    optimal_policy, CdmSwitcher, ContextQL, ContextQState, Controller, ModelBasedSwitcher, QLearner, SrSwitcher,
    Ucrl2, restart_epochs,
};
use crate::changepoint::{detect_tuples, DetectorConfig};
use crate::config::{AgentSpec, EnvironmentSpec, ExperimentConfig};
use crate::envs::{
    build_sensor_mdp, generate_random_mdp_with, ChangepointSchedule, Environment, NonStationaryEnv, RewardRange,
    SensorConfig, TrafficEnv,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mdp::{epsilon_perturbed, ExperienceTuple, MdpModel};
use crate::rng::{derive_seed, label, run_seed, stream, SimRng};

use super::regret::{regret, PiecewisePolicy};
use super::report::{MetricsReport, RunRecord};

/// Run every agent of `config` on `config.runs` independent runs.
///
/// Run `i` is seeded with `run_seed(config.seed, i)`; within a run all agents
/// face the same contexts and the same environment noise. Records are
/// ordered by run, then by agent, whatever `exec` is.
pub fn run_experiment(config: &ExperimentConfig, exec: Execution) -> Result<MetricsReport> {
    config.validate()?;
    let schedule = config.schedule.build()?;
    let per_run = exec.map(config.runs, |run| run_once(config, &schedule, run, exec));
    let mut records = Vec::with_capacity(config.runs * config.agents.len());
    for r in per_run {
        records.extend(r?);
    }
    let agents: Vec<String> = config.agents.iter().map(AgentSpec::label).collect();
    MetricsReport::from_records(
        &config.name,
        config.seed,
        schedule.changepoints().to_vec(),
        &config.evaluation.windows,
        config.environment.reports_cost(),
        &agents,
        records,
    )
}

/// The environment family of one run.
struct World<'a> {
    spec: &'a EnvironmentSpec,
    schedule: &'a ChangepointSchedule,
    /// Context models by label, when known.
    contexts: Vec<MdpModel>,
    n_states: usize,
    n_actions: usize,
    discount: f64,
    reward_range: (f64, f64),
    initial_state: usize,
}

impl<'a> World<'a> {
    fn new(config: &'a ExperimentConfig, schedule: &'a ChangepointSchedule, seed: u64) -> Result<Self> {
        let initial_state = config.evaluation.initial_state;
        match &config.environment {
            spec @ EnvironmentSpec::Random { n_states, n_actions, discount, reward_low, reward_high } => {
                let n_models = schedule.contexts().iter().max().map_or(1, |m| m + 1);
                let mut rng = stream(derive_seed(seed, label::MODEL), 0);
                let range = RewardRange { low: *reward_low, high: *reward_high };
                let contexts = (0..n_models)
                    .map(|_| generate_random_mdp_with(*n_states, *n_actions, *discount, range, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                // Equal bounds give a degenerate range; widen it for UCRL2.
                let hi = if reward_high > reward_low { *reward_high } else { reward_low + 1.0 };
                Ok(World {
                    spec,
                    schedule,
                    contexts,
                    n_states: *n_states,
                    n_actions: *n_actions,
                    discount: *discount,
                    reward_range: (*reward_low, hi),
                    initial_state,
                })
            }
            spec @ EnvironmentSpec::Sensor { node, harvest_rates } => {
                let contexts = harvest_rates
                    .iter()
                    .map(|&lambda_e| build_sensor_mdp(&SensorConfig { lambda_e, ..node.clone() }))
                    .collect::<Result<Vec<_>>>()?;
                let (lo, hi) = contexts.iter().flat_map(|m| m.rewards()).fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), &r| (lo.min(r), hi.max(r)),
                );
                Ok(World {
                    spec,
                    schedule,
                    n_states: node.n_states(),
                    n_actions: contexts[0].n_actions(),
                    discount: node.discount,
                    reward_range: (lo, if hi > lo { hi } else { lo + 1.0 }),
                    contexts,
                    initial_state,
                })
            }
            spec @ EnvironmentSpec::Traffic { junction, .. } => Ok(World {
                spec,
                schedule,
                contexts: Vec::new(),
                n_states: junction.n_states(),
                n_actions: junction.n_actions(),
                discount: junction.discount,
                reward_range: (-((junction.lane_capacity * crate::envs::N_LANES) as f64), 0.0),
                initial_state,
            }),
        }
    }

    fn env(&self) -> Result<Box<dyn Environment>> {
        Ok(match self.spec {
            EnvironmentSpec::Traffic { junction, regimes } => {
                Box::new(TrafficEnv::new(junction.clone(), regimes.clone(), self.schedule.clone())?)
            }
            _ => Box::new(NonStationaryEnv::new(
                self.contexts.clone(),
                self.schedule.clone(),
                self.initial_state,
            )?),
        })
    }

    fn pattern(&self) -> Vec<usize> {
        self.schedule.contexts().to_vec()
    }
}

/// One Monte Carlo run of every agent.
fn run_once(config: &ExperimentConfig, schedule: &ChangepointSchedule, run: usize, exec: Execution) -> Result<Vec<RunRecord>> {
    let seed = run_seed(config.seed, run);
    let world = World::new(config, schedule, seed)?;
    config
        .agents
        .iter()
        .map(|agent| {
            let mut detector = config.detector_for(agent);
            detector.execution = exec;
            run_agent(config, &world, agent, detector, run, seed)
        })
        .collect()
}

/// What one agent produced in the scored episode.
struct Outcome {
    rewards: Vec<f64>,
    tau_star: Option<u64>,
    detections: Vec<u64>,
    switches: Vec<u64>,
    regret: Option<f64>,
    q_tables: usize,
    q_bytes: usize,
}

fn run_agent(
    config: &ExperimentConfig,
    world: &World,
    agent: &AgentSpec,
    detector: DetectorConfig,
    run: usize,
    seed: u64,
) -> Result<RunRecord> {
    let scored = config.evaluation.learning_episodes as u64;
    let mut agent_rng = stream(derive_seed(seed, label::AGENT), 0);
    let outcome = match agent {
        AgentSpec::Probe { method, epsilon, .. } => {
            let (tuples, rewards) = probe(world, *epsilon, scored, seed, &mut agent_rng)?;
            let mut rng = stream(derive_seed(seed, label::DETECTOR), 0);
            let changes = detect_tuples(*method, &tuples, world.n_states, &detector, &mut rng)?;
            let tau_star = changes.iter().max_by(|a, b| a.statistic.total_cmp(&b.statistic)).map(|c| c.epoch);
            Outcome {
                rewards,
                tau_star,
                detections: changes.iter().map(|c| c.epoch).collect(),
                switches: Vec::new(),
                regret: None,
                q_tables: 0,
                q_bytes: 0,
            }
        }
        AgentSpec::Switcher { method, epsilon, online: false, .. } => {
            // Detect on a probe trajectory, then replay the same noise with
            // the optimal policies switched at the detected changepoints.
            let (tuples, _) = probe(world, *epsilon, scored, seed, &mut agent_rng)?;
            let mut rng = stream(derive_seed(seed, label::DETECTOR), 0);
            let mut changes = detect_tuples(*method, &tuples, world.n_states, &detector, &mut rng)?;
            let tau_star = changes.iter().max_by(|a, b| a.statistic.total_cmp(&b.statistic)).map(|c| c.epoch);
            let pattern = world.pattern();
            changes.sort_by(|a, b| b.statistic.total_cmp(&a.statistic));
            changes.truncate(pattern.len() - 1);
            let mut switches: Vec<u64> = changes.iter().map(|c| c.epoch).collect();
            switches.sort_unstable();
            let policy = PiecewisePolicy {
                policies: pattern[..=switches.len()]
                    .iter()
                    .map(|&c| optimal_policy(&world.contexts[c]))
                    .collect::<Result<_>>()?,
                switches: switches.clone(),
                epsilon: 0.0,
            };
            let rewards = play_piecewise(world, &policy, scored, seed, &mut agent_rng)?;
            let regret = scored_regret(config, world, &policy)?;
            Outcome {
                rewards,
                tau_star,
                detections: switches.clone(),
                switches,
                regret,
                q_tables: 0,
                q_bytes: 0,
            }
        }
        _ => {
            let mut controller = build_controller(world, agent, detector, seed)?;
            for episode in 0..scored {
                controller.start_episode(true);
                play(world, controller.as_mut(), episode, seed, &mut agent_rng)?;
            }
            controller.start_episode(scored == 0);
            let rewards = play(world, controller.as_mut(), scored, seed, &mut agent_rng)?;
            let report = controller.report();
            let regret = match agent {
                AgentSpec::Switcher { epsilon, .. } => {
                    let pattern = world.pattern();
                    let switches: Vec<u64> = report.switches.iter().copied().take(pattern.len() - 1).collect();
                    let policy = PiecewisePolicy {
                        policies: pattern[..=switches.len()]
                            .iter()
                            .map(|&c| optimal_policy(&world.contexts[c]))
                            .collect::<Result<_>>()?,
                        switches,
                        epsilon: *epsilon,
                    };
                    scored_regret(config, world, &policy)?
                }
                _ => None,
            };
            Outcome {
                rewards,
                tau_star: report.detections.first().copied(),
                detections: report.detections,
                switches: report.switches,
                regret,
                q_tables: report.q_tables,
                q_bytes: report.q_bytes,
            }
        }
    };
    let segments = world
        .schedule
        .segments()
        .iter()
        .map(|&(a, b)| outcome.rewards[a as usize..b as usize].iter().sum())
        .collect();
    let discounted = outcome
        .rewards
        .iter()
        .rev()
        .fold(0.0, |acc, r| r + world.discount * acc);
    Ok(RunRecord {
        run,
        seed,
        agent: agent.label(),
        tau_star: outcome.tau_star,
        reward: outcome.rewards.iter().sum(),
        discounted_reward: discounted,
        regret: outcome.regret,
        segment_rewards: segments,
        detections: outcome.detections,
        switches: outcome.switches,
        q_tables: outcome.q_tables,
        q_bytes: outcome.q_bytes,
    })
}

fn scored_regret(config: &ExperimentConfig, world: &World, policy: &PiecewisePolicy) -> Result<Option<f64>> {
    if !config.evaluation.regret {
        return Ok(None);
    }
    regret(&world.contexts, world.schedule, policy, world.initial_state).map(Some)
}

fn build_controller(
    world: &World,
    agent: &AgentSpec,
    detector: DetectorConfig,
    seed: u64,
) -> Result<Box<dyn Controller>> {
    let (ns, na, discount) = (world.n_states, world.n_actions, world.discount);
    let detector_seed = derive_seed(seed, label::DETECTOR);
    let pattern = world.pattern();
    let pair = || -> Result<(MdpModel, MdpModel)> {
        let first = pattern[0];
        let second = *pattern
            .iter()
            .find(|&&c| c != first)
            .ok_or_else(|| Error::config("two-context controllers need a second context"))?;
        Ok((world.contexts[first].clone(), world.contexts[second].clone()))
    };
    Ok(match agent {
        AgentSpec::Ql { exploration, learning_rate, .. } => {
            Box::new(QLearner::new(ns, na, discount, *exploration, *learning_rate)?)
        }
        AgentSpec::Ruql { exploration, learning_rate, .. } => {
            Box::new(QLearner::repeated(ns, na, discount, *exploration, *learning_rate)?)
        }
        AgentSpec::ContextQl { exploration, learning_rate, method, restart, .. } => {
            let state = ContextQState::new(pattern.clone(), ns, na, *learning_rate, *exploration)?;
            Box::new(ContextQL::new(state, discount).with_detector(*method, ns, detector, detector_seed, *restart)?)
        }
        AgentSpec::Ucrl2 { delta, restarts, .. } => {
            let epochs = if *restarts {
                restart_epochs(world.schedule.changepoints().len() + 1, world.schedule.horizon())
            } else {
                Vec::new()
            };
            Box::new(Ucrl2::new(ns, na, *delta, world.reward_range, epochs)?)
        }
        AgentSpec::Switcher { method, epsilon, restart, .. } => Box::new(ModelBasedSwitcher::new(
            &world.contexts,
            pattern.clone(),
            *epsilon,
            *method,
            detector,
            detector_seed,
            *restart,
        )?),
        AgentSpec::Sr { lower, upper, .. } => {
            let (m0, m1) = pair()?;
            Box::new(SrSwitcher::new(m0, m1, *lower, *upper)?)
        }
        AgentSpec::Cdm { threshold, block, .. } => {
            let (m0, m1) = pair()?;
            Box::new(CdmSwitcher::new(m0, m1, *threshold, block.clone())?)
        }
        AgentSpec::Probe { .. } => unreachable!("probes are not controllers"),
    })
}

fn env_rng(seed: u64, episode: u64) -> SimRng {
    stream(derive_seed(seed, label::ENV), episode)
}

/// One episode of `controller`; returns the reward of every epoch.
fn play(world: &World, controller: &mut dyn Controller, episode: u64, seed: u64, rng: &mut SimRng) -> Result<Vec<f64>> {
    let mut env = world.env()?;
    let mut noise = env_rng(seed, episode);
    let mut rewards = Vec::with_capacity(env.horizon() as usize);
    while env.clock() < env.horizon() {
        let action = controller.act(env.state(), rng)?;
        let tuple = env.step(action, &mut noise)?;
        controller.observe(&tuple, action, rng)?;
        rewards.push(tuple.reward);
    }
    Ok(rewards)
}

/// ε-policy around the first context's optimal policy for a whole episode.
fn probe(world: &World, epsilon: f64, episode: u64, seed: u64, rng: &mut SimRng) -> Result<(Vec<ExperienceTuple>, Vec<f64>)> {
    let base = optimal_policy(&world.contexts[world.schedule.contexts()[0]])?;
    let mut env = world.env()?;
    let mut noise = env_rng(seed, episode);
    let mut tuples = Vec::with_capacity(env.horizon() as usize);
    while env.clock() < env.horizon() {
        let action = epsilon_perturbed(base[env.state()], epsilon, world.n_actions, rng)?;
        tuples.push(env.step(action, &mut noise)?);
    }
    let rewards = tuples.iter().map(|t| t.reward).collect();
    Ok((tuples, rewards))
}

fn play_piecewise(world: &World, policy: &PiecewisePolicy, episode: u64, seed: u64, rng: &mut SimRng) -> Result<Vec<f64>> {
    let mut env = world.env()?;
    let mut noise = env_rng(seed, episode);
    let mut rewards = Vec::with_capacity(env.horizon() as usize);
    while env.clock() < env.horizon() {
        let t = env.clock();
        let piece = policy.switches.partition_point(|&s| s <= t);
        let action = epsilon_perturbed(policy.policies[piece][env.state()], policy.epsilon, world.n_actions, rng)?;
        rewards.push(env.step(action, &mut noise)?.reward);
    }
    Ok(rewards)
}
