//! Experiment configuration: one TOML document per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{BlockRule, Exploration, LearningRate, Restart};
use crate::changepoint::{DetectorConfig, Method};
use crate::envs::{ChangepointSchedule, SensorConfig, TrafficConfig, N_LANES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Master seed; run `i` uses `run_seed(seed, i)`.
    #[serde(default)]
    pub seed: u64,
    pub environment: EnvironmentSpec,
    pub schedule: ScheduleSpec,
    /// Shared detector settings; agents may override them.
    #[serde(default)]
    pub detector: DetectorConfig,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_runs() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// Fresh random contexts (Dirichlet(1) rows, uniform rewards) per run.
    Random {
        n_states: usize,
        n_actions: usize,
        #[serde(default = "default_discount")]
        discount: f64,
        #[serde(default = "default_reward_low")]
        reward_low: f64,
        #[serde(default = "default_reward_high")]
        reward_high: f64,
    },
    /// Sensor node; context `i` harvests at `harvest_rates[i]`.
    Sensor {
        #[serde(default)]
        node: SensorConfig,
        harvest_rates: Vec<f64>,
    },
    /// Traffic junction; context `i` has lane arrival rates `regimes[i]`.
    Traffic {
        #[serde(default)]
        junction: TrafficConfig,
        regimes: Vec<[f64; N_LANES]>,
    },
}

fn default_discount() -> f64 {
    0.9
}

fn default_reward_low() -> f64 {
    -1.0
}

fn default_reward_high() -> f64 {
    1.0
}

impl EnvironmentSpec {
    /// Number of contexts the environment can provide.
    pub fn n_contexts(&self) -> Option<usize> {
        match self {
            EnvironmentSpec::Random { .. } => None,
            EnvironmentSpec::Sensor { harvest_rates, .. } => Some(harvest_rates.len()),
            EnvironmentSpec::Traffic { regimes, .. } => Some(regimes.len()),
        }
    }

    /// True when rewards are negated costs and reports should show costs.
    pub fn reports_cost(&self) -> bool {
        !matches!(self, EnvironmentSpec::Random { .. })
    }

    /// True when the exact context models are available to controllers.
    pub fn models_known(&self) -> bool {
        !matches!(self, EnvironmentSpec::Traffic { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub horizon: u64,
    #[serde(default)]
    pub changepoints: Vec<u64>,
    /// Context label of every segment; defaults to alternating 0, 1, 0, ...
    #[serde(default)]
    pub contexts: Option<Vec<usize>>,
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<ChangepointSchedule> {
        let contexts = self
            .contexts
            .clone()
            .unwrap_or_else(|| (0..=self.changepoints.len()).map(|i| i % 2).collect());
        ChangepointSchedule::new(self.changepoints.clone(), contexts, self.horizon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentSpec {
    Ql {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_exploration")]
        exploration: Exploration,
        #[serde(default)]
        learning_rate: LearningRate,
    },
    Ruql {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_exploration")]
        exploration: Exploration,
        #[serde(default)]
        learning_rate: LearningRate,
    },
    ContextQl {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_exploration")]
        exploration: Exploration,
        #[serde(default)]
        learning_rate: LearningRate,
        #[serde(default = "default_method")]
        method: Method,
        #[serde(default)]
        restart: Restart,
        #[serde(default)]
        detector: Option<DetectorConfig>,
    },
    Ucrl2 {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_delta")]
        delta: f64,
        /// Restart on the `⌈i³/ℓ²⌉` schedule with ℓ = changes + 1.
        #[serde(default = "default_true")]
        restarts: bool,
    },
    /// Known-model switching with an ε-policy probe.
    Switcher {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_method")]
        method: Method,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        /// `true`: detect incrementally while controlling. `false`: detect on
        /// a full probe trajectory, then control with the optimal policies
        /// switched at the detected changepoints.
        #[serde(default)]
        online: bool,
        #[serde(default)]
        restart: Restart,
        #[serde(default)]
        detector: Option<DetectorConfig>,
    },
    /// Batch detection on an ε-policy trajectory around the first context's
    /// optimal policy; no switching.
    Probe {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_method")]
        method: Method,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default)]
        detector: Option<DetectorConfig>,
    },
    /// Two-threshold Shiryaev-Roberts switching.
    Sr {
        #[serde(default)]
        label: Option<String>,
        lower: f64,
        upper: f64,
    },
    /// Block sign-CUSUM switching (P-CDM / NP-CDM).
    Cdm {
        #[serde(default)]
        label: Option<String>,
        threshold: u64,
        block: BlockRule,
    },
}

fn default_exploration() -> Exploration {
    Exploration::EpsilonGreedy { epsilon: 0.1 }
}

fn default_method() -> Method {
    Method::Odcp
}

fn default_delta() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

fn default_epsilon() -> f64 {
    0.1
}

impl AgentSpec {
    /// Display name, used as the row label in reports.
    pub fn label(&self) -> String {
        let given = match self {
            AgentSpec::Ql { label, .. }
            | AgentSpec::Ruql { label, .. }
            | AgentSpec::ContextQl { label, .. }
            | AgentSpec::Ucrl2 { label, .. }
            | AgentSpec::Switcher { label, .. }
            | AgentSpec::Probe { label, .. }
            | AgentSpec::Sr { label, .. }
            | AgentSpec::Cdm { label, .. } => label.clone(),
        };
        given.unwrap_or_else(|| match self {
            AgentSpec::Ql { .. } => "QL".into(),
            AgentSpec::Ruql { .. } => "RUQL".into(),
            AgentSpec::ContextQl { .. } => "Context QL".into(),
            AgentSpec::Ucrl2 { .. } => "UCRL2".into(),
            AgentSpec::Switcher { method, .. } => format!("{} e-policy", method_name(*method)),
            AgentSpec::Probe { method, .. } => method_name(*method).into(),
            AgentSpec::Sr { lower, upper, .. } => format!("SR A={upper} B={lower}"),
            AgentSpec::Cdm { threshold, block, .. } => match block {
                BlockRule::Periodic { .. } => format!("P-CDM K={threshold}"),
                BlockRule::Random { .. } => format!("NP-CDM K={threshold}"),
            },
        })
    }

    fn needs_models(&self) -> bool {
        matches!(
            self,
            AgentSpec::Switcher { .. } | AgentSpec::Probe { .. } | AgentSpec::Sr { .. } | AgentSpec::Cdm { .. }
        )
    }

    /// Agents that alternate between exactly two contexts.
    fn two_contexts(&self) -> bool {
        matches!(self, AgentSpec::Sr { .. } | AgentSpec::Cdm { .. })
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Odcp => "ODCP",
        Method::Ecp => "ECP",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSpec {
    /// Learning episodes before the scored episode. With zero, the agent
    /// learns during the scored episode.
    pub learning_episodes: usize,
    /// Precision/recall windows `W`.
    pub windows: Vec<u64>,
    /// Compute regret against the piecewise-optimal oracle.
    pub regret: bool,
    pub initial_state: usize,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        EvaluationSpec {
            learning_episodes: 0,
            windows: vec![100],
            regret: false,
            initial_state: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for report files; relative paths resolve against the
    /// working directory.
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::config("runs: must be at least 1"));
        }
        if self.agents.is_empty() {
            return Err(Error::config("agents: at least one agent is required"));
        }
        let schedule = self.schedule.build().map_err(|e| Error::config(format!("schedule: {e}")))?;
        self.detector.validate().map_err(|e| Error::config(format!("detector: {e}")))?;
        match &self.environment {
            EnvironmentSpec::Random { n_states, n_actions, discount, reward_low, reward_high } => {
                if *n_states < 2 || *n_actions < 2 {
                    return Err(Error::config("environment: random MDPs need n_states, n_actions >= 2"));
                }
                if !(0.0..1.0).contains(discount) {
                    return Err(Error::config("environment.discount: must lie in [0, 1)"));
                }
                if !(reward_low <= reward_high) {
                    return Err(Error::config("environment: reward_low exceeds reward_high"));
                }
                if self.evaluation.initial_state >= *n_states {
                    return Err(Error::config("evaluation.initial_state: outside the state space"));
                }
            }
            EnvironmentSpec::Sensor { node, harvest_rates } => {
                node.validate().map_err(|e| Error::config(format!("environment.node: {e}")))?;
                if harvest_rates.iter().any(|r| !(*r > 0.0)) {
                    return Err(Error::config("environment.harvest_rates: rates must be positive"));
                }
            }
            EnvironmentSpec::Traffic { junction, regimes } => {
                junction.validate().map_err(|e| Error::config(format!("environment.junction: {e}")))?;
                if regimes.iter().flatten().any(|r| !(*r >= 0.0)) {
                    return Err(Error::config("environment.regimes: rates must be non-negative"));
                }
            }
        }
        if let Some(n) = self.environment.n_contexts() {
            if schedule.contexts().iter().any(|&c| c >= n) {
                return Err(Error::config(format!("schedule.contexts: environment defines only {n} contexts")));
            }
        }
        for (i, agent) in self.agents.iter().enumerate() {
            let at = |msg: String| Error::config(format!("agents[{i}] ({}): {msg}", agent.label()));
            if agent.needs_models() && !self.environment.models_known() {
                return Err(at("needs exact context models, which this environment does not provide".into()));
            }
            if agent.two_contexts() && schedule.distinct_contexts() != 2 {
                return Err(at("needs a schedule over exactly two contexts".into()));
            }
            match agent {
                AgentSpec::Ql { exploration, learning_rate, .. }
                | AgentSpec::Ruql { exploration, learning_rate, .. } => {
                    exploration.validate().map_err(|e| at(e.to_string()))?;
                    learning_rate.validate().map_err(|e| at(e.to_string()))?;
                }
                AgentSpec::ContextQl { exploration, learning_rate, detector, .. } => {
                    exploration.validate().map_err(|e| at(e.to_string()))?;
                    learning_rate.validate().map_err(|e| at(e.to_string()))?;
                    if let Some(d) = detector {
                        d.validate().map_err(|e| at(e.to_string()))?;
                    }
                }
                AgentSpec::Switcher { epsilon, detector, .. } | AgentSpec::Probe { epsilon, detector, .. } => {
                    if !(0.0..=1.0).contains(epsilon) {
                        return Err(at("epsilon must lie in [0, 1]".into()));
                    }
                    if let Some(d) = detector {
                        d.validate().map_err(|e| at(e.to_string()))?;
                    }
                }
                AgentSpec::Ucrl2 { delta, .. } => {
                    if !(*delta > 0.0 && *delta < 1.0) {
                        return Err(at("delta must lie in (0, 1)".into()));
                    }
                }
                AgentSpec::Sr { lower, upper, .. } => {
                    if !(*lower >= 0.0 && lower <= upper) {
                        return Err(at("thresholds need 0 <= lower <= upper".into()));
                    }
                }
                AgentSpec::Cdm { threshold, block, .. } => {
                    if *threshold == 0 {
                        return Err(at("threshold must be positive".into()));
                    }
                    block.validate().map_err(|e| at(e.to_string()))?;
                }
            }
        }
        if self.evaluation.windows.iter().any(|&w| w == 0) {
            return Err(Error::config("evaluation.windows: windows must be positive"));
        }
        if self.evaluation.regret && !matches!(self.environment, EnvironmentSpec::Random { .. } | EnvironmentSpec::Sensor { .. }) {
            return Err(Error::config("evaluation.regret: needs known context models"));
        }
        Ok(())
    }

    /// Detector settings for an agent: its own override or the shared ones.
    pub fn detector_for(&self, agent: &AgentSpec) -> DetectorConfig {
        let own = match agent {
            AgentSpec::ContextQl { detector, .. }
            | AgentSpec::Switcher { detector, .. }
            | AgentSpec::Probe { detector, .. } => detector.clone(),
            _ => None,
        };
        own.unwrap_or_else(|| self.detector.clone())
    }
}
