//! Run configuration: a flat `key = value` text format with strict
//! parsing.
//!
//! Unknown keys, duplicate keys, and malformed values are all hard errors,
//! so a config that loads is a config that means what it says. Every key
//! has a default; a missing file section simply keeps them. Lines starting
//! with `#` and blank lines are ignored. The full schema with defaults is
//! what [`RunConfig::snapshot`] prints.

use crate::benchmark;
use crate::best_response::QLearningSchedule;
use crate::dist::DiscreteDistribution;
use crate::env::{Horizon, MfgEnvironment, RewardModel};
use crate::error::{MfgError, Result};
use crate::fp::{CorruptionSchedule, ModelFreeConfig};
use crate::grid::{ActionGrid, StateGrid, Topology};
use std::fmt::Write as _;
use std::path::Path;

/// Reward family the environment is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    /// Congestion rewards with the known closed-form torus equilibrium.
    Congestion,
}

/// Horizon selection: derive the truncation length from the discount or
/// fix a step count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonSpec {
    Auto,
    Steps(usize),
}

/// Whether the run tracks a full time-indexed flow or a stationary
/// density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    FiniteHorizon,
    Stationary,
}

/// Initial distribution of the representative agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialDistribution {
    Uniform,
    Point(usize),
}

/// Best-response solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Exact,
    Perturbed,
    QLearning,
}

/// All run settings, resolved to concrete values.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub num_cells: usize,
    pub num_actions: usize,
    pub action_min: f64,
    pub action_max: f64,
    pub gamma: f64,
    pub time_step: f64,
    pub noise_std: f64,
    pub topology: Topology,
    pub horizon: HorizonSpec,
    pub mode: RunMode,
    pub mu0: InitialDistribution,
    pub num_iterations: usize,
    pub solver: SolverChoice,
    pub corruption_scale: f64,
    pub corruption_exponent: f64,
    pub q_episodes: usize,
    pub q_episode_length: usize,
    pub q_epsilon_floor: f64,
    pub q_epsilon_exponent: f64,
    pub q_alpha_scale: f64,
    pub q_alpha_exponent: f64,
    pub q_warm_start: bool,
    pub n_trajectories: usize,
    pub trajectory_length: usize,
    pub desk_scale: f64,
    pub seed: u64,
    pub diagnostics: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            benchmark: Benchmark::Congestion,
            num_cells: 50,
            num_actions: benchmark::DEFAULT_NUM_ACTIONS,
            action_min: benchmark::DEFAULT_ACTION_MIN,
            action_max: benchmark::DEFAULT_ACTION_MAX,
            gamma: benchmark::DEFAULT_DISCOUNT,
            time_step: benchmark::DEFAULT_TIME_STEP,
            noise_std: benchmark::DEFAULT_NOISE_STD,
            topology: Topology::Torus,
            horizon: HorizonSpec::Auto,
            mode: RunMode::FiniteHorizon,
            mu0: InitialDistribution::Uniform,
            num_iterations: 100,
            solver: SolverChoice::Exact,
            corruption_scale: 1.0,
            corruption_exponent: 2.0,
            q_episodes: 2000,
            q_episode_length: 200,
            q_epsilon_floor: 0.05,
            q_epsilon_exponent: 0.5,
            q_alpha_scale: 1.0,
            q_alpha_exponent: 0.7,
            q_warm_start: true,
            n_trajectories: 3000,
            trajectory_length: 1000,
            desk_scale: 10.0,
            seed: 0,
            diagnostics: true,
        }
    }
}

fn bad_value(key: &str, value: &str, expected: &str) -> MfgError {
    MfgError::Config(format!(
        "invalid value for `{key}`: got `{value}`, expected {expected}"
    ))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.parse().map_err(|_| bad_value(key, value, expected))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad_value(key, value, "true or false")),
    }
}

impl RunConfig {
    /// Parse config text, starting from the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(MfgError::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    idx + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(MfgError::Config(format!(
                    "line {}: duplicate key `{key}`",
                    idx + 1
                )));
            }
            seen.push(key.to_string());
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Load and parse a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            MfgError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Set one key to the value given in config-file syntax. Unknown keys
    /// and malformed values are errors; `validate()` still applies
    /// afterwards for cross-key constraints.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "benchmark" => {
                self.benchmark = match value {
                    "congestion" => Benchmark::Congestion,
                    _ => return Err(bad_value(key, value, "congestion")),
                }
            }
            "num_cells" => self.num_cells = parse_num(key, value, "a positive integer")?,
            "num_actions" => self.num_actions = parse_num(key, value, "a positive integer")?,
            "action_min" => self.action_min = parse_num(key, value, "a number")?,
            "action_max" => self.action_max = parse_num(key, value, "a number")?,
            "gamma" => self.gamma = parse_num(key, value, "a number in (0, 1]")?,
            "time_step" => self.time_step = parse_num(key, value, "a positive number")?,
            "noise_std" => self.noise_std = parse_num(key, value, "a number ≥ 0")?,
            "topology" => {
                self.topology = match value {
                    "torus" => Topology::Torus,
                    "interval" => Topology::Interval,
                    _ => return Err(bad_value(key, value, "torus or interval")),
                }
            }
            "horizon" => {
                self.horizon = if value == "auto" {
                    HorizonSpec::Auto
                } else {
                    HorizonSpec::Steps(parse_num(key, value, "auto or a positive integer")?)
                }
            }
            "mode" => {
                self.mode = match value {
                    "finite_horizon" => RunMode::FiniteHorizon,
                    "stationary" => RunMode::Stationary,
                    _ => return Err(bad_value(key, value, "finite_horizon or stationary")),
                }
            }
            "mu0" => {
                self.mu0 = if value == "uniform" {
                    InitialDistribution::Uniform
                } else if let Some(cell) = value.strip_prefix("point:") {
                    InitialDistribution::Point(parse_num(
                        key,
                        cell,
                        "uniform or point:CELL_INDEX",
                    )?)
                } else {
                    return Err(bad_value(key, value, "uniform or point:CELL_INDEX"));
                }
            }
            "num_iterations" => {
                self.num_iterations = parse_num(key, value, "a positive integer")?
            }
            "solver" => {
                self.solver = match value {
                    "exact" => SolverChoice::Exact,
                    "perturbed" => SolverChoice::Perturbed,
                    "q_learning" => SolverChoice::QLearning,
                    _ => return Err(bad_value(key, value, "exact, perturbed, or q_learning")),
                }
            }
            "corruption_scale" => {
                self.corruption_scale = parse_num(key, value, "a number ≥ 0")?
            }
            "corruption_exponent" => {
                self.corruption_exponent = parse_num(key, value, "a number")?
            }
            "q_episodes" => self.q_episodes = parse_num(key, value, "a positive integer")?,
            "q_episode_length" => {
                self.q_episode_length = parse_num(key, value, "a positive integer")?
            }
            "q_epsilon_floor" => {
                self.q_epsilon_floor = parse_num(key, value, "a number in [0, 1]")?
            }
            "q_epsilon_exponent" => {
                self.q_epsilon_exponent = parse_num(key, value, "a number > 0")?
            }
            "q_alpha_scale" => self.q_alpha_scale = parse_num(key, value, "a number ≥ 0")?,
            "q_alpha_exponent" => {
                self.q_alpha_exponent = parse_num(key, value, "a number in (0.5, 1]")?
            }
            "q_warm_start" => self.q_warm_start = parse_bool(key, value)?,
            "n_trajectories" => {
                self.n_trajectories = parse_num(key, value, "a positive integer")?
            }
            "trajectory_length" => {
                self.trajectory_length = parse_num(key, value, "a positive integer")?
            }
            "desk_scale" => self.desk_scale = parse_num(key, value, "a number ≥ 1")?,
            "seed" => self.seed = parse_num(key, value, "an unsigned integer")?,
            "diagnostics" => {
                self.diagnostics = match value {
                    "on" => true,
                    "off" => false,
                    _ => return Err(bad_value(key, value, "on or off")),
                }
            }
            _ => {
                return Err(MfgError::Config(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    /// Checks that do not need the environment built.
    pub fn validate(&self) -> Result<()> {
        if self.num_iterations == 0 {
            return Err(MfgError::Config("num_iterations must be ≥ 1".into()));
        }
        if self.desk_scale < 1.0 || !self.desk_scale.is_finite() {
            return Err(MfgError::Config(format!(
                "desk_scale must be a finite number ≥ 1, got {}",
                self.desk_scale
            )));
        }
        if let HorizonSpec::Steps(0) = self.horizon {
            return Err(MfgError::Config("horizon must be ≥ 1 step".into()));
        }
        if let InitialDistribution::Point(cell) = self.mu0 {
            if cell >= self.num_cells {
                return Err(MfgError::Config(format!(
                    "mu0 point cell {cell} outside grid of {} cells",
                    self.num_cells
                )));
            }
        }
        Ok(())
    }

    /// Build the configured environment.
    pub fn build_environment(&self) -> Result<MfgEnvironment> {
        let Benchmark::Congestion = self.benchmark;
        let grid = StateGrid::new(self.num_cells, 1.0, self.topology)?;
        let actions = ActionGrid::new(self.num_actions, self.action_min, self.action_max)?;
        let horizon = match self.horizon {
            HorizonSpec::Auto => Horizon::EffectiveDiscounted,
            HorizonSpec::Steps(t) => Horizon::Steps(t),
        };
        MfgEnvironment::new(
            grid,
            actions,
            horizon,
            self.gamma,
            self.time_step,
            self.noise_std,
            RewardModel::congestion(),
        )
    }

    pub fn initial_distribution(&self) -> Result<DiscreteDistribution> {
        match self.mu0 {
            InitialDistribution::Uniform => DiscreteDistribution::uniform(self.num_cells),
            InitialDistribution::Point(cell) => {
                DiscreteDistribution::point_mass(cell, self.num_cells)
            }
        }
    }

    /// Whether runs should track per-iteration errors against the
    /// closed-form equilibrium (only defined on the torus).
    #[must_use]
    pub fn tracks_closed_form(&self) -> bool {
        self.benchmark == Benchmark::Congestion && self.topology == Topology::Torus
    }

    #[must_use]
    pub fn q_schedule(&self) -> QLearningSchedule {
        QLearningSchedule {
            num_episodes: self.q_episodes,
            episode_length: self.q_episode_length,
            epsilon_floor: self.q_epsilon_floor,
            epsilon_exponent: self.q_epsilon_exponent,
            alpha_scale: self.q_alpha_scale,
            alpha_exponent: self.q_alpha_exponent,
        }
    }

    pub fn corruption(&self) -> Result<CorruptionSchedule> {
        CorruptionSchedule::new(self.corruption_scale, self.corruption_exponent)
    }

    /// Model-free settings with `n_trajectories` and `trajectory_length`
    /// divided by the desk-scale factor (a factor of 1 runs full size).
    #[must_use]
    pub fn modelfree_settings(&self) -> ModelFreeConfig {
        let scale = |full: usize| {
            (((full as f64) / self.desk_scale).round() as usize).max(1)
        };
        ModelFreeConfig {
            schedule: self.q_schedule(),
            num_trajectories: scale(self.n_trajectories),
            trajectory_length: scale(self.trajectory_length),
            warm_start: self.q_warm_start,
        }
    }

    /// Canonical serialization of every key at its resolved value. Parsing
    /// the snapshot reproduces the config exactly.
    #[must_use]
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "benchmark = congestion");
        let _ = writeln!(s, "num_cells = {}", self.num_cells);
        let _ = writeln!(s, "num_actions = {}", self.num_actions);
        let _ = writeln!(s, "action_min = {}", self.action_min);
        let _ = writeln!(s, "action_max = {}", self.action_max);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "time_step = {}", self.time_step);
        let _ = writeln!(s, "noise_std = {}", self.noise_std);
        let _ = writeln!(
            s,
            "topology = {}",
            match self.topology {
                Topology::Torus => "torus",
                Topology::Interval => "interval",
            }
        );
        match self.horizon {
            HorizonSpec::Auto => {
                let _ = writeln!(s, "horizon = auto");
            }
            HorizonSpec::Steps(t) => {
                let _ = writeln!(s, "horizon = {t}");
            }
        }
        let _ = writeln!(
            s,
            "mode = {}",
            match self.mode {
                RunMode::FiniteHorizon => "finite_horizon",
                RunMode::Stationary => "stationary",
            }
        );
        match self.mu0 {
            InitialDistribution::Uniform => {
                let _ = writeln!(s, "mu0 = uniform");
            }
            InitialDistribution::Point(cell) => {
                let _ = writeln!(s, "mu0 = point:{cell}");
            }
        }
        let _ = writeln!(s, "num_iterations = {}", self.num_iterations);
        let _ = writeln!(
            s,
            "solver = {}",
            match self.solver {
                SolverChoice::Exact => "exact",
                SolverChoice::Perturbed => "perturbed",
                SolverChoice::QLearning => "q_learning",
            }
        );
        let _ = writeln!(s, "corruption_scale = {}", self.corruption_scale);
        let _ = writeln!(s, "corruption_exponent = {}", self.corruption_exponent);
        let _ = writeln!(s, "q_episodes = {}", self.q_episodes);
        let _ = writeln!(s, "q_episode_length = {}", self.q_episode_length);
        let _ = writeln!(s, "q_epsilon_floor = {}", self.q_epsilon_floor);
        let _ = writeln!(s, "q_epsilon_exponent = {}", self.q_epsilon_exponent);
        let _ = writeln!(s, "q_alpha_scale = {}", self.q_alpha_scale);
        let _ = writeln!(s, "q_alpha_exponent = {}", self.q_alpha_exponent);
        let _ = writeln!(s, "q_warm_start = {}", self.q_warm_start);
        let _ = writeln!(s, "n_trajectories = {}", self.n_trajectories);
        let _ = writeln!(s, "trajectory_length = {}", self.trajectory_length);
        let _ = writeln!(s, "desk_scale = {}", self.desk_scale);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(
            s,
            "diagnostics = {}",
            if self.diagnostics { "on" } else { "off" }
        );
        s
    }
}
