//! Best responses against a frozen population flow.
//!
//! Three solvers share one output shape: exact backward dynamic
//! programming, a perturbed variant that corrupts the exact policy with a
//! controlled probability (for stress-testing error propagation), and
//! tabular Q-learning from simulated episodes for the model-free path.
//! While any one agent optimizes, the population flow is held fixed; that
//! is the best-response problem fictitious play iterates on.

use rand::Rng;

use crate::dist::DiscreteDistribution;
use crate::env::MfgEnvironment;
use crate::error::{MfgError, Result};
use crate::flow::MeanFieldFlow;
use crate::policy::{induced_flow, FeedbackPolicy};

/// State values indexed by (time, cell); the terminal row is identically
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    rows: Vec<Vec<f64>>,
}

impl ValueTable {
    /// Number of decision steps `T` (the table has `T+1` rows).
    #[must_use]
    pub fn horizon(&self) -> usize {
        self.rows.len() - 1
    }

    #[must_use]
    pub fn at(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    /// Values at time zero.
    #[must_use]
    pub fn initial(&self) -> &[f64] {
        &self.rows[0]
    }
}

/// Output of any best-response solver: the policy it found, that policy's
/// value table against the flow it responded to, and the population flow
/// the policy induces from the initial distribution.
#[derive(Debug, Clone)]
pub struct BestResponseResult {
    pub policy: FeedbackPolicy,
    pub values: ValueTable,
    pub flow: MeanFieldFlow,
}

impl BestResponseResult {
    /// Per-state value at time zero.
    #[must_use]
    pub fn value_by_state(&self) -> &[f64] {
        self.values.initial()
    }

    /// Population-averaged value `Σ_x μ0(x)·V_0(x)`.
    pub fn population_value(&self, mu0: &DiscreteDistribution) -> Result<f64> {
        let v0 = self.values.initial();
        if mu0.len() != v0.len() {
            return Err(MfgError::Dimension(format!(
                "initial distribution on {} cells, values on {}",
                mu0.len(),
                v0.len()
            )));
        }
        Ok(mu0
            .probs()
            .iter()
            .zip(v0)
            .map(|(&p, &v)| p * v)
            .sum())
    }
}

fn check_flow_shape(env: &MfgEnvironment, mu_bar: &MeanFieldFlow) -> Result<()> {
    if mu_bar.num_cells() != env.num_cells() {
        return Err(MfgError::Dimension(format!(
            "flow on {} cells, grid has {}",
            mu_bar.num_cells(),
            env.num_cells()
        )));
    }
    if mu_bar.horizon() != env.horizon() {
        return Err(MfgError::Dimension(format!(
            "flow covers {} steps, environment horizon is {}",
            mu_bar.horizon(),
            env.horizon()
        )));
    }
    Ok(())
}

fn expected_next_value(env: &MfgEnvironment, state: usize, action: usize, v_next: &[f64]) -> f64 {
    let step = env
        .step_kernel(state, action)
        .expect("indices validated by caller");
    step.dist
        .probs()
        .iter()
        .zip(v_next)
        .map(|(&p, &v)| p * v)
        .sum()
}

/// Exact best response to `mu_bar` by backward induction: the terminal
/// value is zero and `V_t(x) = max_a [r(x, μ̄_t, a) + γ·E V_{t+1}]`. Ties
/// break toward the lowest action index for reproducibility.
pub fn exact_best_response(
    env: &MfgEnvironment,
    mu_bar: &MeanFieldFlow,
    mu0: &DiscreteDistribution,
) -> Result<BestResponseResult> {
    check_flow_shape(env, mu_bar)?;
    let (m, num_actions, horizon) = (env.num_cells(), env.num_actions(), env.horizon());
    let gamma = env.discount();
    let private = env.private_reward_table();

    let mut rows = vec![vec![0.0; m]; horizon + 1];
    let mut policy_rows = vec![vec![0usize; m]; horizon];
    for t in (0..horizon).rev() {
        let crowd = env.crowd_reward_by_cell(mu_bar.at(t))?;
        let (lower, upper) = rows.split_at_mut(t + 1);
        let v_now = &mut lower[t];
        let v_next = &upper[0];
        for x in 0..m {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..num_actions {
                let q = private[x][a] + crowd[x] + gamma * expected_next_value(env, x, a, v_next);
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            v_now[x] = best;
            policy_rows[t][x] = best_a;
        }
    }

    let policy = FeedbackPolicy::new(policy_rows, m, num_actions)?;
    let flow = induced_flow(env, &policy, mu0, None)?;
    Ok(BestResponseResult {
        policy,
        values: ValueTable { rows },
        flow,
    })
}

/// Value table of a fixed policy against a fixed flow, by the same backward
/// recursion with the maximum replaced by the policy's action.
pub fn policy_evaluation(
    env: &MfgEnvironment,
    policy: &FeedbackPolicy,
    mu_bar: &MeanFieldFlow,
) -> Result<ValueTable> {
    check_flow_shape(env, mu_bar)?;
    if policy.num_cells() != env.num_cells() || policy.num_steps() != env.horizon() {
        return Err(MfgError::Dimension(format!(
            "policy of shape ({}, {}) against environment ({}, {})",
            policy.num_steps(),
            policy.num_cells(),
            env.horizon(),
            env.num_cells()
        )));
    }
    let (m, horizon) = (env.num_cells(), env.horizon());
    let gamma = env.discount();
    let private = env.private_reward_table();
    let mut rows = vec![vec![0.0; m]; horizon + 1];
    for t in (0..horizon).rev() {
        let crowd = env.crowd_reward_by_cell(mu_bar.at(t))?;
        let (lower, upper) = rows.split_at_mut(t + 1);
        let v_now = &mut lower[t];
        let v_next = &upper[0];
        for x in 0..m {
            let a = policy.action(t, x);
            v_now[x] =
                private[x][a] + crowd[x] + gamma * expected_next_value(env, x, a, v_next);
        }
    }
    Ok(ValueTable { rows })
}

/// Stationary best response by value iteration on the Bellman operator,
/// stopped when the sup-norm change drops to `tol`.
#[derive(Debug, Clone)]
pub struct StationaryBestResponse {
    /// Greedy stationary policy repeated over the environment horizon, with
    /// its truncated-horizon value table and induced flow.
    pub result: BestResponseResult,
    /// The fixed point of the stationary Bellman operator.
    pub fixed_point: Vec<f64>,
    /// Sup-norm change after each sweep, in order. Successive ratios are
    /// bounded by the discount factor.
    pub deltas: Vec<f64>,
}

pub const VALUE_ITERATION_TOLERANCE: f64 = 1e-8;
const VALUE_ITERATION_MAX_SWEEPS: usize = 1_000_000;

pub fn value_iteration_stationary(
    env: &MfgEnvironment,
    mu_stat: &DiscreteDistribution,
    mu0: &DiscreteDistribution,
) -> Result<StationaryBestResponse> {
    if env.discount() >= 1.0 {
        return Err(MfgError::InvalidParameter(
            "stationary value iteration needs discount < 1".into(),
        ));
    }
    let (m, num_actions) = (env.num_cells(), env.num_actions());
    let gamma = env.discount();
    let private = env.private_reward_table();
    let crowd = env.crowd_reward_by_cell(mu_stat)?;

    let mut v = vec![0.0; m];
    let mut deltas = Vec::new();
    for _ in 0..VALUE_ITERATION_MAX_SWEEPS {
        let mut v_new = vec![0.0; m];
        for x in 0..m {
            let mut best = f64::NEG_INFINITY;
            for a in 0..num_actions {
                let q = private[x][a] + crowd[x] + gamma * expected_next_value(env, x, a, &v);
                if q > best {
                    best = q;
                }
            }
            v_new[x] = best;
        }
        let delta = v_new
            .iter()
            .zip(&v)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max);
        deltas.push(delta);
        v = v_new;
        if delta <= VALUE_ITERATION_TOLERANCE {
            let mut row = vec![0usize; m];
            for x in 0..m {
                let mut best = f64::NEG_INFINITY;
                let mut best_a = 0;
                for a in 0..num_actions {
                    let q =
                        private[x][a] + crowd[x] + gamma * expected_next_value(env, x, a, &v);
                    if q > best {
                        best = q;
                        best_a = a;
                    }
                }
                row[x] = best_a;
            }
            let policy = FeedbackPolicy::stationary(row, env.horizon(), num_actions)?;
            let stationary_flow = MeanFieldFlow::constant(mu_stat, env.horizon())?;
            let values = policy_evaluation(env, &policy, &stationary_flow)?;
            let flow = induced_flow(env, &policy, mu0, None)?;
            return Ok(StationaryBestResponse {
                result: BestResponseResult {
                    policy,
                    values,
                    flow,
                },
                fixed_point: v,
                deltas,
            });
        }
    }
    Err(MfgError::Diagnostic(
        "value iteration did not converge within the sweep budget".into(),
    ))
}

/// An exact best response together with a corrupted copy of it.
#[derive(Debug, Clone)]
pub struct PerturbedBestResponse {
    pub exact: BestResponseResult,
    pub perturbed: BestResponseResult,
}

/// Compute the exact best response, then independently replace each
/// (time, cell) action with a uniformly random one with probability
/// `corruption`. The perturbed policy is re-evaluated and its flow
/// recomputed, so the result pair supports measuring the induced learning
/// error.
pub fn perturbed_best_response<R: Rng + ?Sized>(
    env: &MfgEnvironment,
    mu_bar: &MeanFieldFlow,
    mu0: &DiscreteDistribution,
    corruption: f64,
    rng: &mut R,
) -> Result<PerturbedBestResponse> {
    if !(0.0..=1.0).contains(&corruption) {
        return Err(MfgError::InvalidParameter(format!(
            "corruption probability {corruption} outside [0, 1]"
        )));
    }
    let exact = exact_best_response(env, mu_bar, mu0)?;
    let num_actions = env.num_actions();
    let mut rows: Vec<Vec<usize>> = exact.policy.rows().to_vec();
    for row in &mut rows {
        for slot in row.iter_mut() {
            if rng.random::<f64>() < corruption {
                *slot = rng.random_range(0..num_actions);
            }
        }
    }
    let policy = FeedbackPolicy::new(rows, env.num_cells(), num_actions)?;
    let values = policy_evaluation(env, &policy, mu_bar)?;
    let flow = induced_flow(env, &policy, mu0, None)?;
    Ok(PerturbedBestResponse {
        exact,
        perturbed: BestResponseResult {
            policy,
            values,
            flow,
        },
    })
}

/// Tabular action values with visit counts, either one table per decision
/// time or a single stationary table.
#[derive(Debug, Clone)]
pub struct QTable {
    values: Vec<Vec<Vec<f64>>>,
    visits: Vec<Vec<Vec<u64>>>,
    stationary: bool,
}

impl QTable {
    #[must_use]
    pub fn stationary(num_cells: usize, num_actions: usize) -> Self {
        Self {
            values: vec![vec![vec![0.0; num_actions]; num_cells]],
            visits: vec![vec![vec![0; num_actions]; num_cells]],
            stationary: true,
        }
    }

    #[must_use]
    pub fn time_dependent(horizon: usize, num_cells: usize, num_actions: usize) -> Self {
        Self {
            values: vec![vec![vec![0.0; num_actions]; num_cells]; horizon],
            visits: vec![vec![vec![0; num_actions]; num_cells]; horizon],
            stationary: false,
        }
    }

    #[must_use]
    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    fn slot(&self, t: usize) -> usize {
        if self.stationary {
            0
        } else {
            t
        }
    }

    #[must_use]
    pub fn value(&self, t: usize, cell: usize, action: usize) -> f64 {
        self.values[self.slot(t)][cell][action]
    }

    #[must_use]
    pub fn visit_count(&self, t: usize, cell: usize, action: usize) -> u64 {
        self.visits[self.slot(t)][cell][action]
    }

    #[must_use]
    pub fn max_value(&self, t: usize, cell: usize) -> f64 {
        self.values[self.slot(t)][cell]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[must_use]
    pub fn greedy_action(&self, t: usize, cell: usize) -> usize {
        let row = &self.values[self.slot(t)][cell];
        let mut best = f64::NEG_INFINITY;
        let mut best_a = 0;
        for (a, &q) in row.iter().enumerate() {
            if q > best {
                best = q;
                best_a = a;
            }
        }
        best_a
    }

    /// Greedy feedback policy over `horizon` decision steps.
    pub fn greedy_policy(&self, horizon: usize) -> Result<FeedbackPolicy> {
        let num_cells = self.values[0].len();
        let num_actions = self.values[0][0].len();
        if !self.stationary && self.values.len() != horizon {
            return Err(MfgError::Dimension(format!(
                "table covers {} decision steps, requested {horizon}",
                self.values.len()
            )));
        }
        let rows: Vec<Vec<usize>> = (0..horizon)
            .map(|t| (0..num_cells).map(|x| self.greedy_action(t, x)).collect())
            .collect();
        FeedbackPolicy::new(rows, num_cells, num_actions)
    }

    /// Zero the visit counts, keeping the learned values. Used when a new
    /// learning round should restart its step sizes on a warm table.
    pub fn reset_visits(&mut self) {
        for slab in &mut self.visits {
            for row in slab {
                row.fill(0);
            }
        }
    }

    fn update(&mut self, t: usize, cell: usize, action: usize, target: f64, schedule: &QLearningSchedule) {
        let s = self.slot(t);
        let count = self.visits[s][cell][action];
        let alpha = schedule.learning_rate(count);
        let q = &mut self.values[s][cell][action];
        *q += alpha * (target - *q);
        self.visits[s][cell][action] = count + 1;
    }
}

/// Exploration and step-size schedules for episodic Q-learning.
#[derive(Debug, Clone, PartialEq)]
pub struct QLearningSchedule {
    /// Number of episodes to run (must be positive).
    pub num_episodes: usize,
    /// Steps per episode in stationary mode. Finite-horizon learning always
    /// uses the environment horizon instead.
    pub episode_length: usize,
    /// Exploration never drops below this probability.
    pub epsilon_floor: f64,
    /// ε(k) = max(floor, k^−exponent) for episode index k ≥ 1.
    pub epsilon_exponent: f64,
    /// Scales every learning rate; zero disables learning entirely.
    pub alpha_scale: f64,
    /// α(c) = scale / (1 + c)^exponent for visit count c.
    pub alpha_exponent: f64,
}

impl QLearningSchedule {
    #[must_use]
    pub fn desk_default(num_episodes: usize, episode_length: usize) -> Self {
        Self {
            num_episodes,
            episode_length,
            epsilon_floor: 0.05,
            epsilon_exponent: 0.5,
            alpha_scale: 1.0,
            alpha_exponent: 0.7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_episodes == 0 {
            return Err(MfgError::InvalidParameter(
                "q-learning needs at least one episode".into(),
            ));
        }
        if self.episode_length == 0 {
            return Err(MfgError::InvalidParameter(
                "episodes need at least one step".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_floor) {
            return Err(MfgError::InvalidParameter(format!(
                "exploration floor {} outside [0, 1]",
                self.epsilon_floor
            )));
        }
        for (name, v) in [
            ("epsilon exponent", self.epsilon_exponent),
            ("alpha scale", self.alpha_scale),
            ("alpha exponent", self.alpha_exponent),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(MfgError::InvalidParameter(format!(
                    "{name} must be nonnegative and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    #[must_use]
    pub fn exploration(&self, episode_index: usize) -> f64 {
        let k = episode_index.max(1) as f64;
        self.epsilon_floor.max(k.powf(-self.epsilon_exponent)).min(1.0)
    }

    #[must_use]
    pub fn learning_rate(&self, visit_count: u64) -> f64 {
        self.alpha_scale / (1.0 + visit_count as f64).powf(self.alpha_exponent)
    }
}

fn epsilon_greedy<R: Rng + ?Sized>(
    q: &QTable,
    t: usize,
    cell: usize,
    num_actions: usize,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..num_actions)
    } else {
        q.greedy_action(t, cell)
    }
}

/// Episodic Q-learning against a frozen flow, with one action-value table
/// per decision time. Episodes start from `mu0` and run the full horizon;
/// the terminal value is zero, matching the finite-horizon objective.
///
/// Passing `warm` continues from a previous table (its values are kept, its
/// visit counts reset); otherwise learning starts from zeros. Returns the
/// greedy policy, exactly evaluated against `mu_bar`, plus the learned
/// table for the next round.
pub fn q_learning_best_response<R: Rng + ?Sized>(
    env: &MfgEnvironment,
    mu_bar: &MeanFieldFlow,
    mu0: &DiscreteDistribution,
    schedule: &QLearningSchedule,
    warm: Option<QTable>,
    rng: &mut R,
) -> Result<(BestResponseResult, QTable)> {
    schedule.validate()?;
    check_flow_shape(env, mu_bar)?;
    let (m, num_actions, horizon) = (env.num_cells(), env.num_actions(), env.horizon());
    let gamma = env.discount();
    let private = env.private_reward_table();
    let crowd: Vec<Vec<f64>> = (0..horizon)
        .map(|t| env.crowd_reward_by_cell(mu_bar.at(t)))
        .collect::<Result<_>>()?;

    let mut q = match warm {
        Some(mut table) => {
            if table.is_stationary() || table.values.len() != horizon {
                return Err(MfgError::Dimension(
                    "warm-start table does not match the horizon".into(),
                ));
            }
            table.reset_visits();
            table
        }
        None => QTable::time_dependent(horizon, m, num_actions),
    };

    for episode in 1..=schedule.num_episodes {
        let epsilon = schedule.exploration(episode);
        let mut x = mu0.sample(rng);
        for t in 0..horizon {
            let a = epsilon_greedy(&q, t, x, num_actions, epsilon, rng);
            let reward = private[x][a] + crowd[t][x];
            let next = env.sample_transition(x, a, rng)?;
            let bootstrap = if t + 1 < horizon {
                q.max_value(t + 1, next)
            } else {
                0.0
            };
            q.update(t, x, a, reward + gamma * bootstrap, schedule);
            x = next;
        }
    }

    let policy = q.greedy_policy(horizon)?;
    let values = policy_evaluation(env, &policy, mu_bar)?;
    let flow = induced_flow(env, &policy, mu0, None)?;
    Ok((
        BestResponseResult {
            policy,
            values,
            flow,
        },
        q,
    ))
}

/// Episodic Q-learning against a fixed stationary distribution, with a
/// single action-value table and bootstrapped episode truncation.
pub fn q_learning_stationary<R: Rng + ?Sized>(
    env: &MfgEnvironment,
    mu_stat: &DiscreteDistribution,
    mu0: &DiscreteDistribution,
    schedule: &QLearningSchedule,
    warm: Option<QTable>,
    rng: &mut R,
) -> Result<(BestResponseResult, QTable)> {
    schedule.validate()?;
    if env.discount() >= 1.0 {
        return Err(MfgError::InvalidParameter(
            "stationary q-learning needs discount < 1".into(),
        ));
    }
    let (m, num_actions) = (env.num_cells(), env.num_actions());
    let gamma = env.discount();
    let private = env.private_reward_table();
    let crowd = env.crowd_reward_by_cell(mu_stat)?;

    let mut q = match warm {
        Some(mut table) => {
            if !table.is_stationary() {
                return Err(MfgError::Dimension(
                    "warm-start table is time-dependent, expected stationary".into(),
                ));
            }
            table.reset_visits();
            table
        }
        None => QTable::stationary(m, num_actions),
    };

    for episode in 1..=schedule.num_episodes {
        let epsilon = schedule.exploration(episode);
        let mut x = mu0.sample(rng);
        for _ in 0..schedule.episode_length {
            let a = epsilon_greedy(&q, 0, x, num_actions, epsilon, rng);
            let reward = private[x][a] + crowd[x];
            let next = env.sample_transition(x, a, rng)?;
            // Episodes truncate rather than terminate, so the last step
            // bootstraps like any other.
            let target = reward + gamma * q.max_value(0, next);
            q.update(0, x, a, target, schedule);
            x = next;
        }
    }

    let policy = q.greedy_policy(env.horizon())?;
    let stationary_flow = MeanFieldFlow::constant(mu_stat, env.horizon())?;
    let values = policy_evaluation(env, &policy, &stationary_flow)?;
    let flow = induced_flow(env, &policy, mu0, None)?;
    Ok((
        BestResponseResult {
            policy,
            values,
            flow,
        },
        q,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CrowdReward, Horizon, PrivateReward, RewardModel};
    use crate::grid::{ActionGrid, StateGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn zero_env(horizon: usize) -> MfgEnvironment {
        MfgEnvironment::new(
            StateGrid::unit_torus(6).unwrap(),
            ActionGrid::new(3, -1.0, 1.0).unwrap(),
            Horizon::Steps(horizon),
            0.9,
            0.05,
            0.5,
            RewardModel {
                private: PrivateReward::Zero,
                crowd: CrowdReward::Zero,
            },
        )
        .unwrap()
    }

    fn table_env(
        num_cells: usize,
        rewards: Vec<Vec<f64>>,
        horizon: usize,
        noise_std: f64,
    ) -> MfgEnvironment {
        // Encode a (cell, action-index) reward table as a coordinate lookup,
        // so small synthetic MDPs can be expressed through the grid API.
        let num_actions = rewards[0].len();
        let bound = rewards
            .iter()
            .flatten()
            .fold(0.0f64, |b, &r| b.max(r.abs()));
        let f = Arc::new(move |x: f64, a: f64| {
            let cell = ((x * num_cells as f64).round() as usize) % num_cells;
            let ai = (a * (num_actions - 1) as f64).round() as usize;
            rewards[cell][ai]
        });
        MfgEnvironment::new(
            StateGrid::unit_torus(num_cells).unwrap(),
            ActionGrid::new(num_actions, 0.0, 1.0).unwrap(),
            Horizon::Steps(horizon),
            0.9,
            0.05,
            noise_std,
            RewardModel {
                private: PrivateReward::Custom { f, bound },
                crowd: CrowdReward::Zero,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_reward_gives_zero_value_and_first_actions() {
        let env = zero_env(4);
        let mu0 = DiscreteDistribution::uniform(6).unwrap();
        let flow = MeanFieldFlow::constant(&mu0, 4).unwrap();
        let br = exact_best_response(&env, &flow, &mu0).unwrap();
        for t in 0..=4 {
            assert!(br.values.at(t).iter().all(|&v| v == 0.0));
        }
        for t in 0..4 {
            for x in 0..6 {
                assert_eq!(br.policy.action(t, x), 0);
            }
        }
    }

    #[test]
    fn backward_induction_matches_exhaustive_enumeration() {
        let rewards = vec![
            vec![0.3, -0.7],
            vec![-1.2, 0.9],
            vec![0.05, 0.0],
        ];
        let env = table_env(3, rewards, 2, 0.9);
        let mu0 = DiscreteDistribution::from_weights(&[0.5, 0.3, 0.2]).unwrap();
        let flow = MeanFieldFlow::constant(&mu0, 2).unwrap();
        let br = exact_best_response(&env, &flow, &mu0).unwrap();
        let best_value = br.population_value(&mu0).unwrap();

        // All 2^(3·2) = 64 feedback policies.
        let mut enumerated_best = f64::NEG_INFINITY;
        for code in 0..64usize {
            let rows: Vec<Vec<usize>> = (0..2)
                .map(|t| (0..3).map(|x| (code >> (t * 3 + x)) & 1).collect())
                .collect();
            let pol = FeedbackPolicy::new(rows, 3, 2).unwrap();
            let values = policy_evaluation(&env, &pol, &flow).unwrap();
            let v: f64 = mu0
                .probs()
                .iter()
                .zip(values.initial())
                .map(|(&p, &v)| p * v)
                .sum();
            enumerated_best = enumerated_best.max(v);
            assert!(
                best_value >= v - 1e-12,
                "policy {code} beats the backward-induction optimum"
            );
        }
        assert!((best_value - enumerated_best).abs() < 1e-12);
    }

    #[test]
    fn value_table_is_bellman_consistent() {
        let env = table_env(4, vec![vec![0.2, -0.3]; 4], 3, 0.8);
        let mu0 = DiscreteDistribution::uniform(4).unwrap();
        let flow = MeanFieldFlow::constant(&mu0, 3).unwrap();
        let br = exact_best_response(&env, &flow, &mu0).unwrap();
        let private = env.private_reward_table();
        for t in 0..3 {
            let crowd = env.crowd_reward_by_cell(flow.at(t)).unwrap();
            for x in 0..4 {
                let best = (0..2)
                    .map(|a| {
                        private[x][a]
                            + crowd[x]
                            + env.discount() * expected_next_value(&env, x, a, br.values.at(t + 1))
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((br.values.at(t)[x] - best).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn value_iteration_contracts_and_matches_truncated_dp() {
        let env = table_env(5, vec![vec![0.4, -0.2, 0.1]; 5], 1, 0.6);
        // Rebuild with a long enough horizon for the truncation comparison.
        let env = MfgEnvironment::new(
            env.state_grid().clone(),
            env.action_grid().clone(),
            Horizon::Steps(200),
            0.9,
            0.05,
            0.6,
            env.reward().clone(),
        )
        .unwrap();
        let mu_stat = DiscreteDistribution::uniform(5).unwrap();
        let mu0 = DiscreteDistribution::uniform(5).unwrap();
        let vi = value_iteration_stationary(&env, &mu_stat, &mu0).unwrap();

        // The absolute slack absorbs cancellation noise once deltas fall
        // near the stopping tolerance.
        for pair in vi.deltas.windows(2) {
            assert!(pair[1] <= pair[0] * (env.discount() + 1e-9) + 1e-12);
        }

        let flow = MeanFieldFlow::constant(&mu_stat, 200).unwrap();
        let dp = exact_best_response(&env, &flow, &mu0).unwrap();
        let tail = 0.9f64.powi(200) * env.reward_bound() / (1.0 - 0.9);
        for x in 0..5 {
            let gap = (vi.fixed_point[x] - dp.values.initial()[x]).abs();
            assert!(
                gap <= tail + 1e-6,
                "cell {x}: fixed point {} vs truncated {}",
                vi.fixed_point[x],
                dp.values.initial()[x]
            );
        }
    }

    #[test]
    fn zero_reward_value_iteration_converges_immediately() {
        let env = zero_env(3);
        let mu = DiscreteDistribution::uniform(6).unwrap();
        let vi = value_iteration_stationary(&env, &mu, &mu).unwrap();
        assert_eq!(vi.deltas.len(), 1);
        assert!(vi.fixed_point.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unperturbed_corruption_is_the_identity() {
        let env = table_env(3, vec![vec![0.3, -0.7], vec![-1.2, 0.9], vec![0.05, 0.0]], 2, 0.9);
        let mu0 = DiscreteDistribution::uniform(3).unwrap();
        let flow = MeanFieldFlow::constant(&mu0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pert = perturbed_best_response(&env, &flow, &mu0, 0.0, &mut rng).unwrap();
        assert_eq!(pert.exact.policy, pert.perturbed.policy);
        assert!(perturbed_best_response(&env, &flow, &mu0, 1.5, &mut rng).is_err());
    }

    #[test]
    fn full_corruption_loses_value() {
        // Rewards strictly maximized by a unique action in every cell.
        let rewards: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0 + i as f64, -1.0]).collect();
        let env = table_env(6, rewards, 3, 0.7);
        let mu0 = DiscreteDistribution::uniform(6).unwrap();
        let flow = MeanFieldFlow::constant(&mu0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pert = perturbed_best_response(&env, &flow, &mu0, 1.0, &mut rng).unwrap();
        let exact_value = pert.exact.population_value(&mu0).unwrap();
        let corrupted_value = pert.perturbed.population_value(&mu0).unwrap();
        assert!(exact_value - corrupted_value > 0.0);
    }

    #[test]
    fn corruption_never_gains_value() {
        let env = table_env(4, vec![vec![0.2, -0.1, 0.4]; 4], 3, 0.5);
        let mu0 = DiscreteDistribution::uniform(4).unwrap();
        let flow = MeanFieldFlow::constant(&mu0, 3).unwrap();
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pert = perturbed_best_response(&env, &flow, &mu0, 0.5, &mut rng).unwrap();
            let gap = pert.exact.population_value(&mu0).unwrap()
                - pert.perturbed.population_value(&mu0).unwrap();
            assert!(gap >= -1e-12, "seed {seed}: corruption gained {gap}");
        }
    }

    #[test]
    fn q_learning_without_learning_rate_stays_at_init() {
        let env = zero_env(3);
        let mu0 = DiscreteDistribution::uniform(6).unwrap();
        let flow = MeanFieldFlow::constant(&mu0, 3).unwrap();
        let mut schedule = QLearningSchedule::desk_default(50, 3);
        schedule.alpha_scale = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (br, q) =
            q_learning_best_response(&env, &flow, &mu0, &schedule, None, &mut rng).unwrap();
        for t in 0..3 {
            for x in 0..6 {
                for a in 0..3 {
                    assert_eq!(q.value(t, x, a), 0.0);
                }
                assert_eq!(br.policy.action(t, x), 0);
            }
        }
    }

    #[test]
    fn q_learning_recovers_dp_policy_on_a_tiny_mdp() {
        // Two cells; action 1 hops to the other cell (a = 1 over half the
        // torus with Δ_t = 0.5), action 0 stays. Rewards are strict so the
        // optimal action is unique everywhere: hop out of cell 0, stay in
        // cell 1.
        let rewards = vec![vec![0.0, 0.1], vec![1.0, 0.2]];
        let num_cells = 2;
        let bound = 1.0;
        let f = {
            let rewards = rewards.clone();
            Arc::new(move |x: f64, a: f64| {
                let cell = ((x * num_cells as f64).round() as usize) % num_cells;
                let ai = a.round() as usize;
                rewards[cell][ai]
            })
        };
        let env = MfgEnvironment::new(
            StateGrid::unit_torus(2).unwrap(),
            ActionGrid::new(2, 0.0, 1.0).unwrap(),
            Horizon::Steps(4),
            0.9,
            0.5,
            0.0,
            RewardModel {
                private: PrivateReward::Custom { f, bound },
                crowd: CrowdReward::Zero,
            },
        )
        .unwrap();
        let mu0 = DiscreteDistribution::uniform(2).unwrap();
        let flow = MeanFieldFlow::constant(&mu0, 4).unwrap();
        let dp = exact_best_response(&env, &flow, &mu0).unwrap();

        let mut schedule = QLearningSchedule::desk_default(4000, 4);
        schedule.epsilon_floor = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (ql, _) =
            q_learning_best_response(&env, &flow, &mu0, &schedule, None, &mut rng).unwrap();
        assert_eq!(ql.policy, dp.policy);
    }

    #[test]
    fn q_learning_rejects_empty_budgets() {
        let env = zero_env(2);
        let mu0 = DiscreteDistribution::uniform(6).unwrap();
        let flow = MeanFieldFlow::constant(&mu0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let schedule = QLearningSchedule::desk_default(0, 5);
        assert!(
            q_learning_best_response(&env, &flow, &mu0, &schedule, None, &mut rng).is_err()
        );
    }

    #[test]
    fn stationary_q_learning_reaches_positive_values() {
        let env = MfgEnvironment::new(
            StateGrid::unit_torus(4).unwrap(),
            ActionGrid::new(2, 0.0, 1.0).unwrap(),
            Horizon::Steps(10),
            0.9,
            0.25,
            0.3,
            RewardModel {
                private: PrivateReward::Custom {
                    f: Arc::new(|x, _| if x < 0.5 { 1.0 } else { 0.0 }),
                    bound: 1.0,
                },
                crowd: CrowdReward::Zero,
            },
        )
        .unwrap();
        let mu = DiscreteDistribution::uniform(4).unwrap();
        let schedule = QLearningSchedule::desk_default(500, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (br, q) = q_learning_stationary(&env, &mu, &mu, &schedule, None, &mut rng).unwrap();
        assert!(q.is_stationary());
        assert!(q.max_value(0, 0) > 0.0);
        assert_eq!(br.policy.num_steps(), 10);
    }

    #[test]
    fn warm_start_keeps_values_and_resets_counts() {
        let env = zero_env(2);
        let mu0 = DiscreteDistribution::uniform(6).unwrap();
        let flow = MeanFieldFlow::constant(&mu0, 2).unwrap();
        let schedule = QLearningSchedule::desk_default(20, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, q1) =
            q_learning_best_response(&env, &flow, &mu0, &schedule, None, &mut rng).unwrap();
        let visited: u64 = (0..2)
            .flat_map(|t| (0..6).flat_map(move |x| (0..3).map(move |a| (t, x, a))))
            .map(|(t, x, a)| q1.visit_count(t, x, a))
            .sum();
        assert!(visited > 0);
        let mut warmed = q1.clone();
        warmed.reset_visits();
        let counts_after: u64 = (0..2)
            .flat_map(|t| (0..6).flat_map(move |x| (0..3).map(move |a| (t, x, a))))
            .map(|(t, x, a)| warmed.visit_count(t, x, a))
            .sum();
        assert_eq!(counts_after, 0);
        assert_eq!(warmed.value(0, 0, 0), q1.value(0, 0, 0));
    }

    #[test]
    fn schedules_follow_their_formulas() {
        let s = QLearningSchedule::desk_default(10, 10);
        assert_eq!(s.exploration(1), 1.0);
        assert!((s.exploration(4) - 0.5).abs() < 1e-12);
        assert_eq!(s.exploration(10_000), 0.05);
        assert!((s.learning_rate(0) - 1.0).abs() < 1e-12);
        assert!((s.learning_rate(1) - 1.0 / 2f64.powf(0.7)).abs() < 1e-12);
    }
}
