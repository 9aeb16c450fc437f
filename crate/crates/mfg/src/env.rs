//! The mean field game environment: dynamics, rewards, and horizons.
//!
//! A representative agent moves on the state grid under the controlled
//! dynamics `x_{t+1} = x_t + a_t·Δ_t + √Δ_t·σ·ε_t` with standard Gaussian
//! `ε_t`. Its per-step reward splits into a private part `r̃(x, a)` and a
//! crowd part `r̄(x, μ)` that couples the agent to the population
//! distribution. Objectives accumulate `Σ_{t=0}^{T−1} γ^t r_t`; the
//! discounted infinite-horizon problem is handled by truncating at an
//! effective horizon where the tail is provably below tolerance.

use std::sync::Arc;

use rand::Rng;

use crate::dist::DiscreteDistribution;
use crate::error::{MfgError, Result};
use crate::grid::{ActionGrid, StateGrid, Topology};

/// Floor applied to densities before taking logarithms, so empty bins yield
/// a large but finite penalty and the crowd reward stays bounded.
pub const DENSITY_FLOOR: f64 = 1e-9;

/// Truncation tolerance for the effective horizon of discounted problems.
pub const HORIZON_TOLERANCE: f64 = 1e-6;

/// Shared handle to a custom `r̃(x, a)` reward function.
pub type PrivateRewardFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Shared handle to a custom `r̄(x, μ)` coupling function.
pub type CrowdRewardFn = Arc<dyn Fn(f64, &DiscreteDistribution) -> f64 + Send + Sync>;

/// State-and-action reward term `r̃(x, a)`.
#[derive(Clone)]
pub enum PrivateReward {
    Zero,
    /// The congestion benchmark's landscape reward minus the quadratic
    /// control cost `½|a|²`.
    Congestion,
    /// Arbitrary bounded reward; `bound` must dominate `|f|` on the grid.
    Custom { f: PrivateRewardFn, bound: f64 },
}

impl std::fmt::Debug for PrivateReward {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Zero => write!(f, "PrivateReward::Zero"),
            Self::Congestion => write!(f, "PrivateReward::Congestion"),
            Self::Custom { bound, .. } => write!(f, "PrivateReward::Custom {{ bound: {bound} }}"),
        }
    }
}

/// Spatial landscape of the congestion benchmark (the action-independent
/// part of its private reward).
#[must_use]
pub fn congestion_landscape(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let pi_sq2 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    let s = (two_pi * x).sin();
    let c = (two_pi * x).cos();
    pi_sq2 * s - pi_sq2 * c * c + 2.0 * s
}

impl PrivateReward {
    #[must_use]
    pub fn value(&self, x: f64, a: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Congestion => congestion_landscape(x) - 0.5 * a * a,
            Self::Custom { f, .. } => f(x, a),
        }
    }

    /// Upper bound on `|r̃|` over the given grids.
    #[must_use]
    pub fn bound(&self, states: &StateGrid, actions: &ActionGrid) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Custom { bound, .. } => *bound,
            Self::Congestion => {
                let mut b: f64 = 0.0;
                for i in 0..states.num_cells() {
                    let x = states.coordinate(i);
                    for a in actions.values() {
                        b = b.max(self.value(x, *a).abs());
                    }
                }
                b
            }
        }
    }
}

/// Population-coupled reward term `r̄(x, μ)`.
#[derive(Clone)]
pub enum CrowdReward {
    Zero,
    /// Congestion penalty `−log(density of μ at x)`, floored at
    /// [`DENSITY_FLOOR`] so it stays finite on empty bins.
    NegLogDensity,
    /// Arbitrary bounded coupling; `bound` must dominate `|f|`.
    Custom { f: CrowdRewardFn, bound: f64 },
}

impl std::fmt::Debug for CrowdReward {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Zero => write!(f, "CrowdReward::Zero"),
            Self::NegLogDensity => write!(f, "CrowdReward::NegLogDensity"),
            Self::Custom { bound, .. } => write!(f, "CrowdReward::Custom {{ bound: {bound} }}"),
        }
    }
}

impl CrowdReward {
    /// Evaluate at the cell that owns coordinate `x`. Bin mass is converted
    /// to a density (mass over bin width) before any log is taken, so the
    /// value is resolution-independent.
    #[must_use]
    pub fn value(&self, grid: &StateGrid, cell: usize, mu: &DiscreteDistribution) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::NegLogDensity => {
                let density = mu.prob(cell) / grid.bin_width();
                -density.max(DENSITY_FLOOR).ln()
            }
            Self::Custom { f, .. } => f(grid.coordinate(cell), mu),
        }
    }

    /// Upper bound on `|r̄|` over distributions on the given grid.
    #[must_use]
    pub fn bound(&self, grid: &StateGrid) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::NegLogDensity => {
                // Density ranges over [floor, 1/bin width].
                let max_density = 1.0 / grid.bin_width();
                (-DENSITY_FLOOR.ln()).max(max_density.ln().abs())
            }
            Self::Custom { bound, .. } => *bound,
        }
    }
}

/// Additive reward `r(x, μ, a) = r̃(x, a) + r̄(x, μ)`.
#[derive(Debug, Clone)]
pub struct RewardModel {
    pub private: PrivateReward,
    pub crowd: CrowdReward,
}

impl RewardModel {
    #[must_use]
    pub fn congestion() -> Self {
        Self {
            private: PrivateReward::Congestion,
            crowd: CrowdReward::NegLogDensity,
        }
    }
}

/// How the time axis of the problem is specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Exactly `T` decision steps.
    Steps(usize),
    /// Discounted infinite horizon, truncated at the effective horizon where
    /// the tail of the discounted sum drops below [`HORIZON_TOLERANCE`].
    EffectiveDiscounted,
}

/// One-step transition distribution together with boundary metadata.
#[derive(Debug, Clone, Copy)]
pub struct StepDistribution<'a> {
    pub dist: &'a DiscreteDistribution,
    /// True when interval topology forced out-of-domain mass onto a
    /// boundary cell. Never set on the torus.
    pub clamped: bool,
}

struct TransitionKernel {
    rows: Vec<DiscreteDistribution>,
    clamped: Vec<bool>,
    num_actions: usize,
}

impl TransitionKernel {
    fn build(states: &StateGrid, actions: &ActionGrid, time_step: f64, noise_std: f64) -> Self {
        let m = states.num_cells();
        let h = states.bin_width();
        let s_eff = noise_std * time_step.sqrt();
        let mut rows = Vec::with_capacity(m * actions.num_actions());
        let mut clamped = Vec::with_capacity(m * actions.num_actions());

        for i in 0..m {
            for a in actions.values() {
                let center = states.coordinate(i) + a * time_step;
                let mut masses = vec![0.0; m];
                let mut row_clamped = false;
                let mut deposit = |j: isize, mass: f64, masses: &mut Vec<f64>| {
                    if mass <= 0.0 {
                        return;
                    }
                    let idx = match states.topology() {
                        Topology::Torus => j.rem_euclid(m as isize) as usize,
                        Topology::Interval => {
                            if j < 0 {
                                row_clamped = true;
                                0
                            } else if j >= m as isize {
                                row_clamped = true;
                                m - 1
                            } else {
                                j as usize
                            }
                        }
                    };
                    masses[idx] += mass;
                };

                if s_eff == 0.0 {
                    // Deterministic displacement: split mass linearly between
                    // the two neighboring grid points so the mean position is
                    // preserved.
                    let pos = center / h;
                    let base = pos.floor();
                    let frac = pos - base;
                    let j = base as isize;
                    deposit(j, 1.0 - frac, &mut masses);
                    deposit(j + 1, frac, &mut masses);
                } else {
                    // Integrate the Gaussian density over each cell interval,
                    // truncated five standard deviations out.
                    let lo = ((center - 5.0 * s_eff) / h).floor() as isize;
                    let hi = ((center + 5.0 * s_eff) / h).floor() as isize;
                    for j in lo..=hi {
                        let left = j as f64 * h;
                        let right = left + h;
                        let mass = normal_cdf((right - center) / s_eff)
                            - normal_cdf((left - center) / s_eff);
                        deposit(j, mass, &mut masses);
                    }
                }

                let dist = DiscreteDistribution::from_weights(&masses)
                    .expect("transition masses are nonnegative with positive total");
                rows.push(dist);
                clamped.push(row_clamped);
            }
        }
        Self {
            rows,
            clamped,
            num_actions: actions.num_actions(),
        }
    }

    fn index(&self, state: usize, action: usize) -> usize {
        state * self.num_actions + action
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Immutable environment: grids, dynamics (as a precomputed transition
/// kernel), rewards, and the time axis.
#[derive(Debug)]
pub struct MfgEnvironment {
    state_grid: StateGrid,
    action_grid: ActionGrid,
    horizon: usize,
    discount: f64,
    time_step: f64,
    noise_std: f64,
    reward: RewardModel,
    kernel: TransitionKernel,
}

impl std::fmt::Debug for TransitionKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TransitionKernel {{ rows: {} }}", self.rows.len())
    }
}

impl MfgEnvironment {
    pub fn new(
        state_grid: StateGrid,
        action_grid: ActionGrid,
        horizon: Horizon,
        discount: f64,
        time_step: f64,
        noise_std: f64,
        reward: RewardModel,
    ) -> Result<Self> {
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(MfgError::InvalidParameter(format!(
                "discount must lie in (0, 1], got {discount}"
            )));
        }
        if time_step <= 0.0 || !time_step.is_finite() {
            return Err(MfgError::InvalidParameter(format!(
                "time step must be positive, got {time_step}"
            )));
        }
        if noise_std < 0.0 || !noise_std.is_finite() {
            return Err(MfgError::InvalidParameter(format!(
                "noise level must be nonnegative, got {noise_std}"
            )));
        }
        let reward_bound = reward.private.bound(&state_grid, &action_grid)
            + reward.crowd.bound(&state_grid);
        let horizon = match horizon {
            Horizon::Steps(t) => {
                if t == 0 {
                    return Err(MfgError::InvalidParameter(
                        "horizon must be at least 1 step".into(),
                    ));
                }
                t
            }
            Horizon::EffectiveDiscounted => {
                if discount >= 1.0 {
                    return Err(MfgError::InvalidParameter(
                        "discounted infinite horizon needs discount < 1".into(),
                    ));
                }
                effective_horizon(discount, reward_bound, HORIZON_TOLERANCE)
            }
        };
        let kernel = TransitionKernel::build(&state_grid, &action_grid, time_step, noise_std);
        Ok(Self {
            state_grid,
            action_grid,
            horizon,
            discount,
            time_step,
            noise_std,
            reward,
            kernel,
        })
    }

    #[must_use]
    pub fn state_grid(&self) -> &StateGrid {
        &self.state_grid
    }

    #[must_use]
    pub fn action_grid(&self) -> &ActionGrid {
        &self.action_grid
    }

    /// Number of decision steps `T`; flows carry `T+1` distributions.
    #[must_use]
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[must_use]
    pub fn discount(&self) -> f64 {
        self.discount
    }

    #[must_use]
    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    #[must_use]
    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    #[must_use]
    pub fn reward(&self) -> &RewardModel {
        &self.reward
    }

    #[must_use]
    pub fn num_cells(&self) -> usize {
        self.state_grid.num_cells()
    }

    #[must_use]
    pub fn num_actions(&self) -> usize {
        self.action_grid.num_actions()
    }

    /// Uniform bound on `|r|` over the grids: the sum of the private and
    /// crowd bounds.
    #[must_use]
    pub fn reward_bound(&self) -> f64 {
        self.reward.private.bound(&self.state_grid, &self.action_grid)
            + self.reward.crowd.bound(&self.state_grid)
    }

    fn check_indices(&self, state: usize, action: usize) -> Result<()> {
        if state >= self.num_cells() {
            return Err(MfgError::Dimension(format!(
                "state index {state} outside grid of {} cells",
                self.num_cells()
            )));
        }
        if action >= self.num_actions() {
            return Err(MfgError::Dimension(format!(
                "action index {action} outside grid of {} actions",
                self.num_actions()
            )));
        }
        Ok(())
    }

    /// One-step transition distribution for a state/action pair.
    pub fn step_kernel(&self, state: usize, action: usize) -> Result<StepDistribution<'_>> {
        self.check_indices(state, action)?;
        let idx = self.kernel.index(state, action);
        Ok(StepDistribution {
            dist: &self.kernel.rows[idx],
            clamped: self.kernel.clamped[idx],
        })
    }

    /// Sample a next-state cell from the transition distribution.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        state: usize,
        action: usize,
        rng: &mut R,
    ) -> Result<usize> {
        Ok(self.step_kernel(state, action)?.dist.sample(rng))
    }

    /// Per-step reward `r̃(x, a) + r̄(x, μ)` at a grid state.
    pub fn reward_value(
        &self,
        state: usize,
        action: usize,
        mu: &DiscreteDistribution,
    ) -> Result<f64> {
        self.check_indices(state, action)?;
        if mu.len() != self.num_cells() {
            return Err(MfgError::Dimension(format!(
                "distribution on {} cells, grid has {}",
                mu.len(),
                self.num_cells()
            )));
        }
        let x = self.state_grid.coordinate(state);
        let a = self.action_grid.value(action);
        Ok(self.reward.private.value(x, a) + self.reward.crowd.value(&self.state_grid, state, mu))
    }

    /// Crowd reward vector over all cells for a fixed population
    /// distribution. Used by solvers to avoid recomputing per action.
    pub fn crowd_reward_by_cell(&self, mu: &DiscreteDistribution) -> Result<Vec<f64>> {
        if mu.len() != self.num_cells() {
            return Err(MfgError::Dimension(format!(
                "distribution on {} cells, grid has {}",
                mu.len(),
                self.num_cells()
            )));
        }
        Ok((0..self.num_cells())
            .map(|i| self.reward.crowd.value(&self.state_grid, i, mu))
            .collect())
    }

    /// Private reward table indexed by `(cell, action)`.
    #[must_use]
    pub fn private_reward_table(&self) -> Vec<Vec<f64>> {
        (0..self.num_cells())
            .map(|i| {
                let x = self.state_grid.coordinate(i);
                self.action_grid
                    .values()
                    .iter()
                    .map(|&a| self.reward.private.value(x, a))
                    .collect()
            })
            .collect()
    }
}

/// Smallest `T` with `γ^T · bound / (1−γ) ≤ tol`, i.e. the horizon beyond
/// which the discounted tail is negligible.
#[must_use]
pub fn effective_horizon(discount: f64, reward_bound: f64, tol: f64) -> usize {
    if reward_bound <= 0.0 {
        return 1;
    }
    let t = ((tol * (1.0 - discount) / reward_bound).ln() / discount.ln()).ceil();
    (t.max(1.0)) as usize
}

/// Discretized Lasry-Lions monotonicity pairing
/// `Σ_i [r̄(x_i, m1) − r̄(x_i, m2)]·(m1_i − m2_i)`.
///
/// A crowd reward is monotone (favors spreading out) when this is negative
/// for every pair of distinct distributions.
pub fn check_monotonicity(
    crowd: &CrowdReward,
    grid: &StateGrid,
    m1: &DiscreteDistribution,
    m2: &DiscreteDistribution,
) -> Result<f64> {
    if m1.len() != m2.len() || m1.len() != grid.num_cells() {
        return Err(MfgError::Dimension(format!(
            "monotonicity pairing needs matching grids: {} vs {} vs {} cells",
            m1.len(),
            m2.len(),
            grid.num_cells()
        )));
    }
    let mut total = 0.0;
    for i in 0..m1.len() {
        let gap = crowd.value(grid, i, m1) - crowd.value(grid, i, m2);
        total += gap * (m1.prob(i) - m2.prob(i));
    }
    Ok(total)
}
