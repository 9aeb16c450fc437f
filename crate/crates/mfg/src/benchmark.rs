//! Torus congestion benchmark with a known stationary equilibrium.
//!
//! Agents on the unit torus are rewarded for standing in a sinusoidal
//! landscape and penalized for crowding (negative log density) and for
//! control effort. The ergodic problem admits a closed-form solution:
//! drift `a*(x) = π·cos(2πx)` and population density proportional to
//! `exp(2·sin(2πx))`, which the solvers are measured against.

use crate::dist::DiscreteDistribution;
use crate::env::{Horizon, MfgEnvironment, RewardModel};
use crate::error::{MfgError, Result};
use crate::grid::{ActionGrid, StateGrid, Topology};

pub const DEFAULT_DISCOUNT: f64 = 0.95;
pub const DEFAULT_TIME_STEP: f64 = 0.05;
pub const DEFAULT_NOISE_STD: f64 = 0.35;
pub const DEFAULT_NUM_ACTIONS: usize = 21;
pub const DEFAULT_ACTION_MIN: f64 = -4.0;
pub const DEFAULT_ACTION_MAX: f64 = 4.0;

/// Benchmark environment at default parameters: discounted infinite
/// horizon (truncated at the effective horizon), 21 actions on [−4, 4],
/// discount 0.95, time step 0.05.
pub fn congestion_environment(num_cells: usize, noise_std: f64) -> Result<MfgEnvironment> {
    MfgEnvironment::new(
        StateGrid::unit_torus(num_cells)?,
        ActionGrid::new(DEFAULT_NUM_ACTIONS, DEFAULT_ACTION_MIN, DEFAULT_ACTION_MAX)?,
        Horizon::EffectiveDiscounted,
        DEFAULT_DISCOUNT,
        DEFAULT_TIME_STEP,
        noise_std,
        RewardModel::congestion(),
    )
}

/// The stationary equilibrium evaluated on the grid: control values
/// `a*(x_i) = π·cos(2πx_i)` and the normalized population distribution
/// with masses proportional to `exp(2·sin(2πx_i))`.
pub fn closed_form_equilibrium(grid: &StateGrid) -> Result<(Vec<f64>, DiscreteDistribution)> {
    if grid.topology() != Topology::Torus {
        return Err(MfgError::UnsupportedTopology(
            "the congestion equilibrium is periodic; use a torus grid".into(),
        ));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let control: Vec<f64> = (0..grid.num_cells())
        .map(|i| std::f64::consts::PI * (two_pi * grid.coordinate(i)).cos())
        .collect();
    let weights: Vec<f64> = (0..grid.num_cells())
        .map(|i| (2.0 * (two_pi * grid.coordinate(i)).sin()).exp())
        .collect();
    let density = DiscreteDistribution::from_weights(&weights)?;
    Ok((control, density))
}

/// Grid-weighted L₂ distances of a learned solution from the closed form:
/// `(density error, control error)`.
///
/// The density comparison is in density units (bin mass divided by bin
/// width), so values are comparable across grid resolutions. Controls are
/// compared as real action values.
pub fn benchmark_errors(
    learned_density: &DiscreteDistribution,
    learned_control: &[f64],
    grid: &StateGrid,
) -> Result<(f64, f64)> {
    if learned_density.len() != grid.num_cells() || learned_control.len() != grid.num_cells() {
        return Err(MfgError::Dimension(format!(
            "solution on {} cells / {} controls, grid has {}",
            learned_density.len(),
            learned_control.len(),
            grid.num_cells()
        )));
    }
    let (control_star, density_star) = closed_form_equilibrium(grid)?;
    let h = grid.bin_width();
    let mut density_sq = 0.0;
    let mut control_sq = 0.0;
    for i in 0..grid.num_cells() {
        let d_gap = (learned_density.prob(i) - density_star.prob(i)) / h;
        density_sq += h * d_gap * d_gap;
        let c_gap = learned_control[i] - control_star[i];
        control_sq += h * c_gap * c_gap;
    }
    Ok((density_sq.sqrt(), control_sq.sqrt()))
}
