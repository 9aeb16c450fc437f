//! Uniform state and action grids.
//!
//! The state space is a uniform grid of cells over a one-dimensional domain
//! of length `L`: cell `i` sits at coordinate `i·L/m` and owns the interval
//! `[i·h, (i+1)·h)` with `h = L/m`. On the torus the domain wraps, so cell 0
//! is adjacent to cell `m−1`; on the interval it does not. Actions are a
//! uniform grid of real control values.

use crate::error::{MfgError, Result};

/// Whether coordinates wrap around the domain end or stop at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Torus,
    Interval,
}

/// Uniform spatial grid over a one-dimensional domain.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    num_cells: usize,
    domain_length: f64,
    topology: Topology,
}

impl StateGrid {
    pub fn new(num_cells: usize, domain_length: f64, topology: Topology) -> Result<Self> {
        if num_cells < 2 {
            return Err(MfgError::InvalidParameter(format!(
                "state grid needs at least 2 cells, got {num_cells}"
            )));
        }
        if domain_length <= 0.0 || !domain_length.is_finite() {
            return Err(MfgError::InvalidParameter(format!(
                "domain length must be positive and finite, got {domain_length}"
            )));
        }
        Ok(Self {
            num_cells,
            domain_length,
            topology,
        })
    }

    /// Unit torus with the given resolution, the usual benchmark domain.
    pub fn unit_torus(num_cells: usize) -> Result<Self> {
        Self::new(num_cells, 1.0, Topology::Torus)
    }

    #[must_use]
    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    #[must_use]
    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    #[must_use]
    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Width of one cell.
    #[must_use]
    pub fn bin_width(&self) -> f64 {
        self.domain_length / self.num_cells as f64
    }

    /// Coordinate of cell `i` (its left edge).
    #[must_use]
    pub fn coordinate(&self, i: usize) -> f64 {
        i as f64 * self.bin_width()
    }

    /// All cell coordinates in index order.
    #[must_use]
    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.num_cells).map(|i| self.coordinate(i)).collect()
    }

    /// Map an arbitrary coordinate into `[0, L)` on the torus. Interval grids
    /// leave it untouched.
    #[must_use]
    pub fn wrap(&self, x: f64) -> f64 {
        match self.topology {
            Topology::Torus => {
                let l = self.domain_length;
                let mut y = x % l;
                if y < 0.0 {
                    y += l;
                }
                // `-1e-18 % 1.0` rounds back up to 1.0; fold that onto 0.
                if y >= l {
                    y = 0.0;
                }
                y
            }
            Topology::Interval => x,
        }
    }

    /// Cell index owning a coordinate in `[0, L)`.
    #[must_use]
    pub fn cell_of(&self, x: f64) -> usize {
        let i = (x / self.bin_width()).floor() as isize;
        i.clamp(0, self.num_cells as isize - 1) as usize
    }
}

/// Uniform grid of real-valued control actions on `[min, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    values: Vec<f64>,
}

impl ActionGrid {
    pub fn new(num_actions: usize, min_action: f64, max_action: f64) -> Result<Self> {
        if num_actions == 0 {
            return Err(MfgError::InvalidParameter(
                "action grid needs at least 1 action".into(),
            ));
        }
        if min_action > max_action || !min_action.is_finite() || !max_action.is_finite() {
            return Err(MfgError::InvalidParameter(format!(
                "action range [{min_action}, {max_action}] is not a finite ordered interval"
            )));
        }
        let values = if num_actions == 1 {
            vec![min_action]
        } else {
            let step = (max_action - min_action) / (num_actions - 1) as f64;
            (0..num_actions)
                .map(|j| min_action + j as f64 * step)
                .collect()
        };
        Ok(Self { values })
    }

    #[must_use]
    pub fn num_actions(&self) -> usize {
        self.values.len()
    }

    /// Control value of action index `j`.
    #[must_use]
    pub fn value(&self, j: usize) -> f64 {
        self.values[j]
    }

    #[must_use]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Spacing between adjacent actions (zero for a single action).
    #[must_use]
    pub fn step(&self) -> f64 {
        if self.values.len() < 2 {
            0.0
        } else {
            self.values[1] - self.values[0]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_are_evenly_spaced() {
        let g = StateGrid::unit_torus(8).unwrap();
        let h = g.bin_width();
        for i in 0..7 {
            let gap = g.coordinate(i + 1) - g.coordinate(i);
            assert!((gap - h).abs() < 1e-15, "gap {gap} != bin width {h}");
        }
        assert_eq!(g.coordinate(0), 0.0);
    }

    #[test]
    fn torus_wrap_is_periodic() {
        let g = StateGrid::unit_torus(10).unwrap();
        assert!((g.wrap(1.23) - 0.23).abs() < 1e-12);
        assert!((g.wrap(-0.1) - 0.9).abs() < 1e-12);
        assert_eq!(g.wrap(0.0), 0.0);
        assert!(g.wrap(-1e-18) >= 0.0);
    }

    #[test]
    fn interval_leaves_coordinates_alone() {
        let g = StateGrid::new(10, 1.0, Topology::Interval).unwrap();
        assert_eq!(g.wrap(1.23), 1.23);
        assert_eq!(g.wrap(-0.1), -0.1);
    }

    #[test]
    fn action_grid_spans_range() {
        let a = ActionGrid::new(21, -4.0, 4.0).unwrap();
        assert_eq!(a.num_actions(), 21);
        assert_eq!(a.value(0), -4.0);
        assert_eq!(a.value(20), 4.0);
        assert!((a.value(10)).abs() < 1e-15);
        assert!((a.step() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn single_action_sits_at_min() {
        let a = ActionGrid::new(1, 0.5, 0.5).unwrap();
        assert_eq!(a.value(0), 0.5);
        assert_eq!(a.step(), 0.0);
    }

    #[test]
    fn degenerate_grids_are_rejected() {
        assert!(StateGrid::unit_torus(1).is_err());
        assert!(StateGrid::new(4, 0.0, Topology::Torus).is_err());
        assert!(ActionGrid::new(0, 0.0, 1.0).is_err());
        assert!(ActionGrid::new(3, 1.0, -1.0).is_err());
    }

    #[test]
    fn cell_lookup_matches_coordinates() {
        let g = StateGrid::unit_torus(50).unwrap();
        for i in 0..50 {
            assert_eq!(g.cell_of(g.coordinate(i) + 1e-9), i);
        }
    }
}
