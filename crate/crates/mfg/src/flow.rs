//! Mean field flows: one population distribution per time index.

use std::io::Write as _;
use std::path::Path;

use crate::dist::DiscreteDistribution;
use crate::error::{MfgError, Result};
use crate::grid::StateGrid;
use crate::transport;

/// A population flow `(μ_0, …, μ_T)`: `T+1` distributions on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldFlow {
    per_time: Vec<DiscreteDistribution>,
}

impl MeanFieldFlow {
    pub fn new(per_time: Vec<DiscreteDistribution>) -> Result<Self> {
        if per_time.is_empty() {
            return Err(MfgError::Dimension("flow needs at least one time index".into()));
        }
        let cells = per_time[0].len();
        if per_time.iter().any(|d| d.len() != cells) {
            return Err(MfgError::Dimension(
                "all time slices of a flow must share one grid".into(),
            ));
        }
        Ok(Self { per_time })
    }

    /// Flow that sits at `mu0` for every one of the `horizon+1` time
    /// indices. The usual neutral initialization for fictitious play.
    pub fn constant(mu0: &DiscreteDistribution, horizon: usize) -> Result<Self> {
        Self::new(vec![mu0.clone(); horizon + 1])
    }

    /// Number of decision steps `T` (one less than the number of slices).
    #[must_use]
    pub fn horizon(&self) -> usize {
        self.per_time.len() - 1
    }

    #[must_use]
    pub fn num_cells(&self) -> usize {
        self.per_time[0].len()
    }

    #[must_use]
    pub fn at(&self, t: usize) -> &DiscreteDistribution {
        &self.per_time[t]
    }

    #[must_use]
    pub fn slices(&self) -> &[DiscreteDistribution] {
        &self.per_time
    }

    /// Distance to another flow: per-time Wasserstein-1 terms summed over
    /// all time indices.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        transport::flow_distance(&self.per_time, &other.per_time)
    }

    /// Write the flow as CSV: one row per time index, one column per cell,
    /// header row carrying the grid coordinates.
    pub fn write_csv(&self, path: &Path, grid: &StateGrid) -> Result<()> {
        if grid.num_cells() != self.num_cells() {
            return Err(MfgError::Dimension(format!(
                "flow on {} cells, grid has {}",
                self.num_cells(),
                grid.num_cells()
            )));
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..grid.num_cells())
            .map(|i| format!("x_{:.6}", grid.coordinate(i)))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for dist in &self.per_time {
            let row: Vec<String> = dist.probs().iter().map(|p| format!("{p:.12e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Fictitious-play averaging step:
/// `μ̄^(n+1) = n/(n+1) · μ̄^(n) + 1/(n+1) · μ̂^(n+1)`, applied per bin and
/// per time index.
pub fn fp_mixing_update(
    avg: &MeanFieldFlow,
    latest: &MeanFieldFlow,
    n: usize,
) -> Result<MeanFieldFlow> {
    if avg.horizon() != latest.horizon() || avg.num_cells() != latest.num_cells() {
        return Err(MfgError::Dimension(format!(
            "cannot average flows of shape ({}, {}) and ({}, {})",
            avg.horizon(),
            avg.num_cells(),
            latest.horizon(),
            latest.num_cells()
        )));
    }
    let w = 1.0 / (n as f64 + 1.0);
    let per_time = avg
        .slices()
        .iter()
        .zip(latest.slices())
        .map(|(a, b)| a.mix_with(b, w))
        .collect::<Result<Vec<_>>>()?;
    MeanFieldFlow::new(per_time)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_flow(cell: usize, m: usize, horizon: usize) -> MeanFieldFlow {
        let p = DiscreteDistribution::point_mass(cell, m).unwrap();
        MeanFieldFlow::constant(&p, horizon).unwrap()
    }

    #[test]
    fn constant_flow_has_requested_shape() {
        let f = point_flow(2, 8, 5);
        assert_eq!(f.horizon(), 5);
        assert_eq!(f.num_cells(), 8);
        assert_eq!(f.at(0), f.at(5));
    }

    #[test]
    fn first_update_returns_the_new_flow() {
        let avg = point_flow(0, 4, 3);
        let latest = point_flow(2, 4, 3);
        let next = fp_mixing_update(&avg, &latest, 0).unwrap();
        assert_eq!(next, latest);
    }

    #[test]
    fn second_update_splits_evenly() {
        let avg = point_flow(0, 4, 2);
        let latest = point_flow(3, 4, 2);
        let next = fp_mixing_update(&avg, &latest, 1).unwrap();
        for t in 0..=2 {
            assert!((next.at(t).prob(0) - 0.5).abs() < 1e-15);
            assert!((next.at(t).prob(3) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn iterated_updates_match_the_running_mean() {
        let members: Vec<MeanFieldFlow> = (0..6).map(|k| point_flow(k, 8, 4)).collect();
        let mut avg = members[0].clone();
        for (n, member) in members.iter().enumerate().skip(1) {
            avg = fp_mixing_update(&avg, member, n).unwrap();
        }
        for t in 0..=4 {
            for cell in 0..8 {
                let direct: f64 = members
                    .iter()
                    .map(|f| f.at(t).prob(cell))
                    .sum::<f64>()
                    / members.len() as f64;
                assert!((avg.at(t).prob(cell) - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mismatched_flows_error() {
        let a = point_flow(0, 4, 3);
        let b = point_flow(0, 4, 2);
        let c = point_flow(0, 5, 3);
        assert!(fp_mixing_update(&a, &b, 1).is_err());
        assert!(fp_mixing_update(&a, &c, 1).is_err());
        assert!(a.distance(&b).is_err());
    }

    #[test]
    fn csv_round_trip_shape() {
        let grid = StateGrid::unit_torus(4).unwrap();
        let f = point_flow(1, 4, 2);
        let dir = std::env::temp_dir().join("mfg_flow_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("flow.csv");
        f.write_csv(&path, &grid).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("x_0.000000,x_0.250000"));
        assert_eq!(lines[1].split(',').count(), 4);
        std::fs::remove_dir_all(&dir).ok();
    }
}
