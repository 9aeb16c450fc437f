//! Probability vectors over grid cells and histogram density estimation.

use rand::Rng;

use crate::error::{MfgError, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Probability distribution over the cells of a state grid.
///
/// Entries are non-negative and sum to one (within a small tolerance at
/// construction; stored values are renormalized so the sum is exact to
/// rounding).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validate and adopt a probability vector. The entries must be
    /// non-negative, finite, and sum to one within `1e-9`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(MfgError::InvalidDistribution(
                "distribution needs at least one cell".into(),
            ));
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(MfgError::InvalidDistribution(format!(
                    "entry {i} is {p}, expected a finite non-negative probability"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(MfgError::InvalidDistribution(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        let mut d = Self { probs };
        d.renormalize();
        Ok(d)
    }

    /// Normalize arbitrary non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(MfgError::InvalidDistribution(
                "distribution needs at least one cell".into(),
            ));
        }
        let mut sum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(MfgError::InvalidDistribution(format!(
                    "weight {i} is {w}, expected finite and non-negative"
                )));
            }
            sum += w;
        }
        if sum <= 0.0 {
            return Err(MfgError::InvalidDistribution(
                "weights sum to zero, nothing to normalize".into(),
            ));
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / sum).collect(),
        })
    }

    /// Uniform distribution over `n` cells.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(MfgError::InvalidDistribution(
                "distribution needs at least one cell".into(),
            ));
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    /// All mass on a single cell.
    pub fn point_mass(cell: usize, n: usize) -> Result<Self> {
        if cell >= n {
            return Err(MfgError::InvalidDistribution(format!(
                "point mass at cell {cell} outside grid of {n} cells"
            )));
        }
        let mut probs = vec![0.0; n];
        probs[cell] = 1.0;
        Ok(Self { probs })
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[must_use]
    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    #[must_use]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Convex combination `(1−w)·self + w·other`, the averaging step used by
    /// fictitious play.
    pub fn mix_with(&self, other: &Self, w: f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(MfgError::Dimension(format!(
                "cannot mix distributions of {} and {} cells",
                self.len(),
                other.len()
            )));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(MfgError::InvalidParameter(format!(
                "mixing weight {w} outside [0, 1]"
            )));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(&a, &b)| (1.0 - w) * a + w * b)
            .collect();
        Ok(Self { probs })
    }

    /// Draw one cell index with probability proportional to its mass.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    fn renormalize(&mut self) {
        let sum: f64 = self.probs.iter().sum();
        for p in &mut self.probs {
            *p /= sum;
        }
    }
}

/// Histogram density estimate from sample coordinates in `[0, 1)`.
///
/// Bins the samples into `num_bins` equal cells and returns the empirical
/// frequency per cell. This closed form is the exact maximizer of the
/// multinomial likelihood, so no iterative fit is needed.
pub fn estimate_density(samples: &[f64], num_bins: usize) -> Result<DiscreteDistribution> {
    if samples.is_empty() {
        return Err(MfgError::InvalidSamples(
            "cannot estimate a density from zero samples".into(),
        ));
    }
    if num_bins == 0 {
        return Err(MfgError::InvalidParameter(
            "histogram needs at least one bin".into(),
        ));
    }
    let mut counts = vec![0.0; num_bins];
    for (k, &x) in samples.iter().enumerate() {
        if !x.is_finite() || !(0.0..1.0).contains(&x) {
            return Err(MfgError::InvalidSamples(format!(
                "sample {k} is {x}, outside [0, 1)"
            )));
        }
        let bin = ((x * num_bins as f64).floor() as usize).min(num_bins - 1);
        counts[bin] += 1.0;
    }
    let n = samples.len() as f64;
    for c in &mut counts {
        *c /= n;
    }
    Ok(DiscreteDistribution { probs: counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_vector_is_accepted() {
        let d = DiscreteDistribution::new(vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(d.len(), 3);
        assert!((d.prob(2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bad_vectors_are_rejected() {
        assert!(DiscreteDistribution::new(vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![0.5, -0.5, 1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(DiscreteDistribution::new(vec![0.5, f64::NAN]).is_err());
    }

    #[test]
    fn weights_are_normalized() {
        let d = DiscreteDistribution::from_weights(&[2.0, 6.0]).unwrap();
        assert!((d.prob(0) - 0.25).abs() < 1e-15);
        assert!((d.prob(1) - 0.75).abs() < 1e-15);
        assert!(DiscreteDistribution::from_weights(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn uniform_and_point_mass() {
        let u = DiscreteDistribution::uniform(4).unwrap();
        assert!(u.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let p = DiscreteDistribution::point_mass(2, 4).unwrap();
        assert_eq!(p.prob(2), 1.0);
        assert_eq!(p.prob(0), 0.0);
        assert!(DiscreteDistribution::point_mass(4, 4).is_err());
    }

    #[test]
    fn mixing_interpolates() {
        let a = DiscreteDistribution::point_mass(0, 2).unwrap();
        let b = DiscreteDistribution::point_mass(1, 2).unwrap();
        let m = a.mix_with(&b, 0.25).unwrap();
        assert!((m.prob(0) - 0.75).abs() < 1e-15);
        assert!((m.prob(1) - 0.25).abs() < 1e-15);
        assert!(a.mix_with(&b, 1.5).is_err());
        let c = DiscreteDistribution::uniform(3).unwrap();
        assert!(a.mix_with(&c, 0.5).is_err());
    }

    #[test]
    fn histogram_splits_samples_by_bin() {
        let d = estimate_density(&[0.05, 0.55], 2).unwrap();
        assert!((d.prob(0) - 0.5).abs() < 1e-15);
        assert!((d.prob(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn histogram_handles_degenerate_sample() {
        let d = estimate_density(&[0.71, 0.72, 0.74], 10).unwrap();
        assert_eq!(d.prob(7), 1.0);
    }

    #[test]
    fn histogram_rejects_bad_input() {
        assert!(estimate_density(&[], 4).is_err());
        assert!(estimate_density(&[0.5], 0).is_err());
        assert!(estimate_density(&[f64::NAN], 4).is_err());
        assert!(estimate_density(&[1.0], 4).is_err());
        assert!(estimate_density(&[-0.1], 4).is_err());
    }
}
