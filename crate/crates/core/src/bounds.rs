use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("bounds must have at least one dimension")]
    Empty,
    #[error("dimension {index}: lower bound {lo} must be finite and below upper bound {hi}")]
    Inverted { index: usize, lo: f64, hi: f64 },
}

/// Axis-aligned box `[lo, hi]` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct Bounds {
    ranges: Vec<(f64, f64)>,
}

impl Bounds {
    pub fn new(ranges: Vec<(f64, f64)>) -> Result<Self, BoundsError> {
        if ranges.is_empty() {
            return Err(BoundsError::Empty);
        }
        for (index, &(lo, hi)) in ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(BoundsError::Inverted { index, lo, hi });
            }
        }
        Ok(Self { ranges })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, BoundsError> {
        Self::new(vec![(lo, hi)])
    }

    pub fn unit(dim: usize) -> Self {
        Self { ranges: vec![(0.0, 1.0); dim.max(1)] }
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn lo(&self, i: usize) -> f64 {
        self.ranges[i].0
    }

    pub fn hi(&self, i: usize) -> f64 {
        self.ranges[i].1
    }

    pub fn width(&self, i: usize) -> f64 {
        self.ranges[i].1 - self.ranges[i].0
    }

    /// Largest side length; the reference scale for isotropic kernels.
    pub fn max_width(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.ranges).all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.ranges) {
            *v = v.clamp(lo, hi);
        }
    }

    /// Uniform draw: `lo + (hi - lo) * u` with `u` from `Rng::random::<f64>()`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.ranges.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.ranges).map(|(&v, &(lo, hi))| (v - lo) / (hi - lo)).collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.ranges).map(|(&v, &(lo, hi))| (lo + v * (hi - lo)).clamp(lo, hi)).collect()
    }

    /// Chebyshev distance between two points, in raw units.
    pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<(f64, f64)>> for Bounds {
    type Error = BoundsError;

    fn try_from(ranges: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Self::new(ranges)
    }
}

impl From<Bounds> for Vec<(f64, f64)> {
    fn from(b: Bounds) -> Self {
        b.ranges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_and_empty() {
        assert_eq!(Bounds::new(vec![]), Err(BoundsError::Empty));
        assert!(Bounds::interval(1.0, 1.0).is_err());
        assert!(Bounds::interval(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn unit_mapping_round_trips() {
        let b = Bounds::new(vec![(500.0, 7000.0), (-1.0, 1.0)]).unwrap();
        let x = [1800.0, 0.25];
        let back = b.from_unit(&b.to_unit(&x));
        assert!((back[0] - x[0]).abs() < 1e-9 && (back[1] - x[1]).abs() < 1e-12);
    }
}
