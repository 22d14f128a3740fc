//! Initial designs in the unit cube or over explicit bounds.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    FullFactorial,
    Lhs,
    Uniform,
}

/// Latin hypercube: one point per equal-width stratum in every dimension.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

pub fn uniform_design<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Largest full grid with at most `n` points, filled up with uniform points.
/// In one dimension this is `n` equidistant points including both ends.
pub fn full_factorial<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut levels = 1usize;
    while (levels + 1).checked_pow(dim as u32).is_some_and(|c| c <= n) {
        levels += 1;
    }
    let axis: Vec<f64> =
        if levels == 1 { vec![0.5] } else { (0..levels).map(|i| i as f64 / (levels - 1) as f64).collect() };
    let total = levels.pow(dim as u32);
    let mut points: Vec<Vec<f64>> = (0..total.min(n))
        .map(|mut idx| {
            (0..dim)
                .map(|_| {
                    let v = axis[idx % levels];
                    idx /= levels;
                    v
                })
                .collect()
        })
        .collect();
    points.extend(uniform_design(n - points.len(), dim, rng));
    points
}

/// Design of `n` points over `bounds`.
pub fn create_design<R: Rng + ?Sized>(n: usize, bounds: &Bounds, kind: DesignKind, rng: &mut R) -> Vec<Vec<f64>> {
    let unit = match kind {
        DesignKind::FullFactorial => full_factorial(n, bounds.dim(), rng),
        DesignKind::Lhs => latin_hypercube(n, bounds.dim(), rng),
        DesignKind::Uniform => uniform_design(n, bounds.dim(), rng),
    };
    unit.iter().map(|u| bounds.from_unit(u)).collect()
}
