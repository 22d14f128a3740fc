use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::BenchmarkError;

/// Pearson product-moment correlation with its t test and a 95% Fisher interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub t: f64,
    pub p_value: f64,
    pub df: usize,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<Correlation, BenchmarkError> {
    if a.len() != b.len() {
        return Err(BenchmarkError::DegenerateInput(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 3 {
        return Err(BenchmarkError::DegenerateInput(format!("need at least 3 pairs, got {n}")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(BenchmarkError::DegenerateInput("non-finite value".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(BenchmarkError::DegenerateInput("zero variance".into()));
    }
    let mut r = (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0);
    // Perfectly linear data lands a few ulps short of one.
    if 1.0 - r.abs() < 1e-14 {
        r = r.signum();
    }
    let df = n - 2;
    let dff = df as f64;
    let (t, p_value) = if r.abs() == 1.0 {
        (f64::INFINITY.copysign(r), 0.0)
    } else {
        let t = r * (dff / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dff).expect("df is positive");
        (t, (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
    };
    let (ci_low, ci_high) = if n > 3 && r.abs() < 1.0 {
        let z = r.atanh();
        let half = Normal::standard().inverse_cdf(0.975) / ((n - 3) as f64).sqrt();
        ((z - half).tanh(), (z + half).tanh())
    } else if r.abs() >= 1.0 {
        (r, r)
    } else {
        (-1.0, 1.0)
    };
    Ok(Correlation { r, t, p_value, df, ci_low, ci_high })
}
