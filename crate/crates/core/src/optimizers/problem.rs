use serde::{Deserialize, Serialize};

use super::OptError;
use crate::bounds::Bounds;

/// Objective signature shared by every optimizer. `Sync` so campaigns can fan out.
pub type Objective<'a> = dyn Fn(&[f64]) -> f64 + Sync + 'a;

/// A bounded, budget-limited minimization problem.
pub struct OptProblem<'a> {
    objective: &'a Objective<'a>,
    bounds: Bounds,
    budget: usize,
}

impl<'a> OptProblem<'a> {
    pub fn new(objective: &'a Objective<'a>, bounds: Bounds, budget: usize) -> Result<Self, OptError> {
        if budget == 0 {
            return Err(OptError::InvalidProblem("budget must be at least 1".into()));
        }
        Ok(Self { objective, bounds, budget })
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub(crate) fn evaluator(&self) -> Evaluator<'_, 'a> {
        Evaluator::new(self)
    }
}

/// Outcome of one optimizer run. `trace[i]` is the best value after `i + 1`
/// evaluations; `memory_trace` and `cpu_trace` are aligned with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best_x: Vec<f64>,
    pub best_y: f64,
    pub trace: Vec<f64>,
    pub evals_used: usize,
    /// Peak tracked state size in bytes up to each evaluation.
    pub memory_trace: Vec<u64>,
    /// Thread CPU seconds elapsed since the run started, at each evaluation.
    pub cpu_trace: Vec<f64>,
    /// Modeled CPU seconds from counted operations. Unlike `cpu_trace` it is
    /// reproducible across machines and runs.
    pub work_trace: Vec<f64>,
}

impl OptResult {
    /// Best value after `budget` evaluations (or after all of them if fewer were used).
    pub fn best_at(&self, budget: usize) -> f64 {
        self.trace[budget.clamp(1, self.evals_used) - 1]
    }

    pub fn memory_at(&self, budget: usize) -> u64 {
        self.memory_trace[budget.clamp(1, self.evals_used) - 1]
    }

    pub fn cpu_at(&self, budget: usize) -> f64 {
        self.cpu_trace[budget.clamp(1, self.evals_used) - 1]
    }

    pub fn work_at(&self, budget: usize) -> f64 {
        self.work_trace[budget.clamp(1, self.evals_used) - 1]
    }

    /// Equality on everything except wall-clock-dependent fields.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.best_x == other.best_x
            && self.best_y.to_bits() == other.best_y.to_bits()
            && self.trace == other.trace
            && self.evals_used == other.evals_used
            && self.memory_trace == other.memory_trace
            && self.work_trace == other.work_trace
    }
}

/// Nominal duration of one counted operation.
pub const SECONDS_PER_WORK_UNIT: f64 = 1e-9;

/// CPU time consumed by the calling thread, in seconds.
pub fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc == 0 {
        ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
    } else {
        0.0
    }
}

/// Counting wrapper around the objective. Enforces bounds and budget, keeps
/// the best-so-far trace and the resource meter.
pub(crate) struct Evaluator<'p, 'a> {
    problem: &'p OptProblem<'a>,
    best_x: Vec<f64>,
    best_y: f64,
    trace: Vec<f64>,
    memory_trace: Vec<u64>,
    cpu_trace: Vec<f64>,
    work_trace: Vec<f64>,
    state_bytes: u64,
    peak_bytes: u64,
    cpu_start: f64,
    work: f64,
}

impl<'p, 'a> Evaluator<'p, 'a> {
    fn new(problem: &'p OptProblem<'a>) -> Self {
        Self {
            problem,
            best_x: Vec::new(),
            best_y: f64::INFINITY,
            trace: Vec::with_capacity(problem.budget),
            memory_trace: Vec::with_capacity(problem.budget),
            cpu_trace: Vec::with_capacity(problem.budget),
            work_trace: Vec::with_capacity(problem.budget),
            state_bytes: 0,
            peak_bytes: 0,
            cpu_start: thread_cpu_seconds(),
            work: 0.0,
        }
    }

    pub fn bounds(&self) -> &Bounds {
        &self.problem.bounds
    }

    pub fn used(&self) -> usize {
        self.trace.len()
    }

    pub fn remaining(&self) -> usize {
        self.problem.budget - self.trace.len()
    }

    pub fn best_y(&self) -> f64 {
        self.best_y
    }

    /// Reports the optimizer's current state size.
    pub fn track_memory(&mut self, bytes: u64) {
        self.state_bytes = bytes;
        self.peak_bytes = self.peak_bytes.max(bytes);
    }

    /// Adds optimizer work beyond the per-evaluation charge.
    pub fn charge(&mut self, units: f64) {
        self.work += units;
    }

    pub fn evaluate(&mut self, x: &[f64]) -> Result<f64, OptError> {
        if self.remaining() == 0 {
            return Err(OptError::BudgetExhausted);
        }
        if !self.problem.bounds.contains(x) {
            return Err(OptError::OutOfBounds(x.to_vec()));
        }
        let y = (self.problem.objective)(x);
        if y < self.best_y || self.trace.is_empty() {
            self.best_y = y;
            self.best_x = x.to_vec();
        }
        self.trace.push(self.best_y);
        self.peak_bytes = self.peak_bytes.max(self.state_bytes);
        self.memory_trace.push(self.peak_bytes);
        self.cpu_trace.push((thread_cpu_seconds() - self.cpu_start).max(0.0));
        // every evaluation reads the point and touches the tracked state once
        self.work += (x.len() as u64 + self.state_bytes / 8) as f64;
        self.work_trace.push(self.work * SECONDS_PER_WORK_UNIT);
        Ok(y)
    }

    /// Evaluates a point given in unit-cube coordinates.
    pub fn evaluate_unit(&mut self, u: &[f64]) -> Result<f64, OptError> {
        let x = self.problem.bounds.from_unit(u);
        self.evaluate(&x)
    }

    pub fn finish(self) -> OptResult {
        OptResult {
            evals_used: self.trace.len(),
            best_x: self.best_x,
            best_y: self.best_y,
            trace: self.trace,
            memory_trace: self.memory_trace,
            cpu_trace: self.cpu_trace,
            work_trace: self.work_trace,
        }
    }
}
