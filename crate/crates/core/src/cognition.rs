//! The closed loop: bootstrap from an initial design, then periodic and
//! stagnation-triggered selection cycles, proposal of the next parameter and
//! guarded application to the plant.

use std::io::Write;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{
    generate_test_functions, tune_then_benchmark, BenchmarkError, CampaignSettings, Candidate, CpuClock,
    EvaluationRecord, DEFAULT_CHECKPOINTS,
};
use crate::bounds::Bounds;
use crate::gp::{fit, Dataset, GpError, SimulationMethod};
use crate::knowledge::{
    compose_pipelines, determine_feasible, select_candidates, Aggregation, Direction, GoalSpec, KnowledgeBase,
    KnowledgeError, OverallGoal, PipelineTemplate, ResourceBudget,
};
use crate::optimizers::design::{create_design, DesignKind};
use crate::optimizers::{run, Algorithm, OptProblem, OptimizerConfig};
use crate::plant::{PlantAdapter, PlantError, ProductionCycleRecord};
use crate::rating::{rate_pipelines, terminal_of, KbUpdate, RatingError, RatingTable, RatingWeights};
use crate::rng::{derive_seed, hash_str, rng_from};

#[derive(Debug, Error)]
pub enum CognitionError {
    #[error("invalid cognition config: {0}")]
    Config(String),
    #[error("state not bootstrapped")]
    NotBootstrapped,
    #[error("baseline {0} is not in the knowledge base")]
    MissingBaseline(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Initial design flavours offered to the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDesign {
    #[default]
    FullFactorial,
    Lhs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CognitionConfig {
    /// Initial design size.
    pub s: usize,
    pub design: InitialDesign,
    /// Selection period in steps.
    pub theta: usize,
    /// Minimum parameter change that is applied; `None` means 1% of the range.
    pub epsilon: Option<f64>,
    pub weights: RatingWeights,
    pub k_instances: usize,
    pub tuning_budget: usize,
    pub bench_budget: usize,
    /// Record checkpoints up to `bench_budget`.
    pub checkpoints: Vec<usize>,
    pub reps: usize,
    pub stagnation_delta: f64,
    pub master_seed: u64,
    pub simulation: SimulationMethod,
    pub resources: ResourceBudget,
    pub goal: GoalSpec,
    pub baseline: String,
    pub cpu_clock: CpuClock,
    pub parallel: bool,
}

impl Default for CognitionConfig {
    fn default() -> Self {
        Self {
            s: 12,
            design: InitialDesign::FullFactorial,
            theta: 5,
            epsilon: None,
            weights: RatingWeights::default(),
            k_instances: 5,
            tuning_budget: 8,
            bench_budget: 36,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            reps: 10,
            stagnation_delta: 0.01,
            master_seed: 0,
            simulation: SimulationMethod::Spectral,
            resources: ResourceBudget::default(),
            goal: GoalSpec {
                overall_goal: OverallGoal::Optimization,
                signals: vec!["f1".into(), "f2".into(), "f3".into()],
                aggregation: Aggregation::Min,
                direction: Direction::Minimize,
            },
            baseline: Algorithm::RandomSearch.name().to_string(),
            cpu_clock: CpuClock::Modeled,
            parallel: true,
        }
    }
}

impl CognitionConfig {
    pub fn validate(&self) -> Result<(), CognitionError> {
        let bad = |m: &str| Err(CognitionError::Config(m.to_string()));
        if self.s < 2 {
            return bad("s must be at least 2");
        }
        if self.theta < 2 {
            return bad("theta must be at least 2");
        }
        if self.epsilon.is_some_and(|e| !(e.is_finite() && e >= 0.0)) {
            return bad("epsilon must be finite and non-negative");
        }
        if self.k_instances < 2 {
            return bad("k_instances must be at least 2");
        }
        if self.tuning_budget == 0 || self.bench_budget == 0 || self.reps == 0 {
            return bad("tuning_budget, bench_budget and reps must be positive");
        }
        if !(self.stagnation_delta.is_finite() && self.stagnation_delta >= 0.0) {
            return bad("stagnation_delta must be finite and non-negative");
        }
        self.weights.validate()?;
        self.goal.validate()?;
        if !self.goal.is_executable() {
            return bad("only optimization goals can be executed");
        }
        Ok(())
    }

    pub fn epsilon_for(&self, bounds: &Bounds) -> f64 {
        self.epsilon.unwrap_or(0.01 * bounds.max_width())
    }

    /// Stagnation window length.
    pub fn window(&self) -> usize {
        self.theta.div_ceil(2)
    }

    fn campaign(&self, seed: u64) -> CampaignSettings {
        let mut checkpoints: Vec<usize> =
            self.checkpoints.iter().copied().filter(|&c| c > 0 && c < self.bench_budget).collect();
        checkpoints.push(self.bench_budget);
        CampaignSettings {
            checkpoints,
            reps: self.reps,
            tuning_budget: self.tuning_budget,
            seed,
            parallel: self.parallel,
            cpu_clock: self.cpu_clock,
        }
    }
}

/// `s` starting points over `bounds`. Full factorial designs are deterministic;
/// Latin hypercubes use `seed`.
pub fn create_initial_design(s: usize, bounds: &Bounds, kind: InitialDesign, seed: u64) -> Vec<Vec<f64>> {
    let kind = match kind {
        InitialDesign::FullFactorial => DesignKind::FullFactorial,
        InitialDesign::Lhs => DesignKind::Lhs,
    };
    create_design(s, bounds, kind, &mut rng_from(seed))
}

/// Runs the selected optimizer on the posterior mean of a GP fitted to `data`
/// and returns its best point. Without a selection, or if the surrogate cannot
/// be built, the current point is kept.
pub fn get_best_x(
    p_best: Option<&OptimizerConfig>,
    data: &Dataset,
    x_current: &[f64],
    budget: usize,
    seed: u64,
) -> Vec<f64> {
    let Some(cfg) = p_best else {
        return x_current.to_vec();
    };
    let model = match fit(data, true) {
        Ok(m) => m,
        Err(e) => {
            warn!("surrogate fit failed, keeping x: {e}");
            return x_current.to_vec();
        }
    };
    let objective = |x: &[f64]| model.predict_mean(x);
    let result = OptProblem::new(&objective, data.bounds().clone(), budget).and_then(|p| run(cfg, &p, seed));
    match result {
        Ok(r) => r.best_x,
        Err(e) => {
            warn!("proposal run failed, keeping x: {e}");
            x_current.to_vec()
        }
    }
}

/// Responses of the aggregate objective as a GP dataset.
pub fn cycles_dataset(d: &[ProductionCycleRecord], bounds: &Bounds) -> Result<Dataset, GpError> {
    let xs = d.iter().map(|r| r.x.clone()).collect();
    let ys = d.iter().map(|r| r.aggregate).collect();
    Dataset::new(xs, ys, bounds.clone())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CognitionState {
    /// Every production cycle received so far.
    pub d: Vec<ProductionCycleRecord>,
    /// The parameter currently applied.
    pub x: Vec<f64>,
    /// All benchmark records of past selection cycles.
    pub e: Vec<EvaluationRecord>,
    pub zeta: bool,
    pub iteration: usize,
    pub p_best: Option<String>,
    pub p_best_config: Option<OptimizerConfig>,
    /// Best aggregate seen up to the end of each step.
    pub best_history: Vec<f64>,
    /// Aggregate of the latest cycle of each step.
    pub objective_history: Vec<f64>,
    /// Best aggregate after bootstrap.
    pub initial_best: f64,
    /// Steps at which a selection cycle ran.
    pub selections: Vec<usize>,
    /// Highest plant cycle index already in `d`.
    pub last_cycle: u64,
    pub bootstrapped: bool,
}

/// One JSON-lines log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Bootstrap(CycleEntry),
    Cycle(CycleEntry),
    Selection(SelectionEntry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleEntry {
    pub iteration: usize,
    pub cycle: u64,
    pub x: Vec<f64>,
    pub objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f3: Option<f64>,
    pub p_best: Option<String>,
    pub zeta: bool,
    pub selection_ran: bool,
    pub applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub iteration: usize,
    /// The latest cycle the selection saw.
    pub cycle: u64,
    pub candidates: Vec<String>,
    pub p_best: Option<String>,
    pub table: RatingTable,
    pub kb_updates: Vec<KbUpdate>,
    /// The benchmark records the table was computed from.
    pub records: Vec<EvaluationRecord>,
}

pub fn write_jsonl<W: Write>(mut out: W, entries: &[LogEntry]) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

struct Selection {
    candidates: Vec<String>,
    table: RatingTable,
    p_best: Option<String>,
    p_best_config: Option<OptimizerConfig>,
    records: Vec<EvaluationRecord>,
    updates: Vec<KbUpdate>,
    kb: KnowledgeBase,
}

/// The loop: configuration, knowledge base and state.
#[derive(Debug, Clone)]
pub struct Cognition {
    config: CognitionConfig,
    kb: KnowledgeBase,
    state: CognitionState,
}

impl Cognition {
    pub fn new(config: CognitionConfig, kb: KnowledgeBase) -> Result<Self, CognitionError> {
        config.validate()?;
        Ok(Self { config, kb, state: CognitionState::default() })
    }

    pub fn config(&self) -> &CognitionConfig {
        &self.config
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn state(&self) -> &CognitionState {
        &self.state
    }

    /// Loads `history` if given, otherwise applies the initial design to the plant.
    pub fn bootstrap(
        &mut self,
        plant: &mut dyn PlantAdapter,
        history: Option<&[ProductionCycleRecord]>,
    ) -> Result<Vec<LogEntry>, CognitionError> {
        // Cycle indices of supplied history belong to another log; only the
        // plant's own counter matters for later deltas.
        let mut st = CognitionState {
            last_cycle: plant.receive_new_data(0).last().map_or(0, |r| r.cycle),
            ..Default::default()
        };
        match history {
            Some(h) if !h.is_empty() => {
                st.d = h.to_vec();
                st.x = h[h.len() - 1].x.clone();
            }
            _ => {
                let seed = derive_seed(self.config.master_seed, &[hash_str("initial-design")]);
                let design = create_initial_design(self.config.s, plant.bounds(), self.config.design, seed);
                for p in &design {
                    plant.apply(p)?;
                }
                st.d = plant.receive_new_data(st.last_cycle);
                st.x = design.last().cloned().unwrap_or_default();
                st.last_cycle = st.d.last().map_or(st.last_cycle, |r| r.cycle);
            }
        }
        st.initial_best = st.d.iter().map(|r| r.aggregate).fold(f64::INFINITY, f64::min);
        st.bootstrapped = true;
        let entries = st.d.iter().map(|r| LogEntry::Bootstrap(cycle_entry(0, r, None, false, false, false))).collect();
        info!("bootstrapped with {} cycles", st.d.len());
        self.state = st;
        Ok(entries)
    }

    fn select(&self, st: &CognitionState, bounds: &Bounds) -> Result<Selection, CognitionError> {
        let cfg = &self.config;
        let data = cycles_dataset(&st.d, bounds)?;
        let it = st.iteration as u64;
        let set = generate_test_functions(
            &data,
            cfg.k_instances,
            cfg.simulation,
            derive_seed(cfg.master_seed, &[hash_str("test-functions"), it]),
        )?;
        let path = cfg.goal.path();
        let pipelines = compose_pipelines(&self.kb, &cfg.goal)?;
        let feasible = determine_feasible(&pipelines, &self.kb, &cfg.goal, data.len());
        let mut chosen = select_candidates(&feasible, &self.kb, &cfg.goal, &cfg.resources, &st.e);
        if !chosen.iter().any(|p| p.id() == cfg.baseline) {
            if self.kb.entry(&path, &cfg.baseline).is_none() {
                return Err(CognitionError::MissingBaseline(cfg.baseline.clone()));
            }
            chosen.push(PipelineTemplate::single(&cfg.baseline));
        }
        let settings = cfg.campaign(derive_seed(cfg.master_seed, &[hash_str("campaign"), it]));
        let mut records = Vec::new();
        let mut candidates = Vec::new();
        for p in &chosen {
            let entry = self
                .kb
                .entry(&path, p.terminal_algorithm())
                .ok_or_else(|| KnowledgeError::UnknownAlgorithm(p.terminal_algorithm().into()))?;
            let cand = Candidate::from_pipeline(p, entry)?;
            candidates.push(cand.id.clone());
            records.extend(tune_then_benchmark(&cand, set.instances(), &settings)?);
        }
        let (table, p_best, updates) = rate_pipelines(&records, &cfg.baseline, &cfg.weights)?;
        let mut kb = self.kb.clone();
        for u in &updates {
            kb = kb.update_characteristics(&u.algorithm, u.performance, u.computational_effort, u.ram_usage)?;
        }
        let p_best_config = match &p_best {
            Some(id) => {
                let algorithm: Algorithm =
                    terminal_of(id).parse().map_err(|_| KnowledgeError::UnknownAlgorithm(terminal_of(id).into()))?;
                let params =
                    records.iter().find(|r| &r.pipeline == id).map(|r| r.tuned_params.clone()).unwrap_or_default();
                Some(OptimizerConfig { algorithm, params })
            }
            None => None,
        };
        debug!("selection at step {}: {:?}", st.iteration, p_best);
        Ok(Selection { candidates, table, p_best, p_best_config, records, updates, kb })
    }

    /// One pass of the loop. On error the state and KB are left untouched.
    pub fn step(&mut self, plant: &mut dyn PlantAdapter) -> Result<Vec<LogEntry>, CognitionError> {
        if !self.state.bootstrapped {
            return Err(CognitionError::NotBootstrapped);
        }
        let cfg = &self.config;
        let bounds = plant.bounds().clone();
        let mut st = self.state.clone();
        let mut kb = None;
        let mut entries = Vec::new();

        let selection_ran = st.iteration.is_multiple_of(cfg.theta) || st.zeta;
        if selection_ran {
            st.zeta = false;
            let sel = self.select(&st, &bounds)?;
            entries.push(LogEntry::Selection(SelectionEntry {
                iteration: st.iteration,
                cycle: st.last_cycle,
                candidates: sel.candidates,
                p_best: sel.p_best.clone(),
                table: sel.table,
                kb_updates: sel.updates,
                records: sel.records.clone(),
            }));
            st.p_best = sel.p_best;
            st.p_best_config = sel.p_best_config;
            st.e.extend(sel.records);
            st.selections.push(st.iteration);
            kb = Some(sel.kb);
        }

        let data = cycles_dataset(&st.d, &bounds)?;
        let seed = derive_seed(cfg.master_seed, &[hash_str("best-x"), st.iteration as u64]);
        let x_best = get_best_x(st.p_best_config.as_ref(), &data, &st.x, cfg.bench_budget, seed);
        let applied = Bounds::max_abs_diff(&st.x, &x_best) >= cfg.epsilon_for(&bounds);
        if applied {
            plant.apply(&x_best)?;
            st.x = x_best;
        } else {
            match plant.run_cycle() {
                Err(PlantError::NotStarted) => {
                    plant.apply(&st.x)?;
                }
                other => {
                    other?;
                }
            }
        }

        let fresh = plant.receive_new_data(st.last_cycle);
        let last = fresh.last().cloned().ok_or_else(|| PlantError::Failure("plant produced no cycle".into()))?;
        st.last_cycle = last.cycle;
        st.d.extend(fresh);
        let best = st.d.iter().map(|r| r.aggregate).fold(f64::INFINITY, f64::min);
        st.best_history.push(best);
        st.objective_history.push(last.aggregate);
        st.iteration += 1;

        if stagnating(&st, cfg) {
            st.zeta = true;
        }
        entries.push(LogEntry::Cycle(cycle_entry(
            st.iteration - 1,
            &last,
            st.p_best.clone(),
            st.zeta,
            selection_ran,
            applied,
        )));

        self.state = st;
        if let Some(kb) = kb {
            self.kb = kb;
        }
        Ok(entries)
    }
}

/// True when the last `window` steps, all taken after the latest selection,
/// brought no significant improvement or a clear decrease.
fn stagnating(st: &CognitionState, cfg: &CognitionConfig) -> bool {
    let w = cfg.window();
    let last_sel = st.selections.last().copied().unwrap_or(0);
    if st.iteration < last_sel + w {
        return false;
    }
    let n = st.best_history.len();
    let before = if n > w { st.best_history[n - 1 - w] } else { st.initial_best };
    let now = st.best_history[n - 1];
    let scale = before.abs().max(1e-12);
    let improvement = (before - now) / scale;
    let window_best = st.objective_history[n - w..].iter().copied().fold(f64::INFINITY, f64::min);
    let current = st.objective_history[n - 1];
    let decrease = (current - window_best) / window_best.abs().max(1e-12) > cfg.stagnation_delta;
    improvement < cfg.stagnation_delta || decrease
}

fn cycle_entry(
    iteration: usize,
    r: &ProductionCycleRecord,
    p_best: Option<String>,
    zeta: bool,
    selection_ran: bool,
    applied: bool,
) -> CycleEntry {
    CycleEntry {
        iteration,
        cycle: r.cycle,
        x: r.x.clone(),
        objective: r.aggregate,
        f1: r.f.first().copied(),
        f2: r.f.get(1).copied(),
        f3: r.f.get(2).copied(),
        p_best,
        zeta,
        selection_ran,
        applied,
    }
}
