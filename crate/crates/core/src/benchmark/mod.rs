//! Tune-then-benchmark campaigns on simulated test functions, with metered
//! resources, rank tables and correlation statistics.

pub mod fidelity;
mod rank;
mod stats;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fidelity::{fidelity_experiment, portfolio_entries, FidelityOutput, GROUND_TRUTH_ID};
pub use rank::{mid_ranks, rank_algorithms};
pub use stats::{pearson_correlation, Correlation};

use crate::bounds::Bounds;
use crate::gp::{
    equidistant_grid, fit, Dataset, GpError, GpModel, Realization, SimulationMethod, UnconditionalSampler,
};
use crate::knowledge::{AlgorithmEntry, ParameterSpec, PipelineTemplate};
use crate::optimizers::{run, Algorithm, OptError, OptProblem, OptResult, OptimizerConfig, ParamValue};
use crate::rng::{derive_seed, derived_rng, hash_str};

/// Points of the grid that carries every simulated test function.
pub const GRID_POINTS: usize = 512;
pub const DEFAULT_CHECKPOINTS: [usize; 6] = [6, 12, 18, 24, 30, 36];
pub const DEFAULT_REPS: usize = 10;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("need at least two test instances, got {0}")]
    InstanceSetTooSmall(usize),
    #[error("pipeline {pipeline} appears twice for instance {instance} at budget {budget}")]
    DuplicatePipelineInGroup { pipeline: String, instance: String, budget: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid campaign: {0}")]
    Config(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("pipeline {pipeline}: {source}")]
    Optimizer { pipeline: String, source: OptError },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Metered outcome of one pipeline on one instance at one budget checkpoint,
/// averaged over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub pipeline: String,
    pub instance: String,
    pub budget: usize,
    pub best_y: f64,
    pub cpu_time: f64,
    pub memory_bytes: u64,
    pub rank: Option<f64>,
    #[serde(default)]
    pub tuned_params: BTreeMap<String, ParamValue>,
}

impl EvaluationRecord {
    /// Equality on everything except `cpu_time`, which depends on the machine.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.pipeline == other.pipeline
            && self.instance == other.instance
            && self.budget == other.budget
            && self.best_y == other.best_y
            && self.memory_bytes == other.memory_bytes
            && self.rank == other.rank
            && self.tuned_params == other.tuned_params
    }
}

/// One repetition's row at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub record: EvaluationRecord,
}

/// A named one-dimensional objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestInstance {
    pub id: String,
    pub function: Realization,
}

impl TestInstance {
    pub fn new(id: &str, function: Realization) -> Self {
        Self { id: id.to_string(), function }
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::interval(self.function.lo(), self.function.hi()).expect("realization grid is increasing")
    }
}

/// Unconditional realizations of one fitted model, all on the same grid.
#[derive(Debug, Clone)]
pub struct TestInstanceSet {
    instances: Vec<TestInstance>,
    source_model: GpModel,
    master_seed: u64,
}

impl TestInstanceSet {
    pub fn instances(&self) -> &[TestInstance] {
        &self.instances
    }

    pub fn source_model(&self) -> &GpModel {
        &self.source_model
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Fits a GP with a noise term to `data` and draws `k` unconditional test
/// functions over the data bounds.
pub fn generate_test_functions(
    data: &Dataset,
    k: usize,
    method: SimulationMethod,
    master_seed: u64,
) -> Result<TestInstanceSet, BenchmarkError> {
    let model = fit(data, true)?;
    let b = data.bounds();
    if b.dim() != 1 {
        return Err(GpError::UnsupportedDimension(b.dim()).into());
    }
    let grid = equidistant_grid(b.lo(0), b.hi(0), GRID_POINTS);
    let sampler = UnconditionalSampler::new(&model, &grid, method)?;
    let instances = (0..k)
        .map(|i| {
            let seed = derive_seed(master_seed, &[hash_str("test-function"), i as u64]);
            TestInstance::new(&format!("sim-{i}"), sampler.draw(seed))
        })
        .collect();
    Ok(TestInstanceSet { instances, source_model: model, master_seed })
}

/// A runnable pipeline: its terminal optimizer with KB defaults and the
/// ranges the tuner may sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub defaults: OptimizerConfig,
    pub space: Vec<ParameterSpec>,
}

impl Candidate {
    pub fn new(id: &str, defaults: OptimizerConfig, space: Vec<ParameterSpec>) -> Self {
        Self { id: id.to_string(), defaults, space }
    }

    /// Table defaults and no tuning space.
    pub fn untuned(algorithm: Algorithm) -> Self {
        Self::new(algorithm.name(), OptimizerConfig::new(algorithm), vec![])
    }

    /// The candidate for a pipeline whose terminal stage is `entry`.
    pub fn from_pipeline(pipeline: &PipelineTemplate, entry: &AlgorithmEntry) -> Result<Self, BenchmarkError> {
        let name = pipeline.terminal_algorithm();
        let algorithm = Algorithm::from_str(name)
            .map_err(|_| BenchmarkError::Config(format!("terminal stage {name} is not a known optimizer")))?;
        Ok(Self::new(&pipeline.id(), entry.default_config(algorithm), entry.parameters.clone()))
    }

    pub fn algorithm(&self) -> Algorithm {
        self.defaults.algorithm
    }
}

/// Source of `cpu_time` in records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpuClock {
    /// Measured thread CPU time.
    #[default]
    Thread,
    /// Counted operations at a nominal rate; reproducible.
    Modeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSettings {
    /// Budgets at which records are taken; the largest is the run budget.
    pub checkpoints: Vec<usize>,
    pub reps: usize,
    /// Configurations sampled by the tuner.
    pub tuning_budget: usize,
    pub seed: u64,
    pub parallel: bool,
    pub cpu_clock: CpuClock,
}

impl Default for CampaignSettings {
    fn default() -> Self {
        Self {
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            reps: DEFAULT_REPS,
            tuning_budget: 8,
            seed: 0,
            parallel: true,
            cpu_clock: CpuClock::Thread,
        }
    }
}

impl CampaignSettings {
    pub fn bench_budget(&self) -> usize {
        self.checkpoints.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), BenchmarkError> {
        if self.checkpoints.is_empty() || self.checkpoints.contains(&0) {
            return Err(BenchmarkError::Config("checkpoints must be non-empty and positive".into()));
        }
        if self.reps == 0 {
            return Err(BenchmarkError::Config("reps must be at least 1".into()));
        }
        if self.tuning_budget == 0 {
            return Err(BenchmarkError::Config("tuning_budget must be at least 1".into()));
        }
        Ok(())
    }

    fn sorted_checkpoints(&self) -> Vec<usize> {
        let mut c = self.checkpoints.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

fn run_on(config: &OptimizerConfig, instance: &TestInstance, budget: usize, seed: u64) -> Result<OptResult, OptError> {
    let f = &instance.function;
    let objective = |x: &[f64]| f.eval(x[0]);
    let problem = OptProblem::new(&objective, instance.bounds(), budget)?;
    run(config, &problem, seed)
}

fn run_seed(master: u64, pipeline: &str, instance: &str, rep: usize) -> u64 {
    derive_seed(master, &[hash_str(pipeline), hash_str(instance), rep as u64])
}

fn maybe_par<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// Output of a campaign: mean rows per (pipeline, instance, budget) and the
/// per-repetition rows behind them, both in deterministic order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CampaignOutput {
    pub records: Vec<EvaluationRecord>,
    pub runs: Vec<RepRecord>,
}

/// Runs each fixed configuration `reps` times on every instance.
pub fn run_campaign(
    entries: &[(String, OptimizerConfig)],
    instances: &[TestInstance],
    settings: &CampaignSettings,
) -> Result<CampaignOutput, BenchmarkError> {
    settings.validate()?;
    let checkpoints = settings.sorted_checkpoints();
    let budget = settings.bench_budget();
    let tasks: Vec<(usize, usize, usize)> = (0..entries.len())
        .flat_map(|p| (0..instances.len()).flat_map(move |i| (0..settings.reps).map(move |r| (p, i, r))))
        .collect();
    let results = maybe_par(&tasks, settings.parallel, |&(p, i, r)| {
        let (id, cfg) = &entries[p];
        let inst = &instances[i];
        run_on(cfg, inst, budget, run_seed(settings.seed, id, &inst.id, r))
            .map_err(|source| BenchmarkError::Optimizer { pipeline: id.clone(), source })
    });

    let cpu = |r: &OptResult, b: usize| match settings.cpu_clock {
        CpuClock::Thread => r.cpu_at(b),
        CpuClock::Modeled => r.work_at(b),
    };
    let mut out = CampaignOutput::default();
    let mut it = results.into_iter();
    for (id, cfg) in entries {
        let params = cfg.resolved();
        for inst in instances {
            let runs: Vec<OptResult> = it.by_ref().take(settings.reps).collect::<Result<_, _>>()?;
            for &b in &checkpoints {
                let row = |best_y, cpu_time, memory_bytes| EvaluationRecord {
                    pipeline: id.clone(),
                    instance: inst.id.clone(),
                    budget: b,
                    best_y,
                    cpu_time,
                    memory_bytes,
                    rank: None,
                    tuned_params: params.clone(),
                };
                for (rep, r) in runs.iter().enumerate() {
                    out.runs.push(RepRecord { rep, record: row(r.best_at(b), cpu(r, b), r.memory_at(b)) });
                }
                let n = runs.len() as f64;
                let reps = runs.len() as u64;
                let mem: u64 = runs.iter().map(|r| r.memory_at(b)).sum();
                out.records.push(row(
                    runs.iter().map(|r| r.best_at(b)).sum::<f64>() / n,
                    runs.iter().map(|r| cpu(r, b)).sum::<f64>() / n,
                    (mem + reps / 2) / reps,
                ));
            }
        }
    }
    Ok(out)
}

/// The tuning and benchmarking instance indices for a campaign seed. Every
/// pipeline of one campaign sees the same pair.
pub fn draw_instance_pair(n: usize, seed: u64) -> Result<(usize, usize), BenchmarkError> {
    if n < 2 {
        return Err(BenchmarkError::InstanceSetTooSmall(n));
    }
    let mut rng = derived_rng(seed, &[hash_str("instance-pair")]);
    let tune = rng.random_range(0..n);
    let mut bench = rng.random_range(0..n - 1);
    if bench >= tune {
        bench += 1;
    }
    Ok((tune, bench))
}

fn sample_config(candidate: &Candidate, rng: &mut crate::rng::Rng) -> OptimizerConfig {
    let mut cfg = candidate.defaults.clone();
    for p in &candidate.space {
        cfg.params.insert(p.name.clone(), p.sample(rng));
    }
    cfg
}

/// Random-search tuning on one instance: `tuning_budget` configurations, each
/// scored by its mean best-so-far over the checkpoints of one seeded run.
/// Ties keep the earlier configuration.
pub fn tune(
    candidate: &Candidate,
    instance: &TestInstance,
    settings: &CampaignSettings,
) -> Result<OptimizerConfig, BenchmarkError> {
    settings.validate()?;
    if candidate.space.is_empty() {
        return Ok(candidate.defaults.clone());
    }
    let mut rng = derived_rng(settings.seed, &[hash_str("tune"), hash_str(&candidate.id)]);
    let configs: Vec<OptimizerConfig> =
        (0..settings.tuning_budget).map(|_| sample_config(candidate, &mut rng)).collect();
    let checkpoints = settings.sorted_checkpoints();
    let budget = settings.bench_budget();
    let indexed: Vec<(usize, &OptimizerConfig)> = configs.iter().enumerate().collect();
    let scores = maybe_par(&indexed, settings.parallel, |&(j, cfg)| {
        let seed = derive_seed(settings.seed, &[hash_str("tune-run"), hash_str(&candidate.id), j as u64]);
        match run_on(cfg, instance, budget, seed) {
            Ok(r) => checkpoints.iter().map(|&b| r.best_at(b)).sum::<f64>() / checkpoints.len() as f64,
            // Sampled corners of the space that the optimizer rejects lose.
            Err(_) => f64::INFINITY,
        }
    });
    let best = scores.iter().enumerate().fold(0, |best, (j, s)| if *s < scores[best] { j } else { best });
    Ok(configs[best].clone())
}

/// Tunes `candidate` on one instance of `set` and benchmarks the tuned
/// configuration on a different one.
pub fn tune_then_benchmark(
    candidate: &Candidate,
    set: &[TestInstance],
    settings: &CampaignSettings,
) -> Result<Vec<EvaluationRecord>, BenchmarkError> {
    let (ti, bi) = draw_instance_pair(set.len(), settings.seed)?;
    let tuned = tune(candidate, &set[ti], settings)?;
    let out = run_campaign(&[(candidate.id.clone(), tuned)], std::slice::from_ref(&set[bi]), settings)?;
    Ok(out.records)
}

/// Per-budget mean best_y of every pipeline on one instance, ranked.
pub fn rank_table(records: &[EvaluationRecord], instance: &str) -> Result<Vec<EvaluationRecord>, BenchmarkError> {
    let mut rows: Vec<EvaluationRecord> = records.iter().filter(|r| r.instance == instance).cloned().collect();
    rank_algorithms(&mut rows)?;
    Ok(rows)
}

/// Mean rank of each (pipeline, budget) over instances.
pub fn mean_ranks(records: &[EvaluationRecord]) -> Result<BTreeMap<(String, usize), f64>, BenchmarkError> {
    let mut rows = records.to_vec();
    rank_algorithms(&mut rows)?;
    let mut acc: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = acc.entry((r.pipeline.clone(), r.budget)).or_default();
        e.0 += r.rank.expect("ranked above");
        e.1 += 1;
    }
    Ok(acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
}

/// Correlation between the ranks on one objective and the mean ranks over a
/// set of others, paired by (pipeline, budget).
pub fn rank_correlation(
    reference: &[EvaluationRecord],
    others: &[EvaluationRecord],
) -> Result<Correlation, BenchmarkError> {
    let a = mean_ranks(reference)?;
    let b = mean_ranks(others)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = a.iter().filter_map(|(k, v)| b.get(k).map(|w| (*v, *w))).unzip();
    pearson_correlation(&xs, &ys)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    pipeline: String,
    instance: String,
    budget: usize,
    rep: String,
    best_y: f64,
    cpu_time: f64,
    memory_bytes: u64,
    rank: Option<f64>,
    baseline: bool,
    tuned_params: String,
}

const MEAN_REP: &str = "mean";

fn csv_row(r: &EvaluationRecord, rep: String, baseline: Option<&str>) -> CsvRow {
    CsvRow {
        pipeline: r.pipeline.clone(),
        instance: r.instance.clone(),
        budget: r.budget,
        rep,
        best_y: r.best_y,
        cpu_time: r.cpu_time,
        memory_bytes: r.memory_bytes,
        rank: r.rank,
        baseline: baseline == Some(r.pipeline.as_str()),
        tuned_params: serde_json::to_string(&r.tuned_params).expect("params serialize"),
    }
}

/// Writes per-repetition rows followed by mean rows (`rep = mean`).
pub fn write_records_csv<W: Write>(
    out: W,
    records: &[EvaluationRecord],
    runs: &[RepRecord],
    baseline: Option<&str>,
) -> Result<(), BenchmarkError> {
    let mut w = csv::Writer::from_writer(out);
    for r in runs {
        w.serialize(csv_row(&r.record, r.rep.to_string(), baseline))?;
    }
    for r in records {
        w.serialize(csv_row(r, MEAN_REP.into(), baseline))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the mean rows back from a records CSV.
pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<EvaluationRecord>, BenchmarkError> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        let row: CsvRow = row?;
        if row.rep != MEAN_REP {
            continue;
        }
        let tuned_params = if row.tuned_params.is_empty() {
            BTreeMap::new()
        } else {
            serde_json::from_str(&row.tuned_params)
                .map_err(|e| BenchmarkError::DegenerateInput(format!("tuned_params: {e}")))?
        };
        out.push(EvaluationRecord {
            pipeline: row.pipeline,
            instance: row.instance,
            budget: row.budget,
            best_y: row.best_y,
            cpu_time: row.cpu_time,
            memory_bytes: row.memory_bytes,
            rank: row.rank,
            tuned_params,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Dataset;
    use crate::knowledge::template_kb;

    fn data() -> Dataset {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin() + 0.3 * x).collect();
        Dataset::from_1d(&xs, &ys, Bounds::unit(1)).unwrap()
    }

    fn quick() -> CampaignSettings {
        CampaignSettings {
            checkpoints: vec![4, 8],
            reps: 2,
            tuning_budget: 3,
            seed: 5,
            parallel: false,
            cpu_clock: CpuClock::Modeled,
        }
    }

    #[test]
    fn instance_generation_is_deterministic_and_distinct() {
        let d = data();
        assert!(generate_test_functions(&d, 0, SimulationMethod::Spectral, 1).unwrap().is_empty());
        let a = generate_test_functions(&d, 3, SimulationMethod::Decomposition, 1).unwrap();
        let b = generate_test_functions(&d, 3, SimulationMethod::Decomposition, 1).unwrap();
        assert_eq!(a.instances(), b.instances());
        let v = |i: usize| a.instances()[i].function.values().to_vec();
        assert_ne!(v(0), v(1));
        assert_eq!(a.instances()[2].function.grid().len(), GRID_POINTS);
    }

    #[test]
    fn too_few_instances() {
        let set = generate_test_functions(&data(), 1, SimulationMethod::Spectral, 1).unwrap();
        let c = Candidate::untuned(Algorithm::RandomSearch);
        assert!(matches!(
            tune_then_benchmark(&c, set.instances(), &quick()),
            Err(BenchmarkError::InstanceSetTooSmall(1))
        ));
    }

    #[test]
    fn instance_pair_differs() {
        for seed in 0..50 {
            let (t, b) = draw_instance_pair(2, seed).unwrap();
            assert_ne!(t, b);
            assert!(t < 2 && b < 2);
        }
    }

    #[test]
    fn tuning_edge_cases() {
        let set = generate_test_functions(&data(), 2, SimulationMethod::Spectral, 3).unwrap();
        let rs = Candidate::untuned(Algorithm::RandomSearch);
        let recs = tune_then_benchmark(&rs, set.instances(), &quick()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].tuned_params, OptimizerConfig::new(Algorithm::RandomSearch).resolved());

        let kb = template_kb();
        let de = kb.find("DifferentialEvolution").unwrap();
        let cand = Candidate::from_pipeline(&PipelineTemplate::single("DifferentialEvolution"), de).unwrap();
        let settings = CampaignSettings { tuning_budget: 1, ..quick() };
        let tuned = tune(&cand, &set.instances()[0], &settings).unwrap();
        let mut rng = derived_rng(settings.seed, &[hash_str("tune"), hash_str(&cand.id)]);
        assert_eq!(tuned, sample_config(&cand, &mut rng));
    }

    #[test]
    fn serial_and_parallel_agree() {
        let set = generate_test_functions(&data(), 2, SimulationMethod::Spectral, 9).unwrap();
        let entries: Vec<(String, OptimizerConfig)> =
            Algorithm::ALL.iter().map(|a| (a.name().to_string(), OptimizerConfig::new(*a))).collect();
        let serial = run_campaign(&entries, set.instances(), &quick()).unwrap();
        let par = run_campaign(&entries, set.instances(), &CampaignSettings { parallel: true, ..quick() }).unwrap();
        assert_eq!(serial.records.len(), 5 * 2 * 2);
        assert_eq!(serial.runs.len(), 5 * 2 * 2 * 2);
        assert!(serial.records.iter().zip(&par.records).all(|(a, b)| a.same_outcome(b)));
        // modeled cpu time is schedule independent as well
        assert!(serial.records.iter().zip(&par.records).all(|(a, b)| a.cpu_time == b.cpu_time));
    }

    #[test]
    fn csv_round_trip_keeps_mean_rows() {
        let set = generate_test_functions(&data(), 1, SimulationMethod::Spectral, 2).unwrap();
        let entries = vec![("DE".to_string(), OptimizerConfig::new(Algorithm::DifferentialEvolution))];
        let mut out = run_campaign(&entries, set.instances(), &quick()).unwrap();
        rank_algorithms(&mut out.records).unwrap();
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &out.records, &out.runs, Some("DE")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(
            text.starts_with("pipeline,instance,budget,rep,best_y,cpu_time,memory_bytes,rank,baseline,tuned_params")
        );
        let back = read_records_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), out.records.len());
        assert!(back.iter().zip(&out.records).all(|(a, b)| a.same_outcome(b)));
    }
}
