use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use caai_core::benchmark::{
    fidelity_experiment, generate_test_functions, mean_ranks, portfolio_entries, rank_algorithms, write_records_csv,
    EvaluationRecord, GRID_POINTS, GROUND_TRUTH_ID,
};
use caai_core::cognition::{write_jsonl, Cognition, CognitionError};
use caai_core::gp::equidistant_grid;
use caai_core::knowledge::{template_kb, KnowledgeBase};
use caai_core::plant::{seed_aggregate_dataset, PlantAdapter, VpsSimulator};

use crate::config::RunConfig;
use crate::{report, Cli, CliError, Command};

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::Init => init(&out, cli.force),
        Command::Run { cycles, theta, epsilon } => {
            let mut cfg = load_config(cli)?;
            if let Some(c) = cycles {
                cfg.cycles = *c;
            }
            if let Some(t) = theta {
                cfg.cognition.theta = *t;
            }
            if epsilon.is_some() {
                cfg.cognition.epsilon = *epsilon;
            }
            cfg.validate()?;
            let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or(out);
            run(&cfg, &out, cli.force)
        }
        Command::Benchmark => {
            let cfg = load_config(cli)?;
            let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or(out);
            benchmark(&cfg, &out, cli.force)
        }
        Command::Report { input } => {
            let cfg = load_config(cli)?;
            let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or(out);
            report::report(&cfg, input, &out, cli.force)
        }
        Command::Simulate => {
            let cfg = load_config(cli)?;
            let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or(out);
            simulate(&cfg, &out, cli.force)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Creates `dir` and checks that none of `names` exists there unless `force`.
pub fn prepare_outputs(dir: &Path, names: &[&str], force: bool) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let paths: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(CliError::Config(format!("{} exists; pass --force to overwrite", p.display())));
        }
    }
    Ok(paths)
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn cognition_error(e: CognitionError) -> CliError {
    match e {
        CognitionError::Config(m) => CliError::Config(m),
        CognitionError::MissingBaseline(_) => CliError::Config(e.to_string()),
        other => runtime(other),
    }
}

fn init(dir: &Path, force: bool) -> Result<(), CliError> {
    let paths = prepare_outputs(dir, &["kb.yaml", "config.yaml"], force)?;
    template_kb().save(&paths[0]).map_err(runtime)?;
    let cfg = RunConfig { kb_path: Some(PathBuf::from("kb.yaml")), ..RunConfig::default() };
    std::fs::write(&paths[1], cfg.to_yaml())?;
    log::info!("wrote {} and {}", paths[0].display(), paths[1].display());
    Ok(())
}

fn load_kb(cfg: &RunConfig) -> Result<KnowledgeBase, CliError> {
    match &cfg.kb_path {
        Some(p) => KnowledgeBase::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => Ok(template_kb()),
    }
}

fn run(cfg: &RunConfig, dir: &Path, force: bool) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let paths = prepare_outputs(dir, &["run.jsonl", "kb.final.yaml"], force)?;
    let mut plant = VpsSimulator::new(cfg.plant.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut cog = Cognition::new(cfg.cognition.clone(), kb).map_err(cognition_error)?;
    let mut log_out = create(&paths[0])?;

    let entries = cog.bootstrap(&mut plant, None).map_err(cognition_error)?;
    write_jsonl(&mut log_out, &entries)?;
    log_out.flush()?;
    for step in 0..cfg.cycles {
        if cfg.batch_schedule.contains(&step) {
            plant.new_batch().map_err(runtime)?;
            log::info!("step {step}: new raw-material batch {}", plant.batch());
        }
        let entries = cog.step(&mut plant).map_err(cognition_error)?;
        write_jsonl(&mut log_out, &entries)?;
        log_out.flush()?;
        let st = cog.state();
        log::info!(
            "step {step}: x = {:.1}, best = {:.4}, p_best = {}",
            st.x[0],
            st.best_history.last().copied().unwrap_or(f64::NAN),
            st.p_best.as_deref().unwrap_or("-")
        );
    }
    cog.kb().save(&paths[1]).map_err(runtime)?;
    let st = cog.state();
    println!(
        "{} steps, {} selections, best aggregate {:.6} (initial {:.6}), p_best {}",
        st.iteration,
        st.selections.len(),
        st.best_history.last().copied().unwrap_or(st.initial_best),
        st.initial_best,
        st.p_best.as_deref().unwrap_or("-")
    );
    Ok(())
}

fn write_mean_ranks(path: &Path, records: &[EvaluationRecord]) -> Result<(), CliError> {
    let ranks = mean_ranks(records).map_err(runtime)?;
    let mut rows: Vec<(&(String, usize), &f64)> = ranks.iter().collect();
    rows.sort_by(|a, b| (a.0 .1, &a.0 .0).cmp(&(b.0 .1, &b.0 .0)));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["budget", "pipeline", "mean_rank"]).map_err(runtime)?;
    for ((pipeline, budget), rank) in rows {
        w.write_record([budget.to_string(), pipeline.clone(), rank.to_string()]).map_err(runtime)?;
    }
    w.flush()?;
    Ok(())
}

fn benchmark(cfg: &RunConfig, dir: &Path, force: bool) -> Result<(), CliError> {
    let paths = prepare_outputs(dir, &["records.csv", "ranks_ground_truth.csv", "ranks_simulation.csv"], force)?;
    let plant = VpsSimulator::new(cfg.plant.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let settings = cfg.benchmark.settings(cfg.cognition.master_seed);
    let out = fidelity_experiment(
        &plant,
        &portfolio_entries(),
        cfg.benchmark.k_instances,
        cfg.benchmark.simulation,
        &settings,
    )
    .map_err(runtime)?;

    let mut records: Vec<EvaluationRecord> = out.ground_truth.records.clone();
    records.extend(out.simulation.records.iter().cloned());
    rank_algorithms(&mut records).map_err(runtime)?;
    let mut runs = out.ground_truth.runs.clone();
    runs.extend(out.simulation.runs.iter().cloned());
    write_records_csv(create(&paths[0])?, &records, &runs, Some(&cfg.cognition.baseline)).map_err(runtime)?;
    write_mean_ranks(&paths[1], &out.ground_truth.records)?;
    write_mean_ranks(&paths[2], &out.simulation.records)?;

    let c = &out.correlation;
    println!("{GROUND_TRUTH_ID} vs simulation ranks: r = {:.3}, p = {:.3e}, df = {}", c.r, c.p_value, c.df);
    Ok(())
}

fn simulate(cfg: &RunConfig, dir: &Path, force: bool) -> Result<(), CliError> {
    let paths = prepare_outputs(dir, &["realizations.csv"], force)?;
    let plant = VpsSimulator::new(cfg.plant.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let data = seed_aggregate_dataset(plant.weights(), plant.bounds()).map_err(runtime)?;
    let set =
        generate_test_functions(&data, cfg.benchmark.k_instances, cfg.benchmark.simulation, cfg.cognition.master_seed)
            .map_err(runtime)?;
    let b = plant.bounds();
    let grid = equidistant_grid(b.lo(0), b.hi(0), GRID_POINTS);
    let truth = plant.ground_truth();

    let mut w = csv::Writer::from_writer(create(&paths[0])?);
    w.write_record(["id", "x", "y"]).map_err(runtime)?;
    for &x in &grid {
        w.write_record([GROUND_TRUTH_ID.to_string(), x.to_string(), truth.eval(x).to_string()]).map_err(runtime)?;
    }
    for inst in set.instances() {
        for (x, y) in inst.function.grid().iter().zip(inst.function.values()) {
            w.write_record([inst.id.clone(), x.to_string(), y.to_string()]).map_err(runtime)?;
        }
    }
    w.flush()?;
    Ok(())
}
