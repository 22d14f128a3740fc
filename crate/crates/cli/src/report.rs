use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use caai_core::benchmark::{rank_correlation, read_records_csv, EvaluationRecord, GROUND_TRUTH_ID};
use caai_core::cognition::LogEntry;
use caai_core::rating::rate_pipelines;

use crate::commands::{create, prepare_outputs};
use crate::config::RunConfig;
use crate::CliError;

/// What the report was computed from.
struct Input {
    records: Vec<EvaluationRecord>,
    /// Run-log summary lines; empty for campaign CSVs.
    run_summary: Vec<String>,
}

fn malformed(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("malformed input {}: {e}", path.display()))
}

fn read_runlog(path: &Path) -> Result<Input, CliError> {
    let file = std::fs::File::open(path).map_err(|e| malformed(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| malformed(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: LogEntry = serde_json::from_str(&line).map_err(|e| malformed(path, format!("line {}: {e}", i + 1)))?;
        entries.push(e);
    }
    let mut cycles = 0;
    let mut best = f64::INFINITY;
    let mut selections = Vec::new();
    let mut records = Vec::new();
    for e in &entries {
        match e {
            LogEntry::Bootstrap(c) | LogEntry::Cycle(c) => {
                cycles += 1;
                best = best.min(c.objective);
            }
            LogEntry::Selection(s) => {
                selections.push(format!("{}:{}", s.iteration, s.p_best.as_deref().unwrap_or("-")));
                records = s.records.clone();
            }
        }
    }
    let run_summary = vec![
        format!("cycle entries: {cycles}"),
        format!("best aggregate: {best}"),
        format!(
            "selections (step:p_best): {}",
            if selections.is_empty() { "none".into() } else { selections.join(" ") }
        ),
        "records: latest selection cycle".to_string(),
    ];
    Ok(Input { records, run_summary })
}

fn read_campaign(path: &Path) -> Result<Input, CliError> {
    let file = std::fs::File::open(path).map_err(|e| malformed(path, e))?;
    let records = read_records_csv(file).map_err(|e| malformed(path, e))?;
    if records.is_empty() {
        return Err(malformed(path, "no mean rows"));
    }
    Ok(Input { records, run_summary: vec![] })
}

/// Mean best_y, memory and cpu per (pipeline, budget) over instances.
fn trajectories(records: &[EvaluationRecord]) -> BTreeMap<(String, usize), (f64, f64, f64, usize)> {
    let mut acc: BTreeMap<(String, usize), (f64, f64, f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry((r.pipeline.clone(), r.budget)).or_default();
        e.0 += r.best_y;
        e.1 += r.memory_bytes as f64;
        e.2 += r.cpu_time;
        e.3 += 1;
    }
    acc
}

pub fn report(cfg: &RunConfig, input: &Path, dir: &Path, force: bool) -> Result<(), CliError> {
    let data =
        if input.extension().is_some_and(|e| e == "jsonl") { read_runlog(input)? } else { read_campaign(input)? };
    let mut names = vec!["report.txt".to_string(), "trajectories.csv".to_string()];
    names.extend((1..=cfg.scenarios.len()).map(|i| format!("rating_scenario_{i}.csv")));
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let paths = prepare_outputs(dir, &name_refs, force)?;

    let mut text = String::new();
    let file_name = input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let pipelines: std::collections::BTreeSet<&str> = data.records.iter().map(|r| r.pipeline.as_str()).collect();
    let budgets: std::collections::BTreeSet<usize> = data.records.iter().map(|r| r.budget).collect();
    writeln!(text, "input: {file_name}").unwrap();
    for line in &data.run_summary {
        writeln!(text, "{line}").unwrap();
    }
    writeln!(text, "mean rows: {}, pipelines: {}, budgets: {}", data.records.len(), pipelines.len(), budgets.len())
        .unwrap();

    writeln!(text, "\n[rank correlation: ground truth vs simulation]").unwrap();
    let (gt, sim): (Vec<EvaluationRecord>, Vec<EvaluationRecord>) =
        data.records.iter().cloned().partition(|r| r.instance == GROUND_TRUTH_ID);
    if gt.is_empty() || sim.is_empty() {
        writeln!(text, "not available: input lacks {GROUND_TRUTH_ID} or simulated instances").unwrap();
    } else {
        match rank_correlation(&gt, &sim) {
            Ok(c) => {
                writeln!(text, "r = {:.6}", c.r).unwrap();
                writeln!(text, "95% CI = [{:.6}, {:.6}]", c.ci_low, c.ci_high).unwrap();
                writeln!(text, "t = {:.6}", c.t).unwrap();
                writeln!(text, "df = {}", c.df).unwrap();
                writeln!(text, "p = {:.6e}", c.p_value).unwrap();
            }
            Err(e) => writeln!(text, "not available: {e}").unwrap(),
        }
    }

    for (i, w) in cfg.scenarios.iter().enumerate() {
        writeln!(text, "\n[scenario {}: objective {}, memory {}, cpu {}]", i + 1, w.w_objective, w.w_memory, w.w_cpu)
            .unwrap();
        let path = &paths[2 + i];
        match rate_pipelines(&data.records, &cfg.cognition.baseline, w) {
            Ok((table, p_best, _)) => {
                table.write_csv(create(path)?).map_err(|e| CliError::Runtime(e.to_string()))?;
                writeln!(text, "budget: {}", table.budget).unwrap();
                writeln!(text, "baseline: {}", table.baseline).unwrap();
                if table.survivors.is_empty() {
                    writeln!(text, "survivors: none (empty survivor set, no pipeline beats the baseline)").unwrap();
                } else {
                    writeln!(text, "survivors (rank order): {}", table.survivors.join(", ")).unwrap();
                }
                writeln!(
                    text,
                    "eliminated: {}",
                    if table.eliminated.is_empty() { "none".into() } else { table.eliminated.join(", ") }
                )
                .unwrap();
                writeln!(text, "p_best: {}", p_best.as_deref().unwrap_or("none")).unwrap();
            }
            Err(e) => {
                // An empty table keeps the file set stable across inputs.
                std::fs::write(path, "")?;
                writeln!(text, "not available: {e}").unwrap();
            }
        }
    }

    let mut w = csv::Writer::from_writer(create(&paths[1])?);
    let rt = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["pipeline", "budget", "best_y", "memory_bytes", "cpu_time"]).map_err(rt)?;
    for ((p, b), (y, m, c, n)) in trajectories(&data.records) {
        let n = n as f64;
        w.write_record([p, b.to_string(), (y / n).to_string(), (m / n).to_string(), (c / n).to_string()])
            .map_err(rt)?;
    }
    w.flush()?;

    let mut out = create(&paths[0])?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    print!("{text}");
    Ok(())
}
