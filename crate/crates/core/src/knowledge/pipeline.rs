use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{normalize, AlgorithmEntry, GoalSpec, KnowledgeBase, KnowledgeError, PARAMETER_PROPOSAL, RAW_DATA};
use crate::benchmark::EvaluationRecord;

/// An ordered chain of KB entries. `stages[0]` consumes raw data; the last
/// stage produces the parameter proposal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PipelineTemplate {
    pub stages: Vec<String>,
    pub terminal_input: String,
}

impl PipelineTemplate {
    pub fn single(stage: &str) -> Self {
        Self { stages: vec![stage.to_string()], terminal_input: RAW_DATA.to_string() }
    }

    pub fn id(&self) -> String {
        self.stages.join(" > ")
    }

    /// The optimizing stage.
    pub fn terminal_algorithm(&self) -> &str {
        self.stages.last().map(String::as_str).unwrap_or_default()
    }
}

impl fmt::Display for PipelineTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResourceBudget {
    pub max_parallel_pipelines: usize,
    /// Seconds of CPU time a pipeline may use per benchmark run.
    pub deadline: f64,
    pub memory_cap: u64,
}

impl Default for ResourceBudget {
    fn default() -> Self {
        Self { max_parallel_pipelines: 5, deadline: 60.0, memory_cap: 256 * 1024 * 1024 }
    }
}

fn same_designation(a: &str, b: &str) -> bool {
    normalize(a) == normalize(b)
}

/// Every chain of entries that ends in a parameter proposal and starts from
/// raw data. Entries are matched by their `input`/`output` strings.
pub fn compose_pipelines(kb: &KnowledgeBase, goal: &GoalSpec) -> Result<Vec<PipelineTemplate>, KnowledgeError> {
    let entries = kb.algorithms(&goal.path())?;
    let mut out = Vec::new();
    for (name, entry) in entries {
        if same_designation(&entry.output, PARAMETER_PROPOSAL) {
            let mut chain = vec![name.clone()];
            extend_upstream(entries, entry, &mut chain, &mut out);
        }
    }
    out.sort();
    Ok(out)
}

fn extend_upstream(
    entries: &std::collections::BTreeMap<String, AlgorithmEntry>,
    consumer: &AlgorithmEntry,
    chain: &mut Vec<String>,
    out: &mut Vec<PipelineTemplate>,
) {
    if same_designation(&consumer.input, RAW_DATA) {
        let stages: Vec<String> = chain.iter().rev().cloned().collect();
        out.push(PipelineTemplate { stages, terminal_input: RAW_DATA.to_string() });
        return;
    }
    for (name, producer) in entries {
        if chain.contains(name) || !same_designation(&producer.output, &consumer.input) {
            continue;
        }
        chain.push(name.clone());
        extend_upstream(entries, producer, chain, out);
        chain.pop();
    }
}

fn stages_feasible(kb: &KnowledgeBase, p: &PipelineTemplate, goal: &GoalSpec, data_size: usize) -> bool {
    let path = goal.path();
    let aim = path.aim();
    let Some(entries) = p.stages.iter().map(|s| kb.entry(&path, s)).collect::<Option<Vec<_>>>() else {
        return false;
    };
    if entries.is_empty() || !same_designation(&entries[0].input, RAW_DATA) {
        return false;
    }
    let hard =
        entries.iter().all(|e| e.metadata.reach_aim.contains(&aim) && data_size as u64 >= e.metadata.min_training_data);
    let chained = entries.windows(2).all(|w| {
        let (producer, consumer) = (&w[0], &w[1]);
        let kinds_match = producer.metadata.output_data.is_empty()
            || consumer.metadata.input_data.is_empty()
            || !producer.metadata.output_data.is_disjoint(&consumer.metadata.input_data);
        same_designation(&producer.output, &consumer.input) && kinds_match
    });
    hard && chained
}

/// Applies the hard criteria: aim coverage, data-type chaining and minimum
/// training data.
pub fn determine_feasible(
    pipelines: &[PipelineTemplate],
    kb: &KnowledgeBase,
    goal: &GoalSpec,
    data_size: usize,
) -> Vec<PipelineTemplate> {
    pipelines.iter().filter(|p| stages_feasible(kb, p, goal, data_size)).cloned().collect()
}

/// Drops avoided pipelines and those whose latest record broke the resource
/// budget, orders preferred ones first and then by recorded effort (unknown
/// effort first), and truncates to the parallelism limit.
pub fn select_candidates(
    feasible: &[PipelineTemplate],
    kb: &KnowledgeBase,
    goal: &GoalSpec,
    resources: &ResourceBudget,
    history: &[EvaluationRecord],
) -> Vec<PipelineTemplate> {
    let path = goal.path();
    let entries = |p: &PipelineTemplate| p.stages.iter().filter_map(|s| kb.entry(&path, s)).collect::<Vec<_>>();
    let mut kept: Vec<(bool, f64, &PipelineTemplate)> = Vec::new();
    let mut seen = BTreeSet::new();
    for p in feasible {
        if !seen.insert(p.id()) {
            continue;
        }
        let es = entries(p);
        if es.iter().any(|e| e.metadata.avoid_usage) {
            continue;
        }
        let id = p.id();
        if let Some(last) = history.iter().rev().find(|r| r.pipeline == id) {
            if last.cpu_time > resources.deadline || last.memory_bytes > resources.memory_cap {
                continue;
            }
        }
        let prefer = es.iter().any(|e| e.metadata.prefer_usage);
        let effort =
            kb.entry(&path, p.terminal_algorithm()).and_then(|e| e.metadata.computational_effort).unwrap_or(-1.0);
        kept.push((prefer, effort, p));
    }
    kept.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)));
    kept.into_iter().take(resources.max_parallel_pipelines).map(|(_, _, p)| p.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{
        template_kb, Aggregation, AlgorithmCharacteristics, AlgorithmClass, Direction, OverallGoal, ReachAim,
        PREPROCESSED_DATA,
    };

    fn goal() -> GoalSpec {
        GoalSpec {
            overall_goal: OverallGoal::Optimization,
            signals: vec!["aggregate".into()],
            aggregation: Aggregation::Min,
            direction: Direction::Minimize,
        }
    }

    fn entry(class: AlgorithmClass, input: &str, min_data: u64) -> AlgorithmEntry {
        let mut m = AlgorithmCharacteristics::new(class);
        m.reach_aim.insert(ReachAim::OptimizationMin);
        m.min_training_data = min_data;
        AlgorithmEntry {
            parameters: vec![],
            metadata: m,
            input: input.into(),
            output: AlgorithmEntry::default_output(class).into(),
        }
    }

    fn kb_with(entries: &[(&str, AlgorithmEntry)]) -> KnowledgeBase {
        let mut kb = KnowledgeBase::new();
        for (n, e) in entries {
            kb.insert(goal().path(), n, e.clone()).unwrap();
        }
        kb
    }

    #[test]
    fn chains_preprocessor_and_optimizer() {
        let kb = kb_with(&[
            ("Opt", entry(AlgorithmClass::Surrogate, PREPROCESSED_DATA, 0)),
            ("Prep", entry(AlgorithmClass::Preprocessor, RAW_DATA, 0)),
        ]);
        let ps = compose_pipelines(&kb, &goal()).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].stages, vec!["Prep".to_string(), "Opt".to_string()]);
        assert_eq!(ps[0].id(), "Prep > Opt");
        assert_eq!(ps[0].terminal_input, RAW_DATA);
    }

    #[test]
    fn no_raw_consumer_gives_nothing() {
        let kb = kb_with(&[("Opt", entry(AlgorithmClass::Surrogate, PREPROCESSED_DATA, 0))]);
        assert!(compose_pipelines(&kb, &goal()).unwrap().is_empty());
    }

    #[test]
    fn cartesian_composition() {
        let kb = kb_with(&[
            ("A", entry(AlgorithmClass::Surrogate, PREPROCESSED_DATA, 0)),
            ("B", entry(AlgorithmClass::Population, PREPROCESSED_DATA, 0)),
            ("Prep", entry(AlgorithmClass::Preprocessor, RAW_DATA, 0)),
        ]);
        assert_eq!(compose_pipelines(&kb, &goal()).unwrap().len(), 2);
    }

    #[test]
    fn unknown_goal_is_an_error() {
        let mut g = goal();
        g.direction = Direction::Maximize;
        assert!(matches!(compose_pipelines(&template_kb(), &g), Err(KnowledgeError::UnknownGoal(_))));
    }

    #[test]
    fn training_data_threshold() {
        let kb = kb_with(&[("Kriging", entry(AlgorithmClass::Surrogate, RAW_DATA, 5))]);
        let ps = compose_pipelines(&kb, &goal()).unwrap();
        assert!(determine_feasible(&ps, &kb, &goal(), 3).is_empty());
        assert_eq!(determine_feasible(&ps, &kb, &goal(), 7).len(), 1);
    }

    #[test]
    fn aim_mismatch_is_infeasible() {
        let mut e = entry(AlgorithmClass::Surrogate, RAW_DATA, 0);
        e.metadata.reach_aim = [ReachAim::AnomalyDetection].into_iter().collect();
        let kb = kb_with(&[("Detector", e)]);
        let ps = compose_pipelines(&kb, &goal()).unwrap();
        assert!(determine_feasible(&ps, &kb, &goal(), 100).is_empty());
    }

    fn record(pipeline: &str, cpu: f64) -> EvaluationRecord {
        EvaluationRecord {
            pipeline: pipeline.into(),
            instance: "i".into(),
            budget: 6,
            best_y: 0.0,
            cpu_time: cpu,
            memory_bytes: 10,
            rank: None,
            tuned_params: Default::default(),
        }
    }

    #[test]
    fn candidate_rules() {
        let kb = template_kb();
        let feasible = determine_feasible(&compose_pipelines(&kb, &goal()).unwrap(), &kb, &goal(), 36);
        assert_eq!(feasible.len(), 5);
        let two = ResourceBudget { max_parallel_pipelines: 2, ..Default::default() };
        assert_eq!(select_candidates(&feasible, &kb, &goal(), &two, &[]).len(), 2);

        let tight = ResourceBudget { deadline: 20.0, ..Default::default() };
        let history = vec![record("KrigingSBO", 30.0), record("HillClimber", 1.0)];
        let picked = select_candidates(&feasible, &kb, &goal(), &tight, &history);
        assert!(picked.iter().all(|p| p.id() != "KrigingSBO"));
        assert_eq!(picked.len(), 4);

        let mut avoid = kb.clone();
        let path = goal().path();
        let mut e = avoid.entry(&path, "GeneralizedSA").unwrap().clone();
        e.metadata.avoid_usage = true;
        avoid.insert(path, "GeneralizedSA", e).unwrap();
        let picked = select_candidates(&feasible, &avoid, &goal(), &ResourceBudget::default(), &[]);
        assert!(picked.iter().all(|p| p.id() != "GeneralizedSA"));
    }

    #[test]
    fn preferred_then_cheapest() {
        let kb = template_kb()
            .update_characteristics("DifferentialEvolution", 0.5, 0.9, 0.5)
            .unwrap()
            .update_characteristics("HillClimber", 0.5, 0.1, 0.5)
            .unwrap();
        let path = goal().path();
        let mut kb = kb;
        let mut e = kb.entry(&path, "KrigingSBO").unwrap().clone();
        e.metadata.prefer_usage = true;
        e.metadata.computational_effort = Some(1.0);
        kb.insert(path, "KrigingSBO", e).unwrap();
        let feasible = compose_pipelines(&kb, &goal()).unwrap();
        let ids: Vec<String> = select_candidates(&feasible, &kb, &goal(), &ResourceBudget::default(), &[])
            .iter()
            .map(|p| p.id())
            .collect();
        assert_eq!(ids[0], "KrigingSBO");
        // Unrated entries keep their order ahead of rated ones.
        let pos = |n: &str| ids.iter().position(|i| i == n).unwrap();
        assert!(pos("GeneralizedSA") < pos("HillClimber"));
        assert!(pos("HillClimber") < pos("DifferentialEvolution"));
    }
}
