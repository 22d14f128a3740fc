//! Declarative goals, algorithm characteristics and the knowledge base.

mod pipeline;
mod template;
mod yaml;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizers::{Algorithm, OptimizerConfig, ParamValue};

pub use pipeline::{compose_pipelines, determine_feasible, select_candidates, PipelineTemplate, ResourceBudget};
pub use template::template_kb;

/// Input designation that terminates a pipeline.
pub const RAW_DATA: &str = "raw data";
/// Default output of optimizer entries.
pub const PARAMETER_PROPOSAL: &str = "parameter proposal";
/// Default output of preprocessing entries.
pub const PREPROCESSED_DATA: &str = "preprocessed data";
pub const KB_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("malformed knowledge base document: {0}")]
    Parse(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("goal path {0} is not present in the knowledge base")]
    UnknownGoal(String),
    #[error("algorithm '{0}' is not present in the knowledge base")]
    UnknownAlgorithm(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lower-case alphanumerics only, so "Hill-climber", "hill_climber" and
/// "HillClimber" compare equal.
pub(crate) fn normalize(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $canon:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $canon),+ }
            }
        }

        impl FromStr for $name {
            type Err = KnowledgeError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let key = normalize(s);
                $(
                    if key == normalize($canon) $(|| key == normalize($alias))* {
                        return Ok($name::$variant);
                    }
                )+
                Err(KnowledgeError::Schema(format!("unknown {} '{}'", stringify!($name), s)))
            }
        }

        impl TryFrom<String> for $name {
            type Error = KnowledgeError;

            fn try_from(s: String) -> Result<Self, Self::Error> {
                s.parse()
            }
        }

        impl From<$name> for String {
            fn from(v: $name) -> String {
                v.as_str().to_string()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(OverallGoal {
    Optimization => "Optimization",
    AnomalyDetection => "AnomalyDetection",
    ConditionMonitoring => "ConditionMonitoring" | "CM",
    PredictiveMaintenance => "PredictiveMaintenance",
});

keyword_enum!(Aggregation {
    Mean => "Mean" | "average",
    Delta => "Delta",
    Min => "Minimum" | "min",
    Max => "Maximum" | "max",
    Value => "Value",
});

keyword_enum!(Direction {
    Minimize => "minimize" | "min",
    Maximize => "maximize" | "max",
});

keyword_enum!(DataKind {
    Continuous => "continuous",
    Discrete => "discrete",
    Hybrid => "hybrid",
    TimedAutomata => "timed-automata" | "timed automaton",
    NeuralNet => "neural-net" | "neuronal net" | "neural network",
    Preprocessed => "preprocessed" | "preprocessed data",
    Raw => "raw" | "raw data",
});

keyword_enum!(ReachAim {
    OptimizationMin => "optimization-min" | "minimization",
    OptimizationMax => "optimization-max" | "maximization",
    ConditionMonitoring => "condition-monitoring" | "CM",
    AnomalyDetection => "anomaly-detection",
    Diagnosis => "diagnosis",
});

keyword_enum!(AlgorithmClass {
    HillClimber => "HillClimber",
    Trajectory => "Trajectory",
    Population => "Population",
    Surrogate => "Surrogate" | "Surrogates",
    Baseline => "Baseline",
    Preprocessor => "Preprocessor" | "Preprocessing",
});

/// The four-stage declarative goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub overall_goal: OverallGoal,
    pub signals: Vec<String>,
    pub aggregation: Aggregation,
    pub direction: Direction,
}

impl GoalSpec {
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        if self.signals.is_empty() || self.signals.iter().any(|s| s.trim().is_empty()) {
            return Err(KnowledgeError::Schema("goal needs at least one named signal".into()));
        }
        Ok(())
    }

    /// Only optimization goals can be executed.
    pub fn is_executable(&self) -> bool {
        self.overall_goal == OverallGoal::Optimization
    }

    pub fn path(&self) -> GoalPath {
        GoalPath { goal: self.overall_goal, direction: self.direction, aggregation: self.aggregation }
    }
}

/// Position of an algorithm list in the KB hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GoalPath {
    pub goal: OverallGoal,
    pub direction: Direction,
    pub aggregation: Aggregation,
}

impl GoalPath {
    /// The aim an entry must list to serve this goal.
    pub fn aim(&self) -> ReachAim {
        match (self.goal, self.direction) {
            (OverallGoal::Optimization, Direction::Minimize) => ReachAim::OptimizationMin,
            (OverallGoal::Optimization, Direction::Maximize) => ReachAim::OptimizationMax,
            (OverallGoal::AnomalyDetection, _) => ReachAim::AnomalyDetection,
            (OverallGoal::ConditionMonitoring, _) => ReachAim::ConditionMonitoring,
            (OverallGoal::PredictiveMaintenance, _) => ReachAim::Diagnosis,
        }
    }
}

impl fmt::Display for GoalPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.goal, self.direction, self.aggregation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Integer,
    Real,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParamKind,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub default: ParamValue,
    pub categories: Vec<String>,
}

impl ParameterSpec {
    pub fn integer(name: &str, min: i64, max: i64, default: i64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Integer,
            min: Some(min as f64),
            max: Some(max as f64),
            default: ParamValue::Int(default),
            categories: Vec::new(),
        }
    }

    pub fn real(name: &str, min: f64, max: f64, default: f64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Real,
            min: Some(min),
            max: Some(max),
            default: ParamValue::Real(default),
            categories: Vec::new(),
        }
    }

    pub fn categorical(name: &str, categories: &[&str], default: &str) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Categorical,
            min: None,
            max: None,
            default: ParamValue::Cat(default.into()),
            categories: categories.iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let err = |m: String| Err(KnowledgeError::Schema(format!("parameter '{}': {m}", self.name)));
        match self.kind {
            ParamKind::Categorical => {
                if self.categories.is_empty() {
                    return err("categorical parameter without categories".into());
                }
                match &self.default {
                    ParamValue::Cat(c) if self.categories.contains(c) => Ok(()),
                    other => err(format!("default {other} is not one of {:?}", self.categories)),
                }
            }
            ParamKind::Integer | ParamKind::Real => {
                let (Some(lo), Some(hi)) = (self.min, self.max) else {
                    return err("numeric parameter needs min and max".into());
                };
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return err(format!("min {lo} exceeds max {hi}"));
                }
                let Some(d) = self.default.as_f64() else {
                    return err(format!("default {} is not numeric", self.default));
                };
                if d < lo || d > hi {
                    return err(format!("default {d} outside [{lo}, {hi}]"));
                }
                if self.kind == ParamKind::Integer && (d.fract() != 0.0 || lo.fract() != 0.0 || hi.fract() != 0.0) {
                    return err("integer parameter with fractional bounds or default".into());
                }
                Ok(())
            }
        }
    }

    /// Uniform draw from the parameter range.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match self.kind {
            ParamKind::Categorical => {
                ParamValue::Cat(self.categories[rng.random_range(0..self.categories.len())].clone())
            }
            ParamKind::Integer => {
                let (lo, hi) = (self.min.unwrap_or(0.0) as i64, self.max.unwrap_or(0.0) as i64);
                ParamValue::Int(rng.random_range(lo..=hi))
            }
            ParamKind::Real => {
                let (lo, hi) = (self.min.unwrap_or(0.0), self.max.unwrap_or(0.0));
                ParamValue::Real(lo + (hi - lo) * rng.random::<f64>())
            }
        }
    }
}

/// Properties of an algorithm. The three dynamic fields are `None` until the
/// cognition loop rates the algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmCharacteristics {
    pub input_data: BTreeSet<DataKind>,
    pub output_data: BTreeSet<DataKind>,
    pub reach_aim: BTreeSet<ReachAim>,
    pub algorithm_class: AlgorithmClass,
    pub use_multithreads: bool,
    pub min_training_data: u64,
    pub prefer_usage: bool,
    pub avoid_usage: bool,
    pub performance: Option<f64>,
    pub computational_effort: Option<f64>,
    pub ram_usage: Option<f64>,
}

impl AlgorithmCharacteristics {
    pub fn new(class: AlgorithmClass) -> Self {
        Self {
            input_data: BTreeSet::new(),
            output_data: BTreeSet::new(),
            reach_aim: BTreeSet::new(),
            algorithm_class: class,
            use_multithreads: false,
            min_training_data: 0,
            prefer_usage: false,
            avoid_usage: false,
            performance: None,
            computational_effort: None,
            ram_usage: None,
        }
    }

    pub fn validate(&self) -> Result<(), KnowledgeError> {
        for (name, v) in [
            ("Performance", self.performance),
            ("Computational Effort", self.computational_effort),
            ("RAM usage", self.ram_usage),
        ] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(KnowledgeError::Range(format!("{name} = {v} is neither -1 nor in [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmEntry {
    pub parameters: Vec<ParameterSpec>,
    pub metadata: AlgorithmCharacteristics,
    pub input: String,
    pub output: String,
}

impl AlgorithmEntry {
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        if self.input.trim().is_empty() {
            return Err(KnowledgeError::Schema("entry without input".into()));
        }
        let mut names = BTreeSet::new();
        for p in &self.parameters {
            p.validate()?;
            if !names.insert(p.name.as_str()) {
                return Err(KnowledgeError::Schema(format!("duplicate parameter '{}'", p.name)));
            }
        }
        self.metadata.validate()
    }

    pub fn default_output(class: AlgorithmClass) -> &'static str {
        if class == AlgorithmClass::Preprocessor {
            PREPROCESSED_DATA
        } else {
            PARAMETER_PROPOSAL
        }
    }

    /// Optimizer configuration with every parameter at its KB default.
    pub fn default_config(&self, algorithm: Algorithm) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::new(algorithm);
        for p in &self.parameters {
            cfg.params.insert(p.name.clone(), p.default.clone());
        }
        cfg
    }
}

/// The algorithm registry, keyed by goal path and algorithm name. Updates
/// return a new value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeBase {
    goals: BTreeMap<GoalPath, BTreeMap<String, AlgorithmEntry>>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: GoalPath, name: &str, entry: AlgorithmEntry) -> Result<(), KnowledgeError> {
        entry.validate()?;
        self.goals.entry(path).or_default().insert(name.to_string(), entry);
        Ok(())
    }

    pub fn goal_paths(&self) -> impl Iterator<Item = &GoalPath> {
        self.goals.keys()
    }

    pub fn algorithms(&self, path: &GoalPath) -> Result<&BTreeMap<String, AlgorithmEntry>, KnowledgeError> {
        self.goals.get(path).ok_or_else(|| KnowledgeError::UnknownGoal(path.to_string()))
    }

    pub fn entry(&self, path: &GoalPath, name: &str) -> Option<&AlgorithmEntry> {
        self.goals.get(path)?.get(name)
    }

    /// The entry for `name` under the first goal path that has one.
    pub fn find(&self, name: &str) -> Option<&AlgorithmEntry> {
        self.goals.values().find_map(|m| m.get(name))
    }

    /// Replaces the dynamic characteristics of `algorithm` wherever it occurs.
    pub fn update_characteristics(
        &self,
        algorithm: &str,
        performance: f64,
        effort: f64,
        ram: f64,
    ) -> Result<Self, KnowledgeError> {
        for (name, v) in [("performance", performance), ("effort", effort), ("ram", ram)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(KnowledgeError::Range(format!("{name} = {v} outside [0, 1]")));
            }
        }
        let mut next = self.clone();
        let mut found = false;
        for entries in next.goals.values_mut() {
            if let Some(e) = entries.get_mut(algorithm) {
                e.metadata.performance = Some(performance);
                e.metadata.computational_effort = Some(effort);
                e.metadata.ram_usage = Some(ram);
                found = true;
            }
        }
        if found {
            Ok(next)
        } else {
            Err(KnowledgeError::UnknownAlgorithm(algorithm.into()))
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, KnowledgeError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_yaml_str(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), KnowledgeError> {
        std::fs::write(path, self.to_yaml_string()?)?;
        Ok(())
    }
}

/// Reads and validates a KB file.
pub fn load_kb(path: &std::path::Path) -> Result<KnowledgeBase, KnowledgeError> {
    KnowledgeBase::load(path)
}

pub fn save_kb(kb: &KnowledgeBase, path: &std::path::Path) -> Result<(), KnowledgeError> {
    kb.save(path)
}
