//! KB file format: goal / direction / aggregation / "Algorithms" / name /
//! {parameter, metadata, input, output}, with -1 marking unset characteristics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_yaml::{Mapping, Value};

use super::{
    AlgorithmCharacteristics, AlgorithmClass, AlgorithmEntry, DataKind, GoalPath, KnowledgeBase, KnowledgeError,
    ParamKind, ParameterSpec, ReachAim, KB_VERSION,
};
use crate::optimizers::ParamValue;

const VERSION_KEY: &str = "caai_kb_version";
const ALGORITHMS_KEY: &str = "Algorithms";
const UNSET: f64 = -1.0;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn parse_set<T: std::str::FromStr<Err = KnowledgeError> + Ord>(
        v: Option<Self>,
    ) -> Result<BTreeSet<T>, KnowledgeError> {
        let items = match v {
            None => Vec::new(),
            Some(Self::One(s)) => vec![s],
            Some(Self::Many(v)) => v,
        };
        items.iter().map(|s| s.parse()).collect()
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawMetadata {
    #[serde(rename = "Class")]
    class: String,
    #[serde(rename = "Input data", default, skip_serializing)]
    input_data: Option<OneOrMany>,
    #[serde(rename = "Output data", default, skip_serializing)]
    output_data: Option<OneOrMany>,
    #[serde(rename = "Reach aim", default, skip_serializing)]
    reach_aim: Option<OneOrMany>,
    #[serde(rename = "Use multithreads", default)]
    use_multithreads: bool,
    #[serde(rename = "Min training data", alias = "Min Training Data", default)]
    min_training_data: i64,
    #[serde(rename = "Prefer usage", default)]
    prefer_usage: bool,
    #[serde(rename = "Avoid usage", default)]
    avoid_usage: bool,
    #[serde(rename = "Performance", default = "unset")]
    performance: f64,
    #[serde(rename = "Computational Effort", alias = "Computational effort", default = "unset")]
    computational_effort: f64,
    #[serde(rename = "RAM usage", alias = "RAM Usage", default = "unset")]
    ram_usage: f64,
}

fn unset() -> f64 {
    UNSET
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameter {
    #[serde(rename = "type")]
    kind: String,
    default: Value,
    #[serde(default)]
    min: Option<f64>,
    #[serde(default)]
    max: Option<f64>,
    #[serde(default, alias = "categories")]
    values: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    #[serde(default, alias = "parameters")]
    parameter: Option<Mapping>,
    metadata: RawMetadata,
    input: Option<String>,
    #[serde(default)]
    output: Option<String>,
}

fn schema(msg: impl Into<String>) -> KnowledgeError {
    KnowledgeError::Schema(msg.into())
}

fn key_str(k: &Value) -> Result<&str, KnowledgeError> {
    k.as_str().ok_or_else(|| schema(format!("non-string key {k:?}")))
}

fn as_mapping<'v>(v: &'v Value, what: &str) -> Result<&'v Mapping, KnowledgeError> {
    v.as_mapping().ok_or_else(|| schema(format!("{what} must be a mapping")))
}

fn dynamic(v: f64, name: &str) -> Result<Option<f64>, KnowledgeError> {
    if v == UNSET {
        Ok(None)
    } else if (0.0..=1.0).contains(&v) {
        Ok(Some(v))
    } else {
        Err(schema(format!("{name} = {v} is neither -1 nor in [0, 1]")))
    }
}

fn parse_kind(s: &str) -> Result<ParamKind, KnowledgeError> {
    Ok(match super::normalize(s).as_str() {
        "int" | "integer" => ParamKind::Integer,
        "real" | "float" | "double" | "numeric" => ParamKind::Real,
        "categorical" | "factor" | "cat" | "category" => ParamKind::Categorical,
        _ => return Err(schema(format!("unknown parameter type '{s}'"))),
    })
}

fn parse_parameter(name: &str, raw: RawParameter) -> Result<ParameterSpec, KnowledgeError> {
    let kind = parse_kind(&raw.kind)?;
    let default = match (kind, &raw.default) {
        (ParamKind::Categorical, Value::String(s)) => ParamValue::Cat(s.clone()),
        (ParamKind::Integer, Value::Number(n)) => match n.as_i64() {
            Some(i) => ParamValue::Int(i),
            None => return Err(schema(format!("parameter '{name}': integer default expected"))),
        },
        (ParamKind::Real, Value::Number(n)) => ParamValue::Real(n.as_f64().unwrap_or(f64::NAN)),
        (_, other) => return Err(schema(format!("parameter '{name}': default {other:?} does not match its type"))),
    };
    let spec = ParameterSpec {
        name: name.to_string(),
        kind,
        min: raw.min,
        max: raw.max,
        default,
        categories: raw.values.unwrap_or_default(),
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_entry(name: &str, value: &Value, path: &GoalPath) -> Result<AlgorithmEntry, KnowledgeError> {
    let raw: RawEntry =
        serde_yaml::from_value(value.clone()).map_err(|e| schema(format!("algorithm '{name}': {e}")))?;
    let m = raw.metadata;
    let class: AlgorithmClass = m.class.parse()?;
    if m.min_training_data < 0 {
        return Err(schema(format!("algorithm '{name}': Min training data must be >= 0")));
    }
    let mut reach_aim: BTreeSet<ReachAim> = OneOrMany::parse_set(m.reach_aim)?;
    if reach_aim.is_empty() {
        reach_aim.insert(path.aim());
    }
    let metadata = AlgorithmCharacteristics {
        input_data: OneOrMany::parse_set::<DataKind>(m.input_data)?,
        output_data: OneOrMany::parse_set::<DataKind>(m.output_data)?,
        reach_aim,
        algorithm_class: class,
        use_multithreads: m.use_multithreads,
        min_training_data: m.min_training_data as u64,
        prefer_usage: m.prefer_usage,
        avoid_usage: m.avoid_usage,
        performance: dynamic(m.performance, "Performance")?,
        computational_effort: dynamic(m.computational_effort, "Computational Effort")?,
        ram_usage: dynamic(m.ram_usage, "RAM usage")?,
    };
    let input =
        raw.input.filter(|s| !s.trim().is_empty()).ok_or_else(|| schema(format!("algorithm '{name}' has no input")))?;
    let mut parameters = Vec::new();
    for (k, v) in raw.parameter.unwrap_or_default() {
        let pname = key_str(&k)?;
        let rp: RawParameter =
            serde_yaml::from_value(v).map_err(|e| schema(format!("parameter '{pname}' of '{name}': {e}")))?;
        parameters.push(parse_parameter(pname, rp)?);
    }
    let entry = AlgorithmEntry {
        parameters,
        output: raw.output.unwrap_or_else(|| AlgorithmEntry::default_output(class).to_string()),
        metadata,
        input,
    };
    entry.validate()?;
    Ok(entry)
}

impl KnowledgeBase {
    pub fn from_yaml_str(text: &str) -> Result<Self, KnowledgeError> {
        let doc: Value = serde_yaml::from_str(text).map_err(|e| KnowledgeError::Parse(e.to_string()))?;
        let root = as_mapping(&doc, "document root")?;
        let mut kb = KnowledgeBase::new();
        for (k, v) in root {
            let key = key_str(k)?;
            if key == VERSION_KEY {
                if v.as_u64() != Some(KB_VERSION) {
                    return Err(schema(format!("unsupported {VERSION_KEY} {v:?}")));
                }
                continue;
            }
            let goal = key.parse()?;
            for (dk, dv) in as_mapping(v, key)? {
                let direction = key_str(dk)?.parse()?;
                for (ak, av) in as_mapping(dv, key_str(dk)?)? {
                    let aggregation = key_str(ak)?.parse()?;
                    let path = GoalPath { goal, direction, aggregation };
                    let level = as_mapping(av, key_str(ak)?)?;
                    if level.len() != 1 || !level.contains_key(ALGORITHMS_KEY) {
                        return Err(schema(format!("{path} must hold exactly one '{ALGORITHMS_KEY}' key")));
                    }
                    let algs = as_mapping(&level[ALGORITHMS_KEY], ALGORITHMS_KEY)?;
                    let bucket = kb.goals.entry(path).or_default();
                    for (nk, nv) in algs {
                        let name = key_str(nk)?;
                        let entry = parse_entry(name, nv, &path)?;
                        bucket.insert(name.to_string(), entry);
                    }
                }
            }
        }
        Ok(kb)
    }

    pub fn to_yaml_string(&self) -> Result<String, KnowledgeError> {
        let mut root = Mapping::new();
        root.insert(VERSION_KEY.into(), KB_VERSION.into());
        for (path, entries) in &self.goals {
            let mut algs = Mapping::new();
            for (name, e) in entries {
                algs.insert(name.as_str().into(), entry_value(e)?);
            }
            let mut level = Mapping::new();
            level.insert(ALGORITHMS_KEY.into(), Value::Mapping(algs));
            let goal = root.entry(path.goal.as_str().into()).or_insert_with(|| Value::Mapping(Mapping::new()));
            let dir = goal
                .as_mapping_mut()
                .expect("goal level is a mapping")
                .entry(path.direction.as_str().into())
                .or_insert_with(|| Value::Mapping(Mapping::new()));
            dir.as_mapping_mut()
                .expect("direction level is a mapping")
                .insert(path.aggregation.as_str().into(), Value::Mapping(level));
        }
        serde_yaml::to_string(&Value::Mapping(root)).map_err(|e| KnowledgeError::Parse(e.to_string()))
    }
}

fn set_value<T: Copy + Into<String>>(set: &BTreeSet<T>) -> Value {
    Value::Sequence(set.iter().map(|&v| Value::String(v.into())).collect())
}

fn entry_value(e: &AlgorithmEntry) -> Result<Value, KnowledgeError> {
    let mut params = Mapping::new();
    for p in &e.parameters {
        let mut m = Mapping::new();
        let kind = match p.kind {
            ParamKind::Integer => "int",
            ParamKind::Real => "real",
            ParamKind::Categorical => "categorical",
        };
        m.insert("type".into(), kind.into());
        m.insert(
            "default".into(),
            match &p.default {
                ParamValue::Int(v) => (*v).into(),
                ParamValue::Real(v) => (*v).into(),
                ParamValue::Cat(v) => v.as_str().into(),
            },
        );
        if let Some(lo) = p.min {
            m.insert("min".into(), number(lo, p.kind));
        }
        if let Some(hi) = p.max {
            m.insert("max".into(), number(hi, p.kind));
        }
        if p.kind == ParamKind::Categorical {
            m.insert("values".into(), Value::Sequence(p.categories.iter().map(|c| c.as_str().into()).collect()));
        }
        params.insert(p.name.as_str().into(), Value::Mapping(m));
    }

    let md = &e.metadata;
    let raw = RawMetadata {
        class: md.algorithm_class.as_str().into(),
        input_data: None,
        output_data: None,
        reach_aim: None,
        use_multithreads: md.use_multithreads,
        min_training_data: md.min_training_data as i64,
        prefer_usage: md.prefer_usage,
        avoid_usage: md.avoid_usage,
        performance: md.performance.unwrap_or(UNSET),
        computational_effort: md.computational_effort.unwrap_or(UNSET),
        ram_usage: md.ram_usage.unwrap_or(UNSET),
    };
    let mut meta = match serde_yaml::to_value(&raw).map_err(|e| KnowledgeError::Parse(e.to_string()))? {
        Value::Mapping(m) => m,
        _ => unreachable!("struct serializes to a mapping"),
    };
    meta.insert("Input data".into(), set_value(&md.input_data));
    meta.insert("Output data".into(), set_value(&md.output_data));
    meta.insert("Reach aim".into(), set_value(&md.reach_aim));

    let mut out = Mapping::new();
    if !params.is_empty() {
        out.insert("parameter".into(), Value::Mapping(params));
    }
    out.insert("metadata".into(), Value::Mapping(meta));
    out.insert("input".into(), e.input.as_str().into());
    out.insert("output".into(), e.output.as_str().into());
    Ok(Value::Mapping(out))
}

fn number(v: f64, kind: ParamKind) -> Value {
    if kind == ParamKind::Integer {
        (v as i64).into()
    } else {
        v.into()
    }
}
