use super::{
    Aggregation, AlgorithmCharacteristics, AlgorithmClass, AlgorithmEntry, DataKind, Direction, GoalPath,
    KnowledgeBase, OverallGoal, ParameterSpec, ReachAim, PARAMETER_PROPOSAL, RAW_DATA,
};
use crate::optimizers::Algorithm;

fn class_of(a: Algorithm) -> AlgorithmClass {
    match a {
        Algorithm::RandomSearch => AlgorithmClass::Baseline,
        Algorithm::HillClimber => AlgorithmClass::HillClimber,
        Algorithm::GeneralizedSA => AlgorithmClass::Trajectory,
        Algorithm::DifferentialEvolution => AlgorithmClass::Population,
        Algorithm::KrigingSBO => AlgorithmClass::Surrogate,
    }
}

/// Tuning ranges. Unbounded ranges of the parameter table are cut to finite
/// intervals around the defaults so they can be sampled.
fn parameters(a: Algorithm) -> Vec<ParameterSpec> {
    match a {
        Algorithm::RandomSearch => vec![],
        Algorithm::HillClimber => vec![ParameterSpec::integer("lmm", 1, 10, 5)],
        Algorithm::GeneralizedSA => vec![
            ParameterSpec::real("temp", 1.0, 1000.0, 100.0),
            ParameterSpec::real("qv", 1.01, 2.99, 2.5),
            ParameterSpec::real("qa", -5.0, 1.0, -1.0),
        ],
        Algorithm::DifferentialEvolution => vec![
            ParameterSpec::integer("popsize", 4, 20, 5),
            ParameterSpec::integer("strategy", 1, 5, 2),
            ParameterSpec::real("F", 0.0, 2.0, 0.8),
            ParameterSpec::real("CR", 0.0, 1.0, 0.5),
            ParameterSpec::real("c", 0.0, 1.0, 0.5),
        ],
        Algorithm::KrigingSBO => vec![
            ParameterSpec::integer("designSize", 3, 12, 7),
            ParameterSpec::categorical("designType", &["Lhd", "Uniform"], "Lhd"),
        ],
    }
}

fn min_training_data(a: Algorithm) -> u64 {
    match a {
        Algorithm::RandomSearch => 0,
        Algorithm::KrigingSBO => 5,
        _ => 2,
    }
}

/// The starter KB: the five portfolio optimizers under
/// Optimization / minimize / Minimum, all reading raw continuous data.
pub fn template_kb() -> KnowledgeBase {
    let path =
        GoalPath { goal: OverallGoal::Optimization, direction: Direction::Minimize, aggregation: Aggregation::Min };
    let mut kb = KnowledgeBase::new();
    for a in Algorithm::ALL {
        let mut m = AlgorithmCharacteristics::new(class_of(a));
        m.input_data.insert(DataKind::Continuous);
        m.output_data.insert(DataKind::Continuous);
        m.reach_aim.extend([ReachAim::OptimizationMin, ReachAim::OptimizationMax]);
        m.min_training_data = min_training_data(a);
        let entry = AlgorithmEntry {
            parameters: parameters(a),
            metadata: m,
            input: RAW_DATA.into(),
            output: PARAMETER_PROPOSAL.into(),
        };
        kb.insert(path, a.name(), entry).expect("template entries are valid");
    }
    kb
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::ParamValue;

    #[test]
    fn template_defaults_match_optimizer_defaults() {
        let kb = template_kb();
        for a in Algorithm::ALL {
            let e = kb.find(a.name()).unwrap();
            for p in &e.parameters {
                assert_eq!(Some(p.default.clone()), a.default_value(&p.name), "{a} {}", p.name);
            }
            e.default_config(a).validate().unwrap();
            assert!(e.metadata.performance.is_none());
        }
        let k = kb.find("KrigingSBO").unwrap();
        assert_eq!(k.parameters[0].default, ParamValue::Int(7));
    }
}
