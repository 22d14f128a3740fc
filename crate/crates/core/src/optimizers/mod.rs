//! The optimizer portfolio: five bounded black-box minimizers behind one
//! configuration type, all budget-limited and deterministic under a seed.

mod de;
pub mod design;
mod gensa;
mod hill_climber;
mod kriging;
mod problem;
mod random_search;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use de::{differential_evolution, DeParams, Strategy};
pub use design::DesignKind;
pub use gensa::{acceptance_probability, generalized_sa, GenSaParams};
pub use hill_climber::hill_climber;
pub use kriging::{expected_improvement, kriging_sbo, KrigingParams};
pub use problem::{thread_cpu_seconds, Objective, OptProblem, OptResult, SECONDS_PER_WORK_UNIT};
pub use random_search::random_search;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptError {
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error("evaluation requested outside bounds at {0:?}")]
    OutOfBounds(Vec<f64>),
    #[error("evaluation budget exhausted")]
    BudgetExhausted,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    RandomSearch,
    HillClimber,
    GeneralizedSA,
    DifferentialEvolution,
    KrigingSBO,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::RandomSearch,
        Algorithm::HillClimber,
        Algorithm::GeneralizedSA,
        Algorithm::DifferentialEvolution,
        Algorithm::KrigingSBO,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::RandomSearch => "RandomSearch",
            Self::HillClimber => "HillClimber",
            Self::GeneralizedSA => "GeneralizedSA",
            Self::DifferentialEvolution => "DifferentialEvolution",
            Self::KrigingSBO => "KrigingSBO",
        }
    }

    /// Parameter names accepted by this algorithm.
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            Self::RandomSearch => &[],
            Self::HillClimber => &["lmm"],
            Self::GeneralizedSA => &["temp", "qv", "qa"],
            Self::DifferentialEvolution => &["popsize", "strategy", "F", "CR", "c"],
            Self::KrigingSBO => &["designSize", "designType"],
        }
    }

    pub fn default_value(self, name: &str) -> Option<ParamValue> {
        if !self.parameter_names().contains(&name) {
            return None;
        }
        Some(match name {
            "lmm" => ParamValue::Int(5),
            "temp" => ParamValue::Real(100.0),
            "qv" => ParamValue::Real(2.5),
            "qa" => ParamValue::Real(-1.0),
            "popsize" => ParamValue::Int(5),
            "strategy" => ParamValue::Int(2),
            "F" => ParamValue::Real(0.8),
            "CR" => ParamValue::Real(0.5),
            "c" => ParamValue::Real(0.5),
            "designSize" => ParamValue::Int(7),
            "designType" => ParamValue::Cat("Lhd".into()),
            _ => unreachable!("every listed parameter has a default"),
        })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn normalize_name(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect()
}

impl FromStr for Algorithm {
    type Err = OptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match normalize_name(s).as_str() {
            "randomsearch" | "random" | "uniformrandomsampling" | "baseline" => Self::RandomSearch,
            "hillclimber" | "lbfgsb" | "lbfgs" => Self::HillClimber,
            "generalizedsa" | "gensa" | "generalizedsimulatedannealing" => Self::GeneralizedSA,
            "differentialevolution" | "de" | "deoptim" => Self::DifferentialEvolution,
            "krigingsbo" | "kriging" | "krigingspot" | "spotkriging" => Self::KrigingSBO,
            _ => return Err(OptError::Config(format!("unknown algorithm '{s}'"))),
        })
    }
}

/// A parameter value as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Int(v) => Some(*v as f64),
            Self::Real(v) => Some(*v),
            Self::Cat(_) => None,
        }
    }

    fn as_int(&self, name: &str) -> Result<i64, OptError> {
        match self {
            Self::Int(v) => Ok(*v),
            Self::Real(v) if v.fract() == 0.0 && v.is_finite() => Ok(*v as i64),
            other => Err(OptError::Config(format!("{name} must be an integer, got {other}"))),
        }
    }

    fn as_real(&self, name: &str) -> Result<f64, OptError> {
        self.as_f64().ok_or_else(|| OptError::Config(format!("{name} must be numeric, got {self}")))
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Int(v) => write!(f, "{v}"),
            Self::Real(v) => write!(f, "{v}"),
            Self::Cat(v) => f.write_str(v),
        }
    }
}

/// Algorithm plus parameter values; unspecified parameters take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self { algorithm, params: BTreeMap::new() }
    }

    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    /// Every parameter of the algorithm, explicit values overriding defaults.
    pub fn resolved(&self) -> BTreeMap<String, ParamValue> {
        self.algorithm
            .parameter_names()
            .iter()
            .map(|&n| {
                let v = self.params.get(n).cloned().or_else(|| self.algorithm.default_value(n));
                (n.to_string(), v.expect("defaults cover every parameter"))
            })
            .collect()
    }

    fn get(&self, name: &str) -> ParamValue {
        self.params
            .get(name)
            .cloned()
            .or_else(|| self.algorithm.default_value(name))
            .expect("parameter belongs to the algorithm")
    }

    pub fn validate(&self) -> Result<(), OptError> {
        self.build().map(|_| ())
    }

    fn build(&self) -> Result<Prepared, OptError> {
        for name in self.params.keys() {
            if !self.algorithm.parameter_names().contains(&name.as_str()) {
                return Err(OptError::Config(format!("{} has no parameter '{name}'", self.algorithm)));
            }
        }
        Ok(match self.algorithm {
            Algorithm::RandomSearch => Prepared::Random,
            Algorithm::HillClimber => {
                let lmm = self.get("lmm").as_int("lmm")?;
                if lmm < 1 {
                    return Err(OptError::Config(format!("lmm must be at least 1, got {lmm}")));
                }
                Prepared::Hill(lmm as usize)
            }
            Algorithm::GeneralizedSA => {
                let p = GenSaParams {
                    temp: self.get("temp").as_real("temp")?,
                    qv: self.get("qv").as_real("qv")?,
                    qa: self.get("qa").as_real("qa")?,
                };
                p.validate()?;
                Prepared::Sa(p)
            }
            Algorithm::DifferentialEvolution => {
                let popsize = self.get("popsize").as_int("popsize")?;
                if popsize < 4 {
                    return Err(OptError::Config(format!("popsize must be at least 4, got {popsize}")));
                }
                let p = DeParams {
                    popsize: popsize as usize,
                    strategy: Strategy::from_code(self.get("strategy").as_int("strategy")?)?,
                    f: self.get("F").as_real("F")?,
                    cr: self.get("CR").as_real("CR")?,
                    c: self.get("c").as_real("c")?,
                };
                p.validate()?;
                Prepared::De(p)
            }
            Algorithm::KrigingSBO => {
                let size = self.get("designSize").as_int("designSize")?;
                if size < 3 {
                    return Err(OptError::Config(format!("designSize must be at least 3, got {size}")));
                }
                let design = match self.get("designType") {
                    ParamValue::Cat(s) => match normalize_name(&s).as_str() {
                        "lhd" | "lhs" => DesignKind::Lhs,
                        "uniform" => DesignKind::Uniform,
                        _ => return Err(OptError::Config(format!("designType must be Lhd or Uniform, got {s}"))),
                    },
                    other => return Err(OptError::Config(format!("designType must be Lhd or Uniform, got {other}"))),
                };
                Prepared::Kriging(KrigingParams { design_size: size as usize, design })
            }
        })
    }
}

enum Prepared {
    Random,
    Hill(usize),
    Sa(GenSaParams),
    De(DeParams),
    Kriging(KrigingParams),
}

/// Runs the configured optimizer on `problem`.
pub fn run(config: &OptimizerConfig, problem: &OptProblem, seed: u64) -> Result<OptResult, OptError> {
    match config.build()? {
        Prepared::Random => random_search(problem, seed),
        Prepared::Hill(lmm) => hill_climber(problem, seed, lmm),
        Prepared::Sa(p) => generalized_sa(problem, seed, p),
        Prepared::De(p) => differential_evolution(problem, seed, p),
        Prepared::Kriging(p) => kriging_sbo(problem, seed, p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_with_aliases() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("L-BFGS-B".parse::<Algorithm>().unwrap(), Algorithm::HillClimber);
        assert_eq!("gen_sa".parse::<Algorithm>().unwrap(), Algorithm::GeneralizedSA);
        assert!("nelder-mead".parse::<Algorithm>().is_err());
    }

    #[test]
    fn defaults_resolve() {
        let r = OptimizerConfig::new(Algorithm::KrigingSBO).resolved();
        assert_eq!(r["designSize"], ParamValue::Int(7));
        assert_eq!(r["designType"], ParamValue::Cat("Lhd".into()));
        assert!(OptimizerConfig::new(Algorithm::RandomSearch).resolved().is_empty());
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let bad = [
            OptimizerConfig::new(Algorithm::DifferentialEvolution).with("popsize", ParamValue::Int(3)),
            OptimizerConfig::new(Algorithm::DifferentialEvolution).with("strategy", ParamValue::Int(0)),
            OptimizerConfig::new(Algorithm::DifferentialEvolution).with("CR", ParamValue::Real(1.5)),
            OptimizerConfig::new(Algorithm::GeneralizedSA).with("qv", ParamValue::Real(3.0)),
            OptimizerConfig::new(Algorithm::GeneralizedSA).with("temp", ParamValue::Real(0.0)),
            OptimizerConfig::new(Algorithm::KrigingSBO).with("designSize", ParamValue::Int(2)),
            OptimizerConfig::new(Algorithm::KrigingSBO).with("designType", ParamValue::Cat("Sobol".into())),
            OptimizerConfig::new(Algorithm::HillClimber).with("lmm", ParamValue::Real(2.5)),
            OptimizerConfig::new(Algorithm::RandomSearch).with("lmm", ParamValue::Int(5)),
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(OptError::Config(_))), "{cfg:?}");
        }
        for a in Algorithm::ALL {
            OptimizerConfig::new(a).validate().unwrap();
        }
    }

    #[test]
    fn integral_reals_are_accepted_as_integers() {
        let cfg = OptimizerConfig::new(Algorithm::HillClimber).with("lmm", ParamValue::Real(3.0));
        cfg.validate().unwrap();
    }

    #[test]
    fn config_round_trips_through_yaml() {
        let cfg = OptimizerConfig::new(Algorithm::DifferentialEvolution)
            .with("F", ParamValue::Real(0.3))
            .with("strategy", ParamValue::Int(4));
        let text = serde_yaml::to_string(&cfg).unwrap();
        let back: OptimizerConfig = serde_yaml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
