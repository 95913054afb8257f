//! Exact subproblem oracles: rational simplex for continuous problems,
//! bounded enumeration for integer problems, and a hierarchy engine for
//! subproblems whose tail responds optimally.

mod enumerate;
mod hierarchy;
mod lp;
mod tu;

use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::model::{Assignment, EvalError, MultilevelInstance, VarKind};
use crate::reformulate::Subproblem;
use crate::rational::Rational;

pub use enumerate::{enumerate_integer, feasible_points, integer_points};
pub(crate) use hierarchy::{Engine, RobustSpec};
pub use lp::solve_lp;
pub use tu::{is_totally_unimodular, Matrix, TU_CHECK_CAP};

pub const DEFAULT_ORACLE_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "OPTIMAL",
            Status::Infeasible => "INFEASIBLE",
            Status::Unbounded => "UNBOUNDED",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Status {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OptResult {
    pub status: Status,
    pub value: Option<Rational>,
    pub witness: Option<Assignment>,
}

impl OptResult {
    pub fn optimal(value: Rational, witness: Assignment) -> Self {
        OptResult {
            status: Status::Optimal,
            value: Some(value),
            witness: Some(witness),
        }
    }

    pub fn infeasible() -> Self {
        OptResult {
            status: Status::Infeasible,
            value: None,
            witness: None,
        }
    }

    pub fn unbounded() -> Self {
        OptResult {
            status: Status::Unbounded,
            value: None,
            witness: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("instance too large for oracle: {points} points exceed cap {cap}")]
    CapExceeded { points: u128, cap: u128 },
    #[error("mixed free variables unsupported")]
    MixedVariables,
    #[error("unbound parameter {0}")]
    UnboundParameter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    /// Maximum number of integer points a single enumeration may visit.
    pub oracle_cap: u128,
    /// Worker threads for the outermost enumeration; 1 keeps everything sequential.
    pub jobs: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            oracle_cap: DEFAULT_ORACLE_CAP,
            jobs: 1,
        }
    }
}

/// Solves flat single-level subproblems (no response levels). Multilevel
/// subproblems are reduced to sequences of flat calls by the hierarchy engine.
pub trait Oracle: Sync {
    fn solve_flat(&self, p: &Subproblem) -> Result<OptResult, SolveError>;
    fn config(&self) -> SolverConfig;
}

/// The built-in exact oracle.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactOracle {
    pub config: SolverConfig,
}

impl ExactOracle {
    pub fn new(config: SolverConfig) -> Self {
        ExactOracle { config }
    }

    pub fn with_cap(cap: u128) -> Self {
        ExactOracle {
            config: SolverConfig {
                oracle_cap: cap,
                ..SolverConfig::default()
            },
        }
    }
}

impl Oracle for ExactOracle {
    fn solve_flat(&self, p: &Subproblem) -> Result<OptResult, SolveError> {
        check_parameters(p)?;
        if p.variables.is_empty() {
            for c in &p.constraints {
                if c.expr.evaluate(&Assignment::new())?.is_positive() {
                    return Ok(OptResult::infeasible());
                }
            }
            return Ok(OptResult::optimal(p.objective.evaluate(&Assignment::new())?, Assignment::new()));
        }
        let ints = p.variables.iter().filter(|v| v.kind == VarKind::Integer).count();
        if ints == p.variables.len() {
            enumerate_integer(p, self.config.oracle_cap)
        } else if ints == 0 {
            solve_lp(p)
        } else {
            Err(SolveError::MixedVariables)
        }
    }

    fn config(&self) -> SolverConfig {
        self.config
    }
}

pub(crate) fn check_parameters(p: &Subproblem) -> Result<(), SolveError> {
    match p.parameters().into_iter().next() {
        Some(name) => Err(SolveError::UnboundParameter(name)),
        None => Ok(()),
    }
}

/// Solves `p` with `oracle`, running the hierarchy engine when `p` carries
/// response levels.
pub fn solve_subproblem_with(oracle: &dyn Oracle, p: &Subproblem) -> Result<OptResult, SolveError> {
    if p.is_flat() {
        return oracle.solve_flat(p);
    }
    check_parameters(p)?;
    Engine::from_subproblem(p, oracle).solve(&p.frozen)
}

/// Solves `p` with the default exact oracle.
pub fn solve_subproblem(p: &Subproblem) -> Result<OptResult, SolveError> {
    solve_subproblem_with(&ExactOracle::default(), p)
}

/// Optimal value of level `from` over its optimal-response tail, with the
/// variables of the levels above fixed by `fixed`. The witness assigns the
/// variables of levels `from..`; ties break lexicographically.
pub fn solve_hierarchical(
    instance: &MultilevelInstance,
    fixed: &Assignment,
    from: usize,
    oracle: &dyn Oracle,
) -> Result<OptResult, SolveError> {
    if from >= instance.level_count() {
        return Err(SolveError::Unsupported(format!("level {from} out of range")));
    }
    let upper = instance.prefix(fixed, from);
    if let Some(v) = instance
        .variables
        .iter()
        .find(|v| v.level < from && !upper.contains(&v.name))
    {
        return Err(SolveError::UnboundParameter(v.name.clone()));
    }
    Engine::from_instance(instance, from, None, oracle).solve(&upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearExpr, Variable};

    #[test]
    fn unbound_parameter_is_named() {
        let p = Subproblem::new(vec![Variable::integer("v", 1, 0, 2)], LinearExpr::var("v"))
            .with_constraint("g", LinearExpr::var("v").with_term("x", -1));
        assert_eq!(
            solve_subproblem(&p).unwrap_err(),
            SolveError::UnboundParameter("x".into())
        );
    }

    #[test]
    fn mixed_free_variables_rejected() {
        let p = Subproblem::new(
            vec![Variable::integer("a", 1, 0, 2), Variable::continuous("b", 1, 0, 2)],
            LinearExpr::var("a"),
        );
        let err = solve_subproblem(&p).unwrap_err();
        assert_eq!(err.to_string(), "mixed free variables unsupported");
    }

    #[test]
    fn no_free_variables_evaluates_constants() {
        let p = Subproblem::new(vec![], LinearExpr::constant(3));
        let r = solve_subproblem(&p).unwrap();
        assert_eq!(r.value, Some(Rational::from(3)));
        let q = p.with_constraint("c", LinearExpr::constant(1));
        assert_eq!(solve_subproblem(&q).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn status_serializes_uppercase() {
        let json = serde_json::to_string(&OptResult::infeasible()).unwrap();
        assert_eq!(json, r#"{"status":"INFEASIBLE","value":null,"witness":null}"#);
    }
}
