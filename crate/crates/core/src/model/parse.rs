use std::collections::{BTreeMap, HashSet};

use serde::Deserialize;

use super::{
    validate, Constraint, LevelProblem, LinearExpr, ModelError, MultilevelInstance,
    NearOptimalitySpec, ProtectionMode, VarKind, Variable,
};
use crate::rational::Rational;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    variables: Vec<RawVariable>,
    levels: Vec<RawLevel>,
    #[serde(default)]
    near_optimality: Option<RawNearOptimality>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariable {
    name: String,
    level: usize,
    kind: VarKind,
    lb: Rational,
    ub: Rational,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpr {
    #[serde(default)]
    terms: BTreeMap<String, Rational>,
    #[serde(default)]
    constant: Rational,
}

#[derive(Deserialize, Default, Clone, Copy)]
enum RawSense {
    #[default]
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
}

#[derive(Deserialize, Default, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum RawObjectiveSense {
    #[default]
    Min,
    Max,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    name: String,
    expr: RawExpr,
    #[serde(default)]
    sense: RawSense,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevel {
    objective: RawExpr,
    #[serde(default)]
    sense: RawObjectiveSense,
    #[serde(default)]
    constraints: Vec<RawConstraint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNearOptimality {
    deviating_level: usize,
    delta: Rational,
    protected_levels: Vec<usize>,
    #[serde(default = "default_mode")]
    mode: ProtectionMode,
}

fn default_mode() -> ProtectionMode {
    ProtectionMode::Constraints
}

impl RawExpr {
    fn into_expr(self) -> LinearExpr {
        let mut e = LinearExpr::constant(self.constant);
        for (name, coef) in &self.terms {
            e.add_term(name, coef);
        }
        e
    }
}

/// Parses the JSON instance format and checks references, without running
/// [`validate`]. Constraints are normalized to `expr <= 0` and objectives to
/// minimization.
pub fn parse_document(text: &str) -> Result<MultilevelInstance, ModelError> {
    let raw: RawDocument = serde_json::from_str(text).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    if raw.levels.is_empty() {
        return Err(ModelError::Semantic("instance has no levels".into()));
    }
    let level_count = raw.levels.len();

    let mut names = HashSet::new();
    let mut variables = Vec::with_capacity(raw.variables.len());
    for v in raw.variables {
        if v.name.is_empty() {
            return Err(ModelError::Semantic("variable with empty name".into()));
        }
        if !names.insert(v.name.clone()) {
            return Err(ModelError::Semantic(format!(
                "duplicate variable name {}",
                v.name
            )));
        }
        if v.level >= level_count {
            return Err(ModelError::Semantic(format!(
                "variable {}: level {} out of range (instance has {} levels)",
                v.name, v.level, level_count
            )));
        }
        variables.push(Variable {
            name: v.name,
            level: v.level,
            kind: v.kind,
            lb: v.lb,
            ub: v.ub,
        });
    }

    let check_refs = |expr: &LinearExpr, what: &str| -> Result<(), ModelError> {
        match expr.variables().find(|n| !names.contains(*n)) {
            Some(unknown) => Err(ModelError::Semantic(format!(
                "{what}: unknown variable {unknown}"
            ))),
            None => Ok(()),
        }
    };

    let mut levels = Vec::with_capacity(level_count);
    for (idx, raw_level) in raw.levels.into_iter().enumerate() {
        let mut objective = raw_level.objective.into_expr();
        if let RawObjectiveSense::Max = raw_level.sense {
            objective = objective.negated();
        }
        check_refs(&objective, &format!("level {idx} objective"))?;

        let mut constraints = Vec::new();
        for c in raw_level.constraints {
            let expr = c.expr.into_expr();
            check_refs(&expr, &format!("level {idx} constraint {}", c.name))?;
            match c.sense {
                RawSense::Le => constraints.push(Constraint::new(&c.name, expr)),
                RawSense::Ge => constraints.push(Constraint::new(&c.name, expr.negated())),
                RawSense::Eq => {
                    constraints.push(Constraint::new(&format!("{}.le", c.name), expr.clone()));
                    constraints.push(Constraint::new(&format!("{}.ge", c.name), expr.negated()));
                }
            }
        }
        let mut seen = HashSet::new();
        for c in &constraints {
            if !seen.insert(c.name.as_str()) {
                return Err(ModelError::Semantic(format!(
                    "level {idx}: duplicate constraint name {}",
                    c.name
                )));
            }
        }
        levels.push(LevelProblem {
            objective,
            constraints,
        });
    }

    let near_optimality = match raw.near_optimality {
        None => None,
        Some(n) => {
            if n.deviating_level >= level_count {
                return Err(ModelError::Semantic(format!(
                    "near_optimality: deviating_level {} out of range",
                    n.deviating_level
                )));
            }
            if let Some(p) = n.protected_levels.iter().find(|&&p| p >= level_count) {
                return Err(ModelError::Semantic(format!(
                    "near_optimality: protected level {p} out of range"
                )));
            }
            Some(NearOptimalitySpec {
                deviating_level: n.deviating_level,
                delta: n.delta,
                protected_levels: n.protected_levels.into_iter().collect(),
                mode: n.mode,
            })
        }
    };

    Ok(MultilevelInstance {
        variables,
        levels,
        near_optimality,
    })
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<MultilevelInstance, ModelError> {
    let instance = parse_document(text)?;
    let report = validate(&instance);
    if report.is_clean() {
        Ok(instance)
    } else {
        Err(ModelError::Invalid(report))
    }
}

/// Canonical JSON serialization of an instance (normalized form).
pub fn to_json(instance: &MultilevelInstance) -> String {
    serde_json::to_string_pretty(instance).expect("instance serialization is infallible")
}
