use std::fmt;

use serde::Serialize;

use super::{MultilevelInstance, ProtectionMode, VarKind};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    BadBounds {
        variable: String,
        lb: Rational,
        ub: Rational,
    },
    EmptyIntegerDomain {
        variable: String,
    },
    /// A continuous variable used by a level that decides after its owner.
    ContinuousBelowOwner {
        variable: String,
        owner_level: usize,
        used_in_level: usize,
        location: String,
    },
    EmptyLevel {
        level: usize,
    },
    NearOptimality {
        message: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadBounds { variable, lb, ub } => {
                write!(f, "variable {variable}: bad bounds (lb {lb} > ub {ub})")
            }
            Violation::EmptyIntegerDomain { variable } => {
                write!(f, "variable {variable}: no integer value within bounds")
            }
            Violation::ContinuousBelowOwner {
                variable,
                owner_level,
                used_in_level,
                location,
            } => write!(
                f,
                "continuous variable {variable} of level {owner_level} appears in level \
                 {used_in_level} {location}; continuous variables may only appear at or above \
                 their owning level"
            ),
            Violation::EmptyLevel { level } => write!(f, "level {level} owns no variables"),
            Violation::NearOptimality { message } => write!(f, "near_optimality: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "clean");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Structural admissibility check. Violations are collected, never raised.
pub fn validate(instance: &MultilevelInstance) -> ValidationReport {
    let mut violations = Vec::new();

    for v in &instance.variables {
        if v.lb > v.ub {
            violations.push(Violation::BadBounds {
                variable: v.name.clone(),
                lb: v.lb.clone(),
                ub: v.ub.clone(),
            });
        } else if v.kind == VarKind::Integer && v.integer_range().is_none() {
            violations.push(Violation::EmptyIntegerDomain {
                variable: v.name.clone(),
            });
        }
    }

    for level in 0..instance.level_count() {
        if !instance.variables.iter().any(|v| v.level == level) {
            violations.push(Violation::EmptyLevel { level });
        }
    }

    for (j, level) in instance.levels.iter().enumerate() {
        let places = std::iter::once(("objective".to_string(), &level.objective)).chain(
            level
                .constraints
                .iter()
                .map(|c| (format!("constraint {}", c.name), &c.expr)),
        );
        for (location, expr) in places {
            for name in expr.variables() {
                let Some(var) = instance.variable(name) else {
                    continue;
                };
                if var.kind == VarKind::Continuous && var.level < j {
                    violations.push(Violation::ContinuousBelowOwner {
                        variable: name.to_string(),
                        owner_level: var.level,
                        used_in_level: j,
                        location: location.clone(),
                    });
                }
            }
        }
    }

    if let Some(nos) = instance.nos() {
        let mut bad = |m: String| violations.push(Violation::NearOptimality { message: m });
        let d = nos.deviating_level;
        if d == 0 {
            bad("top level cannot deviate".into());
        }
        if d >= instance.level_count() {
            bad(format!("deviating level {d} out of range"));
        }
        if nos.delta.is_negative() {
            bad(format!("delta {} is negative", nos.delta));
        }
        if nos.protected_levels.is_empty() {
            bad("no protected levels".into());
        }
        for &p in &nos.protected_levels {
            if p >= d {
                bad(format!(
                    "protected level {p} is not above deviating level {d}"
                ));
            }
        }
        if nos.mode == ProtectionMode::ConstraintsAndObjective
            && nos.protected_levels.iter().ne([0usize].iter())
        {
            bad("constraints_and_objective mode requires protected_levels = [0]".into());
        }
    }

    ValidationReport { violations }
}
