//! Mechanical constructions on multilevel instances: epigraph form,
//! near-optimality cut, adversarial subproblems, the objective-protecting
//! variant, the pessimistic specialization, and tail restriction.
//!
//! Every builder is a pure function of its inputs.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    Assignment, Constraint, LevelProblem, LinearExpr, MultilevelInstance, NearOptimalitySpec,
    ProtectionMode, VarKind, Variable,
};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReformulateError {
    #[error("instance has no near_optimality section")]
    NoNearOptimality,
    #[error("level {level} has no constraint with index {index}")]
    UnknownConstraint { level: usize, index: usize },
    #[error("constraint insensitive: level {level} constraint {constraint} references no variable at or below the deviating level")]
    Insensitive { level: usize, constraint: String },
    #[error("level {0} out of range")]
    UnknownLevel(usize),
    #[error("{0}")]
    Unsupported(String),
}

/// A level whose decision responds optimally to the variables above it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResponseLevel {
    pub variables: Vec<Variable>,
    pub objective: LinearExpr,
    pub constraints: Vec<Constraint>,
}

/// A single-level problem derived from an instance, optionally followed by
/// response levels that react optimally to its decision (the tail of an
/// intermediate deviating level).
///
/// `frozen` records the parameterizing values already substituted into every
/// expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Subproblem {
    pub variables: Vec<Variable>,
    pub objective: LinearExpr,
    pub constraints: Vec<Constraint>,
    pub frozen: Assignment,
    pub response: Vec<ResponseLevel>,
}

impl Subproblem {
    pub fn new(variables: Vec<Variable>, objective: LinearExpr) -> Self {
        Subproblem {
            variables,
            objective,
            constraints: Vec::new(),
            frozen: Assignment::new(),
            response: Vec::new(),
        }
    }

    pub fn with_constraint(mut self, name: &str, expr: LinearExpr) -> Self {
        self.constraints.push(Constraint::new(name, expr));
        self
    }

    /// Substitutes `values` everywhere and records them as frozen.
    pub fn with_frozen(&self, values: &Assignment) -> Subproblem {
        let sub = |e: &LinearExpr| e.substitute(values);
        let subc = |cs: &[Constraint]| {
            cs.iter()
                .map(|c| Constraint::new(&c.name, sub(&c.expr)))
                .collect::<Vec<_>>()
        };
        Subproblem {
            variables: self.variables.clone(),
            objective: sub(&self.objective),
            constraints: subc(&self.constraints),
            frozen: self.frozen.merged(values),
            response: self
                .response
                .iter()
                .map(|r| ResponseLevel {
                    variables: r.variables.clone(),
                    objective: sub(&r.objective),
                    constraints: subc(&r.constraints),
                })
                .collect(),
        }
    }

    /// Free and response variables.
    pub fn all_variables(&self) -> impl Iterator<Item = &Variable> {
        self.variables
            .iter()
            .chain(self.response.iter().flat_map(|r| r.variables.iter()))
    }

    /// Variables referenced by some expression but neither free nor frozen.
    pub fn parameters(&self) -> BTreeSet<String> {
        let known: BTreeSet<&str> = self.all_variables().map(|v| v.name.as_str()).collect();
        let exprs = std::iter::once(&self.objective)
            .chain(self.constraints.iter().map(|c| &c.expr))
            .chain(self.response.iter().flat_map(|r| {
                std::iter::once(&r.objective).chain(r.constraints.iter().map(|c| &c.expr))
            }));
        exprs
            .flat_map(|e| e.variables())
            .filter(|n| !known.contains(n))
            .map(str::to_string)
            .collect()
    }

    pub fn is_flat(&self) -> bool {
        self.response.is_empty()
    }

    /// The constraint matrix of the free variables, one row per constraint
    /// followed by one row per finite bound (`x <= ub` as `+1`, `x >= lb` as `-1`).
    pub fn constraint_matrix(&self) -> Vec<Vec<Rational>> {
        let mut rows: Vec<Vec<Rational>> = self
            .constraints
            .iter()
            .map(|c| self.variables.iter().map(|v| c.expr.coefficient(&v.name)).collect())
            .collect();
        let n = self.variables.len();
        for j in 0..n {
            let mut up = vec![Rational::zero(); n];
            up[j] = Rational::one();
            rows.push(up);
            let mut down = vec![Rational::zero(); n];
            down[j] = Rational::from(-1);
            rows.push(down);
        }
        rows
    }

    /// The single-level (or, with response levels, multilevel) instance
    /// document equivalent to this subproblem. Frozen values stay substituted.
    pub fn to_instance(&self) -> MultilevelInstance {
        let mut variables: Vec<Variable> = self
            .variables
            .iter()
            .map(|v| Variable { level: 0, ..v.clone() })
            .collect();
        let mut levels = vec![LevelProblem {
            objective: self.objective.clone(),
            constraints: self.constraints.clone(),
        }];
        for (j, r) in self.response.iter().enumerate() {
            variables.extend(r.variables.iter().map(|v| Variable {
                level: j + 1,
                ..v.clone()
            }));
            levels.push(LevelProblem {
                objective: r.objective.clone(),
                constraints: r.constraints.clone(),
            });
        }
        MultilevelInstance {
            variables,
            levels,
            near_optimality: None,
        }
    }
}

fn require_nos(instance: &MultilevelInstance) -> Result<&NearOptimalitySpec, ReformulateError> {
    instance.nos().ok_or(ReformulateError::NoNearOptimality)
}

fn response_levels(instance: &MultilevelInstance, from: usize) -> Vec<ResponseLevel> {
    (from..instance.level_count())
        .map(|l| ResponseLevel {
            variables: instance.level_variables(l),
            objective: instance.levels[l].objective.clone(),
            constraints: instance.levels[l].constraints.clone(),
        })
        .collect()
}

/// Whether `expr` takes integer values at every integer point of its variables.
fn integral_on_integer_points(instance: &MultilevelInstance, expr: &LinearExpr) -> bool {
    expr.constant.is_integer()
        && expr.terms.iter().all(|(n, c)| {
            c.is_integer() && instance.variable(n).is_some_and(|v| v.kind == VarKind::Integer)
        })
}

/// Epigraph form of `level`: an auxiliary `u` with `f - u <= 0` replaces the
/// objective. Variables of other levels present in `params` are frozen;
/// remaining upper-level variables stay as parameters.
///
/// `u` is integer when the objective is integral on integer points (which
/// keeps the subproblem pure-integer), continuous otherwise. Its bounds are
/// the objective's range over the variable box.
pub fn epigraph_form(
    instance: &MultilevelInstance,
    level: usize,
    params: &Assignment,
) -> Result<Subproblem, ReformulateError> {
    let lp = instance
        .levels
        .get(level)
        .ok_or(ReformulateError::UnknownLevel(level))?;
    let u = instance.fresh_name("u");
    let (lo, hi) = lp
        .objective
        .range_over(&instance.variables)
        .map_err(|e| ReformulateError::Unsupported(e.to_string()))?;
    let aux = if integral_on_integer_points(instance, &lp.objective) {
        Variable::integer(&u, level, Rational::from(lo.ceil()), Rational::from(hi.floor()))
    } else {
        Variable::continuous(&u, level, lo, hi)
    };
    let mut variables = instance.level_variables(level);
    variables.push(aux);
    let mut constraints = vec![Constraint::new(
        "epigraph",
        lp.objective.minus(&LinearExpr::var(&u)),
    )];
    constraints.extend(lp.constraints.iter().cloned());
    let p = Subproblem {
        variables,
        objective: LinearExpr::var(&u),
        constraints,
        frozen: Assignment::new(),
        response: response_levels(instance, level + 1),
    };
    let upper = instance.prefix(params, level);
    Ok(p.with_frozen(&upper))
}

/// `f(x, .) - fstar - delta <= 0` for the objective of `level`, with `x` substituted.
pub fn cut_for_level(
    instance: &MultilevelInstance,
    level: usize,
    x: &Assignment,
    fstar: &Rational,
    delta: &Rational,
) -> LinearExpr {
    let upper = instance.prefix(x, level);
    instance.levels[level]
        .objective
        .substitute(&upper)
        .plus_constant(&-(fstar + delta))
}

/// Near-optimality cut on the deviating level (the bottom level when the
/// instance carries no near-optimality data).
pub fn near_optimality_cut(
    instance: &MultilevelInstance,
    x: &Assignment,
    fstar: &Rational,
    delta: &Rational,
) -> LinearExpr {
    let level = instance
        .nos()
        .map(|n| n.deviating_level)
        .unwrap_or_else(|| instance.bottom());
    cut_for_level(instance, level, x, fstar, delta)
}

fn adversary_over(
    instance: &MultilevelInstance,
    objective: LinearExpr,
    x: &Assignment,
    fstar: &Rational,
) -> Result<Subproblem, ReformulateError> {
    let nos = require_nos(instance)?;
    let d = nos.deviating_level;
    let upper = instance.prefix(x, d);
    let mut constraints = instance.levels[d].constraints.clone();
    constraints.push(Constraint::new(
        "near_optimality",
        cut_for_level(instance, d, &upper, fstar, &nos.delta),
    ));
    let p = Subproblem {
        variables: instance.level_variables(d),
        objective,
        constraints,
        frozen: Assignment::new(),
        response: response_levels(instance, d + 1),
    };
    Ok(p.with_frozen(&upper))
}

/// Adversary for constraint `k` of `protected_level`: minimize `-G_k(x, .)`
/// over the near-optimal set of the deviating level. Minimizing and negating
/// yields the worst value of `G_k`.
pub fn build_adversarial(
    instance: &MultilevelInstance,
    protected_level: usize,
    k: usize,
    x: &Assignment,
    fstar: &Rational,
) -> Result<Subproblem, ReformulateError> {
    let nos = require_nos(instance)?;
    let level = instance
        .levels
        .get(protected_level)
        .ok_or(ReformulateError::UnknownLevel(protected_level))?;
    let c = level
        .constraints
        .get(k)
        .ok_or(ReformulateError::UnknownConstraint {
            level: protected_level,
            index: k,
        })?;
    if !instance.is_sensitive(&c.expr, nos.deviating_level) {
        return Err(ReformulateError::Insensitive {
            level: protected_level,
            constraint: c.name.clone(),
        });
    }
    adversary_over(instance, c.expr.negated(), x, fstar)
}

/// Adversary maximizing the top objective over the near-optimal set.
pub fn build_objective_adversary(
    instance: &MultilevelInstance,
    x: &Assignment,
    fstar: &Rational,
) -> Result<Subproblem, ReformulateError> {
    adversary_over(instance, instance.levels[0].objective.negated(), x, fstar)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AdversaryTarget {
    Constraint {
        level: usize,
        index: usize,
        name: String,
    },
    Objective {
        level: usize,
    },
}

impl AdversaryTarget {
    pub fn level(&self) -> usize {
        match self {
            AdversaryTarget::Constraint { level, .. } | AdversaryTarget::Objective { level } => {
                *level
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            AdversaryTarget::Constraint { level, name, .. } => format!("level {level} constraint {name}"),
            AdversaryTarget::Objective { level } => format!("level {level} objective"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Adversary {
    pub target: AdversaryTarget,
    /// `None` when the constraint is insensitive to near-optimal deviation.
    pub subproblem: Option<Subproblem>,
}

/// One entry per constraint of each protected level (plus the objective
/// adversary in objective-protecting mode).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Default)]
pub struct AdversarySet {
    pub entries: Vec<Adversary>,
}

impl AdversarySet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn built(&self) -> impl Iterator<Item = (&AdversaryTarget, &Subproblem)> {
        self.entries
            .iter()
            .filter_map(|a| a.subproblem.as_ref().map(|s| (&a.target, s)))
    }
}

/// Adversaries for the given protected levels against the deviating level.
pub fn build_adversaries(
    instance: &MultilevelInstance,
    levels: &[usize],
    x: &Assignment,
    fstar: &Rational,
) -> Result<AdversarySet, ReformulateError> {
    let nos = require_nos(instance)?;
    let mut entries = Vec::new();
    for &p in levels {
        let level = instance
            .levels
            .get(p)
            .ok_or(ReformulateError::UnknownLevel(p))?;
        for (k, c) in level.constraints.iter().enumerate() {
            let target = AdversaryTarget::Constraint {
                level: p,
                index: k,
                name: c.name.clone(),
            };
            let subproblem = match build_adversarial(instance, p, k, x, fstar) {
                Ok(s) => Some(s),
                Err(ReformulateError::Insensitive { .. }) => None,
                Err(e) => return Err(e),
            };
            entries.push(Adversary { target, subproblem });
        }
        if p == 0 && nos.mode == ProtectionMode::ConstraintsAndObjective {
            entries.push(Adversary {
                target: AdversaryTarget::Objective { level: 0 },
                subproblem: Some(build_objective_adversary(instance, x, fstar)?),
            });
        }
    }
    Ok(AdversarySet { entries })
}

/// One adversary set covering every protected level, each parameterized by
/// `x_prefix` (the decisions above the deviating level).
pub fn build_gnormp_adversaries(
    instance: &MultilevelInstance,
    x_prefix: &Assignment,
    fstar: &Rational,
) -> Result<AdversarySet, ReformulateError> {
    let nos = require_nos(instance)?;
    let levels: Vec<usize> = nos.protected_levels.iter().copied().collect();
    build_adversaries(instance, &levels, x_prefix, fstar)
}

/// Objective-protecting variant: a continuous top-level bound `tau` becomes
/// the top objective and `F - tau <= 0` is added as a protected constraint.
pub fn build_alt(instance: &MultilevelInstance) -> Result<MultilevelInstance, ReformulateError> {
    let nos = require_nos(instance)?;
    if nos.protected_levels.iter().ne([0usize].iter()) {
        return Err(ReformulateError::Unsupported(
            "objective protection requires protected_levels = [0]".into(),
        ));
    }
    let mut out = instance.clone();
    let tau = instance.fresh_name("tau");
    let objective = instance.levels[0].objective.clone();
    let (lo, hi) = objective
        .range_over(&instance.variables)
        .map_err(|e| ReformulateError::Unsupported(e.to_string()))?;
    out.variables.push(Variable::continuous(&tau, 0, lo, hi));
    let mut cname = "objective_bound".to_string();
    let mut i = 1;
    while instance.levels[0].constraints.iter().any(|c| c.name == cname) {
        cname = format!("objective_bound_{i}");
        i += 1;
    }
    out.levels[0].objective = LinearExpr::var(&tau);
    out.levels[0]
        .constraints
        .push(Constraint::new(&cname, objective.minus(&LinearExpr::var(&tau))));
    if let Some(n) = out.near_optimality.as_mut() {
        n.mode = ProtectionMode::Constraints;
    }
    Ok(out)
}

/// The same instance with a zero tolerance.
pub fn build_pessimistic(
    instance: &MultilevelInstance,
) -> Result<MultilevelInstance, ReformulateError> {
    require_nos(instance)?;
    Ok(instance.with_delta(Rational::zero()))
}

/// The sub-instance made of levels `from..` with every variable of the levels
/// above fixed to its value in `fixed`. Near-optimality data is shifted;
/// protected levels above `from` are dropped.
pub fn restrict_to_tail(
    instance: &MultilevelInstance,
    fixed: &Assignment,
    from: usize,
) -> Result<MultilevelInstance, ReformulateError> {
    if from >= instance.level_count() {
        return Err(ReformulateError::UnknownLevel(from));
    }
    let upper = instance.prefix(fixed, from);
    let variables = instance
        .variables
        .iter()
        .filter(|v| v.level >= from)
        .map(|v| Variable {
            level: v.level - from,
            ..v.clone()
        })
        .collect();
    let levels = instance.levels[from..]
        .iter()
        .map(|l| LevelProblem {
            objective: l.objective.substitute(&upper),
            constraints: l
                .constraints
                .iter()
                .map(|c| Constraint::new(&c.name, c.expr.substitute(&upper)))
                .collect(),
        })
        .collect();
    let near_optimality = instance.nos().and_then(|n| {
        let protected: BTreeSet<usize> = n
            .protected_levels
            .iter()
            .filter(|&&p| p >= from)
            .map(|p| p - from)
            .collect();
        (n.deviating_level > from && !protected.is_empty()).then(|| NearOptimalitySpec {
            deviating_level: n.deviating_level - from,
            delta: n.delta.clone(),
            protected_levels: protected,
            mode: n.mode,
        })
    });
    Ok(MultilevelInstance {
        variables,
        levels,
        near_optimality,
    })
}
