//! Exact data model for multilevel problems with near-optimality robustness.
//!
//! Levels are indexed from 0 (the top leader) downward. Every objective is
//! minimized and every constraint reads `expr <= 0`.

mod graph;
mod parse;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rational;

pub use graph::{anticipation_graph, ArcKind, Graph, GraphArc, GraphNode, NodeKind};
pub use parse::{parse_document, parse_instance, to_json};
pub use validate::{validate, ValidationReport, Violation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("missing variable {0}")]
    MissingVariable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Semantic(String),
    #[error("instance failed validation: {0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKind {
    #[serde(rename = "int")]
    Integer,
    #[serde(rename = "cont")]
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub level: usize,
    pub kind: VarKind,
    pub lb: Rational,
    pub ub: Rational,
}

impl Variable {
    pub fn integer(name: &str, level: usize, lb: impl Into<Rational>, ub: impl Into<Rational>) -> Self {
        Variable {
            name: name.to_string(),
            level,
            kind: VarKind::Integer,
            lb: lb.into(),
            ub: ub.into(),
        }
    }

    pub fn continuous(
        name: &str,
        level: usize,
        lb: impl Into<Rational>,
        ub: impl Into<Rational>,
    ) -> Self {
        Variable {
            name: name.to_string(),
            level,
            kind: VarKind::Continuous,
            lb: lb.into(),
            ub: ub.into(),
        }
    }

    pub fn is_integer(&self) -> bool {
        self.kind == VarKind::Integer
    }

    /// Inclusive integer range `[ceil(lb), floor(ub)]`; `None` when empty.
    pub fn integer_range(&self) -> Option<(BigInt, BigInt)> {
        let lo = self.lb.ceil();
        let hi = self.ub.floor();
        (lo <= hi).then_some((lo, hi))
    }

    /// Number of integer points in the domain, saturating at `u128::MAX`.
    pub fn domain_size(&self) -> u128 {
        match self.integer_range() {
            None => 0,
            Some((lo, hi)) => (hi - lo + BigInt::from(1)).to_u128().unwrap_or(u128::MAX),
        }
    }

    /// Bounds and, for integer variables, integrality.
    pub fn admits(&self, value: &Rational) -> bool {
        *value >= self.lb && *value <= self.ub && (!self.is_integer() || value.is_integer())
    }
}

/// Affine expression `sum(coef * var) + constant`. Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinearExpr {
    pub terms: BTreeMap<String, Rational>,
    pub constant: Rational,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: impl Into<Rational>) -> Self {
        LinearExpr {
            terms: BTreeMap::new(),
            constant: c.into(),
        }
    }

    pub fn var(name: &str) -> Self {
        Self::new().with_term(name, 1)
    }

    pub fn with_term(mut self, name: &str, coef: impl Into<Rational>) -> Self {
        self.add_term(name, &coef.into());
        self
    }

    pub fn with_constant(mut self, c: impl Into<Rational>) -> Self {
        self.constant = c.into();
        self
    }

    pub fn add_term(&mut self, name: &str, coef: &Rational) {
        if coef.is_zero() {
            return;
        }
        let entry = self
            .terms
            .entry(name.to_string())
            .or_insert_with(Rational::zero);
        *entry += coef;
        if entry.is_zero() {
            self.terms.remove(name);
        }
    }

    pub fn coefficient(&self, name: &str) -> Rational {
        self.terms.get(name).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn references(&self, name: &str) -> bool {
        self.terms.contains_key(name)
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, factor: &Rational) -> LinearExpr {
        if factor.is_zero() {
            return LinearExpr::new();
        }
        LinearExpr {
            terms: self
                .terms
                .iter()
                .map(|(k, v)| (k.clone(), v * factor))
                .collect(),
            constant: &self.constant * factor,
        }
    }

    pub fn negated(&self) -> LinearExpr {
        self.scaled(&Rational::from(-1))
    }

    pub fn plus(&self, other: &LinearExpr) -> LinearExpr {
        let mut out = self.clone();
        for (k, v) in &other.terms {
            out.add_term(k, v);
        }
        out.constant += &other.constant;
        out
    }

    pub fn minus(&self, other: &LinearExpr) -> LinearExpr {
        self.plus(&other.negated())
    }

    pub fn plus_constant(&self, c: &Rational) -> LinearExpr {
        let mut out = self.clone();
        out.constant += c;
        out
    }

    /// Exact value under `a`; every referenced variable must be assigned.
    pub fn evaluate(&self, a: &Assignment) -> Result<Rational, EvalError> {
        let mut acc = self.constant.clone();
        for (name, coef) in &self.terms {
            let v = a
                .get(name)
                .ok_or_else(|| EvalError::MissingVariable(name.clone()))?;
            acc += &(coef * v);
        }
        Ok(acc)
    }

    /// Folds every variable assigned in `a` into the constant.
    pub fn substitute(&self, a: &Assignment) -> LinearExpr {
        let mut out = LinearExpr::constant(self.constant.clone());
        for (name, coef) in &self.terms {
            match a.get(name) {
                Some(v) => out.constant += &(coef * v),
                None => {
                    out.terms.insert(name.clone(), coef.clone());
                }
            }
        }
        out
    }

    /// Keeps only the terms whose variable satisfies `keep`; the constant is kept.
    pub fn filter_terms(&self, mut keep: impl FnMut(&str) -> bool) -> LinearExpr {
        LinearExpr {
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            constant: self.constant.clone(),
        }
    }

    /// Interval `[min, max]` of the expression over the bounding box of `vars`.
    pub fn range_over(&self, vars: &[Variable]) -> Result<(Rational, Rational), EvalError> {
        let mut lo = self.constant.clone();
        let mut hi = self.constant.clone();
        for (name, coef) in &self.terms {
            let v = vars
                .iter()
                .find(|v| &v.name == name)
                .ok_or_else(|| EvalError::MissingVariable(name.clone()))?;
            let a = coef * &v.lb;
            let b = coef * &v.ub;
            let (mn, mx) = if a <= b { (a, b) } else { (b, a) };
            lo += &mn;
            hi += &mx;
        }
        Ok((lo, hi))
    }
}

/// Exact evaluation of `expr` under `a`.
pub fn evaluate(expr: &LinearExpr, a: &Assignment) -> Result<Rational, EvalError> {
    expr.evaluate(a)
}

impl fmt::Display for LinearExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, coef) in &self.terms {
            let neg = coef.is_negative();
            let mag = coef.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            if mag == 1 {
                write!(f, "{name}")?;
            } else {
                write!(f, "{mag}*{name}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if !self.constant.is_zero() {
            let sign = if self.constant.is_negative() { "-" } else { "+" };
            write!(f, " {sign} {}", self.constant.abs())
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub expr: LinearExpr,
}

impl Constraint {
    pub fn new(name: &str, expr: LinearExpr) -> Self {
        Constraint {
            name: name.to_string(),
            expr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LevelProblem {
    pub objective: LinearExpr,
    pub constraints: Vec<Constraint>,
}

impl LevelProblem {
    pub fn new(objective: LinearExpr) -> Self {
        LevelProblem {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn with_constraint(mut self, name: &str, expr: LinearExpr) -> Self {
        self.constraints.push(Constraint::new(name, expr));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtectionMode {
    Constraints,
    ConstraintsAndObjective,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NearOptimalitySpec {
    pub deviating_level: usize,
    pub delta: Rational,
    pub protected_levels: BTreeSet<usize>,
    pub mode: ProtectionMode,
}

impl NearOptimalitySpec {
    pub fn new(deviating_level: usize, delta: Rational, protected: &[usize]) -> Self {
        NearOptimalitySpec {
            deviating_level,
            delta,
            protected_levels: protected.iter().copied().collect(),
            mode: ProtectionMode::Constraints,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultilevelInstance {
    pub variables: Vec<Variable>,
    pub levels: Vec<LevelProblem>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub near_optimality: Option<NearOptimalitySpec>,
}

impl MultilevelInstance {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn bottom(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Variables owned by `level`, in declaration order.
    pub fn level_variables(&self, level: usize) -> Vec<Variable> {
        self.variables
            .iter()
            .filter(|v| v.level == level)
            .cloned()
            .collect()
    }

    pub fn level_of(&self, name: &str) -> Option<usize> {
        self.variable(name).map(|v| v.level)
    }

    pub fn nos(&self) -> Option<&NearOptimalitySpec> {
        self.near_optimality.as_ref()
    }

    /// A constraint is sensitive to near-optimal deviation when it references a
    /// variable owned by the deviating level or a level below it.
    pub fn is_sensitive(&self, expr: &LinearExpr, deviating_level: usize) -> bool {
        expr.variables()
            .any(|n| self.level_of(n).is_some_and(|l| l >= deviating_level))
    }

    /// The restriction of `a` to variables owned by levels strictly above `level`.
    pub fn prefix(&self, a: &Assignment, level: usize) -> Assignment {
        a.restrict(|n| self.level_of(n).is_some_and(|l| l < level))
    }

    /// A copy with a different tolerance; no-op without near-optimality data.
    pub fn with_delta(&self, delta: Rational) -> MultilevelInstance {
        let mut out = self.clone();
        if let Some(nos) = out.near_optimality.as_mut() {
            nos.delta = delta;
        }
        out
    }

    /// A fresh variable name based on `base` that no instance variable uses.
    pub fn fresh_name(&self, base: &str) -> String {
        if self.variable(base).is_none() {
            return base.to_string();
        }
        (1..)
            .map(|i| format!("{base}_{i}"))
            .find(|n| self.variable(n).is_none())
            .expect("unbounded name supply")
    }
}

/// Exact value per variable; also the certificate format.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    pub values: BTreeMap<String, Rational>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Rational> {
        self.values.get(name)
    }

    pub fn insert(&mut self, name: &str, value: Rational) {
        self.values.insert(name.to_string(), value);
    }

    pub fn with(mut self, name: &str, value: impl Into<Rational>) -> Self {
        self.insert(name, value.into());
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Union; entries of `other` win on conflicts.
    pub fn merged(&self, other: &Assignment) -> Assignment {
        let mut out = self.clone();
        for (k, v) in &other.values {
            out.values.insert(k.clone(), v.clone());
        }
        out
    }

    pub fn restrict(&self, mut keep: impl FnMut(&str) -> bool) -> Assignment {
        Assignment {
            values: self
                .values
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn without(&self, name: &str) -> Assignment {
        self.restrict(|n| n != name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Rational)> {
        self.values.iter()
    }
}

impl FromIterator<(String, Rational)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (String, Rational)>>(iter: T) -> Self {
        Assignment {
            values: iter.into_iter().collect(),
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, v)) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}: {v}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn evaluate_examples() {
        let e = LinearExpr::var("x").with_term("v", 1);
        let a = Assignment::new().with("x", 2).with("v", 2);
        assert_eq!(e.evaluate(&a).unwrap(), Rational::from(4));

        let e = LinearExpr::constant(1).with_term("v", -1);
        assert_eq!(
            e.evaluate(&Assignment::new().with("v", 1)).unwrap(),
            Rational::zero()
        );

        // 2*y1 + y2 - 2 at (1/2, 1): 1 + 1 - 2
        let e = LinearExpr::constant(-2).with_term("y1", 2).with_term("y2", 1);
        let a = Assignment::new().with("y1", rat(1, 2)).with("y2", 1);
        assert_eq!(e.evaluate(&a).unwrap(), Rational::zero());
    }

    #[test]
    fn evaluate_names_missing_variable() {
        let e = LinearExpr::var("x").with_term("v", 1);
        let err = e.evaluate(&Assignment::new().with("x", 1)).unwrap_err();
        assert_eq!(err, EvalError::MissingVariable("v".into()));
        assert_eq!(err.to_string(), "missing variable v");
    }

    #[test]
    fn zero_coefficients_are_dropped() {
        let mut e = LinearExpr::var("x");
        e.add_term("x", &Rational::from(-1));
        assert!(e.terms.is_empty());
        let e = LinearExpr::new().with_term("y", 0);
        assert!(e.is_constant());
    }

    #[test]
    fn substitute_folds_known_values() {
        let e = LinearExpr::constant(1).with_term("x", 3).with_term("y", -1);
        let s = e.substitute(&Assignment::new().with("x", 2));
        assert_eq!(s, LinearExpr::constant(7).with_term("y", -1));
    }

    #[test]
    fn range_over_box() {
        let vars = vec![Variable::integer("a", 0, 0, 2), Variable::integer("b", 0, -1, 1)];
        let e = LinearExpr::var("a").with_term("b", -2).with_constant(1);
        let (lo, hi) = e.range_over(&vars).unwrap();
        assert_eq!(lo, Rational::from(-1));
        assert_eq!(hi, Rational::from(5));
    }

    #[test]
    fn integer_range_rounds_inward() {
        let v = Variable::integer("a", 0, rat(-3, 2), rat(5, 2));
        let (lo, hi) = v.integer_range().unwrap();
        assert_eq!((lo, hi), (BigInt::from(-1), BigInt::from(2)));
        assert_eq!(v.domain_size(), 4);
        let empty = Variable::integer("e", 0, rat(1, 3), rat(2, 3));
        assert_eq!(empty.domain_size(), 0);
    }

    #[test]
    fn display_expr() {
        let e = LinearExpr::constant(1).with_term("v", -1);
        assert_eq!(e.to_string(), "-v + 1");
        let e = LinearExpr::var("x").with_term("y", rat(1, 2)).with_constant(-3);
        assert_eq!(e.to_string(), "x + 1/2*y - 3");
    }
}
