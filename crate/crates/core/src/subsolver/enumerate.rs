//! Bounded enumeration of integer subproblems.
//!
//! Points are visited in lexicographic order of the declared variables and
//! the optimum only moves on strict improvement, so ties resolve to the
//! lexicographically smallest optimal point.

use std::ops::{Add, Mul};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::model::{Assignment, LinearExpr, VarKind, Variable};
use crate::rational::Rational;
use crate::reformulate::Subproblem;

use super::{check_parameters, OptResult, SolveError};

trait Int: Clone + Ord + Zero + One + Add<Output = Self> + Mul<Output = Self> {
    fn to_big(&self) -> BigInt;
}

impl Int for i128 {
    fn to_big(&self) -> BigInt {
        BigInt::from(*self)
    }
}

impl Int for BigInt {
    fn to_big(&self) -> BigInt {
        self.clone()
    }
}

#[derive(Clone)]
struct Row<T> {
    terms: Vec<(usize, T)>,
    constant: T,
}

impl<T: Int> Row<T> {
    fn eval(&self, point: &[T]) -> T {
        let mut acc = self.constant.clone();
        for (j, c) in &self.terms {
            acc = acc + c.clone() * point[*j].clone();
        }
        acc
    }
}

struct Compiled<T> {
    rows: Vec<Row<T>>,
    objective: Row<T>,
    ranges: Vec<(T, T)>,
}

/// Scales `expr` by the LCM of its denominators; the sign of every value is
/// preserved, so `<= 0` tests and comparisons are unaffected.
fn scale_row(expr: &LinearExpr, vars: &[Variable]) -> Row<BigInt> {
    let mut l = expr.constant.denom().clone();
    for c in expr.terms.values() {
        l = l.lcm(c.denom());
    }
    let scale = |r: &Rational| (r.numer() * &l) / r.denom();
    Row {
        terms: vars
            .iter()
            .enumerate()
            .filter_map(|(j, v)| expr.terms.get(&v.name).map(|c| (j, scale(c))))
            .collect(),
        constant: scale(&expr.constant),
    }
}

const SMALL_LIMIT: i128 = 1 << 40;

fn small(b: &BigInt) -> Option<i128> {
    b.to_i128().filter(|v| v.abs() < SMALL_LIMIT)
}

fn shrink_row(r: &Row<BigInt>) -> Option<Row<i128>> {
    Some(Row {
        terms: r
            .terms
            .iter()
            .map(|(j, c)| small(c).map(|c| (*j, c)))
            .collect::<Option<_>>()?,
        constant: small(&r.constant)?,
    })
}

fn shrink(c: &Compiled<BigInt>) -> Option<Compiled<i128>> {
    if c.ranges.len() > 256 {
        return None;
    }
    Some(Compiled {
        rows: c.rows.iter().map(shrink_row).collect::<Option<_>>()?,
        objective: shrink_row(&c.objective)?,
        ranges: c
            .ranges
            .iter()
            .map(|(a, b)| Some((small(a)?, small(b)?)))
            .collect::<Option<_>>()?,
    })
}

/// Number of integer points in the box of `vars`, saturating.
pub(crate) fn grid_size(vars: &[Variable]) -> u128 {
    vars.iter()
        .map(Variable::domain_size)
        .fold(1u128, |acc, s| acc.saturating_mul(s))
}

fn check_cap(vars: &[Variable], cap: u128) -> Result<u128, SolveError> {
    let points = grid_size(vars);
    if points > cap {
        return Err(SolveError::CapExceeded { points, cap });
    }
    Ok(points)
}

fn require_integer(vars: &[Variable]) -> Result<(), SolveError> {
    if vars.iter().any(|v| v.kind != VarKind::Integer) {
        return Err(SolveError::Unsupported(
            "enumeration requires integer variables".into(),
        ));
    }
    Ok(())
}

fn compile(vars: &[Variable], objective: &LinearExpr, constraints: &[&LinearExpr]) -> Option<Compiled<BigInt>> {
    let ranges = vars
        .iter()
        .map(Variable::integer_range)
        .collect::<Option<Vec<_>>>()?;
    Some(Compiled {
        rows: constraints.iter().map(|e| scale_row(e, vars)).collect(),
        objective: scale_row(objective, vars),
        ranges,
    })
}

/// Visits every feasible point in lexicographic order with its scaled
/// objective value. The visitor returns `false` to stop early.
fn scan<T: Int>(c: &Compiled<T>, mut visit: impl FnMut(&[T], T) -> bool) {
    let n = c.ranges.len();
    let mut point: Vec<T> = c.ranges.iter().map(|(lo, _)| lo.clone()).collect();
    loop {
        if c.rows.iter().all(|r| r.eval(&point) <= T::zero()) {
            let obj = c.objective.eval(&point);
            if !visit(&point, obj) {
                return;
            }
        }
        let mut j = n;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            if point[j] < c.ranges[j].1 {
                point[j] = point[j].clone() + T::one();
                break;
            }
            point[j] = c.ranges[j].0.clone();
        }
    }
}

fn to_assignment<T: Int>(vars: &[Variable], point: &[T]) -> Assignment {
    vars.iter()
        .zip(point)
        .map(|(v, x)| (v.name.clone(), Rational::from(x.to_big())))
        .collect()
}

fn best_point<T: Int>(c: &Compiled<T>, vars: &[Variable]) -> Option<Assignment> {
    let mut best: Option<(T, Vec<T>)> = None;
    scan(c, |point, obj| {
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, point.to_vec()));
        }
        true
    });
    best.map(|(_, p)| to_assignment(vars, &p))
}

fn all_points<T: Int>(c: &Compiled<T>, vars: &[Variable]) -> Vec<Assignment> {
    let mut out = Vec::new();
    scan(c, |point, _| {
        out.push(to_assignment(vars, point));
        true
    });
    out
}

fn run<R>(
    vars: &[Variable],
    objective: &LinearExpr,
    constraints: &[&LinearExpr],
    small_path: impl FnOnce(&Compiled<i128>) -> R,
    big_path: impl FnOnce(&Compiled<BigInt>) -> R,
    empty: R,
) -> R {
    let Some(big) = compile(vars, objective, constraints) else {
        return empty;
    };
    match shrink(&big) {
        Some(s) => small_path(&s),
        None => big_path(&big),
    }
}

/// Minimizes a flat all-integer subproblem by enumeration. Errors with
/// `CapExceeded` before visiting any point when the box is larger than `cap`.
pub fn enumerate_integer(p: &Subproblem, cap: u128) -> Result<OptResult, SolveError> {
    check_parameters(p)?;
    require_integer(&p.variables)?;
    check_cap(&p.variables, cap)?;
    let cons: Vec<&LinearExpr> = p.constraints.iter().map(|c| &c.expr).collect();
    let best = run(
        &p.variables,
        &p.objective,
        &cons,
        |c| best_point(c, &p.variables),
        |c| best_point(c, &p.variables),
        None,
    );
    match best {
        None => Ok(OptResult::infeasible()),
        Some(w) => {
            let value = p.objective.evaluate(&w)?;
            Ok(OptResult::optimal(value, w))
        }
    }
}

/// Every feasible point of a flat all-integer subproblem, in lexicographic order.
pub fn feasible_points(p: &Subproblem, cap: u128) -> Result<Vec<Assignment>, SolveError> {
    check_parameters(p)?;
    require_integer(&p.variables)?;
    check_cap(&p.variables, cap)?;
    let cons: Vec<&LinearExpr> = p.constraints.iter().map(|c| &c.expr).collect();
    Ok(run(
        &p.variables,
        &p.objective,
        &cons,
        |c| all_points(c, &p.variables),
        |c| all_points(c, &p.variables),
        Vec::new(),
    ))
}

/// Every integer point of the box of `vars`, in lexicographic order.
pub fn integer_points(vars: &[Variable], cap: u128) -> Result<Vec<Assignment>, SolveError> {
    require_integer(vars)?;
    check_cap(vars, cap)?;
    Ok(run(
        vars,
        &LinearExpr::new(),
        &[],
        |c| all_points(c, vars),
        |c| all_points(c, vars),
        Vec::new(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use crate::subsolver::Status;

    fn vars() -> Vec<Variable> {
        vec![Variable::integer("a", 1, 0, 2), Variable::integer("b", 1, 0, 2)]
    }

    #[test]
    fn finds_minimum_with_lexicographic_tie_break() {
        // min -a - b s.t. a + b <= 2: optimal set {(0,2),(1,1),(2,0)}
        let p = Subproblem::new(vars(), LinearExpr::var("a").negated().with_term("b", -1))
            .with_constraint("k", LinearExpr::var("a").with_term("b", 1).with_constant(-2));
        let r = enumerate_integer(&p, 100).unwrap();
        assert_eq!(r.value, Some(Rational::from(-2)));
        let w = r.witness.unwrap();
        assert_eq!(w, Assignment::new().with("a", 0).with("b", 2));
    }

    #[test]
    fn cap_is_enforced_before_search() {
        let p = Subproblem::new(vars(), LinearExpr::var("a"));
        let err = enumerate_integer(&p, 8).unwrap_err();
        assert_eq!(err, SolveError::CapExceeded { points: 9, cap: 8 });
        assert!(err.to_string().contains("cap"));
    }

    #[test]
    fn infeasible_when_no_point_fits() {
        let p = Subproblem::new(vars(), LinearExpr::var("a"))
            .with_constraint("k", LinearExpr::constant(5).with_term("a", -1));
        assert_eq!(enumerate_integer(&p, 100).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn fractional_data_is_scaled_exactly() {
        // a/3 + b/2 >= 7/6 with min a + b
        let p = Subproblem::new(vars(), LinearExpr::var("a").with_term("b", 1))
            .with_constraint(
                "k",
                LinearExpr::constant(rat(7, 6)).with_term("a", rat(-1, 3)).with_term("b", rat(-1, 2)),
            );
        let r = enumerate_integer(&p, 100).unwrap();
        assert_eq!(r.value, Some(Rational::from(3)));
        assert_eq!(r.witness.unwrap(), Assignment::new().with("a", 1).with("b", 2));
    }

    #[test]
    fn huge_coefficients_take_the_bigint_path() {
        let big = Rational::from_integer(BigInt::from(1u64 << 62));
        let p = Subproblem::new(vars(), LinearExpr::new().with_term("a", big.clone()))
            .with_constraint("k", LinearExpr::constant(big.clone()).with_term("a", -big));
        let r = enumerate_integer(&p, 100).unwrap();
        assert_eq!(r.witness.unwrap().get("a"), Some(&Rational::one()));
    }

    #[test]
    fn feasible_points_in_order() {
        let p = Subproblem::new(vars(), LinearExpr::new())
            .with_constraint("k", LinearExpr::var("a").with_term("b", 1).with_constant(-1));
        let pts = feasible_points(&p, 100).unwrap();
        let flat: Vec<(i128, i128)> = pts
            .iter()
            .map(|a| (a.get("a").unwrap().to_i128().unwrap(), a.get("b").unwrap().to_i128().unwrap()))
            .collect();
        assert_eq!(flat, vec![(0, 0), (0, 1), (1, 0)]);
        assert_eq!(integer_points(&vars(), 100).unwrap().len(), 9);
    }
}
