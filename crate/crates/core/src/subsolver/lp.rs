//! Dense two-phase primal simplex over exact rationals with Bland's rule.

use crate::model::Assignment;
use crate::rational::Rational;
use crate::reformulate::Subproblem;

use super::{check_parameters, OptResult, SolveError};

struct Tableau {
    /// `rows[i]` holds the constraint coefficients followed by the right-hand side.
    rows: Vec<Vec<Rational>>,
    /// Reduced costs followed by the negated objective value.
    cost: Vec<Rational>,
    basis: Vec<usize>,
    cols: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> &Rational {
        &self.rows[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let inv = self.rows[r][c].recip();
        for v in self.rows[r].iter_mut() {
            if !v.is_zero() {
                *v *= &inv;
            }
        }
        let pivot_row = self.rows[r].clone();
        let eliminate = |row: &mut Vec<Rational>| {
            let f = row[c].clone();
            if f.is_zero() {
                return;
            }
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &(&f * p);
                }
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.cost);
        self.basis[r] = c;
    }

    /// Bland's rule: lowest-index improving column, lowest-index leaving
    /// basic variable among ratio-test ties.
    fn run(&mut self, allowed: usize) -> Outcome {
        loop {
            let Some(c) = (0..allowed).find(|&j| self.cost[j].is_negative()) else {
                return Outcome::Optimal;
            };
            let mut best: Option<(usize, Rational)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][c];
                if !a.is_positive() {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                let better = match &best {
                    None => true,
                    Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            match best {
                None => return Outcome::Unbounded,
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }
}

/// Solves the continuous relaxation of a flat subproblem (integrality is
/// ignored). Variables are shifted to `w = y - lb >= 0` and upper bounds
/// become explicit rows.
pub fn solve_lp(p: &Subproblem) -> Result<OptResult, SolveError> {
    check_parameters(p)?;
    if !p.is_flat() {
        return Err(SolveError::Unsupported("solve_lp on a subproblem with response levels".into()));
    }
    let n = p.variables.len();
    if p.variables.iter().any(|v| v.lb > v.ub) {
        return Ok(OptResult::infeasible());
    }

    // a . w <= b, one row per constraint then one per upper bound
    let mut a_rows: Vec<(Vec<Rational>, Rational)> = Vec::new();
    for c in &p.constraints {
        let coefs: Vec<Rational> = p.variables.iter().map(|v| c.expr.coefficient(&v.name)).collect();
        let mut shift = c.expr.constant.clone();
        for (a, v) in coefs.iter().zip(&p.variables) {
            shift += &(a * &v.lb);
        }
        if coefs.iter().all(Rational::is_zero) {
            if shift.is_positive() {
                return Ok(OptResult::infeasible());
            }
            continue;
        }
        a_rows.push((coefs, -shift));
    }
    for (j, v) in p.variables.iter().enumerate() {
        let mut coefs = vec![Rational::zero(); n];
        coefs[j] = Rational::one();
        a_rows.push((coefs, &v.ub - &v.lb));
    }

    let m = a_rows.len();
    let negative: Vec<usize> = (0..m).filter(|&i| a_rows[i].1.is_negative()).collect();
    let artificials = negative.len();
    let cols = n + m + artificials;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut next_art = n + m;
    for (i, (coefs, b)) in a_rows.into_iter().enumerate() {
        let mut row = vec![Rational::zero(); cols + 1];
        let flip = b.is_negative();
        let sign = if flip { Rational::from(-1) } else { Rational::one() };
        for (j, a) in coefs.into_iter().enumerate() {
            row[j] = &a * &sign;
        }
        row[n + i] = sign.clone();
        row[cols] = &b * &sign;
        if flip {
            row[next_art] = Rational::one();
            basis.push(next_art);
            next_art += 1;
        } else {
            basis.push(n + i);
        }
        rows.push(row);
    }

    let mut t = Tableau {
        rows,
        cost: vec![Rational::zero(); cols + 1],
        basis,
        cols,
    };

    if artificials > 0 {
        for j in n + m..cols {
            t.cost[j] = Rational::one();
        }
        for i in 0..m {
            if t.basis[i] >= n + m {
                let row = t.rows[i].clone();
                for (c, v) in t.cost.iter_mut().zip(&row) {
                    *c -= v;
                }
            }
        }
        if let Outcome::Unbounded = t.run(cols) {
            return Err(SolveError::Internal("phase one unbounded".into()));
        }
        if !t.cost[cols].is_zero() {
            return Ok(OptResult::infeasible());
        }
        // drive remaining artificials out of the basis; drop redundant rows
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= n + m {
                match (0..n + m).find(|&j| !t.rows[i][j].is_zero()) {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
        for row in t.rows.iter_mut() {
            for v in row[n + m..cols].iter_mut() {
                *v = Rational::zero();
            }
        }
    }

    // phase two: true objective over w (constant handled at evaluation)
    let mut cost = vec![Rational::zero(); cols + 1];
    for (j, v) in p.variables.iter().enumerate() {
        cost[j] = p.objective.coefficient(&v.name);
    }
    for i in 0..t.rows.len() {
        let cb = cost[t.basis[i]].clone();
        if cb.is_zero() {
            continue;
        }
        let row = t.rows[i].clone();
        for (c, v) in cost.iter_mut().zip(&row) {
            *c -= &(&cb * v);
        }
    }
    t.cost = cost;
    if let Outcome::Unbounded = t.run(n + m) {
        return Ok(OptResult::unbounded());
    }

    let mut w = vec![Rational::zero(); n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            w[b] = t.rows[i][cols].clone();
        }
    }
    let witness: Assignment = p
        .variables
        .iter()
        .zip(w)
        .map(|(v, wj)| (v.name.clone(), &v.lb + &wj))
        .collect();
    let value = p.objective.evaluate(&witness)?;
    Ok(OptResult::optimal(value, witness))
}
