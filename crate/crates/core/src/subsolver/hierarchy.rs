//! Optimal-response hierarchies solved by enumerating upper decisions.
//!
//! A hierarchy is a list of tiers, the first deciding first. Every tier but
//! the last must be pure integer, except that the first tier may also own
//! continuous variables. For fixed upper decisions, the optimal responses of
//! tiers `i..` are described by a list of [`TailClass`]es: each class fixes
//! the intermediate decisions and restricts the bottom tier by linear rows
//! (its own optimality plus the optimality of every intermediate tier), so
//! every optimization over a tail reduces to flat oracle calls.

use rayon::prelude::*;

use crate::model::{Assignment, LinearExpr, MultilevelInstance, VarKind, Variable};
use crate::rational::Rational;
use crate::reformulate::{build_adversarial, ReformulateError, Subproblem};

use super::enumerate::{feasible_points, integer_points};
use super::{solve_subproblem_with, OptResult, Oracle, SolveError, Status};

struct Tier {
    vars: Vec<Variable>,
    objective: LinearExpr,
    constraints: Vec<LinearExpr>,
}

/// Optimal responses of a tail sharing the same intermediate decisions.
#[derive(Clone)]
struct TailClass {
    /// Decisions of the intermediate tiers.
    upper: Assignment,
    /// Rows on the bottom tier, read `row <= 0` once upper decisions are substituted.
    rows: Vec<LinearExpr>,
    /// Optimal value of the bottom tier for these upper decisions.
    bottom_value: Rational,
}

/// Near-optimality robustness to enforce while solving an instance: protected
/// tiers only accept decisions whose constraints hold against every
/// near-optimal deviation of the deviating tier.
#[derive(Clone, Copy)]
pub(crate) struct RobustSpec<'a> {
    pub instance: &'a MultilevelInstance,
}

pub(crate) struct Engine<'a> {
    tiers: Vec<Tier>,
    robust: Option<RobustSpec<'a>>,
    oracle: &'a dyn Oracle,
    parallel: bool,
}

type Best = Option<(Rational, Assignment)>;

fn improves(best: &Best, value: &Rational) -> bool {
    best.as_ref().is_none_or(|(b, _)| value < b)
}

fn internal(e: ReformulateError) -> SolveError {
    SolveError::Internal(e.to_string())
}

impl<'a> Engine<'a> {
    pub(crate) fn from_subproblem(p: &Subproblem, oracle: &'a dyn Oracle) -> Self {
        let mut tiers = vec![Tier {
            vars: p.variables.clone(),
            objective: p.objective.clone(),
            constraints: p.constraints.iter().map(|c| c.expr.clone()).collect(),
        }];
        tiers.extend(p.response.iter().map(|r| Tier {
            vars: r.variables.clone(),
            objective: r.objective.clone(),
            constraints: r.constraints.iter().map(|c| c.expr.clone()).collect(),
        }));
        Engine {
            tiers,
            robust: None,
            oracle,
            parallel: false,
        }
    }

    /// Tiers are the levels `from..` of `instance`. Robustness requires `from == 0`.
    pub(crate) fn from_instance(
        instance: &'a MultilevelInstance,
        from: usize,
        robust: Option<RobustSpec<'a>>,
        oracle: &'a dyn Oracle,
    ) -> Self {
        debug_assert!(robust.is_none() || from == 0);
        let tiers = (from..instance.level_count())
            .map(|l| Tier {
                vars: instance.level_variables(l),
                objective: instance.levels[l].objective.clone(),
                constraints: instance.levels[l]
                    .constraints
                    .iter()
                    .map(|c| c.expr.clone())
                    .collect(),
            })
            .collect();
        Engine {
            tiers,
            robust,
            oracle,
            parallel: false,
        }
    }

    /// Parallelize the outermost enumeration over `config().jobs` threads.
    pub(crate) fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    fn cap(&self) -> u128 {
        self.oracle.config().oracle_cap
    }

    fn bottom(&self) -> usize {
        self.tiers.len() - 1
    }

    fn flat(
        &self,
        vars: Vec<Variable>,
        objective: &LinearExpr,
        constraints: impl IntoIterator<Item = LinearExpr>,
        frozen: &Assignment,
    ) -> Subproblem {
        let mut p = Subproblem::new(vars, objective.clone());
        for (k, e) in constraints.into_iter().enumerate() {
            p = p.with_constraint(&format!("r{k}"), e);
        }
        p.with_frozen(frozen)
    }

    fn optimum(&self, p: &Subproblem) -> Result<Best, SolveError> {
        let r = self.oracle.solve_flat(p)?;
        match r.status {
            Status::Optimal => Ok(Some((
                r.value.expect("optimal result carries a value"),
                r.witness.expect("optimal result carries a witness"),
            ))),
            Status::Infeasible => Ok(None),
            Status::Unbounded => Err(SolveError::Internal("unbounded subproblem".into())),
        }
    }

    fn bottom_optimum(&self, fixed: &Assignment) -> Result<Option<Rational>, SolveError> {
        let b = &self.tiers[self.bottom()];
        let p = self.flat(b.vars.clone(), &b.objective, b.constraints.iter().cloned(), fixed);
        Ok(self.optimum(&p)?.map(|(v, _)| v))
    }

    /// Optimal value of tier `i` and the classes of its optimal responses.
    fn classes(
        &self,
        i: usize,
        fixed: &Assignment,
    ) -> Result<Option<(Rational, Vec<TailClass>)>, SolveError> {
        if i == self.bottom() {
            return Ok(self.bottom_optimum(fixed)?.map(|v| {
                (
                    v.clone(),
                    vec![TailClass {
                        upper: Assignment::new(),
                        rows: Vec::new(),
                        bottom_value: v,
                    }],
                )
            }));
        }
        let tier = &self.tiers[i];
        if tier.vars.iter().any(|v| v.kind != VarKind::Integer) {
            return Err(SolveError::Unsupported(
                "continuous variables on an intermediate level".into(),
            ));
        }
        let mut candidates: Vec<(Rational, TailClass)> = Vec::new();
        for x in integer_points(&tier.vars, self.cap())? {
            let fixed_here = fixed.merged(&x);
            let Some((_, sub)) = self.classes(i + 1, &fixed_here)? else {
                continue;
            };
            let mut memo = RobustMemo::default();
            for c in sub {
                let x_all = fixed_here.merged(&c.upper);
                match self.robust_rows_memo(&mut memo, i, &x_all, &[])? {
                    Some(rows) if rows.is_empty() => {}
                    _ => continue,
                }
                let mut rows = c.rows.clone();
                rows.extend(tier.constraints.iter().cloned());
                if let Some((v, _)) =
                    self.class_min(&c.bottom_value, &rows, &x_all, &tier.objective, &[])?
                {
                    candidates.push((
                        v,
                        TailClass {
                            upper: x.merged(&c.upper),
                            rows,
                            bottom_value: c.bottom_value,
                        },
                    ));
                }
            }
        }
        let Some(best) = candidates.iter().map(|(v, _)| v).min().cloned() else {
            return Ok(None);
        };
        let cut = tier.objective.plus_constant(&-best.clone());
        let classes = candidates
            .into_iter()
            .filter(|(v, _)| *v == best)
            .map(|(_, mut c)| {
                c.rows.push(cut.clone());
                c
            })
            .collect();
        Ok(Some((best, classes)))
    }

    /// Minimizes `objective` over the bottom tier restricted to a class, plus
    /// the continuous upper variables `cont` when given.
    fn class_min(
        &self,
        bottom_value: &Rational,
        rows: &[LinearExpr],
        x_all: &Assignment,
        objective: &LinearExpr,
        cont: &[Variable],
    ) -> Result<Best, SolveError> {
        let b = &self.tiers[self.bottom()];
        let mut all_rows: Vec<LinearExpr> = b.constraints.clone();
        all_rows.push(b.objective.plus_constant(&-bottom_value.clone()));
        all_rows.extend(rows.iter().cloned());

        let bottom_integer = b.vars.iter().all(|v| v.kind == VarKind::Integer);
        if cont.is_empty() || b.vars.iter().all(|v| v.kind == VarKind::Continuous) {
            let mut vars = cont.to_vec();
            vars.extend(b.vars.iter().cloned());
            let p = self.flat(vars, objective, all_rows, x_all);
            return self.optimum(&p);
        }
        if !bottom_integer {
            return Err(SolveError::MixedVariables);
        }
        // integer bottom with continuous leader variables: enumerate the
        // bottom points that fit the rows free of `cont`, then solve an LP
        let touches = |e: &LinearExpr| cont.iter().any(|v| e.references(&v.name));
        let (with_cont, without): (Vec<_>, Vec<_>) = all_rows.into_iter().partition(|e| touches(e));
        let pure = self.flat(b.vars.clone(), &LinearExpr::new(), without, x_all);
        let mut best: Best = None;
        for v in feasible_points(&pure, self.cap())? {
            let frozen = x_all.merged(&v);
            let lp = self.flat(cont.to_vec(), objective, with_cont.iter().cloned(), &frozen);
            if let Some((val, w)) = self.optimum(&lp)? {
                if improves(&best, &val) {
                    best = Some((val, v.merged(&w)));
                }
            }
        }
        Ok(best)
    }

    fn deviating_optimum(&self, d: usize, x_above: &Assignment) -> Result<Option<Rational>, SolveError> {
        if d == self.bottom() {
            self.bottom_optimum(x_above)
        } else {
            Ok(self.classes(d, x_above)?.map(|(v, _)| v))
        }
    }

    fn robust_rows_memo(
        &self,
        memo: &mut RobustMemo,
        i: usize,
        x_all: &Assignment,
        cont: &[Variable],
    ) -> Result<Option<Vec<LinearExpr>>, SolveError> {
        let Some(spec) = self.robust else {
            return Ok(Some(Vec::new()));
        };
        let Some(nos) = spec.instance.nos() else {
            return Ok(Some(Vec::new()));
        };
        if !nos.protected_levels.contains(&i) {
            return Ok(Some(Vec::new()));
        }
        let key = spec.instance.prefix(x_all, nos.deviating_level);
        if let Some((k, v)) = &memo.last {
            if *k == key {
                return Ok(v.clone());
            }
        }
        let out = self.robust_rows(i, &key, cont)?;
        memo.last = Some((key, out.clone()));
        Ok(out)
    }

    /// Robustness of protected tier `i` at upper decisions `x_above`. `None`
    /// when some constraint is violated by a near-optimal deviation;
    /// otherwise rows on `cont` (continuous leader variables, which the
    /// deviating tier never sees) that must hold.
    fn robust_rows(
        &self,
        i: usize,
        x_above: &Assignment,
        cont: &[Variable],
    ) -> Result<Option<Vec<LinearExpr>>, SolveError> {
        let spec = self.robust.expect("robust_rows needs a robust spec");
        let instance = spec.instance;
        let d = instance.nos().expect("robust instance").deviating_level;
        let mut x = x_above.clone();
        for v in cont {
            x.insert(&v.name, Rational::zero());
        }
        let Some(fstar) = self.deviating_optimum(d, &x)? else {
            return Ok(None);
        };
        let mut rows = Vec::new();
        for (k, c) in instance.levels[i].constraints.iter().enumerate() {
            let adv = match build_adversarial(instance, i, k, &x, &fstar) {
                Ok(a) => a,
                Err(ReformulateError::Insensitive { .. }) => continue,
                Err(e) => return Err(internal(e)),
            };
            let r = solve_subproblem_with(self.oracle, &adv)?;
            let worst = match r.status {
                Status::Optimal => -r.value.expect("optimal result carries a value"),
                Status::Infeasible => {
                    return Err(SolveError::Internal(format!(
                        "empty near-optimal set for level {i} constraint {}",
                        c.name
                    )))
                }
                Status::Unbounded => {
                    return Err(SolveError::Internal("unbounded adversary".into()))
                }
            };
            let row = c
                .expr
                .filter_terms(|n| cont.iter().any(|v| v.name == n))
                .with_constant(worst);
            if row.is_constant() {
                if row.constant.is_positive() {
                    return Ok(None);
                }
            } else {
                rows.push(row);
            }
        }
        Ok(Some(rows))
    }

    fn top_point(&self, fixed: &Assignment, x: &Assignment, cont: &[Variable]) -> Result<Best, SolveError> {
        let top = &self.tiers[0];
        let fixed_here = fixed.merged(x);
        let Some((_, sub)) = self.classes(1, &fixed_here)? else {
            return Ok(None);
        };
        let mut memo = RobustMemo::default();
        let mut best: Best = None;
        for c in sub {
            let x_all = fixed_here.merged(&c.upper);
            let Some(robust) = self.robust_rows_memo(&mut memo, 0, &x_all, cont)? else {
                continue;
            };
            let mut rows = c.rows.clone();
            rows.extend(top.constraints.iter().cloned());
            rows.extend(robust);
            if let Some((v, w)) = self.class_min(&c.bottom_value, &rows, &x_all, &top.objective, cont)? {
                if improves(&best, &v) {
                    best = Some((v, x.merged(&c.upper).merged(&w)));
                }
            }
        }
        Ok(best)
    }

    /// Minimizes the first tier's objective over its decisions and the
    /// optimal responses of the tiers below. Ties break lexicographically on
    /// the first tier's integer variables, then the intermediate tiers, then
    /// the bottom tier.
    pub(crate) fn solve(&self, fixed: &Assignment) -> Result<OptResult, SolveError> {
        let top = &self.tiers[0];
        if self.tiers.len() == 1 {
            let p = self.flat(top.vars.clone(), &top.objective, top.constraints.iter().cloned(), fixed);
            return self.oracle.solve_flat(&p);
        }
        let (ints, cont): (Vec<Variable>, Vec<Variable>) =
            top.vars.iter().cloned().partition(|v| v.kind == VarKind::Integer);
        let points = integer_points(&ints, self.cap())?;
        let jobs = self.oracle.config().jobs;
        let results: Vec<Result<Best, SolveError>> = if self.parallel && jobs > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| SolveError::Internal(e.to_string()))?;
            pool.install(|| {
                points
                    .par_iter()
                    .map(|x| self.top_point(fixed, x, &cont))
                    .collect()
            })
        } else {
            points.iter().map(|x| self.top_point(fixed, x, &cont)).collect()
        };
        let mut best: Best = None;
        for r in results {
            if let Some((v, w)) = r? {
                if improves(&best, &v) {
                    best = Some((v, w));
                }
            }
        }
        Ok(match best {
            Some((v, w)) => OptResult::optimal(v, w),
            None => OptResult::infeasible(),
        })
    }
}

#[derive(Default)]
struct RobustMemo {
    last: Option<(Assignment, Option<Vec<LinearExpr>>)>,
}
