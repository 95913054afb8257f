//! Test-only oracles. Everything here enumerates the full grid directly and
//! shares nothing with the library's solvers beyond expression evaluation.

#![allow(dead_code)]

use std::path::PathBuf;

use norobi::model::{
    parse_instance, Assignment, LevelProblem, LinearExpr, MultilevelInstance, NearOptimalitySpec,
    Variable,
};
use norobi::Rational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name)
}

pub fn fixture(name: &str) -> MultilevelInstance {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture readable");
    parse_instance(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn r(n: i64) -> Rational {
    Rational::from(n)
}

pub fn q(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

pub fn assignment(pairs: &[(&str, Rational)]) -> Assignment {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// All integer points of the box of `vars`, first variable most significant.
pub fn grid(vars: &[&Variable]) -> Vec<Assignment> {
    let mut out = vec![Assignment::new()];
    for v in vars {
        let lo = v.lb.ceil();
        let hi = v.ub.floor();
        let lo: i64 = lo.try_into().expect("small bound");
        let hi: i64 = hi.try_into().expect("small bound");
        let mut next = Vec::new();
        for a in &out {
            for k in lo..=hi {
                let mut b = a.clone();
                b.insert(&v.name, Rational::from(k));
                next.push(b);
            }
        }
        out = next;
    }
    out
}

fn value(e: &LinearExpr, a: &Assignment) -> Rational {
    e.evaluate(a).expect("complete assignment")
}

fn holds(level: &LevelProblem, a: &Assignment) -> bool {
    level.constraints.iter().all(|c| !value(&c.expr, a).is_positive())
}

fn level_vars(inst: &MultilevelInstance, l: usize) -> Vec<&Variable> {
    inst.variables.iter().filter(|v| v.level == l).collect()
}

fn union(a: &Assignment, b: &Assignment) -> Assignment {
    a.merged(b)
}

/// Brute-force reference semantics over the full joint grid.
pub struct Brute<'a> {
    pub inst: &'a MultilevelInstance,
    pub robust: bool,
}

impl<'a> Brute<'a> {
    pub fn canonical(inst: &'a MultilevelInstance) -> Self {
        Brute { inst, robust: false }
    }

    pub fn robust(inst: &'a MultilevelInstance) -> Self {
        Brute { inst, robust: true }
    }

    /// Optimal reactions of levels `i..` to `fixed`, as (value of level i,
    /// every optimal tail assignment in lexicographic order).
    pub fn reactions(&self, fixed: &Assignment, i: usize) -> Option<(Rational, Vec<Assignment>)> {
        let inst = self.inst;
        let bottom = inst.level_count() - 1;
        let mut candidates: Vec<(Rational, Assignment)> = Vec::new();
        for x in grid(&level_vars(inst, i)) {
            let here = union(fixed, &x);
            let tails = if i == bottom {
                vec![Assignment::new()]
            } else {
                match self.reactions(&here, i + 1) {
                    Some((_, t)) => t,
                    None => continue,
                }
            };
            for t in tails {
                let full = union(&here, &t);
                if !holds(&inst.levels[i], &full) {
                    continue;
                }
                if self.robust && !self.robust_at(i, &full) {
                    continue;
                }
                candidates.push((value(&inst.levels[i].objective, &full), union(&x, &t)));
            }
        }
        let best = candidates.iter().map(|(v, _)| v.clone()).min()?;
        let tails = candidates
            .into_iter()
            .filter(|(v, _)| *v == best)
            .map(|(_, a)| a)
            .collect();
        Some((best, tails))
    }

    /// Every point of the near-optimal set of the deviating level for the
    /// decisions in `full`, each with the optimal responses below it.
    pub fn near_optimal_set(&self, full: &Assignment) -> Vec<Assignment> {
        let inst = self.inst;
        let nos = inst.nos().expect("near-optimality data");
        let d = nos.deviating_level;
        let above = inst.prefix(full, d);
        let plain = Brute::canonical(inst);
        let Some((fstar, _)) = plain.reactions(&above, d) else {
            return Vec::new();
        };
        let bottom = inst.level_count() - 1;
        let mut out = Vec::new();
        for z in grid(&level_vars(inst, d)) {
            let here = union(&above, &z);
            let tails = if d == bottom {
                vec![Assignment::new()]
            } else {
                match plain.reactions(&here, d + 1) {
                    Some((_, t)) => t,
                    None => continue,
                }
            };
            for t in tails {
                let all = union(&here, &t);
                if holds(&inst.levels[d], &all)
                    && value(&inst.levels[d].objective, &all) <= &fstar + &nos.delta
                {
                    out.push(union(&z, &t));
                }
            }
        }
        out
    }

    /// Every constraint of protected level `i` holds at every near-optimal deviation.
    pub fn robust_at(&self, i: usize, full: &Assignment) -> bool {
        let inst = self.inst;
        let Some(nos) = inst.nos() else { return true };
        if !nos.protected_levels.contains(&i) {
            return true;
        }
        let above = inst.prefix(full, nos.deviating_level);
        let zs = self.near_optimal_set(full);
        if zs.is_empty() {
            return false;
        }
        zs.iter().all(|z| holds(&inst.levels[i], &union(&above, z)))
    }

    /// Top-level optimum with its lexicographically first witness.
    pub fn solve(&self) -> Option<(Rational, Assignment)> {
        let (v, tails) = self.reactions(&Assignment::new(), 0)?;
        Some((v, tails.into_iter().next().expect("nonempty")))
    }

    /// Objective-protecting variant (bilevel): min over robust leaders of the
    /// worst top objective across the near-optimal set.
    pub fn alt(&self) -> Option<Rational> {
        let inst = self.inst;
        let mut best: Option<Rational> = None;
        for x in grid(&level_vars(inst, 0)) {
            let Some((_, tails)) = Brute::canonical(inst).reactions(&x, 1) else {
                continue;
            };
            let mut feasible = false;
            for t in &tails {
                let full = union(&x, t);
                if holds(&inst.levels[0], &full) && self.robust_at(0, &full) {
                    feasible = true;
                }
            }
            if !feasible {
                continue;
            }
            let worst = self
                .near_optimal_set(&x)
                .iter()
                .map(|z| value(&inst.levels[0].objective, &union(&x, z)))
                .max()
                .expect("nonempty near-optimal set");
            if best.as_ref().is_none_or(|b| worst < *b) {
                best = Some(worst);
            }
        }
        best
    }

    /// Direct check of a bilevel certificate without a bound: domain,
    /// feasibility, lower optimality and robustness by enumerating Z.
    pub fn certificate_holds(&self, cand: &Assignment) -> bool {
        let inst = self.inst;
        if !inst
            .variables
            .iter()
            .all(|v| cand.get(&v.name).is_some_and(|x| v.admits(x)))
        {
            return false;
        }
        if !inst.levels.iter().all(|l| holds(l, cand)) {
            return false;
        }
        let x = inst.prefix(cand, 1);
        let Some((opt, _)) = Brute::canonical(inst).reactions(&x, 1) else {
            return false;
        };
        if value(&inst.levels[1].objective, cand) > opt {
            return false;
        }
        self.robust_at(0, cand)
    }
}

/// Seeded random all-integer bilevel instance: up to 3 variables per level,
/// bounds within [-2, 2], 1 to 3 upper constraints, 0 to 2 lower constraints.
pub fn random_bilevel(seed: u64) -> MultilevelInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut variables = Vec::new();
    let mut names = [Vec::new(), Vec::new()];
    for (level, prefix) in [(0usize, "x"), (1, "y")] {
        let n = rng.gen_range(1..=3);
        for j in 0..n {
            let a = rng.gen_range(-2..=2i64);
            let b = rng.gen_range(-2..=2i64);
            let name = format!("{prefix}{j}");
            variables.push(Variable::integer(&name, level, a.min(b), a.max(b)));
            names[level].push(name);
        }
    }
    let all: Vec<String> = names.concat();
    let expr = |rng: &mut ChaCha8Rng, vars: &[String], constant: (i64, i64)| {
        let mut e = LinearExpr::constant(rng.gen_range(constant.0..=constant.1));
        for v in vars {
            e.add_term(v, &Rational::from(rng.gen_range(-3..=3i64)));
        }
        e
    };
    let mut upper = LevelProblem::new(expr(&mut rng, &all, (0, 0)));
    for k in 0..rng.gen_range(1..=3) {
        let c = expr(&mut rng, &all, (-4, 1));
        upper = upper.with_constraint(&format!("G{k}"), c);
    }
    let mut lower = LevelProblem::new(expr(&mut rng, &names[1], (0, 0)));
    for k in 0..rng.gen_range(0..=2) {
        let c = expr(&mut rng, &all, (-3, 1));
        lower = lower.with_constraint(&format!("g{k}"), c);
    }
    let deltas = [q(0, 1), q(1, 2), r(1), r(2), r(3)];
    let delta = deltas[rng.gen_range(0..deltas.len())].clone();
    MultilevelInstance {
        variables,
        levels: vec![upper, lower],
        near_optimality: Some(NearOptimalitySpec::new(1, delta, &[0])),
    }
}

/// A random grid point of the instance box (integral, within bounds).
pub fn random_point(inst: &MultilevelInstance, rng: &mut ChaCha8Rng) -> Assignment {
    inst.variables
        .iter()
        .map(|v| {
            let lo: i64 = v.lb.ceil().try_into().unwrap();
            let hi: i64 = v.ub.floor().try_into().unwrap();
            (v.name.clone(), Rational::from(rng.gen_range(lo..=hi)))
        })
        .collect()
}

/// Moves one or two coordinates of `a` by +-1, staying inside the box.
pub fn perturb(inst: &MultilevelInstance, a: &Assignment, rng: &mut ChaCha8Rng) -> Assignment {
    let mut out = a.clone();
    for _ in 0..rng.gen_range(1..=2) {
        let v = &inst.variables[rng.gen_range(0..inst.variables.len())];
        let cur = out.get(&v.name).unwrap().clone();
        let step = if rng.gen_bool(0.5) { r(1) } else { r(-1) };
        let moved = &cur + &step;
        let moved = if v.admits(&moved) { moved } else { &cur - &step };
        if v.admits(&moved) {
            out.insert(&v.name, moved);
        }
    }
    out
}

/// Vertices of `{y : a_i . y <= b_i}` in the plane, by intersecting every
/// pair of boundary lines (Cramer's rule) and keeping the feasible ones.
pub fn vertices_2d(rows: &[([Rational; 2], Rational)]) -> Vec<[Rational; 2]> {
    let mut out: Vec<[Rational; 2]> = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (a, b) = (&rows[i], &rows[j]);
            let det = &a.0[0] * &b.0[1] - &a.0[1] * &b.0[0];
            if det.is_zero() {
                continue;
            }
            let y0 = (&a.1 * &b.0[1] - &a.0[1] * &b.1) / &det;
            let y1 = (&a.0[0] * &b.1 - &a.1 * &b.0[0]) / &det;
            let p = [y0, y1];
            let feasible = rows
                .iter()
                .all(|(c, rhs)| &c[0] * &p[0] + &c[1] * &p[1] <= *rhs);
            if feasible && !out.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

/// Seeded random all-integer trilevel instance with up to 2 variables per
/// level. `generalized` picks the bottom level as the deviating one with both
/// upper levels protected; otherwise the first follower deviates.
pub fn random_trilevel(seed: u64, generalized: bool) -> MultilevelInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut variables = Vec::new();
    let mut names: [Vec<String>; 3] = Default::default();
    for (level, prefix) in ["x", "y", "z"].iter().enumerate() {
        for j in 0..rng.gen_range(1..=2) {
            let name = format!("{prefix}{j}");
            variables.push(Variable::integer(&name, level, rng.gen_range(-1..=0i64), rng.gen_range(1..=2i64)));
            names[level].push(name);
        }
    }
    let expr = |rng: &mut ChaCha8Rng, vars: &[String], constant: (i64, i64)| {
        let mut e = LinearExpr::constant(rng.gen_range(constant.0..=constant.1));
        for v in vars {
            e.add_term(v, &Rational::from(rng.gen_range(-2..=2i64)));
        }
        e
    };
    let all: Vec<String> = names.concat();
    let mut levels = Vec::new();
    for level in 0..3 {
        let own: Vec<String> = names[level..].concat();
        let mut lp = LevelProblem::new(expr(&mut rng, &own, (0, 0)));
        for k in 0..rng.gen_range(0..=2) {
            let c = expr(&mut rng, &all, (-3, 1));
            lp = lp.with_constraint(&format!("c{level}_{k}"), c);
        }
        levels.push(lp);
    }
    let delta = [r(0), r(1), r(2)][rng.gen_range(0..3)].clone();
    let nos = if generalized {
        NearOptimalitySpec::new(2, delta, &[0, 1])
    } else {
        NearOptimalitySpec::new(1, delta, &[0])
    };
    MultilevelInstance {
        variables,
        levels,
        near_optimality: Some(nos),
    }
}
