//! Reformulation, subproblem oracles and solve drivers on the reference
//! fixtures. Expected values were obtained by the test-only brute force in
//! `common` or by hand enumeration of the small grids involved.

mod common;

use common::{assignment, fixture, q, r, Brute};
use norobi::model::{LevelProblem, LinearExpr, MultilevelInstance, NearOptimalitySpec, Variable};
use norobi::reformulate::{
    build_adversarial, build_adversaries, build_alt, build_gnormp_adversaries, build_pessimistic,
    cut_for_level, epigraph_form, near_optimality_cut, ReformulateError, Subproblem,
};
use norobi::solve::{
    compare, delta_sweep, solve_alt, solve_canonical, solve_gnormp, solve_norbip, solve_robust,
};
use norobi::subsolver::{
    enumerate_integer, is_totally_unimodular, solve_hierarchical, solve_lp, solve_subproblem,
    ExactOracle, SolveError, Status,
};
use norobi::Rational;

fn oracle() -> ExactOracle {
    ExactOracle::default()
}

fn value(res: &norobi::subsolver::OptResult) -> Option<Rational> {
    res.value.clone()
}

#[test]
fn epigraph_of_tu_lower_level_has_optimum_minus_three() {
    let etu = fixture("etu.json");
    let p = epigraph_form(&etu, 1, &assignment(&[("x", r(1))])).unwrap();
    let res = solve_subproblem(&p).unwrap();
    assert_eq!(res.value, Some(r(-3)));
    let w = res.witness.unwrap();
    assert_eq!((w.get("y1"), w.get("y2")), (Some(&r(1)), Some(&r(1))));
}

#[test]
fn cut_on_e1_at_x_two() {
    let e1 = fixture("e1.json");
    let x = assignment(&[("x", r(2))]);
    let lower = Subproblem::new(e1.level_variables(1), e1.levels[1].objective.clone())
        .with_constraint("g1", e1.levels[1].constraints[0].expr.clone())
        .with_frozen(&x);
    let fstar = enumerate_integer(&lower, 1000).unwrap().value.unwrap();
    assert_eq!(fstar, r(-2));
    let cut = near_optimality_cut(&e1, &x, &fstar, &r(1));
    assert_eq!(cut, LinearExpr::var("v").with_term("v", -2).with_constant(1));
    let exact = cut_for_level(&e1, 1, &x, &fstar, &r(0));
    assert_eq!(exact, LinearExpr::constant(2).with_term("v", -1));
}

#[test]
fn cut_on_tu_example() {
    let etu = fixture("etu.json");
    let cut = near_optimality_cut(&etu, &assignment(&[("x", r(1))]), &r(-3), &r(1));
    let want = LinearExpr::constant(2).with_term("y1", -2).with_term("y2", -1);
    assert_eq!(cut, want);
}

fn worst_case(inst: &MultilevelInstance, x: i64) -> (Rational, Rational) {
    let xs = assignment(&[("x", r(x))]);
    let fstar = solve_hierarchical(inst, &xs, 1, &oracle()).unwrap().value.unwrap();
    let adv = build_adversarial(inst, 0, 0, &xs, &fstar).unwrap();
    let res = solve_subproblem(&adv).unwrap();
    (res.witness.unwrap().get("v").unwrap().clone(), -res.value.unwrap())
}

#[test]
fn e1_adversary_at_x_two_is_satisfied() {
    assert_eq!(worst_case(&fixture("e1.json"), 2), (r(1), r(0)));
}

#[test]
fn e1_adversary_at_x_one_is_violated() {
    assert_eq!(worst_case(&fixture("e1.json"), 1), (r(0), r(1)));
}

#[test]
fn tu_adversary_has_fractional_witness() {
    let etu = fixture("etu.json");
    let adv = build_adversarial(&etu, 0, 0, &assignment(&[("x", r(1))]), &r(-3)).unwrap();
    let res = solve_subproblem(&adv).unwrap();
    assert_eq!(-res.value.unwrap(), q(-1, 10));
    let w = res.witness.unwrap();
    assert_eq!((w.get("y1").unwrap(), w.get("y2").unwrap()), (&q(1, 2), &r(1)));
}

#[test]
fn alt_of_e1() {
    let e1 = fixture("e1.json");
    let alt = build_alt(&e1).unwrap();
    assert_eq!(alt.levels[0].objective, LinearExpr::var("tau"));
    let bound = alt.levels[0].constraints.last().unwrap();
    assert_eq!(bound.expr, LinearExpr::var("x").with_term("v", 1).with_term("tau", -1));
    let res = solve_alt(&e1, &oracle()).unwrap();
    assert_eq!(res.value, Some(r(4)));
    assert_eq!(res.witness.unwrap(), assignment(&[("x", r(2)), ("v", r(2))]));
}

#[test]
fn alt_with_constant_objective_returns_the_constant() {
    let mut e1 = fixture("e1.json");
    e1.levels[0].objective = LinearExpr::constant(7);
    assert_eq!(solve_alt(&e1, &oracle()).unwrap().value, Some(r(7)));
}

#[test]
fn pessimistic_is_zero_tolerance() {
    let e1 = fixture("e1.json");
    let p = build_pessimistic(&e1).unwrap();
    assert_eq!(p.nos().unwrap().delta, r(0));
    // Unique lower optimum at every x: pessimistic equals optimistic.
    let pess = solve_robust(&p, &oracle()).unwrap();
    let opt = solve_canonical(&e1, &oracle()).unwrap();
    assert_eq!(pess.value, opt.value);
}

#[test]
fn gnormp_adversaries_degenerate_to_bilevel() {
    let e1 = fixture("e1.json");
    let x = assignment(&[("x", r(2))]);
    let a = build_gnormp_adversaries(&e1, &x, &r(-2)).unwrap();
    let b = build_adversaries(&e1, &[0], &x, &r(-2)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.built().next().unwrap().1, &build_adversarial(&e1, 0, 0, &x, &r(-2)).unwrap());
}

#[test]
fn gnormp_adversaries_on_g4_match_manifest() {
    let g4 = fixture("g4.json");
    let text = std::fs::read_to_string(common::fixture_path("g4.manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    let x = assignment(&[("x1", r(1)), ("x2", r(1))]);
    let set = build_gnormp_adversaries(&g4, &x, &r(-2)).unwrap();
    assert_eq!(set.len(), 2);
    for (target, p) in set.built() {
        let worst = -solve_subproblem(p).unwrap().value.unwrap();
        let name = target.label();
        let key = name.rsplit(' ').next().unwrap();
        let want: Rational = manifest["adversaries_at_gnormp_witness"][key]
            .as_str()
            .unwrap_or_else(|| panic!("manifest has no entry for {name}"))
            .parse()
            .unwrap();
        assert_eq!(worst, want, "{name}");
    }
}

#[test]
fn insensitive_upper_constraints_yield_no_adversary() {
    let mut g4 = fixture("g4.json");
    g4.levels[1].constraints[0].expr = LinearExpr::var("x2").with_term("x1", -1).with_constant(-1);
    let set = build_gnormp_adversaries(&g4, &assignment(&[("x1", r(1)), ("x2", r(1))]), &r(-2)).unwrap();
    assert_eq!(set.built().filter(|(t, _)| t.level() == 1).count(), 0);
    let err = build_adversarial(&g4, 1, 0, &assignment(&[("x1", r(1)), ("x2", r(1))]), &r(-2));
    assert!(matches!(err, Err(ReformulateError::Insensitive { .. })));
}

fn box2(objective: LinearExpr) -> Subproblem {
    Subproblem::new(
        vec![Variable::continuous("y1", 1, 0, 1), Variable::continuous("y2", 1, 0, 1)],
        objective,
    )
}

#[test]
fn lp_examples() {
    let p = box2(LinearExpr::new().with_term("y1", -2).with_term("y2", -1));
    let res = solve_lp(&p).unwrap();
    assert_eq!(res.value, Some(r(-3)));
    assert_eq!(res.witness.unwrap(), assignment(&[("y1", r(1)), ("y2", r(1))]));

    let cut = box2(LinearExpr::var("y1"))
        .with_constraint("cut", LinearExpr::constant(2).with_term("y1", -2).with_term("y2", -1));
    let res = solve_lp(&cut).unwrap();
    assert_eq!(res.value, Some(q(1, 2)));
    assert_eq!(res.witness.unwrap(), assignment(&[("y1", q(1, 2)), ("y2", r(1))]));

    let flat = box2(LinearExpr::new());
    assert_eq!(solve_lp(&flat).unwrap().value, Some(r(0)));
}

#[test]
fn enumeration_examples() {
    let empty = Subproblem::new(vec![Variable::integer("y", 1, 0, 1)], LinearExpr::var("y"))
        .with_constraint("c", LinearExpr::var("y").with_constant(1));
    assert_eq!(enumerate_integer(&empty, 100).unwrap().status, Status::Infeasible);

    let ties = Subproblem::new(
        vec![Variable::integer("a", 1, 0, 1), Variable::integer("b", 1, 0, 1)],
        LinearExpr::new(),
    );
    let res = enumerate_integer(&ties, 100).unwrap();
    assert_eq!(res.witness.unwrap(), assignment(&[("a", r(0)), ("b", r(0))]));

    let big = Subproblem::new(
        (0..4).map(|i| Variable::integer(&format!("z{i}"), 1, 0, 99)).collect(),
        LinearExpr::new(),
    );
    let err = enumerate_integer(&big, 1000).unwrap_err();
    assert!(matches!(err, SolveError::CapExceeded { .. }));
    assert!(err.to_string().contains("instance too large for oracle"));
}

#[test]
fn dispatch_follows_variable_kinds() {
    let cont = box2(LinearExpr::var("y1"));
    assert_eq!(solve_subproblem(&cont).unwrap(), solve_lp(&cont).unwrap());
    let int = Subproblem::new(vec![Variable::integer("y", 1, -1, 3)], LinearExpr::var("y"));
    assert_eq!(solve_subproblem(&int).unwrap(), enumerate_integer(&int, 100).unwrap());
    let mixed = Subproblem::new(
        vec![Variable::integer("a", 1, 0, 1), Variable::continuous("b", 1, 0, 1)],
        LinearExpr::var("a"),
    );
    assert_eq!(solve_subproblem(&mixed).unwrap_err(), SolveError::MixedVariables);
}

#[test]
fn hierarchical_tail_of_e3() {
    let e3 = fixture("e3.json");
    let res = solve_hierarchical(&e3, &assignment(&[("x", r(2))]), 1, &oracle()).unwrap();
    assert_eq!(res.value, Some(r(-2)));
    assert_eq!(res.witness.unwrap(), assignment(&[("y1", r(2)), ("y2", r(2))]));
}

#[test]
fn hierarchical_single_level_matches_flat_solve() {
    let e1 = fixture("e1.json");
    let x = assignment(&[("x", r(1))]);
    let tail = solve_hierarchical(&e1, &x, 1, &oracle()).unwrap();
    let flat = Subproblem::new(e1.level_variables(1), e1.levels[1].objective.clone())
        .with_constraint("g1", e1.levels[1].constraints[0].expr.clone())
        .with_frozen(&x);
    assert_eq!(tail, solve_subproblem(&flat).unwrap());
}

#[test]
fn hierarchical_contradictory_tail_is_infeasible() {
    let mut e3 = fixture("e3.json");
    e3.levels[2].constraints.push(norobi::model::Constraint::new(
        "never",
        LinearExpr::constant(1),
    ));
    let res = solve_hierarchical(&e3, &assignment(&[("x", r(2))]), 1, &oracle()).unwrap();
    assert_eq!(res.status, Status::Infeasible);
}

#[test]
fn tu_examples() {
    let id = vec![vec![r(1), r(0)], vec![r(0), r(1)]];
    assert_eq!(is_totally_unimodular(&id), Some(true));
    let m = vec![vec![r(1), r(1)], vec![r(-1), r(1)]];
    assert_eq!(is_totally_unimodular(&m), Some(false));
}

#[test]
fn canonical_examples() {
    let e1 = fixture("e1.json");
    let res = solve_canonical(&e1, &oracle()).unwrap();
    assert_eq!(res.value, Some(r(2)));
    assert_eq!(res.witness.unwrap(), assignment(&[("x", r(1)), ("v", r(1))]));

    let e3 = fixture("e3.json");
    let res = solve_canonical(&e3, &oracle()).unwrap();
    assert_eq!(res.value, Some(r(3)));
    assert_eq!(res.witness.unwrap(), assignment(&[("x", r(1)), ("y1", r(1)), ("y2", r(1))]));

    let mut never = e1.clone();
    never.levels[0].constraints.push(norobi::model::Constraint::new("c", LinearExpr::var("x").with_constant(1)));
    assert_eq!(solve_canonical(&never, &oracle()).unwrap().status, Status::Infeasible);
}

#[test]
fn norbip_examples() {
    let e1 = fixture("e1.json");
    let res = solve_norbip(&e1, &oracle()).unwrap();
    assert_eq!(res.value, Some(r(4)));
    assert_eq!(res.witness.unwrap(), assignment(&[("x", r(2)), ("v", r(2))]));
    assert_eq!(solve_norbip(&e1.with_delta(r(0)), &oracle()).unwrap().value, Some(r(2)));

    let e3 = fixture("e3.json");
    let res = solve_robust(&e3, &oracle()).unwrap();
    assert_eq!(res.value, Some(r(6)));
    assert_eq!(res.witness.unwrap(), assignment(&[("x", r(2)), ("y1", r(2)), ("y2", r(2))]));
}

#[test]
fn norbip_requires_first_follower_deviation() {
    let g4 = fixture("g4.json");
    assert!(matches!(solve_norbip(&g4, &oracle()), Err(SolveError::InvalidInput(_))));
    let e3 = fixture("e3.json");
    assert!(matches!(solve_gnormp(&e3, &oracle()), Err(SolveError::InvalidInput(_))));
}

#[test]
fn gnormp_examples() {
    let e1 = fixture("e1.json");
    assert_eq!(solve_gnormp(&e1, &oracle()).unwrap().value, Some(r(4)));

    let g4 = fixture("g4.json");
    let res = solve_gnormp(&g4, &oracle()).unwrap();
    assert_eq!(Some(res.value.clone().unwrap()), Brute::robust(&g4).solve().map(|s| s.0));
    assert_eq!(res.value, Some(r(-1)));

    // Bottom objective -y has a unique optimum at every node.
    let zero = g4.with_delta(r(0));
    assert_eq!(
        solve_gnormp(&zero, &oracle()).unwrap().value,
        solve_canonical(&g4, &oracle()).unwrap().value
    );
}

#[test]
fn compare_examples() {
    let e1 = fixture("e1.json");
    let c = compare(&e1, &oracle()).unwrap();
    assert_eq!(
        (value(&c.canonical), value(&c.robust), c.alt.as_ref().and_then(value)),
        (Some(r(2)), Some(r(4)), Some(r(4)))
    );
    let c = compare(&e1.with_delta(r(0)), &oracle()).unwrap();
    assert_eq!(
        (value(&c.canonical), value(&c.robust), c.alt.as_ref().and_then(value)),
        (Some(r(2)), Some(r(2)), Some(r(2)))
    );
    let tight = fixture("e1_infeasible.json");
    let c = compare(&tight, &oracle()).unwrap();
    assert_eq!(c.canonical.status, Status::Optimal);
    assert_eq!(c.robust.status, Status::Infeasible);
}

#[test]
fn compare_omits_alt_without_single_protected_top() {
    let g4 = fixture("g4.json");
    assert!(compare(&g4, &oracle()).unwrap().alt.is_none());
}

#[test]
fn sweep_examples() {
    let e1 = fixture("e1.json");
    let sweep = delta_sweep(&e1, &[r(0), r(1), r(2)], &oracle()).unwrap();
    let values: Vec<_> = sweep.iter().map(|p| value(&p.result)).collect();
    assert_eq!(values, vec![Some(r(2)), Some(r(4)), None]);
    assert_eq!(sweep[2].result.status, Status::Infeasible);

    let single = delta_sweep(&e1, &[r(1)], &oracle()).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].result, solve_norbip(&e1, &oracle()).unwrap());

    assert!(matches!(delta_sweep(&e1, &[r(1), r(1)], &oracle()), Err(SolveError::InvalidInput(_))));
    assert!(matches!(delta_sweep(&e1, &[r(-1)], &oracle()), Err(SolveError::InvalidInput(_))));
}

#[test]
fn sweep_is_constant_without_sensitive_constraints() {
    let inst = MultilevelInstance {
        variables: vec![Variable::integer("x", 0, 0, 2), Variable::integer("y", 1, 0, 2)],
        levels: vec![
            LevelProblem::new(LinearExpr::var("x").with_term("y", 1))
                .with_constraint("c", LinearExpr::constant(1).with_term("x", -1)),
            LevelProblem::new(LinearExpr::var("y"))
                .with_constraint("g", LinearExpr::var("x").with_term("y", -1)),
        ],
        near_optimality: Some(NearOptimalitySpec::new(1, r(0), &[0])),
    };
    let canonical = solve_canonical(&inst, &oracle()).unwrap().value;
    let sweep = delta_sweep(&inst, &[r(0), q(1, 2), r(1), r(2)], &oracle()).unwrap();
    assert!(sweep.iter().all(|p| p.result.value == canonical));
}

#[test]
fn parallel_jobs_do_not_change_results() {
    let mut cfg = oracle().config;
    cfg.jobs = 4;
    let par = ExactOracle::new(cfg);
    for seed in 0..20 {
        let inst = common::random_bilevel(seed);
        assert_eq!(
            solve_robust(&inst, &oracle()).unwrap(),
            solve_robust(&inst, &par).unwrap(),
            "seed {seed}"
        );
        assert_eq!(
            solve_canonical(&inst, &oracle()).unwrap(),
            solve_canonical(&inst, &par).unwrap(),
            "seed {seed}"
        );
    }
}

#[test]
fn solver_witnesses_are_lexicographically_first_optima() {
    for seed in 200..240 {
        let inst = common::random_bilevel(seed);
        let got = solve_canonical(&inst, &oracle()).unwrap();
        let want = Brute::canonical(&inst).solve();
        assert_eq!((got.value, got.witness), want.map(|(v, w)| (Some(v), Some(w))).unwrap_or_default(), "seed {seed}");
        let got = solve_robust(&inst, &oracle()).unwrap();
        let want = Brute::robust(&inst).solve();
        assert_eq!((got.value, got.witness), want.map(|(v, w)| (Some(v), Some(w))).unwrap_or_default(), "seed {seed}");
    }
}

#[test]
fn trilevel_solvers_agree_with_brute_force() {
    let mut separated = [0, 0];
    for seed in 0..60 {
        for generalized in [false, true] {
            let inst = common::random_trilevel(seed, generalized);
            let canonical = solve_canonical(&inst, &oracle()).unwrap();
            let robust = solve_robust(&inst, &oracle()).unwrap();
            let want_canonical = Brute::canonical(&inst).solve();
            let want_robust = Brute::robust(&inst).solve();
            assert_eq!(canonical.value, want_canonical.map(|s| s.0), "seed {seed} canonical");
            assert_eq!(robust.value, want_robust.map(|s| s.0), "seed {seed} generalized {generalized}");
            if robust.value != canonical.value {
                separated[generalized as usize] += 1;
            }
        }
    }
    // The sample must exercise robustness, not only coincide with the canonical optimum.
    assert!(separated.iter().all(|&n| n >= 4), "{separated:?}");
}
