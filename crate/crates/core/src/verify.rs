//! Certificate verification. A candidate solution plus an optional objective
//! bound is checked by a fixed list of steps, each recorded with its evidence.
//! Every step is always evaluated so a report shows all failures, not only
//! the first.

use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::model::{Assignment, EvalError, MultilevelInstance, ProtectionMode};
use crate::rational::Rational;
use crate::reformulate::{build_adversaries, restrict_to_tail, AdversaryTarget, ReformulateError};
use crate::solve::solve_gnormp;
use crate::subsolver::{solve_hierarchical, solve_subproblem_with, OptResult, Oracle, SolveError, Status};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Reformulate(#[from] ReformulateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Candidate(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

macro_rules! upper_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }
    };
}

upper_enum!(Verdict { Pass => "PASS", Fail => "FAIL" });
upper_enum!(Overall { Accept => "ACCEPT", Reject => "REJECT" });
upper_enum!(VerifyMode { Norbip => "NORBIP", Nomimlp => "NOMIMLP", Gnormp => "GNORMP" });

impl Verdict {
    fn of(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintCheck {
    pub level: usize,
    pub name: String,
    pub value: Rational,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DomainCheck {
    pub variable: String,
    pub value: Rational,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OptimalityCheck {
    pub level: usize,
    pub candidate_value: Rational,
    pub optimum: OptResult,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdversaryEvidence {
    pub target: AdversaryTarget,
    /// `None` for a constraint no near-optimal deviation can affect.
    pub result: Option<OptResult>,
    /// Largest value of the protected expression over the near-optimal set.
    pub worst: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RobustnessCheck {
    pub target: AdversaryTarget,
    pub worst: Rational,
    pub limit: Rational,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NestedReport {
    pub level: usize,
    pub optimum: OptResult,
    pub report: Option<VerificationReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Objective {
        value: Rational,
        bound: Option<Rational>,
    },
    Domain {
        checks: Vec<DomainCheck>,
    },
    Constraints {
        checks: Vec<ConstraintCheck>,
        domain: Vec<DomainCheck>,
    },
    Optimality {
        checks: Vec<OptimalityCheck>,
    },
    Adversaries {
        fstar: Option<Rational>,
        entries: Vec<AdversaryEvidence>,
    },
    Robustness {
        checks: Vec<RobustnessCheck>,
    },
    Nested {
        reports: Vec<NestedReport>,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Step {
    pub label: String,
    pub verdict: Verdict,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub mode: VerifyMode,
    pub overall: Overall,
    pub steps: Vec<Step>,
}

impl VerificationReport {
    fn new(mode: VerifyMode, steps: Vec<Step>) -> Self {
        let overall = if steps.iter().all(|s| s.verdict == Verdict::Pass) {
            Overall::Accept
        } else {
            Overall::Reject
        };
        VerificationReport { mode, overall, steps }
    }

    pub fn accepted(&self) -> bool {
        self.overall == Overall::Accept
    }

    /// 1-based index of the first failing step.
    pub fn first_failure(&self) -> Option<usize> {
        self.steps
            .iter()
            .position(|s| s.verdict == Verdict::Fail)
            .map(|i| i + 1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

fn step(label: &str, ok: bool, evidence: Evidence) -> Step {
    Step {
        label: label.to_string(),
        verdict: Verdict::of(ok),
        evidence,
    }
}

/// Parses a candidate assignment (a JSON object from variable name to
/// rational) and checks that it names exactly the instance variables.
/// Bounds and integrality are left to the verifier.
pub fn load_candidate(instance: &MultilevelInstance, text: &str) -> Result<Assignment, VerifyError> {
    let a: Assignment = serde_json::from_str(text)
        .map_err(|e| VerifyError::Candidate(format!("candidate: {e}")))?;
    if let Some(v) = instance.variables.iter().find(|v| !a.contains(&v.name)) {
        return Err(VerifyError::Candidate(format!("missing variable {}", v.name)));
    }
    if let Some((name, _)) = a.iter().find(|(n, _)| instance.variable(n).is_none()) {
        return Err(VerifyError::Candidate(format!("unknown variable {name}")));
    }
    Ok(a)
}

fn objective_step(
    label: &str,
    instance: &MultilevelInstance,
    candidate: &Assignment,
    bound: Option<&Rational>,
) -> Result<Step, VerifyError> {
    let value = instance.levels[0].objective.evaluate(candidate)?;
    let ok = bound.is_none_or(|b| value <= *b);
    Ok(step(
        label,
        ok,
        Evidence::Objective {
            value,
            bound: bound.cloned(),
        },
    ))
}

fn domain_checks(instance: &MultilevelInstance, candidate: &Assignment, levels: &[usize]) -> Vec<DomainCheck> {
    instance
        .variables
        .iter()
        .filter(|v| levels.contains(&v.level))
        .map(|v| {
            let value = candidate.get(&v.name).cloned().unwrap_or_else(Rational::zero);
            DomainCheck {
                variable: v.name.clone(),
                holds: candidate.contains(&v.name) && v.admits(&value),
                value,
            }
        })
        .collect()
}

fn constraint_checks(
    instance: &MultilevelInstance,
    candidate: &Assignment,
    levels: &[usize],
) -> Result<Vec<ConstraintCheck>, VerifyError> {
    let mut out = Vec::new();
    for &l in levels {
        for c in &instance.levels[l].constraints {
            let value = c.expr.evaluate(candidate)?;
            out.push(ConstraintCheck {
                level: l,
                name: c.name.clone(),
                holds: !value.is_positive(),
                value,
            });
        }
    }
    Ok(out)
}

fn feasibility_step(
    label: &str,
    instance: &MultilevelInstance,
    candidate: &Assignment,
    levels: &[usize],
) -> Result<Step, VerifyError> {
    let checks = constraint_checks(instance, candidate, levels)?;
    let domain = domain_checks(instance, candidate, levels);
    let ok = checks.iter().all(|c| c.holds) && domain.iter().all(|c| c.holds);
    Ok(step(label, ok, Evidence::Constraints { checks, domain }))
}

fn optimality_check(
    instance: &MultilevelInstance,
    candidate: &Assignment,
    level: usize,
    oracle: &dyn Oracle,
) -> Result<OptimalityCheck, VerifyError> {
    let candidate_value = instance.levels[level].objective.evaluate(candidate)?;
    let optimum = solve_hierarchical(instance, candidate, level, oracle)?;
    let holds = optimum
        .value
        .as_ref()
        .is_some_and(|o| candidate_value <= *o);
    Ok(OptimalityCheck {
        level,
        candidate_value,
        optimum,
        holds,
    })
}

fn optimality_step(
    label: &str,
    instance: &MultilevelInstance,
    candidate: &Assignment,
    levels: &[usize],
    oracle: &dyn Oracle,
) -> Result<(Step, Option<Rational>), VerifyError> {
    let mut checks = Vec::new();
    for &l in levels {
        checks.push(optimality_check(instance, candidate, l, oracle)?);
    }
    let ok = checks.iter().all(|c| c.holds);
    let first_optimum = checks.first().and_then(|c| c.optimum.value.clone());
    Ok((
        step(label, ok, Evidence::Optimality { checks }),
        first_optimum,
    ))
}

/// Solves every adversary of `levels` and turns the worst cases into
/// robustness checks (constraints against 0, the objective against `bound`).
fn adversary_steps(
    labels: [&str; 2],
    instance: &MultilevelInstance,
    candidate: &Assignment,
    levels: &[usize],
    fstar: Option<Rational>,
    bound: Option<&Rational>,
    oracle: &dyn Oracle,
) -> Result<[Step; 2], VerifyError> {
    let [compute, verify] = labels;
    let Some(fstar) = fstar else {
        let reason = "deviating level has no optimal response".to_string();
        return Ok([
            step(compute, false, Evidence::Skipped { reason: reason.clone() }),
            step(verify, false, Evidence::Skipped { reason }),
        ]);
    };
    let nos = instance.nos().expect("near-optimality data checked by caller");
    let x = instance.prefix(candidate, nos.deviating_level);
    let set = build_adversaries(instance, levels, &x, &fstar)?;
    let mut entries = Vec::new();
    let mut checks = Vec::new();
    let mut solved_all = true;
    for adv in &set.entries {
        let Some(p) = &adv.subproblem else {
            // constant under deviation: its value at the candidate is the worst case
            let AdversaryTarget::Constraint { level, index, .. } = &adv.target else {
                unreachable!("objective adversaries are always built");
            };
            let worst = instance.levels[*level].constraints[*index].expr.evaluate(candidate)?;
            checks.push(RobustnessCheck {
                target: adv.target.clone(),
                holds: !worst.is_positive(),
                worst: worst.clone(),
                limit: Rational::zero(),
            });
            entries.push(AdversaryEvidence {
                target: adv.target.clone(),
                result: None,
                worst: Some(worst),
            });
            continue;
        };
        let r = solve_subproblem_with(oracle, p)?;
        let worst = (r.status == Status::Optimal).then(|| -r.value.clone().expect("optimal value"));
        solved_all &= worst.is_some();
        if let Some(w) = &worst {
            let (limit, holds) = match &adv.target {
                AdversaryTarget::Constraint { .. } => (Rational::zero(), !w.is_positive()),
                AdversaryTarget::Objective { .. } => match bound {
                    Some(b) => (b.clone(), w <= b),
                    None => (w.clone(), true),
                },
            };
            checks.push(RobustnessCheck {
                target: adv.target.clone(),
                worst: w.clone(),
                limit,
                holds,
            });
        }
        entries.push(AdversaryEvidence {
            target: adv.target.clone(),
            result: Some(r),
            worst,
        });
    }
    let robust = solved_all && checks.iter().all(|c| c.holds);
    Ok([
        step(
            compute,
            solved_all,
            Evidence::Adversaries {
                fstar: Some(fstar),
                entries,
            },
        ),
        step(verify, robust, Evidence::Robustness { checks }),
    ])
}

fn require_shape(instance: &MultilevelInstance, mode: VerifyMode) -> Result<(), VerifyError> {
    let nos = instance
        .nos()
        .ok_or_else(|| VerifyError::Unsupported("instance has no near_optimality section".into()))?;
    let n = instance.level_count();
    let ok = match mode {
        VerifyMode::Norbip => n == 2 && nos.deviating_level == 1 && nos.protected_levels.iter().eq([0usize].iter()),
        VerifyMode::Nomimlp => n >= 2 && nos.deviating_level == 1 && nos.protected_levels.iter().eq([0usize].iter()),
        VerifyMode::Gnormp => {
            n >= 2
                && nos.deviating_level == n - 1
                && nos.protected_levels.iter().copied().eq(0..n - 1)
                && nos.mode == ProtectionMode::Constraints
        }
    };
    if ok {
        Ok(())
    } else {
        Err(VerifyError::Unsupported(format!(
            "instance shape does not match {mode} verification"
        )))
    }
}

/// Verification mode matching the instance's near-optimality structure.
pub fn detect_mode(instance: &MultilevelInstance) -> Option<VerifyMode> {
    [VerifyMode::Norbip, VerifyMode::Nomimlp, VerifyMode::Gnormp]
        .into_iter()
        .find(|m| require_shape(instance, *m).is_ok())
}

/// Bilevel certificate: objective bound, upper and lower feasibility, lower
/// optimality, worst-case responses, robustness.
pub fn verify_norbip(
    instance: &MultilevelInstance,
    candidate: &Assignment,
    bound: Option<&Rational>,
    oracle: &dyn Oracle,
) -> Result<VerificationReport, VerifyError> {
    require_shape(instance, VerifyMode::Norbip)?;
    let mut steps = vec![
        objective_step(
            "Compute the upper-level objective value and verify it is within the bound",
            instance,
            candidate,
            bound,
        )?,
        feasibility_step("Verify that upper-level constraints are satisfied", instance, candidate, &[0])?,
        feasibility_step("Verify that lower-level constraints are satisfied", instance, candidate, &[1])?,
    ];
    let (opt, fstar) = optimality_step(
        "Verify optimality of v for the lower-level problem",
        instance,
        candidate,
        &[1],
        oracle,
    )?;
    steps.push(opt);
    steps.extend(adversary_steps(
        ["Compute the worst case", "Verify near-optimal robustness"],
        instance,
        candidate,
        &[0],
        fstar,
        bound,
        oracle,
    )?);
    Ok(VerificationReport::new(VerifyMode::Norbip, steps))
}

/// Multilevel certificate with the first follower deviating: objective
/// bound, integrality, optimality of the whole follower chain, worst-case
/// responses, top-level constraints under them.
pub fn verify_nomimlp(
    instance: &MultilevelInstance,
    candidate: &Assignment,
    bound: Option<&Rational>,
    oracle: &dyn Oracle,
) -> Result<VerificationReport, VerifyError> {
    require_shape(instance, VerifyMode::Nomimlp)?;
    let all: Vec<usize> = (0..instance.level_count()).collect();
    let domain = domain_checks(instance, candidate, &all);
    let integral = domain.iter().all(|c| c.holds);
    let mut steps = vec![
        objective_step(
            "Compute the objective value and verify it is within the bound",
            instance,
            candidate,
            bound,
        )?,
        step(
            "Verify variable integrality",
            integral,
            Evidence::Domain { checks: domain },
        ),
    ];
    let followers: Vec<usize> = (1..instance.level_count()).collect();
    let (mut opt, fstar) = optimality_step(
        "Solve the first lower level and verify that the lower-level solution is optimal",
        instance,
        candidate,
        &followers,
        oracle,
    )?;
    let feasible = constraint_checks(instance, candidate, &followers)?;
    if feasible.iter().any(|c| !c.holds) {
        opt.verdict = Verdict::Fail;
    }
    steps.push(opt);
    steps.extend(adversary_steps(
        [
            "Solve the adversarial problems",
            "Verify upper-level constraints at the adversarial solutions",
        ],
        instance,
        candidate,
        &[0],
        fstar,
        bound,
        oracle,
    )?);
    Ok(VerificationReport::new(VerifyMode::Nomimlp, steps))
}

/// Generalized certificate (bottom level deviating, every upper level
/// protected): objective bound, feasibility at all levels, bottom-level
/// optimality, optimality of each intermediate decision through a nested
/// report, worst-case responses, robustness of the top level.
pub fn verify_gnormp(
    instance: &MultilevelInstance,
    candidate: &Assignment,
    bound: Option<&Rational>,
    oracle: &dyn Oracle,
) -> Result<VerificationReport, VerifyError> {
    require_shape(instance, VerifyMode::Gnormp)?;
    let bottom = instance.bottom();
    let all: Vec<usize> = (0..instance.level_count()).collect();
    let mut steps = vec![
        objective_step(
            "Compute the top-level objective value and verify it is within the bound",
            instance,
            candidate,
            bound,
        )?,
        feasibility_step("Verify feasibility at all levels", instance, candidate, &all)?,
    ];
    let (opt, fstar) = optimality_step(
        "Verify optimality of v for the bottom level",
        instance,
        candidate,
        &[bottom],
        oracle,
    )?;
    steps.push(opt);

    let mut reports = Vec::new();
    for i in 1..bottom {
        let sub = restrict_to_tail(instance, candidate, i)?;
        let sub_candidate = candidate.restrict(|n| instance.level_of(n).is_some_and(|l| l >= i));
        let optimum = solve_gnormp(&sub, oracle)?;
        let report = match &optimum.value {
            Some(v) => Some(verify_gnormp(&sub, &sub_candidate, Some(v), oracle)?),
            None => None,
        };
        reports.push(NestedReport {
            level: i,
            optimum,
            report,
        });
    }
    let nested_ok = reports
        .iter()
        .all(|r| r.report.as_ref().is_some_and(VerificationReport::accepted));
    steps.push(step(
        "Verify optimality of x_(i) at each intermediate level",
        nested_ok,
        Evidence::Nested { reports },
    ));
    // deeper protected levels are covered by the nested reports
    steps.extend(adversary_steps(
        [
            "Compute the worst case",
            "Verify top-level constraints at the worst case",
        ],
        instance,
        candidate,
        &[0],
        fstar,
        bound,
        oracle,
    )?);
    Ok(VerificationReport::new(VerifyMode::Gnormp, steps))
}

/// Dispatches on [`detect_mode`].
pub fn verify(
    instance: &MultilevelInstance,
    candidate: &Assignment,
    bound: Option<&Rational>,
    oracle: &dyn Oracle,
) -> Result<VerificationReport, VerifyError> {
    match detect_mode(instance) {
        Some(VerifyMode::Norbip) => verify_norbip(instance, candidate, bound, oracle),
        Some(VerifyMode::Nomimlp) => verify_nomimlp(instance, candidate, bound, oracle),
        Some(VerifyMode::Gnormp) => verify_gnormp(instance, candidate, bound, oracle),
        None => Err(VerifyError::Unsupported(
            "no certificate procedure for this near-optimality structure".into(),
        )),
    }
}
