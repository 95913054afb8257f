//! Solve drivers: canonical (optimistic), near-optimal robust, the
//! objective-protecting variant, comparisons and tolerance sweeps.

use serde::Serialize;

use crate::model::{MultilevelInstance, ProtectionMode};
use crate::rational::Rational;
use crate::reformulate::build_alt;
use crate::subsolver::{Engine, OptResult, Oracle, RobustSpec, SolveError, Status};

fn require_nos(instance: &MultilevelInstance) -> Result<(), SolveError> {
    match instance.nos() {
        Some(_) => Ok(()),
        None => Err(SolveError::InvalidInput(
            "instance has no near_optimality section".into(),
        )),
    }
}

/// Optimistic optimum: every follower responds optimally, ties broken in
/// favour of the leader. Near-optimality data is ignored.
pub fn solve_canonical(instance: &MultilevelInstance, oracle: &dyn Oracle) -> Result<OptResult, SolveError> {
    Engine::from_instance(instance, 0, None, oracle)
        .parallel(true)
        .solve(&Default::default())
}

/// Near-optimal robust optimum for any admissible near-optimality structure,
/// protecting constraints only.
fn solve_robust_constraints(instance: &MultilevelInstance, oracle: &dyn Oracle) -> Result<OptResult, SolveError> {
    Engine::from_instance(instance, 0, Some(RobustSpec { instance }), oracle)
        .parallel(true)
        .solve(&Default::default())
}

/// Near-optimal robust optimum. In objective-protecting mode this is the
/// optimum of the objective-bound variant.
pub fn solve_robust(instance: &MultilevelInstance, oracle: &dyn Oracle) -> Result<OptResult, SolveError> {
    require_nos(instance)?;
    if instance.nos().is_some_and(|n| n.mode == ProtectionMode::ConstraintsAndObjective) {
        solve_alt(instance, oracle)
    } else {
        solve_robust_constraints(instance, oracle)
    }
}

/// Near-optimal robust optimum when the first follower deviates and the top
/// level is protected (bilevel or deeper).
pub fn solve_norbip(instance: &MultilevelInstance, oracle: &dyn Oracle) -> Result<OptResult, SolveError> {
    require_nos(instance)?;
    let nos = instance.nos().expect("checked");
    if nos.deviating_level != 1 || !nos.protected_levels.iter().eq([0usize].iter()) {
        return Err(SolveError::InvalidInput(
            "expected deviating_level 1 and protected_levels [0]".into(),
        ));
    }
    solve_robust(instance, oracle)
}

/// Generalized near-optimal robust optimum: the bottom level deviates and
/// every upper level is protected.
pub fn solve_gnormp(instance: &MultilevelInstance, oracle: &dyn Oracle) -> Result<OptResult, SolveError> {
    require_nos(instance)?;
    let nos = instance.nos().expect("checked");
    let n = instance.level_count();
    if nos.deviating_level != n - 1 || !nos.protected_levels.iter().copied().eq(0..n - 1) {
        return Err(SolveError::InvalidInput(
            "expected the bottom level deviating and every upper level protected".into(),
        ));
    }
    solve_robust(instance, oracle)
}

/// Objective-protecting variant: minimizes a bound on the top objective that
/// holds for every near-optimal response. The bound variable is removed from
/// the witness.
pub fn solve_alt(instance: &MultilevelInstance, oracle: &dyn Oracle) -> Result<OptResult, SolveError> {
    let alt = build_alt(instance).map_err(|e| SolveError::InvalidInput(e.to_string()))?;
    let tau = alt
        .variables
        .last()
        .expect("build_alt appends the bound variable")
        .name
        .clone();
    let mut r = solve_robust_constraints(&alt, oracle)?;
    if let Some(w) = r.witness.as_mut() {
        *w = w.without(&tau);
    }
    Ok(r)
}

/// Canonical, robust and objective-protecting results side by side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Comparison {
    pub canonical: OptResult,
    pub robust: OptResult,
    /// Only available when the top level is the single protected level.
    pub alt: Option<OptResult>,
}

/// `true` when `a <= b` in the order where infeasible is +infinity.
fn not_above(a: &OptResult, b: &OptResult) -> bool {
    match (a.status, b.status) {
        (_, Status::Infeasible) => true,
        (Status::Infeasible, _) => false,
        (Status::Optimal, Status::Optimal) => a.value <= b.value,
        _ => true,
    }
}

/// Solves the three problems and checks `canonical <= robust <= alt`.
/// A violated ordering is an internal error.
pub fn compare(instance: &MultilevelInstance, oracle: &dyn Oracle) -> Result<Comparison, SolveError> {
    require_nos(instance)?;
    let mut constraints_only = instance.clone();
    if let Some(n) = constraints_only.near_optimality.as_mut() {
        n.mode = ProtectionMode::Constraints;
    }
    let canonical = solve_canonical(instance, oracle)?;
    let robust = solve_robust_constraints(&constraints_only, oracle)?;
    let alt = match build_alt(instance) {
        Ok(_) => Some(solve_alt(instance, oracle)?),
        Err(_) => None,
    };
    if !not_above(&canonical, &robust) || alt.as_ref().is_some_and(|a| !not_above(&robust, a)) {
        return Err(SolveError::Internal(
            "optimal values violate canonical <= robust <= objective-protecting".into(),
        ));
    }
    Ok(Comparison {
        canonical,
        robust,
        alt,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepPoint {
    pub delta: Rational,
    #[serde(flatten)]
    pub result: OptResult,
}

/// Robust optimum for each tolerance. Tolerances must be nonnegative and
/// strictly increasing.
pub fn delta_sweep(
    instance: &MultilevelInstance,
    deltas: &[Rational],
    oracle: &dyn Oracle,
) -> Result<Vec<SweepPoint>, SolveError> {
    require_nos(instance)?;
    if let Some(d) = deltas.iter().find(|d| d.is_negative()) {
        return Err(SolveError::InvalidInput(format!("negative tolerance {d}")));
    }
    if deltas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SolveError::InvalidInput(
            "tolerances must be strictly increasing".into(),
        ));
    }
    deltas
        .iter()
        .map(|d| {
            Ok(SweepPoint {
                delta: d.clone(),
                result: solve_robust(&instance.with_delta(d.clone()), oracle)?,
            })
        })
        .collect()
}

/// Canonical optimum without near-optimality data, robust optimum otherwise.
pub fn solve_auto(instance: &MultilevelInstance, oracle: &dyn Oracle) -> Result<OptResult, SolveError> {
    if instance.nos().is_some() {
        solve_robust(instance, oracle)
    } else {
        solve_canonical(instance, oracle)
    }
}
