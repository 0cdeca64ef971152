use serde::{Deserialize, Serialize};

use super::School;
use crate::error::{domain, Error, Result};

/// Tolerance for budget and compatibility-condition checks.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// Resource increments for an ordered list of schools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    increments: Vec<f64>,
    per_school_budget: f64,
    total_budget: f64,
}

impl AllocationPlan {
    /// Wraps `increments` as a plan with per-school budget `Δ`. The total
    /// budget is `N·Δ`; whether the increments actually exhaust it is left to
    /// [`check_feasibility`].
    pub fn new(increments: Vec<f64>, per_school_budget: f64) -> Result<Self> {
        check_budget(per_school_budget)?;
        if increments.is_empty() {
            return Err(domain("allocation plan needs at least one school"));
        }
        if let Some((i, x)) = increments
            .iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite() || **x < 0.0)
        {
            return Err(domain(format!(
                "increment {i} must be finite and non-negative, got {x}"
            )));
        }
        let total_budget = increments.len() as f64 * per_school_budget;
        Ok(AllocationPlan {
            increments,
            per_school_budget,
            total_budget,
        })
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn per_school_budget(&self) -> f64 {
        self.per_school_budget
    }

    pub fn total_budget(&self) -> f64 {
        self.total_budget
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Aggregate gain `Σ s_i·Δl_i`.
    pub fn objective(&self, schools: &[School]) -> f64 {
        schools
            .iter()
            .zip(&self.increments)
            .map(|(school, x)| school.s * x)
            .sum()
    }
}

fn check_budget(per_school_budget: f64) -> Result<()> {
    if !(per_school_budget.is_finite() && per_school_budget > 0.0) {
        return Err(domain(format!(
            "per-school budget must be finite and positive, got {per_school_budget}"
        )));
    }
    Ok(())
}

/// The centralized plan: every school receives `Δ`.
pub fn uniform_allocation(n_schools: usize, per_school_budget: f64) -> Result<AllocationPlan> {
    if n_schools == 0 {
        return Err(domain("uniform allocation needs at least one school"));
    }
    AllocationPlan::new(vec![per_school_budget; n_schools], per_school_budget)
}

/// The informed plan: maximizes `Σ s_i·Δl_i` subject to
///
/// - `Σ Δl_i = N·Δ`,
/// - `0 ≤ Δl_i ≤ cap`,
/// - `s_i·Δl_i ≥ s_i·Δ` for every school.
///
/// The last condition pins the box for each school: positive-`s` schools get
/// at least `Δ`, negative-`s` schools at most `Δ`, zero-`s` schools anything
/// in `[0, cap]`. With the lower bounds in place the remaining budget is a
/// continuous knapsack with unit weights, so filling schools in descending
/// `s` order up to their upper bound is optimal. Ties go to the smaller id.
/// When every school has the same `s` the objective is constant on the
/// feasible set and the uniform plan is returned.
pub fn informed_allocation(
    schools: &[School],
    per_school_budget: f64,
    cap: f64,
) -> Result<AllocationPlan> {
    check_budget(per_school_budget)?;
    if schools.is_empty() {
        return Err(domain("informed allocation needs at least one school"));
    }
    if !cap.is_finite() || cap < per_school_budget {
        return Err(domain(format!(
            "infeasible bounds: per-school cap {cap} is below the per-school budget {per_school_budget}, \
             so N·Δ exceeds N·cap"
        )));
    }
    for school in schools {
        school.validate()?;
    }

    let n = schools.len();
    let first = schools[0].s;
    if schools.iter().all(|school| school.s == first) {
        return uniform_allocation(n, per_school_budget);
    }

    let delta = per_school_budget;
    let (lower, upper): (Vec<f64>, Vec<f64>) = schools
        .iter()
        .map(|school| match school.s.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => (delta, cap),
            Some(std::cmp::Ordering::Less) => (0.0, delta),
            _ => (0.0, cap),
        })
        .unzip();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        schools[b]
            .s
            .total_cmp(&schools[a].s)
            .then(schools[a].id.cmp(&schools[b].id))
    });

    let total = n as f64 * delta;
    let mut increments = lower.clone();
    let mut remaining = total - lower.iter().sum::<f64>();
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let add = (upper[i] - increments[i]).min(remaining);
        increments[i] += add;
        remaining -= add;
    }

    // Rounding can leave a few ulps unallocated; hand them to the first
    // school in priority order that still has room.
    if remaining > 0.0 {
        if remaining > FEASIBILITY_TOLERANCE * total.max(1.0) {
            return Err(Error::Invariant(format!(
                "greedy fill left {remaining} of the budget unallocated"
            )));
        }
        if let Some(&i) = order
            .iter()
            .find(|&&i| increments[i] + remaining <= upper[i])
        {
            increments[i] += remaining;
        }
    }

    AllocationPlan::new(increments, per_school_budget)
}

/// One failed condition reported by [`check_feasibility`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// Increments do not add up to `N·Δ`.
    Budget { allocated: f64, required: f64 },
    /// `s_i·Δl_i < s_i·(ΣΔl_j / N)` for school at position `index`.
    Compatibility {
        index: usize,
        school_id: u64,
        gain: f64,
        uniform_gain: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// Checks the budget constraint and every school's compatibility condition,
/// each within [`FEASIBILITY_TOLERANCE`].
pub fn check_feasibility(plan: &AllocationPlan, schools: &[School]) -> Result<FeasibilityReport> {
    if plan.len() != schools.len() {
        return Err(domain(format!(
            "plan has {} increments but {} schools were given",
            plan.len(),
            schools.len()
        )));
    }
    let mut violations = Vec::new();
    let allocated: f64 = plan.increments().iter().sum();
    let required = plan.total_budget();
    if (allocated - required).abs() > FEASIBILITY_TOLERANCE * required.abs().max(1.0) {
        violations.push(Violation::Budget {
            allocated,
            required,
        });
    }
    let average = allocated / plan.len() as f64;
    for (index, (school, &x)) in schools.iter().zip(plan.increments()).enumerate() {
        let gain = school.s * x;
        let uniform_gain = school.s * average;
        if gain < uniform_gain - FEASIBILITY_TOLERANCE {
            violations.push(Violation::Compatibility {
                index,
                school_id: school.id,
                gain,
                uniform_gain,
            });
        }
    }
    Ok(FeasibilityReport {
        feasible: violations.is_empty(),
        violations,
    })
}
