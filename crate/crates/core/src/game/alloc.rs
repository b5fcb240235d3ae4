//! Cost allocation: the Shapley distribution, core membership checks, and
//! the min-spread fair allocation drawn from the core.

use super::{core_slack_tolerance, CoalitionId, GameError, GameTable};
use crate::game::{build_game_table, MAX_USERS};
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation};
use crate::model::Scenario;

/// Singleton values at or below this threshold have no meaningful
/// percentage saving; their ratio constraints are replaced by cost bounds.
const DEGENERATE_SINGLETON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationMethod {
    Shapley,
    FairLp,
}

impl AllocationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AllocationMethod::Shapley => "shapley",
            AllocationMethod::FairLp => "fair_lp",
        }
    }
}

/// Percentage-saving spread statistics of a fair allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairnessStats {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub delta: f64,
}

/// One violated core inequality: the coalition pays more together than alone.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreViolation {
    pub coalition: CoalitionId,
    /// Sum of allocated costs over the coalition's members.
    pub allocated: f64,
    /// The coalition's stand-alone cost `v(S)`.
    pub standalone: f64,
}

impl CoreViolation {
    pub fn excess(&self) -> f64 {
        self.allocated - self.standalone
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoreStatus {
    InCore,
    Violated(Vec<CoreViolation>),
}

impl CoreStatus {
    pub fn is_in_core(&self) -> bool {
        matches!(self, CoreStatus::InCore)
    }
}

/// A per-user cost vector with its method and stability metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub costs: Vec<f64>,
    pub method: AllocationMethod,
    pub fairness: Option<FairnessStats>,
    pub core_status: CoreStatus,
}

impl Allocation {
    pub fn total(&self) -> f64 {
        self.costs.iter().sum()
    }
}

/// The Shapley cost distribution: each user's average marginal contribution
/// over all join orders, with `v(empty) = 0`.
pub fn shapley(table: &GameTable) -> Allocation {
    let n = table.user_count();
    let factorials: Vec<f64> = {
        let mut f = vec![1.0; n + 1];
        for k in 1..=n {
            f[k] = f[k - 1] * k as f64;
        }
        f
    };
    let full = CoalitionId::grand(n).mask();
    let values = table.values();

    let mut costs = vec![0.0; n];
    for (user, cost) in costs.iter_mut().enumerate() {
        let bit = 1u32 << user;
        let mut acc = 0.0;
        let mut mask = 0u32;
        loop {
            if mask & bit == 0 {
                let size = mask.count_ones() as usize;
                let weight = factorials[size] * factorials[n - size - 1];
                acc += weight * (values[(mask | bit) as usize] - values[mask as usize]);
            }
            if mask == full {
                break;
            }
            mask += 1;
        }
        *cost = acc / factorials[n];
    }

    let core_status = is_in_core(&costs, table);
    Allocation {
        costs,
        method: AllocationMethod::Shapley,
        fairness: None,
        core_status,
    }
}

/// Checks the core conditions: efficiency within relative tolerance and no
/// proper coalition charged above its stand-alone cost (plus slack).
pub fn is_in_core(costs: &[f64], table: &GameTable) -> CoreStatus {
    let n = table.user_count();
    debug_assert_eq!(costs.len(), n);
    let mut violations = Vec::new();

    let grand = CoalitionId::grand(n);
    let total: f64 = costs.iter().sum();
    let grand_value = table.grand_value();
    if (total - grand_value).abs() > core_slack_tolerance(grand_value) {
        violations.push(CoreViolation {
            coalition: grand,
            allocated: total,
            standalone: grand_value,
        });
    }

    for coalition in table.coalitions() {
        if coalition == grand {
            continue;
        }
        let allocated: f64 = coalition.members().iter().map(|&i| costs[i]).sum();
        let standalone = table.get(coalition);
        if allocated > standalone + core_slack_tolerance(standalone) {
            violations.push(CoreViolation {
                coalition,
                allocated,
                standalone,
            });
        }
    }

    if violations.is_empty() {
        CoreStatus::InCore
    } else {
        CoreStatus::Violated(violations)
    }
}

/// Variable layout of the fairness LP.
struct FairVars {
    psi: Vec<usize>,
    lambda_min: usize,
    lambda_max: usize,
}

/// Builds the fairness LP over the currently active core constraints.
/// Stage 1 minimizes the saving spread; stage 2 pins the spread and
/// minimizes the largest saving rate.
fn build_fair_lp(table: &GameTable, active: &[u32], stage2_delta: Option<f64>) -> (LpProblem, FairVars) {
    let n = table.user_count();
    let inf = f64::INFINITY;
    let mut lp = LpProblem::new();

    let psi: Vec<usize> = (0..n)
        .map(|i| {
            let v1 = table.singleton_value(i);
            if v1 <= DEGENERATE_SINGLETON {
                lp.add_var(format!("psi[{i}]"), 0.0, 0.0, v1.max(0.0))
            } else {
                lp.add_var(format!("psi[{i}]"), 0.0, -inf, inf)
            }
        })
        .collect();
    // Stage 1 minimizes lambda_max - lambda_min; stage 2 minimizes
    // lambda_max alone with the spread pinned.
    let stage1 = stage2_delta.is_none();
    let lambda_min = lp.add_var("lambda_min", if stage1 { -1.0 } else { 0.0 }, -inf, inf);
    let lambda_max = lp.add_var("lambda_max", 1.0, -inf, inf);
    if let Some(delta) = stage2_delta {
        lp.add_constraint(
            &[(lambda_max, 1.0), (lambda_min, -1.0)],
            Relation::Eq,
            delta,
        );
    }

    // Efficiency over the grand coalition.
    let grand_terms: Vec<(usize, f64)> = psi.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(&grand_terms, Relation::Eq, table.grand_value());

    // Active core inequalities.
    for &mask in active {
        let coalition = CoalitionId::from_mask(mask);
        let terms: Vec<(usize, f64)> = coalition.members().iter().map(|&i| (psi[i], 1.0)).collect();
        lp.add_constraint(&terms, Relation::Le, table.get(coalition));
    }

    // Percentage-saving sandwich per non-degenerate user:
    // lambda_min <= (v_n - psi_n)/v_n <= lambda_max.
    let mut any_ratio = false;
    for (i, &psi_var) in psi.iter().enumerate() {
        let v1 = table.singleton_value(i);
        if v1 <= DEGENERATE_SINGLETON {
            continue;
        }
        any_ratio = true;
        lp.add_constraint(&[(psi_var, 1.0 / v1), (lambda_min, 1.0)], Relation::Le, 1.0);
        lp.add_constraint(&[(psi_var, 1.0 / v1), (lambda_max, 1.0)], Relation::Ge, 1.0);
    }
    if !any_ratio {
        // Every user degenerate: pin the spread to zero.
        lp.add_constraint(&[(lambda_min, 1.0)], Relation::Eq, 0.0);
        lp.add_constraint(&[(lambda_max, 1.0)], Relation::Eq, 0.0);
    }

    (
        lp,
        FairVars {
            psi,
            lambda_min,
            lambda_max,
        },
    )
}

struct FairSolve {
    costs: Vec<f64>,
    lambda_min: f64,
    lambda_max: f64,
}

/// Solves one fairness stage with lazy generation of core constraints:
/// start from the singletons, repeatedly add the most violated coalition
/// inequality until the full core holds.
fn solve_fair_stage(
    table: &GameTable,
    active: &mut Vec<u32>,
    stage2_delta: Option<f64>,
) -> Result<FairSolve, GameError> {
    let n = table.user_count();
    let grand_mask = CoalitionId::grand(n).mask();
    loop {
        let (lp, vars) = build_fair_lp(table, active, stage2_delta);
        let solution = solve_lp(&lp)?;
        match solution.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(GameError::EmptyCore),
            LpStatus::Unbounded => {
                return Err(GameError::InvalidTable(
                    "fairness program unbounded; table values are inconsistent".into(),
                ))
            }
        }
        let values = solution.values()?;
        let costs: Vec<f64> = vars.psi.iter().map(|&v| values[v]).collect();

        // Separation: find the proper coalition whose inequality is most
        // violated by the current candidate.
        let mut worst: Option<(u32, f64)> = None;
        for mask in 1..grand_mask {
            let coalition = CoalitionId::from_mask(mask);
            let allocated: f64 = coalition.members().iter().map(|&i| costs[i]).sum();
            let standalone = table.get(coalition);
            let violation = allocated - standalone;
            if violation > 1e-9 * standalone.abs().max(1.0) {
                match worst {
                    Some((_, top)) if violation <= top => {}
                    _ => worst = Some((mask, violation)),
                }
            }
        }
        match worst {
            Some((mask, _)) if !active.contains(&mask) => active.push(mask),
            Some((mask, violation)) => {
                // An already-active row reported as violated means the
                // solver could not satisfy it; give up honestly.
                return Err(GameError::InvalidTable(format!(
                    "core row {mask:#b} still violated by {violation} after activation"
                )));
            }
            None => {
                return Ok(FairSolve {
                    costs,
                    lambda_min: values[vars.lambda_min],
                    lambda_max: values[vars.lambda_max],
                });
            }
        }
    }
}

/// The fair stable allocation: minimize the spread between the highest and
/// lowest percentage cost saving subject to all core constraints, then
/// break ties by minimizing the largest saving rate at the optimal spread.
pub fn fair_core_allocation(table: &GameTable) -> Result<Allocation, GameError> {
    let n = table.user_count();
    let mut active: Vec<u32> = (0..n)
        .map(|i| CoalitionId::singleton(i).mask())
        .filter(|&mask| mask != CoalitionId::grand(n).mask())
        .collect();

    let stage1 = solve_fair_stage(table, &mut active, None)?;
    let delta = stage1.lambda_max - stage1.lambda_min;
    let stage2 = solve_fair_stage(table, &mut active, Some(delta))?;

    let core_status = is_in_core(&stage2.costs, table);
    Ok(Allocation {
        costs: stage2.costs,
        method: AllocationMethod::FairLp,
        fairness: Some(FairnessStats {
            lambda_min: stage2.lambda_min,
            lambda_max: stage2.lambda_max,
            delta: stage2.lambda_max - stage2.lambda_min,
        }),
        core_status,
    })
}

/// Builds the game table and allocates its grand-coalition cost: Shapley
/// when the user count stays at or below `skip_shapley_above` and the
/// Shapley distribution is stable, otherwise the fair core allocation.
pub fn allocate(
    scenario: &Scenario,
    skip_shapley_above: usize,
) -> Result<(GameTable, Allocation), GameError> {
    let table = build_game_table(scenario)?;
    let allocation = allocate_from_table(&table, skip_shapley_above)?;
    Ok((table, allocation))
}

/// Allocation policy on a pre-built table; see [`allocate`].
pub fn allocate_from_table(
    table: &GameTable,
    skip_shapley_above: usize,
) -> Result<Allocation, GameError> {
    if table.user_count() > MAX_USERS {
        return Err(GameError::TooManyUsers {
            count: table.user_count(),
            max: MAX_USERS,
        });
    }
    if table.user_count() <= skip_shapley_above {
        let candidate = shapley(table);
        if candidate.core_status.is_in_core() {
            return Ok(candidate);
        }
    }
    fair_core_allocation(table)
}
