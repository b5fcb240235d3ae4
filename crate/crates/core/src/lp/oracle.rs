//! Brute-force discretized scheduling oracle, independent of the LP path.
//!
//! Each member's dispatch is enumerated over a uniform grid per interval;
//! trajectories violating charge bounds or cyclicity by more than one grid
//! spacing are filtered out, and the billing cost of the induced aggregate
//! draw is minimized directly.

use super::{resolve_members, LpError};
use crate::model::{evaluate_cost, Microgrid, Scenario};

const MAX_INTERVALS: usize = 5;
const MAX_MEMBERS: usize = 2;
const MAX_STEPS: usize = 21;

/// Minimum coalition cost over the discretized dispatch grid.
///
/// Guard limits: at most 5 intervals, 2 members and 21 grid points per
/// interval.
pub fn brute_force_cost(
    coalition: &[usize],
    scenario: &Scenario,
    steps: usize,
) -> Result<f64, LpError> {
    let members = resolve_members(coalition, scenario)?;
    let t = scenario.time_grid.interval_count;
    if t > MAX_INTERVALS {
        return Err(LpError::OracleGuard(format!(
            "{t} intervals exceed the limit of {MAX_INTERVALS}"
        )));
    }
    if members.len() > MAX_MEMBERS {
        return Err(LpError::OracleGuard(format!(
            "{} members exceed the limit of {MAX_MEMBERS}",
            members.len()
        )));
    }
    if !(2..=MAX_STEPS).contains(&steps) {
        return Err(LpError::OracleGuard(format!(
            "steps must be in 2..={MAX_STEPS}, got {steps}"
        )));
    }

    let candidates: Vec<Vec<Vec<f64>>> = members
        .iter()
        .map(|m| feasible_dispatches(m, t, steps))
        .collect();
    if candidates.iter().any(|c| c.is_empty()) {
        return Err(LpError::OracleEmpty);
    }

    let total_demand: Vec<f64> = (0..t)
        .map(|step| members.iter().map(|m| m.demand[step]).sum())
        .collect();

    let mut best = f64::INFINITY;
    let mut draw = vec![0.0; t];
    let mut combo = vec![0usize; members.len()];
    'outer: loop {
        let mut feasible = true;
        for step in 0..t {
            let dispatched: f64 = combo
                .iter()
                .enumerate()
                .map(|(u, &k)| candidates[u][k][step])
                .sum();
            let x = total_demand[step] - dispatched;
            if x < -1e-9 {
                feasible = false;
                break;
            }
            draw[step] = x.max(0.0);
        }
        if feasible {
            let cost = evaluate_cost(&draw, &scenario.tariff).expect("dimensions checked");
            if cost < best {
                best = cost;
            }
        }
        // Advance the mixed-radix counter over candidate indices.
        for u in 0..combo.len() {
            combo[u] += 1;
            if combo[u] < candidates[u].len() {
                continue 'outer;
            }
            combo[u] = 0;
        }
        break;
    }

    if best.is_finite() {
        Ok(best)
    } else {
        Err(LpError::OracleEmpty)
    }
}

/// All grid dispatch trajectories for one member that respect charge
/// bounds and cyclicity within one grid spacing.
fn feasible_dispatches(member: &Microgrid, t: usize, steps: usize) -> Vec<Vec<f64>> {
    let spec = match &member.storage {
        Some(spec) => spec,
        None => return vec![vec![0.0; t]],
    };
    let width = spec.dispatch_max - spec.dispatch_min;
    let (points, spacing) = if width <= 0.0 {
        (vec![spec.dispatch_min], 0.0)
    } else {
        let spacing = width / (steps - 1) as f64;
        (
            (0..steps)
                .map(|k| spec.dispatch_min + spacing * k as f64)
                .collect(),
            spacing,
        )
    };
    let tol = spacing.max(1e-12);

    let mut out = Vec::new();
    let mut current = vec![0.0; t];
    enumerate(&points, &mut current, 0, &mut |dispatch| {
        if trajectory_feasible(spec, dispatch, tol) {
            out.push(dispatch.to_vec());
        }
    });
    out
}

fn enumerate(points: &[f64], current: &mut Vec<f64>, depth: usize, sink: &mut impl FnMut(&[f64])) {
    if depth == current.len() {
        sink(current);
        return;
    }
    for &p in points {
        current[depth] = p;
        enumerate(points, current, depth + 1, sink);
    }
}

fn trajectory_feasible(spec: &crate::model::StorageSpec, dispatch: &[f64], tol: f64) -> bool {
    // Cyclic charge means the dispatched energy sums to zero.
    let total: f64 = dispatch.iter().sum();
    if total.abs() > tol {
        return false;
    }
    // Prefix sums give charge relative to the initial level:
    // c_k = c_0 - prefix_k. The initial level must place every prefix
    // within the capacity band (up to the tolerance).
    let mut prefix = 0.0;
    let mut max_prefix = 0.0_f64;
    let mut min_prefix = 0.0_f64;
    for &e in dispatch {
        prefix += e;
        max_prefix = max_prefix.max(prefix);
        min_prefix = min_prefix.min(prefix);
    }
    let lo = spec.capacity_min - tol + max_prefix;
    let hi = spec.capacity_max + tol + min_prefix;
    match spec.initial_charge {
        Some(c0) => c0 >= lo && c0 <= hi,
        None => lo <= hi,
    }
}

/// The dominance slack `eps(steps)` between the LP optimum and the
/// brute-force minimum: moving each member's dispatch onto its grid shifts
/// the aggregate draw by at most the sum of grid spacings per interval.
pub fn oracle_tolerance(coalition: &[usize], scenario: &Scenario, steps: usize) -> f64 {
    let spacing_sum: f64 = coalition
        .iter()
        .filter_map(|&i| scenario.microgrids.get(i))
        .filter_map(|m| m.storage.as_ref())
        .map(|spec| (spec.dispatch_max - spec.dispatch_min).max(0.0) / (steps - 1) as f64)
        .sum();
    let tou_sum: f64 = scenario.tariff.tou_prices.iter().sum();
    spacing_sum * (scenario.tariff.demand_charge + tou_sum) + 1e-9
}
