//! Linear programs for battery scheduling: epigraph reformulations of the
//! individual and coalition cost minimizations, a dense revised-simplex
//! solver, and a brute-force discretized oracle for small instances.

mod oracle;
mod simplex;

pub use oracle::{brute_force_cost, oracle_tolerance};

use crate::model::{Microgrid, Scenario, Schedule, Tariff, TimeGrid};
use thiserror::Error;

/// Zero threshold for simplex pivots.
pub const PIVOT_TOL: f64 = 1e-9;
/// Absolute tolerance for constraint satisfaction of optimal solutions.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("{what}: expected length {expected}, got {actual}")]
    Dimension {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("coalition must not be empty")]
    EmptyCoalition,
    #[error("user index {index} out of range for {count} microgrids")]
    UserIndex { index: usize, count: usize },
    #[error("simplex stalled after {iterations} iterations")]
    IterationLimit { iterations: usize },
    #[error("brute-force oracle limits exceeded: {0}")]
    OracleGuard(String),
    #[error("brute-force oracle found no feasible discretized dispatch")]
    OracleEmpty,
    #[error("solution unavailable: {0}")]
    NoSolution(String),
}

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub(crate) struct LpRow {
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear program: minimize `objective . x` subject to linear rows and
/// per-variable bounds. Variables carry names so schedules can be read back
/// out of solutions.
#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Vec<String>,
    rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with objective coefficient and inclusive bounds
    /// (use infinities for absent bounds); returns its index.
    pub fn add_var(&mut self, name: impl Into<String>, obj: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(obj);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    /// Adds a constraint row. Panics if a term references an unknown
    /// variable; repeated variables have their coefficients summed.
    pub fn add_constraint(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) {
        for &(idx, _) in terms {
            assert!(
                idx < self.objective.len(),
                "constraint references variable {idx} but only {} exist",
                self.objective.len()
            );
        }
        self.rows.push(LpRow {
            terms: terms.to_vec(),
            relation,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    pub fn var_name(&self, var: usize) -> &str {
        &self.names[var]
    }

    /// Index of the variable with the given name, if any.
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Rows as `(terms, relation, rhs)` triples, for inspection and export.
    pub fn constraints(&self) -> Vec<(&[(usize, f64)], Relation, f64)> {
        self.rows
            .iter()
            .map(|r| (r.terms.as_slice(), r.relation, r.rhs))
            .collect()
    }

    pub(crate) fn rows(&self) -> &[LpRow] {
        &self.rows
    }

    pub(crate) fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    pub(crate) fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solver outcome. `objective_value` and `variable_values` are present
/// exactly when the status is optimal.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective_value: Option<f64>,
    pub variable_values: Option<Vec<f64>>,
    pub iterations: usize,
}

impl LpSolution {
    /// Objective value of an optimal solution.
    pub fn objective(&self) -> Result<f64, LpError> {
        self.objective_value
            .ok_or_else(|| LpError::NoSolution(format!("status is {:?}", self.status)))
    }

    pub fn values(&self) -> Result<&[f64], LpError> {
        self.variable_values
            .as_deref()
            .ok_or_else(|| LpError::NoSolution(format!("status is {:?}", self.status)))
    }

    /// Value of the named variable in an optimal solution.
    pub fn value_of(&self, problem: &LpProblem, name: &str) -> Result<f64, LpError> {
        let idx = problem.var_index(name).ok_or_else(|| {
            LpError::NoSolution(format!("no variable named '{name}' in problem"))
        })?;
        Ok(self.values()?[idx])
    }
}

/// Solves the program with a dense revised simplex (two-phase, Bland's rule
/// as the anti-cycling fallback).
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    simplex::solve(problem)
}

/// Checks an optimal solution against the problem: bounds and rows within
/// [`FEASIBILITY_TOL`], objective consistent within 1e-7 relative.
pub fn check_solution(problem: &LpProblem, solution: &LpSolution) -> Result<(), LpError> {
    let x = solution.values()?;
    if x.len() != problem.num_vars() {
        return Err(LpError::Dimension {
            what: "solution values".into(),
            expected: problem.num_vars(),
            actual: x.len(),
        });
    }
    let bad = |msg: String| LpError::NoSolution(msg);
    for (j, &v) in x.iter().enumerate() {
        if v < problem.lower[j] - FEASIBILITY_TOL || v > problem.upper[j] + FEASIBILITY_TOL {
            return Err(bad(format!(
                "variable {} = {v} outside bounds [{}, {}]",
                problem.names[j], problem.lower[j], problem.upper[j]
            )));
        }
    }
    for (r, row) in problem.rows.iter().enumerate() {
        let lhs: f64 = row.terms.iter().map(|&(j, a)| a * x[j]).sum();
        let ok = match row.relation {
            Relation::Le => lhs <= row.rhs + FEASIBILITY_TOL,
            Relation::Ge => lhs >= row.rhs - FEASIBILITY_TOL,
            Relation::Eq => (lhs - row.rhs).abs() <= FEASIBILITY_TOL,
        };
        if !ok {
            return Err(bad(format!(
                "row {r} violated: lhs {lhs} vs rhs {}",
                row.rhs
            )));
        }
    }
    let obj: f64 = problem.objective.iter().zip(x).map(|(c, v)| c * v).sum();
    let reported = solution.objective()?;
    if (obj - reported).abs() > 1e-7 * reported.abs().max(1.0) {
        return Err(bad(format!(
            "objective mismatch: computed {obj}, reported {reported}"
        )));
    }
    Ok(())
}

/// Builds the epigraph LP for one user's cost minimization: variables
/// `x[t] >= 0`, dispatch/charge variables when storage is present, and a
/// scalar `z` with `z >= x[t]`; objective `sum p^t x^t + demand_charge * z`.
pub fn build_individual_lp(
    microgrid: &Microgrid,
    tariff: &Tariff,
    grid: &TimeGrid,
) -> Result<LpProblem, LpError> {
    check_dims(&[microgrid], tariff, grid)?;
    Ok(assemble_lp(&[microgrid], tariff, grid))
}

/// Builds the coalition LP: one shared aggregate draw vector, per-member
/// storage variables, shared epigraph variable.
pub fn build_coalition_lp(coalition: &[usize], scenario: &Scenario) -> Result<LpProblem, LpError> {
    let members = resolve_members(coalition, scenario)?;
    check_dims(&members, &scenario.tariff, &scenario.time_grid)?;
    Ok(assemble_lp(&members, &scenario.tariff, &scenario.time_grid))
}

/// Sorted, deduplicated member list; errors on empty or out-of-range input.
pub(crate) fn resolve_members<'a>(
    coalition: &[usize],
    scenario: &'a Scenario,
) -> Result<Vec<&'a Microgrid>, LpError> {
    if coalition.is_empty() {
        return Err(LpError::EmptyCoalition);
    }
    let mut indices = coalition.to_vec();
    indices.sort_unstable();
    indices.dedup();
    indices
        .iter()
        .map(|&i| {
            scenario.microgrids.get(i).ok_or(LpError::UserIndex {
                index: i,
                count: scenario.microgrids.len(),
            })
        })
        .collect()
}

fn check_dims(members: &[&Microgrid], tariff: &Tariff, grid: &TimeGrid) -> Result<(), LpError> {
    let t = grid.interval_count;
    if tariff.tou_prices.len() != t {
        return Err(LpError::Dimension {
            what: "tariff tou_prices".into(),
            expected: t,
            actual: tariff.tou_prices.len(),
        });
    }
    for m in members {
        if m.demand.len() != t {
            return Err(LpError::Dimension {
                what: format!("microgrid '{}' demand", m.id),
                expected: t,
                actual: m.demand.len(),
            });
        }
    }
    Ok(())
}

const INF: f64 = f64::INFINITY;

fn assemble_lp(members: &[&Microgrid], tariff: &Tariff, grid: &TimeGrid) -> LpProblem {
    let t = grid.interval_count;
    let mut lp = LpProblem::new();

    let x: Vec<usize> = (0..t)
        .map(|step| lp.add_var(format!("x[{step}]"), tariff.tou_prices[step], 0.0, INF))
        .collect();
    let z = lp.add_var("z", tariff.demand_charge, 0.0, INF);

    struct StorageVars {
        dispatch: Vec<usize>,
        charge: Vec<usize>,
    }
    let storage_vars: Vec<Option<StorageVars>> = members
        .iter()
        .map(|m| {
            m.storage.as_ref().map(|spec| {
                let dispatch = (0..t)
                    .map(|step| {
                        lp.add_var(
                            format!("e[{}][{step}]", m.id),
                            0.0,
                            spec.dispatch_min,
                            spec.dispatch_max,
                        )
                    })
                    .collect();
                let charge = (0..=t)
                    .map(|step| {
                        let (lo, hi) = match (step, spec.initial_charge) {
                            (0, Some(c0)) => (c0, c0),
                            _ => (spec.capacity_min, spec.capacity_max),
                        };
                        lp.add_var(format!("c[{}][{step}]", m.id), 0.0, lo, hi)
                    })
                    .collect();
                StorageVars { dispatch, charge }
            })
        })
        .collect();

    // Aggregate balance: x[t] + sum_n e[n][t] = sum_n d[n][t].
    for (step, &x_var) in x.iter().enumerate() {
        let mut terms = vec![(x_var, 1.0)];
        for vars in storage_vars.iter().flatten() {
            terms.push((vars.dispatch[step], 1.0));
        }
        let demand: f64 = members.iter().map(|m| m.demand[step]).sum();
        lp.add_constraint(&terms, Relation::Eq, demand);
    }
    // Epigraph: z >= x[t].
    for &x_var in &x {
        lp.add_constraint(&[(z, 1.0), (x_var, -1.0)], Relation::Ge, 0.0);
    }
    // Charge recursion and cyclic constraint per storage user.
    for vars in storage_vars.iter().flatten() {
        for step in 0..t {
            lp.add_constraint(
                &[
                    (vars.charge[step + 1], 1.0),
                    (vars.charge[step], -1.0),
                    (vars.dispatch[step], 1.0),
                ],
                Relation::Eq,
                0.0,
            );
        }
        lp.add_constraint(
            &[(vars.charge[0], 1.0), (vars.charge[t], -1.0)],
            Relation::Eq,
            0.0,
        );
    }
    lp
}

/// Reads the scheduling variables of an optimal coalition solve back into a
/// [`Schedule`]. Storage-less members get zero dispatch and charge vectors.
pub fn extract_schedule(
    problem: &LpProblem,
    solution: &LpSolution,
    scenario: &Scenario,
    coalition: &[usize],
) -> Result<Schedule, LpError> {
    let members = resolve_members(coalition, scenario)?;
    let values = solution.values()?;
    let t = scenario.time_grid.interval_count;

    let mut grid_draw = Vec::with_capacity(t);
    for step in 0..t {
        let idx = problem
            .var_index(&format!("x[{step}]"))
            .ok_or_else(|| LpError::NoSolution(format!("missing variable x[{step}]")))?;
        grid_draw.push(values[idx]);
    }

    let mut dispatch = Vec::with_capacity(members.len());
    let mut charge = Vec::with_capacity(members.len());
    for m in &members {
        if m.storage.is_some() {
            let e: Vec<f64> = (0..t)
                .map(|step| {
                    problem
                        .var_index(&format!("e[{}][{step}]", m.id))
                        .map(|idx| values[idx])
                        .ok_or_else(|| {
                            LpError::NoSolution(format!("missing dispatch variable for '{}'", m.id))
                        })
                })
                .collect::<Result<_, _>>()?;
            let c: Vec<f64> = (0..=t)
                .map(|step| {
                    problem
                        .var_index(&format!("c[{}][{step}]", m.id))
                        .map(|idx| values[idx])
                        .ok_or_else(|| {
                            LpError::NoSolution(format!("missing charge variable for '{}'", m.id))
                        })
                })
                .collect::<Result<_, _>>()?;
            dispatch.push(e);
            charge.push(c);
        } else {
            dispatch.push(vec![0.0; t]);
            charge.push(vec![0.0; t + 1]);
        }
    }

    Ok(Schedule {
        user_ids: members.iter().map(|m| m.id.clone()).collect(),
        grid_draw,
        dispatch,
        charge,
        cost: solution.objective()?,
    })
}

/// Convenience: solve a coalition's scheduling problem and return its
/// optimal cost.
pub fn coalition_cost(coalition: &[usize], scenario: &Scenario) -> Result<LpSolution, LpError> {
    let lp = build_coalition_lp(coalition, scenario)?;
    solve_lp(&lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate_cost as eval, StorageSpec};

    fn grid(t: usize) -> TimeGrid {
        TimeGrid {
            interval_count: t,
            interval_length_hours: 1.0,
        }
    }

    fn tariff(prices: &[f64], alpha: f64) -> Tariff {
        Tariff {
            tou_prices: prices.to_vec(),
            demand_charge: alpha,
        }
    }

    fn user(id: &str, demand: &[f64], storage: Option<StorageSpec>) -> Microgrid {
        Microgrid {
            id: id.into(),
            demand: demand.to_vec(),
            storage,
        }
    }

    fn storage(e: (f64, f64), c: (f64, f64)) -> StorageSpec {
        StorageSpec {
            capacity_min: c.0,
            capacity_max: c.1,
            dispatch_min: e.0,
            dispatch_max: e.1,
            initial_charge: None,
        }
    }

    fn counterexample_scenario() -> Scenario {
        Scenario {
            time_grid: grid(2),
            tariff: tariff(&[0.0, 0.0], 1.0),
            microgrids: vec![
                user("1", &[2.0, 0.0], None),
                user("2", &[1.0, 2.0], None),
                user("3", &[1.0, 3.0], None),
            ],
        }
    }

    #[test]
    fn storage_less_user_has_no_freedom() {
        let m = user("a", &[1.0, 2.0], None);
        let lp = build_individual_lp(&m, &tariff(&[1.0, 1.0], 0.0), &grid(2)).unwrap();
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective().unwrap() - 3.0).abs() < 1e-9);
        assert!((sol.value_of(&lp, "x[0]").unwrap() - 1.0).abs() < 1e-9);
        assert!((sol.value_of(&lp, "x[1]").unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn storage_shifts_half_the_peak() {
        // d = (2, 0), e in [-1, 1], c in [0, 1]: the optimal draw is (1, 1),
        // so the optimum equals demand_charge * 1.
        let m = user("a", &[2.0, 0.0], Some(storage((-1.0, 1.0), (0.0, 1.0))));
        for (alpha, expect) in [(2.0, 2.0), (1.0, 1.0)] {
            let lp = build_individual_lp(&m, &tariff(&[0.0, 0.0], alpha), &grid(2)).unwrap();
            let sol = solve_lp(&lp).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            assert!((sol.objective().unwrap() - expect).abs() < 1e-9);
            assert!((sol.value_of(&lp, "x[0]").unwrap() - 1.0).abs() < 1e-9);
            assert!((sol.value_of(&lp, "x[1]").unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn broken_storage_spec_is_infeasible() {
        // Fixed initial charge below the capacity floor empties the
        // feasible set; the builder does not re-validate model invariants.
        let mut spec = storage((-1.0, 1.0), (1.0, 2.0));
        spec.initial_charge = Some(0.0);
        let m = user("a", &[1.0, 1.0], Some(spec));
        let lp = build_individual_lp(&m, &tariff(&[1.0, 1.0], 1.0), &grid(2)).unwrap();
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn coalition_lp_counterexample_values() {
        let s = counterexample_scenario();
        let cases: [(&[usize], f64); 4] = [
            (&[0], 2.0),
            (&[0, 1], 3.0),
            (&[0, 2], 3.0),
            (&[0, 1, 2], 5.0),
        ];
        for (coalition, expect) in cases {
            let sol = coalition_cost(coalition, &s).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            assert!(
                (sol.objective().unwrap() - expect).abs() < 1e-9,
                "coalition {coalition:?}: got {}",
                sol.objective().unwrap()
            );
        }
    }

    #[test]
    fn singleton_coalition_equals_individual() {
        let s = Scenario {
            time_grid: grid(3),
            tariff: tariff(&[1.0, 2.0, 0.5], 4.0),
            microgrids: vec![user(
                "a",
                &[3.0, 1.0, 2.0],
                Some(storage((-1.5, 1.5), (0.0, 2.0))),
            )],
        };
        let coalition = solve_lp(&build_coalition_lp(&[0], &s).unwrap()).unwrap();
        let individual = solve_lp(
            &build_individual_lp(&s.microgrids[0], &s.tariff, &s.time_grid).unwrap(),
        )
        .unwrap();
        let a = coalition.objective().unwrap();
        let b = individual.objective().unwrap();
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
    }

    #[test]
    fn empty_coalition_is_rejected() {
        let s = counterexample_scenario();
        assert!(matches!(
            build_coalition_lp(&[], &s),
            Err(LpError::EmptyCoalition)
        ));
    }

    #[test]
    fn out_of_range_user_index_is_rejected() {
        let s = counterexample_scenario();
        assert!(matches!(
            build_coalition_lp(&[0, 7], &s),
            Err(LpError::UserIndex { index: 7, .. })
        ));
    }

    #[test]
    fn extracted_schedule_is_feasible_and_consistent() {
        let s = Scenario {
            time_grid: grid(3),
            tariff: tariff(&[1.0, 0.5, 2.0], 6.0),
            microgrids: vec![
                user("a", &[3.0, 0.0, 2.0], Some(storage((-1.0, 1.0), (0.0, 2.0)))),
                user("b", &[1.0, 2.0, 1.0], None),
            ],
        };
        let lp = build_coalition_lp(&[0, 1], &s).unwrap();
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        check_solution(&lp, &sol).unwrap();
        let schedule = extract_schedule(&lp, &sol, &s, &[0, 1]).unwrap();
        schedule.validate(&s).unwrap();
        let direct = eval(&schedule.grid_draw, &s.tariff).unwrap();
        let reported = sol.objective().unwrap();
        assert!((direct - reported).abs() <= 1e-6 * reported.abs().max(1.0));
    }
}
