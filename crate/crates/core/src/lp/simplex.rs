// Indexed loops are kept in the dense kernels; iterator chains obscure
// the row/column structure.
#![allow(clippy::needless_range_loop)]

//! Dense revised simplex with an explicitly maintained basis inverse.
//!
//! General problems are brought to standard form (all variables >= 0,
//! normalized right-hand sides) by shifting or mirroring bounded variables,
//! splitting free ones and adding a row per finite upper bound. Feasibility
//! is established with a two-phase method; pricing is Dantzig's rule with a
//! permanent switch to Bland's rule once pivots stay degenerate.

use super::{LpError, LpProblem, LpSolution, LpStatus, Relation, FEASIBILITY_TOL, PIVOT_TOL};

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_BEFORE_BLAND: usize = 32;

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = y + offset
    Shifted { col: usize, offset: f64 },
    /// x = upper - y
    Mirrored { col: usize, upper: f64 },
    /// x = y_pos - y_neg
    Split { pos: usize, neg: usize },
}

struct Standard {
    /// Structural columns only; slack and artificial columns are appended
    /// by the solver.
    rows: Vec<Vec<f64>>,
    relations: Vec<Relation>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    map: Vec<VarMap>,
    n_structural: usize,
}

enum Standardized {
    Ok(Standard),
    /// A variable's bounds are contradictory.
    Infeasible,
}

fn standardize(p: &LpProblem) -> Standardized {
    let lower = p.lower_bounds();
    let upper = p.upper_bounds();

    let mut map = Vec::with_capacity(p.num_vars());
    let mut cost = Vec::new();
    // (column, rhs) for finite-width box constraints y <= u - l.
    let mut box_rows: Vec<(usize, f64)> = Vec::new();

    for j in 0..p.num_vars() {
        let (l, u) = (lower[j], upper[j]);
        if l > u {
            return Standardized::Infeasible;
        }
        let c = p.objective()[j];
        if l.is_finite() {
            let col = cost.len();
            cost.push(c);
            map.push(VarMap::Shifted { col, offset: l });
            if u.is_finite() {
                box_rows.push((col, u - l));
            }
        } else if u.is_finite() {
            let col = cost.len();
            cost.push(-c);
            map.push(VarMap::Mirrored { col, upper: u });
        } else {
            let pos = cost.len();
            cost.push(c);
            let neg = cost.len();
            cost.push(-c);
            map.push(VarMap::Split { pos, neg });
        }
    }
    let n_structural = cost.len();

    let mut rows = Vec::with_capacity(p.rows().len() + box_rows.len());
    let mut relations = Vec::with_capacity(rows.capacity());
    let mut rhs = Vec::with_capacity(rows.capacity());

    for row in p.rows() {
        let mut dense = vec![0.0; n_structural];
        let mut b = row.rhs;
        for &(var, a) in &row.terms {
            match map[var] {
                VarMap::Shifted { col, offset } => {
                    dense[col] += a;
                    b -= a * offset;
                }
                VarMap::Mirrored { col, upper } => {
                    dense[col] -= a;
                    b -= a * upper;
                }
                VarMap::Split { pos, neg } => {
                    dense[pos] += a;
                    dense[neg] -= a;
                }
            }
        }
        rows.push(dense);
        relations.push(row.relation);
        rhs.push(b);
    }
    for (col, width) in box_rows {
        let mut dense = vec![0.0; n_structural];
        dense[col] = 1.0;
        rows.push(dense);
        relations.push(Relation::Le);
        rhs.push(width);
    }

    // Normalize right-hand sides to be non-negative.
    for i in 0..rows.len() {
        if rhs[i] < 0.0 {
            rhs[i] = -rhs[i];
            for a in rows[i].iter_mut() {
                *a = -*a;
            }
            relations[i] = match relations[i] {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    Standardized::Ok(Standard {
        rows,
        relations,
        rhs,
        cost,
        map,
        n_structural,
    })
}

/// Working state: column-major matrix over structural + slack + artificial
/// columns, with an explicit basis inverse.
struct Tableau {
    cols: Vec<Vec<f64>>,
    b: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<Vec<f64>>,
    artificial_from: usize,
    iterations: usize,
    max_iterations: usize,
    degenerate_run: usize,
    use_bland: bool,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn new(std: &Standard, max_iterations: usize) -> Self {
        let m = std.rows.len();
        let mut cols: Vec<Vec<f64>> = (0..std.n_structural)
            .map(|j| (0..m).map(|i| std.rows[i][j]).collect())
            .collect();

        // One slack (Le) or surplus (Ge) column per inequality row.
        let mut slack_of_row: Vec<Option<usize>> = vec![None; m];
        for i in 0..m {
            match std.relations[i] {
                Relation::Le => {
                    let mut col = vec![0.0; m];
                    col[i] = 1.0;
                    slack_of_row[i] = Some(cols.len());
                    cols.push(col);
                }
                Relation::Ge => {
                    let mut col = vec![0.0; m];
                    col[i] = -1.0;
                    cols.push(col);
                }
                Relation::Eq => {}
            }
        }
        let artificial_from = cols.len();

        // Basis: slacks where available, artificials elsewhere.
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            match slack_of_row[i] {
                Some(col) => basis.push(col),
                None => {
                    let mut col = vec![0.0; m];
                    col[i] = 1.0;
                    basis.push(cols.len());
                    cols.push(col);
                }
            }
        }
        let mut in_basis = vec![false; cols.len()];
        for &j in &basis {
            in_basis[j] = true;
        }
        let binv = identity(m);

        Tableau {
            cols,
            b: std.rhs.clone(),
            basis,
            in_basis,
            binv,
            artificial_from,
            iterations: 0,
            max_iterations,
            degenerate_run: 0,
            use_bland: false,
        }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    fn basic_values(&self) -> Vec<f64> {
        let m = self.m();
        let mut xb = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += self.binv[i][k] * self.b[k];
            }
            xb[i] = acc;
        }
        xb
    }

    /// y = c_B^T B^{-1}
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m();
        let mut y = vec![0.0; m];
        for (i, &bi) in self.basis.iter().enumerate() {
            let cb = cost[bi];
            if cb != 0.0 {
                for k in 0..m {
                    y[k] += cb * self.binv[i][k];
                }
            }
        }
        y
    }

    fn direction(&self, col: usize) -> Vec<f64> {
        let m = self.m();
        let a = &self.cols[col];
        let mut w = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += self.binv[i][k] * a[k];
            }
            w[i] = acc;
        }
        w
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], col: usize) -> f64 {
        let mut acc = cost[col];
        for (i, a) in self.cols[col].iter().enumerate() {
            if *a != 0.0 {
                acc -= y[i] * a;
            }
        }
        acc
    }

    /// Entering column under the current pricing rule, or None at optimum.
    /// Columns at or past `bar_from` never enter.
    fn price(&self, cost: &[f64], y: &[f64], bar_from: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..bar_from.min(self.cols.len()) {
            if self.in_basis[j] {
                continue;
            }
            let d = self.reduced_cost(cost, y, j);
            if d < -PIVOT_TOL {
                if self.use_bland {
                    return Some(j);
                }
                match best {
                    Some((_, incumbent)) if d >= incumbent => {}
                    _ => best = Some((j, d)),
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// Min-ratio row for an entering direction; ties break toward the
    /// smallest basis variable index.
    fn ratio_row(&self, xb: &[f64], w: &[f64]) -> Option<usize> {
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..self.m() {
            if w[i] > PIVOT_TOL {
                let ratio = xb[i].max(0.0) / w[i];
                match pick {
                    None => pick = Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - PIVOT_TOL
                            || ((ratio - best).abs() <= PIVOT_TOL
                                && self.basis[i] < self.basis[r])
                        {
                            pick = Some((i, ratio));
                        }
                    }
                }
            }
        }
        pick.map(|(r, _)| r)
    }

    fn pivot(&mut self, entering: usize, row: usize, w: &[f64]) {
        let m = self.m();
        let wr = w[row];
        for k in 0..m {
            self.binv[row][k] /= wr;
        }
        for i in 0..m {
            if i != row && w[i].abs() > 0.0 {
                let factor = w[i];
                for k in 0..m {
                    self.binv[i][k] -= factor * self.binv[row][k];
                }
            }
        }
        self.in_basis[self.basis[row]] = false;
        self.in_basis[entering] = true;
        self.basis[row] = entering;
    }

    /// Recomputes the basis inverse from scratch (Gauss-Jordan with partial
    /// pivoting) to shed accumulated update error.
    fn refactorize(&mut self) -> Result<(), LpError> {
        let m = self.m();
        let mut work: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut row: Vec<f64> = self.basis.iter().map(|&j| self.cols[j][i]).collect();
                row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        for col in 0..m {
            let pivot_row = (col..m)
                .max_by(|&a, &b| {
                    work[a][col]
                        .abs()
                        .partial_cmp(&work[b][col].abs())
                        .unwrap()
                })
                .unwrap();
            if work[pivot_row][col].abs() <= 1e-12 {
                return Err(LpError::IterationLimit {
                    iterations: self.iterations,
                });
            }
            work.swap(col, pivot_row);
            let p = work[col][col];
            for v in work[col].iter_mut() {
                *v /= p;
            }
            for r in 0..m {
                if r != col && work[r][col] != 0.0 {
                    let f = work[r][col];
                    for k in 0..2 * m {
                        let above = work[col][k];
                        work[r][k] -= f * above;
                    }
                }
            }
        }
        for i in 0..m {
            for k in 0..m {
                self.binv[i][k] = work[i][m + k];
            }
        }
        Ok(())
    }

    /// Runs simplex iterations for the given cost vector until optimal or
    /// unbounded. Columns >= `bar_from` are barred from entering.
    fn run(&mut self, cost: &[f64], bar_from: usize) -> Result<PhaseEnd, LpError> {
        loop {
            if self.iterations > self.max_iterations {
                return Err(LpError::IterationLimit {
                    iterations: self.iterations,
                });
            }
            if self.iterations > 0 && self.iterations.is_multiple_of(REFACTOR_EVERY) {
                self.refactorize()?;
            }
            let xb = self.basic_values();
            let y = self.duals(cost);
            let entering = match self.price(cost, &y, bar_from) {
                Some(j) => j,
                None => return Ok(PhaseEnd::Optimal),
            };
            let w = self.direction(entering);
            let row = match self.ratio_row(&xb, &w) {
                Some(r) => r,
                None => return Ok(PhaseEnd::Unbounded),
            };
            let step = xb[row].max(0.0) / w[row];
            if step <= PIVOT_TOL {
                self.degenerate_run += 1;
                if self.degenerate_run >= DEGENERATE_BEFORE_BLAND {
                    self.use_bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }
            self.pivot(entering, row, &w);
            self.iterations += 1;
        }
    }

    fn is_artificial(&self, col: usize) -> bool {
        col >= self.artificial_from
    }

    /// Pivots basic artificials out after phase 1. Rows whose artificial
    /// cannot leave are linearly dependent on the rest and are dropped.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let mut redundant: Vec<usize> = Vec::new();
        for row in 0..self.m() {
            if !self.is_artificial(self.basis[row]) {
                continue;
            }
            let mut pivoted = false;
            for j in 0..self.artificial_from {
                if self.in_basis[j] {
                    continue;
                }
                let w = self.direction(j);
                if w[row].abs() > PIVOT_TOL {
                    self.pivot(j, row, &w);
                    self.iterations += 1;
                    pivoted = true;
                    break;
                }
            }
            if !pivoted {
                redundant.push(row);
            }
        }
        if redundant.is_empty() {
            return Ok(());
        }

        // Physically remove redundant rows and rebuild the inverse.
        let keep: Vec<usize> = (0..self.m()).filter(|i| !redundant.contains(i)).collect();
        for col in self.cols.iter_mut() {
            *col = keep.iter().map(|&i| col[i]).collect();
        }
        self.b = keep.iter().map(|&i| self.b[i]).collect();
        let dropped: Vec<usize> = redundant.iter().map(|&i| self.basis[i]).collect();
        for j in dropped {
            self.in_basis[j] = false;
        }
        self.basis = keep.iter().map(|&i| self.basis[i]).collect();
        let m = self.m();
        self.binv = identity(m);
        self.refactorize()
    }
}

fn identity(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| (0..m).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub(super) fn solve(problem: &LpProblem) -> Result<LpSolution, LpError> {
    let std = match standardize(problem) {
        Standardized::Ok(s) => s,
        Standardized::Infeasible => {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective_value: None,
                variable_values: None,
                iterations: 0,
            })
        }
    };

    // Unconstrained: every standard variable sits at zero unless its cost
    // pulls it up without limit.
    if std.rows.is_empty() {
        if std.cost.iter().any(|&c| c < -PIVOT_TOL) {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                objective_value: None,
                variable_values: None,
                iterations: 0,
            });
        }
        let x = recover(problem, &std, &vec![0.0; std.n_structural]);
        let objective = dot(problem.objective(), &x);
        return Ok(LpSolution {
            status: LpStatus::Optimal,
            objective_value: Some(objective),
            variable_values: Some(x),
            iterations: 0,
        });
    }

    let m = std.rows.len();
    let max_iterations = 10_000 + 50 * (m + std.n_structural);
    let mut tableau = Tableau::new(&std, max_iterations);

    // Phase 1: minimize the sum of artificials.
    if tableau.artificial_from < tableau.cols.len() {
        let mut phase1_cost = vec![0.0; tableau.cols.len()];
        for c in phase1_cost[tableau.artificial_from..].iter_mut() {
            *c = 1.0;
        }
        match tableau.run(&phase1_cost, tableau.artificial_from)? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => {
                // Phase-1 objective is bounded below by zero.
                return Err(LpError::IterationLimit {
                    iterations: tableau.iterations,
                });
            }
        }
        let infeasibility: f64 = {
            let xb = tableau.basic_values();
            tableau
                .basis
                .iter()
                .zip(&xb)
                .filter(|(&j, _)| tableau.is_artificial(j))
                .map(|(_, &v)| v.max(0.0))
                .sum()
        };
        if infeasibility > FEASIBILITY_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective_value: None,
                variable_values: None,
                iterations: tableau.iterations,
            });
        }
        tableau.drive_out_artificials()?;
    }

    // Phase 2: the real objective over non-artificial columns.
    let mut phase2_cost = vec![0.0; tableau.cols.len()];
    phase2_cost[..std.n_structural].copy_from_slice(&std.cost);
    tableau.degenerate_run = 0;
    tableau.use_bland = false;
    match tableau.run(&phase2_cost, tableau.artificial_from)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded => {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                objective_value: None,
                variable_values: None,
                iterations: tableau.iterations,
            })
        }
    }

    // Final cleanup solve of the basis system before extraction.
    tableau.refactorize()?;
    let xb = tableau.basic_values();
    let mut standard_x = vec![0.0; std.n_structural];
    for (i, &j) in tableau.basis.iter().enumerate() {
        if j < std.n_structural {
            standard_x[j] = xb[i].max(0.0);
        }
    }
    let x = recover(problem, &std, &standard_x);
    let objective = dot(problem.objective(), &x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: Some(objective),
        variable_values: Some(x),
        iterations: tableau.iterations,
    })
}

fn recover(problem: &LpProblem, std: &Standard, standard_x: &[f64]) -> Vec<f64> {
    (0..problem.num_vars())
        .map(|j| match std.map[j] {
            VarMap::Shifted { col, offset } => standard_x[col] + offset,
            VarMap::Mirrored { col, upper } => upper - standard_x[col],
            VarMap::Split { pos, neg } => standard_x[pos] - standard_x[neg],
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
