//! The coalition cost game: table construction from coalition scheduling
//! solves, structural checks (sub-additivity, submodularity), Shapley and
//! core computations, and the fair stable allocation.

mod alloc;

pub use alloc::{
    allocate, allocate_from_table, fair_core_allocation, is_in_core, shapley, Allocation,
    AllocationMethod, CoreStatus, CoreViolation, FairnessStats,
};

use crate::lp::{self, LpError, LpStatus};
use crate::model::Scenario;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Hard cap on exhaustive coalition enumeration (2^N solves).
pub const MAX_USERS: usize = 20;

/// Relative tolerance for game-value comparisons.
pub const VALUE_TOL: f64 = 1e-6;

/// Additive slack allowed on a core inequality with right-hand side `v`.
pub fn core_slack_tolerance(standalone: f64) -> f64 {
    VALUE_TOL * standalone.abs().max(1.0)
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("{count} users exceed the enumeration cap of {max}")]
    TooManyUsers { count: usize, max: usize },
    #[error("coalition {coalition:?} has an infeasible scheduling problem")]
    InfeasibleCoalition { coalition: Vec<usize> },
    #[error("coalition {coalition:?} has an unbounded scheduling problem")]
    UnboundedCoalition { coalition: Vec<usize> },
    #[error("game table is missing coalition {coalition:?}")]
    MissingCoalition { coalition: Vec<usize> },
    #[error("invalid game table: {0}")]
    InvalidTable(String),
    #[error("no allocation satisfies the core constraints (empty core)")]
    EmptyCore,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// A coalition as a bitmask over user indices `0..N-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoalitionId(u32);

impl CoalitionId {
    pub const EMPTY: CoalitionId = CoalitionId(0);

    pub fn from_mask(mask: u32) -> Self {
        CoalitionId(mask)
    }

    pub fn from_members(members: &[usize]) -> Self {
        let mut mask = 0u32;
        for &i in members {
            assert!(i < 32, "user index {i} out of bitmask range");
            mask |= 1 << i;
        }
        CoalitionId(mask)
    }

    pub fn singleton(user: usize) -> Self {
        Self::from_members(&[user])
    }

    /// The coalition of all `user_count` users.
    pub fn grand(user_count: usize) -> Self {
        assert!(user_count <= 32);
        if user_count == 32 {
            CoalitionId(u32::MAX)
        } else {
            CoalitionId((1u32 << user_count) - 1)
        }
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, user: usize) -> bool {
        user < 32 && self.0 & (1 << user) != 0
    }

    pub fn with(self, user: usize) -> Self {
        assert!(user < 32);
        CoalitionId(self.0 | (1 << user))
    }

    pub fn is_disjoint(self, other: CoalitionId) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_subset_of(self, other: CoalitionId) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: CoalitionId) -> Self {
        CoalitionId(self.0 | other.0)
    }

    pub fn members(self) -> Vec<usize> {
        (0..32).filter(|&i| self.contains(i)).collect()
    }

    /// Human-readable label using the given user ids, e.g. `{a,b}`.
    pub fn label(self, ids: &[String]) -> String {
        let names: Vec<&str> = self
            .members()
            .into_iter()
            .map(|i| ids.get(i).map(|s| s.as_str()).unwrap_or("?"))
            .collect();
        format!("{{{}}}", names.join(","))
    }
}

/// Optimal coalition costs `v(S)` for every nonempty coalition, stored
/// densely by bitmask with `v(empty) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTable {
    user_count: usize,
    values: Vec<f64>,
}

impl GameTable {
    /// Builds a table from values indexed by coalition mask. The vector
    /// must have `2^user_count` entries and a zero entry at index 0.
    pub fn new(user_count: usize, values: Vec<f64>) -> Result<Self, GameError> {
        if user_count == 0 || user_count > MAX_USERS {
            return Err(GameError::TooManyUsers {
                count: user_count,
                max: MAX_USERS,
            });
        }
        if values.len() != 1 << user_count {
            return Err(GameError::InvalidTable(format!(
                "expected {} entries, got {}",
                1usize << user_count,
                values.len()
            )));
        }
        if values[0] != 0.0 {
            return Err(GameError::InvalidTable(
                "the empty coalition must have value 0".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GameError::InvalidTable("values must be finite".into()));
        }
        Ok(GameTable { user_count, values })
    }

    /// Builds a table from explicit (coalition, cost) entries, verifying
    /// completeness over all nonempty coalitions.
    pub fn from_entries(
        user_count: usize,
        entries: &[(CoalitionId, f64)],
    ) -> Result<Self, GameError> {
        if user_count == 0 || user_count > MAX_USERS {
            return Err(GameError::TooManyUsers {
                count: user_count,
                max: MAX_USERS,
            });
        }
        let size = 1usize << user_count;
        let mut values = vec![f64::NAN; size];
        values[0] = 0.0;
        for &(coalition, cost) in entries {
            let mask = coalition.mask() as usize;
            if coalition.is_empty() || mask >= size {
                return Err(GameError::InvalidTable(format!(
                    "coalition mask {mask:#b} out of range for {user_count} users"
                )));
            }
            if !values[mask].is_nan() {
                return Err(GameError::InvalidTable(format!(
                    "duplicate entry for coalition {:?}",
                    coalition.members()
                )));
            }
            values[mask] = cost;
        }
        if let Some(mask) = (1..size).find(|&m| values[m].is_nan()) {
            return Err(GameError::MissingCoalition {
                coalition: CoalitionId::from_mask(mask as u32).members(),
            });
        }
        GameTable::new(user_count, values)
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn get(&self, coalition: CoalitionId) -> f64 {
        self.values[coalition.mask() as usize]
    }

    pub fn grand_value(&self) -> f64 {
        self.get(CoalitionId::grand(self.user_count))
    }

    pub fn singleton_value(&self, user: usize) -> f64 {
        self.get(CoalitionId::singleton(user))
    }

    /// Nonempty coalitions in ascending mask order.
    pub fn coalitions(&self) -> impl Iterator<Item = CoalitionId> + '_ {
        (1..1u32 << self.user_count).map(CoalitionId::from_mask)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Solves the coalition scheduling problem for every nonempty coalition.
/// With the `parallel` feature the solves run data-parallel under rayon.
pub fn build_game_table(scenario: &Scenario) -> Result<GameTable, GameError> {
    let n = check_user_cap(scenario)?;
    #[cfg(feature = "parallel")]
    let solved: Result<Vec<f64>, GameError> = (1..1u32 << n)
        .into_par_iter()
        .map(|mask| solve_coalition_value(scenario, mask))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let solved: Result<Vec<f64>, GameError> = (1..1u32 << n)
        .map(|mask| solve_coalition_value(scenario, mask))
        .collect();
    assemble_table(n, solved?)
}

/// Sequential fallback for [`build_game_table`]; always available so the two
/// paths can be compared directly.
pub fn build_game_table_sequential(scenario: &Scenario) -> Result<GameTable, GameError> {
    let n = check_user_cap(scenario)?;
    let solved: Result<Vec<f64>, GameError> = (1..1u32 << n)
        .map(|mask| solve_coalition_value(scenario, mask))
        .collect();
    assemble_table(n, solved?)
}

fn check_user_cap(scenario: &Scenario) -> Result<usize, GameError> {
    let n = scenario.user_count();
    if n > MAX_USERS {
        return Err(GameError::TooManyUsers {
            count: n,
            max: MAX_USERS,
        });
    }
    Ok(n)
}

fn assemble_table(n: usize, solved: Vec<f64>) -> Result<GameTable, GameError> {
    let mut values = vec![0.0; 1 << n];
    for (mask, value) in (1..1u32 << n).zip(solved) {
        values[mask as usize] = value;
    }
    GameTable::new(n, values)
}

fn solve_coalition_value(scenario: &Scenario, mask: u32) -> Result<f64, GameError> {
    let coalition = CoalitionId::from_mask(mask);
    let members = coalition.members();
    let lp = lp::build_coalition_lp(&members, scenario)?;
    let solution = lp::solve_lp(&lp)?;
    match solution.status {
        LpStatus::Optimal => Ok(solution.objective()?),
        LpStatus::Infeasible => Err(GameError::InfeasibleCoalition { coalition: members }),
        LpStatus::Unbounded => Err(GameError::UnboundedCoalition { coalition: members }),
    }
}

/// A disjoint pair with `v(S u T) > v(S) + v(T)` beyond tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SubadditivityViolation {
    pub s: CoalitionId,
    pub t: CoalitionId,
    pub excess: f64,
}

/// All disjoint pairs violating sub-additivity; empty for tables built from
/// coalition scheduling optima.
pub fn check_subadditivity(table: &GameTable) -> Vec<SubadditivityViolation> {
    let n = table.user_count();
    let full = CoalitionId::grand(n).mask();
    let mut violations = Vec::new();
    for s_mask in 1..=full {
        let complement = full & !s_mask;
        // Enumerate nonempty submasks of the complement above s to visit
        // each unordered pair once.
        let mut t_mask = complement;
        while t_mask > 0 {
            if t_mask > s_mask {
                let split = table.values[s_mask as usize] + table.values[t_mask as usize];
                let union = table.values[(s_mask | t_mask) as usize];
                if union > split + VALUE_TOL * split.abs() {
                    violations.push(SubadditivityViolation {
                        s: CoalitionId::from_mask(s_mask),
                        t: CoalitionId::from_mask(t_mask),
                        excess: union - split,
                    });
                }
            }
            t_mask = (t_mask - 1) & complement;
        }
    }
    violations
}

/// A triple `(S, T, i)` with `S subset T` where the marginal contribution of
/// `i` to `S` is smaller than to `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmodularityViolation {
    pub smaller: CoalitionId,
    pub larger: CoalitionId,
    pub user: usize,
    /// `v(S u {i}) - v(S)`
    pub small_margin: f64,
    /// `v(T u {i}) - v(T)`
    pub large_margin: f64,
}

/// All `(S subset T subset N \ {i}, i)` where the marginal-contribution
/// inequality fails by more than the relative tolerance. The empty coalition
/// participates with `v(empty) = 0`.
pub fn check_submodularity(table: &GameTable) -> Vec<SubmodularityViolation> {
    let n = table.user_count();
    let full = CoalitionId::grand(n).mask();
    let mut violations = Vec::new();
    for user in 0..n {
        let bit = 1u32 << user;
        let rest = full & !bit;
        let mut t_mask = rest;
        loop {
            let large_margin =
                table.values[(t_mask | bit) as usize] - table.values[t_mask as usize];
            let mut s_mask = t_mask;
            loop {
                if s_mask != t_mask {
                    let small_margin =
                        table.values[(s_mask | bit) as usize] - table.values[s_mask as usize];
                    let tol = VALUE_TOL * small_margin.abs().max(large_margin.abs()).max(1.0);
                    if small_margin < large_margin - tol {
                        violations.push(SubmodularityViolation {
                            smaller: CoalitionId::from_mask(s_mask),
                            larger: CoalitionId::from_mask(t_mask),
                            user,
                            small_margin,
                            large_margin,
                        });
                    }
                }
                if s_mask == 0 {
                    break;
                }
                s_mask = (s_mask - 1) & t_mask;
            }
            if t_mask == 0 {
                break;
            }
            t_mask = (t_mask - 1) & rest;
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Microgrid, Tariff, TimeGrid};

    pub(crate) fn counterexample_scenario() -> Scenario {
        Scenario {
            time_grid: TimeGrid {
                interval_count: 2,
                interval_length_hours: 1.0,
            },
            tariff: Tariff {
                tou_prices: vec![0.0, 0.0],
                demand_charge: 1.0,
            },
            microgrids: vec![
                Microgrid {
                    id: "1".into(),
                    demand: vec![2.0, 0.0],
                    storage: None,
                },
                Microgrid {
                    id: "2".into(),
                    demand: vec![1.0, 2.0],
                    storage: None,
                },
                Microgrid {
                    id: "3".into(),
                    demand: vec![1.0, 3.0],
                    storage: None,
                },
            ],
        }
    }

    pub(crate) fn unstable_cost_table() -> GameTable {
        let entries = [
            (CoalitionId::from_members(&[0]), 25522.0),
            (CoalitionId::from_members(&[1]), 20399.0),
            (CoalitionId::from_members(&[2]), 21510.0),
            (CoalitionId::from_members(&[0, 1]), 45806.0),
            (CoalitionId::from_members(&[0, 2]), 45851.0),
            (CoalitionId::from_members(&[1, 2]), 41587.0),
            (CoalitionId::from_members(&[0, 1, 2]), 66174.0),
        ];
        GameTable::from_entries(3, &entries).unwrap()
    }

    #[test]
    fn counterexample_game_values() {
        let table = build_game_table(&counterexample_scenario()).unwrap();
        let v = |members: &[usize]| table.get(CoalitionId::from_members(members));
        assert!((v(&[0]) - 2.0).abs() < 1e-9);
        assert!((v(&[0, 1]) - 3.0).abs() < 1e-9);
        assert!((v(&[0, 2]) - 3.0).abs() < 1e-9);
        assert!((v(&[0, 1, 2]) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn sequential_and_default_builds_agree() {
        let s = counterexample_scenario();
        let a = build_game_table(&s).unwrap();
        let b = build_game_table_sequential(&s).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn single_user_table_is_direct_cost() {
        let mut s = counterexample_scenario();
        s.microgrids.truncate(1);
        let table = build_game_table(&s).unwrap();
        let direct = crate::model::evaluate_cost(&s.microgrids[0].demand, &s.tariff).unwrap();
        assert!((table.grand_value() - direct).abs() < 1e-9);
    }

    #[test]
    fn aligned_peaks_make_an_additive_pair() {
        let s = Scenario {
            time_grid: TimeGrid {
                interval_count: 2,
                interval_length_hours: 1.0,
            },
            tariff: Tariff {
                tou_prices: vec![1.0, 1.0],
                demand_charge: 1.0,
            },
            microgrids: vec![
                Microgrid {
                    id: "a".into(),
                    demand: vec![1.0, 0.0],
                    storage: None,
                },
                Microgrid {
                    id: "b".into(),
                    demand: vec![1.0, 0.0],
                    storage: None,
                },
            ],
        };
        let table = build_game_table(&s).unwrap();
        assert!((table.singleton_value(0) - 2.0).abs() < 1e-9);
        assert!((table.singleton_value(1) - 2.0).abs() < 1e-9);
        assert!((table.grand_value() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_coalition_is_named() {
        let mut s = counterexample_scenario();
        s.microgrids[1].storage = Some(crate::model::StorageSpec {
            capacity_min: 1.0,
            capacity_max: 2.0,
            dispatch_min: -1.0,
            dispatch_max: 1.0,
            initial_charge: Some(0.0), // outside capacity band
        });
        match build_game_table(&s) {
            Err(GameError::InfeasibleCoalition { coalition }) => {
                assert!(coalition.contains(&1));
            }
            other => panic!("expected infeasible coalition, got {other:?}"),
        }
    }

    #[test]
    fn user_cap_is_enforced() {
        let grid = TimeGrid {
            interval_count: 1,
            interval_length_hours: 1.0,
        };
        let s = Scenario {
            time_grid: grid,
            tariff: Tariff {
                tou_prices: vec![1.0],
                demand_charge: 0.0,
            },
            microgrids: (0..MAX_USERS + 1)
                .map(|i| Microgrid {
                    id: format!("u{i}"),
                    demand: vec![1.0],
                    storage: None,
                })
                .collect(),
        };
        assert!(matches!(
            build_game_table(&s),
            Err(GameError::TooManyUsers { .. })
        ));
    }

    #[test]
    fn subadditivity_holds_on_fixtures() {
        assert!(check_subadditivity(&build_game_table(&counterexample_scenario()).unwrap()).is_empty());
        assert!(check_subadditivity(&unstable_cost_table()).is_empty());
    }

    #[test]
    fn constructed_subadditivity_violation_is_found() {
        let table = GameTable::new(2, vec![0.0, 1.0, 1.0, 3.0]).unwrap();
        let violations = check_subadditivity(&table);
        assert_eq!(violations.len(), 1);
        assert!((violations[0].excess - 1.0).abs() < 1e-12);
    }

    #[test]
    fn counterexample_submodularity_violation() {
        let table = build_game_table(&counterexample_scenario()).unwrap();
        let violations = check_submodularity(&table);
        let expected = violations.iter().find(|v| {
            v.smaller == CoalitionId::from_members(&[0])
                && v.larger == CoalitionId::from_members(&[0, 1])
                && v.user == 2
        });
        let hit = expected.expect("the (S={1}, T={1,2}, i=3) violation");
        assert!((hit.small_margin - 1.0).abs() < 1e-9);
        assert!((hit.large_margin - 2.0).abs() < 1e-9);
    }

    #[test]
    fn additive_tables_are_submodular() {
        // v(S) = sum of per-user weights.
        let weights = [2.0, 5.0, 1.5];
        let values: Vec<f64> = (0u32..8)
            .map(|mask| {
                (0..3)
                    .filter(|&i| mask & (1 << i) != 0)
                    .map(|i| weights[i])
                    .sum()
            })
            .collect();
        let table = GameTable::new(3, values).unwrap();
        assert!(check_submodularity(&table).is_empty());
        assert!(check_subadditivity(&table).is_empty());
    }

    #[test]
    fn unstable_table_submodularity_margins() {
        let violations = check_submodularity(&unstable_cost_table());
        let hit = violations
            .iter()
            .find(|v| {
                v.smaller == CoalitionId::from_members(&[0])
                    && v.larger == CoalitionId::from_members(&[0, 1])
                    && v.user == 2
            })
            .expect("the unstable table's (S={1}, T={1,2}, i=3) violation");
        assert!((hit.small_margin - 20329.0).abs() < 1e-9);
        assert!((hit.large_margin - 20368.0).abs() < 1e-9);
    }

    #[test]
    fn incomplete_table_is_rejected() {
        let entries = [
            (CoalitionId::from_members(&[0]), 1.0),
            (CoalitionId::from_members(&[1]), 1.0),
        ];
        assert!(matches!(
            GameTable::from_entries(2, &entries),
            Err(GameError::MissingCoalition { .. })
        ));
    }
}
