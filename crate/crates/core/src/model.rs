//! Domain types for tariffs, microgrids and storage, plus the billing cost
//! function shared by individual and coalition scheduling.
//!
//! All quantities are energies per interval. The interval length is carried
//! as metadata only and never multiplied into costs; the peak-demand term
//! bills the maximum interval energy directly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for schedule feasibility checks (balance, charge
/// recursion, bounds, cyclicity).
pub const SCHEDULE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected length {expected}, got {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::Invalid(msg.into())
}

/// The scheduling horizon: `interval_count` intervals of `interval_length_hours` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub interval_count: usize,
    pub interval_length_hours: f64,
}

impl TimeGrid {
    pub fn new(interval_count: usize, interval_length_hours: f64) -> Result<Self, ModelError> {
        let grid = TimeGrid {
            interval_count,
            interval_length_hours,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.interval_count == 0 {
            return Err(invalid("time grid: interval_count must be at least 1"));
        }
        if !self.interval_length_hours.is_finite() || self.interval_length_hours <= 0.0 {
            return Err(invalid("time grid: interval_length_hours must be positive"));
        }
        Ok(())
    }
}

/// Time-of-Use prices per interval plus a peak demand-charge coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    /// Unit price per interval; length must equal the time grid's interval count.
    pub tou_prices: Vec<f64>,
    /// Price per unit of peak interval energy.
    pub demand_charge: f64,
}

impl Tariff {
    pub fn validate(&self, grid: &TimeGrid) -> Result<(), ModelError> {
        if self.tou_prices.len() != grid.interval_count {
            return Err(ModelError::DimensionMismatch {
                what: "tariff tou_prices".into(),
                expected: grid.interval_count,
                actual: self.tou_prices.len(),
            });
        }
        if self.tou_prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("tariff: tou_prices must be finite and non-negative"));
        }
        if !self.demand_charge.is_finite() || self.demand_charge < 0.0 {
            return Err(invalid("tariff: demand_charge must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Battery limits. Dispatch is energy per interval; positive dispatch
/// discharges (serves load), negative dispatch charges from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub capacity_min: f64,
    pub capacity_max: f64,
    pub dispatch_min: f64,
    pub dispatch_max: f64,
    /// Fixed start-of-horizon charge; when absent the initial charge is a
    /// free decision variable within the capacity bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_charge: Option<f64>,
}

impl StorageSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let vals = [
            self.capacity_min,
            self.capacity_max,
            self.dispatch_min,
            self.dispatch_max,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(invalid("storage: bounds must be finite"));
        }
        if self.capacity_min > self.capacity_max {
            return Err(invalid(format!(
                "storage: capacity_min {} exceeds capacity_max {}",
                self.capacity_min, self.capacity_max
            )));
        }
        if self.dispatch_min > self.dispatch_max {
            return Err(invalid(format!(
                "storage: dispatch_min {} exceeds dispatch_max {}",
                self.dispatch_min, self.dispatch_max
            )));
        }
        // The idle trajectory e == 0 must be admissible.
        if self.dispatch_min > 0.0 || self.dispatch_max < 0.0 {
            return Err(invalid(
                "storage: dispatch bounds must admit zero (dispatch_min <= 0 <= dispatch_max)",
            ));
        }
        if let Some(c0) = self.initial_charge {
            if !c0.is_finite() || c0 < self.capacity_min || c0 > self.capacity_max {
                return Err(invalid(format!(
                    "storage: initial_charge {} outside capacity bounds [{}, {}]",
                    c0, self.capacity_min, self.capacity_max
                )));
            }
        }
        Ok(())
    }
}

/// A metered consumer with a demand profile and optional battery storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Microgrid {
    pub id: String,
    /// Energy demand per interval; length must equal the interval count.
    pub demand: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageSpec>,
}

impl Microgrid {
    pub fn validate(&self, grid: &TimeGrid) -> Result<(), ModelError> {
        if self.id.is_empty() {
            return Err(invalid("microgrid: id must not be empty"));
        }
        if self.demand.len() != grid.interval_count {
            return Err(ModelError::DimensionMismatch {
                what: format!("microgrid '{}' demand", self.id),
                expected: grid.interval_count,
                actual: self.demand.len(),
            });
        }
        if self.demand.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(invalid(format!(
                "microgrid '{}': demand entries must be finite and non-negative",
                self.id
            )));
        }
        if let Some(storage) = &self.storage {
            storage
                .validate()
                .map_err(|e| invalid(format!("microgrid '{}': {}", self.id, e)))?;
        }
        Ok(())
    }
}

/// A complete problem instance: time grid, tariff and the set of microgrids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub time_grid: TimeGrid,
    pub tariff: Tariff,
    pub microgrids: Vec<Microgrid>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.time_grid.validate()?;
        self.tariff.validate(&self.time_grid)?;
        if self.microgrids.is_empty() {
            return Err(invalid("scenario: at least one microgrid is required"));
        }
        for m in &self.microgrids {
            m.validate(&self.time_grid)?;
        }
        let mut ids: Vec<&str> = self.microgrids.iter().map(|m| m.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("scenario: microgrid ids must be unique"));
        }
        Ok(())
    }

    pub fn user_count(&self) -> usize {
        self.microgrids.len()
    }

    pub fn user_ids(&self) -> Vec<String> {
        self.microgrids.iter().map(|m| m.id.clone()).collect()
    }

    /// Summed demand per interval over the given member indices.
    pub fn aggregate_demand(&self, members: &[usize]) -> Vec<f64> {
        let t = self.time_grid.interval_count;
        let mut total = vec![0.0; t];
        for &i in members {
            for (slot, d) in total.iter_mut().zip(&self.microgrids[i].demand) {
                *slot += d;
            }
        }
        total
    }
}

/// Per-interval grid draw and storage dispatch for a user or coalition,
/// with the resulting cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Ids of the participating users, in scenario order.
    pub user_ids: Vec<String>,
    /// Aggregate energy drawn from the grid per interval.
    pub grid_draw: Vec<f64>,
    /// Storage dispatch per participating user (zeros for storage-less users).
    pub dispatch: Vec<Vec<f64>>,
    /// Charge trajectory per participating user, `interval_count + 1` entries.
    pub charge: Vec<Vec<f64>>,
    pub cost: f64,
}

impl Schedule {
    /// Checks balance, charge recursion, storage bounds, cyclicity and
    /// non-negative draw against the scenario, at [`SCHEDULE_TOL`].
    pub fn validate(&self, scenario: &Scenario) -> Result<(), ModelError> {
        let t = scenario.time_grid.interval_count;
        if self.grid_draw.len() != t {
            return Err(ModelError::DimensionMismatch {
                what: "schedule grid_draw".into(),
                expected: t,
                actual: self.grid_draw.len(),
            });
        }
        if self.dispatch.len() != self.user_ids.len() || self.charge.len() != self.user_ids.len() {
            return Err(invalid("schedule: one dispatch and charge vector per user required"));
        }

        let members: Vec<&Microgrid> = self
            .user_ids
            .iter()
            .map(|id| {
                scenario
                    .microgrids
                    .iter()
                    .find(|m| &m.id == id)
                    .ok_or_else(|| invalid(format!("schedule references unknown user '{id}'")))
            })
            .collect::<Result<_, _>>()?;

        for (u, member) in members.iter().enumerate() {
            let e = &self.dispatch[u];
            let c = &self.charge[u];
            if e.len() != t || c.len() != t + 1 {
                return Err(invalid(format!(
                    "schedule for '{}': dispatch needs {t} entries and charge {} entries",
                    member.id,
                    t + 1
                )));
            }
            for step in 0..t {
                if (c[step + 1] - (c[step] - e[step])).abs() > SCHEDULE_TOL {
                    return Err(invalid(format!(
                        "schedule for '{}': charge recursion violated at interval {}",
                        member.id,
                        step + 1
                    )));
                }
            }
            if (c[0] - c[t]).abs() > SCHEDULE_TOL {
                return Err(invalid(format!(
                    "schedule for '{}': cyclic charge constraint violated ({} vs {})",
                    member.id, c[0], c[t]
                )));
            }
            if let Some(spec) = &member.storage {
                if e.iter()
                    .any(|v| *v < spec.dispatch_min - SCHEDULE_TOL || *v > spec.dispatch_max + SCHEDULE_TOL)
                {
                    return Err(invalid(format!(
                        "schedule for '{}': dispatch outside bounds",
                        member.id
                    )));
                }
                if c.iter()
                    .any(|v| *v < spec.capacity_min - SCHEDULE_TOL || *v > spec.capacity_max + SCHEDULE_TOL)
                {
                    return Err(invalid(format!(
                        "schedule for '{}': charge outside capacity bounds",
                        member.id
                    )));
                }
                if let Some(c0) = spec.initial_charge {
                    if (c[0] - c0).abs() > SCHEDULE_TOL {
                        return Err(invalid(format!(
                            "schedule for '{}': initial charge {} differs from fixed {}",
                            member.id, c[0], c0
                        )));
                    }
                }
            } else if e.iter().any(|v| v.abs() > SCHEDULE_TOL) {
                return Err(invalid(format!(
                    "schedule for '{}': dispatch must be zero without storage",
                    member.id
                )));
            }
        }

        // Aggregate balance: x^t = sum demand - sum dispatch.
        for step in 0..t {
            let demand: f64 = members.iter().map(|m| m.demand[step]).sum();
            let dispatched: f64 = self.dispatch.iter().map(|e| e[step]).sum();
            if (self.grid_draw[step] - (demand - dispatched)).abs() > SCHEDULE_TOL {
                return Err(invalid(format!(
                    "schedule: energy balance violated at interval {} ({} vs {})",
                    step + 1,
                    self.grid_draw[step],
                    demand - dispatched
                )));
            }
            if self.grid_draw[step] < -SCHEDULE_TOL {
                return Err(invalid(format!(
                    "schedule: negative grid draw at interval {}",
                    step + 1
                )));
            }
        }
        Ok(())
    }
}

/// Billing cost of a grid-draw vector: `sum_t p^t x^t + demand_charge * max_t x^t`.
///
/// The peak is floored at zero, so the all-zeros vector costs zero.
pub fn evaluate_cost(grid_draw: &[f64], tariff: &Tariff) -> Result<f64, ModelError> {
    if grid_draw.len() != tariff.tou_prices.len() {
        return Err(ModelError::DimensionMismatch {
            what: "evaluate_cost grid_draw".into(),
            expected: tariff.tou_prices.len(),
            actual: grid_draw.len(),
        });
    }
    let tou: f64 = grid_draw
        .iter()
        .zip(&tariff.tou_prices)
        .map(|(x, p)| p * x)
        .sum();
    let peak = grid_draw.iter().fold(0.0_f64, |acc, &x| acc.max(x));
    Ok(tou + tariff.demand_charge * peak)
}
