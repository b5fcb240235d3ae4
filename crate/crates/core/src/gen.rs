//! Random scenario generation for property suites and the audit command.

use crate::model::{Microgrid, Scenario, StorageSpec, Tariff, TimeGrid};
use rand::Rng;

/// Parameter ranges for [`random_scenario`]. Generated scenarios always
/// validate and always admit the idle dispatch, so every coalition
/// scheduling problem is feasible.
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub users: (usize, usize),
    pub intervals: (usize, usize),
    pub demand_max: f64,
    pub storage_prob: f64,
    pub tou_price_max: f64,
    pub demand_charge_max: f64,
    pub fixed_initial_charge_prob: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            users: (2, 4),
            intervals: (3, 6),
            demand_max: 10.0,
            storage_prob: 0.7,
            tou_price_max: 3.0,
            demand_charge_max: 8.0,
            fixed_initial_charge_prob: 0.25,
        }
    }
}

impl GenConfig {
    /// Instances small enough for the brute-force oracle guards.
    pub fn oracle_sized() -> Self {
        GenConfig {
            users: (1, 2),
            intervals: (2, 4),
            storage_prob: 0.8,
            ..GenConfig::default()
        }
    }
}

pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, cfg: &GenConfig) -> Scenario {
    let user_count = rng.gen_range(cfg.users.0..=cfg.users.1);
    let interval_count = rng.gen_range(cfg.intervals.0..=cfg.intervals.1);

    let tariff = Tariff {
        tou_prices: (0..interval_count)
            .map(|_| rng.gen_range(0.0..=cfg.tou_price_max))
            .collect(),
        demand_charge: rng.gen_range(0.0..=cfg.demand_charge_max),
    };

    let microgrids = (0..user_count)
        .map(|i| {
            let storage = rng.gen_bool(cfg.storage_prob).then(|| {
                let dispatch_max = rng.gen_range(0.5..=4.0);
                let dispatch_min = -rng.gen_range(0.5..=4.0);
                let capacity_min = rng.gen_range(0.0..=2.0);
                // Roomy capacity band keeps discretized trajectories alive.
                let capacity_max = capacity_min + rng.gen_range(2.0..=10.0);
                let initial_charge = rng
                    .gen_bool(cfg.fixed_initial_charge_prob)
                    .then(|| rng.gen_range(capacity_min..=capacity_max));
                StorageSpec {
                    capacity_min,
                    capacity_max,
                    dispatch_min,
                    dispatch_max,
                    initial_charge,
                }
            });
            Microgrid {
                id: format!("u{i}"),
                demand: (0..interval_count)
                    .map(|_| rng.gen_range(0.0..=cfg.demand_max))
                    .collect(),
                storage,
            }
        })
        .collect();

    Scenario {
        time_grid: TimeGrid {
            interval_count,
            interval_length_hours: 1.0,
        },
        tariff,
        microgrids,
    }
}
