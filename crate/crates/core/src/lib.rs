//! Joint battery scheduling and stable cost allocation for coalitions of
//! microgrids billed under Time-of-Use plus peak-demand-charge tariffs.
//!
//! The crate builds the epigraph LP for individual and coalition scheduling,
//! solves it with an in-repo revised simplex, derives the coalition cost
//! game, and allocates the grand-coalition cost either by the Shapley
//! distribution (when stable) or by a min-spread fair allocation drawn from
//! the core.

pub mod game;
pub mod gen;
pub mod io;
pub mod lp;
pub mod model;
pub mod pipeline;

pub use game::{Allocation, AllocationMethod, CoalitionId, GameTable};
pub use model::{Microgrid, Scenario, Schedule, StorageSpec, Tariff, TimeGrid};
