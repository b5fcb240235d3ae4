//! Scenario ingestion, game-table files, report emission and plot data.
//!
//! Scenario files are JSON (schema documented in `docs/scenario.md`); demand
//! profiles may live inline or in CSV files with an `interval,<user-id>,...`
//! header. Emitted artifacts (reports, game tables, plot data) serialize all
//! floats with six decimal places so goldens diff cleanly.

mod emit;
mod plot;
mod report;

pub use plot::{emit_plot_data, CostBar, PlotData};
pub use report::{
    build_core_check, write_report, AllocationSection, AuditSection, CoalitionSection,
    CoreRecord, GameTableSection, IndividualSection, OracleRecord, Report, ReportDigest,
    ReportFormat, SubadditivityRecord, SubmodularityRecord, UserAllocation, UserCost,
};

pub(crate) use emit::JsonWriter;

use crate::game::{CoalitionId, GameError, GameTable};
use crate::model::{Microgrid, ModelError, Scenario, StorageSpec, Tariff, TimeGrid};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("{path}: {detail}")]
    Validation { path: PathBuf, detail: String },
}

impl IoError {
    fn validation(path: &Path, detail: impl Into<String>) -> Self {
        IoError::Validation {
            path: path.to_path_buf(),
            detail: detail.into(),
        }
    }
}

/// One tariff price block over a 1-based inclusive interval range.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffBlock {
    pub from_interval: usize,
    pub to_interval: usize,
    pub price: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    time_grid: TimeGridFile,
    tariff: TariffFile,
    microgrids: Vec<MicrogridFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeGridFile {
    interval_count: usize,
    interval_length_hours: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TariffFile {
    #[serde(default)]
    tou_prices: Option<Vec<f64>>,
    #[serde(default)]
    tou_blocks: Option<Vec<TariffBlock>>,
    demand_charge: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MicrogridFile {
    id: String,
    #[serde(default)]
    demand: Option<Vec<f64>>,
    #[serde(default)]
    demand_csv: Option<String>,
    #[serde(default)]
    storage: Option<StorageSpec>,
}

/// Loads and fully validates a scenario file. Demand CSV paths resolve
/// relative to the scenario file's directory.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;

    let interval_count = file.time_grid.interval_count;
    let tou_prices = expand_tariff(path, &file.tariff, interval_count)?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));

    let mut microgrids = Vec::with_capacity(file.microgrids.len());
    for entry in file.microgrids {
        let demand = match (entry.demand, entry.demand_csv) {
            (Some(_), Some(_)) => {
                return Err(IoError::validation(
                    path,
                    format!(
                        "microgrid '{}': give either demand or demand_csv, not both",
                        entry.id
                    ),
                ))
            }
            (Some(demand), None) => demand,
            (None, Some(csv_rel)) => {
                let csv_path = base_dir.join(&csv_rel);
                read_demand_column(&csv_path, &entry.id, interval_count)?
            }
            (None, None) => {
                return Err(IoError::validation(
                    path,
                    format!("microgrid '{}': demand or demand_csv required", entry.id),
                ))
            }
        };
        microgrids.push(Microgrid {
            id: entry.id,
            demand,
            storage: entry.storage,
        });
    }

    let scenario = Scenario {
        time_grid: TimeGrid {
            interval_count,
            interval_length_hours: file.time_grid.interval_length_hours,
        },
        tariff: Tariff {
            tou_prices,
            demand_charge: file.tariff.demand_charge,
        },
        microgrids,
    };
    scenario
        .validate()
        .map_err(|e: ModelError| IoError::validation(path, e.to_string()))?;
    Ok(scenario)
}

/// Blocks must tile 1..=T exactly, without gaps or overlap.
fn expand_tariff(path: &Path, tariff: &TariffFile, t: usize) -> Result<Vec<f64>, IoError> {
    match (&tariff.tou_prices, &tariff.tou_blocks) {
        (Some(_), Some(_)) => Err(IoError::validation(
            path,
            "tariff: give either tou_prices or tou_blocks, not both",
        )),
        (None, None) => Err(IoError::validation(
            path,
            "tariff: tou_prices or tou_blocks required",
        )),
        (Some(prices), None) => Ok(prices.clone()),
        (None, Some(blocks)) => {
            let mut sorted: Vec<&TariffBlock> = blocks.iter().collect();
            sorted.sort_by_key(|b| b.from_interval);
            let mut prices = Vec::with_capacity(t);
            let mut next = 1usize;
            for block in sorted {
                if block.from_interval != next {
                    return Err(IoError::validation(
                        path,
                        format!(
                            "tariff blocks do not tile the horizon: expected a block starting at interval {next}, found one at {}",
                            block.from_interval
                        ),
                    ));
                }
                if block.to_interval < block.from_interval {
                    return Err(IoError::validation(
                        path,
                        format!(
                            "tariff block {}..{} is reversed",
                            block.from_interval, block.to_interval
                        ),
                    ));
                }
                for _ in block.from_interval..=block.to_interval {
                    prices.push(block.price);
                }
                next = block.to_interval + 1;
            }
            if next != t + 1 {
                return Err(IoError::validation(
                    path,
                    format!("tariff blocks cover intervals 1..{}, horizon needs 1..{t}", next - 1),
                ));
            }
            Ok(prices)
        }
    }
}

/// Reads one user's demand column from a CSV with header
/// `interval,<user-id>,...` and rows for intervals 1..=T in order.
fn read_demand_column(path: &Path, user_id: &str, t: usize) -> Result<Vec<f64>, IoError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?
        .clone();
    if headers.get(0) != Some("interval") {
        return Err(IoError::validation(
            path,
            "demand csv: first column must be 'interval'",
        ));
    }
    let column = headers
        .iter()
        .position(|h| h == user_id)
        .ok_or_else(|| IoError::validation(path, format!("demand csv: no column '{user_id}'")))?;

    let mut demand = Vec::with_capacity(t);
    for (row_index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let line = row_index + 2; // 1-based, after the header
        let interval: usize = record
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| {
                IoError::validation(path, format!("demand csv line {line}: bad interval"))
            })?;
        if interval != row_index + 1 {
            return Err(IoError::validation(
                path,
                format!(
                    "demand csv line {line}: expected interval {}, found {interval}",
                    row_index + 1
                ),
            ));
        }
        let value: f64 = record
            .get(column)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| {
                IoError::validation(
                    path,
                    format!("demand csv line {line}: bad value for '{user_id}'"),
                )
            })?;
        demand.push(value);
    }
    if demand.len() != t {
        return Err(IoError::validation(
            path,
            format!("demand csv: expected {t} rows, found {}", demand.len()),
        ));
    }
    Ok(demand)
}

/// Writes a scenario back out in the canonical inline form (full float
/// precision, demands inline, per-interval prices).
pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(scenario).expect("scenario serializes");
    text.push('\n');
    fs::write(path, text).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameTableFile {
    users: Vec<String>,
    values: Vec<GameTableEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameTableEntry {
    coalition: Vec<String>,
    cost: f64,
}

/// Loads a pre-computed coalition cost table; returns the user ids and the
/// complete table.
pub fn load_game_table(path: impl AsRef<Path>) -> Result<(Vec<String>, GameTable), IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let file: GameTableFile = serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;

    let index: BTreeMap<&str, usize> = file
        .users
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    if index.len() != file.users.len() {
        return Err(IoError::validation(path, "game table: user ids must be unique"));
    }

    let mut entries = Vec::with_capacity(file.values.len());
    for entry in &file.values {
        let mut members = Vec::with_capacity(entry.coalition.len());
        for id in &entry.coalition {
            let &user = index.get(id.as_str()).ok_or_else(|| {
                IoError::validation(path, format!("game table: unknown user '{id}'"))
            })?;
            members.push(user);
        }
        if members.is_empty() {
            return Err(IoError::validation(path, "game table: empty coalition entry"));
        }
        entries.push((CoalitionId::from_members(&members), entry.cost));
    }

    let table = GameTable::from_entries(file.users.len(), &entries).map_err(|e: GameError| {
        IoError::validation(path, e.to_string())
    })?;
    Ok((file.users, table))
}

/// Renders a game table in the file format accepted by [`load_game_table`],
/// coalitions ordered by size then mask, floats with six decimals.
pub fn render_game_table(user_ids: &[String], table: &GameTable) -> String {
    let mut coalitions: Vec<CoalitionId> = table.coalitions().collect();
    coalitions.sort_by_key(|c| (c.len(), c.mask()));

    let mut w = JsonWriter::new();
    w.open_object();
    w.key("users");
    w.string_array(user_ids);
    w.key("values");
    w.open_array();
    for coalition in coalitions {
        w.open_object();
        w.key("coalition");
        let names: Vec<String> = coalition
            .members()
            .into_iter()
            .map(|i| user_ids[i].clone())
            .collect();
        w.string_array(&names);
        w.key("cost");
        w.number(table.get(coalition));
        w.close_object();
    }
    w.close_array();
    w.close_object();
    w.finish()
}

pub fn save_game_table(
    user_ids: &[String],
    table: &GameTable,
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, render_game_table(user_ids, table)).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}
