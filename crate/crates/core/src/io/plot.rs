//! Plot-data emission: headered CSV files with the per-user profiles, the
//! aggregate individual-vs-cooperative draw, and per-user cost bars.

use super::emit::fmt_f64;
use super::IoError;
use crate::model::{Scenario, Schedule};
use std::fs;
use std::path::{Path, PathBuf};

/// Per-user cost bars for the comparison chart. Columns for methods that
/// were not computed stay empty.
#[derive(Debug, Clone)]
pub struct CostBar {
    pub id: String,
    pub individual: f64,
    pub shapley: Option<f64>,
    pub fair_lp: Option<f64>,
}

/// Inputs for [`emit_plot_data`]: one individual schedule per user in
/// scenario order plus the grand-coalition schedule.
#[derive(Debug)]
pub struct PlotData<'a> {
    pub scenario: &'a Scenario,
    pub individual: &'a [Schedule],
    pub coalition: &'a Schedule,
    pub cost_bars: Option<&'a [CostBar]>,
}

/// Writes `user_profiles.csv`, `aggregate.csv` and (when bars are given)
/// `cost_bars.csv` into `dir`, creating it if needed.
pub fn emit_plot_data(data: &PlotData, dir: impl AsRef<Path>) -> Result<(), IoError> {
    let dir = dir.as_ref();
    let t = data.scenario.time_grid.interval_count;
    if data.individual.len() != data.scenario.user_count() {
        return Err(IoError::Validation {
            path: dir.to_path_buf(),
            detail: "plot data: one individual schedule per user required".into(),
        });
    }
    for schedule in data.individual.iter().chain([data.coalition]) {
        if schedule.grid_draw.len() != t {
            return Err(IoError::Validation {
                path: dir.to_path_buf(),
                detail: "plot data: schedules must share the scenario time grid".into(),
            });
        }
    }
    fs::create_dir_all(dir).map_err(|source| IoError::Write {
        path: dir.to_path_buf(),
        source,
    })?;

    let write = |name: &str, contents: String| -> Result<(), IoError> {
        let path: PathBuf = dir.join(name);
        fs::write(&path, contents).map_err(|source| IoError::Write { path, source })
    };

    // Per-user demand and individually optimized grid draw.
    let mut profiles = String::from("t");
    for m in &data.scenario.microgrids {
        profiles.push_str(&format!(",demand_{0},draw_{0}", m.id));
    }
    profiles.push('\n');
    for step in 0..t {
        profiles.push_str(&(step + 1).to_string());
        for (m, schedule) in data.scenario.microgrids.iter().zip(data.individual) {
            profiles.push(',');
            profiles.push_str(&fmt_f64(m.demand[step]));
            profiles.push(',');
            profiles.push_str(&fmt_f64(schedule.grid_draw[step]));
        }
        profiles.push('\n');
    }
    write("user_profiles.csv", profiles)?;

    // Sum of individual draws vs the cooperative draw.
    let mut aggregate = String::from("t,sum_individual_x,coop_x\n");
    for step in 0..t {
        let sum: f64 = data.individual.iter().map(|s| s.grid_draw[step]).sum();
        aggregate.push_str(&format!(
            "{},{},{}\n",
            step + 1,
            fmt_f64(sum),
            fmt_f64(data.coalition.grid_draw[step])
        ));
    }
    write("aggregate.csv", aggregate)?;

    if let Some(bars) = data.cost_bars {
        let mut table = String::from("user,individual,shapley,fair_lp\n");
        for bar in bars {
            table.push_str(&format!(
                "{},{},{},{}\n",
                bar.id,
                fmt_f64(bar.individual),
                bar.shapley.map(fmt_f64).unwrap_or_default(),
                bar.fair_lp.map(fmt_f64).unwrap_or_default()
            ));
        }
        write("cost_bars.csv", table)?;
    }
    Ok(())
}
