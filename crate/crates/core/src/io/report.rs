//! Run reports: scenario digest, individual and coalition costs, the game
//! table, the allocation with savings, the core-inequality transcript and
//! audit findings. Serialization is deterministic (fixed key order, six
//! decimals) so reports written twice are byte-identical.

use super::emit::{fmt_f64, JsonWriter};
use super::IoError;
use crate::game::{core_slack_tolerance, Allocation, CoalitionId, FairnessStats, GameTable};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Default)]
pub struct ReportDigest {
    pub users: Vec<String>,
    pub interval_count: Option<usize>,
    pub interval_length_hours: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct UserCost {
    pub id: String,
    pub cost: f64,
}

/// Per-user individual optima and the non-cooperative total.
#[derive(Debug, Clone)]
pub struct IndividualSection {
    pub per_user: Vec<UserCost>,
    pub total_non_coop: f64,
}

#[derive(Debug, Clone)]
pub struct CoalitionSection {
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct GameTableSection {
    pub entries: Vec<(Vec<String>, f64)>,
}

impl GameTableSection {
    /// Coalition entries ordered by size then mask.
    pub fn from_table(user_ids: &[String], table: &GameTable) -> Self {
        let mut coalitions: Vec<CoalitionId> = table.coalitions().collect();
        coalitions.sort_by_key(|c| (c.len(), c.mask()));
        let entries = coalitions
            .into_iter()
            .map(|c| {
                let names = c
                    .members()
                    .into_iter()
                    .map(|i| user_ids[i].clone())
                    .collect();
                (names, table.get(c))
            })
            .collect();
        GameTableSection { entries }
    }
}

#[derive(Debug, Clone)]
pub struct UserAllocation {
    pub id: String,
    pub cost: f64,
    pub saving_abs: Option<f64>,
    pub saving_pct: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AllocationSection {
    pub method: String,
    pub per_user: Vec<UserAllocation>,
    pub fairness: Option<FairnessStats>,
    pub in_core: bool,
}

impl AllocationSection {
    /// Savings are measured against each user's stand-alone cost from the
    /// game table; percentage savings are omitted for zero-cost users.
    pub fn from_allocation(
        user_ids: &[String],
        table: &GameTable,
        allocation: &Allocation,
    ) -> Self {
        let per_user = user_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let standalone = table.singleton_value(i);
                let cost = allocation.costs[i];
                let saving = standalone - cost;
                let pct = (standalone > 1e-9).then(|| 100.0 * saving / standalone);
                UserAllocation {
                    id: id.clone(),
                    cost,
                    saving_abs: Some(saving),
                    saving_pct: pct,
                }
            })
            .collect();
        AllocationSection {
            method: allocation.method.as_str().to_string(),
            per_user,
            fairness: allocation.fairness,
            in_core: allocation.core_status.is_in_core(),
        }
    }
}

/// One core inequality with both sides: `allocated` is the coalition's
/// summed allocation, `standalone` its cost alone. The grand coalition
/// record checks the efficiency equality instead.
#[derive(Debug, Clone)]
pub struct CoreRecord {
    pub coalition: Vec<String>,
    pub allocated: f64,
    pub standalone: f64,
    pub satisfied: bool,
}

/// The full transcript over all nonempty coalitions, ordered by size then
/// mask.
pub fn build_core_check(
    user_ids: &[String],
    table: &GameTable,
    costs: &[f64],
) -> Vec<CoreRecord> {
    let grand = CoalitionId::grand(table.user_count());
    let mut coalitions: Vec<CoalitionId> = table.coalitions().collect();
    coalitions.sort_by_key(|c| (c.len(), c.mask()));
    coalitions
        .into_iter()
        .map(|c| {
            let allocated: f64 = c.members().iter().map(|&i| costs[i]).sum();
            let standalone = table.get(c);
            let tol = core_slack_tolerance(standalone);
            let satisfied = if c == grand {
                (allocated - standalone).abs() <= tol
            } else {
                allocated <= standalone + tol
            };
            CoreRecord {
                coalition: c.members().into_iter().map(|i| user_ids[i].clone()).collect(),
                allocated,
                standalone,
                satisfied,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SubadditivityRecord {
    pub s: Vec<String>,
    pub t: Vec<String>,
    pub union_cost: f64,
    pub split_cost: f64,
    pub excess: f64,
}

#[derive(Debug, Clone)]
pub struct SubmodularityRecord {
    pub smaller: Vec<String>,
    pub larger: Vec<String>,
    pub user: String,
    pub small_margin: f64,
    pub large_margin: f64,
}

#[derive(Debug, Clone)]
pub struct OracleRecord {
    pub scenario: usize,
    pub coalition: Vec<String>,
    pub lp_cost: f64,
    pub brute_force_cost: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, Default)]
pub struct AuditSection {
    pub scenarios_checked: usize,
    pub subadditivity_violations: Vec<SubadditivityRecord>,
    pub submodularity_violations: Vec<SubmodularityRecord>,
    pub oracle_checks: Vec<OracleRecord>,
}

impl AuditSection {
    pub fn subadditivity_clean(&self) -> bool {
        self.subadditivity_violations.is_empty()
    }

    pub fn oracle_clean(&self) -> bool {
        self.oracle_checks.iter().all(|r| r.within_tolerance)
    }
}

/// A run report. Sections are optional; each subcommand fills the ones it
/// produces.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub digest: ReportDigest,
    pub individual: Option<IndividualSection>,
    pub coalition: Option<CoalitionSection>,
    pub game_table: Option<GameTableSection>,
    pub allocation: Option<AllocationSection>,
    pub core_check: Option<Vec<CoreRecord>>,
    pub audit: Option<AuditSection>,
}

impl Report {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.render_json(),
            ReportFormat::Text => self.render_text(),
        }
    }

    fn render_json(&self) -> String {
        let mut w = JsonWriter::new();
        w.open_object();

        w.key("scenario");
        w.open_object();
        w.key("users");
        w.string_array(&self.digest.users);
        w.key("interval_count");
        match self.digest.interval_count {
            Some(t) => w.integer(t),
            None => w.null(),
        }
        w.key("interval_length_hours");
        match self.digest.interval_length_hours {
            Some(h) => w.number(h),
            None => w.null(),
        }
        w.close_object();

        w.key("individual");
        match &self.individual {
            None => w.null(),
            Some(section) => {
                w.open_object();
                w.key("per_user");
                w.open_array();
                for user in &section.per_user {
                    w.open_object();
                    w.key("id");
                    w.string(&user.id);
                    w.key("cost");
                    w.number(user.cost);
                    w.close_object();
                }
                w.close_array();
                w.key("total_non_coop");
                w.number(section.total_non_coop);
                w.close_object();
            }
        }

        w.key("coalition");
        match &self.coalition {
            None => w.null(),
            Some(section) => {
                w.open_object();
                w.key("cost");
                w.number(section.cost);
                w.close_object();
            }
        }

        w.key("game_table");
        match &self.game_table {
            None => w.null(),
            Some(section) => {
                w.open_array();
                for (coalition, cost) in &section.entries {
                    w.open_object();
                    w.key("coalition");
                    w.string_array(coalition);
                    w.key("cost");
                    w.number(*cost);
                    w.close_object();
                }
                w.close_array();
            }
        }

        w.key("allocation");
        match &self.allocation {
            None => w.null(),
            Some(section) => {
                w.open_object();
                w.key("method");
                w.string(&section.method);
                w.key("per_user");
                w.open_array();
                for user in &section.per_user {
                    w.open_object();
                    w.key("id");
                    w.string(&user.id);
                    w.key("cost");
                    w.number(user.cost);
                    w.key("saving_abs");
                    match user.saving_abs {
                        Some(v) => w.number(v),
                        None => w.null(),
                    }
                    w.key("saving_pct");
                    match user.saving_pct {
                        Some(v) => w.number(v),
                        None => w.null(),
                    }
                    w.close_object();
                }
                w.close_array();
                w.key("fairness");
                match &section.fairness {
                    None => w.null(),
                    Some(stats) => {
                        w.open_object();
                        w.key("lambda_min");
                        w.number(stats.lambda_min);
                        w.key("lambda_max");
                        w.number(stats.lambda_max);
                        w.key("delta");
                        w.number(stats.delta);
                        w.close_object();
                    }
                }
                w.key("in_core");
                w.boolean(section.in_core);
                w.close_object();
            }
        }

        w.key("core_check");
        match &self.core_check {
            None => w.null(),
            Some(records) => {
                w.open_array();
                for record in records {
                    w.open_object();
                    w.key("coalition");
                    w.string_array(&record.coalition);
                    w.key("allocated");
                    w.number(record.allocated);
                    w.key("standalone");
                    w.number(record.standalone);
                    w.key("satisfied");
                    w.boolean(record.satisfied);
                    w.close_object();
                }
                w.close_array();
            }
        }

        w.key("audit");
        match &self.audit {
            None => w.null(),
            Some(section) => {
                w.open_object();
                w.key("scenarios_checked");
                w.integer(section.scenarios_checked);
                w.key("subadditivity_violations");
                w.open_array();
                for v in &section.subadditivity_violations {
                    w.open_object();
                    w.key("s");
                    w.string_array(&v.s);
                    w.key("t");
                    w.string_array(&v.t);
                    w.key("union_cost");
                    w.number(v.union_cost);
                    w.key("split_cost");
                    w.number(v.split_cost);
                    w.key("excess");
                    w.number(v.excess);
                    w.close_object();
                }
                w.close_array();
                w.key("submodularity_violations");
                w.open_array();
                for v in &section.submodularity_violations {
                    w.open_object();
                    w.key("smaller");
                    w.string_array(&v.smaller);
                    w.key("larger");
                    w.string_array(&v.larger);
                    w.key("user");
                    w.string(&v.user);
                    w.key("small_margin");
                    w.number(v.small_margin);
                    w.key("large_margin");
                    w.number(v.large_margin);
                    w.close_object();
                }
                w.close_array();
                w.key("oracle_checks");
                w.open_array();
                for r in &section.oracle_checks {
                    w.open_object();
                    w.key("scenario");
                    w.integer(r.scenario);
                    w.key("coalition");
                    w.string_array(&r.coalition);
                    w.key("lp_cost");
                    w.number(r.lp_cost);
                    w.key("brute_force_cost");
                    w.number(r.brute_force_cost);
                    w.key("gap");
                    w.number(r.gap);
                    w.key("tolerance");
                    w.number(r.tolerance);
                    w.key("within_tolerance");
                    w.boolean(r.within_tolerance);
                    w.close_object();
                }
                w.close_array();
                w.close_object();
            }
        }

        w.close_object();
        w.finish()
    }

    fn render_text(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, s: String| {
            out.push_str(&s);
            out.push('\n');
        };

        line(
            &mut out,
            format!(
                "scenario: {} user(s){}",
                self.digest.users.len(),
                self.digest
                    .interval_count
                    .map(|t| format!(", {t} interval(s)"))
                    .unwrap_or_default()
            ),
        );
        if !self.digest.users.is_empty() {
            line(&mut out, format!("users: {}", self.digest.users.join(", ")));
        }

        if let Some(section) = &self.individual {
            line(&mut out, "-- individual optimization --".into());
            for user in &section.per_user {
                line(&mut out, format!("  {}: {}", user.id, fmt_f64(user.cost)));
            }
            line(
                &mut out,
                format!("  total_non_coop: {}", fmt_f64(section.total_non_coop)),
            );
        }
        if let Some(section) = &self.coalition {
            line(&mut out, "-- grand coalition --".into());
            line(&mut out, format!("  cost: {}", fmt_f64(section.cost)));
        }
        if let Some(section) = &self.game_table {
            line(&mut out, "-- game table --".into());
            for (coalition, cost) in &section.entries {
                line(
                    &mut out,
                    format!("  {{{}}}: {}", coalition.join(","), fmt_f64(*cost)),
                );
            }
        }
        if let Some(section) = &self.allocation {
            line(&mut out, format!("-- allocation ({}) --", section.method));
            for user in &section.per_user {
                let saving = match (user.saving_abs, user.saving_pct) {
                    (Some(abs), Some(pct)) => {
                        format!(" (saves {} = {}%)", fmt_f64(abs), fmt_f64(pct))
                    }
                    (Some(abs), None) => format!(" (saves {})", fmt_f64(abs)),
                    _ => String::new(),
                };
                line(
                    &mut out,
                    format!("  {}: {}{}", user.id, fmt_f64(user.cost), saving),
                );
            }
            if let Some(stats) = &section.fairness {
                line(
                    &mut out,
                    format!(
                        "  lambda_min: {}  lambda_max: {}  delta: {}",
                        fmt_f64(stats.lambda_min),
                        fmt_f64(stats.lambda_max),
                        fmt_f64(stats.delta)
                    ),
                );
            }
            line(
                &mut out,
                format!("  in_core: {}", if section.in_core { "yes" } else { "no" }),
            );
        }
        if let Some(records) = &self.core_check {
            line(&mut out, "-- core check --".into());
            for record in records {
                line(
                    &mut out,
                    format!(
                        "  {{{}}}: allocated {} vs standalone {} -> {}",
                        record.coalition.join(","),
                        fmt_f64(record.allocated),
                        fmt_f64(record.standalone),
                        if record.satisfied { "ok" } else { "VIOLATED" }
                    ),
                );
            }
        }
        if let Some(section) = &self.audit {
            line(&mut out, "-- audit --".into());
            line(
                &mut out,
                format!("  scenarios_checked: {}", section.scenarios_checked),
            );
            line(
                &mut out,
                format!(
                    "  subadditivity violations: {}",
                    section.subadditivity_violations.len()
                ),
            );
            for v in &section.subadditivity_violations {
                line(
                    &mut out,
                    format!(
                        "    {{{}}} + {{{}}}: union {} > split {} (excess {})",
                        v.s.join(","),
                        v.t.join(","),
                        fmt_f64(v.union_cost),
                        fmt_f64(v.split_cost),
                        fmt_f64(v.excess)
                    ),
                );
            }
            line(
                &mut out,
                format!(
                    "  submodularity violations: {}",
                    section.submodularity_violations.len()
                ),
            );
            for v in &section.submodularity_violations {
                line(
                    &mut out,
                    format!(
                        "    S={{{}}} T={{{}}} i={}: margins {} vs {}",
                        v.smaller.join(","),
                        v.larger.join(","),
                        v.user,
                        fmt_f64(v.small_margin),
                        fmt_f64(v.large_margin)
                    ),
                );
            }
            if !section.oracle_checks.is_empty() {
                line(
                    &mut out,
                    format!("  oracle checks: {}", section.oracle_checks.len()),
                );
                for r in &section.oracle_checks {
                    line(
                        &mut out,
                        format!(
                            "    #{} {{{}}}: lp {} vs brute {} (gap {}, tol {}) -> {}",
                            r.scenario,
                            r.coalition.join(","),
                            fmt_f64(r.lp_cost),
                            fmt_f64(r.brute_force_cost),
                            fmt_f64(r.gap),
                            fmt_f64(r.tolerance),
                            if r.within_tolerance { "ok" } else { "FAILED" }
                        ),
                    );
                }
            }
        }
        out
    }
}

/// Writes a rendered report to a file.
pub fn write_report(
    report: &Report,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, report.render(format)).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}
