//! End-to-end flows behind the CLI subcommands. Reports are assembled here
//! so CLI output and library output are byte-identical.

use crate::game::{
    build_game_table, check_subadditivity, check_submodularity, fair_core_allocation, shapley,
    Allocation, CoalitionId, GameError, GameTable,
};
use crate::gen::{random_scenario, GenConfig};
use crate::io::{
    AllocationSection, AuditSection, CoalitionSection, CostBar, GameTableSection,
    IndividualSection, IoError, OracleRecord, Report, ReportDigest, SubadditivityRecord,
    SubmodularityRecord, UserCost,
};
use crate::lp::{self, LpError, LpStatus};
use crate::model::{ModelError, Scenario, Schedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("microgrid '{id}': individual scheduling problem is infeasible")]
    InfeasibleUser { id: String },
    #[error("coalition scheduling problem is infeasible")]
    InfeasibleGrand,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Allocation method selection for [`cmd_allocate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodChoice {
    /// Shapley when it lands in the core, otherwise the fair LP.
    #[default]
    Auto,
    Shapley,
    FairLp,
}

#[derive(Debug, Clone)]
pub struct AllocateOptions {
    pub method: MethodChoice,
    pub skip_shapley_above: usize,
    /// Also solve per-user and grand-coalition schedules (plot data).
    pub with_schedules: bool,
}

impl Default for AllocateOptions {
    fn default() -> Self {
        AllocateOptions {
            method: MethodChoice::Auto,
            skip_shapley_above: 12,
            with_schedules: false,
        }
    }
}

/// Everything a subcommand produced: the report plus the raw pieces the CLI
/// may still need (schedules for plot data, the table for table output).
#[derive(Debug, Default)]
pub struct PipelineRun {
    pub report: Report,
    pub table: Option<(Vec<String>, GameTable)>,
    pub allocation: Option<Allocation>,
    pub individual_schedules: Option<Vec<Schedule>>,
    pub coalition_schedule: Option<Schedule>,
    pub cost_bars: Option<Vec<CostBar>>,
}

fn digest(scenario: &Scenario) -> ReportDigest {
    ReportDigest {
        users: scenario.user_ids(),
        interval_count: Some(scenario.time_grid.interval_count),
        interval_length_hours: Some(scenario.time_grid.interval_length_hours),
    }
}

fn solve_user_schedule(scenario: &Scenario, user: usize) -> Result<Schedule, PipelineError> {
    let m = &scenario.microgrids[user];
    let lp = lp::build_individual_lp(m, &scenario.tariff, &scenario.time_grid)?;
    let solution = lp::solve_lp(&lp)?;
    match solution.status {
        LpStatus::Optimal => Ok(lp::extract_schedule(&lp, &solution, scenario, &[user])?),
        _ => Err(PipelineError::InfeasibleUser { id: m.id.clone() }),
    }
}

fn solve_grand_schedule(scenario: &Scenario) -> Result<Schedule, PipelineError> {
    let members: Vec<usize> = (0..scenario.user_count()).collect();
    let lp = lp::build_coalition_lp(&members, scenario)?;
    let solution = lp::solve_lp(&lp)?;
    match solution.status {
        LpStatus::Optimal => Ok(lp::extract_schedule(&lp, &solution, scenario, &members)?),
        _ => Err(PipelineError::InfeasibleGrand),
    }
}

fn individual_section(schedules: &[Schedule], scenario: &Scenario) -> IndividualSection {
    let per_user: Vec<UserCost> = scenario
        .microgrids
        .iter()
        .zip(schedules)
        .map(|(m, s)| UserCost {
            id: m.id.clone(),
            cost: s.cost,
        })
        .collect();
    let total = per_user.iter().map(|u| u.cost).sum();
    IndividualSection {
        per_user,
        total_non_coop: total,
    }
}

/// Per-user cost minimization (one solve per microgrid).
pub fn cmd_individual(scenario: &Scenario) -> Result<PipelineRun, PipelineError> {
    scenario.validate()?;
    let schedules: Vec<Schedule> = (0..scenario.user_count())
        .map(|u| solve_user_schedule(scenario, u))
        .collect::<Result<_, _>>()?;
    let report = Report {
        digest: digest(scenario),
        individual: Some(individual_section(&schedules, scenario)),
        ..Report::default()
    };
    Ok(PipelineRun {
        report,
        individual_schedules: Some(schedules),
        ..PipelineRun::default()
    })
}

/// Grand-coalition cost minimization, with the individual solves alongside
/// for comparison and plot data.
pub fn cmd_coalition(scenario: &Scenario) -> Result<PipelineRun, PipelineError> {
    let mut run = cmd_individual(scenario)?;
    let grand = solve_grand_schedule(scenario)?;
    run.report.coalition = Some(CoalitionSection { cost: grand.cost });
    run.coalition_schedule = Some(grand);
    Ok(run)
}

/// Builds the coalition cost table for every nonempty coalition.
pub fn cmd_game_table(scenario: &Scenario) -> Result<PipelineRun, PipelineError> {
    scenario.validate()?;
    let table = build_game_table(scenario)?;
    let ids = scenario.user_ids();
    let report = Report {
        digest: digest(scenario),
        game_table: Some(GameTableSection::from_table(&ids, &table)),
        ..Report::default()
    };
    Ok(PipelineRun {
        report,
        table: Some((ids, table)),
        ..PipelineRun::default()
    })
}

struct Chosen {
    allocation: Allocation,
    shapley_costs: Option<Vec<f64>>,
    fair_costs: Option<Vec<f64>>,
}

fn choose_allocation(
    table: &GameTable,
    method: MethodChoice,
    skip_shapley_above: usize,
) -> Result<Chosen, GameError> {
    match method {
        MethodChoice::Shapley => {
            let allocation = shapley(table);
            Ok(Chosen {
                shapley_costs: Some(allocation.costs.clone()),
                fair_costs: None,
                allocation,
            })
        }
        MethodChoice::FairLp => {
            let allocation = fair_core_allocation(table)?;
            Ok(Chosen {
                shapley_costs: None,
                fair_costs: Some(allocation.costs.clone()),
                allocation,
            })
        }
        MethodChoice::Auto => {
            let candidate = (table.user_count() <= skip_shapley_above).then(|| shapley(table));
            let shapley_costs = candidate.as_ref().map(|a| a.costs.clone());
            if let Some(candidate) = candidate {
                if candidate.core_status.is_in_core() {
                    return Ok(Chosen {
                        shapley_costs,
                        fair_costs: None,
                        allocation: candidate,
                    });
                }
            }
            let allocation = fair_core_allocation(table)?;
            Ok(Chosen {
                shapley_costs,
                fair_costs: Some(allocation.costs.clone()),
                allocation,
            })
        }
    }
}

fn allocation_report(ids: &[String], table: &GameTable, chosen: &Chosen) -> Report {
    let per_user: Vec<UserCost> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| UserCost {
            id: id.clone(),
            cost: table.singleton_value(i),
        })
        .collect();
    let total_non_coop = per_user.iter().map(|u| u.cost).sum();
    Report {
        digest: ReportDigest {
            users: ids.to_vec(),
            interval_count: None,
            interval_length_hours: None,
        },
        individual: Some(IndividualSection {
            per_user,
            total_non_coop,
        }),
        coalition: Some(CoalitionSection {
            cost: table.grand_value(),
        }),
        game_table: Some(GameTableSection::from_table(ids, table)),
        allocation: Some(AllocationSection::from_allocation(
            ids,
            table,
            &chosen.allocation,
        )),
        core_check: Some(crate::io::build_core_check(
            ids,
            table,
            &chosen.allocation.costs,
        )),
        ..Report::default()
    }
}

fn cost_bars(ids: &[String], table: &GameTable, chosen: &Chosen) -> Vec<CostBar> {
    ids.iter()
        .enumerate()
        .map(|(i, id)| CostBar {
            id: id.clone(),
            individual: table.singleton_value(i),
            shapley: chosen.shapley_costs.as_ref().map(|c| c[i]),
            fair_lp: chosen.fair_costs.as_ref().map(|c| c[i]),
        })
        .collect()
}

/// The full cooperative pipeline: game table, then Shapley with a core
/// check, falling back to the fair core allocation (method `auto`).
pub fn cmd_allocate(
    scenario: &Scenario,
    options: &AllocateOptions,
) -> Result<PipelineRun, PipelineError> {
    scenario.validate()?;
    let table = build_game_table(scenario)?;
    let ids = scenario.user_ids();
    let chosen = choose_allocation(&table, options.method, options.skip_shapley_above)?;

    let mut report = allocation_report(&ids, &table, &chosen);
    report.digest = digest(scenario);

    let mut run = PipelineRun {
        report,
        cost_bars: Some(cost_bars(&ids, &table, &chosen)),
        ..PipelineRun::default()
    };
    if options.with_schedules {
        let schedules: Vec<Schedule> = (0..scenario.user_count())
            .map(|u| solve_user_schedule(scenario, u))
            .collect::<Result<_, _>>()?;
        run.individual_schedules = Some(schedules);
        run.coalition_schedule = Some(solve_grand_schedule(scenario)?);
    }
    run.allocation = Some(chosen.allocation);
    run.table = Some((ids, table));
    Ok(run)
}

/// Allocation on a pre-computed game table (no scheduling solves).
pub fn cmd_allocate_from_table(
    user_ids: &[String],
    table: &GameTable,
    options: &AllocateOptions,
) -> Result<PipelineRun, PipelineError> {
    let chosen = choose_allocation(table, options.method, options.skip_shapley_above)?;
    let report = allocation_report(user_ids, table, &chosen);
    Ok(PipelineRun {
        report,
        cost_bars: Some(cost_bars(user_ids, table, &chosen)),
        allocation: Some(chosen.allocation),
        table: Some((user_ids.to_vec(), table.clone())),
        ..PipelineRun::default()
    })
}

fn audit_table(
    ids: &[String],
    table: &GameTable,
    label: impl Fn(&str) -> String,
    section: &mut AuditSection,
) {
    for v in check_subadditivity(table) {
        let name = |c: CoalitionId| -> Vec<String> {
            c.members().iter().map(|&i| label(&ids[i])).collect()
        };
        section.subadditivity_violations.push(SubadditivityRecord {
            s: name(v.s),
            t: name(v.t),
            union_cost: table.get(v.s.union(v.t)),
            split_cost: table.get(v.s) + table.get(v.t),
            excess: v.excess,
        });
    }
    for v in check_submodularity(table) {
        let name = |c: CoalitionId| -> Vec<String> {
            c.members().iter().map(|&i| label(&ids[i])).collect()
        };
        section.submodularity_violations.push(SubmodularityRecord {
            smaller: name(v.smaller),
            larger: name(v.larger),
            user: label(&ids[v.user]),
            small_margin: v.small_margin,
            large_margin: v.large_margin,
        });
    }
}

/// Structural audit of one scenario: sub-additivity (a violation indicates
/// a solver bug) and submodularity (informational).
pub fn cmd_audit(scenario: &Scenario) -> Result<PipelineRun, PipelineError> {
    scenario.validate()?;
    let table = build_game_table(scenario)?;
    let ids = scenario.user_ids();
    let mut section = AuditSection {
        scenarios_checked: 1,
        ..AuditSection::default()
    };
    audit_table(&ids, &table, |id| id.to_string(), &mut section);
    let report = Report {
        digest: digest(scenario),
        game_table: Some(GameTableSection::from_table(&ids, &table)),
        audit: Some(section),
        ..Report::default()
    };
    Ok(PipelineRun {
        report,
        table: Some((ids, table)),
        ..PipelineRun::default()
    })
}

#[derive(Debug, Clone)]
pub struct AuditRandomOptions {
    pub seed: u64,
    pub count: usize,
    /// Grid resolution for the brute-force oracle cross-checks.
    pub steps: usize,
    pub gen: GenConfig,
}

impl Default for AuditRandomOptions {
    fn default() -> Self {
        AuditRandomOptions {
            seed: 0,
            count: 20,
            steps: 11,
            gen: GenConfig::default(),
        }
    }
}

/// Random-instance audit: generates scenarios from a seed, audits each, and
/// cross-checks the LP against the brute-force oracle where the instance
/// fits the oracle guards. User labels are prefixed with the scenario
/// ordinal, e.g. `3/u0`.
pub fn cmd_audit_random(options: &AuditRandomOptions) -> Result<PipelineRun, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut section = AuditSection {
        scenarios_checked: options.count,
        ..AuditSection::default()
    };

    for ordinal in 0..options.count {
        let scenario = random_scenario(&mut rng, &options.gen);
        let table = build_game_table(&scenario)?;
        let ids = scenario.user_ids();
        audit_table(&ids, &table, |id| format!("{ordinal}/{id}"), &mut section);

        let oracle_fits = scenario.user_count() <= 2
            && scenario.time_grid.interval_count <= 5
            && (2..=21).contains(&options.steps);
        if oracle_fits {
            let members: Vec<usize> = (0..scenario.user_count()).collect();
            let lp_cost = table.grand_value();
            let brute = lp::brute_force_cost(&members, &scenario, options.steps)?;
            let tolerance = lp::oracle_tolerance(&members, &scenario, options.steps);
            let gap = (lp_cost - brute).abs();
            section.oracle_checks.push(OracleRecord {
                scenario: ordinal,
                coalition: ids.iter().map(|id| format!("{ordinal}/{id}")).collect(),
                lp_cost,
                brute_force_cost: brute,
                gap,
                tolerance,
                within_tolerance: gap <= tolerance,
            });
        }
    }

    let report = Report {
        digest: ReportDigest::default(),
        audit: Some(section),
        ..Report::default()
    };
    Ok(PipelineRun {
        report,
        ..PipelineRun::default()
    })
}
