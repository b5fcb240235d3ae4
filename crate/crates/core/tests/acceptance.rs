//! Acceptance suite. Each test covers one criterion at its stated tolerance
//! and prints a `A# PASS` line (run with `--nocapture` to see them all):
//!
//!   A1  counterexample fixture: game values and the submodularity violation
//!   A2  injected cost-table fixture: Shapley, core check, fair allocation
//!   A3  cooperation never raises the total cost (200 random scenarios)
//!   A4  sub-additivity on the same scenarios
//!   A5  fair core allocation always exists and is stable
//!   A6  LP vs brute-force oracle agreement, gap shrinking with resolution
//!   A7  ToU-only games are submodular (empirical)
//!   A8  epigraph consistency and schedule feasibility of extracted optima
//!   A9  Shapley axioms: additivity, symmetry, dummy player

use coopgrid::game::{
    build_game_table, check_subadditivity, check_submodularity, fair_core_allocation, is_in_core,
    shapley, CoalitionId, CoreStatus, GameTable,
};
use coopgrid::gen::{random_scenario, GenConfig};
use coopgrid::io::{load_game_table, load_scenario, save_scenario};
use coopgrid::lp::{
    brute_force_cost, build_coalition_lp, extract_schedule, oracle_tolerance, solve_lp, LpStatus,
};
use coopgrid::model::{evaluate_cost, Microgrid, Scenario, Tariff, TimeGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::time::Instant;

const FAMILY_SEED: u64 = 7;
const FAMILY_SIZE: usize = 200;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// The shared random family: N in 2..=4, T in 3..=6, demands in [0, 10],
/// random feasible storage specs and random tariffs.
fn random_family() -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(FAMILY_SEED);
    let cfg = GenConfig::default();
    (0..FAMILY_SIZE)
        .map(|_| random_scenario(&mut rng, &cfg))
        .collect()
}

fn non_coop_total(table: &GameTable) -> f64 {
    (0..table.user_count())
        .map(|u| table.singleton_value(u))
        .sum()
}

#[test]
fn a1_counterexample_fixture() {
    let start = Instant::now();
    let scenario = load_scenario(fixture("counterexample_scenario.json")).expect("fixture loads");
    let table = build_game_table(&scenario).expect("table builds");

    let expect = [
        (&[0usize][..], 2.0),
        (&[0, 1][..], 3.0),
        (&[0, 2][..], 3.0),
        (&[0, 1, 2][..], 5.0),
    ];
    for (members, value) in expect {
        let got = table.get(CoalitionId::from_members(members));
        assert!(
            (got - value).abs() <= 1e-9,
            "v({members:?}) = {got}, expected {value}"
        );
    }

    let violations = check_submodularity(&table);
    let hit = violations
        .iter()
        .find(|v| {
            v.smaller == CoalitionId::from_members(&[0])
                && v.larger == CoalitionId::from_members(&[0, 1])
                && v.user == 2
        })
        .expect("(S={1}, T={1,2}, i=3) violation must be reported");
    assert!((hit.small_margin - 1.0).abs() <= 1e-9);
    assert!((hit.large_margin - 2.0).abs() <= 1e-9);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("A1 PASS: counterexample game values exact, violation margins 1 vs 2 ({elapsed:?})");
}

#[test]
fn a2_injected_table_fixture() {
    let start = Instant::now();
    let (ids, table) = load_game_table(fixture("unstable_cost_table.json")).expect("fixture loads");
    assert_eq!(ids, vec!["1", "2", "3"]);

    let shap = shapley(&table);
    let expected = [24994.33, 20300.83, 20878.83];
    for (got, want) in shap.costs.iter().zip(expected) {
        assert!((got - want).abs() <= 0.5, "shapley {got} vs {want}");
    }
    assert!((shap.costs[0] + shap.costs[2] - 45873.0).abs() <= 1.0);
    match is_in_core(&shap.costs, &table) {
        CoreStatus::Violated(violations) => {
            assert_eq!(violations.len(), 1, "exactly the {{1,3}} constraint");
            assert_eq!(violations[0].coalition, CoalitionId::from_members(&[0, 2]));
        }
        CoreStatus::InCore => panic!("Shapley must violate the core on this table"),
    }

    let fair = fair_core_allocation(&table).expect("core is non-empty");
    let expected_fair = [24881.0, 20323.0, 20970.0];
    for (got, want) in fair.costs.iter().zip(expected_fair) {
        assert!((got - want).abs() <= 2.0, "fair {got} vs {want}");
    }
    let stats = fair.fairness.expect("fair allocation carries stats");
    assert!((stats.delta - 0.02138).abs() <= 1e-3, "delta {}", stats.delta);

    // All seven records hold; {1,3} and the grand coalition are tight.
    let records = coopgrid::io::build_core_check(&ids, &table, &fair.costs);
    assert_eq!(records.len(), 7);
    assert!(records.iter().all(|r| r.satisfied));
    let tight = |members: &[usize]| {
        let c: Vec<String> = members.iter().map(|&i| ids[i].clone()).collect();
        let record = records.iter().find(|r| r.coalition == c).unwrap();
        (record.allocated - record.standalone).abs()
    };
    assert!(tight(&[0, 2]) <= 1e-4, "{{1,3}} constraint must bind");
    assert!(tight(&[0, 1, 2]) <= 1e-4, "grand-coalition equality must bind");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("A2 PASS: Shapley and fair allocations match the reference table ({elapsed:?})");
}

#[test]
fn a3_cooperation_never_raises_total_cost() {
    let start = Instant::now();
    for (i, scenario) in random_family().iter().enumerate() {
        let table = build_game_table(scenario).expect("feasible by construction");
        let coop = table.grand_value();
        let non_coop = non_coop_total(&table);
        assert!(
            coop <= non_coop + 1e-6,
            "scenario {i}: coop {coop} > non-coop {non_coop}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!("A3 PASS: f_coop <= f_non_coop on {FAMILY_SIZE} random scenarios ({elapsed:?})");
}

#[test]
fn a4_subadditivity_suite() {
    let start = Instant::now();
    for (i, scenario) in random_family().iter().enumerate() {
        let table = build_game_table(scenario).expect("feasible by construction");
        let violations = check_subadditivity(&table);
        assert!(violations.is_empty(), "scenario {i}: {violations:?}");
    }
    let elapsed = start.elapsed();
    println!("A4 PASS: no sub-additivity violations on {FAMILY_SIZE} scenarios ({elapsed:?})");
}

#[test]
fn a5_core_is_never_empty() {
    let start = Instant::now();
    for (i, scenario) in random_family().iter().enumerate() {
        let table = build_game_table(scenario).expect("feasible by construction");
        let allocation = fair_core_allocation(&table)
            .unwrap_or_else(|e| panic!("scenario {i}: fair allocation failed: {e}"));
        assert!(
            allocation.core_status.is_in_core(),
            "scenario {i}: fair allocation left the core"
        );
    }
    let elapsed = start.elapsed();
    println!("A5 PASS: fair core allocation exists and is stable on {FAMILY_SIZE} scenarios ({elapsed:?})");
}

#[test]
fn a6_oracle_agreement_and_resolution() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(FAMILY_SEED ^ 0xace);
    let cfg = GenConfig::oracle_sized();

    // 50 instances at steps = 11: LP and oracle agree within eps(steps).
    for i in 0..50 {
        let scenario = random_scenario(&mut rng, &cfg);
        let members: Vec<usize> = (0..scenario.user_count()).collect();
        let lp = solve_lp(&build_coalition_lp(&members, &scenario).unwrap()).unwrap();
        assert_eq!(lp.status, LpStatus::Optimal);
        let lp_cost = lp.objective().unwrap();
        let brute = brute_force_cost(&members, &scenario, 11).unwrap();
        let tolerance = oracle_tolerance(&members, &scenario, 11);
        assert!(
            (lp_cost - brute).abs() <= tolerance,
            "instance {i}: |{lp_cost} - {brute}| > {tolerance}"
        );
    }

    // Doubling the grid resolution shrinks the mean gap on 10 fixed
    // instances (nested grids: 6 -> 11 -> 21 points).
    let small = GenConfig {
        intervals: (2, 3),
        ..GenConfig::oracle_sized()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(FAMILY_SEED ^ 0xbee);
    let instances: Vec<Scenario> = (0..10).map(|_| random_scenario(&mut rng, &small)).collect();
    let mean_gap = |steps: usize| -> f64 {
        instances
            .iter()
            .map(|scenario| {
                let members: Vec<usize> = (0..scenario.user_count()).collect();
                let lp = solve_lp(&build_coalition_lp(&members, scenario).unwrap())
                    .unwrap()
                    .objective()
                    .unwrap();
                let brute = brute_force_cost(&members, scenario, steps).unwrap();
                (lp - brute).abs()
            })
            .sum::<f64>()
            / instances.len() as f64
    };
    let gaps = [mean_gap(6), mean_gap(11), mean_gap(21)];
    assert!(
        gaps[1] <= gaps[0] + 1e-9 && gaps[2] <= gaps[1] + 1e-9,
        "mean gaps must shrink: {gaps:?}"
    );

    let elapsed = start.elapsed();
    println!(
        "A6 PASS: oracle within eps on 50 instances; mean gaps {:.4} -> {:.4} -> {:.4} ({elapsed:?})",
        gaps[0], gaps[1], gaps[2]
    );
}

/// Empirical check of the claim that games without a peak-demand term are
/// submodular. The claim FAILS under the no-export constraint `x >= 0`:
/// a larger coalition's aggregate demand relaxes the discharge cap
/// `e_t <= d_t`, so a user's marginal contribution can grow with coalition
/// size. Found counterexamples are preserved and reported, as required; a
/// frozen copy lives at `tests/fixtures/tou_submodularity_counterexample.json`
/// and is re-verified against independently computed values below.
#[test]
fn a7_tou_only_submodularity_empirical_check() {
    let start = Instant::now();
    let mut counterexamples = Vec::new();
    for (i, scenario) in random_family().iter().enumerate() {
        let mut tou_only = scenario.clone();
        tou_only.tariff.demand_charge = 0.0;
        let table = build_game_table(&tou_only).expect("feasible by construction");
        let violations = check_submodularity(&table);
        if !violations.is_empty() {
            // A genuine counterexample separates the margins by at least
            // 10x the check tolerance; anything smaller would point at
            // solver noise, i.e. an implementation bug. The committed
            // fixture below pins one instance against independent values.
            for v in &violations {
                let gap = v.large_margin - v.small_margin;
                let scale = v.small_margin.abs().max(v.large_margin.abs()).max(1.0);
                assert!(
                    gap > 1e-5 * scale,
                    "scenario {i}: margin gap {gap} is within solver noise; \
                     this would be a solver bug, not a counterexample"
                );
            }
            let path = std::env::temp_dir().join(format!("a7_counterexample_{i}.json"));
            save_scenario(&tou_only, &path).unwrap();
            counterexamples.push((i, violations.len(), path));
        }
    }
    let elapsed = start.elapsed();
    if counterexamples.is_empty() {
        println!("A7 PASS: ToU-only games submodular on {FAMILY_SIZE} scenarios ({elapsed:?})");
    } else {
        for (i, count, path) in counterexamples.iter().take(3) {
            println!(
                "A7 COUNTEREXAMPLE: scenario {i} ({count} violations) preserved at {}",
                path.display()
            );
        }
        println!(
            "A7 PASS (claim contradicted): {} of {FAMILY_SIZE} ToU-only games are NOT \
             submodular under the no-export constraint; counterexamples preserved (first \
             three listed) and re-verified by a7_preserved_counterexample_is_genuine \
             ({elapsed:?})",
            counterexamples.len()
        );
    }
}

/// Frozen verification of the preserved ToU-only counterexample. The
/// expected game values were computed with an independent LP solver; the
/// violated inequalities follow from them by arithmetic.
#[test]
fn a7_preserved_counterexample_is_genuine() {
    let scenario =
        load_scenario(fixture("tou_submodularity_counterexample.json")).expect("fixture loads");
    assert_eq!(scenario.tariff.demand_charge, 0.0);
    let table = build_game_table(&scenario).unwrap();

    // Independently computed coalition costs (HiGHS, same model).
    let expected = [
        (&[0usize][..], 20.272479109),
        (&[1][..], 21.146176785),
        (&[2][..], 17.744717798),
        (&[0, 1][..], 41.418655894),
        (&[0, 2][..], 38.003149078),
        (&[1, 2][..], 38.876846753),
        (&[0, 1, 2][..], 59.149325862),
    ];
    for (members, value) in expected {
        let got = table.get(CoalitionId::from_members(members));
        assert!(
            (got - value).abs() <= 1e-6 * value.abs(),
            "v({members:?}) = {got}, independent solver got {value}"
        );
    }

    // Adding user 0 to {2} contributes less than adding it to {1,2}:
    // 20.258431 < 20.272479 breaks the marginal-contribution inequality.
    let violations = check_submodularity(&table);
    let hit = violations
        .iter()
        .find(|v| {
            v.smaller == CoalitionId::from_members(&[2])
                && v.larger == CoalitionId::from_members(&[1, 2])
                && v.user == 0
        })
        .expect("the preserved counterexample must violate submodularity");
    assert!((hit.small_margin - 20.258431280).abs() <= 1e-5);
    assert!((hit.large_margin - 20.272479109).abs() <= 1e-5);
    println!("A7 fixture verified: ToU-only submodularity genuinely fails under x >= 0");
}

/// Solves one coalition, then checks the epigraph identity and all schedule
/// invariants on the extracted optimum.
fn assert_epigraph_consistent(scenario: &Scenario, members: &[usize], context: &str) {
    let lp = build_coalition_lp(members, scenario).unwrap();
    let solution = solve_lp(&lp).unwrap();
    assert_eq!(solution.status, LpStatus::Optimal, "{context}");
    coopgrid::lp::check_solution(&lp, &solution).unwrap_or_else(|e| panic!("{context}: {e}"));
    let schedule = extract_schedule(&lp, &solution, scenario, members).unwrap();
    schedule
        .validate(scenario)
        .unwrap_or_else(|e| panic!("{context}: schedule invalid: {e}"));
    let direct = evaluate_cost(&schedule.grid_draw, &scenario.tariff).unwrap();
    let reported = solution.objective().unwrap();
    assert!(
        (direct - reported).abs() <= 1e-6 * reported.abs().max(1.0),
        "{context}: objective {reported} vs evaluate_cost {direct}"
    );
}

#[test]
fn a8_epigraph_consistency_everywhere() {
    let start = Instant::now();

    // The counterexample fixture, every coalition.
    let counterexample = load_scenario(fixture("counterexample_scenario.json")).unwrap();
    for mask in 1u32..8 {
        let members = CoalitionId::from_mask(mask).members();
        assert_epigraph_consistent(
            &counterexample,
            &members,
            &format!("counterexample mask {mask}"),
        );
    }

    // Every coalition of every scenario in the random family.
    for (i, scenario) in random_family().iter().enumerate() {
        let n = scenario.user_count();
        for mask in 1u32..(1 << n) {
            let members = CoalitionId::from_mask(mask).members();
            assert_epigraph_consistent(scenario, &members, &format!("scenario {i} mask {mask}"));
        }
    }

    // The oracle-sized instances from A6.
    let mut rng = ChaCha8Rng::seed_from_u64(FAMILY_SEED ^ 0xace);
    let cfg = GenConfig::oracle_sized();
    for i in 0..50 {
        let scenario = random_scenario(&mut rng, &cfg);
        let members: Vec<usize> = (0..scenario.user_count()).collect();
        assert_epigraph_consistent(&scenario, &members, &format!("oracle instance {i}"));
    }

    let elapsed = start.elapsed();
    println!("A8 PASS: epigraph identity and schedule invariants hold on every solve ({elapsed:?})");
}

#[test]
fn a9_shapley_axioms() {
    let start = Instant::now();

    // Additive games: psi equals the per-user weights exactly.
    for weights in [vec![3.0, 7.0], vec![2.0, 5.0, 9.0], vec![1.0, 4.0, 2.0, 8.0, 6.0]] {
        let n = weights.len();
        let values: Vec<f64> = (0u32..1 << n)
            .map(|mask| {
                (0..n)
                    .filter(|&i| mask & (1 << i) != 0)
                    .map(|i| weights[i])
                    .sum()
            })
            .collect();
        let table = GameTable::new(n, values).unwrap();
        let allocation = shapley(&table);
        assert_eq!(allocation.costs, weights, "additive game must be exact");
    }

    // Symmetric users: identical demand profiles receive equal costs.
    let symmetric = Scenario {
        time_grid: TimeGrid {
            interval_count: 3,
            interval_length_hours: 1.0,
        },
        tariff: Tariff {
            tou_prices: vec![1.0, 2.0, 0.5],
            demand_charge: 4.0,
        },
        microgrids: vec![
            Microgrid {
                id: "a".into(),
                demand: vec![3.0, 1.0, 2.0],
                storage: None,
            },
            Microgrid {
                id: "b".into(),
                demand: vec![3.0, 1.0, 2.0],
                storage: None,
            },
            Microgrid {
                id: "c".into(),
                demand: vec![0.0, 5.0, 1.0],
                storage: None,
            },
        ],
    };
    let table = build_game_table(&symmetric).unwrap();
    let allocation = shapley(&table);
    assert!(
        (allocation.costs[0] - allocation.costs[1]).abs() <= 1e-9,
        "symmetric users must receive equal costs"
    );

    // Dummy player: zero demand, no storage, no marginal contribution.
    let mut with_dummy = symmetric.clone();
    with_dummy.microgrids.push(Microgrid {
        id: "dummy".into(),
        demand: vec![0.0, 0.0, 0.0],
        storage: None,
    });
    let table = build_game_table(&with_dummy).unwrap();
    let allocation = shapley(&table);
    assert!(
        allocation.costs[3].abs() <= 1e-6,
        "dummy user cost {} must vanish",
        allocation.costs[3]
    );

    let elapsed = start.elapsed();
    println!("A9 PASS: additivity exact, symmetry within 1e-9, dummy within 1e-6 ({elapsed:?})");
}
