use agingbus_core::branching::{BranchingModel, ImmigrationSpec, PopulationState};
use agingbus_core::bus::{simulate_bus_direct, simulate_two_buses, Discipline, TwoBusConfig};
use agingbus_core::distributions::QueueParams;
use agingbus_core::means::mean_forward;
use agingbus_core::profile::AgeProfile;
use agingbus_core::seed::replicate_rng;
use agingbus_core::stats::Summary;
use rayon::prelude::*;

const HORIZON: usize = 25;
const REPLICATES: u64 = 10_000;

fn check_means_against_recursion(master: u64, immigration: ImmigrationSpec) {
    let alpha = 0.4;
    let profile = AgeProfile::constant(3);
    let model = BranchingModel::new(profile.clone(), alpha).unwrap();
    let totals: Vec<Vec<f64>> = (0..REPLICATES)
        .into_par_iter()
        .map(|k| {
            let path = model
                .simulate(
                    &immigration,
                    HORIZON,
                    PopulationState::newborn(),
                    &mut replicate_rng(master, k),
                )
                .unwrap();
            path.records.iter().map(|r| r.total as f64).collect()
        })
        .collect();
    let means = immigration.means(alpha, HORIZON);
    let exact = mean_forward(&profile, model.m(), HORIZON, Some(&means), &[1.0]).unwrap();
    for n in 1..=HORIZON {
        let column: Vec<f64> = totals.iter().map(|t| t[n]).collect();
        let s = Summary::of(&column);
        let z = (s.mean - exact.total(n)) / s.std_error;
        assert!(
            z.abs() <= 3.0,
            "n = {n}: mean {} vs {} ({z:.2} SE)",
            s.mean,
            exact.total(n)
        );
    }
}

#[test]
fn mean_population_without_immigration() {
    check_means_against_recursion(11, ImmigrationSpec::None);
}

#[test]
fn mean_population_with_busy_period_immigration() {
    let times = (0..=HORIZON).map(|n| n.min(2) as f64).collect();
    check_means_against_recursion(12, ImmigrationSpec::BusyPeriod { times });
}

/// The follower never trails an independent single bus delayed by `mu`:
/// `H2_n <= H~1_n + mu` in distribution. Runs that merged before `n` are
/// counted as not exceeding any level, which can only weaken the left side.
#[test]
fn follower_is_dominated_by_delayed_single_bus() {
    let params = QueueParams::new(0.3, 1.0).unwrap();
    let discipline = Discipline::constant(2);
    let (n, mu, reps) = (50usize, 1.75, 1000u64);
    let config = TwoBusConfig {
        mu,
        horizon: n,
        cap: 1_000_000_000_000,
        separation: None,
    };
    let follower: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let run = simulate_two_buses(params, &discipline, &config, &mut replicate_rng(21, k)).unwrap();
            run.follower.departures.get(n).copied().filter(|_| !run.merged())
        })
        .collect();
    let single: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|k| {
            simulate_bus_direct(params, &discipline, n, &mut replicate_rng(22, k))
                .unwrap()
                .departures[n]
                + mu
        })
        .collect();
    let unmerged = follower.iter().flatten().count();
    assert!(unmerged > 20, "only {unmerged} runs reached station {n} apart");

    // one-sided two-sample band at the 1% level
    let band = (-(0.01f64.ln()) / 2.0 * 2.0 / reps as f64).sqrt();
    let mut grid: Vec<f64> = single.clone();
    grid.extend(follower.iter().flatten());
    let mut worst = f64::NEG_INFINITY;
    for &x in &grid {
        let above2 = follower.iter().flatten().filter(|&&h| h > x).count() as f64 / reps as f64;
        let above1 = single.iter().filter(|&&h| h > x).count() as f64 / reps as f64;
        worst = worst.max(above2 - above1);
    }
    assert!(
        worst <= band,
        "P(H2 > x) exceeds P(H1 + mu > x) by {worst} (band {band})"
    );
}
