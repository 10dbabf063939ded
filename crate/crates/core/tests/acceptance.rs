//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::Rng;

use d2dsched::action::SchedulingAction;
use d2dsched::channel::LinkBudget;
use d2dsched::clustering::{hierarchical_cluster, pathloss_dissimilarity, ClusterPartition, PairwiseDissimilarity};
use d2dsched::config::ExperimentConfig;
use d2dsched::ergodic::{ErgodicModel, Objective, QuadratureConfig};
use d2dsched::rng::{stream, Purpose};
use d2dsched::schedulers::{
    banditlinq_select, banditlinq_update, lquasiopt_schedule, random_explore_then_commit, BanditState, UcbConfig,
};
use d2dsched::simulator::{bandit_partition, cumulative_regret, replicate, run_scheduler, SeedEnvironment};
use d2dsched::topology::{generate_topology, NetworkTopology, PathGains, Point, TopologyParams};
use d2dsched::trace::trace_to_string;
use d2dsched::validation::{cluster_mixture, ergodic_vs_monte_carlo, outage, single_link_e1};

const VALIDATION_SEED: u64 = 20_240_101;
const PROPERTY_CASES: u32 = 1000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text, &[]).expect("acceptance config")
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and standard error of the per-seed differences.
fn paired(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (d.len() as f64 - 1.0);
    (m, (var / d.len() as f64).sqrt())
}

fn ergodic_oracle() -> Outcome {
    let t = Instant::now();
    let checks =
        ergodic_vs_monte_carlo(5, &[1, 10], 2_000_000, &QuadratureConfig::default(), VALIDATION_SEED).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} z={:.2} rel={:.1e}", c.case, c.z_score.unwrap_or(f64::NAN), c.rel_error))
        .collect();
    let worst_z = checks.iter().filter_map(|c| c.z_score).fold(0.0f64, |a, z| a.max(z.abs()));
    let worst_rel = checks
        .iter()
        .filter(|c| c.computed > 0.1)
        .map(|c| c.rel_error)
        .fold(0.0, f64::max);
    outcome(
        failed.is_empty() && elapsed <= 300.0,
        format!(
            "{} actions, max |z| {worst_z:.2}, max rel {worst_rel:.1e}, {elapsed:.0}s, outside tolerance: {failed:?}",
            checks.len()
        ),
    )
}

fn single_link() -> Outcome {
    let checks = single_link_e1(&[1.0, 10.0, 100.0, 1e6], &QuadratureConfig::default()).unwrap();
    let worst = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    outcome(checks.iter().all(|c| c.passed), format!("max rel error {worst:.1e} (tol 1e-6)"))
}

fn mixture() -> Outcome {
    let checks = cluster_mixture(1, &QuadratureConfig::default(), VALIDATION_SEED).unwrap();
    let worst = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    outcome(
        checks.len() == 4 && checks.iter().all(|c| c.passed),
        format!("4 sub-actions, max rel error {worst:.1e} (tol 1e-8)"),
    )
}

fn outage_check() -> Outcome {
    let checks = outage(&[1.0, 3.0, 5.0], &[10.0, 1e3], 1_000_000, VALIDATION_SEED).unwrap();
    let mc: Vec<_> = checks.iter().filter(|c| c.suite == "outage_mc").collect();
    let worst = mc.iter().filter_map(|c| c.z_score).fold(0.0f64, |a, z| a.max(z.abs()));
    outcome(
        mc.len() == 6 && checks.iter().all(|c| c.passed),
        format!("6 cases, max |z| {worst:.2} (tol 3)"),
    )
}

fn flat_ucb() -> Outcome {
    let c = config(
        r#"
[network]
links = 3
[run]
blocks = 5000
seeds = 20
seed = 1
[[scheduler]]
kind = "flat_ucb1"
alpha = 4.0
"#,
    );
    let r = replicate(&c).unwrap();
    let mut converged = 0;
    let mut sublinear = 0;
    for trace in &r.traces {
        let env = SeedEnvironment::new(&c, trace.seed).unwrap();
        let model = ErgodicModel::new(&env.epochs[0].1, &env.budget, 1).unwrap();
        let (best, _) = model.exhaustive_optimal(&Objective::SumThroughput, 20).unwrap();
        let best = best.to_string();
        let hits = trace.rows[4000..].iter().filter(|r| r.action == best).count();
        if hits >= 900 {
            converged += 1;
        }
        let half = trace.rows[2499].regret_optimal.unwrap();
        let full = trace.rows[4999].regret_optimal.unwrap();
        if full < 1.5 * half {
            sublinear += 1;
        }
    }
    outcome(
        converged >= 16 && sublinear >= 16,
        format!(
            "best arm in >= 90% of last 1000 blocks for {converged}/20 seeds, Reg[5000] < 1.5 Reg[2500] for {sublinear}/20"
        ),
    )
}

fn lquasiopt_vs_random() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let budget_snr = LinkBudget::snr_from_power(0.08, -143.97);
    for k in [10usize, 12, 14] {
        let (mut opt, mut quasi, mut random) = (Vec::new(), Vec::new(), Vec::new());
        let mut counts_ok = true;
        let mut evaluations = Vec::new();
        for s in 0..20u64 {
            let params = TopologyParams {
                links: k,
                area_side: 500.0,
                ..TopologyParams::default()
            };
            let topo = generate_topology(&params, &mut stream(s, Purpose::Topology, k as u64)).unwrap();
            let gains = topo.path_gains();
            let budget = LinkBudget::uniform(budget_snr, k, 5.0).unwrap();
            let model = ErgodicModel::new(&gains, &budget, 1).unwrap();
            let objective = Objective::SumThroughput;
            let partition = hierarchical_cluster(&pathloss_dissimilarity(&gains), 8, None).unwrap();
            let q = lquasiopt_schedule(&model, &partition, &objective).unwrap();
            let expected: u64 = partition.sizes().iter().map(|&n| 1u64 << n).sum();
            counts_ok &= q.evaluations == expected && q.evaluations < 1 << k;
            evaluations.push(q.evaluations as f64);
            let (_, best) = model.exhaustive_optimal(&objective, 20).unwrap();
            let (_, rnd) = random_explore_then_commit(
                &model,
                &objective,
                q.evaluations,
                &mut stream(s, Purpose::Scheduler, k as u64),
            )
            .unwrap();
            opt.push(best);
            quasi.push(model.sum_throughput(&q.action.as_activity()).unwrap());
            random.push(rnd);
        }
        let (o, q, r) = (mean(&opt), mean(&quasi), mean(&random));
        let good = o >= q && q >= r && q >= 0.9 * o && counts_ok;
        ok &= good;
        lines.push(format!(
            "K={k}: optimal {o:.3} quasi {q:.3} random {r:.3}, mean trials {:.0}{}",
            mean(&evaluations),
            if counts_ok { "" } else { " (count mismatch)" }
        ));
    }
    outcome(ok, lines.join("; "))
}

const ORDERING: &str = r#"
[network]
links = 30
[run]
blocks = 5000
seeds = 20
seed = 1001
regret_cap = 0
[[scheduler]]
kind = "banditlinq"
alpha = 1e-9
max_cluster_size = 8
[[scheduler]]
kind = "banditlinq"
label = "banditlinq_flip"
alpha = 1e-9
max_cluster_size = 8
flip_prob = 0.1
[[scheduler]]
kind = "itlinq"
[[scheduler]]
kind = "d_onoff"
[[scheduler]]
kind = "random"
[[scheduler]]
kind = "no_scheduling"
"#;

fn ordering() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for k in [10usize, 20, 30] {
        let c = ExperimentConfig::from_toml_str(ORDERING, &[format!("network.links={k}").parse().unwrap()]).unwrap();
        let r = replicate(&c).unwrap();
        let n = c.schedulers.len();
        let per = |s: usize| -> Vec<f64> { (0..20).map(|i| r.traces[i * n + s].summary.r_avg).collect() };
        let means: Vec<String> = (0..n)
            .map(|s| format!("{} {:.2}", c.schedulers[s].label(), mean(&per(s))))
            .collect();
        lines.push(format!("K={k}: {}", means.join(", ")));
        if k == 30 {
            let (bandit, flip, itlinq, donoff, random, none) = (per(0), per(1), per(2), per(3), per(4), per(5));
            let gaps = [
                ("banditlinq>itlinq", paired(&bandit, &itlinq)),
                ("banditlinq>d_onoff", paired(&bandit, &donoff)),
                ("banditlinq>random", paired(&bandit, &random)),
                ("random>no_scheduling", paired(&random, &none)),
                ("flip>random", paired(&flip, &random)),
                ("flip>no_scheduling", paired(&flip, &none)),
            ];
            for (name, (d, se)) in gaps {
                let good = d > se;
                ok &= good;
                lines.push(format!("{name} {d:+.2} (se {se:.2}) {}", if good { "holds" } else { "violated" }));
            }
        }
    }
    outcome(ok, lines.join("; "))
}

/// Two groups of three links: transmitters 10 m apart on a line within a
/// group, the groups 800 m apart.
fn two_groups(seed: u64) -> NetworkTopology {
    let mut rng = stream(seed, Purpose::Topology, 0);
    let mut tx = Vec::new();
    let mut rx = Vec::new();
    for g in 0..2 {
        for i in 0..3 {
            let t = Point::new(100.0 + 800.0 * g as f64 + 10.0 * i as f64, 500.0);
            let angle = rng.random::<f64>() * TAU;
            tx.push(t);
            rx.push(Point::new(t.x + 50.0 * angle.cos(), t.y + 50.0 * angle.sin()));
        }
    }
    let beta = (0..6)
        .map(|_| (0..6).map(|_| rng.random_range(3.5..=4.5)).collect())
        .collect();
    NetworkTopology::from_parts(1000.0, 1.0, tx, rx, beta).unwrap()
}

const CLUSTERED: &str = r#"
[network]
links = 20
area_side = 500.0
[network.deployment]
kind = "clustered"
groups = 5
spread = 25.0
[run]
blocks = 5000
seeds = 20
seed = 2001
regret_cap = 0
[[scheduler]]
kind = "banditlinq"
label = "feedback"
clustering = "feedback"
alpha = 1e-9
max_cluster_size = 5
[[scheduler]]
kind = "banditlinq"
label = "random"
alpha = 1e-9
max_cluster_size = 5
"#;

fn clustering_recovery() -> Outcome {
    let c = config(
        r#"
[network]
links = 6
[run]
blocks = 20
[[scheduler]]
kind = "banditlinq"
clustering = "feedback"
t_clust = 10
max_cluster_size = 3
"#,
    );
    let truth = ClusterPartition::new(6, vec![vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
    let mut recovered = 0;
    let mut recorded = true;
    for seed in 1..=20u64 {
        let env = SeedEnvironment::with_topology(&c, seed, two_groups(seed)).unwrap();
        let p = bandit_partition(&c.schedulers[0], &env).unwrap();
        if p == truth {
            recovered += 1;
        }
        recorded &= run_scheduler(&c, 0, &env).unwrap().summary.partition == p.to_string();
    }
    let cl = config(CLUSTERED);
    let r = replicate(&cl).unwrap();
    let feedback: Vec<f64> = (0..20).map(|i| r.traces[2 * i].summary.r_avg).collect();
    let random: Vec<f64> = (0..20).map(|i| r.traces[2 * i + 1].summary.r_avg).collect();
    let (f, rn) = (mean(&feedback), mean(&random));
    let (d, se) = paired(&feedback, &random);
    outcome(
        recovered >= 18 && recorded && f >= rn,
        format!("recovered {recovered}/20; clustered 0.5 km: feedback {f:.2} vs random {rn:.2} (paired {d:+.2}, se {se:.2})"),
    )
}

const DETERMINISM: &str = r#"
[network]
links = 8
area_side = 400.0
[channel]
flip_prob = 0.05
[run]
blocks = 400
seeds = 3
seed = 77
[mobility]
enabled = true
period_blocks = 50
[[scheduler]]
kind = "banditlinq"
clustering = "feedback"
max_cluster_size = 3
discount = 0.999
[[scheduler]]
kind = "banditlinq"
label = "random_clusters"
max_cluster_size = 3
[[scheduler]]
kind = "random"
[[scheduler]]
kind = "d_onoff"
[[scheduler]]
kind = "itlinq"
[[scheduler]]
kind = "lquasiopt"
max_cluster_size = 3
"#;

fn determinism() -> Outcome {
    let csvs = |workers: usize| -> Vec<String> {
        let c = ExperimentConfig::from_toml_str(DETERMINISM, &[format!("run.workers={workers}").parse().unwrap()])
            .unwrap();
        replicate(&c)
            .unwrap()
            .traces
            .iter()
            .map(|t| trace_to_string(&t.rows).unwrap())
            .collect()
    };
    let first = csvs(1);
    let second = csvs(1);
    let parallel = csvs(8);
    let same = first == second && first == parallel;
    outcome(
        same && first.len() == 18,
        format!("{} traces, repeat identical: {}, workers 1 vs 8 identical: {}", first.len(), first == second, first == parallel),
    )
}

fn run_property<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> String
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(PropConfig {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..PropConfig::default()
    });
    match runner.run(&strategy, test) {
        Ok(()) => String::new(),
        Err(e) => format!("{name}: {e}"),
    }
}

fn gains_strategy(max_links: usize) -> impl Strategy<Value = PathGains> {
    (1..=max_links).prop_flat_map(|k| {
        prop::collection::vec(1e-12f64..1e-6, k * k).prop_map(move |v| PathGains::from_matrix(k, v).unwrap())
    })
}

fn partition_strategy(max_links: usize) -> impl Strategy<Value = ClusterPartition> {
    (1..=max_links, any::<u64>(), 1usize..=4).prop_map(|(k, seed, size)| {
        let mut rng = stream(seed, Purpose::Clustering, 0);
        let c = k.div_ceil(size);
        d2dsched::clustering::random_cluster(k, c, &mut rng).unwrap()
    })
}

fn invariants() -> Outcome {
    let mut failures = Vec::new();

    failures.push(run_property(
        "trial conservation",
        (partition_strategy(8), prop::collection::vec(0.0f64..1.0, 1..80)),
        |(partition, rewards)| {
            let k = partition.links();
            let range = 3.0 * k as f64;
            let mut state = BanditState::new(partition.clone(), UcbConfig::default(), range, 20).unwrap();
            for r in &rewards {
                let (arms, _) = banditlinq_select(&state);
                banditlinq_update(&mut state, &arms, r * range).unwrap();
            }
            for c in 0..partition.len() {
                let total: u64 = state.trials(c).iter().sum();
                prop_assert_eq!(total, rewards.len() as u64);
                let counts: f64 = state.counts(c).iter().sum();
                prop_assert!((counts - rewards.len() as f64).abs() < 1e-9);
            }
            Ok(())
        },
    ));

    failures.push(run_property(
        "reward range preservation",
        (partition_strategy(8), prop::collection::vec(0.0f64..1.0, 1..80), 0.5f64..=1.0),
        |(partition, rewards, discount)| {
            let k = partition.links();
            let range = 3.0 * k as f64;
            let cfg = UcbConfig { alpha: 4.0, discount };
            let mut state = BanditState::new(partition.clone(), cfg, range, 20).unwrap();
            for r in &rewards {
                let (arms, _) = banditlinq_select(&state);
                banditlinq_update(&mut state, &arms, r * range).unwrap();
            }
            for c in 0..partition.len() {
                for arm in 0..state.trials(c).len() {
                    if let Some(mu) = state.empirical_mean(c, arm) {
                        prop_assert!((-1e-9..=range + 1e-9).contains(&mu));
                    }
                }
            }
            Ok(())
        },
    ));

    failures.push(run_property(
        "monotonicity under interferer deactivation",
        (gains_strategy(4), any::<u64>(), any::<prop::sample::Index>(), any::<prop::sample::Index>()),
        |(gains, bits, target, other)| {
            let k = gains.links();
            let budget = LinkBudget::uniform(1e7, k, 3.0).unwrap();
            let model = ErgodicModel::new(&gains, &budget, 1).unwrap();
            let quad = QuadratureConfig::default();
            let target = target.index(k);
            let other = other.index(k);
            let mut action = SchedulingAction::from_index(bits & ((1u64 << k) - 1), k);
            action.set(target, true);
            action.set(other, true);
            let before = model.link_rate(target, &action.as_activity(), &quad).unwrap();
            let thr_before = model.link_success(target, &action.as_activity());
            if other != target {
                action.set(other, false);
            }
            let after = model.link_rate(target, &action.as_activity(), &quad).unwrap();
            let thr_after = model.link_success(target, &action.as_activity());
            prop_assert!(after >= before * (1.0 - 1e-7) - 1e-10);
            prop_assert!(thr_after >= thr_before - 1e-12);
            Ok(())
        },
    ));

    failures.push(run_property(
        "partition validity",
        (2usize..12, 1usize..6).prop_flat_map(|(k, size)| {
            (Just(k), Just(size), prop::collection::vec(0.0f64..1.0, k * (k - 1) / 2))
        }),
        |(k, size, upper)| {
            let mut m = vec![0.0; k * k];
            let mut it = upper.iter();
            for i in 0..k {
                for j in i + 1..k {
                    let v = *it.next().unwrap();
                    m[i * k + j] = v;
                    m[j * k + i] = v;
                }
            }
            let d = PairwiseDissimilarity::from_matrix(k, m).unwrap();
            let p = hierarchical_cluster(&d, size, None).unwrap();
            p.validate().unwrap();
            let mut seen: Vec<usize> = p.clusters().iter().flatten().copied().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..k).collect::<Vec<_>>());
            prop_assert!(p.max_size() <= size);
            prop_assert!(p.len() >= k.div_ceil(size));
            Ok(())
        },
    ));

    failures.push(run_property(
        "regret monotonicity",
        (
            prop::collection::vec(0.0f64..50.0, 1..16),
            prop::collection::vec(any::<prop::sample::Index>(), 0..100),
        ),
        |(means, visits)| {
            let table: HashMap<u64, f64> = means.iter().enumerate().map(|(j, &m)| (j as u64, m)).collect();
            let best = means.iter().cloned().fold(f64::MIN, f64::max);
            let visited: Vec<u64> = visits.iter().map(|i| i.index(means.len()) as u64).collect();
            let series = cumulative_regret(&visited, best, &table).unwrap();
            prop_assert_eq!(series.len(), visited.len());
            let mut last = 0.0;
            for r in series {
                prop_assert!(r >= last - 1e-9);
                last = r;
            }
            Ok(())
        },
    ));

    let failures: Vec<String> = failures.into_iter().filter(|f| !f.is_empty()).collect();
    outcome(
        failures.is_empty(),
        format!("5 properties x {PROPERTY_CASES} cases; failures: {failures:?}"),
    )
}

fn main() {
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    type Criterion = (usize, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (1, "ergodic sum SE vs Monte Carlo", ergodic_oracle),
        (2, "single-link exponential integral", single_link),
        (3, "cluster utility mixture", mixture),
        (4, "single-link outage", outage_check),
        (5, "flat UCB1 convergence", flat_ucb),
        (6, "L-QuasiOpt vs budget-matched random search", lquasiopt_vs_random),
        (7, "average sum-SE ordering", ordering),
        (8, "feedback clustering", clustering_recovery),
        (9, "determinism", determinism),
        (10, "invariant suites", invariants),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        if !result.passed {
            failed += 1;
        }
        println!(
            "{} criterion {n} ({name}): {} [{:.1}s]",
            if result.passed { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
