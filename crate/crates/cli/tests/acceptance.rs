//! Acceptance suite: one test per criterion. Each test checks its stated
//! tolerances, asserts its runtime budget, and prints a pass line (visible
//! with `--nocapture`).

use std::fmt::Write as _;
use std::fs;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use bribery_game::calibration::{compose_snowball, fit_loglog, fit_power_law};
use bribery_game::dynamic::ArrivalProcess;
use bribery_game::equilibrium::{first_order_profile, full_caps, PayoffMatrix, SolveError};
use bribery_game::fairness::{
    critical_point_quadratic, install_cohort, max_bribery_payoff, min_fair_raters_for_proofness,
    FairCohort,
};
use bribery_game::greedy::{effort_payoff, greedy_strategy, Budget};
use bribery_game::{BuyerTarget, CountProfile, EffortStrategy, Market, SellerState};

fn bribery(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bribery"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn finish(name: &str, start: Instant, budget: Duration) {
    let elapsed = start.elapsed();
    assert!(
        elapsed < budget,
        "{name} took {elapsed:.2?}, budget {budget:.2?}"
    );
    println!("acceptance: {name}: PASS ({elapsed:.2?})");
}

/// Random market within the acceptance envelope: at most 3 sellers, at most
/// 30 buyers, profit in [0.5, 4), every seller with at least one rater.
fn random_market(rng: &mut ChaCha8Rng) -> Market {
    let sellers_count = rng.gen_range(1..=3usize);
    let mut sellers = Vec::with_capacity(sellers_count);
    let mut interacted = 0usize;
    for idx in 0..sellers_count {
        let raters = rng.gen_range(1..=4usize);
        let values: Vec<f64> = (0..raters).map(|_| rng.gen_range(0.0..=1.0)).collect();
        sellers.push(SellerState::from_values(format!("s{idx}"), &values).unwrap());
        interacted += raters;
    }
    let total = rng.gen_range(interacted + 1..=(interacted + 1).max(30));
    let profit = rng.gen_range(0.5..4.0);
    Market::new(sellers, total, profit).unwrap()
}

fn duopoly() -> Market {
    Market::new(
        vec![
            SellerState::from_mean("i", 5, 0.2).unwrap(),
            SellerState::from_mean("j", 2, 0.5).unwrap(),
        ],
        20,
        2.0,
    )
    .unwrap()
}

const TABLE: [[(f64, f64); 4]; 4] = [
    [(5.20, 13.00), (4.80, 15.00), (4.40, 14.50), (4.00, 13.00)],
    [(7.00, 12.00), (6.33, 13.67), (5.67, 13.00), (5.00, 11.40)],
    [(7.43, 11.00), (6.57, 12.33), (5.71, 11.50), (4.86, 9.80)],
    [(7.00, 10.00), (6.00, 11.00), (5.00, 10.00), (4.00, 8.20)],
];

#[test]
fn criterion_1_bimatrix_table_reproduction() {
    let out = TempDir::new().unwrap();
    let start = Instant::now();
    let result = bribery(&[
        "matrix",
        "--scenario",
        "example1",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let csv = fs::read_to_string(out.path().join("matrix.csv")).unwrap();
    let mut cells = 0;
    for line in csv.lines().skip(1) {
        let row: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let (a, b) = (row[0] as usize, row[1] as usize);
        let (vi, vj) = TABLE[a][b];
        assert!(
            (row[2] - vi).abs() <= 0.005 && (row[3] - vj).abs() <= 0.005,
            "cell ({a},{b}) off: {row:?}"
        );
        cells += 1;
    }
    assert_eq!(cells, 16);
    finish(
        "table reproduction (16 cells within 0.005)",
        start,
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_2_equilibrium_reproduction() {
    let out = TempDir::new().unwrap();
    let start = Instant::now();
    let result = bribery(&[
        "solve",
        "--scenario",
        "example1",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    let nash = report["pure_nash"].as_array().unwrap();
    assert_eq!(nash.len(), 1);
    assert_eq!(nash[0]["profile"], serde_json::json!([2, 1]));
    let values = nash[0]["values"].as_array().unwrap();
    assert!((values[0].as_f64().unwrap() - 6.57).abs() <= 0.005);
    assert!((values[1].as_f64().unwrap() - 12.33).abs() <= 0.005);
    assert_eq!(report["iesds_survivors"], serde_json::json!([[2, 1]]));
    finish(
        "equilibrium reproduction (nash (2,1), outcome 6.57/12.33)",
        start,
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_3_overbribery_gap() {
    let start = Instant::now();

    // Exhaustive-sum oracle for the duopoly: welfare per cell recomputed
    // directly from the market algebra.
    let market = duopoly();
    let caps = CountProfile(vec![3, 3]);
    let mut best = (CountProfile::zeros(2), f64::NEG_INFINITY);
    for a in 0..=3u32 {
        for b in 0..=3u32 {
            let profile = CountProfile(vec![a, b]);
            let welfare =
                market.net_utility(0, &profile).unwrap() + market.net_utility(1, &profile).unwrap();
            if welfare > best.1 {
                best = (profile, welfare);
            }
        }
    }
    assert_eq!(best.0, CountProfile(vec![1, 1]));
    let report = PayoffMatrix::build(&market, &caps)
        .unwrap()
        .overbribery_gap()
        .unwrap();
    assert_eq!(report.social_optimum, best.0);
    assert_eq!(report.nash_total, 3);
    assert_eq!(report.optimum_total, 2);
    assert_eq!(report.gap, 1);

    // Equilibria never bribe fewer buyers than the optimum, across at
    // least 100 random markets.
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0011);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 100 {
        attempts += 1;
        assert!(attempts < 400, "generator starved");
        let market = random_market(&mut rng);
        let matrix = PayoffMatrix::build(&market, &full_caps(&market)).unwrap();
        match matrix.overbribery_gap() {
            Ok(report) => {
                assert!(
                    report.gap >= 0,
                    "equilibrium bribes less than the optimum on {market:?}: {report:?}"
                );
                checked += 1;
            }
            Err(SolveError::NoEquilibrium) => {}
            Err(other) => panic!("unexpected: {other}"),
        }
    }
    finish(
        "over-bribery gap (100 random markets, duopoly O*=3 O**=2)",
        start,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_4_profitability_threshold() {
    let start = Instant::now();

    // Sellers past the rater/pool threshold never profit from any count.
    let mut rng = ChaCha8Rng::seed_from_u64(0x1E44A);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 80 {
        attempts += 1;
        assert!(attempts < 4000, "generator starved");
        let raters = rng.gen_range(3..=20usize);
        let pool = rng.gen_range(1..=8usize);
        let profit = rng.gen_range(0.5..3.0);
        let mean = rng.gen_range(0.0..=1.0);
        let market = Market::new(
            vec![SellerState::from_mean("a", raters, mean).unwrap()],
            raters + pool,
            profit,
        )
        .unwrap();
        if (raters as f64) / (pool as f64) < profit {
            continue;
        }
        checked += 1;
        for count in 0..=pool as u32 {
            let payoff = market.payoff(0, &CountProfile(vec![count])).unwrap();
            assert!(
                payoff <= 1e-9,
                "count {count} pays {payoff} despite rater/pool >= profit"
            );
        }
    }

    // The duopoly's first seller sits below the threshold (5/13 < 2) and
    // has a strictly profitable strategy.
    let market = duopoly();
    let ratio = market.sellers()[0].rater_count() as f64 / market.potential_buyers() as f64;
    assert!(ratio < market.profit_per_purchase());
    let profitable = (1..=13u32)
        .map(|c| market.payoff(0, &CountProfile(vec![c, 0])).unwrap())
        .any(|p| p > 0.0);
    assert!(profitable);

    finish(
        "profitability threshold (exhaustive search, both regimes)",
        start,
        Duration::from_secs(10),
    );
}

/// Random saturating strategy with exactly the given cost: per-target effort
/// never exceeds the rating improvement it can buy.
fn random_same_cost_strategy(
    rng: &mut ChaCha8Rng,
    seller: &SellerState,
    fresh_pool: usize,
    cost: f64,
) -> EffortStrategy {
    let mut strategy = EffortStrategy::new();
    if cost <= 0.0 {
        return strategy;
    }
    let mut targets: Vec<(BuyerTarget, f64)> = seller
        .ratings()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.value() < 1.0)
        .map(|(index, r)| {
            (
                BuyerTarget::Rater {
                    seller: seller.id().to_string(),
                    index,
                },
                1.0 - r.value(),
            )
        })
        .chain((0..fresh_pool as u32).map(|tag| (BuyerTarget::Fresh { tag }, 1.0)))
        .collect();
    for i in (1..targets.len()).rev() {
        targets.swap(i, rng.gen_range(0..=i));
    }
    let mut efforts = vec![0.0; targets.len()];
    let mut remaining = cost;
    for pass in 0..2 {
        for (slot, &(_, cap)) in targets.iter().enumerate() {
            if remaining <= 0.0 {
                break;
            }
            let headroom = cap - efforts[slot];
            let effort = if pass == 0 {
                (headroom * rng.gen_range(0.0..=1.0)).min(remaining)
            } else {
                headroom.min(remaining)
            };
            efforts[slot] += effort;
            remaining -= effort;
        }
    }
    for ((target, _), effort) in targets.into_iter().zip(efforts) {
        if effort > 0.0 {
            strategy.insert(target, effort).unwrap();
        }
    }
    strategy
}

#[test]
fn criterion_5_greedy_dominance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x62EED);
    for _ in 0..200 {
        let market = random_market(&mut rng);
        let seller_index = rng.gen_range(0..market.seller_count());
        let seller = market.seller(seller_index).unwrap().clone();
        let pool = market.potential_buyers();

        // A fixed opponent profile leaving room for fresh bribes.
        let mut opponents = CountProfile::zeros(market.seller_count());
        let mut left = (pool / 2) as u32;
        for j in 0..market.seller_count() {
            if j == seller_index || left == 0 {
                continue;
            }
            let c = rng.gen_range(0..=left.min(3));
            opponents = opponents.with_count(j, c);
            left -= c;
        }
        let fresh_pool = (pool - opponents.total() as usize).min(4);

        let budget = Budget::new(rng.gen_range(0.0..3.0)).unwrap();
        let greedy = greedy_strategy(&seller, fresh_pool, budget);
        let cost = greedy.total_cost();
        let greedy_payoff = effort_payoff(&market, seller_index, &greedy, &opponents).unwrap();
        for _ in 0..50 {
            let rival = random_same_cost_strategy(&mut rng, &seller, fresh_pool, cost);
            let rival_payoff = effort_payoff(&market, seller_index, &rival, &opponents).unwrap();
            assert!(
                greedy_payoff >= rival_payoff - 1e-9,
                "greedy {greedy_payoff} < rival {rival_payoff} on {market:?}"
            );
        }
    }
    finish(
        "greedy dominance (200 markets x 50 equal-cost rivals)",
        start,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_6_equilibrium_existence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E0123);
    let mut converged = 0;
    for _ in 0..100 {
        let market = random_market(&mut rng);
        let caps = full_caps(&market);
        let matrix = PayoffMatrix::build(&market, &caps).unwrap();
        let nash = matrix.pure_nash();
        assert!(!nash.is_empty(), "no pure equilibrium on {market:?}");
        if let Ok(profile) = first_order_profile(&market, &caps) {
            assert!(
                nash.contains(&profile),
                "first-order fixpoint {profile} not an equilibrium on {market:?}"
            );
            converged += 1;
        }
    }
    assert!(converged >= 50, "only {converged} markets converged");
    finish(
        "equilibrium existence (100 random markets, caps = pool)",
        start,
        Duration::from_secs(30),
    );
}

fn scenario_toml(market: &Market, caps: &CountProfile, solution: &CountProfile) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "schema = 1");
    let _ = writeln!(text, "[market]");
    let _ = writeln!(text, "total_buyers = {}", market.total_buyers());
    let _ = writeln!(
        text,
        "profit_per_purchase = {:?}",
        market.profit_per_purchase()
    );
    for seller in market.sellers() {
        let _ = writeln!(text, "[[market.sellers]]");
        let _ = writeln!(text, "id = \"{}\"", seller.id());
        let ratings: Vec<String> = seller
            .ratings()
            .iter()
            .map(|r| format!("{:?}", r.value()))
            .collect();
        let _ = writeln!(text, "ratings = [{}]", ratings.join(", "));
        let _ = writeln!(text, "rater_count = {}", seller.rater_count());
    }
    let _ = writeln!(text, "[solver]");
    let caps_text: Vec<String> = caps.counts().iter().map(|c| c.to_string()).collect();
    let _ = writeln!(text, "caps = [{}]", caps_text.join(", "));
    let _ = writeln!(text, "[dynamic]");
    let ids: Vec<String> = market
        .sellers()
        .iter()
        .map(|s| format!("\"{}\"", s.id()))
        .collect();
    let _ = writeln!(text, "order = [{}]", ids.join(", "));
    let _ = writeln!(text, "slots = 1");
    let _ = writeln!(text, "seed = 1");
    let _ = writeln!(text, "lambda = [0.0]");
    for (seller, &count) in market.sellers().iter().zip(solution.counts()) {
        let _ = writeln!(text, "[[dynamic.policies]]");
        let _ = writeln!(text, "seller = \"{}\"", seller.id());
        let _ = writeln!(text, "default = [[{count}, 1.0]]");
    }
    text
}

#[test]
fn criterion_7_dynamic_collapse() {
    let start = Instant::now();

    // Slot-one counts under no arrivals and certainty must equal the static
    // solution, across 20 random scenarios driven through the binary.
    let mut rng = ChaCha8Rng::seed_from_u64(0xD9);
    let dir = TempDir::new().unwrap();
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 20 {
        attempts += 1;
        assert!(attempts < 200, "generator starved");
        let market = random_market(&mut rng);
        let caps = full_caps(&market);
        let Ok(solution) = first_order_profile(&market, &caps) else {
            continue;
        };
        let scenario_path = dir.path().join(format!("collapse_{checked}.toml"));
        fs::write(&scenario_path, scenario_toml(&market, &caps, &solution)).unwrap();
        let out = dir.path().join(format!("out_{checked}"));
        let result = bribery(&[
            "simulate",
            "--scenario",
            scenario_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            result.status.success(),
            "simulate failed: {}",
            String::from_utf8_lossy(&result.stderr)
        );
        let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
        let row: Vec<f64> = csv
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .map(|c| c.parse().unwrap())
            .collect();
        let counts: Vec<u32> = row[2..2 + market.seller_count()]
            .iter()
            .map(|&c| c as u32)
            .collect();
        assert_eq!(
            CountProfile(counts),
            solution,
            "slot-one counts diverge from the static solution on {market:?}"
        );
        checked += 1;
    }

    // Poisson sampler calibration at rate 4.
    let process = ArrivalProcess::new(vec![4.0], 20240).unwrap();
    let draws = process.sample(100_000);
    let mean = draws.iter().sum::<u64>() as f64 / draws.len() as f64;
    assert!((mean - 4.0).abs() < 0.05, "sample mean {mean}");

    finish(
        "dynamic collapse (20 scenarios) and Poisson mean 4 ± 0.05",
        start,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_8_fairness_threshold() {
    let start = Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(0xFA12);
    for _ in 0..50 {
        let market = random_market(&mut rng);
        let seller = rng.gen_range(0..market.seller_count());
        let fair_mean = rng.gen_range(0.0..=1.0);
        let cap = market.potential_buyers();
        let answer = min_fair_raters_for_proofness(&market, seller, fair_mean, cap).unwrap();

        // Independent scan: install each cohort and search for any strictly
        // profitable count directly.
        let mut oracle = None;
        for count in 0..=cap {
            let cohort = FairCohort::new(count, fair_mean).unwrap();
            let fortified = install_cohort(&market, seller, &cohort).unwrap();
            let profitable = (0..=fortified.potential_buyers() as u32).any(|d| {
                let profile = CountProfile::zeros(market.seller_count()).with_count(seller, d);
                fortified.payoff(seller, &profile).unwrap() > 0.0
            });
            if !profitable {
                oracle = Some(count);
                break;
            }
        }
        assert_eq!(answer, oracle, "threshold oracles disagree on {market:?}");

        if let Some(threshold) = answer {
            if threshold > 0 {
                let cohort = FairCohort::new(threshold - 1, fair_mean).unwrap();
                let fortified = install_cohort(&market, seller, &cohort).unwrap();
                assert!(
                    max_bribery_payoff(&fortified, seller).unwrap() > 0.0,
                    "threshold {threshold} is not minimal on {market:?}"
                );
            }
        }
    }

    // The duopoly's as-printed quadratic has no real roots at fair mean 0.2.
    let market = duopoly();
    let roots = critical_point_quadratic(&market, 0, 0.2).unwrap();
    assert!(roots.is_empty());
    let fair_mean = 0.2f64;
    let discriminant = fair_mean * fair_mean
        - 4.0
            * market.potential_buyers() as f64
            * (market.sellers()[0].rater_count() as f64 + fair_mean);
    assert!(discriminant < 0.0);

    finish(
        "fairness threshold (50 random markets, rootless quadratic)",
        start,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_9_calibration_roundtrip() {
    let start = Instant::now();

    // Noiseless recovery to 1e-9: a = 2, n = 3, b = 2 gives omega (4, 6).
    let ratings: [f64; 7] = [0.2, 0.3, 0.45, 0.6, 0.75, 0.9, 1.0];
    let power_pairs: Vec<(f64, f64)> = ratings.iter().map(|&r| (r, 2.0 * r.powi(3))).collect();
    let loglog_pairs: Vec<(f64, f64)> = power_pairs
        .iter()
        .map(|&(_, reviews)| (reviews, reviews * reviews))
        .collect();
    let snowball = compose_snowball(
        &fit_power_law(&power_pairs).unwrap(),
        &fit_loglog(&loglog_pairs).unwrap(),
    );
    assert!((snowball.omega1 - 4.0).abs() < 1e-9);
    assert!((snowball.omega2 - 6.0).abs() < 1e-9);

    // Noisy slope recovery: b = 1.5 within 0.01 from 1000 points under
    // one-percent multiplicative noise.
    let mut rng = ChaCha8Rng::seed_from_u64(0xCA1);
    let bound = 1.01f64.ln();
    let noisy: Vec<(f64, f64)> = (0..1000)
        .map(|_| {
            let reviews = 10f64.powf(rng.gen_range(1.0..6.0));
            let noise = (rng.gen_range(-1.0..=1.0) * bound).exp();
            (reviews, reviews.powf(1.5) * noise)
        })
        .collect();
    let fit = fit_loglog(&noisy).unwrap();
    assert!((fit.b - 1.5).abs() < 0.01, "recovered b = {}", fit.b);

    finish(
        "calibration round trip (noiseless 1e-9, noisy b within 0.01)",
        start,
        Duration::from_secs(5),
    );
}
