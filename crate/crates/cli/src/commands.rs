//! The five subcommands. Every command writes its outputs into the `--out`
//! directory and is a pure function of (scenario, flags, seed): identical
//! inputs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use bribery_game::calibration::{compose_snowball, fit_loglog, fit_power_law, ObservationSet};
use bribery_game::dynamic::{self, ArrivalProcess, SequentialGame};
use bribery_game::equilibrium::{first_order_profile, PayoffMatrix, ValueKind};
use bribery_game::fairness;
use bribery_game::CountProfile;

use crate::scenario::{self, Scenario};
use crate::{max_enum, CliError};

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut file = fs::File::create(path)?;
    file.write_all(contents.as_bytes())?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("report serialization: {e}")))?;
    text.push('\n');
    write_file(path, &text)
}

fn check_enum_bound(cells: u128) -> Result<(), CliError> {
    let bound = max_enum()?;
    if cells > bound {
        return Err(CliError::SizeBound {
            needed: cells,
            bound,
        });
    }
    Ok(())
}

fn cell_count(caps: &CountProfile) -> u128 {
    caps.counts().iter().map(|&c| c as u128 + 1).product()
}

fn load_scenario(source: &str, caps: Option<Vec<u32>>) -> Result<Scenario, CliError> {
    scenario::load(source, caps)
}

fn seller_ids(scenario: &Scenario) -> Vec<String> {
    scenario
        .market
        .sellers()
        .iter()
        .map(|s| s.id().to_string())
        .collect()
}

fn caps_text(caps: &CountProfile) -> String {
    caps.counts()
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn matrix(
    source: &str,
    out: &Path,
    caps: Option<Vec<u32>>,
    surface: Option<String>,
    payoff: bool,
) -> Result<(), CliError> {
    let scenario = load_scenario(source, caps)?;
    check_enum_bound(cell_count(&scenario.caps))?;
    let kind = if payoff {
        ValueKind::Payoff
    } else {
        ValueKind::NetUtility
    };
    let matrix = PayoffMatrix::build_with_kind(&scenario.market, &scenario.caps, kind)?;

    ensure_out(out)?;
    let mut written = Vec::new();

    let mut csv = Vec::new();
    matrix.to_csv(&mut csv)?;
    let csv_path = out.join("matrix.csv");
    write_file(&csv_path, &String::from_utf8(csv).expect("csv is utf-8"))?;
    written.push(csv_path);

    if let Some(id) = &surface {
        let seller = scenario
            .market
            .sellers()
            .iter()
            .position(|s| s.id() == id)
            .ok_or_else(|| CliError::Validation(format!("--surface: unknown seller id {id:?}")))?;
        let payoff_matrix =
            PayoffMatrix::build_with_kind(&scenario.market, &scenario.caps, ValueKind::Payoff)?;
        let mut csv = Vec::new();
        payoff_matrix.surface_csv(seller, &mut csv)?;
        let path = out.join(format!("surface_{id}.csv"));
        write_file(&path, &String::from_utf8(csv).expect("csv is utf-8"))?;
        written.push(path);
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "command:           matrix");
    let _ = writeln!(summary, "scenario:          {}", scenario.name);
    let _ = writeln!(
        summary,
        "sellers:           {}",
        seller_ids(&scenario).join(", ")
    );
    let _ = writeln!(
        summary,
        "total buyers:      {}",
        scenario.market.total_buyers()
    );
    let _ = writeln!(
        summary,
        "potential buyers:  {}",
        scenario.market.potential_buyers()
    );
    let _ = writeln!(summary, "caps:              {}", caps_text(&scenario.caps));
    let _ = writeln!(
        summary,
        "value kind:        {}",
        if payoff { "payoff" } else { "net_utility" }
    );
    let _ = writeln!(
        summary,
        "feasible cells:    {}",
        matrix.feasible_profiles().count()
    );
    let summary_path = out.join("summary.txt");
    write_file(&summary_path, &summary)?;
    written.push(summary_path);

    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct NashEntry {
    profile: CountProfile,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct OptimumEntry {
    profile: CountProfile,
    welfare: f64,
}

#[derive(Serialize)]
struct SolveReport {
    schema: u32,
    command: &'static str,
    scenario: String,
    sellers: Vec<String>,
    potential_buyers: usize,
    caps: CountProfile,
    value_kind: ValueKind,
    pure_nash: Vec<NashEntry>,
    iesds_survivors: Vec<CountProfile>,
    first_order_profile: Option<CountProfile>,
    social_optimum: OptimumEntry,
    nash_total: u64,
    optimum_total: u64,
    gap: i64,
}

pub fn solve(source: &str, out: &Path, caps: Option<Vec<u32>>) -> Result<(), CliError> {
    let scenario = load_scenario(source, caps)?;
    check_enum_bound(cell_count(&scenario.caps))?;
    let matrix = PayoffMatrix::build(&scenario.market, &scenario.caps)?;
    let report = matrix.overbribery_gap()?;
    let first_order = if scenario.market.potential_buyers() > 0 {
        Some(first_order_profile(&scenario.market, &scenario.caps)?)
    } else {
        None
    };

    let pure_nash: Vec<NashEntry> = report
        .pure_nash
        .iter()
        .map(|profile| NashEntry {
            profile: profile.clone(),
            values: matrix.values(profile).expect("nash cell exists").to_vec(),
        })
        .collect();

    let solve_report = SolveReport {
        schema: 1,
        command: "solve",
        scenario: scenario.name.clone(),
        sellers: seller_ids(&scenario),
        potential_buyers: scenario.market.potential_buyers(),
        caps: scenario.caps.clone(),
        value_kind: report.value_kind,
        pure_nash,
        iesds_survivors: report.iesds_survivors.clone(),
        first_order_profile: first_order.clone(),
        social_optimum: OptimumEntry {
            profile: report.social_optimum.clone(),
            welfare: report.social_welfare,
        },
        nash_total: report.nash_total,
        optimum_total: report.optimum_total,
        gap: report.gap,
    };

    ensure_out(out)?;
    let report_path = out.join("report.json");
    write_json(&report_path, &solve_report)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "command:           solve");
    let _ = writeln!(summary, "scenario:          {}", scenario.name);
    let _ = writeln!(
        summary,
        "sellers:           {}",
        seller_ids(&scenario).join(", ")
    );
    let _ = writeln!(
        summary,
        "potential buyers:  {}",
        scenario.market.potential_buyers()
    );
    let _ = writeln!(summary, "caps:              {}", caps_text(&scenario.caps));
    let _ = writeln!(summary, "pure nash:");
    for entry in &solve_report.pure_nash {
        let values = entry
            .values
            .iter()
            .map(|v| format!("{v:.2}"))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(summary, "  {}  values: {}", entry.profile, values);
    }
    let _ = writeln!(
        summary,
        "iesds survivors:   {}",
        solve_report
            .iesds_survivors
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    match &solve_report.first_order_profile {
        Some(profile) => {
            let _ = writeln!(summary, "first-order:       {profile}");
        }
        None => {
            let _ = writeln!(summary, "first-order:       (empty pool, skipped)");
        }
    }
    let _ = writeln!(
        summary,
        "social optimum:    {}  welfare: {:.2}",
        solve_report.social_optimum.profile, solve_report.social_optimum.welfare
    );
    let _ = writeln!(summary, "nash total:        {}", solve_report.nash_total);
    let _ = writeln!(summary, "optimum total:     {}", solve_report.optimum_total);
    let _ = writeln!(summary, "over-bribery gap:  {}", solve_report.gap);
    let summary_path = out.join("summary.txt");
    write_file(&summary_path, &summary)?;

    println!("wrote {}", report_path.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}

pub fn simulate(
    source: &str,
    out: &Path,
    caps: Option<Vec<u32>>,
    seed: Option<u64>,
    slots: Option<usize>,
) -> Result<(), CliError> {
    let scenario = load_scenario(source, caps)?;
    let dynamic_spec = scenario.dynamic.as_ref().ok_or_else(|| {
        CliError::Validation("scenario has no [dynamic] section; simulate needs one".to_string())
    })?;
    check_enum_bound(cell_count(&scenario.caps))?;

    let game = SequentialGame::new(
        scenario.market.clone(),
        dynamic_spec.order.clone(),
        scenario.caps.clone(),
        dynamic_spec.beliefs.clone(),
        dynamic_spec.policies.clone(),
    )?;
    let seed = seed.unwrap_or(dynamic_spec.seed);
    let slots = slots.unwrap_or(dynamic_spec.slots);
    let process = ArrivalProcess::new(dynamic_spec.lambda.clone(), seed)?;
    let trace = dynamic::simulate(&game, &process, slots)?;

    ensure_out(out)?;
    let mut csv = Vec::new();
    trace.to_csv(&mut csv)?;
    let trace_path = out.join("trace.csv");
    write_file(&trace_path, &String::from_utf8(csv).expect("csv is utf-8"))?;

    let total_arrivals: u64 = trace.records().iter().map(|r| r.arrivals).sum();
    let mut summary = String::new();
    let _ = writeln!(summary, "command:           simulate");
    let _ = writeln!(summary, "scenario:          {}", scenario.name);
    let _ = writeln!(
        summary,
        "sellers:           {}",
        seller_ids(&scenario).join(", ")
    );
    let _ = writeln!(summary, "slots:             {slots}");
    let _ = writeln!(summary, "seed:              {seed}");
    let _ = writeln!(summary, "total arrivals:    {total_arrivals}");
    if let Some(last) = trace.records().last() {
        let _ = writeln!(summary, "final counts:      {}", last.counts);
        let _ = writeln!(summary, "final pool:        {}", last.potential_buyers);
    }
    let summary_path = out.join("summary.txt");
    write_file(&summary_path, &summary)?;

    println!("wrote {}", trace_path.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}

#[derive(Serialize)]
struct QuadraticReport {
    form: &'static str,
    /// Numerator reading behind the rating-mass interpretation used by the
    /// brute-force threshold.
    mass_reading: &'static str,
    coefficients: [f64; 3],
    discriminant: f64,
    roots: Vec<f64>,
}

#[derive(Serialize)]
struct FairnessReport {
    schema: u32,
    command: &'static str,
    scenario: String,
    seller: String,
    fair_mean: f64,
    cap: usize,
    min_fair_raters: Option<usize>,
    quadratic: QuadraticReport,
}

pub fn fairness(source: &str, out: &Path, caps: Option<Vec<u32>>) -> Result<(), CliError> {
    let scenario = load_scenario(source, caps)?;
    let fairness_spec = scenario.fairness.as_ref().ok_or_else(|| {
        CliError::Validation("scenario has no [fairness] section; fairness needs one".to_string())
    })?;

    let market = &scenario.market;
    let seller = fairness_spec.seller;
    let minimum = fairness::min_fair_raters_for_proofness(
        market,
        seller,
        fairness_spec.fair_mean,
        fairness_spec.cap,
    )?;
    let roots = fairness::critical_point_quadratic(market, seller, fairness_spec.fair_mean)?;

    let pool = market.potential_buyers() as f64;
    let rater_count = market.sellers()[seller].rater_count() as f64;
    let linear = -fairness_spec.fair_mean;
    let constant = pool * (rater_count + fairness_spec.fair_mean);
    let report = FairnessReport {
        schema: 1,
        command: "fairness",
        scenario: scenario.name.clone(),
        seller: market.sellers()[seller].id().to_string(),
        fair_mean: fairness_spec.fair_mean,
        cap: fairness_spec.cap,
        min_fair_raters: minimum,
        quadratic: QuadraticReport {
            form: "as_printed",
            mass_reading: "existing rating mass plus fair rating mass, over rater head count",
            coefficients: [1.0, linear, constant],
            discriminant: linear * linear - 4.0 * constant,
            roots,
        },
    };

    ensure_out(out)?;
    let report_path = out.join("report.json");
    write_json(&report_path, &report)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "command:           fairness");
    let _ = writeln!(summary, "scenario:          {}", scenario.name);
    let _ = writeln!(summary, "seller:            {}", report.seller);
    let _ = writeln!(summary, "fair mean:         {}", report.fair_mean);
    let _ = writeln!(summary, "cap:               {}", report.cap);
    match report.min_fair_raters {
        Some(count) => {
            let _ = writeln!(summary, "min fair raters:   {count}");
        }
        None => {
            let _ = writeln!(summary, "min fair raters:   not found within cap");
        }
    }
    let _ = writeln!(
        summary,
        "quadratic:         x^2 + ({})x + ({}) = 0, discriminant {}",
        report.quadratic.coefficients[1],
        report.quadratic.coefficients[2],
        report.quadratic.discriminant
    );
    let _ = writeln!(
        summary,
        "quadratic roots:   {}",
        if report.quadratic.roots.is_empty() {
            "none".to_string()
        } else {
            report
                .quadratic
                .roots
                .iter()
                .map(|r| format!("{r}"))
                .collect::<Vec<_>>()
                .join(", ")
        }
    );
    let summary_path = out.join("summary.txt");
    write_file(&summary_path, &summary)?;

    println!("wrote {}", report_path.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}

#[derive(Serialize)]
struct FitSection {
    points_used: usize,
    points_dropped: usize,
    residual: f64,
}

#[derive(Serialize)]
struct CalibrateReport {
    schema: u32,
    command: &'static str,
    input: String,
    a: f64,
    n: f64,
    b: f64,
    omega1: f64,
    omega2: f64,
    power_fit: FitSection,
    loglog_fit: FitSection,
}

pub fn calibrate(input: &PathBuf, out: &Path) -> Result<(), CliError> {
    let file = fs::File::open(input)?;
    let observations = ObservationSet::from_csv(file)?;
    let (power_pairs, power_dropped) = observations.power_pairs();
    let (loglog_pairs, loglog_dropped) = observations.loglog_pairs();
    let power = fit_power_law(&power_pairs)?;
    let loglog = fit_loglog(&loglog_pairs)?;
    let snowball = compose_snowball(&power, &loglog);

    let report = CalibrateReport {
        schema: 1,
        command: "calibrate",
        input: input.display().to_string(),
        a: snowball.a,
        n: snowball.n,
        b: snowball.b,
        omega1: snowball.omega1,
        omega2: snowball.omega2,
        power_fit: FitSection {
            points_used: power_pairs.len(),
            points_dropped: power_dropped,
            residual: snowball.power_residual,
        },
        loglog_fit: FitSection {
            points_used: loglog_pairs.len(),
            points_dropped: loglog_dropped,
            residual: snowball.loglog_residual,
        },
    };

    ensure_out(out)?;
    let report_path = out.join("report.json");
    write_json(&report_path, &report)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "command:           calibrate");
    let _ = writeln!(summary, "input:             {}", report.input);
    let _ = writeln!(
        summary,
        "reviews ~ a*r^n:   a = {:.6}, n = {:.6}",
        report.a, report.n
    );
    let _ = writeln!(summary, "installs ~ rev^b:  b = {:.6}", report.b);
    let _ = writeln!(
        summary,
        "snowball:          omega1 = {:.6}, omega2 = {:.6}",
        report.omega1, report.omega2
    );
    let _ = writeln!(
        summary,
        "power fit:         {} points used, {} dropped, rms log residual {:.6}",
        report.power_fit.points_used, report.power_fit.points_dropped, report.power_fit.residual
    );
    let _ = writeln!(
        summary,
        "log-log fit:       {} points used, {} dropped, rms log residual {:.6}",
        report.loglog_fit.points_used, report.loglog_fit.points_dropped, report.loglog_fit.residual
    );
    let summary_path = out.join("summary.txt");
    write_file(&summary_path, &summary)?;

    println!("wrote {}", report_path.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}
