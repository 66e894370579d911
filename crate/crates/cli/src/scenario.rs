//! Scenario files: the TOML schema, load-time validation with field-precise
//! messages, and conversion into the library's domain types.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use bribery_game::dynamic::{BeliefModel, ConditionalPolicy, CountDistribution};
use bribery_game::{CountProfile, Market, SellerState};

use crate::CliError;

/// The one scenario shipped inside the binary, selectable by name.
pub const EXAMPLE1: &str = include_str!("../scenarios/example1.toml");

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema: u32,
    market: MarketSection,
    #[serde(default)]
    solver: Option<SolverSection>,
    #[serde(default)]
    greedy: Option<GreedySection>,
    #[serde(default)]
    dynamic: Option<DynamicSection>,
    #[serde(default)]
    fairness: Option<FairnessSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketSection {
    total_buyers: usize,
    profit_per_purchase: f64,
    #[serde(default)]
    snowball_scale: Option<f64>,
    #[serde(default)]
    snowball_exponent: Option<f64>,
    sellers: Vec<SellerSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SellerSection {
    id: String,
    #[serde(default)]
    ratings: Option<Vec<f64>>,
    #[serde(default)]
    rater_count: Option<usize>,
    #[serde(default)]
    raters: Option<usize>,
    #[serde(default)]
    mean_rating: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    #[serde(default)]
    caps: Option<Vec<u32>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GreedySection {
    budget: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicSection {
    order: Vec<String>,
    slots: usize,
    seed: u64,
    #[serde(default)]
    lambda: Vec<f64>,
    #[serde(default)]
    beliefs: Vec<BeliefSection>,
    #[serde(default)]
    policies: Vec<PolicySection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BeliefSection {
    seller: String,
    support: Vec<(usize, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicySection {
    seller: String,
    #[serde(default)]
    default: Option<Vec<(u32, f64)>>,
    #[serde(default)]
    rules: Vec<PolicyRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyRule {
    history: Vec<u32>,
    distribution: Vec<(u32, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FairnessSection {
    seller: String,
    fair_mean: f64,
    #[serde(default)]
    cap: Option<usize>,
}

/// A fully validated scenario.
#[derive(Debug)]
pub struct Scenario {
    pub name: String,
    pub market: Market,
    pub caps: CountProfile,
    /// Validated effort budget for library callers; no subcommand consumes
    /// it today.
    #[allow(dead_code)]
    pub budget: Option<f64>,
    pub dynamic: Option<DynamicSpec>,
    pub fairness: Option<FairnessSpec>,
}

#[derive(Debug)]
pub struct DynamicSpec {
    pub order: Vec<usize>,
    pub slots: usize,
    pub seed: u64,
    pub lambda: Vec<f64>,
    pub beliefs: Vec<BeliefModel>,
    pub policies: Vec<ConditionalPolicy>,
}

#[derive(Debug)]
pub struct FairnessSpec {
    pub seller: usize,
    pub fair_mean: f64,
    pub cap: usize,
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError::Validation(message.into())
}

/// Loads a scenario from a path, or from the bundled set when the argument
/// names one (`example1`) and no such file exists. A caps override from the
/// command line replaces the scenario's caps before any validation that
/// depends on them.
pub fn load(source: &str, caps_override: Option<Vec<u32>>) -> Result<Scenario, CliError> {
    let path = Path::new(source);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| source.to_string());
        parse(&name, &text, caps_override)
    } else if source == "example1" {
        parse("example1", EXAMPLE1, caps_override)
    } else {
        Err(invalid(format!(
            "scenario {source:?} is neither a file nor a bundled scenario (bundled: example1)"
        )))
    }
}

pub fn parse(
    name: &str,
    text: &str,
    caps_override: Option<Vec<u32>>,
) -> Result<Scenario, CliError> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| invalid(format!("scenario parse error: {e}")))?;
    if file.schema != SCHEMA_VERSION {
        return Err(invalid(format!(
            "schema: expected version {SCHEMA_VERSION}, got {}",
            file.schema
        )));
    }

    let market = build_market(&file.market)?;

    let caps = match caps_override.or(file.solver.and_then(|s| s.caps)) {
        Some(caps) => {
            if caps.len() != market.seller_count() {
                return Err(invalid(format!(
                    "caps: expected {} entries, got {}",
                    market.seller_count(),
                    caps.len()
                )));
            }
            CountProfile(caps)
        }
        None => CountProfile(vec![
            market.potential_buyers() as u32;
            market.seller_count()
        ]),
    };

    let budget = match file.greedy {
        Some(section) => {
            if !section.budget.is_finite() || section.budget < 0.0 {
                return Err(invalid(format!(
                    "greedy.budget: must be non-negative, got {}",
                    section.budget
                )));
            }
            Some(section.budget)
        }
        None => None,
    };

    let dynamic = file
        .dynamic
        .map(|section| build_dynamic(&market, &caps, section))
        .transpose()?;

    let fairness = file
        .fairness
        .map(|section| build_fairness(&market, section))
        .transpose()?;

    Ok(Scenario {
        name: name.to_string(),
        market,
        caps,
        budget,
        dynamic,
        fairness,
    })
}

fn build_market(section: &MarketSection) -> Result<Market, CliError> {
    let mut sellers = Vec::with_capacity(section.sellers.len());
    let mut ids = BTreeMap::new();
    for (index, seller) in section.sellers.iter().enumerate() {
        let field = |name: &str| format!("market.sellers[{index}].{name}");
        if let Some(previous) = ids.insert(seller.id.clone(), index) {
            return Err(invalid(format!(
                "{}: duplicate id {:?} (also sellers[{previous}])",
                field("id"),
                seller.id
            )));
        }
        let state = match (&seller.ratings, seller.raters, seller.mean_rating) {
            (Some(values), None, None) => {
                let mut state = SellerState::from_values(&seller.id, values)
                    .map_err(|e| invalid(format!("{}: {e}", field("ratings"))))?;
                if let Some(count) = seller.rater_count {
                    state = SellerState::new(&seller.id, state.ratings().to_vec(), count)
                        .map_err(|e| invalid(format!("{}: {e}", field("rater_count"))))?;
                }
                state
            }
            (None, Some(raters), Some(mean)) => SellerState::from_mean(&seller.id, raters, mean)
                .map_err(|e| invalid(format!("{}: {e}", field("mean_rating"))))?,
            _ => {
                return Err(invalid(format!(
                    "market.sellers[{index}]: give either `ratings` (with optional \
                     `rater_count`) or `raters` plus `mean_rating`"
                )))
            }
        };
        sellers.push(state);
    }
    Market::with_snowball(
        sellers,
        section.total_buyers,
        section.profit_per_purchase,
        section.snowball_scale.unwrap_or(1.0),
        section.snowball_exponent.unwrap_or(1.0),
    )
    .map_err(|e| invalid(format!("market: {e}")))
}

fn seller_index(market: &Market, id: &str, field: &str) -> Result<usize, CliError> {
    market
        .sellers()
        .iter()
        .position(|s| s.id() == id)
        .ok_or_else(|| invalid(format!("{field}: unknown seller id {id:?}")))
}

fn distribution(weights: &[(u32, f64)], field: &str) -> Result<CountDistribution, CliError> {
    CountDistribution::new(weights.to_vec()).map_err(|e| invalid(format!("{field}: {e}")))
}

fn build_dynamic(
    market: &Market,
    caps: &CountProfile,
    section: DynamicSection,
) -> Result<DynamicSpec, CliError> {
    let mut order = Vec::with_capacity(section.order.len());
    for (position, id) in section.order.iter().enumerate() {
        order.push(seller_index(
            market,
            id,
            &format!("dynamic.order[{position}]"),
        )?);
    }
    if order.len() != market.seller_count() || {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        sorted.dedup();
        sorted.len() != market.seller_count()
    } {
        return Err(invalid(
            "dynamic.order: must list every seller exactly once".to_string(),
        ));
    }

    for (slot, &rate) in section.lambda.iter().enumerate() {
        if !rate.is_finite() || rate < 0.0 {
            return Err(invalid(format!(
                "dynamic.lambda[{slot}]: rate must be non-negative, got {rate}"
            )));
        }
    }

    let pool = market.potential_buyers();
    let mut beliefs: Vec<BeliefModel> = vec![BeliefModel::point(pool); market.seller_count()];
    for (entry, belief) in section.beliefs.iter().enumerate() {
        let field = format!("dynamic.beliefs[{entry}]");
        let seller = seller_index(market, &belief.seller, &field)?;
        beliefs[seller] = BeliefModel::new(belief.support.clone())
            .map_err(|e| invalid(format!("{field}.support: {e}")))?;
    }

    let mut policies: Vec<ConditionalPolicy> =
        vec![ConditionalPolicy::default(); market.seller_count()];
    for (entry, policy) in section.policies.iter().enumerate() {
        let field = format!("dynamic.policies[{entry}]");
        let seller = seller_index(market, &policy.seller, &field)?;
        let fallback = policy
            .default
            .as_ref()
            .map(|weights| distribution(weights, &format!("{field}.default")))
            .transpose()?;
        let mut rules = BTreeMap::new();
        for (rule_index, rule) in policy.rules.iter().enumerate() {
            let rule_field = format!("{field}.rules[{rule_index}]");
            rules.insert(
                rule.history.clone(),
                distribution(&rule.distribution, &rule_field)?,
            );
        }
        policies[seller] = ConditionalPolicy::new(rules, fallback);
    }

    // Every seller that moves after someone else needs a move distribution
    // at each history the earlier movers can produce.
    for position in 1..order.len() {
        let seller = order[position];
        let policy = &policies[seller];
        let mut prefixes: Vec<Vec<u32>> = vec![Vec::new()];
        for &earlier in &order[..position] {
            let cap = caps.count_for(earlier);
            prefixes = prefixes
                .into_iter()
                .flat_map(|p| {
                    (0..=cap).map(move |c| {
                        let mut extended = p.clone();
                        extended.push(c);
                        extended
                    })
                })
                .collect();
        }
        for prefix in &prefixes {
            if policy.lookup(prefix).is_none() {
                return Err(invalid(format!(
                    "dynamic.policies: seller {:?} has no distribution for observed \
                     history {prefix:?} (add a rule or a default)",
                    market.sellers()[seller].id()
                )));
            }
        }
    }

    Ok(DynamicSpec {
        order,
        slots: section.slots,
        seed: section.seed,
        lambda: section.lambda,
        beliefs,
        policies,
    })
}

fn build_fairness(market: &Market, section: FairnessSection) -> Result<FairnessSpec, CliError> {
    let seller = seller_index(market, &section.seller, "fairness.seller")?;
    if !(0.0..=1.0).contains(&section.fair_mean) || !section.fair_mean.is_finite() {
        return Err(invalid(format!(
            "fairness.fair_mean: must lie in [0, 1], got {}",
            section.fair_mean
        )));
    }
    let pool = market.potential_buyers();
    let cap = section.cap.unwrap_or(pool);
    if cap > pool {
        return Err(invalid(format!(
            "fairness.cap: {cap} exceeds the potential pool of {pool}"
        )));
    }
    Ok(FairnessSpec {
        seller,
        fair_mean: section.fair_mean,
        cap,
    })
}
