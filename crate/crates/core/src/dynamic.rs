//! The sequential game under uncertainty: Poisson buyer arrivals, per-seller
//! beliefs about the potential-buyer pool, conditional opponent policies,
//! expected payoffs, backward-induction solving and the slot-by-slot market
//! simulator.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::{CountProfile, GameError, Market};

#[derive(Debug, Error, PartialEq)]
pub enum DynamicError {
    #[error("arrival rate {0} must be non-negative and finite")]
    InvalidRate(f64),
    #[error("probability {0} must be non-negative and finite")]
    InvalidProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    UnnormalizedDistribution(f64),
    #[error("distribution has an empty support")]
    EmptySupport,
    #[error("move order is not a permutation of the {expected} seller indices")]
    InvalidOrder { expected: usize },
    #[error("expected {expected} per-seller {what}, got {got}")]
    PerSellerLengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("seller moves at position {position} and needs a history of that length, got {got}")]
    HistoryMismatch { position: usize, got: usize },
    #[error("seller {seller} is not part of the move order")]
    UnknownSeller { seller: usize },
    #[error("no conditional policy for seller {seller} after history {history:?}")]
    MissingPolicy { seller: usize, history: Vec<u32> },
    #[error("game tree has {leaves} leaves, exceeding the bound of {bound}")]
    TreeTooLarge { leaves: u128, bound: u128 },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Buyer arrivals per time slot, Poisson with a per-slot rate. The rate
/// schedule extends past its last entry as a constant tail; an empty schedule
/// means no arrivals. Identical seeds always yield identical sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProcess {
    rates: Vec<f64>,
    seed: u64,
}

impl ArrivalProcess {
    pub fn new(rates: Vec<f64>, seed: u64) -> Result<Self, DynamicError> {
        for &rate in &rates {
            if !rate.is_finite() || rate < 0.0 {
                return Err(DynamicError::InvalidRate(rate));
            }
        }
        Ok(ArrivalProcess { rates, seed })
    }

    pub fn rate_at(&self, slot: usize) -> f64 {
        match self.rates.get(slot) {
            Some(&rate) => rate,
            None => self.rates.last().copied().unwrap_or(0.0),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// One Poisson draw per slot from the seeded generator.
    pub fn sample(&self, slots: usize) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..slots)
            .map(|slot| poisson_draw(&mut rng, self.rate_at(slot)))
            .collect()
    }
}

/// Poisson sampling: inversion by sequential search for small rates; larger
/// rates are split into sub-30 chunks and the chunk draws summed, which is
/// exact by additivity of independent Poisson counts.
fn poisson_draw(rng: &mut ChaCha8Rng, rate: f64) -> u64 {
    if rate == 0.0 {
        return 0;
    }
    if rate < 30.0 {
        return poisson_inversion(rng, rate);
    }
    let chunks = (rate / 16.0).ceil() as u64;
    let chunk_rate = rate / chunks as f64;
    (0..chunks)
        .map(|_| poisson_inversion(rng, chunk_rate))
        .sum()
}

fn poisson_inversion(rng: &mut ChaCha8Rng, rate: f64) -> u64 {
    let mut k = 0u64;
    let mut p = (-rate).exp();
    let mut cdf = p;
    let u: f64 = rng.gen();
    // The tail guard only matters if u lands beyond the representable cdf.
    let cap = (rate * 20.0) as u64 + 100;
    while u > cdf && k < cap {
        k += 1;
        p *= rate / k as f64;
        cdf += p;
    }
    k
}

/// A seller's belief about the number of potential buyers: a finite support
/// of candidate pool sizes with probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefModel {
    atoms: Vec<(usize, f64)>,
}

impl BeliefModel {
    pub fn new(atoms: Vec<(usize, f64)>) -> Result<Self, DynamicError> {
        if atoms.is_empty() {
            return Err(DynamicError::EmptySupport);
        }
        let mut total = 0.0;
        for &(_, weight) in &atoms {
            if !weight.is_finite() || weight < 0.0 {
                return Err(DynamicError::InvalidProbability(weight));
            }
            total += weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(DynamicError::UnnormalizedDistribution(total));
        }
        Ok(BeliefModel { atoms })
    }

    /// Certainty: the pool is `pool` with probability one.
    pub fn point(pool: usize) -> Self {
        BeliefModel {
            atoms: vec![(pool, 1.0)],
        }
    }

    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.atoms
    }
}

/// A probability distribution over one seller's counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    weights: Vec<(u32, f64)>,
}

impl CountDistribution {
    pub fn new(mut weights: Vec<(u32, f64)>) -> Result<Self, DynamicError> {
        if weights.is_empty() {
            return Err(DynamicError::EmptySupport);
        }
        let mut total = 0.0;
        for &(_, weight) in &weights {
            if !weight.is_finite() || weight < 0.0 {
                return Err(DynamicError::InvalidProbability(weight));
            }
            total += weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(DynamicError::UnnormalizedDistribution(total));
        }
        weights.sort_by_key(|&(count, _)| count);
        Ok(CountDistribution { weights })
    }

    pub fn point(count: u32) -> Self {
        CountDistribution {
            weights: vec![(count, 1.0)],
        }
    }

    pub fn uniform(max_count: u32) -> Self {
        let p = 1.0 / (max_count as f64 + 1.0);
        CountDistribution {
            weights: (0..=max_count).map(|c| (c, p)).collect(),
        }
    }

    pub fn weights(&self) -> &[(u32, f64)] {
        &self.weights
    }
}

/// How a seller is expected to move given the counts already observed. The
/// rule table is keyed by the exact history prefix; the fallback, when
/// present, covers every prefix without a rule.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionalPolicy {
    rules: BTreeMap<Vec<u32>, CountDistribution>,
    fallback: Option<CountDistribution>,
}

impl ConditionalPolicy {
    pub fn new(
        rules: BTreeMap<Vec<u32>, CountDistribution>,
        fallback: Option<CountDistribution>,
    ) -> Self {
        ConditionalPolicy { rules, fallback }
    }

    /// The same move distribution regardless of history.
    pub fn unconditional(distribution: CountDistribution) -> Self {
        ConditionalPolicy {
            rules: BTreeMap::new(),
            fallback: Some(distribution),
        }
    }

    pub fn lookup(&self, history: &[u32]) -> Option<&CountDistribution> {
        self.rules.get(history).or(self.fallback.as_ref())
    }
}

/// The sequential bribery game: a market, a move order over its sellers,
/// per-seller count caps, per-seller beliefs about the potential pool, and
/// conditional policies describing how each seller is expected to move.
#[derive(Debug, Clone)]
pub struct SequentialGame {
    market: Market,
    order: Vec<usize>,
    caps: CountProfile,
    beliefs: Vec<BeliefModel>,
    policies: Vec<ConditionalPolicy>,
}

impl SequentialGame {
    pub fn new(
        market: Market,
        order: Vec<usize>,
        caps: CountProfile,
        beliefs: Vec<BeliefModel>,
        policies: Vec<ConditionalPolicy>,
    ) -> Result<Self, DynamicError> {
        let m = market.seller_count();
        let mut seen = vec![false; m];
        if order.len() != m {
            return Err(DynamicError::InvalidOrder { expected: m });
        }
        for &seller in &order {
            if seller >= m || seen[seller] {
                return Err(DynamicError::InvalidOrder { expected: m });
            }
            seen[seller] = true;
        }
        if caps.len() != m {
            return Err(DynamicError::PerSellerLengthMismatch {
                what: "caps",
                expected: m,
                got: caps.len(),
            });
        }
        if beliefs.len() != m {
            return Err(DynamicError::PerSellerLengthMismatch {
                what: "beliefs",
                expected: m,
                got: beliefs.len(),
            });
        }
        if policies.len() != m {
            return Err(DynamicError::PerSellerLengthMismatch {
                what: "policies",
                expected: m,
                got: policies.len(),
            });
        }
        Ok(SequentialGame {
            market,
            order,
            caps,
            beliefs,
            policies,
        })
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn caps(&self) -> &CountProfile {
        &self.caps
    }

    pub fn beliefs(&self) -> &[BeliefModel] {
        &self.beliefs
    }

    /// The game re-rooted at a different market state.
    pub fn with_market(&self, market: Market) -> SequentialGame {
        SequentialGame {
            market,
            ..self.clone()
        }
    }

    fn position_of(&self, seller: usize) -> Result<usize, DynamicError> {
        self.order
            .iter()
            .position(|&s| s == seller)
            .ok_or(DynamicError::UnknownSeller { seller })
    }

    /// The market a belief atom describes: same sellers, pool forced to the
    /// believed size.
    fn market_for_pool(&self, pool: usize) -> Market {
        let interacted: usize = self.market.sellers().iter().map(|s| s.rater_count()).sum();
        Market::with_snowball(
            self.market.sellers().to_vec(),
            interacted + pool,
            self.market.profit_per_purchase(),
            self.market.snowball_scale(),
            self.market.snowball_exponent(),
        )
        .expect("pool-instantiated market is always consistent")
    }
}

/// Static payoff with the remaining pool clamped at zero, so that belief
/// atoms smaller than the committed counts read as "no buyers left" instead
/// of failing. Bit-identical to [`Market::payoff`] on feasible profiles.
fn clamped_payoff(
    market: &Market,
    seller_index: usize,
    profile: &CountProfile,
) -> Result<f64, GameError> {
    let utility = |profile: &CountProfile| -> Result<f64, GameError> {
        let seller = market.seller(seller_index)?;
        let own = profile.count_for(seller_index) as f64;
        let raters = seller.rater_count() as f64 + own;
        if raters == 0.0 {
            return Err(GameError::UndefinedMean {
                seller: seller_index,
            });
        }
        let mean = (seller.rating_sum() + own) / raters;
        let pool = (market.potential_buyers() as f64 - profile.total() as f64).max(0.0);
        Ok(market.profit_per_purchase()
            * market.snowball_scale()
            * pool
            * mean.powf(market.snowball_exponent()))
    };
    let zero = CountProfile::zeros(market.seller_count());
    Ok(utility(profile)? - profile.cost_for(seller_index) - utility(&zero)?)
}

/// Expected payoff of each own count for a seller about to move after
/// `history`: the exact expectation of static payoff over the later movers'
/// conditional policies and the seller's own belief about the pool.
///
/// Returns one value per own count `0..=cap`.
pub fn expected_payoff(
    game: &SequentialGame,
    seller_index: usize,
    history: &[u32],
) -> Result<Vec<f64>, DynamicError> {
    let position = game.position_of(seller_index)?;
    if history.len() != position {
        return Err(DynamicError::HistoryMismatch {
            position,
            got: history.len(),
        });
    }
    let cap = game.caps.count_for(seller_index);
    let mut result = Vec::with_capacity(cap as usize + 1);
    for own in 0..=cap {
        let mut prefix = history.to_vec();
        prefix.push(own);
        let mut expectation = 0.0;
        for &(pool, weight) in game.beliefs[seller_index].atoms() {
            let atom_market = game.market_for_pool(pool);
            expectation += weight
                * expect_over_later_movers(
                    game,
                    &atom_market,
                    seller_index,
                    position + 1,
                    &mut prefix,
                )?;
        }
        result.push(expectation);
    }
    Ok(result)
}

/// Recursive expectation over the policy distributions of movers from
/// `position` on; at the leaves the completed profile is scored for
/// `seller_index` on `market`.
fn expect_over_later_movers(
    game: &SequentialGame,
    market: &Market,
    seller_index: usize,
    position: usize,
    prefix: &mut Vec<u32>,
) -> Result<f64, DynamicError> {
    if position == game.order.len() {
        let mut counts = vec![0u32; game.order.len()];
        for (pos, &mover) in game.order.iter().enumerate() {
            counts[mover] = prefix[pos];
        }
        return Ok(clamped_payoff(market, seller_index, &CountProfile(counts))?);
    }
    let mover = game.order[position];
    let distribution =
        game.policies[mover]
            .lookup(prefix)
            .ok_or_else(|| DynamicError::MissingPolicy {
                seller: mover,
                history: prefix.clone(),
            })?;
    let weights = distribution.weights().to_vec();
    let mut expectation = 0.0;
    for (count, probability) in weights {
        if probability == 0.0 {
            continue;
        }
        prefix.push(count);
        expectation += probability
            * expect_over_later_movers(game, market, seller_index, position + 1, prefix)?;
        prefix.pop();
    }
    Ok(expectation)
}

/// The argmax set of [`expected_payoff`]; ties in full, ascending.
pub fn bayesian_best_response(
    game: &SequentialGame,
    seller_index: usize,
    history: &[u32],
) -> Result<Vec<u32>, DynamicError> {
    let payoffs = expected_payoff(game, seller_index, history)?;
    let best = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(payoffs
        .iter()
        .enumerate()
        .filter(|&(_, &value)| value == best)
        .map(|(count, _)| count as u32)
        .collect())
}

/// A backward-induction solution: the count each mover picks at every
/// possible history, plus the realized play path.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialPlan {
    order: Vec<usize>,
    plans: Vec<BTreeMap<Vec<u32>, u32>>,
    path: Vec<u32>,
}

impl SequentialPlan {
    /// Move order by seller index.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The chosen count of the mover at `position` after `history`.
    pub fn choice(&self, position: usize, history: &[u32]) -> Option<u32> {
        self.plans
            .get(position)
            .and_then(|p| p.get(history))
            .copied()
    }

    /// Realized counts in move order.
    pub fn path(&self) -> &[u32] {
        &self.path
    }

    /// Realized counts by seller index.
    pub fn profile(&self) -> CountProfile {
        let mut counts = vec![0u32; self.order.len()];
        for (pos, &mover) in self.order.iter().enumerate() {
            counts[mover] = self.path[pos];
        }
        CountProfile(counts)
    }
}

pub const DEFAULT_TREE_BOUND: u128 = 1 << 20;

/// Backward induction over the full history tree with the default size
/// bound.
pub fn solve_sequential(game: &SequentialGame) -> Result<SequentialPlan, DynamicError> {
    solve_sequential_bounded(game, DEFAULT_TREE_BOUND)
}

/// Backward induction: the last mover best-responds at every history under
/// its own beliefs; earlier movers optimize against the later movers' plans.
/// Ties break toward the lowest count, making the plan deterministic. The
/// returned plan admits no profitable unilateral single-history deviation
/// (checked when debug assertions are on).
pub fn solve_sequential_bounded(
    game: &SequentialGame,
    max_leaves: u128,
) -> Result<SequentialPlan, DynamicError> {
    let leaves: u128 = game.caps.counts().iter().map(|&c| c as u128 + 1).product();
    if leaves > max_leaves {
        return Err(DynamicError::TreeTooLarge {
            leaves,
            bound: max_leaves,
        });
    }

    let positions = game.order.len();
    let mut plans: Vec<BTreeMap<Vec<u32>, u32>> = vec![BTreeMap::new(); positions];
    for position in (0..positions).rev() {
        let mover = game.order[position];
        for history in histories_before(game, position) {
            let values = plan_values(game, position, &history, &plans)?;
            let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let choice = values
                .iter()
                .position(|&v| v == best)
                .expect("non-empty count range") as u32;
            plans[position].insert(history, choice);
        }
        let _ = mover;
    }

    let mut path = Vec::with_capacity(positions);
    for plan in &plans {
        let choice = plan[&path];
        path.push(choice);
    }

    let plan = SequentialPlan {
        order: game.order.clone(),
        plans,
        path,
    };

    #[cfg(debug_assertions)]
    assert_deviation_proof(game, &plan)?;

    Ok(plan)
}

/// Expected payoff per own count for the mover at `position` given
/// `history`, with all later movers following their computed plans and the
/// expectation taken over the mover's own beliefs.
fn plan_values(
    game: &SequentialGame,
    position: usize,
    history: &[u32],
    plans: &[BTreeMap<Vec<u32>, u32>],
) -> Result<Vec<f64>, DynamicError> {
    let mover = game.order[position];
    let cap = game.caps.count_for(mover);
    let mut values = Vec::with_capacity(cap as usize + 1);
    for own in 0..=cap {
        let mut prefix = history.to_vec();
        prefix.push(own);
        for plan in &plans[position + 1..] {
            let choice = plan[&prefix];
            prefix.push(choice);
        }
        let mut counts = vec![0u32; game.order.len()];
        for (pos, &seller) in game.order.iter().enumerate() {
            counts[seller] = prefix[pos];
        }
        let profile = CountProfile(counts);
        let mut expectation = 0.0;
        for &(pool, weight) in game.beliefs[mover].atoms() {
            let atom_market = game.market_for_pool(pool);
            expectation += weight * clamped_payoff(&atom_market, mover, &profile)?;
        }
        values.push(expectation);
    }
    Ok(values)
}

/// Every history that can precede the mover at `position` within caps.
fn histories_before(game: &SequentialGame, position: usize) -> Vec<Vec<u32>> {
    let mut histories = vec![Vec::new()];
    for &earlier in &game.order[..position] {
        let cap = game.caps.count_for(earlier);
        histories = histories
            .into_iter()
            .flat_map(|h| {
                (0..=cap).map(move |c| {
                    let mut extended = h.clone();
                    extended.push(c);
                    extended
                })
            })
            .collect();
    }
    histories
}

#[cfg(debug_assertions)]
fn assert_deviation_proof(
    game: &SequentialGame,
    plan: &SequentialPlan,
) -> Result<(), DynamicError> {
    for position in 0..game.order.len() {
        for history in histories_before(game, position) {
            let values = plan_values(game, position, &history, &plan.plans)?;
            let chosen = plan.plans[position][&history] as usize;
            for value in &values {
                debug_assert!(
                    *value <= values[chosen] + 1e-9,
                    "profitable deviation at position {position}, history {history:?}"
                );
            }
        }
    }
    Ok(())
}

/// One simulated slot: the arrivals that joined, each seller's applied
/// count, each seller's standing utility after the bribed ratings landed,
/// and the remaining potential pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub arrivals: u64,
    pub counts: CountProfile,
    pub utilities: Vec<f64>,
    pub potential_buyers: usize,
}

/// A full simulation trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    seller_ids: Vec<String>,
    records: Vec<SlotRecord>,
}

impl Trace {
    pub fn records(&self) -> &[SlotRecord] {
        &self.records
    }

    pub fn seller_ids(&self) -> &[String] {
        &self.seller_ids
    }

    /// CSV export: slot, arrivals, per-seller count, per-seller utility,
    /// remaining pool.
    pub fn to_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = vec!["slot".to_string(), "arrivals".to_string()];
        for id in &self.seller_ids {
            header.push(format!("count_{id}"));
        }
        for id in &self.seller_ids {
            header.push(format!("utility_{id}"));
        }
        header.push("potential_buyers".to_string());
        writeln!(out, "{}", header.join(","))?;
        for record in &self.records {
            let mut row = vec![record.slot.to_string(), record.arrivals.to_string()];
            row.extend(record.counts.counts().iter().map(|c| c.to_string()));
            row.extend(record.utilities.iter().map(|u| format!("{u}")));
            row.push(record.potential_buyers.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Runs the market forward: each slot adds the Poisson arrivals to the buyer
/// pool, lets every seller move in order via its Bayesian best response
/// (lowest count on ties), then turns the bribed buyers into raters at
/// rating 1. Counts are capped by the buyers actually available at apply
/// time, so the trace always conserves buyers. Deterministic per seed.
pub fn simulate(
    game: &SequentialGame,
    process: &ArrivalProcess,
    slots: usize,
) -> Result<Trace, DynamicError> {
    let mut market = game.market().clone();
    let arrivals = process.sample(slots);
    let mut records = Vec::with_capacity(slots);
    for (slot, &arrived) in arrivals.iter().enumerate() {
        market = market.with_arrivals(arrived as usize);
        let stage = game.with_market(market.clone());
        let mut history: Vec<u32> = Vec::new();
        for &mover in game.order() {
            let responses = bayesian_best_response(&stage, mover, &history)?;
            history.push(responses[0]);
        }
        let mut counts = vec![0u32; market.seller_count()];
        for (position, &mover) in game.order().iter().enumerate() {
            let available = market.potential_buyers() as u32;
            let applied = history[position].min(available);
            counts[mover] = applied;
            let bribed = market
                .seller(mover)?
                .with_appended_ratings(applied as usize, crate::game::Rating::new(1.0)?);
            market = market.with_seller(mover, bribed)?;
        }
        let zero = CountProfile::zeros(market.seller_count());
        let utilities = (0..market.seller_count())
            .map(|seller| market.utility(seller, &zero))
            .collect::<Result<Vec<_>, _>>()?;
        records.push(SlotRecord {
            slot: slot + 1,
            arrivals: arrived,
            counts: CountProfile(counts),
            utilities,
            potential_buyers: market.potential_buyers(),
        });
    }
    Ok(Trace {
        seller_ids: market
            .sellers()
            .iter()
            .map(|s| s.id().to_string())
            .collect(),
        records,
    })
}
