//! The budget-greedy bribing strategy, strategy dominance, and the
//! profitability threshold below which no bribery pays off.

use thiserror::Error;

use crate::game::{BuyerTarget, CountProfile, EffortStrategy, GameError, Market, SellerState};

/// A bribing budget: the total effort a seller is willing to spend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget(f64);

impl Budget {
    pub fn new(amount: f64) -> Result<Self, GameError> {
        if amount.is_finite() && amount >= 0.0 {
            Ok(Budget(amount))
        } else {
            Err(GameError::InvalidEffort(amount))
        }
    }

    pub fn amount(self) -> f64 {
        self.0
    }
}

/// Outcome of comparing two count strategies across all feasible opponent
/// combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DominanceVerdict {
    /// Strictly better at every opponent combination.
    StrictlyDominates,
    /// At least as good everywhere, equal somewhere.
    WeaklyDominates,
    /// Neither of the above.
    Incomparable,
}

#[derive(Debug, Error, PartialEq)]
pub enum RegimeError {
    #[error("no potential buyers left: bribery is trivially unprofitable")]
    NoPotentialBuyers,
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Spends the budget on the seller's lowest ratings first, topping each up to
/// 1, then on fresh buyers (up to `fresh_pool` of them) at full ratings until
/// the budget runs out. The returned strategy costs at most the budget, with
/// equality unless every target saturates first.
///
/// Ties between equal ratings break by original buyer index, so the output is
/// deterministic.
pub fn greedy_strategy(seller: &SellerState, fresh_pool: usize, budget: Budget) -> EffortStrategy {
    let mut remaining = budget.amount();
    let mut strategy = EffortStrategy::new();

    let mut order: Vec<usize> = (0..seller.ratings().len()).collect();
    order.sort_by(|&a, &b| {
        seller.ratings()[a]
            .value()
            .partial_cmp(&seller.ratings()[b].value())
            .unwrap()
            .then(a.cmp(&b))
    });

    for index in order {
        if remaining <= 0.0 {
            break;
        }
        let rating = seller.ratings()[index].value();
        if rating < 1.0 {
            let effort = (1.0 - rating).min(remaining);
            remaining -= effort;
            strategy
                .insert(
                    BuyerTarget::Rater {
                        seller: seller.id().to_string(),
                        index,
                    },
                    effort,
                )
                .expect("greedy effort is non-negative");
        }
    }

    for tag in 0..fresh_pool as u32 {
        if remaining <= 0.0 {
            break;
        }
        let effort = remaining.min(1.0);
        remaining -= effort;
        strategy
            .insert(BuyerTarget::Fresh { tag }, effort)
            .expect("greedy effort is non-negative");
    }

    strategy
}

/// Whether bribing can pay off at all for this seller: true iff the ratio of
/// its rater count to the potential-buyer pool stays below the per-purchase
/// profit. When false, every positive-budget strategy has payoff at most
/// zero. This is a regime check, not a guard: strategies may still be
/// evaluated in unprofitable regimes.
pub fn is_profitable_regime(market: &Market, seller_index: usize) -> Result<bool, RegimeError> {
    let seller = market.seller(seller_index)?;
    let pool = market.potential_buyers();
    if pool == 0 {
        return Err(RegimeError::NoPotentialBuyers);
    }
    Ok((seller.rater_count() as f64) / (pool as f64) < market.profit_per_purchase())
}

/// Utility of a seller after applying an effort strategy, with the other
/// sellers' bribed counts already committed. Fresh buyers bribed by the
/// strategy leave the potential pool, as do the opponents' counts.
pub fn effort_utility(
    market: &Market,
    seller_index: usize,
    strategy: &EffortStrategy,
    opponents: &CountProfile,
) -> Result<f64, GameError> {
    if opponents.len() != market.seller_count() {
        return Err(GameError::ProfileLengthMismatch {
            expected: market.seller_count(),
            got: opponents.len(),
        });
    }
    let seller = market.seller(seller_index)?;
    let bribed = seller.apply_effort(strategy)?;
    if bribed.rater_count() == 0 {
        return Err(GameError::UndefinedMean {
            seller: seller_index,
        });
    }
    let opponent_total: u64 = opponents
        .counts()
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != seller_index)
        .map(|(_, &c)| c as u64)
        .sum();
    let consumed = opponent_total + strategy.fresh_targets() as u64;
    if consumed > market.potential_buyers() as u64 {
        return Err(GameError::InfeasibleProfile {
            total_counts: consumed,
            potential: market.potential_buyers(),
        });
    }
    let pool = market.potential_buyers() as f64 - consumed as f64;
    Ok(market.profit_per_purchase()
        * market.snowball_scale()
        * pool
        * bribed.mean_rating().powf(market.snowball_exponent()))
}

/// Payoff of an effort strategy against fixed opponent counts: utility gained
/// over doing nothing, minus the strategy's cost.
pub fn effort_payoff(
    market: &Market,
    seller_index: usize,
    strategy: &EffortStrategy,
    opponents: &CountProfile,
) -> Result<f64, GameError> {
    let after = effort_utility(market, seller_index, strategy, opponents)?;
    let before = effort_utility(market, seller_index, &EffortStrategy::new(), opponents)?;
    Ok(after - before - strategy.total_cost())
}

/// Compares count `a` against count `b` for one seller over every opponent
/// combination within `caps` where `b` is feasible. `a` dominates only if it
/// is itself feasible at each of those combinations; strictly if its payoff
/// is higher everywhere, weakly if never lower and equal somewhere.
pub fn dominates(
    market: &Market,
    seller_index: usize,
    a: u32,
    b: u32,
    caps: &CountProfile,
) -> Result<DominanceVerdict, GameError> {
    if caps.len() != market.seller_count() {
        return Err(GameError::ProfileLengthMismatch {
            expected: market.seller_count(),
            got: caps.len(),
        });
    }
    market.seller(seller_index)?;
    let mut strict = true;
    let mut compared = false;
    for opponents in opponent_combinations(caps, seller_index) {
        let profile_b = opponents.with_count(seller_index, b);
        if !market.is_feasible(&profile_b) {
            continue;
        }
        let profile_a = opponents.with_count(seller_index, a);
        if !market.is_feasible(&profile_a) {
            return Ok(DominanceVerdict::Incomparable);
        }
        compared = true;
        let pa = market.payoff(seller_index, &profile_a)?;
        let pb = market.payoff(seller_index, &profile_b)?;
        if pa < pb {
            return Ok(DominanceVerdict::Incomparable);
        }
        if pa == pb {
            strict = false;
        }
    }
    if !compared {
        return Ok(DominanceVerdict::Incomparable);
    }
    Ok(if strict {
        DominanceVerdict::StrictlyDominates
    } else {
        DominanceVerdict::WeaklyDominates
    })
}

/// All opponent combinations within caps, with the mover's slot pinned to 0.
pub(crate) fn opponent_combinations(
    caps: &CountProfile,
    seller_index: usize,
) -> impl Iterator<Item = CountProfile> {
    let caps = caps.clone();
    let mut current: Vec<u32> = vec![0; caps.len()];
    let mut done = caps.is_empty();
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let item = CountProfile(current.clone());
        // Odometer increment over every slot except the mover's.
        let mut pos = caps.len();
        loop {
            if pos == 0 {
                done = true;
                break;
            }
            pos -= 1;
            if pos == seller_index {
                continue;
            }
            if current[pos] < caps.count_for(pos) {
                current[pos] += 1;
                for (later, slot) in current.iter_mut().enumerate().skip(pos + 1) {
                    if later != seller_index {
                        *slot = 0;
                    }
                }
                break;
            }
        }
        Some(item)
    })
}
