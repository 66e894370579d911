//! Domain types and the utility/payoff algebra shared by every other module.
//!
//! A [`Market`] holds the seller roster and global parameters; bribing is
//! expressed either as an [`EffortStrategy`] (continuous per-buyer effort) or
//! as a [`CountProfile`] (one integer per seller: how many fresh buyers each
//! bribes to a rating of 1). All values are immutable after construction and
//! all operations are pure functions.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

/// Errors from constructing or evaluating the core game types.
#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("rating {0} outside [0, 1]")]
    RatingOutOfRange(f64),
    #[error("seller has {ratings} ratings but only {rater_count} raters")]
    RaterCountBelowRatings { ratings: usize, rater_count: usize },
    #[error("{interacted} interacted buyers exceed the market total of {total}")]
    BuyerOverflow { interacted: usize, total: usize },
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("effort {0} must be non-negative and finite")]
    InvalidEffort(f64),
    #[error("seller index {index} out of bounds for {len} sellers")]
    SellerIndexOutOfBounds { index: usize, len: usize },
    #[error("profile has {got} counts but the market has {expected} sellers")]
    ProfileLengthMismatch { expected: usize, got: usize },
    #[error("profile bribes {total_counts} buyers but only {potential} are available")]
    InfeasibleProfile { total_counts: u64, potential: usize },
    #[error("seller {seller} has no raters and bribes none: mean rating undefined")]
    UndefinedMean { seller: usize },
    #[error("strategy targets a rater of seller {found}, expected seller {expected}")]
    ForeignRater { expected: String, found: String },
    #[error("rater index {index} out of bounds for {len} ratings")]
    RaterIndexOutOfBounds { index: usize, len: usize },
}

/// A single rating, always inside `[0, 1]`.
///
/// Star scales are mapped onto the unit interval by the caller.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Rating(f64);

impl Rating {
    pub fn new(value: f64) -> Result<Self, GameError> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(Rating(value))
        } else {
            Err(GameError::RatingOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Raises the rating by `effort`, saturating at 1.
    pub fn raise(self, effort: f64) -> Rating {
        Rating((self.0 + effort).min(1.0))
    }
}

/// One seller's standing in the market: the ratings received so far and the
/// number of buyers it has interacted with. `rater_count` may exceed the
/// number of ratings since not every buyer scores its purchase.
#[derive(Debug, Clone, PartialEq)]
pub struct SellerState {
    id: String,
    ratings: Vec<Rating>,
    rater_count: usize,
}

impl SellerState {
    pub fn new(
        id: impl Into<String>,
        ratings: Vec<Rating>,
        rater_count: usize,
    ) -> Result<Self, GameError> {
        if ratings.len() > rater_count {
            return Err(GameError::RaterCountBelowRatings {
                ratings: ratings.len(),
                rater_count,
            });
        }
        Ok(SellerState {
            id: id.into(),
            ratings,
            rater_count,
        })
    }

    /// Convenience constructor: every rater scored, all values validated.
    pub fn from_values(id: impl Into<String>, values: &[f64]) -> Result<Self, GameError> {
        let ratings = values
            .iter()
            .map(|&v| Rating::new(v))
            .collect::<Result<Vec<_>, _>>()?;
        let count = ratings.len();
        SellerState::new(id, ratings, count)
    }

    /// A seller with `raters` interacted buyers all scoring `mean`.
    pub fn from_mean(id: impl Into<String>, raters: usize, mean: f64) -> Result<Self, GameError> {
        let rating = Rating::new(mean)?;
        SellerState::new(id, vec![rating; raters], raters)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn rater_count(&self) -> usize {
        self.rater_count
    }

    /// Sum of all received ratings (the rating mass).
    pub fn rating_sum(&self) -> f64 {
        self.ratings.iter().map(|r| r.value()).sum()
    }

    /// Arithmetic mean of the received ratings; 0 when no ratings exist
    /// (no evidence, no reputation).
    pub fn mean_rating(&self) -> f64 {
        if self.ratings.is_empty() {
            0.0
        } else {
            self.rating_sum() / self.ratings.len() as f64
        }
    }

    /// Applies a bribing strategy: targeted existing ratings are raised
    /// (saturating at 1), fresh targets append a new rating of `min(1, effort)`
    /// and grow the rater count. Untouched ratings are unchanged.
    pub fn apply_effort(&self, strategy: &EffortStrategy) -> Result<SellerState, GameError> {
        let mut ratings = self.ratings.clone();
        let mut fresh = 0usize;
        for (target, &effort) in &strategy.efforts {
            match target {
                BuyerTarget::Rater { seller, index } => {
                    if seller != &self.id {
                        return Err(GameError::ForeignRater {
                            expected: self.id.clone(),
                            found: seller.clone(),
                        });
                    }
                    let slot = ratings
                        .get_mut(*index)
                        .ok_or(GameError::RaterIndexOutOfBounds {
                            index: *index,
                            len: self.ratings.len(),
                        })?;
                    *slot = slot.raise(effort);
                }
                BuyerTarget::Fresh { .. } => {
                    ratings.push(Rating(effort.min(1.0)));
                    fresh += 1;
                }
            }
        }
        Ok(SellerState {
            id: self.id.clone(),
            ratings,
            rater_count: self.rater_count + fresh,
        })
    }

    /// Appends `count` ratings of `value` and grows the rater count to match.
    pub fn with_appended_ratings(&self, count: usize, value: Rating) -> SellerState {
        let mut ratings = self.ratings.clone();
        ratings.resize(ratings.len() + count, value);
        SellerState {
            id: self.id.clone(),
            ratings,
            rater_count: self.rater_count + count,
        }
    }
}

/// A buyer addressed by a bribing strategy: either an existing rater of a
/// specific seller (by index into its rating list) or a fresh buyer that has
/// not interacted with the seller yet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum BuyerTarget {
    Rater { seller: String, index: usize },
    Fresh { tag: u32 },
}

/// A per-buyer bribing effort map. Effort spent on an existing rater raises
/// its rating; effort spent on a fresh buyer buys a new rating.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EffortStrategy {
    efforts: BTreeMap<BuyerTarget, f64>,
}

impl EffortStrategy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, target: BuyerTarget, effort: f64) -> Result<(), GameError> {
        if !effort.is_finite() || effort < 0.0 {
            return Err(GameError::InvalidEffort(effort));
        }
        self.efforts.insert(target, effort);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.efforts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.efforts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BuyerTarget, f64)> {
        self.efforts.iter().map(|(t, &e)| (t, e))
    }

    pub fn effort_for(&self, target: &BuyerTarget) -> Option<f64> {
        self.efforts.get(target).copied()
    }

    /// Total bribing cost: the sum of all efforts.
    pub fn total_cost(&self) -> f64 {
        self.efforts.values().sum()
    }

    /// Number of fresh (non-rater) buyers this strategy bribes.
    pub fn fresh_targets(&self) -> usize {
        self.efforts
            .keys()
            .filter(|t| matches!(t, BuyerTarget::Fresh { .. }))
            .count()
    }
}

/// One non-negative integer per seller: how many fresh buyers each bribes to
/// a rating of 1. Feasibility against a market's potential-buyer pool is
/// checked at evaluation time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CountProfile(pub Vec<u32>);

impl CountProfile {
    pub fn zeros(sellers: usize) -> Self {
        CountProfile(vec![0; sellers])
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn count_for(&self, seller: usize) -> u32 {
        self.0[seller]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| c as u64).sum()
    }

    /// The same profile with seller `index` playing `count` instead.
    pub fn with_count(&self, index: usize, count: u32) -> CountProfile {
        let mut counts = self.0.clone();
        counts[index] = count;
        CountProfile(counts)
    }

    /// Bribing cost for one seller: each fresh buyer bribed from unrated to
    /// a rating of 1 costs unit effort.
    pub fn cost_for(&self, seller: usize) -> f64 {
        self.0[seller] as f64
    }
}

impl std::fmt::Display for CountProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// The global market state: seller roster, total buyer count, per-purchase
/// profit and the snowball parameters relating mean rating to sales.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    sellers: Vec<SellerState>,
    total_buyers: usize,
    profit_per_purchase: f64,
    snowball_scale: f64,
    snowball_exponent: f64,
}

impl Market {
    /// Builds a market with the default snowball parameters (scale 1,
    /// exponent 1: utility linear in the mean rating).
    pub fn new(
        sellers: Vec<SellerState>,
        total_buyers: usize,
        profit_per_purchase: f64,
    ) -> Result<Self, GameError> {
        Market::with_snowball(sellers, total_buyers, profit_per_purchase, 1.0, 1.0)
    }

    pub fn with_snowball(
        sellers: Vec<SellerState>,
        total_buyers: usize,
        profit_per_purchase: f64,
        snowball_scale: f64,
        snowball_exponent: f64,
    ) -> Result<Self, GameError> {
        if !(profit_per_purchase.is_finite() && profit_per_purchase > 0.0) {
            return Err(GameError::NonPositiveParameter {
                name: "profit_per_purchase",
                value: profit_per_purchase,
            });
        }
        if !(snowball_scale.is_finite() && snowball_scale > 0.0) {
            return Err(GameError::NonPositiveParameter {
                name: "snowball_scale",
                value: snowball_scale,
            });
        }
        if !(snowball_exponent.is_finite() && snowball_exponent > 0.0) {
            return Err(GameError::NonPositiveParameter {
                name: "snowball_exponent",
                value: snowball_exponent,
            });
        }
        let interacted: usize = sellers.iter().map(|s| s.rater_count()).sum();
        if interacted > total_buyers {
            return Err(GameError::BuyerOverflow {
                interacted,
                total: total_buyers,
            });
        }
        Ok(Market {
            sellers,
            total_buyers,
            profit_per_purchase,
            snowball_scale,
            snowball_exponent,
        })
    }

    pub fn sellers(&self) -> &[SellerState] {
        &self.sellers
    }

    pub fn seller(&self, index: usize) -> Result<&SellerState, GameError> {
        self.sellers
            .get(index)
            .ok_or(GameError::SellerIndexOutOfBounds {
                index,
                len: self.sellers.len(),
            })
    }

    pub fn seller_count(&self) -> usize {
        self.sellers.len()
    }

    pub fn total_buyers(&self) -> usize {
        self.total_buyers
    }

    pub fn profit_per_purchase(&self) -> f64 {
        self.profit_per_purchase
    }

    pub fn snowball_scale(&self) -> f64 {
        self.snowball_scale
    }

    pub fn snowball_exponent(&self) -> f64 {
        self.snowball_exponent
    }

    /// Buyers who have not interacted with any seller: the pool future
    /// utility is drawn from.
    pub fn potential_buyers(&self) -> usize {
        self.total_buyers - self.sellers.iter().map(|s| s.rater_count()).sum::<usize>()
    }

    /// Replaces one seller, revalidating the buyer budget.
    pub fn with_seller(&self, index: usize, seller: SellerState) -> Result<Market, GameError> {
        self.seller(index)?;
        let mut sellers = self.sellers.clone();
        sellers[index] = seller;
        Market::with_snowball(
            sellers,
            self.total_buyers,
            self.profit_per_purchase,
            self.snowball_scale,
            self.snowball_exponent,
        )
    }

    /// The same market with `arrivals` more buyers in the pool.
    pub fn with_arrivals(&self, arrivals: usize) -> Market {
        let mut market = self.clone();
        market.total_buyers += arrivals;
        market
    }

    fn check_profile(&self, profile: &CountProfile) -> Result<(), GameError> {
        if profile.len() != self.sellers.len() {
            return Err(GameError::ProfileLengthMismatch {
                expected: self.sellers.len(),
                got: profile.len(),
            });
        }
        let total = profile.total();
        if total > self.potential_buyers() as u64 {
            return Err(GameError::InfeasibleProfile {
                total_counts: total,
                potential: self.potential_buyers(),
            });
        }
        Ok(())
    }

    /// Whether the profile fits both the seller roster and the buyer pool.
    pub fn is_feasible(&self, profile: &CountProfile) -> bool {
        self.check_profile(profile).is_ok()
    }

    /// Expected utility of a seller once every seller has bribed its counted
    /// number of fresh buyers to a rating of 1:
    /// `k * scale * remaining_pool * mean'^exponent`, where `mean'` is the
    /// seller's rating mean including the bribed ratings. With the zero
    /// profile this is the initial utility.
    pub fn utility(&self, seller_index: usize, profile: &CountProfile) -> Result<f64, GameError> {
        self.check_profile(profile)?;
        let seller = self.seller(seller_index)?;
        let own = profile.count_for(seller_index) as f64;
        let raters = seller.rater_count() as f64 + own;
        if raters == 0.0 {
            return Err(GameError::UndefinedMean {
                seller: seller_index,
            });
        }
        let mean = (seller.rating_sum() + own) / raters;
        let pool = self.potential_buyers() as f64 - profile.total() as f64;
        Ok(self.profit_per_purchase
            * self.snowball_scale
            * pool
            * mean.powf(self.snowball_exponent))
    }

    /// Utility net of the seller's own bribing cost. This is the quantity a
    /// seller maximizes over its own count; it differs from [`Market::payoff`]
    /// only by the constant initial utility.
    pub fn net_utility(
        &self,
        seller_index: usize,
        profile: &CountProfile,
    ) -> Result<f64, GameError> {
        Ok(self.utility(seller_index, profile)? - profile.cost_for(seller_index))
    }

    /// Gain of the bribing strategy over doing nothing: utility at `profile`
    /// minus the initial utility minus the seller's own cost.
    pub fn payoff(&self, seller_index: usize, profile: &CountProfile) -> Result<f64, GameError> {
        let zero = CountProfile::zeros(self.sellers.len());
        Ok(self.net_utility(seller_index, profile)? - self.utility(seller_index, &zero)?)
    }
}
