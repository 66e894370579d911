//! Resistance of a seller to bribery once unbribable fair raters enter:
//! utility with a fair cohort installed, the as-printed critical-point
//! quadratic, and a brute-force minimal-cohort threshold.

use crate::game::{CountProfile, GameError, Market, Rating};

/// A cohort of fair raters: how many there are and the mean rating they
/// give. Their total rating mass is `count * mean_rating` and their ratings
/// cannot be bribed away.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairCohort {
    count: usize,
    mean_rating: f64,
}

impl FairCohort {
    pub fn new(count: usize, mean_rating: f64) -> Result<Self, GameError> {
        Rating::new(mean_rating)?;
        Ok(FairCohort { count, mean_rating })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean_rating(&self) -> f64 {
        self.mean_rating
    }
}

/// Utility of a seller once the cohort has rated and purchased: the cohort
/// joins the seller's raters (its rating mass enters the numerator, its head
/// count the denominator), shrinks the remaining pool, and contributes one
/// purchase profit each.
///
/// With an empty cohort this is exactly the seller's initial utility.
pub fn utility_with_fair(
    market: &Market,
    seller_index: usize,
    cohort: &FairCohort,
) -> Result<f64, GameError> {
    let pool = market.potential_buyers();
    if cohort.count > pool {
        return Err(GameError::InfeasibleProfile {
            total_counts: cohort.count as u64,
            potential: pool,
        });
    }
    let seller = market.seller(seller_index)?;
    let raters = seller.rater_count() + cohort.count;
    if raters == 0 {
        return Err(GameError::UndefinedMean {
            seller: seller_index,
        });
    }
    let mass = seller.rating_sum() + cohort.count as f64 * cohort.mean_rating;
    let mean = mass / raters as f64;
    Ok(market.profit_per_purchase()
        * market.snowball_scale()
        * (pool - cohort.count) as f64
        * mean.powf(market.snowball_exponent())
        + market.profit_per_purchase() * cohort.count as f64)
}

/// The market after the cohort has rated: the seller gains `count` ratings
/// of the cohort mean, and the cohort leaves the potential pool.
pub fn install_cohort(
    market: &Market,
    seller_index: usize,
    cohort: &FairCohort,
) -> Result<Market, GameError> {
    let pool = market.potential_buyers();
    if cohort.count > pool {
        return Err(GameError::InfeasibleProfile {
            total_counts: cohort.count as u64,
            potential: pool,
        });
    }
    let seller = market.seller(seller_index)?;
    let rated = seller.with_appended_ratings(cohort.count, Rating::new(cohort.mean_rating)?);
    market.with_seller(seller_index, rated)
}

/// The seller's best achievable bribery payoff with every opponent idle,
/// searching all count strategies up to the whole pool.
pub fn max_bribery_payoff(market: &Market, seller_index: usize) -> Result<f64, GameError> {
    let zero = CountProfile::zeros(market.seller_count());
    let mut best = f64::NEG_INFINITY;
    for count in 0..=market.potential_buyers() as u32 {
        let payoff = market.payoff(seller_index, &zero.with_count(seller_index, count))?;
        best = best.max(payoff);
    }
    Ok(best)
}

/// The smallest cohort count `c <= cap` such that, with `c` fair raters at
/// `fair_mean` installed, no count strategy earns the seller a strictly
/// positive payoff. `None` when even `cap` fair raters do not suffice.
pub fn min_fair_raters_for_proofness(
    market: &Market,
    seller_index: usize,
    fair_mean: f64,
    cap: usize,
) -> Result<Option<usize>, GameError> {
    if cap > market.potential_buyers() {
        return Err(GameError::InfeasibleProfile {
            total_counts: cap as u64,
            potential: market.potential_buyers(),
        });
    }
    for count in 0..=cap {
        let cohort = FairCohort::new(count, fair_mean)?;
        let fortified = install_cohort(market, seller_index, &cohort)?;
        if max_bribery_payoff(&fortified, seller_index)? <= 0.0 {
            return Ok(Some(count));
        }
    }
    Ok(None)
}

/// Real roots of the critical-point quadratic in the cohort count,
///
/// ```text
/// x^2 - fair_mean * x + pool * (rater_count + fair_mean) = 0
/// ```
///
/// returned exactly as the equation is written, with no reinterpretation:
/// 0, 1 or 2 roots, ascending. Compare with
/// [`min_fair_raters_for_proofness`], which certifies the threshold by
/// brute force instead.
pub fn critical_point_quadratic(
    market: &Market,
    seller_index: usize,
    fair_mean: f64,
) -> Result<Vec<f64>, GameError> {
    let seller = market.seller(seller_index)?;
    let pool = market.potential_buyers() as f64;
    let linear = -fair_mean;
    let constant = pool * (seller.rater_count() as f64 + fair_mean);
    let discriminant = linear * linear - 4.0 * constant;
    if discriminant < 0.0 {
        return Ok(vec![]);
    }
    if discriminant == 0.0 {
        return Ok(vec![-linear / 2.0]);
    }
    let sqrt = discriminant.sqrt();
    Ok(vec![(-linear - sqrt) / 2.0, (-linear + sqrt) / 2.0])
}
