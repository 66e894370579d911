//! Solver and simulator for bribery games in rating systems.
//!
//! Sellers in a rating-driven market can pay buyers to raise the ratings they
//! give. This crate models that competition: the [`game`] module defines the
//! market, rating and strategy types and their payoff algebra; [`greedy`]
//! builds the budget-greedy bribing strategy and the profitability threshold;
//! [`equilibrium`] enumerates payoff tensors, dominance eliminations, pure
//! Nash equilibria and social optima over count strategies; [`dynamic`] plays
//! the sequential game under uncertainty about the buyer pool with Poisson
//! arrivals; [`fairness`] measures how many unbribable raters make a seller
//! bribery-proof; and [`calibration`] fits the snowball parameters relating
//! ratings to sales from observed data.

pub mod calibration;
pub mod dynamic;
pub mod equilibrium;
pub mod fairness;
pub mod game;
pub mod greedy;

pub use game::{BuyerTarget, CountProfile, EffortStrategy, GameError, Market, Rating, SellerState};
