//! Static solution concepts over the count-strategy model: payoff tensors,
//! iterated elimination of strictly dominated strategies, pure Nash
//! enumeration, the discrete first-order solver, social optimum and the
//! over-bribery gap.

use std::collections::BTreeSet;
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::game::{CountProfile, GameError, Market};

/// Which quantity a matrix cell holds for each seller. The two kinds differ
/// per seller by the constant initial utility, so every argmax-based solution
/// concept is identical between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    NetUtility,
    Payoff,
}

impl ValueKind {
    fn label(self) -> &'static str {
        match self {
            ValueKind::NetUtility => "net_utility",
            ValueKind::Payoff => "payoff",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("no potential buyers in the market")]
    NoPotentialBuyers,
    #[error("no pure Nash equilibrium within the caps")]
    NoEquilibrium,
    #[error("best-response iteration cycled after {steps} steps without converging")]
    NonConvergence { steps: usize },
    #[error("constraints exclude every profile during best-response iteration")]
    InfeasibleIteration,
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Dense tensor of per-seller values over every count profile within caps.
/// Cells whose total count exceeds the potential-buyer pool are marked
/// absent, never zero-filled.
#[derive(Debug, Clone)]
pub struct PayoffMatrix {
    market: Market,
    caps: CountProfile,
    kind: ValueKind,
    dims: Vec<usize>,
    cells: Vec<Option<Vec<f64>>>,
}

impl PayoffMatrix {
    /// Tabulates net utilities for every feasible profile within caps.
    pub fn build(market: &Market, caps: &CountProfile) -> Result<Self, SolveError> {
        PayoffMatrix::build_with_kind(market, caps, ValueKind::NetUtility)
    }

    pub fn build_with_kind(
        market: &Market,
        caps: &CountProfile,
        kind: ValueKind,
    ) -> Result<Self, SolveError> {
        if caps.len() != market.seller_count() {
            return Err(GameError::ProfileLengthMismatch {
                expected: market.seller_count(),
                got: caps.len(),
            }
            .into());
        }
        let dims: Vec<usize> = caps.counts().iter().map(|&c| c as usize + 1).collect();
        let size = dims.iter().product();
        let mut matrix = PayoffMatrix {
            market: market.clone(),
            caps: caps.clone(),
            kind,
            dims,
            cells: vec![None; size],
        };
        for idx in 0..size {
            let profile = matrix.profile_at(idx);
            if !market.is_feasible(&profile) {
                continue;
            }
            let mut values = Vec::with_capacity(market.seller_count());
            for seller in 0..market.seller_count() {
                let value = match kind {
                    ValueKind::NetUtility => market.net_utility(seller, &profile)?,
                    ValueKind::Payoff => market.payoff(seller, &profile)?,
                };
                values.push(value);
            }
            matrix.cells[idx] = Some(values);
        }
        Ok(matrix)
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn caps(&self) -> &CountProfile {
        &self.caps
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn seller_count(&self) -> usize {
        self.dims.len()
    }

    fn index_of(&self, profile: &CountProfile) -> Option<usize> {
        if profile.len() != self.dims.len() {
            return None;
        }
        let mut idx = 0;
        for (slot, &count) in profile.counts().iter().enumerate() {
            if count as usize >= self.dims[slot] {
                return None;
            }
            idx = idx * self.dims[slot] + count as usize;
        }
        Some(idx)
    }

    /// Distance between neighbouring counts of one seller in the dense
    /// index space.
    fn stride(&self, seller: usize) -> usize {
        self.dims[seller + 1..].iter().product()
    }

    fn profile_at(&self, mut idx: usize) -> CountProfile {
        let mut counts = vec![0u32; self.dims.len()];
        for slot in (0..self.dims.len()).rev() {
            counts[slot] = (idx % self.dims[slot]) as u32;
            idx /= self.dims[slot];
        }
        CountProfile(counts)
    }

    /// Per-seller values at a profile; `None` outside caps or when the cell
    /// is infeasible.
    pub fn values(&self, profile: &CountProfile) -> Option<&[f64]> {
        self.index_of(profile)
            .and_then(|idx| self.cells[idx].as_deref())
    }

    /// All profiles inside the caps box, ascending lexicographically,
    /// feasible or not.
    pub fn box_profiles(&self) -> impl Iterator<Item = CountProfile> + '_ {
        (0..self.cells.len()).map(|idx| self.profile_at(idx))
    }

    /// All feasible profiles, ascending lexicographically.
    pub fn feasible_profiles(&self) -> impl Iterator<Item = CountProfile> + '_ {
        (0..self.cells.len())
            .filter(|&idx| self.cells[idx].is_some())
            .map(|idx| self.profile_at(idx))
    }

    /// Sum of all sellers' values at a profile.
    pub fn welfare(&self, profile: &CountProfile) -> Option<f64> {
        self.values(profile).map(|vals| vals.iter().sum())
    }

    /// The argmax set of one seller's count against fixed opponent counts
    /// (the seller's own slot in `others` is ignored). Ties are returned in
    /// full, ascending. Empty when no own count is feasible.
    pub fn best_response(&self, seller: usize, others: &CountProfile) -> Vec<u32> {
        let Some(base) = self.index_of(&others.with_count(seller, 0)) else {
            return Vec::new();
        };
        let stride = self.stride(seller);
        let mut best: Vec<u32> = Vec::new();
        let mut best_value = f64::NEG_INFINITY;
        for count in 0..self.dims[seller] {
            let Some(values) = self.cells[base + count * stride].as_deref() else {
                continue;
            };
            let value = values[seller];
            if value > best_value {
                best_value = value;
                best = vec![count as u32];
            } else if value == best_value {
                best.push(count as u32);
            }
        }
        best
    }

    /// All profiles where every seller's count is a best response to the
    /// others', within caps and feasibility.
    pub fn pure_nash(&self) -> Vec<CountProfile> {
        let strides: Vec<usize> = (0..self.dims.len()).map(|s| self.stride(s)).collect();
        let mut nash = Vec::new();
        'profiles: for (idx, cell) in self.cells.iter().enumerate() {
            let Some(values) = cell else { continue };
            for seller in 0..self.dims.len() {
                let own = (idx / strides[seller]) % self.dims[seller];
                let base = idx - own * strides[seller];
                for count in 0..self.dims[seller] {
                    if count == own {
                        continue;
                    }
                    if let Some(deviation) = self.cells[base + count * strides[seller]].as_deref() {
                        if deviation[seller] > values[seller] {
                            continue 'profiles;
                        }
                    }
                }
            }
            nash.push(self.profile_at(idx));
        }
        nash
    }

    /// Whether `a` strictly dominates `b` for `seller` over every opponent
    /// combination drawn from the surviving strategy sets. Dominance requires
    /// `a` to be feasible wherever `b` is, and `b` to be playable somewhere.
    fn strictly_dominates_in(
        &self,
        seller: usize,
        a: usize,
        b: usize,
        surviving: &[Vec<u32>],
    ) -> bool {
        let stride = self.stride(seller);
        let mut compared = false;
        let mut dominated = true;
        self.for_each_residual_base(surviving, seller, |base| {
            if !dominated {
                return;
            }
            let Some(values_b) = self.cells[base + b * stride].as_deref() else {
                return;
            };
            let Some(values_a) = self.cells[base + a * stride].as_deref() else {
                dominated = false;
                return;
            };
            if values_a[seller] <= values_b[seller] {
                dominated = false;
                return;
            }
            compared = true;
        });
        dominated && compared
    }

    /// Calls `visit` with the dense index of every opponent combination
    /// drawn from the surviving sets, the pinned seller's slot held at 0.
    /// A `pinned` value out of range enumerates the full product.
    fn for_each_residual_base(
        &self,
        surviving: &[Vec<u32>],
        pinned: usize,
        mut visit: impl FnMut(usize),
    ) {
        if surviving.iter().any(|set| set.is_empty()) {
            return;
        }
        let strides: Vec<usize> = (0..self.dims.len()).map(|s| self.stride(s)).collect();
        let mut cursor = vec![0usize; surviving.len()];
        loop {
            let mut base = 0usize;
            for (slot, &at) in cursor.iter().enumerate() {
                if slot != pinned {
                    base += surviving[slot][at] as usize * strides[slot];
                }
            }
            visit(base);
            let mut pos = surviving.len();
            loop {
                if pos == 0 {
                    return;
                }
                pos -= 1;
                if pos == pinned {
                    continue;
                }
                if cursor[pos] + 1 < surviving[pos].len() {
                    cursor[pos] += 1;
                    for (later, at) in cursor.iter_mut().enumerate().skip(pos + 1) {
                        if later != pinned {
                            *at = 0;
                        }
                    }
                    break;
                }
            }
        }
    }

    /// Repeatedly removes strictly dominated seller strategies (and
    /// strategies with no feasible cell left) until a fixpoint, then returns
    /// the surviving feasible profiles. Strict elimination is
    /// order-independent, so the batch order per round does not matter.
    pub fn iterated_elimination(&self) -> Vec<CountProfile> {
        let mut surviving: Vec<Vec<u32>> =
            self.dims.iter().map(|&d| (0..d as u32).collect()).collect();
        loop {
            let mut changed = false;
            for seller in 0..self.dims.len() {
                let stride = self.stride(seller);
                let mut removed: BTreeSet<u32> = BTreeSet::new();
                for &b in &surviving[seller] {
                    let mut playable = false;
                    self.for_each_residual_base(&surviving, seller, |base| {
                        playable |= self.cells[base + b as usize * stride].is_some();
                    });
                    if !playable {
                        removed.insert(b);
                        continue;
                    }
                    if surviving[seller].iter().any(|&a| {
                        a != b
                            && self
                                .strictly_dominates_in(seller, a as usize, b as usize, &surviving)
                    }) {
                        removed.insert(b);
                    }
                }
                if !removed.is_empty() {
                    surviving[seller].retain(|c| !removed.contains(c));
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut result = Vec::new();
        self.for_each_residual_base(&surviving, usize::MAX, |idx| {
            if self.cells[idx].is_some() {
                result.push(self.profile_at(idx));
            }
        });
        result.sort();
        result
    }

    /// The feasible profile maximizing total value. Ties break by smallest
    /// total count, then lexicographically.
    pub fn social_optimum(&self) -> Option<(CountProfile, f64)> {
        let mut best: Option<(CountProfile, f64)> = None;
        for (idx, cell) in self.cells.iter().enumerate() {
            let Some(values) = cell else { continue };
            let welfare: f64 = values.iter().sum();
            let profile = self.profile_at(idx);
            let better = match &best {
                None => true,
                Some((incumbent, best_welfare)) => {
                    welfare > *best_welfare
                        || (welfare == *best_welfare
                            && (profile.total(), &profile) < (incumbent.total(), incumbent))
                }
            };
            if better {
                best = Some((profile, welfare));
            }
        }
        best
    }

    /// Assembles the equilibrium report: pure Nash set, elimination
    /// survivors, social optimum, and the bribed-count totals at equilibrium
    /// versus the optimum. When several equilibria exist, the total is taken
    /// from the one bribing most.
    pub fn overbribery_gap(&self) -> Result<EquilibriumReport, SolveError> {
        let pure_nash = self.pure_nash();
        if pure_nash.is_empty() {
            return Err(SolveError::NoEquilibrium);
        }
        let (social_optimum, social_welfare) =
            self.social_optimum().ok_or(SolveError::NoEquilibrium)?;
        let nash_total = pure_nash.iter().map(CountProfile::total).max().unwrap();
        let optimum_total = social_optimum.total();
        Ok(EquilibriumReport {
            value_kind: self.kind,
            pure_nash,
            iesds_survivors: self.iterated_elimination(),
            social_optimum,
            social_welfare,
            nash_total,
            optimum_total,
            gap: nash_total as i64 - optimum_total as i64,
        })
    }

    /// Writes the tensor as CSV: one row per feasible profile, count columns
    /// first, then one value column per seller.
    pub fn to_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let ids: Vec<&str> = self.market.sellers().iter().map(|s| s.id()).collect();
        let mut header = Vec::new();
        for id in &ids {
            header.push(format!("count_{id}"));
        }
        for id in &ids {
            header.push(format!("{}_{id}", self.kind.label()));
        }
        writeln!(out, "{}", header.join(","))?;
        for (idx, cell) in self.cells.iter().enumerate() {
            let Some(values) = cell else { continue };
            let profile = self.profile_at(idx);
            let mut row: Vec<String> = profile.counts().iter().map(|c| c.to_string()).collect();
            row.extend(values.iter().map(|v| format!("{v}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Writes one seller's value over every feasible profile, the data behind
    /// a payoff-surface plot.
    pub fn surface_csv<W: Write>(&self, seller: usize, mut out: W) -> io::Result<()> {
        let ids: Vec<&str> = self.market.sellers().iter().map(|s| s.id()).collect();
        let mut header: Vec<String> = ids.iter().map(|id| format!("count_{id}")).collect();
        header.push(format!("{}_{}", self.kind.label(), ids[seller]));
        writeln!(out, "{}", header.join(","))?;
        for (idx, cell) in self.cells.iter().enumerate() {
            let Some(values) = cell else { continue };
            let profile = self.profile_at(idx);
            let mut row: Vec<String> = profile.counts().iter().map(|c| c.to_string()).collect();
            row.push(format!("{}", values[seller]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn with_cells(
        market: Market,
        caps: CountProfile,
        kind: ValueKind,
        cells: Vec<Option<Vec<f64>>>,
    ) -> Self {
        let dims: Vec<usize> = caps.counts().iter().map(|&c| c as usize + 1).collect();
        assert_eq!(cells.len(), dims.iter().product::<usize>());
        PayoffMatrix {
            market,
            caps,
            kind,
            dims,
            cells,
        }
    }
}

/// Caps allowing every seller to bribe the whole potential pool.
pub fn full_caps(market: &Market) -> CountProfile {
    CountProfile(vec![
        market.potential_buyers() as u32;
        market.seller_count()
    ])
}

/// Solution summary assembled by [`PayoffMatrix::overbribery_gap`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub value_kind: ValueKind,
    pub pure_nash: Vec<CountProfile>,
    pub iesds_survivors: Vec<CountProfile>,
    pub social_optimum: CountProfile,
    pub social_welfare: f64,
    /// Total buyers bribed at the (maximal-total) Nash equilibrium.
    pub nash_total: u64,
    /// Total buyers bribed at the social optimum.
    pub optimum_total: u64,
    /// Equilibrium excess over the optimum; negative values are a reportable
    /// finding rather than an invariant violation.
    pub gap: i64,
}

/// Discrete analogue of the equilibrium first-order conditions: synchronous
/// best-response iteration from the zero profile until a fixpoint, with
/// sellers in the unprofitable regime pinned at zero. The fixpoint is a pure
/// Nash profile of the tabulated game by construction; iteration cycles are
/// reported as non-convergence.
pub fn first_order_profile(
    market: &Market,
    caps: &CountProfile,
) -> Result<CountProfile, SolveError> {
    if market.potential_buyers() == 0 {
        return Err(SolveError::NoPotentialBuyers);
    }
    let matrix = PayoffMatrix::build(market, caps)?;
    let pool = market.potential_buyers() as f64;
    let pinned: Vec<bool> = market
        .sellers()
        .iter()
        .map(|s| s.rater_count() as f64 / pool >= market.profit_per_purchase())
        .collect();

    let feasible_cells = matrix.feasible_profiles().count();
    let mut seen: BTreeSet<CountProfile> = BTreeSet::new();
    let mut current = CountProfile::zeros(market.seller_count());
    for step in 0..=feasible_cells + 1 {
        seen.insert(current.clone());
        let mut next = Vec::with_capacity(market.seller_count());
        for (seller, &pin) in pinned.iter().enumerate() {
            if pin {
                next.push(0);
                continue;
            }
            let responses = matrix.best_response(seller, &current);
            match responses.first() {
                Some(&count) => next.push(count),
                None => return Err(SolveError::InfeasibleIteration),
            }
        }
        let next = CountProfile(next);
        if next == current {
            debug_assert!(
                pinned.iter().any(|&p| p) || matrix.pure_nash().contains(&current),
                "fixpoint {current} is not a pure Nash profile"
            );
            return Ok(current);
        }
        if seen.contains(&next) {
            return Err(SolveError::NonConvergence { steps: step + 1 });
        }
        current = next;
    }
    Err(SolveError::NonConvergence {
        steps: feasible_cells + 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::tests::{duopoly, DUOPOLY_TABLE};
    use crate::game::SellerState;
    use crate::greedy::tests::random_market;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn duopoly_matrix() -> PayoffMatrix {
        PayoffMatrix::build(&duopoly(), &CountProfile(vec![3, 3])).unwrap()
    }

    #[test]
    fn matrix_reproduces_duopoly_table() {
        let matrix = duopoly_matrix();
        for (a, row) in DUOPOLY_TABLE.iter().enumerate() {
            for (b, &(vi, vj)) in row.iter().enumerate() {
                let values = matrix
                    .values(&CountProfile(vec![a as u32, b as u32]))
                    .unwrap();
                assert!((values[0] - vi).abs() <= 0.005, "{a},{b}: {values:?}");
                assert!((values[1] - vj).abs() <= 0.005, "{a},{b}: {values:?}");
            }
        }
    }

    #[test]
    fn zero_caps_yield_single_initial_cell() {
        let market = duopoly();
        let matrix = PayoffMatrix::build(&market, &CountProfile(vec![0, 0])).unwrap();
        assert_eq!(matrix.feasible_profiles().count(), 1);
        let values = matrix.values(&CountProfile::zeros(2)).unwrap();
        assert_abs_diff_eq!(values[0], 5.2, epsilon = 1e-12);
        assert_abs_diff_eq!(values[1], 13.0, epsilon = 1e-12);
    }

    #[test]
    fn wide_caps_match_direct_formula() {
        let market = duopoly();
        let matrix = PayoffMatrix::build(&market, &CountProfile(vec![5, 5])).unwrap();
        // Every cell within caps (5,5) stays within the 13-buyer pool.
        assert_eq!(matrix.feasible_profiles().count(), 36);
        let values = matrix.values(&CountProfile(vec![5, 0])).unwrap();
        assert_abs_diff_eq!(values[0], 4.6, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_cells_are_absent() {
        let market = Market::new(
            vec![
                SellerState::from_mean("a", 1, 0.5).unwrap(),
                SellerState::from_mean("b", 1, 0.5).unwrap(),
            ],
            5,
            2.0,
        )
        .unwrap();
        // Pool of 3: caps (3,3) put cells like (3,3) out of reach.
        let matrix = PayoffMatrix::build(&market, &CountProfile(vec![3, 3])).unwrap();
        assert!(matrix.values(&CountProfile(vec![3, 3])).is_none());
        assert!(matrix.values(&CountProfile(vec![2, 1])).is_some());
        assert_eq!(matrix.feasible_profiles().count(), 10);
    }

    #[test]
    fn iterated_elimination_resolves_duopoly() {
        let matrix = duopoly_matrix();
        assert_eq!(
            matrix.iterated_elimination(),
            vec![CountProfile(vec![2, 1])]
        );
    }

    #[test]
    fn iterated_elimination_keeps_single_cell() {
        let market = duopoly();
        let matrix = PayoffMatrix::build(&market, &CountProfile(vec![0, 0])).unwrap();
        assert_eq!(matrix.iterated_elimination(), vec![CountProfile::zeros(2)]);
    }

    #[test]
    fn constant_payoffs_survive_elimination_and_tie_everywhere() {
        let market = duopoly();
        let caps = CountProfile(vec![1, 1]);
        let cells = vec![Some(vec![1.0, 1.0]); 4];
        let matrix = PayoffMatrix::with_cells(market, caps, ValueKind::NetUtility, cells);
        assert_eq!(matrix.iterated_elimination().len(), 4);
        assert_eq!(matrix.best_response(0, &CountProfile::zeros(2)), vec![0, 1]);
    }

    #[test]
    fn pure_nash_matches_duopoly() {
        let matrix = duopoly_matrix();
        assert_eq!(matrix.pure_nash(), vec![CountProfile(vec![2, 1])]);
    }

    #[test]
    fn pure_nash_single_seller_is_column_argmax() {
        let market = Market::new(
            vec![SellerState::from_mean("solo", 5, 0.2).unwrap()],
            20,
            2.0,
        )
        .unwrap();
        let caps = CountProfile(vec![6]);
        let matrix = PayoffMatrix::build(&market, &caps).unwrap();
        let nash = matrix.pure_nash();
        let best = matrix.best_response(0, &CountProfile::zeros(1));
        assert_eq!(
            nash,
            best.iter()
                .map(|&c| CountProfile(vec![c]))
                .collect::<Vec<_>>()
        );
    }

    /// Brute-force oracle: a profile is Nash iff no unilateral feasible
    /// deviation improves the deviator's value.
    fn nash_oracle(matrix: &PayoffMatrix) -> Vec<CountProfile> {
        let caps = matrix.caps().clone();
        let mut result = Vec::new();
        let total_cells: usize = caps.counts().iter().map(|&c| c as usize + 1).product();
        'outer: for idx in 0..total_cells {
            let mut rest = idx;
            let mut counts = vec![0u32; caps.len()];
            for slot in (0..caps.len()).rev() {
                let dim = caps.count_for(slot) as usize + 1;
                counts[slot] = (rest % dim) as u32;
                rest /= dim;
            }
            let profile = CountProfile(counts);
            let Some(values) = matrix.values(&profile) else {
                continue;
            };
            for seller in 0..caps.len() {
                for count in 0..=caps.count_for(seller) {
                    let deviation = profile.with_count(seller, count);
                    if let Some(dev) = matrix.values(&deviation) {
                        if dev[seller] > values[seller] {
                            continue 'outer;
                        }
                    }
                }
            }
            result.push(profile);
        }
        result
    }

    #[test]
    fn pure_nash_matches_brute_force_on_random_three_seller_markets() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..40 {
            let market = random_market(&mut rng, 3, 20);
            let caps = CountProfile(vec![2; market.seller_count()]);
            let matrix = PayoffMatrix::build(&market, &caps).unwrap();
            assert_eq!(matrix.pure_nash(), nash_oracle(&matrix));
        }
    }

    #[test]
    fn best_response_matches_duopoly_columns() {
        let matrix = duopoly_matrix();
        assert_eq!(matrix.best_response(0, &CountProfile(vec![0, 1])), vec![2]);
        assert_eq!(matrix.best_response(1, &CountProfile(vec![0, 0])), vec![1]);
    }

    #[test]
    fn first_order_profile_solves_duopoly() {
        let market = duopoly();
        let profile = first_order_profile(&market, &CountProfile(vec![3, 3])).unwrap();
        assert_eq!(profile, CountProfile(vec![2, 1]));
    }

    #[test]
    fn first_order_profile_pins_unprofitable_sellers() {
        let market = Market::new(
            vec![
                SellerState::from_mean("a", 10, 0.3).unwrap(),
                SellerState::from_mean("b", 8, 0.6).unwrap(),
            ],
            20,
            0.5,
        )
        .unwrap();
        // Pool of 2; both sellers have rater/pool ratios far above 0.5.
        let profile = first_order_profile(&market, &CountProfile(vec![2, 2])).unwrap();
        assert_eq!(profile, CountProfile::zeros(2));
    }

    #[test]
    fn first_order_profile_reports_cycles() {
        // Two identical sellers rated 0 by one buyer each, pool of 3, unit
        // profit 2: best responses flip between bribing one buyer and none.
        let market = Market::new(
            vec![
                SellerState::from_values("a", &[0.0]).unwrap(),
                SellerState::from_values("b", &[0.0]).unwrap(),
            ],
            5,
            2.0,
        )
        .unwrap();
        let result = first_order_profile(&market, &CountProfile(vec![3, 3]));
        assert!(matches!(result, Err(SolveError::NonConvergence { .. })));
    }

    #[test]
    fn first_order_profile_is_nash_on_random_markets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut converged = 0;
        for _ in 0..60 {
            let market = random_market(&mut rng, 2, 25);
            let caps = full_caps(&market);
            if let Ok(profile) = first_order_profile(&market, &caps) {
                let matrix = PayoffMatrix::build(&market, &caps).unwrap();
                assert!(matrix.pure_nash().contains(&profile));
                converged += 1;
            }
        }
        assert!(converged > 30, "only {converged} random markets converged");
    }

    #[test]
    fn social_optimum_matches_duopoly_sum() {
        let matrix = duopoly_matrix();
        let (profile, welfare) = matrix.social_optimum().unwrap();
        assert_eq!(profile, CountProfile(vec![1, 1]));
        assert_abs_diff_eq!(welfare, 20.0, epsilon = 0.005);
    }

    #[test]
    fn social_optimum_of_zero_caps_is_zero_profile() {
        let matrix = PayoffMatrix::build(&duopoly(), &CountProfile(vec![0, 0])).unwrap();
        let (profile, _) = matrix.social_optimum().unwrap();
        assert_eq!(profile, CountProfile::zeros(2));
    }

    #[test]
    fn social_optimum_weakly_beats_every_nash() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..30 {
            let market = random_market(&mut rng, 3, 18);
            let caps = full_caps(&market);
            let matrix = PayoffMatrix::build(&market, &caps).unwrap();
            let Some((_, welfare)) = matrix.social_optimum() else {
                continue;
            };
            for nash in matrix.pure_nash() {
                assert!(welfare >= matrix.welfare(&nash).unwrap() - 1e-9);
            }
        }
    }

    #[test]
    fn payoff_and_net_utility_optima_agree() {
        let market = duopoly();
        let caps = CountProfile(vec![3, 3]);
        let net = PayoffMatrix::build(&market, &caps).unwrap();
        let payoff = PayoffMatrix::build_with_kind(&market, &caps, ValueKind::Payoff).unwrap();
        assert_eq!(
            net.social_optimum().unwrap().0,
            payoff.social_optimum().unwrap().0
        );
        assert_eq!(net.pure_nash(), payoff.pure_nash());
        // Welfare figures differ by the constant total initial utility.
        let shift = net.social_optimum().unwrap().1 - payoff.social_optimum().unwrap().1;
        assert_abs_diff_eq!(shift, 5.2 + 13.0, epsilon = 1e-9);
    }

    #[test]
    fn overbribery_gap_matches_duopoly() {
        let report = duopoly_matrix().overbribery_gap().unwrap();
        assert_eq!(report.pure_nash, vec![CountProfile(vec![2, 1])]);
        assert_eq!(report.iesds_survivors, vec![CountProfile(vec![2, 1])]);
        assert_eq!(report.social_optimum, CountProfile(vec![1, 1]));
        assert_eq!(report.nash_total, 3);
        assert_eq!(report.optimum_total, 2);
        assert_eq!(report.gap, 1);
    }

    #[test]
    fn saturated_market_has_zero_gap() {
        let market = Market::new(
            vec![
                SellerState::from_mean("a", 3, 1.0).unwrap(),
                SellerState::from_mean("b", 2, 1.0).unwrap(),
            ],
            15,
            2.0,
        )
        .unwrap();
        let matrix = PayoffMatrix::build(&market, &CountProfile(vec![4, 4])).unwrap();
        let report = matrix.overbribery_gap().unwrap();
        assert_eq!(report.pure_nash, vec![CountProfile::zeros(2)]);
        assert_eq!(report.gap, 0);
    }

    #[test]
    fn gap_is_non_negative_on_random_markets() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
        let mut checked = 0;
        for _ in 0..100 {
            let market = random_market(&mut rng, 3, 22);
            let caps = full_caps(&market);
            let matrix = PayoffMatrix::build(&market, &caps).unwrap();
            match matrix.overbribery_gap() {
                Ok(report) => {
                    assert!(report.gap >= 0, "negative gap on {market:?}: {report:?}");
                    checked += 1;
                }
                Err(SolveError::NoEquilibrium) => {}
                Err(other) => panic!("unexpected error: {other}"),
            }
        }
        assert!(checked >= 90, "only {checked} markets had equilibria");
    }

    #[test]
    fn nash_profiles_survive_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xBADA55);
        for _ in 0..40 {
            let market = random_market(&mut rng, 3, 16);
            let caps = full_caps(&market);
            let matrix = PayoffMatrix::build(&market, &caps).unwrap();
            let survivors = matrix.iterated_elimination();
            for nash in matrix.pure_nash() {
                assert!(
                    survivors.contains(&nash),
                    "equilibrium {nash} eliminated on {market:?}"
                );
            }
        }
    }

    #[test]
    fn matrix_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let market = random_market(&mut rng, 3, 18);
            let m = market.seller_count();
            let mut order: Vec<usize> = (0..m).collect();
            // Rotate: a non-trivial permutation whenever m > 1.
            order.rotate_left(1.min(m - 1));
            let permuted = Market::with_snowball(
                order.iter().map(|&s| market.sellers()[s].clone()).collect(),
                market.total_buyers(),
                market.profit_per_purchase(),
                market.snowball_scale(),
                market.snowball_exponent(),
            )
            .unwrap();
            let caps = CountProfile(vec![2; m]);
            let matrix = PayoffMatrix::build(&market, &caps).unwrap();
            let permuted_matrix = PayoffMatrix::build(&permuted, &caps).unwrap();
            for profile in matrix.feasible_profiles() {
                let mapped = CountProfile(order.iter().map(|&s| profile.count_for(s)).collect());
                let original = matrix.values(&profile).unwrap();
                let relabeled = permuted_matrix.values(&mapped).unwrap();
                for (slot, &s) in order.iter().enumerate() {
                    assert_abs_diff_eq!(original[s], relabeled[slot], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn csv_export_has_counts_then_values() {
        let matrix = duopoly_matrix();
        let mut buffer = Vec::new();
        matrix.to_csv(&mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "count_i,count_j,net_utility_i,net_utility_j"
        );
        assert_eq!(lines.count(), 16);
        let second = text.lines().nth(1).unwrap();
        assert!(second.starts_with("0,0,5.2,13"));
    }
}
