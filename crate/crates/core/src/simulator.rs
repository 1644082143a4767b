//! Ground-truth auctions and the observability filters applied to them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::ValueDistribution;
use crate::equilibrium::{AuctionDesign, BidFunction, Format, TruncationKind};
use crate::error::EquilibriumError;

/// Distribution of the number of potential bidders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PopulationRepr", into = "PopulationRepr")]
pub struct PopulationSpec {
    support: Vec<(u32, f64)>,
    cumulative: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PopulationRepr {
    support: Vec<(u32, f64)>,
}

impl PopulationSpec {
    pub fn new(mut support: Vec<(u32, f64)>) -> Result<Self, EquilibriumError> {
        if support.is_empty() {
            return Err(EquilibriumError::InvalidDesign("population support is empty".into()));
        }
        support.sort_by_key(|p| p.0);
        if support.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(EquilibriumError::InvalidDesign("population support repeats a bidder count".into()));
        }
        if support.iter().any(|&(n, p)| n == 0 || !(p.is_finite() && p >= 0.0)) {
            return Err(EquilibriumError::InvalidDesign("bidder counts must be >= 1 with nonnegative mass".into()));
        }
        let total: f64 = support.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(EquilibriumError::InvalidDesign(format!("population probabilities sum to {total}, not 1")));
        }
        let cumulative = support
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p.1;
                Some(*acc)
            })
            .collect();
        Ok(Self { support, cumulative })
    }

    pub fn fixed(n: u32) -> Result<Self, EquilibriumError> {
        Self::new(vec![(n, 1.0)])
    }

    pub fn support(&self) -> &[(u32, f64)] {
        &self.support
    }

    pub fn max_n(&self) -> u32 {
        self.support[self.support.len() - 1].0
    }

    pub fn is_degenerate(&self) -> bool {
        self.support.iter().filter(|p| p.1 > 0.0).count() == 1
    }

    /// Maps a uniform draw to a bidder count.
    pub fn draw(&self, u: f64) -> u32 {
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.support.len() - 1);
        self.support[i].0
    }
}

impl TryFrom<PopulationRepr> for PopulationSpec {
    type Error = EquilibriumError;
    fn try_from(r: PopulationRepr) -> Result<Self, Self::Error> {
        Self::new(r.support)
    }
}

impl From<PopulationSpec> for PopulationRepr {
    fn from(p: PopulationSpec) -> Self {
        PopulationRepr { support: p.support }
    }
}

/// Which observables survive into a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InfoStructure {
    #[serde(default = "yes")]
    pub observe_price: bool,
    #[serde(default)]
    pub observe_nobs: bool,
    #[serde(default)]
    pub observe_invalid_count: bool,
    #[serde(default)]
    pub drop_at_reserve: bool,
}

fn yes() -> bool {
    true
}

impl InfoStructure {
    pub const PRICE_ONLY: Self =
        Self { observe_price: true, observe_nobs: false, observe_invalid_count: false, drop_at_reserve: false };

    pub fn with_nobs(mut self) -> Self {
        self.observe_nobs = true;
        self
    }

    pub fn with_invalid_count(mut self) -> Self {
        self.observe_invalid_count = true;
        self
    }

    pub fn dropping_floor(mut self) -> Self {
        self.drop_at_reserve = true;
        self
    }
}

impl Default for InfoStructure {
    fn default() -> Self {
        Self::PRICE_ONLY
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidRule {
    #[default]
    Equilibrium,
    /// Every active bidder bids their value, whatever the format.
    Truthful,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawAuction {
    pub auction_id: u64,
    pub n: u32,
    pub types: Vec<f64>,
    pub bids: Vec<Option<f64>>,
    pub transaction_price: Option<f64>,
    pub n_act: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub design: AuctionDesign,
    /// Price written when exactly one bidder is active in a second-price auction.
    pub floor_price: f64,
    pub auctions: Vec<RawAuction>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedRow {
    pub auction_id: u64,
    pub price: f64,
    pub n_obs: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservedDataset {
    pub rows: Vec<ObservedRow>,
    pub l_invalid: Option<u64>,
    pub info: InfoStructure,
    pub format: Format,
    pub truncation_kind: TruncationKind,
}

impl ObservedDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.price).collect()
    }

    /// Prices of auctions whose observed bidder count satisfies `keep`.
    pub fn prices_where<P: Fn(u32) -> bool>(&self, keep: P) -> Vec<f64> {
        self.rows.iter().filter(|r| r.n_obs.is_some_and(&keep)).map(|r| r.price).collect()
    }

    /// Copy without the rows whose auction id falls in fold `fold` of `folds`.
    pub fn without_fold(&self, fold: u64, folds: u64) -> Self {
        let rows = self.rows.iter().copied().filter(|r| r.auction_id % folds != fold).collect();
        let l_invalid = self.l_invalid.map(|inv| inv - self.invalid_ids_in_fold(fold, folds).unwrap_or(0));
        Self { rows, l_invalid, ..self.clone() }
    }

    /// Number of invalid auctions in a fold, inferred from gaps in consecutive auction ids.
    fn invalid_ids_in_fold(&self, fold: u64, folds: u64) -> Option<u64> {
        let inv = self.l_invalid?;
        let total = self.rows.len() as u64 + inv;
        if self.rows.iter().any(|r| r.auction_id >= total) {
            return Some((inv as f64 / folds as f64).round() as u64);
        }
        let in_fold_all = (0..total).filter(|id| id % folds == fold).count() as u64;
        let in_fold_valid = self.rows.iter().filter(|r| r.auction_id % folds == fold).count() as u64;
        Some(in_fold_all - in_fold_valid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Outcome {
    n: u32,
    n_act: u32,
    price: Option<f64>,
}

struct Rules {
    n: u32,
    threshold: f64,
    bid: Option<BidFunction>,
}

/// Data-generating process with all equilibrium objects precomputed.
pub struct Simulator {
    dist: ValueDistribution,
    design: AuctionDesign,
    pop: PopulationSpec,
    rule: BidRule,
    rules: Vec<Rules>,
    floor_price: f64,
}

impl Simulator {
    pub fn new(
        dist: &ValueDistribution,
        design: &AuctionDesign,
        pop: &PopulationSpec,
        rule: BidRule,
    ) -> Result<Self, EquilibriumError> {
        design.validate(dist)?;
        let mut rules = Vec::new();
        for &(n, _) in pop.support() {
            let threshold = design.threshold(dist, n)?;
            let bid = match (design.format, rule) {
                (Format::FirstPrice, BidRule::Equilibrium) => Some(BidFunction::for_design(dist, design, n)?),
                _ => None,
            };
            rules.push(Rules { n, threshold, bid });
        }
        Ok(Self {
            dist: dist.clone(),
            design: *design,
            pop: pop.clone(),
            rule,
            rules,
            floor_price: design.floor_price(dist),
        })
    }

    pub fn floor_price(&self) -> f64 {
        self.floor_price
    }

    fn rules_for(&self, n: u32) -> &Rules {
        self.rules.iter().find(|r| r.n == n).expect("bidder count from the population support")
    }

    fn stream(base: &ChaCha8Rng, id: u64) -> ChaCha8Rng {
        let mut rng = base.clone();
        rng.set_stream(id);
        rng
    }

    fn bid_of(&self, rules: &Rules, alpha: f64) -> f64 {
        match &rules.bid {
            Some(b) => b.bid(alpha),
            None => self.dist.value(alpha),
        }
    }

    fn price_from(&self, rules: &Rules, n_act: u32, top: f64, second: f64) -> Option<f64> {
        match (n_act, self.design.format) {
            (0, _) => None,
            (_, Format::FirstPrice) => Some(self.bid_of(rules, top)),
            (1, Format::SecondPrice) => Some(self.floor_price),
            (_, Format::SecondPrice) => Some(self.dist.value(second)),
        }
    }

    fn outcome_from_types(&self, n: u32, types: impl Iterator<Item = f64>) -> Outcome {
        let rules = self.rules_for(n);
        let (mut top, mut second, mut n_act) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0u32);
        for t in types {
            if t >= rules.threshold {
                n_act += 1;
                if t > top {
                    second = top;
                    top = t;
                } else if t > second {
                    second = t;
                }
            }
        }
        Outcome { n, n_act, price: self.price_from(rules, n_act, top, second) }
    }

    fn outcome(&self, base: &ChaCha8Rng, id: u64) -> Outcome {
        let mut rng = Self::stream(base, id);
        let n = self.pop.draw(rng.gen());
        self.outcome_from_types(n, (0..n).map(|_| rng.gen::<f64>()))
    }

    fn raw_from_types(&self, id: u64, types: Vec<f64>) -> RawAuction {
        let n = types.len() as u32;
        let o = self.outcome_from_types(n, types.iter().copied());
        let rules = self.rules_for(n);
        let bids = types.iter().map(|&t| (t >= rules.threshold).then(|| self.bid_of(rules, t))).collect();
        RawAuction { auction_id: id, n, types, bids, transaction_price: o.price, n_act: o.n_act }
    }

    pub fn auction(&self, base: &ChaCha8Rng, id: u64) -> RawAuction {
        let mut rng = Self::stream(base, id);
        let n = self.pop.draw(rng.gen());
        let types = (0..n).map(|_| rng.gen::<f64>()).collect();
        self.raw_from_types(id, types)
    }

    pub fn simulate(&self, l_total: u64, seed: u64) -> Simulation {
        let base = ChaCha8Rng::seed_from_u64(seed);
        let auctions = (0..l_total).map(|id| self.auction(&base, id)).collect();
        Simulation { design: self.design, floor_price: self.floor_price, auctions, seed }
    }

    /// Simulates and filters in one pass without retaining bidder-level data.
    pub fn simulate_observed(&self, l_total: u64, seed: u64, info: InfoStructure) -> ObservedDataset {
        let base = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut invalid = 0u64;
        for id in 0..l_total {
            let o = self.outcome(&base, id);
            match o.price {
                None => invalid += 1,
                Some(price) => {
                    if let Some(row) = self.filter(id, price, o.n_act, info) {
                        rows.push(row);
                    }
                }
            }
        }
        self.dataset(rows, invalid, info)
    }

    fn filter(&self, id: u64, price: f64, n_act: u32, info: InfoStructure) -> Option<ObservedRow> {
        filter_row(self.design.format, self.floor_price, id, price, n_act, info)
    }

    fn dataset(&self, rows: Vec<ObservedRow>, invalid: u64, info: InfoStructure) -> ObservedDataset {
        ObservedDataset {
            rows,
            l_invalid: info.observe_invalid_count.then_some(invalid),
            info,
            format: self.design.format,
            truncation_kind: self.design.truncation.kind(),
        }
    }

    pub fn rule(&self) -> BidRule {
        self.rule
    }
}

fn filter_row(format: Format, floor: f64, id: u64, price: f64, n_act: u32, info: InfoStructure) -> Option<ObservedRow> {
    if info.drop_at_reserve && format == Format::SecondPrice && (price - floor).abs() <= 1e-12 {
        return None;
    }
    Some(ObservedRow { auction_id: id, price, n_obs: info.observe_nobs.then_some(n_act) })
}

/// Simulates `l_total` auctions with per-auction random substreams of `seed`.
pub fn simulate(
    dist: &ValueDistribution,
    design: &AuctionDesign,
    pop: &PopulationSpec,
    l_total: u64,
    seed: u64,
) -> Result<Simulation, EquilibriumError> {
    Ok(Simulator::new(dist, design, pop, BidRule::Equilibrium)?.simulate(l_total, seed))
}

/// Streaming equivalent of `observe(&simulate(..), info)`.
pub fn simulate_observed(
    dist: &ValueDistribution,
    design: &AuctionDesign,
    pop: &PopulationSpec,
    l_total: u64,
    seed: u64,
    info: InfoStructure,
) -> Result<ObservedDataset, EquilibriumError> {
    Ok(Simulator::new(dist, design, pop, BidRule::Equilibrium)?.simulate_observed(l_total, seed, info))
}

/// Replays explicitly given bidder types, one list per auction.
pub fn simulate_from_types(
    dist: &ValueDistribution,
    design: &AuctionDesign,
    types: &[Vec<f64>],
    rule: BidRule,
) -> Result<Simulation, EquilibriumError> {
    let mut counts: Vec<u32> = types.iter().map(|t| t.len() as u32).collect();
    counts.sort_unstable();
    counts.dedup();
    if counts.first() == Some(&0) {
        return Err(EquilibriumError::InvalidDesign("an auction has no potential bidders".into()));
    }
    if types.iter().flatten().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(EquilibriumError::InvalidDesign("types must lie in [0, 1]".into()));
    }
    let auctions = if counts.is_empty() {
        Vec::new()
    } else {
        let w = 1.0 / counts.len() as f64;
        let mut support: Vec<(u32, f64)> = counts.iter().map(|&n| (n, w)).collect();
        let spill: f64 = 1.0 - support.iter().map(|p| p.1).sum::<f64>();
        support[0].1 += spill;
        let pop = PopulationSpec::new(support)?;
        let sim = Simulator::new(dist, design, &pop, rule)?;
        types.iter().enumerate().map(|(id, t)| sim.raw_from_types(id as u64, t.clone())).collect()
    };
    Ok(Simulation { design: *design, floor_price: design.floor_price(dist), auctions, seed: 0 })
}

/// Applies an observability filter to ground-truth auctions.
pub fn observe(sim: &Simulation, info: InfoStructure) -> ObservedDataset {
    let mut rows = Vec::new();
    let mut invalid = 0;
    for a in &sim.auctions {
        match a.transaction_price {
            None => invalid += 1,
            Some(p) => {
                if let Some(row) = filter_row(sim.design.format, sim.floor_price, a.auction_id, p, a.n_act, info) {
                    rows.push(row);
                }
            }
        }
    }
    ObservedDataset {
        rows,
        l_invalid: info.observe_invalid_count.then_some(invalid),
        info,
        format: sim.design.format,
        truncation_kind: sim.design.truncation.kind(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::Truncation;
    use approx::assert_abs_diff_eq;

    fn unif() -> ValueDistribution {
        ValueDistribution::uniform(0.0, 1.0).unwrap()
    }

    fn design(format: Format, truncation: Truncation) -> AuctionDesign {
        AuctionDesign::new(format, truncation, &unif()).unwrap()
    }

    #[test]
    fn population_validation_and_draws() {
        assert!(PopulationSpec::new(vec![(2, 0.5), (3, 0.4)]).is_err());
        assert!(PopulationSpec::new(vec![(0, 1.0)]).is_err());
        let p = PopulationSpec::new(vec![(3, 0.5), (2, 0.5)]).unwrap();
        assert_eq!(p.max_n(), 3);
        assert_eq!(p.draw(0.1), 2);
        assert_eq!(p.draw(0.7), 3);
        assert_eq!(p.draw(0.999_999_999), 3);
    }

    #[test]
    fn single_active_share_matches_closed_form() {
        let d = design(Format::SecondPrice, Truncation::Reserve { alpha0: 0.5 });
        let ds = simulate_observed(&unif(), &d, &PopulationSpec::fixed(2).unwrap(), 200_000, 7, InfoStructure::PRICE_ONLY.with_nobs())
            .unwrap();
        let ones = ds.rows.iter().filter(|r| r.n_obs == Some(1)).count() as f64 / ds.len() as f64;
        assert!((ones - 2.0 / 3.0).abs() < 0.01, "{ones}");
    }

    #[test]
    fn no_truncation_no_invalid() {
        for format in [Format::FirstPrice, Format::SecondPrice] {
            let d = design(format, Truncation::Reserve { alpha0: 0.0 });
            let ds = simulate_observed(
                &unif(),
                &d,
                &PopulationSpec::fixed(2).unwrap(),
                10_000,
                1,
                InfoStructure::PRICE_ONLY.with_invalid_count(),
            )
            .unwrap();
            assert_eq!(ds.l_invalid, Some(0));
        }
    }

    #[test]
    fn entry_invalid_share() {
        let d = design(Format::FirstPrice, Truncation::EntryCost { cost: 0.25 });
        let ds = simulate_observed(&unif(), &d, &PopulationSpec::fixed(2).unwrap(), 200_000, 3, InfoStructure::PRICE_ONLY.with_invalid_count())
            .unwrap();
        let share = ds.l_invalid.unwrap() as f64 / 200_000.0;
        assert!((share - 0.25).abs() < 0.01, "{share}");
    }

    #[test]
    fn streaming_matches_materialized() {
        let d = design(Format::FirstPrice, Truncation::Reserve { alpha0: 0.4 });
        let pop = PopulationSpec::new(vec![(2, 0.3), (4, 0.7)]).unwrap();
        let info = InfoStructure::PRICE_ONLY.with_nobs().with_invalid_count();
        let sim = simulate(&unif(), &d, &pop, 5_000, 11).unwrap();
        let a = observe(&sim, info);
        let b = simulate_observed(&unif(), &d, &pop, 5_000, 11, info).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn worked_example_replay() {
        let dist = ValueDistribution::uniform(0.0, 4.0).unwrap();
        let types = vec![vec![0.75, 1.0], vec![0.5, 0.75], vec![0.25, 0.5]];
        for (format, prices) in [(Format::FirstPrice, [4.0, 3.0]), (Format::SecondPrice, [3.0, 2.5])] {
            let d = AuctionDesign::new(format, Truncation::Reserve { alpha0: 0.625 }, &dist).unwrap();
            let sim = simulate_from_types(&dist, &d, &types, BidRule::Truthful).unwrap();
            let ds = observe(&sim, InfoStructure::PRICE_ONLY.with_nobs().with_invalid_count());
            assert_eq!(ds.prices(), prices.to_vec());
            assert_eq!(ds.rows.iter().map(|r| r.n_obs.unwrap()).collect::<Vec<_>>(), vec![2, 1]);
            assert_eq!(ds.l_invalid, Some(1));
            if format == Format::SecondPrice {
                let dropped = observe(&sim, InfoStructure::PRICE_ONLY.with_nobs().dropping_floor());
                assert_eq!(dropped.prices(), vec![3.0]);
            }
        }
    }

    #[test]
    fn empty_and_raw_invariants() {
        let d = design(Format::SecondPrice, Truncation::EntryCost { cost: 0.25 });
        let sim = simulate(&unif(), &d, &PopulationSpec::fixed(2).unwrap(), 0, 1).unwrap();
        assert!(observe(&sim, InfoStructure::PRICE_ONLY).is_empty());
        let sim = simulate(&unif(), &d, &PopulationSpec::fixed(2).unwrap(), 2_000, 5).unwrap();
        for a in &sim.auctions {
            assert_eq!(a.n_act as usize, a.bids.iter().filter(|b| b.is_some()).count());
            if a.n_act == 1 {
                assert_eq!(a.transaction_price, Some(0.0));
            }
        }
    }

    #[test]
    fn first_price_bounded_by_top_bid() {
        let d = design(Format::FirstPrice, Truncation::Reserve { alpha0: 0.5 });
        let ds = simulate_observed(&unif(), &d, &PopulationSpec::fixed(3).unwrap(), 20_000, 9, InfoStructure::PRICE_ONLY).unwrap();
        let top = crate::equilibrium::fp_bid_reserve(&unif(), 3, 0.5, 1.0).unwrap();
        assert!(ds.prices().iter().all(|&p| p <= top + 1e-12 && p >= 0.5 - 1e-12));
        assert_abs_diff_eq!(ds.prices().iter().cloned().fold(0.0, f64::max), top, epsilon = 1e-3);
    }

    #[test]
    fn fold_removal_counts_invalid_ids() {
        let d = design(Format::SecondPrice, Truncation::Reserve { alpha0: 0.5 });
        let ds = simulate_observed(&unif(), &d, &PopulationSpec::fixed(2).unwrap(), 1_000, 2, InfoStructure::PRICE_ONLY.with_invalid_count())
            .unwrap();
        let total: u64 = (0..10).map(|k| ds.l_invalid.unwrap() - ds.without_fold(k, 10).l_invalid.unwrap()).sum();
        assert_eq!(total, ds.l_invalid.unwrap());
    }
}
