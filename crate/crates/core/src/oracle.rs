//! Observationally equivalent twins and the second-price counterexample pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distributions::ValueDistribution;
use crate::empirics::{count_stats, EmpiricalQuantile};
use crate::equilibrium::{AuctionDesign, Format, Truncation};
use crate::error::OracleError;
use crate::simulator::{observe, BidRule, InfoStructure, ObservedDataset, PopulationSpec, Simulation, Simulator};

/// Price quantile function used to build a twin.
pub trait PriceQuantile {
    fn at(&self, u: f64) -> f64;
    fn slope_at_zero(&self) -> f64;
}

impl PriceQuantile for EmpiricalQuantile {
    fn at(&self, u: f64) -> f64 {
        self.eval(u)
    }

    fn slope_at_zero(&self) -> f64 {
        self.boundary_fit(false, 2.0 * self.default_bandwidth()).map_or(f64::NAN, |f| f.derivative(1))
    }
}

/// Closed-form price quantile.
pub struct AnalyticQuantile<F>(pub F);

impl<F: Fn(f64) -> f64> PriceQuantile for AnalyticQuantile<F> {
    fn at(&self, u: f64) -> f64 {
        (self.0)(u.clamp(0.0, 1.0))
    }

    fn slope_at_zero(&self) -> f64 {
        let h = 1e-6;
        ((self.0)(h) - (self.0)(0.0)) / h
    }
}

/// Grid size for twins built from empirical prices; finer grids let sampling
/// noise in the centered differences break monotonicity.
pub const TWIN_POINTS: usize = 51;

/// Tolerance on the price-quantile slope at zero for a twin to be valid.
pub const TWIN_SLOPE_TOL: f64 = 0.05;

/// Alternative first-price primitive that generates the same price law.
#[derive(Clone, Debug, Serialize)]
pub struct FpTwin {
    pub n: u32,
    pub alpha2: f64,
    /// Types from `alpha2` to 1.
    pub types: Vec<f64>,
    pub values: Vec<f64>,
    pub bids: Vec<f64>,
    pub slope_at_zero: f64,
    pub warnings: Vec<String>,
}

impl FpTwin {
    /// Whether the slope condition held and the values are strictly increasing.
    pub fn is_valid(&self) -> bool {
        self.warnings.is_empty()
    }

    fn interpolate(&self, ys: &[f64], alpha: f64) -> f64 {
        let last = self.types.len() - 1;
        let step = (1.0 - self.alpha2) / last as f64;
        let x = ((alpha - self.alpha2) / step).clamp(0.0, last as f64);
        let i = (x.floor() as usize).min(last - 1);
        let w = x - i as f64;
        ys[i] * (1.0 - w) + ys[i + 1] * w
    }

    pub fn value(&self, alpha: f64) -> f64 {
        self.interpolate(&self.values, alpha)
    }

    pub fn bid(&self, alpha: f64) -> f64 {
        self.interpolate(&self.bids, alpha)
    }

    /// Largest gap between the twin's values and `truth` on its grid.
    pub fn sup_distance<F: Fn(f64) -> f64>(&self, truth: F) -> f64 {
        self.types.iter().zip(&self.values).map(|(&a, &v)| (v - truth(a)).abs()).fold(0.0, f64::max)
    }

    /// Forward-simulates transaction prices: `n` uniform types, the highest bids if it clears `alpha2`.
    pub fn simulate_prices(&self, l_total: u64, seed: u64) -> Vec<f64> {
        let base = ChaCha8Rng::seed_from_u64(seed);
        (0..l_total)
            .filter_map(|id| {
                let mut rng = base.clone();
                rng.set_stream(id);
                let top = (0..self.n).map(|_| rng.gen::<f64>()).fold(0.0, f64::max);
                (top >= self.alpha2).then(|| self.bid(top))
            })
            .collect()
    }
}

/// Builds the twin with screening level `alpha2` on `points` grid types.
pub fn construct_fp_twin<Q: PriceQuantile>(q: &Q, n: u32, alpha2: f64, points: usize) -> Result<FpTwin, OracleError> {
    if n < 2 {
        return Err(OracleError::InvalidParameter(format!("twin needs N >= 2, got {n}")));
    }
    if !(alpha2 > 0.0 && alpha2 < 1.0) {
        return Err(OracleError::InvalidParameter(format!("alpha2 must lie in (0, 1), got {alpha2}")));
    }
    let points = points.max(3);
    let step = (1.0 - alpha2) / (points - 1) as f64;
    let types: Vec<f64> = (0..points).map(|i| (alpha2 + i as f64 * step).min(1.0)).collect();
    let base = alpha2.powi(n as i32);
    let bids: Vec<f64> = types.iter().map(|&a| q.at((a.powi(n as i32) - base) / (1.0 - base))).collect();
    let last = points - 1;
    let values = (0..points)
        .map(|i| {
            let slope = match i {
                0 => (bids[1] - bids[0]) / step,
                i if i == last => (bids[last] - bids[last - 1]) / step,
                i => (bids[i + 1] - bids[i - 1]) / (2.0 * step),
            };
            bids[i] + types[i] / (n - 1) as f64 * slope
        })
        .collect::<Vec<f64>>();
    let slope_at_zero = q.slope_at_zero();
    let mut warnings = Vec::new();
    if !(slope_at_zero.abs() <= TWIN_SLOPE_TOL) {
        warnings.push(format!(
            "price quantile slope at zero is {slope_at_zero}; the prices do not look like a binding-reserve first-price model"
        ));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        warnings.push("twin values are not strictly increasing".into());
    }
    Ok(FpTwin { n, alpha2, types, values, bids, slope_at_zero, warnings })
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64, OracleError> {
    if a.is_empty() || b.is_empty() {
        return Err(OracleError::EmptySample);
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    Ok(d)
}

/// One statistic of a comparison report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, observed: f64, target: f64, tolerance: f64) -> Self {
        Self { name: name.into(), observed, target, tolerance, pass: (observed - target).abs() <= tolerance }
    }

    /// Passes when `observed <= bound`.
    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self { name: name.into(), observed, target: 0.0, tolerance: bound, pass: observed <= bound }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleReport {
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub datasets: [ObservedDataset; 2],
}

impl CounterexampleReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Thresholds at which the conditional price CDF given two active bidders is checked.
pub const CDF_POINTS: [f64; 5] = [0.55, 0.65, 0.75, 0.85, 0.95];
const TOL: f64 = 0.01;

/// The two second-price designs that share price and active-bidder-count laws:
/// two bidders with uniform values on `[0, 1]`, and a one-or-two bidder mix with
/// uniform values on `[1/4, 1]`, both with reserve price 1/2.
pub fn prop5_cases() -> Result<[(ValueDistribution, AuctionDesign, PopulationSpec); 2], OracleError> {
    let one = ValueDistribution::uniform(0.0, 1.0).map_err(|e| OracleError::InvalidParameter(e.to_string()))?;
    let two = ValueDistribution::shifted_uniform(0.25, 1.0).map_err(|e| OracleError::InvalidParameter(e.to_string()))?;
    let d1 = AuctionDesign::new(Format::SecondPrice, Truncation::Reserve { alpha0: 0.5 }, &one)?;
    let d2 = AuctionDesign::new(Format::SecondPrice, Truncation::Reserve { alpha0: 1.0 / 3.0 }, &two)?;
    Ok([(one, d1, PopulationSpec::fixed(2)?), (two, d2, PopulationSpec::new(vec![(1, 0.4), (2, 0.6)])?)])
}

/// Simulates both cases and checks every closed-form statistic plus the
/// conditional price agreement between them.
pub fn prop5_counterexample(l_total: u64, seed: u64) -> Result<CounterexampleReport, OracleError> {
    let info = InfoStructure::PRICE_ONLY.with_nobs().with_invalid_count();
    let mut checks = Vec::new();
    let mut datasets = Vec::new();
    for (case, (dist, design, pop)) in prop5_cases()?.into_iter().enumerate() {
        let label = format!("case{}", case + 1);
        let sim = Simulator::new(&dist, &design, &pop, BidRule::Truthful)?.simulate(l_total, seed + case as u64);
        let ds = observe(&sim, info);
        let stats = count_stats(&ds)?;
        checks.push(Check::new(format!("{label}.share_nobs_1"), stats.share(1), 2.0 / 3.0, TOL));
        checks.push(Check::new(format!("{label}.share_nobs_2"), stats.share(2), 1.0 / 3.0, TOL));
        let single = EmpiricalQuantile::new(ds.prices_where(|k| k == 1))?;
        checks.push(Check::new(format!("{label}.mass_at_reserve_given_nobs_1"), single.mass_near(0.5, 1e-12), 1.0, TOL));
        let pair = EmpiricalQuantile::new(ds.prices_where(|k| k == 2))?;
        for t in CDF_POINTS {
            let target = -4.0 * t * t + 8.0 * t - 3.0;
            checks.push(Check::new(format!("{label}.price_cdf_nobs_2_at_{t}"), pair.ecdf(t), target, TOL));
        }
        for (k, b) in active_bids(&sim) {
            let bids = EmpiricalQuantile::new(b)?;
            checks.push(Check::new(format!("{label}.bid_cdf_nobs_{k}_at_0.75"), bids.ecdf(0.75), 0.5, TOL));
        }
        if case == 1 {
            let inv = ds.l_invalid.unwrap_or(0) as f64 / l_total.max(1) as f64;
            checks.push(Check::new(format!("{label}.invalid_share"), inv, 0.2, TOL));
        }
        datasets.push(ds);
    }
    let [a, b]: [ObservedDataset; 2] = datasets.try_into().expect("two cases");
    for k in [1, 2] {
        let ks = ks_distance(&a.prices_where(|n| n == k), &b.prices_where(|n| n == k))?;
        checks.push(Check::at_most(format!("ks_prices_nobs_{k}"), ks, TOL));
    }
    Ok(CounterexampleReport { checks, datasets: [a, b] })
}

/// Submitted bids grouped by the number of active bidders.
fn active_bids(sim: &Simulation) -> Vec<(u32, Vec<f64>)> {
    let mut groups: Vec<(u32, Vec<f64>)> = Vec::new();
    for a in sim.auctions.iter().filter(|a| a.n_act > 0) {
        let pos = match groups.iter().position(|g| g.0 == a.n_act) {
            Some(p) => p,
            None => {
                groups.push((a.n_act, Vec::new()));
                groups.len() - 1
            }
        };
        groups[pos].1.extend(a.bids.iter().flatten());
    }
    groups.sort_by_key(|g| g.0);
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::fp_bid_reserve;
    use crate::simulator::simulate_observed;

    fn uniform_prices(n: u32, a: f64, l: u64, seed: u64) -> EmpiricalQuantile {
        let u = ValueDistribution::uniform(0.0, 1.0).unwrap();
        let d = AuctionDesign::new(Format::FirstPrice, Truncation::Reserve { alpha0: a }, &u).unwrap();
        let ds = simulate_observed(&u, &d, &PopulationSpec::fixed(n).unwrap(), l, seed, InfoStructure::PRICE_ONLY).unwrap();
        EmpiricalQuantile::new(ds.prices()).unwrap()
    }

    #[test]
    fn ks_trivial_cases() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0; 4], &[1.0; 3]).unwrap(), 1.0);
        assert!(ks_distance(&[], &[1.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..100_000).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..100_000).map(|_| rng.gen()).collect();
        assert!(ks_distance(&a, &b).unwrap() <= 0.01);
    }

    #[test]
    fn analytic_twin_at_truth_recovers_values() {
        let u = ValueDistribution::uniform(0.0, 1.0).unwrap();
        let t = AnalyticQuantile(|s: f64| {
            let alpha = (0.25 + s * 0.75).sqrt();
            fp_bid_reserve(&u, 2, 0.5, alpha).unwrap()
        });
        let twin = construct_fp_twin(&t, 2, 0.5, 501).unwrap();
        assert!(twin.is_valid(), "{:?}", twin.warnings);
        assert!(twin.sup_distance(|a| a) < 0.03);
        let other = construct_fp_twin(&t, 2, 0.3, 501).unwrap();
        assert!(other.is_valid(), "{:?}", other.warnings);
        assert!(other.sup_distance(|a| a) > 0.05);
    }

    #[test]
    fn empirical_twin_reproduces_prices() {
        let q = uniform_prices(2, 0.5, 400_000, 11);
        let twin = construct_fp_twin(&q, 2, 0.7, TWIN_POINTS).unwrap();
        assert!(twin.is_valid(), "{:?}", twin.warnings);
        assert!(twin.sup_distance(|a| a) > 0.05);
        let prices = twin.simulate_prices(400_000, 12);
        assert!(ks_distance(&prices, q.samples()).unwrap() <= 0.01);
    }

    #[test]
    fn slope_check_flags_nonbinding_prices() {
        let q = uniform_prices(2, 0.0, 100_000, 13);
        let twin = construct_fp_twin(&q, 2, 0.3, TWIN_POINTS).unwrap();
        assert!(!twin.is_valid());
    }

    #[test]
    fn counterexample_report_passes() {
        let r = prop5_counterexample(200_000, 7).unwrap();
        let failed: Vec<_> = r.checks.iter().filter(|c| !c.pass).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert!(r.checks.len() >= 20);
    }
}
