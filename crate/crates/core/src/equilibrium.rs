//! Equilibrium bids, entry thresholds, seller payoffs and the optimal screening level.

use serde::{Deserialize, Serialize};

use crate::distributions::{SellerPreferences, ValueDistribution};
use crate::error::EquilibriumError;
use crate::numerics::{adaptive_simpson, bisect, integrate_split, GaussRule, QUAD_DEPTH, QUAD_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    FirstPrice,
    SecondPrice,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truncation {
    /// Reserve set at the value of screening quantile `alpha0`.
    Reserve { alpha0: f64 },
    /// Bidders pay `cost` to enter.
    EntryCost { cost: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationKind {
    Reserve,
    EntryCost,
}

impl Truncation {
    pub fn kind(&self) -> TruncationKind {
        match self {
            Truncation::Reserve { .. } => TruncationKind::Reserve,
            Truncation::EntryCost { .. } => TruncationKind::EntryCost,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionDesign {
    pub format: Format,
    pub truncation: Truncation,
}

impl AuctionDesign {
    pub fn new(format: Format, truncation: Truncation, dist: &ValueDistribution) -> Result<Self, EquilibriumError> {
        let design = Self { format, truncation };
        design.validate(dist)?;
        Ok(design)
    }

    pub fn validate(&self, dist: &ValueDistribution) -> Result<(), EquilibriumError> {
        match self.truncation {
            Truncation::Reserve { alpha0 } if !(0.0..1.0).contains(&alpha0) => {
                Err(EquilibriumError::InvalidDesign(format!("screening quantile {alpha0} must lie in [0, 1)")))
            }
            Truncation::EntryCost { cost } if !(cost > 0.0 && cost < dist.support().1) => Err(
                EquilibriumError::InvalidDesign(format!("entry cost {cost} must lie in (0, V(1)) = (0, {})", dist.support().1)),
            ),
            _ => Ok(()),
        }
    }

    /// Lowest participating type when `n` bidders are present.
    pub fn threshold(&self, dist: &ValueDistribution, n: u32) -> Result<f64, EquilibriumError> {
        match self.truncation {
            Truncation::Reserve { alpha0 } => Ok(alpha0),
            Truncation::EntryCost { cost } => entry_threshold(dist, n, cost),
        }
    }

    /// Price recorded when a single bidder is active in a second-price auction.
    pub fn floor_price(&self, dist: &ValueDistribution) -> f64 {
        match self.truncation {
            Truncation::Reserve { alpha0 } => dist.value(alpha0),
            Truncation::EntryCost { .. } => 0.0,
        }
    }
}

fn check_n(n: u32, min: u32) -> Result<(), EquilibriumError> {
    if n < min {
        return Err(EquilibriumError::InvalidDesign(format!("need at least {min} potential bidders, got {n}")));
    }
    Ok(())
}

/// `V'(t) t^p`, taken as zero at the origin where `V'` may be unbounded.
#[inline]
fn kernel_integrand(dist: &ValueDistribution, p: i32, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        dist.slope(t) * t.powi(p)
    }
}

fn bid_integral(dist: &ValueDistribution, n: u32, lo: f64, hi: f64) -> f64 {
    let p = n as i32 - 1;
    if p == 0 {
        return dist.value(hi) - dist.value(lo);
    }
    integrate_split(|t| kernel_integrand(dist, p, t), lo, hi, dist.breakpoints(), QUAD_TOL)
}

/// First-price equilibrium bid of type `alpha` under screening level `alpha0`.
pub fn fp_bid_reserve(dist: &ValueDistribution, n: u32, alpha0: f64, alpha: f64) -> Result<f64, EquilibriumError> {
    check_n(n, 2)?;
    if !(0.0..1.0).contains(&alpha0) || alpha > 1.0 {
        return Err(EquilibriumError::InvalidDesign(format!("alpha0 = {alpha0}, alpha = {alpha}")));
    }
    if alpha < alpha0 {
        return Err(EquilibriumError::BelowThreshold { alpha, threshold: alpha0 });
    }
    if alpha == 0.0 {
        return Ok(dist.value(0.0));
    }
    Ok(dist.value(alpha) - bid_integral(dist, n, alpha0, alpha) / alpha.powi(n as i32 - 1))
}

/// Closed-form derivative of the first-price bid with respect to the screening level.
pub fn fp_bid_reserve_sensitivity(dist: &ValueDistribution, n: u32, alpha0: f64, alpha: f64) -> Result<f64, EquilibriumError> {
    check_n(n, 2)?;
    if alpha < alpha0 {
        return Err(EquilibriumError::BelowThreshold { alpha, threshold: alpha0 });
    }
    if alpha0 == 0.0 {
        return Ok(0.0);
    }
    Ok((alpha0 / alpha).powi(n as i32 - 1) * dist.slope(alpha0))
}

/// Root of `V(a) a^{n-1} = cost`.
pub fn entry_threshold(dist: &ValueDistribution, n: u32, cost: f64) -> Result<f64, EquilibriumError> {
    check_n(n, 1)?;
    if !(cost > 0.0 && cost < dist.support().1) {
        return Err(EquilibriumError::NoThreshold { cost, n });
    }
    let p = n as i32 - 1;
    if n == 1 && dist.value(0.0) >= cost {
        return Ok(0.0);
    }
    bisect(|a| dist.value(a) * a.powi(p) - cost, 0.0, 1.0, 1e-13).map_err(|_| EquilibriumError::NoThreshold { cost, n })
}

/// First-price equilibrium bid of type `alpha` when entry costs `cost`.
pub fn fp_bid_entry(dist: &ValueDistribution, n: u32, cost: f64, alpha: f64) -> Result<f64, EquilibriumError> {
    check_n(n, 2)?;
    let threshold = entry_threshold(dist, n, cost)?;
    if alpha < threshold - 1e-12 || alpha > 1.0 {
        return Err(EquilibriumError::BelowThreshold { alpha, threshold });
    }
    let alpha = alpha.max(threshold);
    let integral = bid_integral(dist, n, threshold, alpha);
    Ok(dist.value(alpha) - (cost + integral) / alpha.powi(n as i32 - 1))
}

/// Second-price bidders bid their value.
pub fn sp_bid(dist: &ValueDistribution, alpha: f64) -> Result<f64, EquilibriumError> {
    Ok(dist.quantile(alpha)?)
}

const TABLE_PANELS: usize = 2048;

/// Tabulated `K(x) = \int_0^x V'(s) s^{n-1} ds`, the kernel shared by all first-price bids.
#[derive(Clone, Debug)]
pub struct BidKernel {
    dist: ValueDistribution,
    n: u32,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    gauss: (Vec<f64>, Vec<f64>),
}

impl BidKernel {
    pub fn new(dist: &ValueDistribution, n: u32) -> Self {
        let mut nodes: Vec<f64> = (0..=TABLE_PANELS).map(|i| i as f64 / TABLE_PANELS as f64).collect();
        nodes.extend_from_slice(dist.breakpoints());
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let p = n as i32 - 1;
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in nodes.windows(2) {
            acc += adaptive_simpson(|t| kernel_integrand(dist, p, t), w[0], w[1], 1e-15, QUAD_DEPTH);
            cumulative.push(acc);
        }
        Self { dist: dist.clone(), n, nodes, cumulative, gauss: crate::numerics::gauss_legendre(8) }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn dist(&self) -> &ValueDistribution {
        &self.dist
    }

    #[inline]
    pub fn cumulative(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        if self.n == 1 {
            return self.dist.value(x) - self.dist.value(0.0);
        }
        let i = (self.nodes.partition_point(|&node| node <= x)).clamp(1, self.nodes.len()) - 1;
        let left = self.nodes[i];
        if x == left {
            return self.cumulative[i];
        }
        let half = 0.5 * (x - left);
        let mid = left + half;
        let p = self.n as i32 - 1;
        let (xs, ws) = &self.gauss;
        let mut s = 0.0;
        for (z, w) in xs.iter().zip(ws) {
            let t = mid + half * z;
            s += w * kernel_integrand(&self.dist, p, t);
        }
        self.cumulative[i] + half * s
    }

    /// Bid of type `t` given lowest bidding type `lower` and the threshold bid offset.
    #[inline]
    pub fn bid(&self, lower: f64, offset: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return self.dist.value(0.0);
        }
        let k = self.cumulative(t) - self.cumulative(lower);
        self.dist.value(t) - (offset + k) / t.powi(self.n as i32 - 1)
    }
}

/// First-price equilibrium strategy for a fixed number of bidders.
#[derive(Clone, Debug)]
pub struct BidFunction {
    kernel: BidKernel,
    lower: f64,
    offset: f64,
}

impl BidFunction {
    pub fn reserve(dist: &ValueDistribution, n: u32, alpha0: f64) -> Self {
        Self { kernel: BidKernel::new(dist, n), lower: alpha0, offset: 0.0 }
    }

    pub fn entry(dist: &ValueDistribution, n: u32, cost: f64) -> Result<Self, EquilibriumError> {
        let lower = entry_threshold(dist, n, cost)?;
        Ok(Self { kernel: BidKernel::new(dist, n), lower, offset: cost })
    }

    pub fn for_design(dist: &ValueDistribution, design: &AuctionDesign, n: u32) -> Result<Self, EquilibriumError> {
        match design.truncation {
            Truncation::Reserve { alpha0 } => Ok(Self::reserve(dist, n, alpha0)),
            Truncation::EntryCost { cost } => Self::entry(dist, n, cost),
        }
    }

    pub fn threshold(&self) -> f64 {
        self.lower
    }

    /// Equilibrium bid; types below the threshold are evaluated at the threshold.
    #[inline]
    pub fn bid(&self, alpha: f64) -> f64 {
        self.kernel.bid(self.lower, self.offset, alpha.max(self.lower))
    }
}

/// Seller expected utility at screening level `alpha` by adaptive quadrature.
pub fn seller_payoff(
    dist: &ValueDistribution,
    prefs: &SellerPreferences,
    format: Format,
    n: u32,
    alpha: f64,
) -> Result<f64, EquilibriumError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(EquilibriumError::InvalidDesign(format!("screening level {alpha} outside [0, 1]")));
    }
    let nf = n as f64;
    let u0 = prefs.outside_utility() * alpha.powi(n as i32);
    match format {
        Format::SecondPrice => {
            check_n(n, 1)?;
            let single = prefs.u(dist.value(alpha)) * nf * alpha.powi(n as i32 - 1) * (1.0 - alpha);
            let tail = if n >= 2 {
                let p = n as i32 - 2;
                nf * (nf - 1.0)
                    * integrate_split(|t| prefs.u(dist.value(t)) * t.powi(p) * (1.0 - t), alpha, 1.0, dist.breakpoints(), QUAD_TOL)
            } else {
                0.0
            };
            Ok(u0 + single + tail)
        }
        Format::FirstPrice => {
            check_n(n, 2)?;
            let kernel = BidKernel::new(dist, n);
            let p = n as i32 - 1;
            let tail =
                integrate_split(|t| prefs.u(kernel.bid(alpha, 0.0, t)) * nf * t.powi(p), alpha, 1.0, dist.breakpoints(), QUAD_TOL);
            Ok(u0 + tail)
        }
    }
}

/// Fixed-rule payoff evaluator for dense screening grids.
#[derive(Clone, Debug)]
pub struct PayoffEvaluator {
    prefs: SellerPreferences,
    format: Format,
    kernel: BidKernel,
    rule: GaussRule,
}

impl PayoffEvaluator {
    pub fn new(dist: &ValueDistribution, prefs: &SellerPreferences, format: Format, n: u32) -> Result<Self, EquilibriumError> {
        check_n(n, if format == Format::FirstPrice { 2 } else { 1 })?;
        Ok(Self { prefs: prefs.clone(), format, kernel: BidKernel::new(dist, n), rule: GaussRule::new(10, 8) })
    }

    pub fn payoff(&self, alpha: f64) -> f64 {
        let n = self.kernel.n();
        let nf = n as f64;
        let dist = self.kernel.dist();
        let u0 = self.prefs.outside_utility() * alpha.powi(n as i32);
        match self.format {
            Format::SecondPrice => {
                let single = self.prefs.u(dist.value(alpha)) * nf * alpha.powi(n as i32 - 1) * (1.0 - alpha);
                let tail = if n >= 2 {
                    let p = n as i32 - 2;
                    nf * (nf - 1.0)
                        * self.rule.integrate(|t| self.prefs.u(dist.value(t)) * t.powi(p) * (1.0 - t), alpha, 1.0)
                } else {
                    0.0
                };
                u0 + single + tail
            }
            Format::FirstPrice => {
                let p = n as i32 - 1;
                let k_lower = self.kernel.cumulative(alpha);
                let tail = self.rule.integrate(
                    |t| {
                        let b = dist.value(t) - (self.kernel.cumulative(t) - k_lower) / t.powi(p);
                        self.prefs.u(b) * nf * t.powi(p)
                    },
                    alpha,
                    1.0,
                );
                u0 + tail
            }
        }
    }

    /// Index and location of the payoff maximum over `points` equally spaced levels in `[0, 1]`.
    pub fn grid_argmax(&self, points: usize) -> (usize, f64) {
        let step = 1.0 / (points - 1) as f64;
        let mut best = (0, f64::NEG_INFINITY);
        for i in 0..points {
            let v = self.payoff(i as f64 * step);
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0, best.0 as f64 * step)
    }
}

/// Marginal condition of the seller problem, up to the positive factor `n a^{n-1}`.
pub fn screening_foc(
    dist: &ValueDistribution,
    prefs: &SellerPreferences,
    format: Format,
    n: u32,
    alpha: f64,
) -> Result<f64, EquilibriumError> {
    match format {
        Format::SecondPrice => Ok(sp_foc(dist, prefs, alpha)),
        Format::FirstPrice => {
            check_n(n, 2)?;
            Ok(fp_foc(&BidKernel::new(dist, n), prefs, alpha))
        }
    }
}

fn sp_foc(dist: &ValueDistribution, prefs: &SellerPreferences, alpha: f64) -> f64 {
    let v = dist.value(alpha);
    prefs.outside_utility() + prefs.du(v) * dist.slope(alpha) * (1.0 - alpha) - prefs.u(v)
}

fn fp_foc(kernel: &BidKernel, prefs: &SellerPreferences, alpha: f64) -> f64 {
    let dist = kernel.dist();
    let v = dist.value(alpha);
    let inner = integrate_split(|t| prefs.du(kernel.bid(alpha, 0.0, t)), alpha, 1.0, dist.breakpoints(), 1e-12);
    prefs.outside_utility() - prefs.u(v) + dist.slope(alpha) * inner
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularityPolicy {
    #[default]
    Warn,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Screening {
    pub alpha: f64,
    pub foc_residual: f64,
    pub regularity_violations: usize,
}

const CORNER_PROBE: f64 = 1e-9;
const REGULARITY_GRID: usize = 1000;

/// Optimal screening level from the sign-changing marginal condition.
///
/// First-price marginal conditions depend on the number of bidders `n`; second-price ones do not.
pub fn optimal_screening(
    dist: &ValueDistribution,
    prefs: &SellerPreferences,
    format: Format,
    n: u32,
    policy: RegularityPolicy,
) -> Result<Screening, EquilibriumError> {
    prefs.validate()?;
    if prefs.outside_option >= dist.support().1 {
        return Err(EquilibriumError::InvalidDesign(format!(
            "outside option {} must lie below V(1) = {}",
            prefs.outside_option,
            dist.support().1
        )));
    }
    let report = dist.check_regularity(REGULARITY_GRID);
    if !report.regular && policy == RegularityPolicy::Reject {
        return Err(EquilibriumError::Irregular { count: report.violations.len(), first: report.violations[0] });
    }
    let g: Box<dyn Fn(f64) -> f64> = match format {
        Format::SecondPrice => Box::new(|a| sp_foc(dist, prefs, a)),
        Format::FirstPrice => {
            check_n(n, 2)?;
            let kernel = BidKernel::new(dist, n);
            Box::new(move |a| fp_foc(&kernel, prefs, a))
        }
    };
    let g0 = g(CORNER_PROBE);
    let alpha = if g0 <= 0.0 { 0.0 } else { bisect(&g, CORNER_PROBE, 1.0, 1e-12)? };
    let foc_residual = if alpha > 0.0 { g(alpha) } else { 0.0 };
    Ok(Screening { alpha, foc_residual, regularity_violations: report.violations.len() })
}
