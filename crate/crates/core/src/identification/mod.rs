//! Estimators that map observed datasets back to the screening level, the value
//! quantile function, the entry cost and the number of bidders.

mod fixed;
mod sets;
mod varying;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::empirics::{default_bandwidth, EmpiricalQuantile};
use crate::equilibrium::{Format, TruncationKind};
use crate::error::IdentificationError;
use crate::simulator::ObservedDataset;

pub use fixed::{full_entry_share, id_entry_fixed, id_fixed_nobs, id_fp_fixed_invalid, id_sp_fixed_price_only, single_active_share};
pub use sets::{id_entry_vary_known_set, id_sp_vary_invalid_set, jackknife_se};
pub use varying::{id_entry_vary_unknown, id_fp_vary_unknown, id_vary_known};

/// Estimator identifiers; the serialized ids double as CLI names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    /// Second-price, fixed known N: mass at the reserve.
    #[serde(rename = "prop1")]
    ReserveMass,
    /// First-price, fixed known N: invalid-auction share.
    #[serde(rename = "prop2")]
    InvalidShare,
    /// Fixed unknown N: share of auctions with every bidder active.
    #[serde(rename = "prop3")]
    FullEntryShare,
    /// Two datasets with different known N: boundary slope matching.
    #[serde(rename = "prop4")]
    BoundaryMatching,
    /// First-price, varying unknown N: upper-tail slope ratio.
    #[serde(rename = "prop5")]
    TailRatio,
    /// Second-price, varying unknown N: binomial mixing inversion (set).
    #[serde(rename = "prop6")]
    MixingSet,
    /// Entry cost, fixed known N.
    #[serde(rename = "prop7")]
    EntryKnownN,
    /// Entry cost, fixed unknown N.
    #[serde(rename = "prop8")]
    EntryFullShare,
    /// Entry cost, two datasets with different known N (set).
    #[serde(rename = "prop9")]
    EntryTwoSample,
    /// Entry cost, varying unknown N.
    #[serde(rename = "prop10")]
    EntryTailRatio,
}

impl Estimator {
    pub const ALL: [Estimator; 10] = [
        Estimator::ReserveMass,
        Estimator::InvalidShare,
        Estimator::FullEntryShare,
        Estimator::BoundaryMatching,
        Estimator::TailRatio,
        Estimator::MixingSet,
        Estimator::EntryKnownN,
        Estimator::EntryFullShare,
        Estimator::EntryTwoSample,
        Estimator::EntryTailRatio,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Estimator::ReserveMass => "prop1",
            Estimator::InvalidShare => "prop2",
            Estimator::FullEntryShare => "prop3",
            Estimator::BoundaryMatching => "prop4",
            Estimator::TailRatio => "prop5",
            Estimator::MixingSet => "prop6",
            Estimator::EntryKnownN => "prop7",
            Estimator::EntryFullShare => "prop8",
            Estimator::EntryTwoSample => "prop9",
            Estimator::EntryTailRatio => "prop10",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.id() == id)
    }
}

/// Observables and design features an estimator needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Requirements {
    pub format: Option<Format>,
    pub kind: TruncationKind,
    pub nobs: bool,
    /// Needed only under the given format when `format` is `None`.
    pub invalid_count: Option<Format>,
    pub known_n: bool,
    pub datasets: usize,
    pub statement: &'static str,
}

impl Estimator {
    pub fn requirements(&self) -> Requirements {
        use Format::*;
        use TruncationKind::*;
        let r = |format, kind, nobs, invalid_count, known_n, datasets, statement| Requirements {
            format,
            kind,
            nobs,
            invalid_count,
            known_n,
            datasets,
            statement,
        };
        match self {
            Estimator::ReserveMass => {
                r(Some(SecondPrice), Reserve, false, None, true, 1, "second-price prices under a reserve with a known fixed N")
            }
            Estimator::InvalidShare => r(
                Some(FirstPrice),
                Reserve,
                false,
                Some(FirstPrice),
                true,
                1,
                "first-price prices, a known fixed N and the invalid-auction count",
            ),
            Estimator::FullEntryShare => r(None, Reserve, true, None, false, 1, "prices with the number of active bidders"),
            Estimator::BoundaryMatching => {
                r(None, Reserve, false, None, true, 2, "two datasets with different known bidder counts")
            }
            Estimator::TailRatio => {
                r(Some(FirstPrice), Reserve, true, None, false, 1, "first-price prices with the number of active bidders")
            }
            Estimator::MixingSet => r(
                Some(SecondPrice),
                Reserve,
                true,
                Some(SecondPrice),
                false,
                1,
                "second-price prices, the number of active bidders and the invalid-auction count",
            ),
            Estimator::EntryKnownN => r(
                None,
                EntryCost,
                false,
                Some(FirstPrice),
                true,
                1,
                "prices under entry costs with a known fixed N, plus the invalid-auction count for first-price",
            ),
            Estimator::EntryFullShare => {
                r(None, EntryCost, true, None, false, 1, "prices under entry costs with the number of active bidders")
            }
            Estimator::EntryTwoSample => {
                r(None, EntryCost, false, None, true, 2, "two entry-cost datasets with different known bidder counts")
            }
            Estimator::EntryTailRatio => {
                r(None, EntryCost, true, None, false, 1, "prices under entry costs with the number of active bidders")
            }
        }
    }

    /// Checks the datasets against [`Estimator::requirements`].
    pub fn check_inputs(&self, datasets: &[ObservedDataset], analyst: &AnalystView) -> Result<(), IdentificationError> {
        let req = self.requirements();
        let fail = |what: &str| {
            Err(IdentificationError::Precondition(format!("{self} requires {}; {what}", req.statement)))
        };
        if datasets.len() < req.datasets {
            return fail(&format!("got {} dataset(s)", datasets.len()));
        }
        if req.known_n && analyst.known_n.len() < req.datasets {
            return fail("the bidder count is not declared known");
        }
        for ds in datasets {
            if req.format.is_some_and(|f| f != ds.format) {
                return fail(&format!("dataset format is {:?}", ds.format));
            }
            if ds.truncation_kind != req.kind {
                return fail(&format!("dataset truncation is {:?}", ds.truncation_kind));
            }
            if req.nobs && !ds.info.observe_nobs {
                return fail("the active-bidder count is not observed");
            }
            if req.invalid_count == Some(ds.format) && !ds.info.observe_invalid_count {
                return fail("the invalid-auction count is not observed");
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Which denominator multiplies the quantile derivative in the first-price
/// fixed-N value inversion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeFactor {
    /// `1 - a^N`, from differentiating the probability transform.
    #[default]
    ChainRule,
    /// `1 - a`.
    Printed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyOptions {
    /// Quantile-derivative bandwidth; `None` means `0.5 n^{-1/5}` per sample.
    pub bandwidth: Option<f64>,
    pub grid_step_1d: f64,
    pub grid_step_2d: f64,
    pub eps_set: f64,
    /// Multiplier on the jackknife standard error added to the set tolerance.
    pub z_set: f64,
    pub folds: u64,
    pub tau_eq: f64,
    pub tail_delta: f64,
    /// Window for matching mass points; `None` matches exactly.
    pub mass_eps: Option<f64>,
    pub derivative_factor: DerivativeFactor,
    /// Types at which the value function is reported; `None` uses `a + 0.05 k`.
    pub v_grid: Option<Vec<f64>>,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            bandwidth: None,
            grid_step_1d: 0.002,
            grid_step_2d: 0.005,
            eps_set: 0.01,
            z_set: 3.0,
            folds: 10,
            tau_eq: 0.05,
            tail_delta: 0.02,
            mass_eps: None,
            derivative_factor: DerivativeFactor::ChainRule,
            v_grid: None,
        }
    }
}

impl IdentifyOptions {
    pub(crate) fn bandwidth_for(&self, n: usize) -> f64 {
        self.bandwidth.unwrap_or_else(|| default_bandwidth(n))
    }

    pub(crate) fn grid_from(&self, threshold: f64) -> Vec<f64> {
        match &self.v_grid {
            Some(g) => g.iter().copied().filter(|&a| a >= threshold && a <= 1.0).collect(),
            None => default_grid(threshold),
        }
    }
}

/// `a + 0.05, a + 0.10, ...` up to 0.95.
pub fn default_grid(threshold: f64) -> Vec<f64> {
    let mut grid: Vec<f64> =
        (1..).map(|k| threshold + 0.05 * k as f64).take_while(|&a| a <= 0.95 + 1e-9).collect();
    if grid.is_empty() {
        grid.push(0.5 * (threshold + 1.0));
    }
    grid
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lo - slack && x <= self.hi + slack
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Accepted cells of a two-dimensional grid search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Names of the two coordinates, in cell order.
    pub axes: [String; 2],
    pub step: f64,
    pub cells: Vec<[f64; 2]>,
    pub bounds: [Interval; 2],
}

impl Region {
    pub fn from_cells(axes: [String; 2], step: f64, cells: Vec<[f64; 2]>) -> Option<Self> {
        if cells.is_empty() {
            return None;
        }
        let bound = |i: usize| Interval {
            lo: cells.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min),
            hi: cells.iter().map(|c| c[i]).fold(f64::NEG_INFINITY, f64::max),
        };
        let bounds = [bound(0), bound(1)];
        Some(Self { axes, step, cells, bounds })
    }

    pub fn centroid(&self) -> [f64; 2] {
        let k = self.cells.len() as f64;
        let s = self.cells.iter().fold([0.0, 0.0], |acc, c| [acc[0] + c[0], acc[1] + c[1]]);
        [s[0] / k, s[1] / k]
    }

    /// Whether some accepted cell lies within `slack` of `point` in both coordinates.
    pub fn contains(&self, point: [f64; 2], slack: f64) -> bool {
        self.cells.iter().any(|c| (c[0] - point[0]).abs() <= slack && (c[1] - point[1]).abs() <= slack)
    }

    pub fn width(&self) -> f64 {
        self.bounds[0].width().max(self.bounds[1].width())
    }

    /// Total area of the accepted cells.
    pub fn area(&self) -> f64 {
        self.cells.len() as f64 * self.step * self.step
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaStar {
    Point(f64),
    Set(Vec<Interval>),
    Region(Region),
}

impl AlphaStar {
    pub fn point(&self) -> Option<f64> {
        match self {
            AlphaStar::Point(a) => Some(*a),
            _ => None,
        }
    }

    /// Span of a set estimate (zero for points).
    pub fn width(&self) -> f64 {
        match self {
            AlphaStar::Point(_) => 0.0,
            AlphaStar::Set(iv) => {
                let lo = iv.iter().map(|i| i.lo).fold(f64::INFINITY, f64::min);
                let hi = iv.iter().map(|i| i.hi).fold(f64::NEG_INFINITY, f64::max);
                (hi - lo).max(0.0)
            }
            AlphaStar::Region(r) => r.width(),
        }
    }

    /// Measure of a set estimate: total interval length or accepted area.
    pub fn size(&self) -> f64 {
        match self {
            AlphaStar::Point(_) => 0.0,
            AlphaStar::Set(iv) => iv.iter().map(Interval::width).sum(),
            AlphaStar::Region(r) => r.area(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub residuals: BTreeMap<String, f64>,
    pub bandwidths: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    /// Finite-sample choices that the population argument leaves open.
    pub choices: BTreeMap<String, String>,
    pub rearranged: bool,
}

impl Diagnostics {
    pub(crate) fn residual(&mut self, key: &str, v: f64) {
        self.residuals.insert(key.to_string(), v);
    }

    pub(crate) fn bandwidth(&mut self, key: &str, v: f64) {
        self.bandwidths.insert(key.to_string(), v);
    }

    pub(crate) fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub(crate) fn choice(&mut self, key: &str, v: impl Into<String>) {
        self.choices.insert(key.to_string(), v.into());
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub proposition: Estimator,
    pub alpha_star: AlphaStar,
    pub n: Option<u32>,
    pub f: Option<f64>,
    pub v_grid: Vec<(f64, f64)>,
    /// Value bounds `(alpha, low, high)` implied by the ends of a set estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_band: Option<Vec<(f64, f64, f64)>>,
    pub diagnostics: Diagnostics,
}

impl IdentificationResult {
    /// Largest absolute deviation of the recovered values from `truth` on the reported grid.
    pub fn max_value_error<F: Fn(f64) -> f64>(&self, truth: F) -> f64 {
        self.v_grid.iter().map(|&(a, v)| (v - truth(a)).abs()).fold(0.0, f64::max)
    }
}

/// Evaluates `value` on the grid and sorts the values if they are not increasing.
pub(crate) fn value_grid<F: Fn(f64) -> f64>(grid: &[f64], value: F, diag: &mut Diagnostics) -> Vec<(f64, f64)> {
    let mut vals: Vec<f64> = grid.iter().map(|&a| value(a)).collect();
    if vals.windows(2).any(|w| w[1] <= w[0]) {
        vals.sort_by(f64::total_cmp);
        diag.rearranged = true;
        diag.warn("recovered values were not increasing; monotone rearrangement applied");
    }
    grid.iter().copied().zip(vals).collect()
}

pub(crate) fn quantile_of(prices: Vec<f64>, what: &str) -> Result<EmpiricalQuantile, IdentificationError> {
    EmpiricalQuantile::new(prices).map_err(|_| IdentificationError::Precondition(format!("no prices in {what}")))
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), IdentificationError> {
    if cond {
        Ok(())
    } else {
        Err(IdentificationError::Precondition(msg()))
    }
}

pub(crate) fn not_identified(e: Estimator, reason: &str) -> IdentificationError {
    IdentificationError::NotIdentified { proposition: e.id().to_string(), reason: reason.to_string() }
}

/// What the analyst knows about the bidder counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalystView {
    /// Whether N changes across auctions.
    #[serde(default)]
    pub n_varies: bool,
    /// Known bidder count of each dataset, in order; empty when unknown.
    #[serde(default)]
    pub known_n: Vec<u32>,
}

/// Picks the estimator for a design and information structure, or explains why
/// the primitives are not identified.
pub fn route(
    format: Format,
    kind: TruncationKind,
    info: &crate::simulator::InfoStructure,
    analyst: &AnalystView,
) -> Result<Estimator, IdentificationError> {
    use Format::*;
    use TruncationKind::*;
    let known = !analyst.known_n.is_empty();
    match (known, analyst.n_varies) {
        (true, false) => match (format, kind) {
            (SecondPrice, Reserve) => Ok(Estimator::ReserveMass),
            (FirstPrice, Reserve) if info.observe_invalid_count => Ok(Estimator::InvalidShare),
            (FirstPrice, Reserve) => Err(not_identified(
                Estimator::ReserveMass,
                "first-price prices with a fixed known N admit a continuum of (screening level, value) pairs; \
                 observe the invalid-auction count instead",
            )),
            (SecondPrice, EntryCost) => Ok(Estimator::EntryKnownN),
            (FirstPrice, EntryCost) if info.observe_invalid_count => Ok(Estimator::EntryKnownN),
            (FirstPrice, EntryCost) => Err(not_identified(
                Estimator::EntryKnownN,
                "first-price prices under entry costs with a fixed known N do not pin down the entry threshold \
                 without the invalid-auction count",
            )),
        },
        (true, true) => Ok(match kind {
            Reserve => Estimator::BoundaryMatching,
            EntryCost => Estimator::EntryTwoSample,
        }),
        (false, varies) => {
            if !info.observe_nobs {
                return Err(IdentificationError::Precondition(
                    "unknown bidder counts require the observed number of active bidders".into(),
                ));
            }
            match (varies, format, kind) {
                (false, _, Reserve) => Ok(Estimator::FullEntryShare),
                (false, _, EntryCost) => Ok(Estimator::EntryFullShare),
                (true, FirstPrice, Reserve) => Ok(Estimator::TailRatio),
                (true, SecondPrice, Reserve) if info.observe_invalid_count => Ok(Estimator::MixingSet),
                (true, SecondPrice, Reserve) => Err(not_identified(
                    Estimator::TailRatio,
                    "second-price prices and active-bidder counts are observationally equivalent across \
                     different (population, screening level) pairs; observe the invalid-auction count",
                )),
                (true, _, EntryCost) => Ok(Estimator::EntryTailRatio),
            }
        }
    }
}

/// Runs an estimator on one or two datasets.
pub fn identify(
    estimator: Estimator,
    datasets: &[ObservedDataset],
    analyst: &AnalystView,
    opts: &IdentifyOptions,
) -> Result<IdentificationResult, IdentificationError> {
    let first = datasets.first().ok_or_else(|| IdentificationError::Precondition("no dataset given".into()))?;
    let known = |i: usize| {
        analyst.known_n.get(i).copied().ok_or_else(|| {
            IdentificationError::Precondition(format!("{estimator} needs the known bidder count of dataset {}", i + 1))
        })
    };
    let second = || {
        datasets.get(1).ok_or_else(|| IdentificationError::Precondition(format!("{estimator} needs two datasets")))
    };
    match estimator {
        Estimator::ReserveMass => id_sp_fixed_price_only(first, known(0)?, opts),
        Estimator::InvalidShare => id_fp_fixed_invalid(first, known(0)?, opts),
        Estimator::FullEntryShare | Estimator::EntryFullShare => id_fixed_nobs(first, opts),
        Estimator::BoundaryMatching => id_vary_known(first, second()?, known(0)?, known(1)?, first.format, opts),
        Estimator::TailRatio => id_fp_vary_unknown(first, opts),
        Estimator::MixingSet => id_sp_vary_invalid_set(first, opts),
        Estimator::EntryKnownN => id_entry_fixed(first, known(0)?, first.format, opts),
        Estimator::EntryTwoSample => id_entry_vary_known_set(first, second()?, known(0)?, known(1)?, first.format, opts),
        Estimator::EntryTailRatio => id_entry_vary_unknown(first, first.format, opts),
    }
}
