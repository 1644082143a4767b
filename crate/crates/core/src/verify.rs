//! Verification suites: invariance of the optimal screening level, round trips
//! over the identification table, and the non-identification demonstrations.

use serde::Serialize;

use crate::distributions::{SellerPreferences, ValueDistribution};
use crate::empirics::EmpiricalQuantile;
use crate::equilibrium::{
    entry_threshold, fp_bid_entry, fp_bid_reserve, optimal_screening, AuctionDesign, Format, PayoffEvaluator,
    RegularityPolicy, Truncation, TruncationKind,
};
use crate::error::{EquilibriumError, IdentificationError, OracleError};
use crate::identification::{
    default_grid, identify, route, AlphaStar, AnalystView, DerivativeFactor, Estimator, IdentificationResult,
    IdentifyOptions,
};
use crate::oracle::{construct_fp_twin, ks_distance, prop5_counterexample, Check, TWIN_POINTS};
use crate::simulator::{observe, simulate_from_types, simulate_observed, BidRule, InfoStructure, ObservedDataset, PopulationSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lemma1,
    Roundtrip,
    Counterexamples,
    Table,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lemma1" => Ok(Suite::Lemma1),
            "roundtrip" => Ok(Suite::Roundtrip),
            "counterexamples" => Ok(Suite::Counterexamples),
            "table" => Ok(Suite::Table),
            other => Err(format!("unknown suite {other:?}; expected lemma1, roundtrip, counterexamples or table")),
        }
    }
}

// ---------------------------------------------------------------------------
// Screening-level invariance across the number of bidders.

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceCase {
    pub distribution: String,
    pub utility: String,
    pub outside_option: f64,
    pub format: Format,
    /// Grid argmax for each bidder count.
    pub argmax: Vec<(u32, f64)>,
    /// Largest argmax difference in grid steps.
    pub spread_steps: usize,
    /// Marginal-condition root and residual for each bidder count.
    pub foc: Vec<(u32, f64, f64)>,
    pub invariant: bool,
    pub foc_ok: bool,
}

pub const LEMMA1_COUNTS: [u32; 5] = [2, 3, 4, 5, 6];
pub const FOC_TOL: f64 = 1e-8;

fn lemma1_primitives() -> Result<Vec<(String, ValueDistribution)>, EquilibriumError> {
    Ok(vec![
        ("uniform".into(), ValueDistribution::uniform(0.0, 1.0)?),
        ("power_law_1.5".into(), ValueDistribution::power_law(1.5)?),
    ])
}

/// Every combination of distribution, seller utility, outside option and format.
pub fn lemma1_suite(points: usize) -> Result<Vec<InvarianceCase>, EquilibriumError> {
    let mut out = Vec::new();
    for (dname, dist) in lemma1_primitives()? {
        for (uname, rho) in [("risk_neutral", None), ("crra_0.5", Some(0.5))] {
            for v0 in [0.0, 0.2] {
                let prefs = match rho {
                    None => SellerPreferences::risk_neutral(v0),
                    Some(r) => SellerPreferences::crra(r, v0)?,
                };
                for format in [Format::FirstPrice, Format::SecondPrice] {
                    out.push(invariance_case(&dname, &dist, uname, &prefs, format, points)?);
                }
            }
        }
    }
    Ok(out)
}

fn invariance_case(
    dname: &str,
    dist: &ValueDistribution,
    uname: &str,
    prefs: &SellerPreferences,
    format: Format,
    points: usize,
) -> Result<InvarianceCase, EquilibriumError> {
    let mut argmax = Vec::new();
    let mut idx = Vec::new();
    let mut foc = Vec::new();
    for n in LEMMA1_COUNTS {
        let (i, a) = PayoffEvaluator::new(dist, prefs, format, n)?.grid_argmax(points);
        argmax.push((n, a));
        idx.push(i);
        let s = optimal_screening(dist, prefs, format, n, RegularityPolicy::Warn)?;
        foc.push((n, s.alpha, s.foc_residual));
    }
    let spread_steps = idx.iter().max().unwrap_or(&0) - idx.iter().min().unwrap_or(&0);
    let foc_ok = foc.iter().all(|f| f.2.abs() <= FOC_TOL);
    Ok(InvarianceCase {
        distribution: dname.into(),
        utility: uname.into(),
        outside_option: prefs.outside_option,
        format,
        argmax,
        spread_steps,
        foc,
        invariant: spread_steps <= 1,
        foc_ok,
    })
}

// ---------------------------------------------------------------------------
// The identification table.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Point,
    Set,
    NotIdentified,
}

impl CellStatus {
    fn symbol(self) -> &'static str {
        match self {
            CellStatus::Point => "✓",
            CellStatus::Set => "set-✓",
            CellStatus::NotIdentified => "×",
        }
    }
}

/// Rows of the conclusion table: how N behaves and what is observed.
pub const ROWS: [(&str, &str); 6] = [
    ("Fixed, known", "T"),
    ("Fixed, known", "T, L_invalid"),
    ("Fixed, unknown", "T, N_obs"),
    ("Varying, known", "T | T > R"),
    ("Varying, unknown", "T, N_obs"),
    ("Varying, unknown", "T, N_obs, L_invalid"),
];

/// Columns: (reserve FP, reserve SP, entry FP, entry SP).
pub const COLUMNS: [(Format, TruncationKind); 4] = [
    (Format::FirstPrice, TruncationKind::Reserve),
    (Format::SecondPrice, TruncationKind::Reserve),
    (Format::FirstPrice, TruncationKind::EntryCost),
    (Format::SecondPrice, TruncationKind::EntryCost),
];

use CellStatus::{NotIdentified as X, Point as P, Set as S};

/// Expected pattern of the conclusion table.
pub const EXPECTED: [[CellStatus; 4]; 6] =
    [[X, P, X, P], [P, P, P, P], [P, P, P, P], [P, P, S, S], [P, X, P, S], [P, S, P, S]];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub row: usize,
    pub format: Format,
    pub kind: TruncationKind,
    pub expected: CellStatus,
}

impl Cell {
    pub fn label(&self) -> String {
        let f = match self.format {
            Format::FirstPrice => "fp",
            Format::SecondPrice => "sp",
        };
        let k = match self.kind {
            TruncationKind::Reserve => "reserve",
            TruncationKind::EntryCost => "entry",
        };
        format!("row{}.{k}.{f}", self.row + 1)
    }
}

pub fn table_cells() -> Vec<Cell> {
    (0..6)
        .flat_map(|row| {
            COLUMNS.iter().enumerate().map(move |(c, &(format, kind))| Cell { row, format, kind, expected: EXPECTED[row][c] })
        })
        .collect()
}

/// Data-generating design of a table cell: uniform values throughout.
#[derive(Clone, Debug)]
struct CellDesign {
    dist: ValueDistribution,
    truncation: Truncation,
    /// One population per dataset.
    pops: Vec<PopulationSpec>,
    info: InfoStructure,
    analyst: AnalystView,
    /// True screening level (or pair of levels for two-dimensional sets).
    truth: Vec<f64>,
    cost: Option<f64>,
}

const RESERVE_FIXED: f64 = 0.5;
const RESERVE_VARYING: f64 = 0.3;
const COST_FIXED: f64 = 0.25;
const COST_VARYING: f64 = 0.2;

fn cell_design(cell: &Cell) -> Result<CellDesign, EquilibriumError> {
    let dist = ValueDistribution::uniform(0.0, 1.0)?;
    let mixed = || PopulationSpec::new(vec![(2, 0.5), (3, 0.5)]);
    let (pops, info, analyst) = match cell.row {
        0 => (vec![PopulationSpec::fixed(2)?], InfoStructure::PRICE_ONLY, known(&[2])),
        1 => (vec![PopulationSpec::fixed(2)?], InfoStructure::PRICE_ONLY.with_invalid_count(), known(&[2])),
        2 => (vec![PopulationSpec::fixed(2)?], InfoStructure::PRICE_ONLY.with_nobs(), AnalystView::default()),
        3 => (
            vec![PopulationSpec::fixed(3)?, PopulationSpec::fixed(2)?],
            InfoStructure::PRICE_ONLY.dropping_floor(),
            AnalystView { n_varies: true, known_n: vec![3, 2] },
        ),
        4 => (vec![mixed()?], InfoStructure::PRICE_ONLY.with_nobs(), AnalystView { n_varies: true, known_n: vec![] }),
        _ => (
            vec![mixed()?],
            InfoStructure::PRICE_ONLY.with_nobs().with_invalid_count(),
            AnalystView { n_varies: true, known_n: vec![] },
        ),
    };
    let varying_unknown = cell.row >= 4;
    let (truncation, truth, cost) = match cell.kind {
        TruncationKind::Reserve => {
            let a = if varying_unknown { RESERVE_VARYING } else { RESERVE_FIXED };
            (Truncation::Reserve { alpha0: a }, vec![a], None)
        }
        TruncationKind::EntryCost => {
            let f = if varying_unknown { COST_VARYING } else { COST_FIXED };
            let thr = |n| entry_threshold(&dist, n, f);
            let truth = match cell.row {
                3 => vec![thr(3)?, thr(2)?],
                4 | 5 if cell.format == Format::SecondPrice => vec![thr(3)?, thr(2)?],
                4 | 5 => vec![thr(3)?],
                _ => vec![thr(2)?],
            };
            (Truncation::EntryCost { cost: f }, truth, Some(f))
        }
    };
    Ok(CellDesign { dist, truncation, pops, info, analyst, truth, cost })
}

fn known(ns: &[u32]) -> AnalystView {
    AnalystView { n_varies: false, known_n: ns.to_vec() }
}

/// Tolerance on the recovered screening level.
pub fn alpha_tolerance(e: Estimator, format: Format) -> f64 {
    match (e, format) {
        (Estimator::BoundaryMatching, Format::FirstPrice) => 0.1,
        (Estimator::BoundaryMatching, Format::SecondPrice) | (Estimator::TailRatio, _) | (Estimator::EntryTailRatio, _) => {
            0.05
        }
        _ => 0.01,
    }
}

pub const V_TOL: f64 = 0.05;
/// Entry-cost tolerance as a fraction of the top value.
pub const F_TOL: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct CellOutcome {
    pub cell: String,
    pub expected: CellStatus,
    pub observed: CellStatus,
    pub estimator: Option<Estimator>,
    pub checks: Vec<Check>,
    pub message: Option<String>,
    pub pass: bool,
}

fn simulate_cell(d: &CellDesign, cell: &Cell, l: u64, seed: u64) -> Result<Vec<ObservedDataset>, EquilibriumError> {
    let design = AuctionDesign::new(cell.format, d.truncation, &d.dist)?;
    d.pops
        .iter()
        .enumerate()
        .map(|(i, pop)| simulate_observed(&d.dist, &design, pop, l, seed + i as u64, d.info))
        .collect()
}

fn estimate(
    cell: &Cell,
    d: &CellDesign,
    l: u64,
    seed: u64,
    opts: &IdentifyOptions,
) -> Result<(Estimator, Result<IdentificationResult, IdentificationError>), EquilibriumError> {
    let datasets = simulate_cell(d, cell, l, seed)?;
    let est = match route(cell.format, cell.kind, &d.info, &d.analyst) {
        Ok(e) => e,
        Err(err) => return Ok((Estimator::ReserveMass, Err(err))),
    };
    let mut opts = opts.clone();
    if opts.v_grid.is_none() && d.truth.len() == 1 {
        opts.v_grid = Some(default_grid(d.truth[0]));
    }
    Ok((est, identify(est, &datasets, &d.analyst, &opts)))
}

/// Whether a set estimate covers the truth within `steps` grid steps.
fn covers(alpha: &AlphaStar, truth: &[f64], slack: f64) -> bool {
    match (alpha, truth) {
        (AlphaStar::Point(a), [t, ..]) => (a - t).abs() <= slack,
        (AlphaStar::Set(iv), [t]) => iv.iter().any(|i| i.contains(*t, slack)),
        (AlphaStar::Region(r), [x, y]) => r.contains([*x, *y], slack),
        _ => false,
    }
}

/// Simulates a table cell at `l` auctions and checks the estimator against the truth.
pub fn run_cell(cell: &Cell, l: u64, small_l: u64, seed: u64, opts: &IdentifyOptions) -> Result<CellOutcome, EquilibriumError> {
    let d = cell_design(cell)?;
    let (est, res) = estimate(cell, &d, l, seed, opts)?;
    let label = cell.label();
    let mut checks = Vec::new();
    let (observed, message, estimator) = match &res {
        Err(IdentificationError::NotIdentified { proposition, reason }) => {
            (CellStatus::NotIdentified, Some(format!("{proposition}: {reason}")), None)
        }
        Err(e) => (cell.expected, Some(e.to_string()), Some(est)),
        Ok(r) => {
            let observed = match r.alpha_star {
                AlphaStar::Point(_) if cell.expected != CellStatus::Set => CellStatus::Point,
                _ => CellStatus::Set,
            };
            match observed {
                CellStatus::Point => {
                    let a = r.alpha_star.point().unwrap_or(f64::NAN);
                    checks.push(Check::new(format!("{label}.alpha"), a, d.truth[0], alpha_tolerance(est, cell.format)));
                    checks.push(Check::at_most(format!("{label}.max_v_error"), r.max_value_error(|x| d.dist.value(x)), V_TOL));
                    if let Some(f) = d.cost {
                        let tol = F_TOL * d.dist.value(1.0);
                        checks.push(Check::new(format!("{label}.entry_cost"), r.f.unwrap_or(f64::NAN), f, tol));
                    }
                }
                _ => {
                    let step = if d.truth.len() == 2 { opts.grid_step_2d } else { opts.grid_step_1d };
                    let slack = step * d.truth.len() as f64 + 1e-9;
                    let hit = covers(&r.alpha_star, &d.truth, slack);
                    checks.push(Check {
                        name: format!("{label}.covers_truth"),
                        observed: hit as u8 as f64,
                        target: 1.0,
                        tolerance: 0.0,
                        pass: hit,
                    });
                    let small = match estimate(cell, &d, small_l, seed, opts)?.1 {
                        Ok(s) => s.alpha_star.size(),
                        Err(_) => f64::INFINITY,
                    };
                    let big = r.alpha_star.size();
                    checks.push(Check {
                        name: format!("{label}.set_shrinks"),
                        observed: big,
                        target: small,
                        tolerance: 0.0,
                        pass: big <= small,
                    });
                }
            }
            (observed, None, Some(est))
        }
    };
    let pass = observed == cell.expected && res.as_ref().map_or(observed == CellStatus::NotIdentified, |_| true)
        && checks.iter().all(|c| c.pass);
    Ok(CellOutcome { cell: label, expected: cell.expected, observed, estimator, checks, message, pass })
}

/// Runs every cell of the table.
pub fn roundtrip_suite(l: u64, small_l: u64, seed: u64, opts: &IdentifyOptions) -> Result<Vec<CellOutcome>, EquilibriumError> {
    table_cells().iter().map(|c| run_cell(c, l, small_l, seed, opts)).collect()
}

/// Human-readable grid mirroring the conclusion table with observed outcomes.
pub fn render_table(outcomes: &[CellOutcome]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<18} {:<22} {:>14} {:>14} {:>14} {:>14}\n",
        "N", "data", "reserve FP", "reserve SP", "entry FP", "entry SP"
    ));
    for (r, (n, data)) in ROWS.iter().enumerate() {
        s.push_str(&format!("{n:<18} {data:<22}"));
        for c in 0..4 {
            let cell = outcomes.get(r * 4 + c);
            let txt = match cell {
                Some(o) => format!("{}{}", o.observed.symbol(), if o.pass { "" } else { " (!)" }),
                None => "-".into(),
            };
            s.push_str(&format!(" {txt:>14}"));
        }
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------------
// Derivative-factor arbitration for the first-price value inversion.

#[derive(Clone, Debug, Serialize)]
pub struct FactorTrial {
    pub cell: String,
    pub chain_rule_error: f64,
    pub printed_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Arbitration {
    pub trials: Vec<FactorTrial>,
    pub tolerance: f64,
    /// Variants meeting the tolerance in every trial.
    pub meets: Vec<DerivativeFactor>,
}

/// First-price fixed-N cells in which the derivative factor enters the value map.
pub fn arbitration_cells() -> Vec<Cell> {
    table_cells()
        .into_iter()
        .filter(|c| c.format == Format::FirstPrice && (c.row == 1 || c.row == 2))
        .collect()
}

/// Round trip under both derivative factors.
pub fn derivative_factor_arbitration(l: u64, seed: u64) -> Result<Arbitration, EquilibriumError> {
    let mut trials = Vec::new();
    for cell in arbitration_cells() {
        let d = cell_design(&cell)?;
        let mut errs = [f64::NAN; 2];
        for (slot, factor) in [DerivativeFactor::ChainRule, DerivativeFactor::Printed].into_iter().enumerate() {
            let opts = IdentifyOptions { derivative_factor: factor, ..IdentifyOptions::default() };
            if let (_, Ok(r)) = estimate(&cell, &d, l, seed, &opts)? {
                errs[slot] = r.max_value_error(|x| d.dist.value(x));
            }
        }
        trials.push(FactorTrial { cell: cell.label(), chain_rule_error: errs[0], printed_error: errs[1] });
    }
    let mut meets = Vec::new();
    if trials.iter().all(|t| t.chain_rule_error <= V_TOL) {
        meets.push(DerivativeFactor::ChainRule);
    }
    if trials.iter().all(|t| t.printed_error <= V_TOL) {
        meets.push(DerivativeFactor::Printed);
    }
    Ok(Arbitration { trials, tolerance: V_TOL, meets })
}

// ---------------------------------------------------------------------------
// Non-identification demonstrations.

pub const TWIN_LEVELS: [f64; 3] = [0.2, 0.35, 0.65];
pub const TWIN_KS_TOL: f64 = 0.01;
pub const TWIN_MIN_DISTANCE: f64 = 0.05;

/// First-price twins of a two-bidder uniform model with screening level 1/2.
pub fn twin_checks(l: u64, seed: u64) -> Result<Vec<Check>, OracleError> {
    let dist = ValueDistribution::uniform(0.0, 1.0).map_err(|e| OracleError::InvalidParameter(e.to_string()))?;
    let design = AuctionDesign::new(Format::FirstPrice, Truncation::Reserve { alpha0: 0.5 }, &dist)?;
    let ds = simulate_observed(&dist, &design, &PopulationSpec::fixed(2)?, l, seed, InfoStructure::PRICE_ONLY)?;
    let q = EmpiricalQuantile::new(ds.prices())?;
    let mut checks = Vec::new();
    for a2 in TWIN_LEVELS {
        let twin = construct_fp_twin(&q, 2, a2, TWIN_POINTS)?;
        checks.push(Check {
            name: format!("twin_{a2}.valid"),
            observed: twin.is_valid() as u8 as f64,
            target: 1.0,
            tolerance: 0.0,
            pass: twin.is_valid(),
        });
        let prices = twin.simulate_prices(l, seed + 1);
        checks.push(Check::at_most(format!("twin_{a2}.ks_prices"), ks_distance(&prices, q.samples())?, TWIN_KS_TOL));
        let gap = twin.sup_distance(|a| dist.value(a));
        checks.push(Check { name: format!("twin_{a2}.value_gap"), observed: gap, target: TWIN_MIN_DISTANCE, tolerance: 0.0, pass: gap > TWIN_MIN_DISTANCE });
    }
    Ok(checks)
}

/// Counterexample statistics plus the twin demonstrations.
pub fn counterexample_suite(l_counter: u64, l_twin: u64, seed: u64) -> Result<Vec<Check>, OracleError> {
    let mut checks = prop5_counterexample(l_counter, seed)?.checks;
    checks.extend(twin_checks(l_twin, seed)?);
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Equilibrium self-consistency and the three-auction replay.

pub const EQ_RESIDUAL_TOL: f64 = 1e-6;
pub const ENTRY_BID_TOL: f64 = 1e-8;

/// Fourth-order centered difference.
fn derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Residual of `b + a b' / (N - 1) = V` on interior grids, the entry boundary bid,
/// and a best-response search for the entry game.
pub fn equilibrium_checks() -> Result<Vec<Check>, EquilibriumError> {
    let mut checks = Vec::new();
    let dists = [("uniform", ValueDistribution::uniform(0.0, 1.0)?), ("power_law_1.5", ValueDistribution::power_law(1.5)?)];
    for (name, dist) in &dists {
        for n in [2u32, 3, 5] {
            let cost = 0.1;
            let designs: [(&str, f64, Box<dyn Fn(f64) -> f64>); 2] = [
                ("reserve", 0.3, Box::new(move |a| fp_bid_reserve(dist, n, 0.3, a).unwrap_or(f64::NAN))),
                ("entry", entry_threshold(dist, n, cost)?, Box::new(move |a| fp_bid_entry(dist, n, cost, a).unwrap_or(f64::NAN))),
            ];
            for (kind, lo, bid) in designs.iter() {
                let h = 1e-3;
                let worst = (1..100)
                    .map(|k| k as f64 / 100.0)
                    .filter(|&a| a > lo + 3.0 * h && a < 1.0 - 3.0 * h)
                    .map(|a| (bid(a) + a * derivative(bid, a, h) / (n - 1) as f64 - dist.value(a)).abs())
                    .fold(0.0, f64::max);
                checks.push(Check::at_most(format!("{name}.{kind}.n{n}.bid_ode_residual"), worst, EQ_RESIDUAL_TOL));
            }
            let at = entry_threshold(dist, n, cost)?;
            checks.push(Check::at_most(format!("{name}.entry.n{n}.boundary_bid"), fp_bid_entry(dist, n, cost, at)?.abs(), ENTRY_BID_TOL));
        }
    }
    checks.extend(entry_best_response(1000)?);
    Ok(checks)
}

/// Best responses of a uniform two-bidder entry game with cost 1/4 on a report grid.
pub fn entry_best_response(points: usize) -> Result<Vec<Check>, EquilibriumError> {
    let dist = ValueDistribution::uniform(0.0, 1.0)?;
    let (n, cost) = (2u32, 0.25);
    let threshold = entry_threshold(&dist, n, cost)?;
    let step = (1.0 - threshold) / points as f64;
    let reports: Vec<(f64, f64)> = (0..=points)
        .map(|i| {
            let beta = threshold + step * i as f64;
            fp_bid_entry(&dist, n, cost, beta).map(|b| (beta, b))
        })
        .collect::<Result<_, _>>()?;
    let payoff = |alpha: f64, (beta, b): (f64, f64)| (dist.value(alpha) - b) * beta.powi(n as i32 - 1) - cost;
    let mut checks = Vec::new();
    for alpha in [0.6, 0.75, 0.9] {
        let best = reports
            .iter()
            .copied()
            .max_by(|x, y| payoff(alpha, *x).total_cmp(&payoff(alpha, *y)))
            .map_or(f64::NAN, |r| r.0);
        checks.push(Check::new(format!("entry_best_response_at_{alpha}"), best, alpha, step + 1e-12));
    }
    let top = reports.iter().map(|&r| payoff(0.4, r)).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check { name: "entry_payoff_below_threshold".into(), observed: top, target: 0.0, tolerance: 0.0, pass: top < 0.0 });
    Ok(checks)
}

/// Values on a 0..4 scale: auctions with bidders (3, 4), (2, 3) and (1, 2), reserve 2.5.
pub const WORKED_VALUES: [[f64; 2]; 3] = [[3.0, 4.0], [2.0, 3.0], [1.0, 2.0]];
pub const WORKED_RESERVE: f64 = 2.5;

/// Replays the three-auction example under truthful bidding and compares the
/// observed rows exactly.
pub fn worked_example_checks() -> Result<Vec<Check>, EquilibriumError> {
    let dist = ValueDistribution::uniform(0.0, 4.0)?;
    let alpha0 = dist.type_of_value(WORKED_RESERVE);
    let types: Vec<Vec<f64>> = WORKED_VALUES.iter().map(|a| a.iter().map(|&v| dist.type_of_value(v)).collect()).collect();
    let mut checks = Vec::new();
    for (format, tag, prices) in [(Format::FirstPrice, "fp", [4.0, 3.0]), (Format::SecondPrice, "sp", [3.0, 2.5])] {
        let design = AuctionDesign::new(format, Truncation::Reserve { alpha0 }, &dist)?;
        let sim = simulate_from_types(&dist, &design, &types, BidRule::Truthful)?;
        let ds = observe(&sim, InfoStructure::PRICE_ONLY.with_nobs().with_invalid_count());
        let exact = |name: String, observed: f64, target: f64| Check { name, observed, target, tolerance: 0.0, pass: observed == target };
        checks.push(exact(format!("{tag}.valid_auctions"), ds.len() as f64, 2.0));
        for (i, (row, p)) in ds.rows.iter().zip(prices).enumerate() {
            checks.push(exact(format!("{tag}.price_{}", i + 1), row.price, p));
            checks.push(exact(format!("{tag}.n_obs_{}", i + 1), row.n_obs.map_or(f64::NAN, f64::from), [2.0, 1.0][i]));
        }
        checks.push(exact(format!("{tag}.l_invalid"), ds.l_invalid.map_or(f64::NAN, |x| x as f64), 1.0));
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// Suite reports.

/// Sample sizes used by the suites.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SuiteSizes {
    pub lemma1_points: usize,
    pub roundtrip_l: u64,
    pub roundtrip_small_l: u64,
    pub counterexample_l: u64,
    pub twin_l: u64,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self { lemma1_points: 10_001, roundtrip_l: 1_000_000, roundtrip_small_l: 10_000, counterexample_l: 200_000, twin_l: 1_000_000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub seed: u64,
    pub sizes: SuiteSizes,
    pub pass: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub invariance: Vec<InvarianceCase>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<CellOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arbitration: Option<Arbitration>,
    /// Conclusion table with observed outcomes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
}

pub fn run_suite(suite: Suite, seed: u64, sizes: SuiteSizes, opts: &IdentifyOptions) -> Result<VerifyReport, OracleError> {
    let mut report = VerifyReport {
        suite,
        seed,
        sizes,
        pass: false,
        checks: Vec::new(),
        invariance: Vec::new(),
        cells: Vec::new(),
        arbitration: None,
        table: None,
    };
    match suite {
        Suite::Lemma1 => {
            report.invariance = lemma1_suite(sizes.lemma1_points)?;
            for c in &report.invariance {
                let tag = format!("{}.{}.v0_{}.{:?}", c.distribution, c.utility, c.outside_option, c.format);
                let pass_spread = Check { name: format!("{tag}.argmax_spread_steps"), observed: c.spread_steps as f64, target: 0.0, tolerance: 1.0, pass: c.invariant };
                let worst = c.foc.iter().map(|f| f.2.abs()).fold(0.0, f64::max);
                report.checks.push(pass_spread);
                report.checks.push(Check::at_most(format!("{tag}.foc_residual"), worst, FOC_TOL));
            }
        }
        Suite::Counterexamples => report.checks = counterexample_suite(sizes.counterexample_l, sizes.twin_l, seed)?,
        Suite::Roundtrip => {
            for cell in table_cells().iter().filter(|c| c.expected != CellStatus::NotIdentified) {
                report.cells.push(run_cell(cell, sizes.roundtrip_l, sizes.roundtrip_small_l, seed, opts)?);
            }
            let arb = derivative_factor_arbitration(sizes.roundtrip_l, seed)?;
            report.checks.push(Check {
                name: "derivative_factor_chain_rule_meets_tolerance".into(),
                observed: arb.trials.iter().map(|t| t.chain_rule_error).fold(0.0, f64::max),
                target: 0.0,
                tolerance: V_TOL,
                pass: arb.meets.contains(&DerivativeFactor::ChainRule),
            });
            report.arbitration = Some(arb);
        }
        Suite::Table => {
            report.cells = roundtrip_suite(sizes.roundtrip_l, sizes.roundtrip_small_l, seed, opts)?;
            report.table = Some(render_table(&report.cells));
        }
    }
    report.pass = report.checks.iter().all(|c| c.pass) && report.cells.iter().all(|c| c.pass);
    Ok(report)
}
