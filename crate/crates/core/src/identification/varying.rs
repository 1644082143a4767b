//! Varying number of bidders: boundary matching across two known counts and the
//! upper-tail ratio for unknown populations.

use crate::empirics::{count_stats, Coordinate, EmpiricalQuantile, FitSpec};
use crate::equilibrium::{Format, TruncationKind};
use crate::error::IdentificationError;
use crate::numerics::{invert_monotone, is_strictly_monotone, second_order_cdf};
use crate::simulator::ObservedDataset;

use super::fixed::{fp_value, sp_value};
use super::{
    quantile_of, require, sets, value_grid, AlphaStar, Diagnostics, Estimator,
    IdentificationResult, IdentifyOptions,
};

/// Points required in the tail-ratio value fit.
const TAIL_FIT_POINTS: usize = 2000;
const MIN_GROUP: usize = 50;

/// Drops the atom at the lowest price when more than one row sits on it.
fn strip_floor_mass(q: &EmpiricalQuantile, eps: f64) -> Vec<f64> {
    let floor = q.min();
    let atom = q.mass_near(floor, eps) * q.len() as f64;
    if atom > 1.5 {
        q.samples().iter().copied().filter(|&p| p > floor + eps).collect()
    } else {
        q.samples().to_vec()
    }
}

/// Boundary-matching ratio for second-price data.
fn sp_match(n1: u32, n2: u32, a: f64) -> f64 {
    a.powi((n1 - n2) as i32) * (1.0 - second_order_cdf(n2, a)) / (1.0 - second_order_cdf(n1, a))
}

/// Boundary-matching ratio for first-price data.
fn fp_match(n1: u32, n2: u32, a: f64) -> f64 {
    a.powi((n1 - n2) as i32) * (1.0 - a.powi(n2 as i32)) / (1.0 - a.powi(n1 as i32))
}

/// Second derivative of the price quantile at zero, from a fit without a linear term.
fn curvature_at_zero(q: &EmpiricalQuantile, window: f64) -> Result<f64, IdentificationError> {
    let fit = q.local_fit(&FitSpec {
        coordinate: Coordinate::Probability,
        center: 0.0,
        half_width: window,
        powers: &[0, 2, 3, 4],
        min_points: MIN_GROUP,
        anchor: None,
    })?;
    Ok(fit.derivative(2))
}

fn slope_at_zero(q: &EmpiricalQuantile, window: f64) -> Result<f64, IdentificationError> {
    Ok(q.boundary_fit(false, window)?.derivative(1))
}

/// Root of the boundary-matching equation between the larger-N (`q1`) and smaller-N prices.
#[allow(clippy::too_many_arguments)]
fn matching_root(
    q1: &EmpiricalQuantile,
    q2: &EmpiricalQuantile,
    n1: u32,
    n2: u32,
    bw1: f64,
    bw2: f64,
    format: Format,
    diag: &mut Diagnostics,
) -> Result<f64, IdentificationError> {
    let (f, target, cap): (fn(u32, u32, f64) -> f64, f64, f64) = match format {
        Format::SecondPrice => {
            let d1 = slope_at_zero(q1, 2.0 * bw1)?;
            let d2 = slope_at_zero(q2, 2.0 * bw2)?;
            diag.residual("boundary_slope_high_n", d1);
            diag.residual("boundary_slope_low_n", d2);
            require(d1 > 0.0, || "boundary slope of the larger-N prices is not positive".into())?;
            let c = (n2 * (n2 - 1)) as f64 / (n1 * (n1 - 1)) as f64;
            (sp_match, c * d2 / d1, c)
        }
        Format::FirstPrice => {
            let c1 = curvature_at_zero(q1, 2.0 * bw1)?;
            let c2 = curvature_at_zero(q2, 2.0 * bw2)?;
            diag.residual("boundary_curvature_high_n", c1);
            diag.residual("boundary_curvature_low_n", c2);
            require(c1 > 0.0, || "boundary curvature of the larger-N prices is not positive".into())?;
            let (f1, f2) = (n1 as f64, n2 as f64);
            let ratio = f2 * f2 * (f1 - 1.0) / (f1 * f1 * (f2 - 1.0)) * c2 / c1;
            (fp_match, ratio.max(0.0).sqrt(), f2 / f1)
        }
    };
    require(is_strictly_monotone(|a| f(n1, n2, a), 1e-6, 1.0 - 1e-6, 1000, true), || {
        "boundary-matching ratio is not monotone".into()
    })?;
    diag.residual("matching_target", target);
    let (a, clipped) = invert_monotone(|a| f(n1, n2, a), target, 0.0, 1.0 - 1e-5, 1e-12);
    if clipped {
        diag.warn(format!("matching target {target} outside the attainable range (0, {cap}); clamped"));
    }
    Ok(a)
}

/// Two datasets with different known bidder counts under a common reserve.
pub fn id_vary_known(
    ds_a: &ObservedDataset,
    ds_b: &ObservedDataset,
    n_a: u32,
    n_b: u32,
    format: Format,
    opts: &IdentifyOptions,
) -> Result<IdentificationResult, IdentificationError> {
    require(n_a != n_b && n_a.min(n_b) >= 2, || "need two different known counts of at least 2".into())?;
    require(ds_a.format == format && ds_b.format == format, || "datasets must share the auction format".into())?;
    let ((hi, n1), (lo, n2)) = if n_a > n_b { ((ds_a, n_a), (ds_b, n_b)) } else { ((ds_b, n_b), (ds_a, n_a)) };
    let mut diag = Diagnostics::default();
    diag.choice("quantile_convention", "type-7 linear interpolation");
    let eps = opts.mass_eps.unwrap_or(0.0);
    let q1 = quantile_of(strip_floor_mass(&quantile_of(hi.prices(), "first dataset")?, eps), "first dataset")?;
    let q2 = quantile_of(strip_floor_mass(&quantile_of(lo.prices(), "second dataset")?, eps), "second dataset")?;
    let tol = 0.02 * q1.max().max(q2.max()).abs().max(1e-12);
    if (q1.min() - q2.min()).abs() > tol {
        return Err(IdentificationError::Inconsistent(format!(
            "lowest prices {} and {} differ; the reserve must be common",
            q1.min(),
            q2.min()
        )));
    }
    diag.residual("floor_gap", q1.min() - q2.min());
    let bw1 = opts.bandwidth_for(q1.len());
    let bw2 = opts.bandwidth_for(q2.len());
    diag.bandwidth("quantile_derivative_high_n", bw1);
    diag.bandwidth("quantile_derivative_low_n", bw2);
    let factor = opts.derivative_factor;
    let value = |q: &EmpiricalQuantile, n: u32, a: f64, alpha: f64, bw: f64| match format {
        Format::FirstPrice => fp_value(q, n, a, alpha, bw, factor),
        Format::SecondPrice => sp_value(q, n, a, alpha),
    };
    let curve_gap = |a: f64| {
        (0..=80)
            .map(|i| a + (1.0 - a) * (0.1 + 0.01 * i as f64))
            .map(|alpha| (value(&q1, n1, a, alpha, bw1) - value(&q2, n2, a, alpha, bw2)).abs())
            .fold(0.0, f64::max)
    };
    let gap_at_zero = curve_gap(0.0);
    diag.residual("zero_threshold_curve_gap", gap_at_zero);
    let candidate = matching_root(&q1, &q2, n1, n2, bw1, bw2, format, &mut diag);
    let gap_at_root = candidate.as_ref().map(|&a| curve_gap(a)).unwrap_or(f64::INFINITY);
    // The zero-threshold branch wins whenever the two curves agree at least as well
    // there as at the boundary-matching root.
    let a = if gap_at_zero <= gap_at_root {
        diag.choice("threshold_branch", "curves agree at zero threshold");
        0.0
    } else {
        diag.choice("threshold_branch", "boundary matching");
        candidate?
    };
    let chosen_gap = gap_at_zero.min(gap_at_root);
    if chosen_gap > opts.tau_eq {
        diag.warn(format!("value curves differ by {chosen_gap} across the two bidder counts"));
    }
    let grid = opts.grid_from(a);
    let v_grid = value_grid(&grid, |alpha| value(&q1, n1, a, alpha, bw1), &mut diag);
    let overid = grid
        .iter()
        .zip(&v_grid)
        .map(|(&alpha, &(_, v))| (v - value(&q2, n2, a, alpha, bw2)).abs())
        .fold(0.0, f64::max);
    diag.residual("overidentification", overid);
    Ok(IdentificationResult {
        proposition: Estimator::BoundaryMatching,
        alpha_star: AlphaStar::Point(a),
        n: Some(n1),
        f: None,
        v_grid,
        v_band: None,
        diagnostics: diag,
    })
}

/// Price samples of the two largest observed-count groups and their share ratio.
struct TopGroups {
    n_bar: u32,
    top: EmpiricalQuantile,
    sub: EmpiricalQuantile,
    /// `share(N - 1) / share(N)`.
    ratio: f64,
}

fn top_groups(ds: &ObservedDataset, diag: &mut Diagnostics) -> Result<TopGroups, IdentificationError> {
    let stats = count_stats(ds)?;
    require(stats.counts.len() >= 2, || "need at least two distinct observed bidder counts".into())?;
    let n_bar = stats.max_k;
    require(n_bar >= 2, || "largest observed bidder count must be at least 2".into())?;
    let sub_share = stats.share(n_bar - 1);
    require(sub_share > 0.0, || format!("no auctions with {} observed bidders", n_bar - 1))?;
    let top = quantile_of(ds.prices_where(|k| k == n_bar), "the largest bidder-count group")?;
    let sub = quantile_of(ds.prices_where(|k| k == n_bar - 1), "the second-largest bidder-count group")?;
    for (name, q) in [("largest", &top), ("second-largest", &sub)] {
        if q.len() < MIN_GROUP {
            diag.warn(format!("only {} auctions in the {name} bidder-count group", q.len()));
        }
    }
    let ratio = sub_share / stats.share(n_bar);
    diag.residual("share_ratio", ratio);
    Ok(TopGroups { n_bar, top, sub, ratio })
}

/// Screening level from the population weight of the largest count and the share ratio.
fn threshold_from_weight(g: &TopGroups, p: f64, diag: &mut Diagnostics) -> Result<f64, IdentificationError> {
    let n = g.n_bar as f64;
    require(is_strictly_monotone(|a| a / (1.0 - a), 0.0, 1.0 - 1e-9, 1000, true), || {
        "odds map not monotone".into()
    })?;
    let x = p * g.ratio;
    let a = x / (n + x);
    diag.residual("odds_equation", n * a / (1.0 - a) - x);
    Ok(a)
}

fn clamp_weight(p: f64, diag: &mut Diagnostics) -> f64 {
    if !p.is_finite() || p <= 0.0 {
        diag.warn(format!("tail-ratio weight {p} not positive; clamped"));
        1e-9
    } else if p > 1.0 {
        diag.warn(format!("tail-ratio weight {p} exceeds one; clamped"));
        1.0
    } else {
        p
    }
}

/// Value at `alpha` from a local quadratic in `s = u^{1/N}` of the largest group.
fn tail_value(g: &TopGroups, a: f64, alpha: f64, half_width: f64, anchored: bool) -> f64 {
    let n = g.n_bar;
    let w = ((alpha - a) / (1.0 - a)).clamp(0.0, 1.0);
    let fit = g.top.local_fit(&FitSpec {
        coordinate: Coordinate::Root(n),
        center: w,
        half_width,
        powers: &[0, 1, 2],
        min_points: TAIL_FIT_POINTS,
        anchor: anchored.then_some((0.0, 0.0)),
    });
    match fit {
        Ok(fit) => fit.value() + alpha / ((n - 1) as f64 * (1.0 - a)) * fit.derivative(1),
        Err(_) => g.top.eval(w.powi(n as i32)),
    }
}

fn tail_choices(diag: &mut Diagnostics, half_width: f64) {
    diag.choice("quantile_convention", "type-7 linear interpolation");
    diag.choice("value_fit", "local quadratic in u^(1/N) over the largest group, at least 2000 points");
    diag.choice("derivative_factor", "alpha / (1 - a), exact for this mapping");
    diag.bandwidth("value_fit_half_width", half_width);
}

/// First-price, reserve, varying unknown N.
pub fn id_fp_vary_unknown(ds: &ObservedDataset, opts: &IdentifyOptions) -> Result<IdentificationResult, IdentificationError> {
    require(ds.format == Format::FirstPrice, || "tail-ratio estimator needs first-price data".into())?;
    let mut diag = Diagnostics::default();
    let g = top_groups(ds, &mut diag)?;
    let n = g.n_bar as f64;
    let bw_top = opts.bandwidth_for(g.top.len());
    let bw_sub = opts.bandwidth_for(g.sub.len());
    tail_choices(&mut diag, bw_top);
    diag.bandwidth("boundary_slope_at_1_top", 2.0 * bw_top);
    diag.bandwidth("boundary_slope_at_1_sub", 2.0 * bw_sub);
    let cut = g.top.eval(1.0 - opts.tail_delta);
    let p = if g.sub.max() < cut {
        diag.choice("tail_weight", "second group never reaches the upper tail of the largest group");
        0.0
    } else {
        let d_top = g.top.boundary_fit(true, 2.0 * bw_top)?.derivative(1);
        let d_sub = g.sub.boundary_fit(true, 2.0 * bw_sub)?.derivative(1);
        clamp_weight(n * d_top / ((n - 1.0) * d_sub), &mut diag)
    };
    diag.residual("tail_weight", p);
    let a = threshold_from_weight(&g, p, &mut diag)?;
    let grid = opts.grid_from(a);
    let v_grid = value_grid(&grid, |alpha| tail_value(&g, a, alpha, bw_top, false), &mut diag);
    Ok(IdentificationResult {
        proposition: Estimator::TailRatio,
        alpha_star: AlphaStar::Point(a),
        n: Some(g.n_bar),
        f: None,
        v_grid,
        v_band: None,
        diagnostics: diag,
    })
}

/// Entry cost, varying unknown N.
pub fn id_entry_vary_unknown(
    ds: &ObservedDataset,
    format: Format,
    opts: &IdentifyOptions,
) -> Result<IdentificationResult, IdentificationError> {
    require(ds.truncation_kind == TruncationKind::EntryCost, || "entry-cost estimator needs entry-cost data".into())?;
    require(ds.format == format, || "dataset format does not match".into())?;
    if format == Format::SecondPrice {
        return sets::sp_entry_tail_set(ds, opts);
    }
    let mut diag = Diagnostics::default();
    let g = top_groups(ds, &mut diag)?;
    let n = g.n_bar;
    let bw_top = opts.bandwidth_for(g.top.len());
    tail_choices(&mut diag, bw_top);
    let t = g.top.eval(1.0 - opts.tail_delta);
    diag.choice("tail_weight", format!("survival ratio at the {} quantile of the largest group", 1.0 - opts.tail_delta));
    let expo = (n - 1) as f64 / n as f64;
    let denom = 1.0 - (1.0 - g.top.survival(t)).powf(expo);
    let p = clamp_weight(g.sub.survival(t) / denom, &mut diag);
    diag.residual("tail_weight", p);
    diag.residual("top_bid_at_one", g.top.max());
    let a = threshold_from_weight(&g, p, &mut diag)?;
    let grid = opts.grid_from(a);
    let v_grid = value_grid(&grid, |alpha| tail_value(&g, a, alpha, bw_top, true), &mut diag);
    let xs: Vec<f64> = [0.05, 0.10, 0.15, 0.20].iter().map(|d| (a + d).min(0.95)).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| tail_value(&g, a, x, bw_top, true)).collect();
    let v_at_threshold = linear_extrapolate(&xs, &ys, a);
    diag.choice("threshold_value", "linear extrapolation of recovered values at a + 0.05..0.20");
    Ok(IdentificationResult {
        proposition: Estimator::EntryTailRatio,
        alpha_star: AlphaStar::Point(a),
        n: Some(n),
        f: Some(v_at_threshold.max(0.0) * a.powi(n as i32 - 1)),
        v_grid,
        v_band: None,
        diagnostics: diag,
    })
}

/// Least-squares line through `(xs, ys)` evaluated at `x`.
fn linear_extrapolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return my;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(a, b)| (a - mx) * (b - my)).sum();
    my + sxy / sxx * (x - mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ValueDistribution;
    use crate::equilibrium::{AuctionDesign, Truncation};
    use crate::simulator::{simulate_observed, InfoStructure, PopulationSpec};

    fn unif() -> ValueDistribution {
        ValueDistribution::uniform(0.0, 1.0).unwrap()
    }

    fn data(format: Format, tr: Truncation, pop: &PopulationSpec, l: u64, seed: u64, info: InfoStructure) -> ObservedDataset {
        let d = AuctionDesign::new(format, tr, &unif()).unwrap();
        simulate_observed(&unif(), &d, pop, l, seed, info).unwrap()
    }

    #[test]
    fn matching_ratios_are_increasing() {
        for (n1, n2) in [(3, 2), (5, 3), (6, 2)] {
            assert!(is_strictly_monotone(|a| sp_match(n1, n2, a), 1e-6, 1.0 - 1e-6, 1000, true));
            assert!(is_strictly_monotone(|a| fp_match(n1, n2, a), 1e-6, 1.0 - 1e-6, 1000, true));
        }
        assert!((fp_match(3, 2, 1.0 - 1e-9) - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn extrapolation_is_exact_for_lines() {
        assert!((linear_extrapolate(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0], 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_matching_second_price() {
        let info = InfoStructure::PRICE_ONLY.dropping_floor();
        let tr = Truncation::Reserve { alpha0: 0.5 };
        let a = data(Format::SecondPrice, tr, &PopulationSpec::fixed(3).unwrap(), 500_000, 3, info);
        let b = data(Format::SecondPrice, tr, &PopulationSpec::fixed(2).unwrap(), 500_000, 4, info);
        let r = id_vary_known(&a, &b, 3, 2, Format::SecondPrice, &IdentifyOptions::default()).unwrap();
        assert!((r.alpha_star.point().unwrap() - 0.5).abs() < 0.05, "{:?} {:?}", r.alpha_star, r.diagnostics);
    }

    #[test]
    fn boundary_matching_nonbinding() {
        let info = InfoStructure::PRICE_ONLY.dropping_floor();
        let tr = Truncation::Reserve { alpha0: 0.0 };
        let a = data(Format::SecondPrice, tr, &PopulationSpec::fixed(3).unwrap(), 200_000, 3, info);
        let b = data(Format::SecondPrice, tr, &PopulationSpec::fixed(2).unwrap(), 200_000, 4, info);
        let r = id_vary_known(&a, &b, 3, 2, Format::SecondPrice, &IdentifyOptions::default()).unwrap();
        assert_eq!(r.alpha_star.point(), Some(0.0));
    }

    #[test]
    fn tail_ratio_first_price() {
        let pop = PopulationSpec::new(vec![(2, 0.5), (3, 0.5)]).unwrap();
        let ds = data(Format::FirstPrice, Truncation::Reserve { alpha0: 0.3 }, &pop, 1_000_000, 5, InfoStructure::PRICE_ONLY.with_nobs());
        let r = id_fp_vary_unknown(&ds, &IdentifyOptions::default()).unwrap();
        assert!((r.alpha_star.point().unwrap() - 0.3).abs() < 0.05, "{:?}", r.alpha_star);
        assert!(r.max_value_error(|a| a) < 0.05);
        let zero = data(Format::FirstPrice, Truncation::Reserve { alpha0: 0.0 }, &pop, 200_000, 5, InfoStructure::PRICE_ONLY.with_nobs());
        let r = id_fp_vary_unknown(&zero, &IdentifyOptions::default()).unwrap();
        assert!(r.alpha_star.point().unwrap() < 0.02);
    }

    #[test]
    fn tail_ratio_entry_first_price() {
        let pop = PopulationSpec::new(vec![(2, 0.5), (3, 0.5)]).unwrap();
        let ds = data(Format::FirstPrice, Truncation::EntryCost { cost: 0.2 }, &pop, 1_000_000, 6, InfoStructure::PRICE_ONLY.with_nobs());
        let r = id_entry_vary_unknown(&ds, Format::FirstPrice, &IdentifyOptions::default()).unwrap();
        assert!((r.f.unwrap() - 0.2).abs() < 0.05, "{:?}", r.f);
    }
}
