//! Set estimators: grid searches whose acceptance band is the set tolerance plus
//! a delete-group jackknife standard error.

use nalgebra::{DMatrix, DVector};

use crate::empirics::{count_stats, EmpiricalQuantile};
use crate::equilibrium::{Format, TruncationKind};
use crate::error::IdentificationError;
use crate::numerics::{binomial, second_order_cdf};
use crate::simulator::ObservedDataset;

use super::fixed::{fp_value, sp_value};
use super::{
    quantile_of, require, value_grid, AlphaStar, Diagnostics, Estimator, IdentificationResult, IdentifyOptions,
    Interval, Region,
};

/// Jackknife standard errors from delete-one-group replicates, one vector per fold.
pub fn jackknife_se(replicates: &[Vec<f64>]) -> Vec<f64> {
    let k = replicates.len();
    let Some(first) = replicates.first() else {
        return Vec::new();
    };
    if k < 2 {
        return vec![0.0; first.len()];
    }
    let kf = k as f64;
    (0..first.len())
        .map(|j| {
            let mean = replicates.iter().map(|r| r[j]).sum::<f64>() / kf;
            let ss: f64 = replicates.iter().map(|r| (r[j] - mean).powi(2)).sum();
            ((kf - 1.0) / kf * ss).sqrt()
        })
        .collect()
}

/// Residuals and their scales at one grid point.
type Residuals = Vec<(f64, f64)>;

/// Accepts the grid points whose residuals all fall inside `eps * scale + z * se`.
fn accept<S, P: Copy>(
    full: &S,
    folds: &[S],
    points: &[P],
    residuals: impl Fn(&S, P) -> Option<Residuals>,
    opts: &IdentifyOptions,
) -> Vec<(P, f64)> {
    points
        .iter()
        .filter_map(|&pt| {
            let r = residuals(full, pt)?;
            let reps: Option<Vec<Vec<f64>>> =
                folds.iter().map(|s| residuals(s, pt).map(|v| v.iter().map(|x| x.0).collect())).collect();
            let se = jackknife_se(&reps?);
            let mut worst: f64 = 0.0;
            for ((res, scale), se) in r.iter().zip(&se) {
                let band = opts.eps_set * scale + opts.z_set * se;
                if !res.is_finite() || res.abs() > band {
                    return None;
                }
                worst = worst.max(res.abs() / band.max(1e-300));
            }
            Some((pt, worst))
        })
        .collect()
}

/// Accepted cell with the smallest worst-case residual relative to its band.
fn best_cell(scored: &[([f64; 2], f64)]) -> [f64; 2] {
    scored.iter().min_by(|x, y| x.1.total_cmp(&y.1)).map_or([f64::NAN; 2], |c| c.0)
}

fn fold_copies(ds: &ObservedDataset, folds: u64) -> Vec<ObservedDataset> {
    (0..folds).map(|k| ds.without_fold(k, folds)).collect()
}

/// Two-dimensional grid on `(0, 1)^2` with the given step, optionally restricted.
fn grid_2d(step: f64, keep: impl Fn(f64, f64) -> bool) -> Vec<[f64; 2]> {
    let m = (1.0 / step).round() as usize;
    let mut cells = Vec::new();
    for i in 1..m {
        for j in 1..m {
            let (x, y) = (i as f64 * step, j as f64 * step);
            if keep(x, y) {
                cells.push([x, y]);
            }
        }
    }
    cells
}

/// Merges sorted grid points into intervals of adjacent points.
fn merge_points(points: &[f64], step: f64) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::new();
    for &x in points {
        match out.last_mut() {
            Some(iv) if x - iv.hi <= step * 1.5 => iv.hi = x,
            _ => out.push(Interval { lo: x, hi: x }),
        }
    }
    out
}

/// Observed probabilities of zero, one, ..., `n_bar` active bidders among all auctions.
fn count_vector(ds: &ObservedDataset, n_bar: u32) -> Result<Vec<f64>, IdentificationError> {
    let stats = count_stats(ds)?;
    let inv = ds.l_invalid.ok_or_else(|| IdentificationError::Precondition("needs the invalid-auction count".into()))?;
    let total = (stats.total_valid + inv) as f64;
    let mut v = vec![inv as f64 / total];
    v.extend((1..=n_bar).map(|k| stats.counts.get(&k).copied().unwrap_or(0) as f64 / total));
    Ok(v)
}

/// Solves the binomial-mixing system for the population weights of `0..=n_bar` bidders.
fn mixing_weights(counts: &[f64], alpha: f64) -> Option<Vec<f64>> {
    let m = counts.len();
    let c = DMatrix::from_fn(m, m, |k, n| {
        if k > n {
            0.0
        } else {
            binomial(n as u32, k as u32) * (1.0 - alpha).powi(k as i32) * alpha.powi((n - k) as i32)
        }
    });
    c.lu().solve(&DVector::from_column_slice(counts)).map(|x| x.iter().copied().collect())
}

/// Second-price, reserve, varying unknown N, with the invalid count.
pub fn id_sp_vary_invalid_set(
    ds: &ObservedDataset,
    opts: &IdentifyOptions,
) -> Result<IdentificationResult, IdentificationError> {
    require(ds.format == Format::SecondPrice, || "mixing inversion needs second-price data".into())?;
    let n_bar = count_stats(ds)?.max_k;
    require(n_bar >= 2, || "largest observed bidder count must be at least 2".into())?;
    let full = count_vector(ds, n_bar)?;
    let folds: Vec<Vec<f64>> =
        fold_copies(ds, opts.folds).iter().map(|d| count_vector(d, n_bar)).collect::<Result<_, _>>()?;
    let step = opts.grid_step_1d;
    let m = (1.0 / step).round() as usize;
    let points: Vec<f64> = (0..m).map(|i| i as f64 * step).collect();
    // Each candidate weight vector must have no zero-bidder mass and entries in [0, 1].
    let residuals = |counts: &Vec<f64>, alpha: f64| -> Option<Residuals> {
        let x = mixing_weights(counts, alpha)?;
        let mut r = vec![(x[0], 1.0)];
        r.extend(x[1..].iter().map(|&w| (if w < 0.0 { w } else { (w - 1.0).max(0.0) }, 1.0)));
        Some(r)
    };
    let accepted = accept(&full, &folds, &points, residuals, opts);
    if accepted.is_empty() {
        return Err(IdentificationError::Inconsistent("no screening level reconciles the bidder counts".into()));
    }
    let pts: Vec<f64> = accepted.iter().map(|p| p.0).collect();
    let set = merge_points(&pts, step);
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    let mut diag = Diagnostics::default();
    diag.choice("set_tolerance", format!("eps {} plus {} jackknife se over {} folds", opts.eps_set, opts.z_set, opts.folds));
    diag.residual("accepted_points", pts.len() as f64);
    let top = quantile_of(ds.prices_where(|k| k == n_bar), "the largest bidder-count group")?;
    let value = |a: f64, alpha: f64| {
        let w = ((alpha - a) / (1.0 - a)).clamp(0.0, 1.0);
        top.eval(second_order_cdf(n_bar, w))
    };
    let mid = 0.5 * (lo + hi);
    let grid = opts.grid_from(hi);
    let v_grid = value_grid(&grid, |alpha| value(mid, alpha), &mut diag);
    let v_band = grid
        .iter()
        .map(|&alpha| {
            let (x, y) = (value(lo, alpha), value(hi, alpha));
            (alpha, x.min(y), x.max(y))
        })
        .collect();
    let alpha_star = if set.len() == 1 && set[0].width() == 0.0 { AlphaStar::Point(lo) } else { AlphaStar::Set(set) };
    Ok(IdentificationResult {
        proposition: Estimator::MixingSet,
        alpha_star,
        n: Some(n_bar),
        f: None,
        v_grid,
        v_band: Some(v_band),
        diagnostics: diag,
    })
}

/// Boundary statistics of one entry-cost dataset with known N.
#[derive(Clone, Copy, Debug)]
struct EntryStats {
    top: f64,
    top_slope: f64,
    bottom_slope: f64,
}

struct EntrySample {
    q: EmpiricalQuantile,
    n: u32,
}

fn entry_sample(ds: &ObservedDataset, n: u32, format: Format) -> Result<EntrySample, IdentificationError> {
    let prices = match format {
        Format::FirstPrice => ds.prices(),
        Format::SecondPrice => ds.prices().into_iter().filter(|&p| p > 0.0).collect(),
    };
    Ok(EntrySample { q: quantile_of(prices, "positive prices")?, n })
}

fn entry_stats(s: &EntrySample, bw: f64) -> Result<EntryStats, IdentificationError> {
    let up = s.q.boundary_fit(true, 2.0 * bw)?;
    let down = s.q.boundary_fit(false, 2.0 * bw)?;
    Ok(EntryStats { top: up.value(), top_slope: up.derivative(1), bottom_slope: down.derivative(1) })
}

/// Entry cost, two datasets with different known counts.
pub fn id_entry_vary_known_set(
    ds_a: &ObservedDataset,
    ds_b: &ObservedDataset,
    n_a: u32,
    n_b: u32,
    format: Format,
    opts: &IdentifyOptions,
) -> Result<IdentificationResult, IdentificationError> {
    require(n_a != n_b && n_a.min(n_b) >= 2, || "need two different known counts of at least 2".into())?;
    for ds in [ds_a, ds_b] {
        require(ds.truncation_kind == TruncationKind::EntryCost && ds.format == format, || {
            "both datasets must come from the same entry-cost format".into()
        })?;
    }
    let sa = entry_sample(ds_a, n_a, format)?;
    let sb = entry_sample(ds_b, n_b, format)?;
    let mut diag = Diagnostics::default();
    diag.choice("set_tolerance", format!("eps {} plus {} jackknife se over {} folds", opts.eps_set, opts.z_set, opts.folds));
    let step = opts.grid_step_2d;
    let folds_a = fold_copies(ds_a, opts.folds);
    let folds_b = fold_copies(ds_b, opts.folds);
    let (accepted, bws): (Vec<([f64; 2], f64)>, _) = match format {
        Format::FirstPrice => {
            let bwa = opts.bandwidth_for(sa.q.len());
            let bwb = opts.bandwidth_for(sb.q.len());
            diag.bandwidth("boundary_fit_first", 2.0 * bwa);
            diag.bandwidth("boundary_fit_second", 2.0 * bwb);
            let full = (entry_stats(&sa, bwa)?, entry_stats(&sb, bwb)?);
            let folds = folds_a
                .iter()
                .zip(&folds_b)
                .map(|(a, b)| Ok((entry_stats(&entry_sample(a, n_a, format)?, bwa)?, entry_stats(&entry_sample(b, n_b, format)?, bwb)?)))
                .collect::<Result<Vec<_>, IdentificationError>>()?;
            let top_value = |s: &EntryStats, n: u32, a: f64| {
                let nf = n as f64;
                s.top + nf / (nf - 1.0) * s.top_slope / (1.0 - a.powi(n as i32))
            };
            let cost = |s: &EntryStats, n: u32, a: f64| {
                let nf = n as f64;
                nf / (nf - 1.0) * a.powi(2 * n as i32 - 1) / (1.0 - a.powi(n as i32)) * s.bottom_slope
            };
            let scale = full.0.top.abs().max(1e-12);
            let residuals = |st: &(EntryStats, EntryStats), c: [f64; 2]| -> Option<Residuals> {
                Some(vec![
                    (top_value(&st.0, n_a, c[0]) - top_value(&st.1, n_b, c[1]), scale),
                    (cost(&st.0, n_a, c[0]) - cost(&st.1, n_b, c[1]), scale),
                ])
            };
            let cells = grid_2d(step, |_, _| true);
            (accept(&full, &folds, &cells, residuals, opts), [bwa, bwb])
        }
        Format::SecondPrice => {
            // The larger count has the higher threshold; orient the CDF equation accordingly.
            let a_is_lo = n_a < n_b;
            let stats = |a: &EntrySample, b: &EntrySample| {
                let (lo, hi) = if a_is_lo { (a, b) } else { (b, a) };
                (lo.q.min(), hi.q.min(), lo.q.ecdf(hi.q.min()))
            };
            let full = stats(&sa, &sb);
            let folds = folds_a
                .iter()
                .zip(&folds_b)
                .map(|(a, b)| Ok(stats(&entry_sample(a, n_a, format)?, &entry_sample(b, n_b, format)?)))
                .collect::<Result<Vec<_>, IdentificationError>>()?;
            let (n_lo, n_hi) = if a_is_lo { (n_a, n_b) } else { (n_b, n_a) };
            let scale = full.0.max(full.1).abs().max(1e-12);
            let residuals = |st: &(f64, f64, f64), c: [f64; 2]| -> Option<Residuals> {
                let (a_lo, a_hi) = if a_is_lo { (c[0], c[1]) } else { (c[1], c[0]) };
                if a_hi <= a_lo {
                    return None;
                }
                let base = second_order_cdf(n_lo, a_lo);
                let cdf = (second_order_cdf(n_lo, a_hi) - base) / (1.0 - base);
                Some(vec![
                    (cdf - st.2, 1.0),
                    (st.0 * a_lo.powi(n_lo as i32 - 1) - st.1 * a_hi.powi(n_hi as i32 - 1), scale),
                ])
            };
            let cells = grid_2d(step, |_, _| true);
            (accept(&full, &folds, &cells, residuals, opts), [0.0, 0.0])
        }
    };
    let best = best_cell(&accepted);
    let cells: Vec<[f64; 2]> = accepted.iter().map(|c| c.0).collect();
    let region = Region::from_cells([format!("alpha_n{n_a}"), format!("alpha_n{n_b}")], step, cells)
        .ok_or_else(|| IdentificationError::Inconsistent("no threshold pair reconciles the two datasets".into()))?;
    diag.residual("accepted_cells", region.cells.len() as f64);
    let [a, _] = best;
    diag.choice("point_summary", "best-fitting accepted cell");
    let grid = opts.grid_from(a);
    let (v_grid, f) = match format {
        Format::FirstPrice => {
            let bw = bws[0];
            let v = value_grid(&grid, |alpha| fp_value(&sa.q, sa.n, a, alpha, bw, opts.derivative_factor), &mut diag);
            let s = entry_stats(&sa, bw)?;
            let nf = sa.n as f64;
            (v, nf / (nf - 1.0) * a.powi(2 * sa.n as i32 - 1) / (1.0 - a.powi(sa.n as i32)) * s.bottom_slope)
        }
        Format::SecondPrice => {
            let v = value_grid(&grid, |alpha| sp_value(&sa.q, sa.n, a, alpha), &mut diag);
            (v, sa.q.min() * a.powi(sa.n as i32 - 1))
        }
    };
    let alpha_star =
        if region.cells.len() == 1 { AlphaStar::Point(region.cells[0][0]) } else { AlphaStar::Region(region) };
    Ok(IdentificationResult {
        proposition: Estimator::EntryTwoSample,
        alpha_star,
        n: Some(n_a),
        f: Some(f),
        v_grid,
        v_band: None,
        diagnostics: diag,
    })
}

/// Minimum prices of the two largest groups, the lower group's share below the
/// top minimum, and the share ratio.
#[derive(Clone, Copy, Debug)]
struct TailStats {
    top_min: f64,
    sub_min: f64,
    below: f64,
    ratio: f64,
}

fn tail_stats(ds: &ObservedDataset, n_bar: u32) -> Result<TailStats, IdentificationError> {
    let stats = count_stats(ds)?;
    let top = quantile_of(ds.prices_where(|k| k == n_bar), "the largest bidder-count group")?;
    let sub = quantile_of(ds.prices_where(|k| k == n_bar - 1), "the second-largest bidder-count group")?;
    Ok(TailStats {
        top_min: top.min(),
        sub_min: sub.min(),
        below: sub.fraction_below(top.min()),
        ratio: stats.share(n_bar - 1) / stats.share(n_bar),
    })
}

/// Second-price, entry cost, varying unknown N: two-equation grid search over the
/// thresholds of the two largest counts.
pub(super) fn sp_entry_tail_set(
    ds: &ObservedDataset,
    opts: &IdentifyOptions,
) -> Result<IdentificationResult, IdentificationError> {
    let stats = count_stats(ds)?;
    let n_bar = stats.max_k;
    require(n_bar >= 3, || "need observed bidder counts of at least 3 for positive second prices".into())?;
    require(stats.share(n_bar - 1) > 0.0, || format!("no auctions with {} observed bidders", n_bar - 1))?;
    let mut diag = Diagnostics::default();
    for k in [n_bar, n_bar - 1] {
        let c = stats.counts.get(&k).copied().unwrap_or(0);
        if c < 50 {
            diag.warn(format!("only {c} auctions with {k} observed bidders; minimum price is unreliable"));
        }
    }
    diag.choice("set_tolerance", format!("eps {} plus {} jackknife se over {} folds", opts.eps_set, opts.z_set, opts.folds));
    let full = tail_stats(ds, n_bar)?;
    let folds =
        fold_copies(ds, opts.folds).iter().map(|d| tail_stats(d, n_bar)).collect::<Result<Vec<_>, _>>()?;
    let nf = n_bar as f64;
    let residuals = |s: &TailStats, c: [f64; 2]| -> Option<Residuals> {
        let [a_top, a_sub] = c;
        let w = (a_top - a_sub) / (1.0 - a_sub);
        Some(vec![
            (s.top_min * a_top.powi(n_bar as i32 - 1) - s.sub_min * a_sub.powi(n_bar as i32 - 2), s.top_min),
            (
                s.below * s.ratio - (s.ratio - nf * a_top / (1.0 - a_top)) * second_order_cdf(n_bar - 1, w),
                s.ratio,
            ),
        ])
    };
    let step = opts.grid_step_2d;
    let cells = grid_2d(step, |top, sub| sub < top);
    let scored = accept(&full, &folds, &cells, residuals, opts);
    let best = best_cell(&scored);
    let accepted: Vec<[f64; 2]> = scored.into_iter().map(|c| c.0).collect();
    let region = Region::from_cells([format!("alpha_n{n_bar}"), format!("alpha_n{}", n_bar - 1)], step, accepted)
        .ok_or_else(|| IdentificationError::Inconsistent("no threshold pair reconciles the bidder-count groups".into()))?;
    diag.residual("accepted_cells", region.cells.len() as f64);
    let [a, _] = best;
    diag.choice("point_summary", "best-fitting accepted cell");
    let top = quantile_of(ds.prices_where(|k| k == n_bar), "the largest bidder-count group")?;
    let grid = opts.grid_from(a);
    let v_grid = value_grid(
        &grid,
        |alpha| top.eval(second_order_cdf(n_bar, ((alpha - a) / (1.0 - a)).clamp(0.0, 1.0))),
        &mut diag,
    );
    let alpha_star =
        if region.cells.len() == 1 { AlphaStar::Point(region.cells[0][0]) } else { AlphaStar::Region(region) };
    Ok(IdentificationResult {
        proposition: Estimator::EntryTailRatio,
        alpha_star,
        n: Some(n_bar),
        f: Some(full.top_min * a.powi(n_bar as i32 - 1)),
        v_grid,
        v_band: None,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ValueDistribution;
    use crate::equilibrium::{entry_threshold, AuctionDesign, Truncation};
    use crate::simulator::{simulate_observed, InfoStructure, PopulationSpec};

    fn simulate(
        dist: &ValueDistribution,
        format: Format,
        tr: Truncation,
        pop: &PopulationSpec,
        l: u64,
        seed: u64,
        info: InfoStructure,
    ) -> ObservedDataset {
        let d = AuctionDesign::new(format, tr, dist).unwrap();
        simulate_observed(dist, &d, pop, l, seed, info).unwrap()
    }

    #[test]
    fn jackknife_matches_hand_computation() {
        let reps = vec![vec![1.0], vec![2.0], vec![3.0]];
        let se = jackknife_se(&reps);
        assert!((se[0] - (2.0f64 / 3.0 * 2.0).sqrt()).abs() < 1e-12);
        assert_eq!(jackknife_se(&[vec![4.0, 5.0]]), vec![0.0, 0.0]);
    }

    #[test]
    fn interval_merging() {
        let iv = merge_points(&[0.1, 0.102, 0.104, 0.2], 0.002);
        assert_eq!(iv.len(), 2);
        assert!((iv[0].hi - 0.104).abs() < 1e-12);
    }

    #[test]
    fn mixing_inverts_exact_probabilities() {
        // Half the auctions have two bidders and half three, at threshold 0.4.
        let a: f64 = 0.4;
        let mut p = vec![0.0; 4];
        for (n, w) in [(2u32, 0.5), (3, 0.5)] {
            for (k, slot) in p.iter_mut().enumerate().take(n as usize + 1) {
                *slot += w * binomial(n, k as u32) * (1.0 - a).powi(k as i32) * a.powi((n - k as u32) as i32);
            }
        }
        let x = mixing_weights(&p, a).unwrap();
        assert!(x[0].abs() < 1e-12 && x[1].abs() < 1e-12);
        assert!((x[2] - 0.5).abs() < 1e-12 && (x[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mixing_set_contains_truth() {
        let dist = ValueDistribution::shifted_uniform(0.25, 1.0).unwrap();
        let pop = PopulationSpec::new(vec![(1, 0.4), (2, 0.6)]).unwrap();
        let info = InfoStructure::PRICE_ONLY.with_nobs().with_invalid_count();
        let ds = simulate(&dist, Format::SecondPrice, Truncation::Reserve { alpha0: 1.0 / 3.0 }, &pop, 200_000, 9, info);
        let r = id_sp_vary_invalid_set(&ds, &IdentifyOptions::default()).unwrap();
        let ok = match &r.alpha_star {
            AlphaStar::Set(s) => s.iter().any(|i| i.contains(1.0 / 3.0, 0.002)),
            AlphaStar::Point(p) => (p - 1.0 / 3.0).abs() <= 0.002,
            AlphaStar::Region(_) => false,
        };
        assert!(ok, "{:?}", r.alpha_star);
    }

    #[test]
    fn two_sample_entry_second_price() {
        let dist = ValueDistribution::uniform(0.0, 1.0).unwrap();
        let tr = Truncation::EntryCost { cost: 0.25 };
        let a = simulate(&dist, Format::SecondPrice, tr, &PopulationSpec::fixed(3).unwrap(), 200_000, 1, InfoStructure::PRICE_ONLY);
        let b = simulate(&dist, Format::SecondPrice, tr, &PopulationSpec::fixed(2).unwrap(), 200_000, 2, InfoStructure::PRICE_ONLY);
        let r = id_entry_vary_known_set(&a, &b, 3, 2, Format::SecondPrice, &IdentifyOptions::default()).unwrap();
        let truth = [entry_threshold(&dist, 3, 0.25).unwrap(), 0.5];
        let AlphaStar::Region(region) = &r.alpha_star else { panic!("expected a region") };
        assert!(region.contains(truth, 2.0 * 0.005), "{:?} vs {truth:?}", region.bounds);
    }

    #[test]
    fn tail_set_entry_second_price() {
        let dist = ValueDistribution::uniform(0.0, 1.0).unwrap();
        let pop = PopulationSpec::new(vec![(2, 0.5), (3, 0.5)]).unwrap();
        let ds = simulate(&dist, Format::SecondPrice, Truncation::EntryCost { cost: 0.2 }, &pop, 400_000, 3, InfoStructure::PRICE_ONLY.with_nobs());
        let r = id_entry_vary_unknown_sp(&ds);
        let truth = [entry_threshold(&dist, 3, 0.2).unwrap(), entry_threshold(&dist, 2, 0.2).unwrap()];
        let AlphaStar::Region(region) = &r.alpha_star else { panic!("expected a region") };
        assert!(region.contains(truth, 2.0 * 0.005), "{:?} vs {truth:?}", region.bounds);
    }

    fn id_entry_vary_unknown_sp(ds: &ObservedDataset) -> IdentificationResult {
        sp_entry_tail_set(ds, &IdentifyOptions::default()).unwrap()
    }
}
