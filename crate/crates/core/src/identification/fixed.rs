//! Fixed number of bidders: mass-point, invalid-share and full-entry-share inversions.

use crate::empirics::{count_stats, invalid_share, EmpiricalQuantile};
use crate::equilibrium::{Format, TruncationKind};
use crate::error::IdentificationError;
use crate::numerics::{bisect, is_strictly_monotone, second_order_cdf};
use crate::simulator::ObservedDataset;

use super::{
    not_identified, quantile_of, require, value_grid, AlphaStar, DerivativeFactor, Diagnostics, Estimator,
    IdentificationResult, IdentifyOptions,
};

/// Share of valid auctions with exactly one active bidder, `N(1-a)a^{N-1}/(1-a^N)`.
pub fn single_active_share(n: u32, a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    if a >= 1.0 {
        return 1.0;
    }
    let nf = n as f64;
    nf * (1.0 - a) * a.powi(n as i32 - 1) / (1.0 - a.powi(n as i32))
}

/// Share of valid auctions with every bidder active, `(1-a)^N/(1-a^N)`.
pub fn full_entry_share(n: u32, a: f64) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    if a >= 1.0 {
        return 0.0;
    }
    (1.0 - a).powi(n as i32) / (1.0 - a.powi(n as i32))
}

/// Second-price values: the price quantile at the conditional second-order-statistic CDF.
pub(super) fn sp_value(q: &EmpiricalQuantile, n: u32, a: f64, alpha: f64) -> f64 {
    let base = second_order_cdf(n, a);
    let u = (second_order_cdf(n, alpha) - base) / (1.0 - base);
    q.eval(u)
}

/// First-price values from the inverted best-response condition.
pub(super) fn fp_value(q: &EmpiricalQuantile, n: u32, a: f64, alpha: f64, bw: f64, factor: DerivativeFactor) -> f64 {
    let an = a.powi(n as i32);
    let u = (alpha.powi(n as i32) - an) / (1.0 - an);
    let slope = q.deriv(u, bw).unwrap_or(0.0);
    fp_combine(q.eval(u), slope, n, a, alpha, factor)
}

fn fp_combine(t: f64, slope: f64, n: u32, a: f64, alpha: f64, factor: DerivativeFactor) -> f64 {
    let nf = n as f64;
    let denom = match factor {
        DerivativeFactor::ChainRule => 1.0 - a.powi(n as i32),
        DerivativeFactor::Printed => 1.0 - a,
    };
    t + nf / (nf - 1.0) * alpha.powi(n as i32) / denom * slope
}

/// First-price value at the threshold, using a boundary polynomial for `T'(0)`.
pub(super) fn fp_threshold_value(
    q: &EmpiricalQuantile,
    n: u32,
    a: f64,
    bw: f64,
    factor: DerivativeFactor,
    diag: &mut Diagnostics,
) -> f64 {
    match q.boundary_fit(false, 2.0 * bw) {
        Ok(fit) => {
            diag.bandwidth("boundary_slope_at_0", fit.half_width);
            fp_combine(fit.value(), fit.derivative(1), n, a, a, factor)
        }
        Err(_) => q.min(),
    }
}

fn record_factor(diag: &mut Diagnostics, factor: DerivativeFactor) {
    diag.choice(
        "derivative_factor",
        match factor {
            DerivativeFactor::ChainRule => "chain_rule (1 - a^N)",
            DerivativeFactor::Printed => "printed (1 - a)",
        },
    );
}

fn common_choices(diag: &mut Diagnostics) {
    diag.choice("quantile_convention", "type-7 linear interpolation");
    diag.choice("bandwidth", "0.5 n^(-1/5) unless overridden");
}

/// Inverts `N(1-a)a^{N-1}/(1-a^N) = mass` for the screening level.
fn invert_single_share(n: u32, mass: f64, diag: &mut Diagnostics) -> Result<f64, IdentificationError> {
    require(
        is_strictly_monotone(|a| single_active_share(n, a), 0.0, 1.0 - 1e-9, 1000, true),
        || format!("single-active share not monotone for N = {n}"),
    )?;
    let sup = single_active_share(n, 1.0 - 1e-12);
    if mass >= sup {
        return Err(IdentificationError::Inconsistent(format!(
            "mass {mass} at the lowest price exceeds the attainable bound {sup} for N = {n}"
        )));
    }
    let a = bisect(|a| single_active_share(n, a) - mass, 0.0, 1.0 - 1e-12, 1e-12)?;
    diag.residual("mass_equation", single_active_share(n, a) - mass);
    Ok(a)
}

/// Second-price, fixed known N, prices only: invert the mass at the lowest price.
pub fn id_sp_fixed_price_only(
    ds: &ObservedDataset,
    n: u32,
    opts: &IdentifyOptions,
) -> Result<IdentificationResult, IdentificationError> {
    require(ds.format == Format::SecondPrice, || "mass inversion needs second-price data".into())?;
    require(n >= 2, || "known N must be at least 2".into())?;
    require(!ds.info.drop_at_reserve, || "mass inversion needs the rows priced at the reserve".into())?;
    let mut diag = Diagnostics::default();
    common_choices(&mut diag);
    let all = quantile_of(ds.prices(), "dataset")?;
    let floor = all.min();
    let eps = opts.mass_eps.unwrap_or(0.0);
    let mass = all.mass_near(floor, eps);
    let at_floor = (mass * all.len() as f64).round() as usize;
    let (a, above) = if at_floor <= 1 {
        diag.warn("no mass point at the lowest price; treating the reserve as nonbinding");
        (0.0, all.clone())
    } else {
        let a = invert_single_share(n, mass, &mut diag)?;
        let rest: Vec<f64> = all.samples().iter().copied().filter(|&p| p > floor + eps).collect();
        (a, quantile_of(rest, "prices above the reserve")?)
    };
    diag.residual("mass_at_floor", mass);
    let grid = opts.grid_from(a);
    let v_grid = value_grid(&grid, |alpha| sp_value(&above, n, a, alpha), &mut diag);
    Ok(IdentificationResult {
        proposition: Estimator::ReserveMass,
        alpha_star: AlphaStar::Point(a),
        n: Some(n),
        f: None,
        v_grid,
        v_band: None,
        diagnostics: diag,
    })
}

/// First-price, fixed known N, with the invalid-auction count.
pub fn id_fp_fixed_invalid(
    ds: &ObservedDataset,
    n: u32,
    opts: &IdentifyOptions,
) -> Result<IdentificationResult, IdentificationError> {
    require(ds.format == Format::FirstPrice, || "invalid-share inversion needs first-price data".into())?;
    require(n >= 2, || "known N must be at least 2".into())?;
    let share = invalid_share(ds)?;
    let a = share.powf(1.0 / n as f64);
    let mut diag = Diagnostics::default();
    common_choices(&mut diag);
    record_factor(&mut diag, opts.derivative_factor);
    diag.residual("invalid_share", share);
    let q = quantile_of(ds.prices(), "dataset")?;
    let bw = opts.bandwidth_for(q.len());
    diag.bandwidth("quantile_derivative", bw);
    let grid = opts.grid_from(a);
    let v_grid = value_grid(&grid, |alpha| fp_value(&q, n, a, alpha, bw, opts.derivative_factor), &mut diag);
    factor_gap(&q, n, a, bw, &grid, &mut diag);
    Ok(IdentificationResult {
        proposition: Estimator::InvalidShare,
        alpha_star: AlphaStar::Point(a),
        n: Some(n),
        f: None,
        v_grid,
        v_band: None,
        diagnostics: diag,
    })
}

/// Largest gap between the two derivative-factor variants on the grid.
fn factor_gap(q: &EmpiricalQuantile, n: u32, a: f64, bw: f64, grid: &[f64], diag: &mut Diagnostics) {
    let gap = grid
        .iter()
        .map(|&alpha| {
            (fp_value(q, n, a, alpha, bw, DerivativeFactor::ChainRule)
                - fp_value(q, n, a, alpha, bw, DerivativeFactor::Printed))
            .abs()
        })
        .fold(0.0, f64::max);
    diag.residual("derivative_factor_gap", gap);
}

/// Fixed unknown N with observed active-bidder counts; also recovers the entry
/// cost when the dataset comes from an entry-cost design.
pub fn id_fixed_nobs(ds: &ObservedDataset, opts: &IdentifyOptions) -> Result<IdentificationResult, IdentificationError> {
    let stats = count_stats(ds)?;
    let n = stats.max_k;
    require(n >= 2, || "the largest observed bidder count must be at least 2".into())?;
    let share = stats.share(n);
    let mut diag = Diagnostics::default();
    common_choices(&mut diag);
    require(is_strictly_monotone(|a| full_entry_share(n, a), 0.0, 1.0 - 1e-9, 1000, false), || {
        format!("full-entry share not monotone for N = {n}")
    })?;
    let a = if share >= 1.0 {
        0.0
    } else {
        bisect(|a| full_entry_share(n, a) - share, 0.0, 1.0 - 1e-12, 1e-12)?
    };
    diag.residual("share_equation", full_entry_share(n, a) - share);
    diag.residual("full_entry_share", share);
    let entry = ds.truncation_kind == TruncationKind::EntryCost;
    let estimator = if entry { Estimator::EntryFullShare } else { Estimator::FullEntryShare };
    let grid = opts.grid_from(a);
    let (v_grid, threshold_value) = match ds.format {
        Format::FirstPrice => {
            record_factor(&mut diag, opts.derivative_factor);
            let q = quantile_of(ds.prices(), "dataset")?;
            let bw = opts.bandwidth_for(q.len());
            diag.bandwidth("quantile_derivative", bw);
            let v = value_grid(&grid, |alpha| fp_value(&q, n, a, alpha, bw, opts.derivative_factor), &mut diag);
            let v0 = entry.then(|| fp_threshold_value(&q, n, a, bw, opts.derivative_factor, &mut diag));
            (v, v0)
        }
        Format::SecondPrice => {
            let q = quantile_of(ds.prices_where(|k| k >= 2), "auctions with two or more active bidders")?;
            let v = value_grid(&grid, |alpha| sp_value(&q, n, a, alpha), &mut diag);
            (v, entry.then(|| q.min()))
        }
    };
    let f = threshold_value.map(|v| v * a.powi(n as i32 - 1));
    Ok(IdentificationResult {
        proposition: estimator,
        alpha_star: AlphaStar::Point(a),
        n: Some(n),
        f,
        v_grid,
        v_band: None,
        diagnostics: diag,
    })
}

/// Entry cost with a fixed known N.
pub fn id_entry_fixed(
    ds: &ObservedDataset,
    n: u32,
    format: Format,
    opts: &IdentifyOptions,
) -> Result<IdentificationResult, IdentificationError> {
    require(ds.truncation_kind == TruncationKind::EntryCost, || "entry-cost estimator needs entry-cost data".into())?;
    require(n >= 2, || "known N must be at least 2".into())?;
    let mut diag = Diagnostics::default();
    common_choices(&mut diag);
    let (a, v_grid, threshold_value) = match format {
        Format::SecondPrice => {
            require(!ds.info.drop_at_reserve, || "mass inversion needs the zero-price rows".into())?;
            let all = quantile_of(ds.prices(), "dataset")?;
            let eps = opts.mass_eps.unwrap_or(0.0);
            let mass = all.mass_near(0.0, eps);
            let positive: Vec<f64> = all.samples().iter().copied().filter(|&p| p > eps).collect();
            let at_zero = (mass * all.len() as f64).round() as usize;
            let a = if at_zero <= 1 {
                diag.warn("no mass point at zero; treating entry as unconstrained");
                0.0
            } else {
                invert_single_share(n, mass, &mut diag)?
            };
            diag.residual("mass_at_zero", mass);
            let q = quantile_of(positive, "positive prices")?;
            let grid = opts.grid_from(a);
            let v = value_grid(&grid, |alpha| sp_value(&q, n, a, alpha), &mut diag);
            (a, v, if a > 0.0 { q.min() } else { 0.0 })
        }
        Format::FirstPrice => {
            if ds.l_invalid.is_none() {
                return Err(not_identified(
                    Estimator::EntryKnownN,
                    "first-price prices under entry costs do not reveal the entry threshold without the \
                     invalid-auction count",
                ));
            }
            record_factor(&mut diag, opts.derivative_factor);
            let share = invalid_share(ds)?;
            let a = share.powf(1.0 / n as f64);
            diag.residual("invalid_share", share);
            let q = quantile_of(ds.prices(), "dataset")?;
            let bw = opts.bandwidth_for(q.len());
            diag.bandwidth("quantile_derivative", bw);
            let grid = opts.grid_from(a);
            let v = value_grid(&grid, |alpha| fp_value(&q, n, a, alpha, bw, opts.derivative_factor), &mut diag);
            factor_gap(&q, n, a, bw, &grid, &mut diag);
            let v0 = fp_threshold_value(&q, n, a, bw, opts.derivative_factor, &mut diag);
            (a, v, v0)
        }
    };
    Ok(IdentificationResult {
        proposition: Estimator::EntryKnownN,
        alpha_star: AlphaStar::Point(a),
        n: Some(n),
        f: Some(threshold_value * a.powi(n as i32 - 1)),
        v_grid,
        v_band: None,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ValueDistribution;
    use crate::equilibrium::{AuctionDesign, Truncation};
    use crate::simulator::{simulate_observed, InfoStructure, ObservedRow, PopulationSpec};

    fn unif() -> ValueDistribution {
        ValueDistribution::uniform(0.0, 1.0).unwrap()
    }

    fn data(format: Format, truncation: Truncation, n: u32, l: u64, info: InfoStructure) -> ObservedDataset {
        let d = AuctionDesign::new(format, truncation, &unif()).unwrap();
        simulate_observed(&unif(), &d, &PopulationSpec::fixed(n).unwrap(), l, 17, info).unwrap()
    }

    #[test]
    fn share_functions() {
        assert!((single_active_share(2, 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert!((single_active_share(3, 0.5) - 3.0 / 7.0).abs() < 1e-15);
        assert!((full_entry_share(2, 0.5) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(full_entry_share(4, 0.0), 1.0);
    }

    #[test]
    fn mass_inversion_recovers_screening() {
        for n in [2, 3] {
            let ds = data(Format::SecondPrice, Truncation::Reserve { alpha0: 0.5 }, n, 200_000, InfoStructure::PRICE_ONLY);
            let r = id_sp_fixed_price_only(&ds, n, &IdentifyOptions::default()).unwrap();
            assert!((r.alpha_star.point().unwrap() - 0.5).abs() < 0.01);
            assert!(r.max_value_error(|a| a) < 0.05);
        }
    }

    #[test]
    fn nonbinding_reserve_gives_zero() {
        let rows = (0..100).map(|i| ObservedRow { auction_id: i, price: (i as f64 + 0.5) / 100.0, n_obs: None }).collect();
        let ds = ObservedDataset {
            rows,
            l_invalid: None,
            info: InfoStructure::PRICE_ONLY,
            format: Format::SecondPrice,
            truncation_kind: TruncationKind::Reserve,
        };
        let r = id_sp_fixed_price_only(&ds, 2, &IdentifyOptions::default()).unwrap();
        assert_eq!(r.alpha_star.point(), Some(0.0));
        assert!(!r.diagnostics.warnings.is_empty());
    }

    #[test]
    fn invalid_share_inversion() {
        let ds = data(
            Format::FirstPrice,
            Truncation::Reserve { alpha0: 0.5 },
            2,
            400_000,
            InfoStructure::PRICE_ONLY.with_invalid_count(),
        );
        let r = id_fp_fixed_invalid(&ds, 2, &IdentifyOptions::default()).unwrap();
        assert!((r.diagnostics.residuals["invalid_share"] - 0.25).abs() < 0.005);
        assert!((r.alpha_star.point().unwrap() - 0.5).abs() < 0.005);
        assert!(r.max_value_error(|a| a) < 0.05);
        let none = data(
            Format::FirstPrice,
            Truncation::Reserve { alpha0: 0.0 },
            2,
            1_000,
            InfoStructure::PRICE_ONLY.with_invalid_count(),
        );
        assert_eq!(id_fp_fixed_invalid(&none, 2, &IdentifyOptions::default()).unwrap().alpha_star.point(), Some(0.0));
        assert!(id_fp_fixed_invalid(&data(Format::FirstPrice, Truncation::Reserve { alpha0: 0.5 }, 2, 100, InfoStructure::PRICE_ONLY), 2, &IdentifyOptions::default()).is_err());
    }

    #[test]
    fn full_share_inversion() {
        let ds = data(Format::SecondPrice, Truncation::Reserve { alpha0: 0.5 }, 2, 200_000, InfoStructure::PRICE_ONLY.with_nobs());
        let r = id_fixed_nobs(&ds, &IdentifyOptions::default()).unwrap();
        assert_eq!(r.n, Some(2));
        assert!((r.alpha_star.point().unwrap() - 0.5).abs() < 0.01);
        let entry = data(Format::FirstPrice, Truncation::EntryCost { cost: 0.25 }, 2, 200_000, InfoStructure::PRICE_ONLY.with_nobs());
        let r = id_fixed_nobs(&entry, &IdentifyOptions::default()).unwrap();
        assert_eq!(r.proposition, Estimator::EntryFullShare);
        assert!((r.f.unwrap() - 0.25).abs() < 0.02, "{:?}", r.f);
    }

    #[test]
    fn entry_known_n() {
        let ds = data(Format::SecondPrice, Truncation::EntryCost { cost: 0.25 }, 2, 200_000, InfoStructure::PRICE_ONLY);
        let r = id_entry_fixed(&ds, 2, Format::SecondPrice, &IdentifyOptions::default()).unwrap();
        assert!((r.alpha_star.point().unwrap() - 0.5).abs() < 0.01);
        assert!((r.f.unwrap() - 0.25).abs() < 0.02);
        let fp = data(Format::FirstPrice, Truncation::EntryCost { cost: 0.25 }, 2, 1_000, InfoStructure::PRICE_ONLY);
        assert!(matches!(
            id_entry_fixed(&fp, 2, Format::FirstPrice, &IdentifyOptions::default()),
            Err(IdentificationError::NotIdentified { .. })
        ));
        let tiny = data(Format::SecondPrice, Truncation::EntryCost { cost: 1e-6 }, 2, 100_000, InfoStructure::PRICE_ONLY);
        let r = id_entry_fixed(&tiny, 2, Format::SecondPrice, &IdentifyOptions::default()).unwrap();
        assert!(r.alpha_star.point().unwrap() < 0.01);
        assert!(r.f.unwrap() < 1e-3);
    }
}
