//! Empirical price quantiles, their derivatives, mass points and count shares.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::EmpiricsError;
use crate::simulator::ObservedDataset;

/// Default derivative bandwidth `0.5 n^{-1/5}`.
pub fn default_bandwidth(n: usize) -> f64 {
    0.5 * (n.max(1) as f64).powf(-0.2)
}

/// Type-7 empirical quantile function of a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalQuantile {
    sorted: Vec<f64>,
}

/// Coordinate in which a local polynomial is fitted: `s = u` or `s = u^{1/k}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coordinate {
    Probability,
    Root(u32),
}

impl Coordinate {
    fn to_s(self, u: f64) -> f64 {
        match self {
            Coordinate::Probability => u,
            Coordinate::Root(k) => u.powf(1.0 / k as f64),
        }
    }

    fn to_u(self, s: f64) -> f64 {
        match self {
            Coordinate::Probability => s,
            Coordinate::Root(k) => s.powi(k as i32),
        }
    }
}

/// Local least-squares polynomial around `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFit {
    pub center: f64,
    pub half_width: f64,
    pub points: usize,
    powers: Vec<u32>,
    coeffs: Vec<f64>,
}

impl LocalFit {
    /// `k`-th derivative at the center (zero for powers outside the basis).
    pub fn derivative(&self, k: u32) -> f64 {
        let fact: f64 = (1..=k).map(f64::from).product();
        self.powers.iter().zip(&self.coeffs).find(|(p, _)| **p == k).map_or(0.0, |(_, c)| c * fact)
    }

    pub fn value(&self) -> f64 {
        self.derivative(0)
    }
}

/// Options for [`EmpiricalQuantile::local_fit`].
#[derive(Clone, Debug)]
pub struct FitSpec<'a> {
    pub coordinate: Coordinate,
    pub center: f64,
    pub half_width: f64,
    pub powers: &'a [u32],
    pub min_points: usize,
    /// Heavily weighted exact point `(s, value)` added inside the window.
    pub anchor: Option<(f64, f64)>,
}

impl EmpiricalQuantile {
    pub fn new(mut samples: Vec<f64>) -> Result<Self, EmpiricsError> {
        if samples.is_empty() {
            return Err(EmpiricsError::TooFewSamples { needed: 1, got: 0 });
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(EmpiricsError::NonFinite);
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn default_bandwidth(&self) -> f64 {
        default_bandwidth(self.len())
    }

    /// Linear interpolation of the order statistics at position `u (n - 1)`.
    pub fn eval(&self, u: f64) -> f64 {
        let n = self.sorted.len();
        if n == 1 {
            return self.sorted[0];
        }
        let h = (n - 1) as f64 * u.clamp(0.0, 1.0);
        let lo = (h.floor() as usize).min(n - 2);
        let frac = h - lo as f64;
        self.sorted[lo] + (self.sorted[lo + 1] - self.sorted[lo]) * frac
    }

    /// Difference quotient over `[u - h, u + h]`, truncated at the unit interval.
    pub fn deriv(&self, u: f64, h: f64) -> Result<f64, EmpiricsError> {
        self.need(2)?;
        let hi = (u + h).min(1.0);
        let lo = (u - h).max(0.0);
        Ok((self.eval(hi) - self.eval(lo)) / (hi - lo))
    }

    /// Second difference; one-sided three-point stencils within `h` of either end.
    pub fn second_deriv(&self, u: f64, h: f64) -> Result<f64, EmpiricsError> {
        self.need(3)?;
        let h = h.min(0.5);
        let d = if u - h < 0.0 {
            self.eval(u) - 2.0 * self.eval(u + h) + self.eval(u + 2.0 * h)
        } else if u + h > 1.0 {
            self.eval(u) - 2.0 * self.eval(u - h) + self.eval(u - 2.0 * h)
        } else {
            self.eval(u + h) - 2.0 * self.eval(u) + self.eval(u - h)
        };
        Ok(d / (h * h))
    }

    /// Fraction of samples exactly equal to `v`.
    pub fn mass_at(&self, v: f64) -> f64 {
        self.mass_near(v, 0.0)
    }

    /// Fraction of samples within `eps` of `v`.
    pub fn mass_near(&self, v: f64, eps: f64) -> f64 {
        let lo = self.sorted.partition_point(|&x| x < v - eps);
        let hi = self.sorted.partition_point(|&x| x <= v + eps);
        (hi - lo) as f64 / self.len() as f64
    }

    /// `P(X < t)`.
    pub fn fraction_below(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x < t) as f64 / self.len() as f64
    }

    /// `P(X <= t)`.
    pub fn ecdf(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= t) as f64 / self.len() as f64
    }

    /// `P(X > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        1.0 - self.ecdf(t)
    }

    fn need(&self, k: usize) -> Result<(), EmpiricsError> {
        if self.len() < k {
            return Err(EmpiricsError::TooFewSamples { needed: k, got: self.len() });
        }
        Ok(())
    }

    /// Least-squares polynomial in the chosen coordinate through the order statistics.
    ///
    /// Order statistic `i` sits at probability `i / (n - 1)`. The window widens by a
    /// quarter at a time until it holds `min_points` order statistics.
    pub fn local_fit(&self, spec: &FitSpec<'_>) -> Result<LocalFit, EmpiricsError> {
        let p = spec.powers.len();
        self.need(p + 1)?;
        let n = self.len();
        let pos = |i: usize| i as f64 / (n - 1) as f64;
        let mut h = spec.half_width.max(1e-12);
        let (i0, i1) = loop {
            let lo = spec.coordinate.to_u((spec.center - h).max(0.0));
            let hi = spec.coordinate.to_u((spec.center + h).min(1.0));
            let i0 = ((lo * (n - 1) as f64).ceil() as usize).min(n - 1);
            let i1 = ((hi * (n - 1) as f64).floor() as usize).min(n - 1);
            let count = i1 + 1 - i0.min(i1 + 1);
            if count >= spec.min_points.max(p + 1) || h >= 1.0 {
                break (i0, i1);
            }
            h *= 1.25;
        };
        let mut xtx = DMatrix::<f64>::zeros(p, p);
        let mut xty = DVector::<f64>::zeros(p);
        let mut row = vec![0.0; p];
        let mut add = |s: f64, y: f64, w: f64, xtx: &mut DMatrix<f64>, xty: &mut DVector<f64>| {
            let z = (s - spec.center) / h;
            for (r, &k) in row.iter_mut().zip(spec.powers) {
                *r = z.powi(k as i32);
            }
            for a in 0..p {
                xty[a] += w * row[a] * y;
                for b in a..p {
                    xtx[(a, b)] += w * row[a] * row[b];
                }
            }
        };
        for i in i0..=i1 {
            add(spec.coordinate.to_s(pos(i)), self.sorted[i], 1.0, &mut xtx, &mut xty);
        }
        let mut points = i1 + 1 - i0;
        if let Some((s, y)) = spec.anchor {
            if (s - spec.center).abs() <= h {
                add(s, y, 1e3, &mut xtx, &mut xty);
                points += 1;
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtx[(a, b)] = xtx[(b, a)];
            }
        }
        let sol = xtx
            .clone()
            .cholesky()
            .map(|c| c.solve(&xty))
            .or_else(|| xtx.lu().solve(&xty))
            .ok_or(EmpiricsError::TooFewSamples { needed: p + 1, got: points })?;
        let coeffs = spec.powers.iter().zip(sol.iter()).map(|(&k, c)| c / h.powi(k as i32)).collect();
        Ok(LocalFit { center: spec.center, half_width: h, points, powers: spec.powers.to_vec(), coeffs })
    }

    /// Quadratic fit on the one-sided window of width `window` at `u = 0` or `u = 1`.
    pub fn boundary_fit(&self, at_upper: bool, window: f64) -> Result<LocalFit, EmpiricsError> {
        self.local_fit(&FitSpec {
            coordinate: Coordinate::Probability,
            center: if at_upper { 1.0 } else { 0.0 },
            half_width: window,
            powers: &[0, 1, 2],
            min_points: 50,
            anchor: None,
        })
    }
}

/// Observed bidder-count frequencies and the invalid-auction share.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountStats {
    pub shares: BTreeMap<u32, f64>,
    pub counts: BTreeMap<u32, u64>,
    pub invalid_share: Option<f64>,
    pub total_valid: u64,
    pub max_k: u32,
}

impl CountStats {
    pub fn share(&self, k: u32) -> f64 {
        self.shares.get(&k).copied().unwrap_or(0.0)
    }
}

pub fn count_stats(ds: &ObservedDataset) -> Result<CountStats, EmpiricsError> {
    if !ds.info.observe_nobs {
        return Err(EmpiricsError::MissingObservable("n_obs"));
    }
    let mut counts = BTreeMap::new();
    for r in &ds.rows {
        let k = r.n_obs.ok_or(EmpiricsError::MissingObservable("n_obs"))?;
        *counts.entry(k).or_insert(0u64) += 1;
    }
    let total = ds.len() as u64;
    let shares = counts.iter().map(|(&k, &c)| (k, c as f64 / total.max(1) as f64)).collect();
    let max_k = counts.keys().next_back().copied().unwrap_or(0);
    let invalid_share = ds.l_invalid.map(|inv| inv as f64 / (inv + total).max(1) as f64);
    Ok(CountStats { shares, counts, invalid_share, total_valid: total, max_k })
}

/// `L_invalid / (L + L_invalid)`.
pub fn invalid_share(ds: &ObservedDataset) -> Result<f64, EmpiricsError> {
    let inv = ds.l_invalid.ok_or(EmpiricsError::MissingObservable("L_invalid"))?;
    Ok(inv as f64 / (inv + ds.len() as u64).max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen()).collect()
    }

    #[test]
    fn eval_examples() {
        let q = EmpiricalQuantile::new(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(q.eval(0.5), 2.0);
        assert_eq!(q.eval(0.0), 1.0);
        assert_eq!(q.eval(1.0), 3.0);
        assert!(EmpiricalQuantile::new(vec![]).is_err());
        let big = EmpiricalQuantile::new(uniform_sample(1_000_000, 1)).unwrap();
        assert!((big.eval(0.25) - 0.25).abs() < 0.005);
    }

    #[test]
    fn deriv_examples() {
        let line = EmpiricalQuantile::new((0..=100).map(|i| i as f64 / 100.0).collect()).unwrap();
        assert_abs_diff_eq!(line.deriv(0.5, 0.1).unwrap(), 1.0, epsilon = 1e-9);
        let big = EmpiricalQuantile::new(uniform_sample(1_000_000, 2)).unwrap();
        assert!((big.deriv(0.5, big.default_bandwidth()).unwrap() - 1.0).abs() < 0.05);
        let sqrt_law = EmpiricalQuantile::new(uniform_sample(1_000_000, 3).into_iter().map(f64::sqrt).collect()).unwrap();
        assert!((sqrt_law.deriv(0.25, 0.01).unwrap() - 1.0).abs() < 0.1);
    }

    #[test]
    fn second_deriv_examples() {
        let grid: Vec<f64> = (0..=1000).map(|i| (i as f64 / 1000.0).powi(2)).collect();
        let quad = EmpiricalQuantile::new(grid).unwrap();
        assert!((quad.second_deriv(0.0, 0.05).unwrap() - 2.0).abs() < 0.2);
        let line = EmpiricalQuantile::new((0..=1000).map(|i| i as f64).collect()).unwrap();
        assert!(line.second_deriv(0.0, 0.05).unwrap().abs() / 1000.0 < 0.1);
        let flat = EmpiricalQuantile::new(vec![2.0; 50]).unwrap();
        assert_eq!(flat.second_deriv(0.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn mass_examples() {
        let q = EmpiricalQuantile::new(vec![2.5, 2.5, 3.0]).unwrap();
        assert_abs_diff_eq!(q.mass_at(2.5), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(q.mass_at(2.0), 0.0);
        assert_abs_diff_eq!(q.mass_near(2.6, 0.11), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn local_fit_recovers_polynomials() {
        let grid: Vec<f64> = (0..=20_000).map(|i| {
            let u = i as f64 / 20_000.0;
            1.0 + 0.5 * u * u + u.powi(3)
        }).collect();
        let q = EmpiricalQuantile::new(grid).unwrap();
        let f = q
            .local_fit(&FitSpec {
                coordinate: Coordinate::Probability,
                center: 0.0,
                half_width: 0.2,
                powers: &[0, 2, 3, 4],
                min_points: 10,
                anchor: None,
            })
            .unwrap();
        assert_abs_diff_eq!(f.value(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.derivative(2), 1.0, epsilon = 1e-7);
        assert_eq!(f.derivative(1), 0.0);
        let b = q.boundary_fit(true, 0.1).unwrap();
        assert_abs_diff_eq!(b.derivative(1), 4.0, epsilon = 0.01);
        let cube: Vec<f64> = (0..=20_000).map(|i| 2.0 * (i as f64 / 20_000.0).powf(1.0 / 3.0)).collect();
        let r = EmpiricalQuantile::new(cube).unwrap();
        let fit = r
            .local_fit(&FitSpec {
                coordinate: Coordinate::Root(3),
                center: 0.5,
                half_width: 0.05,
                powers: &[0, 1, 2],
                min_points: 100,
                anchor: None,
            })
            .unwrap();
        assert_abs_diff_eq!(fit.value(), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.derivative(1), 2.0, epsilon = 1e-5);
    }
}
