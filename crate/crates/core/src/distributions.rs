//! Private-value laws in quantile form and seller preferences.

use serde::{Deserialize, Serialize};

use crate::error::DistributionError;

/// Serializable description of a value distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform { lo: f64, hi: f64 },
    ShiftedUniform { lo: f64, hi: f64 },
    PowerLaw {
        exponent: f64,
        #[serde(default)]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    /// Monotone `(alpha, value)` pairs covering `alpha = 0` through `alpha = 1`.
    Tabulated { points: Vec<(f64, f64)> },
}

fn one() -> f64 {
    1.0
}

/// A validated quantile function `V` on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct ValueDistribution {
    spec: DistributionSpec,
    knots: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub regular: bool,
    pub violations: Vec<f64>,
}

impl ValueDistribution {
    pub fn new(spec: DistributionSpec) -> Result<Self, DistributionError> {
        let bad = |msg: String| Err(DistributionError::InvalidParameter(msg));
        let support_ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi;
        let knots = match &spec {
            DistributionSpec::Uniform { lo, hi } | DistributionSpec::ShiftedUniform { lo, hi } => {
                if !support_ok(*lo, *hi) {
                    return bad(format!("support [{lo}, {hi}] must satisfy 0 <= lo < hi"));
                }
                Vec::new()
            }
            DistributionSpec::PowerLaw { exponent, lo, hi } => {
                if !(exponent.is_finite() && *exponent > 0.0) {
                    return bad(format!("exponent {exponent} must be positive"));
                }
                if !support_ok(*lo, *hi) {
                    return bad(format!("support [{lo}, {hi}] must satisfy 0 <= lo < hi"));
                }
                Vec::new()
            }
            DistributionSpec::Tabulated { points } => {
                if points.len() < 2 {
                    return bad("tabulated quantile needs at least two points".into());
                }
                let first = points[0];
                let last = points[points.len() - 1];
                if first.0 != 0.0 || last.0 != 1.0 {
                    return bad("tabulated grid must start at alpha = 0 and end at alpha = 1".into());
                }
                if first.1 < 0.0 || !points.iter().all(|p| p.0.is_finite() && p.1.is_finite()) {
                    return bad("tabulated values must be finite and nonnegative".into());
                }
                for (i, w) in points.windows(2).enumerate() {
                    if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                        return Err(DistributionError::NonMonotone(i + 1));
                    }
                }
                points[1..points.len() - 1].iter().map(|p| p.0).collect()
            }
        };
        Ok(Self { spec, knots })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistributionError> {
        Self::new(DistributionSpec::Uniform { lo, hi })
    }

    pub fn shifted_uniform(lo: f64, hi: f64) -> Result<Self, DistributionError> {
        Self::new(DistributionSpec::ShiftedUniform { lo, hi })
    }

    pub fn power_law(exponent: f64) -> Result<Self, DistributionError> {
        Self::new(DistributionSpec::PowerLaw { exponent, lo: 0.0, hi: 1.0 })
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self, DistributionError> {
        Self::new(DistributionSpec::Tabulated { points })
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    /// Interior kinks of the quantile function; integrals are split here.
    pub fn breakpoints(&self) -> &[f64] {
        &self.knots
    }

    pub fn support(&self) -> (f64, f64) {
        (self.value(0.0), self.value(1.0))
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64, DistributionError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(DistributionError::Domain(alpha));
        }
        Ok(self.value(alpha))
    }

    pub fn quantile_deriv(&self, alpha: f64) -> Result<f64, DistributionError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(DistributionError::Domain(alpha));
        }
        if let DistributionSpec::PowerLaw { exponent, .. } = self.spec {
            if exponent < 1.0 && alpha == 0.0 {
                return Err(DistributionError::Domain(alpha));
            }
        }
        Ok(self.slope(alpha))
    }

    /// `J(alpha) = V(alpha) - (1 - alpha) V'(alpha)`.
    pub fn virtual_value(&self, alpha: f64) -> Result<f64, DistributionError> {
        let v = self.quantile(alpha)?;
        let d = if alpha == 1.0 { 0.0 } else { self.quantile_deriv(alpha)? };
        Ok(v - (1.0 - alpha) * d)
    }

    /// Strict monotonicity of the virtual value on `grid_size` interior points.
    pub fn check_regularity(&self, grid_size: usize) -> RegularityReport {
        let grid_size = grid_size.max(3);
        let step = 1.0 / (grid_size + 1) as f64;
        let j: Vec<(f64, f64)> = (1..=grid_size)
            .map(|i| {
                let a = i as f64 * step;
                (a, self.value(a) - (1.0 - a) * self.slope(a))
            })
            .collect();
        let violations: Vec<f64> = j.windows(2).filter(|w| w[1].1 <= w[0].1).map(|w| w[0].0).collect();
        RegularityReport { regular: violations.is_empty(), violations }
    }

    /// `V(alpha)` with the argument clamped to `[0, 1]`.
    #[inline]
    pub fn value(&self, alpha: f64) -> f64 {
        let a = alpha.clamp(0.0, 1.0);
        match &self.spec {
            DistributionSpec::Uniform { lo, hi } | DistributionSpec::ShiftedUniform { lo, hi } => lo + (hi - lo) * a,
            DistributionSpec::PowerLaw { exponent, lo, hi } => lo + (hi - lo) * a.powf(*exponent),
            DistributionSpec::Tabulated { points } => {
                let i = segment(points, a);
                let (a0, v0) = points[i];
                let (a1, v1) = points[i + 1];
                v0 + (v1 - v0) * (a - a0) / (a1 - a0)
            }
        }
    }

    /// `V'(alpha)` with the argument clamped; tabulated laws use the right segment slope.
    #[inline]
    pub fn slope(&self, alpha: f64) -> f64 {
        let a = alpha.clamp(0.0, 1.0);
        match &self.spec {
            DistributionSpec::Uniform { lo, hi } | DistributionSpec::ShiftedUniform { lo, hi } => hi - lo,
            DistributionSpec::PowerLaw { exponent, lo, hi } => (hi - lo) * exponent * a.powf(exponent - 1.0),
            DistributionSpec::Tabulated { points } => {
                let i = segment(points, a);
                (points[i + 1].1 - points[i].1) / (points[i + 1].0 - points[i].0)
            }
        }
    }

    /// Smallest type whose value reaches `v` (clamped to `[0, 1]`).
    pub fn type_of_value(&self, v: f64) -> f64 {
        let (lo, hi) = self.support();
        if v <= lo {
            return 0.0;
        }
        if v >= hi {
            return 1.0;
        }
        match &self.spec {
            DistributionSpec::Uniform { lo, hi } | DistributionSpec::ShiftedUniform { lo, hi } => (v - lo) / (hi - lo),
            DistributionSpec::PowerLaw { exponent, lo, hi } => ((v - lo) / (hi - lo)).powf(1.0 / exponent),
            DistributionSpec::Tabulated { points } => {
                let i = points.partition_point(|p| p.1 <= v).clamp(1, points.len() - 1) - 1;
                let (a0, v0) = points[i];
                let (a1, v1) = points[i + 1];
                a0 + (a1 - a0) * (v - v0) / (v1 - v0)
            }
        }
    }
}

fn segment(points: &[(f64, f64)], a: f64) -> usize {
    let idx = points.partition_point(|p| p.0 <= a);
    idx.clamp(1, points.len() - 1) - 1
}

impl TryFrom<DistributionSpec> for ValueDistribution {
    type Error = DistributionError;
    fn try_from(spec: DistributionSpec) -> Result<Self, Self::Error> {
        Self::new(spec)
    }
}

impl From<ValueDistribution> for DistributionSpec {
    fn from(d: ValueDistribution) -> Self {
        d.spec
    }
}

/// Seller utility over realized revenue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Utility {
    RiskNeutral,
    Crra { rho: f64 },
    /// Piecewise-linear concave utility through `(x, U(x))` points.
    Tabulated { points: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SellerPreferences {
    pub utility: Utility,
    pub outside_option: f64,
}

impl SellerPreferences {
    pub fn new(utility: Utility, outside_option: f64) -> Result<Self, DistributionError> {
        let prefs = Self { utility, outside_option };
        prefs.validate()?;
        Ok(prefs)
    }

    pub fn risk_neutral(outside_option: f64) -> Self {
        Self { utility: Utility::RiskNeutral, outside_option }
    }

    pub fn crra(rho: f64, outside_option: f64) -> Result<Self, DistributionError> {
        Self::new(Utility::Crra { rho }, outside_option)
    }

    /// Finite-difference check of `U' > 0` and `U'' <= 0`, plus parameter ranges.
    pub fn validate(&self) -> Result<(), DistributionError> {
        if !(self.outside_option.is_finite() && self.outside_option >= 0.0) {
            return Err(DistributionError::InvalidParameter(format!(
                "outside option {} must be nonnegative",
                self.outside_option
            )));
        }
        let (lo, hi) = match &self.utility {
            Utility::RiskNeutral => (0.0, 10.0),
            Utility::Crra { rho } => {
                if !(*rho > 0.0 && *rho <= 1.0) {
                    return Err(DistributionError::InvalidParameter(format!("CRRA rho {rho} must lie in (0, 1]")));
                }
                (1e-3, 10.0)
            }
            Utility::Tabulated { points } => {
                if points.len() < 2 {
                    return Err(DistributionError::InvalidParameter("tabulated utility needs two points".into()));
                }
                for (i, w) in points.windows(2).enumerate() {
                    if w[1].0 <= w[0].0 {
                        return Err(DistributionError::NonMonotone(i + 1));
                    }
                }
                (points[0].0, points[points.len() - 1].0)
            }
        };
        let steps = 400;
        let h = (hi - lo) / steps as f64;
        for i in 1..steps {
            let x = lo + h * i as f64;
            let d1 = self.u(x + h) - self.u(x);
            let d0 = self.u(x) - self.u(x - h);
            if d1 <= 0.0 || d1 - d0 > 1e-12 * (1.0 + d0.abs()) {
                return Err(DistributionError::NotConcave(x));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn u(&self, x: f64) -> f64 {
        match &self.utility {
            Utility::RiskNeutral => x,
            Utility::Crra { rho } => x.max(0.0).powf(*rho),
            Utility::Tabulated { points } => {
                let i = segment(points, x);
                let (x0, u0) = points[i];
                let (x1, u1) = points[i + 1];
                u0 + (u1 - u0) * (x - x0) / (x1 - x0)
            }
        }
    }

    #[inline]
    pub fn du(&self, x: f64) -> f64 {
        match &self.utility {
            Utility::RiskNeutral => 1.0,
            Utility::Crra { rho } => rho * x.max(f64::MIN_POSITIVE).powf(rho - 1.0),
            Utility::Tabulated { points } => {
                let i = segment(points, x);
                (points[i + 1].1 - points[i].1) / (points[i + 1].0 - points[i].0)
            }
        }
    }

    pub fn outside_utility(&self) -> f64 {
        self.u(self.outside_option)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unif() -> ValueDistribution {
        ValueDistribution::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(unif().quantile(0.5).unwrap(), 0.5);
        assert_eq!(unif().quantile(0.0).unwrap(), 0.0);
        let shifted = ValueDistribution::shifted_uniform(0.25, 1.0).unwrap();
        assert_abs_diff_eq!(shifted.quantile(1.0 / 3.0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(unif().quantile(1.5).is_err());
        assert!(unif().quantile(-0.1).is_err());
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(unif().quantile_deriv(0.3).unwrap(), 1.0);
        let shifted = ValueDistribution::shifted_uniform(0.25, 1.0).unwrap();
        assert_abs_diff_eq!(shifted.quantile_deriv(0.5).unwrap(), 0.75, epsilon = 1e-15);
        let sq = ValueDistribution::power_law(2.0).unwrap();
        assert_abs_diff_eq!(sq.quantile_deriv(0.5).unwrap(), 1.0, epsilon = 1e-15);
        let root = ValueDistribution::power_law(0.5).unwrap();
        assert!(root.quantile_deriv(0.0).is_err());
    }

    #[test]
    fn virtual_value_examples() {
        assert_abs_diff_eq!(unif().virtual_value(0.5).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(unif().virtual_value(0.75).unwrap(), 0.5, epsilon = 1e-15);
        let sq = ValueDistribution::power_law(2.0).unwrap();
        assert_abs_diff_eq!(sq.virtual_value(1.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn regularity_examples() {
        assert!(unif().check_regularity(100).regular);
        let sq = ValueDistribution::power_law(2.0).unwrap();
        let report = sq.check_regularity(100);
        assert!(!report.regular);
        assert!(report.violations.iter().all(|&a| a < 1.0 / 3.0));
        assert!(!report.violations.is_empty());
        let points: Vec<(f64, f64)> = (0..=20).map(|i| (i as f64 / 20.0, i as f64 / 20.0)).collect();
        assert!(ValueDistribution::tabulated(points).unwrap().check_regularity(50).regular);
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(ValueDistribution::uniform(1.0, 0.5).is_err());
        assert!(ValueDistribution::power_law(-1.0).is_err());
        assert!(ValueDistribution::tabulated(vec![(0.0, 0.0), (0.5, 0.6), (1.0, 0.5)]).is_err());
        assert!(ValueDistribution::tabulated(vec![(0.1, 0.0), (1.0, 1.0)]).is_err());
        assert!(SellerPreferences::crra(1.5, 0.0).is_err());
        let convex = Utility::Tabulated { points: vec![(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)] };
        assert!(SellerPreferences::new(convex, 0.0).is_err());
    }

    #[test]
    fn tabulated_interpolation() {
        let d = ValueDistribution::tabulated(vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.5)]).unwrap();
        assert_abs_diff_eq!(d.value(0.25), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.slope(0.75), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.type_of_value(1.25), 0.75, epsilon = 1e-15);
        assert_eq!(d.breakpoints(), &[0.5]);
    }

    #[test]
    fn json_round_trip() {
        let d: ValueDistribution = serde_json::from_str(r#"{"family":"uniform","lo":0.0,"hi":1.0}"#).unwrap();
        assert_eq!(d, unif());
        let back = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<ValueDistribution>(&back).unwrap(), d);
        assert!(serde_json::from_str::<ValueDistribution>(r#"{"family":"uniform","lo":2.0,"hi":1.0}"#).is_err());
    }

    #[test]
    fn utilities() {
        let p = SellerPreferences::crra(0.5, 0.25).unwrap();
        assert_abs_diff_eq!(p.outside_utility(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.du(0.25), 1.0, epsilon = 1e-15);
        assert!(SellerPreferences::risk_neutral(0.0).validate().is_ok());
    }
}
