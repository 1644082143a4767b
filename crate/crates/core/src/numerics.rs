//! Quadrature, bracketing root finders and small combinatorial helpers.

use crate::error::NumericsError;

pub const QUAD_TOL: f64 = 1e-10;
pub const QUAD_DEPTH: u32 = 40;
pub const BISECT_ITERS: u32 = 200;

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates over `[a, b]`, splitting at every breakpoint that falls strictly inside.
pub fn integrate_split<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
    let inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
    let pieces = inner.len() + 1;
    let mut total = 0.0;
    let mut left = lo;
    for &x in inner.iter().chain(std::iter::once(&hi)) {
        total += adaptive_simpson(&f, left, x, tol / pieces as f64, QUAD_DEPTH);
        left = x;
    }
    sign * total
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre rule with fixed panel count; cheap and smooth in the limits.
#[derive(Clone, Debug)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panels: usize,
}

impl GaussRule {
    pub fn new(order: usize, panels: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights, panels: panels.max(1) }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let width = (b - a) / self.panels as f64;
        let half = 0.5 * width;
        let mut total = 0.0;
        for p in 0..self.panels {
            let mid = a + (p as f64 + 0.5) * width;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                total += w * f(mid + half * x);
            }
        }
        total * half
    }
}

/// Bisection for a monotone function on `[lo, hi]`.
///
/// Signs at the endpoints must differ (a zero at an endpoint is returned directly).
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64, NumericsError> {
    let mut a = lo;
    let mut b = hi;
    let fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(NumericsError::NoBracket { lo, hi, f_lo: fa, f_hi: fb });
    }
    let rising = fb > 0.0;
    for _ in 0..BISECT_ITERS {
        let m = 0.5 * (a + b);
        if b - a <= tol || m <= a || m >= b {
            return Ok(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm > 0.0) == rising {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Solves `f(x) = target` for increasing or decreasing `f`, reporting whether the
/// target fell outside the attainable range (in which case the nearer endpoint is returned).
pub fn invert_monotone<F: Fn(f64) -> f64>(f: F, target: f64, lo: f64, hi: f64, tol: f64) -> (f64, bool) {
    let g = |x: f64| f(x) - target;
    match bisect(g, lo, hi, tol) {
        Ok(x) => (x, false),
        Err(_) => {
            if g(lo).abs() <= g(hi).abs() {
                (lo, true)
            } else {
                (hi, true)
            }
        }
    }
}

/// Checks strict monotonicity of `f` on a uniform grid of `points` over `[lo, hi]`.
pub fn is_strictly_monotone<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize, increasing: bool) -> bool {
    let step = (hi - lo) / (points - 1) as f64;
    let mut prev = f(lo);
    for i in 1..points {
        let cur = f(lo + step * i as f64);
        let ok = if increasing { cur > prev } else { cur < prev };
        if !ok {
            return false;
        }
        prev = cur;
    }
    true
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// CDF of the second-highest of `n` iid uniform types, `n a^{n-1} - (n-1) a^n`.
pub fn second_order_cdf(n: u32, a: f64) -> f64 {
    if n < 2 {
        return 1.0;
    }
    let nf = n as f64;
    nf * a.powi(n as i32 - 1) - (nf - 1.0) * a.powi(n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_polynomials() {
        let v = adaptive_simpson(|x| x * x * x - x, 0.0, 2.0, 1e-12, 40);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-12);
        let v = adaptive_simpson(|x: f64| x.sqrt(), 0.0, 1.0, 1e-10, 40);
        assert_abs_diff_eq!(v, 2.0 / 3.0, epsilon = 1e-8);
    }

    #[test]
    fn split_integration_handles_kinks() {
        let f = |x: f64| (x - 0.3).abs();
        let v = integrate_split(f, 0.0, 1.0, &[0.3], 1e-12);
        assert_abs_diff_eq!(v, 0.045 + 0.245, epsilon = 1e-12);
        assert_abs_diff_eq!(integrate_split(f, 1.0, 0.0, &[0.3], 1e-12), -0.29, epsilon = 1e-12);
    }

    #[test]
    fn gauss_rule_exactness() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-14);
        let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_abs_diff_eq!(m, 2.0 / 15.0, epsilon = 1e-14);
        let rule = GaussRule::new(10, 4);
        assert_abs_diff_eq!(rule.integrate(|t: f64| t.exp(), 0.0, 1.0), 1f64.exp() - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn bisection_finds_roots() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert_abs_diff_eq!(r, 2f64.sqrt(), epsilon = 1e-13);
        let r = bisect(|x| 1.0 - 2.0 * x, 0.0, 1.0, 1e-14).unwrap();
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-13);
        assert!(bisect(|x| x + 1.0, 0.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn inversion_reports_out_of_range() {
        let (x, clipped) = invert_monotone(|x| x, 2.0, 0.0, 1.0, 1e-12);
        assert!(clipped);
        assert_eq!(x, 1.0);
    }

    #[test]
    fn binomials_and_order_cdf() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(6, 0), 1.0);
        assert_eq!(binomial(2, 3), 0.0);
        assert_abs_diff_eq!(second_order_cdf(2, 0.5), 0.75, epsilon = 1e-15);
        assert_eq!(second_order_cdf(3, 1.0), 1.0);
    }
}
