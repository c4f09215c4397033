//! Small numerical kernels shared across the pipelines: quadrature rules,
//! one-dimensional interpolants, difference stencils and a bracketed root
//! finder.

use std::sync::OnceLock;

use crate::error::{JoyceError, Result};

/// Gauss-Legendre rule on [-1, 1] with `n` points, computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=n {
                let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n <= 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

/// Cached 16-point Gauss-Legendre nodes and weights on [-1, 1].
pub fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

pub type Mat2 = [[f64; 2]; 2];

pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Inverse of a 2x2 matrix, `None` when the determinant is zero or not finite.
pub fn inv2(m: &Mat2) -> Option<Mat2> {
    let d = det2(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Composite 16-point Gauss-Legendre integral of `f` over [a, b] with `panels`
/// equal panels. Reversed limits give the negated integral.
pub fn gauss_legendre_composite<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = gl16();
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * width;
        let half = 0.5 * width;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            s += w * f(mid + half * x);
        }
        total += half * s;
    }
    total
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
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
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Index `k` of the cell `[xs[k], xs[k+1]]` containing `x` (clamped).
pub fn locate(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    if x <= xs[0] {
        return 0;
    }
    if x >= xs[n - 1] {
        return n - 2;
    }
    match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(k) => k.min(n - 2),
        Err(k) => k - 1,
    }
}

/// Cubic Hermite basis on the unit interval: value, first and second
/// derivative of `y0 h00 + h d0 h10 + y1 h01 + h d1 h11`.
#[inline]
pub fn hermite_cubic(t: f64, y0: f64, y1: f64, d0: f64, d1: f64, h: f64) -> [f64; 3] {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let dh00 = 6.0 * t2 - 6.0 * t;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = -dh00;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let ddh00 = 12.0 * t - 6.0;
    let ddh10 = 6.0 * t - 4.0;
    let ddh01 = -ddh00;
    let ddh11 = 6.0 * t - 2.0;
    [
        y0 * h00 + h * d0 * h10 + y1 * h01 + h * d1 * h11,
        (y0 * dh00 + y1 * dh01) / h + d0 * dh10 + d1 * dh11,
        (y0 * ddh00 + y1 * ddh01) / (h * h) + (d0 * ddh10 + d1 * ddh11) / h,
    ]
}

/// Piecewise cubic Hermite interpolant through `(x, y)` with slopes `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicHermite {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl CubicHermite {
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != y.len() || x.len() != d.len() {
            return Err(JoyceError::InvalidInput(
                "Hermite table needs at least two consistent knots".into(),
            ));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(JoyceError::InvalidInput(
                "Hermite knots must be strictly increasing".into(),
            ));
        }
        Ok(Self { x, y, d })
    }

    /// Monotone cubic (Fritsch-Butland slopes) through the data.
    pub fn monotone(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(JoyceError::InvalidInput(
                "monotone cubic needs at least two knots".into(),
            ));
        }
        let secants: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
        let mut d = vec![0.0; n];
        for k in 1..n - 1 {
            let (s0, s1) = (secants[k - 1], secants[k]);
            d[k] = if s0 * s1 <= 0.0 {
                0.0
            } else {
                let h0 = x[k] - x[k - 1];
                let h1 = x[k + 1] - x[k];
                let w0 = 2.0 * h1 + h0;
                let w1 = h1 + 2.0 * h0;
                (w0 + w1) / (w0 / s0 + w1 / s1)
            };
        }
        d[0] = end_slope(
            x[1] - x[0],
            x.get(2).map_or(1.0, |x2| x2 - x[1]),
            secants[0],
            secants.get(1).copied(),
        );
        d[n - 1] = end_slope(
            x[n - 1] - x[n - 2],
            if n > 2 { x[n - 2] - x[n - 3] } else { 1.0 },
            secants[n - 2],
            if n > 2 { Some(secants[n - 3]) } else { None },
        );
        Self::new(x, y, d)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// Value, first and second derivative at `t` (extrapolates the end cubic).
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let k = locate(&self.x, t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        hermite_cubic(s, self.y[k], self.y[k + 1], self.d[k], self.d[k + 1], h)
    }
}

fn end_slope(h0: f64, h1: f64, s0: f64, s1: Option<f64>) -> f64 {
    let Some(s1) = s1 else { return s0 };
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d * s0 <= 0.0 {
        0.0
    } else if s0 * s1 <= 0.0 && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

/// Second-order first derivative of uniformly spaced samples: central in the
/// interior, one-sided three-point at the ends.
pub fn diff1(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        if n == 2 {
            let d = (values[1] - values[0]) / h;
            out.fill(d);
        }
        return out;
    }
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    for k in 1..n - 1 {
        out[k] = (values[k + 1] - values[k - 1]) / (2.0 * h);
    }
    out
}

/// Second derivative of uniformly spaced samples: central in the interior,
/// one-sided four-point (second order) at the ends when `n >= 4`.
pub fn diff2(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        return out;
    }
    let h2 = h * h;
    for k in 1..n - 1 {
        out[k] = (values[k + 1] - 2.0 * values[k] + values[k - 1]) / h2;
    }
    if n >= 4 {
        out[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / h2;
        out[n - 1] = (2.0 * values[n - 1] - 5.0 * values[n - 2] + 4.0 * values[n - 3] - values[n - 4]) / h2;
    } else {
        out[0] = out[1];
        out[n - 1] = out[n - 2];
    }
    out
}

/// Fourth-order first derivative (five-point stencils, one-sided near the
/// ends). Falls back to [`diff1`] on fewer than five samples.
pub fn diff1_fourth(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    if n < 5 {
        return diff1(values, h);
    }
    let f = values;
    let c = 12.0 * h;
    let mut out = vec![0.0; n];
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / c;
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / c;
    for k in 2..n - 2 {
        out[k] = (f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]) / c;
    }
    let m = n - 1;
    out[m] = (25.0 * f[m] - 48.0 * f[m - 1] + 36.0 * f[m - 2] - 16.0 * f[m - 3] + 3.0 * f[m - 4]) / c;
    out[m - 1] = (3.0 * f[m] + 10.0 * f[m - 1] - 18.0 * f[m - 2] + 6.0 * f[m - 3] - f[m - 4]) / c;
    out
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Root of a monotone function on a bracket: bisection until the bracket is
/// small, then safeguarded Newton steps using `df`.
pub fn bracketed_root<F, D>(f: F, df: D, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 {
        return Err(JoyceError::NonMonotone(format!("root not bracketed on [{lo}, {hi}]")));
    }
    for _ in 0..60 {
        if (hi - lo) <= 1e-6 * (lo.abs() + hi.abs()).max(1e-300) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm * flo < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..50 {
        let fx = f(x);
        let d = df(x);
        let mut next = if d != 0.0 { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if fx * flo < 0.0 {
            hi = x;
        } else {
            lo = x;
            flo = fx;
        }
        let step = (next - x).abs();
        x = next;
        if step <= tol * x.abs().max(1e-300) {
            return Ok(x);
        }
    }
    Ok(x)
}
