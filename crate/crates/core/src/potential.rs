//! Energy densities `psi(J)` and the weight data `(f, p, I)` of the linear
//! equation they induce.
//!
//! For a potential `psi` the function `f` solves `f'(t) = t^(1/2) psi''(t)`
//! and the weight is `p(r) = (f^-1(r))^(-1/2)`, so that `J = p(r)^-2` along
//! the construction. Builtin potentials carry closed-form weights; any
//! potential can also be processed numerically by quadrature and inversion.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{JoyceError, Result};
use crate::numeric::{adaptive_simpson, bracketed_root, diff1_fourth, CubicHermite};

/// Relative round-trip tolerance for `f_of_j` / `J(r)`.
pub const ROUND_TRIP_TOL: f64 = 1e-10;

/// A potential `psi` tabulated on a log-spaced `t` grid.
///
/// Derivatives in `s = ln t` are estimated at the knots by fourth-order
/// differences and interpolated with cubic Hermite pieces; the innermost
/// `d^2 psi / ds^2` table uses monotone (Fritsch-Butland) slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPotential {
    label: String,
    psi: CubicHermite,
    psi_s: CubicHermite,
    psi_ss: CubicHermite,
}

impl TabulatedPotential {
    pub fn from_pairs(label: impl Into<String>, t: &[f64], psi: &[f64]) -> Result<Self> {
        if t.len() < 8 || t.len() != psi.len() {
            return Err(JoyceError::InvalidInput(
                "tabulated potential needs at least 8 (t, psi) pairs".into(),
            ));
        }
        if t.iter().any(|&v| !(v > 0.0 && v.is_finite())) || psi.iter().any(|v| !v.is_finite()) {
            return Err(JoyceError::InvalidInput(
                "tabulated potential needs finite psi and t > 0".into(),
            ));
        }
        let s: Vec<f64> = t.iter().map(|v| v.ln()).collect();
        let hs = (s[s.len() - 1] - s[0]) / (s.len() - 1) as f64;
        if hs <= 0.0 || s.windows(2).any(|w| ((w[1] - w[0]) - hs).abs() > 1e-6 * hs) {
            return Err(JoyceError::InvalidInput(
                "tabulated potential must be sampled on an increasing log-spaced grid".into(),
            ));
        }
        let d1 = diff1_fourth(psi, hs);
        let d2 = diff1_fourth(&d1, hs);
        Ok(Self {
            label: label.into(),
            psi: CubicHermite::new(s.clone(), psi.to_vec(), d1.clone())?,
            psi_s: CubicHermite::new(s.clone(), d1, d2.clone())?,
            psi_ss: CubicHermite::monotone(s, d2)?,
        })
    }

    /// Read a two-column CSV `t,psi` (an optional non-numeric header line is
    /// skipped).
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut t = Vec::new();
        let mut psi = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (a, b) = (cols.next(), cols.next());
            match (
                a.and_then(|v| v.parse::<f64>().ok()),
                b.and_then(|v| v.parse::<f64>().ok()),
            ) {
                (Some(x), Some(y)) => {
                    t.push(x);
                    psi.push(y);
                }
                _ if lineno == 0 => continue,
                _ => {
                    return Err(JoyceError::InvalidInput(format!(
                        "{}:{}: expected `t,psi`",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Self::from_pairs(path.display().to_string(), &t, &psi)
    }

    pub fn t_range(&self) -> (f64, f64) {
        let (a, b) = self.psi.domain();
        (a.exp(), b.exp())
    }

    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let s = t.ln();
        let v = self.psi.eval(s)[0];
        let ds = self.psi_s.eval(s)[0];
        let dss = self.psi_ss.eval(s)[0];
        (v, ds / t, (dss - ds) / (t * t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `psi(t) = -log t`
    LogDet,
    /// `psi(t) = -t^alpha`, `0 < alpha < 1`
    Power {
        alpha: f64,
    },
    /// `psi(t) = t^(1/4)` (affine maximal surfaces)
    AffineQuarter,
    Custom(Arc<TabulatedPotential>),
    /// `t psi(1/t)` of the inner potential
    Dual(Box<Potential>),
}

/// An energy density `psi` on `(0, inf)` with its first two derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    curvature_sign: i8,
}

impl Potential {
    pub fn logdet() -> Self {
        Self {
            kind: PotentialKind::LogDet,
            curvature_sign: 1,
        }
    }

    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(JoyceError::InvalidInput(format!(
                "power exponent must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self {
            kind: PotentialKind::Power { alpha },
            curvature_sign: 1,
        })
    }

    pub fn affine_quarter() -> Self {
        Self {
            kind: PotentialKind::AffineQuarter,
            curvature_sign: -1,
        }
    }

    /// Wrap a tabulated potential; the curvature sign is read from the table
    /// and must be constant.
    pub fn custom(table: TabulatedPotential) -> Result<Self> {
        let (lo, hi) = table.t_range();
        let table = Arc::new(table);
        let sign = sampled_curvature_sign(|t| table.eval(t).2, lo, hi)?;
        Ok(Self {
            kind: PotentialKind::Custom(table),
            curvature_sign: sign,
        })
    }

    /// Parse `logdet`, `power:<alpha>`, `affine`, `file:<path>` or
    /// `dual:<spec>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "logdet" {
            return Ok(Self::logdet());
        }
        if spec == "affine" {
            return Ok(Self::affine_quarter());
        }
        if let Some(a) = spec.strip_prefix("power:") {
            let alpha: f64 = a
                .parse()
                .map_err(|_| JoyceError::InvalidInput(format!("bad power exponent `{a}`")))?;
            return Self::power(alpha);
        }
        if let Some(path) = spec.strip_prefix("file:") {
            return Self::custom(TabulatedPotential::from_csv(Path::new(path))?);
        }
        if let Some(inner) = spec.strip_prefix("dual:") {
            return Ok(dual_potential(&Self::parse(inner)?));
        }
        Err(JoyceError::InvalidInput(format!(
            "unknown potential `{spec}` (expected logdet, power:<alpha>, affine, file:<path>, dual:<spec>)"
        )))
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn curvature_sign(&self) -> i8 {
        self.curvature_sign
    }

    /// Range of `t` on which the potential is defined.
    pub fn t_range(&self) -> (f64, f64) {
        match &self.kind {
            PotentialKind::Custom(t) => t.t_range(),
            PotentialKind::Dual(inner) => {
                let (a, b) = inner.t_range();
                (1.0 / b, 1.0 / a)
            }
            _ => (0.0, f64::INFINITY),
        }
    }

    /// `(psi, psi', psi'')` at `t > 0`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match &self.kind {
            PotentialKind::LogDet => (-t.ln(), -1.0 / t, 1.0 / (t * t)),
            PotentialKind::Power { alpha } => {
                let a = *alpha;
                let ta = t.powf(a);
                (-ta, -a * ta / t, a * (1.0 - a) * ta / (t * t))
            }
            PotentialKind::AffineQuarter => {
                let q = t.powf(0.25);
                (q, 0.25 * q / t, -0.1875 * q / (t * t))
            }
            PotentialKind::Custom(table) => table.eval(t),
            PotentialKind::Dual(inner) => {
                let s = 1.0 / t;
                let (v, d1, d2) = inner.eval(s);
                (t * v, v - s * d1, s * s * s * d2)
            }
        }
    }

    pub fn psi(&self, t: f64) -> f64 {
        self.eval(t).0
    }
    pub fn psi1(&self, t: f64) -> f64 {
        self.eval(t).1
    }
    pub fn psi2(&self, t: f64) -> f64 {
        self.eval(t).2
    }

    /// Canonical spec string (inverse of [`Potential::parse`]).
    pub fn spec_string(&self) -> String {
        match &self.kind {
            PotentialKind::LogDet => "logdet".into(),
            PotentialKind::Power { alpha } => format!("power:{alpha}"),
            PotentialKind::AffineQuarter => "affine".into(),
            PotentialKind::Custom(t) => format!("file:{}", t.label),
            PotentialKind::Dual(inner) => format!("dual:{}", inner.spec_string()),
        }
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec_string())
    }
}

fn sampled_curvature_sign(psi2: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<i8> {
    let (a, b) = (lo.max(1e-6).ln(), hi.min(1e6).ln());
    let mut sign = 0i8;
    for k in 0..=200 {
        let t = (a + (b - a) * k as f64 / 200.0).exp();
        let v = psi2(t);
        let s = if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        };
        if s == 0 || (sign != 0 && s != sign) {
            return Err(JoyceError::CurvatureSign(format!("psi'' = {v:.3e} at t = {t:.3e}")));
        }
        sign = s;
    }
    Ok(sign)
}

/// The dual potential `t psi(1/t)` carried by the Legendre transform.
pub fn dual_potential(pot: &Potential) -> Potential {
    Potential {
        kind: PotentialKind::Dual(Box::new(pot.clone())),
        curvature_sign: pot.curvature_sign,
    }
}

/// The weight `p(r)` of the linear equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// `p(r) = r`
    Linear,
    /// `p(r) = r^exponent`
    Power { exponent: f64 },
    /// `p(r) = exp(rate r)`
    Exponential { rate: f64 },
    /// `p(r) = 1 / q(-r)`
    Reflected(Box<Weight>),
    /// `p(r) = factor q(r)`
    Scaled { inner: Box<Weight>, factor: f64 },
    /// Cubic Hermite table of `(r, p, p')`.
    Tabulated(Arc<CubicHermite>),
}

impl Weight {
    /// `(p, p')` at `r`.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        match self {
            Weight::Linear => (r, 1.0),
            Weight::Power { exponent } => {
                let p = r.powf(*exponent);
                (p, exponent * p / r)
            }
            Weight::Exponential { rate } => {
                let p = (rate * r).exp();
                (p, rate * p)
            }
            Weight::Reflected(inner) => {
                let (q, dq) = inner.eval(-r);
                (1.0 / q, dq / (q * q))
            }
            Weight::Scaled { inner, factor } => {
                let (q, dq) = inner.eval(r);
                (factor * q, factor * dq)
            }
            Weight::Tabulated(table) => {
                let v = table.eval(r);
                (v[0], v[1])
            }
        }
    }

    /// Exponent `e` when the weight is `c r^e` for some constant `c > 0`.
    pub fn power_exponent(&self) -> Option<f64> {
        match self {
            Weight::Linear => Some(1.0),
            Weight::Power { exponent } => Some(*exponent),
            Weight::Scaled { inner, .. } => inner.power_exponent(),
            _ => None,
        }
    }

    fn describe(&self) -> String {
        match self {
            Weight::Linear => "r".into(),
            Weight::Power { exponent } => format!("r^{exponent}"),
            Weight::Exponential { rate } => format!("exp({rate} r)"),
            Weight::Reflected(inner) => format!("1/({})[r->-r]", inner.describe()),
            Weight::Scaled { inner, factor } => format!("{factor}*{}", inner.describe()),
            Weight::Tabulated(_) => "tabulated".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    BuiltinClosedForm,
    DerivedByQuadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JoyceMode {
    ClosedForm,
    Quadrature,
}

impl std::str::FromStr for JoyceMode {
    type Err = JoyceError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed-form" | "closed" => Ok(Self::ClosedForm),
            "quadrature" => Ok(Self::Quadrature),
            _ => Err(JoyceError::InvalidInput(format!("unknown joyce mode `{s}`"))),
        }
    }
}

impl fmt::Display for JoyceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ClosedForm => "closed-form",
            Self::Quadrature => "quadrature",
        })
    }
}

/// Point evaluation of the weight data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoyceEval {
    pub p: f64,
    pub dp: f64,
    /// `J = p^-2`
    pub j: f64,
}

/// Interval `I`, weight `p` on `I`, and the relation `J(r) = p(r)^-2`.
#[derive(Debug, Clone, PartialEq)]
pub struct JoyceData {
    weight: Weight,
    interval: (f64, f64),
    provenance: Provenance,
}

impl JoyceData {
    pub fn new(weight: Weight, interval: (f64, f64), provenance: Provenance) -> Result<Self> {
        if !(interval.0 < interval.1) {
            return Err(JoyceError::InvalidInput(format!("empty weight interval {interval:?}")));
        }
        Ok(Self {
            weight,
            interval,
            provenance,
        })
    }

    pub fn linear() -> Self {
        Self::new(Weight::Linear, (0.0, f64::INFINITY), Provenance::BuiltinClosedForm).unwrap()
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn describe(&self) -> String {
        format!(
            "p(r) = {} on ({}, {})",
            self.weight.describe(),
            self.interval.0,
            self.interval.1
        )
    }

    /// Same data with `p` multiplied by a positive constant.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(JoyceError::InvalidInput(format!(
                "scale factor {factor} must be positive"
            )));
        }
        Ok(Self {
            weight: Weight::Scaled {
                inner: Box::new(self.weight.clone()),
                factor,
            },
            ..self.clone()
        })
    }

    pub fn contains(&self, r: f64) -> bool {
        r > self.interval.0 && r < self.interval.1
    }

    /// `(p, p', J)` at `r`; only valid strictly inside `I`.
    pub fn eval(&self, r: f64) -> Result<JoyceEval> {
        if !self.contains(r) {
            return Err(JoyceError::Domain {
                value: r,
                lo: self.interval.0,
                hi: self.interval.1,
            });
        }
        Ok(self.eval_unchecked(r))
    }

    #[inline]
    pub fn eval_unchecked(&self, r: f64) -> JoyceEval {
        let (p, dp) = self.weight.eval(r);
        JoyceEval {
            p,
            dp,
            j: 1.0 / (p * p),
        }
    }

    /// Open range of `J` over `I`.
    pub fn j_range(&self) -> (f64, f64) {
        fn range(w: &Weight, interval: (f64, f64)) -> (f64, f64) {
            match w {
                Weight::Linear | Weight::Power { .. } | Weight::Exponential { .. } => (0.0, f64::INFINITY),
                Weight::Reflected(inner) => {
                    let (a, b) = range(inner, (-interval.1, -interval.0));
                    (1.0 / b, if a == 0.0 { f64::INFINITY } else { 1.0 / a })
                }
                Weight::Scaled { inner, factor } => {
                    let (a, b) = range(inner, interval);
                    (a / (factor * factor), b / (factor * factor))
                }
                Weight::Tabulated(_) => {
                    let ja = j_of(w.eval(interval.0).0);
                    let jb = j_of(w.eval(interval.1).0);
                    (ja.min(jb), ja.max(jb))
                }
            }
        }
        range(&self.weight, self.interval)
    }

    /// The unique `r` in `I` with `p(r)^-2 = J`.
    pub fn f_of_j(&self, j: f64) -> Result<f64> {
        let (lo, hi) = self.j_range();
        if !(j > lo && j < hi) {
            return Err(JoyceError::Range { value: j, lo, hi });
        }
        let r = invert_weight(&self.weight, self.interval, j)?;
        Ok(r)
    }
}

fn j_of(p: f64) -> f64 {
    1.0 / (p * p)
}

fn invert_weight(w: &Weight, interval: (f64, f64), j: f64) -> Result<f64> {
    match w {
        Weight::Linear => Ok(j.powf(-0.5)),
        Weight::Power { exponent } => Ok(j.powf(-0.5 / exponent)),
        Weight::Exponential { rate } => Ok(-j.ln() / (2.0 * rate)),
        Weight::Reflected(inner) => Ok(-invert_weight(inner, (-interval.1, -interval.0), 1.0 / j)?),
        Weight::Scaled { inner, factor } => invert_weight(inner, interval, factor * factor * j),
        Weight::Tabulated(_) => {
            let g = |r: f64| j_of(w.eval(r).0).ln() - j.ln();
            let dg = |r: f64| {
                let (p, dp) = w.eval(r);
                -2.0 * dp / p
            };
            bracketed_root(g, dg, interval.0, interval.1, 1e-15)
        }
    }
}

/// Options for the quadrature route of [`derive_joyce_data`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// `t` range on which `f` is tabulated (clipped to a custom table's range).
    pub t_range: (f64, f64),
    /// Number of log-spaced `t` knots for the cumulative integral.
    pub t_knots: usize,
    /// Number of uniformly spaced `r` knots of the returned weight table.
    pub r_knots: usize,
    pub tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            t_range: (1e-3, 1e3),
            t_knots: 241,
            r_knots: 801,
            tol: 1e-13,
        }
    }
}

/// Derive `(I, p)` from a potential, either from the builtin closed forms or
/// numerically.
pub fn derive_joyce_data(pot: &Potential, mode: JoyceMode) -> Result<JoyceData> {
    match mode {
        JoyceMode::ClosedForm => closed_form(pot),
        JoyceMode::Quadrature => derive_by_quadrature(pot, QuadratureOptions::default()),
    }
}

fn closed_form(pot: &Potential) -> Result<JoyceData> {
    let positive = (0.0, f64::INFINITY);
    let (weight, interval) = match pot.kind() {
        PotentialKind::LogDet => (Weight::Linear, positive),
        PotentialKind::Power { alpha } => {
            if (alpha - 0.5).abs() < 1e-12 {
                (Weight::Exponential { rate: 0.5 }, (f64::NEG_INFINITY, f64::INFINITY))
            } else {
                (
                    Weight::Power {
                        exponent: 1.0 / (1.0 - 2.0 * alpha),
                    },
                    positive,
                )
            }
        }
        PotentialKind::AffineQuarter => (Weight::Power { exponent: 2.0 }, positive),
        PotentialKind::Dual(inner) => {
            return Ok(dual_joyce(&closed_form(inner)?));
        }
        PotentialKind::Custom(_) => {
            return Err(JoyceError::InvalidInput(
                "tabulated potentials have no closed-form weight; use quadrature mode".into(),
            ))
        }
    };
    JoyceData::new(weight, interval, Provenance::BuiltinClosedForm)
}

/// Quadrature route: tabulate `f(t) = int_1^t s^(1/2) psi''(s) ds`, invert it
/// by bisection refined with Newton, and tabulate `p(r) = t(r)^(-1/2)` with
/// its exact derivative.
pub fn derive_by_quadrature(pot: &Potential, opts: QuadratureOptions) -> Result<JoyceData> {
    let (plo, phi) = pot.t_range();
    let t_lo = opts.t_range.0.max(plo);
    let t_hi = opts.t_range.1.min(phi);
    if !(t_lo < t_hi) {
        return Err(JoyceError::InvalidInput("empty t range for quadrature".into()));
    }
    let sign = sampled_curvature_sign(|t| pot.psi2(t), t_lo, t_hi)?;
    let fprime = |t: f64| t.sqrt() * pot.psi2(t);

    // Knots uniform in s = ln t; integrate f' e^s ds to stay well conditioned.
    let (s_lo, s_hi) = (t_lo.ln(), t_hi.ln());
    let n = opts.t_knots.max(8);
    let s_knots: Vec<f64> = (0..n)
        .map(|k| s_lo + (s_hi - s_lo) * k as f64 / (n - 1) as f64)
        .collect();
    let anchor = 0f64.clamp(s_lo, s_hi);
    let integrand = |s: f64| {
        let t = s.exp();
        fprime(t) * t
    };
    let scale = integrand(anchor).abs().max(1e-300);
    let mut f_knots = vec![0.0; n];
    let k0 = s_knots.partition_point(|&s| s < anchor);
    // cumulative integral outward from the anchor
    for k in k0..n {
        let from = if k == k0 { anchor } else { s_knots[k - 1] };
        let prev = if k == k0 { 0.0 } else { f_knots[k - 1] };
        f_knots[k] = prev + adaptive_simpson(&integrand, from, s_knots[k], opts.tol * scale);
    }
    for k in (0..k0).rev() {
        let from = if k + 1 == k0 { anchor } else { s_knots[k + 1] };
        let prev = if k + 1 == k0 { 0.0 } else { f_knots[k + 1] };
        f_knots[k] = prev - adaptive_simpson(&integrand, s_knots[k], from, opts.tol * scale);
    }
    for w in f_knots.windows(2) {
        if (w[1] - w[0]) * f64::from(sign) <= 0.0 {
            return Err(JoyceError::NonMonotone(format!(
                "f not strictly monotone near f = {}",
                w[0]
            )));
        }
    }
    let f_at = |s: f64| -> f64 {
        let k = crate::numeric::locate(&s_knots, s);
        let k = if (s - s_knots[k]).abs() <= (s - s_knots[k + 1]).abs() {
            k
        } else {
            k + 1
        };
        f_knots[k] + adaptive_simpson(&integrand, s_knots[k], s, opts.tol * scale)
    };

    let (r_a, r_b) = (f_knots[0], f_knots[n - 1]);
    let (r_lo, r_hi) = (r_a.min(r_b), r_a.max(r_b));
    let m = opts.r_knots.max(8);
    let mut rs = Vec::with_capacity(m);
    let mut ps = Vec::with_capacity(m);
    let mut dps = Vec::with_capacity(m);
    for k in 0..m {
        let r = r_lo + (r_hi - r_lo) * k as f64 / (m - 1) as f64;
        let s = if k == 0 {
            if sign > 0 {
                s_lo
            } else {
                s_hi
            }
        } else if k == m - 1 {
            if sign > 0 {
                s_hi
            } else {
                s_lo
            }
        } else {
            bracketed_root(|s| f_at(s) - r, integrand, s_lo, s_hi, 1e-15)?
        };
        let t = s.exp();
        let p = t.powf(-0.5);
        rs.push(r);
        ps.push(p);
        dps.push(-0.5 * p / t / fprime(t));
    }
    let table = CubicHermite::new(rs, ps, dps)?;
    JoyceData::new(
        Weight::Tabulated(Arc::new(table)),
        (r_lo, r_hi),
        Provenance::DerivedByQuadrature,
    )
}

/// Weight data of the Legendre-dual equation: `p*(r) = p(-r)^-1` on `-I`.
pub fn dual_joyce(jd: &JoyceData) -> JoyceData {
    JoyceData {
        weight: Weight::Reflected(Box::new(jd.weight.clone())),
        interval: (-jd.interval.1, -jd.interval.0),
        provenance: jd.provenance,
    }
}
