//! Solutions `xi(H, r)` of the linear equation
//! `xi_HH + (1/p) d/dr (p xi_r) = 0` sampled on `(H, r)` grids.

use std::fmt;
use std::sync::Arc;

use crate::error::{JoyceError, Result};
use crate::grid::{partial, partial2, Bicubic, Grid2, NodeRect, Norms};
use crate::numeric::gauss_legendre_composite;
use crate::potential::{JoyceData, Weight};

/// First and second partial derivatives in `(H, r)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet2 {
    pub h: f64,
    pub r: f64,
    pub hh: f64,
    pub hr: f64,
    pub rr: f64,
}

impl Jet2 {
    fn scale(self, a: f64) -> Self {
        Self {
            h: a * self.h,
            r: a * self.r,
            hh: a * self.hh,
            hr: a * self.hr,
            rr: a * self.rr,
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            h: self.h + o.h,
            r: self.r + o.r,
            hh: self.hh + o.hh,
            hr: self.hr + o.hr,
            rr: self.rr + o.rr,
        }
    }
}

/// Closed-form evaluator: value and 2-jet at any `(H, r)`.
pub type ExactFn = Arc<dyn Fn(f64, f64) -> (f64, Jet2) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetSource {
    Analytic,
    FiniteDifference,
}

/// A grid function on an `(H, r)` rectangle with a per-node 2-jet.
#[derive(Clone)]
pub struct ScalarField {
    grid: Grid2,
    values: Vec<f64>,
    jet: Vec<Jet2>,
    jet_source: JetSource,
    exact: Option<ExactFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("grid", &self.grid)
            .field("jet_source", &self.jet_source)
            .field("exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

impl ScalarField {
    /// Sample a closed form; the field keeps the evaluator for off-grid use.
    pub fn from_exact(grid: Grid2, f: ExactFn) -> Self {
        let (values, jet) = grid.points().map(|(_, _, p)| f(p[0], p[1])).unzip();
        Self {
            grid,
            values,
            jet,
            jet_source: JetSource::Analytic,
            exact: Some(f),
        }
    }

    /// Nodal values with a second-order finite-difference jet.
    pub fn from_values(grid: Grid2, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(JoyceError::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let jet = fd_jet(&grid, &values);
        Ok(Self {
            grid,
            values,
            jet,
            jet_source: JetSource::FiniteDifference,
            exact: None,
        })
    }

    /// Nodal values with an externally computed jet.
    pub fn from_parts(grid: Grid2, values: Vec<f64>, jet: Vec<Jet2>, jet_source: JetSource) -> Result<Self> {
        if values.len() != grid.len() || jet.len() != grid.len() {
            return Err(JoyceError::GridMismatch("values/jet length".into()));
        }
        Ok(Self {
            grid,
            values,
            jet,
            jet_source,
            exact: None,
        })
    }

    pub fn with_exact(mut self, f: ExactFn) -> Self {
        self.exact = Some(f);
        self
    }

    /// Same values with the jet recomputed by the canonical stencils.
    pub fn with_fd_jet(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.clone(),
            jet: fd_jet(&self.grid, &self.values),
            jet_source: JetSource::FiniteDifference,
            exact: None,
        }
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn jet(&self) -> &[Jet2] {
        &self.jet
    }
    /// Nodes where the jet is trusted: all of them for analytic jets, the
    /// interior for finite-difference ones.
    pub fn trusted_rect(&self) -> NodeRect {
        match self.jet_source {
            JetSource::Analytic => self.grid.full_rect(),
            JetSource::FiniteDifference => self.grid.interior(1).unwrap_or(self.grid.full_rect()),
        }
    }

    pub fn jet_source(&self) -> JetSource {
        self.jet_source
    }
    pub fn exact(&self) -> Option<&ExactFn> {
        self.exact.as_ref()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let jet = self
            .jet
            .iter()
            .zip(&other.jet)
            .map(|(x, y)| x.scale(a).add(y.scale(b)))
            .collect();
        let exact = match (&self.exact, &other.exact) {
            (Some(f), Some(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Some(Arc::new(move |h: f64, r: f64| {
                    let (fv, fj) = f(h, r);
                    let (gv, gj) = g(h, r);
                    (a * fv + b * gv, fj.scale(a).add(gj.scale(b)))
                }) as ExactFn)
            }
            _ => None,
        };
        let jet_source = if self.jet_source == JetSource::Analytic && other.jet_source == JetSource::Analytic {
            JetSource::Analytic
        } else {
            JetSource::FiniteDifference
        };
        Ok(Self {
            grid: self.grid,
            values,
            jet,
            jet_source,
            exact,
        })
    }

    /// Restriction to a node rectangle.
    pub fn restrict(&self, rect: &NodeRect) -> Result<Self> {
        let grid = self.grid.restrict(rect)?;
        let mut values = Vec::with_capacity(grid.len());
        let mut jet = Vec::with_capacity(grid.len());
        for i in rect.i0..=rect.i1 {
            for j in rect.j0..=rect.j1 {
                let k = self.grid.idx(i, j);
                values.push(self.values[k]);
                jet.push(self.jet[k]);
            }
        }
        Ok(Self {
            grid,
            values,
            jet,
            jet_source: self.jet_source,
            exact: self.exact.clone(),
        })
    }

    /// Value and jet at an arbitrary point: the closed form when present,
    /// otherwise bicubic Hermite interpolation of the nodal data.
    pub fn sample(&self, h: f64, r: f64) -> (f64, Jet2) {
        if let Some(f) = &self.exact {
            return f(h, r);
        }
        let b = self.interpolant();
        let s = b.eval([h, r]);
        (
            s.v,
            Jet2 {
                h: s.dx,
                r: s.dy,
                hh: s.dxx,
                hr: s.dxy,
                rr: s.dyy,
            },
        )
    }

    pub fn interpolant(&self) -> Bicubic {
        Bicubic::new(
            self.grid,
            self.values.clone(),
            self.jet.iter().map(|j| j.h).collect(),
            self.jet.iter().map(|j| j.r).collect(),
            self.jet.iter().map(|j| j.hr).collect(),
        )
    }
}

fn fd_jet(grid: &Grid2, values: &[f64]) -> Vec<Jet2> {
    let dh = partial(grid, values, 0);
    let dr = partial(grid, values, 1);
    let dhh = partial2(grid, values, 0);
    let drr = partial2(grid, values, 1);
    let dhr = partial(grid, &dh, 1);
    (0..values.len())
        .map(|k| Jet2 {
            h: dh[k],
            r: dr[k],
            hh: dhh[k],
            hr: dhr[k],
            rr: drr[k],
        })
        .collect()
}

/// Reject grids whose `r` range touches the boundary of `I`.
pub fn check_grid_inside(grid: &Grid2, jd: &JoyceData) -> Result<()> {
    let r = &grid.axes[1];
    let (lo, hi) = jd.interval();
    if !(r.lo > lo && r.hi < hi) {
        return Err(JoyceError::Domain {
            value: if r.lo <= lo { r.lo } else { r.hi },
            lo,
            hi,
        });
    }
    Ok(())
}

/// A per-node residual with its norms over the interior nodes.
#[derive(Debug, Clone)]
pub struct ResidualField {
    pub grid: Grid2,
    pub values: Vec<f64>,
    pub interior: Norms,
}

/// `xi_HH + xi_rr + (p'/p) xi_r` evaluated from the field's jet.
pub fn linear_residual(xi: &ScalarField, jd: &JoyceData) -> Result<ResidualField> {
    check_grid_inside(xi.grid(), jd)?;
    let grid = *xi.grid();
    let values: Vec<f64> = grid
        .points()
        .zip(xi.jet())
        .map(|((_, _, p), d)| {
            let e = jd.eval_unchecked(p[1]);
            d.hh + d.rr + e.dp / e.p * d.r
        })
        .collect();
    let rect = grid.interior(1).unwrap_or(grid.full_rect());
    let interior = Norms::over(&grid, &values, &rect);
    Ok(ResidualField { grid, values, interior })
}

/// Tolerance for a second-order residual of `xi`: `rel` times
/// `max(1, sup|xi| / side^2)` with the shorter grid side.
pub fn residual_tolerance(xi: &ScalarField, rel: f64) -> f64 {
    let g = xi.grid();
    let side = (g.axes[0].hi - g.axes[0].lo).min(g.axes[1].hi - g.axes[1].lo);
    let sup = xi.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    rel * (sup / (side * side)).max(1.0)
}

/// The linear residual of `xi`, refused with its worst node when it exceeds
/// `residual_tolerance(xi, rel)` on the trusted nodes.
pub fn require_solution(name: &str, xi: &ScalarField, jd: &JoyceData, rel: f64) -> Result<ResidualField> {
    let res = linear_residual(xi, jd)?;
    let norms = Norms::over(xi.grid(), &res.values, &xi.trusted_rect());
    let tol = residual_tolerance(xi, rel);
    if !(norms.linf <= tol) {
        let (i, j) = norms.argmax;
        return Err(JoyceError::NotASolution(format!(
            "{name} linear residual {:.3e} exceeds {tol:.3e} at node (i={i}, j={j})",
            norms.linf
        )));
    }
    Ok(res)
}

/// Named closed-form solutions offered through `expr:<name>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedExpr {
    /// `H^2` (not a solution; used as a negative control)
    HSquared,
    /// `R(r) = int dr / p`
    Radial,
    /// `H R(r)`
    HRadial,
    /// `H^2 + g(r)` with `(p g')' = -2 p`
    HarmonicQuadratic,
    /// `H / r`, for `p = c r^2`
    HOverR,
    /// `H^2 / r - r`, for `p = c r^2`
    H2OverRMinusR,
}

impl NamedExpr {
    const ALL: [(NamedExpr, &'static str); 6] = [
        (NamedExpr::HSquared, "H2"),
        (NamedExpr::Radial, "radial"),
        (NamedExpr::HRadial, "H_radial"),
        (NamedExpr::HarmonicQuadratic, "harmonic_quadratic"),
        (NamedExpr::HOverR, "H_over_r"),
        (NamedExpr::H2OverRMinusR, "H2_over_r_minus_r"),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(e, _)| *e == self).unwrap().1
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.iter().find(|(_, n)| *n == s).map(|(e, _)| *e).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|(_, n)| *n).collect();
            JoyceError::InvalidInput(format!("unknown expression `{s}`; known: {}", names.join(", ")))
        })
    }
}

/// Which solution of the linear equation to sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedSpec {
    /// `xi = H`
    CoordinateH,
    /// `xi = log r` (requires `p` proportional to `r`)
    LogR,
    /// `((H - center)^2 + r^2)^(-1/2)` (requires `p` proportional to `r`)
    PointSource {
        center: f64,
    },
    /// `cos(k H + phase) R(r)` with `(p R')' = k^2 p R`
    Mode {
        k: f64,
        phase: f64,
        r0: f64,
        dr0: f64,
    },
    Expr(NamedExpr),
}

impl SeedSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| JoyceError::InvalidInput(format!("bad number `{v}` in seed `{s}`")))
        };
        match s {
            "H" => return Ok(Self::CoordinateH),
            "logr" => return Ok(Self::LogR),
            _ => {}
        }
        if let Some(c) = s.strip_prefix("pointsource:") {
            return Ok(Self::PointSource { center: num(c)? });
        }
        if let Some(rest) = s.strip_prefix("mode:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 4 {
                return Err(JoyceError::InvalidInput(format!(
                    "mode seed needs mode:<k>:<phase>:<R0>:<R0'>, got `{s}`"
                )));
            }
            let k = num(parts[0])?;
            if k == 0.0 {
                return Err(JoyceError::InvalidInput("separable mode needs k != 0".into()));
            }
            return Ok(Self::Mode {
                k,
                phase: num(parts[1])?,
                r0: num(parts[2])?,
                dr0: num(parts[3])?,
            });
        }
        if let Some(name) = s.strip_prefix("expr:") {
            return Ok(Self::Expr(NamedExpr::parse(name)?));
        }
        Err(JoyceError::InvalidInput(format!("unknown seed `{s}`")))
    }
}

impl fmt::Display for SeedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CoordinateH => write!(f, "H"),
            Self::LogR => write!(f, "logr"),
            Self::PointSource { center } => write!(f, "pointsource:{center}"),
            Self::Mode { k, phase, r0, dr0 } => write!(f, "mode:{k}:{phase}:{r0}:{dr0}"),
            Self::Expr(e) => write!(f, "expr:{}", e.name()),
        }
    }
}

fn require_exponent(jd: &JoyceData, e: f64, what: &str) -> Result<()> {
    match jd.weight().power_exponent() {
        Some(x) if (x - e).abs() < 1e-12 => Ok(()),
        _ => Err(JoyceError::Incompatible(format!(
            "{what} requires p proportional to r^{e}, got {}",
            jd.describe()
        ))),
    }
}

/// `(R, R', R'')` of the canonical radial solution `R = int dr / p`.
fn radial_solution(jd: &JoyceData, anchor: f64) -> Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync> {
    fn unscaled(w: &Weight) -> (&Weight, f64) {
        match w {
            Weight::Scaled { inner, factor } => {
                let (w, c) = unscaled(inner);
                (w, c * factor)
            }
            w => (w, 1.0),
        }
    }
    let (w, c) = unscaled(jd.weight());
    let jd = jd.clone();
    let derivs = move |r: f64| {
        let e = jd.eval_unchecked(r);
        (1.0 / e.p, -e.dp / (e.p * e.p))
    };
    match *w {
        Weight::Linear => Arc::new(move |r: f64| {
            let (d1, d2) = derivs(r);
            (r.ln() / c, d1, d2)
        }),
        Weight::Power { exponent } if (exponent - 1.0).abs() > 1e-12 => Arc::new(move |r: f64| {
            let (d1, d2) = derivs(r);
            (r.powf(1.0 - exponent) / ((1.0 - exponent) * c), d1, d2)
        }),
        Weight::Exponential { rate } => Arc::new(move |r: f64| {
            let (d1, d2) = derivs(r);
            (-(-rate * r).exp() / (rate * c), d1, d2)
        }),
        _ => Arc::new(move |r: f64| {
            let (d1, d2) = derivs(r);
            let v = gauss_legendre_composite(|s| derivs(s).0, anchor, r, 8);
            (v, d1, d2)
        }),
    }
}

/// A function of `r` with its first two derivatives.
type RadialFn = Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>;

/// `g` with `(p g')' = -2 p`, so that `H^2 + g(r)` solves the linear equation.
fn quadratic_companion(jd: &JoyceData) -> Result<RadialFn> {
    if let Some(e) = jd.weight().power_exponent() {
        if (e + 1.0).abs() < 1e-12 {
            return Err(JoyceError::Incompatible("no quadratic companion for p = r^-1".into()));
        }
        return Ok(Arc::new(move |r: f64| {
            (-r * r / (e + 1.0), -2.0 * r / (e + 1.0), -2.0 / (e + 1.0))
        }));
    }
    let mut w = jd.weight();
    while let Weight::Scaled { inner, .. } = w {
        w = inner;
    }
    if let Weight::Exponential { rate } = *w {
        return Ok(Arc::new(move |r: f64| (-2.0 * r / rate, -2.0 / rate, 0.0)));
    }
    Err(JoyceError::Incompatible(format!(
        "harmonic_quadratic has no closed form for {}",
        jd.describe()
    )))
}

/// Sample a seed solution on `grid`.
pub fn make_seed(spec: &SeedSpec, jd: &JoyceData, grid: &Grid2) -> Result<ScalarField> {
    check_grid_inside(grid, jd)?;
    let f: ExactFn = match *spec {
        SeedSpec::CoordinateH => Arc::new(|h, _| {
            (
                h,
                Jet2 {
                    h: 1.0,
                    ..Jet2::default()
                },
            )
        }),
        SeedSpec::LogR => {
            require_exponent(jd, 1.0, "logr")?;
            Arc::new(|_, r| {
                (
                    r.ln(),
                    Jet2 {
                        r: 1.0 / r,
                        rr: -1.0 / (r * r),
                        ..Jet2::default()
                    },
                )
            })
        }
        SeedSpec::PointSource { center } => {
            require_exponent(jd, 1.0, "pointsource")?;
            Arc::new(move |h, r| {
                let z = h - center;
                let q = z * z + r * r;
                let s = q.sqrt();
                let inv3 = 1.0 / (q * s);
                let inv5 = inv3 / q;
                (
                    1.0 / s,
                    Jet2 {
                        h: -z * inv3,
                        r: -r * inv3,
                        hh: 3.0 * z * z * inv5 - inv3,
                        hr: 3.0 * z * r * inv5,
                        rr: 3.0 * r * r * inv5 - inv3,
                    },
                )
            })
        }
        SeedSpec::Mode { k, phase, r0, dr0 } => {
            if k == 0.0 {
                return Err(JoyceError::InvalidInput("separable mode needs k != 0".into()));
            }
            let profile = solve_radial_mode(k, jd, &grid.axes[1].coords(), (r0, dr0))?;
            return Ok(mode_field(grid, k, phase, &profile));
        }
        SeedSpec::Expr(e) => named_expr(e, jd, grid)?,
    };
    Ok(ScalarField::from_exact(*grid, f))
}

fn named_expr(e: NamedExpr, jd: &JoyceData, grid: &Grid2) -> Result<ExactFn> {
    Ok(match e {
        NamedExpr::HSquared => Arc::new(|h, _| {
            (
                h * h,
                Jet2 {
                    h: 2.0 * h,
                    hh: 2.0,
                    ..Jet2::default()
                },
            )
        }),
        NamedExpr::Radial => {
            let rad = radial_solution(jd, grid.axes[1].lo);
            Arc::new(move |_, r| {
                let (v, d1, d2) = rad(r);
                (
                    v,
                    Jet2 {
                        r: d1,
                        rr: d2,
                        ..Jet2::default()
                    },
                )
            })
        }
        NamedExpr::HRadial => {
            let rad = radial_solution(jd, grid.axes[1].lo);
            Arc::new(move |h, r| {
                let (v, d1, d2) = rad(r);
                (
                    h * v,
                    Jet2 {
                        h: v,
                        r: h * d1,
                        hh: 0.0,
                        hr: d1,
                        rr: h * d2,
                    },
                )
            })
        }
        NamedExpr::HarmonicQuadratic => {
            let g = quadratic_companion(jd)?;
            Arc::new(move |h, r| {
                let (v, d1, d2) = g(r);
                (
                    h * h + v,
                    Jet2 {
                        h: 2.0 * h,
                        r: d1,
                        hh: 2.0,
                        hr: 0.0,
                        rr: d2,
                    },
                )
            })
        }
        NamedExpr::HOverR => {
            require_exponent(jd, 2.0, "H_over_r")?;
            Arc::new(|h, r| {
                let r2 = r * r;
                (
                    h / r,
                    Jet2 {
                        h: 1.0 / r,
                        r: -h / r2,
                        hh: 0.0,
                        hr: -1.0 / r2,
                        rr: 2.0 * h / (r2 * r),
                    },
                )
            })
        }
        NamedExpr::H2OverRMinusR => {
            require_exponent(jd, 2.0, "H2_over_r_minus_r")?;
            Arc::new(|h, r| {
                let r2 = r * r;
                (
                    h * h / r - r,
                    Jet2 {
                        h: 2.0 * h / r,
                        r: -h * h / r2 - 1.0,
                        hh: 2.0 / r,
                        hr: -2.0 * h / r2,
                        rr: 2.0 * h * h / (r2 * r),
                    },
                )
            })
        }
    })
}

/// Radial profile `R` and its slope at the grid's `r` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub r: Vec<f64>,
    pub value: Vec<f64>,
    pub slope: Vec<f64>,
    /// `R''` from the equation itself: `k^2 R - (p'/p) R'`.
    pub curvature: Vec<f64>,
}

/// Integrate `(p R')' = k^2 p R` with classical RK4 along the nodes `rs`
/// (four steps per node interval), starting from `(R, R')` at `rs[0]`.
pub fn solve_radial_mode(k: f64, jd: &JoyceData, rs: &[f64], init: (f64, f64)) -> Result<RadialProfile> {
    solve_radial_mode_substeps(k, jd, rs, init, 4)
}

pub fn solve_radial_mode_substeps(
    k: f64,
    jd: &JoyceData,
    rs: &[f64],
    init: (f64, f64),
    substeps: usize,
) -> Result<RadialProfile> {
    if rs.len() < 2 || rs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(JoyceError::InvalidInput("radial nodes must be increasing".into()));
    }
    let k2 = k * k;
    let rhs = |r: f64, y: [f64; 2]| -> Result<[f64; 2]> {
        let e = jd.eval(r)?;
        if !(e.p > 0.0 && e.p.is_finite()) {
            return Err(JoyceError::OdeFailed(format!("weight p = {} at r = {r}", e.p)));
        }
        Ok([y[1], k2 * y[0] - e.dp / e.p * y[1]])
    };
    let mut y = [init.0, init.1];
    let mut value = vec![y[0]];
    let mut slope = vec![y[1]];
    for w in rs.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        if !(h > f64::EPSILON * w[0].abs()) {
            return Err(JoyceError::OdeFailed(format!("step underflow at r = {}", w[0])));
        }
        let mut r = w[0];
        for _ in 0..substeps {
            let k1 = rhs(r, y)?;
            let k2v = rhs(r + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]])?;
            let k3 = rhs(r + 0.5 * h, [y[0] + 0.5 * h * k2v[0], y[1] + 0.5 * h * k2v[1]])?;
            let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]])?;
            for m in 0..2 {
                y[m] += h / 6.0 * (k1[m] + 2.0 * k2v[m] + 2.0 * k3[m] + k4[m]);
            }
            r += h;
        }
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(JoyceError::OdeFailed(format!("non-finite state at r = {}", w[1])));
        }
        value.push(y[0]);
        slope.push(y[1]);
    }
    let curvature = rs
        .iter()
        .zip(value.iter().zip(&slope))
        .map(|(&r, (&v, &s))| {
            let e = jd.eval_unchecked(r);
            k2 * v - e.dp / e.p * s
        })
        .collect();
    Ok(RadialProfile {
        r: rs.to_vec(),
        value,
        slope,
        curvature,
    })
}

fn mode_field(grid: &Grid2, k: f64, phase: f64, prof: &RadialProfile) -> ScalarField {
    let mut values = Vec::with_capacity(grid.len());
    let mut jet = Vec::with_capacity(grid.len());
    for (_, j, p) in grid.points() {
        let (c, s) = ((k * p[0] + phase).cos(), (k * p[0] + phase).sin());
        let (rv, rd, rdd) = (prof.value[j], prof.slope[j], prof.curvature[j]);
        values.push(c * rv);
        jet.push(Jet2 {
            h: -k * s * rv,
            r: c * rd,
            hh: -k * k * c * rv,
            hr: -k * s * rd,
            rr: c * rdd,
        });
    }
    ScalarField {
        grid: *grid,
        values,
        jet,
        jet_source: JetSource::Analytic,
        exact: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{derive_joyce_data, JoyceMode, Potential};

    fn jd(spec: &str) -> JoyceData {
        derive_joyce_data(&Potential::parse(spec).unwrap(), JoyceMode::ClosedForm).unwrap()
    }

    fn grid() -> Grid2 {
        Grid2::new((-0.5, 1.0), (1.0, 2.0), 17, 21).unwrap()
    }

    #[test]
    fn coordinate_h_has_zero_residual() {
        for p in ["logdet", "power:0.25", "power:0.5", "affine"] {
            let jd = jd(p);
            let xi = make_seed(&SeedSpec::CoordinateH, &jd, &grid()).unwrap();
            assert!(linear_residual(&xi, &jd)
                .unwrap()
                .values
                .iter()
                .all(|v| v.abs() <= 1e-12));
        }
    }

    #[test]
    fn logr_solves_logdet_equation() {
        let jd = jd("logdet");
        let xi = make_seed(&SeedSpec::LogR, &jd, &grid()).unwrap();
        assert!(linear_residual(&xi, &jd).unwrap().interior.linf <= 1e-12);
    }

    #[test]
    fn h_squared_residual_is_two() {
        let jd = jd("logdet");
        let xi = make_seed(&SeedSpec::Expr(NamedExpr::HSquared), &jd, &grid()).unwrap();
        assert!(linear_residual(&xi, &jd)
            .unwrap()
            .values
            .iter()
            .all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn point_source_solves_axisymmetric_laplace() {
        let jd = jd("logdet");
        let xi = make_seed(&SeedSpec::PointSource { center: 0.0 }, &jd, &grid()).unwrap();
        assert!(linear_residual(&xi, &jd).unwrap().interior.linf <= 1e-10);
        let q = self::jd("power:0.25");
        assert!(matches!(
            make_seed(&SeedSpec::PointSource { center: 0.0 }, &q, &grid()),
            Err(JoyceError::Incompatible(_))
        ));
    }

    #[test]
    fn h_over_r_solves_quadratic_weight() {
        let jd = jd("affine");
        for e in [NamedExpr::HOverR, NamedExpr::H2OverRMinusR] {
            let xi = make_seed(&SeedSpec::Expr(e), &jd, &grid()).unwrap();
            assert!(linear_residual(&xi, &jd).unwrap().interior.linf <= 1e-12, "{e:?}");
        }
    }

    #[test]
    fn closed_form_kinds_solve_for_every_builtin() {
        for p in ["logdet", "power:0.25", "power:0.5", "power:0.7", "dual:logdet"] {
            let jd = jd(p);
            let g = if jd.interval().1 <= 0.0 {
                Grid2::new((-0.5, 1.0), (-2.0, -1.0), 17, 21).unwrap()
            } else {
                grid()
            };
            for e in [NamedExpr::Radial, NamedExpr::HRadial, NamedExpr::HarmonicQuadratic] {
                let Ok(xi) = make_seed(&SeedSpec::Expr(e), &jd, &g) else {
                    assert!(p == "dual:logdet" && e == NamedExpr::HarmonicQuadratic);
                    continue;
                };
                let res = linear_residual(&xi, &jd).unwrap().interior.linf;
                assert!(res <= 1e-10, "{p} {e:?}: {res}");
            }
        }
    }

    #[test]
    fn grid_outside_interval_is_rejected() {
        let jd = jd("logdet");
        let g = Grid2::new((0.0, 1.0), (0.0, 1.0), 5, 5).unwrap();
        assert!(matches!(
            make_seed(&SeedSpec::CoordinateH, &jd, &g),
            Err(JoyceError::Domain { .. })
        ));
    }

    #[test]
    fn zero_wavenumber_keeps_constant_profile() {
        let jd = jd("power:0.5");
        let rs: Vec<f64> = (0..11).map(|k| 1.0 + 0.1 * k as f64).collect();
        let prof = solve_radial_mode(0.0, &jd, &rs, (1.0, 0.0)).unwrap();
        assert!(prof.value.iter().all(|&v| v == 1.0));
        assert!(prof.slope.iter().all(|&v| v == 0.0));
    }

    /// Brute-force power series of `(r R')' = r R` with `R(0) = 1`.
    fn bessel_i0_series(r: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        let mut term = 1.0; // (r/2)^(2m) / (m!)^2
        for m in 0..60 {
            if m > 0 {
                term *= (r / 2.0) * (r / 2.0) / (m as f64 * m as f64);
            }
            v += term;
            if m > 0 {
                d += 2.0 * m as f64 * term / r;
            }
        }
        (v, d)
    }

    #[test]
    fn logdet_mode_matches_power_series() {
        let jd = jd("logdet");
        let r0 = 0.01;
        let n = 2001;
        let rs: Vec<f64> = (0..n).map(|k| r0 + (2.0 - r0) * k as f64 / (n - 1) as f64).collect();
        let prof = solve_radial_mode(1.0, &jd, &rs, bessel_i0_series(r0)).unwrap();
        for (r, v) in rs.iter().zip(&prof.value) {
            let (exact, _) = bessel_i0_series(*r);
            assert!((v - exact).abs() < 1e-8, "r = {r}: {v} vs {exact}");
        }
    }

    #[test]
    fn rk4_self_convergence_is_fourth_order() {
        let jd = jd("power:0.5");
        let rs: Vec<f64> = (0..11).map(|k| -1.0 + 0.2 * k as f64).collect();
        let run = |sub| {
            solve_radial_mode_substeps(1.0, &jd, &rs, (1.0, 0.0), sub)
                .unwrap()
                .value[10]
        };
        let (a, b, c) = (run(1), run(2), run(4));
        let order = ((a - b) / (b - c)).abs().log2();
        assert!((order - 4.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn fd_jets_converge_at_second_order() {
        let jd = jd("logdet");
        let mut norms = Vec::new();
        for n in [17, 33, 65] {
            let g = Grid2::new((0.0, 1.0), (1.0, 2.0), n, n).unwrap();
            let xi = make_seed(&SeedSpec::PointSource { center: -0.5 }, &jd, &g)
                .unwrap()
                .with_fd_jet();
            let res = linear_residual(&xi, &jd).unwrap();
            let win = g.window(0.25).unwrap();
            norms.push(Norms::over(&g, &res.values, &win).linf);
        }
        let order = (norms[1] / norms[2]).log2();
        assert!(order >= 1.9, "{norms:?}");
    }

    #[test]
    fn seed_spec_strings_round_trip() {
        for s in ["H", "logr", "pointsource:0.5", "mode:1:0.25:1:0", "expr:H_over_r"] {
            assert_eq!(SeedSpec::parse(s).unwrap().to_string(), s);
        }
        assert!(SeedSpec::parse("mode:0:0:1:0").is_err());
        assert!(SeedSpec::parse("expr:nope").is_err());
    }
}
