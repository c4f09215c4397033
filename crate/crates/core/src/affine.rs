//! Affine maximal surfaces: the cross-product system driven by a harmonic
//! 3-vector, the lift of harmonic functions to seeds for the weight `p = r^2`,
//! the seed-driven cross-product system, and the affine invariant of a graph.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::construct::{integrate_potential, FormJet, FormPoint, IntegrationOptions, OneForm, Quadrature};
use crate::error::{JoyceError, Result};
use crate::grid::{inscribed_rect, partial, Grid2, Norms, XGrid};
use crate::numeric::{det2, inv2, Mat2};
use crate::potential::JoyceData;
use crate::seeds::{check_grid_inside, require_solution, residual_tolerance, ExactFn, Jet2, JetSource, ScalarField};
use crate::verify::{fd_hessian, XGridSolution, HESSIAN_MARGIN};

type Vec3 = [f64; 3];

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// A 3-vector function with its first and second partials in `(s, t)`.
#[derive(Debug, Clone, Copy, Default)]
struct VecJet {
    v: Vec3,
    s: Vec3,
    t: Vec3,
    ss: Vec3,
    st: Vec3,
    tt: Vec3,
}

impl VecJet {
    fn from_scalars(v: Vec3, d: [Jet2; 3]) -> Self {
        let pick = |f: fn(&Jet2) -> f64| [f(&d[0]), f(&d[1]), f(&d[2])];
        Self {
            v,
            s: pick(|j| j.h),
            t: pick(|j| j.r),
            ss: pick(|j| j.hh),
            st: pick(|j| j.hr),
            tt: pick(|j| j.rr),
        }
    }
}

/// Components of `p V x V_t ds - p V x V_s dt`, with `p = p(t)`.
fn cross_forms(w: &VecJet, p: f64, dp: f64) -> [FormPoint; 3] {
    let a = scale(p, cross(w.v, w.t));
    let b = scale(-p, cross(w.v, w.s));
    let a_s = scale(p, add(cross(w.s, w.t), cross(w.v, w.st)));
    let a_t = add(scale(dp, cross(w.v, w.t)), scale(p, cross(w.v, w.tt)));
    let b_s = scale(-p, cross(w.v, w.ss));
    let b_t = add(
        scale(-dp, cross(w.v, w.s)),
        scale(-p, add(cross(w.t, w.s), cross(w.v, w.st))),
    );
    std::array::from_fn(|c| FormPoint {
        a: a[c],
        b: b[c],
        jet: FormJet {
            a_h: a_s[c],
            a_r: a_t[c],
            b_h: b_s[c],
            b_r: b_t[c],
        },
    })
}

type VectorFormFn = Arc<dyn Fn(f64, f64) -> [FormPoint; 3] + Send + Sync>;

/// Three scalar 1-forms sampled together on one grid.
struct VectorForm {
    grid: Grid2,
    pts: Vec<[FormPoint; 3]>,
    with_jet: bool,
    exact: Option<VectorFormFn>,
}

impl VectorForm {
    fn component(&self, c: usize) -> Result<OneForm> {
        if let Some(f) = &self.exact {
            let f = f.clone();
            return Ok(OneForm::from_exact(self.grid, Arc::new(move |s, t| f(s, t)[c])));
        }
        let a = self.pts.iter().map(|q| q[c].a).collect();
        let b = self.pts.iter().map(|q| q[c].b).collect();
        let w = OneForm::from_components(self.grid, a, b)?;
        Ok(if self.with_jet {
            w.with_jet(self.pts.iter().map(|q| q[c].jet).collect())?
        } else {
            w
        })
    }
}

/// Options shared by the surface integrators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineOptions {
    /// Relative Laplacian tolerance for harmonic input.
    pub harmonic_rel_tol: f64,
    /// Relative tolerance on the linear residual of seeds.
    pub linear_rel_tol: f64,
    /// Closedness guard on the integrated forms; harmonicity is the primary gate.
    pub closedness_rel_tol: f64,
    /// `None` selects the most accurate rule each form supports.
    pub rule: Option<Quadrature>,
}

impl Default for AffineOptions {
    fn default() -> Self {
        Self {
            harmonic_rel_tol: 1e-6,
            linear_rel_tol: 1e-6,
            closedness_rel_tol: 1e-2,
            rule: Some(Quadrature::Trapezoid),
        }
    }
}

impl AffineOptions {
    fn integration(&self) -> IntegrationOptions {
        IntegrationOptions {
            rule: self.rule,
            closedness_rel_tol: self.closedness_rel_tol,
        }
    }
}

/// Flat Laplacian of `f` from its jet, with norms.
pub fn laplacian(f: &ScalarField) -> (Vec<f64>, Norms) {
    let values: Vec<f64> = f.jet().iter().map(|d| d.hh + d.rr).collect();
    let norms = Norms::over(f.grid(), &values, &f.trusted_rect());
    (values, norms)
}

fn require_harmonic(name: &str, f: &ScalarField, rel: f64) -> Result<Norms> {
    let (_, norms) = laplacian(f);
    let tol = residual_tolerance(f, rel);
    if !(norms.linf <= tol) {
        let (i, j) = norms.argmax;
        return Err(JoyceError::NotHarmonic {
            name: name.to_string(),
            residual: norms.linf,
            tolerance: tol,
            i,
            j,
        });
    }
    Ok(norms)
}

/// Closed-form scalar functions of `(l1, l2)` offered on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicExpr {
    /// `l1`
    First,
    /// `l2`
    Second,
    /// `l1 l2`
    Product,
    /// `l1^2 - l2^2`
    SquareDifference,
    /// `exp(l1) cos(l2)`
    ExpCos,
    /// A constant.
    Constant(f64),
    /// `l1^2`, not harmonic; kept as a negative control.
    FirstSquared,
}

impl HarmonicExpr {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(c) = s.strip_prefix("const:") {
            let c: f64 = c
                .parse()
                .map_err(|_| JoyceError::InvalidInput(format!("bad constant in harmonic expression `{s}`")))?;
            return Ok(Self::Constant(c));
        }
        Ok(match s {
            "l1" => Self::First,
            "l2" => Self::Second,
            "l1*l2" => Self::Product,
            "l1^2-l2^2" => Self::SquareDifference,
            "exp(l1)cos(l2)" => Self::ExpCos,
            "l1^2" => Self::FirstSquared,
            _ => {
                return Err(JoyceError::InvalidInput(format!(
                    "unknown harmonic expression `{s}` (expected l1, l2, l1*l2, l1^2-l2^2, \
                     exp(l1)cos(l2), l1^2 or const:<c>)"
                )))
            }
        })
    }

    pub fn eval(&self, s: f64, t: f64) -> (f64, Jet2) {
        let jet = |h, r, hh, hr, rr| Jet2 { h, r, hh, hr, rr };
        match *self {
            Self::First => (s, jet(1.0, 0.0, 0.0, 0.0, 0.0)),
            Self::Second => (t, jet(0.0, 1.0, 0.0, 0.0, 0.0)),
            Self::Product => (s * t, jet(t, s, 0.0, 1.0, 0.0)),
            Self::SquareDifference => (s * s - t * t, jet(2.0 * s, -2.0 * t, 2.0, 0.0, -2.0)),
            Self::ExpCos => {
                let (e, c, sn) = (s.exp(), t.cos(), t.sin());
                (e * c, jet(e * c, -e * sn, e * c, -e * sn, -e * c))
            }
            Self::Constant(c) => (c, Jet2::default()),
            Self::FirstSquared => (s * s, jet(2.0 * s, 0.0, 2.0, 0.0, 0.0)),
        }
    }

    /// The expression sampled on `grid` with its closed-form evaluator.
    pub fn field(&self, grid: Grid2) -> ScalarField {
        let e = *self;
        ScalarField::from_exact(grid, Arc::new(move |s, t| e.eval(s, t)))
    }
}

impl fmt::Display for HarmonicExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::First => f.write_str("l1"),
            Self::Second => f.write_str("l2"),
            Self::Product => f.write_str("l1*l2"),
            Self::SquareDifference => f.write_str("l1^2-l2^2"),
            Self::ExpCos => f.write_str("exp(l1)cos(l2)"),
            Self::Constant(c) => write!(f, "const:{c}"),
            Self::FirstSquared => f.write_str("l1^2"),
        }
    }
}

/// Three harmonic functions on one grid.
#[derive(Debug, Clone)]
pub struct HarmonicTriple {
    pub f: [ScalarField; 3],
    /// Laplacian norms of each component.
    pub laplacian: [Norms; 3],
}

impl HarmonicTriple {
    /// Checks every component's Laplacian against `rel` (see [`AffineOptions`]).
    pub fn new(f: [ScalarField; 3], rel: f64) -> Result<Self> {
        f[0].grid().check_same(f[1].grid())?;
        f[0].grid().check_same(f[2].grid())?;
        let mut laplacian = [Norms::default(); 3];
        for (k, fk) in f.iter().enumerate() {
            laplacian[k] = require_harmonic(&format!("F{}", k + 1), fk, rel)?;
        }
        Ok(Self { f, laplacian })
    }

    pub fn grid(&self) -> &Grid2 {
        self.f[0].grid()
    }
}

/// A parametrized surface `Z` over a grid, exported with quad faces in grid order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Surface {
    pub grid: Grid2,
    pub z: Vec<Vec3>,
    /// Integration base node; `Z` there equals `origin`.
    pub base: (usize, usize),
    pub origin: Vec3,
    /// Mixed-partial consistency `L-inf` per component.
    pub consistency: Vec3,
    /// Row-first against column-first path `L-inf` per component.
    pub path_discrepancy: Vec3,
    pub rule: Quadrature,
    /// Nodes where the two tangent vectors are parallel to rounding.
    pub degenerate_nodes: usize,
}

/// Relative size of `|Z_s x Z_t|` below which a node counts as degenerate.
const AREA_REL_TOL: f64 = 1e-10;

impl Surface {
    /// Every tangent plane is degenerate.
    pub fn zero_area(&self) -> bool {
        self.degenerate_nodes == self.z.len()
    }

    /// Vertex indices of each grid cell, counter-clockwise in the parameter plane.
    pub fn faces(&self) -> Vec<[usize; 4]> {
        let (n0, n1) = self.grid.shape();
        let g = &self.grid;
        let mut out = Vec::with_capacity((n0 - 1) * (n1 - 1));
        for j in 0..n1 - 1 {
            for i in 0..n0 - 1 {
                out.push([g.idx(i, j), g.idx(i + 1, j), g.idx(i + 1, j + 1), g.idx(i, j + 1)]);
            }
        }
        out
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.z.iter().map(|z| z[c]).collect()
    }
}

fn integrate_surface(form: &VectorForm, base: (usize, usize), origin: Vec3, opts: &AffineOptions) -> Result<Surface> {
    let mut z = vec![origin; form.grid.len()];
    let mut consistency = [0.0; 3];
    let mut path_discrepancy = [0.0; 3];
    let mut rule = Quadrature::Trapezoid;
    for c in 0..3 {
        let p = integrate_potential(&form.component(c)?, base, &opts.integration())?;
        for (zk, v) in z.iter_mut().zip(p.field.values()) {
            zk[c] += v;
        }
        consistency[c] = p.closedness.linf;
        path_discrepancy[c] = p.path_discrepancy;
        rule = p.rule;
    }
    let area: Vec<(f64, f64)> = form
        .pts
        .iter()
        .map(|q| {
            let zs = [q[0].a, q[1].a, q[2].a];
            let zt = [q[0].b, q[1].b, q[2].b];
            (norm(cross(zs, zt)), norm(zs) * norm(zt))
        })
        .collect();
    let scale = area.iter().fold(0.0f64, |m, a| m.max(a.1));
    let degenerate_nodes = area.iter().filter(|a| a.0 <= AREA_REL_TOL * scale).count();
    Ok(Surface {
        grid: form.grid,
        z,
        base,
        origin,
        consistency,
        path_discrepancy,
        rule,
        degenerate_nodes,
    })
}

fn check_base(grid: &Grid2, base: (usize, usize)) -> Result<()> {
    let (n0, n1) = grid.shape();
    if base.0 >= n0 || base.1 >= n1 {
        return Err(JoyceError::InvalidInput(format!("base node {base:?} outside grid")));
    }
    Ok(())
}

fn all_analytic(fields: &[&ScalarField]) -> bool {
    fields.iter().all(|f| f.jet_source() == JetSource::Analytic)
}

fn all_exact(fields: &[&ScalarField]) -> Option<Vec<ExactFn>> {
    fields.iter().map(|f| f.exact().cloned()).collect()
}

/// Integrate `Z_l1 = F x F_l2`, `Z_l2 = -F x F_l1` with `Z(base) = 0`.
pub fn chern_terng_integrate(triple: &HarmonicTriple, base: (usize, usize), opts: &AffineOptions) -> Result<Surface> {
    let grid = *triple.grid();
    check_base(&grid, base)?;
    let f = &triple.f;
    let pts = (0..grid.len())
        .map(|k| {
            let w = VecJet::from_scalars(
                [f[0].values()[k], f[1].values()[k], f[2].values()[k]],
                [f[0].jet()[k], f[1].jet()[k], f[2].jet()[k]],
            );
            cross_forms(&w, 1.0, 0.0)
        })
        .collect();
    let exact = all_exact(&[&f[0], &f[1], &f[2]]).map(|fs| {
        Arc::new(move |s: f64, t: f64| {
            let (v, d): (Vec<f64>, Vec<Jet2>) = fs.iter().map(|e| e(s, t)).unzip();
            cross_forms(&VecJet::from_scalars([v[0], v[1], v[2]], [d[0], d[1], d[2]]), 1.0, 0.0)
        }) as VectorFormFn
    });
    let form = VectorForm {
        grid,
        pts,
        with_jet: all_analytic(&[&f[0], &f[1], &f[2]]),
        exact,
    };
    integrate_surface(&form, base, [0.0; 3], opts)
}

/// `xi_H = F_H / r`, `xi_r = F_r / r - F / r^2` with their derivatives.
fn lift_form(v: f64, d: &Jet2, r: f64) -> FormPoint {
    let mixed = d.hr / r - d.h / (r * r);
    FormPoint {
        a: d.h / r,
        b: d.r / r - v / (r * r),
        jet: FormJet {
            a_h: d.hh / r,
            a_r: mixed,
            b_h: mixed,
            b_r: d.rr / r - 2.0 * d.r / (r * r) + 2.0 * v / (r * r * r),
        },
    }
}

/// Seed `xi` with `r xi = F` at the base from a harmonic `F`, for `p = r^2`.
///
/// The system is consistent for any smooth `F`, and the linear residual of
/// `xi` equals `Laplacian(F) / r`; harmonicity is still required.
pub fn lift_harmonic_to_seed(
    f: &ScalarField,
    jd: &JoyceData,
    base: (usize, usize),
    opts: &AffineOptions,
) -> Result<ScalarField> {
    let grid = *f.grid();
    check_base(&grid, base)?;
    if jd.weight().power_exponent() != Some(2.0) {
        return Err(JoyceError::Incompatible(format!(
            "the harmonic lift needs a weight proportional to r^2, got {}",
            jd.describe()
        )));
    }
    let r_axis = grid.axes[1];
    if !(r_axis.lo > 0.0) {
        return Err(JoyceError::Domain {
            value: r_axis.lo,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    check_grid_inside(&grid, jd)?;
    require_harmonic("F", f, opts.harmonic_rel_tol)?;
    let pts: Vec<FormPoint> = grid
        .points()
        .zip(f.values().iter().zip(f.jet()))
        .map(|((_, _, p), (v, d))| lift_form(*v, d, p[1]))
        .collect();
    let w = match f.exact() {
        Some(e) => {
            let e = e.clone();
            OneForm::from_exact(
                grid,
                Arc::new(move |s, t| {
                    let (v, d) = e(s, t);
                    lift_form(v, &d, t)
                }),
            )
        }
        None => {
            let w = OneForm::from_components(
                grid,
                pts.iter().map(|q| q.a).collect(),
                pts.iter().map(|q| q.b).collect(),
            )?;
            if f.jet_source() == JetSource::Analytic {
                w.with_jet(pts.iter().map(|q| q.jet).collect())?
            } else {
                w
            }
        }
    };
    let prim = integrate_potential(&w, base, &opts.integration())?;
    let k0 = grid.idx(base.0, base.1);
    let shift = f.values()[k0] / grid.point(base.0, base.1)[1];
    let values = prim.field.values().iter().map(|v| v + shift).collect();
    ScalarField::from_parts(grid, values, prim.field.jet().to_vec(), prim.field.jet_source())
}

/// Integrate `Z_H = p Xi x Xi_r`, `Z_r = -p Xi x Xi_H` with `Xi = (xi1, xi2, 1)`.
///
/// The result is `(-x1, -x2, u)` for the chart built from the same seeds:
/// the first two components come out as a point reflection of the chart.
pub fn seed_surface(
    xi1: &ScalarField,
    xi2: &ScalarField,
    jd: &JoyceData,
    base: (usize, usize),
    origin: Vec3,
    opts: &AffineOptions,
) -> Result<Surface> {
    xi1.grid().check_same(xi2.grid())?;
    let grid = *xi1.grid();
    check_base(&grid, base)?;
    check_grid_inside(&grid, jd)?;
    for (name, xi) in [("xi1", xi1), ("xi2", xi2)] {
        require_solution(name, xi, jd, opts.linear_rel_tol)?;
    }
    let node = |v1: f64, d1: Jet2, v2: f64, d2: Jet2, r: f64, jd: &JoyceData| {
        let e = jd.eval_unchecked(r);
        let w = VecJet::from_scalars([v1, v2, 1.0], [d1, d2, Jet2::default()]);
        cross_forms(&w, e.p, e.dp)
    };
    let pts = grid
        .points()
        .enumerate()
        .map(|(k, (_, _, p))| node(xi1.values()[k], xi1.jet()[k], xi2.values()[k], xi2.jet()[k], p[1], jd))
        .collect();
    let exact = all_exact(&[xi1, xi2]).map(|fs| {
        let jd = jd.clone();
        Arc::new(move |s: f64, t: f64| {
            let (v1, d1) = fs[0](s, t);
            let (v2, d2) = fs[1](s, t);
            node(v1, d1, v2, d2, t, &jd)
        }) as VectorFormFn
    });
    let form = VectorForm {
        grid,
        pts,
        with_jet: all_analytic(&[xi1, xi2]),
        exact,
    };
    integrate_surface(&form, base, origin, opts)
}

/// Difference of two surfaces on one grid after removing the mean offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceComparison {
    pub offset: Vec3,
    pub linf: Vec3,
}

impl SurfaceComparison {
    pub fn max(&self) -> f64 {
        self.linf.iter().fold(0.0f64, |m, v| m.max(*v))
    }
}

/// Compare `a` against `b` with each component mapped by `sign` first.
pub fn compare_surfaces(a: &[Vec3], b: &[Vec3], sign: Vec3) -> Result<SurfaceComparison> {
    if a.len() != b.len() || a.is_empty() {
        return Err(JoyceError::GridMismatch(format!(
            "{} against {} vertices",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let diff = |k: usize, c: usize| sign[c] * a[k][c] - b[k][c];
    let offset: Vec3 = std::array::from_fn(|c| (0..a.len()).map(|k| diff(k, c)).sum::<f64>() / n);
    let linf = std::array::from_fn(|c| (0..a.len()).fold(0.0f64, |m, k| m.max((diff(k, c) - offset[c]).abs())));
    Ok(SurfaceComparison { offset, linf })
}

/// The two routes from a pair of harmonic functions to a surface.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    /// Cross-product system on `(F1, F2, r)`.
    pub route_a: Surface,
    /// Lifted seeds through the seed-driven system.
    pub route_b: Surface,
    pub seeds: [ScalarField; 2],
    pub comparison: SurfaceComparison,
}

/// Build both routes on a grid with `r > 0` and compare them.
pub fn equivalence_check(
    f1: &ScalarField,
    f2: &ScalarField,
    jd: &JoyceData,
    base: (usize, usize),
    opts: &AffineOptions,
) -> Result<EquivalenceReport> {
    let grid = *f1.grid();
    let radius = ScalarField::from_exact(
        grid,
        Arc::new(|_, t| {
            (
                t,
                Jet2 {
                    r: 1.0,
                    ..Jet2::default()
                },
            )
        }),
    );
    let triple = HarmonicTriple::new([f1.clone(), f2.clone(), radius], opts.harmonic_rel_tol)?;
    let route_a = chern_terng_integrate(&triple, base, opts)?;
    let xi1 = lift_harmonic_to_seed(f1, jd, base, opts)?;
    let xi2 = lift_harmonic_to_seed(f2, jd, base, opts)?;
    let route_b = seed_surface(&xi1, &xi2, jd, base, [0.0; 3], opts)?;
    let comparison = compare_surfaces(&route_a.z, &route_b.z, [1.0; 3])?;
    Ok(EquivalenceReport {
        route_a,
        route_b,
        seeds: [xi1, xi2],
        comparison,
    })
}

/// Agreement of an invariant `J` under a unimodular map of the base.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShearReport {
    pub map: Mat2,
    /// Grid in the mapped coordinates `y = M x`.
    pub grid: XGrid,
    /// `L-inf` of the difference to `J` at the preimages.
    pub linf: f64,
    pub nodes: usize,
}

/// Affine-invariant identities of a graph `z = u(x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineInvariantReport {
    /// Nodes where the identity was checked.
    pub nodes: usize,
    /// Nodes skipped because the finite-difference Hessian is not positive.
    pub nonconvex: usize,
    /// Largest `|K^(1/4) (1 + |grad u|^2)^(1/2) - J^(1/4)| / J^(1/4)`.
    pub identity_defect: f64,
    pub shear: Option<ShearReport>,
}

/// The shear `[[1, 1], [0, 1]]`.
pub const UNIT_SHEAR: Mat2 = [[1.0, 1.0], [0.0, 1.0]];

fn apply(m: &Mat2, x: [f64; 2]) -> [f64; 2] {
    [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
}

/// Gauss curvature against the affine area element, and optionally `J` on
/// the base mapped by `map` (which must have determinant one).
pub fn affine_invariant_check(sol: &XGridSolution, map: Option<Mat2>) -> Result<AffineInvariantReport> {
    let g = &sol.grid;
    let rect = g.interior(HESSIAN_MARGIN).unwrap_or(g.full_rect());
    let hess = fd_hessian(g, &sol.u);
    let d1 = partial(g, &sol.u, 0);
    let d2 = partial(g, &sol.u, 1);
    let (mut nodes, mut nonconvex, mut identity_defect) = (0, 0, 0.0f64);
    for i in rect.i0..=rect.i1 {
        for j in rect.j0..=rect.j1 {
            let k = g.idx(i, j);
            let h = hess[k];
            let jac = det2(&h);
            if !(h[0][0] > 0.0 && jac > 0.0) {
                nonconvex += 1;
                continue;
            }
            let lift = 1.0 + d1[k] * d1[k] + d2[k] * d2[k];
            let curvature = jac / (lift * lift);
            let lhs = curvature.powf(0.25) * lift.sqrt();
            let rhs = jac.powf(0.25);
            identity_defect = identity_defect.max((lhs - rhs).abs() / rhs);
            nodes += 1;
        }
    }
    let shear = map.map(|m| shear_report(sol, m)).transpose()?;
    Ok(AffineInvariantReport {
        nodes,
        nonconvex,
        identity_defect,
        shear,
    })
}

fn shear_report(sol: &XGridSolution, m: Mat2) -> Result<ShearReport> {
    if !((det2(&m) - 1.0).abs() <= 1e-12) {
        return Err(JoyceError::InvalidInput(format!(
            "map determinant {} is not one",
            det2(&m)
        )));
    }
    let mi = inv2(&m).ok_or(JoyceError::InvalidInput("singular map".into()))?;
    let g = &sol.grid;
    let corners = [[0, 0], [1, 0], [0, 1], [1, 1]].map(|[a, b]| {
        apply(
            &m,
            [
                if a == 0 { g.axes[0].lo } else { g.axes[0].hi },
                if b == 0 { g.axes[1].lo } else { g.axes[1].hi },
            ],
        )
    });
    let bbox = [0, 1].map(|c| {
        corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p[c]), hi.max(p[c]))
        })
    });
    let centre = apply(
        &m,
        [0.5 * (g.axes[0].lo + g.axes[0].hi), 0.5 * (g.axes[1].lo + g.axes[1].hi)],
    );
    let rect = inscribed_rect(bbox, centre, 33, |y| g.contains(apply(&mi, y)))
        .ok_or_else(|| JoyceError::InvalidInput("mapped domain has no inscribed rectangle".into()))?;
    let (n0, n1) = g.shape();
    let grid = XGrid::new(rect[0], rect[1], n0, n1)?;
    let source = sol.source();
    let pts = grid
        .points()
        .map(|(_, _, y)| source.eval(apply(&mi, y)))
        .collect::<Result<Vec<_>>>()?;
    let mapped: Vec<f64> = pts.iter().map(|p| p.u).collect();
    let hess = fd_hessian(&grid, &mapped);
    let inner = grid.interior(HESSIAN_MARGIN).unwrap_or(grid.full_rect());
    let diff: Vec<f64> = hess.iter().zip(&pts).map(|(h, p)| det2(h) - det2(&p.hess)).collect();
    let norms = Norms::over(&grid, &diff, &inner);
    Ok(ShearReport {
        map: m,
        grid,
        linf: norms.linf,
        nodes: inner.count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{assemble_chart, AssembleOptions};
    use crate::potential::{derive_joyce_data, JoyceMode, Potential};
    use crate::seeds::{linear_residual, make_seed, SeedSpec};
    use crate::verify::{worked_logdet_solution, PointSolution};

    fn square(lo: f64, hi: f64, n: usize) -> Grid2 {
        Grid2::new((lo, hi), (lo, hi), n, n).unwrap()
    }

    fn affine_data() -> JoyceData {
        derive_joyce_data(&Potential::affine_quarter(), JoyceMode::ClosedForm).unwrap()
    }

    fn exact_opts() -> AffineOptions {
        AffineOptions {
            rule: None,
            ..AffineOptions::default()
        }
    }

    fn triple(exprs: [HarmonicExpr; 3], grid: Grid2) -> Result<HarmonicTriple> {
        HarmonicTriple::new(exprs.map(|e| e.field(grid)), 1e-6)
    }

    fn max_dev_after_offset(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let m = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / n;
        a.iter().zip(b).fold(0.0f64, |acc, (x, y)| acc.max((x - y - m).abs()))
    }

    #[test]
    fn cross_is_antisymmetric() {
        let (a, b) = ([1.0, 2.0, 3.0], [-4.0, 0.5, 2.0]);
        assert_eq!(cross(a, b), scale(-1.0, cross(b, a)));
        assert_eq!(cross([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn parse_round_trips() {
        for s in ["l1", "l2", "l1*l2", "l1^2-l2^2", "exp(l1)cos(l2)", "l1^2", "const:2.5"] {
            assert_eq!(HarmonicExpr::parse(s).unwrap().to_string(), s);
        }
        assert!(HarmonicExpr::parse("l3").is_err());
    }

    #[test]
    fn paraboloid_from_linear_triple() {
        let grid = square(-1.0, 1.0, 33);
        use HarmonicExpr::*;
        let t = triple([First, Second, Constant(1.0)], grid).unwrap();
        let s = chern_terng_integrate(&t, (16, 16), &AffineOptions::default()).unwrap();
        let expect: Vec<Vec3> = grid
            .points()
            .map(|(_, _, p)| [-p[0], -p[1], 0.5 * (p[0] * p[0] + p[1] * p[1])])
            .collect();
        let cmp = compare_surfaces(&s.z, &expect, [1.0; 3]).unwrap();
        // trapezoid is exact on the linear components; the quadratic one is O(h^2)
        assert!(cmp.linf[0] < 1e-13 && cmp.linf[1] < 1e-13, "{cmp:?}");
        assert!(cmp.linf[2] < 1e-3, "{cmp:?}");
        assert_eq!(s.degenerate_nodes, 0);
        let exact = chern_terng_integrate(&t, (16, 16), &exact_opts()).unwrap();
        assert!(compare_surfaces(&exact.z, &expect, [1.0; 3]).unwrap().max() < 1e-13);
    }

    #[test]
    fn constant_triple_has_zero_area() {
        use HarmonicExpr::*;
        let t = triple([Constant(1.0), Constant(-2.0), Constant(0.5)], square(0.0, 1.0, 9)).unwrap();
        let s = chern_terng_integrate(&t, (0, 0), &AffineOptions::default()).unwrap();
        assert!(s.zero_area());
        assert!(s.z.iter().all(|z| z.iter().all(|c| *c == 0.0)));
    }

    #[test]
    fn non_harmonic_triple_is_refused() {
        use HarmonicExpr::*;
        let err = triple([First, Second, FirstSquared], square(0.0, 1.0, 9)).unwrap_err();
        assert!(
            matches!(err, JoyceError::NotHarmonic { ref name, .. } if name == "F3"),
            "{err}"
        );
    }

    #[test]
    fn faces_cover_grid_cells() {
        use HarmonicExpr::*;
        let t = triple(
            [First, Second, Constant(1.0)],
            Grid2::new((0.0, 1.0), (0.0, 2.0), 4, 3).unwrap(),
        )
        .unwrap();
        let s = chern_terng_integrate(&t, (0, 0), &AffineOptions::default()).unwrap();
        let faces = s.faces();
        assert_eq!(faces.len(), 6);
        assert_eq!(faces[0], [0, 3, 4, 1]);
    }

    #[test]
    fn path_discrepancy_tracks_harmonic_defect() {
        let grid = square(0.0, 1.0, 33);
        let opts = AffineOptions {
            harmonic_rel_tol: f64::INFINITY,
            closedness_rel_tol: f64::INFINITY,
            rule: Some(Quadrature::GaussLegendre),
            ..AffineOptions::default()
        };
        let disc = |eps: f64| {
            let f3 = ScalarField::from_exact(
                grid,
                Arc::new(move |s, t| {
                    let (v, d) = HarmonicExpr::ExpCos.eval(s, t);
                    let bump = Jet2 {
                        h: 2.0 * eps * s,
                        hh: 2.0 * eps,
                        ..Jet2::default()
                    };
                    (
                        v + eps * s * s,
                        Jet2 {
                            h: d.h + bump.h,
                            hh: d.hh + bump.hh,
                            ..d
                        },
                    )
                }),
            );
            let t = HarmonicTriple::new(
                [HarmonicExpr::First.field(grid), HarmonicExpr::Second.field(grid), f3],
                f64::INFINITY,
            )
            .unwrap();
            let s = chern_terng_integrate(&t, (16, 16), &opts).unwrap();
            s.path_discrepancy.iter().fold(0.0f64, |m, v| m.max(*v))
        };
        let (d1, d2) = (disc(1e-3), disc(2e-3));
        assert!(disc(0.0) < 1e-12);
        assert!(d1 > 1e-6 && (d2 / d1 - 2.0).abs() < 0.05, "{d1:e} {d2:e}");
    }

    #[test]
    fn lift_examples() {
        let grid = Grid2::new((-0.5, 0.5), (1.0, 2.0), 65, 65).unwrap();
        let jd = affine_data();
        let opts = AffineOptions::default();
        let base = (32, 32);
        type Oracle = fn(f64, f64) -> f64;
        let cases: [(HarmonicExpr, Oracle); 3] = [
            (HarmonicExpr::First, |h, r| h / r),
            (HarmonicExpr::SquareDifference, |h, r| h * h / r - r),
            (HarmonicExpr::Second, |_, _| 1.0),
        ];
        for (e, oracle) in cases {
            let xi = lift_harmonic_to_seed(&e.field(grid), &jd, base, &opts).unwrap();
            let expect: Vec<f64> = grid.points().map(|(_, _, p)| oracle(p[0], p[1])).collect();
            let dev = max_dev_after_offset(xi.values(), &expect);
            assert!(dev < 1e-4, "{e}: {dev:e}");
            let res = linear_residual(&xi, &jd).unwrap();
            assert!(res.interior.linf < 1e-12, "{e}: {}", res.interior.linf);
        }
    }

    #[test]
    fn lift_gauge_matches_ratio_at_base() {
        let grid = Grid2::new((1.0, 2.0), (1.0, 2.0), 17, 17).unwrap();
        let f = HarmonicExpr::Product.field(grid);
        let xi = lift_harmonic_to_seed(&f, &affine_data(), (8, 8), &AffineOptions::default()).unwrap();
        let p = grid.point(8, 8);
        assert!((xi.value(8, 8) - p[0] * p[1] / p[1]).abs() < 1e-15);
    }

    #[test]
    fn lift_refuses_wrong_weight_and_axis() {
        let grid = Grid2::new((0.0, 1.0), (1.0, 2.0), 9, 9).unwrap();
        let f = HarmonicExpr::First.field(grid);
        let opts = AffineOptions::default();
        assert!(matches!(
            lift_harmonic_to_seed(&f, &JoyceData::linear(), (4, 4), &opts),
            Err(JoyceError::Incompatible(_))
        ));
        let touching = Grid2::new((0.0, 1.0), (0.0, 1.0), 9, 9).unwrap();
        assert!(lift_harmonic_to_seed(&HarmonicExpr::First.field(touching), &affine_data(), (4, 4), &opts).is_err());
        let bad = HarmonicExpr::FirstSquared.field(grid);
        assert!(matches!(
            lift_harmonic_to_seed(&bad, &affine_data(), (4, 4), &opts),
            Err(JoyceError::NotHarmonic { .. })
        ));
    }

    #[test]
    fn seed_surface_reproduces_reflected_worked_chart() {
        let grid = Grid2::new((0.0, 1.0), (1.0, 2.0), 33, 33).unwrap();
        let jd = JoyceData::linear();
        let xi1 = make_seed(&SeedSpec::CoordinateH, &jd, &grid).unwrap();
        let xi2 = make_seed(&SeedSpec::LogR, &jd, &grid).unwrap();
        let base = (16, 16);
        let chart = assemble_chart(&xi1, &xi2, &jd, base, &AssembleOptions::default()).unwrap();
        let s = seed_surface(&xi1, &xi2, &jd, base, [0.0; 3], &exact_opts()).unwrap();
        let chart_z: Vec<Vec3> = (0..grid.len())
            .map(|k| [chart.x1()[k], chart.x2()[k], chart.u()[k]])
            .collect();
        let cmp = compare_surfaces(&s.z, &chart_z, [-1.0, -1.0, 1.0]).unwrap();
        assert!(cmp.max() < 1e-10, "{cmp:?}");
        let worked: Vec<Vec3> = grid
            .points()
            .map(|(_, _, p)| {
                let (h, r) = (p[0], p[1]);
                [h, r * r / 2.0, h * h / 2.0 + r * r / 2.0 * r.ln() - r * r / 4.0]
            })
            .collect();
        assert!(compare_surfaces(&s.z, &worked, [-1.0, -1.0, 1.0]).unwrap().max() < 1e-8);
        // without the reflection the first two components disagree
        assert!(compare_surfaces(&s.z, &worked, [1.0; 3]).unwrap().linf[0] > 0.5);
    }

    #[test]
    fn seed_surface_flags_degenerate_pair() {
        let grid = Grid2::new((0.0, 1.0), (1.0, 2.0), 9, 9).unwrap();
        let jd = JoyceData::linear();
        let xi = make_seed(&SeedSpec::CoordinateH, &jd, &grid).unwrap();
        let s = seed_surface(&xi, &xi, &jd, (4, 4), [0.0; 3], &AffineOptions::default()).unwrap();
        assert!(s.zero_area());
    }

    #[test]
    fn seed_surface_of_lifted_seeds_converges() {
        // (H/r, H^2/r - r) are F/r for F = (H, H^2 - r^2, r), so the seed-driven
        // surface equals the cross-product surface of that triple
        let jd = affine_data();
        let err = |n: usize| {
            let grid = Grid2::new((-0.5, 0.5), (1.0, 2.0), n, n).unwrap();
            let xi1 = ScalarField::from_exact(
                grid,
                Arc::new(|h, r| {
                    let (v, d) = HarmonicExpr::First.eval(h, r);
                    (v / r, lift_jet(v, &d, r))
                }),
            );
            let xi2 = ScalarField::from_exact(
                grid,
                Arc::new(|h, r| {
                    let (v, d) = HarmonicExpr::SquareDifference.eval(h, r);
                    (v / r, lift_jet(v, &d, r))
                }),
            );
            let base = (n / 2, n / 2);
            let s = seed_surface(&xi1, &xi2, &jd, base, [0.0; 3], &AffineOptions::default()).unwrap();
            use HarmonicExpr::*;
            let t = triple([First, SquareDifference, Second], grid).unwrap();
            let oracle = chern_terng_integrate(&t, base, &exact_opts()).unwrap();
            compare_surfaces(&s.z, &oracle.z, [1.0; 3]).unwrap().max()
        };
        let (a, b) = (err(33), err(65));
        assert!(b < 1e-4 && (a / b).log2() > 1.8, "{a:e} {b:e}");
    }

    /// 2-jet of `F / r` from the value and 2-jet of `F`.
    fn lift_jet(v: f64, d: &Jet2, r: f64) -> Jet2 {
        let w = lift_form(v, d, r);
        Jet2 {
            h: w.a,
            r: w.b,
            hh: w.jet.a_h,
            hr: w.jet.a_r,
            rr: w.jet.b_r,
        }
    }

    #[test]
    fn seed_surface_refuses_non_solution() {
        let grid = Grid2::new((0.0, 1.0), (1.0, 2.0), 9, 9).unwrap();
        let jd = JoyceData::linear();
        let xi1 = make_seed(&SeedSpec::CoordinateH, &jd, &grid).unwrap();
        let xi2 = HarmonicExpr::FirstSquared.field(grid);
        let err = seed_surface(&xi1, &xi2, &jd, (4, 4), [0.0; 3], &AffineOptions::default()).unwrap_err();
        assert!(matches!(err, JoyceError::NotASolution(_)), "{err}");
    }

    fn equivalence_linf(f2: HarmonicExpr, n: usize) -> f64 {
        let grid = square(1.0, 2.0, n);
        let rep = equivalence_check(
            &HarmonicExpr::First.field(grid),
            &f2.field(grid),
            &affine_data(),
            (n / 2, n / 2),
            &AffineOptions::default(),
        )
        .unwrap();
        rep.comparison.max()
    }

    #[test]
    fn routes_agree_at_second_order() {
        for f2 in [HarmonicExpr::Product, HarmonicExpr::SquareDifference] {
            let (a, b) = (equivalence_linf(f2, 33), equivalence_linf(f2, 65));
            let order = (a / b).log2();
            assert!(b < 1e-4 && (order - 2.0).abs() < 0.2, "{f2}: {a:e} {b:e} {order}");
        }
    }

    #[test]
    fn routes_refuse_non_harmonic_input() {
        let grid = square(1.0, 2.0, 9);
        let err = equivalence_check(
            &HarmonicExpr::First.field(grid),
            &HarmonicExpr::FirstSquared.field(grid),
            &affine_data(),
            (4, 4),
            &AffineOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, JoyceError::NotHarmonic { .. }));
    }

    #[test]
    fn paraboloid_invariant_is_exact() {
        let grid = square(-1.0, 1.0, 33);
        let sol = XGridSolution::from_closed_form(grid, |x| PointSolution {
            u: 0.5 * (x[0] * x[0] + x[1] * x[1]),
            grad: x,
            hess: [[1.0, 0.0], [0.0, 1.0]],
        });
        let rep = affine_invariant_check(&sol, Some(UNIT_SHEAR)).unwrap();
        assert_eq!(rep.nonconvex, 0);
        assert!(rep.identity_defect < 1e-14);
        assert!(rep.shear.unwrap().linf < 1e-9);
    }

    #[test]
    fn worked_invariant_and_shear() {
        let linf = |n: usize| {
            let sol = worked_logdet_solution(XGrid::new((0.0, 1.0), (0.5, 2.0), n, n).unwrap());
            let rep = affine_invariant_check(&sol, Some(UNIT_SHEAR)).unwrap();
            assert!(rep.identity_defect <= 1e-12);
            assert_eq!(rep.nonconvex, 0);
            rep.shear.unwrap().linf
        };
        let (a, b) = (linf(33), linf(65));
        assert!((a / b).log2() > 1.8, "{a:e} {b:e}");
    }

    #[test]
    fn shear_refuses_non_unimodular_map() {
        let sol = worked_logdet_solution(XGrid::new((0.0, 1.0), (0.5, 2.0), 9, 9).unwrap());
        assert!(affine_invariant_check(&sol, Some([[2.0, 0.0], [0.0, 1.0]])).is_err());
    }
}
