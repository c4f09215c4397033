//! Forward construction: closed 1-forms from a seed pair and their
//! integration into a solution chart `(x1, x2, u)` over the `(H, r)` grid.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{JoyceError, Result};
use crate::grid::{largest_rect_containing, partial, Bicubic, Grid2, NodeRect, Norms};
use crate::numeric::{det2, gl16, inv2, mul2, Mat2};
use crate::potential::JoyceData;
use crate::seeds::{check_grid_inside, Jet2, JetSource, ScalarField};

/// First derivatives of the coefficients of `a dH + b dr`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FormJet {
    pub a_h: f64,
    pub a_r: f64,
    pub b_h: f64,
    pub b_r: f64,
}

/// Coefficients and their derivatives at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FormPoint {
    pub a: f64,
    pub b: f64,
    pub jet: FormJet,
}

pub type FormFn = Arc<dyn Fn(f64, f64) -> FormPoint + Send + Sync>;

/// `a dH + b dr` sampled on a grid.
#[derive(Clone)]
pub struct OneForm {
    grid: Grid2,
    a: Vec<f64>,
    b: Vec<f64>,
    jet: Option<Vec<FormJet>>,
    exact: Option<FormFn>,
}

impl fmt::Debug for OneForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OneForm")
            .field("grid", &self.grid)
            .field("jet", &self.jet.is_some())
            .field("exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

impl OneForm {
    pub fn from_components(grid: Grid2, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != grid.len() || b.len() != grid.len() {
            return Err(JoyceError::GridMismatch("form component length".into()));
        }
        Ok(Self {
            grid,
            a,
            b,
            jet: None,
            exact: None,
        })
    }

    /// Attach analytic derivatives of the coefficients.
    pub fn with_jet(mut self, jet: Vec<FormJet>) -> Result<Self> {
        if jet.len() != self.grid.len() {
            return Err(JoyceError::GridMismatch("form jet length".into()));
        }
        self.jet = Some(jet);
        Ok(self)
    }

    /// Sample a closed-form 1-form, keeping its evaluator and jet.
    pub fn from_exact(grid: Grid2, f: FormFn) -> Self {
        let pts: Vec<FormPoint> = grid.points().map(|(_, _, p)| f(p[0], p[1])).collect();
        Self {
            grid,
            a: pts.iter().map(|q| q.a).collect(),
            b: pts.iter().map(|q| q.b).collect(),
            jet: Some(pts.iter().map(|q| q.jet).collect()),
            exact: Some(f),
        }
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn jet(&self) -> Option<&[FormJet]> {
        self.jet.as_deref()
    }
    pub fn exact(&self) -> Option<&FormFn> {
        self.exact.as_ref()
    }

    pub fn sup_norm(&self) -> f64 {
        self.a.iter().chain(&self.b).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The three forms built from a seed pair.
#[derive(Debug, Clone)]
pub struct Forms {
    pub eps1: OneForm,
    pub eps2: OneForm,
    pub eps: OneForm,
}

/// `eps1, eps2, eps` at one point from the seed values and 2-jets.
pub fn forms_at(xi1: f64, d1: &Jet2, xi2: f64, d2: &Jet2, p: f64, dp: f64) -> [FormPoint; 3] {
    let e1 = FormPoint {
        a: p * d2.r,
        b: -p * d2.h,
        jet: FormJet {
            a_h: p * d2.hr,
            a_r: dp * d2.r + p * d2.rr,
            b_h: -p * d2.hh,
            b_r: -dp * d2.h - p * d2.hr,
        },
    };
    let e2 = FormPoint {
        a: -p * d1.r,
        b: p * d1.h,
        jet: FormJet {
            a_h: -p * d1.hr,
            a_r: -dp * d1.r - p * d1.rr,
            b_h: p * d1.hh,
            b_r: dp * d1.h + p * d1.hr,
        },
    };
    let e = FormPoint {
        a: xi1 * e1.a + xi2 * e2.a,
        b: xi1 * e1.b + xi2 * e2.b,
        jet: FormJet {
            a_h: d1.h * e1.a + xi1 * e1.jet.a_h + d2.h * e2.a + xi2 * e2.jet.a_h,
            a_r: d1.r * e1.a + xi1 * e1.jet.a_r + d2.r * e2.a + xi2 * e2.jet.a_r,
            b_h: d1.h * e1.b + xi1 * e1.jet.b_h + d2.h * e2.b + xi2 * e2.jet.b_h,
            b_r: d1.r * e1.b + xi1 * e1.jet.b_r + d2.r * e2.b + xi2 * e2.jet.b_r,
        },
    };
    [e1, e2, e]
}

type TripleFn = Arc<dyn Fn(f64, f64) -> ([f64; 2], [Jet2; 2], [FormPoint; 3]) + Send + Sync>;

fn exact_triple(xi1: &ScalarField, xi2: &ScalarField, jd: &JoyceData) -> Option<TripleFn> {
    let (f1, f2) = (xi1.exact()?.clone(), xi2.exact()?.clone());
    let jd = jd.clone();
    Some(Arc::new(move |h, r| {
        let (v1, d1) = f1(h, r);
        let (v2, d2) = f2(h, r);
        let e = jd.eval_unchecked(r);
        ([v1, v2], [d1, d2], forms_at(v1, &d1, v2, &d2, e.p, e.dp))
    }))
}

/// Build `eps1 = p (xi2_r dH - xi2_H dr)`, `eps2 = p (-xi1_r dH + xi1_H dr)`
/// and `eps = xi1 eps1 + xi2 eps2`.
pub fn build_forms(xi1: &ScalarField, xi2: &ScalarField, jd: &JoyceData) -> Result<Forms> {
    xi1.grid().check_same(xi2.grid())?;
    let grid = *xi1.grid();
    check_grid_inside(&grid, jd)?;
    let pts: Vec<[FormPoint; 3]> = grid
        .points()
        .enumerate()
        .map(|(k, (_, _, p))| {
            let e = jd.eval_unchecked(p[1]);
            forms_at(
                xi1.values()[k],
                &xi1.jet()[k],
                xi2.values()[k],
                &xi2.jet()[k],
                e.p,
                e.dp,
            )
        })
        .collect();
    let analytic = xi1.jet_source() == JetSource::Analytic && xi2.jet_source() == JetSource::Analytic;
    let triple = exact_triple(xi1, xi2, jd);
    let make = |c: usize| OneForm {
        grid,
        a: pts.iter().map(|q| q[c].a).collect(),
        b: pts.iter().map(|q| q[c].b).collect(),
        jet: analytic.then(|| pts.iter().map(|q| q[c].jet).collect()),
        exact: triple.as_ref().map(|t| {
            let t = t.clone();
            Arc::new(move |h: f64, r: f64| t(h, r).2[c]) as FormFn
        }),
    };
    Ok(Forms {
        eps1: make(0),
        eps2: make(1),
        eps: make(2),
    })
}

/// Exterior-derivative coefficient `b_H - a_r` per node.
#[derive(Debug, Clone)]
pub struct ClosednessReport {
    pub values: Vec<f64>,
    pub norms: Norms,
}

pub fn closedness_residual(w: &OneForm) -> ClosednessReport {
    let values: Vec<f64> = match &w.jet {
        Some(jet) => jet.iter().map(|j| j.b_h - j.a_r).collect(),
        None => {
            let bh = partial(&w.grid, &w.b, 0);
            let ar = partial(&w.grid, &w.a, 1);
            bh.iter().zip(&ar).map(|(x, y)| x - y).collect()
        }
    };
    let norms = Norms::over(&w.grid, &values, &w.grid.full_rect());
    ClosednessReport { values, norms }
}

/// Closedness tolerance: `rel` times the natural scale of the residual.
pub fn closedness_tolerance(w: &OneForm, rel: f64) -> f64 {
    let g = &w.grid;
    let side = (g.axes[0].hi - g.axes[0].lo).min(g.axes[1].hi - g.axes[1].lo);
    rel * (w.sup_norm() / side).max(1.0)
}

/// Positivity of `det d(xi1, xi2)/d(H, r)` and the largest positive rectangle.
#[derive(Debug, Clone)]
pub struct NondegeneracyMask {
    pub det_b: Vec<f64>,
    pub mask: Vec<bool>,
    pub rect: Option<NodeRect>,
}

pub fn nondegeneracy_mask(xi1: &ScalarField, xi2: &ScalarField, anchor: (usize, usize)) -> Result<NondegeneracyMask> {
    xi1.grid().check_same(xi2.grid())?;
    let grid = xi1.grid();
    let (n0, n1) = grid.shape();
    if anchor.0 >= n0 || anchor.1 >= n1 {
        return Err(JoyceError::InvalidInput(format!(
            "anchor node {anchor:?} outside {n0}x{n1} grid"
        )));
    }
    let (det_b, mask): (Vec<f64>, Vec<bool>) = xi1
        .jet()
        .iter()
        .zip(xi2.jet())
        .map(|(d1, d2)| {
            let (p, q) = (d1.h * d2.r, d1.r * d2.h);
            let det = p - q;
            (det, det > 1e-12 * (p.abs() + q.abs()))
        })
        .unzip();
    let rect = largest_rect_containing(grid, &mask, anchor).filter(|r| r.rows() >= 3 && r.cols() >= 3);
    Ok(NondegeneracyMask { det_b, mask, rect })
}

/// Per-cell quadrature rule used along integration paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Composite trapezoid on nodal values.
    Trapezoid,
    /// Trapezoid with the endpoint-derivative correction `-h^2/12 [g']`.
    HermiteTrapezoid,
    /// 16-point Gauss-Legendre per cell on the closed-form evaluator.
    GaussLegendre,
}

impl Quadrature {
    /// Most accurate rule the form supports.
    pub fn best_for(w: &OneForm) -> Self {
        if w.exact.is_some() {
            Self::GaussLegendre
        } else if w.jet.is_some() {
            Self::HermiteTrapezoid
        } else {
            Self::Trapezoid
        }
    }

    fn supported_by(self, w: &OneForm) -> bool {
        match self {
            Self::Trapezoid => true,
            Self::HermiteTrapezoid => w.jet.is_some(),
            Self::GaussLegendre => w.exact.is_some(),
        }
    }
}

impl fmt::Display for Quadrature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Trapezoid => "trapezoid",
            Self::HermiteTrapezoid => "hermite_trapezoid",
            Self::GaussLegendre => "gauss_legendre",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    /// `None` selects [`Quadrature::best_for`].
    pub rule: Option<Quadrature>,
    /// Relative closedness tolerance, scaled by [`closedness_tolerance`].
    pub closedness_rel_tol: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            rule: None,
            closedness_rel_tol: 1e-6,
        }
    }
}

/// A primitive of a closed form with its integration audit.
#[derive(Debug, Clone)]
pub struct Primitive {
    pub field: ScalarField,
    pub closedness: Norms,
    /// Largest difference between the row-first and column-first paths.
    pub path_discrepancy: f64,
    pub rule: Quadrature,
}

/// 16-point Gauss-Legendre integral of `g` over `[lo, hi]`.
fn gl_segment(g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (x, w) = gl16();
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    half * x.iter().zip(w).map(|(t, wt)| wt * g(mid + half * t)).sum::<f64>()
}

/// Integral of `w` over the cell edge from node `k` to its successor along `axis`.
fn edge_integral(w: &OneForm, rule: Quadrature, axis: usize, i: usize, j: usize) -> f64 {
    let g = &w.grid;
    let (i1, j1) = if axis == 0 { (i + 1, j) } else { (i, j + 1) };
    let (k0, k1) = (g.idx(i, j), g.idx(i1, j1));
    let h = g.axes[axis].step();
    let comp = if axis == 0 { &w.a } else { &w.b };
    match rule {
        Quadrature::Trapezoid => 0.5 * h * (comp[k0] + comp[k1]),
        Quadrature::HermiteTrapezoid => {
            let jet = w.jet.as_ref().expect("rule checked");
            let d = |k: usize| if axis == 0 { jet[k].a_h } else { jet[k].b_r };
            0.5 * h * (comp[k0] + comp[k1]) - h * h / 12.0 * (d(k1) - d(k0))
        }
        Quadrature::GaussLegendre => {
            let f = w.exact.as_ref().expect("rule checked");
            let p0 = g.point(i, j);
            let p1 = g.point(i1, j1);
            if axis == 0 {
                gl_segment(|s| f(s, p0[1]).a, p0[0], p1[0])
            } else {
                gl_segment(|s| f(p0[0], s).b, p0[1], p1[1])
            }
        }
    }
}

/// Cumulative integral along a grid line through `base`, zero at `base`.
fn line_primitive(w: &OneForm, rule: Quadrature, axis: usize, fixed: usize, base: usize) -> Vec<f64> {
    let n = w.grid.axes[axis].n;
    let at = |k: usize| if axis == 0 { (k, fixed) } else { (fixed, k) };
    let mut out = vec![0.0; n];
    for k in base..n - 1 {
        let (i, j) = at(k);
        out[k + 1] = out[k] + edge_integral(w, rule, axis, i, j);
    }
    for k in (0..base).rev() {
        let (i, j) = at(k);
        out[k] = out[k + 1] - edge_integral(w, rule, axis, i, j);
    }
    out
}

/// Integrate along the base line of `first_axis`, then along every
/// transverse line.
fn path_primitive(w: &OneForm, rule: Quadrature, base: (usize, usize), first_axis: usize) -> Vec<f64> {
    let g = &w.grid;
    let (n0, n1) = g.shape();
    let mut phi = vec![0.0; g.len()];
    if first_axis == 0 {
        let row = line_primitive(w, rule, 0, base.1, base.0);
        for i in 0..n0 {
            let col = line_primitive(w, rule, 1, i, base.1);
            for j in 0..n1 {
                phi[g.idx(i, j)] = row[i] + col[j];
            }
        }
    } else {
        let col = line_primitive(w, rule, 1, base.0, base.1);
        for j in 0..n1 {
            let row = line_primitive(w, rule, 0, j, base.0);
            for i in 0..n0 {
                phi[g.idx(i, j)] = col[j] + row[i];
            }
        }
    }
    phi
}

/// Primitive `phi` of a closed form with `phi(base) = 0`, integrated along the
/// base row and then up every column; the column-first path is the audit.
pub fn integrate_potential(w: &OneForm, base: (usize, usize), opts: &IntegrationOptions) -> Result<Primitive> {
    let g = w.grid;
    let (n0, n1) = g.shape();
    if base.0 >= n0 || base.1 >= n1 {
        return Err(JoyceError::InvalidInput(format!("base node {base:?} outside grid")));
    }
    let rule = opts.rule.unwrap_or_else(|| Quadrature::best_for(w));
    if !rule.supported_by(w) {
        return Err(JoyceError::InvalidInput(format!(
            "rule {rule} needs data the form does not carry"
        )));
    }
    let closed = closedness_residual(w);
    let tol = closedness_tolerance(w, opts.closedness_rel_tol);
    if !(closed.norms.linf <= tol) {
        let (i, j) = closed.norms.argmax;
        return Err(JoyceError::NotClosed {
            residual: closed.norms.linf,
            tolerance: tol,
            i,
            j,
        });
    }
    let phi = path_primitive(w, rule, base, 0);
    let audit = path_primitive(w, rule, base, 1);
    let path_discrepancy = phi.iter().zip(&audit).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let field = match &w.jet {
        Some(jet) => {
            let d = (0..g.len())
                .map(|k| Jet2 {
                    h: w.a[k],
                    r: w.b[k],
                    hh: jet[k].a_h,
                    hr: 0.5 * (jet[k].a_r + jet[k].b_h),
                    rr: jet[k].b_r,
                })
                .collect();
            ScalarField::from_parts(g, phi, d, JetSource::Analytic)?
        }
        None => ScalarField::from_values(g, phi)?,
    };
    Ok(Primitive {
        field,
        closedness: closed.norms,
        path_discrepancy,
        rule,
    })
}

/// Integration base and constants of a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    /// Base node in the chart grid.
    pub base: (usize, usize),
    /// `(H, r)` of the base node.
    pub base_point: [f64; 2],
    /// Values of `x1, x2, u` at the base.
    pub constants: [f64; 3],
    /// Rectangle of the seed grid kept after the nondegeneracy restriction.
    pub kept: NodeRect,
}

/// Audit data gathered while assembling a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyReport {
    /// Closedness `L-inf` of `eps1, eps2, eps`.
    pub closedness: [f64; 3],
    pub tolerance: [f64; 3],
    pub path_discrepancy: [f64; 3],
    pub rule: Quadrature,
    pub restricted: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AssembleOptions {
    pub integration: IntegrationOptions,
}

/// Chart quantities at an arbitrary `(H, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartSample {
    pub x: [f64; 2],
    pub u: f64,
    pub xi: [f64; 2],
    /// `dx_i / d(H, r)`
    pub a: Mat2,
    /// `dxi_i / d(H, r)`
    pub b: Mat2,
    pub j: f64,
}

impl ChartSample {
    /// Hessian of `u` in `x`: `B A^-1`.
    pub fn hessian(&self) -> Option<Mat2> {
        inv2(&self.a).map(|ai| mul2(&self.b, &ai))
    }
}

/// A solution patch over an `(H, r)` rectangle.
#[derive(Clone)]
pub struct Chart {
    grid: Grid2,
    x1: Vec<f64>,
    x2: Vec<f64>,
    u: Vec<f64>,
    du: Vec<[f64; 2]>,
    a: Vec<Mat2>,
    b: Vec<Mat2>,
    det_a: Vec<f64>,
    det_b: Vec<f64>,
    j: Vec<f64>,
    jd: JoyceData,
    seeds: [ScalarField; 2],
    gauge: Gauge,
    report: AssemblyReport,
    triple: Option<TripleFn>,
    interp: Option<Arc<[Bicubic; 3]>>,
    guesses: Arc<Vec<([f64; 2], [f64; 2])>>,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("grid", &self.grid)
            .field("jd", &self.jd.describe())
            .field("gauge", &self.gauge)
            .field("report", &self.report)
            .finish_non_exhaustive()
    }
}

/// Integrate the forms of a seed pair into a chart with base node `base`.
///
/// Nodes where `det B <= 0` are cut away by keeping the largest positive
/// rectangle containing the base.
pub fn assemble_chart(
    xi1: &ScalarField,
    xi2: &ScalarField,
    jd: &JoyceData,
    base: (usize, usize),
    opts: &AssembleOptions,
) -> Result<Chart> {
    xi1.grid().check_same(xi2.grid())?;
    check_grid_inside(xi1.grid(), jd)?;
    let nd = nondegeneracy_mask(xi1, xi2, base)?;
    let Some(kept) = nd.rect else {
        let bad = nd.mask.iter().filter(|m| !**m).count();
        return Err(JoyceError::Degenerate(format!(
            "det d(xi1,xi2)/d(H,r) <= 0 at {bad} of {} nodes including the base {base:?} \
             (value {:.3e}); no positive rectangle of at least 3x3 nodes contains it",
            nd.mask.len(),
            nd.det_b[xi1.grid().idx(base.0, base.1)]
        )));
    };
    let restricted = kept != xi1.grid().full_rect();
    let (s1, s2) = if restricted {
        (xi1.restrict(&kept)?, xi2.restrict(&kept)?)
    } else {
        (xi1.clone(), xi2.clone())
    };
    let base_local = (base.0 - kept.i0, base.1 - kept.j0);
    let grid = *s1.grid();
    let forms = build_forms(&s1, &s2, jd)?;
    let rel = opts.integration.closedness_rel_tol;
    let integrate = |w: &OneForm| integrate_potential(w, base_local, &opts.integration);
    let px1 = integrate(&forms.eps1)?;
    let px2 = integrate(&forms.eps2)?;
    let pu = integrate(&forms.eps)?;

    let n = grid.len();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for k in 0..n {
        a.push([[forms.eps1.a[k], forms.eps1.b[k]], [forms.eps2.a[k], forms.eps2.b[k]]]);
        let (d1, d2) = (&s1.jet()[k], &s2.jet()[k]);
        b.push([[d1.h, d1.r], [d2.h, d2.r]]);
    }
    let det_a: Vec<f64> = a.iter().map(det2).collect();
    let det_b: Vec<f64> = b.iter().map(det2).collect();
    let j = det_b.iter().zip(&det_a).map(|(b, a)| b / a).collect();

    let triple = exact_triple(&s1, &s2, jd);
    let interp = if triple.is_none() {
        let bic = |pr: &Primitive| {
            let f = pr.field.values().to_vec();
            let d = pr.field.jet();
            Bicubic::new(
                grid,
                f,
                d.iter().map(|q| q.h).collect(),
                d.iter().map(|q| q.r).collect(),
                d.iter().map(|q| q.hr).collect(),
            )
        };
        Some(Arc::new([bic(&px1), bic(&px2), bic(&pu)]))
    } else {
        None
    };
    let x1 = px1.field.values().to_vec();
    let x2 = px2.field.values().to_vec();
    let guesses = Arc::new(guess_table(&grid, &x1, &x2));
    let report = AssemblyReport {
        closedness: [px1.closedness.linf, px2.closedness.linf, pu.closedness.linf],
        tolerance: [
            closedness_tolerance(&forms.eps1, rel),
            closedness_tolerance(&forms.eps2, rel),
            closedness_tolerance(&forms.eps, rel),
        ],
        path_discrepancy: [px1.path_discrepancy, px2.path_discrepancy, pu.path_discrepancy],
        rule: px1.rule,
        restricted,
    };
    Ok(Chart {
        grid,
        x1,
        x2,
        u: pu.field.values().to_vec(),
        du: forms.eps.a.iter().zip(&forms.eps.b).map(|(a, b)| [*a, *b]).collect(),
        a,
        b,
        det_a,
        det_b,
        j,
        jd: jd.clone(),
        seeds: [s1, s2],
        gauge: Gauge {
            base: base_local,
            base_point: grid.point(base_local.0, base_local.1),
            constants: [0.0; 3],
            kept,
        },
        report,
        triple,
        interp,
        guesses,
    })
}

/// Coarse subsample of `(H, r) -> x` used to seed Newton inversions.
fn guess_table(grid: &Grid2, x1: &[f64], x2: &[f64]) -> Vec<([f64; 2], [f64; 2])> {
    let (n0, n1) = grid.shape();
    let s0 = (n0 / 32).max(1);
    let s1 = (n1 / 32).max(1);
    let mut out = Vec::new();
    for i in (0..n0).step_by(s0) {
        for j in (0..n1).step_by(s1) {
            let k = grid.idx(i, j);
            out.push((grid.point(i, j), [x1[k], x2[k]]));
        }
    }
    out
}

/// Outcome of inverting the chart map at one target point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preimage {
    Inside([f64; 2]),
    Outside([f64; 2]),
}

impl Chart {
    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }
    pub fn x1(&self) -> &[f64] {
        &self.x1
    }
    pub fn x2(&self) -> &[f64] {
        &self.x2
    }
    pub fn u(&self) -> &[f64] {
        &self.u
    }
    /// `du / d(H, r)` from the components of `eps`.
    pub fn du(&self) -> &[[f64; 2]] {
        &self.du
    }
    pub fn xi1(&self) -> &[f64] {
        self.seeds[0].values()
    }
    pub fn xi2(&self) -> &[f64] {
        self.seeds[1].values()
    }
    pub fn a(&self) -> &[Mat2] {
        &self.a
    }
    pub fn b(&self) -> &[Mat2] {
        &self.b
    }
    pub fn det_a(&self) -> &[f64] {
        &self.det_a
    }
    pub fn det_b(&self) -> &[f64] {
        &self.det_b
    }
    pub fn j(&self) -> &[f64] {
        &self.j
    }
    pub fn joyce(&self) -> &JoyceData {
        &self.jd
    }
    pub fn seeds(&self) -> &[ScalarField; 2] {
        &self.seeds
    }
    pub fn gauge(&self) -> &Gauge {
        &self.gauge
    }
    pub fn report(&self) -> &AssemblyReport {
        &self.report
    }

    /// Whether off-grid evaluation uses the closed-form seeds.
    pub fn has_exact(&self) -> bool {
        self.triple.is_some()
    }

    /// Bounding box of the image in `x`: `[(min x1, max x1), (min x2, max x2)]`.
    pub fn x_bounds(&self) -> [(f64, f64); 2] {
        let mm = |v: &[f64]| {
            v.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)))
        };
        [mm(&self.x1), mm(&self.x2)]
    }

    /// Chart quantities at `(H, r)`. With closed-form seeds the potentials
    /// are integrated from the nearest node by Gauss-Legendre; otherwise the
    /// nodal data are interpolated bicubically.
    pub fn eval_at(&self, h: f64, r: f64) -> ChartSample {
        if let Some(t) = &self.triple {
            let (i, j) = self.grid.nearest([h, r]);
            let k = self.grid.idx(i, j);
            let [h0, r0] = self.grid.point(i, j);
            let panels = |len: f64, step: f64| ((len.abs() / step).ceil() as usize).max(1);
            let mut acc = [self.x1[k], self.x2[k], self.u[k]];
            let steps = self.grid.steps();
            for (axis, (lo, hi)) in [(0, (h0, h)), (1, (r0, r))] {
                if lo == hi {
                    continue;
                }
                let m = panels(hi - lo, if axis == 0 { steps.0 } else { steps.1 });
                let width = (hi - lo) / m as f64;
                for p in 0..m {
                    let (s0, s1) = (lo + p as f64 * width, lo + (p + 1) as f64 * width);
                    let (xs, ws) = gl16();
                    let (mid, half) = (0.5 * (s0 + s1), 0.5 * (s1 - s0));
                    for (x, w) in xs.iter().zip(ws) {
                        let s = mid + half * x;
                        let f = if axis == 0 { t(s, r0).2 } else { t(h, s).2 };
                        for c in 0..3 {
                            acc[c] += half * w * if axis == 0 { f[c].a } else { f[c].b };
                        }
                    }
                }
            }
            let (xi, d, f) = t(h, r);
            let a = [[f[0].a, f[0].b], [f[1].a, f[1].b]];
            let b = [[d[0].h, d[0].r], [d[1].h, d[1].r]];
            return ChartSample {
                x: [acc[0], acc[1]],
                u: acc[2],
                xi,
                a,
                b,
                j: det2(&b) / det2(&a),
            };
        }
        let bic = self.interp.as_ref().expect("interpolants exist without closed forms");
        let s = [bic[0].eval([h, r]), bic[1].eval([h, r]), bic[2].eval([h, r])];
        let (v1, d1) = self.seeds[0].sample(h, r);
        let (v2, d2) = self.seeds[1].sample(h, r);
        let a = [[s[0].dx, s[0].dy], [s[1].dx, s[1].dy]];
        let b = [[d1.h, d1.r], [d2.h, d2.r]];
        ChartSample {
            x: [s[0].v, s[1].v],
            u: s[2].v,
            xi: [v1, v2],
            a,
            b,
            j: det2(&b) / det2(&a),
        }
    }

    /// Nearest coarse chart node in `x` to `target`, as an `(H, r)` guess.
    pub fn initial_guess(&self, target: [f64; 2]) -> [f64; 2] {
        let d2 = |x: [f64; 2]| (x[0] - target[0]).powi(2) + (x[1] - target[1]).powi(2);
        self.guesses
            .iter()
            .min_by(|p, q| d2(p.1).total_cmp(&d2(q.1)))
            .map(|p| p.0)
            .unwrap_or(self.gauge.base_point)
    }

    /// Solve `x(H, r) = target` by Newton iteration with Jacobian `A`.
    pub fn locate(&self, target: [f64; 2], guess: Option<[f64; 2]>, tol: f64, max_iter: usize) -> Result<Preimage> {
        let mut lam = guess.unwrap_or_else(|| self.initial_guess(target));
        let ax = &self.grid.axes;
        let slack = [2.0 * ax[0].step(), 2.0 * ax[1].step()];
        let scale = 1.0f64.max(target[0].abs()).max(target[1].abs());
        let mut converged = false;
        let mut clamped = false;
        for _ in 0..max_iter {
            let s = self.eval_at(lam[0], lam[1]);
            let f = [s.x[0] - target[0], s.x[1] - target[1]];
            let done = f[0].abs().max(f[1].abs()) <= tol * scale;
            let Some(ai) = inv2(&s.a) else {
                return Err(JoyceError::NewtonFailed(format!("singular A at (H, r) = {lam:?}")));
            };
            lam[0] -= ai[0][0] * f[0] + ai[0][1] * f[1];
            lam[1] -= ai[1][0] * f[0] + ai[1][1] * f[1];
            clamped = false;
            for d in 0..2 {
                let (lo, hi) = (ax[d].lo - slack[d], ax[d].hi + slack[d]);
                if lam[d] < lo || lam[d] > hi {
                    lam[d] = lam[d].clamp(lo, hi);
                    clamped = true;
                }
            }
            if done {
                converged = true;
                break;
            }
        }
        if !converged {
            if clamped {
                return Ok(Preimage::Outside(lam));
            }
            return Err(JoyceError::NewtonFailed(format!(
                "no convergence to x = {target:?} within {max_iter} iterations"
            )));
        }
        let eps = 1e-9;
        let inside = (0..2).all(|d| {
            let w = ax[d].hi - ax[d].lo;
            lam[d] >= ax[d].lo - eps * w && lam[d] <= ax[d].hi + eps * w
        });
        Ok(if inside {
            Preimage::Inside(lam)
        } else {
            Preimage::Outside(lam)
        })
    }

    /// Largest relative defect of `det A = p^2 det B` and `J p^2 = 1`.
    pub fn identity_defects(&self) -> (f64, f64) {
        let mut da: f64 = 0.0;
        let mut dj: f64 = 0.0;
        for (k, (_, _, pt)) in self.grid.points().enumerate() {
            let p2 = self.jd.eval_unchecked(pt[1]).p.powi(2);
            let lhs = self.det_a[k];
            let rhs = p2 * self.det_b[k];
            da = da.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
            dj = dj.max((self.j[k] * p2 - 1.0).abs());
        }
        (da, dj)
    }

    /// Largest defect of the isothermal relation
    /// `dxi_i/dl_a = e_ab e_ij sqrt(J) dx_j/dl_b`, relative to `|B|`.
    pub fn isothermal_defect(&self) -> f64 {
        let eps = |a: usize, b: usize| -> f64 {
            match (a, b) {
                (0, 1) => 1.0,
                (1, 0) => -1.0,
                _ => 0.0,
            }
        };
        let mut worst: f64 = 0.0;
        for k in 0..self.grid.len() {
            let sj = self.j[k].sqrt();
            let (a, b) = (&self.a[k], &self.b[k]);
            let scale = b
                .iter()
                .flatten()
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(f64::MIN_POSITIVE);
            for i in 0..2 {
                for la in 0..2 {
                    let mut rhs = 0.0;
                    for jj in 0..2 {
                        for lb in 0..2 {
                            rhs += eps(la, lb) * eps(i, jj) * sj * a[jj][lb];
                        }
                    }
                    worst = worst.max((b[i][la] - rhs).abs() / scale);
                }
            }
        }
        worst
    }
}
