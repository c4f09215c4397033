//! Independent checks on constructed solutions: chain-rule Hessians,
//! resampling onto `x` grids, the fourth-order residual in divergence form,
//! the harmonic-flux residual, convexity, the discrete functional and grid
//! convergence studies.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::{Chart, ChartSample, Preimage};
use crate::error::{JoyceError, Result};
use crate::grid::{inscribed_rect, partial, Bicubic, NodeRect, Norms, XGrid};
use crate::numeric::{det2, fit_slope, inv2, mul2, Mat2};
use crate::potential::{JoyceData, Potential};

/// Default inset of the physical window on which norms are compared across
/// refinement levels.
pub const WINDOW_INSET: f64 = 0.125;

/// Hessian of `u` on chart nodes from `B A^-1`.
#[derive(Debug, Clone)]
pub struct ChainHessian {
    pub hessian: Vec<Mat2>,
    /// `max |u_12 - u_21|`
    pub symmetry_defect: f64,
    /// `max |det(hessian) / J - 1|`
    pub det_defect: f64,
}

pub fn hessian_via_chain(chart: &Chart) -> Result<ChainHessian> {
    let g = chart.grid();
    let mut hessian = Vec::with_capacity(g.len());
    let mut symmetry_defect: f64 = 0.0;
    let mut det_defect: f64 = 0.0;
    for k in 0..g.len() {
        let Some(ai) = inv2(&chart.a()[k]) else {
            let (i, j) = g.ij(k);
            return Err(JoyceError::Singular { i, j });
        };
        let m = mul2(&chart.b()[k], &ai);
        symmetry_defect = symmetry_defect.max((m[0][1] - m[1][0]).abs());
        det_defect = det_defect.max((det2(&m) / chart.j()[k] - 1.0).abs());
        hessian.push(m);
    }
    Ok(ChainHessian {
        hessian,
        symmetry_defect,
        det_defect,
    })
}

/// Value, gradient and Hessian of a solution at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSolution {
    pub u: f64,
    pub grad: [f64; 2],
    pub hess: Mat2,
}

/// Off-grid evaluation of a solution `u(x)`.
pub trait SolutionSource: Send + Sync {
    fn eval(&self, x: [f64; 2]) -> Result<PointSolution>;
}

struct ClosedForm<F>(F);

impl<F> SolutionSource for ClosedForm<F>
where
    F: Fn([f64; 2]) -> PointSolution + Send + Sync,
{
    fn eval(&self, x: [f64; 2]) -> Result<PointSolution> {
        Ok((self.0)(x))
    }
}

/// A chart viewed as a function of `x`, evaluated by Newton inversion.
pub struct ChartSource {
    chart: Chart,
    opts: ResampleOptions,
}

impl ChartSource {
    pub fn new(chart: Chart, opts: ResampleOptions) -> Self {
        Self { chart, opts }
    }
}

impl SolutionSource for ChartSource {
    fn eval(&self, x: [f64; 2]) -> Result<PointSolution> {
        match self.chart.locate(x, None, self.opts.newton_tol, self.opts.max_iter)? {
            Preimage::Inside(l) | Preimage::Outside(l) => {
                let s = self.chart.eval_at(l[0], l[1]);
                let hess = s.hessian().ok_or(JoyceError::NewtonFailed("singular A".into()))?;
                Ok(PointSolution {
                    u: s.u,
                    grad: s.xi,
                    hess,
                })
            }
        }
    }
}

/// Bicubic interpolant of grid values with fourth-order derivative data.
pub struct BicubicSource(Bicubic);

impl BicubicSource {
    pub fn new(grid: XGrid, u: Vec<f64>) -> Self {
        Self(Bicubic::from_values(grid, u))
    }
}

impl SolutionSource for BicubicSource {
    fn eval(&self, x: [f64; 2]) -> Result<PointSolution> {
        let s = self.0.eval(x);
        Ok(PointSolution {
            u: s.v,
            grad: [s.dx, s.dy],
            hess: [[s.dxx, s.dxy], [s.dxy, s.dyy]],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionProvenance {
    ResampledFromChart,
    ClosedForm,
    ExternalFile,
    LegendreTransform,
}

impl fmt::Display for SolutionProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ResampledFromChart => "resampled-from-chart",
            Self::ClosedForm => "closed-form",
            Self::ExternalFile => "external-file",
            Self::LegendreTransform => "legendre-transform",
        })
    }
}

/// `u` sampled on a rectangular `(x1, x2)` grid.
#[derive(Clone)]
pub struct XGridSolution {
    pub grid: XGrid,
    pub u: Vec<f64>,
    pub xi: Option<[Vec<f64>; 2]>,
    pub j: Option<Vec<f64>>,
    pub provenance: SolutionProvenance,
    source: Option<Arc<dyn SolutionSource>>,
}

impl fmt::Debug for XGridSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("XGridSolution")
            .field("grid", &self.grid)
            .field("provenance", &self.provenance)
            .field("source", &self.source.is_some())
            .finish_non_exhaustive()
    }
}

impl XGridSolution {
    pub fn from_values(grid: XGrid, u: Vec<f64>, provenance: SolutionProvenance) -> Result<Self> {
        if u.len() != grid.len() {
            return Err(JoyceError::GridMismatch(format!(
                "{} values for {} nodes",
                u.len(),
                grid.len()
            )));
        }
        if let Some(k) = u.iter().position(|v| !v.is_finite()) {
            let (i, j) = grid.ij(k);
            return Err(JoyceError::InvalidInput(format!("non-finite u at node (i={i}, j={j})")));
        }
        Ok(Self {
            grid,
            u,
            xi: None,
            j: None,
            provenance,
            source: None,
        })
    }

    /// Sample a closed form; the evaluator is kept for off-grid use.
    pub fn from_closed_form<F>(grid: XGrid, f: F) -> Self
    where
        F: Fn([f64; 2]) -> PointSolution + Send + Sync + 'static,
    {
        let pts: Vec<PointSolution> = grid.points().map(|(_, _, x)| f(x)).collect();
        Self {
            grid,
            u: pts.iter().map(|p| p.u).collect(),
            xi: Some([
                pts.iter().map(|p| p.grad[0]).collect(),
                pts.iter().map(|p| p.grad[1]).collect(),
            ]),
            j: Some(pts.iter().map(|p| det2(&p.hess)).collect()),
            provenance: SolutionProvenance::ClosedForm,
            source: Some(Arc::new(ClosedForm(f))),
        }
    }

    pub fn with_source(mut self, source: Arc<dyn SolutionSource>) -> Self {
        self.source = Some(source);
        self
    }

    /// Same grid with new values; derived data and the evaluator are dropped.
    pub fn with_values(&self, u: Vec<f64>) -> Result<Self> {
        Self::from_values(self.grid, u, self.provenance)
    }

    /// Off-grid evaluator: the attached source, else a bicubic interpolant.
    pub fn source(&self) -> Arc<dyn SolutionSource> {
        self.source
            .clone()
            .unwrap_or_else(|| Arc::new(BicubicSource::new(self.grid, self.u.clone())))
    }

    pub fn has_source(&self) -> bool {
        self.source.is_some()
    }
}

/// The worked logdet solution `x1^2/2 + (x2/2)(log 2 x2 - 1)` on `grid`.
pub fn worked_logdet_solution(grid: XGrid) -> XGridSolution {
    XGridSolution::from_closed_form(grid, |x| {
        let (a, b) = (x[0], x[1]);
        PointSolution {
            u: a * a / 2.0 + b / 2.0 * ((2.0 * b).ln() - 1.0),
            grad: [a, 0.5 * (2.0 * b).ln()],
            hess: [[1.0, 0.0], [0.0, 0.5 / b]],
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleOptions {
    pub newton_tol: f64,
    pub max_iter: usize,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-12,
            max_iter: 30,
        }
    }
}

/// Evaluate a chart on a rectangular `x` grid by inverting `(H, r) -> x`
/// at every target node.
pub fn resample_to_xgrid(chart: &Chart, target: XGrid, opts: &ResampleOptions) -> Result<XGridSolution> {
    let (n0, n1) = target.shape();
    // Columns are independent Newton continuations, so they run in parallel
    // and the result does not depend on scheduling.
    let columns = (0..n0)
        .into_par_iter()
        .map(|i| -> Result<Vec<Option<ChartSample>>> {
            let mut guess = None;
            let mut col = Vec::with_capacity(n1);
            for j in 0..n1 {
                let x = target.point(i, j);
                let pre = match chart.locate(x, guess, opts.newton_tol, opts.max_iter) {
                    Ok(p) => p,
                    Err(_) if guess.is_some() => chart.locate(x, None, opts.newton_tol, opts.max_iter)?,
                    Err(e) => return Err(e),
                };
                match pre {
                    Preimage::Inside(l) => {
                        col.push(Some(chart.eval_at(l[0], l[1])));
                        guess = Some(l);
                    }
                    Preimage::Outside(_) => {
                        col.push(None);
                        guess = None;
                    }
                }
            }
            Ok(col)
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<Option<ChartSample>> = columns.into_iter().flatten().collect();
    let outside: Vec<usize> = (0..samples.len()).filter(|&k| samples[k].is_none()).collect();
    if let Some(&first) = outside.first() {
        return Err(JoyceError::OutsideImage {
            count: outside.len(),
            first: target.ij(first),
        });
    }
    let samples: Vec<ChartSample> = samples.into_iter().flatten().collect();
    let u = samples.iter().map(|s| s.u).collect();
    let xi1 = samples.iter().map(|s| s.xi[0]).collect();
    let xi2 = samples.iter().map(|s| s.xi[1]).collect();
    let jv = samples.iter().map(|s| s.j).collect();
    Ok(XGridSolution {
        grid: target,
        u,
        xi: Some([xi1, xi2]),
        j: Some(jv),
        provenance: SolutionProvenance::ResampledFromChart,
        source: Some(Arc::new(ChartSource::new(chart.clone(), *opts))),
    })
}

/// An axis-aligned rectangle in `x` whose boundary maps back inside the
/// chart: the image bounding box shrunk about its centre until every one of
/// `samples` points per side has an interior preimage.
pub fn inscribed_x_rect(chart: &Chart, samples: usize, opts: &ResampleOptions) -> Result<[(f64, f64); 2]> {
    let anchor = chart
        .eval_at(chart.gauge().base_point[0], chart.gauge().base_point[1])
        .x;
    inscribed_rect(chart.x_bounds(), anchor, samples, |x| {
        matches!(
            chart.locate(x, None, opts.newton_tol, opts.max_iter),
            Ok(Preimage::Inside(_))
        )
    })
    .ok_or(JoyceError::OutsideImage {
        count: 1,
        first: chart.gauge().base,
    })
}

/// Second-order Hessian by iterated central first differences (one-sided at
/// edges). Because every entry is a composition of the same commuting
/// difference operators, the cofactor field is discretely divergence free,
/// which keeps the divergence-form and flux residuals consistent.
pub fn fd_hessian(grid: &XGrid, u: &[f64]) -> Vec<Mat2> {
    let d1 = partial(grid, u, 0);
    let d2 = partial(grid, u, 1);
    let u11 = partial(grid, &d1, 0);
    let u12 = partial(grid, &d1, 1);
    let u22 = partial(grid, &d2, 1);
    (0..u.len()).map(|k| [[u11[k], u12[k]], [u12[k], u22[k]]]).collect()
}

/// Nodes from the edge at which the Hessian stencil stops touching
/// one-sided differences.
pub const HESSIAN_MARGIN: usize = 2;
/// Margin of the flux `v` and of the inner divergence of `w`.
pub const FLUX_MARGIN: usize = HESSIAN_MARGIN + 1;
/// Margin of both fourth-order residual fields.
pub const RESIDUAL_MARGIN: usize = FLUX_MARGIN + 1;

/// Nodes of `rect` where the Hessian fails the leading-minor test.
pub fn nonconvex_nodes(grid: &XGrid, hess: &[Mat2], rect: &NodeRect) -> Vec<(usize, usize)> {
    let mut bad = Vec::new();
    for i in rect.i0..=rect.i1 {
        for j in rect.j0..=rect.j1 {
            let m = &hess[grid.idx(i, j)];
            let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            let tol = 1e-12 * scale;
            if !(m[0][0] > tol && det2(m) > tol * scale) {
                bad.push((i, j));
            }
        }
    }
    bad
}

fn require_convex(grid: &XGrid, hess: &[Mat2], rect: &NodeRect) -> Result<()> {
    if let Some(&(i, j)) = nonconvex_nodes(grid, hess, rect).first() {
        let m = &hess[grid.idx(i, j)];
        return Err(JoyceError::NotConvex {
            i,
            j,
            minor: m[0][0],
            det: det2(m),
        });
    }
    Ok(())
}

fn interior_or_err(grid: &XGrid, margin: usize) -> Result<NodeRect> {
    grid.interior(margin).ok_or_else(|| {
        JoyceError::InvalidInput(format!(
            "grid {:?} too small for an interior margin of {margin} nodes",
            grid.shape()
        ))
    })
}

/// A residual sampled on an `x` grid, valid on `region`.
#[derive(Debug, Clone)]
pub struct ResidualField {
    pub name: String,
    pub grid: XGrid,
    pub values: Vec<f64>,
    pub region: NodeRect,
    pub norms: Norms,
}

impl ResidualField {
    fn new(name: &str, grid: XGrid, values: Vec<f64>, region: NodeRect) -> Self {
        let norms = Norms::over(&grid, &values, &region);
        Self {
            name: name.to_string(),
            grid,
            values,
            region,
            norms,
        }
    }

    /// Norms over the physical window of the given inset, clipped to the
    /// valid region.
    pub fn window_norms(&self, inset: f64) -> Result<Norms> {
        let w = self
            .grid
            .window(inset)
            .ok_or_else(|| JoyceError::InvalidInput(format!("empty window at inset {inset}")))?;
        let r = NodeRect {
            i0: w.i0.max(self.region.i0),
            i1: w.i1.min(self.region.i1),
            j0: w.j0.max(self.region.j0),
            j1: w.j1.min(self.region.j1),
        };
        if r.i0 > r.i1 || r.j0 > r.j1 {
            return Err(JoyceError::InvalidInput("window misses the valid region".into()));
        }
        Ok(Norms::over(&self.grid, &self.values, &r))
    }
}

/// `sum_ij d_i d_j (J psi'(J) u^ij)` in divergence form: `q_i = d_j w_ij`,
/// then `d_i q_i`, all with central first differences.
pub fn euler_lagrange_residual(sol: &XGridSolution, pot: &Potential) -> Result<ResidualField> {
    let g = &sol.grid;
    let inner = interior_or_err(g, HESSIAN_MARGIN)?;
    let outer = interior_or_err(g, RESIDUAL_MARGIN)?;
    let hess = fd_hessian(g, &sol.u);
    require_convex(g, &hess, &inner)?;
    let n = g.len();
    let (mut w11, mut w12, mut w22) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in inner.i0..=inner.i1 {
        for j in inner.j0..=inner.j1 {
            let k = g.idx(i, j);
            let m = &hess[k];
            // J u^ij is the cofactor matrix, so w = psi'(J) cof(D^2 u)
            let (_, d1, _) = pot.eval(det2(m));
            w11[k] = d1 * m[1][1];
            w12[k] = -d1 * m[0][1];
            w22[k] = d1 * m[0][0];
        }
    }
    let sum = |a: Vec<f64>, b: Vec<f64>| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| x + y).collect() };
    let q1 = sum(partial(g, &w11, 0), partial(g, &w12, 1));
    let q2 = sum(partial(g, &w12, 0), partial(g, &w22, 1));
    let d = sum(partial(g, &q1, 0), partial(g, &q2, 1));
    let mut values = vec![0.0; n];
    for i in outer.i0..=outer.i1 {
        for j in outer.j0..=outer.j1 {
            let k = g.idx(i, j);
            values[k] = d[k];
        }
    }
    Ok(ResidualField::new("euler_lagrange", *g, values, outer))
}

/// Flux `v_i = sqrt(J) u^ij d_j r` with `r = f(J)` from the Joyce data,
/// valid on `region`.
#[derive(Debug, Clone)]
pub struct Flux {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// `r = f(J)` per node
    pub r: Vec<f64>,
    pub j: Vec<f64>,
    pub region: NodeRect,
}

pub fn flux(sol: &XGridSolution, jd: &JoyceData) -> Result<Flux> {
    let g = &sol.grid;
    let inner = interior_or_err(g, FLUX_MARGIN)?;
    interior_or_err(g, RESIDUAL_MARGIN)?;
    let hess = fd_hessian(g, &sol.u);
    require_convex(g, &hess, &interior_or_err(g, HESSIAN_MARGIN)?)?;
    let j: Vec<f64> = hess.iter().map(det2).collect();
    let r = j
        .iter()
        .enumerate()
        .map(|(k, &jk)| {
            jd.f_of_j(jk).map_err(|e| match e {
                JoyceError::Range { value, lo, hi } => {
                    let (i, jj) = g.ij(k);
                    JoyceError::InvalidInput(format!(
                        "J = {value:.6e} at node (i={i}, j={jj}) outside the range ({lo:.6e}, {hi:.6e}) of {}",
                        jd.describe()
                    ))
                }
                e => e,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let r1 = partial(g, &r, 0);
    let r2 = partial(g, &r, 1);
    let n = g.len();
    let (mut v1, mut v2) = (vec![0.0; n], vec![0.0; n]);
    for i in inner.i0..=inner.i1 {
        for jj in inner.j0..=inner.j1 {
            let k = g.idx(i, jj);
            let m = &hess[k];
            let inv = inv2(m).ok_or(JoyceError::Singular { i, j: jj })?;
            let s = j[k].sqrt();
            v1[k] = s * (inv[0][0] * r1[k] + inv[0][1] * r2[k]);
            v2[k] = s * (inv[1][0] * r1[k] + inv[1][1] * r2[k]);
        }
    }
    Ok(Flux {
        v1,
        v2,
        r,
        j,
        region: inner,
    })
}

/// `d_1 v_1 + d_2 v_2` on the residual interior.
pub fn flux_divergence(g: &XGrid, fl: &Flux) -> Result<(Vec<f64>, NodeRect)> {
    let outer = interior_or_err(g, RESIDUAL_MARGIN)?;
    let a = partial(g, &fl.v1, 0);
    let b = partial(g, &fl.v2, 1);
    let mut div = vec![0.0; g.len()];
    for i in outer.i0..=outer.i1 {
        for j in outer.j0..=outer.j1 {
            let k = g.idx(i, j);
            div[k] = a[k] + b[k];
        }
    }
    Ok((div, outer))
}

/// Harmonicity residual of `r = f(J)`, with the factor relating it to the
/// fourth-order residual.
#[derive(Debug, Clone)]
pub struct HarmonicityResidual {
    pub field: ResidualField,
    /// `J^(1/2) psi''(J) / (dr/dJ)`, constant when `r` is an affine function
    /// of the primitive of `t^(1/2) psi''(t)`.
    pub kappa: f64,
    /// Largest relative deviation of the factor from its mean over the window.
    pub kappa_spread: f64,
}

pub fn harmonicity_residual(sol: &XGridSolution, jd: &JoyceData, pot: &Potential) -> Result<HarmonicityResidual> {
    let fl = flux(sol, jd)?;
    let (div, region) = flux_divergence(&sol.grid, &fl)?;
    let field = ResidualField::new("harmonicity", sol.grid, div, region);
    let win = sol.grid.window(WINDOW_INSET).unwrap_or(region);
    let mut ks = Vec::new();
    for i in win.i0.max(region.i0)..=win.i1.min(region.i1) {
        for j in win.j0.max(region.j0)..=win.j1.min(region.j1) {
            let k = sol.grid.idx(i, j);
            let e = jd.eval(fl.r[k])?;
            let dr_dj = -e.p.powi(3) / (2.0 * e.dp);
            ks.push(fl.j[k].sqrt() * pot.psi2(fl.j[k]) / dr_dj);
        }
    }
    let kappa = ks.iter().sum::<f64>() / ks.len().max(1) as f64;
    let kappa_spread = ks.iter().fold(0.0f64, |m, k| m.max((k / kappa - 1.0).abs()));
    Ok(HarmonicityResidual {
        field,
        kappa,
        kappa_spread,
    })
}

/// L2 ratios of the two residuals over the comparison window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRatio {
    /// `L2(harmonicity) / L2(euler_lagrange)`
    pub raw: f64,
    /// `|kappa| L2(harmonicity) / L2(euler_lagrange)`
    pub normalized: f64,
    pub kappa: f64,
}

pub fn residual_ratio(el: &ResidualField, harmonicity: &HarmonicityResidual, inset: f64) -> Result<ResidualRatio> {
    let a = harmonicity.field.window_norms(inset)?.l2;
    let b = el.window_norms(inset)?.l2;
    Ok(ResidualRatio {
        raw: a / b,
        normalized: harmonicity.kappa.abs() * a / b,
        kappa: harmonicity.kappa,
    })
}

/// Outcome of the convexity and gradient checks on an `x` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub checked: usize,
    pub nonconvex: Vec<(usize, usize)>,
    /// `L-inf` of `grad u - xi` over the single-margin interior, when `xi`
    /// is available.
    pub gradient_defect: Option<f64>,
}

impl ConvexityReport {
    pub fn convex(&self) -> bool {
        self.nonconvex.is_empty()
    }
}

pub fn convexity_legendre_check(sol: &XGridSolution) -> Result<ConvexityReport> {
    let g = &sol.grid;
    let inner = interior_or_err(g, 1)?;
    let hess = fd_hessian(g, &sol.u);
    let nonconvex = nonconvex_nodes(g, &hess, &inner);
    let gradient_defect = sol.xi.as_ref().map(|xi| {
        let d1 = partial(g, &sol.u, 0);
        let d2 = partial(g, &sol.u, 1);
        let mut m: f64 = 0.0;
        for i in inner.i0..=inner.i1 {
            for j in inner.j0..=inner.j1 {
                let k = g.idx(i, j);
                m = m.max((d1[k] - xi[0][k]).abs()).max((d2[k] - xi[1][k]).abs());
            }
        }
        m
    });
    Ok(ConvexityReport {
        checked: inner.count(),
        nonconvex,
        gradient_defect,
    })
}

/// `max |du/dl_a - xi_1 dx_1/dl_a - xi_2 dx_2/dl_a|` over chart nodes.
pub fn chart_legendre_defect(chart: &Chart) -> f64 {
    let mut m: f64 = 0.0;
    for k in 0..chart.grid().len() {
        let (a, du) = (&chart.a()[k], &chart.du()[k]);
        let xi = [chart.xi1()[k], chart.xi2()[k]];
        for la in 0..2 {
            m = m.max((du[la] - xi[0] * a[0][la] - xi[1] * a[1][la]).abs());
        }
    }
    m
}

/// Trapezoid quadrature of `psi(J)` over the single-margin interior.
pub fn discrete_functional(grid: &XGrid, u: &[f64], pot: &Potential) -> Result<f64> {
    let inner = interior_or_err(grid, 1)?;
    let hess = fd_hessian(grid, u);
    require_convex(grid, &hess, &inner)?;
    let (hx, hy) = grid.steps();
    let mut total = 0.0;
    for i in inner.i0..=inner.i1 {
        let wi = if i == inner.i0 || i == inner.i1 { 0.5 } else { 1.0 };
        for j in inner.j0..=inner.j1 {
            let wj = if j == inner.j0 || j == inner.j1 { 0.5 } else { 1.0 };
            total += wi * wj * pot.psi(det2(&hess[grid.idx(i, j)]));
        }
    }
    Ok(total * hx * hy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstVariation {
    pub functional: f64,
    /// `(F(u + s phi) - F(u - s phi)) / 2s`
    pub derivative: f64,
    /// Step actually used after any shrinking.
    pub step: f64,
}

/// Discrete functional and central-difference first variation along a
/// perturbation that vanishes on a collar of `RESIDUAL_MARGIN` nodes. On
/// such perturbations summation by parts is exact, so the derivative is the
/// grid sum of `phi` against the Euler-Lagrange residual.
pub fn functional_and_first_variation(
    sol: &XGridSolution,
    pot: &Potential,
    phi: &[f64],
    step: f64,
) -> Result<FirstVariation> {
    let g = &sol.grid;
    if phi.len() != g.len() {
        return Err(JoyceError::GridMismatch("perturbation length".into()));
    }
    if !(step > 0.0) {
        return Err(JoyceError::InvalidInput(format!("step must be positive, got {step}")));
    }
    let core = interior_or_err(g, RESIDUAL_MARGIN)?;
    if let Some(k) = (0..g.len()).find(|&k| {
        let (i, j) = g.ij(k);
        !core.contains(i, j) && phi[k] != 0.0
    }) {
        let (i, j) = g.ij(k);
        return Err(JoyceError::InvalidInput(format!(
            "perturbation nonzero on the boundary collar at node (i={i}, j={j})"
        )));
    }
    let functional = discrete_functional(g, &sol.u, pot)?;
    let shifted = |s: f64| -> Vec<f64> { sol.u.iter().zip(phi).map(|(u, p)| u + s * p).collect() };
    let mut s = step;
    for _ in 0..6 {
        let plus = discrete_functional(g, &shifted(s), pot);
        let minus = discrete_functional(g, &shifted(-s), pot);
        match (plus, minus) {
            (Ok(fp), Ok(fm)) => {
                return Ok(FirstVariation {
                    functional,
                    derivative: (fp - fm) / (2.0 * s),
                    step: s,
                })
            }
            (Err(JoyceError::NotConvex { .. }), _) | (_, Err(JoyceError::NotConvex { .. })) => s *= 0.5,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Err(JoyceError::CheckFailed(format!(
        "convexity lost for every step down to {s:.3e}"
    )))
}

/// Norms of one refinement level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelNorms {
    pub nodes: (usize, usize),
    pub h: f64,
    pub linf: f64,
    pub l2: f64,
    /// Estimated rounding floor of `linf`; zero when not estimated.
    pub floor: f64,
}

impl LevelNorms {
    pub fn of(field: &ResidualField, inset: f64) -> Result<Self> {
        let n = field.window_norms(inset)?;
        let (hx, hy) = field.grid.steps();
        Ok(Self {
            nodes: field.grid.shape(),
            h: hx.max(hy),
            linf: n.linf,
            l2: n.l2,
            floor: 0.0,
        })
    }

    /// Whether the residual stands clear of rounding.
    pub fn resolved(&self) -> bool {
        self.linf > ROUNDING_FLOOR.max(RESOLUTION_MARGIN * self.floor)
    }
}

/// Absolute norms at or below this are treated as exact zeros.
pub const ROUNDING_FLOOR: f64 = 1e-12;
/// A level counts as resolved when its residual exceeds its estimated
/// rounding floor by this factor.
pub const RESOLUTION_MARGIN: f64 = 10.0;
/// Size of the probe perturbation, relative to `max |u|`.
const ROUNDOFF_PROBE: f64 = 4.0 * f64::EPSILON;

/// Window `L-inf` change of a residual when `u` is perturbed by a few units
/// of roundoff: the level below which the residual carries no information.
pub fn rounding_floor<F>(sol: &XGridSolution, inset: f64, residual: F) -> Result<f64>
where
    F: Fn(&XGridSolution) -> Result<ResidualField>,
{
    let base = residual(sol)?;
    let scale = sol.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let u = sol
        .u
        .iter()
        .map(|v| v + ROUNDOFF_PROBE * scale * rng.random_range(-1.0..=1.0))
        .collect();
    let probe = residual(&sol.with_values(u)?)?;
    let diff: Vec<f64> = base.values.iter().zip(&probe.values).map(|(a, b)| a - b).collect();
    let field = ResidualField::new("rounding", base.grid, diff, base.region);
    Ok(field.window_norms(inset)?.linf)
}

/// Residual norms of one level together with their rounding floor.
pub fn residual_level<F>(sol: &XGridSolution, inset: f64, residual: F) -> Result<LevelNorms>
where
    F: Fn(&XGridSolution) -> Result<ResidualField>,
{
    let floor = rounding_floor(sol, inset, &residual)?;
    Ok(LevelNorms {
        floor,
        ..LevelNorms::of(&residual(sol)?, inset)?
    })
}

/// Norms per level, the fitted order, and the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub levels: Vec<LevelNorms>,
    /// Least-squares slope of `log L-inf` against `log h` over the resolved
    /// levels; `None` with fewer than two resolved levels.
    pub order: Option<f64>,
    pub min_order: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualReport {
    /// Every level sits at its rounding floor: the discrete residual
    /// vanishes identically.
    pub fn at_rounding(&self) -> bool {
        self.levels.iter().all(|l| !l.resolved())
    }
}

/// Run `producer` at each level size and fit the convergence order. Levels
/// lost in rounding are left out of the fit; a study with every level at
/// rounding passes without an order.
pub fn convergence_study<F>(
    name: &str,
    levels: &[usize],
    min_order: f64,
    tolerance: f64,
    mut producer: F,
) -> Result<ResidualReport>
where
    F: FnMut(usize) -> Result<LevelNorms>,
{
    if levels.len() < 3 {
        return Err(JoyceError::InvalidInput(format!(
            "convergence study needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    let levels = levels.iter().map(|&n| producer(n)).collect::<Result<Vec<_>>>()?;
    let finest = levels.iter().min_by(|a, b| a.h.total_cmp(&b.h)).expect("nonempty");
    let resolved: Vec<&LevelNorms> = levels.iter().filter(|l| l.resolved()).collect();
    let order = (resolved.len() >= 2).then(|| {
        let xs: Vec<f64> = resolved.iter().map(|l| l.h.ln()).collect();
        let ys: Vec<f64> = resolved.iter().map(|l| l.linf.ln()).collect();
        fit_slope(&xs, &ys)
    });
    let pass = match order {
        _ if resolved.is_empty() => true,
        Some(o) => o >= min_order && (finest.linf <= tolerance || !finest.resolved()),
        None => !finest.resolved(),
    };
    Ok(ResidualReport {
        name: name.to_string(),
        levels,
        order,
        min_order,
        tolerance,
        pass,
    })
}
