//! The converse construction: from a solution on an `x` grid, the harmonic
//! flux, its conjugate Hamiltonian `H`, the coordinate `r = f(J)`, and the
//! seed pair recovered on a rectangular `(H, r)` grid. Also the discrete
//! Legendre transform.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::construct::{integrate_potential, IntegrationOptions, OneForm};
use crate::error::{JoyceError, Result};
use crate::grid::{inscribed_rect, largest_rect_containing, partial, Bicubic, Grid2, NodeRect, Norms, XGrid};
use crate::numeric::{det2, inv2, Mat2};
use crate::potential::JoyceData;
use crate::seeds::ScalarField;
use crate::verify::{
    fd_hessian, flux, flux_divergence, Flux, PointSolution, SolutionProvenance, SolutionSource, XGridSolution,
};

/// Tunables of the converse construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseOptions {
    /// Relative threshold below which `|grad J|` marks a node as critical.
    pub ordinary_delta: f64,
    /// Divergence of the flux tolerated before the solution is refused,
    /// relative to `max(1, sup|v| / shortest side)`.
    pub divergence_rel_tol: f64,
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Nodes per side of the recovered `(H, r)` grid; `None` keeps the
    /// shape of the `x` region used.
    pub nodes: Option<(usize, usize)>,
    /// `(H, r)` rectangle of the recovered grid; `None` inscribes one in the
    /// image of the `x` region.
    pub target: Option<[(f64, f64); 2]>,
}

impl Default for InverseOptions {
    fn default() -> Self {
        Self {
            ordinary_delta: 1e-6,
            divergence_rel_tol: 5e-2,
            newton_tol: 1e-12,
            max_iter: 30,
            nodes: None,
            target: None,
        }
    }
}

/// Nodes where `grad J` does not vanish.
#[derive(Debug, Clone)]
pub struct OrdinaryMask {
    pub grad_j: Vec<f64>,
    pub mask: Vec<bool>,
    pub threshold: f64,
}

impl OrdinaryMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Mark nodes with `|grad J| > delta * (J scale) / (domain scale)`.
pub fn ordinary_point_mask(sol: &XGridSolution, delta: f64) -> OrdinaryMask {
    let g = &sol.grid;
    let j: Vec<f64> = fd_hessian(g, &sol.u).iter().map(det2).collect();
    let (j1, j2) = (partial(g, &j, 0), partial(g, &j, 1));
    let grad_j: Vec<f64> = j1.iter().zip(&j2).map(|(a, b)| a.hypot(*b)).collect();
    let j_scale = j.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let side = (g.axes[0].hi - g.axes[0].lo).max(g.axes[1].hi - g.axes[1].lo);
    let threshold = delta * j_scale / side;
    let mask = grad_j.iter().map(|&d| d > threshold).collect();
    OrdinaryMask {
        grad_j,
        mask,
        threshold,
    }
}

/// The flux `v_i = sqrt(J) u^ij d_j f(J)` on an `x` grid, valid on `region`.
#[derive(Debug, Clone)]
pub struct VField {
    pub grid: XGrid,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// `r = f(J)` per node.
    pub r: Vec<f64>,
    pub region: NodeRect,
}

impl VField {
    fn flux(&self) -> Flux {
        Flux {
            v1: self.v1.clone(),
            v2: self.v2.clone(),
            r: self.r.clone(),
            j: Vec::new(),
            region: self.region,
        }
    }

    /// `d_1 v_1 + d_2 v_2`; the same discrete object as the flux residual.
    pub fn divergence(&self) -> Result<(Vec<f64>, NodeRect)> {
        flux_divergence(&self.grid, &self.flux())
    }

    fn restricted(&self, rect: NodeRect) -> Self {
        Self {
            region: rect,
            ..self.clone()
        }
    }
}

pub fn compute_v_field(sol: &XGridSolution, jd: &JoyceData) -> Result<VField> {
    let f = flux(sol, jd)?;
    Ok(VField {
        grid: sol.grid,
        v1: f.v1,
        v2: f.v2,
        r: f.r,
        region: f.region,
    })
}

/// `H` on the node rectangle `region` of the `x` grid.
#[derive(Debug, Clone)]
pub struct ConjugateH {
    /// `H` on the restricted grid, zero at the base.
    pub field: ScalarField,
    pub region: NodeRect,
    /// Divergence of `v` over the restricted grid.
    pub divergence: Norms,
    pub path_discrepancy: f64,
}

/// Integrate `dH = v_2 dx_1 - v_1 dx_2` over `v.region` from `base`.
pub fn conjugate_h(v: &VField, base: (usize, usize), opts: &InverseOptions) -> Result<ConjugateH> {
    let rect = v.region;
    if !rect.contains(base.0, base.1) {
        return Err(JoyceError::InvalidInput(format!(
            "base node {base:?} outside the flux region {rect:?}"
        )));
    }
    let sub = v.grid.restrict(&rect)?;
    let pick = |f: &[f64], sign: f64| -> Vec<f64> {
        sub.points()
            .map(|(i, j, _)| sign * f[v.grid.idx(i + rect.i0, j + rect.j0)])
            .collect()
    };
    let form = OneForm::from_components(sub, pick(&v.v2, 1.0), pick(&v.v1, -1.0))?;
    let opts = IntegrationOptions {
        rule: None,
        closedness_rel_tol: opts.divergence_rel_tol,
    };
    let prim = integrate_potential(&form, (base.0 - rect.i0, base.1 - rect.j0), &opts).map_err(|e| match e {
        JoyceError::NotClosed {
            residual,
            tolerance,
            i,
            j,
        } => JoyceError::NotASolution(format!(
            "flux divergence {residual:.3e} exceeds {tolerance:.3e} at node (i={}, j={})",
            i + rect.i0,
            j + rect.j0
        )),
        e => e,
    })?;
    Ok(ConjugateH {
        field: prim.field,
        region: rect,
        divergence: prim.closedness,
        path_discrepancy: prim.path_discrepancy,
    })
}

/// Best-fit gauge of recovered seeds against reference seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeFit {
    /// Recovered `H` plus `shift` is the reference `H`.
    pub shift: f64,
    /// Recovered seed minus reference seed, per seed.
    pub constants: [f64; 2],
    /// Gauge-aligned `L-inf` differences per seed.
    pub linf: [f64; 2],
    /// Nodes compared.
    pub compared: usize,
}

/// Seeds recovered from a solution.
#[derive(Debug, Clone)]
pub struct RecoveredSeeds {
    /// The `x` grid restricted to the region used.
    pub x_grid: XGrid,
    /// Rectangle of the input grid the recovery used.
    pub region: NodeRect,
    /// `H` and `r` per node of `x_grid`.
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub xi1: ScalarField,
    pub xi2: ScalarField,
    pub divergence: Norms,
    pub path_discrepancy: f64,
    pub gauge: Option<GaugeFit>,
}

impl RecoveredSeeds {
    pub fn grid(&self) -> &Grid2 {
        self.xi1.grid()
    }

    /// Fit one `H` translation and one constant per seed against reference
    /// seeds, then report the aligned differences.
    pub fn with_reference(mut self, ref1: &ScalarField, ref2: &ScalarField) -> Result<Self> {
        self.gauge = Some(fit_gauge(&self.xi1, &self.xi2, ref1, ref2)?);
        Ok(self)
    }
}

fn fit_gauge(xi1: &ScalarField, xi2: &ScalarField, ref1: &ScalarField, ref2: &ScalarField) -> Result<GaugeFit> {
    let g = *xi1.grid();
    let rg = *ref1.grid();
    let inside = |h: f64, r: f64| rg.contains([h, r]);
    // Start from the shift matching the grid centres, then Gauss-Newton in
    // the shift with the constants eliminated as means.
    let mut shift = 0.5 * (rg.axes[0].lo + rg.axes[0].hi) - 0.5 * (g.axes[0].lo + g.axes[0].hi);
    let residuals = |shift: f64| -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let mut d = Vec::new();
        let mut slope = Vec::new();
        for (i, j, p) in g.points() {
            let h = p[0] + shift;
            if !inside(h, p[1]) {
                continue;
            }
            let (a, ja) = ref1.sample(h, p[1]);
            let (b, jb) = ref2.sample(h, p[1]);
            d.push([xi1.value(i, j) - a, xi2.value(i, j) - b]);
            slope.push([ja.h, jb.h]);
        }
        (d, slope)
    };
    for _ in 0..30 {
        let (d, slope) = residuals(shift);
        if d.len() < 4 {
            return Err(JoyceError::CheckFailed(format!(
                "recovered and reference grids overlap in {} nodes at H shift {shift:.6e}",
                d.len()
            )));
        }
        let n = d.len() as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for s in 0..2 {
            let md = d.iter().map(|v| v[s]).sum::<f64>() / n;
            let ms = slope.iter().map(|v| v[s]).sum::<f64>() / n;
            for (dv, sv) in d.iter().zip(&slope) {
                // residual (d - md) depends on shift through -slope
                num += (dv[s] - md) * (sv[s] - ms);
                den += (sv[s] - ms) * (sv[s] - ms);
            }
        }
        if den <= 0.0 {
            break;
        }
        let step = num / den;
        shift += step;
        if step.abs() <= 1e-14 * (1.0 + shift.abs()) {
            break;
        }
    }
    let (d, _) = residuals(shift);
    let n = d.len() as f64;
    let constants = [0, 1].map(|s| d.iter().map(|v| v[s]).sum::<f64>() / n);
    let linf = [0, 1].map(|s| d.iter().fold(0.0f64, |m, v| m.max((v[s] - constants[s]).abs())));
    Ok(GaugeFit {
        shift,
        constants,
        linf,
        compared: d.len(),
    })
}

/// Recover `(xi1, xi2)` on a rectangular `(H, r)` grid from a solution,
/// integrating `H` from `base`.
pub fn recover_seeds(
    sol: &XGridSolution,
    jd: &JoyceData,
    base: (usize, usize),
    opts: &InverseOptions,
) -> Result<RecoveredSeeds> {
    let g = sol.grid;
    let ord = ordinary_point_mask(sol, opts.ordinary_delta);
    if ord.count() == 0 {
        return Err(JoyceError::NoOrdinaryPoints(format!(
            "grad J below {:.3e} at every node",
            ord.threshold
        )));
    }
    let v = compute_v_field(sol, jd)?;
    let usable: Vec<bool> = (0..g.len())
        .map(|k| {
            let (i, j) = g.ij(k);
            ord.mask[k] && v.region.contains(i, j)
        })
        .collect();
    let rect = largest_rect_containing(&g, &usable, base)
        .filter(|r| r.rows() >= 4 && r.cols() >= 4)
        .ok_or_else(|| {
            JoyceError::NoOrdinaryPoints(format!(
                "no rectangle of ordinary points of at least 4x4 nodes contains the base {base:?}"
            ))
        })?;
    let conj = conjugate_h(&v.restricted(rect), base, opts)?;
    let sub = *conj.field.grid();
    let take = |f: &[f64]| -> Vec<f64> {
        sub.points()
            .map(|(i, j, _)| f[g.idx(i + rect.i0, j + rect.j0)])
            .collect()
    };
    let h = conj.field.values().to_vec();
    let r = take(&v.r);

    // dH = (v2, -v1), so det d(H, r)/dx = v2 r_2 + v1 r_1 = sqrt(J) u^ij r_i r_j
    let (r1, r2) = (partial(&g, &v.r, 0), partial(&g, &v.r, 1));
    for (i, j, _) in sub.points() {
        let k = g.idx(i + rect.i0, j + rect.j0);
        let det = v.v2[k] * r2[k] + v.v1[k] * r1[k];
        if !(det > 0.0) {
            return Err(JoyceError::FoldOver(format!(
                "det d(H, r)/dx = {det:.3e} at node (i={}, j={})",
                i + rect.i0,
                j + rect.j0
            )));
        }
    }
    let (du1, du2) = (partial(&g, &sol.u, 0), partial(&g, &sol.u, 1));
    let fields = [&h, &r, &take(&du1), &take(&du2)].map(|f| Bicubic::from_values(sub, f.clone()));
    let map = PlaneMap::new(sub, &fields[0], &fields[1], h.clone(), r.clone());
    let bbox = bounds(&h, &r);
    let k_base = sub.idx(base.0 - rect.i0, base.1 - rect.j0);
    let shape = opts.nodes.unwrap_or(sub.shape());
    let target_rect = match opts.target {
        Some(t) => t,
        None => inscribed_rect(bbox, [0.0, r[k_base]], 32, |p| map.invert(p, None, opts).is_some())
            .ok_or(JoyceError::OutsideImage { count: 1, first: base })?,
    };
    let target = Grid2::new(target_rect[0], target_rect[1], shape.0, shape.1)?;
    let n = target.len();
    let (mut xi1, mut xi2) = (vec![0.0; n], vec![0.0; n]);
    let mut outside = Vec::new();
    for i in 0..shape.0 {
        let mut guess = None;
        for j in 0..shape.1 {
            let p = target.point(i, j);
            match map.invert(p, guess, opts).or_else(|| map.invert(p, None, opts)) {
                Some(x) => {
                    let k = target.idx(i, j);
                    xi1[k] = fields[2].eval(x).v;
                    xi2[k] = fields[3].eval(x).v;
                    guess = Some(x);
                }
                None => {
                    outside.push((i, j));
                    guess = None;
                }
            }
        }
    }
    if let Some(&first) = outside.first() {
        return Err(JoyceError::OutsideImage {
            count: outside.len(),
            first,
        });
    }
    Ok(RecoveredSeeds {
        x_grid: sub,
        region: rect,
        h,
        r,
        xi1: ScalarField::from_values(target, xi1)?,
        xi2: ScalarField::from_values(target, xi2)?,
        divergence: conj.divergence,
        path_discrepancy: conj.path_discrepancy,
        gauge: None,
    })
}

fn bounds(a: &[f64], b: &[f64]) -> [(f64, f64); 2] {
    let span = |v: &[f64]| {
        v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
    };
    [span(a), span(b)]
}

/// Newton inversion of a planar map given by two interpolants on a grid.
struct PlaneMap<'a> {
    grid: XGrid,
    f: [&'a Bicubic; 2],
    /// Coarse `(image, node)` table for starting guesses.
    table: Vec<([f64; 2], [f64; 2])>,
    scale: [f64; 2],
}

impl<'a> PlaneMap<'a> {
    fn new(grid: XGrid, f1: &'a Bicubic, f2: &'a Bicubic, v1: Vec<f64>, v2: Vec<f64>) -> Self {
        let (n0, n1) = grid.shape();
        let (s0, s1) = ((n0 / 32).max(1), (n1 / 32).max(1));
        let table = grid
            .points()
            .filter(|(i, j, _)| i % s0 == 0 && j % s1 == 0)
            .map(|(i, j, x)| ([v1[grid.idx(i, j)], v2[grid.idx(i, j)]], x))
            .collect();
        let b = bounds(&v1, &v2);
        let scale = [
            (b[0].1 - b[0].0).max(f64::MIN_POSITIVE),
            (b[1].1 - b[1].0).max(f64::MIN_POSITIVE),
        ];
        Self {
            grid,
            f: [f1, f2],
            table,
            scale,
        }
    }

    fn nearest(&self, p: [f64; 2]) -> [f64; 2] {
        let d = |q: &[f64; 2]| ((q[0] - p[0]) / self.scale[0]).powi(2) + ((q[1] - p[1]) / self.scale[1]).powi(2);
        self.table
            .iter()
            .min_by(|a, b| d(&a.0).total_cmp(&d(&b.0)))
            .map(|e| e.1)
            .expect("nonempty grid")
    }

    /// Preimage of `p` inside the grid, or `None`.
    fn invert(&self, p: [f64; 2], guess: Option<[f64; 2]>, opts: &InverseOptions) -> Option<[f64; 2]> {
        let ax = &self.grid.axes;
        let mut x = guess.unwrap_or_else(|| self.nearest(p));
        let tol = opts.newton_tol * (1.0 + p[0].abs().max(p[1].abs()));
        let mut converged = false;
        for _ in 0..opts.max_iter {
            let (a, b) = (self.f[0].eval(x), self.f[1].eval(x));
            let res = [a.v - p[0], b.v - p[1]];
            if converged {
                break;
            }
            if res[0].abs().max(res[1].abs()) <= tol {
                // one more step to settle below the tolerance
                converged = true;
            }
            let m: Mat2 = [[a.dx, a.dy], [b.dx, b.dy]];
            let inv = inv2(&m)?;
            x[0] = (x[0] - inv[0][0] * res[0] - inv[0][1] * res[1]).clamp(ax[0].lo, ax[0].hi);
            x[1] = (x[1] - inv[1][0] * res[0] - inv[1][1] * res[1]).clamp(ax[1].lo, ax[1].hi);
        }
        let (a, b) = (self.f[0].eval(x), self.f[1].eval(x));
        let ok = (a.v - p[0]).abs().max((b.v - p[1]).abs()) <= tol;
        ok.then_some(x)
    }
}

/// Evaluates the Legendre transform by solving `grad u(x) = xi` on the
/// source of the original solution.
struct LegendreSource {
    inner: Arc<dyn SolutionSource>,
    domain: XGrid,
    /// Coarse `(gradient, node)` table for starting guesses.
    table: Vec<([f64; 2], [f64; 2])>,
    newton_tol: f64,
    max_iter: usize,
}

impl LegendreSource {
    fn new(sol: &XGridSolution, opts: &InverseOptions) -> Result<Self> {
        let inner = sol.source();
        let g = sol.grid;
        let (n0, n1) = g.shape();
        let (s0, s1) = ((n0 / 32).max(1), (n1 / 32).max(1));
        let mut table = Vec::new();
        for (i, j, x) in g.points() {
            if i % s0 == 0 && j % s1 == 0 {
                table.push((inner.eval(x)?.grad, x));
            }
        }
        Ok(Self {
            inner,
            domain: g,
            table,
            newton_tol: opts.newton_tol,
            max_iter: opts.max_iter,
        })
    }

    fn solve(&self, xi: [f64; 2], guess: Option<[f64; 2]>) -> Result<Option<([f64; 2], PointSolution)>> {
        let ax = &self.domain.axes;
        let mut x = guess.unwrap_or_else(|| {
            let d = |q: &[f64; 2]| (q[0] - xi[0]).powi(2) + (q[1] - xi[1]).powi(2);
            self.table
                .iter()
                .min_by(|a, b| d(&a.0).total_cmp(&d(&b.0)))
                .map(|e| e.1)
                .expect("nonempty grid")
        });
        let tol = self.newton_tol * (1.0 + xi[0].abs().max(xi[1].abs()));
        let mut converged = false;
        for _ in 0..self.max_iter {
            let s = self.inner.eval(x)?;
            let res = [s.grad[0] - xi[0], s.grad[1] - xi[1]];
            if converged {
                break;
            }
            if res[0].abs().max(res[1].abs()) <= tol {
                converged = true;
            }
            let Some(inv) = inv2(&s.hess) else {
                return Ok(None);
            };
            x[0] = (x[0] - inv[0][0] * res[0] - inv[0][1] * res[1]).clamp(ax[0].lo, ax[0].hi);
            x[1] = (x[1] - inv[1][0] * res[0] - inv[1][1] * res[1]).clamp(ax[1].lo, ax[1].hi);
        }
        let s = self.inner.eval(x)?;
        let ok = (s.grad[0] - xi[0]).abs().max((s.grad[1] - xi[1]).abs()) <= tol;
        Ok(ok.then_some((x, s)))
    }
}

fn conjugate_point(xi: [f64; 2], x: [f64; 2], s: &PointSolution) -> Result<PointSolution> {
    let hess = inv2(&s.hess).ok_or_else(|| JoyceError::NewtonFailed(format!("singular Hessian at {x:?}")))?;
    Ok(PointSolution {
        u: xi[0] * x[0] + xi[1] * x[1] - s.u,
        grad: x,
        hess,
    })
}

impl SolutionSource for LegendreSource {
    fn eval(&self, xi: [f64; 2]) -> Result<PointSolution> {
        match self.solve(xi, None)? {
            Some((x, s)) => conjugate_point(xi, x, &s),
            None => Err(JoyceError::OutsideImage {
                count: 1,
                first: (0, 0),
            }),
        }
    }
}

/// `u*(xi) = sup_x (xi . x - u(x))` on a rectangular `xi` grid. With
/// `target = None` the grid is inscribed in the gradient image and keeps the
/// input shape.
pub fn legendre_transform_grid(
    sol: &XGridSolution,
    target: Option<XGrid>,
    opts: &InverseOptions,
) -> Result<XGridSolution> {
    let g = sol.grid;
    let src = sol.source();
    let mut grads = (Vec::with_capacity(g.len()), Vec::with_capacity(g.len()));
    for (i, j, x) in g.points() {
        let s = src.eval(x)?;
        if !(s.hess[0][0] > 0.0 && det2(&s.hess) > 0.0) {
            return Err(JoyceError::NotConvex {
                i,
                j,
                minor: s.hess[0][0],
                det: det2(&s.hess),
            });
        }
        grads.0.push(s.grad[0]);
        grads.1.push(s.grad[1]);
    }
    let leg = LegendreSource::new(sol, opts)?;
    let target = match target {
        Some(t) => t,
        None => {
            let (n0, n1) = g.shape();
            let centre = g.idx(n0 / 2, n1 / 2);
            let anchor = [grads.0[centre], grads.1[centre]];
            let rect = inscribed_rect(bounds(&grads.0, &grads.1), anchor, 32, |p| {
                matches!(leg.solve(p, None), Ok(Some(_)))
            })
            .ok_or(JoyceError::OutsideImage {
                count: 1,
                first: (0, 0),
            })?;
            XGrid::new(rect[0], rect[1], n0, n1)?
        }
    };
    let n = target.len();
    let (mut u, mut x1, mut x2, mut jv) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut outside = Vec::new();
    let (n0, n1) = target.shape();
    for i in 0..n0 {
        let mut guess = None;
        for j in 0..n1 {
            let xi = target.point(i, j);
            let found = match leg.solve(xi, guess)? {
                Some(v) => Some(v),
                None if guess.is_some() => leg.solve(xi, None)?,
                None => None,
            };
            match found {
                Some((x, s)) => {
                    let p = conjugate_point(xi, x, &s)?;
                    let k = target.idx(i, j);
                    u[k] = p.u;
                    x1[k] = x[0];
                    x2[k] = x[1];
                    jv[k] = det2(&p.hess);
                    guess = Some(x);
                }
                None => {
                    outside.push((i, j));
                    guess = None;
                }
            }
        }
    }
    if let Some(&first) = outside.first() {
        return Err(JoyceError::OutsideImage {
            count: outside.len(),
            first,
        });
    }
    let mut out =
        XGridSolution::from_values(target, u, SolutionProvenance::LegendreTransform)?.with_source(Arc::new(leg));
    out.xi = Some([x1, x2]);
    out.j = Some(jv);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::assemble_chart;
    use crate::potential::{derive_joyce_data, dual_potential, JoyceMode, Potential};
    use crate::seeds::{linear_residual, make_seed, SeedSpec};
    use crate::verify::{
        convergence_study, euler_lagrange_residual, harmonicity_residual, inscribed_x_rect, resample_to_xgrid,
        residual_level, worked_logdet_solution, WINDOW_INSET,
    };

    fn xgrid(n: usize) -> XGrid {
        XGrid::new((0.1, 0.9), (0.5, 1.5), n, n).unwrap()
    }

    fn quadratic(g: XGrid) -> XGridSolution {
        XGridSolution::from_closed_form(g, |x| PointSolution {
            u: 0.5 * (x[0] * x[0] + x[1] * x[1]),
            grad: x,
            hess: [[1.0, 0.0], [0.0, 1.0]],
        })
    }

    #[test]
    fn worked_solution_is_ordinary_everywhere() {
        let m = ordinary_point_mask(&worked_logdet_solution(xgrid(17)), 1e-6);
        assert_eq!(m.count(), 17 * 17);
    }

    #[test]
    fn quadratic_has_no_ordinary_points() {
        let sol = quadratic(xgrid(17));
        assert_eq!(ordinary_point_mask(&sol, 1e-6).count(), 0);
        assert!(matches!(
            recover_seeds(&sol, &JoyceData::linear(), (8, 8), &InverseOptions::default()),
            Err(JoyceError::NoOrdinaryPoints(_))
        ));
    }

    #[test]
    fn mask_marks_the_varying_part() {
        // J = 1 below x2 = 1 and 1 + (x2 - 1)^3 above
        let g = xgrid(33);
        let sol = XGridSolution::from_closed_form(g, |x| {
            let t = (x[1] - 1.0).max(0.0);
            PointSolution {
                u: 0.5 * (x[0] * x[0] + x[1] * x[1]) + t.powi(5) / 20.0,
                grad: [x[0], x[1] + t.powi(4) / 4.0],
                hess: [[1.0, 0.0], [0.0, 1.0 + t.powi(3)]],
            }
        });
        let m = ordinary_point_mask(&sol, 1e-6);
        let h = g.steps().1;
        for (i, j, x) in g.points() {
            let k = g.idx(i, j);
            if x[1] < 1.0 - 2.5 * h {
                assert!(!m.mask[k], "{x:?}");
            }
            if x[1] > 1.0 + 2.5 * h {
                assert!(m.mask[k], "{x:?}");
            }
        }
    }

    #[test]
    fn v_field_of_worked_solution() {
        let sol = worked_logdet_solution(xgrid(129));
        let v = compute_v_field(&sol, &JoyceData::linear()).unwrap();
        let win = sol.grid.window(WINDOW_INSET).unwrap();
        for i in win.i0..=win.i1 {
            for j in win.j0..=win.j1 {
                let k = sol.grid.idx(i, j);
                assert!(v.v1[k].abs() < 1e-9 && (v.v2[k] - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn v_field_divergence_is_the_flux_residual() {
        let sol = worked_logdet_solution(xgrid(33));
        let jd = JoyceData::linear();
        let (div, region) = compute_v_field(&sol, &jd).unwrap().divergence().unwrap();
        let o = harmonicity_residual(&sol, &jd, &Potential::logdet()).unwrap();
        assert_eq!(region, o.field.region);
        assert!(div.iter().zip(&o.field.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn v_field_ignores_affine_terms() {
        let jd = JoyceData::linear();
        let sol = worked_logdet_solution(xgrid(17));
        let shifted = sol
            .with_values(
                sol.grid
                    .points()
                    .map(|(i, j, x)| sol.u[sol.grid.idx(i, j)] + 0.3 * x[0] - 2.0 * x[1] + 5.0)
                    .collect(),
            )
            .unwrap();
        let (a, b) = (
            compute_v_field(&sol, &jd).unwrap(),
            compute_v_field(&shifted, &jd).unwrap(),
        );
        let d = a.v2.iter().zip(&b.v2).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn conjugate_h_of_worked_solution_is_x1() {
        let sol = worked_logdet_solution(xgrid(65));
        let v = compute_v_field(&sol, &JoyceData::linear()).unwrap();
        let c = conjugate_h(&v, (32, 32), &InverseOptions::default()).unwrap();
        let x0 = sol.grid.point(32, 32)[0];
        let sub = c.field.grid();
        let err = sub
            .points()
            .fold(0.0f64, |m, (i, j, x)| m.max((c.field.value(i, j) - (x[0] - x0)).abs()));
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn zero_flux_gives_zero_h() {
        let sol = quadratic(xgrid(17));
        let v = compute_v_field(&sol, &JoyceData::linear()).unwrap();
        let c = conjugate_h(&v, (8, 8), &InverseOptions::default()).unwrap();
        assert!(c.field.values().iter().all(|h| h.abs() < 1e-12));
    }

    #[test]
    fn non_solution_is_refused() {
        let g = xgrid(33);
        let sol = XGridSolution::from_closed_form(g, |x| PointSolution {
            u: 0.5 * x[0] * x[0] + x[1].powi(4),
            grad: [x[0], 4.0 * x[1].powi(3)],
            hess: [[1.0, 0.0], [0.0, 12.0 * x[1] * x[1]]],
        });
        let v = compute_v_field(&sol, &JoyceData::linear()).unwrap();
        assert!(matches!(
            conjugate_h(&v, (16, 16), &InverseOptions::default()),
            Err(JoyceError::NotASolution(_))
        ));
    }

    fn round_trip(n: usize, target: Option<[(f64, f64); 2]>) -> (RecoveredSeeds, JoyceData) {
        let pot = Potential::logdet();
        let jd = derive_joyce_data(&pot, JoyceMode::ClosedForm).unwrap();
        let sg = Grid2::new((0.0, 1.0), (1.0, 2.0), 65, 65).unwrap();
        let a = make_seed(&SeedSpec::CoordinateH, &jd, &sg).unwrap();
        let b = make_seed(&SeedSpec::LogR, &jd, &sg).unwrap();
        let chart = assemble_chart(&a, &b, &jd, (32, 32), &Default::default()).unwrap();
        let rect = inscribed_x_rect(&chart, 32, &Default::default()).unwrap();
        let sol = resample_to_xgrid(&chart, XGrid::new(rect[0], rect[1], n, n).unwrap(), &Default::default()).unwrap();
        let opts = InverseOptions {
            target,
            ..Default::default()
        };
        let rec = recover_seeds(&sol, &jd, (n / 2, n / 2), &opts)
            .unwrap()
            .with_reference(&a, &b)
            .unwrap();
        (rec, jd)
    }

    #[test]
    fn worked_chart_round_trip_converges() {
        let (coarse, _) = round_trip(33, None);
        let ax = coarse.grid().axes;
        let target = Some([(ax[0].lo, ax[0].hi), (ax[1].lo, ax[1].hi)]);
        let errs: Vec<f64> = [33, 65, 129]
            .iter()
            .map(|&n| {
                let g = round_trip(n, target).0.gauge.unwrap();
                g.linf[0].max(g.linf[1])
            })
            .collect();
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(errs[2] < 1e-4 && order > 1.8, "{errs:?} {order}");
    }

    #[test]
    fn recovered_seeds_solve_the_linear_equation() {
        let (rec, jd) = round_trip(65, None);
        for xi in [&rec.xi1, &rec.xi2] {
            let res = linear_residual(xi, &jd).unwrap();
            assert!(res.interior.linf < 1e-2, "{:?}", res.interior);
        }
    }

    #[test]
    fn quadratic_is_self_dual() {
        let sol = quadratic(xgrid(17));
        let t = XGrid::new((0.2, 0.8), (0.6, 1.4), 9, 9).unwrap();
        let d = legendre_transform_grid(&sol, Some(t), &InverseOptions::default()).unwrap();
        for (i, j, p) in t.points() {
            let e = d.u[t.idx(i, j)] - 0.5 * (p[0] * p[0] + p[1] * p[1]);
            assert!(e.abs() < 1e-13, "{e}");
        }
    }

    #[test]
    fn double_transform_recovers_u() {
        let sol = worked_logdet_solution(xgrid(17));
        let d = legendre_transform_grid(&sol, None, &InverseOptions::default()).unwrap();
        let back = legendre_transform_grid(&d, None, &InverseOptions::default()).unwrap();
        let src = sol.source();
        for (i, j, x) in back.grid.points() {
            let e = back.u[back.grid.idx(i, j)] - src.eval(x).unwrap().u;
            assert!(e.abs() < 1e-11, "{e}");
        }
    }

    #[test]
    fn dual_of_worked_solution_is_discretely_exact() {
        // u* = xi1^2 / 2 + exp(2 xi2) / 4: psi*'(J*) is affine in xi2, so the
        // divergence-form residual vanishes up to rounding at every level
        let pot = dual_potential(&Potential::logdet());
        let rep = convergence_study("dual", &[33, 65, 129], 1.9, 1e-4, |n| {
            let d = legendre_transform_grid(&worked_logdet_solution(xgrid(n)), None, &InverseOptions::default())?;
            residual_level(&d, WINDOW_INSET, |s| euler_lagrange_residual(s, &pot))
        })
        .unwrap();
        assert!(rep.pass && rep.at_rounding(), "{rep:?}");
    }

    #[test]
    fn saddle_has_no_transform() {
        let sol = XGridSolution::from_closed_form(xgrid(9), |x| PointSolution {
            u: x[0] * x[0] - x[1] * x[1],
            grad: [2.0 * x[0], -2.0 * x[1]],
            hess: [[2.0, 0.0], [0.0, -2.0]],
        });
        assert!(matches!(
            legendre_transform_grid(&sol, None, &InverseOptions::default()),
            Err(JoyceError::NotConvex { .. })
        ));
    }
}
