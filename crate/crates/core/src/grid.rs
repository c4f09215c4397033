//! Uniform rectangular grids, node-wise stencils, norms and bicubic Hermite
//! interpolation.
//!
//! Nodes are stored row-major with the second axis fastest: node `(i, j)` is
//! at index `i * n[1] + j`. For `(H, r)` grids the first axis is `H`; for
//! `(x1, x2)` grids it is `x1`.

use serde::{Deserialize, Serialize};

use crate::error::{JoyceError, Result};
use crate::numeric::{diff1, diff1_fourth, diff2, hermite_cubic};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(JoyceError::InvalidInput(format!(
                "axis range [{lo}, {hi}] must be finite and increasing"
            )));
        }
        if n < 3 {
            return Err(JoyceError::InvalidInput(format!(
                "axis needs at least 3 nodes, got {n}"
            )));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn coord(&self, k: usize) -> f64 {
        if k + 1 == self.n {
            self.hi
        } else {
            self.lo + k as f64 * self.step()
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.coord(k)).collect()
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    /// Cell index, local coordinate in [0, 1] (unclamped outside) and step.
    pub fn cell(&self, t: f64) -> (usize, f64, f64) {
        let h = self.step();
        let s = (t - self.lo) / h;
        let k = (s.floor().max(0.0) as usize).min(self.n - 2);
        (k, s - k as f64, h)
    }
}

/// A uniform tensor-product grid on a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectGrid {
    pub axes: [Axis; 2],
}

/// The `(H, r)` parameter grid of the construction.
pub type Grid2 = RectGrid;
/// Grids in the `(x1, x2)` plane (or in `(xi1, xi2)` after a Legendre transform).
pub type XGrid = RectGrid;

/// Inclusive node-index rectangle `[i0, i1] x [j0, j1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRect {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl NodeRect {
    pub fn rows(&self) -> usize {
        self.i1 - self.i0 + 1
    }
    pub fn cols(&self) -> usize {
        self.j1 - self.j0 + 1
    }
    pub fn count(&self) -> usize {
        self.rows() * self.cols()
    }
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.i0 && i <= self.i1 && j >= self.j0 && j <= self.j1
    }
}

impl RectGrid {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        Ok(Self {
            axes: [
                Axis::new(x_range.0, x_range.1, nx)?,
                Axis::new(y_range.0, y_range.1, ny)?,
            ],
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.axes[0].n, self.axes[1].n)
    }

    pub fn len(&self) -> usize {
        self.axes[0].n * self.axes[1].n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn steps(&self) -> (f64, f64) {
        (self.axes[0].step(), self.axes[1].step())
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.axes[1].n + j
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k / self.axes[1].n, k % self.axes[1].n)
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.axes[0].coord(i), self.axes[1].coord(j)]
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, usize, [f64; 2])> + '_ {
        let (n0, n1) = self.shape();
        (0..n0).flat_map(move |i| (0..n1).map(move |j| (i, j, self.point(i, j))))
    }

    pub fn area(&self) -> f64 {
        (self.axes[0].hi - self.axes[0].lo) * (self.axes[1].hi - self.axes[1].lo)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.axes[0].contains(p[0]) && self.axes[1].contains(p[1])
    }

    pub fn full_rect(&self) -> NodeRect {
        NodeRect {
            i0: 0,
            i1: self.axes[0].n - 1,
            j0: 0,
            j1: self.axes[1].n - 1,
        }
    }

    /// Node rectangle at least `margin` nodes away from every edge.
    pub fn interior(&self, margin: usize) -> Option<NodeRect> {
        let (n0, n1) = self.shape();
        if 2 * margin >= n0 || 2 * margin >= n1 {
            return None;
        }
        Some(NodeRect {
            i0: margin,
            i1: n0 - 1 - margin,
            j0: margin,
            j1: n1 - 1 - margin,
        })
    }

    /// Sub-grid spanned by a node rectangle.
    pub fn restrict(&self, rect: &NodeRect) -> Result<Self> {
        Ok(Self {
            axes: [
                Axis::new(self.axes[0].coord(rect.i0), self.axes[0].coord(rect.i1), rect.rows())?,
                Axis::new(self.axes[1].coord(rect.j0), self.axes[1].coord(rect.j1), rect.cols())?,
            ],
        })
    }

    /// Grid with the same rectangle and `factor`-times finer spacing.
    pub fn refined(&self, factor: usize) -> Self {
        let mut g = *self;
        for a in &mut g.axes {
            a.n = (a.n - 1) * factor + 1;
        }
        g
    }

    /// Nodes whose coordinates lie in the physical window obtained by insetting
    /// each side by `inset` times the side length.
    pub fn window(&self, inset: f64) -> Option<NodeRect> {
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        for d in 0..2 {
            let a = &self.axes[d];
            let w = a.hi - a.lo;
            let (wl, wh) = (a.lo + inset * w, a.hi - inset * w);
            let tol = 1e-9 * a.step();
            let first = (0..a.n).find(|&k| a.coord(k) >= wl - tol)?;
            let last = (0..a.n).rev().find(|&k| a.coord(k) <= wh + tol)?;
            if last < first {
                return None;
            }
            lo[d] = first;
            hi[d] = last;
        }
        Some(NodeRect {
            i0: lo[0],
            i1: hi[0],
            j0: lo[1],
            j1: hi[1],
        })
    }

    /// Index of the grid node nearest to `p` (clamped to the grid).
    pub fn nearest(&self, p: [f64; 2]) -> (usize, usize) {
        let f = |d: usize| {
            let a = &self.axes[d];
            let t = ((p[d] - a.lo) / a.step()).round();
            t.clamp(0.0, (a.n - 1) as f64) as usize
        };
        (f(0), f(1))
    }

    pub fn check_same(&self, other: &Self) -> Result<()> {
        if self != other {
            return Err(JoyceError::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// L-infinity and root-mean-square norms over a node rectangle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub linf: f64,
    pub l2: f64,
    /// Node `(i, j)` where the maximum is attained.
    pub argmax: (usize, usize),
}

impl Norms {
    pub fn over(grid: &RectGrid, values: &[f64], rect: &NodeRect) -> Self {
        let mut linf = 0.0f64;
        let mut sum = 0.0;
        let mut argmax = (rect.i0, rect.j0);
        for i in rect.i0..=rect.i1 {
            for j in rect.j0..=rect.j1 {
                let v = values[grid.idx(i, j)];
                let a = v.abs();
                if a > linf || a.is_nan() {
                    linf = if a.is_nan() { f64::INFINITY } else { a };
                    argmax = (i, j);
                }
                sum += v * v;
            }
        }
        Self {
            linf,
            l2: (sum / rect.count() as f64).sqrt(),
            argmax,
        }
    }
}

/// Apply a one-dimensional stencil along axis `axis` of a grid field.
pub fn along_axis(grid: &RectGrid, values: &[f64], axis: usize, op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let (n0, n1) = grid.shape();
    let mut out = vec![0.0; values.len()];
    if axis == 0 {
        let mut line = vec![0.0; n0];
        for j in 0..n1 {
            for i in 0..n0 {
                line[i] = values[grid.idx(i, j)];
            }
            for (i, v) in op(&line).into_iter().enumerate() {
                out[grid.idx(i, j)] = v;
            }
        }
    } else {
        for i in 0..n0 {
            let row = &values[grid.idx(i, 0)..grid.idx(i, 0) + n1];
            out[grid.idx(i, 0)..grid.idx(i, 0) + n1].copy_from_slice(&op(row));
        }
    }
    out
}

/// Second-order partial derivative along an axis.
pub fn partial(grid: &RectGrid, values: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.axes[axis].step();
    along_axis(grid, values, axis, |l| diff1(l, h))
}

pub fn partial2(grid: &RectGrid, values: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.axes[axis].step();
    along_axis(grid, values, axis, |l| diff2(l, h))
}

pub fn partial_fourth(grid: &RectGrid, values: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.axes[axis].step();
    along_axis(grid, values, axis, |l| diff1_fourth(l, h))
}

/// Largest node rectangle of `true` entries containing `anchor`, maximizing
/// node count.
pub fn largest_rect_containing(grid: &RectGrid, mask: &[bool], anchor: (usize, usize)) -> Option<NodeRect> {
    let (n0, n1) = grid.shape();
    let (ai, aj) = anchor;
    if ai >= n0 || aj >= n1 || !mask[grid.idx(ai, aj)] {
        return None;
    }
    // bad[i][j]: prefix count over i of false entries in column j
    let mut prefix = vec![0u32; (n0 + 1) * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            prefix[(i + 1) * n1 + j] = prefix[i * n1 + j] + u32::from(!mask[grid.idx(i, j)]);
        }
    }
    let mut best: Option<NodeRect> = None;
    for i0 in (0..=ai).rev() {
        if !mask[grid.idx(i0, aj)] {
            break;
        }
        for i1 in ai..n0 {
            let bad = |j: usize| prefix[(i1 + 1) * n1 + j] - prefix[i0 * n1 + j] > 0;
            if bad(aj) {
                break;
            }
            let mut j0 = aj;
            while j0 > 0 && !bad(j0 - 1) {
                j0 -= 1;
            }
            let mut j1 = aj;
            while j1 + 1 < n1 && !bad(j1 + 1) {
                j1 += 1;
            }
            let cand = NodeRect { i0, i1, j0, j1 };
            if best.is_none_or(|b| cand.count() > b.count()) {
                best = Some(cand);
            }
        }
    }
    best
}

/// A rectangle inscribed in the curved image of a map. Starting from the
/// image bounding box `bbox`, every side whose `samples` points are not all
/// accepted by `inside` moves toward `anchor` (a point known to be inside)
/// in steps of 2.5% of the initial gap, until all four sides pass.
pub fn inscribed_rect(
    bbox: [(f64, f64); 2],
    anchor: [f64; 2],
    samples: usize,
    mut inside: impl FnMut([f64; 2]) -> bool,
) -> Option<[(f64, f64); 2]> {
    if !(0..2).all(|a| bbox[a].0 <= anchor[a] && anchor[a] <= bbox[a].1) || !inside(anchor) {
        return None;
    }
    let samples = samples.max(2);
    // sides: x-lo, x-hi, y-lo, y-hi
    let mut side = [bbox[0].0, bbox[0].1, bbox[1].0, bbox[1].1];
    let step = [
        0.025 * (anchor[0] - bbox[0].0),
        0.025 * (bbox[0].1 - anchor[0]),
        0.025 * (anchor[1] - bbox[1].0),
        0.025 * (bbox[1].1 - anchor[1]),
    ];
    for _ in 0..40 {
        let mut moved = false;
        for s in 0..4 {
            let ok = (0..=samples).all(|m| {
                let t = m as f64 / samples as f64;
                let p = if s < 2 {
                    [side[s], side[2] + t * (side[3] - side[2])]
                } else {
                    [side[0] + t * (side[1] - side[0]), side[s]]
                };
                inside(p)
            });
            if !ok {
                side[s] += if s % 2 == 0 { step[s] } else { -step[s] };
                moved = true;
            }
        }
        if !moved {
            let rect = [(side[0], side[1]), (side[2], side[3])];
            return (rect[0].0 < rect[0].1 && rect[1].0 < rect[1].1).then_some(rect);
        }
    }
    None
}

/// Tensor-product bicubic Hermite interpolant over a rectangular grid.
#[derive(Debug, Clone)]
pub struct Bicubic {
    grid: RectGrid,
    f: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
    fxy: Vec<f64>,
}

/// Value, gradient and Hessian of an interpolant at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample2 {
    pub v: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl Bicubic {
    pub fn new(grid: RectGrid, f: Vec<f64>, fx: Vec<f64>, fy: Vec<f64>, fxy: Vec<f64>) -> Self {
        Self { grid, f, fx, fy, fxy }
    }

    /// Build from nodal values alone, using fourth-order differences for the
    /// derivative data so that interpolation error stays O(h^4).
    pub fn from_values(grid: RectGrid, f: Vec<f64>) -> Self {
        let fx = partial_fourth(&grid, &f, 0);
        let fy = partial_fourth(&grid, &f, 1);
        let fxy = partial_fourth(&grid, &fx, 1);
        Self { grid, f, fx, fy, fxy }
    }

    pub fn grid(&self) -> &RectGrid {
        &self.grid
    }

    pub fn eval(&self, p: [f64; 2]) -> Sample2 {
        let (i, tx, hx) = self.grid.axes[0].cell(p[0]);
        let (j, ty, hy) = self.grid.axes[1].cell(p[1]);
        let g = &self.grid;
        let k = |a: usize, b: usize| g.idx(i + a, j + b);
        // interpolate f and fy along x on the two y-lines, then along y
        let mut along = [[[0.0; 3]; 2]; 2]; // [yline][f or fy][v, dv, ddv]
        for b in 0..2 {
            along[b][0] = hermite_cubic(
                tx,
                self.f[k(0, b)],
                self.f[k(1, b)],
                self.fx[k(0, b)],
                self.fx[k(1, b)],
                hx,
            );
            along[b][1] = hermite_cubic(
                tx,
                self.fy[k(0, b)],
                self.fy[k(1, b)],
                self.fxy[k(0, b)],
                self.fxy[k(1, b)],
                hx,
            );
        }
        let mut out = [[0.0; 3]; 3];
        for (m, row) in out.iter_mut().enumerate() {
            *row = hermite_cubic(ty, along[0][0][m], along[1][0][m], along[0][1][m], along[1][1][m], hy);
        }
        Sample2 {
            v: out[0][0],
            dx: out[1][0],
            dy: out[0][1],
            dxx: out[2][0],
            dxy: out[1][1],
            dyy: out[0][2],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_rejects_short_or_reversed() {
        assert!(Axis::new(0.0, 1.0, 2).is_err());
        assert!(Axis::new(1.0, 0.0, 5).is_err());
    }

    #[test]
    fn largest_rect_respects_anchor() {
        let g = RectGrid::new((0.0, 1.0), (0.0, 1.0), 5, 5).unwrap();
        let mut mask = vec![true; 25];
        mask[g.idx(2, 3)] = false;
        let r = largest_rect_containing(&g, &mask, (0, 0)).unwrap();
        assert!(!r.contains(2, 3));
        assert_eq!(r.count(), 15);
        assert!(largest_rect_containing(&g, &mask, (2, 3)).is_none());
    }

    #[test]
    fn bicubic_reproduces_cubic_polynomials() {
        let g = RectGrid::new((0.0, 1.0), (1.0, 2.0), 9, 7).unwrap();
        let f = |x: f64, y: f64| x * x * x - 2.0 * x * y * y + y * y * y + x * y;
        let vals: Vec<f64> = g.points().map(|(_, _, p)| f(p[0], p[1])).collect();
        let b = Bicubic::from_values(g, vals);
        let s = b.eval([0.337, 1.61]);
        assert!((s.v - f(0.337, 1.61)).abs() < 1e-12);
        let dx = 3.0 * 0.337f64.powi(2) - 2.0 * 1.61f64.powi(2) + 1.61;
        assert!((s.dx - dx).abs() < 1e-11);
    }

    #[test]
    fn window_is_fixed_in_physical_space() {
        let g = RectGrid::new((0.0, 1.0), (0.0, 2.0), 33, 33).unwrap();
        let w = g.window(0.125).unwrap();
        let f = g.refined(2).window(0.125).unwrap();
        assert_eq!(g.point(w.i0, w.j0), g.refined(2).point(f.i0, f.j0));
    }
}
