use super::{Geometry, Image, ImageGrid};
use crate::error::{check_len, Error, Result};
use crate::par::{self, Exec};

/// Compressed sparse rows: one row per ray (or per pixel for the transpose).
#[derive(Clone, Debug, Default)]
pub(crate) struct Csr {
    pub ptr: Vec<usize>,
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl Csr {
    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.ptr[r], self.ptr[r + 1]);
        (&self.idx[a..b], &self.val[a..b])
    }

    pub fn n_rows(&self) -> usize {
        self.ptr.len() - 1
    }

    #[inline]
    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(r);
        idx.iter().zip(val).map(|(&j, &w)| w * x[j as usize]).sum()
    }

    /// Transpose of the sub-matrix made of `rows`, with columns renumbered by
    /// the position of each row in `rows`. Entries of an output row are ordered
    /// by that position.
    pub fn transpose_rows(&self, rows: &[usize], n_cols: usize) -> Csr {
        let mut counts = vec![0usize; n_cols + 1];
        for &r in rows {
            for &j in self.row(r).0 {
                counts[j as usize + 1] += 1;
            }
        }
        for c in 0..n_cols {
            counts[c + 1] += counts[c];
        }
        let nnz = counts[n_cols];
        let mut next = counts.clone();
        let mut idx = vec![0u32; nnz];
        let mut val = vec![0.0; nnz];
        for (local, &r) in rows.iter().enumerate() {
            let (ri, rv) = self.row(r);
            for (&j, &w) in ri.iter().zip(rv) {
                let slot = &mut next[j as usize];
                idx[*slot] = local as u32;
                val[*slot] = w;
                *slot += 1;
            }
        }
        Csr {
            ptr: counts,
            idx,
            val,
        }
    }
}

/// Ray-driven parallel-beam projector with exact pixel intersection lengths.
///
/// The transpose is stored from the same weights, so `apply_transpose` is the
/// exact adjoint of `apply`.
#[derive(Clone, Debug)]
pub struct Projector {
    geometry: Geometry,
    grid: ImageGrid,
    /// Sketch factor relative to the full-resolution grid (1 for the full operator).
    factor: usize,
    rows: Csr,
    cols: Csr,
}

pub fn build_projector(geometry: &Geometry, grid: ImageGrid) -> Result<Projector> {
    Projector::new(*geometry, grid, 1)
}

/// Projector on a grid coarsened by `factor` per axis that still maps to the
/// full sinogram. `factor == 1` yields the full projector.
pub fn build_sketched_projector(geometry: &Geometry, grid: ImageGrid, factor: usize) -> Result<Projector> {
    if factor == 0 || !grid.width.is_multiple_of(factor) || !grid.height.is_multiple_of(factor) {
        return Err(Error::Config(format!(
            "sketch factor {factor} must divide the grid {}x{}",
            grid.width, grid.height
        )));
    }
    let coarse = ImageGrid {
        width: grid.width / factor,
        height: grid.height / factor,
        pixel_size: grid.pixel_size * factor as f64,
    };
    Projector::new(*geometry, coarse, factor)
}

impl Projector {
    fn new(geometry: Geometry, grid: ImageGrid, factor: usize) -> Result<Self> {
        geometry.validate()?;
        if grid.width == 0 || grid.height == 0 {
            return Err(Error::Config("image grid must be at least 1x1".into()));
        }
        if !(grid.pixel_size > 0.0 && grid.pixel_size.is_finite()) {
            return Err(Error::Config("pixel size must be positive".into()));
        }
        let n_rays = geometry.n_rays();
        let per_ray: Vec<Vec<(u32, f64)>> = par::map_collect(Exec::default(), n_rays, |r| {
            let a = r / geometry.n_detectors;
            let t = r % geometry.n_detectors;
            trace_ray(&geometry, &grid, a, t)
        });
        let mut ptr = Vec::with_capacity(n_rays + 1);
        ptr.push(0);
        let nnz: usize = per_ray.iter().map(Vec::len).sum();
        let mut idx = Vec::with_capacity(nnz);
        let mut val = Vec::with_capacity(nnz);
        for ray in per_ray {
            for (j, w) in ray {
                idx.push(j);
                val.push(w);
            }
            ptr.push(idx.len());
        }
        let rows = Csr { ptr, idx, val };
        let all: Vec<usize> = (0..n_rays).collect();
        let cols = rows.transpose_rows(&all, grid.len());
        Ok(Self {
            geometry,
            grid,
            factor,
            rows,
            cols,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    /// Relative compute of one application against the full-grid operator.
    ///
    /// Ray-driven tracing visits O(side) pixels per ray, so coarsening each
    /// axis by `f` divides the work by `f`.
    pub fn grid_cost(&self) -> f64 {
        1.0 / self.factor as f64
    }

    pub fn n_rows(&self) -> usize {
        self.geometry.n_rays()
    }

    pub fn n_cols(&self) -> usize {
        self.grid.len()
    }

    pub(crate) fn rows(&self) -> &Csr {
        &self.rows
    }

    pub(crate) fn check_image(&self, x: &Image) -> Result<()> {
        if x.width != self.grid.width || x.height != self.grid.height {
            return Err(Error::Dimension {
                context: "projector image",
                expected: self.grid.len(),
                got: x.values.len(),
            });
        }
        Ok(())
    }

    /// `A x` on a raw row-major buffer.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.apply_with(Exec::default(), x)
    }

    pub fn apply_with(&self, exec: Exec, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols(), "projector input length");
        let mut out = vec![0.0; self.n_rows()];
        par::fill(exec, &mut out, |r| self.rows.row_dot(r, x));
        out
    }

    /// `A^T y` on a raw buffer.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.apply_transpose_with(Exec::default(), y)
    }

    pub fn apply_transpose_with(&self, exec: Exec, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n_rows(), "projector adjoint input length");
        let mut out = vec![0.0; self.n_cols()];
        par::fill(exec, &mut out, |j| self.cols.row_dot(j, y));
        out
    }

    /// Row-major dense materialization (`n_rows × n_cols`).
    pub fn to_dense(&self) -> Vec<f64> {
        let nc = self.n_cols();
        let mut dense = vec![0.0; self.n_rows() * nc];
        for r in 0..self.n_rows() {
            let (idx, val) = self.rows.row(r);
            for (&j, &w) in idx.iter().zip(val) {
                dense[r * nc + j as usize] += w;
            }
        }
        dense
    }

    /// Intersection weights of ray `(angle, detector)` as `(pixel, length)`.
    pub fn ray_weights(&self, angle: usize, detector: usize) -> Vec<(usize, f64)> {
        let (idx, val) = self.rows.row(angle * self.geometry.n_detectors + detector);
        idx.iter().zip(val).map(|(&j, &w)| (j as usize, w)).collect()
    }

    pub(crate) fn check_sinogram_len(&self, len: usize) -> Result<()> {
        check_len("projector sinogram", self.n_rows(), len)
    }
}

/// Exact intersection lengths of one ray with the pixel grid.
///
/// The ray is `p(u) = s·(cos θ, sin θ) + u·(−sin θ, cos θ)`. Crossings with
/// every grid line are collected, sorted, and each segment is charged to the
/// pixel containing its midpoint. An axis-aligned ray lying exactly on a
/// grid line is split evenly between the two neighbouring pixels.
fn trace_ray(geometry: &Geometry, grid: &ImageGrid, angle: usize, detector: usize) -> Vec<(u32, f64)> {
    let (c, s) = geometry.direction(angle);
    let offset = geometry.detector_offset(detector);
    let (px, py) = (offset * c, offset * s);
    let (dx, dy) = (-s, c);
    let ps = grid.pixel_size;
    let (w, h) = (grid.width, grid.height);
    let xmin = -(w as f64) * ps / 2.0;
    let ymax = h as f64 * ps / 2.0;

    if dx == 0.0 {
        return axis_ray(px, xmin, ps, w, h, |line, across| across * w + line);
    }
    if dy == 0.0 {
        // Horizontal ray y = py; rows are counted downwards from ymax.
        return axis_ray(-py, -ymax, ps, h, w, |line, across| line * w + across);
    }

    let xmax = -xmin;
    let ymin = -ymax;
    let (ux0, ux1) = ordered((xmin - px) / dx, (xmax - px) / dx);
    let (uy0, uy1) = ordered((ymin - py) / dy, (ymax - py) / dy);
    let lo = ux0.max(uy0);
    let hi = ux1.min(uy1);
    if hi <= lo {
        return Vec::new();
    }

    let mut cuts = Vec::with_capacity(w + h + 4);
    cuts.push(lo);
    cuts.push(hi);
    for i in 0..=w {
        let u = (xmin + i as f64 * ps - px) / dx;
        if u > lo && u < hi {
            cuts.push(u);
        }
    }
    for j in 0..=h {
        let u = (ymin + j as f64 * ps - py) / dy;
        if u > lo && u < hi {
            cuts.push(u);
        }
    }
    cuts.sort_by(f64::total_cmp);

    let tiny = 1e-12 * ps;
    let mut out: Vec<(u32, f64)> = Vec::with_capacity(cuts.len());
    for pair in cuts.windows(2) {
        let len = pair[1] - pair[0];
        if len <= tiny {
            continue;
        }
        let mid = 0.5 * (pair[0] + pair[1]);
        let x = px + mid * dx;
        let y = py + mid * dy;
        let col = (((x - xmin) / ps).floor() as isize).clamp(0, w as isize - 1) as usize;
        let row = (((ymax - y) / ps).floor() as isize).clamp(0, h as isize - 1) as usize;
        let pix = (row * w + col) as u32;
        match out.last_mut() {
            Some(last) if last.0 == pix => last.1 += len,
            _ => out.push((pix, len)),
        }
    }
    out
}

fn ordered(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Ray parallel to one grid axis at coordinate `pos` along the crossing axis
/// (whose lines start at `start` and are `ps` apart, `n_lines` cells). It
/// crosses `n_across` pixels of length `ps` each.
fn axis_ray(
    pos: f64,
    start: f64,
    ps: f64,
    n_lines: usize,
    n_across: usize,
    index: impl Fn(usize, usize) -> usize,
) -> Vec<(u32, f64)> {
    let f = (pos - start) / ps;
    let nearest = f.round();
    let mut cells: Vec<(usize, f64)> = Vec::with_capacity(2);
    if (f - nearest).abs() <= 1e-9 {
        let k = nearest as isize;
        if k >= 1 && k as usize <= n_lines {
            cells.push((k as usize - 1, 0.5));
        }
        if k >= 0 && (k as usize) < n_lines {
            cells.push((k as usize, 0.5));
        }
    } else if f > 0.0 && f < n_lines as f64 {
        cells.push((f.floor() as usize, 1.0));
    }
    let mut out = Vec::with_capacity(n_across * cells.len());
    for across in 0..n_across {
        for &(line, share) in &cells {
            out.push((index(line, across) as u32, share * ps));
        }
    }
    out.sort_by_key(|e| e.0);
    out
}
