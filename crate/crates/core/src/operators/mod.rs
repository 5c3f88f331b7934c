//! Linear operators for 2D parallel-beam tomography: the ray-driven projector
//! and its exact transpose, angle-subset restriction, coarse-grid sketching and
//! operator-call accounting.

mod cost;
mod dense;
mod projector;
mod sampling;
mod subset;

pub use cost::{count_operator_calls, CallKind, CallTrace, OperatorCall};
pub use dense::DenseSubsetOperator;
pub use projector::{build_projector, build_sketched_projector, Projector};
pub use sampling::{
    downsample, downsample2, downsample_transpose, upsample, upsample2, upsample_transpose,
};
pub use subset::{SubsetOperator, SubsetProjector, SubsetScheme};

use crate::error::{check_len, Error, Result};

/// Dense image on a square-pixel grid, row-major with row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    pub values: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, pixel_size: f64) -> Self {
        Self {
            width,
            height,
            pixel_size,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, pixel_size: f64, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config("image dimensions must be at least 1".into()));
        }
        check_len("image values", width * height, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("image contains non-finite values".into()));
        }
        Ok(Self {
            width,
            height,
            pixel_size,
            values,
        })
    }

    pub fn grid(&self) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            pixel_size: self.pixel_size,
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Pixel grid centered on the rotation axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
}

impl ImageGrid {
    pub fn square(size: usize, pixel_size: f64) -> Self {
        Self {
            width: size,
            height: size,
            pixel_size,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    /// Physical center of pixel `(row, col)`; y points up.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = (col as f64 + 0.5 - self.width as f64 / 2.0) * self.pixel_size;
        let y = (self.height as f64 / 2.0 - row as f64 - 0.5) * self.pixel_size;
        (x, y)
    }
}

/// Parallel-beam acquisition with angles equally spaced over [0, 2π).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub n_angles: usize,
    pub n_detectors: usize,
    pub detector_spacing: f64,
}

impl Geometry {
    pub fn new(n_angles: usize, n_detectors: usize, detector_spacing: f64) -> Result<Self> {
        let g = Self {
            n_angles,
            n_detectors,
            detector_spacing,
        };
        g.validate()?;
        Ok(g)
    }

    /// Geometry whose detector row covers the diagonal of `grid`, with one
    /// detector per pixel width. The detector count shares the parity of the
    /// grid width so axis-aligned rays run through pixel centers.
    pub fn covering(grid: ImageGrid, n_angles: usize) -> Result<Self> {
        let side = grid.width.max(grid.height);
        let mut n_det = (side as f64 * std::f64::consts::SQRT_2).ceil() as usize;
        if n_det % 2 != side % 2 {
            n_det += 1;
        }
        Self::new(n_angles, n_det, grid.pixel_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_angles == 0 || self.n_detectors == 0 {
            return Err(Error::Config("geometry needs at least one angle and one detector".into()));
        }
        if !(self.detector_spacing > 0.0 && self.detector_spacing.is_finite()) {
            return Err(Error::Config("detector spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn n_rays(&self) -> usize {
        self.n_angles * self.n_detectors
    }

    pub fn angle(&self, a: usize) -> f64 {
        2.0 * std::f64::consts::PI * a as f64 / self.n_angles as f64
    }

    /// `(cos θ, sin θ)` of angle `a`. When the angle count is divisible by
    /// four the quarter-turn symmetry is applied exactly, so rays of angle
    /// `a + n/4` are exact rotations of those of angle `a`.
    pub fn direction(&self, a: usize) -> (f64, f64) {
        if self.n_angles.is_multiple_of(4) {
            let quarter = self.n_angles / 4;
            let (c, s) = base_direction(a % quarter, self.n_angles);
            match a / quarter {
                0 => (c, s),
                1 => (-s, c),
                2 => (-c, -s),
                _ => (s, -c),
            }
        } else {
            base_direction(a, self.n_angles)
        }
    }

    /// Signed detector coordinate of bin `t`.
    pub fn detector_offset(&self, t: usize) -> f64 {
        (t as f64 + 0.5 - self.n_detectors as f64 / 2.0) * self.detector_spacing
    }
}

fn base_direction(a: usize, n_angles: usize) -> (f64, f64) {
    if a == 0 {
        return (1.0, 0.0);
    }
    let theta = 2.0 * std::f64::consts::PI * a as f64 / n_angles as f64;
    let (s, c) = theta.sin_cos();
    (c, s)
}

/// Measurements indexed by (angle, detector), row-major in angle.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub geometry: Geometry,
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geometry: Geometry) -> Self {
        Self {
            geometry,
            values: vec![0.0; geometry.n_rays()],
        }
    }

    pub fn from_values(geometry: Geometry, values: Vec<f64>) -> Result<Self> {
        check_len("sinogram values", geometry.n_rays(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("sinogram contains non-finite values".into()));
        }
        Ok(Self { geometry, values })
    }

    pub fn view(&self, angle: usize) -> &[f64] {
        let n = self.geometry.n_detectors;
        &self.values[angle * n..(angle + 1) * n]
    }
}

pub fn forward(projector: &Projector, x: &Image) -> Result<Sinogram> {
    projector.check_image(x)?;
    Ok(Sinogram {
        geometry: *projector.geometry(),
        values: projector.apply(&x.values),
    })
}

pub fn adjoint(projector: &Projector, y: &Sinogram) -> Result<Image> {
    if y.geometry != *projector.geometry() {
        return Err(Error::Config("sinogram geometry does not match projector".into()));
    }
    let grid = projector.grid();
    Ok(Image {
        width: grid.width,
        height: grid.height,
        pixel_size: grid.pixel_size,
        values: projector.apply_transpose(&y.values),
    })
}

/// `S_i A x`: the rows of the projector for the angles of subset `i`.
pub fn subset_forward(op: &SubsetProjector, i: usize, x: &Image) -> Result<Vec<f64>> {
    op.check_subset(i)?;
    op.projector().check_image(x)?;
    Ok(op.subset_forward(i, &x.values))
}

/// `(S_i A)^T y_i`, with every angle outside the subset treated as zero.
pub fn subset_adjoint(op: &SubsetProjector, i: usize, y_part: &[f64]) -> Result<Image> {
    op.check_subset(i)?;
    check_len("subset sinogram", op.subset_len(), y_part.len())?;
    let grid = op.projector().grid();
    Ok(Image {
        width: grid.width,
        height: grid.height,
        pixel_size: grid.pixel_size,
        values: op.subset_adjoint(i, y_part),
    })
}
