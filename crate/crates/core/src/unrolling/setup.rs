use std::sync::Arc;

use super::engine::UnrollProblem;
use crate::error::Result;
use crate::operators::{build_projector, build_sketched_projector, Geometry, ImageGrid, Projector, SubsetProjector};

/// Full and (optionally) coarse subset projectors for a square image on the
/// `[-1, 1]²` domain.
#[derive(Clone, Debug)]
pub struct TomoSetup {
    pub grid: ImageGrid,
    pub geometry: Geometry,
    pub op: SubsetProjector,
    pub coarse: Option<SubsetProjector>,
}

impl TomoSetup {
    /// `size × size` image, `n_angles` views split into `m` interleaved
    /// subsets, and a coarse operator when `factor > 1`.
    pub fn new(size: usize, n_angles: usize, m: usize, factor: usize) -> Result<Self> {
        let grid = ImageGrid::square(size, 2.0 / size as f64);
        let geometry = Geometry::covering(grid, n_angles)?;
        Self::with_geometry(grid, geometry, m, factor)
    }

    pub fn with_geometry(grid: ImageGrid, geometry: Geometry, m: usize, factor: usize) -> Result<Self> {
        let full = Arc::new(build_projector(&geometry, grid)?);
        let op = SubsetProjector::interleaved(full, m)?;
        let coarse = if factor > 1 {
            let p = Arc::new(build_sketched_projector(&geometry, grid, factor)?);
            Some(SubsetProjector::interleaved(p, m)?)
        } else {
            None
        };
        Ok(Self {
            grid,
            geometry,
            op,
            coarse,
        })
    }

    pub fn projector(&self) -> &Projector {
        self.op.projector()
    }

    pub fn problem<'a>(&'a self, data: &'a [f64]) -> UnrollProblem<'a> {
        let p = UnrollProblem::new(&self.op, data);
        match &self.coarse {
            Some(c) => p.with_coarse(c),
            None => p,
        }
    }
}
