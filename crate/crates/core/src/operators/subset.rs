use std::sync::Arc;

use super::projector::{Csr, Projector};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Partition of the measurement units (angles, or rows of a dense operator)
/// into `m` equally sized, pairwise disjoint subsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetScheme {
    assignment: Vec<Vec<usize>>,
    n_units: usize,
}

impl SubsetScheme {
    /// Interleaved partition: unit `j` belongs to subset `j mod m`.
    pub fn interleaved(n_units: usize, m: usize) -> Result<Self> {
        Self::check_divisible(n_units, m)?;
        let assignment = (0..m).map(|i| (i..n_units).step_by(m).collect()).collect();
        Ok(Self { assignment, n_units })
    }

    /// Contiguous blocks `[i·q, (i+1)·q)`.
    pub fn contiguous(n_units: usize, m: usize) -> Result<Self> {
        Self::check_divisible(n_units, m)?;
        let q = n_units / m;
        let assignment = (0..m).map(|i| (i * q..(i + 1) * q).collect()).collect();
        Ok(Self { assignment, n_units })
    }

    /// Arbitrary partition, validated for disjointness, coverage and equal size.
    pub fn from_assignment(n_units: usize, assignment: Vec<Vec<usize>>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::Config("subset scheme needs at least one subset".into()));
        }
        let q = assignment[0].len();
        let mut seen = vec![false; n_units];
        for subset in &assignment {
            if subset.len() != q {
                return Err(Error::Config("subsets must have equal size".into()));
            }
            for &u in subset {
                if u >= n_units || seen[u] {
                    return Err(Error::Config(format!("unit {u} out of range or assigned twice")));
                }
                seen[u] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("subsets do not cover every unit".into()));
        }
        Ok(Self { assignment, n_units })
    }

    fn check_divisible(n_units: usize, m: usize) -> Result<()> {
        if m == 0 || n_units == 0 || !n_units.is_multiple_of(m) {
            return Err(Error::Config(format!(
                "subset count {m} must divide the unit count {n_units}"
            )));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    /// Units per subset.
    pub fn q_units(&self) -> usize {
        self.assignment[0].len()
    }

    pub fn subset(&self, i: usize) -> &[usize] {
        &self.assignment[i]
    }
}

/// A linear operator whose rows are split into equally sized subsets.
///
/// This is what the unrolling engine sees: tomography projectors and small
/// dense matrices both implement it. Lengths are checked with assertions;
/// the typed wrappers in [`crate::operators`] return errors instead.
pub trait SubsetOperator: Send + Sync {
    /// `(rows, cols)` of the image the operator acts on.
    fn image_shape(&self) -> (usize, usize);
    fn image_len(&self) -> usize {
        let (h, w) = self.image_shape();
        h * w
    }
    fn measurement_len(&self) -> usize;
    fn n_subsets(&self) -> usize;
    /// `(rows, cols)` of one subset's measurement block.
    fn subset_shape(&self) -> (usize, usize);
    fn subset_len(&self) -> usize {
        let (h, w) = self.subset_shape();
        h * w
    }
    /// Relative compute of one application against the full-grid operator.
    fn grid_cost(&self) -> f64 {
        1.0
    }
    fn subset_forward(&self, i: usize, x: &[f64]) -> Vec<f64>;
    fn subset_adjoint(&self, i: usize, y: &[f64]) -> Vec<f64>;
    /// `S_i b` from a full-length measurement.
    fn restrict(&self, i: usize, full: &[f64]) -> Vec<f64>;
    /// `full += S_i^T part`.
    fn embed_add(&self, i: usize, part: &[f64], full: &mut [f64]);

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.measurement_len()];
        for i in 0..self.n_subsets() {
            let part = self.subset_forward(i, x);
            self.embed_add(i, &part, &mut out);
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.image_len()];
        for i in 0..self.n_subsets() {
            let part = self.subset_adjoint(i, &self.restrict(i, y));
            out.iter_mut().zip(part).for_each(|(o, p)| *o += p);
        }
        out
    }
}

/// Angle-subset restriction of a [`Projector`].
#[derive(Clone, Debug)]
pub struct SubsetProjector {
    projector: Arc<Projector>,
    scheme: SubsetScheme,
    /// Global ray indices of each subset, in subset order.
    rays: Vec<Vec<usize>>,
    /// Per-subset transposes: pixel -> (local ray, weight).
    transposes: Vec<Csr>,
}

impl SubsetProjector {
    pub fn new(projector: Arc<Projector>, scheme: SubsetScheme) -> Result<Self> {
        let g = *projector.geometry();
        if scheme.n_units() != g.n_angles {
            return Err(Error::Config(format!(
                "subset scheme covers {} angles, geometry has {}",
                scheme.n_units(),
                g.n_angles
            )));
        }
        let rays: Vec<Vec<usize>> = (0..scheme.m())
            .map(|i| {
                scheme
                    .subset(i)
                    .iter()
                    .flat_map(|&a| (0..g.n_detectors).map(move |t| a * g.n_detectors + t))
                    .collect()
            })
            .collect();
        let transposes = rays
            .iter()
            .map(|r| projector.rows().transpose_rows(r, projector.n_cols()))
            .collect();
        Ok(Self {
            projector,
            scheme,
            rays,
            transposes,
        })
    }

    /// Interleaved angle partition into `m` subsets.
    pub fn interleaved(projector: Arc<Projector>, m: usize) -> Result<Self> {
        let scheme = SubsetScheme::interleaved(projector.geometry().n_angles, m)?;
        Self::new(projector, scheme)
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    pub fn shared_projector(&self) -> Arc<Projector> {
        Arc::clone(&self.projector)
    }

    pub fn scheme(&self) -> &SubsetScheme {
        &self.scheme
    }

    pub(crate) fn check_subset(&self, i: usize) -> Result<()> {
        if i >= self.scheme.m() {
            return Err(Error::OutOfRange {
                what: "subsets",
                index: i,
                len: self.scheme.m(),
            });
        }
        Ok(())
    }

    pub fn subset_forward_with(&self, exec: Exec, i: usize, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.projector.n_cols(), "subset forward input length");
        let rays = &self.rays[i];
        let rows = self.projector.rows();
        let mut out = vec![0.0; rays.len()];
        par::fill(exec, &mut out, |k| rows.row_dot(rays[k], x));
        out
    }

    pub fn subset_adjoint_with(&self, exec: Exec, i: usize, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rays[i].len(), "subset adjoint input length");
        let t = &self.transposes[i];
        let mut out = vec![0.0; t.n_rows()];
        par::fill(exec, &mut out, |j| t.row_dot(j, y));
        out
    }
}

impl SubsetOperator for SubsetProjector {
    fn image_shape(&self) -> (usize, usize) {
        let g = self.projector.grid();
        (g.height, g.width)
    }

    fn measurement_len(&self) -> usize {
        self.projector.n_rows()
    }

    fn n_subsets(&self) -> usize {
        self.scheme.m()
    }

    fn subset_shape(&self) -> (usize, usize) {
        (self.scheme.q_units(), self.projector.geometry().n_detectors)
    }

    fn grid_cost(&self) -> f64 {
        self.projector.grid_cost()
    }

    fn subset_forward(&self, i: usize, x: &[f64]) -> Vec<f64> {
        self.subset_forward_with(Exec::default(), i, x)
    }

    fn subset_adjoint(&self, i: usize, y: &[f64]) -> Vec<f64> {
        self.subset_adjoint_with(Exec::default(), i, y)
    }

    fn restrict(&self, i: usize, full: &[f64]) -> Vec<f64> {
        assert_eq!(full.len(), self.measurement_len(), "restrict input length");
        self.rays[i].iter().map(|&r| full[r]).collect()
    }

    fn embed_add(&self, i: usize, part: &[f64], full: &mut [f64]) {
        assert_eq!(part.len(), self.rays[i].len(), "embed input length");
        for (&r, &v) in self.rays[i].iter().zip(part) {
            full[r] += v;
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.projector.apply(x)
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.projector.check_sinogram_len(y.len()).expect("adjoint input length");
        self.projector.apply_transpose(y)
    }
}
