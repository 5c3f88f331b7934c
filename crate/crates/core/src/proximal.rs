//! Closed-form proximal maps and Euclidean projections.
//!
//! These serve as the non-learned subnet instances: the weighted least-squares
//! dual prox of the light-weight networks and exact projections onto simple
//! constraint sets.

use crate::error::{check_len, Error, Result};

/// Dual step parameters for the weighted data fit `½‖W_i^{1/2}(z − b_i)‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualProxParams {
    pub sigma: f64,
    /// Diagonal of `W_i`, one vector per subset (or a single shared vector).
    pub weights: Vec<Vec<f64>>,
}

impl DualProxParams {
    pub fn new(sigma: f64, weights: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self { sigma, weights };
        p.validate()?;
        Ok(p)
    }

    /// `W_i = I` for every one of `m` subsets of length `q`.
    pub fn identity(sigma: f64, m: usize, q: usize) -> Self {
        Self {
            sigma,
            weights: vec![vec![1.0; q]; m],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config("dual step sigma must be positive".into()));
        }
        if self.weights.is_empty() {
            return Err(Error::Config("dual prox needs at least one weight vector".into()));
        }
        if self.weights.iter().flatten().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("dual weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Weights of subset `i`; a single stored vector is shared by all subsets.
    pub fn subset_weights(&self, i: usize) -> &[f64] {
        if self.weights.len() == 1 {
            &self.weights[0]
        } else {
            &self.weights[i]
        }
    }
}

/// `(h, j)` for one coordinate: `h = w/(σ+w)`, `j = σw/(σ+w) = σh`.
#[inline]
pub fn hj(w: f64, sigma: f64) -> (f64, f64) {
    if w == 0.0 {
        return (0.0, 0.0);
    }
    let h = w / (sigma + w);
    (h, sigma * h)
}

/// Diagonals of `H_i = I − (I + W_i/σ)^{-1}` and `J_i = (I + W_i/σ)^{-1} W_i`.
pub fn hj_diagonals(params: &DualProxParams, i: usize) -> (Vec<f64>, Vec<f64>) {
    params
        .subset_weights(i)
        .iter()
        .map(|&w| hj(w, params.sigma))
        .unzip()
}

/// `prox_{σ f*}(y + σz)` for the weighted fit, in the closed form
/// `y' = h∘y + σ h∘z − j∘b`.
pub fn dual_prox_step(y: &[f64], z: &[f64], b: &[f64], params: &DualProxParams, i: usize) -> Result<Vec<f64>> {
    let w = params.subset_weights(i);
    check_len("dual prox z", y.len(), z.len())?;
    check_len("dual prox b", y.len(), b.len())?;
    check_len("dual prox weights", y.len(), w.len())?;
    Ok(dual_prox_raw(y, z, b, w, params.sigma))
}

pub(crate) fn dual_prox_raw(y: &[f64], z: &[f64], b: &[f64], w: &[f64], sigma: f64) -> Vec<f64> {
    y.iter()
        .zip(z)
        .zip(b)
        .zip(w)
        .map(|(((&y, &z), &b), &w)| {
            let (h, j) = hj(w, sigma);
            h * y + sigma * h * z - j * b
        })
        .collect()
}

pub fn soft_threshold(v: &[f64], lambda: f64) -> Vec<f64> {
    v.iter()
        .map(|&x| x.signum() * (x.abs() - lambda).max(0.0))
        .collect()
}

/// Indices of the `s` largest magnitudes; equal magnitudes keep the lower index.
fn top_support(v: &[f64], s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    order.truncate(s);
    order
}

/// Projection onto the `s`-sparse vectors.
pub fn project_sparse(v: &[f64], s: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for j in top_support(v, s.min(v.len())) {
        out[j] = v[j];
    }
    out
}

/// Soft-threshold level that projects `v` onto the ℓ1 ball of radius `r`
/// (zero when `v` is already inside).
fn l1_threshold(v: &[f64], r: f64) -> f64 {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= r {
        return 0.0;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - r) / (k + 1) as f64;
        if u > t {
            theta = t;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

/// Projection onto `{x : ‖x‖₁ ≤ r}` by the sorted-threshold method.
///
/// Points within a few ulps of the sphere count as inside, so projecting a
/// projection returns it unchanged.
pub fn project_l1ball(v: &[f64], r: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= r * (1.0 + 8.0 * f64::EPSILON * v.len().max(1) as f64) {
        return v.to_vec();
    }
    let theta = l1_threshold(v, r);
    if theta == 0.0 {
        return v.to_vec();
    }
    soft_threshold(v, theta)
}

pub fn project_box(v: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    v.iter().map(|&x| x.clamp(lo, hi)).collect()
}

/// Projection onto `span(basis)`; the basis vectors must be orthonormal.
pub fn project_subspace(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for b in basis {
        let c: f64 = b.iter().zip(v).map(|(a, x)| a * x).sum();
        out.iter_mut().zip(b).for_each(|(o, a)| *o += c * a);
    }
    out
}

/// Constraint set `M` with an exact Euclidean projection.
#[derive(Clone, Debug, PartialEq)]
pub enum PriorSet {
    All,
    SparseSet(usize),
    L1Ball(f64),
    Box { lo: f64, hi: f64 },
    /// Affine subspace `offset + span(basis)`; an empty offset means the origin.
    Subspace { basis: Vec<Vec<f64>>, offset: Vec<f64> },
}

impl PriorSet {
    pub fn subspace(basis: Vec<Vec<f64>>) -> Self {
        PriorSet::Subspace {
            basis,
            offset: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSet::All => Ok(()),
            PriorSet::SparseSet(s) if *s >= 1 => Ok(()),
            PriorSet::SparseSet(_) => Err(Error::Config("sparsity must be at least 1".into())),
            PriorSet::L1Ball(r) if *r > 0.0 => Ok(()),
            PriorSet::L1Ball(_) => Err(Error::Config("l1 radius must be positive".into())),
            PriorSet::Box { lo, hi } if lo <= hi => Ok(()),
            PriorSet::Box { .. } => Err(Error::Config("box needs lo <= hi".into())),
            PriorSet::Subspace { basis, offset } => {
                for (a, u) in basis.iter().enumerate() {
                    for (b, v) in basis.iter().enumerate().skip(a) {
                        let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                        let want = if a == b { 1.0 } else { 0.0 };
                        if u.len() != v.len() || (dot - want).abs() > 1e-12 {
                            return Err(Error::Config("subspace basis is not orthonormal".into()));
                        }
                    }
                }
                if !offset.is_empty() && basis.first().is_some_and(|b| b.len() != offset.len()) {
                    return Err(Error::Config("subspace offset length mismatch".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, PriorSet::SparseSet(_))
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        match self {
            PriorSet::All => v.to_vec(),
            PriorSet::SparseSet(s) => project_sparse(v, *s),
            PriorSet::L1Ball(r) => project_l1ball(v, *r),
            PriorSet::Box { lo, hi } => project_box(v, *lo, *hi),
            PriorSet::Subspace { basis, offset } => {
                if offset.is_empty() {
                    project_subspace(v, basis)
                } else {
                    let shifted: Vec<f64> = v.iter().zip(offset).map(|(a, o)| a - o).collect();
                    let mut p = project_subspace(&shifted, basis);
                    p.iter_mut().zip(offset).for_each(|(a, o)| *a += o);
                    p
                }
            }
        }
    }

    /// Vector-Jacobian product of [`PriorSet::project`] at `v`.
    ///
    /// Every projection here is piecewise linear, so this is the transpose
    /// of the local linear piece (ties resolved as in the forward map).
    pub fn project_vjp(&self, v: &[f64], g: &[f64]) -> Vec<f64> {
        match self {
            PriorSet::All => g.to_vec(),
            PriorSet::SparseSet(s) => {
                let mut out = vec![0.0; v.len()];
                for j in top_support(v, (*s).min(v.len())) {
                    out[j] = g[j];
                }
                out
            }
            PriorSet::Box { lo, hi } => v
                .iter()
                .zip(g)
                .map(|(&x, &gx)| if x > *lo && x < *hi { gx } else { 0.0 })
                .collect(),
            PriorSet::Subspace { basis, .. } => project_subspace(g, basis),
            PriorSet::L1Ball(r) => {
                let theta = l1_threshold(v, *r);
                if theta == 0.0 {
                    return g.to_vec();
                }
                // On the support S: J = I − s sᵀ/|S| with s = sign(v).
                let support: Vec<usize> = (0..v.len()).filter(|&j| v[j].abs() > theta).collect();
                let n = support.len() as f64;
                let sg: f64 = support.iter().map(|&j| v[j].signum() * g[j]).sum();
                let mut out = vec![0.0; v.len()];
                for &j in &support {
                    out[j] = g[j] - v[j].signum() * sg / n;
                }
                out
            }
        }
    }
}

/// Constraint set plus the declared error budget `ε₀` of an approximate
/// projection `P(x) = e(x) + P_M(x)` with `‖e(x)‖ ≤ ε₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldPrior {
    pub set: PriorSet,
    pub eps0: f64,
}

impl ManifoldPrior {
    pub fn exact(set: PriorSet) -> Self {
        Self { set, eps0: 0.0 }
    }
}

/// Built-in priors are exact projections, so the result equals `P_M(v)`.
pub fn apply_prior(prior: &ManifoldPrior, v: &[f64]) -> Result<Vec<f64>> {
    prior.set.validate()?;
    Ok(prior.set.project(v))
}

/// Test fixture: an exact prior plus a bounded perturbation `e(x)`.
pub struct PerturbedPrior<F> {
    pub prior: ManifoldPrior,
    pub perturbation: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> PerturbedPrior<F> {
    /// `P_M(v) + e(v)`, with `e(v)` rescaled onto the budget ball when it
    /// exceeds `ε₀`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = apply_prior(&self.prior, v)?;
        let e = (self.perturbation)(v);
        check_len("perturbation", v.len(), e.len())?;
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = if norm > self.prior.eps0 && norm > 0.0 {
            self.prior.eps0 / norm
        } else {
            1.0
        };
        out.iter_mut().zip(&e).for_each(|(o, e)| *o += scale * e);
        Ok(out)
    }
}
