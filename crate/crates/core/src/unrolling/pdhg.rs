use super::subset_lipschitz;
use crate::error::{check_len, Result};
use crate::operators::{CallKind, CallTrace, SubsetOperator};
use crate::proximal::dual_prox_raw;

#[derive(Clone, Debug)]
pub struct PdhgTrajectory {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    pub trace: CallTrace,
    /// Estimate of `τσ‖A‖²`; values above one void the usual convergence
    /// guarantee.
    pub step_product: f64,
}

impl PdhgTrajectory {
    pub fn output(&self) -> &[f64] {
        self.xs.last().expect("trajectory holds x_0")
    }
}

/// Classical PDHG for `min_x ½‖W^{1/2}(Ax − b)‖² + r(x)`:
///
/// ```text
/// y ← prox_{σf*}(y + σAx̄)
/// x ← prox_{τr}(x − τAᵀy)
/// x̄ ← x + β(x − x_prev)
/// ```
///
/// `prox_r(v, τ)` evaluates `prox_{τr}(v)`; `weights` is the diagonal of `W`
/// over the full measurement.
#[allow(clippy::too_many_arguments)]
pub fn pdhg_solve<F>(
    op: &dyn SubsetOperator,
    data: &[f64],
    prox_r: F,
    weights: &[f64],
    tau: f64,
    sigma: f64,
    beta: f64,
    iterations: usize,
    x0: &[f64],
) -> Result<PdhgTrajectory>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
{
    let n = op.measurement_len();
    check_len("pdhg data", n, data.len())?;
    check_len("pdhg weights", n, weights.len())?;
    check_len("pdhg x0", op.image_len(), x0.len())?;
    let norm_sq = subset_lipschitz_full(op);
    let mut xs = vec![x0.to_vec()];
    let mut ys = vec![vec![0.0; n]];
    let mut xbar = x0.to_vec();
    let mut trace = CallTrace::default();
    for k in 0..iterations {
        let z = op.forward(&xbar);
        trace.push(CallKind::Forward, 1.0, op.grid_cost());
        let y = dual_prox_raw(&ys[k], &z, data, weights, sigma);
        let g = op.adjoint(&y);
        trace.push(CallKind::Adjoint, 1.0, op.grid_cost());
        let x = &xs[k];
        let v: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - tau * b).collect();
        let x_new = prox_r(&v, tau);
        xbar = x_new.iter().zip(x).map(|(a, b)| a + beta * (a - b)).collect();
        xs.push(x_new);
        ys.push(y);
    }
    Ok(PdhgTrajectory {
        xs,
        ys,
        trace,
        step_product: tau * sigma * norm_sq,
    })
}

/// `‖A‖²` from the per-subset constant when there is one subset, otherwise
/// by power iteration on the full normal operator.
fn subset_lipschitz_full(op: &dyn SubsetOperator) -> f64 {
    if op.n_subsets() == 1 {
        return subset_lipschitz(op, 100, 0) * op.subset_len() as f64;
    }
    let mut v = vec![1.0; op.image_len()];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let w = op.adjoint(&op.forward(&v));
        lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        v = w;
    }
    lambda
}
