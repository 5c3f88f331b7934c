use super::engine::{Trajectory, UnrollProblem};
use super::{DualMode, PrimalSlot, UnrollConfig, UnrollParams, Variant};
use crate::error::{check_len, Error, Result};
use crate::nnet::subnet_backward;
use crate::operators::{downsample_transpose, upsample_transpose};
use crate::proximal::hj;

/// Cotangents of the unrolled output with respect to its inputs.
#[derive(Clone, Debug)]
pub struct UnrollGradients {
    pub params: UnrollParams,
    /// With respect to `x_0`.
    pub x0: Vec<f64>,
    /// With respect to the measurement `b`.
    pub data: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Reverse-mode derivative of [`super::unroll_forward`] given `∂L/∂x_K`.
///
/// Subset choices are constants; the trajectory must come from the same
/// problem, config and params.
pub fn unroll_backward(
    problem: &UnrollProblem<'_>,
    trajectory: &Trajectory,
    config: &UnrollConfig,
    params: &UnrollParams,
    dx_out: &[f64],
) -> Result<UnrollGradients> {
    let op = problem.op;
    let k_layers = config.layers;
    if trajectory.layers.len() != k_layers || trajectory.xs.len() != k_layers + 1 {
        return Err(Error::Config("trajectory does not match the layer count".into()));
    }
    check_len("output cotangent", op.image_len(), dx_out.len())?;
    let variant = config.variant;
    let fine_shape = op.image_shape();
    let f = config.factor;
    let coarse_shape = (fine_shape.0 / f, fine_shape.1 / f);
    let q = op.subset_len();
    let hw = op.image_len();
    let n_slots = trajectory.layers.iter().map(|l| l.slot + 1).max().unwrap_or(1);

    let mut grads = params.zeros_like();
    let mut ddata = vec![0.0; op.measurement_len()];
    let mut dstore = vec![vec![0.0; q]; n_slots];
    let mut dx = dx_out.to_vec();
    // Contribution to x_{k-1} from the extrapolation of layer k.
    let mut carry = vec![0.0; hw];

    for k in (0..k_layers).rev() {
        let rec = &trajectory.layers[k];
        let x = &trajectory.xs[k];
        let i = rec.subset;
        let lop = if rec.sketched {
            problem
                .coarse
                .ok_or_else(|| Error::Config("sketched layer without a coarse operator".into()))?
        } else {
            op
        };
        let tau = params.tau[k];
        let sigma = params.sigma[k];
        let option2 = rec.sketched && variant == Variant::SkLspd2;
        let missing = || Error::Config(format!("layer {k} has no recorded tape"));

        // Primal slot.
        let mut dx_prev = std::mem::take(&mut carry);
        let dadj_term: Vec<f64>;
        if option2 {
            let dout = upsample_transpose(&dx, coarse_shape, f);
            let tape = rec.primal_tape.as_ref().ok_or_else(missing)?;
            let (din, g) = subnet_backward(params.primal_for(k), tape, &dout)?;
            grads.primal_for_mut(k).add_assign(&g);
            let hwc = coarse_shape.0 * coarse_shape.1;
            let dxc = downsample_transpose(&din[..hwc], coarse_shape, f);
            axpy(1.0, &dxc, &mut dx_prev);
            grads.tau[k] += dot(&din[hwc..], &rec.adj_term);
            dadj_term = din[hwc..].iter().map(|v| tau * v).collect();
        } else if variant.two_channel_primal() {
            let tape = rec.primal_tape.as_ref().ok_or_else(missing)?;
            let (din, g) = subnet_backward(params.primal_for(k), tape, &dx)?;
            grads.primal_for_mut(k).add_assign(&g);
            axpy(1.0, &din[..hw], &mut dx_prev);
            grads.tau[k] += dot(&din[hw..], &rec.adj_term);
            dadj_term = din[hw..].iter().map(|v| tau * v).collect();
        } else {
            let v = rec.step_point.as_ref().ok_or_else(missing)?;
            let dv = match &config.primal_slot {
                PrimalSlot::Prior(set) => set.project_vjp(v, &dx),
                PrimalSlot::Learned => {
                    let tape = rec.primal_tape.as_ref().ok_or_else(missing)?;
                    let (din, g) = subnet_backward(params.primal_for(k), tape, &dx)?;
                    grads.primal_for_mut(k).add_assign(&g);
                    din
                }
            };
            axpy(1.0, &dv, &mut dx_prev);
            grads.tau[k] -= dot(&dv, &rec.adj_term);
            dadj_term = dv.iter().map(|v| -tau * v).collect();
        }
        let dadj = if rec.sketched && !option2 {
            upsample_transpose(&dadj_term, coarse_shape, f)
        } else {
            dadj_term
        };

        // Adjoint application: its pullback is the forward operator.
        let mut dy_next = std::mem::take(&mut dstore[rec.slot]);
        axpy(1.0, &lop.subset_forward(i, &dadj), &mut dy_next);

        // Dual slot.
        let (dy_prev, dz, db) = match variant.dual_mode() {
            DualMode::Learned => {
                let tape = rec.dual_tape.as_ref().ok_or_else(missing)?;
                let (din, g) = subnet_backward(&params.dual[k], tape, &dy_next)?;
                grads.dual[k].add_assign(&g);
                grads.sigma[k] += dot(&din[q..2 * q], &rec.z);
                let dz = din[q..2 * q].iter().map(|v| sigma * v).collect();
                (din[..q].to_vec(), dz, din[2 * q..].to_vec())
            }
            DualMode::WeightedProx => {
                let w = params.weights_for(i).to_vec();
                let mut dy_prev = vec![0.0; q];
                let mut dz = vec![0.0; q];
                let mut db = vec![0.0; q];
                let mut dsigma = 0.0;
                let dw = grads.weights_for_mut(i);
                for t in 0..q {
                    let g = dy_next[t];
                    let (h, j) = hj(w[t], sigma);
                    let s = sigma + w[t];
                    let dh_dw = sigma / (s * s);
                    let dh_ds = -w[t] / (s * s);
                    let dj_ds = h + sigma * dh_ds;
                    let (y, z, b) = (rec.y_prev[t], rec.z[t], rec.b_sub[t]);
                    dy_prev[t] = h * g;
                    dz[t] = sigma * h * g;
                    db[t] = -j * g;
                    dsigma += g * (dh_ds * (y + sigma * z) + h * z - dj_ds * b);
                    dw[t] += g * (dh_dw * (y + sigma * z) - sigma * dh_dw * b);
                }
                grads.sigma[k] += dsigma;
                (dy_prev, dz, db)
            }
            DualMode::Residual => (vec![0.0; q], dy_next.clone(), dy_next.iter().map(|v| -v).collect()),
        };
        dstore[rec.slot] = dy_prev;
        op.embed_add(i, &db, &mut ddata);

        // Forward application: its pullback is the adjoint.
        let dx_fwd = lop.subset_adjoint(i, &dz);
        let dxsrc = if rec.sketched {
            downsample_transpose(&dx_fwd, coarse_shape, f)
        } else {
            dx_fwd
        };
        match &rec.xbar {
            Some(_) if k > 0 => {
                let beta = params.beta;
                axpy(1.0 + beta, &dxsrc, &mut dx_prev);
                let x_before = &trajectory.xs[k - 1];
                carry = dxsrc.iter().map(|v| -beta * v).collect();
                grads.beta += dxsrc
                    .iter()
                    .zip(x.iter().zip(x_before))
                    .map(|(g, (a, b))| g * (a - b))
                    .sum::<f64>();
            }
            _ => {
                carry = vec![0.0; hw];
                axpy(1.0, &dxsrc, &mut dx_prev);
            }
        }
        dx = dx_prev;
    }
    axpy(1.0, &carry, &mut dx);

    Ok(UnrollGradients {
        params: grads,
        x0: dx,
        data: ddata,
    })
}
