use super::adam::{adam_step, AdamState};
use super::group::rotate90_values;
use crate::error::{check_len, Error, Result};
use crate::operators::count_operator_calls;
use crate::par::{self, Exec};
use crate::simulate::{fbp_transpose, fbp_values};
use crate::unrolling::{unroll_backward, unroll_forward, TomoSetup, Trainable, UnrollConfig, UnrollParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptConfig {
    /// Weight of the equivariance term.
    pub lambda: f64,
    pub steps: usize,
    pub lr: f64,
    pub trainable: Trainable,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            steps: 30,
            lr: 1e-3,
            trainable: Trainable::ALL,
        }
    }
}

/// Value and gradient of the adaptation objective at one parameter point.
#[derive(Clone, Debug)]
pub struct AdaptationObjective {
    pub value: f64,
    pub fidelity: f64,
    /// Mean over the four rotations of `‖T_r x − F(A T_r x)‖²`.
    pub regulariser: f64,
    pub grads: UnrollParams,
    /// `F(b)`.
    pub output: Vec<f64>,
    /// Full-operator-equivalent calls of the five network evaluations.
    pub calls: f64,
}

#[derive(Clone, Debug)]
pub struct AdaptResult {
    pub params: UnrollParams,
    pub x_a: Vec<f64>,
    /// Objective before each step, then after the last one.
    pub objective: Vec<f64>,
    pub calls_per_step: f64,
}

/// `‖b − A F(b)‖² + λ·mean_r ‖T_r F(b) − F(A T_r F(b))‖²` over the quarter
/// turns `r = 0..3`, where `F(b')` starts from `fbp(b')`.
pub fn adaptation_objective(
    setup: &TomoSetup,
    config: &UnrollConfig,
    params: &UnrollParams,
    b: &[f64],
    lambda: f64,
) -> Result<AdaptationObjective> {
    let a = setup.projector();
    check_len("adaptation data", a.n_rows(), b.len())?;
    let n = setup.grid.width;
    if setup.grid.height != n || !setup.geometry.n_angles.is_multiple_of(4) {
        return Err(Error::Config(
            "adaptation needs a square image and an angle count divisible by 4".into(),
        ));
    }
    let problem = setup.problem(b);
    let x0 = fbp_values(b, a);
    let traj = unroll_forward(&problem, config, params, &x0, None)?;
    let x = traj.output().to_vec();

    let resid: Vec<f64> = b.iter().zip(a.apply(&x)).map(|(b, ax)| b - ax).collect();
    let fidelity: f64 = resid.iter().map(|r| r * r).sum();
    let mut dx: Vec<f64> = a.apply_transpose(&resid).iter().map(|v| -2.0 * v).collect();

    let weight = lambda / 4.0;
    let terms = par::map_collect(Exec::default(), 4, |r| -> Result<_> {
        let u = rotate90_values(&x, n, r);
        let b_r = a.apply(&u);
        let x0_r = fbp_values(&b_r, a);
        let p_r = setup.problem(&b_r);
        let t_r = unroll_forward(&p_r, config, params, &x0_r, None)?;
        let e: Vec<f64> = u.iter().zip(t_r.output()).map(|(u, v)| u - v).collect();
        let reg = e.iter().map(|v| v * v).sum::<f64>();
        let d_out: Vec<f64> = e.iter().map(|v| -2.0 * weight * v).collect();
        let g = unroll_backward(&p_r, &t_r, config, params, &d_out)?;
        let mut d_data = g.data;
        d_data.iter_mut().zip(fbp_transpose(&g.x0, a)).for_each(|(d, f)| *d += f);
        let mut du = a.apply_transpose(&d_data);
        du.iter_mut().zip(&e).for_each(|(d, e)| *d += 2.0 * weight * e);
        let dx_r = rotate90_values(&du, n, (4 - r) % 4);
        Ok((reg, g.params, dx_r, count_operator_calls(&t_r.trace)))
    });

    let mut grads = params.zeros_like();
    let mut regulariser = 0.0;
    let mut calls = count_operator_calls(&traj.trace);
    let mut inner = Vec::with_capacity(4);
    for t in terms {
        let (reg, g, dx_r, c) = t?;
        regulariser += reg / 4.0;
        dx.iter_mut().zip(&dx_r).for_each(|(d, v)| *d += v);
        calls += c;
        inner.push(g);
    }
    let outer = unroll_backward(&problem, &traj, config, params, &dx)?;
    let mut flat = outer.params.to_flat();
    for g in &inner {
        flat.iter_mut().zip(g.to_flat()).for_each(|(a, b)| *a += b);
    }
    grads.set_flat(&flat)?;

    Ok(AdaptationObjective {
        value: fidelity + lambda * regulariser,
        fidelity,
        regulariser,
        grads,
        output: x,
        calls,
    })
}

/// Fine-tunes `params` on the single measurement `b_in` and returns the
/// adapted reconstruction.
pub fn adapt_instance(
    setup: &TomoSetup,
    b_in: &[f64],
    config: &UnrollConfig,
    params: &UnrollParams,
    adapt: &AdaptConfig,
) -> Result<AdaptResult> {
    if adapt.lambda < 0.0 {
        return Err(Error::Config("adaptation weight must be non-negative".into()));
    }
    let mut p = params.clone();
    let mut adam = AdamState::new(p.n_params(), adapt.lr);
    let mut objective = Vec::with_capacity(adapt.steps + 1);
    let mut calls_per_step = 0.0;
    for _ in 0..adapt.steps {
        let obj = adaptation_objective(setup, config, &p, b_in, adapt.lambda)?;
        if !obj.value.is_finite() {
            return Err(Error::Numeric("adaptation objective is not finite".into()));
        }
        objective.push(obj.value);
        calls_per_step = obj.calls;
        adam_step(&mut adam, &mut p, &obj.grads, adapt.trainable)?;
    }
    let last = adaptation_objective(setup, config, &p, b_in, adapt.lambda)?;
    objective.push(last.value);
    Ok(AdaptResult {
        params: p,
        x_a: last.output,
        objective,
        calls_per_step: if adapt.steps == 0 { last.calls } else { calls_per_step },
    })
}
