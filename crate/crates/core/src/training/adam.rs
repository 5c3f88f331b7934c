use crate::error::{check_len, Result};
use crate::unrolling::{Trainable, UnrollParams};

/// Adam optimiser state over a flattened parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected update of `x` in place; entries with `mask` false
    /// are left untouched.
    pub fn update(&mut self, x: &mut [f64], g: &[f64], mask: Option<&[bool]>) -> Result<()> {
        check_len("adam parameters", self.m.len(), x.len())?;
        check_len("adam gradient", self.m.len(), g.len())?;
        if let Some(mask) = mask {
            check_len("adam mask", self.m.len(), mask.len())?;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for j in 0..x.len() {
            if mask.is_some_and(|m| !m[j]) {
                continue;
            }
            self.m[j] = self.beta1 * self.m[j] + (1.0 - self.beta1) * g[j];
            self.v[j] = self.beta2 * self.v[j] + (1.0 - self.beta2) * g[j] * g[j];
            let mh = self.m[j] / c1;
            let vh = self.v[j] / c2;
            x[j] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Adam step on network parameters, followed by the positivity clamp on
/// step sizes and weights.
pub fn adam_step(state: &mut AdamState, params: &mut UnrollParams, grads: &UnrollParams, trainable: Trainable) -> Result<()> {
    let mut x = params.to_flat();
    let g = grads.to_flat();
    let mask = params.trainable_mask(trainable);
    state.update(&mut x, &g, Some(&mask))?;
    params.set_flat(&x)?;
    params.clamp_feasible();
    Ok(())
}
