use rand::Rng as _;

use super::{DualMode, DualStore, PrimalSlot, SubsetOrder, UnrollConfig, UnrollParams, Variant};
use crate::error::{check_len, Error, Result};
use crate::nnet::{subnet_forward, Tape};
use crate::operators::{downsample, upsample, CallKind, CallTrace, SubsetOperator};
use crate::proximal::dual_prox_raw;
use crate::rng;

/// Operators and data for one unrolled reconstruction.
#[derive(Clone, Copy)]
pub struct UnrollProblem<'a> {
    /// Full-grid subset operator.
    pub op: &'a dyn SubsetOperator,
    /// Coarse-grid counterpart used by sketched layers.
    pub coarse: Option<&'a dyn SubsetOperator>,
    /// Full measurement `b`.
    pub data: &'a [f64],
}

impl<'a> UnrollProblem<'a> {
    pub fn new(op: &'a dyn SubsetOperator, data: &'a [f64]) -> Self {
        Self { op, coarse: None, data }
    }

    pub fn with_coarse(mut self, coarse: &'a dyn SubsetOperator) -> Self {
        self.coarse = Some(coarse);
        self
    }

    /// Same operators, different measurement.
    pub fn with_data<'b>(&self, data: &'b [f64]) -> UnrollProblem<'b>
    where
        'a: 'b,
    {
        UnrollProblem {
            op: self.op,
            coarse: self.coarse,
            data,
        }
    }

    pub(crate) fn validate(&self, config: &UnrollConfig) -> Result<()> {
        check_len("measurement", self.op.measurement_len(), self.data.len())?;
        let needs_coarse = (0..config.layers).any(|k| config.sketched_layer(k));
        if !needs_coarse {
            return Ok(());
        }
        let coarse = self
            .coarse
            .ok_or_else(|| Error::Config("sketched layers need a coarse operator".into()))?;
        let (h, w) = self.op.image_shape();
        let f = config.factor;
        if h % f != 0 || w % f != 0 {
            return Err(Error::Config(format!("sketch factor {f} does not divide {h}x{w}")));
        }
        if coarse.image_shape() != (h / f, w / f)
            || coarse.n_subsets() != self.op.n_subsets()
            || coarse.subset_shape() != self.op.subset_shape()
        {
            return Err(Error::Config("coarse operator does not match the full operator".into()));
        }
        Ok(())
    }

    fn layer_op(&self, sketched: bool) -> &'a dyn SubsetOperator {
        match (sketched, self.coarse) {
            (true, Some(c)) => c,
            _ => self.op,
        }
    }
}

/// Everything one layer computed, kept for the reverse pass.
#[derive(Clone, Debug)]
pub struct LayerRecord {
    pub subset: usize,
    pub sketched: bool,
    /// Dual-store slot read and written by this layer.
    pub slot: usize,
    /// Extrapolated point `x̄_k` (PDHG only).
    pub xbar: Option<Vec<f64>>,
    /// Input of the forward operator (`D(x̄_k)` when sketched).
    pub x_fwd: Vec<f64>,
    pub z: Vec<f64>,
    pub b_sub: Vec<f64>,
    pub y_prev: Vec<f64>,
    pub y_next: Vec<f64>,
    /// Raw adjoint output (coarse grid when sketched).
    pub adj: Vec<f64>,
    /// Adjoint term on the grid the primal slot sees.
    pub adj_term: Vec<f64>,
    /// Gradient-step point `x_k − τ·adj_term` for gradient-mode primal slots.
    pub step_point: Option<Vec<f64>>,
    pub dual_tape: Option<Tape>,
    pub primal_tape: Option<Tape>,
}

/// Iterates and records of an unrolled evaluation.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// `x_0 … x_K`.
    pub xs: Vec<Vec<f64>>,
    /// Dual value after each layer, preceded by the initial value.
    pub ys: Vec<Vec<f64>>,
    pub subsets: Vec<usize>,
    pub trace: CallTrace,
    pub layers: Vec<LayerRecord>,
}

impl Trajectory {
    pub fn output(&self) -> &[f64] {
        self.xs.last().expect("trajectory holds x_0")
    }

    /// `‖x_k − x_ref‖` for every iterate.
    pub fn errors(&self, x_ref: &[f64]) -> Vec<f64> {
        self.xs
            .iter()
            .map(|x| x.iter().zip(x_ref).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .collect()
    }
}

pub(crate) fn subset_sequence(config: &UnrollConfig, m: usize) -> Vec<usize> {
    match config.order {
        SubsetOrder::Cyclic => (0..config.layers).map(|k| k % m).collect(),
        SubsetOrder::UniformRandom => {
            let mut r = rng::stream(config.seed, 0);
            (0..config.layers).map(|_| r.random_range(0..m)).collect()
        }
    }
}

/// Runs the `K`-layer network from `x0` (and `y0`, zero when `None`).
pub fn unroll_forward(
    problem: &UnrollProblem<'_>,
    config: &UnrollConfig,
    params: &UnrollParams,
    x0: &[f64],
    y0: Option<&[f64]>,
) -> Result<Trajectory> {
    let op = problem.op;
    let m = op.n_subsets();
    config.validate(m)?;
    params.validate(config, op)?;
    problem.validate(config)?;
    check_len("initial image", op.image_len(), x0.len())?;
    let q = op.subset_len();
    let init_y = match y0 {
        Some(y) => {
            check_len("initial dual", q, y.len())?;
            y.to_vec()
        }
        None => vec![0.0; q],
    };
    let n_slots = match config.dual_store {
        DualStore::Shared => 1,
        DualStore::PerSubset => m,
    };
    let mut store = vec![init_y.clone(); n_slots];

    let variant = config.variant;
    let fine_shape = op.image_shape();
    let f = config.factor;
    let coarse_shape = (fine_shape.0 / f, fine_shape.1 / f);
    let row_fraction = q as f64 / op.measurement_len() as f64;
    let subsets = subset_sequence(config, m);

    let mut xs = Vec::with_capacity(config.layers + 1);
    xs.push(x0.to_vec());
    let mut ys = vec![init_y];
    let mut trace = CallTrace::default();
    let mut layers = Vec::with_capacity(config.layers);

    for (k, &i) in subsets.iter().enumerate() {
        let sketched = config.sketched_layer(k);
        let lop = problem.layer_op(sketched);
        let x = &xs[k];
        let tau = params.tau[k];
        let sigma = params.sigma[k];

        let xbar = (variant == Variant::Pdhg).then(|| match k {
            0 => x.clone(),
            _ => x
                .iter()
                .zip(&xs[k - 1])
                .map(|(a, b)| a + params.beta * (a - b))
                .collect::<Vec<f64>>(),
        });
        let xsrc = xbar.as_deref().unwrap_or(x);
        let x_fwd = if sketched {
            downsample(xsrc, fine_shape, f)
        } else {
            xsrc.to_vec()
        };
        let z = lop.subset_forward(i, &x_fwd);
        trace.push(CallKind::Forward, row_fraction, lop.grid_cost());

        let b_sub = op.restrict(i, problem.data);
        let slot = if n_slots == 1 { 0 } else { i };
        let y_prev = store[slot].clone();
        let (y_next, dual_tape) = match variant.dual_mode() {
            DualMode::Learned => {
                let mut input = Vec::with_capacity(3 * q);
                input.extend_from_slice(&y_prev);
                input.extend(z.iter().map(|v| sigma * v));
                input.extend_from_slice(&b_sub);
                let (y, tape) = subnet_forward(&params.dual[k], &input, op.subset_shape())?;
                (y, Some(tape))
            }
            DualMode::WeightedProx => (dual_prox_raw(&y_prev, &z, &b_sub, params.weights_for(i), sigma), None),
            DualMode::Residual => (z.iter().zip(&b_sub).map(|(a, b)| a - b).collect(), None),
        };
        store[slot].clone_from(&y_next);

        let adj = lop.subset_adjoint(i, &y_next);
        trace.push(CallKind::Adjoint, row_fraction, lop.grid_cost());

        let option2 = sketched && variant == Variant::SkLspd2;
        let adj_term = if sketched && !option2 {
            upsample(&adj, coarse_shape, f)
        } else {
            adj.clone()
        };
        let (x_next, step_point, primal_tape) = if option2 {
            let xc = downsample(x, fine_shape, f);
            let mut input = xc;
            input.extend(adj_term.iter().map(|v| tau * v));
            let (out, tape) = subnet_forward(params.primal_for(k), &input, coarse_shape)?;
            (upsample(&out, coarse_shape, f), None, Some(tape))
        } else if variant.two_channel_primal() {
            let mut input = x.clone();
            input.extend(adj_term.iter().map(|v| tau * v));
            let (out, tape) = subnet_forward(params.primal_for(k), &input, fine_shape)?;
            (out, None, Some(tape))
        } else {
            let v: Vec<f64> = x.iter().zip(&adj_term).map(|(a, g)| a - tau * g).collect();
            match &config.primal_slot {
                PrimalSlot::Prior(set) => (set.project(&v), Some(v), None),
                PrimalSlot::Learned => {
                    let (out, tape) = subnet_forward(params.primal_for(k), &v, fine_shape)?;
                    (out, Some(v), Some(tape))
                }
            }
        };
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite iterate at layer {k}")));
        }

        xs.push(x_next);
        ys.push(y_next.clone());
        layers.push(LayerRecord {
            subset: i,
            sketched,
            slot,
            xbar,
            x_fwd,
            z,
            b_sub,
            y_prev,
            y_next,
            adj,
            adj_term,
            step_point,
            dual_tape,
            primal_tape,
        });
    }

    Ok(Trajectory {
        xs,
        ys,
        subsets,
        trace,
        layers,
    })
}
