//! Unrolled primal-dual iteration engines.
//!
//! One parametric engine covers every variant: the dual slot is a learned
//! subnet, a weighted least-squares prox or a plain residual; the primal slot
//! is a learned subnet fed `[x, τ·adjoint]`, or a (learned or fixed) map
//! applied to the gradient step `x − τ·adjoint`. Subsets pick rows of the
//! operator per layer, and sketched variants run the early layers on a coarse
//! grid. [`unroll_backward`] differentiates the whole unrolled computation.

mod backward;
mod engine;
mod pdhg;
mod setup;

pub use backward::{unroll_backward, UnrollGradients};
pub use engine::{unroll_forward, LayerRecord, Trajectory, UnrollProblem};
pub use pdhg::{pdhg_solve, PdhgTrajectory};
pub use setup::TomoSetup;

use crate::error::{Error, Result};
use crate::nnet::{ConvSubnetParams, SubnetSpec};
use crate::operators::SubsetOperator;
use crate::proximal::PriorSet;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Pdhg,
    Lpd,
    Lspd,
    Lsgd,
    SkLpd,
    SkLspd1,
    SkLspd2,
    SkLspdLw,
    SkLsgd,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Pdhg,
        Variant::Lpd,
        Variant::Lspd,
        Variant::Lsgd,
        Variant::SkLpd,
        Variant::SkLspd1,
        Variant::SkLspd2,
        Variant::SkLspdLw,
        Variant::SkLsgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pdhg => "pdhg",
            Variant::Lpd => "lpd",
            Variant::Lspd => "lspd",
            Variant::Lsgd => "lsgd",
            Variant::SkLpd => "sklpd",
            Variant::SkLspd1 => "sklspd1",
            Variant::SkLspd2 => "sklspd2",
            Variant::SkLspdLw => "sklspd-lw",
            Variant::SkLsgd => "sklsgd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }

    pub fn dual_mode(self) -> DualMode {
        match self {
            Variant::Lpd | Variant::Lspd | Variant::SkLpd | Variant::SkLspd1 | Variant::SkLspd2 => DualMode::Learned,
            Variant::SkLspdLw | Variant::Pdhg => DualMode::WeightedProx,
            Variant::Lsgd | Variant::SkLsgd => DualMode::Residual,
        }
    }

    /// Whether the primal slot takes `[x, τ·adjoint]` (otherwise it acts on
    /// the gradient step `x − τ·adjoint`).
    pub fn two_channel_primal(self) -> bool {
        self.dual_mode() == DualMode::Learned
    }

    pub fn is_sketched(self) -> bool {
        matches!(
            self,
            Variant::SkLpd | Variant::SkLspd1 | Variant::SkLspd2 | Variant::SkLspdLw | Variant::SkLsgd
        )
    }

    /// Full-batch variants use one subset (`m = 1`).
    pub fn is_full_batch(self) -> bool {
        matches!(self, Variant::Pdhg | Variant::Lpd | Variant::SkLpd)
    }

    /// One primal map shared by every layer.
    pub fn shares_primal(self) -> bool {
        matches!(self, Variant::Pdhg | Variant::SkLspdLw | Variant::SkLsgd)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualMode {
    Learned,
    WeightedProx,
    Residual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubsetOrder {
    /// `i = k mod m`.
    Cyclic,
    /// `i` drawn uniformly per layer from the configured seed.
    UniformRandom,
}

/// Whether the dual state is one vector reused by every subset or one vector
/// per subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualStore {
    Shared,
    PerSubset,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PrimalSlot {
    Learned,
    Prior(PriorSet),
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnrollConfig {
    pub layers: usize,
    pub variant: Variant,
    pub order: SubsetOrder,
    /// Spatial down-sampling factor of the sketched operator (1 = no sketch).
    pub factor: usize,
    /// Layers `k < k_switch` use the sketched operator.
    pub k_switch: usize,
    pub seed: u64,
    pub dual_store: DualStore,
    pub primal_slot: PrimalSlot,
    pub hidden: usize,
    pub conv_layers: usize,
    pub kernel: usize,
    /// Share one `W` vector across subsets in the weighted dual prox.
    pub shared_weights: bool,
}

impl UnrollConfig {
    pub fn new(variant: Variant, layers: usize) -> Self {
        Self {
            layers,
            variant,
            order: SubsetOrder::Cyclic,
            factor: if variant.is_sketched() { 2 } else { 1 },
            k_switch: default_k_switch(layers),
            seed: 0,
            dual_store: DualStore::Shared,
            primal_slot: PrimalSlot::Learned,
            hidden: 8,
            conv_layers: 2,
            kernel: 3,
            shared_weights: false,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("unrolled network needs at least one layer".into()));
        }
        if self.variant.is_full_batch() && m != 1 {
            return Err(Error::Config(format!(
                "{} is full-batch and needs m = 1, got m = {m}",
                self.variant.name()
            )));
        }
        if self.factor == 0 {
            return Err(Error::Config("sketch factor must be at least 1".into()));
        }
        if !self.variant.is_sketched() && self.factor != 1 {
            return Err(Error::Config(format!("{} does not sketch", self.variant.name())));
        }
        if self.k_switch > self.layers {
            return Err(Error::Config("k_switch must not exceed the layer count".into()));
        }
        if let PrimalSlot::Prior(set) = &self.primal_slot {
            set.validate()?;
            if self.variant.two_channel_primal() {
                return Err(Error::Config(
                    "fixed priors only fit gradient-step primal slots".into(),
                ));
            }
        }
        if self.kernel.is_multiple_of(2) || self.conv_layers == 0 {
            return Err(Error::Config("subnets need an odd kernel and at least one layer".into()));
        }
        Ok(())
    }

    /// Whether layer `k` runs on the coarse grid.
    pub fn sketched_layer(&self, k: usize) -> bool {
        self.variant.is_sketched() && self.factor > 1 && k < self.k_switch
    }

    fn subnet_spec(&self, in_ch: usize) -> SubnetSpec {
        SubnetSpec {
            in_ch,
            hidden: self.hidden,
            n_layers: self.conv_layers,
            kernel: self.kernel,
        }
    }
}

/// `K − ⌈K/3⌉`: the last third of the layers run unsketched.
pub fn default_k_switch(layers: usize) -> usize {
    layers - layers.div_ceil(3)
}

/// Learnable parameters of a `K`-layer network.
#[derive(Clone, Debug, PartialEq)]
pub struct UnrollParams {
    pub tau: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Over-relaxation of the PDHG variant.
    pub beta: f64,
    /// `K` primal subnets, one when shared, none for a fixed prior slot.
    pub primal: Vec<ConvSubnetParams>,
    /// `K` dual subnets for learned-dual variants, otherwise none.
    pub dual: Vec<ConvSubnetParams>,
    /// Diagonals of `W_i` for weighted-prox variants (`m` vectors, or one shared).
    pub weights: Vec<Vec<f64>>,
}

/// Which parameter groups an optimiser may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trainable {
    pub steps: bool,
    pub beta: bool,
    pub primal: bool,
    pub dual: bool,
    pub weights: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable {
        steps: true,
        beta: false,
        primal: true,
        dual: true,
        weights: true,
    };
}

impl UnrollParams {
    /// Seeded initialisation for `config` on `op`. Step sizes start at
    /// `τ = σ = 1/√(q·L_s)` so that `τσ‖S_iA‖² = 1`.
    pub fn init(config: &UnrollConfig, op: &dyn SubsetOperator, seed: u64) -> Result<Self> {
        config.validate(op.n_subsets())?;
        let k = config.layers;
        let q = op.subset_len() as f64;
        let ls = subset_lipschitz(op, 50, seed);
        let step = 1.0 / (q * ls).sqrt();
        let mut r = rng::stream(seed, 0x5eed);
        let v = config.variant;
        let primal = match (&config.primal_slot, v.two_channel_primal()) {
            (PrimalSlot::Prior(_), _) => Vec::new(),
            (PrimalSlot::Learned, two) => {
                let spec = config.subnet_spec(if two { 2 } else { 1 });
                let n = if v.shares_primal() { 1 } else { k };
                (0..n)
                    .map(|_| ConvSubnetParams::init(spec, &mut r))
                    .collect::<Result<_>>()?
            }
        };
        let dual = if v.dual_mode() == DualMode::Learned {
            let spec = config.subnet_spec(3);
            (0..k)
                .map(|_| ConvSubnetParams::init(spec, &mut r))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let weights = if v.dual_mode() == DualMode::WeightedProx {
            let n = if config.shared_weights { 1 } else { op.n_subsets() };
            vec![vec![1.0; op.subset_len()]; n]
        } else {
            Vec::new()
        };
        Ok(Self {
            tau: vec![step; k],
            sigma: vec![step; k],
            beta: if v == Variant::Pdhg { 1.0 } else { 0.0 },
            primal,
            dual,
            weights,
        })
    }

    /// Same structure with every entry zero (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        Self {
            tau: vec![0.0; self.tau.len()],
            sigma: vec![0.0; self.sigma.len()],
            beta: 0.0,
            primal: self.primal.iter().map(ConvSubnetParams::zeros_like).collect(),
            dual: self.dual.iter().map(ConvSubnetParams::zeros_like).collect(),
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
        }
    }

    pub fn layers(&self) -> usize {
        self.tau.len()
    }

    pub(crate) fn primal_for(&self, k: usize) -> &ConvSubnetParams {
        if self.primal.len() == 1 {
            &self.primal[0]
        } else {
            &self.primal[k]
        }
    }

    pub(crate) fn primal_for_mut(&mut self, k: usize) -> &mut ConvSubnetParams {
        if self.primal.len() == 1 {
            &mut self.primal[0]
        } else {
            &mut self.primal[k]
        }
    }

    pub(crate) fn weights_for(&self, i: usize) -> &[f64] {
        if self.weights.len() == 1 {
            &self.weights[0]
        } else {
            &self.weights[i]
        }
    }

    pub(crate) fn weights_for_mut(&mut self, i: usize) -> &mut [f64] {
        if self.weights.len() == 1 {
            &mut self.weights[0]
        } else {
            &mut self.weights[i]
        }
    }

    pub fn validate(&self, config: &UnrollConfig, op: &dyn SubsetOperator) -> Result<()> {
        let k = config.layers;
        let v = config.variant;
        let bad = |msg: &str| Err(Error::Config(format!("parameters do not fit {}: {msg}", v.name())));
        if self.tau.len() != k || self.sigma.len() != k {
            return bad("step-size count differs from layer count");
        }
        if self.tau.iter().chain(&self.sigma).any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("step sizes must be positive and finite".into()));
        }
        let want_primal = match (&config.primal_slot, v.shares_primal()) {
            (PrimalSlot::Prior(_), _) => 0,
            (PrimalSlot::Learned, true) => 1,
            (PrimalSlot::Learned, false) => k,
        };
        if self.primal.len() != want_primal {
            return bad("wrong number of primal subnets");
        }
        let want_in = if v.two_channel_primal() { 2 } else { 1 };
        for p in &self.primal {
            p.validate()?;
            if p.in_channels() != want_in {
                return bad("primal subnet input channels");
            }
        }
        let want_dual = if v.dual_mode() == DualMode::Learned { k } else { 0 };
        if self.dual.len() != want_dual {
            return bad("wrong number of dual subnets");
        }
        for d in &self.dual {
            d.validate()?;
            if d.in_channels() != 3 {
                return bad("dual subnet input channels");
            }
        }
        if v.dual_mode() == DualMode::WeightedProx {
            let m = op.n_subsets();
            if !(self.weights.len() == 1 || self.weights.len() == m) {
                return bad("weighted prox needs one or m weight vectors");
            }
            if self.weights.iter().any(|w| w.len() != op.subset_len()) {
                return bad("weight vector length differs from subset length");
            }
            if self.weights.iter().flatten().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::Config("dual weights must be non-negative".into()));
            }
        } else if !self.weights.is_empty() {
            return bad("weights given for a variant without weighted prox");
        }
        Ok(())
    }

    /// Flattened view in a fixed order: τ, σ, β, primal subnets, dual
    /// subnets, weights.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.tau);
        out.extend_from_slice(&self.sigma);
        out.push(self.beta);
        for p in self.primal.iter().chain(&self.dual) {
            p.write_flat(&mut out);
        }
        for w in &self.weights {
            out.extend_from_slice(w);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Dimension {
                context: "flat parameters",
                expected: self.n_params(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for t in self.tau.iter_mut().chain(self.sigma.iter_mut()) {
            *t = it.next().unwrap();
        }
        self.beta = it.next().unwrap();
        for p in self.primal.iter_mut().chain(self.dual.iter_mut()) {
            p.read_flat(&mut it);
        }
        for w in self.weights.iter_mut().flatten() {
            *w = it.next().unwrap();
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        2 * self.tau.len()
            + 1
            + self.primal.iter().chain(&self.dual).map(ConvSubnetParams::n_params).sum::<usize>()
            + self.weights.iter().map(Vec::len).sum::<usize>()
    }

    /// Per-entry mask matching [`UnrollParams::to_flat`].
    pub fn trainable_mask(&self, t: Trainable) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.n_params());
        mask.extend(std::iter::repeat_n(t.steps, 2 * self.tau.len()));
        mask.push(t.beta);
        for p in &self.primal {
            mask.extend(std::iter::repeat_n(t.primal, p.n_params()));
        }
        for d in &self.dual {
            mask.extend(std::iter::repeat_n(t.dual, d.n_params()));
        }
        for w in &self.weights {
            mask.extend(std::iter::repeat_n(t.weights, w.len()));
        }
        mask
    }

    /// Keeps step sizes positive and weights non-negative after an update.
    pub fn clamp_feasible(&mut self) {
        const MIN_STEP: f64 = 1e-8;
        for s in self.tau.iter_mut().chain(self.sigma.iter_mut()) {
            *s = s.max(MIN_STEP);
        }
        for w in self.weights.iter_mut().flatten() {
            *w = w.max(0.0);
        }
    }
}

/// Largest `λ_max((S_iA)^T S_iA)/q` over subsets, by power iteration.
pub fn subset_lipschitz(op: &dyn SubsetOperator, iters: usize, seed: u64) -> f64 {
    let q = op.subset_len() as f64;
    let mut best: f64 = 0.0;
    let mut r = rng::stream(seed, 0x1_5eed);
    for i in 0..op.n_subsets() {
        let mut v = rng::normal_vec(&mut r, op.image_len());
        let mut lambda = 0.0;
        for _ in 0..iters {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= n);
            let w = op.subset_adjoint(i, &op.subset_forward(i, &v));
            lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            v = w;
        }
        best = best.max(lambda / q);
    }
    best
}
