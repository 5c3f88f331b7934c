//! Brute-force verification of restricted eigenvalue constants and the
//! estimation-error bounds of the light-weight unrolled networks on small
//! instances.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom as _;
use rand::RngCore as _;

use crate::error::{check_len, Error, Result};
use crate::operators::{upsample, DenseSubsetOperator, SubsetOperator, SubsetScheme};
use crate::par::{self, Exec};
use crate::proximal::{hj, ManifoldPrior, PriorSet};
use crate::rng;
use crate::unrolling::{
    unroll_forward, PrimalSlot, SubsetOrder, Trajectory, UnrollConfig, UnrollParams, UnrollProblem, Variant,
};

const MAX_DIM: usize = 20;
const MAX_SUPPORT: usize = 6;
/// Absolute slack on the bound comparisons, relative to the start error.
const ROUNDOFF: f64 = 1e-12;

/// Descent cone of a constraint set at the ground truth.
#[derive(Clone, Debug, PartialEq)]
pub enum Cone {
    All,
    /// Union of all coordinate subspaces with this many coordinates.
    Sparse(usize),
    /// Span of an orthonormal basis.
    Subspace(Vec<Vec<f64>>),
}

impl Cone {
    /// Cone of differences `M − x†` for `prior` in dimension `d`.
    pub fn of(prior: &PriorSet, d: usize) -> Result<Self> {
        match prior {
            PriorSet::All => Ok(Cone::All),
            PriorSet::SparseSet(s) => Ok(Cone::Sparse((2 * s).min(d))),
            PriorSet::Subspace { basis, .. } => {
                prior.validate()?;
                if basis.iter().any(|b| b.len() != d) {
                    return Err(Error::Config("subspace basis length differs from image length".into()));
                }
                Ok(Cone::Subspace(basis.clone()))
            }
            PriorSet::L1Ball(_) | PriorSet::Box { .. } => Err(Error::Unsupported(
                "descent cone oracle is only available for All, SparseSet and Subspace".into(),
            )),
        }
    }
}

/// `1` for convex constraint sets, `2` otherwise.
pub fn kappa(prior: &PriorSet) -> f64 {
    if prior.is_convex() {
        1.0
    } else {
        2.0
    }
}

/// `sup_{v ∈ C, ‖v‖ ≤ 1} vᵀg`.
pub fn cone_sup(g: &[f64], cone: &Cone) -> f64 {
    match cone {
        Cone::All => norm(g),
        Cone::Sparse(t) => {
            let mut sq: Vec<f64> = g.iter().map(|v| v * v).collect();
            sq.sort_by(|a, b| b.total_cmp(a));
            sq.iter().take(*t).sum::<f64>().sqrt()
        }
        Cone::Subspace(basis) => basis.iter().map(|b| dot(b, g).powi(2)).sum::<f64>().sqrt(),
    }
}

/// Restricted constants of a subset operator over a descent cone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestrictedConstants {
    /// `min (1/n)‖Av‖²/‖v‖²` over the cone.
    pub mu_c: f64,
    /// `max (1/q)‖S_iAv‖²/‖v‖²` over the cone and subsets.
    pub l_c: f64,
    /// Same maximum over all directions.
    pub l_s: f64,
}

/// Dense `S_iA` built column by column from the operator.
pub fn subset_matrix(op: &dyn SubsetOperator, i: usize) -> DMatrix<f64> {
    let d = op.image_len();
    let q = op.subset_len();
    let mut m = DMatrix::zeros(q, d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let col = op.subset_forward(i, &e);
        e[j] = 0.0;
        for (r, v) in col.into_iter().enumerate() {
            m[(r, j)] = v;
        }
    }
    m
}

fn eig_range(g: DMatrix<f64>) -> (f64, f64) {
    let ev = SymmetricEigen::new(g).eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn restrict_gram(g: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(support.len(), support.len(), |a, b| g[(support[a], support[b])])
}

/// Calls `f` on every increasing `t`-subset of `0..d`.
fn for_each_support(d: usize, t: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..t).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..t).rev().find(|&p| idx[p] < d - t + p) else {
            return;
        };
        idx[pos] += 1;
        for p in pos + 1..t {
            idx[p] = idx[p - 1] + 1;
        }
    }
}

/// Computes `μ_c`, `L_c` and `L_s` by eigen-decomposition and support
/// enumeration.
pub fn restricted_constants(op: &dyn SubsetOperator, prior: &PriorSet) -> Result<RestrictedConstants> {
    let d = op.image_len();
    if d > MAX_DIM {
        return Err(Error::Unsupported(format!(
            "brute-force constants need at most {MAX_DIM} unknowns, got {d}"
        )));
    }
    let cone = Cone::of(prior, d)?;
    if let Cone::Sparse(t) = cone {
        if t > MAX_SUPPORT && t < d {
            return Err(Error::Unsupported(format!("support size {t} exceeds {MAX_SUPPORT}")));
        }
    }
    let n = op.measurement_len() as f64;
    let q = op.subset_len() as f64;
    let grams: Vec<DMatrix<f64>> = (0..op.n_subsets())
        .map(|i| {
            let s = subset_matrix(op, i);
            s.transpose() * s
        })
        .collect();
    let full = grams.iter().fold(DMatrix::zeros(d, d), |acc, g| acc + g);
    let l_s = grams.iter().map(|g| eig_range(g.clone()).1).fold(0.0, f64::max) / q;

    let (mu_c, l_c) = match &cone {
        Cone::All => (eig_range(full).0 / n, l_s),
        Cone::Sparse(t) => {
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for_each_support(d, *t, |sup| {
                lo = lo.min(eig_range(restrict_gram(&full, sup)).0);
                for g in &grams {
                    hi = hi.max(eig_range(restrict_gram(g, sup)).1);
                }
            });
            (lo / n, hi / q)
        }
        Cone::Subspace(basis) => {
            let b = DMatrix::from_fn(d, basis.len(), |r, c| basis[c][r]);
            let lo = eig_range(b.transpose() * &full * &b).0;
            let hi = grams
                .iter()
                .map(|g| eig_range(b.transpose() * g * &b).1)
                .fold(0.0, f64::max);
            (lo / n, hi / q)
        }
    };
    Ok(RestrictedConstants { mu_c, l_c, l_s })
}

/// Left and right sides of `E_i‖AᵀS_iᵀS_iA e‖² ≤ (q²L_s/n)‖Ae‖²`, with the
/// expectation taken exactly over the partition.
pub fn expected_smoothness(op: &dyn SubsetOperator, l_s: f64, e: &[f64]) -> (f64, f64) {
    let m = op.n_subsets();
    let n = op.measurement_len() as f64;
    let q = op.subset_len() as f64;
    let mut lhs = 0.0;
    let mut ae = 0.0;
    for i in 0..m {
        let z = op.subset_forward(i, e);
        ae += dot(&z, &z);
        let g = op.subset_adjoint(i, &z);
        lhs += dot(&g, &g);
    }
    (lhs / m as f64, q * q * l_s / n * ae)
}

/// Diagonal of the noise-free cross term `(I + W/σ)^{-1}(I − W)`, zero
/// for unit weights.
pub fn cross_term_diagonal(w: f64, sigma: f64) -> f64 {
    sigma * (1.0 - w) / (sigma + w)
}

/// Which bound a network is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundForm {
    /// Weighted least-squares dual step with `τσ = 1/(qL_s)`.
    WeightedDual,
    /// Residual dual step with `τ = 1/(qL_s)`.
    Residual,
}

impl BoundForm {
    pub fn of(variant: Variant) -> Result<Self> {
        match variant {
            Variant::SkLspdLw => Ok(BoundForm::WeightedDual),
            Variant::Lsgd | Variant::SkLsgd => Ok(BoundForm::Residual),
            v => Err(Error::Unsupported(format!("no error bound for variant {}", v.name()))),
        }
    }
}

/// Extremal diagonal entries of every `H_i` (unit for the residual form).
pub fn h_range(params: &UnrollParams, form: BoundForm) -> (f64, f64) {
    if form == BoundForm::Residual {
        return (1.0, 1.0);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &s in &params.sigma {
        for &w in params.weights.iter().flatten() {
            let h = hj(w, s).0;
            lo = lo.min(h);
            hi = hi.max(h);
        }
    }
    (lo, hi)
}

/// Noise term `δ`: the subset average of `2τσ·sup_C vᵀAᵀS_iᵀJ_iS_iw`, or
/// `2τ·sup_C vᵀAᵀS_iᵀS_iw` when `weights` is `None`.
pub fn estimate_delta(
    op: &dyn SubsetOperator,
    noise: &[f64],
    weights: Option<(&[Vec<f64>], f64)>,
    tau: f64,
    cone: &Cone,
) -> Result<f64> {
    check_len("noise", op.measurement_len(), noise.len())?;
    let m = op.n_subsets();
    let mut total = 0.0;
    for i in 0..m {
        let mut wi = op.restrict(i, noise);
        let scale = match weights {
            None => 2.0 * tau,
            Some((ws, sigma)) => {
                let w = if ws.len() == 1 { &ws[0] } else { &ws[i] };
                check_len("dual weights", wi.len(), w.len())?;
                wi.iter_mut().zip(w).for_each(|(v, &w)| *v *= hj(w, sigma).1);
                2.0 * tau * sigma
            }
        };
        total += scale * cone_sup(&op.subset_adjoint(i, &wi), cone);
    }
    Ok(total / m as f64)
}

/// Error terms measured along a trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Epsilons {
    pub eps0: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    /// `ε₀ + ε₁ + ε₂ + τε₃ + τσε₄`.
    pub eps: f64,
    /// `ε₀ + τε₃ + τε₄`.
    pub eps_star: f64,
    /// Largest step sizes over the layers, used in the combinations.
    pub tau: f64,
    pub sigma: f64,
}

impl Epsilons {
    fn combine(mut self) -> Self {
        self.eps = self.eps0 + self.eps1 + self.eps2 + self.tau * self.eps3 + self.tau * self.sigma * self.eps4;
        self.eps_star = self.eps0 + self.tau * self.eps3 + self.tau * self.eps4;
        self
    }

    /// Elementwise maximum of two measurements.
    pub fn max(self, o: Self) -> Self {
        Self {
            eps0: self.eps0.max(o.eps0),
            eps1: self.eps1.max(o.eps1),
            eps2: self.eps2.max(o.eps2),
            eps3: self.eps3.max(o.eps3),
            eps4: self.eps4.max(o.eps4),
            tau: self.tau.max(o.tau),
            sigma: self.sigma.max(o.sigma),
            ..Self::default()
        }
        .combine()
    }
}

fn op_norm(op: &dyn SubsetOperator, i: usize) -> f64 {
    let mut r = rng::stream(0x0b_5e17, i as u64);
    let mut v = rng::normal_vec(&mut r, op.image_len());
    let mut lambda: f64 = 0.0;
    for _ in 0..100 {
        let n = norm(&v);
        if n == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= n);
        let w = op.subset_adjoint(i, &op.subset_forward(i, &v));
        lambda = dot(&v, &w);
        v = w;
    }
    lambda.max(0.0).sqrt()
}

/// Supremum of each error expression over the recorded layers.
///
/// `ε₁` and `ε₂` apply to the weighted dual step, `ε₃` and `ε₄` to sketched
/// layers; `ε₀` is the prior's declared budget.
pub fn measure_epsilons(
    problem: &UnrollProblem<'_>,
    trajectory: &Trajectory,
    config: &UnrollConfig,
    params: &UnrollParams,
    x_true: &[f64],
    eps0: f64,
) -> Result<Epsilons> {
    let op = problem.op;
    check_len("ground truth", op.image_len(), x_true.len())?;
    if trajectory.layers.len() != config.layers {
        return Err(Error::Config("trajectory does not match the configuration".into()));
    }
    let weighted = config.variant == Variant::SkLspdLw || config.variant == Variant::Pdhg;
    let fine = op.image_shape();
    let f = config.factor;
    let coarse_shape = (fine.0 / f, fine.1 / f);
    let mut out = Epsilons {
        eps0,
        ..Epsilons::default()
    };
    let mut norms = vec![None; op.n_subsets()];
    for (k, rec) in trajectory.layers.iter().enumerate() {
        let i = rec.subset;
        let (tau, sigma) = (params.tau[k], params.sigma[k]);
        out.tau = out.tau.max(tau);
        out.sigma = out.sigma.max(sigma);
        if weighted {
            let w = params.weights_for(i);
            let hy: Vec<f64> = rec.y_prev.iter().zip(w).map(|(y, &w)| hj(w, sigma).0 * y).collect();
            out.eps1 = out.eps1.max(2.0 * tau * norm(&op.subset_adjoint(i, &hy)));
            let mut ax = op.subset_forward(i, x_true);
            ax.iter_mut().zip(w).for_each(|(v, &w)| *v *= cross_term_diagonal(w, sigma));
            out.eps2 = out.eps2.max(2.0 * tau * sigma * norm(&op.subset_adjoint(i, &ax)));
        }
        if rec.sketched {
            let coarse = problem
                .coarse
                .ok_or_else(|| Error::Config("sketched layer without a coarse operator".into()))?;
            let src = rec.xbar.as_deref().unwrap_or(&trajectory.xs[k]);
            let exact = op.subset_forward(i, src);
            let s_norm = *norms[i].get_or_insert_with(|| op_norm(coarse, i));
            out.eps3 = out.eps3.max(s_norm * dist(&rec.z, &exact));
            let approx = upsample(&coarse.subset_adjoint(i, &rec.y_next), coarse_shape, f);
            out.eps4 = out.eps4.max(dist(&approx, &op.subset_adjoint(i, &rec.y_next)));
        }
    }
    Ok(out.combine())
}

/// Small instance for a bound check: `b = A x† + w`.
#[derive(Clone, Copy)]
pub struct TheoryInstance<'a> {
    pub op: &'a dyn SubsetOperator,
    pub coarse: Option<&'a dyn SubsetOperator>,
    pub x_true: &'a [f64],
    pub noise: &'a [f64],
}

impl TheoryInstance<'_> {
    pub fn data(&self) -> Result<Vec<f64>> {
        check_len("ground truth", self.op.image_len(), self.x_true.len())?;
        check_len("noise", self.op.measurement_len(), self.noise.len())?;
        let mut b = self.op.forward(self.x_true);
        b.iter_mut().zip(self.noise).for_each(|(v, w)| *v += w);
        Ok(b)
    }
}

/// Constants, error terms, observed errors and bound curves of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryReport {
    pub form: BoundForm,
    pub constants: RestrictedConstants,
    pub v_a: f64,
    pub v_b: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub epsilons: Epsilons,
    pub delta: f64,
    /// Shrinkage parameter of the lower bound.
    pub gamma: Option<f64>,
    pub n_runs: usize,
    /// Mean and standard error of `‖x_k − x†‖`, `k = 0..=K`.
    pub observed_mean: Vec<f64>,
    pub observed_se: Vec<f64>,
    pub bound: Vec<f64>,
    /// The upper bound is only meaningful for `α < 1`.
    pub bound_vacuous: bool,
    pub bound_ok: Vec<bool>,
    /// Per-step inequality `E e_{k+1} ≤ α E e_k + ε + δ`, for `k = 0..K`.
    pub step_ok: Vec<bool>,
    pub passed: bool,
}

impl TheoryReport {
    /// One row per `k`: observed mean, standard error, bound and checks.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,observed_mean,observed_se,bound,bound_ok,step_ok\n");
        for k in 0..self.observed_mean.len() {
            let step = if k == 0 {
                String::new()
            } else {
                self.step_ok[k - 1].to_string()
            };
            s.push_str(&format!(
                "{k},{:e},{:e},{:e},{},{step}\n",
                self.observed_mean[k], self.observed_se[k], self.bound[k], self.bound_ok[k]
            ));
        }
        s
    }

    pub fn summary(&self) -> String {
        let c = &self.constants;
        let e = &self.epsilons;
        let mut s = format!(
            "form = {:?}\nmu_c = {:e}\nl_c = {:e}\nl_s = {:e}\nv_a = {:e}\nv_b = {:e}\nkappa = {}\nalpha = {:e}\n",
            self.form, c.mu_c, c.l_c, c.l_s, self.v_a, self.v_b, self.kappa, self.alpha
        );
        s.push_str(&format!(
            "eps0 = {:e}\neps1 = {:e}\neps2 = {:e}\neps3 = {:e}\neps4 = {:e}\neps = {:e}\neps_star = {:e}\ndelta = {:e}\n",
            e.eps0, e.eps1, e.eps2, e.eps3, e.eps4, e.eps, e.eps_star, self.delta
        ));
        if let Some(g) = self.gamma {
            s.push_str(&format!("gamma = {g}\n"));
        }
        s.push_str(&format!(
            "n_runs = {}\nbound_vacuous = {}\npassed = {}\n",
            self.n_runs, self.bound_vacuous, self.passed
        ));
        s
    }
}

/// Per-run iterate errors and error terms.
struct Runs {
    errors: Vec<Vec<f64>>,
    epsilons: Epsilons,
}

#[allow(clippy::too_many_arguments)]
fn run_many(
    inst: &TheoryInstance<'_>,
    config: &UnrollConfig,
    params: &UnrollParams,
    x0: &[f64],
    eps0: f64,
    n_runs: usize,
    seed: u64,
    exec: Exec,
) -> Result<Runs> {
    let data = inst.data()?;
    let mut problem = UnrollProblem::new(inst.op, &data);
    if let Some(c) = inst.coarse {
        problem = problem.with_coarse(c);
    }
    let results = par::map_collect(exec, n_runs, |r| -> Result<(Vec<f64>, Epsilons)> {
        let mut cfg = config.clone();
        cfg.seed = rng::stream(seed, r as u64).next_u64();
        let traj = unroll_forward(&problem, &cfg, params, x0, None)?;
        let eps = measure_epsilons(&problem, &traj, &cfg, params, inst.x_true, eps0)?;
        Ok((traj.errors(inst.x_true), eps))
    });
    let mut errors = Vec::with_capacity(n_runs);
    let mut epsilons = Epsilons {
        eps0,
        ..Epsilons::default()
    }
    .combine();
    for r in results {
        let (e, eps) = r?;
        errors.push(e);
        epsilons = epsilons.max(eps);
    }
    Ok(Runs { errors, epsilons })
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sets the step sizes the bounds assume: `τ = 1/(qL_s)` for the residual
/// form, `τσ = 1/(qL_s)` with `σ` kept for the weighted form.
pub fn theorem_steps(params: &mut UnrollParams, form: BoundForm, q: usize, l_s: f64) {
    let c = 1.0 / (q as f64 * l_s);
    for (t, s) in params.tau.iter_mut().zip(&params.sigma) {
        *t = match form {
            BoundForm::Residual => c,
            BoundForm::WeightedDual => c / s,
        };
    }
}

fn prepare(
    inst: &TheoryInstance<'_>,
    config: &UnrollConfig,
    params: &UnrollParams,
    prior: &ManifoldPrior,
) -> Result<(BoundForm, RestrictedConstants, UnrollConfig, UnrollParams)> {
    let form = BoundForm::of(config.variant)?;
    let constants = restricted_constants(inst.op, &prior.set)?;
    let mut cfg = config.clone();
    cfg.order = SubsetOrder::UniformRandom;
    cfg.primal_slot = PrimalSlot::Prior(prior.set.clone());
    let mut p = params.clone();
    p.primal.clear();
    theorem_steps(&mut p, form, inst.op.subset_len(), constants.l_s);
    Ok((form, constants, cfg, p))
}

/// Monte-Carlo check of the upper bound with uniformly random subsets.
///
/// Steps are reset to the values the bound assumes. The report passes when
/// every per-step inequality holds within three standard errors and, for
/// `α < 1`, the mean error stays below the bound curve within three
/// standard errors.
#[allow(clippy::too_many_arguments)]
pub fn upper_bound_check(
    inst: &TheoryInstance<'_>,
    config: &UnrollConfig,
    params: &UnrollParams,
    prior: &ManifoldPrior,
    x0: &[f64],
    n_runs: usize,
    seed: u64,
    exec: Exec,
) -> Result<TheoryReport> {
    if n_runs == 0 {
        return Err(Error::Config("need at least one run".into()));
    }
    let (form, constants, cfg, p) = prepare(inst, config, params, prior)?;
    let cone = Cone::of(&prior.set, inst.op.image_len())?;
    let (v_a, v_b) = h_range(&p, form);
    let kappa = kappa(&prior.set);
    let ratio = constants.mu_c / constants.l_s;
    let alpha = match form {
        BoundForm::Residual => kappa * (1.0 - ratio),
        BoundForm::WeightedDual => kappa * (1.0 - v_b * ratio / v_a),
    };
    let runs = run_many(inst, &cfg, &p, x0, prior.eps0, n_runs, seed, exec)?;
    let eps = runs.epsilons;
    let tau = p.tau.iter().copied().fold(0.0, f64::max);
    let delta = match form {
        BoundForm::Residual => estimate_delta(inst.op, inst.noise, None, tau, &cone)?,
        BoundForm::WeightedDual => {
            let sigma = p.sigma.iter().copied().fold(0.0, f64::max);
            estimate_delta(inst.op, inst.noise, Some((&p.weights, sigma)), tau, &cone)?
        }
    };
    let floor = match form {
        BoundForm::Residual => eps.eps_star + delta,
        BoundForm::WeightedDual => eps.eps + delta,
    };

    let k_max = cfg.layers;
    let (mut observed_mean, mut observed_se) = (Vec::new(), Vec::new());
    for k in 0..=k_max {
        let (m, se) = mean_se(runs.errors.iter().map(|e| e[k]));
        observed_mean.push(m);
        observed_se.push(se);
    }
    let e0 = observed_mean[0];
    let bound: Vec<f64> = (0..=k_max)
        .map(|k| {
            let ak = alpha.powi(k as i32);
            match form {
                BoundForm::Residual if k == 0 => e0,
                BoundForm::Residual => ak * e0 + floor / (1.0 - alpha),
                BoundForm::WeightedDual if alpha == 1.0 => e0 + k as f64 * floor,
                BoundForm::WeightedDual => ak * e0 + (1.0 - ak) / (1.0 - alpha) * floor,
            }
        })
        .collect();
    let bound_vacuous = alpha >= 1.0;
    let slack = ROUNDOFF * e0.max(1.0);
    let bound_ok: Vec<bool> = (0..=k_max)
        .map(|k| bound_vacuous || observed_mean[k] <= bound[k] + 3.0 * observed_se[k] + slack)
        .collect();
    let step_ok: Vec<bool> = (0..k_max)
        .map(|k| {
            let (m, se) = mean_se(runs.errors.iter().map(|e| e[k + 1] - alpha * e[k]));
            m <= floor + 3.0 * se + slack
        })
        .collect();
    let passed = bound_ok.iter().chain(&step_ok).all(|&b| b);
    Ok(TheoryReport {
        form,
        constants,
        v_a,
        v_b,
        kappa,
        alpha,
        epsilons: eps,
        delta,
        gamma: None,
        n_runs,
        observed_mean,
        observed_se,
        bound,
        bound_vacuous,
        bound_ok,
        step_ok,
        passed,
    })
}

/// Checks `E‖x_K − x†‖ ≥ (1−γ)^K(1 − L_c/L_s)^K‖x₀ − x†‖ − (L_s/L_c)ε★`
/// for a convex prior and the residual dual step.
#[allow(clippy::too_many_arguments)]
pub fn lower_bound_check(
    inst: &TheoryInstance<'_>,
    config: &UnrollConfig,
    params: &UnrollParams,
    prior: &ManifoldPrior,
    x0: &[f64],
    gamma: f64,
    n_runs: usize,
    seed: u64,
    exec: Exec,
) -> Result<TheoryReport> {
    if !prior.set.is_convex() {
        return Err(Error::Unsupported("the lower bound needs a convex constraint set".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config("gamma must lie in (0, 1]".into()));
    }
    if n_runs == 0 {
        return Err(Error::Config("need at least one run".into()));
    }
    let (form, constants, cfg, p) = prepare(inst, config, params, prior)?;
    if form != BoundForm::Residual {
        return Err(Error::Unsupported("the lower bound covers the residual dual step only".into()));
    }
    let runs = run_many(inst, &cfg, &p, x0, prior.eps0, n_runs, seed, exec)?;
    let eps = runs.epsilons;
    let k_max = cfg.layers;
    let (mut observed_mean, mut observed_se) = (Vec::new(), Vec::new());
    for k in 0..=k_max {
        let (m, se) = mean_se(runs.errors.iter().map(|e| e[k]));
        observed_mean.push(m);
        observed_se.push(se);
    }
    let rate = (1.0 - gamma) * (1.0 - constants.l_c / constants.l_s);
    let offset = if eps.eps_star == 0.0 {
        0.0
    } else {
        constants.l_s / constants.l_c * eps.eps_star
    };
    let bound: Vec<f64> = (0..=k_max)
        .map(|k| rate.powi(k as i32) * observed_mean[0] - offset)
        .collect();
    let slack = ROUNDOFF * observed_mean[0].max(1.0);
    let bound_ok: Vec<bool> = (0..=k_max)
        .map(|k| observed_mean[k] + 3.0 * observed_se[k] + slack >= bound[k])
        .collect();
    let passed = bound_ok.iter().all(|&b| b);
    Ok(TheoryReport {
        form,
        constants,
        v_a: 1.0,
        v_b: 1.0,
        kappa: 1.0,
        alpha: rate,
        epsilons: eps,
        delta: 0.0,
        gamma: Some(gamma),
        n_runs,
        observed_mean,
        observed_se,
        bound,
        bound_vacuous: false,
        bound_ok,
        step_ok: Vec::new(),
        passed,
    })
}

/// `[Q; Q]` with `QᵀQ = c²I` from a seeded random orthogonal `Q`, split into
/// its two blocks.
pub fn stacked_orthogonal(d: usize, c: f64, seed: u64) -> Result<DenseSubsetOperator> {
    let mut r = rng::stream(seed, 0x0a7);
    let g = DMatrix::from_vec(d, d, rng::normal_vec(&mut r, d * d));
    let q = g.qr().q() * c;
    let mut data = Vec::with_capacity(2 * d * d);
    for _ in 0..2 {
        for row in 0..d {
            data.extend((0..d).map(|col| q[(row, col)]));
        }
    }
    DenseSubsetOperator::new(2 * d, d, data, SubsetScheme::contiguous(2 * d, 2)?)
}

/// `n × d` matrix with independent `N(0, 1/n)` entries and `m` contiguous
/// row blocks.
pub fn gaussian_operator(n: usize, d: usize, m: usize, seed: u64) -> Result<DenseSubsetOperator> {
    let mut r = rng::stream(seed, 0x6a5);
    let scale = 1.0 / (n as f64).sqrt();
    let data = rng::normal_vec(&mut r, n * d).into_iter().map(|v| v * scale).collect();
    DenseSubsetOperator::new(n, d, data, SubsetScheme::contiguous(n, m)?)
}

/// `s`-sparse vector with a seeded support and unit-scale normal entries.
pub fn sparse_vector(d: usize, s: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 0x5a7);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.shuffle(&mut r);
    let vals = rng::normal_vec(&mut r, s);
    let mut x = vec![0.0; d];
    for (&j, v) in idx.iter().take(s).zip(vals) {
        x[j] = if v.abs() < 0.5 { v.signum() * 0.5 + v } else { v };
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: usize, cols: usize, data: Vec<f64>, m: usize) -> DenseSubsetOperator {
        DenseSubsetOperator::new(rows, cols, data, SubsetScheme::contiguous(rows, m).unwrap()).unwrap()
    }

    #[test]
    fn identity_constants() {
        let mut a = vec![0.0; 16];
        (0..4).for_each(|j| a[j * 5] = 1.0);
        let c = restricted_constants(&dense(4, 4, a, 1), &PriorSet::All).unwrap();
        for v in [c.mu_c, c.l_c, c.l_s] {
            assert!((v - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_constants() {
        let op = dense(2, 2, vec![2.0, 0.0, 0.0, 1.0], 1);
        let c = restricted_constants(&op, &PriorSet::All).unwrap();
        assert!((c.mu_c - 0.5).abs() < 1e-14);
        assert!((c.l_c - 2.0).abs() < 1e-14 && (c.l_s - 2.0).abs() < 1e-14);
        let line = PriorSet::subspace(vec![vec![0.0, 1.0]]);
        let c = restricted_constants(&op, &line).unwrap();
        assert!((c.l_c - 0.5).abs() < 1e-14 && (c.mu_c - 0.5).abs() < 1e-14);
    }

    #[test]
    fn cone_sup_examples() {
        assert_eq!(cone_sup(&[3.0, 4.0], &Cone::All), 5.0);
        assert_eq!(cone_sup(&[3.0, -4.0], &Cone::Sparse(1)), 4.0);
        let c = Cone::Subspace(vec![vec![1.0, 0.0]]);
        assert_eq!(cone_sup(&[3.0, 4.0], &c), 3.0);
    }

    #[test]
    fn unsupported_cones() {
        assert!(matches!(Cone::of(&PriorSet::L1Ball(1.0), 3), Err(Error::Unsupported(_))));
        assert!(matches!(
            Cone::of(&PriorSet::Box { lo: 0.0, hi: 1.0 }, 3),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn supports_enumerated() {
        let mut n = 0;
        for_each_support(6, 3, |s| {
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            n += 1;
        });
        assert_eq!(n, 20);
        let mut full = 0;
        for_each_support(4, 4, |_| full += 1);
        assert_eq!(full, 1);
    }

    #[test]
    fn cross_term_vanishes_for_unit_weights() {
        for s in [1e-3, 1.0, 10.0, 1e6] {
            assert_eq!(cross_term_diagonal(1.0, s), 0.0);
        }
        for (w, s) in [(0.5, 2.0), (3.0, 0.7)] {
            let inv = 1.0 / (1.0 + w / s);
            assert!((cross_term_diagonal(w, s) - inv * (1.0 - w)).abs() < 1e-14);
        }
    }

    #[test]
    fn delta_reductions() {
        let op = dense(2, 2, vec![2.0, 0.0, 0.0, 1.0], 1);
        assert_eq!(estimate_delta(&op, &[0.0, 0.0], None, 0.3, &Cone::All).unwrap(), 0.0);
        let d = estimate_delta(&op, &[1.0, 1.0], None, 0.25, &Cone::All).unwrap();
        assert!((d - 0.5 * 5f64.sqrt()).abs() < 1e-14);
    }
}
