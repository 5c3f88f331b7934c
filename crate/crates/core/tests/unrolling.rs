use unroll_core::nnet::subnet_forward;
use unroll_core::operators::{count_operator_calls, SubsetOperator};
use unroll_core::proximal::PriorSet;
use unroll_core::rng;
use unroll_core::simulate::{fbp_values, shepp_logan};
use unroll_core::unrolling::{
    pdhg_solve, unroll_backward, unroll_forward, DualStore, PrimalSlot, SubsetOrder, TomoSetup, UnrollConfig,
    UnrollParams, UnrollProblem, Variant,
};

fn small_config(variant: Variant, layers: usize) -> UnrollConfig {
    let mut c = UnrollConfig::new(variant, layers);
    c.hidden = 4;
    c
}

fn subsets_for(v: Variant) -> usize {
    if v.is_full_batch() {
        1
    } else {
        2
    }
}

struct Case {
    setup: TomoSetup,
    data: Vec<f64>,
    x0: Vec<f64>,
}

fn case(size: usize, angles: usize, m: usize, factor: usize) -> Case {
    let setup = TomoSetup::new(size, angles, m, factor).unwrap();
    let truth = shepp_logan(size);
    let mut data = setup.projector().apply(&truth.values);
    let mut r = rng::stream(77, 0);
    let noise = rng::normal_vec(&mut r, data.len());
    data.iter_mut().zip(noise).for_each(|(d, n)| *d += 0.01 * n);
    let x0 = fbp_values(&data, setup.projector());
    Case { setup, data, x0 }
}

fn linear_loss(problem: &UnrollProblem<'_>, config: &UnrollConfig, params: &UnrollParams, x0: &[f64], c: &[f64]) -> f64 {
    let t = unroll_forward(problem, config, params, x0, None).unwrap();
    t.output().iter().zip(c).map(|(a, b)| a * b).sum()
}

/// `‖fd − an‖ / ‖an‖` over a group of entries.
fn rel_err(fd: &[f64], an: &[f64]) -> f64 {
    let num: f64 = fd.iter().zip(an).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = an.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

fn central<F: FnMut(f64) -> f64>(mut f: F, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

/// Central differences on every parameter and on strided entries of the
/// data and of `x0`, for the loss `⟨c, x_K⟩`. The step is 1e-7: on these
/// instances some pre-activations sit within 1e-6 of the leaky-rectifier
/// kink, and a larger step straddles it.
fn check_gradients(config: &UnrollConfig, cs: &Case, params: &UnrollParams) {
    let problem = cs.setup.problem(&cs.data);
    let d = cs.setup.op.image_len();
    let mut r = rng::stream(5, 1);
    let c = rng::normal_vec(&mut r, d);
    let traj = unroll_forward(&problem, config, params, &cs.x0, None).unwrap();
    let g = unroll_backward(&problem, &traj, config, params, &c).unwrap();
    let h = 1e-7;
    let name = config.variant.name();

    let flat = params.to_flat();
    let mut p = params.clone();
    let fd: Vec<f64> = (0..flat.len())
        .map(|j| {
            central(
                |s| {
                    let mut f = flat.clone();
                    f[j] += s;
                    p.set_flat(&f).unwrap();
                    linear_loss(&problem, config, &p, &cs.x0, &c)
                },
                h,
            )
        })
        .collect();
    let e = rel_err(&fd, &g.params.to_flat());
    assert!(e <= 1e-5, "{name}: parameter gradient relative error {e}");

    let idx: Vec<usize> = (0..cs.data.len()).step_by(3).collect();
    let fd: Vec<f64> = idx
        .iter()
        .map(|&j| {
            central(
                |s| {
                    let mut b = cs.data.clone();
                    b[j] += s;
                    linear_loss(&cs.setup.problem(&b), config, params, &cs.x0, &c)
                },
                h,
            )
        })
        .collect();
    let an: Vec<f64> = idx.iter().map(|&j| g.data[j]).collect();
    let e = rel_err(&fd, &an);
    assert!(e <= 1e-5, "{name}: data gradient relative error {e}");

    let idx: Vec<usize> = (0..d).step_by(3).collect();
    let fd: Vec<f64> = idx
        .iter()
        .map(|&j| {
            central(
                |s| {
                    let mut x = cs.x0.clone();
                    x[j] += s;
                    linear_loss(&problem, config, params, &x, &c)
                },
                h,
            )
        })
        .collect();
    let an: Vec<f64> = idx.iter().map(|&j| g.x0[j]).collect();
    let e = rel_err(&fd, &an);
    assert!(e <= 1e-5, "{name}: x0 gradient relative error {e}");
}

#[test]
fn gradients_match_finite_differences_for_every_variant() {
    for v in Variant::ALL {
        let m = subsets_for(v);
        let config = small_config(v, 3);
        let cs = case(16, 8, m, config.factor);
        let mut params = UnrollParams::init(&config, &cs.setup.op, 3).unwrap();
        if v == Variant::Pdhg {
            params.beta = 0.7;
        }
        // Non-trivial weights so the weighted prox is exercised away from 1.
        let mut r = rng::stream(4, 4);
        for w in params.weights.iter_mut() {
            *w = rng::uniform_vec(&mut r, w.len(), 0.5, 2.0);
        }
        check_gradients(&config, &cs, &params);
    }
}

#[test]
fn gradients_with_prior_slot_and_per_subset_dual() {
    let mut config = small_config(Variant::SkLsgd, 3);
    config.primal_slot = PrimalSlot::Prior(PriorSet::Box { lo: -0.05, hi: 0.6 });
    let cs = case(16, 8, 2, 2);
    let params = UnrollParams::init(&config, &cs.setup.op, 1).unwrap();
    check_gradients(&config, &cs, &params);

    let mut config = small_config(Variant::Lspd, 4);
    config.dual_store = DualStore::PerSubset;
    let cs = case(16, 8, 2, 1);
    let params = UnrollParams::init(&config, &cs.setup.op, 2).unwrap();
    check_gradients(&config, &cs, &params);
}

#[test]
fn zero_cotangent_and_dead_parameters() {
    let cs = case(16, 8, 2, 1);
    let problem = cs.setup.problem(&cs.data);
    let config = small_config(Variant::Lsgd, 3);
    let params = UnrollParams::init(&config, &cs.setup.op, 0).unwrap();
    let traj = unroll_forward(&problem, &config, &params, &cs.x0, None).unwrap();
    let zero = unroll_backward(&problem, &traj, &config, &params, &vec![0.0; cs.x0.len()]).unwrap();
    assert!(zero.params.to_flat().iter().all(|&v| v == 0.0));
    assert!(zero.x0.iter().chain(&zero.data).all(|&v| v == 0.0));

    let ones = vec![1.0; cs.x0.len()];
    let g = unroll_backward(&problem, &traj, &config, &params, &ones).unwrap();
    // The residual dual slot never reads σ, and only PDHG extrapolates.
    assert!(g.params.sigma.iter().all(|&v| v == 0.0));
    assert_eq!(g.params.beta, 0.0);
    assert!(g.params.tau.iter().any(|&v| v != 0.0));
}

#[test]
fn lspd_with_one_subset_is_lpd() {
    let cs = case(16, 8, 1, 2);
    let problem = cs.setup.problem(&cs.data);
    let lpd = small_config(Variant::Lpd, 4);
    let params = UnrollParams::init(&lpd, &cs.setup.op, 9).unwrap();
    let a = unroll_forward(&problem, &lpd, &params, &cs.x0, None).unwrap();
    let lspd = small_config(Variant::Lspd, 4);
    let b = unroll_forward(&problem, &lspd, &params, &cs.x0, None).unwrap();
    assert_eq!(a.xs, b.xs);
    assert_eq!(a.ys, b.ys);
}

#[test]
fn unit_sketch_factor_is_unsketched() {
    let cs = case(16, 8, 2, 2);
    let problem = cs.setup.problem(&cs.data);
    let lspd = small_config(Variant::Lspd, 4);
    let params = UnrollParams::init(&lspd, &cs.setup.op, 10).unwrap();
    let base = unroll_forward(&problem, &lspd, &params, &cs.x0, None).unwrap();
    for v in [Variant::SkLspd1, Variant::SkLspd2] {
        let mut c = small_config(v, 4);
        c.factor = 1;
        let t = unroll_forward(&problem, &c, &params, &cs.x0, None).unwrap();
        assert_eq!(t.xs, base.xs, "{}", v.name());
        assert_eq!(count_operator_calls(&t.trace), count_operator_calls(&base.trace));
    }
    // Sketching changes the result.
    let sk = small_config(Variant::SkLspd1, 4);
    let t = unroll_forward(&problem, &sk, &params, &cs.x0, None).unwrap();
    assert_ne!(t.xs, base.xs);
}

#[test]
fn sklsgd_matches_hand_recursion() {
    let cs = case(16, 8, 4, 2);
    let problem = cs.setup.problem(&cs.data);
    let mut config = small_config(Variant::SkLsgd, 5);
    config.order = SubsetOrder::UniformRandom;
    config.seed = 3;
    let params = UnrollParams::init(&config, &cs.setup.op, 11).unwrap();
    let traj = unroll_forward(&problem, &config, &params, &cs.x0, None).unwrap();

    let op = &cs.setup.op;
    let coarse = cs.setup.coarse.as_ref().unwrap();
    let mut x = cs.x0.clone();
    for (k, &i) in traj.subsets.iter().enumerate() {
        let bi = op.restrict(i, &cs.data);
        let sk = k < config.k_switch;
        let g = if sk {
            let xc = unroll_core::operators::downsample(&x, (16, 16), 2);
            let y: Vec<f64> = coarse.subset_forward(i, &xc).iter().zip(&bi).map(|(a, b)| a - b).collect();
            unroll_core::operators::upsample(&coarse.subset_adjoint(i, &y), (8, 8), 2)
        } else {
            let y: Vec<f64> = op.subset_forward(i, &x).iter().zip(&bi).map(|(a, b)| a - b).collect();
            op.subset_adjoint(i, &y)
        };
        let v: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - params.tau[k] * b).collect();
        x = subnet_forward(&params.primal[0], &v, (16, 16)).unwrap().0;
        assert_eq!(x, traj.xs[k + 1], "layer {k}");
    }
}

#[test]
fn lsgd_dual_is_the_subset_residual() {
    let cs = case(16, 8, 2, 1);
    let problem = cs.setup.problem(&cs.data);
    let config = small_config(Variant::Lsgd, 3);
    let params = UnrollParams::init(&config, &cs.setup.op, 12).unwrap();
    let traj = unroll_forward(&problem, &config, &params, &cs.x0, None).unwrap();
    for (k, rec) in traj.layers.iter().enumerate() {
        let z = cs.setup.op.subset_forward(rec.subset, &traj.xs[k]);
        let b = cs.setup.op.restrict(rec.subset, &cs.data);
        let want: Vec<f64> = z.iter().zip(&b).map(|(a, b)| a - b).collect();
        assert_eq!(rec.y_next, want);
    }
}

#[test]
fn operator_call_counts_follow_the_closed_forms() {
    let expect = [(Variant::Lpd, 1, 24.0), (Variant::Lspd, 4, 6.0), (Variant::SkLspd1, 4, 4.0), (Variant::SkLspd2, 4, 4.0)];
    for (v, m, calls) in expect {
        let config = small_config(v, 12);
        let cs = case(16, 8, m, config.factor);
        let problem = cs.setup.problem(&cs.data);
        let params = UnrollParams::init(&config, &cs.setup.op, 0).unwrap();
        let t = unroll_forward(&problem, &config, &params, &cs.x0, None).unwrap();
        assert_eq!(count_operator_calls(&t.trace), calls, "{}", v.name());
    }
}

#[test]
fn forward_is_deterministic() {
    let cs = case(16, 8, 2, 2);
    let problem = cs.setup.problem(&cs.data);
    let mut config = small_config(Variant::SkLspdLw, 4);
    config.order = SubsetOrder::UniformRandom;
    config.seed = 99;
    let params = UnrollParams::init(&config, &cs.setup.op, 0).unwrap();
    let a = unroll_forward(&problem, &config, &params, &cs.x0, None).unwrap();
    let b = unroll_forward(&problem, &config, &params, &cs.x0, None).unwrap();
    assert_eq!(a.xs, b.xs);
    assert_eq!(a.subsets, b.subsets);
}

#[test]
fn configuration_errors() {
    let cs = case(16, 8, 2, 1);
    let problem = cs.setup.problem(&cs.data);
    let lpd = small_config(Variant::Lpd, 2);
    assert!(UnrollParams::init(&lpd, &cs.setup.op, 0).is_err());
    let lspd = small_config(Variant::Lspd, 2);
    let params = UnrollParams::init(&lspd, &cs.setup.op, 0).unwrap();
    // Sketched layers without a coarse operator.
    let sk = small_config(Variant::SkLspd1, 2);
    assert!(unroll_forward(&problem, &sk, &params, &cs.x0, None).is_err());
    // Wrong parameter structure.
    let lsgd = small_config(Variant::Lsgd, 2);
    assert!(unroll_forward(&problem, &lsgd, &params, &cs.x0, None).is_err());
    let mut bad = params.clone();
    bad.tau[0] = -1.0;
    assert!(unroll_forward(&problem, &lspd, &bad, &cs.x0, None).is_err());
}

#[test]
fn pdhg_scalar_recursion() {
    use unroll_core::operators::{DenseSubsetOperator, SubsetScheme};
    let op = DenseSubsetOperator::new(1, 1, vec![1.0], SubsetScheme::interleaved(1, 1).unwrap()).unwrap();
    let t = pdhg_solve(&op, &[1.0], |v, _| v.to_vec(), &[1.0], 1.0, 1.0, 0.0, 2, &[0.0]).unwrap();
    assert_eq!(t.xs[1], vec![0.5]);
    assert_eq!(t.xs[2], vec![1.0]);

    // The engine's PDHG variant with the identity prior gives the same numbers.
    let mut config = UnrollConfig::new(Variant::Pdhg, 2);
    config.primal_slot = PrimalSlot::Prior(PriorSet::All);
    let mut params = UnrollParams::init(&config, &op, 0).unwrap();
    params.tau = vec![1.0; 2];
    params.sigma = vec![1.0; 2];
    params.beta = 0.0;
    let traj = unroll_forward(&UnrollProblem::new(&op, &[1.0]), &config, &params, &[0.0], None).unwrap();
    assert_eq!(traj.xs, t.xs);
}

#[test]
fn pdhg_fixed_point_and_lasso() {
    use unroll_core::operators::{DenseSubsetOperator, SubsetScheme};
    use unroll_core::proximal::soft_threshold;
    let mut r = rng::stream(31, 0);
    let (n, d) = (16, 8);
    let a = rng::normal_vec(&mut r, n * d);
    let op = DenseSubsetOperator::new(n, d, a.clone(), SubsetScheme::interleaved(n, 1).unwrap()).unwrap();
    let x_feas = rng::normal_vec(&mut r, d);
    let b = op.forward(&x_feas);
    let ones = vec![1.0; n];
    let still = pdhg_solve(&op, &b, |v, _| v.to_vec(), &ones, 0.05, 0.05, 1.0, 20, &x_feas).unwrap();
    for x in &still.xs {
        assert_eq!(x, &x_feas);
    }

    // min ½‖Ax − b‖² + λ‖x‖₁ against long-run proximal gradient.
    let lambda = 0.5;
    let b: Vec<f64> = b.iter().zip(rng::normal_vec(&mut r, n)).map(|(a, e)| a + 0.1 * e).collect();
    let norm = unroll_core::unrolling::subset_lipschitz(&op, 200, 0) * n as f64;
    let step = 1.0 / norm;
    let mut x = vec![0.0; d];
    for _ in 0..20_000 {
        let res: Vec<f64> = op.forward(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
        let g = op.adjoint(&res);
        let v: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x - step * g).collect();
        x = soft_threshold(&v, step * lambda);
    }
    let s = 0.99 / norm.sqrt();
    let t = pdhg_solve(&op, &b, |v, tau| soft_threshold(v, tau * lambda), &ones, s, s, 1.0, 20_000, &vec![0.0; d]).unwrap();
    assert!(t.step_product <= 1.0);
    let err = t.output().iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
}


