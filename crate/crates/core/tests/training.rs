use unroll_core::proximal::PriorSet;
use unroll_core::rng;
use unroll_core::simulate::{fbp_values, shepp_logan, MeasurementSimConfig};
use unroll_core::training::{
    adaptation_objective, adapt_instance, supervised_loss, train, AdaptConfig, DataItem, Dataset, TrainConfig,
};
use unroll_core::unrolling::{PrimalSlot, TomoSetup, Trainable, UnrollConfig, UnrollParams, Variant};

fn rel_err(fd: &[f64], an: &[f64]) -> f64 {
    let num: f64 = fd.iter().zip(an).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = an.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

fn small(variant: Variant, layers: usize) -> UnrollConfig {
    let mut c = UnrollConfig::new(variant, layers);
    c.hidden = 4;
    c
}

fn noisy_item(setup: &TomoSetup, size: usize, scale: f64, seed: u64) -> DataItem {
    let truth = shepp_logan(size).values;
    let mut data = setup.projector().apply(&truth);
    let mut r = rng::stream(seed, 0);
    let noise = rng::normal_vec(&mut r, data.len());
    data.iter_mut().zip(noise).for_each(|(d, n)| *d += scale * n);
    let x0 = fbp_values(&data, setup.projector());
    DataItem { data, truth, x0 }
}

/// Central differences of `f` along every flat parameter.
fn flat_fd(params: &UnrollParams, h: f64, f: impl Fn(&UnrollParams) -> f64) -> Vec<f64> {
    let base = params.to_flat();
    (0..base.len())
        .map(|j| {
            let mut p = params.clone();
            let mut v = base.clone();
            v[j] = base[j] + h;
            p.set_flat(&v).unwrap();
            let up = f(&p);
            v[j] = base[j] - h;
            p.set_flat(&v).unwrap();
            (up - f(&p)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn supervised_gradient_matches_finite_differences() {
    let setup = TomoSetup::new(16, 8, 2, 1).unwrap();
    let item = noisy_item(&setup, 16, 0.01, 3);
    let problem = setup.problem(&item.data);
    for variant in [Variant::Lspd, Variant::Lsgd] {
        let config = small(variant, 2);
        let params = UnrollParams::init(&config, &setup.op, 4).unwrap();
        let (_, grads) = supervised_loss(&problem, &config, &params, &item).unwrap();
        let fd = flat_fd(&params, 1e-7, |p| supervised_loss(&problem, &config, p, &item).unwrap().0);
        let mut an = grads.to_flat();
        // β is unused outside the PDHG variant.
        an[2 * config.layers] = 0.0;
        let err = rel_err(&fd, &an);
        assert!(err <= 1e-5, "{} {err}", variant.name());
    }
}

#[test]
fn exact_recovery_gives_zero_loss_and_gradient() {
    let setup = TomoSetup::new(16, 8, 2, 1).unwrap();
    let truth = shepp_logan(16).values;
    let data = setup.projector().apply(&truth);
    let item = DataItem {
        data: data.clone(),
        x0: truth.clone(),
        truth,
    };
    let mut config = small(Variant::Lsgd, 3);
    config.primal_slot = PrimalSlot::Prior(PriorSet::All);
    let params = UnrollParams::init(&config, &setup.op, 1).unwrap();
    let (loss, grads) = supervised_loss(&setup.problem(&data), &config, &params, &item).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.to_flat().iter().all(|&g| g == 0.0));
}

fn lw_case() -> (TomoSetup, Dataset, UnrollConfig, UnrollParams) {
    let setup = TomoSetup::new(16, 8, 2, 2).unwrap();
    let dataset = Dataset::new(vec![noisy_item(&setup, 16, 0.01, 5)], (16, 16)).unwrap();
    let mut config = small(Variant::SkLspdLw, 4);
    config.primal_slot = PrimalSlot::Prior(PriorSet::Box { lo: 0.0, hi: 1.0 });
    let mut params = UnrollParams::init(&config, &setup.op, 2).unwrap();
    params.tau.iter_mut().for_each(|t| *t *= 0.2);
    (setup, dataset, config, params)
}

const STEPS_ONLY: Trainable = Trainable {
    steps: true,
    beta: false,
    primal: false,
    dual: false,
    weights: true,
};

#[test]
fn light_weight_training_halves_loss() {
    let (setup, dataset, config, params) = lw_case();
    let problem = setup.problem(&dataset.items[0].data);
    let tc = TrainConfig {
        epochs: 20,
        lr: 0.07,
        seed: 1,
        trainable: STEPS_ONLY,
        shuffle: false,
    };
    let res = train(&problem, &dataset, &config, params, &tc).unwrap();
    let l = &res.epoch_losses;
    assert!(l[19] <= 0.5 * l[0], "{l:?}");
    assert!(l.windows(2).all(|w| w[1] < w[0]), "{l:?}");
}

#[test]
fn zero_learning_rate_is_flat() {
    let (setup, dataset, config, params) = lw_case();
    let problem = setup.problem(&dataset.items[0].data);
    let tc = TrainConfig {
        epochs: 5,
        lr: 0.0,
        seed: 1,
        trainable: Trainable::ALL,
        shuffle: true,
    };
    let res = train(&problem, &dataset, &config, params.clone(), &tc).unwrap();
    assert_eq!(res.params, params);
    assert!(res.epoch_losses.iter().all(|&l| l == res.epoch_losses[0]));
}

#[test]
fn training_is_deterministic_and_order_free_at_zero_rate() {
    let setup = TomoSetup::new(16, 8, 2, 1).unwrap();
    let items = (0..3).map(|k| noisy_item(&setup, 16, 0.02, 10 + k)).collect();
    let dataset = Dataset::new(items, (16, 16)).unwrap();
    let problem = setup.problem(&dataset.items[0].data);
    let config = small(Variant::Lspd, 2);
    let params = UnrollParams::init(&config, &setup.op, 3).unwrap();
    let mut tc = TrainConfig {
        epochs: 2,
        lr: 1e-3,
        seed: 4,
        trainable: Trainable::ALL,
        shuffle: true,
    };
    let a = train(&problem, &dataset, &config, params.clone(), &tc).unwrap();
    let b = train(&problem, &dataset, &config, params.clone(), &tc).unwrap();
    assert_eq!(a.epoch_losses, b.epoch_losses);
    assert_eq!(a.params, b.params);

    tc.lr = 0.0;
    let shuffled = train(&problem, &dataset, &config, params.clone(), &tc).unwrap();
    tc.shuffle = false;
    let ordered = train(&problem, &dataset, &config, params, &tc).unwrap();
    for (x, y) in shuffled.epoch_losses.iter().zip(&ordered.epoch_losses) {
        assert!((x - y).abs() <= 1e-12 * y);
    }
}

#[test]
fn dataset_from_simulation_is_seeded() {
    let setup = TomoSetup::new(16, 8, 2, 1).unwrap();
    let sim = MeasurementSimConfig::poisson(7e4, 9);
    let a = Dataset::shepp_logan(&setup, 2, &sim).unwrap();
    let b = Dataset::shepp_logan(&setup, 2, &sim).unwrap();
    assert_eq!(a.items[1].data, b.items[1].data);
    assert_ne!(a.items[0].truth, a.items[1].truth);
}

#[test]
fn adaptation_gradient_matches_finite_differences() {
    let setup = TomoSetup::new(12, 8, 2, 1).unwrap();
    let item = noisy_item(&setup, 12, 0.02, 6);
    for variant in [Variant::Lspd, Variant::SkLspdLw] {
        let mut config = small(variant, 2);
        config.factor = 1;
        let params = UnrollParams::init(&config, &setup.op, 5).unwrap();
        let obj = adaptation_objective(&setup, &config, &params, &item.data, 0.7).unwrap();
        let fd = flat_fd(&params, 1e-6, |p| {
            adaptation_objective(&setup, &config, p, &item.data, 0.7).unwrap().value
        });
        let mut an = obj.grads.to_flat();
        an[2 * config.layers] = 0.0;
        let err = rel_err(&fd, &an);
        assert!(err <= 1e-4, "{} {err}", variant.name());
    }
}

#[test]
fn adaptation_decreases_objective() {
    let setup = TomoSetup::new(16, 8, 2, 1).unwrap();
    let item = noisy_item(&setup, 16, 0.05, 8);
    let config = small(Variant::Lspd, 3);
    let params = UnrollParams::init(&config, &setup.op, 6).unwrap();
    let adapt = AdaptConfig {
        steps: 30,
        ..AdaptConfig::default()
    };
    let res = adapt_instance(&setup, &item.data, &config, &params, &adapt).unwrap();
    assert_eq!(res.objective.len(), 31);
    assert!(res.objective[30] <= res.objective[0], "{:?}", res.objective);
    assert_eq!(res.x_a.len(), 256);
}

#[test]
fn adaptation_calls_scale_with_subsets() {
    let full = TomoSetup::new(16, 8, 1, 1).unwrap();
    let sub = TomoSetup::new(16, 8, 4, 1).unwrap();
    let b = full.projector().apply(&shepp_logan(16).values);
    let lpd = small(Variant::Lpd, 2);
    let lspd = small(Variant::Lspd, 2);
    let p1 = UnrollParams::init(&lpd, &full.op, 1).unwrap();
    let p4 = UnrollParams::init(&lspd, &sub.op, 1).unwrap();
    let c1 = adaptation_objective(&full, &lpd, &p1, &b, 1.0).unwrap().calls;
    let c4 = adaptation_objective(&sub, &lspd, &p4, &b, 1.0).unwrap().calls;
    assert!((c4 / c1 - 0.25).abs() < 1e-12);
}
