use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use unroll_core::io::{read_array, read_meta, write_array_with_meta, write_atomic, Array};
use unroll_core::operators::{count_operator_calls, DenseSubsetOperator, Image, SubsetScheme};
use unroll_core::par::Exec;
use unroll_core::proximal::{ManifoldPrior, PriorSet};
use unroll_core::rng;
use unroll_core::simulate::{disc, fbp_values, image_metrics, random_shepp_logan, shepp_logan, simulate_measurements, MeasurementSimConfig};
use unroll_core::theory::{gaussian_operator, lower_bound_check, sparse_vector, stacked_orthogonal, upper_bound_check, TheoryInstance};
use unroll_core::training::{adapt_instance, train, AdaptConfig, Dataset, TrainConfig};
use unroll_core::unrolling::{unroll_forward, PrimalSlot, TomoSetup, Trainable, UnrollConfig, UnrollParams};
use unroll_core::{Error, Result};

use crate::config::{Experiment, Phantom, TheoryInstanceKind};

pub const METRICS_HEADER: &str = "item_id,method,K,m,factor,calls,psnr_db,ssim,seed\n";

type Meta = BTreeMap<String, String>;

fn setup(exp: &Experiment) -> Result<TomoSetup> {
    TomoSetup::new(exp.size, exp.angles, exp.subsets, exp.unroll.factor)
}

fn pixel(exp: &Experiment) -> f64 {
    2.0 / exp.size as f64
}

fn phantom(exp: &Experiment) -> Image {
    match exp.phantom {
        Phantom::SheppLogan => shepp_logan(exp.size),
        Phantom::Random => random_shepp_logan(exp.size, &mut rng::stream(exp.seed, 1)),
        Phantom::Disc => disc(exp.size, 0.5, 1.0),
    }
}

fn base_meta(exp: &Experiment) -> Meta {
    exp.raw
        .iter()
        .filter(|(k, _)| k.starts_with("geometry.") || k.starts_with("unroll.") || k.as_str() == "seed")
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

fn with(mut meta: Meta, entries: &[(&str, String)]) -> Meta {
    for (k, v) in entries {
        meta.insert(k.to_string(), v.clone());
    }
    meta
}

fn write_image(path: &Path, exp: &Experiment, values: Vec<f64>, meta: Meta) -> Result<()> {
    let a = Array::new(vec![exp.size, exp.size], values)?;
    write_array_with_meta(path, &a, &with(meta, &[("kind", "image".into())]))
}

fn write_sinogram(path: &Path, exp: &Experiment, values: Vec<f64>, meta: Meta) -> Result<()> {
    let n_det = values.len() / exp.angles;
    let a = Array::new(vec![exp.angles, n_det], values)?;
    write_array_with_meta(path, &a, &with(meta, &[("kind", "sinogram".into())]))
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contains non-finite values")))
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn start(exp: &Experiment) -> Result<()> {
    write_atomic(&exp.out.join("config.resolved"), exp.echo().as_bytes())
}

fn image(exp: &Experiment, values: Vec<f64>) -> Result<Image> {
    Image::from_values(exp.size, exp.size, pixel(exp), values)
}

fn metrics_row(id: usize, method: &str, exp: &Experiment, calls: Option<f64>, x: &[f64], reference: &[f64]) -> Result<String> {
    let m = image_metrics(&image(exp, x.to_vec())?, &image(exp, reference.to_vec())?)?;
    let calls = calls.map(|c| c.to_string()).unwrap_or_default();
    Ok(format!(
        "{id},{method},{},{},{},{calls},{},{},{}\n",
        exp.unroll.layers, exp.subsets, exp.unroll.factor, m.psnr, m.ssim, exp.seed
    ))
}

/// Measurement `b` and, when known, the ground truth.
fn measurement(exp: &Experiment, setup: &TomoSetup, sim: &MeasurementSimConfig) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let reference = match &exp.input_reference {
        Some(p) => Some(read_array(p)?.data),
        None => None,
    };
    if let Some(p) = &exp.input_sinogram {
        let b = read_array(p)?.data;
        if b.len() != setup.projector().n_rows() {
            return Err(Error::Dimension {
                context: "input sinogram",
                expected: setup.projector().n_rows(),
                got: b.len(),
            });
        }
        return Ok((b, reference));
    }
    let truth = phantom(exp);
    let (_, b) = simulate_measurements(&truth, setup.projector(), sim)?;
    Ok((b.values, reference.or(Some(truth.values))))
}

pub fn simulate(exp: &Experiment) -> Result<()> {
    start(exp)?;
    let setup = setup(exp)?;
    let truth = phantom(exp);
    let (counts, b) = simulate_measurements(&truth, setup.projector(), &exp.sim)?;
    let x_fbp = fbp_values(&b.values, setup.projector());
    let meta = with(
        base_meta(exp),
        &[("sim.i0", exp.raw["sim.i0"].clone()), ("sim.noise", exp.raw["sim.noise"].clone())],
    );
    let dir = &exp.out;
    write_image(&dir.join("phantom.bin"), exp, truth.values, meta.clone())?;
    write_sinogram(&dir.join("counts.bin"), exp, counts.values, meta.clone())?;
    write_sinogram(&dir.join("sinogram.bin"), exp, b.values, meta.clone())?;
    write_image(&dir.join("fbp.bin"), exp, x_fbp, meta.clone())?;
    if exp.dump_matrix {
        let p = setup.projector();
        let a = Array::new(vec![p.n_rows(), p.n_cols()], p.to_dense())?;
        write_array_with_meta(&dir.join("matrix.bin"), &a, &with(meta, &[("kind", "matrix".into())]))?;
    }
    Ok(())
}

fn checkpoint_meta(exp: &Experiment, params: &UnrollParams) -> Meta {
    with(
        base_meta(exp),
        &[("kind", "checkpoint".into()), ("n_params", params.n_params().to_string())],
    )
}

fn save_checkpoint(path: &Path, exp: &Experiment, params: &UnrollParams) -> Result<()> {
    write_array_with_meta(path, &Array::vector(params.to_flat()), &checkpoint_meta(exp, params))
}

/// Fresh parameters, or those of `checkpoint` when it matches the architecture.
fn load_params(exp: &Experiment, setup: &TomoSetup, checkpoint: Option<&Path>) -> Result<UnrollParams> {
    let mut params = UnrollParams::init(&exp.unroll, &setup.op, exp.seed)?;
    if let Some(path) = checkpoint {
        let arr = read_array(path)?;
        let meta = read_meta(path)?;
        if meta.get("unroll.variant") != exp.raw.get("unroll.variant") {
            return Err(Error::Config("checkpoint was trained for a different variant".into()));
        }
        if arr.data.len() != params.n_params() {
            return Err(Error::Config(format!(
                "checkpoint holds {} parameters, architecture needs {}",
                arr.data.len(),
                params.n_params()
            )));
        }
        params.set_flat(&arr.data)?;
    }
    Ok(params)
}

pub fn reconstruct(exp: &Experiment, checkpoint: Option<&Path>) -> Result<()> {
    start(exp)?;
    let setup = setup(exp)?;
    let (b, reference) = measurement(exp, &setup, &exp.sim)?;
    let params = load_params(exp, &setup, checkpoint)?;
    let x0 = fbp_values(&b, setup.projector());
    let traj = unroll_forward(&setup.problem(&b), &exp.unroll, &params, &x0, None)?;
    let x = traj.output().to_vec();
    check_finite("reconstruction", &x)?;
    let calls = count_operator_calls(&traj.trace);

    let mut csv = String::from("layer,subset,sketched,residual,error\n");
    for (k, xk) in traj.xs.iter().enumerate() {
        let residual = norm_diff(&setup.projector().apply(xk), &b);
        let error = reference.as_ref().map(|r| norm_diff(xk, r).to_string()).unwrap_or_default();
        let (subset, sketched) = match k.checked_sub(1).map(|j| &traj.layers[j]) {
            Some(l) => (l.subset.to_string(), l.sketched.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(csv, "{k},{subset},{sketched},{residual},{error}").expect("string write");
    }

    let method = exp.unroll.variant.name();
    let meta = with(
        base_meta(exp),
        &[
            ("method", method.into()),
            ("calls", calls.to_string()),
            ("K", exp.unroll.layers.to_string()),
            ("m", exp.subsets.to_string()),
            ("factor", exp.unroll.factor.to_string()),
        ],
    );
    let dir = &exp.out;
    write_image(&dir.join("recon.bin"), exp, x.clone(), meta.clone())?;
    write_atomic(&dir.join("layers.csv"), csv.as_bytes())?;
    let summary: Meta = [
        ("method", method.to_string()),
        ("layers", exp.unroll.layers.to_string()),
        ("subsets", exp.subsets.to_string()),
        ("factor", exp.unroll.factor.to_string()),
        ("calls", calls.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    write_atomic(&dir.join("calls.txt"), unroll_core::io::format_sidecar(&summary).as_bytes())?;
    if let Some(r) = reference {
        let mut m = String::from(METRICS_HEADER);
        m.push_str(&metrics_row(0, "fbp", exp, None, &x0, &r)?);
        m.push_str(&metrics_row(0, method, exp, Some(calls), &x, &r)?);
        write_atomic(&dir.join("metrics.csv"), m.as_bytes())?;
    }
    Ok(())
}

pub fn train_cmd(exp: &Experiment, checkpoint: Option<&Path>) -> Result<()> {
    start(exp)?;
    let setup = setup(exp)?;
    let dataset = Dataset::shepp_logan(&setup, exp.dataset_size, &exp.sim)?;
    let init = load_params(exp, &setup, checkpoint)?;
    let tc = TrainConfig {
        epochs: exp.epochs,
        lr: exp.lr,
        seed: exp.seed,
        trainable: Trainable::ALL,
        shuffle: exp.shuffle,
    };
    let problem = setup.problem(&dataset.items[0].data);
    let res = train(&problem, &dataset, &exp.unroll, init, &tc)?;
    check_finite("trained parameters", &res.params.to_flat())?;

    let mut loss = String::from("epoch,item,loss\n");
    for r in &res.records {
        writeln!(loss, "{},{},{}", r.epoch, r.item, r.loss).expect("string write");
    }
    let mut epochs = String::from("epoch,mean_loss\n");
    for (e, l) in res.epoch_losses.iter().enumerate() {
        writeln!(epochs, "{e},{l}").expect("string write");
    }
    save_checkpoint(&exp.out.join("checkpoint.bin"), exp, &res.params)?;
    write_atomic(&exp.out.join("loss.csv"), loss.as_bytes())?;
    write_atomic(&exp.out.join("epoch_loss.csv"), epochs.as_bytes())
}

pub fn adapt_cmd(exp: &Experiment, checkpoint: Option<&Path>) -> Result<()> {
    start(exp)?;
    let setup = setup(exp)?;
    let sim = MeasurementSimConfig {
        i0: exp.adapt_i0,
        ..exp.sim
    };
    let (b, reference) = measurement(exp, &setup, &sim)?;
    let params = load_params(exp, &setup, checkpoint)?;
    let ac = AdaptConfig {
        lambda: exp.adapt_lambda,
        steps: exp.adapt_steps,
        lr: exp.adapt_lr,
        trainable: Trainable::ALL,
    };
    let before = {
        let x0 = fbp_values(&b, setup.projector());
        unroll_forward(&setup.problem(&b), &exp.unroll, &params, &x0, None)?
    };
    let res = adapt_instance(&setup, &b, &exp.unroll, &params, &ac)?;
    check_finite("adapted reconstruction", &res.x_a)?;

    let mut obj = String::from("step,objective\n");
    for (k, v) in res.objective.iter().enumerate() {
        writeln!(obj, "{k},{v}").expect("string write");
    }
    let dir = &exp.out;
    save_checkpoint(&dir.join("adapted.bin"), exp, &res.params)?;
    write_atomic(&dir.join("objective.csv"), obj.as_bytes())?;
    write_image(
        &dir.join("adapted_recon.bin"),
        exp,
        res.x_a.clone(),
        with(base_meta(exp), &[("method", "adapted".into())]),
    )?;
    if let Some(r) = reference {
        let calls = count_operator_calls(&before.trace);
        let mut m = String::from(METRICS_HEADER);
        m.push_str(&metrics_row(0, exp.unroll.variant.name(), exp, Some(calls), before.output(), &r)?);
        m.push_str(&metrics_row(0, "adapted", exp, Some(calls), &res.x_a, &r)?);
        write_atomic(&dir.join("metrics.csv"), m.as_bytes())?;
    }
    Ok(())
}

fn theory_prior(exp: &Experiment) -> PriorSet {
    match exp.theory_prior.as_str() {
        "all" => PriorSet::All,
        _ => PriorSet::SparseSet(exp.theory_sparsity),
    }
}

pub fn verify(exp: &Experiment) -> Result<()> {
    start(exp)?;
    let d = exp.theory_dim;
    let (op, x_true, x0, prior) = match exp.theory_instance {
        TheoryInstanceKind::StackedOrthogonal => (
            stacked_orthogonal(d, 1.0, exp.seed)?,
            sparse_vector(d, exp.theory_sparsity, exp.seed),
            vec![0.0; d],
            theory_prior(exp),
        ),
        TheoryInstanceKind::Gaussian => (
            gaussian_operator(exp.theory_rows, d, exp.theory_subsets, exp.seed)?,
            sparse_vector(d, exp.theory_sparsity, exp.seed),
            vec![0.0; d],
            theory_prior(exp),
        ),
        TheoryInstanceKind::Line => {
            let op = DenseSubsetOperator::new(2, 2, vec![2.0, 0.0, 0.0, 1.0], SubsetScheme::contiguous(2, 1)?)?;
            let x_true = vec![0.5, -0.25];
            let line = PriorSet::Subspace {
                basis: vec![vec![0.0, 1.0]],
                offset: x_true.clone(),
            };
            (op, x_true, vec![0.5, 0.75], line)
        }
    };
    let n_rows = op.n_rows();
    let mut r = rng::stream(exp.seed, 3);
    let noise: Vec<f64> = rng::normal_vec(&mut r, n_rows)
        .into_iter()
        .map(|v| exp.theory_noise * v)
        .collect();
    let inst = TheoryInstance {
        op: &op,
        coarse: None,
        x_true: &x_true,
        noise: &noise,
    };
    let mut config = UnrollConfig::new(exp.theory_variant, exp.theory_layers);
    config.factor = 1;
    config.seed = exp.seed;
    config.primal_slot = PrimalSlot::Prior(prior.clone());
    let params = UnrollParams::init(&config, &op, exp.seed)?;
    let manifold = ManifoldPrior::exact(prior);
    let exec = Exec::default();
    let report = match exp.theory_instance {
        TheoryInstanceKind::Line => lower_bound_check(
            &inst,
            &config,
            &params,
            &manifold,
            &x0,
            exp.theory_gamma,
            exp.theory_runs,
            exp.seed,
            exec,
        )?,
        _ => upper_bound_check(&inst, &config, &params, &manifold, &x0, exp.theory_runs, exp.seed, exec)?,
    };
    write_atomic(&exp.out.join("report.csv"), report.to_csv().as_bytes())?;
    write_atomic(&exp.out.join("summary.txt"), report.summary().as_bytes())
}

pub fn metrics(exp: &Experiment) -> Result<()> {
    start(exp)?;
    let missing = |what: &str| Error::Config(format!("metrics needs {what}"));
    let recon_path = exp.metrics_recon.as_ref().ok_or_else(|| missing("a reconstruction"))?;
    let ref_path = exp.metrics_reference.as_ref().ok_or_else(|| missing("a reference"))?;
    let (x, reference) = (read_array(recon_path)?, read_array(ref_path)?);
    let img = |a: &Array| -> Result<Image> {
        match a.dims[..] {
            [h, w] => Image::from_values(w, h, 2.0 / w as f64, a.data.clone()),
            _ => Err(Error::Format("metrics expects 2-d images".into())),
        }
    };
    let m = image_metrics(&img(&x)?, &img(&reference)?)?;
    let meta = read_meta(recon_path).unwrap_or_default();
    let get = |k: &str| meta.get(k).cloned().unwrap_or_default();
    let method = meta.get("method").cloned().unwrap_or_else(|| "unknown".into());
    let row = format!(
        "0,{method},{},{},{},{},{},{},{}\n",
        get("K"),
        get("m"),
        get("factor"),
        get("calls"),
        m.psnr,
        m.ssim,
        get("seed")
    );
    let out = format!("{METRICS_HEADER}{row}");
    write_atomic(&exp.out.join("metrics.csv"), out.as_bytes())
}
