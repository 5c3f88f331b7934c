//! Flat `key=value` experiment configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use unroll_core::io::{format_sidecar, parse_sidecar};
use unroll_core::proximal::PriorSet;
use unroll_core::simulate::{MeasurementSimConfig, NoiseMode};
use unroll_core::unrolling::{DualStore, PrimalSlot, SubsetOrder, UnrollConfig, Variant};
use unroll_core::{Error, Result};

/// Every accepted key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("geometry.size", "32"),
    ("geometry.angles", "32"),
    ("geometry.subsets", "4"),
    ("phantom.kind", "shepp_logan"),
    ("dataset.size", "4"),
    ("sim.i0", "70000"),
    ("sim.noise", "poisson"),
    ("sim.dump_matrix", "false"),
    ("unroll.variant", "lspd"),
    ("unroll.layers", "6"),
    ("unroll.factor", "auto"),
    ("unroll.k_switch", "auto"),
    ("unroll.order", "cyclic"),
    ("unroll.dual_store", "shared"),
    ("unroll.primal", "learned"),
    ("unroll.hidden", "8"),
    ("unroll.conv_layers", "2"),
    ("unroll.kernel", "3"),
    ("unroll.shared_weights", "false"),
    ("train.epochs", "2"),
    ("train.lr", "0.001"),
    ("train.shuffle", "true"),
    ("adapt.lambda", "1"),
    ("adapt.steps", "30"),
    ("adapt.lr", "0.001"),
    ("adapt.i0", "7000"),
    ("theory.instance", "stacked_orthogonal"),
    ("theory.dim", "8"),
    ("theory.rows", "16"),
    ("theory.subsets", "2"),
    ("theory.sparsity", "1"),
    ("theory.prior", "sparse"),
    ("theory.variant", "sklsgd"),
    ("theory.layers", "4"),
    ("theory.runs", "200"),
    ("theory.gamma", "0.5"),
    ("theory.noise", "0"),
    ("input.sinogram", ""),
    ("input.reference", ""),
    ("metrics.recon", ""),
    ("metrics.reference", ""),
    ("output.dir", "out"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phantom {
    SheppLogan,
    Random,
    Disc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TheoryInstanceKind {
    StackedOrthogonal,
    Gaussian,
    Line,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    /// Resolved string values, the source of the echoed config.
    pub raw: BTreeMap<String, String>,
    pub seed: u64,
    pub size: usize,
    pub angles: usize,
    pub subsets: usize,
    pub phantom: Phantom,
    pub dataset_size: usize,
    pub sim: MeasurementSimConfig,
    pub dump_matrix: bool,
    pub unroll: UnrollConfig,
    pub epochs: usize,
    pub lr: f64,
    pub shuffle: bool,
    pub adapt_lambda: f64,
    pub adapt_steps: usize,
    pub adapt_lr: f64,
    pub adapt_i0: f64,
    pub theory_instance: TheoryInstanceKind,
    pub theory_dim: usize,
    pub theory_rows: usize,
    pub theory_subsets: usize,
    pub theory_sparsity: usize,
    pub theory_prior: String,
    pub theory_variant: Variant,
    pub theory_layers: usize,
    pub theory_runs: usize,
    pub theory_gamma: f64,
    pub theory_noise: f64,
    pub input_sinogram: Option<PathBuf>,
    pub input_reference: Option<PathBuf>,
    pub metrics_recon: Option<PathBuf>,
    pub metrics_reference: Option<PathBuf>,
    pub out: PathBuf,
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value {value:?} for {key}"))
}

fn num<T: FromStr>(raw: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = &raw[key];
    v.parse().map_err(|_| bad(key, v))
}

fn flag(raw: &BTreeMap<String, String>, key: &str) -> Result<bool> {
    match raw[key].as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        v => Err(bad(key, v)),
    }
}

fn path(raw: &BTreeMap<String, String>, key: &str) -> Option<PathBuf> {
    let v = &raw[key];
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn auto(raw: &BTreeMap<String, String>, key: &str) -> Result<Option<usize>> {
    match raw[key].as_str() {
        "auto" => Ok(None),
        _ => num(raw, key).map(Some),
    }
}

fn primal_slot(v: &str) -> Result<PrimalSlot> {
    let key = "unroll.primal";
    let slot = match v.split_once(':') {
        None => match v {
            "learned" => PrimalSlot::Learned,
            "all" => PrimalSlot::Prior(PriorSet::All),
            "nonneg" => PrimalSlot::Prior(PriorSet::Box { lo: 0.0, hi: f64::INFINITY }),
            "unit_box" => PrimalSlot::Prior(PriorSet::Box { lo: 0.0, hi: 1.0 }),
            _ => return Err(bad(key, v)),
        },
        Some(("sparse", s)) => PrimalSlot::Prior(PriorSet::SparseSet(s.parse().map_err(|_| bad(key, v))?)),
        Some(("l1", r)) => PrimalSlot::Prior(PriorSet::L1Ball(r.parse().map_err(|_| bad(key, v))?)),
        _ => return Err(bad(key, v)),
    };
    Ok(slot)
}

impl Experiment {
    /// Defaults overridden by `text`; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let entries = parse_sidecar(text).map_err(|e| match e {
            Error::Format(m) => Error::Config(m),
            other => other,
        })?;
        for (k, v) in entries {
            match raw.get_mut(&k) {
                Some(slot) => *slot = v,
                None => return Err(Error::Config(format!("unknown key {k:?}"))),
            }
        }
        Self::resolve(raw)
    }

    pub fn with_seed(self, seed: u64) -> Result<Self> {
        let mut raw = self.raw;
        raw.insert("seed".into(), seed.to_string());
        Self::resolve(raw)
    }

    pub fn with_out(self, dir: &str) -> Result<Self> {
        let mut raw = self.raw;
        raw.insert("output.dir".into(), dir.to_string());
        Self::resolve(raw)
    }

    /// The resolved configuration in the input format.
    pub fn echo(&self) -> String {
        format_sidecar(&self.raw)
    }

    fn resolve(raw: BTreeMap<String, String>) -> Result<Self> {
        let seed: u64 = num(&raw, "seed")?;
        let variant = Variant::parse(&raw["unroll.variant"])?;
        let layers: usize = num(&raw, "unroll.layers")?;
        let mut unroll = UnrollConfig::new(variant, layers);
        if let Some(f) = auto(&raw, "unroll.factor")? {
            unroll.factor = f;
        }
        if let Some(k) = auto(&raw, "unroll.k_switch")? {
            unroll.k_switch = k;
        }
        unroll.seed = seed;
        unroll.order = match raw["unroll.order"].as_str() {
            "cyclic" => SubsetOrder::Cyclic,
            "random" => SubsetOrder::UniformRandom,
            v => return Err(bad("unroll.order", v)),
        };
        unroll.dual_store = match raw["unroll.dual_store"].as_str() {
            "shared" => DualStore::Shared,
            "per_subset" => DualStore::PerSubset,
            v => return Err(bad("unroll.dual_store", v)),
        };
        unroll.primal_slot = primal_slot(&raw["unroll.primal"])?;
        unroll.hidden = num(&raw, "unroll.hidden")?;
        unroll.conv_layers = num(&raw, "unroll.conv_layers")?;
        unroll.kernel = num(&raw, "unroll.kernel")?;
        unroll.shared_weights = flag(&raw, "unroll.shared_weights")?;

        let subsets: usize = num(&raw, "geometry.subsets")?;
        let subsets = if variant.is_full_batch() { 1 } else { subsets };
        unroll.validate(subsets)?;

        let phantom = match raw["phantom.kind"].as_str() {
            "shepp_logan" => Phantom::SheppLogan,
            "random" => Phantom::Random,
            "disc" => Phantom::Disc,
            v => return Err(bad("phantom.kind", v)),
        };
        let noise = match raw["sim.noise"].as_str() {
            "poisson" => NoiseMode::Poisson,
            "none" => NoiseMode::None,
            v => return Err(bad("sim.noise", v)),
        };
        let sim = MeasurementSimConfig {
            i0: num(&raw, "sim.i0")?,
            noise,
            seed,
        };
        let theory_instance = match raw["theory.instance"].as_str() {
            "stacked_orthogonal" => TheoryInstanceKind::StackedOrthogonal,
            "gaussian" => TheoryInstanceKind::Gaussian,
            "line" => TheoryInstanceKind::Line,
            v => return Err(bad("theory.instance", v)),
        };
        let theory_prior = raw["theory.prior"].clone();
        if !matches!(theory_prior.as_str(), "sparse" | "all") {
            return Err(bad("theory.prior", &theory_prior));
        }
        let size: usize = num(&raw, "geometry.size")?;
        let angles: usize = num(&raw, "geometry.angles")?;
        if size < 2 || angles == 0 {
            return Err(Error::Config("geometry needs size >= 2 and at least one angle".into()));
        }
        let exp = Self {
            seed,
            size,
            angles,
            subsets,
            phantom,
            dataset_size: num(&raw, "dataset.size")?,
            sim,
            dump_matrix: flag(&raw, "sim.dump_matrix")?,
            unroll,
            epochs: num(&raw, "train.epochs")?,
            lr: num(&raw, "train.lr")?,
            shuffle: flag(&raw, "train.shuffle")?,
            adapt_lambda: num(&raw, "adapt.lambda")?,
            adapt_steps: num(&raw, "adapt.steps")?,
            adapt_lr: num(&raw, "adapt.lr")?,
            adapt_i0: num(&raw, "adapt.i0")?,
            theory_instance,
            theory_dim: num(&raw, "theory.dim")?,
            theory_rows: num(&raw, "theory.rows")?,
            theory_subsets: num(&raw, "theory.subsets")?,
            theory_sparsity: num(&raw, "theory.sparsity")?,
            theory_prior,
            theory_variant: Variant::parse(&raw["theory.variant"])?,
            theory_layers: num(&raw, "theory.layers")?,
            theory_runs: num(&raw, "theory.runs")?,
            theory_gamma: num(&raw, "theory.gamma")?,
            theory_noise: num(&raw, "theory.noise")?,
            input_sinogram: path(&raw, "input.sinogram"),
            input_reference: path(&raw, "input.reference"),
            metrics_recon: path(&raw, "metrics.recon"),
            metrics_reference: path(&raw, "metrics.reference"),
            out: PathBuf::from(&raw["output.dir"]),
            raw,
        };
        if exp.adapt_lambda < 0.0 || exp.lr < 0.0 || exp.adapt_lr < 0.0 {
            return Err(Error::Config("learning rates and lambda must be non-negative".into()));
        }
        Ok(exp)
    }
}
