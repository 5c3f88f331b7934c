use crate::error::{Error, Result};
use crate::operators::Image;
use crate::rng;
use crate::simulate::{fbp_values, random_shepp_logan, simulate_measurements, MeasurementSimConfig};
use crate::unrolling::TomoSetup;

/// One training pair with its FBP initialisation.
#[derive(Clone, Debug, PartialEq)]
pub struct DataItem {
    pub data: Vec<f64>,
    pub truth: Vec<f64>,
    pub x0: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub items: Vec<DataItem>,
    pub image_shape: (usize, usize),
}

impl Dataset {
    pub fn new(items: Vec<DataItem>, image_shape: (usize, usize)) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Config("dataset needs at least one item".into()));
        }
        let d = image_shape.0 * image_shape.1;
        if items.iter().any(|it| it.truth.len() != d || it.x0.len() != d) {
            return Err(Error::Config("dataset items disagree on image size".into()));
        }
        let n = items[0].data.len();
        if items.iter().any(|it| it.data.len() != n) {
            return Err(Error::Config("dataset items disagree on measurement size".into()));
        }
        Ok(Self { items, image_shape })
    }

    /// Builds items from ground-truth images: simulated measurements and
    /// their FBP.
    pub fn from_images(setup: &TomoSetup, images: &[Image], sim: &MeasurementSimConfig) -> Result<Self> {
        let items = images
            .iter()
            .enumerate()
            .map(|(k, img)| {
                let cfg = MeasurementSimConfig {
                    seed: sim.seed.wrapping_add(k as u64),
                    ..*sim
                };
                let (_, b) = simulate_measurements(img, setup.projector(), &cfg)?;
                let x0 = fbp_values(&b.values, setup.projector());
                Ok(DataItem {
                    data: b.values,
                    truth: img.values.clone(),
                    x0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(items, (setup.grid.height, setup.grid.width))
    }

    /// `n` random Shepp-Logan variants with Poisson noise.
    pub fn shepp_logan(setup: &TomoSetup, n: usize, sim: &MeasurementSimConfig) -> Result<Self> {
        let mut r = rng::stream(sim.seed, 0x9a7);
        let images: Vec<Image> = (0..n).map(|_| random_shepp_logan(setup.grid.width, &mut r)).collect();
        Self::from_images(setup, &images, sim)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}
