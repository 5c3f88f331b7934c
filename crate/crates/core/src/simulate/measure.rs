use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::operators::{forward, Image, Projector, Sinogram};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    Poisson,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementSimConfig {
    /// Source intensity in counts per ray.
    pub i0: f64,
    pub noise: NoiseMode,
    pub seed: u64,
}

impl MeasurementSimConfig {
    pub fn poisson(i0: f64, seed: u64) -> Self {
        Self {
            i0,
            noise: NoiseMode::Poisson,
            seed,
        }
    }

    pub fn noiseless() -> Self {
        Self {
            i0: 1.0,
            noise: NoiseMode::None,
            seed: 0,
        }
    }
}

/// Poisson draw: inversion below mean 50, rounded normal approximation above.
pub fn poisson_sample(rng: &mut Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < 50.0 {
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf && p > 0.0 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k as f64
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (mean + mean.sqrt() * z).round().max(0.0)
    }
}

/// Returns `(counts, b)` with `counts ~ Poisson(I₀·exp(−Ax))` and
/// `b = −ln(max(counts, 1)/I₀)`. Without noise `counts` holds the means and
/// `b = Ax` exactly.
pub fn simulate_measurements(x: &Image, projector: &Projector, config: &MeasurementSimConfig) -> Result<(Sinogram, Sinogram)> {
    if !(config.i0 > 0.0 && config.i0.is_finite()) {
        return Err(Error::Config("source intensity must be positive".into()));
    }
    let clean = forward(projector, x)?;
    let means: Vec<f64> = clean.values.iter().map(|&v| config.i0 * (-v).exp()).collect();
    let geometry = clean.geometry;
    match config.noise {
        NoiseMode::None => Ok((Sinogram::from_values(geometry, means)?, clean)),
        NoiseMode::Poisson => {
            let mut r = rng::stream(config.seed, 0);
            let counts: Vec<f64> = means.iter().map(|&m| poisson_sample(&mut r, m)).collect();
            let b = counts.iter().map(|&c| -(c.max(1.0) / config.i0).ln()).collect();
            Ok((Sinogram::from_values(geometry, counts)?, Sinogram::from_values(geometry, b)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_projector, Geometry, ImageGrid};
    use crate::simulate::shepp_logan;

    fn moments(mean: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut r = rng::stream(seed, 3);
        let xs: Vec<f64> = (0..n).map(|_| poisson_sample(&mut r, mean)).collect();
        let mu = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mu, var)
    }

    #[test]
    fn empirical_mean_within_three_sigma() {
        for &mean in &[3.0, 100.0, 7e4] {
            let n = 10_000;
            let (mu, _) = moments(mean, n, 1);
            let se = (mean / n as f64).sqrt();
            assert!((mu - mean).abs() <= 3.0 * se, "mean {mean}: got {mu}");
        }
    }

    #[test]
    fn variance_matches_mean() {
        for &mean in &[20.0, 100.0] {
            let (mu, var) = moments(mean, 10_000, 2);
            assert!((var / mu - 1.0).abs() < 0.05, "mean {mean}: var {var}, mu {mu}");
        }
    }

    #[test]
    fn inversion_matches_pmf() {
        // Frequency of each count against the exact probabilities.
        let mean = 2.5;
        let n = 200_000;
        let mut r = rng::stream(9, 0);
        let mut hist = [0usize; 12];
        for _ in 0..n {
            let k = poisson_sample(&mut r, mean) as usize;
            if k < hist.len() {
                hist[k] += 1;
            }
        }
        let mut p = (-mean).exp();
        for (k, &h) in hist.iter().enumerate() {
            if k > 0 {
                p *= mean / k as f64;
            }
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((h as f64 / n as f64 - p).abs() <= 4.0 * se + 1e-12, "k={k}");
        }
    }

    #[test]
    fn noiseless_mode_is_exact_forward() {
        let x = shepp_logan(16);
        let grid = ImageGrid::square(16, 2.0 / 16.0);
        let p = build_projector(&Geometry::covering(grid, 8).unwrap(), grid).unwrap();
        let (_, b) = simulate_measurements(&x, &p, &MeasurementSimConfig::noiseless()).unwrap();
        assert_eq!(b, forward(&p, &x).unwrap());
    }

    #[test]
    fn zero_image_gives_source_counts_and_same_seed_repeats() {
        let grid = ImageGrid::square(16, 2.0 / 16.0);
        let p = build_projector(&Geometry::covering(grid, 8).unwrap(), grid).unwrap();
        let x = Image::zeros(16, 16, grid.pixel_size);
        let cfg = MeasurementSimConfig::poisson(1e4, 5);
        let (c1, b1) = simulate_measurements(&x, &p, &cfg).unwrap();
        let (c2, b2) = simulate_measurements(&x, &p, &cfg).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(b1, b2);
        let n = c1.values.len() as f64;
        let mu = c1.values.iter().sum::<f64>() / n;
        assert!((mu - 1e4).abs() <= 3.0 * (1e4 / n).sqrt());
    }

    #[test]
    fn zero_counts_are_clamped() {
        let grid = ImageGrid::square(8, 0.25);
        let p = build_projector(&Geometry::covering(grid, 4).unwrap(), grid).unwrap();
        let x = Image::from_values(8, 8, 0.25, vec![50.0; 64]).unwrap();
        let (counts, b) = simulate_measurements(&x, &p, &MeasurementSimConfig::poisson(10.0, 1)).unwrap();
        for (c, v) in counts.values.iter().zip(&b.values) {
            assert!(v.is_finite());
            if *c == 0.0 {
                assert_eq!(*v, -(1.0f64 / 10.0).ln());
            }
        }
    }
}
