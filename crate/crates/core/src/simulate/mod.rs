//! Phantoms, noisy measurements, filtered back-projection and image metrics.

mod fbp;
mod measure;
mod metrics;
mod phantom;

pub use fbp::{fbp, fbp_transpose, fbp_values, ramp_kernel};
pub use measure::{poisson_sample, simulate_measurements, MeasurementSimConfig, NoiseMode};
pub use metrics::{image_metrics, psnr, ssim, MetricsRow};
pub use phantom::{disc, random_shepp_logan, shepp_logan, shepp_logan_with, Ellipse, SHEPP_LOGAN};
