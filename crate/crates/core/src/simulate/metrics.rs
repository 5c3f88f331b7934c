use crate::error::{check_len, Error, Result};
use crate::operators::Image;

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub psnr: f64,
    pub ssim: f64,
    pub data_range: f64,
}

fn check_pair(x: &Image, reference: &Image) -> Result<()> {
    if (x.width, x.height) != (reference.width, reference.height) {
        return Err(Error::Config(format!(
            "image {}x{} compared against reference {}x{}",
            x.width, x.height, reference.width, reference.height
        )));
    }
    check_len("image values", reference.values.len(), x.values.len())
}

/// `10·log₁₀(range²/MSE)`; `+∞` when the images coincide.
pub fn psnr(x: &Image, reference: &Image, range: f64) -> Result<f64> {
    check_pair(x, reference)?;
    if range <= 0.0 {
        return Err(Error::Config("PSNR data range must be positive".into()));
    }
    let n = x.values.len() as f64;
    let mse = x.values.iter().zip(&reference.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (range * range / mse).log10()
    })
}

fn gaussian_window() -> Vec<f64> {
    let c = (WINDOW / 2) as f64;
    let g: Vec<f64> = (0..WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    let mut w = Vec::with_capacity(WINDOW * WINDOW);
    for a in &g {
        for b in &g {
            w.push(a * b / (s * s));
        }
    }
    w
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5).
pub fn ssim(x: &Image, reference: &Image, range: f64) -> Result<f64> {
    check_pair(x, reference)?;
    if range <= 0.0 {
        return Err(Error::Config("SSIM data range must be positive".into()));
    }
    let (h, w) = (x.height, x.width);
    if h < WINDOW || w < WINDOW {
        return Err(Error::Config(format!("SSIM needs at least {WINDOW}x{WINDOW} pixels")));
    }
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let win = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - WINDOW {
        for c0 in 0..=w - WINDOW {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..WINDOW {
                for j in 0..WINDOW {
                    let g = win[i * WINDOW + j];
                    let a = x.values[(r0 + i) * w + c0 + j];
                    let b = reference.values[(r0 + i) * w + c0 + j];
                    mx += g * a;
                    my += g * b;
                    sxx += g * a * a;
                    syy += g * b * b;
                    sxy += g * a * b;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// PSNR and SSIM with the data range taken from the reference.
pub fn image_metrics(x: &Image, reference: &Image) -> Result<MetricsRow> {
    let lo = reference.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = reference.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    Ok(MetricsRow {
        psnr: psnr(x, reference, range)?,
        ssim: ssim(x, reference, range)?,
        data_range: range,
    })
}
