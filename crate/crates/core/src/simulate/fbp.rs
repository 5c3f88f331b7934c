use std::f64::consts::PI;

use crate::error::{check_len, Result};
use crate::operators::{Image, Projector, Sinogram};

/// Discrete Ram-Lak kernel `h(k)` for `|k| < len`: `1/(4Δ²)` at zero,
/// `−1/(π²k²Δ²)` at odd `k`, zero at even `k`.
pub fn ramp_kernel(len: usize, spacing: f64) -> Vec<f64> {
    let d2 = spacing * spacing;
    (0..len)
        .map(|k| match k {
            0 => 1.0 / (4.0 * d2),
            k if k % 2 == 1 => -1.0 / (PI * PI * (k * k) as f64 * d2),
            _ => 0.0,
        })
        .collect()
}

/// Convolves each view with the ramp kernel (times `Δ`); symmetric in its
/// input and output.
fn filter_views(values: &[f64], n_angles: usize, n_det: usize, spacing: f64) -> Vec<f64> {
    let h = ramp_kernel(n_det, spacing);
    let mut out = vec![0.0; values.len()];
    for a in 0..n_angles {
        let p = &values[a * n_det..(a + 1) * n_det];
        let q = &mut out[a * n_det..(a + 1) * n_det];
        for (t, qt) in q.iter_mut().enumerate() {
            *qt = spacing * p.iter().enumerate().map(|(s, &ps)| h[t.abs_diff(s)] * ps).sum::<f64>();
        }
    }
    out
}

/// Scale turning the exact adjoint of ramp-filtered views into an FBP estimate.
///
/// Each view contributes `Σ_t L_tj q_t ≈ (ps²/Δ) q(s_j)`, and the angular
/// quadrature over the full circle weighs views by `π/n_angles`.
fn backprojection_scale(projector: &Projector) -> f64 {
    let g = projector.geometry();
    let ps = projector.grid().pixel_size;
    PI / g.n_angles as f64 * g.detector_spacing / (ps * ps)
}

/// FBP on raw measurement values.
pub fn fbp_values(values: &[f64], projector: &Projector) -> Vec<f64> {
    let g = projector.geometry();
    assert_eq!(values.len(), g.n_rays(), "fbp input length");
    let q = filter_views(values, g.n_angles, g.n_detectors, g.detector_spacing);
    let c = backprojection_scale(projector);
    projector.apply_transpose(&q).into_iter().map(|v| c * v).collect()
}

/// Filtered back-projection with the Ram-Lak filter.
pub fn fbp(b: &Sinogram, projector: &Projector) -> Result<Image> {
    check_len("fbp sinogram", projector.n_rows(), b.values.len())?;
    let grid = projector.grid();
    Image::from_values(grid.width, grid.height, grid.pixel_size, fbp_values(&b.values, projector))
}

/// Transpose of [`fbp_values`] as a linear map.
pub fn fbp_transpose(g_img: &[f64], projector: &Projector) -> Vec<f64> {
    let geo = projector.geometry();
    let c = backprojection_scale(projector);
    let ag: Vec<f64> = projector.apply(g_img).into_iter().map(|v| c * v).collect();
    filter_views(&ag, geo.n_angles, geo.n_detectors, geo.detector_spacing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_projector, forward, Geometry, ImageGrid};
    use crate::rng;
    use crate::simulate::{disc, shepp_logan};

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    fn setup(size: usize, angles: usize) -> Projector {
        let grid = ImageGrid::square(size, 2.0 / size as f64);
        build_projector(&Geometry::covering(grid, angles).unwrap(), grid).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let p = setup(16, 8);
        assert!(fbp_values(&vec![0.0; p.n_rows()], &p).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recovers_disc() {
        let p = setup(128, 180);
        let x = disc(128, 0.6, 1.0);
        let b = forward(&p, &x).unwrap();
        let r = fbp(&b, &p).unwrap();
        let e = rel(&r.values, &x.values);
        assert!(e < 0.1, "relative error {e}");
    }

    #[test]
    fn reprojection_close_to_data() {
        let p = setup(64, 90);
        let x = shepp_logan(64);
        let b = forward(&p, &x).unwrap();
        let again = forward(&p, &fbp(&b, &p).unwrap()).unwrap();
        let e = rel(&again.values, &b.values);
        assert!(e < 0.1, "relative error {e}");
    }

    #[test]
    fn linear_and_transpose_consistent() {
        let p = setup(16, 12);
        let mut r = rng::stream(4, 0);
        let b1 = rng::normal_vec(&mut r, p.n_rows());
        let b2 = rng::normal_vec(&mut r, p.n_rows());
        let mix: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let lhs = fbp_values(&mix, &p);
        let rhs: Vec<f64> = fbp_values(&b1, &p)
            .iter()
            .zip(fbp_values(&b2, &p))
            .map(|(a, b)| 2.0 * a - 0.5 * b)
            .collect();
        assert!(rel(&lhs, &rhs) < 1e-10);

        let g = rng::normal_vec(&mut r, p.n_cols());
        let l: f64 = fbp_values(&b1, &p).iter().zip(&g).map(|(a, b)| a * b).sum();
        let rt: f64 = fbp_transpose(&g, &p).iter().zip(&b1).map(|(a, b)| a * b).sum();
        assert!((l - rt).abs() <= 1e-10 * l.abs().max(1.0));
    }
}
