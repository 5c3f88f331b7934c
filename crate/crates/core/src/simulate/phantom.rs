use rand::Rng as _;

use crate::operators::{Image, ImageGrid};
use crate::rng::Rng;

/// Ellipse on the `[-1, 1]²` domain, rotated by `phi_deg` counter-clockwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

const fn e(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Ellipse {
    Ellipse {
        intensity,
        a,
        b,
        x0,
        y0,
        phi_deg,
    }
}

/// Modified (high-contrast) Shepp-Logan ellipses.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    e(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    e(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    e(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    e(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    e(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    e(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    e(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    e(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    e(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    e(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// `size × size` Shepp-Logan image on `[-1, 1]²`, sampled at pixel centres.
pub fn shepp_logan(size: usize) -> Image {
    shepp_logan_with(size, &SHEPP_LOGAN)
}

/// Sum of ellipse indicators at pixel centres, clipped below at zero.
pub fn shepp_logan_with(size: usize, ellipses: &[Ellipse]) -> Image {
    let grid = ImageGrid::square(size, 2.0 / size as f64);
    let mut img = Image::zeros(size, size, grid.pixel_size);
    for r in 0..size {
        for c in 0..size {
            let (x, y) = grid.pixel_center(r, c);
            let v: f64 = ellipses
                .iter()
                .filter(|el| el.contains(x, y))
                .map(|el| el.intensity)
                .sum();
            img.values[r * size + c] = v.max(0.0);
        }
    }
    img
}

/// Shepp-Logan variant with the inner ellipses jittered in intensity, size,
/// position and angle. The outer skull and brain ellipses stay fixed.
pub fn random_shepp_logan(size: usize, rng: &mut Rng) -> Image {
    let mut ellipses = SHEPP_LOGAN;
    for el in ellipses.iter_mut().skip(2) {
        el.intensity *= rng.random_range(0.6..1.4);
        el.a *= rng.random_range(0.85..1.15);
        el.b *= rng.random_range(0.85..1.15);
        el.x0 += rng.random_range(-0.04..0.04);
        el.y0 += rng.random_range(-0.04..0.04);
        el.phi_deg += rng.random_range(-10.0..10.0);
    }
    shepp_logan_with(size, &ellipses)
}

/// Constant disc of `radius` (domain units) centred in a `size × size` image.
pub fn disc(size: usize, radius: f64, value: f64) -> Image {
    shepp_logan_with(size, &[e(value, radius, radius, 0.0, 0.0, 0.0)])
}
