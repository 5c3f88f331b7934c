use crate::error::{Error, Result};
use crate::operators::{Image, Sinogram};

/// Counter-clockwise rotation of a square `n × n` image by `r` quarter turns:
/// one turn maps `out[i][j] = in[j][n−1−i]`.
pub fn rotate90_values(values: &[f64], n: usize, r: usize) -> Vec<f64> {
    assert_eq!(values.len(), n * n, "rotate90 expects a square image");
    let mut cur = values.to_vec();
    for _ in 0..r % 4 {
        let mut next = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                next[i * n + j] = cur[j * n + (n - 1 - i)];
            }
        }
        cur = next;
    }
    cur
}

pub fn rotate90(x: &Image, r: usize) -> Result<Image> {
    if x.width != x.height {
        return Err(Error::Config(format!("rotation needs a square image, got {}x{}", x.width, x.height)));
    }
    Image::from_values(x.width, x.height, x.pixel_size, rotate90_values(&x.values, x.width, r))
}

/// Circular shift of the angle axis: `out[a] = in[(a − shift) mod n_angles]`.
pub fn shift_angles_values(values: &[f64], n_angles: usize, n_det: usize, shift: usize) -> Vec<f64> {
    assert_eq!(values.len(), n_angles * n_det, "shift_angles input length");
    let mut out = vec![0.0; values.len()];
    for a in 0..n_angles {
        let src = (a + n_angles - shift % n_angles) % n_angles;
        out[a * n_det..(a + 1) * n_det].copy_from_slice(&values[src * n_det..(src + 1) * n_det]);
    }
    out
}

/// Angle shift matching `r` quarter turns of the image: `A(rot_r x) =
/// shift_angles(Ax, r)`.
pub fn shift_angles(b: &Sinogram, r: usize) -> Result<Sinogram> {
    let g = b.geometry;
    if !g.n_angles.is_multiple_of(4) {
        return Err(Error::Config(format!(
            "quarter-turn shifts need an angle count divisible by 4, got {}",
            g.n_angles
        )));
    }
    let shift = (r % 4) * g.n_angles / 4;
    Sinogram::from_values(g, shift_angles_values(&b.values, g.n_angles, g.n_detectors, shift))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_projector, forward, Geometry, ImageGrid};
    use crate::rng;

    #[test]
    fn quarter_turn_by_hand() {
        // [[1,2],[3,4]] rotated counter-clockwise is [[2,4],[1,3]].
        assert_eq!(rotate90_values(&[1.0, 2.0, 3.0, 4.0], 2, 1), vec![2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn group_of_order_four() {
        let mut r = rng::stream(1, 0);
        let v = rng::normal_vec(&mut r, 25);
        assert_eq!(rotate90_values(&v, 5, 0), v);
        assert_eq!(rotate90_values(&v, 5, 4), v);
        let mut w = v.clone();
        for _ in 0..4 {
            w = rotate90_values(&w, 5, 1);
        }
        assert_eq!(w, v);
        let s = rng::normal_vec(&mut r, 8 * 3);
        assert_eq!(shift_angles_values(&s, 8, 3, 0), s);
        assert_eq!(shift_angles_values(&s, 8, 3, 8), s);
    }

    #[test]
    fn projector_is_equivariant() {
        for &(size, angles) in &[(16usize, 12usize), (15, 8)] {
            let grid = ImageGrid::square(size, 2.0 / size as f64);
            let p = build_projector(&Geometry::covering(grid, angles).unwrap(), grid).unwrap();
            let mut r = rng::stream(2, size as u64);
            for _ in 0..10 {
                let x = Image::from_values(size, size, grid.pixel_size, rng::normal_vec(&mut r, size * size)).unwrap();
                let ax = forward(&p, &x).unwrap();
                let norm = ax.values.iter().map(|v| v * v).sum::<f64>().sqrt();
                for q in 1..4 {
                    let lhs = shift_angles(&ax, q).unwrap();
                    let rhs = forward(&p, &rotate90(&x, q).unwrap()).unwrap();
                    let defect = lhs.values.iter().zip(&rhs.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    assert!(defect <= 1e-10 * norm, "size {size}, r={q}: {defect}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(rotate90(&Image::zeros(3, 4, 1.0), 1).is_err());
        let g = Geometry::new(6, 3, 1.0).unwrap();
        assert!(shift_angles(&Sinogram::zeros(g), 1).is_err());
    }
}
