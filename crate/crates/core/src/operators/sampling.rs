//! Fixed down/up-samplers used by operator sketching.
//!
//! Down-sampling is the block mean over `f × f` cells. Up-sampling is
//! separable bilinear interpolation: output index `i` samples the coarse axis
//! at `(i + 0.5)/f − 0.5` with indices clamped at the border. For `f = 2`
//! that gives the weight table
//!
//! | output | weights                       |
//! |--------|-------------------------------|
//! | `2k`   | 0.25·x[k−1] + 0.75·x[k]       |
//! | `2k+1` | 0.75·x[k] + 0.25·x[k+1]       |
//!
//! Interpolation is evaluated as `a + t·(b − a)`, so constants are
//! reproduced exactly. The up-sampler is not the adjoint of the down-sampler;
//! both transposes are provided separately for reverse-mode passes.

use crate::error::{Error, Result};

use super::Image;

pub fn downsample(x: &[f64], (h, w): (usize, usize), f: usize) -> Vec<f64> {
    assert_eq!(x.len(), h * w, "downsample input length");
    assert!(f >= 1 && h % f == 0 && w % f == 0, "factor must divide dims");
    if f == 1 {
        return x.to_vec();
    }
    let (hc, wc) = (h / f, w / f);
    let inv = 1.0 / (f * f) as f64;
    let mut out = vec![0.0; hc * wc];
    for r in 0..hc {
        for c in 0..wc {
            let mut acc = 0.0;
            for dr in 0..f {
                let row = &x[(r * f + dr) * w + c * f..(r * f + dr) * w + c * f + f];
                acc += row.iter().sum::<f64>();
            }
            out[r * wc + c] = acc * inv;
        }
    }
    out
}

/// Transpose of [`downsample`]: each coarse value is spread as `v/f²` over its block.
pub fn downsample_transpose(g: &[f64], (hc, wc): (usize, usize), f: usize) -> Vec<f64> {
    assert_eq!(g.len(), hc * wc, "downsample transpose input length");
    if f == 1 {
        return g.to_vec();
    }
    let w = wc * f;
    let inv = 1.0 / (f * f) as f64;
    let mut out = vec![0.0; hc * f * w];
    for r in 0..hc * f {
        for c in 0..w {
            out[r * w + c] = g[(r / f) * wc + c / f] * inv;
        }
    }
    out
}

#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    t: f64,
}

fn taps(n_coarse: usize, f: usize) -> Vec<Tap> {
    (0..n_coarse * f)
        .map(|i| {
            let pos = (i as f64 + 0.5) / f as f64 - 0.5;
            let base = pos.floor();
            let t = pos - base;
            let clamp = |k: f64| (k.max(0.0) as usize).min(n_coarse - 1);
            Tap {
                lo: clamp(base),
                hi: clamp(base + 1.0),
                t,
            }
        })
        .collect()
}

pub fn upsample(x: &[f64], (hc, wc): (usize, usize), f: usize) -> Vec<f64> {
    assert_eq!(x.len(), hc * wc, "upsample input length");
    if f == 1 {
        return x.to_vec();
    }
    let (h, w) = (hc * f, wc * f);
    let col_taps = taps(wc, f);
    let row_taps = taps(hc, f);
    // Interpolate along columns first, then rows.
    let mut wide = vec![0.0; hc * w];
    for r in 0..hc {
        let src = &x[r * wc..(r + 1) * wc];
        for (c, tap) in col_taps.iter().enumerate() {
            let (a, b) = (src[tap.lo], src[tap.hi]);
            wide[r * w + c] = a + tap.t * (b - a);
        }
    }
    let mut out = vec![0.0; h * w];
    for (r, tap) in row_taps.iter().enumerate() {
        for c in 0..w {
            let (a, b) = (wide[tap.lo * w + c], wide[tap.hi * w + c]);
            out[r * w + c] = a + tap.t * (b - a);
        }
    }
    out
}

/// Transpose of [`upsample`]; `g` has the fine shape `(hc·f, wc·f)`.
pub fn upsample_transpose(g: &[f64], (hc, wc): (usize, usize), f: usize) -> Vec<f64> {
    let (h, w) = (hc * f, wc * f);
    assert_eq!(g.len(), h * w, "upsample transpose input length");
    if f == 1 {
        return g.to_vec();
    }
    let col_taps = taps(wc, f);
    let row_taps = taps(hc, f);
    let mut wide = vec![0.0; hc * w];
    for (r, tap) in row_taps.iter().enumerate() {
        for c in 0..w {
            let v = g[r * w + c];
            wide[tap.lo * w + c] += (1.0 - tap.t) * v;
            wide[tap.hi * w + c] += tap.t * v;
        }
    }
    let mut out = vec![0.0; hc * wc];
    for r in 0..hc {
        for (c, tap) in col_taps.iter().enumerate() {
            let v = wide[r * w + c];
            out[r * wc + tap.lo] += (1.0 - tap.t) * v;
            out[r * wc + tap.hi] += tap.t * v;
        }
    }
    out
}

pub fn downsample2(x: &Image) -> Result<Image> {
    if !x.width.is_multiple_of(2) || !x.height.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "downsample2 needs even dimensions, got {}x{}",
            x.width, x.height
        )));
    }
    Ok(Image {
        width: x.width / 2,
        height: x.height / 2,
        pixel_size: x.pixel_size * 2.0,
        values: downsample(&x.values, (x.height, x.width), 2),
    })
}

pub fn upsample2(x: &Image) -> Image {
    Image {
        width: x.width * 2,
        height: x.height * 2,
        pixel_size: x.pixel_size / 2.0,
        values: upsample(&x.values, (x.height, x.width), 2),
    }
}
