use std::path::Path;

use image::DynamicImage;
use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use super::Real;
use crate::error::{Error, Result};

/// Per-channel normalization constants.
const NORM_MEAN: f32 = 0.5;
const NORM_STD: f32 = 0.5;

pub fn load_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// 8-bit RGB image to a normalized `size x size x 3` array: bilinear resize
/// without aspect preservation, scale to [0, 1], then `(x - 0.5) / 0.5`.
pub fn preprocess(image: &DynamicImage, size: usize) -> Result<Array3<f32>> {
    let DynamicImage::ImageRgb8(rgb) = image else {
        return Err(Error::Image(format!(
            "expected 8-bit RGB, got {:?}",
            image.color()
        )));
    };
    let (w, h) = rgb.dimensions();
    let src = Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
        rgb.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    });
    let mut out = resize_bilinear(src.view(), size, size);
    normalize(&mut out);
    Ok(out)
}

pub fn normalize(image: &mut Array3<f32>) {
    image.mapv_inplace(|v| (v - NORM_MEAN) / NORM_STD);
}

/// Bilinear interpolation with half-pixel centres; same-size input is
/// returned unchanged.
pub fn resize_bilinear(src: ArrayView3<f32>, out_h: usize, out_w: usize) -> Array3<f32> {
    let (in_h, in_w, channels) = src.dim();
    let axis = |out: usize, len_in: usize, len_out: usize| {
        let pos = ((out as f64 + 0.5) * len_in as f64 / len_out as f64 - 0.5)
            .clamp(0.0, (len_in - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(len_in - 1);
        (lo, hi, (pos - lo as f64) as f32)
    };
    let rows: Vec<_> = (0..out_h).map(|y| axis(y, in_h, out_h)).collect();
    let cols: Vec<_> = (0..out_w).map(|x| axis(x, in_w, out_w)).collect();
    Array3::from_shape_fn((out_h, out_w, channels), |(y, x, c)| {
        let (y0, y1, fy) = rows[y];
        let (x0, x1, fx) = cols[x];
        let top = src[[y0, x0, c]] * (1.0 - fx) + src[[y0, x1, c]] * fx;
        let bottom = src[[y1, x0, c]] * (1.0 - fx) + src[[y1, x1, c]] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// `H x W x C` image to `M x (P²C)` rows. Row `i` is the patch at grid
/// position `(i / (W/P), i % (W/P))`, flattened row-major, channel-last.
pub fn patchify<T: Real>(image: ArrayView3<T>, patch: usize) -> Result<Array2<T>> {
    let (h, w, c) = image.dim();
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::Shape(format!(
            "{h}x{w} image is not divisible into {patch}x{patch} patches"
        )));
    }
    let (gh, gw) = (h / patch, w / patch);
    let mut out = Array2::zeros((gh * gw, patch * patch * c));
    for gy in 0..gh {
        for gx in 0..gw {
            let mut row = out.row_mut(gy * gw + gx);
            let mut k = 0;
            for py in 0..patch {
                for px in 0..patch {
                    for ch in 0..c {
                        row[k] = image[[gy * patch + py, gx * patch + px, ch]];
                        k += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`].
pub fn unpatchify<T: Real>(
    patches: ArrayView2<T>,
    height: usize,
    width: usize,
    channels: usize,
    patch: usize,
) -> Result<Array3<T>> {
    let gw = width / patch;
    if patches.dim() != ((height / patch) * gw, patch * patch * channels) {
        return Err(Error::Shape(format!(
            "{:?} patches do not tile a {height}x{width}x{channels} image",
            patches.dim()
        )));
    }
    Ok(Array3::from_shape_fn((height, width, channels), |(y, x, ch)| {
        let i = (y / patch) * gw + x / patch;
        patches[[i, ((y % patch) * patch + x % patch) * channels + ch]]
    }))
}
