//! Fixed per-pixel appearance features fed to both pathways.

use crate::error::{Error, Result};
use crate::grid::ImageTensor;

/// Number of features produced by [`extract_features`].
pub const FEATURE_DIM: usize = 8;

/// Per-pixel feature vectors, pixel-major (`H x W x D`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureStack {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * dim {
            return Err(Error::Dimension(format!(
                "{} values for {height}x{width}x{dim} features",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                index,
                value: data[index],
            });
        }
        Ok(Self {
            height,
            width,
            dim,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }

    /// One feature channel as a plane.
    pub fn channel(&self, d: usize) -> Vec<f64> {
        self.data.iter().skip(d).step_by(self.dim).copied().collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FeatureOptions {
    /// Subtract each feature's per-image mean.
    pub center: bool,
}

#[inline]
fn clamp_idx(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Windowed mean with replicated borders; `radius` 2 gives a 5x5 window.
pub fn box_mean(plane: &[f64], height: usize, width: usize, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let count = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut out = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for dy in -r..=r {
                let row = clamp_idx(y as isize + dy, height) * width;
                for dx in -r..=r {
                    s += plane[row + clamp_idx(x as isize + dx, width)];
                }
            }
            out[y * width + x] = s / count;
        }
    }
    out
}

/// Windowed standard deviation with replicated borders. Deviations are taken
/// relative to the centre pixel so flat windows give exactly zero.
fn local_std(plane: &[f64], height: usize, width: usize, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let count = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut out = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            let c = plane[y * width + x];
            let (mut s, mut s2) = (0.0, 0.0);
            for dy in -r..=r {
                let row = clamp_idx(y as isize + dy, height) * width;
                for dx in -r..=r {
                    let d = plane[row + clamp_idx(x as isize + dx, width)] - c;
                    s += d;
                    s2 += d * d;
                }
            }
            let mean = s / count;
            out[y * width + x] = (s2 / count - mean * mean).max(0.0).sqrt();
        }
    }
    out
}

/// Sobel gradient magnitude scaled by its maximum possible value (`4 sqrt 2`
/// for inputs in [0, 1]).
fn sobel_magnitude(plane: &[f64], height: usize, width: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| plane[clamp_idx(y, height) * width + clamp_idx(x, width)];
    let norm = 4.0 * std::f64::consts::SQRT_2;
    let mut out = vec![0.0; height * width];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            out[y as usize * width + x as usize] = ((gx * gx + gy * gy).sqrt() / norm).min(1.0);
        }
    }
    out
}

/// Features per pixel, in order: R, G, B, gray, 5x5 mean of gray, 11x11 mean
/// of gray, Sobel magnitude of gray, 5x5 standard deviation of gray.
/// Single-channel images repeat the channel for R, G and B.
pub fn extract_features(image: &ImageTensor) -> FeatureStack {
    extract_features_with(image, FeatureOptions::default())
}

pub fn extract_features_with(image: &ImageTensor, opts: FeatureOptions) -> FeatureStack {
    let (h, w) = image.dims();
    let gray = image.gray();
    let rgb: [&[f64]; 3] = if image.channels() >= 3 {
        [image.plane(0), image.plane(1), image.plane(2)]
    } else {
        [image.plane(0); 3]
    };
    let planes: [Vec<f64>; FEATURE_DIM] = [
        rgb[0].to_vec(),
        rgb[1].to_vec(),
        rgb[2].to_vec(),
        gray.clone(),
        box_mean(&gray, h, w, 2),
        box_mean(&gray, h, w, 5),
        sobel_magnitude(&gray, h, w),
        local_std(&gray, h, w, 2),
    ];
    let n = h * w;
    let mut data = vec![0.0; n * FEATURE_DIM];
    for (d, plane) in planes.iter().enumerate() {
        let offset = if opts.center {
            plane.iter().sum::<f64>() / n as f64
        } else {
            0.0
        };
        for p in 0..n {
            data[p * FEATURE_DIM + d] = plane[p] - offset;
        }
    }
    FeatureStack {
        height: h,
        width: w,
        dim: FEATURE_DIM,
        data,
    }
}
