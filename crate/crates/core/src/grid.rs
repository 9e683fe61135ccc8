//! Image, probability-map and mask containers shared by every stage of the
//! pipeline, plus coordinate grids and bilinear resampling.
//!
//! All containers validate on construction and are immutable afterwards.
//! Values are stored row-major; images are channel-planar (`C x H x W`).

use crate::error::{Error, Result};
use crate::regions::RegionSet;

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Dimension(format!("{height}x{width} has a zero side")));
    }
    Ok(())
}

fn check_unit_range(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
        Some(index) => Err(Error::InvalidValue {
            index,
            value: data[index],
        }),
        None => Ok(()),
    }
}

/// A real-valued image in `[0, 1]`, stored channel-planar.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if channels == 0 {
            return Err(Error::Dimension("image needs at least one channel".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        check_unit_range(&data)?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an RGB image from a per-pixel closure returning `[r, g, b]`.
    pub fn from_rgb_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let plane = height * width;
        let mut data = vec![0.0; plane * 3];
        for y in 0..height {
            for x in 0..width {
                let rgb = f(y, x);
                for (c, v) in rgb.iter().enumerate() {
                    data[c * plane + y * width + x] = *v;
                }
            }
        }
        Self::new(height, width, 3, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn get(&self, channel: usize, y: usize, x: usize) -> f64 {
        self.data[(channel * self.height + y) * self.width + x]
    }

    /// Luma with weights 0.299 / 0.587 / 0.114. Single-channel images are
    /// returned as-is.
    pub fn gray(&self) -> Vec<f64> {
        if self.channels < 3 {
            return self.plane(0).to_vec();
        }
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    }
}

/// A per-pixel map with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ProbMap {
    /// Rejects non-finite or out-of-range values rather than clamping them.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width} map",
                data.len()
            )));
        }
        check_unit_range(&data)?;
        Ok(Self { height, width, data })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::shape(dims, self.dims()));
        }
        Ok(())
    }
}

/// A `{0, 1}` mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width} mask",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| *v > 1) {
            return Err(Error::InvalidValue {
                index,
                value: data[index] as f64,
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x) as u8);
            }
        }
        Self::new(height, width, data)
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

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|v| **v == 1).count()
    }

    pub fn to_prob_map(&self) -> ProbMap {
        ProbMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| *v as f64).collect(),
        }
    }
}

/// Normalized pixel coordinates: `x / (W - 1)` and `y / (H - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordGrids {
    pub xgrid: ProbMap,
    pub ygrid: ProbMap,
}

impl CoordGrids {
    pub fn dims(&self) -> (usize, usize) {
        self.xgrid.dims()
    }
}

pub fn make_coord_grids(height: usize, width: usize) -> Result<CoordGrids> {
    if height < 2 || width < 2 {
        return Err(Error::Dimension(format!(
            "coordinate grids need at least 2x2, got {height}x{width}"
        )));
    }
    let wx = (width - 1) as f64;
    let hy = (height - 1) as f64;
    Ok(CoordGrids {
        xgrid: ProbMap::from_fn(height, width, |_, x| x as f64 / wx)?,
        ygrid: ProbMap::from_fn(height, width, |y, _| y as f64 / hy)?,
    })
}

/// Source coordinate and blend weight for one output index, sampling at pixel
/// centres (align-corners = false).
fn source_index(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

pub fn bilinear_resize(map: &ProbMap, new_h: usize, new_w: usize) -> Result<ProbMap> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::Dimension(format!(
            "resize target {new_h}x{new_w} has a zero side"
        )));
    }
    if (new_h, new_w) == map.dims() {
        return Ok(map.clone());
    }
    let cols: Vec<_> = (0..new_w).map(|x| source_index(x, map.width, new_w)).collect();
    let mut data = Vec::with_capacity(new_h * new_w);
    for y in 0..new_h {
        let (y0, y1, ty) = source_index(y, map.height, new_h);
        for &(x0, x1, tx) in &cols {
            let a = map.get(y0, x0);
            let b = map.get(y0, x1);
            let c = map.get(y1, x0);
            let d = map.get(y1, x1);
            // Difference form keeps constant neighbourhoods exact.
            let top = a + tx * (b - a);
            let bottom = c + tx * (d - c);
            let v = top + ty * (bottom - top);
            let lo = a.min(b).min(c).min(d);
            let hi = a.max(b).max(c).max(d);
            data.push(v.clamp(lo, hi));
        }
    }
    ProbMap::new(new_h, new_w, data)
}

/// One image with its (optional) region proposal and ground truth.
#[derive(Clone, Debug)]
pub struct SampleRecord {
    pub id: String,
    pub image: ImageTensor,
    pub regions: Option<RegionSet>,
    pub gt: Option<BinaryMask>,
}

impl SampleRecord {
    pub fn new(
        id: impl Into<String>,
        image: ImageTensor,
        regions: Option<RegionSet>,
        gt: Option<BinaryMask>,
    ) -> Result<Self> {
        let dims = image.dims();
        if let Some(r) = &regions {
            if r.dims() != dims {
                return Err(Error::shape(dims, r.dims()));
            }
        }
        if let Some(g) = &gt {
            if g.dims() != dims {
                return Err(Error::shape(dims, g.dims()));
            }
        }
        Ok(Self {
            id: id.into(),
            image,
            regions,
            gt,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}
