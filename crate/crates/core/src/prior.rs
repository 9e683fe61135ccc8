//! Spatial location prior: a Gaussian bump at a guessed object location, and
//! estimation of that location from externally produced detector maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ProbMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Horizontal centre as a fraction of `W - 1`.
    pub cx_frac: f64,
    /// Vertical centre as a fraction of `H - 1`.
    pub cy_frac: f64,
    /// Standard deviation as a fraction of `min(H, W)`.
    pub sigma_frac: f64,
}

impl Default for PriorSpec {
    /// Bottom-right of centre, where a right-handed wearer looking down tends
    /// to hold things.
    fn default() -> Self {
        Self {
            cx_frac: 0.6,
            cy_frac: 0.75,
            sigma_frac: 0.2,
        }
    }
}

impl PriorSpec {
    /// The common first-person centre prior, kept for comparison runs.
    pub fn center() -> Self {
        Self {
            cx_frac: 0.5,
            cy_frac: 0.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.cx_frac) || !unit.contains(&self.cy_frac) {
            return Err(Error::InvalidParam(format!(
                "prior centre ({}, {}) outside [0, 1]",
                self.cx_frac, self.cy_frac
            )));
        }
        if !(self.sigma_frac.is_finite() && self.sigma_frac > 0.0) {
            return Err(Error::InvalidParam(format!(
                "prior sigma_frac must be positive, got {}",
                self.sigma_frac
            )));
        }
        Ok(())
    }
}

/// Gaussian bump scaled so the pixel nearest the centre has value exactly 1.
pub fn gaussian_prior(spec: &PriorSpec, height: usize, width: usize) -> Result<ProbMap> {
    spec.validate()?;
    if height == 0 || width == 0 {
        return Err(Error::Dimension(format!("{height}x{width} prior")));
    }
    let cx = spec.cx_frac * (width - 1) as f64;
    let cy = spec.cy_frac * (height - 1) as f64;
    let sigma = spec.sigma_frac * height.min(width) as f64;
    let denom = 2.0 * sigma * sigma;
    let dist2 = |y: usize, x: usize| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        dx * dx + dy * dy
    };
    let nearest = dist2(
        cy.round().min((height - 1) as f64) as usize,
        cx.round().min((width - 1) as f64) as usize,
    );
    ProbMap::from_fn(height, width, |y, x| {
        (-(dist2(y, x) - nearest) / denom).exp().min(1.0)
    })
}

fn axis_frac(i: usize, len: usize) -> f64 {
    if len < 2 {
        0.5
    } else {
        i as f64 / (len - 1) as f64
    }
}

/// Mass-weighted centroid of one map in normalized coordinates, or `None`
/// when the map has no mass.
pub fn weighted_centroid(map: &ProbMap) -> Option<(f64, f64)> {
    let (h, w) = map.dims();
    let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
    for y in 0..h {
        let fy = axis_frac(y, h);
        for x in 0..w {
            let m = map.get(y, x);
            sx += m * axis_frac(x, w);
            sy += m * fy;
            total += m;
        }
    }
    (total > 0.0).then(|| ((sx / total).clamp(0.0, 1.0), (sy / total).clamp(0.0, 1.0)))
}

/// Averages per-image weighted centroids over a dataset. Maps with zero mass
/// are skipped.
pub fn estimate_prior_location(maps: &[ProbMap]) -> Result<(f64, f64)> {
    if maps.is_empty() {
        return Err(Error::Empty("no maps to estimate a prior from".into()));
    }
    let centroids: Vec<_> = maps.iter().filter_map(weighted_centroid).collect();
    if centroids.is_empty() {
        return Err(Error::Empty("every map has zero total mass".into()));
    }
    let n = centroids.len() as f64;
    let cx = centroids.iter().map(|c| c.0).sum::<f64>() / n;
    let cy = centroids.iter().map(|c| c.1).sum::<f64>() / n;
    Ok((cx, cy))
}
