//! The two-layer per-pixel classifier behind both pathways.
//!
//! Per pixel: `h = relu(W1 f + b1)`, `z = w2 . [h, x, y] + b2`, `p = sigmoid(z)`,
//! where the coordinate pair is only present for the spatial kind. Parameters
//! live in one flat buffer in declaration order (`W1`, `b1`, `w2`, `b2`), with
//! `W1` stored one hidden unit per row.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureStack;
use super::loss::{clamp_prob, PROB_EPS};
use crate::error::{Error, Result};
use crate::grid::{CoordGrids, ProbMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathwayKind {
    /// Appearance only.
    Visual,
    /// Appearance plus normalized (x, y) at the output layer.
    Spatial,
}

impl PathwayKind {
    /// Inputs appended to the hidden layer before the output unit.
    pub fn extra_inputs(self) -> usize {
        match self {
            PathwayKind::Visual => 0,
            PathwayKind::Spatial => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PathwayKind::Visual => "visual",
            PathwayKind::Spatial => "spatial",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathwayModel {
    kind: PathwayKind,
    d_in: usize,
    hidden: usize,
    params: Vec<f64>,
}

impl PathwayModel {
    pub fn param_count(kind: PathwayKind, d_in: usize, hidden: usize) -> usize {
        d_in * hidden + hidden + hidden + kind.extra_inputs() + 1
    }

    pub fn zeros(kind: PathwayKind, d_in: usize, hidden: usize) -> Self {
        Self {
            kind,
            d_in,
            hidden,
            params: vec![0.0; Self::param_count(kind, d_in, hidden)],
        }
    }

    /// Fan-in scaled uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(kind: PathwayKind, d_in: usize, hidden: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(kind, d_in, hidden);
        let a1 = 1.0 / (d_in as f64).sqrt();
        for w in m.w1_mut() {
            *w = rng.gen_range(-a1..=a1);
        }
        let a2 = 1.0 / ((hidden + kind.extra_inputs()) as f64).sqrt();
        for w in m.w2_mut() {
            *w = rng.gen_range(-a2..=a2);
        }
        m
    }

    pub fn from_params(kind: PathwayKind, d_in: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        if d_in == 0 || hidden == 0 {
            return Err(Error::Dimension(format!(
                "model needs d_in, hidden >= 1, got {d_in}, {hidden}"
            )));
        }
        let want = Self::param_count(kind, d_in, hidden);
        if params.len() != want {
            return Err(Error::Dimension(format!(
                "{} parameters for a {} model expecting {want}",
                params.len(),
                kind.as_str()
            )));
        }
        if let Some(index) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                index,
                value: params[index],
            });
        }
        Ok(Self {
            kind,
            d_in,
            hidden,
            params,
        })
    }

    pub fn kind(&self) -> PathwayKind {
        self.kind
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.d_in * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden + self.kind.extra_inputs();
        (b1, w2, b2)
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[..self.offsets().0]
    }

    pub fn w1_mut(&mut self) -> &mut [f64] {
        let (b1, _, _) = self.offsets();
        &mut self.params[..b1]
    }

    pub fn b1_mut(&mut self) -> &mut [f64] {
        let (b1, w2, _) = self.offsets();
        &mut self.params[b1..w2]
    }

    /// Output weights: hidden units first, then x and y for spatial models.
    pub fn w2_mut(&mut self) -> &mut [f64] {
        let (_, w2, b2) = self.offsets();
        &mut self.params[w2..b2]
    }

    pub fn b2_mut(&mut self) -> &mut f64 {
        let (_, _, b2) = self.offsets();
        &mut self.params[b2]
    }

    fn check_inputs(&self, feats: &FeatureStack, grids: Option<&CoordGrids>) -> Result<()> {
        if feats.dim() != self.d_in {
            return Err(Error::Dimension(format!(
                "features have dim {}, model expects {}",
                feats.dim(),
                self.d_in
            )));
        }
        if self.kind == PathwayKind::Spatial {
            let g = grids
                .ok_or_else(|| Error::InvalidParam("spatial pathway requires coordinate grids".into()))?;
            if g.dims() != feats.dims() {
                return Err(Error::shape(feats.dims(), g.dims()));
            }
        }
        Ok(())
    }

    /// Pre-activation of the output unit at one pixel; fills `hidden_out`
    /// with post-ReLU activations.
    #[inline]
    fn logit(&self, feat: &[f64], coords: (f64, f64), hidden_out: &mut [f64]) -> f64 {
        let (b1_off, w2_off, b2_off) = self.offsets();
        let w1 = &self.params[..b1_off];
        let b1 = &self.params[b1_off..w2_off];
        let w2 = &self.params[w2_off..b2_off];
        let mut z = self.params[b2_off];
        for j in 0..self.hidden {
            let row = &w1[j * self.d_in..(j + 1) * self.d_in];
            let mut a = b1[j];
            for (w, f) in row.iter().zip(feat) {
                a += w * f;
            }
            let a = a.max(0.0);
            hidden_out[j] = a;
            z += w2[j] * a;
        }
        if self.kind == PathwayKind::Spatial {
            z += w2[self.hidden] * coords.0 + w2[self.hidden + 1] * coords.1;
        }
        z
    }

    /// Per-pixel probabilities. Visual models ignore `grids`.
    pub fn forward(&self, feats: &FeatureStack, grids: Option<&CoordGrids>) -> Result<ProbMap> {
        self.check_inputs(feats, grids)?;
        let (h, w) = feats.dims();
        let mut hidden = vec![0.0; self.hidden];
        let mut out = Vec::with_capacity(h * w);
        for p in 0..h * w {
            let coords = pixel_coords(grids, self.kind, p);
            let z = self.logit(feats.pixel(p), coords, &mut hidden);
            out.push(sigmoid(z));
        }
        ProbMap::new(h, w, out)
    }

    /// Adds the gradient of the summed cross-entropy against `target` into
    /// `grads` and returns this image's loss.
    pub fn accumulate_grad(
        &self,
        feats: &FeatureStack,
        grids: Option<&CoordGrids>,
        target: &ProbMap,
        grads: &mut [f64],
    ) -> Result<f64> {
        self.check_inputs(feats, grids)?;
        target.ensure_dims(feats.dims())?;
        if grads.len() != self.params.len() {
            return Err(Error::Dimension("gradient buffer size".into()));
        }
        let (b1_off, w2_off, b2_off) = self.offsets();
        let w2 = &self.params[w2_off..b2_off];
        let (h, w) = feats.dims();
        let mut hidden = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for p in 0..h * w {
            let feat = feats.pixel(p);
            let coords = pixel_coords(grids, self.kind, p);
            let z = self.logit(feat, coords, &mut hidden);
            let prob = sigmoid(z);
            let t = target.data()[p];
            let pc = clamp_prob(prob);
            loss -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
            let dz = prob - t;
            if dz == 0.0 {
                continue;
            }
            grads[b2_off] += dz;
            for j in 0..self.hidden {
                grads[w2_off + j] += dz * hidden[j];
            }
            if self.kind == PathwayKind::Spatial {
                grads[w2_off + self.hidden] += dz * coords.0;
                grads[w2_off + self.hidden + 1] += dz * coords.1;
            }
            for j in 0..self.hidden {
                if hidden[j] <= 0.0 {
                    continue;
                }
                let da = dz * w2[j];
                grads[b1_off + j] += da;
                let row = &mut grads[j * self.d_in..(j + 1) * self.d_in];
                for (g, f) in row.iter_mut().zip(feat) {
                    *g += da * f;
                }
            }
        }
        Ok(loss)
    }
}

#[inline]
fn pixel_coords(grids: Option<&CoordGrids>, kind: PathwayKind, p: usize) -> (f64, f64) {
    match (kind, grids) {
        (PathwayKind::Spatial, Some(g)) => (g.xgrid.data()[p], g.ygrid.data()[p]),
        _ => (0.0, 0.0),
    }
}

/// Logistic function, kept strictly inside (0, 1).
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(PROB_EPS, 1.0 - PROB_EPS)
}
