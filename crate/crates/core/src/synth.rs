//! Deterministic synthetic first-person-like scenes with exact ground truth.
//!
//! A scene is a two-surface background (wall above a horizon, table below),
//! one important blob jittered around a preferred location, and optional
//! distractor blobs. Blobs are axis-aligned super-ellipses with a radial
//! shading falloff; ground truth is exactly the set of pixels painted by the
//! important blob.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, ImageTensor, SampleRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistractorPolicy {
    /// Same colour statistics as the important object, placed away from its
    /// preferred location.
    SameAppearanceElsewhere,
    /// A different colour class, placed near the preferred location.
    DifferentAppearanceAtPrior,
    /// Each distractor picks one of the two policies with equal probability.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    pub obj_color_mean: [f64; 3],
    pub obj_color_std: [f64; 3],
    /// Colour class of different-appearance distractors.
    pub alt_color_mean: [f64; 3],
    pub alt_color_std: [f64; 3],
    pub wall_color_mean: [f64; 3],
    pub table_color_mean: [f64; 3],
    /// Per-image spread of the wall and table base colours.
    pub surface_color_std: f64,
    /// Amplitude of the low-frequency background texture.
    pub bg_texture_scale: f64,
    /// Horizon row range as fractions of the height.
    pub horizon_frac: (f64, f64),
    /// Mean important-object centre as fractions of `(W - 1, H - 1)`.
    pub important_center_frac: (f64, f64),
    /// Standard deviation of the per-sample centre jitter, as a fraction.
    pub center_jitter_std: f64,
    /// Blob semi-axis range as fractions of `min(H, W)`.
    pub radius_frac: (f64, f64),
    /// Allowed important-object area as fractions of the image.
    pub area_frac: (f64, f64),
    pub distractor_count: usize,
    pub distractor_policy: DistractorPolicy,
    /// Minimum distance (fraction units) between a same-appearance
    /// distractor and the preferred location.
    pub elsewhere_min_dist: f64,
    /// Centre jitter of different-appearance distractors around the
    /// preferred location, as a fraction.
    pub at_prior_jitter_std: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            obj_color_mean: [0.85, 0.25, 0.2],
            obj_color_std: [0.05, 0.05, 0.05],
            alt_color_mean: [0.2, 0.35, 0.85],
            alt_color_std: [0.05, 0.05, 0.05],
            wall_color_mean: [0.7, 0.7, 0.65],
            table_color_mean: [0.55, 0.45, 0.35],
            surface_color_std: 0.08,
            bg_texture_scale: 0.08,
            horizon_frac: (0.35, 0.5),
            important_center_frac: (0.6, 0.75),
            center_jitter_std: 0.2,
            radius_frac: (0.07, 0.12),
            area_frac: (0.01, 0.06),
            distractor_count: 1,
            distractor_policy: DistractorPolicy::Mixed,
            elsewhere_min_dist: 0.25,
            at_prior_jitter_std: 0.2,
            noise_std: 0.02,
            seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.height < 8 || self.width < 8 {
            return bad(format!(
                "scene must be at least 8x8, got {}x{}",
                self.height, self.width
            ));
        }
        let colors = [
            self.obj_color_mean,
            self.alt_color_mean,
            self.wall_color_mean,
            self.table_color_mean,
        ];
        if colors.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("colour means must lie in [0, 1]".into());
        }
        let stds = self.obj_color_std.iter().chain(&self.alt_color_std);
        if stds
            .chain([
                &self.surface_color_std,
                &self.noise_std,
                &self.bg_texture_scale,
                &self.center_jitter_std,
                &self.at_prior_jitter_std,
            ])
            .any(|s| !s.is_finite() || *s < 0.0)
        {
            return bad("spreads must be finite and nonnegative".into());
        }
        let (rmin, rmax) = self.radius_frac;
        if !(rmin > 0.0 && rmin <= rmax) {
            return bad(format!("radius range {rmin}..{rmax} is invalid"));
        }
        let (cx, cy) = self.important_center_frac;
        if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) {
            return bad("important_center_frac outside [0, 1]".into());
        }
        // The largest blob must fit with its centre at the preferred location.
        let r_px = rmax * self.height.min(self.width) as f64;
        let (px, py) = (cx * (self.width - 1) as f64, cy * (self.height - 1) as f64);
        if px - r_px < 0.0
            || px + r_px > (self.width - 1) as f64
            || py - r_px < 0.0
            || py + r_px > (self.height - 1) as f64
        {
            return bad(format!(
                "a blob of radius {r_px:.1}px centred at ({px:.1}, {py:.1}) leaves the {}x{} image",
                self.height, self.width
            ));
        }
        let (amin, amax) = self.area_frac;
        if !(0.0 < amin && amin <= amax && amax <= 1.0) {
            return bad(format!("area range {amin}..{amax} is invalid"));
        }
        let (hmin, hmax) = self.horizon_frac;
        if !(0.0 <= hmin && hmin <= hmax && hmax <= 1.0) {
            return bad("horizon range is invalid".into());
        }
        Ok(())
    }
}

/// Pixel labels of a rendered scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Background,
    Important,
    Distractor(DistractorPolicy),
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub sample: SampleRecord,
    /// Row-major pixel labels.
    pub labels: Vec<Label>,
    /// Noise-free colour of every painted blob pixel, row-major, per label.
    pub painted: Vec<Option<[f64; 3]>>,
}

#[derive(Clone, Copy, Debug)]
struct Blob {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    exponent: f64,
}

impl Blob {
    /// Super-ellipse radius value; inside when <= 1.
    fn level(&self, x: f64, y: f64) -> f64 {
        ((x - self.cx).abs() / self.a).powf(self.exponent)
            + ((y - self.cy).abs() / self.b).powf(self.exponent)
    }

    fn area(&self, h: usize, w: usize) -> usize {
        let mut n = 0;
        for y in 0..h {
            for x in 0..w {
                if self.level(x as f64, y as f64) <= 1.0 {
                    n += 1;
                }
            }
        }
        n
    }

    /// Bounding boxes, grown by `margin`, intersect.
    fn overlaps(&self, other: &Blob, margin: f64) -> bool {
        (self.cx - other.cx).abs() < self.a + other.a + margin
            && (self.cy - other.cy).abs() < self.b + other.b + margin
    }

    fn fits(&self, h: usize, w: usize) -> bool {
        self.cx - self.a >= 0.0
            && self.cx + self.a <= (w - 1) as f64
            && self.cy - self.b >= 0.0
            && self.cy + self.b <= (h - 1) as f64
    }
}

fn sample_color(rng: &mut ChaCha8Rng, mean: [f64; 3], std: [f64; 3]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for k in 0..3 {
        let n = Normal::new(mean[k], std[k].max(1e-12)).unwrap();
        c[k] = n.sample(rng).clamp(0.0, 1.0);
    }
    c
}

/// Smooth random field in roughly [-1, 1]: a coarse lattice of uniform values
/// upsampled bilinearly.
fn value_noise(rng: &mut ChaCha8Rng, h: usize, w: usize, cell: usize) -> Vec<f64> {
    let gh = h / cell + 2;
    let gw = w / cell + 2;
    let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let fy = y as f64 / cell as f64;
        let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
        for x in 0..w {
            let fx = x as f64 / cell as f64;
            let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
            let at = |yy: usize, xx: usize| lattice[yy * gw + xx];
            let top = at(y0, x0) + tx * (at(y0, x0 + 1) - at(y0, x0));
            let bot = at(y0 + 1, x0) + tx * (at(y0 + 1, x0 + 1) - at(y0 + 1, x0));
            out[y * w + x] = top + ty * (bot - top);
        }
    }
    out
}

struct Sampler<'a> {
    p: &'a SceneParams,
    rng: ChaCha8Rng,
}

impl Sampler<'_> {
    fn shape(&mut self) -> (f64, f64, f64) {
        let s = self.p.height.min(self.p.width) as f64;
        let (rmin, rmax) = self.p.radius_frac;
        let a = self.rng.gen_range(rmin..=rmax) * s;
        let b = self.rng.gen_range(rmin..=rmax) * s;
        let exponent = self.rng.gen_range(2.0..4.0);
        (a, b, exponent)
    }

    fn to_px(&self, fx: f64, fy: f64) -> (f64, f64) {
        (fx * (self.p.width - 1) as f64, fy * (self.p.height - 1) as f64)
    }

    fn important(&mut self) -> Result<Blob> {
        let (h, w) = (self.p.height, self.p.width);
        let total = (h * w) as f64;
        let (amin, amax) = self.p.area_frac;
        let (cx, cy) = self.p.important_center_frac;
        let jitter = Normal::new(0.0, self.p.center_jitter_std.max(1e-12)).unwrap();
        for _ in 0..1000 {
            let (a, b, exponent) = self.shape();
            let fx = cx + jitter.sample(&mut self.rng);
            let fy = cy + jitter.sample(&mut self.rng);
            let (px, py) = self.to_px(fx, fy);
            let blob = Blob {
                cx: px,
                cy: py,
                a,
                b,
                exponent,
            };
            // Requiring the mirrored placement to fit as well keeps the
            // accepted offsets symmetric, so the mean center is unbiased.
            let (mx, my) = self.to_px(2.0 * cx - fx, 2.0 * cy - fy);
            let mirrored = Blob {
                cx: mx,
                cy: my,
                ..blob
            };
            if !blob.fits(h, w) || !mirrored.fits(h, w) {
                continue;
            }
            let area = blob.area(h, w) as f64 / total;
            if area >= amin && area <= amax {
                return Ok(blob);
            }
        }
        Err(Error::InvalidParam(
            "could not place the important object inside the image within the area range".into(),
        ))
    }

    fn distractor(&mut self, policy: DistractorPolicy, placed: &[Blob]) -> Option<Blob> {
        let (h, w) = (self.p.height, self.p.width);
        let (cx, cy) = self.p.important_center_frac;
        let spread = Normal::new(0.0, self.p.at_prior_jitter_std.max(1e-12)).unwrap();
        for _ in 0..500 {
            let (a, b, exponent) = self.shape();
            let (fx, fy) = match policy {
                DistractorPolicy::SameAppearanceElsewhere => {
                    let fx: f64 = self.rng.gen_range(0.0..=1.0);
                    let fy: f64 = self.rng.gen_range(0.0..=1.0);
                    if ((fx - cx).powi(2) + (fy - cy).powi(2)).sqrt() < self.p.elsewhere_min_dist {
                        continue;
                    }
                    (fx, fy)
                }
                _ => (
                    cx + spread.sample(&mut self.rng),
                    cy + spread.sample(&mut self.rng),
                ),
            };
            let (px, py) = self.to_px(fx, fy);
            let blob = Blob {
                cx: px,
                cy: py,
                a,
                b,
                exponent,
            };
            if blob.fits(h, w) && placed.iter().all(|o| !blob.overlaps(o, 1.0)) {
                return Some(blob);
            }
        }
        None
    }
}

/// Renders sample `index` of the dataset described by `params`.
pub fn generate_scene(params: &SceneParams, index: usize) -> Result<Scene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(index as u64);
    let mut s = Sampler { p: params, rng };
    let (h, w) = (params.height, params.width);

    // Background: wall above the horizon, table below, each with its own
    // base colour and low-frequency texture.
    let horizon = s.rng.gen_range(params.horizon_frac.0..=params.horizon_frac.1) * h as f64;
    let spread = [params.surface_color_std; 3];
    let wall = sample_color(&mut s.rng, params.wall_color_mean, spread);
    let table = sample_color(&mut s.rng, params.table_color_mean, spread);
    let cell = (h.min(w) / 4).max(2);
    let tex_wall = value_noise(&mut s.rng, h, w, cell);
    let tex_table = value_noise(&mut s.rng, h, w, cell);

    let important = s.important()?;
    let obj_color = sample_color(&mut s.rng, params.obj_color_mean, params.obj_color_std);
    let mut blobs = vec![(important, obj_color, Label::Important)];
    for _ in 0..params.distractor_count {
        let policy = match params.distractor_policy {
            DistractorPolicy::Mixed => {
                if s.rng.gen_bool(0.5) {
                    DistractorPolicy::SameAppearanceElsewhere
                } else {
                    DistractorPolicy::DifferentAppearanceAtPrior
                }
            }
            p => p,
        };
        let placed: Vec<Blob> = blobs.iter().map(|b| b.0).collect();
        if let Some(blob) = s.distractor(policy, &placed) {
            let color = match policy {
                DistractorPolicy::SameAppearanceElsewhere => {
                    sample_color(&mut s.rng, params.obj_color_mean, params.obj_color_std)
                }
                _ => sample_color(&mut s.rng, params.alt_color_mean, params.alt_color_std),
            };
            blobs.push((blob, color, Label::Distractor(policy)));
        }
    }

    let noise = Normal::new(0.0, params.noise_std.max(1e-12)).unwrap();
    let mut labels = vec![Label::Background; h * w];
    let mut painted = vec![None; h * w];
    let mut rgb = vec![[0.0f64; 3]; h * w];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let (base, tex) = if (y as f64) < horizon {
                (wall, tex_wall[p])
            } else {
                (table, tex_table[p])
            };
            let mut c = base.map(|v| v + params.bg_texture_scale * tex);
            for (blob, color, label) in &blobs {
                let level = blob.level(x as f64, y as f64);
                if level <= 1.0 {
                    let shade = 1.0 - 0.2 * level;
                    let col = color.map(|v| (v * shade).clamp(0.0, 1.0));
                    c = col;
                    labels[p] = *label;
                    painted[p] = Some(col);
                }
            }
            rgb[p] = c;
        }
    }
    if params.noise_std > 0.0 {
        for c in rgb.iter_mut() {
            for v in c.iter_mut() {
                *v += noise.sample(&mut s.rng);
            }
        }
    }
    let image = ImageTensor::from_rgb_fn(h, w, |y, x| rgb[y * w + x].map(|v| v.clamp(0.0, 1.0)))?;
    let gt = BinaryMask::new(
        h,
        w,
        labels.iter().map(|l| (*l == Label::Important) as u8).collect(),
    )?;
    let sample = SampleRecord::new(format!("{index:04}"), image, None, Some(gt))?;
    Ok(Scene {
        sample,
        labels,
        painted,
    })
}

pub fn generate_dataset(params: &SceneParams, n: usize) -> Result<Vec<SampleRecord>> {
    if n == 0 {
        return Err(Error::Empty("dataset size must be >= 1".into()));
    }
    (0..n)
        .map(|i| generate_scene(params, i).map(|s| s.sample))
        .collect()
}
