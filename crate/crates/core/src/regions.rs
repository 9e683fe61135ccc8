//! The segmentation agent: overlapping region proposals and the region
//! projection that turns a coarse per-pixel map into a segment-aligned one.
//!
//! Proposals come from a greedy graph-based merge (Felzenszwalb-Huttenlocher
//! style) run once per merge threshold. Each run yields a partition of the
//! image; the union of all partitions is an overlapping, hierarchical region
//! set.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, ImageTensor, ProbMap, SampleRecord};

/// Overlapping binary regions over one image, stored as sorted row-major
/// pixel indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionSet {
    height: usize,
    width: usize,
    regions: Vec<Vec<u32>>,
}

impl RegionSet {
    /// Validates that every region is nonempty, in bounds and 4-connected.
    /// Pixel lists are sorted and deduplicated.
    pub fn new(height: usize, width: usize, regions: Vec<Vec<u32>>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!("{height}x{width} region set")));
        }
        if regions.is_empty() {
            return Err(Error::Empty("region set has no regions".into()));
        }
        let n = (height * width) as u32;
        let mut out = Vec::with_capacity(regions.len());
        for (k, mut r) in regions.into_iter().enumerate() {
            r.sort_unstable();
            r.dedup();
            if r.is_empty() {
                return Err(Error::Empty(format!("region {k} is empty")));
            }
            if *r.last().unwrap() >= n {
                return Err(Error::InvalidParam(format!(
                    "region {k} has pixel index {} outside a {height}x{width} image",
                    r.last().unwrap()
                )));
            }
            if !is_connected(&r, height, width) {
                return Err(Error::InvalidParam(format!("region {k} is not 4-connected")));
            }
            out.push(r);
        }
        Ok(Self {
            height,
            width,
            regions: out,
        })
    }

    pub fn from_masks(masks: &[BinaryMask]) -> Result<Self> {
        let first = masks.first().ok_or_else(|| Error::Empty("no masks".into()))?;
        let dims = first.dims();
        let mut regions = Vec::with_capacity(masks.len());
        for m in masks {
            if m.dims() != dims {
                return Err(Error::shape(dims, m.dims()));
            }
            regions.push(
                m.data()
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v == 1)
                    .map(|(i, _)| i as u32)
                    .collect(),
            );
        }
        Self::new(dims.0, dims.1, regions)
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
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[Vec<u32>] {
        &self.regions
    }

    pub fn mask(&self, k: usize) -> BinaryMask {
        let mut data = vec![0u8; self.height * self.width];
        for &p in &self.regions[k] {
            data[p as usize] = 1;
        }
        BinaryMask::new(self.height, self.width, data).expect("indices validated")
    }

    /// True when every pixel belongs to at least one region.
    pub fn covers_all(&self) -> bool {
        let mut seen = vec![false; self.height * self.width];
        for r in &self.regions {
            for &p in r {
                seen[p as usize] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

fn is_connected(pixels: &[u32], height: usize, width: usize) -> bool {
    let members: HashSet<u32> = pixels.iter().copied().collect();
    let mut visited = HashSet::with_capacity(pixels.len());
    let mut stack = vec![pixels[0]];
    visited.insert(pixels[0]);
    while let Some(p) = stack.pop() {
        let (y, x) = (p as usize / width, p as usize % width);
        let mut push = |q: usize| {
            let q = q as u32;
            if members.contains(&q) && visited.insert(q) {
                stack.push(q);
            }
        };
        if x > 0 {
            push(p as usize - 1);
        }
        if x + 1 < width {
            push(p as usize + 1);
        }
        if y > 0 {
            push(p as usize - width);
        }
        if y + 1 < height {
            push(p as usize + width);
        }
    }
    visited.len() == pixels.len()
}

/// Parameters of the multi-scale proposer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposerParams {
    /// Merge thresholds, strictly increasing; larger values give coarser
    /// partitions.
    pub scales: Vec<f64>,
    /// Segments smaller than this are absorbed into a neighbour.
    pub min_region_px: usize,
    /// Mix between colour distance (0) and luminance step (1) in the edge
    /// weight.
    pub edge_weight: f64,
}

impl Default for ProposerParams {
    fn default() -> Self {
        Self {
            scales: vec![0.1, 0.3, 0.9],
            min_region_px: 4,
            edge_weight: 0.5,
        }
    }
}

impl ProposerParams {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::InvalidParam("scales must be nonempty".into()));
        }
        if self.scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidParam(
                "scales must be finite and nonnegative".into(),
            ));
        }
        if self.scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParam("scales must be strictly increasing".into()));
        }
        if self.min_region_px == 0 {
            return Err(Error::InvalidParam("min_region_px must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_weight) {
            return Err(Error::InvalidParam("edge_weight must be in [0, 1]".into()));
        }
        Ok(())
    }
}

struct Edge {
    a: u32,
    b: u32,
    w: f64,
}

/// Sorted 4-neighbour edges. Weight mixes the RGB distance (scaled to [0, 1])
/// with the absolute luminance step across the edge.
fn build_edges(image: &ImageTensor, edge_weight: f64) -> Vec<Edge> {
    let (h, w) = image.dims();
    let c = image.channels();
    let gray = image.gray();
    let color_norm = (c as f64).sqrt();
    let weight = |p: usize, q: usize| {
        let mut d2 = 0.0;
        for ch in 0..c {
            let plane = image.plane(ch);
            let d = plane[p] - plane[q];
            d2 += d * d;
        }
        let color = d2.sqrt() / color_norm;
        let step = (gray[p] - gray[q]).abs();
        (1.0 - edge_weight) * color + edge_weight * step
    };
    let mut edges = Vec::with_capacity(2 * h * w);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                edges.push(Edge {
                    a: p as u32,
                    b: (p + 1) as u32,
                    w: weight(p, p + 1),
                });
            }
            if y + 1 < h {
                edges.push(Edge {
                    a: p as u32,
                    b: (p + w) as u32,
                    w: weight(p, p + w),
                });
            }
        }
    }
    // Stable sort keeps construction order among equal weights.
    edges.sort_by(|l, r| l.w.total_cmp(&r.w));
    edges
}

struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
    internal: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let next = self.parent[x as usize];
            self.parent[x as usize] = self.parent[next as usize];
            x = next;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32, w: f64) {
        let (big, small) = if self.size[a as usize] >= self.size[b as usize] {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.internal[big as usize] = self.internal[big as usize]
            .max(self.internal[small as usize])
            .max(w);
    }
}

fn segment_with_edges(edges: &[Edge], n: usize, threshold: f64, min_region_px: usize) -> Vec<Vec<u32>> {
    let mut ds = DisjointSet::new(n);
    for e in edges {
        let (ra, rb) = (ds.find(e.a), ds.find(e.b));
        if ra == rb {
            continue;
        }
        let tol_a = ds.internal[ra as usize] + threshold / ds.size[ra as usize] as f64;
        let tol_b = ds.internal[rb as usize] + threshold / ds.size[rb as usize] as f64;
        if e.w <= tol_a.min(tol_b) {
            ds.union(ra, rb, e.w);
        }
    }
    // Absorb undersized segments along the cheapest remaining edges.
    if min_region_px > 1 {
        for e in edges {
            let (ra, rb) = (ds.find(e.a), ds.find(e.b));
            let small = (ds.size[ra as usize] as usize).min(ds.size[rb as usize] as usize);
            if ra != rb && small < min_region_px {
                ds.union(ra, rb, e.w);
            }
        }
    }
    let mut label = vec![u32::MAX; n];
    let mut out: Vec<Vec<u32>> = Vec::new();
    for p in 0..n as u32 {
        let root = ds.find(p) as usize;
        if label[root] == u32::MAX {
            label[root] = out.len() as u32;
            out.push(Vec::new());
        }
        out[label[root] as usize].push(p);
    }
    out
}

/// Partition of the image at a single merge threshold. Segments are listed in
/// order of their first pixel.
pub fn segment_scale(
    image: &ImageTensor,
    threshold: f64,
    min_region_px: usize,
    edge_weight: f64,
) -> Vec<Vec<u32>> {
    let edges = build_edges(image, edge_weight);
    segment_with_edges(&edges, image.height() * image.width(), threshold, min_region_px)
}

/// Runs the greedy merge at every scale and returns the union of all
/// partitions. Segments repeated across scales are kept once.
pub fn propose_regions(image: &ImageTensor, params: &ProposerParams) -> Result<RegionSet> {
    params.validate()?;
    let (h, w) = image.dims();
    let edges = build_edges(image, params.edge_weight);
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut regions = Vec::new();
    for &scale in &params.scales {
        for seg in segment_with_edges(&edges, h * w, scale, params.min_region_px) {
            if seen.insert(seg.clone()) {
                regions.push(seg);
            }
        }
    }
    RegionSet::new(h, w, regions)
}

/// Proposes regions for every sample that lacks them, in parallel.
pub fn attach_regions(samples: &mut [SampleRecord], params: &ProposerParams) -> Result<()> {
    params.validate()?;
    samples
        .par_iter_mut()
        .filter(|s| s.regions.is_none())
        .try_for_each(|s| {
            s.regions = Some(propose_regions(&s.image, params)?);
            Ok(())
        })
}

/// Replaces each region by the mean of `a` over it, then takes the per-pixel
/// maximum over all regions containing the pixel. Pixels outside every
/// region map to 0.
pub fn project(a: &ProbMap, r: &RegionSet) -> Result<ProbMap> {
    a.ensure_dims(r.dims())?;
    let values = a.data();
    let mut out = vec![0.0f64; values.len()];
    let mut covered = vec![false; values.len()];
    for region in r.regions() {
        // Shifted by the first value so constant regions average exactly.
        let base = values[region[0] as usize];
        let dev: f64 = region.iter().map(|&p| values[p as usize] - base).sum();
        let mean = (base + dev / region.len() as f64).clamp(0.0, 1.0);
        for &p in region {
            let p = p as usize;
            if !covered[p] || mean > out[p] {
                out[p] = mean;
                covered[p] = true;
            }
        }
    }
    ProbMap::new(a.height(), a.width(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(w: usize, y0: usize, y1: usize, x0: usize, x1: usize) -> Vec<u32> {
        let mut v = Vec::new();
        for y in y0..y1 {
            for x in x0..x1 {
                v.push((y * w + x) as u32);
            }
        }
        v
    }

    /// Brute force: for every pixel, scan every region, recompute its mean.
    fn project_oracle(a: &ProbMap, r: &RegionSet) -> Vec<f64> {
        let (h, w) = a.dims();
        let mut out = vec![0.0; h * w];
        for (p, slot) in out.iter_mut().enumerate() {
            let mut best: Option<f64> = None;
            for k in 0..r.len() {
                let m = r.mask(k);
                if m.data()[p] == 0 {
                    continue;
                }
                let (mut s, mut n) = (0.0, 0usize);
                for q in 0..h * w {
                    if m.data()[q] == 1 {
                        s += a.data()[q];
                        n += 1;
                    }
                }
                let mean = s / n as f64;
                best = Some(best.map_or(mean, |b: f64| b.max(mean)));
            }
            *slot = best.unwrap_or(0.0);
        }
        out
    }

    fn half_planes(h: usize, w: usize, left: [f64; 3], right: [f64; 3]) -> ImageTensor {
        ImageTensor::from_rgb_fn(h, w, |_, x| if x < w / 2 { left } else { right }).unwrap()
    }

    #[test]
    fn uniform_image_gives_one_full_region_per_scale() {
        let img = ImageTensor::from_rgb_fn(9, 7, |_, _| [0.3, 0.6, 0.1]).unwrap();
        let params = ProposerParams::default();
        for &s in &params.scales {
            let segs = segment_scale(&img, s, params.min_region_px, params.edge_weight);
            assert_eq!(segs.len(), 1);
            assert_eq!(segs[0].len(), 63);
        }
        let rs = propose_regions(&img, &params).unwrap();
        assert_eq!(rs.len(), 1);
        assert!(rs.covers_all());
    }

    #[test]
    fn half_planes_split_exactly_at_boundary() {
        let img = half_planes(8, 10, [0.9, 0.1, 0.1], [0.1, 0.2, 0.8]);
        // Edge weight across the boundary with the default mix.
        let params = ProposerParams {
            scales: vec![0.05, 0.15, 0.3],
            ..Default::default()
        };
        let gray_l: f64 = 0.299 * 0.9 + 0.587 * 0.1 + 0.114 * 0.1;
        let gray_r = 0.299 * 0.1 + 0.587 * 0.2 + 0.114 * 0.8;
        let color = ((0.8f64.powi(2) + 0.1f64.powi(2) + 0.7f64.powi(2)) / 3.0).sqrt();
        let gap = 0.5 * color + 0.5 * (gray_l - gray_r).abs();
        assert!(params.scales.iter().all(|s| *s < gap));
        for &s in &params.scales {
            let segs = segment_scale(&img, s, params.min_region_px, params.edge_weight);
            assert_eq!(segs.len(), 2);
            assert_eq!(segs[0], rect(10, 0, 8, 0, 5));
            assert_eq!(segs[1], rect(10, 0, 8, 5, 10));
        }
        let rs = propose_regions(&img, &params).unwrap();
        assert_eq!(rs.len(), 2);
    }

    #[test]
    fn single_pixel_image_is_one_region() {
        let img = ImageTensor::new(1, 1, 3, vec![0.2, 0.4, 0.6]).unwrap();
        let rs = propose_regions(&img, &ProposerParams::default()).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs.regions()[0], vec![0]);
    }

    #[test]
    fn invalid_params_rejected() {
        let img = ImageTensor::from_rgb_fn(4, 4, |_, _| [0.0; 3]).unwrap();
        for p in [
            ProposerParams {
                scales: vec![],
                ..Default::default()
            },
            ProposerParams {
                scales: vec![0.3, 0.3],
                ..Default::default()
            },
            ProposerParams {
                scales: vec![0.5, 0.1],
                ..Default::default()
            },
            ProposerParams {
                min_region_px: 0,
                ..Default::default()
            },
            ProposerParams {
                edge_weight: 1.5,
                ..Default::default()
            },
        ] {
            assert!(propose_regions(&img, &p).is_err());
        }
    }

    #[test]
    fn region_set_validation() {
        assert!(RegionSet::new(2, 2, vec![]).is_err());
        assert!(RegionSet::new(2, 2, vec![vec![]]).is_err());
        assert!(RegionSet::new(2, 2, vec![vec![4]]).is_err());
        // Diagonal pixels are not 4-connected.
        assert!(RegionSet::new(2, 2, vec![vec![0, 3]]).is_err());
        assert!(RegionSet::new(2, 2, vec![vec![0, 1, 3]]).is_ok());
    }

    #[test]
    fn project_constant_map_is_constant() {
        let a = ProbMap::constant(4, 4, 0.37).unwrap();
        let r = RegionSet::new(
            4,
            4,
            vec![rect(4, 0, 4, 0, 2), rect(4, 0, 2, 0, 4), rect(4, 0, 4, 2, 4)],
        )
        .unwrap();
        let out = project(&a, &r).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.37));
    }

    #[test]
    fn project_single_full_region_gives_mean() {
        let a = ProbMap::from_fn(3, 5, |y, x| ((y * 5 + x) as f64) / 14.0).unwrap();
        let r = RegionSet::new(3, 5, vec![(0..15).collect()]).unwrap();
        let out = project(&a, &r).unwrap();
        assert!(out.data().iter().all(|v| (*v - a.mean()).abs() < 1e-15));
    }

    #[test]
    fn project_overlapping_matches_oracle() {
        let a = ProbMap::new(
            4,
            4,
            vec![
                0.91, 0.12, 0.55, 0.03, 0.47, 0.66, 0.20, 0.81, 0.05, 0.39, 0.74, 0.28, 0.60, 0.17, 0.93,
                0.44,
            ],
        )
        .unwrap();
        // Left 4x2 and top 2x4, overlapping in the top-left 2x2 block.
        let r = RegionSet::new(4, 4, vec![rect(4, 0, 4, 0, 2), rect(4, 0, 2, 0, 4)]).unwrap();
        let out = project(&a, &r).unwrap();
        let want = project_oracle(&a, &r);
        for (o, w) in out.data().iter().zip(&want) {
            assert!((o - w).abs() <= 1e-12);
        }
        // Bottom-right 2x2 lies in neither region.
        assert_eq!(out.get(3, 3), 0.0);
    }

    #[test]
    fn project_rejects_dim_mismatch() {
        let a = ProbMap::constant(3, 3, 0.5).unwrap();
        let r = RegionSet::new(4, 4, vec![(0..16).collect()]).unwrap();
        assert!(project(&a, &r).is_err());
    }

    /// `(y0, height, x0, width)` of one rectangle.
    type Rect = (usize, usize, usize, usize);

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<Rect>)> {
        (
            proptest::collection::vec(0.0f64..=1.0, 36),
            proptest::collection::vec((0usize..6, 1usize..=6, 0usize..6, 1usize..=6), 1..6),
        )
    }

    fn build(vals: Vec<f64>, rects: &[Rect]) -> (ProbMap, RegionSet) {
        let regions: Vec<Vec<u32>> = rects
            .iter()
            .map(|&(y0, hh, x0, ww)| rect(6, y0, (y0 + hh).min(6), x0, (x0 + ww).min(6)))
            .collect();
        (
            ProbMap::new(6, 6, vals).unwrap(),
            RegionSet::new(6, 6, regions).unwrap(),
        )
    }

    proptest! {
        #[test]
        fn project_is_order_free((vals, rects) in arb_case()) {
            let (a, r) = build(vals, &rects);
            let mut rev = r.regions().to_vec();
            rev.reverse();
            let r2 = RegionSet::new(6, 6, rev).unwrap();
            prop_assert_eq!(project(&a, &r).unwrap(), project(&a, &r2).unwrap());
        }

        #[test]
        fn project_is_monotone((vals, rects) in arb_case(), bump in proptest::collection::vec(0.0f64..0.5, 36)) {
            let (a, r) = build(vals.clone(), &rects);
            let raised: Vec<f64> = vals.iter().zip(&bump).map(|(v, b)| (v + b).min(1.0)).collect();
            let a2 = ProbMap::new(6, 6, raised).unwrap();
            let (p1, p2) = (project(&a, &r).unwrap(), project(&a2, &r).unwrap());
            for (x, y) in p1.data().iter().zip(p2.data()) {
                prop_assert!(x <= y);
            }
        }

        #[test]
        fn project_within_input_range(vals in proptest::collection::vec(0.0f64..=1.0, 36)) {
            // Full coverage: the six rows as regions plus one column.
            let mut regions: Vec<Vec<u32>> = (0..6).map(|y| rect(6, y, y + 1, 0, 6)).collect();
            regions.push(rect(6, 0, 6, 2, 3));
            let r = RegionSet::new(6, 6, regions).unwrap();
            let a = ProbMap::new(6, 6, vals).unwrap();
            let out = project(&a, &r).unwrap();
            prop_assert!(out.min() >= a.min() - 1e-15 && out.max() <= a.max() + 1e-15);
        }

        #[test]
        fn project_idempotent_on_region_constant_partition(vals in proptest::collection::vec(0.0f64..=1.0, 4)) {
            let regions = vec![rect(6, 0, 3, 0, 3), rect(6, 0, 3, 3, 6), rect(6, 3, 6, 0, 3), rect(6, 3, 6, 3, 6)];
            let r = RegionSet::new(6, 6, regions.clone()).unwrap();
            let mut data = vec![0.0; 36];
            for (k, reg) in regions.iter().enumerate() {
                for &p in reg {
                    data[p as usize] = vals[k];
                }
            }
            let a = ProbMap::new(6, 6, data).unwrap();
            let once = project(&a, &r).unwrap();
            prop_assert_eq!(project(&once, &r).unwrap(), once);
        }

        #[test]
        fn proposals_cover_and_are_partitions_per_scale(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = ImageTensor::from_rgb_fn(10, 12, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
            let params = ProposerParams::default();
            for &s in &params.scales {
                let segs = segment_scale(&img, s, params.min_region_px, params.edge_weight);
                let total: usize = segs.iter().map(Vec::len).sum();
                prop_assert_eq!(total, 120);
            }
            let rs = propose_regions(&img, &params).unwrap();
            prop_assert!(rs.covers_all());
        }
    }
}
