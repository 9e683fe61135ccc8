//! Test-time fusion of the two pathways and threshold-sweep evaluation
//! (precision/recall curve, max F-score, average precision).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, ProbMap};

/// Pointwise mean of the visual and spatial predictions.
pub fn fuse(f_map: &ProbMap, g_map: &ProbMap) -> Result<ProbMap> {
    g_map.ensure_dims(f_map.dims())?;
    let data = f_map
        .data()
        .iter()
        .zip(g_map.data())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    ProbMap::new(f_map.height(), f_map.width(), data)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Counts pooled over every pixel of every image.
    #[default]
    Micro,
    /// Per-image precision/recall averaged across images with positives.
    Macro,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

pub const DEFAULT_THRESHOLDS: usize = 101;

pub fn threshold_grid(num_thresholds: usize) -> Vec<f64> {
    let last = (num_thresholds - 1) as f64;
    (0..num_thresholds).map(|k| k as f64 / last).collect()
}

/// Number of grid thresholds `t_k` with `t_k <= p`; a pixel is predicted
/// positive at threshold `k` iff `k < bucket(p)`.
fn bucket(p: f64, grid: &[f64]) -> usize {
    let last = grid.len() - 1;
    let mut k = ((p * last as f64).floor().max(0.0) as usize).min(last);
    while k < last && grid[k + 1] <= p {
        k += 1;
    }
    loop {
        if grid[k] <= p {
            return k + 1;
        }
        if k == 0 {
            return 0;
        }
        k -= 1;
    }
}

#[derive(Clone, Debug)]
struct Counts {
    /// Positives (gt = 1) per bucket.
    pos: Vec<u64>,
    /// Negatives per bucket.
    neg: Vec<u64>,
}

fn count_image(pred: &ProbMap, gt: &BinaryMask, grid: &[f64]) -> Counts {
    let mut c = Counts {
        pos: vec![0; grid.len() + 1],
        neg: vec![0; grid.len() + 1],
    };
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let b = bucket(p, grid);
        if g == 1 {
            c.pos[b] += 1;
        } else {
            c.neg[b] += 1;
        }
    }
    c
}

/// Precision and recall at every threshold from bucket histograms.
fn curve_from_counts(c: &Counts, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let total_pos: u64 = c.pos.iter().sum();
    let n = grid.len();
    let (mut precision, mut recall) = (vec![0.0; n], vec![0.0; n]);
    // Predicted positive at threshold k: buckets k + 1 ..= n.
    let (mut tp, mut fp) = (0u64, 0u64);
    for k in (0..n).rev() {
        tp += c.pos[k + 1];
        fp += c.neg[k + 1];
        precision[k] = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        recall[k] = tp as f64 / total_pos as f64;
    }
    (precision, recall)
}

pub fn pr_curve(preds: &[ProbMap], gts: &[BinaryMask], num_thresholds: usize) -> Result<PrCurve> {
    pr_curve_with(preds, gts, num_thresholds, Averaging::Micro)
}

pub fn pr_curve_with(
    preds: &[ProbMap],
    gts: &[BinaryMask],
    num_thresholds: usize,
    averaging: Averaging,
) -> Result<PrCurve> {
    if preds.len() != gts.len() {
        return Err(Error::InvalidParam(format!(
            "{} predictions for {} ground-truth masks",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("no predictions to evaluate".into()));
    }
    if num_thresholds < 2 {
        return Err(Error::InvalidParam("num_thresholds must be >= 2".into()));
    }
    for (p, g) in preds.iter().zip(gts) {
        p.ensure_dims(g.dims())?;
    }
    let grid = threshold_grid(num_thresholds);
    let per_image: Vec<Counts> = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| count_image(p, g, &grid))
        .collect();
    let (precision, recall) = match averaging {
        Averaging::Micro => {
            let mut pooled = Counts {
                pos: vec![0; num_thresholds + 1],
                neg: vec![0; num_thresholds + 1],
            };
            for c in &per_image {
                for b in 0..=num_thresholds {
                    pooled.pos[b] += c.pos[b];
                    pooled.neg[b] += c.neg[b];
                }
            }
            if pooled.pos.iter().sum::<u64>() == 0 {
                return Err(Error::NoPositives);
            }
            curve_from_counts(&pooled, &grid)
        }
        Averaging::Macro => {
            let usable: Vec<_> = per_image
                .iter()
                .filter(|c| c.pos.iter().sum::<u64>() > 0)
                .collect();
            if usable.is_empty() {
                return Err(Error::NoPositives);
            }
            let (mut p_sum, mut r_sum) = (vec![0.0; num_thresholds], vec![0.0; num_thresholds]);
            for c in &usable {
                let (p, r) = curve_from_counts(c, &grid);
                for k in 0..num_thresholds {
                    p_sum[k] += p[k];
                    r_sum[k] += r[k];
                }
            }
            let n = usable.len() as f64;
            (
                p_sum.into_iter().map(|v| v / n).collect(),
                r_sum.into_iter().map(|v| v / n).collect(),
            )
        }
    };
    Ok(PrCurve {
        thresholds: grid,
        precision,
        recall,
    })
}

fn f_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Best F-score over all thresholds.
pub fn max_f(curve: &PrCurve) -> f64 {
    curve
        .precision
        .iter()
        .zip(&curve.recall)
        .map(|(p, r)| f_score(*p, *r))
        .fold(0.0, f64::max)
}

/// Area under the precision/recall staircase: `sum_k (r_k - r_{k+1}) p_k`,
/// with recall taken as zero past the last threshold.
pub fn average_precision(curve: &PrCurve) -> f64 {
    let n = curve.recall.len();
    (0..n)
        .map(|k| {
            let next = if k + 1 < n { curve.recall[k + 1] } else { 0.0 };
            (curve.recall[k] - next) * curve.precision[k]
        })
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mf: f64,
    pub ap: f64,
    pub curve: PrCurve,
}

pub fn evaluate(
    preds: &[ProbMap],
    gts: &[BinaryMask],
    num_thresholds: usize,
    averaging: Averaging,
) -> Result<Metrics> {
    let curve = pr_curve_with(preds, gts, num_thresholds, averaging)?;
    Ok(Metrics {
        mf: max_f(&curve),
        ap: average_precision(&curve),
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive counting: threshold every pixel of every image directly.
    pub(crate) fn oracle_curve(preds: &[ProbMap], gts: &[BinaryMask], n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut precision = Vec::new();
        let mut recall = Vec::new();
        for k in 0..n {
            let t = k as f64 / (n - 1) as f64;
            let (mut tp, mut fp, mut fneg) = (0, 0, 0);
            for (p, g) in preds.iter().zip(gts) {
                for (v, m) in p.data().iter().zip(g.data()) {
                    match (*v >= t, *m == 1) {
                        (true, true) => tp += 1,
                        (true, false) => fp += 1,
                        (false, true) => fneg += 1,
                        _ => {}
                    }
                }
            }
            precision.push(if tp + fp == 0 {
                1.0
            } else {
                tp as f64 / (tp + fp) as f64
            });
            recall.push(tp as f64 / (tp + fneg) as f64);
        }
        (precision, recall)
    }

    #[test]
    fn fuse_basics() {
        let f = ProbMap::from_fn(3, 3, |y, x| (y * 3 + x) as f64 / 8.0).unwrap();
        assert_eq!(fuse(&f, &f).unwrap(), f);
        let zero = ProbMap::constant(2, 2, 0.0).unwrap();
        let one = ProbMap::constant(2, 2, 1.0).unwrap();
        assert!(fuse(&zero, &one).unwrap().data().iter().all(|v| *v == 0.5));
        let g = ProbMap::from_fn(3, 3, |y, x| ((x * 5 + y * 2) % 9) as f64 / 8.0).unwrap();
        let fused = fuse(&f, &g).unwrap();
        for i in 0..9 {
            assert_eq!(fused.data()[i], (f.data()[i] + g.data()[i]) / 2.0);
        }
        assert!(fuse(&f, &zero).is_err());
    }

    #[test]
    fn perfect_predictor() {
        let gt = BinaryMask::new(2, 3, vec![1, 0, 0, 1, 1, 0]).unwrap();
        let curve = pr_curve(&[gt.to_prob_map()], &[gt], 11).unwrap();
        for k in 1..11 {
            assert_eq!(curve.precision[k], 1.0);
            assert_eq!(curve.recall[k], 1.0);
        }
        assert_eq!(max_f(&curve), 1.0);
        assert_eq!(average_precision(&curve), 1.0);
    }

    #[test]
    fn complement_predictor() {
        let gt = BinaryMask::new(2, 2, vec![1, 0, 0, 1]).unwrap();
        let pred = ProbMap::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let curve = pr_curve(&[pred], &[gt], 11).unwrap();
        assert_eq!(curve.precision[5], 0.0);
        assert_eq!(curve.recall[5], 0.0);
    }

    #[test]
    fn two_by_two_table() {
        let gt = BinaryMask::new(2, 2, vec![1, 0, 0, 0]).unwrap();
        let pred = ProbMap::new(2, 2, vec![0.9, 0.6, 0.2, 0.1]).unwrap();
        let curve = pr_curve(std::slice::from_ref(&pred), std::slice::from_ref(&gt), 11).unwrap();
        let (p, r) = oracle_curve(&[pred], &[gt], 11);
        assert_eq!(curve.precision, p);
        assert_eq!(curve.recall, r);
        // Hand count: t=0 all four positive, t=0.3 {0.9, 0.6}, t=0.7 {0.9}, t=1.0 none.
        assert_eq!(curve.precision[0], 0.25);
        assert_eq!(curve.precision[3], 0.5);
        assert_eq!(curve.precision[7], 1.0);
        assert_eq!((curve.precision[10], curve.recall[10]), (1.0, 0.0));
        assert_eq!(max_f(&curve), 1.0);
    }

    #[test]
    fn constant_half_with_quarter_positives() {
        let gt = BinaryMask::new(2, 2, vec![1, 0, 0, 0]).unwrap();
        let pred = ProbMap::constant(2, 2, 0.5).unwrap();
        let curve = pr_curve(&[pred], &[gt], 101).unwrap();
        assert!((max_f(&curve) - 0.4).abs() < 1e-12);
        assert!((average_precision(&curve) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn no_positives_is_an_error() {
        let gt = BinaryMask::new(1, 2, vec![0, 0]).unwrap();
        let pred = ProbMap::constant(1, 2, 0.3).unwrap();
        assert!(matches!(
            pr_curve(std::slice::from_ref(&pred), std::slice::from_ref(&gt), 11),
            Err(Error::NoPositives)
        ));
        assert!(pr_curve(std::slice::from_ref(&pred), std::slice::from_ref(&gt), 1).is_err());
        assert!(pr_curve(&[pred], &[], 11).is_err());
    }

    #[test]
    fn macro_average_of_identical_images_equals_micro() {
        let gt = BinaryMask::new(2, 2, vec![1, 0, 1, 0]).unwrap();
        let pred = ProbMap::new(2, 2, vec![0.8, 0.3, 0.4, 0.7]).unwrap();
        let preds = vec![pred.clone(), pred];
        let gts = vec![gt.clone(), gt];
        let micro = pr_curve_with(&preds, &gts, 21, Averaging::Micro).unwrap();
        let macro_ = pr_curve_with(&preds, &gts, 21, Averaging::Macro).unwrap();
        assert_eq!(micro, macro_);
    }

    #[test]
    fn bucket_agrees_with_direct_comparison_on_awkward_values() {
        let grid = threshold_grid(101);
        for p in [0.57, 0.29, 0.58, 0.07, 0.99, 1.0, 0.0, 0.01, 0.3, 0.7] {
            let direct = grid.iter().filter(|t| **t <= p).count();
            assert_eq!(bucket(p, &grid), direct, "p = {p}");
        }
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<u8>>)> {
        (1usize..4).prop_flat_map(|n| {
            (
                proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 16), n),
                proptest::collection::vec(proptest::collection::vec(0u8..=1, 16), n),
            )
        })
    }

    proptest! {
        #[test]
        fn curve_matches_oracle_and_bounds((pv, gv) in arb_instance(), n in 2usize..30) {
            let preds: Vec<_> = pv.into_iter().map(|v| ProbMap::new(4, 4, v).unwrap()).collect();
            let gts: Vec<_> = gv.into_iter().map(|v| BinaryMask::new(4, 4, v).unwrap()).collect();
            prop_assume!(gts.iter().any(|g| g.count_ones() > 0));
            let curve = pr_curve(&preds, &gts, n).unwrap();
            let (p, r) = oracle_curve(&preds, &gts, n);
            prop_assert_eq!(&curve.precision, &p);
            prop_assert_eq!(&curve.recall, &r);
            prop_assert!(curve.recall.windows(2).all(|w| w[1] <= w[0]));
            let (mf, ap) = (max_f(&curve), average_precision(&curve));
            prop_assert!((0.0..=1.0).contains(&mf) && (0.0..=1.0).contains(&ap));
        }

        #[test]
        fn finer_grid_never_lowers_mf((pv, gv) in arb_instance()) {
            let preds: Vec<_> = pv.into_iter().map(|v| ProbMap::new(4, 4, v).unwrap()).collect();
            let gts: Vec<_> = gv.into_iter().map(|v| BinaryMask::new(4, 4, v).unwrap()).collect();
            prop_assume!(gts.iter().any(|g| g.count_ones() > 0));
            let coarse = max_f(&pr_curve(&preds, &gts, 11).unwrap());
            let fine = max_f(&pr_curve(&preds, &gts, 101).unwrap());
            prop_assert!(fine >= coarse);
        }

        #[test]
        fn joint_pixel_permutation_is_invariant(
            pv in proptest::collection::vec(0.0f64..=1.0, 16),
            gv in proptest::collection::vec(0u8..=1, 16),
            perm_seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            prop_assume!(gv.contains(&1));
            let mut idx: Vec<usize> = (0..16).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
            let a = (ProbMap::new(4, 4, pv.clone()).unwrap(), BinaryMask::new(4, 4, gv.clone()).unwrap());
            let b = (
                ProbMap::new(4, 4, idx.iter().map(|i| pv[*i]).collect()).unwrap(),
                BinaryMask::new(4, 4, idx.iter().map(|i| gv[*i]).collect()).unwrap(),
            );
            let ca = pr_curve(&[a.0], &[a.1], 101).unwrap();
            let cb = pr_curve(&[b.0], &[b.1], 101).unwrap();
            prop_assert_eq!(max_f(&ca), max_f(&cb));
            prop_assert_eq!(average_precision(&ca), average_precision(&cb));
        }
    }
}
