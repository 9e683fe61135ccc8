//! Recognition pathways: fixed appearance features feeding a small trainable
//! per-pixel classifier, in a visual ("what") and a spatial ("where")
//! variant, plus the loss and optimizer used to train them.

mod features;
mod loss;
mod model;
mod optim;

pub use features::{
    box_mean, extract_features, extract_features_with, FeatureOptions, FeatureStack, FEATURE_DIM,
};
pub use loss::{bce_loss_and_grad, PROB_EPS};
pub use model::{sigmoid, PathwayKind, PathwayModel};
pub use optim::{Sgd, TrainConfig, REFERENCE_LR};

use crate::error::Result;
use crate::grid::{CoordGrids, ProbMap};

/// One training example as seen by a pathway.
#[derive(Clone, Copy)]
pub struct PixelBatchItem<'a> {
    pub feats: &'a FeatureStack,
    pub grids: Option<&'a CoordGrids>,
    pub target: &'a ProbMap,
}

/// Summed loss and gradient over a batch, accumulated in item order.
pub fn batch_loss_and_grad(model: &PathwayModel, batch: &[PixelBatchItem<'_>]) -> Result<(f64, Vec<f64>)> {
    let mut grads = vec![0.0; model.params().len()];
    let mut loss = 0.0;
    for item in batch {
        loss += model.accumulate_grad(item.feats, item.grids, item.target, &mut grads)?;
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_coord_grids, ImageTensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Loss via the public forward pass only, independent of the backward code.
    fn forward_loss(model: &PathwayModel, batch: &[PixelBatchItem<'_>]) -> f64 {
        batch
            .iter()
            .map(|b| {
                let pred = model.forward(b.feats, b.grids).unwrap();
                bce_loss_and_grad(&pred, b.target).unwrap().0
            })
            .sum()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grids = make_coord_grids(4, 4).unwrap();
        for kind in [PathwayKind::Visual, PathwayKind::Spatial] {
            for _ in 0..5 {
                let model = PathwayModel::init(kind, FEATURE_DIM, 4, &mut rng);
                let feats: Vec<_> = (0..3)
                    .map(|_| {
                        let img =
                            ImageTensor::from_rgb_fn(4, 4, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
                        extract_features(&img)
                    })
                    .collect();
                let targets: Vec<_> = (0..3)
                    .map(|_| ProbMap::from_fn(4, 4, |_, _| rng.gen()).unwrap())
                    .collect();
                let batch: Vec<_> = feats
                    .iter()
                    .zip(&targets)
                    .map(|(f, t)| PixelBatchItem {
                        feats: f,
                        grids: Some(&grids),
                        target: t,
                    })
                    .collect();
                let (_, grads) = batch_loss_and_grad(&model, &batch).unwrap();
                let h = 1e-5;
                for (i, &g) in grads.iter().enumerate() {
                    let mut plus = model.clone();
                    plus.params_mut()[i] += h;
                    let mut minus = model.clone();
                    minus.params_mut()[i] -= h;
                    let fd = (forward_loss(&plus, &batch) - forward_loss(&minus, &batch)) / (2.0 * h);
                    let denom = fd.abs().max(g.abs()).max(1e-6);
                    assert!(
                        (fd - g).abs() / denom < 1e-4,
                        "{kind:?} param {i}: fd {fd} analytic {g}"
                    );
                }
            }
        }
    }

    #[test]
    fn loss_mostly_decreases_on_fixed_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grids = make_coord_grids(4, 4).unwrap();
        let feats: Vec<_> = (0..10)
            .map(|_| {
                let img = ImageTensor::from_rgb_fn(4, 4, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
                extract_features(&img)
            })
            .collect();
        // The loss is summed, so the stable step shrinks with pixel count; 4x4 keeps
        // lr=1e-3 with momentum inside the stable range.
        // Learnable target: bright red pixels in the lower half.
        let targets: Vec<_> = feats
            .iter()
            .map(|f| {
                ProbMap::from_fn(4, 4, |y, x| {
                    let r = f.pixel(y * 4 + x)[0];
                    if r > 0.5 && y >= 2 {
                        0.9
                    } else {
                        0.1
                    }
                })
                .unwrap()
            })
            .collect();
        let batch: Vec<_> = feats
            .iter()
            .zip(&targets)
            .map(|(f, t)| PixelBatchItem {
                feats: f,
                grids: Some(&grids),
                target: t,
            })
            .collect();
        let cfg = TrainConfig {
            lr: 1e-3,
            ..TrainConfig::default()
        };
        let mut model = PathwayModel::init(PathwayKind::Spatial, FEATURE_DIM, 16, &mut rng);
        let mut opt = Sgd::new(model.params().len());
        let steps = 200;
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let (loss, grads) = batch_loss_and_grad(&model, &batch).unwrap();
            losses.push(loss);
            opt.step(&mut model, &grads, &cfg).unwrap();
        }
        let increases = losses.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(
            increases * 50 <= steps,
            "{increases} of {steps} steps increased the loss"
        );
        assert!(losses.last().unwrap() < &losses[0]);
    }
}
