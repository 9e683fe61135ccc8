//! Alternating cross-pathway supervision.
//!
//! Round schedule: `Initial` (prior -> first pathway), then `V2S` (first ->
//! second) and `S2V` (second -> first) alternating. In every round the
//! teacher map is projected through each sample's region set and used as a
//! soft target for the student; the teacher is a snapshot frozen at round
//! start and only the student's weights change.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fmt;
use std::hash::Hasher;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, fuse, Averaging, DEFAULT_THRESHOLDS};
use crate::grid::{make_coord_grids, BinaryMask, CoordGrids, ImageTensor, ProbMap, SampleRecord};
use crate::io::encode_vsm;
use crate::pathways::{
    extract_features_with, FeatureOptions, FeatureStack, PathwayKind, PathwayModel, Sgd, TrainConfig,
    FEATURE_DIM,
};
use crate::prior::{gaussian_prior, PriorSpec};
use crate::regions::{project, RegionSet};

/// Mean absolute change of fused predictions below which training stops early.
pub const EARLY_STOP_DELTA: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoundKind {
    Initial,
    V2S,
    S2V,
}

impl RoundKind {
    /// Slot whose weights the round updates.
    pub fn student(self) -> Slot {
        match self {
            RoundKind::Initial | RoundKind::S2V => Slot::First,
            RoundKind::V2S => Slot::Second,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoundKind::Initial => "Initial",
            RoundKind::V2S => "V2S",
            RoundKind::S2V => "S2V",
        }
    }
}

impl fmt::Display for RoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Round kinds for `rounds` rounds: Initial, V2S, S2V, V2S, ...
pub fn schedule(rounds: usize) -> Vec<RoundKind> {
    (0..rounds)
        .map(|i| match i {
            0 => RoundKind::Initial,
            i if i % 2 == 1 => RoundKind::V2S,
            _ => RoundKind::S2V,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// Supervised by the prior in the Initial round; the visual pathway in
    /// the standard network.
    First,
    /// The spatial pathway in the standard network.
    Second,
}

/// Which pathway kinds fill the two slots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Network {
    /// Visual + spatial.
    #[default]
    Vsn,
    /// Two visual pathways.
    Vvn,
    /// Two spatial pathways.
    Ssn,
}

impl Network {
    pub fn kinds(self) -> (PathwayKind, PathwayKind) {
        match self {
            Network::Vsn => (PathwayKind::Visual, PathwayKind::Spatial),
            Network::Vvn => (PathwayKind::Visual, PathwayKind::Visual),
            Network::Ssn => (PathwayKind::Spatial, PathwayKind::Spatial),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Network::Vsn => "VSN",
            Network::Vvn => "VVN",
            Network::Ssn => "SSN",
        }
    }
}

/// Per-round log entry.
#[derive(Clone, Debug)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: usize,
    pub kind: RoundKind,
    /// Mean per-image minibatch loss over the round's iterations.
    pub mean_loss: f64,
    /// Mean per-image loss over the whole set against this round's targets,
    /// before the first and after the last step.
    pub loss_start: f64,
    pub loss_end: f64,
    /// Fused-prediction max F-score, when every sample has ground truth.
    pub mf: Option<f64>,
    /// Mean absolute change in fused predictions since the previous round.
    pub fused_change: Option<f64>,
    /// Digest of the targets computed at round start, and of the targets
    /// recomputed from the teacher snapshot after the last step.
    pub targets_digest_start: u64,
    pub targets_digest_end: u64,
    /// Serialized weights of the non-trained slot were byte-identical before
    /// and after the round.
    pub frozen_unchanged: bool,
    /// Models after the round.
    pub first: PathwayModel,
    pub second: PathwayModel,
    /// Targets used this round, kept only on request.
    pub targets: Option<Vec<ProbMap>>,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub network: Network,
    /// Slot trained in Initial and S2V rounds.
    pub visual: PathwayModel,
    /// Slot trained in V2S rounds.
    pub spatial: PathwayModel,
    pub round_index: usize,
    pub history: Vec<RoundRecord>,
    /// Feature extraction both pathways were trained with.
    pub features: FeatureOptions,
}

impl TrainState {
    /// Fresh models with fan-in uniform weights from `cfg.seed`.
    pub fn new(network: Network, cfg: &TrainConfig) -> Self {
        let (k1, k2) = network.kinds();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let visual = PathwayModel::init(k1, FEATURE_DIM, cfg.hidden, &mut rng);
        rng.set_stream(2);
        let spatial = PathwayModel::init(k2, FEATURE_DIM, cfg.hidden, &mut rng);
        Self {
            network,
            visual,
            spatial,
            round_index: 0,
            history: Vec::new(),
            features: cfg.feature_options(),
        }
    }

    pub fn slot(&self, slot: Slot) -> &PathwayModel {
        match slot {
            Slot::First => &self.visual,
            Slot::Second => &self.spatial,
        }
    }

    fn slot_mut(&mut self, slot: Slot) -> &mut PathwayModel {
        match slot {
            Slot::First => &mut self.visual,
            Slot::Second => &mut self.spatial,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub network: Network,
    /// Keep every round's targets in the history.
    pub keep_targets: bool,
}

/// A dataset with features, coordinate grids and regions precomputed.
pub struct TrainingSet<'a> {
    samples: &'a [SampleRecord],
    feats: Vec<FeatureStack>,
    grids: Vec<Arc<CoordGrids>>,
    options: FeatureOptions,
}

impl<'a> TrainingSet<'a> {
    pub fn new(samples: &'a [SampleRecord], features: FeatureOptions) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("training set is empty".into()));
        }
        for s in samples {
            if s.regions.is_none() {
                return Err(Error::MissingRegions(s.id.clone()));
            }
        }
        let feats = samples
            .par_iter()
            .map(|s| extract_features_with(&s.image, features))
            .collect();
        let mut cache: HashMap<(usize, usize), Arc<CoordGrids>> = HashMap::new();
        let mut grids = Vec::with_capacity(samples.len());
        for s in samples {
            let (h, w) = s.dims();
            let g = match cache.get(&(h, w)) {
                Some(g) => g.clone(),
                None => {
                    let g = Arc::new(make_coord_grids(h, w)?);
                    cache.insert((h, w), g.clone());
                    g
                }
            };
            grids.push(g);
        }
        Ok(Self {
            samples,
            feats,
            grids,
            options: features,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SampleRecord] {
        self.samples
    }

    pub fn feature_options(&self) -> FeatureOptions {
        self.options
    }

    pub fn features(&self, i: usize) -> &FeatureStack {
        &self.feats[i]
    }

    pub fn grids(&self, i: usize) -> &CoordGrids {
        &self.grids[i]
    }

    fn regions(&self, i: usize) -> &RegionSet {
        self.samples[i].regions.as_ref().expect("checked in new")
    }

    fn gts(&self) -> Option<Vec<BinaryMask>> {
        self.samples.iter().map(|s| s.gt.clone()).collect()
    }

    /// Per-sample predictions of one model.
    pub fn predict(&self, model: &PathwayModel) -> Result<Vec<ProbMap>> {
        (0..self.len())
            .into_par_iter()
            .map(|i| model.forward(&self.feats[i], Some(&self.grids[i])))
            .collect()
    }

    /// Per-sample average of the two slots' predictions.
    pub fn predict_fused(&self, state: &TrainState) -> Result<Vec<ProbMap>> {
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let f = state.visual.forward(&self.feats[i], Some(&self.grids[i]))?;
                let g = state.spatial.forward(&self.feats[i], Some(&self.grids[i]))?;
                fuse(&f, &g)
            })
            .collect()
    }

    /// Prior projected through each sample's regions, used as a predictor.
    pub fn prior_projection(&self, spec: &PriorSpec) -> Result<Vec<ProbMap>> {
        let mut cache: HashMap<(usize, usize), ProbMap> = HashMap::new();
        let mut out = Vec::with_capacity(self.len());
        for (i, s) in self.samples.iter().enumerate() {
            let (h, w) = s.dims();
            if let std::collections::hash_map::Entry::Vacant(e) = cache.entry((h, w)) {
                e.insert(gaussian_prior(spec, h, w)?);
            }
            out.push(project(&cache[&(h, w)], self.regions(i))?);
        }
        Ok(out)
    }

    /// Round targets from frozen teacher weights.
    fn targets(&self, kind: RoundKind, teacher: &TrainState, spec: &PriorSpec) -> Result<Vec<ProbMap>> {
        match kind {
            RoundKind::Initial => self.prior_projection(spec),
            RoundKind::V2S | RoundKind::S2V => {
                let model = teacher.slot(match kind {
                    RoundKind::V2S => Slot::First,
                    _ => Slot::Second,
                });
                (0..self.len())
                    .into_par_iter()
                    .map(|i| {
                        let a = model.forward(&self.feats[i], Some(&self.grids[i]))?;
                        project(&a, self.regions(i))
                    })
                    .collect()
            }
        }
    }

    fn mean_loss(&self, model: &PathwayModel, targets: &[ProbMap]) -> Result<f64> {
        let losses: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let mut scratch = vec![0.0; model.params().len()];
                model.accumulate_grad(&self.feats[i], Some(&self.grids[i]), &targets[i], &mut scratch)
            })
            .collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / self.len() as f64)
    }
}

/// Target map for one sample: the round's teacher map projected through the
/// sample's regions.
pub fn make_targets(
    kind: RoundKind,
    sample: &SampleRecord,
    state: &TrainState,
    spec: &PriorSpec,
) -> Result<ProbMap> {
    let regions = sample
        .regions
        .as_ref()
        .ok_or_else(|| Error::MissingRegions(sample.id.clone()))?;
    let (h, w) = sample.dims();
    let teacher = match kind {
        RoundKind::Initial => gaussian_prior(spec, h, w)?,
        RoundKind::V2S | RoundKind::S2V => {
            let feats = extract_features_with(&sample.image, state.features);
            let grids = make_coord_grids(h, w)?;
            let slot = if kind == RoundKind::V2S {
                Slot::First
            } else {
                Slot::Second
            };
            state.slot(slot).forward(&feats, Some(&grids))?
        }
    };
    project(&teacher, regions)
}

/// Average of both pathways' maps for one image, the test-time prediction.
pub fn predict_fused_image(
    first: &PathwayModel,
    second: &PathwayModel,
    image: &ImageTensor,
    features: FeatureOptions,
) -> Result<ProbMap> {
    let feats = extract_features_with(image, features);
    let grids = make_coord_grids(image.height(), image.width())?;
    fuse(
        &first.forward(&feats, Some(&grids))?,
        &second.forward(&feats, Some(&grids))?,
    )
}

fn digest(maps: &[ProbMap]) -> u64 {
    let mut h = DefaultHasher::new();
    for m in maps {
        for v in m.data() {
            h.write_u64(v.to_bits());
        }
    }
    h.finish()
}

/// Draws minibatches from a seeded permutation, reshuffling when exhausted.
struct Batches {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl Batches {
    fn new(n: usize, seed: u64, round: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(100 + round as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { rng, order, pos: 0 }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Runs one round on a prepared set and appends its record to the history.
pub fn run_round_prepared(
    kind: RoundKind,
    data: &TrainingSet<'_>,
    mut state: TrainState,
    cfg: &TrainConfig,
    spec: &PriorSpec,
    keep_targets: bool,
) -> Result<TrainState> {
    cfg.validate()?;
    if data.options != state.features {
        return Err(Error::InvalidParam(
            "training set and models use different feature options".into(),
        ));
    }
    let round = state.round_index + 1;
    let student_slot = kind.student();
    let frozen_slot = match student_slot {
        Slot::First => Slot::Second,
        Slot::Second => Slot::First,
    };
    let teacher = state.clone();
    let targets = data.targets(kind, &teacher, spec)?;
    let targets_digest_start = digest(&targets);
    let frozen_before = encode_vsm(state.slot(frozen_slot));

    let diverged = |iteration: usize, detail: String| Error::Divergence {
        round: format!("{kind} (round {round})"),
        iteration,
        detail,
    };

    let loss_start = data.mean_loss(state.slot(student_slot), &targets)?;
    let mut batches = Batches::new(data.len(), cfg.seed, round);
    let mut opt = Sgd::new(state.slot(student_slot).params().len());
    let mut loss_sum = 0.0;
    for it in 0..cfg.iters_per_round {
        let idx = batches.next(cfg.batch_size);
        let student = state.slot(student_slot);
        let per_image: Vec<(f64, Vec<f64>)> = idx
            .par_iter()
            .map(|&i| {
                let mut g = vec![0.0; student.params().len()];
                let l = student.accumulate_grad(&data.feats[i], Some(&data.grids[i]), &targets[i], &mut g)?;
                Ok((l, g))
            })
            .collect::<Result<_>>()?;
        // Reduce in batch order so results do not depend on scheduling.
        let mut grads = vec![0.0; student.params().len()];
        let mut loss = 0.0;
        for (l, g) in &per_image {
            loss += l;
            for (acc, v) in grads.iter_mut().zip(g) {
                *acc += v;
            }
        }
        if !loss.is_finite() {
            return Err(diverged(it, format!("loss is {loss}")));
        }
        loss_sum += loss / cfg.batch_size as f64;
        opt.step(state.slot_mut(student_slot), &grads, cfg)
            .map_err(|e| diverged(it, e.to_string()))?;
    }
    let loss_end = data.mean_loss(state.slot(student_slot), &targets)?;
    if !loss_end.is_finite() {
        return Err(diverged(cfg.iters_per_round, format!("final loss is {loss_end}")));
    }
    let mean_loss = if cfg.iters_per_round == 0 {
        loss_start
    } else {
        loss_sum / cfg.iters_per_round as f64
    };

    let targets_digest_end = digest(&data.targets(kind, &teacher, spec)?);
    let frozen_unchanged = frozen_before == encode_vsm(state.slot(frozen_slot));

    state.round_index = round;
    state.history.push(RoundRecord {
        round,
        kind,
        mean_loss,
        loss_start,
        loss_end,
        mf: None,
        fused_change: None,
        targets_digest_start,
        targets_digest_end,
        frozen_unchanged,
        first: state.visual.clone(),
        second: state.spatial.clone(),
        targets: keep_targets.then_some(targets),
    });
    Ok(state)
}

/// One round on raw samples (features are computed here).
pub fn run_round(
    kind: RoundKind,
    dataset: &[SampleRecord],
    state: TrainState,
    cfg: &TrainConfig,
    spec: &PriorSpec,
) -> Result<TrainState> {
    let data = TrainingSet::new(dataset, cfg.feature_options())?;
    run_round_prepared(kind, &data, state, cfg, spec, false)
}

/// Standard visual + spatial training.
pub fn train(dataset: &[SampleRecord], cfg: &TrainConfig, spec: &PriorSpec) -> Result<TrainState> {
    train_with(dataset, cfg, spec, &TrainOptions::default())
}

pub fn train_with(
    dataset: &[SampleRecord],
    cfg: &TrainConfig,
    spec: &PriorSpec,
    opts: &TrainOptions,
) -> Result<TrainState> {
    let data = TrainingSet::new(dataset, cfg.feature_options())?;
    train_prepared(&data, cfg, spec, opts)
}

/// Runs the schedule, stopping early once fused predictions settle.
pub fn train_prepared(
    data: &TrainingSet<'_>,
    cfg: &TrainConfig,
    spec: &PriorSpec,
    opts: &TrainOptions,
) -> Result<TrainState> {
    cfg.validate()?;
    spec.validate()?;
    let gts = data.gts();
    let mut state = TrainState::new(opts.network, cfg);
    let mut previous: Option<Vec<ProbMap>> = None;
    for kind in schedule(cfg.rounds) {
        state = run_round_prepared(kind, data, state, cfg, spec, opts.keep_targets)?;
        let fused = data.predict_fused(&state)?;
        let change = previous.as_ref().map(|prev| mean_abs_change(prev, &fused));
        let mf = match &gts {
            Some(g) => Some(evaluate(&fused, g, DEFAULT_THRESHOLDS, Averaging::Micro)?.mf),
            None => None,
        };
        let record = state.history.last_mut().expect("round just ran");
        record.fused_change = change;
        record.mf = mf;
        if matches!(change, Some(c) if c < EARLY_STOP_DELTA) {
            break;
        }
        previous = Some(fused);
    }
    Ok(state)
}

fn mean_abs_change(a: &[ProbMap], b: &[ProbMap]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (x, y) in a.iter().zip(b) {
        for (u, v) in x.data().iter().zip(y.data()) {
            sum += (u - v).abs();
            n += 1;
        }
    }
    sum / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ImageTensor;
    use crate::regions::{propose_regions, ProposerParams};
    use crate::synth::{generate_dataset, SceneParams};

    fn small_set(n: usize) -> Vec<SampleRecord> {
        let params = SceneParams {
            height: 16,
            width: 16,
            radius_frac: (0.15, 0.2),
            area_frac: (0.02, 0.3),
            ..SceneParams::default()
        };
        let mut data = generate_dataset(&params, n).unwrap();
        for s in &mut data {
            s.regions = Some(propose_regions(&s.image, &ProposerParams::default()).unwrap());
        }
        data
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            iters_per_round: 20,
            batch_size: 4,
            hidden: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_alternates_after_initial() {
        use RoundKind::*;
        assert_eq!(schedule(1), vec![Initial]);
        assert_eq!(schedule(3), vec![Initial, V2S, S2V]);
        assert_eq!(schedule(6), vec![Initial, V2S, S2V, V2S, S2V, V2S]);
    }

    #[test]
    fn initial_targets_on_uniform_image_are_mean_prior() {
        let img = ImageTensor::from_rgb_fn(12, 12, |_, _| [0.4, 0.5, 0.6]).unwrap();
        let regions = propose_regions(&img, &ProposerParams::default()).unwrap();
        assert_eq!(regions.len(), 1);
        let sample = SampleRecord::new("u", img, Some(regions), None).unwrap();
        let spec = PriorSpec::default();
        let state = TrainState::new(Network::Vsn, &quick_cfg());
        let t = make_targets(RoundKind::Initial, &sample, &state, &spec).unwrap();
        let mean = gaussian_prior(&spec, 12, 12).unwrap().mean();
        assert!(t.data().iter().all(|v| (v - mean).abs() < 1e-12));
    }

    #[test]
    fn constant_teacher_gives_constant_targets() {
        let data = small_set(1);
        let mut state = TrainState::new(Network::Vsn, &quick_cfg());
        state.visual = PathwayModel::zeros(PathwayKind::Visual, FEATURE_DIM, 4);
        let t = make_targets(RoundKind::V2S, &data[0], &state, &PriorSpec::default()).unwrap();
        assert!(t.data().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn missing_regions_is_an_error() {
        let mut data = small_set(1);
        data[0].regions = None;
        let state = TrainState::new(Network::Vsn, &quick_cfg());
        assert!(make_targets(RoundKind::Initial, &data[0], &state, &PriorSpec::default()).is_err());
        assert!(run_round(
            RoundKind::Initial,
            &data,
            state,
            &quick_cfg(),
            &PriorSpec::default()
        )
        .is_err());
    }

    #[test]
    fn zero_iteration_round_only_advances_index() {
        let data = small_set(3);
        let cfg = TrainConfig {
            iters_per_round: 0,
            ..quick_cfg()
        };
        let state = TrainState::new(Network::Vsn, &cfg);
        let (v0, s0) = (state.visual.clone(), state.spatial.clone());
        let state = run_round(RoundKind::Initial, &data, state, &cfg, &PriorSpec::default()).unwrap();
        assert_eq!(state.round_index, 1);
        assert_eq!(state.visual, v0);
        assert_eq!(state.spatial, s0);
    }

    #[test]
    fn only_the_student_changes() {
        let data = small_set(6);
        let cfg = quick_cfg();
        let spec = PriorSpec::default();
        let mut state = TrainState::new(Network::Vsn, &cfg);
        for kind in schedule(3) {
            let before = state.clone();
            state = run_round(kind, &data, state, &cfg, &spec).unwrap();
            let rec = state.history.last().unwrap();
            assert!(rec.frozen_unchanged);
            assert_eq!(rec.targets_digest_start, rec.targets_digest_end);
            match kind.student() {
                Slot::First => {
                    assert_ne!(state.visual, before.visual);
                    assert_eq!(state.spatial, before.spatial);
                }
                Slot::Second => {
                    assert_eq!(state.visual, before.visual);
                    assert_ne!(state.spatial, before.spatial);
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = small_set(6);
        let cfg = quick_cfg();
        let spec = PriorSpec::default();
        let a = train(&data, &cfg, &spec).unwrap();
        let b = train(&data, &cfg, &spec).unwrap();
        assert_eq!(encode_vsm(&a.visual), encode_vsm(&b.visual));
        assert_eq!(encode_vsm(&a.spatial), encode_vsm(&b.spatial));
        let la: Vec<f64> = a.history.iter().map(|r| r.mean_loss).collect();
        let lb: Vec<f64> = b.history.iter().map(|r| r.mean_loss).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn single_round_trains_visual_only() {
        let data = small_set(4);
        let cfg = TrainConfig {
            rounds: 1,
            ..quick_cfg()
        };
        let init = TrainState::new(Network::Vsn, &cfg);
        let state = train(&data, &cfg, &PriorSpec::default()).unwrap();
        assert_eq!(state.history.len(), 1);
        assert_eq!(state.history[0].kind, RoundKind::Initial);
        assert_eq!(state.spatial, init.spatial);
        assert_ne!(state.visual, init.visual);
    }

    #[test]
    fn homogeneous_networks_use_one_kind() {
        let cfg = quick_cfg();
        let vvn = TrainState::new(Network::Vvn, &cfg);
        assert_eq!(vvn.visual.kind(), PathwayKind::Visual);
        assert_eq!(vvn.spatial.kind(), PathwayKind::Visual);
        let ssn = TrainState::new(Network::Ssn, &cfg);
        assert_eq!(ssn.visual.kind(), PathwayKind::Spatial);
        assert_eq!(ssn.spatial.kind(), PathwayKind::Spatial);
    }

    #[test]
    fn divergence_is_reported() {
        let data = small_set(3);
        let cfg = TrainConfig {
            lr: 1e300,
            momentum: 0.0,
            iters_per_round: 10,
            ..quick_cfg()
        };
        let state = TrainState::new(Network::Vsn, &cfg);
        let err = run_round(RoundKind::Initial, &data, state, &cfg, &PriorSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }
}
