//! Shared fixtures for the benchmarks in `benches/`.

use vsn_core::synth::generate_scene;
use vsn_core::{attach_regions, ProposerParams, SampleRecord, SceneParams};

/// `n` synthetic scenes of `size`x`size` with region sets attached.
pub fn scenes(n: usize, size: usize) -> Vec<SampleRecord> {
    let params = SceneParams {
        height: size,
        width: size,
        ..SceneParams::default()
    };
    let mut samples: Vec<SampleRecord> = (0..n)
        .map(|i| {
            generate_scene(&params, i)
                .expect("default scene params are valid")
                .sample
        })
        .collect();
    attach_regions(&mut samples, &ProposerParams::default()).expect("default proposer params are valid");
    samples
}
