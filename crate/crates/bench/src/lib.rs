//! Inputs shared by the benchmarks in `benches/`.

use vpr_core::synth::{ConditionSchedule, SynthDataset, SynthSpec, TraversalConfig, WorldConfig};
use vpr_core::SimilarityMatrix;

/// A `places × places` synthetic problem with mild condition change and noise.
pub fn dataset(places: usize, dim: usize) -> SynthDataset {
    let mut world = WorldConfig::new(places);
    world.dim = dim;
    world.condition_strength = 0.5;
    world.noise_strength = 1.0;
    SynthSpec {
        world,
        db: TraversalConfig::new((0..places).collect(), ConditionSchedule::Constant(0)),
        q: TraversalConfig::new((0..places).collect(), ConditionSchedule::Constant(1)),
    }
    .generate(1)
    .expect("valid synthetic config")
}

pub fn cosine_matrix(ds: &SynthDataset) -> SimilarityMatrix {
    vpr_core::similarity::build_matrix(&ds.db, &ds.q, vpr_core::Measure::Cosine)
        .expect("matching dimensions")
}
