//! Shared builders for the benchmark targets.

use mtgen_core::cvae::{CvaeArch, CvaeStage, StageIndex};
use mtgen_core::harness::Classifier;
use mtgen_core::seeds;

/// Desk-scale classifier: 16×16 inputs, the default widths.
pub fn desk_classifier() -> Classifier {
    let mut rng = seeds::rng(1);
    Classifier::new(256, 128, 64, 5, 0.5, &mut rng).expect("valid dimensions")
}

/// Desk-scale stage pair (κ₁ = 16, κ₂ = 8), untrained weights; benchmarks
/// measure arithmetic, not model quality.
pub fn desk_stage_pair() -> (CvaeStage, CvaeStage) {
    let mut rng = seeds::rng(2);
    let stage1 = CvaeStage::new(
        CvaeArch {
            input_dim: 256,
            num_classes: 5,
            latent_dim: 16,
            hidden_dim: 128,
            stage: StageIndex::One,
        },
        &mut rng,
    )
    .expect("valid arch");
    let stage2 = CvaeStage::new(
        CvaeArch {
            input_dim: 16,
            num_classes: 5,
            latent_dim: 8,
            hidden_dim: 64,
            stage: StageIndex::Two,
        },
        &mut rng,
    )
    .expect("valid arch");
    (stage1, stage2)
}
