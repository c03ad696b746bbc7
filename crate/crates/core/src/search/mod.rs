//! Latent-space search: the uncertainty and plausibility fitness terms,
//! their weighted joint cost, the random latent sampler, and particle swarm
//! optimization over the stage-2 manifold.

mod pso;

pub use pso::{
    pso_run, write_trajectory, IterationStats, Particle, PsoResult, SwarmConfig, Topology,
};

use rand_chacha::ChaCha8Rng;

use crate::autodiff::Real;
use crate::cvae::{check_pipeline_pair, sample_pipeline, CvaeStage};
use crate::error::{Error, Result};
use crate::harness::ModelUnderTest;

/// Uncertainty term: squashes σ ≥ 0 into `[0, 1)` via (e^σ − 1)/(e^σ + 1),
/// strictly increasing. Computed as tanh(σ/2), the same function without
/// overflow for large σ.
pub fn o1(sigma: Real) -> Result<Real> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::Parameter(format!(
            "sigma {sigma} must be non-negative"
        )));
    }
    Ok((sigma / 2.0).tanh())
}

/// Sample plausibility: (1/κ)·Σᵢ e^(−uᵢ²), in `(0, 1]` with its maximum of
/// exactly 1 at the origin; strictly decreasing in each |uᵢ|.
pub fn o2(u: &[Real]) -> Result<Real> {
    Ok(o2_unnormalized(u)? / u.len() as Real)
}

/// The plausibility sum without the 1/κ factor, so its value at the origin
/// is κ rather than 1. Selectable via
/// [`FitnessConfig::normalize_plausibility`].
pub fn o2_unnormalized(u: &[Real]) -> Result<Real> {
    if u.is_empty() {
        return Err(Error::Parameter("plausibility of an empty vector".into()));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter(
            "plausibility of a non-finite vector".into(),
        ));
    }
    Ok(u.iter().map(|&v| (-v * v).exp()).sum())
}

/// Non-negative weights of the joint cost, not both zero.
#[derive(Debug, Clone, Copy)]
pub struct FitnessWeights {
    w1: Real,
    w2: Real,
}

impl FitnessWeights {
    pub fn new(w1: Real, w2: Real) -> Result<Self> {
        if !w1.is_finite() || !w2.is_finite() || w1 < 0.0 || w2 < 0.0 || w1 + w2 <= 0.0 {
            return Err(Error::Parameter(format!(
                "weights ({w1}, {w2}) must be non-negative and not both zero"
            )));
        }
        Ok(Self { w1, w2 })
    }

    pub fn w1(&self) -> Real {
        self.w1
    }

    pub fn w2(&self) -> Real {
        self.w2
    }
}

impl Default for FitnessWeights {
    /// Equal weighting of both terms.
    fn default() -> Self {
        Self { w1: 1.0, w2: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct FitnessConfig {
    pub weights: FitnessWeights,
    /// MC-dropout passes per evaluation.
    pub mc_passes: usize,
    /// Use the normalized plausibility (maximum 1 at the origin). The
    /// unnormalized sum is the printed-formula variant.
    pub normalize_plausibility: bool,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        Self {
            weights: FitnessWeights::default(),
            mc_passes: 32,
            normalize_plausibility: true,
        }
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, Copy)]
pub struct FitnessValue {
    pub total: Real,
    pub sigma: Real,
    pub uncertainty_term: Real,
    pub plausibility_term: Real,
}

/// The joint cost C(u) = w₁·o₁(σ(u)) + w₂·o₂(u), maximized. Decodes u
/// through the two-stage pipeline and measures the model's MC-dropout
/// uncertainty on the result.
pub struct FitnessEvaluator<'a> {
    model: &'a dyn ModelUnderTest,
    stage1: &'a CvaeStage,
    stage2: &'a CvaeStage,
    config: FitnessConfig,
}

impl<'a> FitnessEvaluator<'a> {
    pub fn new(
        model: &'a dyn ModelUnderTest,
        stage1: &'a CvaeStage,
        stage2: &'a CvaeStage,
        config: FitnessConfig,
    ) -> Result<Self> {
        check_pipeline_pair(stage1, stage2)?;
        if model.num_classes() != stage1.num_classes() {
            return Err(Error::Config(format!(
                "model has {} classes but the VAE stages have {}",
                model.num_classes(),
                stage1.num_classes()
            )));
        }
        if config.mc_passes == 0 {
            return Err(Error::Parameter("mc_passes must be positive".into()));
        }
        Ok(Self {
            model,
            stage1,
            stage2,
            config,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.stage2.latent_dim()
    }

    pub fn evaluate(
        &self,
        u: &[Real],
        condition: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<FitnessValue> {
        if u.len() != self.stage2.latent_dim() {
            return Err(Error::Dimension(format!(
                "candidate has {} coordinates, stage-2 latent is {}",
                u.len(),
                self.stage2.latent_dim()
            )));
        }
        let image = sample_pipeline(u, condition, self.stage1, self.stage2)?;
        let estimate = self
            .model
            .mc_uncertainty(&image, self.config.mc_passes, rng)?;
        let uncertainty_term = o1(estimate.sigma)?;
        let plausibility_term = if self.config.normalize_plausibility {
            o2(u)?
        } else {
            o2_unnormalized(u)?
        };
        let weights = self.config.weights;
        Ok(FitnessValue {
            total: weights.w1 * uncertainty_term + weights.w2 * plausibility_term,
            sigma: estimate.sigma,
            uncertainty_term,
            plausibility_term,
        })
    }
}

/// The joint cost as a bare number; see [`FitnessEvaluator`] for the term
/// breakdown.
#[allow(clippy::too_many_arguments)]
pub fn fitness(
    u: &[Real],
    condition: usize,
    model: &dyn ModelUnderTest,
    stage1: &CvaeStage,
    stage2: &CvaeStage,
    weights: FitnessWeights,
    mc_passes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Real> {
    let config = FitnessConfig {
        weights,
        mc_passes,
        normalize_plausibility: true,
    };
    let evaluator = FitnessEvaluator::new(model, stage1, stage2, config)?;
    Ok(evaluator.evaluate(u, condition, rng)?.total)
}

/// Draw u ~ N(0, I_κ): i.i.d. standard-normal coordinates.
pub fn random_sample(latent_dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Real>> {
    use rand_distr::{Distribution, StandardNormal};
    if latent_dim == 0 {
        return Err(Error::Parameter("latent dimension must be positive".into()));
    }
    Ok((0..latent_dim)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v as Real
        })
        .collect())
}

#[cfg(test)]
mod tests;
