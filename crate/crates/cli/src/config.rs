//! Run configuration: a flat key-value file plus command-line overrides.
//!
//! Every key is validated against the schema below; unknown keys are
//! configuration errors, as are malformed values. Flags win over the file,
//! the file wins over defaults.

use std::path::{Path, PathBuf};

use mtgen_core::cvae::{StageInput, StageTrainOptions};
use mtgen_core::datasets::{load_idx, synth_shapes, LabeledDataset};
use mtgen_core::error::{Error, Result};
use mtgen_core::generator::{GenerationConfig, GenerationMode};
use mtgen_core::harness::ClassifierTrainOptions;
use mtgen_core::search::{FitnessConfig, FitnessWeights, SwarmConfig, Topology};
use mtgen_core::Real;
use mtgen_core::{cvae::StageIndex, seeds};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSource {
    Synth,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stage2Inputs {
    Means,
    Samples,
}

/// The full configuration surface. One seed feeds every component through
/// tagged derivation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,

    pub dataset_source: DatasetSource,
    pub dataset_num_classes: usize,
    pub dataset_per_class: usize,
    pub dataset_side: usize,
    pub dataset_images: PathBuf,
    pub dataset_labels: PathBuf,
    pub dataset_val_fraction: f64,

    pub vae1_hidden_dim: usize,
    pub vae1_latent_dim: usize,
    pub vae1_epochs: usize,
    pub vae1_batch_size: usize,
    pub vae1_learning_rate: Real,

    pub vae2_hidden_dim: usize,
    pub vae2_latent_dim: usize,
    pub vae2_epochs: usize,
    pub vae2_batch_size: usize,
    pub vae2_learning_rate: Real,
    pub vae2_inputs: Stage2Inputs,

    pub classifier_hidden1: usize,
    pub classifier_hidden2: usize,
    pub classifier_dropout: Real,
    pub classifier_epochs: usize,
    pub classifier_batch_size: usize,
    pub classifier_learning_rate: Real,

    pub mc_passes: usize,

    pub gen_count: usize,
    pub gen_mode: GenerationMode,
    pub gen_dedup_distance: Real,
    pub gen_max_attempts: usize,
    pub gen_harvest_swarm: bool,

    pub fitness_w1: Real,
    pub fitness_w2: Real,
    pub fitness_normalize_o2: bool,

    pub swarm_particles: usize,
    pub swarm_iterations: usize,
    pub swarm_inertia: Real,
    pub swarm_cognitive: Real,
    pub swarm_social: Real,
    pub swarm_topology: String,
    pub swarm_ring_neighbors: usize,
    pub swarm_velocity_clamp: Real,
    pub swarm_init_bound: Real,

    pub fid_repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dataset_source: DatasetSource::Synth,
            dataset_num_classes: 5,
            dataset_per_class: 500,
            dataset_side: 16,
            dataset_images: PathBuf::new(),
            dataset_labels: PathBuf::new(),
            dataset_val_fraction: 0.2,
            vae1_hidden_dim: 128,
            vae1_latent_dim: 16,
            vae1_epochs: 60,
            vae1_batch_size: 64,
            vae1_learning_rate: 1e-3,
            vae2_hidden_dim: 64,
            vae2_latent_dim: 8,
            vae2_epochs: 80,
            vae2_batch_size: 64,
            vae2_learning_rate: 1e-3,
            vae2_inputs: Stage2Inputs::Means,
            classifier_hidden1: 128,
            classifier_hidden2: 64,
            classifier_dropout: 0.5,
            classifier_epochs: 30,
            classifier_batch_size: 64,
            classifier_learning_rate: 1e-3,
            mc_passes: 32,
            gen_count: 100,
            gen_mode: GenerationMode::Random,
            gen_dedup_distance: 0.5,
            gen_max_attempts: 100_000,
            gen_harvest_swarm: false,
            fitness_w1: 1.0,
            fitness_w2: 1.0,
            fitness_normalize_o2: true,
            swarm_particles: 20,
            swarm_iterations: 30,
            swarm_inertia: 0.729,
            swarm_cognitive: 1.494,
            swarm_social: 1.494,
            swarm_topology: "global".into(),
            swarm_ring_neighbors: 2,
            swarm_velocity_clamp: 1.0,
            swarm_init_bound: 3.0,
            fid_repeats: 1,
        }
    }
}

impl RunConfig {
    /// Defaults, then the file (if given), then `--set` overrides in order.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut config = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)?;
            for (line_no, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(Error::Config(format!(
                        "{}:{}: expected `key = value`, got {line:?}",
                        path.display(),
                        line_no + 1
                    )));
                };
                config.apply(key.trim(), value.trim())?;
            }
        }
        for entry in overrides {
            let Some((key, value)) = entry.split_once('=') else {
                return Err(Error::Config(format!(
                    "--set expects KEY=VALUE, got {entry:?}"
                )));
            };
            config.apply(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Set one key. Unknown keys and malformed values are configuration
    /// errors.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("key {key:?} has malformed value {value:?}")))
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "dataset.source" => {
                self.dataset_source = match value {
                    "synth" => DatasetSource::Synth,
                    "idx" => DatasetSource::Idx,
                    other => {
                        return Err(Error::Config(format!(
                            "dataset.source must be synth or idx, got {other:?}"
                        )))
                    }
                }
            }
            "dataset.num_classes" => self.dataset_num_classes = parse(key, value)?,
            "dataset.per_class" => self.dataset_per_class = parse(key, value)?,
            "dataset.side" => self.dataset_side = parse(key, value)?,
            "dataset.images" => self.dataset_images = PathBuf::from(value),
            "dataset.labels" => self.dataset_labels = PathBuf::from(value),
            "dataset.val_fraction" => self.dataset_val_fraction = parse(key, value)?,
            "vae1.hidden_dim" => self.vae1_hidden_dim = parse(key, value)?,
            "vae1.latent_dim" => self.vae1_latent_dim = parse(key, value)?,
            "vae1.epochs" => self.vae1_epochs = parse(key, value)?,
            "vae1.batch_size" => self.vae1_batch_size = parse(key, value)?,
            "vae1.learning_rate" => self.vae1_learning_rate = parse(key, value)?,
            "vae2.hidden_dim" => self.vae2_hidden_dim = parse(key, value)?,
            "vae2.latent_dim" => self.vae2_latent_dim = parse(key, value)?,
            "vae2.epochs" => self.vae2_epochs = parse(key, value)?,
            "vae2.batch_size" => self.vae2_batch_size = parse(key, value)?,
            "vae2.learning_rate" => self.vae2_learning_rate = parse(key, value)?,
            "vae2.inputs" => {
                self.vae2_inputs = match value {
                    "means" => Stage2Inputs::Means,
                    "samples" => Stage2Inputs::Samples,
                    other => {
                        return Err(Error::Config(format!(
                            "vae2.inputs must be means or samples, got {other:?}"
                        )))
                    }
                }
            }
            "classifier.hidden1" => self.classifier_hidden1 = parse(key, value)?,
            "classifier.hidden2" => self.classifier_hidden2 = parse(key, value)?,
            "classifier.dropout" => self.classifier_dropout = parse(key, value)?,
            "classifier.epochs" => self.classifier_epochs = parse(key, value)?,
            "classifier.batch_size" => self.classifier_batch_size = parse(key, value)?,
            "classifier.learning_rate" => self.classifier_learning_rate = parse(key, value)?,
            "mc.passes" => self.mc_passes = parse(key, value)?,
            "gen.count" => self.gen_count = parse(key, value)?,
            "gen.mode" => self.gen_mode = GenerationMode::parse(value)?,
            "gen.dedup_distance" => self.gen_dedup_distance = parse(key, value)?,
            "gen.max_attempts" => self.gen_max_attempts = parse(key, value)?,
            "gen.harvest_swarm" => self.gen_harvest_swarm = parse(key, value)?,
            "fitness.w1" => self.fitness_w1 = parse(key, value)?,
            "fitness.w2" => self.fitness_w2 = parse(key, value)?,
            "fitness.normalize_o2" => self.fitness_normalize_o2 = parse(key, value)?,
            "swarm.particles" => self.swarm_particles = parse(key, value)?,
            "swarm.iterations" => self.swarm_iterations = parse(key, value)?,
            "swarm.inertia" => self.swarm_inertia = parse(key, value)?,
            "swarm.cognitive" => self.swarm_cognitive = parse(key, value)?,
            "swarm.social" => self.swarm_social = parse(key, value)?,
            "swarm.topology" => {
                if value != "global" && value != "ring" {
                    return Err(Error::Config(format!(
                        "swarm.topology must be global or ring, got {value:?}"
                    )));
                }
                self.swarm_topology = value.to_string();
            }
            "swarm.ring_neighbors" => self.swarm_ring_neighbors = parse(key, value)?,
            "swarm.velocity_clamp" => self.swarm_velocity_clamp = parse(key, value)?,
            "swarm.init_bound" => self.swarm_init_bound = parse(key, value)?,
            "fid.repeats" => self.fid_repeats = parse(key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown configuration key {other:?}"
                )))
            }
        }
        Ok(())
    }

    /// Load the configured dataset (the full set; callers split as needed).
    pub fn load_dataset(&self) -> Result<LabeledDataset> {
        match self.dataset_source {
            DatasetSource::Synth => synth_shapes(
                self.dataset_num_classes,
                self.dataset_per_class,
                self.dataset_side,
                seeds::derive(self.seed, "dataset"),
            ),
            DatasetSource::Idx => {
                if self.dataset_images.as_os_str().is_empty()
                    || self.dataset_labels.as_os_str().is_empty()
                {
                    return Err(Error::Config(
                        "dataset.source = idx needs dataset.images and dataset.labels".into(),
                    ));
                }
                load_idx(&self.dataset_images, &self.dataset_labels)
            }
        }
    }

    pub fn classifier_options(
        &self,
        role: &str,
        checkpoint: Option<PathBuf>,
    ) -> ClassifierTrainOptions {
        ClassifierTrainOptions {
            hidden1: self.classifier_hidden1,
            hidden2: self.classifier_hidden2,
            dropout_rate: self.classifier_dropout,
            epochs: self.classifier_epochs,
            batch_size: self.classifier_batch_size,
            learning_rate: self.classifier_learning_rate,
            val_fraction: self.dataset_val_fraction,
            seed: seeds::derive(self.seed, role),
            checkpoint_path: checkpoint,
        }
    }

    pub fn stage_options(
        &self,
        stage: StageIndex,
        checkpoint: Option<PathBuf>,
    ) -> StageTrainOptions {
        match stage {
            StageIndex::One => StageTrainOptions {
                latent_dim: self.vae1_latent_dim,
                hidden_dim: self.vae1_hidden_dim,
                epochs: self.vae1_epochs,
                batch_size: self.vae1_batch_size,
                learning_rate: self.vae1_learning_rate,
                seed: seeds::derive(self.seed, "vae-stage1"),
                checkpoint_path: checkpoint,
            },
            StageIndex::Two => StageTrainOptions {
                latent_dim: self.vae2_latent_dim,
                hidden_dim: self.vae2_hidden_dim,
                epochs: self.vae2_epochs,
                batch_size: self.vae2_batch_size,
                learning_rate: self.vae2_learning_rate,
                seed: seeds::derive(self.seed, "vae-stage2"),
                checkpoint_path: checkpoint,
            },
        }
    }

    pub fn fitness_config(&self) -> Result<FitnessConfig> {
        Ok(FitnessConfig {
            weights: FitnessWeights::new(self.fitness_w1, self.fitness_w2)?,
            mc_passes: self.mc_passes,
            normalize_plausibility: self.fitness_normalize_o2,
        })
    }

    pub fn swarm_config(&self) -> SwarmConfig {
        SwarmConfig {
            particles: self.swarm_particles,
            iterations: self.swarm_iterations,
            inertia: self.swarm_inertia,
            cognitive: self.swarm_cognitive,
            social: self.swarm_social,
            topology: if self.swarm_topology == "ring" {
                Topology::Ring {
                    neighbors: self.swarm_ring_neighbors,
                }
            } else {
                Topology::Global
            },
            velocity_clamp: self.swarm_velocity_clamp,
            init_bound: self.swarm_init_bound,
        }
    }

    pub fn generation_config(&self, height: usize, width: usize) -> Result<GenerationConfig> {
        Ok(GenerationConfig {
            target_cases: self.gen_count,
            mode: self.gen_mode,
            dedup_distance: self.gen_dedup_distance,
            max_attempts: self.gen_max_attempts,
            seed: seeds::derive(self.seed, "generate"),
            image_height: height,
            image_width: width,
            fitness: self.fitness_config()?,
            swarm: self.swarm_config(),
            harvest_swarm: self.gen_harvest_swarm,
        })
    }

    /// Stage-2 training input selection per `vae2.inputs`.
    pub fn stage2_input(
        &self,
        stage1: &mtgen_core::cvae::CvaeStage,
        dataset: &LabeledDataset,
    ) -> Result<(mtgen_core::Tensor, Vec<usize>)> {
        match self.vae2_inputs {
            Stage2Inputs::Means => mtgen_core::cvae::posterior_means(stage1, dataset),
            Stage2Inputs::Samples => mtgen_core::cvae::posterior_samples(
                stage1,
                dataset,
                seeds::derive(self.seed, "stage2-inputs"),
            ),
        }
    }
}

/// Helper so `StageInput::Codes` call sites stay readable.
pub fn codes_input<'a>(
    codes: &'a mtgen_core::Tensor,
    labels: &'a [usize],
    num_classes: usize,
) -> StageInput<'a> {
    StageInput::Codes {
        codes,
        labels,
        num_classes,
    }
}
