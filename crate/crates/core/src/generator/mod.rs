//! The end-to-end generation loop: sample a condition and a stage-2 latent
//! vector, decode an image, keep it when the model under test disagrees
//! with the condition and the latent vector is not a near-duplicate of an
//! already-retained one of the same class, until the target count or the
//! attempt budget is reached.

mod suite;
mod verdicts;

pub use suite::{export_suite, import_suite, TestSuite};
pub use verdicts::{apply_verdicts, parse_verdict_file, ClassValidity, VerdictReport};

use std::time::{Duration, Instant};

use rand::Rng;

use crate::autodiff::{Real, Tensor};
use crate::cvae::{check_pipeline_pair, sample_pipeline, CvaeStage};
use crate::error::{Error, Result};
use crate::harness::ModelUnderTest;
use crate::search::{
    pso_run, random_sample, FitnessConfig, FitnessEvaluator, IterationStats, SwarmConfig,
};
use crate::seeds;

/// Human validity judgment of one case; starts unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Unknown,
    Valid,
    Invalid,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Unknown => "unknown",
            Verdict::Valid => "valid",
            Verdict::Invalid => "invalid",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "unknown" => Ok(Verdict::Unknown),
            "valid" => Ok(Verdict::Valid),
            "invalid" => Ok(Verdict::Invalid),
            other => Err(Error::Parse(format!("unknown verdict {other:?}"))),
        }
    }
}

/// A retained fault-revealing pair: the generated image, the condition it
/// was generated under (the expected label), the model's disagreeing
/// prediction, and the latent vector that produced it.
#[derive(Debug, Clone)]
pub struct TestCase {
    pub id: usize,
    pub image: Tensor,
    pub expected: usize,
    pub predicted: usize,
    pub latent: Vec<Real>,
    /// Joint-cost value; present in search mode only.
    pub fitness: Option<Real>,
    pub verdict: Verdict,
}

/// Per-class store of retained latent vectors. Within a class, every pair
/// of retained vectors is at least `threshold` apart in L2.
#[derive(Debug, Clone)]
pub struct DedupIndex {
    per_class: Vec<Vec<Vec<Real>>>,
    threshold: Real,
}

impl DedupIndex {
    pub fn new(num_classes: usize, threshold: Real) -> Result<Self> {
        if !threshold.is_finite() || threshold < 0.0 {
            return Err(Error::Parameter(format!(
                "dedup distance {threshold} must be finite and non-negative"
            )));
        }
        Ok(Self {
            per_class: vec![Vec::new(); num_classes],
            threshold,
        })
    }

    pub fn threshold(&self) -> Real {
        self.threshold
    }

    /// True iff some retained vector of the same class lies strictly within
    /// the threshold. The comparison is class-scoped: a nearby vector of a
    /// different class does not count.
    pub fn is_duplicate(&self, u: &[Real], class: usize) -> bool {
        self.per_class[class]
            .iter()
            .any(|kept| l2_distance(kept, u) < self.threshold)
    }

    pub fn insert(&mut self, u: &[Real], class: usize) {
        self.per_class[class].push(u.to_vec());
    }

    pub fn retained(&self, class: usize) -> &[Vec<Real>] {
        &self.per_class[class]
    }

    pub fn len(&self) -> usize {
        self.per_class.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn l2_distance(a: &[Real], b: &[Real]) -> Real {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<Real>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationMode {
    Random,
    Search,
}

impl GenerationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerationMode::Random => "random",
            GenerationMode::Search => "search",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "random" => Ok(GenerationMode::Random),
            "search" => Ok(GenerationMode::Search),
            other => Err(Error::Parse(format!("unknown generation mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationConfig {
    /// Target number of retained cases (N).
    pub target_cases: usize,
    pub mode: GenerationMode,
    /// Minimum L2 distance between same-class retained latents (k).
    pub dedup_distance: Real,
    /// Hard budget on decoded candidates; the loop stops here even short of
    /// the target, with the `exhausted` flag set.
    pub max_attempts: usize,
    pub seed: u64,
    /// Image geometry of decoded cases, for export.
    pub image_height: usize,
    pub image_width: usize,
    pub fitness: FitnessConfig,
    pub swarm: SwarmConfig,
    /// In search mode, also consider the personal bests of the final swarm
    /// as candidates (cheap extras beyond the single global best).
    pub harvest_swarm: bool,
}

impl GenerationConfig {
    fn validate(&self, stage1: &CvaeStage) -> Result<()> {
        if self.target_cases == 0 {
            return Err(Error::Parameter("target_cases must be at least 1".into()));
        }
        if self.max_attempts < self.target_cases {
            return Err(Error::Parameter(format!(
                "max_attempts {} below target_cases {}",
                self.max_attempts, self.target_cases
            )));
        }
        if self.image_height * self.image_width != stage1.input_dim() {
            return Err(Error::Config(format!(
                "{}×{} images do not match the stage-1 width {}",
                self.image_height,
                self.image_width,
                stage1.input_dim()
            )));
        }
        Ok(())
    }
}

/// Counters of one generation run. Attempt arithmetic always satisfies
/// `attempts = retained + non_faults + duplicates_rejected`; every attempt
/// decodes exactly one candidate. Search mode additionally decodes
/// `search_evaluations` images inside PSO fitness evaluations; those never
/// enter the suite directly.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub mode: GenerationMode,
    pub target_cases: usize,
    pub retained: usize,
    pub attempts: usize,
    pub faults_found: usize,
    pub duplicates_rejected: usize,
    pub non_faults: usize,
    pub search_evaluations: usize,
    pub exhausted: bool,
    pub wall_time: Duration,
}

impl RunReport {
    /// Deterministic key-value block; excludes wall time so reruns of the
    /// same seed are byte-identical (timing goes to a separate artifact).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("mode: {}\n", self.mode.as_str()));
        out.push_str(&format!("target_cases: {}\n", self.target_cases));
        out.push_str(&format!("retained: {}\n", self.retained));
        out.push_str(&format!("attempts: {}\n", self.attempts));
        out.push_str(&format!("faults_found: {}\n", self.faults_found));
        out.push_str(&format!(
            "duplicates_rejected: {}\n",
            self.duplicates_rejected
        ));
        out.push_str(&format!("non_faults: {}\n", self.non_faults));
        out.push_str(&format!(
            "search_evaluations: {}\n",
            self.search_evaluations
        ));
        out.push_str(&format!("exhausted: {}\n", self.exhausted));
        out
    }
}

/// Everything a run produces: the suite, the counters, and (in search mode)
/// one fitness trajectory per attempted PSO run.
pub struct GenerationOutcome {
    pub suite: TestSuite,
    pub report: RunReport,
    pub trajectories: Vec<(usize, Vec<IterationStats>)>,
}

/// Run the generation loop against a frozen model and frozen stages.
/// Deterministic per `config.seed` in both modes.
pub fn generate(
    model: &dyn ModelUnderTest,
    stage1: &CvaeStage,
    stage2: &CvaeStage,
    config: &GenerationConfig,
) -> Result<GenerationOutcome> {
    check_pipeline_pair(stage1, stage2)?;
    if model.num_classes() != stage1.num_classes() {
        return Err(Error::Config(format!(
            "model has {} classes but the VAE stages have {}",
            model.num_classes(),
            stage1.num_classes()
        )));
    }
    config.validate(stage1)?;

    let started = Instant::now();
    let num_classes = model.num_classes();
    let latent_dim = stage2.latent_dim();
    let evaluator = match config.mode {
        GenerationMode::Search => Some(FitnessEvaluator::new(
            model,
            stage1,
            stage2,
            config.fitness.clone(),
        )?),
        GenerationMode::Random => None,
    };

    let mut index = DedupIndex::new(num_classes, config.dedup_distance)?;
    let mut cases: Vec<TestCase> = Vec::with_capacity(config.target_cases);
    let mut trajectories = Vec::new();
    let mut label_rng = seeds::rng(seeds::derive(config.seed, "generate-labels"));

    let mut attempts = 0usize;
    let mut faults_found = 0usize;
    let mut duplicates_rejected = 0usize;
    let mut non_faults = 0usize;
    let mut search_evaluations = 0usize;

    let mut attempt_index = 0u64;
    'outer: while cases.len() < config.target_cases && attempts < config.max_attempts {
        let expected = label_rng.random_range(0..num_classes);

        // Candidate latents of this attempt round: a single draw in random
        // mode; the PSO best (plus optional harvest) in search mode.
        let mut candidates: Vec<(Vec<Real>, Option<Real>)> = Vec::new();
        match (&config.mode, &evaluator) {
            (GenerationMode::Random, _) => {
                let mut u_rng = seeds::rng(seeds::derive_indexed(
                    config.seed,
                    "generate-candidate",
                    &[attempt_index],
                ));
                candidates.push((random_sample(latent_dim, &mut u_rng)?, None));
            }
            (GenerationMode::Search, Some(evaluator)) => {
                let pso_seed = seeds::derive_indexed(config.seed, "generate-pso", &[attempt_index]);
                let result = pso_run(
                    latent_dim,
                    |u, rng| evaluator.evaluate(u, expected, rng).map(|v| v.total),
                    &config.swarm,
                    pso_seed,
                )?;
                search_evaluations += result.evaluations;
                trajectories.push((attempt_index as usize, result.trajectory.clone()));
                candidates.push((result.best_position.clone(), Some(result.best_fitness)));
                if config.harvest_swarm {
                    for particle in &result.final_swarm {
                        if particle.best_position != result.best_position {
                            candidates.push((
                                particle.best_position.clone(),
                                Some(particle.best_fitness),
                            ));
                        }
                    }
                }
            }
            (GenerationMode::Search, None) => unreachable!("evaluator built for search mode"),
        }

        for (u, fitness) in candidates {
            if cases.len() >= config.target_cases || attempts >= config.max_attempts {
                continue 'outer;
            }
            attempts += 1;
            let image = sample_pipeline(&u, expected, stage1, stage2)?;
            let (predicted, _probs) = model.predict(&image)?;
            if predicted == expected {
                non_faults += 1;
                continue;
            }
            faults_found += 1;
            if index.is_duplicate(&u, expected) {
                duplicates_rejected += 1;
                continue;
            }
            index.insert(&u, expected);
            cases.push(TestCase {
                id: cases.len(),
                image,
                expected,
                predicted,
                latent: u,
                fitness,
                verdict: Verdict::Unknown,
            });
        }
        attempt_index += 1;
    }

    let retained = cases.len();
    let report = RunReport {
        mode: config.mode,
        target_cases: config.target_cases,
        retained,
        attempts,
        faults_found,
        duplicates_rejected,
        non_faults,
        search_evaluations,
        exhausted: retained < config.target_cases,
        wall_time: started.elapsed(),
    };
    let suite = TestSuite {
        cases,
        num_classes,
        latent_dim,
        image_height: config.image_height,
        image_width: config.image_width,
        mode: config.mode,
        seed: config.seed,
    };
    Ok(GenerationOutcome {
        suite,
        report,
        trajectories,
    })
}
