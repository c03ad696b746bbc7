//! Particle swarm optimization with global or ring neighborhoods.
//!
//! Update rule per particle: v ← w·v + c₁·r₁⊙(pbest − x) + c₂·r₂⊙(nbest − x),
//! x ← x + v, with r₁, r₂ uniform per coordinate and velocities clamped per
//! coordinate. Objectives are maximized. Every random draw derives from the
//! run seed, so results are reproducible regardless of evaluation order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Every particle sees the swarm-wide best.
    Global,
    /// Each particle sees `neighbors` particles on each side, by index,
    /// wrapping around.
    Ring { neighbors: usize },
}

#[derive(Debug, Clone)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: Real,
    pub cognitive: Real,
    pub social: Real,
    pub topology: Topology,
    pub velocity_clamp: Real,
    /// Positions initialize uniformly in `[-init_bound, init_bound]^κ`.
    pub init_bound: Real,
}

impl Default for SwarmConfig {
    /// Constriction-equivalent constants; initialization box matching the
    /// high-plausibility region of a standard-normal latent.
    fn default() -> Self {
        Self {
            particles: 20,
            iterations: 30,
            inertia: 0.729,
            cognitive: 1.494,
            social: 1.494,
            topology: Topology::Global,
            velocity_clamp: 1.0,
            init_bound: 3.0,
        }
    }
}

impl SwarmConfig {
    fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Parameter("swarm needs at least one particle".into()));
        }
        if !self.velocity_clamp.is_finite() || self.velocity_clamp <= 0.0 {
            return Err(Error::Parameter("velocity clamp must be positive".into()));
        }
        if !self.init_bound.is_finite() || self.init_bound <= 0.0 {
            return Err(Error::Parameter("init bound must be positive".into()));
        }
        if self.inertia < 0.0 || self.cognitive < 0.0 || self.social < 0.0 {
            return Err(Error::Parameter(
                "PSO coefficients must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Position, velocity, and personal best of one particle. `best_fitness` is
/// the objective value at `best_position` as last evaluated.
#[derive(Debug, Clone)]
pub struct Particle {
    pub position: Vec<Real>,
    pub velocity: Vec<Real>,
    pub best_position: Vec<Real>,
    pub best_fitness: Real,
}

/// Per-iteration record: the best-ever fitness (non-decreasing) and the
/// swarm's mean fitness this iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    pub iteration: usize,
    pub best_fitness: Real,
    pub mean_fitness: Real,
}

#[derive(Debug)]
pub struct PsoResult {
    pub best_position: Vec<Real>,
    pub best_fitness: Real,
    pub trajectory: Vec<IterationStats>,
    pub evaluations: usize,
    /// The swarm after the last update, for callers that harvest extra
    /// candidates beyond the single best.
    pub final_swarm: Vec<Particle>,
}

/// Maximize `objective` over `R^dim`. The objective receives a derived rng
/// per (iteration, particle) so stochastic objectives stay reproducible. A
/// non-finite objective value aborts with the offending position in the
/// error.
pub fn pso_run<F>(
    dim: usize,
    mut objective: F,
    config: &SwarmConfig,
    seed: u64,
) -> Result<PsoResult>
where
    F: FnMut(&[Real], &mut ChaCha8Rng) -> Result<Real>,
{
    config.validate()?;
    if dim == 0 {
        return Err(Error::Parameter("search dimension must be positive".into()));
    }

    let mut init_rng = seeds::rng(seeds::derive(seed, "pso-init"));
    let mut swarm: Vec<Particle> = (0..config.particles)
        .map(|_| {
            let position: Vec<Real> = (0..dim)
                .map(|_| {
                    let t = init_rng.random::<f64>() as Real;
                    (2.0 * t - 1.0) * config.init_bound
                })
                .collect();
            Particle {
                best_position: position.clone(),
                position,
                velocity: vec![0.0; dim],
                best_fitness: Real::NEG_INFINITY,
            }
        })
        .collect();

    let mut evaluations = 0usize;
    let mut trajectory = Vec::with_capacity(config.iterations + 1);
    let mut best_position = swarm[0].position.clone();
    let mut best_fitness = Real::NEG_INFINITY;

    let mut evaluate_swarm = |swarm: &mut [Particle],
                              iteration: usize,
                              best_position: &mut Vec<Real>,
                              best_fitness: &mut Real,
                              evaluations: &mut usize|
     -> Result<Real> {
        let mut sum = 0.0;
        for (index, particle) in swarm.iter_mut().enumerate() {
            let mut eval_rng = seeds::rng(seeds::derive_indexed(
                seed,
                "pso-eval",
                &[iteration as u64, index as u64],
            ));
            let value = objective(&particle.position, &mut eval_rng)?;
            *evaluations += 1;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "objective returned {value} at position {:?}",
                    particle.position
                )));
            }
            sum += value;
            if value > particle.best_fitness {
                particle.best_fitness = value;
                particle.best_position.copy_from_slice(&particle.position);
            }
            if value > *best_fitness {
                *best_fitness = value;
                best_position.copy_from_slice(&particle.position);
            }
        }
        Ok(sum / swarm.len() as Real)
    };

    let mean = evaluate_swarm(
        &mut swarm,
        0,
        &mut best_position,
        &mut best_fitness,
        &mut evaluations,
    )?;
    trajectory.push(IterationStats {
        iteration: 0,
        best_fitness,
        mean_fitness: mean,
    });

    let mut velocity_rng = seeds::rng(seeds::derive(seed, "pso-velocity"));
    for iteration in 1..=config.iterations {
        let neighborhood_best: Vec<Vec<Real>> = (0..swarm.len())
            .map(|i| neighborhood_best(&swarm, i, config.topology))
            .collect();
        for (particle, nbest) in swarm.iter_mut().zip(&neighborhood_best) {
            let coords = particle
                .velocity
                .iter_mut()
                .zip(particle.position.iter_mut())
                .zip(particle.best_position.iter().zip(nbest));
            for ((velocity, position), (pbest, nbest)) in coords {
                let r1 = velocity_rng.random::<f64>() as Real;
                let r2 = velocity_rng.random::<f64>() as Real;
                let v = config.inertia * *velocity
                    + config.cognitive * r1 * (*pbest - *position)
                    + config.social * r2 * (*nbest - *position);
                *velocity = v.clamp(-config.velocity_clamp, config.velocity_clamp);
                *position += *velocity;
            }
        }
        let mean = evaluate_swarm(
            &mut swarm,
            iteration,
            &mut best_position,
            &mut best_fitness,
            &mut evaluations,
        )?;
        trajectory.push(IterationStats {
            iteration,
            best_fitness,
            mean_fitness: mean,
        });
    }

    Ok(PsoResult {
        best_position,
        best_fitness,
        trajectory,
        evaluations,
        final_swarm: swarm,
    })
}

fn neighborhood_best(swarm: &[Particle], index: usize, topology: Topology) -> Vec<Real> {
    let best_of = |candidates: &mut dyn Iterator<Item = usize>| -> usize {
        candidates
            .max_by(|&a, &b| {
                swarm[a]
                    .best_fitness
                    .partial_cmp(&swarm[b].best_fitness)
                    .expect("fitness values are finite")
                    .then(b.cmp(&a))
            })
            .expect("neighborhood is never empty")
    };
    let chosen = match topology {
        Topology::Global => best_of(&mut (0..swarm.len())),
        Topology::Ring { neighbors } => {
            let p = swarm.len() as isize;
            let k = neighbors as isize;
            best_of(
                &mut (-k..=k).map(move |offset| ((index as isize + offset).rem_euclid(p)) as usize),
            )
        }
    };
    swarm[chosen].best_position.clone()
}

/// Write a trajectory as line-delimited `iteration best mean` records.
pub fn write_trajectory(path: &std::path::Path, trajectory: &[IterationStats]) -> Result<()> {
    use std::io::Write;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for stats in trajectory {
        writeln!(
            out,
            "{}\t{}\t{}",
            stats.iteration, stats.best_fitness, stats.mean_fitness
        )?;
    }
    Ok(())
}
