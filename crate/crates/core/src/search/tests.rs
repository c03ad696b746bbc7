use super::*;
use crate::cvae::{CvaeArch, CvaeStage, StageIndex};
use crate::harness::Classifier;
use crate::seeds;

#[test]
fn o1_closed_forms() {
    assert_eq!(o1(0.0).unwrap(), 0.0);
    let e = std::f64::consts::E as Real;
    let expected = (e - 1.0) / (e + 1.0);
    assert!((o1(1.0).unwrap() - expected).abs() < 1e-12);
    assert!((o1(1.0).unwrap() - 0.462117).abs() < 1e-6);
    assert!((o1(4.0).unwrap() - 0.964028).abs() < 1e-6);
    // Approaches 1 from below, even where e^σ would overflow; the float
    // result saturates at exactly 1.0 only far outside the entropy-bounded
    // domain of σ.
    assert!(o1(30.0).unwrap() < 1.0);
    assert!(o1(30.0).unwrap() > 0.999);
    assert!(o1(1e6).unwrap() <= 1.0);
}

#[test]
fn o1_is_strictly_increasing_and_rejects_negatives() {
    let mut last = -1.0;
    for i in 0..100 {
        let v = o1(i as Real * 0.08).unwrap();
        assert!(v > last);
        assert!((0.0..1.0).contains(&v));
        last = v;
    }
    assert!(matches!(o1(-0.1), Err(Error::Parameter(_))));
}

#[test]
fn o2_closed_forms() {
    for k in [1, 2, 8, 32] {
        assert!((o2(&vec![0.0; k]).unwrap() - 1.0).abs() < 1e-12);
    }
    let expected = (-1.0 as Real).exp();
    assert!((o2(&[1.0, 1.0]).unwrap() - expected).abs() < 1e-12);
    assert!((o2(&[1.0, 1.0]).unwrap() - 0.367879).abs() < 1e-6);
    let deep = o2(&[3.0]).unwrap();
    assert!((deep - (-9.0 as Real).exp()).abs() < 1e-15);
    assert!((deep - 1.234e-4).abs() < 1e-6);
    assert!(matches!(o2(&[]), Err(Error::Parameter(_))));
}

#[test]
fn o2_unnormalized_peaks_at_dimension_count() {
    assert!((o2_unnormalized(&[0.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
    assert!((o2_unnormalized(&[0.0; 5]).unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn o2_decreases_away_from_origin_and_stays_in_range() {
    let mut last = 2.0;
    for i in 0..60 {
        let r = i as Real * 0.1;
        let v = o2(&[r, -r, r / 2.0]).unwrap();
        assert!(v < last);
        assert!(v > 0.0 && v <= 1.0);
        last = v;
    }
}

#[test]
fn weights_must_be_usable() {
    assert!(FitnessWeights::new(0.0, 0.0).is_err());
    assert!(FitnessWeights::new(-1.0, 2.0).is_err());
    assert!(FitnessWeights::new(0.0, 1.0).is_ok());
    let w = FitnessWeights::default();
    assert_eq!((w.w1(), w.w2()), (1.0, 1.0));
}

/// Scaling both weights by the same positive constant never changes the
/// ranking of a candidate set.
#[test]
fn ranking_is_invariant_under_weight_scaling() {
    let candidates: Vec<(Real, Vec<Real>)> = vec![
        (0.2, vec![0.1, -0.4]),
        (1.4, vec![2.0, 1.0]),
        (0.9, vec![0.0, 0.0]),
        (3.0, vec![-1.2, 0.3]),
        (0.05, vec![0.8, 0.8]),
    ];
    let rank = |w: FitnessWeights| -> Vec<usize> {
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        let scores: Vec<Real> = candidates
            .iter()
            .map(|(sigma, u)| w.w1() * o1(*sigma).unwrap() + w.w2() * o2(u).unwrap())
            .collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        order
    };
    let base = rank(FitnessWeights::new(0.7, 1.3).unwrap());
    let scaled = rank(FitnessWeights::new(0.7 * 37.0, 1.3 * 37.0).unwrap());
    assert_eq!(base, scaled);
}

#[test]
fn random_sample_moments_match_standard_normal() {
    let mut rng = seeds::rng(123);
    let draws = 100_000;
    let mut sums = [0.0; 2];
    let mut sq_sums = [0.0; 2];
    let mut within_radius_3 = 0usize;
    for _ in 0..draws {
        let u = random_sample(2, &mut rng).unwrap();
        for d in 0..2 {
            sums[d] += u[d];
            sq_sums[d] += u[d] * u[d];
        }
        if (u[0] * u[0] + u[1] * u[1]).sqrt() <= 3.0 {
            within_radius_3 += 1;
        }
    }
    for d in 0..2 {
        let mean = sums[d] / draws as Real;
        let var = sq_sums[d] / draws as Real - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }
    // χ² with 2 dof: P(‖u‖ ≤ 3) = 1 − e^(−9/2) ≈ 0.9889.
    let fraction = within_radius_3 as f64 / draws as f64;
    assert!((fraction - 0.9889).abs() < 0.01, "radius-3 mass {fraction}");
}

#[test]
fn random_sample_is_reproducible() {
    let a = random_sample(8, &mut seeds::rng(9)).unwrap();
    let b = random_sample(8, &mut seeds::rng(9)).unwrap();
    assert_eq!(a, b);
    assert!(matches!(
        random_sample(0, &mut seeds::rng(9)),
        Err(Error::Parameter(_))
    ));
}

/// Known optimum: the sphere −‖u‖² in 8 dimensions.
#[test]
fn pso_solves_the_sphere() {
    let config = SwarmConfig {
        particles: 40,
        iterations: 200,
        ..SwarmConfig::default()
    };
    let result = pso_run(
        8,
        |u, _| Ok(-u.iter().map(|v| v * v).sum::<Real>()),
        &config,
        2024,
    )
    .unwrap();
    assert!(result.best_fitness > -1e-3, "best {}", result.best_fitness);
    assert_eq!(result.evaluations, 40 * 201);
    assert_eq!(result.final_swarm.len(), 40);
}

#[test]
fn pso_ring_topology_also_converges() {
    let config = SwarmConfig {
        particles: 30,
        iterations: 250,
        topology: Topology::Ring { neighbors: 2 },
        ..SwarmConfig::default()
    };
    let result = pso_run(
        4,
        |u, _| Ok(-u.iter().map(|v| v * v).sum::<Real>()),
        &config,
        7,
    )
    .unwrap();
    assert!(result.best_fitness > -1e-2, "best {}", result.best_fitness);
}

/// Frozen dynamics: one particle, zero coefficients, zero initial velocity.
#[test]
fn pso_with_zero_coefficients_never_moves() {
    let config = SwarmConfig {
        particles: 1,
        iterations: 10,
        inertia: 0.0,
        cognitive: 0.0,
        social: 0.0,
        ..SwarmConfig::default()
    };
    let mut positions = Vec::new();
    let result = pso_run(
        3,
        |u, _| {
            positions.push(u.to_vec());
            Ok(-u.iter().map(|v| v * v).sum::<Real>())
        },
        &config,
        5,
    )
    .unwrap();
    for p in &positions {
        assert_eq!(p, &positions[0]);
    }
    assert_eq!(result.best_position, positions[0]);
}

#[test]
fn pso_best_ever_is_monotone_and_seed_deterministic() {
    let config = SwarmConfig {
        particles: 12,
        iterations: 40,
        ..SwarmConfig::default()
    };
    let objective = |u: &[Real], _: &mut rand_chacha::ChaCha8Rng| {
        Ok(-(u[0] - 1.0).powi(2) - (u[1] + 0.5).powi(2))
    };
    let a = pso_run(2, objective, &config, 77).unwrap();
    let b = pso_run(2, objective, &config, 77).unwrap();
    assert_eq!(a.best_position, b.best_position);
    assert_eq!(a.best_fitness, b.best_fitness);
    for pair in a.trajectory.windows(2) {
        assert!(pair[1].best_fitness >= pair[0].best_fitness);
    }
}

#[test]
fn pso_aborts_on_non_finite_objective() {
    let config = SwarmConfig {
        particles: 3,
        iterations: 5,
        ..SwarmConfig::default()
    };
    let err = pso_run(2, |_, _| Ok(Real::NAN), &config, 1).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)));
    assert!(err.to_string().contains("position"));
}

#[test]
fn trajectory_file_is_line_delimited() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trajectory.txt");
    let trajectory = vec![
        IterationStats {
            iteration: 0,
            best_fitness: 0.5,
            mean_fitness: 0.25,
        },
        IterationStats {
            iteration: 1,
            best_fitness: 0.75,
            mean_fitness: 0.5,
        },
    ];
    write_trajectory(&path, &trajectory).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split('\t').count(), 3);
    assert!(lines[1].starts_with("1\t0.75\t"));
}

fn tiny_models() -> (Classifier, CvaeStage, CvaeStage) {
    let mut rng = seeds::rng(31);
    let classifier = Classifier::new(6, 5, 4, 3, 0.4, &mut rng).unwrap();
    let stage1 = CvaeStage::new(
        CvaeArch {
            input_dim: 6,
            num_classes: 3,
            latent_dim: 2,
            hidden_dim: 5,
            stage: StageIndex::One,
        },
        &mut rng,
    )
    .unwrap();
    let stage2 = CvaeStage::new(
        CvaeArch {
            input_dim: 2,
            num_classes: 3,
            latent_dim: 4,
            hidden_dim: 5,
            stage: StageIndex::Two,
        },
        &mut rng,
    )
    .unwrap();
    (classifier, stage1, stage2)
}

#[test]
fn fitness_composes_its_terms_exactly() {
    let (model, stage1, stage2) = tiny_models();
    let config = FitnessConfig {
        weights: FitnessWeights::new(0.6, 2.5).unwrap(),
        mc_passes: 4,
        normalize_plausibility: true,
    };
    let evaluator = FitnessEvaluator::new(&model, &stage1, &stage2, config).unwrap();
    let u = [0.5, -1.0, 0.2, 0.0];
    let value = evaluator.evaluate(&u, 1, &mut seeds::rng(3)).unwrap();
    let expected = 0.6 * value.uncertainty_term + 2.5 * value.plausibility_term;
    assert!((value.total - expected).abs() < 1e-12);
    assert!((value.uncertainty_term - o1(value.sigma).unwrap()).abs() < 1e-12);
    assert!((value.plausibility_term - o2(&u).unwrap()).abs() < 1e-12);

    // Same rng seed, same value.
    let again = evaluator.evaluate(&u, 1, &mut seeds::rng(3)).unwrap();
    assert_eq!(value.total, again.total);
}

/// With w₁ = 0 the cost reduces to w₂·o₂(u), maximized at the origin.
#[test]
fn zero_uncertainty_weight_prefers_the_origin() {
    let (model, stage1, stage2) = tiny_models();
    let config = FitnessConfig {
        weights: FitnessWeights::new(0.0, 1.0).unwrap(),
        mc_passes: 2,
        normalize_plausibility: true,
    };
    let evaluator = FitnessEvaluator::new(&model, &stage1, &stage2, config).unwrap();
    let at_origin = evaluator
        .evaluate(&[0.0; 4], 0, &mut seeds::rng(1))
        .unwrap();
    let away = evaluator
        .evaluate(&[1.5, -0.5, 2.0, 0.3], 0, &mut seeds::rng(1))
        .unwrap();
    assert!(at_origin.total > away.total);
    assert!((at_origin.total - 1.0).abs() < 1e-12);
}

#[test]
fn evaluator_rejects_class_count_mismatch() {
    let (_, stage1, stage2) = tiny_models();
    let mut rng = seeds::rng(50);
    let other = Classifier::new(6, 5, 4, 7, 0.4, &mut rng).unwrap();
    assert!(matches!(
        FitnessEvaluator::new(&other, &stage1, &stage2, FitnessConfig::default()),
        Err(Error::Config(_))
    ));
}
