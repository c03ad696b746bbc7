use super::*;
use crate::cvae::sample_standard_normal;
use crate::datasets::synth_shapes;
use crate::harness::{train_classifier, ClassifierTrainOptions};
use crate::seeds;

fn stats(mean: &[Real], cov_rows: &[&[Real]]) -> GaussianStats {
    let d = mean.len();
    let mut covariance = Tensor::zeros(vec![d, d]);
    for (i, row) in cov_rows.iter().enumerate() {
        covariance.data_mut()[i * d..(i + 1) * d].copy_from_slice(row);
    }
    GaussianStats {
        mean: mean.to_vec(),
        covariance,
        count: 10,
    }
}

#[test]
fn gaussian_fit_of_constant_features_has_zero_covariance() {
    let features = Tensor::full(vec![5, 3], 0.25);
    let fit = gaussian_fit(&features).unwrap();
    assert_eq!(fit.mean, vec![0.25, 0.25, 0.25]);
    assert!(fit.covariance.data().iter().all(|&v| v == 0.0));
    assert_eq!(fit.count, 5);
}

#[test]
fn gaussian_fit_two_point_hand_computation() {
    let features = Tensor::new(vec![2, 2], vec![0.0, 0.0, 2.0, 0.0]).unwrap();
    let fit = gaussian_fit(&features).unwrap();
    assert_eq!(fit.mean, vec![1.0, 0.0]);
    // Unbiased (n − 1) normalization: variance 2 along the first axis.
    assert_eq!(fit.covariance.data(), &[2.0, 0.0, 0.0, 0.0]);
}

#[test]
fn gaussian_fit_needs_two_samples() {
    let features = Tensor::zeros(vec![1, 4]);
    assert!(matches!(gaussian_fit(&features), Err(Error::Parameter(_))));
}

/// Moment oracle: a large standard-normal sample fits mean ≈ 0, covariance
/// ≈ identity.
#[test]
fn gaussian_fit_recovers_standard_normal_moments() {
    let mut rng = seeds::rng(2718);
    let features = sample_standard_normal(vec![100_000, 3], &mut rng);
    let fit = gaussian_fit(&features).unwrap();
    for m in &fit.mean {
        assert!(m.abs() < 0.02, "mean {m}");
    }
    for i in 0..3 {
        for j in 0..3 {
            let expected = if i == j { 1.0 } else { 0.0 };
            let got = fit.covariance.data()[i * 3 + j];
            assert!((got - expected).abs() < 0.05, "cov[{i}][{j}] = {got}");
        }
    }
}

#[test]
fn matrix_sqrt_closed_forms() {
    let mut eye = Tensor::zeros(vec![3, 3]);
    for i in 0..3 {
        eye.data_mut()[i * 3 + i] = 1.0;
    }
    let root = matrix_sqrt_psd(&eye).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((root.data()[i * 3 + j] - expected).abs() < 1e-12);
        }
    }

    let diag = Tensor::new(vec![2, 2], vec![4.0, 0.0, 0.0, 9.0]).unwrap();
    let root = matrix_sqrt_psd(&diag).unwrap();
    assert!((root.data()[0] - 2.0).abs() < 1e-12);
    assert!((root.data()[3] - 3.0).abs() < 1e-12);
    assert!(root.data()[1].abs() < 1e-12);
}

/// Reconstruction oracle: sqrt(A·Aᵀ)² ≈ A·Aᵀ in the Frobenius norm.
#[test]
fn matrix_sqrt_reconstructs_random_psd_matrices() {
    let mut rng = seeds::rng(99);
    for d in [2, 5, 16] {
        let a = sample_standard_normal(vec![d, d], &mut rng);
        let mut m = Tensor::zeros(vec![d, d]);
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += a.data()[i * d + k] * a.data()[j * d + k];
                }
                m.data_mut()[i * d + j] = acc;
            }
        }
        let root = matrix_sqrt_psd(&m).unwrap();
        let mut err = 0.0;
        let mut norm = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += root.data()[i * d + k] * root.data()[k * d + j];
                }
                let diff = acc - m.data()[i * d + j];
                err += diff * diff;
                norm += m.data()[i * d + j] * m.data()[i * d + j];
            }
        }
        let relative = (err / norm).sqrt();
        assert!(relative < 1e-6, "d={d}: relative error {relative}");
    }
}

#[test]
fn matrix_sqrt_rejects_asymmetry() {
    let skew = Tensor::new(vec![2, 2], vec![1.0, 0.5, -0.5, 1.0]).unwrap();
    assert!(matches!(matrix_sqrt_psd(&skew), Err(Error::Parameter(_))));
}

#[test]
fn frechet_closed_forms() {
    // Identical distributions: exactly zero after clamping.
    let a = stats(&[0.3, -0.7], &[&[1.5, 0.2], &[0.2, 0.9]]);
    let same = frechet_distance(&a, &a).unwrap();
    assert_eq!(same.value, 0.0);

    // 1-D mean shift only: N(0,1) vs N(1,1) → 1.
    let n01 = stats(&[0.0], &[&[1.0]]);
    let n11 = stats(&[1.0], &[&[1.0]]);
    let score = frechet_distance(&n01, &n11).unwrap();
    assert!((score.value - 1.0).abs() < 1e-9, "{}", score.value);

    // 1-D variance gap only: N(0,1) vs N(0,4) → 1 + 4 − 2·2 = 1.
    let n04 = stats(&[0.0], &[&[4.0]]);
    let score = frechet_distance(&n01, &n04).unwrap();
    assert!((score.value - 1.0).abs() < 1e-9, "{}", score.value);

    // Dimension mismatch.
    assert!(frechet_distance(&n01, &a).is_err());
}

#[test]
fn frechet_is_symmetric() {
    let a = stats(&[0.1, 0.4], &[&[2.0, 0.3], &[0.3, 0.5]]);
    let b = stats(&[-1.0, 0.2], &[&[0.7, -0.1], &[-0.1, 1.1]]);
    let ab = frechet_distance(&a, &b).unwrap().value;
    let ba = frechet_distance(&b, &a).unwrap().value;
    assert!((ab - ba).abs() < 1e-8, "{ab} vs {ba}");
    assert!(ab > 0.0);
}

fn desk_extractor() -> (Classifier, Tensor) {
    let ds = synth_shapes(4, 40, 8, 77).unwrap();
    let options = ClassifierTrainOptions {
        hidden1: 32,
        hidden2: 12,
        dropout_rate: 0.2,
        epochs: 6,
        batch_size: 32,
        learning_rate: 2e-3,
        val_fraction: 0.2,
        seed: 3,
        checkpoint_path: None,
    };
    let (extractor, _) = train_classifier(&ds, &options).unwrap();
    (extractor, ds.flat_images())
}

#[test]
fn identical_sets_score_zero_and_orderings_hold() {
    let (extractor, images) = desk_extractor();
    let report = fid_report(&images, &images, &extractor, "probe", 1, 0).unwrap();
    assert_eq!(report.mean, 0.0);
    assert_eq!(report.sd, 0.0);
    assert!(report.to_text().contains('±'));

    // First half vs second half: small but positive. Real vs uniform noise:
    // much larger.
    let n = images.shape()[0];
    let d = images.shape()[1];
    let half = n / 2;
    let first = Tensor::new(vec![half, d], images.data()[..half * d].to_vec()).unwrap();
    let second = Tensor::new(vec![n - half, d], images.data()[half * d..].to_vec()).unwrap();
    let within = fid(&first, &second, &extractor, "probe").unwrap().value;

    let mut rng = seeds::rng(5);
    let mut noise = Tensor::zeros(vec![half, d]);
    for v in noise.data_mut() {
        *v = rng.random::<f64>() as Real;
    }
    let against_noise = fid(&first, &noise, &extractor, "probe").unwrap().value;
    assert!(within > 0.0);
    assert!(
        against_noise > within,
        "noise {against_noise} vs within {within}"
    );
}

#[test]
fn bootstrap_reports_spread() {
    let (extractor, images) = desk_extractor();
    let n = images.shape()[0];
    let d = images.shape()[1];
    let half = n / 2;
    let first = Tensor::new(vec![half, d], images.data()[..half * d].to_vec()).unwrap();
    let second = Tensor::new(vec![n - half, d], images.data()[half * d..].to_vec()).unwrap();
    let report = fid_report(&first, &second, &extractor, "probe", 5, 11).unwrap();
    assert_eq!(report.repeats, 5);
    assert!(report.mean > 0.0);
    assert!(report.sd > 0.0);
    // Deterministic given the seed.
    let again = fid_report(&first, &second, &extractor, "probe", 5, 11).unwrap();
    assert_eq!(report.mean, again.mean);
    assert_eq!(report.sd, again.sd);
}
