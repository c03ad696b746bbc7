//! Fréchet-distance realism scoring between image sets.
//!
//! Features come from the penultimate layer of an independently trained
//! classifier (never the model under test). Scores are comparable only
//! under the same embedding; orderings, not absolute values, are the
//! meaningful output at this scale.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{widen, Real, Tensor};
use crate::error::{Error, Result};
use crate::harness::Classifier;
use crate::seeds;

/// Ridge added to the covariance when a set is smaller than the feature
/// dimension.
const COVARIANCE_RIDGE: Real = 1e-6;

/// Mean and unbiased covariance of an embedded image set.
#[derive(Debug, Clone)]
pub struct GaussianStats {
    pub mean: Vec<Real>,
    /// `[d, d]`, symmetric by construction.
    pub covariance: Tensor,
    pub count: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A Fréchet distance value tagged with the embedding that produced it and
/// the sizes of the two sets.
#[derive(Debug, Clone)]
pub struct FidScore {
    pub value: Real,
    pub embedding_id: String,
    pub set_sizes: (usize, usize),
}

/// Bootstrap summary: mean ± sd over `repeats` resamples.
#[derive(Debug, Clone)]
pub struct FidReport {
    pub mean: Real,
    pub sd: Real,
    pub repeats: usize,
    pub embedding_id: String,
}

impl FidReport {
    pub fn to_text(&self) -> String {
        format!(
            "fid: {:.4} ± {:.4}\nrepeats: {}\nembedding: {}\n",
            self.mean, self.sd, self.repeats, self.embedding_id
        )
    }
}

/// Deterministic penultimate-layer activations of the feature classifier.
pub fn embed(images: &Tensor, extractor: &Classifier) -> Result<Tensor> {
    extractor.features(images)
}

/// Sample mean and unbiased (n − 1) covariance of `[n, d]` features.
pub fn gaussian_fit(features: &Tensor) -> Result<GaussianStats> {
    let shape = features.shape();
    if shape.len() != 2 {
        return Err(Error::Dimension(format!(
            "expected [n, d] features, got {shape:?}"
        )));
    }
    let (n, d) = (shape[0], shape[1]);
    if n < 2 {
        return Err(Error::Parameter(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }

    let mut mean = vec![0.0; d];
    for row in features.data().chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as Real;
    }

    let mut covariance = Tensor::zeros(vec![d, d]);
    {
        let cov = covariance.data_mut();
        let mut centered = vec![0.0; d];
        for row in features.data().chunks_exact(d) {
            for ((c, v), m) in centered.iter_mut().zip(row).zip(&mean) {
                *c = v - m;
            }
            for i in 0..d {
                let ci = centered[i];
                for j in i..d {
                    cov[i * d + j] += ci * centered[j];
                }
            }
        }
        let denom = (n - 1) as Real;
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] /= denom;
                cov[j * d + i] = cov[i * d + j];
            }
        }
        if n < d {
            for i in 0..d {
                cov[i * d + i] += COVARIANCE_RIDGE;
            }
        }
    }
    Ok(GaussianStats {
        mean,
        covariance,
        count: n,
    })
}

/// Square root of a symmetric positive semidefinite matrix via its
/// eigendecomposition, with negative round-off eigenvalues clamped to zero.
pub fn matrix_sqrt_psd(matrix: &Tensor) -> Result<Tensor> {
    let shape = matrix.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {shape:?}"
        )));
    }
    let d = shape[0];
    let data = matrix.data();
    let scale = data.iter().fold(1.0 as Real, |acc, v| acc.max(v.abs()));
    for i in 0..d {
        for j in (i + 1)..d {
            let asymmetry = (data[i * d + j] - data[j * d + i]).abs();
            if asymmetry > 1e-8 * scale {
                return Err(Error::Parameter(format!(
                    "matrix is asymmetric at ({i}, {j}) by {asymmetry}"
                )));
            }
        }
    }

    let m = DMatrix::<f64>::from_iterator(d, d, data.iter().map(|&v| widen(v)));
    // Exact symmetry before the eigensolver.
    let m = (&m + m.transpose()) * 0.5;
    let eigen = m.symmetric_eigen();
    let sqrt_values = eigen.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root =
        &eigen.eigenvectors * DMatrix::from_diagonal(&sqrt_values) * eigen.eigenvectors.transpose();

    let mut out = Tensor::zeros(vec![d, d]);
    for i in 0..d {
        for j in 0..d {
            // DMatrix is column-major.
            out.data_mut()[i * d + j] = root[(i, j)] as Real;
        }
    }
    Ok(out)
}

/// ‖μ_a − μ_b‖² + Tr(Σ_a + Σ_b − 2·(Σ_a Σ_b)^{1/2}), via the symmetrized
/// product Σ_a^{1/2} Σ_b Σ_a^{1/2}. Negative round-off (and the residual
/// noise of identical inputs) clamps to exactly zero.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<FidScore> {
    let d = a.dim();
    if d != b.dim() {
        return Err(Error::Dimension(format!(
            "feature dimensions differ: {d} vs {}",
            b.dim()
        )));
    }
    let mean_term: Real = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();

    let root_a = matrix_sqrt_psd(&a.covariance)?;
    let product = matmul_square(&matmul_square(&root_a, &b.covariance, d), &root_a, d);
    let product = symmetrized(&product, d);
    let cross_root = matrix_sqrt_psd(&product)?;

    let trace = |t: &Tensor| -> Real { (0..d).map(|i| t.data()[i * d + i]).sum() };
    let raw = mean_term + trace(&a.covariance) + trace(&b.covariance) - 2.0 * trace(&cross_root);
    let magnitude = 1.0 + mean_term + trace(&a.covariance).abs() + trace(&b.covariance).abs();
    let value = if raw.abs() < 1e-8 * magnitude {
        0.0
    } else {
        raw.max(0.0)
    };
    Ok(FidScore {
        value,
        embedding_id: String::new(),
        set_sizes: (a.count, b.count),
    })
}

/// Embed both image sets and take the Fréchet distance of their fitted
/// Gaussians.
pub fn fid(
    real: &Tensor,
    generated: &Tensor,
    extractor: &Classifier,
    embedding_id: &str,
) -> Result<FidScore> {
    let real_features = embed(real, extractor)?;
    let generated_features = embed(generated, extractor)?;
    let mut score = frechet_distance(
        &gaussian_fit(&real_features)?,
        &gaussian_fit(&generated_features)?,
    )?;
    score.embedding_id = embedding_id.to_string();
    Ok(score)
}

/// FID over `repeats` bootstrap resamples of both sets. One repeat means no
/// resampling: the exact sets, sd 0.
pub fn fid_report(
    real: &Tensor,
    generated: &Tensor,
    extractor: &Classifier,
    embedding_id: &str,
    repeats: usize,
    seed: u64,
) -> Result<FidReport> {
    if repeats == 0 {
        return Err(Error::Parameter("repeats must be at least 1".into()));
    }
    if real.shape()[0] == 0 || generated.shape()[0] == 0 {
        return Err(Error::Parameter("both image sets must be nonempty".into()));
    }
    let mut values = Vec::with_capacity(repeats);
    if repeats == 1 {
        values.push(fid(real, generated, extractor, embedding_id)?.value);
    } else {
        for repeat in 0..repeats {
            let mut rng = seeds::rng(seeds::derive_indexed(
                seed,
                "fid-bootstrap",
                &[repeat as u64],
            ));
            let real_sample = resample(real, &mut rng);
            let generated_sample = resample(generated, &mut rng);
            values.push(fid(&real_sample, &generated_sample, extractor, embedding_id)?.value);
        }
    }
    let mean = values.iter().sum::<Real>() / repeats as Real;
    let sd = if repeats > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / (repeats - 1) as Real)
            .sqrt()
    } else {
        0.0
    };
    Ok(FidReport {
        mean,
        sd,
        repeats,
        embedding_id: embedding_id.to_string(),
    })
}

fn resample(images: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
    let (n, d) = (images.shape()[0], images.shape()[1]);
    let mut out = Tensor::zeros(vec![n, d]);
    for row in 0..n {
        let pick = rng.random_range(0..n);
        out.data_mut()[row * d..(row + 1) * d]
            .copy_from_slice(&images.data()[pick * d..(pick + 1) * d]);
    }
    out
}

fn matmul_square(a: &Tensor, b: &Tensor, d: usize) -> Tensor {
    let mut out = Tensor::zeros(vec![d, d]);
    let (av, bv, ov) = (a.data(), b.data(), out.data_mut());
    for i in 0..d {
        for k in 0..d {
            let aik = av[i * d + k];
            for j in 0..d {
                ov[i * d + j] += aik * bv[k * d + j];
            }
        }
    }
    out
}

fn symmetrized(m: &Tensor, d: usize) -> Tensor {
    let mut out = Tensor::zeros(vec![d, d]);
    for i in 0..d {
        for j in 0..d {
            out.data_mut()[i * d + j] = 0.5 * (m.data()[i * d + j] + m.data()[j * d + i]);
        }
    }
    out
}

#[cfg(test)]
mod tests;
