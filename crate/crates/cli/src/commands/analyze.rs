//! `fid` and `latent-scatter`.

use std::path::Path;
use std::time::Instant;

use mtgen_core::cvae::CvaeStage;
use mtgen_core::datasets::{load_idx, split, uniform_noise_images};
use mtgen_core::error::{Error, Result};
use mtgen_core::generator::import_suite;
use mtgen_core::harness::Classifier;
use mtgen_core::metrics::fid_report;
use mtgen_core::seeds;
use mtgen_core::Tensor;

use super::{write_text, write_timing};
use crate::config::RunConfig;

/// An image-set argument: `synth` (the configured dataset), `idx:IMG,LBL`,
/// `suite:DIR`, or `noise:COUNT`.
pub fn load_image_set(
    spec: &str,
    config: &RunConfig,
    reference_dim: Option<usize>,
) -> Result<Tensor> {
    if spec == "synth" {
        return Ok(config.load_dataset()?.flat_images());
    }
    if let Some(rest) = spec.strip_prefix("idx:") {
        let Some((images, labels)) = rest.split_once(',') else {
            return Err(Error::Config(format!(
                "idx source must be idx:IMAGES,LABELS, got {spec:?}"
            )));
        };
        return Ok(load_idx(Path::new(images), Path::new(labels))?.flat_images());
    }
    if let Some(dir) = spec.strip_prefix("suite:") {
        return Ok(import_suite(Path::new(dir))?.images_tensor());
    }
    if let Some(count) = spec.strip_prefix("noise:") {
        let count: usize = count
            .parse()
            .map_err(|_| Error::Config(format!("bad noise count in {spec:?}")))?;
        let dim = reference_dim.ok_or_else(|| {
            Error::Config("noise sets need a reference set to take their size from".into())
        })?;
        let mut rng = seeds::rng(seeds::derive(config.seed, "noise-images"));
        return Ok(uniform_noise_images(count, dim, &mut rng));
    }
    Err(Error::Config(format!(
        "image set must be synth, idx:IMG,LBL, suite:DIR, or noise:COUNT; got {spec:?}"
    )))
}

pub fn cmd_fid(
    config: &RunConfig,
    out_dir: &Path,
    extractor_path: &Path,
    real_spec: &str,
    generated_spec: &str,
) -> Result<()> {
    let started = Instant::now();
    let extractor = Classifier::load(extractor_path)?;
    let real = load_image_set(real_spec, config, None)?;
    let generated = load_image_set(generated_spec, config, Some(real.shape()[1]))?;
    let report = fid_report(
        &real,
        &generated,
        &extractor,
        &extractor_path.display().to_string(),
        config.fid_repeats,
        seeds::derive(config.seed, "fid-cli"),
    )?;
    let text = report.to_text();
    write_text(&out_dir.join("fid.txt"), &text)?;
    write_timing(out_dir, "fid", started.elapsed())?;
    print!("{text}");
    Ok(())
}

/// Encode the validation split with a κ = 2 stage and emit one
/// `z1 z2 class` row per example for external plotting.
pub fn cmd_latent_scatter(config: &RunConfig, out_dir: &Path, checkpoint: &Path) -> Result<()> {
    let started = Instant::now();
    let stage = CvaeStage::load(checkpoint)?;
    if stage.latent_dim() != 2 {
        return Err(Error::Usage(format!(
            "latent-scatter needs a 2-dimensional latent space; checkpoint has {} \
             (train a dedicated stage with vae1.latent_dim = 2)",
            stage.latent_dim()
        )));
    }
    let dataset = config.load_dataset()?;
    if dataset.input_dim() != stage.input_dim() {
        return Err(Error::Config(format!(
            "dataset images have {} pixels but the stage encodes {}",
            dataset.input_dim(),
            stage.input_dim()
        )));
    }
    let (_, val) = split(
        &dataset,
        1.0 - config.dataset_val_fraction,
        seeds::derive(config.seed, "dataset-split"),
    )?;

    let mut text = String::from("# z1 z2 class\n");
    let chunk = 256;
    for start in (0..val.len()).step_by(chunk) {
        let end = (start + chunk).min(val.len());
        let indices: Vec<usize> = (start..end).collect();
        let (images, labels) = val.gather(&indices);
        let encoded = stage.encode(&images, &labels)?;
        for (row, &label) in labels.iter().enumerate() {
            let z = encoded.mu.row(row);
            text.push_str(&format!("{} {} {label}\n", z[0], z[1]));
        }
    }
    write_text(&out_dir.join("scatter.txt"), &text)?;
    write_timing(out_dir, "latent-scatter", started.elapsed())?;
    println!("scatter rows: {}", val.len());
    Ok(())
}
