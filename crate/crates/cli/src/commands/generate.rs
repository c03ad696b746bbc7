//! `generate`: run the test-generation loop against trained checkpoints and
//! export the suite, report, and search trajectories.

use std::path::Path;
use std::time::Instant;

use mtgen_core::cvae::CvaeStage;
use mtgen_core::error::{Error, Result};
use mtgen_core::generator::{export_suite, generate, GenerationMode};
use mtgen_core::harness::Classifier;
use mtgen_core::metrics::fid_report;
use mtgen_core::search::write_trajectory;
use mtgen_core::seeds;

use super::{write_text, write_timing};
use crate::config::RunConfig;

pub struct GeneratePaths<'a> {
    pub stage1: &'a Path,
    pub stage2: &'a Path,
    pub classifier: &'a Path,
    pub extractor: &'a Path,
}

pub fn cmd_generate(config: &RunConfig, out_dir: &Path, paths: &GeneratePaths) -> Result<()> {
    let started = Instant::now();
    let stage1 = CvaeStage::load(paths.stage1)?;
    let stage2 = CvaeStage::load(paths.stage2)?;
    let model = Classifier::load(paths.classifier)?;
    let extractor = Classifier::load(paths.extractor)?;

    let dataset = config.load_dataset()?;
    if dataset.input_dim() != stage1.input_dim() {
        return Err(Error::Config(format!(
            "dataset images have {} pixels but stage 1 was trained on {}",
            dataset.input_dim(),
            stage1.input_dim()
        )));
    }
    if extractor.input_dim() != stage1.input_dim() {
        return Err(Error::Config(format!(
            "extractor expects {} inputs but images have {}",
            extractor.input_dim(),
            stage1.input_dim()
        )));
    }

    let generation = config.generation_config(dataset.height(), dataset.width())?;
    let outcome = generate(&model, &stage1, &stage2, &generation)?;

    let mut report_text = outcome.report.to_text();
    if outcome.suite.len() >= 2 {
        let real = dataset.flat_images();
        let generated = outcome.suite.images_tensor();
        let fid = fid_report(
            &real,
            &generated,
            &extractor,
            &paths.extractor.display().to_string(),
            config.fid_repeats,
            seeds::derive(config.seed, "generate-fid"),
        )?;
        report_text.push_str(&format!(
            "fid_mean: {:.4}\nfid_sd: {:.4}\n",
            fid.mean, fid.sd
        ));
    } else {
        report_text.push_str("fid_mean: n/a\nfid_sd: n/a\n");
    }

    if !outcome.suite.is_empty() {
        export_suite(&outcome.suite, &out_dir.join("suite"))?;
    }
    if outcome.report.mode == GenerationMode::Search {
        for (attempt, trajectory) in &outcome.trajectories {
            write_trajectory(
                &out_dir
                    .join("trajectories")
                    .join(format!("attempt_{attempt:04}.txt")),
                trajectory,
            )?;
        }
    }
    write_text(&out_dir.join("report.txt"), &report_text)?;
    write_timing(out_dir, "generate", started.elapsed())?;
    print!("{report_text}");
    Ok(())
}
