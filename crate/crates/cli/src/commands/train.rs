//! `train-classifier` and `train-vae`.

use std::path::Path;
use std::time::Instant;

use mtgen_core::cvae::{train_stage, CvaeStage, EpochLoss, StageIndex, StageInput};
use mtgen_core::datasets::{split, LabeledDataset};
use mtgen_core::error::{Error, Result};
use mtgen_core::harness::train_classifier;
use mtgen_core::pgm;
use mtgen_core::seeds;
use mtgen_core::Real;

use super::{write_text, write_timing};
use crate::config::{codes_input, RunConfig};

pub fn cmd_train_classifier(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let started = Instant::now();
    let dataset = config.load_dataset()?;
    let checkpoint = out_dir.join("classifier.mtg");
    let options = config.classifier_options("classifier", Some(checkpoint.clone()));
    let (_model, report) = train_classifier(&dataset, &options)?;

    let text = format!(
        "kind: classifier\ntrain_examples: {}\nval_examples: {}\nepochs: {}\nfinal_loss: {:.6}\ntrain_accuracy: {:.4}\nval_accuracy: {:.4}\n",
        report.train_examples,
        report.val_examples,
        report.epochs,
        report.final_loss,
        report.train_accuracy,
        report.val_accuracy,
    );
    write_text(&out_dir.join("train_report.txt"), &text)?;
    write_timing(out_dir, "train-classifier", started.elapsed())?;
    print!("{text}");
    println!("checkpoint: {}", checkpoint.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSelection {
    Both,
    One,
    Two,
}

impl StageSelection {
    pub fn parse(raw: &str) -> Result<Self> {
        match raw {
            "both" => Ok(Self::Both),
            "1" => Ok(Self::One),
            "2" => Ok(Self::Two),
            other => Err(Error::Config(format!(
                "--stage must be both, 1, or 2; got {other:?}"
            ))),
        }
    }
}

/// Trains stage 1 and then stage 2 on its encodings (the enforced order);
/// `--stage 2` alone requires an existing stage-1 checkpoint.
pub fn cmd_train_vae(
    config: &RunConfig,
    out_dir: &Path,
    selection: StageSelection,
    stage1_checkpoint: Option<&Path>,
) -> Result<()> {
    let started = Instant::now();
    let dataset = config.load_dataset()?;
    let (train, val) = split(
        &dataset,
        1.0 - config.dataset_val_fraction,
        seeds::derive(config.seed, "dataset-split"),
    )?;

    let stage1 = match selection {
        StageSelection::Both | StageSelection::One => {
            let options = config.stage_options(StageIndex::One, Some(out_dir.join("stage1.mtg")));
            let result = train_stage(&StageInput::Images(&train), StageIndex::One, &options)?;
            write_curve(&out_dir.join("loss_stage1.txt"), &result.curve)?;
            reconstruction_sheet(&result.stage, &val, &out_dir.join("recon_stage1.pgm"))?;
            println!(
                "stage 1: {} epochs, final loss {:.4}, gamma {:.5}",
                result.curve.len(),
                result.final_loss().map(|e| e.total).unwrap_or(Real::NAN),
                result.stage.gamma()
            );
            Some(result.stage)
        }
        StageSelection::Two => match stage1_checkpoint {
            Some(path) => Some(CvaeStage::load(path)?),
            None => {
                return Err(Error::Usage(
                    "stage-2 training requires a trained stage-1 checkpoint; \
                     pass --stage1-checkpoint or train with --stage both"
                        .into(),
                ))
            }
        },
    };

    if matches!(selection, StageSelection::Both | StageSelection::Two) {
        let stage1 = stage1.as_ref().expect("stage 1 present by construction");
        let (codes, labels) = config.stage2_input(stage1, &train)?;
        let options = config.stage_options(StageIndex::Two, Some(out_dir.join("stage2.mtg")));
        let result = train_stage(
            &codes_input(&codes, &labels, train.num_classes()),
            StageIndex::Two,
            &options,
        )?;
        write_curve(&out_dir.join("loss_stage2.txt"), &result.curve)?;
        println!(
            "stage 2: {} epochs, final loss {:.4}, gamma {:.5}",
            result.curve.len(),
            result.final_loss().map(|e| e.total).unwrap_or(Real::NAN),
            result.stage.gamma()
        );
    }

    write_timing(out_dir, "train-vae", started.elapsed())?;
    Ok(())
}

fn write_curve(path: &Path, curve: &[EpochLoss]) -> Result<()> {
    let mut text = String::from("# epoch total recon kl\n");
    for e in curve {
        text.push_str(&format!("{} {} {} {}\n", e.epoch, e.total, e.recon, e.kl));
    }
    write_text(path, &text)
}

/// Contact sheet with one row of validation originals above one row of
/// their reconstructions through the stage-1 posterior mean.
fn reconstruction_sheet(stage1: &CvaeStage, val: &LabeledDataset, path: &Path) -> Result<()> {
    let columns = val.len().min(10);
    if columns == 0 {
        return Ok(());
    }
    let indices: Vec<usize> = (0..columns).collect();
    let (images, labels) = val.gather(&indices);
    let encoded = stage1.encode(&images, &labels)?;
    let reconstructed = stage1.decode_batch(&encoded.mu, &labels)?;

    let d = val.input_dim();
    let mut tiles: Vec<&[Real]> = Vec::with_capacity(columns * 2);
    for i in 0..columns {
        tiles.push(&images.data()[i * d..(i + 1) * d]);
    }
    for i in 0..columns {
        tiles.push(&reconstructed.data()[i * d..(i + 1) * d]);
    }
    let (w, h, pixels) = pgm::contact_sheet(&tiles, val.width(), val.height(), columns)?;
    pgm::write_pgm(path, w, h, &pixels)
}
