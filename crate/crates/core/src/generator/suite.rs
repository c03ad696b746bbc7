//! Suite persistence: a line-delimited manifest with fixed field order, an
//! exact-precision image archive, per-case graymaps, and per-class contact
//! sheets for human review.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{GenerationMode, TestCase, Verdict};
use crate::autodiff::{Checkpoint, Real, Tensor};
use crate::error::{Error, Result};
use crate::pgm;

/// A generated suite plus the geometry needed to render it.
#[derive(Debug, Clone)]
pub struct TestSuite {
    pub cases: Vec<TestCase>,
    pub num_classes: usize,
    pub latent_dim: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub mode: GenerationMode,
    pub seed: u64,
}

impl TestSuite {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn case(&self, id: usize) -> Result<&TestCase> {
        self.cases
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::Parse(format!("no case with id {id}")))
    }

    /// All case images as one `[n, h·w]` tensor.
    pub fn images_tensor(&self) -> Tensor {
        let d = self.image_height * self.image_width;
        let mut t = Tensor::zeros(vec![self.cases.len(), d]);
        for (i, case) in self.cases.iter().enumerate() {
            t.data_mut()[i * d..(i + 1) * d].copy_from_slice(case.image.data());
        }
        t
    }
}

/// Write a suite under `out_dir`: `manifest.txt` (one record per case, field
/// order `id expected predicted fitness verdict u…`), `images.mtg` (exact
/// pixel values), `cases/case_*.pgm`, and `sheets/class_*.pgm` grouping
/// cases by expected label. Returns the manifest path.
pub fn export_suite(suite: &TestSuite, out_dir: &Path) -> Result<PathBuf> {
    if suite.is_empty() {
        return Err(Error::Usage("cannot export an empty suite".into()));
    }
    fs::create_dir_all(out_dir)?;

    let manifest_path = out_dir.join("manifest.txt");
    let mut manifest = std::io::BufWriter::new(fs::File::create(&manifest_path)?);
    writeln!(
        manifest,
        "# id expected predicted fitness verdict latent[{}]",
        suite.latent_dim
    )?;
    for case in &suite.cases {
        let fitness = match case.fitness {
            Some(f) => format!("{f}"),
            None => "-".to_string(),
        };
        write!(
            manifest,
            "{} {} {} {} {}",
            case.id,
            case.expected,
            case.predicted,
            fitness,
            case.verdict.as_str()
        )?;
        for v in &case.latent {
            write!(manifest, " {v}")?;
        }
        writeln!(manifest)?;
    }
    manifest.flush()?;

    let mut archive = Checkpoint::new();
    archive.push_meta("kind", "test-suite");
    archive.push_meta("count", suite.cases.len());
    archive.push_meta("num_classes", suite.num_classes);
    archive.push_meta("latent_dim", suite.latent_dim);
    archive.push_meta("image_height", suite.image_height);
    archive.push_meta("image_width", suite.image_width);
    archive.push_meta("mode", suite.mode.as_str());
    archive.push_meta("seed", suite.seed);
    archive.push_tensor("images", suite.images_tensor());
    archive.save(&out_dir.join("images.mtg"))?;

    let (w, h) = (suite.image_width, suite.image_height);
    for case in &suite.cases {
        let path = out_dir
            .join("cases")
            .join(format!("case_{:06}.pgm", case.id));
        pgm::write_pgm(&path, w, h, case.image.data())?;
    }

    for class in 0..suite.num_classes {
        let tiles: Vec<&[Real]> = suite
            .cases
            .iter()
            .filter(|c| c.expected == class)
            .map(|c| c.image.data())
            .collect();
        if tiles.is_empty() {
            continue;
        }
        let columns = (tiles.len() as f64).sqrt().ceil() as usize;
        let (sw, sh, pixels) = pgm::contact_sheet(&tiles, w, h, columns)?;
        pgm::write_pgm(
            &out_dir.join("sheets").join(format!("class_{class}.pgm")),
            sw,
            sh,
            &pixels,
        )?;
    }

    Ok(manifest_path)
}

/// Load a suite previously written by [`export_suite`]. Exact round trip:
/// pixels come from the archive, latents and metadata from the manifest.
pub fn import_suite(dir: &Path) -> Result<TestSuite> {
    let archive = Checkpoint::load(&dir.join("images.mtg"))?;
    if archive.meta_value("kind") != Some("test-suite") {
        return Err(Error::Parse(format!(
            "{}: images.mtg is not a suite archive",
            dir.display()
        )));
    }
    let count: usize = archive.meta_parsed("count")?;
    let num_classes: usize = archive.meta_parsed("num_classes")?;
    let latent_dim: usize = archive.meta_parsed("latent_dim")?;
    let image_height: usize = archive.meta_parsed("image_height")?;
    let image_width: usize = archive.meta_parsed("image_width")?;
    let mode = GenerationMode::parse(archive.meta_value("mode").unwrap_or_default())?;
    let seed: u64 = archive.meta_parsed("seed")?;
    let images = archive.tensor("images")?;
    let d = image_height * image_width;
    if images.shape() != [count, d] {
        return Err(Error::Parse(format!(
            "image archive has shape {:?}, expected [{count}, {d}]",
            images.shape()
        )));
    }

    let manifest_path = dir.join("manifest.txt");
    let text = fs::read_to_string(&manifest_path)?;
    let mut cases = Vec::with_capacity(count);
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 + latent_dim {
            return Err(Error::Parse(format!(
                "{}:{}: expected {} fields, found {}",
                manifest_path.display(),
                line_no + 1,
                5 + latent_dim,
                fields.len()
            )));
        }
        let bad = |what: &str| {
            Error::Parse(format!(
                "{}:{}: bad {what} field",
                manifest_path.display(),
                line_no + 1
            ))
        };
        let id: usize = fields[0].parse().map_err(|_| bad("id"))?;
        let expected: usize = fields[1].parse().map_err(|_| bad("expected"))?;
        let predicted: usize = fields[2].parse().map_err(|_| bad("predicted"))?;
        let fitness = match fields[3] {
            "-" => None,
            raw => Some(raw.parse::<Real>().map_err(|_| bad("fitness"))?),
        };
        let verdict = Verdict::parse(fields[4])?;
        let mut latent = Vec::with_capacity(latent_dim);
        for raw in &fields[5..] {
            latent.push(raw.parse::<Real>().map_err(|_| bad("latent"))?);
        }
        if id >= count {
            return Err(Error::Parse(format!(
                "{}:{}: id {id} outside archive of {count} images",
                manifest_path.display(),
                line_no + 1
            )));
        }
        let image = Tensor::new(vec![d], images.data()[id * d..(id + 1) * d].to_vec())?;
        cases.push(TestCase {
            id,
            image,
            expected,
            predicted,
            latent,
            fitness,
            verdict,
        });
    }
    if cases.len() != count {
        return Err(Error::Parse(format!(
            "manifest lists {} cases, archive holds {count}",
            cases.len()
        )));
    }
    Ok(TestSuite {
        cases,
        num_classes,
        latent_dim,
        image_height,
        image_width,
        mode,
        seed,
    })
}
