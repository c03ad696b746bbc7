//! `review` (apply human verdicts to a suite) and `export` (re-render a
//! suite into a fresh directory).

use std::path::Path;
use std::time::Instant;

use mtgen_core::error::Result;
use mtgen_core::generator::{apply_verdicts, export_suite, import_suite, parse_verdict_file};

use super::{write_text, write_timing};

/// Applies a verdict file to the suite in place (the manifest is rewritten
/// with the updated verdict column) and prints per-class validity.
pub fn cmd_review(suite_dir: &Path, verdict_file: &Path) -> Result<()> {
    let started = Instant::now();
    let mut suite = import_suite(suite_dir)?;
    let verdicts = parse_verdict_file(verdict_file)?;
    let report = apply_verdicts(&mut suite, &verdicts)?;
    export_suite(&suite, suite_dir)?;
    let text = report.to_text();
    write_text(&suite_dir.join("validity.txt"), &text)?;
    write_timing(suite_dir, "review", started.elapsed())?;
    print!("{text}");
    Ok(())
}

pub fn cmd_export(suite_dir: &Path, out_dir: &Path) -> Result<()> {
    let started = Instant::now();
    let suite = import_suite(suite_dir)?;
    let manifest = export_suite(&suite, out_dir)?;
    write_timing(out_dir, "export", started.elapsed())?;
    println!("exported {} cases to {}", suite.len(), manifest.display());
    Ok(())
}
