//! Subcommand implementations and shared run-directory plumbing.

pub mod analyze;
pub mod generate;
pub mod review;
pub mod train;

use std::path::{Path, PathBuf};
use std::time::Duration;

use mtgen_core::error::{Error, Result};

/// Resolve the output directory of a run. An explicit directory must be
/// fresh unless `--force`; without one, runs are stamped under `runs/`.
pub fn resolve_out_dir(requested: Option<&Path>, force: bool, command: &str) -> Result<PathBuf> {
    match requested {
        Some(dir) => {
            if dir.exists() && !force {
                let occupied = std::fs::read_dir(dir)?.next().is_some();
                if occupied {
                    return Err(Error::Usage(format!(
                        "output directory {} exists and is not empty; pass --force to overwrite",
                        dir.display()
                    )));
                }
            }
            std::fs::create_dir_all(dir)?;
            Ok(dir.to_path_buf())
        }
        None => {
            let stamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let mut dir = PathBuf::from("runs").join(format!("{command}-{stamp}"));
            let mut suffix = 1;
            while dir.exists() {
                suffix += 1;
                dir = PathBuf::from("runs").join(format!("{command}-{stamp}-{suffix}"));
            }
            std::fs::create_dir_all(&dir)?;
            Ok(dir)
        }
    }
}

/// Wall-clock timing goes to its own artifact so the deterministic reports
/// stay byte-identical across reruns of the same seed.
pub fn write_timing(out_dir: &Path, label: &str, elapsed: Duration) -> Result<()> {
    let line = format!("{label}: {:.3}s\n", elapsed.as_secs_f64());
    let path = out_dir.join("timing.txt");
    let mut existing = std::fs::read_to_string(&path).unwrap_or_default();
    existing.push_str(&line);
    std::fs::write(path, existing)?;
    Ok(())
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}
