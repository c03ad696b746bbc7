//! Human-oracle verdict files: `<id> <valid|invalid>` per line, `#`
//! comments and blank lines allowed.

use std::path::Path;

use super::{TestSuite, Verdict};
use crate::error::{Error, Result};

/// Validity tallies of one class.
#[derive(Debug, Clone, Copy)]
pub struct ClassValidity {
    pub class: usize,
    pub valid: usize,
    pub invalid: usize,
    pub unknown: usize,
    pub total: usize,
}

impl ClassValidity {
    pub fn valid_ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.valid as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerdictReport {
    pub per_class: Vec<ClassValidity>,
    pub valid: usize,
    pub invalid: usize,
    pub unknown: usize,
    pub total: usize,
}

impl VerdictReport {
    /// Valid cases over all cases, the Table-style "valid" ratio.
    pub fn valid_ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.valid as f64 / self.total as f64
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("valid: {}\n", self.valid));
        out.push_str(&format!("invalid: {}\n", self.invalid));
        out.push_str(&format!("unknown: {}\n", self.unknown));
        out.push_str(&format!("valid_ratio: {:.4}\n", self.valid_ratio()));
        for c in &self.per_class {
            out.push_str(&format!(
                "class_{}: valid {} / total {} (ratio {:.4})\n",
                c.class,
                c.valid,
                c.total,
                c.valid_ratio()
            ));
        }
        out
    }
}

/// Parse a verdict file. Malformed lines and unknown verdict words are
/// parse errors naming the line.
pub fn parse_verdict_file(path: &Path) -> Result<Vec<(usize, Verdict)>> {
    let text = std::fs::read_to_string(path)?;
    let mut verdicts = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(id_raw), Some(verdict_raw), None) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::Parse(format!(
                "{}:{}: expected `<id> <valid|invalid>`, got {line:?}",
                path.display(),
                line_no + 1
            )));
        };
        let id: usize = id_raw.parse().map_err(|_| {
            Error::Parse(format!(
                "{}:{}: bad case id {id_raw:?}",
                path.display(),
                line_no + 1
            ))
        })?;
        let verdict = match verdict_raw {
            "valid" => Verdict::Valid,
            "invalid" => Verdict::Invalid,
            other => {
                return Err(Error::Parse(format!(
                    "{}:{}: verdict must be `valid` or `invalid`, got {other:?}",
                    path.display(),
                    line_no + 1
                )))
            }
        };
        verdicts.push((id, verdict));
    }
    Ok(verdicts)
}

/// Record verdicts on the suite and report per-class validity. Cases not
/// mentioned keep their current verdict; re-applying a file is idempotent.
/// A verdict for an id the suite does not contain is a parse error.
pub fn apply_verdicts(
    suite: &mut TestSuite,
    verdicts: &[(usize, Verdict)],
) -> Result<VerdictReport> {
    for &(id, verdict) in verdicts {
        let case = suite
            .cases
            .iter_mut()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::Parse(format!("verdict references unknown case id {id}")))?;
        case.verdict = verdict;
    }

    let mut per_class: Vec<ClassValidity> = (0..suite.num_classes)
        .map(|class| ClassValidity {
            class,
            valid: 0,
            invalid: 0,
            unknown: 0,
            total: 0,
        })
        .collect();
    for case in &suite.cases {
        let entry = &mut per_class[case.expected];
        entry.total += 1;
        match case.verdict {
            Verdict::Valid => entry.valid += 1,
            Verdict::Invalid => entry.invalid += 1,
            Verdict::Unknown => entry.unknown += 1,
        }
    }
    let valid = per_class.iter().map(|c| c.valid).sum();
    let invalid = per_class.iter().map(|c| c.invalid).sum();
    let unknown = per_class.iter().map(|c| c.unknown).sum();
    Ok(VerdictReport {
        per_class,
        valid,
        invalid,
        unknown,
        total: suite.len(),
    })
}
