//! Plain-text correspondence files.
//!
//! ```text
//! # robustfit v1 homography 640 480
//! 12.5 33.25 14.0 35.5 1
//! 410.125 20.0 399.75 18.5 0
//! ```
//!
//! Each record is `x1 y1 x2 y2 [label]`, with label `1` for a validation
//! inlier and `0` otherwise. Labels are all-or-nothing across a file.
//! Coordinates are written in shortest round-trip form, so a write followed by
//! a parse reproduces every bit.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;
use thiserror::Error;

use crate::geometry::{Correspondence, ImageSize, Label, ModelKind};

pub const MAGIC: &str = "robustfit";
pub const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("line {line}: bad header: {reason}")]
    Header { line: usize, reason: String },
    #[error("line {line}, column {column}: {reason}")]
    Record {
        line: usize,
        column: usize,
        reason: String,
    },
    #[error("line {line}: labels must be present on every record or on none")]
    MixedLabels { line: usize },
    #[error("file is empty")]
    Empty,
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

/// A parsed correspondence file.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceFile {
    pub problem: ModelKind,
    pub image_size: ImageSize,
    /// Labels are `Unknown` when the file carries none.
    pub correspondences: Vec<Correspondence>,
    pub labeled: bool,
}

impl CorrespondenceFile {
    pub fn new(
        problem: ModelKind,
        image_size: ImageSize,
        correspondences: Vec<Correspondence>,
    ) -> Self {
        let labeled = correspondences.iter().any(|c| c.label != Label::Unknown);
        Self {
            problem,
            image_size,
            correspondences,
            labeled,
        }
    }

    /// Indices labeled as validation inliers.
    pub fn validation_set(&self) -> Vec<usize> {
        self.correspondences
            .iter()
            .enumerate()
            .filter(|(_, c)| c.label == Label::Inlier)
            .map(|(i, _)| i)
            .collect()
    }
}

fn parse_header(line: &str) -> Result<(ModelKind, ImageSize), FormatError> {
    let bad = |reason: &str| FormatError::Header {
        line: 1,
        reason: reason.to_string(),
    };
    let rest = line
        .strip_prefix('#')
        .ok_or_else(|| bad("expected `# robustfit v1 <problem> <width> <height>`"))?;
    let fields: Vec<&str> = rest.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(bad("expected `# robustfit v1 <problem> <width> <height>`"));
    }
    if fields[0] != MAGIC {
        return Err(bad("missing `robustfit` tag"));
    }
    if fields[1] != FORMAT_VERSION {
        return Err(bad(&format!("unsupported version `{}`", fields[1])));
    }
    let problem: ModelKind = fields[2]
        .parse()
        .map_err(|_| bad(&format!("unknown problem `{}`", fields[2])))?;
    let dim = |s: &str, what: &str| -> Result<u32, FormatError> {
        match s.parse::<u32>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(bad(&format!(
                "{what} must be a positive integer, got `{s}`"
            ))),
        }
    };
    let width = dim(fields[3], "width")?;
    let height = dim(fields[4], "height")?;
    Ok((problem, ImageSize::new(width, height)))
}

/// Splits on whitespace and keeps the 1-based column of each token.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

pub fn parse_correspondences(text: &str) -> Result<CorrespondenceFile, FormatError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(FormatError::Empty)?;
    let (problem, image_size) = parse_header(header.trim_end())?;

    let mut corrs = Vec::new();
    let mut labeled: Option<bool> = None;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let toks = tokens(raw);
        if toks.len() != 4 && toks.len() != 5 {
            return Err(FormatError::Record {
                line: line_no,
                column: toks.get(5).map_or(1, |t| t.0),
                reason: format!("expected 4 or 5 fields, found {}", toks.len()),
            });
        }
        let mut xy = [0.0; 4];
        for (k, (col, tok)) in toks.iter().take(4).enumerate() {
            let v: f64 = tok.parse().map_err(|_| FormatError::Record {
                line: line_no,
                column: *col,
                reason: format!("`{tok}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(FormatError::Record {
                    line: line_no,
                    column: *col,
                    reason: format!("`{tok}` is not finite"),
                });
            }
            xy[k] = v;
        }
        let has_label = toks.len() == 5;
        match labeled {
            None => labeled = Some(has_label),
            Some(l) if l != has_label => return Err(FormatError::MixedLabels { line: line_no }),
            _ => {}
        }
        let label = if has_label {
            let (col, tok) = toks[4];
            match tok {
                "1" => Label::Inlier,
                "0" => Label::Outlier,
                _ => {
                    return Err(FormatError::Record {
                        line: line_no,
                        column: col,
                        reason: format!("label must be 0 or 1, got `{tok}`"),
                    })
                }
            }
        } else {
            Label::Unknown
        };
        corrs.push(
            Correspondence::new(Vector2::new(xy[0], xy[1]), Vector2::new(xy[2], xy[3]))
                .with_label(label),
        );
    }
    Ok(CorrespondenceFile {
        problem,
        image_size,
        correspondences: corrs,
        labeled: labeled.unwrap_or(false),
    })
}

pub fn read_correspondences(path: &Path) -> Result<CorrespondenceFile, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_correspondences(&text)
}

/// Serializes with labels iff any correspondence carries one; unknown labels
/// in a labeled file are written as `0`.
pub fn format_correspondences(file: &CorrespondenceFile) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {MAGIC} {FORMAT_VERSION} {} {} {}",
        file.problem, file.image_size.width, file.image_size.height
    );
    let labeled = file.labeled
        || file
            .correspondences
            .iter()
            .any(|c| c.label != Label::Unknown);
    for c in &file.correspondences {
        let _ = write!(out, "{:?} {:?} {:?} {:?}", c.x.x, c.x.y, c.x2.x, c.x2.y);
        if labeled {
            let _ = write!(out, " {}", u8::from(c.label == Label::Inlier));
        }
        out.push('\n');
    }
    out
}

pub fn write_correspondences(path: &Path, file: &CorrespondenceFile) -> Result<(), FormatError> {
    std::fs::write(path, format_correspondences(file)).map_err(|e| FormatError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
