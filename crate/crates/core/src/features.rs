//! Per-frame feature matrices and their text dump format.
//!
//! The dump is one line per frame with space-separated values, preceded by a
//! `#` header carrying `T`, `D` and `frame_shift_ms` (and, when known, the
//! front-end fingerprint the features were produced with):
//!
//! ```text
//! # T=3 D=13 frame_shift_ms=10 fingerprint=mfcc-0123abcd
//! 1.0000000000000000e0 ...
//! ```

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

/// Feature dimensions accepted by [`FeatureMatrix`]: plain cepstra or
/// cepstra with deltas and delta-deltas.
pub const ALLOWED_DIMS: [usize; 2] = [13, 39];

/// A `T x D` matrix of finite per-frame features, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    dim: usize,
    frame_shift_ms: f64,
    fingerprint: String,
}

impl FeatureMatrix {
    /// Builds a matrix from row-major data.
    pub fn from_flat(
        data: Vec<f64>,
        dim: usize,
        frame_shift_ms: f64,
        fingerprint: impl Into<String>,
    ) -> Result<Self> {
        if !ALLOWED_DIMS.contains(&dim) {
            return Err(Error::InvalidInput(format!(
                "feature dimension must be 13 or 39, got {dim}"
            )));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not form a non-empty matrix of width {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature value in frame {}",
                i / dim
            )));
        }
        if !(frame_shift_ms > 0.0 && frame_shift_ms.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "frame shift must be positive, got {frame_shift_ms}"
            )));
        }
        Ok(Self {
            data,
            dim,
            frame_shift_ms,
            fingerprint: fingerprint.into(),
        })
    }

    pub fn from_rows(
        rows: &[Vec<f64>],
        frame_shift_ms: f64,
        fingerprint: impl Into<String>,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::from_flat(rows.concat(), dim, frame_shift_ms, fingerprint)
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_shift_ms(&self) -> f64 {
        self.frame_shift_ms
    }

    /// Identifier of the front end (or generator) that produced the features.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn frames(&self) -> Frames<'_> {
        Frames {
            data: &self.data,
            dim: self.dim,
        }
    }

    /// View of frames `range.start..range.end`.
    pub fn slice(&self, range: Range<usize>) -> Frames<'_> {
        assert!(range.start <= range.end && range.end <= self.num_frames());
        Frames {
            data: &self.data[range.start * self.dim..range.end * self.dim],
            dim: self.dim,
        }
    }

    /// Serializes to the text dump format with full-precision values.
    pub fn to_dump(&self) -> String {
        let mut out = format!(
            "# T={} D={} frame_shift_ms={}",
            self.num_frames(),
            self.dim,
            self.frame_shift_ms
        );
        if !self.fingerprint.is_empty() {
            let _ = write!(out, " fingerprint={}", self.fingerprint);
        }
        out.push('\n');
        for row in self.data.chunks_exact(self.dim) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_dump(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(source_name, 1, "empty feature file"))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::parse(source_name, 1, "missing `#` header"))?;
        let (mut frames, mut dim, mut shift, mut fingerprint) = (None, None, None, String::new());
        for field in header.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| {
                Error::parse(source_name, 1, format!("bad header field `{field}`"))
            })?;
            let bad = || Error::parse(source_name, 1, format!("bad value in `{field}`"));
            match key {
                "T" => frames = Some(value.parse::<usize>().map_err(|_| bad())?),
                "D" => dim = Some(value.parse::<usize>().map_err(|_| bad())?),
                "frame_shift_ms" => shift = Some(value.parse::<f64>().map_err(|_| bad())?),
                "fingerprint" => fingerprint = value.to_string(),
                _ => {}
            }
        }
        let (Some(frames), Some(dim), Some(shift)) = (frames, dim, shift) else {
            return Err(Error::parse(
                source_name,
                1,
                "header must carry T, D and frame_shift_ms",
            ));
        };

        let mut data = Vec::with_capacity(frames * dim);
        let mut rows = 0;
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::parse(source_name, idx + 1, format!("bad number `{tok}`"))
                })?;
                data.push(v);
            }
            if data.len() - before != dim {
                return Err(Error::parse(
                    source_name,
                    idx + 1,
                    format!("expected {dim} values, found {}", data.len() - before),
                ));
            }
            rows += 1;
        }
        if rows != frames {
            return Err(Error::parse(
                source_name,
                1,
                format!("header declares {frames} frames but file has {rows}"),
            ));
        }
        Self::from_flat(data, dim, shift, fingerprint)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_dump()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_dump(&text, &path.display().to_string())
    }
}

/// A borrowed run of consecutive frames.
#[derive(Debug, Clone, Copy)]
pub struct Frames<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Frames<'a> {
    /// Wraps row-major data; `data.len()` must be a multiple of `dim`.
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim));
        Self { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'a, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &'a [f64] {
        self.data
    }
}
