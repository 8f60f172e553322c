//! Tensor files and JSON result documents.
//!
//! A tensor file is one JSON header line followed by the raw payload:
//!
//! ```text
//! {"frames":F,"tokens_per_frame":M,"dim":d,"dtype":"f32","layout":"frame_major"}\n
//! F·M·d little-endian f32, frame-major, token-minor, dim-innermost
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PruneConfig;
use crate::error::{Error, Result};
use crate::evaluation::Metrics;
use crate::pipeline::{Plan, SegmentRecord, SelectionResult};
use crate::segmentation::Segment;
use crate::synthetic::{SyntheticSpec, SyntheticVideo};
use crate::tokens::VideoTokens;

pub const DTYPE: &str = "f32";
pub const LAYOUT: &str = "frame_major";
const MAX_HEADER_BYTES: u64 = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorHeader {
    pub frames: usize,
    pub tokens_per_frame: usize,
    pub dim: usize,
    pub dtype: String,
    pub layout: String,
}

impl TensorHeader {
    pub fn new(frames: usize, tokens_per_frame: usize, dim: usize) -> Self {
        Self {
            frames,
            tokens_per_frame,
            dim,
            dtype: DTYPE.to_string(),
            layout: LAYOUT.to_string(),
        }
    }

    pub fn elements(&self) -> Result<usize> {
        self.frames
            .checked_mul(self.tokens_per_frame)
            .and_then(|n| n.checked_mul(self.dim))
            .ok_or_else(|| Error::Format("tensor shape overflows".into()))
    }

    fn check(&self) -> Result<()> {
        if self.dtype != DTYPE {
            return Err(Error::Format(format!("unsupported dtype {:?}", self.dtype)));
        }
        if self.layout != LAYOUT {
            return Err(Error::Format(format!("unsupported layout {:?}", self.layout)));
        }
        self.elements().map(|_| ())
    }
}

pub fn write_tensor<W: Write>(mut w: W, tokens: &VideoTokens) -> Result<()> {
    let header = TensorHeader::new(tokens.frames(), tokens.tokens_per_frame(), tokens.dim());
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(tokens.as_slice().len() * 4);
    for &v in tokens.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor<R: Read>(r: R) -> Result<VideoTokens> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    (&mut r).take(MAX_HEADER_BYTES).read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing newline-terminated JSON header".into()));
    }
    line.pop();
    let header: TensorHeader = serde_json::from_slice(&line)
        .map_err(|e| Error::Format(format!("bad tensor header: {e}")))?;
    header.check()?;
    let n = header.elements()?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != n * 4 {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {}",
            payload.len(),
            n * 4
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    VideoTokens::from_f32(header.frames, header.tokens_per_frame, header.dim, &data)
}

pub fn save_tensor(path: impl AsRef<Path>, tokens: &VideoTokens) -> Result<()> {
    let f = fs::File::create(path)?;
    write_tensor(std::io::BufWriter::new(f), tokens)
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<VideoTokens> {
    read_tensor(fs::File::open(path)?)
}

/// Output of `prune` and `eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub config: PruneConfig,
    pub frames: usize,
    pub tokens_per_frame: usize,
    pub dim: usize,
    pub segments: Vec<SegmentRecord>,
    pub kept: Vec<Vec<usize>>,
    pub total_kept: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}

impl ResultDocument {
    pub fn new(config: &PruneConfig, tokens: &VideoTokens, result: SelectionResult) -> Self {
        Self {
            config: config.clone(),
            frames: tokens.frames(),
            tokens_per_frame: tokens.tokens_per_frame(),
            dim: tokens.dim(),
            segments: result.segments,
            kept: result.kept,
            total_kept: result.total_kept,
            metrics: None,
        }
    }

    pub fn selection(&self) -> SelectionResult {
        SelectionResult {
            kept: self.kept.clone(),
            segments: self.segments.clone(),
            total_kept: self.total_kept,
        }
    }

    /// Structural checks against the tensor the document claims to describe.
    pub fn check_against(&self, tokens: &VideoTokens) -> Result<()> {
        let shape = (tokens.frames(), tokens.tokens_per_frame(), tokens.dim());
        if (self.frames, self.tokens_per_frame, self.dim) != shape {
            return Err(Error::InvalidInput(format!(
                "result shape {:?} does not match tensor shape {shape:?}",
                (self.frames, self.tokens_per_frame, self.dim)
            )));
        }
        if self.kept.len() != self.frames {
            return Err(Error::InvalidInput("kept must list every frame".into()));
        }
        for (f, idx) in self.kept.iter().enumerate() {
            if idx.windows(2).any(|w| w[0] >= w[1]) || idx.iter().any(|&i| i >= self.tokens_per_frame) {
                return Err(Error::InvalidInput(format!("kept[{f}] is not an ascending index list")));
            }
        }
        if self.kept.iter().map(Vec::len).sum::<usize>() != self.total_kept {
            return Err(Error::InvalidInput("total_kept disagrees with kept".into()));
        }
        Ok(())
    }
}

/// Output of `segment`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentDocument {
    pub config: PruneConfig,
    pub frames: usize,
    pub similarities: Vec<f64>,
    pub boundaries: Vec<usize>,
    pub segments: Vec<Segment>,
}

/// Output of `budget`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetDocument {
    pub config: PruneConfig,
    pub frames: usize,
    pub tokens_per_frame: usize,
    pub target: usize,
    pub order: Vec<usize>,
    pub segments: Vec<SegmentRecord>,
}

impl BudgetDocument {
    pub fn new(config: &PruneConfig, tokens: &VideoTokens, plan: &Plan) -> Self {
        Self {
            config: config.clone(),
            frames: tokens.frames(),
            tokens_per_frame: tokens.tokens_per_frame(),
            target: plan.budget.allocation.target,
            order: plan.budget.order.order.clone(),
            segments: plan.records(),
        }
    }
}

/// Ground truth written next to a synthesized tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub spec: SyntheticSpec,
    pub boundaries: Vec<usize>,
    pub segments: Vec<Segment>,
    pub novel: Vec<(usize, usize)>,
}

impl SyntheticTruth {
    pub fn new(spec: &SyntheticSpec, video: &SyntheticVideo) -> Self {
        Self {
            spec: spec.clone(),
            boundaries: video.boundaries.clone(),
            segments: video.segments.clone(),
            novel: video.novel.clone(),
        }
    }
}

/// Pretty JSON with a trailing newline; field order follows the struct.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
