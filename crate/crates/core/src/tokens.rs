//! Token tensor and the elementary vector operations shared by every stage.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Visual tokens of a sampled video, `frames × tokens_per_frame × dim`,
/// stored frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTokens {
    data: Array3<f64>,
}

impl VideoTokens {
    pub fn new(frames: usize, tokens_per_frame: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || tokens_per_frame == 0 || dim == 0 {
            return Err(Error::InvalidTensor(format!(
                "all extents must be >= 1, got {frames}x{tokens_per_frame}x{dim}"
            )));
        }
        let expected = frames
            .checked_mul(tokens_per_frame)
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| Error::InvalidTensor("tensor extents overflow".into()))?;
        if data.len() != expected {
            return Err(Error::InvalidTensor(format!(
                "expected {expected} values for {frames}x{tokens_per_frame}x{dim}, got {}",
                data.len()
            )));
        }
        let array = Array3::from_shape_vec((frames, tokens_per_frame, dim), data)
            .map_err(|e| Error::InvalidTensor(e.to_string()))?;
        Self::from_array(array)
    }

    pub fn from_f32(frames: usize, tokens_per_frame: usize, dim: usize, data: &[f32]) -> Result<Self> {
        Self::new(
            frames,
            tokens_per_frame,
            dim,
            data.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn from_array(data: Array3<f64>) -> Result<Self> {
        let (f, m, d) = data.dim();
        if f == 0 || m == 0 || d == 0 {
            return Err(Error::InvalidTensor(format!(
                "all extents must be >= 1, got {f}x{m}x{d}"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!(
                "non-finite value at flat offset {pos}"
            )));
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(Self { data })
    }

    /// Builds a tensor from nested `frame -> token -> dim` vectors. Ragged
    /// inputs (differing token counts per frame or dims per token) are rejected.
    pub fn from_nested(frames: &[Vec<Vec<f64>>]) -> Result<Self> {
        let f = frames.len();
        let m = frames.first().map_or(0, Vec::len);
        let d = frames
            .first()
            .and_then(|fr| fr.first())
            .map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(f * m * d);
        for (fi, frame) in frames.iter().enumerate() {
            if frame.len() != m {
                return Err(Error::InvalidTensor(format!(
                    "frame {fi} has {} tokens, expected {m}",
                    frame.len()
                )));
            }
            for (ti, token) in frame.iter().enumerate() {
                if token.len() != d {
                    return Err(Error::InvalidTensor(format!(
                        "token {ti} of frame {fi} has dim {}, expected {d}",
                        token.len()
                    )));
                }
                flat.extend_from_slice(token);
            }
        }
        Self::new(f, m, d, flat)
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.data.dim().1
    }

    pub fn dim(&self) -> usize {
        self.data.dim().2
    }

    /// Total token count `N = F·M`.
    pub fn total_tokens(&self) -> usize {
        self.frames() * self.tokens_per_frame()
    }

    pub fn as_array(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    /// Token matrix of one frame (`M × d`). Panics if `frame` is out of range.
    pub fn frame(&self, frame: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), frame)
    }

    pub fn token(&self, frame: usize, index: usize) -> ArrayView1<'_, f64> {
        self.data.slice(ndarray::s![frame, index, ..])
    }

    /// All tokens as an `N × d` matrix, row `f·M + i` being token `i` of frame `f`.
    pub fn flat(&self) -> ArrayView2<'_, f64> {
        let (f, m, d) = self.data.dim();
        ArrayView2::from_shape((f * m, d), self.as_slice()).expect("standard layout")
    }

    /// Mean of the frame's token vectors.
    pub fn frame_embedding(&self, frame: usize) -> Result<Array1<f64>> {
        if frame >= self.frames() {
            return Err(Error::OutOfRange {
                what: "frame",
                index: frame,
                limit: self.frames(),
            });
        }
        Ok(mean_rows(self.frame(frame)))
    }

    /// Frame embeddings for every frame, one row per frame.
    pub fn frame_embeddings(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.frames(), self.dim()));
        for (f, mut row) in out.outer_iter_mut().enumerate() {
            row.assign(&mean_rows(self.frame(f)));
        }
        out
    }

    /// Copy with every token scaled to unit L2 norm; zero tokens stay zero.
    pub fn normalized(&self) -> VideoTokens {
        let mut data = self.data.clone();
        for mut frame in data.outer_iter_mut() {
            for mut token in frame.outer_iter_mut() {
                let norm = token.dot(&token).sqrt();
                if norm > 0.0 {
                    token.mapv_inplace(|v| v / norm);
                }
            }
        }
        VideoTokens { data }
    }
}

/// Free-function form of [`VideoTokens::normalized`].
pub fn normalize(tokens: &VideoTokens) -> VideoTokens {
    tokens.normalized()
}

pub(crate) fn mean_rows(rows: ArrayView2<'_, f64>) -> Array1<f64> {
    let n = rows.nrows() as f64;
    let mut acc = Array1::zeros(rows.ncols());
    for row in rows.outer_iter() {
        acc += &row;
    }
    acc / n
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_sim(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a);
    let nb = b.dot(&b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

pub fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}
