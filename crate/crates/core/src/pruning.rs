//! Density-peak token selection within segments.
//!
//! The anchor frame of a segment is scored with kNN density peaks: local
//! density from the `k` nearest in-frame neighbours, separation from the
//! nearest token of higher density. Every later frame is scored with the
//! temporal-guided variant, where density becomes novelty with respect to the
//! tokens already kept in the segment (the guide set) and separation stays
//! intra-frame. Tokens with the largest `density × separation` are kept and
//! appended to the guide set.
//!
//! Density ties are broken by index: among equal densities the lower index
//! ranks higher, so exactly one token per frame takes the max-distance branch.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::segmentation::Segment;
use crate::tokens::VideoTokens;

/// Distances below this fraction of `‖a‖² + ‖b‖²` are indistinguishable from
/// Gram-matrix rounding and are treated as exact zeros.
const SNAP_RELATIVE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TokenScores {
    pub rho: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Token at the top of the density ordering.
    pub peak: usize,
}

/// Tokens kept so far in the current segment, with their `(frame, index)` origin.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GuideSet {
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
    origins: Vec<(usize, usize)>,
}

impl GuideSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    pub fn tokens(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.len(), self.dim), &self.data).expect("rectangular guide")
    }

    pub fn push(&mut self, frame: usize, index: usize, token: &[f64]) {
        assert_eq!(token.len(), self.dim, "guide token dimension mismatch");
        self.data.extend_from_slice(token);
        self.norms.push(token.iter().map(|v| v * v).sum());
        self.origins.push((frame, index));
    }

    /// Appends the kept tokens of `frame_tokens` (frame number `frame`).
    pub fn extend_from_frame(&mut self, frame: usize, frame_tokens: ArrayView2<'_, f64>, kept: &[usize]) {
        for &i in kept {
            let row = frame_tokens.row(i);
            let owned;
            let slice = match row.as_slice() {
                Some(s) => s,
                None => {
                    owned = row.to_vec();
                    &owned
                }
            };
            self.push(frame, i, slice);
        }
    }
}

fn snap(v: f64, scale: f64) -> f64 {
    if v <= SNAP_RELATIVE * scale {
        0.0
    } else {
        v
    }
}

/// All pairwise squared distances within one frame.
fn pairwise_sq_distances(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let gram = x.dot(&x.t());
    let n = x.nrows();
    let norms: Vec<f64> = (0..n).map(|i| gram[[i, i]]).collect();
    let mut out = gram;
    for i in 0..n {
        for j in 0..n {
            let s = norms[i] + norms[j];
            out[[i, j]] = if i == j { 0.0 } else { snap(s - 2.0 * out[[i, j]], s) };
        }
    }
    out
}

/// Squared distances from every frame token (rows) to every guide token (columns).
fn guide_sq_distances(x: ArrayView2<'_, f64>, guide: &GuideSet) -> Array2<f64> {
    let mut out = x.dot(&guide.tokens().t());
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let xi = x.row(i);
        let ni = xi.dot(&xi);
        for (v, ng) in row.iter_mut().zip(&guide.norms) {
            let s = ni + ng;
            *v = snap(s - 2.0 * *v, s);
        }
    }
    out
}

/// Mean of the `k` smallest values of `values` (which it partially reorders).
fn mean_of_smallest(values: &mut [f64], k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= values.len());
    if k < values.len() {
        values.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    }
    let head = &mut values[..k];
    head.sort_unstable_by(|a, b| a.total_cmp(b));
    head.iter().sum::<f64>() / k as f64
}

/// Indices ordered by density, highest first, lower index first on ties.
fn density_order(rho: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]).then(a.cmp(&b)));
    order
}

/// Separation from the nearest higher-ranked token; the peak gets its farthest distance.
fn separation(dist: &Array2<f64>, order: &[usize]) -> Vec<f64> {
    let n = order.len();
    let mut delta = vec![0.0; n];
    let peak = order[0];
    delta[peak] = dist.row(peak).iter().copied().fold(0.0, f64::max);
    for (rank, &i) in order.iter().enumerate().skip(1) {
        let row = dist.row(i);
        delta[i] = order[..rank]
            .iter()
            .map(|&j| row[j])
            .fold(f64::INFINITY, f64::min);
    }
    delta
}

fn assemble(rho: Vec<f64>, dist: &Array2<f64>) -> TokenScores {
    let order = density_order(&rho);
    let delta = separation(dist, &order);
    let gamma = rho.iter().zip(&delta).map(|(r, d)| r * d).collect();
    TokenScores {
        rho,
        delta,
        gamma,
        peak: order[0],
    }
}

/// kNN density-peak scores for an anchor frame. `k` is clipped to `M - 1`.
pub fn dpc_knn_scores(frame: ArrayView2<'_, f64>, k: usize) -> Result<TokenScores> {
    let m = frame.nrows();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "density scoring needs at least 2 tokens, got {m}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("knn must be at least 1".into()));
    }
    let k_eff = k.min(m - 1);
    let dist = pairwise_sq_distances(frame);
    let mut buf = Vec::with_capacity(m - 1);
    let rho = (0..m)
        .map(|i| {
            buf.clear();
            buf.extend(dist.row(i).iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v));
            (-mean_of_smallest(&mut buf, k_eff)).exp()
        })
        .collect();
    Ok(assemble(rho, &dist))
}

/// Temporal-guided scores: density is novelty against the guide set, `k` clipped to its size.
pub fn tg_dpc_scores(frame: ArrayView2<'_, f64>, guide: &GuideSet, k: usize) -> Result<TokenScores> {
    if guide.is_empty() {
        return Err(Error::InvalidInput("guide set is empty".into()));
    }
    if guide.dim() != frame.ncols() {
        return Err(Error::InvalidInput(format!(
            "guide dimension {} does not match token dimension {}",
            guide.dim(),
            frame.ncols()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("knn must be at least 1".into()));
    }
    let k_eff = k.min(guide.len());
    let cross = guide_sq_distances(frame, guide);
    let mut buf = Vec::with_capacity(guide.len());
    let rho = cross
        .outer_iter()
        .map(|row| {
            buf.clear();
            buf.extend(row.iter().copied());
            1.0 - (-mean_of_smallest(&mut buf, k_eff)).exp()
        })
        .collect();
    let dist = pairwise_sq_distances(frame);
    Ok(assemble(rho, &dist))
}

/// Indices of the `count` largest scores (lower index on ties), ascending.
pub fn top_by_score(gamma: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..gamma.len()).collect();
    idx.sort_by(|&a, &b| match gamma[b].partial_cmp(&gamma[a]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// Keeps `count` tokens of one frame, scored against `guide` when given.
pub fn prune_frame(
    frame: ArrayView2<'_, f64>,
    count: usize,
    guide: Option<&GuideSet>,
    k: usize,
) -> Result<Vec<usize>> {
    let m = frame.nrows();
    if count == 0 || count > m {
        return Err(Error::InvalidInput(format!(
            "frame budget {count} outside [1, {m}]"
        )));
    }
    if count == m {
        return Ok((0..m).collect());
    }
    let scores = match guide {
        None => dpc_knn_scores(frame, k)?,
        Some(g) => tg_dpc_scores(frame, g, k)?,
    };
    Ok(top_by_score(&scores.gamma, count))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSelection {
    /// Kept indices per frame of the segment, ascending.
    pub kept: Vec<Vec<usize>>,
    pub guide: GuideSet,
}

/// Prunes a segment: anchor frame by density peaks, later frames against the growing guide set.
///
/// `counts[j]` is the budget of frame `segment.start + j`.
pub fn prune_segment(
    tokens: &VideoTokens,
    segment: Segment,
    counts: &[usize],
    k: usize,
) -> Result<SegmentSelection> {
    if segment.is_empty() || segment.end > tokens.frames() {
        return Err(Error::InvalidInput(format!(
            "segment {}..{} invalid for {} frames",
            segment.start,
            segment.end,
            tokens.frames()
        )));
    }
    if counts.len() != segment.len() {
        return Err(Error::InvalidInput(format!(
            "{} frame budgets for a segment of {} frames",
            counts.len(),
            segment.len()
        )));
    }
    let mut guide = GuideSet::new(tokens.dim());
    let mut kept = Vec::with_capacity(segment.len());
    for (offset, f) in segment.frames().enumerate() {
        let frame = tokens.frame(f);
        let guide_ref = (offset > 0).then_some(&guide);
        let sel = prune_frame(frame, counts[offset], guide_ref, k)?;
        guide.extend_from_frame(f, frame, &sel);
        kept.push(sel);
    }
    Ok(SegmentSelection { kept, guide })
}
