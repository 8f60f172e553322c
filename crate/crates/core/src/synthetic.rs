//! Synthetic videos with planted segment structure and planted novel tokens.
//!
//! Every segment gets its own direction, orthogonalized against earlier
//! segments while the dimension allows. Cluster centers (and an optional
//! background center) are spread around that direction, so the tokens of one
//! segment sit in a common cone and consecutive segments are near-orthogonal.
//! Each frame repeats the segment's template tokens plus fresh noise. Dynamic
//! segments additionally replace a few tokens of every non-anchor frame with
//! fresh random directions, and those positions are recorded.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::Segment;
use crate::tokens::VideoTokens;

/// Noise scale below which planted boundaries are recovered exactly at `tau = 0.95`,
/// for `tokens_per_frame >= 32`, `dim >= 32` and at most 3 novel tokens per frame.
/// Smaller frames average out less noise and need a lower scale.
pub const RECOVERY_NOISE_LIMIT: f64 = 0.5;

const CLUSTER_SPREAD: f64 = 0.8;
const TOKEN_JITTER: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    Static,
    Dynamic,
}

fn default_novel() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub length: usize,
    pub n_clusters: usize,
    pub motion: Motion,
    /// Novel tokens planted in every non-anchor frame of a dynamic segment.
    #[serde(default = "default_novel")]
    pub novel_per_frame: usize,
    /// Reuse the template of an earlier, non-adjacent segment (near-duplicate content).
    #[serde(default)]
    pub repeat_of: Option<usize>,
}

impl SegmentSpec {
    pub fn new(length: usize, n_clusters: usize, motion: Motion) -> Self {
        Self {
            length,
            n_clusters,
            motion,
            novel_per_frame: default_novel(),
            repeat_of: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub tokens_per_frame: usize,
    pub dim: usize,
    pub segments: Vec<SegmentSpec>,
    #[serde(default)]
    pub background_fraction: f64,
    #[serde(default)]
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub tokens: VideoTokens,
    pub segments: Vec<Segment>,
    /// Frames after which a planted segment ends.
    pub boundaries: Vec<usize>,
    /// Planted novel tokens as `(frame, index)`, in generation order.
    pub novel: Vec<(usize, usize)>,
}

impl SyntheticSpec {
    pub fn frames(&self) -> usize {
        self.segments.iter().map(|s| s.length).sum()
    }

    fn background_count(&self) -> usize {
        (self.background_fraction * self.tokens_per_frame as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.tokens_per_frame == 0 || self.dim == 0 {
            return bad("tokens_per_frame and dim must be >= 1".into());
        }
        if self.segments.is_empty() {
            return bad("at least one segment is required".into());
        }
        if !(0.0..=1.0).contains(&self.background_fraction) {
            return bad(format!("background_fraction {} outside [0, 1]", self.background_fraction));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale {} must be finite and >= 0", self.noise_scale));
        }
        let foreground = self.tokens_per_frame - self.background_count();
        for (i, s) in self.segments.iter().enumerate() {
            if s.length < 2 {
                return bad(format!("segment {i} has length {} (< 2)", s.length));
            }
            if foreground > 0 && (s.n_clusters == 0 || s.n_clusters > foreground) {
                return bad(format!(
                    "segment {i}: n_clusters {} must lie in [1, {foreground}]",
                    s.n_clusters
                ));
            }
            if s.motion == Motion::Dynamic && s.novel_per_frame > foreground {
                return bad(format!(
                    "segment {i}: {} novel tokens exceed {foreground} foreground tokens",
                    s.novel_per_frame
                ));
            }
            if let Some(r) = s.repeat_of {
                if r + 1 >= i {
                    return bad(format!(
                        "segment {i} may only repeat an earlier, non-adjacent segment (got {r})"
                    ));
                }
                if self.segments[r].n_clusters != s.n_clusters {
                    return bad(format!("segment {i} repeats {r} with a different cluster count"));
                }
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Point `spread`-far (in expectation) from `around`, then normalized.
fn around(rng: &mut ChaCha8Rng, center: &[f64], spread: f64) -> Vec<f64> {
    let d = center.len();
    let scale = spread / (d as f64).sqrt();
    unit(center
        .iter()
        .map(|c| c + scale * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Template tokens of one segment: cluster members first, background last.
fn template(
    rng: &mut ChaCha8Rng,
    direction: &[f64],
    spec: &SyntheticSpec,
    seg: &SegmentSpec,
) -> Vec<Vec<f64>> {
    let m = spec.tokens_per_frame;
    let bg = spec.background_count();
    let centers: Vec<Vec<f64>> = (0..seg.n_clusters.max(1))
        .map(|_| around(rng, direction, CLUSTER_SPREAD))
        .collect();
    let background = around(rng, direction, CLUSTER_SPREAD);
    (0..m)
        .map(|i| {
            if i >= m - bg {
                around(rng, &background, TOKEN_JITTER)
            } else {
                around(rng, &centers[i % centers.len()], TOKEN_JITTER)
            }
        })
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticVideo> {
    spec.validate()?;
    let (m, d) = (spec.tokens_per_frame, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut directions: Vec<Vec<f64>> = Vec::new();
    let mut templates: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut data = Vec::with_capacity(spec.frames() * m * d);
    let mut segments = Vec::new();
    let mut novel = Vec::new();
    let noise = spec.noise_scale / (d as f64).sqrt();
    let foreground = m - spec.background_count();
    let mut frame = 0;

    for seg in &spec.segments {
        let tmpl = match seg.repeat_of {
            Some(r) => templates[r].clone(),
            None => {
                let mut u = gaussian(&mut rng, d);
                if directions.len() < d {
                    for prev in &directions {
                        let dot: f64 = u.iter().zip(prev).map(|(a, b)| a * b).sum();
                        u.iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
                    }
                }
                let u = unit(u);
                let t = template(&mut rng, &u, spec, seg);
                directions.push(u);
                t
            }
        };
        let start = frame;
        for offset in 0..seg.length {
            let mut tokens: Vec<Vec<f64>> = tmpl
                .iter()
                .map(|t| {
                    t.iter()
                        .map(|v| v + noise * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            if seg.motion == Motion::Dynamic && offset > 0 && seg.novel_per_frame > 0 {
                let mut picks = sample(&mut rng, foreground, seg.novel_per_frame).into_vec();
                picks.sort_unstable();
                for p in picks {
                    tokens[p] = unit(gaussian(&mut rng, d));
                    novel.push((frame, p));
                }
            }
            for t in tokens {
                data.extend(t.into_iter().map(|v| f64::from(v as f32)));
            }
            frame += 1;
        }
        segments.push(Segment::new(start, frame));
        templates.push(tmpl);
    }

    let boundaries = segments[..segments.len() - 1]
        .iter()
        .map(|s| s.end - 1)
        .collect();
    Ok(SyntheticVideo {
        tokens: VideoTokens::new(frame, m, d, data)?,
        segments,
        boundaries,
        novel,
    })
}
