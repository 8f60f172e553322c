//! Similarity-based frame segmentation.
//!
//! Frames are cut wherever the cosine similarity between consecutive frame
//! embeddings drops below `tau`. Single-frame fragments are then folded into
//! whichever neighbour segment they resemble more, scanning left to right and
//! restarting after each merge, until no singleton remains.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::PruneConfig;
use crate::tokens::{cosine_sim, VideoTokens};

/// Half-open frame range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start < end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    /// Mean token embedding of each segment, one row per segment.
    pub embeddings: Array2<f64>,
}

impl Segmentation {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.segments.iter().map(Segment::len).collect()
    }

    /// Frames after which a segment ends (every segment but the last).
    pub fn boundaries(&self) -> Vec<usize> {
        self.segments
            .iter()
            .take(self.segments.len().saturating_sub(1))
            .map(|s| s.end - 1)
            .collect()
    }
}

/// `sim(F_t, F_{t+1})` for every adjacent pair.
pub fn adjacent_similarities(tokens: &VideoTokens) -> Vec<f64> {
    let emb = tokens.frame_embeddings();
    adjacent_from_embeddings(emb.view())
}

fn adjacent_from_embeddings(emb: ArrayView2<'_, f64>) -> Vec<f64> {
    (0..emb.nrows().saturating_sub(1))
        .map(|t| cosine_sim(emb.row(t), emb.row(t + 1)))
        .collect()
}

/// Frames `t` with `sim(F_t, F_{t+1}) < tau`; each marks a segment ending after `t`.
pub fn find_boundaries(tokens: &VideoTokens, tau: f64) -> Vec<usize> {
    boundaries_below(&adjacent_similarities(tokens), tau)
}

fn boundaries_below(sims: &[f64], tau: f64) -> Vec<usize> {
    sims.iter()
        .enumerate()
        .filter(|(_, &s)| s < tau)
        .map(|(t, _)| t)
        .collect()
}

/// Turns sorted boundaries into the segments they delimit.
pub fn segments_from_boundaries(frames: usize, boundaries: &[usize]) -> Vec<Segment> {
    let mut out = Vec::with_capacity(boundaries.len() + 1);
    let mut start = 0;
    for &b in boundaries {
        debug_assert!(b + 1 < frames && b + 1 > start);
        out.push(Segment::new(start, b + 1));
        start = b + 1;
    }
    out.push(Segment::new(start, frames));
    out
}

fn mean_of_frames(frame_emb: ArrayView2<'_, f64>, seg: Segment) -> Array1<f64> {
    let mut acc = Array1::zeros(frame_emb.ncols());
    for f in seg.frames() {
        acc += &frame_emb.row(f);
    }
    acc / seg.len() as f64
}

/// Folds single-frame segments into their more similar neighbour. Ties go left.
pub fn merge_singletons(segments: Vec<Segment>, tokens: &VideoTokens) -> Segmentation {
    let frame_emb = tokens.frame_embeddings();
    let segments = merge_with_embeddings(segments, frame_emb.view());
    finish(segments, frame_emb.view())
}

fn merge_with_embeddings(mut segs: Vec<Segment>, frame_emb: ArrayView2<'_, f64>) -> Vec<Segment> {
    while segs.len() > 1 {
        let Some(k) = segs.iter().position(|s| s.len() == 1) else {
            break;
        };
        let single = frame_emb.row(segs[k].start);
        let target = match (k > 0, k + 1 < segs.len()) {
            (true, false) => k - 1,
            (false, true) => k + 1,
            (true, true) => {
                let left = cosine_sim(single, mean_of_frames(frame_emb, segs[k - 1]).view());
                let right = cosine_sim(single, mean_of_frames(frame_emb, segs[k + 1]).view());
                if right > left {
                    k + 1
                } else {
                    k - 1
                }
            }
            (false, false) => unreachable!("more than one segment"),
        };
        let merged = Segment::new(
            segs[k].start.min(segs[target].start),
            segs[k].end.max(segs[target].end),
        );
        segs[target] = merged;
        segs.remove(k);
    }
    segs
}

fn finish(segments: Vec<Segment>, frame_emb: ArrayView2<'_, f64>) -> Segmentation {
    let mut embeddings = Array2::zeros((segments.len(), frame_emb.ncols()));
    for (row, seg) in embeddings.outer_iter_mut().zip(&segments) {
        let mut row = row;
        row.assign(&mean_of_frames(frame_emb, *seg));
    }
    Segmentation {
        segments,
        embeddings,
    }
}

/// Stage-wise segmentation of tokens that are already conditioned.
pub fn segment_frames(tokens: &VideoTokens, tau: f64) -> Segmentation {
    let frame_emb = tokens.frame_embeddings();
    let sims = adjacent_from_embeddings(frame_emb.view());
    let initial = segments_from_boundaries(tokens.frames(), &boundaries_below(&sims, tau));
    let merged = merge_with_embeddings(initial, frame_emb.view());
    finish(merged, frame_emb.view())
}

/// Boundary detection followed by singleton merging, normalizing first when configured.
pub fn segment_video(tokens: &VideoTokens, config: &PruneConfig) -> Segmentation {
    if config.normalize_tokens {
        segment_frames(&tokens.normalized(), config.tau)
    } else {
        segment_frames(tokens, config.tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Video whose frames are each a single token repeated `m` times.
    fn video_from_frame_vectors(frames: &[Vec<f64>], m: usize) -> VideoTokens {
        let nested: Vec<Vec<Vec<f64>>> = frames.iter().map(|v| vec![v.clone(); m]).collect();
        VideoTokens::from_nested(&nested).unwrap()
    }

    fn random_walk(frames: usize, d: usize, step: f64, seed: u64) -> VideoTokens {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cur: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut out = Vec::new();
        for _ in 0..frames {
            let frame: Vec<Vec<f64>> = (0..3)
                .map(|_| cur.iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect())
                .collect();
            out.push(frame);
            for v in cur.iter_mut() {
                *v += rng.gen_range(-step..step);
            }
        }
        VideoTokens::from_nested(&out).unwrap()
    }

    fn naive_boundaries(tokens: &VideoTokens, tau: f64) -> Vec<usize> {
        let (f, m, d) = tokens.as_array().dim();
        let flat = tokens.as_slice();
        let mean = |fr: usize| -> Vec<f64> {
            (0..d)
                .map(|k| (0..m).map(|i| flat[(fr * m + i) * d + k]).sum::<f64>() / m as f64)
                .collect()
        };
        let mut out = Vec::new();
        for t in 0..f.saturating_sub(1) {
            let (a, b) = (mean(t), mean(t + 1));
            let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            let sim = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
            if sim < tau {
                out.push(t);
            }
        }
        out
    }

    fn assert_partition(segs: &[Segment], frames: usize) {
        assert_eq!(segs.first().unwrap().start, 0);
        assert_eq!(segs.last().unwrap().end, frames);
        for w in segs.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        assert!(segs.iter().all(|s| !s.is_empty()));
    }

    #[test]
    fn identical_frames_have_no_boundaries() {
        let v = video_from_frame_vectors(&vec![vec![1.0, 2.0, 3.0]; 5], 4);
        assert!(find_boundaries(&v, 0.95).is_empty());
    }

    #[test]
    fn orthogonal_halves_split_once() {
        let mut frames = vec![vec![1.0, 0.01, 0.0]; 3];
        frames.extend(vec![vec![0.0, 1.0, 0.02]; 3]);
        let v = video_from_frame_vectors(&frames, 2);
        assert_eq!(find_boundaries(&v, 0.95), vec![2]);
    }

    #[test]
    fn boundaries_match_naive_scan_on_random_walk() {
        let v = random_walk(40, 6, 0.4, 7);
        let fast = find_boundaries(&v, 0.95);
        assert_eq!(fast, naive_boundaries(&v, 0.95));
        assert!(!fast.is_empty());
    }

    #[test]
    fn singleton_with_one_neighbour_merges_into_it() {
        let v = video_from_frame_vectors(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]], 1);
        let s = merge_singletons(vec![Segment::new(0, 1), Segment::new(1, 3)], &v);
        assert_eq!(s.segments, vec![Segment::new(0, 3)]);
    }

    /// Direct transcription of the merge rule: left-to-right, restart after
    /// every merge, compare against the neighbours' mean token embedding.
    fn naive_merge(mut segs: Vec<(usize, usize)>, tokens: &VideoTokens) -> Vec<(usize, usize)> {
        let (_, m, d) = tokens.as_array().dim();
        let flat = tokens.as_slice();
        let mean = |s: (usize, usize)| -> Vec<f64> {
            let n = ((s.1 - s.0) * m) as f64;
            (0..d)
                .map(|k| {
                    let mut acc = 0.0;
                    for f in s.0..s.1 {
                        for i in 0..m {
                            acc += flat[(f * m + i) * d + k];
                        }
                    }
                    acc / n
                })
                .collect()
        };
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
        };
        loop {
            if segs.len() < 2 {
                return segs;
            }
            let Some(k) = (0..segs.len()).find(|&k| segs[k].1 - segs[k].0 == 1) else {
                return segs;
            };
            let me = mean(segs[k]);
            let left = (k > 0).then(|| cos(&me, &mean(segs[k - 1])));
            let right = (k + 1 < segs.len()).then(|| cos(&me, &mean(segs[k + 1])));
            let j = match (left, right) {
                (Some(l), Some(r)) => if r > l { k + 1 } else { k - 1 },
                (Some(_), None) => k - 1,
                (None, Some(_)) => k + 1,
                (None, None) => unreachable!(),
            };
            let merged = (segs[k].0.min(segs[j].0), segs[k].1.max(segs[j].1));
            segs[j] = merged;
            segs.remove(k);
        }
    }

    #[test]
    fn aba_pattern_follows_left_to_right_rule() {
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.0, 1.0, 0.0];
        let v = video_from_frame_vectors(&[a.clone(), b, a.clone(), a], 2);
        let initial = segments_from_boundaries(4, &find_boundaries(&v, 0.95));
        assert_eq!(initial, vec![Segment::new(0, 1), Segment::new(1, 2), Segment::new(2, 4)]);
        let s = merge_singletons(initial, &v);
        let expect = naive_merge(vec![(0, 1), (1, 2), (2, 4)], &v);
        let got: Vec<(usize, usize)> = s.segments.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(got, expect);
        assert_eq!(got, vec![(0, 2), (2, 4)]);
    }

    #[test]
    fn tie_between_neighbours_goes_left() {
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.0, 1.0, 0.0];
        let c = vec![0.0, 0.0, 1.0];
        // Singleton `a` in the middle is orthogonal to both neighbours.
        let v = video_from_frame_vectors(&[b.clone(), b, a, c.clone(), c], 1);
        let s = merge_singletons(
            vec![Segment::new(0, 2), Segment::new(2, 3), Segment::new(3, 5)],
            &v,
        );
        assert_eq!(s.segments, vec![Segment::new(0, 3), Segment::new(3, 5)]);
    }

    #[test]
    fn no_singletons_is_a_fixed_point() {
        let v = random_walk(6, 4, 0.1, 3);
        let segs = vec![Segment::new(0, 2), Segment::new(2, 6)];
        let s = merge_singletons(segs.clone(), &v);
        assert_eq!(s.segments, segs);
        let direct = v.frame(2).to_owned();
        let mut expect = ndarray::Array1::<f64>::zeros(4);
        for f in 2..6 {
            for row in v.frame(f).outer_iter() {
                expect += &row;
            }
        }
        expect /= 12.0;
        for (x, y) in s.embeddings.row(1).iter().zip(expect.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(direct.nrows(), 3);
    }

    #[test]
    fn single_frame_and_minimal_tau() {
        let v = random_walk(1, 4, 0.1, 5);
        let s = segment_video(&v, &PruneConfig::new(0.5));
        assert_eq!(s.segments, vec![Segment::new(0, 1)]);

        let v = random_walk(12, 4, 2.0, 5);
        let mut cfg = PruneConfig::new(0.5);
        cfg.tau = -1.0;
        let s = segment_video(&v, &cfg);
        assert_eq!(s.segments, vec![Segment::new(0, 12)]);
    }

    #[test]
    fn zero_frames_force_boundaries() {
        let v = video_from_frame_vectors(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]], 2);
        assert_eq!(find_boundaries(&v, 0.95), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn output_is_a_partition_without_singletons(
            seed in 0u64..500, frames in 1usize..30, step in 0.0f64..2.0, tau in -0.5f64..1.0,
        ) {
            let v = random_walk(frames, 5, step + 1e-3, seed);
            let mut cfg = PruneConfig::new(0.5);
            cfg.tau = tau;
            let s = segment_video(&v, &cfg);
            assert_partition(&s.segments, frames);
            if frames >= 2 {
                prop_assert!(s.segments.iter().all(|x| x.len() >= 2));
            }
            // Merging is idempotent.
            let again = merge_singletons(s.segments.clone(), &v.normalized());
            prop_assert_eq!(&again.segments, &s.segments);
            // Determinism.
            prop_assert_eq!(segment_video(&v, &cfg), s);
        }

        #[test]
        fn lowering_tau_never_adds_boundaries(seed in 0u64..500, t1 in -1.0f64..1.0, t2 in -1.0f64..1.0) {
            let v = random_walk(25, 5, 0.5, seed);
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(find_boundaries(&v, lo).len() <= find_boundaries(&v, hi).len());
        }

        #[test]
        fn segment_embeddings_are_token_means(seed in 0u64..200) {
            let v = random_walk(15, 4, 0.6, seed);
            let s = segment_frames(&v, 0.95);
            for (k, seg) in s.segments.iter().enumerate() {
                let mut acc = ndarray::Array1::<f64>::zeros(4);
                for f in seg.frames() {
                    for row in v.frame(f).outer_iter() {
                        acc += &row;
                    }
                }
                acc /= (seg.len() * 3) as f64;
                for (x, y) in s.embeddings.row(k).iter().zip(acc.iter()) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
