//! End-to-end pruning: condition, segment, budget, select.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budgeting::{budget_segments, BudgetAllocation};
use crate::config::PruneConfig;
use crate::error::{Error, Result};
use crate::pruning::prune_segment;
use crate::segmentation::{segment_frames, Segmentation};
use crate::tokens::VideoTokens;

/// Environment variable overriding the worker count (0 = one per core).
pub const THREADS_ENV: &str = "MMG_THREADS";

/// Per-segment metadata of a pruning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub start: usize,
    pub end: usize,
    pub ratio: f64,
    /// Tokens kept in each frame; the first `extra_frames` frames keep one more.
    pub per_frame_count: usize,
    pub extra_frames: usize,
    pub marginal_value: f64,
    pub representativeness: f64,
    pub diversity: f64,
    /// Position of the segment in the marginal-value selection order.
    pub selection_rank: usize,
}

impl SegmentRecord {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn kept(&self) -> usize {
        self.per_frame_count * self.len() + self.extra_frames
    }

    pub fn frame_count(&self, offset: usize) -> usize {
        self.per_frame_count + usize::from(offset < self.extra_frames)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Kept token indices per frame, ascending.
    pub kept: Vec<Vec<usize>>,
    pub segments: Vec<SegmentRecord>,
    pub total_kept: usize,
}

impl SelectionResult {
    /// Kept tokens as flat indices `frame·M + index`, ascending.
    pub fn flat_indices(&self, tokens_per_frame: usize) -> Vec<usize> {
        self.kept
            .iter()
            .enumerate()
            .flat_map(|(f, idx)| idx.iter().map(move |&i| f * tokens_per_frame + i))
            .collect()
    }
}

/// Output of the first two stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub segmentation: Segmentation,
    pub budget: BudgetAllocation,
}

impl Plan {
    pub fn records(&self) -> Vec<SegmentRecord> {
        let ranks = self.budget.order.ranks();
        let alloc = &self.budget.allocation;
        self.segmentation
            .segments
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let t = self.budget.order.terms[k];
                SegmentRecord {
                    start: s.start,
                    end: s.end,
                    ratio: alloc.ratios[k],
                    per_frame_count: alloc.per_frame_counts[k],
                    extra_frames: alloc.extra_frames[k],
                    marginal_value: t.value,
                    representativeness: t.representativeness,
                    diversity: t.diversity,
                    selection_rank: ranks[k],
                }
            })
            .collect()
    }
}

/// Tokens as seen by every stage: unit-normalized when configured.
pub fn prepare<'a>(tokens: &'a VideoTokens, config: &PruneConfig) -> Cow<'a, VideoTokens> {
    if config.normalize_tokens {
        Cow::Owned(tokens.normalized())
    } else {
        Cow::Borrowed(tokens)
    }
}

fn plan_prepared(tokens: &VideoTokens, config: &PruneConfig) -> Result<Plan> {
    let segmentation = segment_frames(tokens, config.tau);
    let budget = budget_segments(&segmentation, config, tokens.tokens_per_frame())?;
    Ok(Plan {
        segmentation,
        budget,
    })
}

/// Segmentation and budget allocation without token selection.
pub fn plan(tokens: &VideoTokens, config: &PruneConfig) -> Result<Plan> {
    config.validate()?;
    plan_prepared(&prepare(tokens, config), config)
}

/// Worker count from [`THREADS_ENV`]; unset means 0 (one per core).
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v.trim().parse().map_err(|_| {
            Error::InvalidConfig(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))
        }),
    }
}

/// Single-threaded [`prune_video_with_threads`].
pub fn prune_video(tokens: &VideoTokens, config: &PruneConfig) -> Result<SelectionResult> {
    prune_video_with_threads(tokens, config, 1)
}

/// Runs the full pipeline. Segments are pruned on `threads` workers
/// (0 = one per core); the result does not depend on the worker count.
pub fn prune_video_with_threads(
    tokens: &VideoTokens,
    config: &PruneConfig,
    threads: usize,
) -> Result<SelectionResult> {
    config.validate()?;
    let prepared = prepare(tokens, config);
    let plan = plan_prepared(&prepared, config)?;
    let records = plan.records();
    let work = |rec: &SegmentRecord| {
        let counts: Vec<usize> = (0..rec.len()).map(|j| rec.frame_count(j)).collect();
        let seg = crate::segmentation::Segment::new(rec.start, rec.end);
        prune_segment(&prepared, seg, &counts, config.knn).map(|s| s.kept)
    };
    let per_segment: Vec<Vec<Vec<usize>>> = if threads == 1 || records.len() == 1 {
        records.iter().map(work).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| records.par_iter().map(work).collect::<Result<_>>())?
    };
    let kept: Vec<Vec<usize>> = per_segment.into_iter().flatten().collect();
    let total_kept = kept.iter().map(Vec::len).sum();
    Ok(SelectionResult {
        kept,
        segments: records,
        total_kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budgeting::budget_target;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_video(f: usize, m: usize, d: usize, seed: u64) -> VideoTokens {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VideoTokens::new(f, m, d, (0..f * m * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn full_retention_keeps_everything() {
        let v = random_video(6, 5, 4, 1);
        let r = prune_video(&v, &PruneConfig::new(1.0)).unwrap();
        assert!(r.kept.iter().all(|k| *k == (0..5).collect::<Vec<_>>()));
        assert_eq!(r.total_kept, 30);
    }

    #[test]
    fn single_frame_collapses_to_anchor_selection() {
        let v = random_video(1, 4, 3, 2);
        let r = prune_video(&v, &PruneConfig::new(0.5)).unwrap();
        assert_eq!(r.segments.len(), 1);
        assert_eq!(r.segments[0].per_frame_count, 2);
        let expect = crate::pruning::prune_frame(v.normalized().frame(0), 2, None, 5).unwrap();
        assert_eq!(r.kept[0], expect);
    }

    #[test]
    fn kept_lists_match_segment_counts() {
        let v = random_video(20, 9, 6, 3);
        let r = prune_video(&v, &PruneConfig::new(0.3)).unwrap();
        assert_eq!(r.total_kept, budget_target(0.3, 180));
        for s in &r.segments {
            for (j, f) in (s.start..s.end).enumerate() {
                assert_eq!(r.kept[f].len(), s.frame_count(j));
                assert!(r.kept[f].windows(2).all(|w| w[0] < w[1]));
                assert!(r.kept[f].iter().all(|&i| i < 9));
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let v = random_video(24, 8, 5, 4);
        let cfg = PruneConfig::new(0.25);
        let a = prune_video_with_threads(&v, &cfg, 1).unwrap();
        let b = prune_video_with_threads(&v, &cfg, 3).unwrap();
        let c = prune_video_with_threads(&v, &cfg, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn infeasible_and_invalid_inputs() {
        let v = random_video(10, 4, 3, 5);
        let err = prune_video(&v, &PruneConfig::new(0.1)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let mut cfg = PruneConfig::new(0.5);
        cfg.lambda = 2.0;
        assert_eq!(prune_video(&v, &cfg).unwrap_err().exit_code(), 1);
    }
}
