//! Marginal-value segment ordering and budget allocation.
//!
//! Segments are picked greedily by marginal value: a blend of how well a
//! segment represents the content still unbudgeted and how much it differs
//! from the content already budgeted. The value recorded at each segment's
//! selection moment is standardized across segments and turned into a
//! retention ratio, then into exact integer token counts.

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::PruneConfig;
use crate::error::{Error, Result};
use crate::segmentation::Segmentation;
use crate::tokens::cosine_sim;

/// Below this standard deviation the recorded values are treated as equal.
pub const MV_STD_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MvTerms {
    pub representativeness: f64,
    pub diversity: f64,
    pub value: f64,
}

fn mean_of(embeddings: ArrayView2<'_, f64>, rows: impl Iterator<Item = usize>) -> Option<Array1<f64>> {
    let mut acc = Array1::zeros(embeddings.ncols());
    let mut n = 0usize;
    for r in rows {
        acc += &embeddings.row(r);
        n += 1;
    }
    (n > 0).then(|| acc / n as f64)
}

/// Marginal value of `candidate` given the segments already budgeted.
///
/// `remaining` must contain `candidate`; the representativeness mean runs over
/// the other remaining segments. With nothing selected yet, diversity is taken
/// against the mean of all segments. With no other segment remaining,
/// representativeness is 0.
pub fn marginal_value(
    candidate: usize,
    selected: &[usize],
    remaining: &[usize],
    embeddings: ArrayView2<'_, f64>,
    lambda: f64,
) -> MvTerms {
    debug_assert!(remaining.contains(&candidate));
    let g = embeddings.row(candidate);
    let representativeness =
        mean_of(embeddings, remaining.iter().copied().filter(|&r| r != candidate))
            .map_or(0.0, |m| cosine_sim(g, m.view()));
    let reference = if selected.is_empty() {
        mean_of(embeddings, 0..embeddings.nrows())
    } else {
        mean_of(embeddings, selected.iter().copied())
    };
    let diversity = 1.0 - reference.map_or(0.0, |m| cosine_sim(g, m.view()));
    MvTerms {
        representativeness,
        diversity,
        value: lambda * representativeness + (1.0 - lambda) * diversity,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentOrder {
    /// Segment indices in selection order.
    pub order: Vec<usize>,
    /// Terms recorded at each segment's selection moment, indexed by segment.
    pub terms: Vec<MvTerms>,
    /// Every candidate evaluated at each greedy step, as `(segment, terms)`.
    pub trace: Vec<Vec<(usize, MvTerms)>>,
}

impl SegmentOrder {
    pub fn values(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.value).collect()
    }

    /// Position of each segment in the selection order.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (pos, &k) in self.order.iter().enumerate() {
            ranks[k] = pos;
        }
        ranks
    }
}

/// Greedy marginal-value ordering; ties go to the lowest segment index.
pub fn order_segments(embeddings: ArrayView2<'_, f64>, lambda: f64) -> SegmentOrder {
    let k = embeddings.nrows();
    let mut selected = Vec::with_capacity(k);
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut terms = vec![
        MvTerms {
            representativeness: 0.0,
            diversity: 0.0,
            value: 0.0
        };
        k
    ];
    let mut trace = Vec::with_capacity(k);
    while !remaining.is_empty() {
        let step: Vec<(usize, MvTerms)> = remaining
            .iter()
            .map(|&c| (c, marginal_value(c, &selected, &remaining, embeddings, lambda)))
            .collect();
        let (best, best_terms) = step
            .iter()
            .copied()
            .reduce(|acc, cur| {
                if cur.1.value > acc.1.value || (cur.1.value == acc.1.value && cur.0 < acc.0) {
                    cur
                } else {
                    acc
                }
            })
            .expect("non-empty");
        terms[best] = best_terms;
        selected.push(best);
        remaining.retain(|&r| r != best);
        trace.push(step);
    }
    SegmentOrder {
        order: selected,
        terms,
        trace,
    }
}

/// Integer token budget per segment. Within segment `k` the first
/// `extra_frames[k]` frames keep `per_frame_counts[k] + 1` tokens and the rest
/// keep `per_frame_counts[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    pub ratios: Vec<f64>,
    pub per_frame_counts: Vec<usize>,
    pub extra_frames: Vec<usize>,
    pub totals: Vec<usize>,
    pub target: usize,
}

impl Allocation {
    /// Token count for frame `offset` (relative to the segment start) of segment `k`.
    pub fn frame_count(&self, k: usize, offset: usize) -> usize {
        self.per_frame_counts[k] + usize::from(offset < self.extra_frames[k])
    }

    pub fn segment_frame_counts(&self, k: usize, len: usize) -> Vec<usize> {
        (0..len).map(|j| self.frame_count(k, j)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetAllocation {
    pub order: SegmentOrder,
    pub allocation: Allocation,
}

/// Total tokens to keep, `round(R·N)`.
pub fn budget_target(retention_ratio: f64, total_tokens: usize) -> usize {
    (retention_ratio * total_tokens as f64).round() as usize
}

/// Standardized shares `R_min + R_extra·z_k`, clamped to `[R_min, 1]` and
/// rescaled above the floor until the frame-weighted mean equals `R`.
pub fn continuous_ratios(mv: &[f64], lengths: &[usize], ratio: f64, min_ratio: f64) -> Vec<f64> {
    let k = mv.len();
    let extra = ratio - min_ratio;
    let mean = mv.iter().sum::<f64>() / k as f64;
    let std = (mv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64).sqrt();
    if k <= 1 || std < MV_STD_EPSILON || extra <= 0.0 {
        return vec![ratio; k];
    }
    let mut above: Vec<f64> = mv
        .iter()
        .map(|v| {
            let raw = min_ratio + extra * (v - mean) / std;
            raw.clamp(min_ratio, 1.0) - min_ratio
        })
        .collect();
    let frames: f64 = lengths.iter().map(|&l| l as f64).sum();
    let target_above = extra * frames;
    let headroom = 1.0 - min_ratio;
    let mut capped = vec![false; k];
    loop {
        let fixed: f64 = (0..k)
            .filter(|&i| capped[i])
            .map(|i| lengths[i] as f64 * headroom)
            .sum();
        let need = (target_above - fixed).max(0.0);
        let mut mass: f64 = (0..k)
            .filter(|&i| !capped[i])
            .map(|i| lengths[i] as f64 * above[i])
            .sum();
        if mass <= 0.0 {
            for i in (0..k).filter(|&i| !capped[i]) {
                above[i] = 1.0;
            }
            mass = (0..k)
                .filter(|&i| !capped[i])
                .map(|i| lengths[i] as f64)
                .sum();
        }
        if mass <= 0.0 {
            break;
        }
        let scale = need / mass;
        let mut newly_capped = false;
        let free: Vec<usize> = (0..k).filter(|&i| !capped[i]).collect();
        for i in free {
            above[i] *= scale;
            if above[i] > headroom {
                above[i] = headroom;
                capped[i] = true;
                newly_capped = true;
            }
        }
        if !newly_capped {
            break;
        }
    }
    above.iter().map(|a| min_ratio + a).collect()
}

/// Converts recorded marginal values into exact per-segment token counts.
///
/// Fails with [`Error::Infeasible`] when the global budget cannot give every
/// frame at least one token.
pub fn allocate(
    mv: &[f64],
    lengths: &[usize],
    config: &PruneConfig,
    tokens_per_frame: usize,
) -> Result<Allocation> {
    if mv.len() != lengths.len() || mv.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} marginal values for {} segments",
            mv.len(),
            lengths.len()
        )));
    }
    if lengths.contains(&0) || tokens_per_frame == 0 {
        return Err(Error::InvalidInput("empty segment or frame".into()));
    }
    let m = tokens_per_frame;
    let frames: usize = lengths.iter().sum();
    let total = frames * m;
    let target = budget_target(config.retention_ratio, total);
    if target < frames {
        return Err(Error::Infeasible(format!(
            "budget of {target} tokens cannot keep one token in each of {frames} frames"
        )));
    }
    if target > total {
        return Err(Error::Infeasible(format!(
            "budget of {target} tokens exceeds the {total} available"
        )));
    }

    let ratios = continuous_ratios(mv, lengths, config.retention_ratio, config.min_ratio);
    let floor = ((config.min_ratio * m as f64 + 1e-9).floor() as usize).clamp(1, m);
    let floor = if floor * frames > target { target / frames } else { floor };

    let quotas: Vec<f64> = ratios
        .iter()
        .zip(lengths)
        .map(|(r, &l)| r * (l * m) as f64)
        .collect();
    let lo: Vec<usize> = lengths.iter().map(|&l| l * floor).collect();
    let hi: Vec<usize> = lengths.iter().map(|&l| l * m).collect();
    let mut totals: Vec<usize> = quotas
        .iter()
        .enumerate()
        .map(|(i, q)| (q.floor().max(0.0) as usize).clamp(lo[i], hi[i]))
        .collect();

    let mut sum: usize = totals.iter().sum();
    while sum < target {
        // Largest shortfall first; lower index on ties.
        let pick = (0..totals.len())
            .filter(|&i| totals[i] < hi[i])
            .fold(None::<(usize, f64)>, |best, i| {
                let short = quotas[i] - totals[i] as f64;
                match best {
                    Some((_, b)) if short <= b => best,
                    _ => Some((i, short)),
                }
            })
            .map(|(i, _)| i)
            .expect("target <= total capacity");
        totals[pick] += 1;
        sum += 1;
    }
    while sum > target {
        // Largest excess first; higher index gives way on ties.
        let pick = (0..totals.len())
            .filter(|&i| totals[i] > lo[i])
            .fold(None::<(usize, f64)>, |best, i| {
                let excess = totals[i] as f64 - quotas[i];
                match best {
                    Some((_, b)) if excess < b => best,
                    _ => Some((i, excess)),
                }
            })
            .map(|(i, _)| i)
            .expect("target >= total floor");
        totals[pick] -= 1;
        sum -= 1;
    }

    let per_frame_counts = totals.iter().zip(lengths).map(|(t, l)| t / l).collect();
    let extra_frames = totals.iter().zip(lengths).map(|(t, l)| t % l).collect();
    Ok(Allocation {
        ratios,
        per_frame_counts,
        extra_frames,
        totals,
        target,
    })
}

/// Orders the segments and allocates their budgets.
pub fn budget_segments(
    segmentation: &Segmentation,
    config: &PruneConfig,
    tokens_per_frame: usize,
) -> Result<BudgetAllocation> {
    let order = order_segments(segmentation.embeddings.view(), config.lambda);
    let allocation = allocate(&order.values(), &segmentation.lengths(), config, tokens_per_frame)?;
    Ok(BudgetAllocation { order, allocation })
}
