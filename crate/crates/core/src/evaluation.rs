//! Subset quality, exhaustive optimum on tiny instances, coverage and redundancy.
//!
//! Importance and redundancy are instantiated from cosine geometry, both
//! shifted to `[0, 1]`:
//!
//! - `I(t) = (1 + cos(t, mean token)) / 2`
//! - `D(a, b) = (1 + cos(a, b)) / 2`
//!
//! and `Q(S) = Σ I(t) - β Σ_{unordered pairs} D(a, b)`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::config::PruneConfig;
use crate::error::{Error, Result};
use crate::pipeline::{plan, prune_video, SelectionResult};
use crate::tokens::{cosine_sim, mean_rows, VideoTokens};

/// Largest token count [`oracle_best_subset`] will enumerate.
pub const ORACLE_MAX_TOKENS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityModel {
    pub beta: f64,
}

impl QualityModel {
    pub fn new(beta: f64) -> Self {
        Self { beta }
    }
}

impl Default for QualityModel {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

/// Rows scaled to unit norm; zero rows stay zero, so their cosines are 0.
fn unit_rows(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.outer_iter_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    out
}

/// Importance of every token (flat order).
pub fn importance(tokens: &VideoTokens) -> Vec<f64> {
    let flat = tokens.flat();
    let mean = mean_rows(flat);
    flat.outer_iter()
        .map(|t| (1.0 + cosine_sim(t, mean.view())) / 2.0)
        .collect()
}

pub fn pair_redundancy(tokens: &VideoTokens, a: usize, b: usize) -> f64 {
    let flat = tokens.flat();
    (1.0 + cosine_sim(flat.row(a), flat.row(b))) / 2.0
}

fn check_subset(subset: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in subset {
        if i >= n {
            return Err(Error::OutOfRange {
                what: "token",
                index: i,
                limit: n,
            });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidInput(format!("duplicate token index {i}")));
        }
    }
    Ok(())
}

/// Sum of `D` over unordered pairs of `rows` via `Σ_{i<j} cos = (‖Σu‖² - Σ‖u‖²) / 2`.
fn pair_redundancy_sum(rows: &Array2<f64>) -> f64 {
    let n = rows.nrows();
    if n < 2 {
        return 0.0;
    }
    let sum = rows.sum_axis(Axis(0));
    let self_terms: f64 = rows.outer_iter().map(|r| r.dot(&r)).sum();
    let cos_sum = (sum.dot(&sum) - self_terms) / 2.0;
    let pairs = (n * (n - 1) / 2) as f64;
    (pairs + cos_sum) / 2.0
}

fn gather(tokens: &VideoTokens, subset: &[usize]) -> Array2<f64> {
    let flat = tokens.flat();
    let mut out = Array2::zeros((subset.len(), tokens.dim()));
    for (mut row, &i) in out.outer_iter_mut().zip(subset) {
        row.assign(&flat.row(i));
    }
    out
}

/// `Q` of a subset given by flat token indices.
pub fn quality(subset: &[usize], tokens: &VideoTokens, model: &QualityModel) -> Result<f64> {
    check_subset(subset, tokens.total_tokens())?;
    if subset.is_empty() {
        return Ok(0.0);
    }
    let imp = importance(tokens);
    let rep: f64 = subset.iter().map(|&i| imp[i]).sum();
    let rows = unit_rows(gather(tokens, subset).view());
    Ok(rep - model.beta * pair_redundancy_sum(&rows))
}

/// Exhaustive maximizer of `Q` over subsets of exactly `budget` tokens.
/// Ties go to the lexicographically smallest index set.
pub fn oracle_best_subset(
    tokens: &VideoTokens,
    budget: usize,
    model: &QualityModel,
) -> Result<(Vec<usize>, f64)> {
    let n = tokens.total_tokens();
    if n > ORACLE_MAX_TOKENS {
        return Err(Error::InvalidInput(format!(
            "exhaustive search is limited to {ORACLE_MAX_TOKENS} tokens, got {n}"
        )));
    }
    if budget > n {
        return Err(Error::InvalidInput(format!(
            "budget {budget} exceeds {n} tokens"
        )));
    }
    let imp = importance(tokens);
    let mut red = vec![vec![0.0; n]; n];
    for (a, row) in red.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = pair_redundancy(tokens, a, b);
        }
    }
    let score = |c: &[usize]| -> f64 {
        let mut q: f64 = c.iter().map(|&i| imp[i]).sum();
        for (x, &a) in c.iter().enumerate() {
            for &b in &c[x + 1..] {
                q -= model.beta * red[a][b];
            }
        }
        q
    };
    // Lexicographic combination walk.
    let mut comb: Vec<usize> = (0..budget).collect();
    let mut best = comb.clone();
    let mut best_q = score(&comb);
    while let Some(pos) = (0..budget).rev().find(|&p| comb[p] != p + n - budget) {
        comb[pos] += 1;
        for p in pos + 1..budget {
            comb[p] = comb[p - 1] + 1;
        }
        let q = score(&comb);
        if q > best_q {
            best_q = q;
            best.clone_from(&comb);
        }
    }
    Ok((best, best_q))
}

/// Mean over all tokens of the best cosine similarity to any kept token.
pub fn coverage(kept: &SelectionResult, tokens: &VideoTokens) -> Result<f64> {
    let idx = kept.flat_indices(tokens.tokens_per_frame());
    check_subset(&idx, tokens.total_tokens())?;
    if idx.is_empty() {
        return Err(Error::InvalidInput("coverage of an empty selection".into()));
    }
    let all = unit_rows(tokens.flat());
    let chosen = unit_rows(gather(tokens, &idx).view());
    let chosen_t = chosen.t();
    let n = all.nrows();
    const BLOCK: usize = 1024;
    let mut total = 0.0;
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        let sims = all.slice(s![start..end, ..]).dot(&chosen_t);
        for row in sims.outer_iter() {
            total += row.iter().copied().fold(f64::NEG_INFINITY, f64::max).clamp(-1.0, 1.0);
        }
    }
    // Kept tokens match themselves exactly unless they are zero vectors.
    Ok(total / n as f64)
}

/// Mean pairwise `D` over the kept tokens.
pub fn redundancy(kept: &SelectionResult, tokens: &VideoTokens) -> Result<f64> {
    let idx = kept.flat_indices(tokens.tokens_per_frame());
    check_subset(&idx, tokens.total_tokens())?;
    if idx.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "redundancy needs at least 2 kept tokens, got {}",
            idx.len()
        )));
    }
    let rows = unit_rows(gather(tokens, &idx).view());
    let pairs = (idx.len() * (idx.len() - 1) / 2) as f64;
    Ok(pair_redundancy_sum(&rows) / pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub coverage: f64,
    pub redundancy: Option<f64>,
    pub quality: f64,
    pub total_kept: usize,
    pub retention_achieved: f64,
}

pub fn metrics(kept: &SelectionResult, tokens: &VideoTokens, model: &QualityModel) -> Result<Metrics> {
    let idx = kept.flat_indices(tokens.tokens_per_frame());
    Ok(Metrics {
        coverage: coverage(kept, tokens)?,
        redundancy: (idx.len() >= 2).then(|| redundancy(kept, tokens)).transpose()?,
        quality: quality(&idx, tokens, model)?,
        total_kept: idx.len(),
        retention_achieved: idx.len() as f64 / tokens.total_tokens() as f64,
    })
}

/// One point of a λ sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub order: Vec<usize>,
    pub marginal_values: Vec<f64>,
    pub representativeness: Vec<f64>,
    pub diversity: Vec<f64>,
    pub ratios: Vec<f64>,
    pub per_frame_counts: Vec<usize>,
    /// Least-squares weights `(a, b)` of `MV ≈ a·rep + b·div` over the recorded terms.
    pub fitted_weights: Option<(f64, f64)>,
    pub coverage: f64,
}

/// Fits `mv = a·rep + b·div` by least squares; `None` when the terms are collinear.
pub fn fit_term_weights(mv: &[f64], rep: &[f64], div: &[f64]) -> Option<(f64, f64)> {
    let (mut srr, mut sdd, mut srd, mut srm, mut sdm) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((m, r), d) in mv.iter().zip(rep).zip(div) {
        srr += r * r;
        sdd += d * d;
        srd += r * d;
        srm += r * m;
        sdm += d * m;
    }
    let det = srr * sdd - srd * srd;
    if det.abs() < 1e-12 * (srr * sdd).max(1e-300) {
        return None;
    }
    Some(((srm * sdd - sdm * srd) / det, (sdm * srr - srm * srd) / det))
}

/// Re-runs budgeting and pruning for each λ, holding everything else fixed.
pub fn lambda_sweep(
    tokens: &VideoTokens,
    config: &PruneConfig,
    lambdas: &[f64],
) -> Result<Vec<SweepPoint>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let mut cfg = config.clone();
            cfg.lambda = lambda;
            let p = plan(tokens, &cfg)?;
            let result = prune_video(tokens, &cfg)?;
            let terms = &p.budget.order.terms;
            let mv: Vec<f64> = terms.iter().map(|t| t.value).collect();
            let rep: Vec<f64> = terms.iter().map(|t| t.representativeness).collect();
            let div: Vec<f64> = terms.iter().map(|t| t.diversity).collect();
            Ok(SweepPoint {
                lambda,
                order: p.budget.order.order.clone(),
                fitted_weights: fit_term_weights(&mv, &rep, &div),
                marginal_values: mv,
                representativeness: rep,
                diversity: div,
                ratios: p.budget.allocation.ratios.clone(),
                per_frame_counts: p.budget.allocation.per_frame_counts.clone(),
                coverage: coverage(&result, tokens)?,
            })
        })
        .collect()
}

/// Mean token embedding over the whole video.
pub fn global_mean(tokens: &VideoTokens) -> Array1<f64> {
    mean_rows(tokens.flat())
}
