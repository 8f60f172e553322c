//! Training-free token pruning for video language models.
//!
//! Frames are grouped into segments by adjacent-embedding similarity, each
//! segment gets a share of the token budget according to a marginal value that
//! balances representativeness against diversity, and tokens are selected
//! frame by frame with density-peak clustering. Frames after a segment's
//! anchor are scored for novelty against the tokens already kept.
//!
//! ```
//! use mmgvid::{prune_video, PruneConfig, VideoTokens};
//!
//! let data: Vec<f64> = (0..4 * 8 * 3).map(|i| (i as f64 * 0.7).sin()).collect();
//! let tokens = VideoTokens::new(4, 8, 3, data).unwrap();
//! let result = prune_video(&tokens, &PruneConfig::new(0.25)).unwrap();
//! assert_eq!(result.total_kept, 8);
//! ```

pub mod budgeting;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod pipeline;
pub mod pruning;
pub mod segmentation;
pub mod synthetic;
pub mod tokens;

pub use budgeting::{
    allocate, budget_segments, budget_target, marginal_value, order_segments, Allocation,
    BudgetAllocation, MvTerms, SegmentOrder,
};
pub use config::PruneConfig;
pub use error::{Error, Result};
pub use evaluation::{
    coverage, lambda_sweep, metrics, oracle_best_subset, quality, redundancy, Metrics,
    QualityModel, SweepPoint,
};
pub use io::{load_tensor, read_tensor, save_tensor, write_tensor, ResultDocument};
pub use pipeline::{
    plan, prune_video, prune_video_with_threads, threads_from_env, Plan, SegmentRecord,
    SelectionResult, THREADS_ENV,
};
pub use pruning::{
    dpc_knn_scores, prune_frame, prune_segment, tg_dpc_scores, GuideSet, SegmentSelection,
    TokenScores,
};
pub use segmentation::{find_boundaries, segment_frames, segment_video, Segment, Segmentation};
pub use synthetic::{generate_synthetic, Motion, SegmentSpec, SyntheticSpec, SyntheticVideo};
pub use tokens::{cosine_sim, VideoTokens};
