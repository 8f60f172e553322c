//! Shared fixtures for the benchmarks.

use mmgvid::{generate_synthetic, Motion, SegmentSpec, SyntheticSpec, VideoTokens};

/// `segments` segments of `frames_per_segment` frames, every third one dynamic.
pub fn video(segments: usize, frames_per_segment: usize, tokens: usize, dim: usize) -> VideoTokens {
    let spec = SyntheticSpec {
        tokens_per_frame: tokens,
        dim,
        segments: (0..segments)
            .map(|i| {
                let motion = if i % 3 == 1 { Motion::Dynamic } else { Motion::Static };
                SegmentSpec::new(frames_per_segment, 6, motion)
            })
            .collect(),
        background_fraction: 0.25,
        noise_scale: 0.1,
        seed: 64,
    };
    generate_synthetic(&spec).expect("valid benchmark spec").tokens
}
