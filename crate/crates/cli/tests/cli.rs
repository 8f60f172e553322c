use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmgvid::io::{read_json, BudgetDocument, SegmentDocument, SyntheticTruth};
use mmgvid::{load_tensor, ResultDocument, SweepPoint};

const SPEC: &str = r#"{
  "tokens_per_frame": 32,
  "dim": 32,
  "segments": [
    {"length": 4, "n_clusters": 2, "motion": "static"},
    {"length": 5, "n_clusters": 3, "motion": "dynamic"},
    {"length": 4, "n_clusters": 2, "motion": "static", "repeat_of": 0}
  ],
  "background_fraction": 0.25,
  "noise_scale": 0.1,
  "seed": 21
}"#;

fn mmgvid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmgvid"))
        .args(args)
        .env_remove("MMG_THREADS")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
    video: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = dir.path().join("spec.json");
        std::fs::write(&spec, SPEC).unwrap();
        let video = dir.path().join("video.bin");
        let truth = dir.path().join("truth.json");
        let out = mmgvid(&["synth", "--spec", s(&spec), "--out", s(&video), "--truth", s(&truth)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        Self { dir, video }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn synth_writes_tensor_and_truth() {
    let fx = Fixture::new();
    let tokens = load_tensor(&fx.video).unwrap();
    assert_eq!((tokens.frames(), tokens.tokens_per_frame(), tokens.dim()), (13, 32, 32));
    let truth: SyntheticTruth = read_json(fx.path("truth.json")).unwrap();
    assert_eq!(truth.boundaries, vec![3, 8]);
    assert_eq!(truth.novel.len(), 4 * 3);
}

#[test]
fn prune_echoes_defaults_and_honours_the_budget() {
    let fx = Fixture::new();
    let out = fx.path("result.json");
    let run = mmgvid(&["prune", "--input", s(&fx.video), "--ratio", "0.25", "--tau", "0.95", "--lambda", "0.5", "--output", s(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let doc: ResultDocument = read_json(&out).unwrap();
    assert_eq!(doc.config.min_ratio, 0.125);
    assert_eq!(doc.config.knn, 5);
    assert!(doc.config.normalize_tokens);
    assert_eq!(doc.total_kept, 104);
    assert_eq!(doc.segments.len(), 3);
    assert!(doc.metrics.is_none());
    let text = std::fs::read_to_string(&out).unwrap();
    for key in ["\"retention_ratio\"", "\"tau\"", "\"lambda\"", "\"beta\"", "\"seed\""] {
        assert!(text.contains(key), "{key} missing");
    }
}

#[test]
fn full_ratio_keeps_everything() {
    let fx = Fixture::new();
    let run = mmgvid(&["prune", "--input", s(&fx.video), "--ratio", "1.0"]);
    assert!(run.status.success());
    let doc: ResultDocument = serde_json::from_slice(&run.stdout).unwrap();
    let all: Vec<usize> = (0..32).collect();
    assert!(doc.kept.iter().all(|k| *k == all));
}

#[test]
fn output_is_byte_identical_across_runs_and_workers() {
    let fx = Fixture::new();
    let args = ["prune", "--input", s(&fx.video), "--metrics"];
    let base = mmgvid(&args).stdout;
    assert_eq!(base, mmgvid(&args).stdout);
    for threads in ["1", "2", "4", "0"] {
        let out = Command::new(env!("CARGO_BIN_EXE_mmgvid"))
            .args(args)
            .env("MMG_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(out.stdout, base, "MMG_THREADS={threads}");
    }
    let bad = Command::new(env!("CARGO_BIN_EXE_mmgvid"))
        .args(args)
        .env("MMG_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn eval_from_result_matches_inline_eval() {
    let fx = Fixture::new();
    let result = fx.path("result.json");
    assert!(mmgvid(&["prune", "--input", s(&fx.video), "--output", s(&result)]).status.success());
    let from_file = mmgvid(&["eval", "--input", s(&fx.video), "--result", s(&result), "--metrics"]);
    assert!(from_file.status.success(), "{}", String::from_utf8_lossy(&from_file.stderr));
    let inline = mmgvid(&["eval", "--input", s(&fx.video), "--metrics"]);
    assert_eq!(from_file.stdout, inline.stdout);
    let doc: ResultDocument = serde_json::from_slice(&inline.stdout).unwrap();
    let m = doc.metrics.unwrap();
    assert!(m.coverage > 0.0 && m.coverage <= 1.0);
    assert_eq!(m.total_kept, 104);
    assert!((m.retention_achieved - 0.25).abs() < 1e-12);
}

#[test]
fn eval_rejects_a_mismatched_result() {
    let fx = Fixture::new();
    let bogus = fx.path("bogus.json");
    assert!(mmgvid(&["prune", "--input", s(&fx.video), "--output", s(&bogus)]).status.success());
    let mut doc: ResultDocument = read_json(&bogus).unwrap();
    doc.kept[0].push(99);
    std::fs::write(&bogus, mmgvid::io::to_json(&doc).unwrap()).unwrap();
    let out = mmgvid(&["eval", "--input", s(&fx.video), "--result", s(&bogus)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stage_wise_outputs() {
    let fx = Fixture::new();
    let seg = mmgvid(&["segment", "--input", s(&fx.video)]);
    assert!(seg.status.success());
    let seg: SegmentDocument = serde_json::from_slice(&seg.stdout).unwrap();
    assert_eq!(seg.boundaries, vec![3, 8]);
    assert_eq!(seg.similarities.len(), 12);

    let budget = mmgvid(&["budget", "--input", s(&fx.video), "--ratio", "0.25"]);
    assert!(budget.status.success());
    let budget: BudgetDocument = serde_json::from_slice(&budget.stdout).unwrap();
    assert_eq!(budget.target, 104);
    let kept: usize = budget.segments.iter().map(|r| r.kept()).sum();
    assert_eq!(kept, 104);
    assert!(budget.segments[1].per_frame_count > budget.segments[0].per_frame_count);
    assert!(budget.segments[1].per_frame_count > budget.segments[2].per_frame_count);
}

#[test]
fn sweep_reports_every_lambda() {
    let fx = Fixture::new();
    let out = mmgvid(&["sweep", "--input", s(&fx.video), "--lambdas", "0,0.5,1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let points: Vec<SweepPoint> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(points.iter().map(|p| p.lambda).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
    assert_eq!(mmgvid(&["sweep", "--input", s(&fx.video), "--lambdas", "1.5"]).status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let fx = Fixture::new();
    let infeasible = mmgvid(&["prune", "--input", s(&fx.video), "--ratio", "0.01"]);
    assert_eq!(infeasible.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&infeasible.stderr).contains("infeasible"));

    let unknown = mmgvid(&["prune", "--input", s(&fx.video), "--frobnicate"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));

    assert_eq!(mmgvid(&["prune", "--input", s(&fx.video), "--lambda", "2"]).status.code(), Some(1));
    assert_eq!(mmgvid(&["prune", "--input", s(&fx.path("missing.bin"))]).status.code(), Some(1));

    let truncated = fx.path("short.bin");
    let bytes = std::fs::read(&fx.video).unwrap();
    std::fs::write(&truncated, &bytes[..bytes.len() - 3]).unwrap();
    assert_eq!(mmgvid(&["prune", "--input", s(&truncated)]).status.code(), Some(1));

    let help = mmgvid(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("prune"));
    let version = mmgvid(&["--version"]);
    assert_eq!(version.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&version.stdout).contains(env!("CARGO_PKG_VERSION")));
}
