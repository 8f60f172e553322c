use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmgvid::config::{DEFAULT_BETA, DEFAULT_KNN, DEFAULT_LAMBDA, DEFAULT_TAU};
use mmgvid::io::{
    read_json, to_json, BudgetDocument, SegmentDocument, SyntheticTruth,
};
use mmgvid::pipeline::prepare;
use mmgvid::segmentation::adjacent_similarities;
use mmgvid::{
    generate_synthetic, lambda_sweep, load_tensor, metrics, plan, prune_video_with_threads,
    save_tensor, segment_frames, threads_from_env, Error, PruneConfig, QualityModel,
    ResultDocument, SyntheticSpec, VideoTokens,
};

#[derive(Parser, Debug)]
#[command(name = "mmgvid", version, about = "Prune video visual tokens under a global retention budget")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run segmentation, budgeting and token selection.
    Prune {
        #[command(flatten)]
        run: RunArgs,
        /// Attach coverage, redundancy and quality to the result.
        #[arg(long)]
        metrics: bool,
    },
    /// Detect segments only.
    Segment {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Segment and allocate per-segment budgets without selecting tokens.
    Budget {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a selection. Reads `--result` if given, otherwise prunes with the given flags.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Result document from a previous `prune`.
        #[arg(long)]
        result: Option<PathBuf>,
        /// Accepted for symmetry with `prune --metrics`; eval always attaches metrics.
        #[arg(long)]
        metrics: bool,
    },
    /// Generate a synthetic video from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write planted boundaries and novel tokens as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Re-run budgeting for several λ values.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.5,0.6,0.8,1")]
        lambdas: Vec<f64>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Tensor file to read.
    #[arg(long)]
    input: PathBuf,
    /// JSON output path; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Fraction of all tokens to keep.
    #[arg(long, default_value_t = 0.25)]
    ratio: f64,
    /// Per-segment floor ratio (default: half of --ratio).
    #[arg(long)]
    min_ratio: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TAU, allow_negative_numbers = true)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_KNN)]
    knn: usize,
    /// Redundancy weight used by the quality metric.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// Use raw embeddings instead of unit-normalized ones.
    #[arg(long)]
    no_normalize: bool,
}

impl RunArgs {
    fn config(&self) -> mmgvid::Result<PruneConfig> {
        let mut cfg = PruneConfig::new(self.ratio);
        if let Some(m) = self.min_ratio {
            cfg.min_ratio = m;
        }
        cfg.tau = self.tau;
        cfg.lambda = self.lambda;
        cfg.knn = self.knn;
        cfg.beta = self.beta;
        cfg.normalize_tokens = !self.no_normalize;
        cfg.validate()?;
        Ok(cfg)
    }

    fn load(&self) -> mmgvid::Result<(PruneConfig, VideoTokens)> {
        let cfg = self.config()?;
        Ok((cfg, load_tensor(&self.input)?))
    }
}

fn emit(output: Option<&Path>, json: &str) -> mmgvid::Result<()> {
    match output {
        Some(path) => std::fs::write(path, json)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(json.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn prune_document(run: &RunArgs, with_metrics: bool) -> mmgvid::Result<ResultDocument> {
    let (cfg, tokens) = run.load()?;
    let result = prune_video_with_threads(&tokens, &cfg, threads_from_env()?)?;
    let mut doc = ResultDocument::new(&cfg, &tokens, result);
    if with_metrics {
        doc.metrics = Some(metrics(&doc.selection(), &tokens, &QualityModel::new(cfg.beta))?);
    }
    Ok(doc)
}

fn execute(command: Command) -> mmgvid::Result<()> {
    match command {
        Command::Prune { run, metrics } => {
            let doc = prune_document(&run, metrics)?;
            emit(run.output.as_deref(), &to_json(&doc)?)
        }
        Command::Segment { run } => {
            let (cfg, tokens) = run.load()?;
            let prepared = prepare(&tokens, &cfg);
            let seg = segment_frames(&prepared, cfg.tau);
            let doc = SegmentDocument {
                frames: tokens.frames(),
                similarities: adjacent_similarities(&prepared),
                boundaries: seg.boundaries(),
                segments: seg.segments,
                config: cfg,
            };
            emit(run.output.as_deref(), &to_json(&doc)?)
        }
        Command::Budget { run } => {
            let (cfg, tokens) = run.load()?;
            let p = plan(&tokens, &cfg)?;
            emit(run.output.as_deref(), &to_json(&BudgetDocument::new(&cfg, &tokens, &p))?)
        }
        Command::Eval { run, result, .. } => {
            let doc = match result {
                None => prune_document(&run, true)?,
                Some(path) => {
                    let tokens = load_tensor(&run.input)?;
                    let mut doc: ResultDocument = read_json(&path)?;
                    doc.check_against(&tokens)?;
                    let beta = QualityModel::new(run.beta);
                    doc.config.beta = run.beta;
                    doc.metrics = Some(metrics(&doc.selection(), &tokens, &beta)?);
                    doc
                }
            };
            emit(run.output.as_deref(), &to_json(&doc)?)
        }
        Command::Synth { spec, out, truth } => {
            let spec: SyntheticSpec = read_json(&spec)?;
            let video = generate_synthetic(&spec)?;
            save_tensor(&out, &video.tokens)?;
            if let Some(path) = truth {
                std::fs::write(path, to_json(&SyntheticTruth::new(&spec, &video))?)?;
            }
            Ok(())
        }
        Command::Sweep { run, lambdas } => {
            let (cfg, tokens) = run.load()?;
            if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
                return Err(Error::InvalidConfig(format!("lambda must lie in [0, 1], got {bad}")));
            }
            emit(run.output.as_deref(), &to_json(&lambda_sweep(&tokens, &cfg, &lambdas)?)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests go to stdout and succeed; everything else is a usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
