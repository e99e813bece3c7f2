//! The `mmea` command line: `align`, `eval` and `gen-synth`.
//!
//! Exit codes: 0 success, 1 user or data error, 2 internal invariant violation.
//! Diagnostics go to standard error as one JSON object per line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ModalityKind, PipelineConfig};
use crate::diag::{DiagnosticSink, StderrSink};
use crate::error::{Error, Result};
use crate::evalrank::{self, EvalReport};
use crate::kgio::{self, AlignmentSet};
use crate::matrix::DenseMatrix;
use crate::pipeline::{self, RunOptions};
use crate::refine::RoundRecord;
use crate::synth::{self, SynthSpec};

pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCORES_FILE: &str = "scores.fmat";

#[derive(Debug, Parser)]
#[command(name = "mmea", version, about = "Multi-modal entity alignment between two knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Align a dataset directory and write predictions, metrics and a manifest.
    Align(AlignArgs),
    /// Score predictions or a score matrix against gold pairs.
    Eval(EvalArgs),
    /// Generate a synthetic dataset with a known alignment.
    GenSynth(SynthArgs),
}

#[derive(Debug, Args)]
struct AlignArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma list of rel, vis, attr, time. Listed modalities must be available;
    /// when omitted, every available modality is used.
    #[arg(long)]
    modalities: Option<String>,
    #[arg(long, default_value_t = 10)]
    sinkhorn_k: usize,
    #[arg(long, default_value_t = 3)]
    refine_rounds: usize,
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 6)]
    max_images: usize,
    #[arg(long)]
    no_prescale: bool,
    #[arg(long)]
    no_cosine: bool,
    #[arg(long, overrides_with = "no_accept_pseudo")]
    accept_pseudo: bool,
    #[arg(long, overrides_with = "accept_pseudo")]
    no_accept_pseudo: bool,
    /// Never admit pseudo-seeds that touch a held-out test entity.
    #[arg(long)]
    holdout_test: bool,
    #[arg(long)]
    unsupervised: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "1,5,10")]
    hits: String,
    #[arg(long)]
    both_directions: bool,
    /// Also write the final fused matrix as scores.fmat.
    #[arg(long)]
    save_scores: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    /// Score matrix in FMAT format.
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    scores: Option<PathBuf>,
    /// Predictions TSV (`src\ttgt\tscore`).
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Number of target candidates when scoring predictions.
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long, default_value = "1,5,10")]
    hits: String,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    entities: usize,
    #[arg(long, default_value_t = 20)]
    relations: usize,
    #[arg(long, default_value_t = 30)]
    timestamps: usize,
    #[arg(long, default_value_t = 3.0)]
    density: f64,
    #[arg(long, default_value_t = 0.0)]
    perturbation: f64,
    #[arg(long, default_value_t = 32)]
    feat_dim: usize,
    #[arg(long, default_value_t = 0.0)]
    feat_noise: f64,
    #[arg(long, default_value_t = 3)]
    attrs_per_entity: usize,
    #[arg(long, default_value_t = 10)]
    attr_names: usize,
    #[arg(long, default_value_t = 0.0)]
    value_noise: f64,
    #[arg(long, default_value_t = 2)]
    images_per_entity: usize,
    #[arg(long, default_value_t = 0.2)]
    seed_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Everything needed to repeat an `align` run with the same binary.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub dataset: PathBuf,
    pub config: PipelineConfig,
    pub unsupervised: bool,
    pub both_directions: bool,
    pub hits: Vec<usize>,
    pub modalities: Vec<ModalityKind>,
    pub bootstrap_anchors: usize,
    pub rounds: Vec<RoundRecord>,
    pub stage_seconds: Vec<(String, f64)>,
    pub outputs: Vec<PathBuf>,
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut sink = StderrSink;
    let result = match cli.command {
        Command::Align(a) => cmd_align(&a, &mut sink),
        Command::Eval(a) => cmd_eval(&a),
        Command::GenSynth(a) => cmd_gen_synth(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            sink.emit(serde_json::json!({ "event": "error", "message": e.to_string() }));
            e.exit_code()
        }
    }
}

fn align_config(a: &AlignArgs) -> Result<PipelineConfig> {
    let modalities = match &a.modalities {
        Some(list) => ModalityKind::parse_list(list)?,
        None => ModalityKind::ALL.into_iter().collect(),
    };
    let config = PipelineConfig {
        sinkhorn_k: a.sinkhorn_k,
        refine_rounds: a.refine_rounds,
        hops: a.hops,
        max_images: a.max_images,
        embed_dim: a.dim,
        global_seed: a.seed,
        modalities,
        prescale: !a.no_prescale,
        cosine: !a.no_cosine,
        accept_pseudo: !a.no_accept_pseudo,
        holdout_test: a.holdout_test,
        ..PipelineConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn cmd_align(a: &AlignArgs, sink: &mut dyn DiagnosticSink) -> Result<()> {
    let config = align_config(a)?;
    let options = RunOptions {
        unsupervised: a.unsupervised,
        strict_modalities: a.modalities.is_some(),
        hits: evalrank::parse_cutoffs(&a.hits)?,
        both_directions: a.both_directions,
    };
    let dataset = kgio::load_dataset(&a.data, &config)?;
    let run = pipeline::run(&dataset, &config, &options, sink)?;

    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut outputs = Vec::new();
    let pred_path = a.out.join(PREDICTIONS_FILE);
    kgio::write_predictions(&run.predictions, &pred_path)?;
    outputs.push(pred_path);
    if let Some(report) = &run.report {
        let path = a.out.join(METRICS_FILE);
        write_text(&path, &format!("{}\n", report.to_json()))?;
        outputs.push(path);
    }
    if a.save_scores {
        let path = a.out.join(SCORES_FILE);
        kgio::write_fmat(&run.fused, &path)?;
        outputs.push(path);
    }
    let manifest_path = a.out.join(MANIFEST_FILE);
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        dataset: a.data.clone(),
        config,
        unsupervised: a.unsupervised,
        both_directions: a.both_directions,
        hits: options.hits,
        modalities: run.modalities,
        bootstrap_anchors: run.bootstrap_anchors,
        rounds: run.state.history,
        stage_seconds: run.stage_seconds,
        outputs,
    };
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
    write_text(&manifest_path, &(body + "\n"))
}

/// Dense score matrix for a prediction list: listed pairs keep their score,
/// every other cell sits strictly below the lowest listed score.
pub fn predictions_to_scores(
    predictions: &AlignmentSet,
    gold: &AlignmentSet,
    targets: Option<usize>,
) -> Result<DenseMatrix> {
    let rows = predictions
        .iter()
        .chain(gold.iter())
        .map(|p| p.src + 1)
        .max()
        .unwrap_or(0);
    let max_tgt = predictions.iter().chain(gold.iter()).map(|p| p.tgt + 1).max().unwrap_or(0);
    let cols = match targets {
        Some(n) if n < max_tgt => {
            return Err(Error::Invalid(format!(
                "--targets {n} is smaller than the largest target id {}",
                max_tgt - 1
            )))
        }
        Some(n) => n,
        None => max_tgt,
    };
    let score = |p: &kgio::AlignedPair| p.score.unwrap_or(1.0);
    let floor = predictions.iter().map(score).reduce(f64::min).unwrap_or(1.0) - 1.0;
    let mut data = vec![floor; rows * cols];
    for p in predictions.iter() {
        let cell = &mut data[p.src * cols + p.tgt];
        *cell = if *cell == floor { score(p) } else { cell.max(score(p)) };
    }
    DenseMatrix::from_vec(rows, cols, data)
}

fn eval_report(a: &EvalArgs) -> Result<EvalReport> {
    let gold = kgio::read_alignment(&a.gold)?;
    let hits = evalrank::parse_cutoffs(&a.hits)?;
    let scores = match (&a.scores, &a.predictions) {
        (Some(path), _) => kgio::read_fmat(path)?,
        (None, Some(path)) => predictions_to_scores(&kgio::read_predictions(path)?, &gold, a.targets)?,
        (None, None) => return Err(Error::Config("pass --scores or --predictions".into())),
    };
    evalrank::evaluate(&scores, &gold, &hits)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    println!("{}", eval_report(a)?.to_json());
    Ok(())
}

fn cmd_gen_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_entities: a.entities,
        n_relations: a.relations,
        n_timestamps: a.timestamps,
        triple_density: a.density,
        perturbation: a.perturbation,
        feat_dim: a.feat_dim,
        feat_noise_sigma: a.feat_noise,
        attr_per_entity: a.attrs_per_entity,
        n_attr_names: a.attr_names,
        value_noise_sigma: a.value_noise,
        images_per_entity: a.images_per_entity,
        seed_ratio: a.seed_ratio,
        global_seed: a.seed,
    };
    synth::generate(&spec, &a.out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predictions_matrix_ranks_listed_pairs_first() {
        let preds = AlignmentSet::from_scored([(0, 2, 0.9), (0, 1, 0.4), (1, 0, 0.7)]);
        let gold = AlignmentSet::from_pairs([(0, 1), (1, 0), (2, 2)]);
        let m = predictions_to_scores(&preds, &gold, Some(4)).unwrap();
        assert_eq!(m.shape(), (3, 4));
        assert_eq!(evalrank::rank_of(&m, 0, 1), 2);
        assert_eq!(evalrank::rank_of(&m, 1, 0), 1);
        // unlisted gold: ties with the other unlisted cells, broken by index
        assert_eq!(evalrank::rank_of(&m, 2, 2), 3);
        assert!(predictions_to_scores(&preds, &gold, Some(2)).is_err());
    }

    #[test]
    fn bad_flags_exit_one() {
        assert_eq!(run(["mmea", "align"]), 1);
        assert_eq!(run(["mmea", "frobnicate"]), 1);
        assert_eq!(run(["mmea", "--help"]), 0);
    }
}
