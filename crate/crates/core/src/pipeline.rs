//! End-to-end alignment run: side modalities, optional bootstrap, refinement,
//! prediction and evaluation.

use std::time::Instant;

use crate::config::{ModalityKind, PipelineConfig};
use crate::diag::DiagnosticSink;
use crate::error::{Error, Result};
use crate::evalrank::{self, EvalReport};
use crate::kgio::{AlignedPair, AlignmentSet, Dataset};
use crate::msp::{self, PropagationEncoder, RelationalEncoder, SimMatrix};
use crate::refine::{self, RefineState};

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Seed the anchors with mutual-argmax pairs of the side modalities.
    pub unsupervised: bool,
    /// Fail instead of skipping when an enabled modality is unavailable.
    pub strict_modalities: bool,
    pub hits: Vec<usize>,
    pub both_directions: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            unsupervised: false,
            strict_modalities: false,
            hits: vec![1, 5, 10],
            both_directions: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentRun {
    pub modalities: Vec<ModalityKind>,
    pub bootstrap_anchors: usize,
    pub fused: SimMatrix,
    pub predictions: AlignmentSet,
    pub report: Option<EvalReport>,
    pub state: RefineState,
    /// Wall-clock seconds per stage, in execution order.
    pub stage_seconds: Vec<(String, f64)>,
}

pub fn run(
    dataset: &Dataset,
    config: &PipelineConfig,
    options: &RunOptions,
    sink: &mut dyn DiagnosticSink,
) -> Result<AlignmentRun> {
    run_with_encoder(dataset, config, options, &PropagationEncoder, sink)
}

pub fn run_with_encoder(
    dataset: &Dataset,
    config: &PipelineConfig,
    options: &RunOptions,
    encoder: &dyn RelationalEncoder,
    sink: &mut dyn DiagnosticSink,
) -> Result<AlignmentRun> {
    config.validate()?;
    let pair = &dataset.pair;
    let mut stages = Vec::new();

    if options.strict_modalities {
        for &k in &config.modalities {
            if let Some(why) = msp::unavailable_reason(dataset, k) {
                return Err(Error::Unavailable(format!("{k}: {why}")));
            }
        }
    }

    let t = Instant::now();
    let side = msp::build_side(dataset, config, sink)?;
    stages.push(("side_modalities".to_string(), t.elapsed().as_secs_f64()));
    let use_rel = config.enabled(ModalityKind::Relational);
    if side.is_empty() && !use_rel {
        return Err(Error::Unavailable("no enabled modality is available".into()));
    }

    let mut anchors = pair.train_seeds.clone();
    let mut bootstrap_anchors = 0;
    if options.unsupervised {
        let t = Instant::now();
        let boot = refine::bootstrap_unsupervised(&side, config)?;
        let (src, tgt) = (anchors.sources(), anchors.targets());
        for p in boot.iter().filter(|p| !src.contains(&p.src) && !tgt.contains(&p.tgt)) {
            anchors.push(AlignedPair { score: None, ..*p });
            bootstrap_anchors += 1;
        }
        anchors.sort_by_src();
        sink.emit(serde_json::json!({
            "event": "bootstrap",
            "candidates": boot.len(),
            "added": bootstrap_anchors,
        }));
        stages.push(("bootstrap".to_string(), t.elapsed().as_secs_f64()));
    }
    if use_rel && anchors.is_empty() && encoder.requires_anchors() {
        return Err(Error::Invalid(
            "relational path has no anchors: dataset has no train seeds (use unsupervised mode)".into(),
        ));
    }

    let t = Instant::now();
    let outcome = refine::refine_loop(pair, &side, &anchors, config, encoder, sink)?;
    stages.push(("refine".to_string(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let report = if pair.test_seeds.is_empty() {
        None
    } else if options.both_directions {
        Some(evalrank::evaluate_both(
            &outcome.fused,
            &outcome.state.backward,
            &pair.test_seeds,
            &options.hits,
        )?)
    } else {
        Some(evalrank::evaluate(&outcome.fused, &pair.test_seeds, &options.hits)?)
    };
    stages.push(("evaluate".to_string(), t.elapsed().as_secs_f64()));

    let mut modalities: Vec<ModalityKind> = side.keys().copied().collect();
    if use_rel {
        modalities.push(ModalityKind::Relational);
        modalities.sort();
    }
    Ok(AlignmentRun {
        modalities,
        bootstrap_anchors,
        fused: outcome.fused,
        predictions: outcome.predictions,
        report,
        state: outcome.state,
        stage_seconds: stages,
    })
}
