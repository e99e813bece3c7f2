//! Iterative refinement: fuse in both directions, harvest mutual-argmax
//! pseudo-seeds, grow the anchor set and re-encode the relational path.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use serde::Serialize;

use crate::config::{ModalityKind, PipelineConfig};
use crate::diag::DiagnosticSink;
use crate::error::{Error, Result};
use crate::fusion;
use crate::kgio::{AlignedPair, AlignmentSet, KgPair};
use crate::matrix;
use crate::msp::{self, RelationalEncoder, SimMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub candidates: usize,
    pub added: usize,
    pub anchors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineState {
    pub round: usize,
    pub anchors: AlignmentSet,
    pub forward: SimMatrix,
    pub backward: SimMatrix,
    pub history: Vec<RoundRecord>,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    /// Source → target fused matrix of the last round.
    pub fused: SimMatrix,
    pub predictions: AlignmentSet,
    pub state: RefineState,
}

/// Pairs `(i, j)` where `j` is the forward argmax of row `i` and `i` is the
/// backward argmax of row `j`.
pub fn mutual_argmax_pairs(forward: &SimMatrix, backward: &SimMatrix) -> Result<AlignmentSet> {
    if forward.rows() != backward.cols() || forward.cols() != backward.rows() {
        return Err(Error::Dimension(format!(
            "forward {:?} and backward {:?} are not transposed shapes",
            forward.shape(),
            backward.shape()
        )));
    }
    if forward.rows() == 0 || forward.cols() == 0 {
        return Ok(AlignmentSet::new());
    }
    let f = matrix::row_argmax(forward)?;
    let b = matrix::row_argmax(backward)?;
    Ok(AlignmentSet::from_scored(
        f.iter()
            .enumerate()
            .filter(|&(i, &j)| b[j] == i)
            .map(|(i, &j)| (i, j, forward.get(i, j))),
    ))
}

/// Mutual-argmax anchors from the side modalities alone.
pub fn bootstrap_unsupervised(
    side: &BTreeMap<ModalityKind, SimMatrix>,
    config: &PipelineConfig,
) -> Result<AlignmentSet> {
    if side.is_empty() {
        return Err(Error::Unavailable(
            "unsupervised bootstrap needs at least one side modality".into(),
        ));
    }
    if side.contains_key(&ModalityKind::Relational) {
        return Err(Error::Invalid("bootstrap must not use the relational path".into()));
    }
    let (fwd, bwd) = rayon::join(|| fusion::fuse(side, config), || fusion::fuse_backward(side, config));
    mutual_argmax_pairs(&fwd?, &bwd?)
}

/// Argmax prediction for every test source (or every source when there are no test seeds).
pub fn predict(fused: &SimMatrix, pair: &KgPair) -> Result<AlignmentSet> {
    let argmax = matrix::row_argmax(fused)?;
    let sources: Vec<usize> = if pair.test_seeds.is_empty() {
        (0..fused.rows()).collect()
    } else {
        let mut s: Vec<usize> = pair.test_seeds.iter().map(|p| p.src).collect();
        s.sort_unstable();
        s
    };
    Ok(AlignmentSet::from_scored(
        sources.into_iter().map(|i| (i, argmax[i], fused.get(i, argmax[i]))),
    ))
}

/// Runs `config.refine_rounds` rounds starting from `initial_anchors`.
///
/// `side` holds the anchor-independent modality matrices; the relational
/// matrix is rebuilt from the current anchors each round when enabled.
/// Anchors only grow: a candidate is accepted only if neither of its entities
/// is anchored yet.
pub fn refine_loop(
    pair: &KgPair,
    side: &BTreeMap<ModalityKind, SimMatrix>,
    initial_anchors: &AlignmentSet,
    config: &PipelineConfig,
    encoder: &dyn RelationalEncoder,
    sink: &mut dyn DiagnosticSink,
) -> Result<RefineOutcome> {
    config.validate()?;
    if !initial_anchors.is_one_to_one() {
        return Err(Error::Invalid("initial anchors are not one-to-one".into()));
    }
    let use_rel = config.enabled(ModalityKind::Relational);
    if side.is_empty() && !use_rel {
        return Err(Error::Unavailable("no modality to fuse".into()));
    }
    let (held_src, held_tgt): (HashSet<usize>, HashSet<usize>) = if config.holdout_test {
        (pair.test_seeds.sources(), pair.test_seeds.targets())
    } else {
        Default::default()
    };

    let mut anchors = initial_anchors.clone().sorted();
    let mut anchored_src = anchors.sources();
    let mut anchored_tgt = anchors.targets();
    let mut history = Vec::with_capacity(config.refine_rounds);
    let mut last = None;

    for round in 1..=config.refine_rounds {
        let started = Instant::now();
        let mut matrices = side.clone();
        if use_rel {
            matrices.insert(
                ModalityKind::Relational,
                msp::build_relational_with(encoder, pair, &anchors, config)?,
            );
        }
        let (fwd, bwd) = rayon::join(
            || fusion::fuse(&matrices, config),
            || fusion::fuse_backward(&matrices, config),
        );
        let (fwd, bwd) = (fwd?, bwd?);
        let candidates = mutual_argmax_pairs(&fwd, &bwd)?;

        let mut added = 0;
        if config.accept_pseudo {
            for p in candidates.iter() {
                if anchored_src.contains(&p.src) || anchored_tgt.contains(&p.tgt) {
                    continue;
                }
                if held_src.contains(&p.src) || held_tgt.contains(&p.tgt) {
                    continue;
                }
                anchored_src.insert(p.src);
                anchored_tgt.insert(p.tgt);
                anchors.push(AlignedPair {
                    src: p.src,
                    tgt: p.tgt,
                    score: None,
                });
                added += 1;
            }
            anchors.sort_by_src();
        }
        if !anchors.is_one_to_one() {
            return Err(Error::Internal(format!("anchors lost injectivity in round {round}")));
        }

        let record = RoundRecord {
            round,
            candidates: candidates.len(),
            added,
            anchors: anchors.len(),
        };
        sink.emit(serde_json::json!({
            "event": "round",
            "round": round,
            "candidates": record.candidates,
            "added": added,
            "anchors": record.anchors,
            "elapsed_ms": started.elapsed().as_secs_f64() * 1e3,
        }));
        history.push(record);
        last = Some((fwd, bwd));
    }

    let (forward, backward) = last.expect("at least one round");
    let predictions = predict(&forward, pair)?;
    Ok(RefineOutcome {
        fused: forward.clone(),
        predictions,
        state: RefineState {
            round: config.refine_rounds,
            anchors,
            forward,
            backward,
            history,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diag::NullSink;
    use crate::kgio::{Mmkg, Quad};
    use crate::matrix::DenseMatrix;
    use crate::msp::PropagationEncoder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mutual_argmax_diagonal() {
        let f = DenseMatrix::from_rows(&[[0.9, 0.1], [0.2, 0.8]]);
        let r = mutual_argmax_pairs(&f, &f.transpose()).unwrap();
        assert_eq!(r.as_tuples(), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn one_sided_match_rejected() {
        let f = DenseMatrix::from_rows(&[[0.1, 0.9], [0.2, 0.8]]);
        // backward row 1 points at source 1, not 0
        let b = DenseMatrix::from_rows(&[[0.9, 0.1], [0.3, 0.7]]);
        let r = mutual_argmax_pairs(&f, &b).unwrap();
        assert_eq!(r.as_tuples(), vec![(1, 1)]);
        assert!(!r.contains(0, 1));
    }

    #[test]
    fn mutual_argmax_shape_mismatch() {
        assert!(mutual_argmax_pairs(&DenseMatrix::zeros(2, 3), &DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn mutual_argmax_matches_double_loop_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let f = DenseMatrix::from_fn(10, 10, |_, _| f64::from(rng.random_range(0u8..5)));
            let b = DenseMatrix::from_fn(10, 10, |_, _| f64::from(rng.random_range(0u8..5)));
            let got = mutual_argmax_pairs(&f, &b).unwrap();
            let fa = matrix::row_argmax(&f).unwrap();
            let ba = matrix::row_argmax(&b).unwrap();
            let mut want = Vec::new();
            for i in 0..10 {
                for j in 0..10 {
                    if fa[i] == j && ba[j] == i {
                        want.push((i, j));
                    }
                }
            }
            assert_eq!(got.as_tuples(), want);
            assert!(got.is_one_to_one());
            let swapped = mutual_argmax_pairs(&b, &f).unwrap().reversed().sorted();
            assert_eq!(swapped.as_tuples(), want);
        }
    }

    fn ring_pair(n: usize, seeds: &[(usize, usize)], test: &[(usize, usize)]) -> KgPair {
        let quads: Vec<Quad> = (0..n)
            .flat_map(|i| {
                [
                    Quad { head: i, rel: 0, tail: (i + 1) % n, time: None },
                    Quad { head: i, rel: 0, tail: (i * 7 + 3) % n, time: None },
                ]
            })
            .collect();
        let g = Mmkg {
            n_entities: n,
            n_relations: 1,
            quads,
            ..Default::default()
        };
        KgPair {
            source: g.clone(),
            target: g,
            n_timestamps: 0,
            train_seeds: AlignmentSet::from_pairs(seeds.iter().copied()),
            test_seeds: AlignmentSet::from_pairs(test.iter().copied()),
            unavailable: BTreeMap::new(),
        }
    }

    fn noisy_side(n: usize, seed: u64) -> BTreeMap<ModalityKind, SimMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DenseMatrix::from_fn(n, n, |i, j| {
            let base = if i == j { 0.6 } else { 0.0 };
            base + rng.random_range(0.0..0.7)
        });
        [(ModalityKind::Visual, m)].into_iter().collect()
    }

    #[test]
    fn anchors_grow_monotonically_and_keep_seeds() {
        let n = 30;
        let seeds: Vec<(usize, usize)> = (0..6).map(|i| (i * 5, i * 5)).collect();
        let test: Vec<(usize, usize)> = (0..n).filter(|i| i % 5 != 0).map(|i| (i, i)).collect();
        let pair = ring_pair(n, &seeds, &test);
        let cfg = PipelineConfig {
            refine_rounds: 4,
            ..Default::default()
        };
        let out = refine_loop(&pair, &noisy_side(n, 2), &pair.train_seeds, &cfg, &PropagationEncoder, &mut NullSink)
            .unwrap();
        let counts: Vec<usize> = out.state.history.iter().map(|r| r.anchors).collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
        assert!(counts[0] >= seeds.len());
        for &(s, t) in &seeds {
            assert!(out.state.anchors.contains(s, t));
        }
        assert!(out.state.anchors.is_one_to_one());
        assert_eq!(out.predictions.len(), test.len());
    }

    #[test]
    fn single_round_without_acceptance_is_plain_fusion() {
        let n = 12;
        let seeds = [(0, 0), (3, 3), (6, 6)];
        let pair = ring_pair(n, &seeds, &[]);
        let side = noisy_side(n, 5);
        let cfg = PipelineConfig {
            refine_rounds: 1,
            accept_pseudo: false,
            ..Default::default()
        };
        let out = refine_loop(&pair, &side, &pair.train_seeds, &cfg, &PropagationEncoder, &mut NullSink).unwrap();
        let mut all = side.clone();
        all.insert(
            ModalityKind::Relational,
            msp::build_relational(&pair, &pair.train_seeds, &cfg).unwrap(),
        );
        assert_eq!(out.fused, fusion::fuse(&all, &cfg).unwrap());
        assert_eq!(out.state.anchors.len(), seeds.len());
        assert_eq!(out.predictions.len(), n);
    }

    #[test]
    fn pseudo_seeds_are_never_revoked() {
        let n = 20;
        let pair = ring_pair(n, &[(0, 0), (10, 10)], &[]);
        let cfg = PipelineConfig {
            refine_rounds: 3,
            ..Default::default()
        };
        let side = noisy_side(n, 9);
        let one = refine_loop(
            &pair,
            &side,
            &pair.train_seeds,
            &PipelineConfig { refine_rounds: 1, ..cfg.clone() },
            &PropagationEncoder,
            &mut NullSink,
        )
        .unwrap();
        let three = refine_loop(&pair, &side, &pair.train_seeds, &cfg, &PropagationEncoder, &mut NullSink).unwrap();
        for p in one.state.anchors.iter() {
            assert!(three.state.anchors.contains(p.src, p.tgt));
        }
    }

    #[test]
    fn holdout_keeps_test_entities_out_of_anchors() {
        let n = 20;
        let test: Vec<(usize, usize)> = (10..20).map(|i| (i, i)).collect();
        let pair = ring_pair(n, &[(0, 0)], &test);
        let cfg = PipelineConfig {
            holdout_test: true,
            ..Default::default()
        };
        let out = refine_loop(&pair, &noisy_side(n, 1), &pair.train_seeds, &cfg, &PropagationEncoder, &mut NullSink)
            .unwrap();
        assert!(out.state.anchors.iter().all(|p| p.src < 10 && p.tgt < 10));
    }

    #[test]
    fn refinement_is_deterministic() {
        let n = 25;
        let pair = ring_pair(n, &[(0, 0), (7, 7), (14, 14)], &[]);
        let cfg = PipelineConfig::default();
        let side = noisy_side(n, 4);
        let a = refine_loop(&pair, &side, &pair.train_seeds, &cfg, &PropagationEncoder, &mut NullSink).unwrap();
        let b = refine_loop(&pair, &side, &pair.train_seeds, &cfg, &PropagationEncoder, &mut NullSink).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.predictions, b.predictions);
    }

    #[test]
    fn bootstrap_recovers_permutation() {
        let n = 15;
        let perm: Vec<usize> = (0..n).map(|i| (i * 4 + 1) % n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let feats = DenseMatrix::from_fn(n, 8, |_, _| rng.random_range(-1.0..1.0));
        let f = matrix::row_l2_normalize(&feats);
        // target entity perm[i] carries source i's image
        let mut tgt = DenseMatrix::zeros(n, 8);
        for i in 0..n {
            for k in 0..8 {
                tgt.set(perm[i], k, f.get(i, k));
            }
        }
        let vis = matrix::matmul_bt(&f, &tgt).unwrap();
        let side = [(ModalityKind::Visual, vis)].into_iter().collect();
        let boot = bootstrap_unsupervised(&side, &PipelineConfig::default()).unwrap();
        let want: Vec<(usize, usize)> = (0..n).map(|i| (i, perm[i])).collect();
        assert_eq!(boot.as_tuples(), want);
    }

    #[test]
    fn bootstrap_needs_side_modalities() {
        assert!(bootstrap_unsupervised(&BTreeMap::new(), &PipelineConfig::default()).is_err());
    }

    #[test]
    fn bootstrap_anchors_act_like_seeds() {
        let n = 16;
        let anchors = AlignmentSet::from_pairs([(1, 1), (8, 8)]);
        let side = noisy_side(n, 6);
        let cfg = PipelineConfig::default();
        let seeded = ring_pair(n, &[(1, 1), (8, 8)], &[]);
        let unseeded = ring_pair(n, &[], &[]);
        let a = refine_loop(&seeded, &side, &seeded.train_seeds, &cfg, &PropagationEncoder, &mut NullSink).unwrap();
        let b = refine_loop(&unseeded, &side, &anchors, &cfg, &PropagationEncoder, &mut NullSink).unwrap();
        assert_eq!(a.state, b.state);
    }
}
