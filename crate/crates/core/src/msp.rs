//! Modality similarity paths.
//!
//! Each modality produces a `|E_s| × |E_t|` score matrix by composing three
//! pieces: source entity → modality item, source item → target item, and
//! target item → target entity. Sum-aggregated paths reduce to plain matrix
//! products; the visual path aggregates with max.
//!
//! Entities without a modality get zero rows or columns, so every matrix stays
//! conformable for fusion.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{ModalityKind, PipelineConfig};
use crate::diag::DiagnosticSink;
use crate::error::{Error, Result};
use crate::kgio::{AlignmentSet, Dataset, FeatureTable, KgPair, Mmkg};
use crate::matrix::{self, DenseMatrix};

pub type SimMatrix = DenseMatrix;

/// Produces entity embeddings for both graphs in a shared space.
///
/// Implementations must be deterministic for fixed inputs and
/// `config.global_seed`, and return one finite row per entity.
pub trait RelationalEncoder: Send + Sync {
    fn encode(
        &self,
        pair: &KgPair,
        anchors: &AlignmentSet,
        config: &PipelineConfig,
    ) -> Result<(DenseMatrix, DenseMatrix)>;

    fn requires_anchors(&self) -> bool {
        true
    }
}

/// Seed-anchored feature propagation.
///
/// Every anchor pair shares one pseudo-random unit vector, drawn from a stream
/// keyed by the global seed and the anchor's source entity. Features are pushed
/// through the normalized adjacency for `hops` steps and the hop outputs are
/// concatenated.
#[derive(Debug, Clone, Copy, Default)]
pub struct PropagationEncoder;

impl PropagationEncoder {
    pub fn anchor_vector(global_seed: u64, source_entity: usize, dim: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
        rng.set_stream(source_entity as u64);
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }

    fn propagate(adj: &DenseMatrix, init: DenseMatrix, hops: usize) -> Result<DenseMatrix> {
        let mut cur = init;
        let mut out: Option<DenseMatrix> = None;
        for _ in 0..hops {
            cur = matrix::matmul(adj, &cur)?;
            out = Some(match out {
                None => cur.clone(),
                Some(acc) => acc.hconcat(&cur)?,
            });
        }
        Ok(matrix::row_l2_normalize(&out.expect("hops >= 1")))
    }
}

impl RelationalEncoder for PropagationEncoder {
    fn encode(
        &self,
        pair: &KgPair,
        anchors: &AlignmentSet,
        config: &PipelineConfig,
    ) -> Result<(DenseMatrix, DenseMatrix)> {
        let d = config.embed_dim;
        let mut fs = DenseMatrix::zeros(pair.source.n_entities, d);
        let mut ft = DenseMatrix::zeros(pair.target.n_entities, d);
        for p in anchors.iter() {
            if p.src >= fs.rows() || p.tgt >= ft.rows() {
                return Err(Error::Invalid(format!(
                    "anchor ({}, {}) outside the entity range",
                    p.src, p.tgt
                )));
            }
            let v = Self::anchor_vector(config.global_seed, p.src, d);
            for (k, &x) in v.iter().enumerate() {
                fs.set(p.src, k, x);
                ft.set(p.tgt, k, x);
            }
        }
        let hs = Self::propagate(&adjacency(&pair.source), fs, config.hops)?;
        let ht = Self::propagate(&adjacency(&pair.target), ft, config.hops)?;
        Ok((hs, ht))
    }
}

/// Row-normalized undirected adjacency with self-loops; relation labels and
/// edge multiplicity are ignored.
pub fn adjacency(g: &Mmkg) -> DenseMatrix {
    let n = g.n_entities;
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        a.set(i, i, 1.0);
    }
    for q in &g.quads {
        a.set(q.head, q.tail, 1.0);
        a.set(q.tail, q.head, 1.0);
    }
    for i in 0..n {
        let deg: f64 = a.row(i).iter().sum();
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 {
                a.set(i, j, v / deg);
            }
        }
    }
    a
}

pub fn build_relational(pair: &KgPair, anchors: &AlignmentSet, config: &PipelineConfig) -> Result<SimMatrix> {
    build_relational_with(&PropagationEncoder, pair, anchors, config)
}

/// `M_R = H_s H_tᵀ` over row-normalized embeddings from `encoder`.
pub fn build_relational_with(
    encoder: &dyn RelationalEncoder,
    pair: &KgPair,
    anchors: &AlignmentSet,
    config: &PipelineConfig,
) -> Result<SimMatrix> {
    if anchors.is_empty() && encoder.requires_anchors() {
        return Err(Error::Invalid(
            "relational path needs at least one anchor pair (train seeds or bootstrap)".into(),
        ));
    }
    let (hs, ht) = encoder.encode(pair, anchors, config)?;
    if hs.rows() != pair.source.n_entities || ht.rows() != pair.target.n_entities {
        return Err(Error::Internal(format!(
            "encoder returned {}/{} rows for {}/{} entities",
            hs.rows(),
            ht.rows(),
            pair.source.n_entities,
            pair.target.n_entities
        )));
    }
    let hs = matrix::row_l2_normalize(&hs);
    let ht = matrix::row_l2_normalize(&ht);
    matrix::matmul_bt(&hs, &ht)
}

fn features(table: &FeatureTable, cosine: bool) -> DenseMatrix {
    if cosine {
        matrix::row_l2_normalize(&table.matrix)
    } else {
        table.matrix.clone()
    }
}

/// Visual path: max over all image pairs of the two entities.
pub fn build_visual(pair: &KgPair, images: &[FeatureTable; 2], config: &PipelineConfig) -> Result<SimMatrix> {
    let [src, tgt] = images;
    if src.dim() != tgt.dim() {
        return Err(Error::Dimension(format!(
            "image feature dimensions differ: {} vs {}",
            src.dim(),
            tgt.dim()
        )));
    }
    let cross = matrix::matmul_bt(&features(src, config.cosine), &features(tgt, config.cosine))?;
    let member = |g: &Mmkg, rows: usize| -> Result<DenseMatrix> {
        let mut m = DenseMatrix::zeros(g.n_entities, rows);
        for &(e, r) in &g.entity_images {
            if r >= rows {
                return Err(Error::Invalid(format!(
                    "image row {r} has no feature vector ({rows} rows)"
                )));
            }
            m.set(e, r, 1.0);
        }
        Ok(m)
    };
    let ms = member(&pair.source, src.matrix.rows())?;
    let mt = member(&pair.target, tgt.matrix.rows())?;
    matrix::max_compose(&ms, &cross, &mt)
}

/// Value similarity of two raw attribute values.
///
/// Numeric pairs score `1 / max(|a - b|, epsilon)`; anything else scores 1 on
/// byte equality and 0 otherwise.
pub fn value_similarity(a: &str, b: &str, epsilon: f64) -> f64 {
    match (parse_number(a), parse_number(b)) {
        (Some(x), Some(y)) => 1.0 / (x - y).abs().max(epsilon),
        _ => f64::from(u8::from(a == b)),
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Distinct `(name, value)` items of one graph and the entity → item membership.
struct AttrItems {
    items: Vec<(usize, String)>,
    numeric: Vec<Option<f64>>,
    membership: DenseMatrix,
}

impl AttrItems {
    fn collect(g: &Mmkg) -> Self {
        let set: BTreeSet<(usize, &str)> =
            g.attr_triples.iter().map(|a| (a.name, a.value.as_str())).collect();
        let index: BTreeMap<(usize, &str), usize> =
            set.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let mut membership = DenseMatrix::zeros(g.n_entities, set.len());
        for a in &g.attr_triples {
            membership.set(a.entity, index[&(a.name, a.value.as_str())], 1.0);
        }
        let items: Vec<(usize, String)> = set.into_iter().map(|(n, v)| (n, v.to_string())).collect();
        let numeric = items.iter().map(|(_, v)| parse_number(v)).collect();
        AttrItems {
            items,
            numeric,
            membership,
        }
    }
}

/// Attribute path: name similarity × value similarity, summed over item pairs.
pub fn build_attribute(
    pair: &KgPair,
    name_feats: &[FeatureTable; 2],
    config: &PipelineConfig,
) -> Result<SimMatrix> {
    let [src_names, tgt_names] = name_feats;
    if src_names.dim() != tgt_names.dim() {
        return Err(Error::Dimension(format!(
            "attribute-name embedding dimensions differ: {} vs {}",
            src_names.dim(),
            tgt_names.dim()
        )));
    }
    for (g, t, side) in [(&pair.source, src_names, 1), (&pair.target, tgt_names, 2)] {
        if let Some(a) = g.attr_triples.iter().find(|a| a.name >= t.matrix.rows()) {
            return Err(Error::Invalid(format!(
                "graph {side}: attribute name {} has no embedding row ({} rows)",
                a.name,
                t.matrix.rows()
            )));
        }
    }
    let name_sim = matrix::matmul_bt(
        &features(src_names, config.cosine),
        &features(tgt_names, config.cosine),
    )?;

    let s = AttrItems::collect(&pair.source);
    let t = AttrItems::collect(&pair.target);
    let eps = config.epsilon_v;
    let mut cross = DenseMatrix::zeros(s.items.len(), t.items.len());
    for (a, (na, va)) in s.items.iter().enumerate() {
        for (b, (nb, vb)) in t.items.iter().enumerate() {
            let vsim = match (s.numeric[a], t.numeric[b]) {
                (Some(x), Some(y)) => 1.0 / (x - y).abs().max(eps),
                _ => f64::from(u8::from(va == vb)),
            };
            if vsim != 0.0 {
                cross.set(a, b, name_sim.get(*na, *nb) * vsim);
            }
        }
    }
    let left = matrix::matmul(&s.membership, &cross)?;
    matrix::matmul_bt(&left, &t.membership)
}

/// Entity × timestamp co-occurrence counts.
pub fn entity_timestamp_counts(g: &Mmkg, n_timestamps: usize) -> DenseMatrix {
    let mut at = DenseMatrix::zeros(g.n_entities, n_timestamps);
    for q in &g.quads {
        if let Some(t) = q.time {
            at.add_at(q.head, t, 1.0);
            if q.tail != q.head {
                at.add_at(q.tail, t, 1.0);
            }
        }
    }
    at
}

/// `[A·Aᵗ | A²·Aᵗ | … | Aᴸ·Aᵗ]`, rows L2-normalized.
pub fn temporal_features(g: &Mmkg, n_timestamps: usize, hops: usize) -> Result<DenseMatrix> {
    let adj = adjacency(g);
    let mut cur = entity_timestamp_counts(g, n_timestamps);
    let mut out: Option<DenseMatrix> = None;
    for _ in 0..hops {
        cur = matrix::matmul(&adj, &cur)?;
        out = Some(match out {
            None => cur.clone(),
            Some(acc) => acc.hconcat(&cur)?,
        });
    }
    Ok(matrix::row_l2_normalize(&out.expect("hops >= 1")))
}

/// Temporal path over the shared timestamp vocabulary.
pub fn build_temporal(pair: &KgPair, config: &PipelineConfig) -> Result<SimMatrix> {
    if pair.n_timestamps == 0 || !pair.source.has_timestamps() || !pair.target.has_timestamps() {
        return Err(Error::Unavailable(
            "temporal path needs timestamped quadruples in both graphs".into(),
        ));
    }
    let ts = temporal_features(&pair.source, pair.n_timestamps, config.hops)?;
    let tt = temporal_features(&pair.target, pair.n_timestamps, config.hops)?;
    matrix::matmul_bt(&ts, &tt)
}

/// Why a side modality cannot be built for this dataset, if it cannot.
pub fn unavailable_reason(dataset: &Dataset, kind: ModalityKind) -> Option<String> {
    if let Some(p) = dataset.pair.unavailable.get(&kind) {
        return Some(format!("missing file {}", p.display()));
    }
    match kind {
        ModalityKind::Relational => None,
        ModalityKind::Visual => dataset.images.is_none().then(|| "no image features".into()),
        ModalityKind::Attribute => dataset.attr_names.is_none().then(|| "no attribute-name features".into()),
        ModalityKind::Temporal => {
            let p = &dataset.pair;
            (!p.source.has_timestamps() || !p.target.has_timestamps())
                .then(|| "no timestamped quadruples".into())
        }
    }
}

/// Builds the anchor-independent modalities (everything except relational).
pub fn build_side(
    dataset: &Dataset,
    config: &PipelineConfig,
    sink: &mut dyn DiagnosticSink,
) -> Result<BTreeMap<ModalityKind, SimMatrix>> {
    let mut out = BTreeMap::new();
    let wanted: Vec<ModalityKind> = config
        .modalities
        .iter()
        .copied()
        .filter(|k| *k != ModalityKind::Relational)
        .filter(|&k| match unavailable_reason(dataset, k) {
            Some(why) => {
                sink.warn(&format!("modality {k} skipped: {why}"));
                false
            }
            None => true,
        })
        .collect();
    let pair = &dataset.pair;
    let built: Vec<Result<(ModalityKind, SimMatrix)>> = {
        use rayon::prelude::*;
        wanted
            .par_iter()
            .map(|&k| {
                let m = match k {
                    ModalityKind::Visual => {
                        build_visual(pair, dataset.images.as_ref().expect("checked"), config)
                    }
                    ModalityKind::Attribute => {
                        build_attribute(pair, dataset.attr_names.as_ref().expect("checked"), config)
                    }
                    ModalityKind::Temporal => build_temporal(pair, config),
                    ModalityKind::Relational => unreachable!("filtered above"),
                }?;
                Ok((k, m))
            })
            .collect()
    };
    for r in built {
        let (k, m) = r?;
        out.insert(k, m);
    }
    Ok(out)
}

/// Builds every enabled and available modality, relational included.
pub fn build_all(
    dataset: &Dataset,
    anchors: &AlignmentSet,
    config: &PipelineConfig,
    sink: &mut dyn DiagnosticSink,
) -> Result<BTreeMap<ModalityKind, SimMatrix>> {
    let mut out = build_side(dataset, config, sink)?;
    if config.enabled(ModalityKind::Relational) {
        out.insert(
            ModalityKind::Relational,
            build_relational(&dataset.pair, anchors, config)?,
        );
    }
    if out.is_empty() {
        return Err(Error::Unavailable("no enabled modality is available".into()));
    }
    Ok(out)
}
