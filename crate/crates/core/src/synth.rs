//! Synthetic graph pairs with a known alignment.
//!
//! The target graph is an entity-permuted copy of the source with optional
//! structural noise (dropped or rewired triples) and feature noise. All
//! randomness comes from one ChaCha stream seeded by `global_seed`, consumed in
//! a fixed order, so a spec always yields byte-identical files.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kgio::{self, AlignmentSet, AttrTriple, Quad};
use crate::matrix::DenseMatrix;

pub const GOLD_ALL: &str = "gold_all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_timestamps: usize,
    /// Average number of triples per entity.
    pub triple_density: f64,
    /// Fraction of triples dropped or rewired in the target copy.
    pub perturbation: f64,
    pub feat_dim: usize,
    pub feat_noise_sigma: f64,
    pub attr_per_entity: usize,
    pub n_attr_names: usize,
    pub value_noise_sigma: f64,
    /// Each entity gets between 1 and this many images.
    pub images_per_entity: usize,
    pub seed_ratio: f64,
    pub global_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_entities: 500,
            n_relations: 20,
            n_timestamps: 30,
            triple_density: 3.0,
            perturbation: 0.0,
            feat_dim: 32,
            feat_noise_sigma: 0.0,
            attr_per_entity: 3,
            n_attr_names: 10,
            value_noise_sigma: 0.0,
            images_per_entity: 2,
            seed_ratio: 0.2,
            global_seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [("perturbation", self.perturbation), ("seed_ratio", self.seed_ratio)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("feat_noise_sigma", self.feat_noise_sigma),
            ("value_noise_sigma", self.value_noise_sigma),
            ("triple_density", self.triple_density),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if self.n_entities < 2 {
            return bad("need at least 2 entities".into());
        }
        if self.n_relations < 1 || self.feat_dim < 1 || self.images_per_entity < 1 {
            return bad("relations, feature dimension and images per entity must be positive".into());
        }
        if self.attr_per_entity > self.n_attr_names {
            return bad(format!(
                "attr_per_entity ({}) exceeds the attribute-name vocabulary ({})",
                self.attr_per_entity, self.n_attr_names
            ));
        }
        Ok(())
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn noisy_copy(rng: &mut ChaCha8Rng, v: &[f64], sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return v.to_vec();
    }
    loop {
        let w: Vec<f64> = v
            .iter()
            .map(|&x| x + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return w.into_iter().map(|x| x / n).collect();
        }
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], dim: usize) -> Result<DenseMatrix> {
    DenseMatrix::from_vec(rows.len(), dim, rows.iter().flatten().copied().collect())
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Writes a dataset directory for `spec` into `dir` and returns the gold alignment.
pub fn generate(spec: &SynthSpec, dir: &Path) -> Result<AlignmentSet> {
    spec.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.global_seed);
    let n = spec.n_entities;

    // source entity i is target entity perm[i]
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);

    let stamp = |rng: &mut ChaCha8Rng| (spec.n_timestamps > 0).then(|| rng.random_range(0..spec.n_timestamps));
    let n_triples = ((n as f64) * spec.triple_density).round() as usize;
    let mut src_quads = Vec::with_capacity(n_triples.max(n));
    for k in 0..n_triples.max(n) {
        // the first n triples give every entity at least one edge
        let head = if k < n { k } else { rng.random_range(0..n) };
        let mut tail = rng.random_range(0..n - 1);
        if tail >= head {
            tail += 1;
        }
        let rel = rng.random_range(0..spec.n_relations);
        src_quads.push(Quad { head, rel, tail, time: stamp(&mut rng) });
    }
    let mut tgt_quads = Vec::with_capacity(src_quads.len());
    for q in &src_quads {
        let mut tail = q.tail;
        if rng.random_bool(spec.perturbation) {
            if rng.random_bool(0.5) {
                continue;
            }
            tail = rng.random_range(0..n);
        }
        tgt_quads.push(Quad {
            head: perm[q.head],
            rel: q.rel,
            tail: perm[tail],
            time: q.time,
        });
    }
    src_quads.sort();
    tgt_quads.sort();

    // images: source rows grouped by source entity, target rows by target entity
    let mut src_images: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    for _ in 0..n {
        let count = rng.random_range(1..=spec.images_per_entity);
        src_images.push((0..count).map(|_| unit_vector(&mut rng, spec.feat_dim)).collect());
    }
    let mut tgt_images: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    for (i, imgs) in src_images.iter().enumerate() {
        tgt_images[perm[i]] = imgs
            .iter()
            .map(|v| noisy_copy(&mut rng, v, spec.feat_noise_sigma))
            .collect();
    }

    let src_names: Vec<Vec<f64>> = (0..spec.n_attr_names).map(|_| unit_vector(&mut rng, spec.feat_dim)).collect();
    let tgt_names: Vec<Vec<f64>> = src_names
        .iter()
        .map(|v| noisy_copy(&mut rng, v, spec.feat_noise_sigma))
        .collect();

    let mut src_attrs = Vec::with_capacity(n * spec.attr_per_entity);
    let mut tgt_attrs = Vec::with_capacity(n * spec.attr_per_entity);
    let name_pool: Vec<usize> = (0..spec.n_attr_names).collect();
    for i in 0..n {
        let names: BTreeSet<usize> = name_pool
            .choose_multiple(&mut rng, spec.attr_per_entity)
            .copied()
            .collect();
        for name in names {
            let value: f64 = rng.random_range(0.0..1000.0);
            let noisy = if spec.value_noise_sigma > 0.0 {
                value + spec.value_noise_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                value
            };
            src_attrs.push(AttrTriple { entity: i, name, value: format!("{value:.6}") });
            tgt_attrs.push(AttrTriple { entity: perm[i], name, value: format!("{noisy:.6}") });
        }
    }
    src_attrs.sort();
    tgt_attrs.sort();

    let gold = AlignmentSet::from_pairs((0..n).map(|i| (i, perm[i])));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = ((n as f64) * spec.seed_ratio).round() as usize;
    let train = AlignmentSet::from_pairs(order[..n_train].iter().map(|&i| (i, perm[i]))).sorted();
    let test = AlignmentSet::from_pairs(order[n_train..].iter().map(|&i| (i, perm[i]))).sorted();

    let p = |name: &str| dir.join(name);
    for (side, prefix) in [(0, "s"), (1, "t")] {
        kgio::write_id_map(&labels(prefix, n), &p(kgio::ENT_IDS[side]))?;
        kgio::write_id_map(&labels("r", spec.n_relations), &p(kgio::REL_IDS[side]))?;
        kgio::write_id_map(&labels("a", spec.n_attr_names), &p(kgio::ATTR_NAME_IDS[side]))?;
    }
    if spec.n_timestamps > 0 {
        kgio::write_id_map(&labels("t", spec.n_timestamps), &p(kgio::TIME_IDS))?;
    }
    kgio::write_quads(&src_quads, &p(kgio::TRIPLES[0]))?;
    kgio::write_quads(&tgt_quads, &p(kgio::TRIPLES[1]))?;
    kgio::write_attr_triples(&src_attrs, &p(kgio::ATTR_TRIPLES[0]))?;
    kgio::write_attr_triples(&tgt_attrs, &p(kgio::ATTR_TRIPLES[1]))?;
    kgio::write_fmat(&rows_to_matrix(&src_names, spec.feat_dim)?, &p(kgio::ATTRNAME_FEAT[0]))?;
    kgio::write_fmat(&rows_to_matrix(&tgt_names, spec.feat_dim)?, &p(kgio::ATTRNAME_FEAT[1]))?;

    for (side, images) in [(0, &src_images), (1, &tgt_images)] {
        let mut rows = Vec::new();
        let mut owner = Vec::new();
        for (e, imgs) in images.iter().enumerate() {
            for v in imgs {
                rows.push(v.clone());
                owner.push(e);
            }
        }
        kgio::write_fmat(&rows_to_matrix(&rows, spec.feat_dim)?, &p(kgio::IMG_FEAT[side]))?;
        kgio::write_image_rows(&owner, &p(kgio::IMG_ROWS[side]))?;
    }

    kgio::write_alignment(&train, &p(kgio::SEEDS_TRAIN))?;
    kgio::write_alignment(&test, &p(kgio::SEEDS_TEST))?;
    kgio::write_alignment(&gold, &p(GOLD_ALL))?;
    Ok(gold)
}
