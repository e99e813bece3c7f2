//! Hits@N, MRR and MR of a score matrix against gold pairs.

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kgio::AlignmentSet;
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `(N, Hits@N)` in ascending N.
    #[serde(serialize_with = "hits_as_map", deserialize_with = "hits_from_map")]
    pub hits: Vec<(usize, f64)>,
    pub mrr: f64,
    pub mr: f64,
    #[serde(rename = "n")]
    pub n_evaluated: usize,
}

fn hits_as_map<S: Serializer>(hits: &[(usize, f64)], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(hits.len()))?;
    for (n, v) in hits {
        map.serialize_entry(&n.to_string(), v)?;
    }
    map.end()
}

fn hits_from_map<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<(usize, f64)>, D::Error> {
    let raw = std::collections::BTreeMap::<String, f64>::deserialize(d)?;
    let mut out = raw
        .into_iter()
        .map(|(k, v)| k.parse::<usize>().map(|n| (n, v)).map_err(serde::de::Error::custom))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    out.sort_by_key(|&(n, _)| n);
    Ok(out)
}

impl EvalReport {
    pub fn hits_at(&self, n: usize) -> Option<f64> {
        self.hits.iter().find(|&&(k, _)| k == n).map(|&(_, v)| v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Mean of two reports over the same cutoffs (used for two-direction evaluation).
    pub fn average(&self, other: &EvalReport) -> EvalReport {
        EvalReport {
            hits: self
                .hits
                .iter()
                .zip(&other.hits)
                .map(|(&(n, a), &(_, b))| (n, (a + b) / 2.0))
                .collect(),
            mrr: (self.mrr + other.mrr) / 2.0,
            mr: (self.mr + other.mr) / 2.0,
            n_evaluated: self.n_evaluated,
        }
    }
}

/// Rank of target `j` in row `i`: strictly better scores count, equal scores
/// at a smaller column count, so Hits@1 agrees with `row_argmax`.
pub fn rank_of(scores: &DenseMatrix, i: usize, j: usize) -> usize {
    let row = scores.row(i);
    let gold = row[j];
    1 + row
        .iter()
        .enumerate()
        .filter(|&(k, &v)| v > gold || (v == gold && k < j))
        .count()
}

pub fn evaluate(scores: &DenseMatrix, gold: &AlignmentSet, ns: &[usize]) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(Error::Invalid("no gold pairs to evaluate".into()));
    }
    if let Some(p) = gold.iter().find(|p| p.src >= scores.rows() || p.tgt >= scores.cols()) {
        return Err(Error::Invalid(format!(
            "gold pair ({}, {}) outside the {}x{} score matrix",
            p.src,
            p.tgt,
            scores.rows(),
            scores.cols()
        )));
    }
    let mut ns: Vec<usize> = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let ranks: Vec<usize> = gold.iter().map(|p| rank_of(scores, p.src, p.tgt)).collect();
    Ok(report_from_ranks(&ranks, &ns))
}

pub fn report_from_ranks(ranks: &[usize], ns: &[usize]) -> EvalReport {
    let n = ranks.len() as f64;
    let hits = ns
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    EvalReport {
        hits,
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        mr: ranks.iter().map(|&r| r as f64).sum::<f64>() / n,
        n_evaluated: ranks.len(),
    }
}

/// Averages source → target and target → source evaluation.
pub fn evaluate_both(
    forward: &DenseMatrix,
    backward: &DenseMatrix,
    gold: &AlignmentSet,
    ns: &[usize],
) -> Result<EvalReport> {
    let f = evaluate(forward, gold, ns)?;
    let b = evaluate(backward, &gold.reversed(), ns)?;
    Ok(f.average(&b))
}

/// Parses a cutoff list such as `1,5,10`.
pub fn parse_cutoffs(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok.parse::<usize>() {
            Ok(n) if n >= 1 => out.push(n),
            _ => return Err(Error::Config(format!("invalid Hits@N cutoff {tok:?}"))),
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty Hits@N cutoff list".into()));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
