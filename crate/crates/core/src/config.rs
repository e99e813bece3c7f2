use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which bridge a similarity path runs through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModalityKind {
    #[serde(rename = "rel")]
    Relational,
    #[serde(rename = "vis")]
    Visual,
    #[serde(rename = "attr")]
    Attribute,
    #[serde(rename = "time")]
    Temporal,
}

impl ModalityKind {
    pub const ALL: [ModalityKind; 4] = [
        ModalityKind::Relational,
        ModalityKind::Visual,
        ModalityKind::Attribute,
        ModalityKind::Temporal,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ModalityKind::Relational => "rel",
            ModalityKind::Visual => "vis",
            ModalityKind::Attribute => "attr",
            ModalityKind::Temporal => "time",
        }
    }

    /// Parses a comma-separated list such as `rel,vis,attr`.
    pub fn parse_list(s: &str) -> Result<BTreeSet<ModalityKind>> {
        let set = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<BTreeSet<_>>>()?;
        if set.is_empty() {
            return Err(Error::Config("empty modality list".into()));
        }
        Ok(set)
    }
}

impl fmt::Display for ModalityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ModalityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rel" => Ok(ModalityKind::Relational),
            "vis" => Ok(ModalityKind::Visual),
            "attr" => Ok(ModalityKind::Attribute),
            "time" => Ok(ModalityKind::Temporal),
            other => Err(Error::Config(format!(
                "unknown modality {other:?} (expected rel, vis, attr or time)"
            ))),
        }
    }
}

/// Every tunable of the alignment pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub sinkhorn_k: usize,
    pub refine_rounds: usize,
    pub hops: usize,
    pub max_images: usize,
    pub embed_dim: usize,
    pub epsilon_v: f64,
    pub global_seed: u64,
    pub modalities: BTreeSet<ModalityKind>,
    /// Min-max scale each modality matrix to [0, 1] before summing.
    pub prescale: bool,
    /// L2-normalize image and attribute-name features before dot products.
    pub cosine: bool,
    /// Add mutual-argmax pseudo-seeds to the anchor set between rounds.
    pub accept_pseudo: bool,
    /// Never admit pseudo-seeds touching an entity of the held-out test seeds.
    pub holdout_test: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sinkhorn_k: 10,
            refine_rounds: 3,
            hops: 2,
            max_images: 6,
            embed_dim: 64,
            epsilon_v: 1e-6,
            global_seed: 0,
            modalities: ModalityKind::ALL.into_iter().collect(),
            prescale: true,
            cosine: true,
            accept_pseudo: true,
            holdout_test: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.sinkhorn_k < 1 {
            return fail("sinkhorn_k must be at least 1");
        }
        if self.refine_rounds < 1 {
            return fail("refine_rounds must be at least 1");
        }
        if self.hops < 1 {
            return fail("hops must be at least 1");
        }
        if self.max_images < 1 {
            return fail("max_images must be at least 1");
        }
        if self.embed_dim < 1 {
            return fail("embed_dim must be at least 1");
        }
        if !(self.epsilon_v > 0.0) || !self.epsilon_v.is_finite() {
            return fail("epsilon_v must be a positive finite number");
        }
        if self.modalities.is_empty() {
            return fail("at least one modality must be enabled");
        }
        Ok(())
    }

    pub fn enabled(&self, kind: ModalityKind) -> bool {
        self.modalities.contains(&kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!((c.sinkhorn_k, c.refine_rounds, c.max_images), (10, 3, 6));
        assert_eq!((c.hops, c.embed_dim, c.epsilon_v), (2, 64, 1e-6));
    }

    #[test]
    fn rejects_zero_counts() {
        for f in [
            |c: &mut PipelineConfig| c.sinkhorn_k = 0,
            |c: &mut PipelineConfig| c.refine_rounds = 0,
            |c: &mut PipelineConfig| c.hops = 0,
            |c: &mut PipelineConfig| c.epsilon_v = 0.0,
        ] {
            let mut c = PipelineConfig::default();
            f(&mut c);
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn modality_list_parsing() {
        let s = ModalityKind::parse_list("rel, vis,attr").unwrap();
        assert_eq!(s.len(), 3);
        assert!(!s.contains(&ModalityKind::Temporal));
        assert!(ModalityKind::parse_list("rel,text").is_err());
        assert!(ModalityKind::parse_list("").is_err());
    }
}
