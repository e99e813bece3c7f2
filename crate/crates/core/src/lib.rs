//! Multi-modal entity alignment between two knowledge graphs.
//!
//! Each modality (relations, images, attributes, timestamps) yields an
//! entity-to-entity score matrix through a similarity path. The matrices are
//! summed, rescaled with Sinkhorn iterations, and the relational path is
//! refined with mutual-argmax pseudo-seeds over a few rounds.
//!
//! ```no_run
//! use std::path::Path;
//! use mmea::{kgio, pipeline, PipelineConfig};
//!
//! let config = PipelineConfig::default();
//! let dataset = kgio::load_dataset(Path::new("data/pair"), &config)?;
//! let run = pipeline::run(&dataset, &config, &Default::default(), &mut mmea::diag::NullSink)?;
//! println!("{:?}", run.report);
//! # Ok::<(), mmea::Error>(())
//! ```

pub mod cli;
pub mod config;
pub mod diag;
pub mod error;
pub mod evalrank;
pub mod fusion;
pub mod kgio;
pub mod matrix;
pub mod msp;
pub mod pipeline;
pub mod refine;
pub mod synth;

pub use config::{ModalityKind, PipelineConfig};
pub use error::{Error, Result};
pub use evalrank::EvalReport;
pub use kgio::{AlignmentSet, Dataset, FeatureTable, KgPair, Mmkg};
pub use matrix::DenseMatrix;
