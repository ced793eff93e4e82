//! Batch experiments: data preparation, base-model pretraining, fine-tuning
//! runs, privacy audits and upload reports.

mod commands;
mod config;
mod data;
mod output;

pub use commands::*;
pub use config::{
    Adjacency, ClassifierConfig, CommConfig, DpAuditConfig, ExperimentConfig, FinetuneConfig, LmConfig, PretrainConfig, PretrainStage, Scenario,
};
pub use data::{ImageData, ImageDataConfig, TextData, TextDataConfig};
pub use output::{verify_manifest, Manifest, ManifestEntry, OutputDir, MANIFEST};
