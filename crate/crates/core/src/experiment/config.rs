use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ImageDataConfig, TextDataConfig};
use crate::client::{ClientConfig, Method};
use crate::metrics::Precision;
use crate::nn::{LmShape, SgdConfig};
use crate::server::{AggregationConfig, LrStage, NodeSelection};
use crate::{Error, Execution, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    LmFinetune,
    MnistPermuted,
    DpAudit,
    CommReport,
}

/// Recurrent model sizes; the vocabulary size comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmConfig {
    pub embed: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub dropout: f64,
    pub bptt: usize,
}

/// Hidden widths of the classifier; input and output sizes come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    /// One probability per weight layer (input dropout first). Empty means none.
    #[serde(default)]
    pub dropout: Vec<f64>,
}

impl ClassifierConfig {
    pub fn widths(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(&self.hidden);
        w.push(classes);
        w
    }

    pub fn dropout_or_zero(&self) -> Vec<f64> {
        if self.dropout.is_empty() {
            vec![0.0; self.hidden.len() + 1]
        } else {
            self.dropout.clone()
        }
    }
}

/// Base-model training on the general data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub sgd: SgdConfig,
    /// Learning-rate multiplier applied after every epoch.
    #[serde(default = "one")]
    pub lr_decay: f64,
    /// Further epochs with their own optimizer settings, run afterwards.
    #[serde(default)]
    pub then: Vec<PretrainStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainStage {
    pub epochs: usize,
    pub sgd: SgdConfig,
}

impl PretrainConfig {
    pub fn total_epochs(&self) -> usize {
        self.epochs + self.then.iter().map(|s| s.epochs).sum::<usize>()
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub client: ClientConfig,
    pub aggregation: AggregationConfig,
    pub rounds: usize,
    #[serde(default)]
    pub selection: NodeSelection,
    /// Run once per λ; empty means just `client.lambda`.
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    /// Run once per method; empty means just `client.method`.
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default = "yes")]
    pub evaluate_every_round: bool,
    #[serde(default)]
    pub lr_schedule: Vec<LrStage>,
    /// Include keystroke savings in text evaluations.
    #[serde(default = "yes")]
    pub kss: bool,
    /// Aggregation modes compared on one shared round of client updates.
    #[serde(default)]
    pub compare_aggregation: Vec<AggregationConfig>,
}

impl FinetuneConfig {
    /// Every (method, λ) run this config asks for, in output order.
    pub fn runs(&self) -> Vec<ClientConfig> {
        let methods = if self.methods.is_empty() { vec![self.client.method] } else { self.methods.clone() };
        let lambdas = if self.lambda_grid.is_empty() { vec![self.client.lambda] } else { self.lambda_grid.clone() };
        methods
            .iter()
            .flat_map(|&method| lambdas.iter().map(move |&lambda| (method, lambda)))
            .map(|(method, lambda)| ClientConfig { method, lambda, ..self.client.clone() })
            .collect()
    }
}

/// How the neighbouring user set is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    /// Drop one user.
    #[default]
    Removal,
    /// Swap one user for a user outside the set.
    Replacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpAuditConfig {
    /// Size of the user set the audited model is trained on.
    pub users: usize,
    /// Users per averaging round.
    pub k: usize,
    pub pairs: usize,
    pub samples: usize,
    pub length: usize,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    pub client: ClientConfig,
    #[serde(default)]
    pub adjacency: Adjacency,
}

fn default_deltas() -> Vec<f64> {
    vec![1e-4, 1e-5, 1e-6]
}

/// Model size for upload accounting: give exactly one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommConfig {
    #[serde(default)]
    pub param_count: Option<u64>,
    #[serde(default)]
    pub shape: Option<LmShape>,
    /// Size uploads as this checkpoint file.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub k: u64,
    pub rounds: usize,
    #[serde(default = "f32_precision")]
    pub precision: Precision,
    /// Append reported gradient-compression figures as reference rows.
    #[serde(default = "yes")]
    pub reference_rows: bool,
}

fn f32_precision() -> Precision {
    Precision::F32
}

/// Everything one experiment needs. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub text: Option<TextDataConfig>,
    #[serde(default)]
    pub image: Option<ImageDataConfig>,
    #[serde(default)]
    pub lm: Option<LmConfig>,
    #[serde(default)]
    pub classifier: Option<ClassifierConfig>,
    #[serde(default)]
    pub pretrain: Option<PretrainConfig>,
    /// Start from this checkpoint instead of pretraining.
    #[serde(default)]
    pub base_checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub finetune: Option<FinetuneConfig>,
    #[serde(default)]
    pub dp: Option<DpAuditConfig>,
    #[serde(default)]
    pub comm: Option<CommConfig>,
}

fn need<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Config(format!("missing `{what}` section")))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn text(&self) -> Result<&TextDataConfig> {
        need(&self.text, "text")
    }

    pub fn image(&self) -> Result<&ImageDataConfig> {
        need(&self.image, "image")
    }

    pub fn lm(&self) -> Result<&LmConfig> {
        need(&self.lm, "lm")
    }

    pub fn classifier(&self) -> Result<&ClassifierConfig> {
        need(&self.classifier, "classifier")
    }

    pub fn pretrain(&self) -> Result<&PretrainConfig> {
        need(&self.pretrain, "pretrain")
    }

    pub fn finetune(&self) -> Result<&FinetuneConfig> {
        need(&self.finetune, "finetune")
    }

    pub fn dp(&self) -> Result<&DpAuditConfig> {
        need(&self.dp, "dp")
    }

    pub fn comm(&self) -> Result<&CommConfig> {
        need(&self.comm, "comm")
    }

    /// The fields each scenario requires are present and sane.
    pub fn validate(&self) -> Result<()> {
        let base = || {
            if self.pretrain.is_none() && self.base_checkpoint.is_none() {
                return Err(Error::Config("need `pretrain` or `base_checkpoint`".into()));
            }
            if let Some(p) = &self.pretrain {
                p.sgd.validate()?;
                for stage in &p.then {
                    stage.sgd.validate()?;
                }
                if !(p.lr_decay > 0.0 && p.lr_decay <= 1.0) {
                    return Err(Error::Config(format!("lr_decay {} outside (0, 1]", p.lr_decay)));
                }
            }
            Ok(())
        };
        match self.scenario {
            Scenario::LmFinetune | Scenario::DpAudit => {
                self.text()?;
                let lm = self.lm()?;
                if lm.hidden.is_empty() || lm.embed == 0 || lm.bptt == 0 {
                    return Err(Error::Config("lm needs embed, at least one hidden layer and bptt >= 1".into()));
                }
                base()?;
            }
            Scenario::MnistPermuted => {
                self.image()?;
                self.classifier()?;
                base()?;
            }
            Scenario::CommReport => {
                let c = self.comm()?;
                let sources = [c.param_count.is_some(), c.shape.is_some(), c.checkpoint.is_some()];
                if sources.iter().filter(|&&s| s).count() != 1 {
                    return Err(Error::Config("comm needs exactly one of param_count, shape, checkpoint".into()));
                }
            }
        }
        match self.scenario {
            Scenario::LmFinetune | Scenario::MnistPermuted => {
                let f = self.finetune()?;
                for run in f.runs() {
                    run.validate()?;
                }
                f.aggregation.validate()?;
                for a in &f.compare_aggregation {
                    a.validate()?;
                }
            }
            Scenario::DpAudit => {
                let d = self.dp()?;
                d.client.validate()?;
                if d.k < 2 || d.users < d.k || d.pairs == 0 {
                    return Err(Error::Config("dp needs k >= 2, users >= k and at least one pair".into()));
                }
            }
            Scenario::CommReport => {}
        }
        Ok(())
    }
}
