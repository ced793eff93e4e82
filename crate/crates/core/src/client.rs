//! Simulated on-device fine-tuning: a node receives the server model, trains a
//! private copy on its shard and uploads the resulting weights.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{mix_rehearsal, mix_rehearsal_images, ImageDataset, TextCorpus};
use crate::nn::{checkpoint, sgd_step, FeedforwardClassifier, HiddenState, LmBatch, Momentum, Network, ParamVec, RecurrentLM, SgdConfig, TargetSpec};
use crate::rng::{stream, Rng};
use crate::{Error, Result};

// Independent rng streams per client so that e.g. rehearsal at lambda = 1
// consumes exactly the training randomness plain fine-tuning does.
const TRAIN_STREAM: u64 = 0;
const MIX_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rehearsal,
    Lwf,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    pub method: Method,
    /// Share of user data (rehearsal) or weight of the ground-truth label (LwF).
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one_usize")]
    pub epochs: usize,
    pub sgd: SgdConfig,
    #[serde(default)]
    pub seed: u64,
    /// Length of the contiguous general-text blocks mixed in by rehearsal;
    /// defaults to the model's BPTT length.
    #[serde(default)]
    pub rehearsal_block: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl ClientConfig {
    pub fn new(method: Method, lambda: f64, sgd: SgdConfig) -> Self {
        ClientConfig { method, lambda, epochs: 1, sgd, seed: 0, rehearsal_block: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("client epochs must be >= 1".into()));
        }
        let ok = match self.method {
            Method::Rehearsal => self.lambda > 0.0 && self.lambda <= 1.0,
            Method::Lwf => (0.0..=1.0).contains(&self.lambda),
            Method::Plain => true,
        };
        if !ok {
            return Err(Error::Config(format!("lambda {} invalid for {:?}", self.lambda, self.method)));
        }
        Ok(())
    }
}

/// What a node sends back after local training.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub node_id: usize,
    pub params: ParamVec,
    /// Tokens (LM) or examples (classifier) seen, summed over epochs.
    pub trained_on: usize,
    pub wall_seconds: f64,
    pub uploaded_bytes: u64,
}

impl ClientUpdate {
    fn new(node_id: usize, params: ParamVec, trained_on: usize, started: Instant) -> Self {
        let uploaded_bytes = checkpoint::serialized_size(params.layout());
        ClientUpdate { node_id, params, trained_on, wall_seconds: started.elapsed().as_secs_f64(), uploaded_bytes }
    }

    /// Equality on everything except timing.
    pub fn same_result(&self, other: &ClientUpdate) -> bool {
        self.node_id == other.node_id
            && self.trained_on == other.trained_on
            && self.uploaded_bytes == other.uploaded_bytes
            && self.params.values() == other.params.values()
    }
}

/// Outcome of a training loop.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub mean_loss: f64,
    pub trained_on: usize,
}

/// Truncated-BPTT training over one token stream.
///
/// The stream is cut into `batch_size` parallel columns that are walked in
/// windows of the model's BPTT length; hidden states carry across windows and
/// reset at each epoch.
pub fn train_lm(
    model: &RecurrentLM,
    tokens: &[u32],
    targets: &TargetSpec<'_, RecurrentLM>,
    epochs: usize,
    sgd: &SgdConfig,
    rng: &mut Rng,
) -> Result<Trained<RecurrentLM>> {
    sgd.validate()?;
    let n = tokens.len();
    if n < 2 {
        return Err(Error::Input(format!("token stream of length {n} is too short to train on")));
    }
    let mut batch = sgd.batch_size.min(n / 2);
    let mut col = n / batch;
    if col < 2 {
        batch = 1;
        col = n;
    }
    let columns: Vec<&[u32]> = (0..batch).map(|j| &tokens[j * col..(j + 1) * col]).collect();
    let teachers = match targets {
        TargetSpec::Hard => 0,
        TargetSpec::Mixed { teachers, .. } => teachers.len(),
    };
    let bptt = model.bptt();
    let mut student = model.clone();
    let mut momentum = Momentum::new();
    let (mut loss_sum, mut windows, mut trained_on) = (0.0, 0usize, 0usize);
    for _ in 0..epochs {
        let mut state = student.zero_state(batch);
        let mut teacher_states: Vec<HiddenState> = (0..teachers).map(|_| student.zero_state(batch)).collect();
        let mut t0 = 0;
        while t0 + 1 < col {
            let steps = bptt.min(col - 1 - t0);
            let win: Vec<&[u32]> = columns.iter().map(|c| &c[t0..t0 + steps + 1]).collect();
            let lb = LmBatch::from_windows(&win)?;
            let out = student.loss_and_grad(&lb, &state, targets, &mut teacher_states, Some(&mut *rng))?;
            sgd_step(student.params_mut(), &out.grad, sgd, &mut momentum)?;
            state = out.state;
            loss_sum += out.loss;
            windows += 1;
            trained_on += steps * batch;
            t0 += steps;
        }
    }
    Ok(Trained { model: student, mean_loss: loss_sum / windows.max(1) as f64, trained_on })
}

/// Minibatch training of the classifier, reshuffling examples every epoch.
pub fn train_classifier(
    model: &FeedforwardClassifier,
    data: &ImageDataset,
    targets: &TargetSpec<'_, FeedforwardClassifier>,
    epochs: usize,
    sgd: &SgdConfig,
    rng: &mut Rng,
) -> Result<Trained<FeedforwardClassifier>> {
    sgd.validate()?;
    if data.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    if data.dim() != model.input_dim() {
        return Err(Error::Layout(format!("data width {} but model expects {}", data.dim(), model.input_dim())));
    }
    let mut student = model.clone();
    let mut momentum = Momentum::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let (mut loss_sum, mut batches) = (0.0, 0usize);
    let mut x = Vec::with_capacity(sgd.batch_size * data.dim());
    let mut y = Vec::with_capacity(sgd.batch_size);
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(sgd.batch_size) {
            x.clear();
            y.clear();
            for &i in chunk {
                x.extend_from_slice(data.example(i));
                y.push(data.labels()[i]);
            }
            let (loss, grad) = student.loss_and_grad(&x, &y, targets, Some(&mut *rng))?;
            sgd_step(student.params_mut(), &grad, sgd, &mut momentum)?;
            loss_sum += loss;
            batches += 1;
        }
    }
    Ok(Trained { model: student, mean_loss: loss_sum / batches.max(1) as f64, trained_on: epochs * data.len() })
}

fn expect_method(cfg: &ClientConfig, method: Method) -> Result<()> {
    cfg.validate()?;
    if cfg.method != method {
        return Err(Error::Config(format!("{:?} configuration passed to {:?} training", cfg.method, method)));
    }
    Ok(())
}

/// Fine-tune on the shard mixed with uniformly drawn general text.
pub fn train_rehearsal(
    server: &RecurrentLM,
    node_id: usize,
    shard: &TextCorpus,
    general: &TextCorpus,
    cfg: &ClientConfig,
) -> Result<ClientUpdate> {
    expect_method(cfg, Method::Rehearsal)?;
    let started = Instant::now();
    let block = cfg.rehearsal_block.unwrap_or(server.bptt());
    let mixed = mix_rehearsal(shard, general, cfg.lambda, block, &mut stream(cfg.seed, MIX_STREAM))?;
    let out = train_lm(server, mixed.ids(), &TargetSpec::Hard, cfg.epochs, &cfg.sgd, &mut stream(cfg.seed, TRAIN_STREAM))?;
    Ok(ClientUpdate::new(node_id, out.model.params().clone(), out.trained_on, started))
}

/// Fine-tune on the shard with targets mixing the label and the frozen
/// incoming model's prediction.
pub fn train_lwf(server: &RecurrentLM, node_id: usize, shard: &TextCorpus, cfg: &ClientConfig) -> Result<ClientUpdate> {
    expect_method(cfg, Method::Lwf)?;
    let started = Instant::now();
    let reference = std::slice::from_ref(server);
    let targets = TargetSpec::Mixed { lambda: cfg.lambda, teachers: reference };
    let out = train_lm(server, shard.ids(), &targets, cfg.epochs, &cfg.sgd, &mut stream(cfg.seed, TRAIN_STREAM))?;
    Ok(ClientUpdate::new(node_id, out.model.params().clone(), out.trained_on, started))
}

/// Fine-tune on the shard alone with hard labels.
pub fn train_plain(server: &RecurrentLM, node_id: usize, shard: &TextCorpus, cfg: &ClientConfig) -> Result<ClientUpdate> {
    expect_method(cfg, Method::Plain)?;
    let started = Instant::now();
    let out = train_lm(server, shard.ids(), &TargetSpec::Hard, cfg.epochs, &cfg.sgd, &mut stream(cfg.seed, TRAIN_STREAM))?;
    Ok(ClientUpdate::new(node_id, out.model.params().clone(), out.trained_on, started))
}

/// Dispatch on `cfg.method`. Rehearsal needs the general corpus.
pub fn train_text_client(
    server: &RecurrentLM,
    node_id: usize,
    shard: &TextCorpus,
    general: Option<&TextCorpus>,
    cfg: &ClientConfig,
) -> Result<ClientUpdate> {
    if shard.vocab().len() != server.vocab_size() {
        return Err(Error::Layout("shard vocabulary does not match the model".into()));
    }
    match cfg.method {
        Method::Rehearsal => {
            let general = general.ok_or_else(|| Error::Config("rehearsal needs a general corpus".into()))?;
            train_rehearsal(server, node_id, shard, general, cfg)
        }
        Method::Lwf => train_lwf(server, node_id, shard, cfg),
        Method::Plain => train_plain(server, node_id, shard, cfg),
    }
}

/// Classifier counterpart of [`train_text_client`].
pub fn train_image_client(
    server: &FeedforwardClassifier,
    node_id: usize,
    shard: &ImageDataset,
    general: Option<&ImageDataset>,
    cfg: &ClientConfig,
) -> Result<ClientUpdate> {
    cfg.validate()?;
    let started = Instant::now();
    let mut rng = stream(cfg.seed, TRAIN_STREAM);
    let reference = std::slice::from_ref(server);
    let out = match cfg.method {
        Method::Rehearsal => {
            let general = general.ok_or_else(|| Error::Config("rehearsal needs a general dataset".into()))?;
            let mixed = mix_rehearsal_images(shard, general, cfg.lambda, &mut stream(cfg.seed, MIX_STREAM))?;
            train_classifier(server, &mixed, &TargetSpec::Hard, cfg.epochs, &cfg.sgd, &mut rng)?
        }
        Method::Lwf => {
            let targets = TargetSpec::Mixed { lambda: cfg.lambda, teachers: reference };
            train_classifier(server, shard, &targets, cfg.epochs, &cfg.sgd, &mut rng)?
        }
        Method::Plain => train_classifier(server, shard, &TargetSpec::Hard, cfg.epochs, &cfg.sgd, &mut rng)?,
    };
    Ok(ClientUpdate::new(node_id, out.model.params().clone(), out.trained_on, started))
}
