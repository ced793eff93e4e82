//! The server side of the protocol: collect client updates into rounds,
//! aggregate them by averaging or distillation, evaluate and log.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::client::{train_classifier, train_image_client, train_lm, train_text_client, ClientConfig, ClientUpdate};
use crate::corpus::{ImageDataset, Provenance, RawText, TextCorpus, Vocabulary};
use crate::exec::Execution;
use crate::metrics::{accuracy, kss, perplexity, CommLedger, KssConfig};
use crate::nn::{checkpoint, FeedforwardClassifier, Network, ParamVec, RecurrentLM, SgdConfig, TargetSpec};
use crate::rng::{derive, stream, Rng};
use crate::{Error, Result};

const SELECT_STREAM: u64 = 0;
const DISTILL_STREAM: u64 = 1;

/// FIFO of client updates tagged with the server version they started from.
/// A round is released once `k` updates for the current version are queued;
/// updates against older versions are dropped as stale.
#[derive(Debug)]
pub struct RoundQueue {
    k: usize,
    version: u64,
    pending: VecDeque<(u64, ClientUpdate)>,
    stale: usize,
}

impl RoundQueue {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("round size K must be >= 1".into()));
        }
        Ok(RoundQueue { k, version: 0, pending: VecDeque::new(), stale: 0 })
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn stale(&self) -> usize {
        self.stale
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn push(&mut self, base_version: u64, update: ClientUpdate) -> Result<()> {
        if base_version > self.version {
            return Err(Error::Protocol(format!(
                "update from server version {base_version}, current is {}",
                self.version
            )));
        }
        if base_version < self.version {
            self.stale += 1;
        } else {
            self.pending.push_back((base_version, update));
        }
        Ok(())
    }

    /// The next `k` updates if available. Releasing a round advances the
    /// server version.
    pub fn pop_round(&mut self) -> Option<Vec<ClientUpdate>> {
        if self.pending.len() < self.k {
            return None;
        }
        let round = self.pending.drain(..self.k).map(|(_, u)| u).collect();
        self.version += 1;
        let before = self.pending.len();
        self.pending.retain(|(v, _)| *v == self.version);
        self.stale += before - self.pending.len();
        Some(round)
    }
}

/// Unweighted mean of exactly `k` client models, folded in ascending node-id
/// order so the result does not depend on arrival order.
pub fn average_round(updates: &[ClientUpdate], k: usize) -> Result<ParamVec> {
    if updates.len() != k {
        return Err(Error::Protocol(format!("round expects {k} updates, got {}", updates.len())));
    }
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.node_id);
    ParamVec::mean(sorted.into_iter().map(|u| &u.params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Average,
    DistillReal,
    DistillGenerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cadence {
    /// One generated corpus for all epochs.
    #[default]
    Once,
    /// Regenerate from the current student before every epoch.
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub epochs: usize,
    #[serde(default)]
    pub generated_tokens: usize,
    #[serde(default)]
    pub cadence: Cadence,
    pub sgd: SgdConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationConfig {
    pub mode: AggregationMode,
    pub k: usize,
    #[serde(default)]
    pub distill: Option<DistillConfig>,
}

impl AggregationConfig {
    pub fn average(k: usize) -> Self {
        AggregationConfig { mode: AggregationMode::Average, k, distill: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("round size K must be >= 1".into()));
        }
        if self.mode != AggregationMode::Average {
            let d = self.distill.as_ref().ok_or_else(|| Error::Config("distillation settings missing".into()))?;
            d.sgd.validate()?;
            if d.epochs == 0 {
                return Err(Error::Config("distillation epochs must be >= 1".into()));
            }
            if self.mode == AggregationMode::DistillGenerated && d.generated_tokens == 0 {
                return Err(Error::Config("generated corpus size must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Concatenated samples from `model` until `tokens` tokens are collected.
pub fn generate_corpus(model: &RecurrentLM, vocab: Arc<Vocabulary>, tokens: usize, rng: &mut Rng) -> Result<TextCorpus> {
    const SEQ_LEN: usize = 50;
    const BATCH: usize = 32;
    if tokens == 0 {
        return Err(Error::Input("generated corpus size must be >= 1".into()));
    }
    let seed = rng.random::<u64>();
    let mut ids = Vec::with_capacity(tokens + SEQ_LEN * BATCH);
    let mut next = 0u64;
    while ids.len() < tokens {
        let want = (tokens - ids.len()).div_ceil(SEQ_LEN).min(BATCH);
        let mut rngs: Vec<Rng> = (0..want as u64).map(|i| stream(seed, next + i)).collect();
        next += want as u64;
        for s in model.sample_batch(SEQ_LEN, &mut rngs)? {
            ids.extend(s);
        }
    }
    ids.truncate(tokens);
    TextCorpus::from_ids(ids, vocab, Provenance::General)
}

/// Where the distillation student reads text from.
#[derive(Debug, Clone, Copy)]
pub enum DistillData<'a> {
    Real(&'a TextCorpus),
    Generated(&'a Arc<Vocabulary>),
}

/// Train a copy of `server` towards the teachers' mean prediction.
pub fn distill_round(
    server: &RecurrentLM,
    teachers: &[RecurrentLM],
    data: DistillData<'_>,
    cfg: &DistillConfig,
    rng: &mut Rng,
) -> Result<RecurrentLM> {
    if teachers.is_empty() {
        return Err(Error::Protocol("distillation needs at least one teacher".into()));
    }
    let targets = TargetSpec::Mixed { lambda: 0.0, teachers };
    match data {
        DistillData::Real(text) => Ok(train_lm(server, text.ids(), &targets, cfg.epochs, &cfg.sgd, rng)?.model),
        DistillData::Generated(vocab) => {
            let mut student = server.clone();
            let mut text = generate_corpus(&student, vocab.clone(), cfg.generated_tokens, rng)?;
            for epoch in 0..cfg.epochs {
                if epoch > 0 && cfg.cadence == Cadence::PerEpoch {
                    text = generate_corpus(&student, vocab.clone(), cfg.generated_tokens, rng)?;
                }
                student = train_lm(&student, text.ids(), &targets, 1, &cfg.sgd, rng)?.model;
            }
            Ok(student)
        }
    }
}

/// Metrics recorded after each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Evaluation {
    Text { user_ppl: f64, general_ppl: f64, user_kss: Option<f64>, general_kss: Option<f64> },
    Image { new_acc: f64, old_acc: f64 },
}

/// A fine-tuning problem: node data, rehearsal material and test sets.
pub trait FineTuneTask: Sync {
    type Model: Network;

    fn node_count(&self) -> usize;

    fn train_client(&self, server: &Self::Model, node: usize, cfg: &ClientConfig) -> Result<ClientUpdate>;

    fn evaluate(&self, model: &Self::Model) -> Result<Evaluation>;

    fn distill(&self, server: &Self::Model, teachers: &[Self::Model], cfg: &AggregationConfig, rng: &mut Rng) -> Result<Self::Model>;
}

/// Language-model fine-tuning: one text corpus per node.
#[derive(Debug, Clone)]
pub struct TextTask {
    pub nodes: Vec<TextCorpus>,
    pub general: Option<TextCorpus>,
    /// Held-out general text for distillation on real data.
    pub distill_text: Option<TextCorpus>,
    pub user_test: TextCorpus,
    pub general_test: TextCorpus,
    pub user_kss: Option<RawText>,
    pub general_kss: Option<RawText>,
    pub kss: KssConfig,
}

impl FineTuneTask for TextTask {
    type Model = RecurrentLM;

    fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn train_client(&self, server: &RecurrentLM, node: usize, cfg: &ClientConfig) -> Result<ClientUpdate> {
        train_text_client(server, node, &self.nodes[node], self.general.as_ref(), cfg)
    }

    fn evaluate(&self, model: &RecurrentLM) -> Result<Evaluation> {
        let vocab = self.user_test.vocab();
        let score = |text: &Option<RawText>| text.as_ref().map(|t| kss(model, t, vocab, &self.kss)).transpose();
        Ok(Evaluation::Text {
            user_ppl: perplexity(model, &self.user_test)?,
            general_ppl: perplexity(model, &self.general_test)?,
            user_kss: score(&self.user_kss)?,
            general_kss: score(&self.general_kss)?,
        })
    }

    fn distill(&self, server: &RecurrentLM, teachers: &[RecurrentLM], cfg: &AggregationConfig, rng: &mut Rng) -> Result<RecurrentLM> {
        let d = cfg.distill.as_ref().ok_or_else(|| Error::Config("distillation settings missing".into()))?;
        let data = match cfg.mode {
            AggregationMode::DistillReal => DistillData::Real(
                self.distill_text.as_ref().ok_or_else(|| Error::Config("distillation on real data needs held-out text".into()))?,
            ),
            _ => DistillData::Generated(self.user_test.vocab()),
        };
        distill_round(server, teachers, data, d, rng)
    }
}

/// Image fine-tuning on a new (e.g. pixel-permuted) task while tracking the
/// original one.
#[derive(Debug, Clone)]
pub struct ImageTask {
    pub nodes: Vec<ImageDataset>,
    pub general: Option<ImageDataset>,
    pub new_test: ImageDataset,
    pub old_test: ImageDataset,
}

impl FineTuneTask for ImageTask {
    type Model = FeedforwardClassifier;

    fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn train_client(&self, server: &FeedforwardClassifier, node: usize, cfg: &ClientConfig) -> Result<ClientUpdate> {
        train_image_client(server, node, &self.nodes[node], self.general.as_ref(), cfg)
    }

    fn evaluate(&self, model: &FeedforwardClassifier) -> Result<Evaluation> {
        Ok(Evaluation::Image { new_acc: accuracy(model, &self.new_test)?, old_acc: accuracy(model, &self.old_test)? })
    }

    fn distill(
        &self,
        server: &FeedforwardClassifier,
        teachers: &[FeedforwardClassifier],
        cfg: &AggregationConfig,
        rng: &mut Rng,
    ) -> Result<FeedforwardClassifier> {
        let d = cfg.distill.as_ref().ok_or_else(|| Error::Config("distillation settings missing".into()))?;
        if cfg.mode != AggregationMode::DistillReal {
            return Err(Error::Config("image tasks only distill on real data".into()));
        }
        let data = self.general.as_ref().ok_or_else(|| Error::Config("distillation needs general data".into()))?;
        let targets = TargetSpec::Mixed { lambda: 0.0, teachers };
        Ok(train_classifier(server, data, &targets, d.epochs, &d.sgd, rng)?.model)
    }
}

/// How nodes are drawn for each round.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSelection {
    /// Every node is used at most once, in an order shuffled once by the run seed.
    #[default]
    SingleUse,
    /// Each round draws K distinct nodes afresh, so nodes may recur across rounds.
    Resample,
    /// Fixed node lists per round; rounds may differ in size.
    Explicit(Vec<Vec<usize>>),
}

/// Draw the node lists for every round, each sorted ascending.
pub fn schedule(selection: &NodeSelection, nodes: usize, k: usize, rounds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut plan = match selection {
        NodeSelection::SingleUse => {
            if rounds * k > nodes {
                return Err(Error::Config(format!("{rounds} rounds of {k} need {} nodes, only {nodes} exist", rounds * k)));
            }
            let mut order: Vec<usize> = (0..nodes).collect();
            order.shuffle(&mut stream(seed, SELECT_STREAM));
            order.chunks(k).take(rounds).map(<[usize]>::to_vec).collect::<Vec<_>>()
        }
        NodeSelection::Resample => {
            if k > nodes {
                return Err(Error::Config(format!("round size {k} exceeds {nodes} nodes")));
            }
            let mut rng = stream(seed, SELECT_STREAM);
            (0..rounds).map(|_| index::sample(&mut rng, nodes, k).into_vec()).collect()
        }
        NodeSelection::Explicit(plan) => {
            if plan.len() != rounds {
                return Err(Error::Config(format!("schedule has {} rounds, run asks for {rounds}", plan.len())));
            }
            if let Some(bad) = plan.iter().flatten().find(|&&n| n >= nodes) {
                return Err(Error::Config(format!("scheduled node {bad} does not exist")));
            }
            plan.clone()
        }
    };
    for r in &mut plan {
        r.sort_unstable();
    }
    Ok(plan)
}

/// Client seed for `node` in `round`.
pub fn client_seed(run_seed: u64, round: usize, node: usize) -> u64 {
    derive(derive(run_seed, round as u64), node as u64)
}

/// One row of the training log. Round 0 is the starting model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub eval: Evaluation,
    pub node_ids: Vec<usize>,
    pub uploaded_bytes: u64,
    pub cumulative_bytes: u64,
    pub seed: u64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult<M> {
    pub model: M,
    pub logs: Vec<RoundLog>,
    pub ledger: CommLedger,
}

/// Shared parameters of a multi-round run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub client: ClientConfig,
    pub aggregation: AggregationConfig,
    pub rounds: usize,
    pub selection: NodeSelection,
    pub seed: u64,
    pub execution: Execution,
    /// Evaluate every round (otherwise only at the start and the end).
    pub evaluate_every_round: bool,
    /// Client learning rates by round; empty keeps `client.sgd`.
    pub lr_schedule: Vec<LrStage>,
}

/// Client learning rate for a run of consecutive rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrStage {
    pub rounds: usize,
    pub learning_rate: f64,
}

/// Learning rate for 1-based `round`; the last stage extends past the schedule.
pub fn scheduled_lr(schedule: &[LrStage], round: usize, default: f64) -> f64 {
    let mut end = 0;
    for stage in schedule {
        end += stage.rounds;
        if round <= end {
            return stage.learning_rate;
        }
    }
    schedule.last().map_or(default, |s| s.learning_rate)
}

/// Combine one round of updates into the next server model.
pub fn aggregate<T: FineTuneTask>(
    task: &T,
    server: &T::Model,
    updates: &[ClientUpdate],
    cfg: &AggregationConfig,
    rng: &mut Rng,
) -> Result<T::Model> {
    match cfg.mode {
        AggregationMode::Average => server.with_params(average_round(updates, updates.len())?),
        _ => {
            let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
            sorted.sort_by_key(|u| u.node_id);
            let teachers = sorted.iter().map(|u| server.with_params(u.params.clone())).collect::<Result<Vec<_>>>()?;
            task.distill(server, &teachers, cfg, rng)
        }
    }
}

/// Train one round's clients against `server`.
pub fn train_round<T: FineTuneTask>(
    task: &T,
    server: &T::Model,
    nodes: &[usize],
    cfg: &RunConfig,
    round: usize,
) -> Result<Vec<ClientUpdate>> {
    let mut base = cfg.client.clone();
    base.sgd.learning_rate = scheduled_lr(&cfg.lr_schedule, round, base.sgd.learning_rate);
    cfg.execution.try_map(nodes, |&node| {
        let client = ClientConfig { seed: client_seed(cfg.seed, round, node), ..base.clone() };
        task.train_client(server, node, &client)
    })
}

/// Repeated rounds of select, train, aggregate, evaluate.
pub fn run_rounds<T: FineTuneTask>(task: &T, initial: &T::Model, cfg: &RunConfig) -> Result<RunResult<T::Model>> {
    cfg.client.validate()?;
    cfg.aggregation.validate()?;
    let plan = schedule(&cfg.selection, task.node_count(), cfg.aggregation.k, cfg.rounds, cfg.seed)?;
    let mut ledger = CommLedger::new(checkpoint::serialized_size(initial.params().layout()));
    let started = Instant::now();
    let mut logs = vec![RoundLog {
        round: 0,
        eval: task.evaluate(initial)?,
        node_ids: Vec::new(),
        uploaded_bytes: 0,
        cumulative_bytes: 0,
        seed: cfg.seed,
        wall_seconds: 0.0,
    }];
    let mut model = initial.clone();
    for (r, nodes) in plan.iter().enumerate() {
        let round = r + 1;
        let updates = train_round(task, &model, nodes, cfg, round)?;
        let uploaded: u64 = updates.iter().map(|u| u.uploaded_bytes).sum();
        ledger.record_round(updates.len() as u64);
        let mut rng = stream(derive(cfg.seed, round as u64), DISTILL_STREAM);
        model = aggregate(task, &model, &updates, &cfg.aggregation, &mut rng)?;
        let eval = if cfg.evaluate_every_round || round == plan.len() {
            task.evaluate(&model)?
        } else {
            logs.last().expect("round 0 logged").eval
        };
        logs.push(RoundLog {
            round,
            eval,
            node_ids: nodes.clone(),
            uploaded_bytes: uploaded,
            cumulative_bytes: ledger.total_bytes(),
            seed: cfg.seed,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(RunResult { model, logs, ledger })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Round log as CSV; the metric columns depend on the task kind.
pub fn round_log_csv(logs: &[RoundLog]) -> String {
    let mut out = String::new();
    match logs.first().map(|l| l.eval) {
        Some(Evaluation::Image { .. }) => out.push_str("round,new_acc,old_acc,uploaded_bytes,cumulative_bytes,seed\n"),
        _ => out.push_str("round,user_ppl,general_ppl,user_kss,general_kss,uploaded_bytes,cumulative_bytes,seed\n"),
    }
    for l in logs {
        let metrics = match l.eval {
            Evaluation::Text { user_ppl, general_ppl, user_kss, general_kss } => {
                format!("{user_ppl},{general_ppl},{},{}", fmt_opt(user_kss), fmt_opt(general_kss))
            }
            Evaluation::Image { new_acc, old_acc } => format!("{new_acc},{old_acc}"),
        };
        out.push_str(&format!("{},{metrics},{},{},{}\n", l.round, l.uploaded_bytes, l.cumulative_bytes, l.seed));
    }
    out
}

pub fn write_round_log(logs: &[RoundLog], path: &Path) -> Result<()> {
    std::fs::write(path, round_log_csv(logs))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::Method;
    use crate::nn::{LmShape, SgdConfig};
    use crate::rng::seeded;
    use std::time::Instant;

    fn update(node_id: usize, params: ParamVec) -> ClientUpdate {
        let uploaded_bytes = checkpoint::serialized_size(params.layout());
        ClientUpdate { node_id, params, trained_on: 0, wall_seconds: 0.0, uploaded_bytes }
    }

    fn model() -> RecurrentLM {
        RecurrentLM::new(LmShape { vocab: 9, embed: 3, hidden: vec![4] }, 0.0, 4, &mut seeded(3)).unwrap()
    }

    #[test]
    fn averaging_identities() {
        let m = model();
        let p = m.params().clone();
        let same: Vec<ClientUpdate> = (0..7).map(|i| update(i, p.clone())).collect();
        assert_eq!(average_round(&same, 7).unwrap().values(), p.values());
        let zero = ParamVec::zeros(p.layout().clone());
        let half = average_round(&[update(0, zero), update(1, p.clone())], 2).unwrap();
        assert_eq!(half.values(), p.scaled(0.5).values());
        assert!(matches!(average_round(&same, 6), Err(Error::Protocol(_))));
    }

    #[test]
    fn averaging_ignores_arrival_order() {
        let mut rng = seeded(5);
        let layout = model().params().layout().clone();
        let mut ups: Vec<ClientUpdate> =
            (0..6).map(|i| update(i * 3, ParamVec::uniform_init(layout.clone(), 1.0, &mut rng))).collect();
        let a = average_round(&ups, 6).unwrap();
        ups.reverse();
        ups.swap(1, 4);
        assert_eq!(average_round(&ups, 6).unwrap().values(), a.values());
    }

    #[test]
    fn queue_releases_full_rounds_and_drops_stale() {
        let p = model().params().clone();
        let mut q = RoundQueue::new(2).unwrap();
        q.push(0, update(0, p.clone())).unwrap();
        assert!(q.pop_round().is_none());
        q.push(0, update(1, p.clone())).unwrap();
        q.push(0, update(2, p.clone())).unwrap();
        let r = q.pop_round().unwrap();
        assert_eq!(r.iter().map(|u| u.node_id).collect::<Vec<_>>(), [0, 1]);
        assert_eq!((q.version(), q.stale(), q.len()), (1, 1, 0));
        q.push(0, update(3, p.clone())).unwrap();
        assert_eq!(q.stale(), 2);
        assert!(matches!(q.push(5, update(4, p)), Err(Error::Protocol(_))));
    }

    #[test]
    fn single_use_schedule_never_repeats() {
        let plan = schedule(&NodeSelection::SingleUse, 50, 5, 10, 1).unwrap();
        let mut all: Vec<usize> = plan.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 50);
        assert!(matches!(schedule(&NodeSelection::SingleUse, 49, 5, 10, 1), Err(Error::Config(_))));
        let re = schedule(&NodeSelection::Resample, 8, 5, 10, 1).unwrap();
        assert!(re.iter().all(|r| r.len() == 5 && r.windows(2).all(|w| w[0] < w[1])));
    }

    #[test]
    fn distilling_from_the_start_model_with_zero_rate_is_a_no_op() {
        let m = model();
        let vocab = Arc::new(Vocabulary::from_words((0..7).map(|i| format!("t{i}"))).unwrap());
        let text = TextCorpus::from_ids((0..60).map(|i| (i % 9) as u32).collect(), vocab.clone(), Provenance::General).unwrap();
        let cfg = DistillConfig { epochs: 2, generated_tokens: 40, cadence: Cadence::PerEpoch, sgd: SgdConfig::new(0.0, 2) };
        let out = distill_round(&m, std::slice::from_ref(&m), DistillData::Real(&text), &cfg, &mut seeded(1)).unwrap();
        assert_eq!(out.params().values(), m.params().values());
        let out = distill_round(&m, std::slice::from_ref(&m), DistillData::Generated(&vocab), &cfg, &mut seeded(1)).unwrap();
        assert_eq!(out.params().values(), m.params().values());
    }

    #[test]
    fn generated_corpus_is_seeded_and_sized() {
        let m = model();
        let vocab = Arc::new(Vocabulary::from_words((0..7).map(|i| format!("t{i}"))).unwrap());
        let a = generate_corpus(&m, vocab.clone(), 123, &mut seeded(2)).unwrap();
        assert_eq!(a.len(), 123);
        assert_eq!(a, generate_corpus(&m, vocab, 123, &mut seeded(2)).unwrap());
    }

    #[test]
    fn no_op_clients_leave_the_model_unchanged() {
        let m = model();
        let vocab = Arc::new(Vocabulary::from_words((0..7).map(|i| format!("t{i}"))).unwrap());
        let corpus = |s: u32| TextCorpus::from_ids((0..40).map(|i| (i * s + 1) % 9).collect(), vocab.clone(), Provenance::User).unwrap();
        let task = TextTask {
            nodes: (1..=6).map(corpus).collect(),
            general: None,
            distill_text: None,
            user_test: corpus(2),
            general_test: corpus(3),
            user_kss: None,
            general_kss: None,
            kss: KssConfig::default(),
        };
        let cfg = RunConfig {
            client: ClientConfig::new(Method::Plain, 1.0, SgdConfig::new(0.0, 2)),
            aggregation: AggregationConfig::average(3),
            rounds: 1,
            selection: NodeSelection::SingleUse,
            seed: 7,
            execution: Execution::Sequential,
            evaluate_every_round: true,
            lr_schedule: Vec::new(),
        };
        let t = Instant::now();
        let out = run_rounds(&task, &m, &cfg).unwrap();
        assert!(t.elapsed().as_secs() < 10);
        assert_eq!(out.model.params().values(), m.params().values());
        assert_eq!(out.logs.len(), 2);
        let per_model = 8 * m.param_count() as u64 + checkpoint::header_size(m.params().layout());
        assert_eq!(out.logs[1].uploaded_bytes, 3 * per_model);
        let csv = round_log_csv(&out.logs);
        assert!(csv.starts_with("round,user_ppl,general_ppl,user_kss,general_kss,uploaded_bytes,cumulative_bytes,seed\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
