use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{Adjacency, DpAuditConfig, ExperimentConfig, PretrainConfig, Scenario};
use super::output::{Manifest, OutputDir};
use super::{ImageData, TextData};
use crate::client::{train_classifier, train_lm, ClientConfig, Method};
use crate::metrics::{Precision, CommLedger, GIB, MIB};
use crate::nn::{checkpoint, FeedforwardClassifier, LmShape, Network, RecurrentLM, TargetSpec};
use crate::privacy::{dp_report, log_c_csv, DpReport};
use crate::rng::{derive, stream};
use crate::server::{
    aggregate, round_log_csv, run_rounds, schedule, train_round, AggregationMode, Evaluation, FineTuneTask, NodeSelection,
    RunConfig,
};
use crate::{Error, Result};

const INIT_STREAM: u64 = 10;
const PRETRAIN_TAG: u64 = 11;
const PAIR_STREAM: u64 = 12;
const DP_SAMPLE_TAG: u64 = 13;
const COMPARE_TAG: u64 = 14;

/// CLI subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Pretrain,
    Finetune,
    DpAudit,
    CommReport,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Pretrain => "pretrain",
            Command::Finetune => "finetune",
            Command::DpAudit => "dp-audit",
            Command::CommReport => "comm-report",
        }
    }

    fn accepts(self, scenario: Scenario) -> bool {
        use Scenario::*;
        match self {
            Command::Pretrain => matches!(scenario, LmFinetune | MnistPermuted | DpAudit),
            Command::Finetune => matches!(scenario, LmFinetune | MnistPermuted),
            Command::DpAudit => scenario == DpAudit,
            Command::CommReport => scenario == CommReport,
        }
    }
}

/// Run `command` and write its artifacts and manifest under `out`.
pub fn run(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    if !command.accepts(cfg.scenario) {
        return Err(Error::Config(format!("`{}` does not apply to scenario {:?}", command.name(), cfg.scenario)));
    }
    let mut dir = OutputDir::create(out)?;
    dir.write_json("config.json", cfg)?;
    match command {
        Command::Pretrain => cmd_pretrain(cfg, &mut dir)?,
        Command::Finetune => cmd_finetune(cfg, &mut dir)?,
        Command::DpAudit => cmd_dp_audit(cfg, &mut dir)?,
        Command::CommReport => cmd_comm_report(cfg, &mut dir)?,
    }
    dir.finish(command.name())
}

/// Evaluation after one pretraining epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub eval: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub epochs: usize,
    pub param_count: usize,
    /// Perplexity of the uniform model (text only).
    pub uniform_ppl: Option<f64>,
    pub eval: Evaluation,
}

pub fn init_lm(cfg: &ExperimentConfig, vocab: usize) -> Result<RecurrentLM> {
    let lm = cfg.lm()?;
    let shape = LmShape { vocab, embed: lm.embed, hidden: lm.hidden.clone() };
    RecurrentLM::new(shape, lm.dropout, lm.bptt, &mut stream(cfg.seed, INIT_STREAM))
}

pub fn init_classifier(cfg: &ExperimentConfig, dim: usize, classes: usize) -> Result<FeedforwardClassifier> {
    let c = cfg.classifier()?;
    FeedforwardClassifier::new(&c.widths(dim, classes), &c.dropout_or_zero(), &mut stream(cfg.seed, INIT_STREAM))
}

/// Epoch loop shared by both model kinds; `epoch_fn` trains one epoch.
fn pretrain_loop<M>(
    mut model: M,
    p: &PretrainConfig,
    seed: u64,
    mut epoch_fn: impl FnMut(&M, &crate::nn::SgdConfig, &mut crate::rng::Rng) -> Result<M>,
    mut log: impl FnMut(usize, &M) -> Result<()>,
) -> Result<M> {
    let mut plan = Vec::with_capacity(p.total_epochs());
    let mut sgd = p.sgd;
    for _ in 0..p.epochs {
        plan.push(sgd);
        sgd.learning_rate *= p.lr_decay;
    }
    for stage in &p.then {
        plan.extend(std::iter::repeat_n(stage.sgd, stage.epochs));
    }
    for (epoch, sgd) in plan.iter().enumerate() {
        model = epoch_fn(&model, sgd, &mut stream(derive(seed, PRETRAIN_TAG), epoch as u64))?;
        log(epoch + 1, &model)?;
    }
    Ok(model)
}

/// Train the base language model on the general corpus.
pub fn pretrain_lm(
    model: &RecurrentLM,
    data: &TextData,
    p: &PretrainConfig,
    seed: u64,
    log: impl FnMut(usize, &RecurrentLM) -> Result<()>,
) -> Result<RecurrentLM> {
    let train = |m: &RecurrentLM, sgd: &_, rng: &mut _| {
        Ok(train_lm(m, data.general_train.ids(), &TargetSpec::Hard, 1, sgd, rng)?.model)
    };
    pretrain_loop(model.clone(), p, seed, train, log)
}

/// Train the base classifier on the original task.
pub fn pretrain_classifier(
    model: &FeedforwardClassifier,
    data: &ImageData,
    p: &PretrainConfig,
    seed: u64,
    log: impl FnMut(usize, &FeedforwardClassifier) -> Result<()>,
) -> Result<FeedforwardClassifier> {
    let train = |m: &FeedforwardClassifier, sgd: &_, rng: &mut _| {
        Ok(train_classifier(m, &data.base_train, &TargetSpec::Hard, 1, sgd, rng)?.model)
    };
    pretrain_loop(model.clone(), p, seed, train, log)
}

fn epoch_csv(logs: &[EpochLog]) -> String {
    let mut out = String::new();
    for (i, l) in logs.iter().enumerate() {
        match l.eval {
            Evaluation::Text { user_ppl, general_ppl, .. } => {
                if i == 0 {
                    out.push_str("epoch,general_ppl,user_ppl\n");
                }
                out.push_str(&format!("{},{general_ppl},{user_ppl}\n", l.epoch));
            }
            Evaluation::Image { new_acc, old_acc } => {
                if i == 0 {
                    out.push_str("epoch,old_acc,new_acc\n");
                }
                out.push_str(&format!("{},{old_acc},{new_acc}\n", l.epoch));
            }
        }
    }
    out
}

/// Pretrain the text base model, writing `base.ckpt`, `vocab.txt` and the epoch log.
fn pretrain_text(cfg: &ExperimentConfig, data: &TextData, dir: &mut OutputDir) -> Result<RecurrentLM> {
    let quick = data.task(false, false);
    let mut logs = Vec::new();
    let init = init_lm(cfg, data.vocab.len())?;
    let model = pretrain_lm(&init, data, cfg.pretrain()?, cfg.seed, |epoch, m| {
        logs.push(EpochLog { epoch, eval: quick.evaluate(m)? });
        Ok(())
    })?;
    dir.write_checkpoint("base.ckpt", model.params())?;
    dir.write_text("vocab.txt", &(data.vocab.tokens().join("\n") + "\n"))?;
    dir.write_text("pretrain.csv", &epoch_csv(&logs))?;
    Ok(model)
}

fn pretrain_image(cfg: &ExperimentConfig, data: &ImageData, dir: &mut OutputDir) -> Result<FeedforwardClassifier> {
    let task = data.task(false);
    let mut logs = Vec::new();
    let init = init_classifier(cfg, data.base_train.dim(), 10)?;
    let model = pretrain_classifier(&init, data, cfg.pretrain()?, cfg.seed, |epoch, m| {
        logs.push(EpochLog { epoch, eval: task.evaluate(m)? });
        Ok(())
    })?;
    dir.write_checkpoint("base.ckpt", model.params())?;
    dir.write_text("pretrain.csv", &epoch_csv(&logs))?;
    Ok(model)
}

/// Base language model: the configured checkpoint, or pretrained here.
fn text_base(cfg: &ExperimentConfig, data: &TextData, dir: &mut OutputDir) -> Result<RecurrentLM> {
    match &cfg.base_checkpoint {
        Some(path) => {
            let lm = cfg.lm()?;
            let model = RecurrentLM::from_params(checkpoint::load(path)?, lm.dropout, lm.bptt)?;
            if model.vocab_size() != data.vocab.len() {
                return Err(Error::Layout(format!(
                    "checkpoint vocabulary {} differs from the data's {}",
                    model.vocab_size(),
                    data.vocab.len()
                )));
            }
            Ok(model)
        }
        None => pretrain_text(cfg, data, dir),
    }
}

fn image_base(cfg: &ExperimentConfig, data: &ImageData, dir: &mut OutputDir) -> Result<FeedforwardClassifier> {
    match &cfg.base_checkpoint {
        Some(path) => {
            let model = FeedforwardClassifier::from_params(checkpoint::load(path)?, &cfg.classifier()?.dropout_or_zero())?;
            if model.input_dim() != data.base_train.dim() {
                return Err(Error::Layout("checkpoint input width differs from the data".into()));
            }
            Ok(model)
        }
        None => pretrain_image(cfg, data, dir),
    }
}

fn cmd_pretrain(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<()> {
    cfg.pretrain()?;
    let summary = match cfg.scenario {
        Scenario::MnistPermuted => {
            let data = ImageData::build(cfg.image()?, cfg.seed)?;
            let model = pretrain_image(cfg, &data, dir)?;
            let eval = data.task(false).evaluate(&model)?;
            PretrainSummary { epochs: cfg.pretrain()?.total_epochs(), param_count: model.param_count(), uniform_ppl: None, eval }
        }
        _ => {
            let data = TextData::build(cfg.text()?, cfg.seed)?;
            let model = pretrain_text(cfg, &data, dir)?;
            let eval = data.task(false, true).evaluate(&model)?;
            let uniform_ppl = Some(data.vocab.len() as f64);
            PretrainSummary { epochs: cfg.pretrain()?.total_epochs(), param_count: model.param_count(), uniform_ppl, eval }
        }
    };
    dir.write_json("pretrain.json", &summary)
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Rehearsal => "rehearsal",
        Method::Lwf => "lwf",
        Method::Plain => "plain",
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Field-wise mean of evaluations of one kind.
pub fn mean_evaluation(evals: &[Evaluation]) -> Option<Evaluation> {
    let first = evals.first()?;
    Some(match first {
        Evaluation::Text { .. } => {
            let texts: Vec<_> = evals
                .iter()
                .filter_map(|e| match *e {
                    Evaluation::Text { user_ppl, general_ppl, user_kss, general_kss } => {
                        Some((user_ppl, general_ppl, user_kss, general_kss))
                    }
                    _ => None,
                })
                .collect();
            let opt = |f: fn(&(f64, f64, Option<f64>, Option<f64>)) -> Option<f64>| {
                texts.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| mean(v.into_iter()))
            };
            Evaluation::Text {
                user_ppl: mean(texts.iter().map(|t| t.0)),
                general_ppl: mean(texts.iter().map(|t| t.1)),
                user_kss: opt(|t| t.2),
                general_kss: opt(|t| t.3),
            }
        }
        Evaluation::Image { .. } => {
            let imgs: Vec<_> = evals
                .iter()
                .filter_map(|e| match *e {
                    Evaluation::Image { new_acc, old_acc } => Some((new_acc, old_acc)),
                    _ => None,
                })
                .collect();
            Evaluation::Image { new_acc: mean(imgs.iter().map(|t| t.0)), old_acc: mean(imgs.iter().map(|t| t.1)) }
        }
    })
}

/// Rounds averaged into [`RunSummary::tail_mean`].
pub const TAIL_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub lambda: f64,
    pub rounds: usize,
    pub start: Evaluation,
    pub end: Evaluation,
    /// Mean over the last rounds, when every round was evaluated.
    pub tail_mean: Option<Evaluation>,
    pub uploaded_bytes: u64,
    pub uploads: u64,
    pub rounds_csv: String,
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationRow {
    pub mode: AggregationMode,
    pub eval: Evaluation,
    /// Mean of general and user perplexity (text only).
    pub mean_ppl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSummary {
    pub base: Evaluation,
    pub runs: Vec<RunSummary>,
    pub aggregation: Vec<AggregationRow>,
}

fn mean_ppl(e: &Evaluation) -> Option<f64> {
    match *e {
        Evaluation::Text { user_ppl, general_ppl, .. } => Some(crate::metrics::average_ppl(general_ppl, user_ppl)),
        Evaluation::Image { .. } => None,
    }
}

/// Every configured (method, λ) run plus the aggregation comparison.
pub fn finetune_runs<T: FineTuneTask>(
    make_task: impl Fn(bool) -> T,
    base: &T::Model,
    cfg: &ExperimentConfig,
    dir: &mut OutputDir,
) -> Result<FinetuneSummary> {
    let f = cfg.finetune()?;
    let run_config = |client: ClientConfig, aggregation| RunConfig {
        client,
        aggregation,
        rounds: f.rounds,
        selection: f.selection.clone(),
        seed: cfg.seed,
        execution: cfg.execution,
        evaluate_every_round: f.evaluate_every_round,
        lr_schedule: f.lr_schedule.clone(),
    };
    let mut runs = Vec::new();
    let mut base_eval = None;
    for client in f.runs() {
        let (method, lambda) = (client.method, client.lambda);
        let task = make_task(method == Method::Rehearsal);
        let result = run_rounds(&task, base, &run_config(client, f.aggregation.clone()))?;
        let tag = format!("{}_{}", method_name(method), lambda);
        let rounds_csv = format!("rounds_{tag}.csv");
        let ckpt = format!("final_{tag}.ckpt");
        dir.write_text(&rounds_csv, &round_log_csv(&result.logs))?;
        dir.write_checkpoint(&ckpt, result.model.params())?;
        let evals: Vec<Evaluation> = result.logs.iter().skip(1).map(|l| l.eval).collect();
        let tail = &evals[evals.len().saturating_sub(TAIL_ROUNDS)..];
        base_eval.get_or_insert(result.logs[0].eval);
        runs.push(RunSummary {
            method,
            lambda,
            rounds: f.rounds,
            start: result.logs[0].eval,
            end: result.logs.last().expect("round 0 logged").eval,
            tail_mean: if f.evaluate_every_round { mean_evaluation(tail) } else { None },
            uploaded_bytes: result.ledger.total_bytes(),
            uploads: result.ledger.uploads,
            rounds_csv,
            checkpoint: ckpt,
        });
    }
    let mut aggregation = Vec::new();
    if let Some(first) = f.compare_aggregation.first() {
        let task = make_task(f.client.method == Method::Rehearsal);
        let run = run_config(f.client.clone(), first.clone());
        let plan = schedule(&f.selection, task.node_count(), first.k, 1, cfg.seed)?;
        let updates = train_round(&task, base, &plan[0], &run, 1)?;
        for a in &f.compare_aggregation {
            let mut rng = stream(derive(cfg.seed, COMPARE_TAG), 0);
            let model = aggregate(&task, base, &updates, a, &mut rng)?;
            let eval = task.evaluate(&model)?;
            aggregation.push(AggregationRow { mode: a.mode, eval, mean_ppl: mean_ppl(&eval) });
        }
    }
    let base = base_eval.expect("at least one run");
    Ok(FinetuneSummary { base, runs, aggregation })
}

fn summary_csv(s: &FinetuneSummary) -> String {
    let mut out = String::new();
    for (i, r) in s.runs.iter().enumerate() {
        let e = r.tail_mean.unwrap_or(r.end);
        match e {
            Evaluation::Text { user_ppl, general_ppl, user_kss, general_kss } => {
                if i == 0 {
                    out.push_str("method,lambda,general_ppl,user_ppl,average_ppl,general_kss,user_kss,uploaded_bytes\n");
                }
                let k = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{general_ppl},{user_ppl},{},{},{},{}\n",
                    method_name(r.method),
                    r.lambda,
                    crate::metrics::average_ppl(general_ppl, user_ppl),
                    k(general_kss),
                    k(user_kss),
                    r.uploaded_bytes
                ));
            }
            Evaluation::Image { new_acc, old_acc } => {
                if i == 0 {
                    out.push_str("method,lambda,new_acc,old_acc,uploaded_bytes\n");
                }
                out.push_str(&format!("{},{},{new_acc},{old_acc},{}\n", method_name(r.method), r.lambda, r.uploaded_bytes));
            }
        }
    }
    out
}

fn cmd_finetune(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<()> {
    let f = cfg.finetune()?;
    let summary = match cfg.scenario {
        Scenario::MnistPermuted => {
            let data = ImageData::build(cfg.image()?, cfg.seed)?;
            let base = image_base(cfg, &data, dir)?;
            finetune_runs(|r| data.task(r), &base, cfg, dir)?
        }
        _ => {
            let data = TextData::build(cfg.text()?, cfg.seed)?;
            let base = text_base(cfg, &data, dir)?;
            finetune_runs(|r| data.task(r, f.kss), &base, cfg, dir)?
        }
    };
    dir.write_text("summary.csv", &summary_csv(&summary))?;
    dir.write_json("summary.json", &summary)
}

/// Which user differs in one neighbouring pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    pub pair: usize,
    pub removed: usize,
    /// Stand-in user under replacement adjacency.
    pub added: Option<usize>,
}

/// The audited model and one neighbour per pair.
#[derive(Debug, Clone)]
pub struct DpModels {
    pub theta: RecurrentLM,
    pub neighbours: Vec<RecurrentLM>,
    pub specs: Vec<PairSpec>,
}

/// Train the model on users `0..dp.users` and each neighbour on the same
/// schedule with one user removed or replaced.
pub fn train_dp_pairs(data: &TextData, base: &RecurrentLM, dp: &DpAuditConfig, seed: u64, exec: crate::Execution) -> Result<DpModels> {
    let nodes = data.user_nodes.len();
    let spare = dp.adjacency == Adjacency::Replacement;
    if dp.users > nodes || (spare && dp.users == nodes) {
        return Err(Error::Config(format!("{} users requested but only {nodes} shards exist", dp.users)));
    }
    let plan: Vec<Vec<usize>> = (0..dp.users).collect::<Vec<_>>().chunks(dp.k).map(<[usize]>::to_vec).collect();
    let mut rng = stream(seed, PAIR_STREAM);
    let specs: Vec<PairSpec> = (0..dp.pairs)
        .map(|pair| PairSpec {
            pair,
            removed: rng.random_range(0..dp.users),
            added: spare.then(|| rng.random_range(dp.users..nodes)),
        })
        .collect();
    let task = data.task(dp.client.method == Method::Rehearsal, false);
    let train = |plan: Vec<Vec<usize>>| {
        let run = RunConfig {
            client: dp.client.clone(),
            aggregation: crate::server::AggregationConfig::average(dp.k),
            rounds: plan.len(),
            selection: NodeSelection::Explicit(plan),
            seed,
            execution: exec,
            evaluate_every_round: false,
            lr_schedule: Vec::new(),
        };
        Ok::<_, Error>(run_rounds(&task, base, &run)?.model)
    };
    let theta = train(plan.clone())?;
    let neighbours = exec.try_map(&specs, |s| {
        let p = plan
            .iter()
            .map(|r| r.iter().filter_map(|&n| if n == s.removed { s.added } else { Some(n) }).collect())
            .collect();
        train(p)
    })?;
    Ok(DpModels { theta, neighbours, specs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpAuditSummary {
    pub pairs: Vec<PairSpec>,
    pub samples: usize,
    pub length: usize,
    pub report: DpReport,
}

/// Pair training plus the ratio-tail report.
pub fn dp_audit(data: &TextData, base: &RecurrentLM, dp: &DpAuditConfig, seed: u64, exec: crate::Execution) -> Result<(DpModels, DpAuditSummary, Vec<crate::privacy::RatioSample>)> {
    let models = train_dp_pairs(data, base, dp, seed, exec)?;
    let pairs: Vec<(RecurrentLM, RecurrentLM)> = models.neighbours.iter().map(|n| (models.theta.clone(), n.clone())).collect();
    let (report, samples) = dp_report(&pairs, &dp.deltas, dp.samples, dp.length, derive(seed, DP_SAMPLE_TAG), exec)?;
    let summary = DpAuditSummary { pairs: models.specs.clone(), samples: dp.samples, length: dp.length, report };
    Ok((models, summary, samples))
}

fn cmd_dp_audit(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<()> {
    let dp = cfg.dp()?;
    let data = TextData::build(cfg.text()?, cfg.seed)?;
    let base = text_base(cfg, &data, dir)?;
    let (models, summary, samples) = dp_audit(&data, &base, dp, cfg.seed, cfg.execution)?;
    dir.write_checkpoint("theta.ckpt", models.theta.params())?;
    for (i, (m, s)) in models.neighbours.iter().zip(&samples).enumerate() {
        dir.write_checkpoint(&format!("theta_prime_{i}.ckpt"), m.params())?;
        dir.write_text(&format!("log_c_pair{i}.csv"), &log_c_csv(s))?;
    }
    dir.write_json("dp_report.json", &summary)
}

/// Reported figures for gradient compression, listed for comparison only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub source: String,
    pub scheme: String,
    pub task: String,
    pub quality: String,
    pub uploaded: String,
    pub uploads: f64,
}

pub fn reference_rows() -> Vec<ReferenceRow> {
    let row = |task: &str, quality: &str, uploaded: &str, uploads: f64| ReferenceRow {
        source: "literature value, not computed".into(),
        scheme: "deep gradient compression".into(),
        task: task.into(),
        quality: quality.into(),
        uploaded: uploaded.into(),
        uploads,
    };
    vec![
        row("PTB language model", "perplexity 72.24", "21.85 Gb", 5.3e4),
        row("CIFAR-10 ResNet-110", "accuracy 93.20%", ">= 710.74 Mb", 6.4e4),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommReport {
    /// Raw parameters when the size is computed from a count or shape.
    pub param_count: Option<u64>,
    /// Bytes per parameter; absent when sized as a checkpoint file.
    pub precision: Option<Precision>,
    pub k: u64,
    pub rounds: usize,
    pub model_bytes: u64,
    pub model_mib: f64,
    pub per_round_bytes: u64,
    pub per_round_gib: f64,
    pub total_bytes: u64,
    pub total_gib: f64,
    pub uploads: u64,
    pub reference: Vec<ReferenceRow>,
}

/// Upload accounting from the `comm` section alone.
pub fn comm_report(cfg: &ExperimentConfig) -> Result<(CommReport, CommLedger)> {
    let c = cfg.comm()?;
    let (param_count, precision, model_bytes) = match (&c.param_count, &c.shape, &c.checkpoint) {
        (Some(p), None, None) => (Some(*p), Some(c.precision), p * c.precision.bytes()),
        (None, Some(s), None) => {
            let p = s.param_count() as u64;
            (Some(p), Some(c.precision), p * c.precision.bytes())
        }
        (None, None, Some(path)) => {
            let params = checkpoint::load(path)?;
            (None, None, checkpoint::serialized_size(params.layout()))
        }
        _ => return Err(Error::Config("comm needs exactly one of param_count, shape, checkpoint".into())),
    };
    let mut ledger = CommLedger::new(model_bytes);
    for _ in 0..c.rounds {
        ledger.record_round(c.k);
    }
    let per_round = model_bytes * c.k;
    let report = CommReport {
        param_count,
        precision,
        k: c.k,
        rounds: c.rounds,
        model_bytes,
        model_mib: model_bytes as f64 / MIB,
        per_round_bytes: per_round,
        per_round_gib: per_round as f64 / GIB,
        total_bytes: ledger.total_bytes(),
        total_gib: ledger.total_bytes() as f64 / GIB,
        uploads: ledger.uploads,
        reference: if c.reference_rows { reference_rows() } else { Vec::new() },
    };
    Ok((report, ledger))
}

fn cmd_comm_report(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<()> {
    let (report, ledger) = comm_report(cfg)?;
    let mut csv = String::from("round,bytes,cumulative_bytes\n");
    for (r, (b, c)) in ledger.per_round.iter().zip(&ledger.cumulative).enumerate() {
        csv.push_str(&format!("{},{b},{c}\n", r + 1));
    }
    dir.write_text("comm_rounds.csv", &csv)?;
    dir.write_json("comm_report.json", &report)
}
