//! Evaluation: perplexity, keystroke savings with top-k suggestions,
//! classification accuracy and upload accounting.

use serde::{Deserialize, Serialize};

use crate::corpus::{ImageDataset, RawText, TextCorpus, Vocabulary, EOS_ID};
use crate::nn::{argmax, checkpoint, FeedforwardClassifier, Network, RecurrentLM};
use crate::{Error, Result};

/// `exp` of the mean per-token negative log-likelihood of the whole stream,
/// with the recurrent state carried from the first token to the last.
pub fn perplexity(model: &RecurrentLM, test: &TextCorpus) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    if test.vocab().len() != model.vocab_size() {
        return Err(Error::Layout(format!(
            "test vocabulary has {} tokens, model {}",
            test.vocab().len(),
            model.vocab_size()
        )));
    }
    let mut state = model.zero_state(1);
    let lp = model.stream_log_prob(test.ids(), &mut state)?;
    Ok((-lp / test.len() as f64).exp())
}

/// Arithmetic mean of the general and user perplexities.
pub fn average_ppl(general_ppl: f64, user_ppl: f64) -> f64 {
    (general_ppl + user_ppl) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KssConfig {
    /// Length of the suggestion list.
    pub size: usize,
}

impl Default for KssConfig {
    fn default() -> Self {
        KssConfig { size: 3 }
    }
}

/// Source of next-word scores for the typing simulation.
pub trait NextWordScorer {
    /// For a sentence of `n` words, `n` rows of `V` scores: row `i` ranks the
    /// word at position `i` given the sentence start and the words before it.
    /// Higher is more likely; only the order matters.
    fn sentence_scores(&self, words: &[u32]) -> Result<Vec<Vec<f64>>>;
}

impl NextWordScorer for RecurrentLM {
    fn sentence_scores(&self, words: &[u32]) -> Result<Vec<Vec<f64>>> {
        if words.is_empty() {
            return Ok(Vec::new());
        }
        let mut inputs = Vec::with_capacity(words.len());
        inputs.push(EOS_ID);
        inputs.extend_from_slice(&words[..words.len() - 1]);
        let mut state = self.zero_state(1);
        let p = self.batch_probs(&inputs, 1, &mut state)?;
        Ok(p.chunks_exact(self.vocab_size()).map(<[f64]>::to_vec).collect())
    }
}

/// Character counts from a typing simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KssCounts {
    pub typed: u64,
    pub total: u64,
}

impl KssCounts {
    /// Percentage of characters saved.
    pub fn kss(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        (self.total - self.typed) as f64 / self.total as f64 * 100.0
    }
}

/// Characters typed for one word given the score row for its position.
///
/// Suggestions are checked before the first keypress and after each further
/// one; once the target shows up in the top `size` words sharing the typed
/// prefix, the rest of the word is free.
fn typed_for_word(target: &str, target_id: Option<u32>, scores: &[f64], vocab: &Vocabulary, size: usize) -> u64 {
    let chars = target.chars().count() as u64;
    let Some(target_id) = target_id else { return chars };
    // candidate order: score descending, ties to the lowest id
    let mut order: Vec<u32> = (0..vocab.len() as u32).filter(|&i| vocab.is_word(i)).collect();
    order.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    let boundaries: Vec<usize> = target.char_indices().map(|(i, _)| i).collect();
    for (typed, &end) in boundaries.iter().enumerate() {
        let prefix = &target[..end];
        let hit = order
            .iter()
            .filter(|&&i| vocab.token(i).starts_with(prefix))
            .take(size)
            .any(|&i| i == target_id);
        if hit {
            return typed as u64;
        }
    }
    chars
}

/// Keystroke saving rate over raw sentences: every word is typed in turn,
/// with suggestions conditioned on the sentence so far. Words outside the
/// vocabulary are typed in full.
pub fn kss_counts<S: NextWordScorer + ?Sized>(
    model: &S,
    text: &RawText,
    vocab: &Vocabulary,
    cfg: &KssConfig,
) -> Result<KssCounts> {
    if cfg.size == 0 {
        return Err(Error::Config("suggestion list size must be >= 1".into()));
    }
    let mut counts = KssCounts::default();
    for sentence in &text.sentences {
        let ids: Vec<u32> = sentence.iter().map(|w| vocab.encode_word(w)).collect();
        let scores = model.sentence_scores(&ids)?;
        for ((word, &id), row) in sentence.iter().zip(&ids).zip(&scores) {
            if row.len() != vocab.len() {
                return Err(Error::Layout(format!("{} scores for a vocabulary of {}", row.len(), vocab.len())));
            }
            let known = vocab.is_word(id).then_some(id);
            counts.total += word.chars().count() as u64;
            counts.typed += typed_for_word(word, known, row, vocab, cfg.size);
        }
    }
    Ok(counts)
}

pub fn kss<S: NextWordScorer + ?Sized>(model: &S, text: &RawText, vocab: &Vocabulary, cfg: &KssConfig) -> Result<f64> {
    Ok(kss_counts(model, text, vocab, cfg)?.kss())
}

/// Percentage of examples whose arg-max class equals the label.
pub fn accuracy(model: &FeedforwardClassifier, test: &ImageDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    const CHUNK: usize = 512;
    let k = model.classes();
    let mut correct = 0usize;
    for (start, labels) in (0..test.len()).step_by(CHUNK).zip(test.labels().chunks(CHUNK)) {
        let n = labels.len();
        let x = &test.features()[start * test.dim()..(start + n) * test.dim()];
        let p = model.predict_proba(x, n)?;
        correct += p.chunks_exact(k).zip(labels).filter(|(row, &y)| argmax(row) == y).count();
    }
    Ok(correct as f64 / test.len() as f64 * 100.0)
}

/// Bytes per parameter in upload accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    /// 32-bit floats, as deployed models are usually shipped.
    F32,
    /// 64-bit floats, as this crate stores them.
    F64,
}

impl Precision {
    pub fn bytes(self) -> u64 {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

/// Upload volume of a run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommLedger {
    pub model_bytes: u64,
    pub per_round: Vec<u64>,
    pub cumulative: Vec<u64>,
    pub uploads: u64,
}

impl CommLedger {
    pub fn new(model_bytes: u64) -> Self {
        CommLedger { model_bytes, ..Default::default() }
    }

    /// Record a round in which `uploads` nodes each sent one model.
    pub fn record_round(&mut self, uploads: u64) {
        let bytes = uploads * self.model_bytes;
        let total = self.cumulative.last().copied().unwrap_or(0) + bytes;
        self.per_round.push(bytes);
        self.cumulative.push(total);
        self.uploads += uploads;
    }

    pub fn total_bytes(&self) -> u64 {
        self.cumulative.last().copied().unwrap_or(0)
    }

    pub fn rounds(&self) -> usize {
        self.per_round.len()
    }
}

/// Ledger for `rounds` rounds of `k` uploads of a model with `param_count`
/// raw parameters.
pub fn comm_report(param_count: u64, k: u64, rounds: usize, precision: Precision) -> CommLedger {
    let mut ledger = CommLedger::new(param_count * precision.bytes());
    for _ in 0..rounds {
        ledger.record_round(k);
    }
    ledger
}

/// Same, with the model sized as its checkpoint file.
pub fn comm_report_serialized<M: Network>(model: &M, k: u64, rounds: usize) -> CommLedger {
    let mut ledger = CommLedger::new(checkpoint::serialized_size(model.params().layout()));
    for _ in 0..rounds {
        ledger.record_round(k);
    }
    ledger
}

pub const MIB: f64 = 1024.0 * 1024.0;
pub const GIB: f64 = MIB * 1024.0;
