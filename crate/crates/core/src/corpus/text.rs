use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, EOS_ID};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    General,
    User,
}

/// Whitespace-tokenized text, one sentence per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawText {
    pub sentences: Vec<Vec<String>>,
}

impl RawText {
    pub fn parse(text: &str) -> Self {
        let sentences = text
            .lines()
            .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect();
        RawText { sentences }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn select(&self, indices: &[usize]) -> RawText {
        RawText { sentences: indices.iter().map(|&i| self.sentences[i].clone()).collect() }
    }

    /// Split off the last `count` sentences.
    pub fn split_tail(mut self, count: usize) -> (RawText, RawText) {
        let at = self.sentences.len().saturating_sub(count);
        let tail = self.sentences.split_off(at);
        (self, RawText { sentences: tail })
    }
}

/// Token-id stream over a shared vocabulary. Sentences are terminated by the
/// boundary token.
#[derive(Debug, Clone, PartialEq)]
pub struct TextCorpus {
    vocab: Arc<Vocabulary>,
    ids: Vec<u32>,
    provenance: Provenance,
}

impl TextCorpus {
    pub fn encode(raw: &RawText, vocab: Arc<Vocabulary>, provenance: Provenance) -> Self {
        let mut ids = Vec::with_capacity(raw.token_count() + raw.len());
        for s in &raw.sentences {
            ids.extend(s.iter().map(|w| vocab.encode_word(w)));
            ids.push(EOS_ID);
        }
        TextCorpus { vocab, ids, provenance }
    }

    pub fn from_ids(ids: Vec<u32>, vocab: Arc<Vocabulary>, provenance: Provenance) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= vocab.len()) {
            return Err(Error::Input(format!("token id {bad} outside vocabulary of {}", vocab.len())));
        }
        Ok(TextCorpus { vocab, ids, provenance })
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn shares_vocab(&self, other: &TextCorpus) -> bool {
        Arc::ptr_eq(&self.vocab, &other.vocab) || *self.vocab == *other.vocab
    }

    /// Approximate UTF-8 size of the decoded text.
    pub fn byte_size(&self) -> u64 {
        self.ids
            .iter()
            .map(|&i| if i == EOS_ID { 1 } else { self.vocab.token(i).len() as u64 + 1 })
            .sum()
    }
}

/// Random rehearsal: the whole user stream plus contiguous blocks of the
/// general stream, so that user tokens make up a `lambda` fraction.
///
/// The general portion is `user_len * (1 - lambda) / lambda` tokens, drawn as
/// uniformly placed blocks of `block` tokens. User and general blocks are then
/// shuffled together. `lambda = 1` returns the user corpus unchanged.
pub fn mix_rehearsal(
    user: &TextCorpus,
    general: &TextCorpus,
    lambda: f64,
    block: usize,
    rng: &mut Rng,
) -> Result<TextCorpus> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Config(format!("rehearsal lambda {lambda} outside (0, 1]")));
    }
    if block == 0 {
        return Err(Error::Config("rehearsal block length must be >= 1".into()));
    }
    if !user.shares_vocab(general) {
        return Err(Error::Layout("user and general corpora use different vocabularies".into()));
    }
    if lambda == 1.0 {
        return Ok(user.clone());
    }
    if general.len() < block {
        return Err(Error::Input(format!(
            "general corpus of {} tokens is shorter than one block of {block}",
            general.len()
        )));
    }
    let wanted = user.len() as f64 * (1.0 - lambda) / lambda;
    let general_blocks = (wanted / block as f64).round() as usize;
    let mut blocks: Vec<&[u32]> = user.ids.chunks(block).collect();
    for _ in 0..general_blocks {
        let start = rng.random_range(0..=general.len() - block);
        blocks.push(&general.ids[start..start + block]);
    }
    blocks.shuffle(rng);
    let ids = blocks.concat();
    Ok(TextCorpus { vocab: user.vocab.clone(), ids, provenance: Provenance::User })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use crate::rng::seeded;

    fn corpora(user_len: usize) -> (TextCorpus, TextCorpus) {
        let vocab = Arc::new(build_vocab("a b c d e f g", 10).unwrap());
        let user = TextCorpus::from_ids((0..user_len).map(|i| 2 + (i % 3) as u32).collect(), vocab.clone(), Provenance::User).unwrap();
        let general = TextCorpus::from_ids((0..5000).map(|i| 5 + (i % 4) as u32).collect(), vocab, Provenance::General).unwrap();
        (user, general)
    }

    #[test]
    fn lambda_one_is_identity() {
        let (u, g) = corpora(1000);
        assert_eq!(mix_rehearsal(&u, &g, 1.0, 20, &mut seeded(1)).unwrap(), u);
    }

    #[test]
    fn half_doubles_the_stream() {
        let (u, g) = corpora(10_000);
        let m = mix_rehearsal(&u, &g, 0.5, 20, &mut seeded(2)).unwrap();
        assert_eq!(m.len(), 20_000);
        let from_user = m.ids().iter().filter(|&&t| t < 5).count();
        assert_eq!(from_user, 10_000);
    }

    #[test]
    fn user_fraction_within_one_block() {
        for (lambda, len) in [(0.25, 997), (0.75, 1234), (0.6, 50), (0.1, 333)] {
            let (u, g) = corpora(len);
            let block = 20;
            let m = mix_rehearsal(&u, &g, lambda, block, &mut seeded(3)).unwrap();
            let target = len as f64 / lambda;
            assert!((m.len() as f64 - target).abs() <= block as f64, "{lambda} {len} {}", m.len());
            let from_user = m.ids().iter().filter(|&&t| t < 5).count();
            assert_eq!(from_user, len);
        }
    }

    #[test]
    fn mixing_is_seeded() {
        let (u, g) = corpora(500);
        let a = mix_rehearsal(&u, &g, 0.5, 20, &mut seeded(4)).unwrap();
        let b = mix_rehearsal(&u, &g, 0.5, 20, &mut seeded(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        let (u, g) = corpora(100);
        assert!(matches!(mix_rehearsal(&u, &g, 0.0, 20, &mut seeded(1)), Err(Error::Config(_))));
        assert!(matches!(mix_rehearsal(&u, &g, 1.5, 20, &mut seeded(1)), Err(Error::Config(_))));
        let other = Arc::new(build_vocab("x y", 5).unwrap());
        let g2 = TextCorpus::from_ids(vec![2, 3], other, Provenance::General).unwrap();
        assert!(matches!(mix_rehearsal(&u, &g2, 0.5, 20, &mut seeded(1)), Err(Error::Layout(_))));
    }

    #[test]
    fn encoding_appends_boundaries() {
        let raw = RawText::parse("the cat\n\nsat zebra\n");
        let vocab = Arc::new(build_vocab("the cat sat", 10).unwrap());
        let c = TextCorpus::encode(&raw, vocab.clone(), Provenance::General);
        assert_eq!(vocab.decode(c.ids()), ["the", "cat", "<eos>", "sat", "<unk>", "<eos>"]);
    }
}
