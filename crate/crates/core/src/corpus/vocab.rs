use std::collections::HashMap;
use std::path::Path;

use crate::{Error, Result};

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";
pub const UNK_ID: u32 = 0;
pub const EOS_ID: u32 = 1;

/// Token <-> id bijection. Ids 0 and 1 are the out-of-vocabulary and
/// sentence-boundary tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// From an explicit token list; the two reserved tokens are prepended.
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens = vec![UNK.to_string(), EOS.to_string()];
        let mut index = HashMap::new();
        index.insert(UNK.to_string(), UNK_ID);
        index.insert(EOS.to_string(), EOS_ID);
        for w in words {
            let w = w.into();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid token {w:?}")));
            }
            if index.contains_key(&w) {
                return Err(Error::Input(format!("duplicate token {w:?}")));
            }
            index.insert(w.clone(), tokens.len() as u32);
            tokens.push(w);
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Id of `word`, falling back to the out-of-vocabulary token.
    pub fn encode_word(&self, word: &str) -> u32 {
        self.id(word).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// True for ordinary words, false for the reserved tokens.
    pub fn is_word(&self, id: u32) -> bool {
        id > EOS_ID && (id as usize) < self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i)).collect()
    }

    /// One token per line, reserved tokens included.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some(UNK) || lines.next() != Some(EOS) {
            return Err(Error::Format("vocabulary file must start with <unk> and <eos>".into()));
        }
        Vocabulary::from_words(lines.map(str::to_string))
    }
}

/// The `max_size - 2` most frequent whitespace tokens of `text` plus the two
/// reserved tokens. Frequency ties are broken lexicographically.
pub fn build_vocab(text: &str, max_size: usize) -> Result<Vocabulary> {
    if max_size < 3 {
        return Err(Error::Config(format!("vocabulary size {max_size} cannot hold OOV, boundary and a word")));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in text.split_whitespace() {
        if tok != UNK && tok != EOS {
            *counts.entry(tok).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Input("no tokens to build a vocabulary from".into()));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size - 2);
    Vocabulary::from_words(ranked.into_iter().map(|(w, _)| w.to_string()))
}
