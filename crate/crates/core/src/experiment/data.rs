use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::synth_text::{generate_mixed, Lexicon, LexiconConfig, StyleModel};
use crate::corpus::{build_vocab, permute_pixels, shard_indices, synth_image, ImageDataset, Provenance, RawText, TextCorpus, Vocabulary};
use crate::metrics::KssConfig;
use crate::rng::stream;
use crate::server::{ImageTask, TextTask};
use crate::{Error, Result};

/// Where text comes from and how it is split. Without paths, both registers
/// are generated from the synthetic lexicon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextDataConfig {
    #[serde(default)]
    pub lexicon: LexiconConfig,
    #[serde(default)]
    pub general_path: Option<PathBuf>,
    #[serde(default)]
    pub user_path: Option<PathBuf>,
    pub general_sentences: usize,
    pub nodes: usize,
    pub sentences_per_node: usize,
    pub test_sentences: usize,
    pub kss_sentences: usize,
    #[serde(default)]
    pub distill_sentences: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub kss: KssConfig,
    /// Share of informal sentences in synthetic general text.
    #[serde(default = "default_general_mix")]
    pub general_mix: f64,
    /// Share of formal sentences in synthetic user text.
    #[serde(default = "default_user_mix")]
    pub user_mix: f64,
}

fn default_general_mix() -> f64 {
    0.05
}

fn default_user_mix() -> f64 {
    0.2
}

impl TextDataConfig {
    /// A few minutes of single-core training.
    pub fn desk() -> Self {
        TextDataConfig {
            lexicon: LexiconConfig::default(),
            general_path: None,
            user_path: None,
            general_sentences: 24_000,
            nodes: 150,
            sentences_per_node: 40,
            test_sentences: 600,
            kss_sentences: 200,
            distill_sentences: 1000,
            vocab_size: 2000,
            kss: KssConfig::default(),
            general_mix: default_general_mix(),
            user_mix: default_user_mix(),
        }
    }
}

/// Encoded text for one experiment.
#[derive(Debug, Clone)]
pub struct TextData {
    pub vocab: Arc<Vocabulary>,
    pub general_train: TextCorpus,
    pub general_test: TextCorpus,
    pub distill: TextCorpus,
    pub user_test: TextCorpus,
    pub user_nodes: Vec<TextCorpus>,
    pub user_node_sentences: Vec<Vec<usize>>,
    pub user_kss: RawText,
    pub general_kss: RawText,
    pub kss: KssConfig,
}

fn take(raw: &RawText, from: usize, count: usize, what: &str) -> Result<RawText> {
    if from + count > raw.len() {
        return Err(Error::Input(format!("{what}: need {} sentences, have {}", from + count, raw.len())));
    }
    Ok(RawText { sentences: raw.sentences[from..from + count].to_vec() })
}

impl TextData {
    pub fn build(cfg: &TextDataConfig, seed: u64) -> Result<Self> {
        if cfg.nodes == 0 || cfg.sentences_per_node == 0 || cfg.test_sentences == 0 {
            return Err(Error::Config("text data needs nodes, shard sizes and a test set".into()));
        }
        let user_train_len = cfg.nodes * cfg.sentences_per_node;
        let (general, user) = match (&cfg.general_path, &cfg.user_path) {
            (Some(g), Some(u)) => (RawText::load(g)?, RawText::load(u)?),
            (None, None) => {
                let lex = Lexicon::generate(&cfg.lexicon)?;
                let g = StyleModel::new(&lex, Provenance::General, cfg.lexicon.seed);
                let u = StyleModel::new(&lex, Provenance::User, cfg.lexicon.seed);
                let general_total = cfg.general_sentences + cfg.distill_sentences + cfg.test_sentences;
                (
                    generate_mixed(&g, &u, cfg.general_mix, general_total, &mut stream(seed, 1)),
                    generate_mixed(&u, &g, cfg.user_mix, user_train_len + cfg.test_sentences, &mut stream(seed, 2)),
                )
            }
            _ => return Err(Error::Config("give both text paths or neither".into())),
        };
        let general_train = take(&general, 0, cfg.general_sentences, "general text")?;
        let distill = take(&general, cfg.general_sentences, cfg.distill_sentences, "general text")?;
        let general_test = take(&general, cfg.general_sentences + cfg.distill_sentences, cfg.test_sentences, "general text")?;
        let user_train = take(&user, 0, user_train_len, "user text")?;
        let user_test = take(&user, user_train_len, cfg.test_sentences, "user text")?;

        let vocab = Arc::new(build_vocab(&(general_train.to_text() + &user_train.to_text()), cfg.vocab_size)?);
        let shards = shard_indices(user_train.len(), cfg.nodes, cfg.sentences_per_node, &mut stream(seed, 3))?;
        let encode = |raw: &RawText, p| TextCorpus::encode(raw, vocab.clone(), p);
        let kss_count = cfg.kss_sentences.min(cfg.test_sentences);
        Ok(TextData {
            general_train: encode(&general_train, Provenance::General),
            general_test: encode(&general_test, Provenance::General),
            distill: encode(&distill, Provenance::General),
            user_test: encode(&user_test, Provenance::User),
            user_nodes: shards.iter().map(|ix| encode(&user_train.select(ix), Provenance::User)).collect(),
            user_node_sentences: shards,
            user_kss: take(&user_test, 0, kss_count, "user test")?,
            general_kss: take(&general_test, 0, kss_count, "general test")?,
            kss: cfg.kss,
            vocab,
        })
    }

    /// Fine-tuning task over these nodes. `rehearsal` supplies general text
    /// to clients.
    pub fn task(&self, rehearsal: bool, with_kss: bool) -> TextTask {
        TextTask {
            nodes: self.user_nodes.clone(),
            general: rehearsal.then(|| self.general_train.clone()),
            distill_text: (!self.distill.is_empty()).then(|| self.distill.clone()),
            user_test: self.user_test.clone(),
            general_test: self.general_test.clone(),
            user_kss: with_kss.then(|| self.user_kss.clone()),
            general_kss: with_kss.then(|| self.general_kss.clone()),
            kss: self.kss,
        }
    }
}

/// Image data for the permuted-pixel study: the original task trains the base
/// model, a fixed pixel permutation of the same images forms the new task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageDataConfig {
    /// IDX files `[train_images, train_labels, test_images, test_labels]`;
    /// synthetic glyphs when absent.
    #[serde(default)]
    pub idx_paths: Option<[PathBuf; 4]>,
    pub train_size: usize,
    pub test_size: usize,
    pub nodes: usize,
    pub per_node: usize,
    pub permutation_seed: u64,
}

#[derive(Debug, Clone)]
pub struct ImageData {
    pub base_train: ImageDataset,
    pub base_test: ImageDataset,
    pub new_test: ImageDataset,
    pub nodes: Vec<ImageDataset>,
}

impl ImageData {
    pub fn build(cfg: &ImageDataConfig, seed: u64) -> Result<Self> {
        let (train, test) = match &cfg.idx_paths {
            Some([xi, yi, xt, yt]) => {
                let train = ImageDataset::load_idx(xi, yi)?;
                let test = ImageDataset::load_idx(xt, yt)?;
                (train.split_at(cfg.train_size).0, test.split_at(cfg.test_size).0)
            }
            None => (
                synth_image::generate(cfg.train_size, &mut stream(seed, 1)),
                synth_image::generate(cfg.test_size, &mut stream(seed, 2)),
            ),
        };
        let permuted = permute_pixels(&train, cfg.permutation_seed);
        let shards = shard_indices(permuted.len(), cfg.nodes, cfg.per_node, &mut stream(seed, 3))?;
        Ok(ImageData {
            nodes: shards.iter().map(|ix| permuted.select(ix)).collect(),
            new_test: permute_pixels(&test, cfg.permutation_seed),
            base_train: train,
            base_test: test,
        })
    }

    pub fn task(&self, rehearsal: bool) -> ImageTask {
        ImageTask {
            nodes: self.nodes.clone(),
            general: rehearsal.then(|| self.base_train.clone()),
            new_test: self.new_test.clone(),
            old_test: self.base_test.clone(),
        }
    }
}
