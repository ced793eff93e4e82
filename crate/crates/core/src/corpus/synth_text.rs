//! Synthetic two-style text. A pseudo-word lexicon is shared by a formal
//! "general" register and an informal "user" register; the registers differ
//! in sentence templates, function words and word-frequency rankings, so a
//! model trained on one transfers only partly to the other.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::text::{Provenance, RawText};
use crate::rng::{derive, seeded, Rng};
use crate::{Error, Result};

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh", "br", "tr", "st"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "", "n", "r", "l", "s", "m"];

const SLANG: &[&str] = &["lol", "omg", "haha", "lmao", "smh", "tbh", "idk", "fr", "ngl", "xd"];

const GENERAL_TEMPLATES: &[&str] = &[
    "the {a} {n} {v} the {n}",
    "the {n} of the {n} {vd} in the {n}",
    "{name} {vd} the {a} {n} of {name}",
    "a {n} {v} a {a} {n} and the {n}",
    "in the {n} the {n} {vd} with a {a} {n}",
    "the {n} is {a} and the {n} is {a}",
    "{name} was a {a} {n} who {vd} the {n}",
    "it {v} the {n} for the {n}",
    "this {n} was {vd} by the {a} {n} of {name}",
    "the {a} {n} was {vd} by {name} in the {n}",
    "during the {n} {name} {vd} to the {n}",
    "the {n} {v} that the {n} is {a}",
];

const USER_TEMPLATES: &[&str] = &[
    "i {vb} ur {n} so much {s}",
    "omg {name} {v} my {n}",
    "{s} this {n} is so {a}",
    "u {vb} the {n} {s}",
    "im gonna {vb} my {a} {n} rn",
    "why does {name} {vb} my {n}",
    "my {n} is so {a} {s}",
    "i just {vd} a {n} with {name} {s}",
    "cant {vb} this {a} {n}",
    "{name} {vd} my {n} again {s}",
    "dont {vb} ur {n} {s}",
    "i love my {a} {n}",
];

/// Sizes of the generated lexicon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconConfig {
    pub nouns: usize,
    pub verbs: usize,
    pub adjectives: usize,
    pub names: usize,
    pub topics: usize,
    pub seed: u64,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig { nouns: 600, verbs: 300, adjectives: 250, names: 100, topics: 12, seed: 17 }
    }
}

/// A verb in base, third-person and past forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verb {
    pub base: String,
    pub third: String,
    pub past: String,
}

#[derive(Debug, Clone)]
struct Ranked {
    // per topic, word indices in the order of decreasing frequency
    by_topic: Vec<Vec<usize>>,
    all: Vec<usize>,
    topic_dists: Vec<WeightedIndex<f64>>,
    all_dist: WeightedIndex<f64>,
}

impl Ranked {
    fn new(count: usize, topics: usize, shuffle: Option<&mut Rng>) -> Self {
        let mut by_topic: Vec<Vec<usize>> = (0..topics).map(|t| (t..count).step_by(topics).collect()).collect();
        let mut all: Vec<usize> = (0..count).collect();
        if let Some(rng) = shuffle {
            for t in &mut by_topic {
                t.shuffle(rng);
            }
            all.shuffle(rng);
        }
        let topic_dists = by_topic.iter().map(|t| zipf(t.len(), 1.0)).collect();
        let all_dist = zipf(all.len(), 1.0);
        Ranked { by_topic, all, topic_dists, all_dist }
    }
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    pub nouns: Vec<String>,
    pub verbs: Vec<Verb>,
    pub adjectives: Vec<String>,
    pub names: Vec<String>,
    topics: usize,
}

impl Lexicon {
    pub fn generate(cfg: &LexiconConfig) -> Result<Self> {
        if cfg.topics == 0 || cfg.nouns < cfg.topics || cfg.verbs < cfg.topics || cfg.adjectives < cfg.topics || cfg.names == 0 {
            return Err(Error::Config("lexicon needs at least one word per topic and one name".into()));
        }
        let mut rng = seeded(cfg.seed);
        let mut used: HashSet<String> = ["the", "a", "of", "in", "and", "is", "was", "who", "it", "for", "this", "by"]
            .into_iter()
            .chain(SLANG.iter().copied())
            .map(str::to_string)
            .collect();
        let fresh = |used: &mut HashSet<String>, rng: &mut Rng, syllables: std::ops::RangeInclusive<usize>| loop {
            let n = rng.random_range(syllables.clone());
            let mut w = String::new();
            for _ in 0..n {
                w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
                w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
            }
            w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
            // keep the inflected forms unambiguous
            if !w.ends_with('s') && !w.ends_with('e') && used.insert(w.clone()) {
                return w;
            }
        };
        let nouns = (0..cfg.nouns).map(|_| fresh(&mut used, &mut rng, 1..=3)).collect();
        let adjectives = (0..cfg.adjectives).map(|_| fresh(&mut used, &mut rng, 2..=3)).collect();
        let names = (0..cfg.names)
            .map(|_| {
                let w = fresh(&mut used, &mut rng, 2..=2);
                let mut c = w.chars();
                c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
            })
            .collect();
        let mut verbs = Vec::with_capacity(cfg.verbs);
        while verbs.len() < cfg.verbs {
            let base = fresh(&mut used, &mut rng, 1..=2);
            let third = format!("{base}s");
            let past = format!("{base}ed");
            if used.contains(&third) || used.contains(&past) {
                continue;
            }
            used.insert(third.clone());
            used.insert(past.clone());
            verbs.push(Verb { base, third, past });
        }
        Ok(Lexicon { nouns, verbs, adjectives, names, topics: cfg.topics })
    }
}

/// One register of the synthetic language.
#[derive(Debug, Clone)]
pub struct StyleModel {
    lexicon: Lexicon,
    templates: Vec<Vec<String>>,
    template_dist: WeightedIndex<f64>,
    topic_dist: WeightedIndex<f64>,
    nouns: Ranked,
    verbs: Ranked,
    adjectives: Ranked,
    names: Vec<usize>,
    name_dist: WeightedIndex<f64>,
    slang_dist: WeightedIndex<f64>,
    off_topic: f64,
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / ((r + 1) as f64).powf(s))).expect("positive weights")
}

impl StyleModel {
    pub fn new(lexicon: &Lexicon, provenance: Provenance, seed: u64) -> Self {
        let topics = lexicon.topics;
        let templates: &[&str] = match provenance {
            Provenance::General => GENERAL_TEMPLATES,
            Provenance::User => USER_TEMPLATES,
        };
        let mut rng = seeded(derive(seed, provenance as u64 + 1));
        let shuffle = matches!(provenance, Provenance::User);
        let mut ranked = |count| Ranked::new(count, topics, shuffle.then_some(&mut rng));
        let nouns = ranked(lexicon.nouns.len());
        let verbs = ranked(lexicon.verbs.len());
        let adjectives = ranked(lexicon.adjectives.len());
        let mut names: Vec<usize> = (0..lexicon.names.len()).collect();
        if shuffle {
            names.shuffle(&mut rng);
        }
        StyleModel {
            lexicon: lexicon.clone(),
            templates: templates.iter().map(|t| t.split(' ').map(str::to_string).collect()).collect(),
            template_dist: zipf(templates.len(), 0.6),
            topic_dist: zipf(topics, if shuffle { 1.0 } else { 0.3 }),
            nouns,
            verbs,
            adjectives,
            name_dist: zipf(names.len(), 1.0),
            names,
            slang_dist: zipf(SLANG.len(), 1.0),
            off_topic: 0.15,
        }
    }

    fn pick(&self, ranked: &Ranked, topic: usize, rng: &mut Rng) -> usize {
        if rng.random::<f64>() < self.off_topic {
            ranked.all[ranked.all_dist.sample(rng)]
        } else {
            ranked.by_topic[topic][ranked.topic_dists[topic].sample(rng)]
        }
    }

    pub fn sentence(&self, rng: &mut Rng) -> Vec<String> {
        let topic = self.topic_dist.sample(rng);
        let template = &self.templates[self.template_dist.sample(rng)];
        let lex = &self.lexicon;
        template
            .iter()
            .map(|slot| match slot.as_str() {
                "{n}" => lex.nouns[self.pick(&self.nouns, topic, rng)].clone(),
                "{a}" => lex.adjectives[self.pick(&self.adjectives, topic, rng)].clone(),
                "{v}" => lex.verbs[self.pick(&self.verbs, topic, rng)].third.clone(),
                "{vd}" => lex.verbs[self.pick(&self.verbs, topic, rng)].past.clone(),
                "{vb}" => lex.verbs[self.pick(&self.verbs, topic, rng)].base.clone(),
                "{name}" => lex.names[self.names[self.name_dist.sample(rng)]].clone(),
                "{s}" => SLANG[self.slang_dist.sample(rng)].to_string(),
                word => word.to_string(),
            })
            .collect()
    }

    pub fn generate(&self, sentences: usize, rng: &mut Rng) -> RawText {
        RawText { sentences: (0..sentences).map(|_| self.sentence(rng)).collect() }
    }
}

/// Sentences mostly from `primary`, each drawn from `secondary` with
/// probability `share`. Real corpora are rarely pure: encyclopedic text quotes
/// informal speech and chat contains formal sentences.
pub fn generate_mixed(primary: &StyleModel, secondary: &StyleModel, share: f64, sentences: usize, rng: &mut Rng) -> RawText {
    RawText {
        sentences: (0..sentences)
            .map(|_| if rng.random::<f64>() < share { secondary.sentence(rng) } else { primary.sentence(rng) })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small() -> Lexicon {
        Lexicon::generate(&LexiconConfig { nouns: 60, verbs: 30, adjectives: 20, names: 10, topics: 4, seed: 1 }).unwrap()
    }

    #[test]
    fn lexicon_words_are_distinct() {
        let lex = small();
        let mut all: Vec<&String> = lex.nouns.iter().chain(&lex.adjectives).chain(&lex.names).collect();
        for v in &lex.verbs {
            all.extend([&v.base, &v.third, &v.past]);
        }
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    #[test]
    fn generation_is_seeded() {
        let lex = small();
        let s = StyleModel::new(&lex, Provenance::User, 3);
        assert_eq!(s.generate(50, &mut seeded(9)), s.generate(50, &mut seeded(9)));
    }

    #[test]
    fn registers_have_different_unigrams() {
        let lex = small();
        let count = |p| {
            let text = StyleModel::new(&lex, p, 3).generate(3000, &mut seeded(4));
            let mut m: HashMap<String, f64> = HashMap::new();
            let total = text.token_count() as f64;
            for w in text.sentences.into_iter().flatten() {
                *m.entry(w).or_default() += 1.0 / total;
            }
            m
        };
        let (g, u) = (count(Provenance::General), count(Provenance::User));
        let keys: HashSet<&String> = g.keys().chain(u.keys()).collect();
        let tv: f64 = keys.iter().map(|k| (g.get(*k).unwrap_or(&0.0) - u.get(*k).unwrap_or(&0.0)).abs()).sum::<f64>() / 2.0;
        assert!(tv > 0.3, "total variation {tv}");
    }
}
