//! Synthetic "cipher" languages for desk-scale experiments.
//!
//! A language has `K` tags, each owning a set of unambiguous word types with
//! Zipf-distributed frequencies, and a Markov chain over tags. Every type gets
//! a random embedding nudged towards its tag's centroid. The target language
//! spells each source word backwards and reuses its vector unchanged, so the
//! two embedding spaces are aligned by the identity.
//!
//! Distant labels for the target side come from a source-trained tagger; the
//! noise injectors then corrupt them in controlled ways.

use std::collections::HashMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Provenance, Sentence, TaggedCorpus};
use crate::embed::{BilingualLexicon, EmbeddingMatrix, EmbeddingSpace, Vocabulary};
use crate::error::{Error, Result};
use crate::tagger::{HeadVariant, Head, TagSet, Tagger, TaggerConfig, UNIVERSAL_TAGS};
use crate::trainer::{evaluate, generate_distant_data, train, JointBatch, TrainConfig};

/// Space id shared by both sides of a synthetic language.
pub const SHARED_SPACE: &str = "synthetic-shared";

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageConfig {
    pub num_tags: usize,
    pub types_per_tag: usize,
    pub dim: usize,
    pub zipf_exponent: f64,
    /// Length of each tag centroid relative to the per-type noise.
    pub tag_signal: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for LanguageConfig {
    fn default() -> Self {
        LanguageConfig {
            num_tags: 6,
            types_per_tag: 12,
            dim: 16,
            zipf_exponent: 1.0,
            tag_signal: 0.5,
            min_len: 4,
            max_len: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticLanguage {
    pub tagset: TagSet,
    /// Source words in frequency-rank order (index = rank).
    pub words: Vec<String>,
    pub word_tag: Vec<usize>,
    pub weights: Vec<f64>,
    by_tag: Vec<Vec<usize>>,
    by_tag_cdf: Vec<Vec<f64>>,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    pub embeddings: Vec<Vec<f64>>,
    cipher_index: HashMap<String, usize>,
    source_index: HashMap<String, usize>,
    min_len: usize,
    max_len: usize,
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    w.iter()
        .map(|x| {
            acc += x / total;
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Spells a word backwards.
pub fn cipher(word: &str) -> String {
    word.chars().rev().collect()
}

fn tag_names(k: usize) -> Vec<String> {
    if k <= UNIVERSAL_TAGS.len() {
        UNIVERSAL_TAGS[..k].iter().map(|s| s.to_string()).collect()
    } else {
        (0..k).map(|i| format!("T{i}")).collect()
    }
}

impl SyntheticLanguage {
    pub fn generate(cfg: &LanguageConfig, seed: u64) -> Result<Self> {
        if cfg.num_tags < 2 || cfg.types_per_tag == 0 || cfg.dim == 0 {
            return Err(Error::invalid("synthetic language needs >= 2 tags, >= 1 type per tag, dim >= 1"));
        }
        if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
            return Err(Error::invalid("sentence length range must satisfy 1 <= min_len <= max_len"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = cfg.num_tags;
        let v = k * cfg.types_per_tag;

        let mut words = Vec::with_capacity(v);
        let mut seen = std::collections::HashSet::new();
        const CONS: &[u8] = b"bdfgklmnprstvz";
        const VOWELS: &[u8] = b"aeiou";
        while words.len() < v {
            let syllables = rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(CONS[rng.random_range(0..CONS.len())] as char);
                w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
            }
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }

        // Ranks are dealt round-robin over a shuffled tag order, so each tag
        // owns a spread of frequent and rare types.
        let mut order: Vec<usize> = (0..k).collect();
        let mut word_tag = Vec::with_capacity(v);
        for r in 0..v {
            if r % k == 0 {
                for i in (1..k).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
            }
            word_tag.push(order[r % k]);
        }
        let weights: Vec<f64> = (0..v).map(|r| 1.0 / ((r + 1) as f64).powf(cfg.zipf_exponent)).collect();
        let mut by_tag = vec![Vec::new(); k];
        for (r, &t) in word_tag.iter().enumerate() {
            by_tag[t].push(r);
        }
        let by_tag_cdf = by_tag
            .iter()
            .map(|ws| cumulative(&ws.iter().map(|&r| weights[r]).collect::<Vec<_>>()))
            .collect();

        // Tag mass follows the words it owns; transitions are peaked rows
        // mixed with that marginal.
        let mut marginal = vec![0.0; k];
        for (r, &t) in word_tag.iter().enumerate() {
            marginal[t] += weights[r];
        }
        let initial = cumulative(&marginal);
        let transition = (0..k)
            .map(|_| {
                let row: Vec<f64> = (0..k)
                    .map(|j| {
                        let u: f64 = rng.random();
                        0.5 * marginal[j] + u * u * u
                    })
                    .collect();
                cumulative(&row)
            })
            .collect();

        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let centroids: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let c: Vec<f64> = (0..cfg.dim).map(|_| unit.sample(&mut rng)).collect();
                let n = c.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                c.into_iter().map(|x| x / n * cfg.tag_signal * (cfg.dim as f64).sqrt()).collect()
            })
            .collect();
        let embeddings = (0..v)
            .map(|r| {
                (0..cfg.dim)
                    .map(|j| centroids[word_tag[r]][j] + unit.sample(&mut rng))
                    .collect()
            })
            .collect();

        let cipher_index = words.iter().enumerate().map(|(i, w)| (cipher(w), i)).collect();
        let source_index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(SyntheticLanguage {
            tagset: TagSet::new(tag_names(k))?,
            words,
            word_tag,
            weights,
            by_tag,
            by_tag_cdf,
            initial,
            transition,
            embeddings,
            cipher_index,
            source_index,
            min_len: cfg.min_len,
            max_len: cfg.max_len,
        })
    }

    pub fn num_tags(&self) -> usize {
        self.tagset.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].len()
    }

    /// Source word index of a target (ciphered) word.
    pub fn target_index(&self, word: &str) -> Option<usize> {
        self.cipher_index.get(word).copied()
    }

    pub fn source_index(&self, word: &str) -> Option<usize> {
        self.source_index.get(word).copied()
    }

    /// Samples sentences as word-index sequences.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        (0..n)
            .map(|_| {
                let len = rng.random_range(self.min_len..=self.max_len);
                let mut tag = draw(&self.initial, rng.random());
                let mut out = Vec::with_capacity(len);
                for i in 0..len {
                    if i > 0 {
                        tag = draw(&self.transition[tag], rng.random());
                    }
                    let j = draw(&self.by_tag_cdf[tag], rng.random());
                    out.push(self.by_tag[tag][j]);
                }
                out
            })
            .collect()
    }

    fn corpus(&self, sents: &[Vec<usize>], target: bool, provenance: Provenance) -> TaggedCorpus {
        let sentences = sents
            .iter()
            .map(|s| {
                let tokens = s
                    .iter()
                    .map(|&r| if target { cipher(&self.words[r]) } else { self.words[r].clone() })
                    .collect();
                let tags = s.iter().map(|&r| self.word_tag[r]).collect();
                Sentence::new(tokens, tags)
            })
            .collect();
        TaggedCorpus::new(sentences, provenance, self.tagset.clone())
            .expect("generated tags are in range")
            .with_provenance(provenance)
    }

    /// Gold-tagged source-language sentences.
    pub fn source_corpus(&self, n: usize, rng: &mut ChaCha8Rng) -> TaggedCorpus {
        self.corpus(&self.sample(n, rng), false, Provenance::Gold)
    }

    /// Gold-tagged target-language sentences.
    pub fn target_corpus(&self, n: usize, rng: &mut ChaCha8Rng) -> TaggedCorpus {
        self.corpus(&self.sample(n, rng), true, Provenance::Gold)
    }

    fn space(&self, target: bool) -> EmbeddingSpace {
        let words: Vec<String> = self
            .words
            .iter()
            .map(|w| if target { cipher(w) } else { w.clone() })
            .collect();
        let vocab = Vocabulary::new(words).expect("unique generated words");
        let d = self.dim();
        let mut data: Vec<f64> = self.embeddings.iter().flatten().copied().collect();
        // Unknown-word row: mean of the known vectors.
        let n = self.embeddings.len() as f64;
        data.extend((0..d).map(|j| self.embeddings.iter().map(|e| e[j]).sum::<f64>() / n));
        let matrix = EmbeddingMatrix::new(self.embeddings.len() + 1, d, data).expect("consistent shape");
        EmbeddingSpace::new(vocab, matrix, SHARED_SPACE).with_lowercase(false)
    }

    pub fn source_space(&self) -> EmbeddingSpace {
        self.space(false)
    }

    pub fn target_space(&self) -> EmbeddingSpace {
        self.space(true)
    }

    /// Source word to target word for every type.
    pub fn lexicon(&self) -> BilingualLexicon {
        BilingualLexicon::new(self.words.iter().map(|w| (w.clone(), cipher(w))))
    }
}

/// Corruption applied to distant labels of a target corpus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistantNoise {
    /// Every `period`-th type by frequency rank, starting with the most
    /// frequent, is mis-projected; 0 disables this.
    pub period: usize,
    /// Chance that an occurrence of a mis-projected type gets the tag after
    /// its true one.
    pub flip_rate: f64,
    /// Two tags exchanged everywhere, after mis-projection.
    pub swap: Option<(usize, usize)>,
}

impl DistantNoise {
    pub const NONE: DistantNoise = DistantNoise {
        period: 0,
        flip_rate: 0.0,
        swap: None,
    };

    /// Every tenth type always mis-tagged.
    pub fn every_tenth_type() -> Self {
        DistantNoise {
            period: 10,
            flip_rate: 1.0,
            swap: None,
        }
    }

    pub fn with_swap(mut self, a: usize, b: usize) -> Self {
        self.swap = Some((a, b));
        self
    }

    pub fn is_misprojected(&self, rank: usize) -> bool {
        self.period > 0 && rank % self.period == 0
    }
}

/// Applies `noise` to a distant corpus over target words of `lang`.
pub fn inject_noise(lang: &SyntheticLanguage, corpus: &TaggedCorpus, noise: DistantNoise, seed: u64) -> TaggedCorpus {
    let k = lang.num_tags();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = corpus.clone();
    for s in &mut out.sentences {
        for (w, tag) in s.tokens.iter().zip(s.tags.iter_mut()) {
            let Some(t) = tag.as_mut() else { continue };
            if let Some(r) = lang.target_index(w).filter(|&r| noise.is_misprojected(r)) {
                let u: f64 = rng.random();
                if u < noise.flip_rate {
                    *t = (lang.word_tag[r] + 1) % k;
                }
            }
            if let Some((a, b)) = noise.swap {
                if *t == a {
                    *t = b;
                } else if *t == b {
                    *t = a;
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub language: LanguageConfig,
    pub source_sentences: usize,
    pub distant_sentences: usize,
    pub gold_sentences: usize,
    pub dev_sentences: usize,
    pub test_sentences: usize,
    pub pool_sentences: usize,
    pub noise: DistantNoise,
    pub hidden: usize,
    pub mlp_hidden: usize,
    /// Training of target-side models.
    pub train: TrainConfig,
    /// Training of the source tagger.
    pub source_train: TrainConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            language: LanguageConfig::default(),
            source_sentences: 300,
            distant_sentences: 500,
            gold_sentences: 20,
            dev_sentences: 20,
            test_sentences: 300,
            pool_sentences: 0,
            noise: DistantNoise::every_tenth_type(),
            hidden: 8,
            mlp_hidden: 32,
            train: TrainConfig::default(),
            source_train: TrainConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn tagger_config(&self, head_variant: HeadVariant, seed: u64) -> TaggerConfig {
        TaggerConfig {
            input_dim: self.language.dim,
            hidden: self.hidden,
            mlp_hidden: self.mlp_hidden,
            head_variant,
            init_scale: 0.1,
            seed,
        }
    }
}

/// All corpora of one synthetic experiment. Target-side corpora carry gold
/// tags; `distant` carries the noisy projected ones.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub language: SyntheticLanguage,
    pub source: TaggedCorpus,
    pub source_dev: TaggedCorpus,
    pub source_model: Tagger,
    pub distant: TaggedCorpus,
    /// Distant labels before noise injection.
    pub clean_distant: TaggedCorpus,
    pub gold: TaggedCorpus,
    pub dev: TaggedCorpus,
    pub test: TaggedCorpus,
    pub pool: TaggedCorpus,
    pub source_space: EmbeddingSpace,
    pub target_space: EmbeddingSpace,
    pub config: ScenarioConfig,
    pub seed: u64,
}

/// Training regimes compared on a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Joint,
    DistantOnly,
    GoldOnly,
}

impl Scenario {
    /// Generates the language, trains the source tagger and projects labels
    /// onto the target side.
    pub fn build(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        let language = SyntheticLanguage::generate(&config.language, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
        let source = language.source_corpus(config.source_sentences, &mut rng);
        let source_dev = language.source_corpus(config.dev_sentences.max(1), &mut rng);
        let raw_target = language.target_corpus(config.distant_sentences, &mut rng);
        let gold = language.target_corpus(config.gold_sentences, &mut rng);
        let dev = language.target_corpus(config.dev_sentences.max(1), &mut rng);
        let test = language.target_corpus(config.test_sentences.max(1), &mut rng);
        let pool = language.target_corpus(config.pool_sentences, &mut rng);
        let source_space = language.source_space();
        let target_space = language.target_space();

        let model = Tagger::new(
            &config.tagger_config(HeadVariant::Mlp, seed),
            language.tagset.clone(),
            SHARED_SPACE,
        );
        let as_distant = source.clone().with_provenance(Provenance::Distant);
        let empty = TaggedCorpus::empty(Provenance::Gold, language.tagset.clone());
        let mut src_cfg = config.source_train.clone();
        src_cfg.seed = seed;
        let (source_model, _) = train(model, &JointBatch::new(&as_distant, &empty), &source_dev, &source_space, &src_cfg)?;

        let unlabeled = raw_target.with_provenance(Provenance::Unlabeled);
        let (clean_distant, _) = generate_distant_data(&source_model, &unlabeled, &target_space)?;
        let distant = inject_noise(&language, &clean_distant, config.noise, seed);
        Ok(Scenario {
            language,
            source,
            source_dev,
            source_model,
            distant,
            clean_distant,
            gold,
            dev,
            test,
            pool,
            source_space,
            target_space,
            config: config.clone(),
            seed,
        })
    }

    /// The same scenario with different noise on the projected labels.
    pub fn with_noise(&self, noise: DistantNoise) -> Scenario {
        let mut out = self.clone();
        out.distant = inject_noise(&self.language, &self.clean_distant, noise, self.seed);
        out.config.noise = noise;
        out
    }

    /// Trains a fresh target model under `regime` and returns it with its
    /// test accuracy (percent) on the head it is evaluated with.
    pub fn run(&self, regime: Regime, head_variant: HeadVariant) -> Result<(Tagger, f64)> {
        let tagset = self.language.tagset.clone();
        let model = Tagger::new(&self.config.tagger_config(head_variant, self.seed), tagset.clone(), SHARED_SPACE);
        let no_gold = TaggedCorpus::empty(Provenance::Gold, tagset.clone());
        let no_distant = TaggedCorpus::empty(Provenance::Distant, tagset);
        let batch = match regime {
            Regime::Joint => JointBatch::new(&self.distant, &self.gold),
            Regime::DistantOnly => JointBatch::new(&self.distant, &no_gold),
            Regime::GoldOnly => JointBatch::new(&no_distant, &self.gold),
        };
        let mut cfg = self.config.train.clone();
        cfg.seed = self.seed;
        let (m, _) = train(model, &batch, &self.dev, &self.target_space, &cfg)?;
        let head = match regime {
            Regime::DistantOnly => Head::Distant,
            _ => Head::Gold,
        };
        let acc = evaluate(&m, &self.test, &self.target_space, head)?.percent();
        Ok((m, acc))
    }
}
