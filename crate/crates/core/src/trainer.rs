//! Joint distant + gold objective, SGD with momentum and early stopping, and
//! distant corpus generation.
//!
//! The objective over a [`JointBatch`] is
//!
//! ```text
//! J = gamma * sum_{distant tokens} CE(y_t, o_t) + sum_{gold tokens} CE(y~_t, o~_t)
//! ```
//!
//! where `o_t` is the distant head and `o~_t` the gold head, and
//! `gamma = |gold tokens| / |distant tokens|` unless overridden.

use std::fmt::Write as _;
use std::path::PathBuf;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::corpus::{Provenance, Sentence, TaggedCorpus};
use crate::embed::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::tagger::{argmax, head_outputs, Head, ParamNodes, Tagger};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub gamma_override: Option<f64>,
    /// Global gradient-norm ceiling per update.
    pub clip_norm: f64,
    /// Where to write the per-epoch TSV log.
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            max_epochs: 200,
            patience: 5,
            seed: 0,
            gamma_override: None,
            clip_norm: 5.0,
            log_path: None,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 8] = [
        "learning_rate",
        "momentum",
        "max_epochs",
        "patience",
        "seed",
        "gamma_override",
        "clip_norm",
        "log_path",
    ];

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be a finite value >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::invalid("max_epochs and patience must be positive"));
        }
        if let Some(g) = self.gamma_override {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::invalid("gamma_override must be a finite value >= 0"));
            }
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid("clip_norm must be positive"));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn std::fmt::Display| Error::invalid(format!("{key}={value}: {e}"));
        match key {
            "learning_rate" => self.learning_rate = value.parse().map_err(|e| bad(&e))?,
            "momentum" => self.momentum = value.parse().map_err(|e| bad(&e))?,
            "max_epochs" => self.max_epochs = value.parse().map_err(|e| bad(&e))?,
            "patience" => self.patience = value.parse().map_err(|e| bad(&e))?,
            "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
            "gamma_override" => {
                self.gamma_override = match value {
                    "" | "none" => None,
                    v => Some(v.parse().map_err(|e| bad(&e))?),
                }
            }
            "clip_norm" => self.clip_norm = value.parse().map_err(|e| bad(&e))?,
            "log_path" => {
                self.log_path = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            _ => {
                return Err(Error::invalid(format!(
                    "unknown config key {key:?} (known: {})",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies flat `key=value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected key=value".into(),
                });
            };
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "learning_rate={}", self.learning_rate);
        let _ = writeln!(s, "momentum={}", self.momentum);
        let _ = writeln!(s, "max_epochs={}", self.max_epochs);
        let _ = writeln!(s, "patience={}", self.patience);
        let _ = writeln!(s, "seed={}", self.seed);
        let gamma = self.gamma_override.map_or("none".to_string(), |g| g.to_string());
        let _ = writeln!(s, "gamma_override={gamma}");
        let _ = writeln!(s, "clip_norm={}", self.clip_norm);
        let log = self.log_path.as_ref().map_or(String::new(), |p| p.display().to_string());
        let _ = writeln!(s, "log_path={log}");
        s
    }
}

/// Balancing constant `m / n` between the gold (`m` tokens) and distant
/// (`n` tokens) terms.
pub fn gamma(m: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid(
            "gamma is undefined without distant tokens; disable the distant term instead",
        ));
    }
    Ok(m as f64 / n as f64)
}

/// Distant and gold training corpora sharing one tagset. Only labelled tokens
/// contribute to the objective.
#[derive(Clone, Copy, Debug)]
pub struct JointBatch<'a> {
    pub distant: &'a TaggedCorpus,
    pub gold: &'a TaggedCorpus,
}

impl<'a> JointBatch<'a> {
    pub fn new(distant: &'a TaggedCorpus, gold: &'a TaggedCorpus) -> Self {
        JointBatch { distant, gold }
    }

    /// `|N|`.
    pub fn distant_tokens(&self) -> usize {
        self.distant.labeled_count()
    }

    /// `|M|`.
    pub fn gold_tokens(&self) -> usize {
        self.gold.labeled_count()
    }

    fn check_tagset(&self, model: &Tagger) -> Result<()> {
        for (name, c) in [("distant", self.distant), ("gold", self.gold)] {
            if &c.tagset != model.tagset() {
                return Err(Error::TagsetMismatch(format!(
                    "{name} corpus tagset differs from the model's"
                )));
            }
        }
        Ok(())
    }
}

/// Per-token loss weights of the two terms, in objective units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermWeights {
    pub gamma: f64,
    pub distant: f64,
    pub gold: f64,
}

/// Resolves the weights actually used for a batch. With no gold tokens the
/// objective is the distant term alone (weight 1); with no distant tokens it
/// is the gold term alone.
pub fn term_weights(batch: &JointBatch, gamma_override: Option<f64>) -> Result<TermWeights> {
    let (m, n) = (batch.gold_tokens(), batch.distant_tokens());
    match (m, n) {
        (0, 0) => Err(Error::invalid("training batch has no labelled tokens")),
        (0, _) => Ok(TermWeights {
            gamma: 0.0,
            distant: 1.0,
            gold: 0.0,
        }),
        (_, 0) => Ok(TermWeights {
            gamma: 0.0,
            distant: 0.0,
            gold: 1.0,
        }),
        _ => {
            let g = match gamma_override {
                Some(g) => g,
                None => gamma(m, n)?,
            };
            Ok(TermWeights {
                gamma: g,
                distant: g,
                gold: 1.0,
            })
        }
    }
}

fn sentence_inputs(g: &mut Graph, space: &EmbeddingSpace, s: &Sentence) -> Vec<NodeId> {
    s.tokens
        .iter()
        .map(|t| g.constant(Tensor::vector(space.lookup(t).to_vec())))
        .collect()
}

/// Sum of cross-entropies over the labelled tokens of one sentence, scored by
/// `head`. `None` when the sentence has no labels.
pub fn sentence_loss(
    g: &mut Graph,
    p: &ParamNodes,
    space: &EmbeddingSpace,
    s: &Sentence,
    head: Head,
) -> Result<Option<NodeId>> {
    if s.labeled_count() == 0 {
        return Ok(None);
    }
    let xs = sentence_inputs(g, space, s);
    let probs = head_outputs(g, p, &xs, head)?;
    let mut terms = Vec::with_capacity(s.len());
    for (&pr, tag) in probs.iter().zip(&s.tags) {
        if let Some(t) = *tag {
            terms.push(g.cross_entropy(pr, t)?);
        }
    }
    let all = g.concat(&terms)?;
    Ok(Some(g.sum(all)?))
}

/// Builds the joint objective for a whole batch as one scalar node: distant
/// tokens are scored by the distant head and weighted by `gamma`, gold tokens
/// by the gold head.
pub fn joint_loss(
    g: &mut Graph,
    p: &ParamNodes,
    batch: &JointBatch,
    space: &EmbeddingSpace,
    gamma: f64,
) -> Result<NodeId> {
    if batch.gold_tokens() == 0 && batch.distant_tokens() == 0 {
        return Err(Error::invalid("joint loss over an empty batch"));
    }
    let mut distant = Vec::new();
    for s in &batch.distant.sentences {
        distant.extend(sentence_loss(g, p, space, s, Head::Distant)?);
    }
    let mut gold = Vec::new();
    for s in &batch.gold.sentences {
        gold.extend(sentence_loss(g, p, space, s, Head::Gold)?);
    }
    let mut parts = Vec::with_capacity(2);
    if !distant.is_empty() {
        let d = g.concat(&distant)?;
        let d = g.sum(d)?;
        parts.push(g.scale(d, gamma)?);
    }
    if !gold.is_empty() {
        let m = g.concat(&gold)?;
        parts.push(g.sum(m)?);
    }
    let all = g.concat(&parts)?;
    g.sum(all)
}

/// Value of [`joint_loss`] for a model.
pub fn joint_loss_value(
    model: &Tagger,
    batch: &JointBatch,
    space: &EmbeddingSpace,
    gamma: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let p = model.params.register(&mut g, false);
    let root = joint_loss(&mut g, &p, batch, space, gamma)?;
    Ok(g.value(root).item())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    /// Percentage; 0 for an empty corpus.
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

/// Token accuracy of `head` over the labelled tokens of `corpus`.
pub fn evaluate(model: &Tagger, corpus: &TaggedCorpus, space: &EmbeddingSpace, head: Head) -> Result<Accuracy> {
    let mut acc = Accuracy::default();
    for s in &corpus.sentences {
        if s.labeled_count() == 0 {
            continue;
        }
        let inputs: Vec<&[f64]> = s.tokens.iter().map(|t| space.lookup(t)).collect();
        let probs = model.probabilities(&inputs, head)?;
        for (p, tag) in probs.iter().zip(&s.tags) {
            if let Some(t) = *tag {
                acc.total += 1;
                acc.correct += usize::from(argmax(p) == t);
            }
        }
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Objective value summed over the epoch's updates.
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub gamma: f64,
    pub clipped_steps: usize,
    /// Cross-entropy evaluations whose target probability was floored.
    pub clamp_events: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
}

impl TrainLog {
    /// One tab-separated line per epoch: epoch, train loss, dev accuracy,
    /// gamma, clipped-step count.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\tdev_accuracy\tgamma\tclipped_steps\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{}\t{:.6}\t{:.4}\t{:.6}\t{}",
                r.epoch, r.train_loss, r.dev_accuracy, r.gamma, r.clipped_steps
            );
        }
        s
    }
}

/// Trains `model` on `batch` with per-sentence SGD with momentum and returns
/// the snapshot with the best development accuracy.
pub fn train(
    mut model: Tagger,
    batch: &JointBatch,
    dev: &TaggedCorpus,
    space: &EmbeddingSpace,
    cfg: &TrainConfig,
) -> Result<(Tagger, TrainLog)> {
    cfg.validate()?;
    model.check_space(space)?;
    batch.check_tagset(&model)?;
    if dev.labeled_count() == 0 {
        return Err(Error::invalid("development corpus has no labelled tokens"));
    }
    if &dev.tagset != model.tagset() {
        return Err(Error::TagsetMismatch("dev corpus tagset differs from the model's".into()));
    }

    let weights = term_weights(batch, cfg.gamma_override)?;

    let mut items: Vec<(Head, usize)> = Vec::new();
    if weights.distant > 0.0 {
        items.extend(
            (0..batch.distant.len())
                .filter(|&i| batch.distant.sentences[i].labeled_count() > 0)
                .map(|i| (Head::Distant, i)),
        );
    }
    if weights.gold > 0.0 {
        items.extend(
            (0..batch.gold.len())
                .filter(|&i| batch.gold.sentences[i].labeled_count() > 0)
                .map(|i| (Head::Gold, i)),
        );
    }
    let gold_in_play = weights.gold > 0.0 && batch.gold_tokens() > 0;
    model.meta.gold_trained = model.meta.gold_trained || gold_in_play;
    let eval_head = if gold_in_play { Head::Gold } else { model.evaluation_head() };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity: Vec<Vec<f64>> = model.params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
    let mut log = TrainLog {
        best_dev_accuracy: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best = model.clone();
    let mut since_best = 0;
    let mut last_finite = 0.0;

    for epoch in 1..=cfg.max_epochs {
        items.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut clipped = 0;
        let mut clamps = 0;

        for &(head, idx) in &items {
            let (sentence, w) = match head {
                Head::Distant => (&batch.distant.sentences[idx], weights.distant),
                Head::Gold => (&batch.gold.sentences[idx], weights.gold),
            };
            let mut g = Graph::new();
            let p = model.params.register(&mut g, true);
            let diverged = |e: Error| match e {
                Error::NonFinite(_) => Error::Divergence {
                    epoch,
                    last_finite_loss: last_finite,
                },
                other => other,
            };
            let Some(loss) = sentence_loss(&mut g, &p, space, sentence, head).map_err(diverged)? else {
                continue;
            };
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    last_finite_loss: last_finite,
                });
            }
            epoch_loss += w * value;
            clamps += g.clamp_events();
            let scaled = g.scale(loss, w)?;
            let mut grads = g.backward(scaled)?;

            let ids = p.ids();
            let mut gs: Vec<Option<Tensor>> = ids.iter().map(|&id| grads.take(id)).collect();
            let sq: f64 = gs.iter().flatten().flat_map(|t| t.data()).map(|v| v * v).sum();
            let gnorm = sq.sqrt();
            if !gnorm.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    last_finite_loss: last_finite,
                });
            }
            let clip = if gnorm > cfg.clip_norm {
                clipped += 1;
                cfg.clip_norm / gnorm
            } else {
                1.0
            };
            for ((t, v), gt) in model.params.tensors_mut().into_iter().zip(&mut velocity).zip(&mut gs) {
                match gt {
                    Some(gt) => {
                        for ((x, vi), gi) in t.data_mut().iter_mut().zip(v.iter_mut()).zip(gt.data()) {
                            *vi = cfg.momentum * *vi - cfg.learning_rate * clip * gi;
                            *x += *vi;
                        }
                    }
                    None => {
                        for (x, vi) in t.data_mut().iter_mut().zip(v.iter_mut()) {
                            *vi *= cfg.momentum;
                            *x += *vi;
                        }
                    }
                }
            }
            // A saturated softmax keeps the loss finite even after the
            // weights have overflowed, so check them directly.
            if model.params.tensors().iter().any(|t| t.data().iter().any(|v| !v.is_finite())) {
                return Err(Error::Divergence {
                    epoch,
                    last_finite_loss: last_finite,
                });
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                last_finite_loss: last_finite,
            });
        }
        last_finite = epoch_loss;

        let dev_acc = evaluate(&model, dev, space, eval_head)?.percent();
        log.records.push(EpochRecord {
            epoch,
            train_loss: epoch_loss,
            dev_accuracy: dev_acc,
            gamma: weights.gamma,
            clipped_steps: clipped,
            clamp_events: clamps,
        });
        debug!("epoch {epoch}: loss {epoch_loss:.4} dev {dev_acc:.2} clipped {clipped}");

        if dev_acc > log.best_dev_accuracy {
            log.best_dev_accuracy = dev_acc;
            log.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                info!("early stop at epoch {epoch}, best epoch {}", log.best_epoch);
                break;
            }
        }
    }

    if let Some(path) = &cfg.log_path {
        std::fs::write(path, log.to_tsv()).map_err(|e| Error::io(path, e))?;
    }
    Ok((best, log))
}

/// Tags an unlabelled target corpus with the distant head of a source model.
/// Returns the distant corpus and per-tag counts.
pub fn generate_distant_data(
    source_model: &Tagger,
    target: &TaggedCorpus,
    target_space: &EmbeddingSpace,
) -> Result<(TaggedCorpus, Vec<usize>)> {
    source_model.check_space(target_space)?;
    let mut sentences = Vec::with_capacity(target.len());
    for s in &target.sentences {
        if s.is_empty() {
            continue;
        }
        let tags = source_model.tag_tokens(target_space, &s.tokens, Head::Distant)?;
        sentences.push(Sentence::new(s.tokens.clone(), tags));
    }
    let corpus = TaggedCorpus::new(sentences, Provenance::Distant, source_model.tagset().clone())?;
    let counts = corpus.tag_counts();
    Ok((corpus, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{EmbeddingMatrix, Vocabulary};
    use crate::tagger::{HeadVariant, TagSet, TaggerConfig};
    use approx::assert_abs_diff_eq;

    fn tagset(k: usize) -> TagSet {
        TagSet::new((0..k).map(|i| format!("T{i}")).collect()).unwrap()
    }

    fn space() -> EmbeddingSpace {
        let words = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let data = vec![1.0, 0.0, 0.0, 1.0, 0.5, -0.5, 0.5, 0.2];
        EmbeddingSpace::new(
            Vocabulary::new(words).unwrap(),
            EmbeddingMatrix::new(4, 2, data).unwrap(),
            "s",
        )
    }

    fn corpus(k: usize, provenance: Provenance, sents: &[(&[&str], &[usize])]) -> TaggedCorpus {
        let sentences = sents
            .iter()
            .map(|(toks, tags)| Sentence::new(toks.iter().map(|t| t.to_string()).collect(), tags.to_vec()))
            .collect();
        TaggedCorpus::new(sentences, provenance, tagset(k)).unwrap()
    }

    fn model(k: usize, h: usize, seed: u64) -> Tagger {
        let cfg = TaggerConfig {
            input_dim: 2,
            hidden: h,
            mlp_hidden: 3,
            head_variant: HeadVariant::Mlp,
            init_scale: 0.1,
            seed,
        };
        Tagger::new(&cfg, tagset(k), "s")
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(100, 1000).unwrap(), 0.1);
        assert_eq!(gamma(500, 500).unwrap(), 1.0);
        assert_eq!(gamma(0, 7).unwrap(), 0.0);
        assert!(gamma(3, 0).is_err());
    }

    #[test]
    fn zero_model_joint_loss_closed_form() {
        let k = 12;
        let mut zero = model(k, 2, 0);
        for t in zero.params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let toks: &[&str] = &["a", "b", "c", "a", "b"];
        let distant = corpus(k, Provenance::Distant, &[(toks, &[0, 1, 2, 3, 4]), (toks, &[5, 6, 7, 8, 9])]);
        let gold = corpus(k, Provenance::Gold, &[(toks, &[0, 0, 1, 1, 11])]);
        let batch = JointBatch::new(&distant, &gold);
        let v = joint_loss_value(&zero, &batch, &space(), 0.5).unwrap();
        assert_abs_diff_eq!(v, 10.0 * 12f64.ln(), epsilon = 1e-9);
        let gold_only = joint_loss_value(&zero, &batch, &space(), 0.0).unwrap();
        assert_abs_diff_eq!(gold_only, 5.0 * 12f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn joint_loss_hand_toy() {
        // One distant and one gold token, K = 2, computed from the heads'
        // probabilities directly.
        let m = model(2, 2, 3);
        let s = space();
        let distant = corpus(2, Provenance::Distant, &[(&["a"], &[1])]);
        let gold = corpus(2, Provenance::Gold, &[(&["b"], &[0])]);
        let o = m.probabilities(&[s.lookup("a")], Head::Distant).unwrap();
        let og = m.probabilities(&[s.lookup("b")], Head::Gold).unwrap();
        let expected = 0.3 * -o[0][1].ln() + -og[0][0].ln();
        let v = joint_loss_value(&m, &JointBatch::new(&distant, &gold), &s, 0.3).unwrap();
        assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
    }

    #[test]
    fn empty_batch_rejected() {
        let m = model(2, 2, 0);
        let e = TaggedCorpus::empty(Provenance::Distant, tagset(2));
        assert!(joint_loss_value(&m, &JointBatch::new(&e, &e), &space(), 1.0).is_err());
    }

    #[test]
    fn term_weights_cases() {
        let d = corpus(2, Provenance::Distant, &[(&["a", "b"], &[0, 1])]);
        let g = corpus(2, Provenance::Gold, &[(&["a"], &[0])]);
        let e = TaggedCorpus::empty(Provenance::Gold, tagset(2));
        let w = term_weights(&JointBatch::new(&d, &g), None).unwrap();
        assert_eq!((w.gamma, w.distant, w.gold), (0.5, 0.5, 1.0));
        let w = term_weights(&JointBatch::new(&d, &e), None).unwrap();
        assert_eq!((w.distant, w.gold), (1.0, 0.0));
        let w = term_weights(&JointBatch::new(&e, &g), Some(3.0)).unwrap();
        assert_eq!((w.distant, w.gold), (0.0, 1.0));
    }

    #[test]
    fn config_text_round_trip() {
        let mut c = TrainConfig::default();
        c.apply_text("learning_rate = 0.05\n# note\nmomentum=0.5\ngamma_override=0.25\nlog_path=/tmp/x.tsv\n")
            .unwrap();
        assert_eq!(c.learning_rate, 0.05);
        assert_eq!(c.gamma_override, Some(0.25));
        let mut d = TrainConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
        assert!(TrainConfig::default().apply_text("bogus=1").is_err());
        assert!(TrainConfig::default().apply_text("momentum=1.0").is_err());
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let m = model(3, 2, 5);
        let d = corpus(3, Provenance::Distant, &[(&["a", "b", "c"], &[0, 1, 2])]);
        let g = corpus(3, Provenance::Gold, &[(&["c", "a"], &[2, 2])]);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 3,
            patience: 10,
            ..Default::default()
        };
        let s = space();
        let before = evaluate(&m, &g, &s, Head::Gold).unwrap();
        let (trained, log) = train(m.clone(), &JointBatch::new(&d, &g), &g, &s, &cfg).unwrap();
        assert_eq!(trained.params, m.params);
        assert_eq!(log.records.len(), 3);
        assert!(log.records.iter().all(|r| r.dev_accuracy == before.percent()));
    }

    #[test]
    fn non_finite_weights_are_divergence() {
        let d = corpus(3, Provenance::Distant, &[(&["a", "b", "c"], &[0, 1, 2])]);
        let e = TaggedCorpus::empty(Provenance::Gold, tagset(3));
        let mut m = model(3, 2, 4);
        m.params.tensors_mut()[0].data_mut()[0] = f64::INFINITY;
        let err = train(m, &JointBatch::new(&d, &e), &d, &space(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn training_is_deterministic() {
        let d = corpus(3, Provenance::Distant, &[(&["a", "b", "c"], &[0, 1, 2]), (&["c", "c"], &[2, 1])]);
        let g = corpus(3, Provenance::Gold, &[(&["c", "a"], &[2, 0])]);
        let cfg = TrainConfig {
            max_epochs: 8,
            seed: 11,
            ..Default::default()
        };
        let s = space();
        let run = || train(model(3, 3, 2), &JointBatch::new(&d, &g), &g, &s, &cfg).unwrap();
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.to_tsv(), lb.to_tsv());
    }

    #[test]
    fn separable_gold_reaches_full_accuracy() {
        // Two words with opposite +-1 patterns over 8 dimensions.
        let d = 8;
        let data: Vec<f64> = (0..3 * d)
            .map(|i| match i / d {
                0 => [1.0, -1.0][i % 2],
                1 => [-1.0, 1.0][i % 2],
                _ => 0.0,
            })
            .collect();
        let s = EmbeddingSpace::new(
            Vocabulary::new(vec!["a".into(), "b".into()]).unwrap(),
            EmbeddingMatrix::new(3, d, data).unwrap(),
            "s",
        );
        let k = 2;
        let gold = corpus(k, Provenance::Gold, &vec![(&["a", "b"][..], &[0usize, 1][..]); 50]);
        let distant = TaggedCorpus::empty(Provenance::Distant, tagset(k));
        let cfg = TrainConfig {
            max_epochs: 50,
            patience: 50,
            gamma_override: Some(0.0),
            ..Default::default()
        };
        let mut tc = TaggerConfig::new(d);
        tc.hidden = 2;
        tc.seed = 1;
        let (m, log) = train(Tagger::new(&tc, tagset(k), "s"), &JointBatch::new(&distant, &gold), &gold, &s, &cfg).unwrap();
        assert!(m.gold_trained());
        assert_eq!(log.best_dev_accuracy, 100.0);
        assert_eq!(evaluate(&m, &gold, &s, Head::Gold).unwrap().percent(), 100.0);
    }

    #[test]
    fn single_step_reduces_token_loss() {
        let m = model(3, 2, 9);
        let s = space();
        let d = corpus(3, Provenance::Distant, &[(&["b"], &[2])]);
        let e = TaggedCorpus::empty(Provenance::Gold, tagset(3));
        let batch = JointBatch::new(&d, &e);
        let before = joint_loss_value(&m, &batch, &s, 1.0).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.0,
            max_epochs: 1,
            ..Default::default()
        };
        let (after_model, _) = train(m, &batch, &d, &s, &cfg).unwrap();
        let after = joint_loss_value(&after_model, &batch, &s, 1.0).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn distant_generation_checks_space_and_handles_empty() {
        let m = model(3, 2, 1);
        let s = space();
        let empty = TaggedCorpus::empty(Provenance::Unlabeled, tagset(3));
        let (out, counts) = generate_distant_data(&m, &empty, &s).unwrap();
        assert!(out.is_empty());
        assert_eq!(counts, vec![0, 0, 0]);

        let oov = TaggedCorpus::new(
            vec![Sentence::unlabeled(vec!["zz".into(), "yy".into()]), Sentence::unlabeled(vec!["qq".into()])],
            Provenance::Unlabeled,
            tagset(3),
        )
        .unwrap();
        let (out, _) = generate_distant_data(&m, &oov, &s).unwrap();
        assert_eq!(out.provenance, Provenance::Distant);
        let unk_tag = m.predict(&[s.lookup("zz")], Head::Distant).unwrap()[0];
        assert_eq!(out.sentences[1].tags, vec![Some(unk_tag)]);

        let other = EmbeddingSpace::new(s.vocab.clone(), s.matrix.clone(), "other");
        assert!(matches!(
            generate_distant_data(&m, &oov, &other),
            Err(Error::SpaceMismatch { .. })
        ));
    }
}
