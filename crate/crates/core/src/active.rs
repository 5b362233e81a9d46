//! Pool-based active learning with an oracle annotator.
//!
//! Five heuristics pick what to label next: single tokens (`Token`), whole
//! sentences (`Sent`), or word types (`FreqType`, `SumType`, `Random`). Type
//! annotation propagates the type's majority gold label to every occurrence.
//! Budget is always counted in newly labelled token positions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Provenance, Sentence, TaggedCorpus};
use crate::embed::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::tagger::{entropy, Tagger, TaggerConfig};
use crate::trainer::{evaluate, train, JointBatch, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Token,
    Sent,
    FreqType,
    SumType,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Token,
        Strategy::Sent,
        Strategy::FreqType,
        Strategy::SumType,
        Strategy::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Token => "token",
            Strategy::Sent => "sent",
            Strategy::FreqType => "freqtype",
            Strategy::SumType => "sumtype",
            Strategy::Random => "random",
        }
    }

    pub fn needs_entropy(self) -> bool {
        matches!(self, Strategy::Token | Strategy::Sent | Strategy::SumType)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown strategy {s:?} (token, sent, freqtype, sumtype, random)")))
    }
}

/// How models are trained from the annotations collected so far.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Base {
    /// Gold term only.
    Trad,
    /// Joint objective with the distant corpus.
    Joint,
}

impl Base {
    pub fn name(self) -> &'static str {
        match self {
            Base::Trad => "trad",
            Base::Joint => "joint",
        }
    }
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Base {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trad" => Ok(Base::Trad),
            "joint" => Ok(Base::Joint),
            _ => Err(Error::invalid(format!("unknown base {s:?} (trad, joint)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Payload {
    Token { sentence: usize, position: usize },
    Sentence(usize),
    Type(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionKind {
    Token,
    Sentence,
    Type,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub payload: Payload,
    pub score: f64,
}

impl Selection {
    pub fn kind(&self) -> SelectionKind {
        match self.payload {
            Payload::Token { .. } => SelectionKind::Token,
            Payload::Sentence(_) => SelectionKind::Sentence,
            Payload::Type(_) => SelectionKind::Type,
        }
    }
}

/// A label revealed by the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Revealed {
    pub sentence: usize,
    pub position: usize,
    pub tag: usize,
}

/// Per-position entropies of a model over the pool, indexed like the pool's
/// sentences.
pub type PoolEntropies = Vec<Vec<f64>>;

/// Oracle corpus plus what has been revealed of it.
#[derive(Clone, Debug)]
pub struct AnnotationPool {
    oracle: TaggedCorpus,
    revealed: Vec<Vec<Option<usize>>>,
    annotated_tokens: BTreeSet<(usize, usize)>,
    annotated_types: BTreeSet<String>,
    budget_spent: usize,
    /// Occurrences of each type as (sentence, position), in pool order.
    occurrences: BTreeMap<String, Vec<(usize, usize)>>,
}

impl AnnotationPool {
    /// The oracle corpus must be fully labelled.
    pub fn new(oracle: TaggedCorpus) -> Result<Self> {
        if oracle.labeled_count() != oracle.token_count() {
            return Err(Error::invalid("the oracle pool must carry a gold tag on every token"));
        }
        let mut occurrences: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        for (i, s) in oracle.sentences.iter().enumerate() {
            for (t, w) in s.tokens.iter().enumerate() {
                occurrences.entry(w.clone()).or_default().push((i, t));
            }
        }
        let revealed = oracle.sentences.iter().map(|s| vec![None; s.len()]).collect();
        Ok(AnnotationPool {
            oracle,
            revealed,
            annotated_tokens: BTreeSet::new(),
            annotated_types: BTreeSet::new(),
            budget_spent: 0,
            occurrences,
        })
    }

    pub fn oracle(&self) -> &TaggedCorpus {
        &self.oracle
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.oracle.sentences
    }

    pub fn token_count(&self) -> usize {
        self.oracle.token_count()
    }

    pub fn budget_spent(&self) -> usize {
        self.budget_spent
    }

    pub fn annotated_tokens(&self) -> &BTreeSet<(usize, usize)> {
        &self.annotated_tokens
    }

    pub fn annotated_types(&self) -> &BTreeSet<String> {
        &self.annotated_types
    }

    pub fn is_annotated(&self, sentence: usize, position: usize) -> bool {
        self.annotated_tokens.contains(&(sentence, position))
    }

    /// Number of pool occurrences of `word`.
    pub fn frequency(&self, word: &str) -> usize {
        self.occurrences.get(word).map_or(0, Vec::len)
    }

    pub fn is_exhausted(&self) -> bool {
        self.annotated_tokens.len() == self.token_count()
    }

    /// Most frequent gold tag of `word` over the oracle corpus; ties go to
    /// the lowest tag index.
    pub fn majority_tag(&self, word: &str) -> Option<usize> {
        let occ = self.occurrences.get(word)?;
        let mut counts = vec![0usize; self.oracle.tagset.len()];
        for &(s, t) in occ {
            counts[self.gold(s, t)] += 1;
        }
        let mut best = 0;
        for (i, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = i;
            }
        }
        Some(best)
    }

    fn gold(&self, s: usize, t: usize) -> usize {
        self.oracle.sentences[s].tags[t].expect("oracle is fully labelled")
    }

    fn unrevealed_in_type(&self, word: &str) -> usize {
        self.occurrences
            .get(word)
            .map_or(0, |occ| occ.iter().filter(|&&(s, t)| !self.is_annotated(s, t)).count())
    }

    fn unrevealed_in_sentence(&self, s: usize) -> usize {
        self.revealed[s].iter().filter(|r| r.is_none()).count()
    }

    /// Number of token positions `payload` would newly label.
    pub fn cost(&self, payload: &Payload) -> usize {
        match payload {
            Payload::Token { sentence, position } => usize::from(!self.is_annotated(*sentence, *position)),
            Payload::Sentence(s) => self.unrevealed_in_sentence(*s),
            Payload::Type(w) => self.unrevealed_in_type(w),
        }
    }

    /// Reveals labels for `selection`. Positions already revealed keep their
    /// label and cost nothing.
    pub fn annotate(&mut self, selection: &Selection) -> Result<Vec<Revealed>> {
        let mut out = Vec::new();
        match &selection.payload {
            Payload::Token { sentence, position } => {
                let (s, t) = (*sentence, *position);
                if s >= self.revealed.len() || t >= self.revealed[s].len() {
                    return Err(Error::invalid(format!("no token at ({s}, {t})")));
                }
                if self.is_annotated(s, t) {
                    return Err(Error::invalid(format!("token ({s}, {t}) is already annotated")));
                }
                out.push(self.reveal(s, t, self.gold(s, t)));
            }
            Payload::Sentence(s) => {
                let s = *s;
                if s >= self.revealed.len() {
                    return Err(Error::invalid(format!("no sentence {s}")));
                }
                if self.unrevealed_in_sentence(s) == 0 {
                    return Err(Error::invalid(format!("sentence {s} is already annotated")));
                }
                for t in 0..self.revealed[s].len() {
                    if !self.is_annotated(s, t) {
                        out.push(self.reveal(s, t, self.gold(s, t)));
                    }
                }
            }
            Payload::Type(w) => {
                if self.annotated_types.contains(w) {
                    return Err(Error::invalid(format!("type {w:?} is already annotated")));
                }
                let Some(tag) = self.majority_tag(w) else {
                    return Err(Error::invalid(format!("type {w:?} does not occur in the pool")));
                };
                let occ = self.occurrences[w].clone();
                for (s, t) in occ {
                    if !self.is_annotated(s, t) {
                        out.push(self.reveal(s, t, tag));
                    }
                }
                self.annotated_types.insert(w.clone());
            }
        }
        Ok(out)
    }

    fn reveal(&mut self, s: usize, t: usize, tag: usize) -> Revealed {
        self.revealed[s][t] = Some(tag);
        self.annotated_tokens.insert((s, t));
        self.budget_spent += 1;
        Revealed {
            sentence: s,
            position: t,
            tag,
        }
    }

    /// The revealed labels as a partially labelled gold corpus. Sentences
    /// without any revealed label are left out.
    pub fn labeled_corpus(&self) -> TaggedCorpus {
        let sentences = self
            .oracle
            .sentences
            .iter()
            .zip(&self.revealed)
            .filter(|(_, r)| r.iter().any(Option::is_some))
            .map(|(s, r)| Sentence {
                tokens: s.tokens.clone(),
                tags: r.clone(),
            })
            .collect();
        TaggedCorpus {
            sentences,
            provenance: Provenance::Gold,
            tagset: self.oracle.tagset.clone(),
        }
    }
}

/// Entropy in nats of the evaluation head's distribution at position `t`.
pub fn token_entropy(model: &Tagger, space: &EmbeddingSpace, tokens: &[String], t: usize) -> Result<f64> {
    if t >= tokens.len() {
        return Err(Error::invalid(format!("position {t} outside a {}-token sentence", tokens.len())));
    }
    Ok(sentence_entropies(model, space, tokens)?[t])
}

fn sentence_entropies(model: &Tagger, space: &EmbeddingSpace, tokens: &[String]) -> Result<Vec<f64>> {
    let inputs: Vec<&[f64]> = tokens.iter().map(|w| space.lookup(w)).collect();
    let probs = model.probabilities(&inputs, model.evaluation_head())?;
    Ok(probs.iter().map(|p| entropy(p)).collect())
}

pub fn pool_entropies(model: &Tagger, space: &EmbeddingSpace, pool: &AnnotationPool) -> Result<PoolEntropies> {
    pool.sentences()
        .iter()
        .map(|s| sentence_entropies(model, space, &s.tokens))
        .collect()
}

/// Picks the next selection under `strategy`, considering only candidates
/// whose cost is at most `max_cost` when given. `None` when nothing is left.
///
/// Maximal scores tie-break on the token or type string, then on the lowest
/// (sentence, position).
pub fn choose<R: Rng + ?Sized>(
    strategy: Strategy,
    pool: &AnnotationPool,
    entropies: Option<&PoolEntropies>,
    rng: &mut R,
    max_cost: Option<usize>,
) -> Result<Option<Selection>> {
    let fits = |c: usize| c > 0 && max_cost.is_none_or(|m| c <= m);
    let ent = || {
        entropies.ok_or_else(|| Error::invalid(format!("strategy {strategy} needs model entropies")))
    };
    if let Some(e) = entropies {
        let shape_ok = e.len() == pool.sentences().len()
            && e.iter().zip(pool.sentences()).all(|(row, s)| row.len() == s.len());
        if !shape_ok {
            return Err(Error::invalid("entropy table does not match the pool"));
        }
    }
    let sentences = pool.sentences();

    let sel = match strategy {
        Strategy::Token => {
            let e = ent()?;
            let mut best: Option<(f64, &str, usize, usize)> = None;
            for (i, s) in sentences.iter().enumerate() {
                for (t, w) in s.tokens.iter().enumerate() {
                    if pool.is_annotated(i, t) || !fits(1) {
                        continue;
                    }
                    let h = e[i][t];
                    let better = match best {
                        None => true,
                        Some((bh, bw, _, _)) => h > bh || (h == bh && w.as_str() < bw),
                    };
                    if better {
                        best = Some((h, w, i, t));
                    }
                }
            }
            best.map(|(h, _, i, t)| Selection {
                payload: Payload::Token {
                    sentence: i,
                    position: t,
                },
                score: h,
            })
        }
        Strategy::Sent => {
            let e = ent()?;
            let mut best: Option<(f64, usize)> = None;
            for (i, s) in sentences.iter().enumerate() {
                if !fits(pool.unrevealed_in_sentence(i)) {
                    continue;
                }
                let h: f64 = (0..s.len()).filter(|&t| !pool.is_annotated(i, t)).map(|t| e[i][t]).sum();
                let better = match best {
                    None => true,
                    Some((bh, bi)) => h > bh || (h == bh && s.tokens < sentences[bi].tokens),
                };
                if better {
                    best = Some((h, i));
                }
            }
            best.map(|(h, i)| Selection {
                payload: Payload::Sentence(i),
                score: h,
            })
        }
        Strategy::FreqType | Strategy::SumType | Strategy::Random => {
            let candidates: Vec<&String> = pool
                .occurrences
                .keys()
                .filter(|w| !pool.annotated_types.contains(*w) && fits(pool.unrevealed_in_type(w)))
                .collect();
            if candidates.is_empty() {
                None
            } else if strategy == Strategy::Random {
                let w = candidates[rng.random_range(0..candidates.len())];
                Some(Selection {
                    payload: Payload::Type(w.clone()),
                    score: 0.0,
                })
            } else {
                let score = |w: &str| -> Result<f64> {
                    let occ = &pool.occurrences[w];
                    Ok(match strategy {
                        Strategy::FreqType => occ.len() as f64,
                        _ => {
                            let e = ent()?;
                            occ.iter().map(|&(s, t)| e[s][t]).sum()
                        }
                    })
                };
                // Candidates are in lexicographic order, so a strict `>`
                // keeps the smallest string among equal scores.
                let mut best = (candidates[0], score(candidates[0])?);
                for &w in &candidates[1..] {
                    let sc = score(w)?;
                    if sc > best.1 {
                        best = (w, sc);
                    }
                }
                Some(Selection {
                    payload: Payload::Type(best.0.clone()),
                    score: best.1,
                })
            }
        }
    };
    Ok(sel)
}

/// Picks the next selection, computing entropies from `model` when the
/// strategy needs them.
pub fn select<R: Rng + ?Sized>(
    strategy: Strategy,
    pool: &AnnotationPool,
    model: &Tagger,
    space: &EmbeddingSpace,
    rng: &mut R,
) -> Result<Selection> {
    let entropies = if strategy.needs_entropy() {
        Some(pool_entropies(model, space, pool)?)
    } else {
        None
    };
    choose(strategy, pool, entropies.as_ref(), rng, None)?.ok_or(Error::PoolExhausted)
}

/// Everything a simulation run needs besides the strategy.
#[derive(Clone, Debug)]
pub struct SimulationSetup<'a> {
    /// Oracle pool with hidden gold tags.
    pub pool: &'a TaggedCorpus,
    /// Distant corpus; required for the joint base.
    pub distant: Option<&'a TaggedCorpus>,
    pub dev: &'a TaggedCorpus,
    pub test: &'a TaggedCorpus,
    pub space: &'a EmbeddingSpace,
    pub tagger: TaggerConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub budget: usize,
    /// Labelled positions actually spent; at most `budget`.
    pub spent: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearningCurve {
    pub strategy: Strategy,
    pub base: Base,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    /// Lines of `strategy base seed budget accuracy`, tab-separated.
    pub fn to_tsv(&self) -> String {
        self.points
            .iter()
            .map(|p| format!("{}\t{}\t{}\t{}\t{:.4}\n", self.strategy, self.base, self.seed, p.budget, p.accuracy))
            .collect()
    }
}

fn train_on(base: Base, pool: &AnnotationPool, setup: &SimulationSetup, empty_distant: &TaggedCorpus) -> Result<Tagger> {
    let model = Tagger::new(&setup.tagger, setup.pool.tagset.clone(), setup.space.space_id.clone());
    let gold = pool.labeled_corpus();
    let distant = match base {
        Base::Trad => empty_distant,
        Base::Joint => setup.distant.unwrap_or(empty_distant),
    };
    if gold.labeled_count() == 0 && distant.labeled_count() == 0 {
        return Ok(model);
    }
    let (m, _) = train(model, &JointBatch::new(distant, &gold), setup.dev, setup.space, &setup.train)?;
    Ok(m)
}

/// Alternates picking and annotating with retraining up to each budget checkpoint and records
/// test accuracy there.
///
/// Between checkpoints the most recent model ranks candidates, and each pick
/// is the best-ranked one that still fits the remaining budget. Models are
/// retrained from the same seeded initialization at every checkpoint. A
/// checkpoint beyond the pool size truncates the curve.
pub fn simulate(
    strategy: Strategy,
    base: Base,
    schedule: &[usize],
    setup: &SimulationSetup,
    seed: u64,
) -> Result<(LearningCurve, AnnotationPool)> {
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("budget schedule must be strictly increasing"));
    }
    if base == Base::Joint && setup.distant.is_none_or(|d| d.labeled_count() == 0) {
        return Err(Error::invalid("the joint base needs a non-empty distant corpus"));
    }
    let mut pool = AnnotationPool::new(setup.pool.clone())?;
    let empty = TaggedCorpus::empty(Provenance::Distant, setup.pool.tagset.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = LearningCurve {
        strategy,
        base,
        seed,
        points: Vec::new(),
    };
    let mut model = train_on(base, &pool, setup, &empty)?;

    for &budget in schedule {
        if budget > pool.token_count() {
            warn!(
                "budget {budget} exceeds the pool's {} tokens; truncating the curve",
                pool.token_count()
            );
            break;
        }
        if budget > pool.budget_spent() {
            let entropies = if strategy.needs_entropy() {
                Some(pool_entropies(&model, setup.space, &pool)?)
            } else {
                None
            };
            while pool.budget_spent() < budget {
                let room = budget - pool.budget_spent();
                match choose(strategy, &pool, entropies.as_ref(), &mut rng, Some(room))? {
                    Some(sel) => {
                        pool.annotate(&sel)?;
                    }
                    None => break,
                }
            }
            model = train_on(base, &pool, setup, &empty)?;
        }
        let acc = evaluate(&model, setup.test, setup.space, model.evaluation_head())?.percent();
        info!("{strategy}/{base} seed {seed}: budget {budget} (spent {}) accuracy {acc:.2}", pool.budget_spent());
        curve.points.push(CurvePoint {
            budget,
            spent: pool.budget_spent(),
            accuracy: acc,
        });
    }
    Ok((curve, pool))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{EmbeddingMatrix, Vocabulary};
    use crate::tagger::TagSet;
    use approx::assert_abs_diff_eq;

    fn tagset(k: usize) -> TagSet {
        TagSet::new((0..k).map(|i| format!("T{i}")).collect()).unwrap()
    }

    fn pool(sents: &[(&str, &[usize])], k: usize) -> AnnotationPool {
        let sentences = sents
            .iter()
            .map(|(s, tags)| Sentence::new(s.split(' ').map(String::from).collect(), tags.to_vec()))
            .collect();
        AnnotationPool::new(TaggedCorpus::new(sentences, Provenance::Gold, tagset(k)).unwrap()).unwrap()
    }

    fn table(p: &AnnotationPool, f: impl Fn(&str) -> f64) -> PoolEntropies {
        p.sentences().iter().map(|s| s.tokens.iter().map(|w| f(w)).collect()).collect()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn zero_model_entropy_is_ln_k() {
        let space = EmbeddingSpace::new(
            Vocabulary::new(vec!["x".into()]).unwrap(),
            EmbeddingMatrix::new(2, 2, vec![1.0, 2.0, 0.0, 0.0]).unwrap(),
            "s",
        );
        let mut cfg = TaggerConfig::new(2);
        cfg.hidden = 2;
        let m = Tagger::zeros(&cfg, TagSet::universal(), "s");
        let toks: Vec<String> = vec!["x".into(), "y".into(), "x".into()];
        for t in 0..3 {
            assert_abs_diff_eq!(token_entropy(&m, &space, &toks, t).unwrap(), 12f64.ln(), epsilon = 1e-12);
        }
        assert!(token_entropy(&m, &space, &toks, 3).is_err());
    }

    #[test]
    fn sumtype_hand_pool() {
        // a: 0.5 + 0.5, b: 0.9, c: 0.3
        let p = pool(&[("a b", &[0, 0]), ("c a", &[0, 0])], 2);
        let e = table(&p, |w| match w {
            "a" => 0.5,
            "b" => 0.9,
            _ => 0.3,
        });
        let s = choose(Strategy::SumType, &p, Some(&e), &mut rng(), None).unwrap().unwrap();
        assert_eq!(s.payload, Payload::Type("a".into()));
        assert_abs_diff_eq!(s.score, 1.0, epsilon = 1e-12);
        let t = choose(Strategy::Token, &p, Some(&e), &mut rng(), None).unwrap().unwrap();
        assert_eq!(
            t.payload,
            Payload::Token {
                sentence: 0,
                position: 1
            }
        );
    }

    #[test]
    fn token_ties_break_on_word_then_position() {
        let p = pool(&[("zz yy", &[0, 0]), ("yy q", &[0, 0])], 2);
        let e = table(&p, |w| if w == "q" { 0.1 } else { 0.7 });
        let s = choose(Strategy::Token, &p, Some(&e), &mut rng(), None).unwrap().unwrap();
        assert_eq!(
            s.payload,
            Payload::Token {
                sentence: 0,
                position: 1
            }
        );
    }

    #[test]
    fn sent_counts_unannotated_only() {
        let mut p = pool(&[("a b c", &[0, 0, 0]), ("d e", &[0, 0])], 2);
        let e = table(&p, |w| if w == "a" { 2.0 } else { 0.5 });
        let first = choose(Strategy::Sent, &p, Some(&e), &mut rng(), None).unwrap().unwrap();
        assert_eq!(first.payload, Payload::Sentence(0));
        p.annotate(&Selection {
            payload: Payload::Token {
                sentence: 0,
                position: 0,
            },
            score: 0.0,
        })
        .unwrap();
        let next = choose(Strategy::Sent, &p, Some(&e), &mut rng(), None).unwrap().unwrap();
        // 1.0 for the rest of sentence 0 vs 1.0 for sentence 1: "a b c" < "d e".
        assert_eq!(next.payload, Payload::Sentence(0));
        assert_abs_diff_eq!(next.score, 1.0);
        assert_eq!(p.annotate(&next).unwrap().len(), 2);
        assert_eq!(p.budget_spent(), 3);
    }

    #[test]
    fn type_annotation_uses_majority() {
        let mut p = pool(
            &[("bank x", &[0, 1]), ("bank bank", &[0, 1]), ("bank bank", &[0, 0])],
            3,
        );
        let sel = Selection {
            payload: Payload::Type("bank".into()),
            score: 0.0,
        };
        let rev = p.annotate(&sel).unwrap();
        assert_eq!(rev.len(), 5);
        assert!(rev.iter().all(|r| r.tag == 0));
        assert_eq!(p.budget_spent(), 5);
        assert!(p.annotate(&sel).is_err());

        let tie = pool(&[("w w w w", &[2, 1, 1, 2])], 3);
        assert_eq!(tie.majority_tag("w"), Some(1));
    }

    #[test]
    fn sentence_annotation_reveals_gold() {
        let mut p = pool(&[("a b c d e f g", &[0, 1, 2, 0, 1, 2, 0])], 3);
        let rev = p
            .annotate(&Selection {
                payload: Payload::Sentence(0),
                score: 0.0,
            })
            .unwrap();
        assert_eq!(rev.iter().map(|r| r.tag).collect::<Vec<_>>(), vec![0, 1, 2, 0, 1, 2, 0]);
        assert_eq!(p.budget_spent(), 7);
        assert!(p.is_exhausted());
        assert!(matches!(
            choose(Strategy::Sent, &p, Some(&vec![vec![0.0; 7]]), &mut rng(), None),
            Ok(None)
        ));
    }

    #[test]
    fn uniform_entropies_make_sumtype_equal_freqtype() {
        let p = pool(&[("b a c a", &[0; 4]), ("c a b d", &[0; 4])], 2);
        let e = table(&p, |_| 2f64.ln());
        let f = choose(Strategy::FreqType, &p, None, &mut rng(), None).unwrap().unwrap();
        let s = choose(Strategy::SumType, &p, Some(&e), &mut rng(), None).unwrap().unwrap();
        assert_eq!(f.payload, Payload::Type("a".into()));
        assert_eq!(f.payload, s.payload);
    }

    #[test]
    fn max_cost_filters_candidates() {
        let p = pool(&[("a a a b", &[0; 4]), ("c", &[0])], 2);
        let f = choose(Strategy::FreqType, &p, None, &mut rng(), Some(2)).unwrap().unwrap();
        assert_eq!(f.payload, Payload::Type("b".into()));
        let e = table(&p, |_| 1.0);
        let s = choose(Strategy::Sent, &p, Some(&e), &mut rng(), Some(2)).unwrap().unwrap();
        assert_eq!(s.payload, Payload::Sentence(1));
        assert!(choose(Strategy::Sent, &p, Some(&e), &mut rng(), Some(0)).unwrap().is_none());
    }

    #[test]
    fn random_is_reproducible_and_covers_types() {
        let p = pool(&[("a b c d e f", &[0; 6])], 2);
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| choose(Strategy::Random, &p, None, &mut r, None).unwrap().unwrap().payload)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        let seen: BTreeSet<_> = draw(3).into_iter().collect();
        assert!(seen.len() > 1);
    }

    #[test]
    fn entropy_strategies_require_entropies() {
        let p = pool(&[("a", &[0])], 2);
        assert!(choose(Strategy::SumType, &p, None, &mut rng(), None).is_err());
        assert!(choose(Strategy::Token, &p, Some(&vec![vec![]]), &mut rng(), None).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("entropy".parse::<Strategy>().is_err());
        assert_eq!("Joint".parse::<Base>().unwrap(), Base::Joint);
    }

    #[test]
    fn labeled_corpus_is_partial() {
        let mut p = pool(&[("a b", &[1, 0]), ("c", &[1])], 2);
        p.annotate(&Selection {
            payload: Payload::Token {
                sentence: 0,
                position: 1,
            },
            score: 0.0,
        })
        .unwrap();
        let c = p.labeled_corpus();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences[0].tags, vec![None, Some(0)]);
        assert_eq!(c.labeled_count(), p.budget_spent());
    }
}
