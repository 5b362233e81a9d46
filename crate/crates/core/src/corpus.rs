//! CoNLL-style corpus reading and writing, tag mapping and the gold/dev split.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tagger::TagSet;

/// Number of leading sentences used as gold training data, and of trailing
/// sentences used for development.
pub const SPLIT_SIZE: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Gold,
    Distant,
    Unlabeled,
}

/// Zero-based FORM and POSTAG column indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConllColumns {
    pub form: usize,
    pub postag: usize,
}

impl Default for ConllColumns {
    fn default() -> Self {
        ConllColumns { form: 1, postag: 4 }
    }
}

/// Sentences with their original (fine-grained) tag strings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawCorpus {
    pub sentences: Vec<RawSentence>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

impl RawCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Drops the tags, keeping tokens.
    pub fn unlabeled(&self, tagset: &TagSet) -> TaggedCorpus {
        TaggedCorpus {
            sentences: self
                .sentences
                .iter()
                .map(|s| Sentence::unlabeled(s.tokens.clone()))
                .collect(),
            provenance: Provenance::Unlabeled,
            tagset: tagset.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    /// `None` marks a token whose label is unknown.
    pub tags: Vec<Option<usize>>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, tags: Vec<usize>) -> Self {
        assert_eq!(tokens.len(), tags.len());
        Sentence {
            tokens,
            tags: tags.into_iter().map(Some).collect(),
        }
    }

    pub fn unlabeled(tokens: Vec<String>) -> Self {
        let tags = vec![None; tokens.len()];
        Sentence { tokens, tags }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn labeled_count(&self) -> usize {
        self.tags.iter().filter(|t| t.is_some()).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggedCorpus {
    pub sentences: Vec<Sentence>,
    pub provenance: Provenance,
    pub tagset: TagSet,
}

impl TaggedCorpus {
    pub fn new(sentences: Vec<Sentence>, provenance: Provenance, tagset: TagSet) -> Result<Self> {
        let c = TaggedCorpus {
            sentences,
            provenance,
            tagset,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn empty(provenance: Provenance, tagset: TagSet) -> Self {
        TaggedCorpus {
            sentences: Vec::new(),
            provenance,
            tagset,
        }
    }

    fn validate(&self) -> Result<()> {
        let k = self.tagset.len();
        for (i, s) in self.sentences.iter().enumerate() {
            if s.tokens.len() != s.tags.len() {
                return Err(Error::invalid(format!("sentence {i}: token/tag count differ")));
            }
            for t in s.tags.iter().flatten() {
                if *t >= k {
                    return Err(Error::invalid(format!("sentence {i}: tag index {t} >= {k}")));
                }
            }
            if self.provenance == Provenance::Unlabeled && s.labeled_count() > 0 {
                return Err(Error::invalid("unlabeled corpus carries tags"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Number of tokens carrying a label.
    pub fn labeled_count(&self) -> usize {
        self.sentences.iter().map(Sentence::labeled_count).sum()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        if provenance == Provenance::Unlabeled {
            for s in &mut self.sentences {
                s.tags.iter_mut().for_each(|t| *t = None);
            }
        }
        self.provenance = provenance;
        self
    }

    /// Tag strings back from indices; unlabeled tokens get `_`.
    pub fn to_raw(&self) -> RawCorpus {
        RawCorpus {
            sentences: self
                .sentences
                .iter()
                .map(|s| RawSentence {
                    tokens: s.tokens.clone(),
                    tags: s
                        .tags
                        .iter()
                        .map(|t| t.map_or("_".to_string(), |t| self.tagset.name(t).to_string()))
                        .collect(),
                })
                .collect(),
        }
    }

    /// Per-tag label counts, indexed by tag.
    pub fn tag_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.tagset.len()];
        for t in self.sentences.iter().flat_map(|s| s.tags.iter().flatten()) {
            counts[*t] += 1;
        }
        counts
    }
}

/// Reads blank-line separated sentences, one token per line with
/// tab-separated columns. Lines starting with `#` are skipped.
pub fn read_conll<R: BufRead>(reader: R, cols: ConllColumns) -> Result<RawCorpus> {
    let need = cols.form.max(cols.postag) + 1;
    let mut corpus = RawCorpus::default();
    let mut current = RawSentence::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.tokens.is_empty() {
                corpus.sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < need {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected at least {need} columns, found {}", fields.len()),
            });
        }
        current.tokens.push(fields[cols.form].to_string());
        current.tags.push(fields[cols.postag].to_string());
    }
    if !current.tokens.is_empty() {
        corpus.sentences.push(current);
    }
    Ok(corpus)
}

pub fn read_conll_file(path: &Path, cols: ConllColumns) -> Result<RawCorpus> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_conll(std::io::BufReader::new(f), cols)
}

/// Writes the corpus so that [`read_conll`] with the same columns restores
/// tokens and tags. Column 0 holds the 1-based token id unless it is the FORM
/// or POSTAG column; remaining columns are `_`.
pub fn write_conll<W: Write>(mut w: W, corpus: &RawCorpus, cols: ConllColumns) -> std::io::Result<()> {
    let width = cols.form.max(cols.postag) + 1;
    let mut fields = vec![String::new(); width];
    for (si, s) in corpus.sentences.iter().enumerate() {
        if si > 0 {
            writeln!(w)?;
        }
        for (i, (tok, tag)) in s.tokens.iter().zip(&s.tags).enumerate() {
            for f in fields.iter_mut() {
                f.clear();
                f.push('_');
            }
            if cols.form != 0 && cols.postag != 0 {
                fields[0] = (i + 1).to_string();
            }
            fields[cols.form] = tok.clone();
            fields[cols.postag] = tag.clone();
            writeln!(w, "{}", fields.join("\t"))?;
        }
    }
    Ok(())
}

/// Fine-grained tag to universal tag.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TagMapping {
    entries: BTreeMap<String, String>,
}

impl TagMapping {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        TagMapping {
            entries: entries.into_iter().collect(),
        }
    }

    /// Every tag of `tagset` mapped to itself.
    pub fn identity(tagset: &TagSet) -> Self {
        Self::new(tagset.tags().iter().map(|t| (t.clone(), t.clone())))
    }

    /// Two-column TSV `fine<TAB>universal`; `#` lines are comments.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((fine, universal)) = line.split_once('\t') else {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected fine<TAB>universal".into(),
                });
            };
            entries.insert(fine.trim().to_string(), universal.trim().to_string());
        }
        Ok(TagMapping { entries })
    }

    pub fn get(&self, fine: &str) -> Option<&str> {
        self.entries.get(fine).map(String::as_str)
    }
}

/// Replaces every tag by the index of its universal equivalent. Fails listing
/// all tags the mapping does not cover.
pub fn map_tags(corpus: &RawCorpus, mapping: &TagMapping, universal: &TagSet) -> Result<TaggedCorpus> {
    let mut unmapped = BTreeSet::new();
    let mut sentences = Vec::with_capacity(corpus.len());
    for s in &corpus.sentences {
        let mut tags = Vec::with_capacity(s.tags.len());
        for t in &s.tags {
            match mapping.get(t) {
                Some(u) => match universal.get(u) {
                    Some(idx) => tags.push(Some(idx)),
                    None => return Err(Error::UnknownTag(u.to_string())),
                },
                None => {
                    unmapped.insert(t.clone());
                    tags.push(None);
                }
            }
        }
        sentences.push(Sentence {
            tokens: s.tokens.clone(),
            tags,
        });
    }
    if !unmapped.is_empty() {
        return Err(Error::UnmappedTags(unmapped.into_iter().collect()));
    }
    Ok(TaggedCorpus {
        sentences,
        provenance: Provenance::Gold,
        tagset: universal.clone(),
    })
}

/// Splits off the first [`SPLIT_SIZE`] sentences as gold training data and the
/// last [`SPLIT_SIZE`] as development data. Everything in between is returned
/// untagged.
pub fn split_corpus(corpus: &TaggedCorpus) -> Result<(TaggedCorpus, TaggedCorpus, TaggedCorpus)> {
    let n = corpus.len();
    if n < 2 * SPLIT_SIZE + 1 {
        return Err(Error::CorpusTooSmall(n));
    }
    let part = |range: std::ops::Range<usize>, provenance| {
        TaggedCorpus {
            sentences: corpus.sentences[range].to_vec(),
            provenance: Provenance::Gold,
            tagset: corpus.tagset.clone(),
        }
        .with_provenance(provenance)
    };
    Ok((
        part(0..SPLIT_SIZE, Provenance::Gold),
        part(n - SPLIT_SIZE..n, Provenance::Gold),
        part(SPLIT_SIZE..n - SPLIT_SIZE, Provenance::Unlabeled),
    ))
}

/// One sentence per line, whitespace-separated tokens.
pub fn read_plain<R: BufRead>(reader: R) -> Result<RawCorpus> {
    let mut corpus = RawCorpus::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let tokens: Vec<String> = line.split_whitespace().map(String::from).collect();
        if tokens.is_empty() {
            continue;
        }
        let tags = vec!["_".to_string(); tokens.len()];
        corpus.sentences.push(RawSentence { tokens, tags });
    }
    Ok(corpus)
}
