//! Word embeddings: word2vec text I/O, vocabulary lookup and CCA alignment of
//! two monolingual spaces through a bilingual lexicon.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Reserved name of the out-of-vocabulary slot.
pub const UNK: &str = "<unk>";

/// Ridge added to a rank-deficient covariance diagonal before whitening.
pub const CCA_RIDGE: f64 = 1e-8;

// Smallest/largest eigenvalue ratio below which a covariance is treated as
// singular.
const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    unk_index: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from unique words; the unknown slot is appended.
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len() + 1);
        for (i, w) in words.iter().enumerate() {
            if w == UNK || index.insert(w.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate or reserved word {w:?}")));
            }
        }
        let unk_index = words.len();
        let mut words = words;
        words.push(UNK.to_string());
        Ok(Vocabulary {
            words,
            index,
            unk_index,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unk_index(&self) -> usize {
        self.unk_index
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    /// Words in index order, including the unknown slot.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Exact lookup, `None` for unseen words.
    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Index of `word`, folding case first when `lowercase` is set. Unseen
    /// words map to the unknown slot.
    pub fn lookup(&self, word: &str, lowercase: bool) -> usize {
        if lowercase {
            let folded = word.to_lowercase();
            if let Some(i) = self.get(&folded) {
                return i;
            }
        }
        self.get(word).unwrap_or(self.unk_index)
    }
}

/// Dense row-major matrix of word vectors, one row per vocabulary entry.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim || dim == 0 {
            return Err(Error::invalid(format!(
                "embedding matrix {rows}x{dim} cannot hold {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding matrix contains non-finite values"));
        }
        Ok(EmbeddingMatrix { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows multiplied by `proj` (dim x k).
    pub fn project(&self, proj: &Projection) -> Result<EmbeddingMatrix> {
        if proj.input_dim != self.dim {
            return Err(Error::invalid(format!(
                "projection expects dimension {}, embeddings have {}",
                proj.input_dim, self.dim
            )));
        }
        let k = proj.output_dim;
        let mut data = vec![0.0; self.rows * k];
        for r in 0..self.rows {
            let x = self.row(r);
            let out = &mut data[r * k..(r + 1) * k];
            for (i, &xi) in x.iter().enumerate() {
                let prow = &proj.data[i * k..(i + 1) * k];
                for (o, &p) in out.iter_mut().zip(prow) {
                    *o += xi * p;
                }
            }
        }
        EmbeddingMatrix::new(self.rows, k, data)
    }
}

/// Reads embeddings in word2vec text layout. An optional `count dim` header
/// is accepted. Vocabulary order follows the file; the unknown row is the mean
/// of all loaded rows.
pub fn load_embeddings<R: BufRead>(reader: R) -> Result<(Vocabulary, EmbeddingMatrix)> {
    let mut words = Vec::new();
    let mut seen = HashSet::new();
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();

        if lineno == 1 && rest.len() == 1 {
            if let (Ok(_), Ok(d)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                if d == 0 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "header declares dimension 0".into(),
                    });
                }
                dim = Some(d);
                continue;
            }
        }

        let values = rest
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad number: {e}"),
            })?;
        if values.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("word {word:?} has no vector"),
            });
        }
        match dim {
            Some(d) if d != values.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {d} values, found {}", values.len()),
                })
            }
            None => dim = Some(values.len()),
            _ => {}
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: lineno,
                message: "non-finite value".into(),
            });
        }
        if word == UNK {
            warn!("line {lineno}: skipping reserved word {UNK}");
            continue;
        }
        if !seen.insert(word.to_string()) {
            warn!("line {lineno}: duplicate word {word:?}, keeping first occurrence");
            continue;
        }
        words.push(word.to_string());
        data.extend(values);
    }

    let dim = dim.ok_or(Error::NoEmbeddings)?;
    if words.is_empty() {
        return Err(Error::NoEmbeddings);
    }
    let n = words.len();
    let mut mean = vec![0.0; dim];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(&data[r * dim..(r + 1) * dim]) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    data.extend(mean);

    let vocab = Vocabulary::new(words)?;
    let matrix = EmbeddingMatrix::new(n + 1, dim, data)?;
    Ok((vocab, matrix))
}

/// Writes embeddings (without the unknown row) with a `count dim` header.
/// Values are printed with 17 significant digits.
pub fn write_embeddings<W: Write>(
    mut w: W,
    vocab: &Vocabulary,
    matrix: &EmbeddingMatrix,
) -> std::io::Result<()> {
    let n = vocab.len() - 1;
    writeln!(w, "{} {}", n, matrix.dim())?;
    for i in 0..n {
        write!(w, "{}", vocab.word(i))?;
        for v in matrix.row(i) {
            write!(w, " {v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn load_embeddings_file(path: &Path) -> Result<(Vocabulary, EmbeddingMatrix)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_embeddings(std::io::BufReader::new(f))
}

/// Embeddings plus the identity of the vector space they live in.
#[derive(Clone, Debug)]
pub struct EmbeddingSpace {
    pub vocab: Vocabulary,
    pub matrix: EmbeddingMatrix,
    /// Spaces produced by the same alignment share an id.
    pub space_id: String,
    pub lowercase: bool,
}

impl EmbeddingSpace {
    pub fn new(vocab: Vocabulary, matrix: EmbeddingMatrix, space_id: impl Into<String>) -> Self {
        EmbeddingSpace {
            vocab,
            matrix,
            space_id: space_id.into(),
            lowercase: true,
        }
    }

    pub fn with_lowercase(mut self, lowercase: bool) -> Self {
        self.lowercase = lowercase;
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn index(&self, word: &str) -> usize {
        self.vocab.lookup(word, self.lowercase)
    }

    /// The word's vector, or the unknown vector.
    pub fn lookup(&self, word: &str) -> &[f64] {
        self.matrix.row(self.index(word))
    }

    pub fn is_known(&self, word: &str) -> bool {
        self.index(word) != self.vocab.unk_index()
    }

    /// Maps the space through `proj`; the result carries `space_id`.
    pub fn project(&self, proj: &Projection, space_id: impl Into<String>) -> Result<Self> {
        Ok(EmbeddingSpace {
            vocab: self.vocab.clone(),
            matrix: self.matrix.project(proj)?,
            space_id: space_id.into(),
            lowercase: self.lowercase,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BilingualLexicon {
    pairs: Vec<(String, String)>,
}

impl BilingualLexicon {
    /// Deduplicates pairs, keeping first-occurrence order.
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut seen = HashSet::new();
        let pairs = pairs
            .into_iter()
            .filter(|p| seen.insert(p.clone()))
            .collect();
        BilingualLexicon { pairs }
    }

    /// `source<TAB>target` per line; `#` lines are comments.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((src, tgt)) = trimmed.split_once('\t') else {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected source<TAB>target".into(),
                });
            };
            pairs.push((src.trim().to_string(), tgt.trim().to_string()));
        }
        let before = pairs.len();
        let lex = Self::new(pairs);
        if lex.len() < before {
            warn!("dropped {} duplicate lexicon pairs", before - lex.len());
        }
        Ok(lex)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Linear map from `input_dim` to `output_dim`, stored row-major
/// (`input_dim` rows).
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    input_dim: usize,
    output_dim: usize,
    data: Vec<f64>,
}

impl Projection {
    pub fn new(input_dim: usize, output_dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != input_dim * output_dim || input_dim == 0 || output_dim == 0 {
            return Err(Error::invalid(format!(
                "projection {input_dim}x{output_dim} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Projection {
            input_dim,
            output_dim,
            data,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Projection {
            input_dim: dim,
            output_dim: dim,
            data,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.output_dim + j]
    }

    /// `x` (length `input_dim`) mapped to length `output_dim`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &p) in out
                .iter_mut()
                .zip(&self.data[i * self.output_dim..(i + 1) * self.output_dim])
            {
                *o += xi * p;
            }
        }
        out
    }

    /// Header `d k`, then one line per input dimension, led by its index.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.input_dim, self.output_dim)?;
        for i in 0..self.input_dim {
            write!(w, "{i}")?;
            for j in 0..self.output_dim {
                write!(w, " {:.16e}", self.get(i, j))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((i, l)) => {
                    let l = l.map_err(|e| Error::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                    if !l.trim().is_empty() {
                        break l;
                    }
                }
                None => return Err(Error::invalid("empty projection file")),
            }
        };
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: 1,
                message: "projection header must be \"d k\"".into(),
            })?;
        let [d, k] = dims[..] else {
            return Err(Error::Parse {
                line: 1,
                message: "projection header must be \"d k\"".into(),
            });
        };
        let mut data = Vec::with_capacity(d * k);
        let mut rows = 0;
        for (i, l) in lines {
            let l = l.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let mut fields = l.split_whitespace();
            if fields.next().is_none() {
                continue;
            }
            let vals: Vec<f64> = fields
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("bad number: {e}"),
                })?;
            if vals.len() != k {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {k} values, found {}", vals.len()),
                });
            }
            data.extend(vals);
            rows += 1;
        }
        if rows != d {
            return Err(Error::invalid(format!(
                "projection declares {d} rows, found {rows}"
            )));
        }
        Projection::new(d, k, data)
    }
}

/// Result of [`cca_align`].
#[derive(Clone, Debug)]
pub struct CcaAlignment {
    pub src: Projection,
    pub tgt: Projection,
    /// Canonical correlations in decreasing order, one per output dimension.
    pub correlations: Vec<f64>,
    pub pairs_used: usize,
}

impl CcaAlignment {
    /// Stable identifier of the shared space, derived from both projections.
    pub fn space_id(&self) -> String {
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        self.src.write(&mut buf).expect("write to vec");
        self.tgt.write(&mut buf).expect("write to vec");
        hasher.update(&buf);
        format!("cca-{}", &hex::encode(hasher.finalize())[..16])
    }
}

/// Fits CCA on the lexicon pairs that resolve to known words on both sides.
///
/// Both sides are centred on the pair means, whitened with the inverse square
/// root of their covariance, and the whitened cross-covariance is decomposed
/// by SVD. `k` defaults to `min(d_src, d_tgt)`.
pub fn cca_align(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    lexicon: &BilingualLexicon,
    k: Option<usize>,
) -> Result<CcaAlignment> {
    let pairs: Vec<(usize, usize)> = lexicon
        .pairs()
        .iter()
        .filter_map(|(s, t)| {
            let si = src.index(s);
            let ti = tgt.index(t);
            (si != src.vocab.unk_index() && ti != tgt.vocab.unk_index()).then_some((si, ti))
        })
        .collect();
    let n = pairs.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "CCA needs at least 2 usable lexicon pairs, found {n}"
        )));
    }
    let (d1, d2) = (src.dim(), tgt.dim());
    let bound = d1.min(d2).min(n);
    let k = k.unwrap_or(d1.min(d2));
    if k == 0 || k > bound {
        return Err(Error::invalid(format!(
            "projection dimension k={k} must be between 1 and min(d_src={d1}, d_tgt={d2}, pairs={n}) = {bound}"
        )));
    }

    let x = centered(n, d1, pairs.iter().map(|&(s, _)| src.matrix.row(s)));
    let y = centered(n, d2, pairs.iter().map(|&(_, t)| tgt.matrix.row(t)));
    let scale = 1.0 / (n as f64 - 1.0);
    let cxx = x.transpose() * &x * scale;
    let cyy = y.transpose() * &y * scale;
    let cxy = x.transpose() * &y * scale;

    let wx = inverse_sqrt(cxx, "source")?;
    let wy = inverse_sqrt(cyy, "target")?;
    let t = &wx * cxy * &wy;
    let svd = t.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let order = &order[..k];

    let mut a = DMatrix::zeros(d1, k);
    let mut b = DMatrix::zeros(d2, k);
    for (col, &j) in order.iter().enumerate() {
        a.set_column(col, &(&wx * u.column(j)));
        b.set_column(col, &(&wy * v_t.row(j).transpose()));
    }
    let correlations = order.iter().map(|&j| svd.singular_values[j]).collect();

    Ok(CcaAlignment {
        src: to_projection(&a),
        tgt: to_projection(&b),
        correlations,
        pairs_used: n,
    })
}

fn centered<'a>(n: usize, d: usize, rows: impl Iterator<Item = &'a [f64]>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, d);
    for (i, r) in rows.enumerate() {
        for (j, &v) in r.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    for j in 0..d {
        let mean = m.column(j).mean();
        for i in 0..n {
            m[(i, j)] -= mean;
        }
    }
    m
}

fn is_rank_deficient(eig: &SymmetricEigen<f64, nalgebra::Dyn>) -> bool {
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    max <= 0.0 || min <= RANK_TOL * max
}

fn inverse_sqrt(mut cov: DMatrix<f64>, side: &str) -> Result<DMatrix<f64>> {
    let mut eig = cov.clone().symmetric_eigen();
    if is_rank_deficient(&eig) {
        warn!("{side} covariance is rank deficient, adding {CCA_RIDGE} to the diagonal");
        for i in 0..cov.nrows() {
            cov[(i, i)] += CCA_RIDGE;
        }
        eig = cov.symmetric_eigen();
        if is_rank_deficient(&eig) {
            return Err(Error::Singular(format!(
                "{side} side, eigenvalues in [{:e}, {:e}]",
                eig.eigenvalues.min(),
                eig.eigenvalues.max()
            )));
        }
    }
    let inv_sqrt = eig.eigenvalues.map(|e| 1.0 / e.sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose())
}

fn to_projection(m: &DMatrix<f64>) -> Projection {
    let (r, c) = m.shape();
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            data.push(m[(i, j)]);
        }
    }
    Projection {
        input_dim: r,
        output_dim: c,
        data,
    }
}

/// On-disk layout of an alignment: `src.proj`, `tgt.proj` and `report.tsv`.
pub struct AlignmentFiles;

impl AlignmentFiles {
    pub const SRC: &'static str = "src.proj";
    pub const TGT: &'static str = "tgt.proj";
    pub const REPORT: &'static str = "report.tsv";

    pub fn save(dir: &Path, alignment: &CcaAlignment) -> Result<()> {
        let write = |name: &str, p: &Projection| -> Result<()> {
            let path = dir.join(name);
            let mut buf = Vec::new();
            p.write(&mut buf).map_err(|e| Error::io(&path, e))?;
            fs::write(&path, buf).map_err(|e| Error::io(&path, e))
        };
        write(Self::SRC, &alignment.src)?;
        write(Self::TGT, &alignment.tgt)?;
        let mut report = String::new();
        report.push_str(&format!("space_id\t{}\n", alignment.space_id()));
        report.push_str(&format!("pairs_used\t{}\n", alignment.pairs_used));
        report.push_str(&format!("k\t{}\n", alignment.correlations.len()));
        for (i, c) in alignment.correlations.iter().enumerate() {
            report.push_str(&format!("correlation\t{i}\t{c:.9}\n"));
        }
        let path = dir.join(Self::REPORT);
        fs::write(&path, report).map_err(|e| Error::io(&path, e))
    }

    /// Loads both projections and recomputes the space id from them.
    pub fn load(dir: &Path) -> Result<(Projection, Projection, String)> {
        let read = |name: &str| -> Result<Projection> {
            let path = dir.join(name);
            let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            Projection::read(std::io::BufReader::new(f))
        };
        let src = read(Self::SRC)?;
        let tgt = read(Self::TGT)?;
        let id = CcaAlignment {
            src: src.clone(),
            tgt: tgt.clone(),
            correlations: Vec::new(),
            pairs_used: 0,
        }
        .space_id();
        Ok((src, tgt, id))
    }
}
