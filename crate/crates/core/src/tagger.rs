//! BiLSTM tagger over fixed word vectors with two output heads.
//!
//! The *distant* head is a linear-softmax classifier over the concatenated
//! forward/backward LSTM states. The *gold* head re-maps the distant head's
//! probability vector through either a one-hidden-layer tanh perceptron
//! ([`HeadVariant::Mlp`]) or a single linear layer ([`HeadVariant::Linear`]),
//! followed by a softmax.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_in_place, Graph, NodeId, Tensor};
use crate::embed::EmbeddingSpace;
use crate::error::{Error, Result};

pub const UNIVERSAL_TAGS: [&str; 12] = [
    "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP", "NUM", "CONJ", "PRT", ".", "X",
];

/// Ordered, duplicate-free list of tag names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TagSet {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagSet {
    pub fn new(tags: Vec<String>) -> Result<Self> {
        if tags.is_empty() {
            return Err(Error::invalid("tagset is empty"));
        }
        let mut index = HashMap::with_capacity(tags.len());
        for (i, t) in tags.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate tag {t:?}")));
            }
        }
        Ok(TagSet { tags, index })
    }

    /// The 12-tag universal inventory.
    pub fn universal() -> Self {
        Self::new(UNIVERSAL_TAGS.iter().map(|s| s.to_string()).collect()).expect("unique tags")
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn get(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.tags[idx]
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// One tag per line.
    pub fn read<R: std::io::BufRead>(reader: R) -> Result<Self> {
        let mut tags = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::invalid(e.to_string()))?;
            let t = line.trim();
            if !t.is_empty() {
                tags.push(t.to_string());
            }
        }
        Self::new(tags)
    }
}

impl TryFrom<Vec<String>> for TagSet {
    type Error = Error;
    fn try_from(tags: Vec<String>) -> Result<Self> {
        TagSet::new(tags)
    }
}

impl From<TagSet> for Vec<String> {
    fn from(t: TagSet) -> Self {
        t.tags
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadVariant {
    Mlp,
    Linear,
}

impl std::str::FromStr for HeadVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(HeadVariant::Mlp),
            "linear" => Ok(HeadVariant::Linear),
            _ => Err(Error::invalid(format!("unknown head variant {s:?} (mlp|linear)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Distant,
    Gold,
}

#[derive(Clone, Debug)]
pub struct TaggerConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub head_variant: HeadVariant,
    /// Parameters are drawn from `uniform(-init_scale, init_scale)`.
    pub init_scale: f64,
    pub seed: u64,
}

impl TaggerConfig {
    pub fn new(input_dim: usize) -> Self {
        TaggerConfig {
            input_dim,
            hidden: 128,
            mlp_hidden: 32,
            head_variant: HeadVariant::Mlp,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

/// Gate weights of one LSTM direction. Rows are ordered input, forget,
/// output, candidate; columns are `[x; h_prev]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggerParams {
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    /// Distant head, `K x 2H` and `K`.
    pub out_w: Tensor,
    pub out_b: Tensor,
    /// Gold head hidden layer, absent for the linear variant.
    pub mlp_w1: Option<Tensor>,
    pub mlp_b1: Option<Tensor>,
    /// `K x R` (mlp) or `K x K` (linear).
    pub mlp_w2: Tensor,
    pub mlp_b2: Tensor,
}

impl TaggerParams {
    fn shapes(d: usize, h: usize, r: usize, k: usize, variant: HeadVariant) -> Vec<(&'static str, Vec<usize>)> {
        let mut s = vec![
            ("lstm_fwd.weights", vec![4 * h, d + h]),
            ("lstm_fwd.bias", vec![4 * h]),
            ("lstm_bwd.weights", vec![4 * h, d + h]),
            ("lstm_bwd.bias", vec![4 * h]),
            ("out_w", vec![k, 2 * h]),
            ("out_b", vec![k]),
        ];
        match variant {
            HeadVariant::Mlp => {
                s.push(("mlp_w1", vec![r, k]));
                s.push(("mlp_b1", vec![r]));
                s.push(("mlp_w2", vec![k, r]));
            }
            HeadVariant::Linear => s.push(("mlp_w2", vec![k, k])),
        }
        s.push(("mlp_b2", vec![k]));
        s
    }

    fn from_tensors(mut ts: Vec<Tensor>, variant: HeadVariant) -> Self {
        let mut next = || ts.remove(0);
        let lstm_fwd = LstmParams {
            weights: next(),
            bias: next(),
        };
        let lstm_bwd = LstmParams {
            weights: next(),
            bias: next(),
        };
        let out_w = next();
        let out_b = next();
        let (mlp_w1, mlp_b1) = match variant {
            HeadVariant::Mlp => (Some(next()), Some(next())),
            HeadVariant::Linear => (None, None),
        };
        let mlp_w2 = next();
        let mlp_b2 = next();
        TaggerParams {
            lstm_fwd,
            lstm_bwd,
            out_w,
            out_b,
            mlp_w1,
            mlp_b1,
            mlp_w2,
            mlp_b2,
        }
    }

    /// All arrays in a fixed order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![
            &self.lstm_fwd.weights,
            &self.lstm_fwd.bias,
            &self.lstm_bwd.weights,
            &self.lstm_bwd.bias,
            &self.out_w,
            &self.out_b,
        ];
        v.extend(self.mlp_w1.iter());
        v.extend(self.mlp_b1.iter());
        v.push(&self.mlp_w2);
        v.push(&self.mlp_b2);
        v
    }

    /// Same order as [`TaggerParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![
            &mut self.lstm_fwd.weights,
            &mut self.lstm_fwd.bias,
            &mut self.lstm_bwd.weights,
            &mut self.lstm_bwd.bias,
            &mut self.out_w,
            &mut self.out_b,
        ];
        v.extend(self.mlp_w1.iter_mut());
        v.extend(self.mlp_b1.iter_mut());
        v.push(&mut self.mlp_w2);
        v.push(&mut self.mlp_b2);
        v
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Adds every array to `g`, as trainable leaves or as constants.
    pub fn register(&self, g: &mut Graph, trainable: bool) -> ParamNodes {
        let mut add = |t: &Tensor| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        ParamNodes {
            fwd_w: add(&self.lstm_fwd.weights),
            fwd_b: add(&self.lstm_fwd.bias),
            bwd_w: add(&self.lstm_bwd.weights),
            bwd_b: add(&self.lstm_bwd.bias),
            out_w: add(&self.out_w),
            out_b: add(&self.out_b),
            mlp_w1: self.mlp_w1.as_ref().map(&mut add),
            mlp_b1: self.mlp_b1.as_ref().map(&mut add),
            mlp_w2: add(&self.mlp_w2),
            mlp_b2: add(&self.mlp_b2),
            hidden: self.lstm_fwd.bias.len() / 4,
        }
    }
}

/// Graph handles for a registered [`TaggerParams`].
#[derive(Clone, Debug)]
pub struct ParamNodes {
    pub fwd_w: NodeId,
    pub fwd_b: NodeId,
    pub bwd_w: NodeId,
    pub bwd_b: NodeId,
    pub out_w: NodeId,
    pub out_b: NodeId,
    pub mlp_w1: Option<NodeId>,
    pub mlp_b1: Option<NodeId>,
    pub mlp_w2: NodeId,
    pub mlp_b2: NodeId,
    hidden: usize,
}

impl ParamNodes {
    /// Same order as [`TaggerParams::tensors`].
    pub fn ids(&self) -> Vec<NodeId> {
        let mut v = vec![self.fwd_w, self.fwd_b, self.bwd_w, self.bwd_b, self.out_w, self.out_b];
        v.extend(self.mlp_w1);
        v.extend(self.mlp_b1);
        v.push(self.mlp_w2);
        v.push(self.mlp_b2);
        v
    }
}

fn lstm_step(
    g: &mut Graph,
    w: NodeId,
    b: NodeId,
    hidden: usize,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let xh = g.concat(&[x, h_prev])?;
    let z = g.matmul(w, xh)?;
    let z = g.add(z, b)?;
    let i = g.slice(z, 0, hidden)?;
    let i = g.sigmoid(i)?;
    let f = g.slice(z, hidden, hidden)?;
    let f = g.sigmoid(f)?;
    let o = g.slice(z, 2 * hidden, hidden)?;
    let o = g.sigmoid(o)?;
    let cand = g.slice(z, 3 * hidden, hidden)?;
    let cand = g.tanh(cand)?;
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c)?;
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Runs both LSTM directions over `inputs` and returns
/// `concat(forward_t, backward_t)` for every position.
pub fn encode(g: &mut Graph, p: &ParamNodes, inputs: &[NodeId]) -> Result<Vec<NodeId>> {
    if inputs.is_empty() {
        return Err(Error::invalid("cannot encode an empty sentence"));
    }
    let hdim = p.hidden;
    let zero = g.constant(Tensor::zeros(&[hdim]));

    let mut fwd = Vec::with_capacity(inputs.len());
    let (mut h, mut c) = (zero, zero);
    for &x in inputs {
        (h, c) = lstm_step(g, p.fwd_w, p.fwd_b, hdim, x, h, c)?;
        fwd.push(h);
    }
    let mut bwd = vec![zero; inputs.len()];
    let (mut h, mut c) = (zero, zero);
    for (t, &x) in inputs.iter().enumerate().rev() {
        (h, c) = lstm_step(g, p.bwd_w, p.bwd_b, hdim, x, h, c)?;
        bwd[t] = h;
    }
    fwd.into_iter()
        .zip(bwd)
        .map(|(f, b)| g.concat(&[f, b]))
        .collect()
}

/// `softmax(W h + b)`.
pub fn distant_head(g: &mut Graph, p: &ParamNodes, h: NodeId) -> Result<NodeId> {
    let z = g.matmul(p.out_w, h)?;
    let z = g.add(z, p.out_b)?;
    g.softmax(z)
}

/// Re-maps the distant distribution `o` to the gold distribution.
pub fn gold_head(g: &mut Graph, p: &ParamNodes, o: NodeId) -> Result<NodeId> {
    let input = match (p.mlp_w1, p.mlp_b1) {
        (Some(w1), Some(b1)) => {
            let a = g.matmul(w1, o)?;
            let a = g.add(a, b1)?;
            g.tanh(a)?
        }
        _ => o,
    };
    let z = g.matmul(p.mlp_w2, input)?;
    let z = g.add(z, p.mlp_b2)?;
    g.softmax(z)
}

/// Probability nodes of `head` for every position of a sentence.
pub fn head_outputs(g: &mut Graph, p: &ParamNodes, inputs: &[NodeId], head: Head) -> Result<Vec<NodeId>> {
    let hs = encode(g, p, inputs)?;
    hs.into_iter()
        .map(|h| {
            let o = distant_head(g, p, h)?;
            match head {
                Head::Distant => Ok(o),
                Head::Gold => gold_head(g, p, o),
            }
        })
        .collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub input_dim: usize,
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub head_variant: HeadVariant,
    pub tagset: TagSet,
    pub space_id: String,
    /// Output dimension of the alignment projection, when one was applied.
    pub projection_dim: Option<usize>,
    pub lowercase: bool,
    pub gold_trained: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tagger {
    pub meta: ModelMeta,
    pub params: TaggerParams,
}

const MAGIC: &[u8; 8] = b"XLTAGMDL";
const FORMAT_VERSION: u32 = 1;

impl Tagger {
    /// Fresh model with parameters drawn from `uniform(-s, s)` using a seeded
    /// generator.
    pub fn new(cfg: &TaggerConfig, tagset: TagSet, space_id: impl Into<String>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let s = cfg.init_scale;
        Self::build(cfg, tagset, space_id.into(), |n| {
            (0..n)
                .map(|_| if s > 0.0 { rng.random_range(-s..s) } else { 0.0 })
                .collect()
        })
    }

    /// Model with every parameter set to zero.
    pub fn zeros(cfg: &TaggerConfig, tagset: TagSet, space_id: impl Into<String>) -> Self {
        Self::build(cfg, tagset, space_id.into(), |n| vec![0.0; n])
    }

    fn build(
        cfg: &TaggerConfig,
        tagset: TagSet,
        space_id: String,
        mut fill: impl FnMut(usize) -> Vec<f64>,
    ) -> Self {
        let k = tagset.len();
        let tensors = TaggerParams::shapes(cfg.input_dim, cfg.hidden, cfg.mlp_hidden, k, cfg.head_variant)
            .into_iter()
            .map(|(_, shape)| {
                let n = shape.iter().product();
                Tensor::new(shape, fill(n)).expect("valid parameter shape")
            })
            .collect();
        Tagger {
            meta: ModelMeta {
                input_dim: cfg.input_dim,
                hidden: cfg.hidden,
                mlp_hidden: cfg.mlp_hidden,
                head_variant: cfg.head_variant,
                tagset,
                space_id,
                projection_dim: None,
                lowercase: true,
                gold_trained: false,
            },
            params: TaggerParams::from_tensors(tensors, cfg.head_variant),
        }
    }

    pub fn tagset(&self) -> &TagSet {
        &self.meta.tagset
    }

    pub fn num_tags(&self) -> usize {
        self.meta.tagset.len()
    }

    pub fn gold_trained(&self) -> bool {
        self.meta.gold_trained
    }

    /// The head used for evaluation: gold once it has been trained, distant
    /// otherwise.
    pub fn evaluation_head(&self) -> Head {
        if self.meta.gold_trained {
            Head::Gold
        } else {
            Head::Distant
        }
    }

    pub fn check_space(&self, space: &EmbeddingSpace) -> Result<()> {
        if space.space_id != self.meta.space_id {
            return Err(Error::SpaceMismatch {
                expected: self.meta.space_id.clone(),
                found: space.space_id.clone(),
            });
        }
        if space.dim() != self.meta.input_dim {
            return Err(Error::invalid(format!(
                "model expects {}-dimensional vectors, embeddings have {}",
                self.meta.input_dim,
                space.dim()
            )));
        }
        Ok(())
    }

    /// Per-token distributions of `head` for a sentence of word vectors.
    /// Does not check whether the gold head was trained.
    pub fn probabilities(&self, inputs: &[&[f64]], head: Head) -> Result<Vec<Vec<f64>>> {
        if inputs.is_empty() {
            return Err(Error::invalid("cannot tag an empty sentence"));
        }
        let mut g = Graph::new();
        let p = self.params.register(&mut g, false);
        let mut xs = Vec::with_capacity(inputs.len());
        for x in inputs {
            if x.len() != self.meta.input_dim {
                return Err(Error::Shape {
                    op: "encode",
                    left: vec![self.meta.input_dim],
                    right: vec![x.len()],
                });
            }
            xs.push(g.constant(Tensor::vector(x.to_vec())));
        }
        let outs = head_outputs(&mut g, &p, &xs, head)?;
        Ok(outs.into_iter().map(|o| g.value(o).data().to_vec()).collect())
    }

    /// Per-token argmax of `head`.
    pub fn predict(&self, inputs: &[&[f64]], head: Head) -> Result<Vec<usize>> {
        if head == Head::Gold && !self.meta.gold_trained {
            return Err(Error::invalid(
                "the gold head was never trained (model saw distant data only); use the distant head",
            ));
        }
        Ok(self
            .probabilities(inputs, head)?
            .iter()
            .map(|p| argmax(p))
            .collect())
    }

    /// Looks tokens up in `space` and tags them.
    /// Looks tokens up in `space`, which must be the space the model was
    /// trained in, and predicts with `head`.
    pub fn tag_tokens(&self, space: &EmbeddingSpace, tokens: &[String], head: Head) -> Result<Vec<usize>> {
        self.check_space(space)?;
        let inputs: Vec<&[f64]> = tokens.iter().map(|t| space.lookup(t)).collect();
        self.predict(&inputs, head)
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::ModelFormat(e.to_string());
        let meta = serde_json::to_vec(&self.meta).map_err(|e| Error::ModelFormat(e.to_string()))?;
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(meta.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&meta).map_err(io)?;
        let shapes = TaggerParams::shapes(
            self.meta.input_dim,
            self.meta.hidden,
            self.meta.mlp_hidden,
            self.num_tags(),
            self.meta.head_variant,
        );
        let tensors = self.params.tensors();
        w.write_all(&(tensors.len() as u32).to_le_bytes()).map_err(io)?;
        for ((name, _), t) in shapes.iter().zip(tensors) {
            w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(name.as_bytes()).map_err(io)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes()).map_err(io)?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
            }
            for v in t.data() {
                w.write_all(&v.to_bits().to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat("not a model file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported format version {version}")));
        }
        let meta_len = read_u64(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        read_exact(&mut r, &mut meta)?;
        let meta: ModelMeta =
            serde_json::from_slice(&meta).map_err(|e| Error::ModelFormat(e.to_string()))?;

        let expected = TaggerParams::shapes(
            meta.input_dim,
            meta.hidden,
            meta.mlp_hidden,
            meta.tagset.len(),
            meta.head_variant,
        );
        let count = read_u32(&mut r)? as usize;
        if count != expected.len() {
            return Err(Error::ModelFormat(format!(
                "expected {} arrays, found {count}",
                expected.len()
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, shape) in expected {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            read_exact(&mut r, &mut buf)?;
            if buf != name.as_bytes() {
                return Err(Error::ModelFormat(format!(
                    "expected array {name}, found {}",
                    String::from_utf8_lossy(&buf)
                )));
            }
            let ndim = read_u32(&mut r)? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(read_u64(&mut r)? as usize);
            }
            if dims != shape {
                return Err(Error::ModelFormat(format!(
                    "array {name} has shape {dims:?}, expected {shape:?}"
                )));
            }
            let n: usize = dims.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_bits(read_u64(&mut r)?));
            }
            tensors.push(Tensor::new(dims, data)?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::ModelFormat(e.to_string()))? != 0 {
            return Err(Error::ModelFormat("trailing bytes after parameters".into()));
        }
        let params = TaggerParams::from_tensors(tensors, meta.head_variant);
        Ok(Tagger { meta, params })
    }

    pub fn save_file(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::new();
        self.save(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load_file(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::load(bytes.as_slice())
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::ModelFormat(format!("truncated model file: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Distribution entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Softmax of a plain slice, for callers outside a graph.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tags(k: usize) -> TagSet {
        TagSet::new((0..k).map(|i| format!("T{i}")).collect()).unwrap()
    }

    fn cfg(d: usize, h: usize, r: usize) -> TaggerConfig {
        TaggerConfig {
            input_dim: d,
            hidden: h,
            mlp_hidden: r,
            head_variant: HeadVariant::Mlp,
            init_scale: 0.1,
            seed: 7,
        }
    }

    #[test]
    fn zero_weights_encode_to_zero() {
        let m = Tagger::zeros(&cfg(3, 4, 2), tags(5), "s");
        let mut g = Graph::new();
        let p = m.params.register(&mut g, false);
        let xs: Vec<NodeId> = (0..3)
            .map(|i| g.constant(Tensor::vector(vec![i as f64, 1.0, -2.0])))
            .collect();
        for h in encode(&mut g, &p, &xs).unwrap() {
            assert_eq!(g.value(h).data(), &[0.0; 8]);
        }
    }

    #[test]
    fn empty_sentence_rejected() {
        let m = Tagger::zeros(&cfg(3, 4, 2), tags(5), "s");
        assert!(m.probabilities(&[], Head::Distant).is_err());
    }

    #[test]
    fn single_step_matches_hand_lstm() {
        // d = 1, H = 1. Gate pre-activations: z = W [x; h0] + b with h0 = 0.
        let mut m = Tagger::zeros(&cfg(1, 1, 1), tags(2), "s");
        let w = [0.5, -0.3, 0.8, 1.2]; // i, f, o, g rows, x column
        let b = [0.1, 0.2, -0.1, 0.05];
        for (dir, sign) in [(&mut m.params.lstm_fwd, 1.0), (&mut m.params.lstm_bwd, -1.0)] {
            for r in 0..4 {
                dir.weights.data_mut()[r * 2] = sign * w[r];
                dir.bias.data_mut()[r] = sign * b[r];
            }
        }
        let x = 0.7;
        let hand = |sign: f64| {
            let z: Vec<f64> = (0..4).map(|r| sign * (w[r] * x + b[r])).collect();
            let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
            let c = sig(z[0]) * z[3].tanh(); // c0 = 0
            sig(z[2]) * c.tanh()
        };
        let mut g = Graph::new();
        let p = m.params.register(&mut g, false);
        let xn = g.constant(Tensor::vector(vec![x]));
        let h = encode(&mut g, &p, &[xn]).unwrap();
        let v = g.value(h[0]).data();
        assert_abs_diff_eq!(v[0], hand(1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], hand(-1.0), epsilon = 1e-15);
    }

    #[test]
    fn reversal_swaps_directions() {
        let mut c = cfg(2, 3, 2);
        c.init_scale = 0.5;
        let mut m = Tagger::new(&c, tags(3), "s");
        // Same weights in both directions so reversal maps one onto the other.
        m.params.lstm_bwd = m.params.lstm_fwd.clone();
        let sent: Vec<Vec<f64>> = vec![vec![0.1, 0.9], vec![-0.5, 0.2], vec![1.0, -1.0]];
        let run = |s: &[Vec<f64>]| {
            let mut g = Graph::new();
            let p = m.params.register(&mut g, false);
            let xs: Vec<NodeId> = s.iter().map(|x| g.constant(Tensor::vector(x.clone()))).collect();
            let hs = encode(&mut g, &p, &xs).unwrap();
            hs.iter().map(|&h| g.value(h).data().to_vec()).collect::<Vec<_>>()
        };
        let a = run(&sent);
        let rev: Vec<Vec<f64>> = sent.iter().rev().cloned().collect();
        let b = run(&rev);
        let t = sent.len();
        for i in 0..t {
            let (af, ab) = a[i].split_at(3);
            let (bf, bb) = b[t - 1 - i].split_at(3);
            for j in 0..3 {
                assert_abs_diff_eq!(af[j], bb[j], epsilon = 1e-15);
                assert_abs_diff_eq!(ab[j], bf[j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn distant_head_examples() {
        let k = 12;
        let mut m = Tagger::zeros(&cfg(2, 2, 2), tags(k), "s");
        let x = [0.3, -0.4];
        let p = m.probabilities(&[&x], Head::Distant).unwrap();
        for &v in &p[0] {
            assert_abs_diff_eq!(v, 1.0 / k as f64, epsilon = 1e-15);
        }
        m.params.out_b.data_mut()[4] = 10.0;
        let p = m.probabilities(&[&x], Head::Distant).unwrap();
        assert!(p[0][4] > 0.99);
        assert_eq!(m.probabilities(&[&x, &x], Head::Distant).unwrap().len(), 2);
    }

    #[test]
    fn distant_head_softmax_values() {
        // W h + b = [1, 2, 3] via the bias alone.
        let mut m = Tagger::zeros(&cfg(1, 1, 1), tags(3), "s");
        m.params.out_b.data_mut().copy_from_slice(&[1.0, 2.0, 3.0]);
        let p = m.probabilities(&[&[0.0]], Head::Distant).unwrap();
        let expected = [0.090030573170380, 0.244728471054798, 0.665240955774822];
        for (a, b) in p[0].iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gold_head_zero_weights_is_uniform() {
        let mut c = cfg(2, 2, 3);
        c.init_scale = 0.5;
        let mut m = Tagger::new(&c, tags(4), "s");
        for t in [&mut m.params.mlp_w2, &mut m.params.mlp_b2] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        m.params.mlp_w1.as_mut().unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
        m.params.mlp_b1.as_mut().unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
        let p = m.probabilities(&[&[1.0, 2.0]], Head::Gold).unwrap();
        for &v in &p[0] {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn gold_head_hand_arithmetic() {
        // K = 2, R = 1. o is uniform (zero distant head), so
        // a = tanh(w1 . o + b1), z = w2 * a + b2.
        let mut m = Tagger::zeros(&cfg(1, 1, 1), tags(2), "s");
        m.params.mlp_w1.as_mut().unwrap().data_mut().copy_from_slice(&[0.8, -0.4]);
        m.params.mlp_b1.as_mut().unwrap().data_mut().copy_from_slice(&[0.1]);
        m.params.mlp_w2.data_mut().copy_from_slice(&[1.5, -2.0]);
        m.params.mlp_b2.data_mut().copy_from_slice(&[0.0, 0.3]);
        let a = (0.8 * 0.5 - 0.4 * 0.5 + 0.1f64).tanh();
        let z = [1.5 * a, -2.0 * a + 0.3];
        let e0 = z[0].exp();
        let e1 = z[1].exp();
        let p = m.probabilities(&[&[0.0]], Head::Gold).unwrap();
        assert_abs_diff_eq!(p[0][0], e0 / (e0 + e1), epsilon = 1e-15);
        assert_abs_diff_eq!(p[0][1], e1 / (e0 + e1), epsilon = 1e-15);
    }

    #[test]
    fn predict_tie_break_and_bias() {
        let mut m = Tagger::zeros(&cfg(2, 2, 2), tags(5), "s");
        let x = [0.5, 0.5];
        assert_eq!(m.predict(&[&x, &x, &x], Head::Distant).unwrap(), vec![0, 0, 0]);
        m.params.out_b.data_mut()[3] = 2.0;
        assert_eq!(m.predict(&[&x, &x], Head::Distant).unwrap(), vec![3, 3]);
    }

    #[test]
    fn untrained_gold_head_is_refused() {
        let m = Tagger::zeros(&cfg(2, 2, 2), tags(3), "s");
        let err = m.predict(&[&[0.0, 0.0]], Head::Gold).unwrap_err();
        assert!(err.to_string().contains("distant"), "{err}");
        assert_eq!(m.evaluation_head(), Head::Distant);
    }

    #[test]
    fn linear_variant_shapes() {
        let mut c = cfg(2, 3, 7);
        c.head_variant = HeadVariant::Linear;
        let m = Tagger::new(&c, tags(4), "s");
        assert!(m.params.mlp_w1.is_none());
        assert_eq!(m.params.mlp_w2.shape(), &[4, 4]);
        assert_eq!(m.params.tensors().len(), 8);
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        for variant in [HeadVariant::Mlp, HeadVariant::Linear] {
            let mut c = cfg(3, 2, 4);
            c.head_variant = variant;
            let mut m = Tagger::new(&c, TagSet::universal(), "cca-1234");
            m.meta.projection_dim = Some(3);
            m.meta.gold_trained = true;
            m.params.out_b.data_mut()[0] = f64::MIN_POSITIVE / 3.0;
            let mut buf = Vec::new();
            m.save(&mut buf).unwrap();
            let back = Tagger::load(buf.as_slice()).unwrap();
            assert_eq!(back.meta, m.meta);
            for (a, b) in back.params.tensors().iter().zip(m.params.tensors()) {
                let ab: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
                let bb: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
                assert_eq!(ab, bb);
            }
            let mut again = Vec::new();
            back.save(&mut again).unwrap();
            assert_eq!(buf, again);
        }
    }

    #[test]
    fn load_rejects_garbage() {
        assert!(Tagger::load(&b"NOTAMODEL"[..]).is_err());
        let m = Tagger::zeros(&cfg(1, 1, 1), tags(2), "s");
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(Tagger::load(buf.as_slice()).is_err());
    }

    #[test]
    fn entropy_values() {
        assert_abs_diff_eq!(entropy(&[1.0 / 12.0; 12]), 12f64.ln(), epsilon = 1e-12);
        let mut sat = vec![0.0; 12];
        sat[0] = 1.0;
        assert_abs_diff_eq!(entropy(&sat), 0.0, epsilon = 1e-9);
        let mut two = vec![0.0; 12];
        two[0] = 0.5;
        two[1] = 0.5;
        assert_abs_diff_eq!(entropy(&two), 2f64.ln(), epsilon = 1e-12);
    }
}
