//! Central finite-difference oracle shared by the gradient tests and the
//! acceptance harness. It only evaluates forward values, so it is independent
//! of the backward pass it checks.

#![allow(dead_code)]

pub mod cca;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xltag::autodiff::{Graph, NodeId, Tensor};
use xltag::corpus::{Provenance, Sentence, TaggedCorpus};
use xltag::embed::{EmbeddingMatrix, EmbeddingSpace, Vocabulary};
use xltag::tagger::{HeadVariant, TagSet, Tagger, TaggerConfig};
use xltag::trainer::{joint_loss, joint_loss_value, JointBatch};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor of the relative error, so that gradients which are zero
/// up to rounding are compared absolutely.
pub const REL_FLOOR: f64 = 1e-4;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

type Build = Box<dyn Fn(&mut Graph, &[NodeId]) -> xltag::Result<NodeId>>;

/// One randomized gradient-check instance over a small graph.
pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    build: Build,
    /// Weights that reduce a non-scalar output to a scalar root.
    weights: Option<Vec<f64>>,
}

impl OpCase {
    fn root(&self, g: &mut Graph, inputs: &[Tensor]) -> (Vec<NodeId>, NodeId) {
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let out = (self.build)(g, &ids).expect("case builds");
        let root = match &self.weights {
            None => out,
            Some(w) => {
                let shape = g.value(out).shape().to_vec();
                let c = g.constant(Tensor::new(shape, w.clone()).unwrap());
                let m = g.mul(out, c).unwrap();
                g.sum(m).unwrap()
            }
        };
        (ids, root)
    }

    fn value(&self, inputs: &[Tensor]) -> f64 {
        let mut g = Graph::new();
        let (_, r) = self.root(&mut g, inputs);
        g.value(r).item()
    }

    /// Largest componentwise relative error over all inputs.
    pub fn max_rel_error(&self) -> f64 {
        let mut g = Graph::new();
        let (ids, root) = self.root(&mut g, &self.inputs);
        let grads = g.backward(root).expect("backward");
        let mut worst: f64 = 0.0;
        for (k, id) in ids.iter().enumerate() {
            let analytic = grads.get(*id).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; self.inputs[k].len()]);
            for j in 0..self.inputs[k].len() {
                let mut plus = self.inputs.clone();
                plus[k].data_mut()[j] += FD_STEP;
                let mut minus = self.inputs.clone();
                minus[k].data_mut()[j] -= FD_STEP;
                let numeric = (self.value(&plus) - self.value(&minus)) / (2.0 * FD_STEP);
                worst = worst.max(rel_error(analytic[j], numeric));
            }
        }
        worst
    }
}

fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn vector(rng: &mut impl Rng, n: usize) -> Tensor {
    Tensor::vector(uniform(rng, n, -2.0, 2.0))
}

fn matrix(rng: &mut impl Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, uniform(rng, r * c, -2.0, 2.0)).unwrap()
}

/// `per_op` random instances of every differentiable operation, with inputs
/// drawn from [-2, 2] (log inputs from [0.5, 2]).
pub fn op_cases(seed: u64, per_op: usize) -> Vec<OpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    for _ in 0..per_op {
        let m = rng.random_range(1..5);
        let n = rng.random_range(1..5);
        let p = rng.random_range(2..4);
        let w = |rng: &mut ChaCha8Rng, len: usize| Some(uniform(rng, len, -1.0, 1.0));

        let weights = w(&mut rng, m);
        cases.push(OpCase {
            name: "matmul (matrix-vector)",
            inputs: vec![matrix(&mut rng, m, n), vector(&mut rng, n)],
            build: Box::new(|g, x| g.matmul(x[0], x[1])),
            weights,
        });
        let weights = w(&mut rng, m * p);
        cases.push(OpCase {
            name: "matmul (matrix-matrix)",
            inputs: vec![matrix(&mut rng, m, n), matrix(&mut rng, n, p)],
            build: Box::new(|g, x| g.matmul(x[0], x[1])),
            weights,
        });
        let weights = w(&mut rng, n);
        cases.push(OpCase {
            name: "add",
            inputs: vec![vector(&mut rng, n), vector(&mut rng, n)],
            build: Box::new(|g, x| g.add(x[0], x[1])),
            weights,
        });
        let weights = w(&mut rng, n);
        cases.push(OpCase {
            name: "mul",
            inputs: vec![vector(&mut rng, n), vector(&mut rng, n)],
            build: Box::new(|g, x| g.mul(x[0], x[1])),
            weights,
        });
        let weights = w(&mut rng, m + n);
        cases.push(OpCase {
            name: "concat",
            inputs: vec![vector(&mut rng, m), vector(&mut rng, n)],
            build: Box::new(|g, x| g.concat(&[x[0], x[1]])),
            weights,
        });
        let weights = w(&mut rng, n);
        cases.push(OpCase {
            name: "tanh",
            inputs: vec![vector(&mut rng, n)],
            build: Box::new(|g, x| g.tanh(x[0])),
            weights,
        });
        let weights = w(&mut rng, n);
        cases.push(OpCase {
            name: "sigmoid",
            inputs: vec![vector(&mut rng, n)],
            build: Box::new(|g, x| g.sigmoid(x[0])),
            weights,
        });
        let weights = w(&mut rng, n + 1);
        cases.push(OpCase {
            name: "softmax",
            inputs: vec![vector(&mut rng, n + 1)],
            build: Box::new(|g, x| g.softmax(x[0])),
            weights,
        });
        let row = rng.random_range(0..m);
        let weights = w(&mut rng, n);
        cases.push(OpCase {
            name: "lookup_row",
            inputs: vec![matrix(&mut rng, m, n)],
            build: Box::new(move |g, x| g.lookup_row(x[0], row)),
            weights,
        });
        let len = rng.random_range(1..=n);
        let start = rng.random_range(0..=n - len);
        let weights = w(&mut rng, len);
        cases.push(OpCase {
            name: "slice",
            inputs: vec![vector(&mut rng, n)],
            build: Box::new(move |g, x| g.slice(x[0], start, len)),
            weights,
        });
        cases.push(OpCase {
            name: "sum",
            inputs: vec![vector(&mut rng, n)],
            build: Box::new(|g, x| g.sum(x[0])),
            weights: None,
        });
        let c = rng.random_range(-2.0..2.0);
        let weights = w(&mut rng, n);
        cases.push(OpCase {
            name: "scale",
            inputs: vec![vector(&mut rng, n)],
            build: Box::new(move |g, x| g.scale(x[0], c)),
            weights,
        });
        let weights = w(&mut rng, n);
        cases.push(OpCase {
            name: "log",
            inputs: vec![Tensor::vector(uniform(&mut rng, n, 0.5, 2.0))],
            build: Box::new(|g, x| g.log(x[0])),
            weights,
        });
        let k = rng.random_range(2..6);
        let target = rng.random_range(0..k);
        cases.push(OpCase {
            name: "cross_entropy of softmax",
            inputs: vec![vector(&mut rng, k)],
            build: Box::new(move |g, x| {
                let p = g.softmax(x[0])?;
                g.cross_entropy(p, target)
            }),
            weights: None,
        });
        let weights = w(&mut rng, n);
        cases.push(OpCase {
            name: "reused node (x*x + tanh x)",
            inputs: vec![vector(&mut rng, n)],
            build: Box::new(|g, x| {
                let sq = g.mul(x[0], x[0])?;
                let t = g.tanh(x[0])?;
                g.add(sq, t)
            }),
            weights,
        });
    }
    cases
}

/// A toy tagger, embedding space and two-sentence batch (one distant, one
/// gold) for checking the whole loss.
pub struct PipelineCase {
    pub model: Tagger,
    pub space: EmbeddingSpace,
    pub distant: TaggedCorpus,
    pub gold: TaggedCorpus,
    pub gamma: f64,
}

pub fn pipeline_case(seed: u64) -> PipelineCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..4);
    let hidden = rng.random_range(1..4);
    let k = rng.random_range(2..5);
    let variant = if rng.random::<bool>() { HeadVariant::Mlp } else { HeadVariant::Linear };
    let words: Vec<String> = (0..5).map(|i| format!("w{i}")).collect();
    let data = uniform(&mut rng, (words.len() + 1) * d, -1.0, 1.0);
    let space = EmbeddingSpace::new(
        Vocabulary::new(words.clone()).unwrap(),
        EmbeddingMatrix::new(words.len() + 1, d, data).unwrap(),
        "toy",
    );
    let tagset = TagSet::new((0..k).map(|i| format!("T{i}")).collect()).unwrap();
    let cfg = TaggerConfig {
        input_dim: d,
        hidden,
        mlp_hidden: rng.random_range(1..4),
        head_variant: variant,
        init_scale: 0.5,
        seed,
    };
    let model = Tagger::new(&cfg, tagset.clone(), "toy");
    let sentence = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(1..=4);
        let tokens = (0..len).map(|_| words[rng.random_range(0..words.len())].clone()).collect();
        let tags = (0..len).map(|_| rng.random_range(0..k)).collect();
        Sentence::new(tokens, tags)
    };
    let distant = TaggedCorpus::new(vec![sentence(&mut rng)], Provenance::Distant, tagset.clone()).unwrap();
    let gold = TaggedCorpus::new(vec![sentence(&mut rng)], Provenance::Gold, tagset).unwrap();
    PipelineCase {
        model,
        space,
        distant,
        gold,
        gamma: rng.random_range(0.1..2.0),
    }
}

impl PipelineCase {
    /// Largest relative error between backpropagated and finite-difference
    /// gradients over every model parameter.
    pub fn max_rel_error(&self) -> f64 {
        let batch = JointBatch::new(&self.distant, &self.gold);
        let mut g = Graph::new();
        let p = self.model.params.register(&mut g, true);
        let root = joint_loss(&mut g, &p, &batch, &self.space, self.gamma).unwrap();
        let mut grads = g.backward(root).unwrap();
        let analytic: Vec<Option<Tensor>> = p.ids().into_iter().map(|id| grads.take(id)).collect();

        let loss_at = |model: &Tagger| joint_loss_value(model, &batch, &self.space, self.gamma).unwrap();
        let n_tensors = self.model.params.tensors().len();
        let mut worst: f64 = 0.0;
        for ti in 0..n_tensors {
            let len = self.model.params.tensors()[ti].len();
            for j in 0..len {
                let mut plus = self.model.clone();
                plus.params.tensors_mut()[ti].data_mut()[j] += FD_STEP;
                let mut minus = self.model.clone();
                minus.params.tensors_mut()[ti].data_mut()[j] -= FD_STEP;
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * FD_STEP);
                let a = analytic[ti].as_ref().map_or(0.0, |t| t.data()[j]);
                worst = worst.max(rel_error(a, numeric));
            }
        }
        worst
    }
}
