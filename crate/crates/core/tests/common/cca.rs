//! Fixtures for the alignment tests.

use nalgebra::DMatrix;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use xltag::embed::{BilingualLexicon, EmbeddingMatrix, EmbeddingSpace, Vocabulary};

pub const TOL: f64 = 1e-6;

pub fn space(prefix: &str, rows: &[Vec<f64>]) -> EmbeddingSpace {
    let d = rows[0].len();
    let words: Vec<String> = (0..rows.len()).map(|i| format!("{prefix}{i}")).collect();
    let mut data: Vec<f64> = rows.iter().flatten().copied().collect();
    data.extend(vec![0.0; d]);
    EmbeddingSpace::new(
        Vocabulary::new(words).unwrap(),
        EmbeddingMatrix::new(rows.len() + 1, d, data).unwrap(),
        prefix,
    )
}

pub fn lexicon(n: usize, src: &str, tgt: &str) -> BilingualLexicon {
    BilingualLexicon::new((0..n).map(|i| (format!("{src}{i}"), format!("{tgt}{i}"))))
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn transform(rows: &[Vec<f64>], t: &DMatrix<f64>) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let x = DMatrix::from_row_slice(1, r.len(), r);
            (x * t).iter().copied().collect()
        })
        .collect()
}

/// Random matrix that is comfortably far from singular.
pub fn invertible(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0));
        let sv = m.clone().svd(false, false).singular_values;
        if sv.min() > 0.2 {
            return m;
        }
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
