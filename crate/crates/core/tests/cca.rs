mod common;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::cca::{invertible, lexicon, pearson, random_rows, space, transform, TOL};
use xltag::embed::{cca_align, load_embeddings, write_embeddings};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn self_alignment_has_unit_correlations(seed in any::<u64>(), d in 1usize..6, extra in 5usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, d + extra, d);
        let s = space("w", &rows);
        let a = cca_align(&s, &s, &lexicon(rows.len(), "w", "w"), None).unwrap();
        prop_assert_eq!(a.correlations.len(), d);
        for c in &a.correlations {
            prop_assert!((c - 1.0).abs() < TOL, "{:?}", a.correlations);
        }
    }

    #[test]
    fn correlations_invariant_under_invertible_transforms(seed in any::<u64>(), d in prop::sample::select(vec![2usize, 5])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 40;
        let src = random_rows(&mut rng, n, d);
        // Target shares one direction with the source plus noise.
        let tgt: Vec<Vec<f64>> = src
            .iter()
            .map(|r| (0..d).map(|j| if j == 0 { r[0] + 0.3 * rng.random_range(-1.0..1.0) } else { rng.random_range(-1.0..1.0) }).collect())
            .collect();
        let t = invertible(&mut rng, d);
        let lex = lexicon(n, "s", "t");
        let base = cca_align(&space("s", &src), &space("t", &tgt), &lex, None).unwrap();
        let moved = cca_align(&space("s", &src), &space("t", &transform(&tgt, &t)), &lex, None).unwrap();
        for (a, b) in base.correlations.iter().zip(&moved.correlations) {
            prop_assert!((a - b).abs() < TOL, "{:?} vs {:?}", base.correlations, moved.correlations);
        }
    }

    #[test]
    fn rotated_copy_has_unit_correlations(seed in any::<u64>(), d in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, 30, d);
        let q = invertible(&mut rng, d).qr().q();
        let a = cca_align(&space("s", &rows), &space("t", &transform(&rows, &q)), &lexicon(30, "s", "t"), None).unwrap();
        for c in &a.correlations {
            prop_assert!((c - 1.0).abs() < TOL, "{:?}", a.correlations);
        }
    }

    #[test]
    fn embeddings_round_trip_bit_identically(seed in any::<u64>(), n in 1usize..8, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1e3..1e3) * 10f64.powi(rng.random_range(-20..20))).collect())
            .collect();
        let s = space("w", &rows);
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &s.vocab, &s.matrix).unwrap();
        let (v, m) = load_embeddings(buf.as_slice()).unwrap();
        let mut again = Vec::new();
        write_embeddings(&mut again, &v, &m).unwrap();
        prop_assert_eq!(&buf, &again);
        for i in 0..n {
            let a: Vec<u64> = m.row(i).iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = rows[i].iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn independent_pairs_have_low_top_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, d) = (500, 3);
    let src = random_rows(&mut rng, n, d);
    let tgt = random_rows(&mut rng, n, d);
    let (s, t) = (space("s", &src), space("t", &tgt));
    let a = cca_align(&s, &t, &lexicon(n, "s", "t"), Some(1)).unwrap();
    // Brute force: correlate the projected coordinates of every pair.
    let ps: Vec<f64> = src.iter().map(|r| a.src.apply(r)[0]).collect();
    let pt: Vec<f64> = tgt.iter().map(|r| a.tgt.apply(r)[0]).collect();
    let direct = pearson(&ps, &pt).abs();
    assert!((direct - a.correlations[0]).abs() < TOL, "{direct} vs {:?}", a.correlations);
    assert!(direct < 0.2, "{direct}");
}

#[test]
fn scaled_axis_hand_case() {
    let src = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.5], vec![0.5, -1.0]];
    let tgt: Vec<Vec<f64>> = src.iter().map(|r| vec![2.0 * r[0], r[1]]).collect();
    let a = cca_align(&space("s", &src), &space("t", &tgt), &lexicon(4, "s", "t"), None).unwrap();
    assert_eq!(a.correlations.len(), 2);
    for c in &a.correlations {
        assert!((c - 1.0).abs() < TOL, "{:?}", a.correlations);
    }
}
