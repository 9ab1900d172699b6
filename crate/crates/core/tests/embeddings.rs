use std::collections::HashSet;
use std::io::Cursor;

use proptest::prelude::*;
use relshift::embedding::nearest_neighbors_par;
use relshift::w2v::{read_binary, read_text, write_binary, write_text};
use relshift::{cosine, nearest_neighbors, EmbeddingModel, Error};

fn model_from(rows: &[Vec<f32>]) -> EmbeddingModel<f32> {
    let mut m = EmbeddingModel::new(rows[0].len());
    for (i, r) in rows.iter().enumerate() {
        m.push(format!("tok{i}"), r, i as u64).unwrap();
    }
    m
}

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f32>>> {
    (1usize..8).prop_flat_map(|dim| prop::collection::vec(prop::collection::vec(-4.0f32..4.0, dim), 1..40))
}

/// Independent ranking: every cosine in f64, full sort, ties by index.
fn brute_force(m: &EmbeddingModel<f32>, q: &[f32], k: usize, exclude: &HashSet<String>) -> Vec<usize> {
    let qn = q.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, usize)> = (0..m.len())
        .filter(|&i| !exclude.contains(m.token(i)))
        .map(|i| {
            let r = m.vector(i);
            let rn = r.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            let d: f64 = r.iter().zip(q).map(|(&a, &b)| a as f64 * b as f64).sum();
            (if rn == 0.0 { 0.0 } else { d / (rn * qn) }, i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Rankings may only differ where f32 and f64 disagree about near-equal
/// scores, so compare scores at each rank rather than indices.
fn same_ranking(m: &EmbeddingModel<f32>, q: &[f32], got: &[usize], want: &[usize]) -> bool {
    let score = |i: usize| cosine(m.vector(i), q).map(|c| c as f64).unwrap_or(0.0);
    got.len() == want.len() && got.iter().zip(want).all(|(&a, &b)| a == b || (score(a) - score(b)).abs() < 1e-5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn neighbors_match_brute_force(rows in rows_strategy(), k in 1usize..10, qi in any::<prop::sample::Index>(), drop in any::<prop::sample::Index>()) {
        let m = model_from(&rows);
        let q: Vec<f32> = m.vector(qi.index(m.len())).iter().map(|v| v + 0.01).collect();
        prop_assume!(q.iter().any(|&v| v != 0.0));
        let exclude: HashSet<String> = [m.token(drop.index(m.len())).to_owned()].into();
        let got: Vec<usize> = nearest_neighbors(&m, &q, k, &exclude).unwrap().entries.iter().map(|n| n.index).collect();
        let want = brute_force(&m, &q, k, &exclude);
        prop_assert!(same_ranking(&m, &q, &got, &want), "{got:?} vs {want:?}");
        let par: Vec<usize> = nearest_neighbors_par(&m, &q, k, &exclude, 7).unwrap().entries.iter().map(|n| n.index).collect();
        prop_assert_eq!(par, got);
    }

    #[test]
    fn cosine_is_symmetric_and_scale_free(u in prop::collection::vec(-10.0f64..10.0, 1..16), s in 0.1f64..50.0) {
        let v: Vec<f64> = u.iter().rev().copied().collect();
        prop_assume!(u.iter().any(|&x| x.abs() > 1e-3));
        let a = cosine(&u, &v).unwrap();
        prop_assert!((a - cosine(&v, &u).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = u.iter().map(|x| x * s).collect();
        prop_assert!((a - cosine(&scaled, &v).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn binary_round_trip_is_bit_exact(rows in rows_strategy()) {
        let m = model_from(&rows);
        let mut buf = Vec::new();
        write_binary(&m, &mut buf).unwrap();
        let back: EmbeddingModel<f32> = read_binary(&mut Cursor::new(&buf)).unwrap();
        prop_assert_eq!(back.tokens(), m.tokens());
        let bits = |x: &EmbeddingModel<f32>| x.vectors().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn text_round_trip_is_value_exact(rows in rows_strategy()) {
        let m = model_from(&rows);
        let mut buf = Vec::new();
        write_text(&m, &mut buf).unwrap();
        let back: EmbeddingModel<f32> = read_text(&mut Cursor::new(&buf)).unwrap();
        prop_assert_eq!(back.tokens(), m.tokens());
        prop_assert_eq!(back.vectors(), m.vectors());
    }
}

#[test]
fn fifty_random_models_agree_with_the_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
    for _ in 0..50 {
        let dim = rng.random_range(2..24);
        let rows: Vec<Vec<f32>> =
            (0..rng.random_range(5..300)).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let m = model_from(&rows);
        let q: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = rng.random_range(1..12);
        let none = HashSet::new();
        let got: Vec<usize> = nearest_neighbors(&m, &q, k, &none).unwrap().entries.iter().map(|n| n.index).collect();
        assert!(same_ranking(&m, &q, &got, &brute_force(&m, &q, k, &none)));
    }
}

#[test]
fn zero_rows_score_zero_and_zero_queries_fail() {
    let m = model_from(&[vec![0.0, 0.0], vec![-1.0, 0.0], vec![1.0, 0.0]]);
    let nn = nearest_neighbors(&m, &[1.0, 0.0], 3, &HashSet::new()).unwrap();
    assert_eq!(nn.tokens(), vec!["tok2", "tok0", "tok1"]);
    assert_eq!(nn.entries[1].score, 0.0);
    assert!(matches!(nearest_neighbors(&m, &[0.0, 0.0], 1, &HashSet::new()), Err(Error::Domain(_))));
}

#[test]
fn truncated_binary_names_the_offset() {
    let m = model_from(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
    let mut buf = Vec::new();
    write_binary(&m, &mut buf).unwrap();
    buf.truncate(buf.len() - 3);
    match read_binary::<f32, _>(&mut Cursor::new(&buf)) {
        Err(Error::Parse { location, .. }) => assert!(location.starts_with("byte"), "{location}"),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn malformed_text_names_the_line() {
    let text = "2 2\na 1 2\nb 1 oops\n";
    match read_text::<f32, _>(&mut Cursor::new(text)) {
        Err(Error::Parse { location, .. }) => assert_eq!(location, "line 3"),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let ragged = "a 1 2\nb 1\n";
    assert!(read_text::<f32, _>(&mut Cursor::new(ragged)).is_err());
}

#[test]
fn headerless_text_is_accepted() {
    let m: EmbeddingModel<f64> = read_text(&mut Cursor::new("x 0.5 1\ny -2 3e-2\n")).unwrap();
    assert_eq!(m.dim(), 2);
    assert_eq!(m.get("y").unwrap(), &[-2.0, 0.03]);
}
