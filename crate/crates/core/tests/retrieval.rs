use std::collections::HashSet;

use attest::baseline::{bray_curtis, hash_query_with, knn, HashedQuery};
use attest::embedder::AttentionModel;
use attest::eval::{
    f1, oracle_best, product_recall_at_k, query_precision_at_k, reformulate, top_k_products,
    EmbeddingIndex, HashIndex,
};
use attest::linalg::Matrix;
use attest::rng::stream;
use attest::types::Query;
use proptest::prelude::*;
use rand::Rng;

fn random_queries(seed: u64, n: usize, vocab: usize, max_len: usize) -> Vec<Query> {
    let mut rng = stream(seed, 0);
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=max_len);
            Query::new((0..len).map(|_| rng.random_range(0..vocab)).collect(), i % 7)
        })
        .collect()
}

fn bc_oracle(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = a.iter().zip(b).map(|(x, y)| x + y).sum();
    num / den
}

#[test]
fn knn_matches_exhaustive_sort() {
    let queries = random_queries(3, 51, 40, 6);
    // few buckets so distance ties are common
    let store: Vec<HashedQuery> = queries[..50]
        .iter()
        .enumerate()
        .map(|(i, q)| hash_query_with(i, q, 8))
        .collect();
    let probe = hash_query_with(50, &queries[50], 8);
    let mut oracle: Vec<(f64, usize)> = store
        .iter()
        .map(|h| (bc_oracle(&h.buckets, &probe.buckets), h.id))
        .collect();
    oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    for k in [1, 5, 17, 50] {
        let want: Vec<usize> = oracle.iter().take(k).map(|x| x.1).collect();
        assert_eq!(knn(&store, &probe, k).unwrap(), want, "k={k}");
    }
    assert!(knn(&store, &probe, 51).is_err());
}

#[test]
fn knn_finds_the_probe_itself_first() {
    let queries = random_queries(4, 20, 30, 5);
    let store: Vec<HashedQuery> = queries.iter().enumerate().map(|(i, q)| hash_query_with(i, q, 300)).collect();
    for h in &store {
        let top = knn(&store, h, 1).unwrap()[0];
        assert_eq!(bray_curtis(&store[top].buckets, &h.buckets).unwrap(), 0.0);
        assert!(top <= h.id);
    }
}

fn small_model(seed: u64, vocab: usize, dim: usize, max_len: usize) -> AttentionModel {
    let mut rng = stream(seed, 1);
    let mut emb = Matrix::zeros(vocab, dim);
    let mut attn = Matrix::zeros(max_len, dim);
    for x in emb.as_mut_slice().iter_mut().chain(attn.as_mut_slice()) {
        *x = rng.random_range(-1.0..1.0);
    }
    AttentionModel::from_parts(emb, attn).unwrap()
}

#[test]
fn embedding_reformulation_matches_scan() {
    let queries = random_queries(5, 31, 25, 5);
    let model = small_model(6, 25, 4, 5);
    let store_ids: Vec<usize> = (0..30).collect();
    let index = EmbeddingIndex::new(&model, &queries, store_ids.clone()).unwrap();
    for probe_id in [0, 12, 30] {
        let zp = model.embed_query(&queries[probe_id]).unwrap();
        let mut scan: Vec<(f64, usize)> = store_ids
            .iter()
            .filter(|&&i| i != probe_id)
            .map(|&i| {
                let z = model.embed_query(&queries[i]).unwrap();
                (-z.iter().zip(&zp).map(|(a, b)| a * b).sum::<f64>(), i)
            })
            .collect();
        scan.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<usize> = scan.iter().take(5).map(|x| x.1).collect();
        let got = reformulate(&index, probe_id, &queries[probe_id], 5).unwrap();
        assert_eq!(got, want, "probe {probe_id}");
    }
}

#[test]
fn hash_reformulation_matches_scan() {
    let queries = random_queries(7, 31, 30, 4);
    let store_ids: Vec<usize> = (0..30).collect();
    let index = HashIndex::new(&queries, store_ids.clone(), 16).unwrap();
    for probe_id in [3, 30] {
        let hp = hash_query_with(probe_id, &queries[probe_id], 16);
        let mut scan: Vec<(f64, usize)> = store_ids
            .iter()
            .filter(|&&i| i != probe_id)
            .map(|&i| (bc_oracle(&hash_query_with(i, &queries[i], 16).buckets, &hp.buckets), i))
            .collect();
        scan.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<usize> = scan.iter().take(5).map(|x| x.1).collect();
        assert_eq!(reformulate(&index, probe_id, &queries[probe_id], 5).unwrap(), want);
    }
}

#[test]
fn duplicates_of_the_probe_are_its_reformulations() {
    let mut queries = vec![Query::new(vec![1, 2, 3], 0)];
    queries.extend((0..5).map(|_| Query::new(vec![1, 2, 3], 0)));
    queries.extend((0..10).map(|i| Query::new(vec![10 + i, 20 + i], 1)));
    let ids: Vec<usize> = (0..queries.len()).collect();
    let index = HashIndex::new(&queries, ids, 300).unwrap();
    assert_eq!(reformulate(&index, 0, &queries[0], 5).unwrap(), vec![1, 2, 3, 4, 5]);
}

/// Brute-force best precision and recall over every `count`-subset of `pool`.
fn unrestricted_best(
    q: usize,
    pool: &[usize],
    purchases: &[Vec<(usize, u32)>],
    k: usize,
    count: usize,
) -> (f64, f64) {
    let target: HashSet<usize> = top_k_products(&purchases[q], k).into_iter().collect();
    let tops: Vec<HashSet<usize>> = pool
        .iter()
        .map(|&c| top_k_products(&purchases[c], k).into_iter().collect())
        .collect();
    let mut best = (0.0f64, 0.0f64);
    let mut idx: Vec<usize> = (0..count).collect();
    loop {
        let hits = idx.iter().filter(|&&i| !tops[i].is_disjoint(&target)).count();
        let union: HashSet<usize> = idx.iter().flat_map(|&i| tops[i].iter().copied()).collect();
        let covered = target.intersection(&union).count();
        best.0 = best.0.max(hits as f64 / count as f64);
        best.1 = best.1.max(covered as f64 / target.len() as f64);
        // next combination in lexicographic order
        let n = pool.len();
        let mut i = count;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < n - count + i {
                break;
            }
            if i == 0 {
                return best;
            }
        }
        idx[i] += 1;
        for j in i + 1..count {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn toy_purchases(seed: u64) -> Vec<Vec<(usize, u32)>> {
    let mut rng = stream(seed, 2);
    (0..20)
        .map(|_| {
            let n = rng.random_range(1..=4);
            let mut ps: Vec<(usize, u32)> = Vec::new();
            while ps.len() < n {
                let p = rng.random_range(0..12);
                if !ps.iter().any(|x| x.0 == p) {
                    ps.push((p, rng.random_range(1..5)));
                }
            }
            ps
        })
        .collect()
}

#[test]
fn oracle_matches_unrestricted_enumeration_on_a_toy() {
    for seed in 0..4 {
        let purchases = toy_purchases(seed);
        let pool: Vec<usize> = (0..20).collect();
        for q in 0..20 {
            let others: Vec<usize> = pool.iter().copied().filter(|&c| c != q).collect();
            for k in [1, 2, 3] {
                let want = unrestricted_best(q, &others, &purchases, k, 5);
                let got = oracle_best(q, &pool, &purchases, k, 5, 25).unwrap();
                assert_eq!(got, want, "seed {seed} q {q} k {k}");
            }
        }
    }
}

#[test]
fn oracle_on_single_product_queries_is_exact_at_small_pools() {
    // one product per query: overlap ranking keeps every relevant candidate
    let purchases: Vec<Vec<(usize, u32)>> = (0..20).map(|i| vec![(i % 4, 1)]).collect();
    let pool: Vec<usize> = (0..20).collect();
    for q in 0..20 {
        let others: Vec<usize> = (0..20).filter(|&c| c != q).collect();
        let want = unrestricted_best(q, &others, &purchases, 20, 5);
        assert_eq!(oracle_best(q, &pool, &purchases, 20, 5, 5).unwrap(), want);
    }
}

#[test]
fn oracle_edge_cases() {
    let mut purchases: Vec<Vec<(usize, u32)>> = (0..8).map(|_| vec![(0, 1)]).collect();
    purchases.push(vec![(9, 1)]);
    let pool: Vec<usize> = (0..9).collect();
    assert_eq!(oracle_best(0, &pool, &purchases, 20, 5, 25).unwrap().0, 1.0);
    assert_eq!(oracle_best(8, &pool, &purchases, 20, 5, 25).unwrap(), (0.0, 0.0));
}

fn arb_counts() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u8..6, 12).prop_map(|v| v.into_iter().map(f64::from).collect())
}

fn arb_purchases() -> impl Strategy<Value = Vec<Vec<(usize, u32)>>> {
    prop::collection::vec(
        prop::collection::btree_map(0usize..10, 1u32..5, 0..5)
            .prop_map(|m| m.into_iter().collect::<Vec<_>>()),
        8,
    )
}

proptest! {
    #[test]
    fn bray_curtis_is_a_bounded_symmetric_dissimilarity(a in arb_counts(), b in arb_counts()) {
        let za = a.iter().all(|x| *x == 0.0);
        let zb = b.iter().all(|x| *x == 0.0);
        let d = bray_curtis(&a, &b);
        if za && zb {
            prop_assert!(d.is_err());
        } else {
            let d = d.unwrap();
            prop_assert_eq!(d, bray_curtis(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d == 0.0, a == b);
            prop_assert!((d - bc_oracle(&a, &b)).abs() < 1e-15);
        }
    }

    #[test]
    fn knn_ignores_store_order(seed in any::<u64>(), k in 1usize..20, rot in 0usize..20) {
        let queries = random_queries(seed, 21, 15, 4);
        let store: Vec<HashedQuery> =
            queries[..20].iter().enumerate().map(|(i, q)| hash_query_with(i, q, 6)).collect();
        let mut shuffled = store.clone();
        shuffled.rotate_left(rot);
        shuffled.reverse();
        let probe = hash_query_with(20, &queries[20], 6);
        prop_assert_eq!(knn(&store, &probe, k).unwrap(), knn(&shuffled, &probe, k).unwrap());
    }

    #[test]
    fn metrics_ignore_reformulation_order(purchases in arb_purchases(), k in 1usize..5, rot in 0usize..5) {
        let refs = vec![1, 2, 3, 4, 5];
        let mut perm = refs.clone();
        perm.rotate_left(rot);
        perm.swap(0, 4);
        let p = query_precision_at_k(0, &refs, &purchases, k).unwrap();
        let r = product_recall_at_k(0, &refs, &purchases, k).unwrap();
        prop_assert_eq!(p, query_precision_at_k(0, &perm, &purchases, k).unwrap());
        prop_assert_eq!(r, product_recall_at_k(0, &perm, &purchases, k).unwrap());
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
    }

    #[test]
    fn normalised_scores_stay_below_one(purchases in arb_purchases(), k in 1usize..4) {
        let pool: Vec<usize> = (0..8).collect();
        let refs = vec![1, 2, 3, 4, 5];
        let (bp, br) = oracle_best(0, &pool, &purchases, k, 5, 25).unwrap();
        prop_assert!(query_precision_at_k(0, &refs, &purchases, k).unwrap() <= bp);
        prop_assert!(product_recall_at_k(0, &refs, &purchases, k).unwrap() <= br);
    }

    #[test]
    fn f1_bounds(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
        let f = f1(p, r);
        prop_assert!(f <= 2.0 * p.min(r) + 1e-15);
        prop_assert!(f >= p.min(r) - 1e-15 && f <= p.max(r) + 1e-15);
        prop_assert!((f1(p, p) - p).abs() < 1e-15);
    }
}

#[test]
fn recall_grows_with_k_on_single_product_data() {
    let purchases: Vec<Vec<(usize, u32)>> = (0..12).map(|i| vec![(i % 3, 1 + i as u32)]).collect();
    let refs = [1, 2, 4, 5, 7];
    let mut last = 0.0;
    for k in 1..6 {
        let r = product_recall_at_k(0, &refs, &purchases, k).unwrap();
        assert!(r >= last);
        last = r;
    }
}
