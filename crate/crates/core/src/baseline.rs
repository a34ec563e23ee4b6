//! Trigram-hash baseline: bag of trigrams hashed into a fixed number of
//! buckets, compared with Bray-Curtis distance.
//!
//! The bucket of trigram `t` is `splitmix64(t) mod dim`, where `splitmix64`
//! is the output function of the SplitMix64 generator applied to the
//! 64-bit id: `z = t + 0x9E3779B97F4A7C15`, then
//! `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9`,
//! `z = (z ^ (z >> 27)) * 0x94D049BB133111EB`, `z ^ (z >> 31)` (all
//! arithmetic wrapping).

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::types::Query;

pub const DEFAULT_BUCKETS: usize = 300;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashedQuery {
    pub id: usize,
    pub buckets: Vec<f64>,
}

impl HashedQuery {
    pub fn total(&self) -> f64 {
        self.buckets.iter().sum()
    }
}

pub fn hash_query(id: usize, q: &Query) -> HashedQuery {
    hash_query_with(id, q, DEFAULT_BUCKETS)
}

pub fn hash_query_with(id: usize, q: &Query, dim: usize) -> HashedQuery {
    assert!(dim > 0, "bucket count must be positive");
    let mut buckets = vec![0.0; dim];
    for &t in &q.trigram_ids {
        buckets[(splitmix64(t as u64) % dim as u64) as usize] += 1.0;
    }
    HashedQuery { id, buckets }
}

/// `Σ|a_i − b_i| / Σ(a_i + b_i)`.
pub fn bray_curtis(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += (x - y).abs();
        den += x + y;
    }
    if den == 0.0 {
        return Err(Error::ZeroVectors);
    }
    Ok(num / den)
}

/// The `k` store entries closest to `probe`, ordered by (distance, id).
pub fn knn(store: &[HashedQuery], probe: &HashedQuery, k: usize) -> Result<Vec<usize>> {
    if k > store.len() {
        return Err(Error::StoreTooSmall {
            available: store.len(),
            requested: k,
        });
    }
    let mut scored = store
        .iter()
        .map(|h| Ok((bray_curtis(&h.buckets, &probe.buckets)?, h.id)))
        .collect::<Result<Vec<(f64, usize)>>>()?;
    scored.sort_by(by_distance_then_id);
    Ok(scored.into_iter().take(k).map(|(_, id)| id).collect())
}

pub(crate) fn by_distance_then_id(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_vectors() {
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn counts_are_conserved_and_order_free() {
        let a = hash_query(0, &Query::new(vec![4, 9, 4], 0));
        let b = hash_query(1, &Query::new(vec![9, 4, 4], 0));
        assert_eq!(a.total(), 3.0);
        assert_eq!(a.buckets, b.buckets);
    }

    #[test]
    fn bray_curtis_examples() {
        assert_eq!(bray_curtis(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(bray_curtis(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert_eq!(bray_curtis(&[1.0, 0.0, 2.0], &[1.0, 1.0, 0.0]).unwrap(), 0.6);
        assert!(matches!(bray_curtis(&[0.0; 3], &[0.0; 3]), Err(Error::ZeroVectors)));
    }

    #[test]
    fn probe_finds_itself() {
        let store: Vec<HashedQuery> = (0..10)
            .map(|i| hash_query(i, &Query::new(vec![i, i + 1], 0)))
            .collect();
        assert_eq!(knn(&store, &store[6], 1).unwrap(), vec![6]);
        assert!(knn(&store, &store[6], 11).is_err());
    }
}
