//! Linear probing on a circular table of `m` urns.
//!
//! Urns are numbered `1..=m` at the API boundary and `0..m` internally.
//! A ball whose home urn is occupied moves clockwise (wrapping from `m` to
//! `1`) to the first empty urn; its displacement is the number of urns it
//! skipped.

use serde::Serialize;

use crate::error::{Error, Result};

/// Ordered home addresses of `n` balls thrown into `m` urns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashSequence {
    m: usize,
    addresses: Vec<usize>,
}

impl HashSequence {
    pub fn new(m: usize, addresses: Vec<usize>) -> Result<Self> {
        if m == 0 {
            return Err(Error::Input("table size m must be at least 1".into()));
        }
        if let Some((i, &a)) = addresses.iter().enumerate().find(|(_, &a)| a == 0 || a > m) {
            return Err(Error::Input(format!(
                "address {a} of ball {} outside [1, {m}]",
                i + 1
            )));
        }
        if addresses.len() > m {
            return Err(Error::Capacity {
                balls: addresses.len(),
                urns: m,
            });
        }
        Ok(Self { m, addresses })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.addresses.len()
    }

    pub fn addresses(&self) -> &[usize] {
        &self.addresses
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InsertTrace {
    /// Probe steps beyond the home urn, per ball in insertion order.
    pub displacements: Vec<u64>,
    /// Final urn of each ball (1-based), in insertion order.
    pub positions: Vec<usize>,
    pub total: u64,
}

impl InsertTrace {
    /// Occupied urns (1-based), ascending.
    pub fn occupied(&self) -> Vec<usize> {
        let mut v = self.positions.clone();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Block {
    /// First urn of the block (1-based), clockwise.
    pub first_urn: usize,
    /// Urn count including the trailing empty urn.
    pub length: usize,
    /// Total displacement of the balls whose final urn lies in the block.
    pub disp_sum: u64,
}

impl Block {
    /// Trailing empty urn (1-based).
    pub fn empty_urn(&self, m: usize) -> usize {
        (self.first_urn - 1 + self.length - 1) % m + 1
    }

    /// Urns of the block in clockwise order (1-based).
    pub fn urns(&self, m: usize) -> Vec<usize> {
        (0..self.length)
            .map(|k| (self.first_urn - 1 + k) % m + 1)
            .collect()
    }
}

/// Blocks ordered by their trailing empty urn, smallest index first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockDecomposition {
    pub m: usize,
    pub blocks: Vec<Block>,
}

impl BlockDecomposition {
    pub fn lengths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.length).collect()
    }

    pub fn disp_sums(&self) -> Vec<u64> {
        self.blocks.iter().map(|b| b.disp_sum).collect()
    }

    /// (length, disp_sum) pairs sorted, for order-free comparisons.
    pub fn multiset(&self) -> Vec<(usize, u64)> {
        let mut v: Vec<(usize, u64)> = self.blocks.iter().map(|b| (b.length, b.disp_sum)).collect();
        v.sort_unstable();
        v
    }
}

/// Inserts the balls in order and records every displacement.
pub fn insert_trace(seq: &HashSequence) -> InsertTrace {
    let m = seq.m;
    let mut occupied = vec![false; m];
    let mut displacements = Vec::with_capacity(seq.n());
    let mut positions = Vec::with_capacity(seq.n());
    let mut total = 0u64;
    for &h in &seq.addresses {
        let mut pos = h - 1;
        let mut d = 0u64;
        while occupied[pos] {
            pos += 1;
            if pos == m {
                pos = 0;
            }
            d += 1;
        }
        occupied[pos] = true;
        displacements.push(d);
        positions.push(pos + 1);
        total += d;
    }
    InsertTrace {
        displacements,
        positions,
        total,
    }
}

pub fn total_displacement(seq: &HashSequence) -> u64 {
    insert_trace(seq).total
}

/// Total displacement of home addresses given 0-based, without validation.
/// Used on hot sampling paths; `scratch` must have length `m`.
pub(crate) fn total_displacement_raw(addresses: &[usize], scratch: &mut [bool]) -> u64 {
    let m = scratch.len();
    scratch.iter_mut().for_each(|o| *o = false);
    let mut total = 0u64;
    for &h in addresses {
        let mut pos = h;
        while scratch[pos] {
            pos += 1;
            if pos == m {
                pos = 0;
            }
            total += 1;
        }
        scratch[pos] = true;
    }
    total
}

/// Splits the final table into blocks: each maximal run of occupied urns
/// together with the empty urn that follows it clockwise.
pub fn block_decomposition(seq: &HashSequence) -> Result<BlockDecomposition> {
    let m = seq.m;
    if seq.n() >= m {
        return Err(Error::Input(format!(
            "block decomposition needs an empty urn (n={}, m={m})",
            seq.n()
        )));
    }
    let trace = insert_trace(seq);
    // displacement of the ball resting in each urn, if any
    let mut resting: Vec<Option<u64>> = vec![None; m];
    for (&pos, &d) in trace.positions.iter().zip(&trace.displacements) {
        resting[pos - 1] = Some(d);
    }
    let mut blocks = Vec::with_capacity(m - seq.n());
    for e in (0..m).filter(|&u| resting[u].is_none()) {
        let mut len = 1;
        let mut disp = 0u64;
        let mut u = (e + m - 1) % m;
        while let Some(d) = resting[u] {
            len += 1;
            disp += d;
            u = (u + m - 1) % m;
        }
        let first = (e + m + 1 - len) % m;
        blocks.push(Block {
            first_urn: first + 1,
            length: len,
            disp_sum: disp,
        });
    }
    Ok(BlockDecomposition { m, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(m: usize, a: &[usize]) -> HashSequence {
        HashSequence::new(m, a.to_vec()).unwrap()
    }

    #[test]
    fn worked_example_trace() {
        let t = insert_trace(&seq(10, &[6, 9, 1, 9, 9, 6, 2, 5]));
        assert_eq!(t.displacements, vec![0, 0, 0, 1, 3, 1, 1, 0]);
        assert_eq!(t.total, 6);
        assert_eq!(t.occupied(), vec![1, 2, 3, 5, 6, 7, 9, 10]);
    }

    #[test]
    fn distinct_addresses_never_move() {
        assert_eq!(
            insert_trace(&seq(4, &[1, 2, 3])).displacements,
            vec![0, 0, 0]
        );
    }

    #[test]
    fn single_address_pile_up_is_maximal() {
        assert_eq!(total_displacement(&seq(5, &[1, 1, 1, 1])), 6);
    }

    #[test]
    fn wraps_from_last_urn_to_first() {
        let t = insert_trace(&seq(3, &[3, 3]));
        assert_eq!(t.positions, vec![3, 1]);
        assert_eq!(t.total, 1);
    }

    #[test]
    fn permutation_of_worked_example() {
        assert_eq!(total_displacement(&seq(10, &[5, 2, 6, 9, 9, 1, 6, 9])), 6);
        assert_eq!(total_displacement(&seq(2, &[1])), 0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            HashSequence::new(3, vec![0]),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            HashSequence::new(3, vec![4]),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            HashSequence::new(2, vec![1, 1, 2]),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn worked_example_blocks() {
        let b = block_decomposition(&seq(10, &[6, 9, 1, 9, 9, 6, 2, 5])).unwrap();
        assert_eq!(b.lengths(), vec![6, 4]);
        assert_eq!(b.disp_sums(), vec![5, 1]);
        assert_eq!(b.blocks[0].urns(10), vec![9, 10, 1, 2, 3, 4]);
        assert_eq!(b.blocks[1].urns(10), vec![5, 6, 7, 8]);
        assert_eq!(b.blocks[0].empty_urn(10), 4);
    }

    #[test]
    fn lone_empty_urns_are_unit_blocks() {
        let b = block_decomposition(&seq(3, &[1])).unwrap();
        assert_eq!(b.lengths(), vec![2, 1]);
        assert_eq!(b.disp_sums(), vec![0, 0]);
    }

    #[test]
    fn full_table_has_no_blocks() {
        assert!(block_decomposition(&seq(2, &[1, 1])).is_err());
    }

    fn check_invariants(s: &HashSequence) {
        let n = s.n() as u64;
        let t = insert_trace(s);
        assert_eq!(t.total, t.displacements.iter().sum::<u64>());
        assert!(t.total <= n * n.saturating_sub(1) / 2);
        let mut occ = t.occupied();
        occ.dedup();
        assert_eq!(occ.len(), s.n());
        if s.n() < s.m() {
            let b = block_decomposition(s).unwrap();
            assert_eq!(b.blocks.len(), s.m() - s.n());
            assert_eq!(b.lengths().iter().sum::<usize>(), s.m());
            assert_eq!(b.disp_sums().iter().sum::<u64>(), t.total);
        }
    }

    #[test]
    fn exhaustive_small_tables() {
        for m in 1..=5usize {
            for n in 0..m {
                let count = m.pow(n as u32);
                for code in 0..count {
                    let mut c = code;
                    let a: Vec<usize> = (0..n)
                        .map(|_| {
                            let d = c % m;
                            c /= m;
                            d + 1
                        })
                        .collect();
                    check_invariants(&seq(m, &a));
                }
            }
        }
    }

    fn arb_seq() -> impl Strategy<Value = HashSequence> {
        (1usize..40).prop_flat_map(|m| {
            prop::collection::vec(1..=m, 0..=m).prop_map(move |a| HashSequence::new(m, a).unwrap())
        })
    }

    proptest! {
        #[test]
        fn invariants_hold(s in arb_seq()) {
            check_invariants(&s);
        }

        #[test]
        fn total_is_permutation_invariant(s in arb_seq(), perm_seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut a = s.addresses().to_vec();
            a.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
            let p = HashSequence::new(s.m(), a).unwrap();
            prop_assert_eq!(total_displacement(&s), total_displacement(&p));
            if s.n() < s.m() {
                prop_assert_eq!(
                    block_decomposition(&s).unwrap().multiset(),
                    block_decomposition(&p).unwrap().multiset()
                );
            }
        }
    }
}
