use crate::rng::splitmix64;
use crate::types::{RowId, ROWS_PER_BANK};

const HALF_BITS: u32 = 9;
const HALF_MASK: u32 = (1 << HALF_BITS) - 1;
const ROUNDS: u64 = 4;

/// Keyed bijection of the 17-bit row space.
///
/// A 4-round balanced Feistel network permutes 18-bit values (two 9-bit
/// halves); outputs that land outside the row space are re-encrypted until
/// they fall inside (cycle walking), which keeps the map a bijection on
/// `[0, 2^17)`. Round `i` computes `splitmix64(key ^ (i << 32) ^ right) & 0x1ff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowPermutation {
    key: u64,
}

impl RowPermutation {
    pub fn new(key: u64) -> Self {
        RowPermutation { key }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    fn round(&self, i: u64, half: u32) -> u32 {
        (splitmix64(self.key ^ (i << 32) ^ u64::from(half)) as u32) & HALF_MASK
    }

    fn encrypt18(&self, v: u32) -> u32 {
        let (mut l, mut r) = (v >> HALF_BITS, v & HALF_MASK);
        for i in 0..ROUNDS {
            let next = l ^ self.round(i, r);
            l = r;
            r = next;
        }
        (l << HALF_BITS) | r
    }

    fn decrypt18(&self, v: u32) -> u32 {
        let (mut l, mut r) = (v >> HALF_BITS, v & HALF_MASK);
        for i in (0..ROUNDS).rev() {
            let prev = r ^ self.round(i, l);
            r = l;
            l = prev;
        }
        (l << HALF_BITS) | r
    }

    pub fn apply(&self, row: RowId) -> RowId {
        let mut v = self.encrypt18(row.get());
        while v >= ROWS_PER_BANK {
            v = self.encrypt18(v);
        }
        RowId::wrapping(u64::from(v))
    }

    pub fn invert(&self, row: RowId) -> RowId {
        let mut v = self.decrypt18(row.get());
        while v >= ROWS_PER_BANK {
            v = self.decrypt18(v);
        }
        RowId::wrapping(u64::from(v))
    }
}
