use std::fmt;

use crate::error::{Error, Result};

/// Width of a per-bank row address.
pub const ROW_BITS: u32 = 17;
/// Number of addressable rows per bank.
pub const ROWS_PER_BANK: u32 = 1 << ROW_BITS;

/// Per-bank row index, always below `2^17`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(u32);

impl RowId {
    pub fn new(value: u64) -> Result<Self> {
        if value < ROWS_PER_BANK as u64 {
            Ok(RowId(value as u32))
        } else {
            Err(Error::RowRange { row: value })
        }
    }

    /// Builds a row id by reducing `value` into the row space.
    pub fn wrapping(value: u64) -> Self {
        RowId((value % ROWS_PER_BANK as u64) as u32)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type BankId = usize;
