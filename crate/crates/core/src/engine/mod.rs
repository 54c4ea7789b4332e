//! Per-bank mitigation engines.
//!
//! [`BankState`] is the PrISM state machine; [`MintBankState`] is the
//! fixed-rate MINT baseline. Both implement [`BankEngine`] so the channel
//! protocol can drive either.

mod mint;
mod prism;

pub use mint::{mint_window_for, MintBankState};
pub use prism::{BankState, PmqEntry, SsqEntry, PMQ_COUNTER_MAX};

use crate::error::Result;
use crate::rng::SeededRng;
use crate::types::{RowId, ROWS_PER_BANK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActivationOutcome {
    pub sampled: bool,
    pub intersected: bool,
    /// Bank requests an Alert after this activation.
    pub alert: bool,
    /// The activation closed the bank's mitigation window.
    pub window_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WindowSummary {
    pub default_candidate: Option<RowId>,
    /// Exactly R-1 SHQ insertions; `None` is an invalid placeholder.
    pub shq_insertions: Vec<Option<RowId>>,
}

impl WindowSummary {
    pub fn real_insertions(&self) -> usize {
        self.shq_insertions.iter().filter(|e| e.is_some()).count()
    }

    pub fn placeholders(&self) -> usize {
        self.shq_insertions.len() - self.real_insertions()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MitigatedRow {
    pub row: RowId,
    pub victims: Vec<RowId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BankCounters {
    pub activations: u64,
    pub idle_slots: u64,
    pub windows: u64,
    pub samples: u64,
    pub intersections: u64,
    pub default_selections: u64,
    pub alerts_raised: u64,
    pub mitigations_serviced: u64,
    pub peak_ssq: usize,
}

/// Interface the channel protocol uses to drive one bank.
pub trait BankEngine {
    fn on_activation(&mut self, row: RowId, rng: &mut SeededRng) -> Result<ActivationOutcome>;

    /// Advances the window by one slot that carries no activation.
    fn on_idle_slot(&mut self, rng: &mut SeededRng) -> Result<bool>;

    /// Serves one mitigation opportunity (TRR or RFM).
    fn service_mitigation(&mut self) -> Option<MitigatedRow>;

    fn alert_requested(&self) -> bool;

    /// Rows selected for mitigation and not yet serviced.
    fn pending_mitigations(&self) -> usize;

    fn counters(&self) -> &BankCounters;

    /// Summary of the most recently closed window, if any.
    fn last_window(&self) -> Option<&WindowSummary>;
}

/// Rows within `blast_radius` on each side of `row`, nearest first.
pub fn victims_of(row: RowId, blast_radius: u32) -> Vec<RowId> {
    let r = row.get() as i64;
    let mut out = Vec::with_capacity(2 * blast_radius as usize);
    for d in 1..=blast_radius as i64 {
        for v in [r - d, r + d] {
            if v >= 0 && v < ROWS_PER_BANK as i64 {
                out.push(RowId::wrapping(v as u64));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn victims_are_clipped_to_the_bank() {
        let v = victims_of(RowId::new(10).unwrap(), 2);
        let rows: Vec<u32> = v.iter().map(|r| r.get()).collect();
        assert_eq!(rows, vec![9, 11, 8, 12]);
        let edge = victims_of(RowId::new(0).unwrap(), 2);
        assert_eq!(edge.iter().map(|r| r.get()).collect::<Vec<_>>(), vec![1, 2]);
    }
}
