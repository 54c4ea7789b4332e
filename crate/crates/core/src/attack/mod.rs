//! Activation-sequence generators.
//!
//! Streaming patterns ([`AttackPattern`]) are pure functions of
//! `(kind, index, seed)` and can be replayed from any index. The two
//! extremal scenarios, [`boundary_burst`] and [`chained_alert`], need to
//! observe or steer engine state and therefore run their own channel.

mod burst;
mod chained;
mod permute;
mod trace;

pub use burst::{boundary_burst, boundary_burst_for, BurstReport};
pub use chained::{chained_alert, chained_alert_with, ChainSchedule, ChainedReport};
pub use permute::RowPermutation;
pub use trace::{ingest_trace, parse_trace, EactTiming, TraceEvent};

use crate::error::{Error, Result};
use crate::rng::splitmix64;
use crate::types::{BankId, RowId, ROWS_PER_BANK};

/// Circular-X row at slot `s` of window `t`: `(t·W + s) mod X`.
pub fn circular_x(t: u64, s: u32, w: u32, x: u32) -> RowId {
    let x = u64::from(x.max(1));
    RowId::wrapping((t * u64::from(w) + u64::from(s)) % x)
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackKind {
    /// X rows hammered round-robin, one per slot.
    CircularX { x: u32 },
    /// Uniformly random rows among the first `row_count` of the bank.
    UniformBenign { row_count: u32 },
    /// A pre-loaded trace, replayed in order.
    Trace(Vec<TraceEvent>),
}

/// One activation (or idle slot) of a generated stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Act { bank: BankId, row: RowId },
    Idle { bank: BankId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackPattern {
    pub kind: AttackKind,
    /// Number of accesses the pattern produces.
    pub horizon: u64,
    /// Banks targeted, interleaved round-robin.
    pub banks: Vec<BankId>,
    pub window: u32,
    pub seed: u64,
}

impl AttackPattern {
    pub fn circular_x(x: u32, window: u32, horizon: u64, banks: Vec<BankId>) -> Result<Self> {
        if x == 0 || x > ROWS_PER_BANK {
            return Err(Error::config(format!("X must be in 1..=2^17, got {x}")));
        }
        Self::build(AttackKind::CircularX { x }, window, horizon, banks, 0)
    }

    pub fn uniform_benign(row_count: u32, horizon: u64, banks: Vec<BankId>, seed: u64) -> Result<Self> {
        if row_count == 0 || row_count > ROWS_PER_BANK {
            return Err(Error::config(format!("row_count must be in 1..=2^17, got {row_count}")));
        }
        Self::build(AttackKind::UniformBenign { row_count }, 1, horizon, banks, seed)
    }

    /// Replays `events`; the horizon is the trace length.
    pub fn trace(events: Vec<TraceEvent>) -> Self {
        let horizon = events.len() as u64;
        AttackPattern {
            kind: AttackKind::Trace(events),
            horizon,
            banks: Vec::new(),
            window: 1,
            seed: 0,
        }
    }

    fn build(kind: AttackKind, window: u32, horizon: u64, banks: Vec<BankId>, seed: u64) -> Result<Self> {
        if banks.is_empty() {
            return Err(Error::config("an attack pattern needs at least one target bank"));
        }
        if window == 0 {
            return Err(Error::config("window must be positive"));
        }
        Ok(AttackPattern {
            kind,
            horizon,
            banks,
            window,
            seed,
        })
    }

    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = horizon;
        self
    }

    /// Access number `index`, or `None` past the horizon.
    pub fn access(&self, index: u64) -> Option<Access> {
        if index >= self.horizon {
            return None;
        }
        match &self.kind {
            AttackKind::CircularX { x } => {
                let nb = self.banks.len() as u64;
                let bank = self.banks[(index % nb) as usize];
                let j = index / nb;
                let w = u64::from(self.window);
                let row = circular_x(j / w, (j % w) as u32, self.window, *x);
                Some(Access::Act { bank, row })
            }
            AttackKind::UniformBenign { row_count } => {
                let h = splitmix64(self.seed ^ splitmix64(index));
                let bank = self.banks[(h % self.banks.len() as u64) as usize];
                let row = RowId::wrapping(splitmix64(h) % u64::from(*row_count));
                Some(Access::Act { bank, row })
            }
            AttackKind::Trace(events) => events.get(index as usize).map(|e| match *e {
                TraceEvent::Act { bank, row } => Access::Act { bank, row },
                TraceEvent::Idle { bank } => Access::Idle { bank },
            }),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Access> + '_ {
        (0..self.horizon).map_while(move |i| self.access(i))
    }

    /// Highest bank index the pattern touches.
    pub fn max_bank(&self) -> BankId {
        match &self.kind {
            AttackKind::Trace(events) => events
                .iter()
                .map(|e| match *e {
                    TraceEvent::Act { bank, .. } | TraceEvent::Idle { bank } => bank,
                })
                .max()
                .unwrap_or(0),
            _ => self.banks.iter().copied().max().unwrap_or(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circular_sweeps_and_degenerate_x() {
        let rows: Vec<u32> = (0..72).map(|s| circular_x(3, s, 72, 72).get()).collect();
        assert_eq!(rows, (0..72).collect::<Vec<_>>());
        assert!((0..500).all(|i| circular_x(i / 72, (i % 72) as u32, 72, 1).get() == 0));
    }

    #[test]
    fn lookback_edge_spacing() {
        let (w, l) = (72u32, 41u32);
        let x = (l + 1) * w;
        let mut last = None;
        for i in 0..(3 * x as u64) {
            let r = circular_x(i / 72, (i % 72) as u32, w, x);
            if r.get() == 17 {
                if let Some(prev) = last {
                    assert_eq!((i - prev) / u64::from(w), u64::from(l + 1));
                }
                last = Some(i);
            }
        }
    }

    #[test]
    fn pattern_is_replayable() {
        let p = AttackPattern::uniform_benign(1000, 10_000, vec![0, 1, 2], 77).unwrap();
        let a: Vec<_> = p.iter().collect();
        let b: Vec<_> = (0..10_000).map(|i| p.access(i).unwrap()).collect();
        assert_eq!(a, b);
        assert!(p.access(10_000).is_none());
    }

    #[test]
    fn circular_interleaves_banks() {
        let p = AttackPattern::circular_x(5, 72, 20, vec![0, 3]).unwrap();
        let v: Vec<_> = p.iter().collect();
        assert_eq!(
            v[0],
            Access::Act {
                bank: 0,
                row: RowId::wrapping(0)
            }
        );
        assert_eq!(
            v[1],
            Access::Act {
                bank: 3,
                row: RowId::wrapping(0)
            }
        );
        assert_eq!(
            v[2],
            Access::Act {
                bank: 0,
                row: RowId::wrapping(1)
            }
        );
    }
}
