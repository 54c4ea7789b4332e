use std::collections::VecDeque;

use super::{victims_of, ActivationOutcome, BankCounters, BankEngine, MitigatedRow, WindowSummary};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::types::RowId;

/// MINT window length for a target threshold.
pub fn mint_window_for(target_threshold: u32) -> Result<u32> {
    match target_threshold {
        1000 => Ok(48),
        500 => Ok(24),
        250 => Ok(11),
        other => Err(Error::config(format!(
            "no MINT window for threshold {other}; expected 1000, 500 or 250"
        ))),
    }
}

/// Fixed-rate baseline: one pre-drawn slot per window, selected rows wait in
/// a delayed-mitigation queue until a TRR or RFM opportunity.
#[derive(Debug, Clone)]
pub struct MintBankState {
    window: u32,
    blast_radius: u32,
    slot_in_window: u32,
    selected_slot: u32,
    selection: Option<RowId>,
    queue: VecDeque<RowId>,
    counters: BankCounters,
    last_window: Option<WindowSummary>,
}

impl MintBankState {
    pub fn new(window: u32, blast_radius: u32, rng: &mut SeededRng) -> Result<Self> {
        if window == 0 {
            return Err(Error::config("MINT window must be positive"));
        }
        Ok(MintBankState {
            window,
            blast_radius,
            slot_in_window: 0,
            selected_slot: rng.below(window),
            selection: None,
            queue: VecDeque::new(),
            counters: BankCounters::default(),
            last_window: None,
        })
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    pub fn queued(&self) -> impl Iterator<Item = RowId> + '_ {
        self.queue.iter().copied()
    }

    fn advance_slot(&mut self, rng: &mut SeededRng) -> bool {
        self.slot_in_window += 1;
        if self.slot_in_window < self.window {
            return false;
        }
        self.counters.windows += 1;
        let chosen = self.selection.take();
        if let Some(row) = chosen {
            self.counters.default_selections += 1;
            if !self.queue.contains(&row) {
                self.queue.push_back(row);
            }
        }
        self.last_window = Some(WindowSummary {
            default_candidate: chosen,
            shq_insertions: Vec::new(),
        });
        self.slot_in_window = 0;
        self.selected_slot = rng.below(self.window);
        true
    }
}

impl BankEngine for MintBankState {
    fn on_activation(&mut self, row: RowId, rng: &mut SeededRng) -> Result<ActivationOutcome> {
        self.counters.activations += 1;
        let sampled = self.slot_in_window == self.selected_slot;
        if sampled {
            self.counters.samples += 1;
            self.selection = Some(row);
        }
        let window_closed = self.advance_slot(rng);
        Ok(ActivationOutcome {
            sampled,
            intersected: false,
            alert: false,
            window_closed,
        })
    }

    fn on_idle_slot(&mut self, rng: &mut SeededRng) -> Result<bool> {
        self.counters.idle_slots += 1;
        Ok(self.advance_slot(rng))
    }

    fn service_mitigation(&mut self) -> Option<MitigatedRow> {
        let row = self.queue.pop_front()?;
        self.counters.mitigations_serviced += 1;
        Some(MitigatedRow {
            row,
            victims: victims_of(row, self.blast_radius),
        })
    }

    fn alert_requested(&self) -> bool {
        false
    }

    fn pending_mitigations(&self) -> usize {
        self.queue.len()
    }

    fn counters(&self) -> &BankCounters {
        &self.counters
    }

    fn last_window(&self) -> Option<&WindowSummary> {
        self.last_window.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_window_sizes() {
        assert_eq!(mint_window_for(1000).unwrap(), 48);
        assert_eq!(mint_window_for(500).unwrap(), 24);
        assert_eq!(mint_window_for(250).unwrap(), 11);
        assert!(mint_window_for(100).is_err());
    }

    #[test]
    fn one_selection_per_window() {
        let mut rng = SeededRng::new(1);
        let mut m = MintBankState::new(48, 2, &mut rng).unwrap();
        for i in 0..48 * 10 {
            m.on_activation(RowId::wrapping(i), &mut rng).unwrap();
        }
        assert_eq!(m.counters().windows, 10);
        assert_eq!(m.counters().default_selections, 10);
        assert_eq!(m.pending_mitigations(), 10);
    }

    #[test]
    fn idle_selected_slot_selects_nothing() {
        let mut rng = SeededRng::new(2);
        let mut m = MintBankState::new(8, 2, &mut rng).unwrap();
        for _ in 0..8 {
            m.on_idle_slot(&mut rng).unwrap();
        }
        assert_eq!(m.last_window().unwrap().default_candidate, None);
        assert_eq!(m.pending_mitigations(), 0);
    }

    #[test]
    fn unit_window_mitigates_every_activation() {
        let mut rng = SeededRng::new(3);
        let mut m = MintBankState::new(1, 2, &mut rng).unwrap();
        for i in 0..5u64 {
            let out = m.on_activation(RowId::wrapping(i), &mut rng).unwrap();
            assert!(out.sampled && out.window_closed);
            assert_eq!(m.service_mitigation().unwrap().row.get(), i as u32);
        }
    }
}
