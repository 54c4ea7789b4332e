use std::collections::{HashMap, VecDeque};

use super::{victims_of, ActivationOutcome, BankCounters, BankEngine, MitigatedRow, WindowSummary};
use crate::config::PrismConfig;
use crate::error::{Error, Result};
use crate::rng::{sample_window_slots, SeededRng};
use crate::types::{BankId, RowId};

/// Saturation value of the 3-bit PMQ activation counter.
pub const PMQ_COUNTER_MAX: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsqEntry {
    pub row: RowId,
    /// Matched a valid SHQ entry when it was sampled.
    pub intersecting: bool,
    /// Selected for mitigation, waiting for a free PMQ slot.
    pub awaiting_pmq: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PmqEntry {
    pub row: RowId,
    pub act_counter: u8,
    /// Insertion order, used to break counter ties oldest-first.
    pub seq: u64,
}

/// PrISM state of one bank: SSQ, SHQ, PMQ and the current window.
#[derive(Debug, Clone)]
pub struct BankState {
    config: PrismConfig,
    bank: BankId,
    slot_in_window: u32,
    sampled: Vec<bool>,
    forced_windows: VecDeque<Vec<u32>>,
    ssq: Vec<SsqEntry>,
    shq: VecDeque<Option<RowId>>,
    shq_members: HashMap<RowId, u32>,
    pmq: Vec<PmqEntry>,
    next_seq: u64,
    alert_requested: bool,
    counters: BankCounters,
    last_window: Option<WindowSummary>,
}

impl BankState {
    pub fn new(config: PrismConfig, bank: BankId, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let w = config.window as usize;
        let mut state = BankState {
            config,
            bank,
            slot_in_window: 0,
            sampled: vec![false; w],
            forced_windows: VecDeque::new(),
            ssq: Vec::new(),
            shq: VecDeque::new(),
            shq_members: HashMap::new(),
            pmq: Vec::new(),
            next_seq: 0,
            alert_requested: false,
            counters: BankCounters::default(),
            last_window: None,
        };
        state.draw_window(rng)?;
        Ok(state)
    }

    pub fn config(&self) -> &PrismConfig {
        &self.config
    }

    pub fn bank(&self) -> BankId {
        self.bank
    }

    pub fn slot_in_window(&self) -> u32 {
        self.slot_in_window
    }

    pub fn is_sampled_slot(&self, slot: u32) -> bool {
        self.sampled.get(slot as usize).copied().unwrap_or(false)
    }

    pub fn sampled_slots(&self) -> Vec<u32> {
        (0..self.config.window).filter(|&s| self.sampled[s as usize]).collect()
    }

    pub fn ssq(&self) -> &[SsqEntry] {
        &self.ssq
    }

    /// Selected rows the SSQ holds because the PMQ was full.
    pub fn ssq_awaiting(&self) -> usize {
        self.ssq.iter().filter(|e| e.awaiting_pmq).count()
    }

    pub fn pmq(&self) -> &[PmqEntry] {
        &self.pmq
    }

    /// SHQ slots in use, placeholders included.
    pub fn shq_len(&self) -> usize {
        self.shq.len()
    }

    pub fn shq_contains(&self, row: RowId) -> bool {
        self.shq_members.contains_key(&row)
    }

    pub fn shq_entries(&self) -> impl Iterator<Item = Option<RowId>> + '_ {
        self.shq.iter().copied()
    }

    /// Restarts peak-SSQ tracking from the current occupancy.
    pub fn reset_peak_ssq(&mut self) {
        self.counters.peak_ssq = self.ssq.len();
    }

    pub fn in_pmq(&self, row: RowId) -> bool {
        self.pmq.iter().any(|e| e.row == row)
    }

    fn awaiting(&self, row: RowId) -> bool {
        self.ssq.iter().any(|e| e.awaiting_pmq && e.row == row)
    }

    /// Replaces the sampled slots of the current window.
    ///
    /// This is the injection hook used to reach extremal sampling outcomes
    /// (such as a boundary burst) deterministically.
    pub fn override_current_window(&mut self, slots: &[u32]) -> Result<()> {
        self.check_slots(slots)?;
        self.sampled.iter_mut().for_each(|s| *s = false);
        for &s in slots {
            self.sampled[s as usize] = true;
        }
        Ok(())
    }

    /// Fixes the sampled slots of an upcoming window; windows queued this way
    /// are used in order before random draws resume.
    pub fn queue_window_slots(&mut self, slots: Vec<u32>) -> Result<()> {
        self.check_slots(&slots)?;
        self.forced_windows.push_back(slots);
        Ok(())
    }

    fn check_slots(&self, slots: &[u32]) -> Result<()> {
        let mut seen = vec![false; self.config.window as usize];
        if slots.len() > self.config.samples as usize {
            return Err(Error::config(format!(
                "{} forced slots exceed R = {}",
                slots.len(),
                self.config.samples
            )));
        }
        for &s in slots {
            if s >= self.config.window || seen[s as usize] {
                return Err(Error::config(format!("invalid forced slot {s}")));
            }
            seen[s as usize] = true;
        }
        Ok(())
    }

    fn draw_window(&mut self, rng: &mut SeededRng) -> Result<()> {
        let slots = match self.forced_windows.pop_front() {
            Some(s) => s,
            None => sample_window_slots(self.config.window, self.config.samples, rng)?,
        };
        self.sampled.iter_mut().for_each(|s| *s = false);
        for s in slots {
            self.sampled[s as usize] = true;
        }
        Ok(())
    }

    fn pmq_full(&self) -> bool {
        self.pmq.len() >= self.config.pmq_capacity as usize
    }

    fn push_pmq(&mut self, row: RowId) {
        debug_assert!(!self.pmq_full() && !self.in_pmq(row));
        self.pmq.push(PmqEntry {
            row,
            act_counter: 0,
            seq: self.next_seq,
        });
        self.next_seq += 1;
    }

    fn push_ssq(&mut self, entry: SsqEntry) -> Result<()> {
        if self.ssq.len() >= self.config.ssq_capacity as usize {
            return Err(Error::SsqOverflow {
                bank: self.bank,
                capacity: self.config.ssq_capacity as usize,
            });
        }
        self.ssq.push(entry);
        self.counters.peak_ssq = self.counters.peak_ssq.max(self.ssq.len());
        Ok(())
    }

    /// Sends a selected row towards the PMQ, parking it in the SSQ when the
    /// PMQ is full. Rows already pending are not duplicated.
    fn select_for_mitigation(&mut self, row: RowId, intersecting: bool) -> Result<()> {
        if self.in_pmq(row) || self.awaiting(row) {
            return Ok(());
        }
        if self.pmq_full() {
            self.push_ssq(SsqEntry {
                row,
                intersecting,
                awaiting_pmq: true,
            })
        } else {
            self.push_pmq(row);
            Ok(())
        }
    }

    fn reevaluate_alert(&mut self) {
        let t_pmq = self.config.t_pmq;
        let now = self.pmq_full() || self.pmq.iter().any(|e| u32::from(e.act_counter) > t_pmq);
        if now && !self.alert_requested {
            self.counters.alerts_raised += 1;
        }
        self.alert_requested = now;
    }

    fn advance_slot(&mut self, rng: &mut SeededRng) -> Result<bool> {
        self.slot_in_window += 1;
        if self.slot_in_window == self.config.window {
            let summary = self.end_window(rng)?;
            self.last_window = Some(summary);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Closes the current window: picks the default candidate, refreshes the
    /// SHQ and draws the next window's sampled slots.
    pub fn end_window(&mut self, rng: &mut SeededRng) -> Result<WindowSummary> {
        self.counters.windows += 1;
        let r = self.config.samples as usize;

        let candidates: Vec<usize> = (0..self.ssq.len())
            .filter(|&i| !self.ssq[i].awaiting_pmq && !self.ssq[i].intersecting)
            .collect();
        let mut default_candidate = None;
        let mut unselected = Vec::with_capacity(r.saturating_sub(1));
        if !candidates.is_empty() {
            let pick = rng.below(candidates.len() as u32) as usize;
            for (k, &i) in candidates.iter().enumerate() {
                if k == pick {
                    default_candidate = Some(self.ssq[i].row);
                } else {
                    unselected.push(self.ssq[i].row);
                }
            }
        }

        // Current-window samples leave the SSQ; only parked selections stay.
        self.ssq.retain(|e| e.awaiting_pmq);
        if let Some(row) = default_candidate {
            self.counters.default_selections += 1;
            self.select_for_mitigation(row, false)?;
        }

        let slots = r.saturating_sub(1);
        let mut shq_insertions: Vec<Option<RowId>> = unselected.into_iter().take(slots).map(Some).collect();
        shq_insertions.resize(slots, None);
        let capacity = self.config.shq_entries() as usize;
        for &entry in &shq_insertions {
            self.shq.push_back(entry);
            if let Some(row) = entry {
                *self.shq_members.entry(row).or_insert(0) += 1;
            }
        }
        while self.shq.len() > capacity {
            if let Some(Some(old)) = self.shq.pop_front() {
                if let Some(n) = self.shq_members.get_mut(&old) {
                    *n -= 1;
                    if *n == 0 {
                        self.shq_members.remove(&old);
                    }
                }
            }
        }

        self.slot_in_window = 0;
        self.draw_window(rng)?;
        self.reevaluate_alert();
        Ok(WindowSummary {
            default_candidate,
            shq_insertions,
        })
    }
}

impl BankEngine for BankState {
    fn on_activation(&mut self, row: RowId, rng: &mut SeededRng) -> Result<ActivationOutcome> {
        self.counters.activations += 1;
        if let Some(e) = self.pmq.iter_mut().find(|e| e.row == row) {
            e.act_counter = (e.act_counter + 1).min(PMQ_COUNTER_MAX);
        }

        let mut out = ActivationOutcome::default();
        if self.sampled[self.slot_in_window as usize] {
            out.sampled = true;
            self.counters.samples += 1;
            let intersecting = self.config.intersections_enabled() && self.shq_contains(row);
            if intersecting {
                out.intersected = true;
                self.counters.intersections += 1;
                self.select_for_mitigation(row, true)?;
            } else {
                self.push_ssq(SsqEntry {
                    row,
                    intersecting: false,
                    awaiting_pmq: false,
                })?;
            }
        }
        self.reevaluate_alert();
        out.window_closed = self.advance_slot(rng)?;
        out.alert = self.alert_requested;
        Ok(out)
    }

    fn on_idle_slot(&mut self, rng: &mut SeededRng) -> Result<bool> {
        self.counters.idle_slots += 1;
        self.advance_slot(rng)
    }

    fn service_mitigation(&mut self) -> Option<MitigatedRow> {
        let idx = self
            .pmq
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.act_counter.cmp(&b.act_counter).then(b.seq.cmp(&a.seq)))
            .map(|(i, _)| i)?;
        let entry = self.pmq.remove(idx);
        self.counters.mitigations_serviced += 1;

        while !self.pmq_full() {
            let Some(pos) = self.ssq.iter().position(|e| e.awaiting_pmq) else {
                break;
            };
            let waiting = self.ssq.remove(pos);
            self.push_pmq(waiting.row);
        }
        self.reevaluate_alert();
        Some(MitigatedRow {
            row: entry.row,
            victims: victims_of(entry.row, self.config.blast_radius),
        })
    }

    fn alert_requested(&self) -> bool {
        self.alert_requested
    }

    fn pending_mitigations(&self) -> usize {
        self.pmq.len() + self.ssq_awaiting()
    }

    fn counters(&self) -> &BankCounters {
        &self.counters
    }

    fn last_window(&self) -> Option<&WindowSummary> {
        self.last_window.as_ref()
    }
}
