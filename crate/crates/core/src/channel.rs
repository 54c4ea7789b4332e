//! Channel-level service path: Alert Back-Off, RFM issuance, TRR cadence and
//! slot-cost accounting.
//!
//! Time advances one served activation per [`ChannelState::step`]. RFMs do
//! not consume activation slots; their cost is accumulated as stall slots
//! (`c_rfm` per RFM) and only enters [`ChannelState::throughput_loss`].
//!
//! ABO timing, in served activations: an Alert raised after activation `t`
//! is answered by `n_mit` all-bank RFMs after activation `t + abo_act_slack`;
//! a new Alert is honored only once `abo_delay` further activations have been
//! served. With the defaults (3, 1) this drains at most one entry per bank
//! every four activations.

use std::io::Write;

use serde::Serialize;

use crate::config::{PrismConfig, TimingConstants};
use crate::engine::{BankEngine, BankState, MintBankState};
use crate::error::{Error, Result};
use crate::eventlog::EventLog;
use crate::rng::SeededRng;
use crate::types::{BankId, RowId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AboPhase {
    Idle,
    AlertPending { slack_left: u32 },
    Delay { delay_left: u32 },
}

/// Protocol knobs the channel needs, extracted from a [`PrismConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub abo_act_slack: u32,
    pub abo_delay: u32,
    pub n_mit: u32,
    pub trr_interval_acts: u32,
    pub proactive_rfm: bool,
    /// RFM cost in activation slots.
    pub c_rfm: f64,
}

impl ProtocolParams {
    pub fn new(config: &PrismConfig, timing: &TimingConstants) -> Self {
        ProtocolParams {
            abo_act_slack: config.abo_act_slack,
            abo_delay: config.abo_delay,
            n_mit: config.n_mit,
            trr_interval_acts: config.trr_interval_acts,
            proactive_rfm: config.proactive_rfm,
            c_rfm: timing.c_rfm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MitigationSource {
    Trr,
    AlertRfm,
    ProactiveRfm,
}

impl MitigationSource {
    pub fn as_str(self) -> &'static str {
        match self {
            MitigationSource::Trr => "trr",
            MitigationSource::AlertRfm => "alert",
            MitigationSource::ProactiveRfm => "proactive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mitigation {
    pub bank: BankId,
    pub row: RowId,
    pub source: MitigationSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelCounters {
    pub total_acts: u64,
    pub idle_slots: u64,
    pub alerts: u64,
    pub rfm_alert: u64,
    pub rfm_proactive: u64,
    pub trr: u64,
    pub stall_slots: f64,
    pub mitigations: u64,
}

impl ChannelCounters {
    pub fn rfm_total(&self) -> u64 {
        self.rfm_alert + self.rfm_proactive
    }
}

/// One line of the counter CSV dump.
#[derive(Debug, Clone, Serialize)]
pub struct CounterRecord {
    pub total_acts: u64,
    pub alerts: u64,
    pub rfm_alert: u64,
    pub rfm_proactive: u64,
    pub trr: u64,
    pub stall_slots: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepReport {
    pub served: bool,
    pub rfms_issued: u32,
    /// Subset of `rfms_issued` answering an Alert.
    pub alert_rfms: u32,
    pub trr_fired: bool,
    pub alert_raised: bool,
}

/// A channel of banks sharing one Alert line and one RFM command stream.
pub struct ChannelState<E: BankEngine> {
    banks: Vec<E>,
    params: ProtocolParams,
    phase: AboPhase,
    counters: ChannelCounters,
    rng: SeededRng,
    acts_since_trr: u32,
    mitigations: Vec<Mitigation>,
    log: Option<EventLog>,
}

impl ChannelState<BankState> {
    /// A PrISM channel with `n_banks` banks.
    pub fn prism(config: &PrismConfig, timing: &TimingConstants, n_banks: usize, seed: u64) -> Result<Self> {
        if n_banks == 0 {
            return Err(Error::config("a channel needs at least one bank"));
        }
        let mut rng = SeededRng::new(seed);
        let banks = (0..n_banks)
            .map(|b| BankState::new(config.clone(), b, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelState::new(banks, ProtocolParams::new(config, timing), rng))
    }
}

impl ChannelState<MintBankState> {
    /// A MINT channel; only the TRR/proactive settings of `config` apply.
    pub fn mint(
        window: u32,
        config: &PrismConfig,
        timing: &TimingConstants,
        n_banks: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_banks == 0 {
            return Err(Error::config("a channel needs at least one bank"));
        }
        let mut rng = SeededRng::new(seed);
        let banks = (0..n_banks)
            .map(|_| MintBankState::new(window, config.blast_radius, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelState::new(banks, ProtocolParams::new(config, timing), rng))
    }
}

impl<E: BankEngine> ChannelState<E> {
    pub fn new(banks: Vec<E>, params: ProtocolParams, rng: SeededRng) -> Self {
        ChannelState {
            banks,
            params,
            phase: AboPhase::Idle,
            counters: ChannelCounters::default(),
            rng,
            acts_since_trr: 0,
            mitigations: Vec::new(),
            log: None,
        }
    }

    pub fn with_event_log(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.log = Some(EventLog::new(sink));
        self
    }

    pub fn banks(&self) -> &[E] {
        &self.banks
    }

    pub fn bank_mut(&mut self, bank: BankId) -> &mut E {
        &mut self.banks[bank]
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn phase(&self) -> AboPhase {
        self.phase
    }

    pub fn counters(&self) -> &ChannelCounters {
        &self.counters
    }

    /// Mitigations performed during the most recent step.
    pub fn last_mitigations(&self) -> &[Mitigation] {
        &self.mitigations
    }

    pub fn step(&mut self, bank: BankId, row: RowId) -> Result<StepReport> {
        self.check_bank(bank)?;
        self.mitigations.clear();
        let t = self.counters.total_acts;
        let outcome = self.banks[bank].on_activation(row, &mut self.rng)?;
        self.counters.total_acts += 1;
        if let Some(log) = self.log.as_mut() {
            log.activation(t, bank, row, outcome.sampled, outcome.intersected)?;
            if outcome.window_closed {
                if let Some(w) = self.banks[bank].last_window() {
                    log.window(t, bank, w)?;
                }
            }
        }

        let mut report = StepReport {
            served: true,
            ..StepReport::default()
        };

        if self.params.trr_interval_acts > 0 {
            self.acts_since_trr += 1;
            if self.acts_since_trr >= self.params.trr_interval_acts {
                self.acts_since_trr = 0;
                self.counters.trr += 1;
                report.trr_fired = true;
                if let Some(log) = self.log.as_mut() {
                    log.trr(t)?;
                }
                self.service_all(t, MitigationSource::Trr)?;
            }
        } else if self.params.proactive_rfm && outcome.window_closed && self.banks[bank].pending_mitigations() > 0 {
            self.counters.rfm_proactive += 1;
            self.counters.stall_slots += self.params.c_rfm;
            report.rfms_issued += 1;
            if let Some(log) = self.log.as_mut() {
                log.rfm(t, "proactive", Some(bank))?;
            }
            self.service_one(t, bank, MitigationSource::ProactiveRfm)?;
        }

        self.advance_abo(t, &mut report)?;
        Ok(report)
    }

    /// A slot on `bank` that carries no activation (trace idle marker).
    pub fn idle(&mut self, bank: BankId) -> Result<()> {
        self.check_bank(bank)?;
        self.mitigations.clear();
        self.counters.idle_slots += 1;
        self.banks[bank].on_idle_slot(&mut self.rng)?;
        Ok(())
    }

    fn check_bank(&self, bank: BankId) -> Result<()> {
        if bank < self.banks.len() {
            Ok(())
        } else {
            Err(Error::config(format!(
                "bank {bank} out of range for a {}-bank channel",
                self.banks.len()
            )))
        }
    }

    fn advance_abo(&mut self, t: u64, report: &mut StepReport) -> Result<()> {
        match self.phase {
            AboPhase::AlertPending { slack_left } => {
                if slack_left <= 1 {
                    self.issue_alert_rfms(t, report)?;
                } else {
                    self.phase = AboPhase::AlertPending {
                        slack_left: slack_left - 1,
                    };
                }
            }
            AboPhase::Delay { delay_left } => {
                self.phase = if delay_left <= 1 {
                    AboPhase::Idle
                } else {
                    AboPhase::Delay {
                        delay_left: delay_left - 1,
                    }
                };
            }
            AboPhase::Idle => {}
        }

        if self.phase == AboPhase::Idle && self.banks.iter().any(|b| b.alert_requested()) {
            self.counters.alerts += 1;
            report.alert_raised = true;
            if let Some(log) = self.log.as_mut() {
                log.alert(t)?;
            }
            if self.params.abo_act_slack == 0 {
                self.issue_alert_rfms(t, report)?;
            } else {
                self.phase = AboPhase::AlertPending {
                    slack_left: self.params.abo_act_slack,
                };
            }
        }
        Ok(())
    }

    fn issue_alert_rfms(&mut self, t: u64, report: &mut StepReport) -> Result<()> {
        for _ in 0..self.params.n_mit {
            self.counters.rfm_alert += 1;
            self.counters.stall_slots += self.params.c_rfm;
            report.rfms_issued += 1;
            report.alert_rfms += 1;
            if let Some(log) = self.log.as_mut() {
                log.rfm(t, "alert", None)?;
            }
            self.service_all(t, MitigationSource::AlertRfm)?;
        }
        self.phase = if self.params.abo_delay > 0 {
            AboPhase::Delay {
                delay_left: self.params.abo_delay,
            }
        } else {
            AboPhase::Idle
        };
        Ok(())
    }

    fn service_all(&mut self, t: u64, source: MitigationSource) -> Result<()> {
        for bank in 0..self.banks.len() {
            self.service_one(t, bank, source)?;
        }
        Ok(())
    }

    fn service_one(&mut self, t: u64, bank: BankId, source: MitigationSource) -> Result<()> {
        if let Some(m) = self.banks[bank].service_mitigation() {
            self.counters.mitigations += 1;
            if let Some(log) = self.log.as_mut() {
                log.mitigation(t, bank, m.row, source)?;
            }
            self.mitigations.push(Mitigation {
                bank,
                row: m.row,
                source,
            });
        }
        Ok(())
    }

    /// Fraction of channel time lost to RFM stalls. TRR is free.
    pub fn throughput_loss(&self) -> f64 {
        throughput_loss(self.counters.total_acts, self.counters.rfm_total(), self.params.c_rfm)
    }

    pub fn slowdown(&self) -> f64 {
        1.0 / (1.0 - self.throughput_loss())
    }

    pub fn counter_record(&self) -> CounterRecord {
        CounterRecord {
            total_acts: self.counters.total_acts,
            alerts: self.counters.alerts,
            rfm_alert: self.counters.rfm_alert,
            rfm_proactive: self.counters.rfm_proactive,
            trr: self.counters.trr,
            stall_slots: self.counters.stall_slots,
            loss: self.throughput_loss(),
        }
    }

    pub fn flush_log(&mut self) -> Result<()> {
        match self.log.as_mut() {
            Some(log) => log.flush(),
            None => Ok(()),
        }
    }
}

/// `rfms * c_rfm / (acts + rfms * c_rfm)`.
pub fn throughput_loss(total_acts: u64, rfm_total: u64, c_rfm: f64) -> f64 {
    let stall = rfm_total as f64 * c_rfm;
    if stall == 0.0 {
        0.0
    } else {
        stall / (total_acts as f64 + stall)
    }
}

/// Writes counter records as CSV (header included).
pub fn write_counter_csv<W: Write>(out: W, records: &[CounterRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<counter csv>".into(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::BankEngine;

    fn row(r: u64) -> RowId {
        RowId::new(r).unwrap()
    }

    #[test]
    fn quiet_channel_issues_nothing() {
        let cfg = PrismConfig::preset(500).unwrap();
        let timing = TimingConstants::default();
        let mut ch = ChannelState::prism(&cfg, &timing, 1, 1).unwrap();
        // Disable sampling entirely so PMQs stay empty.
        for _ in 0..2000 {
            let slots = ch.banks()[0].slot_in_window();
            if slots == 0 {
                ch.bank_mut(0).override_current_window(&[]).unwrap();
                ch.bank_mut(0).queue_window_slots(vec![]).unwrap();
            }
            ch.step(0, row(1)).unwrap();
        }
        assert_eq!(ch.counters().rfm_total(), 0);
        assert_eq!(ch.counters().stall_slots, 0.0);
        assert!(ch.counters().trr > 0);
        assert_eq!(ch.throughput_loss(), 0.0);
    }

    #[test]
    fn alert_is_answered_after_slack_and_reasserted_after_delay() {
        let mut cfg = PrismConfig::new(16, 2, 4);
        cfg.trr_interval_acts = 0;
        cfg.proactive_rfm = false;
        cfg.pmq_capacity = 1;
        let timing = TimingConstants::default();
        let mut ch = ChannelState::prism(&cfg, &timing, 1, 7).unwrap();
        // Window 0 samples slot 0 only: row 1 becomes the default candidate
        // and fills the single-entry PMQ at the window boundary.
        ch.bank_mut(0).override_current_window(&[0]).unwrap();
        for _ in 0..8 {
            ch.bank_mut(0).queue_window_slots(vec![]).unwrap();
        }
        let mut reports = Vec::new();
        for i in 0..16 {
            reports.push(ch.step(0, row(100 + i)).unwrap());
        }
        assert!(reports[15].alert_raised, "PMQ filled at the window boundary");
        for i in 0..3 {
            let r = ch.step(0, row(200 + i)).unwrap();
            assert_eq!(r.alert_rfms, if i == 2 { 1 } else { 0 }, "slack activation {i}");
        }
        assert_eq!(ch.counters().rfm_alert, 1);
        assert_eq!(ch.last_mitigations()[0].row, row(100));
        assert_eq!(ch.phase(), AboPhase::Delay { delay_left: 1 });
        assert_eq!(ch.banks()[0].pending_mitigations(), 0);
    }

    #[test]
    fn proactive_rfm_once_per_window_without_trr() {
        let mut cfg = PrismConfig::preset(500).unwrap();
        cfg.trr_interval_acts = 0;
        let timing = TimingConstants::default();
        let mut ch = ChannelState::prism(&cfg, &timing, 1, 3).unwrap();
        // Fresh rows every slot: default candidates each window, no intersections.
        let windows = 200u64;
        for i in 0..72 * windows {
            ch.step(0, RowId::wrapping(i)).unwrap();
        }
        assert_eq!(ch.counters().rfm_alert, 0);
        assert_eq!(ch.counters().rfm_proactive, windows);
        let rate = ch.counters().rfm_total() as f64 / ch.counters().total_acts as f64;
        assert!((rate - 1.0 / 72.0).abs() < 1e-12);
    }

    #[test]
    fn loss_formula() {
        assert_eq!(throughput_loss(1000, 0, 7.0), 0.0);
        let l = throughput_loss(72, 7, 7.0);
        assert!((l - 49.0 / 121.0).abs() < 1e-15);
        assert!((1.0 / (1.0 - l) - 121.0 / 72.0).abs() < 1e-12);
    }

    #[test]
    fn trr_cadence() {
        let cfg = PrismConfig::preset(1000).unwrap();
        let timing = TimingConstants::default();
        let mut ch = ChannelState::prism(&cfg, &timing, 2, 5).unwrap();
        for i in 0..162 * 10 {
            ch.step((i % 2) as usize, RowId::wrapping(i)).unwrap();
        }
        assert_eq!(ch.counters().trr, 10);
    }

    #[test]
    fn mint_channel_runs() {
        let mut cfg = PrismConfig::preset(500).unwrap();
        cfg.trr_interval_acts = 0;
        let timing = TimingConstants::default();
        let mut ch = ChannelState::mint(24, &cfg, &timing, 1, 9).unwrap();
        for i in 0..24 * 100 {
            ch.step(0, RowId::wrapping(i)).unwrap();
        }
        assert_eq!(ch.counters().rfm_proactive, 100);
        assert_eq!(ch.counters().alerts, 0);
    }

    #[test]
    fn counter_csv_has_documented_columns() {
        let rec = CounterRecord {
            total_acts: 10,
            alerts: 1,
            rfm_alert: 1,
            rfm_proactive: 0,
            trr: 0,
            stall_slots: 7.0,
            loss: 0.41,
        };
        let mut buf = Vec::new();
        write_counter_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("total_acts,alerts,rfm_alert,rfm_proactive,trr,stall_slots,loss\n"));
    }
}
