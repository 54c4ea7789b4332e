use std::collections::HashMap;

use crate::analytic::{abo_act_q, AboActSource};
use crate::channel::{AboPhase, ChannelState};
use crate::config::{PrismConfig, TimingConstants};
use crate::engine::{BankEngine, BankState, PMQ_COUNTER_MAX};
use crate::error::{Error, Result};
use crate::types::RowId;

const STEP_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainedReport {
    pub pmq_capacity: u32,
    pub t_pmq: u32,
    /// Target activations from its admission (which raised the Alert) to
    /// its mitigation.
    pub absorbed: u32,
    /// Activations beyond T_PMQ. A target serviced before reaching T_PMQ
    /// only absorbed Alert slack, and the whole count is reported.
    pub measured: u32,
    /// Documented budget for this Q, when there is one.
    pub tabulated: Option<u32>,
    pub target: RowId,
    pub alerts: u64,
    pub alert_rfms: u64,
    /// Activations from the first Alert to the target's mitigation.
    pub attack_activations: u64,
}

/// Chained-Alert measurement on the 500 preset with the given Q and T_PMQ.
pub fn chained_alert(q: u32, t_pmq: u32) -> Result<ChainedReport> {
    let mut cfg = PrismConfig::preset(500)?;
    cfg.pmq_capacity = q;
    cfg.t_pmq = t_pmq;
    chained_alert_with(&cfg, ChainSchedule::Leveling, 1)
}

/// How the attacker spends activations once the Alert chain has started.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainSchedule {
    /// Activations are spread evenly over the pending rows (fewest
    /// attacker-side activations first, youngest first on ties).
    Leveling,
    /// The target is activated whenever some older pending row holds an
    /// equal or higher counter, so the next RFM takes that row instead;
    /// otherwise the youngest other row with the lowest counter is raised.
    Covered,
}

fn covered_choice(at: &Attacker, target: RowId) -> RowId {
    let pmq = at.ch.banks()[0].pmq();
    let t = pmq.iter().find(|e| e.row == target).expect("target is pending");
    let after = (t.act_counter + 1).min(PMQ_COUNTER_MAX);
    // Service takes the highest counter, oldest first on ties.
    let covered = pmq
        .iter()
        .any(|e| e.row != target && (e.act_counter > after || (e.act_counter == after && e.seq < t.seq)));
    if covered {
        return target;
    }
    pmq.iter()
        .filter(|e| e.row != target)
        .min_by_key(|e| (e.act_counter, std::cmp::Reverse(e.seq)))
        .map_or(target, |e| e.row)
}

struct Attacker {
    ch: ChannelState<BankState>,
    next_fresh: u64,
    /// Attacker-side count of activations per row since PMQ admission.
    counts: HashMap<RowId, u32>,
}

impl Attacker {
    fn fresh(&mut self) -> RowId {
        self.next_fresh += 1;
        RowId::wrapping(self.next_fresh)
    }

    fn act(&mut self, row: RowId) -> Result<()> {
        let was_pending = self.ch.banks()[0].in_pmq(row);
        self.ch.step(0, row)?;
        if was_pending {
            *self.counts.entry(row).or_insert(0) += 1;
        }
        if self.ch.counters().total_acts > STEP_LIMIT {
            return Err(Error::domain("chained-Alert schedule did not terminate"));
        }
        Ok(())
    }

    fn pmq_rows(&self) -> Vec<RowId> {
        let mut v: Vec<_> = self.ch.banks()[0].pmq().to_vec();
        v.sort_by_key(|e| e.seq);
        v.into_iter().map(|e| e.row).collect()
    }

    fn quiet(&self) -> bool {
        let b = &self.ch.banks()[0];
        self.ch.phase() == AboPhase::Idle && !b.alert_requested() && b.ssq_awaiting() == 0
    }
}

/// White-box chained-Alert attack against a single bank.
///
/// 1. Warm-up: circular hammering of W fresh rows. Intersections and default
///    selections admit rows to the PMQ; an admitted row is retired from the
///    rotation and replaced by a fresh one, so PMQ counters stay at zero.
///    The phase ends with Q-1 pending entries and no Alert.
/// 2. Ramp: every pending row is activated up to exactly T_PMQ.
/// 3. Trigger: fresh rows are hammered until a default selection admits the
///    target, filling the PMQ and raising the Alert.
/// 4. Chain: the attacker only activates pending rows. Under
///    [`ChainSchedule::Leveling`] each activation goes to the row with the
///    fewest activations since admission, oldest first on ties. Each counter
///    pushed past T_PMQ re-arms the Alert, so RFMs arrive at the drain
///    cadence and take the oldest rows while the target, the youngest, is
///    serviced last.
///
/// TRR and proactive RFMs are disabled.
pub fn chained_alert_with(base: &PrismConfig, schedule: ChainSchedule, seed: u64) -> Result<ChainedReport> {
    let mut cfg = base.clone();
    cfg.trr_interval_acts = 0;
    cfg.proactive_rfm = false;
    cfg.ssq_capacity = cfg.ssq_capacity.max(4 * cfg.samples);
    let q = cfg.pmq_capacity as usize;
    let w = cfg.window as usize;
    let tabulated = {
        let a = abo_act_q(cfg.pmq_capacity, cfg.abo_act_slack);
        match a.source {
            AboActSource::Nearest { .. } => None,
            _ => Some(a.activations),
        }
    };
    let mut at = Attacker {
        ch: ChannelState::prism(&cfg, &TimingConstants::default(), 1, seed)?,
        next_fresh: 0,
        counts: HashMap::new(),
    };

    // 1. Warm-up.
    let mut rotation: Vec<RowId> = (0..w).map(|_| at.fresh()).collect();
    let mut i = 0usize;
    while !(at.ch.banks()[0].pmq().len() == q - 1 && at.quiet()) {
        let row = rotation[i % w];
        at.act(row)?;
        let b = &at.ch.banks()[0];
        for slot in rotation.iter_mut() {
            if b.in_pmq(*slot) {
                *slot = RowId::wrapping(0);
            }
        }
        for slot in rotation.iter_mut().take(w) {
            if *slot == RowId::wrapping(0) {
                *slot = at.fresh();
            }
        }
        i += 1;
    }
    let ramped = at.pmq_rows();

    // 2. Ramp to T_PMQ using attacker-side counts (the PMQ counters saturate).
    at.counts.clear();
    for &row in &ramped {
        at.counts.insert(row, 0);
        for _ in 0..cfg.t_pmq {
            at.act(row)?;
        }
    }
    let bank = &at.ch.banks()[0];
    if bank.pmq().len() != q - 1 || bank.alert_requested() {
        return Err(Error::domain("ramp phase disturbed the PMQ"));
    }

    // 3. Trigger.
    let alerts_before = at.ch.counters().alerts;
    while at.ch.counters().alerts == alerts_before {
        let row = at.fresh();
        at.act(row)?;
    }
    let newcomer = at
        .pmq_rows()
        .into_iter()
        .find(|r| !ramped.contains(r))
        .ok_or_else(|| Error::domain("Alert raised without a new PMQ admission"))?;
    at.counts.insert(newcomer, 0);
    let target = newcomer;
    let acts_before = at.ch.counters().total_acts;
    let rfms_before = at.ch.counters().rfm_alert;

    // 4. Chain.
    while at.ch.banks()[0].in_pmq(target) {
        let next = match schedule {
            ChainSchedule::Leveling => {
                let pending = at.pmq_rows();
                pending
                    .iter()
                    .copied()
                    .min_by_key(|r| at.counts.get(r).copied().unwrap_or(0))
                    .expect("target is pending")
            }
            ChainSchedule::Covered => covered_choice(&at, target),
        };
        at.act(next)?;
    }

    let absorbed = at.counts[&target];
    let measured = if absorbed >= cfg.t_pmq {
        absorbed - cfg.t_pmq
    } else {
        absorbed
    };
    Ok(ChainedReport {
        pmq_capacity: cfg.pmq_capacity,
        t_pmq: cfg.t_pmq,
        absorbed,
        measured,
        tabulated,
        target,
        alerts: at.ch.counters().alerts - alerts_before,
        alert_rfms: at.ch.counters().rfm_alert - rfms_before,
        attack_activations: at.ch.counters().total_acts - acts_before,
    })
}
