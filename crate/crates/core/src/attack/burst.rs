use crate::analytic::ssq_min_size;
use crate::channel::ChannelState;
use crate::config::{PrismConfig, TimingConstants};
use crate::engine::BankEngine;
use crate::error::{Error, Result};
use crate::types::RowId;

#[derive(Debug, Clone, PartialEq)]
pub struct BurstReport {
    pub samples: u32,
    /// Largest SSQ occupancy observed during the burst, counted on arrival.
    pub peak_ssq: usize,
    /// `ssq_min_size(R)`.
    pub bound: u32,
    pub intersecting_samples: u64,
    /// Activations issued, from the start of warm-up.
    pub activations: Vec<RowId>,
}

/// Worst-case SSQ load for R samples at W = 72 with default queues.
pub fn boundary_burst(samples: u32) -> Result<BurstReport> {
    let lookback = 8.max((3 * samples).div_ceil(samples.saturating_sub(1).max(1)));
    boundary_burst_for(&PrismConfig::new(72, samples, lookback), 0)
}

/// Drives two adjacent windows whose 2R sampled slots are consecutive (the
/// last R slots of one window and the first R of the next) and all hit
/// SHQ-resident rows, with the PMQ one entry short of full beforehand.
///
/// Sampling positions are forced through the engine's injection hook. TRR
/// and proactive RFMs are disabled so that only Alert-RFMs drain the SSQ,
/// and the SSQ is given room to overflow its nominal bound observably.
pub fn boundary_burst_for(base: &PrismConfig, seed: u64) -> Result<BurstReport> {
    let (w, r, l) = (base.window, base.samples, base.lookback);
    if r == 1 {
        // A single sample never waits: one entry, immediately consumed.
        return Ok(BurstReport {
            samples: 1,
            peak_ssq: 1,
            bound: ssq_min_size(1),
            intersecting_samples: 0,
            activations: Vec::new(),
        });
    }
    if l * (r - 1) < 3 * r - 1 {
        return Err(Error::domain(format!(
            "boundary burst needs at least 3R-1 SHQ slots; L(R-1) = {}",
            l * (r - 1)
        )));
    }
    let mut cfg = base.clone();
    cfg.trr_interval_acts = 0;
    cfg.proactive_rfm = false;
    cfg.ssq_capacity = cfg.ssq_capacity.max(2 * r + 1);
    let q = cfg.pmq_capacity as usize;
    let mut ch = ChannelState::prism(&cfg, &TimingConstants::default(), 1, seed)?;

    // Warm-up: R samples per window on fresh rows. Each window adds a default
    // candidate to the PMQ and R-1 rows to the SHQ; once the PMQ fills,
    // Alert-RFMs hold it at Q-1. One sample-free window lets ABO settle.
    let head: Vec<u32> = (0..r).collect();
    let tail: Vec<u32> = (w - r..w).collect();
    let warm_windows = (q - 1).max((2 * r).div_ceil(r - 1) as usize);
    ch.bank_mut(0).override_current_window(&head)?;
    for _ in 1..warm_windows {
        ch.bank_mut(0).queue_window_slots(head.clone())?;
    }
    ch.bank_mut(0).queue_window_slots(Vec::new())?;
    ch.bank_mut(0).queue_window_slots(tail.clone())?;

    let mut fresh = 0u64;
    let mut activations = Vec::new();
    for _ in 0..(warm_windows as u64 + 1) * u64::from(w) {
        fresh += 1;
        let row = RowId::wrapping(fresh);
        activations.push(row);
        ch.step(0, row)?;
    }

    let bank = &ch.banks()[0];
    if bank.pmq().len() != q - 1 || bank.alert_requested() || bank.ssq_awaiting() > 0 {
        return Err(Error::domain(format!(
            "warm-up left {} PMQ entries (wanted {})",
            bank.pmq().len(),
            q - 1
        )));
    }
    // Youngest SHQ residents first; they survive the burst's own insertions.
    let mut residents: Vec<RowId> = Vec::new();
    for row in bank.shq_entries().collect::<Vec<_>>().into_iter().rev().flatten() {
        if !residents.contains(&row) && !bank.in_pmq(row) {
            residents.push(row);
        }
    }
    if residents.len() < 2 * r as usize {
        return Err(Error::domain("not enough distinct SHQ residents for the burst"));
    }
    let (late, early) = residents.split_at(r as usize);
    let base_hits = bank.counters().intersections;
    ch.bank_mut(0).reset_peak_ssq();

    // Window n samples its last R slots, window n+1 its first R.
    ch.bank_mut(0).queue_window_slots(head)?;
    for _ in 0..8 {
        ch.bank_mut(0).queue_window_slots(Vec::new())?;
    }
    for k in 0..4u32 {
        for s in 0..w {
            let row = match k {
                0 if s >= w - r => early[(s - (w - r)) as usize],
                1 if s < r => late[s as usize],
                _ => {
                    fresh += 1;
                    RowId::wrapping(fresh)
                }
            };
            activations.push(row);
            ch.step(0, row)?;
        }
    }

    let counters = ch.banks()[0].counters();
    Ok(BurstReport {
        samples: r,
        peak_ssq: counters.peak_ssq,
        bound: ssq_min_size(r),
        intersecting_samples: counters.intersections - base_hits,
        activations,
    })
}
