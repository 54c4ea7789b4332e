//! Epoch-based empirical security estimation and parameter sweeps.
//!
//! An epoch replays an [`AttackPattern`] for one refresh window's worth of
//! activations against a fresh channel. Each row carries an aggressor-side
//! counter of activations since its last mitigation; the counter resets when
//! the row is mitigated and at the end of the epoch.

mod sweep;

pub use sweep::{sweep, write_sweep_csv, Axis, AxisValue, McSettings, SweepGrid, SweepRow, SWEEP_SCHEMA};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::attack::{Access, AttackPattern};
use crate::channel::ChannelState;
use crate::config::{PrismConfig, TimingConstants};
use crate::engine::BankEngine;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::types::ROWS_PER_BANK;

/// Running mean and variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    /// Sample variance; zero with fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EpochStats {
    pub epochs: u64,
    pub activations: u64,
    pub windows: u64,
    pub window_len: u32,
    pub default_selections: u64,
    pub intersections: u64,
    /// Epochs by the largest unmitigated run any row reached.
    pub epoch_max_hist: BTreeMap<u64, u64>,
    /// Activated rows by their largest unmitigated run within an epoch.
    pub row_max_hist: BTreeMap<u64, u64>,
    pub alerts: Moments,
    pub rfms: Moments,
    pub intersections_per_epoch: Moments,
}

impl EpochStats {
    fn merge(&mut self, other: &EpochStats) {
        self.epochs += other.epochs;
        self.activations += other.activations;
        self.windows += other.windows;
        self.window_len = self.window_len.max(other.window_len);
        self.default_selections += other.default_selections;
        self.intersections += other.intersections;
        for (k, v) in &other.epoch_max_hist {
            *self.epoch_max_hist.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &other.row_max_hist {
            *self.row_max_hist.entry(*k).or_insert(0) += v;
        }
        self.alerts.merge(&other.alerts);
        self.rfms.merge(&other.rfms);
        self.intersections_per_epoch.merge(&other.intersections_per_epoch);
    }

    /// Epochs in which some row reached `t` unmitigated activations.
    pub fn escape_count(&self, t: u64) -> u64 {
        self.epoch_max_hist.range(t..).map(|(_, v)| v).sum()
    }

    /// Selections per activation: default picks plus intersections, over
    /// all activation slots. For circular-X with X >= W every row appears at
    /// most once per window, so this is the per-window mitigation probability
    /// of an aggressor.
    pub fn mitigation_frequency(&self) -> f64 {
        let slots = self.windows * u64::from(self.window_len);
        if slots == 0 {
            0.0
        } else {
            (self.default_selections + self.intersections) as f64 / slots as f64
        }
    }

    pub fn max_unmitigated(&self) -> u64 {
        self.epoch_max_hist.keys().next_back().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeEstimate {
    pub t: u64,
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
    /// No escapes observed: only the upper bound carries information.
    pub below_resolution: bool,
}

/// Wilson score interval for a binomial proportion at `z` standard errors.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Fraction of epochs with an escape at `t`, with a 95% Wilson interval.
pub fn empirical_escape(stats: &EpochStats, t: u64) -> EscapeEstimate {
    let k = stats.escape_count(t);
    let (lo, hi) = wilson_interval(k, stats.epochs, 1.959_963_984_540_054);
    EscapeEstimate {
        t,
        p: if stats.epochs == 0 {
            0.0
        } else {
            k as f64 / stats.epochs as f64
        },
        lo,
        hi,
        below_resolution: k == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochOptions {
    /// Keep TRR opportunities inside epochs.
    pub trr: bool,
    /// Activations per epoch; `None` uses the refresh-window budget.
    pub horizon: Option<u64>,
}

impl Default for EpochOptions {
    fn default() -> Self {
        EpochOptions {
            trr: true,
            horizon: None,
        }
    }
}

fn run_one(
    config: &PrismConfig,
    timing: &TimingConstants,
    attack: &AttackPattern,
    horizon: u64,
    n_banks: usize,
    seed: u64,
) -> Result<EpochStats> {
    let mut ch = ChannelState::prism(config, timing, n_banks, seed)?;
    let rows = ROWS_PER_BANK as usize;
    let mut count = vec![0u32; n_banks * rows];
    let mut peak = vec![0u32; n_banks * rows];
    let mut touched: Vec<usize> = Vec::new();
    let mut epoch_max = 0u32;

    for index in 0..horizon {
        match attack.access(index) {
            Some(Access::Act { bank, row }) => {
                ch.step(bank, row)?;
                let slot = bank * rows + row.index();
                count[slot] += 1;
                if peak[slot] == 0 {
                    touched.push(slot);
                }
                if count[slot] > peak[slot] {
                    peak[slot] = count[slot];
                    epoch_max = epoch_max.max(peak[slot]);
                }
                for m in ch.last_mitigations() {
                    count[m.bank * rows + m.row.index()] = 0;
                }
            }
            Some(Access::Idle { bank }) => ch.idle(bank)?,
            None => break,
        }
    }

    let mut stats = EpochStats {
        epochs: 1,
        window_len: config.window,
        ..EpochStats::default()
    };
    for b in ch.banks() {
        let c = b.counters();
        stats.activations += c.activations;
        stats.windows += c.windows;
        stats.default_selections += c.default_selections;
        stats.intersections += c.intersections;
    }
    stats.epoch_max_hist.insert(u64::from(epoch_max), 1);
    for slot in touched {
        *stats.row_max_hist.entry(u64::from(peak[slot])).or_insert(0) += 1;
    }
    stats.alerts.push(ch.counters().alerts as f64);
    stats.rfms.push(ch.counters().rfm_total() as f64);
    stats.intersections_per_epoch.push(stats.intersections as f64);
    Ok(stats)
}

/// Runs `n_epochs` independent epochs of `attack` against `config`.
///
/// Epoch `i` uses the sub-seed `derive_seed(seed, i)`; results are merged
/// in epoch order, so the output does not depend on thread count.
pub fn run_epochs(
    config: &PrismConfig,
    timing: &TimingConstants,
    attack: &AttackPattern,
    n_epochs: u64,
    seed: u64,
    options: &EpochOptions,
) -> Result<EpochStats> {
    config.validate()?;
    let mut cfg = config.clone();
    if !options.trr {
        cfg.trr_interval_acts = 0;
    }
    let horizon = options
        .horizon
        .unwrap_or_else(|| timing.activation_budget())
        .min(attack.horizon);
    if horizon == 0 && n_epochs > 0 {
        return Err(Error::config("epoch horizon must be positive"));
    }
    let n_banks = attack.max_bank() + 1;
    let one = |i: u64| run_one(&cfg, timing, attack, horizon, n_banks, derive_seed(seed, i));

    #[cfg(feature = "parallel")]
    let parts: Vec<Result<EpochStats>> = {
        use rayon::prelude::*;
        (0..n_epochs).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<EpochStats>> = (0..n_epochs).map(one).collect();

    let mut total = EpochStats {
        window_len: cfg.window,
        ..EpochStats::default()
    };
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}
