//! Defense configuration, timing constants and the built-in presets.
//!
//! Configuration files are TOML documents with one `key = value` per field.
//! Every key is optional; missing keys fall back to the `preset` named in the
//! file (if any) and then to the built-in defaults:
//!
//! ```toml
//! preset = 500            # start from a built-in preset (1000, 500 or 250)
//! W = 72                  # mitigation window, activation slots
//! R = 7                   # sampled slots per window
//! L = 41                  # lookback windows kept in the SHQ
//! pmq_capacity = 16
//! t_pmq = 4
//! ssq_capacity = 13       # default: smallest size that absorbs a boundary burst
//! abo_act_slack = 3
//! abo_delay = 1
//! n_mit = 1
//! trr_interval_acts = 162 # 0 disables TRR
//! blast_radius = 2
//! proactive_rfm = true
//!
//! [timing]
//! t_rc_ns = 48.0
//! t_rfmab_ns = 350.0
//! t_refi_ns = 3900.0
//! t_refw_ns = 32000000.0
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytic::ssq_min_size;
use crate::error::{Error, Result};

/// DRAM timing, in nanoseconds. Only ratios of these enter the models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConstants {
    pub t_rc_ns: f64,
    pub t_rfmab_ns: f64,
    pub t_refi_ns: f64,
    pub t_refw_ns: f64,
}

impl Default for TimingConstants {
    fn default() -> Self {
        TimingConstants {
            t_rc_ns: 48.0,
            t_rfmab_ns: 350.0,
            t_refi_ns: 3900.0,
            t_refw_ns: 32_000_000.0,
        }
    }
}

impl TimingConstants {
    /// Cost of one all-bank RFM in activation slots.
    pub fn c_rfm(&self) -> f64 {
        self.t_rfmab_ns / self.t_rc_ns
    }

    /// Activation slots available to one bank within a refresh window.
    pub fn activation_budget(&self) -> u64 {
        (self.t_refw_ns / self.t_rc_ns).floor() as u64
    }

    /// One TRR opportunity every two refresh intervals, in activation slots.
    pub fn default_trr_interval(&self) -> u32 {
        (2.0 * self.t_refi_ns / self.t_rc_ns).floor() as u32
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_rc_ns", self.t_rc_ns),
            ("t_rfmab_ns", self.t_rfmab_ns),
            ("t_refi_ns", self.t_refi_ns),
            ("t_refw_ns", self.t_refw_ns),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Every tunable of one PrISM instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrismConfig {
    /// Mitigation window length W in activation slots.
    pub window: u32,
    /// Sampled slots per window, R.
    pub samples: u32,
    /// Lookback windows retained by the SHQ, L. Zero disables intersections.
    pub lookback: u32,
    /// PMQ entry count, Q.
    pub pmq_capacity: u32,
    /// Tardiness threshold T_PMQ.
    pub t_pmq: u32,
    pub ssq_capacity: u32,
    /// Activations the controller may serve between Alert and its RFM.
    pub abo_act_slack: u32,
    /// Activations required after an Alert-RFM before a new Alert is honored.
    pub abo_delay: u32,
    /// RFMs issued per Alert.
    pub n_mit: u32,
    /// Activation slots between TRR opportunities; 0 disables TRR.
    pub trr_interval_acts: u32,
    pub blast_radius: u32,
    /// Issue one same-bank RFM per completed window when TRR is disabled.
    pub proactive_rfm: bool,
}

/// The three thresholds with built-in configurations.
pub const PRESET_THRESHOLDS: [u32; 3] = [1000, 500, 250];

/// SSQ size of the built-in presets: large enough for the largest evaluated R (9).
pub const PRESET_SSQ_CAPACITY: u32 = 13;

impl PrismConfig {
    /// Configuration with the given (W, R, L) and default values elsewhere.
    pub fn new(window: u32, samples: u32, lookback: u32) -> Self {
        PrismConfig {
            window,
            samples,
            lookback,
            pmq_capacity: 16,
            t_pmq: 4,
            ssq_capacity: ssq_min_size(samples.max(1)),
            abo_act_slack: 3,
            abo_delay: 1,
            n_mit: 1,
            trr_interval_acts: TimingConstants::default().default_trr_interval(),
            blast_radius: 2,
            proactive_rfm: true,
        }
    }

    /// Built-in configuration for a target double-sided threshold.
    ///
    /// The (W, R) pairs are the published ones. L for the 1000 and 250 presets
    /// is reconstructed from the published SHQ entry counts (36 and 632).
    pub fn preset(target_threshold: u32) -> Result<Self> {
        let (w, r, l) = match target_threshold {
            1000 => (72, 4, 12),
            500 => (72, 7, 41),
            250 => (48, 9, 79),
            other => {
                return Err(Error::config(format!(
                    "unknown preset {other}; expected one of 1000, 500, 250"
                )))
            }
        };
        let mut cfg = PrismConfig::new(w, r, l);
        cfg.ssq_capacity = PRESET_SSQ_CAPACITY;
        Ok(cfg)
    }

    /// Parses a preset name such as `500` or `trh500`.
    pub fn preset_by_name(name: &str) -> Result<Self> {
        let digits = name.trim().trim_start_matches("trh").trim_start_matches("TRH");
        let t: u32 = digits
            .parse()
            .map_err(|_| Error::config(format!("unknown preset '{name}'")))?;
        PrismConfig::preset(t)
    }

    /// Number of SHQ slots once warmed up.
    pub fn shq_entries(&self) -> u32 {
        self.lookback * self.samples.saturating_sub(1)
    }

    pub fn intersections_enabled(&self) -> bool {
        self.lookback > 0
    }

    pub fn validate(&self) -> Result<()> {
        let PrismConfig {
            window: w, samples: r, ..
        } = *self;
        if w == 0 || r == 0 {
            return Err(Error::config("W and R must be positive"));
        }
        if w < 4 * r {
            return Err(Error::config(format!(
                "W = {w} < 4R = {}: Alert drain cannot keep up with intersections",
                4 * r
            )));
        }
        if self.intersections_enabled() && r < 2 {
            return Err(Error::config("R must be at least 2 when the SHQ is enabled (L > 0)"));
        }
        let min_ssq = ssq_min_size(r);
        if self.ssq_capacity < min_ssq {
            return Err(Error::config(format!(
                "ssq_capacity = {} is below the boundary-burst bound {min_ssq} for R = {r}",
                self.ssq_capacity
            )));
        }
        if self.pmq_capacity == 0 {
            return Err(Error::config("pmq_capacity must be positive"));
        }
        if self.t_pmq == 0 {
            return Err(Error::config("t_pmq must be positive"));
        }
        if self.n_mit == 0 {
            return Err(Error::config("n_mit must be positive"));
        }
        if self.blast_radius == 0 {
            return Err(Error::config("blast_radius must be positive"));
        }
        Ok(())
    }

    /// Loads a configuration file (see the module docs for the schema).
    pub fn from_file(path: &Path) -> Result<(Self, TimingConstants)> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<(Self, TimingConstants)> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        let (cfg, timing) = file.resolve()?;
        cfg.validate()?;
        Ok((cfg, timing))
    }

    /// Like [`PrismConfig::from_toml_str`] but leaves validation to the
    /// caller, for bases that sweep axes will override.
    pub(crate) fn from_toml_str_unchecked(text: &str) -> Result<(Self, TimingConstants)> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        file.resolve()
    }

    /// Renders the configuration as `key = value` lines, the same schema the
    /// file loader reads.
    pub fn to_toml(&self, timing: &TimingConstants) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "W = {}\nR = {}\nL = {}\n",
            self.window, self.samples, self.lookback
        ));
        out.push_str(&format!(
            "pmq_capacity = {}\nt_pmq = {}\nssq_capacity = {}\n",
            self.pmq_capacity, self.t_pmq, self.ssq_capacity
        ));
        out.push_str(&format!(
            "abo_act_slack = {}\nabo_delay = {}\nn_mit = {}\n",
            self.abo_act_slack, self.abo_delay, self.n_mit
        ));
        out.push_str(&format!(
            "trr_interval_acts = {}\nblast_radius = {}\nproactive_rfm = {}\n",
            self.trr_interval_acts, self.blast_radius, self.proactive_rfm
        ));
        out.push_str(&format!(
            "\n[timing]\nt_rc_ns = {:?}\nt_rfmab_ns = {:?}\nt_refi_ns = {:?}\nt_refw_ns = {:?}\n",
            timing.t_rc_ns, timing.t_rfmab_ns, timing.t_refi_ns, timing.t_refw_ns
        ));
        out
    }
}

impl fmt::Display for PrismConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "W={} R={} L={} Q={} T_PMQ={} SSQ={} ABO_ACT={} ABO_Delay={} N_mit={} TRR={} BR={} proactive_rfm={}",
            self.window,
            self.samples,
            self.lookback,
            self.pmq_capacity,
            self.t_pmq,
            self.ssq_capacity,
            self.abo_act_slack,
            self.abo_delay,
            self.n_mit,
            self.trr_interval_acts,
            self.blast_radius,
            self.proactive_rfm
        )
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<toml::Value>,
    #[serde(alias = "W", alias = "w")]
    window: Option<u32>,
    #[serde(alias = "R", alias = "r")]
    samples: Option<u32>,
    #[serde(alias = "L", alias = "l")]
    lookback: Option<u32>,
    #[serde(alias = "Q")]
    pmq_capacity: Option<u32>,
    #[serde(alias = "T_PMQ")]
    t_pmq: Option<u32>,
    ssq_capacity: Option<u32>,
    abo_act_slack: Option<u32>,
    abo_delay: Option<u32>,
    n_mit: Option<u32>,
    trr_interval_acts: Option<u32>,
    blast_radius: Option<u32>,
    proactive_rfm: Option<bool>,
    timing: Option<TimingConstants>,
}

impl ConfigFile {
    fn resolve(self) -> Result<(PrismConfig, TimingConstants)> {
        let timing = self.timing.unwrap_or_default();
        timing.validate()?;
        let mut cfg = match &self.preset {
            Some(toml::Value::Integer(t)) => PrismConfig::preset(*t as u32)?,
            Some(toml::Value::String(name)) => PrismConfig::preset_by_name(name)?,
            Some(other) => return Err(Error::config(format!("preset must be a number, got {other}"))),
            None => PrismConfig::new(72, 7, 41),
        };
        let ssq_explicit = self.ssq_capacity.is_some() || self.preset.is_some();
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.lookback {
            cfg.lookback = v;
        }
        if let Some(v) = self.pmq_capacity {
            cfg.pmq_capacity = v;
        }
        if let Some(v) = self.t_pmq {
            cfg.t_pmq = v;
        }
        cfg.ssq_capacity = match self.ssq_capacity {
            Some(v) => v,
            None if ssq_explicit => cfg.ssq_capacity.max(ssq_min_size(cfg.samples.max(1))),
            None => ssq_min_size(cfg.samples.max(1)),
        };
        if let Some(v) = self.abo_act_slack {
            cfg.abo_act_slack = v;
        }
        if let Some(v) = self.abo_delay {
            cfg.abo_delay = v;
        }
        if let Some(v) = self.n_mit {
            cfg.n_mit = v;
        }
        cfg.trr_interval_acts = self.trr_interval_acts.unwrap_or_else(|| timing.default_trr_interval());
        if let Some(v) = self.blast_radius {
            cfg.blast_radius = v;
        }
        if let Some(v) = self.proactive_rfm {
            cfg.proactive_rfm = v;
        }
        Ok((cfg, timing))
    }
}
