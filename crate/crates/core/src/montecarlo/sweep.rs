//! Parameter sweeps over configuration axes.
//!
//! A grid file uses the configuration schema; any key given as an array
//! becomes an axis and the sweep visits the cartesian product of all axes.
//! Besides the configuration keys, `X` (circular-X row count for the
//! per-X columns and Monte Carlo) and `mttf_years` may be swept. Optional
//! tables:
//!
//! ```toml
//! preset = 500
//! R = [3, 5, 7, 9]
//! L = [5, 15, 25]
//!
//! [montecarlo]
//! epochs = 4
//! horizon = 100000   # activations per epoch, default one refresh window
//! trr = false
//!
//! [model]
//! multiplicity = "per_aggressor"
//! double_sided = true
//! parallel_banks = 24
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run_epochs, EpochOptions};
use crate::analytic::{min_supported_trh, p_mitigate, p_shq_fixed_point, ModelOptions, MttfTarget, Multiplicity};
use crate::attack::AttackPattern;
use crate::config::{PrismConfig, TimingConstants};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub const SWEEP_SCHEMA: &str = "prismlab-sweep/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axis {
    W,
    R,
    L,
    X,
    PmqCapacity,
    TPmq,
    MttfYears,
}

impl Axis {
    fn from_key(key: &str) -> Option<Axis> {
        Some(match key {
            "W" | "w" | "window" => Axis::W,
            "R" | "r" | "samples" => Axis::R,
            "L" | "l" | "lookback" => Axis::L,
            "X" | "x" => Axis::X,
            "Q" | "pmq_capacity" => Axis::PmqCapacity,
            "T_PMQ" | "t_pmq" => Axis::TPmq,
            "mttf_years" => Axis::MttfYears,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::W => "W",
            Axis::R => "R",
            Axis::L => "L",
            Axis::X => "X",
            Axis::PmqCapacity => "pmq_capacity",
            Axis::TPmq => "t_pmq",
            Axis::MttfYears => "mttf_years",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisValue {
    Int(u32),
    Real(f64),
}

impl AxisValue {
    fn as_u32(self) -> u32 {
        match self {
            AxisValue::Int(v) => v,
            AxisValue::Real(v) => v as u32,
        }
    }

    fn as_f64(self) -> f64 {
        match self {
            AxisValue::Int(v) => f64::from(v),
            AxisValue::Real(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub epochs: u64,
    pub horizon: Option<u64>,
    #[serde(default = "default_true")]
    pub trr: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    multiplicity: Option<String>,
    double_sided: Option<bool>,
    parallel_banks: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub base: PrismConfig,
    pub timing: TimingConstants,
    /// Axes in canonical order with their values.
    pub axes: Vec<(Axis, Vec<AxisValue>)>,
    /// Fixed X for the per-X columns and Monte Carlo when X is not an axis.
    pub x: Option<u32>,
    pub mttf: MttfTarget,
    pub options: ModelOptions,
    pub montecarlo: Option<McSettings>,
}

fn axis_value(axis: Axis, v: &toml::Value) -> Result<AxisValue> {
    match (axis, v) {
        (Axis::MttfYears, toml::Value::Float(f)) => Ok(AxisValue::Real(*f)),
        (Axis::MttfYears, toml::Value::Integer(i)) => Ok(AxisValue::Real(*i as f64)),
        (_, toml::Value::Integer(i)) if *i >= 0 && *i <= i64::from(u32::MAX) => Ok(AxisValue::Int(*i as u32)),
        _ => Err(Error::config(format!(
            "axis {} expects non-negative integers, got {v}",
            axis.name()
        ))),
    }
}

impl SweepGrid {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;

        let montecarlo = match table.remove("montecarlo") {
            Some(v) => {
                Some(McSettings::deserialize(v).map_err(|e| Error::config(format!("[montecarlo]: {}", e.message())))?)
            }
            None => None,
        };
        let model: ModelSection = match table.remove("model") {
            Some(v) => ModelSection::deserialize(v).map_err(|e| Error::config(format!("[model]: {}", e.message())))?,
            None => ModelSection::default(),
        };

        let mut axes: Vec<(Axis, Vec<AxisValue>)> = Vec::new();
        let mut x = None;
        let mut mttf = MttfTarget::default();
        let keys: Vec<String> = table.keys().cloned().collect();
        for key in keys {
            let Some(axis) = Axis::from_key(&key) else { continue };
            let is_array = matches!(table.get(&key), Some(toml::Value::Array(_)));
            let scalar_only = matches!(axis, Axis::X | Axis::MttfYears);
            if !is_array && !scalar_only {
                continue;
            }
            let value = table.remove(&key).expect("key exists");
            let values: Vec<AxisValue> = match &value {
                toml::Value::Array(items) => items.iter().map(|v| axis_value(axis, v)).collect::<Result<_>>()?,
                scalar => vec![axis_value(axis, scalar)?],
            };
            if values.is_empty() {
                return Err(Error::config(format!("axis {} has no values", axis.name())));
            }
            if !is_array {
                match axis {
                    Axis::X => x = Some(values[0].as_u32()),
                    _ => mttf.per_bank_years = values[0].as_f64(),
                }
                continue;
            }
            if axes.iter().any(|(a, _)| *a == axis) {
                return Err(Error::config(format!("axis {} given twice", axis.name())));
            }
            axes.push((axis, values));
        }
        axes.sort_by_key(|(a, _)| *a);

        let ssq_explicit = table.contains_key("ssq_capacity");
        let rest = toml::to_string(&table).map_err(|e| Error::config(e.to_string()))?;
        let (mut base, timing) = PrismConfig::from_toml_str_unchecked(&rest)?;
        if !ssq_explicit {
            // Let each point size its SSQ for its own R.
            base.ssq_capacity = if table.contains_key("preset") {
                base.ssq_capacity
            } else {
                0
            };
        }

        let mut options = ModelOptions::default();
        if let Some(m) = model.multiplicity {
            options.multiplicity = Multiplicity::parse(&m)?;
        }
        if let Some(d) = model.double_sided {
            options.double_sided = d;
        }
        if let Some(b) = model.parallel_banks {
            mttf.parallel_banks = b;
        }
        mttf.validate()?;
        Ok(SweepGrid {
            base,
            timing,
            axes,
            x,
            mttf,
            options,
            montecarlo,
        })
    }

    pub fn point_count(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Axis values of point `index` (last axis varies fastest).
    pub fn point(&self, mut index: usize) -> Vec<(Axis, AxisValue)> {
        let mut out = vec![(Axis::W, AxisValue::Int(0)); self.axes.len()];
        for (k, (axis, values)) in self.axes.iter().enumerate().rev() {
            out[k] = (*axis, values[index % values.len()]);
            index /= values.len();
        }
        out
    }
}

/// One CSV row of a sweep. Empty cells mean "not computed".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub status: String,
    #[serde(rename = "W")]
    pub w: u32,
    #[serde(rename = "R")]
    pub r: u32,
    #[serde(rename = "L")]
    pub l: u32,
    pub pmq_capacity: u32,
    pub t_pmq: u32,
    pub mttf_years: f64,
    pub shq_entries: u32,
    pub worst_x: Option<u32>,
    pub p_shq_worst: Option<f64>,
    pub p_m_worst: Option<f64>,
    pub t_hat: Option<u64>,
    pub t_supported: Option<u64>,
    #[serde(rename = "X")]
    pub x: Option<u32>,
    pub p_shq_x: Option<f64>,
    pub p_m_x: Option<f64>,
    pub mc_epochs: Option<u64>,
    pub mc_windows: Option<u64>,
    pub mc_p_m: Option<f64>,
    pub mc_alerts_mean: Option<f64>,
    pub mc_rfms_mean: Option<f64>,
    pub mc_max_unmitigated: Option<u64>,
}

fn evaluate(grid: &SweepGrid, index: usize, seed: u64) -> Result<SweepRow> {
    let mut cfg = grid.base.clone();
    let mut mttf = grid.mttf;
    let mut x = grid.x;
    for (axis, v) in grid.point(index) {
        match axis {
            Axis::W => cfg.window = v.as_u32(),
            Axis::R => cfg.samples = v.as_u32(),
            Axis::L => cfg.lookback = v.as_u32(),
            Axis::X => x = Some(v.as_u32()),
            Axis::PmqCapacity => cfg.pmq_capacity = v.as_u32(),
            Axis::TPmq => cfg.t_pmq = v.as_u32(),
            Axis::MttfYears => mttf.per_bank_years = v.as_f64(),
        }
    }
    cfg.ssq_capacity = cfg.ssq_capacity.max(crate::analytic::ssq_min_size(cfg.samples));
    let mut row = SweepRow {
        point: index,
        status: "ok".into(),
        w: cfg.window,
        r: cfg.samples,
        l: cfg.lookback,
        pmq_capacity: cfg.pmq_capacity,
        t_pmq: cfg.t_pmq,
        mttf_years: mttf.per_bank_years,
        shq_entries: cfg.shq_entries(),
        worst_x: None,
        p_shq_worst: None,
        p_m_worst: None,
        t_hat: None,
        t_supported: None,
        x,
        p_shq_x: None,
        p_m_x: None,
        mc_epochs: None,
        mc_windows: None,
        mc_p_m: None,
        mc_alerts_mean: None,
        mc_rfms_mean: None,
        mc_max_unmitigated: None,
    };
    if let Err(e) = cfg.validate().and_then(|_| mttf.validate()) {
        row.status = format!("invalid: {e}");
        return Ok(row);
    }

    let bound = min_supported_trh(&cfg, &grid.timing, &mttf, &grid.options)?;
    let worst = bound.worst();
    row.worst_x = Some(bound.worst_x);
    row.p_shq_worst = Some(worst.p_shq);
    row.p_m_worst = Some(worst.p_m);
    row.t_hat = Some(bound.t_hat);
    row.t_supported = Some(bound.t_supported);

    if let Some(xv) = x {
        if xv >= cfg.window {
            row.p_shq_x = Some(p_shq_fixed_point(cfg.window, cfg.samples, cfg.lookback, xv)?);
            row.p_m_x = Some(p_mitigate(cfg.window, cfg.samples, cfg.lookback, xv)?);
        }
    }

    if let Some(mc) = &grid.montecarlo {
        let attack_x = x.unwrap_or(bound.worst_x);
        let horizon = mc.horizon.unwrap_or_else(|| grid.timing.activation_budget());
        let attack = AttackPattern::circular_x(attack_x, cfg.window, horizon, vec![0])?;
        let options = EpochOptions {
            trr: mc.trr,
            horizon: Some(horizon),
        };
        let stats = run_epochs(
            &cfg,
            &grid.timing,
            &attack,
            mc.epochs,
            derive_seed(seed, index as u64),
            &options,
        )?;
        row.x = Some(attack_x);
        row.mc_epochs = Some(stats.epochs);
        row.mc_windows = Some(stats.windows);
        row.mc_p_m = Some(stats.mitigation_frequency());
        row.mc_alerts_mean = Some(stats.alerts.mean);
        row.mc_rfms_mean = Some(stats.rfms.mean);
        row.mc_max_unmitigated = Some(stats.max_unmitigated());
    }
    Ok(row)
}

/// Evaluates every grid point. Rows come back in point order whatever the
/// degree of parallelism; `progress` is called as points finish.
pub fn sweep(grid: &SweepGrid, seed: u64, progress: Option<&(dyn Fn(usize, usize) + Sync)>) -> Result<Vec<SweepRow>> {
    let n = grid.point_count();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let one = |i: usize| {
        let r = evaluate(grid, i, seed);
        let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        if let Some(p) = progress {
            p(k, n);
        }
        r
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Result<SweepRow>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Result<SweepRow>> = (0..n).map(one).collect();
    rows.into_iter().collect()
}

/// Writes sweep rows as CSV preceded by `#` lines with the schema version,
/// seed, model options and resolved base configuration.
pub fn write_sweep_csv<W: Write>(mut out: W, grid: &SweepGrid, seed: u64, rows: &[SweepRow]) -> Result<()> {
    let io = |source| Error::Io {
        path: "<sweep output>".into(),
        source,
    };
    writeln!(out, "# schema: {SWEEP_SCHEMA}").map_err(io)?;
    writeln!(out, "# seed: {seed}").map_err(io)?;
    writeln!(
        out,
        "# model: {} parallel_banks={}",
        grid.options, grid.mttf.parallel_banks
    )
    .map_err(io)?;
    let axes: Vec<String> = grid
        .axes
        .iter()
        .map(|(a, v)| format!("{}[{}]", a.name(), v.len()))
        .collect();
    writeln!(out, "# axes: {}", axes.join(" ")).map_err(io)?;
    for line in grid.base.to_toml(&grid.timing).lines().filter(|l| !l.is_empty()) {
        writeln!(out, "# base: {line}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}
