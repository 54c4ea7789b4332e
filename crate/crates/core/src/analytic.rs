//! Closed-form security and cost model.
//!
//! The central quantities for a circular-X attacker (X rows hammered
//! round-robin, one per slot) are:
//!
//! * `K = L·W/X`, the expected number of prior appearances of a row in the
//!   lookback history;
//! * `P_SHQ`, the steady-state probability that a sampled row is resident in
//!   the SHQ, the fixed point of `P = K(R-1+P^R)/(W+K·R)`;
//! * `p_m = (1-P^R)/W + (R/W)·P`, the per-window probability that a given
//!   aggressor is selected for mitigation.
//!
//! [`min_supported_trh`] turns `p_m` into a supported threshold by searching
//! the attacker's best X against an MTTF budget.

use serde::Serialize;

use crate::config::{PrismConfig, TimingConstants};
use crate::error::{Error, Result};

pub const FIXED_POINT_TOLERANCE: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITERATIONS: usize = 10_000;

/// Documented chained-Alert budgets, indexed by PMQ capacity.
pub const ABO_ACT_TABLE: [(u32, u32); 4] = [(4, 7), (8, 10), (16, 12), (32, 14)];

fn binomial_u128(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step.
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Probability that a row occupying `c` of the `w` slots of a window is hit
/// by at least one of `r` uniformly sampled slots: `1 - C(w-c, r)/C(w, r)`.
pub fn p_sample(c: u32, w: u32, r: u32) -> Result<f64> {
    if w == 0 || r > w || c > w {
        return Err(Error::domain(format!(
            "p_sample needs 0 <= c <= W and R <= W (c={c}, W={w}, R={r})"
        )));
    }
    if c == 0 || r == 0 {
        return Ok(0.0);
    }
    if w - c < r {
        return Ok(1.0);
    }
    if w <= 64 {
        let miss =
            binomial_u128(u64::from(w - c), u64::from(r)) as f64 / binomial_u128(u64::from(w), u64::from(r)) as f64;
        return Ok(1.0 - miss);
    }
    // C(w-c, r)/C(w, r) = prod_{i<r} (w-c-i)/(w-i), summed in log space.
    let log_miss: f64 = (0..r).map(|i| (f64::from(w - c - i) / f64::from(w - i)).ln()).sum();
    Ok(-log_miss.exp_m1())
}

/// Probability that a row sampled in the current window was also sampled in
/// at least one of the previous `l` windows: `1 - (1 - R/W)^L`.
pub fn intersection_reach(w: u32, r: u32, l: u32) -> Result<f64> {
    if w == 0 || r > w {
        return Err(Error::domain(format!("intersection_reach needs R <= W (W={w}, R={r})")));
    }
    let miss = 1.0 - f64::from(r) / f64::from(w);
    Ok(1.0 - miss.powi(l as i32))
}

/// Expected prior appearances of a circular-X row in the lookback history.
pub fn lookback_appearances(w: u32, l: u32, x: u32) -> f64 {
    f64::from(l) * f64::from(w) / f64::from(x)
}

/// Steady-state SHQ residency probability of a circular-X row.
pub fn p_shq_fixed_point(w: u32, r: u32, l: u32, x: u32) -> Result<f64> {
    if w == 0 || r == 0 || r > w {
        return Err(Error::domain(format!("need 1 <= R <= W (W={w}, R={r})")));
    }
    if x < w {
        return Err(Error::domain(format!("the fixed point assumes X >= W (X={x}, W={w})")));
    }
    if l == 0 {
        return Ok(0.0);
    }
    let k = lookback_appearances(w, l, x);
    let (wf, rf) = (f64::from(w), f64::from(r));
    let f = |p: f64| k * (rf - 1.0 + p.powi(r as i32)) / (wf + k * rf);
    let mut p = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..FIXED_POINT_MAX_ITERATIONS {
        let next = f(p);
        residual = (next - p).abs();
        p = next;
        if residual < FIXED_POINT_TOLERANCE {
            return Ok(p.clamp(0.0, 1.0));
        }
    }
    Err(Error::Convergence {
        what: "SHQ residency fixed point",
        residual,
        iterations: FIXED_POINT_MAX_ITERATIONS,
    })
}

/// SHQ residency from the two-state insertion/eviction chain:
/// `L·P_in / (1 + L·P_in)` with `P_in = (R-1)/W`.
pub fn p_shq_markov(w: u32, r: u32, l: u32) -> Result<f64> {
    if w == 0 || r == 0 {
        return Err(Error::domain("p_shq_markov needs W >= 1 and R >= 1"));
    }
    let lp = f64::from(l) * f64::from(r - 1) / f64::from(w);
    Ok(lp / (1.0 + lp))
}

/// Per-window mitigation probability for a given SHQ residency `p_shq`.
pub fn p_mitigate_from(w: u32, r: u32, p_shq: f64) -> f64 {
    let (wf, rf) = (f64::from(w), f64::from(r));
    (1.0 - p_shq.powi(r as i32)) / wf + rf / wf * p_shq
}

/// Per-window mitigation probability of a circular-X aggressor.
pub fn p_mitigate(w: u32, r: u32, l: u32, x: u32) -> Result<f64> {
    Ok(p_mitigate_from(w, r, p_shq_fixed_point(w, r, l, x)?))
}

/// Smallest SSQ that absorbs the worst boundary burst:
/// `(2R-1) - floor((2R-1)/4)`.
pub fn ssq_min_size(r: u32) -> u32 {
    if r == 0 {
        return 0;
    }
    let burst = 2 * r - 1;
    burst - burst / 4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DosBound {
    pub c_rfm: f64,
    pub loss: f64,
    pub slowdown: f64,
}

/// Worst-case throughput loss when every window forces R RFMs of cost `c_rfm`.
pub fn dos_bound_with_cost(w: u32, r: u32, c_rfm: f64) -> DosBound {
    let stall = c_rfm * f64::from(r);
    let loss = stall / (f64::from(w) + stall);
    DosBound {
        c_rfm,
        loss,
        slowdown: 1.0 / (1.0 - loss),
    }
}

pub fn dos_bound(w: u32, r: u32, timing: &TimingConstants) -> DosBound {
    dos_bound_with_cost(w, r, timing.c_rfm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Storage {
    pub shq_entries: u32,
    pub total_bits: u64,
    pub total_bytes: u64,
}

/// Per-bank SRAM: 18 bits per SHQ and SSQ entry, 21 per PMQ entry.
pub fn storage_bytes(config: &PrismConfig) -> Storage {
    let shq_entries = config.shq_entries();
    let total_bits =
        18 * u64::from(shq_entries) + 18 * u64::from(config.ssq_capacity) + 21 * u64::from(config.pmq_capacity);
    Storage {
        shq_entries,
        total_bits,
        total_bytes: (total_bits as f64 / 8.0).round() as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AboActSource {
    Table,
    /// Q = 1: only the slack of a single Alert is available.
    SingleAlert,
    /// Undocumented Q; the value of the nearest tabulated capacity is used.
    Nearest {
        tabulated_q: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AboAct {
    pub activations: u32,
    pub source: AboActSource,
}

impl AboAct {
    pub fn warning(&self, q: u32) -> Option<String> {
        match self.source {
            AboActSource::Nearest { tabulated_q } => Some(format!(
                "no chained-Alert budget recorded for Q = {q}; using the value for Q = {tabulated_q}"
            )),
            _ => None,
        }
    }
}

/// Extra activations a targeted row can absorb through chained Alerts.
pub fn abo_act_q(q: u32, abo_act_slack: u32) -> AboAct {
    if q <= 1 {
        return AboAct {
            activations: abo_act_slack,
            source: AboActSource::SingleAlert,
        };
    }
    if let Some(&(_, v)) = ABO_ACT_TABLE.iter().find(|&&(tq, _)| tq == q) {
        return AboAct {
            activations: v,
            source: AboActSource::Table,
        };
    }
    // Ties go to the larger capacity, which has the larger budget.
    let &(tq, v) = ABO_ACT_TABLE
        .iter()
        .min_by_key(|&&(tq, _)| (tq.abs_diff(q), std::cmp::Reverse(tq)))
        .expect("table is non-empty");
    AboAct {
        activations: v,
        source: AboActSource::Nearest { tabulated_q: tq },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MttfTarget {
    pub per_bank_years: f64,
    pub parallel_banks: u32,
}

impl Default for MttfTarget {
    fn default() -> Self {
        MttfTarget {
            per_bank_years: 10_000.0,
            parallel_banks: 24,
        }
    }
}

const NS_PER_YEAR: f64 = 365.25 * 86_400.0 * 1e9;

impl MttfTarget {
    /// Allowed failure probability per refresh window.
    pub fn budget_per_refresh_window(&self, timing: &TimingConstants) -> f64 {
        timing.t_refw_ns / (self.per_bank_years * NS_PER_YEAR)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.per_bank_years.is_finite() && self.per_bank_years > 0.0) {
            return Err(Error::config("MTTF years must be positive"));
        }
        if self.parallel_banks == 0 {
            return Err(Error::config("parallel bank count must be positive"));
        }
        Ok(())
    }
}

/// How many independent escape opportunities one refresh window offers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    /// X aggressor candidates per refresh window.
    PerAggressor,
    /// X candidates in each of `parallel_banks` banks.
    PerAggressorPerBank,
}

impl Multiplicity {
    pub fn as_str(self) -> &'static str {
        match self {
            Multiplicity::PerAggressor => "per_aggressor",
            Multiplicity::PerAggressorPerBank => "per_aggressor_per_bank",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per_aggressor" | "x" => Ok(Multiplicity::PerAggressor),
            "per_aggressor_per_bank" | "x_banks" => Ok(Multiplicity::PerAggressorPerBank),
            other => Err(Error::config(format!(
                "unknown multiplicity '{other}'; expected per_aggressor or per_aggressor_per_bank"
            ))),
        }
    }
}

/// Named options of the escape-to-threshold conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelOptions {
    pub multiplicity: Multiplicity,
    /// Halve the single-row escape count: a double-sided victim sees two
    /// aggressors, each of which must stay below half the threshold.
    pub double_sided: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            multiplicity: Multiplicity::PerAggressor,
            double_sided: true,
        }
    }
}

impl std::fmt::Display for ModelOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "multiplicity={} double_sided={}",
            self.multiplicity.as_str(),
            self.double_sided
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XRecord {
    pub x: u32,
    pub k: f64,
    pub p_shq: f64,
    pub p_m: f64,
    /// Activations after which an escape is rarer than the budget;
    /// `None` when no threshold suffices (p_m = 0).
    pub t_escape: Option<u64>,
    /// Activations one of X rows can receive within a refresh window.
    pub t_feasible: u64,
    pub t_required: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecurityBound {
    pub per_x: Vec<XRecord>,
    pub worst_x: u32,
    /// Largest single-row requirement over X.
    pub t_required_max: u64,
    pub t_hat: u64,
    pub t_pmq: u32,
    pub abo_act: u32,
    pub t_supported: u64,
    pub options: ModelOptions,
}

impl SecurityBound {
    pub fn worst(&self) -> &XRecord {
        self.per_x
            .iter()
            .find(|r| r.x == self.worst_x)
            .expect("worst X is on the grid")
    }
}

/// X values examined for a configuration: every integer in [W, (L+1)W]
/// when that range has at most 4096 points, otherwise 512 log-spaced
/// points plus both endpoints.
pub fn x_grid(w: u32, l: u32) -> Vec<u32> {
    let lo = w;
    let hi = (l + 1) * w;
    if hi - lo < 4096 {
        return (lo..=hi).collect();
    }
    let (a, b) = (f64::from(lo).ln(), f64::from(hi).ln());
    let mut xs: Vec<u32> = (0..512)
        .map(|i| (a + (b - a) * f64::from(i) / 511.0).exp().round() as u32)
        .collect();
    xs.push(lo);
    xs.push(hi);
    xs.sort_unstable();
    xs.dedup();
    xs.retain(|&x| (lo..=hi).contains(&x));
    xs
}

/// Smallest T with `multiplicity · (1 - p)^T <= budget`.
fn escape_threshold(p: f64, multiplicity: f64, budget: f64) -> Option<u64> {
    if p <= 0.0 {
        return None;
    }
    if multiplicity <= budget {
        return Some(1);
    }
    if p >= 1.0 {
        return Some(1);
    }
    let t = ((budget / multiplicity).ln() / (-p).ln_1p()).ceil();
    Some(t.max(1.0) as u64)
}

/// Supported double-sided threshold of `config` against the best circular-X
/// attacker and the given MTTF target.
pub fn min_supported_trh(
    config: &PrismConfig,
    timing: &TimingConstants,
    mttf: &MttfTarget,
    options: &ModelOptions,
) -> Result<SecurityBound> {
    config.validate()?;
    timing.validate()?;
    mttf.validate()?;
    let (w, r, l) = (config.window, config.samples, config.lookback);
    let budget = mttf.budget_per_refresh_window(timing);
    let acts = timing.activation_budget();

    let mut per_x = Vec::new();
    for x in x_grid(w, l) {
        let p_shq = p_shq_fixed_point(w, r, l, x)?;
        let p_m = p_mitigate_from(w, r, p_shq);
        let m = match options.multiplicity {
            Multiplicity::PerAggressor => f64::from(x),
            Multiplicity::PerAggressorPerBank => f64::from(x) * f64::from(mttf.parallel_banks),
        };
        let t_escape = escape_threshold(p_m, m, budget);
        let t_feasible = acts / u64::from(x);
        let t_required = match t_escape {
            Some(t) => t.min(t_feasible + 1),
            None => t_feasible + 1,
        };
        per_x.push(XRecord {
            x,
            k: lookback_appearances(w, l, x),
            p_shq,
            p_m,
            t_escape,
            t_feasible,
            t_required,
        });
    }

    // Ties keep the smallest X.
    let worst = per_x
        .iter()
        .fold(None::<&XRecord>, |best, rec| match best {
            Some(b) if b.t_required >= rec.t_required => Some(b),
            _ => Some(rec),
        })
        .expect("X grid is non-empty");
    let t_required_max = worst.t_required;
    let t_hat = if options.double_sided {
        t_required_max.div_ceil(2)
    } else {
        t_required_max
    };
    let abo_act = abo_act_q(config.pmq_capacity, config.abo_act_slack).activations;
    Ok(SecurityBound {
        worst_x: worst.x,
        per_x,
        t_required_max,
        t_hat,
        t_pmq: config.t_pmq,
        abo_act,
        t_supported: t_hat + u64::from(config.t_pmq) + u64::from(abo_act),
        options: *options,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_sample_edges() {
        assert_eq!(p_sample(0, 72, 7).unwrap(), 0.0);
        assert_eq!(p_sample(72, 72, 7).unwrap(), 1.0);
        assert!((p_sample(1, 72, 7).unwrap() - 7.0 / 72.0).abs() < 1e-12);
        assert!((p_sample(1, 48, 9).unwrap() - 9.0 / 48.0).abs() < 1e-12);
        assert!(p_sample(3, 2, 1).is_err());
        assert!(p_sample(1, 4, 5).is_err());
    }

    #[test]
    fn exact_and_log_paths_agree() {
        // At W = 64 the exact path is used; the product form must agree.
        for c in 0..=64u32 {
            let exact = p_sample(c, 64, 9).unwrap();
            let miss: f64 = (0..9u32)
                .map(|i| f64::from((64 - c).saturating_sub(i)) / f64::from(64 - i))
                .product();
            let product = 1.0 - miss;
            assert!((exact - product).abs() < 1e-12, "c={c}");
        }
    }

    #[test]
    fn reach_and_markov_values() {
        assert!(intersection_reach(72, 7, 41).unwrap() >= 0.98);
        assert_eq!(intersection_reach(72, 7, 0).unwrap(), 0.0);
        assert_eq!(intersection_reach(16, 16, 3).unwrap(), 1.0);
        assert!((p_shq_markov(72, 7, 41).unwrap() - 41.0 / 53.0).abs() < 1e-15);
        assert_eq!(p_shq_markov(72, 1, 41).unwrap(), 0.0);
    }

    #[test]
    fn fixed_point_edges() {
        assert_eq!(p_shq_fixed_point(72, 3, 0, 72).unwrap(), 0.0);
        assert!(p_shq_fixed_point(72, 3, 25, 71).is_err());
        assert!((p_mitigate_from(72, 3, 0.0) - 1.0 / 72.0).abs() < 1e-15);
        assert!((p_mitigate_from(72, 3, 1.0) - 3.0 / 72.0).abs() < 1e-15);
    }

    #[test]
    fn ssq_sizes() {
        assert_eq!(ssq_min_size(9), 13);
        assert_eq!(ssq_min_size(5), 7);
        assert_eq!(ssq_min_size(2), 3);
        assert_eq!(ssq_min_size(1), 1);
    }

    #[test]
    fn dos_is_algebraic() {
        for (w, r) in [(72, 4), (72, 7), (48, 9), (24, 0)] {
            let d = dos_bound_with_cost(w, r, 7.0);
            let direct = (f64::from(w) + 7.0 * f64::from(r)) / f64::from(w);
            assert!((d.slowdown - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn abo_lookup() {
        assert_eq!(abo_act_q(16, 3).activations, 12);
        assert_eq!(abo_act_q(1, 3).source, AboActSource::SingleAlert);
        let odd = abo_act_q(12, 3);
        assert_eq!(odd.activations, 12);
        assert!(odd.warning(12).is_some());
        assert_eq!(abo_act_q(100, 3).activations, 14);
    }

    #[test]
    fn grid_shape() {
        assert_eq!(x_grid(72, 0), vec![72]);
        assert_eq!(x_grid(72, 25).len(), 25 * 72 + 1);
        let big = x_grid(72, 200);
        assert_eq!(*big.first().unwrap(), 72);
        assert_eq!(*big.last().unwrap(), 201 * 72);
        assert!(big.len() <= 514 && big.len() > 400);
    }

    #[test]
    fn supported_threshold_adds_adjustments() {
        let cfg = PrismConfig::preset(500).unwrap();
        let b = min_supported_trh(
            &cfg,
            &TimingConstants::default(),
            &MttfTarget::default(),
            &ModelOptions::default(),
        )
        .unwrap();
        assert_eq!(b.t_supported, b.t_hat + 4 + 12);
        assert!(b.per_x.iter().all(|r| (0.0..=1.0).contains(&r.p_m)));
    }
}
