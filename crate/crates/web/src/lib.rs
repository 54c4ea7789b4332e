//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export returns a flat `Float64Array`; the layout is documented on the
//! plain Rust function it wraps, which native tests call directly.

use prismlab_core::analytic::{min_supported_trh, p_mitigate_from, p_shq_fixed_point, ModelOptions, MttfTarget};
use prismlab_core::attack::circular_x;
use prismlab_core::channel::ChannelState;
use prismlab_core::engine::BankEngine;
use prismlab_core::{PrismConfig, TimingConstants};
use wasm_bindgen::prelude::*;

/// Largest activation count the simulation export accepts, to keep the page responsive.
pub const MAX_SIM_ACTS: u32 = 2_000_000;

/// Supported threshold over an R x L grid at window `w`, row-major in R:
/// `out[(r - r_lo) * n_l + (l - l_lo)]`. Invalid points are NaN.
pub fn threshold_surface(
    w: u32,
    r_lo: u32,
    r_hi: u32,
    l_lo: u32,
    l_hi: u32,
    mttf_years: f64,
) -> Result<Vec<f64>, String> {
    if r_lo > r_hi || l_lo > l_hi {
        return Err("empty R or L range".into());
    }
    let mttf = MttfTarget {
        per_bank_years: mttf_years,
        ..MttfTarget::default()
    };
    mttf.validate().map_err(|e| e.to_string())?;
    let timing = TimingConstants::default();
    let options = ModelOptions::default();
    let mut out = Vec::with_capacity(((r_hi - r_lo + 1) * (l_hi - l_lo + 1)) as usize);
    for r in r_lo..=r_hi {
        for l in l_lo..=l_hi {
            let cfg = PrismConfig::new(w, r, l);
            let t = min_supported_trh(&cfg, &timing, &mttf, &options)
                .map(|b| b.t_supported as f64)
                .unwrap_or(f64::NAN);
            out.push(t);
        }
    }
    Ok(out)
}

/// SHQ residency and mitigation probability of a circular-X aggressor for
/// X = W..=(L+1)W in `points` steps: triples `[x, p_shq, p_m]`.
pub fn residency_curve(w: u32, r: u32, l: u32, points: u32) -> Result<Vec<f64>, String> {
    PrismConfig::new(w, r, l).validate().map_err(|e| e.to_string())?;
    let (lo, hi) = (w, (l + 1) * w);
    let n = points.clamp(2, 2000);
    let mut out = Vec::with_capacity(3 * n as usize);
    let mut last = 0;
    for i in 0..n {
        let x = lo + ((hi - lo) as u64 * u64::from(i) / u64::from(n - 1)) as u32;
        if i > 0 && x == last {
            continue;
        }
        last = x;
        let p = p_shq_fixed_point(w, r, l, x).map_err(|e| e.to_string())?;
        out.extend([f64::from(x), p, p_mitigate_from(w, r, p)]);
    }
    Ok(out)
}

/// Runs circular-X on one bank and reports
/// `[alerts, alert_rfms, proactive_rfms, trr, intersections, default_selections, windows, throughput_loss, slowdown]`.
pub fn circular_counters(w: u32, r: u32, l: u32, x: u32, acts: u32, trr: bool, seed: u32) -> Result<Vec<f64>, String> {
    if x == 0 {
        return Err("X must be positive".into());
    }
    if acts > MAX_SIM_ACTS {
        return Err(format!("at most {MAX_SIM_ACTS} activations"));
    }
    let mut cfg = PrismConfig::new(w, r, l);
    if !trr {
        cfg.trr_interval_acts = 0;
    }
    let mut ch =
        ChannelState::prism(&cfg, &TimingConstants::default(), 1, u64::from(seed)).map_err(|e| e.to_string())?;
    let wl = u64::from(w);
    for i in 0..u64::from(acts) {
        ch.step(0, circular_x(i / wl, (i % wl) as u32, w, x))
            .map_err(|e| e.to_string())?;
    }
    let c = *ch.counters();
    let b = *ch.banks()[0].counters();
    Ok(vec![
        c.alerts as f64,
        c.rfm_alert as f64,
        c.rfm_proactive as f64,
        c.trr as f64,
        b.intersections as f64,
        b.default_selections as f64,
        b.windows as f64,
        ch.throughput_loss(),
        ch.slowdown(),
    ])
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = thresholdSurface)]
pub fn threshold_surface_js(
    w: u32,
    r_lo: u32,
    r_hi: u32,
    l_lo: u32,
    l_hi: u32,
    mttf_years: f64,
) -> Result<Vec<f64>, JsError> {
    js(threshold_surface(w, r_lo, r_hi, l_lo, l_hi, mttf_years))
}

#[wasm_bindgen(js_name = residencyCurve)]
pub fn residency_curve_js(w: u32, r: u32, l: u32, points: u32) -> Result<Vec<f64>, JsError> {
    js(residency_curve(w, r, l, points))
}

#[wasm_bindgen(js_name = circularCounters)]
pub fn circular_counters_js(
    w: u32,
    r: u32,
    l: u32,
    x: u32,
    acts: u32,
    trr: bool,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    js(circular_counters(w, r, l, x, acts, trr, seed))
}
