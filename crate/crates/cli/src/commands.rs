use prismlab_core::analytic::{
    abo_act_q, dos_bound_with_cost, min_supported_trh, p_mitigate, storage_bytes, ModelOptions, MttfTarget,
};
use prismlab_core::attack::{circular_x, ingest_trace, Access, AttackKind, AttackPattern, EactTiming};
use prismlab_core::channel::{throughput_loss, ChannelState};
use prismlab_core::engine::{mint_window_for, BankEngine};
use prismlab_core::montecarlo::{self, empirical_escape, run_epochs, EpochOptions, SweepGrid};
use prismlab_core::{Error, PrismConfig, Result, TimingConstants};
use serde::Serialize;

use crate::output::Sink;
use crate::{
    AnalyzeArgs, AttackArgs, AttackKindArg, ConfigArgs, DosArgs, EngineArg, McArgs, ModelArgs, SimulateArgs,
    StorageArgs, SweepArgs,
};

/// The DoS table prices an RFM at 7 activation slots.
const TABLE_C_RFM: f64 = 7.0;

struct Resolved {
    cfg: PrismConfig,
    timing: TimingConstants,
    preset: Option<u32>,
}

fn resolve(args: &ConfigArgs) -> Result<Resolved> {
    let (mut cfg, timing, preset) = match (&args.preset, &args.config) {
        (Some(name), _) => {
            let cfg = PrismConfig::preset_by_name(name)?;
            let t = name
                .trim()
                .trim_start_matches("trh")
                .trim_start_matches("TRH")
                .parse()
                .ok();
            (cfg, TimingConstants::default(), t)
        }
        (None, Some(path)) => {
            let (cfg, timing) = PrismConfig::from_file(path)?;
            (cfg, timing, None)
        }
        (None, None) => (PrismConfig::preset(500)?, TimingConstants::default(), Some(500)),
    };
    if let Some(trr) = args.trr_interval {
        cfg.trr_interval_acts = trr;
    }
    cfg.validate()?;
    Ok(Resolved { cfg, timing, preset })
}

fn model(args: &ModelArgs) -> Result<(MttfTarget, ModelOptions)> {
    let mttf = MttfTarget {
        per_bank_years: args.mttf_years,
        parallel_banks: args.parallel_banks,
    };
    mttf.validate()?;
    let options = ModelOptions {
        multiplicity: args.multiplicity.into(),
        double_sided: !args.single_sided,
    };
    Ok((mttf, options))
}

fn attack(args: &AttackArgs, cfg: &PrismConfig, timing: &TimingConstants, seed: u64) -> Result<AttackPattern> {
    if args.attack != AttackKindArg::Trace && (args.eact.is_some() || args.randomize_key.is_some()) {
        return Err(Error::Config(
            "--eact and --randomize-key apply to --attack trace only".into(),
        ));
    }
    if args.banks == 0 {
        return Err(Error::Config("--banks must be at least 1".into()));
    }
    let horizon = args.acts.unwrap_or_else(|| timing.activation_budget());
    let banks: Vec<usize> = (0..args.banks).collect();
    match args.attack {
        AttackKindArg::Circular => AttackPattern::circular_x(args.x.unwrap_or(cfg.window), cfg.window, horizon, banks),
        AttackKindArg::Benign => AttackPattern::uniform_benign(args.rows, horizon, banks, seed),
        AttackKindArg::Trace => {
            let path = args
                .trace
                .as_ref()
                .ok_or_else(|| Error::Config("--attack trace needs --trace <file>".into()))?;
            let eact = args.eact.as_deref().map(EactTiming::parse).transpose()?;
            let events = ingest_trace(path, eact, args.randomize_key)?;
            let n = events.len() as u64;
            Ok(AttackPattern::trace(events).with_horizon(args.acts.map_or(n, |a| a.min(n))))
        }
    }
}

fn attack_label(p: &AttackPattern) -> String {
    match &p.kind {
        AttackKind::CircularX { x } => format!("circular-x X={x} banks={}", p.banks.len()),
        AttackKind::UniformBenign { row_count } => format!("benign rows={row_count} banks={}", p.banks.len()),
        AttackKind::Trace(events) => format!("trace records={}", events.len()),
    }
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let Resolved { cfg, timing, .. } = resolve(&args.cfg)?;
    let (mttf, options) = model(&args.model)?;
    let abo = abo_act_q(cfg.pmq_capacity, cfg.abo_act_slack);
    if let Some(w) = abo.warning(cfg.pmq_capacity) {
        eprintln!("warning: {w}");
    }
    let bound = min_supported_trh(&cfg, &timing, &mttf, &options)?;
    let worst = bound.worst();

    let mut sink = Sink::open(args.out.out.as_deref())?;
    sink.header("analyze", &cfg, &timing)?;
    sink.note("model", options)?;
    sink.note(
        "mttf",
        format!(
            "{} years per bank, {} parallel banks",
            mttf.per_bank_years, mttf.parallel_banks
        ),
    )?;
    sink.note(
        "t_supported",
        format!(
            "{} = t_hat {} + t_pmq {} + abo_act {}",
            bound.t_supported, bound.t_hat, bound.t_pmq, bound.abo_act
        ),
    )?;
    sink.note("worst_x", worst.x)?;
    sink.rows(&bound.per_x)?;
    sink.finish()?;
    eprintln!(
        "t_supported = {} (worst X = {}, P_SHQ = {:.5}, p_m = {:.5}, {} X values)",
        bound.t_supported,
        worst.x,
        worst.p_shq,
        worst.p_m,
        bound.per_x.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct McRow {
    attack: String,
    epochs: u64,
    activations: u64,
    windows: u64,
    p_m_mc: f64,
    p_m_model: Option<f64>,
    alerts_mean: f64,
    alerts_sd: f64,
    rfms_mean: f64,
    max_unmitigated: u64,
    threshold: u64,
    escape_p: f64,
    escape_lo: f64,
    escape_hi: f64,
    below_resolution: bool,
}

pub fn mc(args: &McArgs) -> Result<()> {
    let Resolved { cfg, timing, .. } = resolve(&args.cfg)?;
    let (mttf, options) = model(&args.model)?;
    let pattern = attack(&args.attack, &cfg, &timing, args.seed)?;
    let opts = EpochOptions {
        trr: cfg.trr_interval_acts > 0,
        horizon: args.attack.acts,
    };
    let stats = run_epochs(&cfg, &timing, &pattern, args.epochs, args.seed, &opts)?;
    let threshold = match args.threshold {
        Some(t) => t,
        None => min_supported_trh(&cfg, &timing, &mttf, &options)?.t_required_max,
    };
    let esc = empirical_escape(&stats, threshold);
    let p_m_model = match pattern.kind {
        AttackKind::CircularX { x } if x >= cfg.window => p_mitigate(cfg.window, cfg.samples, cfg.lookback, x).ok(),
        _ => None,
    };
    let row = McRow {
        attack: attack_label(&pattern),
        epochs: stats.epochs,
        activations: stats.activations,
        windows: stats.windows,
        p_m_mc: stats.mitigation_frequency(),
        p_m_model,
        alerts_mean: stats.alerts.mean,
        alerts_sd: stats.alerts.variance().sqrt(),
        rfms_mean: stats.rfms.mean,
        max_unmitigated: stats.max_unmitigated(),
        threshold,
        escape_p: esc.p,
        escape_lo: esc.lo,
        escape_hi: esc.hi,
        below_resolution: esc.below_resolution,
    };

    let mut sink = Sink::open(args.out.out.as_deref())?;
    sink.header("mc", &cfg, &timing)?;
    sink.note("seed", args.seed)?;
    sink.note("attack", &row.attack)?;
    sink.rows(&[&row])?;
    sink.finish()?;
    eprintln!(
        "{} epochs: p_m {:.5}{}, max unmitigated {}, escape at {} = {:.4} [{:.4}, {:.4}]{}",
        row.epochs,
        row.p_m_mc,
        p_m_model.map_or(String::new(), |p| format!(" (model {p:.5})")),
        row.max_unmitigated,
        threshold,
        esc.p,
        esc.lo,
        esc.hi,
        if esc.below_resolution { " below resolution" } else { "" }
    );
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let grid = SweepGrid::from_file(&args.grid)?;
    let n = grid.point_count();
    let step = (n / 20).max(1);
    let progress = move |k: usize, n: usize| {
        if k.is_multiple_of(step) || k == n {
            eprintln!("sweep: {k}/{n} points");
        }
    };
    let rows = montecarlo::sweep(&grid, args.seed, Some(&progress))?;
    let mut sink = Sink::open(args.out.out.as_deref())?;
    montecarlo::write_sweep_csv(sink.writer(), &grid, args.seed, &rows)?;
    sink.finish()?;
    let invalid = rows.iter().filter(|r| r.status != "ok").count();
    eprintln!("{n} points written, {invalid} invalid");
    Ok(())
}

#[derive(Serialize)]
struct DosRow {
    #[serde(rename = "W")]
    w: u32,
    #[serde(rename = "R")]
    r: u32,
    slowdown_table: f64,
    c_rfm: f64,
    loss: f64,
    slowdown: f64,
    measured_x: Option<u32>,
    measured_slowdown_table: Option<f64>,
    measured_slowdown: Option<f64>,
    measured_fraction_of_bound: Option<f64>,
}

/// Slowdown of one circular-X run on a single bank with TRR off, for the
/// table cost and the configured cost.
fn measure(cfg: &PrismConfig, timing: &TimingConstants, x: u32, acts: u64, seed: u64) -> Result<(f64, f64)> {
    let mut cfg = cfg.clone();
    cfg.trr_interval_acts = 0;
    let w = u64::from(cfg.window);
    let mut ch = ChannelState::prism(&cfg, timing, 1, seed)?;
    for i in 0..acts {
        ch.step(0, circular_x(i / w, (i % w) as u32, cfg.window, x))?;
    }
    let rfms = ch.counters().rfm_total();
    let s = |c| 1.0 / (1.0 - throughput_loss(acts, rfms, c));
    Ok((s(TABLE_C_RFM), s(timing.c_rfm())))
}

pub fn dos(args: &DosArgs) -> Result<()> {
    let Resolved { cfg, timing, .. } = resolve(&args.cfg)?;
    let (w, r) = (cfg.window, cfg.samples);
    let table = dos_bound_with_cost(w, r, TABLE_C_RFM);
    let exact = dos_bound_with_cost(w, r, timing.c_rfm());
    let mut row = DosRow {
        w,
        r,
        slowdown_table: table.slowdown,
        c_rfm: exact.c_rfm,
        loss: exact.loss,
        slowdown: exact.slowdown,
        measured_x: None,
        measured_slowdown_table: None,
        measured_slowdown: None,
        measured_fraction_of_bound: None,
    };
    if args.measure {
        if args.acts == 0 {
            return Err(Error::Config("--acts must be positive".into()));
        }
        let xs: Vec<u32> = match args.x {
            Some(x) => vec![x],
            None => (1..=4 * w).collect(),
        };
        let mut best: Option<(u32, f64, f64)> = None;
        for x in xs {
            let (t, e) = measure(&cfg, &timing, x, args.acts, args.seed)?;
            if best.is_none_or(|b| t > b.1) {
                best = Some((x, t, e));
            }
        }
        let (x, t, e) = best.expect("at least one X");
        row.measured_x = Some(x);
        row.measured_slowdown_table = Some(t);
        row.measured_slowdown = Some(e);
        row.measured_fraction_of_bound = Some(t / table.slowdown);
    }

    let mut sink = Sink::open(args.out.out.as_deref())?;
    sink.header("dos", &cfg, &timing)?;
    if args.measure {
        sink.note(
            "measure",
            format!("circular-X, TRR off, {} activations, seed {}", args.acts, args.seed),
        )?;
    }
    sink.rows(&[&row])?;
    sink.finish()?;
    eprintln!(
        "W={w} R={r}: slowdown {:.2} at {TABLE_C_RFM} slots per RFM ({:.3} at {:.3}){}",
        table.slowdown,
        exact.slowdown,
        exact.c_rfm,
        match (row.measured_x, row.measured_slowdown_table) {
            (Some(x), Some(t)) => format!(
                "; measured {t:.3} at X={x} ({:.1}% of bound)",
                100.0 * t / table.slowdown
            ),
            _ => String::new(),
        }
    );
    Ok(())
}

#[derive(Serialize)]
struct SimRow {
    engine: &'static str,
    banks: usize,
    total_acts: u64,
    idle_slots: u64,
    alerts: u64,
    rfm_alert: u64,
    rfm_proactive: u64,
    trr: u64,
    mitigations: u64,
    stall_slots: f64,
    throughput_loss: f64,
    slowdown: f64,
}

fn drive<E: BankEngine>(mut ch: ChannelState<E>, pattern: &AttackPattern, engine: &'static str) -> Result<SimRow> {
    for access in pattern.iter() {
        match access {
            Access::Act { bank, row } => {
                ch.step(bank, row)?;
            }
            Access::Idle { bank } => ch.idle(bank)?,
        }
    }
    ch.flush_log()?;
    let c = *ch.counters();
    Ok(SimRow {
        engine,
        banks: ch.banks().len(),
        total_acts: c.total_acts,
        idle_slots: c.idle_slots,
        alerts: c.alerts,
        rfm_alert: c.rfm_alert,
        rfm_proactive: c.rfm_proactive,
        trr: c.trr,
        mitigations: c.mitigations,
        stall_slots: c.stall_slots,
        throughput_loss: ch.throughput_loss(),
        slowdown: ch.slowdown(),
    })
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let Resolved { cfg, timing, preset } = resolve(&args.cfg)?;
    let pattern = attack(&args.attack, &cfg, &timing, args.seed)?;
    let n_banks = pattern.max_bank() + 1;
    let log = match &args.event_log {
        Some(p) => Some(std::fs::File::create(p).map_err(|source| Error::Io {
            path: p.clone(),
            source,
        })?),
        None => None,
    };
    let (row, engine_note) = match args.engine {
        EngineArg::Prism => {
            let mut ch = ChannelState::prism(&cfg, &timing, n_banks, args.seed)?;
            if let Some(f) = log {
                ch = ch.with_event_log(Box::new(f));
            }
            (drive(ch, &pattern, "prism")?, "prism".to_string())
        }
        EngineArg::Mint => {
            let window = match (args.mint_window, preset) {
                (Some(w), _) => w,
                (None, Some(t)) => mint_window_for(t)?,
                (None, None) => cfg.window,
            };
            let mut ch = ChannelState::mint(window, &cfg, &timing, n_banks, args.seed)?;
            if let Some(f) = log {
                ch = ch.with_event_log(Box::new(f));
            }
            (drive(ch, &pattern, "mint")?, format!("mint window={window}"))
        }
    };

    let mut sink = Sink::open(args.out.out.as_deref())?;
    sink.header("simulate", &cfg, &timing)?;
    sink.note("engine", &engine_note)?;
    sink.note("attack", attack_label(&pattern))?;
    sink.note("seed", args.seed)?;
    sink.rows(&[&row])?;
    sink.finish()?;
    eprintln!(
        "{engine_note}: {} activations, {} alerts, {} RFMs ({} alert, {} proactive), {} TRR, loss {:.4}",
        row.total_acts,
        row.alerts,
        row.rfm_alert + row.rfm_proactive,
        row.rfm_alert,
        row.rfm_proactive,
        row.trr,
        row.throughput_loss
    );
    Ok(())
}

pub fn storage(args: &StorageArgs) -> Result<()> {
    let Resolved { cfg, timing, .. } = resolve(&args.cfg)?;
    let s = storage_bytes(&cfg);
    let mut sink = Sink::open(args.out.out.as_deref())?;
    sink.header("storage", &cfg, &timing)?;
    sink.rows(&[&s])?;
    sink.finish()?;
    eprintln!(
        "{} bytes per bank ({} bits; SHQ {} entries, SSQ {}, PMQ {})",
        s.total_bytes, s.total_bits, s.shq_entries, cfg.ssq_capacity, cfg.pmq_capacity
    );
    Ok(())
}
