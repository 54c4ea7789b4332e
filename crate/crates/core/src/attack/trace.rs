//! Text trace format, one record per line:
//!
//! ```text
//! # comment
//! ACT <bank> <row> [t_on_ns]
//! IDLE <bank>
//! ```
//!
//! With EACT conversion enabled each `ACT` record contributes
//! `(t_on + t_pre) / t_rc` equivalent activations to its row. Fractions
//! accumulate per (bank, row); each time the running total crosses an
//! integer one activation of that row is emitted. Records without a
//! `t_on_ns` field count as `t_on = t_rc - t_pre`, i.e. exactly one.

use std::collections::HashMap;
use std::path::Path;

use super::RowPermutation;
use crate::error::{Error, Result};
use crate::types::{BankId, RowId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Act { bank: BankId, row: RowId },
    Idle { bank: BankId },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EactTiming {
    pub t_pre_ns: f64,
    pub t_rc_ns: f64,
}

impl EactTiming {
    pub fn eact(&self, t_on_ns: f64) -> f64 {
        (t_on_ns + self.t_pre_ns) / self.t_rc_ns
    }

    /// Parses `t_pre,t_rc` in nanoseconds, e.g. `15,48`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let bad = || Error::config(format!("EACT timing must be 't_pre_ns,t_rc_ns', got '{text}'"));
        if parts.len() != 2 {
            return Err(bad());
        }
        let t_pre_ns: f64 = parts[0].parse().map_err(|_| bad())?;
        let t_rc_ns: f64 = parts[1].parse().map_err(|_| bad())?;
        if !(t_pre_ns >= 0.0 && t_rc_ns > 0.0) {
            return Err(bad());
        }
        Ok(EactTiming { t_pre_ns, t_rc_ns })
    }
}

struct Record {
    event: TraceEvent,
    t_on_ns: Option<f64>,
}

fn parse_line(line: &str) -> std::result::Result<Option<Record>, String> {
    let body = line.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let fields: Vec<&str> = body.split_whitespace().collect();
    let bank = |s: &str| s.parse::<BankId>().map_err(|_| format!("invalid bank '{s}'"));
    match fields[0] {
        "ACT" => {
            if !(3..=4).contains(&fields.len()) {
                return Err("expected 'ACT <bank> <row> [t_on_ns]'".into());
            }
            let bank = bank(fields[1])?;
            let raw: u64 = fields[2].parse().map_err(|_| format!("invalid row '{}'", fields[2]))?;
            let row = RowId::new(raw).map_err(|e| e.to_string())?;
            let t_on_ns = match fields.get(3) {
                Some(s) => {
                    let v: f64 = s.parse().map_err(|_| format!("invalid t_on_ns '{s}'"))?;
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(format!("t_on_ns must be non-negative, got {v}"));
                    }
                    Some(v)
                }
                None => None,
            };
            Ok(Some(Record {
                event: TraceEvent::Act { bank, row },
                t_on_ns,
            }))
        }
        "IDLE" => {
            if fields.len() != 2 {
                return Err("expected 'IDLE <bank>'".into());
            }
            Ok(Some(Record {
                event: TraceEvent::Idle { bank: bank(fields[1])? },
                t_on_ns: None,
            }))
        }
        other => Err(format!("unknown record type '{other}'")),
    }
}

/// Parses trace text; `origin` names the source in error messages.
pub fn parse_trace(
    text: &str,
    origin: &Path,
    eact: Option<EactTiming>,
    randomize_key: Option<u64>,
) -> Result<Vec<TraceEvent>> {
    let perm = randomize_key.map(RowPermutation::new);
    let mut carry: HashMap<(BankId, RowId), f64> = HashMap::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let rec = parse_line(line).map_err(|msg| Error::Parse {
            path: origin.to_owned(),
            line: n + 1,
            msg,
        })?;
        let Some(rec) = rec else { continue };
        match rec.event {
            TraceEvent::Idle { .. } => out.push(rec.event),
            TraceEvent::Act { bank, row } => {
                let row = perm.map_or(row, |p| p.apply(row));
                let count = match eact {
                    None => 1,
                    Some(timing) => {
                        let t_on = rec.t_on_ns.unwrap_or(timing.t_rc_ns - timing.t_pre_ns);
                        let acc = carry.entry((bank, row)).or_insert(0.0);
                        *acc += timing.eact(t_on);
                        // Guard against 2.9999999 from repeated fractional sums.
                        let whole = (*acc + 1e-9).floor();
                        *acc = (*acc - whole).max(0.0);
                        whole as u64
                    }
                };
                out.extend((0..count).map(|_| TraceEvent::Act { bank, row }));
            }
        }
    }
    Ok(out)
}

/// Reads and parses a trace file.
pub fn ingest_trace(path: &Path, eact: Option<EactTiming>, randomize_key: Option<u64>) -> Result<Vec<TraceEvent>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_trace(&text, path, eact, randomize_key)
}
