//! Line-oriented event log of a channel run.
//!
//! Each line starts with an event tag followed by the activation index `t`
//! at which the event happened:
//!
//! ```text
//! ACT <t> <bank> <row> <sampled 0|1> <intersected 0|1>
//! WIN <t> <bank> <default row|-> <real SHQ insertions> <placeholders>
//! ALERT <t>
//! RFM <t> <alert|proactive> <bank|all>
//! TRR <t>
//! MIT <t> <bank> <row> <trr|alert|proactive>
//! ```

use std::io::{BufWriter, Write};

use crate::channel::MitigationSource;
use crate::engine::WindowSummary;
use crate::error::{Error, Result};
use crate::types::{BankId, RowId};

pub struct EventLog {
    out: BufWriter<Box<dyn Write + Send>>,
}

fn io_err(source: std::io::Error) -> Error {
    Error::Io {
        path: "<event log>".into(),
        source,
    }
}

impl EventLog {
    pub fn new(sink: Box<dyn Write + Send>) -> Self {
        EventLog {
            out: BufWriter::new(sink),
        }
    }

    pub fn activation(&mut self, t: u64, bank: BankId, row: RowId, sampled: bool, intersected: bool) -> Result<()> {
        writeln!(self.out, "ACT {t} {bank} {row} {} {}", sampled as u8, intersected as u8).map_err(io_err)
    }

    pub fn window(&mut self, t: u64, bank: BankId, w: &WindowSummary) -> Result<()> {
        let default = w
            .default_candidate
            .map(|r| r.to_string())
            .unwrap_or_else(|| "-".to_string());
        writeln!(
            self.out,
            "WIN {t} {bank} {default} {} {}",
            w.real_insertions(),
            w.placeholders()
        )
        .map_err(io_err)
    }

    pub fn alert(&mut self, t: u64) -> Result<()> {
        writeln!(self.out, "ALERT {t}").map_err(io_err)
    }

    pub fn rfm(&mut self, t: u64, kind: &str, bank: Option<BankId>) -> Result<()> {
        match bank {
            Some(b) => writeln!(self.out, "RFM {t} {kind} {b}"),
            None => writeln!(self.out, "RFM {t} {kind} all"),
        }
        .map_err(io_err)
    }

    pub fn trr(&mut self, t: u64) -> Result<()> {
        writeln!(self.out, "TRR {t}").map_err(io_err)
    }

    pub fn mitigation(&mut self, t: u64, bank: BankId, row: RowId, source: MitigationSource) -> Result<()> {
        writeln!(self.out, "MIT {t} {bank} {row} {}", source.as_str()).map_err(io_err)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(io_err)
    }
}
