use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use prismlab_core::{Error, PrismConfig, Result, TimingConstants};
use serde::Serialize;

/// CSV destination: a file from `--out`, or standard output.
pub struct Sink {
    path: PathBuf,
    inner: Box<dyn Write>,
}

impl Sink {
    pub fn open(out: Option<&Path>) -> Result<Self> {
        match out {
            Some(p) => {
                let f = File::create(p).map_err(|source| Error::Io {
                    path: p.to_owned(),
                    source,
                })?;
                Ok(Sink {
                    path: p.to_owned(),
                    inner: Box::new(BufWriter::new(f)),
                })
            }
            None => Ok(Sink {
                path: "<stdout>".into(),
                inner: Box::new(BufWriter::new(io::stdout().lock())),
            }),
        }
    }

    fn io(&self, source: io::Error) -> Error {
        Error::Io {
            path: self.path.clone(),
            source,
        }
    }

    /// One `# key: value` header line.
    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) -> Result<()> {
        writeln!(self.inner, "# {key}: {value}").map_err(|e| self.io(e))
    }

    /// Header lines with the command and the fully resolved configuration.
    pub fn header(&mut self, command: &str, cfg: &PrismConfig, timing: &TimingConstants) -> Result<()> {
        self.note("prismlab", format!("{command} {}", env!("CARGO_PKG_VERSION")))?;
        self.echo_config(cfg, timing)
    }

    pub fn echo_config(&mut self, cfg: &PrismConfig, timing: &TimingConstants) -> Result<()> {
        for line in cfg.to_toml(timing).lines().filter(|l| !l.is_empty()) {
            self.note("config", line)?;
        }
        Ok(())
    }

    pub fn rows<T: Serialize>(&mut self, rows: &[T]) -> Result<()> {
        {
            let mut w = csv::Writer::from_writer(&mut self.inner);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::Io {
                path: self.path.clone(),
                source: e,
            })?;
        }
        self.inner.flush().map_err(|e| self.io(e))
    }

    pub fn writer(&mut self) -> &mut dyn Write {
        &mut self.inner
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| self.io(e))
    }
}
