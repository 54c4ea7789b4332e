//! Activation-level laboratory for PrISM, an intersection-based probabilistic
//! RowHammer mitigation.
//!
//! The crate is organised bottom-up:
//!
//! - [`config`], [`types`], [`rng`]: shared vocabulary and the seeded randomness contract.
//! - [`engine`]: the per-bank PrISM state machine (SSQ/SHQ/PMQ) and a MINT baseline.
//! - [`channel`]: Alert Back-Off, RFM issuance, TRR cadence and throughput accounting.
//! - [`attack`]: adversarial and benign activation generators plus trace ingestion.
//! - [`analytic`]: closed-form security bounds, DoS bound and storage accounting.
//! - [`montecarlo`]: epoch-based empirical estimation and the parameter sweep engine.

pub mod analytic;
pub mod attack;
pub mod channel;
pub mod config;
pub mod engine;
pub mod error;
pub mod eventlog;
pub mod montecarlo;
pub mod rng;
pub mod types;

pub use config::{PrismConfig, TimingConstants};
pub use error::{Error, Result};
pub use rng::SeededRng;
pub use types::{BankId, RowId};
