//! Event-by-event simulation of EPRB experiments with photons, coincidence
//! analysis of the resulting time-tag streams, and the closed-form
//! predictions the simulation is checked against.

pub mod angle;
pub mod config;
pub mod emission;
pub mod estimators;
pub mod event;
pub mod oracle;
pub mod pairing;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod station;
pub mod sweep;
pub mod ttio;

pub use angle::Angle;
pub use config::{Case, ConfigError, SimConfig};
pub use estimators::{CorrelationEntry, CorrelationReport, PairStatistics, ReportSummary};
pub use event::{DetectionEvent, EventLog, Outcome, Station};
pub use oracle::Model;
pub use pairing::{CoincidenceTally, PairingError, PairingSpec};
pub use rng::{derive_stream, RngStream, UniformSource};
pub use simulate::Simulation;
pub use sweep::{CurveLayout, SweepAxis, SweepRow, SweepSpec};
pub use ttio::{ReportFormat, TtioError};
