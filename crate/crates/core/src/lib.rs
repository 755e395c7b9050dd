//! Finite-time-step conditional maps for quantum trajectories under
//! continuous homodyne measurement, with a two-resolution benchmark
//! harness.
//!
//! A fine-grained record is simulated with a small step, binned into the
//! current record `I` and the linearly weighted record `phi`, and then fed
//! to five coarse maps ([`maps::MapKind`]). Their errors against the
//! fine-grained state are collected by [`metrics`].

pub mod bench;
pub mod linalg;
pub mod maps;
pub mod metrics;
pub mod quadrature;
pub mod records;
pub mod setup;
pub mod trajectory;

pub use linalg::{CMatrix, Complex, StateVector};
pub use maps::{BinnedRecord, MapKind};
pub use setup::{ExampleId, MeasurementSetup};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error(transparent)]
    Setup(#[from] setup::SetupError),
    #[error(transparent)]
    Map(#[from] maps::MapError),
    #[error(transparent)]
    Record(#[from] records::RecordError),
    #[error(transparent)]
    Trajectory(#[from] trajectory::TrajectoryError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
}
