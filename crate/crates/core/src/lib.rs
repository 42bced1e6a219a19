//! Panel-data estimators for time-varying state policy effects and the
//! Monte Carlo machinery used to compare them.

pub mod dgp;
pub mod estimators;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod panel;

pub use dgp::{Scenario, TruthTable};
pub use estimators::{EstimatorId, EstimatorOptions, EstimatorResult, EventEffect};
pub use harness::{ReplicateResult, RunManifest, SimulationConfig};
pub use metrics::{MetricsRow, MetricsTable};
pub use panel::{EventWindow, PanelDataset, PanelObservation, TreatmentSchedule};
