//! Steering the state distribution of a scalar discrete-time linear system
//! `x(k+1) = a(k) x(k) + b(k) u(k) + w(k)` from an initial density to a
//! target density, working entirely with truncated power-moment sequences.
//!
//! The control at each step mixes a feedback part with a draw from a
//! transition kernel: `u(k) = -c(k) a(k) x(k) + F(k)`. The pipeline
//!
//! 1. interpolates a moment-state trajectory between the endpoint moments,
//! 2. checks every transition for reachability under the noise (Hankel
//!    positivity of the recovered kernel and control moments), repairing
//!    interior states when needed,
//! 3. picks each gain `c(k)` by minimizing a quadratic control cost over the
//!    feasible subset of `[0, 1]`,
//! 4. realizes each kernel from its moments by convex dual descent against a
//!    Gaussian reference,
//! 5. validates everything with reproducible closed-loop Monte Carlo runs
//!    and moment-band reports.

pub mod catalog;
pub mod controller;
mod error;
pub mod moments;
pub mod pipeline;
pub mod planner;
mod quad;
pub mod realizer;
pub mod report;
pub mod scenario;
pub mod simulate;

pub use catalog::{DensitySpec, MomentMethod};
pub use controller::{ControllerConfig, CostVariant, StepControl};
pub use error::{Error, Result};
pub use moments::{HankelMatrix, MomentSequence};
pub use pipeline::{run_pipeline, PipelineRun, RunManifest, Stage};
pub use planner::{MomentStateTrajectory, StepFeasibilityReport};
pub use realizer::{RealizedDensity, RealizerConfig, ReferenceSecondMoment};
pub use report::{HistogramData, ReportConfig, SteeringReport};
pub use scenario::{load_scenario, GainSequence, GainSpec, Scenario};
pub use simulate::{ClosedLoopResult, SimulationConfig};
