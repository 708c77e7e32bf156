//! Synthesis of stabilizing dynamic output-feedback controllers for unknown
//! discrete-time LTI plants, directly from input-output data corrupted by
//! bounded measurement noise on both channels.
//!
//! The pipeline is organized around an auxiliary shift realization whose state
//! stacks the last `ell` outputs and inputs of the plant. Its only unknown
//! block is the one-step I/O predictor `Z`; everything else is fixed structure.
//! Noisy data then confines `Z` to a bounded matrix ellipsoid, and a single
//! LMI feasibility problem produces a gain that stabilizes every plant
//! consistent with the data. Plants whose output count times observability
//! index exceeds the state dimension are handled by augmenting them with a
//! small artificial system chosen by the designer.
//!
//! Modules follow the pipeline order:
//!
//! - [`lti`]: state-space models, simulation, observability analysis, the
//!   structural matrices and the I/O predictor.
//! - [`auxrep`]: the auxiliary shift realization and its reachability facts.
//! - [`experiment`]: noisy data collection, window matrices, noise energy
//!   bounds and data-quality diagnostics.
//! - [`consistency`]: the set of predictors consistent with data.
//! - [`sdp`]: a small dense LMI feasibility solver.
//! - [`synthesis`]: the controller synthesis LMI and gain extraction.
//! - [`augmentation`]: the parallel-connection extension for general MIMO
//!   plants.
//! - [`verify`]: closed-loop assembly, certification and noisy-runtime
//!   simulation.
//! - [`plants`]: the two benchmark plants used by the demos.

pub mod augmentation;
pub mod auxrep;
pub mod consistency;
pub mod experiment;
pub mod linalg;
pub mod lti;
pub mod plants;
pub mod sdp;
pub mod synthesis;
pub mod verify;

pub use augmentation::{ArtificialStyle, ArtificialSystem, AugmentedOutcome};
pub use auxrep::{AuxShift, AuxSystem};
pub use consistency::ConsistentSet;
pub use experiment::{DataMatrices, ExperimentLog, ExperimentPlan, NoiseBound};
pub use lti::{IoParameter, StateSpaceModel, StructuralMatrices};
pub use sdp::{Feasibility, LmiProblem, LmiSolution};
pub use synthesis::{DynController, LmiVariant, SynthOutcome, SynthesisResult};
pub use verify::{CertificationReport, ClosedLoopReport, NoisyRunReport};
