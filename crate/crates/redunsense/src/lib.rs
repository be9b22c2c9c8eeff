//! Simulator and optimizer for redundancy-enhanced sensing architectures.
//!
//! The library models a data converter that builds each digital code by
//! assembling a subset of weighted physical components. Three architectures
//! are compared:
//!
//! - **COS** — conventional orthogonal system: a binary-weighted set where
//!   every code has exactly one assembly.
//! - **CRS** — conventional redundant system: `r` replicated binary arrays;
//!   an assembly must stay inside one replica.
//! - **RES** — entangled-redundant system: two overlapping binary sub-arrays
//!   sharing the same unit budget, giving exponentially many assemblies
//!   (microstates) per code.
//!
//! Fabrication mismatch is injected as seeded Gaussian noise, the best
//! assembly per code is selected exactly or heuristically, and the accuracy
//! gain is quantified with INL/DNL metrics over paired Monte Carlo sweeps.

pub mod calibration;
pub mod components;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod microstates;
pub mod selection;

pub(crate) mod rng;

pub use components::{Architecture, ComponentSet, MismatchModel, RealizedSet};
pub use error::{Error, Result};
pub use metrics::{AccuracyReport, MetricMode, TransferFunction};
pub use microstates::{Assembly, CapacityProfile};
pub use selection::{Selection, SelectionStrategy};
