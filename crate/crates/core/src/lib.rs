//! Heterogeneous temporal graph neural network for virtual sensing.
//!
//! Sensors are typed nodes of a graph: low-frequency (`L`) sensors such as
//! thermocouples or displacement gauges, and high-frequency (`H`) sensors
//! such as accelerometers. Each node is encoded by a sequence model
//! conditioned on the operating context, node states interact through typed
//! message passing, and a graph readout regresses quantities that are not
//! measured directly (bearing loads, bridge loads).

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod encoders;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod interaction;
pub mod model;
pub mod params;
pub mod signal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
