//! Digital twin of a 16-channel Peltier thermal array and the control
//! workflow around it: fractional-order plant models, step-response
//! identification, ν-gap nominal selection, constrained PI tuning and a
//! decentralized closed loop driven through a thermal-camera model.
//!
//! The crate is organised bottom-up:
//!
//! * [`foc`] – fractional-order transfer-function algebra.
//! * [`plant`] – the 16×16 MIMO plant, actuator, camera and faults.
//! * [`sysid`] – stepped identification experiments and FOPDT fitting.
//! * [`gap`] – ν-gap metric and nominal model selection.
//! * [`tuner`] – ITAE-optimal PI tuning under frequency-domain specs.
//! * [`looprt`] – discrete PI controllers and closed-loop scenarios.
//! * [`records`] – CSV/JSON-lines formats shared with the service crate.

pub mod error;
pub mod foc;
pub mod gap;
pub mod looprt;
mod optim;
pub mod plant;
pub mod records;
pub mod sysid;
pub mod tuner;

pub use error::{Error, Result};
pub use foc::FoTransferFunction;

/// Number of Peltier channels (inputs and outputs).
pub const CHANNELS: usize = 16;
/// Side length of the square Peltier grid.
pub const GRID_SIDE: usize = 4;
