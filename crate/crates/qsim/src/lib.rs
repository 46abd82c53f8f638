//! Dense complex linear algebra for small quantum systems.
//!
//! Everything here works on explicit matrices: statevectors with named
//! registers, density operators, operators that are block-diagonal over a
//! classical label (CQ operators), and the norms used to compare them.
//! Dimensions are expected to stay at desk scale (a few thousand at most).

mod cq;
mod error;
pub mod linalg;
mod observable;
mod state;

pub use cq::CqOperator;
pub use error::{QsimError, Result};
pub use linalg::{CVec, Mat, C64};
pub use observable::BinaryObservable;
pub use state::{Basis, Register, StateVector};
