//! Computational self-testing of EPR pairs with a single device.
//!
//! The crate contains the classical verifier for the self-testing and
//! dimension-testing protocols, the function-pair layer they rely on, honest
//! and scripted adversarial provers running on a small simulator, a framed
//! transport, a white-box device analyzer and the Monte Carlo harness.

pub mod entcf;
pub mod protocol;
pub mod prover;
pub mod transport;
pub mod harness;
pub mod analysis;
