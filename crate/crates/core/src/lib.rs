//! Sampling kernels for Hamiltonian Monte Carlo with general (possibly
//! asymmetric) momentum distributions, together with the linear-algebra,
//! clustering, transport-metric and transfer-operator machinery needed to
//! study their convergence behaviour.
//!
//! The crate is `no_std` + `alloc`; everything here is pure computation on
//! immutable inputs. File formats, configuration and the experiment driver
//! live in the companion `adhmc-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adapt;
pub mod integrator;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod operator_lab;
pub mod registry;
pub mod rng;
pub mod sampler;
