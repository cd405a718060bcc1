#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod par;
pub mod runner;
pub mod spectral;
pub mod transverse;
pub mod dynamics;
pub mod integrator;
pub mod linalg;
pub mod diagnostics;
pub mod ground_state;
pub mod krylov;
