//! Successive subspace learning (SSL) for classifying two-phase 3D
//! deformation fields.
//!
//! The crate is `no_std` + `alloc`. Everything here is pure computation:
//! input assembly, neighborhood unions, the Saab transform, supervised
//! dimension reduction (entropy-guided channel selection and label-assisted
//! regression), a one-vs-rest linear SVM head, evaluation metrics and the
//! end-to-end pipeline. File formats, the synthetic generator and the CLI
//! live in the `sslhop` crate.
//!
//! The `parallel` feature (on by default) pulls in `std` and rayon to run
//! per-direction and per-sample work concurrently. Results never depend on
//! the thread count: all reductions are merged in a fixed order.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod classifier;
pub mod error;
pub mod linalg;
pub mod neighborhood;
pub mod pipeline;
pub mod saab;
pub mod supervise;
pub mod tensor;

mod math;
mod par;

pub use error::{Error, Result};
