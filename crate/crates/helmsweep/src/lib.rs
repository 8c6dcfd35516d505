//! Frequency-domain Helmholtz solves with a moving-PML sweeping preconditioner.

pub mod dense;
pub mod discretize;
pub mod distsim;
pub mod error;
pub mod frontal;
pub mod harness;
pub mod krylov;
pub mod ndtree;
pub mod sweep;
pub mod velocity;

pub use crate::error::{Error, Result};

/// Runs the book's code snippets as doc-tests so the guide cannot drift.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/velocity-models.md")]
    mod velocity_models {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/multifrontal.md")]
    mod multifrontal {}
    #[doc = include_str!("../../../book/src/selective-inversion.md")]
    mod selective_inversion {}
    #[doc = include_str!("../../../book/src/sweeping.md")]
    mod sweeping {}
    #[doc = include_str!("../../../book/src/gmres.md")]
    mod gmres {}
    #[doc = include_str!("../../../book/src/distributed-layouts.md")]
    mod distributed_layouts {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
