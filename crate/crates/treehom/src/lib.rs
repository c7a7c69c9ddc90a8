//! Graph homomorphisms from Z^m to the d-regular tree: exact enumeration,
//! Kirszbraun extension, adapted Glauber dynamics and limit-shape tools.

pub mod dynamics;
pub mod enumeration;
pub mod error;
pub mod experiments;
pub mod kirszbraun;
pub mod lattice;
pub mod periodic;
pub mod profiles;
pub mod tree;

pub use error::{Error, Result};
