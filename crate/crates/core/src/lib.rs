//! Constructive tools around Favard length: projections of finite segment
//! unions, conical energies and bad scales, anisotropic dyadic lattices, the
//! good-direction tree and Lipschitz-graph extraction.

pub mod error;
pub mod conical;
pub mod config;
pub mod exact;
pub mod gap;
pub mod graph;
pub mod io;
pub mod lattice;
pub mod pipeline;
pub mod projection;
pub mod sets;
pub mod stages;
pub mod torus;
pub mod tree;

pub use error::{Error, Result};
