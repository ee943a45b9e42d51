//! Cube complexes, their boundaries and random walks on cubulated groups.

pub mod boundary;
pub mod complex;
pub mod dynamics;
pub mod harness;
pub mod intervalgeom;
pub mod pocset;
pub mod structure;
