//! Numerical conformal mapping toolkit for tree-slit disks.
//!
//! The central object is the conformal map from a round annulus `A(r, 2)`
//! onto the disk of radius 2 with a planar tree removed, normalized to fix
//! the point 2. On top of that map the crate builds a canonical extension
//! operator: given a homeomorphism between two trees (close enough to an
//! isometry in the sense of the module documentation), it produces a
//! homeomorphism of the ambient disk restricting to the given map on the
//! tree, depending continuously on the input and commuting with rotations
//! and reflections. A gluing layer assembles such local extensions into
//! extensions of embeddings of graph complexes, and an oracle module
//! provides independently computed conformal moduli (special functions and
//! finite differences) used to validate the solvers.
//!
//! The crate is `no_std` + `alloc`; all float math goes through `libm`, so
//! results are bit-reproducible across platforms.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod annulus;
pub mod disk;
pub mod extend;
pub mod geom;
pub mod glue;
pub mod homeo;
pub mod num;
pub mod oracle;

pub use num_complex::Complex64;
