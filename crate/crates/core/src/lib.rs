//! Describing vector fields for torus actions.
//!
//! The crate builds complete vector fields whose automorphism group is the
//! acting torus times the field's own flow, on a handful of concrete charts
//! (`R^k x T^n`, `S^1 x T^n`, the round `S^5` with its `T^3` action and the
//! triangle base of that action), integrates their flows and measures every
//! property of the construction that can be checked with floating point:
//! commutation with the action, commutant dimension, orders of nullity,
//! limit sets, normal forms and invariance under Haar averaging.
//!
//! Everything here is `no_std` + `alloc`; IO, configuration and the command
//! line live in the `torusflow` crate.

#![no_std]

extern crate alloc;

pub mod construction;
pub mod fields;
pub mod flow;
pub mod geometry;
pub mod linalg;
mod math;
pub mod radial;
pub mod sampling;
pub mod verify;

mod error;

pub use error::{Error, Result};
pub use fields::{Feature, FeatureKind, FieldHandle, FieldMeta};
pub use geometry::Chart;
