//! Numerical toolkit for the weighted light-ray transform on Minkowski and
//! analytic Lorentzian metrics: forward transform along null geodesics,
//! normal-operator analysis and spacelike reconstruction via Fourier
//! multipliers, reduction to a Radon transform over timelike planes, and
//! verification of the lightlike-convexity and foliation hypotheses behind
//! support theorems for the transform.

pub mod error;
pub mod fft;
pub mod fields;
pub mod foliation;
pub mod geodesic;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod normal_op;
pub mod radon;
pub mod transform;

pub use error::{Error, Result};
