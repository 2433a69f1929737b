//! Single-image 3D shape estimation from 2D landmarks.
//!
//! The unknown shape is modelled as a sparse combination of *rotatable* basis
//! shapes, `S = Σ c_i R_i B_i`. Under a weak-perspective camera the 2D
//! landmarks become linear in the per-basis motion blocks `M_i = c_i R̄_i`,
//! and relaxing the orthogonality constraint on each block to a spectral-norm
//! ball gives a convex program that is solved globally by ADMM
//! ([`convex::solve_noisy`], [`convex::solve_noiseless`]).
//!
//! Also included: the classic nonconvex alternating-minimization fit
//! ([`altmin`]), a sparse nonnegative shape-dictionary learner ([`dictionary`])
//! and the proximal primitives everything is built on ([`prox`]).

pub mod altmin;
pub mod convex;
pub mod dictionary;
mod error;
pub mod model;
pub mod prox;

pub use error::{Error, Result};
pub use model::{CameraModel, LandmarkSet2D, Shape3D, ShapeDictionary, SimilarityTransform};
