//! Image-method radio ray tracing accelerated by precomputed inter-visibility data.

pub mod geometry;
pub mod scene;
pub mod vismatrix;
pub mod vistable;
pub mod raytracer;
pub mod em;
pub mod fixtures;
