//! Hybrid subspace learning: decomposes a data matrix into a low-rank part and a
//! column-sparse high-dimensional part whose feature supports are disjoint.

pub mod baselines;
pub mod eval;
pub mod hsl;
pub mod matrix;
pub mod prox;
pub mod rng;
pub mod scalar;
pub mod svd;
pub mod synth;

pub use hsl::{HslConfig, HslError, HslModel, HslPath};
pub use matrix::{DenseMatrix, MatrixError};
pub use rng::RngStream;
pub use scalar::Real;

pub type Matrix = DenseMatrix<f64>;
pub type Model = HslModel<f64>;
pub type Config = HslConfig<f64>;
pub type Path = HslPath<f64>;

pub type Matrix32 = DenseMatrix<f32>;
pub type Model32 = HslModel<f32>;
pub type Config32 = HslConfig<f32>;
pub type Path32 = HslPath<f32>;
