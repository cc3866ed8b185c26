//! Hermite–Galerkin laboratory for trace criteria of quadratic operator pencils
//! `I − 2λB + λ²A` attached to `−Δ + P(x)²`.

pub mod acceptance;
pub mod basis;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod pencil;
pub mod polynomial;
pub mod problem;
pub mod symbolcalc;
pub mod traces;

pub use error::{LabError, Result};
