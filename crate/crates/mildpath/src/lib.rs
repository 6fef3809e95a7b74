//! Pathwise mild solutions of `du = Au dt + G(u) d omega` for Hölder drivers
//! with exponent in `(1/3, 1/2)`.

pub mod error;
pub mod experiments;
pub mod frac_calc;
pub mod mild_solver;
pub mod nonlinearity;
pub mod paths;
pub mod quadrature;
pub mod spectral;
pub mod tensor_area;

pub use error::{MildError, Result};
