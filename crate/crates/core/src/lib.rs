//! Spectral analysis of a three-level lattice operator on the truncated Fock
//! space over the 3-torus.

pub mod eigen;
pub mod config;
pub mod error;
pub mod friedrichs;
pub mod grid;
pub mod model;
pub mod optimize;
pub mod spectrum;
pub mod weinberg;

pub use error::{Error, Result};
pub use friedrichs::FriedrichsFamily;
pub use grid::{GridMode, Point, Quadrature, SymPairIndex, TorusGrid};
pub use model::{example_family, ExampleParams, ModelFunctions, PSweep, Regime, RegimeClass};
