//! Perturbative and numerical transition probabilities for one-crossing
//! multistate Landau-Zener models.

pub mod error;
pub mod ladder;
pub mod model;
pub mod models;
pub mod propagator;
pub mod quad;
pub mod series;
pub mod specfun;
pub mod wengine;

pub use error::{Error, Result};
pub use model::{LambdaMatrix, MlzModel, Relabeling};
pub use series::{BeFormula, SeriesCoefficients};
