//! Reference models used by the tests, the benchmarks and the CLI examples.

use std::f64::consts::PI;

use crate::model::MlzModel;

/// Two-level model with slopes `(1, −1)` and coupling chosen so that
/// `λ₁₂ = lambda12` at `g = 1`.
pub fn landau_zener(lambda12: f64) -> MlzModel {
    let a = lambda12 / (PI / 2.0).sqrt();
    MlzModel::from_upper_triangle(vec![1.0, -1.0], &[a], 1.0)
        .expect("valid two-level model")
        .with_label("landau-zener")
}

/// Three-level model with `b = (2, 0, −1)` and `A₁₂ = 1`, `A₁₃ = 1.5`, `A₂₃ = 1.8`.
pub fn three_level() -> MlzModel {
    MlzModel::from_upper_triangle(vec![2.0, 0.0, -1.0], &[1.0, 1.5, 1.8], 1.0)
        .expect("valid three-level model")
        .with_label("three-level, b = (2, 0, -1)")
}

/// A four-level model with all-to-all couplings.
pub fn four_state() -> MlzModel {
    MlzModel::from_upper_triangle(
        vec![3.0, 1.2, -0.5, -2.0],
        &[0.8, 0.5, 1.1, 0.9, 0.4, 0.7],
        1.0,
    )
    .expect("valid four-level model")
    .with_label("four-level all-to-all")
}

/// Five-level chain model with slopes `(−b₁, −b₂, 0, b₂, b₁)`, `b₂ > b₁ > 0`.
pub fn five_state(b1: f64, b2: f64, a12: f64, a13: f64, a14: f64) -> MlzModel {
    let upper = [
        a12, a13, a14, 0.0, // row 1
        0.0, 0.0, -a14, // row 2
        0.0, -a13, // row 3
        -a12, // row 4
    ];
    MlzModel::from_upper_triangle(vec![-b1, -b2, 0.0, b2, b1], &upper, 1.0)
        .expect("valid five-level model")
        .with_label("five-level chain")
}

/// [`five_state`] at `b₁ = 1`, `b₂ = 2.5`, `A₁₂ = 0.9`, `A₁₃ = 0.7`, `A₁₄ = 1.1`.
pub fn five_state_example() -> MlzModel {
    five_state(1.0, 2.5, 0.9, 0.7, 1.1)
}

/// All reference models.
pub fn corpus() -> Vec<MlzModel> {
    vec![landau_zener(0.8), three_level(), four_state(), five_state_example()]
}
