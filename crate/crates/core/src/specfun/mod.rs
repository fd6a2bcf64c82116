//! Special functions: Fresnel integrals, branch conventions, the `Q` integral
//! and the resonant limit `R`.

mod branch;
mod fresnel;
mod qint;

pub use branch::{branch_sqrt, principal_arctan};
pub use fresnel::{chirp_integral, chirp_integral_infinity, fresnel_c, fresnel_pair, fresnel_s};
pub use qint::{q_closed_form, q_closed_form_swapped, q_quadrature, resonant_r, QTriple};
