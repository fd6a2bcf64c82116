//! Closed-form expansion of the transition probabilities through fourth order
//! in `g`, plus the exact Landau-Zener and Brundobler-Elser results used to
//! check it.
//!
//! All coefficient routines take a [`LambdaMatrix`] whose levels are labelled
//! in descending slope order. [`series_for_model`] handles the relabeling for
//! models given in any order.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{LambdaMatrix, MlzModel};

/// Coefficients of `P = I + p2 g² + p3 g³ + p4 g⁴ + O(g⁵)` at `g = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesCoefficients {
    pub p2: DMatrix<f64>,
    pub p3: DMatrix<f64>,
    pub p4: DMatrix<f64>,
}

impl SeriesCoefficients {
    pub fn n(&self) -> usize {
        self.p2.nrows()
    }

    /// Coefficient matrix of order 2, 3 or 4.
    pub fn order(&self, order: usize) -> Option<&DMatrix<f64>> {
        match order {
            2 => Some(&self.p2),
            3 => Some(&self.p3),
            4 => Some(&self.p4),
            _ => None,
        }
    }
}

fn check_pair(lambda: &LambdaMatrix, j: usize, k: usize) -> Result<()> {
    let n = lambda.n();
    if j >= k || k >= n {
        return Err(Error::Index(format!("need j < k < {n}, got j = {j}, k = {k}")));
    }
    Ok(())
}

/// `P_{2,jk} = 2 λ_jk²` for `j < k`.
pub fn p2_offdiag(lambda: &LambdaMatrix, j: usize, k: usize) -> Result<f64> {
    check_pair(lambda, j, k)?;
    Ok(2.0 * lambda.get(j, k).powi(2))
}

/// Interior and exterior two-step sums `Σ λ_jl λ_lk` for `j < l < k` and for
/// `l < j` or `l > k`.
fn two_step_sums(lambda: &LambdaMatrix, j: usize, k: usize) -> (f64, f64) {
    let mut interior = 0.0;
    let mut exterior = 0.0;
    for l in 0..lambda.n() {
        let term = lambda.get(j, l) * lambda.get(l, k);
        if j < l && l < k {
            interior += term;
        } else if l < j || l > k {
            exterior += term;
        }
    }
    (interior, exterior)
}

/// `P_{3,jk} = 2 λ_jk (Σ_interior − Σ_exterior)` for `j < k`.
pub fn p3_offdiag(lambda: &LambdaMatrix, j: usize, k: usize) -> Result<f64> {
    check_pair(lambda, j, k)?;
    let (interior, exterior) = two_step_sums(lambda, j, k);
    Ok(2.0 * lambda.get(j, k) * (interior - exterior))
}

/// Weight of the three-step path `j → l → p → k` in `P_{4,jk}`, by the
/// relative order of the four distinct indices.
///
/// The weight collects the symmetric `B³` term and the real part of the
/// Arctan in `Q`, which is `±π/2` exactly when `|b_jl b_pk| > |b_lp b_jk|`.
/// For descending slopes that inequality depends only on the index order.
fn path_weight(j: usize, k: usize, l: usize, p: usize) -> f64 {
    if p < j && j < k && k < l {
        2.0
    } else if (j < l && l < k && k < p)
        || (j < p && p < k && k < l)
        || (l < j && j < p && p < k)
        || (p < j && j < l && l < k)
    {
        1.0
    } else {
        0.0
    }
}

/// Fourth-order coefficient `P_{4,jk}` for `j < k`.
pub fn p4_offdiag(lambda: &LambdaMatrix, j: usize, k: usize) -> Result<f64> {
    check_pair(lambda, j, k)?;
    let n = lambda.n();
    let lam = |a: usize, b: usize| lambda.get(a, b);
    let ljk = lam(j, k);
    let (interior, exterior) = two_step_sums(lambda, j, k);

    let mut single = 2.0 * ljk * ljk;
    for l in 0..n {
        if l == j || l == k {
            continue;
        }
        let (wj, wk) = (lam(j, l).powi(2), lam(l, k).powi(2));
        single += if l < k { wj } else { 3.0 * wj };
        single += if l > j { wk } else { 3.0 * wk };
    }

    let mut paths = 0.0;
    for l in 0..n {
        if l == j || l == k {
            continue;
        }
        for p in 0..n {
            if p == j || p == k || p == l {
                continue;
            }
            let w = path_weight(j, k, l, p);
            if w != 0.0 {
                paths += w * lam(j, l) * lam(l, p) * lam(p, k);
            }
        }
    }

    Ok(exterior * exterior + interior * interior - ljk * ljk * single - 2.0 * ljk * paths)
}

/// All three coefficient matrices for a descending-slope λ matrix.
pub fn series_matrix(lambda: &LambdaMatrix) -> SeriesCoefficients {
    let n = lambda.n();
    let mut p2 = DMatrix::zeros(n, n);
    let mut p3 = DMatrix::zeros(n, n);
    let mut p4 = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in (j + 1)..n {
            let (a, b, c) = (
                p2_offdiag(lambda, j, k).expect("j < k < n"),
                p3_offdiag(lambda, j, k).expect("j < k < n"),
                p4_offdiag(lambda, j, k).expect("j < k < n"),
            );
            p2[(j, k)] = a;
            p2[(k, j)] = a;
            p3[(j, k)] = b;
            p3[(k, j)] = -b;
            p4[(j, k)] = c;
            p4[(k, j)] = c;
        }
    }
    for j in 0..n {
        let mut s2 = 0.0;
        let mut s4 = 0.0;
        for k in 0..n {
            if k != j {
                s2 += p2[(j, k)];
                s4 += p4[(j, k)];
            }
        }
        p2[(j, j)] = -s2;
        p4[(j, j)] = -s4;
    }
    SeriesCoefficients { p2, p3, p4 }
}

/// Coefficients for a model in its own level labels (levels are sorted
/// internally and the result mapped back).
pub fn series_for_model(model: &MlzModel) -> Result<SeriesCoefficients> {
    let (sorted, relabel) = model.reorder_descending()?;
    let c = series_matrix(&sorted.lambda_matrix());
    if relabel.is_identity() {
        return Ok(c);
    }
    Ok(SeriesCoefficients {
        p2: relabel.to_original(&c.p2),
        p3: relabel.to_original(&c.p3),
        p4: relabel.to_original(&c.p4),
    })
}

/// Truncated series `I + p2 g² + p3 g³ + p4 g⁴`. Values outside `[0, 1]` are
/// returned as they are.
pub fn evaluate_at(coeffs: &SeriesCoefficients, g: f64) -> DMatrix<f64> {
    let n = coeffs.n();
    let (g2, g3, g4) = (g * g, g * g * g, g * g * g * g);
    DMatrix::from_fn(n, n, |j, k| {
        let delta = if j == k { 1.0 } else { 0.0 };
        delta + coeffs.p2[(j, k)] * g2 + coeffs.p3[(j, k)] * g3 + coeffs.p4[(j, k)] * g4
    })
}

/// Brundobler-Elser survival probabilities of the extremal-slope levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeFormula {
    /// Index of the level with the largest slope.
    pub top: usize,
    /// Index of the level with the smallest slope.
    pub bottom: usize,
    /// `Σ_l λ_{top,l}²` at `g = 1`.
    pub top_weight: f64,
    /// `Σ_l λ_{l,bottom}²` at `g = 1`.
    pub bottom_weight: f64,
}

impl BeFormula {
    pub fn p_top(&self, g: f64) -> f64 {
        (-2.0 * g * g * self.top_weight).exp()
    }

    pub fn p_bottom(&self, g: f64) -> f64 {
        (-2.0 * g * g * self.bottom_weight).exp()
    }

    /// Taylor coefficients `(g², g⁴)` of `p_top`.
    pub fn top_taylor(&self) -> (f64, f64) {
        (-2.0 * self.top_weight, 2.0 * self.top_weight.powi(2))
    }

    pub fn bottom_taylor(&self) -> (f64, f64) {
        (-2.0 * self.bottom_weight, 2.0 * self.bottom_weight.powi(2))
    }
}

pub fn be_formula(model: &MlzModel) -> BeFormula {
    let s = model.slopes();
    let mut top = 0;
    let mut bottom = 0;
    for (i, &b) in s.iter().enumerate() {
        if b > s[top] {
            top = i;
        }
        if b < s[bottom] {
            bottom = i;
        }
    }
    let lam = model.lambda_matrix();
    BeFormula {
        top,
        bottom,
        top_weight: lam.row_weight(top),
        bottom_weight: lam.row_weight(bottom),
    }
}

/// Exact two-level Landau-Zener probabilities.
pub fn lz_exact(lambda12: f64, g: f64) -> DMatrix<f64> {
    let stay = (-2.0 * (g * lambda12).powi(2)).exp();
    let hop = -(-2.0 * (g * lambda12).powi(2)).exp_m1();
    DMatrix::from_row_slice(2, 2, &[stay, hop, hop, stay])
}
