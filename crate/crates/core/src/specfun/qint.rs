//! The triple oscillatory integral
//!
//! `Q(α,β,γ) = ∫₀^∞ ds e^{iαs²} (∫₀ˢ e^{iβs₁²} ds₁)(∫₀ˢ e^{iγs₂²} ds₂)`
//!
//! in closed form and by quadrature, and the resonant limit `R` that replaces
//! it when `α + β = 0` or `α + γ = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::branch::{branch_sqrt, principal_arctan};
use super::fresnel::{chirp_integral, chirp_integral_infinity};
use crate::error::{Error, Result};
use crate::model::LambdaMatrix;
use crate::quad::GaussPanels;

/// Half slope differences `α = b_lp/2`, `β = b_jl/2`, `γ = b_pk/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QTriple {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub resonant: bool,
}

impl QTriple {
    /// Validates a triple. Resonance is detected by exact comparison.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if v == 0.0 || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite and nonzero, got {v}")));
            }
        }
        if !(alpha + beta + gamma > 0.0) {
            return Err(Error::Domain(format!(
                "alpha + beta + gamma must be positive, got {}",
                alpha + beta + gamma
            )));
        }
        let resonant = alpha + beta == 0.0 || alpha + gamma == 0.0;
        Ok(Self {
            alpha,
            beta,
            gamma,
            resonant,
        })
    }

    /// Triple for the index quadruple `(j, k, l, p)` of a model with the given
    /// slopes. Resonance is the index test `p == j || l == k`.
    pub fn from_slopes(slopes: &[f64], j: usize, k: usize, l: usize, p: usize) -> Result<Self> {
        let n = slopes.len();
        if [j, k, l, p].iter().any(|&i| i >= n) {
            return Err(Error::Index(format!(
                "quadruple ({j}, {k}, {l}, {p}) out of range for {n} levels"
            )));
        }
        if l == p || j == l || p == k {
            return Err(Error::Index(format!(
                "quadruple ({j}, {k}, {l}, {p}) has a vanishing slope difference"
            )));
        }
        let mut t = Self::new(
            0.5 * (slopes[l] - slopes[p]),
            0.5 * (slopes[j] - slopes[l]),
            0.5 * (slopes[p] - slopes[k]),
        )?;
        t.resonant = p == j || l == k;
        Ok(t)
    }

    pub fn sigma(&self) -> f64 {
        self.alpha + (self.beta + self.gamma)
    }

    fn resonant_error(&self) -> Error {
        Error::ResonantInput {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    fn swap(&self) -> Self {
        Self {
            beta: self.gamma,
            gamma: self.beta,
            ..*self
        }
    }
}

/// Closed form of `Q` for an off-resonant triple.
pub fn q_closed_form(t: &QTriple) -> Result<Complex64> {
    if t.resonant {
        return Err(t.resonant_error());
    }
    let (a, b, c, s) = (t.alpha, t.beta, t.gamma, t.sigma());
    // The arctangent argument lies on a coordinate axis; build it there exactly
    // so that points on the cuts are recognised as such.
    let quarter_turns = (sign(a) + 1 - sign(b) - sign(c)).rem_euclid(8) / 2;
    let m = ((b * c) / (a * s)).abs().sqrt();
    let w = match quarter_turns % 4 {
        0 => Complex64::new(m, 0.0),
        1 => Complex64::new(0.0, m),
        2 => Complex64::new(-m, 0.0),
        _ => Complex64::new(0.0, -m),
    };
    let atan = principal_arctan(w).map_err(|e| match e {
        Error::BranchPoint(_) => t.resonant_error(),
        other => other,
    })?;
    let theta = if a < 0.0 && a + b > 0.0 && a + c > 0.0 { PI } else { 0.0 };
    let denom = 4.0 * branch_sqrt(a)? * (branch_sqrt(b)? * branch_sqrt(c)?);
    Ok(PI.sqrt() / denom * (atan + theta))
}

fn sign(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else {
        -1
    }
}

const PANEL_DEGREE: usize = 16;
const TAIL_K: f64 = 60.0;
const MAX_PANELS: usize = 1 << 18;

/// `Q` by direct quadrature: Gauss-Legendre panels of equal width in `u = s²`
/// up to a cutoff `S`, and the asymptotic expansion of the integrand beyond it.
/// Panels double until successive estimates agree within `tol`.
pub fn q_quadrature(t: &QTriple, tol: f64) -> Result<Complex64> {
    if t.resonant {
        return Err(t.resonant_error());
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let (a, b, c, s) = (t.alpha, t.beta, t.gamma, t.sigma());
    let freqs = [a.abs(), (a + b).abs(), (a + c).abs(), s, b.abs(), c.abs()];
    let w_min = freqs.iter().cloned().fold(f64::INFINITY, f64::min);
    let w_max = freqs.iter().cloned().fold(0.0, f64::max) + b.abs().max(c.abs());
    let u_max = TAIL_K / w_min;
    let cutoff = u_max.sqrt();

    let tail = asymptotic_tail(a, b, c, cutoff);
    let rule = GaussPanels::new(PANEL_DEGREE);
    let integrand = |x: f64| {
        Complex64::cis(a * x * x) * chirp_integral(b, x) * chirp_integral(c, x)
    };
    let mut panels = ((w_max * u_max / PI).ceil() as usize).max(8);
    let mut prev = head(&rule, u_max, panels, integrand);
    loop {
        panels *= 2;
        if panels > MAX_PANELS {
            return Err(Error::ConvergenceFailure {
                what: "q_quadrature panel refinement",
                reached: f64::NAN,
                wanted: tol,
            });
        }
        let next = head(&rule, u_max, panels, integrand);
        let diff = (next - prev).norm();
        let floor = 64.0 * f64::EPSILON * next.norm().max(1.0) * (panels as f64).sqrt();
        if diff <= tol.max(floor) {
            return Ok(next + tail);
        }
        prev = next;
    }
}

fn head<F: Fn(f64) -> Complex64>(rule: &GaussPanels, u_max: f64, panels: usize, f: F) -> Complex64 {
    let edges: Vec<f64> = (0..=panels)
        .map(|i| (u_max * i as f64 / panels as f64).sqrt())
        .collect();
    rule.integrate_complex(&edges, f)
}

/// Coefficients `a_m` of `∫_s^∞ e^{iβu²} du = e^{iβs²} Σ a_m s^{−(2m+1)}`.
fn tail_coefficients(beta: f64, s: f64) -> Vec<Complex64> {
    let mut out = Vec::new();
    let mut a = Complex64::new(0.0, 0.5 / beta);
    let mut mag = f64::INFINITY;
    for m in 1..200 {
        let size = a.norm() * s.powi(-(2 * m as i32 - 1));
        if size > mag {
            break;
        }
        out.push(a);
        mag = size;
        if size < 1e-20 * out[0].norm() / s {
            break;
        }
        a *= (2 * m - 1) as f64 / Complex64::new(0.0, 2.0 * beta);
    }
    out
}

/// `∫_S^∞ e^{iΩs²} s^{−p} ds` by repeated integration by parts.
fn tail_moment(omega: f64, p: i32, s: f64) -> Complex64 {
    let step = Complex64::new(0.0, 2.0 * omega);
    let mut c = Complex64::new(1.0, 0.0);
    let mut total = Complex64::new(0.0, 0.0);
    let mut last = f64::INFINITY;
    for r in 0..200 {
        if r > 0 {
            c *= (p + 2 * r - 1) as f64 / step;
        }
        let term = c * s.powi(-p - 1 - 2 * r);
        if term.norm() > last {
            break;
        }
        total += term;
        last = term.norm();
        if last < 1e-20 * total.norm() {
            break;
        }
    }
    -Complex64::cis(omega * s * s) / step * total
}

fn asymptotic_tail(a: f64, b: f64, c: f64, s: f64) -> Complex64 {
    let fb = chirp_integral_infinity(b);
    let fc = chirp_integral_infinity(c);
    let gb = tail_coefficients(b, s);
    let gc = tail_coefficients(c, s);
    let mut total = fb * fc * tail_moment(a, 0, s);
    for (m, am) in gc.iter().enumerate() {
        total -= fb * am * tail_moment(a + c, 2 * m as i32 + 1, s);
    }
    for (m, am) in gb.iter().enumerate() {
        total -= fc * am * tail_moment(a + b, 2 * m as i32 + 1, s);
    }
    for (m, am) in gb.iter().enumerate() {
        for (n, an) in gc.iter().enumerate() {
            total += am * an * tail_moment(a + b + c, 2 * (m + n) as i32 + 2, s);
        }
    }
    total
}

/// Limit of the resonant contribution to `P_{4,jk}` for the quadruple
/// `(j, k, l, p)`, `j < k`, with `p = j` or `l = k`.
pub fn resonant_r(
    lambda: &LambdaMatrix,
    slopes: &[f64],
    j: usize,
    k: usize,
    l: usize,
    p: usize,
) -> Result<f64> {
    let n = lambda.n();
    if slopes.len() != n {
        return Err(Error::DimensionMismatch {
            what: "slopes vs lambda matrix",
            expected: n,
            found: slopes.len(),
        });
    }
    if [j, k, l, p].iter().any(|&i| i >= n) || j >= k {
        return Err(Error::Index(format!(
            "quadruple ({j}, {k}, {l}, {p}) needs j < k < {n} and l, p < {n}"
        )));
    }
    let sgn = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    let ljk2 = lambda.get(j, k).powi(2);
    match (p == j, l == k) {
        (true, true) => Ok(0.0),
        (true, false) => Ok(sgn(slopes[l] - slopes[k]) * ljk2 * lambda.get(j, l).powi(2)),
        (false, true) => Ok(sgn(slopes[j] - slopes[p]) * ljk2 * lambda.get(p, k).powi(2)),
        (false, false) => Err(Error::NotResonant { j, k, l, p }),
    }
}

/// `Q(α,β,γ)` and `Q(α,γ,β)` agree; exposed for callers that want the check.
pub fn q_closed_form_swapped(t: &QTriple) -> Result<Complex64> {
    q_closed_form(&t.swap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MlzModel;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn equal_parameters_reference() {
        for &a in &[0.3, 1.0, 2.5] {
            let t = QTriple::new(a, a, a).unwrap();
            let q = q_closed_form(&t).unwrap();
            let expected = PI.powf(1.5) / 24.0 * Complex64::cis(3.0 * FRAC_PI_4) * a.powf(-1.5);
            assert!((q - expected).norm() < 1e-14, "{q} vs {expected}");
        }
        let t = QTriple::new(1.0, 1.0, 1.0).unwrap();
        let qq = q_quadrature(&t, 1e-9).unwrap();
        assert!((qq - q_closed_form(&t).unwrap()).norm() < 1e-6);
    }

    #[test]
    fn resonant_inputs_are_rejected() {
        let t = QTriple::new(1.0, -1.0, 3.0).unwrap();
        assert!(t.resonant);
        assert!(matches!(q_closed_form(&t), Err(Error::ResonantInput { .. })));
        assert!(matches!(q_quadrature(&t, 1e-8), Err(Error::ResonantInput { .. })));
        assert!(QTriple::new(1.0, 0.0, 1.0).is_err());
        assert!(QTriple::new(-3.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn theta_region_needs_the_pi_term() {
        let t = QTriple::new(-1.0, 3.0, 2.0).unwrap();
        let closed = q_closed_form(&t).unwrap();
        let quad = q_quadrature(&t, 1e-9).unwrap();
        assert!((closed - quad).norm() < 1e-6, "{closed} vs {quad}");
        let without = closed - PI.sqrt() * PI
            / (4.0 * branch_sqrt(-1.0).unwrap() * branch_sqrt(3.0).unwrap() * branch_sqrt(2.0).unwrap());
        assert!((without - quad).norm() > 0.1);
    }

    #[test]
    fn beta_gamma_symmetry_is_exact() {
        for &(a, b, c) in &[(0.7, -0.2, 1.9), (-1.0, 3.0, 2.0), (2.0, -0.5, -0.4)] {
            let t = QTriple::new(a, b, c).unwrap();
            assert_eq!(q_closed_form(&t).unwrap(), q_closed_form_swapped(&t).unwrap());
        }
    }

    #[test]
    fn quadrature_matches_closed_form_over_sign_patterns() {
        let cases = [
            (1.0, 2.0, 0.5),
            (1.0, -0.3, 0.6),
            (1.0, 0.6, -0.3),
            (1.0, -0.4, -0.2),
            (-0.5, 1.2, 1.1),
            (-0.5, 2.0, 0.3),
            (-0.5, 0.3, 2.0),
            (-2.0, 1.5, 3.0),
            (0.4, -1.5, 2.0),
        ];
        for &(a, b, c) in &cases {
            let t = QTriple::new(a, b, c).unwrap();
            let closed = q_closed_form(&t).unwrap();
            let quad = q_quadrature(&t, 1e-8).unwrap();
            assert!((closed - quad).norm() < 1e-6, "({a},{b},{c}): {closed} vs {quad}");
        }
    }

    #[test]
    fn index_resonance_is_exact() {
        let slopes = [2.0, 0.0, -1.0];
        let t = QTriple::from_slopes(&slopes, 0, 2, 1, 0).unwrap();
        assert!(t.resonant);
        let t = QTriple::from_slopes(&slopes, 0, 2, 2, 1).unwrap();
        assert!(t.resonant);
        assert!(QTriple::from_slopes(&slopes, 0, 2, 1, 1).is_err());
    }

    #[test]
    fn resonant_r_cases() {
        let m = MlzModel::from_upper_triangle(vec![2.0, 0.0, -1.0], &[1.0, 1.5, 1.8], 1.0).unwrap();
        let lam = m.lambda_matrix();
        let s = m.slopes();
        assert_eq!(resonant_r(&lam, s, 0, 2, 2, 0).unwrap(), 0.0);
        let r = resonant_r(&lam, s, 0, 2, 1, 0).unwrap();
        assert_eq!(r, lam.get(0, 2).powi(2) * lam.get(0, 1).powi(2));
        let r = resonant_r(&lam, s, 0, 1, 2, 0).unwrap();
        assert_eq!(r, -lam.get(0, 1).powi(2) * lam.get(0, 2).powi(2));
        assert!(matches!(resonant_r(&lam, s, 0, 2, 1, 1), Err(Error::NotResonant { .. })));
        assert!(matches!(resonant_r(&lam, s, 2, 0, 1, 2), Err(Error::Index(_))));
    }
}
