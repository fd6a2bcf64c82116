//! Fresnel integrals `C(x) = ∫₀ˣ cos(πt²/2) dt`, `S(x) = ∫₀ˣ sin(πt²/2) dt`.
//!
//! Power series below `x = 1.5`, a complex continued fraction for the
//! complementary error function above it.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

const SERIES_LIMIT: f64 = 1.5;
const MAX_ITER: usize = 200;
const TINY: f64 = 1e-300;

pub fn fresnel_c(x: f64) -> Result<f64> {
    check_domain(x)?;
    Ok(fresnel_pair(x).0)
}

pub fn fresnel_s(x: f64) -> Result<f64> {
    check_domain(x)?;
    Ok(fresnel_pair(x).1)
}

fn check_domain(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Fresnel integral needs x >= 0, got {x}")))
    }
}

/// `(C(x), S(x))` for any real `x`; both functions are odd.
pub fn fresnel_pair(x: f64) -> (f64, f64) {
    if x.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    if x.is_infinite() {
        return (0.5f64.copysign(x), 0.5f64.copysign(x));
    }
    let ax = x.abs();
    let (c, s) = if ax <= SERIES_LIMIT {
        series(ax)
    } else {
        continued_fraction(ax)
    };
    (c.copysign(x), s.copysign(x))
}

fn series(x: f64) -> (f64, f64) {
    // C = Σ (-1)^n (π/2)^{2n} x^{4n+1} / ((2n)! (4n+1)),
    // S = Σ (-1)^n (π/2)^{2n+1} x^{4n+3} / ((2n+1)! (4n+3)).
    let fact = FRAC_PI_2 * x * x;
    let mut term = x;
    let (mut c, mut s) = (x, 0.0);
    let mut sign = 1.0;
    for k in 1..MAX_ITER {
        term *= fact / k as f64;
        let contrib = sign * term / (2 * k + 1) as f64;
        if k % 2 == 1 {
            s += contrib;
            sign = -sign;
        } else {
            c += contrib;
        }
        if term < f64::EPSILON * 1e-2 * c.abs().max(s.abs()).max(x) {
            break;
        }
    }
    (c, s)
}

fn continued_fraction(x: f64) -> (f64, f64) {
    let pix2 = PI * x * x;
    let mut b = Complex64::new(1.0, -pix2);
    let mut cc = Complex64::new(1.0 / TINY, 0.0);
    let mut d = b.inv();
    let mut h = d;
    let mut n = -1.0;
    for _ in 1..MAX_ITER {
        n += 2.0;
        let a = -n * (n + 1.0);
        b += 4.0;
        d = (d * a + b).inv();
        cc = b + cc.inv() * a;
        let del = cc * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < f64::EPSILON {
            break;
        }
    }
    h *= Complex64::new(x, -x);
    let phase = half_pi_square_phase(x);
    let cs = Complex64::new(0.5, 0.5) * (Complex64::new(1.0, 0.0) - Complex64::cis(phase) * h);
    (cs.re, cs.im)
}

/// `πx²/2` reduced modulo 2π without losing the fractional part of `x²/4`.
fn half_pi_square_phase(x: f64) -> f64 {
    let p = x * x;
    let e = x.mul_add(x, -p);
    let quarter = p / 4.0;
    let frac = quarter - quarter.floor() + e / 4.0;
    2.0 * PI * frac
}

/// `∫₀ˢ exp(iωu²) du` for real `ω` and `s`, odd in `s`.
pub fn chirp_integral(omega: f64, s: f64) -> Complex64 {
    if omega == 0.0 {
        return Complex64::new(s, 0.0);
    }
    let w = omega.abs();
    let scale = (PI / (2.0 * w)).sqrt();
    let (c, sv) = fresnel_pair(s / scale);
    scale * Complex64::new(c, sv.copysign(omega))
}

/// `∫₀^∞ exp(iωu²) du = ½√(π/|ω|) e^{iπ sgn(ω)/4}`.
pub fn chirp_integral_infinity(omega: f64) -> Complex64 {
    let w = omega.abs();
    0.5 * (PI / w).sqrt() * Complex64::cis(std::f64::consts::FRAC_PI_4.copysign(omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::GaussPanels;

    fn oracle(x: f64) -> (f64, f64) {
        // composite Gauss-Legendre on the defining integrals
        let panels = GaussPanels::new(30);
        let m = (x * x * 4.0).ceil().max(4.0) as usize;
        let edges: Vec<f64> = (0..=m).map(|i| x * i as f64 / m as f64).collect();
        let c = panels.integrate_real(&edges, |t| (FRAC_PI_2 * t * t).cos());
        let s = panels.integrate_real(&edges, |t| (FRAC_PI_2 * t * t).sin());
        (c, s)
    }

    #[test]
    fn zero_and_reference_values() {
        assert_eq!(fresnel_c(0.0).unwrap(), 0.0);
        assert_eq!(fresnel_s(0.0).unwrap(), 0.0);
        assert!((fresnel_c(1.0).unwrap() - 0.779_893_400_376_822_8).abs() < 1e-13);
        assert!((fresnel_s(1.0).unwrap() - 0.438_259_147_390_354_8).abs() < 1e-13);
    }

    #[test]
    fn negative_argument_is_rejected() {
        assert!(matches!(fresnel_c(-0.1), Err(Error::Domain(_))));
        assert!(matches!(fresnel_s(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn matches_quadrature_oracle() {
        for i in 1..=80 {
            let x = 0.07 * i as f64;
            let (c, s) = fresnel_pair(x);
            let (co, so) = oracle(x);
            assert!((c - co).abs() < 1e-12, "C({x}): {c} vs {co}");
            assert!((s - so).abs() < 1e-12, "S({x}): {s} vs {so}");
        }
    }

    #[test]
    fn asymptote() {
        for &x in &[50.0, 300.0, 1e4] {
            let (c, s) = fresnel_pair(x);
            let ph = half_pi_square_phase(x);
            let c_as = 0.5 + ph.sin() / (PI * x);
            let s_as = 0.5 - ph.cos() / (PI * x);
            assert!((c - c_as).abs() < 1.0 / (x * x * x), "x={x}");
            assert!((s - s_as).abs() < 1.0 / (x * x * x), "x={x}");
        }
        assert_eq!(fresnel_c(f64::INFINITY).unwrap(), 0.5);
    }

    #[test]
    fn chirp_integral_matches_direct_quadrature() {
        let panels = GaussPanels::new(30);
        for &(w, s) in &[(0.7, 2.3), (-1.3, 3.1), (4.0, 0.4), (-0.05, 6.0)] {
            let edges: Vec<f64> = (0..=64).map(|i| s * i as f64 / 64.0).collect();
            let re = panels.integrate_real(&edges, |u| (w * u * u).cos());
            let im = panels.integrate_real(&edges, |u| (w * u * u).sin());
            let z = chirp_integral(w, s);
            assert!((z.re - re).abs() < 1e-12 && (z.im - im).abs() < 1e-12);
        }
        let far = chirp_integral(0.8, 1e3);
        assert!((far - chirp_integral_infinity(0.8)).norm() < 1e-2);
    }
}
