//! Branch conventions: `√(−ib)` just below the negative real axis and the
//! principal arctangent with cuts on the imaginary axis beyond `±i`.
//!
//! On the cuts the arctangent takes the value reached by approaching the cut
//! counterclockwise, so `Re Arctan(iy) = +π/2` for `y > 1` and `−π/2` for
//! `y < −1`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// `√(−ib) = √|b| e^{−iπ sgn(b)/4}`.
pub fn branch_sqrt(b: f64) -> Result<Complex64> {
    if b == 0.0 || !b.is_finite() {
        return Err(Error::Domain(format!("branch_sqrt needs finite nonzero b, got {b}")));
    }
    let r = (0.5 * b.abs()).sqrt();
    Ok(Complex64::new(r, -r.copysign(b)))
}

/// Principal inverse tangent.
pub fn principal_arctan(z: Complex64) -> Result<Complex64> {
    let (x, y) = (z.re, z.im);
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Domain(format!("principal_arctan needs a finite argument, got {z}")));
    }
    if y == 0.0 {
        return Ok(Complex64::new(x.atan(), y));
    }
    if x == 0.0 {
        let ay = y.abs();
        if ay == 1.0 {
            return Err(Error::BranchPoint(y));
        }
        if ay < 1.0 {
            return Ok(Complex64::new(0.0, y.atanh()));
        }
        let im = 0.5 * ((1.0 + y).abs() / (1.0 - y).abs()).ln();
        return Ok(Complex64::new(FRAC_PI_2.copysign(y), im));
    }
    let re = 0.5 * (2.0 * x).atan2((1.0 - y) * (1.0 + y) - x * x);
    let im = 0.25 * (4.0 * y / (x * x + (y - 1.0) * (y - 1.0))).ln_1p();
    Ok(Complex64::new(re, im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn branch_sqrt_examples() {
        let s = FRAC_1_SQRT_2;
        assert!(close(branch_sqrt(1.0).unwrap(), Complex64::new(s, -s), 1e-16));
        assert!(close(branch_sqrt(-1.0).unwrap(), Complex64::new(s, s), 1e-16));
        assert!(close(branch_sqrt(4.0).unwrap(), Complex64::new(2.0 * s, -2.0 * s), 1e-15));
        assert!(branch_sqrt(0.0).is_err());
    }

    #[test]
    fn branch_sqrt_squares_back() {
        for i in -200..=200 {
            if i == 0 {
                continue;
            }
            let b = i as f64 * 0.731 + 1e-3 * (i as f64).powi(3);
            let sq = branch_sqrt(b).unwrap().powi(2);
            let ulp = f64::EPSILON * b.abs();
            assert!(sq.re.abs() <= 2.0 * ulp, "b={b}");
            assert!((sq.im + b).abs() <= 2.0 * ulp, "b={b}");
        }
    }

    #[test]
    fn real_axis() {
        assert_eq!(principal_arctan(Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
        assert!((principal_arctan(Complex64::new(1.0, 0.0)).unwrap().re - FRAC_PI_4).abs() < 1e-16);
        for i in -50..=50 {
            let x = i as f64 * 0.37;
            let v = principal_arctan(Complex64::new(x, 0.0)).unwrap();
            assert!((v.re - x.atan()).abs() <= 1e-14 && v.im == 0.0);
        }
    }

    #[test]
    fn imaginary_axis_values() {
        let v = principal_arctan(Complex64::new(0.0, 2.0)).unwrap();
        assert!((v.re - FRAC_PI_2).abs() < 1e-15);
        assert!((v.im - 0.5 * 3f64.ln()).abs() < 1e-15);
        for &y in &[1.5, 3.0, 40.0] {
            assert_eq!(principal_arctan(Complex64::new(0.0, y)).unwrap().re, FRAC_PI_2);
            assert_eq!(principal_arctan(Complex64::new(0.0, -y)).unwrap().re, -FRAC_PI_2);
        }
        for &y in &[0.2, -0.7, 0.999] {
            assert_eq!(principal_arctan(Complex64::new(0.0, y)).unwrap().re, 0.0);
        }
        assert!(matches!(principal_arctan(Complex64::new(0.0, 1.0)), Err(Error::BranchPoint(_))));
        assert!(matches!(principal_arctan(Complex64::new(0.0, -1.0)), Err(Error::BranchPoint(_))));
    }

    #[test]
    fn cut_values_follow_counterclockwise_approach() {
        // rotating counterclockwise, the upper cut is reached from Re z > 0
        // and the lower cut from Re z < 0
        for &y in &[1.2, 2.0, 10.0] {
            let on = principal_arctan(Complex64::new(0.0, y)).unwrap();
            let near = principal_arctan(Complex64::new(1e-12, y)).unwrap();
            assert!(close(on, near, 1e-10));
            let on = principal_arctan(Complex64::new(0.0, -y)).unwrap();
            let near = principal_arctan(Complex64::new(-1e-12, -y)).unwrap();
            assert!(close(on, near, 1e-10));
        }
        let jump = principal_arctan(Complex64::new(-1e-12, 2.0)).unwrap().re;
        assert!((jump + FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn off_axis_matches_log_form() {
        // Arctan z = (i/2)[ln(1 − iz) − ln(1 + iz)] away from the cuts
        let i = Complex64::i();
        for &(x, y) in &[(0.3, 0.4), (-2.0, 1.5), (5.0, -3.0), (-0.1, -0.9), (1.0, 1.0)] {
            let z = Complex64::new(x, y);
            let reference = 0.5 * i * ((1.0 - i * z).ln() - (1.0 + i * z).ln());
            let v = principal_arctan(z).unwrap();
            assert!(close(v, reference, 1e-14), "{z}: {v} vs {reference}");
            assert!(close(v.tan(), z, 1e-12 * z.norm().max(1.0)));
        }
        assert!(principal_arctan(Complex64::new(1e3, 0.0)).unwrap().re < PI / 2.0);
    }
}
