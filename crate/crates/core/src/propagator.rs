//! Numerical evolution in the W-picture.
//!
//! `i ∂ₜW = g{Ã(t), W}` with `Ã_jk = A_jk e^{i b_jk t²/2}` and `W(0) = I` is
//! integrated with an adaptive DOP853 pair. The moduli `|W_jk(t)|²` are the
//! finite-time transition probabilities of the symmetric-time evolution
//! from `−t` to `t`; their `t → ∞` limits come from the window ladder.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ladder::{integrate, run_ladder, Dynamics, Ladder, OdeSettings};
use crate::model::MlzModel;
use crate::series::{evaluate_at, SeriesCoefficients};

/// Solver and extrapolation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorSettings {
    /// Target accuracy of the probabilities.
    pub tol: f64,
    /// Relative tolerance of the ODE pair.
    pub rtol: f64,
    /// Absolute tolerance of the ODE pair.
    pub atol: f64,
    /// First window start in `u = t²`; chosen from the model when `None`.
    pub u0: Option<f64>,
    pub min_levels: usize,
    pub max_levels: usize,
    /// Largest acceptable `est_error` before `NoConvergence`.
    pub error_budget: f64,
    pub max_steps: u32,
}

impl PropagatorSettings {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            rtol: (tol * 1e-2).max(1e-14),
            atol: (tol * 1e-4).max(1e-16),
            u0: None,
            min_levels: 4,
            max_levels: 8,
            error_budget: (1e3 * tol).max(1e-6),
            max_steps: 20_000_000,
        }
    }

    fn ode(&self) -> OdeSettings {
        OdeSettings {
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.tol, self.rtol, self.atol, self.error_budget];
        if positive.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "tolerances must be positive and finite: {self:?}"
            )));
        }
        if self.min_levels < 3 || self.max_levels < self.min_levels {
            return Err(Error::InvalidArgument(format!(
                "need 3 <= min_levels <= max_levels, got {} and {}",
                self.min_levels, self.max_levels
            )));
        }
        Ok(())
    }
}

impl Default for PropagatorSettings {
    fn default() -> Self {
        Self::new(1e-10)
    }
}

/// How a [`TransitionMatrix`] was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub g: f64,
    pub u0: f64,
    pub levels: usize,
    pub t_final: f64,
    pub rtol: f64,
    pub atol: f64,
    pub unitarity_deviation: f64,
}

/// Infinite-time transition probabilities `P_jk = |W_jk(∞)|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub values: DMatrix<f64>,
    pub est_error: f64,
    pub metadata: RunMetadata,
}

impl TransitionMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Largest deviation of a row or column sum from one.
    pub fn stochasticity_defect(&self) -> f64 {
        let n = self.n();
        (0..n)
            .flat_map(|i| {
                let r = self.values.row(i).sum() - 1.0;
                let c = self.values.column(i).sum() - 1.0;
                [r.abs(), c.abs()]
            })
            .fold(0.0, f64::max)
    }
}

/// The W-picture equation for a fixed coupling strength.
struct WEquation {
    n: usize,
    slopes: Vec<f64>,
    couplings: DMatrix<f64>,
}

impl WEquation {
    fn new(model: &MlzModel, g: f64) -> Self {
        Self {
            n: model.n(),
            slopes: model.slopes().to_vec(),
            couplings: model.couplings() * g,
        }
    }

    fn a_tilde(&self, t: f64, out: &mut [Complex64]) {
        let n = self.n;
        let phases: Vec<Complex64> = self
            .slopes
            .iter()
            .map(|&b| Complex64::from_polar(1.0, 0.5 * b * t * t))
            .collect();
        for j in 0..n {
            for k in 0..n {
                let a = self.couplings[(j, k)];
                out[j * n + k] = if a == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    phases[j] * phases[k].conj() * a
                };
            }
        }
    }
}

fn unpack(y: &[f64], n: usize) -> Vec<Complex64> {
    (0..n * n).map(|i| Complex64::new(y[2 * i], y[2 * i + 1])).collect()
}

impl Dynamics for WEquation {
    fn dim(&self) -> usize {
        2 * self.n * self.n
    }

    fn obs_dim(&self) -> usize {
        self.n * self.n
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let mut a = vec![Complex64::new(0.0, 0.0); n * n];
        self.a_tilde(t, &mut a);
        let w = unpack(y, n);
        for j in 0..n {
            for k in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for l in 0..n {
                    s += a[j * n + l] * w[l * n + k] + w[j * n + l] * a[l * n + k];
                }
                // dW = −i (ÃW + WÃ)
                dy[2 * (j * n + k)] = s.im;
                dy[2 * (j * n + k) + 1] = -s.re;
            }
        }
    }

    fn observe(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = y[2 * i] * y[2 * i] + y[2 * i + 1] * y[2 * i + 1];
        }
    }
}

fn identity_state(n: usize) -> Vec<f64> {
    let mut y = vec![0.0; 2 * n * n];
    for j in 0..n {
        y[2 * (j * n + j)] = 1.0;
    }
    y
}

fn to_matrix(y: &[f64], n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |j, k| Complex64::new(y[2 * (j * n + k)], y[2 * (j * n + k) + 1]))
}

/// `max_jk |(W†W − I)_jk|`.
pub fn unitarity_deviation(w: &DMatrix<Complex64>) -> f64 {
    let n = w.nrows();
    let prod = w.adjoint() * w;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for k in 0..n {
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((prod[(j, k)] - target).norm());
        }
    }
    worst
}

fn check_unitary(w: &DMatrix<Complex64>, tol: f64) -> Result<f64> {
    let deviation = unitarity_deviation(w);
    let limit = 10.0 * tol;
    if deviation > limit || deviation.is_nan() {
        return Err(Error::NonUnitaryDrift { deviation, limit });
    }
    Ok(deviation)
}

fn has_coupling(model: &MlzModel, g: f64) -> bool {
    g != 0.0 && model.couplings().iter().any(|&a| a != 0.0)
}

/// `W(t_final)` for couplings `g·A`; `model.g()` is ignored.
pub fn propagate(model: &MlzModel, g: f64, t_final: f64, tol: f64) -> Result<DMatrix<Complex64>> {
    propagate_with(model, g, t_final, &PropagatorSettings::new(tol))
}

/// [`propagate`] with explicit solver settings.
pub fn propagate_with(
    model: &MlzModel,
    g: f64,
    t_final: f64,
    settings: &PropagatorSettings,
) -> Result<DMatrix<Complex64>> {
    settings.validate()?;
    if !(t_final > 0.0 && t_final.is_finite()) || !g.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "propagate needs finite g and t_final > 0, got g = {g}, t_final = {t_final}"
        )));
    }
    let n = model.n();
    if !has_coupling(model, g) {
        return Ok(DMatrix::identity(n, n));
    }
    let eq = WEquation::new(model, g);
    let y = integrate(&eq, &identity_state(n), 0.0, t_final, &settings.ode())?;
    let w = to_matrix(&y, n);
    check_unitary(&w, settings.tol)?;
    Ok(w)
}

/// Window start for the ladder: past the transition region and many
/// oscillation periods of the slowest beat.
pub fn default_u0(model: &MlzModel, g: f64) -> f64 {
    let b_min = model.min_slope_gap();
    let a_max = model.couplings().iter().fold(0.0_f64, |m, &a| m.max(a.abs()));
    let ga = g.abs() * a_max;
    (400.0 / b_min).max(100.0 * ga * ga / (b_min * b_min))
}

/// `P(∞)` at couplings `g·A` with tolerance `tol` and default settings.
pub fn probabilities(model: &MlzModel, g: f64, tol: f64) -> Result<TransitionMatrix> {
    probabilities_with(model, g, &PropagatorSettings::new(tol))
}

/// `P(∞)` at couplings `g·A`.
pub fn probabilities_with(
    model: &MlzModel,
    g: f64,
    settings: &PropagatorSettings,
) -> Result<TransitionMatrix> {
    settings.validate()?;
    if !g.is_finite() {
        return Err(Error::InvalidArgument(format!("g must be finite, got {g}")));
    }
    let n = model.n();
    let u0 = settings.u0.unwrap_or_else(|| default_u0(model, g));
    if !has_coupling(model, g) {
        return Ok(TransitionMatrix {
            values: DMatrix::identity(n, n),
            est_error: 0.0,
            metadata: RunMetadata {
                g,
                u0,
                levels: 0,
                t_final: 0.0,
                rtol: settings.rtol,
                atol: settings.atol,
                unitarity_deviation: 0.0,
            },
        });
    }
    let eq = WEquation::new(model, g);
    let ladder = Ladder {
        u0,
        levels: settings.min_levels,
        max_levels: settings.max_levels,
        target: settings.tol,
    };
    let out = run_ladder(&eq, &identity_state(n), &ladder, &settings.ode())?;
    let unitarity = check_unitary(&to_matrix(&out.state, n), settings.tol)?;
    let ladder_error = out.error.iter().fold(0.0_f64, |a, &e| a.max(e));
    let est_error = ladder_error.max(unitarity).max(settings.tol);
    if est_error > settings.error_budget {
        return Err(Error::NoConvergence {
            spread: est_error,
            budget: settings.error_budget,
        });
    }
    Ok(TransitionMatrix {
        values: DMatrix::from_row_slice(n, n, &out.limit),
        est_error,
        metadata: RunMetadata {
            g,
            u0,
            levels: out.window_means.len(),
            t_final: out.t_final,
            rtol: settings.rtol,
            atol: settings.atol,
            unitarity_deviation: unitarity,
        },
    })
}

/// Outcome of the ratio-stability test for one entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Ratios at the two smallest resolved g agree within the band.
    Stable,
    /// Ratios shrink towards small g: the next order vanishes too.
    Vanishing,
    /// Ratios grow towards small g beyond the band.
    Diverging,
    /// Fewer than two g values resolve the residual above the precision floor.
    BelowFloor,
}

impl Verdict {
    pub fn passes(self) -> bool {
        !matches!(self, Verdict::Diverging)
    }
}

/// Residuals of numeric probabilities against a truncated series.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualScan {
    pub g_values: Vec<f64>,
    pub numeric: Vec<TransitionMatrix>,
    pub series: Vec<DMatrix<f64>>,
    pub residuals: Vec<DMatrix<f64>>,
    /// `ΔP/g⁵` off the diagonal, `ΔP/g⁶` on it.
    pub ratios: Vec<DMatrix<f64>>,
    /// `|ΔP| ≤ 100·est_error`: the ratio is dominated by solver noise.
    pub precision_floor: Vec<DMatrix<bool>>,
    pub order: usize,
}

impl ResidualScan {
    pub fn n(&self) -> usize {
        self.series.first().map_or(0, |m| m.nrows())
    }

    /// Power of g dividing the residual of entry `(j, k)`.
    pub fn ratio_power(j: usize, k: usize) -> i32 {
        if j == k {
            6
        } else {
            5
        }
    }

    /// Ratio-stability verdict for entry `(j, k)` with relative band `band`.
    pub fn verdict(&self, j: usize, k: usize, band: f64) -> Verdict {
        let mut resolved = (0..self.g_values.len())
            .filter(|&i| !self.precision_floor[i][(j, k)])
            .map(|i| (self.g_values[i], self.ratios[i][(j, k)]));
        let (Some((_, small)), Some((_, next))) = (resolved.next(), resolved.next()) else {
            return Verdict::BelowFloor;
        };
        if ratio_agrees(small, next, band) {
            Verdict::Stable
        } else if small.abs() <= next.abs() {
            Verdict::Vanishing
        } else {
            Verdict::Diverging
        }
    }

    pub fn all_pass(&self, band: f64) -> bool {
        let n = self.n();
        (0..n).all(|j| (0..n).all(|k| self.verdict(j, k, band).passes()))
    }
}

/// `|a − b| ≤ band·max(|a|, |b|)`.
pub fn ratio_agrees(a: f64, b: f64, band: f64) -> bool {
    (a - b).abs() <= band * a.abs().max(b.abs())
}

/// Numeric probabilities at each g, compared against `coeffs` truncated at
/// fourth order. The g values are sorted ascending; they run in parallel
/// and the output order is fixed.
pub fn residual_scan(
    model: &MlzModel,
    g_values: &[f64],
    coeffs: &SeriesCoefficients,
    settings: &PropagatorSettings,
) -> Result<ResidualScan> {
    if g_values.is_empty() || g_values.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "g values must be finite and non-negative, got {g_values:?}"
        )));
    }
    if coeffs.n() != model.n() {
        return Err(Error::DimensionMismatch {
            what: "series coefficients vs model",
            expected: model.n(),
            found: coeffs.n(),
        });
    }
    let mut gs = g_values.to_vec();
    gs.sort_by(f64::total_cmp);
    let numeric: Vec<TransitionMatrix> = gs
        .par_iter()
        .map(|&g| probabilities_with(model, g, settings))
        .collect::<Result<_>>()?;
    scan_from_numeric(coeffs, numeric)
}

/// Builds a [`ResidualScan`] from propagator results that are already
/// available, in the order given. The g values are taken from the run
/// metadata.
pub fn scan_from_numeric(coeffs: &SeriesCoefficients, numeric: Vec<TransitionMatrix>) -> Result<ResidualScan> {
    let n = coeffs.n();
    if let Some(bad) = numeric.iter().find(|m| m.n() != n) {
        return Err(Error::DimensionMismatch {
            what: "series coefficients vs transition matrix",
            expected: n,
            found: bad.n(),
        });
    }
    let gs: Vec<f64> = numeric.iter().map(|m| m.metadata.g).collect();
    let mut series = Vec::with_capacity(gs.len());
    let mut residuals = Vec::with_capacity(gs.len());
    let mut ratios = Vec::with_capacity(gs.len());
    let mut floor = Vec::with_capacity(gs.len());
    for (&g, num) in gs.iter().zip(&numeric) {
        let s = evaluate_at(coeffs, g);
        let d = &num.values - &s;
        let r = DMatrix::from_fn(n, n, |j, k| d[(j, k)] / g.powi(ResidualScan::ratio_power(j, k)));
        let f = DMatrix::from_fn(n, n, |j, k| d[(j, k)].abs() <= 100.0 * num.est_error);
        series.push(s);
        residuals.push(d);
        ratios.push(r);
        floor.push(f);
    }
    Ok(ResidualScan {
        g_values: gs,
        numeric,
        series,
        residuals,
        ratios,
        precision_floor: floor,
        order: 4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::series::lz_exact;

    #[test]
    fn zero_g_is_below_floor() {
        let m = models::three_level();
        let c = crate::series::series_for_model(&m).unwrap();
        let scan = residual_scan(&m, &[0.0], &c, &PropagatorSettings::default()).unwrap();
        assert!(scan.residuals[0].iter().all(|&d| d == 0.0));
        assert!(scan.precision_floor[0].iter().all(|&f| f));
        assert_eq!(scan.verdict(0, 1, 0.25), Verdict::BelowFloor);
    }

    #[test]
    fn zero_coupling_is_identity() {
        let m = models::three_level();
        let w = propagate(&m, 0.0, 5.0, 1e-10).unwrap();
        assert_eq!(w, DMatrix::identity(3, 3));
        let p = probabilities(&m, 0.0, 1e-10).unwrap();
        assert_eq!(p.values, DMatrix::identity(3, 3));
        assert_eq!(p.est_error, 0.0);
    }

    #[test]
    fn finite_time_stays_unitary() {
        let m = models::four_state();
        let w = propagate(&m, 0.4, 12.0, 1e-10).unwrap();
        assert!(unitarity_deviation(&w) <= 1e-9);
    }

    #[test]
    fn landau_zener_limit() {
        let lam = 0.5;
        let m = models::landau_zener(lam);
        let p = probabilities(&m, 1.0, 1e-10).unwrap();
        let exact = lz_exact(lam, 1.0);
        let dev = (&p.values - &exact).abs().max();
        assert!(dev < 1e-8, "deviation {dev}, est {}", p.est_error);
        assert!(p.stochasticity_defect() < 1e-9);
    }

    #[test]
    fn verdict_classes() {
        assert!(ratio_agrees(1.0, 1.2, 0.25));
        assert!(!ratio_agrees(1.0, 1.5, 0.25));
    }
}
