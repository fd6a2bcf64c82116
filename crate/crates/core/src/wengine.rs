//! Perturbative W matrices at finite time.
//!
//! With `B(t) = ∫₀ᵗ Ã` (closed form through Fresnel integrals) the first
//! three orders are
//!
//! * `W₁ = −2iB`
//! * `W₂ = −2B²`
//! * `W₃ = 2i(B³ − ∫₀ᵗ BÃB)`
//!
//! The remaining single integral is done by Gauss-Legendre panels at finite
//! `t` and by an ODE accumulator when `t → ∞` limits are extracted with the
//! window ladder. [`w_n_by_recursion`] integrates the defining recursion
//! directly and serves as a cross-check.

use std::f64::consts::{FRAC_PI_4, SQRT_2};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ladder::{integrate, run_ladder, Dynamics, Ladder, OdeSettings};
use crate::model::{LambdaMatrix, MlzModel};
use crate::quad::GaussPanels;
use crate::specfun::chirp_integral;

type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// `W_n` at a time horizon; `t = None` stands for `t → ∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct WMatrix {
    pub order: usize,
    pub t: Option<f64>,
    pub values: CMatrix,
}

impl WMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// `max |W − (−1)ⁿ W†|`: zero for Hermitian even orders and
    /// anti-Hermitian odd orders.
    pub fn parity_defect(&self) -> f64 {
        let sign = if self.order % 2 == 0 { 1.0 } else { -1.0 };
        let adj = self.values.adjoint();
        (&self.values - adj * Complex64::new(sign, 0.0))
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// Accuracy controls for the finite-time integrals and the ladder limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WSettings {
    pub tol: f64,
    pub max_panels: usize,
    pub rtol: f64,
    pub atol: f64,
    /// First ladder window in `u = t²`; chosen from the slopes when `None`.
    pub u0: Option<f64>,
    pub min_levels: usize,
    pub max_levels: usize,
    /// Largest accepted extrapolation spread.
    pub error_budget: f64,
}

impl WSettings {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            max_panels: 1 << 16,
            rtol: (tol * 1e-2).max(1e-14),
            atol: (tol * 1e-4).max(1e-16),
            u0: None,
            min_levels: 4,
            max_levels: 8,
            error_budget: (1e3 * tol).max(1e-6),
        }
    }

    fn ode(&self) -> OdeSettings {
        OdeSettings::new(self.rtol, self.atol)
    }

    fn ladder(&self, model: &MlzModel) -> Ladder {
        Ladder {
            u0: self.u0.unwrap_or(400.0 / model.min_slope_gap()),
            levels: self.min_levels,
            max_levels: self.max_levels,
            target: self.tol,
        }
    }
}

impl Default for WSettings {
    fn default() -> Self {
        Self::new(1e-10)
    }
}

/// An extrapolated `t → ∞` value with its spread estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Limit<T> {
    pub value: T,
    pub error: f64,
    pub t_final: f64,
}

/// `Ã(t)_jk = A_jk e^{i b_jk t²/2}`.
pub fn a_tilde(model: &MlzModel, t: f64) -> CMatrix {
    let b = model.slopes();
    let a = model.couplings();
    DMatrix::from_fn(model.n(), model.n(), |j, k| {
        if a[(j, k)] == 0.0 {
            ZERO
        } else {
            Complex64::cis(0.5 * (b[j] - b[k]) * t * t) * a[(j, k)]
        }
    })
}

/// `B(t) = ∫₀ᵗ Ã(s) ds` in closed form.
pub fn b_matrix(model: &MlzModel, t: f64) -> CMatrix {
    let n = model.n();
    let b = model.slopes();
    let a = model.couplings();
    let mut m = DMatrix::from_element(n, n, ZERO);
    for j in 0..n {
        for k in (j + 1)..n {
            if a[(j, k)] != 0.0 {
                let v = chirp_integral(0.5 * (b[j] - b[k]), t) * a[(j, k)];
                m[(j, k)] = v;
                m[(k, j)] = v.conj();
            }
        }
    }
    m
}

fn check_horizon(t: f64, tol: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need finite t >= 0 and tol > 0, got t = {t}, tol = {tol}"
        )));
    }
    Ok(())
}

/// `W₁(∞)` for levels labelled in descending slope order.
pub fn w1_infinity(lambda: &LambdaMatrix) -> WMatrix {
    let n = lambda.n();
    let phase = Complex64::cis(FRAC_PI_4);
    let mut m = DMatrix::from_element(n, n, ZERO);
    for j in 0..n {
        for k in (j + 1)..n {
            let v = -I * SQRT_2 * lambda.get(j, k) * phase;
            m[(j, k)] = v;
            m[(k, j)] = -v.conj();
        }
    }
    WMatrix {
        order: 1,
        t: None,
        values: m,
    }
}

/// `W₂(∞) = −2B(∞)²`, with `B_jl(∞) = λ_jl e^{iπ sgn(b_jl)/4}/√2`.
pub fn w2_infinity(lambda: &LambdaMatrix, slopes: &[f64]) -> Result<WMatrix> {
    let n = lambda.n();
    if slopes.len() != n {
        return Err(Error::DimensionMismatch {
            what: "slopes vs lambda matrix",
            expected: n,
            found: slopes.len(),
        });
    }
    let b_inf = DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            ZERO
        } else {
            let s = (slopes[j] - slopes[k]).signum();
            Complex64::cis(FRAC_PI_4 * s) * (lambda.get(j, k) / SQRT_2)
        }
    });
    Ok(WMatrix {
        order: 2,
        t: None,
        values: &b_inf * &b_inf * Complex64::new(-2.0, 0.0),
    })
}

/// `∫₀ᵗ B(s)Ã(s)B(s) ds` by Gauss-Legendre panels, doubled until the
/// largest entry changes by at most `tol`.
pub fn bab_integral(model: &MlzModel, t: f64, settings: &WSettings) -> Result<CMatrix> {
    check_horizon(t, settings.tol)?;
    let n = model.n();
    if t == 0.0 {
        return Ok(DMatrix::from_element(n, n, ZERO));
    }
    let b_max = (0..n)
        .flat_map(|j| (0..n).map(move |k| (j, k)))
        .fold(0.0_f64, |m, (j, k)| m.max(model.slope_diff(j, k).abs()));
    let gl = GaussPanels::new(16);
    let eval = |panels: usize| -> CMatrix {
        let h = t / panels as f64;
        let mut acc = DMatrix::from_element(n, n, ZERO);
        for p in 0..panels {
            for (s, w) in gl.panel(p as f64 * h, (p + 1) as f64 * h) {
                let b = b_matrix(model, s);
                acc += (&b * a_tilde(model, s) * &b) * Complex64::new(w, 0.0);
            }
        }
        acc
    };
    let mut panels = ((b_max * t * t / std::f64::consts::PI).ceil() as usize).max(8);
    let mut prev = eval(panels);
    loop {
        panels *= 2;
        if panels > settings.max_panels {
            return Err(Error::ConvergenceFailure {
                what: "B·Ã·B panel quadrature",
                reached: panels as f64 / 2.0,
                wanted: settings.max_panels as f64,
            });
        }
        let next = eval(panels);
        let change = (&next - &prev).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        let scale = next.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
        if change <= settings.tol.max(64.0 * f64::EPSILON * scale) {
            return Ok(next);
        }
        prev = next;
    }
}

fn w_from_parts(order: usize, b: &CMatrix, bab: Option<&CMatrix>) -> CMatrix {
    let n = b.nrows();
    match order {
        0 => DMatrix::identity(n, n),
        1 => b * Complex64::new(0.0, -2.0),
        2 => b * b * Complex64::new(-2.0, 0.0),
        _ => {
            let cube = b * b * b;
            (cube - bab.expect("order 3 needs the B·Ã·B integral")) * Complex64::new(0.0, 2.0)
        }
    }
}

fn check_order(order: usize, max: usize) -> Result<()> {
    if order > max {
        return Err(Error::InvalidArgument(format!("order must be at most {max}, got {order}")));
    }
    Ok(())
}

/// `W_n(t)` for `n ≤ 3` from the closed-form `B(t)` and, for `n = 3`, the
/// `B·Ã·B` quadrature.
pub fn w_n_finite(model: &MlzModel, order: usize, t: f64, settings: &WSettings) -> Result<WMatrix> {
    check_order(order, 3)?;
    check_horizon(t, settings.tol)?;
    let b = b_matrix(model, t);
    let bab = if order == 3 { Some(bab_integral(model, t, settings)?) } else { None };
    Ok(WMatrix {
        order,
        t: Some(t),
        values: w_from_parts(order, &b, bab.as_ref()),
    })
}

/// Stacked `W₁, W₂, W₃` driven by `W'_{m+1} = −i{Ã, W_m}`, `W₀ = I`.
struct Recursion<'a> {
    model: &'a MlzModel,
    depth: usize,
}

fn unpack(y: &[f64], n: usize) -> CMatrix {
    DMatrix::from_fn(n, n, |j, k| Complex64::new(y[2 * (j * n + k)], y[2 * (j * n + k) + 1]))
}

fn pack(m: &CMatrix, out: &mut [f64]) {
    let n = m.nrows();
    for j in 0..n {
        for k in 0..n {
            out[2 * (j * n + k)] = m[(j, k)].re;
            out[2 * (j * n + k) + 1] = m[(j, k)].im;
        }
    }
}

impl Dynamics for Recursion<'_> {
    fn dim(&self) -> usize {
        2 * self.depth * self.model.n() * self.model.n()
    }

    fn obs_dim(&self) -> usize {
        0
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.model.n();
        let block = 2 * n * n;
        let a = a_tilde(self.model, t);
        let mut lower = DMatrix::identity(n, n);
        for m in 0..self.depth {
            let d = (&a * &lower + &lower * &a) * Complex64::new(0.0, -1.0);
            pack(&d, &mut dy[m * block..(m + 1) * block]);
            lower = unpack(&y[m * block..(m + 1) * block], n);
        }
    }

    fn observe(&self, _t: f64, _y: &[f64], _out: &mut [f64]) {}
}

/// `W_n(t)` by integrating the recursion as an ODE system.
pub fn w_n_by_recursion(
    model: &MlzModel,
    order: usize,
    t: f64,
    settings: &WSettings,
) -> Result<WMatrix> {
    check_order(order, 3)?;
    check_horizon(t, settings.tol)?;
    let n = model.n();
    if order == 0 {
        return Ok(WMatrix {
            order,
            t: Some(t),
            values: DMatrix::identity(n, n),
        });
    }
    let sys = Recursion { model, depth: order };
    let y0 = vec![0.0; sys.dim()];
    let y = integrate(&sys, &y0, 0.0, t, &settings.ode())?;
    let block = 2 * n * n;
    Ok(WMatrix {
        order,
        t: Some(t),
        values: unpack(&y[(order - 1) * block..order * block], n),
    })
}

/// `P_n` from `W₀..W₃`. Order 4 off the diagonal is `|W₂|² + 2 Re(W₁* W₃)`;
/// its diagonal is minus the off-diagonal row sum.
fn p_from_w(order: usize, w: &[CMatrix]) -> DMatrix<f64> {
    let n = w[0].nrows();
    let mut p = DMatrix::from_fn(n, n, |j, k| {
        if order == 4 && j == k {
            return 0.0;
        }
        (0..=order)
            .filter(|&m| m < w.len() && order - m < w.len())
            .map(|m| (w[m][(j, k)] * w[order - m][(j, k)].conj()).re)
            .sum()
    });
    if order == 4 {
        for j in 0..n {
            let row: f64 = (0..n).filter(|&k| k != j).map(|k| p[(j, k)]).sum();
            p[(j, j)] = -row;
        }
    }
    p
}

/// Order-`n` probability coefficients `P_n(t)` for `n ≤ 4`.
pub fn pn_finite(model: &MlzModel, order: usize, t: f64, settings: &WSettings) -> Result<DMatrix<f64>> {
    check_order(order, 4)?;
    check_horizon(t, settings.tol)?;
    let b = b_matrix(model, t);
    let bab = if order >= 3 { Some(bab_integral(model, t, settings)?) } else { None };
    let top = order.min(3);
    let w: Vec<CMatrix> = (0..=top).map(|m| w_from_parts(m, &b, bab.as_ref())).collect();
    Ok(p_from_w(order, &w))
}

/// Accumulates `∫BÃB` and observes `P_order(t)`.
struct PnFlow<'a> {
    model: &'a MlzModel,
    order: usize,
}

impl Dynamics for PnFlow<'_> {
    fn dim(&self) -> usize {
        if self.order >= 3 {
            2 * self.model.n() * self.model.n()
        } else {
            0
        }
    }

    fn obs_dim(&self) -> usize {
        self.model.n() * self.model.n()
    }

    fn rhs(&self, t: f64, _y: &[f64], dy: &mut [f64]) {
        if self.order >= 3 {
            let b = b_matrix(self.model, t);
            pack(&(&b * a_tilde(self.model, t) * &b), dy);
        }
    }

    fn observe(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let n = self.model.n();
        let b = b_matrix(self.model, t);
        let bab = (self.order >= 3).then(|| unpack(y, n));
        let w: Vec<CMatrix> = (0..=self.order.min(3))
            .map(|m| w_from_parts(m, &b, bab.as_ref()))
            .collect();
        let p = p_from_w(self.order, &w);
        for j in 0..n {
            for k in 0..n {
                out[j * n + k] = p[(j, k)];
            }
        }
    }
}

fn ladder_limit<D: Dynamics>(
    dynamics: &D,
    model: &MlzModel,
    settings: &WSettings,
) -> Result<(Vec<f64>, f64, f64)> {
    let y0 = vec![0.0; dynamics.dim()];
    let out = run_ladder(dynamics, &y0, &settings.ladder(model), &settings.ode())?;
    let error = out.error.iter().fold(0.0_f64, |a, &e| a.max(e));
    if error > settings.error_budget {
        return Err(Error::NoConvergence {
            spread: error,
            budget: settings.error_budget,
        });
    }
    Ok((out.limit, error, out.t_final))
}

/// `P_n(∞)` for `n ≤ 4` extrapolated with the window ladder.
pub fn pn_limit(model: &MlzModel, order: usize, settings: &WSettings) -> Result<Limit<DMatrix<f64>>> {
    check_order(order, 4)?;
    let n = model.n();
    let flow = PnFlow { model, order };
    let (values, error, t_final) = ladder_limit(&flow, model, settings)?;
    Ok(Limit {
        value: DMatrix::from_row_slice(n, n, &values),
        error,
        t_final,
    })
}

/// Resonant index quadruple `(j, k, l, p)`: `p = j` or `l = k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadruple {
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub p: usize,
}

impl Quadruple {
    pub fn new(j: usize, k: usize, l: usize, p: usize) -> Self {
        Self { j, k, l, p }
    }

    fn check(&self, n: usize) -> Result<()> {
        let Quadruple { j, k, l, p } = *self;
        if [j, k, l, p].iter().any(|&i| i >= n) || j == k {
            return Err(Error::Index(format!(
                "quadruple ({j}, {k}, {l}, {p}) needs distinct j, k and indices below {n}"
            )));
        }
        if p != j && l != k {
            return Err(Error::NotResonant { j, k, l, p });
        }
        Ok(())
    }
}

/// `T(t) = ∫₀ᵗ Ã_lp B_jl B_pk` with observable `R(t) = 8 Re(B_jk* T)`.
struct ResonantFlow<'a> {
    model: &'a MlzModel,
    q: Quadruple,
}

impl ResonantFlow<'_> {
    fn b(&self, r: usize, c: usize, t: f64) -> Complex64 {
        let a = self.model.couplings()[(r, c)];
        if r == c || a == 0.0 {
            return ZERO;
        }
        chirp_integral(0.5 * self.model.slope_diff(r, c), t) * a
    }
}

impl Dynamics for ResonantFlow<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn rhs(&self, t: f64, _y: &[f64], dy: &mut [f64]) {
        let Quadruple { j, k, l, p } = self.q;
        let a = self.model.couplings()[(l, p)];
        let v = if a == 0.0 {
            ZERO
        } else {
            Complex64::cis(0.5 * self.model.slope_diff(l, p) * t * t) * a * self.b(j, l, t) * self.b(p, k, t)
        };
        dy[0] = v.re;
        dy[1] = v.im;
    }

    fn observe(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let tt = Complex64::new(y[0], y[1]);
        out[0] = 8.0 * (self.b(self.q.j, self.q.k, t).conj() * tt).re;
    }
}

/// `R(t)` on an increasing grid of times.
pub fn resonant_r_trace(
    model: &MlzModel,
    q: Quadruple,
    t_grid: &[f64],
    settings: &WSettings,
) -> Result<Vec<f64>> {
    q.check(model.n())?;
    if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::InvalidArgument("t grid must be non-negative and increasing".into()));
    }
    let flow = ResonantFlow { model, q };
    let mut y = vec![0.0, 0.0];
    let mut t_prev = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        y = integrate(&flow, &y, t_prev, t, &settings.ode())?;
        let mut r = [0.0];
        flow.observe(t, &y, &mut r);
        out.push(r[0]);
        t_prev = t;
    }
    Ok(out)
}

/// `t → ∞` limit of `R(t)` extrapolated with the window ladder.
pub fn resonant_limit_check(model: &MlzModel, q: Quadruple, settings: &WSettings) -> Result<Limit<f64>> {
    q.check(model.n())?;
    let flow = ResonantFlow { model, q };
    let (values, error, t_final) = ladder_limit(&flow, model, settings)?;
    Ok(Limit {
        value: values[0],
        error,
        t_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::series::series_for_model;

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    #[test]
    fn trivial_cases() {
        let m = models::three_level();
        let s = WSettings::new(1e-10);
        let w = w_n_finite(&m, 1, 0.0, &s).unwrap();
        assert!(w.values.iter().all(|z| *z == ZERO));
        let w0 = w_n_finite(&m, 0, 3.0, &s).unwrap();
        assert_eq!(w0.values, DMatrix::identity(3, 3));
        let zero = LambdaMatrix::from_matrix(DMatrix::zeros(3, 3)).unwrap();
        assert!(w1_infinity(&zero).values.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn w1_infinity_modulus() {
        let lam = models::landau_zener(0.7).lambda_matrix();
        let w = w1_infinity(&lam);
        assert!((w.values[(0, 1)].norm() - SQRT_2 * 0.7).abs() < 1e-15);
        assert!(w.parity_defect() < 1e-15);
    }

    #[test]
    fn w2_infinity_entries() {
        let m = models::landau_zener(0.7);
        let w = w2_infinity(&m.lambda_matrix(), m.slopes()).unwrap();
        assert!((w.values[(0, 0)].re + 0.49).abs() < 1e-15);
        assert!(w.values[(0, 1)].norm() < 1e-15);
        let m = models::three_level();
        let lam = m.lambda_matrix();
        let w = w2_infinity(&lam, m.slopes()).unwrap();
        let expect = Complex64::new(0.0, -lam.get(0, 1) * lam.get(1, 2));
        assert!((w.values[(0, 2)] - expect).norm() < 1e-14);
        assert!(w.parity_defect() < 1e-14);
    }

    #[test]
    fn finite_w_matches_recursion() {
        let m = models::three_level();
        let s = WSettings::new(1e-11);
        for &t in &[0.7, 2.5] {
            for order in 1..=3 {
                let a = w_n_finite(&m, order, t, &s).unwrap();
                let b = w_n_by_recursion(&m, order, t, &s).unwrap();
                assert!(max_diff(&a.values, &b.values) < 1e-8, "order {order}, t {t}");
                assert!(a.parity_defect() < 1e-9);
            }
        }
    }

    #[test]
    fn w2_approaches_infinity_value() {
        let m = models::three_level();
        let s = WSettings::new(1e-10);
        let finite = w_n_finite(&m, 2, 400.0, &s).unwrap();
        let inf = w2_infinity(&m.lambda_matrix(), m.slopes()).unwrap();
        assert!(max_diff(&finite.values, &inf.values) < 0.05);
    }

    #[test]
    fn p2_limit_is_series() {
        let m = models::three_level();
        let lim = pn_limit(&m, 2, &WSettings::new(1e-9)).unwrap();
        let c = series_for_model(&m).unwrap();
        assert!((&lim.value - &c.p2).abs().max() < 1e-6);
    }

    #[test]
    fn resonant_quadruple_checks() {
        let m = models::three_level();
        assert!(matches!(
            resonant_limit_check(&m, Quadruple::new(0, 2, 1, 1), &WSettings::default()),
            Err(Error::NotResonant { .. })
        ));
        assert!(matches!(
            resonant_r_trace(&m, Quadruple::new(0, 0, 1, 0), &[1.0], &WSettings::default()),
            Err(Error::Index(_))
        ));
    }
}
