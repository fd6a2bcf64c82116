//! Adaptive integration of real ODE systems and extraction of `t → ∞` limits.
//!
//! Observables of the form `L + Σ c e^{iωu}/u^{a} + d/u + O(u⁻²)` with
//! `u = t²` are averaged against a smooth bump over consecutive windows
//! `[U, 2U]`, `[2U, 4U]`, ...  The bump removes the oscillating part to all
//! algebraic orders, and one Richardson step `2A_{k+1} − A_k` removes the
//! `1/u` drift. The spread of the last two Richardson values is the error
//! estimate.

use std::cell::RefCell;
use std::sync::OnceLock;

use differential_equations::prelude::{Error as OdeError, ExplicitRungeKutta, IVP, ODE};

use crate::error::{Error, Result};
use crate::quad::GaussPanels;

/// A real first-order system `y' = f(t, y)` with observables to average.
pub(crate) trait Dynamics: Sync {
    fn dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
    fn observe(&self, t: f64, y: &[f64], out: &mut [f64]);
}

/// Step-size control for the DOP853 integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeSettings {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: u32,
}

impl OdeSettings {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            max_steps: 5_000_000,
        }
    }
}

/// Window ladder starting at `u0`. At least `levels` windows are used; more
/// are added, up to `max_levels`, while the extrapolation spread exceeds
/// `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ladder {
    pub u0: f64,
    pub levels: usize,
    pub max_levels: usize,
    pub target: f64,
}

impl Ladder {
    pub fn fixed(u0: f64, levels: usize) -> Self {
        Self {
            u0,
            levels,
            max_levels: levels,
            target: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LadderOutcome {
    pub window_means: Vec<Vec<f64>>,
    pub limit: Vec<f64>,
    pub error: Vec<f64>,
    pub t_final: f64,
    pub state: Vec<f64>,
}

fn bump(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        (-1.0 / (x * (1.0 - x))).exp()
    }
}

fn bump_norm() -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    *NORM.get_or_init(|| {
        let edges: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
        GaussPanels::new(40).integrate_real(&edges, bump)
    })
}

struct Wrapped<'a, D: Dynamics> {
    inner: &'a D,
    window: Option<f64>,
    scratch: RefCell<Vec<f64>>,
}

impl<D: Dynamics> ODE<f64, Vec<f64>> for Wrapped<'_, D> {
    fn diff(&self, t: f64, y: &Vec<f64>, dy: &mut Vec<f64>) {
        let n = self.inner.dim();
        self.inner.rhs(t, &y[..n], &mut dy[..n]);
        let m = self.inner.obs_dim();
        let acc = &mut dy[n..];
        match self.window {
            Some(u_start) if !acc.is_empty() => {
                let w = bump((t * t - u_start) / u_start) * 2.0 * t / (u_start * bump_norm());
                if w == 0.0 {
                    acc.iter_mut().for_each(|a| *a = 0.0);
                    return;
                }
                let mut obs = self.scratch.borrow_mut();
                obs.resize(m, 0.0);
                self.inner.observe(t, &y[..n], &mut obs);
                for (a, o) in acc.iter_mut().zip(obs.iter()) {
                    *a = w * o;
                }
            }
            _ => acc.iter_mut().for_each(|a| *a = 0.0),
        }
    }
}

fn map_error(e: OdeError<f64, Vec<f64>>) -> Error {
    match e {
        OdeError::StepSize { t, .. } | OdeError::Stiffness { t, .. } => Error::StepSizeUnderflow { t },
        OdeError::MaxSteps { t, .. } => Error::ConvergenceFailure {
            what: "ODE step budget",
            reached: t,
            wanted: f64::NAN,
        },
        other => Error::InvalidArgument(format!("ODE solver rejected the problem: {other:?}")),
    }
}

/// Integrates `[y, acc]` from `t0` to `t1`; `acc` collects window averages
/// when `window` is set.
fn segment<D: Dynamics>(
    dynamics: &D,
    y: Vec<f64>,
    t0: f64,
    t1: f64,
    window: Option<f64>,
    ode: &OdeSettings,
) -> Result<Vec<f64>> {
    if t1 <= t0 {
        return Ok(y);
    }
    let f = Wrapped {
        inner: dynamics,
        window,
        scratch: RefCell::new(Vec::new()),
    };
    let method = ExplicitRungeKutta::dop853()
        .rtol(ode.rtol)
        .atol(ode.atol)
        .max_steps(ode.max_steps as usize);
    let solution = IVP::ode(&f, t0, t1, y)
        .method(method)
        .t_eval([t1])
        .solve()
        .map_err(map_error)?;
    match solution.last() {
        Ok((&t, v)) if (t - t1).abs() <= 1e-12 * t1.abs().max(1.0) => Ok(v.clone()),
        _ => Err(Error::ConvergenceFailure {
            what: "ODE integration end point",
            reached: solution.t.last().copied().unwrap_or(t0),
            wanted: t1,
        }),
    }
}

/// Integrates the core system alone from `t0` to `t1`.
pub(crate) fn integrate<D: Dynamics>(
    dynamics: &D,
    y0: &[f64],
    t0: f64,
    t1: f64,
    ode: &OdeSettings,
) -> Result<Vec<f64>> {
    segment(dynamics, y0.to_vec(), t0, t1, None, ode)
}

/// Integrates from `t = 0` through the whole ladder and extrapolates the
/// window averages of the observables.
pub(crate) fn run_ladder<D: Dynamics>(
    dynamics: &D,
    y0: &[f64],
    ladder: &Ladder,
    ode: &OdeSettings,
) -> Result<LadderOutcome> {
    if ladder.levels < 3 || ladder.max_levels < ladder.levels || !(ladder.u0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ladder needs 3 <= levels <= max_levels and u0 > 0, got {ladder:?}"
        )));
    }
    let n = dynamics.dim();
    let m = dynamics.obs_dim();
    let mut y = y0.to_vec();
    y.resize(n + m, 0.0);
    let mut t = ladder.u0.sqrt();
    y = segment(dynamics, y, 0.0, t, None, ode)?;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(ladder.max_levels);
    let mut u = ladder.u0;
    loop {
        y[n..].iter_mut().for_each(|a| *a = 0.0);
        let t_next = (2.0 * u).sqrt();
        y = segment(dynamics, y, t, t_next, Some(u), ode)?;
        means.push(y[n..].to_vec());
        t = t_next;
        u *= 2.0;
        if means.len() < ladder.levels {
            continue;
        }
        let (limit, error) = extrapolate(&means);
        let worst = error.iter().fold(0.0_f64, |a, &e| a.max(e));
        if worst <= ladder.target || means.len() >= ladder.max_levels {
            y.truncate(n);
            return Ok(LadderOutcome {
                window_means: means,
                limit,
                error,
                t_final: t,
                state: y,
            });
        }
    }
}

/// Richardson limit from the last two windows and the spread against the
/// previous Richardson value.
fn extrapolate(means: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let k = means.len();
    let rich = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| 2.0 * y - x).collect() };
    let last = rich(&means[k - 2], &means[k - 1]);
    let prev = rich(&means[k - 3], &means[k - 2]);
    let error = last.iter().zip(&prev).map(|(a, b)| (a - b).abs()).collect();
    (last, error)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `y' = cos(ω t²)` so that `y(t) → ½√(π/(2ω))` with a `1/t` oscillating tail.
    struct Chirp {
        omega: f64,
    }

    impl Dynamics for Chirp {
        fn dim(&self) -> usize {
            1
        }
        fn obs_dim(&self) -> usize {
            2
        }
        fn rhs(&self, t: f64, _y: &[f64], dy: &mut [f64]) {
            dy[0] = (self.omega * t * t).cos();
        }
        fn observe(&self, t: f64, y: &[f64], out: &mut [f64]) {
            out[0] = y[0];
            out[1] = y[0] * y[0] + 1.0 / (t * t);
        }
    }

    #[test]
    fn bump_is_normalised() {
        assert!((bump_norm() - 0.007_029_858_406_609_4).abs() < 1e-12);
    }

    #[test]
    fn extrapolates_fresnel_limit() {
        let c = Chirp { omega: 0.5 };
        let ode = OdeSettings::new(1e-13, 1e-15);
        let out = run_ladder(&c, &[0.0], &Ladder::fixed(200.0, 4), &ode).unwrap();
        let exact = 0.5 * (std::f64::consts::PI / (2.0 * 0.5)).sqrt();
        assert!((out.limit[0] - exact).abs() < 1e-10, "{}", out.limit[0] - exact);
        // the squared observable keeps an O(1/u²) drift after one Richardson step
        let dev = (out.limit[1] - exact * exact).abs();
        assert!(dev < 1e-8 && dev <= 2.0 * out.error[1], "{dev} vs {}", out.error[1]);
        assert!(out.error[0] < 1e-8);
    }
}
