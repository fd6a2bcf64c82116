//! Composite Gauss-Legendre quadrature over caller-supplied panel edges.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct GaussPanels {
    pairs: Vec<(f64, f64)>,
}

impl GaussPanels {
    /// Rule with `degree` nodes per panel.
    pub fn new(degree: usize) -> Self {
        let degree = NonZeroUsize::new(degree.max(1)).expect("degree is positive");
        let pairs = GaussLegendre::new(degree).as_node_weight_pairs().to_vec();
        Self { pairs }
    }

    pub fn degree(&self) -> usize {
        self.pairs.len()
    }

    /// Node positions mapped to `[a, b]` with their scaled weights.
    pub fn panel(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.pairs.iter().map(move |&(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate_real<F: FnMut(f64) -> f64>(&self, edges: &[f64], mut f: F) -> f64 {
        let mut total = 0.0;
        for e in edges.windows(2) {
            total += self.panel(e[0], e[1]).map(|(x, w)| w * f(x)).sum::<f64>();
        }
        total
    }

    pub fn integrate_complex<F: FnMut(f64) -> Complex64>(&self, edges: &[f64], mut f: F) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for e in edges.windows(2) {
            for (x, w) in self.panel(e[0], e[1]) {
                total += w * f(x);
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let q = GaussPanels::new(5);
        let v = q.integrate_real(&[0.0, 0.5, 2.0], |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-12);
    }
}
