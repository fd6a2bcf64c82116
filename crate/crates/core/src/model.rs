//! One-crossing MLZ model instances: `H(t) = diag(b_1 t, ..., b_N t) + g A`.
//!
//! Models keep their levels in the order they were given. Consumers that need
//! the descending-slope labelling (the closed-form series, the BE formula) call
//! [`MlzModel::reorder_descending`] and map their results back with
//! [`Relabeling`].
//!
//! Slope equality is tested exactly. Nearly degenerate slopes are accepted, but
//! `lambda_jk` grows like `|b_j - b_k|^{-1/2}` and the perturbative series
//! degrades accordingly.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};

/// A validated one-crossing multistate Landau-Zener model.
#[derive(Debug, Clone, PartialEq)]
pub struct MlzModel {
    slopes: Vec<f64>,
    couplings: DMatrix<f64>,
    g: f64,
    label: String,
}

impl MlzModel {
    /// Validates and builds a model. Levels are not reordered.
    pub fn new(slopes: Vec<f64>, couplings: DMatrix<f64>, g: f64) -> Result<Self> {
        let n = slopes.len();
        if n < 2 {
            return Err(Error::DimensionMismatch {
                what: "level count (at least 2)",
                expected: 2,
                found: n,
            });
        }
        if couplings.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "coupling matrix rows",
                expected: n,
                found: couplings.nrows(),
            });
        }
        if couplings.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "coupling matrix columns",
                expected: n,
                found: couplings.ncols(),
            });
        }
        if let Some(bad) = slopes.iter().find(|b| !b.is_finite()) {
            return Err(Error::Domain(format!("slope {bad} is not finite")));
        }
        if couplings.iter().any(|a| !a.is_finite()) {
            return Err(Error::Domain("coupling matrix has non-finite entries".into()));
        }
        if !g.is_finite() {
            return Err(Error::Domain(format!("g = {g} is not finite")));
        }
        for j in 0..n {
            for k in (j + 1)..n {
                if slopes[j] == slopes[k] {
                    return Err(Error::DuplicateSlope {
                        first: j,
                        second: k,
                        slope: slopes[j],
                    });
                }
            }
        }
        for j in 0..n {
            if couplings[(j, j)] != 0.0 {
                return Err(Error::NonzeroDiagonal {
                    level: j,
                    value: couplings[(j, j)],
                });
            }
            for k in (j + 1)..n {
                if couplings[(j, k)] != couplings[(k, j)] {
                    return Err(Error::AsymmetricCoupling {
                        row: j,
                        col: k,
                        upper: couplings[(j, k)],
                        lower: couplings[(k, j)],
                    });
                }
            }
        }
        Ok(Self {
            slopes,
            couplings,
            g,
            label: String::new(),
        })
    }

    /// Builds a model from the row-major upper triangle `A_12, A_13, ..., A_{N-1,N}`.
    pub fn from_upper_triangle(slopes: Vec<f64>, upper: &[f64], g: f64) -> Result<Self> {
        let n = slopes.len();
        let expected = n * n.saturating_sub(1) / 2;
        if upper.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "upper-triangle coupling list",
                expected,
                found: upper.len(),
            });
        }
        let mut a = DMatrix::zeros(n, n);
        let mut it = upper.iter();
        for j in 0..n {
            for k in (j + 1)..n {
                let v = *it.next().expect("length checked above");
                a[(j, k)] = v;
                a[(k, j)] = v;
            }
        }
        Self::new(slopes, a, g)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Same model with a different expansion parameter.
    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn n(&self) -> usize {
        self.slopes.len()
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.couplings
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Slope difference `b_jk = b_j - b_k`.
    pub fn slope_diff(&self, j: usize, k: usize) -> f64 {
        self.slopes[j] - self.slopes[k]
    }

    pub fn is_descending(&self) -> bool {
        self.slopes.windows(2).all(|w| w[0] > w[1])
    }

    /// Smallest `|b_j - b_k|` over distinct pairs.
    pub fn min_slope_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for j in 0..self.n() {
            for k in (j + 1)..self.n() {
                gap = gap.min(self.slope_diff(j, k).abs());
            }
        }
        gap
    }

    /// Upper triangle of the couplings in row-major `(j, k)` order, `j < k`.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for j in 0..n {
            for k in (j + 1)..n {
                out.push(self.couplings[(j, k)]);
            }
        }
        out
    }

    /// Returns the model with slopes strictly descending, together with the
    /// relabeling from original to sorted level indices.
    pub fn reorder_descending(&self) -> Result<(MlzModel, Relabeling)> {
        let n = self.n();
        let mut order: Vec<usize> = (0..n).collect();
        // stable sort keeps the result deterministic; ties are rejected below
        order.sort_by(|&a, &b| self.slopes[b].total_cmp(&self.slopes[a]));
        for w in order.windows(2) {
            if self.slopes[w[0]] == self.slopes[w[1]] {
                let (first, second) = (w[0].min(w[1]), w[0].max(w[1]));
                return Err(Error::DuplicateSlope {
                    first,
                    second,
                    slope: self.slopes[w[0]],
                });
            }
        }
        let slopes = order.iter().map(|&i| self.slopes[i]).collect();
        let couplings = DMatrix::from_fn(n, n, |r, c| self.couplings[(order[r], order[c])]);
        let mut to_sorted = vec![0; n];
        for (sorted, &orig) in order.iter().enumerate() {
            to_sorted[orig] = sorted;
        }
        let model = MlzModel {
            slopes,
            couplings,
            g: self.g,
            label: self.label.clone(),
        };
        Ok((model, Relabeling { to_sorted }))
    }

    /// Applies an arbitrary level permutation: new level `perm[i]` is old level `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<MlzModel> {
        let n = self.n();
        let relabel = Relabeling::new(perm.to_vec())?;
        if relabel.len() != n {
            return Err(Error::DimensionMismatch {
                what: "permutation length",
                expected: n,
                found: perm.len(),
            });
        }
        let inv = relabel.inverse();
        let slopes = (0..n).map(|i| self.slopes[inv[i]]).collect();
        let couplings = DMatrix::from_fn(n, n, |r, c| self.couplings[(inv[r], inv[c])]);
        Ok(MlzModel {
            slopes,
            couplings,
            g: self.g,
            label: self.label.clone(),
        })
    }

    /// `lambda_jk = A_jk sqrt(pi / |b_j - b_k|)`, zero on the diagonal.
    pub fn lambda_matrix(&self) -> LambdaMatrix {
        let n = self.n();
        let values = DMatrix::from_fn(n, n, |j, k| {
            if j == k {
                0.0
            } else {
                self.couplings[(j, k)] * (PI / self.slope_diff(j, k).abs()).sqrt()
            }
        });
        LambdaMatrix { values }
    }

    /// Canonical model-file text; see `docs/model-format.md`.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        s.push_str("# one-crossing MLZ model\n");
        let _ = writeln!(s, "label = {}", toml::Value::String(self.label.clone()));
        let _ = writeln!(s, "n = {}", self.n());
        let _ = writeln!(s, "slopes = {}", float_list(&self.slopes));
        let _ = writeln!(s, "couplings = {}", float_list(&self.upper_triangle()));
        let _ = writeln!(s, "g = {}", float_repr(self.g));
        s
    }

    /// Parses the model-file format; see `docs/model-format.md`.
    pub fn from_file_str(text: &str) -> Result<Self> {
        let raw: RawModelFile = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|r| line_col(text, r.start))
                .unwrap_or((1, 1));
            Error::Parse {
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?;
        if raw.n < 2 {
            return Err(Error::DimensionMismatch {
                what: "level count `n` (at least 2)",
                expected: 2,
                found: raw.n.max(0) as usize,
            });
        }
        let n = raw.n as usize;
        if raw.slopes.len() != n {
            return Err(Error::DimensionMismatch {
                what: "`slopes` length vs `n`",
                expected: n,
                found: raw.slopes.len(),
            });
        }
        let g = raw.g.unwrap_or(1.0);
        let model = match raw.couplings {
            RawCouplings::Upper(upper) => Self::from_upper_triangle(raw.slopes, &upper, g)?,
            RawCouplings::Full(rows) => {
                if rows.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "`couplings` matrix rows vs `n`",
                        expected: n,
                        found: rows.len(),
                    });
                }
                if let Some(row) = rows.iter().find(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch {
                        what: "`couplings` matrix columns vs `n`",
                        expected: n,
                        found: row.len(),
                    });
                }
                let a = DMatrix::from_fn(n, n, |r, c| rows[r][c]);
                Self::new(raw.slopes, a, g)?
            }
        };
        Ok(model.with_label(raw.label.unwrap_or_default()))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelFile {
    n: i64,
    slopes: Vec<f64>,
    couplings: RawCouplings,
    g: Option<f64>,
    label: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawCouplings {
    Upper(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

fn float_repr(x: f64) -> String {
    // Debug formatting is the shortest string that round-trips exactly.
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'i', 'N']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn float_list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|&x| float_repr(x)).collect();
    format!("[{}]", items.join(", "))
}

/// Mapping between original and descending-slope level labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relabeling {
    to_sorted: Vec<usize>,
}

impl Relabeling {
    pub fn new(to_sorted: Vec<usize>) -> Result<Self> {
        let n = to_sorted.len();
        let mut seen = vec![false; n];
        for &i in &to_sorted {
            if i >= n || seen[i] {
                return Err(Error::Index(format!("{to_sorted:?} is not a permutation")));
            }
            seen[i] = true;
        }
        Ok(Self { to_sorted })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            to_sorted: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.to_sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_sorted.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.to_sorted.iter().enumerate().all(|(i, &s)| i == s)
    }

    /// Sorted index of original level `original`.
    pub fn sorted_index(&self, original: usize) -> usize {
        self.to_sorted[original]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.to_sorted
    }

    /// Original index for each sorted position.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.len()];
        for (orig, &sorted) in self.to_sorted.iter().enumerate() {
            inv[sorted] = orig;
        }
        inv
    }

    /// Re-expresses a matrix indexed by sorted labels in original labels.
    pub fn to_original<T: nalgebra::Scalar>(&self, sorted: &DMatrix<T>) -> DMatrix<T> {
        let n = self.len();
        DMatrix::from_fn(n, n, |r, c| {
            sorted[(self.to_sorted[r], self.to_sorted[c])].clone()
        })
    }

    /// Re-expresses a matrix indexed by original labels in sorted labels.
    pub fn to_sorted<T: nalgebra::Scalar>(&self, original: &DMatrix<T>) -> DMatrix<T> {
        let inv = self.inverse();
        let n = self.len();
        DMatrix::from_fn(n, n, |r, c| original[(inv[r], inv[c])].clone())
    }
}

/// The dimensionless couplings `lambda_jk = A_jk sqrt(pi/|b_jk|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMatrix {
    values: DMatrix<f64>,
}

impl LambdaMatrix {
    /// Wraps a raw matrix after checking it is square, symmetric and zero on the diagonal.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "lambda matrix columns",
                expected: n,
                found: values.ncols(),
            });
        }
        for j in 0..n {
            if values[(j, j)] != 0.0 {
                return Err(Error::NonzeroDiagonal {
                    level: j,
                    value: values[(j, j)],
                });
            }
            for k in (j + 1)..n {
                if values[(j, k)] != values[(k, j)] {
                    return Err(Error::AsymmetricCoupling {
                        row: j,
                        col: k,
                        upper: values[(j, k)],
                        lower: values[(k, j)],
                    });
                }
            }
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[(j, k)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// `sum_{l != j} lambda_jl^2`.
    pub fn row_weight(&self, j: usize) -> f64 {
        self.values.row(j).iter().map(|x| x * x).sum()
    }
}
