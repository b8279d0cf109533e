//! Simplex-constrained least-squares coding.
//!
//! Every representation in the network is the solution of
//! `min ||D a - x||^2` subject to `a >= 0` and `sum(a) = 1`: the code of a
//! sample is the convex combination of dictionary atoms closest to it.
//! The solver is projected gradient descent with an exact Euclidean
//! projection onto the probability simplex.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::error::{DstlError, Result};

/// Numerical slack allowed below zero in coefficient entries.
pub const FEASIBILITY_EPS: f64 = 1e-10;
/// Allowed deviation of coefficient column sums from one.
pub const COLUMN_SUM_TOL: f64 = 1e-8;
/// Default stopping tolerance of the coding solver (infinity norm of the code change).
pub const DEFAULT_CODING_TOL: f64 = 1e-8;
/// Default iteration cap of the coding solver.
pub const DEFAULT_CODING_MAX_ITER: usize = 2000;

fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// A set of M-dimensional samples stored as the columns of an M x N matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
}

impl FeatureMatrix {
    /// Wraps a matrix after checking that it is non-empty and finite.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(DstlError::InvalidInput(format!(
                "feature matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !all_finite(&data) {
            return Err(DstlError::InvalidInput(
                "feature matrix contains non-finite entries".into(),
            ));
        }
        Ok(Self { data })
    }

    /// Assembles a matrix from equally sized column vectors.
    pub fn from_columns(columns: &[Array1<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(DstlError::InvalidInput("no columns given".into()));
        }
        let m = columns[0].len();
        if columns.iter().any(|c| c.len() != m) {
            return Err(DstlError::DimensionMismatch(
                "columns have differing lengths".into(),
            ));
        }
        let mut data = Array2::zeros((m, columns.len()));
        for (j, col) in columns.iter().enumerate() {
            data.column_mut(j).assign(col);
        }
        Self::new(data)
    }

    /// Feature dimension M.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of samples N.
    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.data.column(j)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }
}

/// An M x K dictionary of atoms, optionally remembering which pool column
/// each atom was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
    source_indices: Option<Vec<usize>>,
}

impl Dictionary {
    /// Builds a dictionary, rejecting degenerate atom sets.
    ///
    /// At least two pairwise distinct atoms are required: coding against
    /// duplicated atoms has no unique solution.
    pub fn new(atoms: Array2<f64>, source_indices: Option<Vec<usize>>) -> Result<Self> {
        let k = atoms.ncols();
        if k < 2 {
            return Err(DstlError::InvalidInput(format!(
                "a dictionary needs at least 2 atoms, got {k}"
            )));
        }
        if atoms.nrows() == 0 {
            return Err(DstlError::InvalidInput("atoms have zero dimension".into()));
        }
        if !all_finite(&atoms) {
            return Err(DstlError::InvalidInput(
                "dictionary contains non-finite entries".into(),
            ));
        }
        for i in 0..k {
            for j in (i + 1)..k {
                let d = squared_distance(atoms.column(i), atoms.column(j));
                if d == 0.0 {
                    return Err(DstlError::InvalidInput(format!(
                        "atoms {i} and {j} are identical"
                    )));
                }
            }
        }
        if let Some(idx) = &source_indices {
            if idx.len() != k {
                return Err(DstlError::DimensionMismatch(format!(
                    "{} source indices for {k} atoms",
                    idx.len()
                )));
            }
        }
        Ok(Self { atoms, source_indices })
    }

    /// Number of atoms K.
    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    /// Dimension M of each atom.
    pub fn input_dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn source_indices(&self) -> Option<&[usize]> {
        self.source_indices.as_deref()
    }
}

/// K x N matrix of simplex-constrained codes: columns are non-negative and
/// sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    codes: Array2<f64>,
}

impl CoefficientMatrix {
    pub fn new(codes: Array2<f64>) -> Result<Self> {
        if codes.nrows() == 0 || codes.ncols() == 0 {
            return Err(DstlError::InvalidInput("empty coefficient matrix".into()));
        }
        for (j, col) in codes.axis_iter(Axis(1)).enumerate() {
            let mut sum = 0.0;
            for &v in col {
                if !v.is_finite() || v < -FEASIBILITY_EPS {
                    return Err(DstlError::InvalidInput(format!(
                        "column {j} violates the non-negativity constraint ({v})"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(DstlError::InvalidInput(format!(
                    "column {j} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { codes })
    }

    /// Number of atoms K (rows).
    pub fn k(&self) -> usize {
        self.codes.nrows()
    }

    /// Number of samples N (columns).
    pub fn n_samples(&self) -> usize {
        self.codes.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.codes.column(j)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.codes
    }

    /// Reinterprets the codes as features for the next layer.
    pub fn into_features(self) -> FeatureMatrix {
        // codes are finite and non-empty by construction
        FeatureMatrix { data: self.codes }
    }
}

pub(crate) fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean projection onto the probability simplex (sort-based).
///
/// Ties in the descending value sort are broken by original index order so
/// the result is deterministic for any input.
pub fn project_onto_simplex(v: &mut Array1<f64>) {
    let k = v.len();
    let mut order: Vec<usize> = (0..k).collect();
    // stable sort: equal values keep their original index order
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        cumsum += v[idx];
        let t = (cumsum - 1.0) / (rank as f64 + 1.0);
        if v[idx] - t > 0.0 {
            theta = t;
        }
    }
    v.mapv_inplace(|x| (x - theta).max(0.0));
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration
/// (50 iterations, relative tolerance 1e-10).
fn largest_eigenvalue(gram: &Array2<f64>) -> f64 {
    let k = gram.nrows();
    let mut v = Array1::from_elem(k, 1.0 / (k as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..50 {
        let w = gram.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm <= f64::MIN_POSITIVE {
            return 0.0;
        }
        let next = v.dot(&w);
        let done = (next - lambda).abs() <= 1e-10 * next.abs().max(1.0);
        lambda = next;
        v = w / norm;
        if done {
            break;
        }
    }
    lambda
}

struct CodingProblem {
    gram: Array2<f64>,
    step: f64,
}

impl CodingProblem {
    fn new(dict: &Dictionary) -> Self {
        let gram = dict.atoms().t().dot(dict.atoms());
        let lipschitz = largest_eigenvalue(&gram);
        Self { gram, step: 1.0 / lipschitz.max(1e-300) }
    }

    /// Projected gradient descent on 1/2 ||D a - x||^2 over the simplex.
    fn solve(&self, dict: &Dictionary, x: ArrayView1<f64>, tol: f64, max_iter: usize) -> Array1<f64> {
        let k = dict.n_atoms();
        let h = dict.atoms().t().dot(&x);
        let mut alpha = Array1::from_elem(k, 1.0 / k as f64);
        for _ in 0..max_iter {
            let grad = self.gram.dot(&alpha) - &h;
            let mut next = &alpha - &(grad * self.step);
            project_onto_simplex(&mut next);
            let change = next
                .iter()
                .zip(alpha.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            alpha = next;
            if change < tol {
                break;
            }
        }
        alpha
    }
}

fn check_sample(dict: &Dictionary, x: ArrayView1<f64>, tol: f64, max_iter: usize) -> Result<()> {
    if x.len() != dict.input_dim() {
        return Err(DstlError::DimensionMismatch(format!(
            "sample has {} entries, dictionary atoms have {}",
            x.len(),
            dict.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DstlError::InvalidInput("sample contains non-finite entries".into()));
    }
    if !(tol > 0.0) {
        return Err(DstlError::InvalidInput(format!("tol must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(DstlError::InvalidInput("max_iter must be at least 1".into()));
    }
    Ok(())
}

/// Codes one sample against the dictionary.
///
/// The result lies on the probability simplex and its squared residual is
/// within `tol` of the constrained optimum on well-conditioned instances.
pub fn code_sample(
    dict: &Dictionary,
    x: ArrayView1<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Array1<f64>> {
    check_sample(dict, x, tol, max_iter)?;
    let problem = CodingProblem::new(dict);
    Ok(problem.solve(dict, x, tol, max_iter))
}

/// Codes every column of `x`. Columns are independent, so they are solved in
/// parallel; column j of the result is bitwise identical to
/// `code_sample(dict, x.column(j), ..)`.
pub fn code_batch(
    dict: &Dictionary,
    x: &FeatureMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<CoefficientMatrix> {
    if x.dim() != dict.input_dim() {
        return Err(DstlError::DimensionMismatch(format!(
            "samples have {} rows, dictionary atoms have {}",
            x.dim(),
            dict.input_dim()
        )));
    }
    if !(tol > 0.0) {
        return Err(DstlError::InvalidInput(format!("tol must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(DstlError::InvalidInput("max_iter must be at least 1".into()));
    }
    let problem = CodingProblem::new(dict);
    let results: Vec<Result<Array1<f64>>> = (0..x.n_samples())
        .into_par_iter()
        .map(|j| {
            let col = x.column(j);
            check_sample(dict, col, tol, max_iter)
                .map_err(|e| DstlError::Column { column: j, source: Box::new(e) })?;
            Ok(problem.solve(dict, col, tol, max_iter))
        })
        .collect();
    let mut codes = Array2::zeros((dict.n_atoms(), x.n_samples()));
    for (j, res) in results.into_iter().enumerate() {
        codes.column_mut(j).assign(&res?);
    }
    CoefficientMatrix::new(codes)
}

/// The approximation `D * A` of the coded samples.
pub fn reconstruct(dict: &Dictionary, coeffs: &CoefficientMatrix) -> Result<FeatureMatrix> {
    if dict.n_atoms() != coeffs.k() {
        return Err(DstlError::DimensionMismatch(format!(
            "dictionary has {} atoms, coefficients have {} rows",
            dict.n_atoms(),
            coeffs.k()
        )));
    }
    FeatureMatrix::new(dict.atoms().dot(coeffs.as_array()))
}

/// Frobenius norm of `D * A - X`.
pub fn residual_norm(dict: &Dictionary, x: &FeatureMatrix, coeffs: &CoefficientMatrix) -> Result<f64> {
    if dict.n_atoms() != coeffs.k() {
        return Err(DstlError::DimensionMismatch(format!(
            "dictionary has {} atoms, coefficients have {} rows",
            dict.n_atoms(),
            coeffs.k()
        )));
    }
    if dict.input_dim() != x.dim() || coeffs.n_samples() != x.n_samples() {
        return Err(DstlError::DimensionMismatch(format!(
            "reconstruction is {}x{}, data is {}x{}",
            dict.input_dim(),
            coeffs.n_samples(),
            x.dim(),
            x.n_samples()
        )));
    }
    let diff = dict.atoms().dot(coeffs.as_array()) - x.as_array();
    Ok(diff.iter().map(|v| v * v).sum::<f64>().sqrt())
}
