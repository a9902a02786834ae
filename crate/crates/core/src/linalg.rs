//! Sparse and dense linear algebra kernels.
//!
//! Finite element operators live in [`CsrMatrix`], a compressed-row matrix
//! whose sparsity pattern is shared (through an `Arc`) by every operator
//! assembled on the same space, so that mass, stiffness and Newton Jacobians
//! can be combined entrywise. Factorizations are delegated to `faer`; small
//! reduced systems use `nalgebra`.

use std::sync::{Arc, OnceLock};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuRef, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Accum, Conj, Mat, MatRef, Par, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row-compressed sparsity structure with sorted column indices.
pub struct SparsityPattern {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    lu_symbolic: OnceLock<SymbolicLu<usize>>,
}

impl std::fmt::Debug for SparsityPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparsityPattern")
            .field("nrows", &self.nrows)
            .field("ncols", &self.ncols)
            .field("nnz", &self.col_idx.len())
            .finish()
    }
}

impl SparsityPattern {
    /// Builds a pattern from per-row column sets. Columns are sorted and
    /// deduplicated.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut cols in rows {
            cols.sort_unstable();
            cols.dedup();
            debug_assert!(cols.last().is_none_or(|&c| c < ncols));
            col_idx.extend_from_slice(&cols);
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            lu_symbolic: OnceLock::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Position of `(row, col)` in the value array.
    pub fn index_of(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.row_ptr[row];
        self.row(row)
            .binary_search(&col)
            .ok()
            .map(|offset| start + offset)
    }

    // The CSR arrays of A read as CSC arrays describe A^T.
    fn transposed_view(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(
            self.ncols,
            self.nrows,
            &self.row_ptr,
            None,
            &self.col_idx,
        )
    }

    fn symbolic_lu(&self) -> Result<&SymbolicLu<usize>> {
        if let Some(s) = self.lu_symbolic.get() {
            return Ok(s);
        }
        let params = LuSymbolicParams {
            // the automatic choice picks the slower simplicial kernel on small meshes
            supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
            ..Default::default()
        };
        let symbolic = factorize_symbolic_lu(self.transposed_view(), params)
            .map_err(|e| Error::LinearSolve(format!("symbolic LU: {e:?}")))?;
        Ok(self.lu_symbolic.get_or_init(|| symbolic))
    }
}

/// Compressed sparse row matrix over a shared pattern.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    /// Assembles from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        let pattern = Arc::new(SparsityPattern::from_rows(ncols, rows));
        let mut m = Self::zeros(pattern);
        for &(i, j, v) in triplets {
            m.add_at(i, j, v);
        }
        m
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern
            .index_of(row, col)
            .map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to an entry that must exist in the pattern.
    pub fn add_at(&mut self, row: usize, col: usize, v: f64) {
        let k = self
            .pattern
            .index_of(row, col)
            .unwrap_or_else(|| panic!("entry ({row}, {col}) not in sparsity pattern"));
        self.values[k] += v;
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let start = self.pattern.row_ptr[i];
        self.pattern
            .row(i)
            .iter()
            .enumerate()
            .map(move |(o, &j)| (j, self.values[start + o]))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows());
        self.mul_vec_into(x.as_slice(), y.as_mut_slice());
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols());
        assert_eq!(y.len(), self.nrows());
        let p = &self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.values[k] * x[p.col_idx[k]];
            }
            *yi = acc;
        }
    }

    /// `selfᵀ x`
    pub fn transpose_mul_vec(&self, x: &[f64]) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows());
        let p = &self.pattern;
        let mut y = DVector::zeros(self.ncols());
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                y[p.col_idx[k]] += self.values[k] * xi;
            }
        }
        y
    }

    /// `self * b` for a dense right-hand side.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols());
        let mut out = DMatrix::zeros(self.nrows(), b.ncols());
        for c in 0..b.ncols() {
            self.mul_vec_into(b.column(c).as_slice(), out.column_mut(c).as_mut_slice());
        }
        out
    }

    /// `xᵀ A x`
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.mul_vec(x))
    }

    /// `self += alpha * other`, both on the same pattern.
    pub fn add_scaled(&mut self, alpha: f64, other: &CsrMatrix) {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern),
            "add_scaled requires a shared sparsity pattern"
        );
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols());
        for i in 0..self.nrows() {
            for (j, v) in self.row_entries(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// Sparse LU factorization with partial pivoting. The symbolic analysis
    /// is cached on the pattern and reused by later factorizations.
    pub fn lu(&self) -> Result<SparseLu> {
        if self.nrows() != self.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "LU of a {}x{} matrix",
                self.nrows(),
                self.ncols()
            )));
        }
        let symbolic = self.pattern.symbolic_lu()?;
        let mat = SparseColMatRef::new(self.pattern.transposed_view(), &self.values);
        let mut numeric = NumericLu::new();
        let mut buf = MemBuffer::new(symbolic.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default()));
        symbolic
            .factorize_numeric_lu(&mut numeric, mat, Par::Seq, MemStack::new(&mut buf), Default::default())
            .map_err(|e| Error::LinearSolve(format!("numeric LU: {e:?}")))?;
        zero_upper();
        Ok(SparseLu {
            pattern: self.pattern.clone(),
            numeric,
            n: self.nrows(),
        })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu()?.solve(rhs)
    }
}

/// Factorized sparse matrix.
pub struct SparseLu {
    // factors of Aᵀ; see `SparsityPattern::transposed_view`
    pattern: Arc<SparsityPattern>,
    numeric: NumericLu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "rhs of length {} for a system of size {}",
                rhs.len(),
                self.n
            )));
        }
        let symbolic = self.pattern.symbolic_lu()?;
        let lu = LuRef::new_unchecked(symbolic, &self.numeric);
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let mut buf = MemBuffer::new(symbolic.solve_transpose_in_place_scratch::<f64>(1, Par::Seq));
        lu.solve_transpose_in_place_with_conj(Conj::No, x.as_mut(), Par::Seq, MemStack::new(&mut buf));
        zero_upper();
        let out = DVector::from_fn(self.n, |i, _| x[(i, 0)]);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::LinearSolve("non-finite solution".into()))
        }
    }
}

/// faer's AVX kernels can return with the upper halves of the vector
/// registers dirty, which makes every later legacy-SSE instruction of a
/// portable build pay a transition penalty.
#[inline]
fn zero_upper() {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: AVX support was checked at runtime.
        unsafe { std::arch::x86_64::_mm256_zeroupper() }
    }
}

fn as_faer(m: &DMatrix<f64>) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn from_faer(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `aᵀ b`
pub fn gram(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = Mat::<f64>::zeros(a.ncols(), b.ncols());
    faer::linalg::matmul::matmul(
        out.as_mut(),
        Accum::Replace,
        as_faer(a).transpose(),
        as_faer(b),
        1.0,
        Par::Seq,
    );
    zero_upper();
    from_faer(out.as_ref())
}

/// `a b`
pub fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = Mat::<f64>::zeros(a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(
        out.as_mut(),
        Accum::Replace,
        as_faer(a),
        as_faer(b),
        1.0,
        Par::Seq,
    );
    zero_upper();
    from_faer(out.as_ref())
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues in nonincreasing
/// order with matching eigenvector columns.
pub fn symmetric_eigen(c: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = c.nrows();
    if n != c.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            n,
            c.ncols()
        )));
    }
    let evd = as_faer(c)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinearSolve(format!("symmetric eigensolver: {e:?}")))?;
    zero_upper();
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let values: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok((values, vectors))
}

/// Solves a small dense system with partial-pivoting LU.
pub fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::LinearSolve("singular dense matrix".into()))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::LinearSolve("non-finite dense solution".into()))
    }
}

/// Ratio of extreme singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
