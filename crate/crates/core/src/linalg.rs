//! Dense linear-algebra kernel.
//!
//! Matrices are `nalgebra::DMatrix<f64>` (column-major). Everything here is a
//! pure function of its inputs; nothing caches or mutates shared state.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry admitted by [`SpdMatrix::new`] and [`sym_eig`].
pub const SYMMETRY_RTOL: f64 = 1e-12;

/// Eigenvalues below `-PSD_RTOL * max|eigenvalue|` reject a matrix as not PSD.
pub const PSD_RTOL: f64 = 1e-10;

pub(crate) fn ensure_finite_mat(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_finite_vec(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn relative_asymmetry(m: &Mat) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for j in 0..m.ncols() {
        for i in (j + 1)..m.nrows() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vector,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Mat,
}

impl SymEig {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        &scaled * self.vectors.transpose()
    }

    pub fn reconstruct(&self) -> Mat {
        self.spectral_map(|x| x)
    }
}

pub fn sym_eig(s: &Mat) -> Result<SymEig> {
    if !s.is_square() {
        return Err(Error::mismatch(
            "sym_eig",
            "square matrix",
            format!("{}x{}", s.nrows(), s.ncols()),
        ));
    }
    ensure_finite_mat(s, "sym_eig input")?;
    let asym = relative_asymmetry(s);
    if asym > SYMMETRY_RTOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(sym_eig_unchecked(s))
}

/// Symmetrizes, decomposes and sorts. Caller guarantees symmetry.
pub(crate) fn sym_eig_unchecked(s: &Mat) -> SymEig {
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Mat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    SymEig { values, vectors }
}

/// Symmetric positive semidefinite matrix with its eigendecomposition cached.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    mat: Mat,
    eig: SymEig,
}

impl SpdMatrix {
    pub fn new(mat: Mat) -> Result<Self> {
        let eig = sym_eig(&mat)?;
        let top = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let min = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PSD_RTOL * top.max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveSemidefinite(min));
        }
        Ok(Self { mat, eig })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            mat: Mat::identity(p, p),
            eig: SymEig {
                values: Vector::from_element(p, 1.0),
                vectors: Mat::identity(p, p),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.mat
    }

    pub fn eig(&self) -> &SymEig {
        &self.eig
    }

    /// True when every eigenvalue is strictly positive.
    pub fn is_positive_definite(&self) -> bool {
        self.eig.values.iter().all(|&v| v > 0.0)
    }
}

/// Symmetric PSD square root `R` with `R R = S`.
pub fn spd_sqrt(s: &SpdMatrix) -> Result<Mat> {
    let eig = s.eig();
    let top = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(&neg) = eig.values.iter().find(|&&v| v < -PSD_RTOL * top) {
        return Err(Error::NotPositiveSemidefinite(neg));
    }
    Ok(eig.spectral_map(|v| v.max(0.0).sqrt()))
}

/// Singular values below `max(n, p) * eps * sigma_max` are treated as zero.
pub fn rank_tolerance(nrows: usize, ncols: usize, sigma_max: f64) -> f64 {
    nrows.max(ncols) as f64 * f64::EPSILON * sigma_max
}

/// Moore-Penrose pseudo-inverse via SVD with relative rank truncation.
pub fn pseudo_inverse(x: &Mat) -> Result<Mat> {
    ensure_finite_mat(x, "pseudo_inverse input")?;
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Ok(Mat::zeros(p, n));
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or(Error::Factorization("svd without U"))?;
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or(Error::Factorization("svd without V"))?;
    let sigma_max = svd.singular_values.max();
    let tol = rank_tolerance(n, p, sigma_max);
    let mut out = Mat::zeros(p, n);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            out += (v_t.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    Ok(out)
}

/// Orthogonal projector `X⁺X` onto the row space of `x`.
pub fn row_projector(x: &Mat) -> Result<Mat> {
    Ok(pseudo_inverse(x)? * x)
}

/// Numerical rank with the same truncation rule as [`pseudo_inverse`].
pub fn numerical_rank(x: &Mat) -> usize {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return 0;
    }
    let sv = x.clone().singular_values();
    let tol = rank_tolerance(n, p, sv.max());
    sv.iter().filter(|&&s| s > tol).count()
}

/// Ridge estimate `(XᵀX + λI)⁻¹ Xᵀ y`; `lambda == 0` returns the minimum-norm
/// least-squares solution `X⁺ y`.
///
/// For `p > n` the `n × n` dual system `(XXᵀ + λI) α = y`, `β = Xᵀα` is
/// factored instead of the primal one.
pub fn ridge_solve(x: &Mat, y: &Vector, lambda: f64) -> Result<Vector> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::mismatch("ridge_solve", n, y.len()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("lambda", format!("must be finite and >= 0, got {lambda}")));
    }
    ensure_finite_mat(x, "ridge_solve design")?;
    ensure_finite_vec(y, "ridge_solve response")?;
    if lambda == 0.0 {
        return Ok(pseudo_inverse(x)? * y);
    }
    if p > n {
        let mut gram = x * x.transpose();
        for i in 0..n {
            gram[(i, i)] += lambda;
        }
        let chol = Cholesky::new(gram).ok_or(Error::Factorization("dual ridge system"))?;
        Ok(x.transpose() * chol.solve(y))
    } else {
        let mut gram = x.transpose() * x;
        for i in 0..p {
            gram[(i, i)] += lambda;
        }
        let chol = Cholesky::new(gram).ok_or(Error::Factorization("primal ridge system"))?;
        Ok(chol.solve(&(x.transpose() * y)))
    }
}

/// Dense ridge resolvent `(XᵀX + λI)⁻¹`, `λ > 0`.
pub fn ridge_resolvent(x: &Mat, lambda: f64) -> Result<Mat> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("resolvent needs lambda > 0, got {lambda}")));
    }
    ensure_finite_mat(x, "ridge_resolvent design")?;
    let p = x.ncols();
    let mut gram = x.transpose() * x;
    for i in 0..p {
        gram[(i, i)] += lambda;
    }
    let chol = Cholesky::new(gram).ok_or(Error::Factorization("ridge resolvent"))?;
    Ok(chol.inverse())
}

/// `vᵀ S v`.
pub fn sigma_norm_sq(v: &Vector, s: &SpdMatrix) -> Result<f64> {
    if v.len() != s.dim() {
        return Err(Error::mismatch("sigma_norm_sq", s.dim(), v.len()));
    }
    Ok(v.dot(&(s.as_mat() * v)).max(0.0))
}

/// `uᵀ S v`.
pub fn sigma_inner(u: &Vector, v: &Vector, s: &SpdMatrix) -> Result<f64> {
    if u.len() != s.dim() || v.len() != s.dim() {
        return Err(Error::mismatch(
            "sigma_inner",
            s.dim(),
            format!("{} and {}", u.len(), v.len()),
        ));
    }
    Ok(u.dot(&(s.as_mat() * v)))
}

/// `Tr(Aᵀ S A)`, evaluated as `Σᵢⱼ Aᵢⱼ (SA)ᵢⱼ` so the `k × k` product is never formed.
pub fn sigma_frob_sq(a: &Mat, s: &SpdMatrix) -> Result<f64> {
    if a.nrows() != s.dim() {
        return Err(Error::mismatch("sigma_frob_sq", s.dim(), a.nrows()));
    }
    let sa = s.as_mat() * a;
    Ok(a.dot(&sa).max(0.0))
}

/// Thin SVD of a design matrix restricted to its numerical row space:
/// `X = U diag(s) Vᵀ` with only the right factor kept.
///
/// Computed from the eigendecomposition of the smaller Gram matrix, so an
/// `n × p` design with `n < p` costs one `n × n` symmetric eigenproblem.
/// Gram eigenvalues below `max(n, p) * eps * max` are dropped.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// Nonzero singular values, descending.
    pub singular: Vector,
    /// `p × r`, orthonormal columns spanning `row(X)`.
    pub right: Mat,
}

impl ThinSvd {
    pub fn of_design(x: &Mat) -> Result<Self> {
        ensure_finite_mat(x, "design matrix")?;
        let (n, p) = x.shape();
        if n == 0 {
            return Ok(Self {
                singular: Vector::zeros(0),
                right: Mat::zeros(p, 0),
            });
        }
        if n <= p {
            let eig = sym_eig_unchecked(&(x * x.transpose()));
            let tol = rank_tolerance(n, p, eig.values[0].max(0.0));
            let r = eig.values.iter().take_while(|&&v| v > tol).count();
            let singular = Vector::from_iterator(r, eig.values.iter().take(r).map(|v| v.sqrt()));
            let mut right = x.transpose() * eig.vectors.columns(0, r);
            for (j, mut col) in right.column_iter_mut().enumerate() {
                col /= singular[j];
            }
            Ok(Self { singular, right })
        } else {
            let eig = sym_eig_unchecked(&(x.transpose() * x));
            let tol = rank_tolerance(n, p, eig.values[0].max(0.0));
            let r = eig.values.iter().take_while(|&&v| v > tol).count();
            let singular = Vector::from_iterator(r, eig.values.iter().take(r).map(|v| v.sqrt()));
            Ok(Self {
                singular,
                right: eig.vectors.columns(0, r).into_owned(),
            })
        }
    }

    pub fn rank(&self) -> usize {
        self.singular.len()
    }
}
