//! Dense complex matrix helpers shared by every module.
//!
//! Matrix functions of normal matrices go through an eigendecomposition
//! (Hermitian inputs) or a complex Schur form (general normal inputs);
//! non-normal inputs are rejected.

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use num_complex::Complex;

use crate::error::{Result, UlamError};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = Complex { re: 0.0, im: 0.0 };
pub const ONE: C64 = Complex { re: 1.0, im: 0.0 };
pub const I: C64 = Complex { re: 0.0, im: 1.0 };

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e8;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

/// Largest singular value, from the spectrum of `m*m` (or `mm*`).
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = if m.nrows() >= m.ncols() {
        m.adjoint() * m
    } else {
        m * m.adjoint()
    };
    hermitian_part(&g)
        .symmetric_eigenvalues()
        .max()
        .max(0.0)
        .sqrt()
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex::new(0.5, 0.0)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn direct_sum(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = zeros(n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

/// `‖m*m − 1‖`, zero exactly for unitaries.
pub fn unitarity_residual(m: &CMat) -> f64 {
    op_norm(&(m.adjoint() * m - identity(m.ncols())))
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    op_norm(&(m - m.adjoint())) <= tol
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted ascending.
#[derive(Clone, Debug)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermEig {
    pub fn new(h: &CMat) -> Self {
        let n = h.nrows();
        if n == 0 {
            return HermEig {
                values: Vec::new(),
                vectors: CMat::zeros(0, 0),
            };
        }
        let eig = SymmetricEigen::new(hermitian_part(h));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vectors = CMat::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        HermEig { values, vectors }
    }

    /// Reassemble `V f(Λ) V*`.
    pub fn apply(&self, f: impl Fn(f64) -> C64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let c = f(self.values[k]);
            for r in 0..n {
                scaled[(r, k)] *= c;
            }
        }
        hermitian_if_real(scaled * self.vectors.adjoint(), &self.values, &f)
    }

    /// Isometry whose columns span the eigenvectors selected by `keep`.
    pub fn columns_where(&self, keep: impl Fn(f64) -> bool) -> CMat {
        let idx: Vec<usize> = (0..self.values.len())
            .filter(|&k| keep(self.values[k]))
            .collect();
        let mut out = CMat::zeros(self.vectors.nrows(), idx.len());
        for (dst, &src) in idx.iter().enumerate() {
            out.set_column(dst, &self.vectors.column(src));
        }
        out
    }
}

fn hermitian_if_real(m: CMat, values: &[f64], f: &impl Fn(f64) -> C64) -> CMat {
    if values.iter().all(|&v| f(v).im == 0.0) {
        hermitian_part(&m)
    } else {
        m
    }
}

/// Projection onto the eigenspaces of the Hermitian part of `m` with
/// eigenvalue strictly above `threshold`, together with its rank.
pub fn spectral_projection(m: &CMat, threshold: f64) -> (CMat, usize) {
    let eig = HermEig::new(m);
    let v = eig.columns_where(|x| x > threshold);
    let rank = v.ncols();
    (projector(&v), rank)
}

/// `V V*` for an isometry `V`.
pub fn projector(v: &CMat) -> CMat {
    hermitian_part(&(v * v.adjoint()))
}

pub fn sqrt_psd(h: &CMat) -> Result<CMat> {
    let eig = HermEig::new(h);
    if let Some(&min) = eig.values.first() {
        if min <= 0.0 {
            return Err(UlamError::NotPositiveDefinite {
                min_eigenvalue: min,
            });
        }
    }
    Ok(eig.apply(|x| Complex::new(x.sqrt(), 0.0)))
}

/// Unitary polar factor `m (m*m)^{-1/2}`; SVD only for (near) singular `m`.
pub fn polar_unitary(m: &CMat) -> CMat {
    let eig = HermEig::new(&(m.adjoint() * m));
    let (lo, hi) = (eig.values[0], eig.values[eig.values.len() - 1]);
    if lo > 1e-12 * hi.max(f64::MIN_POSITIVE) {
        return m * eig.apply(|x| Complex::new(1.0 / x.sqrt(), 0.0));
    }
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V*");
    u * vt
}

/// Partial isometry `m |m|⁺` restricted to singular values above
/// `threshold`; returns it with its rank.
pub fn partial_isometry(m: &CMat, threshold: f64) -> (CMat, usize) {
    let eig = HermEig::new(&(m.adjoint() * m));
    let t2 = threshold * threshold;
    let keep: Vec<usize> = (0..eig.values.len())
        .filter(|&k| eig.values[k] > t2)
        .collect();
    let mut inv_root = CMat::zeros(m.ncols(), m.ncols());
    for &k in &keep {
        let v = eig.vectors.column(k);
        inv_root += (v * v.adjoint()) * Complex::new(1.0 / eig.values[k].sqrt(), 0.0);
    }
    (m * inv_root, keep.len())
}

pub fn condition_number(m: &CMat) -> f64 {
    let vals = hermitian_part(&(m.adjoint() * m)).symmetric_eigenvalues();
    let (min, max) = (vals.min(), vals.max());
    if min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).sqrt()
    }
}

/// Inverse with condition-number monitoring.
pub fn inverse_checked(m: &CMat, what: &str) -> Result<CMat> {
    let cond = condition_number(m);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(UlamError::Singular {
            what: what.to_string(),
            condition: cond,
        });
    }
    m.clone().lu().try_inverse().ok_or(UlamError::Singular {
        what: what.to_string(),
        condition: cond,
    })
}

/// Schur form `m = Q T Q*` of a normal matrix; T is diagonal up to `tol`.
pub fn normal_eig(m: &CMat, tol: f64) -> Result<(Vec<C64>, CMat)> {
    let n = m.nrows();
    let (q, t) = m.clone().schur().unpack();
    let mut off = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            if r != c {
                off = off.max(t[(r, c)].norm());
            }
        }
    }
    if off > tol {
        return Err(UlamError::NotNormal { residual: off });
    }
    Ok(((0..n).map(|k| t[(k, k)]).collect(), q))
}

/// `f(m)` for a normal matrix.
pub fn normal_function(m: &CMat, tol: f64, f: impl Fn(C64) -> C64) -> Result<CMat> {
    let (vals, q) = normal_eig(m, tol)?;
    let mut scaled = q.clone();
    for (k, &v) in vals.iter().enumerate() {
        let c = f(v);
        for r in 0..q.nrows() {
            scaled[(r, k)] *= c;
        }
    }
    Ok(scaled * q.adjoint())
}

/// `exp(i r h)` for Hermitian `h`.
pub fn exp_i_hermitian(h: &CMat, r: f64) -> CMat {
    let eig = HermEig::new(h);
    eig.apply(|x| Complex::new(0.0, r * x).exp())
}

/// Sign function of a Hermitian matrix; returns it with `‖h − sign(h)‖`.
pub fn hermitian_sign(h: &CMat) -> (CMat, f64) {
    let eig = HermEig::new(h);
    let dist = eig
        .values
        .iter()
        .map(|&x| (x - x.signum()).abs())
        .fold(0.0, f64::max);
    let s = eig.apply(|x| Complex::new(if x >= 0.0 { 1.0 } else { -1.0 }, 0.0));
    (s, dist)
}

pub fn scale(m: &CMat, c: f64) -> CMat {
    m * Complex::new(c, 0.0)
}
