//! Symmetric/Hermitian eigendecompositions shared by the classical spectral
//! propagator and the quantum no-jump engine.
//!
//! For every model in the zoo the effective generator G = Σ_k J_k†J_k is a
//! real symmetric matrix (the Hermitian form of the classical master
//! operator), so the real path is the hot one; a complex-Hermitian fallback
//! covers operators with genuinely complex matrix elements.

use crate::error::{Error, Result};
use crate::spin_space::{hermiticity_error, C64};
use nalgebra::{DMatrix, DVector};

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymmetricSpectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl SymmetricSpectrum {
    /// Decompose `m`, verifying symmetry to `sym_tol` (max element).
    pub fn new(m: &DMatrix<f64>, sym_tol: f64) -> Result<Self> {
        let mut dev = 0.0f64;
        for i in 0..m.nrows() {
            for j in 0..i {
                dev = dev.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if dev > sym_tol {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let eig = m.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let n = m.nrows();
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self { values, vectors })
    }

    pub(crate) fn from_parts(values: DVector<f64>, vectors: DMatrix<f64>) -> Self {
        Self { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Coefficients Vᵀ x.
    pub fn to_basis(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        out.gemv_tr(1.0, &self.vectors, x, 0.0);
        out
    }

    /// Reconstruct V c.
    pub fn from_basis(&self, c: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        out.gemv(1.0, &self.vectors, c, 0.0);
        out
    }

    /// Propagate x through exp(s·diag(values)) in the eigenbasis:
    /// V exp(sΛ) Vᵀ x.
    pub fn propagate(&self, x: &DVector<f64>, s: f64) -> DVector<f64> {
        let mut c = self.to_basis(x);
        for (ci, &v) in c.iter_mut().zip(self.values.iter()) {
            *ci *= (s * v).exp();
        }
        self.from_basis(&c)
    }
}

/// Complex coefficient transforms against a real orthogonal basis, splitting
/// real and imaginary parts into f64 gemvs. States produced by the real
/// jump operators of the model zoo have exactly zero imaginary part, which
/// skips half the work.
pub fn to_basis_c64(spectrum: &SymmetricSpectrum, x: &[C64]) -> Vec<C64> {
    let n = spectrum.dim();
    debug_assert_eq!(x.len(), n);
    let re = DVector::from_iterator(n, x.iter().map(|a| a.re));
    let cre = spectrum.to_basis(&re);
    if x.iter().all(|a| a.im == 0.0) {
        return cre.iter().map(|&r| C64::new(r, 0.0)).collect();
    }
    let im = DVector::from_iterator(n, x.iter().map(|a| a.im));
    let cim = spectrum.to_basis(&im);
    cre.iter()
        .zip(cim.iter())
        .map(|(&r, &i)| C64::new(r, i))
        .collect()
}

pub fn from_basis_c64(spectrum: &SymmetricSpectrum, c: &[C64]) -> Vec<C64> {
    let n = spectrum.dim();
    debug_assert_eq!(c.len(), n);
    let re = DVector::from_iterator(n, c.iter().map(|a| a.re));
    let xre = spectrum.from_basis(&re);
    if c.iter().all(|a| a.im == 0.0) {
        return xre.iter().map(|&r| C64::new(r, 0.0)).collect();
    }
    let im = DVector::from_iterator(n, c.iter().map(|a| a.im));
    let xim = spectrum.from_basis(&im);
    xre.iter()
        .zip(xim.iter())
        .map(|(&r, &i)| C64::new(r, i))
        .collect()
}

/// Eigendecomposition of a complex Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianSpectrum {
    values: DVector<f64>,
    vectors: DMatrix<C64>,
}

impl HermitianSpectrum {
    pub fn new(m: &DMatrix<C64>, herm_tol: f64) -> Result<Self> {
        let dev = hermiticity_error(m);
        if dev > herm_tol {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let eig = m.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let n = m.nrows();
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Copy with eigenvalues clamped to be nonnegative (roundoff repair for
    /// PSD operators).
    pub(crate) fn with_clamped_values(self) -> Self {
        Self {
            values: self.values.map(|v| v.max(0.0)),
            vectors: self.vectors,
        }
    }

    /// Coefficients V† x.
    pub fn to_basis(&self, x: &[C64]) -> Vec<C64> {
        let n = self.dim();
        let xv = DVector::from_column_slice(x);
        let mut out = DVector::zeros(n);
        out.gemv_ad(C64::ONE, &self.vectors, &xv, C64::ZERO);
        out.iter().copied().collect()
    }

    pub fn from_basis(&self, c: &[C64]) -> Vec<C64> {
        let cv = DVector::from_column_slice(c);
        let mut out = DVector::zeros(self.dim());
        out.gemv(C64::ONE, &self.vectors, &cv, C64::ZERO);
        out.iter().copied().collect()
    }
}
