//! Spectra of block-circulant Hamiltonians by double discrete Fourier
//! transform, plus the dense symmetric eigensolver used for everything else.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ShapeBuilder};
use ndarray_linalg::error::LinalgError;
use ndarray_linalg::{EigValsh, Eigh, UPLO};
use num_complex::Complex64;

use crate::coupling::{BlockCoefficients, Hamiltonian};
use crate::error::{Error, Result};

/// Eigenvalues `e(p, q)` of the torus Hamiltonian in Fourier-order labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct CirculantSpectrum {
    n: usize,
    rings: usize,
    values: Vec<f64>,
    max_imag_residue: f64,
}

impl CirculantSpectrum {
    /// Eigenvalue of ring order `p` and in-ring order `q`.
    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.values[p * self.n + q]
    }

    /// All eigenvalues, `p`-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(p, q, e(p, q))` triples.
    pub fn labelled(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rings).flat_map(move |p| (0..self.n).map(move |q| (p, q, self.get(p, q))))
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn max_imag_residue(&self) -> f64 {
        self.max_imag_residue
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rings, self.n)
    }
}

fn unit_root(order: usize, power: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * (power % order) as f64 / order as f64)
}

/// `e(p,q) = sum_{j,k} exp(2 pi i p j / N) exp(2 pi i q k / n) h[j][k]`.
///
/// Evaluated as two direct one-dimensional transforms (in-ring, then
/// across rings).
pub fn circulant_eigenvalues(h: &BlockCoefficients) -> CirculantSpectrum {
    let n = h.sites_per_ring();
    let rings = h.ring_count();

    let mut inner = vec![Complex64::new(0.0, 0.0); rings * n];
    for j in 0..rings {
        let row = h.row(j);
        for q in 0..n {
            inner[j * n + q] = row
                .iter()
                .enumerate()
                .map(|(k, &v)| unit_root(n, q * k) * v)
                .sum();
        }
    }

    let mut values = Vec::with_capacity(rings * n);
    let mut max_imag_residue = 0.0f64;
    for p in 0..rings {
        for q in 0..n {
            let e: Complex64 = (0..rings).map(|j| unit_root(rings, p * j) * inner[j * n + q]).sum();
            max_imag_residue = max_imag_residue.max(e.im.abs());
            values.push(e.re);
        }
    }
    CirculantSpectrum {
        n,
        rings,
        values,
        max_imag_residue,
    }
}

/// Real cosine form of `e(p, q)`, valid when `h[j] == h[N-j]` and each block
/// is reflection symmetric in `k`.
pub fn symmetric_eigenvalue(h: &BlockCoefficients, p: usize, q: usize) -> f64 {
    let n = h.sites_per_ring();
    let rings = h.ring_count();
    let mut e = 0.0;
    for j in 0..rings {
        let cj = (2.0 * PI * (j * p) as f64 / rings as f64).cos();
        for k in 0..n {
            let ck = (2.0 * PI * (k * q) as f64 / n as f64).cos();
            e += h.get(j, k) * cj * ck;
        }
    }
    e
}

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.eigenvectors.nrows(), self.eigenvectors.ncols(), |r, c| {
            self.eigenvectors[(r, c)] * self.eigenvalues[c]
        });
        scaled * self.eigenvectors.transpose()
    }
}

fn to_lapack(matrix: &DMatrix<f64>) -> Result<Array2<f64>> {
    if !matrix.is_square() {
        return Err(Error::DimensionMismatch {
            expected: matrix.nrows(),
            found: matrix.ncols(),
        });
    }
    let d = matrix.nrows();
    Array2::from_shape_vec((d, d).f(), matrix.as_slice().to_vec())
        .map_err(|e| Error::Numerical(e.to_string()))
}

fn lapack_failure(matrix: &DMatrix<f64>, err: LinalgError) -> Error {
    Error::Convergence(format!(
        "symmetric eigensolver failed on a {}x{} matrix: {err}",
        matrix.nrows(),
        matrix.ncols()
    ))
}

/// Dense symmetric eigensolver (LAPACK `dsyevd`), ascending eigenvalues.
/// Only the lower triangle is read.
pub fn symmetric_eigendecomposition(matrix: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let d = matrix.nrows();
    if d == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let (values, vectors) = to_lapack(matrix)?
        .eigh(UPLO::Lower)
        .map_err(|e| lapack_failure(matrix, e))?;
    Ok(EigenDecomposition {
        eigenvalues: DVector::from_iterator(d, values.iter().copied()),
        eigenvectors: DMatrix::from_fn(d, d, |r, c| vectors[(r, c)]),
    })
}

/// Eigenvalues only, ascending.
pub fn symmetric_eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    if matrix.nrows() == 0 {
        return Ok(Vec::new());
    }
    let values = to_lapack(matrix)?
        .eigvalsh(UPLO::Lower)
        .map_err(|e| lapack_failure(matrix, e))?;
    Ok(values.to_vec())
}

pub fn dense_eigendecomposition(h: &Hamiltonian) -> Result<EigenDecomposition> {
    symmetric_eigendecomposition(h.matrix())
}

/// `max |eigenvalue|`, the quantity behind the short-time validity gate.
pub fn operator_norm_bound(h: &Hamiltonian) -> Result<f64> {
    let values = symmetric_eigenvalues(h.matrix())?;
    Ok(values.iter().fold(0.0f64, |m, e| m.max(e.abs())))
}
