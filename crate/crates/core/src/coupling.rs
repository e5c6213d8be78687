//! Single-exciton Hamiltonians, static disorder and the inter-ring
//! coefficient table of the block-circulant idealization.
//!
//! Energies are in units of the coupling strength `J` and the mean site
//! energy is shifted to zero, so the diagonal carries only disorder offsets.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{require_odd, SiteLattice};

/// Isotropic inverse-cube coupling `J / r^3`.
///
/// Dipole orientation is ignored; an anisotropic law would replace
/// [`CouplingKernel::coupling`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingKernel {
    pub strength: f64,
}

impl Default for CouplingKernel {
    fn default() -> Self {
        CouplingKernel { strength: 1.0 }
    }
}

impl CouplingKernel {
    pub fn new(strength: f64) -> Result<Self> {
        if !(strength.is_finite() && strength > 0.0) {
            return Err(Error::invalid("J", format!("must be positive, got {strength}")));
        }
        Ok(CouplingKernel { strength })
    }

    #[inline]
    pub fn coupling(&self, distance: f64) -> f64 {
        self.strength / (distance * distance * distance)
    }
}

/// Gaussian on-site energy disorder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl DisorderSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid("disorder.sigma", format!("must be >= 0, got {sigma}")));
        }
        Ok(DisorderSpec { sigma, seed })
    }
}

/// `size` uncorrelated normal offsets with standard deviation `spec.sigma`.
pub fn sample_disorder(spec: &DisorderSpec, size: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sample_disorder_with(&mut rng, spec.sigma, size)
}

pub fn sample_disorder_with<R: Rng + ?Sized>(rng: &mut R, sigma: f64, size: usize) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; size];
    }
    (0..size)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Dense real-symmetric single-exciton Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    matrix: DMatrix<f64>,
    offsets: Vec<f64>,
}

impl Hamiltonian {
    /// Wraps a symmetric matrix; the diagonal is taken as the site offsets.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let scale = matrix.amax().max(1.0);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::invalid(
                "hamiltonian",
                format!("matrix is not symmetric (max asymmetry {asym:e})"),
            ));
        }
        let offsets = matrix.diagonal().iter().copied().collect();
        Ok(Hamiltonian { matrix, offsets })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn diagonal_offsets(&self) -> &[f64] {
        &self.offsets
    }
}

/// Couples every pair of sites through `kernel`; `offsets` fill the diagonal.
pub fn assemble_hamiltonian(
    lat: &SiteLattice,
    kernel: &CouplingKernel,
    offsets: Option<&[f64]>,
) -> Result<Hamiltonian> {
    let dim = lat.len();
    let offsets = match offsets {
        Some(o) if o.len() != dim => {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: o.len(),
            })
        }
        Some(o) => o.to_vec(),
        None => vec![0.0; dim],
    };
    let pos = lat.positions();
    let mut matrix = DMatrix::zeros(dim, dim);
    for m in 0..dim {
        matrix[(m, m)] = offsets[m];
        for r in (m + 1)..dim {
            let v = kernel.coupling((pos[m] - pos[r]).norm());
            matrix[(m, r)] = v;
            matrix[(r, m)] = v;
        }
    }
    Ok(Hamiltonian { matrix, offsets })
}

/// Inter-ring coupling table `h[j][k]`: ring offset `j in 0..N`, in-ring
/// offset `k in 0..n`, in the torus convention `h[j] == h[N - j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCoefficients {
    n: usize,
    rings: usize,
    spacing: f64,
    table: Vec<f64>,
}

impl BlockCoefficients {
    /// Table from raw rows (`rings` rows of `n` entries each).
    pub fn from_table(n: usize, rings: usize, spacing: f64, table: Vec<f64>) -> Result<Self> {
        if n == 0 || rings == 0 {
            return Err(Error::invalid("n, N", "must be at least 1"));
        }
        if table.len() != n * rings {
            return Err(Error::DimensionMismatch {
                expected: n * rings,
                found: table.len(),
            });
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid("D", format!("must be positive, got {spacing}")));
        }
        Ok(BlockCoefficients {
            n,
            rings,
            spacing,
            table,
        })
    }

    /// Nearest-neighbour rings only, each with the same block `row`
    /// (`h[1] = h[N-1] = row`, every other block zero).
    pub fn nearest_neighbor_block(rings: usize, spacing: f64, row: &[f64]) -> Result<Self> {
        let n = row.len();
        if rings < 3 {
            return Err(Error::invalid("N", "nearest-neighbour table needs at least 3 rings"));
        }
        let mut table = vec![0.0; n * rings];
        table[n..2 * n].copy_from_slice(row);
        table[(rings - 1) * n..].copy_from_slice(row);
        Self::from_table(n, rings, spacing, table)
    }

    /// Far-field idealization: every nearest-neighbour coupling equals `J / D^3`.
    pub fn nearest_neighbor_symmetric(
        n: usize,
        rings: usize,
        spacing: f64,
        kernel: &CouplingKernel,
    ) -> Result<Self> {
        let v = kernel.coupling(spacing);
        Self::nearest_neighbor_block(rings, spacing, &vec![v; n])
    }

    pub fn sites_per_ring(&self) -> usize {
        self.n
    }

    pub fn ring_count(&self) -> usize {
        self.rings
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// `(N - 1) / 2`, the largest ring offset summed by the closed forms.
    pub fn half_rings(&self) -> usize {
        (self.rings - 1) / 2
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.table[j * self.n + k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.table[j * self.n..(j + 1) * self.n]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.n;
        &mut self.table[j * n..(j + 1) * n]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

/// Coefficients of the ring stack `(n, N, R, D)` mapped onto the torus by
/// minimal image: `h[j][k]` couples site 0 of ring 0 to site `k` of the ring
/// `min(j, N - j)` rings away.
pub fn extract_block_coefficients(
    n: usize,
    rings: usize,
    radius: f64,
    spacing: f64,
    kernel: &CouplingKernel,
) -> Result<BlockCoefficients> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if rings % 2 == 0 {
        return Err(Error::invalid("N", format!("must be odd, got {rings}")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid("R", format!("must be positive, got {radius}")));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::invalid("D", format!("must be positive, got {spacing}")));
    }
    let mut table = vec![0.0; n * rings];
    for j in 0..rings {
        let axial = j.min(rings - j) as f64 * spacing;
        for k in 0..n {
            if j == 0 && k == 0 {
                continue;
            }
            let chord2 = 2.0
                * radius
                * radius
                * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos());
            table[j * n + k] = kernel.coupling((axial * axial + chord2).sqrt());
        }
    }
    BlockCoefficients::from_table(n, rings, spacing, table)
}

/// Same as [`extract_block_coefficients`] but rejecting even `n` too.
pub fn extract_block_coefficients_odd(
    n: usize,
    rings: usize,
    radius: f64,
    spacing: f64,
    kernel: &CouplingKernel,
) -> Result<BlockCoefficients> {
    require_odd(n, rings)?;
    extract_block_coefficients(n, rings, radius, spacing, kernel)
}

/// Exact block-circulant matrix with circulant blocks built from `h`.
pub fn torus_hamiltonian(h: &BlockCoefficients) -> Hamiltonian {
    let (n, rings) = (h.n, h.rings);
    let dim = n * rings;
    let matrix = DMatrix::from_fn(dim, dim, |row, col| {
        let (a, k) = (row / n, row % n);
        let (b, m) = (col / n, col % n);
        h.get((b + rings - a) % rings, (m + n - k) % n)
    });
    let offsets = matrix.diagonal().iter().copied().collect();
    Hamiltonian { matrix, offsets }
}

/// `pi_N (x) 1_n`: cyclic shift by one ring.
pub fn ring_shift_permutation(n: usize, rings: usize) -> DMatrix<f64> {
    let dim = n * rings;
    DMatrix::from_fn(dim, dim, |row, col| {
        let (a, k) = (row / n, row % n);
        let (b, m) = (col / n, col % n);
        if k == m && b == (a + 1) % rings {
            1.0
        } else {
            0.0
        }
    })
}
