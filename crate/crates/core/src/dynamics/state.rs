use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SiteLattice;
use crate::spectral::symmetric_eigendecomposition;

/// Density matrix stored as `re + i im`, with `re` symmetric and `im`
/// antisymmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl DensityMatrix {
    pub fn from_pure(psi: &DVector<Complex64>) -> Self {
        let d = psi.len();
        let mut re = DMatrix::zeros(d, d);
        let mut im = DMatrix::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                let v = psi[i] * psi[j].conj();
                re[(i, j)] = v.re;
                im[(i, j)] = v.im;
            }
        }
        DensityMatrix { re, im }
    }

    pub fn from_complex(rho: &DMatrix<Complex64>) -> Self {
        DensityMatrix {
            re: rho.map(|z| z.re),
            im: rho.map(|z| z.im),
        }
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        self.re.zip_map(&self.im, Complex64::new)
    }

    pub fn dim(&self) -> usize {
        self.re.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.re.trace()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.re.diagonal().iter().copied().collect()
    }

    /// `max |rho - rho^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        let sym = (&self.re - self.re.transpose()).amax();
        let anti = (&self.im + self.im.transpose()).amax();
        sym.max(anti)
    }

    /// `tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        self.re.iter().map(|x| x * x).sum::<f64>() + self.im.iter().map(|x| x * x).sum::<f64>()
    }

    /// Smallest eigenvalue, from the real symmetric embedding
    /// `[[re, -im], [im, re]]` whose spectrum is that of `rho`, doubled.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let d = self.dim();
        let embed = DMatrix::from_fn(2 * d, 2 * d, |r, c| match (r < d, c < d) {
            (true, true) => self.re[(r, c)],
            (true, false) => -self.im[(r, c - d)],
            (false, true) => self.im[(r - d, c)],
            (false, false) => self.re[(r - d, c - d)],
        });
        let eig = symmetric_eigendecomposition(&embed)?;
        Ok(eig.eigenvalues[0])
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        self.re *= factor;
        self.im *= factor;
    }
}

/// Single-exciton state over the site basis.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure(DVector<Complex64>),
    Mixed(DensityMatrix),
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(psi) => psi.len(),
            QuantumState::Mixed(rho) => rho.dim(),
        }
    }

    /// Diagonal `<m|rho|m>` in the site basis.
    pub fn populations(&self) -> Vec<f64> {
        match self {
            QuantumState::Pure(psi) => psi.iter().map(|z| z.norm_sqr()).collect(),
            QuantumState::Mixed(rho) => rho.populations(),
        }
    }

    /// `<psi|psi>` or `tr(rho)`.
    pub fn trace(&self) -> f64 {
        match self {
            QuantumState::Pure(psi) => psi.norm_squared(),
            QuantumState::Mixed(rho) => rho.trace(),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            QuantumState::Pure(psi) => DensityMatrix::from_pure(psi),
            QuantumState::Mixed(rho) => rho.clone(),
        }
    }

    pub fn as_pure(&self) -> Option<&DVector<Complex64>> {
        match self {
            QuantumState::Pure(psi) => Some(psi),
            QuantumState::Mixed(_) => None,
        }
    }
}

/// The two preparations compared throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialStateKind {
    Delocalized,
    Localized,
}

impl InitialStateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InitialStateKind::Delocalized => "delocalized",
            InitialStateKind::Localized => "localized",
        }
    }

    /// Default preparation on the middle ring.
    pub fn prepare(self, lat: &SiteLattice) -> Result<QuantumState> {
        match self {
            InitialStateKind::Delocalized => delocalized_state(lat, 0),
            InitialStateKind::Localized => {
                let slot = lat.middle_slot();
                localized_state(lat, lat.ring_sites(slot).start)
            }
        }
    }
}

impl std::str::FromStr for InitialStateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delocalized" => Ok(InitialStateKind::Delocalized),
            "localized" => Ok(InitialStateKind::Localized),
            other => Err(Error::invalid(
                "state",
                format!("expected \"delocalized\" or \"localized\", got {other:?}"),
            )),
        }
    }
}

/// Equal amplitudes `1/sqrt(n)` over the sites of ring `ring` (0 = middle).
///
/// For a helix the ring is one full turn of `n` contiguous chromophores.
pub fn delocalized_state(lat: &SiteLattice, ring: i64) -> Result<QuantumState> {
    let slot = lat.slot_of_ring(ring)?;
    let amp = Complex64::new(1.0 / (lat.sites_per_ring() as f64).sqrt(), 0.0);
    let mut psi = DVector::zeros(lat.len());
    for s in lat.ring_sites(slot) {
        psi[s] = amp;
    }
    Ok(QuantumState::Pure(psi))
}

/// Basis state on the (0-based, global) `site`.
pub fn localized_state(lat: &SiteLattice, site: usize) -> Result<QuantumState> {
    if site >= lat.len() {
        return Err(Error::IndexOutOfRange {
            what: "site",
            index: site as i64,
            len: lat.len(),
        });
    }
    let mut psi = DVector::zeros(lat.len());
    psi[site] = Complex64::new(1.0, 0.0);
    Ok(QuantumState::Pure(psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn delocalized_amplitudes() {
        let lat = SiteLattice::ring_stack(4, 3, 1.0, 10.0).unwrap();
        let psi = delocalized_state(&lat, 0).unwrap();
        let pops = psi.populations();
        for s in 0..12 {
            let expected = if (4..8).contains(&s) { 0.25 } else { 0.0 };
            assert_abs_diff_eq!(pops[s], expected, epsilon = 1e-15);
        }
        let amps = psi.as_pure().unwrap();
        assert_abs_diff_eq!(amps[5].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.trace(), 1.0, epsilon = 1e-12);
        assert!(delocalized_state(&lat, 2).is_err());
    }

    #[test]
    fn single_site_rings_coincide() {
        let lat = SiteLattice::ring_stack(1, 5, 1.0, 10.0).unwrap();
        assert_eq!(
            InitialStateKind::Delocalized.prepare(&lat).unwrap(),
            InitialStateKind::Localized.prepare(&lat).unwrap()
        );
    }

    #[test]
    fn localized_overlap_and_density() {
        let lat = SiteLattice::ring_stack(5, 3, 1.0, 10.0).unwrap();
        let loc = InitialStateKind::Localized.prepare(&lat).unwrap();
        let deloc = delocalized_state(&lat, 0).unwrap();
        let overlap = loc.as_pure().unwrap().dotc(deloc.as_pure().unwrap());
        assert_abs_diff_eq!(overlap.re, 1.0 / 5f64.sqrt(), epsilon = 1e-15);
        let rho = loc.to_density();
        assert_eq!(rho.re.iter().filter(|&&x| x != 0.0).count(), 1);
        assert_eq!(rho.re[(5, 5)], 1.0);
        assert!(localized_state(&lat, 15).is_err());
    }

    #[test]
    fn helix_delocalized_covers_middle_turn() {
        let lat = SiteLattice::helix(3, 3, 1.0, 10.0).unwrap();
        let pops = delocalized_state(&lat, 0).unwrap().populations();
        assert_eq!(pops.iter().filter(|&&p| p > 0.0).count(), 3);
        assert!(pops[3..6].iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn density_diagnostics() {
        let psi = DVector::from_vec(vec![
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.8),
        ]);
        let rho = DensityMatrix::from_pure(&psi);
        assert!(rho.hermiticity_error() < 1e-15);
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.min_eigenvalue().unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(DensityMatrix::from_complex(&rho.to_complex()), rho);
    }
}
