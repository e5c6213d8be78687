use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{check_times, QuantumState, Trajectory};
use crate::coupling::Hamiltonian;
use crate::error::{Error, Result};
use crate::spectral::{dense_eigendecomposition, EigenDecomposition};

/// Exact propagator `V exp(-i Lambda t) V^T` built from one eigendecomposition.
#[derive(Debug, Clone)]
pub struct ClosedPropagator {
    eig: EigenDecomposition,
}

impl ClosedPropagator {
    pub fn new(h: &Hamiltonian) -> Result<Self> {
        Ok(ClosedPropagator {
            eig: dense_eigendecomposition(h)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.eig.eigenvalues.len()
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eig
    }

    /// Coordinates of `psi0` in the eigenbasis.
    fn project(&self, psi0: &DVector<Complex64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if psi0.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi0.len(),
            });
        }
        let vt = self.eig.eigenvectors.transpose();
        Ok((&vt * psi0.map(|z| z.re), &vt * psi0.map(|z| z.im)))
    }

    fn assemble(&self, coords: &(DVector<f64>, DVector<f64>), t: f64) -> DVector<Complex64> {
        let (cr, ci) = coords;
        let dim = self.dim();
        let mut rot_re = DVector::zeros(dim);
        let mut rot_im = DVector::zeros(dim);
        for a in 0..dim {
            let (s, c) = (-self.eig.eigenvalues[a] * t).sin_cos();
            rot_re[a] = c * cr[a] - s * ci[a];
            rot_im[a] = s * cr[a] + c * ci[a];
        }
        let v = &self.eig.eigenvectors;
        let re = v * rot_re;
        let im = v * rot_im;
        re.zip_map(&im, Complex64::new)
    }

    pub fn propagate(&self, psi0: &DVector<Complex64>, t: f64) -> Result<DVector<Complex64>> {
        let coords = self.project(psi0)?;
        Ok(self.assemble(&coords, t))
    }

    /// Amplitudes at every sample time, as columns.
    pub fn propagate_many(&self, psi0: &DVector<Complex64>, times: &[f64]) -> Result<Vec<DVector<Complex64>>> {
        let coords = self.project(psi0)?;
        Ok(times.iter().map(|&t| self.assemble(&coords, t)).collect())
    }

    /// Site populations at every sample time.
    pub fn site_populations(&self, psi0: &DVector<Complex64>, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let coords = self.project(psi0)?;
        let dim = self.dim();
        let n_t = times.len();
        // Phase factors for all times at once, then two matrix products.
        let mut rot_re = DMatrix::zeros(dim, n_t);
        let mut rot_im = DMatrix::zeros(dim, n_t);
        for (col, &t) in times.iter().enumerate() {
            for a in 0..dim {
                let (s, c) = (-self.eig.eigenvalues[a] * t).sin_cos();
                rot_re[(a, col)] = c * coords.0[a] - s * coords.1[a];
                rot_im[(a, col)] = s * coords.0[a] + c * coords.1[a];
            }
        }
        let re = &self.eig.eigenvectors * rot_re;
        let im = &self.eig.eigenvectors * rot_im;
        Ok((0..n_t)
            .map(|col| {
                if times[col] == 0.0 {
                    // exact, without the round trip through the eigenbasis
                    return psi0.iter().map(|z| z.norm_sqr()).collect();
                }
                (0..dim)
                    .map(|s| re[(s, col)].powi(2) + im[(s, col)].powi(2))
                    .collect()
            })
            .collect())
    }
}

/// Unitary evolution of a pure state by dense eigendecomposition.
pub fn evolve_closed(h: &Hamiltonian, psi0: &QuantumState, times: &[f64]) -> Result<Trajectory> {
    check_times(times)?;
    let psi0 = psi0
        .as_pure()
        .ok_or_else(|| Error::invalid("psi0", "closed evolution needs a pure state"))?;
    let prop = ClosedPropagator::new(h)?;
    let states = prop
        .propagate_many(psi0, times)?
        .into_iter()
        .map(QuantumState::Pure)
        .collect();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{assemble_hamiltonian, CouplingKernel};
    use crate::dynamics::{delocalized_state, InitialStateKind};
    use crate::lattice::SiteLattice;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_hamiltonian_is_identity() {
        let lat = SiteLattice::ring_stack(3, 3, 1.0, 1.0).unwrap();
        let h = Hamiltonian::from_matrix(DMatrix::zeros(9, 9)).unwrap();
        let psi0 = delocalized_state(&lat, 0).unwrap();
        let traj = evolve_closed(&h, &psi0, &[0.0, 1.0, 5.0]).unwrap();
        for s in &traj.states {
            let d = s.as_pure().unwrap() - psi0.as_pure().unwrap();
            assert!(d.iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn two_site_rabi_flop() {
        let v = 0.7;
        let h = Hamiltonian::from_matrix(DMatrix::from_row_slice(2, 2, &[0.0, v, v, 0.0])).unwrap();
        let psi0 = QuantumState::Pure(DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
        ]));
        let times: Vec<f64> = (0..20).map(|i| 0.3 * i as f64).collect();
        let traj = evolve_closed(&h, &psi0, &times).unwrap();
        for (t, s) in times.iter().zip(&traj.states) {
            assert_abs_diff_eq!(s.populations()[1], (v * t).sin().powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn norm_is_conserved_at_full_scale() {
        let lat = SiteLattice::ring_stack(5, 31, 1.0, 10.0).unwrap();
        let h = assemble_hamiltonian(&lat, &CouplingKernel::default(), None).unwrap();
        let psi0 = InitialStateKind::Localized.prepare(&lat).unwrap();
        let times: Vec<f64> = (0..=10).map(f64::from).collect();
        let prop = ClosedPropagator::new(&h).unwrap();
        let pops = prop.site_populations(psi0.as_pure().unwrap(), &times).unwrap();
        for (t, p) in times.iter().zip(&pops) {
            let drift = (p.iter().sum::<f64>() - 1.0).abs();
            assert!(drift < 1e-9 * t.max(1.0), "t={t}: drift {drift:e}");
        }
        let traj = evolve_closed(&h, &psi0, &times).unwrap();
        for (a, b) in traj.states.iter().zip(&pops) {
            for (x, y) in a.populations().iter().zip(b) {
                assert_abs_diff_eq!(*x, *y, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn rejects_mixed_input() {
        let h = Hamiltonian::from_matrix(DMatrix::zeros(2, 2)).unwrap();
        let rho = QuantumState::Mixed(crate::dynamics::DensityMatrix {
            re: DMatrix::identity(2, 2) * 0.5,
            im: DMatrix::zeros(2, 2),
        });
        assert!(evolve_closed(&h, &rho, &[0.0]).is_err());
    }
}
