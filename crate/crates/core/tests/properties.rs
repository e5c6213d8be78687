//! Invariants of the dynamics and sweeps over randomized small systems.

use exciton_core::coupling::{assemble_hamiltonian, extract_block_coefficients, torus_hamiltonian, CouplingKernel};
use exciton_core::dynamics::{evolve_lindblad, ClosedPropagator, InitialStateKind, OpenSystemParams, QuantumState};
use exciton_core::experiments::{run_disorder_sweep, ExperimentKind, Profile, SweepSpec};
use exciton_core::io::write_results_csv;
use exciton_core::lattice::SiteLattice;
use exciton_core::observables::{diffusion_length, short_time_ring_populations, RingPopulations};
use exciton_core::spectral::{circulant_eigenvalues, symmetric_eigenvalues};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn small_disorder_spec(seed: u64, realizations: usize) -> SweepSpec {
    let mut spec = SweepSpec::with_profile(ExperimentKind::Disorder, Profile::Fast);
    spec.rings = 7;
    spec.spacings = vec![2.0];
    spec.n_values = vec![1, 2, 3];
    spec.sigmas = vec![0.3, 1.0, 3.0];
    spec.times = vec![0.5, 1.0, 2.0];
    spec.realizations = realizations;
    spec.seed = seed;
    spec
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn open_evolution_keeps_trace_hermiticity_and_positivity(
        n in 1usize..4,
        spacing in 0.8f64..6.0,
        gamma in 0.0f64..4.0,
        kappa in 0.0f64..1.0,
        localized in any::<bool>(),
    ) {
        let lat = SiteLattice::ring_stack(n, 5, 1.0, spacing).unwrap();
        let h = assemble_hamiltonian(&lat, &CouplingKernel::default(), None).unwrap();
        let state = if localized { InitialStateKind::Localized } else { InitialStateKind::Delocalized };
        let psi0 = QuantumState::Mixed(state.prepare(&lat).unwrap().to_density());
        let params = OpenSystemParams::new(gamma, kappa).unwrap();
        let times = [0.25, 0.5, 1.0, 1.5];
        let traj = evolve_lindblad(&h, &params, &psi0, &times).unwrap();
        for (&t, s) in times.iter().zip(&traj.states) {
            let expected = params.decay_factor(t);
            prop_assert!((s.trace() - expected).abs() <= 1e-6 * expected);
            let QuantumState::Mixed(rho) = s else { panic!("open evolution returns density matrices") };
            prop_assert!(rho.hermiticity_error() <= 1e-9);
            prop_assert!(rho.min_eigenvalue().unwrap() >= -1e-7);
        }
    }

    #[test]
    fn circulant_spectrum_matches_dense(n in 1usize..6, half in 1usize..5, radius in 0.3f64..2.0, spacing in 0.2f64..10.0) {
        let b = extract_block_coefficients(n, 2 * half + 1, radius, spacing, &CouplingKernel::default()).unwrap();
        let circ = circulant_eigenvalues(&b).sorted();
        let dense = symmetric_eigenvalues(torus_hamiltonian(&b).matrix()).unwrap();
        let scale = dense.iter().fold(1.0f64, |m, e| m.max(e.abs()));
        for (a, e) in circ.iter().zip(&dense) {
            prop_assert!((a - e).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn short_time_formula_matches_propagation(
        n in 1usize..6,
        spacing in 2.0f64..12.0,
        amps in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let rings = 15;
        let kernel = CouplingKernel::default();
        let norm = amps[..n].iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assume!(norm > 0.1);
        let row: Vec<f64> = amps[..n].iter().map(|a| a / norm).collect();
        let lat = SiteLattice::ring_stack(n, rings, 1.0, spacing).unwrap();
        let b = extract_block_coefficients(n, rings, 1.0, spacing, &kernel).unwrap();
        let mid = lat.middle_slot();
        let mut alpha = DMatrix::zeros(rings, n);
        alpha.row_mut(mid).copy_from_slice(&row);
        let t = 0.01;
        let predicted = diffusion_length(&short_time_ring_populations(&alpha, &b, t).unwrap(), spacing);
        let mut psi = DVector::zeros(lat.len());
        for (k, a) in row.iter().enumerate() {
            psi[mid * n + k] = Complex64::new(*a, 0.0);
        }
        let h = assemble_hamiltonian(&lat, &kernel, None).unwrap();
        let pops = ClosedPropagator::new(&h).unwrap().site_populations(&psi, &[t]).unwrap();
        let numeric = diffusion_length(&RingPopulations::from_site_populations(&pops[0], &lat).unwrap(), spacing);
        prop_assume!(predicted > 1e-12);
        prop_assert!((numeric - predicted).abs() <= 1e-3 * predicted, "{} vs {}", numeric, predicted);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn seeded_sweeps_write_identical_bytes(seed in any::<u64>()) {
        let spec = small_disorder_spec(seed, 4);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_results_csv(&run_disorder_sweep(&spec).unwrap(), &a).unwrap();
        write_results_csv(&run_disorder_sweep(&spec).unwrap(), &b).unwrap();
        prop_assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}

#[test]
fn doubling_realizations_stays_within_two_standard_errors() {
    let small = run_disorder_sweep(&small_disorder_spec(3, 60)).unwrap();
    let large = run_disorder_sweep(&small_disorder_spec(3, 120)).unwrap();
    let (m1, m2) = (small.stat("sigma_mean").unwrap(), large.stat("sigma_mean").unwrap());
    let se = large.stat("sigma_mean_stderr").unwrap();
    let within = (0..small.len()).filter(|&f| (m1[f] - m2[f]).abs() <= 2.0 * se[f]).count();
    assert!(within as f64 >= 0.95 * small.len() as f64, "{within} of {}", small.len());
}
