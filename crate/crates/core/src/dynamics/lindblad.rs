//! Haken-Strobl master equation
//!
//! `d rho/dt = -i[H, rho] + gamma sum_m (S_m rho S_m - {S_m, rho}/2) - 2 kappa rho`
//!
//! with `S_m = |m><m|`. Summed over sites the dephasing term is
//! `gamma (diag(rho) - rho)`. Recombination is `kappa` times the identity in
//! the single-exciton manifold, so it only rescales the trace and is applied
//! as the exact factor `exp(-2 kappa t)`; the remaining generator is
//! integrated with fixed-step classical RK4.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use super::{check_times, closed::evolve_closed, DensityMatrix, OpenSystemParams, QuantumState, Trajectory};
use crate::coupling::Hamiltonian;
use crate::error::{Error, Result};
use crate::spectral::operator_norm_bound;

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladOptions {
    /// Replaces the default step `min(0.01, 0.1 / max(gamma, ||H||, 1))`.
    pub dt_override: Option<f64>,
    /// Site populations below `-positivity_tolerance` cause a segment to be
    /// redone with half the step.
    pub positivity_tolerance: f64,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        LindbladOptions {
            dt_override: None,
            positivity_tolerance: 1e-7,
        }
    }
}

pub fn default_time_step(norm: f64, gamma: f64) -> f64 {
    (0.1 / gamma.max(norm).max(1.0)).min(0.01)
}

/// Classic RK4 on a flat state vector.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(len: usize) -> Self {
        Rk4 {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }

    pub(crate) fn step<F>(&mut self, rhs: &mut F, y: &mut [f64], dt: f64)
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let half = 0.5 * dt;
        rhs(y, &mut self.k1);
        for ((t, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *t = y + half * k;
        }
        rhs(&self.tmp, &mut self.k2);
        for ((t, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *t = y + half * k;
        }
        rhs(&self.tmp, &mut self.k3);
        for ((t, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *t = y + dt * k;
        }
        rhs(&self.tmp, &mut self.k4);
        let sixth = dt / 6.0;
        for (i, y) in y.iter_mut().enumerate() {
            *y += sixth * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

/// Advances `y` through every sample time, calling `observe` at each.
///
/// Each inter-sample segment is split into equal steps no longer than `dt`.
/// A segment that yields a non-finite state or a population below
/// `-tolerance` is redone with half the step.
pub(crate) fn drive<F, P, O>(
    times: &[f64],
    y0: Vec<f64>,
    dt: f64,
    tolerance: f64,
    mut rhs: F,
    min_population: P,
    mut observe: O,
) -> Result<()>
where
    F: FnMut(&[f64], &mut [f64]),
    P: Fn(&[f64]) -> f64,
    O: FnMut(usize, f64, &[f64]),
{
    let mut rk = Rk4::new(y0.len());
    let mut y = y0;
    let mut trial = y.clone();
    let mut t_now = 0.0;
    for (idx, &t_target) in times.iter().enumerate() {
        let span = t_target - t_now;
        if span > 0.0 {
            let mut step = dt;
            loop {
                let n_steps = ((span / step) - 1e-9).ceil().max(1.0) as usize;
                let h = span / n_steps as f64;
                trial.copy_from_slice(&y);
                for _ in 0..n_steps {
                    rk.step(&mut rhs, &mut trial, h);
                }
                let finite = trial.iter().all(|x| x.is_finite());
                if finite && min_population(&trial) >= -tolerance {
                    break;
                }
                step *= 0.5;
                if step < 1e-12 * span.max(1e-300) || step < 1e-15 {
                    return Err(Error::StepSizeUnderflow { time: t_now, dt: step });
                }
                log::debug!("refining step to {step:e} on [{t_now}, {t_target}]");
            }
            std::mem::swap(&mut y, &mut trial);
            t_now = t_target;
        }
        observe(idx, t_target, &y);
    }
    Ok(())
}

/// `-i[H, rho] + gamma (diag(rho) - rho)` for `rho = re + i im`, `H` real
/// symmetric. Uses `rho H = (H rho)^dagger`, so two real products suffice.
pub(crate) fn haken_strobl_rhs(
    h: &DMatrix<f64>,
    gamma: f64,
    re: DMatrixView<'_, f64>,
    im: DMatrixView<'_, f64>,
    mut d_re: DMatrixViewMut<'_, f64>,
    mut d_im: DMatrixViewMut<'_, f64>,
    h_re: &mut DMatrix<f64>,
    h_im: &mut DMatrix<f64>,
) {
    let d = h.nrows();
    h_re.gemm(1.0, h, &re, 0.0);
    h_im.gemm(1.0, h, &im, 0.0);
    for j in 0..d {
        for i in 0..d {
            let mut dr = h_im[(i, j)] + h_im[(j, i)];
            let mut di = h_re[(j, i)] - h_re[(i, j)];
            if i != j {
                dr -= gamma * re[(i, j)];
                di -= gamma * im[(i, j)];
            }
            d_re[(i, j)] = dr;
            d_im[(i, j)] = di;
        }
    }
}

fn resolve_step(h: &Hamiltonian, params: &OpenSystemParams, opts: &LindbladOptions) -> Result<f64> {
    match opts.dt_override {
        Some(dt) if !(dt.is_finite() && dt > 0.0) => {
            Err(Error::invalid("integrator.dt_override", format!("must be positive, got {dt}")))
        }
        Some(dt) => Ok(dt),
        None => Ok(default_time_step(operator_norm_bound(h)?, params.gamma)),
    }
}

fn run_dense<O>(
    h: &Hamiltonian,
    params: &OpenSystemParams,
    rho0: &DensityMatrix,
    times: &[f64],
    opts: &LindbladOptions,
    mut observe: O,
) -> Result<()>
where
    O: FnMut(usize, f64, &[f64], usize),
{
    check_times(times)?;
    let d = h.dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: rho0.dim(),
        });
    }
    let dt = resolve_step(h, params, opts)?;
    let mut y0 = Vec::with_capacity(2 * d * d);
    y0.extend_from_slice(rho0.re.as_slice());
    y0.extend_from_slice(rho0.im.as_slice());

    let hm = h.matrix();
    let gamma = params.gamma;
    let mut h_re = DMatrix::zeros(d, d);
    let mut h_im = DMatrix::zeros(d, d);
    let rhs = |y: &[f64], out: &mut [f64]| {
        let (re, im) = y.split_at(d * d);
        let (o_re, o_im) = out.split_at_mut(d * d);
        haken_strobl_rhs(
            hm,
            gamma,
            DMatrixView::from_slice(re, d, d),
            DMatrixView::from_slice(im, d, d),
            DMatrixViewMut::from_slice(o_re, d, d),
            DMatrixViewMut::from_slice(o_im, d, d),
            &mut h_re,
            &mut h_im,
        );
    };
    let min_population = |y: &[f64]| (0..d).map(|i| y[i * d + i]).fold(f64::INFINITY, f64::min);
    drive(
        times,
        y0,
        dt,
        opts.positivity_tolerance,
        rhs,
        min_population,
        |idx, t, y| observe(idx, t, y, d),
    )
}

fn promote(rho0: &QuantumState) -> DensityMatrix {
    rho0.to_density()
}

/// Master-equation trajectory. Pure inputs with `gamma = kappa = 0` stay on
/// the unitary path; otherwise they are promoted to density matrices.
pub fn evolve_lindblad(
    h: &Hamiltonian,
    params: &OpenSystemParams,
    rho0: &QuantumState,
    times: &[f64],
) -> Result<Trajectory> {
    evolve_lindblad_with(h, params, rho0, times, &LindbladOptions::default())
}

pub fn evolve_lindblad_with(
    h: &Hamiltonian,
    params: &OpenSystemParams,
    rho0: &QuantumState,
    times: &[f64],
    opts: &LindbladOptions,
) -> Result<Trajectory> {
    if params.is_closed() {
        if let QuantumState::Pure(_) = rho0 {
            return evolve_closed(h, rho0, times);
        }
    }
    let mut states = Vec::with_capacity(times.len());
    run_dense(h, params, &promote(rho0), times, opts, |_, t, y, d| {
        let (re, im) = y.split_at(d * d);
        let mut rho = DensityMatrix {
            re: DMatrix::from_column_slice(d, d, re),
            im: DMatrix::from_column_slice(d, d, im),
        };
        rho.scale(params.decay_factor(t));
        states.push(QuantumState::Mixed(rho));
    })?;
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

/// Site populations only; avoids keeping a density matrix per sample.
pub fn lindblad_site_populations(
    h: &Hamiltonian,
    params: &OpenSystemParams,
    rho0: &QuantumState,
    times: &[f64],
    opts: &LindbladOptions,
) -> Result<Vec<Vec<f64>>> {
    if params.is_closed() {
        if let QuantumState::Pure(psi) = rho0 {
            check_times(times)?;
            return super::ClosedPropagator::new(h)?.site_populations(psi, times);
        }
    }
    let mut out = Vec::with_capacity(times.len());
    run_dense(h, params, &promote(rho0), times, opts, |_, t, y, d| {
        let f = params.decay_factor(t);
        out.push((0..d).map(|i| f * y[i * d + i]).collect());
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{assemble_hamiltonian, CouplingKernel};
    use crate::dynamics::{ClosedPropagator, InitialStateKind};
    use crate::lattice::SiteLattice;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use num_complex::Complex64;

    fn small_system(n: usize, rings: usize, spacing: f64) -> (SiteLattice, Hamiltonian) {
        let lat = SiteLattice::ring_stack(n, rings, 1.0, spacing).unwrap();
        let h = assemble_hamiltonian(&lat, &CouplingKernel::default(), None).unwrap();
        (lat, h)
    }

    fn mixed(state: QuantumState) -> QuantumState {
        QuantumState::Mixed(state.to_density())
    }

    #[test]
    fn closed_limit_matches_unitary() {
        let (lat, h) = small_system(3, 5, 1.5);
        let psi0 = InitialStateKind::Localized.prepare(&lat).unwrap();
        let times = [0.0, 0.25, 0.5, 1.0];
        let exact = ClosedPropagator::new(&h)
            .unwrap()
            .site_populations(psi0.as_pure().unwrap(), &times)
            .unwrap();
        let traj = evolve_lindblad(&h, &OpenSystemParams::closed(), &mixed(psi0), &times).unwrap();
        for (s, e) in traj.states.iter().zip(&exact) {
            for (a, b) in s.populations().iter().zip(e) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn pure_dephasing_channel() {
        let d = 4;
        let h = Hamiltonian::from_matrix(DMatrix::zeros(d, d)).unwrap();
        let amp = Complex64::new(0.5, 0.0);
        let psi = DVector::from_element(d, amp);
        let gamma = 0.8;
        let params = OpenSystemParams::new(gamma, 0.0).unwrap();
        let times = [0.0, 0.5, 1.0, 2.0];
        let traj = evolve_lindblad(&h, &params, &QuantumState::Pure(psi), &times).unwrap();
        for (t, s) in times.iter().zip(&traj.states) {
            let rho = s.to_density();
            for i in 0..d {
                for j in 0..d {
                    let expected = if i == j { 0.25 } else { 0.25 * (-gamma * t).exp() };
                    assert_abs_diff_eq!(rho.re[(i, j)], expected, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn recombination_is_uniform_decay() {
        let d = 3;
        let h = Hamiltonian::from_matrix(DMatrix::zeros(d, d)).unwrap();
        let psi = DVector::from_vec(vec![
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.8),
            Complex64::new(0.0, 0.0),
        ]);
        let rho0 = DensityMatrix::from_pure(&psi);
        let kappa = 0.3;
        let params = OpenSystemParams::new(0.0, kappa).unwrap();
        let times = [0.0, 1.0, 3.0];
        let traj = evolve_lindblad(&h, &params, &QuantumState::Pure(psi), &times).unwrap();
        for (t, s) in times.iter().zip(&traj.states) {
            let rho = s.to_density();
            let f = (-2.0 * kappa * t).exp();
            assert!((&rho.re - &rho0.re * f).amax() < 1e-14);
            assert!((&rho.im - &rho0.im * f).amax() < 1e-14);
        }
    }

    #[test]
    fn trace_and_hermiticity_with_all_terms() {
        let (lat, h) = small_system(3, 5, 2.0);
        let psi0 = InitialStateKind::Delocalized.prepare(&lat).unwrap();
        let kappa = 0.2;
        let params = OpenSystemParams::new(1.0, kappa).unwrap();
        let times = [0.0, 0.5, 1.0, 2.0];
        let traj = evolve_lindblad(&h, &params, &psi0, &times).unwrap();
        for (t, s) in times.iter().zip(&traj.states) {
            let rho = s.to_density();
            let expected = (-2.0 * kappa * t).exp();
            assert!((rho.trace() - expected).abs() / expected < 1e-6);
            assert!(rho.hermiticity_error() < 1e-9);
            assert!(rho.min_eigenvalue().unwrap() > -1e-8);
        }
    }

    #[test]
    fn closed_path_keeps_purity() {
        let (lat, h) = small_system(3, 7, 1.0);
        let psi0 = mixed(InitialStateKind::Localized.prepare(&lat).unwrap());
        let times: Vec<f64> = (0..=4).map(|i| 0.25 * i as f64).collect();
        let traj = evolve_lindblad(&h, &OpenSystemParams::closed(), &psi0, &times).unwrap();
        for s in &traj.states {
            assert!((s.to_density().purity() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zeno_trend_with_strong_dephasing() {
        let (lat, h) = small_system(3, 3, 1.0);
        let psi0 = InitialStateKind::Localized.prepare(&lat).unwrap();
        let start = psi0.populations()[3];
        let drift: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&g| {
                let params = OpenSystemParams::new(g, 0.0).unwrap();
                let pops =
                    lindblad_site_populations(&h, &params, &psi0, &[0.1], &LindbladOptions::default()).unwrap();
                (pops[0][3] - start).abs()
            })
            .collect();
        assert!(drift[0] > drift[1] && drift[1] > drift[2], "{drift:?}");
    }

    #[test]
    fn fourth_order_convergence() {
        let (lat, h) = small_system(3, 3, 0.8);
        let psi0 = InitialStateKind::Localized.prepare(&lat).unwrap();
        let params = OpenSystemParams::new(2.0, 0.0).unwrap();
        let run = |dt: f64| {
            let opts = LindbladOptions {
                dt_override: Some(dt),
                ..Default::default()
            };
            let s = evolve_lindblad_with(&h, &params, &psi0, &[1.0], &opts).unwrap();
            s.states[0].to_density()
        };
        let dt = 0.05;
        let reference = run(dt / 4.0);
        let err = |rho: &DensityMatrix| (&rho.re - &reference.re).amax().max((&rho.im - &reference.im).amax());
        let e1 = err(&run(dt));
        let e2 = err(&run(dt / 2.0));
        // error vs. a quarter-step reference: (1 - 4^-4) / (2^-4 - 4^-4) = 17
        let ratio = e1 / e2;
        assert!(ratio > 17.0 / 2.0 && ratio < 17.0 * 2.0, "ratio {ratio}");
    }

    #[test]
    fn default_step_rule() {
        assert_eq!(default_time_step(0.5, 0.0), 0.01);
        assert_abs_diff_eq!(default_time_step(20.0, 5.0), 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(default_time_step(2.0, 50.0), 0.002, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (lat, h) = small_system(2, 3, 1.0);
        let psi0 = InitialStateKind::Localized.prepare(&lat).unwrap();
        let params = OpenSystemParams::new(1.0, 0.0).unwrap();
        assert!(evolve_lindblad(&h, &params, &psi0, &[1.0, 0.5]).is_err());
        let opts = LindbladOptions {
            dt_override: Some(-1.0),
            ..Default::default()
        };
        assert!(evolve_lindblad_with(&h, &params, &psi0, &[1.0], &opts).is_err());
        let wrong = QuantumState::Pure(DVector::from_element(3, Complex64::new(1.0, 0.0)));
        assert!(matches!(
            evolve_lindblad(&h, &params, &wrong, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
