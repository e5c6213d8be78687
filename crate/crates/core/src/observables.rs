//! Diffusion lengths, closed-form short-time predictions, the tight-binding
//! dephasing reference, power-law fits and the two-cluster transfer
//! probability.

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::{BlockCoefficients, CouplingKernel, Hamiltonian};
use crate::dynamics::{ClosedPropagator, QuantumState};
use crate::error::{Error, Result};
use crate::lattice::{require_odd, SiteLattice};
use crate::spectral::circulant_eigenvalues;

/// Populations below this are treated as integrator noise and clamped.
pub const NEGATIVE_POPULATION_TOL: f64 = 1e-9;

/// Advisory bound on `t ||H||` for the short-time closed forms.
pub const SHORT_TIME_GATE: f64 = 0.3;

/// Probability of finding the exciton on each ring, indexed by signed ring
/// offset from the middle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingPopulations {
    pub offsets: Vec<f64>,
    pub p: Vec<f64>,
}

impl RingPopulations {
    pub fn new(offsets: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if offsets.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: offsets.len(),
                found: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite ring population".into()));
        }
        Ok(RingPopulations { offsets, p })
    }

    /// Sums site populations ring by ring.
    pub fn from_site_populations(site_pops: &[f64], lat: &SiteLattice) -> Result<Self> {
        if site_pops.len() != lat.len() {
            return Err(Error::DimensionMismatch {
                expected: lat.len(),
                found: site_pops.len(),
            });
        }
        let rings = lat.ring_count();
        let p = (0..rings).map(|slot| lat.ring_sites(slot).map(|s| site_pops[s]).sum()).collect();
        let offsets = (0..rings).map(|slot| lat.ring_offset(slot)).collect();
        Self::new(offsets, p)
    }

    /// Populations over ring slots `0..N` of a lattice with `N` rings.
    pub fn from_slots(p: Vec<f64>, lat: &SiteLattice) -> Result<Self> {
        let offsets = (0..p.len()).map(|slot| lat.ring_offset(slot)).collect();
        Self::new(offsets, p)
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    /// Divides by the total, undoing recombination loss.
    pub fn renormalized(&self) -> Result<Self> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::Numerical(format!("cannot renormalize populations with total {total}")));
        }
        Ok(RingPopulations {
            offsets: self.offsets.clone(),
            p: self.p.iter().map(|x| x / total).collect(),
        })
    }

    /// `sum r^2 p_r`.
    pub fn second_moment(&self) -> f64 {
        self.offsets
            .iter()
            .zip(&self.p)
            .map(|(r, &p)| {
                if p < -NEGATIVE_POPULATION_TOL {
                    log::warn!("ring population {p:e} at offset {r} is below the clamp tolerance");
                }
                r * r * p.max(0.0)
            })
            .sum()
    }
}

pub fn ring_populations(state: &QuantumState, lat: &SiteLattice) -> Result<RingPopulations> {
    RingPopulations::from_site_populations(&state.populations(), lat)
}

/// `sigma = spacing * sqrt(sum r^2 p_r)`. For a helix `spacing` is the pitch.
pub fn diffusion_length(p: &RingPopulations, spacing: f64) -> f64 {
    spacing * p.second_moment().sqrt()
}

/// Least-squares line through `(ln x, ln y)`: `y = prefactor * x^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::invalid("xs", "a power-law fit needs at least 3 points"));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("xs, ys", "power-law fits need finite positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 1e-24 * m {
        return Err(Error::invalid("xs", "degenerate abscissae"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(PowerLawFit {
        exponent: slope,
        prefactor: (my - slope * mx).exp(),
        r_squared,
    })
}

/// Local exponents from a sliding `window` of consecutive samples; each is
/// reported at the geometric mean of its window's abscissae.
pub fn local_exponents(xs: &[f64], ys: &[f64], window: usize) -> Result<Vec<(f64, PowerLawFit)>> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if window < 3 {
        return Err(Error::invalid("window", "must be at least 3"));
    }
    xs.windows(window)
        .zip(ys.windows(window))
        .map(|(wx, wy)| {
            let center = (wx.iter().map(|x| x.ln()).sum::<f64>() / window as f64).exp();
            Ok((center, fit_power_law(wx, wy)?))
        })
        .collect()
}

/// `sigma(t)` sampled at increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSeries {
    pub times: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl DiffusionSeries {
    pub fn new(times: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if times.len() != sigma.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: sigma.len(),
            });
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Numerical("diffusion length must be finite and >= 0".into()));
        }
        Ok(DiffusionSeries { times, sigma })
    }

    /// Sliding-window `lambda(t)`, skipping `t = 0` and zero lengths.
    pub fn lambda(&self, window: usize) -> Result<Vec<(f64, PowerLawFit)>> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .times
            .iter()
            .zip(&self.sigma)
            .filter(|(t, s)| **t > 0.0 && **s > 0.0)
            .map(|(t, s)| (*t, *s))
            .unzip();
        local_exponents(&xs, &ys, window)
    }
}

fn short_time_gate(h: &BlockCoefficients, t: f64) {
    let norm = circulant_eigenvalues(h)
        .values()
        .iter()
        .fold(0.0f64, |acc, e| acc.max(e.abs()));
    if t * norm >= SHORT_TIME_GATE {
        // sweeps hit this at every point; warn once per process
        static WARNED: AtomicBool = AtomicBool::new(false);
        let level = if WARNED.swap(true, Ordering::Relaxed) {
            log::Level::Debug
        } else {
            log::Level::Warn
        };
        log::log!(
            level,
            "t*||H|| = {:.3} is outside the short-time regime (< {SHORT_TIME_GATE})",
            t * norm
        );
    }
}

fn check_analytic_inputs(h: &BlockCoefficients, t: f64) -> Result<()> {
    if h.ring_count() % 2 == 0 {
        return Err(Error::invalid("N", format!("must be odd, got {}", h.ring_count())));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid("t", format!("must be >= 0, got {t}")));
    }
    short_time_gate(h, t);
    Ok(())
}

/// `D t sqrt(2 sum_{j=1..T} j^2 (sum_k h_jk)^2)` for the delocalized state.
pub fn sigma_deloc_analytic(h: &BlockCoefficients, t: f64) -> Result<f64> {
    check_analytic_inputs(h, t)?;
    let s: f64 = (1..=h.half_rings())
        .map(|j| (j * j) as f64 * h.row(j).iter().sum::<f64>().powi(2))
        .sum();
    Ok(h.spacing() * t * (2.0 * s).sqrt())
}

/// `D t sqrt(2 sum_{j=1..T} j^2 sum_k h_jk^2)` for a single-site state.
pub fn sigma_loc_analytic(h: &BlockCoefficients, t: f64) -> Result<f64> {
    check_analytic_inputs(h, t)?;
    let s: f64 = (1..=h.half_rings())
        .map(|j| (j * j) as f64 * h.row(j).iter().map(|x| x * x).sum::<f64>())
        .sum();
    Ok(h.spacing() * t * (2.0 * s).sqrt())
}

/// Far-field delocalized length with nearest-neighbour rings only,
/// `sqrt(2) J t n / D^2`.
pub fn sigma_deloc_far_field(n: usize, spacing: f64, kernel: &CouplingKernel, t: f64) -> f64 {
    std::f64::consts::SQRT_2 * kernel.strength * t * n as f64 / (spacing * spacing)
}

/// Far-field localized length, `sqrt(2) J t sqrt(n) / D^2`.
pub fn sigma_loc_far_field(n: usize, spacing: f64, kernel: &CouplingKernel, t: f64) -> f64 {
    std::f64::consts::SQRT_2 * kernel.strength * t * (n as f64).sqrt() / (spacing * spacing)
}

/// Point-dipole far-field table: every site of a ring `j` rings away is at
/// distance `jD`.
pub fn far_field_block_coefficients(
    n: usize,
    rings: usize,
    spacing: f64,
    kernel: &CouplingKernel,
) -> Result<BlockCoefficients> {
    if rings % 2 == 0 {
        return Err(Error::invalid("N", format!("must be odd, got {rings}")));
    }
    let mut table = vec![0.0; n * rings];
    for j in 1..rings {
        let v = kernel.coupling(j.min(rings - j) as f64 * spacing);
        table[j * n..(j + 1) * n].fill(v);
    }
    BlockCoefficients::from_table(n, rings, spacing, table)
}

/// `sqrt(sum_{j=1..T} j^-4)`: all-ring over nearest-ring far-field ratio.
pub fn all_interaction_correction(half_rings: usize) -> f64 {
    (1..=half_rings).map(|j| (j as f64).powi(-4)).sum::<f64>().sqrt()
}

/// Second-order short-time ring populations for a real initial amplitude
/// table `alpha` (`N x n`, rows are ring slots, middle slot at `T`):
///
/// `p_R = sum_S [alpha_RS^2 + t^2 (sum_jk h_jk alpha_{R+j,S+k})^2]`
///
/// with indices taken cyclically. The `-t^2 alpha (H^2 alpha)` correction is
/// omitted; it vanishes from `sigma` for states confined to the middle ring.
pub fn short_time_ring_populations(alpha: &DMatrix<f64>, h: &BlockCoefficients, t: f64) -> Result<RingPopulations> {
    let (rings, n) = (h.ring_count(), h.sites_per_ring());
    if alpha.nrows() != rings || alpha.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: rings * n,
            found: alpha.len(),
        });
    }
    require_odd(1, rings)?;
    let norm: f64 = alpha.iter().map(|a| a * a).sum();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::invalid("alpha", format!("must be normalized, sum alpha^2 = {norm}")));
    }
    let t2 = t * t;
    let half = h.half_rings() as f64;
    let mut p = vec![0.0; rings];
    for (r, pr) in p.iter_mut().enumerate() {
        for s in 0..n {
            let mut drive = 0.0;
            for j in 0..rings {
                for k in 0..n {
                    drive += h.get(j, k) * alpha[((r + j) % rings, (s + k) % n)];
                }
            }
            *pr += alpha[(r, s)].powi(2) + t2 * drive * drive;
        }
    }
    let offsets = (0..rings).map(|r| r as f64 - half).collect();
    RingPopulations::new(offsets, p)
}

/// Tight-binding chain with dephasing,
/// `sigma^2 = (4 J^2 / gamma) [t - (1 - exp(-gamma t)) / gamma]`.
pub fn haken_strobl_reference_sigma(coupling: f64, gamma: f64, t: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid("t", format!("must be >= 0, got {t}")));
    }
    let x = gamma * t;
    // t - (1 - e^-x)/gamma without cancellation at small x
    let bracket = (x + (-x).exp_m1()) / gamma;
    Ok((4.0 * coupling * coupling / gamma * bracket).max(0.0).sqrt())
}

/// Largest `n_A * n_B` accepted by [`supertransfer_pair_probability`].
pub const SUPERTRANSFER_SIZE_CAP: usize = 36;

/// Transfer probabilities between two clusters coupled pairwise by
/// `gamma_c` (equal on-site energies, no intra-cluster hopping), from exact
/// single-excitation evolution.
///
/// Returns `(P_sym, P_loc)`: symmetric donor state to symmetric acceptor
/// state, and one donor site to one acceptor site.
pub fn supertransfer_pair_probability(n_a: usize, n_b: usize, gamma_c: f64, t: f64) -> Result<(f64, f64)> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::invalid("n_A, n_B", "clusters must be non-empty"));
    }
    if n_a * n_b > SUPERTRANSFER_SIZE_CAP {
        return Err(Error::invalid(
            "n_A * n_B",
            format!("{} exceeds the cap of {SUPERTRANSFER_SIZE_CAP}", n_a * n_b),
        ));
    }
    if !gamma_c.is_finite() || !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid("gamma_c, t", "must be finite, t >= 0"));
    }
    let dim = n_a + n_b;
    let matrix = DMatrix::from_fn(dim, dim, |i, j| {
        if (i < n_a) != (j < n_a) {
            gamma_c
        } else {
            0.0
        }
    });
    let prop = ClosedPropagator::new(&Hamiltonian::from_matrix(matrix)?)?;

    let sym = |lo: usize, len: usize| {
        let mut v = DVector::zeros(dim);
        let amp = Complex64::new(1.0 / (len as f64).sqrt(), 0.0);
        for i in lo..lo + len {
            v[i] = amp;
        }
        v
    };
    let donor = sym(0, n_a);
    let acceptor = sym(n_a, n_b);
    let p_sym = acceptor.dotc(&prop.propagate(&donor, t)?).norm_sqr();

    let mut site = DVector::zeros(dim);
    site[0] = Complex64::new(1.0, 0.0);
    let p_loc = prop.propagate(&site, t)?[n_a].norm_sqr();
    Ok((p_sym, p_loc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{assemble_hamiltonian, extract_block_coefficients};
    use crate::dynamics::{delocalized_state, localized_state, ClosedPropagator, InitialStateKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn kernel() -> CouplingKernel {
        CouplingKernel::default()
    }

    #[test]
    fn ring_population_examples() {
        let lat = SiteLattice::ring_stack(4, 5, 1.0, 10.0).unwrap();
        for state in [
            delocalized_state(&lat, 0).unwrap(),
            InitialStateKind::Localized.prepare(&lat).unwrap(),
        ] {
            let p = ring_populations(&state, &lat).unwrap();
            assert_eq!(p.p, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
            assert_eq!(diffusion_length(&p, 10.0), 0.0);
        }
        let uniform = QuantumState::Pure(DVector::from_element(20, Complex64::new(20f64.sqrt().recip(), 0.0)));
        let p = ring_populations(&uniform, &lat).unwrap();
        assert!(p.p.iter().all(|x| (x - 0.2).abs() < 1e-12));
        let wrong = localized_state(&SiteLattice::ring_stack(4, 3, 1.0, 10.0).unwrap(), 0).unwrap();
        assert!(ring_populations(&wrong, &lat).is_err());
    }

    #[test]
    fn diffusion_length_examples() {
        let p = RingPopulations::new(vec![-1.0, 0.0, 1.0], vec![0.5, 0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(diffusion_length(&p, 10.0), 10.0, epsilon = 1e-14);
        let p = RingPopulations::new(vec![-2.0, -1.0, 0.0, 1.0, 2.0], vec![0.25, 0.0, 0.5, 0.0, 0.25]).unwrap();
        assert_abs_diff_eq!(diffusion_length(&p, 1.0), 2f64.sqrt(), epsilon = 1e-14);
        let noisy = RingPopulations::new(vec![-1.0, 0.0, 1.0], vec![-5e-10, 1.0, 0.0]).unwrap();
        assert_eq!(diffusion_length(&noisy, 1.0), 0.0);
    }

    #[test]
    fn renormalization() {
        let p = RingPopulations::new(vec![-1.0, 0.0, 1.0], vec![0.1, 0.2, 0.1]).unwrap();
        let q = p.renormalized().unwrap();
        assert_abs_diff_eq!(q.total(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.p[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn nearest_neighbour_closed_forms() {
        let k = kernel();
        for n in 1..=7 {
            let h = BlockCoefficients::nearest_neighbor_symmetric(n, 31, 10.0, &k).unwrap();
            let deloc = sigma_deloc_analytic(&h, 1.0).unwrap();
            let loc = sigma_loc_analytic(&h, 1.0).unwrap();
            assert_abs_diff_eq!(deloc, sigma_deloc_far_field(n, 10.0, &k, 1.0), epsilon = 1e-16);
            assert_abs_diff_eq!(loc, sigma_loc_far_field(n, 10.0, &k, 1.0), epsilon = 1e-16);
        }
        assert_abs_diff_eq!(sigma_deloc_far_field(5, 10.0, &k, 1.0), 2f64.sqrt() * 0.05, epsilon = 1e-16);
    }

    #[test]
    fn all_interaction_factor() {
        let k = kernel();
        let h = far_field_block_coefficients(5, 31, 10.0, &k).unwrap();
        let ratio = sigma_deloc_analytic(&h, 1.0).unwrap() / sigma_deloc_far_field(5, 10.0, &k, 1.0);
        let direct: f64 = (1..=15).map(|j| (j as f64).powi(-4)).sum::<f64>().sqrt();
        assert_abs_diff_eq!(ratio, direct, epsilon = 1e-12);
        assert_abs_diff_eq!(ratio, 1.0403, epsilon = 1e-4);
        let limit = std::f64::consts::PI.powi(2) / 90f64.sqrt();
        assert_abs_diff_eq!(all_interaction_correction(100_000), limit, epsilon = 1e-12);
    }

    #[test]
    fn interference_stops_delocalized_spread() {
        // blocks summing to zero over k
        let h = BlockCoefficients::nearest_neighbor_block(5, 10.0, &[1e-3, -1e-3, 2e-3, -2e-3]).unwrap();
        assert_eq!(sigma_deloc_analytic(&h, 1.0).unwrap(), 0.0);
        assert!(sigma_loc_analytic(&h, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn single_site_rings_agree() {
        let h = extract_block_coefficients(1, 31, 1.0, 1.0, &kernel()).unwrap();
        assert_eq!(sigma_deloc_analytic(&h, 0.5).unwrap(), sigma_loc_analytic(&h, 0.5).unwrap());
    }

    #[test]
    fn cauchy_schwarz_bound() {
        for spacing in [0.1, 1.0, 10.0] {
            for n in 1..=7 {
                let h = extract_block_coefficients(n, 31, 1.0, spacing, &kernel()).unwrap();
                let deloc = sigma_deloc_analytic(&h, 1.0).unwrap();
                let loc = sigma_loc_analytic(&h, 1.0).unwrap();
                let bound = (n as f64).sqrt() * loc;
                assert!(deloc <= bound * (1.0 + 1e-12));
                if n > 2 {
                    assert!(deloc < bound * (1.0 - 1e-9), "n={n}, D={spacing}");
                }
            }
        }
        let h = far_field_block_coefficients(6, 31, 10.0, &kernel()).unwrap();
        let deloc = sigma_deloc_analytic(&h, 1.0).unwrap();
        let loc = sigma_loc_analytic(&h, 1.0).unwrap();
        assert_abs_diff_eq!(deloc, 6f64.sqrt() * loc, epsilon = 1e-15);
    }

    #[test]
    fn analytic_ignores_intra_ring_couplings() {
        let mut h = extract_block_coefficients(5, 31, 1.0, 2.0, &kernel()).unwrap();
        let before = (sigma_deloc_analytic(&h, 1.0).unwrap(), sigma_loc_analytic(&h, 1.0).unwrap());
        h.row_mut(0).iter_mut().for_each(|x| *x += 0.37);
        let after = (sigma_deloc_analytic(&h, 1.0).unwrap(), sigma_loc_analytic(&h, 1.0).unwrap());
        assert_eq!(before.0.to_bits(), after.0.to_bits());
        assert_eq!(before.1.to_bits(), after.1.to_bits());
    }

    #[test]
    fn far_field_linear_in_n() {
        let k = kernel();
        let base = sigma_deloc_analytic(&far_field_block_coefficients(1, 31, 100.0, &k).unwrap(), 1.0).unwrap();
        for n in 2..=10 {
            let s = sigma_deloc_analytic(&far_field_block_coefficients(n, 31, 100.0, &k).unwrap(), 1.0).unwrap();
            assert_abs_diff_eq!(s / base, n as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn even_ring_count_rejected() {
        let h = BlockCoefficients::nearest_neighbor_symmetric(3, 6, 10.0, &kernel()).unwrap();
        assert!(sigma_deloc_analytic(&h, 1.0).is_err());
        assert!(sigma_loc_analytic(&h, 1.0).is_err());
    }

    fn canonical_alpha(n: usize, rings: usize, localized: bool) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(rings, n);
        let mid = (rings - 1) / 2;
        if localized {
            a[(mid, 0)] = 1.0;
        } else {
            a.row_mut(mid).fill(1.0 / (n as f64).sqrt());
        }
        a
    }

    #[test]
    fn short_time_formula_reproduces_closed_forms() {
        for spacing in [0.5, 1.0, 10.0] {
            for n in [1, 3, 4, 6] {
                let h = extract_block_coefficients(n, 11, 1.0, spacing, &kernel()).unwrap();
                let t = 0.3;
                for (localized, expected) in [
                    (false, sigma_deloc_analytic(&h, t).unwrap()),
                    (true, sigma_loc_analytic(&h, t).unwrap()),
                ] {
                    let p = short_time_ring_populations(&canonical_alpha(n, 11, localized), &h, t).unwrap();
                    let sigma = diffusion_length(&p, spacing);
                    assert!((sigma - expected).abs() <= 1e-12 * expected.max(1e-300), "{sigma} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn short_time_formula_rejects_unnormalized() {
        let h = extract_block_coefficients(3, 5, 1.0, 1.0, &kernel()).unwrap();
        let mut a = canonical_alpha(3, 5, true);
        a[(2, 0)] = 0.9;
        assert!(short_time_ring_populations(&a, &h, 0.1).is_err());
    }

    #[test]
    fn short_time_formula_matches_numerics_for_random_ring_state() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (n, rings, spacing) = (5, 31, 10.0);
        let lat = SiteLattice::ring_stack(n, rings, 1.0, spacing).unwrap();
        let ham = assemble_hamiltonian(&lat, &kernel(), None).unwrap();
        let h = extract_block_coefficients(n, rings, 1.0, spacing, &kernel()).unwrap();
        let prop = ClosedPropagator::new(&ham).unwrap();
        for _ in 0..5 {
            let mut row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.iter_mut().for_each(|x| *x /= norm);
            let mut alpha = DMatrix::zeros(rings, n);
            alpha.row_mut(15).copy_from_slice(&row);
            let t = 0.01;
            let predicted = diffusion_length(&short_time_ring_populations(&alpha, &h, t).unwrap(), spacing);

            let mut psi = DVector::zeros(n * rings);
            for (k, a) in row.iter().enumerate() {
                psi[15 * n + k] = Complex64::new(*a, 0.0);
            }
            let pops = prop.site_populations(&psi, &[t]).unwrap();
            let numeric = diffusion_length(&RingPopulations::from_site_populations(&pops[0], &lat).unwrap(), spacing);
            assert!((numeric - predicted).abs() / predicted < 1e-3, "{numeric} vs {predicted}");
        }
    }

    #[test]
    fn haken_strobl_limits() {
        let (j, gamma) = (1.0, 2.0);
        let long = 1e4;
        let s = haken_strobl_reference_sigma(j, gamma, long).unwrap();
        assert!((s / (2.0 * j * (long / gamma).sqrt()) - 1.0).abs() < 1e-4);
        let short = 1e-5;
        let s = haken_strobl_reference_sigma(j, gamma, short).unwrap();
        assert!((s / (2f64.sqrt() * j * short) - 1.0).abs() < 1e-5);
        // asymptotes cross at t = 2 / gamma
        let cross = 2.0 / gamma;
        assert_abs_diff_eq!(2f64.sqrt() * j * cross, 2.0 * j * (cross / gamma).sqrt(), epsilon = 1e-12);
        assert!(haken_strobl_reference_sigma(j, 0.0, 1.0).is_err());
    }

    #[test]
    fn power_law_examples() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let fit = fit_power_law(&xs, &xs).unwrap();
        assert_abs_diff_eq!(fit.exponent, 1.0, epsilon = 1e-12);
        let ys: Vec<f64> = xs.iter().map(|x| x.sqrt()).collect();
        assert_abs_diff_eq!(fit_power_law(&xs, &ys).unwrap().exponent, 0.5, epsilon = 1e-12);
        assert!(fit_power_law(&[2.0; 4], &[1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(fit_power_law(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_power_law(&[1.0, 2.0, 3.0], &[1.0, -2.0, 3.0]).is_err());
    }

    #[test]
    fn noisy_power_law() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let xs: Vec<f64> = (1..=20).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(0.7) * (1.0 + noise.sample(&mut rng))).collect();
        let fit = fit_power_law(&xs, &ys).unwrap();
        assert!((fit.exponent - 0.7).abs() < 0.03);
        assert!(fit.r_squared > 0.99);
    }

    #[test]
    fn sliding_window_exponents() {
        let times: Vec<f64> = (1..=20).map(|i| 0.1 * i as f64).collect();
        let sigma: Vec<f64> = times.iter().map(|t| t * t).collect();
        let series = DiffusionSeries::new(times, sigma).unwrap();
        let lambda = series.lambda(5).unwrap();
        assert_eq!(lambda.len(), 16);
        assert!(lambda.iter().all(|(_, f)| (f.exponent - 2.0).abs() < 1e-12));
    }

    #[test]
    fn supertransfer_examples() {
        let (ps, pl) = supertransfer_pair_probability(1, 1, 0.3, 0.7).unwrap();
        assert_abs_diff_eq!(ps, (0.21f64).sin().powi(2), epsilon = 1e-12);
        assert_abs_diff_eq!(pl, ps, epsilon = 1e-12);
        for (na, nb) in [(2, 2), (2, 3), (3, 3)] {
            let (ps, pl) = supertransfer_pair_probability(na, nb, 1.0, 1e-3).unwrap();
            assert!((ps / pl / (na * nb) as f64 - 1.0).abs() < 0.01);
            // first-order amplitude gamma_c sqrt(n_A n_B) t
            assert!((ps.sqrt() / (1e-3 * ((na * nb) as f64).sqrt()) - 1.0).abs() < 1e-5);
        }
        assert!(supertransfer_pair_probability(7, 6, 1.0, 1e-3).is_err());
    }

    proptest! {
        #[test]
        fn exponent_is_scale_invariant(c in 1e-3f64..1e3, p in -2.0f64..2.0) {
            let xs: Vec<f64> = (1..=8).map(f64::from).collect();
            let ys: Vec<f64> = xs.iter().map(|x| x.powf(p) * (1.0 + 0.1 * x.sin())).collect();
            let scaled: Vec<f64> = ys.iter().map(|y| c * y).collect();
            let a = fit_power_law(&xs, &ys).unwrap();
            let b = fit_power_law(&xs, &scaled).unwrap();
            prop_assert!((a.exponent - b.exponent).abs() < 1e-12);
            prop_assert!((b.prefactor / a.prefactor / c - 1.0).abs() < 1e-10);
            prop_assert!((0.0..=1.0).contains(&a.r_squared));
        }

        #[test]
        fn closed_populations_sum_to_one(n in 1usize..5, spacing in 0.5f64..10.0, t in 0.0f64..3.0) {
            let lat = SiteLattice::ring_stack(n, 5, 1.0, spacing).unwrap();
            let ham = assemble_hamiltonian(&lat, &kernel(), None).unwrap();
            let psi = InitialStateKind::Localized.prepare(&lat).unwrap();
            let pops = ClosedPropagator::new(&ham).unwrap().site_populations(psi.as_pure().unwrap(), &[t]).unwrap();
            let p = RingPopulations::from_site_populations(&pops[0], &lat).unwrap();
            prop_assert!((p.total() - 1.0).abs() < 1e-6);
            prop_assert!(p.p.iter().all(|x| *x >= -NEGATIVE_POPULATION_TOL));
        }

        #[test]
        fn sigma_is_nonnegative_and_scales_with_spacing(
            p in proptest::collection::vec(0.0f64..1.0, 5),
            spacing in 0.1f64..100.0,
        ) {
            let rp = RingPopulations::new(vec![-2.0, -1.0, 0.0, 1.0, 2.0], p).unwrap();
            let s1 = diffusion_length(&rp, 1.0);
            prop_assert!(s1 >= 0.0);
            prop_assert!((diffusion_length(&rp, spacing) - spacing * s1).abs() <= 1e-12 * spacing * s1.max(1.0));
        }
    }
}
