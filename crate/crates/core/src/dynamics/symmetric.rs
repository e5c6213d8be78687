//! Master-equation propagation reduced by the in-ring rotation symmetry.
//!
//! When `H` is invariant under rotating every ring by one site (and under
//! reflection within the rings), it is block diagonal in the in-ring Fourier
//! basis `|a, q>` with real `N x N` sectors `H_q`. Site dephasing commutes
//! with the rotation, so a rotation-invariant `rho` stays block diagonal,
//! `rho = sum_q rho_q (x) |q><q|`, and the master equation becomes
//!
//! `d rho_q/dt = -i[H_q, rho_q] + gamma (diag(P) - rho_q)`,
//! `P_a = (1/n) sum_q rho_q[a, a]`
//!
//! (`P_a` is the population of each site of ring `a`). Cost per step drops
//! from `(nN)^3` to `n N^3`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use super::lindblad::{default_time_step, drive, haken_strobl_rhs, LindbladOptions};
use super::{check_times, DensityMatrix, OpenSystemParams};
use crate::coupling::Hamiltonian;
use crate::error::{Error, Result};
use crate::spectral::symmetric_eigendecomposition;

const SYMMETRY_TOL: f64 = 1e-12;

fn phase(n: usize, q: usize, d: usize) -> (f64, f64) {
    let theta = 2.0 * PI * ((q * d) % n) as f64 / n as f64;
    theta.sin_cos()
}

/// Rotation-invariant density matrix stored by Fourier sector.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorState {
    n: usize,
    rings: usize,
    re: Vec<DMatrix<f64>>,
    im: Vec<DMatrix<f64>>,
}

impl SectorState {
    /// Uniform superposition over ring `slot`, which lives in sector `q = 0`.
    pub fn delocalized(n: usize, rings: usize, slot: usize) -> Result<Self> {
        if slot >= rings {
            return Err(Error::IndexOutOfRange {
                what: "ring",
                index: slot as i64,
                len: rings,
            });
        }
        let mut re = vec![DMatrix::zeros(rings, rings); n];
        re[0][(slot, slot)] = 1.0;
        Ok(SectorState {
            n,
            rings,
            re,
            im: vec![DMatrix::zeros(rings, rings); n],
        })
    }

    /// Projects a dense density matrix; fails unless it is rotation invariant.
    pub fn from_dense(rho: &DensityMatrix, n: usize) -> Result<Self> {
        let dim = rho.dim();
        if n == 0 || dim % n != 0 {
            return Err(Error::DimensionMismatch {
                expected: n * (dim / n.max(1)),
                found: dim,
            });
        }
        let rings = dim / n;
        let scale = rho.re.amax().max(rho.im.amax()).max(1e-300);
        for a in 0..rings {
            for b in 0..rings {
                for k in 0..n {
                    for m in 0..n {
                        let d = (m + n - k) % n;
                        let (r, c) = (a * n + k, b * n + m);
                        let (r0, c0) = (a * n, b * n + d);
                        let dev = (rho.re[(r, c)] - rho.re[(r0, c0)])
                            .abs()
                            .max((rho.im[(r, c)] - rho.im[(r0, c0)]).abs());
                        if dev > SYMMETRY_TOL * scale {
                            return Err(Error::invalid(
                                "rho0",
                                "state is not invariant under in-ring rotation",
                            ));
                        }
                    }
                }
            }
        }
        let mut re = vec![DMatrix::zeros(rings, rings); n];
        let mut im = vec![DMatrix::zeros(rings, rings); n];
        for q in 0..n {
            for a in 0..rings {
                for b in 0..rings {
                    let (mut sr, mut si) = (0.0, 0.0);
                    for d in 0..n {
                        let (s, c) = phase(n, q, d);
                        let (xr, xi) = (rho.re[(a * n, b * n + d)], rho.im[(a * n, b * n + d)]);
                        sr += xr * c - xi * s;
                        si += xr * s + xi * c;
                    }
                    re[q][(a, b)] = sr;
                    im[q][(a, b)] = si;
                }
            }
        }
        Ok(SectorState { n, rings, re, im })
    }

    pub fn to_dense(&self) -> DensityMatrix {
        let (n, rings) = (self.n, self.rings);
        let dim = n * rings;
        let mut re = DMatrix::zeros(dim, dim);
        let mut im = DMatrix::zeros(dim, dim);
        for a in 0..rings {
            for b in 0..rings {
                for d in 0..n {
                    // rho_{(a,k),(b,k+d)} = (1/n) sum_q rho_q[a,b] exp(-i theta q d)
                    let (mut sr, mut si) = (0.0, 0.0);
                    for q in 0..n {
                        let (s, c) = phase(n, q, d);
                        let (xr, xi) = (self.re[q][(a, b)], self.im[q][(a, b)]);
                        sr += xr * c + xi * s;
                        si += xi * c - xr * s;
                    }
                    for k in 0..n {
                        let m = (k + d) % n;
                        re[(a * n + k, b * n + m)] = sr / n as f64;
                        im[(a * n + k, b * n + m)] = si / n as f64;
                    }
                }
            }
        }
        DensityMatrix { re, im }
    }

    /// Population of each ring slot.
    pub fn ring_populations(&self) -> Vec<f64> {
        (0..self.rings)
            .map(|a| self.re.iter().map(|m| m[(a, a)]).sum())
            .collect()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.n * self.rings * self.rings);
        for q in 0..self.n {
            y.extend_from_slice(self.re[q].as_slice());
            y.extend_from_slice(self.im[q].as_slice());
        }
        y
    }

    fn unflatten(n: usize, rings: usize, y: &[f64], factor: f64) -> Self {
        let block = rings * rings;
        let mut re = Vec::with_capacity(n);
        let mut im = Vec::with_capacity(n);
        for q in 0..n {
            let base = 2 * q * block;
            re.push(DMatrix::from_column_slice(rings, rings, &y[base..base + block]) * factor);
            im.push(DMatrix::from_column_slice(rings, rings, &y[base + block..base + 2 * block]) * factor);
        }
        SectorState { n, rings, re, im }
    }
}

/// Fourier sectors `H_q` of a rotation-invariant ring-stack Hamiltonian.
#[derive(Debug, Clone)]
pub struct RingSymmetricSystem {
    n: usize,
    rings: usize,
    sectors: Vec<DMatrix<f64>>,
}

impl RingSymmetricSystem {
    /// Fails unless `H` is invariant under in-ring rotation and reflection.
    pub fn new(h: &Hamiltonian, n: usize) -> Result<Self> {
        let dim = h.dim();
        if n == 0 || dim % n != 0 {
            return Err(Error::DimensionMismatch {
                expected: n * (dim / n.max(1)),
                found: dim,
            });
        }
        let rings = dim / n;
        let m = h.matrix();
        let scale = m.amax().max(1e-300);
        let g = |a: usize, b: usize, d: usize| m[(a * n, b * n + d % n)];
        for a in 0..rings {
            for b in 0..rings {
                for k in 0..n {
                    for l in 0..n {
                        let d = (l + n - k) % n;
                        let rot = (m[(a * n + k, b * n + l)] - g(a, b, d)).abs();
                        let refl = (g(a, b, d) - g(a, b, n - d)).abs();
                        if rot.max(refl) > SYMMETRY_TOL * scale {
                            return Err(Error::invalid(
                                "hamiltonian",
                                "not invariant under in-ring rotation and reflection",
                            ));
                        }
                    }
                }
            }
        }
        let sectors = (0..n)
            .map(|q| {
                DMatrix::from_fn(rings, rings, |a, b| {
                    (0..n).map(|d| g(a, b, d) * phase(n, q, d).1).sum()
                })
            })
            .collect();
        Ok(RingSymmetricSystem { n, rings, sectors })
    }

    pub fn sector(&self, q: usize) -> &DMatrix<f64> {
        &self.sectors[q]
    }

    pub fn sites_per_ring(&self) -> usize {
        self.n
    }

    pub fn ring_count(&self) -> usize {
        self.rings
    }

    /// `||H||`, the largest magnitude over all sector spectra.
    pub fn operator_norm(&self) -> Result<f64> {
        let mut norm = 0.0f64;
        for s in &self.sectors {
            let eig = symmetric_eigendecomposition(s)?;
            norm = eig.eigenvalues.iter().fold(norm, |acc, e| acc.max(e.abs()));
        }
        Ok(norm)
    }

    fn run<O>(
        &self,
        params: &OpenSystemParams,
        rho0: &SectorState,
        times: &[f64],
        opts: &LindbladOptions,
        mut observe: O,
    ) -> Result<()>
    where
        O: FnMut(f64, &[f64]),
    {
        check_times(times)?;
        if rho0.n != self.n || rho0.rings != self.rings {
            return Err(Error::DimensionMismatch {
                expected: self.n * self.rings,
                found: rho0.n * rho0.rings,
            });
        }
        let dt = match opts.dt_override {
            Some(dt) if !(dt.is_finite() && dt > 0.0) => {
                return Err(Error::invalid(
                    "integrator.dt_override",
                    format!("must be positive, got {dt}"),
                ))
            }
            Some(dt) => dt,
            None => default_time_step(self.operator_norm()?, params.gamma),
        };
        let (n, rings, gamma) = (self.n, self.rings, params.gamma);
        let block = rings * rings;
        let mut h_re = DMatrix::zeros(rings, rings);
        let mut h_im = DMatrix::zeros(rings, rings);
        let mut site_pop = vec![0.0; rings];
        let rhs = |y: &[f64], out: &mut [f64]| {
            for (a, p) in site_pop.iter_mut().enumerate() {
                *p = (0..n).map(|q| y[2 * q * block + a * rings + a]).sum::<f64>() / n as f64;
            }
            for q in 0..n {
                let base = 2 * q * block;
                let (re, im) = y[base..base + 2 * block].split_at(block);
                let (o_re, o_im) = out[base..base + 2 * block].split_at_mut(block);
                haken_strobl_rhs(
                    &self.sectors[q],
                    0.0,
                    DMatrixView::from_slice(re, rings, rings),
                    DMatrixView::from_slice(im, rings, rings),
                    DMatrixViewMut::from_slice(o_re, rings, rings),
                    DMatrixViewMut::from_slice(o_im, rings, rings),
                    &mut h_re,
                    &mut h_im,
                );
                if gamma != 0.0 {
                    for i in 0..block {
                        o_re[i] -= gamma * re[i];
                        o_im[i] -= gamma * im[i];
                    }
                    for (a, p) in site_pop.iter().enumerate() {
                        o_re[a * rings + a] += gamma * p;
                    }
                }
            }
        };
        let min_population = |y: &[f64]| {
            (0..rings)
                .map(|a| (0..n).map(|q| y[2 * q * block + a * rings + a]).sum::<f64>() / n as f64)
                .fold(f64::INFINITY, f64::min)
        };
        drive(
            times,
            rho0.flatten(),
            dt,
            opts.positivity_tolerance,
            rhs,
            min_population,
            |_, t, y| observe(t, y),
        )
    }

    pub fn evolve(
        &self,
        params: &OpenSystemParams,
        rho0: &SectorState,
        times: &[f64],
        opts: &LindbladOptions,
    ) -> Result<Vec<SectorState>> {
        let mut out = Vec::with_capacity(times.len());
        self.run(params, rho0, times, opts, |t, y| {
            out.push(SectorState::unflatten(self.n, self.rings, y, params.decay_factor(t)));
        })?;
        Ok(out)
    }

    /// Ring-slot populations at each sample time.
    pub fn ring_populations(
        &self,
        params: &OpenSystemParams,
        rho0: &SectorState,
        times: &[f64],
        opts: &LindbladOptions,
    ) -> Result<Vec<Vec<f64>>> {
        let (n, rings) = (self.n, self.rings);
        let block = rings * rings;
        let mut out = Vec::with_capacity(times.len());
        self.run(params, rho0, times, opts, |t, y| {
            let f = params.decay_factor(t);
            out.push(
                (0..rings)
                    .map(|a| f * (0..n).map(|q| y[2 * q * block + a * rings + a]).sum::<f64>())
                    .collect(),
            );
        })?;
        Ok(out)
    }
}
