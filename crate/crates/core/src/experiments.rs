//! Parameter sweeps and disorder ensembles.
//!
//! Work items run on the rayon pool; results are gathered in item order, so
//! a grid is bit-identical for any pool size.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{assemble_hamiltonian, extract_block_coefficients, sample_disorder_with, CouplingKernel, Hamiltonian};
use crate::dynamics::{
    lindblad_site_populations, ClosedPropagator, InitialStateKind, LindbladOptions, OpenSystemParams,
    RingSymmetricSystem, SectorState,
};
use crate::error::{Error, Result};
use crate::lattice::{GeometryKind, SiteLattice};
use crate::observables::{
    diffusion_length, fit_power_law, sigma_deloc_analytic, sigma_loc_analytic, DiffusionSeries, RingPopulations,
};
use crate::seed::realization_rng;
use crate::spectral::operator_norm_bound;

/// Exponent value taken as the midpoint of the coherent (1) to classical
/// (1/2) transition.
pub const CROSSOVER_LEVEL: f64 = 0.75;

/// `t * ||H||` targeted when near-field times are rescaled.
pub const NEAR_FIELD_TIME_SCALE: f64 = 0.1;

/// Relative tolerance on `tr(rho) = exp(-2 kappa t)` checked on every run.
const TRACE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Scaling,
    Helix,
    Disorder,
    Dephasing,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Helix => "helix",
            ExperimentKind::Disorder => "disorder",
            ExperimentKind::Dephasing => "dephasing",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaling" => Ok(ExperimentKind::Scaling),
            "helix" => Ok(ExperimentKind::Helix),
            "disorder" => Ok(ExperimentKind::Disorder),
            "dephasing" => Ok(ExperimentKind::Dephasing),
            other => Err(Error::invalid(
                "experiment.kind",
                format!("expected scaling, helix, disorder or dephasing, got {other:?}"),
            )),
        }
    }
}

/// Default sizes for sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `n = 1..10`, 500 realizations.
    Paper,
    /// `n = 1..6`, 50 realizations.
    Fast,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Fast => "fast",
        }
    }

    pub fn n_values(self) -> Vec<usize> {
        match self {
            Profile::Paper => (1..=10).collect(),
            Profile::Fast => (1..=6).collect(),
        }
    }

    pub fn realizations(self) -> usize {
        match self {
            Profile::Paper => 500,
            Profile::Fast => 50,
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "fast" => Ok(Profile::Fast),
            other => Err(Error::invalid("profile", format!("expected paper or fast, got {other:?}"))),
        }
    }
}

/// Everything a sweep needs. Every list is a grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: ExperimentKind,
    pub geometry: GeometryKind,
    pub n_values: Vec<usize>,
    pub rings: usize,
    pub radius: f64,
    pub spacings: Vec<f64>,
    pub coupling: f64,
    pub gammas: Vec<f64>,
    pub kappa: f64,
    /// Nominal sample times.
    pub times: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub states: Vec<InitialStateKind>,
    /// For `spacing <= radius`, rescale the time grid so its last time is
    /// `0.1 / ||H||`.
    pub near_field_autoscale: bool,
    /// Divide ring populations by the surviving trace before taking `sigma`.
    pub renormalize: bool,
    pub dt_override: Option<f64>,
    /// Samples per sliding `lambda` window (odd).
    pub lambda_window: usize,
    /// `sigma` values whose level curves `Sigma(n)` are extracted from
    /// disorder sweeps.
    pub sigma_levels: Vec<f64>,
}

impl SweepSpec {
    /// Figure-scale defaults: `(N, R, D) = (31, 1, 10)`, `J = 1`, `t = 1`.
    pub fn with_profile(kind: ExperimentKind, profile: Profile) -> Self {
        let (geometry, gammas, sigmas, times) = match kind {
            ExperimentKind::Scaling => (GeometryKind::RingStack, vec![0.0], vec![0.0], vec![1.0]),
            ExperimentKind::Helix => (GeometryKind::Helix, vec![0.0], vec![0.0], vec![1.0]),
            ExperimentKind::Disorder => (
                GeometryKind::RingStack,
                vec![0.0],
                (-4..=2).map(|e| 10f64.powi(e)).collect(),
                vec![0.5, 0.5f64.sqrt(), 1.0, 2f64.sqrt(), 2.0],
            ),
            ExperimentKind::Dephasing => (
                GeometryKind::RingStack,
                vec![0.1, 1.0, 10.0],
                vec![0.0],
                crate::dynamics::log_times(1e-3, 10.0, 25),
            ),
        };
        SweepSpec {
            kind,
            geometry,
            n_values: profile.n_values(),
            rings: 31,
            radius: 1.0,
            spacings: vec![10.0],
            coupling: 1.0,
            gammas,
            kappa: 0.0,
            times,
            sigmas,
            realizations: if kind == ExperimentKind::Disorder { profile.realizations() } else { 1 },
            seed: 0,
            states: vec![InitialStateKind::Delocalized, InitialStateKind::Localized],
            near_field_autoscale: true,
            renormalize: false,
            dt_override: None,
            lambda_window: 5,
            sigma_levels: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::invalid(name, "list must not be empty"))
            } else {
                Ok(())
            }
        };
        nonempty("n_values", self.n_values.len())?;
        nonempty("spacings", self.spacings.len())?;
        nonempty("gammas", self.gammas.len())?;
        nonempty("times", self.times.len())?;
        nonempty("sigmas", self.sigmas.len())?;
        nonempty("states", self.states.len())?;
        if self.n_values.contains(&0) {
            return Err(Error::invalid("n_values", "n must be at least 1"));
        }
        if self.rings == 0 {
            return Err(Error::invalid("N", "must be at least 1"));
        }
        if self.realizations == 0 {
            return Err(Error::invalid("realizations", "must be at least 1"));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::invalid("R", "must be positive"));
        }
        if self.spacings.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid("spacings", "must be positive"));
        }
        CouplingKernel::new(self.coupling)?;
        for &g in &self.gammas {
            OpenSystemParams::new(g, self.kappa)?;
        }
        if self.sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("sigmas", "must be >= 0"));
        }
        crate::dynamics::check_times(&self.times)?;
        if self.lambda_window < 3 || self.lambda_window % 2 == 0 {
            return Err(Error::invalid("lambda_window", "must be odd and at least 3"));
        }
        let closed_only = |what: &str| -> Result<()> {
            if self.gammas.iter().any(|&g| g != 0.0) {
                return Err(Error::invalid("gammas", format!("{what} sweeps are closed-system (gamma = 0)")));
            }
            Ok(())
        };
        let clean_only = |what: &str| -> Result<()> {
            if self.sigmas.iter().any(|&s| s != 0.0) {
                return Err(Error::invalid("sigmas", format!("{what} sweeps run without disorder")));
            }
            Ok(())
        };
        match self.kind {
            ExperimentKind::Scaling => {
                closed_only("scaling")?;
                clean_only("scaling")?;
                if self.kappa != 0.0 {
                    return Err(Error::invalid("kappa", "scaling sweeps are closed-system (kappa = 0)"));
                }
            }
            ExperimentKind::Helix => {
                closed_only("helix")?;
                clean_only("helix")?;
            }
            ExperimentKind::Disorder => closed_only("disorder")?,
            ExperimentKind::Dephasing => clean_only("dephasing")?,
        }
        Ok(())
    }

    fn kernel(&self) -> CouplingKernel {
        CouplingKernel { strength: self.coupling }
    }

    fn options(&self) -> LindbladOptions {
        LindbladOptions {
            dt_override: self.dt_override,
            ..Default::default()
        }
    }

    fn lattice(&self, geometry: GeometryKind, n: usize, spacing: f64) -> Result<SiteLattice> {
        SiteLattice::build(geometry, n, self.rings, self.radius, spacing)
    }

    /// Sample times actually used for a lattice with operator norm `norm`.
    pub fn effective_times(&self, spacing: f64, norm: f64) -> Vec<f64> {
        let last = *self.times.last().expect("validated non-empty");
        if self.near_field_autoscale && spacing <= self.radius && norm > 0.0 && last > 0.0 {
            let scale = NEAR_FIELD_TIME_SCALE / (norm * last);
            self.times.iter().map(|t| t * scale).collect()
        } else {
            self.times.clone()
        }
    }
}

/// Values along one grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValues {
    Real(Vec<f64>),
    Label(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: AxisValues,
}

impl Axis {
    pub fn real(name: &str, values: Vec<f64>) -> Self {
        Axis {
            name: name.into(),
            values: AxisValues::Real(values),
        }
    }

    pub fn label(name: &str, values: Vec<String>) -> Self {
        Axis {
            name: name.into(),
            values: AxisValues::Label(values),
        }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            AxisValues::Real(v) => v.len(),
            AxisValues::Label(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn format(&self, i: usize) -> String {
        match &self.values {
            AxisValues::Real(v) => crate::io::format_number(v[i]),
            AxisValues::Label(v) => v[i].clone(),
        }
    }

    /// Index of the entry equal to `value` (labels compare as strings).
    pub fn position(&self, value: &str) -> Option<usize> {
        match &self.values {
            AxisValues::Real(v) => {
                let x: f64 = value.parse().ok()?;
                v.iter().position(|y| (y - x).abs() <= 1e-12 * x.abs().max(1.0))
            }
            AxisValues::Label(v) => v.iter().position(|y| y == value),
        }
    }
}

/// A named array laid out over the grid (row-major in axis order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub values: Vec<f64>,
}

/// A derived scalar that is not attached to a single grid point (fitted
/// exponents, crossovers, level curves).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub name: String,
    pub keys: Vec<(String, String)>,
    pub value: f64,
    pub r_squared: Option<f64>,
}

impl SummaryRecord {
    pub fn key(&self, name: &str) -> Option<&str> {
        self.keys.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    /// True when every `(key, value)` pair matches.
    pub fn matches(&self, filter: &[(&str, &str)]) -> bool {
        filter.iter().all(|(k, v)| self.key(k) == Some(*v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub kind: ExperimentKind,
    pub axes: Vec<Axis>,
    pub stats: Vec<Statistic>,
    pub records: Vec<SummaryRecord>,
}

impl SweepGrid {
    fn new(kind: ExperimentKind, axes: Vec<Axis>) -> Self {
        SweepGrid {
            kind,
            axes,
            stats: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.axes.len());
        index
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, axis)| acc * axis.len() + i)
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.axes.len()];
        for (slot, axis) in index.iter_mut().zip(&self.axes).rev() {
            *slot = flat % axis.len();
            flat /= axis.len();
        }
        index
    }

    pub fn axis(&self, name: &str) -> Option<&Axis> {
        self.axes.iter().find(|a| a.name == name)
    }

    pub fn stat(&self, name: &str) -> Option<&[f64]> {
        self.stats.iter().find(|s| s.name == name).map(|s| s.values.as_slice())
    }

    pub fn get(&self, name: &str, index: &[usize]) -> Option<f64> {
        self.stat(name).map(|v| v[self.flat_index(index)])
    }

    /// Grid index from `(axis, value)` pairs covering every axis.
    pub fn locate(&self, coords: &[(&str, &str)]) -> Option<Vec<usize>> {
        self.axes
            .iter()
            .map(|axis| {
                let (_, v) = coords.iter().find(|(k, _)| *k == axis.name)?;
                axis.position(v)
            })
            .collect()
    }

    pub fn records_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a SummaryRecord> + 'a {
        self.records.iter().filter(move |r| r.name == name)
    }

    fn push_stat(&mut self, name: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.len());
        self.stats.push(Statistic {
            name: name.into(),
            values,
        });
    }

    /// Labels of the axes at `index`, for record keys.
    fn keys_at(&self, index: &[usize], skip: &[&str]) -> Vec<(String, String)> {
        self.axes
            .iter()
            .zip(index)
            .filter(|(a, _)| !skip.contains(&a.name.as_str()))
            .map(|(a, &i)| (a.name.clone(), a.format(i)))
            .collect()
    }

    /// Every index with the axis `along` pinned to 0.
    fn lines(&self, along: usize) -> Vec<Vec<usize>> {
        (0..self.len())
            .map(|f| self.unravel(f))
            .filter(|idx| idx[along] == 0)
            .collect()
    }

    /// Sliding-window local exponent of `stat` against `x_stat` along axis
    /// `along`, stored at the window centre (NaN where no full window fits).
    fn local_exponent_stat(&mut self, name: &str, stat: &str, x_stat: &str, along: usize, window: usize) {
        let y = self.stat(stat).expect("stat present").to_vec();
        let x = self.stat(x_stat).expect("x stat present").to_vec();
        let mut out = vec![f64::NAN; self.len()];
        let half = window / 2;
        let len = self.axes[along].len();
        for base in self.lines(along) {
            let flat: Vec<usize> = (0..len)
                .map(|i| {
                    let mut idx = base.clone();
                    idx[along] = i;
                    self.flat_index(&idx)
                })
                .collect();
            for c in half..len.saturating_sub(half) {
                let span = &flat[c - half..=c + half];
                let xs: Vec<f64> = span.iter().map(|&f| x[f]).collect();
                let ys: Vec<f64> = span.iter().map(|&f| y[f]).collect();
                if let Ok(fit) = fit_power_law(&xs, &ys) {
                    out[flat[c]] = fit.exponent;
                }
            }
        }
        self.push_stat(name, out);
    }

    /// Power-law fit of `stat` against the real axis `along` for every line.
    fn fit_records(&mut self, name: &str, stat: &str, along: usize) {
        let y = self.stat(stat).expect("stat present").to_vec();
        let xs = match &self.axes[along].values {
            AxisValues::Real(v) => v.clone(),
            AxisValues::Label(_) => return,
        };
        if xs.len() < 3 {
            return;
        }
        let along_name = self.axes[along].name.clone();
        let mut records = Vec::new();
        for base in self.lines(along) {
            let ys: Vec<f64> = (0..xs.len())
                .map(|i| {
                    let mut idx = base.clone();
                    idx[along] = i;
                    y[self.flat_index(&idx)]
                })
                .collect();
            if let Ok(fit) = fit_power_law(&xs, &ys) {
                records.push(SummaryRecord {
                    name: name.into(),
                    keys: self.keys_at(&base, &[&along_name]),
                    value: fit.exponent,
                    r_squared: Some(fit.r_squared),
                });
            }
        }
        self.records.extend(records);
    }

    /// First point along `along` where `stat` drops below `level`,
    /// log-interpolated in the abscissa `x_stat`.
    fn crossing_records(&mut self, name: &str, stat: &str, x_stat: &str, along: usize, level: f64) {
        let y = self.stat(stat).expect("stat present").to_vec();
        let x = self.stat(x_stat).expect("x stat present").to_vec();
        let len = self.axes[along].len();
        let along_name = self.axes[along].name.clone();
        let mut records = Vec::new();
        for base in self.lines(along) {
            let pts: Vec<(f64, f64)> = (0..len)
                .map(|i| {
                    let mut idx = base.clone();
                    idx[along] = i;
                    let f = self.flat_index(&idx);
                    (x[f], y[f])
                })
                .filter(|(_, v)| v.is_finite())
                .collect();
            if let Some(xc) = first_downward_crossing(&pts, level) {
                records.push(SummaryRecord {
                    name: name.into(),
                    keys: self.keys_at(&base, &[&along_name]),
                    value: xc,
                    r_squared: None,
                });
            }
        }
        self.records.extend(records);
    }
}

/// Abscissa of the first crossing of `level` from above, interpolated
/// linearly in `(ln x, y)`.
pub fn first_downward_crossing(points: &[(f64, f64)], level: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y0 >= level && y1 < level && x0 > 0.0 && x1 > 0.0 {
            let f = (y0 - level) / (y0 - y1);
            Some((x0.ln() + f * (x1.ln() - x0.ln())).exp())
        } else {
            None
        }
    })
}

/// Same with the level approached from below.
pub fn first_upward_crossing(points: &[(f64, f64)], level: f64) -> Option<f64> {
    let flipped: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x, -y)).collect();
    first_downward_crossing(&flipped, -level)
}

fn state_axis(states: &[InitialStateKind]) -> Axis {
    Axis::label("state", states.iter().map(|s| s.as_str().to_string()).collect())
}

fn n_axis(ns: &[usize]) -> Axis {
    Axis::real("n", ns.iter().map(|&n| n as f64).collect())
}

fn sigma_of(p: &RingPopulations, spacing: f64, renormalize: bool) -> Result<f64> {
    Ok(if renormalize {
        diffusion_length(&p.renormalized()?, spacing)
    } else {
        diffusion_length(p, spacing)
    })
}

fn check_trace(p: &RingPopulations, expected: f64) -> Result<()> {
    let total = p.total();
    if (total - expected).abs() > TRACE_TOL * expected.max(1e-300) {
        return Err(Error::Numerical(format!(
            "trace {total} departs from the expected {expected}"
        )));
    }
    Ok(())
}

/// Ring populations of one trajectory at each time. Pure-state runs with
/// `gamma = 0` use exact propagation (recombination as a prefactor);
/// rotation-invariant open ring-stack runs use the reduced sectors; the
/// rest integrate the dense master equation.
pub fn ring_population_series(
    lat: &SiteLattice,
    h: &Hamiltonian,
    params: &OpenSystemParams,
    state: InitialStateKind,
    times: &[f64],
    opts: &LindbladOptions,
) -> Result<Vec<RingPopulations>> {
    crate::dynamics::check_times(times)?;
    let psi0 = state.prepare(lat)?;
    let slots: Vec<Vec<f64>> = if params.gamma == 0.0 {
        let prop = ClosedPropagator::new(h)?;
        let pops = prop.site_populations(psi0.as_pure().expect("prepared states are pure"), times)?;
        pops.into_iter()
            .zip(times)
            .map(|(p, &t)| {
                let f = params.decay_factor(t);
                sum_rings(lat, &p).into_iter().map(|x| x * f).collect()
            })
            .collect()
    } else if let Some(sys) = symmetric_system(lat, h, state) {
        let rho0 = SectorState::delocalized(lat.sites_per_ring(), lat.ring_count(), lat.middle_slot())?;
        sys.ring_populations(params, &rho0, times, opts)?
    } else {
        lindblad_site_populations(h, params, &psi0, times, opts)?
            .iter()
            .map(|p| sum_rings(lat, p))
            .collect()
    };
    slots
        .into_iter()
        .map(|p| RingPopulations::from_slots(p, lat))
        .collect()
}

fn symmetric_system(lat: &SiteLattice, h: &Hamiltonian, state: InitialStateKind) -> Option<RingSymmetricSystem> {
    if lat.kind() != GeometryKind::RingStack || state != InitialStateKind::Delocalized || lat.sites_per_ring() < 2 {
        return None;
    }
    RingSymmetricSystem::new(h, lat.sites_per_ring()).ok()
}

fn sum_rings(lat: &SiteLattice, site_pops: &[f64]) -> Vec<f64> {
    (0..lat.ring_count())
        .map(|slot| lat.ring_sites(slot).map(|s| site_pops[s]).sum())
        .collect()
}

fn analytic_sigma(
    spec: &SweepSpec,
    n: usize,
    spacing: f64,
    state: InitialStateKind,
    t: f64,
) -> Result<f64> {
    if spec.rings % 2 == 0 {
        return Ok(f64::NAN);
    }
    let h = extract_block_coefficients(n, spec.rings, spec.radius, spacing, &spec.kernel())?;
    match state {
        InitialStateKind::Delocalized => sigma_deloc_analytic(&h, t),
        InitialStateKind::Localized => sigma_loc_analytic(&h, t),
    }
}

fn rel_error(numeric: f64, analytic: f64) -> f64 {
    if analytic == 0.0 {
        if numeric == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (numeric - analytic).abs() / analytic.abs()
    }
}

/// Closed-system `sigma(n)` against the closed forms for both geometries.
fn closed_scaling(spec: &SweepSpec, geometry: GeometryKind) -> Result<SweepGrid> {
    spec.validate()?;
    let kind = spec.kind;
    let mut grid = SweepGrid::new(
        kind,
        vec![
            state_axis(&spec.states),
            Axis::real("spacing", spec.spacings.clone()),
            n_axis(&spec.n_values),
            Axis::real("t_nominal", spec.times.clone()),
        ],
    );
    let items: Vec<(usize, usize)> = (0..spec.spacings.len())
        .flat_map(|d| (0..spec.n_values.len()).map(move |n| (d, n)))
        .collect();
    let params = OpenSystemParams::new(0.0, spec.kappa)?;
    let blocks: Vec<Vec<(f64, f64, f64)>> = items
        .par_iter()
        .map(|&(di, ni)| -> Result<Vec<(f64, f64, f64)>> {
            let (spacing, n) = (spec.spacings[di], spec.n_values[ni]);
            let lat = spec.lattice(geometry, n, spacing)?;
            let h = assemble_hamiltonian(&lat, &spec.kernel(), None)?;
            let times = spec.effective_times(spacing, operator_norm_bound(&h)?);
            let mut out = Vec::with_capacity(spec.states.len() * times.len());
            for &state in &spec.states {
                let series = ring_population_series(&lat, &h, &params, state, &times, &spec.options())?;
                for (p, &t) in series.iter().zip(&times) {
                    check_trace(p, params.decay_factor(t))?;
                    let sigma = sigma_of(p, spacing, spec.renormalize)?;
                    out.push((t, sigma, analytic_sigma(spec, n, spacing, state, t)?));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let len = grid.len();
    let (mut t, mut sigma, mut analytic) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    for (&(di, ni), block) in items.iter().zip(&blocks) {
        for (si, _) in spec.states.iter().enumerate() {
            for ti in 0..spec.times.len() {
                let f = grid.flat_index(&[si, di, ni, ti]);
                let (tt, s, a) = block[si * spec.times.len() + ti];
                t[f] = tt;
                sigma[f] = s;
                analytic[f] = a;
            }
        }
    }
    let spacing_of = |f: usize, g: &SweepGrid| spec.spacings[g.unravel(f)[1]];
    let per_dt = |v: &[f64], g: &SweepGrid| -> Vec<f64> {
        (0..len)
            .map(|f| if t[f] > 0.0 { v[f] / (spacing_of(f, g) * t[f]) } else { f64::NAN })
            .collect()
    };
    let sigma_per_dt = per_dt(&sigma, &grid);
    let analytic_per_dt = per_dt(&analytic, &grid);
    let rel: Vec<f64> = sigma.iter().zip(&analytic).map(|(&s, &a)| rel_error(s, a)).collect();
    grid.push_stat("t", t);
    grid.push_stat("sigma", sigma);
    grid.push_stat("sigma_per_dt", sigma_per_dt);
    grid.push_stat("analytic", analytic);
    grid.push_stat("analytic_per_dt", analytic_per_dt);
    grid.push_stat("rel_error", rel);
    grid.fit_records("alpha", "sigma_per_dt", 2);
    grid.fit_records("alpha_analytic", "analytic_per_dt", 2);
    Ok(grid)
}

/// Closed ring-stack `sigma(n)` per spacing and state, with the closed-form
/// predictions and their relative errors; `alpha` records fit `sigma/(D t)`
/// against `n`.
pub fn run_scaling_experiment(spec: &SweepSpec) -> Result<SweepGrid> {
    if spec.kind != ExperimentKind::Scaling {
        return Err(Error::invalid("experiment.kind", "expected a scaling spec"));
    }
    if spec.geometry != GeometryKind::RingStack {
        return Err(Error::invalid("geometry.kind", "scaling sweeps use ring stacks"));
    }
    closed_scaling(spec, GeometryKind::RingStack)
}

/// Helix numerics against the ring-stack closed forms with `D` equal to the
/// pitch.
pub fn run_helix_approximation(spec: &SweepSpec) -> Result<SweepGrid> {
    if spec.kind != ExperimentKind::Helix {
        return Err(Error::invalid("experiment.kind", "expected a helix spec"));
    }
    if spec.geometry != GeometryKind::Helix {
        return Err(Error::invalid("geometry.kind", "helix sweeps use helix geometry"));
    }
    closed_scaling(spec, GeometryKind::Helix)
}

/// Per-realization output of a disorder work item: ring populations and
/// `sigma` over `(state, Sigma, time)`.
struct RealizationOutput {
    pops: Vec<Vec<f64>>,
    sigma: Vec<f64>,
}

/// Disorder ensembles at `gamma = 0`.
///
/// Each realization draws one standard-normal vector `z` per `(spacing, n)`
/// point and uses `Sigma z` for every `Sigma`, so curves over `Sigma` share
/// their random numbers. The ensemble state is the disorder-averaged density
/// matrix: `sigma` is taken from the averaged ring populations (the root of
/// the mean `sigma^2`); `sigma_mean` is the plain mean of per-realization
/// lengths.
pub fn run_disorder_sweep(spec: &SweepSpec) -> Result<SweepGrid> {
    if spec.kind != ExperimentKind::Disorder {
        return Err(Error::invalid("experiment.kind", "expected a disorder spec"));
    }
    spec.validate()?;
    let (n_states, n_sig, n_t) = (spec.states.len(), spec.sigmas.len(), spec.times.len());
    let mut grid = SweepGrid::new(
        ExperimentKind::Disorder,
        vec![
            state_axis(&spec.states),
            Axis::real("spacing", spec.spacings.clone()),
            n_axis(&spec.n_values),
            Axis::real("disorder", spec.sigmas.clone()),
            Axis::real("t_nominal", spec.times.clone()),
        ],
    );
    let points: Vec<(usize, usize)> = (0..spec.spacings.len())
        .flat_map(|d| (0..spec.n_values.len()).map(move |n| (d, n)))
        .collect();
    let params = OpenSystemParams::new(0.0, spec.kappa)?;
    let len = grid.len();
    let mut t_stat = vec![0.0; len];
    let mut sigma = vec![0.0; len];
    let mut sigma_se = vec![0.0; len];
    let mut sigma_mean = vec![0.0; len];
    let mut sigma_mean_se = vec![0.0; len];

    for (point, &(di, ni)) in points.iter().enumerate() {
        let (spacing, n) = (spec.spacings[di], spec.n_values[ni]);
        let lat = spec.lattice(spec.geometry, n, spacing)?;
        let kernel = spec.kernel();
        let clean = assemble_hamiltonian(&lat, &kernel, None)?;
        let times = spec.effective_times(spacing, operator_norm_bound(&clean)?);
        let run_one = |offsets: Option<&[f64]>| -> Result<Vec<RingPopulations>> {
            let h = match offsets {
                Some(o) => assemble_hamiltonian(&lat, &kernel, Some(o))?,
                None => clean.clone(),
            };
            let mut out = Vec::with_capacity(n_states * n_t);
            for &state in &spec.states {
                out.extend(ring_population_series(&lat, &h, &params, state, &times, &spec.options())?);
            }
            Ok(out)
        };
        // Sigma = 0 is the same for every realization.
        let clean_run = if spec.sigmas.contains(&0.0) { Some(run_one(None)?) } else { None };

        let outputs: Vec<RealizationOutput> = (0..spec.realizations)
            .into_par_iter()
            .map(|r| -> Result<RealizationOutput> {
                let mut rng = realization_rng(spec.seed, point as u64, r as u64);
                let z = sample_disorder_with(&mut rng, 1.0, lat.len());
                let mut pops = vec![Vec::new(); n_states * n_sig * n_t];
                let mut sig = vec![0.0; n_states * n_sig * n_t];
                for (ki, &s) in spec.sigmas.iter().enumerate() {
                    let runs = if s == 0.0 {
                        clean_run.clone().expect("clean run computed")
                    } else {
                        let offsets: Vec<f64> = z.iter().map(|x| x * s).collect();
                        run_one(Some(&offsets))?
                    };
                    for si in 0..n_states {
                        for ti in 0..n_t {
                            let p = &runs[si * n_t + ti];
                            check_trace(p, params.decay_factor(times[ti]))?;
                            let slot = (si * n_sig + ki) * n_t + ti;
                            sig[slot] = sigma_of(p, spacing, spec.renormalize)?;
                            pops[slot] = p.p.clone();
                        }
                    }
                }
                Ok(RealizationOutput { pops, sigma: sig })
            })
            .collect::<Result<_>>()?;

        let count = spec.realizations as f64;
        for si in 0..n_states {
            for ki in 0..n_sig {
                for ti in 0..n_t {
                    let slot = (si * n_sig + ki) * n_t + ti;
                    let mut mean_pops = vec![0.0; lat.ring_count()];
                    for o in &outputs {
                        for (a, b) in mean_pops.iter_mut().zip(&o.pops[slot]) {
                            *a += b;
                        }
                    }
                    mean_pops.iter_mut().for_each(|x| *x /= count);
                    let rp = RingPopulations::from_slots(mean_pops, &lat)?;
                    let s = sigma_of(&rp, spacing, spec.renormalize)?;
                    let per: Vec<f64> = outputs.iter().map(|o| o.sigma[slot]).collect();
                    let sq: Vec<f64> = per.iter().map(|x| x * x).collect();
                    let f = grid.flat_index(&[si, di, ni, ki, ti]);
                    t_stat[f] = times[ti];
                    sigma[f] = s;
                    sigma_se[f] = if s > 0.0 { standard_error(&sq) / (2.0 * s) } else { 0.0 };
                    sigma_mean[f] = per.iter().sum::<f64>() / count;
                    sigma_mean_se[f] = standard_error(&per);
                }
            }
        }
    }
    grid.push_stat("t", t_stat);
    grid.push_stat("sigma", sigma);
    grid.push_stat("sigma_stderr", sigma_se);
    grid.push_stat("sigma_mean", sigma_mean);
    grid.push_stat("sigma_mean_stderr", sigma_mean_se);
    let disorder_value: Vec<f64> = (0..len).map(|f| spec.sigmas[grid.unravel(f)[3]]).collect();
    grid.push_stat("disorder_value", disorder_value);
    if n_t >= spec.lambda_window {
        grid.local_exponent_stat("lambda", "sigma", "t", 4, spec.lambda_window);
        grid.crossing_records("lambda_crossover_disorder", "lambda", "disorder_value", 3, CROSSOVER_LEVEL);
    }
    grid.fit_records("alpha", "sigma", 2);
    for &level in &spec.sigma_levels {
        level_curve_records(&mut grid, level);
    }
    Ok(grid)
}

fn standard_error(xs: &[f64]) -> f64 {
    let m = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (var / m).sqrt()
}

/// Disorder strength at which `sigma` first falls below `level`, per line
/// over the disorder axis.
fn level_curve_records(grid: &mut SweepGrid, level: f64) {
    let Some(AxisValues::Real(sig)) = grid.axis("disorder").map(|a| a.values.clone()) else {
        return;
    };
    let sigma = grid.stat("sigma").expect("sigma present").to_vec();
    let mut records = Vec::new();
    for base in grid.lines(3) {
        let pts: Vec<(f64, f64)> = sig
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let mut idx = base.clone();
                idx[3] = k;
                (s, sigma[grid.flat_index(&idx)])
            })
            .collect();
        if let Some(x) = first_downward_crossing(&pts, level) {
            let mut keys = grid.keys_at(&base, &["disorder"]);
            keys.push(("level".into(), crate::io::format_number(level)));
            records.push(SummaryRecord {
                name: "level_curve_disorder".into(),
                keys,
                value: x,
                r_squared: None,
            });
        }
    }
    grid.records.extend(records);
}

/// `sigma(n, t)` under dephasing, with the closed forms for comparison,
/// sliding `lambda(t)`, `alpha(t)` records and the crossover times of both.
pub fn run_dephasing_sweep(spec: &SweepSpec) -> Result<SweepGrid> {
    if spec.kind != ExperimentKind::Dephasing {
        return Err(Error::invalid("experiment.kind", "expected a dephasing spec"));
    }
    spec.validate()?;
    let n_t = spec.times.len();
    let mut grid = SweepGrid::new(
        ExperimentKind::Dephasing,
        vec![
            state_axis(&spec.states),
            Axis::real("spacing", spec.spacings.clone()),
            Axis::real("gamma", spec.gammas.clone()),
            n_axis(&spec.n_values),
            Axis::real("t_nominal", spec.times.clone()),
        ],
    );
    let items: Vec<[usize; 4]> = (0..spec.states.len())
        .flat_map(|s| {
            (0..spec.spacings.len()).flat_map(move |d| {
                (0..spec.gammas.len()).flat_map(move |g| (0..spec.n_values.len()).map(move |n| [s, d, g, n]))
            })
        })
        .collect();
    let blocks: Vec<Vec<(f64, f64, f64)>> = items
        .par_iter()
        .map(|&[si, di, gi, ni]| -> Result<Vec<(f64, f64, f64)>> {
            let (state, spacing, gamma, n) = (spec.states[si], spec.spacings[di], spec.gammas[gi], spec.n_values[ni]);
            let lat = spec.lattice(spec.geometry, n, spacing)?;
            let h = assemble_hamiltonian(&lat, &spec.kernel(), None)?;
            let times = spec.effective_times(spacing, operator_norm_bound(&h)?);
            let params = OpenSystemParams::new(gamma, spec.kappa)?;
            let series = ring_population_series(&lat, &h, &params, state, &times, &spec.options())?;
            series
                .iter()
                .zip(&times)
                .map(|(p, &t)| {
                    check_trace(p, params.decay_factor(t))?;
                    let analytic = if spec.geometry == GeometryKind::RingStack || spec.geometry == GeometryKind::Helix {
                        analytic_sigma(spec, n, spacing, state, t)?
                    } else {
                        f64::NAN
                    };
                    Ok((t, sigma_of(p, spacing, spec.renormalize)?, analytic))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let len = grid.len();
    let (mut t, mut sigma, mut analytic) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    for (item, block) in items.iter().zip(&blocks) {
        for (ti, &(tt, s, a)) in block.iter().enumerate().take(n_t) {
            let f = grid.flat_index(&[item[0], item[1], item[2], item[3], ti]);
            t[f] = tt;
            sigma[f] = s;
            analytic[f] = a;
        }
    }
    let rel: Vec<f64> = sigma.iter().zip(&analytic).map(|(&s, &a)| rel_error(s, a)).collect();
    grid.push_stat("t", t);
    grid.push_stat("sigma", sigma);
    grid.push_stat("analytic", analytic);
    grid.push_stat("rel_error", rel);
    if n_t >= spec.lambda_window {
        grid.local_exponent_stat("lambda", "sigma", "t", 4, spec.lambda_window);
        grid.crossing_records("lambda_crossover_time", "lambda", "t", 4, CROSSOVER_LEVEL);
    }
    grid.fit_records("alpha", "sigma", 3);
    alpha_crossing_records(&mut grid);
    Ok(grid)
}

/// First time at which the `alpha` records of a `(state, spacing, gamma)`
/// line drop below the crossover level.
fn alpha_crossing_records(grid: &mut SweepGrid) {
    let mut lines: Vec<(Vec<(String, String)>, Vec<(f64, f64)>)> = Vec::new();
    for r in grid.records_named("alpha") {
        let line: Vec<(String, String)> = r.keys.iter().filter(|(k, _)| k != "t_nominal").cloned().collect();
        let t: f64 = r.key("t_nominal").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
        match lines.iter_mut().find(|(k, _)| *k == line) {
            Some((_, pts)) => pts.push((t, r.value)),
            None => lines.push((line, vec![(t, r.value)])),
        }
    }
    for (keys, mut pts) in lines {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(tc) = first_downward_crossing(&pts, CROSSOVER_LEVEL) {
            grid.records.push(SummaryRecord {
                name: "alpha_crossover_time".into(),
                keys,
                value: tc,
                r_squared: None,
            });
        }
    }
}

/// One trajectory: a single geometry, rate set and initial state. With
/// `sigma > 0` the on-site energies are realization 0 of point 0 under
/// `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleRun {
    pub geometry: GeometryKind,
    pub n: usize,
    pub rings: usize,
    pub radius: f64,
    pub spacing: f64,
    pub coupling: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub seed: u64,
    pub state: InitialStateKind,
    pub times: Vec<f64>,
    pub near_field_autoscale: bool,
    pub renormalize: bool,
    pub dt_override: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SingleRunOutput {
    pub lattice: SiteLattice,
    pub hamiltonian: Hamiltonian,
    /// Times actually sampled (after any near-field rescaling).
    pub times: Vec<f64>,
    pub populations: Vec<RingPopulations>,
    pub series: DiffusionSeries,
    /// Closed-form `sigma` at each time (ring stacks with odd `N` and no
    /// disorder; `None` otherwise).
    pub analytic: Option<Vec<f64>>,
}

pub fn run_single(run: &SingleRun) -> Result<SingleRunOutput> {
    let kernel = CouplingKernel::new(run.coupling)?;
    let params = OpenSystemParams::new(run.gamma, run.kappa)?;
    if !(run.sigma.is_finite() && run.sigma >= 0.0) {
        return Err(Error::invalid("sigma", "must be >= 0"));
    }
    crate::dynamics::check_times(&run.times)?;
    let lat = SiteLattice::build(run.geometry, run.n, run.rings, run.radius, run.spacing)?;
    let offsets = (run.sigma > 0.0).then(|| {
        let mut rng = realization_rng(run.seed, 0, 0);
        sample_disorder_with(&mut rng, run.sigma, lat.len())
    });
    let h = assemble_hamiltonian(&lat, &kernel, offsets.as_deref())?;
    let times = if run.near_field_autoscale && run.spacing <= run.radius {
        let last = *run.times.last().expect("checked non-empty");
        let norm = operator_norm_bound(&h)?;
        if last > 0.0 && norm > 0.0 {
            run.times.iter().map(|t| t * NEAR_FIELD_TIME_SCALE / (norm * last)).collect()
        } else {
            run.times.clone()
        }
    } else {
        run.times.clone()
    };
    let opts = LindbladOptions {
        dt_override: run.dt_override,
        ..Default::default()
    };
    let populations = ring_population_series(&lat, &h, &params, run.state, &times, &opts)?;
    let mut sigma = Vec::with_capacity(times.len());
    for (p, &t) in populations.iter().zip(&times) {
        check_trace(p, params.decay_factor(t))?;
        sigma.push(sigma_of(p, run.spacing, run.renormalize)?);
    }
    let analytic = if run.rings % 2 == 1 && offsets.is_none() {
        let b = extract_block_coefficients(run.n, run.rings, run.radius, run.spacing, &kernel)?;
        let f = match run.state {
            InitialStateKind::Delocalized => sigma_deloc_analytic,
            InitialStateKind::Localized => sigma_loc_analytic,
        };
        Some(times.iter().map(|&t| f(&b, t)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok(SingleRunOutput {
        lattice: lat,
        hamiltonian: h,
        series: DiffusionSeries::new(times.clone(), sigma)?,
        times,
        populations,
        analytic,
    })
}

/// Dispatches on `spec.kind`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepGrid> {
    match spec.kind {
        ExperimentKind::Scaling => run_scaling_experiment(spec),
        ExperimentKind::Helix => run_helix_approximation(spec),
        ExperimentKind::Disorder => run_disorder_sweep(spec),
        ExperimentKind::Dephasing => run_dephasing_sweep(spec),
    }
}
