//! The reproduction checks, one function per criterion.
//!
//! Each criterion returns a [`CriterionReport`] listing every individual
//! comparison with its measured value and target. Nothing here panics on a
//! failed comparison; callers decide what a failure means.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::coupling::{
    assemble_hamiltonian, extract_block_coefficients, torus_hamiltonian, BlockCoefficients, CouplingKernel,
};
use crate::dynamics::{
    evolve_lindblad, log_times, ClosedPropagator, InitialStateKind, OpenSystemParams, QuantumState,
};
use crate::error::{Error, Result};
use crate::experiments::{
    run_dephasing_sweep, run_disorder_sweep, run_helix_approximation, run_scaling_experiment, ExperimentKind,
    Profile, SweepGrid, SweepSpec,
};
use crate::io::{format_number, write_results_csv};
use crate::lattice::SiteLattice;
use crate::observables::{
    all_interaction_correction, diffusion_length, far_field_block_coefficients, short_time_ring_populations,
    sigma_deloc_analytic, sigma_deloc_far_field, sigma_loc_analytic, sigma_loc_far_field,
    supertransfer_pair_probability, RingPopulations,
};
use crate::spectral::{circulant_eigenvalues, symmetric_eigenvalues};

pub const CRITERIA: [(u8, &str); 9] = [
    (1, "closed-system numerics vs closed forms"),
    (2, "supertransfer scaling exponents"),
    (3, "far-field closed forms"),
    (4, "two-cluster supertransfer"),
    (5, "dephasing agreement at gamma = 0.1"),
    (6, "ballistic to diffusive crossover"),
    (7, "disorder behaviour"),
    (8, "helix vs stacked-ring approximation"),
    (9, "property suite"),
];

/// Figure-scale stack: `N = 31`, `R = 1`.
const RINGS: usize = 31;
const RADIUS: f64 = 1.0;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    /// Stable identifier, `"<criterion>.<name>"`.
    pub id: String,
    pub value: f64,
    pub target: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub checks: Vec<Check>,
    /// Reported quantities that are not pass/fail.
    pub notes: Vec<String>,
}

impl CriterionReport {
    fn new(id: u8) -> Self {
        let title = CRITERIA.iter().find(|(i, _)| *i == id).map(|(_, t)| *t).unwrap_or("");
        CriterionReport {
            id,
            title: title.into(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: impl AsRef<str>, value: f64, target: impl Into<String>, passed: bool) {
        self.checks.push(Check {
            id: format!("{}.{}", self.id, name.as_ref()),
            value,
            target: target.into(),
            passed: passed && !value.is_nan(),
        });
    }

    fn at_most(&mut self, name: impl AsRef<str>, value: f64, bound: f64) {
        self.push(name, value, format!("<= {bound}"), value <= bound);
    }

    fn within(&mut self, name: impl AsRef<str>, value: f64, centre: f64, tol: f64) {
        self.push(name, value, format!("{centre} +/- {tol}"), (value - centre).abs() <= tol);
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    /// `Fast` runs the disorder ensemble with 100 realizations, `Paper`
    /// with 500.
    pub profile: Profile,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            profile: Profile::Fast,
            seed: 0,
        }
    }
}

pub fn run_criterion(id: u8, opts: &ValidationOptions) -> Result<CriterionReport> {
    match id {
        1 => criterion_closed_agreement(),
        2 => criterion_scaling_exponents(),
        3 => criterion_far_field(),
        4 => criterion_supertransfer(),
        5 => criterion_dephasing_agreement(),
        6 => criterion_crossover(),
        7 => criterion_disorder(opts),
        8 => criterion_helix(),
        9 => criterion_properties(opts),
        other => Err(Error::invalid("criteria", format!("no criterion {other} (expected 1..=9)"))),
    }
}

pub fn run_validation(ids: &[u8], opts: &ValidationOptions) -> Result<Vec<CriterionReport>> {
    ids.iter().map(|&id| run_criterion(id, opts)).collect()
}

/// One line per criterion, then the failing checks indented below it.
pub fn format_table(reports: &[CriterionReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let passed = r.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(
            out,
            "{:>2}  {:<4}  {:<40} {passed}/{} checks",
            r.id,
            if r.passed() { "PASS" } else { "FAIL" },
            r.title,
            r.checks.len()
        );
        for c in r.failed_checks() {
            let _ = writeln!(out, "      FAIL {} = {} (target {})", c.id, format_number(c.value), c.target);
        }
        for n in &r.notes {
            let _ = writeln!(out, "      note {n}");
        }
    }
    out
}

fn state_label(s: InitialStateKind) -> &'static str {
    match s {
        InitialStateKind::Delocalized => "deloc",
        InitialStateKind::Localized => "loc",
    }
}

fn spacing_label(d: f64) -> String {
    format!("D={}", format_number(d))
}

fn base_spec(kind: ExperimentKind) -> SweepSpec {
    let mut spec = SweepSpec::with_profile(kind, Profile::Paper);
    spec.rings = RINGS;
    spec.radius = RADIUS;
    spec
}

/// Maximum of `stat` over every grid point whose `state` and `spacing`
/// match.
fn max_over(grid: &SweepGrid, stat: &str, state: usize, spacing: usize) -> f64 {
    let values = grid.stat(stat).expect("stat present");
    (0..grid.len())
        .filter(|&f| {
            let idx = grid.unravel(f);
            idx[0] == state && idx[1] == spacing
        })
        .map(|f| values[f])
        .fold(f64::NEG_INFINITY, f64::max)
}

fn closed_scaling_grid() -> Result<SweepGrid> {
    let mut spec = base_spec(ExperimentKind::Scaling);
    spec.n_values = (1..=7).collect();
    spec.spacings = vec![10.0, 1.0, 0.1];
    spec.times = vec![1.0];
    run_scaling_experiment(&spec)
}

fn criterion_closed_agreement() -> Result<CriterionReport> {
    let mut r = CriterionReport::new(1);
    let grid = closed_scaling_grid()?;
    let spacings = [10.0, 1.0, 0.1];
    for (si, state) in [InitialStateKind::Delocalized, InitialStateKind::Localized].into_iter().enumerate() {
        for (di, &d) in spacings.iter().enumerate() {
            let bound = if d > RADIUS { 0.02 } else { 0.10 };
            let worst = max_over(&grid, "rel_error", si, di);
            r.at_most(format!("rel_error.{}.{}", spacing_label(d), state_label(state)), worst, bound);
        }
    }
    for (di, &d) in spacings.iter().enumerate().skip(1) {
        let t = grid.get("t", &[0, di, 0, 0]).unwrap_or(f64::NAN);
        r.note(format!("{}: auto-scaled t = {} for n = 1", spacing_label(d), format_number(t)));
    }
    Ok(r)
}

fn alpha_record(grid: &SweepGrid, name: &str, state: &str, spacing: f64) -> f64 {
    let d = format_number(spacing);
    grid.records_named(name)
        .find(|rec| rec.matches(&[("state", state), ("spacing", &d)]))
        .map(|rec| rec.value)
        .unwrap_or(f64::NAN)
}

fn criterion_scaling_exponents() -> Result<CriterionReport> {
    let mut r = CriterionReport::new(2);
    let grid = closed_scaling_grid()?;
    r.within("alpha.D=10.deloc", alpha_record(&grid, "alpha", "delocalized", 10.0), 1.0, 0.05);
    r.within("alpha.D=10.loc", alpha_record(&grid, "alpha", "localized", 10.0), 0.5, 0.05);
    for d in [1.0, 0.1] {
        let a = alpha_record(&grid, "alpha", "delocalized", d);
        r.push(format!("alpha.{}.deloc", spacing_label(d)), a, "> 1", a > 1.0);
        r.note(format!(
            "{}: closed-form alpha = {} (deloc), {} (loc)",
            spacing_label(d),
            format_number(alpha_record(&grid, "alpha_analytic", "delocalized", d)),
            format_number(alpha_record(&grid, "alpha_analytic", "localized", d)),
        ));
    }
    Ok(r)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_far_field() -> Result<CriterionReport> {
    let mut r = CriterionReport::new(3);
    let kernel = CouplingKernel::default();
    let (spacing, t) = (10.0, 1.0);
    let (mut worst_deloc, mut worst_loc) = (0.0f64, 0.0f64);
    for n in 1..=10 {
        let nn = BlockCoefficients::nearest_neighbor_symmetric(n, RINGS, spacing, &kernel)?;
        worst_deloc = worst_deloc.max(relative(
            sigma_deloc_analytic(&nn, t)?,
            sigma_deloc_far_field(n, spacing, &kernel, t),
        ));
        worst_loc = worst_loc.max(relative(
            sigma_loc_analytic(&nn, t)?,
            sigma_loc_far_field(n, spacing, &kernel, t),
        ));
    }
    r.at_most("nearest_neighbor.deloc.rel_error", worst_deloc, 1e-14);
    r.at_most("nearest_neighbor.loc.rel_error", worst_loc, 1e-14);

    let half = (RINGS - 1) / 2;
    let direct = all_interaction_correction(half);
    r.within("all_interaction_factor", direct, 1.0403, 1e-4);
    let all = far_field_block_coefficients(5, RINGS, spacing, &kernel)?;
    let ratio = sigma_deloc_analytic(&all, t)? / sigma_deloc_far_field(5, spacing, &kernel, t);
    r.at_most("all_interaction_ratio.rel_error", relative(ratio, direct), 1e-12);
    let pi4_over_90 = std::f64::consts::PI.powi(4) / 90.0;
    r.note(format!(
        "direct sum sqrt(sum j^-4, j=1..{half}) = {}; pi^4/90 = {}; pi^2/sqrt(90) = {}",
        format_number(direct),
        format_number(pi4_over_90),
        format_number(std::f64::consts::PI.powi(2) / 90f64.sqrt()),
    ));
    Ok(r)
}

fn criterion_supertransfer() -> Result<CriterionReport> {
    let mut r = CriterionReport::new(4);
    let (gamma_c, t) = (1e-3, 1.0);
    for (a, b) in [(1, 1), (2, 2), (2, 3), (3, 3)] {
        let (p_sym, p_loc) = supertransfer_pair_probability(a, b, gamma_c, t)?;
        let ratio = p_sym / p_loc;
        r.at_most(
            format!("ratio.nA={a}.nB={b}.rel_error"),
            relative(ratio, (a * b) as f64),
            0.01,
        );
    }
    Ok(r)
}

fn criterion_dephasing_agreement() -> Result<CriterionReport> {
    let mut r = CriterionReport::new(5);
    let mut spec = base_spec(ExperimentKind::Dephasing);
    spec.n_values = (1..=7).collect();
    spec.spacings = vec![10.0, 1.0, 0.1];
    spec.gammas = vec![0.1];
    spec.times = vec![1.0];
    let grid = run_dephasing_sweep(&spec)?;
    for (si, state) in spec.states.iter().enumerate() {
        for (di, &d) in spec.spacings.iter().enumerate() {
            let worst = max_over(&grid, "rel_error", si, di);
            r.at_most(format!("rel_error.{}.{}", spacing_label(d), state_label(*state)), worst, 0.03);
        }
    }
    Ok(r)
}

fn criterion_crossover() -> Result<CriterionReport> {
    let mut r = CriterionReport::new(6);

    // lambda(t) at gamma = 5 on a log grid reaching gamma t = 200
    let gamma = 5.0;
    let mut spec = base_spec(ExperimentKind::Dephasing);
    spec.n_values = (1..=6).collect();
    spec.states = vec![InitialStateKind::Delocalized];
    spec.gammas = vec![gamma];
    spec.times = log_times(1e-3 / gamma, 200.0 / gamma, 61);
    let grid = run_dephasing_sweep(&spec)?;
    let lambda = grid.stat("lambda").expect("lambda computed");
    let t = grid.stat("t").expect("t present");
    for (ni, &n) in spec.n_values.iter().enumerate() {
        let line: Vec<(f64, f64)> = (0..spec.times.len())
            .map(|ti| grid.flat_index(&[0, 0, 0, ni, ti]))
            .map(|f| (t[f] * gamma, lambda[f]))
            .filter(|(_, l)| l.is_finite())
            .collect();
        let early = line
            .iter()
            .filter(|(gt, _)| *gt <= 0.1)
            .map(|(_, l)| (l - 1.0).abs())
            .fold(0.0, f64::max);
        r.at_most(format!("lambda_start.n={n}.max_dev_from_1"), early, 0.05);
        let (gt_end, l_end) = *line.last().expect("lambda has finite values");
        r.within(format!("lambda_end.n={n}"), l_end, 0.5, 0.1);
        let dip = line
            .iter()
            .filter(|(gt, _)| *gt >= 10.0)
            .map(|(_, l)| *l)
            .fold(f64::INFINITY, f64::min);
        r.note(format!(
            "n = {n}: lambda = {} at gamma t = {}; minimum over gamma t >= 10 is {}",
            format_number(l_end),
            format_number(gt_end),
            format_number(dip)
        ));
    }

    // alpha(t) crossing for gamma = 1..11
    let mut spec = base_spec(ExperimentKind::Dephasing);
    spec.n_values = (1..=10).collect();
    spec.states = vec![InitialStateKind::Delocalized];
    spec.gammas = (1..=11).map(f64::from).collect();
    spec.times = log_times(1e-3, 10.0, 41);
    let grid = run_dephasing_sweep(&spec)?;
    for &g in &spec.gammas {
        let gs = format_number(g);
        let crossing = grid
            .records_named("alpha_crossover_time")
            .find(|rec| rec.key("gamma") == Some(gs.as_str()))
            .map(|rec| rec.value)
            .unwrap_or(f64::NAN);
        let ratio = crossing * g;
        r.push(
            format!("alpha_crossover.gamma={gs}.t_times_gamma"),
            ratio,
            "in [1/3, 3]",
            (1.0 / 3.0..=3.0).contains(&ratio),
        );
    }
    Ok(r)
}

fn criterion_disorder(opts: &ValidationOptions) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(7);
    let mut spec = base_spec(ExperimentKind::Disorder);
    spec.n_values = (1..=6).collect();
    spec.states = vec![InitialStateKind::Delocalized];
    spec.sigmas = vec![0.0, 1e-4, 1e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0, 3.0, 10.0, 30.0];
    spec.realizations = match opts.profile {
        Profile::Fast => 100,
        Profile::Paper => 500,
    };
    spec.seed = opts.seed;
    let grid = run_disorder_sweep(&spec)?;
    let t_mid = spec.times.len() / 2;
    let sigma_at = |ni: usize, ki: usize| grid.get("sigma", &[0, 0, ni, ki, t_mid]).expect("sigma");
    let lambda_at = |ni: usize, ki: usize| grid.get("lambda", &[0, 0, ni, ki, t_mid]).expect("lambda");
    let k_of = |s: f64| spec.sigmas.iter().position(|x| *x == s).expect("sigma on grid");

    let weak: Vec<usize> = [0.0, 1e-4, 1e-3].iter().map(|&s| k_of(s)).collect();
    let mut worst = 0.0f64;
    for ni in 0..spec.n_values.len() {
        let vals: Vec<f64> = weak.iter().map(|&k| sigma_at(ni, k)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let spread = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        worst = worst.max(spread / mean);
    }
    r.at_most("weak_disorder.sigma_variation", worst, 0.05);

    let alpha_at = |s: f64| {
        let ss = format_number(s);
        grid.records_named("alpha")
            .find(|rec| rec.key("disorder") == Some(ss.as_str()) && rec.key("t_nominal") == Some("1"))
            .map(|rec| rec.value)
            .unwrap_or(f64::NAN)
    };
    r.within("weak_disorder.alpha.Sigma=0.001", alpha_at(1e-3), 1.0, 0.1);

    for s in [10.0, 30.0] {
        let k = k_of(s);
        for (ni, &n) in spec.n_values.iter().enumerate() {
            r.within(format!("strong_disorder.lambda.Sigma={s}.n={n}"), lambda_at(ni, k), 0.5, 0.15);
        }
        r.within(format!("strong_disorder.alpha.Sigma={s}"), alpha_at(s), 0.5, 0.15);
        r.note(format!("alpha over n at Sigma = {s}: {}", format_number(alpha_at(s))));
    }

    let crossings: Vec<(String, f64)> = grid
        .records_named("lambda_crossover_disorder")
        .map(|rec| (rec.key("n").unwrap_or("?").to_string(), rec.value))
        .collect();
    let found = crossings.len() == spec.n_values.len();
    let (lo, hi) = crossings
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, x)| (lo.min(*x), hi.max(*x)));
    let spread = if found { hi / lo } else { f64::NAN };
    r.push("crossover.max_over_min", spread, "<= 2 (one crossing per n)", found && spread <= 2.0);
    r.note(format!(
        "lambda crossover Sigma* by n: {}",
        crossings
            .iter()
            .map(|(n, x)| format!("n={n}: {}", format_number(*x)))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    r.note(format!("{} realizations, seed {}", spec.realizations, spec.seed));
    Ok(r)
}

fn criterion_helix() -> Result<CriterionReport> {
    let mut r = CriterionReport::new(8);
    let mut spec = base_spec(ExperimentKind::Helix);
    spec.n_values = (1..=7).collect();
    spec.states = vec![InitialStateKind::Delocalized];
    spec.times = vec![1.0];
    let grid = run_helix_approximation(&spec)?;
    r.at_most("rel_error.deloc", max_over(&grid, "rel_error", 0, 0), 0.05);
    r.at_most("rel_error.n=1", grid.get("rel_error", &[0, 0, 0, 0]).unwrap_or(f64::NAN), 0.01);
    let ratios: Vec<String> = (0..spec.n_values.len())
        .map(|ni| {
            let s = grid.get("sigma", &[0, 0, ni, 0]).unwrap_or(f64::NAN);
            let a = grid.get("analytic", &[0, 0, ni, 0]).unwrap_or(f64::NAN);
            format!("n={}: {}", ni + 1, format_number(s / a))
        })
        .collect();
    r.note(format!("helix / ring-stack sigma: {}", ratios.join(", ")));
    Ok(r)
}

fn criterion_properties(opts: &ValidationOptions) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(9);
    let kernel = CouplingKernel::default();

    // trace and Hermiticity along open trajectories
    let lat = SiteLattice::ring_stack(3, 7, RADIUS, 2.0)?;
    let h = assemble_hamiltonian(&lat, &kernel, None)?;
    let psi0 = InitialStateKind::Localized.prepare(&lat)?;
    let times: Vec<f64> = (0..=10).map(|i| 0.2 * i as f64).collect();
    let mut trace_dev = 0.0f64;
    let mut herm = 0.0f64;
    for gamma in [0.0, 0.5, 5.0] {
        let traj = evolve_lindblad(&h, &OpenSystemParams::new(gamma, 0.0)?, &psi0, &times)?;
        for s in &traj.states {
            trace_dev = trace_dev.max((s.trace() - 1.0).abs());
            if let QuantumState::Mixed(rho) = s {
                herm = herm.max(rho.hermiticity_error());
            }
        }
    }
    r.at_most("trace.kappa=0.abs_error", trace_dev, 1e-6);
    r.at_most("hermiticity.max_abs", herm, 1e-9);

    let kappa = 0.3;
    let params = OpenSystemParams::new(1.0, kappa)?;
    let traj = evolve_lindblad(&h, &params, &psi0, &times)?;
    let decay_dev = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| relative(s.trace(), params.decay_factor(t)))
        .fold(0.0, f64::max);
    r.at_most("trace.kappa>0.rel_error", decay_dev, 1e-6);

    // circulant eigenvalues against dense diagonalization of the torus
    let mut eig_dev = 0.0f64;
    for (n, rings, d) in [(1, 5, 1.0), (4, 7, 0.7), (5, 31, 10.0), (6, 9, 1.3)] {
        let b = extract_block_coefficients(n, rings, RADIUS, d, &kernel)?;
        let circ = circulant_eigenvalues(&b).sorted();
        let dense = symmetric_eigenvalues(torus_hamiltonian(&b).matrix())?;
        for (a, e) in circ.iter().zip(&dense) {
            eig_dev = eig_dev.max((a - e).abs());
        }
    }
    r.at_most("circulant_vs_dense.max_abs", eig_dev, 1e-10);

    // short-time formula at t = 0.01
    let (n, spacing, t) = (5, 10.0, 0.01);
    let lat = SiteLattice::ring_stack(n, RINGS, RADIUS, spacing)?;
    let ham = assemble_hamiltonian(&lat, &kernel, None)?;
    let blocks = extract_block_coefficients(n, RINGS, RADIUS, spacing, &kernel)?;
    let prop = ClosedPropagator::new(&ham)?;
    let mid = lat.middle_slot();
    let mut short_dev = 0.0f64;
    let row_sets: [Vec<f64>; 3] = [
        vec![1.0 / (n as f64).sqrt(); n],
        {
            let mut v = vec![0.0; n];
            v[0] = 1.0;
            v
        },
        {
            let v: Vec<f64> = (0..n).map(|k| (k as f64 + 1.0).sin()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        },
    ];
    for row in &row_sets {
        let mut alpha = DMatrix::zeros(RINGS, n);
        alpha.row_mut(mid).copy_from_slice(row);
        let predicted = diffusion_length(&short_time_ring_populations(&alpha, &blocks, t)?, spacing);
        let mut psi = DVector::zeros(lat.len());
        for (k, a) in row.iter().enumerate() {
            psi[mid * n + k] = Complex64::new(*a, 0.0);
        }
        let pops = prop.site_populations(&psi, &[t])?;
        let numeric = diffusion_length(&RingPopulations::from_site_populations(&pops[0], &lat)?, spacing);
        short_dev = short_dev.max(relative(numeric, predicted));
    }
    r.at_most("short_time_formula.rel_error", short_dev, 1e-3);

    // seeded sweeps write identical bytes
    let mut spec = SweepSpec::with_profile(ExperimentKind::Disorder, Profile::Fast);
    spec.rings = 9;
    spec.n_values = vec![1, 2, 3];
    spec.sigmas = vec![0.0, 0.3, 3.0];
    spec.realizations = 8;
    spec.seed = opts.seed;
    let dir = std::env::temp_dir().join(format!("exciton-validate-{}", std::process::id()));
    let write = |name: &str| -> Result<Vec<u8>> {
        let path = dir.join(name);
        write_results_csv(&run_disorder_sweep(&spec)?, &path)?;
        std::fs::read(&path).map_err(|e| Error::io(&path, e))
    };
    let first = write("a.csv")?;
    let second = write("b.csv")?;
    let _ = std::fs::remove_dir_all(&dir);
    let identical = first == second;
    r.push(
        "determinism.identical_csv",
        if identical { 1.0 } else { 0.0 },
        "identical bytes",
        identical,
    );
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_criteria_pass() {
        let opts = ValidationOptions::default();
        for id in [3, 4, 9] {
            let report = run_criterion(id, &opts).unwrap();
            assert!(report.passed(), "{}", format_table(&[report]));
        }
    }

    #[test]
    fn unknown_criterion() {
        assert!(run_criterion(10, &ValidationOptions::default()).is_err());
    }

    #[test]
    fn table_lists_failures() {
        let mut r = CriterionReport::new(2);
        r.within("x", 0.7, 0.5, 0.1);
        r.at_most("y", 0.0, 1.0);
        let table = format_table(&[r]);
        assert!(table.contains("FAIL"));
        assert!(table.contains("2.x = 0.7"));
        assert!(table.contains("1/2 checks"));
    }
}
