//! `exciton`: single runs, parameter sweeps, closed-form evaluation and the
//! reproduction checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use exciton_core::config::{config_keys_help, RunConfig};
use exciton_core::coupling::{extract_block_coefficients, BlockCoefficients, CouplingKernel};
use exciton_core::experiments::{run_single, run_sweep, Profile, SingleRun, SweepGrid};
use exciton_core::io::{
    format_number, write_circulant_spectrum_csv, write_hamiltonian_csv, write_json, write_manifest,
    write_populations_csv, write_records_csv, write_results_csv, write_sigma_csv, write_spectrum_csv, Manifest,
};
use exciton_core::lattice::GeometryKind;
use exciton_core::observables::{haken_strobl_reference_sigma, sigma_deloc_analytic, sigma_loc_analytic};
use exciton_core::spectral::{circulant_eigenvalues, symmetric_eigenvalues};
use exciton_core::validation::{format_table, run_validation, ValidationOptions, CRITERIA};
use exciton_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "exciton", version, about = "Exciton diffusion in stacked-ring and helical chromophore arrays")]
#[command(after_help = after_help())]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Default sizes: `paper` (n up to 10, 500 realizations) or `fast`
    /// (n up to 6, 50 realizations).
    #[arg(long, global = true, value_name = "PROFILE", default_value = "paper", value_parser = parse_profile)]
    profile: Profile,
    /// Base seed; overrides `disorder.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trajectory; writes populations.csv, sigma.csv and manifest.json.
    Simulate,
    /// Run the sweep named by `experiment.kind`; writes results.csv,
    /// records.csv and manifest.json.
    Sweep,
    /// Evaluate the closed forms without any dynamics.
    Analytic(AnalyticArgs),
    /// Run the reproduction checks and print a pass/fail table.
    Validate(ValidateArgs),
    /// Export the Hamiltonian and its spectra as CSV.
    Debug,
}

#[derive(Debug, Args)]
struct AnalyticArgs {
    /// Chromophores per ring.
    #[arg(long = "n")]
    n: usize,
    /// Number of rings (odd).
    #[arg(long = "N", default_value_t = 31)]
    rings: usize,
    #[arg(long = "R", default_value_t = 1.0)]
    radius: f64,
    /// Ring spacing D.
    #[arg(long, default_value_t = 10.0)]
    spacing: f64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long = "J", default_value_t = 1.0)]
    coupling: f64,
    /// Keep only nearest-neighbour rings, all couplings `J / D^3`.
    #[arg(long)]
    nearest_neighbor: bool,
    /// Nearest-neighbour block row `h_1k` given explicitly (comma separated);
    /// its length sets `n`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "nearest_neighbor")]
    block_row: Option<Vec<f64>>,
    /// Also print the circulant eigenvalues `e(p, q)`.
    #[arg(long)]
    spectrum: bool,
    /// Also print the tight-binding dephasing reference at this rate.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Criteria to run (comma separated, default all).
    #[arg(long, value_delimiter = ',')]
    criteria: Option<Vec<u8>>,
}

fn after_help() -> String {
    format!(
        "Configuration keys (TOML, `section.key`):\n{}\n\nLogging: EXCITON_LOG=error|warn|info|debug|trace.\n\
         Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.",
        config_keys_help()
    )
}

fn parse_profile(s: &str) -> std::result::Result<Profile, String> {
    s.parse::<Profile>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EXCITON_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start {jobs} workers: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Simulate => cmd_simulate(&cli.global),
        Command::Sweep => cmd_sweep(&cli.global),
        Command::Analytic(args) => cmd_analytic(args),
        Command::Validate(args) => cmd_validate(&cli.global, args),
        Command::Debug => cmd_debug(&cli.global),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig> {
    let path = global.config.as_deref().ok_or_else(|| Error::Config {
        path: "--config".into(),
        message: "this command needs a configuration file".into(),
    })?;
    let mut config = RunConfig::from_path(path)?;
    if let Some(seed) = global.seed {
        config.disorder.seed = seed;
    }
    if let Some(out) = &global.out {
        config.output.dir = out.to_string_lossy().into_owned();
    }
    config.apply_profile(global.profile)?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn finish(dir: &Path, mut manifest: Manifest, outputs: &[&str], start: Instant) -> Result<()> {
    manifest.outputs = outputs.iter().map(|s| s.to_string()).collect();
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    write_manifest(&dir.join("manifest.json"), &manifest)
}

fn cmd_simulate(global: &GlobalArgs) -> Result<()> {
    let start = Instant::now();
    let config = load_config(global)?;
    let run = config.to_single_run()?;
    let out = run_single(&run)?;
    let dir = PathBuf::from(&config.output.dir);
    create_dir(&dir)?;
    write_populations_csv(&dir.join("populations.csv"), &out.times, &out.populations)?;
    write_sigma_csv(&dir.join("sigma.csv"), &out.series, out.analytic.as_deref())?;
    let mut manifest = Manifest::new("simulate", serde_json::to_value(&config)?, config.disorder.seed);
    if out.times != run.times {
        manifest.details = serde_json::json!({ "near_field_times": out.times });
    }
    finish(&dir, manifest, &["populations.csv", "sigma.csv"], start)?;
    let last = out.series.sigma.len() - 1;
    println!(
        "sigma(t = {}) = {}{}",
        format_number(out.series.times[last]),
        format_number(out.series.sigma[last]),
        out.analytic
            .as_ref()
            .map(|a| format!(" (closed form {})", format_number(a[last])))
            .unwrap_or_default()
    );
    Ok(())
}

/// Last sampled time of every near-field point, from the grid's `t` stat.
fn near_field_times(grid: &SweepGrid, radius: f64) -> serde_json::Value {
    let (Some(t), Some(spacing_axis), Some(t_axis)) = (grid.stat("t"), grid.axis("spacing"), grid.axis("t_nominal"))
    else {
        return serde_json::Value::Null;
    };
    let spacing_pos = grid.axes.iter().position(|a| a.name == "spacing").expect("spacing axis");
    let t_pos = grid.axes.iter().position(|a| a.name == "t_nominal").expect("time axis");
    let mut entries = Vec::new();
    for f in 0..grid.len() {
        let idx = grid.unravel(f);
        let spacing: f64 = spacing_axis.format(idx[spacing_pos]).parse().unwrap_or(f64::NAN);
        if spacing <= radius && idx[t_pos] + 1 == t_axis.len() {
            let point: serde_json::Map<String, serde_json::Value> = grid
                .axes
                .iter()
                .zip(&idx)
                .filter(|(a, _)| a.name != "t_nominal")
                .map(|(a, &i)| (a.name.clone(), serde_json::Value::String(a.format(i))))
                .chain(std::iter::once(("t_last".to_string(), serde_json::json!(t[f]))))
                .collect();
            entries.push(serde_json::Value::Object(point));
        }
    }
    if entries.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::json!({ "near_field_times": entries })
    }
}

fn cmd_sweep(global: &GlobalArgs) -> Result<()> {
    let start = Instant::now();
    let config = load_config(global)?;
    let spec = config.to_sweep_spec()?;
    log::info!("running {} sweep", spec.kind);
    let grid = run_sweep(&spec)?;
    let dir = PathBuf::from(&config.output.dir);
    create_dir(&dir)?;
    write_results_csv(&grid, &dir.join("results.csv"))?;
    write_records_csv(&grid, &dir.join("records.csv"))?;
    let mut outputs = vec!["results.csv".to_string(), "records.csv".to_string()];
    if config.output.debug_trajectories {
        outputs.extend(write_debug_trajectories(&config, &dir)?);
    }
    let mut manifest = Manifest::new("sweep", serde_json::to_value(&config)?, spec.seed);
    manifest.details = near_field_times(&grid, spec.radius);
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    finish(&dir, manifest, &refs, start)?;
    println!("{} grid points written to {}", grid.len(), dir.display());
    Ok(())
}

/// Disorder-free population trajectories for every `(state, spacing, n,
/// gamma)` of the sweep.
fn write_debug_trajectories(config: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let sub = dir.join("trajectories");
    create_dir(&sub)?;
    let mut written = Vec::new();
    for state in config.experiment.state.to_vec() {
        for spacing in config.geometry.spacing.to_vec() {
            for n in config.geometry.n.to_vec() {
                for gamma in config.dynamics.gamma.to_vec() {
                    let run = SingleRun {
                        geometry: config.geometry.kind,
                        n,
                        rings: config.geometry.rings,
                        radius: config.geometry.radius,
                        spacing,
                        coupling: config.coupling.strength,
                        gamma,
                        kappa: config.dynamics.kappa,
                        sigma: 0.0,
                        seed: config.disorder.seed,
                        state,
                        times: config.times(),
                        near_field_autoscale: config.dynamics.near_field_autoscale,
                        renormalize: config.dynamics.renormalize,
                        dt_override: config.dynamics.integrator.dt_override,
                    };
                    let out = run_single(&run)?;
                    let name = format!(
                        "trajectories/populations_{}_D{}_n{}_gamma{}.csv",
                        state.as_str(),
                        format_number(spacing),
                        n,
                        format_number(gamma)
                    );
                    write_populations_csv(&dir.join(&name), &out.times, &out.populations)?;
                    written.push(name);
                }
            }
        }
    }
    Ok(written)
}

fn cmd_analytic(args: &AnalyticArgs) -> Result<()> {
    let kernel = CouplingKernel::new(args.coupling)?;
    let table = if let Some(row) = &args.block_row {
        BlockCoefficients::nearest_neighbor_block(args.rings, args.spacing, row)?
    } else if args.nearest_neighbor {
        BlockCoefficients::nearest_neighbor_symmetric(args.n, args.rings, args.spacing, &kernel)?
    } else {
        extract_block_coefficients(args.n, args.rings, args.radius, args.spacing, &kernel)?
    };
    println!("sigma_deloc = {}", format_number(sigma_deloc_analytic(&table, args.t)?));
    println!("sigma_loc = {}", format_number(sigma_loc_analytic(&table, args.t)?));
    if let Some(gamma) = args.gamma {
        println!(
            "sigma_tight_binding_dephasing = {}",
            format_number(haken_strobl_reference_sigma(args.coupling, gamma, args.t)?)
        );
    }
    if args.spectrum {
        for (p, q, e) in circulant_eigenvalues(&table).labelled() {
            println!("e({p}, {q}) = {}", format_number(e));
        }
    }
    Ok(())
}

fn cmd_validate(global: &GlobalArgs, args: &ValidateArgs) -> Result<()> {
    let ids: Vec<u8> = args
        .criteria
        .clone()
        .unwrap_or_else(|| CRITERIA.iter().map(|(id, _)| *id).collect());
    let opts = ValidationOptions {
        profile: global.profile,
        seed: global.seed.unwrap_or(0),
    };
    let reports = run_validation(&ids, &opts)?;
    print!("{}", format_table(&reports));
    let passed = reports.iter().filter(|r| r.passed()).count();
    println!("{passed}/{} criteria passed", reports.len());
    if let Some(dir) = &global.out {
        create_dir(dir)?;
        write_json(&dir.join("validation.json"), &reports)?;
    }
    Ok(())
}

fn cmd_debug(global: &GlobalArgs) -> Result<()> {
    let config = load_config(global)?;
    let run = config.to_single_run()?;
    let dir = PathBuf::from(&config.output.dir);
    create_dir(&dir)?;
    let kernel = CouplingKernel::new(run.coupling)?;
    let out = run_single(&SingleRun {
        times: vec![0.0],
        ..run.clone()
    })?;
    write_hamiltonian_csv(&dir.join("hamiltonian.csv"), &out.hamiltonian)?;
    write_spectrum_csv(&dir.join("spectrum.csv"), &symmetric_eigenvalues(out.hamiltonian.matrix())?)?;
    if run.geometry == GeometryKind::RingStack && run.rings % 2 == 1 {
        let table = extract_block_coefficients(run.n, run.rings, run.radius, run.spacing, &kernel)?;
        write_circulant_spectrum_csv(&dir.join("circulant_spectrum.csv"), &circulant_eigenvalues(&table))?;
    }
    println!("wrote Hamiltonian and spectra to {}", dir.display());
    Ok(())
}
