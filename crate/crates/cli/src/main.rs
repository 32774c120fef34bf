use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use cslab::csl::{pairwise_dephasing_rate, DensityKind, RateMethod};
use cslab::dfs::dfs_report;
use cslab::lindblad::{evolve_config_basis, extract_decay_rate};
use cslab::model::CVector;
use cslab::rates::{read_exclusions, scan, write_scan_csv, ScanConfig};
use cslab::theorem2::{brute_force_no_dfs, random_pair, rectangular_lattice, witness_trials, Construction};
use cslab::{CslParams, DensityMatrix, DephasingMatrix, Error, LindbladModel, ParticleConfiguration, Position};

const EXIT_USAGE: u8 = 2;
const EXIT_INTEGRATOR: u8 = 3;
const EXIT_PRECONDITION: u8 = 4;
const EXIT_ANOMALY: u8 = 5;
const EXIT_SIZE: u8 = 6;

/// CSL decoherence-free subspace lab.
///
/// Exit codes: 0 ok, 2 usage or invalid input, 3 integrator failure,
/// 4 operator precondition failure, 5 no-go anomaly, 6 enumeration too large.
#[derive(Parser)]
#[command(name = "cslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dephasing of a two-position superposition of one particle
    Dephase {
        /// Separation between the two branches (nm)
        #[arg(long)]
        separation: f64,
        /// Localization length r_c (nm)
        #[arg(long, default_value_t = 100.0)]
        rc: f64,
        /// Collapse hitting rate gamma (nm^3/s)
        #[arg(long, default_value_t = 1e-9)]
        gamma: f64,
        /// Final time (s); defaults to three decay times, or 1 s without decay
        #[arg(long)]
        tmax: Option<f64>,
        /// Sampling step (s); defaults to tmax/2000
        #[arg(long)]
        dt: Option<f64>,
        /// Trajectory CSV (t, |rho_01|, arg rho_01)
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint degenerate eigenspaces of a Lindblad model's jump operators
    DfsCheck {
        /// Model JSON: {"hamiltonian", "jump_ops", "coupling"} as [re, im] matrices
        #[arg(long)]
        model: PathBuf,
        /// Report JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Witness search on randomly constructed degenerate configuration pairs
    Theorem2 {
        /// sphere | mirror
        #[arg(long)]
        construction: Construction,
        /// Spatial dimension (1-3)
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Particles per configuration
        #[arg(long, default_value_t = 1)]
        particles: usize,
        /// Number of constructed pairs
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// RNG seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Localization length r_c (nm)
        #[arg(long, default_value_t = 100.0)]
        rc: f64,
        /// Summary JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Center-of-mass collapse rates over a log-spaced (lambda, r_c) grid
    Scan {
        /// Smallest localization rate lambda (1/s)
        #[arg(long, default_value_t = 1e-20)]
        lambda_min: f64,
        /// Largest localization rate lambda (1/s)
        #[arg(long, default_value_t = 1e-10)]
        lambda_max: f64,
        /// Smallest localization length r_c (nm)
        #[arg(long, default_value_t = 1.0)]
        rc_min: f64,
        /// Largest localization length r_c (nm)
        #[arg(long, default_value_t = 1e6)]
        rc_max: f64,
        /// Grid points per axis, endpoints included
        #[arg(long, default_value_t = 64)]
        cells: usize,
        /// TLS densities (1/(m^3 GHz)), comma separated
        #[arg(long, default_value = "1e20", value_delimiter = ',')]
        density: Vec<f64>,
        /// Frequency window (GHz)
        #[arg(long, default_value_t = 1.0)]
        window_ghz: f64,
        /// Number of r_c^3 volumes N
        #[arg(long, default_value_t = 1.0)]
        volumes: f64,
        /// JSON list of {"lambda_min","lambda_max","rc_min","rc_max"} rectangles (1/s, nm)
        #[arg(long)]
        exclude: Option<PathBuf>,
        /// Scan CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive no-DFS certificate on a finite lattice
    Brute {
        /// JSON list of site coordinates [[x, ...], ...] (nm)
        #[arg(long, conflicts_with = "lattice", required_unless_present = "lattice")]
        sites: Option<PathBuf>,
        /// Rectangular lattice "M,spacing", "MxN,spacing" or "MxNxK,spacing" (spacing in nm)
        #[arg(long)]
        lattice: Option<String>,
        /// Particles per configuration
        #[arg(long)]
        particles: usize,
        /// Localization length r_c (nm)
        #[arg(long, default_value_t = 100.0)]
        rc: f64,
        /// Collapse hitting rate gamma (nm^d/s)
        #[arg(long, default_value_t = 1e-9)]
        gamma: f64,
        /// Recorded in the certificate; the enumeration is deterministic
        #[arg(long)]
        seed: Option<u64>,
        /// Certificate JSON
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Failure { code, message: message.to_string() }
    }

    fn usage(message: impl std::fmt::Display) -> Self {
        Self::new(EXIT_USAGE, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonCommuting { .. } | Error::Precondition(_) => EXIT_PRECONDITION,
            Error::StepSize(_) | Error::Aborted { .. } => EXIT_INTEGRATOR,
            Error::TooLarge { .. } => EXIT_SIZE,
            _ => EXIT_USAGE,
        };
        Failure::new(code, e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::usage(e)
    }
}

type CmdResult = Result<(), Failure>;

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

struct Manifest<'a> {
    subcommand: &'a str,
    params: Value,
    inputs: Vec<&'a Path>,
    out: &'a Path,
    seed: Option<u64>,
    summary: Value,
}

impl Manifest<'_> {
    fn write(self, started: Instant) -> CmdResult {
        let inputs = self
            .inputs
            .iter()
            .map(|p| Ok(json!({ "path": p.display().to_string(), "sha256": sha256_file(p)? })))
            .collect::<Result<Vec<Value>, Failure>>()?;
        let manifest = json!({
            "subcommand": self.subcommand,
            "params": self.params,
            "inputs": inputs,
            "outputs": [self.out.display().to_string()],
            "seed": self.seed,
            "summary": self.summary,
            "wall_time_s": started.elapsed().as_secs_f64(),
        });
        let path = PathBuf::from(format!("{}.manifest.json", self.out.display()));
        fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> CmdResult {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("--{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> CmdResult {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("--{name} must be non-negative, got {v}")))
    }
}

fn cmd_dephase(separation: f64, rc: f64, gamma: f64, tmax: Option<f64>, dt: Option<f64>, out: &Path) -> CmdResult {
    let started = Instant::now();
    non_negative("separation", separation)?;
    positive("rc", rc)?;
    non_negative("gamma", gamma)?;
    let params = CslParams::from_rc(rc, gamma, 3)?;
    let basis = vec![
        ParticleConfiguration::from_coords([vec![0.0, 0.0, 0.0]])?,
        ParticleConfiguration::from_coords([vec![separation, 0.0, 0.0]])?,
    ];
    let rate = pairwise_dephasing_rate(&basis[0], &basis[1], &params, &RateMethod::ClosedForm, DensityKind::Number)?;
    let analytic = params.localization_rate() * -(-params.alpha() * separation * separation / 4.0).exp_m1();
    let tmax = tmax.unwrap_or(if rate > 0.0 { 3.0 / rate } else { 1.0 });
    positive("tmax", tmax)?;
    let dt = dt.unwrap_or(tmax / 2000.0);
    positive("dt", dt)?;

    let dephasing = DephasingMatrix::from_rates(DMatrix::from_row_slice(2, 2, &[0.0, rate, rate, 0.0]))?;
    let one = Complex64::new(1.0, 0.0);
    let rho0 = DensityMatrix::pure(&CVector::from_vec(vec![one, one]))?;
    let result = evolve_config_basis(&basis, &dephasing, None, &rho0, tmax, dt)?;
    if !result.diagnostics.within_certified_bounds() {
        return Err(Failure::new(EXIT_INTEGRATOR, format!("invariant violation: {:?}", result.diagnostics)));
    }
    result.write_csv(BufWriter::new(File::create(out)?), &[(0, 1)])?;
    let fit = extract_decay_rate(&result.times, &result.entry(0, 1))?;
    let rel_err = if analytic > 0.0 { Some((fit.rate - analytic).abs() / analytic) } else { None };

    println!("samples:       {}", result.times.len());
    println!("fitted rate:   {:.9e} 1/s", fit.rate);
    println!("analytic rate: {:.9e} 1/s", analytic);
    match rel_err {
        Some(e) => println!("relative error: {e:.3e}"),
        None => println!("relative error: n/a (analytic rate is 0; fitted {:.3e})", fit.rate),
    }
    Manifest {
        subcommand: "dephase",
        params: json!({ "separation_nm": separation, "rc_nm": rc, "gamma_nm3_per_s": gamma, "tmax_s": tmax, "dt_s": dt }),
        inputs: vec![],
        out,
        seed: None,
        summary: json!({
            "fitted_rate": fit.rate,
            "analytic_rate": analytic,
            "relative_error": rel_err,
            "fit_truncated": fit.truncated,
            "samples": result.times.len(),
        }),
    }
    .write(started)
}

fn cmd_dfs_check(model_path: &Path, out: &Path) -> CmdResult {
    let started = Instant::now();
    let model = LindbladModel::from_json_file(model_path).map_err(|e| match e {
        Error::Validation(m) => Failure::new(EXIT_PRECONDITION, m),
        other => Failure::from(other),
    })?;
    let report = dfs_report(&model)?;
    fs::write(out, report.to_json_string()? + "\n")?;
    let dims: Vec<usize> = report.subspaces.iter().map(|s| s.dim).collect();
    println!("joint eigenspaces: {dims:?}");
    println!("largest candidate DFS dimension: {}", report.max_dimension);
    Manifest {
        subcommand: "dfs-check",
        params: json!({ "model": model_path.display().to_string() }),
        inputs: vec![model_path],
        out,
        seed: None,
        summary: json!({ "subspace_dimensions": dims, "max_dimension": report.max_dimension }),
    }
    .write(started)
}

fn cmd_theorem2(construction: Construction, dim: usize, particles: usize, trials: usize, seed: u64, rc: f64, out: &Path) -> CmdResult {
    let started = Instant::now();
    positive("rc", rc)?;
    if construction == Construction::Custom {
        return Err(Failure::usage("--construction must be sphere or mirror"));
    }
    let params = CslParams::from_rc(rc, cslab::params::DEFAULT_GAMMA_NM3_PER_S, dim)?;
    // Surface infeasible constructions even when no trials are requested.
    random_pair(construction, particles, &params, seed)?;
    let results = witness_trials(construction, particles, trials, seed, &params)?;
    let found = results.iter().filter(|t| t.verified).count();
    let trivial = results.iter().filter(|t| t.pair.is_trivial(&params)).count();
    let anomalies: Vec<usize> = results.iter().filter(|t| t.is_anomaly(&params)).map(|t| t.trial).collect();
    let summary = json!({
        "construction": construction,
        "dim": dim,
        "particles": particles,
        "trials": trials,
        "seed": seed,
        "rc_nm": rc,
        "witnesses_found": found,
        "trivial_pairs": trivial,
        "anomalies": anomalies,
    });
    let mut doc = summary.clone();
    doc["results"] = serde_json::to_value(&results)?;
    fs::write(out, serde_json::to_string_pretty(&doc)? + "\n")?;
    println!("witnesses: {found}/{trials}");
    Manifest {
        subcommand: "theorem2",
        params: json!({ "construction": construction, "dim": dim, "particles": particles, "trials": trials, "rc_nm": rc }),
        inputs: vec![],
        out,
        seed: Some(seed),
        summary,
    }
    .write(started)?;
    if !anomalies.is_empty() {
        return Err(Failure::new(EXIT_ANOMALY, format!("no-witness anomaly in trials {anomalies:?}")));
    }
    Ok(())
}

fn cmd_scan(config: ScanConfig, exclude: Option<&Path>, out: &Path) -> CmdResult {
    let started = Instant::now();
    let mut config = config;
    if let Some(path) = exclude {
        config.exclusions = read_exclusions(path)?;
    }
    let records = scan(&config)?;
    write_scan_csv(BufWriter::new(File::create(out)?), &records)?;
    let gammas = records.iter().map(|r| r.gamma_collapse);
    let min = gammas.clone().fold(f64::INFINITY, f64::min);
    let max = gammas.fold(0.0, f64::max);
    let excluded = records.iter().filter(|r| r.excluded).count();
    println!("rows: {}", records.len());
    println!("Gamma range: {min:.3e} .. {max:.3e} 1/s");
    println!("excluded cells: {excluded}");
    Manifest {
        subcommand: "scan",
        params: serde_json::to_value(&config)?,
        inputs: exclude.into_iter().collect(),
        out,
        seed: None,
        summary: json!({ "rows": records.len(), "gamma_min": min, "gamma_max": max, "excluded": excluded }),
    }
    .write(started)
}

/// `"M,spacing"`, `"MxN,spacing"` or `"MxNxK,spacing"`.
fn parse_lattice(text: &str) -> Result<Vec<Position>, Failure> {
    let bad = || Failure::usage(format!("--lattice {text:?}: expected \"M,spacing\" or \"MxN,spacing\""));
    let (shape, spacing) = text.split_once(',').ok_or_else(bad)?;
    let shape: Vec<usize> = shape.split('x').map(|s| s.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let spacing: f64 = spacing.trim().parse().map_err(|_| bad())?;
    Ok(rectangular_lattice(&shape, spacing)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_brute(sites: Option<&Path>, lattice: Option<&str>, particles: usize, rc: f64, gamma: f64, seed: Option<u64>, out: &Path) -> CmdResult {
    let started = Instant::now();
    positive("rc", rc)?;
    non_negative("gamma", gamma)?;
    if particles == 0 {
        return Err(Failure::usage("--particles must be at least 1"));
    }
    let site_list: Vec<Position> = match (sites, lattice) {
        (Some(path), _) => serde_json::from_str(&fs::read_to_string(path)?)?,
        (None, Some(text)) => parse_lattice(text)?,
        (None, None) => return Err(Failure::usage("one of --sites or --lattice is required")),
    };
    let dim = site_list.first().map(Position::dim).ok_or_else(|| Failure::usage("no lattice sites"))?;
    let params = CslParams::from_rc(rc, gamma, dim)?;
    let mut cert = brute_force_no_dfs(&site_list, particles, &params)?;
    cert.seed = seed;
    fs::write(out, cert.to_json_string()? + "\n")?;
    println!("configurations: {}", cert.n_configs);
    match cert.min_pairwise_rate {
        Some(d) => println!("min pairwise rate: {d:.6e} 1/s"),
        None => println!("min pairwise rate: n/a (single configuration)"),
    }
    println!("largest joint eigenspace: {}", cert.dfs_max_dimension);
    Manifest {
        subcommand: "brute",
        params: json!({ "lattice": lattice, "sites": sites.map(|p| p.display().to_string()), "particles": particles, "rc_nm": rc, "gamma": gamma }),
        inputs: sites.into_iter().collect(),
        out,
        seed,
        summary: serde_json::to_value(&cert)?,
    }
    .write(started)?;
    if !cert.holds {
        return Err(Failure::new(EXIT_ANOMALY, "certificate failed: a protected subspace or zero rate was found"));
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Dephase { separation, rc, gamma, tmax, dt, out } => cmd_dephase(separation, rc, gamma, tmax, dt, &out),
        Command::DfsCheck { model, out } => cmd_dfs_check(&model, &out),
        Command::Theorem2 { construction, dim, particles, trials, seed, rc, out } => {
            cmd_theorem2(construction, dim, particles, trials, seed, rc, &out)
        }
        Command::Scan { lambda_min, lambda_max, rc_min, rc_max, cells, density, window_ghz, volumes, exclude, out } => {
            let config = ScanConfig {
                lambda_min,
                lambda_max,
                rc_min,
                rc_max,
                cells,
                densities: density,
                window_ghz,
                n_volumes: volumes,
                exclusions: Vec::new(),
            };
            cmd_scan(config, exclude.as_deref(), &out)
        }
        Command::Brute { sites, lattice, particles, rc, gamma, seed, out } => {
            cmd_brute(sites.as_deref(), lattice.as_deref(), particles, rc, gamma, seed, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
