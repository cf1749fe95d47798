//! Experiment runner: wires configs to sweeps, solvers and simulators, and
//! writes the CSV/report artifacts. Exit codes: 0 ok, 1 usage/config/runtime
//! error, 2 at least one claim failed (report still written).

use clap::{Parser, Subcommand};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use zeronoise::abstract_response::{
    builtin_family_d6, family_from_csv, response_terms, verify_linear_response,
    verify_quadratic_response, MarkovFamily,
};
use zeronoise::config::ExperimentConfig;
use zeronoise::grid::DensityGrid;
use zeronoise::montecarlo::simulate_histogram;
use zeronoise::operators::{assemble_convolution, assemble_fourier, assemble_ulam, compose_noisy, Backend, TransferMatrix};
use zeronoise::report::{
    abstract_claims, all_passed, density_csv, fits_text, parse_sweep_csv, piecewise_claims,
    render_report, smooth_claims, sweep_csv, ClaimCheck,
};
use zeronoise::response::{
    fit_exponent, quadratic_coefficient, zero_noise_sweep, FitField, FitModel, FitResult,
    SweepConfig,
};
use zeronoise::solver::stationary_density;
use zeronoise::{Error, Result};

#[derive(Parser)]
#[command(name = "zeronoise", version, about = "Stationary densities and zero-noise response of expanding circle maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// experiment configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides the config's [output] dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads for per-delta parallelism (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// RNG seed (overrides the config's [montecarlo] seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// discretization backend (overrides the config)
    #[arg(long, global = true, value_parser = ["ulam", "fourier"])]
    backend: Option<String>,
    /// backend resolution: bins for ulam, modes for fourier
    #[arg(long, global = true)]
    resolution: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one stationary density and write it as CSV
    Stationary {
        /// noise level; omit for the deterministic density h0
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Run the delta-sweep, fit exponents, and check the response claims
    Sweep,
    /// Compute the quadratic response coefficient (sigma^2/2)(Id-L_T)^{-1} h0''
    Response,
    /// Estimate the stationary density by simulating noisy trajectories
    Montecarlo,
    /// Check linear/quadratic response of a finite Markov family
    Abstract,
    /// Re-fit power laws on an existing sweep.csv
    Fit {
        /// path to a sweep.csv produced by the sweep subcommand
        csv: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        // a second invocation in the same process would fail; harmless here
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => match &cli.command {
            Command::Fit { .. } => ExperimentConfig::parse("")?,
            _ => {
                return Err(Error::Unsupported(
                    "this subcommand needs --config PATH".into(),
                ))
            }
        },
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        if let Some(sim) = cfg.sim.as_mut() {
            sim.seed = seed;
        }
    }
    cfg.backend = resolve_backend(&cli, cfg.backend)?;
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));

    match cli.command {
        Command::Stationary { delta } => cmd_stationary(&cfg, &out_dir, delta),
        Command::Sweep => cmd_sweep(&cfg, &out_dir),
        Command::Response => cmd_response(&cfg, &out_dir),
        Command::Montecarlo => cmd_montecarlo(&cfg, &out_dir),
        Command::Abstract => cmd_abstract(&cfg, &out_dir),
        Command::Fit { csv } => cmd_fit(&csv, cli.out.as_deref()),
    }
}

fn resolve_backend(cli: &Cli, from_cfg: Option<Backend>) -> Result<Option<Backend>> {
    let n = cli.resolution.or(from_cfg.map(|b| match b {
        Backend::Ulam(n) | Backend::Fourier(n) => n,
    }));
    match (&cli.backend, n) {
        (Some(kind), Some(n)) => Ok(Some(if kind == "ulam" {
            Backend::Ulam(n)
        } else {
            Backend::Fourier(n)
        })),
        (Some(_), None) => Err(Error::Unsupported(
            "--backend needs --resolution (or a [sweep] resolution in the config)".into(),
        )),
        (None, Some(n)) => Ok(from_cfg.map(|b| match b {
            Backend::Ulam(_) => Backend::Ulam(n),
            Backend::Fourier(_) => Backend::Fourier(n),
        })),
        (None, None) => Ok(from_cfg),
    }
}

fn require_map(cfg: &ExperimentConfig) -> Result<&zeronoise::maps::CircleMap> {
    cfg.map
        .as_ref()
        .ok_or_else(|| Error::Unsupported("config defines no [map]".into()))
}

fn require_kernel(cfg: &ExperimentConfig) -> Result<&zeronoise::kernels::NoiseKernel> {
    cfg.kernel
        .as_ref()
        .ok_or_else(|| Error::Unsupported("config defines no [kernel]".into()))
}

fn require_backend(cfg: &ExperimentConfig) -> Result<Backend> {
    cfg.backend
        .ok_or_else(|| Error::Unsupported("config defines no [sweep] backend/resolution".into()))
}

fn sweep_config(cfg: &ExperimentConfig) -> Result<SweepConfig> {
    let mut sc = match require_backend(cfg)? {
        Backend::Fourier(n) => SweepConfig::spectral(n),
        Backend::Ulam(n) => SweepConfig::ulam(n),
    };
    if let Some(tol) = cfg.solver_tol {
        sc.solver_tol = tol;
    }
    if let Some(iters) = cfg.max_iterations {
        sc.max_iterations = iters;
    }
    Ok(sc)
}

fn write(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content)?;
    Ok(())
}

fn assemble(map: &zeronoise::maps::CircleMap, sc: &SweepConfig) -> Result<TransferMatrix> {
    match sc.backend {
        Backend::Fourier(n) => assemble_fourier(map, n, sc.quad_points),
        Backend::Ulam(n) => assemble_ulam(map, n),
    }
}

fn solve_density(
    cfg: &ExperimentConfig,
    delta: Option<f64>,
) -> Result<(DensityGrid, zeronoise::solver::SolveReport)> {
    let map = require_map(cfg)?;
    let sc = sweep_config(cfg)?;
    let lt = assemble(map, &sc)?;
    let op = match delta {
        None => lt,
        Some(d) => {
            let q = assemble_convolution(require_kernel(cfg)?, d, sc.backend)?;
            compose_noisy(lt, q)?
        }
    };
    stationary_density(&op, sc.solver_tol, sc.max_iterations)
}

fn cmd_stationary(cfg: &ExperimentConfig, out_dir: &Path, delta: Option<f64>) -> Result<ExitCode> {
    let (h, rep) = solve_density(cfg, delta)?;
    let label = match delta {
        None => "h0".to_string(),
        Some(d) => format!("h_delta_{d:.4e}"),
    };
    let path = out_dir.join("densities").join(format!("{label}.csv"));
    write(&path, &density_csv(&h))?;
    println!(
        "{label}: mass = {:.6}, L1 = {:.6}, BV = {:.6} ({} iterations, residual {:.3e})",
        h.mass(),
        h.l1(),
        h.bv(),
        rep.iterations,
        rep.final_residual
    );
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExitCode> {
    let map = require_map(cfg)?;
    let kernel = require_kernel(cfg)?;
    if cfg.deltas.is_empty() {
        return Err(Error::Unsupported("config defines no [sweep] deltas".into()));
    }
    let sc = sweep_config(cfg)?;
    let records = zero_noise_sweep(map, kernel, &cfg.deltas, &sc)?;
    write(&out_dir.join("sweep.csv"), &sweep_csv(&records))?;

    let mut fits: Vec<(&str, FitResult)> = vec![
        ("dist_l1", fit_exponent(&records, FitField::DistL1, FitModel::Power)?),
        ("dist_l1_log", fit_exponent(&records, FitField::DistL1, FitModel::PowerLog)?),
        ("dist_w11", fit_exponent(&records, FitField::DistW11, FitModel::Power)?),
        ("lip_hdelta", fit_exponent(&records, FitField::LipHdelta, FitModel::Power)?),
    ];
    if records.iter().any(|r| r.response_residual.is_some()) {
        fits.push((
            "response_residual",
            fit_exponent(&records, FitField::ResponseResidual, FitModel::Power)?,
        ));
    }
    write(&out_dir.join("fits.txt"), &fits_text(&fits))?;

    // endpoint densities for plotting; the sweep itself only stores scalars
    write(
        &out_dir.join("densities").join("h0.csv"),
        &density_csv(&solve_density(cfg, None)?.0),
    )?;
    for &d in [cfg.deltas.first(), cfg.deltas.last()].into_iter().flatten() {
        write(
            &out_dir.join("densities").join(format!("h_delta_{d:.4e}.csv")),
            &density_csv(&solve_density(cfg, Some(d))?.0),
        )?;
    }

    // fits[0] = dist_l1 power fit, fits[2] = dist_w11, fits[3] = raw lip slope
    let claims = if map.is_smooth() {
        smooth_claims(&records, &fits[2].1)
    } else {
        piecewise_claims(&records, &fits[0].1, &fits[3].1)
    };
    let context = vec![
        format!("map = {}", map.name()),
        format!("kernel = {}", kernel.name()),
        format!("backend = {:?}", sc.backend),
        format!(
            "deltas = {:?} ({} flagged as under-resolved)",
            cfg.deltas,
            records.iter().filter(|r| r.flagged).count()
        ),
    ];
    finish_with_claims(out_dir, context, claims)
}

fn cmd_response(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExitCode> {
    let map = require_map(cfg)?;
    let kernel = require_kernel(cfg)?;
    let sc = sweep_config(cfg)?;
    let lt = assemble(map, &sc)?;
    let (h0, _) = stationary_density(&lt, sc.solver_tol, sc.max_iterations)?;
    let sigma2 = kernel.sigma2();
    let r = quadratic_coefficient(&lt, &h0, sigma2)?;
    write(&out_dir.join("densities").join("h0.csv"), &density_csv(&h0))?;
    write(&out_dir.join("densities").join("response_coefficient.csv"), &density_csv(&r))?;
    println!(
        "kernel {} has sigma^2 = {sigma2:.6}; ||R||_L1 = {:.6e}, ||R||_W11 = {:.6e}",
        kernel.name(),
        r.l1(),
        r.wk1(1)
    );
    println!("wrote {}", out_dir.join("densities").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_montecarlo(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExitCode> {
    let map = require_map(cfg)?;
    let kernel = require_kernel(cfg)?;
    let sim = cfg
        .sim
        .ok_or_else(|| Error::Unsupported("config defines no [montecarlo] section".into()))?;
    let delta = cfg.sim_delta.expect("sim_delta is set whenever sim is");
    let h = simulate_histogram(map, kernel, delta, &sim)?;
    let path = out_dir.join("densities").join("montecarlo.csv");
    write(&path, &density_csv(&h))?;
    println!(
        "simulated {} chains x {} steps (burn-in {}) at delta = {delta}: {} bins, mass = {:.12}",
        sim.n_chains,
        sim.n_steps,
        sim.burn_in,
        sim.bins,
        h.mass()
    );
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn load_family(cfg: &ExperimentConfig) -> Result<(MarkovFamily, String)> {
    let spec = cfg
        .abstract_spec
        .as_ref()
        .ok_or_else(|| Error::Unsupported("config defines no [abstract] section".into()))?;
    match &spec.family_csv {
        None => Ok((builtin_family_d6(), "builtin".into())),
        Some(path) => {
            let file = fs::File::open(path)?;
            Ok((
                family_from_csv(BufReader::new(file), spec.delta_max)?,
                path.display().to_string(),
            ))
        }
    }
}

fn cmd_abstract(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExitCode> {
    let (family, origin) = load_family(cfg)?;
    let deltas = &cfg.abstract_spec.as_ref().unwrap().deltas;
    let (h0, h1, h2) = response_terms(&family)?;
    let lin = verify_linear_response(&family, deltas)?;
    let quad = verify_quadratic_response(&family, deltas)?;

    let mut csv = String::from("delta,linear_deviation,quadratic_deviation\n");
    for (l, q) in lin.iter().zip(&quad) {
        csv.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", l.0, l.1, q.1));
    }
    write(&out_dir.join("abstract_deviations.csv"), &csv)?;

    let mut context = vec![
        format!("family = {origin} (dimension {})", family.dim()),
        format!(
            "||h0||_1 = {:.3}, ||h1||_1 = {:.6}, ||h2||_1 = {:.6}",
            h0.iter().map(|v| v.abs()).sum::<f64>(),
            h1.iter().map(|v| v.abs()).sum::<f64>(),
            h2.iter().map(|v| v.abs()).sum::<f64>()
        ),
        "per-delta deviations (linear | quadratic):".into(),
    ];
    for (l, q) in lin.iter().zip(&quad) {
        context.push(format!("  delta = {:>9.1e}: {:.6e} | {:.6e}", l.0, l.1, q.1));
    }
    finish_with_claims(out_dir, context, abstract_claims(&lin, &quad))
}

fn finish_with_claims(
    out_dir: &Path,
    context: Vec<String>,
    claims: Vec<ClaimCheck>,
) -> Result<ExitCode> {
    let report = render_report(&context, &claims);
    write(&out_dir.join("report.txt"), &report)?;
    print!("{report}");
    println!("wrote {}", out_dir.join("report.txt").display());
    Ok(if all_passed(&claims) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_fit(csv: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let records = parse_sweep_csv(&fs::read_to_string(csv)?)?;
    let mut fits: Vec<(&str, FitResult)> = Vec::new();
    for (name, field) in [
        ("dist_l1", FitField::DistL1),
        ("dist_w11", FitField::DistW11),
        ("lip_hdelta", FitField::LipHdelta),
        ("response_residual", FitField::ResponseResidual),
    ] {
        for model in [FitModel::Power, FitModel::PowerLog] {
            match fit_exponent(&records, field, model) {
                Ok(fit) => fits.push((name, fit)),
                // residual column may be absent; skip silently
                Err(Error::TooFewRecords { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let text = fits_text(&fits);
    print!("{text}");
    if let Some(dir) = out {
        write(&dir.join("fits.txt"), &text)?;
        println!("wrote {}", dir.join("fits.txt").display());
    }
    Ok(ExitCode::SUCCESS)
}
