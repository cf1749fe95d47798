//! Line-oriented experiment configuration: `[section]` headers over
//! `key = value` pairs, `#` comments. Referenced map/kernel names are
//! resolved while parsing so every failure carries the offending line.

use crate::error::{Error, Result};
use crate::kernels::NoiseKernel;
use crate::maps::{CircleMap, PiecewiseMap, SmoothMap};
use crate::montecarlo::SimulationConfig;
use crate::operators::Backend;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct AbstractSpec {
    /// `None` selects the built-in d=6 family
    pub family_csv: Option<PathBuf>,
    pub delta_max: f64,
    pub deltas: Vec<f64>,
}

#[derive(Debug)]
pub struct ExperimentConfig {
    pub map: Option<CircleMap>,
    pub kernel: Option<NoiseKernel>,
    pub backend: Option<Backend>,
    pub deltas: Vec<f64>,
    pub solver_tol: Option<f64>,
    pub max_iterations: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub sim: Option<SimulationConfig>,
    pub sim_delta: Option<f64>,
    pub abstract_spec: Option<AbstractSpec>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Map,
    Kernel,
    Sweep,
    Solver,
    MonteCarlo,
    Abstract,
    Output,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config { line, message: message.into() }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| err(line, format!("{key}: expected a number, got '{}'", v.trim())))
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64> {
    v.trim()
        .parse()
        .map_err(|_| err(line, format!("{key}: expected a non-negative integer, got '{}'", v.trim())))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = v.split([',', ' ', '\t']).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(err(line, format!("{key}: empty list")));
    }
    items.iter().map(|s| parse_f64(line, key, s)).collect()
}

/// Raw montecarlo keys; assembled into a SimulationConfig once parsing ends.
#[derive(Default)]
struct SimDraft {
    steps: Option<u64>,
    burn_in: Option<u64>,
    chains: Option<u64>,
    bins: Option<u64>,
    seed: Option<u64>,
    delta: Option<f64>,
    first_line: usize,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(src: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig {
            map: None,
            kernel: None,
            backend: None,
            deltas: Vec::new(),
            solver_tol: None,
            max_iterations: None,
            out_dir: None,
            sim: None,
            sim_delta: None,
            abstract_spec: None,
        };
        let mut section = Section::None;
        let mut branches: Vec<(f64, String)> = Vec::new();
        let mut branches_line = 0usize;
        let mut backend_kind: Option<(String, usize)> = None;
        let mut resolution: Option<usize> = None;
        let mut sim = SimDraft::default();
        let mut abstract_family: Option<(Option<PathBuf>, usize)> = None;
        let mut abstract_delta_max: Option<f64> = None;
        let mut abstract_deltas: Vec<f64> = Vec::new();

        for (idx, raw) in src.lines().enumerate() {
            let line = idx + 1;
            let text = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if text.is_empty() {
                continue;
            }
            if let Some(name) = text.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
                section = match name.trim() {
                    "map" => Section::Map,
                    "kernel" => Section::Kernel,
                    "sweep" => Section::Sweep,
                    "solver" => Section::Solver,
                    "montecarlo" => Section::MonteCarlo,
                    "abstract" => Section::Abstract,
                    "output" => Section::Output,
                    other => return Err(err(line, format!("unknown section [{other}]"))),
                };
                continue;
            }
            let (key, value) = text
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected 'key = value', got '{text}'")))?;
            let (key, value) = (key.trim(), value.trim());
            match section {
                Section::None => {
                    return Err(err(line, format!("key '{key}' appears before any [section]")))
                }
                Section::Map => match key {
                    "name" => {
                        if cfg.map.is_some() || !branches.is_empty() {
                            return Err(err(line, "map is already defined"));
                        }
                        cfg.map = Some(
                            CircleMap::by_name(value)
                                .map_err(|e| err(line, e.to_string()))?,
                        );
                    }
                    "smooth" => {
                        if cfg.map.is_some() || !branches.is_empty() {
                            return Err(err(line, "map is already defined"));
                        }
                        cfg.map = Some(CircleMap::Smooth(
                            SmoothMap::from_expr("custom", value)
                                .map_err(|e| err(line, e.to_string()))?,
                        ));
                    }
                    "branch" => {
                        if cfg.map.is_some() {
                            return Err(err(line, "map is already defined"));
                        }
                        let (lo, expr) = value.split_once('|').ok_or_else(|| {
                            err(line, "branch: expected 'left_endpoint | expression'")
                        })?;
                        if branches.is_empty() {
                            branches_line = line;
                        }
                        branches.push((parse_f64(line, "branch", lo)?, expr.trim().to_string()));
                    }
                    other => return Err(err(line, format!("unknown [map] key '{other}'"))),
                },
                Section::Kernel => match key {
                    "name" => {
                        cfg.kernel = Some(
                            NoiseKernel::by_name(value)
                                .map_err(|e| err(line, e.to_string()))?,
                        );
                    }
                    other => return Err(err(line, format!("unknown [kernel] key '{other}'"))),
                },
                Section::Sweep => match key {
                    "backend" => match value {
                        "ulam" | "fourier" => backend_kind = Some((value.to_string(), line)),
                        other => {
                            return Err(err(
                                line,
                                format!("backend must be 'ulam' or 'fourier', got '{other}'"),
                            ))
                        }
                    },
                    "resolution" => {
                        resolution = Some(parse_u64(line, key, value)? as usize);
                    }
                    "deltas" => cfg.deltas = parse_list(line, key, value)?,
                    other => return Err(err(line, format!("unknown [sweep] key '{other}'"))),
                },
                Section::Solver => match key {
                    "tolerance" => cfg.solver_tol = Some(parse_f64(line, key, value)?),
                    "max_iterations" => {
                        cfg.max_iterations = Some(parse_u64(line, key, value)? as usize)
                    }
                    other => return Err(err(line, format!("unknown [solver] key '{other}'"))),
                },
                Section::MonteCarlo => {
                    if sim.first_line == 0 {
                        sim.first_line = line;
                    }
                    match key {
                        "steps" => sim.steps = Some(parse_u64(line, key, value)?),
                        "burn_in" => sim.burn_in = Some(parse_u64(line, key, value)?),
                        "chains" => sim.chains = Some(parse_u64(line, key, value)?),
                        "bins" => sim.bins = Some(parse_u64(line, key, value)?),
                        "seed" => sim.seed = Some(parse_u64(line, key, value)?),
                        "delta" => sim.delta = Some(parse_f64(line, key, value)?),
                        other => {
                            return Err(err(line, format!("unknown [montecarlo] key '{other}'")))
                        }
                    }
                }
                Section::Abstract => match key {
                    "family" => {
                        abstract_family = Some((
                            if value == "builtin" { None } else { Some(PathBuf::from(value)) },
                            line,
                        ));
                    }
                    "delta_max" => abstract_delta_max = Some(parse_f64(line, key, value)?),
                    "deltas" => abstract_deltas = parse_list(line, key, value)?,
                    other => return Err(err(line, format!("unknown [abstract] key '{other}'"))),
                },
                Section::Output => match key {
                    "dir" => cfg.out_dir = Some(PathBuf::from(value)),
                    other => return Err(err(line, format!("unknown [output] key '{other}'"))),
                },
            }
        }

        if !branches.is_empty() {
            let pieces: Vec<(f64, &str)> =
                branches.iter().map(|(lo, s)| (*lo, s.as_str())).collect();
            cfg.map = Some(CircleMap::Piecewise(
                PiecewiseMap::new("custom", &pieces)
                    .map_err(|e| err(branches_line, e.to_string()))?,
            ));
        }
        if let Some((kind, line)) = backend_kind {
            let n = resolution
                .ok_or_else(|| err(line, "backend needs a 'resolution' key in [sweep]"))?;
            cfg.backend = Some(match kind.as_str() {
                "ulam" => Backend::Ulam(n),
                _ => Backend::Fourier(n),
            });
        }
        if sim.first_line != 0 {
            let line = sim.first_line;
            let steps = sim
                .steps
                .ok_or_else(|| err(line, "[montecarlo] needs a 'steps' key"))?;
            let delta = sim
                .delta
                .ok_or_else(|| err(line, "[montecarlo] needs a 'delta' key"))?;
            cfg.sim = Some(SimulationConfig {
                n_steps: steps,
                burn_in: sim.burn_in.unwrap_or(1000),
                n_chains: sim.chains.unwrap_or(4),
                seed: sim.seed.unwrap_or(0),
                bins: sim.bins.unwrap_or(64) as usize,
            });
            cfg.sim_delta = Some(delta);
        }
        if let Some((family_csv, line)) = abstract_family {
            if abstract_deltas.is_empty() {
                return Err(err(line, "[abstract] needs a 'deltas' key"));
            }
            cfg.abstract_spec = Some(AbstractSpec {
                family_csv,
                delta_max: abstract_delta_max.unwrap_or(0.25),
                deltas: abstract_deltas,
            });
        }
        Ok(cfg)
    }
}
