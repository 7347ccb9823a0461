//! Config → model + initial state → DMRG → output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use densetn::dmrg::{dmrg, DmrgParams, DmrgReport};
use densetn::ed::{full_h_guarded, full_psi_guarded, krylov_ground, DEFAULT_GUARD};
use densetn::measure::{correlation_length, correlation_matrix, entanglement_profile, expect_local, transfer_matrix};
use densetn::models::{ModelSpec, OperatorSet};
use densetn::tensor::{inner, set_threads};
use densetn::{DenseTensor, Error, Mpo, Mps, Scalar, TruncationSpec};
use thiserror::Error;

use crate::config::{parse_config, ConfigError, InitialState, ModelTag, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("model error: {0}")]
    Model(String),
    #[error("resource error: {0}")]
    Resource(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Model(_) => 3,
            RunError::Resource(_) => 4,
            RunError::Numerical(_) => 5,
        }
    }

    /// Guard and storage failures are resource errors wherever they happen;
    /// everything else is attributed to the stage that produced it.
    fn from_lib(stage: fn(String) -> RunError, e: Error) -> Self {
        match e {
            Error::Resource(_) | Error::Storage { .. } => RunError::Resource(e.to_string()),
            e => stage(e.to_string()),
        }
    }
}

fn model_err(e: Error) -> RunError {
    RunError::from_lib(RunError::Model, e)
}

fn numeric_err(e: Error) -> RunError {
    RunError::from_lib(RunError::Numerical, e)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |e| RunError::Resource(format!("{}: {e}", path.display()))
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub verify: bool,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub report: DmrgReport,
    pub out: PathBuf,
    pub verify_delta: Option<f64>,
}

pub fn run_path(config: &Path, overrides: &Overrides) -> Result<RunSummary, RunError> {
    let mut cfg = parse_config(config)?;
    if let Some(out) = &overrides.out {
        cfg.out = out.clone();
    }
    if overrides.threads.is_some() {
        cfg.threads = overrides.threads;
    }
    cfg.verify |= overrides.verify;
    run(&cfg)
}

fn is_fermionic(name: &str) -> bool {
    matches!(name, "Cup" | "Cdn" | "Cdagup" | "Cdagdn")
}

fn lookup<'a>(ops: &'a OperatorSet, name: &str) -> Result<&'a DenseTensor, RunError> {
    ops.get(name).ok_or_else(|| {
        let known: Vec<&str> = ops.names().collect();
        RunError::Model(format!("operator {name:?} is not defined for this model (known: {})", known.join(", ")))
    })
}

/// Model, Hamiltonian and operator set described by `cfg`.
pub fn build_model(cfg: &RunConfig) -> Result<(ModelSpec, Mpo), RunError> {
    let n = cfg.sites();
    let spec = match cfg.model {
        ModelTag::Heisenberg => ModelSpec::heisenberg(cfg.j, n),
        ModelTag::Tfim => ModelSpec::tfim(cfg.g, n),
        ModelTag::Hubbard => ModelSpec::hubbard(cfg.t, cfg.u, cfg.mu, n),
        ModelTag::Heisenberg2d => ModelSpec::heisenberg2d(cfg.j, cfg.lx, cfg.ly),
    };
    let ops = spec.ops();
    let pins = cfg
        .pins
        .iter()
        .map(|(site, op, coef)| Ok((*site, lookup(&ops, op)?.clone(), Scalar::Real(*coef))))
        .collect::<Result<Vec<_>, RunError>>()?;
    let spec = spec.add_pinning(&pins).map_err(model_err)?;
    let mpo = spec.mpo().map_err(model_err)?;
    Ok((spec, mpo))
}

pub fn initial_state(cfg: &RunConfig, ops: &OperatorSet) -> Result<Mps, RunError> {
    let (d, n) = (ops.phys_dim(), cfg.sites());
    let psi = match &cfg.init {
        InitialState::Ferro => Mps::basis_state(d, &vec![0; n], 0),
        InitialState::Staggered if cfg.model == ModelTag::Hubbard => {
            Mps::basis_state(d, &(0..n).map(|i| 1 + i % 2).collect::<Vec<_>>(), 0)
        }
        InitialState::Staggered => Mps::staggered(d, n, 0),
        InitialState::SeededRandom => {
            let seed = cfg.seed.ok_or_else(|| RunError::Model("seeded-random requires a seed".into()))?;
            Mps::random(d, n, cfg.init_m, 0, seed)
        }
        InitialState::OperatorList(list) => {
            let mut psi = Mps::basis_state(d, &vec![0; n], 0).map_err(model_err)?;
            for (name, site) in list {
                let op = lookup(ops, name)?;
                let trail = if is_fermionic(name) { ops.get("F") } else { None };
                psi.apply_local_ops(&[*site], op, trail).map_err(model_err)?;
            }
            Ok(psi)
        }
    };
    psi.map_err(model_err)
}

pub fn dmrg_params(cfg: &RunConfig) -> DmrgParams {
    let n = cfg.sites();
    DmrgParams {
        sweeps: cfg.sweeps,
        spec: TruncationSpec::new(cfg.m, cfg.cutoff),
        lanczos_iters: cfg.lanczos_iters,
        cvg_e: cfg.cvg_e,
        goal: cfg.goal,
        tol: cfg.tol,
        svn_bond: cfg.svn_bond.unwrap_or((n / 2).saturating_sub(1)),
        schedule: cfg.schedule.clone(),
        env_dir: None,
    }
}

/// Seventeen significant digits: enough to read back the same double.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(io_err(&path))
}

pub fn run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let start = Instant::now();
    if let Some(k) = cfg.threads {
        set_threads(k);
    }
    let (spec, mpo) = build_model(cfg)?;
    let ops = spec.ops();
    let n = cfg.sites();
    let d = ops.phys_dim();

    // everything the measurements need is checked before any sweep runs
    let locals = cfg.local.iter().map(|name| lookup(&ops, name)).collect::<Result<Vec<_>, _>>()?;
    let pairs = cfg
        .corr
        .iter()
        .map(|(a, b)| Ok((lookup(&ops, a)?, lookup(&ops, b)?)))
        .collect::<Result<Vec<_>, RunError>>()?;
    if let Some((i, j)) = cfg.tm_window {
        if i > j || j >= n {
            return Err(RunError::Model(format!("transfer-matrix window {i}:{j} does not fit {n} sites")));
        }
    }
    if cfg.verify && (d as f64).powi(n as i32) > DEFAULT_GUARD as f64 {
        return Err(RunError::Resource(format!(
            "verification needs the full {d}^{n} state space, above the {DEFAULT_GUARD} guard"
        )));
    }
    let mut params = dmrg_params(cfg);
    params.validate(n).map_err(model_err)?;

    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let mut psi = initial_state(cfg, &ops)?;
    if cfg.disk {
        psi = psi.to_disk(&cfg.out.join("psi")).map_err(numeric_err)?;
        params.env_dir = Some(cfg.out.join("env"));
    }

    let report = dmrg(&mut psi, &mpo, &params).map_err(numeric_err)?;

    let mut energy = String::from("# sweep energy max_truncerr svn\n");
    for (s, ((e, t), v)) in report.energies.iter().zip(&report.max_truncerr).zip(&report.svn).enumerate() {
        let _ = writeln!(energy, "{s}\t{}\t{}\t{}", num(*e), num(*t), num(*v));
    }
    write_file(&cfg.out, "energy.tsv", &energy)?;

    if cfg.entropy {
        let profile = entanglement_profile(&psi).map_err(numeric_err)?;
        let mut body = String::from("# bond svn\n");
        for (b, s) in profile.svn.iter().enumerate() {
            let _ = writeln!(body, "{b}\t{}", num(*s));
        }
        write_file(&cfg.out, "svn.tsv", &body)?;
    }

    for (name, op) in cfg.local.iter().zip(&locals) {
        let values = expect_local(&psi, op).map_err(numeric_err)?;
        let mut body = String::from("# site re im\n");
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(body, "{i}\t{}\t{}", num(v.re()), num(v.im()));
        }
        write_file(&cfg.out, &format!("local_{name}.tsv"), &body)?;
    }

    for ((a, b), (oa, ob)) in cfg.corr.iter().zip(&pairs) {
        let trail = if is_fermionic(a) && is_fermionic(b) { ops.get("F") } else { None };
        let m = correlation_matrix(&psi, oa, ob, trail).map_err(numeric_err)?;
        let mut body = String::from("# i j re im\n");
        for i in 0..n {
            for j in 0..n {
                let v = m.get(&[i, j]);
                let _ = writeln!(body, "{i}\t{j}\t{}\t{}", num(v.re()), num(v.im()));
            }
        }
        write_file(&cfg.out, &format!("corr_{a}_{b}.tsv"), &body)?;
    }

    let mut xi = None;
    if let Some((i, j)) = cfg.tm_window {
        let tm = transfer_matrix(&psi, i, j, None).map_err(numeric_err)?;
        let cl = correlation_length(&tm).map_err(numeric_err)?;
        let mut body = String::from("# k re im abs\n");
        for (k, z) in cl.spectrum.iter().enumerate() {
            let _ = writeln!(body, "{k}\t{}\t{}\t{}", num(z.re), num(z.im), num(z.norm()));
        }
        write_file(&cfg.out, "transfer.tsv", &body)?;
        xi = Some(cl.xi);
    }

    let verify_delta = if cfg.verify { Some(verify(cfg, &mpo, &psi, report.energy())?) } else { None };

    let bonds: Vec<String> = report.bond_dims.iter().map(usize::to_string).collect();
    let mut body = String::from("# key value\n");
    let _ = writeln!(body, "energy\t{}", num(report.energy()));
    let _ = writeln!(body, "sweeps\t{}", report.sweeps_run);
    let _ = writeln!(body, "converged\t{}", report.converged);
    let _ = writeln!(body, "bond_dims\t{}", bonds.join(","));
    let _ = writeln!(body, "max_bond_dim\t{}", report.bond_dims.iter().max().copied().unwrap_or(1));
    if let Some(x) = xi {
        let _ = writeln!(body, "correlation_length\t{}", num(x));
    }
    if let Some(dv) = verify_delta {
        let _ = writeln!(body, "ed_energy_delta\t{}", num(dv));
    }
    let _ = writeln!(body, "wall_time_s\t{}", num(start.elapsed().as_secs_f64()));
    write_file(&cfg.out, "report.txt", &body)?;

    Ok(RunSummary { report, out: cfg.out.clone(), verify_delta })
}

/// Compares against a Krylov ground state of the dense Hamiltonian and
/// writes `verify.txt`; returns the absolute energy difference.
fn verify(cfg: &RunConfig, mpo: &Mpo, psi: &Mps, energy: f64) -> Result<f64, RunError> {
    let h = full_h_guarded(mpo, DEFAULT_GUARD).map_err(numeric_err)?;
    let dim = h.dim(0);
    // deterministic start with no lattice symmetry
    let golden = 0.618_033_988_749_894_9;
    let v0 = DenseTensor::from_real(vec![dim], (0..dim).map(|k| (k as f64 * golden).fract() - 0.4).collect())
        .map_err(numeric_err)?;
    let (ground, exact) = krylov_ground(&h, &v0, 4000).map_err(numeric_err)?;
    let v = full_psi_guarded(psi, DEFAULT_GUARD).map_err(numeric_err)?;
    let fidelity = inner(&ground, &v).map_err(numeric_err)?.abs() / (ground.norm() * v.norm());

    let delta = (energy - exact).abs();
    let mut body = String::from("# quantity dmrg ed delta\n");
    let _ = writeln!(body, "energy\t{}\t{}\t{}", num(energy), num(exact), num(delta));
    let _ = writeln!(body, "overlap\t{}\t{}\t{}", num(fidelity), num(1.0), num((1.0 - fidelity).abs()));
    write_file(&cfg.out, "verify.txt", &body)?;
    Ok(delta)
}
