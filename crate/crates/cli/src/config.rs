//! Flat `key = value` run configurations.
//!
//! One assignment per line, `#` starts a comment, lists are comma-separated.
//! Unknown and repeated keys are errors; every diagnostic names its line.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use densetn::dmrg::ScheduleEntry;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Missing(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelTag {
    Heisenberg,
    Tfim,
    Hubbard,
    Heisenberg2d,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitialState {
    /// Every site in basis state 0.
    Ferro,
    /// Basis states alternating 0, 1 (spins) or up, down (electrons).
    Staggered,
    /// Random MPS of bond dimension `init_m`.
    SeededRandom,
    /// `(operator, site)` pairs applied in order to the all-zero state.
    OperatorList(Vec<(String, usize)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelTag,
    pub n: usize,
    pub lx: usize,
    pub ly: usize,
    pub j: f64,
    pub g: f64,
    pub t: f64,
    pub u: f64,
    pub mu: f64,
    /// `(site, operator, coefficient)` local fields added to the Hamiltonian.
    pub pins: Vec<(usize, String, f64)>,
    pub init: InitialState,
    pub seed: Option<u64>,
    pub init_m: usize,
    pub sweeps: usize,
    pub m: usize,
    pub cutoff: f64,
    pub lanczos_iters: usize,
    pub cvg_e: bool,
    pub tol: f64,
    pub goal: Option<f64>,
    /// Defaults to the central bond.
    pub svn_bond: Option<usize>,
    pub schedule: Vec<ScheduleEntry>,
    pub entropy: bool,
    pub local: Vec<String>,
    pub corr: Vec<(String, String)>,
    pub tm_window: Option<(usize, usize)>,
    pub out: PathBuf,
    pub disk: bool,
    pub verify: bool,
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Defaults for everything but the model and its size.
    pub fn new(model: ModelTag, n: usize) -> Self {
        Self {
            model,
            n,
            lx: n,
            ly: 1,
            j: 1.0,
            g: 1.0,
            t: 1.0,
            u: 0.0,
            mu: 0.0,
            pins: Vec::new(),
            init: InitialState::Staggered,
            seed: None,
            init_m: 8,
            sweeps: 10,
            m: 100,
            cutoff: 1e-9,
            lanczos_iters: 2,
            cvg_e: true,
            tol: 1e-8,
            goal: None,
            svn_bond: None,
            schedule: Vec::new(),
            entropy: true,
            local: Vec::new(),
            corr: Vec::new(),
            tm_window: None,
            out: PathBuf::from("out"),
            disk: false,
            verify: false,
            threads: None,
        }
    }

    pub fn sites(&self) -> usize {
        match self.model {
            ModelTag::Heisenberg2d => self.lx * self.ly,
            _ => self.n,
        }
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    parse_str(&text)
}

const KEYS: &[&str] = &[
    "model", "N", "Lx", "Ly", "J", "g", "t", "U", "mu", "pins", "init", "seed", "init_m", "init_ops", "sweeps", "m",
    "cutoff", "lanczos_iters", "cvgE", "tol", "goal", "SvNbond", "schedule", "entropy", "local", "corr", "tm_window",
    "out", "disk", "verify", "threads",
];

pub fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: HashMap<&str, (usize, &str)> = HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(ConfigError::Line { line, msg: format!("expected `key = value`, found {body:?}") });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::Line { line, msg: format!("unknown key {key:?}") });
        }
        if let Some((first, _)) = entries.insert(key, (line, value)) {
            return Err(ConfigError::Line { line, msg: format!("duplicate key {key:?} (first set on line {first})") });
        }
    }
    let get = |key: &str| entries.get(key).copied();

    let (mline, model) = get("model").ok_or_else(|| ConfigError::Missing("missing required key `model`".into()))?;
    let model = match model {
        "heisenberg" => ModelTag::Heisenberg,
        "tfim" => ModelTag::Tfim,
        "hubbard" => ModelTag::Hubbard,
        "heisenberg2d" => ModelTag::Heisenberg2d,
        other => return Err(ConfigError::Line { line: mline, msg: format!("unknown model {other:?}") }),
    };
    let mut cfg = if model == ModelTag::Heisenberg2d {
        let lx = required(&entries, "Lx", "heisenberg2d needs `Lx`")?;
        let ly = required(&entries, "Ly", "heisenberg2d needs `Ly`")?;
        if let Some((line, _)) = get("N") {
            return Err(ConfigError::Line { line, msg: "heisenberg2d takes `Lx` and `Ly`, not `N`".into() });
        }
        RunConfig { lx, ly, ..RunConfig::new(model, lx * ly) }
    } else {
        for key in ["Lx", "Ly"] {
            if let Some((line, _)) = get(key) {
                return Err(ConfigError::Line { line, msg: format!("`{key}` only applies to heisenberg2d") });
            }
        }
        let n = required(&entries, "N", "missing required key `N`")?;
        RunConfig::new(model, n)
    };

    set(&entries, "J", &mut cfg.j)?;
    set(&entries, "g", &mut cfg.g)?;
    set(&entries, "t", &mut cfg.t)?;
    set(&entries, "U", &mut cfg.u)?;
    set(&entries, "mu", &mut cfg.mu)?;
    set(&entries, "init_m", &mut cfg.init_m)?;
    set(&entries, "sweeps", &mut cfg.sweeps)?;
    set(&entries, "m", &mut cfg.m)?;
    set(&entries, "cutoff", &mut cfg.cutoff)?;
    set(&entries, "lanczos_iters", &mut cfg.lanczos_iters)?;
    set(&entries, "cvgE", &mut cfg.cvg_e)?;
    set(&entries, "tol", &mut cfg.tol)?;
    set(&entries, "entropy", &mut cfg.entropy)?;
    set(&entries, "disk", &mut cfg.disk)?;
    set(&entries, "verify", &mut cfg.verify)?;
    cfg.seed = optional(&entries, "seed")?;
    cfg.goal = optional(&entries, "goal")?;
    cfg.svn_bond = optional(&entries, "SvNbond")?;
    cfg.threads = optional(&entries, "threads")?;
    if let Some((_, v)) = get("out") {
        cfg.out = PathBuf::from(v);
    }

    if let Some((line, v)) = get("pins") {
        cfg.pins = list(v)
            .map(|item| {
                let parts: Vec<&str> = item.split(':').map(str::trim).collect();
                match parts.as_slice() {
                    [site, op, coef] => Ok((value(line, "pins", site)?, op.to_string(), value(line, "pins", coef)?)),
                    _ => Err(ConfigError::Line { line, msg: format!("pin {item:?} is not `site:op:coef`") }),
                }
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some((line, v)) = get("schedule") {
        cfg.schedule = list(v)
            .map(|item| match item.split_once(':') {
                Some((m, c)) => Ok(ScheduleEntry { m: value(line, "schedule", m.trim())?, cutoff: value(line, "schedule", c.trim())? }),
                None => Err(ConfigError::Line { line, msg: format!("schedule entry {item:?} is not `m:cutoff`") }),
            })
            .collect::<Result<_, _>>()?;
        if cfg.schedule.len() > cfg.sweeps {
            return Err(ConfigError::Line {
                line,
                msg: format!("{} schedule entries for {} sweeps", cfg.schedule.len(), cfg.sweeps),
            });
        }
    }
    if let Some((_, v)) = get("local") {
        cfg.local = list(v).map(str::to_string).collect();
    }
    if let Some((line, v)) = get("corr") {
        cfg.corr = list(v)
            .map(|item| match item.split_once(':') {
                Some((a, b)) => Ok((a.trim().to_string(), b.trim().to_string())),
                None => Err(ConfigError::Line { line, msg: format!("correlation pair {item:?} is not `A:B`") }),
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some((line, v)) = get("tm_window") {
        cfg.tm_window = match v.split_once(':') {
            Some((i, j)) => Some((value(line, "tm_window", i.trim())?, value(line, "tm_window", j.trim())?)),
            None => return Err(ConfigError::Line { line, msg: format!("tm_window {v:?} is not `first:last`") }),
        };
    }

    let init_ops = get("init_ops");
    if let Some((line, v)) = get("init") {
        cfg.init = match v {
            "ferro" => InitialState::Ferro,
            "staggered" => InitialState::Staggered,
            "seeded-random" => InitialState::SeededRandom,
            "operator-list" => {
                let (oline, ops) = init_ops
                    .ok_or_else(|| ConfigError::Line { line, msg: "operator-list needs `init_ops`".into() })?;
                InitialState::OperatorList(
                    list(ops)
                        .map(|item| match item.split_once('@') {
                            Some((op, site)) => Ok((op.trim().to_string(), value(oline, "init_ops", site.trim())?)),
                            None => Err(ConfigError::Line { line: oline, msg: format!("init_ops entry {item:?} is not `op@site`") }),
                        })
                        .collect::<Result<_, _>>()?,
                )
            }
            other => return Err(ConfigError::Line { line, msg: format!("unknown initial state {other:?}") }),
        };
        if cfg.init == InitialState::SeededRandom && cfg.seed.is_none() {
            return Err(ConfigError::Line { line, msg: "seeded-random requires `seed`".into() });
        }
    }
    if let Some((line, _)) = init_ops {
        if !matches!(cfg.init, InitialState::OperatorList(_)) {
            return Err(ConfigError::Line { line, msg: "`init_ops` requires `init = operator-list`".into() });
        }
    }
    Ok(cfg)
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
}

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok().filter(|x: &f64| x.is_finite())
    }
}

impl ConfigValue for usize {
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ConfigValue for u64 {
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ConfigValue for bool {
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        }
    }
}

fn value<T: ConfigValue>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError> {
    T::parse_value(raw).ok_or_else(|| ConfigError::Line {
        line,
        msg: format!("invalid value {raw:?} for `{key}` (expected {})", std::any::type_name::<T>()),
    })
}

fn optional<T: ConfigValue>(entries: &HashMap<&str, (usize, &str)>, key: &str) -> Result<Option<T>, ConfigError> {
    entries.get(key).map(|&(line, raw)| value(line, key, raw)).transpose()
}

fn set<T: ConfigValue>(entries: &HashMap<&str, (usize, &str)>, key: &str, slot: &mut T) -> Result<(), ConfigError> {
    if let Some(v) = optional(entries, key)? {
        *slot = v;
    }
    Ok(())
}

fn required<T: ConfigValue>(entries: &HashMap<&str, (usize, &str)>, key: &str, msg: &str) -> Result<T, ConfigError> {
    optional(entries, key)?.ok_or_else(|| ConfigError::Missing(msg.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse_str("model = heisenberg\nN = 12\n").unwrap();
        assert_eq!(c.model, ModelTag::Heisenberg);
        assert_eq!((c.sweeps, c.m, c.cutoff, c.lanczos_iters, c.cvg_e, c.tol), (10, 100, 1e-9, 2, true, 1e-8));
        assert_eq!(c.init, InitialState::Staggered);
        assert!(c.entropy && !c.verify && !c.disk);
    }

    #[test]
    fn duplicate_keys_name_the_line() {
        let e = parse_str("model = tfim\nN = 4\n# c\nN = 6\n").unwrap_err();
        assert!(matches!(e, ConfigError::Line { line: 4, .. }), "{e}");
        assert!(e.to_string().contains("line 2"));
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        assert!(matches!(parse_str("model = tfim\nN = 4\nbogus = 1\n"), Err(ConfigError::Line { line: 3, .. })));
        assert!(matches!(parse_str("model = tfim\nN = four\n"), Err(ConfigError::Line { line: 2, .. })));
        assert!(matches!(parse_str("model = tfim\nN = 4\ncvgE = yes\n"), Err(ConfigError::Line { line: 3, .. })));
        assert!(matches!(parse_str("model = tfim\nN 4\n"), Err(ConfigError::Line { line: 2, .. })));
        assert!(matches!(parse_str("N = 4\n"), Err(ConfigError::Missing(_))));
        assert!(matches!(parse_str("model = tfim\n"), Err(ConfigError::Missing(_))));
    }

    #[test]
    fn seeded_random_requires_a_seed() {
        assert!(parse_str("model = tfim\nN = 4\ninit = seeded-random\n").is_err());
        let c = parse_str("model = tfim\nN = 4\ninit = seeded-random\nseed = 7\n").unwrap();
        assert_eq!((c.init, c.seed), (InitialState::SeededRandom, Some(7)));
    }

    #[test]
    fn lists_and_pairs() {
        let c = parse_str(
            "model = hubbard\nN = 4\nU = 4\nmu = -2\ncorr = Cdagup:Cup, N:N\nlocal = N, Nup\nschedule = 16:1e-6, 32:1e-8\n\
             pins = 0:N:0.5\ninit = operator-list\ninit_ops = Cdagup@0, Cdagdn@1\ntm_window = 1:2\n",
        )
        .unwrap();
        assert_eq!(c.corr, vec![("Cdagup".into(), "Cup".into()), ("N".into(), "N".into())]);
        assert_eq!(c.local, vec!["N", "Nup"]);
        assert_eq!(c.schedule.len(), 2);
        assert_eq!(c.schedule[1].m, 32);
        assert_eq!(c.pins, vec![(0, "N".into(), 0.5)]);
        assert_eq!(c.init, InitialState::OperatorList(vec![("Cdagup".into(), 0), ("Cdagdn".into(), 1)]));
        assert_eq!(c.tm_window, Some((1, 2)));
    }

    #[test]
    fn lattice_models_take_lx_ly() {
        let c = parse_str("model = heisenberg2d\nLx = 3\nLy = 2\n").unwrap();
        assert_eq!(c.sites(), 6);
        assert!(parse_str("model = heisenberg2d\nLx = 3\nLy = 2\nN = 6\n").is_err());
        assert!(parse_str("model = heisenberg\nN = 6\nLx = 3\n").is_err());
    }

    #[test]
    fn schedule_longer_than_sweeps_is_rejected() {
        assert!(parse_str("model = tfim\nN = 4\nsweeps = 1\nschedule = 4:0, 8:0\n").is_err());
    }
}
