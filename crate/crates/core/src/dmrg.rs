//! Two-site DMRG.
//!
//! A sweep moves the orthogonality center from site 0 to `N - 1` and back.
//! Each step contracts the two active sites, improves them with a few
//! Lanczos iterations against the effective Hamiltonian, splits them with a
//! truncated SVD and advances the environment on the side just left behind.

use std::path::PathBuf;

use faer::{Mat, Side};

use crate::decomp::{svd, TruncationSpec};
use crate::error::{Error, Result};
use crate::network::{Environment, Mpo, Mps};
use crate::tensor::{contract, inner, DenseTensor};

/// Residual norm below which the Krylov space is treated as invariant.
pub const BETA_FLOOR: f64 = 1e-13;

/// Output of [`lanczos`].
#[derive(Clone, Debug)]
pub struct LanczosRun {
    /// Lowest Ritz value.
    pub energy: f64,
    /// Corresponding normalized Ritz vector.
    pub vector: DenseTensor,
    pub alphas: Vec<f64>,
    /// Off-diagonal of the tridiagonal matrix; `betas[k]` couples vectors `k` and `k + 1`.
    pub betas: Vec<f64>,
    /// Largest imaginary part seen in `<v|H|v>`; zero up to rounding for Hermitian `H`.
    pub max_alpha_imag: f64,
    /// The orthonormal Krylov vectors that were built.
    pub basis: Vec<DenseTensor>,
}

impl LanczosRun {
    pub fn vectors_used(&self) -> usize {
        self.basis.len()
    }
}

/// Lanczos with full reorthogonalization, at most `iters` applications of `apply`.
///
/// Stops early when the residual norm falls below [`BETA_FLOOR`].
pub fn lanczos(
    v0: &DenseTensor,
    mut apply: impl FnMut(&DenseTensor) -> Result<DenseTensor>,
    iters: usize,
) -> Result<LanczosRun> {
    let n0 = v0.norm();
    if !(n0 > 0.0) || !n0.is_finite() {
        return Err(Error::DegenerateInput("Lanczos start vector has zero norm".into()));
    }
    if iters == 0 {
        return Err(Error::InvalidParameter("Lanczos needs at least one iteration".into()));
    }
    let mut basis = vec![v0.scale(1.0 / n0)];
    let mut alphas = Vec::with_capacity(iters);
    let mut betas = Vec::with_capacity(iters);
    let mut max_alpha_imag = 0.0f64;
    for k in 0..iters {
        let mut w = apply(&basis[k])?;
        let a = inner(&basis[k], &w)?;
        max_alpha_imag = max_alpha_imag.max(a.im().abs());
        alphas.push(a.re());
        // two passes of Gram–Schmidt against everything stored
        for _ in 0..2 {
            for v in &basis {
                let c = inner(v, &w)?;
                w.axpy(-c.to_c64(), v)?;
            }
        }
        if k + 1 == iters {
            break;
        }
        let b = w.norm();
        if b < BETA_FLOOR {
            break;
        }
        betas.push(b);
        basis.push(w.scale(1.0 / b));
    }
    let (energy, coeffs) = tridiagonal_ground(&alphas, &betas)?;
    let mut vector = basis[0].scale(coeffs[0]);
    for (v, &c) in basis.iter().zip(&coeffs).skip(1) {
        vector.axpy(c, v)?;
    }
    let nv = vector.norm();
    vector.scale_mut(1.0 / nv);
    Ok(LanczosRun { energy, vector, alphas, betas, max_alpha_imag, basis })
}

/// Lowest eigenpair of the symmetric tridiagonal matrix with diagonal `alphas`.
fn tridiagonal_ground(alphas: &[f64], betas: &[f64]) -> Result<(f64, Vec<f64>)> {
    let k = alphas.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if i == j + 1 {
            betas[j]
        } else if j == i + 1 {
            betas[i]
        } else {
            0.0
        }
    });
    let e = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("tridiagonal eigensolver failed: {e:?}")))?;
    let energy = e.S().column_vector()[0];
    let coeffs = (0..k).map(|i| e.U()[(i, 0)]).collect();
    Ok((energy, coeffs))
}

/// Effective two-site problem on sites `(i, i + 1)`.
///
/// `left` is `(bra, w, ket)`, `right` is `(ket, w, bra)`, the MPO tensors are
/// `(w, out, in, w)` and `psi` is `(l, s_i, s_{i+1}, r)`.
#[derive(Clone, Debug)]
pub struct TwoSiteProblem {
    pub left: DenseTensor,
    pub w1: DenseTensor,
    pub w2: DenseTensor,
    pub right: DenseTensor,
    pub psi: DenseTensor,
}

impl TwoSiteProblem {
    pub fn new(left: DenseTensor, w1: DenseTensor, w2: DenseTensor, right: DenseTensor, psi: DenseTensor) -> Result<Self> {
        let ok = left.rank() == 3
            && right.rank() == 3
            && w1.rank() == 4
            && w2.rank() == 4
            && psi.rank() == 4
            && left.dim(1) == w1.dim(0)
            && w1.dim(3) == w2.dim(0)
            && w2.dim(3) == right.dim(1)
            && left.dim(2) == psi.dim(0)
            && right.dim(0) == psi.dim(3)
            && left.dim(0) == psi.dim(0)
            && right.dim(2) == psi.dim(3)
            && w1.dim(2) == psi.dim(1)
            && w2.dim(2) == psi.dim(2)
            && w1.dim(1) == w1.dim(2)
            && w2.dim(1) == w2.dim(2);
        if !ok {
            return Err(Error::Shape(format!(
                "inconsistent two-site problem: left {:?}, w1 {:?}, w2 {:?}, right {:?}, psi {:?}",
                left.dims(),
                w1.dims(),
                w2.dims(),
                right.dims(),
                psi.dims()
            )));
        }
        Ok(Self { left, w1, w2, right, psi })
    }

    pub fn apply(&self, v: &DenseTensor) -> Result<DenseTensor> {
        heff_apply(self, v)
    }
}

/// `H_eff · v` without forming `H_eff`: left environment first, then the two
/// MPO tensors, then the right environment.
pub fn heff_apply(p: &TwoSiteProblem, v: &DenseTensor) -> Result<DenseTensor> {
    if v.dims() != p.psi.dims() {
        return Err(Error::Shape(format!("vector dims {:?}, problem dims {:?}", v.dims(), p.psi.dims())));
    }
    // (bra, w, s1, s2, r)
    let t = contract(&p.left, &[2], v, &[0])?;
    // (bra, s2, r, o1, w')
    let t = contract(&t, &[1, 2], &p.w1, &[0, 2])?;
    // (bra, r, o1, o2, w'')
    let t = contract(&t, &[4, 1], &p.w2, &[0, 2])?;
    // (bra, o1, o2, bra')
    contract(&t, &[1, 4], &p.right, &[0, 1])
}

/// Lowest Ritz pair of a two-site problem, starting from `p.psi`.
pub fn lanczos_ground(p: &TwoSiteProblem, iters: usize) -> Result<(f64, DenseTensor, usize)> {
    let run = lanczos(&p.psi, |v| heff_apply(p, v), iters)?;
    let used = run.vectors_used();
    Ok((run.energy, run.vector, used))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Right,
    Left,
}

/// Outcome of one two-site update.
#[derive(Clone, Copy, Debug)]
pub struct StepResult {
    pub energy: f64,
    pub truncerr: f64,
    /// Bond that was split: bond `b` joins sites `b` and `b + 1`.
    pub bond: usize,
    /// Entanglement entropy across that bond after truncation.
    pub svn: f64,
    pub link_dim: usize,
}

/// `-Σ ρ ln ρ` over normalized squared singular values.
pub fn von_neumann(sigma: &[f64]) -> f64 {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total <= 0.0 {
        return 0.0;
    }
    sigma
        .iter()
        .map(|s| s * s / total)
        .filter(|&r| r > 0.0)
        .map(|r| -r * r.ln())
        .sum()
}

/// One two-site update at the orthogonality center `site`.
///
/// Moving right, the block is `(site, site + 1)`; moving left it is
/// `(site - 1, site)`. The singular values are absorbed in the direction of
/// travel and the center advances by one site. `lanczos_iters = 0` skips the
/// eigensolver and only regauges (the energy is then the Rayleigh quotient).
#[allow(clippy::too_many_arguments)]
pub fn dmrg_sweep_step(
    psi: &mut Mps,
    mpo: &Mpo,
    env: &mut Environment,
    site: usize,
    direction: Direction,
    spec: &TruncationSpec,
    lanczos_iters: usize,
) -> Result<StepResult> {
    let n = psi.len();
    if psi.oc() != site {
        return Err(Error::InternalState(format!("step at site {site} but the center is at {}", psi.oc())));
    }
    let i = match direction {
        Direction::Right if site + 1 < n => site,
        Direction::Left if site >= 1 => site - 1,
        _ => return Err(Error::OutOfRange { index: site, len: n }),
    };
    let a = psi.tensor(i)?;
    let b = psi.tensor(i + 1)?;
    let psi2 = contract(&a, &[2], &b, &[0])?;
    drop((a, b));
    let p = TwoSiteProblem::new(
        env.left(i).map_err(env_err)?.into_owned(),
        mpo.tensor(i)?.into_owned(),
        mpo.tensor(i + 1)?.into_owned(),
        env.right(i + 1).map_err(env_err)?.into_owned(),
        psi2,
    )
    .map_err(|e| Error::InternalState(format!("environments do not match the state: {e}")))?;

    let (energy, v) = if lanczos_iters == 0 {
        let hv = heff_apply(&p, &p.psi)?;
        (inner(&p.psi, &hv)?.re() / inner(&p.psi, &p.psi)?.re(), p.psi.clone())
    } else {
        let (e, v, _) = lanczos_ground(&p, lanczos_iters)?;
        (e, v)
    };

    let s = svd(&v, &[vec![0, 1], vec![2, 3]], spec)?;
    let svn = von_neumann(&s.sigma);
    let result = StepResult { energy, truncerr: s.truncerr, bond: i, svn, link_dim: s.link_dim() };
    match direction {
        Direction::Right => {
            psi.set_tensor(i + 1, s.d_vdag())?;
            psi.set_tensor(i, s.u)?;
            psi.set_oc(i + 1)?;
            env.update_left(i, psi, &[mpo])?;
        }
        Direction::Left => {
            psi.set_tensor(i, s.u_d())?;
            psi.set_tensor(i + 1, s.vdag)?;
            psi.set_oc(i)?;
            env.update_right(i + 1, psi, &[mpo])?;
        }
    }
    Ok(result)
}

fn env_err(e: Error) -> Error {
    Error::InternalState(format!("missing environment: {e}"))
}

/// Per-sweep override of the truncation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleEntry {
    pub m: usize,
    pub cutoff: f64,
}

#[derive(Clone, Debug)]
pub struct DmrgParams {
    pub sweeps: usize,
    pub spec: TruncationSpec,
    pub lanczos_iters: usize,
    /// Converge on energy (`true`) or on the entropy at `svn_bond` (`false`).
    pub cvg_e: bool,
    /// Optional target energy: stop as soon as a sweep ends within `tol` of it.
    pub goal: Option<f64>,
    pub tol: f64,
    pub svn_bond: usize,
    /// Entry `s` applies to sweep `s`; later sweeps keep the last entry.
    pub schedule: Vec<ScheduleEntry>,
    /// Keep environments as files in this directory instead of in memory.
    pub env_dir: Option<PathBuf>,
}

impl Default for DmrgParams {
    fn default() -> Self {
        Self {
            sweeps: 10,
            spec: TruncationSpec::new(100, 1e-9),
            lanczos_iters: 2,
            cvg_e: true,
            goal: None,
            tol: 1e-8,
            svn_bond: 0,
            schedule: Vec::new(),
            env_dir: None,
        }
    }
}

impl DmrgParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::InvalidParameter("sweeps must be positive".into()));
        }
        if self.lanczos_iters == 0 {
            return Err(Error::InvalidParameter("lanczos_iters must be at least 1".into()));
        }
        if self.schedule.len() > self.sweeps {
            return Err(Error::InvalidParameter(format!(
                "schedule has {} entries for {} sweeps",
                self.schedule.len(),
                self.sweeps
            )));
        }
        if n >= 2 && self.svn_bond >= n - 1 {
            return Err(Error::OutOfRange { index: self.svn_bond, len: n - 1 });
        }
        Ok(())
    }

    /// Truncation parameters in effect for sweep `s`.
    pub fn spec_for(&self, s: usize) -> TruncationSpec {
        match self.schedule.get(s).or(self.schedule.last().filter(|_| s >= self.schedule.len())) {
            Some(e) => TruncationSpec { m: e.m, cutoff: e.cutoff, ..self.spec },
            None => self.spec,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct DmrgReport {
    pub energies: Vec<f64>,
    pub max_truncerr: Vec<f64>,
    pub svn: Vec<f64>,
    pub bond_dims: Vec<usize>,
    pub sweeps_run: usize,
    pub converged: bool,
}

impl DmrgReport {
    pub fn energy(&self) -> f64 {
        self.energies.last().copied().unwrap_or(f64::NAN)
    }
}

/// Full two-site DMRG. `psi` is overwritten with the optimized state and ends
/// with its orthogonality center on site 0.
pub fn dmrg(psi: &mut Mps, mpo: &Mpo, params: &DmrgParams) -> Result<DmrgReport> {
    let n = psi.len();
    if mpo.len() != n {
        return Err(Error::Shape(format!("MPO has {} sites, MPS has {n}", mpo.len())));
    }
    if mpo.physical_dims()? != psi.physical_dims()? {
        return Err(Error::Shape("MPO and MPS physical dimensions differ".into()));
    }
    params.validate(n)?;
    if n < 2 {
        return Err(Error::InvalidParameter("two-site DMRG needs at least two sites".into()));
    }
    if !(psi.norm()? > 1e-14) {
        return Err(Error::DegenerateInput("initial state has zero norm".into()));
    }
    psi.move_oc(0)?;
    psi.normalize()?;
    let mut env = match &params.env_dir {
        Some(dir) => Environment::new_on_disk(psi, &[mpo], dir)?,
        None => Environment::new(psi, &[mpo])?,
    };

    let mut report = DmrgReport::default();
    for s in 0..params.sweeps {
        let spec = params.spec_for(s);
        let mut max_err = 0.0f64;
        let mut energy = f64::NAN;
        let mut svn = f64::NAN;
        let mut record = |r: StepResult, svn: &mut f64| {
            max_err = max_err.max(r.truncerr);
            energy = r.energy;
            if r.bond == params.svn_bond {
                *svn = r.svn;
            }
        };
        for site in 0..n - 1 {
            let r = dmrg_sweep_step(psi, mpo, &mut env, site, Direction::Right, &spec, params.lanczos_iters)?;
            record(r, &mut svn);
        }
        for site in (1..n).rev() {
            let r = dmrg_sweep_step(psi, mpo, &mut env, site, Direction::Left, &spec, params.lanczos_iters)?;
            record(r, &mut svn);
        }
        if !energy.is_finite() {
            return Err(Error::Decomposition(format!("sweep {s} produced a non-finite energy")));
        }
        report.energies.push(energy);
        report.max_truncerr.push(max_err);
        report.svn.push(svn);
        report.sweeps_run = s + 1;

        if params.goal.is_some_and(|g| (energy - g).abs() < params.tol) {
            report.converged = true;
            break;
        }
        if s > 0 {
            let delta = if params.cvg_e {
                energy - report.energies[s - 1]
            } else {
                svn - report.svn[s - 1]
            };
            if delta.abs() < params.tol {
                report.converged = true;
                break;
            }
        }
    }
    report.bond_dims = psi.bond_dims()?;
    Ok(report)
}
