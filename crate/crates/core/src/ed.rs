//! Exact diagonalization helpers for small systems.
//!
//! Dense states and operators use the basis ordering in which site 0 is the
//! fastest-varying index, the same column-major convention as tensor data.
//! Operators are `(out, in)` matrices.

use crate::decomp::{qr, svd, TruncationSpec};
use crate::dmrg::lanczos;
use crate::error::{Error, Result};
use crate::network::{Mpo, Mps};
use crate::tensor::{contract, inner, DenseTensor};

/// Largest Hilbert-space dimension the dense routines will build by default.
pub const DEFAULT_GUARD: usize = 1 << 14;

/// Krylov restart length in [`krylov_ground`].
pub const RESTART: usize = 30;

fn hilbert_dim(phys: &[usize], guard: usize) -> Result<usize> {
    let mut total = 1usize;
    for &d in phys {
        total = total.checked_mul(d).filter(|&t| t <= guard).ok_or_else(|| {
            Error::Resource(format!("Hilbert space of dims {phys:?} exceeds the guard of {guard} states"))
        })?;
    }
    Ok(total)
}

/// Dense Hamiltonian of an MPO (its lower-left accumulation corner).
pub fn full_h(mpo: &Mpo) -> Result<DenseTensor> {
    full_h_guarded(mpo, DEFAULT_GUARD)
}

pub fn full_h_guarded(mpo: &Mpo, guard: usize) -> Result<DenseTensor> {
    hilbert_dim(&mpo.physical_dims()?, guard)?;
    // (OUT, IN, link)
    let mut m = mpo.tensor(0)?.reshape_group(&[vec![0, 1], vec![2], vec![3]])?;
    for i in 1..mpo.len() {
        let t = contract(&m, &[2], &*mpo.tensor(i)?, &[0])?;
        m = t.reshape_group(&[vec![0, 2], vec![1, 3], vec![4]])?;
    }
    let d = m.dim(0);
    m.into_unreshape(&[d, d])
}

/// Dense amplitude vector of an MPS.
pub fn full_psi(psi: &Mps) -> Result<DenseTensor> {
    full_psi_guarded(psi, DEFAULT_GUARD)
}

pub fn full_psi_guarded(psi: &Mps, guard: usize) -> Result<DenseTensor> {
    hilbert_dim(&psi.physical_dims()?, guard)?;
    // (phys, link)
    let mut v = psi.tensor(0)?.reshape_group(&[vec![0, 1], vec![2]])?;
    for i in 1..psi.len() {
        let t = contract(&v, &[1], &*psi.tensor(i)?, &[0])?;
        v = t.reshape_group(&[vec![0, 1], vec![2]])?;
    }
    let d = v.dim(0);
    v.into_unreshape(&[d])
}

/// Splits a dense vector into an MPS, site by site from the left.
///
/// Without truncation the splits are QR decompositions; an active `spec`
/// switches to truncated SVDs. The returned error is the summed truncation
/// error of the splits. The result has its center on site 0 and is not
/// renormalized.
pub fn convert2mps(vec: &DenseTensor, d: usize, n: usize, spec: &TruncationSpec) -> Result<(Mps, f64)> {
    if n == 0 || d == 0 {
        return Err(Error::Shape("convert2mps needs n >= 1 and d >= 1".into()));
    }
    let expected = d
        .checked_pow(n as u32)
        .ok_or_else(|| Error::Resource(format!("{d}^{n} basis states overflow")))?;
    if vec.len() != expected {
        return Err(Error::Size { dims: vec![d; n], expected, found: vec.len() });
    }
    let mut sites = Vec::with_capacity(n);
    let mut truncerr = 0.0;
    let mut rest = vec.unreshape(&[1, vec.len()])?;
    for _ in 0..n - 1 {
        let l = rest.dim(0);
        let r = rest.dim(1) / d;
        let t = rest.into_unreshape(&[l, d, r])?;
        if spec.is_active() {
            let s = svd(&t, &[vec![0, 1], vec![2]], spec)?;
            truncerr += s.truncerr;
            rest = s.d_vdag();
            sites.push(s.u);
        } else {
            let f = qr(&t, &[vec![0, 1], vec![2]])?;
            let (q, r) = drop_zero_rows(f.left, f.right)?;
            rest = r;
            sites.push(q);
        }
    }
    let l = rest.dim(0);
    sites.push(rest.into_unreshape(&[l, d, 1])?);
    let mut psi = Mps::from_tensors(sites, n - 1)?;
    psi.move_oc(0)?;
    Ok((psi, truncerr))
}

/// Removes rows of `r` (and the matching columns of `q`) that are zero up to
/// rounding; `q · r` is unchanged, but the link no longer exceeds the rank.
fn drop_zero_rows(q: DenseTensor, r: DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
    let (k, cols) = (r.dim(0), r.dim(1));
    let row_norm = |i: usize| (0..cols).map(|c| r.get(&[i, c]).abs().powi(2)).sum::<f64>().sqrt();
    let norms: Vec<f64> = (0..k).map(row_norm).collect();
    let max = norms.iter().copied().fold(0.0, f64::max);
    let mut keep: Vec<usize> = (0..k).filter(|&i| norms[i] > 1e-14 * max).collect();
    if keep.is_empty() {
        keep.push(0);
    }
    if keep.len() == k {
        return Ok((q, r));
    }
    let qd = q.dims().to_vec();
    let q2 = DenseTensor::from_fn(&[qd[0], qd[1], keep.len()], |ix| q.get(&[ix[0], ix[1], keep[ix[2]]]));
    let r2 = DenseTensor::from_fn(&[keep.len(), cols], |ix| r.get(&[keep[ix[0]], ix[1]]));
    Ok((q2, r2))
}

/// Lowest eigenpair of a dense Hermitian matrix by restarted Lanczos,
/// using at most `maxiter` matrix-vector products in total.
pub fn krylov_ground(h: &DenseTensor, v0: &DenseTensor, maxiter: usize) -> Result<(DenseTensor, f64)> {
    if h.rank() != 2 || h.dim(0) != h.dim(1) || v0.len() != h.dim(0) {
        return Err(Error::Shape(format!("operator dims {:?} with start vector of length {}", h.dims(), v0.len())));
    }
    let mut v = v0.unreshape(&[v0.len()])?;
    let mut remaining = maxiter.max(1);
    let mut energy = f64::NAN;
    let apply = |x: &DenseTensor| contract(h, &[1], x, &[0]);
    while remaining > 0 {
        let chunk = remaining.min(RESTART);
        let run = lanczos(&v, apply, chunk)?;
        remaining -= chunk;
        let invariant = run.vectors_used() < chunk;
        energy = run.energy;
        v = run.vector;
        if invariant {
            break;
        }
        let mut r = apply(&v)?;
        r.axpy(-energy, &v)?;
        if r.norm() < 1e-10 * energy.abs().max(1.0) {
            break;
        }
    }
    Ok((v, energy))
}

/// Tensor product `ops[0] ⊗ ops[1] ⊗ ...` with `ops[0]` on the fastest index.
pub fn kron_sites(ops: &[&DenseTensor]) -> Result<DenseTensor> {
    let (first, rest) = ops.split_first().ok_or_else(|| Error::Shape("empty operator list".into()))?;
    let mut m = (*first).clone();
    for op in rest {
        if op.rank() != 2 {
            return Err(Error::Shape(format!("operator dims {:?}", op.dims())));
        }
        let t = contract(&m, &[], op, &[])?;
        m = t.reshape_group(&[vec![0, 2], vec![1, 3]])?;
    }
    Ok(m)
}

/// `op` on `site` of an `n`-site chain of dimension `d`, identity elsewhere.
/// With `trail`, that operator acts on every site left of `site`.
pub fn embed(op: &DenseTensor, site: usize, n: usize, trail: Option<&DenseTensor>) -> Result<DenseTensor> {
    if site >= n {
        return Err(Error::OutOfRange { index: site, len: n });
    }
    let id = DenseTensor::identity(op.dim(0));
    let ops: Vec<&DenseTensor> = (0..n)
        .map(|k| match k.cmp(&site) {
            std::cmp::Ordering::Equal => op,
            std::cmp::Ordering::Less => trail.unwrap_or(&id),
            std::cmp::Ordering::Greater => &id,
        })
        .collect();
    kron_sites(&ops)
}

/// `<v|h|v>` for a dense operator.
pub fn dense_expect(h: &DenseTensor, v: &DenseTensor) -> Result<crate::tensor::Scalar> {
    inner(v, &contract(h, &[1], v, &[0])?)
}
