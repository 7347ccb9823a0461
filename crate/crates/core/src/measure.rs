//! Observables of an MPS.
//!
//! Measurements work on an in-memory copy of the state, so the caller's
//! gauge is never touched. Correlators place the orthogonality center on
//! site 0: everything to the right of the last operator is then
//! right-isometric and contracts to the identity.

use crate::decomp::{eigen, svd, TruncationSpec};
use crate::dmrg::von_neumann;
use crate::error::{Error, Result};
use crate::network::{boundary, left_step, Mpo, Mps};
use crate::tensor::{ccontract, contract, Complex64, DenseTensor, Scalar};

/// Entanglement across every bond; bond `b` separates sites `..=b` from the rest.
#[derive(Clone, Debug)]
pub struct EntropyProfile {
    pub svn: Vec<f64>,
    /// Normalized squared singular values per bond, descending.
    pub spectra: Vec<Vec<f64>>,
}

pub fn entanglement_profile(psi: &Mps) -> Result<EntropyProfile> {
    let mut w = psi.to_memory()?;
    let n = w.len();
    let mut svn = Vec::with_capacity(n.saturating_sub(1));
    let mut spectra = Vec::with_capacity(n.saturating_sub(1));
    w.move_oc(0)?;
    for b in 0..n.saturating_sub(1) {
        w.move_oc(b)?;
        let s = svd(&*w.tensor(b)?, &[vec![0, 1], vec![2]], &TruncationSpec::none())?;
        let total: f64 = s.sigma.iter().map(|x| x * x).sum();
        spectra.push(s.sigma.iter().map(|x| x * x / total).collect());
        svn.push(von_neumann(&s.sigma));
    }
    Ok(EntropyProfile { svn, spectra })
}

fn check_op(psi: &Mps, site: usize, op: &DenseTensor) -> Result<()> {
    let d = psi.dims(site)?[1];
    if op.dims() != [d, d] {
        return Err(Error::Shape(format!("operator dims {:?} on a site of dimension {d}", op.dims())));
    }
    Ok(())
}

/// `<opᵢ>` on every site, read off the orthogonality center as it moves.
pub fn expect_local(psi: &Mps, op: &DenseTensor) -> Result<Vec<Scalar>> {
    let mut w = psi.to_memory()?;
    let n = w.len();
    let norm2 = w.norm()?.powi(2);
    w.move_oc(0)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        check_op(&w, i, op)?;
        w.move_oc(i)?;
        let a = w.tensor(i)?;
        let oa = contract(op, &[1], &a, &[1])?;
        let v = ccontract(&a, &[1, 0, 2], &oa, &[0, 1, 2])?.to_scalar()?;
        out.push(div(v, norm2));
    }
    Ok(out)
}

fn div(v: Scalar, x: f64) -> Scalar {
    match v {
        Scalar::Real(r) => Scalar::Real(r / x),
        Scalar::Complex(c) => Scalar::Complex(c / x),
    }
}

/// Extends a `(bra, ket)` boundary over one site with `op` acting on it.
fn extend(e: &DenseTensor, a: &DenseTensor, op: Option<&DenseTensor>) -> Result<DenseTensor> {
    // (bra, s, r)
    let t = contract(e, &[1], a, &[0])?;
    match op {
        None => ccontract(a, &[0, 1], &t, &[0, 1]),
        Some(op) => {
            // (s', bra, r)
            let t = contract(op, &[1], &t, &[1])?;
            ccontract(a, &[0, 1], &t, &[1, 0])
        }
    }
}

fn trace(e: &DenseTensor) -> Scalar {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..e.dim(0).min(e.dim(1)) {
        acc += e.get(&[k, k]).to_c64();
    }
    if e.is_complex() {
        Scalar::Complex(acc)
    } else {
        Scalar::Real(acc.re)
    }
}

fn product(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    contract(a, &[1], b, &[0])
}

fn unit_state(psi: &Mps) -> Result<Mps> {
    let mut w = psi.to_memory()?;
    w.move_oc(0)?;
    w.normalize()?;
    Ok(w)
}

/// `N x N` matrix of `<Aᵢ Bⱼ>`.
///
/// With a `trail` (the fermion sign `F`), each operator carries the trail on
/// every site to its left. Entries below the diagonal are the complex
/// conjugates of the mirrored ones, which is correct for pairs such as
/// `(Sz, Sz)`, `(S+, S-)` or `(c†, c)` whose matrix is Hermitian. The
/// diagonal is the one-site expectation value of `A·B`.
pub fn correlation_matrix(psi: &Mps, a: &DenseTensor, b: &DenseTensor, trail: Option<&DenseTensor>) -> Result<DenseTensor> {
    let w = unit_state(psi)?;
    let n = w.len();
    for i in 0..n {
        check_op(&w, i, a)?;
        check_op(&w, i, b)?;
        if let Some(t) = trail {
            check_op(&w, i, t)?;
        }
    }
    let t2 = trail.map(|t| product(t, t)).transpose()?;
    let a_t = match trail {
        Some(t) => product(a, t)?,
        None => a.clone(),
    };
    let ab = product(a, b)?;
    let complex = w.is_complex() || a.is_complex() || b.is_complex() || trail.is_some_and(|t| t.is_complex());
    let mut out = if complex { DenseTensor::zeros_complex(&[n, n]) } else { DenseTensor::zeros(&[n, n]) };

    let mut left = DenseTensor::ones(&[1, 1]);
    for i in 0..n {
        let ai = w.tensor(i)?;
        out.set(&[i, i], trace(&extend(&left, &ai, Some(&ab))?));
        let mut e = extend(&left, &ai, Some(&a_t))?;
        for j in i + 1..n {
            let aj = w.tensor(j)?;
            let v = trace(&extend(&e, &aj, Some(b))?);
            out.set(&[i, j], v);
            out.set(&[j, i], v.conj());
            e = extend(&e, &aj, trail)?;
        }
        left = extend(&left, &ai, t2.as_ref())?;
    }
    Ok(out)
}

/// `<O₁ O₂ ... O_r>` with `O_k` on site `i_k`, for every ordered tuple
/// `i_1 <= ... <= i_r`; other entries of the returned `[N; r]` tensor are zero.
///
/// Operators sharing a site multiply in list order. With a `trail`, each
/// operator carries it on all sites to its left.
pub fn correlation(psi: &Mps, ops: &[&DenseTensor], trail: Option<&DenseTensor>) -> Result<DenseTensor> {
    if ops.is_empty() {
        return Err(Error::Shape("correlation needs at least one operator".into()));
    }
    let w = unit_state(psi)?;
    let n = w.len();
    for i in 0..n {
        for op in ops.iter().copied().chain(trail) {
            check_op(&w, i, op)?;
        }
    }
    let r = ops.len();
    let d = w.dims(0)?[1];
    // powers of the trail: trail^k for k = 0..=r
    let mut powers = vec![DenseTensor::identity(d)];
    for k in 1..=r {
        powers.push(match trail {
            Some(t) => product(&powers[k - 1], t)?,
            None => powers[0].clone(),
        });
    }
    let complex = w.is_complex() || ops.iter().any(|o| o.is_complex()) || trail.is_some_and(|t| t.is_complex());
    let dims = vec![n; r];
    let mut out = if complex { DenseTensor::zeros_complex(&dims) } else { DenseTensor::zeros(&dims) };
    let sites: Vec<DenseTensor> = w.tensors()?;
    let mut ctx = Walk { sites: &sites, ops, powers: &powers, out: &mut out, tuple: Vec::with_capacity(r) };
    ctx.walk(0, 0, &DenseTensor::ones(&[1, 1]))?;
    Ok(out)
}

struct Walk<'a> {
    sites: &'a [DenseTensor],
    ops: &'a [&'a DenseTensor],
    powers: &'a [DenseTensor],
    out: &'a mut DenseTensor,
    tuple: Vec<usize>,
}

impl Walk<'_> {
    /// `left` covers sites `< s`, on which operators `< k` have been placed.
    fn walk(&mut self, s: usize, k: usize, left: &DenseTensor) -> Result<()> {
        let r = self.ops.len();
        if s == self.sites.len() {
            return Ok(());
        }
        for c in 0..=r - k {
            let mut m = self.powers[r - k - c].clone();
            for q in (k..k + c).rev() {
                m = product(self.ops[q], &m)?;
            }
            let e = extend(left, &self.sites[s], Some(&m))?;
            self.tuple.extend(std::iter::repeat_n(s, c));
            if k + c == r {
                let v = trace(&e);
                self.out.set(&self.tuple, v);
            } else {
                self.walk(s + 1, k + c, &e)?;
            }
            self.tuple.truncate(k);
        }
        Ok(())
    }
}

/// `<bra| H_1 ... H_k |psi>`; with no MPOs this is the overlap, and without
/// `bra` the state is its own dual. Layer 0 acts last (next to the bra).
pub fn expect(bra: Option<&Mps>, psi: &Mps, mpos: &[&Mpo]) -> Result<Scalar> {
    let bra = bra.unwrap_or(psi);
    let n = psi.len();
    if bra.len() != n || mpos.iter().any(|m| m.len() != n) {
        return Err(Error::Shape("all layers must have the same number of sites".into()));
    }
    let phys = psi.physical_dims()?;
    if bra.physical_dims()? != phys {
        return Err(Error::Shape("bra and ket physical dimensions differ".into()));
    }
    for m in mpos {
        if m.physical_dims()? != phys {
            return Err(Error::Shape("MPO physical dimensions differ from the state".into()));
        }
    }
    let mut e = boundary(mpos.len());
    for i in 0..n {
        let ws: Vec<_> = mpos.iter().map(|m| m.tensor(i)).collect::<Result<_>>()?;
        let refs: Vec<&DenseTensor> = ws.iter().map(|w| w.as_ref()).collect();
        e = left_step(&e, &*bra.tensor(i)?, &refs, &*psi.tensor(i)?)?;
    }
    e.to_scalar()
}

/// Sites `first..=last` contracted with their conjugates over the physical
/// index, as `(dual-left, ket-left, dual-right, ket-right)`.
#[derive(Clone, Debug)]
pub struct TransferMatrix {
    pub tensor: DenseTensor,
    pub first: usize,
    pub last: usize,
}

impl TransferMatrix {
    pub fn sites(&self) -> usize {
        self.last + 1 - self.first
    }
}

/// Transfer matrix of sites `i..=j`, optionally appended to `acc` (which must end at `i - 1`).
pub fn transfer_matrix(psi: &Mps, i: usize, j: usize, acc: Option<&TransferMatrix>) -> Result<TransferMatrix> {
    let n = psi.len();
    if j >= n {
        return Err(Error::OutOfRange { index: j, len: n });
    }
    if i > j {
        return Err(Error::OutOfRange { index: i, len: j + 1 });
    }
    if let Some(a) = acc {
        if a.last + 1 != i {
            return Err(Error::Shape(format!("accumulated range ends at {} but the new one starts at {i}", a.last)));
        }
    }
    let mut t: Option<DenseTensor> = acc.map(|a| a.tensor.clone());
    for s in i..=j {
        let a = psi.tensor(s)?;
        // (l, r, l', r') -> (l, l', r, r')
        let site = ccontract(&a, &[1], &a, &[1])?.permute(&[0, 2, 1, 3])?;
        t = Some(match t {
            None => site,
            Some(t) => contract(&t, &[2, 3], &site, &[0, 1])?,
        });
    }
    let first = acc.map_or(i, |a| a.first);
    Ok(TransferMatrix { tensor: t.expect("non-empty range"), first, last: j })
}

#[derive(Clone, Debug)]
pub struct CorrelationLength {
    /// In sites. `0` when only one eigenvalue is nonzero, infinite when the
    /// two leading eigenvalues have equal magnitude.
    pub xi: f64,
    /// Eigenvalues sorted by decreasing magnitude.
    pub spectrum: Vec<Complex64>,
    /// `arg(λ₂/λ₁)`; nonzero for oscillating decay.
    pub phase: f64,
}

pub fn correlation_length(tm: &TransferMatrix) -> Result<CorrelationLength> {
    let t = &tm.tensor;
    if t.dim(0) * t.dim(1) != t.dim(2) * t.dim(3) {
        return Err(Error::Shape(format!("transfer matrix dims {:?} are not square", t.dims())));
    }
    let e = eigen(t, &[vec![0, 1], vec![2, 3]], &TruncationSpec::none(), None)?;
    let mut spectrum: Vec<Complex64> = e.values.iter().map(|v| v.to_c64()).collect();
    spectrum.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let l1 = spectrum[0];
    let l2 = spectrum.get(1).copied().unwrap_or_default();
    let (xi, phase) = if l1.norm() == 0.0 || l2.norm() <= 1e-14 * l1.norm() {
        (0.0, 0.0)
    } else {
        let ratio = l2 / l1;
        if ratio.norm() >= 1.0 - 1e-12 {
            (f64::INFINITY, ratio.arg())
        } else {
            (-(tm.sites() as f64) / ratio.norm().ln(), ratio.arg())
        }
    };
    Ok(CorrelationLength { xi, spectrum, phase })
}
