use std::borrow::Cow;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::disk::TensorStore;
use crate::decomp::{lq, qr};
use crate::error::{Error, Result};
use crate::tensor::{contract, contract_with, ContractOptions, DenseTensor, Scalar};

/// Matrix product state: rank-3 site tensors `(left, physical, right)` and an
/// orthogonality center `oc`.
///
/// Sites left of `oc` are left-isometric and sites right of it are
/// right-isometric, so the norm of the state is the norm of `tensor(oc)`.
#[derive(Clone, Debug)]
pub struct Mps {
    store: TensorStore,
    oc: usize,
}

impl Mps {
    /// Wraps site tensors, checking shapes. The gauge is taken on trust.
    pub fn from_tensors(tensors: Vec<DenseTensor>, oc: usize) -> Result<Self> {
        check_chain(&tensors)?;
        if oc >= tensors.len() {
            return Err(Error::OutOfRange { index: oc, len: tensors.len() });
        }
        Ok(Self { store: TensorStore::memory(tensors), oc })
    }

    /// Product state from normalized local vectors (bond dimension one everywhere).
    pub fn product_state(locals: &[Vec<f64>], oc: usize) -> Result<Self> {
        let mut tensors = Vec::with_capacity(locals.len());
        for v in locals {
            let n2: f64 = v.iter().map(|x| x * x).sum();
            if (n2.sqrt() - 1.0).abs() > 1e-12 {
                return Err(Error::NotNormalized(n2.sqrt()));
            }
            tensors.push(DenseTensor::from_real(vec![1, v.len(), 1], v.clone())?);
        }
        Self::from_tensors(tensors, oc)
    }

    /// Product of computational basis states `states[i]` in dimension `d`.
    pub fn basis_state(d: usize, states: &[usize], oc: usize) -> Result<Self> {
        let locals: Vec<Vec<f64>> = states
            .iter()
            .map(|&s| {
                if s >= d {
                    return Err(Error::OutOfRange { index: s, len: d });
                }
                let mut v = vec![0.0; d];
                v[s] = 1.0;
                Ok(v)
            })
            .collect::<Result<_>>()?;
        Self::product_state(&locals, oc)
    }

    /// Alternating basis states 0, 1, 0, 1, ... (Néel state for spins).
    pub fn staggered(d: usize, n: usize, oc: usize) -> Result<Self> {
        let states: Vec<usize> = (0..n).map(|i| i % 2).collect();
        Self::basis_state(d, &states, oc)
    }

    /// Random state with uniform `[-1, 1]` entries, then gauged and normalized.
    /// Bond `b` has dimension `min(m, d^(b+1), d^(n-b-1))`.
    pub fn random(d: usize, n: usize, m: usize, oc: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Shape("random MPS needs at least one site of positive dimension".into()));
        }
        if oc >= n {
            return Err(Error::OutOfRange { index: oc, len: n });
        }
        let m = m.max(1);
        let bound = |k: usize| -> usize {
            let mut p = 1usize;
            for _ in 0..k {
                p = p.saturating_mul(d);
                if p >= m {
                    return m;
                }
            }
            p.min(m)
        };
        let links: Vec<usize> = (0..=n).map(|b| if b == 0 || b == n { 1 } else { bound(b).min(bound(n - b)) }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = (0..n)
            .map(|i| {
                let dims = vec![links[i], d, links[i + 1]];
                let len = dims.iter().product();
                DenseTensor::from_real(dims, (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut psi = Self { store: TensorStore::memory(tensors), oc: 0 };
        psi.canonicalize(oc)?;
        psi.normalize()?;
        Ok(psi)
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn oc(&self) -> usize {
        self.oc
    }

    pub fn tensor(&self, i: usize) -> Result<Cow<'_, DenseTensor>> {
        self.store.get(i)
    }

    pub fn tensors(&self) -> Result<Vec<DenseTensor>> {
        (0..self.len()).map(|i| self.tensor(i).map(Cow::into_owned)).collect()
    }

    /// Replaces a site tensor. Keeping the chain and gauge consistent is up to the caller.
    pub fn set_tensor(&mut self, i: usize, t: DenseTensor) -> Result<()> {
        if t.rank() != 3 {
            return Err(Error::Shape(format!("MPS tensors are rank 3, got dims {:?}", t.dims())));
        }
        self.store.set(i, t)
    }

    /// Declares the orthogonality center without moving it.
    pub fn set_oc(&mut self, oc: usize) -> Result<()> {
        if oc >= self.len() {
            return Err(Error::OutOfRange { index: oc, len: self.len() });
        }
        self.oc = oc;
        if self.store.is_disk() {
            self.write_manifest()?;
        }
        Ok(())
    }

    pub fn dims(&self, i: usize) -> Result<Vec<usize>> {
        self.store.dims(i)
    }

    pub fn physical_dims(&self) -> Result<Vec<usize>> {
        (0..self.len()).map(|i| Ok(self.dims(i)?[1])).collect()
    }

    /// Dimension of each of the `N - 1` internal bonds.
    pub fn bond_dims(&self) -> Result<Vec<usize>> {
        (0..self.len().saturating_sub(1)).map(|i| Ok(self.dims(i)?[2])).collect()
    }

    pub fn max_bond_dim(&self) -> Result<usize> {
        Ok(self.bond_dims()?.into_iter().max().unwrap_or(1))
    }

    pub fn is_complex(&self) -> bool {
        (0..self.len()).any(|i| self.store.is_complex(i))
    }

    pub fn is_disk(&self) -> bool {
        self.store.is_disk()
    }

    /// `sqrt(<ψ|ψ>)`, read off the orthogonality center.
    pub fn norm(&self) -> Result<f64> {
        Ok(self.tensor(self.oc)?.norm())
    }

    /// Scales the orthogonality center to unit norm.
    pub fn normalize(&mut self) -> Result<f64> {
        let t = self.tensor(self.oc)?.into_owned();
        let n = t.norm();
        if n < 1e-14 {
            return Err(Error::ZeroNorm);
        }
        self.store.set(self.oc, t.scale(1.0 / n))?;
        Ok(n)
    }

    /// Moves the orthogonality center with QR steps to the right and LQ steps to the left.
    pub fn move_oc(&mut self, target: usize) -> Result<()> {
        if target >= self.len() {
            return Err(Error::OutOfRange { index: target, len: self.len() });
        }
        while self.oc < target {
            self.qr_right(self.oc)?;
            self.oc += 1;
        }
        while self.oc > target {
            self.lq_left(self.oc)?;
            self.oc -= 1;
        }
        if self.store.is_disk() {
            self.write_manifest()?;
        }
        Ok(())
    }

    /// Re-gauges every site from scratch (no assumption on the current
    /// gauge), leaving the center at `target`.
    pub fn canonicalize(&mut self, target: usize) -> Result<()> {
        if target >= self.len() {
            return Err(Error::OutOfRange { index: target, len: self.len() });
        }
        for i in 0..self.len() - 1 {
            self.qr_right(i)?;
        }
        self.oc = self.len() - 1;
        self.move_oc(target)
    }

    fn qr_right(&mut self, i: usize) -> Result<()> {
        let a = self.tensor(i)?;
        let f = qr(&a, &[vec![0, 1], vec![2]])?;
        drop(a);
        let next = contract(&f.right, &[1], &*self.tensor(i + 1)?, &[0])?;
        self.store.set(i, f.left)?;
        self.store.set(i + 1, next)
    }

    fn lq_left(&mut self, i: usize) -> Result<()> {
        let a = self.tensor(i)?;
        let f = lq(&a, &[vec![0], vec![1, 2]])?;
        drop(a);
        let prev = contract(&*self.tensor(i - 1)?, &[2], &f.left, &[0])?;
        self.store.set(i, f.right)?;
        self.store.set(i - 1, prev)
    }

    /// Removes the residual phase freedom of every bond: left to right, each
    /// link vector is multiplied by the phase that makes its largest entry in
    /// `A[b]` real and positive (the inverse phase goes into `A[b + 1]`).
    ///
    /// The state and the isometry conditions are unchanged. Afterwards the
    /// bulk tensors of a translation-invariant state coincide, which is what
    /// single-site transfer matrices need.
    pub fn fix_phases(&mut self) -> Result<()> {
        for b in 0..self.len().saturating_sub(1) {
            let a = self.tensor(b)?.into_owned();
            let (l, d, r) = (a.dim(0), a.dim(1), a.dim(2));
            let phases: Vec<Scalar> = (0..r)
                .map(|k| {
                    let mut best = Scalar::ONE;
                    let mut best_abs = 0.0;
                    for s in 0..d {
                        for i in 0..l {
                            let v = a.get(&[i, s, k]);
                            if v.abs() > best_abs * (1.0 + 1e-12) {
                                best = v;
                                best_abs = v.abs();
                            }
                        }
                    }
                    match best {
                        _ if best_abs == 0.0 => Scalar::ONE,
                        Scalar::Real(x) => Scalar::Real(x.signum()),
                        Scalar::Complex(z) => Scalar::Complex(z.conj() / z.norm()),
                    }
                })
                .collect();
            let mut diag = DenseTensor::zeros(&[r, r]);
            for (k, p) in phases.iter().enumerate() {
                diag.set(&[k, k], *p);
            }
            let next = contract_with(&diag, &[1], &*self.tensor(b + 1)?, &[0], &ContractOptions { conj_a: true, ..Default::default() })?;
            self.store.set(b, contract(&a, &[2], &diag, &[0])?)?;
            self.store.set(b + 1, next)?;
        }
        Ok(())
    }

    /// Applies `op` on each listed site (in order) together with `trail` on
    /// every site strictly to its left, then re-gauges and renormalizes.
    pub fn apply_local_ops(&mut self, sites: &[usize], op: &DenseTensor, trail: Option<&DenseTensor>) -> Result<()> {
        for &s in sites {
            if s >= self.len() {
                return Err(Error::OutOfRange { index: s, len: self.len() });
            }
            self.apply_on_site(s, op)?;
            if let Some(f) = trail {
                for k in 0..s {
                    self.apply_on_site(k, f)?;
                }
            }
        }
        let oc = self.oc;
        self.canonicalize(oc)?;
        self.normalize().map(|_| ())
    }

    fn apply_on_site(&mut self, s: usize, op: &DenseTensor) -> Result<()> {
        let d = self.dims(s)?[1];
        if op.dims() != [d, d] {
            return Err(Error::Shape(format!("operator dims {:?} on a site of dimension {d}", op.dims())));
        }
        let t = contract_with(op, &[1], &*self.tensor(s)?, &[1], &ContractOptions { out_order: Some(&[1, 0, 2]), ..Default::default() })?;
        self.store.set(s, t)
    }

    /// Writes every site plus a manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut store = TensorStore::empty_disk(dir, "site", self.len())?;
        self.store.copy_to(&mut store)?;
        store.write_manifest("mps", &[("oc", self.oc.to_string())])
    }

    /// Opens a saved state lazily: site files are read only when accessed.
    pub fn load(dir: &Path) -> Result<Self> {
        let (store, extra) = TensorStore::open(dir, "mps")?;
        let oc = extra
            .iter()
            .find(|(k, _)| k == "oc")
            .and_then(|(_, v)| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("{}: manifest has no oc", dir.display())))?;
        Ok(Self { store, oc })
    }

    /// Disk-backed copy living in `dir`.
    pub fn to_disk(&self, dir: &Path) -> Result<Self> {
        self.save(dir)?;
        Self::load(dir)
    }

    pub fn to_memory(&self) -> Result<Self> {
        Ok(Self { store: self.store.to_memory()?, oc: self.oc })
    }

    fn write_manifest(&self) -> Result<()> {
        self.store.write_manifest("mps", &[("oc", self.oc.to_string())])
    }
}

fn check_chain(tensors: &[DenseTensor]) -> Result<()> {
    if tensors.is_empty() {
        return Err(Error::Shape("an MPS needs at least one site".into()));
    }
    for (i, t) in tensors.iter().enumerate() {
        if t.rank() != 3 {
            return Err(Error::Shape(format!("site {i}: MPS tensors are rank 3, got dims {:?}", t.dims())));
        }
    }
    if tensors[0].dim(0) != 1 || tensors[tensors.len() - 1].dim(2) != 1 {
        return Err(Error::Shape("boundary links of an MPS must have dimension 1".into()));
    }
    for (i, w) in tensors.windows(2).enumerate() {
        if w[0].dim(2) != w[1].dim(0) {
            return Err(Error::Shape(format!(
                "link between sites {i} and {} has dims {} and {}",
                i + 1,
                w[0].dim(2),
                w[1].dim(0)
            )));
        }
    }
    Ok(())
}
