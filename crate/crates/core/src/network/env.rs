use std::borrow::Cow;
use std::path::Path;

use super::disk::TensorStore;
use super::mpo::Mpo;
use super::mps::Mps;
use crate::error::{Error, Result};
use crate::tensor::{contract, contract_with, ContractOptions, DenseTensor};

/// Boundary environment: all-ones tensor of rank `2 + layers` with unit dims.
pub fn boundary(layers: usize) -> DenseTensor {
    DenseTensor::ones(&vec![1; layers + 2])
}

/// Extends a left environment `(bra, w_0..w_{k-1}, ket)` over one site.
/// MPO layer 0 sits next to the bra.
pub fn left_step(env: &DenseTensor, bra: &DenseTensor, mpos: &[&DenseTensor], ket: &DenseTensor) -> Result<DenseTensor> {
    let k = mpos.len();
    // (bra, w_0..w_{k-1}, s, ket'); every step below is a plain or per-slice matrix product
    let mut t = contract(env, &[k + 1], ket, &[0])?;
    for (j, w) in mpos.iter().enumerate().rev() {
        // (w_l, in, out, w_r) so (w_j, s) pairs with a leading block
        let w = w.permute(&[0, 2, 1, 3])?;
        let rank = t.rank();
        let order: Vec<usize> = (0..=j).chain([rank - 2, rank - 1]).chain(j + 1..rank - 2).collect();
        t = contract_with(&t, &[j + 1, j + 2], &w, &[0, 1], &ContractOptions { out_order: Some(&order), ..Default::default() })?;
    }
    // (bra, s, w'_0..w'_{k-1}, ket')
    contract_with(bra, &[0, 1], &t, &[0, 1], &ContractOptions { conj_a: true, ..Default::default() })
}

/// Extends a right environment `(ket, w_{k-1}..w_0, bra)` over one site.
pub fn right_step(env: &DenseTensor, bra: &DenseTensor, mpos: &[&DenseTensor], ket: &DenseTensor) -> Result<DenseTensor> {
    let k = mpos.len();
    let mut t = contract(ket, &[2], env, &[0])?;
    for (j, w) in mpos.iter().enumerate().rev() {
        let order: Vec<usize> =
            [0, k + 2].into_iter().chain(1..=k - 1 - j).chain([k + 1]).chain(k - j..=k).collect();
        t = contract_with(&t, &[1, 2 + (k - 1 - j)], w, &[2, 3], &ContractOptions { out_order: Some(&order), ..Default::default() })?;
    }
    contract_with(&t, &[1, k + 2], bra, &[1, 2], &ContractOptions { conj_b: true, ..Default::default() })
}

/// Left and right environment caches of `<ψ|H_0 ... H_{k-1}|ψ>`.
///
/// `left(i)` covers sites `< i`, `right(i)` covers sites `> i`.
#[derive(Clone, Debug)]
pub struct Environment {
    left: TensorStore,
    right: TensorStore,
    layers: usize,
}

impl Environment {
    /// Populates left environments up to the orthogonality center and right
    /// environments down to it.
    pub fn new(psi: &Mps, mpos: &[&Mpo]) -> Result<Self> {
        let n = psi.len();
        Self::build(psi, mpos, TensorStore::empty(n), TensorStore::empty(n))
    }

    /// Same as [`Environment::new`] but keeps the tensors as files in `dir`.
    pub fn new_on_disk(psi: &Mps, mpos: &[&Mpo], dir: &Path) -> Result<Self> {
        let n = psi.len();
        Self::build(psi, mpos, TensorStore::empty_disk(dir, "left", n)?, TensorStore::empty_disk(dir, "right", n)?)
    }

    fn build(psi: &Mps, mpos: &[&Mpo], left: TensorStore, right: TensorStore) -> Result<Self> {
        let n = psi.len();
        if let Some(m) = mpos.iter().find(|m| m.len() != n) {
            return Err(Error::Shape(format!("MPO with {} sites for an MPS of {n}", m.len())));
        }
        let mut env = Self { left, right, layers: mpos.len() };
        env.left.set(0, boundary(env.layers))?;
        env.right.set(n - 1, boundary(env.layers))?;
        for i in 0..psi.oc() {
            env.update_left(i, psi, mpos)?;
        }
        for i in (psi.oc() + 1..n).rev() {
            env.update_right(i, psi, mpos)?;
        }
        Ok(env)
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn left(&self, i: usize) -> Result<Cow<'_, DenseTensor>> {
        self.left.get(i)
    }

    pub fn right(&self, i: usize) -> Result<Cow<'_, DenseTensor>> {
        self.right.get(i)
    }

    pub fn set_left(&mut self, i: usize, t: DenseTensor) -> Result<()> {
        self.left.set(i, t)
    }

    pub fn set_right(&mut self, i: usize, t: DenseTensor) -> Result<()> {
        self.right.set(i, t)
    }

    /// `left(i + 1)` from `left(i)` and site `i`.
    pub fn update_left(&mut self, i: usize, psi: &Mps, mpos: &[&Mpo]) -> Result<()> {
        let a = psi.tensor(i)?;
        let ws: Vec<Cow<'_, DenseTensor>> = mpos.iter().map(|m| m.tensor(i)).collect::<Result<_>>()?;
        let refs: Vec<&DenseTensor> = ws.iter().map(|w| w.as_ref()).collect();
        let next = left_step(&*self.left(i)?, &a, &refs, &a)?;
        self.left.set(i + 1, next)
    }

    /// `right(i - 1)` from `right(i)` and site `i`.
    pub fn update_right(&mut self, i: usize, psi: &Mps, mpos: &[&Mpo]) -> Result<()> {
        let a = psi.tensor(i)?;
        let ws: Vec<Cow<'_, DenseTensor>> = mpos.iter().map(|m| m.tensor(i)).collect::<Result<_>>()?;
        let refs: Vec<&DenseTensor> = ws.iter().map(|w| w.as_ref()).collect();
        let next = right_step(&*self.right(i)?, &a, &refs, &a)?;
        self.right.set(i - 1, next)
    }
}
