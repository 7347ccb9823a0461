use std::borrow::Cow;
use std::path::Path;

use super::disk::TensorStore;
use super::mps::Mps;
use crate::decomp::{qr, svd, TruncationSpec};
use crate::error::{Error, Result};
use crate::tensor::{contract, DenseTensor, Scalar};

/// Block matrix of local `d x d` operators; `None` entries are zero.
#[derive(Clone, Debug)]
pub struct Block {
    rows: usize,
    cols: usize,
    d: usize,
    entries: Vec<Option<DenseTensor>>,
}

impl Block {
    pub fn new(rows: usize, cols: usize, d: usize) -> Self {
        Self { rows, cols, d, entries: vec![None; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn phys_dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, r: usize, c: usize) -> Option<&DenseTensor> {
        self.entries[r + self.rows * c].as_ref()
    }

    /// Sets entry `(r, c)` to `coef * op`.
    pub fn set(&mut self, r: usize, c: usize, coef: impl Into<Scalar>, op: &DenseTensor) -> Result<()> {
        if r >= self.rows || c >= self.cols {
            return Err(Error::MpoShape(format!("entry ({r}, {c}) outside a {}x{} block", self.rows, self.cols)));
        }
        if op.dims() != [self.d, self.d] {
            return Err(Error::MpoShape(format!("operator dims {:?} in a block of {}x{} operators", op.dims(), self.d, self.d)));
        }
        self.entries[r + self.rows * c] = Some(op.scale(coef));
        Ok(())
    }

    /// Adds `coef * op` onto entry `(r, c)`.
    pub fn add(&mut self, r: usize, c: usize, coef: impl Into<Scalar>, op: &DenseTensor) -> Result<()> {
        match self.get(r, c).cloned() {
            None => self.set(r, c, coef, op),
            Some(mut cur) => {
                cur.axpy(coef, op)?;
                self.entries[r + self.rows * c] = Some(cur);
                Ok(())
            }
        }
    }

    /// Rank-4 tensor `(row, out, in, col)` restricted to the given rows and columns.
    fn tensor(&self, rows: &[usize], cols: &[usize]) -> DenseTensor {
        let d = self.d;
        let dims = [rows.len(), d, d, cols.len()];
        DenseTensor::from_fn(&dims, |ix| match self.get(rows[ix[0]], cols[ix[3]]) {
            Some(op) => op.get(&[ix[1], ix[2]]),
            None => Scalar::ZERO,
        })
    }
}

/// Matrix product operator: rank-4 tensors `(left, out, in, right)`.
#[derive(Clone, Debug)]
pub struct Mpo {
    store: TensorStore,
}

impl Mpo {
    pub fn from_tensors(tensors: Vec<DenseTensor>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::MpoShape("an MPO needs at least one site".into()));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.rank() != 4 || t.dim(1) != t.dim(2) {
                return Err(Error::MpoShape(format!("site {i}: expected (link, d, d, link), got {:?}", t.dims())));
            }
        }
        if tensors[0].dim(0) != 1 || tensors[tensors.len() - 1].dim(3) != 1 {
            return Err(Error::MpoShape("boundary links of an MPO must have dimension 1".into()));
        }
        for (i, w) in tensors.windows(2).enumerate() {
            if w[0].dim(3) != w[1].dim(0) {
                return Err(Error::MpoShape(format!("link between sites {i} and {} does not match", i + 1)));
            }
        }
        Ok(Self { store: TensorStore::memory(tensors) })
    }

    /// Identity operator on the given physical dims.
    pub fn identity(phys: &[usize]) -> Result<Self> {
        Self::from_tensors(phys.iter().map(|&d| DenseTensor::identity(d).unreshape(&[1, d, d, 1]).unwrap()).collect())
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn tensor(&self, i: usize) -> Result<Cow<'_, DenseTensor>> {
        self.store.get(i)
    }

    pub fn tensors(&self) -> Result<Vec<DenseTensor>> {
        (0..self.len()).map(|i| self.tensor(i).map(Cow::into_owned)).collect()
    }

    pub fn dims(&self, i: usize) -> Result<Vec<usize>> {
        self.store.dims(i)
    }

    pub fn physical_dims(&self) -> Result<Vec<usize>> {
        (0..self.len()).map(|i| Ok(self.dims(i)?[1])).collect()
    }

    /// Dimension of each of the `N - 1` internal links.
    pub fn link_dims(&self) -> Result<Vec<usize>> {
        (0..self.len().saturating_sub(1)).map(|i| Ok(self.dims(i)?[3])).collect()
    }

    pub fn is_complex(&self) -> bool {
        (0..self.len()).any(|i| self.store.is_complex(i))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut store = TensorStore::empty_disk(dir, "mpo", self.len())?;
        self.store.copy_to(&mut store)?;
        store.write_manifest("mpo", &[])
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self { store: TensorStore::open(dir, "mpo")?.0 })
    }
}

/// Builds an MPO from per-site block matrices whose Hamiltonian accumulates
/// in the lower-left corner: the first site keeps only the bottom row, the
/// last site only the first column.
pub fn make_mpo(n: usize, mut block: impl FnMut(usize) -> Result<Block>) -> Result<Mpo> {
    if n == 0 {
        return Err(Error::MpoShape("an MPO needs at least one site".into()));
    }
    let mut tensors = Vec::with_capacity(n);
    let mut prev_cols = None;
    for i in 0..n {
        let b = block(i)?;
        if let Some(c) = prev_cols {
            if b.rows != c {
                return Err(Error::MpoShape(format!(
                    "site {i}: block has {} rows but the previous block has {c} columns",
                    b.rows
                )));
            }
        }
        prev_cols = Some(b.cols);
        let rows: Vec<usize> = if i == 0 { vec![b.rows - 1] } else { (0..b.rows).collect() };
        let cols: Vec<usize> = if i == n - 1 { vec![0] } else { (0..b.cols).collect() };
        tensors.push(b.tensor(&rows, &cols));
    }
    Mpo::from_tensors(tensors)
}

/// `H|ψ⟩` as a new MPS (not renormalized).
///
/// Site tensors are fused with the MPO links and swept left to right with QR,
/// which keeps every bond at most `(mps link) x (mpo link)`. An active
/// `spec` adds a right-to-left truncating SVD sweep.
pub fn apply_mpo(psi: &Mps, mpo: &Mpo, spec: &TruncationSpec) -> Result<Mps> {
    let n = psi.len();
    if mpo.len() != n {
        return Err(Error::Shape(format!("MPO has {} sites, MPS has {n}", mpo.len())));
    }
    let mut sites = Vec::with_capacity(n);
    for i in 0..n {
        let a = psi.tensor(i)?;
        let w = mpo.tensor(i)?;
        if w.dim(2) != a.dim(1) {
            return Err(Error::Shape(format!("site {i}: MPO acts on dimension {}, MPS has {}", w.dim(2), a.dim(1))));
        }
        // (bl, out, br) x (l, r) -> (l, bl, out, r, br)
        let t = contract(&w, &[2], &a, &[1])?.permute(&[3, 0, 1, 4, 2])?;
        sites.push(t.reshape_group(&[vec![0, 1], vec![2], vec![3, 4]])?);
    }
    for i in 0..n - 1 {
        let f = qr(&sites[i], &[vec![0, 1], vec![2]])?;
        sites[i + 1] = contract(&f.right, &[1], &sites[i + 1], &[0])?;
        sites[i] = f.left;
    }
    let mut oc = n - 1;
    if spec.is_active() {
        for i in (1..n).rev() {
            let s = svd(&sites[i], &[vec![0], vec![1, 2]], spec)?;
            sites[i - 1] = contract(&sites[i - 1], &[2], &s.u_d(), &[0])?;
            sites[i] = s.vdag;
        }
        oc = 0;
    }
    Mps::from_tensors(sites, oc)
}
