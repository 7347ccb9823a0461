//! Local operator sets and the model Hamiltonians built from them.
//!
//! Spin operators carry the factor of one half (`Sz = diag(1/2, -1/2)`). The
//! fermion basis on a site is `{|0>, |up>, |dn>, |up dn>}` and operators act
//! as matrices with the row index as output: `Cdagup |0> = |up>`,
//! `Cdagdn |up> = -|up dn>`. `F` is the Jordan–Wigner sign `(-1)^n`.
//!
//! All MPOs use the lower-left accumulation convention of [`make_mpo`]: the
//! identity propagates through `W[0][0]` and `W[last][last]`, and finished
//! Hamiltonian terms collect in `W[last][0]`.

use crate::error::{Error, Result};
use crate::network::{make_mpo, Block, Mpo};
use crate::tensor::{Complex64, DenseTensor, Scalar};

/// Named `d x d` local operators.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    d: usize,
    ops: Vec<(&'static str, DenseTensor)>,
}

impl OperatorSet {
    pub fn phys_dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, name: &str) -> Option<&DenseTensor> {
        self.ops.iter().find(|(n, _)| *n == name).map(|(_, op)| op)
    }

    /// Like [`OperatorSet::get`] for names known to exist.
    ///
    /// # Panics
    /// If the set has no operator called `name`.
    pub fn op(&self, name: &str) -> &DenseTensor {
        self.get(name).unwrap_or_else(|| panic!("no operator named {name}"))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.ops.iter().map(|(n, _)| *n)
    }
}

fn mat(rows: &[&[f64]]) -> DenseTensor {
    DenseTensor::real_matrix(rows).expect("rectangular literal")
}

/// `Sx, Sy, Sz, S+, S-, Id, O` for spin one half.
pub fn spin_ops() -> OperatorSet {
    let i = Complex64::new(0.0, 1.0);
    let sy = DenseTensor::from_complex(vec![2, 2], vec![0.0.into(), i * 0.5, -i * 0.5, 0.0.into()]).unwrap();
    OperatorSet {
        d: 2,
        ops: vec![
            ("Sx", mat(&[&[0.0, 0.5], &[0.5, 0.0]])),
            ("Sy", sy),
            ("Sz", mat(&[&[0.5, 0.0], &[0.0, -0.5]])),
            ("S+", mat(&[&[0.0, 1.0], &[0.0, 0.0]])),
            ("S-", mat(&[&[0.0, 0.0], &[1.0, 0.0]])),
            ("Id", DenseTensor::identity(2)),
            ("O", DenseTensor::zeros(&[2, 2])),
        ],
    }
}

/// `Cup, Cdn, Cdagup, Cdagdn, Nup, Ndn, N, F, Id, O` on the four-state fermion site.
pub fn fermion_ops() -> OperatorSet {
    let cdagup = mat(&[&[0., 0., 0., 0.], &[1., 0., 0., 0.], &[0., 0., 0., 0.], &[0., 0., 1., 0.]]);
    let cdagdn = mat(&[&[0., 0., 0., 0.], &[0., 0., 0., 0.], &[1., 0., 0., 0.], &[0., -1., 0., 0.]]);
    let diag = |v: [f64; 4]| {
        let mut t = DenseTensor::zeros(&[4, 4]);
        for (k, x) in v.into_iter().enumerate() {
            t.set(&[k, k], Scalar::Real(x));
        }
        t
    };
    OperatorSet {
        d: 4,
        ops: vec![
            ("Cup", cdagup.permute(&[1, 0]).unwrap()),
            ("Cdn", cdagdn.permute(&[1, 0]).unwrap()),
            ("Cdagup", cdagup),
            ("Cdagdn", cdagdn),
            ("Nup", diag([0., 1., 0., 1.])),
            ("Ndn", diag([0., 0., 1., 1.])),
            ("N", diag([0., 1., 1., 2.])),
            ("F", diag([1., -1., -1., 1.])),
            ("Id", DenseTensor::identity(4)),
            ("O", DenseTensor::zeros(&[4, 4])),
        ],
    }
}

/// Matrix product of two local operators.
pub fn op_product(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    crate::tensor::contract(a, &[1], b, &[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// `J Σ S_i · S_{i+1}` on a chain.
    Heisenberg,
    /// `Σ Sz_i Sz_{i+1} + g Σ Sx_i`; critical at `g = 1/2`.
    Tfim,
    /// `t Σ_σ (c†_{iσ} c_{i+1σ} + h.c.) + Σ (μ n_i + U n_i↑ n_i↓)` with Jordan–Wigner strings.
    Hubbard,
    /// `J Σ_<ij> S_i · S_j` on an open `Lx x Ly` square lattice, snake-ordered column by column.
    Heisenberg2d,
}

/// Onsite term `coef * op` on one site.
#[derive(Clone, Debug)]
pub struct Pin {
    pub site: usize,
    pub op: DenseTensor,
    pub coef: Scalar,
}

/// A model Hamiltonian plus optional pinning fields.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub lx: usize,
    /// 1 for chains.
    pub ly: usize,
    pub j: f64,
    pub g: f64,
    pub t: f64,
    pub u: f64,
    pub mu: f64,
    pub pins: Vec<Pin>,
}

impl ModelSpec {
    fn base(kind: ModelKind, lx: usize, ly: usize) -> Self {
        Self { kind, lx, ly, j: 0.0, g: 0.0, t: 0.0, u: 0.0, mu: 0.0, pins: Vec::new() }
    }

    pub fn heisenberg(j: f64, n: usize) -> Self {
        Self { j, ..Self::base(ModelKind::Heisenberg, n, 1) }
    }

    pub fn tfim(g: f64, n: usize) -> Self {
        Self { g, ..Self::base(ModelKind::Tfim, n, 1) }
    }

    pub fn hubbard(t: f64, u: f64, mu: f64, n: usize) -> Self {
        Self { t, u, mu, ..Self::base(ModelKind::Hubbard, n, 1) }
    }

    pub fn heisenberg2d(j: f64, lx: usize, ly: usize) -> Self {
        Self { j, ..Self::base(ModelKind::Heisenberg2d, lx, ly) }
    }

    pub fn sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn ops(&self) -> OperatorSet {
        match self.kind {
            ModelKind::Hubbard => fermion_ops(),
            _ => spin_ops(),
        }
    }

    pub fn phys_dim(&self) -> usize {
        self.ops().phys_dim()
    }

    /// Adds onsite terms; zero coefficients are skipped.
    pub fn add_pinning(mut self, terms: &[(usize, DenseTensor, Scalar)]) -> Result<Self> {
        let d = self.phys_dim();
        for (site, op, coef) in terms {
            if *site >= self.sites() {
                return Err(Error::OutOfRange { index: *site, len: self.sites() });
            }
            if op.dims() != [d, d] {
                return Err(Error::MpoShape(format!("pinning operator dims {:?} on a site of dimension {d}", op.dims())));
            }
            if coef.abs() != 0.0 {
                self.pins.push(Pin { site: *site, op: op.clone(), coef: *coef });
            }
        }
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let min = if self.kind == ModelKind::Heisenberg2d { 1 } else { 2 };
        if self.lx < min || self.ly < 1 || self.sites() < 2 {
            return Err(Error::MpoShape(format!("model needs at least two sites, got {}x{}", self.lx, self.ly)));
        }
        Ok(())
    }

    pub fn mpo(&self) -> Result<Mpo> {
        self.validate()?;
        let ops = self.ops();
        let n = self.sites();
        make_mpo(n, |i| {
            let mut b = match self.kind {
                ModelKind::Heisenberg => heisenberg_block(&ops, self.j)?,
                ModelKind::Tfim => tfim_block(&ops, self.g)?,
                ModelKind::Hubbard => hubbard_block(&ops, self.t, self.u, self.mu)?,
                ModelKind::Heisenberg2d => {
                    let (x, y) = (i / self.ly, i % self.ly);
                    heisenberg2d_block(&ops, self.j, self.ly, y + 1 < self.ly, x + 1 < self.lx)?
                }
            };
            let last = b.rows() - 1;
            for p in self.pins.iter().filter(|p| p.site == i) {
                b.add(last, 0, p.coef, &p.op)?;
            }
            Ok(b)
        })
    }
}

fn heisenberg_block(ops: &OperatorSet, j: f64) -> Result<Block> {
    let mut b = Block::new(5, 5, 2);
    b.set(0, 0, 1.0, ops.op("Id"))?;
    b.set(1, 0, 0.5, ops.op("S+"))?;
    b.set(2, 0, 0.5, ops.op("S-"))?;
    b.set(3, 0, 1.0, ops.op("Sz"))?;
    b.set(4, 1, j, ops.op("S-"))?;
    b.set(4, 2, j, ops.op("S+"))?;
    b.set(4, 3, j, ops.op("Sz"))?;
    b.set(4, 4, 1.0, ops.op("Id"))?;
    Ok(b)
}

fn tfim_block(ops: &OperatorSet, g: f64) -> Result<Block> {
    let mut b = Block::new(3, 3, 2);
    b.set(0, 0, 1.0, ops.op("Id"))?;
    b.set(1, 0, 1.0, ops.op("Sz"))?;
    b.set(2, 0, g, ops.op("Sx"))?;
    b.set(2, 1, 1.0, ops.op("Sz"))?;
    b.set(2, 2, 1.0, ops.op("Id"))?;
    Ok(b)
}

fn hubbard_block(ops: &OperatorSet, t: f64, u: f64, mu: f64) -> Result<Block> {
    let f = ops.op("F");
    let with_f = |name: &str| op_product(ops.op(name), f);
    let mut onsite = ops.op("N").scale(mu);
    onsite.axpy(u, &op_product(ops.op("Nup"), ops.op("Ndn"))?)?;

    let mut b = Block::new(6, 6, 4);
    b.set(0, 0, 1.0, ops.op("Id"))?;
    b.set(1, 0, -t, ops.op("Cdagup"))?;
    b.set(2, 0, t, ops.op("Cup"))?;
    b.set(3, 0, -t, ops.op("Cdagdn"))?;
    b.set(4, 0, t, ops.op("Cdn"))?;
    b.set(5, 0, 1.0, &onsite)?;
    b.set(5, 1, 1.0, &with_f("Cup")?)?;
    b.set(5, 2, 1.0, &with_f("Cdagup")?)?;
    b.set(5, 3, 1.0, &with_f("Cdn")?)?;
    b.set(5, 4, 1.0, &with_f("Cdagdn")?)?;
    b.set(5, 5, 1.0, ops.op("Id"))?;
    Ok(b)
}

/// Snake-path block for a column of height `ly`. Each spin channel gets a
/// ladder of `ly` identity-carrying rows so that an operator emitted on the
/// bottom row meets its partner either 1 site later (vertical bond, only if
/// `vertical`) or `ly` sites later (horizontal bond, only if `horizontal`).
fn heisenberg2d_block(ops: &OperatorSet, j: f64, ly: usize, vertical: bool, horizontal: bool) -> Result<Block> {
    let dim = 3 * ly + 2;
    let last = dim - 1;
    let mut b = Block::new(dim, dim, 2);
    b.set(0, 0, 1.0, ops.op("Id"))?;
    b.set(last, last, 1.0, ops.op("Id"))?;
    let channels = [("S+", 0.5, "S-"), ("S-", 0.5, "S+"), ("Sz", 1.0, "Sz")];
    for (c, (first, coef, partner)) in channels.into_iter().enumerate() {
        let base = 1 + c * ly;
        b.set(base, 0, coef, ops.op(first))?;
        for k in 1..ly {
            b.set(base + k, base + k - 1, 1.0, ops.op("Id"))?;
        }
        if vertical && ly > 1 {
            b.set(last, base, j, ops.op(partner))?;
        }
        if horizontal {
            b.set(last, base + ly - 1, j, ops.op(partner))?;
        }
    }
    Ok(b)
}

pub fn heisenberg_mpo(j: f64, n: usize) -> Result<Mpo> {
    ModelSpec::heisenberg(j, n).mpo()
}

pub fn tfim_mpo(g: f64, n: usize) -> Result<Mpo> {
    ModelSpec::tfim(g, n).mpo()
}

pub fn hubbard_mpo(t: f64, u: f64, mu: f64, n: usize) -> Result<Mpo> {
    ModelSpec::hubbard(t, u, mu, n).mpo()
}

pub fn heisenberg2d_mpo(j: f64, lx: usize, ly: usize) -> Result<Mpo> {
    ModelSpec::heisenberg2d(j, lx, ly).mpo()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::contract;

    fn commutator(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
        let mut c = op_product(a, b).unwrap();
        c.axpy(-1.0, &op_product(b, a).unwrap()).unwrap();
        c
    }

    fn anticommutator(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
        let mut c = op_product(a, b).unwrap();
        c.axpy(1.0, &op_product(b, a).unwrap()).unwrap();
        c
    }

    #[test]
    fn spin_algebra() {
        let s = spin_ops();
        let i = Complex64::new(0.0, 1.0);
        let pairs = [("Sx", "Sy", "Sz"), ("Sy", "Sz", "Sx"), ("Sz", "Sx", "Sy")];
        for (a, b, c) in pairs {
            let lhs = commutator(s.op(a), s.op(b));
            assert_eq!(lhs.max_abs_diff(&s.op(c).scale(i)).unwrap(), 0.0);
        }
        let mut sp = s.op("Sx").clone();
        sp.axpy(i, s.op("Sy")).unwrap();
        assert_eq!(sp.max_abs_diff(s.op("S+")).unwrap(), 0.0);
        assert_eq!(commutator(s.op("Sz"), s.op("S+")).max_abs_diff(s.op("S+")).unwrap(), 0.0);
        assert_eq!(commutator(s.op("Sz"), s.op("S-")).max_abs_diff(&s.op("S-").scale(-1.0)).unwrap(), 0.0);
    }

    #[test]
    fn fermion_matrices() {
        let f = fermion_ops();
        let cdu = f.op("Cdagup");
        assert_eq!(cdu.get(&[1, 0]).re(), 1.0);
        assert_eq!(cdu.get(&[3, 2]).re(), 1.0);
        assert_eq!(f.op("Cdagdn").get(&[3, 1]).re(), -1.0);
        assert_eq!(f.op("F").diagonal().unwrap().iter().map(|x| x.re()).collect::<Vec<_>>(), vec![1., -1., -1., 1.]);
        let id = DenseTensor::identity(4);
        assert_eq!(op_product(f.op("F"), f.op("F")).unwrap(), id);
        for (c, cd) in [("Cup", "Cdagup"), ("Cdn", "Cdagdn")] {
            assert_eq!(anticommutator(f.op(c), f.op(cd)).max_abs_diff(&id).unwrap(), 0.0);
            assert_eq!(op_product(f.op(cd), f.op(cd)).unwrap().max_abs(), 0.0);
            for x in [c, cd] {
                assert_eq!(anticommutator(f.op("F"), f.op(x)).max_abs(), 0.0);
            }
        }
        // different spin species anticommute on the same site
        assert_eq!(anticommutator(f.op("Cup"), f.op("Cdagdn")).max_abs(), 0.0);
        assert_eq!(anticommutator(f.op("Cdagup"), f.op("Cdagdn")).max_abs(), 0.0);
    }

    #[test]
    fn bulk_link_dimensions() {
        let h = hubbard_mpo(1.0, 4.0, -2.0, 5).unwrap();
        assert_eq!(h.dims(2).unwrap(), vec![6, 4, 4, 6]);
        let h2 = heisenberg2d_mpo(1.0, 4, 4).unwrap();
        assert_eq!(h2.link_dims().unwrap()[6], 14);
        let h1 = heisenberg2d_mpo(1.0, 5, 1).unwrap();
        assert_eq!(h1.link_dims().unwrap(), vec![5; 4]);
        assert_eq!(tfim_mpo(0.5, 4).unwrap().link_dims().unwrap(), vec![3; 3]);
    }

    #[test]
    fn block_contents_follow_the_layout() {
        let ops = spin_ops();
        let b = heisenberg2d_block(&ops, 1.0, 4, true, true);
        let b = b.unwrap();
        assert_eq!(b.rows(), 14);
        let bottom: Vec<usize> = (0..14).filter(|&c| b.get(13, c).is_some()).collect();
        assert_eq!(bottom, vec![1, 4, 5, 8, 9, 12, 13]);
        assert_eq!(b.get(13, 1).unwrap(), ops.op("S-"));
        assert_eq!(b.get(13, 5).unwrap(), ops.op("S+"));
        assert_eq!(b.get(1, 0).unwrap(), &ops.op("S+").scale(0.5));
        assert_eq!(b.get(5, 0).unwrap(), &ops.op("S-").scale(0.5));
        assert_eq!(b.get(9, 0).unwrap(), ops.op("Sz"));
        for base in [1, 5, 9] {
            for k in 1..4 {
                assert_eq!(b.get(base + k, base + k - 1).unwrap(), ops.op("Id"));
            }
        }
        // top edge of a column: no vertical partner
        let top = heisenberg2d_block(&ops, 1.0, 4, false, true).unwrap();
        assert!(top.get(13, 1).is_none() && top.get(13, 4).is_some());
    }

    #[test]
    fn pinning_validation() {
        let s = spin_ops();
        let m = ModelSpec::heisenberg(1.0, 2);
        assert!(matches!(
            m.clone().add_pinning(&[(2, s.op("Sz").clone(), Scalar::Real(1.0))]),
            Err(Error::OutOfRange { .. })
        ));
        let same = m.clone().add_pinning(&[(0, s.op("Sz").clone(), Scalar::Real(0.0))]).unwrap();
        assert!(same.pins.is_empty());
        let a = same.mpo().unwrap().tensors().unwrap();
        let b = m.mpo().unwrap().tensors().unwrap();
        assert_eq!(a, b);
        let _ = contract;
    }
}
