//! Rank-fluid dense tensors and the basic operations on them.
//!
//! A [`DenseTensor`] is nothing more than a list of index dimensions and a
//! flat buffer of scalars. Elements are linearized with the leftmost index
//! varying fastest, so a rank-2 tensor is a column-major matrix and grouping
//! neighbouring indices together never moves data.
//!
//! Every contraction is lowered onto a single matrix product: the contracted
//! indices of the left operand are moved to the right, those of the right
//! operand to the left, both are grouped into matrices and multiplied. Operands
//! that already have the right layout (or its transpose) are used in place.

use std::borrow::Cow;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub};

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef};
pub use num_complex::Complex64;

use crate::error::{Error, Result};

/// A single real or complex 64-bit value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scalar {
    Real(f64),
    Complex(Complex64),
}

impl Scalar {
    pub const ZERO: Scalar = Scalar::Real(0.0);
    pub const ONE: Scalar = Scalar::Real(1.0);

    pub fn re(self) -> f64 {
        match self {
            Scalar::Real(x) => x,
            Scalar::Complex(z) => z.re,
        }
    }

    pub fn im(self) -> f64 {
        match self {
            Scalar::Real(_) => 0.0,
            Scalar::Complex(z) => z.im,
        }
    }

    pub fn to_c64(self) -> Complex64 {
        match self {
            Scalar::Real(x) => Complex64::new(x, 0.0),
            Scalar::Complex(z) => z,
        }
    }

    pub fn abs(self) -> f64 {
        match self {
            Scalar::Real(x) => x.abs(),
            Scalar::Complex(z) => z.norm(),
        }
    }

    pub fn conj(self) -> Scalar {
        match self {
            Scalar::Real(x) => Scalar::Real(x),
            Scalar::Complex(z) => Scalar::Complex(z.conj()),
        }
    }

    /// True when the value carries a complex type, even if its imaginary part is zero.
    pub fn is_complex(self) -> bool {
        matches!(self, Scalar::Complex(_))
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Self {
        Scalar::Real(x)
    }
}

impl From<Complex64> for Scalar {
    fn from(z: Complex64) -> Self {
        Scalar::Complex(z)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Real(x) => write!(f, "{x}"),
            Scalar::Complex(z) => write!(f, "{z}"),
        }
    }
}

/// Element buffer of a tensor.
#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Storage {
    pub fn len(&self) -> usize {
        match self {
            Storage::Real(v) => v.len(),
            Storage::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Element types a tensor can hold. Implemented for `f64` and `Complex64`.
pub(crate) trait Elem:
    faer::traits::ComplexField<Real = f64>
    + Copy
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + MulAssign
{
    const ZERO: Self;
    fn real(x: f64) -> Self;
    fn conj_elem(self) -> Self;
    fn abs2(self) -> f64;
    fn to_c64(self) -> Complex64;
    /// Converts a scalar; the imaginary part is dropped for real element types.
    fn from_scalar(s: Scalar) -> Self;
    fn view(s: &Storage) -> Option<&[Self]>;
    fn wrap(v: Vec<Self>) -> Storage;
}

impl Elem for f64 {
    const ZERO: Self = 0.0;
    fn real(x: f64) -> Self {
        x
    }
    fn conj_elem(self) -> Self {
        self
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn from_scalar(s: Scalar) -> Self {
        s.re()
    }
    fn view(s: &Storage) -> Option<&[Self]> {
        match s {
            Storage::Real(v) => Some(v),
            Storage::Complex(_) => None,
        }
    }
    fn wrap(v: Vec<Self>) -> Storage {
        Storage::Real(v)
    }
}

impl Elem for Complex64 {
    const ZERO: Self = Complex64::new(0.0, 0.0);
    fn real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj_elem(self) -> Self {
        self.conj()
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn to_c64(self) -> Complex64 {
        self
    }
    fn from_scalar(s: Scalar) -> Self {
        s.to_c64()
    }
    fn view(s: &Storage) -> Option<&[Self]> {
        match s {
            Storage::Complex(v) => Some(v),
            Storage::Real(_) => None,
        }
    }
    fn wrap(v: Vec<Self>) -> Storage {
        Storage::Complex(v)
    }
}

/// Dense tensor of arbitrary rank holding real or complex 64-bit scalars.
///
/// Invariant: `dims.iter().product() == data.len()`. A rank-0 tensor has empty
/// `dims` and exactly one element.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Storage,
}

fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Storage) -> Result<Self> {
        let expected = product(&dims);
        if expected != data.len() {
            return Err(Error::Size { dims, expected, found: data.len() });
        }
        Ok(Self { dims, data })
    }

    pub fn from_real(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(dims, Storage::Real(data))
    }

    pub fn from_complex(dims: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        Self::new(dims, Storage::Complex(data))
    }

    pub(crate) fn from_elems<T: Elem>(dims: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(product(&dims), data.len());
        Self { dims, data: T::wrap(data) }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self { dims: dims.to_vec(), data: Storage::Real(vec![0.0; product(dims)]) }
    }

    pub fn zeros_complex(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            data: Storage::Complex(vec![Complex64::new(0.0, 0.0); product(dims)]),
        }
    }

    pub fn ones(dims: &[usize]) -> Self {
        Self { dims: dims.to_vec(), data: Storage::Real(vec![1.0; product(dims)]) }
    }

    pub fn scalar(s: Scalar) -> Self {
        match s {
            Scalar::Real(x) => Self { dims: vec![], data: Storage::Real(vec![x]) },
            Scalar::Complex(z) => Self { dims: vec![], data: Storage::Complex(vec![z]) },
        }
    }

    /// `n x n` identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i + n * i] = 1.0;
        }
        Self { dims: vec![n, n], data: Storage::Real(data) }
    }

    /// Real `rows x cols` matrix from row-major nested rows, the way matrices are written on paper.
    pub fn real_matrix(rows: &[&[f64]]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        let mut data = vec![0.0; nrows * ncols];
        for (i, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                data[i + nrows * j] = x;
            }
        }
        Ok(Self { dims: vec![nrows, ncols], data: Storage::Real(data) })
    }

    /// Builds a tensor by evaluating `f` at every multi-index. The result is
    /// complex if any returned value is complex.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> Scalar) -> Self {
        let n = product(dims);
        let mut idx = vec![0usize; dims.len()];
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f(&idx));
            for (k, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < dims[k] {
                    break;
                }
                *i = 0;
            }
        }
        let data = if values.iter().any(|s| s.is_complex()) {
            Storage::Complex(values.into_iter().map(Scalar::to_c64).collect())
        } else {
            Storage::Real(values.into_iter().map(Scalar::re).collect())
        };
        Self { dims: dims.to_vec(), data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.dims[axis]
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn storage(&self) -> &Storage {
        &self.data
    }

    pub fn into_storage(self) -> Storage {
        self.data
    }

    pub fn is_complex(&self) -> bool {
        matches!(self.data, Storage::Complex(_))
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        f64::view(&self.data)
    }

    pub fn as_complex(&self) -> Option<&[Complex64]> {
        Complex64::view(&self.data)
    }

    /// Elements as complex numbers, borrowing when already complex.
    pub fn complex_data(&self) -> Cow<'_, [Complex64]> {
        match &self.data {
            Storage::Complex(v) => Cow::Borrowed(v),
            Storage::Real(v) => Cow::Owned(v.iter().map(|&x| Complex64::new(x, 0.0)).collect()),
        }
    }

    /// Promotes to complex storage (no-op when already complex).
    pub fn into_complex(self) -> Self {
        match self.data {
            Storage::Complex(_) => self,
            Storage::Real(v) => Self {
                dims: self.dims,
                data: Storage::Complex(v.into_iter().map(|x| Complex64::new(x, 0.0)).collect()),
            },
        }
    }

    /// Linear position of a multi-index (leftmost index fastest).
    pub fn linear_index(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.rank(), "multi-index has wrong rank");
        let mut pos = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            assert!(i < d, "index {i} out of range for dimension {d}");
            pos += i * stride;
            stride *= d;
        }
        pos
    }

    pub fn get(&self, idx: &[usize]) -> Scalar {
        self.at(self.linear_index(idx))
    }

    /// Element at a linear position.
    pub fn at(&self, pos: usize) -> Scalar {
        match &self.data {
            Storage::Real(v) => Scalar::Real(v[pos]),
            Storage::Complex(v) => Scalar::Complex(v[pos]),
        }
    }

    pub fn set(&mut self, idx: &[usize], value: Scalar) {
        let pos = self.linear_index(idx);
        if value.is_complex() && !self.is_complex() {
            let promoted = std::mem::replace(self, Self::zeros(&[]));
            *self = promoted.into_complex();
        }
        match &mut self.data {
            Storage::Real(v) => v[pos] = value.re(),
            Storage::Complex(v) => v[pos] = value.to_c64(),
        }
    }

    /// Value of a one-element tensor of any rank.
    pub fn to_scalar(&self) -> Result<Scalar> {
        if self.len() != 1 {
            return Err(Error::Shape(format!("tensor with dims {:?} is not a scalar", self.dims)));
        }
        Ok(self.at(0))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        match &self.data {
            Storage::Real(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Storage::Complex(v) => v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
        }
    }

    /// Largest element modulus.
    pub fn max_abs(&self) -> f64 {
        match &self.data {
            Storage::Real(v) => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Storage::Complex(v) => v.iter().fold(0.0, |m, z| m.max(z.norm())),
        }
    }

    pub fn conj(&self) -> Self {
        match &self.data {
            Storage::Real(_) => self.clone(),
            Storage::Complex(v) => Self {
                dims: self.dims.clone(),
                data: Storage::Complex(v.iter().map(|z| z.conj()).collect()),
            },
        }
    }

    /// Drops imaginary parts.
    pub fn real_part(&self) -> Self {
        match &self.data {
            Storage::Real(_) => self.clone(),
            Storage::Complex(v) => Self {
                dims: self.dims.clone(),
                data: Storage::Real(v.iter().map(|z| z.re).collect()),
            },
        }
    }

    pub fn scale(&self, s: impl Into<Scalar>) -> Self {
        let mut out = self.clone();
        out.scale_mut(s);
        out
    }

    pub fn scale_mut(&mut self, s: impl Into<Scalar>) {
        let s = s.into();
        if s.is_complex() && !self.is_complex() {
            let promoted = std::mem::replace(self, Self::zeros(&[]));
            *self = promoted.into_complex();
        }
        match &mut self.data {
            Storage::Real(v) => {
                let a = s.re();
                v.iter_mut().for_each(|x| *x *= a);
            }
            Storage::Complex(v) => {
                let a = s.to_c64();
                v.iter_mut().for_each(|z| *z *= a);
            }
        }
    }

    /// `self += alpha * x`, promoting `self` to complex when needed.
    pub fn axpy(&mut self, alpha: impl Into<Scalar>, x: &DenseTensor) -> Result<()> {
        if self.dims != x.dims {
            return Err(Error::AxpyShape { expected: self.dims.clone(), found: x.dims.clone() });
        }
        let alpha = alpha.into();
        if (alpha.is_complex() || x.is_complex()) && !self.is_complex() {
            let promoted = std::mem::replace(self, Self::zeros(&[]));
            *self = promoted.into_complex();
        }
        match &mut self.data {
            Storage::Real(v) => {
                let a = alpha.re();
                let xs = x.as_real().expect("real operand");
                v.iter_mut().zip(xs).for_each(|(y, &xv)| *y += a * xv);
            }
            Storage::Complex(v) => {
                let a = alpha.to_c64();
                let xs = x.complex_data();
                v.iter_mut().zip(xs.iter()).for_each(|(y, &xv)| *y += a * xv);
            }
        }
        Ok(())
    }

    /// Reorders indices: output index `k` is input index `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.rank())?;
        let dims: Vec<usize> = order.iter().map(|&o| self.dims[o]).collect();
        let data = match &self.data {
            Storage::Real(v) => Storage::Real(permute_data(v, &self.dims, order)),
            Storage::Complex(v) => Storage::Complex(permute_data(v, &self.dims, order)),
        };
        Ok(Self { dims, data })
    }

    /// Groups indices into new combined indices. Groups that are not already
    /// sequential trigger a permutation first; sequential groups only touch
    /// the dimension list.
    pub fn reshape_group<G: AsRef<[usize]>>(&self, groups: &[G]) -> Result<Self> {
        let order: Vec<usize> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
        if check_permutation(&order, self.rank()).is_err() {
            return Err(Error::InvalidGroups {
                groups: groups.iter().map(|g| g.as_ref().to_vec()).collect(),
                rank: self.rank(),
            });
        }
        let dims = groups
            .iter()
            .map(|g| g.as_ref().iter().map(|&i| self.dims[i]).product())
            .collect();
        let base = if is_identity(&order) { Cow::Borrowed(self) } else { Cow::Owned(self.permute(&order)?) };
        Ok(Self { dims, data: base.into_owned().data })
    }

    /// Replaces the dimension list, keeping the data untouched.
    pub fn unreshape(&self, dims: &[usize]) -> Result<Self> {
        self.clone().into_unreshape(dims)
    }

    pub fn into_unreshape(self, dims: &[usize]) -> Result<Self> {
        let expected = product(dims);
        if expected != self.len() {
            return Err(Error::Size { dims: dims.to_vec(), expected, found: self.len() });
        }
        Ok(Self { dims: dims.to_vec(), data: self.data })
    }

    /// Diagonal of a square matrix.
    pub fn diagonal(&self) -> Result<Vec<Scalar>> {
        if self.rank() != 2 || self.dims[0] != self.dims[1] {
            return Err(Error::Shape(format!("diagonal needs a square matrix, got {:?}", self.dims)));
        }
        let n = self.dims[0];
        Ok((0..n).map(|i| self.at(i + n * i)).collect())
    }

    /// Conjugate transpose of a matrix.
    pub fn adjoint(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::Shape(format!("adjoint needs a matrix, got {:?}", self.dims)));
        }
        Ok(self.permute(&[1, 0])?.conj())
    }

    /// Largest elementwise difference to another tensor of the same dims.
    pub fn max_abs_diff(&self, other: &DenseTensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("dims {:?} vs {:?}", self.dims, other.dims)));
        }
        let a = self.complex_data();
        let b = other.complex_data();
        Ok(a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).norm())))
    }
}

fn is_identity(order: &[usize]) -> bool {
    order.iter().enumerate().all(|(i, &o)| i == o)
}

fn check_permutation(order: &[usize], rank: usize) -> Result<()> {
    let mut seen = vec![false; rank];
    let ok = order.len() == rank
        && order.iter().all(|&o| {
            if o >= rank || seen[o] {
                return false;
            }
            seen[o] = true;
            true
        });
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidPermutation { order: order.to_vec(), rank })
    }
}

/// Gathers `data` into the permuted layout, walking the output in order.
///
/// Output axes that stay adjacent in the input are fused first; the two
/// leading fused axes form the inner kernel so short leading dimensions do
/// not pay the odometer cost per element.
fn permute_data<T: Copy>(data: &[T], dims: &[usize], order: &[usize]) -> Vec<T> {
    let rank = dims.len();
    if rank == 0 || data.is_empty() || is_identity(order) {
        return data.to_vec();
    }
    let mut in_strides = vec![1usize; rank];
    for i in 1..rank {
        in_strides[i] = in_strides[i - 1] * dims[i - 1];
    }
    // (dim, input stride) per output axis, unit axes dropped, contiguous runs fused
    let mut axes: Vec<(usize, usize)> = Vec::with_capacity(rank);
    for &o in order {
        let (d, s) = (dims[o], in_strides[o]);
        if d == 1 {
            continue;
        }
        match axes.last_mut() {
            Some((pd, ps)) if *ps * *pd == s => *pd *= d,
            _ => axes.push((d, s)),
        }
    }
    if axes.len() <= 1 {
        return data.to_vec();
    }
    let (d0, s0) = axes[0];
    let (d1, s1) = axes[1];
    let outer = &axes[2..];

    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; outer.len()];
    let mut base = 0usize;
    loop {
        for j in 0..d1 {
            let b = base + j * s1;
            if s0 == 1 {
                out.extend_from_slice(&data[b..b + d0]);
            } else {
                out.extend((0..d0).map(|i| data[b + i * s0]));
            }
        }
        let mut k = 0;
        loop {
            if k == outer.len() {
                return out;
            }
            let (d, s) = outer[k];
            idx[k] += 1;
            base += s;
            if idx[k] < d {
                break;
            }
            base -= s * d;
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Options for [`contract_with`]. The default is a plain product.
#[derive(Clone, Copy, Debug)]
pub struct ContractOptions<'a> {
    pub conj_a: bool,
    pub conj_b: bool,
    pub alpha: Scalar,
    pub beta: Scalar,
    /// Added as `beta * addend`; must have the dims of the final result.
    pub addend: Option<&'a DenseTensor>,
    /// Final permutation applied to the result indices.
    pub out_order: Option<&'a [usize]>,
}

impl Default for ContractOptions<'_> {
    fn default() -> Self {
        Self { conj_a: false, conj_b: false, alpha: Scalar::ONE, beta: Scalar::ONE, addend: None, out_order: None }
    }
}

/// Contracts `axes_a` of `a` with `axes_b` of `b` pairwise. Result indices are
/// the free indices of `a` followed by the free indices of `b`.
pub fn contract(a: &DenseTensor, axes_a: &[usize], b: &DenseTensor, axes_b: &[usize]) -> Result<DenseTensor> {
    contract_with(a, axes_a, b, axes_b, &ContractOptions::default())
}

/// Like [`contract`] with `a` complex conjugated.
pub fn ccontract(a: &DenseTensor, axes_a: &[usize], b: &DenseTensor, axes_b: &[usize]) -> Result<DenseTensor> {
    contract_with(a, axes_a, b, axes_b, &ContractOptions { conj_a: true, ..Default::default() })
}

/// Full contraction `<a|b>` over every index, `a` conjugated.
pub fn inner(a: &DenseTensor, b: &DenseTensor) -> Result<Scalar> {
    if a.dims != b.dims {
        return Err(Error::ContractionShape(format!("inner product of {:?} and {:?}", a.dims, b.dims)));
    }
    Ok(match (&a.data, &b.data) {
        (Storage::Real(x), Storage::Real(y)) => Scalar::Real(x.iter().zip(y).map(|(p, q)| p * q).sum()),
        _ => {
            let x = a.complex_data();
            let y = b.complex_data();
            Scalar::Complex(x.iter().zip(y.iter()).map(|(p, q)| p.conj() * q).sum())
        }
    })
}

pub fn contract_with(
    a: &DenseTensor,
    axes_a: &[usize],
    b: &DenseTensor,
    axes_b: &[usize],
    opts: &ContractOptions<'_>,
) -> Result<DenseTensor> {
    if axes_a.len() != axes_b.len() {
        return Err(Error::ContractionShape(format!(
            "{} axes of a paired with {} axes of b",
            axes_a.len(),
            axes_b.len()
        )));
    }
    let free_a = free_axes(axes_a, a.rank(), "a")?;
    let free_b = free_axes(axes_b, b.rank(), "b")?;
    for (&i, &j) in axes_a.iter().zip(axes_b) {
        if a.dims[i] != b.dims[j] {
            return Err(Error::ContractionShape(format!(
                "axis {i} of a has dim {} but axis {j} of b has dim {}",
                a.dims[i], b.dims[j]
            )));
        }
    }

    let m: usize = free_a.iter().map(|&i| a.dims[i]).product();
    let n: usize = free_b.iter().map(|&i| b.dims[i]).product();
    let k: usize = axes_a.iter().map(|&i| a.dims[i]).product();
    let mut dims: Vec<usize> = free_a.iter().map(|&i| a.dims[i]).chain(free_b.iter().map(|&i| b.dims[i])).collect();

    let complex = a.is_complex()
        || b.is_complex()
        || opts.alpha.is_complex()
        || (opts.addend.is_some() && (opts.beta.is_complex() || opts.addend.is_some_and(DenseTensor::is_complex)));

    let rhs = operand_layout(b, &free_b, axes_b, false)?;
    let mut out = if let Some(split) = batched_split(a, axes_a, free_b.len(), opts.out_order) {
        // a = (P, C, Q) with the result wanted as (P, F, Q): one product per Q slice
        let rows: usize = a.dims[..split].iter().product();
        let shape = (rows, k, n, m / rows.max(1));
        let data = if complex {
            Storage::Complex(batched_elems::<Complex64>(a, &rhs, shape, opts.conj_a, opts.conj_b, opts.alpha)?)
        } else {
            Storage::Real(batched_elems::<f64>(a, &rhs, shape, opts.conj_a, opts.conj_b, opts.alpha)?)
        };
        let order = opts.out_order.unwrap_or_default();
        DenseTensor { dims: order.iter().map(|&o| dims[o]).collect(), data }
    } else {
        let lhs = operand_layout(a, &free_a, axes_a, true)?;
        let data = if complex {
            Storage::Complex(matmul_elems::<Complex64>(&lhs, &rhs, m, k, n, opts.conj_a, opts.conj_b, opts.alpha)?)
        } else {
            Storage::Real(matmul_elems::<f64>(&lhs, &rhs, m, k, n, opts.conj_a, opts.conj_b, opts.alpha)?)
        };
        let mut out = DenseTensor { dims: std::mem::take(&mut dims), data };
        if let Some(order) = opts.out_order {
            out = out.permute(order)?;
        }
        out
    };
    if let Some(add) = opts.addend {
        if add.dims != out.dims {
            return Err(Error::AxpyShape { expected: out.dims.clone(), found: add.dims.clone() });
        }
        out.axpy(opts.beta, add)?;
    }
    Ok(out)
}

/// Position of the contracted block when `axes_a` is a run strictly inside
/// `a` and `out_order` moves the free indices of `b` into its place.
fn batched_split(a: &DenseTensor, axes_a: &[usize], free_b: usize, out_order: Option<&[usize]>) -> Option<usize> {
    let order = out_order?;
    let p = *axes_a.first()?;
    if p == 0 || axes_a.iter().enumerate().any(|(i, &x)| x != p + i) {
        return None;
    }
    let q = a.rank().checked_sub(p + axes_a.len()).filter(|&q| q > 0)?;
    let want = (0..p).chain(p + q..p + q + free_b).chain(p..p + q);
    (order.len() == p + q + free_b && want.eq(order.iter().copied())).then_some(p)
}

/// Sets the thread count used by the dense kernels; `0` or `1` runs
/// everything on the calling thread.
pub fn set_threads(k: usize) {
    faer::set_global_parallelism(if k <= 1 { faer::Par::Seq } else { faer::Par::rayon(k) });
}

/// Thread dispatch costs more than it saves on small products.
fn parallelism(work: usize) -> faer::Par {
    if work < 1 << 20 {
        faer::Par::Seq
    } else {
        faer::get_global_parallelism()
    }
}

/// `shape` is `(rows, k, n, batches)`: `batches` products of a `rows x k`
/// slice of `a` with the same `k x n` right operand.
fn batched_elems<T: Elem>(
    a: &DenseTensor,
    rhs: &Operand<'_>,
    (rows, k, n, batches): (usize, usize, usize, usize),
    conj_l: bool,
    conj_r: bool,
    alpha: Scalar,
) -> Result<Vec<T>> {
    let av = elems_of::<T>(a);
    let b = elems_of::<T>(&rhs.tensor);
    let b_view = if rhs.transposed {
        MatRef::from_column_major_slice(&b[..], n, k).transpose()
    } else {
        MatRef::from_column_major_slice(&b[..], k, n)
    };
    let b_view = if conj_r { b_view.conjugate().to_owned() } else { b_view.to_owned() };
    let mut out = vec![T::ZERO; rows * n * batches];
    if rows * n == 0 {
        return Ok(out);
    }
    let alpha = T::from_scalar(alpha);
    let par = parallelism(rows * k * n);
    for (q, dst) in out.chunks_exact_mut(rows * n).enumerate() {
        let a_view = MatRef::from_column_major_slice(&av[q * rows * k..(q + 1) * rows * k], rows, k);
        let dst = MatMut::from_column_major_slice_mut(dst, rows, n);
        if conj_l {
            matmul(dst, Accum::Replace, a_view.conjugate(), b_view.as_ref(), alpha, par);
        } else {
            matmul(dst, Accum::Replace, a_view, b_view.as_ref(), alpha, par);
        }
    }
    Ok(out)
}

fn free_axes(axes: &[usize], rank: usize, which: &str) -> Result<Vec<usize>> {
    let mut used = vec![false; rank];
    for &ax in axes {
        if ax >= rank || used[ax] {
            return Err(Error::ContractionShape(format!(
                "axis list {axes:?} is invalid for rank-{rank} tensor {which}"
            )));
        }
        used[ax] = true;
    }
    Ok((0..rank).filter(|&i| !used[i]).collect())
}

/// An operand laid out as a column-major matrix, possibly stored transposed.
struct Operand<'t> {
    tensor: Cow<'t, DenseTensor>,
    transposed: bool,
}

/// For the left operand the wanted matrix is `free x contracted`; for the right
/// one it is `contracted x free`.
fn operand_layout<'t>(t: &'t DenseTensor, free: &[usize], axes: &[usize], left: bool) -> Result<Operand<'t>> {
    let (first, second) = if left { (free, axes) } else { (axes, free) };
    let direct: Vec<usize> = first.iter().chain(second).copied().collect();
    if is_identity(&direct) {
        return Ok(Operand { tensor: Cow::Borrowed(t), transposed: false });
    }
    let swapped: Vec<usize> = second.iter().chain(first).copied().collect();
    if is_identity(&swapped) {
        return Ok(Operand { tensor: Cow::Borrowed(t), transposed: true });
    }
    Ok(Operand { tensor: Cow::Owned(t.permute(&direct)?), transposed: false })
}

fn elems_of<'t, T: Elem>(t: &'t DenseTensor) -> Cow<'t, [T]> {
    if let Some(v) = T::view(&t.data) {
        return Cow::Borrowed(v);
    }
    // Only real -> complex promotion reaches here.
    let promoted: Vec<T> = match &t.data {
        Storage::Real(v) => v.iter().map(|&x| T::from_scalar(Scalar::Real(x))).collect(),
        Storage::Complex(v) => v.iter().map(|&z| T::from_scalar(Scalar::Complex(z))).collect(),
    };
    Cow::Owned(promoted)
}

#[allow(clippy::too_many_arguments)]
fn matmul_elems<T: Elem>(
    lhs: &Operand<'_>,
    rhs: &Operand<'_>,
    m: usize,
    k: usize,
    n: usize,
    conj_l: bool,
    conj_r: bool,
    alpha: Scalar,
) -> Result<Vec<T>> {
    let a = elems_of::<T>(&lhs.tensor);
    let b = elems_of::<T>(&rhs.tensor);
    let a_view = if lhs.transposed {
        MatRef::from_column_major_slice(&a[..], k, m).transpose()
    } else {
        MatRef::from_column_major_slice(&a[..], m, k)
    };
    let b_view = if rhs.transposed {
        MatRef::from_column_major_slice(&b[..], n, k).transpose()
    } else {
        MatRef::from_column_major_slice(&b[..], k, n)
    };
    let mut out = vec![T::ZERO; m * n];
    let dst = MatMut::from_column_major_slice_mut(&mut out, m, n);
    let alpha = T::from_scalar(alpha);
    let par = parallelism(m * k * n);
    match (conj_l, conj_r) {
        (false, false) => matmul(dst, Accum::Replace, a_view, b_view, alpha, par),
        (true, false) => matmul(dst, Accum::Replace, a_view.conjugate(), b_view, alpha, par),
        (false, true) => matmul(dst, Accum::Replace, a_view, b_view.conjugate(), alpha, par),
        (true, true) => matmul(dst, Accum::Replace, a_view.conjugate(), b_view.conjugate(), alpha, par),
    }
    Ok(out)
}
