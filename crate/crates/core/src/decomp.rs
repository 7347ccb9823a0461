//! Truncating matrix-equivalent decompositions.
//!
//! Every routine here takes a tensor plus two index groups, fuses the groups
//! into a matrix, factorizes it and unreshapes the factors back onto the
//! original index shapes with one new link index in between.

use faer::{MatRef, Side};

use crate::error::{Error, Result};
use crate::tensor::{Complex64, DenseTensor, Elem, Scalar, Storage};

/// Truncation controls shared by [`svd`], [`eigen`] and [`polar`].
///
/// `m = 0` means no bond limit and `cutoff = 0` no weight cutoff. When `mag`
/// is set it is used as the normalization of the discarded weight verbatim.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TruncationSpec {
    pub m: usize,
    pub cutoff: f64,
    pub mag: Option<f64>,
}

impl TruncationSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(m: usize, cutoff: f64) -> Self {
        Self { m, cutoff, mag: None }
    }

    pub fn max_m(m: usize) -> Self {
        Self { m, ..Self::default() }
    }

    pub fn with_mag(self, mag: f64) -> Self {
        Self { mag: Some(mag), ..self }
    }

    pub fn is_active(&self) -> bool {
        self.m > 0 || self.cutoff > 0.0
    }
}

/// Singular values below this fraction of the largest are numerical zeros.
const RANK_FLOOR: f64 = 1e-14;
/// Relative spread under which neighbouring values count as degenerate.
const DEGENERATE_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Kept {
    pub keep: usize,
    pub truncerr: f64,
    pub mag: f64,
}

/// Decides how many of the leading values to keep.
///
/// `values` are sorted descending and drive the rank-floor and degeneracy
/// tests; `weights` are what gets summed (squared singular values, or the raw
/// eigenvalues for [`eigen`]).
pub(crate) fn truncation(values: &[f64], weights: &[f64], spec: &TruncationSpec) -> Kept {
    let n = values.len();
    let mag = spec.mag.unwrap_or_else(|| weights.iter().sum());
    let mut keep = n;
    if spec.is_active() && n > 0 {
        let largest = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = RANK_FLOOR * largest;
        let mut discarded = 0.0;
        while keep > 1 && values[keep - 1].abs() <= floor {
            keep -= 1;
            discarded += weights[keep];
        }
        let nonzero = keep;
        if spec.cutoff > 0.0 {
            let limit = spec.cutoff * mag;
            while keep > 1 && discarded + weights[keep - 1] <= limit {
                keep -= 1;
                discarded += weights[keep];
            }
        }
        if spec.m > 0 && keep > spec.m {
            keep = spec.m;
        }
        if keep < nonzero {
            let same = |x: f64, y: f64| (x - y).abs() <= DEGENERATE_REL * x.abs().max(y.abs());
            let mut lo = keep - 1;
            while lo > 0 && same(values[lo - 1], values[lo]) {
                lo -= 1;
            }
            let mut hi = keep;
            while hi < nonzero && same(values[hi - 1], values[hi]) {
                hi += 1;
            }
            if hi > keep {
                if spec.m == 0 || hi <= spec.m {
                    keep = hi;
                } else if lo > 0 {
                    keep = lo;
                }
            }
        }
    }
    let dropped: f64 = weights[keep..].iter().sum();
    let truncerr = if mag != 0.0 { dropped / mag } else { 0.0 };
    Kept { keep, truncerr, mag }
}

/// Result of [`svd`]: `t ≈ U · D · Vdag` across the two index groups.
#[derive(Clone, Debug)]
pub struct Svd {
    /// Left group dims followed by the link.
    pub u: DenseTensor,
    /// Real `k x k` diagonal matrix of singular values.
    pub d: DenseTensor,
    /// Link followed by the right group dims.
    pub vdag: DenseTensor,
    /// Kept singular values, descending.
    pub sigma: Vec<f64>,
    pub truncerr: f64,
    pub mag: f64,
}

impl Svd {
    pub fn link_dim(&self) -> usize {
        self.sigma.len()
    }

    /// Squared singular values (density-matrix eigenvalues).
    pub fn weights(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * s).collect()
    }

    /// `D · Vdag`, the right factor with the weights absorbed.
    pub fn d_vdag(&self) -> DenseTensor {
        scale_axis(&self.vdag, 0, &self.sigma)
    }

    /// `U · D`, the left factor with the weights absorbed.
    pub fn u_d(&self) -> DenseTensor {
        scale_axis(&self.u, self.u.rank() - 1, &self.sigma)
    }
}

/// Multiplies slice `i` of axis `axis` by `w[i]`.
pub(crate) fn scale_axis(t: &DenseTensor, axis: usize, w: &[f64]) -> DenseTensor {
    let inner: usize = t.dims()[..axis].iter().product();
    let n = t.dim(axis);
    let data = match t.storage() {
        Storage::Real(v) => {
            Storage::Real(v.iter().enumerate().map(|(p, &x)| x * w[(p / inner) % n]).collect())
        }
        Storage::Complex(v) => {
            Storage::Complex(v.iter().enumerate().map(|(p, &x)| x * w[(p / inner) % n]).collect())
        }
    };
    DenseTensor::new(t.dims().to_vec(), data).expect("same dims")
}

/// Result of [`eigen`]: `t ≈ U · D · U†`.
#[derive(Clone, Debug)]
pub struct Eigen {
    /// Kept eigenvalues: descending for the Hermitian path, by descending
    /// modulus for the general path.
    pub values: Vec<Scalar>,
    /// `k x k` diagonal matrix of `values`.
    pub d: DenseTensor,
    /// Left group dims followed by the link; columns are eigenvectors.
    pub u: DenseTensor,
    pub truncerr: f64,
    pub mag: f64,
    pub hermitian: bool,
}

/// Two-factor result of [`qr`], [`lq`] and [`polar`].
#[derive(Clone, Debug)]
pub struct Factors {
    pub left: DenseTensor,
    pub right: DenseTensor,
    pub truncerr: f64,
    pub mag: f64,
}

struct Grouped {
    mat: DenseTensor,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Grouped {
    fn rows(&self) -> usize {
        self.mat.dim(0)
    }
    fn cols(&self) -> usize {
        self.mat.dim(1)
    }
}

fn group<G: AsRef<[usize]>>(t: &DenseTensor, groups: &[G]) -> Result<Grouped> {
    if groups.len() != 2 || groups.iter().any(|g| g.as_ref().is_empty()) {
        return Err(Error::InvalidGroups {
            groups: groups.iter().map(|g| g.as_ref().to_vec()).collect(),
            rank: t.rank(),
        });
    }
    let mat = t.reshape_group(groups)?;
    let dims_of = |g: &G| g.as_ref().iter().map(|&i| t.dim(i)).collect();
    let grouped = Grouped { mat, left: dims_of(&groups[0]), right: dims_of(&groups[1]) };
    let finite = match grouped.mat.storage() {
        Storage::Real(v) => v.iter().all(|x| x.is_finite()),
        Storage::Complex(v) => v.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
    };
    if !finite {
        return Err(Error::Decomposition("matrix contains non-finite entries".into()));
    }
    Ok(grouped)
}

fn with_link(dims: &[usize], k: usize, link_last: bool) -> Vec<usize> {
    if link_last {
        dims.iter().copied().chain([k]).collect()
    } else {
        [k].into_iter().chain(dims.iter().copied()).collect()
    }
}

fn col_major<T: Copy>(m: MatRef<'_, T>) -> Vec<T> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// `b x k` columns → `k x b` conjugate transpose, first `k` columns only.
fn adjoint_prefix<T: Elem>(v: &[T], b: usize, k: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; k * b];
    for i in 0..k {
        for j in 0..b {
            out[i + k * j] = v[j + b * i].conj_elem();
        }
    }
    out
}

fn diag_real(values: &[f64]) -> DenseTensor {
    let k = values.len();
    let mut data = vec![0.0; k * k];
    for (i, &v) in values.iter().enumerate() {
        data[i + k * i] = v;
    }
    DenseTensor::from_real(vec![k, k], data).expect("square")
}

/// Thin SVD kernel: (U `a x k`, σ descending, V `b x k`).
type SvdParts<T> = (Vec<T>, Vec<f64>, Vec<T>);

fn svd_kernel<T: Elem>(data: &[T], a: usize, b: usize) -> Result<SvdParts<T>> {
    let m = MatRef::from_column_major_slice(data, a, b);
    if let Ok(s) = m.thin_svd() {
        let sigma: Vec<f64> = s.S().column_vector().iter().map(|x| x.to_c64().re).collect();
        if sigma.iter().all(|x| x.is_finite()) {
            return Ok((col_major(s.U()), sigma, col_major(s.V())));
        }
    }
    svd_via_supermatrix(data, a, b).or_else(|_| svd_via_gram(data, a, b))
}

/// Hermitian eigen kernel: (eigenvalues ascending, eigenvectors column-major).
fn herm_kernel<T: Elem>(data: &[T], n: usize) -> Result<(Vec<f64>, Vec<T>)> {
    let m = MatRef::from_column_major_slice(data, n, n);
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("Hermitian eigensolver failed: {e:?}")))?;
    let vals: Vec<f64> = e.S().column_vector().iter().map(|x| x.to_c64().re).collect();
    Ok((vals, col_major(e.U())))
}

/// Singular triplets from the positive half of the spectrum of `[[0, M], [M†, 0]]`.
pub(crate) fn svd_via_supermatrix<T: Elem>(data: &[T], a: usize, b: usize) -> Result<SvdParts<T>> {
    let n = a + b;
    let k = a.min(b);
    let mut h = vec![T::ZERO; n * n];
    for j in 0..b {
        for i in 0..a {
            let x = data[i + a * j];
            h[i + n * (a + j)] = x;
            h[(a + j) + n * i] = x.conj_elem();
        }
    }
    let (vals, vecs) = herm_kernel(&h, n)?;
    let mut u = vec![T::ZERO; a * k];
    let mut v = vec![T::ZERO; b * k];
    let mut sigma = Vec::with_capacity(k);
    for c in 0..k {
        let src = n - 1 - c;
        sigma.push(vals[src].max(0.0));
        let col = &vecs[n * src..n * (src + 1)];
        let (top, bottom) = col.split_at(a);
        let nu = top.iter().map(|x| x.abs2()).sum::<f64>().sqrt();
        let nv = bottom.iter().map(|x| x.abs2()).sum::<f64>().sqrt();
        if nu <= f64::EPSILON || nv <= f64::EPSILON {
            return Err(Error::Decomposition("super-matrix eigenvectors do not split".into()));
        }
        for i in 0..a {
            u[i + a * c] = top[i] * T::real(1.0 / nu);
        }
        for i in 0..b {
            v[i + b * c] = bottom[i] * T::real(1.0 / nv);
        }
    }
    Ok((u, sigma, v))
}

/// Singular triplets from the eigen decomposition of `M M†` (or `M† M`).
pub(crate) fn svd_via_gram<T: Elem>(data: &[T], a: usize, b: usize) -> Result<SvdParts<T>> {
    let wide = a <= b;
    let (p, q) = if wide { (a, b) } else { (b, a) };
    // X is the p x q matrix M (wide) or M† (tall); gram = X X†.
    let x_at = |i: usize, j: usize| if wide { data[i + a * j] } else { data[j + a * i].conj_elem() };
    let mut gram = vec![T::ZERO; p * p];
    for i in 0..p {
        for j in 0..p {
            let mut acc = T::ZERO;
            for l in 0..q {
                acc += x_at(i, l) * x_at(j, l).conj_elem();
            }
            gram[i + p * j] = acc;
        }
    }
    let (vals, vecs) = herm_kernel(&gram, p)?;
    let largest = vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    let mut left = vec![T::ZERO; p * p];
    let mut right = vec![T::ZERO; q * p];
    let mut sigma = Vec::with_capacity(p);
    for c in 0..p {
        let src = p - 1 - c;
        let s = vals[src].max(0.0).sqrt();
        sigma.push(s);
        left[p * c..p * (c + 1)].copy_from_slice(&vecs[p * src..p * (src + 1)]);
        if s > RANK_FLOOR * largest && s > 0.0 {
            // right column = X† left / s
            for l in 0..q {
                let mut acc = T::ZERO;
                for i in 0..p {
                    acc += x_at(i, l).conj_elem() * left[i + p * c];
                }
                right[l + q * c] = acc * T::real(1.0 / s);
            }
        }
    }
    Ok(if wide { (left, sigma, right) } else { (right, sigma, left) })
}

/// Truncated singular value decomposition across two index groups.
pub fn svd<G: AsRef<[usize]>>(t: &DenseTensor, groups: &[G], spec: &TruncationSpec) -> Result<Svd> {
    let g = group(t, groups)?;
    match g.mat.storage() {
        Storage::Real(v) => svd_typed::<f64>(v, &g, spec),
        Storage::Complex(v) => svd_typed::<Complex64>(v, &g, spec),
    }
}

fn svd_typed<T: Elem>(data: &[T], g: &Grouped, spec: &TruncationSpec) -> Result<Svd> {
    let (a, b) = (g.rows(), g.cols());
    let (u, sigma, v) = svd_kernel(data, a, b)?;
    let weights: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    let kept = truncation(&sigma, &weights, spec);
    let k = kept.keep;
    let u = DenseTensor::from_elems(with_link(&g.left, k, true), u[..a * k].to_vec());
    let vdag = DenseTensor::from_elems(with_link(&g.right, k, false), adjoint_prefix(&v, b, k));
    let sigma = sigma[..k].to_vec();
    Ok(Svd { u, d: diag_real(&sigma), vdag, sigma, truncerr: kept.truncerr, mag: kept.mag })
}

/// Truncated eigendecomposition of a square matrix-equivalent, optionally
/// generalized with a positive-definite overlap (`H u = λ S u`).
///
/// Matrices Hermitian to within `1e-10 ‖M‖` take the Hermitian path; anything
/// else goes through the general solver with complex eigenvalues ordered by
/// modulus. The overlap is taken in its own matrix-equivalent with rows
/// running over the left group.
pub fn eigen<G: AsRef<[usize]>>(
    t: &DenseTensor,
    groups: &[G],
    spec: &TruncationSpec,
    overlap: Option<&DenseTensor>,
) -> Result<Eigen> {
    let g = group(t, groups)?;
    let n = g.rows();
    if n != g.cols() {
        return Err(Error::Shape(format!("eigen needs a square matrix-equivalent, got {}x{}", n, g.cols())));
    }
    let complex = g.mat.is_complex() || overlap.is_some_and(DenseTensor::is_complex);
    let s = match overlap {
        Some(s) if s.len() != n * n => {
            return Err(Error::Shape(format!("overlap with {} elements for a {n}x{n} problem", s.len())))
        }
        Some(s) => Some(s.unreshape(&[n, n])?),
        None => None,
    };
    let hermitian = is_hermitian(&g.mat) && s.as_ref().is_none_or(is_hermitian);
    if complex {
        let h = g.mat.complex_data();
        let s = s.as_ref().map(|s| s.complex_data().into_owned());
        eigen_typed::<Complex64>(&h, s.as_deref(), n, hermitian, &g.left, spec)
    } else {
        let h = g.mat.as_real().expect("real");
        let s = s.as_ref().map(|s| s.as_real().expect("real").to_vec());
        eigen_typed::<f64>(h, s.as_deref(), n, hermitian, &g.left, spec)
    }
}

fn is_hermitian(m: &DenseTensor) -> bool {
    let n = m.dim(0);
    let tol = 1e-10 * m.norm();
    let z = m.complex_data();
    (0..n).all(|i| (0..=i).all(|j| (z[i + n * j] - z[j + n * i].conj()).norm() <= tol))
}

fn eigen_typed<T: Elem>(
    h: &[T],
    s: Option<&[T]>,
    n: usize,
    hermitian: bool,
    left: &[usize],
    spec: &TruncationSpec,
) -> Result<Eigen> {
    if hermitian {
        let (vals, vecs) = match s {
            None => herm_kernel(h, n)?,
            Some(s) => generalized_hermitian(h, s, n)?,
        };
        // descending order
        let vals: Vec<f64> = vals.into_iter().rev().collect();
        let mut u = Vec::with_capacity(n * n);
        for c in (0..n).rev() {
            u.extend_from_slice(&vecs[n * c..n * (c + 1)]);
        }
        let kept = truncation(&vals, &vals, spec);
        let k = kept.keep;
        let vals = vals[..k].to_vec();
        return Ok(Eigen {
            d: diag_real(&vals),
            values: vals.into_iter().map(Scalar::Real).collect(),
            u: DenseTensor::from_elems(with_link(left, k, true), u[..n * k].to_vec()),
            truncerr: kept.truncerr,
            mag: kept.mag,
            hermitian: true,
        });
    }

    let mut mat = h.to_vec();
    if let Some(s) = s {
        // S⁻¹ H through the Cholesky factor of S.
        let sm = MatRef::from_column_major_slice(s, n, n);
        let llt = sm
            .llt(Side::Lower)
            .map_err(|e| Error::Decomposition(format!("overlap is not positive definite: {e:?}")))?;
        let mut x = faer::Mat::<T>::from_fn(n, n, |i, j| h[i + n * j]);
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(llt.L(), x.as_mut(), faer::Par::Seq);
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(
            llt.L().adjoint(),
            x.as_mut(),
            faer::Par::Seq,
        );
        mat = col_major(x.as_ref());
    }
    let m = MatRef::from_column_major_slice(&mat[..], n, n);
    let e = m.eigen().map_err(|e| Error::Decomposition(format!("general eigensolver failed: {e:?}")))?;
    let raw: Vec<Complex64> = e.S().column_vector().iter().copied().collect();
    let vecs = col_major(e.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| raw[y].norm().total_cmp(&raw[x].norm()));
    let mods: Vec<f64> = order.iter().map(|&i| raw[i].norm()).collect();
    let kept = truncation(&mods, &mods, spec);
    let k = kept.keep;
    let mut u = Vec::with_capacity(n * k);
    for &c in &order[..k] {
        u.extend_from_slice(&vecs[n * c..n * (c + 1)]);
    }
    let values: Vec<Scalar> = order[..k].iter().map(|&i| Scalar::Complex(raw[i])).collect();
    let mut d = DenseTensor::zeros_complex(&[k, k]);
    for (i, v) in values.iter().enumerate() {
        d.set(&[i, i], *v);
    }
    Ok(Eigen {
        values,
        d,
        u: DenseTensor::from_complex(with_link(left, k, true), u)?,
        truncerr: kept.truncerr,
        mag: kept.mag,
        hermitian: false,
    })
}

/// `H u = λ S u` with `S = L L†`: diagonalize `L⁻¹ H L⁻†`, then map back with `L⁻†`.
fn generalized_hermitian<T: Elem>(h: &[T], s: &[T], n: usize) -> Result<(Vec<f64>, Vec<T>)> {
    use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
    let sm = MatRef::from_column_major_slice(s, n, n);
    let llt = sm
        .llt(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("overlap is not positive definite: {e:?}")))?;
    let l = llt.L();
    let mut x = faer::Mat::<T>::from_fn(n, n, |i, j| h[i + n * j]);
    solve_lower_triangular_in_place(l, x.as_mut(), faer::Par::Seq);
    // (L⁻¹ H)† = H L⁻†, so another lower solve gives L⁻¹ H L⁻†.
    let mut c = faer::Mat::<T>::from_fn(n, n, |i, j| x[(j, i)].conj_elem());
    solve_lower_triangular_in_place(l, c.as_mut(), faer::Par::Seq);
    let sym = faer::Mat::<T>::from_fn(n, n, |i, j| {
        let avg = (c[(i, j)] + c[(j, i)].conj_elem()) * T::real(0.5);
        avg
    });
    let (vals, y) = herm_kernel(&col_major(sym.as_ref()), n)?;
    let mut u = faer::Mat::<T>::from_fn(n, n, |i, j| y[i + n * j]);
    solve_upper_triangular_in_place(l.adjoint(), u.as_mut(), faer::Par::Seq);
    Ok((vals, col_major(u.as_ref())))
}

/// `t = Q R` with `Q` column-isometric; the link has dimension `min(a, b)`.
/// `R` has a real non-negative diagonal.
pub fn qr<G: AsRef<[usize]>>(t: &DenseTensor, groups: &[G]) -> Result<Factors> {
    let g = group(t, groups)?;
    let (q, r, k) = match g.mat.storage() {
        Storage::Real(v) => qr_typed(v, g.rows(), g.cols()),
        Storage::Complex(v) => qr_typed(v, g.rows(), g.cols()),
    };
    Ok(Factors {
        left: q.into_unreshape(&with_link(&g.left, k, true))?,
        right: r.into_unreshape(&with_link(&g.right, k, false))?,
        truncerr: 0.0,
        mag: 1.0,
    })
}

/// `t = L Q` with `Q` row-isometric; computed from the QR of the adjoint.
pub fn lq<G: AsRef<[usize]>>(t: &DenseTensor, groups: &[G]) -> Result<Factors> {
    let g = group(t, groups)?;
    let adj = g.mat.adjoint()?;
    let (q, r, k) = match adj.storage() {
        Storage::Real(v) => qr_typed(v, g.cols(), g.rows()),
        Storage::Complex(v) => qr_typed(v, g.cols(), g.rows()),
    };
    Ok(Factors {
        left: r.adjoint()?.into_unreshape(&with_link(&g.left, k, true))?,
        right: q.adjoint()?.into_unreshape(&with_link(&g.right, k, false))?,
        truncerr: 0.0,
        mag: 1.0,
    })
}

fn qr_typed<T: Elem>(data: &[T], a: usize, b: usize) -> (DenseTensor, DenseTensor, usize) {
    let m = MatRef::from_column_major_slice(data, a, b);
    let f = m.qr();
    let mut q = col_major(f.compute_thin_Q().as_ref());
    let mut r = col_major(f.thin_R());
    let k = a.min(b);
    for j in 0..k {
        let z = r[j + k * j].to_c64();
        if z.norm() == 0.0 {
            continue;
        }
        let phase = z / z.norm();
        let p = T::from_scalar(Scalar::Complex(phase));
        let pc = T::from_scalar(Scalar::Complex(phase.conj()));
        for i in 0..a {
            q[i + a * j] = q[i + a * j] * p;
        }
        for c in 0..b {
            r[j + k * c] = r[j + k * c] * pc;
        }
    }
    (DenseTensor::from_elems(vec![a, k], q), DenseTensor::from_elems(vec![k, b], r), k)
}

/// Polar decomposition built on [`svd`].
///
/// `right_polar = true` gives `(U·V†, V·D·V†)` with the shared index running
/// over the right group's fused space; `false` gives `(U·D·U†, U·V†)` sharing
/// the left group's fused space. The `U·V†` factor is the isometry.
pub fn polar<G: AsRef<[usize]>>(
    t: &DenseTensor,
    groups: &[G],
    right_polar: bool,
    spec: &TruncationSpec,
) -> Result<Factors> {
    let g = group(t, groups)?;
    let s = svd(&g.mat, &[[0], [1]], spec)?;
    let uv = crate::tensor::contract(&s.u, &[1], &s.vdag, &[0])?;
    let (left, right) = if right_polar {
        let vd = s.d_vdag();
        let vdv = crate::tensor::ccontract(&s.vdag, &[0], &vd, &[0])?;
        (
            uv.into_unreshape(&with_link(&g.left, g.cols(), true))?,
            vdv.into_unreshape(&with_link(&g.right, g.cols(), false))?,
        )
    } else {
        let ud = s.u_d();
        let udu = crate::tensor::contract_with(
            &ud,
            &[1],
            &s.u,
            &[1],
            &crate::tensor::ContractOptions { conj_b: true, ..Default::default() },
        )?;
        (
            udu.into_unreshape(&with_link(&g.left, g.rows(), true))?,
            uv.into_unreshape(&with_link(&g.right, g.rows(), false))?,
        )
    };
    Ok(Factors { left, right, truncerr: s.truncerr, mag: s.mag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ccontract, contract};
    use crate::testutil::{charpoly_roots, jacobi_eigenvalues, random_tensor};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn isometry_error(u: &DenseTensor, link_axis_last: bool) -> f64 {
        let r = u.rank();
        let (outer, k): (Vec<usize>, usize) = if link_axis_last {
            ((0..r - 1).collect(), u.dim(r - 1))
        } else {
            ((1..r).collect(), u.dim(0))
        };
        let g = ccontract(u, &outer, u, &outer).unwrap();
        g.max_abs_diff(&DenseTensor::identity(k)).unwrap()
    }

    fn reconstruct(s: &Svd) -> DenseTensor {
        let ud = s.u_d();
        contract(&ud, &[ud.rank() - 1], &s.vdag, &[0]).unwrap()
    }

    #[test]
    fn identity_svd() {
        let s = svd(&DenseTensor::identity(2), &[[0], [1]], &TruncationSpec::none()).unwrap();
        assert_eq!(s.sigma, vec![1.0, 1.0]);
        assert_eq!(s.truncerr, 0.0);
        assert_eq!(s.mag, 2.0);
    }

    #[test]
    fn svd_matches_gram_eigen_oracle() {
        let m = random_tensor(&mut rng(4), &[4, 6], false);
        let s = svd(&m, &[[0], [1]], &TruncationSpec::none()).unwrap();
        let mmt = contract(&m, &[1], &m, &[1]).unwrap();
        let mut oracle = jacobi_eigenvalues(&mmt);
        oracle.sort_by(|a, b| b.total_cmp(a));
        for (x, l) in s.sigma.iter().zip(&oracle) {
            assert!((x - l.sqrt()).abs() < 1e-10, "{x} vs {}", l.sqrt());
        }
        assert!(reconstruct(&s).max_abs_diff(&m).unwrap() < 1e-12);
    }

    #[test]
    fn svd_fallbacks_agree_with_primary() {
        for (seed, a, b, complex) in [(1, 5, 3, false), (2, 3, 5, true), (3, 4, 4, true)] {
            let m = random_tensor(&mut rng(seed), &[a, b], complex);
            let primary = svd(&m, &[[0], [1]], &TruncationSpec::none()).unwrap();
            let z = m.complex_data();
            for (u, sigma, v) in [svd_via_supermatrix(&z, a, b).unwrap(), svd_via_gram(&z, a, b).unwrap()] {
                for (x, y) in sigma.iter().zip(&primary.sigma) {
                    assert!((x - y).abs() < 1e-10);
                }
                let k = sigma.len();
                let ut = DenseTensor::from_complex(vec![a, k], u).unwrap();
                let vd = DenseTensor::from_complex(vec![k, b], adjoint_prefix(&v, b, k)).unwrap();
                let rebuilt = contract(&scale_axis(&ut, 1, &sigma), &[1], &vd, &[0]).unwrap();
                assert!(rebuilt.max_abs_diff(&m).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn svd_rank3_shapes_and_unreshape() {
        let t = random_tensor(&mut rng(7), &[2, 2, 3], true);
        let s = svd(&t, &[vec![0, 1], vec![2]], &TruncationSpec::none()).unwrap();
        assert_eq!(s.u.dims(), &[2, 2, 3]);
        assert_eq!(s.vdag.dims(), &[3, 3]);
        // the unreshaped U agrees elementwise with the fused matrix columns
        let um = s.u.unreshape(&[4, 3]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for c in 0..3 {
                    assert_eq!(s.u.get(&[i, j, c]), um.get(&[i + 2 * j, c]));
                }
            }
        }
        assert!(reconstruct(&s).max_abs_diff(&t).unwrap() < 1e-12);
    }

    #[test]
    fn svd_grouping_errors() {
        let t = DenseTensor::zeros(&[2, 3]);
        assert!(matches!(svd(&t, &[vec![0, 1], vec![]], &TruncationSpec::none()), Err(Error::InvalidGroups { .. })));
        assert!(matches!(svd(&t, &[vec![0], vec![0]], &TruncationSpec::none()), Err(Error::InvalidGroups { .. })));
    }

    #[test]
    fn truncation_rules() {
        let none = TruncationSpec::none();
        let w = [0.5, 0.3, 0.15, 0.05];
        let v: Vec<f64> = w.iter().map(|x: &f64| x.sqrt()).collect();
        assert_eq!(truncation(&v, &w, &none).keep, 4);
        // cutoff 0.06 drops only the 0.05 tail
        let k = truncation(&v, &w, &TruncationSpec::new(0, 0.06));
        assert_eq!(k.keep, 3);
        assert!((k.truncerr - 0.05).abs() < 1e-15);
        // m clamps after the cutoff
        assert_eq!(truncation(&v, &w, &TruncationSpec::new(2, 0.06)).keep, 2);
        // bond never below 1
        assert_eq!(truncation(&v, &w, &TruncationSpec::new(0, 10.0)).keep, 1);
        // supplied mag is used verbatim
        let k = truncation(&v, &w, &TruncationSpec::new(3, 0.0).with_mag(2.0));
        assert!((k.truncerr - 0.025).abs() < 1e-15);
    }

    #[test]
    fn degenerate_groups_are_not_split() {
        let w = [0.4, 0.2, 0.2, 0.2];
        let v: Vec<f64> = w.iter().map(|x: &f64| x.sqrt()).collect();
        // the cutoff alone would split the triplet: keep it whole
        assert_eq!(truncation(&v, &w, &TruncationSpec::new(0, 0.25)).keep, 4);
        // m = 2 cannot hold the triplet: drop it whole
        assert_eq!(truncation(&v, &w, &TruncationSpec::new(2, 0.0)).keep, 1);
        // a leading degenerate group that exceeds m is split (bond ≥ 1 wins)
        let flat = [0.5, 0.5];
        let fv = [0.5f64.sqrt(); 2];
        let k = truncation(&fv, &flat, &TruncationSpec::max_m(1));
        assert_eq!(k.keep, 1);
        assert!((k.truncerr - 0.5).abs() < 1e-15);
    }

    #[test]
    fn numerical_zeros_dropped_only_when_truncating() {
        let m = DenseTensor::real_matrix(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let exact = svd(&m, &[[0], [1]], &TruncationSpec::none()).unwrap();
        assert_eq!(exact.link_dim(), 2);
        let trunc = svd(&m, &[[0], [1]], &TruncationSpec::max_m(5)).unwrap();
        assert_eq!(trunc.link_dim(), 1);
        assert!((trunc.sigma[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_diagonal_and_singlet() {
        let m = DenseTensor::real_matrix(&[&[3.0, 0.0], &[0.0, 1.0]]).unwrap();
        let e = eigen(&m, &[[0], [1]], &TruncationSpec::none(), None).unwrap();
        assert_eq!(e.values, vec![Scalar::Real(3.0), Scalar::Real(1.0)]);
        assert!((e.u.get(&[0, 0]).abs() - 1.0).abs() < 1e-15);
        assert!((e.u.get(&[1, 1]).abs() - 1.0).abs() < 1e-15);

        // one spin of the singlet
        let rho = DenseTensor::real_matrix(&[&[0.5, 0.0], &[0.0, 0.5]]).unwrap();
        let e = eigen(&rho, &[[0], [1]], &TruncationSpec::none(), None).unwrap();
        for v in &e.values {
            assert!((v.re() - 0.5).abs() < 1e-15);
        }
    }

    fn random_hermitian(seed: u64, n: usize, complex: bool) -> DenseTensor {
        let a = random_tensor(&mut rng(seed), &[n, n], complex);
        let mut h = a.clone();
        h.axpy(1.0, &a.adjoint().unwrap()).unwrap();
        h
    }

    #[test]
    fn eigen_reconstruction_and_charpoly_oracle() {
        let h = random_hermitian(8, 6, true);
        let e = eigen(&h, &[[0], [1]], &TruncationSpec::none(), None).unwrap();
        assert!(e.hermitian);
        let ud = contract(&e.u, &[1], &e.d, &[0]).unwrap();
        let rebuilt = contract_with_conj_b(&ud, &e.u);
        assert!(rebuilt.max_abs_diff(&h).unwrap() < 1e-10);

        let h4 = random_hermitian(9, 4, false);
        let e4 = eigen(&h4, &[[0], [1]], &TruncationSpec::none(), None).unwrap();
        let mut roots = charpoly_roots(&h4);
        roots.sort_by(|a, b| b.total_cmp(a));
        for (v, r) in e4.values.iter().zip(&roots) {
            assert!((v.re() - r).abs() < 1e-9, "{} vs {r}", v.re());
        }
    }

    fn contract_with_conj_b(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
        crate::tensor::contract_with(
            a,
            &[1],
            b,
            &[1],
            &crate::tensor::ContractOptions { conj_b: true, ..Default::default() },
        )
        .unwrap()
    }

    #[test]
    fn eigen_rejects_non_square() {
        let t = DenseTensor::zeros(&[2, 3]);
        assert!(matches!(eigen(&t, &[[0], [1]], &TruncationSpec::none(), None), Err(Error::Shape(_))));
    }

    #[test]
    fn eigen_general_path_sorts_by_modulus() {
        // upper triangular, eigenvalues 1, -3, 2
        let m = DenseTensor::real_matrix(&[&[1.0, 5.0, 1.0], &[0.0, -3.0, 2.0], &[0.0, 0.0, 2.0]]).unwrap();
        let e = eigen(&m, &[[0], [1]], &TruncationSpec::none(), None).unwrap();
        assert!(!e.hermitian);
        let re: Vec<f64> = e.values.iter().map(|v| v.re()).collect();
        for (x, y) in re.iter().zip([-3.0, 2.0, 1.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        // A u = λ u columnwise
        let au = contract(&m, &[1], &e.u, &[0]).unwrap();
        let ul = contract(&e.u, &[1], &e.d, &[0]).unwrap();
        assert!(au.max_abs_diff(&ul).unwrap() < 1e-10);
    }

    #[test]
    fn generalized_eigen() {
        let h = random_hermitian(12, 5, true);
        let b = random_tensor(&mut rng(13), &[5, 5], true);
        let mut s = ccontract(&b, &[0], &b, &[0]).unwrap();
        s.axpy(1.0, &DenseTensor::identity(5)).unwrap();
        let e = eigen(&h, &[[0], [1]], &TruncationSpec::none(), Some(&s)).unwrap();
        let hu = contract(&h, &[1], &e.u, &[0]).unwrap();
        let su = contract(&s, &[1], &e.u, &[0]).unwrap();
        let sud = contract(&su, &[1], &e.d, &[0]).unwrap();
        assert!(hu.max_abs_diff(&sud).unwrap() < 1e-10);
        for w in e.values.windows(2) {
            assert!(w[0].re() >= w[1].re());
        }
    }

    #[test]
    fn qr_lq_examples() {
        let q = qr(&DenseTensor::identity(3), &[[0], [1]]).unwrap();
        assert!(q.left.max_abs_diff(&DenseTensor::identity(3)).unwrap() < 1e-15);
        assert!(q.right.max_abs_diff(&DenseTensor::identity(3)).unwrap() < 1e-15);
        assert_eq!((q.truncerr, q.mag), (0.0, 1.0));

        let m = random_tensor(&mut rng(14), &[5, 3], false);
        let f = qr(&m, &[[0], [1]]).unwrap();
        assert!(isometry_error(&f.left, true) < 1e-12);
        let rebuilt = contract(&f.left, &[1], &f.right, &[0]).unwrap();
        assert!(rebuilt.max_abs_diff(&m).unwrap() < 1e-12);

        let m = random_tensor(&mut rng(15), &[3, 5], true);
        let f = lq(&m, &[[0], [1]]).unwrap();
        assert_eq!(f.right.dims(), &[3, 5]);
        assert!(isometry_error(&f.right, false) < 1e-12);
        let rebuilt = contract(&f.left, &[1], &f.right, &[0]).unwrap();
        assert!(rebuilt.max_abs_diff(&m).unwrap() < 1e-12);
    }

    #[test]
    fn polar_examples() {
        let id = DenseTensor::identity(3);
        for right in [true, false] {
            let p = polar(&id, &[[0], [1]], right, &TruncationSpec::none()).unwrap();
            assert!(p.left.max_abs_diff(&id).unwrap() < 1e-14);
            assert!(p.right.max_abs_diff(&id).unwrap() < 1e-14);
        }
        let m = random_tensor(&mut rng(16), &[4, 4], true);
        let r = polar(&m, &[[0], [1]], true, &TruncationSpec::none()).unwrap();
        assert!(contract(&r.left, &[1], &r.right, &[0]).unwrap().max_abs_diff(&m).unwrap() < 1e-10);
        assert!(isometry_error(&r.left, true) < 1e-10);
        let l = polar(&m, &[[0], [1]], false, &TruncationSpec::none()).unwrap();
        assert!(contract(&l.left, &[1], &l.right, &[0]).unwrap().max_abs_diff(&m).unwrap() < 1e-10);
        assert!(isometry_error(&l.right, false) < 1e-10);

        let t = random_tensor(&mut rng(17), &[2, 3, 4], false);
        let p = polar(&t, &[vec![0, 1], vec![2]], true, &TruncationSpec::none()).unwrap();
        let s = svd(&t, &[vec![0, 1], vec![2]], &TruncationSpec::none()).unwrap();
        assert_eq!(p.left.dims(), s.u.dims());
        assert_eq!(p.right.dims(), s.vdag.dims());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn svd_invariants(seed in any::<u64>(), a in 1usize..7, b in 1usize..7, complex in any::<bool>(),
                          m in 0usize..5, cutoff in prop_oneof![Just(0.0), 1e-3..0.2f64]) {
            let t = random_tensor(&mut rng(seed), &[a, b], complex);
            let spec = TruncationSpec::new(m, cutoff);
            let s = svd(&t, &[[0], [1]], &spec).unwrap();
            prop_assert!(isometry_error(&s.u, true) < 1e-12);
            prop_assert!(isometry_error(&s.vdag, false) < 1e-12);
            let kept: f64 = s.weights().iter().sum();
            prop_assert!((s.truncerr + kept / s.mag - 1.0).abs() < 1e-12);
            if m > 0 { prop_assert!(s.link_dim() <= m); }
            if m == 0 && cutoff > 0.0 { prop_assert!(s.truncerr <= cutoff + 1e-15); }
            for w in s.sigma.windows(2) { prop_assert!(w[0] >= w[1]); }
            prop_assert!(s.sigma.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn qr_lq_reconstruct(seed in any::<u64>(), a in 1usize..7, b in 1usize..7, complex in any::<bool>()) {
            let t = random_tensor(&mut rng(seed), &[a, b], complex);
            let f = qr(&t, &[[0], [1]]).unwrap();
            prop_assert_eq!(f.left.dim(1), a.min(b));
            prop_assert!(isometry_error(&f.left, true) < 1e-12);
            prop_assert!(contract(&f.left, &[1], &f.right, &[0]).unwrap().max_abs_diff(&t).unwrap() < 1e-12);
            let g = lq(&t, &[[0], [1]]).unwrap();
            prop_assert!(isometry_error(&g.right, false) < 1e-12);
            prop_assert!(contract(&g.left, &[1], &g.right, &[0]).unwrap().max_abs_diff(&t).unwrap() < 1e-12);
        }
    }
}
