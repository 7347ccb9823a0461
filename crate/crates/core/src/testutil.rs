//! Brute-force oracles shared by the unit tests.

use rand::Rng;

use crate::tensor::{Complex64, DenseTensor, Scalar};

pub fn random_tensor(rng: &mut impl Rng, dims: &[usize], complex: bool) -> DenseTensor {
    let n: usize = dims.iter().product();
    if complex {
        let data = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        DenseTensor::from_complex(dims.to_vec(), data).unwrap()
    } else {
        DenseTensor::from_real(dims.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }
}

fn odometer(idx: &mut [usize], dims: &[usize]) -> bool {
    for (k, i) in idx.iter_mut().enumerate() {
        *i += 1;
        if *i < dims[k] {
            return true;
        }
        *i = 0;
    }
    false
}

/// Explicit nested-loop contraction, one output element at a time.
pub fn naive_contract(
    a: &DenseTensor,
    axes_a: &[usize],
    b: &DenseTensor,
    axes_b: &[usize],
    conj_a: bool,
    conj_b: bool,
) -> DenseTensor {
    let free_a: Vec<usize> = (0..a.rank()).filter(|i| !axes_a.contains(i)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|i| !axes_b.contains(i)).collect();
    let kdims: Vec<usize> = axes_a.iter().map(|&i| a.dim(i)).collect();
    let out_dims: Vec<usize> =
        free_a.iter().map(|&i| a.dim(i)).chain(free_b.iter().map(|&i| b.dim(i))).collect();
    let complex = a.is_complex() || b.is_complex();
    DenseTensor::from_fn(&out_dims, |out| {
        let mut ia = vec![0; a.rank()];
        let mut ib = vec![0; b.rank()];
        for (p, &ax) in free_a.iter().enumerate() {
            ia[ax] = out[p];
        }
        for (p, &ax) in free_b.iter().enumerate() {
            ib[ax] = out[free_a.len() + p];
        }
        let mut k = vec![0; kdims.len()];
        let mut acc = Complex64::new(0.0, 0.0);
        loop {
            for (p, (&x, &y)) in axes_a.iter().zip(axes_b).enumerate() {
                ia[x] = k[p];
                ib[y] = k[p];
            }
            let mut va = a.get(&ia).to_c64();
            let mut vb = b.get(&ib).to_c64();
            if conj_a {
                va = va.conj();
            }
            if conj_b {
                vb = vb.conj();
            }
            acc += va * vb;
            if !odometer(&mut k, &kdims) {
                break;
            }
        }
        if complex {
            Scalar::Complex(acc)
        } else {
            Scalar::Real(acc.re)
        }
    })
}

fn real_square(m: &DenseTensor) -> (usize, Vec<f64>) {
    let n = m.dim(0);
    assert_eq!(m.dims(), &[n, n]);
    (n, m.as_real().expect("real matrix").to_vec())
}

/// Cyclic Jacobi rotations on a real symmetric matrix.
pub fn jacobi_eigenvalues(m: &DenseTensor) -> Vec<f64> {
    let (n, mut a) = real_square(m);
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i + n * j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p + n * q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q + n * q] - a[p + n * p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k + n * p];
                    let akq = a[k + n * q];
                    a[k + n * p] = c * akp - s * akq;
                    a[k + n * q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p + n * k];
                    let aqk = a[q + n * k];
                    a[p + n * k] = c * apk - s * aqk;
                    a[q + n * k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i + n * i]).collect()
}

/// Real roots of the characteristic polynomial (Faddeev–LeVerrier
/// coefficients, then sign-change bracketing and bisection).
pub fn charpoly_roots(m: &DenseTensor) -> Vec<f64> {
    let (n, a) = real_square(m);
    let mul = |x: &[f64], y: &[f64]| {
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i + n * j] = (0..n).map(|k| x[i + n * k] * y[k + n * j]).sum();
            }
        }
        out
    };
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut mk = vec![0.0; n * n];
    for k in 1..=n {
        let mut next = mul(&a, &mk);
        for i in 0..n {
            next[i + n * i] += c[n + 1 - k];
        }
        let am = mul(&a, &next);
        c[n - k] = -(0..n).map(|i| am[i + n * i]).sum::<f64>() / k as f64;
        mk = next;
    }
    let p = |x: f64| c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci);
    let bound = (0..n).map(|i| (0..n).map(|j| a[i + n * j].abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    let steps = 200_000;
    let mut roots = Vec::new();
    let mut x0 = -bound;
    let mut p0 = p(x0);
    for s in 1..=steps {
        let x1 = -bound + 2.0 * bound * s as f64 / steps as f64;
        let p1 = p(x1);
        if p0 == 0.0 {
            roots.push(x0);
        } else if p0 * p1 < 0.0 {
            let (mut lo, mut hi) = (x0, x1);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if p(lo) * p(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        p0 = p1;
    }
    roots
}
