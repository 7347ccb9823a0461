//! Independent dense oracles: Hamiltonians assembled entry by entry from
//! local operators, and dense eigensolves through faer.
#![allow(dead_code)]

use densetn::models::{fermion_ops, spin_ops};
use densetn::{Complex64, DenseTensor};
use faer::{Mat, Side};

pub type C = Complex64;

/// Dense `dim x dim` matrix, column-major, basis index `Σ s_k d^k`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub dim: usize,
    pub data: Vec<C>,
}

impl Dense {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![C::new(0.0, 0.0); dim * dim] }
    }

    pub fn at(&self, r: usize, c: usize) -> C {
        self.data[r + self.dim * c]
    }

    pub fn add(&mut self, coef: C, other: &Dense) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += coef * y;
        }
    }

    pub fn matmul(&self, other: &Dense) -> Dense {
        let n = self.dim;
        let mut out = Dense::zeros(n);
        for c in 0..n {
            for k in 0..n {
                let b = other.at(k, c);
                if b == C::new(0.0, 0.0) {
                    continue;
                }
                for r in 0..n {
                    out.data[r + n * c] += self.at(r, k) * b;
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[C]) -> Vec<C> {
        let n = self.dim;
        let mut out = vec![C::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                out[r] += self.at(r, c) * v[c];
            }
        }
        out
    }

    pub fn expect(&self, v: &[C]) -> C {
        let hv = self.apply(v);
        v.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum()
    }

    /// Largest deviation from a library operator `(out, in)`.
    pub fn max_diff(&self, t: &DenseTensor) -> f64 {
        assert_eq!(t.dims(), &[self.dim, self.dim]);
        let data = t.complex_data();
        self.data.iter().zip(data.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                worst = worst.max((self.at(r, c) - self.at(c, r).conj()).norm());
            }
        }
        worst
    }

    /// Ascending eigenvalues and eigenvectors (columns) of a Hermitian matrix.
    pub fn eigh(&self) -> (Vec<f64>, Vec<Vec<C>>) {
        let n = self.dim;
        let m = Mat::<C>::from_fn(n, n, |r, c| self.at(r, c));
        let e = m.self_adjoint_eigen(Side::Lower).expect("eigen");
        let vals = (0..n).map(|k| e.S().column_vector()[k].re).collect();
        let vecs = (0..n).map(|k| (0..n).map(|r| e.U()[(r, k)]).collect()).collect();
        (vals, vecs)
    }

    pub fn ground(&self) -> (f64, Vec<C>) {
        let (vals, vecs) = self.eigh();
        (vals[0], vecs[0].clone())
    }
}

/// Matrix of `Π_k ops[k]` where each factor is a local operator on one site;
/// several factors on the same site multiply in list order (leftmost acts last).
pub fn product(n: usize, d: usize, factors: &[(usize, &DenseTensor)]) -> Dense {
    let dim = d.pow(n as u32);
    let mut out = Dense::zeros(dim);
    // local matrix per site
    let mut locals: Vec<Vec<C>> = (0..n)
        .map(|_| {
            let mut id = vec![C::new(0.0, 0.0); d * d];
            for k in 0..d {
                id[k + d * k] = C::new(1.0, 0.0);
            }
            id
        })
        .collect();
    for (site, op) in factors.iter().rev() {
        let m: Vec<C> = op.complex_data().into_owned();
        let cur = locals[*site].clone();
        // locals[site] = m * cur
        for r in 0..d {
            for c in 0..d {
                locals[*site][r + d * c] = (0..d).map(|k| m[r + d * k] * cur[k + d * c]).sum();
            }
        }
    }
    let digits = |mut x: usize| -> Vec<usize> {
        (0..n)
            .map(|_| {
                let s = x % d;
                x /= d;
                s
            })
            .collect()
    };
    for c in 0..dim {
        let dc = digits(c);
        for r in 0..dim {
            let dr = digits(r);
            let mut v = C::new(1.0, 0.0);
            for k in 0..n {
                v *= locals[k][dr[k] + d * dc[k]];
                if v == C::new(0.0, 0.0) {
                    break;
                }
            }
            out.data[r + dim * c] = v;
        }
    }
    out
}

pub fn spin_bond(n: usize, j: f64, a: usize, b: usize, out: &mut Dense) {
    let s = spin_ops();
    let sx = s.op("Sx");
    let sy = s.op("Sy");
    let sz = s.op("Sz");
    for op in [sx, sy, sz] {
        out.add(C::new(j, 0.0), &product(n, 2, &[(a, op), (b, op)]));
    }
}

pub fn heisenberg(j: f64, n: usize) -> Dense {
    let mut h = Dense::zeros(1 << n);
    for i in 0..n - 1 {
        spin_bond(n, j, i, i + 1, &mut h);
    }
    h
}

pub fn tfim(g: f64, n: usize) -> Dense {
    let s = spin_ops();
    let mut h = Dense::zeros(1 << n);
    for i in 0..n - 1 {
        h.add(C::new(1.0, 0.0), &product(n, 2, &[(i, s.op("Sz")), (i + 1, s.op("Sz"))]));
    }
    for i in 0..n {
        h.add(C::new(g, 0.0), &product(n, 2, &[(i, s.op("Sx"))]));
    }
    h
}

/// Neighbour pairs of an open `lx x ly` lattice with site index `x * ly + y`.
pub fn square_bonds(lx: usize, ly: usize) -> Vec<(usize, usize)> {
    let mut bonds = Vec::new();
    for x in 0..lx {
        for y in 0..ly {
            let s = x * ly + y;
            if y + 1 < ly {
                bonds.push((s, s + 1));
            }
            if x + 1 < lx {
                bonds.push((s, s + ly));
            }
        }
    }
    bonds
}

pub fn heisenberg2d(j: f64, lx: usize, ly: usize) -> Dense {
    let n = lx * ly;
    let mut h = Dense::zeros(1 << n);
    for (a, b) in square_bonds(lx, ly) {
        spin_bond(n, j, a, b, &mut h);
    }
    h
}

/// `c_{iσ}` with its Jordan–Wigner string on sites `< i`.
pub fn fermion(n: usize, site: usize, name: &str) -> Dense {
    let f = fermion_ops();
    let mut factors: Vec<(usize, &DenseTensor)> = (0..site).map(|k| (k, f.op("F"))).collect();
    factors.push((site, f.op(name)));
    product(n, 4, &factors)
}

/// `t Σ_σ (c†_{iσ} c_{i+1σ} + h.c.) + Σ_i (μ n_i + U n_i↑ n_i↓)`, built from
/// string-carrying fermion operators.
pub fn hubbard(t: f64, u: f64, mu: f64, n: usize) -> Dense {
    let f = fermion_ops();
    let mut h = Dense::zeros(4usize.pow(n as u32));
    for i in 0..n - 1 {
        for (c, cd) in [("Cup", "Cdagup"), ("Cdn", "Cdagdn")] {
            let hop = fermion(n, i, cd).matmul(&fermion(n, i + 1, c));
            let back = fermion(n, i + 1, cd).matmul(&fermion(n, i, c));
            h.add(C::new(t, 0.0), &hop);
            h.add(C::new(t, 0.0), &back);
        }
    }
    for i in 0..n {
        h.add(C::new(mu, 0.0), &product(n, 4, &[(i, f.op("N"))]));
        h.add(C::new(u, 0.0), &product(n, 4, &[(i, f.op("Nup")), (i, f.op("Ndn"))]));
    }
    h
}

pub fn to_vec(t: &DenseTensor) -> Vec<C> {
    t.complex_data().into_owned()
}

pub fn overlap(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
