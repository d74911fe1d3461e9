//! Independent dense oracles shared by the integration tests. Everything here
//! is built from nalgebra primitives only, not from the crate's operator code.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

pub type M = DMatrix<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn sx() -> M {
    M::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn sy() -> M {
    let i = Complex64::new(0.0, 1.0);
    M::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)])
}

pub fn sz() -> M {
    M::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

pub fn sminus() -> M {
    M::from_row_slice(2, 2, &[c(0.0), c(0.0), c(1.0), c(0.0)])
}

pub fn paulis() -> [M; 4] {
    [M::identity(2, 2), sx(), sy(), sz()]
}

/// `op` on `site` of an `n`-site register, site 0 leftmost.
pub fn on_site(op: &M, site: usize, n: usize) -> M {
    let mut out = M::identity(1, 1);
    for s in 0..n {
        let f = if s == site { op.clone() } else { M::identity(2, 2) };
        out = out.kronecker(&f);
    }
    out
}

pub fn hamiltonian(omega: f64, delta: f64, v: f64, n: usize, bonds: &[(usize, usize)]) -> M {
    let d = 1 << n;
    let mut h = M::zeros(d, d);
    for s in 0..n {
        h += on_site(&sx(), s, n) * c(omega / 2.0) + on_site(&sz(), s, n) * c(delta / 2.0);
    }
    for &(a, b) in bonds {
        h += on_site(&sz(), a, n) * on_site(&sz(), b, n) * c(v / 4.0);
    }
    h
}

/// Row-stacking superoperator: `vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ)`.
pub fn lindblad_superoperator(h: &M, jumps: &[M]) -> M {
    let d = h.nrows();
    let id = M::identity(d, d);
    let i = Complex64::new(0.0, 1.0);
    let mut s = (h.kronecker(&id) - id.kronecker(&h.transpose())) * (-i);
    for l in jumps {
        let ld = l.adjoint();
        let n = &ld * l;
        s += l.kronecker(&ld.transpose()) - n.kronecker(&id) * c(0.5) - id.kronecker(&n.transpose()) * c(0.5);
    }
    s
}

pub fn model_superoperator(omega: f64, delta: f64, v: f64, gamma: f64, n: usize, bonds: &[(usize, usize)]) -> M {
    let h = hamiltonian(omega, delta, v, n, bonds);
    let jumps: Vec<M> = (0..n).map(|s| on_site(&sminus(), s, n) * c(gamma.sqrt())).collect();
    lindblad_superoperator(&h, &jumps)
}

pub fn vec_rows(m: &M) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_iterator(m.len(), m.transpose().iter().copied())
}

pub fn unvec_rows(v: &nalgebra::DVector<Complex64>, d: usize) -> M {
    M::from_row_slice(d, d, v.as_slice())
}

/// `exp(t S) vec(ρ)` by the matrix exponential.
pub fn propagate_exp(s: &M, rho: &M, t: f64) -> M {
    let u = (s * c(t)).exp();
    unvec_rows(&(u * vec_rows(rho)), rho.nrows())
}

/// Rydberg density: average population of the σz = +1 level.
pub fn rydberg_density(rho: &M, n: usize) -> f64 {
    let p = M::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
    (0..n).map(|s| (on_site(&p, s, n) * rho).trace().re).sum::<f64>() / n as f64
}

pub fn all_ground(n: usize) -> M {
    let d = 1 << n;
    let mut m = M::zeros(d, d);
    m[(d - 1, d - 1)] = c(1.0);
    m
}

pub fn trace_norm_hermitian(m: &M) -> f64 {
    let h = (m + m.adjoint()) * c(0.5);
    h.symmetric_eigenvalues().iter().map(|x| x.abs()).sum()
}

/// Analytic optical-Bloch solution for one driven, decaying two-level atom
/// starting in the ground state (Δ = 0): Rydberg population at time `t`.
pub fn optical_bloch_population(omega: f64, gamma: f64, t: f64) -> f64 {
    // Bloch equations for (u, w) with w = ⟨σz⟩ and u = ⟨σy⟩ under H = Ω/2 σx
    let a = M::from_row_slice(
        3,
        3,
        &[
            c(-gamma / 2.0),
            c(0.0),
            c(0.0),
            c(0.0),
            c(-gamma / 2.0),
            c(-omega),
            c(0.0),
            c(omega),
            c(-gamma),
        ],
    );
    let inhom = nalgebra::DVector::from_vec(vec![c(0.0), c(0.0), c(-gamma)]);
    let x0 = nalgebra::DVector::from_vec(vec![c(0.0), c(0.0), c(-1.0)]);
    let xs = a.clone().try_inverse().unwrap() * &inhom * c(-1.0);
    let x = (a * c(t)).exp() * (x0 - &xs) + xs;
    (1.0 + x[2].re) / 2.0
}

/// Random matrices from a flat list of reals in `[-1, 1]`.
pub fn matrix_from(vals: &[f64], d: usize) -> M {
    M::from_fn(d, d, |r, col| Complex64::new(vals[2 * (r * d + col)], vals[2 * (r * d + col) + 1]))
}

pub fn hermitian_from(vals: &[f64], d: usize) -> M {
    let a = matrix_from(vals, d);
    (&a + a.adjoint()) * c(0.5)
}

/// `A A† / Tr` (full rank almost surely).
pub fn density_from(vals: &[f64], d: usize) -> M {
    let a = matrix_from(vals, d);
    let m = &a * a.adjoint();
    let tr = m.trace();
    m / tr
}

pub fn reals(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, len)
}

pub fn max_abs(m: &M) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
