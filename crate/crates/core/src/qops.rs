//! Dense operator algebra on small multi-qubit Hilbert spaces.
//!
//! Site 0 is always the leftmost tensor factor, i.e. the most significant bit
//! of a basis index. Single-site basis state 0 is the spin-up (Rydberg) state,
//! so `σ_z = diag(1, -1)` and `σ_-` maps index 0 to index 1.
//!
//! Every routine that does index arithmetic over the tensor structure lives
//! here; the rest of the crate goes through these helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

pub const HERMITIAN_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Single-site operator label: identity or one of the three Pauli matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    I,
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::I, Axis::X, Axis::Y, Axis::Z];
    pub const PAULI: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::I => 0,
            Axis::X => 1,
            Axis::Y => 2,
            Axis::Z => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }
}

pub fn pauli(axis: Axis) -> ComplexMatrix {
    match axis {
        Axis::I => ComplexMatrix::identity(2, 2),
        Axis::X => ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        Axis::Y => ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        Axis::Z => ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    }
}

/// Lowering operator `|g><r|`: Rydberg (index 0) to ground (index 1).
pub fn sigma_minus() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

pub fn sigma_plus() -> ComplexMatrix {
    sigma_minus().adjoint()
}

/// Rydberg-state projector `(1 + σ_z) / 2`.
pub fn rydberg_projector() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO])
}

/// Two-site Pauli product `σ_a ⊗ σ_b`.
pub fn pauli_pair(a: Axis, b: Axis) -> ComplexMatrix {
    kron(&pauli(a), &pauli(b))
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

#[inline]
pub fn site_bit(site: usize, n_sites: usize) -> usize {
    1 << (n_sites - 1 - site)
}

pub fn dim_of(n_sites: usize) -> usize {
    1 << n_sites
}

/// Number of qubits for a square matrix of dimension `dim`, if it is a power of two.
pub fn sites_of(dim: usize) -> Option<usize> {
    (dim.is_power_of_two()).then(|| dim.trailing_zeros() as usize)
}

fn check_site(site: usize, n_sites: usize) -> Result<()> {
    if site >= n_sites {
        return Err(Error::SiteOutOfRange { site, n_sites });
    }
    Ok(())
}

fn check_square(a: &ComplexMatrix, dim: usize) -> Result<()> {
    if a.nrows() != dim || a.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: a.nrows().max(a.ncols()) });
    }
    Ok(())
}

/// Single-site operator tensored with identities on all other sites.
pub fn embed(op: &ComplexMatrix, site: usize, n_sites: usize) -> Result<ComplexMatrix> {
    check_square(op, 2)?;
    check_site(site, n_sites)?;
    let mut out = ComplexMatrix::identity(1, 1);
    for s in 0..n_sites {
        out = if s == site { kron(&out, op) } else { kron(&out, &ComplexMatrix::identity(2, 2)) };
    }
    Ok(out)
}

fn validate_site_list(sites: &[usize], n_sites: usize) -> Result<()> {
    for (k, &s) in sites.iter().enumerate() {
        check_site(s, n_sites)?;
        if sites[..k].contains(&s) {
            return Err(Error::InvalidSites(format!("site {s} listed twice")));
        }
    }
    Ok(())
}

/// Extracts the sub-index formed by the bits of `sites` (first listed site most significant).
#[inline]
fn sub_index(full: usize, masks: &[usize]) -> usize {
    masks.iter().fold(0, |acc, &m| (acc << 1) | usize::from(full & m != 0))
}

#[inline]
fn scatter(mut full: usize, sub: usize, masks: &[usize]) -> usize {
    let k = masks.len();
    for (j, &m) in masks.iter().enumerate() {
        if sub & (1 << (k - 1 - j)) != 0 {
            full |= m;
        } else {
            full &= !m;
        }
    }
    full
}

/// Operator acting on an arbitrary (ordered) list of sites, identity elsewhere.
/// The first listed site is the most significant factor of `op`.
pub fn embed_sites(op: &ComplexMatrix, sites: &[usize], n_sites: usize) -> Result<ComplexMatrix> {
    validate_site_list(sites, n_sites)?;
    check_square(op, dim_of(sites.len()))?;
    let dim = dim_of(n_sites);
    let masks: Vec<usize> = sites.iter().map(|&s| site_bit(s, n_sites)).collect();
    let sub_dim = op.nrows();
    let mut out = ComplexMatrix::zeros(dim, dim);
    for r in 0..dim {
        let rs = sub_index(r, &masks);
        for j in 0..sub_dim {
            let v = op[(rs, j)];
            if v != ZERO {
                out[(r, scatter(r, j, &masks))] = v;
            }
        }
    }
    Ok(out)
}

/// Tensor product of operators on disjoint site groups that together cover
/// all `n_sites` sites. Each factor lists its sites, most significant first.
pub fn place(factors: &[(&[usize], &ComplexMatrix)], n_sites: usize) -> Result<ComplexMatrix> {
    let mut covered = vec![false; n_sites];
    let mut masks = Vec::with_capacity(factors.len());
    for (sites, op) in factors {
        validate_site_list(sites, n_sites)?;
        check_square(op, dim_of(sites.len()))?;
        for &s in sites.iter() {
            if covered[s] {
                return Err(Error::InvalidSites(format!("site {s} covered by two factors")));
            }
            covered[s] = true;
        }
        masks.push(sites.iter().map(|&s| site_bit(s, n_sites)).collect::<Vec<_>>());
    }
    if let Some(s) = covered.iter().position(|c| !c) {
        return Err(Error::InvalidSites(format!("site {s} not covered")));
    }
    let dim = dim_of(n_sites);
    let row_idx: Vec<Vec<usize>> =
        masks.iter().map(|m| (0..dim).map(|r| sub_index(r, m)).collect()).collect();
    Ok(ComplexMatrix::from_fn(dim, dim, |r, c| {
        factors
            .iter()
            .zip(&row_idx)
            .fold(ONE, |acc, ((_, op), idx)| acc * op[(idx[r], idx[c])])
    }))
}

/// Inserts a single-site factor at `site` into an operator on the remaining
/// `n_sites - 1` sites (which keep their relative order).
pub fn insert_site(rest: &ComplexMatrix, op: &ComplexMatrix, site: usize, n_sites: usize) -> Result<ComplexMatrix> {
    check_site(site, n_sites)?;
    let others: Vec<usize> = (0..n_sites).filter(|&s| s != site).collect();
    place(&[(&[site], op), (&others, rest)], n_sites)
}

/// Partial trace of an arbitrary operator onto the sorted site list `keep`.
pub fn partial_trace_op(m: &ComplexMatrix, n_sites: usize, keep: &[usize]) -> Result<ComplexMatrix> {
    check_square(m, dim_of(n_sites))?;
    if keep.is_empty() {
        return Err(Error::InvalidSites("keep list is empty".into()));
    }
    validate_site_list(keep, n_sites)?;
    if keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSites("keep list must be sorted".into()));
    }
    let keep_masks: Vec<usize> = keep.iter().map(|&s| site_bit(s, n_sites)).collect();
    let traced: Vec<usize> =
        (0..n_sites).filter(|s| !keep.contains(s)).map(|s| site_bit(s, n_sites)).collect();
    let kd = dim_of(keep.len());
    let td = dim_of(traced.len());
    let mut out = ComplexMatrix::zeros(kd, kd);
    for t in 0..td {
        let base = scatter(0, t, &traced);
        let idx: Vec<usize> = (0..kd).map(|a| scatter(base, a, &keep_masks)).collect();
        for b in 0..kd {
            for a in 0..kd {
                out[(a, b)] += m[(idx[a], idx[b])];
            }
        }
    }
    Ok(out)
}

/// `(op_site ⊗ 1) · m` for a 2×2 `op`, without building the embedded operator.
pub fn apply_left(op: &ComplexMatrix, site: usize, n_sites: usize, m: &ComplexMatrix) -> ComplexMatrix {
    let bit = site_bit(site, n_sites);
    let (a, b, c, d) = (op[(0, 0)], op[(0, 1)], op[(1, 0)], op[(1, 1)]);
    let dim = m.nrows();
    let mut out = ComplexMatrix::zeros(dim, m.ncols());
    for col in 0..m.ncols() {
        for r0 in (0..dim).filter(|r| r & bit == 0) {
            let r1 = r0 | bit;
            let (x0, x1) = (m[(r0, col)], m[(r1, col)]);
            out[(r0, col)] = a * x0 + b * x1;
            out[(r1, col)] = c * x0 + d * x1;
        }
    }
    out
}

/// `m · (op_site ⊗ 1)` for a 2×2 `op`.
pub fn apply_right(m: &ComplexMatrix, op: &ComplexMatrix, site: usize, n_sites: usize) -> ComplexMatrix {
    let bit = site_bit(site, n_sites);
    let (a, b, c, d) = (op[(0, 0)], op[(0, 1)], op[(1, 0)], op[(1, 1)]);
    let dim = m.ncols();
    let mut out = ComplexMatrix::zeros(m.nrows(), dim);
    for c0 in (0..dim).filter(|c| c & bit == 0) {
        let c1 = c0 | bit;
        for row in 0..m.nrows() {
            let (x0, x1) = (m[(row, c0)], m[(row, c1)]);
            out[(row, c0)] = x0 * a + x1 * c;
            out[(row, c1)] = x0 * b + x1 * d;
        }
    }
    out
}

/// `(op_site ⊗ 1) · v` for a state vector, in place.
pub fn apply_to_vector(op: &ComplexMatrix, site: usize, n_sites: usize, v: &mut [Complex64]) {
    let bit = site_bit(site, n_sites);
    let (a, b, c, d) = (op[(0, 0)], op[(0, 1)], op[(1, 0)], op[(1, 1)]);
    for r0 in (0..v.len()).filter(|r| r & bit == 0) {
        let r1 = r0 | bit;
        let (x0, x1) = (v[r0], v[r1]);
        v[r0] = a * x0 + b * x1;
        v[r1] = c * x0 + d * x1;
    }
}

/// `out += scale · Σ_s σ_x^(s) v` for a state vector.
pub fn add_transverse_field(v: &[Complex64], n_sites: usize, scale: Complex64, out: &mut [Complex64]) {
    for s in 0..n_sites {
        let bit = site_bit(s, n_sites);
        for (r, o) in out.iter_mut().enumerate() {
            *o += scale * v[r ^ bit];
        }
    }
}

/// Eigenvalue (±1) of `σ_z` at `site` for basis state `index`.
#[inline]
pub fn z_eigenvalue(index: usize, site: usize, n_sites: usize) -> f64 {
    if index & site_bit(site, n_sites) == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn hermiticity_deviation(a: &ComplexMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for r in 0..a.nrows() {
        for c in r..a.ncols() {
            dev = dev.max((a[(r, c)] - a[(c, r)].conj()).norm());
        }
    }
    dev
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).scale(0.5)
}

fn checked_hermitian(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    let dev = hermiticity_deviation(a);
    if dev > HERMITIAN_TOL * max_abs(a).max(1.0) {
        return Err(Error::NotHermitian { deviation: dev });
    }
    Ok(hermitian_part(a))
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and the
/// unitary whose columns are the matching eigenvectors.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let sym = checked_hermitian(a)?;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = ComplexMatrix::from_fn(a.nrows(), a.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn eigvalsh(a: &ComplexMatrix) -> Result<Vec<f64>> {
    let sym = checked_hermitian(a)?;
    let mut values: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Trace norm `Tr|a|` of a Hermitian matrix.
pub fn trace_norm(a: &ComplexMatrix) -> Result<f64> {
    Ok(eigvalsh(a)?.iter().map(|l| l.abs()).sum())
}

/// Trace norm of the Hermitian part of `a`, skipping the Hermiticity check.
/// For inner loops where `a` is Hermitian by construction.
pub fn trace_norm_unchecked(a: &ComplexMatrix) -> f64 {
    hermitian_part(a).symmetric_eigenvalues().iter().map(|l| l.abs()).sum()
}

pub fn trace(a: &ComplexMatrix) -> Complex64 {
    a.trace()
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let mut acc = ZERO;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            acc += a[(r, c)] * b[(c, r)];
        }
    }
    acc
}

/// Hermitian, unit-trace operator on `n_sites` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    n_sites: usize,
}

impl DensityMatrix {
    pub const TRACE_TOL: f64 = 1e-10;

    /// Validates dimension, Hermiticity and unit trace, then symmetrizes.
    pub fn new(matrix: ComplexMatrix, n_sites: usize) -> Result<Self> {
        check_square(&matrix, dim_of(n_sites))?;
        let dev = hermiticity_deviation(&matrix);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::BadTrace { trace: tr.re });
        }
        Ok(Self { matrix: hermitian_part(&matrix), n_sites })
    }

    /// Wraps a matrix whose dimension is already known to be `2^n_sites`.
    /// No Hermiticity or trace check.
    pub fn from_matrix_unchecked(matrix: ComplexMatrix, n_sites: usize) -> Self {
        debug_assert_eq!(matrix.nrows(), dim_of(n_sites));
        Self { matrix, n_sites }
    }

    pub fn from_pure(psi: &ComplexVector) -> Result<Self> {
        let n_sites = sites_of(psi.len())
            .ok_or(Error::DimensionMismatch { expected: psi.len().next_power_of_two(), got: psi.len() })?;
        let norm2 = psi.norm_squared();
        Self::new(psi * psi.adjoint() / Complex64::new(norm2, 0.0), n_sites)
    }

    /// Computational basis state; `bits[s] == true` puts site `s` in the Rydberg state.
    pub fn basis_state(rydberg: &[bool]) -> Self {
        let n = rydberg.len();
        let idx = rydberg
            .iter()
            .enumerate()
            .fold(0, |acc, (s, &up)| if up { acc } else { acc | site_bit(s, n) });
        let mut m = ComplexMatrix::zeros(dim_of(n), dim_of(n));
        m[(idx, idx)] = ONE;
        Self { matrix: m, n_sites: n }
    }

    pub fn all_ground(n_sites: usize) -> Self {
        Self::basis_state(&vec![false; n_sites])
    }

    pub fn maximally_mixed(n_sites: usize) -> Self {
        let d = dim_of(n_sites);
        Self { matrix: ComplexMatrix::identity(d, d) / Complex64::new(d as f64, 0.0), n_sites }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix { matrix: kron(&self.matrix, &other.matrix), n_sites: self.n_sites + other.n_sites }
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let m = partial_trace_op(&self.matrix, self.n_sites, keep)?;
        Ok(DensityMatrix { matrix: m, n_sites: keep.len() })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        eigvalsh(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.matrix, &self.matrix).re
    }

    pub fn expect(&self, op: &ComplexMatrix) -> Complex64 {
        trace_product(&self.matrix, op)
    }
}
