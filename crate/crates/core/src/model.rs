//! Driven-dissipative Rydberg spin model on a square lattice.
//!
//! `H = Ω/2 Σ σ_x + Δ/2 Σ σ_z + V/4 Σ_<ij> σ_z σ_z`, jump operators
//! `√γ σ_-` on every site. Spin up (`σ_z = +1`) is the Rydberg state.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qops::{
    self, dim_of, embed, embed_sites, pauli, site_bit, z_eigenvalue, Axis, ComplexMatrix, DensityMatrix,
};

pub type Bond = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Rabi frequency Ω.
    pub omega: f64,
    /// Detuning Δ.
    pub delta: f64,
    /// Nearest-neighbour interaction V.
    pub v: f64,
    /// Decay rate γ; sets the unit of time.
    pub gamma: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { omega: 1.0, delta: 0.0, v: 2.0, gamma: 1.0 }
    }
}

impl ModelParams {
    pub fn new(omega: f64, delta: f64, v: f64, gamma: f64) -> Self {
        Self { omega, delta, v, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega, self.delta, self.v, self.gamma];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("model parameters must be finite".into()));
        }
        if self.gamma < 0.0 {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

/// Square lattice with nearest-neighbour bonds. Sites are numbered row-major,
/// `site = y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    width: usize,
    height: usize,
    boundary: Boundary,
    bonds: Vec<Bond>,
}

impl Lattice {
    pub fn new(width: usize, height: usize, boundary: Boundary) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!("lattice must be non-empty, got {width}x{height}")));
        }
        let idx = |x: usize, y: usize| y * width + x;
        let mut bonds = Vec::new();
        let mut push = |a: usize, b: usize| {
            let pair = (a.min(b), a.max(b));
            if a != b && !bonds.contains(&pair) {
                bonds.push(pair);
            }
        };
        for y in 0..height {
            for x in 0..width {
                if x + 1 < width {
                    push(idx(x, y), idx(x + 1, y));
                } else if boundary == Boundary::Periodic {
                    push(idx(x, y), idx(0, y));
                }
                if y + 1 < height {
                    push(idx(x, y), idx(x, y + 1));
                } else if boundary == Boundary::Periodic {
                    push(idx(x, y), idx(x, 0));
                }
            }
        }
        bonds.sort_unstable();
        Ok(Self { width, height, boundary, bonds })
    }

    pub fn chain(length: usize, boundary: Boundary) -> Result<Self> {
        Self::new(length, 1, boundary)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn n_sites(&self) -> usize {
        self.width * self.height
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn site(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.width, site / self.width)
    }

    pub fn neighbors(&self, site: usize) -> Vec<usize> {
        self.bonds
            .iter()
            .filter_map(|&(a, b)| match (a == site, b == site) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect()
    }

    pub fn degree(&self, site: usize) -> usize {
        self.neighbors(site).len()
    }

    pub fn has_bond(&self, a: usize, b: usize) -> bool {
        self.bonds.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Site reached by moving `(dx, dy)` from `site`, honouring the boundary.
    pub fn shifted(&self, site: usize, dx: isize, dy: isize) -> Option<usize> {
        let (x, y) = self.coords(site);
        let wrap = |c: usize, d: isize, n: usize| -> Option<usize> {
            let t = c as isize + d;
            if (0..n as isize).contains(&t) {
                Some(t as usize)
            } else if self.boundary == Boundary::Periodic {
                Some(t.rem_euclid(n as isize) as usize)
            } else {
                None
            }
        };
        Some(self.site(wrap(x, dx, self.width)?, wrap(y, dy, self.height)?))
    }
}

/// Bonds touching a cluster, split into interior bonds (both ends inside) and
/// dangling bonds `(interior endpoint, exterior endpoint)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterNeighbors {
    pub interior: Vec<Bond>,
    pub dangling: Vec<Bond>,
}

pub fn cluster_neighbors(lattice: &Lattice, cluster: &[usize]) -> Result<ClusterNeighbors> {
    if cluster.is_empty() {
        return Err(Error::InvalidSites("empty cluster".into()));
    }
    for (k, &s) in cluster.iter().enumerate() {
        if s >= lattice.n_sites() {
            return Err(Error::SiteOutOfRange { site: s, n_sites: lattice.n_sites() });
        }
        if cluster[..k].contains(&s) {
            return Err(Error::InvalidSites(format!("site {s} repeated in cluster")));
        }
    }
    let mut interior = Vec::new();
    let mut dangling = Vec::new();
    for &(a, b) in lattice.bonds() {
        match (cluster.contains(&a), cluster.contains(&b)) {
            (true, true) => interior.push((a, b)),
            (true, false) => dangling.push((a, b)),
            (false, true) => dangling.push((b, a)),
            _ => {}
        }
    }
    // connectivity over interior bonds
    let mut seen = vec![cluster[0]];
    let mut frontier = vec![cluster[0]];
    while let Some(s) = frontier.pop() {
        for &(a, b) in &interior {
            let other = if a == s { b } else if b == s { a } else { continue };
            if !seen.contains(&other) {
                seen.push(other);
                frontier.push(other);
            }
        }
    }
    if seen.len() != cluster.len() {
        return Err(Error::InvalidSites("cluster is not connected".into()));
    }
    Ok(ClusterNeighbors { interior, dangling })
}

fn check_bonds(n_sites: usize, bonds: &[Bond]) -> Result<()> {
    for (k, &(a, b)) in bonds.iter().enumerate() {
        if a >= n_sites || b >= n_sites {
            return Err(Error::InvalidBond(format!("bond ({a},{b}) outside {n_sites} sites")));
        }
        if a == b {
            return Err(Error::InvalidBond(format!("self bond on site {a}")));
        }
        let key = (a.min(b), a.max(b));
        if bonds[..k].iter().any(|&(c, d)| (c.min(d), c.max(d)) == key) {
            return Err(Error::InvalidBond(format!("bond ({a},{b}) listed twice")));
        }
    }
    Ok(())
}

/// Diagonal part of `H` (detuning and interaction) in the computational basis.
pub fn diagonal_energies(params: &ModelParams, n_sites: usize, bonds: &[Bond]) -> Vec<f64> {
    (0..dim_of(n_sites))
        .map(|r| {
            let z = |s| z_eigenvalue(r, s, n_sites);
            let field: f64 = (0..n_sites).map(z).sum::<f64>() * params.delta / 2.0;
            let inter: f64 = bonds.iter().map(|&(a, b)| z(a) * z(b)).sum::<f64>() * params.v / 4.0;
            field + inter
        })
        .collect()
}

/// Number of Rydberg excitations in basis state `index`.
pub fn excitation_count(index: usize, n_sites: usize) -> usize {
    n_sites - index.count_ones() as usize
}

/// Dense Hamiltonian on `n_sites` local sites with the given (local) bonds.
pub fn build_hamiltonian(params: &ModelParams, n_sites: usize, bonds: &[Bond]) -> Result<ComplexMatrix> {
    check_bonds(n_sites, bonds)?;
    let d = dim_of(n_sites);
    let mut h = ComplexMatrix::zeros(d, d);
    let x = pauli(Axis::X) * Complex64::new(params.omega / 2.0, 0.0);
    let z = pauli(Axis::Z) * Complex64::new(params.delta / 2.0, 0.0);
    for s in 0..n_sites {
        h += embed(&(&x + &z), s, n_sites)?;
    }
    let zz = qops::pauli_pair(Axis::Z, Axis::Z) * Complex64::new(params.v / 4.0, 0.0);
    for &(a, b) in bonds {
        h += embed_sites(&zz, &[a, b], n_sites)?;
    }
    Ok(h)
}

/// A bond leaving the cluster. `site` is the interior endpoint; `exterior_links`
/// lists every cluster site adjacent to the same exterior site (including `site`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DanglingBond {
    pub site: usize,
    pub exterior_links: Vec<usize>,
}

/// Coupling of a cluster to exterior sites held at a variational state.
///
/// Each dangling bond contributes `-i V/4 [σ_z^b, Tr_e(σ_z^e ρ_{cluster+e})]`,
/// where the joint state appends `e` with expectation `z_exterior` and,
/// when present, the nearest-neighbour correlation `C`. Writing
/// `c = Tr_2[(1 ⊗ σ_z) C]`, the trace evaluates to
/// `z ρ + Σ_{b' ~ e} c_{b'} ⊗ Tr_{b'} ρ`, which is linear in `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    pub z_exterior: f64,
    pub correlation: Option<ComplexMatrix>,
    pub dangling: Vec<DanglingBond>,
}

impl BoundaryField {
    pub fn empty() -> Self {
        Self { z_exterior: 0.0, correlation: None, dangling: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.dangling.is_empty()
    }

    /// Boundary bonds for a cluster embedded in `lattice`, with the cluster's
    /// sites mapped to local indices in the order given.
    pub fn for_cluster(lattice: &Lattice, cluster: &[usize], z_exterior: f64, correlation: Option<ComplexMatrix>) -> Result<Self> {
        let nb = cluster_neighbors(lattice, cluster)?;
        let local = |g: usize| cluster.iter().position(|&s| s == g).unwrap();
        let dangling = nb
            .dangling
            .iter()
            .map(|&(b, e)| {
                let mut links: Vec<usize> =
                    lattice.neighbors(e).into_iter().filter(|s| cluster.contains(s)).map(local).collect();
                links.sort_unstable();
                DanglingBond { site: local(b), exterior_links: links }
            })
            .collect();
        Ok(Self { z_exterior, correlation, dangling })
    }

    /// `Tr_e(σ_z^e ρ_{cluster+e})` summed with the commutator prefactors, i.e.
    /// the full boundary contribution to `ℒρ`.
    pub fn apply(&self, v: f64, n_sites: usize, rho: &ComplexMatrix) -> ComplexMatrix {
        let d = rho.nrows();
        let mut out = ComplexMatrix::zeros(d, d);
        if v == 0.0 || self.dangling.is_empty() {
            return out;
        }
        let pref = Complex64::new(0.0, -v / 4.0);
        // mean-field part: Σ_d z [σ_z^b, ρ], diagonal in the basis
        let mut field = vec![0.0; n_sites];
        for db in &self.dangling {
            field[db.site] += self.z_exterior;
        }
        let energy: Vec<f64> =
            (0..d).map(|r| field.iter().enumerate().map(|(s, f)| f * z_eigenvalue(r, s, n_sites)).sum()).collect();
        for c in 0..d {
            for r in 0..d {
                out[(r, c)] = pref * (energy[r] - energy[c]) * rho[(r, c)];
            }
        }
        let Some(corr) = &self.correlation else {
            return out;
        };
        // correlation part: Σ_d Σ_{b'} [σ_z^b, c_{b'} ⊗ Tr_{b'} ρ]
        let mut weight = vec![vec![0.0; n_sites]; n_sites];
        for db in &self.dangling {
            for &link in &db.exterior_links {
                weight[link][db.site] += 1.0;
            }
        }
        for (link, w) in weight.iter().enumerate() {
            if w.iter().all(|x| *x == 0.0) {
                continue;
            }
            let bit = site_bit(link, n_sites);
            let energy: Vec<f64> =
                (0..d).map(|r| w.iter().enumerate().map(|(s, f)| f * z_eigenvalue(r, s, n_sites)).sum()).collect();
            for c in 0..d {
                let (cb, c0) = (usize::from(c & bit == 0), c & !bit);
                for r in 0..d {
                    let (rb, r0) = (usize::from(r & bit == 0), r & !bit);
                    let k = corr[(1 - rb, 1 - cb)];
                    if k == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let traced = rho[(r0 | bit, c0 | bit)] + rho[(r0, c0)];
                    out[(r, c)] += pref * (energy[r] - energy[c]) * k * traced;
                }
            }
        }
        out
    }
}

/// Lindblad generator on a cluster of sites, applied without building the
/// superoperator.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    params: ModelParams,
    n_sites: usize,
    bonds: Vec<Bond>,
    /// Elementwise factor `-i(E_r - E_c) - γ/2 (N_r + N_c)` from the diagonal
    /// Hamiltonian and the anticommutator.
    diag_factor: ComplexMatrix,
}

impl Liouvillian {
    pub fn new(params: &ModelParams, n_sites: usize, bonds: &[Bond]) -> Result<Self> {
        params.validate()?;
        check_bonds(n_sites, bonds)?;
        let energies = diagonal_energies(params, n_sites, bonds);
        let d = dim_of(n_sites);
        let diag_factor = ComplexMatrix::from_fn(d, d, |r, c| {
            let n = (excitation_count(r, n_sites) + excitation_count(c, n_sites)) as f64;
            Complex64::new(-params.gamma / 2.0 * n, -(energies[r] - energies[c]))
        });
        Ok(Self {
            params: *params,
            n_sites,
            bonds: bonds.to_vec(),
            diag_factor,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        dim_of(self.n_sites)
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn hamiltonian(&self) -> ComplexMatrix {
        build_hamiltonian(&self.params, self.n_sites, &self.bonds).expect("bonds validated at construction")
    }

    /// `ℒρ` for the closed cluster.
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let n = self.n_sites;
        let d = rho.nrows();
        let mut out = self.diag_factor.component_mul(rho);
        let drive = Complex64::new(0.0, -self.params.omega / 2.0);
        let gamma = self.params.gamma;
        for s in 0..n {
            let bit = site_bit(s, n);
            for c in 0..d {
                for r in 0..d {
                    let mut v = drive * (rho[(r ^ bit, c)] - rho[(r, c ^ bit)]);
                    if r & bit != 0 && c & bit != 0 {
                        v += rho[(r & !bit, c & !bit)] * gamma;
                    }
                    out[(r, c)] += v;
                }
            }
        }
        out
    }

    /// `ℒρ` including the coupling to exterior sites.
    pub fn apply_with_boundary(&self, boundary: &BoundaryField, rho: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.apply(rho);
        if !boundary.is_empty() {
            out += boundary.apply(self.params.v, self.n_sites, rho);
        }
        out
    }
}

/// `ℒρ` on a cluster of `n_sites` sites with the given interior bonds and boundary.
pub fn apply_liouvillian(
    params: &ModelParams,
    n_sites: usize,
    bonds: &[Bond],
    boundary: &BoundaryField,
    rho: &DensityMatrix,
) -> Result<ComplexMatrix> {
    if rho.n_sites() != n_sites {
        return Err(Error::DimensionMismatch { expected: dim_of(n_sites), got: rho.dim() });
    }
    if let Some(db) = boundary.dangling.iter().find(|db| db.site >= n_sites || db.exterior_links.iter().any(|&l| l >= n_sites)) {
        return Err(Error::SiteOutOfRange { site: db.site, n_sites });
    }
    let l = Liouvillian::new(params, n_sites, bonds)?;
    Ok(l.apply_with_boundary(boundary, rho.matrix()))
}

/// Site-averaged Rydberg population `(1 + <σ_z>)/2`.
pub fn rydberg_density(rho: &DensityMatrix) -> f64 {
    rydberg_density_of(rho.matrix(), rho.n_sites())
}

pub fn rydberg_density_of(rho: &ComplexMatrix, n_sites: usize) -> f64 {
    let total: f64 = (0..rho.nrows()).map(|r| rho[(r, r)].re * excitation_count(r, n_sites) as f64).sum();
    total / n_sites as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::{kron, max_abs, rydberg_projector};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn hamiltonian_examples() {
        let p = ModelParams::new(1.0, 0.0, 7.0, 1.0);
        let h = build_hamiltonian(&p, 1, &[]).unwrap();
        assert!(max_abs(&(h - pauli(Axis::X) * c(0.5))) < 1e-15);

        let p = ModelParams::new(0.0, 0.0, 4.0, 1.0);
        let h = build_hamiltonian(&p, 2, &[(0, 1)]).unwrap();
        let expect = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.), c(-1.), c(-1.), c(1.)]));
        assert!(max_abs(&(h - expect)) < 1e-15);

        assert!(build_hamiltonian(&p, 2, &[(0, 2)]).is_err());
        assert!(build_hamiltonian(&p, 2, &[(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn lattice_bonds() {
        let l = Lattice::new(4, 4, Boundary::Periodic).unwrap();
        assert_eq!(l.bonds().len(), 32);
        assert!((0..16).all(|s| l.degree(s) == 4));
        let l = Lattice::new(3, 3, Boundary::Periodic).unwrap();
        assert_eq!(l.bonds().len(), 18);
        assert!((0..9).all(|s| l.degree(s) == 4));
        // width-2 periodic wraps onto the same neighbour
        let l = Lattice::new(2, 2, Boundary::Periodic).unwrap();
        assert_eq!(l.bonds().len(), 4);
        let l = Lattice::new(3, 2, Boundary::Open).unwrap();
        assert_eq!(l.bonds().len(), 7);
        assert!((0..6).all(|s| l.degree(s) <= 4));
        assert_eq!(Lattice::chain(2, Boundary::Open).unwrap().bonds(), &[(0, 1)]);
        assert!(Lattice::new(0, 3, Boundary::Open).is_err());
    }

    #[test]
    fn cluster_neighbor_counts() {
        let l = Lattice::new(4, 4, Boundary::Periodic).unwrap();
        let chain = [l.site(0, 0), l.site(1, 0), l.site(2, 0)];
        let nb = cluster_neighbors(&l, &chain).unwrap();
        assert_eq!((nb.interior.len(), nb.dangling.len()), (2, 8));
        let nb = cluster_neighbors(&l, &[0, 1]).unwrap();
        assert_eq!((nb.interior.len(), nb.dangling.len()), (1, 6));
        let all: Vec<usize> = (0..16).collect();
        let nb = cluster_neighbors(&l, &all).unwrap();
        assert_eq!((nb.interior.len(), nb.dangling.len()), (32, 0));
        assert!(cluster_neighbors(&l, &[0, 2]).is_err());
        assert!(cluster_neighbors(&l, &[0, 0]).is_err());
    }

    #[test]
    fn pure_decay_of_single_site() {
        let p = ModelParams::new(0.0, 0.0, 0.0, 1.0);
        let up = DensityMatrix::basis_state(&[true]);
        let l = apply_liouvillian(&p, 1, &[], &BoundaryField::empty(), &up).unwrap();
        let down = DensityMatrix::basis_state(&[false]);
        let expect = down.matrix() - up.matrix();
        assert!(max_abs(&(l - expect)) < 1e-15);
    }

    #[test]
    fn ground_state_is_stationary_without_drive() {
        let p = ModelParams::new(0.0, 0.3, 2.0, 1.0);
        let g = DensityMatrix::all_ground(3);
        let l = apply_liouvillian(&p, 3, &[(0, 1), (1, 2)], &BoundaryField::empty(), &g).unwrap();
        assert!(max_abs(&l) < 1e-15);
    }

    #[test]
    fn rydberg_density_examples() {
        assert_eq!(rydberg_density(&DensityMatrix::all_ground(3)), 0.0);
        assert_eq!(rydberg_density(&DensityMatrix::basis_state(&[true, true])), 1.0);
        assert!((rydberg_density(&DensityMatrix::maximally_mixed(3)) - 0.5).abs() < 1e-15);
        let n = rydberg_projector();
        let rho = DensityMatrix::basis_state(&[true, false]);
        assert_eq!(rho.expect(&kron(&n, &pauli(Axis::I))).re, 1.0);
    }

    #[test]
    fn boundary_is_silent_at_zero_interaction() {
        let p = ModelParams::new(1.0, 0.0, 0.0, 1.0);
        let l = Lattice::new(4, 4, Boundary::Periodic).unwrap();
        let b = BoundaryField::for_cluster(&l, &[0, 1], -0.6, Some(pauli(Axis::X) * c(0.1))).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        let out = b.apply(p.v, 2, rho.matrix());
        assert_eq!(max_abs(&out), 0.0);
    }

    #[test]
    fn exterior_links_see_shared_neighbours() {
        // 2x2 ring 0-1-3-2-0: site 2 is adjacent to both 0 and 3
        let l = Lattice::new(2, 2, Boundary::Open).unwrap();
        let b = BoundaryField::for_cluster(&l, &[0, 1, 3], 0.0, None).unwrap();
        assert_eq!(b.dangling.len(), 2);
        assert!(b.dangling.iter().all(|d| d.exterior_links == vec![0, 2]));
    }

    fn random_hermitian(d: usize, seed: u64) -> ComplexMatrix {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = ComplexMatrix::from_fn(d, d, |_, _| Complex64::new(next(), next()));
        qops::hermitian_part(&m)
    }

    #[test]
    fn structured_liouvillian_matches_dense_lindblad_form() {
        let p = ModelParams::new(1.3, -0.4, 2.2, 0.7);
        let bonds = [(0, 1), (1, 2), (0, 2)];
        let h = build_hamiltonian(&p, 3, &bonds).unwrap();
        let rho = random_hermitian(8, 3);
        let i = Complex64::new(0.0, 1.0);
        let mut expect = (&h * &rho - &rho * &h) * -i;
        for s in 0..3 {
            let lo = embed(&qops::sigma_minus(), s, 3).unwrap();
            let lo_dag = lo.adjoint();
            let n = &lo_dag * &lo;
            expect += (&lo * &rho * &lo_dag - (&n * &rho + &rho * &n) * c(0.5)) * c(p.gamma);
        }
        let got = Liouvillian::new(&p, 3, &bonds).unwrap().apply(&rho);
        assert!(max_abs(&(got - expect)) < 1e-14);
    }

    #[test]
    fn mean_field_boundary_matches_explicit_shift() {
        // product exterior: each dangling bond shifts σ_z^b by V/4 · z
        let p = ModelParams::new(0.0, 0.0, 1.7, 1.0);
        let l = Lattice::new(4, 4, Boundary::Periodic).unwrap();
        let z = -0.37;
        let b = BoundaryField::for_cluster(&l, &[0, 1], z, None).unwrap();
        let rho = random_hermitian(4, 9);
        let mut h = ComplexMatrix::zeros(4, 4);
        for db in &b.dangling {
            h += embed(&pauli(Axis::Z), db.site, 2).unwrap() * c(p.v / 4.0 * z);
        }
        let i = Complex64::new(0.0, 1.0);
        let expect = (&h * &rho - &rho * &h) * -i;
        assert!(max_abs(&(b.apply(p.v, 2, &rho) - expect)) < 1e-14);
    }
}
