//! Variational integration of the master equation.
//!
//! Each implicit-midpoint step `ρ' = ρ + τ/2 ℒ[ρ + ρ']` is replaced by a
//! minimization of the trace norm of its residual over a variational
//! manifold. The residual of the full lattice state is bounded by a sum of
//! cluster residuals: bonds for translationally invariant product states,
//! three-site chains for states with nearest-neighbour correlations. Sites
//! outside a cluster enter through [`BoundaryField`] terms built from the same
//! variational state.

use std::sync::OnceLock;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Bond, Boundary, BoundaryField, DanglingBond, Lattice, Liouvillian, ModelParams};
use crate::optim::{gauss_newton, nelder_mead, GaussNewtonOptions, NelderMeadOptions};
use crate::qops::{
    self, pauli, pauli_pair, trace_norm_unchecked, Axis, ComplexMatrix,
    DensityMatrix,
};
use crate::series::TimeSeries;

fn cplx(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Translationally invariant product state, `ρ_i = 1/2 + Σ_μ α_μ σ_μ` on every site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductParams {
    pub alpha: [f64; 3],
}

impl ProductParams {
    pub fn new(alpha: [f64; 3]) -> Result<Self> {
        let p = Self { alpha };
        p.validate()?;
        Ok(p)
    }

    /// Every site in the electronic ground state.
    pub fn ground() -> Self {
        Self { alpha: [0.0, 0.0, -0.5] }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.bloch_radius();
        if !r.is_finite() || r > 0.5 + 1e-12 {
            return Err(Error::Config(format!("|alpha| = {r} exceeds 1/2")));
        }
        Ok(())
    }

    pub fn bloch_radius(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn single_site(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::identity(2, 2) * cplx(0.5);
        for (a, axis) in self.alpha.iter().zip(Axis::PAULI) {
            m += pauli(axis) * cplx(*a);
        }
        m
    }

    /// `<σ_z>` of a single site.
    pub fn z_expectation(&self) -> f64 {
        2.0 * self.alpha[2]
    }

    pub fn rydberg_density(&self) -> f64 {
        0.5 + self.alpha[2]
    }
}

/// Two-site coefficients of `ρ_ij = Σ_{μν} α_{μν} σ_μ ⊗ σ_ν`, with
/// `α_00 = 1/4` and `α_{μν} = α_{νμ}` (identical, exchange-symmetric bonds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedParams {
    alpha2: [[f64; 4]; 4],
}

fn pauli_pairs() -> &'static [ComplexMatrix] {
    static PAIRS: OnceLock<Vec<ComplexMatrix>> = OnceLock::new();
    PAIRS.get_or_init(|| Axis::ALL.iter().flat_map(|a| Axis::ALL.iter().map(|b| pauli_pair(*a, *b))).collect())
}

fn pauli_expansion(coef: impl Fn(usize, usize) -> f64) -> ComplexMatrix {
    let pairs = pauli_pairs();
    let mut m = ComplexMatrix::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            let a = coef(i, j);
            if a != 0.0 {
                m += &pairs[4 * i + j] * cplx(a);
            }
        }
    }
    m
}

fn min_eig(m: &ComplexMatrix) -> f64 {
    qops::hermitian_part(m).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Index pairs of the nine free coefficients of [`CorrelatedParams`].
pub const CORRELATED_FREE: [(usize, usize); 9] =
    [(0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3)];

impl CorrelatedParams {
    pub fn new(alpha2: [[f64; 4]; 4]) -> Result<Self> {
        if alpha2[0][0] != 0.25 {
            return Err(Error::Config(format!("alpha_00 must be 1/4, got {}", alpha2[0][0])));
        }
        for m in 0..4 {
            for n in 0..m {
                if (alpha2[m][n] - alpha2[n][m]).abs() > 1e-14 {
                    return Err(Error::Config(format!("alpha_{m}{n} != alpha_{n}{m}")));
                }
            }
        }
        Ok(Self { alpha2 })
    }

    pub fn from_product(p: &ProductParams) -> Self {
        let a = [1.0, p.alpha[0], p.alpha[1], p.alpha[2]];
        let mut alpha2 = [[0.0; 4]; 4];
        for m in 0..4 {
            for n in 0..4 {
                alpha2[m][n] = a[m] * a[n] / if m == 0 || n == 0 { 2.0 } else { 1.0 };
            }
        }
        alpha2[0][0] = 0.25;
        Self { alpha2 }
    }

    pub fn ground() -> Self {
        Self::from_product(&ProductParams::ground())
    }

    pub fn from_free(x: &[f64]) -> Self {
        let mut alpha2 = [[0.0; 4]; 4];
        alpha2[0][0] = 0.25;
        for (&(m, n), v) in CORRELATED_FREE.iter().zip(x) {
            alpha2[m][n] = *v;
            alpha2[n][m] = *v;
        }
        Self { alpha2 }
    }

    pub fn free(&self) -> Vec<f64> {
        CORRELATED_FREE.iter().map(|&(m, n)| self.alpha2[m][n]).collect()
    }

    pub fn alpha2(&self) -> &[[f64; 4]; 4] {
        &self.alpha2
    }

    /// Single-site Bloch coordinates, `α_μ = 2 α_{0μ}`.
    pub fn single_site_params(&self) -> ProductParams {
        ProductParams { alpha: [2.0 * self.alpha2[0][1], 2.0 * self.alpha2[0][2], 2.0 * self.alpha2[0][3]] }
    }

    pub fn single_site(&self) -> ComplexMatrix {
        self.single_site_params().single_site()
    }

    pub fn pair_state(&self) -> ComplexMatrix {
        pauli_expansion(|m, n| self.alpha2[m][n])
    }

    /// Connected coefficients `α_{mn} - α_m α_n` (m, n ≥ 1); the single-site
    /// rows of `C` vanish identically.
    fn connected(&self) -> [[f64; 3]; 3] {
        let a = self.single_site_params().alpha;
        let mut c = [[0.0; 3]; 3];
        for m in 0..3 {
            for n in 0..3 {
                c[m][n] = self.alpha2[m + 1][n + 1] - a[m] * a[n];
            }
        }
        c
    }

    /// `C = ρ_ij - ρ_i ⊗ ρ_j`.
    pub fn correlation(&self) -> ComplexMatrix {
        let c = self.connected();
        pauli_expansion(|m, n| if m == 0 || n == 0 { 0.0 } else { c[m - 1][n - 1] })
    }

    /// `Tr_2[(1 ⊗ σ_z) C]`, the operator an exterior neighbour's correlation
    /// leaves on the interior endpoint of a dangling bond.
    pub fn boundary_correlation(&self) -> ComplexMatrix {
        let c = self.connected();
        let mut out = ComplexMatrix::zeros(2, 2);
        for (m, axis) in Axis::PAULI.iter().enumerate() {
            out += pauli(*axis) * cplx(2.0 * c[m][2]);
        }
        out
    }

    pub fn min_pair_eigenvalue(&self) -> f64 {
        min_eig(&self.pair_state())
    }

    pub fn rydberg_density(&self) -> f64 {
        self.single_site_params().rydberg_density()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Manifold {
    Product,
    Correlated,
}

/// A point on either variational manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VarState {
    Product(ProductParams),
    Correlated(CorrelatedParams),
}

impl VarState {
    pub fn ground(manifold: Manifold) -> Self {
        match manifold {
            Manifold::Product => VarState::Product(ProductParams::ground()),
            Manifold::Correlated => VarState::Correlated(CorrelatedParams::ground()),
        }
    }

    pub fn manifold(&self) -> Manifold {
        match self {
            VarState::Product(_) => Manifold::Product,
            VarState::Correlated(_) => Manifold::Correlated,
        }
    }

    pub fn free(&self) -> Vec<f64> {
        match self {
            VarState::Product(p) => p.alpha.to_vec(),
            VarState::Correlated(c) => c.free(),
        }
    }

    pub fn from_free(manifold: Manifold, x: &[f64]) -> Self {
        match manifold {
            Manifold::Product => VarState::Product(ProductParams { alpha: [x[0], x[1], x[2]] }),
            Manifold::Correlated => VarState::Correlated(CorrelatedParams::from_free(x)),
        }
    }

    pub fn free_names(manifold: Manifold) -> Vec<String> {
        match manifold {
            Manifold::Product => ["alpha_x", "alpha_y", "alpha_z"].iter().map(|s| s.to_string()).collect(),
            Manifold::Correlated => {
                let label = ["0", "x", "y", "z"];
                CORRELATED_FREE.iter().map(|&(m, n)| format!("alpha_{}{}", label[m], label[n])).collect()
            }
        }
    }

    pub fn single_site_params(&self) -> ProductParams {
        match self {
            VarState::Product(p) => *p,
            VarState::Correlated(c) => c.single_site_params(),
        }
    }

    pub fn rydberg_density(&self) -> f64 {
        self.single_site_params().rydberg_density()
    }

    /// Correlated view of the state (product states have `C = 0`).
    pub fn as_correlated(&self) -> CorrelatedParams {
        match self {
            VarState::Product(p) => CorrelatedParams::from_product(p),
            VarState::Correlated(c) => *c,
        }
    }

    /// Two-site reduced state of a bond.
    pub fn pair_state(&self) -> ComplexMatrix {
        self.as_correlated().pair_state()
    }

    /// `Σ max(0, -λ)²` over the eigenvalues of the smallest ansatz block
    /// (single site for product states, a bond for correlated ones).
    pub fn positivity_violation(&self) -> f64 {
        match self {
            VarState::Product(p) => (p.bloch_radius() - 0.5).max(0.0).powi(2),
            VarState::Correlated(c) => {
                let m = qops::hermitian_part(&c.pair_state());
                m.symmetric_eigenvalues().iter().map(|l| (-l).max(0.0).powi(2)).sum()
            }
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            VarState::Product(p) => 0.5 - p.bloch_radius(),
            VarState::Correlated(c) => c.min_pair_eigenvalue(),
        }
    }

    fn parts(&self) -> (ComplexMatrix, Option<ComplexMatrix>) {
        match self {
            VarState::Product(p) => (p.single_site(), None),
            VarState::Correlated(c) => (c.single_site(), Some(c.correlation())),
        }
    }

    /// Boundary coupling for a cluster with the given dangling bonds.
    pub fn boundary(&self, dangling: &[DanglingBond]) -> BoundaryField {
        let p = self.single_site_params();
        let correlation = match self {
            VarState::Product(_) => None,
            VarState::Correlated(c) => Some(c.boundary_correlation()),
        };
        BoundaryField { z_exterior: p.z_expectation(), correlation, dangling: dangling.to_vec() }
    }
}

/// All sets of pairwise disjoint bonds (including the empty set).
pub fn matchings(bonds: &[Bond]) -> Vec<Vec<Bond>> {
    fn rec(bonds: &[Bond], used: &mut Vec<usize>, current: &mut Vec<Bond>, out: &mut Vec<Vec<Bond>>) {
        let Some((&(a, b), rest)) = bonds.split_first() else {
            out.push(current.clone());
            return;
        };
        rec(rest, used, current, out);
        if !used.contains(&a) && !used.contains(&b) {
            used.extend([a, b]);
            current.push((a, b));
            rec(rest, used, current, out);
            current.pop();
            used.truncate(used.len() - 2);
        }
    }
    let mut out = Vec::new();
    rec(bonds, &mut Vec::new(), &mut Vec::new(), &mut out);
    out
}

/// Index tables for evaluating the cluster ansatz: for each set of disjoint
/// bonds, the sub-index of every basis state within each tensor factor.
#[derive(Debug, Clone)]
struct AnsatzPlan {
    n_sites: usize,
    /// Per matching: single-site tables then pair tables.
    terms: Vec<(Vec<Vec<u8>>, Vec<Vec<u8>>)>,
}

impl AnsatzPlan {
    fn new(n_sites: usize, bonds: &[Bond], correlated: bool) -> Self {
        let d = qops::dim_of(n_sites);
        let bit = |s: usize| qops::site_bit(s, n_sites);
        let single = |s: usize| (0..d).map(|r| u8::from(r & bit(s) != 0)).collect::<Vec<u8>>();
        let pair = |a: usize, b: usize| {
            (0..d).map(|r| 2 * u8::from(r & bit(a) != 0) + u8::from(r & bit(b) != 0)).collect::<Vec<u8>>()
        };
        let sets = if correlated { matchings(bonds) } else { vec![Vec::new()] };
        let terms = sets
            .iter()
            .map(|m| {
                let singles =
                    (0..n_sites).filter(|s| !m.iter().any(|&(a, b)| a == *s || b == *s)).map(single).collect();
                let pairs = m.iter().map(|&(a, b)| pair(a, b)).collect();
                (singles, pairs)
            })
            .collect();
        Self { n_sites, terms }
    }

    /// `Σ_M Π_{(ij)∈M} C_ij Π_{k∉M} ρ_k` over all sets `M` of disjoint bonds.
    fn evaluate(&self, single: &ComplexMatrix, corr: Option<&ComplexMatrix>) -> ComplexMatrix {
        let d = qops::dim_of(self.n_sites);
        let s = [[single[(0, 0)], single[(0, 1)]], [single[(1, 0)], single[(1, 1)]]];
        let zero = Complex64::new(0.0, 0.0);
        let mut c = [[zero; 4]; 4];
        if let Some(corr) = corr {
            for (i, row) in c.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = corr[(i, j)];
                }
            }
        }
        let mut out = ComplexMatrix::zeros(d, d);
        for (singles, pairs) in &self.terms {
            for col in 0..d {
                for row in 0..d {
                    let mut v = Complex64::new(1.0, 0.0);
                    for t in singles {
                        v *= s[t[row] as usize][t[col] as usize];
                    }
                    for t in pairs {
                        v *= c[t[row] as usize][t[col] as usize];
                    }
                    out[(row, col)] += v;
                }
            }
        }
        out
    }
}

/// Product density matrix `⊗_i ρ_i` on `n_sites` sites.
pub fn build_product_state(p: &ProductParams, n_sites: usize) -> Result<DensityMatrix> {
    p.validate()?;
    let m = AnsatzPlan::new(n_sites, &[], false).evaluate(&p.single_site(), None);
    Ok(DensityMatrix::from_matrix_unchecked(m, n_sites))
}

/// Correlated ansatz on a cluster: the sum over all sets of disjoint interior
/// bonds, with `C` on matched pairs and `ρ_i` on the remaining sites.
pub fn build_cluster_state(p: &CorrelatedParams, n_sites: usize, bonds: &[Bond]) -> Result<DensityMatrix> {
    if !(1..=5).contains(&n_sites) {
        return Err(Error::InvalidSites(format!("cluster must have 1 to 5 sites, got {n_sites}")));
    }
    for &(a, b) in bonds {
        if a >= n_sites || b >= n_sites || a == b {
            return Err(Error::InvalidBond(format!("bond ({a},{b}) invalid for {n_sites} sites")));
        }
    }
    let m = AnsatzPlan::new(n_sites, bonds, true).evaluate(&p.single_site(), Some(&p.correlation()));
    Ok(DensityMatrix::from_matrix_unchecked(qops::hermitian_part(&m), n_sites))
}

/// Cluster state for either manifold.
pub fn cluster_state(state: &VarState, n_sites: usize, bonds: &[Bond]) -> ComplexMatrix {
    let (single, corr) = state.parts();
    AnsatzPlan::new(n_sites, bonds, corr.is_some()).evaluate(&single, corr.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterShape {
    /// Straight three-site chains.
    Straight,
    /// L-shaped three-site clusters.
    Bent,
}

/// A cluster of lattice sites with its interior bonds and dangling bonds,
/// both in cluster-local indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub sites: Vec<usize>,
    pub bonds: Vec<Bond>,
    pub dangling: Vec<DanglingBond>,
}

impl Cluster {
    pub fn new(lattice: &Lattice, sites: &[usize]) -> Result<Self> {
        let nb = crate::model::cluster_neighbors(lattice, sites)?;
        let local = |g: usize| sites.iter().position(|&s| s == g).unwrap();
        let bonds = nb.interior.iter().map(|&(a, b)| (local(a), local(b))).collect();
        let dangling = BoundaryField::for_cluster(lattice, sites, 0.0, None)?.dangling;
        Ok(Self { sites: sites.to_vec(), bonds, dangling })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }
}

/// Lattice that hosts the representative cluster of a periodic lattice: the
/// lattice itself when every extended dimension is at least 3, otherwise a
/// 5×5 torus (7-site ring in one dimension) standing in for the infinite limit.
pub fn periodic_host(lattice: &Lattice) -> Result<Lattice> {
    let (w, h) = (lattice.width(), lattice.height());
    let one_d = w == 1 || h == 1;
    let fits = if one_d { w.max(h) >= 3 } else { w >= 3 && h >= 3 };
    if fits {
        Ok(lattice.clone())
    } else if one_d {
        Lattice::chain(7, Boundary::Periodic)
    } else {
        Lattice::new(5, 5, Boundary::Periodic)
    }
}

/// Clusters whose residuals are summed into the defect bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGeometry {
    lattice: Lattice,
    clusters: Vec<Cluster>,
    translation_invariant: bool,
}

impl ClusterGeometry {
    /// Standard geometry for a lattice. Periodic lattices use a single
    /// representative cluster on `periodic_host(lattice)`. Open lattices sum
    /// over every cluster they contain; a lattice no larger than one cluster is
    /// its own single cluster.
    pub fn for_lattice(lattice: &Lattice, manifold: Manifold, shape: ClusterShape) -> Result<Self> {
        let size = match manifold {
            Manifold::Product => 2,
            Manifold::Correlated => 3,
        };
        if lattice.boundary() == Boundary::Periodic {
            let one_d = lattice.width() == 1 || lattice.height() == 1;
            let embed = periodic_host(lattice)?;
            let sites = match (manifold, shape, one_d) {
                (Manifold::Product, _, _) => vec![0, 1],
                (Manifold::Correlated, ClusterShape::Straight, _) | (Manifold::Correlated, _, true) => vec![0, 1, 2],
                (Manifold::Correlated, ClusterShape::Bent, false) => vec![embed.site(0, 1), embed.site(0, 0), embed.site(1, 0)],
            };
            let cluster = Cluster::new(&embed, &sites)?;
            return Ok(Self { lattice: embed, clusters: vec![cluster], translation_invariant: true });
        }
        let n = lattice.n_sites();
        if n <= size {
            let all: Vec<usize> = (0..n).collect();
            let cluster = Cluster::new(lattice, &all)?;
            return Ok(Self { lattice: lattice.clone(), clusters: vec![cluster], translation_invariant: false });
        }
        let site_lists = match manifold {
            Manifold::Product => lattice.bonds().iter().map(|&(a, b)| vec![a, b]).collect(),
            Manifold::Correlated => {
                let straight = three_site_paths(lattice, true);
                match shape {
                    ClusterShape::Straight if !straight.is_empty() => straight,
                    ClusterShape::Straight => three_site_paths(lattice, false),
                    ClusterShape::Bent => {
                        let all = three_site_paths(lattice, false);
                        all.into_iter().filter(|p| !straight.contains(p)).collect()
                    }
                }
            }
        };
        Self::explicit(lattice, &site_lists)
    }

    /// Geometry with an explicit cluster list on a finite lattice.
    pub fn explicit(lattice: &Lattice, clusters: &[Vec<usize>]) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::InvalidSites("no clusters".into()));
        }
        let clusters = clusters.iter().map(|c| Cluster::new(lattice, c)).collect::<Result<Vec<_>>>()?;
        Ok(Self { lattice: lattice.clone(), clusters, translation_invariant: false })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn is_translation_invariant(&self) -> bool {
        self.translation_invariant
    }
}

/// Three-site paths `a - b - c` (centre `b`), each listed once; with
/// `straight` only collinear ones.
pub fn three_site_paths(lattice: &Lattice, straight: bool) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for b in 0..lattice.n_sites() {
        let nb = lattice.neighbors(b);
        for (i, &a) in nb.iter().enumerate() {
            for &c in &nb[i + 1..] {
                if a == c {
                    continue;
                }
                if straight {
                    let collinear = [(1, 0), (0, 1)].iter().any(|&(dx, dy)| {
                        let l = lattice.shifted(b, -dx, -dy);
                        let r = lattice.shifted(b, dx, dy);
                        (l == Some(a) && r == Some(c)) || (l == Some(c) && r == Some(a))
                    });
                    if !collinear {
                        continue;
                    }
                }
                let path = vec![a.min(c), b, a.max(c)];
                if !out.contains(&path) {
                    out.push(path);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariationalConfig {
    /// Step size; set per run rather than read from the optimizer section.
    #[serde(skip)]
    pub tau: f64,
    /// Minimum eigenvalue tolerated in the two-site ansatz block.
    pub pos_tol: f64,
    /// Weight of the `Σ max(0, -λ)²` positivity penalty.
    pub penalty: f64,
    pub xtol: f64,
    pub ftol: f64,
    pub max_evals: usize,
    pub restarts: usize,
    pub restart_radius: f64,
    #[serde(skip)]
    pub seed: u64,
    pub shape: ClusterShape,
    /// Steady state: `|Δα|_∞ / τ` threshold.
    pub ss_tol: f64,
    /// Steady state: consecutive steps below `ss_tol`.
    pub ss_window: usize,
    /// Steady state: give up after this much evolution time.
    pub ss_max_time: f64,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        Self {
            tau: 0.01,
            pos_tol: 1e-6,
            penalty: 1e3,
            xtol: 1e-9,
            ftol: 1e-12,
            max_evals: 5000,
            restarts: 3,
            restart_radius: 0.05,
            seed: 0,
            shape: ClusterShape::Straight,
            ss_tol: 1e-8,
            ss_window: 10,
            ss_max_time: 200.0,
        }
    }
}

impl VariationalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.pos_tol < 0.0 || self.penalty < 0.0 || self.xtol <= 0.0 || self.max_evals == 0 {
            return Err(Error::Config("invalid optimizer tolerances".into()));
        }
        if self.ss_window == 0 || !(self.ss_tol > 0.0) {
            return Err(Error::Config("invalid steady-state criterion".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectReport {
    /// Minimized defect bound (sum of cluster trace norms), without penalty.
    pub value: f64,
    /// Objective evaluations spent on the step.
    pub iterations: usize,
    pub converged: bool,
    /// Smallest eigenvalue of the accepted ansatz block.
    pub min_eigenvalue: f64,
}

struct ClusterTerm {
    generator: Liouvillian,
    cluster: Cluster,
    product_plan: AnsatzPlan,
    correlated_plan: AnsatzPlan,
}

const IRLS_ROUNDS: usize = 12;

/// Variational integrator for a fixed model, geometry and step size.
pub struct Integrator {
    params: ModelParams,
    geometry: ClusterGeometry,
    terms: Vec<ClusterTerm>,
    config: VariationalConfig,
}

impl Integrator {
    pub fn new(params: &ModelParams, geometry: ClusterGeometry, config: VariationalConfig) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        let terms = geometry
            .clusters()
            .iter()
            .map(|c| {
                Ok(ClusterTerm {
                    generator: Liouvillian::new(params, c.n_sites(), &c.bonds)?,
                    cluster: c.clone(),
                    product_plan: AnsatzPlan::new(c.n_sites(), &c.bonds, false),
                    correlated_plan: AnsatzPlan::new(c.n_sites(), &c.bonds, true),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { params: *params, geometry, terms, config })
    }

    pub fn for_lattice(params: &ModelParams, lattice: &Lattice, manifold: Manifold, config: VariationalConfig) -> Result<Self> {
        let geometry = ClusterGeometry::for_lattice(lattice, manifold, config.shape)?;
        Self::new(params, geometry, config)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn geometry(&self) -> &ClusterGeometry {
        &self.geometry
    }

    pub fn config(&self) -> &VariationalConfig {
        &self.config
    }

    pub fn tau(&self) -> f64 {
        self.config.tau
    }

    /// `ℒρ_c` for every cluster, with the boundary built from the same state.
    fn cluster_images(&self, state: &VarState) -> Vec<(ComplexMatrix, ComplexMatrix)> {
        let (single, corr) = state.parts();
        self.terms
            .iter()
            .map(|t| {
                let rho = match &corr {
                    Some(c) => t.correlated_plan.evaluate(&single, Some(c)),
                    None => t.product_plan.evaluate(&single, None),
                };
                let boundary = state.boundary(&t.cluster.dangling);
                let l_rho = t.generator.apply_with_boundary(&boundary, &rho);
                (rho, l_rho)
            })
            .collect()
    }

    /// `ρ_c + τ/2 ℒρ_c` for the current state.
    fn step_bases(&self, now: &VarState) -> Vec<ComplexMatrix> {
        let half = cplx(self.config.tau / 2.0);
        self.cluster_images(now).into_iter().map(|(rho, l)| rho + l * half).collect()
    }

    fn residuals(&self, bases: &[ComplexMatrix], next: &VarState) -> Vec<ComplexMatrix> {
        let half = cplx(self.config.tau / 2.0);
        self.cluster_images(next).into_iter().zip(bases).map(|((rho, l), base)| rho - l * half - base).collect()
    }

    /// Cluster-sum bound on the trace norm of the midpoint residual between two states.
    pub fn defect(&self, now: &VarState, next: &VarState) -> Result<f64> {
        if now.manifold() != next.manifold() {
            return Err(Error::Config("states on different manifolds".into()));
        }
        let bases = self.step_bases(now);
        Ok(self.residuals(&bases, next).iter().map(trace_norm_unchecked).sum())
    }

    fn objective(&self, bases: &[ComplexMatrix], next: &VarState, penalty: f64) -> f64 {
        let d: f64 = self.residuals(bases, next).iter().map(trace_norm_unchecked).sum();
        d + penalty * next.positivity_violation()
    }

    /// Simplex minimization from `x0`, followed by one tighter restart
    /// around the result when the first pass still made progress.
    fn polish(&self, bases: &[ComplexMatrix], x0: Vec<f64>, f0: f64, penalty: f64, evals: &mut usize) -> (Vec<f64>, f64, bool) {
        let manifold = bases_manifold(x0.len());
        let (mut best_x, mut best_f) = (x0, f0);
        let mut converged = true;
        let mut opts = NelderMeadOptions {
            initial_step: best_f.clamp(1e-9, 1e-2),
            xtol: self.config.xtol,
            ftol: self.config.ftol,
            max_evals: self.config.max_evals,
        };
        for pass in 0..2 {
            if best_f <= 1e-14 {
                break;
            }
            let res = nelder_mead(|x| self.objective(bases, &VarState::from_free(manifold, x), penalty), &best_x, &opts);
            *evals += res.evals;
            if pass == 0 {
                converged = res.converged;
            }
            let gained = best_f - res.f;
            if res.f < best_f {
                best_x = res.x;
                best_f = res.f;
            }
            if gained <= self.config.ftol {
                break;
            }
            opts.initial_step = (opts.initial_step * 1e-2).max(10.0 * self.config.xtol);
        }
        (best_x, best_f, converged)
    }

    fn residual_vector(&self, bases: &[ComplexMatrix], next: &VarState) -> Vec<f64> {
        let mut out = Vec::new();
        for r in self.residuals(bases, next) {
            let r = qops::hermitian_part(&r);
            for c in 0..r.ncols() {
                out.push(r[(c, c)].re);
                for row in 0..c {
                    out.push(std::f64::consts::SQRT_2 * r[(row, c)].re);
                    out.push(std::f64::consts::SQRT_2 * r[(row, c)].im);
                }
            }
        }
        let pen = (self.config.penalty * next.positivity_violation()).sqrt();
        out.push(pen);
        out
    }

    /// Iteratively reweighted least squares for the trace-norm bound:
    /// `|R|₁ = Tr[R (R² + ε²)^{-1/2} R]` at the current iterate, minimized by
    /// Gauss–Newton on `(R₀² + ε²)^{-1/4} R` with `ε` shrinking each round.
    fn irls(&self, bases: &[ComplexMatrix], x0: Vec<f64>, f0: f64, penalty: f64, evals: &mut usize) -> (Vec<f64>, f64) {
        let manifold = bases_manifold(x0.len());
        let dim: usize = bases.iter().map(|b| b.nrows()).sum();
        let (mut x, mut f) = (x0, f0);
        let mut eps = (f / dim as f64).max(1e-15);
        let opts = GaussNewtonOptions { max_iters: 3, fd_step: 1e-7, rtol: 0.0 };
        for _ in 0..IRLS_ROUNDS {
            let weights: Vec<ComplexMatrix> = self
                .residuals(bases, &VarState::from_free(manifold, &x))
                .iter()
                .map(|r| {
                    let r = qops::hermitian_part(r);
                    let eig = r.clone().symmetric_eigen();
                    let d = eig.eigenvalues.map(|l| Complex64::new((l * l + eps * eps).powf(-0.25), 0.0));
                    &eig.eigenvectors * ComplexMatrix::from_diagonal(&d) * eig.eigenvectors.adjoint()
                })
                .collect();
            let weighted = |y: &[f64]| {
                let next = VarState::from_free(manifold, y);
                let mut out = Vec::with_capacity(2 * dim * dim + 1);
                for (r, w) in self.residuals(bases, &next).iter().zip(&weights) {
                    out.extend((w * r).iter().flat_map(|z| [z.re, z.im]));
                }
                out.push((penalty * next.positivity_violation()).sqrt());
                out
            };
            let gn = gauss_newton(weighted, &x, &opts);
            *evals += gn.evals + 1;
            let f_new = self.objective(bases, &VarState::from_free(manifold, &gn.x), penalty);
            let moved = if f_new < f {
                let d = x.iter().zip(&gn.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                x = gn.x;
                f = f_new;
                d
            } else {
                0.0
            };
            if moved < self.config.xtol && eps <= 1e-3 * f.max(1e-15) / dim as f64 {
                break;
            }
            eps = (0.1 * eps).max(1e-3 * f / dim as f64).max(1e-15);
        }
        (x, f)
    }

    /// One variational midpoint step from `now`; `previous` (the state one
    /// step earlier) seeds a linear extrapolation for the warm start.
    ///
    /// A result whose two-site block has an eigenvalue below `-pos_tol` is
    /// rejected and re-minimized with the penalty weight raised tenfold (up to
    /// `1e9`); if the simplex fails to converge, random restarts follow.
    pub fn step(&self, now: &VarState, previous: Option<&VarState>, step_index: u64) -> (VarState, DefectReport) {
        let manifold = now.manifold();
        let bases = self.step_bases(now);
        let mut penalty = self.config.penalty;
        let mut evals = 0usize;
        let obj = |x: &[f64], penalty: f64, evals: &mut usize| {
            *evals += 1;
            self.objective(&bases, &VarState::from_free(manifold, x), penalty)
        };

        let x_now = now.free();
        let mut start = x_now.clone();
        let mut f_start = obj(&start, penalty, &mut evals);
        if let Some(prev) = previous.filter(|p| p.manifold() == manifold) {
            let extrap: Vec<f64> = x_now.iter().zip(prev.free()).map(|(a, b)| 2.0 * a - b).collect();
            let f = obj(&extrap, penalty, &mut evals);
            if f < f_start {
                start = extrap;
                f_start = f;
            }
        }

        // Gauss-Newton on the Hilbert-Schmidt residual for a warm start
        let gn = gauss_newton(
            |x| self.residual_vector(&bases, &VarState::from_free(manifold, x)),
            &start,
            &GaussNewtonOptions::default(),
        );
        evals += gn.evals;
        let f_gn = obj(&gn.x, penalty, &mut evals);
        let (x0, f0) = if f_gn <= f_start { (gn.x, f_gn) } else { (start, f_start) };
        let (x0, f0) = self.irls(&bases, x0, f0, penalty, &mut evals);
        let (mut best_x, mut best_f, mut converged) = self.polish(&bases, x0, f0, penalty, &mut evals);

        let min_eig = |x: &[f64]| VarState::from_free(manifold, x).min_eigenvalue();
        while min_eig(&best_x) < -self.config.pos_tol && penalty < 1e9 {
            penalty *= 10.0;
            let f = obj(&best_x, penalty, &mut evals);
            let res = self.polish(&bases, best_x, f, penalty, &mut evals);
            (best_x, best_f, converged) = res;
        }

        if !converged {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ step_index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let opts = NelderMeadOptions {
                initial_step: self.config.restart_radius,
                xtol: self.config.xtol,
                ftol: self.config.ftol,
                max_evals: self.config.max_evals,
            };
            for _ in 0..self.config.restarts {
                let x0: Vec<f64> = best_x
                    .iter()
                    .map(|v| v + self.config.restart_radius * (2.0 * rng.random::<f64>() - 1.0))
                    .collect();
                let res =
                    nelder_mead(|x| self.objective(&bases, &VarState::from_free(manifold, x), penalty), &x0, &opts);
                evals += res.evals;
                if res.f < best_f {
                    best_x = res.x;
                    best_f = res.f;
                    converged = res.converged;
                }
            }
        }

        let state = VarState::from_free(manifold, &best_x);
        let value = self.residuals(&bases, &state).iter().map(trace_norm_unchecked).sum();
        let min_eigenvalue = state.min_eigenvalue();
        let converged = converged && min_eigenvalue >= -self.config.pos_tol;
        (state, DefectReport { value, iterations: evals, converged, min_eigenvalue })
    }
}

fn bases_manifold(n_free: usize) -> Manifold {
    if n_free == CORRELATED_FREE.len() {
        Manifold::Correlated
    } else {
        Manifold::Product
    }
}

/// Output of a variational evolution: one record per step.
#[derive(Debug, Clone)]
pub struct VariationalRun {
    /// Columns `t, n_r, defect` followed by the free parameters.
    pub series: TimeSeries,
    pub states: Vec<VarState>,
    pub reports: Vec<DefectReport>,
}

impl VariationalRun {
    pub fn tau(&self) -> f64 {
        let t = self.series.times();
        if t.len() > 1 {
            t[1] - t[0]
        } else {
            0.0
        }
    }

    /// State at time `t`, linearly interpolated between steps.
    pub fn state_at(&self, t: f64) -> VarState {
        let times = self.series.times();
        let last = self.states.len() - 1;
        if t <= times[0] {
            return self.states[0];
        }
        let pos = times.partition_point(|&x| x < t);
        if pos > last {
            return self.states[last];
        }
        let (ta, tb) = (times[pos - 1], times[pos]);
        if (tb - t).abs() < 1e-12 * tb.abs().max(1.0) {
            return self.states[pos];
        }
        let w = (t - ta) / (tb - ta);
        let (a, b) = (self.states[pos - 1].free(), self.states[pos].free());
        let x: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u + w * (v - u)).collect();
        VarState::from_free(self.states[pos].manifold(), &x)
    }
}

/// Evolves `initial` for `t_final`, recording every step.
pub fn evolve_variational(integrator: &Integrator, initial: &VarState, t_final: f64) -> Result<VariationalRun> {
    let manifold = initial.manifold();
    let tau = integrator.tau();
    let steps = (t_final / tau).round() as usize;
    let mut columns = vec!["n_r".to_string(), "defect".to_string()];
    columns.extend(VarState::free_names(manifold));
    let mut series = TimeSeries::new(&columns);
    let mut states = vec![*initial];
    let mut reports = vec![DefectReport { value: 0.0, iterations: 0, converged: true, min_eigenvalue: initial.min_eigenvalue() }];
    let row = |t: f64, s: &VarState, d: f64, series: &mut TimeSeries| -> Result<()> {
        let mut v = vec![s.rydberg_density(), d];
        v.extend(s.free());
        series.push(t, &v)
    };
    row(0.0, initial, 0.0, &mut series)?;
    for k in 1..=steps {
        let prev = if k >= 2 { Some(states[k - 2]) } else { None };
        let (next, report) = integrator.step(&states[k - 1], prev.as_ref(), k as u64);
        row(k as f64 * tau, &next, report.value, &mut series)?;
        states.push(next);
        reports.push(report);
    }
    Ok(VariationalRun { series, states, reports })
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub state: VarState,
    pub defect: f64,
    pub converged: bool,
    /// Evolution time needed to meet the criterion.
    pub time: f64,
    /// Final `|Δα|_∞ / τ`.
    pub rate: f64,
}

/// Evolves from `initial` until `|Δα|_∞/τ < ss_tol` for `ss_window`
/// consecutive steps (or `ss_max_time` elapses).
///
/// Once the rate drops below `100·ss_tol`, steps switch to a simplex
/// tolerance of at most `ss_tol·τ/10` so that optimizer jitter stays below the
/// detection threshold.
pub fn steady_state(integrator: &Integrator, initial: &VarState) -> Result<SteadyState> {
    let cfg = integrator.config();
    let tau = cfg.tau;
    let xtol = cfg.xtol.min(0.1 * cfg.ss_tol * tau);
    let tight = VariationalConfig { xtol, ftol: cfg.ftol.min(1e-5 * xtol), ..cfg.clone() };
    let fine = Integrator::new(integrator.params(), integrator.geometry().clone(), tight)?;
    let mut refining = false;
    let max_steps = (cfg.ss_max_time / tau).ceil() as u64;
    let mut prev: Option<VarState> = None;
    let mut now = *initial;
    let mut quiet = 0;
    let mut rate = f64::INFINITY;
    let mut defect = 0.0;
    for k in 1..=max_steps {
        let stepper = if refining { &fine } else { integrator };
        let (next, report) = stepper.step(&now, prev.as_ref(), k);
        rate = now.free().iter().zip(next.free()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / tau;
        refining |= rate < 100.0 * cfg.ss_tol;
        defect = report.value;
        prev = Some(now);
        now = next;
        quiet = if rate < cfg.ss_tol { quiet + 1 } else { 0 };
        if quiet >= cfg.ss_window {
            return Ok(SteadyState { state: now, defect, converged: true, time: k as f64 * tau, rate });
        }
    }
    Ok(SteadyState { state: now, defect, converged: false, time: max_steps as f64 * tau, rate })
}

/// `|ρ_ij|` two-site reduced state of the variational solution as a density matrix.
pub fn pair_density(state: &VarState) -> DensityMatrix {
    DensityMatrix::from_matrix_unchecked(qops::hermitian_part(&state.pair_state()), 2)
}

/// Stacks per-step parameters of a run into a matrix (rows = steps).
pub fn parameter_trace(run: &VariationalRun) -> nalgebra::DMatrix<f64> {
    let n = run.states.first().map(|s| s.free().len()).unwrap_or(0);
    let rows: Vec<DVector<f64>> = run.states.iter().map(|s| DVector::from_vec(s.free())).collect();
    nalgebra::DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c])
}
