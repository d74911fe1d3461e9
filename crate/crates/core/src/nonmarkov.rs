//! Time-local generator of the reduced two-site dynamics.
//!
//! A complete set of sixteen two-site states is propagated inside the
//! variational environment, the generator is recovered from finite-difference
//! derivatives and brought to canonical form `-i[H, ρ] + Σ_k γ_k (L_k ρ L_k† -
//! ½{L_k† L_k, ρ})`. Negative canonical rates measure non-Markovianity.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{superoperator, vectorize, FnGenerator, MidpointPropagator};
use crate::model::{Boundary, Lattice, Liouvillian, ModelParams};
use crate::qops::{self, hermitian_eig, kron, pauli_pair, Axis, ComplexMatrix, DensityMatrix};
use crate::series::TimeSeries;
use crate::variational::{pair_density, periodic_host, Cluster, VarState, VariationalRun};
use num_complex::Complex64;

/// Default step of the tomographic propagation. The finite-difference
/// derivative of two midpoint steps deviates from `ℒρ` by `O(τ² ℒ³)`.
pub const TOMOGRAPHY_TAU: f64 = 1e-5;

/// Above this condition number of the tomography inputs the reconstruction
/// is reported as rank deficient.
pub const MAX_CONDITION: f64 = 1e12;

/// Condition numbers above this are flagged in [`GeneratorMatrix::ill_conditioned`].
pub const WARN_CONDITION: f64 = 1e8;

fn cplx(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `G_α = σ_μ ⊗ σ_ν / 2` with `α = 4μ + ν`.
pub fn basis_operator(alpha: usize) -> ComplexMatrix {
    let a = Axis::from_index(alpha / 4).expect("alpha < 16");
    let b = Axis::from_index(alpha % 4).expect("alpha < 16");
    pauli_pair(a, b) * cplx(0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomographySet {
    states: Vec<DensityMatrix>,
}

impl TomographySet {
    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    /// Columns are the vectorized states.
    pub fn matrix(&self) -> ComplexMatrix {
        let cols: Vec<_> = self.states.iter().map(|s| vectorize(s.matrix())).collect();
        ComplexMatrix::from_columns(&cols)
    }
}

/// `ρ^{00} = 1/4` and `ρ^{mn} = (1 + σ_m ⊗ σ_n)/4`, indexed `4m + n`.
pub fn tomography_basis() -> TomographySet {
    let states = (0..16)
        .map(|k| {
            let mut m = ComplexMatrix::identity(4, 4);
            if k > 0 {
                m += basis_operator(k) * cplx(2.0);
            }
            DensityMatrix::new(m * cplx(0.25), 2).expect("tomography states are valid")
        })
        .collect();
    TomographySet { states }
}

/// Coefficients `c_{αβ}` of `ρ̇ = Σ c_{αβ} G_α ρ G_β`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub c: ComplexMatrix,
    /// Condition number of the input states.
    pub condition: f64,
    /// Largest Frobenius residual over the input pairs after Hermitization.
    pub residual: f64,
}

impl GeneratorMatrix {
    pub fn zero() -> Self {
        Self { c: ComplexMatrix::zeros(16, 16), condition: 1.0, residual: 0.0 }
    }

    pub fn ill_conditioned(&self) -> bool {
        self.condition > WARN_CONDITION
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let g: Vec<ComplexMatrix> = (0..16).map(basis_operator).collect();
        let mut out = ComplexMatrix::zeros(4, 4);
        for a in 0..16 {
            let left = &g[a] * rho;
            for b in 0..16 {
                let c = self.c[(a, b)];
                if c != Complex64::new(0.0, 0.0) {
                    out += &left * &g[b] * c;
                }
            }
        }
        out
    }

    /// Column-stacking superoperator `Σ c_{αβ} G_β^T ⊗ G_α`.
    pub fn superoperator(&self) -> ComplexMatrix {
        let g: Vec<ComplexMatrix> = (0..16).map(basis_operator).collect();
        let mut s = ComplexMatrix::zeros(16, 16);
        for a in 0..16 {
            for b in 0..16 {
                let c = self.c[(a, b)];
                if c != Complex64::new(0.0, 0.0) {
                    s += kron(&g[b].transpose(), &g[a]) * c;
                }
            }
        }
        s
    }

    /// Coefficients of a known superoperator, by orthonormality of the
    /// `G_β^T ⊗ G_α` basis.
    pub fn from_superoperator(s: &ComplexMatrix) -> Result<Self> {
        if s.nrows() != 16 || s.ncols() != 16 {
            return Err(Error::DimensionMismatch { expected: 16, got: s.nrows().max(s.ncols()) });
        }
        let g: Vec<ComplexMatrix> = (0..16).map(basis_operator).collect();
        let c = ComplexMatrix::from_fn(16, 16, |a, b| qops::trace_product(&kron(&g[b].transpose(), &g[a]).adjoint(), s));
        Ok(Self { c: qops::hermitian_part(&c), condition: 1.0, residual: 0.0 })
    }
}

/// Solves `Σ c_{αβ} G_α ρ_k G_β = ρ̇_k` over sixteen `(ρ_k, ρ̇_k)` pairs.
pub fn reconstruct_generator(pairs: &[(ComplexMatrix, ComplexMatrix)]) -> Result<GeneratorMatrix> {
    if pairs.len() != 16 {
        return Err(Error::DimensionMismatch { expected: 16, got: pairs.len() });
    }
    for (rho, dot) in pairs {
        for m in [rho, dot] {
            if m.nrows() != 4 || m.ncols() != 4 {
                return Err(Error::DimensionMismatch { expected: 4, got: m.nrows().max(m.ncols()) });
            }
        }
    }
    let r = ComplexMatrix::from_columns(&pairs.iter().map(|(rho, _)| vectorize(rho)).collect::<Vec<_>>());
    let rdot = ComplexMatrix::from_columns(&pairs.iter().map(|(_, d)| vectorize(d)).collect::<Vec<_>>());
    let sv = r.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::RankDeficient { condition });
    }
    let inv = r.try_inverse().ok_or(Error::RankDeficient { condition })?;
    let s = rdot * inv;
    let mut g = GeneratorMatrix::from_superoperator(&s)?;
    g.condition = condition;
    g.residual = pairs.iter().map(|(rho, dot)| (g.apply(rho) - dot).norm()).fold(0.0, f64::max);
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub rate: f64,
    pub jump: ComplexMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorDecomposition {
    pub h_eff: ComplexMatrix,
    /// Fifteen channels, rates ascending.
    pub channels: Vec<Channel>,
}

impl GeneratorDecomposition {
    pub fn rates(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.rate).collect()
    }

    /// `-i[H, ρ] + Σ_k γ_k (L_k ρ L_k† - ½{L_k† L_k, ρ})`.
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let i = Complex64::new(0.0, 1.0);
        let mut out = (&self.h_eff * rho - rho * &self.h_eff) * -i;
        for ch in &self.channels {
            if ch.rate == 0.0 {
                continue;
            }
            let l = &ch.jump;
            let ld = l.adjoint();
            let n = &ld * l;
            out += (l * rho * &ld - (&n * rho + rho * &n) * cplx(0.5)) * cplx(ch.rate);
        }
        out
    }
}

/// Canonical form of a generator: the identity row and column give `H` (and
/// the anticommutator), the traceless `15×15` block is diagonalized into
/// rates `γ_k` and orthonormal jumps `L_k = Σ_α U_{αk} G_α`.
pub fn canonical_rates(g: &GeneratorMatrix) -> Result<GeneratorDecomposition> {
    let dev = qops::hermiticity_deviation(&g.c);
    if dev > 1e-8 * qops::max_abs(&g.c).max(1.0) {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let c = qops::hermitian_part(&g.c);
    let basis: Vec<ComplexMatrix> = (0..16).map(basis_operator).collect();
    let mut b = ComplexMatrix::identity(4, 4) * (c[(0, 0)] / 8.0);
    for (alpha, op) in basis.iter().enumerate().skip(1) {
        b += op * (c[(alpha, 0)] * 0.5);
    }
    let i = Complex64::new(0.0, 1.0);
    let h_eff = (&b - b.adjoint()) * (i * 0.5);

    let block = c.view((1, 1), (15, 15)).into_owned();
    let (rates, u) = hermitian_eig(&block)?;
    let channels = rates
        .iter()
        .enumerate()
        .map(|(k, &rate)| {
            let mut jump = ComplexMatrix::zeros(4, 4);
            for (alpha, op) in basis.iter().enumerate().skip(1) {
                jump += op * u[(alpha - 1, k)];
            }
            Channel { rate, jump }
        })
        .collect();
    Ok(GeneratorDecomposition { h_eff, channels })
}

/// `½ Σ_k (|γ_k| - γ_k)`.
pub fn non_markovianity(d: &GeneratorDecomposition) -> f64 {
    rates_non_markovianity(&d.rates())
}

pub fn rates_non_markovianity(rates: &[f64]) -> f64 {
    0.5 * rates.iter().map(|g| g.abs() - g).sum::<f64>()
}

/// Central difference `(ρ(t+2τ) - ρ(t)) / 2τ`, the derivative at `t+τ`.
pub fn derivative_fd(rho_t: &ComplexMatrix, rho_t2tau: &ComplexMatrix, tau: f64) -> Result<ComplexMatrix> {
    if rho_t.shape() != rho_t2tau.shape() {
        return Err(Error::DimensionMismatch { expected: rho_t.nrows(), got: rho_t2tau.nrows() });
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be > 0, got {tau}")));
    }
    Ok(qops::hermitian_part(&((rho_t2tau - rho_t) * cplx(0.5 / tau))))
}

pub fn linear_entropy(rho: &DensityMatrix) -> f64 {
    1.0 - rho.purity()
}

fn marginals(rho: &DensityMatrix) -> Result<(DensityMatrix, DensityMatrix)> {
    if rho.n_sites() != 2 {
        return Err(Error::DimensionMismatch { expected: 4, got: rho.dim() });
    }
    Ok((rho.partial_trace(&[0])?, rho.partial_trace(&[1])?))
}

/// Quantum linear mutual information `S_l(ρ_i ⊗ ρ_j) - S_l(ρ_ij)`.
pub fn qlmi(rho: &DensityMatrix) -> Result<f64> {
    let (a, b) = marginals(rho)?;
    Ok(linear_entropy(&a.tensor(&b)) - linear_entropy(rho))
}

fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    Ok(rho.eigenvalues()?.iter().filter(|&&l| l > 0.0).map(|l| -l * l.ln()).sum())
}

/// `S(ρ_i) + S(ρ_j) - S(ρ_ij)` with the von Neumann entropy.
pub fn von_neumann_mi(rho: &DensityMatrix) -> Result<f64> {
    let (a, b) = marginals(rho)?;
    Ok(von_neumann_entropy(&a)? + von_neumann_entropy(&b)? - von_neumann_entropy(rho)?)
}

/// A bond embedded in the lattice used by the variational geometry.
pub fn embedding_bond(lattice: &Lattice) -> Result<(Lattice, Cluster)> {
    if lattice.boundary() == Boundary::Periodic {
        let embed = periodic_host(lattice)?;
        let cluster = Cluster::new(&embed, &[0, 1])?;
        return Ok((embed, cluster));
    }
    let (cx, cy) = ((lattice.width() as f64 - 1.0) / 2.0, (lattice.height() as f64 - 1.0) / 2.0);
    let dist = |s: usize| {
        let (x, y) = lattice.coords(s);
        (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)
    };
    let &(a, b) = lattice
        .bonds()
        .iter()
        .min_by(|p, q| (dist(p.0) + dist(p.1)).total_cmp(&(dist(q.0) + dist(q.1))))
        .ok_or_else(|| Error::InvalidBond("lattice has no bonds".into()))?;
    Ok((lattice.clone(), Cluster::new(lattice, &[a, b])?))
}

/// Generator of the two sites of `bond` with the exterior held at `env`.
pub fn embedded_superoperator(params: &ModelParams, bond: &Cluster, env: &VarState) -> Result<ComplexMatrix> {
    if bond.n_sites() != 2 {
        return Err(Error::InvalidSites(format!("embedding needs a bond, got {} sites", bond.n_sites())));
    }
    let l = Liouvillian::new(params, 2, &bond.bonds)?;
    let boundary = VarState::Correlated(env.as_correlated()).boundary(&bond.dangling);
    Ok(superoperator(&FnGenerator::new(4, |rho: &ComplexMatrix| l.apply_with_boundary(&boundary, rho))))
}

/// `steps` midpoint steps of length `tau` of a two-site state, with the
/// environment given at the step boundaries `envs[0..=steps]`.
pub fn propagate_embedded(
    rho: &DensityMatrix,
    params: &ModelParams,
    bond: &Cluster,
    envs: &[VarState],
    tau: f64,
) -> Result<DensityMatrix> {
    if rho.n_sites() != 2 {
        return Err(Error::DimensionMismatch { expected: 4, got: rho.dim() });
    }
    if envs.len() < 2 {
        return Err(Error::Config("need the environment at both ends of a step".into()));
    }
    let sups = envs.iter().map(|e| embedded_superoperator(params, bond, e)).collect::<Result<Vec<_>>>()?;
    let mut m = rho.matrix().clone();
    for w in sups.windows(2) {
        m = MidpointPropagator::from_superoperators(&w[0], &w[1], tau, 4)?.step(&m);
    }
    DensityMatrix::new(m, 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonMarkovSample {
    pub t: f64,
    pub f: f64,
    pub qlmi: f64,
    pub vn_mi: f64,
    pub decomposition: GeneratorDecomposition,
    pub generator: GeneratorMatrix,
}

/// Tomographic pairs `(ρ(t+τ), ρ̇(t+τ))` for the sixteen basis states,
/// propagated by the given superoperators at `t`, `t+τ`, `t+2τ`.
pub fn tomography_pairs(sups: &[ComplexMatrix; 3], tau: f64) -> Result<Vec<(ComplexMatrix, ComplexMatrix)>> {
    let first = MidpointPropagator::from_superoperators(&sups[0], &sups[1], tau, 4)?;
    let second = MidpointPropagator::from_superoperators(&sups[1], &sups[2], tau, 4)?;
    tomography_basis()
        .states()
        .par_iter()
        .map(|s| {
            let r1 = first.step(s.matrix());
            let r2 = second.step(&r1);
            Ok((r1, derivative_fd(s.matrix(), &r2, tau)?))
        })
        .collect()
}

/// Full pipeline at one time of a correlated variational run.
pub fn nonmarkov_sample(run: &VariationalRun, params: &ModelParams, lattice: &Lattice, t: f64, tau: f64) -> Result<NonMarkovSample> {
    let envs = [run.state_at(t), run.state_at(t + tau), run.state_at(t + 2.0 * tau)];
    sample_in_environment(t, &envs, params, lattice, tau)
}

/// Pipeline for a stationary environment, e.g. a variational steady state.
pub fn nonmarkov_stationary(state: &VarState, params: &ModelParams, lattice: &Lattice, tau: f64) -> Result<NonMarkovSample> {
    sample_in_environment(0.0, &[*state, *state, *state], params, lattice, tau)
}

fn sample_in_environment(t: f64, envs: &[VarState; 3], params: &ModelParams, lattice: &Lattice, tau: f64) -> Result<NonMarkovSample> {
    let (_, bond) = embedding_bond(lattice)?;
    let sups = [
        embedded_superoperator(params, &bond, &envs[0])?,
        embedded_superoperator(params, &bond, &envs[1])?,
        embedded_superoperator(params, &bond, &envs[2])?,
    ];
    let pairs = tomography_pairs(&sups, tau)?;
    let generator = reconstruct_generator(&pairs)?;
    let decomposition = canonical_rates(&generator)?;
    let pair = pair_density(&envs[0]);
    Ok(NonMarkovSample {
        t,
        f: non_markovianity(&decomposition),
        qlmi: qlmi(&pair)?,
        vn_mi: von_neumann_mi(&pair)?,
        decomposition,
        generator,
    })
}

/// Columns `t, f, I, I_VN` at each sample time.
pub fn nonmarkov_trace(
    run: &VariationalRun,
    params: &ModelParams,
    lattice: &Lattice,
    sample_times: &[f64],
    tau: f64,
) -> Result<TimeSeries> {
    let samples: Vec<NonMarkovSample> = sample_times
        .par_iter()
        .map(|&t| nonmarkov_sample(run, params, lattice, t, tau))
        .collect::<Result<_>>()?;
    let mut series = TimeSeries::new(&["f", "I", "I_VN"]);
    for s in samples {
        series.push(s.t, &[s.f, s.qlmi, s.vn_mi])?;
    }
    Ok(series)
}
