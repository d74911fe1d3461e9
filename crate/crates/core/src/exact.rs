//! Reference solvers: dense implicit-midpoint integration of the full master
//! equation and a quantum-trajectory unravelling for larger lattices.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{diagonal_energies, excitation_count, rydberg_density, Bond, Lattice, Liouvillian, ModelParams};
use crate::qops::{
    self, add_transverse_field, dim_of, site_bit, trace_norm_unchecked, ComplexMatrix, DensityMatrix,
};
use crate::series::TimeSeries;

/// Largest Hilbert-space dimension for which the midpoint propagator is built
/// as an explicit superoperator; above it the implicit step is solved by
/// fixed-point iteration.
pub const SUPEROPERATOR_MAX_DIM: usize = 16;

/// Largest lattice accepted by [`evolve_exact`].
pub const EXACT_MAX_SITES: usize = 8;
/// Largest lattice accepted by [`trajectory_run`].
pub const TRAJECTORY_MAX_SITES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidpointConfig {
    pub tau: f64,
    pub solver_tol: f64,
    pub max_linear_iters: usize,
}

impl Default for MidpointConfig {
    fn default() -> Self {
        Self { tau: 0.01, solver_tol: 1e-10, max_linear_iters: 500 }
    }
}

impl MidpointConfig {
    pub fn with_tau(tau: f64) -> Self {
        Self { tau, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::Config("solver_tol must be > 0".into()));
        }
        Ok(())
    }
}

/// A linear map on density matrices of a fixed dimension.
pub trait Generator {
    fn dim(&self) -> usize;
    fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix;
}

impl Generator for Liouvillian {
    fn dim(&self) -> usize {
        Liouvillian::dim(self)
    }

    fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        Liouvillian::apply(self, rho)
    }
}

/// Adapts a closure into a [`Generator`].
pub struct FnGenerator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&ComplexMatrix) -> ComplexMatrix> FnGenerator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&ComplexMatrix) -> ComplexMatrix> Generator for FnGenerator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        (self.f)(rho)
    }
}

/// Column-stacking vectorization: `vec(X)[r + c·d] = X[r, c]`.
pub fn vectorize(m: &ComplexMatrix) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &[Complex64], dim: usize) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(dim, dim, v)
}

/// Matrix of the generator acting on column-stacked density matrices.
pub fn superoperator<G: Generator + ?Sized>(g: &G) -> ComplexMatrix {
    let d = g.dim();
    let mut s = ComplexMatrix::zeros(d * d, d * d);
    let mut basis = ComplexMatrix::zeros(d, d);
    for c in 0..d {
        for r in 0..d {
            basis[(r, c)] = Complex64::new(1.0, 0.0);
            let image = g.apply(&basis);
            s.set_column(r + c * d, &vectorize(&image));
            basis[(r, c)] = Complex64::new(0.0, 0.0);
        }
    }
    s
}

/// One implicit-midpoint step `ρ' = ρ + τ/2 ℒ[ρ + ρ']`, solved by fixed-point
/// iteration until successive iterates agree to `solver_tol` in trace norm.
pub fn midpoint_step<G: Generator + ?Sized>(rho: &DensityMatrix, g: &G, cfg: &MidpointConfig) -> Result<DensityMatrix> {
    cfg.validate()?;
    if rho.dim() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: rho.dim() });
    }
    let half = Complex64::new(cfg.tau / 2.0, 0.0);
    let l_rho = g.apply(rho.matrix());
    let base = rho.matrix() + &l_rho * half;
    let mut next = rho.matrix() + &l_rho * Complex64::new(cfg.tau, 0.0);
    for _ in 0..cfg.max_linear_iters {
        let candidate = &base + g.apply(&next) * half;
        let change = trace_norm_unchecked(&(&candidate - &next));
        next = candidate;
        if change <= cfg.solver_tol {
            return DensityMatrix::new(qops::hermitian_part(&next), rho.n_sites());
        }
        if !change.is_finite() {
            break;
        }
    }
    Err(Error::SolveFailed(format!(
        "midpoint fixed point did not converge in {} iterations (tau = {} too large?)",
        cfg.max_linear_iters, cfg.tau
    )))
}

/// Precomputed midpoint propagator `(1 - τ/2 S)^{-1} (1 + τ/2 S)` for a
/// time-independent generator.
#[derive(Debug, Clone)]
pub struct MidpointPropagator {
    dim: usize,
    matrix: ComplexMatrix,
}

impl MidpointPropagator {
    pub fn new<G: Generator + ?Sized>(g: &G, tau: f64) -> Result<Self> {
        let s = superoperator(g);
        Self::from_superoperators(&s, &s, tau, g.dim())
    }

    /// Propagator for a generator that changes across the step:
    /// `ρ' = ρ + τ/2 (S_start ρ + S_end ρ')`.
    pub fn from_superoperators(s_start: &ComplexMatrix, s_end: &ComplexMatrix, tau: f64, dim: usize) -> Result<Self> {
        let n = dim * dim;
        let half = Complex64::new(tau / 2.0, 0.0);
        let id = ComplexMatrix::identity(n, n);
        let lhs = &id - s_end * half;
        let rhs = &id + s_start * half;
        let matrix = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SolveFailed("singular midpoint system".into()))?;
        Ok(Self { dim, matrix })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn step(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let v = &self.matrix * vectorize(rho);
        qops::hermitian_part(&unvectorize(v.as_slice(), self.dim))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExactOptions {
    /// Record the reduced state of this pair at every step.
    pub record_pair: Option<Bond>,
    /// Record every `record_every` steps (0 or 1 records every step).
    pub record_every: usize,
}

#[derive(Debug, Clone)]
pub struct ExactRun {
    pub series: TimeSeries,
    pub pair_states: Vec<DensityMatrix>,
    pub final_state: DensityMatrix,
}

/// Dense midpoint evolution of the full lattice master equation.
pub fn evolve_exact(
    rho0: &DensityMatrix,
    params: &ModelParams,
    lattice: &Lattice,
    t_final: f64,
    cfg: &MidpointConfig,
    opts: &ExactOptions,
) -> Result<ExactRun> {
    cfg.validate()?;
    let n = lattice.n_sites();
    if n > EXACT_MAX_SITES {
        return Err(Error::Config(format!("exact evolution limited to {EXACT_MAX_SITES} sites, lattice has {n}")));
    }
    if rho0.n_sites() != n {
        return Err(Error::DimensionMismatch { expected: dim_of(n), got: rho0.dim() });
    }
    if let Some((a, b)) = opts.record_pair {
        if a >= b || b >= n {
            return Err(Error::InvalidSites(format!("record pair ({a},{b}) invalid")));
        }
    }
    let l = Liouvillian::new(params, n, lattice.bonds())?;
    let propagator = if l.dim() <= SUPEROPERATOR_MAX_DIM { Some(MidpointPropagator::new(&l, cfg.tau)?) } else { None };
    let steps = (t_final / cfg.tau).round() as usize;
    let every = opts.record_every.max(1);

    let mut series = TimeSeries::new(&["n_r"]);
    let mut pair_states = Vec::new();
    let mut rho = rho0.clone();
    let mut record = |k: usize, rho: &DensityMatrix, series: &mut TimeSeries| -> Result<()> {
        series.push(k as f64 * cfg.tau, &[rydberg_density(rho)])?;
        if let Some((a, b)) = opts.record_pair {
            pair_states.push(rho.partial_trace(&[a, b])?);
        }
        Ok(())
    };
    record(0, &rho, &mut series)?;
    for k in 1..=steps {
        rho = match &propagator {
            Some(p) => DensityMatrix::new(p.step(rho.matrix()), n)?,
            None => midpoint_step(&rho, &l, cfg)?,
        };
        if k % every == 0 || k == steps {
            record(k, &rho, &mut series)?;
        }
    }
    Ok(ExactRun { series, pair_states, final_state: rho })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryConfig {
    pub n_traj: usize,
    pub seed: u64,
    pub dt: f64,
    pub t_final: f64,
    /// Record every `record_every` integration steps.
    pub record_every: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { n_traj: 1000, seed: 1, dt: 0.01, t_final: 10.0, record_every: 10 }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::Config("n_traj must be >= 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0) {
            return Err(Error::Config("t_final must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryResult {
    /// Columns `t, n_r, n_r_se` (mean and standard error over trajectories).
    pub series: TimeSeries,
    /// Time of the first quantum jump of each trajectory, if any occurred.
    pub first_jump_times: Vec<Option<f64>>,
    pub total_jumps: usize,
    /// Largest deviation of `|ψ|` from 1 observed right after a renormalization.
    pub max_norm_error: f64,
}

/// Non-Hermitian effective Hamiltonian `H - i/2 Σ c†c`, applied sparsely.
struct EffectiveHamiltonian {
    n_sites: usize,
    diag: Vec<Complex64>,
    half_omega: f64,
    gamma: f64,
}

impl EffectiveHamiltonian {
    fn new(params: &ModelParams, lattice: &Lattice) -> Self {
        let n = lattice.n_sites();
        let energies = diagonal_energies(params, n, lattice.bonds());
        let diag = energies
            .iter()
            .enumerate()
            .map(|(r, &e)| Complex64::new(e, -params.gamma / 2.0 * excitation_count(r, n) as f64))
            .collect();
        Self { n_sites: n, diag, half_omega: params.omega / 2.0, gamma: params.gamma }
    }

    /// `out = -i H_eff v`.
    fn derivative(&self, v: &[Complex64], out: &mut [Complex64]) {
        let minus_i = Complex64::new(0.0, -1.0);
        for ((o, &x), &d) in out.iter_mut().zip(v).zip(&self.diag) {
            *o = minus_i * d * x;
        }
        if self.half_omega != 0.0 {
            add_transverse_field(v, self.n_sites, minus_i * self.half_omega, out);
        }
    }
}

struct Rk4Workspace {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4Workspace {
    fn new(dim: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); dim];
        Self { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    fn step(&mut self, h: &EffectiveHamiltonian, psi: &[Complex64], dt: f64, out: &mut [Complex64]) {
        let n = psi.len();
        h.derivative(psi, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = psi[i] + self.k1[i] * (dt / 2.0);
        }
        h.derivative(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = psi[i] + self.k2[i] * (dt / 2.0);
        }
        h.derivative(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = psi[i] + self.k3[i] * dt;
        }
        h.derivative(&self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] = psi[i] + (self.k1[i] + self.k2[i] * 2.0 + self.k3[i] * 2.0 + self.k4[i]) * (dt / 6.0);
        }
    }
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn rydberg_fraction(v: &[Complex64], n_sites: usize) -> f64 {
    let total: f64 = v.iter().enumerate().map(|(r, z)| z.norm_sqr() * excitation_count(r, n_sites) as f64).sum();
    total / (n_sites as f64 * norm2(v))
}

struct SingleTrajectory {
    n_r: Vec<f64>,
    first_jump: Option<f64>,
    jumps: usize,
    max_norm_error: f64,
}

fn run_single(h: &EffectiveHamiltonian, psi0: &[Complex64], cfg: &TrajectoryConfig, index: usize) -> SingleTrajectory {
    let n = h.n_sites;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut ws = Rk4Workspace::new(psi0.len());
    let mut psi = psi0.to_vec();
    let mut trial = psi.clone();
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let every = cfg.record_every.max(1);
    let mut threshold: f64 = rng.random();
    let mut out = SingleTrajectory { n_r: vec![rydberg_fraction(&psi, n)], first_jump: None, jumps: 0, max_norm_error: 0.0 };

    for step in 0..steps {
        let t0 = step as f64 * cfg.dt;
        let mut elapsed = 0.0;
        loop {
            let remaining = cfg.dt - elapsed;
            ws.step(h, &psi, remaining, &mut trial);
            if h.gamma == 0.0 || norm2(&trial) > threshold {
                std::mem::swap(&mut psi, &mut trial);
                break;
            }
            // bisect for the time at which the norm crosses the threshold
            let (mut lo, mut hi) = (0.0, remaining);
            for _ in 0..60 {
                if hi - lo <= 1e-13 * cfg.dt {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                ws.step(h, &psi, mid, &mut trial);
                if norm2(&trial) > threshold {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            ws.step(h, &psi, hi, &mut trial);
            std::mem::swap(&mut psi, &mut trial);
            elapsed += hi;
            out.first_jump.get_or_insert(t0 + elapsed);
            out.jumps += 1;

            // pick the decaying site with probability ∝ <ψ|c†c|ψ>
            let weights: Vec<f64> = (0..n)
                .map(|s| {
                    let bit = site_bit(s, n);
                    psi.iter().enumerate().filter(|(r, _)| r & bit == 0).map(|(_, z)| z.norm_sqr()).sum()
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut pick = rng.random::<f64>() * total;
            let mut site = n - 1;
            for (s, w) in weights.iter().enumerate() {
                if pick < *w {
                    site = s;
                    break;
                }
                pick -= w;
            }
            let bit = site_bit(site, n);
            for r in (0..psi.len()).filter(|r| r & bit == 0) {
                psi[r | bit] = psi[r];
                psi[r] = Complex64::new(0.0, 0.0);
            }
            let norm = norm2(&psi).sqrt();
            psi.iter_mut().for_each(|z| *z /= norm);
            out.max_norm_error = out.max_norm_error.max((norm2(&psi).sqrt() - 1.0).abs());
            threshold = rng.random();
            if cfg.dt - elapsed <= 1e-15 * cfg.dt {
                break;
            }
        }
        if (step + 1) % every == 0 {
            out.n_r.push(rydberg_fraction(&psi, n));
        }
    }
    out
}

/// Quantum-trajectory estimate of `n_r(t)` starting from the all-ground state.
pub fn trajectory_run(params: &ModelParams, lattice: &Lattice, cfg: &TrajectoryConfig) -> Result<TrajectoryResult> {
    trajectory_run_from(params, lattice, &vec![false; lattice.n_sites()], cfg)
}

/// Quantum-trajectory estimate of `n_r(t)` from a computational basis state
/// (`rydberg[s]` puts site `s` in the Rydberg state).
pub fn trajectory_run_from(
    params: &ModelParams,
    lattice: &Lattice,
    rydberg: &[bool],
    cfg: &TrajectoryConfig,
) -> Result<TrajectoryResult> {
    params.validate()?;
    cfg.validate()?;
    let n = lattice.n_sites();
    if n > TRAJECTORY_MAX_SITES {
        return Err(Error::Config(format!("trajectories limited to {TRAJECTORY_MAX_SITES} sites, lattice has {n}")));
    }
    if rydberg.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: rydberg.len() });
    }
    let h = EffectiveHamiltonian::new(params, lattice);
    let mut psi0 = vec![Complex64::new(0.0, 0.0); dim_of(n)];
    let idx = rydberg.iter().enumerate().fold(0, |acc, (s, &up)| if up { acc } else { acc | site_bit(s, n) });
    psi0[idx] = Complex64::new(1.0, 0.0);

    let runs: Vec<SingleTrajectory> =
        (0..cfg.n_traj).into_par_iter().map(|k| run_single(&h, &psi0, cfg, k)).collect();

    let n_records = runs[0].n_r.len();
    let every = cfg.record_every.max(1);
    let mut series = TimeSeries::new(&["n_r", "n_r_se"]);
    let m = cfg.n_traj as f64;
    for j in 0..n_records {
        let mean = runs.iter().map(|r| r.n_r[j]).sum::<f64>() / m;
        let se = if cfg.n_traj > 1 {
            let var = runs.iter().map(|r| (r.n_r[j] - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            0.0
        };
        series.push((j * every) as f64 * cfg.dt, &[mean, se])?;
    }
    Ok(TrajectoryResult {
        series,
        first_jump_times: runs.iter().map(|r| r.first_jump).collect(),
        total_jumps: runs.iter().map(|r| r.jumps).sum(),
        max_norm_error: runs.iter().map(|r| r.max_norm_error).fold(0.0, f64::max),
    })
}
