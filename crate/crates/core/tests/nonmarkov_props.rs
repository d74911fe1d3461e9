mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use varlind::model::{Boundary, Lattice, ModelParams};
use varlind::nonmarkov::{
    canonical_rates, embedding_bond, non_markovianity, propagate_embedded, qlmi, reconstruct_generator,
    tomography_basis, von_neumann_mi, Channel, GeneratorDecomposition,
};
use varlind::qops::DensityMatrix;
use varlind::variational::{CorrelatedParams, ProductParams, VarState};

/// Random traceless 4×4 jump operator.
fn jump_from(v: &[f64]) -> M {
    let mut l = matrix_from(v, 4);
    let tr = l.trace() / c(4.0);
    for k in 0..4 {
        l[(k, k)] -= tr;
    }
    l
}

/// Tomography pairs `(ρ_k, S ρ_k)` for a row-stacking superoperator.
fn pairs_for(s: &M) -> Vec<(M, M)> {
    tomography_basis()
        .states()
        .iter()
        .map(|rho| {
            let m = rho.matrix().clone();
            let dot = unvec_rows(&(s * vec_rows(&m)), 4);
            (m, dot)
        })
        .collect()
}

fn lindblad_pairs(h: &M, jumps: &[(f64, M)]) -> Vec<(M, M)> {
    let scaled: Vec<M> = jumps.iter().map(|(g, l)| l * c(g.sqrt())).collect();
    pairs_for(&lindblad_superoperator(h, &scaled))
}

fn product_pair(a: &ProductParams, b: &ProductParams) -> M {
    a.single_site().kronecker(&b.single_site())
}

fn bloch(v: &[f64]) -> ProductParams {
    bloch_within(v, 0.49)
}

fn bloch_within(v: &[f64], radius: f64) -> ProductParams {
    let r = radius * v[0].abs().sqrt();
    let (a, b) = (v[1] * std::f64::consts::PI, v[2] * std::f64::consts::PI);
    ProductParams::new([r * a.sin() * b.cos(), r * a.sin() * b.sin(), r * a.cos()]).unwrap()
}

fn logm_hermitian(m: &M) -> M {
    let eig = ((m + m.adjoint()) * c(0.5)).symmetric_eigen();
    let d = nalgebra::DVector::from_iterator(4, eig.eigenvalues.iter().map(|&x| c(x.ln())));
    &eig.eigenvectors * M::from_diagonal(&d) * eig.eigenvectors.adjoint()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn markovian_generators_round_trip_with_nonnegative_rates(hv in reals(32), jv in reals(96), gv in reals(3)) {
        let h = hermitian_from(&hv, 4);
        let jumps: Vec<(f64, M)> = (0..3).map(|k| (gv[k].abs(), jump_from(&jv[32 * k..32 * (k + 1)]))).collect();
        let pairs = lindblad_pairs(&h, &jumps);
        let g = reconstruct_generator(&pairs).unwrap();
        prop_assert!(g.residual < 1e-10);
        let d = canonical_rates(&g).unwrap();
        for (rho, dot) in &pairs {
            prop_assert!(trace_norm_hermitian(&(d.apply(rho) - dot)) < 1e-8);
        }
        prop_assert!(d.rates().iter().all(|&r| r >= -1e-8), "{:?}", d.rates());
        prop_assert!(non_markovianity(&d) < 1e-6);
        // at most three channels carry weight
        prop_assert!(d.rates().iter().filter(|&&r| r > 1e-8).count() <= 3);
        for (j, a) in d.channels.iter().enumerate() {
            prop_assert!(a.jump.trace().norm() < 1e-9);
            for (k, b) in d.channels.iter().enumerate() {
                let ip = (a.jump.adjoint() * &b.jump).trace();
                let want = if j == k { 1.0 } else { 0.0 };
                prop_assert!((ip - c(want)).norm() < 1e-9);
            }
        }
        prop_assert!(max_abs(&(&d.h_eff - d.h_eff.adjoint())) < 1e-12);
    }

    #[test]
    fn general_hermitian_generators_round_trip(cv in reals(512)) {
        // canonical-form generator with rates of either sign
        let hv: Vec<f64> = cv[..32].to_vec();
        let jumps: Vec<(f64, M)> = (0..4).map(|k| (cv[32 + k], jump_from(&cv[64 + 32 * k..96 + 32 * k]))).collect();
        let d = GeneratorDecomposition {
            h_eff: hermitian_from(&hv, 4),
            channels: jumps.iter().map(|(r, l)| Channel { rate: *r, jump: l.clone() }).collect(),
        };
        let pairs: Vec<(M, M)> = tomography_basis()
            .states()
            .iter()
            .map(|rho| (rho.matrix().clone(), d.apply(rho.matrix())))
            .collect();
        let back = canonical_rates(&reconstruct_generator(&pairs).unwrap()).unwrap();
        for (rho, dot) in &pairs {
            prop_assert!(trace_norm_hermitian(&(back.apply(rho) - dot)) < 1e-8);
        }
    }

    #[test]
    fn f_ignores_channel_order_and_phase(rv in reals(15), seed in 0u64..1000) {
        let channels: Vec<Channel> = rv
            .iter()
            .enumerate()
            .map(|(k, &r)| Channel { rate: r, jump: M::identity(4, 4) * c(k as f64) })
            .collect();
        let d = GeneratorDecomposition { h_eff: M::zeros(4, 4), channels: channels.clone() };
        let mut shuffled = channels;
        let n = shuffled.len();
        for k in 0..n {
            shuffled.swap(k, (seed as usize * 7 + k * 13) % n);
        }
        for (k, ch) in shuffled.iter_mut().enumerate() {
            ch.jump *= Complex64::from_polar(1.0, k as f64 + seed as f64);
        }
        let e = GeneratorDecomposition { h_eff: M::zeros(4, 4), channels: shuffled };
        prop_assert!((non_markovianity(&d) - non_markovianity(&e)).abs() < 1e-14);
        let neg: f64 = rv.iter().filter(|&&r| r < 0.0).map(|r| -r).sum();
        prop_assert!((non_markovianity(&d) - neg).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn product_states_carry_no_mutual_information(a in reals(3), b in reals(3)) {
        let rho = DensityMatrix::new(product_pair(&bloch(&a), &bloch(&b)), 2).unwrap();
        prop_assert!(qlmi(&rho).unwrap().abs() < 1e-14);
        prop_assert!(von_neumann_mi(&rho).unwrap().abs() < 1e-12);
    }

    #[test]
    fn von_neumann_mi_is_subadditive(v in reals(32)) {
        let rho = DensityMatrix::new(density_from(&v, 4), 2).unwrap();
        prop_assert!(von_neumann_mi(&rho).unwrap() >= -1e-12);
    }

    #[test]
    fn mutual_information_first_order_structure(a in reals(3), b in reals(3), k in 1usize..4, l in 1usize..4) {
        // full-rank marginals keep the second-order remainder small
        let (pa, pb) = (bloch_within(&a, 0.4), bloch_within(&b, 0.4));
        let rho0 = product_pair(&pa, &pb);
        let ps = paulis();
        let op = ps[k].kronecker(&ps[l]);
        let eps = 1e-6;
        let rho = DensityMatrix::new(&rho0 + &op * c(eps), 2).unwrap();
        // with ρ_i = 1/2 + Σ α_μ σ_μ, Tr[(ρ_i⊗ρ_j)(σ_κ⊗σ_λ)] = 4 α_κ α_λ and the
        // linear term of Tr ρ² is twice that
        let slope = 8.0 * pa.alpha[k - 1] * pb.alpha[l - 1];
        let direct = ((&rho0 + &op * c(eps)).map(|z| z.norm_sqr()).sum() - rho0.map(|z| z.norm_sqr()).sum()) / eps;
        let measured = qlmi(&rho).unwrap() / eps;
        prop_assert!((measured - slope).abs() < 1e-5, "{} vs {}", measured, slope);
        prop_assert!((measured - direct).abs() < 1e-6);
        // von Neumann: the linear coefficient Tr{A ln(ρ_i⊗ρ_j)} vanishes for a
        // locally traceless A, so I_VN is second order
        let lin = (&op * logm_hermitian(&rho0)).trace().re;
        prop_assert!(lin.abs() < 1e-10);
        prop_assert!((von_neumann_mi(&rho).unwrap() / eps - lin).abs() < 1e-4);
    }
}

#[test]
fn two_decay_channels_recovered_at_their_rates() {
    let gamma = 0.7;
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let i2 = M::identity(2, 2);
    // unit-norm jumps σ_-⊗1/√2 and 1⊗σ_-/√2 at rate γ
    let jumps = vec![(gamma, sminus().kronecker(&i2) * c(half)), (gamma, i2.kronecker(&sminus()) * c(half))];
    let d = canonical_rates(&reconstruct_generator(&lindblad_pairs(&M::zeros(4, 4), &jumps)).unwrap()).unwrap();
    let mut rates = d.rates();
    rates.sort_by(f64::total_cmp);
    assert!(rates[..13].iter().all(|r| r.abs() < 1e-9), "{rates:?}");
    assert!(rates[13..].iter().all(|r| (r - gamma).abs() < 1e-9), "{rates:?}");
    assert!(non_markovianity(&d) < 1e-12);
}

#[test]
fn hamiltonian_generator_has_no_rates() {
    let hv: Vec<f64> = (0..32).map(|k| ((k * 29 % 17) as f64 / 8.5) - 1.0).collect();
    let h = hermitian_from(&hv, 4);
    let d = canonical_rates(&reconstruct_generator(&lindblad_pairs(&h, &[])).unwrap()).unwrap();
    assert!(d.rates().iter().all(|r| r.abs() <= 1e-9));
    let shift = (&d.h_eff - &h).trace() / c(4.0);
    assert!(max_abs(&(&d.h_eff - &h - M::identity(4, 4) * shift)) < 1e-10);
}

#[test]
fn mean_field_environment_matches_hand_built_liouvillian() {
    let p = ModelParams::new(1.0, 0.2, 1.5, 1.0);
    let lattice = Lattice::new(3, 3, Boundary::Periodic).unwrap();
    let (_, bond) = embedding_bond(&lattice).unwrap();
    let env = ProductParams::new([0.1, -0.05, -0.3]).unwrap();
    let z = 2.0 * env.alpha[2];
    // each site of the embedded bond has three exterior neighbours
    let shift = 3.0 * p.v / 4.0 * z;
    let h = hamiltonian(p.omega, p.delta, p.v, 2, &[(0, 1)]) + (on_site(&sz(), 0, 2) + on_site(&sz(), 1, 2)) * c(shift);
    let jumps = vec![on_site(&sminus(), 0, 2) * c(p.gamma.sqrt()), on_site(&sminus(), 1, 2) * c(p.gamma.sqrt())];
    let s = lindblad_superoperator(&h, &jumps);
    let tau = 0.05;
    let id = M::identity(16, 16);
    let cayley = (&id - &s * c(tau / 2.0)).try_inverse().unwrap() * (&id + &s * c(tau / 2.0));
    let rho = DensityMatrix::new(density_from(&(0..32).map(|k| (k as f64 * 0.37).sin()).collect::<Vec<_>>(), 4), 2).unwrap();
    let envs = vec![VarState::Correlated(CorrelatedParams::from_product(&env)); 3];
    let got = propagate_embedded(&rho, &p, &bond, &envs, tau).unwrap();
    let want = unvec_rows(&(&cayley * &cayley * vec_rows(rho.matrix())), 4);
    assert!(max_abs(&(got.matrix() - want)) < 1e-12);
}

#[test]
fn frozen_dynamics_is_identity() {
    let p = ModelParams::new(0.0, 0.0, 0.0, 0.0);
    let lattice = Lattice::new(3, 3, Boundary::Periodic).unwrap();
    let (_, bond) = embedding_bond(&lattice).unwrap();
    let rho = DensityMatrix::new(density_from(&(0..32).map(|k| (k as f64 * 0.91).cos()).collect::<Vec<_>>(), 4), 2).unwrap();
    let envs = vec![VarState::ground(varlind::variational::Manifold::Correlated); 3];
    let got = propagate_embedded(&rho, &p, &bond, &envs, 0.1).unwrap();
    assert!(max_abs(&(got.matrix() - rho.matrix())) < 1e-15);
}

#[test]
fn linearly_dependent_inputs_are_rejected() {
    let rho = tomography_basis().states()[3].matrix().clone();
    let pairs = vec![(rho.clone(), M::zeros(4, 4)); 16];
    assert!(reconstruct_generator(&pairs).is_err());
}
