mod common;

use anderson_core::enhanced2d::{build_green_kernel, compute_renorm_2d};
use anderson_core::lattice::{make_lattice, Field, Weight};
use anderson_core::noise::{make_mollifier_with_floor, mollify, sample_white_noise};
use anderson_core::norms::holder_norm_estimate;
use anderson_core::pam::{evolve_direct_3d, evolve_with_drift, manufactured_noise, prepare_drift, Scheme, SolverOptions};
use anderson_core::renorm3d::{build_kernel_3d, compute_c_eps_3d, estimate_c1_eps_3d, C1Estimator};
use anderson_core::spectral::{assemble_hamiltonian, eigensolve_spectral_measure, laplace_of_measure, levy_distance};
use anderson_core::pam::LaplacianKind;
use anderson_core::stats::median;
use nalgebra::{Complex, DMatrix, DVector};

use common::{c1_exact_expectation, expm_apply, expm_pairing, pseudo_field, to_dmatrix};

fn gaussian(lat: anderson_core::lattice::LatticeSpec, c: [f64; 3], s: f64) -> Field {
    Field::from_fn(lat, |x| {
        let r2: f64 = (0..lat.dim()).map(|i| (x[i] - c[i]).powi(2)).sum();
        (-r2 / (2.0 * s * s)).exp()
    })
}

#[test]
fn direct_3d_matches_matrix_exponential() {
    let lat = make_lattice(3, 4.0, 8).unwrap();
    let m = make_mollifier_with_floor(&lat, 1.0, 2.0).unwrap();
    let xi = mollify(&sample_white_noise(&lat, 3, 0), &m).unwrap();
    let k = build_kernel_3d(&lat).unwrap();
    let c = compute_c_eps_3d(&m, &k).unwrap();
    let f = gaussian(lat, [0.3, -0.2, 0.1], 0.8);
    let opts = SolverOptions::with_dt(2e-4).scheme(Scheme::Strang);
    let got = evolve_direct_3d(&xi, c, &f, 0.25, &opts).unwrap();
    let h = assemble_hamiltonian(&xi.add_scalar(c), LaplacianKind::Spectral).unwrap();
    let want = expm_apply(&to_dmatrix(h.dense().unwrap()), 0.25, &f);
    let rel = got.sub(&want).unwrap().l2_norm() / want.l2_norm();
    assert!(rel < 1e-5, "{rel}");
}

#[test]
fn laplace_of_measure_matches_matrix_exponential() {
    let lat = make_lattice(2, 4.0, 8).unwrap();
    let w = pseudo_field(lat, 17, 3.0);
    let f = pseudo_field(lat, 18, 1.0);
    for kind in [LaplacianKind::Fd2, LaplacianKind::Spectral] {
        let h = assemble_hamiltonian(&w, kind).unwrap();
        let mu = eigensolve_spectral_measure(&h, &f).unwrap();
        let dense = to_dmatrix(h.dense().unwrap());
        for t in [0.0, 0.1, 0.5, 2.0] {
            let a = laplace_of_measure(&mu, t).unwrap();
            let b = expm_pairing(&dense, t, &f, &f);
            assert!((a - b).abs() < 1e-8 * b.abs(), "{kind:?} t={t}: {a} {b}");
        }
    }
}

#[test]
fn stieltjes_matches_resolvent_solve() {
    let lat = make_lattice(2, 4.0, 8).unwrap();
    let w = pseudo_field(lat, 5, 2.0);
    let f = pseudo_field(lat, 6, 1.0);
    let h = assemble_hamiltonian(&w, LaplacianKind::Fd2).unwrap();
    let mu = eigensolve_spectral_measure(&h, &f).unwrap();
    let z = Complex::new(0.0, 1.0);
    let dense = to_dmatrix(h.dense().unwrap());
    let n = dense.nrows();
    let a = DMatrix::from_fn(n, n, |i, j| Complex::new(dense[(i, j)], 0.0) - if i == j { z } else { Complex::new(0.0, 0.0) });
    let b = DVector::from_iterator(n, f.values().iter().map(|&v| Complex::new(v, 0.0)));
    let x = a.lu().solve(&b).unwrap();
    let direct = b.iter().zip(x.iter()).map(|(u, v)| u * v).sum::<Complex<f64>>() * lat.cell_volume();
    let got = mu.stieltjes(z);
    assert!((got - direct).norm() < 1e-8 * direct.norm(), "{got} {direct}");
}

#[test]
fn c1_monte_carlo_matches_wick_expectation() {
    let lat = make_lattice(3, 4.0, 16).unwrap();
    let m = make_mollifier_with_floor(&lat, 0.5, 2.0).unwrap();
    let k = build_kernel_3d(&lat).unwrap();
    let c = compute_c_eps_3d(&m, &k).unwrap();
    let exact = c1_exact_expectation(&m, &k, c);
    let est = estimate_c1_eps_3d(&m, &k, c, 2048, 77, C1Estimator::Adjacent).unwrap();
    let z = (est.mean - exact) / est.stderr;
    assert!(z.abs() < 4.0, "mean {} ± {} vs {exact}", est.mean, est.stderr);
}

#[test]
fn semigroup_is_symmetric_and_continuous_at_zero() {
    let lat = make_lattice(2, 8.0, 16).unwrap();
    let kernel = build_green_kernel(&lat).unwrap();
    let drift = prepare_drift(&manufactured_noise(&lat, 1.0).unwrap(), &kernel).unwrap();
    let f = gaussian(lat, [0.0, 0.0, 0.0], 1.0);
    let g = gaussian(lat, [1.0, -0.5, 0.0], 0.7);
    let opts = SolverOptions::with_dt(1e-3).scheme(Scheme::Strang);
    let pg = evolve_with_drift(&drift, &g, 0.3, &opts).unwrap();
    let pf = evolve_with_drift(&drift, &f, 0.3, &opts).unwrap();
    let asym = (f.inner(&pg).unwrap() - pf.inner(&g).unwrap()).abs() / (f.l2_norm() * g.l2_norm());
    assert!(asym < 1e-8, "{asym}");
    let dist = |t: f64| evolve_with_drift(&drift, &f, t, &opts).unwrap().sub(&f).unwrap().l2_norm();
    let (a, b, c) = (dist(0.1), dist(0.01), dist(0.001));
    assert!(a > b && b > c && c < 0.05 * f.l2_norm(), "{a} {b} {c}");
}

#[test]
fn levy_distance_shrinks_as_eps_halves() {
    // ε = 1/4 sits below the default 4h floor on a grid small enough for
    // 24 dense eigendecompositions
    let lat = make_lattice(2, 4.25, 32).unwrap();
    let kernel = build_green_kernel(&lat).unwrap();
    let f = gaussian(lat, [0.0, 0.0, 0.0], 0.7);
    let setups: Vec<_> = [1.0, 0.5, 0.25]
        .iter()
        .map(|&e| {
            let m = make_mollifier_with_floor(&lat, e, 1.5).unwrap();
            let c = compute_renorm_2d(&m, &kernel).unwrap().c_eps;
            (m, c)
        })
        .collect();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for seed in 0..8 {
        let xi = sample_white_noise(&lat, 12, seed);
        let mus: Vec<_> = setups
            .iter()
            .map(|(m, c)| {
                let w = mollify(&xi, m).unwrap().add_scalar(*c);
                eigensolve_spectral_measure(&assemble_hamiltonian(&w, LaplacianKind::Fd2).unwrap(), &f).unwrap()
            })
            .collect();
        first.push(levy_distance(&mus[0], &mus[1]));
        second.push(levy_distance(&mus[1], &mus[2]));
    }
    let (a, b) = (median(&first), median(&second));
    assert!(b < a, "{a} {b}");
}

#[test]
fn holder_estimate_is_translation_invariant() {
    let lat = make_lattice(2, 8.0, 64).unwrap();
    let xi = sample_white_noise(&lat, 1, 0).field;
    let flat = Weight::Exponential { ell: 0.0 };
    for alpha in [-0.5, -1.2] {
        let a = holder_norm_estimate(&xi, alpha, &flat).unwrap().value;
        let b = holder_norm_estimate(&xi.cyclic_shift([13, -7, 0]), alpha, &flat).unwrap().value;
        assert!((a - b).abs() < 1e-12 * a, "{a} {b}");
    }
}

#[test]
fn white_noise_holder_norm_tracks_regularity() {
    // 2D white noise sits in C^{-1-κ}: at a fixed scale the α = −1.5 profile
    // does not depend on h, while the α = −0.5 estimate grows under refinement
    let flat = Weight::Exponential { ell: 0.0 };
    let run = |n: usize, alpha: f64| -> Vec<(f64, Vec<f64>)> {
        let lat = make_lattice(2, 8.0, n).unwrap();
        (0..6)
            .map(|s| {
                let e = holder_norm_estimate(&sample_white_noise(&lat, 8, s).field, alpha, &flat).unwrap();
                (e.value, e.per_scale)
            })
            .collect()
    };
    let at_quarter = |rows: &[(f64, Vec<f64>)]| median(&rows.iter().map(|r| r.1[2]).collect::<Vec<_>>());
    let total = |rows: &[(f64, Vec<f64>)]| median(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let fixed = at_quarter(&run(128, -1.5)) / at_quarter(&run(64, -1.5));
    assert!((0.8..1.25).contains(&fixed), "{fixed}");
    let growth = total(&run(256, -0.5)) / total(&run(64, -0.5));
    assert!(growth > 1.5, "{growth}");
}
