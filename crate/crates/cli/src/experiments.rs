//! One runner per experiment kind. Runners check the wall-clock budget
//! between steps and report invariants as checks.

use std::f64::consts::PI;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use anderson_core::enhanced2d::{
    build_enhanced_2d, build_enhanced_from_field, build_green_kernel, compute_renorm_2d, resonance_sweep, shift_t_h,
    EnhancedNoise2D, ResonanceKernel,
};
use anderson_core::lattice::{make_lattice, Field, LatticeSpec, Weight};
use anderson_core::noise::{make_mollifier, make_mollifier_with_floor, mollify, mollify_field, sample_white_noise};
use anderson_core::norms::holder_norm_estimate;
use anderson_core::pam::{evolve_with_drift, manufactured_noise, prepare_drift, SolverOptions};
use anderson_core::renorm3d::{build_kernel_3d, compute_c_eps_3d, continuum_c_rho, estimate_c1_eps_3d, C1Estimator};
use anderson_core::spectral::{assemble_hamiltonian, ids_and_ground_state, laplace_of_measure, weyl_probe};
use anderson_core::stats::{linear_fit, median};

use crate::config::*;
use crate::output::{Check, Outcome, Table};
use crate::svg::Plot;

pub struct Budget {
    start: Instant,
    limit: f64,
}

impl Budget {
    pub fn new(limit: f64) -> Self {
        Self { start: Instant::now(), limit }
    }

    pub fn check(&self, step: &str) -> Result<()> {
        let used = self.start.elapsed().as_secs_f64();
        if used > self.limit {
            bail!("wall-clock budget of {}s exhausted after {used:.1}s, before {step}", self.limit);
        }
        Ok(())
    }
}

const FLAT: Weight = Weight::Exponential { ell: 0.0 };

fn grid(extent: f64, resolution: f64, eps: f64) -> Result<usize> {
    let n = (extent * resolution / eps).round() as usize;
    if !n.is_power_of_two() {
        bail!("extent·resolution/ε = {n} for ε = {eps} is not a power of two");
    }
    Ok(n)
}

fn gaussian(lat: LatticeSpec) -> Field {
    Field::from_fn(lat, |p| (-0.5 * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2])).exp())
}

pub fn run(cfg: &Config, budget: &Budget) -> Result<Outcome> {
    let seed = cfg.seed;
    match &cfg.experiment {
        Experiment::WhiteNoise(e) => white_noise(e, seed, budget),
        Experiment::Renorm2dRate(e) => renorm2d_rate(e, budget),
        Experiment::Renorm3dRate(e) => renorm3d_rate(e, seed, budget),
        Experiment::EnhancedCauchy(e) => enhanced_cauchy(e, seed, budget),
        Experiment::ShiftIdentities(e) => shift_identities(e, seed, budget),
        Experiment::SemigroupProps(e) => semigroup_props(e, budget),
        Experiment::TwoRouteOracle(e) => two_route_oracle(e, seed, budget),
        Experiment::IdsCoverage(e) => ids_coverage(e, seed, budget),
        Experiment::WeylSweep(e) => weyl_sweep(e, seed, budget),
        Experiment::ResonanceSweep(e) => resonance(e, budget),
    }
}

fn white_noise(e: &WhiteNoise, seed: u64, budget: &Budget) -> Result<Outcome> {
    let lat = make_lattice(e.dim, e.extent, e.n)?;
    let xi = sample_white_noise(&lat, seed, 0);
    let mut out = Outcome::default();
    let mut t = Table::new(&["quantity", "value"]);
    let vals = xi.field.values();
    let mean = xi.field.mean();
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
    // lattice white noise has variance h^{-d} per site
    let scaled = var * lat.cell_volume();
    t.push(vec![0.0, mean]);
    t.push(vec![1.0, scaled]);
    out.set("mean", mean);
    out.set("variance_times_cell_volume", scaled);
    out.set("sites", lat.sites());
    out.blobs.push(("xi".into(), xi.field.to_bytes()));
    budget.check("mollification")?;
    if let Some(eps) = e.epsilon {
        let m = make_mollifier(&lat, eps)?;
        let x = mollify(&xi, &m)?;
        out.set("mollified_max_abs", x.max_abs());
        out.blobs.push(("xi_eps".into(), x.to_bytes()));
    }
    // the sample variance of N standard normals has relative spread √(2/N)
    let tol = 6.0 * (2.0 / lat.sites() as f64).sqrt();
    out.checks.push(Check::at_most("variance_relative_error", (scaled - 1.0).abs(), tol));
    out.tables.push(t);
    Ok(out)
}

fn renorm2d_rate(e: &Renorm2dRate, budget: &Budget) -> Result<Outcome> {
    let rk = ResonanceKernel::new();
    let mut t = Table::new(&["epsilon", "ln_inv_epsilon", "c_eps", "c_eps_continuum"]);
    for &eps in &e.epsilons {
        budget.check(&format!("C_ε at ε = {eps}"))?;
        let lat = make_lattice(2, e.extent, grid(e.extent, e.resolution, eps)?)?;
        let m = make_mollifier(&lat, eps)?;
        let k = build_green_kernel(&lat)?;
        let c = compute_renorm_2d(&m, &k)?;
        t.push(vec![eps, (1.0 / eps).ln(), c.c_eps, rk.continuum_renorm(eps)?]);
    }
    if t.rows.len() < 2 {
        bail!("need at least two ε values for a slope");
    }
    let (intercept, slope) = linear_fit(&t.column(1), &t.column(2));
    let target = 1.0 / (2.0 * PI);
    let rel = (slope - target).abs() / target;
    let mut out = Outcome::default();
    out.set("slope", slope);
    out.set("intercept", intercept);
    out.set("target_slope", target);
    out.set("relative_error", rel);
    out.checks.push(Check::at_most("slope_relative_error", rel, e.slope_tolerance));
    out.plots.push(Plot::new(0, 0, &[2], "C_eps against epsilon").log_x());
    out.tables.push(t);
    Ok(out)
}

fn max_rel_change(v: &[f64]) -> f64 {
    let tail = &v[v.len().saturating_sub(3)..];
    tail.windows(2).map(|w| (w[1] - w[0]).abs() / w[0].abs()).fold(0.0, f64::max)
}

fn renorm3d_rate(e: &Renorm3dRate, seed: u64, budget: &Budget) -> Result<Outcome> {
    if e.c1_samples.len() != e.c1_epsilons.len() {
        bail!("c1_samples needs one entry per c1_epsilons value");
    }
    // quantity 0 is c_ε·ε, quantity 1 is c_ε^{(1)} / ln(1/ε)
    let mut t = Table::new(&["quantity", "epsilon", "value", "stderr"]);
    let mut ce = Vec::new();
    for &eps in &e.c_epsilons {
        budget.check(&format!("c_ε at ε = {eps}"))?;
        let lat = make_lattice(3, e.c_extent, grid(e.c_extent, e.c_resolution, eps)?)?;
        let m = make_mollifier(&lat, eps)?;
        let k = build_kernel_3d(&lat)?;
        let v = compute_c_eps_3d(&m, &k)? * eps;
        ce.push(v);
        t.push(vec![0.0, eps, v, 0.0]);
    }
    let mut ratios = Vec::new();
    for (&eps, &samples) in e.c1_epsilons.iter().zip(&e.c1_samples) {
        budget.check(&format!("c_ε^(1) at ε = {eps}"))?;
        let lat = make_lattice(3, e.c1_extent, grid(e.c1_extent, e.c1_resolution, eps)?)?;
        let m = make_mollifier_with_floor(&lat, eps, e.c1_resolution)?;
        let k = build_kernel_3d(&lat)?;
        let c = compute_c_eps_3d(&m, &k)?;
        let est = estimate_c1_eps_3d(&m, &k, c, samples, seed, C1Estimator::Adjacent)?;
        let l = (1.0 / eps).ln();
        ratios.push(est.mean / l);
        t.push(vec![1.0, eps, est.mean / l, est.stderr / l]);
    }
    let mut out = Outcome::default();
    out.set("c_eps_times_eps", &ce);
    out.set("c_rho_continuum", continuum_c_rho());
    out.set("c1_over_log", &ratios);
    if ce.len() >= 2 {
        out.checks.push(Check::at_most("c_eps_eps_change", max_rel_change(&ce), e.c_tolerance));
    }
    if ratios.len() >= 2 {
        out.checks.push(Check::at_most("c1_over_log_change", max_rel_change(&ratios), e.c1_tolerance));
    }
    out.tables.push(t);
    Ok(out)
}

fn enhanced_cauchy(e: &EnhancedCauchy, seed: u64, budget: &Budget) -> Result<Outcome> {
    if e.epsilons.len() < 2 {
        bail!("need at least two ε values");
    }
    let lat = make_lattice(2, e.extent, e.n)?;
    let kernel = build_green_kernel(&lat)?;
    let setups = e
        .epsilons
        .iter()
        .map(|&eps| {
            let m = make_mollifier(&lat, eps)?;
            let c = compute_renorm_2d(&m, &kernel)?;
            Ok((m, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = e.epsilons.len() - 1;
    let mut t = Table::new(&["epsilon", "seed", "norm"]);
    let mut per_pair = vec![Vec::new(); pairs];
    for s in 0..e.seeds {
        budget.check(&format!("seed {s}"))?;
        let xi = sample_white_noise(&lat, seed, s);
        let z: Vec<EnhancedNoise2D> =
            setups.iter().map(|(m, c)| build_enhanced_2d(&xi, m, &kernel, c)).collect::<std::result::Result<_, _>>()?;
        for i in 0..pairs {
            let dx = z[i].x.sub(&z[i + 1].x)?;
            let du = z[i].u.sub(&z[i + 1].u)?;
            let v = holder_norm_estimate(&dx, -1.0 - e.kappa, &FLAT)?.value + holder_norm_estimate(&du, -e.kappa, &FLAT)?.value;
            per_pair[i].push(v);
            t.push(vec![e.epsilons[i], s as f64, v]);
        }
    }
    let med: Vec<f64> = per_pair.iter().map(|v| median(v)).collect();
    let mut medians = Table::new(&["epsilon", "median_norm"]).named("medians");
    for (i, m) in med.iter().enumerate() {
        medians.push(vec![e.epsilons[i], *m]);
    }
    let mut out = Outcome::default();
    out.set("kappa", e.kappa);
    out.set("medians", &med);
    out.checks.push(Check::holds("medians_strictly_decreasing", med.windows(2).all(|w| w[1] < w[0])));
    out.tables.push(t);
    out.tables.push(medians);
    out.plots.push(Plot::new(1, 0, &[1], "median norm of Z_eps - Z_eps/2").log_x().log_y());
    Ok(out)
}

fn shift_identities(e: &ShiftIdentities, seed: u64, budget: &Budget) -> Result<Outcome> {
    let lat = make_lattice(2, e.extent, e.n)?;
    let kernel = build_green_kernel(&lat)?;
    let m = make_mollifier(&lat, e.epsilon)?;
    let c = compute_renorm_2d(&m, &kernel)?;
    let xi = sample_white_noise(&lat, seed, 0);
    let q = build_enhanced_2d(&xi, &m, &kernel, &c)?;
    let scale = q.u.max_abs().max(q.x.max_abs()).max(1.0);
    // identity 0: shift equivariance, 1: T_0, 2: T_{-h}T_h, 3: Cameron–Martin
    let mut t = Table::new(&["identity", "shift0", "shift1", "relative_error"]);
    let mut out = Outcome::default();
    let mut bitwise = true;
    for s in &e.shifts {
        budget.check("shift equivariance")?;
        let s3 = [s[0], s[1], 0];
        let shifted = build_enhanced_from_field(&xi.field.cyclic_shift(s3), &m, &kernel, &c)?;
        bitwise &= shifted.x == q.x.cyclic_shift(s3);
        let err = shifted.u.sub(&q.u.cyclic_shift(s3))?.max_abs() / scale;
        t.push(vec![0.0, s[0] as f64, s[1] as f64, err]);
        out.checks.push(Check::at_most(&format!("shift_equivariance_{}_{}", s[0], s[1]), err, e.tolerance));
    }
    out.checks.push(Check::holds("mollified_noise_shift_bitwise", bitwise));
    let h = Field::from_fn(lat, |p| (-(p[0] * p[0] + 0.5 * p[1] * p[1])).exp() * (2.0 * p[1]).cos());
    let t0 = shift_t_h(&q, &Field::zeros(lat), &kernel)?.max_abs_diff(&q)? / scale;
    let back = shift_t_h(&shift_t_h(&q, &h, &kernel)?, &h.scale(-1.0), &kernel)?.max_abs_diff(&q)? / scale;
    let lhs = shift_t_h(&q, &mollify_field(&h, &m)?, &kernel)?;
    let rhs = build_enhanced_from_field(&xi.field.add(&h)?, &m, &kernel, &c)?;
    let cm = lhs.max_abs_diff(&rhs)? / scale;
    for (i, (name, v)) in [("t_zero_identity", t0), ("t_inverse", back), ("cameron_martin", cm)].into_iter().enumerate() {
        t.push(vec![(i + 1) as f64, 0.0, 0.0, v]);
        out.checks.push(Check::at_most(name, v, e.tolerance));
    }
    out.tables.push(t);
    Ok(out)
}

fn semigroup_props(e: &SemigroupProps, budget: &Budget) -> Result<Outcome> {
    let lat = make_lattice(2, e.extent, e.n)?;
    let kernel = build_green_kernel(&lat)?;
    let drift = prepare_drift(&manufactured_noise(&lat, e.amplitude)?, &kernel)?;
    let f = gaussian(lat);
    let g = Field::from_fn(lat, |p| (-((p[0] - 1.0).powi(2) + (p[1] + 0.5).powi(2))).exp() * (1.0 + 0.3 * p[0]));
    let norms = f.l2_norm() * g.l2_norm();
    let mut t = Table::new(&["dt", "asymmetry"]);
    for &dt in &e.dts {
        budget.check(&format!("symmetry at dt = {dt}"))?;
        let o = SolverOptions::with_dt(dt).scheme(e.scheme).laplacian(e.laplacian);
        let pg = evolve_with_drift(&drift, &g, e.t, &o)?;
        let pf = evolve_with_drift(&drift, &f, e.t, &o)?;
        t.push(vec![dt, (f.inner(&pg)? - pf.inner(&g)?).abs() / norms]);
    }
    budget.check("composition")?;
    let dt = e.dts.iter().copied().fold(0.0, f64::max);
    let o = SolverOptions::with_dt(dt).scheme(e.scheme).laplacian(e.laplacian);
    let direct = evolve_with_drift(&drift, &f, e.t, &o)?;
    let split = evolve_with_drift(&drift, &evolve_with_drift(&drift, &f, e.split, &o)?, e.t - e.split, &o)?;
    let comp = direct.sub(&split)?.l2_norm() / f.l2_norm();
    let asym = t.column(1);
    let mut sorted: Vec<(f64, f64)> = e.dts.iter().copied().zip(asym.iter().copied()).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let finest = sorted.last().map(|p| p.1).unwrap_or(f64::NAN);
    let mut out = Outcome::default();
    out.set("composition_error", comp);
    out.set("asymmetry", &asym);
    out.checks.push(Check::at_most("asymmetry_at_finest_dt", finest, e.symmetry_tolerance));
    out.checks.push(Check::holds("asymmetry_shrinks", sorted.windows(2).all(|w| w[1].1 < w[0].1)));
    out.checks.push(Check::at_most("composition", comp, e.composition_tolerance));
    out.plots.push(Plot::new(0, 0, &[1], "semigroup asymmetry against dt").log_x().log_y());
    out.tables.push(t);
    Ok(out)
}

fn two_route_oracle(e: &TwoRouteOracle, seed: u64, budget: &Budget) -> Result<Outcome> {
    let lat = make_lattice(2, e.extent, e.n)?;
    let kernel = build_green_kernel(&lat)?;
    let q = match e.source {
        NoiseSource::Manufactured => manufactured_noise(&lat, e.amplitude)?,
        NoiseSource::WhiteNoise => {
            let m = make_mollifier(&lat, e.epsilon)?;
            let c = compute_renorm_2d(&m, &kernel)?;
            build_enhanced_2d(&sample_white_noise(&lat, seed, 0), &m, &kernel, &c)?
        }
    };
    let drift = prepare_drift(&q, &kernel)?;
    let opts = SolverOptions::with_dt(e.dt).scheme(anderson_core::pam::Scheme::Strang);
    let kind = opts.laplacian;
    let h = assemble_hamiltonian(&drift.effective_potential(kind), kind)?;
    budget.check("eigendecomposition")?;
    let f = gaussian(lat);
    let mu = h.eigendecompose().context("dense reference needs at most 4096 sites")?.spectral_measure(&f)?;
    let norm2 = f.inner(&f)?;
    let mut t = Table::new(&["t", "laplace_of_measure", "solver_pairing", "abs_gap"]);
    for &time in &e.times {
        budget.check(&format!("solver at t = {time}"))?;
        let a = laplace_of_measure(&mu, time)?;
        let b = f.inner(&evolve_with_drift(&drift, &f, time, &opts)?)?;
        t.push(vec![time, a, b, (a - b).abs()]);
    }
    let gap = t.column(3).into_iter().fold(0.0, f64::max);
    let mut out = Outcome::default();
    out.set("max_abs_gap", gap);
    out.set("max_relative_gap", gap / norm2);
    out.set("f_norm_squared", norm2);
    out.checks.push(Check::at_most("max_abs_gap", gap, e.tolerance));
    out.tables.push(t);
    Ok(out)
}

fn ids_coverage(e: &IdsCoverage, seed: u64, budget: &Budget) -> Result<Outcome> {
    let mut t = Table::new(&["extent", "coverage", "median_ground_state", "max_gap"]);
    let mut hist = Table::new(&["bin_left", "bin_right", "count"]).named("histogram");
    for (li, &l) in e.extents.iter().enumerate() {
        let n = (l / e.spacing).round() as usize;
        let lat = make_lattice(2, l, n)?;
        let m = make_mollifier_with_floor(&lat, e.epsilon, 2.0)?;
        let c = compute_renorm_2d(&m, &build_green_kernel(&lat)?)?;
        let mut spectra = Vec::new();
        for s in 0..e.seeds {
            budget.check(&format!("spectrum L = {l}, seed {s}"))?;
            let w = mollify(&sample_white_noise(&lat, seed, s), &m)?.add_scalar(c.c_eps);
            spectra.push(assemble_hamiltonian(&w, e.laplacian)?.eigenvalues()?);
        }
        let st = ids_and_ground_state(&spectra, (e.interval[0], e.interval[1]), e.distance, e.bins)?;
        t.push(vec![l, st.coverage, st.median_ground_state, st.max_gap]);
        if li + 1 == e.extents.len() {
            for (a, b, k) in &st.histogram {
                hist.push(vec![*a, *b, *k as f64]);
            }
        }
    }
    let cov = t.column(1);
    let ground = t.column(2);
    let mut out = Outcome::default();
    out.set("coverage", &cov);
    out.set("median_ground_state", &ground);
    out.checks.push(Check::holds("ground_state_non_increasing", ground.windows(2).all(|w| w[1] <= w[0])));
    out.checks.push(Check::holds("coverage_increasing", cov.windows(2).all(|w| w[1] >= w[0])));
    let last = cov.last().copied().unwrap_or(0.0);
    out.checks.push(Check { name: "coverage_at_largest_extent".into(), value: last, bound: e.coverage_target, pass: last >= e.coverage_target });
    out.plots.push(Plot::new(1, 0, &[2], "pooled eigenvalue histogram"));
    out.tables.push(t);
    out.tables.push(hist);
    Ok(out)
}

fn weyl_sweep(e: &WeylSweep, seed: u64, budget: &Budget) -> Result<Outcome> {
    let lat = make_lattice(2, e.extent, e.n)?;
    let m = make_mollifier(&lat, e.epsilon)?;
    let c = compute_renorm_2d(&m, &build_green_kernel(&lat)?)?;
    let r = e.energy.unwrap_or(c.c_eps);
    let mut t = Table::new(&["seed", "radius", "residual", "bound", "sup_dev", "laplacian_norm"]);
    let mut per_n = vec![Vec::new(); e.radii.len()];
    let mut bound_ok = true;
    for s in 0..e.seeds {
        budget.check(&format!("seed {s}"))?;
        let w = mollify(&sample_white_noise(&lat, seed, s), &m)?.add_scalar(c.c_eps);
        for (i, &n) in e.radii.iter().enumerate() {
            let p = weyl_probe(&w, r, n, e.laplacian)?;
            bound_ok &= p.residual <= p.bound + 1e-10;
            per_n[i].push(p.residual);
            t.push(vec![s as f64, n, p.residual, p.bound, p.sup_dev, p.laplacian_norm]);
        }
    }
    let med: Vec<f64> = per_n.iter().map(|v| median(v)).collect();
    let mut medians = Table::new(&["radius", "median_residual"]).named("medians");
    for (n, v) in e.radii.iter().zip(&med) {
        medians.push(vec![*n, *v]);
    }
    let mut out = Outcome::default();
    out.set("energy", r);
    out.set("median_residual", &med);
    out.checks.push(Check::holds("residual_within_bound", bound_ok));
    out.checks.push(Check::holds("median_residual_decreasing", med.windows(2).all(|w| w[1] < w[0])));
    out.plots.push(Plot::new(1, 0, &[1], "median Weyl residual against radius").log_x().log_y());
    out.tables.push(t);
    out.tables.push(medians);
    Ok(out)
}

fn resonance(e: &ResonanceSweep, budget: &Budget) -> Result<Outcome> {
    budget.check("resonance sweep")?;
    let sweep = resonance_sweep(e.c, &e.deltas, &ResonanceKernel::new())?;
    let mut t = Table::new(&["delta", "a", "abs_a_over_delta", "residual", "contraction", "ln_lambda", "iterations"]);
    for r in &sweep.results {
        t.push(vec![r.delta, r.a, r.a.abs() / r.delta, r.residual, r.contraction_factor, r.ln_lambda, r.iterations as f64]);
    }
    let res = sweep.results.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let q = sweep.results.iter().map(|r| r.contraction_factor).fold(0.0, f64::max);
    let mut out = Outcome::default();
    out.set("r0", sweep.r0);
    out.set("delta0", sweep.delta0);
    out.set("rejected", &sweep.rejected);
    out.checks.push(Check::holds("some_delta_accepted", !sweep.results.is_empty()));
    out.checks.push(Check::at_most("max_residual", res, e.residual_tolerance));
    out.checks.push(Check { name: "max_contraction".into(), value: q, bound: 1.0, pass: q < 1.0 });
    out.plots.push(Plot::new(0, 0, &[2], "|a_delta| / delta").log_x());
    out.tables.push(t);
    Ok(out)
}
