//! The discrete Hamiltonian `H = −Δ + W`, its eigendecomposition and
//! spectral measures, Weyl-sequence probes and pooled spectrum statistics.

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Field, LatticeSpec};
use crate::pam::{laplacian, LaplacianKind};
use crate::radial::bump;
use crate::stats::{median, Neumaier};

/// Largest number of unknowns assembled as a dense matrix.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
pub struct DiscreteHamiltonian {
    pub potential: Field,
    pub laplacian: LaplacianKind,
    dense: Option<Mat<f64>>,
}

pub fn assemble_hamiltonian(w: &Field, kind: LaplacianKind) -> Result<DiscreteHamiltonian> {
    let lat = *w.lattice();
    let dense = (lat.sites() <= DENSE_LIMIT).then(|| dense_matrix(w, kind));
    Ok(DiscreteHamiltonian { potential: w.clone(), laplacian: kind, dense })
}

fn dense_matrix(w: &Field, kind: LaplacianKind) -> Mat<f64> {
    let lat = *w.lattice();
    let n = lat.sites();
    // −Δ is circulant: its first column is −Δ applied to the unit vector at site 0.
    let col = match kind {
        LaplacianKind::Fd2 => {
            let mut c = vec![0.0; n];
            let h2 = lat.h() * lat.h();
            c[0] = 2.0 * lat.dim() as f64 / h2;
            for a in 0..lat.dim() {
                for s in [-1i64, 1] {
                    let mut sh = [0i64; 3];
                    sh[a] = s;
                    c[lat.offset(0, sh)] -= 1.0 / h2;
                }
            }
            c
        }
        LaplacianKind::Spectral => {
            let mut e0 = vec![0.0; n];
            e0[0] = 1.0;
            laplacian(&Field::new(lat, e0).expect("finite"), kind).scale(-1.0).into_values()
        }
    };
    let ks: Vec<[usize; 3]> = (0..n).map(|i| lat.unflatten(i)).collect();
    let m = lat.n();
    let diff = |i: usize, j: usize| {
        let (a, b) = (ks[i], ks[j]);
        lat.flatten([(a[0] + m - b[0]) % m, (a[1] + m - b[1]) % m, (a[2] + m - b[2]) % m])
    };
    let mut h = Mat::<f64>::from_fn(n, n, |i, j| col[diff(i, j)]);
    for i in 0..n {
        h[(i, i)] += w.values()[i];
        for j in 0..i {
            let s = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = s;
            h[(j, i)] = s;
        }
    }
    h
}

impl DiscreteHamiltonian {
    pub fn lattice(&self) -> &LatticeSpec {
        self.potential.lattice()
    }

    pub fn dense(&self) -> Result<&Mat<f64>> {
        self.dense.as_ref().ok_or(Error::DenseTooLarge(self.lattice().sites()))
    }

    /// `H f` through the Fourier symbol; agrees with the dense matrix.
    pub fn apply(&self, f: &Field) -> Result<Field> {
        f.check_same(&self.potential)?;
        laplacian(f, self.laplacian).scale(-1.0).add(&f.mul(&self.potential)?)
    }

    pub fn asymmetry(&self) -> Result<f64> {
        let h = self.dense()?;
        let mut worst: f64 = 0.0;
        for i in 0..h.nrows() {
            for j in 0..i {
                worst = worst.max((h[(i, j)] - h[(j, i)]).abs());
            }
        }
        Ok(worst)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.dense()?.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))
    }

    pub fn eigendecompose(&self) -> Result<Eigendecomposition> {
        let evd = self.dense()?.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        let values = (0..s.nrows()).map(|i| s[i]).collect();
        Ok(Eigendecomposition { lattice: *self.lattice(), values, vectors: evd.U().to_owned() })
    }
}

#[derive(Debug, Clone)]
pub struct Eigendecomposition {
    pub lattice: LatticeSpec,
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors (Euclidean), one per column.
    pub vectors: Mat<f64>,
}

impl Eigendecomposition {
    /// `μ_f = Σ_k ⟨f, v_k⟩² δ_{λ_k}` with the `L²` pairing `h^d Σ`.
    pub fn spectral_measure(&self, f: &Field) -> Result<SpectralMeasure> {
        if f.lattice() != &self.lattice {
            return Err(Error::LatticeMismatch);
        }
        let vol = self.lattice.cell_volume();
        let n = self.values.len();
        let fv = f.values();
        let atoms = (0..n)
            .map(|k| {
                let col = self.vectors.col(k);
                let mut c = Neumaier::default();
                for i in 0..n {
                    c.add(col[i] * fv[i]);
                }
                (self.values[k], vol * c.value() * c.value())
            })
            .collect();
        Ok(SpectralMeasure { atoms })
    }
}

pub fn eigensolve_spectral_measure(h: &DiscreteHamiltonian, f: &Field) -> Result<SpectralMeasure> {
    h.eigendecompose()?.spectral_measure(f)
}

/// Gauss quadrature of `μ_f` from `k` Lanczos steps.
#[derive(Debug, Clone)]
pub struct LanczosResult {
    /// Ritz values, ascending.
    pub ritz: Vec<f64>,
    /// `β_k |s_{kj}|` per Ritz value; some eigenvalue of `H` lies within it.
    pub residuals: Vec<f64>,
    /// Atoms at the Ritz values with weights `‖f‖² s_{1j}²`.
    pub measure: SpectralMeasure,
    /// Moments `0..=exact_moments` of `μ_f` are reproduced up to rounding.
    pub exact_moments: usize,
    /// True when the Krylov space became invariant before `steps`.
    pub invariant: bool,
}

impl LanczosResult {
    /// Ritz values whose residual bound is at most `tol`.
    pub fn converged(&self, tol: f64) -> Vec<f64> {
        self.ritz.iter().zip(&self.residuals).filter(|(_, r)| **r <= tol).map(|(v, _)| *v).collect()
    }
}

/// Lanczos from `f` with full reorthogonalization; works on any lattice
/// size through `H::apply`.
pub fn lanczos(h: &DiscreteHamiltonian, f: &Field, steps: usize) -> Result<LanczosResult> {
    f.check_same(&h.potential)?;
    let n = f.lattice().sites();
    let norm = f.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    if steps == 0 || !(norm > 0.0) {
        return Err(Error::InvalidParameter("Lanczos needs a nonzero start and at least one step".into()));
    }
    let steps = steps.min(n);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut basis: Vec<Vec<f64>> = vec![f.values().iter().map(|v| v / norm).collect()];
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    let mut invariant = false;
    loop {
        let q = basis.last().expect("nonempty");
        let mut w = h.apply(&Field::new(*f.lattice(), q.clone())?)?.into_values();
        alpha.push(dot(q, &w));
        // two passes of classical Gram–Schmidt against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();
        if alpha.len() == steps {
            beta.push(b);
            break;
        }
        let scale = alpha.iter().map(|a| a.abs()).fold(1.0, f64::max);
        if b <= 1e-12 * scale {
            beta.push(0.0);
            invariant = true;
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    let k = alpha.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 || j == i + 1 {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    let evd = t.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mass = f.lattice().cell_volume() * norm * norm;
    let last = beta[k - 1];
    let ritz: Vec<f64> = (0..k).map(|j| s[j]).collect();
    let residuals = (0..k).map(|j| last * u[(k - 1, j)].abs()).collect();
    let atoms = (0..k).map(|j| (s[j], mass * u[(0, j)] * u[(0, j)])).collect();
    Ok(LanczosResult {
        ritz,
        residuals,
        measure: SpectralMeasure { atoms },
        exact_moments: if invariant { usize::MAX } else { 2 * k - 1 },
        invariant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    /// `(λ_k, weight_k)`, ascending in `λ`.
    pub atoms: Vec<(f64, f64)>,
}

impl SpectralMeasure {
    pub fn mass(&self) -> f64 {
        let mut acc = Neumaier::default();
        for &(_, w) in &self.atoms {
            acc.add(w);
        }
        acc.value()
    }

    /// `∫ λ^p dμ`.
    pub fn moment(&self, p: i32) -> f64 {
        let mut acc = Neumaier::default();
        for &(l, w) in &self.atoms {
            acc.add(w * l.powi(p));
        }
        acc.value()
    }

    /// `∫ dμ(λ) / (λ − z)`.
    pub fn stieltjes(&self, z: Complex64) -> Complex64 {
        self.atoms.iter().map(|&(l, w)| w / (l - z)).sum()
    }

    /// Normalized distribution function `μ((−∞, x]) / μ(ℝ)`.
    pub fn cdf(&self, x: f64) -> f64 {
        Cdf::new(self).at(x)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda,weight")?;
        for (l, m) in &self.atoms {
            writeln!(w, "{l:e},{m:e}")?;
        }
        Ok(())
    }
}

/// `Σ w_k e^{−sλ_k}`, with `e^{−s λ_min}` factored out before summing.
pub fn laplace_of_measure(mu: &SpectralMeasure, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!("Laplace variable {s} must be non-negative")));
    }
    let Some(&(lmin, _)) = mu.atoms.first() else { return Ok(0.0) };
    let mut acc = Neumaier::default();
    for &(l, w) in &mu.atoms {
        acc.add(w * (-s * (l - lmin)).exp());
    }
    Ok(acc.value() * (-s * lmin).exp())
}

struct Cdf {
    points: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Cdf {
    fn new(m: &SpectralMeasure) -> Self {
        let total = m.mass();
        let mut acc = Neumaier::default();
        let mut cumulative = Vec::with_capacity(m.atoms.len());
        for &(_, w) in &m.atoms {
            acc.add(w);
            cumulative.push(if total > 0.0 { acc.value() / total } else { 0.0 });
        }
        Self { points: m.atoms.iter().map(|a| a.0).collect(), cumulative }
    }

    fn at(&self, x: f64) -> f64 {
        match self.points.partition_point(|&p| p <= x) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }
}

/// Lévy distance between the normalized distribution functions.
pub fn levy_distance(a: &SpectralMeasure, b: &SpectralMeasure) -> f64 {
    let (fa, fb) = (Cdf::new(a), Cdf::new(b));
    // G(x) ≤ F(x+e) + e is a step condition whose worst case sits on an atom
    // of G or on an atom of F shifted by −e; same with the roles swapped.
    let one_side = |f: &Cdf, g: &Cdf, e: f64| {
        g.points.iter().copied().chain(f.points.iter().map(|p| p - e)).all(|x| g.at(x) <= f.at(x + e) + e + 1e-15)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if one_side(&fa, &fb, mid) && one_side(&fb, &fa, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylProbeResult {
    pub r: f64,
    pub n: f64,
    pub site: usize,
    pub center: [f64; 3],
    pub sup_dev: f64,
    pub residual: f64,
    pub laplacian_norm: f64,
    pub bound: f64,
}

/// Lattice offsets of the open ball `|d| h < radius`.
fn ball_offsets(lat: &LatticeSpec, radius: f64) -> Vec<[i64; 3]> {
    let r = (radius / lat.h()).ceil() as i64;
    let mut out = Vec::new();
    let range = |a: usize| if a < lat.dim() { -r..=r } else { 0..=0 };
    for i in range(0) {
        for j in range(1) {
            for k in range(2) {
                if (((i * i + j * j + k * k) as f64).sqrt() * lat.h()) < radius {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// Sliding maximum of half-width `w` along axis 0, with periodic wrap
/// (van Herk / Gil–Werman block scheme).
fn sliding_max_axis0(lat: &LatticeSpec, f: &[f64], w: usize) -> Vec<f64> {
    let n = lat.n();
    let width = 2 * w + 1;
    let mut out = vec![0.0; f.len()];
    let line_len = n;
    let mut ext = Vec::with_capacity(n + 2 * w);
    let lines = f.len() / n;
    let stride = lines; // axis 0 is the slowest axis
    for line in 0..lines {
        ext.clear();
        for t in 0..n + 2 * w {
            let i0 = (t + n - w % n) % n;
            ext.push(f[i0 * stride + line]);
        }
        let m = ext.len();
        let mut pre = vec![0.0; m];
        let mut suf = vec![0.0; m];
        for t in 0..m {
            pre[t] = if t % width == 0 { ext[t] } else { pre[t - 1].max(ext[t]) };
        }
        for t in (0..m).rev() {
            suf[t] = if t % width == width - 1 || t == m - 1 { ext[t] } else { suf[t + 1].max(ext[t]) };
        }
        for i0 in 0..line_len {
            // window ext[i0 .. i0 + width) is centred on site i0
            out[i0 * stride + line] = suf[i0].max(pre[i0 + width - 1]);
        }
    }
    out
}

/// `sup_{B(z, radius)} |W − r|` for every site `z`.
pub fn ball_sup_deviation(w: &Field, r: f64, radius: f64) -> Vec<f64> {
    let lat = *w.lattice();
    let dev: Vec<f64> = w.values().iter().map(|v| (v - r).abs()).collect();
    let offsets = ball_offsets(&lat, radius);
    // the ball is a union of segments along axis 0, one per transverse offset
    let mut by_transverse: std::collections::BTreeMap<(i64, i64), i64> = Default::default();
    for o in &offsets {
        let e = by_transverse.entry((o[1], o[2])).or_insert(0);
        *e = (*e).max(o[0].abs());
    }
    let mut cache: std::collections::HashMap<i64, Vec<f64>> = Default::default();
    let mut out = vec![0.0f64; lat.sites()];
    for (&(j, k), &half) in &by_transverse {
        let seg = cache.entry(half).or_insert_with(|| sliding_max_axis0(&lat, &dev, half as usize));
        for (i, o) in out.iter_mut().enumerate() {
            *o = o.max(seg[lat.offset(i, [0, j, k])]);
        }
    }
    out
}

/// `f_n(x) = χ(|x − z|/n)` normalized in `L²`, with `χ` the unit bump.
pub fn weyl_function(lat: &LatticeSpec, site: usize, n: f64) -> Field {
    let mut f = Field::zeros(*lat);
    for o in ball_offsets(lat, n) {
        let d = ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64).sqrt() * lat.h();
        f.values_mut()[lat.offset(site, o)] = bump(d / n);
    }
    let norm = f.l2_norm();
    f.scale(1.0 / norm)
}

pub fn weyl_probe(w: &Field, r: f64, n: f64, kind: LaplacianKind) -> Result<WeylProbeResult> {
    let lat = *w.lattice();
    if !(n > 0.0) || 2.0 * n >= 0.5 * lat.extent() {
        return Err(Error::BallTooLarge { radius: n, extent: lat.extent() });
    }
    let sup = ball_sup_deviation(w, r, n);
    let mut site = 0;
    for (i, v) in sup.iter().enumerate() {
        if *v < sup[site] {
            site = i;
        }
    }
    let f = weyl_function(&lat, site, n);
    let h = assemble_hamiltonian_operator(w, kind);
    let res = h.apply(&f)?.sub(&f.scale(r))?.l2_norm();
    let lap = laplacian(&f, kind).l2_norm();
    Ok(WeylProbeResult {
        r,
        n,
        site,
        center: lat.coord(site),
        sup_dev: sup[site],
        residual: res,
        laplacian_norm: lap,
        bound: lap + sup[site],
    })
}

fn assemble_hamiltonian_operator(w: &Field, kind: LaplacianKind) -> DiscreteHamiltonian {
    DiscreteHamiltonian { potential: w.clone(), laplacian: kind, dense: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumStatistics {
    /// `(bin_left, bin_right, count)`.
    pub histogram: Vec<(f64, f64, usize)>,
    pub ground_states: Vec<f64>,
    pub top_states: Vec<f64>,
    pub median_ground_state: f64,
    pub interval: (f64, f64),
    pub distance: f64,
    /// Fraction of `interval` within `distance` of a pooled eigenvalue.
    pub coverage: f64,
    /// Largest gap between pooled eigenvalues inside `interval`.
    pub max_gap: f64,
}

impl SpectrumStatistics {
    pub fn write_histogram_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_left,bin_right,count")?;
        for (a, b, c) in &self.histogram {
            writeln!(w, "{a:e},{b:e},{c}")?;
        }
        Ok(())
    }
}

/// Measure of `[a, b] ∩ ⋃_k [λ_k − d, λ_k + d]` over `b − a`, for sorted `λ`.
pub fn coverage_fraction(sorted: &[f64], a: f64, b: f64, d: f64) -> f64 {
    let mut covered = 0.0;
    let mut reach = a;
    for &l in sorted {
        let lo = (l - d).max(reach);
        let hi = (l + d).min(b);
        if hi > lo {
            covered += hi - lo;
            reach = hi;
        }
    }
    covered / (b - a)
}

/// Pooled density-of-states histogram and ground-state statistics for
/// spectra of independent samples.
pub fn ids_and_ground_state(
    samples: &[Vec<f64>],
    interval: (f64, f64),
    distance: f64,
    bins: usize,
) -> Result<SpectrumStatistics> {
    if samples.len() < 4 {
        return Err(Error::TooFewSamples { need: 4, got: samples.len() });
    }
    if samples.iter().any(|s| s.is_empty()) || bins == 0 {
        return Err(Error::InvalidParameter("empty spectrum or zero bins".into()));
    }
    let mut pooled: Vec<f64> = samples.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let ground_states: Vec<f64> = samples.iter().map(|s| s.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let top_states: Vec<f64> = samples.iter().map(|s| s.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let (lo, hi) = (pooled[0], pooled[pooled.len() - 1]);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &l in &pooled {
        let b = (((l - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let histogram =
        counts.into_iter().enumerate().map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c)).collect();
    let (a, b) = interval;
    let mut prev = a;
    let mut max_gap: f64 = 0.0;
    for &l in pooled.iter().filter(|&&l| l > a && l < b) {
        max_gap = max_gap.max(l - prev);
        prev = l;
    }
    max_gap = max_gap.max(b - prev);
    Ok(SpectrumStatistics {
        histogram,
        median_ground_state: median(&ground_states),
        ground_states,
        top_states,
        interval,
        distance,
        coverage: coverage_fraction(&pooled, a, b, distance),
        max_gap,
    })
}
