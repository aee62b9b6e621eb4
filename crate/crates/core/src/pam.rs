//! Time integration of the parabolic Anderson model.
//!
//! In 2D the enhanced noise `q = (X, U)` is turned into drift data
//! `V = G ∗ X`, `g = U + F ∗ X` and the transformed equation
//! `∂_t w = Δw − 2∇V·∇w + g w` is integrated; the semigroup is
//! `P_t f = e^{−V} w(t)` with `w(0) = e^{V} f`. In 3D the mollified equation
//! `∂_t u = Δu − (ξ_ε + C_ε) u` is integrated directly.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::enhanced2d::{EnhancedNoise2D, GreenKernel2D};
use crate::error::{Error, Result};
use crate::lattice::{fft, ifft_complex, Field, KernelSpectrum, LatticeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    #[default]
    Spectral,
    Fd2,
}

impl LaplacianKind {
    /// Symbol of `−Δ` at a wave vector.
    pub fn symbol(self, lat: &LatticeSpec, k: [f64; 3]) -> f64 {
        match self {
            LaplacianKind::Spectral => k[0] * k[0] + k[1] * k[1] + k[2] * k[2],
            LaplacianKind::Fd2 => {
                let h = lat.h();
                k.iter().take(lat.dim()).map(|&ki| (2.0 / h * (0.5 * ki * h).sin()).powi(2)).sum()
            }
        }
    }
}

/// Discrete Laplacian of the given kind (both act diagonally in Fourier).
pub fn laplacian(f: &Field, kind: LaplacianKind) -> Field {
    let lat = *f.lattice();
    KernelSpectrum::from_multiplier(lat, |k| Complex64::new(-kind.symbol(&lat, k), 0.0))
        .apply(f)
        .expect("same lattice")
}

fn heat_spectrum(lat: LatticeSpec, kind: LaplacianKind, t: f64) -> KernelSpectrum {
    KernelSpectrum::from_multiplier(lat, |k| Complex64::new((-t * kind.symbol(&lat, k)).exp(), 0.0))
}

/// `e^{tΔ} f` with the spectral Laplacian.
pub fn heat_propagate(f: &Field, t: f64) -> Field {
    heat_propagate_with(f, t, LaplacianKind::Spectral)
}

pub fn heat_propagate_with(f: &Field, t: f64, kind: LaplacianKind) -> Field {
    if t == 0.0 {
        return f.clone();
    }
    heat_spectrum(*f.lattice(), kind, t).apply(f).expect("same lattice")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftData2D {
    pub v: Field,
    pub grad_v: [Field; 2],
    pub g: Field,
}

pub fn prepare_drift(q: &EnhancedNoise2D, kernel: &GreenKernel2D) -> Result<DriftData2D> {
    let (v, grad_v) = kernel.potential_and_gradient(&q.x)?;
    let g = q.u.add(&kernel.remainder(&q.x)?)?;
    Ok(DriftData2D { v, grad_v, g })
}

impl DriftData2D {
    pub fn lattice(&self) -> &LatticeSpec {
        self.v.lattice()
    }

    pub fn grad_sup(&self) -> f64 {
        let [a, b] = &self.grad_v;
        a.values().iter().zip(b.values()).map(|(x, y)| (x * x + y * y).sqrt()).fold(0.0, f64::max)
    }

    /// Potential of the conjugated generator: `e^{−V}(Δ − 2∇V·∇ + g)e^{V} = Δ − W`
    /// with `W = |∇V|² − g − ΔV`, using the discrete Laplacian of `kind`.
    pub fn effective_potential(&self, kind: LaplacianKind) -> Field {
        let lap = laplacian(&self.v, kind);
        let [a, b] = &self.grad_v;
        let mut w = self.g.clone();
        for (i, o) in w.values_mut().iter_mut().enumerate() {
            let (x, y) = (a.values()[i], b.values()[i]);
            *o = x * x + y * y - *o - lap.values()[i];
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ExpEuler,
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub scheme: Scheme,
    pub laplacian: LaplacianKind,
    /// Fixed step; `None` uses `margin` times the stability bound.
    pub dt: Option<f64>,
    pub margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { scheme: Scheme::ExpEuler, laplacian: LaplacianKind::Spectral, dt: None, margin: 0.5 }
    }
}

impl SolverOptions {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt: Some(dt), ..Self::default() }
    }

    pub fn scheme(mut self, s: Scheme) -> Self {
        self.scheme = s;
        self
    }

    pub fn laplacian(mut self, k: LaplacianKind) -> Self {
        self.laplacian = k;
        self
    }
}

/// Largest admissible step: `margin / (‖g‖_∞ + ‖∇V‖_∞ k_max)`, `k_max = √d π/h`.
pub fn dt_max(drift: &DriftData2D, margin: f64) -> f64 {
    let lat = drift.lattice();
    let k_max = (lat.dim() as f64).sqrt() * PI / lat.h();
    margin / (drift.g.max_abs() + drift.grad_sup() * k_max).max(1e-300)
}

/// Step sizes covering `[0, t]`: whole steps of `dt` and one shorter
/// remainder when `t` is not on the grid.
pub fn step_sequence(t: f64, dt: f64) -> Vec<f64> {
    let n = (t / dt + 1e-9).floor() as usize;
    let mut steps = vec![dt; n];
    let rest = t - n as f64 * dt;
    if rest > 1e-12 * t.max(1.0) {
        steps.push(rest);
    }
    steps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub t: f64,
    pub l2: f64,
    pub min: f64,
    pub max: f64,
}

fn diagnostic(t: f64, w: &Field) -> Diagnostic {
    Diagnostic { t, l2: w.l2_norm(), min: w.min(), max: w.max() }
}

pub fn write_diagnostics_csv<W: std::io::Write>(rows: &[Diagnostic], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,l2,min,max")?;
    for r in rows {
        writeln!(w, "{:e},{:e},{:e},{:e}", r.t, r.l2, r.min, r.max)?;
    }
    Ok(())
}

/// Fraction of the L² mass in the outer 10% of the fundamental domain
/// (sites with some `|x_i| ≥ 0.4 L`).
pub fn boundary_mass_fraction(f: &Field) -> f64 {
    let lat = f.lattice();
    let cut = 0.4 * lat.extent();
    let (mut outer, mut total) = (0.0, 0.0);
    for (i, v) in f.values().iter().enumerate() {
        let x = lat.coord(i);
        let m = v * v;
        total += m;
        if x.iter().take(lat.dim()).any(|c| c.abs() >= cut) {
            outer += m;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

pub const WRAP_AROUND_THRESHOLD: f64 = 0.1;

/// One 2D semigroup run `f ↦ P_t f`.
#[derive(Debug, Clone)]
pub struct SemigroupRun {
    pub drift: DriftData2D,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub laplacian: LaplacianKind,
    pub w: Field,
    pub t: f64,
    pub diagnostics: Vec<Diagnostic>,
    grad_symbol: Vec<Complex64>,
    growth_rate: f64,
    w0_norm: f64,
}

impl SemigroupRun {
    pub fn new(drift: DriftData2D, f: &Field, t_final: f64, opts: &SolverOptions) -> Result<Self> {
        f.check_same(&drift.v)?;
        if !(t_final >= 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidParameter(format!("time horizon {t_final} must be non-negative")));
        }
        let bound = dt_max(&drift, opts.margin);
        let dt = match opts.dt {
            Some(dt) if dt > 0.0 && dt <= bound => dt,
            Some(dt) => {
                return Err(Error::InvalidParameter(format!("dt = {dt} violates the stability bound {bound:.3e}")))
            }
            None => bound,
        };
        let lat = *drift.lattice();
        let grad_symbol = (0..lat.sites())
            .map(|idx| {
                let k = lat.unflatten(idx);
                Complex64::new(-lat.grad_wavenumber(k[1]), lat.grad_wavenumber(k[0]))
            })
            .collect();
        // Energy estimate for the drift form: d/dt ½‖w‖² ≤ (‖g‖_∞ + ‖(ΔV)_+‖_∞)‖w‖².
        let lap_v = laplacian(&drift.v, opts.laplacian);
        let growth_rate = drift.g.max_abs() + lap_v.max().max(0.0) + 1.0;
        let w = f.zip_map(&drift.v, |a, v| a * v.exp())?;
        let w0_norm = w.l2_norm();
        let diagnostics = vec![diagnostic(0.0, &w)];
        Ok(Self {
            drift,
            dt,
            t_final,
            scheme: opts.scheme,
            laplacian: opts.laplacian,
            w,
            t: 0.0,
            diagnostics,
            grad_symbol,
            growth_rate,
            w0_norm,
        })
    }

    /// `−2∇V·∇w + g w`.
    fn reaction(&self, w: &Field) -> Field {
        let lat = *w.lattice();
        let mut buf = fft(w).coeffs().to_vec();
        for (c, s) in buf.iter_mut().zip(&self.grad_symbol) {
            *c *= *s;
        }
        let grad = ifft_complex(buf, &lat);
        let [a, b] = &self.drift.grad_v;
        let mut out = w.clone();
        for (i, o) in out.values_mut().iter_mut().enumerate() {
            let d = a.values()[i] * grad[i].re + b.values()[i] * grad[i].im;
            *o = -2.0 * d + self.drift.g.values()[i] * *o;
        }
        out
    }

    fn step_with(&mut self, dt: f64, heat: &KernelSpectrum, half: &KernelSpectrum) -> Result<()> {
        let lat = *self.w.lattice();
        self.w = match self.scheme {
            Scheme::ExpEuler => {
                let r = self.reaction(&self.w);
                let mut v = self.w.clone();
                for (o, ri) in v.values_mut().iter_mut().zip(r.values()) {
                    *o += dt * ri;
                }
                heat.apply(&v)?
            }
            Scheme::Strang => {
                let w = half.apply(&self.w)?;
                let axpy = |a: &Field, s: f64, b: &Field| {
                    let v = a.values().iter().zip(b.values()).map(|(x, y)| x + s * y).collect();
                    Field::new(lat, v)
                };
                let k1 = self.reaction(&w);
                let k2 = self.reaction(&axpy(&w, 0.5 * dt, &k1)?);
                let k3 = self.reaction(&axpy(&w, 0.5 * dt, &k2)?);
                let k4 = self.reaction(&axpy(&w, dt, &k3)?);
                let mut v = w;
                for (i, o) in v.values_mut().iter_mut().enumerate() {
                    *o += dt / 6.0
                        * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i]);
                }
                half.apply(&v)?
            }
        };
        self.t += dt;
        self.diagnostics.push(diagnostic(self.t, &self.w));
        Ok(())
    }

    /// Advances to `t_final`.
    pub fn run(&mut self) -> Result<()> {
        let lat = *self.w.lattice();
        let steps = step_sequence(self.t_final - self.t, self.dt);
        let mut cache: Option<(f64, KernelSpectrum, KernelSpectrum)> = None;
        for dt in steps {
            if cache.as_ref().map(|c| c.0) != Some(dt) {
                cache = Some((
                    dt,
                    heat_spectrum(lat, self.laplacian, dt),
                    heat_spectrum(lat, self.laplacian, 0.5 * dt),
                ));
            }
            let (_, heat, half) = cache.as_ref().expect("just set");
            let (heat, half) = (heat.clone(), half.clone());
            self.step_with(dt, &heat, &half)?;
        }
        self.t = self.t_final;
        self.check_growth()
    }

    fn check_growth(&self) -> Result<()> {
        if self.w0_norm == 0.0 {
            return Ok(());
        }
        let growth = self.w.l2_norm() / self.w0_norm;
        let bound = 10.0 * (self.growth_rate * self.t).exp();
        if !growth.is_finite() || growth > bound {
            return Err(Error::StabilityViolation { growth, bound });
        }
        Ok(())
    }

    /// `e^{−V} w(t)`.
    pub fn output(&self) -> Field {
        self.w.zip_map(&self.drift.v, |a, v| a * (-v).exp()).expect("same lattice")
    }

    pub fn wrap_around_suspect(&self) -> bool {
        boundary_mass_fraction(&self.output()) > WRAP_AROUND_THRESHOLD
    }
}

/// `P_t f = e^{−V} w^{q, e^{V} f}(t)`.
pub fn evolve_semigroup_2d(
    q: &EnhancedNoise2D,
    kernel: &GreenKernel2D,
    f: &Field,
    t: f64,
    opts: &SolverOptions,
) -> Result<Field> {
    evolve_with_drift(&prepare_drift(q, kernel)?, f, t, opts)
}

pub fn evolve_with_drift(drift: &DriftData2D, f: &Field, t: f64, opts: &SolverOptions) -> Result<Field> {
    let mut run = SemigroupRun::new(drift.clone(), f, t, opts)?;
    run.run()?;
    Ok(run.output())
}

/// `e^{−tH} f` for `H = −Δ + W` on any lattice. Exponential Euler uses
/// `u ← e^{dtΔ}(1 − dt W)u`, Strang uses `e^{dtΔ/2} e^{−dt W} e^{dtΔ/2}`.
pub fn evolve_with_potential(w: &Field, f: &Field, t: f64, opts: &SolverOptions) -> Result<Field> {
    f.check_same(w)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time horizon {t} must be non-negative")));
    }
    let lat = *w.lattice();
    let bound = opts.margin / w.max_abs().max(1e-300);
    let dt = match opts.dt {
        Some(dt) if dt > 0.0 && dt <= bound => dt,
        Some(dt) => return Err(Error::InvalidParameter(format!("dt = {dt} violates the stability bound {bound:.3e}"))),
        None => bound,
    };
    let mut u = f.clone();
    let u0 = u.l2_norm();
    let mut cache: Option<(f64, KernelSpectrum, KernelSpectrum)> = None;
    for dt in step_sequence(t, dt) {
        if cache.as_ref().map(|c| c.0) != Some(dt) {
            cache = Some((dt, heat_spectrum(lat, opts.laplacian, dt), heat_spectrum(lat, opts.laplacian, 0.5 * dt)));
        }
        let (_, heat, half) = cache.as_ref().expect("just set");
        u = match opts.scheme {
            Scheme::ExpEuler => heat.apply(&u.zip_map(w, |a, p| a * (1.0 - dt * p))?)?,
            Scheme::Strang => half.apply(&half.apply(&u)?.zip_map(w, |a, p| a * (-dt * p).exp())?)?,
        };
    }
    if u0 > 0.0 {
        let growth = u.l2_norm() / u0;
        let bound = 10.0 * ((w.min().min(0.0).abs() + 1.0) * t).exp();
        if !growth.is_finite() || growth > bound {
            return Err(Error::StabilityViolation { growth, bound });
        }
    }
    Ok(u)
}

/// `∂_t u = Δu − (ξ_ε + C_ε)u` on a 3D lattice.
pub fn evolve_direct_3d(xi_eps: &Field, c_eps: f64, f: &Field, t: f64, opts: &SolverOptions) -> Result<Field> {
    if xi_eps.lattice().dim() != 3 {
        return Err(Error::WrongDimension { expected: 3, got: xi_eps.lattice().dim() });
    }
    evolve_with_potential(&xi_eps.add_scalar(c_eps), f, t, opts)
}

/// Smooth enhanced noise built from a few low Fourier modes, used where a
/// well-resolved non-trivial `q` is needed.
pub fn manufactured_noise(lat: &LatticeSpec, amplitude: f64) -> Result<EnhancedNoise2D> {
    if lat.dim() != 2 {
        return Err(Error::WrongDimension { expected: 2, got: lat.dim() });
    }
    let k = 2.0 * PI / lat.extent();
    let x = Field::from_fn(*lat, |p| amplitude * (0.6 * (k * p[0]).cos() + 0.4 * (k * (p[0] + 2.0 * p[1])).sin()));
    let u = Field::from_fn(*lat, |p| amplitude * (0.5 * (k * p[1]).cos() + 0.3 * (2.0 * k * p[0]).sin() + 0.2));
    EnhancedNoise2D::new(x, u, None)
}
