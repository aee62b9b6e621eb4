//! Two-dimensional enhanced noise `(ξ_ε, |∇Y_ε|² - C_ε)`, the truncated
//! Green kernel `G` with remainder `F = -ΔG - δ_0`, the Cameron–Martin
//! shift `T_h`, and the resonance fixed point.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{fft_nd, ifft_complex, Field, KernelSpectrum, LatticeSpec};
use crate::noise::{mollify, mollify_field, sample_white_noise, Mollifier, WhiteNoiseSample};
use crate::radial::{cutoff, cutoff_d1, cutoff_d2, BumpTransform, GaussLegendre};
use crate::stats::mean_stderr;

/// `∫∫_{[0,1]²} ln(x² + y²) dx dy`.
pub const LOG_SQUARE_MEAN: f64 = -0.736_056_492_645_158_1;

/// `-ln(r) χ(r) / 2π`.
pub fn green_profile(r: f64) -> f64 {
    if r >= 2.0 {
        0.0
    } else {
        -r.ln() * cutoff(r) / (2.0 * PI)
    }
}

/// `F = -ΔG` away from the origin, nonzero only for `1 < r < 2`.
pub fn remainder_profile(r: f64) -> f64 {
    if r <= 1.0 || r >= 2.0 {
        return 0.0;
    }
    let phi = -r.ln() / (2.0 * PI);
    let dphi = -1.0 / (2.0 * PI * r);
    let c1 = cutoff_d1(r);
    let c2 = cutoff_d2(r);
    -(2.0 * dphi * c1 + phi * (c2 + c1 / r))
}

/// Average of `-ln|x| / 2π` over the square cell `[-h/2, h/2]²`.
pub fn singular_cell_average(h: f64) -> f64 {
    let a = 0.5 * h;
    -(a.ln() + 0.5 * LOG_SQUARE_MEAN) / (2.0 * PI)
}

#[derive(Debug, Clone)]
pub struct GreenKernel2D {
    pub g: Field,
    pub f: Field,
    g_hat: KernelSpectrum,
    f_hat: KernelSpectrum,
}

pub fn build_green_kernel(lattice: &LatticeSpec) -> Result<GreenKernel2D> {
    if lattice.dim() != 2 {
        return Err(Error::WrongDimension { expected: 2, got: lattice.dim() });
    }
    if lattice.extent() <= 4.0 {
        return Err(Error::TorusTooSmall(lattice.extent()));
    }
    if lattice.h() > 1.0 {
        return Err(Error::InvalidParameter(format!("spacing {} too coarse for the Green kernel", lattice.h())));
    }
    let h = lattice.h();
    let radius = |d: [f64; 3]| (d[0] * d[0] + d[1] * d[1]).sqrt();
    let mut g = Field::kernel_from_fn(*lattice, |d| green_profile(radius(d)));
    g.values_mut()[0] = singular_cell_average(h);
    let f = Field::kernel_from_fn(*lattice, |d| remainder_profile(radius(d)));
    let g_hat = KernelSpectrum::new(&g);
    let f_hat = KernelSpectrum::new(&f);
    Ok(GreenKernel2D { g, f, g_hat, f_hat })
}

impl GreenKernel2D {
    pub fn lattice(&self) -> &LatticeSpec {
        self.g.lattice()
    }

    pub fn g_spectrum(&self) -> &KernelSpectrum {
        &self.g_hat
    }

    pub fn f_spectrum(&self) -> &KernelSpectrum {
        &self.f_hat
    }

    /// `G ∗ x`.
    pub fn potential(&self, x: &Field) -> Result<Field> {
        self.g_hat.apply(x)
    }

    /// `F ∗ x`.
    pub fn remainder(&self, x: &Field) -> Result<Field> {
        self.f_hat.apply(x)
    }

    /// `(G ∗ x, ∇(G ∗ x))` with spectral gradients from one forward transform.
    pub fn potential_and_gradient(&self, x: &Field) -> Result<(Field, [Field; 2])> {
        let lat = *self.lattice();
        if x.lattice() != &lat {
            return Err(Error::LatticeMismatch);
        }
        let mut buf: Vec<Complex64> = x.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut buf, &lat, FftDirection::Forward);
        for (c, g) in buf.iter_mut().zip(self.g_hat.hat()) {
            *c *= *g;
        }
        // ∂₀Y and ∂₁Y are both real, so pack them as real and imaginary part.
        let mut grad = vec![Complex64::new(0.0, 0.0); buf.len()];
        for (idx, (gc, c)) in grad.iter_mut().zip(&buf).enumerate() {
            let k = lat.unflatten(idx);
            let k0 = lat.grad_wavenumber(k[0]);
            let k1 = lat.grad_wavenumber(k[1]);
            *gc = c * Complex64::new(-k1, k0);
        }
        let v = ifft_complex(buf, &lat);
        let gr = ifft_complex(grad, &lat);
        let v = Field::new(lat, v.iter().map(|c| c.re).collect())?;
        let g0 = Field::new(lat, gr.iter().map(|c| c.re).collect())?;
        let g1 = Field::new(lat, gr.iter().map(|c| c.im).collect())?;
        Ok((v, [g0, g1]))
    }

    pub fn gradient_potential(&self, x: &Field) -> Result<[Field; 2]> {
        Ok(self.potential_and_gradient(x)?.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormConstant2D {
    pub eps: f64,
    pub c_eps: f64,
}

/// `C_ε = ‖∇(G ∗ ϱ_ε)‖²` by Plancherel on the lattice, using the same
/// Nyquist-free gradient symbol as the enhanced-noise construction, so it is
/// the exact expectation of `|∇Y_ε|²` on this lattice.
pub fn compute_renorm_2d(m: &Mollifier, kernel: &GreenKernel2D) -> Result<RenormConstant2D> {
    let lat = *kernel.lattice();
    if m.profile.lattice() != &lat {
        return Err(Error::LatticeMismatch);
    }
    let rho = KernelSpectrum::new(&m.profile);
    let terms: Vec<f64> = (0..lat.sites())
        .into_par_iter()
        .map(|idx| {
            let k = lat.unflatten(idx);
            let k0 = lat.grad_wavenumber(k[0]);
            let k1 = lat.grad_wavenumber(k[1]);
            (k0 * k0 + k1 * k1) * (kernel.g_hat.hat()[idx] * rho.hat()[idx]).norm_sqr()
        })
        .collect();
    let sum = crate::stats::pairwise_sum(&terms);
    // both transforms carry a factor h^d
    let c_eps = sum / (lat.cell_volume() * lat.sites() as f64);
    Ok(RenormConstant2D { eps: m.eps, c_eps })
}

/// Monte-Carlo estimate of `E|∇Y_ε|²` with the spatial mean of each sample
/// as the per-sample value. Returns `(mean, stderr)`.
pub fn renorm_2d_monte_carlo(
    m: &Mollifier,
    kernel: &GreenKernel2D,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let lat = *kernel.lattice();
    let vals: Result<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let xi = sample_white_noise(&lat, seed, s);
            let x = mollify(&xi, m)?;
            let [g0, g1] = kernel.gradient_potential(&x)?;
            Ok(g0.mul(&g0)?.add(&g1.mul(&g1)?)?.mean())
        })
        .collect();
    Ok(mean_stderr(&vals?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedNoise2D {
    pub x: Field,
    pub u: Field,
    /// Mollifier scale, `None` for manufactured or limiting data.
    pub eps: Option<f64>,
}

impl EnhancedNoise2D {
    pub fn new(x: Field, u: Field, eps: Option<f64>) -> Result<Self> {
        x.check_same(&u)?;
        Ok(Self { x, u, eps })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        self.x.lattice()
    }

    pub fn add(&self, other: &EnhancedNoise2D) -> Result<EnhancedNoise2D> {
        Ok(EnhancedNoise2D { x: self.x.add(&other.x)?, u: self.u.add(&other.u)?, eps: None })
    }

    pub fn max_abs_diff(&self, other: &EnhancedNoise2D) -> Result<f64> {
        Ok(self.x.sub(&other.x)?.max_abs().max(self.u.sub(&other.u)?.max_abs()))
    }

    /// Two field blobs and a JSON sidecar are produced by the CLI; this gives
    /// the binary part.
    pub fn to_blobs(&self) -> (Vec<u8>, Vec<u8>) {
        (self.x.to_bytes(), self.u.to_bytes())
    }
}

/// `Q_ε(ξ) = (ξ_ε, |∇(G ∗ ξ_ε)|² - C_ε)`.
pub fn build_enhanced_2d(
    xi: &WhiteNoiseSample,
    m: &Mollifier,
    kernel: &GreenKernel2D,
    c: &RenormConstant2D,
) -> Result<EnhancedNoise2D> {
    build_enhanced_from_field(&xi.field, m, kernel, c)
}

pub fn build_enhanced_from_field(
    xi: &Field,
    m: &Mollifier,
    kernel: &GreenKernel2D,
    c: &RenormConstant2D,
) -> Result<EnhancedNoise2D> {
    if m.eps != c.eps {
        return Err(Error::EpsilonMismatch(m.eps, c.eps));
    }
    let x = mollify_field(xi, m)?;
    let [g0, g1] = kernel.gradient_potential(&x)?;
    let u = g0.zip_map(&g1, |a, b| a * a + b * b - c.c_eps)?;
    Ok(EnhancedNoise2D { x, u, eps: Some(m.eps) })
}

/// `T_h(X, U) = (X + h, U + 2 ∇(G∗X)·∇(G∗h) + |∇(G∗h)|²)`.
pub fn shift_t_h(q: &EnhancedNoise2D, h: &Field, kernel: &GreenKernel2D) -> Result<EnhancedNoise2D> {
    q.x.check_same(h)?;
    let [a0, a1] = kernel.gradient_potential(&q.x)?;
    let [b0, b1] = kernel.gradient_potential(h)?;
    let mut u = q.u.clone();
    for (i, v) in u.values_mut().iter_mut().enumerate() {
        let (x0, x1, y0, y1) = (a0.values()[i], a1.values()[i], b0.values()[i], b1.values()[i]);
        *v += 2.0 * (x0 * y0 + x1 * y1) + (y0 * y0 + y1 * y1);
    }
    Ok(EnhancedNoise2D { x: q.x.add(h)?, u, eps: q.eps })
}

/// Continuum quantities for the resonance construction: radial tables of
/// `Ĝ(k)` and the bump transform, evaluated on a uniform grid in `ln k`.
#[derive(Debug, Clone)]
pub struct ResonanceKernel {
    bump: BumpTransform,
    log_k0: f64,
    du: f64,
    /// `k⁴ Ĝ(k)²` on the grid, up to the table end.
    weight: Vec<f64>,
}

impl ResonanceKernel {
    const LOG_K_MIN: f64 = -9.210_340_371_976_184; // ln 1e-4
    const K_SWITCH: f64 = 20.0;
    const K_TABLE: f64 = 3000.0;
    const DU: f64 = 0.004;

    pub fn new() -> Self {
        let bump = BumpTransform::new(2);
        let n = ((Self::K_TABLE.ln() - Self::LOG_K_MIN) / Self::DU).ceil() as usize + 1;
        let ks: Vec<f64> = (0..n).map(|j| (Self::LOG_K_MIN + Self::DU * j as f64).exp()).collect();
        let weight = ks
            .par_iter()
            .map(|&k| {
                let g = green_transform(k);
                k.powi(4) * g * g
            })
            .collect();
        Self { bump, log_k0: Self::LOG_K_MIN, du: Self::DU, weight }
    }

    /// `v(δ₁, δ₂) = ∫ ∇G_{δ₁}·∇G_{δ₂}` for scales given by their logarithms;
    /// `None` means the unmollified kernel. At least one scale must be set.
    pub fn v_log(&self, ln_d1: Option<f64>, ln_d2: Option<f64>) -> Result<f64> {
        let top = match (ln_d1, ln_d2) {
            (None, None) => return Err(Error::InvalidParameter("v(0, 0) diverges".into())),
            (Some(a), None) | (None, Some(a)) => a,
            (Some(a), Some(b)) => a.max(b),
        };
        let u_max = BumpTransform::KAPPA_MAX.ln() - top;
        let n = ((u_max - self.log_k0) / self.du).ceil() as usize + 1;
        let rho = |ln_d: Option<f64>, u: f64| match ln_d {
            None => 1.0,
            Some(l) => self.bump.eval((u + l).exp()),
        };
        let mut acc = crate::stats::Neumaier::default();
        for j in 0..n {
            let u = self.log_k0 + self.du * j as f64;
            let w = if j < self.weight.len() { self.weight[j] } else { 1.0 };
            let r = rho(ln_d1, u) * rho(ln_d2, u);
            if r == 0.0 {
                continue;
            }
            // trapezoid endpoint weights are negligible: the integrand
            // vanishes at both ends of the grid
            acc.add(w * r);
        }
        Ok(acc.value() * self.du / (2.0 * PI))
    }

    pub fn v(&self, d1: f64, d2: f64) -> Result<f64> {
        let l = |d: f64| if d == 0.0 { None } else { Some(d.ln()) };
        self.v_log(l(d1), l(d2))
    }

    /// Continuum `C_ε = v(ε, ε)`.
    pub fn continuum_renorm(&self, eps: f64) -> Result<f64> {
        self.v(eps, eps)
    }
}

impl Default for ResonanceKernel {
    fn default() -> Self {
        Self::new()
    }
}

/// Radial transform `Ĝ(k)`: direct quadrature for small `k`, and the identity
/// `k² Ĝ = 1 + F̂` above the switch.
pub fn green_transform(k: f64) -> f64 {
    if k <= ResonanceKernel::K_SWITCH {
        green_transform_direct(k)
    } else {
        (1.0 + remainder_transform(k)) / (k * k)
    }
}

fn gl_cached(n: usize) -> &'static GaussLegendre {
    use std::sync::OnceLock;
    static SMALL: OnceLock<GaussLegendre> = OnceLock::new();
    static LARGE: OnceLock<GaussLegendre> = OnceLock::new();
    if n <= 400 {
        SMALL.get_or_init(|| GaussLegendre::new(400))
    } else {
        LARGE.get_or_init(|| GaussLegendre::new(2400))
    }
}

pub fn green_transform_direct(k: f64) -> f64 {
    let gl = gl_cached(400);
    // inner disc with r = s² to tame the logarithm: -∫ r ln r J0(kr) dr
    let inner = gl.integrate(0.0, 1.0, |s| 4.0 * s.powi(3) * s.ln() * libm::j0(k * s * s));
    let outer = gl.integrate(1.0, 2.0, |r| r.ln() * cutoff(r) * libm::j0(k * r) * r);
    -(inner + outer)
}

pub fn remainder_transform(k: f64) -> f64 {
    if k > ResonanceKernel::K_TABLE {
        return 0.0;
    }
    let gl = gl_cached(2400);
    2.0 * PI * gl.integrate(1.0, 2.0, |r| remainder_profile(r) * libm::j0(k * r) * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceResult {
    pub delta: f64,
    /// `ln λ_δ = ln(δ) / δ`; `λ_δ` itself underflows for small `δ`.
    pub ln_lambda: f64,
    pub lambda: f64,
    pub a: f64,
    pub residual: f64,
    pub contraction_factor: f64,
    pub iterations: usize,
}

/// Coefficients of the zeroth-chaos equation at one `δ`.
#[derive(Debug, Clone, Copy)]
struct ResonanceCoefficients {
    dd: f64,
    dl: f64,
    ll: f64,
    d0: f64,
    l0: f64,
}

impl ResonanceCoefficients {
    fn map(&self, c: f64, f: f64) -> f64 {
        (c - self.dd + 2.0 * f * self.dl - f * f * self.ll + 2.0 * self.d0) / (2.0 * self.l0)
    }

    fn residual(&self, c: f64, a: f64) -> f64 {
        self.dd - 2.0 * a * self.dl + a * a * self.ll - 2.0 * self.d0 + 2.0 * a * self.l0 - c
    }
}

/// Fixed point `a_δ = M(a_δ)` of the resonance map with `λ_δ = δ^{1/δ}`.
pub fn solve_resonance(c: f64, delta: f64, kernel: &ResonanceKernel) -> Result<ResonanceResult> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("δ = {delta} outside (0, 1)")));
    }
    let ld = delta.ln();
    let ll = ld / delta;
    let co = ResonanceCoefficients {
        dd: kernel.v_log(Some(ld), Some(ld))?,
        dl: kernel.v_log(Some(ld), Some(ll))?,
        ll: kernel.v_log(Some(ll), Some(ll))?,
        d0: kernel.v_log(Some(ld), None)?,
        l0: kernel.v_log(Some(ll), None)?,
    };
    let mut a = 0.0;
    let mut iterations = 0;
    loop {
        let next = co.map(c, a);
        iterations += 1;
        let step = (next - a).abs();
        a = next;
        if !a.is_finite() || iterations > 500 {
            return Err(Error::NoContraction(f64::INFINITY));
        }
        if step < 1e-12 {
            break;
        }
    }
    // Lipschitz bound of M on the ball |f| ≤ 2|a| + δ, which contains the
    // iterates and the fixed point.
    let radius = 2.0 * a.abs() + delta;
    let contraction_factor = (co.dl.abs() + radius * co.ll) / co.l0;
    if contraction_factor >= 1.0 {
        return Err(Error::NoContraction(contraction_factor));
    }
    Ok(ResonanceResult {
        delta,
        ln_lambda: ll,
        lambda: ll.exp(),
        a,
        residual: co.residual(c, a),
        contraction_factor,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSweep {
    pub c: f64,
    pub results: Vec<ResonanceResult>,
    /// `max |a_δ| / δ` over the sweep.
    pub r0: f64,
    /// Largest swept `δ` whose map contracts.
    pub delta0: f64,
    /// Swept values rejected because the map did not contract.
    pub rejected: Vec<f64>,
}

pub fn resonance_sweep(c: f64, deltas: &[f64], kernel: &ResonanceKernel) -> Result<ResonanceSweep> {
    let outcomes: Vec<(f64, Result<ResonanceResult>)> =
        deltas.par_iter().map(|&d| (d, solve_resonance(c, d, kernel))).collect();
    let mut results = Vec::new();
    let mut rejected = Vec::new();
    for (d, r) in outcomes {
        match r {
            Ok(r) => results.push(r),
            Err(Error::NoContraction(_)) => rejected.push(d),
            Err(e) => return Err(e),
        }
    }
    if results.is_empty() {
        return Err(Error::NoContraction(f64::INFINITY));
    }
    let r0 = results.iter().map(|r| r.a.abs() / r.delta).fold(0.0, f64::max);
    let delta0 = results.iter().map(|r| r.delta).fold(0.0, f64::max);
    Ok(ResonanceSweep { c, results, r0, delta0, rejected })
}
