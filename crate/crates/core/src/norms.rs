//! Weighted L² norms and a multiscale estimator of weighted negative
//! Hölder norms `‖f‖_{C^α_w} ≈ sup_{λ, x} λ^{-α} |⟨f, φ^λ_x⟩| / w(x)`.

use num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{fft, fft_nd, weight_eval, Field, KernelSpectrum, Weight};
use crate::radial::bump;
use crate::stats::pairwise_sum;

/// `sqrt(h^d Σ f² / w)`.
pub fn weighted_l2_norm(f: &Field, w: &Weight) -> f64 {
    let wf = weight_eval(w, f.lattice());
    let terms: Vec<f64> = f.values().iter().zip(wf.values()).map(|(v, w)| v * v / w).collect();
    (f.lattice().cell_volume() * pairwise_sum(&terms)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub alpha: f64,
    pub weight: Weight,
    pub scales: Vec<f64>,
    /// `sup_x λ^{-α} |⟨f, φ^λ_x⟩| / w(x)` for each scale.
    pub per_scale: Vec<f64>,
    pub value: f64,
    /// Sampling stride of the sup over `x`, per axis.
    pub stride: usize,
    pub derivatives: bool,
}

impl HolderEstimate {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda,sup_value")?;
        for (l, v) in self.scales.iter().zip(&self.per_scale) {
            writeln!(w, "{l:e},{v:e}")?;
        }
        Ok(())
    }
}

/// Sites up to which the sup over `x` scans every site.
pub const FULL_SCAN_SITES: usize = 256 * 256;

/// Dyadic scales `2^{-j}` in `[2h, 1]` that also fit in half the torus.
pub fn dyadic_scales(h: f64, extent: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut lam = 1.0f64;
    while lam >= 2.0 * h * (1.0 - 1e-12) {
        if lam < 0.5 * extent {
            out.push(lam);
        }
        lam *= 0.5;
    }
    out
}

/// Test functions at scale `λ`: the bump `ψ^λ`, and its first derivatives
/// when `α ≤ -1`. All carry the discrete normalization of `ψ^λ`.
fn test_kernels(lat: &crate::lattice::LatticeSpec, lam: f64, derivatives: bool) -> Vec<Field> {
    let r_of = |d: [f64; 3]| (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() / lam;
    let psi = Field::kernel_from_fn(*lat, |d| bump(r_of(d)));
    let mass = psi.integral();
    let mut out = vec![psi.scale(1.0 / mass)];
    if derivatives {
        for i in 0..lat.dim() {
            out.push(Field::kernel_from_fn(*lat, |d| {
                let r = r_of(d);
                if r >= 1.0 || r == 0.0 {
                    return 0.0;
                }
                let q = 1.0 - r * r;
                // d/dr exp(-1/(1-r²)) = -2r/(1-r²)² · bump, chain rule to y_i
                -2.0 * r / (q * q) * bump(r) * (d[i] / lam) / r / mass
            }));
        }
    }
    out
}

pub fn holder_norm_estimate(f: &Field, alpha: f64, w: &Weight) -> Result<HolderEstimate> {
    if !(alpha < 0.0) {
        return Err(Error::InvalidParameter(format!("α = {alpha} must be negative")));
    }
    let lat = *f.lattice();
    let scales = dyadic_scales(lat.h(), lat.extent());
    if scales.len() < 3 {
        return Err(Error::TooFewScales);
    }
    let derivatives = alpha <= -1.0;
    let stride = if lat.sites() <= FULL_SCAN_SITES { 1 } else { 4 };
    let weight = weight_eval(w, &lat);
    let f_hat = fft(f);
    let sampled: Vec<usize> = (0..lat.sites())
        .filter(|&i| lat.unflatten(i).iter().take(lat.dim()).all(|k| k % stride == 0))
        .collect();
    let mut per_scale = Vec::with_capacity(scales.len());
    for &lam in &scales {
        let mut best: f64 = 0.0;
        for kern in test_kernels(&lat, lam, derivatives) {
            let spec = KernelSpectrum::new(&kern);
            let mut buf: Vec<Complex64> = f_hat.coeffs().iter().zip(spec.hat()).map(|(a, b)| a * b).collect();
            fft_nd(&mut buf, &lat, FftDirection::Inverse);
            let inv = 1.0 / lat.sites() as f64;
            for &i in &sampled {
                best = best.max((buf[i].re * inv).abs() / weight.values()[i]);
            }
        }
        per_scale.push(lam.powf(-alpha) * best);
    }
    let value = per_scale.iter().copied().fold(0.0, f64::max);
    Ok(HolderEstimate { alpha, weight: *w, scales, per_scale, value, stride, derivatives })
}
