//! Three-dimensional renormalization constants: `c_ε` by quadrature and
//! `c_ε^{(1)}` by Monte Carlo over the third-order tree.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{periodic_convolve, Field, KernelSpectrum, LatticeSpec};
use crate::noise::{mollify_field, sample_white_noise, Mollifier};
use crate::radial::{cutoff, BumpTransform};
use crate::stats::{mean_stderr, Neumaier};

/// `∫_{[0,1]³} |x|⁻¹ dx = (3/2) ln(2 + √3) - π/4`.
pub fn cube_inverse_distance_mean() -> f64 {
    1.5 * (2.0 + 3f64.sqrt()).ln() - PI / 4.0
}

/// `χ(r) / 4πr`.
pub fn kbar_profile(r: f64) -> f64 {
    if r >= 2.0 {
        0.0
    } else {
        cutoff(r) / (4.0 * PI * r)
    }
}

#[derive(Debug, Clone)]
pub struct Kernel3D {
    pub kbar: Field,
    hat: KernelSpectrum,
}

impl Kernel3D {
    pub fn lattice(&self) -> &LatticeSpec {
        self.kbar.lattice()
    }

    pub fn spectrum(&self) -> &KernelSpectrum {
        &self.hat
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        self.hat.apply(f)
    }
}

/// `K̄` on the displacement lattice, the origin cell holding the exact cell
/// average `C / (4π a)` with `a = h/2`. On tori with `L < 4` the kernel is
/// truncated to the fundamental domain.
pub fn build_kernel_3d(lattice: &LatticeSpec) -> Result<Kernel3D> {
    if lattice.dim() != 3 {
        return Err(Error::WrongDimension { expected: 3, got: lattice.dim() });
    }
    let h = lattice.h();
    if h * 3f64.sqrt() / 2.0 > 1.0 {
        return Err(Error::InvalidParameter(format!("spacing {h} too coarse for the 3d kernel")));
    }
    let mut kbar = Field::kernel_from_fn(*lattice, |d| kbar_profile((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()));
    kbar.values_mut()[0] = cube_inverse_distance_mean() / (4.0 * PI * 0.5 * h);
    let hat = KernelSpectrum::new(&kbar);
    Ok(Kernel3D { kbar, hat })
}

/// `c_ε = ∫ K̄(y) (ϱ_ε ∗ ϱ_ε)(y) dy` as a lattice sum; this is exactly
/// `E[ξ_ε(x) (K̄ ∗ ξ_ε)(x)]` for lattice white noise.
pub fn compute_c_eps_3d(m: &Mollifier, k: &Kernel3D) -> Result<f64> {
    m.profile.check_same(&k.kbar)?;
    let rho2 = periodic_convolve(&m.profile, &m.profile)?;
    k.kbar.inner(&rho2)
}

/// Continuum constant `c_ϱ` with `c_ε = c_ϱ / ε` for `ε ≤ 1/2`:
/// `c_ϱ = (2π²)⁻¹ ∫₀^∞ ϱ̂(k)² dk`.
pub fn continuum_c_rho() -> f64 {
    let t = BumpTransform::new(3);
    let (lo, hi) = (1e-4f64.ln(), BumpTransform::KAPPA_MAX.ln());
    let du = 0.002;
    let n = ((hi - lo) / du).ceil() as usize;
    let mut acc = Neumaier::default();
    for j in 0..=n {
        let k = (lo + du * j as f64).exp();
        let r = t.eval(k);
        acc.add(k * r * r);
    }
    // the integrand is ~k near the lower end; add the missing ∫₀^{k_lo} dk
    (acc.value() * du + 1e-4) / (2.0 * PI * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C1Estimator {
    /// Subtract `c_ε` times the lower branch at every level of the tree:
    /// `u₁ = K̄∗ξ`, `u₂ = K̄∗(ξu₁ - c)`, `u₃ = K̄∗(ξu₂ - c u₁)`,
    /// value `ξu₃ - c u₂`.
    Adjacent,
    /// Subtract `c_ε` only in the innermost product:
    /// `ξ·K̄∗(ξ·K̄∗(ξ·K̄∗ξ - c))`.
    InnerOnly,
}

/// Spatial means of the tree for two noise fields at once.
fn tree_pair(xa: &Field, xb: &Field, k: &Kernel3D, c: f64, est: C1Estimator) -> Result<(f64, f64)> {
    let (u1a, u1b) = k.hat.apply_pair(xa, xb)?;
    let aa = xa.zip_map(&u1a, |x, u| x * u - c)?;
    let ab = xb.zip_map(&u1b, |x, u| x * u - c)?;
    let (u2a, u2b) = k.hat.apply_pair(&aa, &ab)?;
    let (ba, bb) = match est {
        C1Estimator::Adjacent => {
            let lower = |x: &Field, u2: &Field, u1: &Field| -> Result<Field> {
                let mut out = x.mul(u2)?;
                for (o, l) in out.values_mut().iter_mut().zip(u1.values()) {
                    *o -= c * l;
                }
                Ok(out)
            };
            (lower(xa, &u2a, &u1a)?, lower(xb, &u2b, &u1b)?)
        }
        C1Estimator::InnerOnly => (xa.mul(&u2a)?, xb.mul(&u2b)?),
    };
    let (u3a, u3b) = k.hat.apply_pair(&ba, &bb)?;
    let top = |x: &Field, u3: &Field, u2: &Field| -> Result<f64> {
        let d = match est {
            C1Estimator::Adjacent => x.zip_map(u3, |a, b| a * b)?.zip_map(u2, |v, w| v - c * w)?,
            C1Estimator::InnerOnly => x.mul(u3)?,
        };
        Ok(d.mean())
    };
    Ok((top(xa, &u3a, &u2a)?, top(xb, &u3b, &u2b)?))
}

/// One per-sample value of the `c_ε^{(1)}` tree for a given mollified noise.
pub fn c1_sample(x_eps: &Field, k: &Kernel3D, c_eps: f64, est: C1Estimator) -> Result<f64> {
    Ok(tree_pair(x_eps, x_eps, k, c_eps, est)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C1Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub values: Vec<f64>,
}

pub const MIN_C1_SAMPLES: usize = 64;

/// Monte-Carlo mean of the spatially averaged tree over noise streams
/// `0..samples` of `seed`.
pub fn estimate_c1_eps_3d(
    m: &Mollifier,
    k: &Kernel3D,
    c_eps: f64,
    samples: usize,
    seed: u64,
    est: C1Estimator,
) -> Result<C1Estimate> {
    if samples < MIN_C1_SAMPLES {
        return Err(Error::TooFewSamples { need: MIN_C1_SAMPLES, got: samples });
    }
    let values = c1_values(m, k, c_eps, 0..samples as u64, seed, est)?;
    let (mean, stderr) = mean_stderr(&values);
    Ok(C1Estimate { mean, stderr, values })
}

/// Keeps drawing batches until the standard error reaches `target` or
/// `max_samples` is spent.
pub fn estimate_c1_to_target(
    m: &Mollifier,
    k: &Kernel3D,
    c_eps: f64,
    target: f64,
    max_samples: usize,
    seed: u64,
    est: C1Estimator,
) -> Result<C1Estimate> {
    let mut values = Vec::new();
    let mut next = 0u64;
    loop {
        let batch = MIN_C1_SAMPLES.max(values.len()).min(max_samples - values.len());
        values.extend(c1_values(m, k, c_eps, next..next + batch as u64, seed, est)?);
        next += batch as u64;
        let (mean, stderr) = mean_stderr(&values);
        if stderr <= target {
            return Ok(C1Estimate { mean, stderr, values });
        }
        if values.len() >= max_samples {
            return Err(Error::BudgetExhausted { got: stderr, target });
        }
    }
}

fn c1_values(
    m: &Mollifier,
    k: &Kernel3D,
    c_eps: f64,
    streams: std::ops::Range<u64>,
    seed: u64,
    est: C1Estimator,
) -> Result<Vec<f64>> {
    let lat = *k.lattice();
    m.profile.check_same(&k.kbar)?;
    let ids: Vec<u64> = streams.collect();
    let pairs: Result<Vec<Vec<f64>>> = ids
        .par_chunks(2)
        .map(|chunk| {
            let xa = mollify_field(&sample_white_noise(&lat, seed, chunk[0]).field, m)?;
            if chunk.len() == 1 {
                return Ok(vec![c1_sample(&xa, k, c_eps, est)?]);
            }
            let xb = mollify_field(&sample_white_noise(&lat, seed, chunk[1]).field, m)?;
            let (a, b) = tree_pair(&xa, &xb, k, c_eps, est)?;
            Ok(vec![a, b])
        })
        .collect();
    Ok(pairs?.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormConstants3D {
    pub eps: f64,
    pub c_eps: f64,
    pub c1_eps: f64,
    pub c1_stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

impl RenormConstants3D {
    pub fn total(&self) -> f64 {
        self.c_eps + self.c1_eps
    }
}
