#![allow(dead_code)]

use anderson_core::lattice::{periodic_convolve, Field};
use anderson_core::noise::Mollifier;
use anderson_core::renorm3d::Kernel3D;
use nalgebra::DMatrix;

/// Exact expectation of the adjacent-renormalized third-order tree for
/// lattice noise with covariance `R = ϱ∗ϱ`, by Wick's theorem:
/// `⟨K, (K·g)∗R⟩ + ⟨K, (K·R)∗g⟩ − c⟨K, g⟩` with `g = K∗R`.
pub fn c1_exact_expectation(m: &Mollifier, k: &Kernel3D, c: f64) -> f64 {
    let kk = &k.kbar;
    let r = periodic_convolve(&m.profile, &m.profile).unwrap();
    let g = periodic_convolve(&r, kk).unwrap();
    let kg = kk.mul(&g).unwrap();
    let kr = kk.mul(&r).unwrap();
    let cross = kk.inner(&periodic_convolve(&kg, &r).unwrap()).unwrap();
    let nested = kk.inner(&periodic_convolve(&kr, &g).unwrap()).unwrap();
    cross + nested - c * kk.inner(&g).unwrap()
}

pub fn to_dmatrix(m: &faer::Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `⟨f, e^{-tH} g⟩` in the `L²` pairing, with `H` given densely.
pub fn expm_pairing(h: &DMatrix<f64>, t: f64, f: &Field, g: &Field) -> f64 {
    let e = (h * (-t)).exp();
    let gv = nalgebra::DVector::from_column_slice(g.values());
    let fv = nalgebra::DVector::from_column_slice(f.values());
    f.lattice().cell_volume() * fv.dot(&(e * gv))
}

pub fn expm_apply(h: &DMatrix<f64>, t: f64, f: &Field) -> Field {
    let e = (h * (-t)).exp();
    let v = e * nalgebra::DVector::from_column_slice(f.values());
    Field::new(*f.lattice(), v.as_slice().to_vec()).unwrap()
}

/// Deterministic pseudo-random field in `[-amp, amp]` (xorshift).
pub fn pseudo_field(lat: anderson_core::lattice::LatticeSpec, seed: u64, amp: f64) -> Field {
    let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
    let v = (0..lat.sites())
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            ((s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) * amp
        })
        .collect();
    Field::new(lat, v).unwrap()
}
