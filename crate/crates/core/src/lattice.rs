//! Periodic lattices, real fields, FFT convolution and spectral derivatives.
//!
//! A lattice with `N` points per side and extent `L` carries two coordinate
//! systems. Fields live on cell centers `x_k = (k + 1/2) h - L/2`. Kernels
//! that are meant to be convolved against fields are sampled on the
//! displacement lattice, where index `m` stands for the displacement
//! `m h` wrapped into `[-L/2, L/2)`, so index 0 is zero displacement. With
//! [`periodic_convolve`] defined as `h^d Σ_j f[j] k[i - j]`, the result is
//! again a cell-centered field.

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    dim: usize,
    extent: f64,
    n: usize,
}

pub fn make_lattice(dim: usize, extent: f64, n: usize) -> Result<LatticeSpec> {
    LatticeSpec::new(dim, extent, n)
}

impl LatticeSpec {
    pub fn new(dim: usize, extent: f64, n: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::BadDimension(dim));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::NonPowerOfTwo(n));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::BadExtent(extent));
        }
        Ok(Self { dim, extent, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.extent / self.n as f64
    }

    pub fn sites(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Volume `h^d` of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Multi-index of a flat site index; unused trailing axes are 0.
    pub fn unflatten(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for a in (0..self.dim).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn flatten(&self, k: [usize; 3]) -> usize {
        let mut idx = 0;
        for &ka in k.iter().take(self.dim) {
            idx = idx * self.n + ka;
        }
        idx
    }

    /// Flat index of `k + s` with periodic wrap.
    pub fn offset(&self, idx: usize, s: [i64; 3]) -> usize {
        let k = self.unflatten(idx);
        let n = self.n as i64;
        let mut out = [0usize; 3];
        for a in 0..self.dim {
            out[a] = (k[a] as i64 + s[a]).rem_euclid(n) as usize;
        }
        self.flatten(out)
    }

    /// Signed index in `[-N/2, N/2)` for a component `m`.
    pub fn signed(&self, m: usize) -> i64 {
        if m < self.n / 2 {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    /// Cell-center coordinate of a site.
    pub fn coord(&self, idx: usize) -> [f64; 3] {
        let k = self.unflatten(idx);
        let h = self.h();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (k[a] as f64 + 0.5) * h - 0.5 * self.extent;
        }
        x
    }

    /// Displacement represented by a kernel index.
    pub fn displacement(&self, idx: usize) -> [f64; 3] {
        let k = self.unflatten(idx);
        let h = self.h();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.signed(k[a]) as f64 * h;
        }
        x
    }

    /// Angular wavenumber `2π m / L` in discrete-Fourier ordering.
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.extent * self.signed(m) as f64
    }

    /// Wavenumber for odd derivatives: the Nyquist mode is zeroed so that
    /// real fields stay real.
    pub fn grad_wavenumber(&self, m: usize) -> f64 {
        if m == self.n / 2 {
            0.0
        } else {
            self.wavenumber(m)
        }
    }

    /// Wave vector of a flat spectral index.
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let k = self.unflatten(idx);
        let mut out = [0.0; 3];
        for a in 0..self.dim {
            out[a] = self.wavenumber(k[a]);
        }
        out
    }
}

fn norm(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    lattice: LatticeSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(lattice: LatticeSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.sites() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, lattice has {} sites",
                values.len(),
                lattice.sites()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite field value {v}")));
        }
        Ok(Self { lattice, values })
    }

    pub(crate) fn from_vec_unchecked(lattice: LatticeSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), lattice.sites());
        Self { lattice, values }
    }

    pub fn zeros(lattice: LatticeSpec) -> Self {
        Self::constant(lattice, 0.0)
    }

    pub fn constant(lattice: LatticeSpec, c: f64) -> Self {
        Self { lattice, values: vec![c; lattice.sites()] }
    }

    /// Evaluates `f` at cell centers.
    pub fn from_fn(lattice: LatticeSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..lattice.sites()).map(|i| f(lattice.coord(i))).collect();
        Self { lattice, values }
    }

    /// Evaluates `f` on the displacement lattice (kernel layout).
    pub fn kernel_from_fn(lattice: LatticeSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..lattice.sites()).map(|i| f(lattice.displacement(i))).collect();
        Self { lattice, values }
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_same(&self, other: &Field) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(Error::LatticeMismatch);
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { lattice: self.lattice, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Field { lattice: self.lattice, values })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn add_scalar(&self, c: f64) -> Field {
        self.map(|v| v + c)
    }

    /// Discrete inner product `h^d Σ f g`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.check_same(other)?;
        let prods: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(self.lattice.cell_volume() * pairwise_sum(&prods))
    }

    /// Discrete L² norm `sqrt(h^d Σ f²)`.
    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|a| a * a).collect();
        (self.lattice.cell_volume() * pairwise_sum(&sq)).sqrt()
    }

    /// Discrete integral `h^d Σ f`.
    pub fn integral(&self) -> f64 {
        self.lattice.cell_volume() * pairwise_sum(&self.values)
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.values) / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cyclic shift by a whole number of cells: `out(y) = self(y - s h)`.
    pub fn cyclic_shift(&self, s: [i64; 3]) -> Field {
        let lat = self.lattice;
        let mut out = vec![0.0; self.values.len()];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.values[lat.offset(i, [-s[0], -s[1], -s[2]])];
        }
        Field { lattice: lat, values: out }
    }

    /// Flat binary blob: `dim: u32`, `N: u32`, `L: f64` (little-endian)
    /// followed by `N^dim` little-endian `f64` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.values.len());
        out.extend_from_slice(&(self.lattice.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.lattice.n as u32).to_le_bytes());
        out.extend_from_slice(&self.lattice.extent.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Field> {
        if bytes.len() < 16 {
            return Err(Error::Format("header shorter than 16 bytes".into()));
        }
        let word = |r: std::ops::Range<usize>| -> [u8; 4] { bytes[r].try_into().unwrap() };
        let dim = u32::from_le_bytes(word(0..4)) as usize;
        let n = u32::from_le_bytes(word(4..8)) as usize;
        let extent = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let lattice = LatticeSpec::new(dim, extent, n)?;
        let body = &bytes[16..];
        if body.len() != 8 * lattice.sites() {
            return Err(Error::Format(format!(
                "expected {} payload bytes, found {}",
                8 * lattice.sites(),
                body.len()
            )));
        }
        let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Field::new(lattice, values)
    }

    /// CSV with one index column per axis followed by the value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let axes = ["i", "j", "k"];
        writeln!(w, "{},value", axes[..self.lattice.dim].join(","))?;
        for (idx, v) in self.values.iter().enumerate() {
            let k = self.lattice.unflatten(idx);
            for ka in k.iter().take(self.lattice.dim) {
                write!(w, "{ka},")?;
            }
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    lattice: LatticeSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn from_coeffs(lattice: LatticeSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != lattice.sites() {
            return Err(Error::InvalidParameter("coefficient count does not match lattice".into()));
        }
        Ok(Self { lattice, coeffs })
    }

    /// Largest violation of `c(-k) = conj(c(k))`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let lat = self.lattice;
        let n = lat.n;
        let mut worst: f64 = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            let k = lat.unflatten(i);
            let mut m = [0; 3];
            for a in 0..lat.dim {
                m[a] = (n - k[a]) % n;
            }
            let d = *c - self.coeffs[lat.flatten(m)].conj();
            worst = worst.max(d.norm());
        }
        worst
    }
}

type Plan = Arc<dyn Fft<f64>>;

fn plan(n: usize, direction: FftDirection) -> Plan {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    let (planner, plans) = &mut *guard;
    let key = (n, direction == FftDirection::Forward);
    plans.entry(key).or_insert_with(|| planner.plan_fft(n, direction)).clone()
}

/// Unnormalized in-place N-d transform over a row-major cube of side `n`.
pub(crate) fn fft_nd(buf: &mut [Complex64], lattice: &LatticeSpec, direction: FftDirection) {
    let n = lattice.n;
    let p = plan(n, direction);
    let mut scratch = vec![Complex64::new(0.0, 0.0); p.get_inplace_scratch_len()];
    p.process_with_scratch(buf, &mut scratch);
    let total = buf.len();
    let mut line = vec![Complex64::new(0.0, 0.0); 0];
    for axis in 0..lattice.dim - 1 {
        let stride = n.pow((lattice.dim - 1 - axis) as u32);
        let block = stride * n;
        line.resize(block, Complex64::new(0.0, 0.0));
        for start in (0..total).step_by(block) {
            let chunk = &mut buf[start..start + block];
            for t in 0..n {
                let row = &chunk[t * stride..(t + 1) * stride];
                for (j, v) in row.iter().enumerate() {
                    line[j * n + t] = *v;
                }
            }
            p.process_with_scratch(&mut line, &mut scratch);
            for t in 0..n {
                let row = &mut chunk[t * stride..(t + 1) * stride];
                for (j, v) in row.iter_mut().enumerate() {
                    *v = line[j * n + t];
                }
            }
        }
    }
}

/// Forward DFT (no normalization).
pub fn fft(f: &Field) -> SpectralField {
    let mut coeffs: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut coeffs, &f.lattice, FftDirection::Forward);
    SpectralField { lattice: f.lattice, coeffs }
}

/// Inverse DFT with `1/N^d` normalization, keeping the real part.
pub fn ifft_real(s: &SpectralField) -> Field {
    let mut buf = s.coeffs.clone();
    fft_nd(&mut buf, &s.lattice, FftDirection::Inverse);
    let inv = 1.0 / s.lattice.sites() as f64;
    Field::from_vec_unchecked(s.lattice, buf.iter().map(|c| c.re * inv).collect())
}

/// Inverse DFT returning the full complex result (normalized).
pub(crate) fn ifft_complex(mut buf: Vec<Complex64>, lattice: &LatticeSpec) -> Vec<Complex64> {
    fft_nd(&mut buf, lattice, FftDirection::Inverse);
    let inv = 1.0 / lattice.sites() as f64;
    for c in &mut buf {
        *c *= inv;
    }
    buf
}

/// A convolution kernel with its transform cached, scaled by `h^d`.
#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    lattice: LatticeSpec,
    hat: Vec<Complex64>,
}

impl KernelSpectrum {
    pub fn new(kernel: &Field) -> Self {
        let vol = kernel.lattice.cell_volume();
        let mut s = fft(kernel);
        for c in &mut s.coeffs {
            *c *= vol;
        }
        Self { lattice: kernel.lattice, hat: s.coeffs }
    }

    /// Fourier multiplier given directly as a function of the wave vector.
    pub fn from_multiplier(lattice: LatticeSpec, m: impl Fn([f64; 3]) -> Complex64) -> Self {
        let hat = (0..lattice.sites()).map(|i| m(lattice.wavevector(i))).collect();
        Self { lattice, hat }
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn hat(&self) -> &[Complex64] {
        &self.hat
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        if f.lattice != self.lattice {
            return Err(Error::LatticeMismatch);
        }
        let mut s = fft(f);
        for (c, k) in s.coeffs.iter_mut().zip(&self.hat) {
            *c *= *k;
        }
        Ok(ifft_real(&s))
    }

    /// Convolves two real fields with one complex transform pair, packing
    /// them as real and imaginary parts.
    pub fn apply_pair(&self, a: &Field, b: &Field) -> Result<(Field, Field)> {
        if a.lattice != self.lattice || b.lattice != self.lattice {
            return Err(Error::LatticeMismatch);
        }
        let mut buf: Vec<Complex64> =
            a.values.iter().zip(&b.values).map(|(&x, &y)| Complex64::new(x, y)).collect();
        fft_nd(&mut buf, &self.lattice, FftDirection::Forward);
        for (c, k) in buf.iter_mut().zip(&self.hat) {
            *c *= *k;
        }
        let out = ifft_complex(buf, &self.lattice);
        let re = out.iter().map(|c| c.re).collect();
        let im = out.iter().map(|c| c.im).collect();
        Ok((Field::from_vec_unchecked(self.lattice, re), Field::from_vec_unchecked(self.lattice, im)))
    }

    /// Pointwise product of two spectra (composition of convolutions).
    pub fn compose(&self, other: &KernelSpectrum) -> Result<KernelSpectrum> {
        if self.lattice != other.lattice {
            return Err(Error::LatticeMismatch);
        }
        let hat = self.hat.iter().zip(&other.hat).map(|(a, b)| a * b).collect();
        Ok(KernelSpectrum { lattice: self.lattice, hat })
    }
}

/// Circular convolution `h^d Σ_j f[j] kernel[i - j]` through the FFT.
pub fn periodic_convolve(f: &Field, kernel: &Field) -> Result<Field> {
    f.check_same(kernel)?;
    KernelSpectrum::new(kernel).apply(f)
}

/// Direct circular convolution against the nonzero entries of a kernel.
/// Every output site sums its terms in the same order, so the result
/// commutes bitwise with cyclic shifts.
pub fn sparse_convolve(f: &Field, kernel: &Field) -> Result<Field> {
    f.check_same(kernel)?;
    let lat = f.lattice;
    let vol = lat.cell_volume();
    let taps: Vec<([i64; 3], f64)> = kernel
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| {
            let k = lat.unflatten(i);
            let mut s = [0i64; 3];
            for a in 0..lat.dim {
                s[a] = lat.signed(k[a]);
            }
            (s, v * vol)
        })
        .collect();
    let n = lat.n;
    let (n0, n1) = if lat.dim == 3 { (n, n) } else { (1, n) };
    let mut out = vec![0.0; lat.sites()];
    let mut src = vec![0usize; n];
    for (s, w) in &taps {
        // axis offsets so that the last axis is contiguous
        let (s0, s1, s2) = if lat.dim == 3 { (s[0], s[1], s[2]) } else { (0, s[0], s[1]) };
        for (k, v) in src.iter_mut().enumerate() {
            *v = (k as i64 - s2).rem_euclid(n as i64) as usize;
        }
        for a in 0..n0 {
            let ra = (a as i64 - s0).rem_euclid(n0 as i64) as usize;
            for b in 0..n1 {
                let rb = (b as i64 - s1).rem_euclid(n1 as i64) as usize;
                let dst = &mut out[(a * n1 + b) * n..(a * n1 + b + 1) * n];
                let row = &f.values[(ra * n1 + rb) * n..(ra * n1 + rb + 1) * n];
                for (o, &j) in dst.iter_mut().zip(&src) {
                    *o += w * row[j];
                }
            }
        }
    }
    Ok(Field::from_vec_unchecked(lat, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Derivative {
    Grad(usize),
    Laplacian,
}

pub fn spectral_derivative(f: &Field, op: Derivative) -> Result<Field> {
    let lat = f.lattice;
    if let Derivative::Grad(i) = op {
        if i >= lat.dim {
            return Err(Error::InvalidParameter(format!("gradient axis {i} out of range")));
        }
    }
    let mut s = fft(f);
    for (idx, c) in s.coeffs.iter_mut().enumerate() {
        let k = lat.unflatten(idx);
        *c *= match op {
            Derivative::Grad(i) => Complex64::new(0.0, lat.grad_wavenumber(k[i])),
            Derivative::Laplacian => {
                let kv = lat.wavevector(idx);
                Complex64::new(-(kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2]), 0.0)
            }
        };
    }
    Ok(ifft_real(&s))
}

/// All gradient components, sharing one forward transform.
pub fn spectral_gradient(f: &Field) -> Vec<Field> {
    let lat = f.lattice;
    let s = fft(f);
    (0..lat.dim)
        .map(|i| {
            let mut g = s.clone();
            for (idx, c) in g.coeffs.iter_mut().enumerate() {
                *c *= Complex64::new(0.0, lat.grad_wavenumber(lat.unflatten(idx)[i]));
            }
            ifft_real(&g)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    Polynomial { a: f64 },
    Exponential { ell: f64 },
}

impl Weight {
    pub fn at(&self, x: [f64; 3]) -> f64 {
        let r = norm(x);
        match *self {
            Weight::Polynomial { a } => (1.0 + r).powf(a),
            Weight::Exponential { ell } => (ell * (1.0 + r)).exp(),
        }
    }
}

/// Weight evaluated at cell centers, which already lie in `[-L/2, L/2)^d`.
pub fn weight_eval(w: &Weight, lattice: &LatticeSpec) -> Field {
    Field::from_fn(*lattice, |x| w.at(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat2(n: usize, l: f64) -> LatticeSpec {
        make_lattice(2, l, n).unwrap()
    }

    fn pseudo_random(lat: LatticeSpec, seed: u64) -> Field {
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let vals = (0..lat.sites())
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        Field::new(lat, vals).unwrap()
    }

    #[test]
    fn make_lattice_spacing() {
        assert_eq!(make_lattice(2, 16.0, 64).unwrap().h(), 0.25);
        assert_eq!(make_lattice(3, 8.0, 16).unwrap().h(), 0.5);
    }

    #[test]
    fn make_lattice_rejects_bad_input() {
        assert_eq!(make_lattice(2, 16.0, 63), Err(Error::NonPowerOfTwo(63)));
        assert_eq!(make_lattice(2, 16.0, 4), Err(Error::NonPowerOfTwo(4)));
        assert_eq!(make_lattice(4, 16.0, 64), Err(Error::BadDimension(4)));
        assert!(make_lattice(2, -1.0, 64).is_err());
    }

    #[test]
    fn cell_centers_and_displacements() {
        let lat = lat2(8, 8.0);
        assert_eq!(lat.coord(0), [-3.5, -3.5, 0.0]);
        assert_eq!(lat.coord(lat.flatten([7, 4, 0])), [3.5, 0.5, 0.0]);
        assert_eq!(lat.displacement(0), [0.0, 0.0, 0.0]);
        assert_eq!(lat.displacement(lat.flatten([7, 4, 0])), [-1.0, -4.0, 0.0]);
    }

    #[test]
    fn fft_roundtrip_3d() {
        let lat = make_lattice(3, 2.0, 8).unwrap();
        let f = pseudo_random(lat, 3);
        let g = ifft_real(&fft(&f));
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn fft_matches_direct_dft_2d() {
        let lat = lat2(8, 1.0);
        let f = pseudo_random(lat, 11);
        let s = fft(&f);
        let n = 8;
        for p in 0..n {
            for q in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..n {
                    for b in 0..n {
                        let ph = -2.0 * std::f64::consts::PI * ((p * a + q * b) as f64) / n as f64;
                        acc += f.values()[a * n + b] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((acc - s.coeffs()[p * n + q]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn parseval() {
        for lat in [lat2(32, 3.0), make_lattice(3, 2.0, 16).unwrap()] {
            let f = pseudo_random(lat, 5);
            let s = fft(&f);
            let spec: f64 = s.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>() * lat.cell_volume()
                / lat.sites() as f64;
            let direct = f.l2_norm().powi(2);
            assert!(((spec - direct) / direct).abs() < 1e-12);
            assert!(s.conjugate_symmetry_defect() < 1e-12);
        }
    }

    #[test]
    fn delta_kernel_shifts() {
        let lat = lat2(16, 4.0);
        let f = pseudo_random(lat, 7);
        let mut d = Field::zeros(lat);
        d.values_mut()[0] = 1.0 / lat.cell_volume();
        let g = periodic_convolve(&f, &d).unwrap();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut d = Field::zeros(lat);
        d.values_mut()[lat.flatten([3, 14, 0])] = 1.0 / lat.cell_volume();
        let g = periodic_convolve(&f, &d).unwrap();
        let shifted = f.cyclic_shift([3, -2, 0]);
        for (a, b) in shifted.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_preserved_by_unit_mass_kernel() {
        let lat = lat2(16, 4.0);
        let k = pseudo_random(lat, 9).map(|v| v + 1.0);
        let k = k.scale(1.0 / k.integral());
        let g = periodic_convolve(&Field::constant(lat, 2.5), &k).unwrap();
        for v in g.values() {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn convolution_matches_brute_force() {
        let lat = lat2(16, 2.0);
        let f = pseudo_random(lat, 1);
        let k = pseudo_random(lat, 2);
        let fast = periodic_convolve(&f, &k).unwrap();
        let n = 16;
        let vol = lat.cell_volume();
        let mut worst: f64 = 0.0;
        for i0 in 0..n {
            for i1 in 0..n {
                let mut acc = 0.0;
                for j0 in 0..n {
                    for j1 in 0..n {
                        acc += f.values()[j0 * n + j1] * k.values()[((i0 + n - j0) % n) * n + (i1 + n - j1) % n];
                    }
                }
                acc *= vol;
                worst = worst.max((acc - fast.values()[i0 * n + i1]).abs() / acc.abs().max(1e-3));
            }
        }
        assert!(worst < 1e-10, "{worst}");
        let sparse = sparse_convolve(&f, &k).unwrap();
        for (a, b) in sparse.values().iter().zip(fast.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn convolution_commutes() {
        let lat = make_lattice(3, 2.0, 8).unwrap();
        let f = pseudo_random(lat, 4);
        let g = pseudo_random(lat, 8);
        let a = periodic_convolve(&f, &g).unwrap();
        let b = periodic_convolve(&g, &f).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn paired_convolution_equals_single() {
        let lat = lat2(16, 3.0);
        let k = KernelSpectrum::new(&pseudo_random(lat, 1));
        let a = pseudo_random(lat, 2);
        let b = pseudo_random(lat, 3);
        let (pa, pb) = k.apply_pair(&a, &b).unwrap();
        let sa = k.apply(&a).unwrap();
        let sb = k.apply(&b).unwrap();
        for i in 0..lat.sites() {
            assert!((pa.values()[i] - sa.values()[i]).abs() < 1e-13);
            assert!((pb.values()[i] - sb.values()[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn lattice_mismatch_is_rejected() {
        let a = Field::zeros(lat2(16, 4.0));
        let b = Field::zeros(lat2(16, 5.0));
        assert_eq!(periodic_convolve(&a, &b), Err(Error::LatticeMismatch));
        assert_eq!(a.add(&b), Err(Error::LatticeMismatch));
    }

    #[test]
    fn laplacian_of_sine_mode() {
        let l = 5.0;
        let lat = lat2(32, l);
        let w = 2.0 * std::f64::consts::PI / l;
        let f = Field::from_fn(lat, |x| (w * x[0]).sin());
        let lap = spectral_derivative(&f, Derivative::Laplacian).unwrap();
        for (a, b) in lap.values().iter().zip(f.values()) {
            assert!((a + w * w * b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let lat = make_lattice(3, 2.0, 8).unwrap();
        let f = Field::constant(lat, 4.0);
        for i in 0..3 {
            assert!(spectral_derivative(&f, Derivative::Grad(i)).unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_centered_differences_at_second_order() {
        // Band-limited field: spectral gradient is exact, centered differences
        // carry an O(h²) error that should drop by ~4 under refinement.
        let l = 2.0 * std::f64::consts::PI;
        let f = |x: [f64; 3]| (x[0] + 0.3).sin() * (2.0 * x[1]).cos() + 0.5 * (x[0] - x[1]).cos();
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let lat = lat2(n, l);
            let field = Field::from_fn(lat, f);
            let g = spectral_derivative(&field, Derivative::Grad(0)).unwrap();
            let h = lat.h();
            let mut worst: f64 = 0.0;
            for i in 0..lat.sites() {
                let fd = (field.values()[lat.offset(i, [1, 0, 0])] - field.values()[lat.offset(i, [-1, 0, 0])]) / (2.0 * h);
                worst = worst.max((fd - g.values()[i]).abs());
            }
            errs.push(worst);
        }
        let ratio = errs[0] / errs[1];
        assert!((3.6..4.4).contains(&ratio), "{errs:?}");
    }

    #[test]
    fn weights() {
        let lat = lat2(16, 16.0);
        let p = weight_eval(&Weight::Polynomial { a: 2.0 }, &lat);
        let e = weight_eval(&Weight::Exponential { ell: 0.0 }, &lat);
        assert!(e.values().iter().all(|&v| v == 1.0));
        assert_eq!(Weight::Polynomial { a: 1.5 }.at([0.0; 3]), 1.0);
        assert_eq!(Weight::Polynomial { a: 2.0 }.at([3.0, 0.0, 0.0]), 16.0);
        assert!(p.values().iter().all(|&v| v >= 1.0));
    }

    #[test]
    fn binary_roundtrip() {
        let lat = lat2(8, 3.0);
        let f = pseudo_random(lat, 12);
        let bytes = f.to_bytes();
        assert_eq!(bytes.len(), 16 + 8 * 64);
        assert_eq!(Field::from_bytes(&bytes).unwrap(), f);
        assert!(Field::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let lat = lat2(8, 3.0);
        let mut out = Vec::new();
        Field::constant(lat, 1.0).write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next(), Some("i,j,value"));
        assert_eq!(text.lines().count(), 65);
    }
}
