//! Lattice white noise, the bump mollifier, and lattice shifts.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{sparse_convolve, Field, LatticeSpec};
use crate::radial::bump;

/// Name and version of the noise generator, recorded in manifests.
pub const RNG_IDENTITY: &str = "chacha20-wordpos/box-muller v1";

/// Default resolvability floor for mollifiers, in cells.
pub const DEFAULT_RESOLUTION_CELLS: f64 = 4.0;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteNoiseSample {
    pub field: Field,
    pub seed: u64,
    pub stream: u64,
}

/// Standard normal from two 64-bit words (Box–Muller, cosine branch).
fn gaussian(a: u64, b: u64) -> f64 {
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Standard normals for sites `start..start + out.len()` of `(seed, stream)`.
/// Site `i` always consumes words `4i..4i + 4` of the stream, so any
/// partition of the sites yields the same values.
pub fn fill_normals(seed: u64, stream: u64, start: usize, out: &mut [f64]) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(4 * start as u128);
    for o in out.iter_mut() {
        let a = rng.next_u64();
        let b = rng.next_u64();
        *o = gaussian(a, b);
    }
}

/// I.i.d. `N(0, 1/h^d)` values, deterministic in `(seed, stream)`.
pub fn sample_white_noise(lattice: &LatticeSpec, seed: u64, stream: u64) -> WhiteNoiseSample {
    let scale = 1.0 / lattice.cell_volume().sqrt();
    let mut values = vec![0.0; lattice.sites()];
    values.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        fill_normals(seed, stream, c * CHUNK, chunk);
        for v in chunk.iter_mut() {
            *v *= scale;
        }
    });
    WhiteNoiseSample { field: Field::from_vec_unchecked(*lattice, values), seed, stream }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier {
    pub eps: f64,
    /// `ϱ_ε` on the displacement lattice with discrete integral 1.
    pub profile: Field,
}

/// Mollifier with the default resolvability floor `ε ≥ 4h`.
pub fn make_mollifier(lattice: &LatticeSpec, eps: f64) -> Result<Mollifier> {
    make_mollifier_with_floor(lattice, eps, DEFAULT_RESOLUTION_CELLS)
}

/// Mollifier requiring `ε ≥ cells · h`.
pub fn make_mollifier_with_floor(lattice: &LatticeSpec, eps: f64, cells: f64) -> Result<Mollifier> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!("mollifier scale {eps} outside (0, 1]")));
    }
    let floor = cells * lattice.h();
    if eps < floor {
        return Err(Error::UnresolvedMollifier { eps, floor });
    }
    if eps >= 0.5 * lattice.extent() {
        return Err(Error::InvalidParameter(format!(
            "mollifier support {eps} does not fit in half the torus {}",
            0.5 * lattice.extent()
        )));
    }
    let raw = Field::kernel_from_fn(*lattice, |d| {
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        bump(r / eps)
    });
    let mass = raw.integral();
    Ok(Mollifier { eps, profile: raw.scale(1.0 / mass) })
}

/// `ξ_ε = ξ ∗ ϱ_ε`, summed directly over the compact support of `ϱ_ε`.
pub fn mollify(xi: &WhiteNoiseSample, m: &Mollifier) -> Result<Field> {
    mollify_field(&xi.field, m)
}

pub fn mollify_field(f: &Field, m: &Mollifier) -> Result<Field> {
    sparse_convolve(f, &m.profile)
}

/// Lattice shift `θ_x f = f(· - x)` for a physical displacement `x` that is
/// a whole number of cells.
pub fn shift_field(f: &Field, x: [f64; 3]) -> Result<Field> {
    let lat = f.lattice();
    let h = lat.h();
    let mut s = [0i64; 3];
    for a in 0..3 {
        if a >= lat.dim() {
            if x[a] != 0.0 {
                return Err(Error::NonLatticeShift(x[a]));
            }
            continue;
        }
        let cells = x[a] / h;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * (1.0 + rounded.abs()) {
            return Err(Error::NonLatticeShift(x[a]));
        }
        s[a] = rounded as i64;
    }
    Ok(f.cyclic_shift(s))
}
