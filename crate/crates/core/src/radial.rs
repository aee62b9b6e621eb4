//! Radial profiles shared by the kernels (smooth step, cutoff, bump) and
//! radial Fourier transforms of them on the continuum.

use std::f64::consts::PI;

/// Smooth step `s(t) = e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)})` on `[0, 1]`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        1.0 / (1.0 + (1.0 / t - 1.0 / (1.0 - t)).exp())
    }
}

pub fn smooth_step_d1(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let s = smooth_step(t);
    let m = 1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t));
    s * (1.0 - s) * m
}

pub fn smooth_step_d2(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let s = smooth_step(t);
    let u = 1.0 - t;
    let m = 1.0 / (t * t) + 1.0 / (u * u);
    let dm = -2.0 / (t * t * t) + 2.0 / (u * u * u);
    let d1 = s * (1.0 - s) * m;
    d1 * (1.0 - 2.0 * s) * m + s * (1.0 - s) * dm
}

/// Radial cutoff: 1 on `[0, 1]`, 0 on `[2, ∞)`, smooth in between.
pub fn cutoff(r: f64) -> f64 {
    1.0 - smooth_step(r - 1.0)
}

pub fn cutoff_d1(r: f64) -> f64 {
    -smooth_step_d1(r - 1.0)
}

pub fn cutoff_d2(r: f64) -> f64 {
    -smooth_step_d2(r - 1.0)
}

/// Unnormalized bump `exp(-1/(1 - r²))` supported in the unit ball.
pub fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes.iter().zip(&self.weights).map(|(x, w)| (mid + half * x, w * half)).collect()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Continuum integral of the unnormalized bump over `R^dim`.
pub fn bump_mass(dim: usize) -> f64 {
    let gl = GaussLegendre::new(200);
    match dim {
        2 => 2.0 * PI * gl.integrate(0.0, 1.0, |r| bump(r) * r),
        _ => 4.0 * PI * gl.integrate(0.0, 1.0, |r| bump(r) * r * r),
    }
}

/// Radial Fourier transform of a profile supported in `[a, b]`:
/// `2π ∫ f(r) J0(kr) r dr` in 2D and `4π ∫ f(r) sinc(kr) r² dr` in 3D.
pub fn radial_transform(dim: usize, nodes: &[(f64, f64)], f: impl Fn(f64) -> f64, k: f64) -> f64 {
    let mut acc = 0.0;
    for &(r, w) in nodes {
        let kern = if dim == 2 {
            libm::j0(k * r) * r
        } else {
            let x = k * r;
            let s = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
            s * r * r
        };
        acc += w * f(r) * kern;
    }
    if dim == 2 {
        2.0 * PI * acc
    } else {
        4.0 * PI * acc
    }
}

/// Fourier transform `ϱ̂(κ)` of the unit-mass bump, tabulated on a log grid.
#[derive(Debug, Clone)]
pub struct BumpTransform {
    dim: usize,
    log_lo: f64,
    step: f64,
    table: Vec<f64>,
    second_moment: f64,
}

impl BumpTransform {
    /// Beyond this argument the transform is at the roundoff floor (~1e-17)
    /// and is treated as 0.
    pub const KAPPA_MAX: f64 = 1500.0;
    const KAPPA_MIN: f64 = 1e-6;
    const POINTS: usize = 24000;

    pub fn new(dim: usize) -> Self {
        let gl = GaussLegendre::new(1400);
        let nodes = gl.mapped(0.0, 1.0);
        let mass = bump_mass(dim);
        let log_lo = Self::KAPPA_MIN.ln();
        let step = (Self::KAPPA_MAX.ln() - log_lo) / (Self::POINTS - 1) as f64;
        let table = (0..Self::POINTS)
            .map(|i| radial_transform(dim, &nodes, bump, (log_lo + step * i as f64).exp()) / mass)
            .collect();
        let m2 = GaussLegendre::new(200);
        let second_moment = if dim == 2 {
            2.0 * PI * m2.integrate(0.0, 1.0, |r| bump(r) * r.powi(3)) / mass
        } else {
            4.0 * PI * m2.integrate(0.0, 1.0, |r| bump(r) * r.powi(4)) / mass
        };
        Self { dim, log_lo, step, table, second_moment }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, kappa: f64) -> f64 {
        let kappa = kappa.abs();
        if kappa < Self::KAPPA_MIN {
            return 1.0 - kappa * kappa * self.second_moment / (2.0 * self.dim as f64);
        }
        if kappa >= Self::KAPPA_MAX {
            return 0.0;
        }
        let x = (kappa.ln() - self.log_lo) / self.step;
        let i = (x.floor() as usize).clamp(1, self.table.len() - 3);
        let t = x - i as f64;
        let (p0, p1, p2, p3) = (self.table[i - 1], self.table[i], self.table[i + 1], self.table[i + 2]);
        // four-point Lagrange interpolation on nodes -1, 0, 1, 2
        -p0 * t * (t - 1.0) * (t - 2.0) / 6.0 + p1 * (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
            - p2 * (t + 1.0) * t * (t - 2.0) / 2.0
            + p3 * (t + 1.0) * t * (t - 1.0) / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_endpoints_and_symmetry() {
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        for t in [0.1, 0.27, 0.4] {
            assert!((smooth_step(t) + smooth_step(1.0 - t) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn step_derivatives_match_finite_differences() {
        let e = 1e-5;
        for t in [0.05, 0.2, 0.5, 0.7, 0.93] {
            let d1 = (smooth_step(t + e) - smooth_step(t - e)) / (2.0 * e);
            let d2 = (smooth_step_d1(t + e) - smooth_step_d1(t - e)) / (2.0 * e);
            assert!((d1 - smooth_step_d1(t)).abs() < 1e-7 * (1.0 + d1.abs()));
            assert!((d2 - smooth_step_d2(t)).abs() < 1e-6 * (1.0 + d2.abs()));
        }
        assert_eq!(smooth_step_d2(0.0), 0.0);
        assert!(smooth_step_d2(1e-3).is_finite());
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(cutoff(0.3), 1.0);
        assert_eq!(cutoff(1.0), 1.0);
        assert_eq!(cutoff(2.0), 0.0);
        assert_eq!(cutoff(3.0), 0.0);
        assert!(cutoff(1.5) > 0.0 && cutoff(1.5) < 1.0);
    }

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        let gl = GaussLegendre::new(10);
        let v = gl.integrate(0.0, 2.0, |x| x.powi(19));
        assert!((v - 2f64.powi(20) / 20.0).abs() < 1e-9);
        let big = GaussLegendre::new(1400);
        assert!((big.integrate(0.0, PI, f64::sin) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn bump_transform_normalized_and_consistent() {
        for dim in [2, 3] {
            let t = BumpTransform::new(dim);
            assert!((t.eval(0.0) - 1.0).abs() < 1e-14);
            assert!((t.eval(2e-6) - t.eval(0.9e-6)).abs() < 1e-10);
            let nodes = GaussLegendre::new(1400).mapped(0.0, 1.0);
            let mass = bump_mass(dim);
            for k in [0.37, 3.3, 41.0, 333.0] {
                let direct = radial_transform(dim, &nodes, bump, k) / mass;
                assert!((t.eval(k) - direct).abs() < 1e-10, "dim {dim} k {k}");
            }
            assert!(t.eval(BumpTransform::KAPPA_MAX * 0.999).abs() < 1e-15);
        }
    }
}
