mod common;

use anderson_core::lattice::{make_lattice, periodic_convolve, Field, LatticeSpec, Weight};
use anderson_core::norms::holder_norm_estimate;
use anderson_core::pam::{heat_propagate, laplacian, LaplacianKind};
use proptest::prelude::*;

use common::pseudo_field;

fn lat16() -> LatticeSpec {
    make_lattice(2, 4.0, 16).unwrap()
}

fn lat64() -> LatticeSpec {
    make_lattice(2, 8.0, 64).unwrap()
}

const FLAT: Weight = Weight::Exponential { ell: 0.0 };

fn kinds() -> impl Strategy<Value = LaplacianKind> {
    prop_oneof![Just(LaplacianKind::Spectral), Just(LaplacianKind::Fd2)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn laplacian_has_zero_mean(seed in any::<u64>(), amp in 0.1f64..10.0, kind in kinds()) {
        let f = pseudo_field(lat16(), seed, amp);
        let l = laplacian(&f, kind);
        let scale = l.max_abs().max(1.0);
        prop_assert!(l.mean().abs() < 1e-12 * scale);
    }

    #[test]
    fn laplacian_and_heat_are_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (f, g) = (pseudo_field(lat16(), s1, 1.0), pseudo_field(lat16(), s2, 1.0));
        let combo = f.scale(a).add(&g.scale(b)).unwrap();
        for kind in [LaplacianKind::Spectral, LaplacianKind::Fd2] {
            let lhs = laplacian(&combo, kind);
            let rhs = laplacian(&f, kind).scale(a).add(&laplacian(&g, kind).scale(b)).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10 * rhs.max_abs().max(1.0));
        }
        let lhs = heat_propagate(&combo, 0.05);
        let rhs = heat_propagate(&f, 0.05).scale(a).add(&heat_propagate(&g, 0.05).scale(b)).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12 * rhs.max_abs().max(1.0));
    }

    #[test]
    fn weights_are_submultiplicative(
        x in prop::array::uniform3(-20.0f64..20.0),
        y in prop::array::uniform3(-20.0f64..20.0),
        a in 0.0f64..4.0,
        ell in 0.0f64..1.0,
    ) {
        let add = [x[0] + y[0], x[1] + y[1], x[2] + y[2]];
        let p = Weight::Polynomial { a };
        // (1 + |x + y|)^a ≤ (1 + |x|)^a (1 + |y|)^a
        prop_assert!(p.at(add) <= p.at(x) * p.at(y) * (1.0 + 1e-12));
        let e = Weight::Exponential { ell };
        prop_assert!(e.at(add) <= e.at(x) * e.at(y) * (1.0 + 1e-12));
    }

    #[test]
    fn convolution_commutes(s1 in any::<u64>(), s2 in any::<u64>(), shift in prop::array::uniform2(-20i64..20)) {
        let (f, g) = (pseudo_field(lat16(), s1, 1.0), pseudo_field(lat16(), s2, 1.0));
        let fg = periodic_convolve(&f, &g).unwrap();
        let gf = periodic_convolve(&g, &f).unwrap();
        prop_assert!(fg.sub(&gf).unwrap().max_abs() < 1e-12 * fg.max_abs().max(1.0));
        // and with translations
        let s = [shift[0], shift[1], 0];
        let a = periodic_convolve(&f.cyclic_shift(s), &g).unwrap();
        prop_assert!(a.sub(&fg.cyclic_shift(s)).unwrap().max_abs() < 1e-12 * fg.max_abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn holder_estimate_is_a_seminorm(s1 in any::<u64>(), s2 in any::<u64>(), c in -5.0f64..5.0, alpha in -1.8f64..-0.2) {
        let (f, g) = (pseudo_field(lat64(), s1, 1.0), pseudo_field(lat64(), s2, 1.0));
        let est = |x: &Field| holder_norm_estimate(x, alpha, &FLAT).unwrap().value;
        let (ef, eg) = (est(&f), est(&g));
        prop_assert!((est(&f.scale(c)) - c.abs() * ef).abs() <= 1e-12 * ef.max(1e-300) * c.abs().max(1.0));
        prop_assert!(est(&f.add(&g).unwrap()) <= (ef + eg) * (1.0 + 1e-12));
    }

    #[test]
    fn holder_estimate_monotone_in_alpha(seed in any::<u64>(), a in 0.05f64..0.9, b in 0.05f64..0.9) {
        // same family of test functions on both sides of the comparison
        let (lo, hi) = if a < b { (-b, -a) } else { (-a, -b) };
        let f = pseudo_field(lat64(), seed, 1.0);
        let e_lo = holder_norm_estimate(&f, lo, &FLAT).unwrap().value;
        let e_hi = holder_norm_estimate(&f, hi, &FLAT).unwrap().value;
        // λ ≤ 1, so λ^{−α} shrinks as α decreases
        prop_assert!(e_lo <= e_hi * (1.0 + 1e-12));
    }
}
