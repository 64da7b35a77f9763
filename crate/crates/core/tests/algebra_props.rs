use proptest::prelude::*;
use ulam_core::algebra::reconstruct;
use ulam_core::{four_unitaries, AlgebraElement, AlgebraShape, HaarSampler, C64};

fn shapes() -> impl Strategy<Value = AlgebraShape> {
    prop::collection::vec(1usize..4, 1..4).prop_map(|b| AlgebraShape::new(b).unwrap())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_is_a_cstar_norm(shape in shapes(), seed in any::<u64>(), k in 0u64..100) {
        let s = HaarSampler::new(&shape, seed);
        let a = s.random_contraction_at(k).scale_real(3.0);
        let b = s.fork(1).random_contraction_at(k);
        prop_assert!((&a * &b).norm() <= a.norm() * b.norm() * (1.0 + 1e-10) + 1e-300);
        prop_assert!(close(a.adjoint().norm(), a.norm()));
        prop_assert!(close((&a.adjoint() * &a).norm(), a.norm().powi(2)));
    }

    #[test]
    fn haar_samples_are_unitary(shape in shapes(), seed in any::<u64>(), k in 0u64..1000) {
        let u = HaarSampler::new(&shape, seed).haar_unitary_at(k);
        prop_assert!(u.unitarity_residual() < 1e-12);
        prop_assert!(close(u.norm(), 1.0));
    }

    #[test]
    fn four_unitaries_reconstructs(shape in shapes(), seed in any::<u64>(), scale in 0.0f64..5.0) {
        let a = HaarSampler::new(&shape, seed).random_contraction_at(0).scale_real(scale);
        let terms = four_unitaries(&a);
        for (u, c) in &terms {
            prop_assert!(u.unitarity_residual() < 1e-12);
            prop_assert!(c.norm() <= a.norm() + 1e-12);
        }
        prop_assert!((&reconstruct(&terms, &shape) - &a).norm() < 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), k in 0u64..50) {
        let shape = AlgebraShape::new(vec![2, 3]).unwrap();
        let s = HaarSampler::new(&shape, seed);
        prop_assert_eq!(s.haar_unitary_at(k), s.haar_unitary_at(k));
        prop_assert_eq!(s.random_contraction_at(k), s.random_contraction_at(k));
    }
}

// Left invariance in distribution: for f(u) = |tr(u)|² and Re tr(u h) with a
// fixed h, the means over u and over g·u agree within 3 standard errors.
#[test]
fn haar_is_left_invariant() {
    let shape = AlgebraShape::new(vec![3]).unwrap();
    let s = HaarSampler::new(&shape, 21);
    let g = HaarSampler::new(&shape, 99).haar_unitary_at(0);
    let h = HaarSampler::new(&shape, 98).random_contraction_at(0);
    let tr = |x: &AlgebraElement| -> C64 { x.block(0).trace() };
    let fs: [&dyn Fn(&AlgebraElement) -> f64; 3] =
        [&|u| tr(u).norm_sqr(), &|u| tr(&(u * &h)).re, &|u| {
            tr(&(&(u * u) * &h)).im
        }];
    let n = 4000u64;
    let us: Vec<AlgebraElement> = (0..n).map(|k| s.haar_unitary_at(k)).collect();
    for f in fs {
        let a: Vec<f64> = us.iter().map(f).collect();
        let b: Vec<f64> = us.iter().map(|u| f(&(&g * u))).collect();
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            (m, (var / v.len() as f64).sqrt())
        };
        let ((ma, sa), (mb, sb)) = (stats(&a), stats(&b));
        assert!(
            (ma - mb).abs() <= 3.0 * (sa * sa + sb * sb).sqrt() + 1e-12,
            "{ma} vs {mb}"
        );
    }
    // E|tr u|² = 1 on U(3)
    let m = us.iter().map(|u| tr(u).norm_sqr()).sum::<f64>() / n as f64;
    assert!((m - 1.0).abs() < 0.1, "{m}");
}
