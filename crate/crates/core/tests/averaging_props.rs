use proptest::prelude::*;
use ulam_core::averaging::{
    average_once, level_samples, measure, probe_pairs, stabilize, GroupMap, StabilizeOptions,
};
use ulam_core::linalg;
use ulam_core::perturb::{
    exact_homomorphism, hermitian_conjugator, perturb_additive, perturb_conjugate, EmbeddingSpec,
};
use ulam_core::{AlgebraShape, ApproxMap, HaarSampler};

fn m2() -> AlgebraShape {
    AlgebraShape::full(2).unwrap()
}

fn psi(mult: usize, seed: u64) -> ApproxMap {
    exact_homomorphism(&EmbeddingSpec::haar(&m2(), vec![mult], 0, seed).unwrap()).unwrap()
}

fn small_opts() -> StabilizeOptions {
    StabilizeOptions {
        width: 64,
        max_evals_per_probe: 64 * 64,
        probe_pairs: 6,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    // one pass squares the defect, up to the reported Monte-Carlo error
    #[test]
    fn quadratic_contraction(seed in any::<u64>(), t in 1e-3f64..1e-2, eta in 0.0f64..1e-3) {
        let phi = perturb_conjugate(&psi(2, seed), &hermitian_conjugator(4, t, seed ^ 1)).unwrap();
        let phi = perturb_additive(&phi, eta, seed ^ 2).unwrap();
        let rho = GroupMap::from_map(&phi, seed);
        let pairs = probe_pairs(&m2(), seed, 6);
        let c = average_once(&rho, 64, &pairs).unwrap().checks;
        let (k, d) = (c.before.kappa, c.before.delta);
        prop_assert!(c.after.delta <= 2.0 * k * k * d * d + c.before.mc_defect + c.after.mc_defect + 1e-12, "{:?}", c);
        prop_assert!(c.all_hold(), "{:?}", c);
    }

    // two sample sets {x_j} and {g x_j} estimate the same integral
    #[test]
    fn translated_samples_agree(seed in any::<u64>(), eta in 1e-4f64..1e-2) {
        let phi = perturb_additive(&psi(2, seed), eta, seed ^ 3).unwrap();
        let rho = GroupMap::from_map(&phi, seed);
        let xs = level_samples(&m2(), seed, 0, 64);
        let g = HaarSampler::new(&m2(), seed ^ 4).haar_unitary_at(0);
        let gxs = xs.iter().map(|x| &g * x).collect();
        let a = GroupMap::averaged_with_samples(&rho, xs).unwrap();
        let b = GroupMap::averaged_with_samples(&rho, gxs).unwrap();
        for (u, v) in probe_pairs(&m2(), seed ^ 5, 4) {
            for w in [u, v] {
                let (ra, ea) = a.eval_with_error(&w).unwrap();
                let (rb, eb) = b.eval_with_error(&w).unwrap();
                prop_assert!(linalg::op_norm(&(ra - rb)) <= 3.0 * (ea + eb) + 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn schedule_dominates_measured_levels(seed in any::<u64>(), eta in 1e-5f64..6e-5) {
        // ‖S − 1‖ = 1e-4 on top of an additive perturbation
        let phi = perturb_conjugate(&psi(2, seed), &hermitian_conjugator(4, 1e-4, seed ^ 6)).unwrap();
        let phi = perturb_additive(&phi, eta, seed ^ 7).unwrap();
        let rho = GroupMap::from_map(&phi, seed);
        let measured = measure(&rho, &probe_pairs(&m2(), seed, 6)).unwrap().delta;
        let eps1 = (4.0 * measured).clamp(1e-6, 1.0 / 1024.0);
        let out = stabilize(&rho, eps1, &small_opts()).unwrap();
        let sched = out.schedule.as_ref().unwrap();
        for t in &out.trace {
            prop_assert!(t.delta <= sched.delta(t.level) + t.mc, "{:?}", t);
            prop_assert!(t.kappa <= sched.kappa(t.level) + t.mc + 1e-9, "{:?}", t);
        }
        prop_assert!(out.movement <= 8.0 * eps1, "{} > {}", out.movement, 8.0 * eps1);
    }
}

#[test]
fn exact_input_does_not_move() {
    let rho = GroupMap::from_map(&psi(3, 1), 1);
    let out = stabilize(&rho, 1e-4, &small_opts()).unwrap();
    assert_eq!(out.movement, 0.0);
    assert_eq!(out.trace.len(), 1);
}
