// Ten end-to-end acceptance checks. Runs without the libtest harness so each
// check prints exactly one PASS/FAIL line, even when everything passes.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ulam_core::algebra::reconstruct;
use ulam_core::averaging::{average_once, probe_pairs, schedule, GroupMap};
use ulam_core::defect::{induction_window, isometry_diagnostic, IsometryVerdict};
use ulam_core::linalg::{self, CMat};
use ulam_core::perturb::{
    exact_homomorphism, hermitian_conjugator, perturb_additive, perturb_conjugate, EmbeddingSpec,
};
use ulam_core::pipeline::{
    compute_budget, kk_experiment, run_pipeline, sweep, sweep_csv, unitary_at_distance,
    PipelineConfig, SWEEP_HEADER,
};
use ulam_core::rep::{commutant_basis, decompose};
use ulam_core::synthesis::intertwiner;
use ulam_core::{four_unitaries, AlgebraShape, ApproxMap, HaarSampler, UlamError};

fn shape(s: &str) -> AlgebraShape {
    AlgebraShape::parse(s).unwrap()
}

fn haar_psi(s: &str, mult: Vec<usize>, padding: usize, seed: u64) -> ApproxMap {
    exact_homomorphism(&EmbeddingSpec::haar(&shape(s), mult, padding, seed).unwrap()).unwrap()
}

// Each check returns a one-line summary or panics.
type Check = fn() -> String;

fn c01_schedule() -> String {
    for e in [-10, -12, -16] {
        let eps1 = 2f64.powi(e);
        let s = schedule(eps1, 20).unwrap();
        let mut sum = 0.0;
        for n in 0..=20 {
            let (k, d) = s.levels[n];
            assert!(k < 4.0, "kappa_{n} = {k}");
            if n < 20 {
                assert!(
                    s.levels[n + 1].0 - k < 2f64.powi(-(n as i32)),
                    "kappa step at {n}"
                );
            }
            // compare in log2 to survive underflow
            let cap = 5.0 * (1.0 - 2f64.powi(n as i32)) + eps1.log2();
            assert!(
                s.log2_delta[n] <= cap + 1e-9,
                "delta_{n}: {} > {cap}",
                s.log2_delta[n]
            );
            assert!(d <= eps1);
            sum += k * d;
        }
        assert!(sum < 8.0 * eps1 && s.partial_sum < 8.0 * eps1);
    }
    "schedule claim holds for eps1 in {2^-10, 2^-12, 2^-16}, n <= 20".into()
}

fn c02_averaging() -> String {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let psi = haar_psi("2", vec![4], 0, 100 + seed);
        let phi = perturb_conjugate(&psi, &hermitian_conjugator(8, 1e-2, 200 + seed)).unwrap();
        let rho = GroupMap::from_map(&phi, seed);
        let pairs = probe_pairs(&shape("2"), seed, 8);
        let c = average_once(&rho, 256, &pairs).unwrap().checks;
        let (k, d) = (c.before.kappa, c.before.delta);
        let mc = c.before.mc_defect + c.after.mc_defect + 1e-12;
        assert!(
            c.after.delta <= 2.0 * k * k * d * d + mc,
            "seed {seed}: {c:?}"
        );
        assert!(
            c.closeness <= k * d + c.before.mc_value + c.after.mc_value + 1e-12,
            "seed {seed}: {c:?}"
        );
        worst = worst.max(c.after.delta / (2.0 * k * k * d * d + mc));
    }
    format!("20 conjugate-perturbed M2 -> M8 instances contract; worst defect/bound {worst:.3}")
}

fn c03_fixed_point() -> String {
    let cases: [(&str, Vec<usize>, usize); 10] = [
        ("2", vec![3], 0),
        ("2", vec![2], 1),
        ("2", vec![6], 0),
        ("3", vec![2], 0),
        ("3", vec![3], 3),
        ("1,2", vec![1, 2], 0),
        ("1,2", vec![2, 1], 1),
        ("2,2", vec![1, 1], 0),
        ("2,2", vec![2, 1], 0),
        ("2,2", vec![1, 2], 2),
    ];
    let mut worst = 0.0f64;
    for (k, (s, m, pad)) in cases.into_iter().enumerate() {
        let psi = haar_psi(s, m, pad, 300 + k as u64);
        assert!(psi.codomain() <= 12);
        let cfg = PipelineConfig {
            seed: k as u64,
            ..Default::default()
        };
        let out = run_pipeline(&psi, &cfg).unwrap_or_else(|e| panic!("case {k}: {e}"));
        let probes = ulam_core::defect::unit_ball_probes(psi.domain(), 200, 0xf00 + k as u64);
        let d = out.psi.sup_distance(&psi, &probes).unwrap();
        assert!(d < 1e-8, "case {k}: distance {d:e}");
        worst = worst.max(d);
    }
    format!("10 exact homomorphisms are fixed; worst distance {worst:.1e}")
}

fn c04_sweep() -> String {
    let cfg = PipelineConfig {
        repeats: 5,
        seed: 4,
        ..Default::default()
    };
    let rep = sweep(&[1e-3, 1e-2], &cfg).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(rep.rows.len(), 40);
    for r in &rep.rows {
        assert!(
            r.relation_residual < 1e-9,
            "{}: residual {:e}",
            r.experiment_id,
            r.relation_residual
        );
        assert!(
            r.final_distance <= 50.0 * r.eta,
            "{}: {:e}",
            r.experiment_id,
            r.final_distance
        );
        assert!(
            (r.ratio_sqrt - r.final_distance / r.eta.sqrt()).abs() <= 1e-12 * r.ratio_sqrt.max(1.0)
        );
        assert!(
            (r.ratio_linear - r.final_distance / r.eta).abs() <= 1e-12 * r.ratio_linear.max(1.0)
        );
    }
    let csv = sweep_csv(&rep.rows);
    assert_eq!(csv.lines().next(), Some(SWEEP_HEADER));
    assert_eq!(csv.lines().count(), 41);
    format!(
        "40 recoveries exact and within 50*eta; max distance/eta {:.2}, max distance/sqrt(eta) {:.3}",
        rep.max_ratio_linear, rep.max_ratio_sqrt
    )
}

fn c05_isometry() -> String {
    let w = induction_window(1.0 / 256.0).unwrap();
    assert_eq!((w.k_min, w.k_max), (2, 14));
    assert_eq!(w.checks.len(), 13);
    for c in &w.checks {
        let r = 1.0 / 16.0;
        let k = c.k as f64;
        assert!(
            (1.0 - k * r).powi(2) + 2.0 / 256.0 <= 1.0 - (k + 1.0) * r,
            "k = {}",
            c.k
        );
        assert!(c.holds);
    }
    let mut worst = f64::INFINITY;
    for i in 0..10u64 {
        let l = 1 + (i as usize % 4);
        let psi = haar_psi(&l.to_string(), vec![2], 0, 500 + i);
        let phi = perturb_additive(&psi, 1e-5, 600 + i).unwrap();
        match isometry_diagnostic(&phi, 1e-4, 1000, 700 + i).unwrap() {
            IsometryVerdict::Isometric { min_norm, probes } => {
                assert!(probes >= 1000);
                worst = worst.min(min_norm);
            }
            v => panic!("map {i}: {v:?}"),
        }
    }
    format!("window (2, 14) verified; 10 maps isometric over 1000 probes, min norm {worst:.5}")
}

fn c06_peter_weyl() -> String {
    let m2 = shape("2");
    let sum = ApproxMap::new(&m2, 5, "u+u+1", 0, |u| {
        let b = u.block(0);
        Ok(linalg::direct_sum(&[
            b.clone(),
            b.clone(),
            linalg::identity(1),
        ]))
    });
    let tensor = ApproxMap::new(&m2, 6, "u x 1_3", 0, |u| {
        Ok(linalg::kron(u.block(0), &linalg::identity(3)))
    });
    let mut out = Vec::new();
    for (map, want) in [(sum, vec![1, 2, 2]), (tensor, vec![2, 2, 2])] {
        let pi = GroupMap::from_map(&map, 1);
        let dec = decompose(&pi, 4, 1e-8, 9).unwrap();
        let mut dims = dec.dims.clone();
        dims.sort();
        assert_eq!(dims, want);
        assert!(
            dec.commutation_residual < 1e-10,
            "{:e}",
            dec.commutation_residual
        );
        // independent irreducibility check on fresh unitaries
        let s = HaarSampler::new(&m2, 77);
        let mats: Vec<CMat> = (0..6)
            .map(|k| pi.eval(&s.haar_unitary_at(k)).unwrap())
            .collect();
        for b in &dec.bases {
            let restricted: Vec<CMat> = mats.iter().map(|m| b.adjoint() * m * b).collect();
            assert_eq!(commutant_basis(&restricted, 1e-8).unwrap().len(), 1);
        }
        out.push(format!(
            "{dims:?} (residual {:.0e})",
            dec.commutation_residual
        ));
    }
    format!("blocks {} and {}, each irreducible", out[0], out[1])
}

fn c07_four_unitaries() -> String {
    let s = shape("1,2,3");
    let sampler = HaarSampler::new(&s, 5);
    let mut worst = 0.0f64;
    for k in 0..100u64 {
        let a = sampler
            .random_contraction_at(k)
            .scale_real(1.0 + (k % 7) as f64);
        let terms = four_unitaries(&a);
        assert_eq!(terms.len(), 4);
        for (u, c) in &terms {
            assert!(u.unitarity_residual() < 1e-12);
            assert!(c.norm() <= a.norm() + 1e-12);
        }
        let err = (&reconstruct(&terms, &s) - &a).norm();
        assert!(err < 1e-12, "element {k}: {err:e}");
        worst = worst.max(err);
    }
    format!("100 elements rebuilt from 4 unitaries; worst error {worst:.1e}")
}

fn c08_intertwiner() -> String {
    let mut worst = 0.0f64;
    for (k, dist) in [1e-2, 5e-2].into_iter().enumerate() {
        for (j, (s, m, pad)) in [("2", vec![2], 1), ("1,2", vec![2, 1], 0)]
            .into_iter()
            .enumerate()
        {
            let psi = haar_psi(s, m, pad, 800 + j as u64);
            let u = unitary_at_distance(psi.codomain(), dist, 900 + k as u64);
            assert!(
                (linalg::op_norm(&(&u - linalg::identity(psi.codomain()))) - dist).abs() < 1e-12
            );
            let psi2 = perturb_conjugate(&psi, &u).unwrap();
            let it = intertwiner(&psi, &psi2, 1e-10, 64, 3).unwrap_or_else(|e| panic!("{e}"));
            let probes = ulam_core::defect::unit_ball_probes(psi.domain(), 64, 11);
            for x in &probes {
                let lhs = &it.v * psi.eval(x).unwrap() * it.v.adjoint();
                assert!(linalg::op_norm(&(lhs - psi2.eval(x).unwrap())) < 1e-10);
            }
            let d = psi.sup_distance(&psi2, &probes).unwrap();
            assert!(
                it.distance_from_one <= 10.0 * d,
                "{} vs {d}",
                it.distance_from_one
            );
            worst = worst.max(it.distance_from_one / d);
        }
    }
    let a = exact_homomorphism(&EmbeddingSpec::standard(&shape("2"), vec![2], 0).unwrap()).unwrap();
    let b = exact_homomorphism(&EmbeddingSpec::standard(&shape("2"), vec![1], 2).unwrap()).unwrap();
    assert!(matches!(
        intertwiner(&a, &b, 1e-10, 16, 0),
        Err(UlamError::MultiplicityMismatch { .. })
    ));
    format!("Ad(V) matches to 1e-10 with |V-1|/|psi-psi2| <= {worst:.2}; mismatch refused")
}

fn c09_kadison_kastler() -> String {
    let spec = EmbeddingSpec::standard(&shape("2"), vec![2], 0).unwrap();
    let eta = 1e-3;
    let rep =
        kk_experiment(&spec, eta, &PipelineConfig::default()).unwrap_or_else(|e| panic!("{e}"));
    let e = &rep.estimate;
    assert!(0.0 <= e.lower && e.lower <= e.upper);
    assert!(e.upper <= 2.0 * eta + 1e-6, "upper {:e}", e.upper);
    assert!(
        rep.recovered_distance <= 0.1,
        "recovered {:e}",
        rep.recovered_distance
    );
    assert!(rep.pipeline.relation_residual < 1e-9);
    format!(
        "d_KK in [{:.2e}, {:.2e}], recovered isomorphism {:.2e} from identity",
        e.lower, e.upper, rep.recovered_distance
    )
}

fn c10_budget() -> String {
    let k = 50.0;
    for e in [0.0, 2f64.powi(-40), 2f64.powi(-20), 1e-5, 2f64.powi(-13)] {
        let b = compute_budget(e, k).unwrap();
        let e1 = e * 4.0;
        let e2 = e1 * 8.0;
        let e3 = e2 * e2 + 4.0 * e2;
        let e4 = (2.0 + 2.0 * e2) * e3 / (1.0 - e3);
        let e5 = 8.0 * e4 + 8.0 * e2 + 9.0 * e1;
        let e6 = k * e5 + 2.0 * (e4 + e2);
        let fin = 240.0 * e6.sqrt() + e6;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1e-300);
        for (got, want) in [
            (b.eps1, e1),
            (b.eps2, e2),
            (b.eps3, e3),
            (b.eps4, e4),
            (b.eps5, e5),
            (b.eps6, e6),
            (b.final_bound, fin),
        ] {
            assert!(close(got, want), "eps = {e:e}: {got:e} vs {want:e}");
        }
    }
    for e in [2f64.powi(-12), 1e-3, 1.0] {
        assert!(compute_budget(e, k).is_err());
    }
    assert!(compute_budget(1e-6, 0.0).is_err());
    "budget chain matches independent formulas; eps >= 2^-12 refused".into()
}

fn main() {
    // keep panics from individual checks off the report lines
    std::panic::set_hook(Box::new(|info| eprintln!("  {info}")));
    let checks: [(&str, f64, Check); 10] = [
        ("iteration schedule", 1.0, c01_schedule),
        ("averaging contraction", 30.0, c02_averaging),
        ("exact fixed point", 60.0, c03_fixed_point),
        ("recovery sweep", 300.0, c04_sweep),
        ("isometry", 30.0, c05_isometry),
        ("irreducible decomposition", 5.0, c06_peter_weyl),
        ("four unitaries", 5.0, c07_four_unitaries),
        ("intertwiner", 10.0, c08_intertwiner),
        ("Kadison-Kastler", 60.0, c09_kadison_kastler),
        ("budget formulas", 1.0, c10_budget),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in checks.into_iter().enumerate() {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f));
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(msg) if secs <= limit => {
                println!("PASS criterion {}: {name}: {msg} [{secs:.2}s]", i + 1)
            }
            Ok(msg) => {
                failed += 1;
                println!(
                    "FAIL criterion {}: {name}: {msg}; took {secs:.2}s, limit {limit}s",
                    i + 1
                )
            }
            Err(_) => {
                failed += 1;
                println!("FAIL criterion {}: {name} [{secs:.2}s]", i + 1)
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
