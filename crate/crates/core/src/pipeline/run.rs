use std::fmt;

use serde::Serialize;

use crate::algebra::{AlgebraElement, AlgebraShape, HaarSampler};
use crate::averaging::{
    measure, probe_pairs, stabilize, GroupMap, LevelTrace, StabilizeOptions, StopReason,
};
use crate::clock::Stopwatch;
use crate::defect::{estimate_defect, normalize, unit_ball_probes, ApproxMap, DefectReport};
use crate::error::UlamError;
use crate::linalg::{self, CMat};
use crate::par;
use crate::perturb::discretize;
use crate::rep::{
    decompose, gram_residual, lift_projection, stone_generator, unitarize, UnitarizeBounds,
    UnitarizeChecks,
};
use crate::synthesis::{
    matrix_unit_correction, near_inclusion_fix, CorrectionOptions, MatrixUnitSystem, Subalgebra,
};

use super::budget::{compute_budget, default_l, PipelineBudget};
use super::config::{LiftPath, PipelineConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    /// Sup-distance moved by the stage (on the unit ball or on unitaries).
    pub movement: f64,
    pub defect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub shape: String,
    pub n: usize,
    pub seed: u64,
    pub path: LiftPath,
    pub input_defect: DefectReport,
    pub eps: f64,
    pub budget: Option<PipelineBudget>,
    pub certified: bool,
    pub stages: Vec<StageRecord>,
    pub level_trace: Vec<LevelTrace>,
    pub stop_reason: StopReason,
    pub unitarize: UnitarizeChecks,
    pub block_dims: Vec<usize>,
    pub decomposition_residual: f64,
    /// `max ‖[φ'(u), p_k]‖` over unitary probes.
    pub commutator_transport: f64,
    pub commutator_bound: Option<f64>,
    /// The same over the unit ball.
    pub commutator_transport_ball: f64,
    pub commutator_ball_bound: Option<f64>,
    pub multiplicities: Vec<usize>,
    pub padding: usize,
    pub relation_residual: f64,
    pub final_distance: f64,
    pub chain_sum: f64,
    pub triangle_ok: bool,
    pub l_constant: f64,
    pub distance_bound: f64,
    pub ratio_sqrt: f64,
    pub ratio_linear: f64,
    pub passed: bool,
}

impl PipelineReport {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

pub type Timings = Vec<(String, f64)>;

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub psi: ApproxMap,
    pub system: MatrixUnitSystem,
    pub report: PipelineReport,
    pub timings: Timings,
}

/// A stage failure with the records of every stage that completed.
#[derive(Clone, Debug)]
pub struct PipelineAbort {
    pub stage: String,
    pub error: UlamError,
    pub completed: Vec<StageRecord>,
}

impl fmt::Display for PipelineAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} aborted: {}", self.stage, self.error)?;
        if !self.completed.is_empty() {
            let names: Vec<&str> = self.completed.iter().map(|s| s.name.as_str()).collect();
            write!(f, " (completed: {})", names.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for PipelineAbort {}

impl PipelineAbort {
    pub fn new(stage: &str, error: UlamError) -> Self {
        PipelineAbort {
            stage: stage.into(),
            error,
            completed: Vec::new(),
        }
    }
}

struct Tracker {
    completed: Vec<StageRecord>,
    timings: Timings,
    current: Stopwatch,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            completed: Vec::new(),
            timings: Vec::new(),
            current: Stopwatch::start(),
        }
    }

    fn run<T>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> crate::Result<T>,
    ) -> Result<T, PipelineAbort> {
        self.current = Stopwatch::start();
        let out = f().map_err(|error| PipelineAbort {
            stage: name.into(),
            error,
            completed: self.completed.clone(),
        });
        let dt = self.current.seconds();
        match self.timings.last_mut() {
            Some((last, t)) if last == name => *t += dt,
            _ => self.timings.push((name.into(), dt)),
        }
        out
    }

    fn record(&mut self, name: &str, movement: f64, defect: Option<f64>) {
        self.completed.push(StageRecord {
            name: name.into(),
            movement,
            defect,
        });
    }
}

/// The full stabilization chain with `M_N` as target.
pub fn run_pipeline(
    phi: &ApproxMap,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineAbort> {
    let target = Subalgebra::full(phi.codomain()).map_err(|e| PipelineAbort::new("target", e))?;
    run_pipeline_into(phi, &target, config)
}

fn correction_options(config: &PipelineConfig, salt: u64) -> CorrectionOptions {
    CorrectionOptions {
        tol: 1e-9,
        admissible: config.admissible,
        constant: config.farah_constant,
        samples: config.probes,
        seed: config.seed ^ salt,
    }
}

/// The chain normalize → discretize → stabilize → unitarize → decompose →
/// per-block correction → assembly → correction into `target`.
pub fn run_pipeline_into(
    phi: &ApproxMap,
    target: &Subalgebra,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineAbort> {
    config
        .validate()
        .map_err(|e| PipelineAbort::new("config", e))?;
    let shape = phi.domain().clone();
    let n = phi.codomain();
    let seed = config.seed;
    let sampler = HaarSampler::new(&shape, seed);
    let probes = unit_ball_probes(&shape, config.probes, seed ^ 0xab);
    let mut t = Tracker::new();

    let input = t.run("estimate", || estimate_defect(phi, config.probes, &sampler))?;
    let eps = input.epsilon;
    t.run("admissibility", || {
        if eps >= config.admissible {
            Err(UlamError::precondition(format!(
                "estimated epsilon {eps:e} is outside the admissible range {}",
                config.admissible
            )))
        } else {
            Ok(())
        }
    })?;
    let budget = compute_budget(eps, config.farah_constant).ok();

    let (phin, nrep) = t.run("normalize", || {
        normalize(phi, config.probes, &sampler.fork(1))
    })?;
    let m_norm = t.run("normalize", || phin.sup_distance(phi, &probes))?;
    t.record("normalize", m_norm, Some(nrep.output.epsilon));

    let phid = t.run("discretize", || discretize(&phin, config.grid))?;
    let m_disc = t.run("discretize", || phid.sup_distance(&phin, &probes))?;
    t.record("discretize", m_disc, None);

    // τ(u) = φ'(u) + (1 − φ'(1)) on unitaries
    let unit = t.run("restrict", || phid.eval(&AlgebraElement::identity(&shape)))?;
    let comp = linalg::identity(n) - &unit;
    let phid_c = phid.clone();
    let tau0 = ApproxMap::new(
        &shape,
        n,
        "tau0",
        seed,
        move |u| Ok(phid_c.eval(u)? + &comp),
    );
    let rho0 = GroupMap::from_map(&tau0, seed);

    // the lattice rounding adds at most a few times its own movement
    let eps1 = 4.0 * eps + 4.0 * m_disc + 1e-14;
    let opts = StabilizeOptions {
        width: config.width,
        tol: config.tol,
        max_levels: config.max_levels,
        max_evals_per_probe: config.max_evals,
        probe_pairs: config.probe_pairs,
    };
    let st = t.run("stabilize", || stabilize(&rho0, eps1, &opts))?;
    t.record("stabilize", st.movement, Some(st.final_stats.delta));

    let un = t.run("unitarize", || {
        let residual = gram_residual(&st.map, config.probe_pairs)?;
        let formal = UnitarizeBounds::from_eps2(8.0 * eps1);
        let bounds = if formal.eps3 < 0.5 && residual <= formal.eps3 {
            formal
        } else {
            UnitarizeBounds::from_residual(residual * (1.0 + 1e-9) + 1e-300)
        };
        unitarize(&st.map, config.width, bounds, config.probe_pairs)
    })?;
    t.record(
        "unitarize",
        un.checks.movement,
        Some(un.checks.gram_residual),
    );

    let pairs = probe_pairs(&shape, seed ^ 0x9, config.probe_pairs);
    let pi_stats = t.run("decompose", || measure(&un.pi, &pairs))?;
    let tol_dec = config.tol.max(50.0 * pi_stats.delta);
    let dec = t.run("decompose", || {
        decompose(&un.pi, config.generators, tol_dec, seed)
    })?;
    let max_commutator = |xs: &[AlgebraElement]| -> crate::Result<f64> {
        let vals = par::try_map(xs, |x| {
            let y = phid.eval(x)?;
            Ok(dec
                .projections
                .iter()
                .map(|p| linalg::op_norm(&linalg::commutator(&y, p)))
                .fold(0.0, f64::max))
        })?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    };
    let unitaries: Vec<AlgebraElement> = pairs
        .iter()
        .flat_map(|(u, v)| [u.clone(), v.clone()])
        .collect();
    let transport = t.run("decompose", || max_commutator(&unitaries))?;
    let ball: Vec<AlgebraElement> = probes
        .iter()
        .take(2 * config.probe_pairs)
        .cloned()
        .collect();
    let transport_ball = t.run("decompose", || max_commutator(&ball))?;
    t.record("decompose", 0.0, Some(pi_stats.delta));
    let commutator_bound = budget.map(|b| 2.0 * (b.eps4 + b.eps2) + pi_stats.mc_value);
    let commutator_ball_bound =
        budget.map(|b| 8.0 * (b.eps4 + b.eps2) + 8.0 * b.eps1 + pi_stats.mc_value);

    let verify_tol = (1e-6f64).max(10.0 * pi_stats.delta);
    let block_units = t.run("lift", || {
        let idx: Vec<usize> = (0..dec.bases.len()).collect();
        par::try_map(&idx, |&k| {
            let b = &dec.bases[k];
            let copts = correction_options(config, 0x100 + k as u64);
            match config.path {
                LiftPath::Farah => {
                    let phik = phid.sandwich(b.adjoint(), b.clone(), format!("block{k}"));
                    Ok(matrix_unit_correction(&phik, &copts)?.system.units)
                }
                LiftPath::Stone => stone_block(&un.pi, b, &phid, &shape, verify_tol, &copts),
            }
        })
    })?;
    let units = assemble(&shape, n, &dec.bases, &block_units);
    let assembled = MatrixUnitSystem::from_units(&shape, n, units);
    let psi_prime = assembled.to_map("assembled");
    let m_lift = t.run("lift", || psi_prime.sup_distance(&phid, &probes))?;
    t.record("lift", m_lift, Some(assembled.residuals.max()));

    let (psi, _fix) = t.run("inclusion", || {
        near_inclusion_fix(&psi_prime, target, &correction_options(config, 0x200))
    })?;
    let m_incl = t.run("inclusion", || psi.sup_distance(&psi_prime, &probes))?;
    let system = t.run("inclusion", || {
        Ok(MatrixUnitSystem::from_units(&shape, n, psi.unit_images()?))
    })?;
    t.record("inclusion", m_incl, Some(system.residuals.max()));

    let final_distance = t.run("final", || psi.sup_distance(phi, &probes))?;
    let chain_sum = m_norm + m_disc + m_lift + m_incl;
    let l_constant = match config.l {
        Some(l) => l,
        None => {
            default_l(eps, config.farah_constant).map_err(|e| PipelineAbort::new("final", e))?
        }
    };
    let distance_bound = l_constant * eps.sqrt() + 1e-8;
    let triangle_ok = final_distance <= chain_sum + 1e-8;
    let ratio = |d: f64| if eps > 0.0 { final_distance / d } else { 0.0 };
    let report = PipelineReport {
        shape: shape.label(),
        n,
        seed,
        path: config.path,
        input_defect: input,
        eps,
        budget,
        certified: st.certified(),
        stages: t.completed.clone(),
        level_trace: st.trace.clone(),
        stop_reason: st.stop,
        unitarize: un.checks.clone(),
        block_dims: dec.dims.clone(),
        decomposition_residual: dec.commutation_residual,
        commutator_transport: transport,
        commutator_bound,
        commutator_transport_ball: transport_ball,
        commutator_ball_bound,
        multiplicities: system.multiplicities.clone(),
        padding: system.padding,
        relation_residual: system.residuals.max(),
        final_distance,
        chain_sum,
        triangle_ok,
        l_constant,
        distance_bound,
        ratio_sqrt: ratio(eps.sqrt()),
        ratio_linear: ratio(eps),
        passed: triangle_ok && final_distance <= distance_bound && system.residuals.max() < 1e-9,
    };
    Ok(PipelineOutput {
        psi,
        system,
        report,
        timings: t.timings,
    })
}

/// `f^b_{ij} = Σ_k B_k f^{k,b}_{ij} B_k*`.
fn assemble(
    shape: &AlgebraShape,
    n: usize,
    bases: &[CMat],
    block_units: &[Vec<Vec<CMat>>],
) -> Vec<Vec<CMat>> {
    shape
        .blocks()
        .iter()
        .enumerate()
        .map(|(b, &nb)| {
            (0..nb * nb)
                .map(|u| {
                    let mut f = linalg::zeros(n);
                    for (basis, units) in bases.iter().zip(block_units) {
                        f += basis * &units[b][u] * basis.adjoint();
                    }
                    f
                })
                .collect()
        })
        .collect()
}

/// Transposition `1 − e_{11} − e_{ii} + e_{1i} + e_{i1}` in block `b`.
fn transposition(shape: &AlgebraShape, b: usize, i: usize) -> AlgebraElement {
    let one = AlgebraElement::identity(shape);
    let e = |r, c| AlgebraElement::matrix_unit(shape, b, r, c);
    &(&(&(&one - &e(0, 0)) - &e(i, i)) + &e(0, i)) + &e(i, 0)
}

/// Matrix units of one irreducible block lifted from `π` through Stone
/// generators, then snapped by the matrix-unit correction.
fn stone_block(
    pi: &GroupMap,
    basis: &CMat,
    phid: &ApproxMap,
    shape: &AlgebraShape,
    verify_tol: f64,
    copts: &CorrectionOptions,
) -> crate::Result<Vec<Vec<CMat>>> {
    let d = basis.ncols();
    let unit = basis.adjoint() * phid.eval(&AlgebraElement::identity(shape))? * basis;
    if unit.trace().re < 0.5 * d as f64 {
        // the block carries the trivial representation added on 1 − φ'(1)
        return Ok(shape
            .blocks()
            .iter()
            .map(|&nb| vec![linalg::zeros(d); nb * nb])
            .collect());
    }
    let pi_c = pi.clone();
    let (b, b_star) = (basis.clone(), basis.adjoint());
    let restricted = ApproxMap::new(shape, d, "pi_block", pi.seed(), move |u| {
        Ok(linalg::polar_unitary(&(&b_star * pi_c.eval(u)? * &b)))
    });
    let pik = GroupMap::from_map(&restricted, pi.seed());
    let mut images = Vec::new();
    for (c, &nc) in shape.blocks().iter().enumerate() {
        let p0 = lift_projection(
            &pik,
            &AlgebraElement::matrix_unit(shape, c, 0, 0),
            verify_tol,
        )?;
        let mut ws = vec![p0.clone()];
        for i in 1..nc {
            let s = stone_generator(&pik, &transposition(shape, c, i), verify_tol)?.generator;
            ws.push(s * &p0);
        }
        images.push(
            (0..nc * nc)
                .map(|k| &ws[k / nc] * ws[k % nc].adjoint())
                .collect(),
        );
    }
    let lifted = ApproxMap::from_unit_images(shape, d, "stone", images);
    Ok(matrix_unit_correction(&lifted, copts)?.system.units)
}
