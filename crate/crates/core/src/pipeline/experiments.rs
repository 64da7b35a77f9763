use serde::Serialize;

use crate::algebra::{mix, AlgebraElement, AlgebraShape, HaarSampler};
use crate::clock::Stopwatch;
use crate::defect::{unit_ball_probes, ApproxMap};
use crate::error::{Result, UlamError};
use crate::linalg::{self, CMat};
use crate::par;
use crate::perturb::{exact_homomorphism, perturb_additive, EmbeddingSpec};
use crate::synthesis::Subalgebra;

use super::config::PipelineConfig;
use super::run::{run_pipeline, run_pipeline_into, PipelineAbort, PipelineOutput, PipelineReport};

pub const SWEEP_HEADER: &str =
    "experiment_id,shape,N,eta,eps_measured,final_distance,ratio_sqrt,ratio_linear,seconds";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub experiment_id: String,
    pub shape: String,
    pub n: usize,
    pub eta: f64,
    pub eps_measured: f64,
    pub final_distance: f64,
    /// Distance over `√η`.
    pub ratio_sqrt: f64,
    pub ratio_linear: f64,
    pub seconds: f64,
    /// `‖ψ − ψ₀‖` against the unperturbed homomorphism.
    pub truth_distance: f64,
    pub relation_residual: f64,
    pub passed: bool,
}

impl RecoveryRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{:.3}",
            self.experiment_id,
            self.shape,
            self.n,
            self.eta,
            self.eps_measured,
            self.final_distance,
            self.ratio_sqrt,
            self.ratio_linear,
            self.seconds
        )
    }
}

pub fn sweep_csv(rows: &[RecoveryRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryInstance {
    pub shape: String,
    pub multiplicities: Vec<usize>,
    pub padding: usize,
    pub eta: f64,
    pub seed: u64,
}

/// Recovery of a Haar-conjugated exact map after an additive perturbation of
/// size `eta`. Passes when `ψ` is exact, `‖ψ − φ‖ ≤ 50η` and `ψ` lands within
/// `‖ψ − φ‖ + η` of the ground truth.
pub fn recover_instance(
    id: &str,
    inst: &RecoveryInstance,
    config: &PipelineConfig,
) -> std::result::Result<(RecoveryRow, PipelineOutput), PipelineAbort> {
    let start = Stopwatch::start();
    let setup = || -> Result<(ApproxMap, ApproxMap)> {
        let shape = AlgebraShape::parse(&inst.shape)?;
        let spec = EmbeddingSpec::haar(
            &shape,
            inst.multiplicities.clone(),
            inst.padding,
            mix(inst.seed ^ 0x5eed),
        )?;
        let psi0 = exact_homomorphism(&spec)?;
        let phi = perturb_additive(&psi0, inst.eta, mix(inst.seed ^ 0xadd))?;
        Ok((psi0, phi))
    };
    let (psi0, phi) = setup().map_err(|e| PipelineAbort::new("setup", e))?;
    let cfg = PipelineConfig {
        seed: inst.seed,
        ..config.clone()
    };
    let out = run_pipeline(&phi, &cfg)?;
    let probes = unit_ball_probes(phi.domain(), cfg.probes, mix(inst.seed ^ 0x7e57));
    let truth = out
        .psi
        .sup_distance(&psi0, &probes)
        .map_err(|e| PipelineAbort::new("truth", e))?;
    let r = &out.report;
    let linear_ok = if inst.eta > 0.0 {
        r.final_distance <= 50.0 * inst.eta + 1e-10
    } else {
        r.final_distance < 1e-8
    };
    let row = RecoveryRow {
        experiment_id: id.into(),
        shape: r.shape.clone(),
        n: r.n,
        eta: inst.eta,
        eps_measured: r.eps,
        final_distance: r.final_distance,
        ratio_sqrt: if inst.eta > 0.0 {
            r.final_distance / inst.eta.sqrt()
        } else {
            0.0
        },
        ratio_linear: if inst.eta > 0.0 {
            r.final_distance / inst.eta
        } else {
            0.0
        },
        seconds: start.seconds(),
        truth_distance: truth,
        relation_residual: r.relation_residual,
        passed: linear_ok
            && r.relation_residual < 1e-9
            && r.triangle_ok
            && truth <= r.final_distance + inst.eta + 1e-8,
    };
    Ok((row, out))
}

/// Shapes and multiplicities of the standard sweep.
pub fn sweep_shapes() -> Vec<(&'static str, Vec<usize>)> {
    vec![
        ("2", vec![2]),
        ("3", vec![2]),
        ("1,2", vec![2, 1]),
        ("2,2", vec![1, 2]),
    ]
}

pub fn sweep_instances(etas: &[f64], repeats: usize, seed: u64) -> Vec<RecoveryInstance> {
    let mut out = Vec::new();
    for (shape, mult) in sweep_shapes() {
        for &eta in etas {
            for r in 0..repeats {
                let k = out.len() as u64;
                out.push(RecoveryInstance {
                    shape: shape.into(),
                    multiplicities: mult.clone(),
                    padding: 0,
                    eta,
                    seed: mix(seed.wrapping_add(k)) ^ r as u64,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub rows: Vec<RecoveryRow>,
    pub max_ratio_linear: f64,
    pub max_ratio_sqrt: f64,
    pub passed: bool,
}

/// Runs independent instances concurrently; rows come back sorted by id.
pub fn sweep(
    etas: &[f64],
    config: &PipelineConfig,
) -> std::result::Result<SweepReport, PipelineAbort> {
    let instances = sweep_instances(etas, config.repeats, config.seed);
    let width = instances.len().saturating_sub(1).to_string().len().max(2);
    let indexed: Vec<(String, RecoveryInstance)> = instances
        .into_iter()
        .enumerate()
        .map(|(k, inst)| (format!("E{k:0width$}"), inst))
        .collect();
    let results = par::map(&indexed, |(id, inst)| {
        recover_instance(id, inst, config).map(|(row, _)| row)
    });
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    rows.sort_by(|a, b| a.experiment_id.cmp(&b.experiment_id));
    Ok(SweepReport {
        max_ratio_linear: rows.iter().map(|r| r.ratio_linear).fold(0.0, f64::max),
        max_ratio_sqrt: rows.iter().map(|r| r.ratio_sqrt).fold(0.0, f64::max),
        passed: rows.iter().all(|r| r.passed),
        rows,
    })
}

/// Unitary `exp(iθh)` with `‖u − 1‖ = eta` exactly.
pub fn unitary_at_distance(n: usize, eta: f64, seed: u64) -> CMat {
    if eta == 0.0 {
        return linalg::identity(n);
    }
    let mut s = HaarSampler::new(&AlgebraShape::full(n).expect("n > 0"), seed);
    let h = s.random_hermitian(n);
    let h = linalg::scale(&h, 1.0 / linalg::op_norm(&h));
    linalg::exp_i_hermitian(&h, 2.0 * (eta / 2.0).asin())
}

#[derive(Clone, Debug, Serialize)]
pub struct KKEstimate {
    pub lower: f64,
    pub upper: f64,
    /// Probe index realizing the lower bound, in the union of both balls.
    pub lower_witness: usize,
    pub upper_witness: usize,
    /// `2‖u − 1‖`, valid for every element of the unit ball.
    pub conjugation_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct KKReport {
    pub eta: f64,
    pub estimate: KKEstimate,
    /// `sup ‖φ(x) − x‖` for the nearest-point map.
    pub phi_distance: f64,
    pub phi_bound: f64,
    /// `sup ‖ψ(x) − x‖` for the recovered isomorphism.
    pub recovered_distance: f64,
    pub tolerance: f64,
    pub pipeline: PipelineReport,
    pub passed: bool,
}

fn rescaled_to(y: CMat, target: f64) -> CMat {
    let ny = linalg::op_norm(&y);
    if ny <= 1e-300 {
        y
    } else {
        linalg::scale(&y, target / ny)
    }
}

/// One-sided probe estimate for `x` in the ball of `from`, measured against
/// the ball of `to`: lower `‖x − E x‖_F/√N`, upper the best of the
/// candidates `E x` (clipped to the ball), `E x` rescaled to `‖x‖`, and `w x w*`.
fn side(x: &CMat, to: &Subalgebra, w: &CMat) -> Result<(f64, f64)> {
    let n = x.nrows() as f64;
    let ex = to.expectation(x)?;
    let lower = linalg::frobenius(&(x - &ex)) / n.sqrt();
    let ne = linalg::op_norm(&ex);
    let clipped = if ne > 1.0 {
        linalg::scale(&ex, 1.0 / ne)
    } else {
        ex.clone()
    };
    let candidates = [
        clipped,
        rescaled_to(ex, linalg::op_norm(x)),
        w * x * w.adjoint(),
    ];
    let upper = candidates
        .iter()
        .map(|y| linalg::op_norm(&(x - y)))
        .fold(f64::INFINITY, f64::min);
    Ok((lower, upper.max(lower)))
}

pub fn kk_estimate(
    a1: &Subalgebra,
    a2: &Subalgebra,
    u: &CMat,
    probes: &[AlgebraElement],
) -> Result<KKEstimate> {
    let u_star = u.adjoint();
    let mut xs = Vec::new();
    for p in probes {
        xs.push((a1.embedding().eval(p)?, true));
    }
    for p in probes {
        xs.push((a2.embedding().eval(p)?, false));
    }
    let sides = par::try_map(&xs, |(x, forward)| {
        if *forward {
            side(x, a2, u)
        } else {
            side(x, a1, &u_star)
        }
    })?;
    let (mut lower, mut upper, mut lw, mut uw) = (0.0, 0.0, 0, 0);
    for (k, &(l, up)) in sides.iter().enumerate() {
        if l > lower {
            lower = l;
            lw = k;
        }
        if up > upper {
            upper = up;
            uw = k;
        }
    }
    Ok(KKEstimate {
        lower,
        upper,
        lower_witness: lw,
        upper_witness: uw,
        conjugation_bound: 2.0 * linalg::op_norm(&(u - linalg::identity(u.nrows()))),
    })
}

/// `A₁ = β(F)`, `A₂ = u A₁ u*` with `‖u − 1‖ = eta`; the nearest-point map is
/// fed to the pipeline with `A₂` as target and the result compared with the
/// identity of `A₁`.
pub fn kk_experiment(
    spec: &EmbeddingSpec,
    eta: f64,
    config: &PipelineConfig,
) -> std::result::Result<KKReport, PipelineAbort> {
    let setup = || -> Result<_> {
        if !(0.0..0.1).contains(&eta) {
            return Err(UlamError::precondition(format!(
                "eta must lie in [0, 1/10), got {eta}"
            )));
        }
        let n = spec.target_dim();
        let u = unitary_at_distance(n, eta, mix(config.seed ^ 0x4b4b));
        let a1 = Subalgebra::new(spec.clone())?;
        let a2 = Subalgebra::new(spec.clone().with_unitary(&u * &spec.unitary)?)?;
        let probes = unit_ball_probes(&spec.shape, config.probes, mix(config.seed ^ 0x4b));
        let estimate = kk_estimate(&a1, &a2, &u, &probes)?;
        let beta = a1.embedding().clone();
        let target = a2.clone();
        let phi = ApproxMap::new(&spec.shape, n, "nearest_point", config.seed, move |x| {
            let y = beta.eval(x)?;
            let norm = linalg::op_norm(&y);
            Ok(rescaled_to(target.expectation(&y)?, norm))
        });
        let phi_distance = phi.sup_distance(a1.embedding(), &probes)?;
        Ok((a1, a2, probes, estimate, phi, phi_distance))
    };
    let (a1, a2, probes, estimate, phi, phi_distance) =
        setup().map_err(|e| PipelineAbort::new("setup", e))?;
    let out = run_pipeline_into(&phi, &a2, config)?;
    let recovered_distance = out
        .psi
        .sup_distance(a1.embedding(), &probes)
        .map_err(|e| PipelineAbort::new("compare", e))?;
    // ‖x − E x‖ ≤ 2 dist(x, A₂) and the rescaling at most doubles it
    let phi_bound = 4.0 * estimate.upper + 1e-10;
    let passed = estimate.lower <= estimate.upper + 1e-12
        && estimate.upper <= 2.0 * eta + 1e-6
        && phi_distance <= phi_bound
        && recovered_distance <= config.kk_tolerance
        && out.report.relation_residual < 1e-9
        && (eta > 0.0 || (estimate.upper < 1e-10 && recovered_distance < 1e-8));
    Ok(KKReport {
        eta,
        estimate,
        phi_distance,
        phi_bound,
        recovered_distance,
        tolerance: config.kk_tolerance,
        pipeline: out.report,
        passed,
    })
}

/// Unital inclusion `F_k ⊂ F_{k+1}`: `matrix[c][b]` copies of block `b` of
/// `F_k` sit in block `c` of `F_{k+1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Inclusion {
    pub matrix: Vec<Vec<usize>>,
}

impl Inclusion {
    pub fn check(&self, from: &AlgebraShape, to: &AlgebraShape) -> Result<()> {
        if self.matrix.len() != to.block_count()
            || self.matrix.iter().any(|r| r.len() != from.block_count())
        {
            return Err(UlamError::Config(format!(
                "inclusion matrix for {} ⊂ {} must be {}x{}",
                from.label(),
                to.label(),
                to.block_count(),
                from.block_count()
            )));
        }
        for (c, row) in self.matrix.iter().enumerate() {
            let fill: usize = row.iter().zip(from.blocks()).map(|(m, n)| m * n).sum();
            if fill != to.blocks()[c] {
                return Err(UlamError::precondition(format!(
                    "inclusion {} ⊂ {} is not unital in block {c}: {fill} != {}",
                    from.label(),
                    to.label(),
                    to.blocks()[c]
                )));
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &AlgebraElement, to: &AlgebraShape) -> AlgebraElement {
        let blocks = self
            .matrix
            .iter()
            .map(|row| {
                let parts: Vec<CMat> = row
                    .iter()
                    .enumerate()
                    .flat_map(|(b, &m)| std::iter::repeat_n(x.block(b).clone(), m))
                    .collect();
                linalg::direct_sum(&parts)
            })
            .collect();
        AlgebraElement::from_blocks(to, blocks).expect("checked inclusion")
    }
}

/// Chain `"2;4;8"` with optional matrices `"2;2"` or `"1/1;2,1"` (rows split
/// by `/`, entries by `,`). Single-block chains default to `[[n'/n]]`.
pub fn parse_tower(
    chain: &str,
    matrices: Option<&str>,
) -> Result<(Vec<AlgebraShape>, Vec<Inclusion>)> {
    let shapes = chain
        .split(';')
        .map(|s| AlgebraShape::parse(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    let count = shapes.len().saturating_sub(1);
    let incs: Vec<Inclusion> = match matrices {
        Some(text) => {
            let ms: Vec<&str> = text.split(';').collect();
            if ms.len() != count {
                return Err(UlamError::Config(format!(
                    "expected {count} inclusion matrices, got {}",
                    ms.len()
                )));
            }
            ms.iter()
                .map(|m| {
                    let matrix = m
                        .split('/')
                        .map(|row| {
                            row.split(',')
                                .map(|e| {
                                    e.trim().parse().map_err(|_| {
                                        UlamError::Config(format!("bad multiplicity {e:?}"))
                                    })
                                })
                                .collect::<Result<Vec<usize>>>()
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Inclusion { matrix })
                })
                .collect::<Result<_>>()?
        }
        None => shapes
            .windows(2)
            .map(|w| match (w[0].blocks(), w[1].blocks()) {
                ([a], [b]) if b % a == 0 => Ok(Inclusion {
                    matrix: vec![vec![b / a]],
                }),
                _ => Err(UlamError::Config(format!(
                    "no default inclusion {} ⊂ {}; supply tower_matrices",
                    w[0].label(),
                    w[1].label()
                ))),
            })
            .collect::<Result<_>>()?,
    };
    for (w, inc) in shapes.windows(2).zip(&incs) {
        inc.check(&w[0], &w[1])?;
    }
    Ok((shapes, incs))
}

#[derive(Clone, Debug, Serialize)]
pub struct TowerStage {
    pub shape: String,
    pub eps: f64,
    pub final_distance: f64,
    /// `‖ψ_k − φ_k‖ / ε_k`.
    pub ratio: f64,
    pub relation_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TowerReport {
    pub eta: f64,
    pub stages: Vec<TowerStage>,
    pub spread: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Perturbs an exact map on the top algebra and recovers its restriction to
/// every stage of the chain.
pub fn tower_experiment(
    shapes: &[AlgebraShape],
    incs: &[Inclusion],
    eta: f64,
    config: &PipelineConfig,
) -> std::result::Result<TowerReport, PipelineAbort> {
    let setup = || -> Result<Vec<ApproxMap>> {
        if shapes.is_empty() || incs.len() + 1 != shapes.len() {
            return Err(UlamError::Config(
                "tower needs k shapes and k-1 inclusions".into(),
            ));
        }
        for (w, inc) in shapes.windows(2).zip(incs) {
            inc.check(&w[0], &w[1])?;
        }
        let top = shapes.last().expect("non-empty").clone();
        let spec = EmbeddingSpec::haar(
            &top,
            vec![1; top.block_count()],
            0,
            mix(config.seed ^ 0x70e),
        )?;
        let phi_top = perturb_additive(&exact_homomorphism(&spec)?, eta, mix(config.seed ^ 0x70f))?;
        let n = spec.target_dim();
        Ok((0..shapes.len())
            .map(|k| {
                let chain: Vec<(Inclusion, AlgebraShape)> = (k..incs.len())
                    .map(|j| (incs[j].clone(), shapes[j + 1].clone()))
                    .collect();
                let phi = phi_top.clone();
                ApproxMap::new(&shapes[k], n, format!("stage{k}"), config.seed, move |x| {
                    let mut y = x.clone();
                    for (inc, to) in &chain {
                        y = inc.apply(&y, to);
                    }
                    phi.eval(&y)
                })
            })
            .collect())
    };
    let maps = setup().map_err(|e| PipelineAbort::new("setup", e))?;
    let mut stages = Vec::new();
    for phi in &maps {
        let out = run_pipeline(phi, config)?;
        let r = out.report;
        stages.push(TowerStage {
            shape: r.shape.clone(),
            eps: r.eps,
            final_distance: r.final_distance,
            ratio: if r.eps > 1e-12 {
                r.final_distance / r.eps
            } else {
                0.0
            },
            relation_residual: r.relation_residual,
        });
    }
    let (lo, hi) = stages.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| {
        (lo.min(s.ratio), hi.max(s.ratio))
    });
    let spread = if lo > 0.0 && eta > 0.0 { hi / lo } else { 1.0 };
    let exact = stages.iter().all(|s| s.relation_residual < 1e-9);
    let passed = exact
        && if eta == 0.0 {
            stages.iter().all(|s| s.final_distance < 1e-8)
        } else {
            spread <= config.tower_slack
        };
    Ok(TowerReport {
        eta,
        stages,
        spread,
        slack: config.tower_slack,
        passed,
    })
}
