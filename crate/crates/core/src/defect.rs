//! Defect functionals of approximate *-homomorphisms and the isometry
//! diagnostics for maps out of a full matrix algebra.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraElement, AlgebraShape, HaarSampler};
use crate::error::{Result, UlamError};
use crate::linalg::{self, CMat, HermEig, C64};
use crate::par;

pub type Evaluator = Arc<dyn Fn(&AlgebraElement) -> Result<CMat> + Send + Sync>;

/// A deterministic, possibly nonlinear map `F → M_N`.
#[derive(Clone)]
pub struct ApproxMap {
    domain: AlgebraShape,
    codomain: usize,
    eval: Evaluator,
    provenance: String,
    seed: u64,
}

impl fmt::Debug for ApproxMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ApproxMap")
            .field("domain", &self.domain.blocks())
            .field("codomain", &self.codomain)
            .field("provenance", &self.provenance)
            .field("seed", &self.seed)
            .finish()
    }
}

impl ApproxMap {
    pub fn new(
        domain: &AlgebraShape,
        codomain: usize,
        provenance: impl Into<String>,
        seed: u64,
        eval: impl Fn(&AlgebraElement) -> Result<CMat> + Send + Sync + 'static,
    ) -> Self {
        ApproxMap {
            domain: domain.clone(),
            codomain,
            eval: Arc::new(eval),
            provenance: provenance.into(),
            seed,
        }
    }

    /// Linear map `x ↦ Σ x^b_{ij} f^b_{ij}` from images of matrix units.
    pub fn from_unit_images(
        domain: &AlgebraShape,
        codomain: usize,
        provenance: impl Into<String>,
        images: Vec<Vec<CMat>>,
    ) -> Self {
        let images = Arc::new(images);
        let shape = domain.clone();
        ApproxMap::new(domain, codomain, provenance, 0, move |x| {
            let mut out = linalg::zeros(codomain);
            for (b, &n) in shape.blocks().iter().enumerate() {
                for i in 0..n {
                    for j in 0..n {
                        let c = x.entry(b, i, j);
                        if c != linalg::ZERO {
                            out += &images[b][i * n + j] * c;
                        }
                    }
                }
            }
            Ok(out)
        })
    }

    pub fn domain(&self) -> &AlgebraShape {
        &self.domain
    }

    pub fn codomain(&self) -> usize {
        self.codomain
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_provenance(mut self, p: impl Into<String>) -> Self {
        self.provenance = p.into();
        self
    }

    pub fn eval(&self, x: &AlgebraElement) -> Result<CMat> {
        if x.shape() != &self.domain {
            return Err(UlamError::ShapeMismatch {
                expected: self.domain.blocks().to_vec(),
                found: x.shape().blocks().to_vec(),
            });
        }
        let out = (self.eval)(x)?;
        if out.nrows() != self.codomain || out.ncols() != self.codomain {
            return Err(UlamError::DimensionMismatch {
                expected: self.codomain,
                found: out.nrows(),
            });
        }
        Ok(out)
    }

    /// Images of every matrix unit, grouped per block in row-major order.
    pub fn unit_images(&self) -> Result<Vec<Vec<CMat>>> {
        let shape = self.domain.clone();
        shape
            .blocks()
            .iter()
            .enumerate()
            .map(|(b, &n)| {
                (0..n * n)
                    .map(|k| self.eval(&AlgebraElement::matrix_unit(&shape, b, k / n, k % n)))
                    .collect()
            })
            .collect()
    }

    /// `x ↦ c·φ(x)`.
    pub fn scaled(&self, c: f64) -> ApproxMap {
        let inner = self.clone();
        ApproxMap::new(
            &self.domain,
            self.codomain,
            format!("{}·{}", c, self.provenance),
            self.seed,
            move |x| Ok(linalg::scale(&inner.eval(x)?, c)),
        )
    }

    /// `x ↦ A φ(x) B`; output dimension taken from `A`.
    pub fn sandwich(&self, left: CMat, right: CMat, provenance: impl Into<String>) -> ApproxMap {
        let inner = self.clone();
        let dim = left.nrows();
        ApproxMap::new(&self.domain, dim, provenance, self.seed, move |x| {
            Ok(&left * inner.eval(x)? * &right)
        })
    }

    /// `sup ‖φ(x) − ψ(x)‖` over the given probes.
    pub fn sup_distance(&self, other: &ApproxMap, probes: &[AlgebraElement]) -> Result<f64> {
        let d = par::try_map(probes, |x| {
            Ok(linalg::op_norm(&(self.eval(x)? - other.eval(x)?)))
        })?;
        Ok(d.into_iter().fold(0.0, f64::max))
    }

    /// `sup ‖φ(x)‖` over the given probes.
    pub fn sup_norm(&self, probes: &[AlgebraElement]) -> Result<f64> {
        let d = par::try_map(probes, |x| Ok(linalg::op_norm(&self.eval(x)?)))?;
        Ok(d.into_iter().fold(0.0, f64::max))
    }
}

/// Deterministic probes always included: `0`, `1`, matrix units and
/// norm-one Hermitian combinations of them. Large blocks contribute only
/// their first row, first column and diagonal.
pub fn deterministic_probes(shape: &AlgebraShape) -> Vec<AlgebraElement> {
    let mut out = vec![AlgebraElement::zero(shape), AlgebraElement::identity(shape)];
    for (b, &n) in shape.blocks().iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                if n <= 3 || i == 0 || j == 0 || i == j {
                    out.push(AlgebraElement::matrix_unit(shape, b, i, j));
                }
            }
        }
        for j in 1..n.min(3) {
            let e = AlgebraElement::matrix_unit(shape, b, 0, j);
            let f = AlgebraElement::matrix_unit(shape, b, j, 0);
            out.push(&e + &f);
            out.push((&e - &f).scale(linalg::I));
        }
    }
    out
}

/// Deterministic probes followed by `count` seeded random contractions.
pub fn unit_ball_probes(shape: &AlgebraShape, count: usize, seed: u64) -> Vec<AlgebraElement> {
    let sampler = HaarSampler::new(shape, seed);
    let mut out = deterministic_probes(shape);
    out.extend((0..count as u64).map(|k| sampler.random_contraction_at(k)));
    out
}

/// `1` followed by `count` seeded Haar unitaries.
pub fn unitary_probes(shape: &AlgebraShape, count: usize, seed: u64) -> Vec<AlgebraElement> {
    let sampler = HaarSampler::new(shape, seed);
    let mut out = vec![AlgebraElement::identity(shape)];
    out.extend((0..count as u64).map(|k| sampler.haar_unitary_at(k)));
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub add_defect: f64,
    pub scalar_defect: f64,
    pub mult_defect: f64,
    pub adj_defect: f64,
    pub norm_excess: f64,
    pub epsilon: f64,
    pub sample_count: usize,
}

impl DefectReport {
    fn merge(self, o: DefectReport) -> DefectReport {
        let mut r = DefectReport {
            add_defect: self.add_defect.max(o.add_defect),
            scalar_defect: self.scalar_defect.max(o.scalar_defect),
            mult_defect: self.mult_defect.max(o.mult_defect),
            adj_defect: self.adj_defect.max(o.adj_defect),
            norm_excess: self.norm_excess.max(o.norm_excess),
            epsilon: 0.0,
            sample_count: self.sample_count + o.sample_count,
        };
        r.epsilon = r.fields().into_iter().fold(0.0, f64::max);
        r
    }

    pub fn fields(&self) -> [f64; 5] {
        [
            self.add_defect,
            self.scalar_defect,
            self.mult_defect,
            self.adj_defect,
            self.norm_excess,
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("flat struct serializes")
    }
}

/// The five defects at a single probe triple `(x, y, λ)`.
pub fn defect_at(
    map: &ApproxMap,
    x: &AlgebraElement,
    y: &AlgebraElement,
    lambda: C64,
) -> Result<DefectReport> {
    let fx = map.eval(x)?;
    let fy = map.eval(y)?;
    let add = linalg::op_norm(&(map.eval(&(x + y))? - &fx - &fy));
    let scalar = linalg::op_norm(&(map.eval(&x.scale(lambda))? - &fx * lambda));
    let mult = linalg::op_norm(&(map.eval(&(x * y))? - &fx * &fy));
    let adj = linalg::op_norm(&(map.eval(&x.adjoint())? - fx.adjoint()));
    let excess = (linalg::op_norm(&fx).max(linalg::op_norm(&fy)) - 1.0).max(0.0);
    Ok(DefectReport {
        add_defect: add,
        scalar_defect: scalar,
        mult_defect: mult,
        adj_defect: adj,
        norm_excess: excess,
        epsilon: add.max(scalar).max(mult).max(adj).max(excess),
        sample_count: 1,
    })
}

/// Sampled suprema of the five defects, hence lower bounds on the true ones.
///
/// Probe `k` depends only on the sampler seed and `k`, so a larger sample
/// count always extends the probe set.
pub fn estimate_defect(
    map: &ApproxMap,
    samples: usize,
    sampler: &HaarSampler,
) -> Result<DefectReport> {
    if samples == 0 {
        return Err(UlamError::precondition("samples must be at least 1"));
    }
    let shape = map.domain().clone();
    let det = deterministic_probes(&shape);
    let lambdas = [
        Complex::new(0.0, 1.0),
        Complex::new(-1.0, 0.0),
        Complex::from_polar(0.5, std::f64::consts::FRAC_PI_3),
    ];
    let mut triples: Vec<(AlgebraElement, AlgebraElement, C64)> = Vec::new();
    for (i, x) in det.iter().enumerate() {
        for (j, y) in det.iter().enumerate() {
            triples.push((x.clone(), y.clone(), lambdas[(i + j) % 3]));
        }
    }
    let xs = sampler.fork(1);
    let ys = sampler.fork(2);
    let ls = sampler.fork(3);
    for k in 0..samples as u64 {
        triples.push((
            xs.random_contraction_at(k),
            ys.random_contraction_at(k),
            ls.random_scalar_at(k),
        ));
    }
    let reports = par::try_map(&triples, |(x, y, l)| defect_at(map, x, y, *l))?;
    Ok(reports
        .into_iter()
        .fold(DefectReport::default(), DefectReport::merge))
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalizeReport {
    pub input: DefectReport,
    pub output: DefectReport,
    pub estimated_norm: f64,
    pub unit_movement: f64,
    pub movement: f64,
    pub unchanged: bool,
}

/// Rescale to `‖φ‖ ≤ 1` and replace `φ(1)` by its spectral rounding.
pub fn normalize(
    map: &ApproxMap,
    samples: usize,
    sampler: &HaarSampler,
) -> Result<(ApproxMap, NormalizeReport)> {
    let input = estimate_defect(map, samples, sampler)?;
    if input.epsilon >= 0.1 {
        return Err(UlamError::precondition(format!(
            "normalize needs epsilon < 0.1, estimated {}",
            input.epsilon
        )));
    }
    let shape = map.domain().clone();
    let probes = unit_ball_probes(&shape, samples, sampler.seed() ^ 0x5eed);
    let norm = map.sup_norm(&probes)?;
    let factor = if norm > 1.0 + 1e-12 { norm } else { 1.0 };

    let unit = map.eval(&AlgebraElement::identity(&shape))?;
    let eig = HermEig::new(&unit);
    if let Some(&bad) = eig.values.iter().find(|&&v| (0.25..=0.75).contains(&v)) {
        return Err(UlamError::NoSpectralGap {
            eigenvalue: bad,
            low: 0.25,
            high: 0.75,
        });
    }
    let (proj, _) = linalg::spectral_projection(&unit, 0.5);
    let unit_movement = linalg::op_norm(&(&proj - &unit));

    if factor == 1.0 && unit_movement <= 1e-12 {
        let report = NormalizeReport {
            input,
            output: input,
            estimated_norm: norm,
            unit_movement,
            movement: 0.0,
            unchanged: true,
        };
        return Ok((map.clone(), report));
    }

    let inner = map.clone();
    let out = ApproxMap::new(
        &shape,
        map.codomain(),
        format!("normalize({})", map.provenance()),
        map.seed(),
        move |x| {
            if x.is_identity() {
                Ok(proj.clone())
            } else {
                Ok(linalg::scale(&inner.eval(x)?, 1.0 / factor))
            }
        },
    );
    let output = estimate_defect(&out, samples, sampler)?;
    let movement = out.sup_distance(map, &probes)?;
    Ok((
        out,
        NormalizeReport {
            input,
            output,
            estimated_norm: norm,
            unit_movement,
            movement,
            unchanged: false,
        },
    ))
}

#[derive(Clone, Debug)]
pub struct NonzeroWitness {
    pub nonzero: bool,
    pub best_norm: f64,
    pub witness: Option<AlgebraElement>,
}

/// Is there a norm-one probe `a` with `‖φ(a)‖ ≥ 1 − eps`?
pub fn is_eps_nonzero(
    map: &ApproxMap,
    eps: f64,
    probes: &[AlgebraElement],
) -> Result<NonzeroWitness> {
    let mut best = NonzeroWitness {
        nonzero: false,
        best_norm: 0.0,
        witness: None,
    };
    for a in probes {
        let n = a.norm();
        if n == 0.0 {
            continue;
        }
        let a = a.scale_real(1.0 / n);
        let v = linalg::op_norm(&map.eval(&a)?);
        if v > best.best_norm || best.witness.is_none() {
            best.best_norm = v;
            best.witness = Some(a);
        }
    }
    best.nonzero = best.witness.is_some() && best.best_norm >= 1.0 - eps;
    if !best.nonzero {
        best.witness = None;
    }
    Ok(best)
}

/// `s^{(n)}(x)` with `s(a) = a* a`.
pub fn s_iterate(x: &AlgebraElement, n: usize) -> AlgebraElement {
    let mut a = x.clone();
    for _ in 0..n {
        a = &a.adjoint() * &a;
    }
    a
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowCheck {
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InductionWindow {
    pub k_min: usize,
    pub k_max: usize,
    pub checks: Vec<WindowCheck>,
}

impl InductionWindow {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Integer window `2 ≤ k ≤ 1/√ε − 2` on which
/// `(1 − k√ε)² + 2ε ≤ 1 − (k+1)√ε`, verified at every integer.
pub fn induction_window(eps: f64) -> Result<InductionWindow> {
    if !(eps > 0.0 && eps < 0.01) {
        return Err(UlamError::HypothesisViolated(format!(
            "induction window needs 0 < eps < 1/100, got {eps}"
        )));
    }
    let r = eps.sqrt();
    let k_max = ((1.0 / r) - 2.0 + 1e-9).floor() as usize;
    let checks = (2..=k_max)
        .map(|k| {
            let kf = k as f64;
            let lhs = (1.0 - kf * r).powi(2) + 2.0 * eps;
            let rhs = 1.0 - (kf + 1.0) * r;
            WindowCheck {
                k,
                lhs,
                rhs,
                holds: lhs <= rhs,
            }
        })
        .collect();
    Ok(InductionWindow {
        k_min: 2,
        k_max,
        checks,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DescentRecord {
    /// `‖φ(s^{(k)}(x))‖` for `k = 0, 1, …`.
    pub iterate_norms: Vec<f64>,
    pub steps: usize,
    pub rank_one_image_norm: f64,
    /// Smallest rank `j` of a spectral projection with `‖φ(p)‖ ≥ 1/2`.
    pub minimal_rank: Option<usize>,
    pub split_norms: Option<(f64, f64, f64)>,
    /// `‖φ(p)‖ > ‖φ(q₁)‖ + ‖φ(q₂)‖ + ε`: additivity is contradicted.
    pub contradiction: bool,
}

#[derive(Clone, Debug, Serialize)]
pub enum IsometryVerdict {
    NotNonzero {
        best_norm: f64,
    },
    Isometric {
        min_norm: f64,
        probes: usize,
    },
    Violation {
        witness_norm: f64,
        descent: DescentRecord,
    },
}

/// Probe search for norm-one `x` with `‖φ(x)‖ < 1 − 2√ε`, replaying the
/// s-iteration descent when one is found.
pub fn isometry_diagnostic(
    map: &ApproxMap,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<IsometryVerdict> {
    let shape = map.domain();
    if shape.block_count() != 1 {
        return Err(UlamError::precondition(
            "isometry diagnostic needs a single block M_l",
        ));
    }
    if !(eps > 0.0 && eps < 0.01) {
        return Err(UlamError::HypothesisViolated(format!(
            "eps < 1/100 required, got {eps}"
        )));
    }
    let t = 2.0 * eps.sqrt();
    let sampler = HaarSampler::new(shape, seed);
    let mut probes = deterministic_probes(shape);
    probes.extend((0..trials as u64 / 2).map(|k| sampler.haar_unitary_at(k)));
    probes.extend(
        (0..(trials - trials / 2) as u64).map(|k| sampler.fork(7).random_contraction_at(k)),
    );
    let probes: Vec<AlgebraElement> = probes
        .into_iter()
        .filter(|a| a.norm() > 1e-12)
        .map(|a| {
            let n = a.norm();
            a.scale_real(1.0 / n)
        })
        .collect();

    let nz = is_eps_nonzero(map, t, &probes)?;
    if !nz.nonzero {
        return Ok(IsometryVerdict::NotNonzero {
            best_norm: nz.best_norm,
        });
    }
    let norms = par::try_map(&probes, |a| Ok(linalg::op_norm(&map.eval(a)?)))?;
    let (idx, &min_norm) = norms
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty probes");
    if min_norm >= 1.0 - t {
        return Ok(IsometryVerdict::Isometric {
            min_norm,
            probes: probes.len(),
        });
    }
    let descent = replay_descent(map, &probes[idx], eps)?;
    Ok(IsometryVerdict::Violation {
        witness_norm: min_norm,
        descent,
    })
}

fn replay_descent(map: &ApproxMap, x: &AlgebraElement, eps: f64) -> Result<DescentRecord> {
    let t = 2.0 * eps.sqrt();
    let window = induction_window(eps)?;
    let mut iterate_norms = vec![linalg::op_norm(&map.eval(x)?)];
    let mut a = x.clone();
    let mut steps = 0;
    while steps < window.k_max && *iterate_norms.last().unwrap() > t {
        a = s_iterate(&a, 1);
        // keep ‖a‖ = 1 against round-off
        let n = a.norm();
        a = a.scale_real(1.0 / n);
        steps += 1;
        iterate_norms.push(linalg::op_norm(&map.eval(&a)?));
    }
    let shape = x.shape().clone();
    let eig = HermEig::new(&linalg::hermitian_part(a.block(0)));
    let n = eig.values.len();
    // spectral projections onto the top j eigenvectors
    let proj = |j: usize| -> AlgebraElement {
        let v = eig.vectors.columns(n - j, j).into_owned();
        AlgebraElement::from_blocks(&shape, vec![linalg::projector(&v)]).expect("same shape")
    };
    let rank_one_image_norm = linalg::op_norm(&map.eval(&proj(1))?);
    let mut minimal_rank = None;
    for j in 1..=n {
        if linalg::op_norm(&map.eval(&proj(j))?) >= 0.5 {
            minimal_rank = Some(j);
            break;
        }
    }
    let mut split_norms = None;
    let mut contradiction = false;
    if let Some(j) = minimal_rank.filter(|&j| j > 1) {
        let top = &eig.vectors;
        let q1v = top.columns(n - j, j / 2).into_owned();
        let q2v = top.columns(n - j + j / 2, j - j / 2).into_owned();
        let q1 = AlgebraElement::from_blocks(&shape, vec![linalg::projector(&q1v)])?;
        let q2 = AlgebraElement::from_blocks(&shape, vec![linalg::projector(&q2v)])?;
        let p = linalg::op_norm(&map.eval(&proj(j))?);
        let a1 = linalg::op_norm(&map.eval(&q1)?);
        let a2 = linalg::op_norm(&map.eval(&q2)?);
        contradiction = p > a1 + a2 + eps;
        split_norms = Some((p, a1, a2));
    }
    Ok(DescentRecord {
        iterate_norms,
        steps,
        rank_one_image_norm,
        minimal_rank,
        split_norms,
        contradiction,
    })
}
