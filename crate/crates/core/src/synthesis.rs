//! Exact *-homomorphisms near approximate ones: matrix-unit correction,
//! intertwining unitaries, and correction into a represented subalgebra.

use serde::Serialize;

use crate::algebra::{AlgebraElement, AlgebraShape, HaarSampler};
use crate::defect::{estimate_defect, unit_ball_probes, ApproxMap};
use crate::error::{Result, UlamError};
use crate::json;
use crate::linalg::{self, CMat, HermEig};
use crate::par;
use crate::perturb::{exact_homomorphism, EmbeddingSpec};

/// Corrected images `f^b_{ij}` of the matrix units, row-major per block.
#[derive(Clone, Debug, Serialize)]
pub struct MatrixUnitSystem {
    pub shape: AlgebraShape,
    pub n: usize,
    #[serde(skip)]
    pub units: Vec<Vec<CMat>>,
    pub multiplicities: Vec<usize>,
    pub padding: usize,
    pub residuals: UnitResiduals,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct UnitResiduals {
    /// `max ‖f^b_{ij} f^c_{kl} − δ_{bc}δ_{jk} f^b_{il}‖`.
    pub relation: f64,
    /// `max ‖(f^b_{ij})* − f^b_{ji}‖`.
    pub adjoint: f64,
    /// Negative part of `1 − Σ f^b_{ii}`.
    pub order: f64,
    /// Per unit: `(block, i, j, max relation residual involving it)`.
    pub per_unit: Vec<(usize, usize, usize, f64)>,
}

impl UnitResiduals {
    pub fn max(&self) -> f64 {
        self.relation.max(self.adjoint).max(self.order)
    }
}

#[derive(Serialize)]
struct UnitJson<'a> {
    block: usize,
    i: usize,
    j: usize,
    residual: f64,
    #[serde(serialize_with = "json::serialize_matrix")]
    matrix: &'a CMat,
}

impl MatrixUnitSystem {
    pub fn from_units(shape: &AlgebraShape, n: usize, units: Vec<Vec<CMat>>) -> Self {
        let multiplicities: Vec<usize> = units
            .iter()
            .map(|b| b[0].trace().re.round().max(0.0) as usize)
            .collect();
        let used: usize = shape
            .blocks()
            .iter()
            .zip(&multiplicities)
            .map(|(a, b)| a * b)
            .sum();
        let residuals = unit_residuals(shape, n, &units);
        MatrixUnitSystem {
            shape: shape.clone(),
            n,
            units,
            multiplicities,
            padding: n.saturating_sub(used),
            residuals,
        }
    }

    pub fn unit(&self, b: usize, i: usize, j: usize) -> &CMat {
        &self.units[b][i * self.shape.blocks()[b] + j]
    }

    pub fn to_map(&self, provenance: impl Into<String>) -> ApproxMap {
        ApproxMap::from_unit_images(&self.shape, self.n, provenance, self.units.clone())
    }

    pub fn to_json(&self) -> String {
        let units: Vec<UnitJson> = self
            .residuals
            .per_unit
            .iter()
            .map(|&(b, i, j, r)| UnitJson {
                block: b,
                i,
                j,
                residual: r,
                matrix: self.unit(b, i, j),
            })
            .collect();
        serde_json::json!({
            "shape": self.shape.blocks(),
            "n": self.n,
            "multiplicities": self.multiplicities,
            "padding": self.padding,
            "relation_residual": self.residuals.relation,
            "adjoint_residual": self.residuals.adjoint,
            "order_residual": self.residuals.order,
            "units": units,
        })
        .to_string()
    }
}

fn unit_residuals(shape: &AlgebraShape, n: usize, units: &[Vec<CMat>]) -> UnitResiduals {
    let idx = shape.matrix_units();
    let get = |(b, i, j): (usize, usize, usize)| &units[b][i * shape.blocks()[b] + j];
    let rows = par::map(&idx, |&(b, i, j)| {
        let f = get((b, i, j));
        let mut rel = 0.0f64;
        for &(c, k, l) in &idx {
            let prod = f * get((c, k, l));
            let r = if b == c && j == k {
                linalg::op_norm(&(prod - get((b, i, l))))
            } else {
                linalg::op_norm(&prod)
            };
            rel = rel.max(r);
        }
        let adj = linalg::op_norm(&(f.adjoint() - get((b, j, i))));
        (b, i, j, rel, adj)
    });
    let mut out = UnitResiduals::default();
    let mut diag_sum = linalg::zeros(n);
    for (b, i, j, rel, adj) in rows {
        out.relation = out.relation.max(rel);
        out.adjoint = out.adjoint.max(adj);
        out.per_unit.push((b, i, j, rel.max(adj)));
        if i == j {
            diag_sum += get((b, i, i));
        }
    }
    let rest = HermEig::new(&(linalg::identity(n) - diag_sum));
    out.order = rest.values.first().map_or(0.0, |&v| (-v).max(0.0));
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectionOptions {
    pub tol: f64,
    /// Largest input defect accepted.
    pub admissible: f64,
    /// `C` in `‖ψ − φ‖ ≤ C·ε`.
    pub constant: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        CorrectionOptions {
            tol: 1e-9,
            admissible: 1e-2,
            constant: 50.0,
            samples: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Correction {
    pub system: MatrixUnitSystem,
    pub psi: ApproxMap,
    pub epsilon: f64,
    pub distance: f64,
    pub ratio: f64,
}

/// Spectral rounding of `Herm(m)` at 1/2 with a gap check on `[0.5 ± w]`.
fn round_projection(m: &CMat, width: f64) -> Result<(CMat, usize)> {
    let eig = HermEig::new(m);
    let (lo, hi) = (0.5 - width, 0.5 + width);
    if let Some(&v) = eig.values.iter().find(|&&v| v >= lo && v <= hi) {
        return Err(UlamError::NoSpectralGap {
            eigenvalue: v,
            low: lo,
            high: hi,
        });
    }
    let v = eig.columns_where(|x| x > 0.5);
    let r = v.ncols();
    Ok((linalg::projector(&v), r))
}

/// Exact matrix-unit system from the images of matrix units under an
/// approximate homomorphism, with `eps` setting the spectral-gap margin.
pub fn correct_units(
    shape: &AlgebraShape,
    n: usize,
    images: &[Vec<CMat>],
    eps: f64,
) -> Result<MatrixUnitSystem> {
    let width = (5.0 * eps).clamp(0.05, 0.4);
    let blocks = shape.blocks().to_vec();
    // partial isometries v_i with common initial projection q per block
    let per_block: Vec<(CMat, Vec<CMat>)> =
        par::try_map(&(0..blocks.len()).collect::<Vec<_>>(), |&b| {
            let nb = blocks[b];
            let (q, rank) = round_projection(&images[b][0], width)?;
            let mut vs = vec![q.clone()];
            for i in 1..nb {
                let (v, r) = linalg::partial_isometry(&(&images[b][i * nb] * &q), 0.5);
                if r != rank {
                    return Err(UlamError::OrthogonalizationFailed(format!(
                        "block {b}: image of e_{{{}1}} has rank {r}, expected {rank}",
                        i + 1
                    )));
                }
                vs.push(v);
            }
            Ok((q, vs))
        })?;

    // range projections, orthogonalized in decreasing trace order
    let mut order: Vec<(usize, usize, f64)> = Vec::new();
    for (b, (_, vs)) in per_block.iter().enumerate() {
        for (i, v) in vs.iter().enumerate() {
            order.push((b, i, (v * v.adjoint()).trace().re));
        }
    }
    order.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut accepted = linalg::zeros(n);
    let mut ranges: Vec<Vec<CMat>> = blocks
        .iter()
        .map(|&nb| vec![linalg::zeros(n); nb])
        .collect();
    for &(b, i, tr) in &order {
        let v = &per_block[b].1[i];
        let r = linalg::projector(v);
        let comp = linalg::identity(n) - &accepted;
        let c = &comp * &r * &comp;
        let (p, rank) = round_projection(&c, width)
            .map_err(|e| UlamError::OrthogonalizationFailed(format!("block {b}, unit {i}: {e}")))?;
        if rank != tr.round() as usize {
            return Err(UlamError::OrthogonalizationFailed(format!(
                "block {b}, unit {i}: rank {rank} after compression, expected {}",
                tr.round()
            )));
        }
        accepted += &p;
        ranges[b][i] = p;
    }

    // re-polarize onto the orthogonal ranges and form f_ij = w_i w_j*
    let units: Vec<Vec<CMat>> = blocks
        .iter()
        .enumerate()
        .map(|(b, &nb)| {
            let (q, vs) = &per_block[b];
            let rank = q.trace().re.round() as usize;
            let ws: Vec<CMat> = vs
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let (w, r) = linalg::partial_isometry(&(&ranges[b][i] * v * q), 0.5);
                    if r != rank {
                        return Err(UlamError::OrthogonalizationFailed(format!(
                            "block {b}, unit {i}: re-polarized rank {r}, expected {rank}"
                        )));
                    }
                    Ok(w)
                })
                .collect::<Result<_>>()?;
            Ok((0..nb * nb)
                .map(|k| &ws[k / nb] * ws[k % nb].adjoint())
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(MatrixUnitSystem::from_units(shape, n, units))
}

/// Farah-style correction of `φ` to an exact homomorphism `ψ`.
pub fn matrix_unit_correction(phi: &ApproxMap, opts: &CorrectionOptions) -> Result<Correction> {
    let shape = phi.domain().clone();
    let sampler = HaarSampler::new(&shape, opts.seed);
    let report = estimate_defect(phi, opts.samples.max(1), &sampler)?;
    let eps = report.epsilon;
    if eps >= opts.admissible {
        return Err(UlamError::precondition(format!(
            "matrix-unit correction needs epsilon < {}, estimated {eps:e}",
            opts.admissible
        )));
    }
    let images = phi.unit_images()?;
    let system = correct_units(&shape, phi.codomain(), &images, eps)?;
    if system.residuals.max() > opts.tol {
        return Err(UlamError::bound(
            "matrix-unit relations",
            system.residuals.max(),
            opts.tol,
        ));
    }
    let psi = system.to_map(format!("farah({})", phi.provenance()));
    let probes = unit_ball_probes(&shape, opts.samples, opts.seed ^ 0xfa4a);
    let distance = psi.sup_distance(phi, &probes)?;
    let ratio = if eps > 0.0 { distance / eps } else { 0.0 };
    if distance > opts.constant * eps + 1e-10 {
        return Err(UlamError::ConstantExceeded {
            ratio,
            limit: opts.constant,
        });
    }
    Ok(Correction {
        system,
        psi,
        epsilon: eps,
        distance,
        ratio,
    })
}

/// `(ranks of ψ(e^b_{11}), rank of 1 − ψ(1))` by spectral rounding.
pub fn multiplicity_vector(psi: &ApproxMap) -> Result<(Vec<usize>, usize)> {
    let shape = psi.domain().clone();
    let n = psi.codomain();
    let mut mult = Vec::new();
    for b in 0..shape.block_count() {
        let p = psi.eval(&AlgebraElement::matrix_unit(&shape, b, 0, 0))?;
        mult.push(linalg::spectral_projection(&p, 0.5).1);
    }
    let one = psi.eval(&AlgebraElement::identity(&shape))?;
    let pad = n - linalg::spectral_projection(&one, 0.5).1;
    Ok((mult, pad))
}

fn with_padding(m: &(Vec<usize>, usize)) -> Vec<usize> {
    let mut v = m.0.clone();
    v.push(m.1);
    v
}

/// Partial isometry from `ran p` onto `ran p2`: the polar factor of `p2 p`
/// when it has full rank, otherwise any basis alignment.
fn align(p2: &CMat, p: &CMat, rank: usize) -> (CMat, bool) {
    if rank == 0 {
        return (linalg::zeros(p.nrows()), false);
    }
    let (w, r) = linalg::partial_isometry(&(p2 * p), 1e-6);
    if r == rank {
        return (w, false);
    }
    let b2 = HermEig::new(p2).columns_where(|x| x > 0.5);
    let b1 = HermEig::new(p).columns_where(|x| x > 0.5);
    (b2 * b1.adjoint(), true)
}

#[derive(Clone, Debug, Serialize)]
pub struct Intertwiner {
    #[serde(serialize_with = "json::serialize_matrix")]
    pub v: CMat,
    pub distance_from_one: f64,
    pub map_distance: f64,
    /// `‖V − 1‖ / ‖ψ − ψ₂‖`, zero when both vanish.
    pub constant: f64,
    pub residual: f64,
    pub multiplicities: Vec<usize>,
    /// Some block or the padding was aligned through bases rather than
    /// the polar factor of the compression.
    pub basis_aligned: bool,
}

fn intertwiner_core(
    psi: &ApproxMap,
    psi2: &ApproxMap,
    samples: usize,
    seed: u64,
) -> Result<Intertwiner> {
    let shape = psi.domain().clone();
    if psi2.domain() != &shape || psi2.codomain() != psi.codomain() {
        return Err(UlamError::ShapeMismatch {
            expected: shape.blocks().to_vec(),
            found: psi2.domain().blocks().to_vec(),
        });
    }
    let n = psi.codomain();
    let m1 = multiplicity_vector(psi)?;
    let m2 = multiplicity_vector(psi2)?;
    if m1 != m2 {
        return Err(UlamError::MultiplicityMismatch {
            left: with_padding(&m1),
            right: with_padding(&m2),
        });
    }
    let u1 = psi.unit_images()?;
    let u2 = psi2.unit_images()?;
    let mut x = linalg::zeros(n);
    let mut basis_aligned = false;
    for (b, &nb) in shape.blocks().iter().enumerate() {
        let (y, fb) = align(&u2[b][0], &u1[b][0], m1.0[b]);
        basis_aligned |= fb;
        for i in 0..nb {
            x += &u2[b][i * nb] * &y * &u1[b][i];
        }
    }
    let one = AlgebraElement::identity(&shape);
    let p0 = linalg::identity(n) - psi.eval(&one)?;
    let p0b = linalg::identity(n) - psi2.eval(&one)?;
    let (y0, f0) = align(&p0b, &p0, m1.1);
    basis_aligned |= f0;
    x += y0;
    let cond = linalg::condition_number(&x);
    if !cond.is_finite() || cond > linalg::MAX_CONDITION {
        return Err(UlamError::Singular {
            what: "intertwining operator X".into(),
            condition: cond,
        });
    }
    let v = linalg::polar_unitary(&x);
    let probes = unit_ball_probes(&shape, samples, seed);
    let v_star = v.adjoint();
    let rows = par::try_map(&probes, |a| {
        let p1 = psi.eval(a)?;
        let p2 = psi2.eval(a)?;
        Ok((
            linalg::op_norm(&(&v * &p1 * &v_star - &p2)),
            linalg::op_norm(&(p1 - p2)),
        ))
    })?;
    let (mut residual, mut map_distance) = (0.0f64, 0.0f64);
    for (r, d) in rows {
        residual = residual.max(r);
        map_distance = map_distance.max(d);
    }
    let distance_from_one = linalg::op_norm(&(&v - linalg::identity(n)));
    let constant = if map_distance > 0.0 {
        distance_from_one / map_distance
    } else if distance_from_one <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    };
    let mut multiplicities = m1.0.clone();
    multiplicities.push(m1.1);
    Ok(Intertwiner {
        v,
        distance_from_one,
        map_distance,
        constant,
        residual,
        multiplicities,
        basis_aligned,
    })
}

/// Unitary `V` with `Ad(V)∘ψ = ψ₂` for exact homomorphisms of equal
/// multiplicity; asserts the residual and `‖V − 1‖ ≤ 10‖ψ − ψ₂‖`.
pub fn intertwiner(
    psi: &ApproxMap,
    psi2: &ApproxMap,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<Intertwiner> {
    let out = intertwiner_core(psi, psi2, samples, seed)?;
    if out.residual > tol {
        return Err(UlamError::bound("‖Ad(V)∘ψ − ψ₂‖", out.residual, tol));
    }
    if !out.basis_aligned && out.distance_from_one > 10.0 * out.map_distance + 1e-12 {
        return Err(UlamError::ConstantExceeded {
            ratio: out.constant,
            limit: 10.0,
        });
    }
    Ok(out)
}

/// Image `B` of an exact embedding `β: G → M_N`, with `G = ⊕_c M_{n_c}`.
#[derive(Clone, Debug)]
pub struct Subalgebra {
    pub spec: EmbeddingSpec,
    beta: ApproxMap,
    units: Vec<Vec<CMat>>,
}

impl Subalgebra {
    pub fn new(spec: EmbeddingSpec) -> Result<Self> {
        if spec.multiplicities.contains(&0) {
            return Err(UlamError::precondition(
                "subalgebra blocks need positive multiplicity",
            ));
        }
        let beta = exact_homomorphism(&spec)?;
        let units = beta.unit_images()?;
        Ok(Subalgebra { spec, beta, units })
    }

    pub fn full(n: usize) -> Result<Self> {
        Subalgebra::new(EmbeddingSpec::standard(
            &AlgebraShape::full(n)?,
            vec![1],
            0,
        )?)
    }

    pub fn dim(&self) -> usize {
        self.spec.target_dim()
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.spec.shape
    }

    pub fn embedding(&self) -> &ApproxMap {
        &self.beta
    }

    pub fn is_full(&self) -> bool {
        self.spec.shape.blocks() == [self.dim()] && self.spec.padding == 0
    }

    /// Coordinates `Tr(β(e^c_{ij})* y)/m_c` of the trace-orthogonal
    /// projection of `y` onto `B`.
    pub fn coordinates(&self, y: &CMat) -> AlgebraElement {
        let blocks: Vec<CMat> = self
            .spec
            .shape
            .blocks()
            .iter()
            .enumerate()
            .map(|(c, &nc)| {
                let m = self.spec.multiplicities[c] as f64;
                CMat::from_fn(nc, nc, |i, j| {
                    let e = &self.units[c][i * nc + j];
                    e.adjoint().component_mul(&y.transpose()).sum() / m
                })
            })
            .collect();
        AlgebraElement::from_blocks(&self.spec.shape, blocks).expect("block sizes match shape")
    }

    /// `E_B(y)`.
    pub fn expectation(&self, y: &CMat) -> Result<CMat> {
        if self.is_full() && self.spec.unitary == linalg::identity(self.dim()) {
            return Ok(y.clone());
        }
        self.beta.eval(&self.coordinates(y))
    }

    /// `sup_x ‖ψ(x) − E_B ψ(x)‖` over probes.
    pub fn one_sided_distance(&self, psi: &ApproxMap, probes: &[AlgebraElement]) -> Result<f64> {
        let d = par::try_map(probes, |x| {
            let y = psi.eval(x)?;
            Ok(linalg::op_norm(&(&y - self.expectation(&y)?)))
        })?;
        Ok(d.into_iter().fold(0.0, f64::max))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InclusionFix {
    pub eps6: f64,
    pub v_distance: f64,
    pub v_bound: f64,
    pub movement: f64,
    pub movement_bound: f64,
    pub correction_distance: f64,
    pub intertwiner: Intertwiner,
}

/// Move `ψ₁` into `B`: correct `E_B∘ψ₁` inside `B` blockwise, then
/// intertwine. Returns the corrected map into `B` and the diagnostics.
pub fn near_inclusion_fix(
    psi1: &ApproxMap,
    target: &Subalgebra,
    opts: &CorrectionOptions,
) -> Result<(ApproxMap, InclusionFix)> {
    let shape = psi1.domain().clone();
    let n = psi1.codomain();
    if target.dim() != n {
        return Err(UlamError::DimensionMismatch {
            expected: n,
            found: target.dim(),
        });
    }
    let probes = unit_ball_probes(&shape, opts.samples, opts.seed ^ 0x1c1);
    let eps6 = target.one_sided_distance(psi1, &probes)?;

    // χ_c = block c of β⁻¹(E_B ψ₁), an approximate homomorphism F → M_{n_c}
    let g_shape = target.shape().clone();
    let images = psi1.unit_images()?;
    let coords: Vec<Vec<AlgebraElement>> = images
        .iter()
        .map(|b| b.iter().map(|y| target.coordinates(y)).collect())
        .collect();
    let mut g_units: Vec<Vec<CMat>> = Vec::new();
    for (c, &nc) in g_shape.blocks().iter().enumerate() {
        let chi_images: Vec<Vec<CMat>> = coords
            .iter()
            .map(|b| b.iter().map(|x| x.block(c).clone()).collect())
            .collect();
        let chi = ApproxMap::from_unit_images(&shape, nc, format!("chi_{c}"), chi_images.clone());
        let eps = estimate_defect(
            &chi,
            opts.samples.max(1),
            &HaarSampler::new(&shape, opts.seed),
        )?
        .epsilon;
        if eps >= opts.admissible {
            return Err(UlamError::precondition(format!(
                "compressed map into block {c} of the target has epsilon {eps:e}"
            )));
        }
        let sys = correct_units(&shape, nc, &chi_images, eps)?;
        g_units.push(sys.units.into_iter().flatten().collect());
    }
    // lift back through β and regroup per block of F
    let beta = target.embedding();
    let mut units: Vec<Vec<CMat>> = shape
        .blocks()
        .iter()
        .map(|&nb| Vec::with_capacity(nb * nb))
        .collect();
    for (b, &nb) in shape.blocks().iter().enumerate() {
        let offset: usize = shape.blocks()[..b].iter().map(|k| k * k).sum();
        for k in 0..nb * nb {
            let blocks: Vec<CMat> = g_units.iter().map(|u| u[offset + k].clone()).collect();
            let x = AlgebraElement::from_blocks(&g_shape, blocks)?;
            units[b].push(beta.eval(&x)?);
        }
    }
    let system = MatrixUnitSystem::from_units(&shape, n, units);
    if system.residuals.max() > opts.tol {
        return Err(UlamError::bound(
            "matrix-unit relations in B",
            system.residuals.max(),
            opts.tol,
        ));
    }
    let psi = system.to_map(format!("into_B({})", psi1.provenance()));
    let correction_distance = psi.sup_distance(psi1, &probes)?;

    let inter = intertwiner_core(psi1, &psi, opts.samples, opts.seed ^ 0x1c2)?;
    let v = inter.v.clone();
    let v_star = v.adjoint();
    let moved = par::try_map(&probes, |x| {
        let y = psi1.eval(x)?;
        Ok(linalg::op_norm(&(&v * &y * &v_star - &y)))
    })?;
    let movement = moved.into_iter().fold(0.0, f64::max);
    let root = eps6.sqrt();
    let fix = InclusionFix {
        eps6,
        v_distance: inter.distance_from_one,
        v_bound: 120.0 * root + 1e-10,
        movement,
        movement_bound: 240.0 * root + 1e-10,
        correction_distance,
        intertwiner: inter,
    };
    if fix.v_distance > fix.v_bound {
        return Err(UlamError::bound("‖V − 1‖", fix.v_distance, fix.v_bound));
    }
    if fix.movement > fix.movement_bound {
        return Err(UlamError::bound(
            "‖Ad(V)∘ψ₁ − ψ₁‖",
            fix.movement,
            fix.movement_bound,
        ));
    }
    Ok((psi, fix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::{hermitian_conjugator, perturb_additive, perturb_conjugate};

    fn shape(b: &[usize]) -> AlgebraShape {
        AlgebraShape::new(b.to_vec()).unwrap()
    }

    fn exact(b: &[usize], m: Vec<usize>, d: usize, w: Option<u64>) -> ApproxMap {
        let s = shape(b);
        let spec = match w {
            Some(seed) => EmbeddingSpec::haar(&s, m, d, seed).unwrap(),
            None => EmbeddingSpec::standard(&s, m, d).unwrap(),
        };
        exact_homomorphism(&spec).unwrap()
    }

    fn conj(psi: &ApproxMap, u: &CMat) -> ApproxMap {
        psi.sandwich(u.clone(), u.adjoint(), "Ad(u)")
    }

    fn unitary_near_one(n: usize, dist: f64, seed: u64) -> CMat {
        let h = HaarSampler::new(&shape(&[1]), seed).random_hermitian(n);
        let s = 2.0 * (dist / 2.0).asin();
        linalg::exp_i_hermitian(&h, s)
    }

    #[test]
    fn exact_map_is_fixed() {
        let psi = exact(&[1, 2], vec![2, 1], 0, Some(4));
        let c = matrix_unit_correction(&psi, &CorrectionOptions::default()).unwrap();
        assert!(c.distance < 1e-10, "{}", c.distance);
        assert_eq!(c.system.multiplicities, vec![2, 1]);
    }

    #[test]
    fn additive_perturbation_corrected() {
        let psi0 = exact(&[2], vec![2], 0, Some(2));
        let phi = perturb_additive(&psi0, 1e-3, 5).unwrap();
        let c = matrix_unit_correction(&phi, &CorrectionOptions::default()).unwrap();
        assert!(c.system.residuals.max() < 1e-9);
        let probes = unit_ball_probes(&shape(&[2]), 100, 1);
        assert!(c.psi.sup_distance(&psi0, &probes).unwrap() <= 1e-2);
    }

    #[test]
    fn no_gap_refused() {
        let s = shape(&[1]);
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            linalg::ONE * 0.51,
            linalg::ONE * 0.49,
        ]));
        let e = correct_units(&s, 2, &[vec![d]], 1e-3).unwrap_err();
        assert!(matches!(e, UlamError::NoSpectralGap { .. }), "{e}");
    }

    #[test]
    fn non_unital_correction() {
        let psi = exact(&[2], vec![1], 2, Some(3));
        let c = matrix_unit_correction(&psi, &CorrectionOptions::default()).unwrap();
        assert_eq!(c.system.padding, 2);
        assert!(c.system.residuals.max() < 1e-12);
    }

    #[test]
    fn intertwiner_identity_and_conjugate() {
        let psi = exact(&[2], vec![2], 0, None);
        let i = intertwiner(&psi, &psi, 1e-10, 50, 1).unwrap();
        assert!(i.distance_from_one < 1e-12);
        for (k, dist) in [1e-2, 5e-2].into_iter().enumerate() {
            let u = unitary_near_one(4, dist, k as u64 + 10);
            assert!((linalg::op_norm(&(&u - linalg::identity(4))) - dist).abs() < 1e-12);
            let psi2 = conj(&psi, &u);
            let i = intertwiner(&psi, &psi2, 1e-10, 100, 2).unwrap();
            assert!(i.distance_from_one <= 0.5);
            assert!(i.distance_from_one <= 10.0 * i.map_distance, "{i:?}");
        }
    }

    #[test]
    fn intertwiner_mismatch() {
        let a = exact(&[1, 2], vec![2, 1], 0, None);
        let b = exact(&[1, 2], vec![0, 2], 0, None);
        match intertwiner(&a, &b, 1e-10, 10, 1) {
            Err(UlamError::MultiplicityMismatch { left, right }) => {
                assert_eq!(left, vec![2, 1, 0]);
                assert_eq!(right, vec![0, 2, 0]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn expectation_properties() {
        let b = Subalgebra::new(EmbeddingSpec::haar(&shape(&[1, 2]), vec![1, 1], 1, 6).unwrap())
            .unwrap();
        let s = HaarSampler::new(&shape(&[4]), 2);
        for k in 0..20 {
            let y = s.random_contraction_at(k).block(0).clone();
            let e = b.expectation(&y).unwrap();
            let ee = b.expectation(&e).unwrap();
            assert!(linalg::op_norm(&(&ee - &e)) < 1e-12);
            assert!(linalg::op_norm(&e) <= linalg::op_norm(&y) + 1e-10);
            let yy = &y * y.adjoint();
            assert!(HermEig::new(&b.expectation(&yy).unwrap()).values[0] >= -1e-12);
        }
        let one = b.expectation(&linalg::identity(4)).unwrap();
        let unit = b
            .embedding()
            .eval(&AlgebraElement::identity(b.shape()))
            .unwrap();
        assert!(linalg::op_norm(&(one - unit)) < 1e-12);
    }

    #[test]
    fn inclusion_fix_cases() {
        let s = shape(&[2]);
        let target =
            Subalgebra::new(EmbeddingSpec::standard(&shape(&[2, 2]), vec![1, 1], 0).unwrap())
                .unwrap();
        // ψ₀ = a ↦ a ⊕ a lands in B = M_2 ⊕ M_2
        let beta = target.embedding().clone();
        let g = target.shape().clone();
        let psi0 = ApproxMap::new(&s, 4, "diag", 0, move |x| {
            beta.eval(&AlgebraElement::from_blocks(
                &g,
                vec![x.block(0).clone(), x.block(0).clone()],
            )?)
        });
        let (psi, fix) = near_inclusion_fix(&psi0, &target, &CorrectionOptions::default()).unwrap();
        assert!(fix.v_distance < 1e-10 && fix.eps6 < 1e-12);
        let probes = unit_ball_probes(&s, 50, 3);
        assert!(psi.sup_distance(&psi0, &probes).unwrap() < 1e-10);

        let s_mat = hermitian_conjugator(4, 1e-3, 9);
        let psi1 = perturb_conjugate(&psi0, &s_mat).unwrap();
        let (_, fix) = near_inclusion_fix(&psi1, &target, &CorrectionOptions::default()).unwrap();
        assert!(fix.movement <= 240.0 * fix.eps6.sqrt());
        assert!(fix.eps6 > 0.0);
    }

    #[test]
    fn full_target_reduces_to_correction() {
        let psi0 = exact(&[2], vec![2], 0, Some(1));
        let phi = perturb_additive(&psi0, 1e-3, 2).unwrap();
        let c = matrix_unit_correction(&phi, &CorrectionOptions::default()).unwrap();
        let (psi, fix) = near_inclusion_fix(
            &c.psi,
            &Subalgebra::full(4).unwrap(),
            &CorrectionOptions::default(),
        )
        .unwrap();
        assert!(fix.v_distance < 1e-10);
        let probes = unit_ball_probes(&shape(&[2]), 50, 3);
        assert!(psi.sup_distance(&c.psi, &probes).unwrap() < 1e-10);
    }
}
