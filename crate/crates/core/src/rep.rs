//! Unitarization of near-representations of `𝒰(F)`, decomposition into
//! irreducible blocks, and Stone generators of self-adjoint unitaries.

use std::f64::consts::PI;

use num_complex::Complex;
use serde::Serialize;

use crate::algebra::{AlgebraElement, AlgebraShape, HaarSampler};
use crate::averaging::{batch_mean, probe_pairs, GroupMap};
use crate::defect::ApproxMap;
use crate::error::{Result, UlamError};
use crate::json;
use crate::linalg::{self, CMat, HermEig, C64};
use crate::par;

/// Largest distance from unitary that the polar snap absorbs, before the
/// Monte-Carlo allowance.
pub const SNAP_LIMIT: f64 = 1e-2;

#[derive(Clone, Debug, Serialize)]
pub struct Unitarizer {
    #[serde(serialize_with = "json::serialize_matrix")]
    pub t: CMat,
    #[serde(skip)]
    pub t_inv: CMat,
    /// `‖T − 1‖`.
    pub distance: f64,
    pub mc: f64,
}

impl Unitarizer {
    pub fn identity(n: usize) -> Self {
        Unitarizer {
            t: linalg::identity(n),
            t_inv: linalg::identity(n),
            distance: 0.0,
            mc: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UnitarizeBounds {
    pub eps2: f64,
    pub eps3: f64,
}

impl UnitarizeBounds {
    /// `eps3 = eps2(4 + eps2)`.
    pub fn from_eps2(eps2: f64) -> Self {
        UnitarizeBounds {
            eps2,
            eps3: eps2 * (4.0 + eps2),
        }
    }

    /// Bounds implied by a measured `‖τ*τ − 1‖`.
    pub fn from_residual(eps3: f64) -> Self {
        UnitarizeBounds {
            eps2: (4.0 + eps3).sqrt() - 2.0,
            eps3,
        }
    }

    pub fn eps4(&self) -> f64 {
        2.0 * (1.0 + self.eps2) * self.eps3 / (1.0 - self.eps3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitarizeChecks {
    pub gram_residual: f64,
    pub t_distance: f64,
    pub t_bound: f64,
    pub movement: f64,
    pub movement_bound: f64,
    pub max_snap: f64,
    pub snap_limit: f64,
    pub bounds: UnitarizeBounds,
}

#[derive(Clone, Debug)]
pub struct Unitarization {
    pub unitarizer: Unitarizer,
    pub pi: GroupMap,
    pub checks: UnitarizeChecks,
}

fn unitarize_probes(tau: &GroupMap, probe_count: usize) -> Vec<AlgebraElement> {
    probe_pairs(tau.shape(), tau.seed() ^ 0x7a7a, probe_count)
        .into_iter()
        .flat_map(|(u, v)| [u, v])
        .collect()
}

/// `sup ‖τ(u)*τ(u) − 1‖` over the probes [`unitarize`] uses.
pub fn gram_residual(tau: &GroupMap, probe_count: usize) -> Result<f64> {
    let n = tau.dim();
    let grams = par::try_map(&unitarize_probes(tau, probe_count), |u| {
        let t = tau.eval(u)?;
        Ok(linalg::op_norm(&(t.adjoint() * &t - linalg::identity(n))))
    })?;
    Ok(grams.into_iter().fold(0.0, f64::max))
}

/// `T = (avg τ(x)*τ(x))^{1/2}` and `π(u) = polar(T τ(u) T⁻¹)`.
pub fn unitarize(
    tau: &GroupMap,
    width: usize,
    bounds: UnitarizeBounds,
    probe_count: usize,
) -> Result<Unitarization> {
    let shape = tau.shape().clone();
    let n = tau.dim();
    let seed = tau.seed();
    let probes = unitarize_probes(tau, probe_count);
    let gram_residual = gram_residual(tau, probe_count)?;
    if gram_residual > bounds.eps3 || bounds.eps3 >= 0.5 {
        return Err(UlamError::HypothesisViolated(format!(
            "unitarization needs ‖τ*τ − 1‖ ≤ eps3 < 1/2; measured {gram_residual:e}, eps3 = {:e}",
            bounds.eps3
        )));
    }

    let sampler = HaarSampler::new(&shape, seed).fork(4242);
    let samples: Vec<AlgebraElement> = (0..width.max(8) as u64)
        .map(|k| sampler.haar_unitary_at(k))
        .collect();
    let terms = par::try_map(&samples, |x| {
        let t = tau.eval(x)?;
        Ok(t.adjoint() * t)
    })?;
    let (avg, se) = batch_mean(&terms);
    let avg = linalg::hermitian_part(&avg);
    let mc = 3.0 * se;
    let min = HermEig::new(&avg).values[0];
    if min <= 0.0 {
        return Err(UlamError::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    let unitarizer = if linalg::op_norm(&(&avg - linalg::identity(n))) <= 1e-14 {
        Unitarizer {
            mc,
            ..Unitarizer::identity(n)
        }
    } else {
        let t = linalg::sqrt_psd(&avg)?;
        let t_inv = linalg::inverse_checked(&t, "unitarizer T")?;
        let distance = linalg::op_norm(&(&t - linalg::identity(n)));
        Unitarizer {
            t,
            t_inv,
            distance,
            mc,
        }
    };
    let t_bound = bounds.eps3 + mc;
    if unitarizer.distance > t_bound {
        return Err(UlamError::bound("‖T − 1‖", unitarizer.distance, t_bound));
    }

    let tau_c = tau.clone();
    let (t, t_inv) = (unitarizer.t.clone(), unitarizer.t_inv.clone());
    let snap_limit = SNAP_LIMIT
        .max(bounds.eps4())
        .max(4.0 * mc * linalg::op_norm(&t) * linalg::op_norm(&t_inv));
    let pi_map = ApproxMap::new(&shape, n, format!("pi({})", tau.level()), seed, move |u| {
        let m = &t * tau_c.eval(u)? * &t_inv;
        let p = linalg::polar_unitary(&m);
        let d = linalg::op_norm(&(&m - &p));
        if d > snap_limit {
            return Err(UlamError::SnapFailed {
                residual: d,
                limit: snap_limit,
            });
        }
        Ok(p)
    });
    let pi = GroupMap::from_map(&pi_map, seed);

    let rows = par::try_map(&probes, |u| {
        let t = tau.eval(u)?;
        let m = &unitarizer.t * &t * &unitarizer.t_inv;
        let p = pi.eval(u)?;
        Ok((
            linalg::op_norm(&(&p - &t)),
            linalg::op_norm(&(&m - &p)),
            linalg::op_norm(&t),
        ))
    })?;
    let (mut movement, mut max_snap, mut tau_norm) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b, c) in rows {
        movement = movement.max(a);
        max_snap = max_snap.max(b);
        tau_norm = tau_norm.max(c);
    }
    let movement_bound = bounds.eps4() + 4.0 * mc * (1.0 + tau_norm);
    if movement > movement_bound {
        return Err(UlamError::bound(
            "‖π − τ‖ on probes",
            movement,
            movement_bound,
        ));
    }
    Ok(Unitarization {
        checks: UnitarizeChecks {
            gram_residual,
            t_distance: unitarizer.distance,
            t_bound,
            movement,
            movement_bound,
            max_snap,
            snap_limit,
            bounds,
        },
        unitarizer,
        pi,
    })
}

/// Null-space tolerance on singular values of the commutator operator.
fn null_threshold(generators: usize, n: usize, tol: f64) -> f64 {
    2.0 * ((generators * n) as f64).sqrt() * tol.max(1e-12)
}

/// Size of the null space: the split `k` with `s[k-1] ≤ thr` maximizing
/// `s[k]/s[k-1]`, which must be at least 10. Values under `floor` count as
/// `floor`.
fn null_dimension(s: &[f64], thr: f64, floor: f64) -> Result<usize> {
    if s[s.len() - 1] <= thr {
        return Ok(s.len());
    }
    let mut best: Option<(usize, f64)> = None;
    for k in 1..s.len() {
        if s[k - 1] > thr {
            break;
        }
        let ratio = s[k].max(floor) / s[k - 1].max(floor);
        if best.is_none_or(|(_, r)| ratio > r) {
            best = Some((k, ratio));
        }
    }
    match best {
        Some((k, r)) if r >= 10.0 => Ok(k),
        Some((k, r)) => Err(UlamError::CommutantRankDeficient(format!(
            "best singular-value gap at {k} has ratio {r:.3} (threshold {thr:e})"
        ))),
        None => Err(UlamError::CommutantRankDeficient(format!(
            "no singular value below {thr:e}; smallest {:e}",
            s[0]
        ))),
    }
}

/// Basis of `{X : [X, P_i] = 0 ∀i}` from the null space of `Σ A_i* A_i`,
/// `A_i = P_iᵀ ⊗ 1 − 1 ⊗ P_i` acting on column-major `vec X`. Residuals
/// `‖A v‖` are measured directly rather than through the Gram spectrum.
pub fn commutant_basis(mats: &[CMat], tol: f64) -> Result<Vec<CMat>> {
    let n = mats[0].nrows();
    let m = n * n;
    let id = linalg::identity(n);
    let ops: Vec<CMat> = mats
        .iter()
        .map(|p| linalg::kron(&p.transpose(), &id) - linalg::kron(&id, p))
        .collect();
    let mut gram = CMat::zeros(m, m);
    for a in &ops {
        gram += a.adjoint() * a;
    }
    let eig = HermEig::new(&gram);
    let mut sq = vec![0.0f64; m];
    for a in &ops {
        let av = a * &eig.vectors;
        for (k, s) in sq.iter_mut().enumerate() {
            *s += av.column(k).norm_squared();
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| sq[a].total_cmp(&sq[b]));
    let s: Vec<f64> = order.iter().map(|&k| sq[k].sqrt()).collect();
    let thr = null_threshold(mats.len(), n, tol);
    // ratios below the noise floor are meaningless; the identity is always exactly null
    let floor = (f64::EPSILON * s[s.len() - 1].max(1.0) * (m as f64)).max(thr * 1e-3);
    let k = null_dimension(&s, thr, floor)?;
    Ok(order[..k]
        .iter()
        .map(|&c| CMat::from_fn(n, n, |i, j| eig.vectors[(j * n + i, c)]))
        .collect())
}

/// Random real combination of the Hermitian parts of a commutant basis.
fn generic_hermitian(basis: &[CMat], sampler: &mut HaarSampler) -> CMat {
    let n = basis[0].nrows();
    let coeffs = sampler.gaussian(2 * basis.len(), 1);
    let mut h = linalg::zeros(n);
    for (k, x) in basis.iter().enumerate() {
        let re = linalg::hermitian_part(x);
        let im = linalg::hermitian_part(&(x * linalg::I));
        h += re * Complex::new(coeffs[(2 * k, 0)].re, 0.0);
        h += im * Complex::new(coeffs[(2 * k + 1, 0)].re, 0.0);
    }
    let norm = linalg::op_norm(&h);
    if norm > 0.0 {
        h = linalg::scale(&h, 1.0 / norm);
    }
    h
}

/// Split sorted eigenvalues at the gaps above the largest jump in the
/// sorted gap sequence. Gaps at most `noise` may only be within-cluster;
/// returns `None` when no jump of ratio 10 separates the two kinds.
fn cluster(values: &[f64], noise: f64) -> Option<Vec<std::ops::Range<usize>>> {
    let gaps: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.is_empty() {
        return Some(vec![0..values.len()]);
    }
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let split = if sorted[0] > noise {
        // every eigenvalue is its own cluster
        sorted[0] / 2.0
    } else {
        let floor = noise * 1e-3;
        let mut best: Option<(f64, f64)> = None;
        for w in sorted.windows(2) {
            if w[0] > noise {
                break;
            }
            let (lo, hi) = (w[0].max(floor), w[1].max(floor));
            let ratio = hi / lo;
            if best.is_none_or(|(r, _)| ratio > r) {
                best = Some((ratio, (lo * hi).sqrt()));
            }
        }
        match best {
            Some((r, t)) if r >= 10.0 => t,
            _ => return None,
        }
    };
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &g) in gaps.iter().enumerate() {
        if g > split {
            out.push(start..i + 1);
            start = i + 1;
        }
    }
    out.push(start..values.len());
    Some(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockDecomposition {
    pub n: usize,
    pub dims: Vec<usize>,
    #[serde(serialize_with = "json::serialize_matrices")]
    pub projections: Vec<CMat>,
    /// Orthonormal bases `B_k` with `p_k = B_k B_k*`.
    #[serde(skip)]
    pub bases: Vec<CMat>,
    pub commutation_residual: f64,
    pub idempotence_residual: f64,
    pub orthogonality_residual: f64,
    pub sum_residual: f64,
    pub compression_residual: f64,
}

impl BlockDecomposition {
    pub fn block_count(&self) -> usize {
        self.dims.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// Isometries onto irreducible invariant subspaces of `{P_i}`.
fn split_irreducible(
    mats: &[CMat],
    tol: f64,
    sampler: &mut HaarSampler,
    depth: usize,
) -> Result<Vec<CMat>> {
    let n = mats[0].nrows();
    if depth > n.max(1) + 1 {
        return Err(UlamError::IrreducibilityFailed { depth });
    }
    let basis = commutant_basis(mats, tol)?;
    if basis.len() == 1 {
        return Ok(vec![linalg::identity(n)]);
    }
    let noise = (2.0 * tol).max(1e-8);
    let mut clusters = None;
    let mut eig = None;
    for _ in 0..2 {
        let h = generic_hermitian(&basis, sampler);
        let e = HermEig::new(&h);
        if let Some(c) = cluster(&e.values, noise) {
            if c.len() > 1 {
                clusters = Some(c);
                eig = Some(e);
                break;
            }
        }
    }
    let (clusters, eig) = match (clusters, eig) {
        (Some(c), Some(e)) => (c, e),
        _ => return Err(UlamError::IrreducibilityFailed { depth }),
    };
    let mut out = Vec::new();
    for r in clusters {
        let v = eig.vectors.columns(r.start, r.len()).into_owned();
        let restricted: Vec<CMat> = mats.iter().map(|p| v.adjoint() * p * &v).collect();
        for w in split_irreducible(&restricted, tol, sampler, depth + 1)? {
            out.push(&v * w);
        }
    }
    Ok(out)
}

/// Irreducible decomposition of a unitary near-representation from the
/// approximate commutant of `π` at `generator_count` Haar generators.
pub fn decompose(
    pi: &GroupMap,
    generator_count: usize,
    tol: f64,
    seed: u64,
) -> Result<BlockDecomposition> {
    let shape = pi.shape().clone();
    if generator_count == 0 {
        return Err(UlamError::precondition("need at least one generator"));
    }
    let gens = HaarSampler::new(&shape, seed).fork(31);
    let gen_elems: Vec<AlgebraElement> = (0..generator_count as u64)
        .map(|k| gens.haar_unitary_at(k))
        .collect();
    let mats = par::try_map(&gen_elems, |u| pi.eval(u))?;
    let unit_res = mats
        .iter()
        .map(linalg::unitarity_residual)
        .fold(0.0, f64::max);
    if unit_res > 1e-10 {
        return Err(UlamError::precondition(format!(
            "decompose needs π unitary to 1e-10, residual {unit_res:e}"
        )));
    }
    let mut sampler = HaarSampler::new(&shape, seed).fork(32);
    let bases = split_irreducible(&mats, tol, &mut sampler, 0)?;
    assemble(&shape, pi, bases, &mats, seed)
}

fn assemble(
    shape: &AlgebraShape,
    pi: &GroupMap,
    bases: Vec<CMat>,
    mats: &[CMat],
    seed: u64,
) -> Result<BlockDecomposition> {
    let n = pi.dim();
    let key = |b: &CMat| -> (usize, Vec<i64>) {
        let traces = mats
            .iter()
            .map(|p| ((b.adjoint() * p * b).trace().re * 1e6).round() as i64)
            .collect();
        (b.ncols(), traces)
    };
    let mut keyed: Vec<((usize, Vec<i64>), CMat)> =
        bases.into_iter().map(|b| (key(&b), b)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let bases: Vec<CMat> = keyed.into_iter().map(|(_, b)| b).collect();
    let projections: Vec<CMat> = bases.iter().map(linalg::projector).collect();

    let probes = HaarSampler::new(shape, seed).fork(33);
    let probe_elems: Vec<AlgebraElement> = (0..8u64).map(|k| probes.haar_unitary_at(k)).collect();
    let mut all = mats.to_vec();
    all.extend(par::try_map(&probe_elems, |u| pi.eval(u))?);

    let mut commutation = 0.0f64;
    let mut compression = 0.0f64;
    for m in &all {
        let mut sum = linalg::zeros(n);
        for p in &projections {
            commutation = commutation.max(linalg::op_norm(&linalg::commutator(p, m)));
            sum += p * m * p;
        }
        compression = compression.max(linalg::op_norm(&(sum - m)));
    }
    let mut idem = 0.0f64;
    let mut orth = 0.0f64;
    let mut total = linalg::zeros(n);
    for (k, p) in projections.iter().enumerate() {
        idem = idem.max(linalg::op_norm(&(p * p - p)));
        total += p;
        for q in &projections[k + 1..] {
            orth = orth.max(linalg::op_norm(&(p * q)));
        }
    }
    Ok(BlockDecomposition {
        n,
        dims: bases.iter().map(|b| b.ncols()).collect(),
        projections,
        bases,
        commutation_residual: commutation,
        idempotence_residual: idem,
        orthogonality_residual: orth,
        sum_residual: linalg::op_norm(&(total - linalg::identity(n))),
        compression_residual: compression,
    })
}

/// `exp(i r a) = cos r + i sin r · a` for a self-adjoint unitary `a`.
pub fn exp_self_adjoint_unitary(a: &AlgebraElement, r: f64) -> AlgebraElement {
    let one = AlgebraElement::identity(a.shape());
    &one.scale(Complex::new(r.cos(), 0.0)) + &a.scale(Complex::new(0.0, r.sin()))
}

pub const STONE_R0: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct StoneGenerator {
    pub generator: CMat,
    pub snap_distance: f64,
    pub branch_distance: f64,
    /// `(r, ‖π(exp(ira)) − exp(irρ(a))‖)`.
    pub verification: Vec<(f64, f64)>,
}

fn check_self_adjoint_unitary(a: &AlgebraElement) -> Result<()> {
    let sa = (&a.adjoint() - a).norm();
    let sq = (&(a * a) - &AlgebraElement::identity(a.shape())).norm();
    if sa > 1e-10 || sq > 1e-10 {
        return Err(UlamError::precondition(format!(
            "need a* = a and a² = 1 (residuals {sa:e}, {sq:e})"
        )));
    }
    Ok(())
}

/// `ρ(a)` from the one-parameter group `r ↦ π(exp(ira))`, verified to
/// `verify_tol` at `r ∈ {π/7, 1/3, 1}`.
pub fn stone_generator(
    pi: &GroupMap,
    a: &AlgebraElement,
    verify_tol: f64,
) -> Result<StoneGenerator> {
    check_self_adjoint_unitary(a)?;
    let v = pi.eval(&exp_self_adjoint_unitary(a, STONE_R0))?;
    let (vals, _) = linalg::normal_eig(&v, 1e-6)?;
    let branch_distance = vals
        .iter()
        .map(|z| (z + 1.0).norm())
        .fold(f64::INFINITY, f64::min);
    if branch_distance < 1e-6 {
        return Err(UlamError::BranchCut {
            distance: branch_distance,
        });
    }
    let log = linalg::normal_function(&v, 1e-6, |z: C64| z.ln())?;
    let g = linalg::hermitian_part(&(log * Complex::new(0.0, -1.0 / STONE_R0)));
    let (generator, snap_distance) = linalg::hermitian_sign(&g);
    if snap_distance > SNAP_LIMIT {
        return Err(UlamError::SnapFailed {
            residual: snap_distance,
            limit: SNAP_LIMIT,
        });
    }
    let mut verification = Vec::new();
    for r in [PI / 7.0, 1.0 / 3.0, 1.0] {
        let lhs = pi.eval(&exp_self_adjoint_unitary(a, r))?;
        let rhs = linalg::exp_i_hermitian(&generator, r);
        let err = linalg::op_norm(&(lhs - rhs));
        if err > verify_tol {
            return Err(UlamError::bound(
                format!("Stone check at r = {r:.4}"),
                err,
                verify_tol,
            ));
        }
        verification.push((r, err));
    }
    Ok(StoneGenerator {
        generator,
        snap_distance,
        branch_distance,
        verification,
    })
}

/// `(1 − ρ(1 − 2p))/2`.
pub fn lift_projection(pi: &GroupMap, p: &AlgebraElement, verify_tol: f64) -> Result<CMat> {
    let shape = p.shape();
    let idem = (&(p * p) - p).norm();
    let sa = (&p.adjoint() - p).norm();
    if idem > 1e-10 || sa > 1e-10 {
        return Err(UlamError::precondition("lift_projection needs p² = p = p*"));
    }
    let u = &AlgebraElement::identity(shape) - &p.scale_real(2.0);
    let rho = stone_generator(pi, &u, verify_tol)?.generator;
    let n = pi.dim();
    Ok(linalg::scale(&(linalg::identity(n) - rho), 0.5))
}
