//! Ground-truth homomorphisms and controlled perturbations of them.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    gaussian_matrix, haar_matrix, mix, AlgebraElement, AlgebraShape, HaarSampler,
};
use crate::defect::{unit_ball_probes, ApproxMap};
use crate::error::{Result, UlamError};
use crate::json;
use crate::linalg::{self, CMat};
use crate::par;

/// `ψ(a) = W (⊕_b a_b ⊗ 1_{m_b} ⊕ 0_d) W*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub shape: AlgebraShape,
    pub multiplicities: Vec<usize>,
    pub padding: usize,
    #[serde(
        serialize_with = "json::serialize_matrix",
        deserialize_with = "json::deserialize_matrix"
    )]
    pub unitary: CMat,
}

impl EmbeddingSpec {
    /// Embedding with `W = 1`.
    pub fn standard(
        shape: &AlgebraShape,
        multiplicities: Vec<usize>,
        padding: usize,
    ) -> Result<Self> {
        let n = target_dim(shape, &multiplicities, padding)?;
        Ok(EmbeddingSpec {
            shape: shape.clone(),
            multiplicities,
            padding,
            unitary: linalg::identity(n),
        })
    }

    /// Embedding conjugated by a Haar-random `W`.
    pub fn haar(
        shape: &AlgebraShape,
        multiplicities: Vec<usize>,
        padding: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = target_dim(shape, &multiplicities, padding)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(EmbeddingSpec {
            shape: shape.clone(),
            multiplicities,
            padding,
            unitary: haar_matrix(&mut rng, n),
        })
    }

    pub fn with_unitary(mut self, w: CMat) -> Result<Self> {
        let n = self.target_dim();
        if w.nrows() != n || w.ncols() != n {
            return Err(UlamError::DimensionMismatch {
                expected: n,
                found: w.nrows(),
            });
        }
        if linalg::unitarity_residual(&w) > 1e-10 {
            return Err(UlamError::precondition("conjugating matrix is not unitary"));
        }
        self.unitary = w;
        Ok(self)
    }

    pub fn target_dim(&self) -> usize {
        self.padding
            + self
                .shape
                .blocks()
                .iter()
                .zip(&self.multiplicities)
                .map(|(n, m)| n * m)
                .sum::<usize>()
    }

    pub fn is_unital(&self) -> bool {
        self.padding == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = target_dim(&self.shape, &self.multiplicities, self.padding)?;
        if self.unitary.nrows() != n || self.unitary.ncols() != n {
            return Err(UlamError::DimensionMismatch {
                expected: n,
                found: self.unitary.nrows(),
            });
        }
        Ok(())
    }
}

fn target_dim(shape: &AlgebraShape, mult: &[usize], padding: usize) -> Result<usize> {
    if mult.len() != shape.block_count() {
        return Err(UlamError::DimensionMismatch {
            expected: shape.block_count(),
            found: mult.len(),
        });
    }
    let n = padding
        + shape
            .blocks()
            .iter()
            .zip(mult)
            .map(|(n, m)| n * m)
            .sum::<usize>();
    if n == 0 {
        return Err(UlamError::precondition(
            "embedding target must have dimension at least 1",
        ));
    }
    Ok(n)
}

/// Block-diagonal form `⊕_b a_b ⊗ 1_{m_b} ⊕ 0_d` (before conjugation).
pub fn amplify(x: &AlgebraElement, multiplicities: &[usize], padding: usize) -> CMat {
    let mut parts: Vec<CMat> = x
        .blocks()
        .iter()
        .zip(multiplicities)
        .filter(|(_, &m)| m > 0)
        .map(|(a, &m)| linalg::kron(a, &linalg::identity(m)))
        .collect();
    if padding > 0 {
        parts.push(linalg::zeros(padding));
    }
    linalg::direct_sum(&parts)
}

pub fn exact_homomorphism(spec: &EmbeddingSpec) -> Result<ApproxMap> {
    spec.validate()?;
    let s = spec.clone();
    let n = spec.target_dim();
    let w_star = spec.unitary.adjoint();
    let trivial = spec.unitary == linalg::identity(n);
    Ok(ApproxMap::new(
        &spec.shape,
        n,
        format!(
            "exact({}, m={:?}, d={})",
            spec.shape.label(),
            spec.multiplicities,
            spec.padding
        ),
        0,
        move |x| {
            let d = amplify(x, &s.multiplicities, s.padding);
            Ok(if trivial { d } else { &s.unitary * d * &w_star })
        },
    ))
}

/// Resolution of the quantization feeding the perturbation hash.
const FIELD_RESOLUTION: f64 = (1u64 << 20) as f64;

fn field_key(x: &AlgebraElement, seed: u64) -> u64 {
    let mut h = mix(seed);
    for m in x.blocks() {
        for z in m.iter() {
            h = mix(h ^ ((z.re * FIELD_RESOLUTION).floor() as i64 as u64));
            h = mix(h ^ ((z.im * FIELD_RESOLUTION).floor() as i64 as u64));
        }
    }
    h
}

/// `φ(x) = ψ(x) + η g(x)` with `g(x)` a hash-seeded Gaussian matrix of unit
/// Frobenius norm.
pub fn perturb_additive(psi: &ApproxMap, eta: f64, seed: u64) -> Result<ApproxMap> {
    if !(0.0..1.0).contains(&eta) {
        return Err(UlamError::precondition(format!(
            "eta must lie in [0, 1), got {eta}"
        )));
    }
    if eta == 0.0 {
        return Ok(psi.clone());
    }
    let inner = psi.clone();
    let n = psi.codomain();
    Ok(ApproxMap::new(
        psi.domain(),
        n,
        format!("additive({}, eta={eta})", psi.provenance()),
        seed,
        move |x| {
            let mut rng = ChaCha8Rng::seed_from_u64(field_key(x, seed));
            let g = gaussian_matrix(&mut rng, n, n);
            let f = linalg::frobenius(&g);
            Ok(inner.eval(x)? + linalg::scale(&g, eta / f))
        },
    ))
}

/// `φ(x) = S ψ(x) S⁻¹`.
pub fn perturb_conjugate(psi: &ApproxMap, s: &CMat) -> Result<ApproxMap> {
    let n = psi.codomain();
    if s.nrows() != n || s.ncols() != n {
        return Err(UlamError::DimensionMismatch {
            expected: n,
            found: s.nrows(),
        });
    }
    let dist = linalg::op_norm(&(s - linalg::identity(n)));
    if dist >= 0.5 {
        return Err(UlamError::precondition(format!(
            "need ‖S − 1‖ < 1/2, got {dist}"
        )));
    }
    let s_inv = linalg::inverse_checked(s, "conjugating matrix")?;
    let s = s.clone();
    Ok(psi.sandwich(
        s,
        s_inv,
        format!("conjugate({}, ‖S−1‖={dist:.3e})", psi.provenance()),
    ))
}

/// `S = 1 + t h` with `h` a random Hermitian of norm one.
pub fn hermitian_conjugator(n: usize, t: f64, seed: u64) -> CMat {
    let shape = AlgebraShape::full(1).expect("valid");
    let h = HaarSampler::new(&shape, seed).random_hermitian(n);
    linalg::identity(n) + linalg::scale(&h, t)
}

/// Entrywise rounding to `hℤ + ihℤ`, clipped into the ball of radius 2.
pub fn quantize(x: &AlgebraElement, h: f64) -> AlgebraElement {
    let round = |m: &CMat| m.map(|z| Complex::new((z.re / h).round() * h, (z.im / h).round() * h));
    let q = x.map_blocks(round);
    let slack = x.shape().lattice_constant() * h;
    if q.norm() <= 2.0 + slack {
        return q;
    }
    let y = x.scale_real(2.0 / x.norm());
    y.map_blocks(|m| m.map(|z| Complex::new((z.re / h).trunc() * h, (z.im / h).trunc() * h)))
}

/// `φ'(x) = φ(q(x))`.
pub fn discretize(phi: &ApproxMap, h: f64) -> Result<ApproxMap> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(UlamError::precondition(format!(
            "grid must be positive, got {h}"
        )));
    }
    let inner = phi.clone();
    Ok(ApproxMap::new(
        phi.domain(),
        phi.codomain(),
        format!("discretize({}, h={h:e})", phi.provenance()),
        phi.seed(),
        move |x| inner.eval(&quantize(x, h)),
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscretizationCheck {
    pub movement: f64,
    pub lipschitz: f64,
    pub bound: f64,
}

/// Measured `sup ‖φ' − φ‖` against `Lip · c(shape) · h`, with `Lip` sampled
/// from displacements of the size the quantizer produces.
pub fn check_discretization(
    phi: &ApproxMap,
    h: f64,
    samples: usize,
    seed: u64,
) -> Result<DiscretizationCheck> {
    let shape = phi.domain().clone();
    let disc = discretize(phi, h)?;
    let probes = unit_ball_probes(&shape, samples, seed);
    let movement = disc.sup_distance(phi, &probes)?;
    let c = shape.lattice_constant();
    let step = HaarSampler::new(&shape, seed ^ 0xd15c);
    let pairs: Vec<(AlgebraElement, AlgebraElement)> = probes
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let d = step.random_contraction_at(k as u64);
            let n = d.norm().max(1e-300);
            (x.clone(), d.scale_real(c * h / n))
        })
        .collect();
    let ratios = par::try_map(&pairs, |(x, d)| {
        let diff = phi.eval(&(x + d))? - phi.eval(x)?;
        Ok(linalg::op_norm(&diff) / d.norm())
    })?;
    let lipschitz = ratios.into_iter().fold(0.0, f64::max);
    Ok(DiscretizationCheck {
        movement,
        lipschitz,
        bound: lipschitz * c * h,
    })
}
