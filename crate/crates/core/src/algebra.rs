//! Finite-dimensional C*-algebras `⊕_b M_{n_b}` and their elements.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UlamError};
use crate::linalg::{self, CMat, HermEig, C64, ONE, ZERO};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlgebraShape {
    blocks: Vec<usize>,
}

impl AlgebraShape {
    pub fn new(blocks: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(UlamError::InvalidShape("no blocks".into()));
        }
        if blocks.contains(&0) {
            return Err(UlamError::InvalidShape(format!(
                "block sizes must be positive: {blocks:?}"
            )));
        }
        Ok(AlgebraShape { blocks })
    }

    /// `M_n`.
    pub fn full(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// `Σ n_b²`.
    pub fn linear_dim(&self) -> usize {
        self.blocks.iter().map(|n| n * n).sum()
    }

    /// Quantization norm constant `sqrt(2 Σ n_b²)`.
    pub fn lattice_constant(&self) -> f64 {
        (2.0 * self.linear_dim() as f64).sqrt()
    }

    /// Parse `"1,2"` style block lists.
    pub fn parse(s: &str) -> Result<Self> {
        let blocks = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| UlamError::InvalidShape(format!("bad block size {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks)
    }

    pub fn label(&self) -> String {
        self.blocks
            .iter()
            .map(|n| {
                if *n == 1 {
                    "C".to_string()
                } else {
                    format!("M{n}")
                }
            })
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Every matrix unit `(block, i, j)`.
    pub fn matrix_units(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.linear_dim());
        for (b, &n) in self.blocks.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    out.push((b, i, j));
                }
            }
        }
        out
    }
}

/// Block-diagonal element of a finite-dimensional C*-algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    shape: AlgebraShape,
    blocks: Vec<CMat>,
}

impl AlgebraElement {
    pub fn from_blocks(shape: &AlgebraShape, blocks: Vec<CMat>) -> Result<Self> {
        let found: Vec<usize> = blocks.iter().map(|b| b.nrows()).collect();
        if found != shape.blocks || blocks.iter().any(|b| !b.is_square()) {
            return Err(UlamError::ShapeMismatch {
                expected: shape.blocks.clone(),
                found,
            });
        }
        Ok(AlgebraElement {
            shape: shape.clone(),
            blocks,
        })
    }

    pub fn zero(shape: &AlgebraShape) -> Self {
        Self::from_fn(shape, |_, n| linalg::zeros(n))
    }

    pub fn identity(shape: &AlgebraShape) -> Self {
        Self::from_fn(shape, |_, n| linalg::identity(n))
    }

    /// Build each block from `(block index, block size)`.
    pub fn from_fn(shape: &AlgebraShape, mut f: impl FnMut(usize, usize) -> CMat) -> Self {
        let blocks = shape
            .blocks
            .iter()
            .enumerate()
            .map(|(b, &n)| f(b, n))
            .collect();
        AlgebraElement {
            shape: shape.clone(),
            blocks,
        }
    }

    /// `e^b_{ij}`.
    pub fn matrix_unit(shape: &AlgebraShape, block: usize, i: usize, j: usize) -> Self {
        Self::from_fn(shape, |b, n| {
            let mut m = linalg::zeros(n);
            if b == block {
                m[(i, j)] = ONE;
            }
            m
        })
    }

    pub fn scalar(shape: &AlgebraShape, c: C64) -> Self {
        Self::identity(shape).scale(c)
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &CMat {
        &self.blocks[b]
    }

    pub fn adjoint(&self) -> Self {
        self.map_blocks(|m| m.adjoint())
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map_blocks(|m| m * c)
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(Complex::new(c, 0.0))
    }

    pub fn map_blocks(&self, f: impl Fn(&CMat) -> CMat) -> Self {
        AlgebraElement {
            shape: self.shape.clone(),
            blocks: self.blocks.iter().map(f).collect(),
        }
    }

    fn zip_blocks(&self, other: &Self, f: impl Fn(&CMat, &CMat) -> CMat) -> Self {
        assert_eq!(self.shape, other.shape, "algebra shapes differ");
        AlgebraElement {
            shape: self.shape.clone(),
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    /// Max over blocks of the largest singular value.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    /// `‖u*u − 1‖`, per-block maximum.
    pub fn unitarity_residual(&self) -> f64 {
        self.blocks
            .iter()
            .map(linalg::unitarity_residual)
            .fold(0.0, f64::max)
    }

    pub fn is_identity(&self) -> bool {
        self.blocks.iter().all(|m| {
            m.iter().enumerate().all(|(k, z)| {
                let (r, c) = (k % m.nrows(), k / m.nrows());
                *z == if r == c { ONE } else { ZERO }
            })
        })
    }

    /// Entry `(i, j)` of block `b`.
    pub fn entry(&self, b: usize, i: usize, j: usize) -> C64 {
        self.blocks[b][(i, j)]
    }

    /// Block-diagonal matrix of size `Σ n_b`.
    pub fn to_block_diagonal(&self) -> CMat {
        linalg::direct_sum(&self.blocks)
    }

    /// Stable 64-bit key over the exact bit patterns of every entry.
    pub fn hash_key(&self) -> u64 {
        let mut h = 0x9e37_79b9_7f4a_7c15u64;
        for m in &self.blocks {
            h = mix(h ^ m.nrows() as u64);
            for z in m.iter() {
                h = mix(h ^ z.re.to_bits());
                h = mix(h ^ z.im.to_bits());
            }
        }
        h
    }

    /// Apply a real function to each self-adjoint block.
    pub fn hermitian_function(&self, f: impl Fn(f64) -> f64) -> Self {
        self.map_blocks(|m| HermEig::new(m).apply(|x| Complex::new(f(x), 0.0)))
    }
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Add for &AlgebraElement {
    type Output = AlgebraElement;
    fn add(self, rhs: &AlgebraElement) -> AlgebraElement {
        self.zip_blocks(rhs, |a, b| a + b)
    }
}

impl Sub for &AlgebraElement {
    type Output = AlgebraElement;
    fn sub(self, rhs: &AlgebraElement) -> AlgebraElement {
        self.zip_blocks(rhs, |a, b| a - b)
    }
}

impl Mul for &AlgebraElement {
    type Output = AlgebraElement;
    fn mul(self, rhs: &AlgebraElement) -> AlgebraElement {
        self.zip_blocks(rhs, |a, b| a * b)
    }
}

/// Deterministic sampler of Haar unitaries and unit-ball elements.
///
/// Sample `k` depends only on `(seed, k)`; child samplers are forked by
/// deriving a fresh seed, never by sharing state.
#[derive(Clone, Debug)]
pub struct HaarSampler {
    shape: AlgebraShape,
    seed: u64,
    counter: u64,
}

impl HaarSampler {
    pub fn new(shape: &AlgebraShape, seed: u64) -> Self {
        HaarSampler {
            shape: shape.clone(),
            seed,
            counter: 0,
        }
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn fork(&self, child: u64) -> HaarSampler {
        HaarSampler::new(&self.shape, mix(self.seed ^ mix(child.wrapping_add(1))))
    }

    fn rng_at(&self, counter: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(counter);
        rng
    }

    fn next_rng(&mut self) -> ChaCha8Rng {
        let rng = self.rng_at(self.counter);
        self.counter += 1;
        rng
    }

    pub fn haar_unitary(&mut self) -> AlgebraElement {
        let mut rng = self.next_rng();
        AlgebraElement::from_fn(&self.shape, |_, n| haar_matrix(&mut rng, n))
    }

    /// Haar unitary at a fixed counter, without advancing.
    pub fn haar_unitary_at(&self, counter: u64) -> AlgebraElement {
        let mut rng = self.rng_at(counter);
        AlgebraElement::from_fn(&self.shape, |_, n| haar_matrix(&mut rng, n))
    }

    /// Gaussian element rescaled to a norm drawn uniformly from `[0, 1]`.
    pub fn random_contraction(&mut self) -> AlgebraElement {
        let mut rng = self.next_rng();
        contraction_from(&self.shape, &mut rng)
    }

    pub fn random_contraction_at(&self, counter: u64) -> AlgebraElement {
        let mut rng = self.rng_at(counter);
        contraction_from(&self.shape, &mut rng)
    }

    /// Uniform point of the closed unit disc.
    pub fn random_scalar(&mut self) -> C64 {
        let mut rng = self.next_rng();
        unit_disc(&mut rng)
    }

    pub fn random_scalar_at(&self, counter: u64) -> C64 {
        let mut rng = self.rng_at(counter);
        unit_disc(&mut rng)
    }

    /// Random Hermitian `n×n` matrix of operator norm one.
    pub fn random_hermitian(&mut self, n: usize) -> CMat {
        let mut rng = self.next_rng();
        let g = gaussian_matrix(&mut rng, n, n);
        let h = linalg::hermitian_part(&g);
        let norm = linalg::op_norm(&h);
        linalg::scale(&h, 1.0 / norm)
    }

    /// Haar unitary of `U(n)`, independent of the algebra shape.
    pub fn haar_matrix(&mut self, n: usize) -> CMat {
        let mut rng = self.next_rng();
        haar_matrix(&mut rng, n)
    }

    pub fn gaussian(&mut self, rows: usize, cols: usize) -> CMat {
        let mut rng = self.next_rng();
        gaussian_matrix(&mut rng, rows, cols)
    }
}

fn unit_disc(rng: &mut impl Rng) -> C64 {
    let r: f64 = rng.random::<f64>().sqrt();
    let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    Complex::from_polar(r, t)
}

fn contraction_from(shape: &AlgebraShape, rng: &mut impl Rng) -> AlgebraElement {
    let g = AlgebraElement::from_fn(shape, |_, n| gaussian_matrix(rng, n, n));
    let r: f64 = rng.random();
    let norm = g.norm();
    if norm == 0.0 {
        return AlgebraElement::zero(shape);
    }
    g.scale_real(r / norm)
}

/// Matrix of independent standard complex Gaussians (`E|z|² = 1`).
pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re * s, im * s)
    })
}

/// QR of a Ginibre matrix with the phases of `diag(R)` divided out.
pub fn haar_matrix(rng: &mut impl Rng, n: usize) -> CMat {
    let g = gaussian_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() == 0.0 { ONE } else { d / d.norm() };
        for row in 0..n {
            q[(row, k)] *= phase;
        }
    }
    q
}

/// Write `a = Σ λ_j u_j` with at most four unitaries and `|λ_j| ≤ ‖a‖`.
pub fn four_unitaries(a: &AlgebraElement) -> Vec<(AlgebraElement, C64)> {
    let norm = a.norm();
    let mut out = Vec::with_capacity(4);
    if norm == 0.0 {
        return out;
    }
    let half = Complex::new(0.5, 0.0);
    let real = (a + &a.adjoint()).scale(half);
    let imag = (a - &a.adjoint()).scale(Complex::new(0.0, -0.5));
    for (part, coeff) in [(real, ONE), (imag, linalg::I)] {
        if part.norm() <= 1e-300 {
            continue;
        }
        let h = part.scale_real(1.0 / norm);
        let (u, u_star) = self_adjoint_to_unitaries(&h);
        let lambda = coeff * Complex::new(0.5 * norm, 0.0);
        out.push((u, lambda));
        out.push((u_star, lambda));
    }
    out
}

/// For self-adjoint `h` with `‖h‖ ≤ 1`, `u = h + i sqrt(1 − h²)` so that
/// `h = (u + u*)/2`.
fn self_adjoint_to_unitaries(h: &AlgebraElement) -> (AlgebraElement, AlgebraElement) {
    let root = h.hermitian_function(|x| (1.0 - x * x).max(0.0).sqrt());
    let h_sym = h.map_blocks(linalg::hermitian_part);
    let u = &h_sym + &root.scale(linalg::I);
    let u_star = u.adjoint();
    (u, u_star)
}

pub fn reconstruct(terms: &[(AlgebraElement, C64)], shape: &AlgebraShape) -> AlgebraElement {
    terms
        .iter()
        .fold(AlgebraElement::zero(shape), |acc, (u, c)| {
            &acc + &u.scale(*c)
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(b: &[usize]) -> AlgebraShape {
        AlgebraShape::new(b.to_vec()).unwrap()
    }

    #[test]
    fn shape_rejects_empty_and_zero() {
        assert!(AlgebraShape::new(vec![]).is_err());
        assert!(AlgebraShape::new(vec![2, 0]).is_err());
        assert_eq!(shape(&[1, 2]).linear_dim(), 5);
    }

    #[test]
    fn identity_norm_is_one() {
        for s in [shape(&[1]), shape(&[3]), shape(&[1, 2, 4])] {
            assert!((AlgebraElement::identity(&s).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn norm_is_block_maximum() {
        let s = shape(&[2, 3]);
        let mut sampler = HaarSampler::new(&s, 3);
        let u = sampler.haar_unitary();
        let e = AlgebraElement::from_blocks(
            &s,
            vec![
                u.block(0) * Complex::new(0.5, 0.0),
                u.block(1) * Complex::new(0.9, 0.0),
            ],
        )
        .unwrap();
        assert!((e.norm() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn u1_sample_is_a_phase() {
        let mut sampler = HaarSampler::new(&shape(&[1]), 11);
        for _ in 0..20 {
            let u = sampler.haar_unitary();
            assert!((u.entry(0, 0, 0).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_is_deterministic_and_unitary() {
        let s = shape(&[2, 3]);
        let a = HaarSampler::new(&s, 42).haar_unitary();
        let b = HaarSampler::new(&s, 42).haar_unitary();
        assert_eq!(a, b);
        assert!(a.unitarity_residual() <= 1e-12);
        let mut sampler = HaarSampler::new(&s, 42);
        sampler.haar_unitary();
        assert_eq!(sampler.counter(), 1);
        assert_ne!(sampler.haar_unitary(), a);
    }

    #[test]
    fn haar_mean_vanishes() {
        let s = shape(&[2]);
        let mut sampler = HaarSampler::new(&s, 7);
        let mut acc = linalg::zeros(2);
        let count = 10_000;
        for _ in 0..count {
            acc += sampler.haar_unitary().block(0);
        }
        acc /= Complex::new(count as f64, 0.0);
        assert!(acc.iter().all(|z| z.norm() <= 0.05), "{acc}");
    }

    #[test]
    fn contraction_in_unit_ball_and_spread() {
        let s = shape(&[1, 2]);
        let mut sampler = HaarSampler::new(&s, 5);
        let norms: Vec<f64> = (0..1000)
            .map(|_| sampler.random_contraction().norm())
            .collect();
        assert!(norms.iter().all(|&n| n <= 1.0 + 1e-12));
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        let var = norms.iter().map(|n| (n - mean).powi(2)).sum::<f64>() / (norms.len() - 1) as f64;
        assert!(var.sqrt() > 0.0);
        // doubling breaks the contract for all but tiny samples
        assert!(norms.iter().any(|&n| 2.0 * n > 1.0));
    }

    #[test]
    fn four_unitaries_identity_and_zero() {
        let s = shape(&[2]);
        let one = AlgebraElement::identity(&s);
        let terms = four_unitaries(&one);
        assert_eq!(terms.len(), 2);
        for (u, c) in &terms {
            assert!((u - &one).norm() < 1e-12);
            assert!((c - Complex::new(0.5, 0.0)).norm() < 1e-15);
        }
        assert!(four_unitaries(&AlgebraElement::zero(&s)).is_empty());
    }

    #[test]
    fn four_unitaries_random_m3() {
        let s = shape(&[3]);
        let mut sampler = HaarSampler::new(&s, 9);
        let a = sampler.random_contraction();
        let a = a.scale_real(2.0 / a.norm());
        let terms = four_unitaries(&a);
        assert!(terms.len() <= 4);
        let back = reconstruct(&terms, &s);
        assert!((&back - &a).norm() < 1e-12);
        for (u, c) in &terms {
            assert!(c.norm() <= 2.0 + 1e-12);
            assert!(u.unitarity_residual() < 1e-12);
        }
    }
}
