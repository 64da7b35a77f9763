//! Haar averaging on the unitary group of `F` and its iteration.
//!
//! Level `n + 1` of a [`GroupMap`] is `u ↦ (1/M) Σ_j ρ_n(x_j)⁻¹ ρ_n(x_j u)`
//! with a sample set `{x_j}` fixed by the seed and the level. Levels are
//! lazy and memoized on the bit pattern of `u`, so evaluating level `n`
//! costs `Mⁿ` base evaluations.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraElement, AlgebraShape, HaarSampler};
use crate::defect::ApproxMap;
use crate::error::{Result, UlamError};
use crate::linalg::{self, CMat};
use crate::par;

pub const BATCHES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSchedule {
    pub eps1: f64,
    /// `(κ_n, δ_n)`; `δ_n` underflows to zero for large `n`.
    pub levels: Vec<(f64, f64)>,
    pub log2_delta: Vec<f64>,
    pub partial_sum: f64,
}

impl IterationSchedule {
    pub fn kappa(&self, n: usize) -> f64 {
        self.levels[n].0
    }

    pub fn delta(&self, n: usize) -> f64 {
        self.levels[n].1
    }
}

/// Largest first-stage defect the schedule is certified for.
pub const SCHEDULE_LIMIT: f64 = 1.0 / 1024.0;

/// `δ_{n+1} = 2κ_n²δ_n²`, `κ_{n+1} = κ_n/(1 − κ_n²δ_n)` from `δ₀ = ε₁`,
/// `κ₀ = 2`, with the contraction claims checked at every level.
pub fn schedule(eps1: f64, n_max: usize) -> Result<IterationSchedule> {
    if !(eps1 > 0.0 && eps1 <= SCHEDULE_LIMIT) {
        return Err(UlamError::HypothesisViolated(format!(
            "schedule needs 0 < eps1 ≤ 2^-10 (first-stage defect below 2^-12 before the factor 4); got {eps1:e}"
        )));
    }
    if n_max > 1000 {
        return Err(UlamError::precondition("n_max above 1000"));
    }
    let mut kappa = 2.0f64;
    let mut log2d = eps1.log2();
    let mut levels = Vec::with_capacity(n_max + 1);
    let mut log2_delta = Vec::with_capacity(n_max + 1);
    let mut sum = 0.0;
    for n in 0..=n_max {
        let delta = log2d.exp2();
        levels.push((kappa, delta));
        log2_delta.push(log2d);
        sum += kappa * delta;

        if kappa >= 4.0 {
            return Err(UlamError::bound(format!("kappa_{n} < 4"), kappa, 4.0));
        }
        let cap = 5.0 * (1.0 - (n as f64).exp2()) + eps1.log2();
        if log2d > cap + 1e-9 {
            return Err(UlamError::bound(
                format!("log2 delta_{n} ≤ 5(1−2^n) + log2 eps1"),
                log2d,
                cap,
            ));
        }
        if sum >= 8.0 * eps1 {
            return Err(UlamError::bound(
                "partial sum of kappa·delta",
                sum,
                8.0 * eps1,
            ));
        }
        let next_kappa = kappa / (1.0 - kappa * kappa * delta);
        if next_kappa - kappa >= (-(n as f64)).exp2() {
            return Err(UlamError::bound(
                format!("kappa_{} − kappa_{n}", n + 1),
                next_kappa - kappa,
                (-(n as f64)).exp2(),
            ));
        }
        log2d = 1.0 + 2.0 * kappa.log2() + 2.0 * log2d;
        kappa = next_kappa;
    }
    Ok(IterationSchedule {
        eps1,
        levels,
        log2_delta,
        partial_sum: sum,
    })
}

/// Mean of Monte-Carlo terms and the standard error of that mean, estimated
/// from `BATCHES` interleaved batches in Frobenius norm.
pub fn batch_mean(terms: &[CMat]) -> (CMat, f64) {
    let n = terms[0].nrows();
    let mut batches = vec![(linalg::zeros(n), 0usize); BATCHES];
    for (j, t) in terms.iter().enumerate() {
        let b = &mut batches[j % BATCHES];
        b.0 += t;
        b.1 += 1;
    }
    let mut mean = linalg::zeros(n);
    for t in terms {
        mean += t;
    }
    mean = linalg::scale(&mean, 1.0 / terms.len() as f64);
    let used: Vec<CMat> = batches
        .into_iter()
        .filter(|b| b.1 > 0)
        .map(|(s, c)| linalg::scale(&s, 1.0 / c as f64))
        .collect();
    if used.len() < 2 {
        return (mean, 0.0);
    }
    let k = used.len() as f64;
    let ss: f64 = used
        .iter()
        .map(|b| linalg::frobenius(&(b - &mean)).powi(2))
        .sum();
    (mean, (ss / (k * (k - 1.0))).sqrt())
}

type Memo = Mutex<HashMap<u64, (CMat, f64)>>;

enum Level {
    Base(ApproxMap),
    Averaged {
        parent: GroupMap,
        samples: Vec<AlgebraElement>,
        inverses: Vec<CMat>,
        memo: Memo,
    },
}

/// A map `𝒰(F) → GL_N` at some averaging level.
#[derive(Clone)]
pub struct GroupMap {
    shape: AlgebraShape,
    dim: usize,
    level: usize,
    width: usize,
    seed: u64,
    inner: Arc<Level>,
}

impl fmt::Debug for GroupMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupMap")
            .field("shape", &self.shape.blocks())
            .field("dim", &self.dim)
            .field("level", &self.level)
            .field("width", &self.width)
            .field("seed", &self.seed)
            .finish()
    }
}

impl GroupMap {
    pub fn from_map(phi: &ApproxMap, seed: u64) -> GroupMap {
        GroupMap {
            shape: phi.domain().clone(),
            dim: phi.codomain(),
            level: 0,
            width: 1,
            seed,
            inner: Arc::new(Level::Base(phi.clone())),
        }
    }

    /// Next level with an explicit sample set.
    pub fn averaged_with_samples(
        parent: &GroupMap,
        samples: Vec<AlgebraElement>,
    ) -> Result<GroupMap> {
        if samples.len() < BATCHES {
            return Err(UlamError::precondition(format!(
                "need at least {BATCHES} samples for the error estimate"
            )));
        }
        let inverses = par::try_map(&samples, |x| {
            let rx = parent.eval(x)?;
            linalg::inverse_checked(&rx, "sampled rho(x_j)").map_err(|e| match e {
                UlamError::Singular { condition, .. } => UlamError::Singular {
                    what: format!("rho(x_j) at sample with key {:016x}", x.hash_key()),
                    condition,
                },
                other => other,
            })
        })?;
        Ok(GroupMap {
            shape: parent.shape.clone(),
            dim: parent.dim,
            level: parent.level + 1,
            width: samples.len(),
            seed: parent.seed,
            inner: Arc::new(Level::Averaged {
                parent: parent.clone(),
                samples,
                inverses,
                memo: Mutex::new(HashMap::new()),
            }),
        })
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Base evaluations needed per input at this level.
    pub fn evals_per_input(&self) -> usize {
        match &*self.inner {
            Level::Base(_) => 1,
            Level::Averaged {
                parent, samples, ..
            } => samples.len().saturating_mul(parent.evals_per_input()),
        }
    }

    pub fn parent(&self) -> Option<&GroupMap> {
        match &*self.inner {
            Level::Base(_) => None,
            Level::Averaged { parent, .. } => Some(parent),
        }
    }

    pub fn eval(&self, u: &AlgebraElement) -> Result<CMat> {
        Ok(self.eval_with_error(u)?.0)
    }

    /// Value and Monte-Carlo standard error of this level's average.
    pub fn eval_with_error(&self, u: &AlgebraElement) -> Result<(CMat, f64)> {
        match &*self.inner {
            Level::Base(phi) => Ok((phi.eval(u)?, 0.0)),
            Level::Averaged {
                parent,
                samples,
                inverses,
                memo,
            } => {
                let key = u.hash_key();
                if let Some(v) = memo.lock().expect("memo lock").get(&key) {
                    return Ok(v.clone());
                }
                let idx: Vec<usize> = (0..samples.len()).collect();
                let terms = par::try_map(&idx, |&j| {
                    Ok(&inverses[j] * parent.eval(&(&samples[j] * u))?)
                })?;
                let v = batch_mean(&terms);
                memo.lock().expect("memo lock").insert(key, v.clone());
                Ok(v)
            }
        }
    }

    /// The level as an evaluable map on unitaries.
    pub fn to_approx_map(&self) -> ApproxMap {
        let me = self.clone();
        ApproxMap::new(
            &self.shape,
            self.dim,
            format!("rho_{}(M={})", self.level, self.width),
            self.seed,
            move |u| me.eval(u),
        )
    }
}

/// Haar samples of level `level`, a function of `(seed, level, index)`.
pub fn level_samples(
    shape: &AlgebraShape,
    seed: u64,
    level: usize,
    width: usize,
) -> Vec<AlgebraElement> {
    let s = HaarSampler::new(shape, seed).fork(1000 + level as u64);
    (0..width as u64).map(|k| s.haar_unitary_at(k)).collect()
}

/// Unitary probe pairs `(u, v)` for defect measurement.
pub fn probe_pairs(
    shape: &AlgebraShape,
    seed: u64,
    count: usize,
) -> Vec<(AlgebraElement, AlgebraElement)> {
    let s = HaarSampler::new(shape, seed).fork(77);
    (0..count as u64)
        .map(|k| (s.haar_unitary_at(2 * k), s.haar_unitary_at(2 * k + 1)))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    /// `sup ‖ρ(u)⁻¹‖` over probes.
    pub kappa: f64,
    /// `sup ‖ρ(uv) − ρ(u)ρ(v)‖` over probe pairs.
    pub delta: f64,
    pub norm: f64,
    /// `3 ×` the largest standard error at a probe.
    pub mc_value: f64,
    /// Error budget for `delta`, propagated through the product.
    pub mc_defect: f64,
}

pub fn measure(rho: &GroupMap, pairs: &[(AlgebraElement, AlgebraElement)]) -> Result<LevelStats> {
    let rows = par::try_map(pairs, |(u, v)| {
        let (ru, su) = rho.eval_with_error(u)?;
        let (rv, sv) = rho.eval_with_error(v)?;
        let (ruv, suv) = rho.eval_with_error(&(u * v))?;
        let inv_u = linalg::inverse_checked(&ru, "rho(u) at a probe")?;
        let inv_v = linalg::inverse_checked(&rv, "rho(v) at a probe")?;
        let kappa = linalg::op_norm(&inv_u).max(linalg::op_norm(&inv_v));
        let delta = linalg::op_norm(&(&ruv - &ru * &rv));
        let norm = linalg::op_norm(&ru).max(linalg::op_norm(&rv));
        Ok((kappa, delta, norm, su.max(sv).max(suv)))
    })?;
    let mut s = LevelStats::default();
    for (k, d, n, e) in rows {
        s.kappa = s.kappa.max(k);
        s.delta = s.delta.max(d);
        s.norm = s.norm.max(n);
        s.mc_value = s.mc_value.max(3.0 * e);
    }
    s.mc_defect = s.mc_value * (1.0 + 2.0 * s.norm + s.mc_value);
    Ok(s)
}

/// `sup ‖a(u) − b(u)‖` over the probe unitaries.
pub fn probe_distance(
    a: &GroupMap,
    b: &GroupMap,
    pairs: &[(AlgebraElement, AlgebraElement)],
) -> Result<f64> {
    let d = par::try_map(pairs, |(u, v)| {
        let du = linalg::op_norm(&(a.eval(u)? - b.eval(u)?));
        let dv = linalg::op_norm(&(a.eval(v)? - b.eval(v)?));
        Ok(du.max(dv))
    })?;
    Ok(d.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub level: usize,
    pub kappa: f64,
    pub delta: f64,
    pub mc: f64,
    pub movement: f64,
}

impl LevelTrace {
    pub const CSV_HEADER: &'static str = "level,kappa,delta,mc,movement";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e}",
            self.level, self.kappa, self.delta, self.mc, self.movement
        )
    }
}

pub fn trace_csv(trace: &[LevelTrace]) -> String {
    let mut s = String::from(LevelTrace::CSV_HEADER);
    s.push('\n');
    for t in trace {
        s.push_str(&t.csv_row());
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct AveragingChecks {
    pub before: LevelStats,
    pub after: LevelStats,
    pub closeness: f64,
    pub closeness_bound: f64,
    pub inverse_bound: f64,
    pub defect_bound: f64,
}

impl AveragingChecks {
    pub fn all_hold(&self) -> bool {
        self.closeness <= self.closeness_bound
            && self.after.kappa <= self.inverse_bound
            && self.after.delta <= self.defect_bound
    }
}

#[derive(Clone, Debug)]
pub struct AveragingStep {
    pub map: GroupMap,
    pub checks: AveragingChecks,
}

/// Floating-point allowance on every averaging bound.
const ROUNDING: f64 = 1e-12;

/// One averaging pass with `M` fixed Haar samples, measured on probe pairs.
pub fn average_once(
    rho: &GroupMap,
    width: usize,
    pairs: &[(AlgebraElement, AlgebraElement)],
) -> Result<AveragingStep> {
    let before = measure(rho, pairs)?;
    average_measured(rho, width, pairs, before)
}

fn average_measured(
    rho: &GroupMap,
    width: usize,
    pairs: &[(AlgebraElement, AlgebraElement)],
    before: LevelStats,
) -> Result<AveragingStep> {
    let (k, d) = (before.kappa, before.delta);
    if d * k * k >= 1.0 {
        return Err(UlamError::HypothesisViolated(format!(
            "averaging needs delta < kappa^-2; measured delta = {d:e}, kappa = {k}"
        )));
    }
    let samples = level_samples(rho.shape(), rho.seed(), rho.level(), width);
    let next = GroupMap::averaged_with_samples(rho, samples)?;
    let after = measure(&next, pairs)?;
    let closeness = probe_distance(&next, rho, pairs)?;
    let mc = after.mc_value + before.mc_value;
    let checks = AveragingChecks {
        closeness,
        closeness_bound: k * d + mc + ROUNDING,
        inverse_bound: k / (1.0 - k * k * d) + mc + ROUNDING,
        defect_bound: 2.0 * k * k * d * d + after.mc_defect + before.mc_defect + ROUNDING,
        before,
        after,
    };
    Ok(AveragingStep { map: next, checks })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilizeOptions {
    pub width: usize,
    pub tol: f64,
    pub max_levels: usize,
    pub max_evals_per_probe: usize,
    pub probe_pairs: usize,
}

impl Default for StabilizeOptions {
    fn default() -> Self {
        StabilizeOptions {
            width: 256,
            tol: 1e-8,
            max_levels: 3,
            max_evals_per_probe: 4096,
            probe_pairs: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    MeasuredBelowTol,
    ScheduleBelowTol,
    LevelCap,
    CostCap,
}

#[derive(Clone, Debug)]
pub struct Stabilized {
    pub map: GroupMap,
    pub trace: Vec<LevelTrace>,
    pub schedule: Option<IterationSchedule>,
    pub movement: f64,
    pub movement_bound: f64,
    pub final_stats: LevelStats,
    pub stop: StopReason,
}

impl Stabilized {
    pub fn certified(&self) -> bool {
        self.schedule.is_some()
    }
}

/// Iterate [`average_once`] until the measured defect or the scheduled
/// `δ_n` drops below `tol`, or a level or cost cap is reached.
pub fn stabilize(rho0: &GroupMap, eps1: f64, opts: &StabilizeOptions) -> Result<Stabilized> {
    let pairs = probe_pairs(rho0.shape(), rho0.seed(), opts.probe_pairs);
    let mut stats = measure(rho0, &pairs)?;
    if stats.kappa > 2.0 + 1e-9 {
        return Err(UlamError::HypothesisViolated(format!(
            "initial inverse bound {} exceeds 2",
            stats.kappa
        )));
    }
    if stats.delta > eps1 {
        return Err(UlamError::HypothesisViolated(format!(
            "initial defect {:e} exceeds eps1 = {eps1:e}",
            stats.delta
        )));
    }
    let sched = if eps1 <= SCHEDULE_LIMIT {
        Some(schedule(eps1, opts.max_levels.max(1))?)
    } else {
        None
    };
    let mut trace = vec![LevelTrace {
        level: 0,
        kappa: stats.kappa,
        delta: stats.delta,
        mc: 0.0,
        movement: 0.0,
    }];
    let mut rho = rho0.clone();
    let stop = loop {
        let n = rho.level();
        if stats.delta < opts.tol {
            break StopReason::MeasuredBelowTol;
        }
        if sched
            .as_ref()
            .is_some_and(|s| n < s.levels.len() && s.delta(n) < opts.tol)
        {
            break StopReason::ScheduleBelowTol;
        }
        if n >= opts.max_levels {
            break StopReason::LevelCap;
        }
        if rho.evals_per_input().saturating_mul(opts.width) > opts.max_evals_per_probe {
            break StopReason::CostCap;
        }
        let step = average_measured(&rho, opts.width, &pairs, stats.clone())?;
        let c = &step.checks;
        trace.push(LevelTrace {
            level: n + 1,
            kappa: c.after.kappa,
            delta: c.after.delta,
            mc: c.after.mc_defect,
            movement: c.closeness,
        });
        if c.after.delta > c.defect_bound {
            return Err(UlamError::ContractionFailed {
                level: n + 1,
                measured: c.after.delta,
                bound: c.defect_bound,
                trace,
            });
        }
        stats = c.after.clone();
        rho = step.map;
    };
    Ok(Stabilized {
        movement: probe_distance(&rho, rho0, &pairs)?,
        movement_bound: 8.0 * eps1,
        map: rho,
        trace,
        schedule: sched,
        final_stats: stats,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::{
        exact_homomorphism, hermitian_conjugator, perturb_additive, perturb_conjugate,
        EmbeddingSpec,
    };

    fn m2() -> AlgebraShape {
        AlgebraShape::full(2).unwrap()
    }

    fn psi() -> ApproxMap {
        exact_homomorphism(&EmbeddingSpec::standard(&m2(), vec![2], 0).unwrap()).unwrap()
    }

    #[test]
    fn schedule_first_level() {
        let s = schedule(1.0 / 1024.0, 6).unwrap();
        assert_eq!(s.levels[0], (2.0, 1.0 / 1024.0));
        assert_eq!(s.delta(1), 2f64.powi(-17));
        assert!((s.kappa(1) - 2.0 / (1.0 - 2f64.powi(-8))).abs() < 1e-15);
        assert!((s.kappa(1) - 2.007843).abs() < 1e-6);
        assert!(s.partial_sum < 8.0 / 1024.0);
    }

    #[test]
    fn schedule_refuses_large_eps() {
        let e = schedule(2f64.powi(-9), 3).unwrap_err();
        assert!(e.to_string().contains("2^-10"));
        assert!(schedule(0.0, 3).is_err());
    }

    #[test]
    fn schedule_deep_levels_stay_finite() {
        let s = schedule(1e-6, 40).unwrap();
        assert!(s.log2_delta[40].is_finite());
        assert!(s.levels.iter().all(|&(k, _)| k < 4.0));
    }

    #[test]
    fn batch_mean_of_constants() {
        let c = linalg::identity(3);
        let (m, se) = batch_mean(&vec![c.clone(); 16]);
        assert_eq!(m, c);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn multiplicative_fixed_point() {
        let rho = GroupMap::from_map(&psi(), 3);
        let pairs = probe_pairs(&m2(), 3, 4);
        let step = average_once(&rho, 16, &pairs).unwrap();
        assert!(probe_distance(&step.map, &rho, &pairs).unwrap() < 1e-12);
        assert!(step.checks.all_hold(), "{:?}", step.checks);
    }

    #[test]
    fn conjugated_input_is_multiplicative() {
        let phi = perturb_conjugate(&psi(), &hermitian_conjugator(4, 0.01, 2)).unwrap();
        let rho = GroupMap::from_map(&phi, 1);
        let pairs = probe_pairs(&m2(), 1, 8);
        let step = average_once(&rho, 64, &pairs).unwrap();
        let c = &step.checks;
        assert!(c.before.kappa <= 2.1);
        assert!(c.all_hold(), "{c:?}");
    }

    #[test]
    fn additive_input_contracts_up_to_mc() {
        let phi = perturb_additive(&psi(), 1e-3, 4).unwrap();
        let rho = GroupMap::from_map(&phi, 5);
        let pairs = probe_pairs(&m2(), 5, 8);
        let step = average_once(&rho, 64, &pairs).unwrap();
        let c = &step.checks;
        assert!(c.before.delta > 1e-4);
        assert!(c.all_hold(), "{c:?}");
    }

    #[test]
    fn hypothesis_refused() {
        let s = AlgebraShape::full(1).unwrap();
        let bad = ApproxMap::new(&s, 1, "squared", 0, |u| {
            let z = u.entry(0, 0, 0);
            Ok(CMat::from_element(1, 1, z * z * 0.5))
        });
        let rho = GroupMap::from_map(&bad, 0);
        let pairs = probe_pairs(&s, 0, 4);
        assert!(matches!(
            average_once(&rho, 16, &pairs),
            Err(UlamError::HypothesisViolated(_))
        ));
    }

    #[test]
    fn stabilize_exact_is_level_zero() {
        let rho = GroupMap::from_map(&psi(), 1);
        let out = stabilize(&rho, 1e-3, &StabilizeOptions::default()).unwrap();
        assert_eq!(out.map.level(), 0);
        assert_eq!(out.stop, StopReason::MeasuredBelowTol);
        assert_eq!(out.movement, 0.0);
    }

    #[test]
    fn stabilize_additive_within_movement_bound() {
        let eta = 5e-5;
        let phi = perturb_additive(&psi(), eta, 8).unwrap();
        let rho = GroupMap::from_map(&phi, 2);
        let opts = StabilizeOptions {
            width: 64,
            max_evals_per_probe: 64 * 64,
            probe_pairs: 6,
            ..Default::default()
        };
        let eps1 = 4.0 * 4.0 * eta;
        let out = stabilize(&rho, eps1, &opts).unwrap();
        assert!(out.certified());
        assert!(out.map.level() >= 1);
        assert!(out.movement <= 8.0 * eps1, "{}", out.movement);
        let sched = out.schedule.as_ref().unwrap();
        for t in &out.trace {
            assert!(t.delta <= sched.delta(t.level) + t.mc, "{t:?}");
        }
    }

    #[test]
    fn memo_is_deterministic() {
        let phi = perturb_additive(&psi(), 1e-3, 4).unwrap();
        let rho = GroupMap::from_map(&phi, 5);
        let a = GroupMap::averaged_with_samples(&rho, level_samples(&m2(), 5, 0, 16)).unwrap();
        let b = GroupMap::averaged_with_samples(&rho, level_samples(&m2(), 5, 0, 16)).unwrap();
        let u = HaarSampler::new(&m2(), 1).haar_unitary_at(0);
        assert_eq!(a.eval(&u).unwrap(), b.eval(&u).unwrap());
        assert_eq!(a.eval(&u).unwrap(), a.eval(&u).unwrap());
    }

    #[test]
    fn trace_csv_rows() {
        let t = vec![LevelTrace {
            level: 1,
            kappa: 2.0,
            delta: 1e-3,
            mc: 1e-4,
            movement: 0.0,
        }];
        let csv = trace_csv(&t);
        assert_eq!(csv.lines().next().unwrap(), LevelTrace::CSV_HEADER);
        assert_eq!(csv.lines().count(), 2);
    }
}
