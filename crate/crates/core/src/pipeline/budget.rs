use serde::{Deserialize, Serialize};

use crate::error::{Result, UlamError};

/// Upper limit (exclusive) on the input defect for the certified chain.
pub const BUDGET_LIMIT: f64 = 1.0 / 4096.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageBudgets {
    pub stabilize: f64,
    pub unitarize: f64,
    pub farah: f64,
    pub christensen: f64,
}

impl StageBudgets {
    pub fn total(&self) -> f64 {
        self.stabilize + self.unitarize + self.farah + self.christensen
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineBudget {
    pub eps: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub eps5: f64,
    pub eps6: f64,
    pub k: f64,
    pub final_bound: f64,
    pub stages: StageBudgets,
}

/// The chain `ε → ε₁ → … → ε₆` and the final movement bound.
pub fn compute_budget(eps: f64, k: f64) -> Result<PipelineBudget> {
    if !(0.0..BUDGET_LIMIT).contains(&eps) {
        return Err(UlamError::HypothesisViolated(format!(
            "budget needs 0 ≤ eps < 2^-12, got {eps:e}"
        )));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(UlamError::precondition(format!(
            "K must be positive, got {k}"
        )));
    }
    let eps1 = 4.0 * eps;
    let eps2 = 8.0 * eps1;
    let eps3 = eps2 * (4.0 + eps2);
    let eps4 = 2.0 * (1.0 + eps2) * eps3 / (1.0 - eps3);
    let eps5 = 8.0 * (eps4 + eps2) + 9.0 * eps1;
    let eps6 = k * eps5 + 2.0 * eps4 + 2.0 * eps2;
    let stages = StageBudgets {
        stabilize: 2.0 * eps2,
        unitarize: 2.0 * eps4,
        farah: k * eps5,
        christensen: 240.0 * eps6.sqrt(),
    };
    Ok(PipelineBudget {
        eps,
        eps1,
        eps2,
        eps3,
        eps4,
        eps5,
        eps6,
        k,
        final_bound: 240.0 * eps6.sqrt() + k * eps5 + 2.0 * eps4 + 2.0 * eps2,
        stages,
    })
}

/// `L` with `final_bound(ε) = L √ε`, evaluated at `2^-13` when `ε` lies
/// outside the certified range.
pub fn default_l(eps: f64, k: f64) -> Result<f64> {
    let e = if eps > 0.0 && eps < BUDGET_LIMIT {
        eps
    } else {
        BUDGET_LIMIT / 2.0
    };
    Ok(compute_budget(e, k)?.final_bound / e.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_eps_values() {
        let b = compute_budget(2f64.powi(-20), 50.0).unwrap();
        assert_eq!(b.eps1, 2f64.powi(-18));
        assert_eq!(b.eps2, 2f64.powi(-15));
    }

    #[test]
    fn zero_limit_and_refusals() {
        let b = compute_budget(0.0, 50.0).unwrap();
        assert_eq!(b.final_bound, 0.0);
        assert!(compute_budget(BUDGET_LIMIT, 50.0).is_err());
        assert!(compute_budget(1e-6, 0.0).is_err());
        assert!(compute_budget(-1e-6, 1.0).is_err());
    }

    #[test]
    fn stages_telescope() {
        for &e in &[1e-9, 1e-6, 1e-4, 2e-4] {
            let b = compute_budget(e, 7.0).unwrap();
            assert!((b.stages.total() - b.final_bound).abs() <= 1e-15 * b.final_bound.max(1.0));
        }
    }

    #[test]
    fn default_l_is_finite() {
        assert!(default_l(0.0, 50.0).unwrap().is_finite());
        assert!(default_l(0.1, 50.0).unwrap() > 0.0);
        let e = 1e-6;
        let b = compute_budget(e, 50.0).unwrap();
        assert!((default_l(e, 50.0).unwrap() * e.sqrt() - b.final_bound).abs() < 1e-12);
    }
}
