//! Sizing a design for a population, and test-count comparisons against
//! classical pooling schemes.

use crate::design::{is_prime, DesignParams};
use thiserror::Error;

/// Largest pool size considered when sizing a design.
pub const DEFAULT_MAX_POOL_SIZE: u64 = 10_007;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BudgetError {
    #[error("prevalence must lie in (0, 1), got {0}")]
    PrevalenceOutOfRange(f64),
    #[error("need at least 4 people, got {0}")]
    TooFewPeople(u64),
    #[error("no prime pool size up to {max_q} exceeds s = {s}")]
    InfeasiblePrevalence { s: u64, max_q: u64 },
    #[error("pool size must be at least 2, got {0}")]
    PoolTooSmall(u64),
    #[error("expected number of infected s = {0} is below 2; the bound needs log2(s) > 0")]
    DegenerateS(f64),
}

// Guards products such as 0.01 * 900 against landing just above an integer.
fn ceil_tolerant(x: f64) -> u64 {
    (x - 1e-9).ceil().max(0.0) as u64
}

/// Picks `(q, s)` for `n_people` at the given prevalence: `s = ceil(p n)`
/// and `q` the smallest prime with `q >= ceil(sqrt(n))` and `q > s`.
/// The design then covers `q^2 >= n` slots; unused slots stay empty.
pub fn plan_for_population(n_people: u64, prevalence: f64) -> Result<DesignParams, BudgetError> {
    plan_for_population_with_cap(n_people, prevalence, DEFAULT_MAX_POOL_SIZE)
}

pub fn plan_for_population_with_cap(
    n_people: u64,
    prevalence: f64,
    max_q: u64,
) -> Result<DesignParams, BudgetError> {
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(BudgetError::PrevalenceOutOfRange(prevalence));
    }
    if n_people < 4 {
        return Err(BudgetError::TooFewPeople(n_people));
    }
    let s = ceil_tolerant(prevalence * n_people as f64).max(1);
    let mut q = ceil_tolerant((n_people as f64).sqrt()).max(s + 1);
    while q <= max_q {
        if is_prime(q) {
            return Ok(DesignParams::new(q, s).expect("q is prime and exceeds s"));
        }
        q += 1;
    }
    Err(BudgetError::InfeasiblePrevalence { s, max_q })
}

/// Expected tests per individual for two-stage Dorfman pooling with pool
/// size `k`: `1/k + 1 - (1 - p)^k`.
pub fn budget_dorfman(prevalence: f64, pool_size: u64) -> Result<f64, BudgetError> {
    if !(0.0..1.0).contains(&prevalence) {
        return Err(BudgetError::PrevalenceOutOfRange(prevalence));
    }
    if pool_size < 2 {
        return Err(BudgetError::PoolTooSmall(pool_size));
    }
    let k = pool_size as f64;
    Ok(1.0 / k + 1.0 - (1.0 - prevalence).powf(k))
}

/// Dorfman pool size minimizing the expected tests, searched over
/// `k in [2, max(2, ceil(3 / sqrt(p)))]`. Returns `(k, tests per individual)`.
pub fn dorfman_optimum(prevalence: f64) -> Result<(u64, f64), BudgetError> {
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(BudgetError::PrevalenceOutOfRange(prevalence));
    }
    let hi = ((3.0 / prevalence.sqrt()).ceil() as u64).max(2);
    let mut best = (2, budget_dorfman(prevalence, 2)?);
    for k in 3..=hi {
        let v = budget_dorfman(prevalence, k)?;
        if v < best.1 {
            best = (k, v);
        }
    }
    Ok(best)
}

/// Tests per individual of the disjunct-matrix bound
/// `2 s^2 log2(N) / log2(s)` with `s = p N`.
pub fn budget_disjunct_bound(n_people: u64, prevalence: f64) -> Result<f64, BudgetError> {
    if !(prevalence > 0.0 && prevalence <= 1.0) {
        return Err(BudgetError::PrevalenceOutOfRange(prevalence));
    }
    let n = n_people as f64;
    let s = prevalence * n;
    if s < 2.0 {
        return Err(BudgetError::DegenerateS(s));
    }
    Ok(2.0 * s * s * n.log2() / s.log2() / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plans() {
        let p = plan_for_population(900, 0.01).unwrap();
        assert_eq!((p.q(), p.s()), (31, 9));
        assert!((p.tests_per_individual() - 10.0 / 31.0).abs() < 1e-15);
        let p = plan_for_population(10_000, 0.001).unwrap();
        assert_eq!((p.q(), p.s()), (101, 10));
        assert!((p.tests_per_individual() - 0.11).abs() < 2e-3);
        let p = plan_for_population(4, 0.25).unwrap();
        assert_eq!((p.q(), p.s()), (2, 1));
    }

    #[test]
    fn plan_raises_q_above_s() {
        let p = plan_for_population(100, 0.5).unwrap();
        assert_eq!((p.q(), p.s()), (53, 50));
    }

    #[test]
    fn plan_errors() {
        assert!(matches!(plan_for_population(900, 0.0), Err(BudgetError::PrevalenceOutOfRange(_))));
        assert!(matches!(plan_for_population(3, 0.5), Err(BudgetError::TooFewPeople(3))));
        assert_eq!(
            plan_for_population_with_cap(10_000, 0.5, 1000),
            Err(BudgetError::InfeasiblePrevalence { s: 5000, max_q: 1000 })
        );
    }

    #[test]
    fn dorfman_values() {
        let direct = 1.0 / 11.0 + 1.0 - 0.99f64.powi(11);
        assert_eq!(budget_dorfman(0.01, 11).unwrap(), direct);
        assert!((direct - 0.19558).abs() < 1e-5);
        assert!((budget_dorfman(0.001, 32).unwrap() - 0.0628).abs() < 1e-3);
        assert_eq!(budget_dorfman(0.0, 8).unwrap(), 0.125);
        assert!(budget_dorfman(0.1, 1).is_err());
    }

    #[test]
    fn dorfman_optimum_near_inverse_sqrt() {
        assert_eq!(dorfman_optimum(0.01).unwrap().0, 11);
        assert_eq!(dorfman_optimum(0.001).unwrap().0, 32);
    }

    #[test]
    fn disjunct_bound() {
        assert!((budget_disjunct_bound(900, 0.01).unwrap() - 0.5573).abs() < 1e-4);
        // log2(10000) / log2(10) = 4, so 2 * 100 * 4 / 10000
        assert!((budget_disjunct_bound(10_000, 0.001).unwrap() - 0.08).abs() < 1e-12);
        assert!(budget_disjunct_bound(50, 1.0).unwrap() > 1.0);
        assert!(matches!(budget_disjunct_bound(100, 0.01), Err(BudgetError::DegenerateS(_))));
    }
}
