//! Infection calls from NNLAD estimates or from raw test outcomes.

use crate::design::{DesignCertificate, PoolingDesign};
use crate::nnlad::NnladSolution;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfectionCall {
    pub individual: usize,
    pub infected: bool,
    /// Estimated virus count; always 0 for the classical decoder.
    #[serde(rename = "load")]
    pub estimated_load: f64,
}

/// A person counts as infected when their specimen holds more than
/// `epsilon` viruses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdPolicy {
    epsilon: f64,
}

impl ThresholdPolicy {
    pub const DEFAULT_EPSILON: f64 = 10.0;

    pub fn new(epsilon: f64) -> Option<Self> {
        (epsilon > 0.0 && epsilon.is_finite()).then_some(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self { epsilon: Self::DEFAULT_EPSILON }
    }
}

/// Flags individual `n` iff `x#_n > epsilon / 2`.
pub fn classify_nnlad(solution: &NnladSolution, policy: ThresholdPolicy) -> Vec<InfectionCall> {
    let cut = policy.epsilon / 2.0;
    solution
        .estimate
        .iter()
        .enumerate()
        .map(|(individual, &load)| InfectionCall { individual, infected: load > cut, estimated_load: load })
        .collect()
}

/// Classical decoder: a test is positive iff its value exceeds
/// `positivity_threshold`, and an individual is infected iff every test
/// containing it is positive.
///
/// # Panics
///
/// If `readout` does not have one entry per test.
pub fn classify_disjunct(
    design: &PoolingDesign,
    readout: &[f64],
    positivity_threshold: f64,
) -> Vec<InfectionCall> {
    assert_eq!(readout.len(), design.m(), "readout length must equal the number of tests");
    design
        .binary()
        .supports()
        .iter()
        .enumerate()
        .map(|(individual, tests)| InfectionCall {
            individual,
            infected: !tests.is_empty() && tests.iter().all(|&m| readout[m] > positivity_threshold),
            estimated_load: 0.0,
        })
        .collect()
}

/// Largest `||e||_1` for which the threshold rule is guaranteed to return
/// exactly the infected set: `epsilon / 4 / (bound_constant / 2)`.
pub fn noise_tolerance(certificate: &DesignCertificate, policy: ThresholdPolicy) -> f64 {
    policy.epsilon / 4.0 / (certificate.bound_constant / 2.0)
}

/// Indices flagged infected.
pub fn infected_set(calls: &[InfectionCall]) -> Vec<usize> {
    calls.iter().filter(|c| c.infected).map(|c| c.individual).collect()
}
