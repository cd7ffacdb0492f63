//! Cost values reported by the assimilation drivers.

/// Background and observation parts of a cost value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostTerms {
    pub background: f64,
    pub observation: f64,
}

impl CostTerms {
    pub fn total(&self) -> f64 {
        self.background + self.observation
    }
}

/// One line of a cost history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub total: f64,
    pub background: f64,
    pub observation: f64,
    pub grad_norm: f64,
    pub inner_iterations: usize,
}

impl CostReport {
    pub fn new(terms: CostTerms, grad_norm: f64, inner_iterations: usize) -> Self {
        Self {
            total: terms.total(),
            background: terms.background,
            observation: terms.observation,
            grad_norm,
            inner_iterations,
        }
    }
}

/// `½ Σ r_i² / σ_i²`
pub(crate) fn weighted_half_norm2(r: &[f64], variances: &[f64]) -> f64 {
    0.5 * r.iter().zip(variances).map(|(x, v)| x * x / v).sum::<f64>()
}
