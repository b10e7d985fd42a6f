use ndarray::Array2;

use super::{ln_floored, Regularizer, RegularizerAdditive, RegularizerError};
use crate::scalar::Scalar;

/// `τ Σ_{t∈T+} Σ_w φ̃_wt ln φ_wt`: smoothing toward a banked column instead of
/// the uniform distribution. With τ ≫ n the fixed topic is pinned to its column.
#[derive(Debug, Clone)]
pub struct FixTopics<S> {
    tau: S,
    mapping: Vec<(usize, Vec<S>)>,
}

impl<S: Scalar> FixTopics<S> {
    /// `mapping` pairs a model topic with its banked column; topics must be distinct.
    pub fn new(tau: S, mapping: Vec<(usize, Vec<S>)>) -> Result<Self, RegularizerError> {
        let mut seen = std::collections::HashSet::new();
        for (t, _) in &mapping {
            if !seen.insert(*t) {
                return Err(RegularizerError::DuplicateMapping(*t));
            }
        }
        Ok(Self { tau, mapping })
    }
}

impl<S: Scalar> Regularizer<S> for FixTopics<S> {
    fn name(&self) -> String {
        "fix".to_owned()
    }

    fn additive(&self, phi: &Array2<S>, _theta: &Array2<S>) -> RegularizerAdditive<S> {
        if self.mapping.is_empty() {
            return RegularizerAdditive::zero();
        }
        let mut add = Array2::zeros(phi.raw_dim());
        let mut r_value = S::zero();
        for (t, target) in &self.mapping {
            for (w, &p) in target.iter().enumerate() {
                add[[w, *t]] = self.tau * p;
                if p != S::zero() {
                    r_value = r_value + self.tau * p * ln_floored(phi[[w, *t]]);
                }
            }
        }
        RegularizerAdditive { r_value, phi_add: Some(add), theta_add: None }
    }
}
