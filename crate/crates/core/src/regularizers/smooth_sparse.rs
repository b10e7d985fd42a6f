use ndarray::Array2;

use super::{ln_floored, mask, Regularizer, RegularizerAdditive};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum SmoothSparseTarget<S> {
    Uniform,
    /// Explicit distribution, W × T for Φ or T × D for Θ; only columns
    /// (resp. rows) of the selected topics are read.
    Matrix(Array2<S>),
}

/// `β0 Σ_{w,t∈H} β_wt ln φ_wt + α0 Σ_{t∈H,d} α_td ln θ_td`.
///
/// Positive coefficients smooth the selected topics toward the targets,
/// negative ones sparse them.
#[derive(Debug, Clone)]
pub struct SmoothSparse<S> {
    topics: Vec<usize>,
    beta0: S,
    beta: SmoothSparseTarget<S>,
    alpha0: S,
    alpha: SmoothSparseTarget<S>,
}

impl<S: Scalar> SmoothSparse<S> {
    pub fn uniform(topics: Vec<usize>, beta0: S, alpha0: S) -> Self {
        Self {
            topics,
            beta0,
            beta: SmoothSparseTarget::Uniform,
            alpha0,
            alpha: SmoothSparseTarget::Uniform,
        }
    }

    pub fn with_targets(mut self, beta: SmoothSparseTarget<S>, alpha: SmoothSparseTarget<S>) -> Self {
        self.beta = beta;
        self.alpha = alpha;
        self
    }

    fn beta_at(&self, w: usize, t: usize, num_tokens: usize) -> S {
        match &self.beta {
            SmoothSparseTarget::Uniform => S::one() / S::of_count(num_tokens as u64),
            SmoothSparseTarget::Matrix(m) => m[[w, t]],
        }
    }

    fn alpha_at(&self, t: usize, d: usize, num_topics: usize) -> S {
        match &self.alpha {
            SmoothSparseTarget::Uniform => S::one() / S::of_count(num_topics as u64),
            SmoothSparseTarget::Matrix(m) => m[[t, d]],
        }
    }
}

impl<S: Scalar> Regularizer<S> for SmoothSparse<S> {
    fn name(&self) -> String {
        if self.beta0 < S::zero() || self.alpha0 < S::zero() {
            "sparse".to_owned()
        } else {
            "smooth".to_owned()
        }
    }

    fn additive(&self, phi: &Array2<S>, theta: &Array2<S>) -> RegularizerAdditive<S> {
        let (num_tokens, num_topics) = phi.dim();
        let num_docs = theta.ncols();
        let selected = mask(&self.topics, num_topics);
        let mut r_value = S::zero();

        let phi_add = (self.beta0 != S::zero() && !self.topics.is_empty()).then(|| {
            let mut add = Array2::zeros((num_tokens, num_topics));
            for w in 0..num_tokens {
                for t in (0..num_topics).filter(|&t| selected[t]) {
                    let b = self.beta_at(w, t, num_tokens);
                    add[[w, t]] = self.beta0 * b;
                    if b != S::zero() {
                        r_value = r_value + self.beta0 * b * ln_floored(phi[[w, t]]);
                    }
                }
            }
            add
        });

        let theta_add = (self.alpha0 != S::zero() && !self.topics.is_empty()).then(|| {
            let mut add = Array2::zeros((num_topics, num_docs));
            for t in (0..num_topics).filter(|&t| selected[t]) {
                for d in 0..num_docs {
                    let a = self.alpha_at(t, d, num_topics);
                    add[[t, d]] = self.alpha0 * a;
                    if a != S::zero() {
                        r_value = r_value + self.alpha0 * a * ln_floored(theta[[t, d]]);
                    }
                }
            }
            add
        });

        RegularizerAdditive { r_value, phi_add, theta_add }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_beta_adds_tau_over_w_in_subset() {
        let phi = Array2::from_elem((4, 3), 0.25);
        let theta = Array2::from_elem((3, 2), 1.0 / 3.0);
        let add = SmoothSparse::uniform(vec![0, 2], 2.0, 0.0).additive(&phi, &theta);
        let phi_add = add.phi_add.unwrap();
        for w in 0..4 {
            assert_eq!(phi_add[[w, 0]], 0.5);
            assert_eq!(phi_add[[w, 1]], 0.0);
            assert_eq!(phi_add[[w, 2]], 0.5);
        }
        assert!(add.theta_add.is_none());
        assert!((add.r_value - 2.0 * 2.0 * 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_subset_is_inert() {
        let phi = Array2::from_elem((4, 3), 0.25);
        let theta = Array2::from_elem((3, 2), 1.0 / 3.0);
        let add = SmoothSparse::uniform(vec![], -0.5, -0.5).additive(&phi, &theta);
        assert_eq!(add, RegularizerAdditive::zero());
    }

    #[test]
    fn theta_side_uses_uniform_alpha() {
        let phi = Array2::from_elem((4, 2), 0.25);
        let theta = Array2::from_elem((2, 3), 0.5);
        let add = SmoothSparse::<f64>::uniform(vec![1], 0.0, -0.4).additive(&phi, &theta);
        let theta_add = add.theta_add.unwrap();
        assert!(theta_add.row(0).iter().all(|&v| v == 0.0));
        assert!(theta_add.row(1).iter().all(|&v| (v + 0.2).abs() < 1e-15));
    }

    #[test]
    fn explicit_targets_are_used() {
        let phi = Array2::from_elem((2, 1), 0.5);
        let theta = Array2::from_elem((1, 1), 1.0);
        let beta = Array2::from_shape_vec((2, 1), vec![0.9, 0.1]).unwrap();
        let add = SmoothSparse::<f64>::uniform(vec![0], 10.0, 0.0)
            .with_targets(SmoothSparseTarget::Matrix(beta), SmoothSparseTarget::Uniform)
            .additive(&phi, &theta);
        let phi_add = add.phi_add.unwrap();
        assert!((phi_add[[0, 0]] - 9.0).abs() < 1e-12 && (phi_add[[1, 0]] - 1.0).abs() < 1e-12);
    }
}
