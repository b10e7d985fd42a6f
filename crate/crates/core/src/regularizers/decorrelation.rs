use ndarray::Array2;

use super::{Regularizer, RegularizerAdditive};
use crate::scalar::Scalar;

/// `-(τ/2) Σ_t Σ_{s≠t} Σ_w φ_wt φ_ws` over a topic subset.
#[derive(Debug, Clone)]
pub struct Decorrelation<S> {
    topics: Vec<usize>,
    tau: S,
}

impl<S: Scalar> Decorrelation<S> {
    pub fn new(topics: Vec<usize>, tau: S) -> Self {
        Self { topics, tau }
    }
}

impl<S: Scalar> Regularizer<S> for Decorrelation<S> {
    fn name(&self) -> String {
        "decorrelation".to_owned()
    }

    fn additive(&self, phi: &Array2<S>, _theta: &Array2<S>) -> RegularizerAdditive<S> {
        if self.topics.len() < 2 || self.tau == S::zero() {
            return RegularizerAdditive::zero();
        }
        let (num_tokens, num_topics) = phi.dim();
        let half = S::of(0.5);
        let mut add = Array2::zeros((num_tokens, num_topics));
        let mut r_value = S::zero();
        for w in 0..num_tokens {
            let row_sum: S = self.topics.iter().map(|&t| phi[[w, t]]).sum();
            for &t in &self.topics {
                let others = row_sum - phi[[w, t]];
                add[[w, t]] = -self.tau * phi[[w, t]] * others;
                r_value = r_value - half * self.tau * phi[[w, t]] * others;
            }
        }
        RegularizerAdditive { r_value, phi_add: Some(add), theta_add: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta() -> Array2<f64> {
        Array2::zeros((2, 1))
    }

    #[test]
    fn identical_columns() {
        let phi = Array2::from_elem((2, 2), 0.5);
        let add = Decorrelation::new(vec![0, 1], 3.0).additive(&phi, &theta());
        assert!(add.phi_add.unwrap().iter().all(|&v| (v + 0.25 * 3.0).abs() < 1e-15));
        // R = -(τ/2) · 2 pairs · Σ_w 0.25 = -τ · 0.5
        assert!((add.r_value + 1.5).abs() < 1e-15);
    }

    #[test]
    fn single_topic_is_inert() {
        let phi = Array2::from_elem((3, 1), 1.0 / 3.0);
        let add = Decorrelation::new(vec![0], 1.0).additive(&phi, &Array2::zeros((1, 1)));
        assert_eq!(add, RegularizerAdditive::zero());
    }

    #[test]
    fn orthogonal_columns_are_untouched() {
        let phi = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let add = Decorrelation::new(vec![0, 1], 1.0).additive(&phi, &theta());
        assert_eq!(add.r_value, 0.0);
        assert!(add.phi_add.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn topics_outside_subset_are_ignored() {
        let phi: Array2<f64> = Array2::from_elem((2, 3), 0.5);
        let add = Decorrelation::new(vec![0, 2], 1.0).additive(&phi, &Array2::zeros((3, 1)));
        let phi_add = add.phi_add.unwrap();
        assert!(phi_add.column(1).iter().all(|&v| v == 0.0));
        assert!(phi_add.column(0).iter().all(|&v| (v + 0.25).abs() < 1e-15));
    }
}
