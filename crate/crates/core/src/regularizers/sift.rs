use ndarray::Array2;

use super::{Regularizer, RegularizerAdditive};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiftVersion {
    /// `-τ Σ_{t∈T'} Σ_s Σ_w φ_wt φ̃_ws`, a decorrelation with the summed bank column.
    V1,
    /// `-(τ/2) Σ_{t∈T'} Σ_s ⟨φ_t, φ̃_s⟩²`, penalizing overlap with each banked column separately.
    V2,
}

impl std::str::FromStr for SiftVersion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "v1" => Ok(SiftVersion::V1),
            "v2" => Ok(SiftVersion::V2),
            other => Err(format!("unknown sift version {other:?}")),
        }
    }
}

/// Pushes free topics away from previously banked topics.
#[derive(Debug, Clone)]
pub struct Sift<S> {
    version: SiftVersion,
    tau: S,
    free_topics: Vec<usize>,
    bank: Vec<Vec<S>>,
    label: &'static str,
}

impl<S: Scalar> Sift<S> {
    pub fn new(version: SiftVersion, tau: S, free_topics: Vec<usize>, bank: Vec<Vec<S>>) -> Self {
        Self { version, tau, free_topics, bank, label: "bad" }
    }

    pub(crate) fn labeled(mut self, label: &'static str) -> Self {
        self.label = label;
        self
    }
}

impl<S: Scalar> Regularizer<S> for Sift<S> {
    fn name(&self) -> String {
        let v = match self.version {
            SiftVersion::V1 => "sift",
            SiftVersion::V2 => "sift2",
        };
        format!("{v}_{}", self.label)
    }

    fn additive(&self, phi: &Array2<S>, _theta: &Array2<S>) -> RegularizerAdditive<S> {
        if self.bank.is_empty() || self.free_topics.is_empty() {
            return RegularizerAdditive::zero();
        }
        let num_tokens = phi.nrows();
        let mut add = Array2::zeros(phi.raw_dim());
        let mut r_value = S::zero();
        match self.version {
            SiftVersion::V1 => {
                let summed: Vec<S> = (0..num_tokens).map(|w| self.bank.iter().map(|c| c[w]).sum()).collect();
                for &t in &self.free_topics {
                    for (w, &s) in summed.iter().enumerate() {
                        let v = -self.tau * phi[[w, t]] * s;
                        add[[w, t]] = v;
                        r_value = r_value + v;
                    }
                }
            }
            SiftVersion::V2 => {
                let half = S::of(0.5);
                for &t in &self.free_topics {
                    let inner: Vec<S> = self
                        .bank
                        .iter()
                        .map(|c| c.iter().enumerate().map(|(u, &b)| phi[[u, t]] * b).sum())
                        .collect();
                    r_value = r_value - half * self.tau * inner.iter().map(|&x| x * x).sum();
                    for w in 0..num_tokens {
                        let weight: S = self.bank.iter().zip(&inner).map(|(c, &ip)| c[w] * ip).sum();
                        add[[w, t]] = -self.tau * phi[[w, t]] * weight;
                    }
                }
            }
        }
        RegularizerAdditive { r_value, phi_add: Some(add), theta_add: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi() -> Array2<f64> {
        Array2::from_shape_vec((3, 2), vec![0.2, 0.5, 0.3, 0.25, 0.5, 0.25]).unwrap()
    }

    #[test]
    fn one_hot_bank_column_hits_one_row() {
        let phi = phi();
        let bank = vec![vec![0.0, 1.0, 0.0]];
        let add = Sift::new(SiftVersion::V1, 4.0, vec![1], bank).additive(&phi, &Array2::zeros((2, 1)));
        let a = add.phi_add.unwrap();
        assert_eq!(a[[1, 1]], -4.0 * 0.25);
        assert_eq!(a[[0, 1]], 0.0);
        assert_eq!(a[[2, 1]], 0.0);
        assert!(a.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn v1_uses_summed_bank_column() {
        let phi = phi();
        let bank = vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]];
        let summed = vec![vec![0.5, 1.0, 0.5]];
        let two = Sift::new(SiftVersion::V1, 2.0, vec![0, 1], bank).additive(&phi, &Array2::zeros((2, 1)));
        let one = Sift::new(SiftVersion::V1, 2.0, vec![0, 1], summed).additive(&phi, &Array2::zeros((2, 1)));
        assert_eq!(two, one);
    }

    #[test]
    fn empty_bank_is_inert() {
        let add = Sift::<f64>::new(SiftVersion::V2, 1.0, vec![0], vec![]).additive(&phi(), &Array2::zeros((2, 1)));
        assert_eq!(add, RegularizerAdditive::zero());
    }

    #[test]
    fn v2_orthogonal_topic_untouched() {
        let phi = Array2::from_shape_vec((2, 1), vec![1.0, 0.0]).unwrap();
        let add = Sift::new(SiftVersion::V2, 10.0, vec![0], vec![vec![0.0, 1.0]]).additive(&phi, &Array2::zeros((1, 1)));
        assert!(add.phi_add.unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(add.r_value, 0.0);
    }

    #[test]
    fn v2_topic_equal_to_bank_column() {
        // φ_t = φ̃_c = [0.3, 0.7]: ⟨φ_t, φ̃_c⟩ = ‖φ̃_c‖² = 0.58
        let col: Vec<f64> = vec![0.3, 0.7];
        let phi = Array2::from_shape_vec((2, 1), col.clone()).unwrap();
        let tau: f64 = 2.0;
        let add = Sift::new(SiftVersion::V2, tau, vec![0], vec![col.clone()]).additive(&phi, &Array2::zeros((1, 1)));
        let a = add.phi_add.unwrap();
        let norm2 = 0.3 * 0.3 + 0.7 * 0.7;
        for w in 0..2 {
            assert!((a[[w, 0]] - (-tau * col[w] * col[w] * norm2)).abs() < 1e-15);
        }
        assert!((add.r_value - (-0.5 * tau * norm2 * norm2)).abs() < 1e-15);
    }
}
