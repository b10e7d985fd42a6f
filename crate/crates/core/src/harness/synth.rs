//! Synthetic corpora sampled from a known (Φ*, Θ*).
//!
//! Topic `t` owns the tokens `w` with `w mod T = t` (disjoint supports) with
//! Gamma-distributed weights, documents draw `θ*_d` from a symmetric
//! Dirichlet, and tokens are emitted in runs: a topic is drawn from `θ*_d`,
//! then a geometric number of tokens is drawn from that topic. Each token is
//! still marginally distributed as `Σ_t φ*_wt θ*_td`.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Geometric, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusBuilder};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic corpus parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_tokens: usize,
    pub num_topics: usize,
    pub num_documents: usize,
    pub mean_len: f64,
    /// Symmetric Dirichlet parameter of Θ*.
    pub concentration: f64,
    /// Gamma shape of the weights inside a topic's support.
    #[serde(default = "default_phi_shape")]
    pub phi_shape: f64,
    /// Mean number of consecutive tokens drawn from one topic.
    #[serde(default = "default_mean_segment")]
    pub mean_segment: f64,
}

fn default_phi_shape() -> f64 {
    0.5
}

fn default_mean_segment() -> f64 {
    4.0
}

impl SynthConfig {
    /// W=50, T*=5, D=200, mean length 100.
    pub fn small(seed: u64) -> Self {
        Self {
            seed,
            num_tokens: 50,
            num_topics: 5,
            num_documents: 200,
            mean_len: 100.0,
            concentration: 0.2,
            phi_shape: default_phi_shape(),
            mean_segment: default_mean_segment(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    /// Φ* with rows in the corpus vocabulary order. Tokens that were never
    /// sampled are absent, so columns are renormalized over sampled tokens.
    pub phi: Array2<f64>,
    /// Θ*, T* × D.
    pub theta: Array2<f64>,
}

pub fn surface(w: usize) -> String {
    format!("w{w:04}")
}

pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    let bad = |what: &str| Err(SynthError::InvalidParameter(what.to_owned()));
    if cfg.num_topics == 0 || cfg.num_documents == 0 {
        return bad("num_topics and num_documents must be positive");
    }
    if cfg.num_tokens < cfg.num_topics {
        return bad("num_tokens must be at least num_topics");
    }
    if !(cfg.mean_len > 0.0 && cfg.concentration > 0.0 && cfg.phi_shape > 0.0 && cfg.mean_segment >= 1.0) {
        return bad("mean_len, concentration, phi_shape must be positive and mean_segment >= 1");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w_total, t_total) = (cfg.num_tokens, cfg.num_topics);

    let phi_gamma = Gamma::new(cfg.phi_shape, 1.0).expect("validated shape");
    let mut phi_full = Array2::<f64>::zeros((w_total, t_total));
    for t in 0..t_total {
        let support: Vec<usize> = (t..w_total).step_by(t_total).collect();
        let mut weights: Vec<f64> = support.iter().map(|_| phi_gamma.sample(&mut rng) + 1e-12).collect();
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|v| *v /= sum);
        for (&w, &p) in support.iter().zip(&weights) {
            phi_full[[w, t]] = p;
        }
    }

    let theta_gamma = Gamma::new(cfg.concentration, 1.0).expect("validated concentration");
    let mut theta = Array2::<f64>::zeros((t_total, cfg.num_documents));
    for d in 0..cfg.num_documents {
        let mut draws: Vec<f64> = (0..t_total).map(|_| theta_gamma.sample(&mut rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            draws.iter_mut().for_each(|v| *v /= sum);
        } else {
            draws = vec![0.0; t_total];
            draws[d % t_total] = 1.0;
        }
        for (t, v) in draws.into_iter().enumerate() {
            theta[[t, d]] = v;
        }
    }

    let word_samplers: Vec<WeightedIndex<f64>> = (0..t_total)
        .map(|t| WeightedIndex::new(phi_full.column(t).to_vec()).expect("topic has positive mass"))
        .collect();
    let length = Poisson::new(cfg.mean_len).expect("validated mean_len");
    let run_length = Geometric::new(1.0 / cfg.mean_segment).expect("validated mean_segment");

    let surfaces: Vec<String> = (0..w_total).map(surface).collect();
    let mut builder = CorpusBuilder::sequences();
    for d in 0..cfg.num_documents {
        let n_d = (length.sample(&mut rng) as usize).max(1);
        let topic_sampler =
            WeightedIndex::new(theta.column(d).to_vec()).expect("theta column has positive mass");
        let mut tokens: Vec<&str> = Vec::with_capacity(n_d);
        while tokens.len() < n_d {
            let z = topic_sampler.sample(&mut rng);
            let run = (1 + run_length.sample(&mut rng) as usize).min(n_d - tokens.len());
            for _ in 0..run {
                tokens.push(&surfaces[word_samplers[z].sample(&mut rng)]);
            }
        }
        builder
            .push_sequence(&format!("doc{d:05}"), &tokens)
            .expect("generated documents are well formed");
    }
    let corpus = builder.finish();

    let mut phi = Array2::<f64>::zeros((corpus.num_tokens(), t_total));
    for (row, surface) in corpus.vocabulary().surfaces().enumerate() {
        let w: usize = surface[1..].parse().expect("generated surface");
        phi.row_mut(row).assign(&phi_full.row(w));
    }
    crate::model::normalize_columns(&mut phi);
    Ok(SynthCorpus { corpus, phi, theta })
}
