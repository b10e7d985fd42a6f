//! Regularizer values `R(Φ, Θ)` and their M-step additives `φ ∂R/∂φ`, `θ ∂R/∂θ`.

mod decorrelation;
mod fix;
mod sift;
mod smooth_sparse;

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{TopicRole, LN_FLOOR};
use crate::scalar::Scalar;

pub use decorrelation::Decorrelation;
pub use fix::FixTopics;
pub use sift::{Sift, SiftVersion};
pub use smooth_sparse::{SmoothSparse, SmoothSparseTarget};

#[derive(Debug, Error)]
pub enum RegularizerError {
    #[error("{0:?} does not accept tau_mode {1:?}")]
    UnsupportedTauMode(RegularizerKind, TauMode),
    #[error("{0:?} requires tau > 0, got {1}")]
    NonPositiveTau(RegularizerKind, f64),
    #[error("topic {0} is out of range")]
    TopicOutOfRange(usize),
    #[error("fixed topic {topic} references missing bank column `{bank_ref}`")]
    MissingBankColumn { topic: usize, bank_ref: String },
    #[error("topic {0} is fixed to more than one column")]
    DuplicateMapping(usize),
    #[error("target {0:?} is not valid for {1:?}")]
    InvalidTarget(Target, RegularizerKind),
}

/// Value of one regularizer at a point and its M-step additives. `None`
/// stands for an identically zero additive.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerAdditive<S> {
    pub r_value: S,
    pub phi_add: Option<Array2<S>>,
    pub theta_add: Option<Array2<S>>,
}

impl<S: Scalar> RegularizerAdditive<S> {
    pub fn zero() -> Self {
        Self { r_value: S::zero(), phi_add: None, theta_add: None }
    }

    pub fn is_finite(&self) -> bool {
        self.r_value.is_finite()
            && self.phi_add.as_ref().is_none_or(|m| m.iter().all(|v| v.is_finite()))
            && self.theta_add.as_ref().is_none_or(|m| m.iter().all(|v| v.is_finite()))
    }
}

pub trait Regularizer<S: Scalar>: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn additive(&self, phi: &Array2<S>, theta: &Array2<S>) -> RegularizerAdditive<S>;
}

/// `ln` with the same zero floor the likelihood uses.
pub(crate) fn ln_floored<S: Scalar>(v: S) -> S {
    v.max(S::of(LN_FLOOR)).ln()
}

pub(crate) fn check_topics(topics: &[usize], num_topics: usize) -> Result<(), RegularizerError> {
    match topics.iter().find(|&&t| t >= num_topics) {
        Some(&t) => Err(RegularizerError::TopicOutOfRange(t)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    SmoothSparse,
    Decorrelation,
    Fix,
    SiftV1,
    SiftV2,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    #[default]
    Absolute,
    /// Scaled by corpus token mass: `τ·n/|H|` on Φ, `τ·n/|D|` on Θ.
    Relative,
    /// Smoothing/sparsing only: τ is the additive per matrix cell under uniform targets.
    PerCell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicSet {
    All,
    /// Every non-background topic, fixed ones included.
    Domain,
    Background,
    Fixed,
    /// Domain topics that are not fixed.
    Free,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopicSelector {
    Set(TopicSet),
    List(Vec<usize>),
}

impl TopicSelector {
    pub fn resolve(&self, roles: &[TopicRole]) -> Vec<usize> {
        let pick = |f: &dyn Fn(&TopicRole) -> bool| -> Vec<usize> {
            roles.iter().enumerate().filter(|(_, r)| f(r)).map(|(t, _)| t).collect()
        };
        match self {
            TopicSelector::List(list) => list.clone(),
            TopicSelector::Set(TopicSet::All) => (0..roles.len()).collect(),
            TopicSelector::Set(TopicSet::Domain) => pick(&|r| !r.is_background()),
            TopicSelector::Set(TopicSet::Background) => pick(&|r| r.is_background()),
            TopicSelector::Set(TopicSet::Fixed) => pick(&|r| r.is_fixed()),
            TopicSelector::Set(TopicSet::Free) => pick(&|r| matches!(r, TopicRole::Domain)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Phi,
    Theta,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Uniform,
    BankGood,
    BankBad,
}

/// Declarative regularizer entry of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub kind: RegularizerKind,
    pub tau: f64,
    #[serde(default)]
    pub tau_mode: TauMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topics: Option<TopicSelector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    #[serde(default)]
    pub side: Side,
}

impl RegularizerConfig {
    pub fn new(kind: RegularizerKind, tau: f64) -> Self {
        Self { kind, tau, tau_mode: TauMode::Absolute, topics: None, target: None, side: Side::Phi }
    }

    pub fn relative(mut self) -> Self {
        self.tau_mode = TauMode::Relative;
        self
    }

    pub fn per_cell(mut self) -> Self {
        self.tau_mode = TauMode::PerCell;
        self
    }

    pub fn topics(mut self, selector: TopicSelector) -> Self {
        self.topics = Some(selector);
        self
    }

    pub fn on(mut self, set: TopicSet) -> Self {
        self.topics = Some(TopicSelector::Set(set));
        self
    }

    pub fn target(mut self, target: Target) -> Self {
        self.target = Some(target);
        self
    }

    pub fn side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    fn default_topics(&self) -> TopicSelector {
        TopicSelector::Set(match (self.kind, self.target) {
            (RegularizerKind::Fix, _) => TopicSet::Fixed,
            (RegularizerKind::SiftV1 | RegularizerKind::SiftV2, _) => TopicSet::Free,
            _ => TopicSet::Domain,
        })
    }

    /// Builds the concrete regularizer for a model shape and bank contents.
    pub fn build<S: Scalar>(&self, ctx: &ResolveContext<'_, S>) -> Result<Box<dyn Regularizer<S>>, RegularizerError> {
        let topics = self.topics.clone().unwrap_or_else(|| self.default_topics()).resolve(ctx.roles);
        check_topics(&topics, ctx.roles.len())?;
        let kind = self.kind;
        match (kind, self.tau_mode) {
            (RegularizerKind::SmoothSparse, _) | (RegularizerKind::Decorrelation, TauMode::Absolute | TauMode::Relative) => {}
            (_, TauMode::Absolute) => {}
            (_, mode) => return Err(RegularizerError::UnsupportedTauMode(kind, mode)),
        }
        match kind {
            RegularizerKind::SmoothSparse => {
                if !matches!(self.target, None | Some(Target::Uniform)) {
                    return Err(RegularizerError::InvalidTarget(self.target.unwrap(), kind));
                }
                let (phi_tau, theta_tau) = self.smooth_sparse_coefficients(ctx, topics.len());
                let (beta0, alpha0) = match self.side {
                    Side::Phi => (phi_tau, 0.0),
                    Side::Theta => (0.0, theta_tau),
                    Side::Both => (phi_tau, theta_tau),
                };
                if self.tau < 0.0 && topics.iter().any(|&t| ctx.roles[t].is_background()) {
                    log::warn!("sparsing (tau < 0) applied to a background topic");
                }
                Ok(Box::new(SmoothSparse::uniform(topics, S::of(beta0), S::of(alpha0))))
            }
            RegularizerKind::Decorrelation => {
                let tau = match self.tau_mode {
                    TauMode::Relative => relative_phi_tau(self.tau, ctx.total_tokens, topics.len()),
                    _ => self.tau,
                };
                Ok(Box::new(Decorrelation::new(topics, S::of(tau))))
            }
            RegularizerKind::Fix => {
                if self.tau <= 0.0 {
                    return Err(RegularizerError::NonPositiveTau(kind, self.tau));
                }
                if !matches!(self.target, None | Some(Target::BankGood)) {
                    return Err(RegularizerError::InvalidTarget(self.target.unwrap(), kind));
                }
                let mut mapping = Vec::with_capacity(topics.len());
                for &t in &topics {
                    let TopicRole::Fixed { bank_ref } = &ctx.roles[t] else { continue };
                    let column = ctx
                        .bank_column(bank_ref)
                        .ok_or_else(|| RegularizerError::MissingBankColumn { topic: t, bank_ref: bank_ref.clone() })?;
                    mapping.push((t, column.to_vec()));
                }
                Ok(Box::new(FixTopics::new(S::of(self.tau), mapping)?))
            }
            RegularizerKind::SiftV1 | RegularizerKind::SiftV2 => {
                if self.tau <= 0.0 {
                    return Err(RegularizerError::NonPositiveTau(kind, self.tau));
                }
                let bank: Vec<Vec<S>> = match self.target {
                    Some(Target::BankBad) | None => ctx.bank_bad.to_vec(),
                    Some(Target::BankGood) => ctx.bank_good.iter().map(|(_, c)| c.clone()).collect(),
                    Some(other) => return Err(RegularizerError::InvalidTarget(other, kind)),
                };
                let version = if kind == RegularizerKind::SiftV1 { SiftVersion::V1 } else { SiftVersion::V2 };
                let label = match self.target {
                    Some(Target::BankGood) => "good",
                    _ => "bad",
                };
                Ok(Box::new(Sift::new(version, S::of(self.tau), topics, bank).labeled(label)))
            }
        }
    }

    fn smooth_sparse_coefficients<S: Scalar>(&self, ctx: &ResolveContext<'_, S>, subset: usize) -> (f64, f64) {
        match self.tau_mode {
            TauMode::Absolute => (self.tau, self.tau),
            TauMode::Relative => (
                relative_phi_tau(self.tau, ctx.total_tokens, subset),
                if ctx.num_documents == 0 { 0.0 } else { self.tau * ctx.total_tokens as f64 / ctx.num_documents as f64 },
            ),
            TauMode::PerCell => (self.tau * ctx.num_tokens as f64, self.tau * ctx.roles.len() as f64),
        }
    }
}

/// `τ_abs = τ_rel · n / |H|`; zero for an empty subset.
pub fn relative_phi_tau(tau: f64, total_tokens: u64, subset: usize) -> f64 {
    if subset == 0 {
        0.0
    } else {
        tau * total_tokens as f64 / subset as f64
    }
}

/// Model shape and bank contents a [`RegularizerConfig`] is resolved against.
#[derive(Debug, Clone)]
pub struct ResolveContext<'a, S> {
    pub num_tokens: usize,
    pub num_documents: usize,
    pub total_tokens: u64,
    pub roles: &'a [TopicRole],
    /// Banked good columns by bank id.
    pub bank_good: &'a [(String, Vec<S>)],
    pub bank_bad: &'a [Vec<S>],
}

impl<'a, S: Scalar> ResolveContext<'a, S> {
    pub fn new(num_tokens: usize, num_documents: usize, total_tokens: u64, roles: &'a [TopicRole]) -> Self {
        Self { num_tokens, num_documents, total_tokens, roles, bank_good: &[], bank_bad: &[] }
    }

    pub fn with_bank(mut self, good: &'a [(String, Vec<S>)], bad: &'a [Vec<S>]) -> Self {
        self.bank_good = good;
        self.bank_bad = bad;
        self
    }

    fn bank_column(&self, id: &str) -> Option<&[S]> {
        self.bank_good.iter().find(|(bid, _)| bid == id).map(|(_, c)| c.as_slice())
    }
}

/// Resolves a list of configs in order.
pub fn build_all<S: Scalar>(
    configs: &[RegularizerConfig],
    ctx: &ResolveContext<'_, S>,
) -> Result<Vec<Box<dyn Regularizer<S>>>, RegularizerError> {
    configs.iter().map(|c| c.build(ctx)).collect()
}

/// Membership mask of a topic subset.
pub(crate) fn mask(topics: &[usize], num_topics: usize) -> Vec<bool> {
    let mut m = vec![false; num_topics];
    for &t in topics {
        if t < num_topics {
            m[t] = true;
        }
    }
    m
}
