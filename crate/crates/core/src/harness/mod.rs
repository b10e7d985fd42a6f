//! Baseline series, coefficient grids, TopicBank baselines and reports.

mod experiment;
mod grid;
mod report;
mod series;
pub mod synth;
mod topicbank;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use experiment::{
    ablation_specs, history_jsonl, load_results, run_experiment, save_results, write_outputs, ExperimentConfig,
    ExperimentError, ExperimentOutput, ExperimentResults, ItarSection, ModelArtifacts, ThresholdConfig, ThresholdMode,
    ThresholdPair,
};
pub use grid::{grid_search_tau, GridObjective, GridPoint, GridSearch, GridTarget, DECORRELATION_GRID, SIFT_V1_GRID, SIFT_V2_GRID, SMOOTH_GRID, SPARSE_GRID};
pub use report::{density_rows, generate_report, summary_row, AblationRow, DensityRow, SummaryRow};
pub use series::{pool_coherences, run_series, train_run, ModelResult, RunRecord, SeriesOptions};
pub use topicbank::{bank_perplexity, bank_phi, run_topicbank, TopicBankConfig, TopicBankIteration, TopicBankOutcome, TopicBankVariant};

use crate::itar::{Ablation, BaseCoefficients};
use crate::regularizers::{RegularizerConfig, RegularizerKind, Side, TopicSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Plsa,
    Lda,
    Sparse,
    Decorr,
    /// Sparsing plus decorrelation without a background topic, the base
    /// stack of the iterative models.
    Artm,
    Topicbank,
    Topicbank2,
    Itar,
    Itar2,
}

impl ModelName {
    pub fn is_iterative(self) -> bool {
        matches!(self, ModelName::Topicbank | ModelName::Topicbank2 | ModelName::Itar | ModelName::Itar2)
    }

    /// ARTM-family non-iterative models, PLSA excluded.
    pub fn pools_by_default(self) -> bool {
        matches!(self, ModelName::Lda | ModelName::Sparse | ModelName::Decorr | ModelName::Artm)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Plsa => "plsa",
            ModelName::Lda => "lda",
            ModelName::Sparse => "sparse",
            ModelName::Decorr => "decorr",
            ModelName::Artm => "artm",
            ModelName::Topicbank => "topicbank",
            ModelName::Topicbank2 => "topicbank2",
            ModelName::Itar => "itar",
            ModelName::Itar2 => "itar2",
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|_| format!("unknown model {s:?}"))
    }
}

fn default_runs() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: ModelName,
    #[serde(rename = "T")]
    pub topics: usize,
    /// Display name; defaults to the model name, or `itar_f-b-g` when
    /// ablation flags are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Overrides the default stack of `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularizers: Option<Vec<RegularizerConfig>>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_topics: Option<usize>,
    /// Iterative models only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<Ablation>,
    /// TopicBank only: the model trained anew at each iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<ModelName>,
}

impl ModelSpec {
    pub fn new(name: ModelName, topics: usize) -> Self {
        Self {
            name,
            topics,
            label: None,
            regularizers: None,
            runs: default_runs(),
            background_topics: None,
            ablation: None,
            base: None,
        }
    }

    pub fn runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn ablation(mut self, flags: Ablation) -> Self {
        self.ablation = Some(flags);
        self
    }

    pub fn display_name(&self) -> String {
        match (&self.label, self.ablation) {
            (Some(label), _) => label.clone(),
            (None, Some(flags)) if matches!(self.name, ModelName::Itar) => flags.model_name(),
            (None, Some(flags)) => format!("{}_{flags}", self.name),
            (None, None) => self.name.to_string(),
        }
    }

    pub fn background(&self) -> usize {
        self.background_topics.unwrap_or(match self.name {
            ModelName::Sparse | ModelName::Decorr => 1,
            _ => 0,
        })
    }

    pub fn regularizers(&self) -> Vec<RegularizerConfig> {
        match &self.regularizers {
            Some(r) => r.clone(),
            None => default_regularizers(self.name, self.background()),
        }
    }
}

fn background_smoothing(background_topics: usize) -> Option<RegularizerConfig> {
    (background_topics > 0).then(|| {
        RegularizerConfig::new(RegularizerKind::SmoothSparse, BaseCoefficients::default().smooth)
            .relative()
            .on(TopicSet::Background)
            .side(Side::Both)
    })
}

/// LDA smoothing adds this much to every cell of Φ and Θ.
pub const LDA_PRIOR: f64 = 0.1;

pub fn default_regularizers(name: ModelName, background_topics: usize) -> Vec<RegularizerConfig> {
    let base = BaseCoefficients::default();
    let mut out = match name {
        ModelName::Plsa | ModelName::Topicbank | ModelName::Topicbank2 => return Vec::new(),
        ModelName::Lda => vec![RegularizerConfig::new(RegularizerKind::SmoothSparse, LDA_PRIOR)
            .per_cell()
            .on(TopicSet::Domain)
            .side(Side::Both)],
        ModelName::Sparse => vec![RegularizerConfig::new(RegularizerKind::SmoothSparse, base.sparse)
            .relative()
            .on(TopicSet::Domain)
            .side(Side::Both)],
        ModelName::Decorr => vec![RegularizerConfig::new(RegularizerKind::Decorrelation, base.decorrelation)
            .relative()
            .on(TopicSet::Domain)],
        ModelName::Artm | ModelName::Itar | ModelName::Itar2 => return base.regularizers(background_topics),
    };
    out.extend(background_smoothing(background_topics));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoo_defaults() {
        assert!(ModelSpec::new(ModelName::Plsa, 20).regularizers().is_empty());
        let sparse = ModelSpec::new(ModelName::Sparse, 20);
        assert_eq!(sparse.background(), 1);
        assert_eq!(sparse.regularizers().len(), 2);
        assert!(sparse.regularizers()[0].tau < 0.0);
        let decorr = ModelSpec::new(ModelName::Decorr, 20);
        assert_eq!(decorr.regularizers()[0].kind, RegularizerKind::Decorrelation);
        assert_eq!(decorr.regularizers()[1].topics, Some(crate::regularizers::TopicSelector::Set(TopicSet::Background)));
        assert_eq!(ModelSpec::new(ModelName::Artm, 20).regularizers().len(), 2);
        assert_eq!(ModelSpec::new(ModelName::Artm, 20).background(), 0);
        assert_eq!(ModelSpec::new(ModelName::Plsa, 20).runs, 20);
    }

    #[test]
    fn names() {
        let spec = ModelSpec::new(ModelName::Itar, 20).ablation("1-0-1".parse().unwrap());
        assert_eq!(spec.display_name(), "itar_1-0-1");
        assert_eq!(ModelSpec::new(ModelName::Itar2, 20).display_name(), "itar2");
        assert_eq!("topicbank2".parse::<ModelName>().unwrap(), ModelName::Topicbank2);
        assert!("nope".parse::<ModelName>().is_err());
        let spec: ModelSpec = serde_json::from_str(r#"{"name":"lda","T":50,"runs":3}"#).unwrap();
        assert_eq!(spec.runs, 3);
        assert_eq!(spec.display_name(), "lda");
    }

    #[test]
    fn pooling_excludes_plsa_and_iterative_models() {
        assert!(!ModelName::Plsa.pools_by_default());
        assert!(!ModelName::Itar.pools_by_default());
        assert!(ModelName::Decorr.pools_by_default());
    }
}
