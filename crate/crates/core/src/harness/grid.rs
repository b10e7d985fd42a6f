//! Coefficient selection on a grid by perplexity.

use serde::{Deserialize, Serialize};

use super::series::{run_series, SeriesOptions};
use super::ModelSpec;
use crate::corpus::{CooccurrenceStats, Corpus};
use crate::itar::{run_itar, ItarConfig, ItarError};
use crate::Scalar;

pub const SPARSE_GRID: [f64; 2] = [-0.05, -0.1];
pub const SMOOTH_GRID: [f64; 2] = [0.05, 0.1];
pub const DECORRELATION_GRID: [f64; 4] = [0.01, 0.02, 0.05, 0.1];
pub const SIFT_V1_GRID: [f64; 10] = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10];
pub const SIFT_V2_GRID: [f64; 12] = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10, 1e11, 1e12];

/// Runs per grid point for series models.
pub const GRID_RUNS: usize = 3;
/// ITAR iterations per grid point for sift coefficients.
pub const GRID_ITAR_ITERATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective", rename_all = "snake_case")]
pub enum GridObjective {
    MinPerplexity,
    /// Smallest |τ| whose perplexity exceeds the τ = 0 perplexity by at
    /// least `target` (a fraction).
    PerplexityDegradation { target: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub tau: f64,
    pub perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub points: Vec<GridPoint>,
    pub baseline: Option<f64>,
    pub chosen: f64,
    /// False when no grid point met the degradation target.
    pub satisfied: bool,
}

/// What a grid point changes.
#[derive(Debug, Clone)]
pub enum GridTarget {
    /// The τ of `spec.regularizers()[index]`, scored by mean perplexity over
    /// a short series.
    Regularizer { spec: ModelSpec, index: usize },
    /// Both sift coefficients of a short ITAR run, scored by the final
    /// model's perplexity.
    Sift { cfg: ItarConfig },
}

impl GridTarget {
    pub fn perplexity<S: Scalar>(
        &self,
        tau: f64,
        corpus: &Corpus,
        cooc: &CooccurrenceStats,
        opts: &SeriesOptions,
    ) -> Result<f64, ItarError> {
        match self {
            GridTarget::Regularizer { spec, index } => {
                let mut regs = spec.regularizers();
                let slot = regs
                    .get_mut(*index)
                    .ok_or_else(|| ItarError::Config(format!("{} has no regularizer {index}", spec.name)))?;
                slot.tau = tau;
                let mut spec = spec.clone().runs(GRID_RUNS);
                spec.regularizers = Some(regs);
                let result = run_series::<S>(&spec, corpus, cooc, opts)?;
                Ok(result.runs.iter().map(|r| r.perplexity).sum::<f64>() / result.runs.len() as f64)
            }
            GridTarget::Sift { cfg } => {
                let mut cfg = cfg.clone();
                cfg.max_iterations = GRID_ITAR_ITERATIONS;
                cfg.tau_sift_bad = tau;
                cfg.tau_sift_good = tau;
                let outcome = run_itar::<S>(&cfg, corpus, cooc)?;
                Ok(outcome.history.last().expect("one iteration").metrics.perplexity)
            }
        }
    }
}

/// Scores every grid point with `evaluate` and picks one per `objective`.
pub fn grid_search_tau<E>(
    grid: &[f64],
    objective: GridObjective,
    mut evaluate: impl FnMut(f64) -> Result<f64, E>,
) -> Result<GridSearch, E> {
    assert!(!grid.is_empty(), "grid must not be empty");
    let points: Vec<GridPoint> = grid
        .iter()
        .map(|&tau| evaluate(tau).map(|perplexity| GridPoint { tau, perplexity }))
        .collect::<Result<_, _>>()?;
    match objective {
        GridObjective::MinPerplexity => {
            let best = points
                .iter()
                .min_by(|a, b| a.perplexity.total_cmp(&b.perplexity))
                .expect("nonempty grid");
            Ok(GridSearch { chosen: best.tau, points, baseline: None, satisfied: true })
        }
        GridObjective::PerplexityDegradation { target } => {
            let baseline = evaluate(0.0)?;
            let mut by_magnitude: Vec<&GridPoint> = points.iter().collect();
            by_magnitude.sort_by(|a, b| a.tau.abs().total_cmp(&b.tau.abs()));
            let hit = by_magnitude.iter().find(|p| p.perplexity >= baseline * (1.0 + target));
            let (chosen, satisfied) = match hit {
                Some(p) => (p.tau, true),
                None => {
                    let largest = by_magnitude.last().expect("nonempty grid").tau;
                    log::warn!("no grid point degrades perplexity by {target}; using tau = {largest}");
                    (largest, false)
                }
            };
            Ok(GridSearch { points, baseline: Some(baseline), chosen, satisfied })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn min_perplexity_picks_argmin() {
        let g = grid_search_tau(&DECORRELATION_GRID, GridObjective::MinPerplexity, |t| {
            Ok::<_, Infallible>((t - 0.05f64).abs())
        })
        .unwrap();
        assert_eq!(g.chosen, 0.05);
        assert_eq!(g.points.len(), 4);
    }

    #[test]
    fn single_point_grid() {
        let g = grid_search_tau(&[7.0], GridObjective::MinPerplexity, |_| Ok::<_, Infallible>(1.0)).unwrap();
        assert_eq!(g.chosen, 7.0);
    }

    #[test]
    fn degradation_picks_smallest_sufficient_tau() {
        // perplexity 100 at τ = 0, growing with log10 τ
        let ppl = |t: f64| Ok::<_, Infallible>(if t == 0.0 { 100.0 } else { 100.0 + 3.0 * t.log10() });
        let g = grid_search_tau(&SIFT_V1_GRID, GridObjective::PerplexityDegradation { target: 0.1 }, ppl).unwrap();
        assert_eq!(g.chosen, 1e4);
        assert!(g.satisfied);
        assert_eq!(g.baseline, Some(100.0));
        let g = grid_search_tau(&SIFT_V1_GRID, GridObjective::PerplexityDegradation { target: 0.5 }, ppl).unwrap();
        assert_eq!(g.chosen, 1e10);
        assert!(!g.satisfied);
    }

    #[test]
    fn default_grids() {
        assert_eq!(SIFT_V1_GRID.first(), Some(&10.0));
        assert_eq!(SIFT_V1_GRID.last(), Some(&1e10));
        assert_eq!(SIFT_V2_GRID.last(), Some(&1e12));
        assert_eq!(SPARSE_GRID, [-0.05, -0.1]);
    }
}
