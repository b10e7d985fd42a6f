//! Tables and series derived from experiment results. Output depends only
//! on the results value, so re-running on the same result file reproduces
//! the same bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::experiment::ExperimentResults;
use super::series::{ModelResult, RunRecord};
use crate::itar::{Ablation, Thresholds};
use crate::metrics::{relative_density, QualityCriterion};

/// Expected share of good topics under the 80th-percentile threshold.
pub const BASELINE_GOOD_DENSITY: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub perplexity: f64,
    /// With and without a background topic, for bank-as-model rows.
    pub bank_perplexity: Option<[f64; 2]>,
    pub coherence: f64,
    pub good_percent: f64,
    pub diversity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub iterations_percent: f64,
    pub perplexity: f64,
    pub coherence: f64,
    pub good_percent: f64,
    pub bad_percent: f64,
    pub diversity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRow {
    pub name: String,
    pub stage: &'static str,
    pub toptok: f64,
    pub toptok_at_intra: Option<f64>,
}

pub fn summary_row(model: &ModelResult, thresholds: &Thresholds, criterion: QualityCriterion) -> Option<SummaryRow> {
    let run = model.runs.get(model.selected_run(thresholds, criterion))?;
    Some(SummaryRow {
        name: model.name.clone(),
        perplexity: run.perplexity,
        bank_perplexity: model.bank_perplexity,
        coherence: run.coherence(criterion),
        good_percent: run.good_percent(thresholds, criterion),
        diversity: run.diversity,
    })
}

fn ablation_row(model: &ModelResult, thresholds: &Thresholds, criterion: QualityCriterion) -> Option<AblationRow> {
    model.name.strip_prefix("itar_")?.parse::<Ablation>().ok()?;
    let run = model.runs.last()?;
    let max = model.max_iterations.unwrap_or(model.runs.len()).max(1);
    Some(AblationRow {
        name: model.name.clone(),
        iterations_percent: 100.0 * model.runs.len() as f64 / max as f64,
        perplexity: run.perplexity,
        coherence: run.coherence(criterion),
        good_percent: run.good_percent(thresholds, criterion),
        bad_percent: 100.0 * model.bank_bad.unwrap_or(0) as f64 / model.topics.max(1) as f64,
        diversity: run.diversity,
    })
}

fn density(run: &RunRecord, toptok: &Thresholds, intra: &Thresholds) -> Option<(f64, Option<f64>)> {
    let intra_scores = run.intra.as_ref()?;
    let good_tok: Vec<bool> = run.toptoken.iter().map(|s| s.is_some_and(|c| c >= toptok.theta_good)).collect();
    let good_intra: Vec<bool> = intra_scores.iter().map(|s| s.is_some_and(|c| c >= intra.theta_good)).collect();
    let total = run.toptoken.len();
    let tok = relative_density(good_tok.iter().filter(|&&g| g).count(), total, BASELINE_GOOD_DENSITY).ok()?;
    let intra_total = good_intra.iter().filter(|&&g| g).count();
    let both = good_tok.iter().zip(&good_intra).filter(|(&a, &b)| a && b).count();
    Some((tok, relative_density(both, intra_total, BASELINE_GOOD_DENSITY).ok()))
}

/// Densities of the first and last iteration of iterative models and of the
/// selected run of the others; empty unless intra-text thresholds exist.
pub fn density_rows(results: &ExperimentResults) -> Vec<DensityRow> {
    let mut rows = Vec::new();
    for model in &results.models {
        let Some(pair) = results.thresholds.get(&model.topics) else { continue };
        let Some(intra) = &pair.intra else { continue };
        let stages: Vec<(&'static str, usize)> = if model.is_iterative() {
            vec![("first", 0), ("last", model.runs.len().saturating_sub(1))]
        } else {
            vec![("best", model.selected_run(pair.get(results.criterion), results.criterion))]
        };
        for (stage, i) in stages {
            let Some(run) = model.runs.get(i) else { continue };
            if let Some((toptok, toptok_at_intra)) = density(run, &pair.toptoken, intra) {
                rows.push(DensityRow { name: model.name.clone(), stage, toptok, toptok_at_intra });
            }
        }
    }
    rows
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.digits$}"))
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        padded.join("  ").trim_end().to_owned() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",") + "\n";
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn write_table(dir: &Path, stem: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    fs::write(dir.join(format!("{stem}.csv")), csv(header, rows))?;
    fs::write(dir.join(format!("{stem}.txt")), aligned(header, rows))
}

/// Writes `table`, `ablation` and `density` (CSV and aligned text) and
/// `good_series.json` into `out_dir`.
pub fn generate_report(results: &ExperimentResults, out_dir: &Path) -> io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let criterion = results.criterion;
    let mut summary = Vec::new();
    let mut ablation = Vec::new();
    let mut series: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for model in &results.models {
        let Some(pair) = results.thresholds.get(&model.topics) else {
            log::warn!("no thresholds for T={}, skipping {}", model.topics, model.name);
            continue;
        };
        let th = pair.get(criterion);
        if let Some(row) = summary_row(model, th, criterion) {
            let ppl = match row.bank_perplexity {
                Some([with_bg, without]) => format!("{:.4}/{:.4}", with_bg / 1000.0, without / 1000.0),
                None => format!("{:.4}", row.perplexity / 1000.0),
            };
            summary.push(vec![
                row.name,
                ppl,
                format!("{:.3}", row.coherence),
                format!("{:.1}", row.good_percent),
                opt(row.diversity, 3),
            ]);
        }
        if let Some(row) = ablation_row(model, th, criterion) {
            ablation.push(vec![
                row.name,
                format!("{:.0}", row.iterations_percent),
                format!("{:.4}", row.perplexity / 1000.0),
                format!("{:.3}", row.coherence),
                format!("{:.1}", row.good_percent),
                format!("{:.1}", row.bad_percent),
                opt(row.diversity, 3),
            ]);
        }
        if model.is_iterative() {
            let points = model.runs.iter().enumerate().map(|(i, r)| (i, r.good_percent(th, criterion))).collect();
            series.insert(model.name.clone(), points);
        }
    }
    write_table(out_dir, "table", &["model", "PPL/1000", "Coh", "T+%", "Div"], &summary)?;
    if !ablation.is_empty() {
        write_table(out_dir, "ablation", &["model", "# iters %", "PPL/1000", "Coh", "T+%", "T-%", "Div"], &ablation)?;
    }
    let density: Vec<Vec<String>> = density_rows(results)
        .into_iter()
        .map(|r| vec![r.name, r.stage.to_owned(), format!("{:.2}", r.toptok), opt(r.toptok_at_intra, 2)])
        .collect();
    if !density.is_empty() {
        write_table(out_dir, "density", &["model", "stage", "Tplustoptok", "Tplustoptok@Tplusintra"], &density)?;
    }
    let json = serde_json::to_string_pretty(&series).expect("series serialize");
    fs::write(out_dir.join("good_series.json"), json + "\n")
}
