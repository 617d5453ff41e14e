//! Best score difference / ratio across many test sets.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{MetricName, MetricReport};
use crate::corpus::DomainTag;
use crate::error::{Error, Result};

/// `model_mse - best_mse`.
pub fn best_score_difference(model_mse: f64, best_mse: f64) -> f64 {
    model_mse - best_mse
}

/// `100 * model_corr / best_corr`, in percent. The quotient is taken first
/// so the best model scores exactly 100.
pub fn best_score_ratio(model_corr: f64, best_corr: f64) -> Result<f64> {
    if best_corr == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(100.0 * (model_corr / best_corr))
}

/// Correlation used for ratios when a test set does not say otherwise:
/// system SRCC for synthetic speech, utterance LCC otherwise.
pub fn default_ratio_metric(domain: DomainTag) -> MetricName {
    match domain {
        DomainTag::Synthetic => MetricName::SysSrcc,
        DomainTag::NonSynthetic => MetricName::UttLcc,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestInfo {
    pub domain: DomainTag,
    pub ratio_metric: MetricName,
}

impl TestInfo {
    pub fn new(domain: DomainTag) -> Self {
        TestInfo {
            domain,
            ratio_metric: default_ratio_metric(domain),
        }
    }
}

/// Reference values a test set's cells are compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct BestRef {
    pub mse: f64,
    pub mse_model: Option<String>,
    pub corr: f64,
    pub corr_model: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BestPolicy {
    /// Best = lowest error / highest correlation among the compared models.
    WithinFamily,
    /// Best values supplied per test set, e.g. from an earlier experiment.
    External(BTreeMap<String, BestRef>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub error: Option<f64>,
    pub corr: Option<f64>,
    pub difference: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub model: String,
    /// `None` for the average over every test set.
    pub domain: Option<DomainTag>,
    pub mean_difference: Option<f64>,
    pub mean_ratio: Option<f64>,
    pub n_tests: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchMatrix {
    pub models: Vec<String>,
    pub tests: Vec<String>,
    pub error_metric: MetricName,
    pub test_info: BTreeMap<String, TestInfo>,
    pub best: BTreeMap<String, BestRef>,
    pub cells: BTreeMap<(String, String), BenchCell>,
    pub summaries: Vec<BenchSummary>,
}

fn mean(vals: &[f64]) -> Option<f64> {
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Fills best score differences and ratios for every (model, test) cell and
/// averages them per model, overall and per domain tag.
pub fn aggregate(
    reports: &BTreeMap<(String, String), MetricReport>,
    tests: &BTreeMap<String, TestInfo>,
    error_metric: MetricName,
    policy: &BestPolicy,
) -> Result<BenchMatrix> {
    if !error_metric.is_error() {
        return Err(Error::Argument(format!("{error_metric} is not an error metric")));
    }
    let mut models: Vec<String> = reports.keys().map(|(m, _)| m.clone()).collect();
    models.dedup();
    let test_ids: Vec<String> = tests.keys().cloned().collect();
    if let Some((_, t)) = reports.keys().find(|(_, t)| !tests.contains_key(t)) {
        return Err(Error::Validation(format!("no domain information for test `{t}`")));
    }

    let mut best = BTreeMap::new();
    for (test, info) in tests {
        let b = match policy {
            BestPolicy::External(refs) => refs
                .get(test)
                .cloned()
                .ok_or_else(|| Error::Argument(format!("no reference best values for test `{test}`")))?,
            BestPolicy::WithinFamily => {
                let mut errs = Vec::new();
                let mut corrs = Vec::new();
                for m in &models {
                    if let Some(r) = reports.get(&(m.clone(), test.clone())) {
                        if let Some(e) = r.get(error_metric) {
                            errs.push((e, m));
                        }
                        if let Some(c) = r.get(info.ratio_metric) {
                            corrs.push((c, m));
                        }
                    }
                }
                // ties resolve to the first model in name order
                let lo = errs.iter().copied().reduce(|a, b| if b.0 < a.0 { b } else { a });
                let hi = corrs.iter().copied().reduce(|a, b| if b.0 > a.0 { b } else { a });
                match (lo, hi) {
                    (Some(lo), Some(hi)) => BestRef {
                        mse: lo.0,
                        mse_model: Some(lo.1.clone()),
                        corr: hi.0,
                        corr_model: Some(hi.1.clone()),
                    },
                    _ => {
                        return Err(Error::Validation(format!(
                            "test `{test}` has no model with defined {error_metric} and {}",
                            info.ratio_metric
                        )))
                    }
                }
            }
        };
        best.insert(test.clone(), b);
    }

    let mut cells = BTreeMap::new();
    for ((model, test), report) in reports {
        let info = &tests[test];
        let b = &best[test];
        let error = report.get(error_metric);
        let corr = report.get(info.ratio_metric);
        let ratio = match corr {
            Some(c) => Some(best_score_ratio(c, b.corr)?),
            None => None,
        };
        cells.insert(
            (model.clone(), test.clone()),
            BenchCell {
                error,
                corr,
                difference: error.map(|e| best_score_difference(e, b.mse)),
                ratio,
            },
        );
    }

    let mut summaries = Vec::new();
    for model in &models {
        let domains = [None, Some(DomainTag::Synthetic), Some(DomainTag::NonSynthetic)];
        for domain in domains {
            let selected: Vec<&BenchCell> = test_ids
                .iter()
                .filter(|t| domain.is_none_or(|d| tests[*t].domain == d))
                .filter_map(|t| cells.get(&(model.clone(), t.clone())))
                .collect();
            if selected.is_empty() {
                continue;
            }
            let diffs: Vec<f64> = selected.iter().filter_map(|c| c.difference).collect();
            let ratios: Vec<f64> = selected.iter().filter_map(|c| c.ratio).collect();
            summaries.push(BenchSummary {
                model: model.clone(),
                domain,
                mean_difference: mean(&diffs),
                mean_ratio: mean(&ratios),
                n_tests: selected.len(),
            });
        }
    }

    Ok(BenchMatrix {
        models,
        tests: test_ids,
        error_metric,
        test_info: tests.clone(),
        best,
        cells,
        summaries,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

impl BenchMatrix {
    pub fn summary(&self, model: &str, domain: Option<DomainTag>) -> Option<&BenchSummary> {
        self.summaries.iter().find(|s| s.model == model && s.domain == domain)
    }

    /// Model-by-test grid of one cell field as CSV, ready for a heatmap.
    pub fn grid_csv(&self, field: impl Fn(&BenchCell) -> Option<f64>) -> String {
        let mut out = String::from("model");
        for t in &self.tests {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
        for m in &self.models {
            out.push_str(m);
            for t in &self.tests {
                let v = self.cells.get(&(m.clone(), t.clone())).and_then(&field);
                let _ = write!(out, ",{}", fmt_opt(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("model,domain,mean_difference,mean_ratio,n_tests\n");
        for s in &self.summaries {
            let dom = s.domain.map_or_else(|| "all".to_string(), |d| d.to_string());
            let _ = writeln!(
                out,
                "{},{dom},{},{},{}",
                s.model,
                fmt_opt(s.mean_difference),
                fmt_opt(s.mean_ratio),
                s.n_tests
            );
        }
        out
    }

    /// Plain-text table with difference / ratio per cell and the averages.
    pub fn render_table(&self) -> String {
        let w = self.tests.iter().map(String::len).max().unwrap_or(4).max(16);
        let mw = self.models.iter().map(String::len).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = write!(out, "{:mw$}", "model");
        for t in &self.tests {
            let _ = write!(out, "  {t:>w$}");
        }
        for h in ["synthetic", "non-synthetic", "average"] {
            let _ = write!(out, "  {h:>w$}");
        }
        out.push('\n');
        let pair = |d: Option<f64>, r: Option<f64>| match (d, r) {
            (Some(d), Some(r)) => format!("{d:+.3} / {r:.1}%"),
            (Some(d), None) => format!("{d:+.3} / n/a"),
            (None, Some(r)) => format!("n/a / {r:.1}%"),
            (None, None) => "n/a".to_string(),
        };
        for m in &self.models {
            let _ = write!(out, "{m:mw$}");
            for t in &self.tests {
                let c = self.cells.get(&(m.clone(), t.clone()));
                let s = c.map_or("-".to_string(), |c| pair(c.difference, c.ratio));
                let _ = write!(out, "  {s:>w$}");
            }
            for d in [Some(DomainTag::Synthetic), Some(DomainTag::NonSynthetic), None] {
                let s = self
                    .summary(m, d)
                    .map_or("-".to_string(), |s| pair(s.mean_difference, s.mean_ratio));
                let _ = write!(out, "  {s:>w$}");
            }
            out.push('\n');
        }
        out
    }
}
