//! Utterance and system level agreement metrics.

mod bench;
mod records;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use bench::{
    aggregate, best_score_difference, best_score_ratio, default_ratio_metric, BenchCell,
    BenchMatrix, BenchSummary, BestPolicy, BestRef, TestInfo,
};
pub use records::{parse_records, write_records, ReportSet, RECORDS_HEADER};

/// One scored utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub sample_id: String,
    pub system_id: Option<String>,
    pub truth: f64,
    pub pred: f64,
}

fn check_pairs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} values vs {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::Argument("no values".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite value in metric input".into()));
    }
    Ok(())
}

pub fn mse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pairs(truth, pred)?;
    Ok(truth.iter().zip(pred).map(|(t, p)| (p - t) * (p - t)).sum::<f64>() / truth.len() as f64)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(x, y)?;
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman correlation: Pearson over average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y)).map_err(|e| match e {
        Error::UndefinedCorrelation(m) => Error::UndefinedCorrelation(format!("ranks: {m}")),
        other => other,
    })
}

/// Mean truth and prediction per system, ordered by system id.
pub fn system_aggregate(pairs: &[EvalPair]) -> Result<Vec<EvalPair>> {
    let mut groups: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for p in pairs {
        let sys = p.system_id.as_deref().ok_or_else(|| {
            Error::Validation(format!("sample `{}` has no system id", p.sample_id))
        })?;
        let e = groups.entry(sys).or_insert((0.0, 0.0, 0));
        e.0 += p.truth;
        e.1 += p.pred;
        e.2 += 1;
    }
    Ok(groups
        .into_iter()
        .map(|(sys, (t, p, n))| EvalPair {
            sample_id: sys.to_string(),
            system_id: Some(sys.to_string()),
            truth: t / n as f64,
            pred: p / n as f64,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricName {
    UttMse,
    UttLcc,
    UttSrcc,
    SysMse,
    SysLcc,
    SysSrcc,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::UttMse,
        MetricName::UttLcc,
        MetricName::UttSrcc,
        MetricName::SysMse,
        MetricName::SysLcc,
        MetricName::SysSrcc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::UttMse => "utt_mse",
            MetricName::UttLcc => "utt_lcc",
            MetricName::UttSrcc => "utt_srcc",
            MetricName::SysMse => "sys_mse",
            MetricName::SysLcc => "sys_lcc",
            MetricName::SysSrcc => "sys_srcc",
        }
    }

    pub fn is_error(self) -> bool {
        matches!(self, MetricName::UttMse | MetricName::SysMse)
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Argument(format!("unknown metric `{s}`")))
    }
}

/// Metrics for one (model, test set) evaluation. `None` marks a value that
/// is undefined (constant vector) or unavailable (no system ids).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub utt_mse: Option<f64>,
    pub utt_lcc: Option<f64>,
    pub utt_srcc: Option<f64>,
    pub sys_mse: Option<f64>,
    pub sys_lcc: Option<f64>,
    pub sys_srcc: Option<f64>,
}

impl MetricReport {
    pub fn get(&self, m: MetricName) -> Option<f64> {
        match m {
            MetricName::UttMse => self.utt_mse,
            MetricName::UttLcc => self.utt_lcc,
            MetricName::UttSrcc => self.utt_srcc,
            MetricName::SysMse => self.sys_mse,
            MetricName::SysLcc => self.sys_lcc,
            MetricName::SysSrcc => self.sys_srcc,
        }
    }

    pub fn set(&mut self, m: MetricName, v: Option<f64>) {
        let slot = match m {
            MetricName::UttMse => &mut self.utt_mse,
            MetricName::UttLcc => &mut self.utt_lcc,
            MetricName::UttSrcc => &mut self.utt_srcc,
            MetricName::SysMse => &mut self.sys_mse,
            MetricName::SysLcc => &mut self.sys_lcc,
            MetricName::SysSrcc => &mut self.sys_srcc,
        };
        *slot = v;
    }

    /// Arithmetic mean per metric; a metric undefined in any report stays undefined.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        let mut out = MetricReport::default();
        if reports.is_empty() {
            return out;
        }
        for m in MetricName::ALL {
            let vals: Option<Vec<f64>> = reports.iter().map(|r| r.get(m)).collect();
            out.set(m, vals.map(|v| v.iter().sum::<f64>() / v.len() as f64));
        }
        out
    }
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Computes every metric; system metrics need a system id on every pair.
pub fn evaluate(pairs: &[EvalPair]) -> Result<MetricReport> {
    let truth: Vec<f64> = pairs.iter().map(|p| p.truth).collect();
    let pred: Vec<f64> = pairs.iter().map(|p| p.pred).collect();
    let mut r = MetricReport {
        utt_mse: Some(mse(&truth, &pred)?),
        utt_lcc: defined(pearson(&truth, &pred))?,
        utt_srcc: defined(spearman(&truth, &pred))?,
        ..Default::default()
    };
    if pairs.iter().all(|p| p.system_id.is_some()) {
        let sys = system_aggregate(pairs)?;
        let st: Vec<f64> = sys.iter().map(|p| p.truth).collect();
        let sp: Vec<f64> = sys.iter().map(|p| p.pred).collect();
        r.sys_mse = Some(mse(&st, &sp)?);
        r.sys_lcc = defined(pearson(&st, &sp))?;
        r.sys_srcc = defined(spearman(&st, &sp))?;
    }
    Ok(r)
}
