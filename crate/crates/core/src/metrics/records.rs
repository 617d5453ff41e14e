//! Line-oriented metric records.
//!
//! ```text
//! # test: bvcc_test domain=synthetic
//! model_id,test_id,metric,value
//! head,bvcc_test,utt_mse,0.4121
//! head,bvcc_test,sys_lcc,undefined
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`; `undefined` marks a metric that could not be computed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{MetricName, MetricReport};
use crate::corpus::DomainTag;
use crate::error::{Error, Result};

pub const RECORDS_HEADER: &str = "model_id,test_id,metric,value";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportSet {
    pub tests: BTreeMap<String, DomainTag>,
    pub reports: BTreeMap<(String, String), MetricReport>,
}

pub fn write_records(set: &ReportSet) -> String {
    let mut out = String::new();
    for (t, d) in &set.tests {
        let _ = writeln!(out, "# test: {t} domain={d}");
    }
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for ((model, test), r) in &set.reports {
        for m in MetricName::ALL {
            let v = r.get(m).map_or_else(|| "undefined".to_string(), |v| v.to_string());
            let _ = writeln!(out, "{model},{test},{m},{v}");
        }
    }
    out
}

pub fn parse_records(text: &str) -> Result<ReportSet> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: "<records>".into(),
        line,
        msg,
    };
    let mut set = ReportSet::default();
    let mut header = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(spec) = rest.trim().strip_prefix("test:") {
                let mut it = spec.split_whitespace();
                let name = it.next().ok_or_else(|| perr(i + 1, "test directive without a name".into()))?;
                let domain = it
                    .find_map(|kv| kv.strip_prefix("domain="))
                    .ok_or_else(|| perr(i + 1, "test directive without domain".into()))?;
                set.tests.insert(name.to_string(), domain.parse().map_err(|e: Error| perr(i + 1, e.to_string()))?);
            }
            continue;
        }
        if !header {
            if line != RECORDS_HEADER {
                return Err(perr(i + 1, format!("expected header `{RECORDS_HEADER}`")));
            }
            header = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(perr(i + 1, "expected 4 columns".into()));
        }
        let metric: MetricName = cols[2].parse().map_err(|e: Error| perr(i + 1, e.to_string()))?;
        let value = match cols[3] {
            "undefined" => None,
            v => Some(v.parse::<f64>().map_err(|_| perr(i + 1, format!("bad value `{v}`")))?),
        };
        set.reports
            .entry((cols[0].to_string(), cols[1].to_string()))
            .or_default()
            .set(metric, value);
    }
    Ok(set)
}
