//! Manifest text format.
//!
//! ```text
//! # name: BVCC
//! # domain: synthetic
//! # language: English
//! # rate: 16000
//! sample_id,audio_path,embedding_path,dataset,system_id,mos,listener_id,listener_score
//! # split: train
//! utt1,wav/utt1.wav,,BVCC,sys1,3.5,l1,3
//! utt1,wav/utt1.wav,,BVCC,sys1,3.5,l2,4
//! # split: dev
//! utt2,,emb/utt2.sqe,BVCC,sys2,4.0,,
//! ```
//!
//! Lines starting with `#` are directives (`key: value` or `key=value`) or
//! comments. `split` switches the section that following rows belong to and
//! defaults to `train`. Relative paths resolve against the manifest's
//! directory. A sample rated by several listeners occupies one row per
//! listener; those rows must be consecutive.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{CorpusManifest, DomainTag, ListenerScore, Sample, Split};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str =
    "sample_id,audio_path,embedding_path,dataset,system_id,mos,listener_id,listener_score";

pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_manifest(&text, path, base, &stem)
}

struct Row {
    line: usize,
    split: Split,
    sample: Sample,
    listener: Option<ListenerScore>,
}

/// Parses manifest text. `origin` is used in error messages, `base` to
/// resolve relative paths and `default_name` when no `name` directive or
/// dataset column is present.
pub fn parse_manifest(
    text: &str,
    origin: &Path,
    base: &Path,
    default_name: &str,
) -> Result<CorpusManifest> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };

    let mut meta: BTreeMap<String, String> = BTreeMap::new();
    let mut split = Split::Train;
    let mut header_seen = false;
    let mut rows: Vec<Row> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(directive) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = directive.split_once([':', '=']) {
                let key = k.trim().to_ascii_lowercase();
                let value = v.trim().to_string();
                match key.as_str() {
                    "split" => split = value.parse().map_err(|e: Error| perr(line_no, e.to_string()))?,
                    "name" | "domain" | "language" | "rate" => {
                        meta.insert(key, value);
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !header_seen {
            if trimmed != MANIFEST_HEADER {
                return Err(perr(line_no, format!("expected header `{MANIFEST_HEADER}`")));
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 8 {
            return Err(perr(line_no, format!("expected 8 columns, found {}", cols.len())));
        }
        let opt_path = |s: &str| -> Option<PathBuf> {
            (!s.is_empty()).then(|| {
                let p = Path::new(s);
                if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    base.join(p)
                }
            })
        };
        if cols[0].is_empty() {
            return Err(perr(line_no, "empty sample_id".into()));
        }
        let mos: f64 = cols[5]
            .parse()
            .map_err(|_| perr(line_no, format!("mos `{}` is not a number", cols[5])))?;
        let listener = match (cols[6].is_empty(), cols[7].is_empty()) {
            (true, true) => None,
            (false, false) => {
                let score: u8 = cols[7].parse().map_err(|_| {
                    perr(line_no, format!("listener score `{}` is not an integer", cols[7]))
                })?;
                Some(ListenerScore {
                    listener_id: cols[6].to_string(),
                    score,
                })
            }
            _ => return Err(perr(line_no, "listener_id and listener_score must both be set".into())),
        };
        rows.push(Row {
            line: line_no,
            split,
            sample: Sample {
                sample_id: cols[0].to_string(),
                audio_ref: opt_path(cols[1]),
                embedding_ref: opt_path(cols[2]),
                dataset_id: cols[3].to_string(),
                system_id: (!cols[4].is_empty()).then(|| cols[4].to_string()),
                mos,
                listener_scores: None,
            },
            listener,
        });
    }
    if !header_seen {
        return Err(perr(1, "missing header row".into()));
    }

    let name = meta
        .get("name")
        .cloned()
        .or_else(|| {
            rows.iter()
                .map(|r| r.sample.dataset_id.clone())
                .find(|d| !d.is_empty())
        })
        .unwrap_or_else(|| default_name.to_string());
    let domain_tag = match meta.get("domain") {
        Some(d) => d.parse()?,
        None => DomainTag::NonSynthetic,
    };
    let native_rate_hz = match meta.get("rate") {
        Some(r) => r
            .parse()
            .map_err(|_| Error::Validation(format!("rate `{r}` is not an integer")))?,
        None => 16_000,
    };
    let mut corpus = CorpusManifest {
        name,
        domain_tag,
        language: meta.get("language").cloned().unwrap_or_else(|| "unknown".into()),
        native_rate_hz,
        splits: BTreeMap::new(),
    };

    // group consecutive rows of the same sample
    let mut closed: BTreeSet<String> = BTreeSet::new();
    let mut i = 0;
    while i < rows.len() {
        let first = &rows[i];
        let mut j = i + 1;
        while j < rows.len()
            && rows[j].sample.sample_id == first.sample.sample_id
            && rows[j].split == first.split
        {
            j += 1;
        }
        let group = &rows[i..j];
        if !closed.insert(first.sample.sample_id.clone()) {
            return Err(perr(
                first.line,
                format!("sample `{}` appears in non-consecutive rows", first.sample.sample_id),
            ));
        }
        let mut sample = first.sample.clone();
        if sample.dataset_id.is_empty() {
            sample.dataset_id = corpus.name.clone();
        }
        if group.len() > 1 || first.listener.is_some() {
            let mut ls = Vec::with_capacity(group.len());
            for r in group {
                let Some(l) = r.listener.clone() else {
                    return Err(perr(r.line, "rows of a multi-listener sample need listener columns".into()));
                };
                if r.sample.mos != first.sample.mos {
                    return Err(perr(r.line, "mos differs between rows of the same sample".into()));
                }
                ls.push(l);
            }
            sample.listener_scores = Some(ls);
        }
        sample
            .validate()
            .map_err(|e| perr(first.line, e.to_string()))?;
        if sample.dataset_id != corpus.name {
            return Err(perr(
                first.line,
                format!("dataset `{}` does not match corpus `{}`", sample.dataset_id, corpus.name),
            ));
        }
        corpus.splits.entry(first.split).or_default().push(sample);
        i = j;
    }
    Ok(corpus)
}

fn rel(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

pub fn manifest_text(corpus: &CorpusManifest, base: &Path) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# name: {}", corpus.name);
    let _ = writeln!(out, "# domain: {}", corpus.domain_tag);
    let _ = writeln!(out, "# language: {}", corpus.language);
    let _ = writeln!(out, "# rate: {}", corpus.native_rate_hz);
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for (split, samples) in &corpus.splits {
        let _ = writeln!(out, "# split: {split}");
        for s in samples {
            let audio = s.audio_ref.as_deref().map(|p| rel(p, base)).unwrap_or_default();
            let emb = s.embedding_ref.as_deref().map(|p| rel(p, base)).unwrap_or_default();
            let sys = s.system_id.as_deref().unwrap_or("");
            match &s.listener_scores {
                Some(ls) => {
                    for l in ls {
                        let _ = writeln!(
                            out,
                            "{},{audio},{emb},{},{sys},{},{},{}",
                            s.sample_id, s.dataset_id, s.mos, l.listener_id, l.score
                        );
                    }
                }
                None => {
                    let _ = writeln!(out, "{},{audio},{emb},{},{sys},{},,", s.sample_id, s.dataset_id, s.mos);
                }
            }
        }
    }
    out
}

/// Writes `corpus` to `path`; paths under the manifest directory are stored relative.
pub fn write_manifest(corpus: &CorpusManifest, path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    fs::write(path, manifest_text(corpus, base)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<CorpusManifest> {
        parse_manifest(text, Path::new("m.csv"), Path::new("/data"), "m")
    }

    #[test]
    fn boundary_scores_accepted() {
        let text = format!(
            "{MANIFEST_HEADER}\na,a.wav,,X,s1,1.0,,\nb,b.wav,,X,s1,3.0,,\nc,c.wav,,X,s2,5.0,,\n"
        );
        let c = parse(&text).unwrap();
        assert_eq!(c.name, "X");
        assert_eq!(c.train().len(), 3);
        assert_eq!(c.train()[0].audio_ref.as_deref(), Some(Path::new("/data/a.wav")));
    }

    #[test]
    fn out_of_scale_mos_rejected_with_line() {
        let text = format!("{MANIFEST_HEADER}\na,a.wav,,X,,3.0,,\nb,b.wav,,X,,5.5,,\n");
        match parse(&text) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("outside"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        let cases = [
            format!("{MANIFEST_HEADER}\na,a.wav,,X,,three,,\n"),
            format!("{MANIFEST_HEADER}\na,a.wav,,X,,3.0\n"),
            format!("{MANIFEST_HEADER}\na,a.wav,,X,,3.0,l1,\n"),
            format!("{MANIFEST_HEADER}\na,,,X,,3.0,,\n"),
            format!("{MANIFEST_HEADER}\na,a.wav,a.sqe,X,,3.0,,\n"),
            "sample_id,mos\na,3\n".to_string(),
            format!("{MANIFEST_HEADER}\n# split: eval\n"),
            format!("{MANIFEST_HEADER}\na,a.wav,,X,,3.0,,\nb,b.wav,,X,,3.0,,\na,a.wav,,X,,3.0,,\n"),
        ];
        for text in cases {
            assert!(matches!(parse(&text), Err(Error::Parse { .. })), "{text}");
        }
    }

    #[test]
    fn listener_rows_grouped() {
        let text = format!(
            "# name: X\n{MANIFEST_HEADER}\na,a.wav,,X,s,3.5,l1,3\na,a.wav,,X,s,3.5,l2,4\n# split: dev\nb,,b.sqe,X,s,2,l1,2\n"
        );
        let c = parse(&text).unwrap();
        assert_eq!(c.train().len(), 1);
        assert_eq!(c.train()[0].listener_scores.as_ref().unwrap().len(), 2);
        assert_eq!(c.dev().len(), 1);
        let bad = text.replace("3.5,l2,4", "3.5,l2,5");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn bvcc_sized_manifest() {
        let mut text = format!("# name: BVCC\n# domain: synthetic\n{MANIFEST_HEADER}\n# split: train\n");
        for i in 0..4944 {
            let _ = writeln!(text, "tr{i},wav/tr{i}.wav,,BVCC,sys{},3.0,,", i % 175);
        }
        text.push_str("# split: dev\n");
        for i in 0..1066 {
            let _ = writeln!(text, "dv{i},wav/dv{i}.wav,,BVCC,sys{},3.0,,", i % 175);
        }
        let c = parse(&text).unwrap();
        assert_eq!(c.domain_tag, DomainTag::Synthetic);
        assert_eq!(c.train().len(), 4944);
        assert_eq!(c.dev().len(), 1066);
    }

    #[test]
    fn write_then_load_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "# name: X\n# language: English\n# rate: 48000\n{MANIFEST_HEADER}\na,w/a.wav,,X,s,3.5,l1,3\na,w/a.wav,,X,s,3.5,l2,4\n# split: test\nb,,e/b.sqe,X,,2.25,,\n"
        );
        let p = dir.path().join("x.csv");
        fs::write(&p, &text).unwrap();
        let c1 = load_manifest(&p).unwrap();
        let p2 = dir.path().join("y.csv");
        write_manifest(&c1, &p2).unwrap();
        let c2 = load_manifest(&p2).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c2.native_rate_hz, 48000);
        assert_eq!(fs::read_to_string(&p2).unwrap(), manifest_text(&c2, dir.path()));
    }
}
