//! Recipe-style orchestration: one flat config file drives corpus
//! preparation, training, inference, benchmarking and report export.
//!
//! ```text
//! # comments start with '#'
//! out = runs/demo
//! seeds = 1,2,3
//! synth.a.delta = -0.5
//! corpus.bvcc = data/bvcc.csv
//! train_on = a,bvcc
//! tests = a,bvcc
//! model = alignnet
//! inference = parametric,domain-retrieval
//! ```
//!
//! Relative paths are resolved against the config file's directory.
//! Settings given on the command line override the file.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use crate::corpus::{
    generate_synthetic_corpus, load_manifest, pool, split_random, subsample, write_manifest, CorpusManifest,
    DomainTag, MosMap, Sample, Split, SynthSpec,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::export::{distribution_data, export_embeddings, DistributionData, EmbeddingExport, DEFAULT_PER_SET};
use crate::frontend::{Frontend, FrontendConfig, FrontendKind};
use crate::inference::{
    load_datastore, predict_batch, save_datastore, Datastore, DistanceKind, InferenceMode, KnnConfig,
};
use crate::metrics::{
    aggregate, evaluate, parse_records, write_records, BenchMatrix, BestPolicy, EvalPair, MetricName,
    MetricReport, ReportSet, TestInfo,
};
use crate::model::{load_params, Model, ModelConfig, ModelKind};
use crate::training::{run_seeds, train, train_mdf, TrainConfig, TrainingData};

#[derive(Debug, Clone, PartialEq)]
pub struct RecipeConfig {
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    /// Declared corpora, name to manifest path.
    pub corpora: BTreeMap<String, PathBuf>,
    /// Synthetic corpora generated by `prepare`.
    pub synth: BTreeMap<String, SynthSpec>,
    pub synth_seed: u64,
    /// Train share used when a declared corpus has no dev split.
    pub split_ratio: f64,
    pub split_seed: u64,
    pub subsample: BTreeMap<String, usize>,
    pub train_on: Vec<String>,
    pub tests: Vec<String>,
    pub frontend: FrontendConfig,
    pub model: ModelConfig,
    pub model_id: Option<String>,
    pub train: TrainConfig,
    pub inference: Vec<InferenceMode>,
    pub knn: KnnConfig,
    pub distance: DistanceKind,
    pub mdf_pretrain: Option<String>,
    pub export_per_set: usize,
    pub error_metric: MetricName,
}

impl Default for RecipeConfig {
    fn default() -> Self {
        RecipeConfig {
            out: PathBuf::from("out"),
            seeds: vec![0],
            corpora: BTreeMap::new(),
            synth: BTreeMap::new(),
            synth_seed: 0,
            split_ratio: 0.9,
            split_seed: 0,
            subsample: BTreeMap::new(),
            train_on: Vec::new(),
            tests: Vec::new(),
            frontend: FrontendConfig::default(),
            model: ModelConfig::default(),
            model_id: None,
            train: TrainConfig::default(),
            inference: vec![InferenceMode::Parametric],
            knn: KnnConfig::default(),
            distance: DistanceKind::Euclidean,
            mdf_pretrain: None,
            export_per_set: DEFAULT_PER_SET,
            error_metric: MetricName::UttMse,
        }
    }
}

fn list(value: &str) -> Vec<String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Validation(format!("`{key}`: cannot parse `{value}`")))
}

pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let seeds = list(value)
        .iter()
        .map(|s| parse_num::<u64>("seeds", s))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Error::Validation("seed list is empty".into()));
    }
    Ok(seeds)
}

fn set_synth(spec: &mut SynthSpec, key: &str, field: &str, value: &str) -> Result<()> {
    match field {
        "n_train" => spec.n_train = parse_num(key, value)?,
        "n_dev" => spec.n_dev = parse_num(key, value)?,
        "n_test" => spec.n_test = parse_num(key, value)?,
        "delta" => spec.delta = parse_num(key, value)?,
        "sigma" => spec.sigma = parse_num(key, value)?,
        "rate_hz" => spec.rate_hz = parse_num(key, value)?,
        "amplitude" => spec.tone_amplitude = parse_num(key, value)?,
        "min_duration_s" => spec.min_duration_s = parse_num(key, value)?,
        "max_duration_s" => spec.max_duration_s = parse_num(key, value)?,
        "tone_lo_hz" => spec.tone_hz.0 = parse_num(key, value)?,
        "tone_hi_hz" => spec.tone_hz.1 = parse_num(key, value)?,
        "domain" => spec.domain_tag = value.parse()?,
        "snr_grid" => {
            let grid = list(value)
                .iter()
                .map(|v| parse_num(key, v))
                .collect::<Result<Vec<f64>>>()?;
            let (lo, hi) = (spec.mos_map.apply(min(&spec.snr_grid_db)), spec.mos_map.apply(max(&spec.snr_grid_db)));
            spec.mos_map = MosMap::spanning(&grid, lo, hi);
            spec.snr_grid_db = grid;
        }
        "mos_range" => {
            let v = list(value);
            if v.len() != 2 {
                return Err(Error::Validation(format!("`{key}` expects `lo,hi`")));
            }
            spec.mos_map = MosMap::spanning(&spec.snr_grid_db, parse_num(key, &v[0])?, parse_num(key, &v[1])?);
        }
        _ => return Err(Error::Validation(format!("unknown key `{key}`"))),
    }
    Ok(())
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl RecipeConfig {
    /// Applies one setting. Relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let value = value.trim();
        if let Some(name) = key.strip_prefix("corpus.") {
            self.corpora.insert(name.to_string(), base.join(value));
            return Ok(());
        }
        if let Some(name) = key.strip_prefix("subsample.") {
            self.subsample.insert(name.to_string(), parse_num(key, value)?);
            return Ok(());
        }
        if let Some(rest) = key.strip_prefix("synth.") {
            let (name, field) = rest
                .rsplit_once('.')
                .ok_or_else(|| Error::Validation(format!("`{key}`: expected synth.NAME.FIELD")))?;
            let spec = self
                .synth
                .entry(name.to_string())
                .or_insert_with(|| SynthSpec::new(name));
            return set_synth(spec, key, field, value);
        }
        if self.train.set(key, value)? {
            return Ok(());
        }
        match key {
            "out" => self.out = base.join(value),
            "seeds" | "seed" => self.seeds = parse_seeds(value)?,
            "synth_seed" => self.synth_seed = parse_num(key, value)?,
            "split_seed" => self.split_seed = parse_num(key, value)?,
            "split_ratio" => self.split_ratio = parse_num(key, value)?,
            "train_on" => self.train_on = list(value),
            "tests" => self.tests = list(value),
            "frontend" => {
                self.frontend.kind = match value {
                    "dsp" => FrontendKind::Dsp,
                    "precomputed" => FrontendKind::Precomputed,
                    v => return Err(Error::Validation(format!("unknown frontend `{v}`"))),
                }
            }
            "n_mels" => self.frontend.dsp.n_mels = parse_num(key, value)?,
            "window_ms" => self.frontend.dsp.window_ms = parse_num(key, value)?,
            "hop_ms" => self.frontend.dsp.hop_ms = parse_num(key, value)?,
            "precomputed_dim" => self.frontend.precomputed_dim = Some(parse_num(key, value)?),
            "model" => self.model.kind = value.parse()?,
            "model_id" => self.model_id = Some(value.to_string()),
            "hidden" => self.model.hidden = parse_num(key, value)?,
            "embed_dim" => self.model.embed_dim = parse_num(key, value)?,
            "decoder_hidden" => self.model.decoder_hidden = parse_num(key, value)?,
            "inference" => {
                self.inference = list(value).iter().map(|m| m.parse()).collect::<Result<_>>()?;
            }
            "knn_k" => self.knn.k = parse_num(key, value)?,
            "knn_temperature" => self.knn.temperature = parse_num(key, value)?,
            "paper_literal_knn" => self.knn.paper_literal = parse_num(key, value)?,
            "distance" => self.distance = value.parse()?,
            "mdf_pretrain" => self.mdf_pretrain = Some(value.to_string()).filter(|v| !v.is_empty()),
            "export_per_set" => self.export_per_set = parse_num(key, value)?,
            "error_metric" => self.error_metric = value.parse()?,
            _ => return Err(Error::Validation(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Validation("seed list is empty".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Validation(format!("split_ratio {} must be in (0, 1)", self.split_ratio)));
        }
        if self.inference.is_empty() {
            return Err(Error::Validation("no inference mode selected".into()));
        }
        if !self.error_metric.is_error() {
            return Err(Error::Validation(format!("{} is not an error metric", self.error_metric)));
        }
        for name in self.synth.keys() {
            if self.corpora.contains_key(name) {
                return Err(Error::Validation(format!("`{name}` is declared both as corpus and as synth")));
            }
        }
        for name in self.train_on.iter().chain(&self.tests).chain(&self.mdf_pretrain) {
            if !self.corpora.contains_key(name) && !self.synth.contains_key(name) {
                return Err(Error::UnknownDataset(name.clone()));
            }
        }
        if let Some(p) = &self.mdf_pretrain {
            if !self.train_on.contains(p) {
                return Err(Error::Validation(format!("MDF pre-training corpus `{p}` is not in train_on")));
            }
        }
        if self.inference.contains(&InferenceMode::DomainRetrieval) && self.model.kind != ModelKind::AlignNet {
            return Err(Error::Validation("domain-retrieval inference needs model = alignnet".into()));
        }
        self.train.validate()?;
        self.knn.validate()
    }

    /// Name used for this model family in metric records.
    pub fn model_name(&self) -> String {
        let base = self.model_id.clone().unwrap_or_else(|| self.model.kind.to_string());
        match &self.mdf_pretrain {
            Some(p) => format!("{base}-mdf-{p}"),
            None => base,
        }
    }

    pub fn corpora_dir(&self) -> PathBuf {
        self.out.join("corpora")
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed_{seed}"))
    }

    /// Manifest path for a corpus: the prepared copy when present, else the
    /// declared one.
    pub fn corpus_path(&self, name: &str) -> Result<PathBuf> {
        let prepared = self.corpora_dir().join(format!("{name}.csv"));
        if prepared.exists() {
            return Ok(prepared);
        }
        if self.synth.contains_key(name) {
            return Err(Error::State(format!("synthetic corpus `{name}` not generated yet; run `prepare`")));
        }
        self.corpora
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownDataset(name.to_string()))
    }

    pub fn load_corpus(&self, name: &str) -> Result<CorpusManifest> {
        let path = self.corpus_path(name)?;
        let c = load_manifest(&path)?;
        if c.name != name {
            return Err(Error::Validation(format!(
                "{} declares corpus `{}`, expected `{name}`",
                path.display(),
                c.name
            )));
        }
        Ok(c)
    }
}

pub fn parse_recipe(text: &str, base: &Path) -> Result<RecipeConfig> {
    let mut cfg = RecipeConfig {
        out: base.join("out"),
        ..Default::default()
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: "<recipe>".into(),
            line: i + 1,
            msg: "expected `key = value`".into(),
        })?;
        cfg.set(k.trim(), v, base).map_err(|e| Error::Parse {
            path: "<recipe>".into(),
            line: i + 1,
            msg: e.to_string(),
        })?;
    }
    Ok(cfg)
}

pub fn load_recipe(path: &Path) -> Result<RecipeConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_recipe(&text, base).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        },
        other => other,
    })
}

/// Exclusive ownership of an output directory for one invocation.
#[derive(Debug)]
pub struct OutDirLock {
    path: PathBuf,
    _file: File,
}

impl OutDirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".lock");
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => Error::State(format!(
                    "{} is in use by another run (remove {} if stale)",
                    dir.display(),
                    path.display()
                )),
                _ => Error::io(&path, e),
            })?;
        Ok(OutDirLock { path, _file: file })
    }
}

impl Drop for OutDirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Generates synthetic corpora and materializes declared ones under
/// `<out>/corpora`, splitting off a dev set and subsampling as configured.
pub fn prepare(cfg: &RecipeConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let _lock = OutDirLock::acquire(&cfg.out)?;
    let dir = cfg.corpora_dir();
    let mut written = Vec::new();
    for spec in cfg.synth.values() {
        let mut spec = spec.clone();
        let n = cfg.subsample.get(&spec.name).copied();
        if let Some(n) = n {
            spec.n_train = spec.n_train.min(n);
        }
        written.push(generate_synthetic_corpus(&spec, &dir, cfg.synth_seed)?.manifest_path);
    }
    for (name, path) in &cfg.corpora {
        let mut c = load_manifest(path)?;
        if &c.name != name {
            return Err(Error::Validation(format!(
                "{} declares corpus `{}`, configured as `{name}`",
                path.display(),
                c.name
            )));
        }
        if let Some(&n) = cfg.subsample.get(name) {
            c = subsample(&c, n, cfg.split_seed)?;
        }
        if c.dev().is_empty() && c.test().is_empty() {
            c = split_random(&c, cfg.split_ratio, cfg.split_seed)?;
        }
        let out = dir.join(format!("{name}.csv"));
        write_manifest(&c, &out)?;
        written.push(out);
    }
    Ok(written)
}

fn training_data(cfg: &RecipeConfig, frontend: &Frontend, exec: Exec) -> Result<(TrainingData, Vec<Sample>)> {
    if cfg.train_on.is_empty() {
        return Err(Error::Validation("`train_on` lists no corpus".into()));
    }
    let corpora = cfg
        .train_on
        .iter()
        .map(|n| cfg.load_corpus(n))
        .collect::<Result<Vec<_>>>()?;
    if corpora.len() == 1 {
        let c = &corpora[0];
        Ok((TrainingData::from_corpus(c, frontend, exec)?, c.train().to_vec()))
    } else {
        let pooled = pool(&corpora)?;
        Ok((TrainingData::from_pooled(&pooled, frontend, exec)?, pooled.train()))
    }
}

/// A trained model for one seed plus what inference needs alongside it.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub seed: u64,
    pub model: Model,
    pub datastore: Option<Datastore>,
    pub dir: PathBuf,
}

fn needs_datastore(cfg: &RecipeConfig) -> bool {
    cfg.inference
        .iter()
        .any(|m| matches!(m, InferenceMode::Knn | InferenceMode::DomainRetrieval))
}

/// Trains (single corpus, pooled or MDF) for one seed and writes the
/// checkpoint, training log and, when needed, the datastore.
pub fn train_seed(cfg: &RecipeConfig, seed: u64, exec: Exec) -> Result<TrainedRun> {
    let frontend = Frontend::new(cfg.frontend.clone())?;
    let (data, train_samples) = training_data(cfg, &frontend, exec)?;
    let dir = cfg.seed_dir(seed);
    let tc = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let model = match &cfg.mdf_pretrain {
        Some(p) => {
            let out = train_mdf(&cfg.model, p, &data, &tc, &tc, Some(&dir), exec)?;
            let best = out.best().clone();
            crate::model::save_params(&best, &dir.join("best.ckpt"))?;
            best
        }
        None => train(&cfg.model, &data, &tc, Some(&dir), exec)?.best,
    };
    let datastore = if needs_datastore(cfg) {
        let ds = Datastore::build(&frontend, &train_samples, cfg.distance, exec)?;
        save_datastore(&ds, &dir.join("datastore.sqd"))?;
        Some(ds)
    } else {
        None
    };
    Ok(TrainedRun {
        seed,
        model,
        datastore,
        dir,
    })
}

/// Loads a run written by [`train_seed`].
pub fn load_run(cfg: &RecipeConfig, seed: u64) -> Result<TrainedRun> {
    let dir = cfg.seed_dir(seed);
    let model = load_params(&dir.join("best.ckpt"), Some(cfg.model.kind))?;
    let datastore = if needs_datastore(cfg) {
        Some(load_datastore(&dir.join("datastore.sqd"))?)
    } else {
        None
    };
    Ok(TrainedRun {
        seed,
        model,
        datastore,
        dir,
    })
}

pub fn cmd_train(cfg: &RecipeConfig, exec: Exec) -> Result<Vec<TrainedRun>> {
    cfg.validate()?;
    let _lock = OutDirLock::acquire(&cfg.out)?;
    cfg.seeds.iter().map(|&s| train_seed(cfg, s, exec)).collect()
}

/// (truth, prediction) pairs for the test split of corpus `test`.
pub fn infer_test(
    cfg: &RecipeConfig,
    run: &TrainedRun,
    test: &str,
    mode: InferenceMode,
    exec: Exec,
) -> Result<Vec<EvalPair>> {
    let corpus = cfg.load_corpus(test)?;
    let samples = corpus.test();
    if samples.is_empty() {
        return Err(Error::Validation(format!("corpus `{test}` has an empty test split")));
    }
    let frontend = Frontend::new(cfg.frontend.clone())?;
    let mats = frontend.features_batch(samples, exec)?;
    // the true dataset is only usable when the model was trained on it
    let known = run.model.dataset_ids().iter().any(|d| d == test);
    if mode == InferenceMode::Parametric && run.model.kind() == ModelKind::AlignNet && !known {
        return Err(Error::Argument(format!(
            "parametric alignnet inference needs a trained dataset id; `{test}` was not trained on (use domain-retrieval)"
        )));
    }
    let ids: Vec<Option<String>> = vec![known.then(|| test.to_string()); samples.len()];
    let preds = predict_batch(mode, &run.model, run.datastore.as_ref(), &cfg.knn, &mats, &ids, exec)?;
    Ok(samples
        .iter()
        .zip(preds)
        .map(|(s, p)| EvalPair {
            sample_id: s.sample_id.clone(),
            system_id: s.system_id.clone(),
            truth: s.mos,
            pred: p,
        })
        .collect())
}

fn record_model_id(cfg: &RecipeConfig, mode: InferenceMode) -> String {
    match mode {
        InferenceMode::Parametric => cfg.model_name(),
        m => format!("{}+{m}", cfg.model_name()),
    }
}

/// Outcome of a benchmark: per-seed and seed-averaged report sets.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub per_seed: Vec<(u64, ReportSet)>,
    pub mean: ReportSet,
}

/// Trains (or reuses) one model per seed, evaluates every inference mode on
/// every test set, and writes `records.csv` per seed and averaged.
pub fn cmd_benchmark(cfg: &RecipeConfig, exec: Exec) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    if cfg.tests.is_empty() {
        return Err(Error::Validation("`tests` lists no corpus".into()));
    }
    let _lock = OutDirLock::acquire(&cfg.out)?;
    let mut tests = BTreeMap::new();
    for t in &cfg.tests {
        tests.insert(t.clone(), cfg.load_corpus(t)?.domain_tag);
    }
    let cells: Vec<(InferenceMode, String)> = cfg
        .inference
        .iter()
        .flat_map(|&m| cfg.tests.iter().map(move |t| (m, t.clone())))
        .collect();

    let mut per_seed = Vec::new();
    for &seed in &cfg.seeds {
        let run = if cfg.seed_dir(seed).join("best.ckpt").exists() {
            load_run(cfg, seed)?
        } else {
            train_seed(cfg, seed, exec)?
        };
        let reports = exec.try_map(&cells, |(mode, test)| -> Result<MetricReport> {
            evaluate(&infer_test(cfg, &run, test, *mode, Exec::Sequential)?)
        })?;
        let set = ReportSet {
            tests: tests.clone(),
            reports: cells
                .iter()
                .zip(reports)
                .map(|((m, t), r)| ((record_model_id(cfg, *m), t.clone()), r))
                .collect(),
        };
        write_file(&run.dir.join("records.csv"), &write_records(&set))?;
        per_seed.push((seed, set));
    }

    let mut mean = ReportSet {
        tests,
        reports: BTreeMap::new(),
    };
    for key in per_seed[0].1.reports.keys() {
        let runs = run_seeds(&cfg.seeds, Exec::Sequential, |s| {
            let set = &per_seed.iter().find(|(x, _)| *x == s).expect("seed present").1;
            Ok(set.reports[key].clone())
        })?;
        mean.reports.insert(key.clone(), runs.mean);
    }
    write_file(&cfg.out.join("records.csv"), &write_records(&mean))?;
    Ok(BenchmarkOutput { per_seed, mean })
}

/// Merges record files and computes the best-score matrix, writing
/// `difference.csv`, `ratio.csv`, `summary.csv` and `table.txt` to `out`.
pub fn cmd_aggregate(
    records: &[PathBuf],
    error_metric: MetricName,
    policy: &BestPolicy,
    out: &Path,
) -> Result<BenchMatrix> {
    if records.is_empty() {
        return Err(Error::Argument("no record files given".into()));
    }
    let mut merged = ReportSet::default();
    for p in records {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let set = parse_records(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: p.clone(),
                line,
                msg,
            },
            other => other,
        })?;
        for (t, d) in set.tests {
            if let Some(prev) = merged.tests.insert(t.clone(), d) {
                if prev != d {
                    return Err(Error::Validation(format!("test `{t}` has conflicting domains")));
                }
            }
        }
        for (k, r) in set.reports {
            if merged.reports.insert(k.clone(), r).is_some() {
                return Err(Error::Validation(format!("duplicate records for ({}, {})", k.0, k.1)));
            }
        }
    }
    let info: BTreeMap<String, TestInfo> = merged
        .tests
        .iter()
        .map(|(t, d)| (t.clone(), TestInfo::new(*d)))
        .collect();
    let m = aggregate(&merged.reports, &info, error_metric, policy)?;
    let _lock = OutDirLock::acquire(out)?;
    write_file(&out.join("difference.csv"), &m.grid_csv(|c| c.difference))?;
    write_file(&out.join("ratio.csv"), &m.grid_csv(|c| c.ratio))?;
    write_file(&out.join("summary.csv"), &m.summary_csv())?;
    write_file(&out.join("table.txt"), &m.render_table())?;
    Ok(m)
}

/// Embeds up to `export_per_set` train and test utterances of every
/// configured corpus and writes `embeddings_seed{seed}.csv`.
pub fn cmd_export_embeddings(cfg: &RecipeConfig, seed: u64, exec: Exec) -> Result<EmbeddingExport> {
    cfg.validate()?;
    let mut names: Vec<&String> = cfg.train_on.iter().chain(&cfg.tests).collect();
    names.sort();
    names.dedup();
    if names.is_empty() {
        return Err(Error::Validation("no corpora configured".into()));
    }
    let sets = names.iter().map(|n| cfg.load_corpus(n)).collect::<Result<Vec<_>>>()?;
    let frontend = Frontend::new(cfg.frontend.clone())?;
    let export = export_embeddings(&frontend, &sets, &[Split::Train, Split::Test], cfg.export_per_set, seed, exec)?;
    let _lock = OutDirLock::acquire(&cfg.out)?;
    write_file(&cfg.out.join(format!("embeddings_seed{seed}.csv")), &export.to_csv())?;
    Ok(export)
}

/// Per-utterance and per-system scatter data of one trained seed on one test set.
pub fn cmd_distribution_data(
    cfg: &RecipeConfig,
    seed: u64,
    test: &str,
    mode: InferenceMode,
    exec: Exec,
) -> Result<DistributionData> {
    cfg.validate()?;
    let run = load_run(cfg, seed)?;
    let data = distribution_data(&infer_test(cfg, &run, test, mode, exec)?)?;
    let _lock = OutDirLock::acquire(&cfg.out)?;
    let dir = cfg.out.join("distribution");
    let stem = format!("{test}_{mode}_seed{seed}");
    write_file(&dir.join(format!("{stem}_utt.csv")), &data.utterance_csv())?;
    write_file(&dir.join(format!("{stem}_sys.csv")), &data.system_csv())?;
    Ok(data)
}

/// Domain tag of a configured corpus without loading its samples' features.
pub fn corpus_domain(cfg: &RecipeConfig, name: &str) -> Result<DomainTag> {
    Ok(cfg.load_corpus(name)?.domain_tag)
}
