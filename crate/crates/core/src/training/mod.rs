//! Minibatch SGD with momentum, dev-set model selection and early stopping.

mod ledger;
mod mdf;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusManifest, DomainTag, PooledCorpus, Sample};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frontend::{pad_frames_repetitive, EmbeddingMatrix, Frontend};
use crate::metrics::{pearson, spearman, system_aggregate, EvalPair};
use crate::model::{save_params, Model, ModelConfig, Parameters};
use crate::seed::{stream_rng, STREAM_SHUFFLE};

pub use ledger::{CheckpointLedger, LedgerEntry, Offer};
pub use mdf::{run_seeds, train_mdf, MdfOutcome, SeedRuns};

/// Dev-set criterion used to rank checkpoints (higher is better).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selection {
    SysSrcc,
    UttLcc,
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sys_srcc" => Ok(Selection::SysSrcc),
            "utt_lcc" => Ok(Selection::UttLcc),
            other => Err(Error::Argument(format!("unknown selection criterion `{other}`"))),
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::SysSrcc => "sys_srcc",
            Selection::UttLcc => "utt_lcc",
        })
    }
}

/// Selection criterion for a corpus domain; `None` stands for a pooled,
/// mixed-domain training set.
pub fn select_criterion(domain: Option<DomainTag>) -> Selection {
    match domain {
        Some(DomainTag::Synthetic) => Selection::SysSrcc,
        Some(DomainTag::NonSynthetic) | None => Selection::UttLcc,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub max_steps: u64,
    pub patience_steps: u64,
    pub top_k: usize,
    /// Errors with magnitude at most `loss_tau` contribute no loss.
    pub loss_tau: f64,
    /// `None` picks the criterion from the training data's domain.
    pub selection: Option<Selection>,
    pub eval_interval: u64,
    /// Tile every item of a batch to the longest one before the forward pass.
    pub repetitive_padding: bool,
    /// Return the mean of the kept checkpoints instead of the single best.
    pub average_checkpoints: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            lr: 0.001,
            momentum: 0.9,
            max_steps: 100_000,
            patience_steps: 2000,
            top_k: 5,
            loss_tau: 0.25,
            selection: None,
            eval_interval: 250,
            repetitive_padding: false,
            average_checkpoints: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(format!("train config: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.top_k == 0 || self.eval_interval == 0 || self.patience_steps == 0 {
            return bad("top_k, eval_interval and patience_steps must be positive");
        }
        if !(self.loss_tau >= 0.0) {
            return bad("loss_tau must be >= 0");
        }
        Ok(())
    }

    /// Applies one `key = value` setting from a run config file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Validation(format!("`{key}`: `{v}` is not a number")))
        };
        let int = |v: &str| -> Result<u64> {
            v.parse().map_err(|_| Error::Validation(format!("`{key}`: `{v}` is not an integer")))
        };
        let boolean = |v: &str| -> Result<bool> {
            v.parse().map_err(|_| Error::Validation(format!("`{key}`: `{v}` is not true/false")))
        };
        match key {
            "batch_size" => self.batch_size = int(value)? as usize,
            "lr" => self.lr = num(value)?,
            "momentum" => self.momentum = num(value)?,
            "max_steps" => self.max_steps = int(value)?,
            "patience_steps" => self.patience_steps = int(value)?,
            "top_k" => self.top_k = int(value)? as usize,
            "loss_tau" => self.loss_tau = num(value)?,
            "selection" => {
                self.selection = match value {
                    "auto" => None,
                    v => Some(v.parse()?),
                }
            }
            "eval_interval" => self.eval_interval = int(value)?,
            "repetitive_padding" => self.repetitive_padding = boolean(value)?,
            "average_checkpoints" => self.average_checkpoints = boolean(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Clipped MSE: `mean_i [|p_i - t_i| > tau] (p_i - t_i)^2`.
///
/// Returns the loss and its gradient with respect to the predictions.
pub fn clipped_mse(preds: &[f64], targets: &[f64], tau: f64) -> Result<(f64, Vec<f64>)> {
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!("{} predictions vs {} targets", preds.len(), targets.len())));
    }
    if preds.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let n = preds.len() as f64;
    let mut loss = 0.0;
    let grad = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let d = p - t;
            if d.abs() > tau {
                loss += d * d;
                2.0 * d / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss / n, grad))
}

/// A featurized, scored utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub sample_id: String,
    pub system_id: Option<String>,
    pub dataset: String,
    pub target: f64,
    pub mat: EmbeddingMatrix,
}

fn examples(samples: &[Sample], frontend: &Frontend, exec: Exec) -> Result<Vec<Example>> {
    let mats = frontend.features_batch(samples, exec)?;
    Ok(samples
        .iter()
        .zip(mats)
        .map(|(s, mat)| Example {
            sample_id: s.sample_id.clone(),
            system_id: s.system_id.clone(),
            dataset: s.dataset_id.clone(),
            target: s.mos,
            mat,
        })
        .collect())
}

/// Featurized train and dev sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub name: String,
    /// `None` for pooled data spanning several corpora.
    pub domain: Option<DomainTag>,
    pub datasets: Vec<String>,
    pub domains: Vec<DomainTag>,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
}

impl TrainingData {
    pub fn from_corpus(corpus: &CorpusManifest, frontend: &Frontend, exec: Exec) -> Result<Self> {
        Ok(TrainingData {
            name: corpus.name.clone(),
            domain: Some(corpus.domain_tag),
            datasets: vec![corpus.name.clone()],
            domains: vec![corpus.domain_tag],
            train: examples(corpus.train(), frontend, exec)?,
            dev: examples(corpus.dev(), frontend, exec)?,
        })
    }

    pub fn from_pooled(pooled: &PooledCorpus, frontend: &Frontend, exec: Exec) -> Result<Self> {
        Ok(TrainingData {
            name: "pooled".into(),
            domain: None,
            datasets: pooled.dataset_names(),
            domains: pooled.members.iter().map(|m| m.domain_tag).collect(),
            train: examples(&pooled.train(), frontend, exec)?,
            dev: examples(&pooled.dev(), frontend, exec)?,
        })
    }

    /// The part of pooled data coming from one member corpus.
    pub fn restrict(&self, dataset: &str) -> Result<Self> {
        let pos = self
            .datasets
            .iter()
            .position(|d| d == dataset)
            .ok_or_else(|| Error::Argument(format!("`{dataset}` is not part of `{}`", self.name)))?;
        let keep = |v: &[Example]| v.iter().filter(|e| e.dataset == dataset).cloned().collect();
        Ok(TrainingData {
            name: dataset.to_string(),
            domain: Some(self.domains[pos]),
            datasets: vec![dataset.to_string()],
            domains: vec![self.domains[pos]],
            train: keep(&self.train),
            dev: keep(&self.dev),
        })
    }

    pub fn selection(&self, config: &TrainConfig) -> Selection {
        config.selection.unwrap_or_else(|| select_criterion(self.domain))
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    /// Mean minibatch loss since the previous record.
    pub train_loss: f64,
    pub criterion: Selection,
    pub dev_value: Option<f64>,
    pub inserted: bool,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step={} train_loss={} dev_{}=", self.step, self.train_loss, self.criterion)?;
        match self.dev_value {
            Some(v) => write!(f, "{v}")?,
            None => f.write_str("undefined")?,
        }
        write!(f, " kept={}", self.inserted)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best checkpoint (or the average of the kept ones when configured);
    /// the initial parameters when no evaluation happened.
    pub best: Model,
    pub initial: Model,
    pub ledger: CheckpointLedger,
    pub log: Vec<LogRecord>,
    pub steps_run: u64,
    pub stopped_early: bool,
}

/// Dev-set criterion for `model`; `None` when the correlation is undefined.
pub fn dev_criterion(model: &Model, dev: &[Example], selection: Selection, exec: Exec) -> Result<Option<f64>> {
    let preds = exec.try_map(dev, |e| -> Result<f64> {
        Ok(model.forward(&e.mat, Some(e.dataset.as_str()))?.clipped)
    })?;
    let pairs: Vec<EvalPair> = dev
        .iter()
        .zip(&preds)
        .map(|(e, &p)| EvalPair {
            sample_id: e.sample_id.clone(),
            system_id: e.system_id.clone(),
            truth: e.target,
            pred: p,
        })
        .collect();
    let value = match selection {
        Selection::UttLcc => {
            let t: Vec<f64> = pairs.iter().map(|p| p.truth).collect();
            pearson(&t, &preds)
        }
        Selection::SysSrcc => {
            let sys = system_aggregate(&pairs)?;
            let t: Vec<f64> = sys.iter().map(|p| p.truth).collect();
            let p: Vec<f64> = sys.iter().map(|p| p.pred).collect();
            spearman(&t, &p)
        }
    };
    match value {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchCursor {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, STREAM_SHUFFLE);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        BatchCursor { order, pos: 0, rng }
    }

    /// Next minibatch; the last one of an epoch may be smaller.
    fn next(&mut self, size: usize) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

/// Batch loss and summed parameter gradient at `params`.
pub fn batch_gradient(
    params: &Model,
    items: &[&Example],
    tau: f64,
    repetitive_padding: bool,
    exec: Exec,
) -> Result<(f64, Model)> {
    let padded;
    let mats: Vec<&EmbeddingMatrix> = if repetitive_padding {
        let owned: Vec<EmbeddingMatrix> = items.iter().map(|e| e.mat.clone()).collect();
        padded = pad_frames_repetitive(&owned).0;
        padded.iter().collect()
    } else {
        items.iter().map(|e| &e.mat).collect()
    };
    let idx: Vec<usize> = (0..items.len()).collect();
    // d raw / d theta per item, computed independently and reduced in order
    let per_item = exec.try_map(&idx, |&i| -> Result<(f64, Model)> {
        let ds = params.dataset_index(Some(items[i].dataset.as_str()))?;
        let mut g = params.zeros_like();
        let raw = params.backward(mats[i], ds, 1.0, &mut g)?;
        Ok((raw, g))
    })?;
    let raws: Vec<f64> = per_item.iter().map(|(r, _)| *r).collect();
    let targets: Vec<f64> = items.iter().map(|e| e.target).collect();
    let (loss, dpred) = clipped_mse(&raws, &targets, tau)?;
    let mut grad = params.zeros_like();
    for ((_, g), d) in per_item.iter().zip(&dpred) {
        if *d != 0.0 {
            grad.add_scaled(g, *d);
        }
    }
    Ok((loss, grad))
}

/// Heavy-ball update: `v <- momentum * v + g`, `p <- p - lr * v`.
pub fn sgd_momentum_step(params: &mut Model, velocity: &mut Model, grad: &Model, lr: f64, momentum: f64) {
    for (((_, p), (_, v)), (_, g)) in params
        .groups_mut()
        .into_iter()
        .zip(velocity.groups_mut())
        .zip(grad.groups())
    {
        for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = momentum * *vi + gi;
            *pi -= lr * *vi;
        }
    }
}

fn average_models(models: &[Model]) -> Model {
    let mut avg = models[0].zeros_like();
    let w = 1.0 / models.len() as f64;
    for m in models {
        avg.add_scaled(m, w);
    }
    avg
}

/// Trains `initial` on `data`. With `checkpoint_dir`, kept checkpoints are
/// written there (evicted ones deleted) together with `best.ckpt` and
/// `train.log`.
pub fn train_from(
    initial: Model,
    data: &TrainingData,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    exec: Exec,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Argument(format!("`{}` has an empty train split", data.name)));
    }
    if data.dev.is_empty() && config.max_steps > 0 {
        return Err(Error::Argument(format!("`{}` has an empty dev split", data.name)));
    }
    for e in data.train.iter().chain(&data.dev) {
        initial.dataset_index(Some(e.dataset.as_str()))?;
        if e.mat.dim() != initial.input_dim() {
            return Err(Error::Shape(format!(
                "sample `{}` has dim {}, model expects {}",
                e.sample_id,
                e.mat.dim(),
                initial.input_dim()
            )));
        }
    }
    if let Some(dir) = checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let selection = data.selection(config);

    let mut params = initial.clone();
    let mut velocity = params.zeros_like();
    let mut ledger = CheckpointLedger::new(config.top_k);
    let mut kept: Vec<Model> = Vec::new();
    let mut log = Vec::new();
    let mut cursor = BatchCursor::new(data.train.len(), config.seed);
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    let mut steps_run = 0;
    let mut stopped_early = false;

    for step in 1..=config.max_steps {
        let batch: Vec<&Example> = cursor
            .next(config.batch_size)
            .into_iter()
            .map(|i| &data.train[i])
            .collect();
        let (loss, grad) = batch_gradient(&params, &batch, config.loss_tau, config.repetitive_padding, exec)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::NonFinite {
                step,
                msg: format!("loss {loss}, lr {}, batch of {}", config.lr, batch.len()),
            });
        }
        sgd_momentum_step(&mut params, &mut velocity, &grad, config.lr, config.momentum);
        loss_sum += loss;
        loss_n += 1;
        steps_run = step;

        if step % config.eval_interval == 0 || step == config.max_steps {
            let value = dev_criterion(&params, &data.dev, selection, exec)?;
            let mut inserted = false;
            if let Some(v) = value {
                if let Offer::Inserted { position, evicted } = ledger.offer(step, v, None) {
                    inserted = true;
                    kept.insert(position, params.clone());
                    if kept.len() > ledger.len() {
                        kept.pop();
                    }
                    if let Some(dir) = checkpoint_dir {
                        let p = dir.join(format!("step_{step:07}.ckpt"));
                        save_params(&params, &p)?;
                        ledger.set_path(position, p);
                        if let Some(old) = evicted.and_then(|e| e.path) {
                            let _ = fs::remove_file(old);
                        }
                    }
                }
            }
            log.push(LogRecord {
                step,
                train_loss: loss_sum / loss_n as f64,
                criterion: selection,
                dev_value: value,
                inserted,
            });
            loss_sum = 0.0;
            loss_n = 0;
        }
        if step > ledger.last_improvement_step() + config.patience_steps {
            stopped_early = true;
            break;
        }
    }

    let best = if kept.is_empty() {
        initial.clone()
    } else if config.average_checkpoints {
        average_models(&kept)
    } else {
        kept[0].clone()
    };
    if let Some(dir) = checkpoint_dir {
        save_params(&best, &dir.join("best.ckpt"))?;
        let text: String = log.iter().map(|r| format!("{r}\n")).collect();
        let p = dir.join("train.log");
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(TrainOutcome {
        best,
        initial,
        ledger,
        log,
        steps_run,
        stopped_early,
    })
}

/// Initializes a model for `data` and trains it.
pub fn train(
    model: &ModelConfig,
    data: &TrainingData,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    exec: Exec,
) -> Result<TrainOutcome> {
    let dim = data
        .train
        .first()
        .map(|e| e.mat.dim())
        .ok_or_else(|| Error::Argument(format!("`{}` has an empty train split", data.name)))?;
    let initial = Model::init(model, dim, &data.datasets, config.seed)?;
    train_from(initial, data, config, checkpoint_dir, exec)
}

pub fn checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("best.ckpt")
}
