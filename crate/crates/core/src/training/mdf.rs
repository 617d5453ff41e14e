use std::path::Path;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::MetricReport;
use crate::model::{Model, ModelConfig};

use super::{train_from, TrainConfig, TrainOutcome, TrainingData};

#[derive(Debug, Clone)]
pub struct MdfOutcome {
    pub pretrain: TrainOutcome,
    pub finetune: TrainOutcome,
}

impl MdfOutcome {
    pub fn best(&self) -> &Model {
        &self.finetune.best
    }
}

/// Pre-trains on `pretrain_dataset` alone, then fine-tunes on the whole pooled
/// data starting from the best pre-training checkpoint.
///
/// The AlignNet dataset table covers every pooled member from the start so
/// that the phase-1 parameters carry over unchanged.
pub fn train_mdf(
    model: &ModelConfig,
    pretrain_dataset: &str,
    pooled: &TrainingData,
    pretrain_config: &TrainConfig,
    finetune_config: &TrainConfig,
    out_dir: Option<&Path>,
    exec: Exec,
) -> Result<MdfOutcome> {
    if !pooled.datasets.iter().any(|d| d == pretrain_dataset) {
        return Err(Error::Argument(format!(
            "pre-training corpus `{pretrain_dataset}` is not among the pooled corpora ({})",
            pooled.datasets.join(", ")
        )));
    }
    let single = pooled.restrict(pretrain_dataset)?;
    let dim = pooled
        .train
        .first()
        .map(|e| e.mat.dim())
        .ok_or_else(|| Error::Argument("pooled data has an empty train split".into()))?;
    let initial = Model::init(model, dim, &pooled.datasets, pretrain_config.seed)?;

    let dir1 = out_dir.map(|d| d.join("pretrain"));
    let pretrain = train_from(initial, &single, pretrain_config, dir1.as_deref(), exec)?;
    let dir2 = out_dir.map(|d| d.join("finetune"));
    let finetune = train_from(pretrain.best.clone(), pooled, finetune_config, dir2.as_deref(), exec)?;
    Ok(MdfOutcome { pretrain, finetune })
}

/// Reports from independent runs, one per seed, and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRuns {
    pub runs: Vec<(u64, MetricReport)>,
    pub mean: MetricReport,
}

/// Runs `run` once per seed (concurrently under `Exec::Parallel`) and
/// averages the reports.
pub fn run_seeds<F>(seeds: &[u64], exec: Exec, run: F) -> Result<SeedRuns>
where
    F: Fn(u64) -> Result<MetricReport> + Sync + Send,
{
    if seeds.is_empty() {
        return Err(Error::Argument("seed list is empty".into()));
    }
    let reports = exec.try_map(seeds, |&s| run(s))?;
    let mean = MetricReport::mean(&reports);
    Ok(SeedRuns {
        runs: seeds.iter().copied().zip(reports).collect(),
        mean,
    })
}
