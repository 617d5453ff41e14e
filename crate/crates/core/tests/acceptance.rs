//! Acceptance checks. Runs as a plain binary so every check prints exactly
//! one PASS/FAIL line; exits non-zero if any check fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{s, Array2};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssqa_core::corpus::{generate_synthetic_corpus, pool, CorpusManifest, DomainTag, MosMap, SynthSpec};
use ssqa_core::frontend::{EmbeddingMatrix, Frontend, FrontendConfig};
use ssqa_core::inference::{
    domain_embedding_retrieval_predict, knn_predict, knn_query, Datastore, DistanceKind, KnnConfig,
};
use ssqa_core::metrics::{
    aggregate, average_ranks, evaluate, mse, pearson, spearman, BestPolicy, EvalPair, MetricName,
    MetricReport, TestInfo,
};
use ssqa_core::model::{load_params, Model, ModelConfig, ModelKind, Parameters};
use ssqa_core::recipe::{cmd_benchmark, parse_recipe, prepare};
use ssqa_core::training::{train, train_mdf, Example, TrainConfig, TrainingData};
use ssqa_core::{Error, Exec};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn elapsed_within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))?;
    Ok(t)
}

// ---------------------------------------------------------------- metrics

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite")
}

/// Pearson correlation from exact rational sums; `None` for zero variance.
fn pearson_oracle(x: &[BigRational], y: &[BigRational]) -> Option<f64> {
    let n = BigRational::from_integer(BigInt::from(x.len()));
    let mx = x.iter().fold(BigRational::zero(), |a, b| a + b) / &n;
    let my = y.iter().fold(BigRational::zero(), |a, b| a + b) / &n;
    let (mut sxy, mut sxx, mut syy) = (BigRational::zero(), BigRational::zero(), BigRational::zero());
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - &mx, b - &my);
        sxy += &da * &db;
        sxx += &da * &da;
        syy += &db * &db;
    }
    if sxx.is_zero() || syy.is_zero() {
        return None;
    }
    // r^2 is exact; one rounding to f64 then one sqrt
    let r2 = (&sxy * &sxy) / (sxx * syy);
    let r = r2.to_f64()?.sqrt();
    Some(if sxy.is_negative() { -r } else { r })
}

/// Average ranks by counting, as exact rationals.
fn ranks_oracle(x: &[f64]) -> Vec<BigRational> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count();
            let equal = x.iter().filter(|&&w| w == v).count();
            BigRational::new(BigInt::from(2 * less + equal + 1), BigInt::from(2))
        })
        .collect()
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, tied: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if tied {
                f64::from(rng.random_range(1..=5))
            } else {
                rng.random_range(-10.0..10.0)
            }
        })
        .collect()
}

fn check_metric_oracles() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_p, mut worst_s, mut tied_cases, mut undefined) = (0.0f64, 0.0f64, 0, 0);
    for case in 0..1000 {
        let n = rng.random_range(2..=50);
        let tied = rng.random_bool(0.2);
        tied_cases += usize::from(tied);
        let x = random_vector(&mut rng, n, tied);
        let y = random_vector(&mut rng, n, tied);

        let xr: Vec<_> = x.iter().map(|&v| exact(v)).collect();
        let yr: Vec<_> = y.iter().map(|&v| exact(v)).collect();
        match (pearson_oracle(&xr, &yr), pearson(&x, &y)) {
            (Some(o), Ok(r)) => worst_p = worst_p.max((o - r).abs()),
            (None, Err(Error::UndefinedCorrelation(_))) => undefined += 1,
            (o, r) => return Err(format!("case {case}: pearson oracle {o:?} vs {r:?}")),
        }

        let (rx, ry) = (ranks_oracle(&x), ranks_oracle(&y));
        for (v, oracle) in [(&x, &rx), (&y, &ry)] {
            let got: Vec<BigRational> = average_ranks(v).iter().map(|&r| exact(r)).collect();
            ensure(&got == oracle, || format!("case {case}: ranks differ from the counting oracle"))?;
        }
        match (pearson_oracle(&rx, &ry), spearman(&x, &y)) {
            (Some(o), Ok(r)) => worst_s = worst_s.max((o - r).abs()),
            (None, Err(Error::UndefinedCorrelation(_))) => {}
            (o, r) => return Err(format!("case {case}: spearman oracle {o:?} vs {r:?}")),
        }
    }
    ensure(worst_p <= 1e-12, || format!("pearson max error {worst_p:e}"))?;
    ensure(worst_s <= 1e-12, || format!("spearman max error {worst_s:e}"))?;
    let t = elapsed_within(start, Duration::from_secs(10))?;
    Ok(format!(
        "1000 vectors ({tied_cases} tied, {undefined} zero-variance), max |err| pearson {worst_p:.1e} spearman {worst_s:.1e}, {t:.2?}"
    ))
}

// ---------------------------------------------------------------- gradients

fn random_matrix(rng: &mut ChaCha8Rng, t: usize, d: usize) -> EmbeddingMatrix {
    EmbeddingMatrix::new(Array2::from_shape_simple_fn((t, d), || rng.random_range(-1.0..1.0)), 50.0).unwrap()
}

/// Smallest |pre-activation| over both ReLU layers.
fn relu_margin(model: &Model, x: &Array2<f64>, dataset: usize) -> f64 {
    let min_abs = |a: &Array2<f64>| a.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    match model {
        Model::Head(p) => min_abs(&(x.dot(&p.w1) + &p.b1)),
        Model::AlignNet(p) => {
            let z = x.dot(&p.w1) + &p.b1;
            let h = z.mapv(|v| v.max(0.0));
            let hd = p.w1.ncols();
            let q = h.dot(&p.v1.slice(s![..hd, ..])) + &(p.table.row(dataset).dot(&p.v1.slice(s![hd.., ..])) + &p.c1);
            min_abs(&z).min(min_abs(&q))
        }
    }
}

fn gradient_draws(kind: ModelKind, rng: &mut ChaCha8Rng) -> Result<(f64, usize, usize), String> {
    const H: f64 = 1e-4;
    let (mut worst, mut params_checked, mut redraws) = (0.0f64, 0, 0);
    let mut draws = 0;
    while draws < 100 {
        let d = rng.random_range(2..=6);
        let cfg = ModelConfig {
            kind,
            hidden: rng.random_range(2..=6),
            embed_dim: rng.random_range(1..=3),
            decoder_hidden: rng.random_range(2..=5),
        };
        let ids: Vec<String> = (0..rng.random_range(1..=3)).map(|i| format!("d{i}")).collect();
        let mut model = Model::init(&cfg, d, &ids, rng.random()).map_err(|e| e.to_string())?;
        for (_, g) in model.groups_mut() {
            g.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let t = rng.random_range(1..=5);
        let x = random_matrix(rng, t, d);
        let ds = rng.random_range(0..ids.len());
        // central differences are only valid away from ReLU kinks
        if relu_margin(&model, &x.data, ds) < 1e-3 {
            redraws += 1;
            continue;
        }
        draws += 1;

        let mut grad = model.zeros_like();
        model.backward(&x, ds, 1.0, &mut grad).map_err(|e| e.to_string())?;
        let analytic = grad.to_flat();
        let n = model.num_params();
        for i in 0..n {
            let f = |delta: f64| {
                let mut m = model.clone();
                let mut k = i;
                for (_, g) in m.groups_mut() {
                    if k < g.len() {
                        g[k] += delta;
                        break;
                    }
                    k -= g.len();
                }
                m.forward_index(&x, ds).unwrap().raw
            };
            let numeric = (f(H) - f(-H)) / (2.0 * H);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        params_checked += n;
    }
    Ok((worst, params_checked, redraws))
}

fn check_gradients() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut parts = Vec::new();
    for kind in [ModelKind::Head, ModelKind::AlignNet] {
        let (worst, n, redraws) = gradient_draws(kind, &mut rng)?;
        ensure(worst < 1e-4, || format!("{kind}: max relative error {worst:e}"))?;
        parts.push(format!("{kind} {n} params max rel err {worst:.1e} ({redraws} kink redraws)"));
    }
    let t = elapsed_within(start, Duration::from_secs(60))?;
    Ok(format!("100 draws each: {}, {t:.2?}", parts.join("; ")))
}

// ---------------------------------------------------------------- kNN

fn check_knn() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let (mut worst_sum, mut worst_limit, mut tied) = (0.0f64, 0.0f64, 0);
    for case in 0..1000 {
        let n = rng.random_range(1..=60);
        let d = rng.random_range(1..=8);
        let kind = if rng.random_bool(0.5) { DistanceKind::Euclidean } else { DistanceKind::Cosine };
        let records = (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                (v, rng.random_range(1.0..5.0), format!("d{}", i % 3))
            })
            .collect();
        let ds = Datastore::from_records(records, kind).map_err(|e| e.to_string())?;
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cfg = KnnConfig {
            k: rng.random_range(1..=n),
            temperature: 10f64.powf(rng.random_range(-2.0..2.0)),
            paper_literal: false,
        };
        let r = knn_query(&ds, &q, &cfg).map_err(|e| e.to_string())?;
        let lo = r.neighbors.iter().map(|x| x.score).fold(f64::INFINITY, f64::min);
        let hi = r.neighbors.iter().map(|x| x.score).fold(f64::NEG_INFINITY, f64::max);
        ensure(r.score >= lo - 1e-12 && r.score <= hi + 1e-12, || {
            format!("case {case}: score {} outside [{lo}, {hi}]", r.score)
        })?;
        worst_sum = worst_sum.max((r.weights.iter().sum::<f64>() - 1.0).abs());

        let cold = knn_predict(&ds, &q, &KnnConfig { temperature: 1e-6, ..cfg.clone() }).map_err(|e| e.to_string())?;
        let nearest = knn_predict(&ds, &q, &KnnConfig { k: 1, ..cfg }).map_err(|e| e.to_string())?;
        // the T -> 0 limit averages over ties, so it equals the 1-NN score
        // only when the nearest neighbor is unique
        let top = ds.nearest(&q, 2.min(n)).map_err(|e| e.to_string())?;
        if top.len() == 2 && top[1].distance - top[0].distance < 1e-4 {
            tied += 1;
            continue;
        }
        worst_limit = worst_limit.max((cold - nearest).abs());
    }
    ensure(worst_sum <= 1e-9, || format!("weights sum off by {worst_sum:e}"))?;
    ensure(worst_limit <= 1e-6, || format!("T=1e-6 vs k=1 differ by {worst_limit:e}"))?;
    Ok(format!(
        "1000 datastores: scores within neighbor range, max |sum w - 1| {worst_sum:.1e}, max |T->0 - 1NN| {worst_limit:.1e} ({tied} with a tied nearest distance excluded from the limit)"
    ))
}

// ---------------------------------------------------------------- best score algebra

fn report(mse: f64, corr_metric: MetricName, corr: f64) -> MetricReport {
    let mut r = MetricReport::default();
    r.set(MetricName::UttMse, Some(mse));
    r.set(corr_metric, Some(corr));
    r
}

fn check_best_score_algebra() -> Check {
    // random families: best cells are exactly 0 / 100
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..200 {
        let n_models = rng.random_range(2..=5);
        let n_tests = rng.random_range(1..=6);
        let mut tests = BTreeMap::new();
        let mut reports = BTreeMap::new();
        for t in 0..n_tests {
            let domain = if rng.random_bool(0.5) { DomainTag::Synthetic } else { DomainTag::NonSynthetic };
            let info = TestInfo::new(domain);
            for m in 0..n_models {
                let r = report(rng.random_range(0.05..2.0), info.ratio_metric, rng.random_range(0.05..0.99));
                reports.insert((format!("m{m}"), format!("t{t}")), r);
            }
            tests.insert(format!("t{t}"), info);
        }
        let mat = aggregate(&reports, &tests, MetricName::UttMse, &BestPolicy::WithinFamily).map_err(|e| e.to_string())?;
        for t in &mat.tests {
            let col: Vec<_> = mat.models.iter().map(|m| &mat.cells[&(m.clone(), t.clone())]).collect();
            let min_diff = col.iter().filter_map(|c| c.difference).fold(f64::INFINITY, f64::min);
            let max_ratio = col.iter().filter_map(|c| c.ratio).fold(f64::NEG_INFINITY, f64::max);
            ensure(min_diff == 0.0 && max_ratio == 100.0, || {
                format!("trial {trial} test {t}: min difference {min_diff}, max ratio {max_ratio}")
            })?;
        }
    }

    // 3 models x 2 tests, expected values worked out by hand
    let lcc = MetricName::UttLcc;
    let srcc = MetricName::SysSrcc;
    let reports: BTreeMap<_, _> = [
        (("A", "nat"), report(0.5, lcc, 0.5)),
        (("B", "nat"), report(0.75, lcc, 0.25)),
        (("C", "nat"), report(1.25, lcc, 0.375)),
        (("A", "tts"), report(1.0, srcc, 0.5)),
        (("B", "tts"), report(0.5, srcc, 1.0)),
        (("C", "tts"), report(2.0, srcc, 0.25)),
    ]
    .into_iter()
    .map(|((m, t), r)| ((m.to_string(), t.to_string()), r))
    .collect();
    let tests = BTreeMap::from([
        ("nat".to_string(), TestInfo::new(DomainTag::NonSynthetic)),
        ("tts".to_string(), TestInfo::new(DomainTag::Synthetic)),
    ]);
    let mat = aggregate(&reports, &tests, MetricName::UttMse, &BestPolicy::WithinFamily).map_err(|e| e.to_string())?;
    let expected_cells = [
        ("A", "nat", 0.0, 100.0),
        ("B", "nat", 0.25, 50.0),
        ("C", "nat", 0.75, 75.0),
        ("A", "tts", 0.5, 50.0),
        ("B", "tts", 0.0, 100.0),
        ("C", "tts", 1.5, 25.0),
    ];
    for (m, t, diff, ratio) in expected_cells {
        let c = &mat.cells[&(m.to_string(), t.to_string())];
        ensure(c.difference == Some(diff) && c.ratio == Some(ratio), || {
            format!("cell ({m}, {t}): got {:?} / {:?}, expected {diff} / {ratio}", c.difference, c.ratio)
        })?;
    }
    let expected_means = [("A", 0.25, 75.0), ("B", 0.125, 75.0), ("C", 1.125, 50.0)];
    for (m, diff, ratio) in expected_means {
        let s = mat.summary(m, None).ok_or_else(|| format!("no summary for {m}"))?;
        ensure(s.mean_difference == Some(diff) && s.mean_ratio == Some(ratio), || {
            format!("summary {m}: {:?} / {:?}", s.mean_difference, s.mean_ratio)
        })?;
    }
    let s = mat.summary("C", Some(DomainTag::Synthetic)).ok_or("no per-domain summary")?;
    ensure(s.mean_difference == Some(1.5) && s.mean_ratio == Some(25.0), || format!("per-domain C: {s:?}"))?;
    Ok("200 random families hit 0 / 100% exactly; 3x2 hand-worked matrix matches cell by cell".into())
}

// ---------------------------------------------------------------- end to end

fn utterance_pairs(examples: &[Example], preds: &[f64]) -> Vec<EvalPair> {
    examples
        .iter()
        .zip(preds)
        .map(|(e, &p)| EvalPair {
            sample_id: e.sample_id.clone(),
            system_id: e.system_id.clone(),
            truth: e.target,
            pred: p,
        })
        .collect()
}

fn held_out(corpus: &CorpusManifest, fe: &Frontend) -> Result<Vec<Example>, String> {
    let mats = fe.features_batch(corpus.test(), Exec::default()).map_err(|e| e.to_string())?;
    Ok(corpus
        .test()
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

fn check_synthetic_end_to_end(work: &Path) -> Check {
    let start = Instant::now();
    let spec = SynthSpec::new("tones");
    let corpus = generate_synthetic_corpus(&spec, work, 11).map_err(|e| e.to_string())?.manifest;
    let fe = Frontend::new(FrontendConfig::default()).map_err(|e| e.to_string())?;
    let data = TrainingData::from_corpus(&corpus, &fe, Exec::default()).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { max_steps: 5000, seed: 1, ..Default::default() };
    let out = train(&ModelConfig::default(), &data, &cfg, None, Exec::default()).map_err(|e| e.to_string())?;
    let test = held_out(&corpus, &fe)?;
    let preds: Vec<f64> = test.iter().map(|e| out.best.forward(&e.mat, None).unwrap().clipped).collect();
    let truth: Vec<f64> = test.iter().map(|e| e.target).collect();
    let lcc = pearson(&truth, &preds).map_err(|e| e.to_string())?;
    ensure(lcc >= 0.9, || format!("held-out utterance LCC {lcc:.4} < 0.9"))?;
    let t = elapsed_within(start, Duration::from_secs(300))?;
    Ok(format!(
        "held-out utterance LCC {lcc:.4} after {} steps (early stop: {}), {t:.1?}",
        out.steps_run, out.stopped_early
    ))
}

fn offset_corpora(work: &Path) -> Result<Vec<CorpusManifest>, String> {
    // each listening test has its own recording condition (tone band) and score offset
    let specs = [("neg", -0.5, (200.0, 350.0)), ("zero", 0.0, (450.0, 600.0)), ("pos", 0.5, (700.0, 850.0))];
    specs
        .iter()
        .map(|&(name, delta, band)| {
            let mut s = SynthSpec::new(name);
            s.delta = delta;
            s.tone_hz = band;
            s.max_duration_s = 2.0;
            generate_synthetic_corpus(&s, work, 0).map(|c| c.manifest).map_err(|e| e.to_string())
        })
        .collect()
}

fn check_corpus_effect(work: &Path) -> Check {
    let start = Instant::now();
    let corpora = offset_corpora(work)?;
    let pooled = pool(&corpora).map_err(|e| e.to_string())?;
    let fe = Frontend::new(FrontendConfig::default()).map_err(|e| e.to_string())?;
    let data = TrainingData::from_pooled(&pooled, &fe, Exec::default()).map_err(|e| e.to_string())?;
    let ds = Datastore::build(&fe, &pooled.train(), DistanceKind::Euclidean, Exec::default()).map_err(|e| e.to_string())?;
    let dev: Vec<Example> = data.dev.iter().filter(|e| e.dataset != "zero").cloned().collect();
    let truth: Vec<f64> = dev.iter().map(|e| e.target).collect();

    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in [1u64, 2, 3] {
        let cfg = TrainConfig { max_steps: 2000, seed, ..Default::default() };
        let head = train(&ModelConfig::default(), &data, &cfg, None, Exec::default()).map_err(|e| e.to_string())?;
        let an_cfg = ModelConfig { kind: ModelKind::AlignNet, ..Default::default() };
        let align = train(&an_cfg, &data, &cfg, None, Exec::default()).map_err(|e| e.to_string())?;
        let ph: Vec<f64> = dev.iter().map(|e| head.best.forward(&e.mat, None).unwrap().clipped).collect();
        let pa = dev
            .iter()
            .map(|e| domain_embedding_retrieval_predict(&align.best, &ds, &e.mat).map(|r| r.0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let (mh, ma) = (mse(&truth, &ph).unwrap(), mse(&truth, &pa).unwrap());
        wins += usize::from(ma <= mh);
        lines.push(format!("seed {seed}: alignnet {ma:.4} vs pooled head {mh:.4}"));
    }
    let summary = format!("{} ({wins}/3 seeds, {:.1?})", lines.join("; "), start.elapsed());
    ensure(wins >= 2, || format!("dev MSE on offset corpora: {summary}"))?;
    Ok(format!("dev MSE on offset corpora: {summary}"))
}

fn check_mdf_contract(work: &Path) -> Check {
    let fe = Frontend::new(FrontendConfig::default()).map_err(|e| e.to_string())?;
    let corpora: Vec<CorpusManifest> = [("pre", 0.0), ("other", 0.3)]
        .iter()
        .map(|&(name, delta)| {
            let mut s = SynthSpec::new(name);
            (s.n_train, s.n_dev, s.n_test, s.max_duration_s, s.delta) = (40, 12, 4, 1.0, delta);
            generate_synthetic_corpus(&s, work, 3).map(|c| c.manifest).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let data = TrainingData::from_pooled(&pool(&corpora).map_err(|e| e.to_string())?, &fe, Exec::default())
        .map_err(|e| e.to_string())?;
    let mut kinds = Vec::new();
    for kind in [ModelKind::Head, ModelKind::AlignNet] {
        let mc = ModelConfig { kind, hidden: 16, ..Default::default() };
        let phase1 = TrainConfig { max_steps: 120, eval_interval: 20, seed: 4, ..Default::default() };
        let phase2 = TrainConfig { max_steps: 60, eval_interval: 20, seed: 4, ..Default::default() };
        let dir = work.join(format!("mdf_{kind}"));
        let out = train_mdf(&mc, "pre", &data, &phase1, &phase2, Some(&dir), Exec::default()).map_err(|e| e.to_string())?;
        let p1 = &out.pretrain.best;
        let bits = |m: &Model| m.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(bits(&out.finetune.initial) == bits(p1), || format!("{kind}: phase-2 start differs from phase-1 best"))?;
        let on_disk = load_params(&dir.join("pretrain/best.ckpt"), Some(kind)).map_err(|e| e.to_string())?;
        ensure(bits(&on_disk) == bits(p1), || format!("{kind}: phase-1 checkpoint file differs"))?;
        ensure(!out.pretrain.ledger.is_empty(), || format!("{kind}: phase 1 kept no checkpoint"))?;

        let zero = TrainConfig { max_steps: 0, ..phase2 };
        let out0 = train_mdf(&mc, "pre", &data, &phase1, &zero, None, Exec::default()).map_err(|e| e.to_string())?;
        ensure(bits(out0.best()) == bits(&out0.pretrain.best) && bits(out0.best()) == bits(p1), || {
            format!("{kind}: zero-step phase 2 did not return the phase-1 model")
        })?;
        kinds.push(format!("{kind} {:016x}", p1.fingerprint()));
    }
    let missing = train_mdf(&ModelConfig::default(), "absent", &data, &TrainConfig::default(), &TrainConfig::default(), None, Exec::default());
    ensure(matches!(missing, Err(Error::Argument(_))), || "unknown pre-training corpus not rejected".into())?;
    Ok(format!("phase-2 start == phase-1 best bit for bit ({}); zero-step phase 2 returns phase 1", kinds.join(", ")))
}

const BENCH_RECIPE: &str = "\
seeds = 1,2
synth.a.n_train = 40
synth.a.n_dev = 12
synth.a.n_test = 16
synth.a.max_duration_s = 1.0
synth.a.tone_hi_hz = 400
synth.b.n_train = 40
synth.b.n_dev = 12
synth.b.n_test = 16
synth.b.max_duration_s = 1.0
synth.b.tone_lo_hz = 600
synth.b.delta = 0.5
synth.b.domain = synthetic
train_on = a,b
tests = a,b
model = alignnet
hidden = 16
inference = parametric,knn,domain-retrieval
max_steps = 150
eval_interval = 25
";

fn check_benchmark_determinism(work: &Path) -> Check {
    let mut outputs = Vec::new();
    for (run, exec) in [("first", Exec::Parallel), ("second", Exec::Parallel), ("sequential", Exec::Sequential)] {
        let dir = work.join(run);
        fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let cfg = parse_recipe(BENCH_RECIPE, &dir).map_err(|e| e.to_string())?;
        prepare(&cfg).map_err(|e| e.to_string())?;
        cmd_benchmark(&cfg, exec).map_err(|e| e.to_string())?;
        let mut files = Vec::new();
        for rel in ["out/records.csv", "out/seed_1/records.csv", "out/seed_2/records.csv"] {
            files.push(fs::read(dir.join(rel)).map_err(|e| format!("{rel}: {e}"))?);
        }
        outputs.push(files);
    }
    ensure(outputs[0] == outputs[1], || "two identical runs wrote different records".into())?;
    ensure(outputs[0] == outputs[2], || "sequential and parallel runs wrote different records".into())?;
    let lines = String::from_utf8_lossy(&outputs[0][0]).lines().count();
    Ok(format!("records byte-identical across 2 runs and sequential/parallel execution ({lines} lines)"))
}

fn check_miscalibration_pattern(work: &Path) -> Check {
    let mut spec = SynthSpec::new("wide");
    spec.snr_grid_db = vec![-4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0];
    spec.mos_map = MosMap::spanning(&spec.snr_grid_db, 1.0, 5.0);
    spec.max_duration_s = 1.5;
    spec.n_test = 80;
    let corpus = generate_synthetic_corpus(&spec, work, 8).map_err(|e| e.to_string())?.manifest;
    let fe = Frontend::new(FrontendConfig::default()).map_err(|e| e.to_string())?;
    let data = TrainingData::from_corpus(&corpus, &fe, Exec::default()).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { max_steps: 1000, seed: 2, ..Default::default() };
    let model = train(&ModelConfig::default(), &data, &cfg, None, Exec::default()).map_err(|e| e.to_string())?.best;

    let test = held_out(&corpus, &fe)?;
    let (lo, hi) = test.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), e| (l.min(e.target), h.max(e.target)));
    ensure(lo <= 1.5 && hi >= 4.5, || format!("test scores span only [{lo}, {hi}]"))?;
    // squash a working predictor into [4, 5]: ordering kept, calibration lost
    let preds: Vec<f64> = test
        .iter()
        .map(|e| 4.0 + (model.forward(&e.mat, None).unwrap().clipped - 1.0) / 4.0)
        .collect();
    ensure(preds.iter().all(|p| (4.0..=5.0).contains(p)), || "prediction left [4, 5]".into())?;
    let r = evaluate(&utterance_pairs(&test, &preds)).map_err(|e| e.to_string())?;
    let (m, srcc) = (r.utt_mse.unwrap(), r.sys_srcc.unwrap_or(f64::NAN));
    ensure(m > 1.0 && srcc > 0.6, || format!("utt MSE {m:.3}, sys SRCC {srcc:.3}"))?;
    Ok(format!("outputs in [4, 5] on truths in [{lo:.2}, {hi:.2}]: utt MSE {m:.3} > 1.0 with sys SRCC {srcc:.3} > 0.6"))
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let sub = |name: &str| {
        let p = work.path().join(name);
        fs::create_dir_all(&p).unwrap();
        p
    };
    let checks: Vec<(&str, Box<dyn FnOnce() -> Check>)> = vec![
        ("metric oracles", Box::new(check_metric_oracles)),
        ("gradient checks", Box::new(check_gradients)),
        ("knn properties", Box::new(check_knn)),
        ("best-score algebra", Box::new(check_best_score_algebra)),
        ("synthetic end-to-end", Box::new({ let d = sub("e2e"); move || check_synthetic_end_to_end(&d) })),
        ("corpus effect", Box::new({ let d = sub("effect"); move || check_corpus_effect(&d) })),
        ("mdf contract", Box::new({ let d = sub("mdf"); move || check_mdf_contract(&d) })),
        ("benchmark determinism", Box::new({ let d = sub("bench"); move || check_benchmark_determinism(&d) })),
        ("miscalibration pattern", Box::new({ let d = sub("miscal"); move || check_miscalibration_pattern(&d) })),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().map(String::as_str).or(p.downcast_ref::<&str>().copied()))));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
