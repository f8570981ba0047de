use super::{Adam, ExperimentConfig, OptimizerInfo, SelectionMetric, TrainError};
use crate::corpus::{DatasetSplit, SentenceRecord};
use crate::evaluation::{decompose_full_mtl, PredictionDump, PredictionRow};
use crate::labels::{TaskId, TaskMode};
use crate::modeling::{
    compute_loss, forward, loss_and_gradients, open_backend, pool, pool_backward, predict,
    Backend, Checkpoint, Gold, HeadGrads, HeadSet, HiddenBatch, Linear, LossBreakdown,
    PoolingStrategy,
};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 0 for the initial weights.
    pub epoch: usize,
    /// Mean batch loss during the epoch; full-pass loss for epoch 0.
    pub train_loss: f64,
    pub train_task_loss: BTreeMap<TaskId, f64>,
    /// Full pass over the training set after the epoch.
    pub train_accuracy: BTreeMap<TaskId, f64>,
    pub validation_loss: f64,
    pub validation_task_loss: BTreeMap<TaskId, f64>,
    pub validation_macro_f1: BTreeMap<TaskId, f64>,
    pub selection_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub config_fingerprint: String,
    pub selection_metric: SelectionMetric,
    pub optimizer: OptimizerInfo,
    /// `heads` when the backend is a frozen feature extractor.
    pub trainable_scope: String,
    pub pooling: PoolingStrategy,
    pub initial: EpochMetrics,
    pub epochs: Vec<EpochMetrics>,
    /// 1-based; 0 means the initial weights were kept.
    pub best_epoch: usize,
    pub optimizer_steps: usize,
    pub checkpoint: Option<String>,
    pub wall_time_secs: f64,
    pub truncation_count: usize,
}

impl RunRecord {
    pub fn best_metrics(&self) -> &EpochMetrics {
        match self.best_epoch {
            0 => &self.initial,
            e => &self.epochs[e - 1],
        }
    }

    pub fn best_score(&self) -> f64 {
        self.best_metrics().selection_score
    }
}

pub struct TrainOutcome {
    pub record: RunRecord,
    /// Heads of the best epoch.
    pub checkpoint: Checkpoint,
    pub validation: PredictionDump,
    pub test: PredictionDump,
}

/// Index (1-based) of the highest score, earliest on ties.
pub fn select_epoch(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i + 1)
}

/// Epoch whose validation metrics maximize `metric`, earliest on ties.
pub fn select_checkpoint(record: &RunRecord, metric: SelectionMetric) -> Result<usize, TrainError> {
    let mode = record.config.task;
    let scores = record
        .epochs
        .iter()
        .map(|e| {
            metric.score(mode, &e.validation_macro_f1).ok_or_else(|| {
                TrainError::Selection(format!("epoch {} lacks the tasks of {metric:?}", e.epoch))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    select_epoch(&scores).ok_or_else(|| TrainError::Selection("no evaluated epochs".into()))
}

pub fn train(config: &ExperimentConfig, split: &DatasetSplit) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let mut backend = open_backend(&config.backend_id, &config.adaptation)?;
    train_with_backend(config, split, backend.as_mut())
}

fn encode(
    backend: &dyn Backend,
    records: &[&SentenceRecord],
    pooling: PoolingStrategy,
) -> Result<(HiddenBatch, Array2<f64>, usize), TrainError> {
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let enc = backend.encode(&texts)?;
    let pooled = if texts.is_empty() {
        Array2::zeros((0, backend.handle().hidden_size))
    } else {
        pool(&enc.batch, pooling, backend.handle().family)?
    };
    Ok((enc.batch, pooled, enc.truncated))
}

fn encode_all(
    backend: &dyn Backend,
    records: &[SentenceRecord],
    pooling: PoolingStrategy,
) -> Result<(Array2<f64>, usize), TrainError> {
    let h = backend.handle().hidden_size;
    let mut out = Array2::zeros((records.len(), h));
    let mut truncated = 0;
    for (c, chunk) in records.chunks(64).enumerate() {
        let refs: Vec<&SentenceRecord> = chunk.iter().collect();
        let (_, pooled, t) = encode(backend, &refs, pooling)?;
        out.slice_mut(ndarray::s![c * 64..c * 64 + chunk.len(), ..]).assign(&pooled);
        truncated += t;
    }
    Ok((out, truncated))
}

fn gold_for(mode: TaskMode, records: &[&SentenceRecord]) -> Gold {
    mode.head_tasks()
        .into_iter()
        .map(|t| (t, records.iter().map(|r| r.class_index(t)).collect()))
        .collect()
}

fn dump_for(
    heads: &HeadSet,
    pooled: &Array2<f64>,
    records: &[SentenceRecord],
    split: &str,
    fingerprint: &str,
) -> Result<PredictionDump, TrainError> {
    let mode = heads.mode();
    let tasks = mode.head_tasks();
    let preds = predict(mode, &forward(heads, pooled)?)?;
    let rows = records
        .iter()
        .enumerate()
        .map(|(i, r)| PredictionRow {
            example_id: r.id.clone(),
            category: Some(r.category),
            gold: tasks
                .iter()
                .filter_map(|t| Some((*t, r.class_index(*t)?)))
                .collect(),
            pred: tasks.iter().map(|t| (*t, preds[t][i])).collect(),
        })
        .collect();
    Ok(PredictionDump {
        split: split.to_string(),
        config_fingerprint: fingerprint.to_string(),
        tasks,
        rows,
    })
}

/// Macro-F1 and accuracy per reported task, computed from the dump exactly as
/// the evaluation module would.
fn dump_scores(
    dump: &PredictionDump,
) -> Result<(BTreeMap<TaskId, f64>, BTreeMap<TaskId, f64>), TrainError> {
    let d = if dump.tasks.contains(&TaskId::Joint) {
        decompose_full_mtl(dump)?
    } else {
        dump.clone()
    };
    let mut f1 = BTreeMap::new();
    let mut acc = BTreeMap::new();
    for &t in &d.tasks {
        let (g, p) = d.labels(t)?;
        if g.is_empty() {
            continue;
        }
        f1.insert(t, d.macro_f1(t)?);
        let correct = g.iter().zip(&p).filter(|(a, b)| a == b).count();
        acc.insert(t, correct as f64 / g.len() as f64);
    }
    Ok((f1, acc))
}

fn set_loss(
    heads: &HeadSet,
    pooled: &Array2<f64>,
    records: &[SentenceRecord],
    config: &ExperimentConfig,
) -> Result<LossBreakdown, TrainError> {
    let refs: Vec<&SentenceRecord> = records.iter().collect();
    let logits = forward(heads, pooled)?;
    Ok(compute_loss(
        heads.mode(),
        &logits,
        &gold_for(heads.mode(), &refs),
        &config.loss_weights,
    )?)
}

fn add_scaled(acc: &mut HeadGrads, g: &HeadGrads, w: f64) {
    for (t, gl) in g {
        let e = acc
            .entry(*t)
            .or_insert_with(|| Linear::zeros(gl.weight.ncols(), gl.classes()));
        e.weight.scaled_add(w, &gl.weight);
        e.bias.scaled_add(w, &gl.bias);
    }
}

fn check_coverage(config: &ExperimentConfig, split: &DatasetSplit) -> Result<(), TrainError> {
    if split.train.is_empty() {
        return Err(TrainError::Data("training split is empty".into()));
    }
    if split.validation.is_empty() {
        return Err(TrainError::Data("validation split is empty".into()));
    }
    for t in config.task.head_tasks() {
        if !split.train.iter().any(|r| r.class_index(t).is_some()) {
            return Err(TrainError::Data(format!(
                "no training example carries a {t} label, required by {}",
                config.task
            )));
        }
        if !split.validation.iter().any(|r| r.class_index(t).is_some()) {
            return Err(TrainError::Data(format!("no validation example carries a {t} label")));
        }
    }
    Ok(())
}

struct Evaluated {
    metrics: EpochMetrics,
    validation: PredictionDump,
}

/// Trains the heads of `config.task` over `backend`, evaluating on the
/// validation split after every epoch and keeping the best epoch.
///
/// Frozen backends (no trainable parameters) are encoded once up front.
pub fn train_with_backend(
    config: &ExperimentConfig,
    split: &DatasetSplit,
    backend: &mut dyn Backend,
) -> Result<TrainOutcome, TrainError> {
    let started = Instant::now();
    config.validate()?;
    check_coverage(config, split)?;
    let handle = backend.handle().clone();
    let pooling = config.pooling_for(handle.family);
    if !pooling.valid_for(handle.family) {
        return Err(TrainError::Config(format!(
            "pooling {pooling} is not valid for {} backends",
            handle.family
        )));
    }
    let frozen = backend.trainable_parameters().is_empty();
    let mode = config.task;
    let selection = config.selection_metric.resolve(mode);
    let fingerprint = config.fingerprint();

    let (mut train_x, t1) = encode_all(backend, &split.train, pooling)?;
    let (mut val_x, t2) = encode_all(backend, &split.validation, pooling)?;
    let (mut test_x, t3) = encode_all(backend, &split.test, pooling)?;
    let truncation_count = t1 + t2 + t3;

    let mut heads = HeadSet::init(mode, handle.hidden_size, config.seed);
    let mut opt = Adam::new(config.learning_rate, &heads);

    let evaluate = |heads: &HeadSet,
                    epoch: usize,
                    train_x: &Array2<f64>,
                    val_x: &Array2<f64>,
                    train_loss: Option<LossBreakdown>|
     -> Result<Evaluated, TrainError> {
        let train_loss = match train_loss {
            Some(l) => l,
            None => set_loss(heads, train_x, &split.train, config)?,
        };
        let train_dump = dump_for(heads, train_x, &split.train, "train", &fingerprint)?;
        let (_, train_acc) = dump_scores(&train_dump)?;
        let val_loss = set_loss(heads, val_x, &split.validation, config)?;
        let validation = dump_for(heads, val_x, &split.validation, "validation", &fingerprint)?;
        let (val_f1, _) = dump_scores(&validation)?;
        let score = selection.score(mode, &val_f1).ok_or_else(|| {
            TrainError::Data(format!("validation labels do not cover {selection:?}"))
        })?;
        Ok(Evaluated {
            metrics: EpochMetrics {
                epoch,
                train_loss: train_loss.total,
                train_task_loss: train_loss.per_task,
                train_accuracy: train_acc,
                validation_loss: val_loss.total,
                validation_task_loss: val_loss.per_task,
                validation_macro_f1: val_f1,
                selection_score: score,
            },
            validation,
        })
    };

    let initial = evaluate(&heads, 0, &train_x, &val_x, None)?;
    let mut record = RunRecord {
        config: config.clone(),
        config_fingerprint: fingerprint.clone(),
        selection_metric: selection,
        optimizer: opt.info(),
        trainable_scope: if frozen { "heads" } else { "heads+backend" }.into(),
        pooling,
        initial: initial.metrics.clone(),
        epochs: Vec::new(),
        best_epoch: 0,
        optimizer_steps: 0,
        checkpoint: None,
        wall_time_secs: 0.0,
        truncation_count,
    };
    let mut best_heads = heads.clone();
    let mut best_validation = initial.validation;
    let mut best_test = dump_for(&heads, &test_x, &split.test, "test", &fingerprint)?;
    let mut best_score: Option<f64> = None;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = split.train.len();
    let mut step = 0usize;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut task_sums: BTreeMap<TaskId, f64> = BTreeMap::new();
        for batch in order.chunks(config.batch_size) {
            let micro = batch.len().div_ceil(config.grad_accumulation);
            let mut acc = HeadGrads::new();
            for mb in batch.chunks(micro) {
                let recs: Vec<&SentenceRecord> = mb.iter().map(|&i| &split.train[i]).collect();
                let (hidden, pooled) = if frozen {
                    (None, train_x.select(Axis(0), mb))
                } else {
                    let (h, p, _) = encode(backend, &recs, pooling)?;
                    (Some(h), p)
                };
                let gold = gold_for(mode, &recs);
                let (loss, grads, dpooled) =
                    loss_and_gradients(&heads, &pooled, &gold, &config.loss_weights)?;
                if !loss.total.is_finite() {
                    record.wall_time_secs = started.elapsed().as_secs_f64();
                    record.optimizer_steps = step;
                    return Err(TrainError::Divergence {
                        epoch,
                        step: step + 1,
                        detail: format!("loss is {}", loss.total),
                        record: Box::new(record),
                    });
                }
                let w = mb.len() as f64 / batch.len() as f64;
                add_scaled(&mut acc, &grads, w);
                loss_sum += loss.total * mb.len() as f64;
                for (t, l) in &loss.per_task {
                    *task_sums.entry(*t).or_default() += l * mb.len() as f64;
                }
                if let Some(hidden) = hidden {
                    let dstates = pool_backward(&hidden, pooling, &(dpooled * w))?;
                    let texts: Vec<&str> = recs.iter().map(|r| r.text.as_str()).collect();
                    backend.apply_gradient(&texts, &dstates, config.learning_rate)?;
                }
            }
            opt.step(&mut heads, &acc);
            step += 1;
            if !heads.is_finite() {
                record.wall_time_secs = started.elapsed().as_secs_f64();
                record.optimizer_steps = step;
                return Err(TrainError::Divergence {
                    epoch,
                    step,
                    detail: "head parameters became non-finite".into(),
                    record: Box::new(record),
                });
            }
        }
        if !frozen {
            train_x = encode_all(backend, &split.train, pooling)?.0;
            val_x = encode_all(backend, &split.validation, pooling)?.0;
            test_x = encode_all(backend, &split.test, pooling)?.0;
        }
        let mean = |s: f64| s / n as f64;
        let epoch_loss = LossBreakdown {
            total: mean(loss_sum),
            per_task: task_sums.into_iter().map(|(t, s)| (t, mean(s))).collect(),
        };
        let ev = evaluate(&heads, epoch, &train_x, &val_x, Some(epoch_loss))?;
        log::info!(
            "epoch {epoch}: train loss {:.5}, validation score {:.4}",
            ev.metrics.train_loss,
            ev.metrics.selection_score
        );
        if best_score.is_none_or(|b| ev.metrics.selection_score > b) {
            best_score = Some(ev.metrics.selection_score);
            best_heads = heads.clone();
            best_validation = ev.validation;
            best_test = dump_for(&heads, &test_x, &split.test, "test", &fingerprint)?;
        }
        record.epochs.push(ev.metrics);
    }
    if config.epochs > 0 {
        record.best_epoch = select_checkpoint(&record, selection)?;
    }
    record.optimizer_steps = step;
    record.wall_time_secs = started.elapsed().as_secs_f64();
    let checkpoint = Checkpoint::new(
        &best_heads,
        &config.backend_id,
        pooling,
        &config.adaptation,
        record.best_epoch,
    );
    Ok(TrainOutcome {
        record,
        checkpoint,
        validation: best_validation,
        test: best_test,
    })
}
