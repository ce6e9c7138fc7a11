//! Executing learners on tasks and scoring the results.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::arff::{AttributeKind, Relation, Value};
use crate::learners::{derive_seed, learner_label, LearnerError, LearnerSpec, TrainingData, GENERATOR_NAME};
use crate::model::{
    BenchmarkCell, BenchmarkResult, DataSet, Evaluation, Flow, FlowId, Fold, PredictionRow, Run, RunId, SeedSetting,
    Splits, Task, TaskId, UserId,
};

pub const PREDICTIVE_ACCURACY: &str = "predictive_accuracy";
pub const AREA_UNDER_ROC_CURVE: &str = "area_under_roc_curve";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid split configuration: {0}")]
    InvalidSplits(String),
    #[error("task {task} does not match data set {data}: {reason}")]
    TaskMismatch { task: TaskId, data: String, reason: String },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("training failed on repeat {repeat}, fold {fold}: {source}")]
    Fold { repeat: usize, fold: usize, source: LearnerError },
    #[error("no predictions for repeat {repeat}, fold {fold}")]
    MissingFold { repeat: usize, fold: usize },
    #[error("repeat {repeat}, fold {fold}: {got} predictions for {expected} test rows")]
    IncompleteFold { repeat: usize, fold: usize, got: usize, expected: usize },
    #[error("prediction uses unknown class label '{0}'")]
    UnknownLabel(String),
    #[error("area under the ROC curve needs a binary task, this one has {0} classes")]
    MulticlassAuc(usize),
    #[error("runs use different measures: '{0}' and '{1}'")]
    MixedMeasures(String, String),
    #[error("run {run} has no '{measure}' evaluation")]
    MissingEvaluation { run: String, measure: String },
    #[error("two runs for task {0} and learner '{1}'")]
    DuplicateCell(TaskId, String),
    #[error("target '{0}' is not a nominal attribute of the data")]
    BadTarget(String),
}

/// Stratified or plain k-fold splits, `repeats` times, deterministic in `seed`.
///
/// Each repeat shuffles the rows (per class when stratified) and deals them
/// round-robin over the folds, continuing the deal across classes, so fold
/// sizes and per-class counts both differ by at most one.
pub fn make_cv_splits(
    n_rows: usize,
    labels: Option<&[usize]>,
    folds: usize,
    repeats: usize,
    stratified: bool,
    seed: u64,
) -> Result<Splits, RunnerError> {
    if folds < 2 {
        return Err(RunnerError::InvalidSplits(format!("{folds} folds; need at least 2")));
    }
    if repeats < 1 {
        return Err(RunnerError::InvalidSplits("need at least one repeat".into()));
    }
    if n_rows < folds {
        return Err(RunnerError::InvalidSplits(format!("{n_rows} rows cannot fill {folds} folds")));
    }
    if stratified && labels.is_none_or(|l| l.len() != n_rows) {
        return Err(RunnerError::InvalidSplits("stratification needs one label per row".into()));
    }
    let mut out = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
        let groups: Vec<Vec<usize>> = match labels.filter(|_| stratified) {
            Some(labels) => {
                let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
                let mut g = vec![Vec::new(); n_classes];
                for (row, &l) in labels.iter().enumerate() {
                    g[l].push(row);
                }
                g
            }
            None => vec![(0..n_rows).collect()],
        };
        let mut tests = vec![Vec::new(); folds];
        let mut next = 0usize;
        for mut group in groups {
            group.shuffle(&mut rng);
            for row in group {
                tests[next].push(row);
                next = (next + 1) % folds;
            }
        }
        let repeat = tests
            .into_iter()
            .map(|mut test| {
                test.sort_unstable();
                let mut in_test = vec![false; n_rows];
                for &t in &test {
                    in_test[t] = true;
                }
                let train = (0..n_rows).filter(|&i| !in_test[i]).collect();
                Fold { train, test }
            })
            .collect();
        out.push(repeat);
    }
    Ok(Splits { n_rows, repeats: out })
}

fn target_index(task: &Task, data: &DataSet) -> Result<usize, RunnerError> {
    if task.data_id != data.description.data_id {
        return Err(RunnerError::TaskMismatch {
            task: task.task_id,
            data: data.description.name.clone(),
            reason: format!("task uses data set {}", task.data_id),
        });
    }
    if task.splits.n_rows != data.relation.num_rows() {
        return Err(RunnerError::TaskMismatch {
            task: task.task_id,
            data: data.description.name.clone(),
            reason: format!("splits cover {} rows, data has {}", task.splits.n_rows, data.relation.num_rows()),
        });
    }
    data.relation
        .attribute_index(&task.target_feature)
        .filter(|&i| data.relation.attributes()[i].is_nominal())
        .ok_or_else(|| RunnerError::BadTarget(task.target_feature.clone()))
}

/// Trains `learner` on every training split of `task` and predicts the
/// matching test rows. The returned run is local (`run_id` 0, `flow_id` 0
/// unless set by the caller) and already carries local evaluations.
pub fn run_task(task: &Task, data: &DataSet, learner: &LearnerSpec, seed: u64) -> Result<Run, RunnerError> {
    let target = target_index(task, data)?;
    let training = TrainingData::from_relation(&data.relation, target)?;
    let class_labels = training.class_names.clone();

    let cells: Vec<(usize, usize, &Fold)> = task.splits.iter().collect();
    let per_fold: Vec<Vec<PredictionRow>> = cells
        .par_iter()
        .map(|&(r, f, fold)| {
            let fold_seed = derive_seed(seed, &[r as u64, f as u64]);
            let model = learner
                .fit(&training, &fold.train, fold_seed)
                .map_err(|source| RunnerError::Fold { repeat: r, fold: f, source })?;
            let mut test = fold.test.clone();
            test.sort_unstable();
            Ok(test
                .into_iter()
                .map(|row| {
                    let (pred, confidences) = model.predict(&training, row);
                    PredictionRow {
                        repeat: r,
                        fold: f,
                        row_id: row,
                        predicted: class_labels[pred].clone(),
                        truth: class_labels[training.labels[row]].clone(),
                        confidences,
                    }
                })
                .collect())
        })
        .collect::<Result<_, RunnerError>>()?;
    let predictions: Vec<PredictionRow> = per_fold.into_iter().flatten().collect();

    let evaluations = evaluate_predictions(&predictions, &class_labels, task)?;
    Ok(Run {
        run_id: RunId(0),
        task_id: task.task_id,
        flow_id: FlowId(0),
        flow_name: learner.flow_name(),
        uploader: UserId(0),
        evaluation_measure: task.evaluation_measure.clone(),
        class_labels,
        parameter_settings: learner.parameter_settings(training.num_features()),
        seed_settings: vec![
            SeedSetting { name: "generator".into(), value: GENERATOR_NAME.into() },
            SeedSetting { name: "seed".into(), value: seed.to_string() },
        ],
        evaluations,
        tags: Default::default(),
        predictions,
    })
}

/// Runs a downloaded flow, optionally overriding some of its hyperparameters.
pub fn run_task_flow(
    task: &Task,
    data: &DataSet,
    flow: &Flow,
    overrides: &[(String, String)],
    seed: u64,
) -> Result<Run, RunnerError> {
    let mut learner = LearnerSpec::from_flow(flow)?;
    for (name, value) in overrides {
        learner.set_str(name, value)?;
    }
    let mut run = run_task(task, data, &learner, seed)?;
    run.flow_id = flow.flow_id;
    Ok(run)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Accuracy for every task cell, plus AUC when the task is binary and every
/// prediction carries confidences. The second declared class is the positive one.
pub fn evaluate_predictions(
    predictions: &[PredictionRow],
    class_labels: &[String],
    task: &Task,
) -> Result<BTreeMap<String, Evaluation>, RunnerError> {
    let mut blocks: HashMap<(usize, usize), Vec<&PredictionRow>> = HashMap::new();
    for p in predictions {
        for label in [&p.predicted, &p.truth] {
            if !class_labels.contains(label) {
                return Err(RunnerError::UnknownLabel(label.clone()));
            }
        }
        blocks.entry((p.repeat, p.fold)).or_default().push(p);
    }

    let binary_with_conf =
        class_labels.len() == 2 && predictions.iter().all(|p| p.confidences.len() == class_labels.len());
    let mut accuracy = Vec::new();
    let mut auc = Vec::new();
    let mut auc_defined = binary_with_conf;
    for (r, f, fold) in task.splits.iter() {
        let block = blocks.get(&(r, f)).ok_or(RunnerError::MissingFold { repeat: r, fold: f })?;
        if block.len() != fold.test.len() {
            return Err(RunnerError::IncompleteFold { repeat: r, fold: f, got: block.len(), expected: fold.test.len() });
        }
        let correct = block.iter().filter(|p| p.predicted == p.truth).count();
        accuracy.push(correct as f64 / fold.test.len() as f64);
        if auc_defined {
            let positive = &class_labels[1];
            let truth: Vec<bool> = block.iter().map(|p| p.truth == *positive).collect();
            let scores: Vec<f64> = block.iter().map(|p| p.confidences[1]).collect();
            match auc_rank(&truth, &scores) {
                Some(v) => auc.push(v),
                None => auc_defined = false,
            }
        }
    }
    let mut out = BTreeMap::new();
    out.insert(PREDICTIVE_ACCURACY.to_string(), Evaluation { value: mean(&accuracy), per_fold: accuracy });
    if auc_defined {
        out.insert(AREA_UNDER_ROC_CURVE.to_string(), Evaluation { value: mean(&auc), per_fold: auc });
    }
    Ok(out)
}

/// AUC over a whole prediction set; errors for more than two classes.
pub fn area_under_roc_curve(predictions: &[PredictionRow], class_labels: &[String]) -> Result<Option<f64>, RunnerError> {
    if class_labels.len() != 2 {
        return Err(RunnerError::MulticlassAuc(class_labels.len()));
    }
    let truth: Vec<bool> = predictions.iter().map(|p| p.truth == class_labels[1]).collect();
    let scores: Vec<f64> = predictions.iter().map(|p| p.confidences.get(1).copied().unwrap_or(0.0)).collect();
    Ok(auc_rank(&truth, &scores))
}

/// Rank-statistic AUC, `(R+ - n+(n+ + 1)/2) / (n+ n-)`, where `R+` sums the
/// midranks of the positives. `None` unless both classes are present.
pub fn auc_rank(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let n_pos = n_pos as f64;
    Some((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

/// Benchmark label of a run: flow class plus its explicitly set parameters.
pub fn run_label(run: &Run) -> String {
    learner_label(
        &run.flow_name,
        run.parameter_settings.iter().filter(|p| !p.defaulted).map(|p| (p.name.as_str(), p.value.clone())),
    )
}

pub fn convert_runs_to_benchmark(runs: &[Run]) -> Result<BenchmarkResult, RunnerError> {
    let mut result = BenchmarkResult::default();
    for run in runs {
        if result.measure.is_empty() {
            result.measure = run.evaluation_measure.clone();
        } else if result.measure != run.evaluation_measure {
            return Err(RunnerError::MixedMeasures(result.measure.clone(), run.evaluation_measure.clone()));
        }
        let eval = run.evaluations.get(&run.evaluation_measure).ok_or_else(|| RunnerError::MissingEvaluation {
            run: run.run_id.to_string(),
            measure: run.evaluation_measure.clone(),
        })?;
        let key = (run.task_id, run_label(run));
        if result.cells.contains_key(&key) {
            return Err(RunnerError::DuplicateCell(key.0, key.1));
        }
        result.cells.insert(key, BenchmarkCell { per_fold: eval.per_fold.clone(), aggregate: eval.value });
    }
    Ok(result)
}

/// Meta-features of a data set with a nominal target.
pub fn compute_data_qualities(relation: &Relation, target: &str) -> Result<BTreeMap<String, f64>, RunnerError> {
    let target_index = relation
        .attribute_index(target)
        .filter(|&i| relation.attributes()[i].is_nominal())
        .ok_or_else(|| RunnerError::BadTarget(target.to_string()))?;
    let attrs = relation.attributes();
    let n_levels = attrs[target_index].levels().map_or(0, <[String]>::len);
    let mut class_counts = vec![0usize; n_levels];
    for v in relation.column(target_index) {
        if let Value::Nominal(i) = v {
            class_counts[*i] += 1;
        }
    }
    let labelled: usize = class_counts.iter().sum();
    let present: Vec<usize> = class_counts.iter().copied().filter(|&c| c > 0).collect();
    let entropy = present
        .iter()
        .map(|&c| {
            let p = c as f64 / labelled as f64;
            -p * p.log2()
        })
        .sum::<f64>();
    let rows_with_missing = relation.rows().iter().filter(|r| r.iter().any(Value::is_missing)).count();
    let count_kind = |pred: fn(&AttributeKind) -> bool| attrs.iter().filter(|a| pred(&a.kind)).count() as f64;

    let mut q = BTreeMap::new();
    q.insert("NumberOfInstances".into(), relation.num_rows() as f64);
    q.insert("NumberOfFeatures".into(), attrs.len() as f64);
    q.insert("NumberOfClasses".into(), n_levels as f64);
    q.insert("NumberOfMissingValues".into(), relation.missing_count() as f64);
    q.insert("NumberOfInstancesWithMissingValues".into(), rows_with_missing as f64);
    q.insert("NumberOfNumericFeatures".into(), count_kind(|k| matches!(k, AttributeKind::Numeric)));
    q.insert("NumberOfSymbolicFeatures".into(), count_kind(|k| matches!(k, AttributeKind::Nominal(_))));
    q.insert("MajorityClassSize".into(), present.iter().copied().max().unwrap_or(0) as f64);
    q.insert("MinorityClassSize".into(), present.iter().copied().min().unwrap_or(0) as f64);
    q.insert("ClassEntropy".into(), entropy);
    Ok(q)
}
