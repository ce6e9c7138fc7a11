//! JSON bodies exchanged with the hub, plus the ARFF encodings of task
//! splits and run predictions.
//!
//! Every entity GET returns a single envelope holding both the JSON
//! description and any ARFF payload, so one download is one request.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arff::{ArffError, Attribute, AttributeKind, Relation, Value};
use crate::model::{
    DataId, DataSet, DataSetDescription, DataStatus, Evaluation, Flow, FlowId, Fold, PredictionRow, Run, RunId,
    Splits, Task, TaskId, UserId, Validate, Violation,
};

#[derive(Debug, Error)]
pub enum WireError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed ARFF at line {}, column {}: {source}", .source.position().0, .source.position().1)]
    Arff {
        #[from]
        source: ArffError,
    },
    #[error("{0}")]
    Format(String),
    #[error("{}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

fn check(violations: Vec<Violation>) -> Result<(), WireError> {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(WireError::Invalid(violations))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataEnvelope {
    pub data_set_description: DataSetDescription,
    pub data_arff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskEnvelope {
    pub task: Task,
    pub data_splits_arff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowEnvelope {
    pub flow: Flow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEnvelope {
    pub run: Run,
    pub predictions_arff: String,
}

/// Body of a data set upload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataUpload {
    pub description: DataSetDescription,
    pub data_arff: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowUploaded {
    pub flow_id: FlowId,
    pub version: u32,
    pub already_exists: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataUploaded {
    pub data_id: DataId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunUploaded {
    pub run_id: RunId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRequest {
    pub id: u64,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagsResponse {
    pub id: u64,
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: u16,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListBody<T> {
    pub items: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitiesBody {
    pub data_id: DataId,
    pub qualities: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureInfo {
    pub name: String,
    pub description: String,
}

pub fn quality_count(qualities: &BTreeMap<String, f64>, name: &str) -> u64 {
    qualities.get(name).map_or(0, |&v| v.max(0.0) as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSummary {
    pub data_id: DataId,
    pub name: String,
    pub version: u32,
    pub status: DataStatus,
    pub number_of_instances: u64,
    pub number_of_features: u64,
    pub number_of_classes: u64,
    pub number_of_missing_values: u64,
    pub tags: BTreeSet<String>,
}

impl DataSummary {
    pub fn from_description(d: &DataSetDescription) -> Self {
        DataSummary {
            data_id: d.data_id,
            name: d.name.clone(),
            version: d.version,
            status: d.status,
            number_of_instances: quality_count(&d.qualities, "NumberOfInstances"),
            number_of_features: quality_count(&d.qualities, "NumberOfFeatures"),
            number_of_classes: quality_count(&d.qualities, "NumberOfClasses"),
            number_of_missing_values: quality_count(&d.qualities, "NumberOfMissingValues"),
            tags: d.tags.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: TaskId,
    pub task_type: String,
    pub data_id: DataId,
    pub name: String,
    pub number_of_instances: u64,
    pub number_of_features: u64,
    pub number_of_classes: u64,
    pub number_of_missing_values: u64,
    pub evaluation_measure: String,
    pub estimation_procedure: String,
    pub tags: BTreeSet<String>,
    pub data_tags: BTreeSet<String>,
}

impl TaskSummary {
    pub fn new(task: &Task, data: &DataSetDescription) -> Self {
        let d = DataSummary::from_description(data);
        TaskSummary {
            task_id: task.task_id,
            task_type: task.task_type.as_str().to_string(),
            data_id: task.data_id,
            name: data.name.clone(),
            number_of_instances: d.number_of_instances,
            number_of_features: d.number_of_features,
            number_of_classes: d.number_of_classes,
            number_of_missing_values: d.number_of_missing_values,
            evaluation_measure: task.evaluation_measure.clone(),
            estimation_procedure: task.estimation_procedure.name.clone(),
            tags: task.tags.clone(),
            data_tags: data.tags.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub flow_id: FlowId,
    pub name: String,
    pub version: u32,
    pub external_version: String,
    pub uploader: UserId,
    pub tags: BTreeSet<String>,
}

impl From<&Flow> for FlowSummary {
    fn from(f: &Flow) -> Self {
        FlowSummary {
            flow_id: f.flow_id,
            name: f.name.clone(),
            version: f.version,
            external_version: f.external_version.clone(),
            uploader: f.uploader,
            tags: f.tags.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: RunId,
    pub task_id: TaskId,
    pub flow_id: FlowId,
    pub flow_name: String,
    pub uploader: UserId,
    pub tags: BTreeSet<String>,
}

impl From<&Run> for RunSummary {
    fn from(r: &Run) -> Self {
        RunSummary {
            run_id: r.run_id,
            task_id: r.task_id,
            flow_id: r.flow_id,
            flow_name: r.flow_name.clone(),
            uploader: r.uploader,
            tags: r.tags.clone(),
        }
    }
}

/// One row of a run-evaluation listing: the run, its flow and every
/// measure the hub computed for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub run_id: RunId,
    pub task_id: TaskId,
    pub data_name: String,
    pub flow_id: FlowId,
    pub flow_name: String,
    pub flow_version: u32,
    pub uploader: UserId,
    /// Flow class plus explicitly set hyperparameters, e.g. `classif.rpart(max_depth=3)`.
    pub learner: String,
    pub tags: BTreeSet<String>,
    pub evaluations: BTreeMap<String, Evaluation>,
}

impl EvaluationRow {
    pub fn value(&self, measure: &str) -> Option<f64> {
        self.evaluations.get(measure).map(|e| e.value)
    }
}

pub fn decode_dataset(description_json: &str, arff: &str) -> Result<DataSet, WireError> {
    let description: DataSetDescription = serde_json::from_str(description_json)?;
    dataset_from_parts(description, arff)
}

pub fn dataset_from_parts(description: DataSetDescription, arff: &str) -> Result<DataSet, WireError> {
    let relation = Relation::parse(arff)?;
    let ds = DataSet::new(description, relation).map_err(|e| WireError::Format(e.to_string()))?;
    check(ds.validate())?;
    Ok(ds)
}

pub fn decode_task(task_json: &str, splits_arff: &str) -> Result<Task, WireError> {
    let task: Task = serde_json::from_str(task_json)?;
    task_from_parts(task, splits_arff)
}

pub fn task_from_parts(mut task: Task, splits_arff: &str) -> Result<Task, WireError> {
    task.splits = splits_from_arff(&Relation::parse(splits_arff)?)?;
    check(task.validate())?;
    Ok(task)
}

pub fn decode_flow(flow_json: &str) -> Result<Flow, WireError> {
    let flow: Flow = serde_json::from_str(flow_json)?;
    check(flow.validate())?;
    Ok(flow)
}

pub fn decode_run(run_json: &str, predictions_arff: &str) -> Result<Run, WireError> {
    let run: Run = serde_json::from_str(run_json)?;
    run_from_parts(run, predictions_arff)
}

pub fn run_from_parts(mut run: Run, predictions_arff: &str) -> Result<Run, WireError> {
    let (labels, predictions) = predictions_from_arff(&Relation::parse(predictions_arff)?)?;
    if labels != run.class_labels {
        return Err(WireError::Format(format!(
            "prediction file declares classes {:?}, run declares {:?}",
            labels, run.class_labels
        )));
    }
    run.predictions = predictions;
    check(run.validate())?;
    Ok(run)
}

const TRAIN: usize = 0;
const TEST: usize = 1;

pub fn splits_to_arff(splits: &Splits) -> Relation {
    let mut rel = Relation::new(
        "splits",
        vec![
            Attribute::nominal("type", ["TRAIN", "TEST"]),
            Attribute::numeric("rowid"),
            Attribute::numeric("repeat"),
            Attribute::numeric("fold"),
        ],
    )
    .expect("static header");
    for (r, f, fold) in splits.iter() {
        for (kind, rows) in [(TRAIN, &fold.train), (TEST, &fold.test)] {
            for &row in rows {
                rel.push_row(vec![
                    Value::Nominal(kind),
                    Value::Number(row as f64),
                    Value::Number(r as f64),
                    Value::Number(f as f64),
                ])
                .expect("typed row");
            }
        }
    }
    rel
}

fn column(rel: &Relation, name: &str) -> Result<usize, WireError> {
    rel.attribute_index(name).ok_or_else(|| WireError::Format(format!("missing column '{name}'")))
}

fn index_value(v: &Value, what: &str) -> Result<usize, WireError> {
    match v.as_f64() {
        Some(x) if x >= 0.0 && x.fract() == 0.0 && x < u32::MAX as f64 => Ok(x as usize),
        _ => Err(WireError::Format(format!("{what} must be a non-negative integer"))),
    }
}

pub fn splits_from_arff(rel: &Relation) -> Result<Splits, WireError> {
    let (ty, row_c, rep_c, fold_c) =
        (column(rel, "type")?, column(rel, "rowid")?, column(rel, "repeat")?, column(rel, "fold")?);
    let levels = rel.attributes()[ty].levels().unwrap_or(&[]);
    let mut cells: BTreeMap<(usize, usize), Fold> = BTreeMap::new();
    let mut n_rows = 0;
    for row in rel.rows() {
        let kind = row[ty]
            .as_level()
            .map(|l| levels[l].as_str())
            .ok_or_else(|| WireError::Format("split type must be TRAIN or TEST".into()))?;
        let id = index_value(&row[row_c], "rowid")?;
        let key = (index_value(&row[rep_c], "repeat")?, index_value(&row[fold_c], "fold")?);
        let fold = cells.entry(key).or_default();
        match kind {
            "TRAIN" => fold.train.push(id),
            "TEST" => fold.test.push(id),
            other => return Err(WireError::Format(format!("unknown split type '{other}'"))),
        }
        n_rows = n_rows.max(id + 1);
    }
    let repeats = cells.keys().map(|k| k.0 + 1).max().unwrap_or(0);
    let folds = cells.keys().map(|k| k.1 + 1).max().unwrap_or(0);
    let mut out = vec![vec![Fold::default(); folds]; repeats];
    for ((r, f), mut fold) in cells {
        fold.train.sort_unstable();
        fold.test.sort_unstable();
        out[r][f] = fold;
    }
    Ok(Splits { n_rows, repeats: out })
}

pub fn confidence_column(label: &str) -> String {
    format!("confidence.{label}")
}

pub fn predictions_to_arff(predictions: &[PredictionRow], class_labels: &[String]) -> Relation {
    let mut attrs = vec![
        Attribute::numeric("repeat"),
        Attribute::numeric("fold"),
        Attribute::numeric("row_id"),
        Attribute::nominal("prediction", class_labels.iter().cloned()),
        Attribute::nominal("truth", class_labels.iter().cloned()),
    ];
    attrs.extend(class_labels.iter().map(|l| Attribute::numeric(confidence_column(l))));
    let mut rel = Relation::new("predictions", attrs).expect("distinct class labels");
    let level = |l: &str| class_labels.iter().position(|c| c == l).map_or(Value::Missing, Value::Nominal);
    for p in predictions {
        let mut row = vec![
            Value::Number(p.repeat as f64),
            Value::Number(p.fold as f64),
            Value::Number(p.row_id as f64),
            level(&p.predicted),
            level(&p.truth),
        ];
        for k in 0..class_labels.len() {
            row.push(p.confidences.get(k).map_or(Value::Missing, |&c| Value::Number(c)));
        }
        rel.push_row(row).expect("typed row");
    }
    rel
}

/// Returns the declared class labels and the prediction rows.
pub fn predictions_from_arff(rel: &Relation) -> Result<(Vec<String>, Vec<PredictionRow>), WireError> {
    let (rep_c, fold_c, row_c, pred_c, truth_c) = (
        column(rel, "repeat")?,
        column(rel, "fold")?,
        column(rel, "row_id")?,
        column(rel, "prediction")?,
        column(rel, "truth")?,
    );
    let labels: Vec<String> = match &rel.attributes()[pred_c].kind {
        AttributeKind::Nominal(l) => l.clone(),
        _ => return Err(WireError::Format("prediction column must be nominal".into())),
    };
    if rel.attributes()[truth_c].levels() != Some(labels.as_slice()) {
        return Err(WireError::Format("truth and prediction columns declare different classes".into()));
    }
    let conf_cols = labels.iter().map(|l| column(rel, &confidence_column(l))).collect::<Result<Vec<_>, _>>()?;
    let label_of = |v: &Value, what: &str| {
        v.as_level().map(|i| labels[i].clone()).ok_or_else(|| WireError::Format(format!("missing {what} label")))
    };
    let mut out = Vec::with_capacity(rel.num_rows());
    for row in rel.rows() {
        let conf: Vec<Option<f64>> = conf_cols.iter().map(|&c| row[c].as_f64()).collect();
        let confidences = if conf.iter().all(Option::is_none) {
            Vec::new()
        } else {
            conf.into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| WireError::Format("confidences must be all present or all missing".into()))?
        };
        out.push(PredictionRow {
            repeat: index_value(&row[rep_c], "repeat")?,
            fold: index_value(&row[fold_c], "fold")?,
            row_id: index_value(&row[row_c], "row_id")?,
            predicted: label_of(&row[pred_c], "predicted")?,
            truth: label_of(&row[truth_c], "truth")?,
            confidences,
        });
    }
    Ok((labels, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::make_cv_splits;

    fn row(fold: usize, id: usize, pred: &str, truth: &str, conf: Vec<f64>) -> PredictionRow {
        PredictionRow { repeat: 0, fold, row_id: id, predicted: pred.into(), truth: truth.into(), confidences: conf }
    }

    #[test]
    fn splits_round_trip() {
        let splits = make_cv_splits(23, None, 5, 2, false, 7).unwrap();
        let text = splits_to_arff(&splits).to_arff();
        assert!(text.contains("@attribute type {TRAIN,TEST}"));
        let back = splits_from_arff(&Relation::parse(&text).unwrap()).unwrap();
        assert_eq!(back, splits);
    }

    #[test]
    fn predictions_round_trip_with_missing_confidences() {
        let labels = vec!["no".to_string(), "yes".to_string()];
        let preds = vec![
            row(0, 3, "yes", "no", vec![0.25, 0.75]),
            row(1, 0, "no", "no", vec![]),
            row(1, 1, "no", "yes", vec![1.0 / 3.0, 2.0 / 3.0]),
        ];
        let text = predictions_to_arff(&preds, &labels).to_arff();
        assert!(text.contains("@attribute confidence.yes numeric"));
        assert!(text.contains("0,1,0,no,no,?,?"));
        let (l, back) = predictions_from_arff(&Relation::parse(&text).unwrap()).unwrap();
        assert_eq!(l, labels);
        assert_eq!(back, preds);
    }

    #[test]
    fn partial_confidences_rejected() {
        let text = "@relation p\n@attribute repeat numeric\n@attribute fold numeric\n@attribute row_id numeric\n\
                    @attribute prediction {a,b}\n@attribute truth {a,b}\n@attribute confidence.a numeric\n\
                    @attribute confidence.b numeric\n@data\n0,0,0,a,a,1,?\n";
        let err = predictions_from_arff(&Relation::parse(text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("all present"));
    }

    #[test]
    fn negative_row_id_rejected() {
        let text = "@relation s\n@attribute type {TRAIN,TEST}\n@attribute rowid numeric\n@attribute repeat numeric\n\
                    @attribute fold numeric\n@data\nTEST,-1,0,0\n";
        assert!(splits_from_arff(&Relation::parse(text).unwrap()).is_err());
    }

    #[test]
    fn run_labels_must_match_file() {
        let run: Run = serde_json::from_value(serde_json::json!({
            "run_id": 0, "task_id": 1, "flow_id": 1, "flow_name": "x", "uploader": 0,
            "evaluation_measure": "predictive_accuracy", "class_labels": ["a", "c"],
            "parameter_settings": [], "seed_settings": []
        }))
        .unwrap();
        let labels = vec!["a".to_string(), "b".to_string()];
        let arff = predictions_to_arff(&[row(0, 0, "a", "a", vec![1.0, 0.0])], &labels).to_arff();
        assert!(matches!(run_from_parts(run, &arff), Err(WireError::Format(_))));
    }
}
