//! Platform entities: data sets, tasks, flows, runs and benchmark results.
//!
//! Everything here is a plain value object. Structural rules are checked by
//! [`Validate`], which reports violations as data instead of failing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arff::Relation;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl From<u64> for $name {
            fn from(v: u64) -> Self {
                $name(v)
            }
        }
    };
}

id_type!(DataId);
id_type!(TaskId);
id_type!(FlowId);
id_type!(
    /// Zero marks a run that has not been uploaded yet.
    RunId
);
id_type!(UserId);

/// The four kinds of shareable objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Dataset,
    Task,
    Flow,
    Run,
}

impl EntityKind {
    pub const ALL: [EntityKind; 4] = [EntityKind::Dataset, EntityKind::Task, EntityKind::Flow, EntityKind::Run];

    /// Path segment used by the REST endpoints.
    pub fn endpoint(self) -> &'static str {
        match self {
            EntityKind::Dataset => "data",
            EntityKind::Task => "task",
            EntityKind::Flow => "flow",
            EntityKind::Run => "run",
        }
    }

    pub fn plural(self) -> &'static str {
        match self {
            EntityKind::Dataset => "datasets",
            EntityKind::Task => "tasks",
            EntityKind::Flow => "flows",
            EntityKind::Run => "runs",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.to_ascii_lowercase().as_str() {
            "data" | "dataset" | "datasets" => Some(EntityKind::Dataset),
            "task" | "tasks" => Some(EntityKind::Task),
            "flow" | "flows" => Some(EntityKind::Flow),
            "run" | "runs" => Some(EntityKind::Run),
            _ => None,
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.endpoint())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataStatus {
    Active,
    Deactivated,
    InPreparation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSetDescription {
    pub data_id: DataId,
    pub name: String,
    pub version: u32,
    pub status: DataStatus,
    pub default_target_attribute: String,
    pub licence: String,
    pub format: String,
    pub upload_date: String,
    pub uploader: UserId,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default)]
    pub qualities: BTreeMap<String, f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("default target attribute '{0}' is not an attribute of the data")]
    UnknownTarget(String),
}

/// Description plus materialized data.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub description: DataSetDescription,
    pub relation: Relation,
    pub target_index: usize,
}

impl DataSet {
    pub fn new(description: DataSetDescription, relation: Relation) -> Result<Self, ModelError> {
        let target_index = relation
            .attribute_index(&description.default_target_attribute)
            .ok_or_else(|| ModelError::UnknownTarget(description.default_target_attribute.clone()))?;
        Ok(DataSet { description, relation, target_index })
    }

    pub fn class_labels(&self) -> Option<&[String]> {
        self.relation.attributes()[self.target_index].levels()
    }
}

impl fmt::Display for DataSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Data Set \"{}\" :: (Version = {}, OpenML ID = {})",
            self.description.name, self.description.version, self.description.data_id
        )?;
        writeln!(f, "  Default Target Attribute: {}", self.description.default_target_attribute)?;
        write!(
            f,
            "  Instances: {}, Features: {}",
            self.relation.num_rows(),
            self.relation.num_attributes()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationKind {
    Crossvalidation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationProcedure {
    pub id: u64,
    pub name: String,
    pub kind: EstimationKind,
    pub folds: u32,
    pub repeats: u32,
    pub stratified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskType {
    #[serde(rename = "Supervised Classification")]
    SupervisedClassification,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::SupervisedClassification => "Supervised Classification",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Resampling splits indexed by `[repeat][fold]`; row ids are 0-based.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub n_rows: usize,
    pub repeats: Vec<Vec<Fold>>,
}

impl Splits {
    pub fn num_repeats(&self) -> usize {
        self.repeats.len()
    }

    pub fn num_folds(&self) -> usize {
        self.repeats.first().map_or(0, Vec::len)
    }

    /// Iterates `(repeat, fold, split)` in repeat-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &Fold)> + '_ {
        self.repeats
            .iter()
            .enumerate()
            .flat_map(|(r, folds)| folds.iter().enumerate().map(move |(f, fold)| (r, f, fold)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: TaskId,
    pub task_type: TaskType,
    pub data_id: DataId,
    pub data_name: String,
    pub target_feature: String,
    pub estimation_procedure: EstimationProcedure,
    pub evaluation_measure: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(skip)]
    pub splits: Splits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowParameter {
    pub name: String,
    pub data_type: String,
    pub default_value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub flow_id: FlowId,
    pub name: String,
    pub version: u32,
    pub external_version: String,
    pub description: String,
    pub parameters: Vec<FlowParameter>,
    #[serde(default)]
    pub dependencies: Vec<String>,
    pub uploader: UserId,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Flow \"{}\" :: (Version = {}, Flow ID = {})", self.name, self.version, self.flow_id)?;
        writeln!(f, "  External Version: {}", self.external_version)?;
        write!(f, "  Parameters      : ")?;
        let names: Vec<String> =
            self.parameters.iter().map(|p| format!("{} [{}] = {}", p.name, p.data_type, p.default_value)).collect();
        write!(f, "{}", names.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSetting {
    pub name: String,
    pub value: String,
    /// True when the value came from the learner's default rather than an explicit setting.
    #[serde(default)]
    pub defaulted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSetting {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean over all repeat x fold cells.
    pub value: f64,
    /// One value per cell, repeat-major.
    pub per_fold: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub repeat: usize,
    pub fold: usize,
    pub row_id: usize,
    pub predicted: String,
    pub truth: String,
    /// Aligned with the run's class labels; empty when the learner gives none.
    pub confidences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub run_id: RunId,
    pub task_id: TaskId,
    pub flow_id: FlowId,
    pub flow_name: String,
    pub uploader: UserId,
    pub evaluation_measure: String,
    pub class_labels: Vec<String>,
    pub parameter_settings: Vec<ParameterSetting>,
    pub seed_settings: Vec<SeedSetting>,
    #[serde(default)]
    pub evaluations: BTreeMap<String, Evaluation>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(skip)]
    pub predictions: Vec<PredictionRow>,
}

impl Run {
    pub fn parameter(&self, name: &str) -> Option<&str> {
        self.parameter_settings.iter().find(|p| p.name == name).map(|p| p.value.as_str())
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed_settings.iter().find(|s| s.name == "seed").and_then(|s| s.value.parse().ok())
    }

    pub fn aggregate(&self, measure: &str) -> Option<f64> {
        self.evaluations.get(measure).map(|e| e.value)
    }
}

impl fmt::Display for Run {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "OpenML Run {} :: (Task ID = {}, Flow ID = {})", self.run_id, self.task_id, self.flow_id)?;
        writeln!(f, "\tUser ID  : {}", self.uploader)?;
        let tags: Vec<&str> = self.tags.iter().map(String::as_str).collect();
        writeln!(f, "\tTags     : {}", tags.join(", "))?;
        writeln!(f, "\tLearner  : {}", self.flow_name)?;
        write!(f, "\tTask type: {}", TaskType::SupervisedClassification.as_str())?;
        for (name, eval) in &self.evaluations {
            write!(f, "\n\t{name}: {}", eval.value)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCell {
    pub per_fold: Vec<f64>,
    pub aggregate: f64,
}

/// Task x learner grid of per-fold values for one measure.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkResult {
    pub measure: String,
    pub cells: BTreeMap<(TaskId, String), BenchmarkCell>,
}

impl BenchmarkResult {
    pub fn tasks(&self) -> BTreeSet<TaskId> {
        self.cells.keys().map(|(t, _)| *t).collect()
    }

    pub fn learners(&self) -> BTreeSet<String> {
        self.cells.keys().map(|(_, l)| l.clone()).collect()
    }

    pub fn get(&self, task: TaskId, learner: &str) -> Option<&BenchmarkCell> {
        self.cells.get(&(task, learner.to_string()))
    }

    /// Grid positions (task x learner) that have no run.
    pub fn missing_cells(&self) -> Vec<(TaskId, String)> {
        let mut missing = Vec::new();
        for task in self.tasks() {
            for learner in self.learners() {
                if !self.cells.contains_key(&(task, learner.clone())) {
                    missing.push((task, learner));
                }
            }
        }
        missing
    }
}

/// One broken rule on one field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: &'static str,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: &'static str, message: impl Into<String>) -> Self {
        Violation { field: field.into(), rule, message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.field, self.rule, self.message)
    }
}

pub trait Validate {
    /// Empty iff every invariant holds.
    fn validate(&self) -> Vec<Violation>;
}

impl Validate for DataSetDescription {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.data_id.0 == 0 {
            out.push(Violation::new("data_id", "positive", "data id must be positive"));
        }
        if self.name.is_empty() {
            out.push(Violation::new("name", "non_empty", "name must not be empty"));
        }
        if self.version == 0 {
            out.push(Violation::new("version", "positive", "version must be at least 1"));
        }
        if self.format != "ARFF" {
            out.push(Violation::new("format", "arff", format!("unsupported format '{}'", self.format)));
        }
        out
    }
}

impl Validate for DataSet {
    fn validate(&self) -> Vec<Violation> {
        let mut out = self.description.validate();
        match self.relation.attribute_index(&self.description.default_target_attribute) {
            None => out.push(Violation::new(
                "default_target_attribute",
                "exists",
                format!("'{}' is not an attribute", self.description.default_target_attribute),
            )),
            Some(idx) if idx != self.target_index => {
                out.push(Violation::new("target_index", "matches_target", "index does not point at the target"))
            }
            Some(idx) if !self.relation.attributes()[idx].is_nominal() => out.push(Violation::new(
                "default_target_attribute",
                "nominal",
                "classification target must be nominal",
            )),
            Some(_) => {}
        }
        out
    }
}

impl Validate for EstimationProcedure {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.folds < 2 {
            out.push(Violation::new("folds", "at_least_two", format!("{} folds", self.folds)));
        }
        if self.repeats < 1 {
            out.push(Violation::new("repeats", "positive", "at least one repeat required"));
        }
        out
    }
}

impl Validate for Task {
    fn validate(&self) -> Vec<Violation> {
        let mut out = self.estimation_procedure.validate();
        if self.task_id.0 == 0 {
            out.push(Violation::new("task_id", "positive", "task id must be positive"));
        }
        let ep = &self.estimation_procedure;
        if self.splits.num_repeats() != ep.repeats as usize {
            out.push(Violation::new(
                "splits",
                "shape",
                format!("{} repeats, procedure declares {}", self.splits.num_repeats(), ep.repeats),
            ));
        }
        let n = self.splits.n_rows;
        for (r, folds) in self.splits.repeats.iter().enumerate() {
            if folds.len() != ep.folds as usize {
                out.push(Violation::new(
                    format!("splits[{r}]"),
                    "shape",
                    format!("{} folds, procedure declares {}", folds.len(), ep.folds),
                ));
            }
            let mut seen = vec![0usize; n];
            let mut out_of_range = BTreeSet::new();
            for fold in folds {
                for &row in &fold.test {
                    match seen.get_mut(row) {
                        Some(c) => *c += 1,
                        None => {
                            out_of_range.insert(row);
                        }
                    }
                }
            }
            let overlaps: Vec<usize> = (0..n).filter(|&i| seen[i] > 1).collect();
            let uncovered: Vec<usize> = (0..n).filter(|&i| seen[i] == 0).collect();
            if !overlaps.is_empty() || !uncovered.is_empty() || !out_of_range.is_empty() {
                let mut parts = Vec::new();
                if !overlaps.is_empty() {
                    parts.push(format!("rows in several test sets: {}", preview(&overlaps)));
                }
                if !uncovered.is_empty() {
                    parts.push(format!("rows in no test set: {}", preview(&uncovered)));
                }
                if !out_of_range.is_empty() {
                    let v: Vec<usize> = out_of_range.into_iter().collect();
                    parts.push(format!("row ids out of range: {}", preview(&v)));
                }
                out.push(Violation::new(format!("splits[{r}]"), "partition", parts.join("; ")));
            }
            for (f, fold) in folds.iter().enumerate() {
                let test: BTreeSet<usize> = fold.test.iter().copied().collect();
                let train: BTreeSet<usize> = fold.train.iter().copied().collect();
                let both: Vec<usize> = test.intersection(&train).copied().collect();
                if !both.is_empty() {
                    out.push(Violation::new(
                        format!("splits[{r}][{f}]"),
                        "disjoint",
                        format!("rows in both train and test: {}", preview(&both)),
                    ));
                }
                let covered = train.union(&test).count();
                if covered != n || train.len() != fold.train.len() || test.len() != fold.test.len() {
                    out.push(Violation::new(
                        format!("splits[{r}][{f}]"),
                        "train_test_cover",
                        format!("train and test cover {covered} distinct rows (with repeats removed) of {n}"),
                    ));
                }
            }
        }
        out
    }
}

fn preview(rows: &[usize]) -> String {
    let shown: Vec<String> = rows.iter().take(5).map(ToString::to_string).collect();
    if rows.len() > 5 {
        format!("{}, ... ({} total)", shown.join(", "), rows.len())
    } else {
        shown.join(", ")
    }
}

impl Validate for Flow {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.name.is_empty() {
            out.push(Violation::new("name", "non_empty", "flow name must not be empty"));
        }
        if self.version == 0 {
            out.push(Violation::new("version", "positive", "version must be at least 1"));
        }
        let mut names = BTreeSet::new();
        for p in &self.parameters {
            if !names.insert(p.name.as_str()) {
                out.push(Violation::new(
                    "parameters",
                    "unique_names",
                    format!("parameter '{}' declared twice", p.name),
                ));
            }
        }
        out
    }
}

/// Index of the largest confidence; ties go to the earliest class.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

impl Validate for Run {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let labels: BTreeSet<&str> = self.class_labels.iter().map(String::as_str).collect();
        if labels.len() != self.class_labels.len() {
            out.push(Violation::new("class_labels", "unique", "class labels repeat"));
        }
        for (i, row) in self.predictions.iter().enumerate() {
            let field = format!("predictions[{i}]");
            if !labels.contains(row.predicted.as_str()) || !labels.contains(row.truth.as_str()) {
                out.push(Violation::new(&field, "known_label", "label not among the run's classes"));
                continue;
            }
            if row.confidences.is_empty() {
                continue;
            }
            if row.confidences.len() != self.class_labels.len() {
                out.push(Violation::new(&field, "confidence_arity", "one confidence per class expected"));
                continue;
            }
            if row.confidences.iter().any(|c| !(*c >= 0.0)) {
                out.push(Violation::new(&field, "confidence_nonnegative", "negative or NaN confidence"));
            }
            let sum: f64 = row.confidences.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                out.push(Violation::new(&field, "confidence_sum", format!("confidences sum to {sum}")));
            }
            let best = argmax_first(&row.confidences).map(|i| self.class_labels[i].as_str());
            if best != Some(row.predicted.as_str()) {
                out.push(Violation::new(&field, "argmax", "prediction is not the most confident class"));
            }
        }
        out
    }
}

impl Run {
    /// Intrinsic checks plus coverage of every test row of `task`, exactly once.
    /// Coverage problems are reported once per `(repeat, fold)` block.
    pub fn validate_against(&self, task: &Task) -> Vec<Violation> {
        let mut out = self.validate();
        if self.task_id != task.task_id {
            out.push(Violation::new("task_id", "matches_task", format!("run is for task {}", self.task_id)));
        }
        let mut blocks: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for row in &self.predictions {
            blocks.entry((row.repeat, row.fold)).or_default().push(row.row_id);
        }
        for (r, f, fold) in task.splits.iter() {
            let field = format!("predictions(repeat={r}, fold={f})");
            match blocks.remove(&(r, f)) {
                None => out.push(Violation::new(field, "coverage", "no predictions for this fold")),
                Some(mut rows) => {
                    rows.sort_unstable();
                    let mut expected = fold.test.clone();
                    expected.sort_unstable();
                    if rows != expected {
                        out.push(Violation::new(
                            field,
                            "coverage",
                            format!("{} predictions for {} test rows, or rows differ", rows.len(), expected.len()),
                        ));
                    }
                }
            }
        }
        let mut extra: Vec<_> = blocks.into_keys().collect();
        extra.sort_unstable();
        for (r, f) in extra {
            out.push(Violation::new(
                format!("predictions(repeat={r}, fold={f})"),
                "coverage",
                "fold does not exist in the task",
            ));
        }
        out
    }
}

impl Validate for BenchmarkResult {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut counts = self.cells.values().map(|c| c.per_fold.len());
        if let Some(first) = counts.next() {
            if counts.any(|c| c != first) {
                out.push(Violation::new("cells", "fold_count", "cells differ in their number of folds"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arff::{Attribute, Value};

    fn procedure(folds: u32) -> EstimationProcedure {
        EstimationProcedure {
            id: 1,
            name: format!("{folds}-fold Crossvalidation"),
            kind: EstimationKind::Crossvalidation,
            folds,
            repeats: 1,
            stratified: true,
        }
    }

    /// Fold f tests rows {i : i % folds == f}.
    fn task(n: usize, folds: u32) -> Task {
        let folds_v: Vec<Fold> = (0..folds as usize)
            .map(|f| Fold {
                test: (0..n).filter(|i| i % folds as usize == f).collect(),
                train: (0..n).filter(|i| i % folds as usize != f).collect(),
            })
            .collect();
        Task {
            task_id: TaskId(37),
            task_type: TaskType::SupervisedClassification,
            data_id: DataId(36),
            data_name: "toy".into(),
            target_feature: "class".into(),
            estimation_procedure: procedure(folds),
            evaluation_measure: "predictive_accuracy".into(),
            tags: BTreeSet::new(),
            splits: Splits { n_rows: n, repeats: vec![folds_v] },
        }
    }

    fn run_for(task: &Task) -> Run {
        let predictions = task
            .splits
            .iter()
            .flat_map(|(r, f, fold)| {
                fold.test.iter().map(move |&row_id| PredictionRow {
                    repeat: r,
                    fold: f,
                    row_id,
                    predicted: "a".into(),
                    truth: if row_id % 3 == 0 { "b".into() } else { "a".into() },
                    confidences: vec![0.5, 0.5],
                })
            })
            .collect();
        Run {
            run_id: RunId(0),
            task_id: task.task_id,
            flow_id: FlowId(1),
            flow_name: "mlr.classif.featureless".into(),
            uploader: UserId(1),
            evaluation_measure: "predictive_accuracy".into(),
            class_labels: vec!["a".into(), "b".into()],
            parameter_settings: vec![],
            seed_settings: vec![SeedSetting { name: "seed".into(), value: "7".into() }],
            evaluations: BTreeMap::new(),
            tags: BTreeSet::new(),
            predictions,
        }
    }

    #[test]
    fn well_formed_run_has_no_violations() {
        let t = task(40, 10);
        assert!(t.validate().is_empty());
        assert_eq!(run_for(&t).validate_against(&t), vec![]);
        assert_eq!(run_for(&t).seed(), Some(7));
    }

    #[test]
    fn missing_fold_block_is_one_violation() {
        let t = task(40, 10);
        let mut run = run_for(&t);
        run.predictions.retain(|p| !(p.repeat == 0 && p.fold == 3));
        let v = run.validate_against(&t);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].rule, "coverage");
        assert!(v[0].field.contains("fold=3"));
    }

    #[test]
    fn overlapping_test_sets_are_one_partition_violation() {
        let mut t = task(40, 10);
        // Row 17 belongs to fold 7; also put it into fold 2's test set.
        let fold2 = &mut t.splits.repeats[0][2];
        fold2.test.push(17);
        fold2.train.retain(|&r| r != 17);
        let v = t.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].rule, "partition");
        assert!(v[0].message.contains("17"));
    }

    #[test]
    fn train_test_overlap_detected() {
        let mut t = task(20, 2);
        t.splits.repeats[0][0].train.push(0);
        let rules: Vec<_> = t.validate().into_iter().map(|v| v.rule).collect();
        assert!(rules.contains(&"disjoint"));
    }

    #[test]
    fn procedure_limits() {
        let mut ep = procedure(1);
        ep.repeats = 0;
        assert_eq!(ep.validate().len(), 2);
    }

    #[test]
    fn confidence_rules() {
        let t = task(10, 2);
        let mut run = run_for(&t);
        run.predictions[0].confidences = vec![0.7, 0.2];
        run.predictions[1].confidences = vec![0.2, 0.8];
        run.predictions[2].confidences = vec![];
        let rules: Vec<_> = run.validate().into_iter().map(|v| v.rule).collect();
        assert_eq!(rules, vec!["confidence_sum", "argmax"]);
    }

    #[test]
    fn argmax_ties_go_to_first() {
        assert_eq!(argmax_first(&[0.5, 0.5]), Some(0));
        assert_eq!(argmax_first(&[0.2, 0.4, 0.4]), Some(1));
        assert_eq!(argmax_first(&[]), None);
    }

    #[test]
    fn flow_parameter_names_unique() {
        let p = FlowParameter { name: "mtry".into(), data_type: "integer".into(), default_value: String::new() };
        let flow = Flow {
            flow_id: FlowId(1),
            name: "x".into(),
            version: 1,
            external_version: "v".into(),
            description: String::new(),
            parameters: vec![p.clone(), p],
            dependencies: vec![],
            uploader: UserId(1),
            tags: BTreeSet::new(),
        };
        assert_eq!(flow.validate().len(), 1);
    }

    #[test]
    fn dataset_target_checks() {
        let mut rel = Relation::new("r", vec![Attribute::numeric("x"), Attribute::nominal("Class", ["a", "b"])]).unwrap();
        rel.push_row(vec![Value::Number(1.0), Value::Nominal(0)]).unwrap();
        let desc = DataSetDescription {
            data_id: DataId(15),
            name: "breast-w".into(),
            version: 1,
            status: DataStatus::Active,
            default_target_attribute: "Class".into(),
            licence: "Public".into(),
            format: "ARFF".into(),
            upload_date: "2014-04-06T23:22:13".into(),
            uploader: UserId(1),
            tags: BTreeSet::new(),
            qualities: BTreeMap::new(),
        };
        let ds = DataSet::new(desc.clone(), rel.clone()).unwrap();
        assert!(ds.validate().is_empty());
        assert_eq!(ds.target_index, 1);
        let mut numeric = desc.clone();
        numeric.default_target_attribute = "x".into();
        assert_eq!(DataSet::new(numeric, rel.clone()).unwrap().validate()[0].rule, "nominal");
        let mut missing = desc;
        missing.default_target_attribute = "nope".into();
        assert_eq!(DataSet::new(missing, rel).unwrap_err(), ModelError::UnknownTarget("nope".into()));
    }

    #[test]
    fn benchmark_missing_cells_flagged() {
        let mut b = BenchmarkResult { measure: "predictive_accuracy".into(), ..Default::default() };
        let cell = BenchmarkCell { per_fold: vec![1.0; 10], aggregate: 1.0 };
        b.cells.insert((TaskId(1), "a".into()), cell.clone());
        b.cells.insert((TaskId(2), "b".into()), cell);
        assert_eq!(b.missing_cells(), vec![(TaskId(1), "b".to_string()), (TaskId(2), "a".to_string())]);
        assert!(b.validate().is_empty());
        b.cells.insert((TaskId(3), "a".into()), BenchmarkCell { per_fold: vec![1.0; 5], aggregate: 1.0 });
        assert_eq!(b.validate().len(), 1);
    }
}
