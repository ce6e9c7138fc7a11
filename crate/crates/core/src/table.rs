//! Listing rows as aligned text tables and CSV.
//!
//! Tag sets are written as one `;`-separated cell. Evaluation rows keep only
//! the aggregate value of each measure in CSV form.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::str::FromStr;

use thiserror::Error;

use crate::arff::format_number;
use crate::model::{DataStatus, Evaluation};
use crate::runner::{AREA_UNDER_ROC_CURVE, PREDICTIVE_ACCURACY};
use crate::wire::{DataSummary, EvaluationRow, FlowSummary, RunSummary, TaskSummary};

#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("expected columns {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("row {row}, column '{column}': cannot read '{value}'")]
    Cell { row: usize, column: String, value: String },
}

pub trait Tabular: Sized {
    const HEADERS: &'static [&'static str];
    fn cells(&self) -> Vec<String>;
    /// Rebuilds a row from its cells; `Err` carries the index of the bad column.
    fn from_cells(cells: &[&str]) -> Result<Self, usize>;
}

fn tags_cell(tags: &BTreeSet<String>) -> String {
    tags.iter().map(String::as_str).collect::<Vec<_>>().join(";")
}

fn parse_tags(cell: &str) -> BTreeSet<String> {
    cell.split(';').filter(|t| !t.is_empty()).map(str::to_string).collect()
}

fn num<T: FromStr>(cells: &[&str], i: usize) -> Result<T, usize> {
    cells[i].parse().map_err(|_| i)
}

pub fn status_name(s: DataStatus) -> &'static str {
    match s {
        DataStatus::Active => "active",
        DataStatus::Deactivated => "deactivated",
        DataStatus::InPreparation => "in_preparation",
    }
}

pub fn parse_status(text: &str) -> Option<DataStatus> {
    match text {
        "active" => Some(DataStatus::Active),
        "deactivated" => Some(DataStatus::Deactivated),
        "in_preparation" => Some(DataStatus::InPreparation),
        _ => None,
    }
}

impl Tabular for DataSummary {
    const HEADERS: &'static [&'static str] = &[
        "data_id",
        "name",
        "version",
        "status",
        "number_of_instances",
        "number_of_features",
        "number_of_classes",
        "number_of_missing_values",
        "tags",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.data_id.to_string(),
            self.name.clone(),
            self.version.to_string(),
            status_name(self.status).to_string(),
            self.number_of_instances.to_string(),
            self.number_of_features.to_string(),
            self.number_of_classes.to_string(),
            self.number_of_missing_values.to_string(),
            tags_cell(&self.tags),
        ]
    }

    fn from_cells(c: &[&str]) -> Result<Self, usize> {
        Ok(DataSummary {
            data_id: num::<u64>(c, 0)?.into(),
            name: c[1].to_string(),
            version: num(c, 2)?,
            status: parse_status(c[3]).ok_or(3usize)?,
            number_of_instances: num(c, 4)?,
            number_of_features: num(c, 5)?,
            number_of_classes: num(c, 6)?,
            number_of_missing_values: num(c, 7)?,
            tags: parse_tags(c[8]),
        })
    }
}

impl Tabular for TaskSummary {
    const HEADERS: &'static [&'static str] = &[
        "task_id",
        "task_type",
        "data_id",
        "name",
        "number_of_instances",
        "number_of_features",
        "number_of_classes",
        "number_of_missing_values",
        "evaluation_measure",
        "estimation_procedure",
        "tags",
        "data_tags",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.task_id.to_string(),
            self.task_type.clone(),
            self.data_id.to_string(),
            self.name.clone(),
            self.number_of_instances.to_string(),
            self.number_of_features.to_string(),
            self.number_of_classes.to_string(),
            self.number_of_missing_values.to_string(),
            self.evaluation_measure.clone(),
            self.estimation_procedure.clone(),
            tags_cell(&self.tags),
            tags_cell(&self.data_tags),
        ]
    }

    fn from_cells(c: &[&str]) -> Result<Self, usize> {
        Ok(TaskSummary {
            task_id: num::<u64>(c, 0)?.into(),
            task_type: c[1].to_string(),
            data_id: num::<u64>(c, 2)?.into(),
            name: c[3].to_string(),
            number_of_instances: num(c, 4)?,
            number_of_features: num(c, 5)?,
            number_of_classes: num(c, 6)?,
            number_of_missing_values: num(c, 7)?,
            evaluation_measure: c[8].to_string(),
            estimation_procedure: c[9].to_string(),
            tags: parse_tags(c[10]),
            data_tags: parse_tags(c[11]),
        })
    }
}

impl Tabular for FlowSummary {
    const HEADERS: &'static [&'static str] = &["flow_id", "name", "version", "external_version", "uploader", "tags"];

    fn cells(&self) -> Vec<String> {
        vec![
            self.flow_id.to_string(),
            self.name.clone(),
            self.version.to_string(),
            self.external_version.clone(),
            self.uploader.to_string(),
            tags_cell(&self.tags),
        ]
    }

    fn from_cells(c: &[&str]) -> Result<Self, usize> {
        Ok(FlowSummary {
            flow_id: num::<u64>(c, 0)?.into(),
            name: c[1].to_string(),
            version: num(c, 2)?,
            external_version: c[3].to_string(),
            uploader: num::<u64>(c, 4)?.into(),
            tags: parse_tags(c[5]),
        })
    }
}

impl Tabular for RunSummary {
    const HEADERS: &'static [&'static str] = &["run_id", "task_id", "flow_id", "flow_name", "uploader", "tags"];

    fn cells(&self) -> Vec<String> {
        vec![
            self.run_id.to_string(),
            self.task_id.to_string(),
            self.flow_id.to_string(),
            self.flow_name.clone(),
            self.uploader.to_string(),
            tags_cell(&self.tags),
        ]
    }

    fn from_cells(c: &[&str]) -> Result<Self, usize> {
        Ok(RunSummary {
            run_id: num::<u64>(c, 0)?.into(),
            task_id: num::<u64>(c, 1)?.into(),
            flow_id: num::<u64>(c, 2)?.into(),
            flow_name: c[3].to_string(),
            uploader: num::<u64>(c, 4)?.into(),
            tags: parse_tags(c[5]),
        })
    }
}

const EVAL_MEASURES: [&str; 2] = [PREDICTIVE_ACCURACY, AREA_UNDER_ROC_CURVE];

impl Tabular for EvaluationRow {
    const HEADERS: &'static [&'static str] = &[
        "run_id",
        "task_id",
        "data_name",
        "flow_id",
        "flow_name",
        "flow_version",
        "uploader",
        "learner",
        "tags",
        PREDICTIVE_ACCURACY,
        AREA_UNDER_ROC_CURVE,
    ];

    fn cells(&self) -> Vec<String> {
        let mut out = vec![
            self.run_id.to_string(),
            self.task_id.to_string(),
            self.data_name.clone(),
            self.flow_id.to_string(),
            self.flow_name.clone(),
            self.flow_version.to_string(),
            self.uploader.to_string(),
            self.learner.clone(),
            tags_cell(&self.tags),
        ];
        out.extend(EVAL_MEASURES.iter().map(|m| self.value(m).map(format_number).unwrap_or_default()));
        out
    }

    fn from_cells(c: &[&str]) -> Result<Self, usize> {
        let mut evaluations = BTreeMap::new();
        for (i, m) in EVAL_MEASURES.iter().enumerate() {
            let col = 9 + i;
            if !c[col].is_empty() {
                evaluations.insert(m.to_string(), Evaluation { value: num(c, col)?, per_fold: Vec::new() });
            }
        }
        Ok(EvaluationRow {
            run_id: num::<u64>(c, 0)?.into(),
            task_id: num::<u64>(c, 1)?.into(),
            data_name: c[2].to_string(),
            flow_id: num::<u64>(c, 3)?.into(),
            flow_name: c[4].to_string(),
            flow_version: num(c, 5)?,
            uploader: num::<u64>(c, 6)?.into(),
            learner: c[7].to_string(),
            tags: parse_tags(c[8]),
            evaluations,
        })
    }
}

/// Left-aligned text columns separated by two spaces; numbers right-aligned.
pub fn render_table<T: Tabular>(rows: &[T]) -> String {
    let body: Vec<Vec<String>> = rows.iter().map(Tabular::cells).collect();
    let mut widths: Vec<usize> = T::HEADERS.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let numeric: Vec<bool> = (0..widths.len())
        .map(|i| !body.is_empty() && body.iter().all(|r| !r[i].is_empty() && r[i].parse::<f64>().is_ok()))
        .collect();
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if numeric[i] { format!("{c:>w$}", w = widths[i]) } else { format!("{c:<w$}", w = widths[i]) })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(T::HEADERS.to_vec());
    for row in &body {
        out.push('\n');
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out.push('\n');
    out
}

pub fn write_csv<T: Tabular, W: io::Write>(rows: &[T], out: W) -> Result<(), TableError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(T::HEADERS)?;
    for row in rows {
        w.write_record(row.cells())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn to_csv_string<T: Tabular>(rows: &[T]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("cells are UTF-8")
}

pub fn read_csv<T: Tabular, R: io::Read>(input: R) -> Result<Vec<T>, TableError> {
    let mut r = csv::Reader::from_reader(input);
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != T::HEADERS {
        return Err(TableError::Header { expected: T::HEADERS.iter().map(|h| h.to_string()).collect(), found });
    }
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let cells: Vec<&str> = record.iter().collect();
        out.push(T::from_cells(&cells).map_err(|col| TableError::Cell {
            row: i + 1,
            column: T::HEADERS[col].to_string(),
            value: cells[col].to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DataId, FlowId, RunId, TaskId, UserId};

    fn task_row() -> TaskSummary {
        TaskSummary {
            task_id: TaskId(37),
            task_type: "Supervised Classification".into(),
            data_id: DataId(36),
            name: "diabetes".into(),
            number_of_instances: 768,
            number_of_features: 9,
            number_of_classes: 2,
            number_of_missing_values: 0,
            evaluation_measure: PREDICTIVE_ACCURACY.into(),
            estimation_procedure: "10-fold Crossvalidation".into(),
            tags: BTreeSet::new(),
            data_tags: ["uci".to_string(), "a,b".to_string()].into(),
        }
    }

    #[test]
    fn csv_round_trip_tasks() {
        let rows = vec![task_row()];
        let text = to_csv_string(&rows);
        assert!(text.contains("\"a,b;uci\""));
        assert_eq!(read_csv::<TaskSummary, _>(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn csv_round_trip_evaluations_keeps_aggregates() {
        let mut evaluations = BTreeMap::new();
        evaluations.insert(PREDICTIVE_ACCURACY.to_string(), Evaluation { value: 0.1 + 0.2, per_fold: vec![] });
        let row = EvaluationRow {
            run_id: RunId(5),
            task_id: TaskId(37),
            data_name: "diabetes".into(),
            flow_id: FlowId(4782),
            flow_name: "mlr.classif.randomForest".into(),
            flow_version: 17,
            uploader: UserId(348),
            learner: "classif.randomForest(ntree=50)".into(),
            tags: ["study_30".to_string()].into(),
            evaluations,
        };
        let back = read_csv::<EvaluationRow, _>(to_csv_string(&[row.clone()]).as_bytes()).unwrap();
        assert_eq!(back, vec![row]);
    }

    #[test]
    fn bad_cells_and_headers() {
        let err = read_csv::<RunSummary, _>("run_id,task_id,flow_id,flow_name,uploader,tags\nx,1,1,f,1,\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, TableError::Cell { row: 1, ref column, .. } if column == "run_id"));
        assert!(matches!(read_csv::<RunSummary, _>("a,b\n".as_bytes()), Err(TableError::Header { .. })));
    }

    #[test]
    fn table_alignment() {
        let text = render_table(&[task_row()]);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("task_id  task_type"));
        assert_eq!(lines[0].find("name"), lines[1].find("diabetes"));
        assert!(render_table::<FlowSummary>(&[]).starts_with("flow_id  name"));
    }
}
