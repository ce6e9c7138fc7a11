//! Listing filters and their query-string encoding.
//!
//! The same types are decoded by the mock hub, so `matches` is the single
//! definition of what a filter selects.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{DataStatus, FlowId, TaskId, UserId};
use crate::table::{parse_status, status_name};
use crate::wire::{DataSummary, EvaluationRow, FlowSummary, RunSummary, TaskSummary};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("invalid range for {field}: {lo} > {hi}")]
    EmptyRange { field: String, lo: u64, hi: u64 },
    #[error("cannot read '{value}' for {field}: {reason}")]
    BadValue { field: String, value: String, reason: String },
    #[error("unknown filter '{0}'")]
    UnknownField(String),
}

fn bad(field: &str, value: &str, reason: &str) -> FilterError {
    FilterError::BadValue { field: field.into(), value: value.into(), reason: reason.into() }
}

/// A count predicate: an exact value or an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountRange {
    Exact(u64),
    Between(u64, u64),
}

impl CountRange {
    pub fn contains(self, v: u64) -> bool {
        match self {
            CountRange::Exact(x) => v == x,
            CountRange::Between(lo, hi) => lo <= v && v <= hi,
        }
    }

    pub fn check(self, field: &str) -> Result<(), FilterError> {
        match self {
            CountRange::Between(lo, hi) if lo > hi => Err(FilterError::EmptyRange { field: field.into(), lo, hi }),
            _ => Ok(()),
        }
    }

    fn parse_field(field: &str, text: &str) -> Result<Self, FilterError> {
        let r: CountRange = text.parse().map_err(|e: String| bad(field, text, &e))?;
        r.check(field)?;
        Ok(r)
    }
}

impl fmt::Display for CountRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountRange::Exact(x) => write!(f, "{x}"),
            CountRange::Between(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

impl FromStr for CountRange {
    type Err = String;

    /// `n` or `lo..hi`.
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("'{t}' is not a non-negative integer"));
        match s.split_once("..") {
            Some((lo, hi)) => Ok(CountRange::Between(num(lo)?, num(hi)?)),
            None => Ok(CountRange::Exact(num(s)?)),
        }
    }
}

fn matches_range(r: Option<CountRange>, v: u64) -> bool {
    r.is_none_or(|r| r.contains(v))
}

fn matches_tag(wanted: &Option<String>, tags: &std::collections::BTreeSet<String>) -> bool {
    wanted.as_ref().is_none_or(|t| tags.contains(t))
}

/// Normalizes task type spellings such as `Supervised Classification` and
/// `SupervisedClassification`.
fn type_key(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Paging {
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

impl Paging {
    pub fn apply<T>(&self, rows: Vec<T>) -> Vec<T> {
        let rows = rows.into_iter().skip(self.offset.unwrap_or(0));
        match self.limit {
            Some(n) => rows.take(n).collect(),
            None => rows.collect(),
        }
    }

    fn push(&self, q: &mut Vec<(String, String)>) {
        if let Some(l) = self.limit {
            q.push(("limit".into(), l.to_string()));
        }
        if let Some(o) = self.offset {
            q.push(("offset".into(), o.to_string()));
        }
    }

    fn take(&mut self, key: &str, value: &str) -> Result<bool, FilterError> {
        let slot = match key {
            "limit" => &mut self.limit,
            "offset" => &mut self.offset,
            _ => return Ok(false),
        };
        *slot = Some(value.parse().map_err(|_| bad(key, value, "expected a non-negative integer"))?);
        Ok(true)
    }
}

fn push_opt<T: fmt::Display>(q: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        q.push((key.to_string(), v.to_string()));
    }
}

fn parse_id<T: From<u64>>(key: &str, value: &str) -> Result<T, FilterError> {
    value.parse::<u64>().map(T::from).map_err(|_| bad(key, value, "expected an id"))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaskFilter {
    pub task_type: Option<String>,
    pub number_of_classes: Option<CountRange>,
    pub number_of_instances: Option<CountRange>,
    pub number_of_features: Option<CountRange>,
    pub number_of_missing_values: Option<CountRange>,
    pub data_tag: Option<String>,
    pub tag: Option<String>,
    pub estimation_procedure: Option<String>,
    pub paging: Paging,
}

impl TaskFilter {
    fn ranges(&self) -> [(&'static str, Option<CountRange>); 4] {
        [
            ("number_of_classes", self.number_of_classes),
            ("number_of_instances", self.number_of_instances),
            ("number_of_features", self.number_of_features),
            ("number_of_missing_values", self.number_of_missing_values),
        ]
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        self.ranges().iter().try_for_each(|(name, r)| r.map_or(Ok(()), |r| r.check(name)))
    }

    pub fn to_query(&self) -> Vec<(String, String)> {
        let mut q = Vec::new();
        push_opt(&mut q, "task_type", &self.task_type);
        for (name, r) in self.ranges() {
            push_opt(&mut q, name, &r);
        }
        push_opt(&mut q, "data_tag", &self.data_tag);
        push_opt(&mut q, "tag", &self.tag);
        push_opt(&mut q, "estimation_procedure", &self.estimation_procedure);
        self.paging.push(&mut q);
        q
    }

    pub fn from_query(pairs: &[(String, String)]) -> Result<Self, FilterError> {
        let mut f = TaskFilter::default();
        for (k, v) in pairs {
            match k.as_str() {
                "task_type" => f.task_type = Some(v.clone()),
                "number_of_classes" => f.number_of_classes = Some(CountRange::parse_field(k, v)?),
                "number_of_instances" => f.number_of_instances = Some(CountRange::parse_field(k, v)?),
                "number_of_features" => f.number_of_features = Some(CountRange::parse_field(k, v)?),
                "number_of_missing_values" => f.number_of_missing_values = Some(CountRange::parse_field(k, v)?),
                "data_tag" => f.data_tag = Some(v.clone()),
                "tag" => f.tag = Some(v.clone()),
                "estimation_procedure" => f.estimation_procedure = Some(v.clone()),
                _ if f.paging.take(k, v)? => {}
                _ => return Err(FilterError::UnknownField(k.clone())),
            }
        }
        Ok(f)
    }

    /// Whether a row passes every predicate (paging aside).
    pub fn matches(&self, t: &TaskSummary) -> bool {
        self.task_type.as_ref().is_none_or(|ty| type_key(ty) == type_key(&t.task_type))
            && matches_range(self.number_of_classes, t.number_of_classes)
            && matches_range(self.number_of_instances, t.number_of_instances)
            && matches_range(self.number_of_features, t.number_of_features)
            && matches_range(self.number_of_missing_values, t.number_of_missing_values)
            && matches_tag(&self.data_tag, &t.data_tags)
            && matches_tag(&self.tag, &t.tags)
            && self.estimation_procedure.as_ref().is_none_or(|ep| *ep == t.estimation_procedure)
    }
}

/// Which data set statuses a listing includes. Active only by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StatusFilter {
    #[default]
    Active,
    Only(DataStatus),
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DataFilter {
    pub tag: Option<String>,
    pub name: Option<String>,
    pub status: StatusFilter,
    pub number_of_classes: Option<CountRange>,
    pub number_of_instances: Option<CountRange>,
    pub number_of_features: Option<CountRange>,
    pub number_of_missing_values: Option<CountRange>,
    pub paging: Paging,
}

impl DataFilter {
    fn ranges(&self) -> [(&'static str, Option<CountRange>); 4] {
        [
            ("number_of_classes", self.number_of_classes),
            ("number_of_instances", self.number_of_instances),
            ("number_of_features", self.number_of_features),
            ("number_of_missing_values", self.number_of_missing_values),
        ]
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        self.ranges().iter().try_for_each(|(name, r)| r.map_or(Ok(()), |r| r.check(name)))
    }

    pub fn to_query(&self) -> Vec<(String, String)> {
        let mut q = Vec::new();
        push_opt(&mut q, "tag", &self.tag);
        push_opt(&mut q, "name", &self.name);
        match self.status {
            StatusFilter::Active => {}
            StatusFilter::All => q.push(("status".into(), "all".into())),
            StatusFilter::Only(s) => {
                q.push(("status".into(), status_name(s).into()));
            }
        }
        for (name, r) in self.ranges() {
            push_opt(&mut q, name, &r);
        }
        self.paging.push(&mut q);
        q
    }

    pub fn from_query(pairs: &[(String, String)]) -> Result<Self, FilterError> {
        let mut f = DataFilter::default();
        for (k, v) in pairs {
            match k.as_str() {
                "tag" => f.tag = Some(v.clone()),
                "name" => f.name = Some(v.clone()),
                "status" => {
                    f.status = match v.as_str() {
                        "all" => StatusFilter::All,
                        s => StatusFilter::Only(parse_status(s).ok_or_else(|| bad(k, v, "unknown status"))?),
                    }
                }
                "number_of_classes" => f.number_of_classes = Some(CountRange::parse_field(k, v)?),
                "number_of_instances" => f.number_of_instances = Some(CountRange::parse_field(k, v)?),
                "number_of_features" => f.number_of_features = Some(CountRange::parse_field(k, v)?),
                "number_of_missing_values" => f.number_of_missing_values = Some(CountRange::parse_field(k, v)?),
                _ if f.paging.take(k, v)? => {}
                _ => return Err(FilterError::UnknownField(k.clone())),
            }
        }
        Ok(f)
    }

    pub fn matches(&self, d: &DataSummary) -> bool {
        let status_ok = match self.status {
            StatusFilter::Active => d.status == DataStatus::Active,
            StatusFilter::Only(s) => d.status == s,
            StatusFilter::All => true,
        };
        status_ok
            && matches_tag(&self.tag, &d.tags)
            && self.name.as_ref().is_none_or(|n| *n == d.name)
            && matches_range(self.number_of_classes, d.number_of_classes)
            && matches_range(self.number_of_instances, d.number_of_instances)
            && matches_range(self.number_of_features, d.number_of_features)
            && matches_range(self.number_of_missing_values, d.number_of_missing_values)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlowFilter {
    pub tag: Option<String>,
    pub name: Option<String>,
    pub uploader: Option<UserId>,
    pub paging: Paging,
}

impl FlowFilter {
    pub fn to_query(&self) -> Vec<(String, String)> {
        let mut q = Vec::new();
        push_opt(&mut q, "tag", &self.tag);
        push_opt(&mut q, "name", &self.name);
        push_opt(&mut q, "uploader", &self.uploader);
        self.paging.push(&mut q);
        q
    }

    pub fn from_query(pairs: &[(String, String)]) -> Result<Self, FilterError> {
        let mut f = FlowFilter::default();
        for (k, v) in pairs {
            match k.as_str() {
                "tag" => f.tag = Some(v.clone()),
                "name" => f.name = Some(v.clone()),
                "uploader" => f.uploader = Some(parse_id(k, v)?),
                _ if f.paging.take(k, v)? => {}
                _ => return Err(FilterError::UnknownField(k.clone())),
            }
        }
        Ok(f)
    }

    pub fn matches(&self, f: &FlowSummary) -> bool {
        matches_tag(&self.tag, &f.tags)
            && self.name.as_ref().is_none_or(|n| *n == f.name)
            && self.uploader.is_none_or(|u| u == f.uploader)
    }
}

/// Selects runs (and their evaluations) by task, flow, uploader and tag.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunSelector {
    pub task: Option<TaskId>,
    pub flow: Option<FlowId>,
    pub uploader: Option<UserId>,
    pub tag: Option<String>,
    pub paging: Paging,
}

impl RunSelector {
    pub fn to_query(&self) -> Vec<(String, String)> {
        let mut q = Vec::new();
        push_opt(&mut q, "task", &self.task);
        push_opt(&mut q, "flow", &self.flow);
        push_opt(&mut q, "uploader", &self.uploader);
        push_opt(&mut q, "tag", &self.tag);
        self.paging.push(&mut q);
        q
    }

    pub fn from_query(pairs: &[(String, String)]) -> Result<Self, FilterError> {
        let mut f = RunSelector::default();
        for (k, v) in pairs {
            match k.as_str() {
                "task" => f.task = Some(parse_id(k, v)?),
                "flow" => f.flow = Some(parse_id(k, v)?),
                "uploader" => f.uploader = Some(parse_id(k, v)?),
                "tag" => f.tag = Some(v.clone()),
                _ if f.paging.take(k, v)? => {}
                _ => return Err(FilterError::UnknownField(k.clone())),
            }
        }
        Ok(f)
    }

    pub fn matches(&self, r: &RunSummary) -> bool {
        self.task.is_none_or(|t| t == r.task_id)
            && self.flow.is_none_or(|f| f == r.flow_id)
            && self.uploader.is_none_or(|u| u == r.uploader)
            && matches_tag(&self.tag, &r.tags)
    }

    pub fn matches_evaluation(&self, e: &EvaluationRow) -> bool {
        self.task.is_none_or(|t| t == e.task_id)
            && self.flow.is_none_or(|f| f == e.flow_id)
            && self.uploader.is_none_or(|u| u == e.uploader)
            && matches_tag(&self.tag, &e.tags)
    }
}
