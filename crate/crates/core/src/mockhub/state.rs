//! In-memory hub: storage plus the request router. Transport-free so it can
//! be driven directly in tests.

use std::collections::{BTreeMap, BTreeSet};
use std::time::SystemTime;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::arff::Relation;
use crate::client::{DataFilter, FilterError, FlowFilter, RunSelector, TaskFilter};
use crate::model::{
    DataId, DataSet, DataSetDescription, DataStatus, EntityKind, EstimationProcedure, Flow, FlowId, Run, RunId, Task,
    TaskId, UserId, Validate,
};
use crate::runner::{compute_data_qualities, evaluate_predictions, run_label};
use crate::wire::{
    self, DataEnvelope, DataSummary, DataUpload, DataUploaded, ErrorBody, EvaluationRow, FlowEnvelope, FlowSummary,
    FlowUploaded, ListBody, MeasureInfo, QualitiesBody, RunEnvelope, RunSummary, RunUploaded, TagRequest,
    TagsResponse, TaskEnvelope, TaskSummary,
};

const MAX_TAG_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct User {
    pub id: UserId,
    pub name: String,
    pub apikey: String,
    pub read_only: bool,
}

/// A data set with its serialized ARFF kept alongside.
#[derive(Debug, Clone)]
pub struct StoredData {
    dataset: DataSet,
    arff: String,
}

impl StoredData {
    pub fn new(dataset: DataSet) -> Self {
        let arff = dataset.relation.to_arff();
        StoredData { dataset, arff }
    }

    pub fn dataset(&self) -> &DataSet {
        &self.dataset
    }

    pub fn description(&self) -> &DataSetDescription {
        &self.dataset.description
    }

    pub fn arff(&self) -> &str {
        &self.arff
    }

    /// Class index of every row; missing targets map to class 0.
    pub fn labels(&self) -> Vec<usize> {
        self.dataset.relation.column(self.dataset.target_index).map(|v| v.as_level().unwrap_or(0)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct StoredRun {
    run: Run,
    predictions_arff: String,
}

impl StoredRun {
    pub fn new(run: Run) -> Self {
        let predictions_arff = wire::predictions_to_arff(&run.predictions, &run.class_labels).to_arff();
        StoredRun { run, predictions_arff }
    }

    pub fn run(&self) -> &Run {
        &self.run
    }
}

#[derive(Debug, Clone)]
pub struct HubRequest {
    pub method: String,
    /// Path below the API prefix, without leading slash, e.g. `data/15`.
    pub path: String,
    pub query: Vec<(String, String)>,
    pub body: String,
}

impl HubRequest {
    pub fn get(path: &str, query: &[(&str, &str)]) -> Self {
        HubRequest {
            method: "GET".into(),
            path: path.into(),
            query: query.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            body: String::new(),
        }
    }

    pub fn post(path: &str, apikey: &str, body: impl Into<String>) -> Self {
        HubRequest {
            method: "POST".into(),
            path: path.into(),
            query: vec![("api_key".into(), apikey.into())],
            body: body.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubResponse {
    pub status: u16,
    pub body: String,
}

impl HubResponse {
    fn json(value: &impl Serialize) -> Self {
        HubResponse { status: 200, body: serde_json::to_string(value).expect("serializable") }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        let body = ErrorBody { code: status, message: message.into() };
        HubResponse { status, body: serde_json::to_string(&body).expect("serializable") }
    }
}

type Reply = Result<HubResponse, HubResponse>;

fn not_found(kind: &str, id: impl std::fmt::Display) -> HubResponse {
    HubResponse::error(404, format!("unknown {kind} {id}"))
}

fn invalid(message: impl Into<String>) -> HubResponse {
    HubResponse::error(412, message)
}

fn bad_filter(e: FilterError) -> HubResponse {
    invalid(e.to_string())
}

fn parse_body<T: DeserializeOwned>(body: &str) -> Result<T, HubResponse> {
    serde_json::from_str(body).map_err(|e| invalid(format!("malformed request body: {e}")))
}

fn list<T: Serialize>(items: Vec<T>) -> Reply {
    Ok(HubResponse::json(&ListBody { items }))
}

#[derive(Debug, Clone)]
pub struct HubState {
    pub users: Vec<User>,
    pub datasets: BTreeMap<DataId, StoredData>,
    pub tasks: BTreeMap<TaskId, Task>,
    pub task_owners: BTreeMap<TaskId, UserId>,
    pub flows: BTreeMap<FlowId, Flow>,
    pub runs: BTreeMap<RunId, StoredRun>,
    pub procedures: Vec<EstimationProcedure>,
    pub measures: Vec<MeasureInfo>,
    /// Who added each tag; only they may remove it.
    pub tag_owners: BTreeMap<(EntityKind, u64, String), UserId>,
    /// Next id per kind. Never decremented, so deleted ids are not reused.
    pub next_ids: BTreeMap<EntityKind, u64>,
}

impl HubState {
    pub fn empty() -> Self {
        HubState {
            users: Vec::new(),
            datasets: BTreeMap::new(),
            tasks: BTreeMap::new(),
            task_owners: BTreeMap::new(),
            flows: BTreeMap::new(),
            runs: BTreeMap::new(),
            procedures: Vec::new(),
            measures: Vec::new(),
            tag_owners: BTreeMap::new(),
            next_ids: EntityKind::ALL.iter().map(|&k| (k, 1)).collect(),
        }
    }

    fn next_id(&mut self, kind: EntityKind) -> u64 {
        let slot = self.next_ids.entry(kind).or_insert(1);
        let id = *slot;
        *slot += 1;
        id
    }

    /// The caller identified by `api_key`, if any. An unknown key is a 401.
    fn caller(&self, query: &[(String, String)]) -> Result<Option<&User>, HubResponse> {
        match query.iter().find(|(k, _)| k == "api_key") {
            None => Ok(None),
            Some((_, key)) => self
                .users
                .iter()
                .find(|u| u.apikey == *key)
                .map(Some)
                .ok_or_else(|| HubResponse::error(401, "unknown API key")),
        }
    }

    fn writer(&self, query: &[(String, String)]) -> Result<UserId, HubResponse> {
        match self.caller(query)? {
            None => Err(HubResponse::error(401, "this operation requires an API key")),
            Some(u) if u.read_only => Err(HubResponse::error(403, "API key is read-only")),
            Some(u) => Ok(u.id),
        }
    }

    pub fn handle(&mut self, req: &HubRequest) -> HubResponse {
        let segments: Vec<&str> = req.path.trim_matches('/').split('/').collect();
        let query: Vec<(String, String)> = req.query.iter().filter(|(k, _)| k != "api_key").cloned().collect();
        let id = |s: &str| s.parse::<u64>().map_err(|_| HubResponse::error(404, format!("no such endpoint: {}", req.path)));
        let out = (|| -> Reply {
            let viewer = self.caller(&req.query)?.map(|u| u.id);
            match (req.method.as_str(), segments.as_slice()) {
                ("GET", ["data", "list"]) => self.list_datasets(&query, viewer),
                ("GET", ["data", "qualities", n]) => self.data_qualities(DataId(id(n)?), viewer),
                ("GET", ["data", n]) => self.get_dataset(DataId(id(n)?), viewer),
                ("POST", ["data"]) => self.upload_dataset(self.writer(&req.query)?, &req.body),
                ("GET", ["task", "list"]) => self.list_tasks(&query),
                ("GET", ["task", n]) => self.get_task(TaskId(id(n)?)),
                ("GET", ["flow", "list"]) => self.list_flows(&query),
                ("GET", ["flow", n]) => self.get_flow(FlowId(id(n)?)),
                ("POST", ["flow"]) => self.upload_flow(self.writer(&req.query)?, &req.body),
                ("GET", ["run", "list"]) => self.list_runs(&query),
                ("GET", ["run", n]) => self.get_run(RunId(id(n)?)),
                ("POST", ["run"]) => self.upload_run(self.writer(&req.query)?, &req.body),
                ("GET", ["evaluation", "list"]) => self.list_evaluations(&query),
                ("GET", ["estimationprocedure", "list"]) => list(self.procedures.clone()),
                ("GET", ["evaluationmeasure", "list"]) => list(self.measures.clone()),
                ("POST", [kind, action @ ("tag" | "untag")]) => {
                    let kind = EntityKind::parse(kind).ok_or_else(|| not_found("endpoint", &req.path))?;
                    let user = self.writer(&req.query)?;
                    let body: TagRequest = parse_body(&req.body)?;
                    if *action == "tag" {
                        self.tag(user, kind, body)
                    } else {
                        self.untag(user, kind, body)
                    }
                }
                ("DELETE", [kind, n]) => {
                    let kind = EntityKind::parse(kind).ok_or_else(|| not_found("endpoint", &req.path))?;
                    self.delete(self.writer(&req.query)?, kind, id(n)?)
                }
                _ => Err(HubResponse::error(404, format!("no such endpoint: {} {}", req.method, req.path))),
            }
        })();
        out.unwrap_or_else(|e| e)
    }

    fn visible(&self, d: &DataSetDescription, viewer: Option<UserId>) -> bool {
        d.status != DataStatus::InPreparation || viewer == Some(d.uploader)
    }

    fn list_datasets(&self, query: &[(String, String)], viewer: Option<UserId>) -> Reply {
        let filter = DataFilter::from_query(query).map_err(bad_filter)?;
        filter.validate().map_err(bad_filter)?;
        let rows: Vec<DataSummary> = self
            .datasets
            .values()
            .map(StoredData::description)
            .filter(|d| self.visible(d, viewer))
            .map(DataSummary::from_description)
            .filter(|d| filter.matches(d))
            .collect();
        list(filter.paging.apply(rows))
    }

    fn stored_data(&self, id: DataId, viewer: Option<UserId>) -> Result<&StoredData, HubResponse> {
        let data = self.datasets.get(&id).ok_or_else(|| not_found("data set", id))?;
        if !self.visible(data.description(), viewer) {
            return Err(invalid(format!("data set {id} is still in preparation")));
        }
        Ok(data)
    }

    fn get_dataset(&self, id: DataId, viewer: Option<UserId>) -> Reply {
        let data = self.stored_data(id, viewer)?;
        Ok(HubResponse::json(&DataEnvelope {
            data_set_description: data.description().clone(),
            data_arff: data.arff().to_string(),
        }))
    }

    fn data_qualities(&self, id: DataId, viewer: Option<UserId>) -> Reply {
        let data = self.stored_data(id, viewer)?;
        Ok(HubResponse::json(&QualitiesBody { data_id: id, qualities: data.description().qualities.clone() }))
    }

    fn upload_dataset(&mut self, user: UserId, body: &str) -> Reply {
        let upload: DataUpload = parse_body(body)?;
        let mut desc = upload.description;
        if desc.name.trim().is_empty() {
            return Err(invalid("data set name must not be empty"));
        }
        if desc.version == 0 {
            desc.version = 1;
        }
        if self.datasets.values().any(|d| d.description().name == desc.name && d.description().version == desc.version) {
            return Err(invalid(format!("data set '{}' version {} already exists", desc.name, desc.version)));
        }
        let relation = Relation::parse(&upload.data_arff).map_err(|e| invalid(format!("invalid ARFF: {e}")))?;
        desc.qualities =
            compute_data_qualities(&relation, &desc.default_target_attribute).map_err(|e| invalid(e.to_string()))?;
        let id = DataId(self.next_id(EntityKind::Dataset));
        desc.data_id = id;
        desc.uploader = user;
        desc.status = DataStatus::Active;
        desc.upload_date = humantime::format_rfc3339_seconds(SystemTime::now()).to_string();
        if desc.format.is_empty() {
            desc.format = "ARFF".into();
        }
        for t in &desc.tags {
            check_tag(t)?;
            self.tag_owners.insert((EntityKind::Dataset, id.0, t.clone()), user);
        }
        let dataset = DataSet::new(desc, relation).map_err(|e| invalid(e.to_string()))?;
        let violations = dataset.validate();
        if !violations.is_empty() {
            return Err(invalid(wire::WireError::Invalid(violations).to_string()));
        }
        self.datasets.insert(id, StoredData::new(dataset));
        Ok(HubResponse::json(&DataUploaded { data_id: id }))
    }

    /// Tasks are listed only while their data set is active.
    fn task_summaries(&self) -> impl Iterator<Item = TaskSummary> + '_ {
        self.tasks.values().filter_map(|t| {
            let d = self.datasets.get(&t.data_id)?.description();
            (d.status == DataStatus::Active).then(|| TaskSummary::new(t, d))
        })
    }

    fn list_tasks(&self, query: &[(String, String)]) -> Reply {
        let filter = TaskFilter::from_query(query).map_err(bad_filter)?;
        filter.validate().map_err(bad_filter)?;
        let rows: Vec<TaskSummary> = self.task_summaries().filter(|t| filter.matches(t)).collect();
        list(filter.paging.apply(rows))
    }

    fn get_task(&self, id: TaskId) -> Reply {
        let task = self.tasks.get(&id).ok_or_else(|| not_found("task", id))?;
        let splits = wire::splits_to_arff(&task.splits).to_arff();
        Ok(HubResponse::json(&TaskEnvelope { task: task.clone(), data_splits_arff: splits }))
    }

    fn list_flows(&self, query: &[(String, String)]) -> Reply {
        let filter = FlowFilter::from_query(query).map_err(bad_filter)?;
        let rows: Vec<FlowSummary> = self.flows.values().map(FlowSummary::from).filter(|f| filter.matches(f)).collect();
        list(filter.paging.apply(rows))
    }

    fn get_flow(&self, id: FlowId) -> Reply {
        let flow = self.flows.get(&id).ok_or_else(|| not_found("flow", id))?;
        Ok(HubResponse::json(&FlowEnvelope { flow: flow.clone() }))
    }

    fn upload_flow(&mut self, user: UserId, body: &str) -> Reply {
        let FlowEnvelope { mut flow } = parse_body(body)?;
        let violations = flow.validate();
        if !violations.is_empty() {
            return Err(invalid(wire::WireError::Invalid(violations).to_string()));
        }
        let same_name = || self.flows.values().filter(|f| f.name == flow.name);
        if let Some(existing) = same_name().find(|f| f.external_version == flow.external_version) {
            return Ok(HubResponse::json(&FlowUploaded {
                flow_id: existing.flow_id,
                version: existing.version,
                already_exists: true,
            }));
        }
        let version = same_name().map(|f| f.version).max().unwrap_or(0) + 1;
        let id = FlowId(self.next_id(EntityKind::Flow));
        flow.flow_id = id;
        flow.version = version;
        flow.uploader = user;
        for t in &flow.tags {
            check_tag(t)?;
            self.tag_owners.insert((EntityKind::Flow, id.0, t.clone()), user);
        }
        self.flows.insert(id, flow);
        Ok(HubResponse::json(&FlowUploaded { flow_id: id, version, already_exists: false }))
    }

    fn list_runs(&self, query: &[(String, String)]) -> Reply {
        let sel = RunSelector::from_query(query).map_err(bad_filter)?;
        let rows: Vec<RunSummary> =
            self.runs.values().map(|r| RunSummary::from(r.run())).filter(|r| sel.matches(r)).collect();
        list(sel.paging.apply(rows))
    }

    fn evaluation_row(&self, run: &Run) -> EvaluationRow {
        let flow = self.flows.get(&run.flow_id);
        EvaluationRow {
            run_id: run.run_id,
            task_id: run.task_id,
            data_name: self.tasks.get(&run.task_id).map(|t| t.data_name.clone()).unwrap_or_default(),
            flow_id: run.flow_id,
            flow_name: run.flow_name.clone(),
            flow_version: flow.map_or(0, |f| f.version),
            uploader: run.uploader,
            learner: run_label(run),
            tags: run.tags.clone(),
            evaluations: run.evaluations.clone(),
        }
    }

    fn list_evaluations(&self, query: &[(String, String)]) -> Reply {
        let sel = RunSelector::from_query(query).map_err(bad_filter)?;
        let rows: Vec<EvaluationRow> =
            self.runs.values().map(|r| self.evaluation_row(r.run())).filter(|e| sel.matches_evaluation(e)).collect();
        list(sel.paging.apply(rows))
    }

    fn get_run(&self, id: RunId) -> Reply {
        let stored = self.runs.get(&id).ok_or_else(|| not_found("run", id))?;
        Ok(HubResponse::json(&RunEnvelope {
            run: stored.run.clone(),
            predictions_arff: stored.predictions_arff.clone(),
        }))
    }

    fn upload_run(&mut self, user: UserId, body: &str) -> Reply {
        let env: RunEnvelope = parse_body(body)?;
        let mut run = wire::run_from_parts(env.run, &env.predictions_arff).map_err(|e| invalid(e.to_string()))?;
        let task = self.tasks.get(&run.task_id).ok_or_else(|| invalid(format!("unknown task {}", run.task_id)))?;
        let flow = self.flows.get(&run.flow_id).ok_or_else(|| invalid(format!("unknown flow {}", run.flow_id)))?;
        if flow.name != run.flow_name {
            return Err(invalid(format!("flow {} is '{}', run names '{}'", flow.flow_id, flow.name, run.flow_name)));
        }
        let data = self.datasets[&task.data_id].dataset();
        let labels = data.class_labels().unwrap_or_default();
        if run.class_labels != labels {
            return Err(invalid(format!("run classes {:?} differ from the task's {:?}", run.class_labels, labels)));
        }
        let violations = run.validate_against(task);
        if !violations.is_empty() {
            return Err(invalid(wire::WireError::Invalid(violations).to_string()));
        }
        let target = data.relation.column(data.target_index).collect::<Vec<_>>();
        for p in &run.predictions {
            let truth = target.get(p.row_id).and_then(|v| v.as_level()).map(|l| labels[l].as_str());
            if truth != Some(p.truth.as_str()) {
                return Err(invalid(format!("row {}: truth '{}' does not match the data", p.row_id, p.truth)));
            }
        }
        run.evaluations = evaluate_predictions(&run.predictions, labels, task).map_err(|e| invalid(e.to_string()))?;
        let id = RunId(self.next_id(EntityKind::Run));
        run.run_id = id;
        run.uploader = user;
        for t in &run.tags {
            check_tag(t)?;
        }
        for t in &run.tags {
            self.tag_owners.insert((EntityKind::Run, id.0, t.clone()), user);
        }
        self.runs.insert(id, StoredRun::new(run));
        Ok(HubResponse::json(&RunUploaded { run_id: id }))
    }

    fn tags_mut(&mut self, kind: EntityKind, id: u64) -> Option<&mut BTreeSet<String>> {
        match kind {
            EntityKind::Dataset => self.datasets.get_mut(&DataId(id)).map(|d| &mut d.dataset.description.tags),
            EntityKind::Task => self.tasks.get_mut(&TaskId(id)).map(|t| &mut t.tags),
            EntityKind::Flow => self.flows.get_mut(&FlowId(id)).map(|f| &mut f.tags),
            EntityKind::Run => self.runs.get_mut(&RunId(id)).map(|r| &mut r.run.tags),
        }
    }

    fn tag(&mut self, user: UserId, kind: EntityKind, req: TagRequest) -> Reply {
        check_tag(&req.tag)?;
        let tags = self.tags_mut(kind, req.id).ok_or_else(|| not_found(kind.endpoint(), req.id))?;
        if tags.insert(req.tag.clone()) {
            self.tag_owners.insert((kind, req.id, req.tag), user);
        }
        let tags = self.tags_mut(kind, req.id).expect("exists").clone();
        Ok(HubResponse::json(&TagsResponse { id: req.id, tags }))
    }

    fn untag(&mut self, user: UserId, kind: EntityKind, req: TagRequest) -> Reply {
        let key = (kind, req.id, req.tag.clone());
        let owner = self.tag_owners.get(&key).copied();
        let tags = self.tags_mut(kind, req.id).ok_or_else(|| not_found(kind.endpoint(), req.id))?;
        if !tags.contains(&req.tag) {
            return Err(not_found("tag", format!("'{}' on {kind} {}", req.tag, req.id)));
        }
        if owner != Some(user) {
            return Err(HubResponse::error(403, format!("tag '{}' was added by another user", req.tag)));
        }
        tags.remove(&req.tag);
        let tags = tags.clone();
        self.tag_owners.remove(&key);
        Ok(HubResponse::json(&TagsResponse { id: req.id, tags }))
    }

    fn delete(&mut self, user: UserId, kind: EntityKind, id: u64) -> Reply {
        let owner = match kind {
            EntityKind::Dataset => self.datasets.get(&DataId(id)).map(|d| d.description().uploader),
            EntityKind::Task => self.tasks.get(&TaskId(id)).map(|_| self.task_owners.get(&TaskId(id)).copied().unwrap_or(UserId(0))),
            EntityKind::Flow => self.flows.get(&FlowId(id)).map(|f| f.uploader),
            EntityKind::Run => self.runs.get(&RunId(id)).map(|r| r.run.uploader),
        }
        .ok_or_else(|| not_found(kind.endpoint(), id))?;
        if owner != user {
            return Err(HubResponse::error(403, format!("{kind} {id} belongs to another user")));
        }
        let dependents = match kind {
            EntityKind::Dataset => self.tasks.values().filter(|t| t.data_id == DataId(id)).count(),
            EntityKind::Task => self.runs.values().filter(|r| r.run.task_id == TaskId(id)).count(),
            EntityKind::Flow => self.runs.values().filter(|r| r.run.flow_id == FlowId(id)).count(),
            EntityKind::Run => 0,
        };
        if dependents > 0 {
            return Err(invalid(format!("{kind} {id} is still used by {dependents} other object(s)")));
        }
        match kind {
            EntityKind::Dataset => drop(self.datasets.remove(&DataId(id))),
            EntityKind::Task => {
                self.tasks.remove(&TaskId(id));
                self.task_owners.remove(&TaskId(id));
            }
            EntityKind::Flow => drop(self.flows.remove(&FlowId(id))),
            EntityKind::Run => drop(self.runs.remove(&RunId(id))),
        }
        self.tag_owners.retain(|(k, i, _), _| !(*k == kind && *i == id));
        Ok(HubResponse::json(&serde_json::json!({ "deleted": id })))
    }
}

fn check_tag(tag: &str) -> Result<(), HubResponse> {
    if tag.is_empty() || tag.len() > MAX_TAG_LEN || tag.chars().any(|c| c.is_whitespace() || c == ';') {
        return Err(invalid(format!("invalid tag '{tag}': 1 to {MAX_TAG_LEN} characters, no whitespace or ';'")));
    }
    Ok(())
}
