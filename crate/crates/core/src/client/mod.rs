//! Blocking HTTP client for the hub, with a cache consulted before every
//! entity download.

mod filter;

pub use filter::{CountRange, DataFilter, FilterError, FlowFilter, Paging, RunSelector, StatusFilter, TaskFilter};

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::arff::Relation;
use crate::cache::{Cache, CacheError, CacheStatus};
use crate::config::Config;
use crate::learners::{LearnerError, LearnerSpec};
use crate::model::{
    DataId, DataSet, DataSetDescription, EntityKind, EstimationProcedure, Flow, FlowId, ParameterSetting, Run, RunId,
    SeedSetting, Task, TaskId,
};
use crate::wire::{
    self, DataEnvelope, DataSummary, DataUpload, DataUploaded, ErrorBody, EvaluationRow, FlowEnvelope, FlowSummary,
    FlowUploaded, ListBody, MeasureInfo, QualitiesBody, RunEnvelope, RunSummary, RunUploaded, TagRequest,
    TagsResponse, TaskEnvelope, TaskSummary, WireError,
};

pub const API_PREFIX: &str = "api/v1/json";
const GET_RETRIES: u32 = 2;
const BODY_LIMIT: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("this operation needs an API key; set one with `config set apikey <key>`")]
    MissingApiKey,
    #[error("transport error talking to {url}: {message}")]
    Transport { url: String, message: String },
    #[error("authentication failed (HTTP 401): {0}")]
    Auth(String),
    #[error("permission denied (HTTP 403): {0}")]
    Permission(String),
    #[error("not found (HTTP 404): {0}")]
    NotFound(String),
    #[error("rejected by the hub (HTTP 412): {0}")]
    Validation(String),
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("cannot decode {what}: {source}")]
    Decode { what: String, source: WireError },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("invalid server URL '{0}'")]
    BadUrl(String),
}

impl ClientError {
    /// HTTP status for errors reported by the hub.
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Auth(_) => Some(401),
            ClientError::Permission(_) => Some(403),
            ClientError::NotFound(_) => Some(404),
            ClientError::Validation(_) => Some(412),
            ClientError::Http { status, .. } => Some(*status),
            _ => None,
        }
    }

    fn from_status(status: u16, body: &str) -> Self {
        let message = serde_json::from_str::<ErrorBody>(body).map(|e| e.message).unwrap_or_else(|_| body.to_string());
        match status {
            401 => ClientError::Auth(message),
            403 => ClientError::Permission(message),
            404 => ClientError::NotFound(message),
            412 => ClientError::Validation(message),
            _ => ClientError::Http { status, message },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Get,
    Post,
    Delete,
}

/// Ids per kind to download in one go.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PopulateRequest {
    pub datasets: Vec<DataId>,
    pub tasks: Vec<TaskId>,
    pub flows: Vec<FlowId>,
    pub runs: Vec<RunId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PopulateReport {
    pub fetched: usize,
    pub already_cached: usize,
}

/// A handle on one hub. Cheap to share across threads by reference.
#[derive(Debug)]
pub struct Client {
    base: url::Url,
    apikey: Option<String>,
    agent: ureq::Agent,
    cache: Cache,
}

impl Client {
    pub fn new(config: &Config) -> Result<Self, ClientError> {
        let mut base = url::Url::parse(&config.server_url).map_err(|_| ClientError::BadUrl(config.server_url.clone()))?;
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        let base = base.join(&format!("{API_PREFIX}/")).map_err(|_| ClientError::BadUrl(config.server_url.clone()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Ok(Client {
            base,
            apikey: config.apikey.as_ref().map(|k| k.as_str().to_string()),
            agent,
            cache: Cache::new(&config.cachedir),
        })
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn has_apikey(&self) -> bool {
        self.apikey.is_some()
    }

    fn url(&self, path: &str) -> String {
        self.base.join(path).map(String::from).unwrap_or_else(|_| format!("{}{path}", self.base))
    }

    fn request(
        &self,
        method: Method,
        path: &str,
        query: &[(String, String)],
        body: Option<String>,
        auth: bool,
    ) -> Result<String, ClientError> {
        if auth && self.apikey.is_none() {
            return Err(ClientError::MissingApiKey);
        }
        let url = self.url(path);
        let mut attempt = 0;
        loop {
            let pairs = query.iter().map(|(k, v)| (k.as_str(), v.as_str()));
            let key = self.apikey.iter().map(|k| ("api_key", k.as_str()));
            let result = match method {
                Method::Get => self.agent.get(&url).query_pairs(pairs.chain(key)).call(),
                Method::Delete => self.agent.delete(&url).query_pairs(pairs.chain(key)).call(),
                Method::Post => self
                    .agent
                    .post(&url)
                    .query_pairs(pairs.chain(key))
                    .header("Content-Type", "application/json")
                    .send(body.clone().unwrap_or_default()),
            };
            match result {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp
                        .body_mut()
                        .with_config()
                        .limit(BODY_LIMIT)
                        .read_to_string()
                        .map_err(|e| ClientError::Transport { url: url.clone(), message: e.to_string() })?;
                    log::debug!("{method:?} {url} -> {status}");
                    return if (200..300).contains(&status) { Ok(text) } else { Err(ClientError::from_status(status, &text)) };
                }
                // Only idempotent reads are retried; a repeated write could duplicate a run.
                Err(e) if method == Method::Get && attempt < GET_RETRIES => {
                    attempt += 1;
                    log::warn!("GET {url} failed ({e}); retry {attempt} of {GET_RETRIES}");
                    thread::sleep(Duration::from_millis(100 << attempt));
                }
                Err(e) => return Err(ClientError::Transport { url, message: e.to_string() }),
            }
        }
    }

    fn get_json<T: DeserializeOwned>(&self, path: &str, query: &[(String, String)]) -> Result<T, ClientError> {
        let text = self.request(Method::Get, path, query, None, false)?;
        serde_json::from_str(&text).map_err(|e| ClientError::Decode { what: path.to_string(), source: e.into() })
    }

    fn post_json<T: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> Result<T, ClientError> {
        let body = serde_json::to_string(body).expect("serializable body");
        let text = self.request(Method::Post, path, &[], Some(body), true)?;
        serde_json::from_str(&text).map_err(|e| ClientError::Decode { what: path.to_string(), source: e.into() })
    }

    fn list<T: DeserializeOwned>(&self, path: &str, query: &[(String, String)]) -> Result<Vec<T>, ClientError> {
        Ok(self.get_json::<ListBody<T>>(path, query)?.items)
    }

    pub fn list_datasets(&self, filter: &DataFilter) -> Result<Vec<DataSummary>, ClientError> {
        filter.validate()?;
        self.list("data/list", &filter.to_query())
    }

    pub fn list_tasks(&self, filter: &TaskFilter) -> Result<Vec<TaskSummary>, ClientError> {
        filter.validate()?;
        self.list("task/list", &filter.to_query())
    }

    pub fn list_flows(&self, filter: &FlowFilter) -> Result<Vec<FlowSummary>, ClientError> {
        self.list("flow/list", &filter.to_query())
    }

    pub fn list_runs(&self, selector: &RunSelector) -> Result<Vec<RunSummary>, ClientError> {
        self.list("run/list", &selector.to_query())
    }

    pub fn list_run_evaluations(&self, selector: &RunSelector) -> Result<Vec<EvaluationRow>, ClientError> {
        self.list("evaluation/list", &selector.to_query())
    }

    pub fn list_estimation_procedures(&self) -> Result<Vec<EstimationProcedure>, ClientError> {
        self.list("estimationprocedure/list", &[])
    }

    pub fn list_evaluation_measures(&self) -> Result<Vec<MeasureInfo>, ClientError> {
        self.list("evaluationmeasure/list", &[])
    }

    pub fn get_data_qualities(&self, id: DataId) -> Result<BTreeMap<String, f64>, ClientError> {
        Ok(self.get_json::<QualitiesBody>(&format!("data/qualities/{id}"), &[])?.qualities)
    }

    fn decode_err(kind: EntityKind, id: u64) -> impl FnOnce(WireError) -> ClientError {
        move |source| ClientError::Decode { what: format!("{kind} {id}"), source }
    }

    /// Downloads a data set unless it is cached.
    pub fn get_dataset(&self, id: DataId) -> Result<DataSet, ClientError> {
        let kind = EntityKind::Dataset;
        if let Some(ds) = self.cache.lookup(kind, id.0, |f| wire::decode_dataset(&f[0], &f[1])) {
            return Ok(ds);
        }
        let env: DataEnvelope = self.get_json(&format!("data/{id}"), &[])?;
        let desc = serde_json::to_string_pretty(&env.data_set_description).expect("serializable");
        let ds = wire::dataset_from_parts(env.data_set_description, &env.data_arff).map_err(Self::decode_err(kind, id.0))?;
        self.cache.store(kind, id.0, &[&desc, &env.data_arff])?;
        Ok(ds)
    }

    /// Downloads a task with its splits unless it is cached.
    pub fn get_task(&self, id: TaskId) -> Result<Task, ClientError> {
        let kind = EntityKind::Task;
        if let Some(t) = self.cache.lookup(kind, id.0, |f| wire::decode_task(&f[0], &f[1])) {
            return Ok(t);
        }
        let env: TaskEnvelope = self.get_json(&format!("task/{id}"), &[])?;
        let json = serde_json::to_string_pretty(&env.task).expect("serializable");
        let task = wire::task_from_parts(env.task, &env.data_splits_arff).map_err(Self::decode_err(kind, id.0))?;
        self.cache.store(kind, id.0, &[&json, &env.data_splits_arff])?;
        Ok(task)
    }

    pub fn get_flow(&self, id: FlowId) -> Result<Flow, ClientError> {
        let kind = EntityKind::Flow;
        if let Some(f) = self.cache.lookup(kind, id.0, |f| wire::decode_flow(&f[0])) {
            return Ok(f);
        }
        let env: FlowEnvelope = self.get_json(&format!("flow/{id}"), &[])?;
        let json = serde_json::to_string_pretty(&env.flow).expect("serializable");
        let flow = wire::decode_flow(&json).map_err(Self::decode_err(kind, id.0))?;
        self.cache.store(kind, id.0, &[&json])?;
        Ok(flow)
    }

    pub fn get_run(&self, id: RunId) -> Result<Run, ClientError> {
        let kind = EntityKind::Run;
        if let Some(r) = self.cache.lookup(kind, id.0, |f| wire::decode_run(&f[0], &f[1])) {
            return Ok(r);
        }
        let env: RunEnvelope = self.get_json(&format!("run/{id}"), &[])?;
        let json = serde_json::to_string_pretty(&env.run).expect("serializable");
        let run = wire::run_from_parts(env.run, &env.predictions_arff).map_err(Self::decode_err(kind, id.0))?;
        self.cache.store(kind, id.0, &[&json, &env.predictions_arff])?;
        Ok(run)
    }

    /// Uploads a data set. `description.data_id` and `uploader` are assigned by the hub.
    pub fn upload_dataset(&self, relation: &Relation, description: &DataSetDescription) -> Result<DataId, ClientError> {
        let body = DataUpload { description: description.clone(), data_arff: relation.to_arff() };
        Ok(self.post_json::<DataUploaded>("data", &body)?.data_id)
    }

    /// Uploads the flow describing `spec`. The hub returns the existing id
    /// when the same name and external version were uploaded before.
    pub fn upload_flow(&self, spec: &LearnerSpec) -> Result<FlowUploaded, ClientError> {
        self.upload_flow_description(&spec.to_flow())
    }

    pub fn upload_flow_description(&self, flow: &Flow) -> Result<FlowUploaded, ClientError> {
        self.post_json("flow", &FlowEnvelope { flow: flow.clone() })
    }

    /// Uploads a run; the hub recomputes its evaluations. Never retried.
    pub fn upload_run(&self, run: &Run) -> Result<RunId, ClientError> {
        let predictions = wire::predictions_to_arff(&run.predictions, &run.class_labels).to_arff();
        let body = RunEnvelope { run: run.clone(), predictions_arff: predictions };
        Ok(self.post_json::<RunUploaded>("run", &body)?.run_id)
    }

    /// Tags an object and returns its tags afterwards. The cached copy, if
    /// any, is dropped because it no longer matches.
    pub fn tag(&self, kind: EntityKind, id: u64, tag: &str) -> Result<TagsResponse, ClientError> {
        let out = self.post_json(&format!("{}/tag", kind.endpoint()), &TagRequest { id, tag: tag.to_string() })?;
        self.cache.remove(kind, id)?;
        Ok(out)
    }

    /// Removes a tag; only the user who added it may do so.
    pub fn untag(&self, kind: EntityKind, id: u64, tag: &str) -> Result<TagsResponse, ClientError> {
        let out = self.post_json(&format!("{}/untag", kind.endpoint()), &TagRequest { id, tag: tag.to_string() })?;
        self.cache.remove(kind, id)?;
        Ok(out)
    }

    /// Deletes an object owned by the caller, also from the cache.
    pub fn delete(&self, kind: EntityKind, id: u64) -> Result<(), ClientError> {
        self.request(Method::Delete, &format!("{}/{id}", kind.endpoint()), &[], None, true)?;
        self.cache.remove(kind, id)?;
        Ok(())
    }

    /// Downloads every requested object that is not cached yet.
    pub fn populate_cache(&self, req: &PopulateRequest) -> Result<PopulateReport, ClientError> {
        let mut report = PopulateReport::default();
        let mut visit = |kind: EntityKind, id: u64, fetch: &dyn Fn() -> Result<(), ClientError>| {
            if self.cache.contains(kind, id) {
                report.already_cached += 1;
                Ok(())
            } else {
                report.fetched += 1;
                fetch()
            }
        };
        for &id in &req.datasets {
            visit(EntityKind::Dataset, id.0, &|| self.get_dataset(id).map(drop))?;
        }
        for &id in &req.tasks {
            visit(EntityKind::Task, id.0, &|| self.get_task(id).map(drop))?;
        }
        for &id in &req.flows {
            visit(EntityKind::Flow, id.0, &|| self.get_flow(id).map(drop))?;
        }
        for &id in &req.runs {
            visit(EntityKind::Run, id.0, &|| self.get_run(id).map(drop))?;
        }
        Ok(report)
    }

    pub fn clear_cache(&self) -> Result<(), ClientError> {
        Ok(self.cache.clear()?)
    }

    pub fn cache_status(&self) -> Result<CacheStatus, ClientError> {
        Ok(self.cache.status()?)
    }
}

/// Turns a flow created by this library back into a runnable learner.
/// Flows from other toolkits are rejected with `UnsupportedFlow`.
pub fn convert_flow_to_learner(flow: &Flow) -> Result<LearnerSpec, LearnerError> {
    LearnerSpec::from_flow(flow)
}

pub fn get_run_parameters(run: &Run) -> &[ParameterSetting] {
    &run.parameter_settings
}

pub fn get_run_seeds(run: &Run) -> &[SeedSetting] {
    &run.seed_settings
}
