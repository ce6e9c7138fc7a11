//! C interface to the openml client.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns an
//! [`OmlStatus`]; on failure [`oml_last_error_message`] describes the error
//! for the calling thread. Strings returned through `out` parameters are
//! owned by the caller and released with [`oml_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use openml::arff::Relation;
use openml::client::{Client, ClientError, DataFilter, FlowFilter, RunSelector, TaskFilter};
use openml::config::{ApiKey, Config};
use openml::learners::LearnerSpec;
use openml::mockhub::MockHub;
use openml::model::{DataId, EntityKind, FlowId, Run, RunId, TaskId};
use openml::runner::{run_task, PREDICTIVE_ACCURACY};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Transport = 4,
    Unauthorized = 5,
    Forbidden = 6,
    NotFound = 7,
    Rejected = 8,
    Http = 9,
    Decode = 10,
    Learner = 11,
    Io = 12,
    Parse = 13,
    Panic = 14,
}

/// A mock hub serving the bundled fixture on a local port.
pub struct OmlHub(MockHub);
pub struct OmlClient(Client);
/// A locally executed run, not yet uploaded unless `oml_run_upload` succeeded.
pub struct OmlRun(Run);
pub struct OmlRelation(Relation);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(OmlStatus, String);

impl Failure {
    fn new(status: OmlStatus, message: impl Into<String>) -> Self {
        Failure(status, message.into())
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let status = match &e {
            ClientError::Transport { .. } | ClientError::BadUrl(_) => OmlStatus::Transport,
            ClientError::Auth(_) | ClientError::MissingApiKey => OmlStatus::Unauthorized,
            ClientError::Permission(_) => OmlStatus::Forbidden,
            ClientError::NotFound(_) => OmlStatus::NotFound,
            ClientError::Validation(_) => OmlStatus::Rejected,
            ClientError::Http { .. } => OmlStatus::Http,
            ClientError::Decode { .. } => OmlStatus::Decode,
            ClientError::Filter(_) => OmlStatus::InvalidArgument,
            ClientError::Cache(_) => OmlStatus::Io,
            ClientError::Learner(_) => OmlStatus::Learner,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

/// Runs `body`, recording any error or panic for `oml_last_error_message`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> OmlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            OmlStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OmlStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(OmlStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::new(OmlStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(OmlStatus::NullArgument, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(OmlStatus::NullArgument, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    let c = CString::new(value).map_err(|_| Failure::new(OmlStatus::Decode, "string contains NUL"))?;
    put(out, c.into_raw())
}

fn parse_kind(kind: &str) -> Result<EntityKind, Failure> {
    EntityKind::parse(kind).ok_or_else(|| Failure::new(OmlStatus::InvalidArgument, format!("unknown kind '{kind}'")))
}

/// `a=1&b=x` into pairs; empty input gives no pairs.
fn query_pairs(query: &str) -> Vec<(String, String)> {
    url::form_urlencoded::parse(query.as_bytes()).into_owned().collect()
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable")
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn oml_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn oml_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn oml_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Starts a mock hub with the bundled fixture on a free local port.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_hub_start(out: *mut *mut OmlHub) -> OmlStatus {
    guard(|| {
        let hub = MockHub::start().map_err(|e| Failure::new(OmlStatus::Io, e.to_string()))?;
        put(out, Box::into_raw(Box::new(OmlHub(hub))))
    })
}

/// # Safety
/// `hub` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_hub_url(hub: *const OmlHub, out: *mut *mut c_char) -> OmlStatus {
    guard(|| put_string(out, handle(hub, "hub")?.0.url()))
}

/// API requests served so far; 0 for a null handle.
///
/// # Safety
/// `hub` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oml_hub_request_count(hub: *const OmlHub) -> u64 {
    hub.as_ref().map_or(0, |h| h.0.request_count())
}

/// Stops the hub and frees the handle. Null is ignored.
///
/// # Safety
/// `hub` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oml_hub_free(hub: *mut OmlHub) {
    if !hub.is_null() {
        drop(Box::from_raw(hub));
    }
}

/// Creates a client. `apikey` may be null for read-only use.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_client_new(
    server_url: *const c_char,
    apikey: *const c_char,
    cache_dir: *const c_char,
    out: *mut *mut OmlClient,
) -> OmlStatus {
    guard(|| {
        let cache_dir = PathBuf::from(text(cache_dir, "cache_dir")?);
        let mut cfg = Config::defaults(&cache_dir);
        cfg.server_url = text(server_url, "server_url")?.to_string();
        cfg.cachedir = cache_dir;
        cfg.apikey = opt_text(apikey, "apikey")?
            .map(ApiKey::parse)
            .transpose()
            .map_err(|e| Failure::new(OmlStatus::InvalidArgument, e.to_string()))?;
        let client = Client::new(&cfg)?;
        put(out, Box::into_raw(Box::new(OmlClient(client))))
    })
}

/// # Safety
/// `client` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oml_client_free(client: *mut OmlClient) {
    if !client.is_null() {
        drop(Box::from_raw(client));
    }
}

/// Lists `datasets`, `tasks`, `flows`, `runs` or `evals` as a JSON array.
/// `query` uses URL query syntax, e.g. `number_of_classes=2&data_tag=uci`,
/// and may be null.
///
/// # Safety
/// `client` must be live, strings NUL-terminated, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_client_list_json(
    client: *const OmlClient,
    what: *const c_char,
    query: *const c_char,
    out: *mut *mut c_char,
) -> OmlStatus {
    guard(|| {
        let client = &handle(client, "client")?.0;
        let pairs = query_pairs(opt_text(query, "query")?.unwrap_or(""));
        let bad = |e: openml::client::FilterError| Failure::new(OmlStatus::InvalidArgument, e.to_string());
        let json = match text(what, "what")? {
            "datasets" => to_json(&client.list_datasets(&DataFilter::from_query(&pairs).map_err(bad)?)?),
            "tasks" => to_json(&client.list_tasks(&TaskFilter::from_query(&pairs).map_err(bad)?)?),
            "flows" => to_json(&client.list_flows(&FlowFilter::from_query(&pairs).map_err(bad)?)?),
            "runs" => to_json(&client.list_runs(&RunSelector::from_query(&pairs).map_err(bad)?)?),
            "evals" => to_json(&client.list_run_evaluations(&RunSelector::from_query(&pairs).map_err(bad)?)?),
            other => return Err(Failure::new(OmlStatus::InvalidArgument, format!("cannot list '{other}'"))),
        };
        put_string(out, json)
    })
}

/// Downloads (or reads from cache) one object and returns its JSON description.
/// For data sets this is the description without the data; see
/// `oml_client_get_dataset_arff`.
///
/// # Safety
/// `client` must be live, `kind` NUL-terminated, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_client_get_json(
    client: *const OmlClient,
    kind: *const c_char,
    id: u64,
    out: *mut *mut c_char,
) -> OmlStatus {
    guard(|| {
        let client = &handle(client, "client")?.0;
        let json = match parse_kind(text(kind, "kind")?)? {
            EntityKind::Dataset => to_json(&client.get_dataset(DataId(id))?.description),
            EntityKind::Task => to_json(&client.get_task(TaskId(id))?),
            EntityKind::Flow => to_json(&client.get_flow(FlowId(id))?),
            EntityKind::Run => to_json(&client.get_run(RunId(id))?),
        };
        put_string(out, json)
    })
}

/// # Safety
/// `client` must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_client_get_dataset_arff(client: *const OmlClient, id: u64, out: *mut *mut c_char) -> OmlStatus {
    guard(|| {
        let ds = handle(client, "client")?.0.get_dataset(DataId(id))?;
        put_string(out, ds.relation.to_arff())
    })
}

/// Adds (`add` nonzero) or removes a tag.
///
/// # Safety
/// `client` must be live and strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn oml_client_tag(
    client: *const OmlClient,
    kind: *const c_char,
    id: u64,
    tag: *const c_char,
    add: i32,
) -> OmlStatus {
    guard(|| {
        let client = &handle(client, "client")?.0;
        let kind = parse_kind(text(kind, "kind")?)?;
        let tag = text(tag, "tag")?;
        if add != 0 {
            client.tag(kind, id, tag)?;
        } else {
            client.untag(kind, id, tag)?;
        }
        Ok(())
    })
}

/// Runs a learner (`tree`, `bagged-tree`, `forest`, `majority`) on a task.
/// `params` is null or a comma-separated `name=value` list.
///
/// # Safety
/// `client` must be live, strings NUL-terminated, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_run_task(
    client: *const OmlClient,
    task_id: u64,
    learner: *const c_char,
    params: *const c_char,
    seed: u64,
    out: *mut *mut OmlRun,
) -> OmlStatus {
    guard(|| {
        let client = &handle(client, "client")?.0;
        let learner_err = |e: openml::learners::LearnerError| Failure::new(OmlStatus::Learner, e.to_string());
        let mut spec = LearnerSpec::by_name(text(learner, "learner")?).map_err(learner_err)?;
        for pair in opt_text(params, "params")?.unwrap_or("").split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Failure::new(OmlStatus::InvalidArgument, format!("expected name=value, got '{pair}'")))?;
            spec.set_str(k.trim(), v.trim()).map_err(learner_err)?;
        }
        let task = client.get_task(TaskId(task_id))?;
        let data = client.get_dataset(task.data_id)?;
        let run = run_task(&task, &data, &spec, seed).map_err(|e| Failure::new(OmlStatus::Learner, e.to_string()))?;
        put(out, Box::into_raw(Box::new(OmlRun(run))))
    })
}

/// Mean predictive accuracy over the task's folds.
///
/// # Safety
/// `run` must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_run_accuracy(run: *const OmlRun, out: *mut f64) -> OmlStatus {
    guard(|| {
        let acc = handle(run, "run")?
            .0
            .aggregate(PREDICTIVE_ACCURACY)
            .ok_or_else(|| Failure::new(OmlStatus::Decode, "run has no accuracy"))?;
        put(out, acc)
    })
}

/// The run (predictions excluded) as JSON.
///
/// # Safety
/// `run` must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_run_json(run: *const OmlRun, out: *mut *mut c_char) -> OmlStatus {
    guard(|| put_string(out, to_json(&handle(run, "run")?.0)))
}

/// Uploads the learner's flow and the run, optionally tagged; writes the
/// new run id to `out_run_id`.
///
/// # Safety
/// Handles must be live, `tag` null or NUL-terminated, `out_run_id` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_run_upload(
    client: *const OmlClient,
    run: *mut OmlRun,
    tag: *const c_char,
    out_run_id: *mut u64,
) -> OmlStatus {
    guard(|| {
        let client = &handle(client, "client")?.0;
        let run = &mut run.as_mut().ok_or_else(|| Failure::new(OmlStatus::NullArgument, "run is null"))?.0;
        let spec = learner_of(run)?;
        run.flow_id = client.upload_flow(&spec)?.flow_id;
        if let Some(tag) = opt_text(tag, "tag")? {
            run.tags.insert(tag.to_string());
        }
        run.run_id = client.upload_run(run)?;
        put(out_run_id, run.run_id.0)
    })
}

/// Rebuilds the learner from the run's recorded flow name and explicit settings.
fn learner_of(run: &Run) -> Result<LearnerSpec, Failure> {
    let err = |e: openml::learners::LearnerError| Failure::new(OmlStatus::Learner, e.to_string());
    let mut spec = LearnerSpec::by_name(&run.flow_name).map_err(err)?;
    for p in run.parameter_settings.iter().filter(|p| !p.defaulted) {
        spec.set_str(&p.name, &p.value).map_err(err)?;
    }
    Ok(spec)
}

/// # Safety
/// `run` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oml_run_free(run: *mut OmlRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Parses ARFF text.
///
/// # Safety
/// `arff` must be NUL-terminated and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_arff_parse(arff: *const c_char, out: *mut *mut OmlRelation) -> OmlStatus {
    guard(|| {
        let rel = Relation::parse(text(arff, "arff")?).map_err(|e| Failure::new(OmlStatus::Parse, e.to_string()))?;
        put(out, Box::into_raw(Box::new(OmlRelation(rel))))
    })
}

/// # Safety
/// `rel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oml_relation_num_rows(rel: *const OmlRelation) -> usize {
    rel.as_ref().map_or(0, |r| r.0.num_rows())
}

/// # Safety
/// `rel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oml_relation_num_attributes(rel: *const OmlRelation) -> usize {
    rel.as_ref().map_or(0, |r| r.0.num_attributes())
}

/// Writes the relation back to ARFF.
///
/// # Safety
/// `rel` must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oml_relation_to_arff(rel: *const OmlRelation, out: *mut *mut c_char) -> OmlStatus {
    guard(|| put_string(out, handle(rel, "relation")?.0.to_arff()))
}

/// # Safety
/// `rel` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oml_relation_free(rel: *mut OmlRelation) {
    if !rel.is_null() {
        drop(Box::from_raw(rel));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn null_arguments_are_reported() {
        let status = unsafe { oml_arff_parse(ptr::null(), ptr::null_mut()) };
        assert_eq!(status, OmlStatus::NullArgument);
        let msg = unsafe { CStr::from_ptr(oml_last_error_message()) }.to_str().unwrap();
        assert!(msg.contains("arff is null"), "{msg}");
    }

    #[test]
    fn query_strings_decode() {
        assert_eq!(query_pairs("a=1&b=x%20y"), vec![("a".into(), "1".into()), ("b".into(), "x y".into())]);
        assert!(query_pairs("").is_empty());
    }
}
