mod common;

use std::thread;

use openml::learners::LearnerSpec;
use openml::mockhub::{fixture, MockHub};
use openml::model::{DataId, FlowId, TaskId};

use common::Env;

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn get(url: &str) -> (u16, String) {
    let mut resp = agent().get(url).call().expect("hub answers");
    (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
}

#[test]
fn serves_json_errors_with_matching_codes() {
    let hub = MockHub::start().unwrap();
    let (status, body) = get(&format!("{}/api/v1/json/data/424242", hub.url()));
    assert_eq!(status, 404);
    let err: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(err["code"], 404);
    assert!(err["message"].as_str().unwrap().contains("424242"));

    let (status, _) = get(&format!("{}/elsewhere", hub.url()));
    assert_eq!(status, 404);
    let (status, _) = get(&format!("{}/api/v1/json/task/list?number_of_classes=x", hub.url()));
    assert_eq!(status, 412);
}

#[test]
fn lists_wrap_items() {
    let hub = MockHub::start().unwrap();
    let (status, body) = get(&format!("{}/api/v1/json/task/list?data_tag=uci&limit=3", hub.url()));
    assert_eq!(status, 200);
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["items"].as_array().unwrap().len(), 3);
}

#[test]
fn counts_requests_per_endpoint() {
    let env = Env::new();
    let c = env.client();
    c.get_task(TaskId(37)).unwrap();
    c.get_flow(FlowId(4782)).unwrap();
    assert_eq!(env.hub.count("GET task/{id}"), 1);
    assert_eq!(env.hub.count("GET flow/{id}"), 1);
    let (_, body) = get(&format!("{}/_control/counts", env.hub.url()));
    let counts: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(counts["GET task/{id}"], 1);
    assert!(counts.get("GET _control/counts").is_none());
}

#[test]
fn reset_restores_fixture() {
    let env = Env::new();
    let flow = env.client().upload_flow(&LearnerSpec::majority()).unwrap();
    assert!(env.hub.with_state(|s| s.flows.contains_key(&flow.flow_id)));
    let resp = agent().post(&format!("{}/_control/reset", env.hub.url())).send_empty().unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    assert!(!env.hub.with_state(|s| s.flows.contains_key(&flow.flow_id)));
    assert_eq!(env.hub.request_count(), 0);
    env.client().upload_flow(&LearnerSpec::majority()).unwrap();
    env.hub.reset();
    assert_eq!(env.hub.request_count(), 0);
}

#[test]
fn ids_are_never_reused() {
    let env = Env::new();
    let c = env.client();
    let a = c.upload_flow(&LearnerSpec::majority()).unwrap();
    c.delete(openml::model::EntityKind::Flow, a.flow_id.0).unwrap();
    let b = c.upload_flow(&LearnerSpec::majority()).unwrap();
    assert!(b.flow_id.0 > a.flow_id.0);
}

#[test]
fn concurrent_clients() {
    let env = Env::new();
    let url = env.hub.url();
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let url = url.clone();
            thread::spawn(move || {
                let home = tempfile::tempdir().unwrap();
                let cfg = common::config_for(&url, home.path(), Some(fixture::TEST_KEY));
                let c = openml::client::Client::new(&cfg).unwrap();
                c.get_dataset(DataId(if i % 2 == 0 { 15 } else { 36 })).unwrap().relation.num_rows()
            })
        })
        .collect();
    let rows: Vec<usize> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(rows.iter().all(|&r| r > 0));
    assert_eq!(env.hub.count("GET data/{id}"), 8);
}
