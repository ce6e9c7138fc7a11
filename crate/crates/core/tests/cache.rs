mod common;

use std::fs;

use openml::model::{DataId, EntityKind, FlowId, RunId, TaskId};

use common::Env;

#[test]
fn every_entity_is_fetched_once() {
    let env = Env::new();
    let c = env.client();
    for _ in 0..3 {
        c.get_dataset(DataId(36)).unwrap();
        c.get_task(TaskId(60)).unwrap();
        c.get_flow(FlowId(4780)).unwrap();
        c.get_run(RunId(1816239)).unwrap();
    }
    for endpoint in ["GET task/{id}", "GET flow/{id}", "GET run/{id}"] {
        assert_eq!(env.hub.count(endpoint), 1, "{endpoint}");
    }
    assert!(env.hub.count("GET data/{id}") <= 1);
}

#[test]
fn cache_survives_a_new_client() {
    let env = Env::new();
    let a = env.client().get_task(TaskId(61)).unwrap();
    let before = env.hub.request_count();
    let b = env.client().get_task(TaskId(61)).unwrap();
    assert_eq!(a, b);
    assert_eq!(env.hub.request_count(), before);
}

#[test]
fn corrupt_entry_is_refetched() {
    let env = Env::new();
    let c = env.client();
    c.get_flow(FlowId(4782)).unwrap();
    let dir = c.cache().entry_dir(EntityKind::Flow, 4782);
    for entry in fs::read_dir(&dir).unwrap() {
        fs::write(entry.unwrap().path(), "not json").unwrap();
    }
    let flow = c.get_flow(FlowId(4782)).unwrap();
    assert_eq!(flow.flow_id, FlowId(4782));
    assert_eq!(env.hub.count("GET flow/{id}"), 2);
    c.get_flow(FlowId(4782)).unwrap();
    assert_eq!(env.hub.count("GET flow/{id}"), 2);
}

#[test]
fn clear_empties_status() {
    let env = Env::new();
    let c = env.client();
    c.get_dataset(DataId(15)).unwrap();
    c.get_flow(FlowId(4782)).unwrap();
    let status = c.cache_status().unwrap();
    assert_eq!(status.ids(EntityKind::Dataset), &[15]);
    assert_eq!(status.ids(EntityKind::Flow), &[4782]);
    c.clear_cache().unwrap();
    assert!(c.cache_status().unwrap().is_empty());
}

#[test]
fn listings_always_hit_the_hub() {
    let env = Env::new();
    let c = env.client();
    c.list_tasks(&Default::default()).unwrap();
    c.list_tasks(&Default::default()).unwrap();
    assert_eq!(env.hub.count("GET task/list"), 2);
}
