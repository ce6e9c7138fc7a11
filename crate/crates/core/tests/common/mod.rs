#![allow(dead_code)]

use std::path::Path;

use openml::client::Client;
use openml::config::{ApiKey, Config};
use openml::mockhub::{fixture, MockHub};
use tempfile::TempDir;

pub struct Env {
    pub hub: MockHub,
    pub home: TempDir,
}

impl Env {
    pub fn new() -> Self {
        Env { hub: MockHub::start().expect("mock hub starts"), home: TempDir::new().expect("temp dir") }
    }

    pub fn config(&self, key: Option<&str>) -> Config {
        config_for(&self.hub.url(), self.home.path(), key)
    }

    /// Client with the test user's key.
    pub fn client(&self) -> Client {
        self.client_with(Some(fixture::TEST_KEY))
    }

    pub fn client_with(&self, key: Option<&str>) -> Client {
        Client::new(&self.config(key)).expect("valid config")
    }
}

pub fn config_for(url: &str, home: &Path, key: Option<&str>) -> Config {
    let mut c = Config::defaults(home);
    c.server_url = url.to_string();
    c.cachedir = home.join("cache");
    c.apikey = key.map(|k| ApiKey::parse(k).expect("valid key"));
    c
}
