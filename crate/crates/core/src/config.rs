//! Client configuration: `<home>/.openml/config` plus per-process overrides.
//!
//! File grammar: one `key = value` per line, `#` starts a comment line,
//! unknown keys are errors.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use thiserror::Error;

/// Overrides the home directory that holds `.openml/`.
pub const HOME_ENV: &str = "OPENML_HOME";
pub const DEFAULT_SERVER: &str = "http://127.0.0.1:8181";
pub const KEYS: [&str; 5] = ["server_url", "apikey", "cachedir", "verbosity", "confirm_upload"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("invalid API key '{0}': expected 32 lowercase hex characters")]
    InvalidApiKey(String),
    #[error("invalid server URL '{0}': expected an absolute http(s) URL")]
    InvalidServerUrl(String),
    #[error("invalid value '{value}' for {key}")]
    InvalidValue { key: String, value: String },
}

#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let ok = text.len() == 32 && text.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if ok {
            Ok(ApiKey(text.to_string()))
        } else {
            Err(ConfigError::InvalidApiKey(text.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

// Keep keys out of logs.
impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ApiKey({}…)", &self.0[..4])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub server_url: String,
    pub apikey: Option<ApiKey>,
    pub cachedir: PathBuf,
    pub verbosity: u8,
    pub confirm_upload: bool,
}

impl Config {
    pub fn defaults(home: &Path) -> Self {
        Config {
            server_url: DEFAULT_SERVER.to_string(),
            apikey: None,
            cachedir: config_dir(home).join("cache"),
            verbosity: 1,
            confirm_upload: false,
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        check_server_url(&self.server_url)?;
        if self.verbosity > 2 {
            return Err(ConfigError::InvalidValue { key: "verbosity".into(), value: self.verbosity.to_string() });
        }
        Ok(())
    }

    pub fn apply(&self, overrides: &ConfigOverrides) -> Result<Config, ConfigError> {
        let mut next = self.clone();
        if let Some(url) = &overrides.server_url {
            next.server_url = url.clone();
        }
        if let Some(key) = &overrides.apikey {
            next.apikey = Some(ApiKey::parse(key)?);
        }
        if let Some(dir) = &overrides.cachedir {
            next.cachedir = dir.clone();
        }
        if let Some(v) = overrides.verbosity {
            next.verbosity = v;
        }
        if let Some(c) = overrides.confirm_upload {
            next.confirm_upload = c;
        }
        next.check()?;
        Ok(next)
    }

    /// File representation; stable byte-for-byte for equal configs.
    pub fn render(&self) -> String {
        let mut out = String::from("# OpenML client configuration\n");
        out.push_str(&format!("server_url = {}\n", self.server_url));
        if let Some(key) = &self.apikey {
            out.push_str(&format!("apikey = {}\n", key.as_str()));
        }
        out.push_str(&format!("cachedir = {}\n", self.cachedir.display()));
        out.push_str(&format!("verbosity = {}\n", self.verbosity));
        out.push_str(&format!("confirm_upload = {}\n", self.confirm_upload));
        out
    }
}

/// Partial update; `None` leaves a field untouched.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigOverrides {
    pub server_url: Option<String>,
    pub apikey: Option<String>,
    pub cachedir: Option<PathBuf>,
    pub verbosity: Option<u8>,
    pub confirm_upload: Option<bool>,
}

impl ConfigOverrides {
    /// Sets one field from its file key and textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let invalid = || ConfigError::InvalidValue { key: key.to_string(), value: value.to_string() };
        match key {
            "server_url" => self.server_url = Some(value.to_string()),
            "apikey" => self.apikey = Some(value.to_string()),
            "cachedir" => self.cachedir = Some(PathBuf::from(value)),
            "verbosity" => self.verbosity = Some(value.parse().map_err(|_| invalid())?),
            "confirm_upload" => self.confirm_upload = Some(parse_bool(value).ok_or_else(invalid)?),
            _ => return Err(ConfigError::UnknownKey { line: 0, key: key.to_string() }),
        }
        Ok(())
    }
}

fn parse_bool(text: &str) -> Option<bool> {
    match text.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn check_server_url(text: &str) -> Result<(), ConfigError> {
    match url::Url::parse(text) {
        Ok(u) if matches!(u.scheme(), "http" | "https") && u.has_host() => Ok(()),
        _ => Err(ConfigError::InvalidServerUrl(text.to_string())),
    }
}

/// `$OPENML_HOME`, falling back to `$HOME`.
pub fn home_dir() -> PathBuf {
    std::env::var_os(HOME_ENV)
        .or_else(|| std::env::var_os("HOME"))
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn config_dir(home: &Path) -> PathBuf {
    home.join(".openml")
}

pub fn config_path(home: &Path) -> PathBuf {
    config_dir(home).join("config")
}

pub fn save_config(cfg: &Config, home: &Path) -> Result<PathBuf, ConfigError> {
    cfg.check()?;
    let dir = config_dir(home);
    fs::create_dir_all(&dir)?;
    let path = config_path(home);
    let tmp = dir.join(".config.tmp");
    fs::write(&tmp, cfg.render())?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn load_config(home: &Path) -> Result<Config, ConfigError> {
    let path = config_path(home);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Config::defaults(home)),
        Err(e) => return Err(e.into()),
    };
    parse_config(&text, home)
}

pub fn parse_config(text: &str, home: &Path) -> Result<Config, ConfigError> {
    let mut overrides = ConfigOverrides::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: line_no,
            message: "expected 'key = value'".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        overrides.set(key, value).map_err(|e| match e {
            ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line: line_no, key },
            ConfigError::InvalidValue { key, value } => ConfigError::Parse {
                line: line_no,
                message: format!("invalid value '{value}' for {key}"),
            },
            other => other,
        })?;
    }
    Config::defaults(home).apply(&overrides)
}

/// Process-wide view of the configuration: file values plus session overrides.
///
/// Readers get an `Arc` snapshot; updates swap the whole snapshot.
#[derive(Debug)]
pub struct ConfigStore {
    home: PathBuf,
    current: RwLock<Arc<Config>>,
}

impl ConfigStore {
    pub fn load(home: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let home = home.into();
        let cfg = load_config(&home)?;
        Ok(ConfigStore { home, current: RwLock::new(Arc::new(cfg)) })
    }

    pub fn from_config(home: impl Into<PathBuf>, cfg: Config) -> Self {
        ConfigStore { home: home.into(), current: RwLock::new(Arc::new(cfg)) }
    }

    pub fn home(&self) -> &Path {
        &self.home
    }

    pub fn get(&self) -> Arc<Config> {
        Arc::clone(&self.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Applies overrides for this process only; the file is not touched.
    /// On error the previous snapshot stays in place.
    pub fn set_session(&self, overrides: &ConfigOverrides) -> Result<Arc<Config>, ConfigError> {
        let mut guard = self.current.write().unwrap_or_else(|e| e.into_inner());
        let next = Arc::new(guard.apply(overrides)?);
        *guard = Arc::clone(&next);
        Ok(next)
    }

    /// Persists the current snapshot (including session overrides).
    pub fn save(&self) -> Result<PathBuf, ConfigError> {
        save_config(&self.get(), &self.home)
    }
}
