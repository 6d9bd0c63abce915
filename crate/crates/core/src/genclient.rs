//! Providers of the predicted target triplet set for a record.
//!
//! The sequence generator itself is external. Providers either read its
//! output (stored or over HTTP) or stand in for it.

use std::fmt;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ExampleRecord;
use crate::factmodel::{EntityLabel, RelationFlag, TripletSet};
use crate::linearizer::{linearize, parse, ParseMode, RejectedSegment};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("record {id}: missing {field}")]
    MissingField { id: String, field: &'static str },
    #[error("record {id}: generation request failed after {attempts} attempts: {message}")]
    Transport {
        id: String,
        attempts: u32,
        message: String,
    },
    #[error("record {id}: bad generation response: {message}")]
    BadResponse { id: String, message: String },
    #[error("oracle-leak provider requires an explicit allow flag")]
    OracleLeakNotAllowed,
    #[error("provider misconfigured: {0}")]
    Config(String),
}

/// Predicted target set plus what was filtered on the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Prediction {
    pub triplets: TripletSet,
    pub rejected: Vec<RejectedSegment>,
    pub sequence: Option<String>,
}

pub trait TargetProvider: Send + Sync {
    fn predict_target(&self, record: &ExampleRecord) -> Result<Prediction, ProviderError>;
}

fn from_sequence(seq: String, mode: ParseMode) -> Prediction {
    let report = parse(&seq, mode);
    Prediction {
        triplets: report.accepted,
        rejected: report.rejected,
        sequence: Some(seq),
    }
}

fn source_of(record: &ExampleRecord) -> Result<TripletSet, ProviderError> {
    record.source_triplets().ok_or_else(|| ProviderError::MissingField {
        id: record.id.clone(),
        field: "findings facts",
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    File,
    Remote,
    CopySource,
    OracleLeak,
    Heuristic,
}

impl ProviderKind {
    pub const ALL: [ProviderKind; 5] = [
        ProviderKind::File,
        ProviderKind::Remote,
        ProviderKind::CopySource,
        ProviderKind::OracleLeak,
        ProviderKind::Heuristic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::File => "file",
            ProviderKind::Remote => "remote",
            ProviderKind::CopySource => "copy-source",
            ProviderKind::OracleLeak => "oracle-leak",
            ProviderKind::Heuristic => "heuristic",
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProviderKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown provider {s:?}"))
    }
}

/// Reads the stored `predicted_sequence` of each record.
#[derive(Debug, Clone, Copy, Default)]
pub struct FileBacked {
    pub mode: ParseMode,
}

impl TargetProvider for FileBacked {
    fn predict_target(&self, record: &ExampleRecord) -> Result<Prediction, ProviderError> {
        let seq = record
            .predicted_sequence
            .clone()
            .ok_or_else(|| ProviderError::MissingField {
                id: record.id.clone(),
                field: "predicted_sequence",
            })?;
        Ok(from_sequence(seq, self.mode))
    }
}

/// Predicts the source facts unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct CopySource;

impl TargetProvider for CopySource {
    fn predict_target(&self, record: &ExampleRecord) -> Result<Prediction, ProviderError> {
        Ok(Prediction {
            triplets: source_of(record)?,
            ..Prediction::default()
        })
    }
}

/// Predicts the gold facts. Only for validating the pipeline.
#[derive(Debug)]
pub struct OracleLeak {
    _gate: (),
}

impl OracleLeak {
    pub fn new(allowed: bool) -> Result<Self, ProviderError> {
        if allowed {
            Ok(Self { _gate: () })
        } else {
            Err(ProviderError::OracleLeakNotAllowed)
        }
    }
}

impl TargetProvider for OracleLeak {
    fn predict_target(&self, record: &ExampleRecord) -> Result<Prediction, ProviderError> {
        let triplets = record.gold_triplets().ok_or_else(|| ProviderError::MissingField {
            id: record.id.clone(),
            field: "impression facts",
        })?;
        Ok(Prediction {
            triplets,
            ..Prediction::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    /// Labels to keep, highest priority first.
    pub label_priority: Vec<EntityLabel>,
    pub max_triplets: usize,
    pub keep_rel_only: bool,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            label_priority: vec![
                EntityLabel::ObsDa,
                EntityLabel::ObsDp,
                EntityLabel::ObsU,
                EntityLabel::AnatDp,
            ],
            max_triplets: 8,
            keep_rel_only: true,
        }
    }
}

/// Rule-based stand-in: filters the source facts.
#[derive(Debug, Clone)]
pub struct Heuristic {
    config: HeuristicConfig,
}

impl Heuristic {
    pub fn new(config: HeuristicConfig) -> Result<Self, ProviderError> {
        if config.max_triplets == 0 {
            return Err(ProviderError::Config("max_triplets must be >= 1".into()));
        }
        Ok(Self { config })
    }

    /// Keeps relation-bearing triplets (if configured) whose label is listed,
    /// takes up to `max_triplets` by label priority, and returns them in
    /// first-appearance order.
    pub fn select(&self, source: &TripletSet) -> TripletSet {
        let cfg = &self.config;
        let mut picked: Vec<(usize, usize)> = source
            .iter()
            .enumerate()
            .filter(|(_, t)| !cfg.keep_rel_only || t.flag() == RelationFlag::Rel)
            .filter_map(|(i, t)| {
                cfg.label_priority
                    .iter()
                    .position(|&l| l == t.label())
                    .map(|p| (p, i))
            })
            .collect();
        picked.sort_unstable();
        picked.truncate(cfg.max_triplets);
        let mut keep: Vec<usize> = picked.into_iter().map(|(_, i)| i).collect();
        keep.sort_unstable();
        let members: Vec<_> = source.iter().collect();
        keep.into_iter().map(|i| members[i].clone()).collect()
    }
}

impl TargetProvider for Heuristic {
    fn predict_target(&self, record: &ExampleRecord) -> Result<Prediction, ProviderError> {
        Ok(Prediction {
            triplets: self.select(&source_of(record)?),
            ..Prediction::default()
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateRequest<'a> {
    pub id: &'a str,
    pub source_sequence: &'a str,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GenerateResponse {
    pub generated_sequence: String,
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL; `/generate` is appended unless already present.
    pub endpoint: String,
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
    pub mode: ParseMode,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            max_in_flight: 4,
            timeout: Duration::from_secs(30),
            retries: 2,
            backoff: Duration::from_millis(200),
            mode: ParseMode::Strict,
        }
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/generate") {
            base.to_string()
        } else {
            format!("{base}/generate")
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    free: Mutex<usize>,
    cv: Condvar,
}

impl InFlight {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut free = self.free.lock().expect("in-flight lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("in-flight lock");
        }
        *free -= 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("in-flight lock") += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Retry(String),
    Fatal(ProviderError),
}

/// Client for an HTTP generation endpoint (`POST /generate`).
pub struct Remote {
    config: RemoteConfig,
    url: String,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl Remote {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        if config.endpoint.trim().is_empty() {
            return Err(ProviderError::Config("remote provider needs an endpoint".into()));
        }
        if config.max_in_flight == 0 {
            return Err(ProviderError::Config("max_in_flight must be >= 1".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Ok(Self {
            url: config.url(),
            in_flight: InFlight::new(config.max_in_flight),
            agent,
            config,
        })
    }

    fn attempt(&self, id: &str, source_sequence: &str) -> Result<String, Attempt> {
        let _slot = self.in_flight.acquire();
        let request = GenerateRequest { id, source_sequence };
        let mut response = match self.agent.post(&self.url).send_json(&request) {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) if (500..600).contains(&code) => {
                return Err(Attempt::Retry(format!("HTTP {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => {
                return Err(Attempt::Fatal(ProviderError::BadResponse {
                    id: id.to_string(),
                    message: format!("HTTP {code}"),
                }))
            }
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        response
            .body_mut()
            .read_json::<GenerateResponse>()
            .map(|r| r.generated_sequence)
            .map_err(|e| {
                Attempt::Fatal(ProviderError::BadResponse {
                    id: id.to_string(),
                    message: e.to_string(),
                })
            })
    }

    /// Sends one request, retrying transport failures and 5xx responses
    /// with exponential backoff.
    pub fn generate(&self, id: &str, source_sequence: &str) -> Result<String, ProviderError> {
        let mut delay = self.config.backoff;
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(id, source_sequence) {
                Ok(seq) => return Ok(seq),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::debug!("record {id}: attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(ProviderError::Transport {
            id: id.to_string(),
            attempts: self.config.retries + 1,
            message: last,
        })
    }
}

impl TargetProvider for Remote {
    fn predict_target(&self, record: &ExampleRecord) -> Result<Prediction, ProviderError> {
        let source = linearize(&source_of(record)?);
        let seq = self.generate(&record.id, &source)?;
        Ok(from_sequence(seq, self.config.mode))
    }
}

/// Everything needed to construct any provider.
#[derive(Debug, Clone)]
pub struct ProviderOptions {
    pub mode: ParseMode,
    pub endpoint: Option<String>,
    pub allow_oracle_leak: bool,
    pub heuristic: HeuristicConfig,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl Default for ProviderOptions {
    fn default() -> Self {
        Self {
            mode: ParseMode::Strict,
            endpoint: None,
            allow_oracle_leak: false,
            heuristic: HeuristicConfig::default(),
            max_in_flight: 4,
            timeout: Duration::from_secs(30),
        }
    }
}

pub fn build_provider(
    kind: ProviderKind,
    options: &ProviderOptions,
) -> Result<Box<dyn TargetProvider>, ProviderError> {
    Ok(match kind {
        ProviderKind::File => Box::new(FileBacked { mode: options.mode }),
        ProviderKind::CopySource => Box::new(CopySource),
        ProviderKind::OracleLeak => Box::new(OracleLeak::new(options.allow_oracle_leak)?),
        ProviderKind::Heuristic => Box::new(Heuristic::new(options.heuristic.clone())?),
        ProviderKind::Remote => {
            let endpoint = options
                .endpoint
                .clone()
                .ok_or_else(|| ProviderError::Config("remote provider needs an endpoint".into()))?;
            let mut config = RemoteConfig::new(endpoint);
            config.mode = options.mode;
            config.max_in_flight = options.max_in_flight;
            config.timeout = options.timeout;
            Box::new(Remote::new(config)?)
        }
    })
}
