use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, BackendKind, CompletionBackend, CompletionRequest};

pub const ENV_API_KEY: &str = "S3AP_API_KEY";
pub const ENV_BASE_URL: &str = "S3AP_BASE_URL";
pub const ENV_CACHE_DIR: &str = "S3AP_CACHE_DIR";

const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

fn default_concurrency() -> usize {
    4
}

fn default_retries() -> u32 {
    3
}

/// Endpoint settings for one hosted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpProfile {
    #[serde(skip)]
    pub name: String,
    /// Model identifier sent in the `model` field.
    pub model: String,
    #[serde(default)]
    pub base_url: Option<String>,
    /// Environment variable holding the key; falls back to `S3AP_API_KEY`.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Reasoning models take no temperature.
    #[serde(default)]
    pub reasoning: bool,
    /// Whether the endpoint accepts a JSON-schema `response_format`.
    #[serde(default)]
    pub constrained_output: bool,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

impl HttpProfile {
    pub fn new(name: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            model: model.into(),
            base_url: None,
            api_key_env: None,
            reasoning: false,
            constrained_output: false,
            max_concurrency: default_concurrency(),
            max_retries: default_retries(),
        }
    }

    fn reasoning(mut self) -> Self {
        self.reasoning = true;
        self
    }

    fn with_base(mut self, url: &str, key_env: &str) -> Self {
        self.base_url = Some(url.to_string());
        self.api_key_env = Some(key_env.to_string());
        self
    }
}

#[derive(Debug, Deserialize)]
struct ProfileFile {
    #[serde(default)]
    profiles: BTreeMap<String, HttpProfile>,
}

/// Named model profiles. The built-in set covers the hosted models used for
/// the published experiments; a TOML file can add or override entries:
///
/// ```toml
/// [profiles.my-model]
/// model = "vendor/model-name"
/// base_url = "https://example.invalid/v1"
/// api_key_env = "VENDOR_KEY"
/// reasoning = false
/// ```
#[derive(Debug, Clone, Default)]
pub struct ProfileSet {
    profiles: BTreeMap<String, HttpProfile>,
}

impl ProfileSet {
    pub fn builtin() -> Self {
        const TOGETHER: &str = "https://api.together.xyz/v1";
        let list = [
            HttpProfile::new("gpt-4o", "gpt-4o-2024-08-06"),
            HttpProfile::new("gpt-4.1", "gpt-4.1-2025-04-14"),
            HttpProfile::new("o1", "o1-2024-12-17").reasoning(),
            HttpProfile::new("o1-mini", "o1-mini-2024-09-12").reasoning(),
            HttpProfile::new("o3", "o3-2025-04-16").reasoning(),
            HttpProfile::new("o3-mini", "o3-mini-2025-01-31").reasoning(),
            HttpProfile::new("r1", "deepseek-ai/DeepSeek-R1")
                .reasoning()
                .with_base(TOGETHER, "TOGETHER_API_KEY"),
            HttpProfile::new("llama-4-maverick", "meta-llama/Llama-4-Maverick-17B-128E-Instruct-FP8")
                .with_base(TOGETHER, "TOGETHER_API_KEY"),
            HttpProfile::new("llama-4-scout", "meta-llama/Llama-4-Scout-17B-16E-Instruct")
                .with_base(TOGETHER, "TOGETHER_API_KEY"),
        ];
        Self {
            profiles: list.into_iter().map(|p| (p.name.clone(), p)).collect(),
        }
    }

    /// Merges profiles from TOML text over `self`.
    pub fn merge_toml(mut self, text: &str) -> Result<Self, String> {
        let file: ProfileFile = toml::from_str(text).map_err(|e| e.to_string())?;
        for (name, mut profile) in file.profiles {
            profile.name = name.clone();
            self.profiles.insert(name, profile);
        }
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&HttpProfile> {
        self.profiles.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct ConcurrencyLimiter {
    capacity: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a ConcurrencyLimiter,
}

impl ConcurrencyLimiter {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.capacity {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().unwrap()
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.limiter.in_flight.lock().unwrap() -= 1;
        self.limiter.freed.notify_one();
    }
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpChatBackend {
    profile: HttpProfile,
    identity: String,
    base_url: String,
    api_key: Option<String>,
    limiter: ConcurrencyLimiter,
    agent: ureq::Agent,
    backoff: Duration,
}

enum Attempt {
    Done(String),
    Retry(BackendError),
    Fail(BackendError),
}

impl HttpChatBackend {
    /// Builds a client, reading the key and base URL from the environment.
    /// A missing key is reported on the first call, before any network
    /// traffic.
    pub fn from_env(profile: HttpProfile) -> Self {
        let key_var = profile.api_key_env.clone().unwrap_or_else(|| ENV_API_KEY.to_string());
        let api_key = std::env::var(&key_var)
            .ok()
            .or_else(|| std::env::var(ENV_API_KEY).ok())
            .filter(|k| !k.trim().is_empty());
        let base_url = std::env::var(ENV_BASE_URL)
            .ok()
            .or_else(|| profile.base_url.clone())
            .unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
        Self::with_settings(profile, base_url, api_key)
    }

    pub fn with_settings(profile: HttpProfile, base_url: impl Into<String>, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(600)))
            .build()
            .into();
        Self {
            identity: format!("http:{}:{}", profile.name, profile.model),
            limiter: ConcurrencyLimiter::new(profile.max_concurrency),
            profile,
            base_url: base_url.into(),
            api_key,
            agent,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn profile(&self) -> &HttpProfile {
        &self.profile
    }

    /// A request addressed to this profile's model.
    pub fn request(&self, prompt: impl Into<String>) -> CompletionRequest {
        CompletionRequest::user(self.profile.model.clone(), prompt)
    }

    /// The JSON body sent for `request`.
    pub fn request_body(&self, request: &CompletionRequest) -> Value {
        let model = if request.model_id.is_empty() {
            self.profile.model.as_str()
        } else {
            request.model_id.as_str()
        };
        let mut body = json!({
            "model": model,
            "messages": request.messages.iter().map(|m| json!({"role": m.role, "content": m.content})).collect::<Vec<_>>(),
        });
        if !self.profile.reasoning {
            if let Some(t) = request.temperature {
                body["temperature"] = json!(t);
            }
        }
        if self.profile.constrained_output {
            if let Some(schema) = &request.constrained_schema {
                body["response_format"] = match serde_json::from_str::<Value>(schema) {
                    Ok(schema) => json!({"type": "json_schema", "json_schema": {"name": "s3ap", "schema": schema}}),
                    Err(_) => json!({"type": "json_object"}),
                };
            }
        }
        body
    }

    fn attempt(&self, url: &str, key: &str, body: &Value) -> Attempt {
        let response = self
            .agent
            .post(url)
            .header("Authorization", format!("Bearer {key}"))
            .header("Content-Type", "application/json")
            .send_json(body);
        let mut response = match response {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match extract_content(&text) {
                Ok(content) => Attempt::Done(content),
                Err(e) => Attempt::Fail(e),
            },
            401 | 403 => Attempt::Fail(BackendError::Auth(format!("HTTP {status}: {}", truncate(&text)))),
            429 => Attempt::Retry(BackendError::RateLimited(truncate(&text))),
            500..=599 => Attempt::Retry(BackendError::Transport(format!("HTTP {status}: {}", truncate(&text)))),
            _ => Attempt::Fail(BackendError::BadResponse(format!("HTTP {status}: {}", truncate(&text)))),
        }
    }
}

fn truncate(text: &str) -> String {
    text.chars().take(300).collect()
}

fn extract_content(text: &str) -> Result<String, BackendError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| BackendError::BadResponse(format!("response is not JSON: {e}")))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| BackendError::BadResponse(format!("no choices[0].message.content in {}", truncate(text))))
}

impl CompletionBackend for HttpChatBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn kind(&self) -> BackendKind {
        BackendKind::HttpChat
    }

    fn supports_constrained_output(&self) -> bool {
        self.profile.constrained_output
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.check()?;
        let key = self.api_key.as_deref().ok_or_else(|| {
            BackendError::Auth(format!(
                "no API key: set {} or {ENV_API_KEY}",
                self.profile.api_key_env.as_deref().unwrap_or(ENV_API_KEY)
            ))
        })?;
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let body = self.request_body(request);
        let _permit = self.limiter.acquire();
        let mut last = BackendError::Transport("no attempt made".into());
        for attempt in 0..=self.profile.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.attempt(&url, key, &body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => last = e,
            }
        }
        Err(last)
    }
}
