//! HTTP-backed fallback judge speaking the de-facto chat-completions schema.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{FallbackJudge, FallbackOutcome, JudgeError};

/// Prompt template shipped with the repo; `{question}`, `{ground_truth}`,
/// and `{answer}` are substituted per call.
pub const DEFAULT_PROMPT_TEMPLATE: &str =
    include_str!("../../../../assets/prompts/judge_prompt.txt");

pub const API_KEY_ENV: &str = "JUDGE_API_KEY";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_factor")]
    pub backoff_factor: f64,
    /// In-flight request cap for batch judging.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<String>,
}

fn default_timeout_s() -> u64 {
    30
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_base_ms() -> u64 {
    1000
}
fn default_backoff_factor() -> f64 {
    2.0
}
fn default_concurrency() -> usize {
    4
}

impl ClientConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        ClientConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_base_ms(),
            backoff_factor: default_backoff_factor(),
            concurrency: default_concurrency(),
            prompt_template: None,
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

pub struct LlmJudgeClient {
    config: ClientConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl LlmJudgeClient {
    /// Reads the credential from `JUDGE_API_KEY` if present.
    pub fn new(config: ClientConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_s))
            .build();
        LlmJudgeClient { agent, api_key: std::env::var(API_KEY_ENV).ok(), config }
    }

    fn prompt(&self, question: &str, ground_truth: &str, answer: &str) -> String {
        self.config
            .prompt_template
            .as_deref()
            .unwrap_or(DEFAULT_PROMPT_TEMPLATE)
            .replace("{question}", question)
            .replace("{ground_truth}", ground_truth)
            .replace("{answer}", answer)
    }

    fn attempt(&self, body: &str) -> Result<String, (bool, String)> {
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .set("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("authorization", &format!("Bearer {key}"));
        }
        match req.send_string(body) {
            Ok(resp) => resp.into_string().map_err(|e| (true, e.to_string())),
            Err(ureq::Error::Status(code, _)) => {
                let transient = code == 429 || code >= 500;
                Err((transient, format!("http status {code}")))
            }
            Err(ureq::Error::Transport(t)) => Err((true, t.to_string())),
        }
    }
}

impl FallbackJudge for LlmJudgeClient {
    /// Sends one deterministic (temperature 0) chat request and reads the
    /// last digit of the reply; transient failures (timeouts, 429, 5xx) are
    /// retried with exponential backoff.
    fn judge(
        &self,
        question: &str,
        ground_truth: &str,
        answer: &str,
    ) -> Result<FallbackOutcome, JudgeError> {
        let prompt = self.prompt(question, ground_truth, answer);
        let request = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage { role: "user", content: &prompt }],
            temperature: 0.0,
        };
        let body = serde_json::to_string(&request).expect("request serialization");

        let mut attempts = Vec::new();
        let max_attempts = 1 + self.config.max_retries;
        for attempt in 0..max_attempts {
            if attempt > 0 {
                let backoff = self.config.backoff_base_ms as f64
                    * self.config.backoff_factor.powi(attempt as i32 - 1);
                std::thread::sleep(Duration::from_millis(backoff as u64));
            }
            match self.attempt(&body) {
                Ok(text) => {
                    let content = serde_json::from_str::<ChatResponse>(&text)
                        .ok()
                        .and_then(|r| r.choices.into_iter().next())
                        .map(|c| c.message.content)
                        .unwrap_or(text);
                    let digit = content.chars().rev().find(|c| c.is_ascii_digit());
                    return match digit {
                        Some('1') => {
                            attempts.push(format!("attempt {}: ok=1", attempt + 1));
                            Ok(FallbackOutcome { correct: true, attempts })
                        }
                        Some('0') => {
                            attempts.push(format!("attempt {}: ok=0", attempt + 1));
                            Ok(FallbackOutcome { correct: false, attempts })
                        }
                        _ => Err(JudgeError::MalformedReply(content)),
                    };
                }
                Err((transient, message)) => {
                    attempts.push(format!("attempt {}: {message}", attempt + 1));
                    if !transient {
                        return Err(JudgeError::Http(message));
                    }
                }
            }
        }
        Err(JudgeError::ExhaustedRetries {
            attempts: max_attempts,
            last: attempts.last().cloned().unwrap_or_default(),
        })
    }
}
