use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatTurn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteChatConfig {
    /// API root; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token. Unset means no
    /// Authorization header.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Extra attempts after a transport error, 429 or 5xx.
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
}

impl Default for RemoteChatConfig {
    fn default() -> Self {
        RemoteChatConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "LLM_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 2,
            retry_backoff_ms: 500,
        }
    }
}

/// Chat-completions client. Temperature is always 0.
pub struct RemoteChat {
    config: RemoteChatConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    calls: AtomicU64,
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    messages: &'a [ChatTurn],
    temperature: f64,
}

#[derive(Deserialize)]
struct Response {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl RemoteChat {
    pub fn new(config: RemoteChatConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let agent = crate::sources::http_agent(config.timeout_secs);
        RemoteChat {
            config,
            api_key,
            agent,
            calls: AtomicU64::new(0),
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &Request<'_>) -> std::result::Result<String, Attempt> {
        let mut req = self.agent.post(&self.endpoint());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(Error::backend(
                "llm",
                format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
            )));
        }
        let parsed: Response = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(Error::backend("llm", format!("malformed response: {e}"))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| Attempt::Fatal(Error::backend("llm", "response has no choices")))
    }
}

impl ChatBackend for RemoteChat {
    fn name(&self) -> &str {
        "remote"
    }

    fn chat(&self, turns: &[ChatTurn]) -> Result<String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let body = Request {
            model: &self.config.model,
            messages: turns,
            temperature: 0.0,
        };
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.config.retry_backoff_ms << (attempt - 1)));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("llm request failed (attempt {}): {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(Error::backend(
            "llm",
            format!("giving up after {} attempts: {last}", self.config.max_retries + 1),
        ))
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Role;
    use crate::sources::testserver;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    fn client(base: &str) -> RemoteChat {
        let mut c = RemoteChat::new(RemoteChatConfig {
            base_url: base.into(),
            model: "test-model".into(),
            api_key_env: "COFACT_TEST_UNSET_KEY".into(),
            timeout_secs: 5,
            max_retries: 1,
            retry_backoff_ms: 1,
        });
        c.api_key = Some("k123".into());
        c
    }

    #[test]
    fn sends_chat_completions_request() {
        let server = testserver::serve(|_| (200, r#"{"choices":[{"message":{"role":"assistant","content":"fake"}}]}"#.into()));
        let c = client(&server.base);
        let turns = [ChatTurn::new(Role::System, "sys"), ChatTurn::new(Role::User, "q")];
        assert_eq!(c.chat(&turns).unwrap(), "fake");
        let seen = server.seen.lock().unwrap();
        assert!(seen[0].request_line.starts_with("POST /chat/completions"));
        assert!(seen[0].headers.iter().any(|(k, v)| k == "authorization" && v == "Bearer k123"));
        let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][1]["role"], "user");
        assert_eq!(body["messages"][1]["content"], "q");
    }

    #[test]
    fn retries_server_errors() {
        let hits = Arc::new(AtomicUsize::new(0));
        let h = hits.clone();
        let server = testserver::serve(move |_| {
            if h.fetch_add(1, Ordering::SeqCst) == 0 {
                (503, "{}".into())
            } else {
                (200, r#"{"choices":[{"message":{"content":"real"}}]}"#.into())
            }
        });
        assert_eq!(client(&server.base).chat(&[ChatTurn::new(Role::User, "q")]).unwrap(), "real");
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn gives_up_after_retries() {
        let server = testserver::serve(|_| (500, "{}".into()));
        let err = client(&server.base).chat(&[ChatTurn::new(Role::User, "q")]).unwrap_err();
        assert!(matches!(err, Error::Backend { .. }));
        assert_eq!(server.seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn client_error_is_not_retried() {
        let server = testserver::serve(|_| (401, r#"{"error":"bad key"}"#.into()));
        assert!(client(&server.base).chat(&[ChatTurn::new(Role::User, "q")]).is_err());
        assert_eq!(server.seen.lock().unwrap().len(), 1);
    }
}
