use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{LlmClient, LlmRequest};
use crate::error::{Error, Result};

fn default_temperature() -> f64 {
    0.0
}

fn default_timeout() -> u64 {
    120
}

/// Settings for an OpenAI-compatible chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpLlmConfig {
    /// Full URL, e.g. `https://api.openai.com/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    /// Environment variable holding the key; used when `api_key` is unset.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

pub struct HttpLlm {
    config: HttpLlmConfig,
    key: Option<String>,
    agent: ureq::Agent,
}

impl HttpLlm {
    pub fn new(config: HttpLlmConfig) -> Result<Self> {
        let key = match (&config.api_key, &config.api_key_env) {
            (Some(k), _) => Some(k.clone()),
            (None, Some(var)) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable {var} is not set"))
            })?),
            (None, None) => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(HttpLlm { config, key, agent })
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let mut call = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = call
            .send(serde_json::to_vec(&body)?.as_slice())
            .map_err(|e| Error::Llm(format!("{}: {e}", self.config.endpoint)))?;
        let status = response.status();
        let reply: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::Llm(format!("bad response body: {e}")))?;
        if !status.is_success() {
            return Err(Error::Llm(format!("HTTP {status}: {reply}")));
        }
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::Llm(format!("response without message content: {reply}")))
    }

    fn model(&self) -> &str {
        &self.config.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::TaskKind;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves one canned HTTP response and returns the raw request body.
    fn serve_once(status: &str, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let status = status.to_string();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            format!("{auth}\n{}", String::from_utf8(buf).unwrap())
        });
        (url, handle)
    }

    fn config(endpoint: String) -> HttpLlmConfig {
        HttpLlmConfig {
            endpoint,
            model: "test-model".into(),
            api_key: Some("sekrit".into()),
            api_key_env: None,
            temperature: 0.0,
            timeout_secs: 10,
        }
    }

    #[test]
    fn posts_chat_completion() {
        let (url, handle) = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"use 25% of RAM"}}]}"#,
        );
        let llm = HttpLlm::new(config(url)).unwrap();
        let req = LlmRequest::new(TaskKind::Elicit, "shared_buffers", 0, "advise".into());
        assert_eq!(llm.complete(&req).unwrap(), "use 25% of RAM");
        let seen = handle.join().unwrap();
        assert!(seen.starts_with("authorization: Bearer sekrit") || seen.starts_with("Authorization: Bearer sekrit"));
        let body: Value = serde_json::from_str(seen.lines().nth(1).unwrap()).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["content"], "advise");
    }

    #[test]
    fn http_error_is_reported() {
        let (url, handle) = serve_once("429 Too Many Requests", r#"{"error":"slow down"}"#);
        let llm = HttpLlm::new(config(url)).unwrap();
        let req = LlmRequest::new(TaskKind::Elicit, "x", 0, "p".into());
        let err = llm.complete(&req).unwrap_err();
        assert!(err.to_string().contains("429"));
        handle.join().unwrap();
    }

    #[test]
    fn missing_key_variable() {
        let mut c = config("http://localhost:1".into());
        c.api_key = None;
        c.api_key_env = Some("KNOBTUNE_TEST_SURELY_UNSET_VAR".into());
        assert!(HttpLlm::new(c).is_err());
    }
}
