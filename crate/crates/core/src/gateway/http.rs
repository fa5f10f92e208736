use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendKind, CompletionBackend, CompletionRequest, GatewayError};

/// Wire dialect spoken to the completion server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HttpFlavor {
    /// `POST /api/generate` with `{model, prompt, stream: false, options}`.
    Ollama,
    /// `POST /v1/chat/completions` with a single user message.
    OpenAi,
}

impl HttpFlavor {
    pub fn default_path(self) -> &'static str {
        match self {
            HttpFlavor::Ollama => "/api/generate",
            HttpFlavor::OpenAi => "/v1/chat/completions",
        }
    }
}

pub struct HttpBackend {
    flavor: HttpFlavor,
    url: String,
    auth_header: Option<(String, String)>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(
        flavor: HttpFlavor,
        base_url: &str,
        path: Option<&str>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let path = path.unwrap_or(flavor.default_path());
        let url = format!(
            "{}/{}",
            base_url.trim_end_matches('/'),
            path.trim_start_matches('/')
        );
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            flavor,
            url,
            auth_header: None,
            client,
        })
    }

    /// Sends `name: value` with every request, e.g. `Authorization: Bearer ...`.
    pub fn with_auth_header(mut self, name: &str, value: &str) -> Self {
        self.auth_header = Some((name.to_string(), value.to_string()));
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        match self.flavor {
            HttpFlavor::Ollama => json!({
                "model": req.model_name,
                "prompt": req.prompt,
                "stream": false,
                "options": { "temperature": req.temperature, "num_predict": req.max_output },
            }),
            HttpFlavor::OpenAi => json!({
                "model": req.model_name,
                "messages": [{ "role": "user", "content": req.prompt }],
                "temperature": req.temperature,
                "max_tokens": req.max_output,
                "stream": false,
            }),
        }
    }

    fn extract_text(&self, body: &Value) -> Option<String> {
        let v = match self.flavor {
            HttpFlavor::Ollama => body.get("response"),
            HttpFlavor::OpenAi => body.pointer("/choices/0/message/content").or_else(|| body.pointer("/choices/0/text")),
        };
        v.and_then(Value::as_str).map(str::to_string)
    }
}

impl CompletionBackend for HttpBackend {
    fn name(&self) -> &str {
        match self.flavor {
            HttpFlavor::Ollama => "ollama",
            HttpFlavor::OpenAi => "openai",
        }
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let mut builder = self.client.post(&self.url).json(&self.body(req));
        if let Some((k, v)) = &self.auth_header {
            builder = builder.header(k, v);
        }
        let resp = builder
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Status {
                status: status.as_u16(),
                body: text.chars().take(200).collect(),
            });
        }
        let json: Value =
            serde_json::from_str(&text).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        self.extract_text(&json)
            .ok_or_else(|| GatewayError::Malformed("completion text field missing".to_string()))
    }
}
