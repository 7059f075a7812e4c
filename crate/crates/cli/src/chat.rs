//! OpenAI-compatible chat-completions transport for LLM subjects.

use std::time::Duration;

use adversa_core::subjects::{ChatBackend, ChatMessage, LlmSettings};
use adversa_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

pub struct HttpChatBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    temperature: f64,
    api_key: String,
}

impl HttpChatBackend {
    /// Reads the API key from the environment variable named in `settings`.
    pub fn from_settings(settings: &LlmSettings) -> adversa_core::Result<Self> {
        let api_key = std::env::var(&settings.api_key_env)
            .map_err(|_| Error::Configuration(format!("environment variable {} is not set", settings.api_key_env)))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: format!("{}/chat/completions", settings.base_url.trim_end_matches('/')),
            model: settings.model.clone(),
            temperature: settings.temperature,
            api_key,
        })
    }

    /// Pulls the first choice's text out of a response body.
    pub fn parse_response(body: &str) -> adversa_core::Result<String> {
        let parsed: ChatResponse =
            serde_json::from_str(body).map_err(|e| Error::SubjectAborted(format!("unexpected chat response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::SubjectAborted("chat response without content".into()))
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&mut self, messages: &[ChatMessage]) -> adversa_core::Result<String> {
        let request = ChatRequest { model: &self.model, temperature: self.temperature, messages };
        let mut response = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&request)
            .map_err(|e| Error::SubjectAborted(format!("chat request failed: {e}")))?;
        let status = response.status();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::SubjectAborted(format!("reading chat response: {e}")))?;
        if !status.is_success() {
            return Err(Error::SubjectAborted(format!("chat endpoint returned {status}: {body}")));
        }
        Self::parse_response(&body)
    }
}
