use super::prompt::{parse_decision, parse_ray_choice, parse_verdict, ChatMessage, PromptBuilder};
use super::{Advisor, AdvisorError, AdvisorMode, AdvisorRequest, StructuredResponse};
use crate::action::CandidateRay;
use crate::perception::DirectionalView;
use serde::{Deserialize, Serialize};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    /// Base of an OpenAI-style API; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            temperature: 0.0,
            timeout_secs: 60.0,
            api_key_env: "OBJNAV_API_KEY".into(),
            max_in_flight: 4,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteAdvisor {
    cfg: RemoteConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    slots: Slots,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct ChatReply {
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

impl RemoteAdvisor {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(cfg: RemoteConfig) -> Result<Self, AdvisorError> {
        let key = std::env::var(&cfg.api_key_env).map_err(|_| {
            AdvisorError::Config(format!(
                "environment variable {} is not set; export the API key there or switch to the scripted advisor",
                cfg.api_key_env
            ))
        })?;
        Self::new(cfg, key)
    }

    pub fn new(cfg: RemoteConfig, api_key: String) -> Result<Self, AdvisorError> {
        if cfg.max_in_flight == 0 {
            return Err(AdvisorError::Config("max_in_flight must be at least 1".into()));
        }
        if !(cfg.timeout_secs > 0.0) {
            return Err(AdvisorError::Config("timeout_secs must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| AdvisorError::Config(e.to_string()))?;
        Ok(Self {
            slots: Slots {
                free: Mutex::new(cfg.max_in_flight),
                cv: Condvar::new(),
            },
            cfg,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, AdvisorError> {
        let _slot = self.slots.acquire();
        let body = ChatRequest {
            model: &self.cfg.model,
            temperature: self.cfg.temperature,
            messages,
        };
        let resp = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(transport)?;
        let status = resp.status();
        let text = resp.text().map_err(transport)?;
        if !status.is_success() {
            return Err(AdvisorError::Transport(format!("HTTP {status}: {text}")));
        }
        let reply: ChatReply = serde_json::from_str(&text).map_err(|e| AdvisorError::Parse {
            raw: text.clone(),
            reason: format!("not a chat completion: {e}"),
        })?;
        reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| AdvisorError::Parse {
                raw: text,
                reason: "reply has no message content".into(),
            })
    }

    /// One request plus, when the reply does not parse, one repair attempt.
    fn ask<T>(&self, mut messages: Vec<ChatMessage>, parse: impl Fn(&str) -> Result<T, AdvisorError>) -> Result<T, AdvisorError> {
        let raw = self.complete(&messages)?;
        match parse(&raw) {
            Ok(v) => Ok(v),
            Err(AdvisorError::Parse { reason, .. }) => {
                log::warn!("advisor reply did not parse ({reason}); asking again");
                messages.push(ChatMessage::new("assistant", raw));
                messages.push(PromptBuilder::repair(&reason));
                let raw = self.complete(&messages)?;
                parse(&raw)
            }
            Err(e) => Err(e),
        }
    }
}

fn transport(e: reqwest::Error) -> AdvisorError {
    if e.is_timeout() {
        AdvisorError::Timeout
    } else {
        AdvisorError::Transport(e.to_string())
    }
}

impl Advisor for RemoteAdvisor {
    fn name(&self) -> &str {
        "remote"
    }

    fn decide(&self, req: &AdvisorRequest) -> Result<StructuredResponse, AdvisorError> {
        req.expect_mode(AdvisorMode::Decide)?;
        self.ask(PromptBuilder::decide(req.target_category, req.observation, req.rejected), parse_decision)
    }

    fn rethink(&self, req: &AdvisorRequest, original: &StructuredResponse) -> Result<StructuredResponse, AdvisorError> {
        req.expect_mode(AdvisorMode::RethinkA)?;
        let history = req
            .injected_history()
            .ok_or_else(|| AdvisorError::Request("rethink needs injected history".into()))?;
        self.ask(
            PromptBuilder::rethink(req.target_category, req.observation, history, original, req.rejected),
            parse_decision,
        )
    }

    fn verify(&self, req: &AdvisorRequest, claimed: &DirectionalView) -> Result<bool, AdvisorError> {
        req.expect_mode(AdvisorMode::VerifyB)?;
        self.ask(PromptBuilder::verify(req.target_category, claimed), parse_verdict)
    }

    fn pick_ray(&self, req: &AdvisorRequest, rays: &[CandidateRay], toward: f64) -> Result<usize, AdvisorError> {
        req.expect_mode(AdvisorMode::PickRay)?;
        if rays.is_empty() {
            return Err(AdvisorError::Request("no candidate rays".into()));
        }
        self.ask(PromptBuilder::pick_ray(req.target_category, rays, toward), |raw| {
            parse_ray_choice(raw, rays.len())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AgentPose;
    use crate::perception::{Observation, VIEW_YAWS};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    /// Serves the given chat contents in order, one per connection, and reports request bodies.
    fn mock_server(contents: Vec<String>, delay: Option<Duration>) -> (String, mpsc::Receiver<serde_json::Value>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for content in contents {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let _ = tx.send(serde_json::from_slice(&body).unwrap());
                if let Some(d) = delay {
                    thread::sleep(d);
                }
                let reply = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    reply.len(),
                    reply
                );
            }
        });
        (format!("http://{addr}/v1"), rx)
    }

    fn advisor(base_url: String, timeout_secs: f64) -> RemoteAdvisor {
        RemoteAdvisor::new(
            RemoteConfig { base_url, timeout_secs, ..Default::default() },
            "test-key".into(),
        )
        .unwrap()
    }

    fn observation() -> Observation {
        let views = VIEW_YAWS
            .iter()
            .map(|&y| DirectionalView {
                view_yaw: y,
                heading: f64::from(y),
                column_depth: vec![2.0; 640],
                labels: if y == 90 { ["armchair".to_string()].into() } else { Default::default() },
                label_confidences: Default::default(),
                detections: vec![],
                true_categories: Default::default(),
            })
            .collect();
        Observation { views, pose: AgentPose::new(0.0, 0.0, 0.0), step: 0 }
    }

    #[test]
    fn decide_round_trip() {
        let (url, rx) = mock_server(
            vec![r#"{"a_dir": 90, "f_goal": false, "e": "armchair suggests a living room", "d": "Angle 90: armchair"}"#.into()],
            None,
        );
        let o = observation();
        let r = advisor(url, 5.0).decide(&AdvisorRequest::decide("sofa", &o, &[])).unwrap();
        assert_eq!((r.a_dir, r.f_goal), (90, false));
        let sent = rx.recv().unwrap();
        assert_eq!(sent["temperature"], 0.0);
        let prompt = sent["messages"][1]["content"].as_str().unwrap();
        assert!(prompt.contains("Angle 30: nothing; Angle 90: armchair; Angle 150: nothing"), "{prompt}");
    }

    #[test]
    fn repair_retry_then_success() {
        let (url, rx) = mock_server(
            vec!["Let me think... go right".into(), r#"{"a_dir": 330, "f_goal": false, "e": "", "d": "x"}"#.into()],
            None,
        );
        let o = observation();
        let r = advisor(url, 5.0).decide(&AdvisorRequest::decide("sofa", &o, &[])).unwrap();
        assert_eq!(r.a_dir, 330);
        let _ = rx.recv().unwrap();
        let second = rx.recv().unwrap();
        assert_eq!(second["messages"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn two_bad_replies_are_a_parse_error() {
        let (url, _rx) = mock_server(vec!["nope".into(), "still nope".into()], None);
        let o = observation();
        let err = advisor(url, 5.0).decide(&AdvisorRequest::decide("sofa", &o, &[])).unwrap_err();
        assert!(matches!(err, AdvisorError::Parse { ref raw, .. } if raw == "still nope"), "{err:?}");
    }

    #[test]
    fn timeout_is_reported() {
        let (url, _rx) = mock_server(vec![r#"{"confirmed": true}"#.into()], Some(Duration::from_millis(1500)));
        let o = observation();
        let err = advisor(url, 0.3).verify(&AdvisorRequest::verify("sofa", &o), &o.views[0]).unwrap_err();
        assert_eq!(err, AdvisorError::Timeout);
    }

    #[test]
    fn ray_choice_is_bounds_checked() {
        let (url, _rx) = mock_server(vec![r#"{"ray": 5}"#.into(), r#"{"ray": 1}"#.into()], None);
        let o = observation();
        let rays: Vec<CandidateRay> = (0..2)
            .map(|i| CandidateRay { index: i, heading: 10.0 * i as f64, offset: 0.0, length: 1.0, endpoint: (0.0, 0.0) })
            .collect();
        assert_eq!(advisor(url, 5.0).pick_ray(&AdvisorRequest::pick_ray("sofa", &o), &rays, 0.0).unwrap(), 1);
    }

    #[test]
    fn missing_key_is_actionable() {
        let cfg = RemoteConfig { api_key_env: "OBJNAV_TEST_KEY_THAT_IS_NOT_SET".into(), ..Default::default() };
        let Err(err) = RemoteAdvisor::from_env(cfg) else { panic!("expected an error") };
        assert!(err.to_string().contains("OBJNAV_TEST_KEY_THAT_IS_NOT_SET"));
    }
}
