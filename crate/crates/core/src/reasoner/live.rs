//! Chat-completion client with transcript record and replay.

use super::{
    estimate_tokens, mock_values, objects, parse_verdict, InstantiateQuery, Instantiation, MergeQuery, Reasoner, ReasonerError, Source,
    Verdict,
};
use crate::config::{Config, ReasonerConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

const SYSTEM: &str = "You are a careful static-analysis assistant. You judge program paths and answer in the requested JSON format.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: u32,
}

impl ChatRequest {
    pub fn new(model: &str, prompt: &str) -> Self {
        ChatRequest {
            model: model.to_string(),
            messages: vec![
                Message { role: "system".into(), content: SYSTEM.into() },
                Message { role: "user".into(), content: prompt.into() },
            ],
            temperature: ReasonerConfig::TEMPERATURE,
        }
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("serializable")))
    }
}

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub request_hash: String,
    pub prompt: String,
    pub reply: String,
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut n = self.cv.wait_while(self.free.lock().expect("gate"), |n| *n == 0).expect("gate");
        *n -= 1;
        drop(n);
        let out = f();
        *self.free.lock().expect("gate") += 1;
        self.cv.notify_one();
        out
    }
}

enum Backend {
    Http { agent: ureq::Agent, url: String, key: String },
    Replay(Mutex<HashMap<String, VecDeque<String>>>),
}

pub struct ChatReasoner {
    backend: Backend,
    model: String,
    max_retries: u32,
    backoff: Duration,
    gate: Gate,
    transcript: Option<Mutex<File>>,
    /// Seed for fallback parameter values.
    seed: u64,
}

impl ChatReasoner {
    pub fn from_config(config: &Config) -> Result<Self> {
        let r = &config.reasoner;
        if r.replay {
            let path = config.resolve(r.transcript.as_ref().ok_or_else(|| Error::Config("replay needs reasoner.transcript".into()))?);
            return ChatReasoner::replay(r, &path, config.seed());
        }
        let key = std::env::var(&r.api_key_env).map_err(|_| Error::Config(format!("environment variable {} is not set", r.api_key_env)))?;
        let transcript = r.transcript.as_ref().map(|p| config.resolve(p));
        ChatReasoner::live(r, key, transcript.as_deref(), config.seed())
    }

    pub fn live(r: &ReasonerConfig, key: String, transcript: Option<&Path>, seed: u64) -> Result<Self> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(r.request_timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let transcript = match transcript {
            Some(p) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p).map_err(|e| Error::io(p, e))?)),
            None => None,
        };
        let url = format!("{}/chat/completions", r.endpoint_url.trim_end_matches('/'));
        Ok(ChatReasoner { backend: Backend::Http { agent, url, key }, transcript, ..ChatReasoner::base(r, seed) })
    }

    pub fn replay(r: &ReasonerConfig, transcript: &Path, seed: u64) -> Result<Self> {
        let f = File::open(transcript).map_err(|e| Error::io(transcript, e))?;
        let mut map: HashMap<String, VecDeque<String>> = HashMap::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(transcript, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: Exchange = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                path: transcript.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            map.entry(ex.request_hash).or_default().push_back(ex.reply);
        }
        Ok(ChatReasoner { backend: Backend::Replay(Mutex::new(map)), ..ChatReasoner::base(r, seed) })
    }

    fn base(r: &ReasonerConfig, seed: u64) -> Self {
        ChatReasoner {
            backend: Backend::Replay(Mutex::default()),
            model: r.model_name.clone(),
            max_retries: r.max_retries,
            backoff: Duration::from_millis(r.backoff_ms),
            gate: Gate { free: Mutex::new(r.max_inflight.max(1)), cv: Condvar::new() },
            transcript: None,
            seed,
        }
    }

    fn exchange(&self, prompt: &str) -> Result<String, ReasonerError> {
        let req = ChatRequest::new(&self.model, prompt);
        let hash = req.hash();
        let reply = match &self.backend {
            Backend::Replay(map) => {
                let mut map = map.lock().expect("replay map");
                let q = map.get_mut(&hash).ok_or_else(|| ReasonerError::Transport(format!("no recorded reply for request {hash}")))?;
                // The last recorded reply keeps answering once the queue drains.
                if q.len() > 1 { q.pop_front() } else { q.front().cloned() }.expect("nonempty queue")
            }
            Backend::Http { agent, url, key } => {
                let reply = self.gate.run(|| post(agent, url, key, &req))?;
                if let Some(t) = &self.transcript {
                    let ex = Exchange { request_hash: hash, prompt: prompt.to_string(), reply: reply.clone() };
                    let mut line = serde_json::to_string(&ex).expect("serializable");
                    line.push('\n');
                    let mut f = t.lock().expect("transcript");
                    f.write_all(line.as_bytes()).map_err(|e| ReasonerError::Transport(format!("transcript: {e}")))?;
                }
                reply
            }
        };
        Ok(reply)
    }

    /// Calls `f` on replies until it succeeds. Transport errors back off
    /// exponentially; malformed replies are retried at once.
    fn with_retries<T>(&self, prompt: &str, tries: u32, mut f: impl FnMut(&str) -> Result<T, ReasonerError>) -> Result<(T, u32, u64), ReasonerError> {
        let mut tokens = 0;
        let mut last = None;
        for attempt in 1..=tries {
            let res = self.exchange(prompt).and_then(|reply| {
                tokens += estimate_tokens(prompt) + estimate_tokens(&reply);
                f(&reply)
            });
            match res {
                Ok(v) => return Ok((v, attempt, tokens)),
                Err(e) => {
                    log::warn!("reasoner attempt {attempt}/{tries} failed: {e}");
                    if matches!(e, ReasonerError::Transport(_)) && attempt < tries && !matches!(self.backend, Backend::Replay(_)) {
                        std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
                    }
                    last = Some(e);
                }
            }
        }
        Err(ReasonerError::Exhausted { attempts: tries, last: Box::new(last.expect("at least one attempt")) })
    }
}

fn post(agent: &ureq::Agent, url: &str, key: &str, req: &ChatRequest) -> Result<String, ReasonerError> {
    let mut resp = agent
        .post(url)
        .header("Authorization", &format!("Bearer {key}"))
        .send_json(req)
        .map_err(|e| ReasonerError::Transport(e.to_string()))?;
    let status = resp.status();
    let body = resp.body_mut().read_to_string().map_err(|e| ReasonerError::Transport(e.to_string()))?;
    if !status.is_success() {
        return Err(ReasonerError::Transport(format!("HTTP {status}: {}", body.chars().take(200).collect::<String>())));
    }
    let v: Value = serde_json::from_str(&body).map_err(|e| ReasonerError::Transport(format!("response is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ReasonerError::Transport("response has no choices[0].message.content".into()))
}

/// Values per event from a reply object keyed by event index.
fn parse_values(reply: &str, expected: &[usize]) -> Result<Vec<Vec<String>>, ReasonerError> {
    let obj = objects(reply).last().ok_or_else(|| ReasonerError::Malformed("no JSON object".into()))?;
    expected
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let vals = match obj.get(&i.to_string()) {
                Some(Value::Array(a)) => a,
                None if n == 0 => return Ok(Vec::new()),
                _ => return Err(ReasonerError::Malformed(format!("event {i} has no value list"))),
            };
            if vals.len() != n {
                return Err(ReasonerError::Malformed(format!("event {i}: expected {n} values, got {}", vals.len())));
            }
            Ok(vals.iter().map(|v| v.as_str().map_or_else(|| v.to_string(), str::to_string)).collect())
        })
        .collect()
}

impl Reasoner for ChatReasoner {
    fn source(&self) -> Source {
        Source::Live
    }

    fn verify_merge(&self, q: &MergeQuery<'_>) -> Result<Verdict, ReasonerError> {
        let ((valid, rationale), attempts, token_estimate) =
            self.with_retries(&q.prompt.rendered, self.max_retries + 1, parse_verdict)?;
        Ok(Verdict { valid, rationale, source: Source::Live, attempts, token_estimate })
    }

    fn instantiate(&self, q: &InstantiateQuery<'_>) -> Result<Instantiation, ReasonerError> {
        let expected: Vec<usize> = q.events.iter().map(|(_, k)| k.len()).collect();
        match self.with_retries(q.prompt, 2, |reply| parse_values(reply, &expected)) {
            Ok((values, attempts, token_estimate)) => Ok(Instantiation { values, attempts, fallback: false, token_estimate }),
            Err(e) => {
                log::warn!("sequence {}: falling back to seeded values ({e})", q.sequence_id);
                let attempts = match e {
                    ReasonerError::Exhausted { attempts, .. } => attempts,
                    _ => 1,
                };
                Ok(Instantiation { values: mock_values(self.seed, q.sequence_id, q.events), attempts, fallback: true, token_estimate: 0 })
            }
        }
    }
}
