//! Line-delimited JSON protocol between the harness and an external scorer.
//!
//! ```text
//! -> {"op":"hello"}
//! <- {"op":"hello","name":..,"vocab_size":..,"max_len":..,"capabilities":["score","masked"]}
//! -> {"id":1,"op":"score","text":"Der Autor lacht ."}
//! <- {"id":1,"num_tokens":4,"sum_nll":..,"mean_nll":..}
//! -> {"id":2,"op":"masked","text":..,"char_span":[9,15],"candidates":["lacht","lachen"]}
//! <- {"id":2,"candidate_logprobs":[..,null],"candidate_num_subwords":[1,2]}
//! <- {"id":3,"error":"..."}
//! -> {"op":"bye"}
//! ```
//!
//! A hello reply may carry `concurrency_limit`; when absent it is 1.

use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ScorerBackend, SentenceScore};
use crate::tokenizer::whitespace_count;

pub const CAP_SCORE: &str = "score";
pub const CAP_MASKED: &str = "masked";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Hello,
    Score {
        id: i64,
        text: String,
    },
    Masked {
        id: i64,
        text: String,
        char_span: [usize; 2],
        candidates: Vec<String>,
    },
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub op: String,
    pub name: String,
    pub vocab_size: usize,
    pub max_len: usize,
    pub capabilities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concurrency_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Error {
        id: i64,
        error: String,
    },
    Score {
        id: i64,
        num_tokens: usize,
        sum_nll: f64,
        mean_nll: f64,
    },
    Masked {
        id: i64,
        candidate_logprobs: Vec<Option<f64>>,
        candidate_num_subwords: Vec<usize>,
    },
}

impl Response {
    pub fn id(&self) -> i64 {
        match self {
            Response::Error { id, .. } | Response::Score { id, .. } | Response::Masked { id, .. } => {
                *id
            }
        }
    }

    pub fn score(id: i64, s: SentenceScore) -> Self {
        Response::Score {
            id,
            num_tokens: s.num_tokens,
            sum_nll: s.sum_nll,
            mean_nll: s.mean_nll,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub name: String,
    pub max_len: usize,
    /// Advertised in the hello reply.
    pub concurrency_limit: Option<usize>,
    /// Per-request delay of up to this many milliseconds, derived from the
    /// request id, so replies come back out of order.
    pub jitter_ms: u64,
    /// Drop the connection after this many scoring requests.
    pub fail_after: Option<usize>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            name: "stub".into(),
            max_len: 512,
            concurrency_limit: None,
            jitter_ms: 0,
            fail_after: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServeSummary {
    pub requests: usize,
    pub max_in_flight: usize,
    pub failed: bool,
}

fn answer(backend: &dyn ScorerBackend, max_len: usize, req: &Request) -> Option<Response> {
    let error = |id, e: String| Response::Error { id, error: e };
    match req {
        Request::Score { id, text } => Some(if whitespace_count(text) > max_len {
            error(*id, format!("input longer than {max_len} tokens"))
        } else {
            match backend.score(text) {
                Ok(s) => Response::score(*id, s),
                Err(e) => error(*id, e.to_string()),
            }
        }),
        Request::Masked {
            id,
            text,
            char_span,
            candidates,
        } => Some(
            match backend.masked_candidates(text, (char_span[0], char_span[1]), candidates) {
                Ok(c) => Response::Masked {
                    id: *id,
                    candidate_logprobs: c.iter().map(|c| c.logprob).collect(),
                    candidate_num_subwords: c.iter().map(|c| c.num_subwords).collect(),
                },
                Err(e) => error(*id, e.to_string()),
            },
        ),
        Request::Hello | Request::Bye => None,
    }
}

fn write_line<W: Write>(w: &Mutex<W>, value: &impl Serialize) -> io::Result<()> {
    let mut line = serde_json::to_string(value).map_err(io::Error::other)?;
    line.push('\n');
    let mut w = w.lock().unwrap_or_else(|e| e.into_inner());
    w.write_all(line.as_bytes())?;
    w.flush()
}

/// Answers requests from `reader` until `bye` or end of input. Requests are
/// handled on worker threads and replies are written as they complete.
pub fn serve<R, W>(
    backend: &dyn ScorerBackend,
    options: &ServeOptions,
    reader: R,
    writer: W,
) -> io::Result<ServeSummary>
where
    R: BufRead,
    W: Write + Send,
{
    let writer = Mutex::new(writer);
    let in_flight = AtomicUsize::new(0);
    let max_in_flight = AtomicUsize::new(0);
    let mut requests = 0;
    let mut failed = false;
    std::thread::scope(|scope| -> io::Result<()> {
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let req: Request = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    let id = serde_json::from_str::<serde_json::Value>(&line)
                        .ok()
                        .and_then(|v| v.get("id").and_then(serde_json::Value::as_i64))
                        .unwrap_or(-1);
                    write_line(
                        &writer,
                        &Response::Error {
                            id,
                            error: format!("malformed request: {e}"),
                        },
                    )?;
                    continue;
                }
            };
            match req {
                Request::Hello => write_line(
                    &writer,
                    &Hello {
                        op: "hello".into(),
                        name: options.name.clone(),
                        vocab_size: backend.info().vocab_size,
                        max_len: options.max_len,
                        capabilities: vec![CAP_SCORE.into(), CAP_MASKED.into()],
                        concurrency_limit: options.concurrency_limit,
                    },
                )?,
                Request::Bye => break,
                req => {
                    requests += 1;
                    if options.fail_after.is_some_and(|n| requests > n) {
                        failed = true;
                        break;
                    }
                    let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                    max_in_flight.fetch_max(now, Ordering::SeqCst);
                    let (writer, in_flight) = (&writer, &in_flight);
                    scope.spawn(move || {
                        let resp = answer(backend, options.max_len, &req);
                        if options.jitter_ms > 0 {
                            if let Some(r) = &resp {
                                let ms = (r.id().unsigned_abs() * 7919) % (options.jitter_ms + 1);
                                std::thread::sleep(Duration::from_millis(ms));
                            }
                        }
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                        if let Some(r) = resp {
                            let _ = write_line(writer, &r);
                        }
                    });
                }
            }
        }
        Ok(())
    })?;
    Ok(ServeSummary {
        requests,
        max_in_flight: max_in_flight.load(Ordering::SeqCst),
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::UniformBackend;

    fn run(input: &str) -> Vec<serde_json::Value> {
        let mut out = Vec::new();
        serve(
            &UniformBackend::new(2),
            &ServeOptions::default(),
            input.as_bytes(),
            &mut out,
        )
        .unwrap();
        String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }

    #[test]
    fn hello_score_bye() {
        let out = run(
            "{\"op\":\"hello\"}\n{\"id\":4,\"op\":\"score\",\"text\":\"a b\"}\n{\"op\":\"bye\"}\n{\"id\":5,\"op\":\"score\",\"text\":\"a\"}\n",
        );
        assert_eq!(out.len(), 2);
        assert_eq!(out[0]["op"], "hello");
        assert_eq!(out[0]["vocab_size"], 2);
        assert!(out[0].get("concurrency_limit").is_none());
        assert_eq!(out[1]["id"], 4);
        assert_eq!(out[1]["num_tokens"], 2);
    }

    #[test]
    fn malformed_requests_get_error_replies() {
        let out = run("not json\n{\"id\":9,\"op\":\"nope\"}\n");
        assert_eq!(out[0]["id"], -1);
        assert_eq!(out[1]["id"], 9);
        assert!(out[1]["error"].as_str().unwrap().starts_with("malformed request"));
    }

    #[test]
    fn responses_round_trip() {
        for r in [
            Response::Error {
                id: 1,
                error: "x".into(),
            },
            Response::Score {
                id: 2,
                num_tokens: 3,
                sum_nll: 1.5,
                mean_nll: 0.5,
            },
            Response::Masked {
                id: 3,
                candidate_logprobs: vec![Some(-0.1), None],
                candidate_num_subwords: vec![1, 2],
            },
        ] {
            let s = serde_json::to_string(&r).unwrap();
            assert_eq!(serde_json::from_str::<Response>(&s).unwrap(), r);
        }
    }
}
