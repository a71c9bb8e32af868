use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::protocol::{Hello, Request, Response, CAP_MASKED, CAP_SCORE};
use super::{BackendInfo, CandidateScore, Capabilities, ScoreError, ScorerBackend, SentenceScore};

/// How to reach an external scorer.
#[derive(Debug, Clone, Default)]
pub struct ExternalConfig {
    /// Program and arguments of a child process speaking on its stdio.
    pub command: Option<Vec<String>>,
    /// `host:port` of a listening scorer.
    pub address: Option<String>,
    pub timeout: Option<Duration>,
}

#[derive(Default)]
struct Pending {
    waiting: HashMap<i64, Sender<Response>>,
    closed: Option<String>,
}

/// Client side of the line protocol. Requests may be issued from many
/// threads; at most `concurrency_limit` are in flight at once and replies are
/// matched to requests by id.
pub struct ExternalBackend {
    info: BackendInfo,
    max_len: usize,
    timeout: Option<Duration>,
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Arc<Mutex<Pending>>,
    next_id: AtomicI64,
    slots: Mutex<usize>,
    slot_freed: Condvar,
    child: Option<Child>,
    socket: Option<TcpStream>,
    reader: Option<JoinHandle<()>>,
}

fn transport(e: impl std::fmt::Display) -> ScoreError {
    ScoreError::Transport(e.to_string())
}

fn send_line(w: &mut dyn Write, req: &Request) -> io::Result<()> {
    let mut line = serde_json::to_string(req).map_err(io::Error::other)?;
    line.push('\n');
    w.write_all(line.as_bytes())?;
    w.flush()
}

impl ExternalBackend {
    pub fn connect(config: &ExternalConfig) -> Result<Self, ScoreError> {
        match (&config.command, &config.address) {
            (Some(cmd), None) => Self::spawn(cmd, config.timeout),
            (None, Some(addr)) => Self::dial(addr, config.timeout),
            _ => Err(ScoreError::InvalidModel(
                "external backend needs exactly one of a command or an address".into(),
            )),
        }
    }

    pub fn spawn(command: &[String], timeout: Option<Duration>) -> Result<Self, ScoreError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ScoreError::InvalidModel("empty external command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| transport(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut backend =
            Self::handshake(Box::new(stdin), BufReader::new(stdout), timeout).inspect_err(|_| {
                let _ = child.kill();
                let _ = child.wait();
            })?;
        backend.child = Some(child);
        Ok(backend)
    }

    pub fn dial(address: &str, timeout: Option<Duration>) -> Result<Self, ScoreError> {
        let stream = TcpStream::connect(address)
            .map_err(|e| transport(format!("cannot connect to {address}: {e}")))?;
        let read_half = stream.try_clone().map_err(transport)?;
        let write_half = stream.try_clone().map_err(transport)?;
        let mut backend = Self::handshake(Box::new(write_half), BufReader::new(read_half), timeout)?;
        backend.socket = Some(stream);
        Ok(backend)
    }

    fn handshake<R: BufRead + Send + 'static>(
        mut writer: Box<dyn Write + Send>,
        mut reader: R,
        timeout: Option<Duration>,
    ) -> Result<Self, ScoreError> {
        send_line(writer.as_mut(), &Request::Hello).map_err(transport)?;
        let mut line = String::new();
        if reader.read_line(&mut line).map_err(transport)? == 0 {
            return Err(transport("connection closed before hello"));
        }
        let hello: Hello = serde_json::from_str(&line)
            .map_err(|e| ScoreError::Protocol(format!("bad hello reply: {e}")))?;
        if hello.op != "hello" {
            return Err(ScoreError::Protocol(format!("expected hello, got op {}", hello.op)));
        }
        let concurrency_limit = hello.concurrency_limit.unwrap_or(1);
        if concurrency_limit == 0 {
            return Err(ScoreError::Protocol("concurrency_limit must be positive".into()));
        }
        let info = BackendInfo {
            name: hello.name,
            vocab_size: hello.vocab_size,
            concurrency_limit,
            capabilities: Capabilities {
                unmasked_scoring: hello.capabilities.iter().any(|c| c == CAP_SCORE),
                masked_candidates: hello.capabilities.iter().any(|c| c == CAP_MASKED),
            },
        };
        let pending = Arc::new(Mutex::new(Pending::default()));
        let shared = Arc::clone(&pending);
        let reader = std::thread::spawn(move || {
            let reason = loop {
                line.clear();
                match reader.read_line(&mut line) {
                    Ok(0) => break "connection closed by scorer".to_string(),
                    Err(e) => break format!("read failed: {e}"),
                    Ok(_) if line.trim().is_empty() => continue,
                    Ok(_) => {}
                }
                match serde_json::from_str::<Response>(&line) {
                    Ok(resp) => {
                        let mut p = shared.lock().unwrap_or_else(|e| e.into_inner());
                        match p.waiting.remove(&resp.id()) {
                            Some(tx) => {
                                let _ = tx.send(resp);
                            }
                            None => break format!("reply for unknown id {}", resp.id()),
                        }
                    }
                    Err(e) => break format!("unparseable reply {:?}: {e}", line.trim_end()),
                }
            };
            let mut p = shared.lock().unwrap_or_else(|e| e.into_inner());
            p.closed = Some(reason);
            p.waiting.clear();
        });
        Ok(ExternalBackend {
            info,
            max_len: hello.max_len,
            timeout,
            writer: Mutex::new(writer),
            pending,
            next_id: AtomicI64::new(1),
            slots: Mutex::new(0),
            slot_freed: Condvar::new(),
            child: None,
            socket: None,
            reader: Some(reader),
        })
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    fn acquire(&self) {
        let mut used = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.info.concurrency_limit {
            used = self.slot_freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
    }

    fn release(&self) {
        *self.slots.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.slot_freed.notify_one();
    }

    fn closed_reason(&self) -> String {
        self.pending
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .closed
            .clone()
            .unwrap_or_else(|| "connection closed".into())
    }

    fn call(&self, make: impl FnOnce(i64) -> Request) -> Result<Response, ScoreError> {
        self.acquire();
        let result = self.call_in_slot(make);
        self.release();
        match result? {
            Response::Error { error, .. } => Err(ScoreError::Remote(error)),
            r => Ok(r),
        }
    }

    fn call_in_slot(&self, make: impl FnOnce(i64) -> Request) -> Result<Response, ScoreError> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let (tx, rx) = mpsc::channel();
        {
            let mut p = self.pending.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(reason) = &p.closed {
                return Err(transport(reason));
            }
            p.waiting.insert(id, tx);
        }
        let sent = {
            let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
            send_line(w.as_mut(), &make(id))
        };
        if let Err(e) = sent {
            self.pending
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .waiting
                .remove(&id);
            return Err(transport(format!("write failed: {e}")));
        }
        let got = match self.timeout {
            Some(t) => rx.recv_timeout(t),
            None => rx.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        match got {
            Ok(r) => Ok(r),
            Err(RecvTimeoutError::Timeout) => {
                self.pending
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .waiting
                    .remove(&id);
                Err(transport(format!("no reply to request {id} in time")))
            }
            Err(RecvTimeoutError::Disconnected) => Err(transport(self.closed_reason())),
        }
    }
}

impl ScorerBackend for ExternalBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn score(&self, text: &str) -> Result<SentenceScore, ScoreError> {
        let resp = self.call(|id| Request::Score {
            id,
            text: text.to_string(),
        })?;
        let Response::Score {
            num_tokens,
            sum_nll,
            mean_nll,
            ..
        } = resp
        else {
            return Err(ScoreError::Protocol("expected a score reply".into()));
        };
        if num_tokens == 0 || !sum_nll.is_finite() || !mean_nll.is_finite() {
            return Err(ScoreError::Protocol(format!(
                "implausible score: {num_tokens} tokens, sum {sum_nll}, mean {mean_nll}"
            )));
        }
        if (mean_nll * num_tokens as f64 - sum_nll).abs() > 1e-6 * sum_nll.abs().max(1.0) {
            return Err(ScoreError::Protocol(format!(
                "mean {mean_nll} times {num_tokens} tokens does not match sum {sum_nll}"
            )));
        }
        Ok(SentenceScore {
            num_tokens,
            mean_nll,
            sum_nll,
        })
    }

    fn masked_candidates(
        &self,
        text: &str,
        char_span: (usize, usize),
        candidates: &[String],
    ) -> Result<Vec<CandidateScore>, ScoreError> {
        if !self.info.capabilities.masked_candidates {
            return Err(ScoreError::Unsupported {
                backend: self.info.name.clone(),
                capability: "masked candidates",
            });
        }
        let len = text.chars().count();
        if char_span.0 > char_span.1 || char_span.1 > len {
            return Err(ScoreError::SpanOutOfRange {
                start: char_span.0,
                end: char_span.1,
                len,
            });
        }
        let resp = self.call(|id| Request::Masked {
            id,
            text: text.to_string(),
            char_span: [char_span.0, char_span.1],
            candidates: candidates.to_vec(),
        })?;
        let Response::Masked {
            candidate_logprobs,
            candidate_num_subwords,
            ..
        } = resp
        else {
            return Err(ScoreError::Protocol("expected a masked reply".into()));
        };
        if candidate_logprobs.len() != candidates.len()
            || candidate_num_subwords.len() != candidates.len()
        {
            return Err(ScoreError::Protocol(format!(
                "{} candidates sent, {} scores returned",
                candidates.len(),
                candidate_logprobs.len()
            )));
        }
        Ok(candidate_logprobs
            .into_iter()
            .zip(candidate_num_subwords)
            .map(|(logprob, num_subwords)| CandidateScore {
                logprob,
                num_subwords,
            })
            .collect())
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        {
            let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
            let _ = send_line(w.as_mut(), &Request::Bye);
            *w = Box::new(io::sink());
        }
        if let Some(socket) = &self.socket {
            let _ = socket.shutdown(Shutdown::Both);
        }
        if let Some(child) = &mut self.child {
            let deadline = Instant::now() + Duration::from_secs(5);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) | Err(_) => break,
                    Ok(None) if Instant::now() >= deadline => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                    Ok(None) => std::thread::sleep(Duration::from_millis(10)),
                }
            }
        }
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}
