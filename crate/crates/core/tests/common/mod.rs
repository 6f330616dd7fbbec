//! Test support: a minimal scripted HTTP/1.1 server for exercising the
//! OpenAI-compatible client and the remote searcher adapter against
//! localhost, with request recording and an in-flight high-water counter.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// One request as the server saw it.
#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub authorization: Option<String>,
    pub body: String,
}

pub type Handler = Arc<dyn Fn(&Recorded) -> (u16, String) + Send + Sync>;

struct State {
    requests: Mutex<Vec<Recorded>>,
    inflight: AtomicUsize,
    high_water: AtomicUsize,
    delay_ms: AtomicU64,
}

pub struct FakeServer {
    addr: SocketAddr,
    state: Arc<State>,
    shutdown: Arc<AtomicBool>,
}

impl FakeServer {
    pub fn start(handler: Handler) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind fake server");
        let addr = listener.local_addr().expect("local addr");
        let state = Arc::new(State {
            requests: Mutex::new(Vec::new()),
            inflight: AtomicUsize::new(0),
            high_water: AtomicUsize::new(0),
            delay_ms: AtomicU64::new(0),
        });
        let shutdown = Arc::new(AtomicBool::new(false));

        {
            let state = Arc::clone(&state);
            let shutdown = Arc::clone(&shutdown);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let state = Arc::clone(&state);
                    let handler = Arc::clone(&handler);
                    std::thread::spawn(move || handle_connection(stream, &state, &handler));
                }
            });
        }

        Self {
            addr,
            state,
            shutdown,
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.state.requests.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.state.requests.lock().unwrap().len()
    }

    pub fn high_water(&self) -> usize {
        self.state.high_water.load(Ordering::SeqCst)
    }

    /// Per-request handling delay, for concurrency tests.
    pub fn set_delay_ms(&self, ms: u64) {
        self.state.delay_ms.store(ms, Ordering::SeqCst);
    }
}

impl Drop for FakeServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
    }
}

fn handle_connection(stream: TcpStream, state: &State, handler: &Handler) {
    let mut reader = BufReader::new(match stream.try_clone() {
        Ok(clone) => clone,
        Err(_) => return,
    });
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() || request_line.is_empty() {
        return;
    }
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("")
        .to_owned();

    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).is_err() {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let name = name.trim().to_ascii_lowercase();
            let value = value.trim();
            if name == "content-length" {
                content_length = value.parse().unwrap_or(0);
            } else if name == "authorization" {
                authorization = Some(value.to_owned());
            }
        }
    }
    let mut body = vec![0u8; content_length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let recorded = Recorded {
        path,
        authorization,
        body: String::from_utf8_lossy(&body).into_owned(),
    };
    state.requests.lock().unwrap().push(recorded.clone());

    let now = state.inflight.fetch_add(1, Ordering::SeqCst) + 1;
    state.high_water.fetch_max(now, Ordering::SeqCst);
    let delay = state.delay_ms.load(Ordering::SeqCst);
    if delay > 0 {
        std::thread::sleep(Duration::from_millis(delay));
    }
    let (status, response_body) = handler(&recorded);
    state.inflight.fetch_sub(1, Ordering::SeqCst);

    let reason = match status {
        200 => "OK",
        401 => "Unauthorized",
        403 => "Forbidden",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        _ => "Response",
    };
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{response_body}",
        response_body.len()
    );
    let _ = stream.flush();
}

/// Chat-completions 200 body with the given choice texts.
pub fn chat_ok_body(texts: &[&str]) -> String {
    let choices: Vec<serde_json::Value> = texts
        .iter()
        .map(|text| serde_json::json!({ "message": { "content": text } }))
        .collect();
    serde_json::json!({
        "choices": choices,
        "usage": { "prompt_tokens": 7, "completion_tokens": 9 }
    })
    .to_string()
}

/// Handler replaying `script` in order, then `fallback` forever (or 500s).
pub fn scripted_handler(script: Vec<(u16, String)>, fallback: Option<(u16, String)>) -> Handler {
    let queue = Mutex::new(script.into_iter().collect::<VecDeque<_>>());
    Arc::new(move |_request| {
        let next = queue.lock().unwrap().pop_front();
        match next {
            Some(planned) => planned,
            None => fallback
                .clone()
                .unwrap_or((500, "{\"error\":\"script exhausted\"}".to_owned())),
        }
    })
}

/// Remote-searcher 200 body for `(docid, score, contents)` triples.
pub fn hits_body(hits: &[(&str, f64, &str)]) -> String {
    let hits: Vec<serde_json::Value> = hits
        .iter()
        .map(|(docid, score, contents)| {
            serde_json::json!({
                "docid": docid,
                "score": score,
                "fields": { "contents": contents }
            })
        })
        .collect();
    serde_json::json!({ "hits": hits }).to_string()
}
