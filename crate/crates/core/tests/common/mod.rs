//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

/// What the fake chat server does with one request.
#[derive(Clone, Debug)]
pub enum Reply {
    /// 200 with an OpenAI-style body whose message content is this text.
    Content(String),
    Status(u16),
    /// Hold the connection open without answering.
    Hang(Duration),
}

/// A one-thread HTTP server that answers requests from a script, then
/// returns 503 for anything beyond it.
pub struct FakeChatServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<String>>>,
}

impl FakeChatServer {
    pub fn start(script: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        thread::spawn(move || {
            let mut script = script.into_iter();
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { return };
                let body = match read_request(&mut stream) {
                    Some(b) => b,
                    None => continue,
                };
                log.lock().unwrap().push(body);
                match script.next() {
                    Some(Reply::Content(text)) => {
                        let payload = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string();
                        respond(&mut stream, 200, &payload);
                    }
                    Some(Reply::Status(code)) => respond(&mut stream, code, "{}"),
                    Some(Reply::Hang(d)) => thread::sleep(d),
                    None => respond(&mut stream, 503, "{}"),
                }
            }
        });
        FakeChatServer { url, requests }
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn read_request(stream: &mut std::net::TcpStream) -> Option<String> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut len = 0usize;
    let mut auth = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        let lower = l.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            len = v.trim().parse().ok()?;
        }
        if lower.starts_with("authorization:") {
            auth = l.to_string();
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    Some(format!("{auth}\n{}", String::from_utf8_lossy(&body)))
}

fn respond(stream: &mut std::net::TcpStream, code: u16, body: &str) {
    let _ = write!(
        stream,
        "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.flush();
}

/// A loopback port with nothing listening on it.
pub fn closed_port_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/v1/chat")
}
