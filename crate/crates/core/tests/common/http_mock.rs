//! A tiny HTTP/1.1 server on a loopback port, one connection per request.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

pub struct MockServer {
    pub base_url: String,
    /// Request bodies received, in order.
    pub bodies: Arc<Mutex<Vec<String>>>,
    /// Authorization headers received, in order.
    pub auth: Arc<Mutex<Vec<Option<String>>>>,
}

/// Serves every request with `handler(body) -> (status, response body)`.
/// The thread lives until the test process exits.
pub fn serve<F>(handler: F) -> MockServer
where
    F: Fn(&str) -> (u16, String) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let addr = listener.local_addr().unwrap();
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let auth = Arc::new(Mutex::new(Vec::new()));
    let (b, a) = (bodies.clone(), auth.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    match name.to_ascii_lowercase().as_str() {
                        "content-length" => length = value.trim().parse().unwrap_or(0),
                        "authorization" => authorization = Some(value.trim().to_string()),
                        _ => {}
                    }
                }
            }
            let mut body = vec![0; length];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let body = String::from_utf8_lossy(&body).into_owned();
            let (status, reply) = handler(&body);
            b.lock().unwrap().push(body);
            a.lock().unwrap().push(authorization);
            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    MockServer {
        base_url: format!("http://{addr}/v1"),
        bodies,
        auth,
    }
}

pub fn completion(text: &str, usage: Option<(u64, u64)>) -> String {
    let mut v = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]
    });
    if let Some((p, c)) = usage {
        v["usage"] = serde_json::json!({"prompt_tokens": p, "completion_tokens": c, "total_tokens": p + c});
    }
    v.to_string()
}
