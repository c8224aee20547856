//! Minimal HTTP plumbing shared by the remote tagger and remote detector
//! clients: a retrying JSON POST and a bounded-concurrency ordered map.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("transport failure after {attempts} attempt(s) to {url}: {message}")]
    Transport {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("malformed response from {url}: {message}")]
    Malformed { url: String, message: String },
    #[error("response length mismatch: expected {expected}, got {got}")]
    ResponseShape { expected: usize, got: usize },
}

/// JSON POST client with 3 retries and exponential backoff.
pub struct RetryingClient {
    url: String,
    agent: ureq::Agent,
    retries: u32,
    backoff_base: Duration,
}

impl RetryingClient {
    pub fn new(url: String, timeout: Duration) -> RetryingClient {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        RetryingClient {
            url,
            agent: config.new_agent(),
            retries: 3,
            backoff_base: Duration::from_millis(200),
        }
    }

    /// Shrink the backoff base (tests exercising the retry path).
    pub fn with_backoff(mut self, base: Duration) -> RetryingClient {
        self.backoff_base = base;
        self
    }

    /// POST `body` as JSON and parse the JSON response. Transport and HTTP
    /// errors retry with backoff (base, 2x, 4x); an unparseable body from a
    /// 200 response fails immediately as malformed.
    pub fn post_json<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R, NetError> {
        let mut last_error = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            match self.agent.post(&self.url).send_json(body) {
                Ok(mut response) => {
                    return response.body_mut().read_json::<R>().map_err(|e| {
                        NetError::Malformed {
                            url: self.url.clone(),
                            message: e.to_string(),
                        }
                    });
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(NetError::Transport {
            url: self.url.clone(),
            attempts: self.retries + 1,
            message: last_error,
        })
    }
}

/// Apply `f` to every item with at most `max_inflight` worker threads,
/// returning results in input order.
pub fn bounded_map<T, U, F>(items: &[T], max_inflight: usize, f: F) -> Vec<Result<U, NetError>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U, NetError> + Sync,
{
    if items.is_empty() {
        return Vec::new();
    }
    let workers = max_inflight.max(1).min(items.len());
    if workers == 1 {
        return items.iter().map(|item| f(item)).collect();
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<U, NetError>)>();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let f = &f;
            scope.spawn(move || loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= items.len() {
                    break;
                }
                if tx.send((idx, f(&items[idx]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut results: Vec<Option<Result<U, NetError>>> =
            (0..items.len()).map(|_| None).collect();
        for (idx, result) in rx {
            results[idx] = Some(result);
        }
        results
            .into_iter()
            .map(|slot| slot.expect("worker delivered every index"))
            .collect()
    })
}

#[cfg(test)]
pub(crate) mod testserver {
    //! A tiny single-purpose HTTP/1.1 server for exercising the clients.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Spawn a server answering every POST by `respond(path, body)`;
    /// returns (base_url, request_counter). The server exits when the
    /// listener drops at process end; tests just leak the thread.
    pub fn spawn(
        respond: impl Fn(&str, &str) -> Option<String> + Send + Sync + 'static,
    ) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&hits);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0u8; content_length];
                let _ = reader.read_exact(&mut body);
                let body = String::from_utf8_lossy(&body).to_string();
                match respond(&path, &body) {
                    Some(json) => {
                        let _ = write!(
                            stream,
                            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                            json.len(),
                            json
                        );
                    }
                    None => {
                        let _ = write!(
                            stream,
                            "HTTP/1.1 500 Internal Server Error\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
                        );
                    }
                }
            }
        });
        (format!("http://{addr}"), hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::Ordering;

    #[test]
    fn bounded_map_preserves_order() {
        let items: Vec<usize> = (0..50).collect();
        let results = bounded_map(&items, 8, |&i| Ok(i * 3));
        for (i, r) in results.into_iter().enumerate() {
            assert_eq!(r.unwrap(), i * 3);
        }
    }

    #[test]
    fn post_json_round_trips() {
        let (url, _) = testserver::spawn(|_, body| Some(body.to_string()));
        let client = RetryingClient::new(url, Duration::from_secs(2));
        let out: Vec<u32> = client.post_json(&vec![1u32, 2, 3]).unwrap();
        assert_eq!(out, vec![1, 2, 3]);
    }

    #[test]
    fn server_errors_retry_then_fail() {
        let (url, hits) = testserver::spawn(|_, _| None); // always 500
        let client =
            RetryingClient::new(url, Duration::from_secs(2)).with_backoff(Duration::from_millis(5));
        let result: Result<Vec<u32>, _> = client.post_json(&());
        assert!(matches!(result, Err(NetError::Transport { attempts: 4, .. })));
        assert_eq!(hits.load(Ordering::SeqCst), 4); // initial try + 3 retries
    }

    #[test]
    fn malformed_body_fails_without_retry() {
        let (url, hits) = testserver::spawn(|_, _| Some("not json".to_string()));
        let client =
            RetryingClient::new(url, Duration::from_secs(2)).with_backoff(Duration::from_millis(5));
        let result: Result<Vec<u32>, _> = client.post_json(&());
        assert!(matches!(result, Err(NetError::Malformed { .. })));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }
}
