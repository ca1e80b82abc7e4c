//! HTTP aggregation server. Endpoints:
//!   POST /v1/report                       submit a SubmitReport
//!   GET  /v1/top?scenario=&compiler=&platform=&n=
//!   GET  /v1/solution/<uid>
//!
//! Tables persist under the store directory, one JSON file per scenario
//! key; every merge rewrites the file atomically. Merges are serialized by
//! a single mutex over all tables (one logical writer), reads see a
//! consistent snapshot.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::registry::write_json_atomic;

use super::{classify_online, server_merge, server_top, ScenarioKey, ScenarioTable, SolutionRecord, SubmitReport};

pub struct CrowdServer {
    store_dir: PathBuf,
    margin: f64,
    tables: Mutex<BTreeMap<String, ScenarioTable>>,
}

impl CrowdServer {
    pub fn open(store_dir: impl Into<PathBuf>, margin: f64) -> Result<CrowdServer> {
        let store_dir = store_dir.into();
        std::fs::create_dir_all(&store_dir)?;
        let mut tables = BTreeMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&store_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            let table: ScenarioTable = serde_json::from_str(&text)?;
            if let Some(key) = &table.key {
                tables.insert(key.slug(), table);
            }
        }
        Ok(CrowdServer { store_dir, margin, tables: Mutex::new(tables) })
    }

    pub fn handle_report(&self, report: &SubmitReport) -> Result<()> {
        let mut tables = self.tables.lock().expect("crowd table lock");
        let slug = report.key.slug();
        let table = tables
            .entry(slug.clone())
            .or_insert_with(|| ScenarioTable::for_key(report.key.clone()));
        server_merge(table, report, self.margin)?;
        classify_online(table, self.margin);
        write_json_atomic(&self.store_dir.join(format!("{slug}.json")), table)?;
        Ok(())
    }

    pub fn top(&self, key: &ScenarioKey, n: usize) -> Vec<SolutionRecord> {
        let tables = self.tables.lock().expect("crowd table lock");
        tables.get(&key.slug()).map(|t| server_top(t, n)).unwrap_or_default()
    }

    pub fn solution(&self, uid: &str) -> Option<SolutionRecord> {
        let tables = self.tables.lock().expect("crowd table lock");
        tables.values().find_map(|t| t.solution(uid).cloned())
    }

    pub fn table(&self, key: &ScenarioKey) -> Option<ScenarioTable> {
        let tables = self.tables.lock().expect("crowd table lock");
        tables.get(&key.slug()).cloned()
    }

    /// Bind and serve on a background thread; port 0 picks a free port.
    pub fn serve(self, addr: &str) -> Result<RunningServer> {
        let http = tiny_http::Server::http(addr)
            .map_err(|e| Error::environment(format!("cannot bind {addr}: {e}")))?;
        let local_addr = http.server_addr().to_string();
        let stop = Arc::new(AtomicBool::new(false));
        let stop_thread = stop.clone();
        let server = Arc::new(self);
        let server_thread = server.clone();
        let handle = std::thread::spawn(move || {
            while !stop_thread.load(Ordering::Relaxed) {
                match http.recv_timeout(std::time::Duration::from_millis(50)) {
                    Ok(Some(request)) => server_thread.respond(request),
                    Ok(None) => {}
                    Err(_) => break,
                }
            }
        });
        Ok(RunningServer { addr: local_addr, stop, handle: Some(handle), server })
    }

    fn respond(&self, mut request: tiny_http::Request) {
        let method = request.method().clone();
        let url = request.url().to_string();
        let (path, query) = match url.split_once('?') {
            Some((p, q)) => (p.to_string(), q.to_string()),
            None => (url.clone(), String::new()),
        };
        let response = match (method.as_str(), path.as_str()) {
            ("POST", "/v1/report") => {
                let mut body = String::new();
                if request.as_reader().read_to_string(&mut body).is_err() {
                    json_response(400, r#"{"error":"unreadable body"}"#)
                } else {
                    match serde_json::from_str::<SubmitReport>(&body) {
                        Ok(report) => match self.handle_report(&report) {
                            Ok(()) => json_response(200, r#"{"status":"ok"}"#),
                            Err(e) => {
                                json_response(400, &format!(r#"{{"error":{:?}}}"#, e.to_string()))
                            }
                        },
                        Err(e) => {
                            json_response(400, &format!(r#"{{"error":{:?}}}"#, e.to_string()))
                        }
                    }
                }
            }
            ("GET", "/v1/top") => {
                let params = parse_query(&query);
                let key = ScenarioKey::new(
                    params.get("scenario").map(String::as_str).unwrap_or(""),
                    params.get("compiler").map(String::as_str).unwrap_or(""),
                    params.get("platform").map(String::as_str).unwrap_or(""),
                );
                let n = params.get("n").and_then(|n| n.parse().ok()).unwrap_or(10);
                let top = self.top(&key, n);
                json_response(200, &serde_json::to_string(&top).unwrap_or_else(|_| "[]".into()))
            }
            ("GET", p) if p.starts_with("/v1/solution/") => {
                let uid = p.trim_start_matches("/v1/solution/");
                match self.solution(uid) {
                    Some(solution) => json_response(
                        200,
                        &serde_json::to_string(&solution).unwrap_or_else(|_| "{}".into()),
                    ),
                    None => json_response(404, r#"{"error":"unknown solution"}"#),
                }
            }
            _ => json_response(404, r#"{"error":"no such endpoint"}"#),
        };
        let _ = request.respond(response);
    }
}

fn json_response(status: u16, body: &str) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    let mut response = tiny_http::Response::from_string(body).with_status_code(status);
    if let Ok(header) = "Content-Type: application/json".parse::<tiny_http::Header>() {
        response.add_header(header);
    }
    response
}

fn parse_query(query: &str) -> BTreeMap<String, String> {
    query
        .split('&')
        .filter_map(|pair| {
            let (k, v) = pair.split_once('=')?;
            Some((percent_decode(k), percent_decode(v)))
        })
        .collect()
}

pub(crate) fn percent_decode(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'%' if i + 2 < bytes.len() => {
                match std::str::from_utf8(&bytes[i + 1..i + 3])
                    .ok()
                    .and_then(|h| u8::from_str_radix(h, 16).ok())
                {
                    Some(byte) => {
                        out.push(byte);
                        i += 3;
                    }
                    None => {
                        out.push(b'%');
                        i += 1;
                    }
                }
            }
            b'+' => {
                out.push(b' ');
                i += 1;
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    String::from_utf8_lossy(&out).into_owned()
}

pub(crate) fn percent_encode(text: &str) -> String {
    let mut out = String::new();
    for byte in text.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            _ => out.push_str(&format!("%{byte:02X}")),
        }
    }
    out
}

/// Handle to a serving thread; dropping it stops the server.
pub struct RunningServer {
    pub addr: String,
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
    pub server: Arc<CrowdServer>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_roundtrip() {
        let raw = "linux/Intel(R) Xeon with spaces & symbols";
        assert_eq!(percent_decode(&percent_encode(raw)), raw);
        assert_eq!(percent_decode("a+b"), "a b");
    }

    #[test]
    fn tables_persist_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let key = ScenarioKey::new("s", "gcc-7.1.0", "linux/cpu");
        {
            let server = CrowdServer::open(dir.path(), 0.05).unwrap();
            let report = SubmitReport {
                participant: "p".into(),
                key: key.clone(),
                workload: "w".into(),
                baseline_digest: "d".into(),
                reactions: BTreeMap::new(),
                candidate: Some(super::super::CandidateSolution {
                    assignment_text: "-O3 -fx".into(),
                    improvement: 1.5,
                }),
            };
            server.handle_report(&report).unwrap();
        }
        let reopened = CrowdServer::open(dir.path(), 0.05).unwrap();
        let top = reopened.top(&key, 5);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].assignment_text, "-O3 -fx");
    }

    #[test]
    fn unknown_key_yields_empty_not_error() {
        let dir = tempfile::tempdir().unwrap();
        let server = CrowdServer::open(dir.path(), 0.05).unwrap();
        assert!(server.top(&ScenarioKey::new("none", "x", "y"), 3).is_empty());
    }
}
