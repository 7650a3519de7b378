//! Line-delimited JSON inference endpoint and latency accounting.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::admnet::ModelParams;
use crate::error::{Error, Result};
use crate::evalkit::{point_prediction, Landscape};
use crate::features::{encode, RawRecord};

/// Latency percentiles in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub count: u64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub errors: u64,
}

/// Nearest-rank percentile of an ascending sample.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencyReport {
    pub fn from_samples(samples_ms: &[f64], errors: u64) -> Self {
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        LatencyReport {
            count: sorted.len() as u64,
            p50_ms: percentile(&sorted, 0.50),
            p95_ms: percentile(&sorted, 0.95),
            p99_ms: percentile(&sorted, 0.99),
            errors,
        }
    }
}

/// Shared latency accumulator; every update happens under one lock.
#[derive(Debug, Default)]
pub struct LatencyTracker {
    inner: Mutex<(Vec<f64>, u64)>,
}

impl LatencyTracker {
    pub fn record(&self, ms: f64) {
        self.inner.lock().expect("latency lock").0.push(ms);
    }

    pub fn record_error(&self) {
        self.inner.lock().expect("latency lock").1 += 1;
    }

    pub fn report(&self) -> LatencyReport {
        let guard = self.inner.lock().expect("latency lock");
        LatencyReport::from_samples(&guard.0, guard.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub winning_rate: Vec<f64>,
    pub argmax_price: f64,
}

/// Converts JSON feature values to raw strings; numbers keep their text.
pub fn record_from_json(features: &Map<String, Value>) -> RawRecord {
    features
        .iter()
        .filter_map(|(k, v)| {
            let s = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                Value::Null => return None,
                other => other.to_string(),
            };
            Some((k.clone(), s))
        })
        .collect()
}

/// Full inference for one raw record. Unknown values encode to OOV.
pub fn predict(model: &ModelParams, record: &RawRecord) -> Result<Prediction> {
    let sample = encode(record, &model.schema);
    let dist = model.distribution(&sample)?;
    let argmax_price = point_prediction(&dist, &model.grid)?;
    Ok(Prediction {
        winning_rate: dist.cdf(),
        probs: dist.probs().to_vec(),
        argmax_price,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictRequest {
    features: Map<String, Value>,
}

/// Handles one protocol line and returns the response line.
pub fn handle_line(model: &ModelParams, tracker: &LatencyTracker, line: &str) -> String {
    let started = Instant::now();
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(_) => {
            tracker.record_error();
            return r#"{"error":"parse"}"#.to_string();
        }
    };
    if value.get("op").and_then(Value::as_str) == Some("stats") {
        return serde_json::to_string(&tracker.report()).expect("report serializes");
    }
    let outcome = serde_json::from_value::<PredictRequest>(value)
        .map_err(|e| Error::data(format!("request: {e}")))
        .and_then(|req| predict(model, &record_from_json(&req.features)));
    match outcome {
        Ok(p) => {
            let body = serde_json::to_string(&p).expect("prediction serializes");
            tracker.record(started.elapsed().as_secs_f64() * 1e3);
            body
        }
        Err(e) => {
            tracker.record_error();
            serde_json::json!({ "error": e.to_string() }).to_string()
        }
    }
}

fn serve_connection(stream: TcpStream, model: &ModelParams, tracker: &LatencyTracker) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_line(model, tracker, &line);
        writer.write_all(response.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

/// A running endpoint. Dropping the handle does not stop it; call
/// [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    tracker: Arc<LatencyTracker>,
    accept_thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> LatencyReport {
        self.tracker.report()
    }

    /// Stops accepting connections; open connections finish on their own.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds and starts serving `model` as an immutable snapshot, one thread
/// per connection.
pub fn start_server(model: Arc<ModelParams>, addr: impl ToSocketAddrs) -> Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let tracker = Arc::new(LatencyTracker::default());
    let accept_thread = {
        let (stop, tracker) = (Arc::clone(&stop), Arc::clone(&tracker));
        thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let (model, tracker) = (Arc::clone(&model), Arc::clone(&tracker));
                thread::spawn(move || {
                    let _ = serve_connection(stream, &model, &tracker);
                });
            }
        })
    };
    Ok(ServerHandle {
        addr,
        stop,
        tracker,
        accept_thread: Some(accept_thread),
    })
}

/// Seeded feature maps drawn from the model's vocabulary and numeric ranges.
pub fn synthetic_requests(model: &ModelParams, n: usize, seed: u64) -> Vec<Map<String, Value>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocabs: Vec<Vec<&String>> = model.schema.categorical.iter().map(|f| f.vocab.keys().collect()).collect();
    (0..n)
        .map(|_| {
            let mut m = Map::new();
            for (f, vocab) in model.schema.categorical.iter().zip(&vocabs) {
                if let Some(v) = vocab.choose(&mut rng) {
                    m.insert(f.name.clone(), Value::String((*v).clone()));
                }
            }
            for f in &model.schema.numeric {
                let v = f.min + rng.random::<f64>() * (f.max - f.min).max(0.0);
                m.insert(f.name.clone(), serde_json::json!(v));
            }
            m
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub in_process: LatencyReport,
    pub loopback: LatencyReport,
}

/// Times single-request inference in process, split over `concurrency`
/// threads sharing one snapshot.
pub fn bench_in_process(model: &Arc<ModelParams>, requests: &[Map<String, Value>], concurrency: usize) -> Result<LatencyReport> {
    let records: Vec<RawRecord> = requests.iter().map(record_from_json).collect();
    let per_thread = records.len().div_ceil(concurrency.max(1)).max(1);
    let tracker = LatencyTracker::default();
    thread::scope(|scope| {
        for chunk in records.chunks(per_thread) {
            let tracker = &tracker;
            scope.spawn(move || {
                for r in chunk {
                    let t = Instant::now();
                    match predict(model, r) {
                        Ok(p) => {
                            std::hint::black_box(p);
                            tracker.record(t.elapsed().as_secs_f64() * 1e3);
                        }
                        Err(_) => tracker.record_error(),
                    }
                }
            });
        }
    });
    Ok(tracker.report())
}

/// Times client round trips against a running endpoint.
pub fn bench_loopback(addr: SocketAddr, requests: &[Map<String, Value>], concurrency: usize) -> Result<LatencyReport> {
    let lines: Vec<String> = requests
        .iter()
        .map(|f| serde_json::json!({ "features": f }).to_string())
        .collect();
    let per_thread = lines.len().div_ceil(concurrency.max(1)).max(1);
    let tracker = LatencyTracker::default();
    let failures: Mutex<Option<std::io::Error>> = Mutex::new(None);
    thread::scope(|scope| {
        for chunk in lines.chunks(per_thread) {
            let (tracker, failures) = (&tracker, &failures);
            scope.spawn(move || {
                let run = || -> std::io::Result<()> {
                    let stream = TcpStream::connect(addr)?;
                    stream.set_nodelay(true)?;
                    let mut reader = BufReader::new(stream.try_clone()?);
                    let mut writer = stream;
                    let mut response = String::new();
                    for line in chunk {
                        let t = Instant::now();
                        writer.write_all(line.as_bytes())?;
                        writer.write_all(b"\n")?;
                        response.clear();
                        reader.read_line(&mut response)?;
                        if response.starts_with(r#"{"error""#) || response.is_empty() {
                            tracker.record_error();
                        } else {
                            tracker.record(t.elapsed().as_secs_f64() * 1e3);
                        }
                    }
                    Ok(())
                };
                if let Err(e) = run() {
                    *failures.lock().expect("failure lock") = Some(e);
                }
            });
        }
    });
    if let Some(e) = failures.into_inner().expect("failure lock") {
        return Err(e.into());
    }
    Ok(tracker.report())
}

/// Both latency views: in process, then over loopback against a private
/// endpoint on an ephemeral port.
pub fn bench(model: Arc<ModelParams>, n_requests: usize, concurrency: usize, seed: u64) -> Result<BenchReport> {
    if n_requests == 0 {
        return Err(Error::config("bench needs at least one request"));
    }
    if concurrency == 0 {
        return Err(Error::config("concurrency must be positive"));
    }
    let requests = synthetic_requests(&model, n_requests, seed);
    let in_process = bench_in_process(&model, &requests, concurrency)?;
    let server = start_server(Arc::clone(&model), "127.0.0.1:0")?;
    let loopback = bench_loopback(server.local_addr(), &requests, concurrency);
    server.shutdown();
    Ok(BenchReport {
        in_process,
        loopback: loopback?,
    })
}
