//! Replays queries against a running service and reports end-to-end latency.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub requests: usize,
    pub errors: usize,
    pub concurrency: usize,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
    pub wall_secs: f64,
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(
    mut samples: Vec<f64>,
    errors: usize,
    concurrency: usize,
    wall_secs: f64,
) -> LatencyReport {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    LatencyReport {
        requests: n,
        errors,
        concurrency,
        p50_ms: percentile(&samples, 50.0),
        p99_ms: percentile(&samples, 99.0),
        max_ms: samples.last().copied().unwrap_or(0.0),
        mean_ms: if n == 0 {
            0.0
        } else {
            samples.iter().sum::<f64>() / n as f64
        },
        wall_secs,
    }
}

/// Sends `total` requests to `{base}/v1/correct`, cycling through `queries`,
/// from `concurrency` clients. Latency is measured per request from send to
/// fully read body.
pub async fn measure_latency(
    base: &str,
    queries: &[String],
    total: usize,
    concurrency: usize,
    k: usize,
) -> anyhow::Result<LatencyReport> {
    anyhow::ensure!(!queries.is_empty(), "no queries");
    anyhow::ensure!(concurrency >= 1, "concurrency must be at least 1");
    let client = reqwest::Client::builder()
        .pool_max_idle_per_host(concurrency)
        .build()?;
    let url = format!("{}/v1/correct", base.trim_end_matches('/'));
    let queries = Arc::new(queries.to_vec());
    let next = Arc::new(AtomicUsize::new(0));
    let start = Instant::now();
    let mut tasks = Vec::with_capacity(concurrency);
    for _ in 0..concurrency {
        let (client, url, queries, next) =
            (client.clone(), url.clone(), queries.clone(), next.clone());
        tasks.push(tokio::spawn(async move {
            let mut samples = Vec::new();
            let mut errors = 0;
            loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= total {
                    break;
                }
                let q = &queries[i % queries.len()];
                let t = Instant::now();
                let ok = match client
                    .get(&url)
                    .query(&[("q", q.as_str()), ("k", &k.to_string())])
                    .send()
                    .await
                {
                    Ok(resp) => {
                        let status = resp.status();
                        resp.bytes().await.is_ok() && status.is_success()
                    }
                    Err(_) => false,
                };
                samples.push(t.elapsed().as_secs_f64() * 1000.0);
                if !ok {
                    errors += 1;
                }
            }
            (samples, errors)
        }));
    }
    let mut samples = Vec::with_capacity(total);
    let mut errors = 0;
    for t in tasks {
        let (s, e) = t.await?;
        samples.extend(s);
        errors += e;
    }
    Ok(summarize(
        samples,
        errors,
        concurrency,
        start.elapsed().as_secs_f64(),
    ))
}
