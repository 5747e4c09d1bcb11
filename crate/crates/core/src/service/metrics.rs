use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::Route;

/// Element at 1-based index ⌈0.9·m⌉ of the sorted latencies.
pub fn p90(latencies: &[f64]) -> Result<f64> {
    if latencies.is_empty() {
        return Err(Error::Empty("latency list"));
    }
    let mut sorted = latencies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    // integer ceiling avoids 0.9 * m rounding up past an exact index
    let idx = (9 * m).div_ceil(10);
    Ok(sorted[idx - 1])
}

#[derive(Debug, Default)]
struct Inner {
    shortcut: Vec<f64>,
    longchain: Vec<f64>,
    generator_calls: u64,
    generator_tokens: u64,
}

/// Append-only latency and call accounting shared by all requests.
#[derive(Debug, Default)]
pub struct MetricsWindow {
    inner: Mutex<Inner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p90_ms: Option<f64>,
}

impl RouteStats {
    fn of(latencies: &[f64]) -> Self {
        let count = latencies.len();
        RouteStats {
            count,
            mean_ms: if count == 0 { 0.0 } else { latencies.iter().sum::<f64>() / count as f64 },
            p90_ms: p90(latencies).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub requests: usize,
    pub p90_ms: Option<f64>,
    pub shortcut: RouteStats,
    pub longchain: RouteStats,
    pub generator_calls: u64,
    pub generator_tokens: u64,
}

impl MetricsWindow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, route: Route, latency_ms: f64, calls: usize, tokens: usize) {
        let mut g = self.inner.lock();
        match route {
            Route::Shortcut => g.shortcut.push(latency_ms.max(0.0)),
            Route::Longchain => g.longchain.push(latency_ms.max(0.0)),
        }
        g.generator_calls += calls as u64;
        g.generator_tokens += tokens as u64;
    }

    pub fn latencies(&self, route: Route) -> Vec<f64> {
        let g = self.inner.lock();
        match route {
            Route::Shortcut => g.shortcut.clone(),
            Route::Longchain => g.longchain.clone(),
        }
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let g = self.inner.lock();
        let all: Vec<f64> = g.shortcut.iter().chain(&g.longchain).copied().collect();
        MetricsSnapshot {
            requests: all.len(),
            p90_ms: p90(&all).ok(),
            shortcut: RouteStats::of(&g.shortcut),
            longchain: RouteStats::of(&g.longchain),
            generator_calls: g.generator_calls,
            generator_tokens: g.generator_tokens,
        }
    }
}
