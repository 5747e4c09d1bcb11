use serde::{Deserialize, Serialize};

use super::metrics::p90;
use super::TranslateResponse;
use crate::cache::HistoricalRecord;
use crate::dsl::{dsl_equal, ComponentMatch};
use crate::error::{Error, Result};
use crate::retrieval::Route;

/// Fractions of queries whose top-`k` retrieved tables contain at least one
/// (HR) or all (FHR) gold tables.
pub fn hit_rates<S: AsRef<str>, T: AsRef<str>>(retrieved: &[Vec<S>], gold: &[Vec<T>], k: usize) -> (f64, f64) {
    let n = retrieved.len().min(gold.len());
    if n == 0 {
        return (0.0, 0.0);
    }
    let (mut hr, mut fhr) = (0usize, 0usize);
    for (got, want) in retrieved.iter().zip(gold) {
        let top: Vec<&str> = got.iter().take(k).map(AsRef::as_ref).collect();
        let found = want.iter().filter(|g| top.contains(&g.as_ref())).count();
        if found > 0 {
            hr += 1;
        }
        if !want.is_empty() && found == want.len() {
            fhr += 1;
        }
    }
    (hr as f64 / n as f64, fhr as f64 / n as f64)
}

/// Anything that can answer a query; the engine is the usual one.
pub trait Translator {
    fn translate(&self, query: &str) -> Result<TranslateResponse>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub query: String,
    pub route: Option<Route>,
    pub matches: ComponentMatch,
    pub correct: bool,
    pub latency_ms: f64,
    pub generator_calls: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: usize,
    pub tb: f64,
    pub dm: f64,
    pub ms: f64,
    pub ft: f64,
    pub acc: f64,
    pub p90_ms: f64,
    pub hr_at_5: f64,
    pub fhr_at_5: f64,
    pub shortcut_rate: f64,
    pub per_case: Vec<CaseRecord>,
}

/// Grades `system` on `test` by component-wise DSL comparison.
pub fn run_eval(test: &[HistoricalRecord], system: &dyn Translator) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut per_case = Vec::with_capacity(test.len());
    let mut retrieved = Vec::with_capacity(test.len());
    let mut gold = Vec::with_capacity(test.len());
    for case in test {
        gold.push(vec![case.dsl.table.clone()]);
        let rec = match system.translate(&case.query) {
            Ok(resp) => {
                let m = dsl_equal(&resp.dsl, &case.dsl);
                retrieved.push(resp.retrieved_tables.clone());
                CaseRecord {
                    id: case.id.clone(),
                    query: case.query.clone(),
                    route: Some(resp.route),
                    correct: m.all(),
                    matches: m,
                    latency_ms: resp.latency_ms,
                    generator_calls: resp.generator_calls,
                    error: None,
                }
            }
            Err(e) => {
                retrieved.push(Vec::new());
                CaseRecord {
                    id: case.id.clone(),
                    query: case.query.clone(),
                    route: None,
                    matches: ComponentMatch::default(),
                    correct: false,
                    latency_ms: 0.0,
                    generator_calls: 0,
                    error: Some(e.to_string()),
                }
            }
        };
        per_case.push(rec);
    }
    let n = per_case.len() as f64;
    let frac = |f: &dyn Fn(&CaseRecord) -> bool| per_case.iter().filter(|c| f(c)).count() as f64 / n;
    let latencies: Vec<f64> = per_case.iter().filter(|c| c.error.is_none()).map(|c| c.latency_ms).collect();
    let (hr_at_5, fhr_at_5) = hit_rates(&retrieved, &gold, 5);
    Ok(EvalReport {
        cases: per_case.len(),
        tb: frac(&|c| c.matches.tb),
        dm: frac(&|c| c.matches.dm),
        ms: frac(&|c| c.matches.ms),
        ft: frac(&|c| c.matches.ft),
        acc: frac(&|c| c.correct),
        p90_ms: p90(&latencies).unwrap_or(0.0),
        hr_at_5,
        fhr_at_5,
        shortcut_rate: frac(&|c| c.route == Some(Route::Shortcut)),
        per_case,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::DslSpec;
    use std::collections::HashMap;

    #[test]
    fn hit_rate_examples() {
        let (hr, fhr) = hit_rates(&[vec!["a", "b", "g"]], &[vec!["g"]], 5);
        assert_eq!((hr, fhr), (1.0, 1.0));
        let (hr, fhr) = hit_rates(&[vec!["a", "g1"]], &[vec!["g1", "g2"]], 5);
        assert_eq!((hr, fhr), (1.0, 0.0));
        let (hr, _) = hit_rates(&[vec!["a", "b", "c", "d", "e", "g"]], &[vec!["g"]], 5);
        assert_eq!(hr, 0.0);
    }

    struct Fixed(HashMap<String, DslSpec>);

    impl Translator for Fixed {
        fn translate(&self, query: &str) -> Result<TranslateResponse> {
            let dsl = self.0.get(query).cloned().ok_or(Error::NoCandidates)?;
            Ok(TranslateResponse {
                retrieved_tables: vec![dsl.table.clone()],
                dsl,
                route: Route::Shortcut,
                top_similarity: Some(1.0),
                latency_ms: 1.0,
                generator_calls: 0,
            })
        }
    }

    fn cases() -> Vec<HistoricalRecord> {
        (0..4)
            .map(|i| HistoricalRecord { id: format!("c{i}"), query: format!("q{i}"), dsl: DslSpec::new(format!("t{i}")) })
            .collect()
    }

    #[test]
    fn gold_system_scores_one() {
        let test = cases();
        let sys = Fixed(test.iter().map(|c| (c.query.clone(), c.dsl.clone())).collect());
        let r = run_eval(&test, &sys).unwrap();
        assert_eq!((r.tb, r.dm, r.ms, r.ft, r.acc, r.hr_at_5), (1.0, 1.0, 1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn wrong_table_scores_zero() {
        let test = cases();
        let sys = Fixed(test.iter().map(|c| (c.query.clone(), DslSpec::new("other"))).collect());
        let r = run_eval(&test, &sys).unwrap();
        assert_eq!((r.tb, r.acc), (0.0, 0.0));
        assert!(run_eval(&[], &sys).is_err());
    }
}
