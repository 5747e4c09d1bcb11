//! Brute-force oracles and random instance generators shared by the
//! property and acceptance tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use skelcache::embed::Embedding;
use skelcache::knowledge::RankedList;
use skelcache::{Aggregation, DslSpec, Filter, FilterOp, FilterValue, Measure, Scalar, Stage};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(e) = Embedding::from_raw(v) {
            return e;
        }
    }
}

/// Vectors drawn around a few centres so that thresholds produce
/// non-trivial graphs and ties.
pub fn clustered_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Embedding> {
    let centres: Vec<Embedding> = (0..rng.random_range(1..5)).map(|_| random_unit(rng, dim)).collect();
    (0..n)
        .map(|_| {
            let c = &centres[rng.random_range(0..centres.len())];
            if rng.random_bool(0.1) {
                // exact duplicates exercise tie breaking
                return c.clone();
            }
            let spread: f64 = rng.random_range(0.0..0.6);
            let v: Vec<f64> = c
                .as_slice()
                .iter()
                .map(|x| x + spread * rng.sample::<f64, _>(StandardNormal) / (dim as f64).sqrt())
                .collect();
            Embedding::from_raw(v).unwrap()
        })
        .collect()
}

/// Full sort of every similarity.
pub fn topk_oracle(vectors: &[Embedding], q: &Embedding, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let s: f64 = v.as_slice().iter().zip(q.as_slice()).map(|(a, b)| a * b).sum();
            (i, s.clamp(-1.0, 1.0))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Reachability matrix: threshold adjacency, then its transitive closure.
pub fn reachability_oracle(vectors: &[Embedding], threshold: f64) -> Vec<Vec<bool>> {
    let n = vectors.len();
    let mut r = vec![vec![false; n]; n];
    for i in 0..n {
        r[i][i] = true;
        for j in 0..n {
            if i != j && vectors[i].cosine(&vectors[j]) >= threshold {
                r[i][j] = true;
            }
        }
    }
    // Warshall's transitive closure
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

/// Smallest order statistic covering at least 90% of the values.
pub fn p90_oracle(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = s.len();
    let j = (1..=m).find(|&j| 10 * j >= 9 * m).unwrap();
    s[j - 1]
}

/// Direct evaluation of the fusion formula by linear rank lookup.
pub fn rrf_oracle(sparse: &[u32], dense: &[u32], k: f64) -> Vec<(u32, f64)> {
    let mut keys: Vec<u32> = sparse.iter().chain(dense).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let term = |list: &[u32], c: u32| list.iter().position(|&x| x == c).map_or(0.0, |p| 1.0 / (k + (p + 1) as f64));
    keys.into_iter().map(|c| (c, term(sparse, c) + term(dense, c))).collect()
}

pub fn random_ranked(rng: &mut ChaCha8Rng, universe: u32) -> Vec<u32> {
    let mut all: Vec<u32> = (0..universe).collect();
    all.shuffle(rng);
    all.truncate(rng.random_range(0..=universe as usize));
    all
}

pub fn ranked(list: &[u32]) -> RankedList<u32> {
    RankedList::new(list.to_vec())
}

const FIELDS: &[&str] = &["company", "region", "year", "store", "brand", "channel", "city"];
const WORDS: &[&str] = &["Apple", "Huawei", "east", "Xiaomi", "north", "grocery", "Oppo"];

fn random_scalar(rng: &mut ChaCha8Rng) -> Scalar {
    if rng.random_bool(0.5) {
        Scalar::Number(f64::from(rng.random_range(0..30u32)))
    } else {
        Scalar::Text(WORDS[rng.random_range(0..WORDS.len())].to_string())
    }
}

pub fn random_filter(rng: &mut ChaCha8Rng) -> Filter {
    let field = FIELDS[rng.random_range(0..FIELDS.len())];
    let (op, value) = match rng.random_range(0..4) {
        0 => {
            let a = rng.random_range(0..20u32);
            let b = a + rng.random_range(1..10u32);
            (
                FilterOp::Between,
                FilterValue::List(vec![Scalar::Number(f64::from(a)), Scalar::Number(f64::from(b))]),
            )
        }
        1 => (
            FilterOp::In,
            FilterValue::List((0..rng.random_range(1..4)).map(|_| random_scalar(rng)).collect()),
        ),
        2 => (FilterOp::Gt, FilterValue::Single(Scalar::Number(f64::from(rng.random_range(0..100u32))))),
        _ => (FilterOp::Eq, FilterValue::Single(random_scalar(rng))),
    };
    let mut f = Filter::new(field, op, value);
    if rng.random_bool(0.2) {
        f.stage = Stage::PostAgg;
    }
    f
}

pub fn random_dsl(rng: &mut ChaCha8Rng) -> DslSpec {
    let aggs = [Aggregation::Sum, Aggregation::Count, Aggregation::Avg, Aggregation::Max];
    let mut d = DslSpec::new(format!("t_{}", rng.random_range(0..5)));
    let mut dims: Vec<&str> = FIELDS.to_vec();
    dims.shuffle(rng);
    d.dimensions = dims[..rng.random_range(0..3)].iter().map(|s| s.to_string()).collect();
    d.measures = (0..rng.random_range(1..3))
        .map(|i| Measure::new(format!("m{i}"), aggs[rng.random_range(0..aggs.len())]))
        .collect();
    d.filters = (0..rng.random_range(0..4)).map(|_| random_filter(rng)).collect();
    d
}

/// Cosmetic rewrites that must not change equality: reordering, case of
/// strings and of the table, IN list order.
pub fn shuffled_equivalent(rng: &mut ChaCha8Rng, d: &DslSpec) -> DslSpec {
    let mut e = d.clone();
    if rng.random_bool(0.5) {
        e.table = e.table.to_uppercase();
    }
    e.dimensions.shuffle(rng);
    e.measures.shuffle(rng);
    e.filters.shuffle(rng);
    for f in &mut e.filters {
        if let (FilterOp::In, FilterValue::List(v)) = (f.op, &mut f.value) {
            v.shuffle(rng);
            for s in v.iter_mut() {
                if let Scalar::Text(t) = s {
                    *t = t.to_lowercase();
                }
            }
        }
    }
    e
}

/// Which components a mutation broke, as (tb, dm, ms, ft) truth values.
pub fn mutated(rng: &mut ChaCha8Rng, d: &DslSpec) -> (DslSpec, [bool; 4]) {
    let mut e = shuffled_equivalent(rng, d);
    let mut truth = [true; 4];
    match rng.random_range(0..4) {
        0 => {
            e.table.push_str("_x");
            truth[0] = false;
        }
        1 => {
            e.dimensions.push("extra_dim".into());
            truth[1] = false;
        }
        2 => {
            e.measures[0].agg = if e.measures[0].agg == Aggregation::Min { Aggregation::Sum } else { Aggregation::Min };
            truth[2] = false;
        }
        _ => {
            e.filters.push(Filter::new("zz", FilterOp::Eq, FilterValue::number(1.0)));
            truth[3] = false;
        }
    }
    (e, truth)
}

/// Identity plus Gaussian noise, so the projection is non-trivial.
pub fn noisy_model(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> skelcache::embed::ProjectionModel {
    let mut m = skelcache::embed::ProjectionModel::identity(dim, 0);
    for w in m.weights_mut() {
        *w += scale * rng.sample::<f64, _>(StandardNormal);
    }
    m
}

pub struct GradCheck {
    pub relative_error: f64,
    pub max_abs_diff: f64,
}

/// Central differences with step `h` on the chosen weight entries,
/// compared against the analytic gradient on the same entries.
pub fn grad_check(
    model: &skelcache::embed::ProjectionModel,
    feats: [&Embedding; 3],
    alpha: f64,
    margin: f64,
    entries: &[usize],
    h: f64,
) -> GradCheck {
    use skelcache::embed::{accumulate_gradient, triplet_loss_features};
    let mut analytic = vec![0.0; model.weights().len()];
    accumulate_gradient(model, feats, alpha, margin, 1.0, &mut analytic);
    let mut probe = model.clone();
    let (mut diff2, mut a2, mut n2, mut max_abs) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &e in entries {
        let w = probe.weights()[e];
        probe.weights_mut()[e] = w + h;
        let up = triplet_loss_features(&probe, feats, alpha, margin);
        probe.weights_mut()[e] = w - h;
        let down = triplet_loss_features(&probe, feats, alpha, margin);
        probe.weights_mut()[e] = w;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[e];
        diff2 += (a - numeric).powi(2);
        a2 += a * a;
        n2 += numeric * numeric;
        max_abs = max_abs.max((a - numeric).abs());
    }
    GradCheck { relative_error: diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(1e-12), max_abs_diff: max_abs }
}

/// Weight entries whose gradient can be non-zero: any row, columns in the
/// support of one of the three feature vectors.
pub fn support_entries(rng: &mut ChaCha8Rng, feats: [&Embedding; 3], count: usize) -> Vec<usize> {
    let dim = feats[0].dim();
    let cols: Vec<usize> = (0..dim).filter(|&j| feats.iter().any(|f| f.as_slice()[j] != 0.0)).collect();
    (0..count).map(|_| rng.random_range(0..dim) * dim + cols[rng.random_range(0..cols.len())]).collect()
}
