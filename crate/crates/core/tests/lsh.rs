mod common;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::*;
use skelcache::embed::{featurize, ProjectionModel};
use skelcache::knowledge::{lsh_build, resolve_term, HyperplaneHasher, LshIndex, TermDefinition};
use skelcache::Config;

fn word(r: &mut ChaCha8Rng) -> String {
    let n = r.random_range(5..11);
    (0..n).map(|_| char::from(b'a' + r.random_range(0..26u8))).collect()
}

fn one_edit(r: &mut ChaCha8Rng, s: &str) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    let p = r.random_range(0..chars.len());
    chars[p] = if chars[p] == 'z' { 'y' } else { 'z' };
    chars.into_iter().collect()
}

/// Fraction of misspelled queries whose exact nearest term is among the
/// LSH candidates.
#[test]
fn candidate_recall_against_brute_force() {
    let cfg = Config::default();
    let mut r = rng(2024);
    let terms: Vec<String> = (0..100).map(|_| format!("{} {}", word(&mut r), word(&mut r))).collect();
    let vecs: Vec<_> = terms.iter().map(|t| featurize(t, cfg.embed_dim)).collect();
    let mut idx = LshIndex::new(HyperplaneHasher::new(cfg.embed_dim, cfg.lsh_bands, cfg.lsh_rows, cfg.rng_seed).unwrap());
    for v in &vecs {
        idx.insert(v.clone());
    }
    let mut found = 0;
    let mut candidates = 0;
    for t in &terms {
        let q = featurize(&one_edit(&mut r, t), cfg.embed_dim);
        let nn = (0..vecs.len()).max_by(|&a, &b| vecs[a].cosine(&q).total_cmp(&vecs[b].cosine(&q)).then(b.cmp(&a))).unwrap();
        let c = idx.candidates(&q);
        candidates += c.len();
        if c.contains(&nn) {
            found += 1;
        }
    }
    let recall = f64::from(found) / 100.0;
    assert!(recall >= 0.9, "recall {recall}");
    // still far from a full scan
    assert!(candidates < 100 * 100 / 4, "mean candidates {}", candidates / 100);
}

#[test]
fn orthogonal_vectors_agree_on_half_the_bits() {
    let mut r = rng(8);
    let rows = 8;
    let hasher = HyperplaneHasher::new(64, 32, rows, 3).unwrap();
    let mut same = 0u32;
    let mut total = 0u32;
    for _ in 0..50 {
        let a = random_unit(&mut r, 64);
        let b = random_unit(&mut r, 64);
        // project out the shared direction so cos(a, b) = 0
        let d: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
        let b = skelcache::embed::Embedding::from_raw(b.as_slice().iter().zip(a.as_slice()).map(|(y, x)| y - d * x).collect()).unwrap();
        for (ka, kb) in hasher.signature(a.as_slice()).into_iter().zip(hasher.signature(b.as_slice())) {
            let mask = (1u64 << rows) - 1;
            same += rows as u32 - ((ka ^ kb) & mask).count_ones();
            total += rows as u32;
        }
    }
    let rate = f64::from(same) / f64::from(total);
    assert!((rate - 0.5).abs() <= 0.1, "collision rate {rate}");
}

#[test]
fn identical_vectors_share_every_bucket() {
    let h = HyperplaneHasher::new(32, 16, 8, 1).unwrap();
    let v = featurize("gross merchandise value", 32);
    assert_eq!(h.signature(v.as_slice()), h.signature(v.clone().as_slice()));
    let mut idx = LshIndex::new(h);
    let id = idx.insert(v.clone());
    assert_eq!(idx.candidates(&v), vec![id]);
}

#[test]
fn rerank_follows_exact_cosine() {
    let mut r = rng(31);
    let mut idx = LshIndex::new(HyperplaneHasher::new(16, 12, 3, 9).unwrap());
    let vs = clustered_vectors(&mut r, 80, 16);
    for v in &vs {
        idx.insert(v.clone());
    }
    for _ in 0..20 {
        let q = random_unit(&mut r, 16);
        let got = idx.query(&q, usize::MAX);
        let mut want: Vec<(usize, f64)> = idx.candidates(&q).into_iter().map(|i| (i, vs[i].cosine(&q))).collect();
        want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        assert_eq!(got, want);
    }
}

#[test]
fn dgmv_question_finds_its_definition() {
    let cfg = Config::default();
    let model = ProjectionModel::identity(cfg.embed_dim, 0);
    let terms = vec![
        TermDefinition {
            term: "DGMV".into(),
            definition: "direct gross merchandise value".into(),
            mapped_columns: vec!["direct_gmv".into()],
        },
        TermDefinition { term: "MAU".into(), definition: "monthly active users".into(), mapped_columns: vec![] },
        TermDefinition { term: "ARPU".into(), definition: "average revenue per user".into(), mapped_columns: vec![] },
    ];
    let idx = lsh_build(&terms, &model, cfg.lsh_bands, cfg.lsh_rows, cfg.rng_seed).unwrap();
    let got = resolve_term("What is the DGMV for iPhone 17?", &idx, &model, cfg.dense_min_similarity);
    assert_eq!(got.first().map(|t| t.term.as_str()), Some("DGMV"));
    let empty = lsh_build(&[], &model, cfg.lsh_bands, cfg.lsh_rows, cfg.rng_seed).unwrap();
    assert!(resolve_term("What is the DGMV?", &empty, &model, 0.0).is_empty());
}
