mod common;

use rand::Rng;

use common::*;
use skelcache::cache::{build_similarity_graph, kmeans, select_representatives};
use skelcache::Error;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Minimum inertia over every split into two non-empty groups.
fn best_two_partition(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    for mask in 1..(1u32 << (n - 1)) {
        let mut total = 0.0;
        for side in [true, false] {
            let members: Vec<&Vec<f64>> = (0..n).filter(|&i| ((mask >> i) & 1 == 1) == side).map(|i| &points[i]).collect();
            let dim = points[0].len();
            let mean: Vec<f64> = (0..dim).map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64).collect();
            total += members.iter().map(|p| sq(p, &mean)).sum::<f64>();
        }
        best = best.min(total);
    }
    best
}

#[test]
fn separated_blobs_reach_the_optimal_two_partition() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let points: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let centre = if i % 2 == 0 { 0.0 } else { 10.0 };
                vec![centre + r.random_range(-1.0..1.0), centre + r.random_range(-1.0..1.0)]
            })
            .collect();
        let a = kmeans(&points, 2, seed).unwrap();
        assert!((a.inertia() - best_two_partition(&points)).abs() < 1e-9, "seed {seed}");
    }
}

#[test]
fn lloyd_ends_at_a_fixed_point_with_monotone_inertia() {
    for seed in 0..30 {
        let mut r = rng(100 + seed);
        let n = r.random_range(3..60);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| r.random_range(-5.0..5.0)).collect()).collect();
        let m = r.random_range(1..=n.min(6));
        let a = kmeans(&points, m, seed).unwrap();
        for w in a.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", a.inertia_history);
        }
        for (i, p) in points.iter().enumerate() {
            let own = sq(p, &a.centroids[a.labels[i]]);
            for c in &a.centroids {
                assert!(own <= sq(p, c) + 1e-9);
            }
        }
        assert!(a.labels.iter().all(|&l| l < m));
    }
}

#[test]
fn too_many_clusters_rejected() {
    let points = vec![vec![0.0], vec![1.0]];
    assert!(matches!(kmeans(&points, 3, 0), Err(Error::TooManyClusters { .. })));
    assert!(kmeans(&points, 0, 0).is_err());
}

#[test]
fn representatives_are_high_degree_members() {
    for seed in 0..50 {
        let mut r = rng(seed);
        let vs = clustered_vectors(&mut r, 30, 6);
        let g = build_similarity_graph(&vs, 0.9);
        let ids: Vec<String> = (0..30).map(|i| format!("q{i:02}")).collect();
        let reps = select_representatives(&g, &ids, 4, 2);
        for comp in g.components() {
            let chosen: Vec<usize> = reps.iter().copied().filter(|v| comp.contains(v)).collect();
            assert!(!chosen.is_empty() && chosen.len() <= 2);
            let max_deg = comp.iter().map(|&v| g.degree(v)).max().unwrap();
            if max_deg <= 4 {
                // fallback keeps exactly one vertex of maximal degree
                assert_eq!(chosen.len(), 1);
                assert_eq!(g.degree(chosen[0]), max_deg);
            } else {
                assert!(chosen.iter().all(|&v| g.degree(v) > 4));
                let weakest = chosen.iter().map(|&v| g.degree(v)).min().unwrap();
                let stronger = comp.iter().filter(|&&v| g.degree(v) > weakest).count();
                assert!(stronger < chosen.len());
            }
        }
    }
}
