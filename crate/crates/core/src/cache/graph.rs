//! Thresholded cosine-similarity graphs and their connected components.

use serde::{Deserialize, Serialize};

use crate::embed::dot;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    pub adjacency: Vec<Vec<usize>>,
    /// Component label per vertex, numbered by lowest member index.
    pub component: Vec<usize>,
}

impl SimilarityGraph {
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn num_components(&self) -> usize {
        self.component.iter().max().map_or(0, |m| m + 1)
    }

    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_components()];
        for (v, &c) in self.component.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

/// Undirected graph with an edge wherever cosine similarity reaches
/// `threshold`. Vectors are assumed unit-norm.
pub fn build_similarity_graph<V: AsRef<[f64]>>(vectors: &[V], threshold: f64) -> SimilarityGraph {
    let n = vectors.len();
    let mut adjacency = vec![Vec::new(); n];
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if dot(vectors[i].as_ref(), vectors[j].as_ref()) >= threshold {
                adjacency[i].push(j);
                adjacency[j].push(i);
                uf.union(i, j);
            }
        }
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    let component = (0..n)
        .map(|v| {
            let r = uf.find(v);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            label_of_root[r]
        })
        .collect();
    SimilarityGraph { adjacency, component }
}

/// Per component: vertices with degree above `degree_threshold`, highest
/// degree first (ties by ascending id), capped at `top_k`. A component with
/// no such vertex contributes its single highest-degree vertex. Returned
/// sorted by vertex index.
pub fn select_representatives(
    graph: &SimilarityGraph,
    ids: &[String],
    degree_threshold: usize,
    top_k: usize,
) -> Vec<usize> {
    let mut chosen = Vec::new();
    for members in graph.components() {
        let mut ranked = members.clone();
        ranked.sort_by(|&a, &b| {
            graph
                .degree(b)
                .cmp(&graph.degree(a))
                .then_with(|| ids[a].cmp(&ids[b]))
        });
        let above: Vec<usize> = ranked
            .iter()
            .copied()
            .filter(|&v| graph.degree(v) > degree_threshold)
            .take(top_k)
            .collect();
        if above.is_empty() {
            chosen.extend(ranked.first().copied());
        } else {
            chosen.extend(above);
        }
    }
    chosen.sort_unstable();
    chosen
}
