//! Knowledge sources for rewriting: column-value aliases resolved by hybrid
//! BM25 + dense retrieval with reciprocal rank fusion, business terms found
//! through an LSH index, and DSL configuration rules injected verbatim.

mod bm25;
mod lsh;
mod rrf;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bm25::{bm25_rank, Bm25Index};
pub use lsh::{lsh_build, resolve_term, HyperplaneHasher, LshIndex, TermIndex, TERMS_RETURNED};
pub use rrf::{rrf_fuse, rrf_score, Fused};

use crate::config::Config;
use crate::dsl::FilterOp;
use crate::embed::{Embedding, ProjectionModel};
use crate::error::{Error, Result};

/// Candidates in rank order; ranks are 1-based and gapless.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList<K> {
    items: Vec<K>,
}

impl<K> RankedList<K> {
    pub fn new(items: Vec<K>) -> Self {
        RankedList { items }
    }

    pub fn empty() -> Self {
        RankedList { items: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[K] {
        &self.items
    }

    /// `(candidate, rank)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&K, usize)> {
        self.items.iter().zip(1..)
    }

    pub fn map<T>(self, f: impl FnMut(K) -> T) -> RankedList<T> {
        RankedList {
            items: self.items.into_iter().map(f).collect(),
        }
    }
}

impl<K: PartialEq> RankedList<K> {
    pub fn rank_of(&self, c: &K) -> Option<usize> {
        self.items.iter().position(|x| x == c).map(|p| p + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueAlias {
    pub canonical: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub column: String,
}

impl ValueAlias {
    /// The canonical form followed by the aliases, without duplicates.
    pub fn surfaces(&self) -> Vec<&str> {
        let mut out: Vec<&str> = vec![self.canonical.as_str()];
        for a in &self.aliases {
            if !out.iter().any(|s| s.eq_ignore_ascii_case(a)) {
                out.push(a);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.canonical.trim().is_empty() || self.column.trim().is_empty() {
            return Err(Error::InvalidInput("value alias needs a canonical value and a column".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermDefinition {
    pub term: String,
    #[serde(default)]
    pub definition: String,
    #[serde(default)]
    pub mapped_columns: Vec<String>,
}

impl TermDefinition {
    pub fn validate(&self) -> Result<()> {
        if self.term.trim().is_empty() {
            return Err(Error::InvalidInput("term is empty".into()));
        }
        if self.mapped_columns.is_empty() && self.definition.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "term `{}` needs a definition or mapped columns",
                self.term
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DslRule {
    pub data_type: String,
    /// Natural-language predicate, e.g. "is about".
    pub pattern: String,
    pub op: FilterOp,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DslRuleSet {
    #[serde(default)]
    pub rules: Vec<DslRule>,
    #[serde(default)]
    pub notes: String,
}

impl DslRuleSet {
    pub fn builtin() -> Self {
        let rule = |data_type: &str, pattern: &str, op| DslRule {
            data_type: data_type.into(),
            pattern: pattern.into(),
            op,
        };
        DslRuleSet {
            rules: vec![
                rule("string", "equals", FilterOp::Eq),
                rule("string", "=", FilterOp::Eq),
                rule("string", "contains", FilterOp::Contains),
                rule("string", "is about", FilterOp::Contains),
                rule("int", "more than", FilterOp::Gt),
                rule("int", "at least", FilterOp::Gte),
                rule("int", "less than", FilterOp::Lt),
                rule("date", "from .. to", FilterOp::Between),
            ],
            notes: "Aggregations: SUM, COUNT, AVG, MIN, MAX, COUNT_DISTINCT. \
                    BETWEEN takes two ordered values; IN takes a non-empty list. \
                    Filters on aggregated values use stage POST_AGG."
                .into(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            out.push_str(&format!("- {}: \"{}\" -> {}\n", r.data_type, r.pattern, r.op.as_str()));
        }
        if !self.notes.is_empty() {
            out.push_str(&self.notes);
            out.push('\n');
        }
        out
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub aliases: Vec<ValueAlias>,
    pub terms: Vec<TermDefinition>,
    pub rules: DslRuleSet,
}

impl KnowledgeBase {
    pub fn validate(&self) -> Result<()> {
        self.aliases.iter().try_for_each(ValueAlias::validate)?;
        self.terms.iter().try_for_each(TermDefinition::validate)
    }

    /// Loads the three knowledge files; any path may be omitted.
    pub fn load(aliases: Option<&Path>, terms: Option<&Path>, rules: Option<&Path>) -> Result<Self> {
        let kb = KnowledgeBase {
            aliases: aliases.map(load_json).transpose()?.unwrap_or_default(),
            terms: terms.map(load_json).transpose()?.unwrap_or_default(),
            rules: rules.map(load_json).transpose()?.unwrap_or_else(DslRuleSet::builtin),
        };
        kb.validate()?;
        Ok(kb)
    }
}

/// A flattened alias surface, ordered lexicographically for tie-breaks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AliasKey {
    pub surface: String,
    pub column: String,
    pub canonical: String,
}

#[derive(Debug, Clone)]
pub struct ValueIndex {
    keys: Vec<AliasKey>,
    bm25: Bm25Index,
    vectors: Vec<Embedding>,
}

impl ValueIndex {
    pub fn new(aliases: &[ValueAlias], model: &ProjectionModel) -> Self {
        let keys: Vec<AliasKey> = aliases
            .iter()
            .flat_map(|a| {
                a.surfaces().into_iter().map(|s| AliasKey {
                    surface: s.to_string(),
                    column: a.column.clone(),
                    canonical: a.canonical.clone(),
                })
            })
            .collect();
        let surfaces: Vec<&str> = keys.iter().map(|k| k.surface.as_str()).collect();
        let vectors = surfaces.iter().map(|s| model.encode(s)).collect();
        ValueIndex {
            bm25: Bm25Index::new(&surfaces),
            keys,
            vectors,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn sparse(&self, value: &str, k: usize) -> RankedList<AliasKey> {
        self.bm25.rank(value, k).map(|i| self.keys[i].clone())
    }

    pub fn dense(&self, value: &str, model: &ProjectionModel, k: usize, min_similarity: f64) -> RankedList<AliasKey> {
        dense_rank(&model.encode(value), &self.vectors, k, min_similarity).map(|i| self.keys[i].clone())
    }
}

/// Cosine top-`k` over `corpus`, dropping entries below `min_similarity`;
/// ties by position.
pub fn dense_rank(query: &Embedding, corpus: &[Embedding], k: usize, min_similarity: f64) -> RankedList<usize> {
    let mut scored: Vec<(usize, f64)> = corpus
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.cosine(query)))
        .filter(|&(_, s)| s >= min_similarity)
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    RankedList::new(scored.into_iter().map(|(i, _)| i).collect())
}

/// Maps an extracted query value to `(column, canonical value)`.
pub fn resolve_value(
    value: &str,
    index: &ValueIndex,
    model: &ProjectionModel,
    config: &Config,
) -> Option<(String, String)> {
    if index.is_empty() || value.trim().is_empty() {
        return None;
    }
    let k = config.knowledge_top_k;
    let sparse = index.sparse(value, k);
    let dense = index.dense(value, model, k, config.dense_min_similarity);
    let fused = rrf_fuse(&sparse, &dense, config.k_rrf);
    match fused.scores.first() {
        Some((key, score)) if *score > 0.0 => Some((key.column.clone(), key.canonical.clone())),
        _ => None,
    }
}

/// Retrieval structures built once from a [`KnowledgeBase`].
#[derive(Debug, Clone)]
pub struct KnowledgeIndex {
    pub values: ValueIndex,
    pub terms: TermIndex,
    pub rules: DslRuleSet,
    /// Encoder used for knowledge lookups.
    pub model: ProjectionModel,
}

impl KnowledgeIndex {
    pub fn build(kb: &KnowledgeBase, model: ProjectionModel, config: &Config) -> Result<Self> {
        Ok(KnowledgeIndex {
            values: ValueIndex::new(&kb.aliases, &model),
            terms: lsh_build(&kb.terms, &model, config.lsh_bands, config.lsh_rows, config.rng_seed)?,
            rules: kb.rules.clone(),
            model,
        })
    }

    pub fn resolve_value(&self, value: &str, config: &Config) -> Option<(String, String)> {
        resolve_value(value, &self.values, &self.model, config)
    }

    pub fn resolve_terms(&self, query: &str, config: &Config) -> Vec<TermDefinition> {
        resolve_term(query, &self.terms, &self.model, config.dense_min_similarity)
    }
}
