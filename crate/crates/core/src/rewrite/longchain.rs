use std::collections::HashSet;

use log::debug;
use serde::{Deserialize, Serialize};

use super::remote::parse_dsl_completion;
use crate::config::Config;
use crate::dsl::{Aggregation, DslSpec, Filter, FilterOp, FilterValue, Measure, Query, Scalar};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::knowledge::{bm25_rank, dense_rank, rrf_fuse, KnowledgeIndex};
use crate::skeleton::{extract_skeleton, tokenize, EntityLexicon, PlaceholderKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    /// One of `string`, `int`, `float`, `date`.
    pub data_type: String,
    #[serde(default)]
    pub description: String,
}

impl ColumnMeta {
    fn numeric(&self) -> bool {
        matches!(self.data_type.as_str(), "int" | "float" | "double" | "number")
    }

    fn temporal(&self) -> bool {
        self.data_type == "date" || ["year", "date", "month", "day", "time"].iter().any(|h| self.name.contains(h))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMeta {
    pub table: String,
    #[serde(default)]
    pub description: String,
    pub columns: Vec<ColumnMeta>,
}

impl TableMeta {
    fn document(&self) -> String {
        let cols: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("{} {}", c.name.replace('_', " "), c.description))
            .collect();
        format!("{} {} {}", self.table.replace('_', " "), self.description, cols.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongChainOutput {
    pub dsl: DslSpec,
    pub generator_calls: usize,
    pub table_candidates: Vec<String>,
}

/// Full pipeline for queries the cache cannot answer: query analysis, table
/// selection and component generation, one generator call each. Completions
/// that are not usable JSON fall back to rule-based construction.
pub fn longchain_translate(
    query: &Query,
    tables: &[TableMeta],
    knowledge: &KnowledgeIndex,
    lexicon: &EntityLexicon,
    config: &Config,
    gen: &dyn Generator,
) -> Result<LongChainOutput> {
    let skeleton = extract_skeleton(query, lexicon);
    let values = skeleton.values();
    let terms = knowledge.resolve_terms(&query.text, config);

    let analysis_prompt = format!(
        "Analyze the analytics question below. List the metrics, grouping columns and \
         constraints it asks for.\nQuestion: {}\nSkeleton: {}\nTerms: {}\n",
        query.text,
        skeleton.text,
        terms.iter().map(|t| format!("{} = {}", t.term, t.definition)).collect::<Vec<_>>().join("; ")
    );
    let analysis = gen.generate(&analysis_prompt).map_err(|e| Error::stage("analysis", e))?;
    debug!("analysis: {analysis}");

    if tables.is_empty() {
        return Err(Error::stage("table_selection", "no table metadata available"));
    }
    let mut search_text = query.text.clone();
    for t in &terms {
        search_text.push(' ');
        search_text.push_str(&t.definition);
        for c in &t.mapped_columns {
            search_text.push(' ');
            search_text.push_str(&c.replace('_', " "));
        }
    }
    let docs: Vec<String> = tables.iter().map(TableMeta::document).collect();
    let k = tables.len();
    let sparse = bm25_rank(&search_text, &docs, k);
    let doc_vecs: Vec<_> = docs.iter().map(|d| knowledge.model.encode(d)).collect();
    let dense = dense_rank(&knowledge.model.encode(&search_text), &doc_vecs, k, -1.0);
    let fused = rrf_fuse(&sparse, &dense, config.k_rrf);
    let candidates: Vec<String> = fused.scores.iter().map(|(i, _)| tables[*i].table.clone()).collect();
    let selection_prompt = format!(
        "Pick the single table that answers the question. Reply with the table name only.\n\
         Question: {}\nCandidates:\n{}",
        query.text,
        fused
            .scores
            .iter()
            .map(|(i, _)| format!("- {}: {}", tables[*i].table, tables[*i].description))
            .collect::<Vec<_>>()
            .join("\n")
    );
    let reply = gen.generate(&selection_prompt).map_err(|e| Error::stage("table_selection", e))?;
    let picked = reply.trim().trim_matches('`');
    let table = match tables.iter().find(|t| t.table == picked) {
        Some(t) => t,
        None => &tables[fused.scores.first().map(|(i, _)| *i).unwrap_or(0)],
    };

    let mut component_prompt = format!(
        "Write the DSL JSON for the question using table {}.\nColumns:\n",
        table.table
    );
    for c in &table.columns {
        component_prompt.push_str(&format!("- {} ({}) {}\n", c.name, c.data_type, c.description));
    }
    component_prompt.push_str(&format!("Rules:\n{}Analysis:\n{analysis}\nQuestion: {}\n", knowledge.rules.render(), query.text));
    let reply = gen.generate(&component_prompt).map_err(|e| Error::stage("component_generation", e))?;
    let dsl = match parse_dsl_completion(&reply) {
        Ok(d) => d,
        Err(_) => {
            let mapped: Vec<String> = terms.iter().flat_map(|t| t.mapped_columns.clone()).collect();
            let resolved: Vec<(String, String)> = values
                .iter()
                .filter(|(k, _)| matches!(k, PlaceholderKind::Val | PlaceholderKind::Ent))
                .filter_map(|(_, v)| knowledge.resolve_value(v, config))
                .collect();
            heuristic_dsl(&query.text, table, &values, &resolved, &mapped)
        }
    };
    dsl.validate().map_err(|e| Error::stage("component_generation", e))?;
    Ok(LongChainOutput { dsl, generator_calls: 3, table_candidates: candidates })
}

fn heuristic_dsl(
    text: &str,
    table: &TableMeta,
    values: &[(PlaceholderKind, String)],
    resolved: &[(String, String)],
    term_columns: &[String],
) -> DslSpec {
    let tokens: Vec<String> = tokenize(text);
    let has = |w: &str| tokens.iter().any(|t| t == w);
    let mentioned = |c: &ColumnMeta| {
        term_columns.iter().any(|t| t.eq_ignore_ascii_case(&c.name))
            || c.name.split('_').filter(|p| p.len() >= 3).any(&has)
    };
    let agg = if has("average") || has("avg") || has("mean") {
        Aggregation::Avg
    } else if has("count") || has("many") || has("number") {
        Aggregation::Count
    } else {
        Aggregation::Sum
    };

    let mut dsl = DslSpec::new(table.table.clone());
    for c in table.columns.iter().filter(|c| c.numeric() && !c.temporal() && mentioned(c)) {
        dsl.measures.push(Measure::new(c.name.clone(), agg));
    }
    if dsl.measures.is_empty() {
        let field = table.columns.iter().find(|c| c.numeric() && !c.temporal()).map_or("*", |c| c.name.as_str());
        dsl.measures.push(Measure::new(field, agg));
    }

    // a column named right after "by"/"per" is a grouping
    for (i, t) in tokens.iter().enumerate() {
        if t != "by" && t != "per" {
            continue;
        }
        if let Some(next) = tokens.get(i + 1) {
            if let Some(c) = table.columns.iter().find(|c| !c.numeric() && c.name.split('_').any(|p| p == next)) {
                if !dsl.dimensions.contains(&c.name) {
                    dsl.dimensions.push(c.name.clone());
                }
            }
        }
    }

    let mut used: HashSet<String> = dsl.dimensions.iter().cloned().collect();
    for (column, canonical) in resolved {
        dsl.filters.push(Filter::new(column.clone(), FilterOp::Eq, FilterValue::text(canonical.clone())));
        used.insert(column.clone());
    }
    let mut string_cols = table
        .columns
        .iter()
        .filter(|c| c.data_type == "string" && !c.temporal())
        .map(|c| c.name.clone())
        .collect::<Vec<_>>()
        .into_iter();
    let resolved_count = resolved.len();
    let ents: Vec<&String> = values
        .iter()
        .filter(|(k, _)| matches!(k, PlaceholderKind::Ent | PlaceholderKind::Val))
        .map(|(_, v)| v)
        .collect();
    for v in ents.into_iter().skip(resolved_count) {
        if let Some(col) = string_cols.by_ref().find(|c| !used.contains(c)) {
            used.insert(col.clone());
            dsl.filters.push(Filter::new(col, FilterOp::Eq, FilterValue::text(v.clone())));
        }
    }

    let times: Vec<Scalar> = values
        .iter()
        .filter(|(k, _)| *k == PlaceholderKind::Time)
        .map(|(_, v)| Scalar::infer(v))
        .collect();
    if let Some(col) = table.columns.iter().find(|c| c.temporal()) {
        match times.as_slice() {
            [] => {}
            [one] => dsl.filters.push(Filter::new(col.name.clone(), FilterOp::Eq, FilterValue::Single(one.clone()))),
            [a, b, ..] => {
                let mut pair = vec![a.clone(), b.clone()];
                if let [Scalar::Number(x), Scalar::Number(y)] = pair.as_slice() {
                    if x > y {
                        pair.swap(0, 1);
                    }
                }
                dsl.filters.push(Filter::new(col.name.clone(), FilterOp::Between, FilterValue::List(pair)));
            }
        }
    }
    dsl
}
