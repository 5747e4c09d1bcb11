//! Turning retrieved exemplars and knowledge into the final DSL.
//!
//! The shortcut path assembles one [`RewritePrompt`] and hands it either to
//! the deterministic substitution engine or to a text generator. The
//! long-chain path runs analysis, table selection and component generation
//! as separate generator calls.

mod longchain;
mod remote;
mod substitute;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use longchain::{longchain_translate, ColumnMeta, LongChainOutput, TableMeta};
pub use remote::{parse_dsl_completion, remote_generate, remote_generate_with};
pub use substitute::substitute_generate;

use crate::dsl::DslSpec;
use crate::error::{Error, Result};
use crate::knowledge::{DslRuleSet, TermDefinition};
use crate::skeleton::{PlaceholderKind, Skeleton};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub skeleton: Skeleton,
    pub dsl: DslSpec,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedValue {
    /// Span as it appeared in the query.
    pub surface: String,
    pub column: String,
    pub canonical: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewritePrompt {
    pub exemplars: Vec<Exemplar>,
    pub target_table: String,
    pub extracted_values: Vec<(PlaceholderKind, String)>,
    pub resolved_values: Vec<ResolvedValue>,
    pub resolved_terms: Vec<TermDefinition>,
    pub dsl_rules: DslRuleSet,
    pub user_query: String,
}

/// Knowledge gathered for one query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeContext {
    pub extracted_values: Vec<(PlaceholderKind, String)>,
    pub resolved_values: Vec<ResolvedValue>,
    pub resolved_terms: Vec<TermDefinition>,
    pub dsl_rules: DslRuleSet,
}

/// Orders exemplars by descending similarity. At least one is required.
pub fn assemble_prompt(
    mut exemplars: Vec<Exemplar>,
    target_table: &str,
    knowledge: KnowledgeContext,
    user_query: &str,
) -> Result<RewritePrompt> {
    if exemplars.is_empty() {
        return Err(Error::InvalidInput("rewrite prompt needs at least one exemplar".into()));
    }
    exemplars.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    Ok(RewritePrompt {
        exemplars,
        target_table: target_table.to_string(),
        extracted_values: knowledge.extracted_values,
        resolved_values: knowledge.resolved_values,
        resolved_terms: knowledge.resolved_terms,
        dsl_rules: knowledge.dsl_rules,
        user_query: user_query.to_string(),
    })
}

impl RewritePrompt {
    /// Sections, in order: rules, exemplars, knowledge, query, output format.
    pub fn render(&self) -> String {
        let mut p = String::new();
        p.push_str("You translate analytics questions into DSL JSON by adapting the closest example.\n\n");
        p.push_str("## DSL rules\n");
        p.push_str(&self.dsl_rules.render());
        p.push_str("\n## Examples\n");
        for (i, ex) in self.exemplars.iter().enumerate() {
            let dsl = serde_json::to_string(&ex.dsl).unwrap_or_default();
            let _ = writeln!(p, "{}. Skeleton: {}\n   DSL: {dsl}", i + 1, ex.skeleton.text);
        }
        p.push_str("\n## Knowledge\n### Column values\n");
        for v in &self.resolved_values {
            let _ = writeln!(p, "- \"{}\" means {} = \"{}\"", v.surface, v.column, v.canonical);
        }
        p.push_str("### Business terms\n");
        for t in &self.resolved_terms {
            let _ = writeln!(p, "- {}: {} (columns: {})", t.term, t.definition, t.mapped_columns.join(", "));
        }
        p.push_str("\n## Query\n");
        let _ = writeln!(p, "{}", self.user_query);
        let values: Vec<String> = self
            .extracted_values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let _ = writeln!(p, "Slot values: {}", values.join("; "));
        let _ = writeln!(p, "Target table: {}", self.target_table);
        p.push_str(
            "\n## Output\nReply with exactly one JSON object with keys \
             \"table\", \"measures\", \"dimensions\" and \"filters\", and nothing else.\n",
        );
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(sim: f64, table: &str) -> Exemplar {
        Exemplar {
            skeleton: Skeleton { text: format!("<ENT> {table}"), placeholders: vec![] },
            dsl: DslSpec::new(table),
            similarity: sim,
        }
    }

    #[test]
    fn single_exemplar_with_empty_knowledge() {
        let p = assemble_prompt(vec![ex(0.99, "t")], "t", KnowledgeContext::default(), "apple sales").unwrap();
        assert_eq!(p.exemplars.len(), 1);
        let text = p.render();
        for section in ["## DSL rules", "## Examples", "### Column values", "### Business terms", "## Query", "## Output"] {
            assert!(text.contains(section), "missing {section}");
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let build = || {
            assemble_prompt(vec![ex(0.9, "a"), ex(0.95, "b")], "b", KnowledgeContext::default(), "q")
                .unwrap()
                .render()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn exemplars_sorted_by_similarity() {
        let sims = [0.5, 0.99, 0.7, 0.96, 0.8];
        let exs = sims.iter().enumerate().map(|(i, &s)| ex(s, &format!("t{i}"))).collect();
        let p = assemble_prompt(exs, "t1", KnowledgeContext::default(), "q").unwrap();
        let got: Vec<f64> = p.exemplars.iter().map(|e| e.similarity).collect();
        assert_eq!(got, vec![0.99, 0.96, 0.8, 0.7, 0.5]);
    }

    #[test]
    fn no_exemplars_rejected() {
        assert!(assemble_prompt(vec![], "t", KnowledgeContext::default(), "q").is_err());
    }
}
