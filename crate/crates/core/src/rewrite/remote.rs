use log::warn;

use super::RewritePrompt;
use crate::dsl::DslSpec;
use crate::error::{Error, Result};
use crate::generator::Generator;

/// Pulls the first balanced JSON object out of a completion and parses it
/// as a DSL. Surrounding prose and code fences are ignored.
pub fn parse_dsl_completion(text: &str) -> Result<DslSpec> {
    let object = first_object(text).ok_or_else(|| Error::InvalidDsl("completion has no JSON object".into()))?;
    DslSpec::from_json(object)
}

fn first_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Model-backed rewrite with one repair attempt.
pub fn remote_generate(prompt: &RewritePrompt, gen: &dyn Generator) -> Result<DslSpec> {
    remote_generate_with(prompt, gen, 1)
}

pub fn remote_generate_with(prompt: &RewritePrompt, gen: &dyn Generator, repairs: usize) -> Result<DslSpec> {
    let base = prompt.render();
    let mut text = base.clone();
    let mut last_err = None;
    for attempt in 0..=repairs {
        let completion = gen.generate(&text).map_err(|e| Error::Generator(e.to_string()))?;
        match parse_dsl_completion(&completion) {
            Ok(dsl) => return Ok(dsl),
            Err(e) => {
                warn!("unparseable DSL completion (attempt {}): {e}", attempt + 1);
                text = format!(
                    "{base}\nYour previous reply could not be used ({e}):\n{completion}\n\
                     Reply again with only the corrected JSON object."
                );
                last_err = Some(e);
            }
        }
    }
    Err(Error::Generator(format!(
        "no valid DSL after {} attempts: {}",
        repairs + 1,
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_object_from_prose() {
        let text = "Sure.\n```json\n{\"table\": \"t\", \"filters\": [{\"field\": \"a\", \"op\": \"EQ\", \"value\": \"}\"}]}\n```";
        let d = parse_dsl_completion(text).unwrap();
        assert_eq!(d.table, "t");
        assert_eq!(d.filters.len(), 1);
    }

    #[test]
    fn rejects_missing_object() {
        assert!(parse_dsl_completion("no json here").is_err());
        assert!(parse_dsl_completion("{\"table\": ").is_err());
    }
}
