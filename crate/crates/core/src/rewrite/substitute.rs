use std::collections::{BTreeMap, HashSet};

use log::warn;

use super::RewritePrompt;
use crate::dsl::{DslSpec, Filter, FilterOp, FilterValue, Scalar};
use crate::error::{Error, Result};
use crate::skeleton::{normalize, PlaceholderKind};

const TIME_HINTS: &[&str] = &["year", "date", "month", "day", "time", "quarter", "week", "period"];

fn time_like(field: &str) -> bool {
    let f = field.to_lowercase();
    TIME_HINTS.iter().any(|h| f.contains(h))
}

fn to_scalar(kind: PlaceholderKind, raw: &str) -> Scalar {
    match kind {
        PlaceholderKind::Time | PlaceholderKind::Num => Scalar::infer(raw),
        PlaceholderKind::Ent | PlaceholderKind::Val => Scalar::Text(raw.to_string()),
    }
}

/// `(filter index, value position)` of one exemplar slot.
type Slot = (usize, usize);

/// Deterministic rewrite: adapt the most similar exemplar's DSL by swapping
/// in the query's values and the resolved knowledge.
pub fn substitute_generate(prompt: &RewritePrompt) -> Result<DslSpec> {
    let top = prompt
        .exemplars
        .first()
        .ok_or_else(|| Error::InvalidInput("no exemplar to substitute into".into()))?;
    let mut dsl = top.dsl.clone();
    dsl.table = prompt.target_table.clone();

    // knowledge first: a resolved value owns its column
    let mut touched: HashSet<usize> = HashSet::new();
    let mut resolved_surfaces: Vec<String> = Vec::new();
    for rv in &prompt.resolved_values {
        resolved_surfaces.push(normalize(&rv.surface));
        let existing = dsl
            .filters
            .iter()
            .position(|f| f.field.eq_ignore_ascii_case(&rv.column));
        match existing {
            Some(i) => {
                let f = &mut dsl.filters[i];
                if !matches!(f.op, FilterOp::Eq | FilterOp::Neq | FilterOp::Contains) {
                    f.op = FilterOp::Eq;
                }
                f.value = FilterValue::text(rv.canonical.clone());
                touched.insert(i);
            }
            None => {
                dsl.filters
                    .push(Filter::new(rv.column.clone(), FilterOp::Eq, FilterValue::text(rv.canonical.clone())));
                touched.insert(dsl.filters.len() - 1);
            }
        }
    }

    let mut assigned: BTreeMap<usize, Vec<(usize, Scalar)>> = BTreeMap::new();
    for kind in [PlaceholderKind::Ent, PlaceholderKind::Val, PlaceholderKind::Time, PlaceholderKind::Num] {
        let spans: Vec<String> = top
            .skeleton
            .placeholders
            .iter()
            .filter(|p| p.kind == kind)
            .map(|p| p.span.clone())
            .collect();
        let values: Vec<&String> = prompt
            .extracted_values
            .iter()
            .filter(|(k, _)| *k == kind)
            .map(|(_, v)| v)
            .collect();
        if values.is_empty() {
            continue;
        }
        let mut slots = span_slots(&dsl, &spans, &touched);
        if slots.iter().all(Option::is_none) {
            slots = fallback_slots(&dsl, kind, &touched);
        }
        for (j, value) in values.into_iter().enumerate() {
            if resolved_surfaces.contains(&normalize(value)) {
                continue;
            }
            match slots.get(j).copied().flatten() {
                Some((fi, pos)) => assigned.entry(fi).or_default().push((pos, to_scalar(kind, value))),
                None => warn!("no {kind} slot for value {value:?}; keeping exemplar values"),
            }
        }
    }

    for (fi, mut vals) in assigned {
        vals.sort_by_key(|(pos, _)| *pos);
        let f = &mut dsl.filters[fi];
        let arity = f.value.scalars().len();
        let mut new: Vec<Scalar> = f.value.scalars().to_vec();
        for (pos, v) in &vals {
            if *pos < new.len() {
                new[*pos] = v.clone();
            }
        }
        f.value = match f.op {
            FilterOp::Between if vals.len() < arity => {
                // one value for a range collapses to equality
                f.op = FilterOp::Eq;
                FilterValue::Single(vals[0].1.clone())
            }
            FilterOp::Between => {
                if let [Scalar::Number(a), Scalar::Number(b)] = new.as_slice() {
                    if a > b {
                        new.swap(0, 1);
                    }
                }
                FilterValue::List(new)
            }
            FilterOp::In => FilterValue::List(new),
            _ => FilterValue::Single(new.swap_remove(0)),
        };
    }

    dsl.validate()?;
    Ok(dsl)
}

/// For the j-th exemplar span, the first unused filter value spelling it.
fn span_slots(dsl: &DslSpec, spans: &[String], touched: &HashSet<usize>) -> Vec<Option<Slot>> {
    let mut used: HashSet<Slot> = HashSet::new();
    spans
        .iter()
        .map(|span| {
            let found = dsl.filters.iter().enumerate().find_map(|(fi, f)| {
                if touched.contains(&fi) {
                    return None;
                }
                f.value
                    .scalars()
                    .iter()
                    .enumerate()
                    .map(|(pos, _)| (fi, pos))
                    .find(|slot| {
                        !used.contains(slot) && normalize(&f.value.scalars()[slot.1].to_string()) == *span
                    })
            });
            if let Some(s) = found {
                used.insert(s);
            }
            found
        })
        .collect()
}

/// Candidate slots by filter shape when no exemplar span can be located.
fn fallback_slots(dsl: &DslSpec, kind: PlaceholderKind, touched: &HashSet<usize>) -> Vec<Option<Slot>> {
    let mut slots = Vec::new();
    for (fi, f) in dsl.filters.iter().enumerate() {
        if touched.contains(&fi) {
            continue;
        }
        let scalars = f.value.scalars();
        let textual = scalars.iter().all(Scalar::is_text);
        let fits = match kind {
            PlaceholderKind::Time => time_like(&f.field),
            PlaceholderKind::Ent | PlaceholderKind::Val => {
                !time_like(&f.field) && textual && matches!(f.op, FilterOp::Eq | FilterOp::Contains | FilterOp::In)
            }
            PlaceholderKind::Num => !time_like(&f.field) && !textual,
        };
        if fits {
            slots.extend((0..scalars.len()).map(|pos| Some((fi, pos))));
        }
    }
    slots
}
