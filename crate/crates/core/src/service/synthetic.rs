//! Reproducible template corpus: fixed query skeletons crossed with entity
//! and time lists, gold DSLs derived mechanically from the slot values.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cache::{write_records, HistoricalRecord};
use crate::dsl::{Aggregation, DslSpec, Filter, FilterOp, FilterValue, Measure, Scalar};
use crate::error::{Error, Result};
use crate::knowledge::{DslRuleSet, KnowledgeBase, TermDefinition, ValueAlias};
use crate::rewrite::{ColumnMeta, TableMeta};
use crate::skeleton::{EntityLexicon, PlaceholderKind};

const COMPANIES: &[&str] = &[
    "Apple", "Huawei", "Xiaomi", "Oppo", "Vivo", "Honor", "Lenovo", "Samsung", "Meizu", "Realme", "OnePlus", "ZTE",
    "Sony", "Nokia", "Asus", "Motorola",
];
const REGIONS: &[&str] = &[
    "East China", "South China", "North China", "Central China", "Southwest China", "Northwest China", "Northeast China",
];
const PRODUCT_LINES: &[(&str, &[&str])] = &[
    ("Performance Ads", &["bidding", "auction ads", "cpc ads"]),
    ("Brand Ads", &["splash ads", "display ads"]),
    ("Search Ads", &["keyword ads", "sponsored search"]),
];
const WINDOWS: &[u32] = &[7, 14, 30, 60, 90];
const TOP_N: &[u32] = &[3, 4, 5, 6, 7, 8, 9];

/// Number of distinct templates available.
pub const TEMPLATE_COUNT: usize = 8;

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub records: Vec<HistoricalRecord>,
    pub lexicon: Vec<(String, PlaceholderKind)>,
    pub knowledge: KnowledgeBase,
    pub tables: Vec<TableMeta>,
}

fn eq(field: &str, v: &str) -> Filter {
    Filter::new(field, FilterOp::Eq, FilterValue::text(v))
}

fn year(field: &str, y: u32) -> Filter {
    Filter::new(field, FilterOp::Eq, FilterValue::number(f64::from(y)))
}

fn dsl(table: &str, measure: (&str, Aggregation), dims: &[&str], filters: Vec<Filter>) -> DslSpec {
    let mut d = DslSpec::new(table);
    d.measures.push(Measure::new(measure.0, measure.1));
    d.dimensions = dims.iter().map(|s| s.to_string()).collect();
    d.filters = filters;
    d
}

fn pick<'a, T>(xs: &'a [T], rng: &mut ChaCha8Rng) -> &'a T {
    xs.choose(rng).expect("non-empty list")
}

/// One random instance of template `t`.
fn instance(t: usize, rng: &mut ChaCha8Rng) -> (String, DslSpec) {
    let c = *pick(COMPANIES, rng);
    let y4 = rng.random_range(2019..=2025u32);
    match t {
        0 => {
            let a = rng.random_range(19..25u32);
            let b = rng.random_range(a + 1..=25u32);
            let between = Filter::new(
                "year",
                FilterOp::Between,
                FilterValue::List(vec![Scalar::Number(f64::from(a)), Scalar::Number(f64::from(b))]),
            );
            (
                format!("{c}'s sales from {a} to {b}"),
                dsl("t_device_sales", ("sales_amount", Aggregation::Sum), &[], vec![eq("company", c), between]),
            )
        }
        1 => (
            format!("monthly active users of {c} by region in {y4}"),
            dsl(
                "t_app_activity",
                ("monthly_active_users", Aggregation::Sum),
                &["region"],
                vec![eq("app_vendor", c), year("year", y4)],
            ),
        ),
        2 => {
            let (canonical, aliases) = *pick(PRODUCT_LINES, rng);
            let alias = *pick(aliases, rng);
            (
                format!("ad revenue of {alias} for {c} in {y4}"),
                dsl(
                    "t_ad_revenue",
                    ("revenue", Aggregation::Sum),
                    &[],
                    vec![eq("primary_product_line", canonical), eq("advertiser", c), year("year", y4)],
                ),
            )
        }
        3 => {
            let n = *pick(WINDOWS, rng);
            (
                format!("how many orders did {c} ship in the last {n} days"),
                dsl(
                    "t_orders",
                    ("order_id", Aggregation::Count),
                    &[],
                    vec![eq("merchant", c), eq("order_date", &format!("last {n} days"))],
                ),
            )
        }
        4 => (
            format!("what is the dgmv of {c} in {y4}"),
            dsl("t_gmv", ("direct_gmv", Aggregation::Sum), &[], vec![eq("brand", c), year("year", y4)]),
        ),
        5 => {
            let r = *pick(REGIONS, rng);
            (
                format!("average delivery time for {c} orders in {r} during {y4}"),
                dsl(
                    "t_logistics",
                    ("delivery_hours", Aggregation::Avg),
                    &[],
                    vec![eq("merchant", c), eq("region", r), year("year", y4)],
                ),
            )
        }
        6 => {
            let mut d = *pick(COMPANIES, rng);
            while d == c {
                d = *pick(COMPANIES, rng);
            }
            let pair = FilterValue::List(vec![Scalar::Text(c.into()), Scalar::Text(d.into())]);
            (
                format!("compare revenue of {c} and {d} in {y4}"),
                dsl(
                    "t_revenue",
                    ("revenue", Aggregation::Sum),
                    &["company"],
                    vec![Filter::new("company", FilterOp::In, pair), year("year", y4)],
                ),
            )
        }
        _ => {
            let n = *pick(TOP_N, rng);
            let rank = Filter::new("store_rank", FilterOp::Lte, FilterValue::number(f64::from(n)));
            (
                format!("top {n} stores of {c} by refund amount in {y4}"),
                dsl(
                    "t_refunds",
                    ("refund_amount", Aggregation::Sum),
                    &["store"],
                    vec![eq("merchant", c), rank, year("year", y4)],
                ),
            )
        }
    }
}

fn table(name: &str, description: &str, columns: &[(&str, &str)]) -> TableMeta {
    TableMeta {
        table: name.into(),
        description: description.into(),
        columns: columns
            .iter()
            .map(|(n, t)| ColumnMeta { name: (*n).into(), data_type: (*t).into(), description: String::new() })
            .collect(),
    }
}

fn tables() -> Vec<TableMeta> {
    vec![
        table("t_device_sales", "device sales amount per company and year", &[("company", "string"), ("year", "int"), ("sales_amount", "float")]),
        table(
            "t_app_activity",
            "monthly active users of apps per vendor, region and year",
            &[("app_vendor", "string"), ("region", "string"), ("year", "int"), ("monthly_active_users", "int")],
        ),
        table(
            "t_ad_revenue",
            "advertising revenue per advertiser and product line",
            &[("advertiser", "string"), ("primary_product_line", "string"), ("year", "int"), ("revenue", "float")],
        ),
        table("t_orders", "shipped orders per merchant and date", &[("merchant", "string"), ("order_date", "date"), ("order_id", "string")]),
        table("t_gmv", "gross merchandise value per brand", &[("brand", "string"), ("year", "int"), ("direct_gmv", "float"), ("gmv", "float")]),
        table(
            "t_logistics",
            "delivery durations per merchant and region",
            &[("merchant", "string"), ("region", "string"), ("year", "int"), ("delivery_hours", "float")],
        ),
        table("t_revenue", "company revenue per year", &[("company", "string"), ("year", "int"), ("revenue", "float")]),
        table(
            "t_refunds",
            "refund amounts per store of a merchant",
            &[("merchant", "string"), ("store", "string"), ("store_rank", "int"), ("year", "int"), ("refund_amount", "float")],
        ),
    ]
}

fn knowledge() -> KnowledgeBase {
    KnowledgeBase {
        aliases: PRODUCT_LINES
            .iter()
            .map(|(canonical, aliases)| ValueAlias {
                canonical: (*canonical).into(),
                aliases: aliases.iter().map(|a| a.to_string()).collect(),
                column: "primary_product_line".into(),
            })
            .collect(),
        terms: vec![
            TermDefinition {
                term: "DGMV".into(),
                definition: "direct gross merchandise value sold through first-party channels".into(),
                mapped_columns: vec!["direct_gmv".into()],
            },
            TermDefinition {
                term: "MAU".into(),
                definition: "monthly active users".into(),
                mapped_columns: vec!["monthly_active_users".into()],
            },
        ],
        rules: DslRuleSet::builtin(),
    }
}

fn lexicon_entries() -> Vec<(String, PlaceholderKind)> {
    let mut out: Vec<(String, PlaceholderKind)> = COMPANIES
        .iter()
        .chain(REGIONS)
        .map(|s| (s.to_lowercase(), PlaceholderKind::Ent))
        .collect();
    for (_, aliases) in PRODUCT_LINES {
        out.extend(aliases.iter().map(|a| (a.to_string(), PlaceholderKind::Val)));
    }
    out
}

/// `variants` distinct queries for each of the first `templates` templates.
pub fn gen_synthetic(templates: usize, variants: usize, seed: u64) -> Result<SyntheticCorpus> {
    if templates > TEMPLATE_COUNT {
        return Err(Error::InvalidInput(format!("at most {TEMPLATE_COUNT} templates are available")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(templates * variants);
    for t in 0..templates {
        let mut seen = HashSet::new();
        let mut attempts = 0;
        while seen.len() < variants {
            attempts += 1;
            if attempts > variants * 200 {
                return Err(Error::InvalidInput(format!("template {t} cannot produce {variants} distinct variants")));
            }
            let (query, gold) = instance(t, &mut rng);
            if seen.insert(query.clone()) {
                records.push(HistoricalRecord { id: format!("s{t}-{:03}", seen.len() - 1), query, dsl: gold });
            }
        }
    }
    let used: HashSet<String> = records.iter().map(|r| r.dsl.table.clone()).collect();
    Ok(SyntheticCorpus {
        records,
        lexicon: lexicon_entries(),
        knowledge: knowledge(),
        tables: tables().into_iter().filter(|t| used.contains(&t.table)).collect(),
    })
}

impl SyntheticCorpus {
    /// Every fifth variant of each template is held out.
    pub fn split(&self) -> (Vec<HistoricalRecord>, Vec<HistoricalRecord>) {
        self.records.iter().cloned().partition(|r| {
            let v: usize = r.id.rsplit('-').next().and_then(|s| s.parse().ok()).unwrap_or(0);
            v % 5 != 4
        })
    }

    pub fn entity_lexicon(&self) -> Result<EntityLexicon> {
        EntityLexicon::from_entries(self.lexicon.iter().map(|(s, k)| (s.as_str(), *k)))
    }

    pub fn lexicon_tsv(&self) -> String {
        self.lexicon.iter().map(|(s, k)| format!("{s}\t{k}\n")).collect()
    }

    /// Writes corpus, split, lexicon, knowledge and table files into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let (train, test) = self.split();
        write_records(dir.join("corpus.jsonl"), &self.records)?;
        write_records(dir.join("train.jsonl"), &train)?;
        write_records(dir.join("test.jsonl"), &test)?;
        std::fs::write(dir.join("lexicon.tsv"), self.lexicon_tsv())?;
        write_json(&dir.join("aliases.json"), &self.knowledge.aliases)?;
        write_json(&dir.join("terms.json"), &self.knowledge.terms)?;
        write_json(&dir.join("rules.json"), &self.knowledge.rules)?;
        write_json(&dir.join("tables.json"), &self.tables)?;
        Ok(())
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
