//! The analytics DSL: a table plus measures, dimensions and filters.
//!
//! The JSON shape is fixed so that specs can be compared component by
//! component:
//!
//! ```json
//! {
//!   "table": "t_sales",
//!   "measures": [{"field": "sales", "agg": "SUM"}],
//!   "dimensions": ["region"],
//!   "filters": [
//!     {"field": "company", "op": "EQ", "value": "Huawei", "stage": "PRE_AGG"},
//!     {"field": "year", "op": "BETWEEN", "value": [23, 25], "stage": "PRE_AGG"}
//!   ]
//! }
//! ```

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An incoming natural-language request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("query text is empty".into()));
        }
        Ok(Query {
            id: id.into(),
            text,
            timestamp: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Aggregation {
    Sum,
    Count,
    Avg,
    Min,
    Max,
    CountDistinct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FilterOp {
    Eq,
    Neq,
    Contains,
    Gt,
    Gte,
    Lt,
    Lte,
    In,
    Between,
}

impl FilterOp {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterOp::Eq => "EQ",
            FilterOp::Neq => "NEQ",
            FilterOp::Contains => "CONTAINS",
            FilterOp::Gt => "GT",
            FilterOp::Gte => "GTE",
            FilterOp::Lt => "LT",
            FilterOp::Lte => "LTE",
            FilterOp::In => "IN",
            FilterOp::Between => "BETWEEN",
        }
    }
}

/// Whether a filter applies before (`WHERE`) or after (`HAVING`) aggregation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    #[default]
    PreAgg,
    PostAgg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    /// Parses numeric-looking text as a number.
    pub fn infer(raw: &str) -> Scalar {
        match raw.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Scalar::Number(x),
            _ => Scalar::Text(raw.to_string()),
        }
    }

    pub fn is_text(&self) -> bool {
        matches!(self, Scalar::Text(_))
    }

    /// Numbers compare numerically, strings case-folded; numeric strings
    /// compare equal to the number they spell.
    pub fn canonical(&self) -> String {
        match self {
            Scalar::Number(x) => canonical_number(*x),
            Scalar::Text(s) => {
                let folded = s.trim().to_lowercase();
                match folded.parse::<f64>() {
                    Ok(x) if x.is_finite() => canonical_number(x),
                    _ => format!("s:{folded}"),
                }
            }
        }
    }

    fn partial_order(&self, other: &Scalar) -> Option<Ordering> {
        match (self, other) {
            (Scalar::Number(a), Scalar::Number(b)) => a.partial_cmp(b),
            (Scalar::Text(a), Scalar::Text(b)) => Some(a.to_lowercase().cmp(&b.to_lowercase())),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Number(x) => write!(f, "{x}"),
            Scalar::Text(s) => f.write_str(s),
        }
    }
}

fn canonical_number(x: f64) -> String {
    // -0 and 0 are the same value
    format!("n:{}", x + 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterValue {
    List(Vec<Scalar>),
    Single(Scalar),
}

impl FilterValue {
    pub fn text(s: impl Into<String>) -> Self {
        FilterValue::Single(Scalar::Text(s.into()))
    }

    pub fn number(x: f64) -> Self {
        FilterValue::Single(Scalar::Number(x))
    }

    pub fn scalars(&self) -> &[Scalar] {
        match self {
            FilterValue::List(v) => v,
            FilterValue::Single(s) => std::slice::from_ref(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub field: String,
    pub agg: Aggregation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias: Option<String>,
}

impl Measure {
    pub fn new(field: impl Into<String>, agg: Aggregation) -> Self {
        Measure {
            field: field.into(),
            agg,
            alias: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub field: String,
    pub op: FilterOp,
    pub value: FilterValue,
    #[serde(default)]
    pub stage: Stage,
}

impl Filter {
    pub fn new(field: impl Into<String>, op: FilterOp, value: FilterValue) -> Self {
        Filter {
            field: field.into(),
            op,
            value,
            stage: Stage::PreAgg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.field.trim().is_empty() {
            return Err(Error::InvalidDsl("filter field is empty".into()));
        }
        match (self.op, &self.value) {
            (FilterOp::Between, FilterValue::List(v)) => {
                if v.len() != 2 {
                    return Err(Error::InvalidDsl(format!(
                        "BETWEEN on `{}` needs exactly two values, got {}",
                        self.field,
                        v.len()
                    )));
                }
                match v[0].partial_order(&v[1]) {
                    Some(Ordering::Less | Ordering::Equal) => Ok(()),
                    _ => Err(Error::InvalidDsl(format!(
                        "BETWEEN on `{}` needs two ordered values",
                        self.field
                    ))),
                }
            }
            (FilterOp::Between, FilterValue::Single(_)) => Err(Error::InvalidDsl(format!(
                "BETWEEN on `{}` needs a two-element list",
                self.field
            ))),
            (FilterOp::In, FilterValue::List(v)) if v.is_empty() => Err(Error::InvalidDsl(format!(
                "IN on `{}` needs a non-empty list",
                self.field
            ))),
            (FilterOp::In, _) => Ok(()),
            (op, FilterValue::List(_)) => Err(Error::InvalidDsl(format!(
                "{} on `{}` takes a single value",
                op.as_str(),
                self.field
            ))),
            _ => Ok(()),
        }
    }

    /// Identity used for equality: (field, op, canonical value, stage).
    fn canonical_key(&self) -> (String, FilterOp, Vec<String>, Stage) {
        let mut values: Vec<String> = self.value.scalars().iter().map(Scalar::canonical).collect();
        if self.op == FilterOp::In {
            values.sort();
        }
        (self.field.trim().to_lowercase(), self.op, values, self.stage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DslSpec {
    pub table: String,
    #[serde(default)]
    pub measures: Vec<Measure>,
    #[serde(default)]
    pub dimensions: Vec<String>,
    #[serde(default)]
    pub filters: Vec<Filter>,
}

impl DslSpec {
    pub fn new(table: impl Into<String>) -> Self {
        DslSpec {
            table: table.into(),
            measures: Vec::new(),
            dimensions: Vec::new(),
            filters: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.table.trim().is_empty() {
            return Err(Error::InvalidDsl("table is empty".into()));
        }
        let mut seen = HashSet::new();
        for d in &self.dimensions {
            if d.trim().is_empty() {
                return Err(Error::InvalidDsl("dimension name is empty".into()));
            }
            if !seen.insert(d.trim().to_lowercase()) {
                return Err(Error::InvalidDsl(format!("duplicate dimension `{d}`")));
            }
        }
        for m in &self.measures {
            if m.field.trim().is_empty() {
                return Err(Error::InvalidDsl("measure field is empty".into()));
            }
        }
        self.filters.iter().try_for_each(Filter::validate)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: DslSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Component-level agreement between two DSL specs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentMatch {
    pub tb: bool,
    pub dm: bool,
    pub ms: bool,
    pub ft: bool,
}

impl ComponentMatch {
    pub fn all(&self) -> bool {
        self.tb && self.dm && self.ms && self.ft
    }
}

/// Order-insensitive component comparison. Aliases on measures are ignored.
pub fn dsl_equal(a: &DslSpec, b: &DslSpec) -> ComponentMatch {
    fn sorted<T: Ord>(mut v: Vec<T>) -> Vec<T> {
        v.sort();
        v
    }
    let dims = |s: &DslSpec| sorted(s.dimensions.iter().map(|d| d.trim().to_lowercase()).collect());
    let measures = |s: &DslSpec| {
        sorted(
            s.measures
                .iter()
                .map(|m| (m.field.trim().to_lowercase(), m.agg))
                .collect(),
        )
    };
    let filters = |s: &DslSpec| sorted(s.filters.iter().map(Filter::canonical_key).collect());

    ComponentMatch {
        tb: a.table.trim().to_lowercase() == b.table.trim().to_lowercase(),
        dm: dims(a) == dims(b),
        ms: measures(a) == measures(b),
        ft: filters(a) == filters(b),
    }
}
