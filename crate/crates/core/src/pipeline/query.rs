//! Catalog search strings for the Copernicus hub's product API.
//!
//! Queries are only built, never sent. A recorded fixture manifest can
//! stand in for the service so the `query` command stays offline.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::config::QuerySection;
use crate::error::{Error, Result};
use crate::geo::{parse_wkt, WktGeometry};

pub const PRODUCTS_URL: &str = "https://scihub.copernicus.eu/dhus/api/stub/products";

const DATE_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.3fZ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    Asc,
    #[default]
    Desc,
}

impl SortOrder {
    fn as_str(self) -> &'static str {
        match self {
            SortOrder::Asc => "asc",
            SortOrder::Desc => "desc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogQuery {
    /// Sensing window applied to both begin and end position.
    pub sensing: Option<(NaiveDateTime, NaiveDateTime)>,
    pub platform: Option<String>,
    pub filename: Option<String>,
    pub product_type: Option<String>,
    pub instrument: Option<String>,
    pub footprint: Option<WktGeometry>,
    pub offset: usize,
    pub limit: usize,
    pub sort: Option<(String, SortOrder)>,
}

impl Default for CatalogQuery {
    fn default() -> Self {
        Self {
            sensing: None,
            platform: None,
            filename: None,
            product_type: None,
            instrument: None,
            footprint: None,
            offset: 0,
            limit: 25,
            sort: None,
        }
    }
}

/// `YYYY-MM-DD` or a full `YYYY-MM-DDTHH:MM:SS[.fff]Z` timestamp. Bare
/// dates take the first millisecond of the day, or the last when `end`.
pub fn parse_timestamp(text: &str, end: bool) -> Result<NaiveDateTime> {
    let t = text.trim();
    if let Ok(d) = NaiveDate::parse_from_str(t, "%Y-%m-%d") {
        let time = if end { d.and_hms_milli_opt(23, 59, 59, 999) } else { d.and_hms_opt(0, 0, 0) };
        return time.ok_or_else(|| Error::param(format!("invalid date `{t}`")));
    }
    NaiveDateTime::parse_from_str(t.trim_end_matches('Z'), "%Y-%m-%dT%H:%M:%S%.f")
        .map_err(|e| Error::param(format!("invalid timestamp `{t}`: {e}")))
}

fn check_term(field: &str, value: &Option<String>) -> Result<()> {
    match value {
        Some(v) if v.is_empty() || v.contains(|c: char| c.is_whitespace() || "():[]&?".contains(c)) => {
            Err(Error::param(format!("{field} `{v}` must be a single term without brackets or separators")))
        }
        _ => Ok(()),
    }
}

fn format_coord(x: f64, y: f64) -> String {
    format!("{x} {y}")
}

impl CatalogQuery {
    pub fn validate(&self) -> Result<()> {
        if let Some((b, e)) = self.sensing {
            if b > e {
                return Err(Error::param(format!("begin {b} is after end {e}")));
            }
        }
        if self.limit < 1 {
            return Err(Error::param("limit must be at least 1"));
        }
        check_term("platform", &self.platform)?;
        check_term("filename", &self.filename)?;
        check_term("product type", &self.product_type)?;
        check_term("instrument", &self.instrument)?;
        if let Some((key, _)) = &self.sort {
            check_term("sort key", &Some(key.clone()))?;
        }
        if let Some(g) = &self.footprint {
            if g.rings.is_empty() || g.rings.iter().any(|r| r.len() < 4) {
                return Err(Error::param("footprint rings need at least 4 vertices"));
            }
            if g.rings.iter().flatten().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
                return Err(Error::param("footprint coordinates must be finite"));
            }
        }
        Ok(())
    }

    pub fn from_section(q: &QuerySection) -> Result<Self> {
        fn at(field: &'static str) -> impl Fn(Error) -> Error {
            move |e| Error::config(format!("query.{field}"), e.to_string())
        }
        let sensing = match (&q.begin, &q.end) {
            (None, None) => None,
            (Some(b), Some(e)) => Some((
                parse_timestamp(b, false).map_err(at("begin"))?,
                parse_timestamp(e, true).map_err(at("end"))?,
            )),
            _ => return Err(Error::config("query", "begin and end must be given together")),
        };
        let footprint = q
            .footprint
            .as_deref()
            .map(parse_wkt)
            .transpose()
            .map_err(at("footprint"))?;
        let query = Self {
            sensing,
            platform: q.platform.clone(),
            filename: q.filename.clone(),
            product_type: q.product_type.clone(),
            instrument: q.instrument.clone(),
            footprint,
            offset: q.offset,
            limit: q.limit,
            sort: q.sort.as_ref().map(|s| (s.key.clone(), s.order)),
        };
        query.validate().map_err(at("<fields>"))?;
        Ok(query)
    }

    /// The filter expression, or `None` when no field is set.
    fn filter(&self) -> Option<String> {
        let mut groups = Vec::new();
        if let Some((b, e)) = self.sensing {
            let range = format!("[{} TO {}]", b.format(DATE_FORMAT), e.format(DATE_FORMAT));
            groups.push(format!("(beginPosition:{range} AND endPosition:{range})"));
        }
        let terms: Vec<String> = [
            ("platformname", &self.platform),
            ("filename", &self.filename),
            ("producttype", &self.product_type),
            ("instrumentshortname", &self.instrument),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| format!("{k}:{v}")))
        .collect();
        if !terms.is_empty() {
            groups.push(format!("(({}))", terms.join(" AND ")));
        }
        if let Some(g) = &self.footprint {
            let rings: Vec<String> = g
                .rings
                .iter()
                .map(|r| r.iter().map(|&(x, y)| format_coord(x, y)).collect::<Vec<_>>().join(", "))
                .collect();
            groups.push(format!("footprint: Intersects (POLYGON(({})))", rings.join("), (")));
        }
        (!groups.is_empty()).then(|| groups.join(" AND "))
    }
}

/// Request URL text for `q`. Whitespace inside the filter is single spaces,
/// so the result is a single line; see [`normalize_whitespace`].
pub fn build_catalog_query(q: &CatalogQuery) -> Result<String> {
    q.validate()?;
    let mut url = String::from(PRODUCTS_URL);
    match q.filter() {
        Some(f) => write!(url, "?filter={f}&offset={}&limit={}", q.offset, q.limit),
        None => write!(url, "?offset={}&limit={}", q.offset, q.limit),
    }
    .expect("writing to a String");
    if let Some((key, order)) = &q.sort {
        write!(url, "&sortedby={key}&order={}", order.as_str()).expect("writing to a String");
    }
    Ok(url)
}

/// Collapses whitespace runs to one space and drops whitespace after `(`
/// and before `)`, `?` or `&`. Applied to a multi-line rendering of a
/// query, this yields the single-line form [`build_catalog_query`] emits.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending = false;
    for ch in text.trim().chars() {
        if ch.is_whitespace() {
            pending = true;
            continue;
        }
        if pending && !out.ends_with('(') && !matches!(ch, ')' | '?' | '&') {
            out.push(' ');
        }
        pending = false;
        out.push(ch);
    }
    out
}

/// Splits query text into punctuation and word tokens, ignoring whitespace.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() || "()[]?&=,".contains(ch) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        } else {
            word.push(ch);
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub query: String,
    pub products: Vec<serde_json::Value>,
}

/// Recorded catalog answers keyed by query text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureManifest {
    pub entries: Vec<FixtureEntry>,
}

impl FixtureManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read(path)
            .map_err(|e| Error::data(format!("cannot read fixture {}: {e}", path.display())))?;
        serde_json::from_slice(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }

    /// Products recorded for `url`, matched after whitespace normalization.
    pub fn replay(&self, url: &str) -> Result<&[serde_json::Value]> {
        let want = normalize_whitespace(url);
        self.entries
            .iter()
            .find(|e| normalize_whitespace(&e.query) == want)
            .map(|e| e.products.as_slice())
            .ok_or_else(|| Error::data(format!("no recorded response for {url}")))
    }
}
