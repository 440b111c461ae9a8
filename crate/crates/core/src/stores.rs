//! Immutable key-value stores backing the entity features.
//!
//! Every store is read from a tab-separated file with a mandatory header row.
//! Lines starting with `#` are comments; they are kept as metadata so a
//! snapshot can record, for example, its pageview window. Absent keys are
//! reported as `None`, never as zero.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{self, Error, Result};
use crate::text;

/// Row key carrying the corpus size in a frequency table.
pub const TOTAL_KEY: &str = "__TOTAL__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Triples,
    Pageviews,
    Frequency,
    Knowledgability,
}

impl StoreKind {
    pub const ALL: [StoreKind; 4] = [
        StoreKind::Triples,
        StoreKind::Pageviews,
        StoreKind::Frequency,
        StoreKind::Knowledgability,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StoreKind::Triples => "triples",
            StoreKind::Pageviews => "pageviews",
            StoreKind::Frequency => "frequency",
            StoreKind::Knowledgability => "knowledgability",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn header(&self) -> &'static [&'static str] {
        match self {
            StoreKind::Triples => &["kg_id", "subject_count", "object_count"],
            StoreKind::Pageviews => &["kg_id", "views"],
            StoreKind::Frequency => &["term", "count"],
            StoreKind::Knowledgability => &["kg_id", "score"],
        }
    }
}

impl fmt::Display for StoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Provenance of a loaded store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoreMeta {
    /// First 16 hex digits of the SHA-256 of the file bytes.
    pub snapshot: String,
    /// Comment lines without the leading `#`, trimmed.
    pub comments: Vec<String>,
    pub rows: usize,
    pub warnings: usize,
}

impl StoreMeta {
    fn new(bytes: &[u8], comments: Vec<String>, rows: usize, warnings: usize) -> Self {
        let digest = Sha256::digest(bytes);
        let snapshot = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Self {
            snapshot,
            comments,
            rows,
            warnings,
        }
    }

    /// The `window:` comment, if the snapshot declares one.
    pub fn window(&self) -> Option<&str> {
        self.comments
            .iter()
            .find_map(|c| c.strip_prefix("window:").map(str::trim))
    }
}

/// A parsed TSV body: data rows with their 1-based line numbers.
pub(crate) struct Table<'a> {
    pub rows: Vec<(usize, Vec<&'a str>)>,
    pub comments: Vec<String>,
}

/// Parses a TSV table whose first non-comment line must equal `header`.
/// With `optional_header`, a missing header is accepted and an empty input
/// yields an empty table.
pub(crate) fn parse_table<'a>(
    content: &'a str,
    header: &[&str],
    optional_header: bool,
) -> Result<Table<'a>> {
    let mut rows = Vec::new();
    let mut comments = Vec::new();
    let mut saw_header = false;
    for (i, raw) in content.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !saw_header && rows.is_empty() {
            saw_header = true;
            if fields == header {
                continue;
            }
            if !optional_header {
                return Err(Error::MissingHeader(format!(
                    "expected `{}` on line {line_no}",
                    header.join("\\t")
                )));
            }
        }
        if fields.len() != header.len() {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: format!("expected {} fields, got {}", header.len(), fields.len()),
            });
        }
        rows.push((line_no, fields));
    }
    if !saw_header && !optional_header {
        return Err(Error::MissingHeader(format!(
            "expected `{}`, found no rows",
            header.join("\\t")
        )));
    }
    Ok(Table { rows, comments })
}

fn count(field: &str, line: usize, name: &str) -> Result<u64> {
    field.trim().parse::<u64>().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("{name} `{field}` is not a non-negative integer"),
    })
}

fn key(field: &str, line: usize) -> Result<String> {
    let k = field.trim();
    if k.is_empty() {
        return Err(Error::MalformedRow {
            line,
            reason: "empty key".into(),
        });
    }
    Ok(k.to_string())
}

fn insert<V>(map: &mut HashMap<String, V>, k: String, v: V) -> Result<()> {
    if map.contains_key(&k) {
        return Err(Error::DuplicateKey(k));
    }
    map.insert(k, v);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleCountStore {
    map: HashMap<String, (u64, u64)>,
    pub meta: StoreMeta,
}

impl TripleCountStore {
    pub fn parse(content: &str) -> Result<Self> {
        let t = parse_table(content, StoreKind::Triples.header(), false)?;
        let mut map = HashMap::with_capacity(t.rows.len());
        for (line, f) in &t.rows {
            let v = (
                count(f[1], *line, "subject_count")?,
                count(f[2], *line, "object_count")?,
            );
            insert(&mut map, key(f[0], *line)?, v)?;
        }
        let meta = StoreMeta::new(content.as_bytes(), t.comments, map.len(), 0);
        Ok(Self { map, meta })
    }

    /// (subject_count, object_count)
    pub fn lookup(&self, kg_id: &str) -> Option<(u64, u64)> {
        self.map.get(kg_id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopularityStore {
    map: HashMap<String, u64>,
    pub meta: StoreMeta,
}

impl PopularityStore {
    pub fn parse(content: &str) -> Result<Self> {
        let t = parse_table(content, StoreKind::Pageviews.header(), false)?;
        let mut map = HashMap::with_capacity(t.rows.len());
        for (line, f) in &t.rows {
            insert(&mut map, key(f[0], *line)?, count(f[1], *line, "views")?)?;
        }
        let meta = StoreMeta::new(content.as_bytes(), t.comments, map.len(), 0);
        Ok(Self { map, meta })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, u64)>) -> Self {
        let map: HashMap<String, u64> = pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let meta = StoreMeta::new(&[], Vec::new(), map.len(), 0);
        Self { map, meta }
    }

    pub fn lookup(&self, kg_id: &str) -> Option<u64> {
        self.map.get(kg_id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Term frequencies over normalised terms, plus the corpus size.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyStore {
    map: HashMap<String, u64>,
    pub total_tokens: u64,
    pub meta: StoreMeta,
}

impl FrequencyStore {
    /// Terms are normalised on load; the `__TOTAL__` row is mandatory.
    pub fn parse(content: &str) -> Result<Self> {
        let t = parse_table(content, StoreKind::Frequency.header(), false)?;
        let mut map = HashMap::with_capacity(t.rows.len());
        let mut total = None;
        let mut max_count = (0, 0);
        for (line, f) in &t.rows {
            let c = count(f[1], *line, "count")?;
            if f[0].trim() == TOTAL_KEY {
                if total.is_some() {
                    return Err(Error::DuplicateKey(TOTAL_KEY.into()));
                }
                total = Some(c);
                continue;
            }
            let term = text::normalize(f[0]);
            if term.is_empty() {
                return Err(Error::MalformedRow {
                    line: *line,
                    reason: format!("term `{}` normalises to nothing", f[0]),
                });
            }
            if c > max_count.0 {
                max_count = (c, *line);
            }
            insert(&mut map, term, c)?;
        }
        let total = total.ok_or_else(|| {
            Error::MissingHeader(format!("frequency table has no `{TOTAL_KEY}` row"))
        })?;
        if total == 0 {
            return Err(Error::MissingHeader(format!("`{TOTAL_KEY}` must be positive")));
        }
        if max_count.0 > total {
            return Err(Error::MalformedRow {
                line: max_count.1,
                reason: format!("count {} exceeds total_tokens {total}", max_count.0),
            });
        }
        let meta = StoreMeta::new(content.as_bytes(), t.comments, map.len(), 0);
        Ok(Self {
            map,
            total_tokens: total,
            meta,
        })
    }

    /// Counts unigrams of a tokenised corpus, one document per line.
    pub fn from_corpus(corpus: &str) -> Self {
        let mut map: HashMap<String, u64> = HashMap::new();
        let mut total = 0;
        for line in corpus.lines() {
            for w in text::words(line) {
                *map.entry(w).or_insert(0) += 1;
                total += 1;
            }
        }
        let meta = StoreMeta::new(corpus.as_bytes(), Vec::new(), map.len(), 0);
        Self {
            map,
            total_tokens: total.max(1),
            meta,
        }
    }

    /// Frequency of a term; the query is normalised first.
    pub fn lookup(&self, term: &str) -> Option<u64> {
        self.map.get(&text::normalize(term)).copied()
    }

    /// Lookup of an already-normalised term.
    pub fn lookup_normalized(&self, term: &str) -> Option<u64> {
        self.map.get(term).copied()
    }

    /// TSV in the format read by [`FrequencyStore::parse`], sorted by term.
    pub fn to_tsv(&self) -> String {
        let mut terms: Vec<(&String, &u64)> = self.map.iter().collect();
        terms.sort();
        let mut out = String::from("term\tcount\n");
        out.push_str(&format!("{TOTAL_KEY}\t{}\n", self.total_tokens));
        for (t, c) in terms {
            out.push_str(&format!("{t}\t{c}\n"));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Precomputed knowledgability scores in [0, 100].
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgabilityStore {
    map: HashMap<String, f64>,
    pub meta: StoreMeta,
}

impl KnowledgabilityStore {
    /// Scores outside [0, 100] are clamped and counted in `meta.warnings`.
    pub fn parse(content: &str) -> Result<Self> {
        let t = parse_table(content, StoreKind::Knowledgability.header(), false)?;
        let mut map = HashMap::with_capacity(t.rows.len());
        let mut warnings = 0;
        for (line, f) in &t.rows {
            let s: f64 = f[1].trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::MalformedRow {
                    line: *line,
                    reason: format!("score `{}` is not a finite number", f[1]),
                }
            })?;
            let clamped = s.clamp(0.0, 100.0);
            if clamped != s {
                warnings += 1;
            }
            insert(&mut map, key(f[0], *line)?, clamped)?;
        }
        let meta = StoreMeta::new(content.as_bytes(), t.comments, map.len(), warnings);
        Ok(Self { map, meta })
    }

    pub fn lookup(&self, kg_id: &str) -> Option<f64> {
        self.map.get(kg_id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Store {
    Triples(TripleCountStore),
    Pageviews(PopularityStore),
    Frequency(FrequencyStore),
    Knowledgability(KnowledgabilityStore),
}

impl Store {
    pub fn meta(&self) -> &StoreMeta {
        match self {
            Store::Triples(s) => &s.meta,
            Store::Pageviews(s) => &s.meta,
            Store::Frequency(s) => &s.meta,
            Store::Knowledgability(s) => &s.meta,
        }
    }
}

pub fn parse_store(kind: StoreKind, content: &str) -> Result<Store> {
    Ok(match kind {
        StoreKind::Triples => Store::Triples(TripleCountStore::parse(content)?),
        StoreKind::Pageviews => Store::Pageviews(PopularityStore::parse(content)?),
        StoreKind::Frequency => Store::Frequency(FrequencyStore::parse(content)?),
        StoreKind::Knowledgability => Store::Knowledgability(KnowledgabilityStore::parse(content)?),
    })
}

pub fn load_store(kind: StoreKind, path: &Path) -> Result<Store> {
    parse_store(kind, &error::read_to_string(path)?)
}

/// The stores available to feature extraction; any may be absent.
#[derive(Debug, Clone, Default)]
pub struct Stores {
    pub triples: Option<TripleCountStore>,
    pub pageviews: Option<PopularityStore>,
    pub frequency: Option<FrequencyStore>,
    pub knowledgability: Option<KnowledgabilityStore>,
}

impl Stores {
    pub fn insert(&mut self, store: Store) {
        match store {
            Store::Triples(s) => self.triples = Some(s),
            Store::Pageviews(s) => self.pageviews = Some(s),
            Store::Frequency(s) => self.frequency = Some(s),
            Store::Knowledgability(s) => self.knowledgability = Some(s),
        }
    }

    /// `(kind, meta)` for every loaded store, in kind order.
    pub fn metas(&self) -> Vec<(StoreKind, &StoreMeta)> {
        let mut out = Vec::new();
        if let Some(s) = &self.triples {
            out.push((StoreKind::Triples, &s.meta));
        }
        if let Some(s) = &self.pageviews {
            out.push((StoreKind::Pageviews, &s.meta));
        }
        if let Some(s) = &self.frequency {
            out.push((StoreKind::Frequency, &s.meta));
        }
        if let Some(s) = &self.knowledgability {
            out.push((StoreKind::Knowledgability, &s.meta));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triples_single_row() {
        let s = TripleCountStore::parse("kg_id\tsubject_count\tobject_count\nQ1\t5\t2\n").unwrap();
        assert_eq!(s.lookup("Q1"), Some((5, 2)));
        assert_eq!(s.lookup("Q2"), None);
    }

    #[test]
    fn zero_is_not_absent() {
        let s = PopularityStore::parse("kg_id\tviews\nQ0\t0\n").unwrap();
        assert_eq!(s.lookup("Q0"), Some(0));
        assert_eq!(s.lookup("Q_missing"), None);
    }

    #[test]
    fn knowledgability_clamps() {
        let s = KnowledgabilityStore::parse("kg_id\tscore\nQ1\t150\nQ2\t-3\nQ3\t40\n").unwrap();
        assert_eq!(s.lookup("Q1"), Some(100.0));
        assert_eq!(s.lookup("Q2"), Some(0.0));
        assert_eq!(s.lookup("Q3"), Some(40.0));
        assert_eq!(s.meta.warnings, 2);
    }

    #[test]
    fn header_and_comments() {
        let body = "# window: 2023-01-01..2023-12-31\nkg_id\tviews\n# mid comment\nQ1\t10\n";
        let s = PopularityStore::parse(body).unwrap();
        assert_eq!(s.meta.window(), Some("2023-01-01..2023-12-31"));
        assert_eq!(s.meta.comments.len(), 2);
        assert!(matches!(PopularityStore::parse("Q1\t10\n"), Err(Error::MissingHeader(_))));
        assert!(matches!(PopularityStore::parse(""), Err(Error::MissingHeader(_))));
    }

    #[test]
    fn row_errors() {
        let h = "kg_id\tviews\n";
        assert!(matches!(
            PopularityStore::parse(&format!("{h}Q1\t10\nQ1\t11\n")),
            Err(Error::DuplicateKey(k)) if k == "Q1"
        ));
        assert!(matches!(
            PopularityStore::parse(&format!("{h}Q1\t-1\n")),
            Err(Error::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(
            PopularityStore::parse(&format!("{h}Q1\n")),
            Err(Error::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn frequency_total_row() {
        let s = FrequencyStore::parse("term\tcount\n__TOTAL__\t100\nParis\t7\n").unwrap();
        assert_eq!(s.total_tokens, 100);
        assert_eq!(s.lookup("paris"), Some(7));
        assert_eq!(s.lookup("PARIS"), Some(7));
        assert!(matches!(
            FrequencyStore::parse("term\tcount\nparis\t7\n"),
            Err(Error::MissingHeader(_))
        ));
        assert!(matches!(
            FrequencyStore::parse("term\tcount\n__TOTAL__\t5\nparis\t7\n"),
            Err(Error::MalformedRow { line: 3, .. })
        ));
    }

    #[test]
    fn corpus_counts() {
        let s = FrequencyStore::from_corpus("Paris is big\nI like paris.\nRome");
        assert_eq!(s.lookup("paris"), Some(2));
        assert_eq!(s.total_tokens, 7);
        let back = FrequencyStore::parse(&s.to_tsv()).unwrap();
        assert_eq!(back.lookup("paris"), Some(2));
        assert_eq!(back.total_tokens, 7);
    }

    #[test]
    fn snapshot_is_content_hash() {
        let a = PopularityStore::parse("kg_id\tviews\nQ1\t10\n").unwrap();
        let b = PopularityStore::parse("kg_id\tviews\nQ1\t10\n").unwrap();
        let c = PopularityStore::parse("kg_id\tviews\nQ1\t11\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.meta.snapshot.len(), 16);
        assert_ne!(a.meta.snapshot, c.meta.snapshot);
    }
}
