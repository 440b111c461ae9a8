//! Dictionary entity linker: greedy longest match of normalised alias
//! token sequences, left to right.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{self, Error, Result};
use crate::record::EntityMention;
use crate::stores::{parse_table, PopularityStore};
use crate::text;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gazetteer {
    aliases: HashMap<String, String>,
    pub max_alias_tokens: usize,
}

impl Gazetteer {
    /// Builds from `alias<TAB>kg_id` rows. The header row is optional and an
    /// empty input gives an empty gazetteer. A repeated alias resolves to
    /// the id with more pageviews when `popularity` is given (absent ids
    /// count as 0; equal views keep the earlier row), otherwise to the
    /// first occurrence.
    pub fn parse(content: &str, popularity: Option<&PopularityStore>) -> Result<Self> {
        let table = parse_table(content, &["alias", "kg_id"], true)?;
        let mut aliases: HashMap<String, String> = HashMap::new();
        let mut max_alias_tokens = 0;
        for (line, f) in table.rows {
            let alias = text::normalize(f[0]);
            let id = f[1].trim();
            if alias.is_empty() || id.is_empty() {
                return Err(Error::MalformedRow {
                    line,
                    reason: "empty alias or kg_id".into(),
                });
            }
            max_alias_tokens = max_alias_tokens.max(alias.split(' ').count());
            match aliases.get_mut(&alias) {
                None => {
                    aliases.insert(alias, id.to_string());
                }
                Some(current) => {
                    if let Some(pop) = popularity {
                        let views = |k: &str| pop.lookup(k).unwrap_or(0);
                        if views(id) > views(current) {
                            *current = id.to_string();
                        }
                    }
                }
            }
        }
        Ok(Self {
            aliases,
            max_alias_tokens,
        })
    }

    pub fn load(path: &Path, popularity: Option<&PopularityStore>) -> Result<Self> {
        Self::parse(&error::read_to_string(path)?, popularity)
    }

    pub fn get(&self, normalized_alias: &str) -> Option<&str> {
        self.aliases.get(normalized_alias).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.aliases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aliases.is_empty()
    }

    /// Greedy longest match. At each token position the longest alias that
    /// matches wins and scanning resumes after it.
    pub fn link(&self, question: &str) -> Vec<EntityMention> {
        let toks = text::tokens(question);
        let mut out = Vec::new();
        let mut last_end = 0;
        let mut i = 0;
        while i < toks.len() {
            let longest = self.max_alias_tokens.min(toks.len() - i);
            let mut matched = 0;
            for len in (1..=longest).rev() {
                let (start, end) = (toks[i].start, toks[i + len - 1].end);
                if start < last_end {
                    break;
                }
                let key: Vec<&str> = toks[i..i + len].iter().map(|t| t.text.as_str()).collect();
                let key = key.join(" ");
                let Some(id) = self.aliases.get(&key) else { continue };
                // One source character can fold into several tokens; a
                // span must round-trip to the alias it matched.
                let surface = &question[start..end];
                if text::normalize(surface) != key {
                    continue;
                }
                out.push(EntityMention {
                    surface: surface.to_string(),
                    kg_id: id.clone(),
                    char_span: Some((start, end)),
                });
                last_end = end;
                matched = len;
                break;
            }
            i += matched.max(1);
        }
        out
    }
}

/// Pre-linked entities keyed by question id, read from a
/// `question_id<TAB>kg_id[<TAB>surface]` file. Rows keep file order per
/// question. Mentions from this file carry no span.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sidecar {
    pub mentions: BTreeMap<String, Vec<EntityMention>>,
}

impl Sidecar {
    pub fn parse(content: &str) -> Result<Self> {
        let mut mentions: BTreeMap<String, Vec<EntityMention>> = BTreeMap::new();
        let mut first = true;
        for (i, raw) in content.lines().enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if std::mem::take(&mut first) && f.len() >= 2 && f[0] == "question_id" && f[1] == "kg_id" {
                continue;
            }
            if !(2..=3).contains(&f.len()) || f[0].trim().is_empty() || f[1].trim().is_empty() {
                return Err(Error::MalformedRow {
                    line: i + 1,
                    reason: "expected question_id, kg_id and an optional surface".into(),
                });
            }
            mentions.entry(f[0].trim().to_string()).or_default().push(EntityMention {
                surface: f.get(2).map(|s| s.trim().to_string()).unwrap_or_default(),
                kg_id: f[1].trim().to_string(),
                char_span: None,
            });
        }
        Ok(Self { mentions })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&error::read_to_string(path)?)
    }

    pub fn get(&self, question_id: &str) -> Option<&[EntityMention]> {
        self.mentions.get(question_id).map(Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn popularity_tie_rule() {
        let pop = PopularityStore::from_pairs([("Q90", 1_000_000), ("Q167646", 1_000)]);
        let rows = "alias\tkg_id\nparis\tQ167646\nParis\tQ90\n";
        assert_eq!(Gazetteer::parse(rows, Some(&pop)).unwrap().get("paris"), Some("Q90"));
        assert_eq!(Gazetteer::parse(rows, None).unwrap().get("paris"), Some("Q167646"));
    }

    #[test]
    fn empty_file() {
        let g = Gazetteer::parse("", None).unwrap();
        assert!(g.is_empty());
        assert!(g.link("hello world").is_empty());
    }

    #[test]
    fn longest_match_wins() {
        let g = Gazetteer::parse("new york\tQ60\nnew york city\tQ60C\n", None).unwrap();
        assert_eq!(g.max_alias_tokens, 3);
        let m = g.link("Who rules New York City?");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].kg_id, "Q60C");
        assert_eq!(m[0].surface, "New York City");
        assert_eq!(m[0].char_span, Some((10, 23)));
    }

    #[test]
    fn repeated_alias() {
        let g = Gazetteer::parse("paris\tQ90\n", None).unwrap();
        let m = g.link("paris paris");
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].char_span, Some((0, 5)));
        assert_eq!(m[1].char_span, Some((6, 11)));
    }

    #[test]
    fn sidecar_rows() {
        let s = Sidecar::parse("question_id\tkg_id\tsurface\nq1\tQ90\tParis\nq1\tQ64\nq2\tQ1\tx\n").unwrap();
        assert_eq!(s.get("q1").unwrap().len(), 2);
        assert_eq!(s.get("q1").unwrap()[1].surface, "");
        assert!(s.get("q3").is_none());
        assert!(matches!(Sidecar::parse("q1\n"), Err(Error::MalformedRow { line: 1, .. })));
    }
}
